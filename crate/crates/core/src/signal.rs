//! Sampled signals, noise generation, and challenge modulation.

use crate::error::{ensure_all_finite, ensure_finite, Error, Result};
use crate::rng::RngStream;
use crate::schedule::ChallengeSchedule;

/// A uniformly sampled real-valued signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTrace {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    /// Time of the first sample, in seconds.
    pub t0: f64,
}

impl SignalTrace {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64, t0: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
            return Err(Error::Parameter(format!("sample_rate_hz = {sample_rate_hz} must be > 0")));
        }
        ensure_finite("t0", t0)?;
        ensure_all_finite("samples", &samples)?;
        Ok(Self { samples, sample_rate_hz, t0 })
    }

    pub fn zeros(n: usize, sample_rate_hz: f64) -> Result<Self> {
        Self::new(vec![0.0; n], sample_rate_hz, 0.0)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample period in seconds.
    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    pub fn time_at(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.sample_rate_hz
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }

    /// Root mean square of the samples; 0 for an empty trace.
    pub fn rms(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.len() as f64).sqrt()
    }
}

/// `n` samples of white Gaussian noise with standard deviation `sigma`.
///
/// `sigma = 0` yields exact zeros. Negative `sigma` is a parameter error.
pub fn gen_awgn(rng: &mut RngStream, n: usize, sigma: f64, sample_rate_hz: f64) -> Result<SignalTrace> {
    ensure_finite("sigma", sigma)?;
    if sigma < 0.0 {
        return Err(Error::Parameter(format!("sigma = {sigma} must be >= 0")));
    }
    let samples = (0..n).map(|_| rng.normal(0.0, sigma)).collect();
    SignalTrace::new(samples, sample_rate_hz, 0.0)
}

/// Modulate a carrier by the schedule's on/off envelope and amplitude:
/// output(i) = u(i) * amplitude(i) * carrier(i).
///
/// Silent segments produce exact zeros regardless of the carrier. The
/// schedule must cover the whole carrier.
pub fn modulate(schedule: &ChallengeSchedule, carrier: &SignalTrace) -> Result<SignalTrace> {
    if schedule.total_samples() < carrier.len() {
        return Err(Error::Dimension(format!(
            "schedule covers {} samples but carrier has {}",
            schedule.total_samples(),
            carrier.len()
        )));
    }
    let samples = carrier
        .samples
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (phase, amplitude) = schedule.at(i);
            if phase.is_actuated() {
                amplitude * c
            } else {
                0.0
            }
        })
        .collect();
    SignalTrace::new(samples, carrier.sample_rate_hz, carrier.t0)
}
