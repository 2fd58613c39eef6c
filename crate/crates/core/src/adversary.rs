//! Attacker models with physically motivated reaction lag.
//!
//! An active attacker injects energy into the sensing channel, but its
//! decision to start or stop injecting cannot track the actuator
//! instantaneously: it must first detect the switch and then slew its
//! transmitter. Both effects are folded into a first-order lag on the
//! attacker's on/off gating envelope,
//!
//!   env <- phi * env + (1 - phi) * belief,   phi = exp(-dt / tau_attack),
//!
//! applied to the gate rather than to the emitted waveform itself, so a
//! capable attacker can still phase-align or cancel the carrier; what it
//! cannot do is vanish or materialise faster than tau_attack allows. The
//! belief comes from either an oracle with a fixed pipeline delay or an
//! online Shiryaev change-point detector watching a noisy tap of the
//! actuation channel.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::qcd::{shiryaev_update, QcdProblem};
use crate::rng::RngStream;
use crate::signal::SignalTrace;

/// What the attacker transmits while its gate is open.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackWaveform {
    /// Pure tone. freq_hz = 0 with phase pi/2 gives a constant 1, handy
    /// for step-response tests.
    FixedSine { freq_hz: f64, phase_rad: f64 },
    /// Linear chirp from f_start to f_end over duration_s, then holding
    /// f_end with continuous phase.
    SweptSine { f_start_hz: f64, f_end_hz: f64, duration_s: f64 },
}

impl AttackWaveform {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AttackWaveform::FixedSine { freq_hz, phase_rad } => {
                if !(freq_hz >= 0.0) || !freq_hz.is_finite() {
                    return Err(Error::Parameter(format!("fixed sine freq_hz = {freq_hz} must be >= 0")));
                }
                if !phase_rad.is_finite() {
                    return Err(Error::Parameter("fixed sine phase must be finite".into()));
                }
            }
            AttackWaveform::SweptSine { f_start_hz, f_end_hz, duration_s } => {
                if !(f_start_hz >= 0.0 && f_end_hz >= 0.0) {
                    return Err(Error::Parameter("sweep frequencies must be >= 0".into()));
                }
                if !(duration_s > 0.0) || !duration_s.is_finite() {
                    return Err(Error::Parameter(format!("sweep duration_s = {duration_s} must be > 0")));
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            AttackWaveform::FixedSine { freq_hz, phase_rad } => (TAU * freq_hz * t + phase_rad).sin(),
            AttackWaveform::SweptSine { f_start_hz, f_end_hz, duration_s } => {
                let phase = if t <= duration_s {
                    TAU * (f_start_hz * t + (f_end_hz - f_start_hz) * t * t / (2.0 * duration_s))
                } else {
                    let end = TAU * (f_start_hz * duration_s + (f_end_hz - f_start_hz) * duration_s / 2.0);
                    end + TAU * f_end_hz * (t - duration_s)
                };
                phase.sin()
            }
        }
    }

    /// Instantaneous frequency at time t.
    pub fn instantaneous_freq_hz(&self, t: f64) -> f64 {
        match *self {
            AttackWaveform::FixedSine { freq_hz, .. } => freq_hz,
            AttackWaveform::SweptSine { f_start_hz, f_end_hz, duration_s } => {
                if t <= duration_s {
                    f_start_hz + (f_end_hz - f_start_hz) * (t / duration_s)
                } else {
                    f_end_hz
                }
            }
        }
    }
}

/// How the attacker decides whether the actuator is currently on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChallengeDetector {
    /// Perfect knowledge of the actuation state, delayed by a fixed number
    /// of samples (processing pipeline latency).
    Oracle { delay_samples: usize },
    /// Shiryaev change-point detector on a noisy tap of the actuation
    /// channel. `assumed_on_amplitude` is the on-level the attacker tunes
    /// for; an attacker that knows the protocol sets it to the resumption
    /// amplitude. Stops at posterior >= 1 - alpha, which bounds the
    /// per-watch false-alarm probability by alpha.
    Qcd { alpha: f64, rho: f64, sigma_obs: f64, assumed_on_amplitude: f64 },
}

impl ChallengeDetector {
    pub fn validate(&self) -> Result<()> {
        if let ChallengeDetector::Qcd { alpha, rho, sigma_obs, assumed_on_amplitude } = *self {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::Parameter(format!("detector alpha = {alpha} outside (0, 1)")));
            }
            if !(rho > 0.0 && rho < 1.0) {
                return Err(Error::Parameter(format!("detector rho = {rho} outside (0, 1)")));
            }
            if !(sigma_obs > 0.0) || !sigma_obs.is_finite() {
                return Err(Error::Parameter(format!("detector sigma_obs = {sigma_obs} must be > 0")));
            }
            if !(assumed_on_amplitude > 0.0) || !assumed_on_amplitude.is_finite() {
                return Err(Error::Parameter(format!(
                    "detector assumed_on_amplitude = {assumed_on_amplitude} must be > 0"
                )));
            }
        }
        Ok(())
    }
}

/// Injection strategy once the gate is open.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackerKind {
    /// Add the spoof waveform on top of whatever the sensor already sees.
    BlindInjection,
    /// Subtract cancel_gain times the sensed physical response, then add
    /// the spoof waveform; cancel_gain = 1 nulls the true signal.
    Cancellation { cancel_gain: f64 },
}

impl AttackerKind {
    pub fn validate(&self) -> Result<()> {
        if let AttackerKind::Cancellation { cancel_gain } = *self {
            if !(cancel_gain >= 0.0) || !cancel_gain.is_finite() {
                return Err(Error::Parameter(format!("cancel_gain = {cancel_gain} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// Static description of an attacker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackerModel {
    pub kind: AttackerKind,
    pub waveform: AttackWaveform,
    /// Spoof amplitude (0 allowed for pure cancellation).
    pub amplitude: f64,
    /// First-order time constant of the gating envelope, seconds.
    pub tau_attack_s: f64,
    pub detector: ChallengeDetector,
}

impl AttackerModel {
    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        self.waveform.validate()?;
        self.detector.validate()?;
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(Error::Parameter(format!("attack amplitude = {} must be >= 0", self.amplitude)));
        }
        if !(self.tau_attack_s > 0.0) || !self.tau_attack_s.is_finite() {
            return Err(Error::Parameter(format!("tau_attack_s = {} must be > 0", self.tau_attack_s)));
        }
        Ok(())
    }
}

/// A belief transition, recorded for reaction-time analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeliefFlip {
    pub sample: usize,
    pub to_on: bool,
}

/// Live attacker state stepped sample by sample alongside the plant.
#[derive(Debug, Clone)]
pub struct Attacker {
    model: AttackerModel,
    /// exp(-dt / tau_attack).
    lag_coeff: f64,
    envelope: f64,
    belief_on: bool,
    oracle_buf: VecDeque<bool>,
    qcd: Option<(QcdProblem, f64)>, // (problem, posterior)
    rng: RngStream,
    sample_idx: usize,
    flips: Vec<BeliefFlip>,
}

impl Attacker {
    /// `initial_on` seeds the belief (and the oracle's delay pipeline) with
    /// the actuator state at t = 0, as if the attacker had been observing
    /// for a long time already.
    pub fn new(model: AttackerModel, sample_rate_hz: f64, initial_on: bool, rng: RngStream) -> Result<Self> {
        model.validate()?;
        if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
            return Err(Error::Parameter(format!("sample_rate_hz = {sample_rate_hz} must be > 0")));
        }
        let lag_coeff = (-1.0 / (sample_rate_hz * model.tau_attack_s)).exp();
        let (oracle_buf, qcd) = match model.detector {
            ChallengeDetector::Oracle { delay_samples } => {
                let mut buf = VecDeque::with_capacity(delay_samples + 1);
                buf.extend(std::iter::repeat(initial_on).take(delay_samples));
                (buf, None)
            }
            ChallengeDetector::Qcd { alpha, rho, sigma_obs, assumed_on_amplitude } => {
                let problem = QcdProblem::new(assumed_on_amplitude, sigma_obs, rho, 1.0 - alpha)?;
                (VecDeque::new(), Some((problem, 0.0)))
            }
        };
        Ok(Self {
            model,
            lag_coeff,
            envelope: if initial_on { 1.0 } else { 0.0 },
            belief_on: initial_on,
            oracle_buf,
            qcd,
            rng,
            sample_idx: 0,
            flips: Vec::new(),
        })
    }

    fn update_belief(&mut self, actuation: f64) -> bool {
        match self.model.detector {
            ChallengeDetector::Oracle { delay_samples } => {
                self.oracle_buf.push_back(actuation != 0.0);
                if delay_samples == 0 {
                    self.oracle_buf.pop_front().unwrap_or(self.belief_on)
                } else if self.oracle_buf.len() > delay_samples {
                    self.oracle_buf.pop_front().unwrap_or(self.belief_on)
                } else {
                    self.belief_on
                }
            }
            ChallengeDetector::Qcd { sigma_obs, .. } => {
                let (problem, posterior) = self.qcd.as_mut().expect("qcd state");
                let obs = actuation + self.rng.normal(0.0, sigma_obs);
                // Watching on->off mirrors the observation around the
                // assumed on-level so silence looks like the mean shift.
                let x = if self.belief_on { problem.mean_shift - obs } else { obs };
                *posterior = shiryaev_update(problem, *posterior, x);
                if *posterior >= problem.threshold {
                    *posterior = 0.0;
                    !self.belief_on
                } else {
                    self.belief_on
                }
            }
        }
    }

    /// Advance one sample. `actuation` is the true drive amp * u(t) (the
    /// attacker taps it through its own noisy observation when using the
    /// change-point detector); `sensed_ring` is the physical sensor
    /// response the attacker measures for cancellation; `t` is the sample
    /// time in seconds. Returns the injected value a(t).
    pub fn step(&mut self, actuation: f64, sensed_ring: f64, t: f64) -> f64 {
        let on = self.update_belief(actuation);
        if on != self.belief_on {
            self.belief_on = on;
            self.flips.push(BeliefFlip { sample: self.sample_idx, to_on: on });
        }
        let target = if self.belief_on { 1.0 } else { 0.0 };
        self.envelope = self.lag_coeff * self.envelope + (1.0 - self.lag_coeff) * target;
        let spoof = self.model.amplitude * self.model.waveform.value(t);
        let intent = match self.model.kind {
            AttackerKind::BlindInjection => spoof,
            AttackerKind::Cancellation { cancel_gain } => spoof - cancel_gain * sensed_ring,
        };
        self.sample_idx += 1;
        self.envelope * intent
    }

    pub fn envelope(&self) -> f64 {
        self.envelope
    }

    pub fn believes_on(&self) -> bool {
        self.belief_on
    }

    /// Belief transitions seen so far, in sample order.
    pub fn flips(&self) -> &[BeliefFlip] {
        &self.flips
    }

    pub fn model(&self) -> &AttackerModel {
        &self.model
    }
}

/// Everything an attacker did during a run.
#[derive(Debug, Clone)]
pub struct AttackRun {
    /// Injected signal a(t), coupled at the plant input.
    pub attack: SignalTrace,
    /// Gating envelope per sample (0 = transmitter off, 1 = fully on).
    pub envelope: SignalTrace,
    /// Belief transitions, for reaction-delay analysis.
    pub flips: Vec<BeliefFlip>,
}

/// Walk a schedule and produce the attack input trace.
///
/// The attacker taps the actuation channel (amplitude while actuated, 0 in
/// silence) for challenge detection and senses the genuine reflection
/// amplitude(t) u(t) ring(t) for cancellation. The attacker and the plant
/// are otherwise independent, so the trace can be generated up front and
/// fed to the sensor simulation.
pub fn run_attacker(
    model: AttackerModel,
    schedule: &crate::schedule::ChallengeSchedule,
    ring: &crate::plant::ToneRing,
    sample_rate_hz: f64,
    rng: RngStream,
) -> Result<AttackRun> {
    let n = schedule.total_samples();
    if n == 0 {
        return Err(Error::Parameter("schedule has no samples".into()));
    }
    let initial_on = schedule.iter_samples().next().map(|(p, _)| p.is_actuated()).unwrap_or(false);
    let mut attacker = Attacker::new(model, sample_rate_hz, initial_on, rng)?;
    let dt = 1.0 / sample_rate_hz;
    let mut attack = Vec::with_capacity(n);
    let mut envelope = Vec::with_capacity(n);
    for (i, (phase, amplitude)) in schedule.iter_samples().enumerate() {
        let t = i as f64 * dt;
        let actuation = if phase.is_actuated() { amplitude } else { 0.0 };
        let reflection = actuation * ring.value(t);
        attack.push(attacker.step(actuation, reflection, t));
        envelope.push(attacker.envelope());
    }
    Ok(AttackRun {
        attack: SignalTrace::new(attack, sample_rate_hz, 0.0)?,
        envelope: SignalTrace::new(envelope, sample_rate_hz, 0.0)?,
        flips: attacker.flips.clone(),
    })
}

/// Standalone linear chirp trace: amplitude * sin of a sweep from f_start
/// to f_end spread over exactly n samples.
pub fn gen_swept_attack(
    f_start_hz: f64,
    f_end_hz: f64,
    amplitude: f64,
    sample_rate_hz: f64,
    n: usize,
) -> Result<SignalTrace> {
    if n == 0 {
        return Err(Error::Parameter("chirp length must be >= 1".into()));
    }
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(Error::Parameter(format!("chirp amplitude = {amplitude} must be >= 0")));
    }
    let f_max = f_start_hz.max(f_end_hz);
    if f_max >= sample_rate_hz / 2.0 {
        return Err(Error::Parameter(format!(
            "chirp reaches {f_max} Hz, at or above Nyquist for fs = {sample_rate_hz} Hz"
        )));
    }
    let wave = AttackWaveform::SweptSine {
        f_start_hz,
        f_end_hz,
        duration_s: n as f64 / sample_rate_hz,
    };
    wave.validate()?;
    let dt = 1.0 / sample_rate_hz;
    let samples = (0..n).map(|i| amplitude * wave.value(i as f64 * dt)).collect();
    SignalTrace::new(samples, sample_rate_hz, 0.0)
}

/// Element-wise advanced cancellation: attack = -cancel_gain * ring + spoof.
pub fn advanced_cancel(ring: &SignalTrace, cancel_gain: f64, spoof: &SignalTrace) -> Result<SignalTrace> {
    if ring.len() != spoof.len() {
        return Err(Error::Dimension(format!(
            "ring has {} samples, spoof has {}",
            ring.len(),
            spoof.len()
        )));
    }
    if ring.sample_rate_hz != spoof.sample_rate_hz {
        return Err(Error::Dimension("ring and spoof sample rates differ".into()));
    }
    if !(cancel_gain >= 0.0) || !cancel_gain.is_finite() {
        return Err(Error::Parameter(format!("cancel_gain = {cancel_gain} must be >= 0")));
    }
    let samples = ring
        .samples
        .iter()
        .zip(&spoof.samples)
        .map(|(r, s)| s - cancel_gain * r)
        .collect();
    SignalTrace::new(samples, ring.sample_rate_hz, ring.t0)
}
