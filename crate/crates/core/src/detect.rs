//! Time-domain chi-squared attack detector.
//!
//! During each silent window the actuator is off, so a passive measured
//! entity contributes nothing and the sensor output must follow the model's
//! free decay from its state at the challenge instant. The detector fits
//! that state by least squares over a trailing stretch of measured output
//! (the modulation sequence is its own secret; the reflection's amplitude
//! and phase are nuisance parameters the fit absorbs), predicts the decay,
//! and thresholds the windowed mean of squared residuals
//!
//!   g(t) = (1/T) sum_{tau = t-T+1}^{t} z^2(tau),   z = y - y_hat.
//!
//! Attack energy arriving after the challenge drives the pickup dynamics
//! where the prediction says silence, inflating g; an attacker that shut
//! down exactly at the challenge leaves the decay untouched and g sits at
//! the noise floor.

use crate::error::{Error, Result};
use crate::plant::StateSpaceModel;
use crate::schedule::ChallengeSchedule;
use crate::signal::SignalTrace;
use crate::stats::Counts;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    /// Residual averaging window T, samples.
    pub window_t: usize,
    /// Alarm when g exceeds this.
    pub alarm_threshold: f64,
    /// Trailing samples used to fit the challenge-instant state; 0 picks
    /// 10 ms of samples (at least four times the unknown count).
    pub fit_window: usize,
}

impl DetectorConfig {
    pub fn new(window_t: usize, alarm_threshold: f64) -> Result<Self> {
        if window_t == 0 {
            return Err(Error::Parameter("window_t must be >= 1".into()));
        }
        if !(alarm_threshold > 0.0) || !alarm_threshold.is_finite() {
            return Err(Error::Parameter(format!(
                "alarm_threshold = {alarm_threshold} must be > 0"
            )));
        }
        Ok(Self { window_t, alarm_threshold, fit_window: 0 })
    }

    pub fn with_fit_window(mut self, samples: usize) -> Self {
        self.fit_window = samples;
        self
    }
}

/// Verdict for one challenge (one silent window).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChallengeRecord {
    pub index: usize,
    /// Challenge instant (silence onset), seconds.
    pub t_challenge_s: f64,
    /// Max of g over the window's sliding evaluations; NaN when skipped.
    pub g_max: f64,
    pub alarm: bool,
    /// Window too short for one full averaging window; never alarms.
    pub skipped: bool,
}

#[derive(Debug, Clone)]
pub struct DetectionReport {
    pub records: Vec<ChallengeRecord>,
    /// Per-sample residual z; zero outside silent windows.
    pub residual: SignalTrace,
    /// Confusion counts against ground truth, when provided. Skipped
    /// windows count as negative predictions so totals match the
    /// challenge count.
    pub counts: Option<Counts>,
    pub warnings: Vec<String>,
}

impl DetectionReport {
    pub fn alarm_count(&self) -> usize {
        self.records.iter().filter(|r| r.alarm).count()
    }
}

/// Reconstruct the plant state from the last n measured outputs.
///
/// Requires an observable-companion realization (C = e1, A rows below the
/// first form a shift, B drives only the first state): there the state is
/// literally the last n outputs, x = (y_k, y_{k-1}, ..., y_{k-n+1}),
/// independent of the input history, so the defender needs no knowledge of
/// the reflection waveform.
pub fn estimate_state_from_outputs(model: &StateSpaceModel, trailing: &[f64]) -> Result<Vec<f64>> {
    let n = model.order();
    let a = model.a();
    let b = model.b();
    let c = model.c();
    let companion = c[0] == 1.0
        && c[1..].iter().all(|&v| v == 0.0)
        && b[1..].iter().all(|&v| v == 0.0)
        && (1..n).all(|i| (0..n).all(|j| a[i * n + j] == if j == i - 1 { 1.0 } else { 0.0 }));
    if !companion {
        return Err(Error::Parameter(
            "state reconstruction from outputs needs an observable-companion model \
             (C = e1, shift structure below the first row of A)"
                .into(),
        ));
    }
    if trailing.len() < n {
        return Err(Error::Dimension(format!(
            "need {n} trailing outputs to reconstruct the state, got {}",
            trailing.len()
        )));
    }
    Ok((0..n).map(|i| trailing[trailing.len() - 1 - i]).collect())
}

/// Fit the state at the last pre-silence sample by least squares over the
/// trailing measured outputs.
///
/// Over the fit window the output is linear in three groups of unknowns:
/// the state entering the window, and the in-phase/quadrature amplitudes of
/// the reflected tone (the defender knows the modulation `drive` it applied
/// and the ring frequency, but not the reflection's amplitude or phase).
/// The regressors are the model's responses to each unit hypothesis, so
/// the fit is exact on noiseless data and averages measurement noise down
/// across the whole window instead of trusting the last few samples.
///
/// `trailing_y[k]` and `drive[k]` cover the `m` samples just before the
/// silence; `drive` is the scheduled modulation amplitude (0 while silent).
/// Returns the state estimate after the final sample, ready for
/// [`predict_silence_response`].
pub fn estimate_onset_state(
    model: &StateSpaceModel,
    trailing_y: &[f64],
    drive: &[f64],
    ring_freq_hz: f64,
    fs_hz: f64,
) -> Result<Vec<f64>> {
    fit_onset_state(model, trailing_y, drive, ring_freq_hz, fs_hz, None)
}

/// Like [`estimate_onset_state`], but the fit only trusts samples taken while
/// the probe was actuated and at least `resume_guard` samples past the start
/// of its actuated stretch.
///
/// A reactive interferer transmits while the probe is silent and takes a
/// moment to shut off once it resumes, so silent-phase samples and the first
/// few after each resumption carry energy the model cannot explain. Dropping
/// those rows keeps the fit near the noise floor; the regressors still evolve
/// through the excluded samples, so the returned onset state is unchanged in
/// meaning. Fails with a degenerate fit when too few trusted samples remain.
pub fn estimate_onset_state_gated(
    model: &StateSpaceModel,
    trailing_y: &[f64],
    drive: &[f64],
    ring_freq_hz: f64,
    fs_hz: f64,
    resume_guard: usize,
) -> Result<Vec<f64>> {
    let mut keep = Vec::with_capacity(drive.len());
    let mut since_resume = usize::MAX;
    for &u in drive {
        if u == 0.0 {
            since_resume = usize::MAX;
        } else if since_resume == usize::MAX {
            // The window edge may hide a resumption just before it, so the
            // leading actuated run is guarded too.
            since_resume = 0;
        } else {
            since_resume += 1;
        }
        keep.push(u != 0.0 && since_resume >= resume_guard);
    }
    fit_onset_state(model, trailing_y, drive, ring_freq_hz, fs_hz, Some(&keep))
}

fn fit_onset_state(
    model: &StateSpaceModel,
    trailing_y: &[f64],
    drive: &[f64],
    ring_freq_hz: f64,
    fs_hz: f64,
    keep: Option<&[bool]>,
) -> Result<Vec<f64>> {
    let n = model.order();
    let m = trailing_y.len();
    if drive.len() != m {
        return Err(Error::Dimension(format!(
            "drive has {} samples, trailing output has {m}",
            drive.len()
        )));
    }
    let unknowns = n + 2;
    if m < unknowns {
        return Err(Error::Dimension(format!(
            "need at least {unknowns} trailing samples for the fit hypotheses, got {m}"
        )));
    }
    if !(fs_hz > 0.0) || !fs_hz.is_finite() {
        return Err(Error::Parameter(format!("fs_hz = {fs_hz} must be > 0")));
    }
    if !(ring_freq_hz > 0.0) || 2.0 * ring_freq_hz > fs_hz {
        return Err(Error::Parameter(format!(
            "tone frequency {ring_freq_hz} Hz must be in (0, fs/2 = {})",
            fs_hz / 2.0
        )));
    }
    if trailing_y.iter().any(|v| !v.is_finite()) || drive.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("fit window contains non-finite samples".into()));
    }
    if let Some(mask) = keep {
        if mask.len() != m {
            return Err(Error::Dimension(format!(
                "keep mask has {} entries, fit window has {m}",
                mask.len()
            )));
        }
        let kept = mask.iter().filter(|&&k| k).count();
        if kept < unknowns {
            return Err(Error::DegenerateFit(format!(
                "only {kept} trusted samples in the fit window, need {unknowns}"
            )));
        }
    }

    let omega = std::f64::consts::TAU * ring_freq_hz / fs_hz;
    let c = model.c();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(unknowns);
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        cols.push(model.free_response(&e, m + 1)?[1..].to_vec());
    }
    for quadrature in [false, true] {
        let mut x = vec![0.0; n];
        let mut col = Vec::with_capacity(m);
        for (k, &u) in drive.iter().enumerate() {
            let phase = omega * k as f64;
            let tone = if quadrature { phase.cos() } else { phase.sin() };
            x = advance(model, &x, u * tone);
            col.push(dot(c, &x));
        }
        cols.push(col);
    }
    let theta = match keep {
        None => solve_least_squares(&cols, trailing_y)?,
        Some(mask) => {
            let filter = |v: &[f64]| -> Vec<f64> {
                v.iter()
                    .zip(mask)
                    .filter_map(|(&x, &k)| k.then_some(x))
                    .collect()
            };
            let kept_cols: Vec<Vec<f64>> = cols.iter().map(|c| filter(c)).collect();
            solve_least_squares(&kept_cols, &filter(trailing_y))?
        }
    };

    // Replay the fitted trajectory; its state after the last sample is the
    // silence-onset state.
    let (alpha, beta) = (theta[n], theta[n + 1]);
    let mut x = theta[..n].to_vec();
    for (k, &u) in drive.iter().enumerate() {
        let phase = omega * k as f64;
        x = advance(model, &x, u * (alpha * phase.sin() + beta * phase.cos()));
    }
    Ok(x)
}

fn advance(model: &StateSpaceModel, x: &[f64], u: f64) -> Vec<f64> {
    let n = model.order();
    let a = model.a();
    let b = model.b();
    (0..n)
        .map(|i| b[i] * u + (0..n).map(|j| a[i * n + j] * x[j]).sum::<f64>())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Least squares over a small set of regressor columns via normalized
/// normal equations. Identically-zero columns (an undriven tone hypothesis)
/// get coefficient zero; collinear remaining columns are an error.
fn solve_least_squares(cols: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let kept: Vec<usize> = (0..cols.len()).filter(|&i| norms[i] > 0.0).collect();
    let p = kept.len();
    if p == 0 {
        return Err(Error::DegenerateFit("all regressors are zero".into()));
    }
    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    for (r, &i) in kept.iter().enumerate() {
        rhs[r] = dot(&cols[i], y) / norms[i];
        for (s, &j) in kept.iter().enumerate() {
            gram[r * p + s] = dot(&cols[i], &cols[j]) / (norms[i] * norms[j]);
        }
    }
    // Gaussian elimination with partial pivoting on the normalized system;
    // diagonals start at 1, so a vanishing pivot means collinearity.
    for col in 0..p {
        let pivot_row = (col..p)
            .max_by(|&r, &s| {
                gram[r * p + col].abs().partial_cmp(&gram[s * p + col].abs()).unwrap()
            })
            .unwrap();
        if gram[pivot_row * p + col].abs() < 1e-10 {
            return Err(Error::DegenerateFit(
                "regressors are collinear over the fit window".into(),
            ));
        }
        if pivot_row != col {
            for k in 0..p {
                gram.swap(col * p + k, pivot_row * p + k);
            }
            rhs.swap(col, pivot_row);
        }
        for r in col + 1..p {
            let f = gram[r * p + col] / gram[col * p + col];
            for k in col..p {
                gram[r * p + k] -= f * gram[col * p + k];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut solution = vec![0.0; p];
    for r in (0..p).rev() {
        let mut acc = rhs[r];
        for k in r + 1..p {
            acc -= gram[r * p + k] * solution[k];
        }
        solution[r] = acc / gram[r * p + r];
    }
    let mut theta = vec![0.0; cols.len()];
    for (r, &i) in kept.iter().enumerate() {
        theta[i] = solution[r] / norms[i];
    }
    Ok(theta)
}

/// Free-decay prediction from the challenge-instant state: y_hat_j =
/// C A^{j+1} x_hat for j = 0..horizon-1 (u = 0, w = 0, v = 0).
pub fn predict_silence_response(
    model: &StateSpaceModel,
    state_at_challenge: &[f64],
    horizon: usize,
    fs_hz: f64,
) -> Result<SignalTrace> {
    let full = model.free_response(state_at_challenge, horizon + 1)?;
    SignalTrace::new(full[1..].to_vec(), fs_hz, 0.0)
}

/// Windowed residual statistic over the final T samples of z.
pub fn chi2_statistic(z: &[f64], t: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::Parameter("window length must be >= 1".into()));
    }
    if z.len() < t {
        return Err(Error::Dimension(format!(
            "window needs {t} samples, have {}",
            z.len()
        )));
    }
    Ok(z[z.len() - t..].iter().map(|v| v * v).sum::<f64>() / t as f64)
}

/// Sliding g over every length-T window of z (running-sum recursion).
pub fn chi2_series(z: &[f64], t: usize) -> Result<Vec<f64>> {
    chi2_statistic(&z[..t.min(z.len())], t)?; // validates t and length
    let mut out = Vec::with_capacity(z.len() - t + 1);
    let mut sum: f64 = z[..t].iter().map(|v| v * v).sum();
    out.push(sum / t as f64);
    for i in t..z.len() {
        sum += z[i] * z[i] - z[i - t] * z[i - t];
        out.push(sum / t as f64);
    }
    Ok(out)
}

/// Run the detector over every silent window of a measured trace.
///
/// `ring_freq_hz` is the known resonance of the measured entity; the fit
/// treats its amplitude and phase as unknowns. `truth` gives per-challenge
/// ground truth (attack active) for confusion counts; its length must match
/// the number of silent windows.
pub fn detect(
    y: &SignalTrace,
    schedule: &ChallengeSchedule,
    model: &StateSpaceModel,
    ring_freq_hz: f64,
    config: &DetectorConfig,
    truth: Option<&[bool]>,
) -> Result<DetectionReport> {
    DetectorConfig::new(config.window_t, config.alarm_threshold)?;
    if y.len() != schedule.total_samples() {
        return Err(Error::Dimension(format!(
            "trace has {} samples, schedule covers {}",
            y.len(),
            schedule.total_samples()
        )));
    }
    let windows = schedule.silent_windows();
    if let Some(t) = truth {
        if t.len() != windows.len() {
            return Err(Error::Dimension(format!(
                "truth has {} entries, schedule has {} silent windows",
                t.len(),
                windows.len()
            )));
        }
    }
    let n = model.order();
    let min_fit = n + 2;
    let auto_fit = ((0.01 * y.sample_rate_hz).round() as usize).max(4 * min_fit);
    let dt = y.dt();
    let mut residual = vec![0.0; y.len()];
    let mut records = Vec::with_capacity(windows.len());
    let mut warnings = Vec::new();
    for (index, win) in windows.iter().enumerate() {
        let t_challenge_s = win.start as f64 * dt;
        if win.start < min_fit {
            warnings.push(format!(
                "challenge {index}: only {} samples of history before the window, need {min_fit}; skipped",
                win.start
            ));
            records.push(ChallengeRecord { index, t_challenge_s, g_max: f64::NAN, alarm: false, skipped: true });
            continue;
        }
        let want = if config.fit_window == 0 { auto_fit } else { config.fit_window.max(min_fit) };
        let m = want.min(win.start);
        let drive: Vec<f64> = (win.start - m..win.start)
            .map(|i| {
                let (phase, amplitude) = schedule.at(i);
                if phase.is_actuated() {
                    amplitude
                } else {
                    0.0
                }
            })
            .collect();
        let x_hat = match estimate_onset_state(
            model,
            &y.samples[win.start - m..win.start],
            &drive,
            ring_freq_hz,
            y.sample_rate_hz,
        ) {
            Ok(x) => x,
            Err(Error::DegenerateFit(msg)) => {
                warnings.push(format!("challenge {index}: state fit failed ({msg}); skipped"));
                records.push(ChallengeRecord {
                    index,
                    t_challenge_s,
                    g_max: f64::NAN,
                    alarm: false,
                    skipped: true,
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let y_hat = predict_silence_response(model, &x_hat, win.len, y.sample_rate_hz)?;
        for j in 0..win.len {
            residual[win.start + j] = y.samples[win.start + j] - y_hat.samples[j];
        }
        if win.len < config.window_t {
            warnings.push(format!(
                "challenge {index}: silent window of {} samples is shorter than T = {}; skipped",
                win.len, config.window_t
            ));
            records.push(ChallengeRecord { index, t_challenge_s, g_max: f64::NAN, alarm: false, skipped: true });
            continue;
        }
        let g = chi2_series(&residual[win.start..win.start + win.len], config.window_t)?;
        let g_max = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        records.push(ChallengeRecord {
            index,
            t_challenge_s,
            g_max,
            alarm: g_max > config.alarm_threshold,
            skipped: false,
        });
    }
    let counts = truth.map(|t| {
        let mut c = Counts::default();
        for (rec, &attacked) in records.iter().zip(t) {
            c.add(rec.alarm, attacked);
        }
        c
    });
    Ok(DetectionReport {
        records,
        residual: SignalTrace::new(residual, y.sample_rate_hz, y.t0)?,
        counts,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{simulate_sensor, ToneRing};
    use crate::rng::RngStream;
    use crate::schedule::{Phase, Segment};
    use proptest::prelude::*;

    const FS: f64 = 10_000.0;

    fn sched(segs: &[(Phase, f64, usize)]) -> ChallengeSchedule {
        ChallengeSchedule::new(
            segs.iter()
                .map(|&(phase, amplitude, duration_samples)| Segment { phase, amplitude, duration_samples })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn chi2_statistic_zero_and_constant_cases() {
        assert_eq!(chi2_statistic(&[0.0; 50], 50).unwrap(), 0.0);
        let g = chi2_statistic(&[0.3; 64], 64).unwrap();
        assert!((g - 0.09).abs() < 1e-15);
        assert!(chi2_statistic(&[1.0; 5], 10).is_err());
        assert!(chi2_statistic(&[1.0; 5], 0).is_err());
    }

    #[test]
    fn chi2_mean_matches_noise_variance() {
        let mut rng = RngStream::new(77);
        let sigma = 0.4;
        let z: Vec<f64> = (0..10_099).map(|_| rng.normal(0.0, sigma)).collect();
        let g = chi2_series(&z, 100).unwrap();
        assert_eq!(g.len(), 10_000);
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        assert!((mean - sigma * sigma).abs() < 0.02 * sigma * sigma, "mean g = {mean}");
    }

    #[test]
    fn chi2_series_agrees_with_direct_evaluation() {
        let z: Vec<f64> = (0..200).map(|i| ((i * 37) % 19) as f64 / 7.0 - 1.0).collect();
        let series = chi2_series(&z, 32).unwrap();
        for (i, g) in series.iter().enumerate() {
            let direct = chi2_statistic(&z[..i + 32], 32).unwrap();
            assert!((g - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn prediction_matches_matrix_power_oracle() {
        let m = StateSpaceModel::second_order(0.9, 0.5, 0.0, 0.0).unwrap();
        let x0 = [0.3, -0.2];
        let pred = predict_silence_response(&m, &x0, 20, FS).unwrap();
        // Independent 2x2 matrix-power evaluation.
        let a = [[0.9 + 0.5, -0.9 * 0.5], [1.0, 0.0]];
        let mut x = x0;
        for k in 0..20 {
            x = [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]];
            assert!((pred.samples[k] - x[0]).abs() < 1e-12, "k = {k}");
        }
    }

    #[test]
    fn prediction_from_zero_state_is_zero() {
        let m = StateSpaceModel::from_settle_time(0.035, FS, 0.0, 0.0).unwrap();
        let pred = predict_silence_response(&m, &[0.0], 100, FS).unwrap();
        assert!(pred.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prediction_from_unit_level_decays_below_one_percent_by_35ms() {
        let m = StateSpaceModel::from_settle_time(0.035, FS, 0.0, 0.0).unwrap();
        let pred = predict_silence_response(&m, &[1.0], 400, FS).unwrap();
        assert!(pred.samples[350] < 0.01, "at 35.1 ms: {}", pred.samples[350]);
        assert!(pred.samples[300] > 0.01, "at 30.1 ms: {}", pred.samples[300]);
    }

    #[test]
    fn state_reconstruction_is_exact_for_companion_models() {
        let mut m = StateSpaceModel::resonant(71.0, 0.035, FS, 0.0, 0.0).unwrap();
        let mut outputs = Vec::new();
        for k in 0..50 {
            outputs.push(m.step((k as f64 * 0.13).sin(), 0.0));
        }
        let x_hat = estimate_state_from_outputs(&m, &outputs).unwrap();
        for (a, b) in x_hat.iter().zip(m.state()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn state_reconstruction_rejects_non_companion_models() {
        let m = StateSpaceModel::new(
            vec![0.5, 0.0, 0.0, 0.3],
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            0.0,
            0.0,
        )
        .unwrap();
        assert!(estimate_state_from_outputs(&m, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn onset_state_fit_is_exact_on_noiseless_driven_data() {
        // Drive a resonant pickup with an arbitrary-phase tone, including a
        // gap in the modulation, and recover the exact state.
        let mut m = StateSpaceModel::resonant(71.0, 0.035, FS, 0.0, 0.0).unwrap();
        let (amp, phase) = (0.73, 1.1);
        let mut ys = Vec::new();
        let mut drive = Vec::new();
        for k in 0..160 {
            let u = if (60..80).contains(&k) { 0.0 } else { 1.0 };
            let tone = amp * (std::f64::consts::TAU * 71.0 * k as f64 / FS + phase).sin();
            ys.push(m.step(u * tone, 0.0));
            drive.push(u);
        }
        let x_hat = estimate_onset_state(&m, &ys, &drive, 71.0, FS).unwrap();
        for (a, b) in x_hat.iter().zip(m.state()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn onset_state_fit_handles_undriven_window() {
        // All-zero drive: only the free decay is identifiable, and that is
        // all the window contains.
        let mut m = StateSpaceModel::resonant(120.0, 0.02, FS, 0.0, 0.0).unwrap();
        for k in 0..300 {
            m.step((k as f64 * 0.21).sin(), 0.0);
        }
        let mut ys = Vec::new();
        for _ in 0..60 {
            ys.push(m.step(0.0, 0.0));
        }
        let drive = vec![0.0; 60];
        let x_hat = estimate_onset_state(&m, &ys, &drive, 120.0, FS).unwrap();
        for (a, b) in x_hat.iter().zip(m.state()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn onset_state_fit_averages_noise_down() {
        // With measurement noise, the windowed fit must beat reading the
        // state straight off the last outputs by a wide margin.
        let sigma = 0.05;
        let mut rng = RngStream::new(31);
        let mut m = StateSpaceModel::resonant(71.0, 0.035, FS, 0.0, 0.0).unwrap();
        let mut sq_fit = 0.0;
        let mut sq_raw = 0.0;
        for _ in 0..40 {
            let mut ys = Vec::new();
            let mut drive = Vec::new();
            for k in 0..200 {
                let tone = (std::f64::consts::TAU * 71.0 * k as f64 / FS).sin();
                ys.push(m.step(tone, 0.0) + rng.normal(0.0, sigma));
                drive.push(1.0);
            }
            let x_true = m.state().to_vec();
            let x_fit = estimate_onset_state(&m, &ys, &drive, 71.0, FS).unwrap();
            let x_raw = estimate_state_from_outputs(&m, &ys).unwrap();
            sq_fit += x_fit.iter().zip(&x_true).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            sq_raw += x_raw.iter().zip(&x_true).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        assert!(
            sq_fit * 10.0 < sq_raw,
            "fit mse {} not well below raw-output mse {}",
            sq_fit / 40.0,
            sq_raw / 40.0
        );
    }

    #[test]
    fn noiseless_unattacked_run_never_alarms() {
        let schedule = sched(&[
            (Phase::Steady, 1.0, 2_000),
            (Phase::Silent, 0.0, 300),
            (Phase::Steady, 1.0, 1_500),
            (Phase::Silent, 0.0, 500),
            (Phase::Steady, 1.0, 700),
        ]);
        let mut model = StateSpaceModel::resonant(71.0, 0.035, FS, 0.0, 0.0).unwrap();
        let ring = ToneRing::new(71.0, 1.0, 0.4).unwrap();
        let mut rng = RngStream::new(9);
        let y = simulate_sensor(&mut model, &schedule, &ring, None, FS, &mut rng).unwrap();
        let config = DetectorConfig::new(50, 1e-16).unwrap();
        let report = detect(&y, &schedule, &model, 71.0, &config, None).unwrap();
        assert_eq!(report.records.len(), 2);
        for rec in &report.records {
            assert!(!rec.alarm, "noiseless exact-model run alarmed: {rec:?}");
            assert!(rec.g_max < 1e-16, "g_max {}", rec.g_max);
        }
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn late_attack_energy_trips_the_alarm_but_clean_noise_does_not() {
        use crate::adversary::{
            run_attacker, AttackWaveform, AttackerKind, AttackerModel, ChallengeDetector,
        };
        let schedule = sched(&[
            (Phase::Steady, 1.0, 2_000),
            (Phase::Silent, 0.0, 400),
            (Phase::Steady, 1.0, 1_600),
            (Phase::Silent, 0.0, 400),
            (Phase::Steady, 1.0, 600),
        ]);
        let ring = ToneRing::new(71.0, 1.0, 0.0).unwrap();
        let base = StateSpaceModel::resonant(71.0, 0.035, FS, 0.0, 0.001).unwrap();
        let config = DetectorConfig::new(50, 1e-4).unwrap();

        let mut clean_model = base.clone();
        let y_clean =
            simulate_sensor(&mut clean_model, &schedule, &ring, None, FS, &mut RngStream::new(4)).unwrap();
        let clean = detect(&y_clean, &schedule, &base, 71.0, &config, Some(&[false, false])).unwrap();
        assert_eq!(clean.alarm_count(), 0, "clean run alarmed");

        let attacker = AttackerModel {
            kind: AttackerKind::BlindInjection,
            waveform: AttackWaveform::FixedSine { freq_hz: 71.0, phase_rad: 0.0 },
            amplitude: 1.0,
            tau_attack_s: 0.002,
            detector: ChallengeDetector::Oracle { delay_samples: 0 },
        };
        let run = run_attacker(attacker, &schedule, &ring, FS, RngStream::new(5)).unwrap();
        let mut attacked_model = base.clone();
        let y_atk = simulate_sensor(
            &mut attacked_model,
            &schedule,
            &ring,
            Some(&run.attack),
            FS,
            &mut RngStream::new(4),
        )
        .unwrap();
        let hit = detect(&y_atk, &schedule, &base, 71.0, &config, Some(&[true, true])).unwrap();
        assert_eq!(hit.alarm_count(), 2, "2 ms lag should alarm on both challenges");
        let counts = hit.counts.unwrap();
        assert_eq!(counts.tp, 2);
        assert_eq!(counts.fn_, 0);
    }

    #[test]
    fn short_silent_window_is_skipped_with_warning() {
        let schedule = sched(&[
            (Phase::Steady, 1.0, 500),
            (Phase::Silent, 0.0, 20),
            (Phase::Steady, 1.0, 200),
        ]);
        let mut model = StateSpaceModel::from_settle_time(0.035, FS, 0.0, 0.0).unwrap();
        let ring = ToneRing::new(71.0, 1.0, 0.0).unwrap();
        let mut rng = RngStream::new(1);
        let y = simulate_sensor(&mut model, &schedule, &ring, None, FS, &mut rng).unwrap();
        let config = DetectorConfig::new(50, 1.0).unwrap();
        let report = detect(&y, &schedule, &model, 71.0, &config, Some(&[true])).unwrap();
        assert_eq!(report.records.len(), 1);
        assert!(report.records[0].skipped);
        assert!(!report.records[0].alarm);
        assert_eq!(report.warnings.len(), 1);
        // Skipped windows still land in the counts, as negatives.
        let counts = report.counts.unwrap();
        assert_eq!(counts.tp + counts.fp + counts.tn + counts.fn_, 1);
        assert_eq!(counts.fn_, 1);
    }

    proptest! {
        #[test]
        fn g_is_even_and_scales_quadratically(
            z in prop::collection::vec(-10.0f64..10.0, 32..200),
            c in -4.0f64..4.0,
        ) {
            let t = 32;
            let g = chi2_statistic(&z, t).unwrap();
            let neg: Vec<f64> = z.iter().map(|v| -v).collect();
            prop_assert_eq!(chi2_statistic(&neg, t).unwrap(), g);
            let scaled: Vec<f64> = z.iter().map(|v| c * v).collect();
            let gs = chi2_statistic(&scaled, t).unwrap();
            prop_assert!((gs - c * c * g).abs() <= 1e-12 * g.max(1.0) * (1.0 + c * c));
        }
    }
}
