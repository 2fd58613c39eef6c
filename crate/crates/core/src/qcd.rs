//! Quickest change detection: how fast can an attacker possibly notice that
//! the actuator switched on or off?
//!
//! The attacker watches a noisy channel that jumps from N(0, sigma^2) to
//! N(A, sigma^2) at a geometrically distributed change point Gamma, and must
//! trade false alarms (reacting to noise, which exposes the attack) against
//! detection delay (reacting late, which also exposes the attack). The
//! Bayes-optimal detector for this prior is the Shiryaev posterior test, so
//! measuring it gives the attacker's best case. The experiments here
//! quantify two facts the defender leans on:
//!
//! - with the false-alarm budget pinned at alpha, the chance of reacting
//!   within a fixed window after the change scales like alpha itself, and
//! - dropping the resumption amplitude by beta while stretching the
//!   decision grid by beta^2 leaves that chance unchanged, which is what
//!   makes the low-amplitude confusion phase a real cost for the attacker.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::stats::{self, wilson_ci};

/// Hard cap on observations per simulated trial; hitting it marks the
/// trial truncated instead of looping forever.
pub const OBSERVATION_CAP: u64 = 10_000_000;

/// Gaussian pre/post change model with geometric prior and posterior
/// stopping threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QcdProblem {
    /// Post-change mean A; pre-change mean is 0.
    pub mean_shift: f64,
    /// Observation noise standard deviation (same before and after).
    pub sigma: f64,
    /// Per-step change probability of the geometric prior on Gamma.
    pub rho: f64,
    /// Stop when the posterior P(change already happened) reaches this.
    pub threshold: f64,
}

impl QcdProblem {
    pub fn new(mean_shift: f64, sigma: f64, rho: f64, threshold: f64) -> Result<Self> {
        if !(mean_shift > 0.0) || !mean_shift.is_finite() {
            return Err(Error::Parameter(format!("mean_shift = {mean_shift} must be > 0")));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Parameter(format!("sigma = {sigma} must be > 0")));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Parameter(format!("rho = {rho} outside (0, 1)")));
        }
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::Parameter(format!("threshold = {threshold} outside (0, 1)")));
        }
        Ok(Self { mean_shift, sigma, rho, threshold })
    }
}

/// Likelihood ratio f1(x) / f0(x) = exp((A / sigma^2) (x - A/2)).
pub fn likelihood_ratio(p: &QcdProblem, x: f64) -> f64 {
    ((p.mean_shift / (p.sigma * p.sigma)) * (x - p.mean_shift / 2.0)).exp()
}

/// One Shiryaev posterior update:
/// p' = (p + (1-p) rho) L(x) / [(p + (1-p) rho) L(x) + (1-p)(1-rho)].
pub fn shiryaev_update(p: &QcdProblem, posterior: f64, x: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&posterior));
    let pred = posterior + (1.0 - posterior) * p.rho;
    let l = likelihood_ratio(p, x);
    let num = pred * l;
    if !num.is_finite() {
        return 1.0;
    }
    let denom = num + (1.0 - pred);
    if denom == 0.0 {
        return 1.0;
    }
    (num / denom).clamp(0.0, 1.0)
}

/// Outcome of one simulated change-detection trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    /// True change point (1-based observation index).
    pub gamma: u64,
    /// First observation index whose posterior reached the threshold;
    /// None when the observation cap was hit first.
    pub stop: Option<u64>,
}

impl TrialOutcome {
    pub fn false_alarm(&self) -> bool {
        matches!(self.stop, Some(tau) if tau < self.gamma)
    }

    /// Detection delay tau - Gamma when the trial stopped at or after the
    /// change.
    pub fn delay(&self) -> Option<u64> {
        match self.stop {
            Some(tau) if tau >= self.gamma => Some(tau - self.gamma),
            _ => None,
        }
    }

    pub fn truncated(&self) -> bool {
        self.stop.is_none()
    }
}

/// Draw Gamma ~ geometric(rho), emit x_i ~ f0 for i < Gamma and f1 for
/// i >= Gamma, and stop at the first posterior threshold crossing.
pub fn run_trial(p: &QcdProblem, rng: &mut RngStream) -> Result<TrialOutcome> {
    let gamma = rng.geometric(p.rho)?;
    let mut post = 0.0;
    for i in 1..=OBSERVATION_CAP {
        let mean = if i >= gamma { p.mean_shift } else { 0.0 };
        let x = rng.normal(mean, p.sigma);
        post = shiryaev_update(p, post, x);
        if post >= p.threshold {
            return Ok(TrialOutcome { gamma, stop: Some(i) });
        }
    }
    Ok(TrialOutcome { gamma, stop: None })
}

/// Delay probability at one window size K.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayPoint {
    pub k: u64,
    /// P(Gamma <= tau <= Gamma + K).
    pub prob: f64,
    pub ci: (f64, f64),
}

/// Monte Carlo summary of a detector's reaction behaviour.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayProfile {
    pub trials: u64,
    /// Empirical P(tau < Gamma) with Wilson 95% CI.
    pub p_fa: f64,
    pub p_fa_ci: (f64, f64),
    pub delay_within: Vec<DelayPoint>,
    /// Mean of tau - Gamma over trials that detected (tau >= Gamma).
    pub mean_delay: f64,
    pub truncated: u64,
}

/// Estimate false-alarm rate and P(Gamma <= tau <= Gamma+K) for each K.
pub fn measure_delay_profile(
    p: &QcdProblem,
    trials: u64,
    ks: &[u64],
    rng: &mut RngStream,
) -> Result<DelayProfile> {
    if trials == 0 {
        return Err(Error::Parameter("trials must be > 0".into()));
    }
    let mut fa = 0u64;
    let mut truncated = 0u64;
    let mut within = vec![0u64; ks.len()];
    let mut delay_sum = 0.0;
    let mut delay_count = 0u64;
    for t in 0..trials {
        let mut stream = rng.substream(t);
        let outcome = run_trial(p, &mut stream)?;
        if outcome.false_alarm() {
            fa += 1;
        }
        if outcome.truncated() {
            truncated += 1;
        }
        if let Some(d) = outcome.delay() {
            delay_sum += d as f64;
            delay_count += 1;
            for (slot, &k) in within.iter_mut().zip(ks) {
                if d <= k {
                    *slot += 1;
                }
            }
        }
    }
    Ok(DelayProfile {
        trials,
        p_fa: fa as f64 / trials as f64,
        p_fa_ci: wilson_ci(fa, trials),
        delay_within: ks
            .iter()
            .zip(&within)
            .map(|(&k, &w)| DelayPoint { k, prob: w as f64 / trials as f64, ci: wilson_ci(w, trials) })
            .collect(),
        mean_delay: if delay_count > 0 { delay_sum / delay_count as f64 } else { f64::NAN },
        truncated,
    })
}

/// Pick the posterior threshold that gives false-alarm probability alpha.
///
/// The posterior path does not depend on the threshold, so one batch of
/// simulated pre-change paths yields the whole calibration curve: the
/// false-alarm event at threshold h is {max posterior before Gamma >= h},
/// and the calibrated threshold is the empirical (1 - alpha)-quantile of
/// those per-trial maxima.
pub fn calibrate_threshold_for_alpha(
    mean_shift: f64,
    sigma: f64,
    rho: f64,
    alpha: f64,
    trials: u64,
    rng: &mut RngStream,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha = {alpha} outside (0, 1)")));
    }
    if (trials as f64) * alpha < 20.0 {
        return Err(Error::Calibration(format!(
            "{trials} trials cannot resolve alpha = {alpha}; need at least {}",
            (20.0 / alpha) as u64
        )));
    }
    // Threshold is irrelevant for the path; any valid value works here.
    let probe = QcdProblem::new(mean_shift, sigma, rho, 0.5)?;
    let mut maxima = Vec::with_capacity(trials as usize);
    for t in 0..trials {
        let mut stream = rng.substream(t);
        let gamma = stream.geometric(rho)?;
        let mut post = 0.0f64;
        let mut peak = 0.0f64;
        for _ in 1..gamma {
            let x = stream.normal(0.0, sigma);
            post = shiryaev_update(&probe, post, x);
            peak = peak.max(post);
        }
        maxima.push(peak);
    }
    let h = stats::quantile(&maxima, 1.0 - alpha)?;
    // Quantile can land on 0 when alpha is huge and most Gammas are 1;
    // clamp into the open interval the problem type requires.
    Ok(h.clamp(1e-12, 1.0 - 1e-12))
}

/// One point of the false-alarm sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopePoint {
    pub alpha: f64,
    pub threshold: f64,
    pub profile: DelayProfile,
}

/// Log-log fit of P(Gamma <= tau <= Gamma+K) against alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeReport {
    pub k: u64,
    pub points: Vec<SlopePoint>,
    /// d ln P / d ln alpha over the sweep.
    pub slope: f64,
    pub intercept: f64,
}

/// Calibrate a threshold per alpha, measure the delay profile at each, and
/// fit the scaling exponent of P(detect within K of the change) vs alpha.
pub fn delay_slope_sweep(
    mean_shift: f64,
    sigma: f64,
    rho: f64,
    alphas: &[f64],
    k: u64,
    trials: u64,
    rng: &mut RngStream,
) -> Result<SlopeReport> {
    if alphas.len() < 2 {
        return Err(Error::Parameter("need at least two alpha values for a slope".into()));
    }
    let mut points = Vec::with_capacity(alphas.len());
    for (i, &alpha) in alphas.iter().enumerate() {
        let calib_trials = trials.max((200.0 / alpha) as u64);
        let mut calib_rng = rng.substream(1000 + i as u64);
        let threshold = calibrate_threshold_for_alpha(mean_shift, sigma, rho, alpha, calib_trials, &mut calib_rng)?;
        let problem = QcdProblem::new(mean_shift, sigma, rho, threshold)?;
        let mut measure_rng = rng.substream(2000 + i as u64);
        let profile = measure_delay_profile(&problem, trials, &[k], &mut measure_rng)?;
        points.push(SlopePoint { alpha, threshold, profile });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.alpha.ln()).collect();
    let ys: Vec<f64> = points
        .iter()
        .map(|p| p.profile.delay_within[0].prob.max(1e-12).ln())
        .collect();
    let (slope, intercept) = stats::linear_fit(&xs, &ys)?;
    Ok(SlopeReport { k, points, slope, intercept })
}

/// Matched-filter projection of a sample stream onto unit-energy slot
/// templates: one observation per `slot` samples, (1/sqrt(slot)) sum.
pub fn project_slots(samples: &[f64], slot: usize) -> Result<Vec<f64>> {
    if slot == 0 {
        return Err(Error::Parameter("slot length must be >= 1".into()));
    }
    let norm = (slot as f64).sqrt();
    Ok(samples
        .chunks_exact(slot)
        .map(|chunk| chunk.iter().sum::<f64>() / norm)
        .collect())
}

/// The two arms of the amplitude/grid scaling experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingArms {
    /// Amplitude A on decision grid T.
    pub base: DelayProfile,
    /// Amplitude A/beta on decision grid beta^2 T.
    pub scaled: DelayProfile,
    pub beta: f64,
    pub slot_base: usize,
    pub k: u64,
}

/// Simulate both arms at the raw-sample level.
///
/// Each arm draws per-sample Gaussians at its own amplitude, projects each
/// decision slot through a unit-energy matched filter, and runs the same
/// Shiryaev detector on the projections. Slot observations come out
/// N(A sqrt(T), sigma^2) in both arms because (A/beta) sqrt(beta^2 T) =
/// A sqrt(T), so the delay distributions (in slots; beta^2 K samples on the
/// scaled arm equals K slots) must agree up to Monte Carlo noise.
pub fn amplitude_scaling_experiment(
    amplitude: f64,
    sigma: f64,
    rho: f64,
    slot_base: usize,
    beta: f64,
    threshold: f64,
    k: u64,
    trials: u64,
    rng: &mut RngStream,
) -> Result<ScalingArms> {
    if !(beta >= 1.0) || !beta.is_finite() {
        return Err(Error::Parameter(format!("beta = {beta} must be >= 1")));
    }
    if slot_base == 0 {
        return Err(Error::Parameter("slot_base must be >= 1".into()));
    }
    let beta_sq = beta * beta;
    let slot_scaled = (beta_sq * slot_base as f64).round() as usize;
    if (slot_scaled as f64 - beta_sq * slot_base as f64).abs() > 1e-9 {
        return Err(Error::Parameter(format!(
            "beta^2 * slot_base = {} is not an integer sample count",
            beta_sq * slot_base as f64
        )));
    }
    let effective_shift = amplitude * (slot_base as f64).sqrt();
    let problem = QcdProblem::new(effective_shift, sigma, rho, threshold)?;

    let arm = |amp: f64, slot: usize, stream_tag: u64, rng: &mut RngStream| -> Result<DelayProfile> {
        let mut fa = 0u64;
        let mut truncated = 0u64;
        let mut within = 0u64;
        let mut delay_sum = 0.0;
        let mut delay_count = 0u64;
        for t in 0..trials {
            let mut stream = rng.substream(stream_tag * 1_000_003 + t);
            let gamma = stream.geometric(rho)?; // change point in slots
            let mut post = 0.0;
            let mut outcome = TrialOutcome { gamma, stop: None };
            for i in 1..=OBSERVATION_CAP {
                // Raw samples for this slot, then the matched-filter projection.
                let mean = if i >= gamma { amp } else { 0.0 };
                let mut acc = 0.0;
                for _ in 0..slot {
                    acc += stream.normal(mean, sigma);
                }
                let z = acc / (slot as f64).sqrt();
                post = shiryaev_update(&problem, post, z);
                if post >= problem.threshold {
                    outcome.stop = Some(i);
                    break;
                }
            }
            if outcome.false_alarm() {
                fa += 1;
            }
            if outcome.truncated() {
                truncated += 1;
            }
            if let Some(d) = outcome.delay() {
                delay_sum += d as f64;
                delay_count += 1;
                if d <= k {
                    within += 1;
                }
            }
        }
        Ok(DelayProfile {
            trials,
            p_fa: fa as f64 / trials as f64,
            p_fa_ci: wilson_ci(fa, trials),
            delay_within: vec![DelayPoint {
                k,
                prob: within as f64 / trials as f64,
                ci: wilson_ci(within, trials),
            }],
            mean_delay: if delay_count > 0 { delay_sum / delay_count as f64 } else { f64::NAN },
            truncated,
        })
    };

    let base = arm(amplitude, slot_base, 1, rng)?;
    let scaled = arm(amplitude / beta, slot_scaled, 2, rng)?;
    Ok(ScalingArms { base, scaled, beta, slot_base, k })
}

/// Lower bound on detecting an attacker with per-challenge false-alarm
/// probability alpha across k independent challenges: 1 - (1 - alpha)^k.
pub fn detection_bound(alpha: f64, k: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!("alpha = {alpha} outside [0, 1]")));
    }
    Ok(1.0 - (1.0 - alpha).powi(k as i32))
}

/// Empirical check of [`detection_bound`]: run k independent challenges per
/// trial and count trials where the attacker false-alarmed at least once.
#[derive(Debug, Clone, PartialEq)]
pub struct KChallengeReport {
    pub k: u64,
    pub trials: u64,
    /// Pooled per-challenge false-alarm rate.
    pub alpha_hat: f64,
    /// Fraction of trials with >= 1 false alarm, with Wilson CI.
    pub detected: f64,
    pub detected_ci: (f64, f64),
    /// 1 - (1 - alpha_hat)^k.
    pub bound: f64,
}

pub fn k_challenge_experiment(
    p: &QcdProblem,
    k: u64,
    trials: u64,
    rng: &mut RngStream,
) -> Result<KChallengeReport> {
    if k == 0 || trials == 0 {
        return Err(Error::Parameter("k and trials must be > 0".into()));
    }
    let mut fa_challenges = 0u64;
    let mut detected_trials = 0u64;
    for t in 0..trials {
        let mut caught = false;
        for c in 0..k {
            let mut stream = rng.substream(t * 1009 + c);
            let outcome = run_trial(p, &mut stream)?;
            if outcome.false_alarm() {
                fa_challenges += 1;
                caught = true;
            }
        }
        if caught {
            detected_trials += 1;
        }
    }
    let alpha_hat = fa_challenges as f64 / (trials * k) as f64;
    Ok(KChallengeReport {
        k,
        trials,
        alpha_hat,
        detected: detected_trials as f64 / trials as f64,
        detected_ci: wilson_ci(detected_trials, trials),
        bound: detection_bound(alpha_hat, k)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn likelihood_ratio_is_one_at_midpoint() {
        let p = QcdProblem::new(2.0, 1.0, 0.1, 0.9).unwrap();
        assert_eq!(likelihood_ratio(&p, 1.0), 1.0);
        assert!(likelihood_ratio(&p, 2.0) > 1.0);
        assert!(likelihood_ratio(&p, 0.0) < 1.0);
    }

    #[test]
    fn problem_rejects_bad_parameters() {
        assert!(QcdProblem::new(0.0, 1.0, 0.1, 0.9).is_err());
        assert!(QcdProblem::new(1.0, 0.0, 0.1, 0.9).is_err());
        assert!(QcdProblem::new(1.0, 1.0, 1.0, 0.9).is_err());
        assert!(QcdProblem::new(1.0, 1.0, 0.1, 1.0).is_err());
    }

    #[test]
    fn huge_snr_detects_exactly_at_the_change() {
        let p = QcdProblem::new(100.0, 1.0, 0.2, 0.99).unwrap();
        let rng = RngStream::new(3);
        let mut checked = 0;
        for t in 0..200 {
            let mut stream = rng.substream(t);
            let o = run_trial(&p, &mut stream).unwrap();
            if !o.false_alarm() {
                assert_eq!(o.stop, Some(o.gamma), "detection should land on Gamma");
                checked += 1;
            }
        }
        assert!(checked > 150);
    }

    #[test]
    fn calibrated_threshold_hits_target_false_alarm_rate() {
        // A = 1, sigma = 1, rho = 0.1, alpha = 0.01.
        let rng = RngStream::new(11);
        let h = calibrate_threshold_for_alpha(1.0, 1.0, 0.1, 0.01, 100_000, &mut rng.substream(1)).unwrap();
        let p = QcdProblem::new(1.0, 1.0, 0.1, h).unwrap();
        let profile = measure_delay_profile(&p, 100_000, &[1], &mut rng.substream(2)).unwrap();
        assert!(
            profile.p_fa_ci.0 <= 0.01 && 0.01 <= profile.p_fa_ci.1,
            "alpha 0.01 outside measured CI {:?}",
            profile.p_fa_ci
        );
        assert_eq!(profile.truncated, 0);
    }

    #[test]
    fn lower_threshold_never_stops_later() {
        let p_hi = QcdProblem::new(1.0, 1.0, 0.1, 0.95).unwrap();
        let p_lo = QcdProblem::new(1.0, 1.0, 0.1, 0.6).unwrap();
        let rng = RngStream::new(5);
        for t in 0..200 {
            let o_hi = run_trial(&p_hi, &mut rng.substream(t)).unwrap();
            let o_lo = run_trial(&p_lo, &mut rng.substream(t)).unwrap();
            if let (Some(hi), Some(lo)) = (o_hi.stop, o_lo.stop) {
                assert!(lo <= hi, "trial {t}: lo {lo} hi {hi}");
            }
        }
    }

    #[test]
    fn project_slots_scaling_identity_is_exact_for_beta_two() {
        // Noiseless: amplitude A over slots T and A/2 over slots 4T project
        // to identical observations.
        let a = 0.7;
        let t = 5usize;
        let base: Vec<f64> = vec![a; 4 * t];
        let scaled: Vec<f64> = vec![a / 2.0; 16 * t];
        let pb = project_slots(&base, t).unwrap();
        let ps = project_slots(&scaled, 4 * t).unwrap();
        assert_eq!(pb.len(), 4);
        assert_eq!(ps.len(), 4);
        for (x, y) in pb.iter().zip(&ps) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn detection_bound_reference_value() {
        // alpha = 0.1, K = 10.
        let b = detection_bound(0.1, 10).unwrap();
        assert!((b - 0.651_321_559_9).abs() < 1e-9, "bound {b}");
        assert_eq!(detection_bound(0.0, 5).unwrap(), 0.0);
        assert!(detection_bound(1.1, 5).is_err());
    }

    #[test]
    fn calibration_rejects_unresolvable_alpha() {
        let mut rng = RngStream::new(1);
        assert!(calibrate_threshold_for_alpha(1.0, 1.0, 0.1, 1e-4, 1_000, &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn posterior_stays_in_unit_interval(
            post in 0.0f64..1.0,
            x in -50.0f64..50.0,
            a in 0.1f64..5.0,
            rho in 0.01f64..0.9,
        ) {
            let p = QcdProblem::new(a, 1.0, rho, 0.9).unwrap();
            let next = shiryaev_update(&p, post, x);
            prop_assert!((0.0..=1.0).contains(&next), "posterior {next}");
        }

        #[test]
        fn posterior_monotone_in_observation(
            post in 0.0f64..0.999,
            x in -5.0f64..5.0,
        ) {
            let p = QcdProblem::new(1.5, 1.0, 0.1, 0.9).unwrap();
            let lo = shiryaev_update(&p, post, x);
            let hi = shiryaev_update(&p, post, x + 0.5);
            prop_assert!(hi >= lo, "bigger observation must not lower the posterior");
        }
    }
}
