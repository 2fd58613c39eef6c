//! Multi-run experiments: detection-accuracy sweeps, attacked-bin
//! classification, ROC evaluation, the RFID eavesdropper study, and the
//! change-detection verification experiments.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::plant::{calibrate_threshold, rfid_expected, rfid_observe, CouplingScene};
use crate::qcd::{
    amplitude_scaling_experiment, calibrate_threshold_for_alpha, delay_slope_sweep,
    k_challenge_experiment, KChallengeReport, QcdProblem, ScalingArms, SlopeReport,
};
use crate::rng::RngStream;
use crate::scenario::{
    calibrate_alarm_threshold, merge_problems, run_scenario, KvMap, ScenarioConfig, WaveformCfg,
};
use crate::schedule::gen_random_challenge_schedule;
use crate::stats::{wilson_ci, Counts};

/// One deterministic per-run seed from (experiment seed, arm, trial).
fn run_seed(seed: u64, arm: u64, trial: u64) -> u64 {
    let mut x = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [arm, trial] {
        x = x.wrapping_add(v).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x ^= x >> 31;
    }
    x
}

// ── detection-accuracy sweep ──

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub tau_attack_s: f64,
    pub fs_hz: f64,
    pub counts: Counts,
    /// Per-challenge balanced accuracy: (TPR + TNR) / 2.
    pub accuracy: f64,
    pub f1: f64,
    /// Wilson 95% CI on the raw fraction of correctly classified challenges.
    pub ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    pub trials: usize,
    pub warnings: Vec<String>,
}

/// Detection accuracy against attacker lag, at the config's sample rate.
///
/// The threshold is calibrated once from an attack-free run, then one shared
/// set of `trials` clean runs supplies the negative (unattacked) challenges
/// for every lag point; each lag adds `trials` attacked runs. Challenges are
/// pooled across runs.
pub fn tau_sweep(base: &ScenarioConfig, taus: &[f64], trials: usize) -> Result<SweepReport> {
    if taus.is_empty() {
        return Err(Error::Parameter("tau list must not be empty".into()));
    }
    if trials == 0 {
        return Err(Error::Parameter("trials must be > 0".into()));
    }
    for &tau in taus {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::Parameter(format!("tau_attack_s = {tau} must be > 0")));
        }
    }
    if !base.attacker_enabled {
        return Err(Error::Parameter("tau_sweep requires attacker.enabled = true".into()));
    }
    base.validate()?;

    let mut warnings = Vec::new();
    if trials < 30 {
        warnings.push(format!(
            "trials = {trials} is below 30; confidence intervals will be wide"
        ));
    }

    let threshold = calibrate_alarm_threshold(base)?;

    // Shared clean arm: the same negatives feed every lag point.
    let mut null_alarms = 0u64;
    let mut null_total = 0u64;
    for t in 0..trials {
        let mut cfg = base.clone();
        cfg.attacker_enabled = false;
        cfg.detector_alarm_threshold = threshold;
        cfg.seed = run_seed(base.seed, 0, t as u64);
        let art = run_scenario(&cfg)?;
        for rec in art.report.records.iter().filter(|r| !r.skipped) {
            null_total += 1;
            if rec.alarm {
                null_alarms += 1;
            }
        }
    }
    if null_total == 0 {
        return Err(Error::Parameter(
            "clean runs produced no scoreable challenges; lengthen the horizon".into(),
        ));
    }

    let mut points = Vec::with_capacity(taus.len());
    for (ti, &tau) in taus.iter().enumerate() {
        let mut counts = Counts::default();
        counts.fp = null_alarms;
        counts.tn = null_total - null_alarms;
        for t in 0..trials {
            let mut cfg = base.clone();
            cfg.attacker_tau_attack_s = tau;
            cfg.detector_alarm_threshold = threshold;
            cfg.seed = run_seed(base.seed, 1 + ti as u64, t as u64);
            let art = run_scenario(&cfg)?;
            for rec in art.report.records.iter().filter(|r| !r.skipped) {
                counts.add(rec.alarm, true);
            }
        }
        let correct = counts.tp + counts.tn;
        let total = counts.tp + counts.tn + counts.fp + counts.fn_;
        points.push(SweepPoint {
            tau_attack_s: tau,
            fs_hz: base.fs_hz,
            counts,
            accuracy: counts.balanced_accuracy(),
            f1: counts.f1(),
            ci: wilson_ci(correct, total),
        });
    }

    // Longer lag means more leaked energy, so accuracy should not fall.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].tau_attack_s.total_cmp(&points[b].tau_attack_s));
    for pair in order.windows(2) {
        let (lo, hi) = (&points[pair[0]], &points[pair[1]]);
        if hi.accuracy + 1e-12 < lo.accuracy {
            warnings.push(format!(
                "accuracy fell from {:.3} at tau = {} s to {:.3} at tau = {} s",
                lo.accuracy, lo.tau_attack_s, hi.accuracy, hi.tau_attack_s
            ));
        }
    }

    Ok(SweepReport { points, trials, warnings })
}

// ── attacked-bin classification sweep ──

#[derive(Debug, Clone, PartialEq)]
pub struct BinClassPoint {
    pub tau_attack_s: f64,
    pub fs_hz: f64,
    pub windows: u64,
    /// Fraction of silent windows where some bin within one bin of the
    /// attack frequency was flagged.
    pub tpr: f64,
    pub tpr_ci: (f64, f64),
    /// Fraction of out-of-tolerance band bins flagged, pooled over windows.
    pub fpr: f64,
    pub fpr_ci: (f64, f64),
}

/// Attacked-bin classification quality against attacker lag.
///
/// Requires a fixed-frequency attacker so the ground-truth bin is known;
/// tolerance is one DFT bin either side.
pub fn resilience_sweep(
    base: &ScenarioConfig,
    taus: &[f64],
    trials: usize,
) -> Result<Vec<BinClassPoint>> {
    if taus.is_empty() || trials == 0 {
        return Err(Error::Parameter("need at least one tau and one trial".into()));
    }
    if !base.attacker_enabled || !base.resilient_enabled {
        return Err(Error::Parameter(
            "resilience_sweep requires attacker.enabled and resilient.enabled".into(),
        ));
    }
    if base.attacker_waveform != WaveformCfg::Fixed {
        return Err(Error::Parameter(
            "resilience_sweep requires a fixed-frequency attack so truth bins are known".into(),
        ));
    }
    base.validate()?;
    let threshold = calibrate_alarm_threshold(base)?;

    let mut points = Vec::with_capacity(taus.len());
    for (ti, &tau) in taus.iter().enumerate() {
        if !(tau > 0.0) {
            return Err(Error::Parameter(format!("tau_attack_s = {tau} must be > 0")));
        }
        let mut windows = 0u64;
        let mut hits = 0u64;
        let mut fp_bins = 0u64;
        let mut negative_bins = 0u64;
        for t in 0..trials {
            let mut cfg = base.clone();
            cfg.attacker_tau_attack_s = tau;
            cfg.detector_alarm_threshold = threshold;
            cfg.seed = run_seed(base.seed, 100 + ti as u64, t as u64);
            let art = run_scenario(&cfg)?;
            let res = art.resilience.as_ref().expect("resilient was enabled");
            let attack_bin =
                (cfg.attacker_freq_hz * res.n as f64 / cfg.fs_hz).round() as usize;
            let truth: BTreeSet<usize> = (attack_bin.saturating_sub(1)..=attack_bin + 1)
                .filter(|b| (res.bin_lo..=res.bin_hi).contains(b))
                .collect();
            if truth.is_empty() {
                return Err(Error::Parameter(format!(
                    "attack frequency {} Hz falls outside the analysis band",
                    cfg.attacker_freq_hz
                )));
            }
            let band_size = (res.bin_hi - res.bin_lo + 1) as u64;
            for w in &res.windows {
                windows += 1;
                if w.attacked.iter().any(|b| truth.contains(b)) {
                    hits += 1;
                }
                fp_bins += w.attacked.iter().filter(|b| !truth.contains(b)).count() as u64;
                negative_bins += band_size - truth.len() as u64;
            }
        }
        if windows == 0 {
            return Err(Error::Parameter(
                "no warm silent windows were classified; lengthen the horizon".into(),
            ));
        }
        points.push(BinClassPoint {
            tau_attack_s: tau,
            fs_hz: base.fs_hz,
            windows,
            tpr: hits as f64 / windows as f64,
            tpr_ci: wilson_ci(hits, windows),
            fpr: fp_bins as f64 / negative_bins as f64,
            fpr_ci: wilson_ci(fp_bins, negative_bins),
        });
    }
    Ok(points)
}

// ── ROC ──

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// Thresholds descending, so the curve runs (0,0) -> (1,1).
    pub points: Vec<RocPoint>,
    /// Trapezoidal area; ties get half credit, matching the rank statistic.
    pub auc: f64,
}

/// ROC over score/label pairs, alarm rule `score >= threshold`.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Parameter("no scores".into()));
    }
    crate::error::ensure_all_finite("roc scores", scores)?;
    let positives = labels.iter().filter(|&&l| l).count() as f64;
    let negatives = labels.len() as f64 - positives;
    if positives == 0.0 || negatives == 0.0 {
        return Err(Error::UndefinedRoc(
            "scores contain only one class; both labels are required".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        // Consume the whole tie group so each threshold appears once.
        let mut j = i;
        while j < order.len() && scores[order[j]] == threshold {
            if labels[order[j]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            j += 1;
        }
        let prev = *points.last().expect("seeded with the origin");
        let point = RocPoint { threshold, fpr: fp / negatives, tpr: tp / positives };
        auc += (point.fpr - prev.fpr) * (point.tpr + prev.tpr) / 2.0;
        points.push(point);
        i = j;
    }
    Ok(RocCurve { points, auc })
}

// ── RFID eavesdropper study ──

#[derive(Debug, Clone, PartialEq)]
pub struct RfidConfig {
    pub seed: u64,
    pub fs_hz: f64,
    pub horizon_s: f64,
    pub carrier_freq_hz: f64,
    pub amplitude: f64,
    pub kappa_tag: f64,
    pub tag_bits: usize,
    pub bit_rate_hz: f64,
    pub sigma_v: f64,
    pub kappa_eve_grid: Vec<f64>,
    pub runs: usize,
    pub quantile: f64,
    pub mean_period_s: f64,
    pub rho: f64,
    pub grid_s: f64,
}

impl Default for RfidConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            fs_hz: 1_000_000.0,
            horizon_s: 0.02,
            carrier_freq_hz: 125_000.0,
            amplitude: 1.0,
            kappa_tag: 0.2,
            tag_bits: 16,
            bit_rate_hz: 4_000.0,
            sigma_v: 0.005,
            kappa_eve_grid: vec![0.0, 0.002, 0.005, 0.01, 0.02, 0.05],
            runs: 1_000,
            quantile: 0.95,
            mean_period_s: 0.002,
            rho: 0.5,
            grid_s: 0.0002,
        }
    }
}

impl RfidConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.fs_hz > 0.0) {
            problems.push(format!("rfid.fs_hz = {} must be > 0", self.fs_hz));
        }
        if !(self.carrier_freq_hz > 0.0 && self.carrier_freq_hz < self.fs_hz / 2.0) {
            problems.push(format!(
                "rfid.carrier_freq_hz = {} must lie in (0, fs/2)",
                self.carrier_freq_hz
            ));
        }
        if !(self.horizon_s > 0.0) {
            problems.push("rfid.horizon_s must be > 0".into());
        }
        if !(self.amplitude > 0.0) {
            problems.push("rfid.amplitude must be > 0".into());
        }
        let max_eve = self.kappa_eve_grid.iter().copied().fold(0.0, f64::max);
        if self.kappa_tag < 0.0 || self.kappa_eve_grid.iter().any(|&k| k < 0.0) {
            problems.push("coupling coefficients must be >= 0".into());
        }
        if self.kappa_tag + max_eve >= 1.0 {
            problems.push(format!(
                "kappa_tag + max kappa_eve = {} must be < 1",
                self.kappa_tag + max_eve
            ));
        }
        if self.kappa_eve_grid.is_empty() {
            problems.push("rfid.kappa_eve_grid must not be empty".into());
        }
        if self.tag_bits > 0 && !(self.bit_rate_hz > 0.0) {
            problems.push("rfid.bit_rate_hz must be > 0".into());
        }
        if self.sigma_v < 0.0 {
            problems.push("rfid.sigma_v must be >= 0".into());
        }
        if self.runs == 0 {
            problems.push("rfid.runs must be >= 1".into());
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            problems.push(format!("rfid.quantile = {} outside (0, 1)", self.quantile));
        }
        if !(self.mean_period_s > 0.0 && self.grid_s > 0.0) {
            problems.push("rfid schedule periods must be > 0".into());
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            problems.push(format!("rfid.rho = {} outside (0, 1]", self.rho));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

impl RfidConfig {
    pub fn to_text(&self) -> String {
        let mut s = String::from("# pycra-rfid v1\n");
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("seed", self.seed.to_string());
        kv("rfid.fs_hz", self.fs_hz.to_string());
        kv("rfid.horizon_s", self.horizon_s.to_string());
        kv("rfid.carrier_freq_hz", self.carrier_freq_hz.to_string());
        kv("rfid.amplitude", self.amplitude.to_string());
        kv("rfid.kappa_tag", self.kappa_tag.to_string());
        kv("rfid.tag_bits", self.tag_bits.to_string());
        kv("rfid.bit_rate_hz", self.bit_rate_hz.to_string());
        kv("rfid.sigma_v", self.sigma_v.to_string());
        let grid: Vec<String> = self.kappa_eve_grid.iter().map(|k| k.to_string()).collect();
        kv("rfid.kappa_eve_grid", grid.join(", "));
        kv("rfid.runs", self.runs.to_string());
        kv("rfid.quantile", self.quantile.to_string());
        kv("rfid.mean_period_s", self.mean_period_s.to_string());
        kv("rfid.rho", self.rho.to_string());
        kv("rfid.grid_s", self.grid_s.to_string());
        s
    }
}

pub fn parse_rfid_config(text: &str) -> Result<RfidConfig> {
    let mut kv = KvMap::parse(text)?;
    let d = RfidConfig::default();
    let cfg = RfidConfig {
        seed: kv.u64("seed", d.seed),
        fs_hz: kv.f64("rfid.fs_hz", d.fs_hz),
        horizon_s: kv.f64("rfid.horizon_s", d.horizon_s),
        carrier_freq_hz: kv.f64("rfid.carrier_freq_hz", d.carrier_freq_hz),
        amplitude: kv.f64("rfid.amplitude", d.amplitude),
        kappa_tag: kv.f64("rfid.kappa_tag", d.kappa_tag),
        tag_bits: kv.usize("rfid.tag_bits", d.tag_bits),
        bit_rate_hz: kv.f64("rfid.bit_rate_hz", d.bit_rate_hz),
        sigma_v: kv.f64("rfid.sigma_v", d.sigma_v),
        kappa_eve_grid: kv.f64_list("rfid.kappa_eve_grid", &d.kappa_eve_grid),
        runs: kv.usize("rfid.runs", d.runs),
        quantile: kv.f64("rfid.quantile", d.quantile),
        mean_period_s: kv.f64("rfid.mean_period_s", d.mean_period_s),
        rho: kv.f64("rfid.rho", d.rho),
        grid_s: kv.f64("rfid.grid_s", d.grid_s),
    };
    merge_problems(kv.finish(), cfg.validate())?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfidPoint {
    pub kappa_eve: f64,
    pub runs: u64,
    pub alarms: u64,
    pub alarm_rate: f64,
    pub ci: (f64, f64),
    /// Mean per-run residual power statistic.
    pub mean_g: f64,
    /// RMS residual displacement attributable to the eavesdropper, in units
    /// of the measurement noise floor.
    pub displacement_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfidReport {
    pub threshold: f64,
    /// Mean clean-run statistic (the noise floor in power units).
    pub noise_g: f64,
    pub quantile: f64,
    pub points: Vec<RfidPoint>,
}

/// Per-run statistic: mean squared deviation between the observed pickup and
/// the defender's expected (eavesdropper-free, noise-free) pickup over the
/// actuated samples.
fn rfid_run_statistic(cfg: &RfidConfig, kappa_eve: f64, seed: u64) -> Result<f64> {
    let rng = RngStream::new(seed);
    let mut sched_rng = rng.substream(1);
    let mut bit_rng = rng.substream(2);
    let mut noise_rng = rng.substream(3);
    let horizon = (cfg.horizon_s * cfg.fs_hz).round() as usize;
    let schedule = gen_random_challenge_schedule(
        &mut sched_rng,
        horizon,
        ((cfg.mean_period_s * cfg.fs_hz).round() as usize).max(2),
        cfg.rho,
        ((cfg.grid_s * cfg.fs_hz).round() as usize).max(1),
        cfg.amplitude,
    )?;
    let tag_bits: Vec<bool> = (0..cfg.tag_bits).map(|_| bit_rng.next_f64() < 0.5).collect();
    let scene = CouplingScene {
        carrier_freq_hz: cfg.carrier_freq_hz,
        kappa_tag: cfg.kappa_tag,
        tag_bits,
        bit_rate_hz: cfg.bit_rate_hz,
        kappa_eve,
        sigma_v: cfg.sigma_v,
    };
    let observed = rfid_observe(&scene, &schedule, cfg.fs_hz, &mut noise_rng)?;
    let expected = rfid_expected(&scene, &schedule, cfg.fs_hz)?;
    let mut sum = 0.0;
    let mut n = 0u64;
    for (i, (phase, _)) in schedule.iter_samples().enumerate() {
        if phase.is_actuated() {
            let z = observed.samples[i] - expected.samples[i];
            sum += z * z;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Parameter("schedule had no actuated samples".into()));
    }
    Ok(sum / n as f64)
}

/// Eavesdropper detectability across a coupling grid, with the alarm
/// threshold calibrated on an independent clean arm.
pub fn rfid_experiment(cfg: &RfidConfig) -> Result<RfidReport> {
    cfg.validate()?;
    let calib_runs = 200usize.max(cfg.runs / 5);
    let mut calib_stats = Vec::with_capacity(calib_runs);
    for t in 0..calib_runs {
        calib_stats.push(rfid_run_statistic(cfg, 0.0, run_seed(cfg.seed, 9000, t as u64))?);
    }
    let threshold = calibrate_threshold(&calib_stats, cfg.quantile)?;
    let noise_g = crate::stats::mean(&calib_stats);

    let mut points = Vec::with_capacity(cfg.kappa_eve_grid.len());
    for (gi, &kappa) in cfg.kappa_eve_grid.iter().enumerate() {
        let mut alarms = 0u64;
        let mut g_sum = 0.0;
        for t in 0..cfg.runs {
            let g = rfid_run_statistic(cfg, kappa, run_seed(cfg.seed, 1 + gi as u64, t as u64))?;
            if g > threshold {
                alarms += 1;
            }
            g_sum += g;
        }
        let runs = cfg.runs as u64;
        let mean_g = g_sum / cfg.runs as f64;
        let excess = (mean_g - noise_g).max(0.0);
        let displacement_ratio = if cfg.sigma_v > 0.0 {
            excess.sqrt() / cfg.sigma_v
        } else if excess > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        points.push(RfidPoint {
            kappa_eve: kappa,
            runs,
            alarms,
            alarm_rate: alarms as f64 / cfg.runs as f64,
            ci: wilson_ci(alarms, runs),
            mean_g,
            displacement_ratio,
        });
    }
    Ok(RfidReport { threshold, noise_g, quantile: cfg.quantile, points })
}

// ── change-detection experiment dispatch ──

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QcdMode {
    /// Reaction-probability scaling against the false-alarm budget.
    Slope,
    /// Amplitude/grid trade: (A, T) vs (A/beta, beta^2 T).
    Scaling,
    /// Multi-challenge detection against 1 - (1 - alpha)^K.
    Bound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcdConfig {
    pub seed: u64,
    pub mode: QcdMode,
    pub mean_shift: f64,
    pub sigma: f64,
    pub rho: f64,
    pub alphas: Vec<f64>,
    pub k: u64,
    pub ks: Vec<u64>,
    pub trials: u64,
    pub beta: f64,
    pub slot_base: usize,
    /// 0 means calibrate from `alpha`.
    pub threshold: f64,
    pub alpha: f64,
}

impl Default for QcdConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            mode: QcdMode::Slope,
            mean_shift: 0.5,
            sigma: 1.0,
            rho: 0.05,
            alphas: vec![0.1, 0.01, 0.001],
            k: 1,
            ks: vec![1, 5, 20],
            trials: 10_000,
            beta: 2.0,
            slot_base: 25,
            threshold: 0.0,
            alpha: 0.05,
        }
    }
}

impl QcdConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.mean_shift > 0.0) {
            problems.push(format!("qcd.mean_shift = {} must be > 0", self.mean_shift));
        }
        if !(self.sigma > 0.0) {
            problems.push(format!("qcd.sigma = {} must be > 0", self.sigma));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            problems.push(format!("qcd.rho = {} outside (0, 1)", self.rho));
        }
        if self.trials == 0 {
            problems.push("qcd.trials must be >= 1".into());
        }
        if self.k == 0 {
            problems.push("qcd.k must be >= 1".into());
        }
        match self.mode {
            QcdMode::Slope => {
                if self.alphas.len() < 2 {
                    problems.push("qcd.alphas needs at least two values for a slope".into());
                }
                if self.alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
                    problems.push("qcd.alphas must all lie in (0, 1)".into());
                }
            }
            QcdMode::Scaling => {
                if !(self.beta >= 1.0) {
                    problems.push(format!("qcd.beta = {} must be >= 1", self.beta));
                }
                if self.slot_base == 0 {
                    problems.push("qcd.slot_base must be >= 1".into());
                }
                if self.threshold == 0.0 && !(self.alpha > 0.0 && self.alpha < 1.0) {
                    problems.push(format!("qcd.alpha = {} outside (0, 1)", self.alpha));
                }
                if !(self.threshold >= 0.0 && self.threshold < 1.0) {
                    problems.push(format!("qcd.threshold = {} outside [0, 1)", self.threshold));
                }
            }
            QcdMode::Bound => {
                if self.ks.is_empty() || self.ks.contains(&0) {
                    problems.push("qcd.ks must be nonempty positive integers".into());
                }
                if !(self.alpha > 0.0 && self.alpha < 1.0) {
                    problems.push(format!("qcd.alpha = {} outside (0, 1)", self.alpha));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

impl QcdConfig {
    pub fn to_text(&self) -> String {
        let mut s = String::from("# pycra-qcd v1\n");
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("seed", self.seed.to_string());
        kv(
            "qcd.mode",
            match self.mode {
                QcdMode::Slope => "slope".into(),
                QcdMode::Scaling => "scaling".into(),
                QcdMode::Bound => "bound".into(),
            },
        );
        kv("qcd.mean_shift", self.mean_shift.to_string());
        kv("qcd.sigma", self.sigma.to_string());
        kv("qcd.rho", self.rho.to_string());
        let alphas: Vec<String> = self.alphas.iter().map(|a| a.to_string()).collect();
        kv("qcd.alphas", alphas.join(", "));
        kv("qcd.k", self.k.to_string());
        let ks: Vec<String> = self.ks.iter().map(|k| k.to_string()).collect();
        kv("qcd.ks", ks.join(", "));
        kv("qcd.trials", self.trials.to_string());
        kv("qcd.beta", self.beta.to_string());
        kv("qcd.slot_base", self.slot_base.to_string());
        kv("qcd.threshold", self.threshold.to_string());
        kv("qcd.alpha", self.alpha.to_string());
        s
    }
}

pub fn parse_qcd_config(text: &str) -> Result<QcdConfig> {
    let mut kv = KvMap::parse(text)?;
    let d = QcdConfig::default();
    let mode = match kv.choice("qcd.mode", &["slope", "scaling", "bound"], "slope").as_str() {
        "scaling" => QcdMode::Scaling,
        "bound" => QcdMode::Bound,
        _ => QcdMode::Slope,
    };
    let ks_raw = kv.f64_list("qcd.ks", &d.ks.iter().map(|&k| k as f64).collect::<Vec<_>>());
    let cfg = QcdConfig {
        seed: kv.u64("seed", d.seed),
        mode,
        mean_shift: kv.f64("qcd.mean_shift", d.mean_shift),
        sigma: kv.f64("qcd.sigma", d.sigma),
        rho: kv.f64("qcd.rho", d.rho),
        alphas: kv.f64_list("qcd.alphas", &d.alphas),
        k: kv.u64("qcd.k", d.k),
        ks: ks_raw
            .iter()
            .map(|&k| if k >= 1.0 && k.fract() == 0.0 { k as u64 } else { 0 })
            .collect(),
        trials: kv.u64("qcd.trials", d.trials),
        beta: kv.f64("qcd.beta", d.beta),
        slot_base: kv.usize("qcd.slot_base", d.slot_base),
        threshold: kv.f64("qcd.threshold", d.threshold),
        alpha: kv.f64("qcd.alpha", d.alpha),
    };
    merge_problems(kv.finish(), cfg.validate())?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub enum QcdOutcome {
    Slope(SlopeReport),
    Scaling(ScalingArms),
    Bound { threshold: f64, alpha: f64, reports: Vec<KChallengeReport> },
}

/// Run the configured change-detection experiment.
pub fn run_qcd(cfg: &QcdConfig) -> Result<QcdOutcome> {
    cfg.validate()?;
    let mut rng = RngStream::with_stream(cfg.seed, 11);
    match cfg.mode {
        QcdMode::Slope => Ok(QcdOutcome::Slope(delay_slope_sweep(
            cfg.mean_shift,
            cfg.sigma,
            cfg.rho,
            &cfg.alphas,
            cfg.k,
            cfg.trials,
            &mut rng,
        )?)),
        QcdMode::Scaling => {
            let threshold = if cfg.threshold > 0.0 {
                cfg.threshold
            } else {
                // Per-slot observations are N(A sqrt(T), sigma) after the
                // matched filter, so calibrate at that effective shift.
                let effective = cfg.mean_shift * (cfg.slot_base as f64).sqrt();
                let calib_trials = cfg.trials.max((200.0 / cfg.alpha).ceil() as u64);
                let mut calib_rng = rng.substream(500);
                calibrate_threshold_for_alpha(
                    effective,
                    cfg.sigma,
                    cfg.rho,
                    cfg.alpha,
                    calib_trials,
                    &mut calib_rng,
                )?
            };
            Ok(QcdOutcome::Scaling(amplitude_scaling_experiment(
                cfg.mean_shift,
                cfg.sigma,
                cfg.rho,
                cfg.slot_base,
                cfg.beta,
                threshold,
                cfg.k,
                cfg.trials,
                &mut rng,
            )?))
        }
        QcdMode::Bound => {
            let calib_trials = cfg.trials.max((200.0 / cfg.alpha).ceil() as u64);
            let mut calib_rng = rng.substream(500);
            let threshold = calibrate_threshold_for_alpha(
                cfg.mean_shift,
                cfg.sigma,
                cfg.rho,
                cfg.alpha,
                calib_trials,
                &mut calib_rng,
            )?;
            let problem = QcdProblem::new(cfg.mean_shift, cfg.sigma, cfg.rho, threshold)?;
            let mut reports = Vec::with_capacity(cfg.ks.len());
            for (i, &k) in cfg.ks.iter().enumerate() {
                let mut k_rng = rng.substream(600 + i as u64);
                reports.push(k_challenge_experiment(&problem, k, cfg.trials, &mut k_rng)?);
            }
            Ok(QcdOutcome::Bound { threshold, alpha: cfg.alpha, reports })
        }
    }
}
