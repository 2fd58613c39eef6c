//! Scenario configuration and end-to-end experiment execution.
//!
//! A scenario bundles one schedule, one plant, an optional attacker, the
//! time-domain detector, and the optional frequency-domain tracker, all
//! driven from a single seed. Configs are flat `key = value` text with
//! dotted namespaces so runs are diffable and reproducible; named presets
//! capture the canonical experiment setups.

use std::collections::{BTreeMap, BTreeSet};

use crate::adversary::{
    run_attacker, AttackRun, AttackWaveform, AttackerKind, AttackerModel, ChallengeDetector,
};
use crate::detect::{detect, estimate_onset_state_gated, DetectionReport, DetectorConfig};
use crate::dft::SlidingDft;
use crate::error::{Error, Result};
use crate::plant::{calibrate_threshold, simulate_sensor, StateSpaceModel, ToneRing};
use crate::resilient::{secure_frequency_estimate, FreqResidual, PeakConfig};
use crate::rng::RngStream;
use crate::schedule::{
    gen_confusion_schedule, gen_random_challenge_schedule, ChallengeSchedule, ConfusionParams,
    Phase, Segment,
};
use crate::signal::SignalTrace;

// ── configuration ──

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// Random alternating steady/silent periods.
    Random,
    /// One fixed steady-silent(-steady) pattern, for worked single-challenge runs.
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantKind {
    /// Resonant pickup tuned to the ring frequency.
    Resonant,
    /// Plain low-pass pickup.
    FirstOrder,
}

/// Full description of one simulation run. All durations are seconds; they
/// are converted to samples at `fs_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub fs_hz: f64,
    pub horizon_s: f64,

    pub ring_freq_hz: f64,
    pub ring_gain: f64,
    pub ring_phase_rad: f64,

    pub schedule_kind: ScheduleKind,
    pub schedule_amplitude: f64,
    pub schedule_mean_period_s: f64,
    pub schedule_rho: f64,
    pub schedule_grid_s: f64,
    /// > 1 inserts reduced-amplitude confusion segments after each silence.
    pub schedule_beta_amp: f64,
    pub single_steady_s: f64,
    pub single_silent_s: f64,
    pub single_tail_s: f64,

    pub plant_kind: PlantKind,
    pub plant_settle_s: f64,
    pub plant_sigma_w: f64,
    pub plant_sigma_v: f64,

    pub attacker_enabled: bool,
    pub attacker_kind: AttackerKindCfg,
    pub attacker_cancel_gain: f64,
    pub attacker_waveform: WaveformCfg,
    pub attacker_freq_hz: f64,
    pub attacker_phase_rad: f64,
    pub attacker_f_start_hz: f64,
    pub attacker_f_end_hz: f64,
    /// 0 means sweep over the whole horizon.
    pub attacker_sweep_duration_s: f64,
    pub attacker_amplitude: f64,
    pub attacker_tau_attack_s: f64,
    pub attacker_detector: DetectorCfg,
    pub attacker_delay_s: f64,
    pub attacker_alpha: f64,
    pub attacker_det_rho: f64,
    pub attacker_sigma_obs: f64,
    /// 0 means auto: the schedule's resumption amplitude.
    pub attacker_assumed_amplitude: f64,

    pub detector_window_t: usize,
    pub detector_quantile: f64,
    pub detector_calibration_challenges: usize,
    /// 0 means calibrate from an attack-free run at `detector_quantile`.
    pub detector_alarm_threshold: f64,
    /// Trailing seconds of output used to fit the challenge-instant state;
    /// 0 means auto (10 ms).
    pub detector_fit_window_s: f64,

    pub resilient_enabled: bool,
    pub resilient_n: usize,
    pub resilient_window_frames: usize,
    pub resilient_beta_freq: f64,
    pub resilient_band_lo_hz: f64,
    pub resilient_band_hi_hz: f64,
    pub resilient_guard_bins: usize,
    pub resilient_mad_factor: f64,
    pub resilient_min_separation_bins: usize,
    /// Attacked-bin flags expire after this long without re-confirmation.
    pub resilient_memory_s: f64,
    /// The onset-state fit distrusts samples within this long of a
    /// resumption, where a reactive interferer's turn-off tail lives.
    pub resilient_fit_guard_s: f64,
    /// Evaluate the tracker every this many samples once the DFT is warm.
    pub resilient_track_stride: usize,
    /// Emit spectrogram rows every this many samples (0 = none).
    pub resilient_spectro_stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackerKindCfg {
    Blind,
    Cancel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveformCfg {
    Fixed,
    Swept,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorCfg {
    Oracle,
    Qcd,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            fs_hz: 10_000.0,
            horizon_s: 2.0,
            ring_freq_hz: 71.0,
            ring_gain: 1.0,
            ring_phase_rad: 0.0,
            schedule_kind: ScheduleKind::Random,
            schedule_amplitude: 1.0,
            schedule_mean_period_s: 0.06,
            schedule_rho: 0.5,
            schedule_grid_s: 0.005,
            schedule_beta_amp: 0.0,
            single_steady_s: 0.005,
            single_silent_s: 0.015,
            single_tail_s: 0.01,
            plant_kind: PlantKind::Resonant,
            plant_settle_s: 0.035,
            plant_sigma_w: 0.0,
            plant_sigma_v: 0.02,
            attacker_enabled: false,
            attacker_kind: AttackerKindCfg::Blind,
            attacker_cancel_gain: 1.0,
            attacker_waveform: WaveformCfg::Fixed,
            attacker_freq_hz: 71.0,
            attacker_phase_rad: 0.0,
            attacker_f_start_hz: 60.0,
            attacker_f_end_hz: 400.0,
            attacker_sweep_duration_s: 0.0,
            attacker_amplitude: 1.0,
            attacker_tau_attack_s: 0.002,
            attacker_detector: DetectorCfg::Oracle,
            attacker_delay_s: 0.0,
            attacker_alpha: 0.01,
            attacker_det_rho: 0.001,
            attacker_sigma_obs: 0.3,
            attacker_assumed_amplitude: 0.0,
            detector_window_t: 50,
            detector_quantile: 0.95,
            detector_calibration_challenges: 200,
            detector_alarm_threshold: 0.0,
            detector_fit_window_s: 0.0,
            resilient_enabled: false,
            resilient_n: 5_000,
            resilient_window_frames: 25,
            resilient_beta_freq: 1.0,
            resilient_band_lo_hz: 10.0,
            resilient_band_hi_hz: 520.0,
            resilient_guard_bins: 1,
            resilient_mad_factor: 6.0,
            resilient_min_separation_bins: 3,
            resilient_memory_s: 0.5,
            resilient_fit_guard_s: 0.001,
            resilient_track_stride: 1,
            resilient_spectro_stride: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn horizon_samples(&self) -> usize {
        (self.horizon_s * self.fs_hz).round() as usize
    }

    fn seconds_to_samples(&self, s: f64) -> usize {
        (s * self.fs_hz).round() as usize
    }

    /// Check every field, reporting all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                problems.push(msg);
            }
        };
        need(self.fs_hz > 0.0 && self.fs_hz.is_finite(), format!("fs_hz = {} must be > 0", self.fs_hz));
        need(self.horizon_s > 0.0, format!("horizon_s = {} must be > 0", self.horizon_s));
        need(
            self.ring_freq_hz > 0.0 && self.ring_freq_hz < self.fs_hz / 2.0,
            format!("ring.freq_hz = {} must lie in (0, fs/2)", self.ring_freq_hz),
        );
        need(self.ring_gain.is_finite(), "ring.gain must be finite".into());
        need(
            self.schedule_amplitude > 0.0 && self.schedule_amplitude.is_finite(),
            format!("schedule.amplitude = {} must be > 0", self.schedule_amplitude),
        );
        match self.schedule_kind {
            ScheduleKind::Random => {
                need(
                    self.schedule_rho > 0.0 && self.schedule_rho <= 1.0,
                    format!("schedule.rho = {} outside (0, 1]", self.schedule_rho),
                );
                need(self.schedule_grid_s > 0.0, format!("schedule.grid_s = {} must be > 0", self.schedule_grid_s));
                need(
                    self.schedule_mean_period_s > 0.0,
                    format!("schedule.mean_period_s = {} must be > 0", self.schedule_mean_period_s),
                );
                need(
                    self.schedule_beta_amp == 0.0 || self.schedule_beta_amp > 1.0,
                    format!("schedule.beta_amp = {} must be 0 (off) or > 1", self.schedule_beta_amp),
                );
            }
            ScheduleKind::Single => {
                need(self.single_steady_s > 0.0, "schedule.single_steady_s must be > 0".into());
                need(self.single_silent_s > 0.0, "schedule.single_silent_s must be > 0".into());
                need(self.single_tail_s >= 0.0, "schedule.single_tail_s must be >= 0".into());
            }
        }
        need(self.plant_settle_s > 0.0, format!("plant.settle_s = {} must be > 0", self.plant_settle_s));
        need(self.plant_sigma_w >= 0.0, "plant.sigma_w must be >= 0".into());
        need(self.plant_sigma_v >= 0.0, "plant.sigma_v must be >= 0".into());
        if self.attacker_enabled {
            need(
                self.attacker_amplitude >= 0.0 && self.attacker_amplitude.is_finite(),
                format!("attacker.amplitude = {} must be >= 0", self.attacker_amplitude),
            );
            need(
                self.attacker_tau_attack_s > 0.0,
                format!("attacker.tau_attack_s = {} must be > 0", self.attacker_tau_attack_s),
            );
            match self.attacker_waveform {
                WaveformCfg::Fixed => need(
                    self.attacker_freq_hz >= 0.0 && self.attacker_freq_hz < self.fs_hz / 2.0,
                    format!("attacker.freq_hz = {} must lie in [0, fs/2)", self.attacker_freq_hz),
                ),
                WaveformCfg::Swept => {
                    need(
                        self.attacker_f_start_hz >= 0.0
                            && self.attacker_f_start_hz.max(self.attacker_f_end_hz) < self.fs_hz / 2.0,
                        format!(
                            "attacker sweep {}..{} Hz must stay below fs/2",
                            self.attacker_f_start_hz, self.attacker_f_end_hz
                        ),
                    );
                    need(
                        self.attacker_sweep_duration_s >= 0.0,
                        "attacker.sweep_duration_s must be >= 0 (0 = horizon)".into(),
                    );
                }
            }
            need(self.attacker_cancel_gain >= 0.0, "attacker.cancel_gain must be >= 0".into());
            match self.attacker_detector {
                DetectorCfg::Oracle => {
                    need(self.attacker_delay_s >= 0.0, "attacker.delay_s must be >= 0".into())
                }
                DetectorCfg::Qcd => {
                    need(
                        self.attacker_alpha > 0.0 && self.attacker_alpha < 1.0,
                        format!("attacker.alpha = {} outside (0, 1)", self.attacker_alpha),
                    );
                    need(
                        self.attacker_det_rho > 0.0 && self.attacker_det_rho < 1.0,
                        format!("attacker.det_rho = {} outside (0, 1)", self.attacker_det_rho),
                    );
                    need(self.attacker_sigma_obs > 0.0, "attacker.sigma_obs must be > 0".into());
                    need(
                        self.attacker_assumed_amplitude >= 0.0,
                        "attacker.assumed_amplitude must be >= 0 (0 = auto)".into(),
                    );
                }
            }
        }
        need(self.detector_window_t >= 1, "detector.window_t must be >= 1".into());
        need(
            self.detector_quantile > 0.0 && self.detector_quantile < 1.0,
            format!("detector.quantile = {} outside (0, 1)", self.detector_quantile),
        );
        need(
            self.detector_alarm_threshold >= 0.0,
            "detector.alarm_threshold must be >= 0 (0 = calibrate)".into(),
        );
        need(
            self.detector_fit_window_s >= 0.0 && self.detector_fit_window_s.is_finite(),
            "detector.fit_window_s must be >= 0 (0 = auto)".into(),
        );
        if self.detector_alarm_threshold == 0.0 {
            need(
                self.detector_calibration_challenges >= 100,
                format!(
                    "detector.calibration_challenges = {} must be >= 100 for calibration",
                    self.detector_calibration_challenges
                ),
            );
        }
        if self.resilient_enabled {
            need(self.resilient_n >= 8, format!("resilient.n = {} must be >= 8", self.resilient_n));
            need(self.resilient_window_frames >= 1, "resilient.window_frames must be >= 1".into());
            need(
                self.resilient_beta_freq > 0.0,
                format!("resilient.beta_freq = {} must be > 0", self.resilient_beta_freq),
            );
            need(
                self.resilient_band_lo_hz >= 0.0 && self.resilient_band_hi_hz > self.resilient_band_lo_hz,
                format!(
                    "resilient band {}..{} Hz must be increasing and nonnegative",
                    self.resilient_band_lo_hz, self.resilient_band_hi_hz
                ),
            );
            need(
                self.resilient_band_hi_hz <= self.fs_hz / 2.0,
                format!("resilient.band_hi_hz = {} must be <= fs/2", self.resilient_band_hi_hz),
            );
            need(self.resilient_memory_s >= 0.0, "resilient.memory_s must be >= 0".into());
            need(
                self.resilient_fit_guard_s >= 0.0 && self.resilient_fit_guard_s.is_finite(),
                "resilient.fit_guard_s must be finite and >= 0".into(),
            );
            need(self.resilient_track_stride >= 1, "resilient.track_stride must be >= 1".into());
            need(
                self.horizon_samples() > self.resilient_n,
                format!(
                    "horizon of {} samples cannot warm a {}-point DFT",
                    self.horizon_samples(),
                    self.resilient_n
                ),
            );
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// Serialize as the flat key = value config format.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# pycra-scenario v1\n");
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("seed", self.seed.to_string());
        kv("fs_hz", self.fs_hz.to_string());
        kv("horizon_s", self.horizon_s.to_string());
        kv("ring.freq_hz", self.ring_freq_hz.to_string());
        kv("ring.gain", self.ring_gain.to_string());
        kv("ring.phase_rad", self.ring_phase_rad.to_string());
        kv(
            "schedule.kind",
            match self.schedule_kind {
                ScheduleKind::Random => "random".into(),
                ScheduleKind::Single => "single".into(),
            },
        );
        kv("schedule.amplitude", self.schedule_amplitude.to_string());
        kv("schedule.mean_period_s", self.schedule_mean_period_s.to_string());
        kv("schedule.rho", self.schedule_rho.to_string());
        kv("schedule.grid_s", self.schedule_grid_s.to_string());
        kv("schedule.beta_amp", self.schedule_beta_amp.to_string());
        kv("schedule.single_steady_s", self.single_steady_s.to_string());
        kv("schedule.single_silent_s", self.single_silent_s.to_string());
        kv("schedule.single_tail_s", self.single_tail_s.to_string());
        kv(
            "plant.kind",
            match self.plant_kind {
                PlantKind::Resonant => "resonant".into(),
                PlantKind::FirstOrder => "first_order".into(),
            },
        );
        kv("plant.settle_s", self.plant_settle_s.to_string());
        kv("plant.sigma_w", self.plant_sigma_w.to_string());
        kv("plant.sigma_v", self.plant_sigma_v.to_string());
        kv("attacker.enabled", self.attacker_enabled.to_string());
        kv(
            "attacker.kind",
            match self.attacker_kind {
                AttackerKindCfg::Blind => "blind".into(),
                AttackerKindCfg::Cancel => "cancel".into(),
            },
        );
        kv("attacker.cancel_gain", self.attacker_cancel_gain.to_string());
        kv(
            "attacker.waveform",
            match self.attacker_waveform {
                WaveformCfg::Fixed => "fixed".into(),
                WaveformCfg::Swept => "swept".into(),
            },
        );
        kv("attacker.freq_hz", self.attacker_freq_hz.to_string());
        kv("attacker.phase_rad", self.attacker_phase_rad.to_string());
        kv("attacker.f_start_hz", self.attacker_f_start_hz.to_string());
        kv("attacker.f_end_hz", self.attacker_f_end_hz.to_string());
        kv("attacker.sweep_duration_s", self.attacker_sweep_duration_s.to_string());
        kv("attacker.amplitude", self.attacker_amplitude.to_string());
        kv("attacker.tau_attack_s", self.attacker_tau_attack_s.to_string());
        kv(
            "attacker.detector",
            match self.attacker_detector {
                DetectorCfg::Oracle => "oracle".into(),
                DetectorCfg::Qcd => "qcd".into(),
            },
        );
        kv("attacker.delay_s", self.attacker_delay_s.to_string());
        kv("attacker.alpha", self.attacker_alpha.to_string());
        kv("attacker.det_rho", self.attacker_det_rho.to_string());
        kv("attacker.sigma_obs", self.attacker_sigma_obs.to_string());
        kv("attacker.assumed_amplitude", self.attacker_assumed_amplitude.to_string());
        kv("detector.window_t", self.detector_window_t.to_string());
        kv("detector.quantile", self.detector_quantile.to_string());
        kv(
            "detector.calibration_challenges",
            self.detector_calibration_challenges.to_string(),
        );
        kv("detector.alarm_threshold", self.detector_alarm_threshold.to_string());
        kv("detector.fit_window_s", self.detector_fit_window_s.to_string());
        kv("resilient.enabled", self.resilient_enabled.to_string());
        kv("resilient.n", self.resilient_n.to_string());
        kv("resilient.window_frames", self.resilient_window_frames.to_string());
        kv("resilient.beta_freq", self.resilient_beta_freq.to_string());
        kv("resilient.band_lo_hz", self.resilient_band_lo_hz.to_string());
        kv("resilient.band_hi_hz", self.resilient_band_hi_hz.to_string());
        kv("resilient.guard_bins", self.resilient_guard_bins.to_string());
        kv("resilient.mad_factor", self.resilient_mad_factor.to_string());
        kv(
            "resilient.min_separation_bins",
            self.resilient_min_separation_bins.to_string(),
        );
        kv("resilient.memory_s", self.resilient_memory_s.to_string());
        kv("resilient.fit_guard_s", self.resilient_fit_guard_s.to_string());
        kv("resilient.track_stride", self.resilient_track_stride.to_string());
        kv("resilient.spectro_stride", self.resilient_spectro_stride.to_string());
        s
    }
}

// ── key = value parsing ──

/// Flat config text, parsed into a map with every problem collected rather
/// than bailing at the first.
#[derive(Debug)]
pub struct KvMap {
    map: BTreeMap<String, String>,
    used: BTreeSet<String>,
    problems: Vec<String>,
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected `key = value`, got {line:?}"),
                });
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(Error::Parse { line: lineno + 1, message: "empty key".into() });
            }
            if map.insert(key.clone(), value).is_some() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("duplicate key {key:?}"),
                });
            }
        }
        Ok(Self { map, used: BTreeSet::new(), problems: Vec::new() })
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        self.used.insert(key.to_string());
        self.map.get(key).cloned()
    }

    pub fn f64(&mut self, key: &str, default: f64) -> f64 {
        match self.raw(key) {
            None => default,
            Some(v) => v.parse().unwrap_or_else(|_| {
                self.problems.push(format!("{key}: {v:?} is not a number"));
                default
            }),
        }
    }

    pub fn u64(&mut self, key: &str, default: u64) -> u64 {
        match self.raw(key) {
            None => default,
            Some(v) => v.parse().unwrap_or_else(|_| {
                self.problems.push(format!("{key}: {v:?} is not a nonnegative integer"));
                default
            }),
        }
    }

    pub fn usize(&mut self, key: &str, default: usize) -> usize {
        self.u64(key, default as u64) as usize
    }

    pub fn bool(&mut self, key: &str, default: bool) -> bool {
        match self.raw(key) {
            None => default,
            Some(v) => match v.as_str() {
                "true" => true,
                "false" => false,
                _ => {
                    self.problems.push(format!("{key}: {v:?} is not true/false"));
                    default
                }
            },
        }
    }

    /// Value constrained to a fixed set of names.
    pub fn choice(&mut self, key: &str, options: &[&str], default: &str) -> String {
        match self.raw(key) {
            None => default.to_string(),
            Some(v) => {
                if options.contains(&v.as_str()) {
                    v
                } else {
                    self.problems
                        .push(format!("{key}: {v:?} is not one of {options:?}"));
                    default.to_string()
                }
            }
        }
    }

    /// Comma-separated list of numbers.
    pub fn f64_list(&mut self, key: &str, default: &[f64]) -> Vec<f64> {
        match self.raw(key) {
            None => default.to_vec(),
            Some(v) => {
                let mut out = Vec::new();
                for piece in v.split(',') {
                    match piece.trim().parse::<f64>() {
                        Ok(x) => out.push(x),
                        Err(_) => {
                            self.problems
                                .push(format!("{key}: {:?} is not a number", piece.trim()));
                        }
                    }
                }
                out
            }
        }
    }

    /// Fail if any problem was recorded or any key went unused.
    /// Consume the map and return every accumulated problem, including
    /// unknown keys. Callers merge these with validation problems so one
    /// parse reports everything wrong with a file.
    pub fn finish(mut self) -> Vec<String> {
        for key in self.map.keys() {
            if !self.used.contains(key) {
                self.problems.push(format!("unknown key {key:?}"));
            }
        }
        self.problems
    }
}

/// Combine parse-stage problems with a validation outcome into one error.
pub(crate) fn merge_problems(mut problems: Vec<String>, validation: Result<()>) -> Result<()> {
    match validation {
        Ok(()) => {}
        Err(Error::Validation(more)) => problems.extend(more),
        Err(other) => return Err(other),
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(problems))
    }
}

/// Parse a scenario config, collecting every violation.
pub fn parse_scenario_config(text: &str) -> Result<ScenarioConfig> {
    let mut kv = KvMap::parse(text)?;
    let d = ScenarioConfig::default();
    let cfg = ScenarioConfig {
        seed: kv.u64("seed", d.seed),
        fs_hz: kv.f64("fs_hz", d.fs_hz),
        horizon_s: kv.f64("horizon_s", d.horizon_s),
        ring_freq_hz: kv.f64("ring.freq_hz", d.ring_freq_hz),
        ring_gain: kv.f64("ring.gain", d.ring_gain),
        ring_phase_rad: kv.f64("ring.phase_rad", d.ring_phase_rad),
        schedule_kind: match kv.choice("schedule.kind", &["random", "single"], "random").as_str() {
            "single" => ScheduleKind::Single,
            _ => ScheduleKind::Random,
        },
        schedule_amplitude: kv.f64("schedule.amplitude", d.schedule_amplitude),
        schedule_mean_period_s: kv.f64("schedule.mean_period_s", d.schedule_mean_period_s),
        schedule_rho: kv.f64("schedule.rho", d.schedule_rho),
        schedule_grid_s: kv.f64("schedule.grid_s", d.schedule_grid_s),
        schedule_beta_amp: kv.f64("schedule.beta_amp", d.schedule_beta_amp),
        single_steady_s: kv.f64("schedule.single_steady_s", d.single_steady_s),
        single_silent_s: kv.f64("schedule.single_silent_s", d.single_silent_s),
        single_tail_s: kv.f64("schedule.single_tail_s", d.single_tail_s),
        plant_kind: match kv.choice("plant.kind", &["resonant", "first_order"], "resonant").as_str() {
            "first_order" => PlantKind::FirstOrder,
            _ => PlantKind::Resonant,
        },
        plant_settle_s: kv.f64("plant.settle_s", d.plant_settle_s),
        plant_sigma_w: kv.f64("plant.sigma_w", d.plant_sigma_w),
        plant_sigma_v: kv.f64("plant.sigma_v", d.plant_sigma_v),
        attacker_enabled: kv.bool("attacker.enabled", d.attacker_enabled),
        attacker_kind: match kv.choice("attacker.kind", &["blind", "cancel"], "blind").as_str() {
            "cancel" => AttackerKindCfg::Cancel,
            _ => AttackerKindCfg::Blind,
        },
        attacker_cancel_gain: kv.f64("attacker.cancel_gain", d.attacker_cancel_gain),
        attacker_waveform: match kv.choice("attacker.waveform", &["fixed", "swept"], "fixed").as_str() {
            "swept" => WaveformCfg::Swept,
            _ => WaveformCfg::Fixed,
        },
        attacker_freq_hz: kv.f64("attacker.freq_hz", d.attacker_freq_hz),
        attacker_phase_rad: kv.f64("attacker.phase_rad", d.attacker_phase_rad),
        attacker_f_start_hz: kv.f64("attacker.f_start_hz", d.attacker_f_start_hz),
        attacker_f_end_hz: kv.f64("attacker.f_end_hz", d.attacker_f_end_hz),
        attacker_sweep_duration_s: kv.f64("attacker.sweep_duration_s", d.attacker_sweep_duration_s),
        attacker_amplitude: kv.f64("attacker.amplitude", d.attacker_amplitude),
        attacker_tau_attack_s: kv.f64("attacker.tau_attack_s", d.attacker_tau_attack_s),
        attacker_detector: match kv.choice("attacker.detector", &["oracle", "qcd"], "oracle").as_str() {
            "qcd" => DetectorCfg::Qcd,
            _ => DetectorCfg::Oracle,
        },
        attacker_delay_s: kv.f64("attacker.delay_s", d.attacker_delay_s),
        attacker_alpha: kv.f64("attacker.alpha", d.attacker_alpha),
        attacker_det_rho: kv.f64("attacker.det_rho", d.attacker_det_rho),
        attacker_sigma_obs: kv.f64("attacker.sigma_obs", d.attacker_sigma_obs),
        attacker_assumed_amplitude: kv.f64("attacker.assumed_amplitude", d.attacker_assumed_amplitude),
        detector_window_t: kv.usize("detector.window_t", d.detector_window_t),
        detector_quantile: kv.f64("detector.quantile", d.detector_quantile),
        detector_calibration_challenges: kv.usize(
            "detector.calibration_challenges",
            d.detector_calibration_challenges,
        ),
        detector_alarm_threshold: kv.f64("detector.alarm_threshold", d.detector_alarm_threshold),
        detector_fit_window_s: kv.f64("detector.fit_window_s", d.detector_fit_window_s),
        resilient_enabled: kv.bool("resilient.enabled", d.resilient_enabled),
        resilient_n: kv.usize("resilient.n", d.resilient_n),
        resilient_window_frames: kv.usize("resilient.window_frames", d.resilient_window_frames),
        resilient_beta_freq: kv.f64("resilient.beta_freq", d.resilient_beta_freq),
        resilient_band_lo_hz: kv.f64("resilient.band_lo_hz", d.resilient_band_lo_hz),
        resilient_band_hi_hz: kv.f64("resilient.band_hi_hz", d.resilient_band_hi_hz),
        resilient_guard_bins: kv.usize("resilient.guard_bins", d.resilient_guard_bins),
        resilient_mad_factor: kv.f64("resilient.mad_factor", d.resilient_mad_factor),
        resilient_min_separation_bins: kv.usize(
            "resilient.min_separation_bins",
            d.resilient_min_separation_bins,
        ),
        resilient_memory_s: kv.f64("resilient.memory_s", d.resilient_memory_s),
        resilient_fit_guard_s: kv.f64("resilient.fit_guard_s", d.resilient_fit_guard_s),
        resilient_track_stride: kv.usize("resilient.track_stride", d.resilient_track_stride),
        resilient_spectro_stride: kv.usize("resilient.spectro_stride", d.resilient_spectro_stride),
    };
    merge_problems(kv.finish(), cfg.validate())?;
    Ok(cfg)
}

// ── build blocks ──

/// Deterministic sub-stream tags for one scenario run.
mod streams {
    pub const SCHEDULE: u64 = 1;
    pub const ATTACKER: u64 = 2;
    pub const PLANT: u64 = 3;
    pub const CALIB_SCHEDULE: u64 = 4;
    pub const CALIB_PLANT: u64 = 5;
}

pub fn build_schedule(cfg: &ScenarioConfig, rng: &mut RngStream) -> Result<ChallengeSchedule> {
    let horizon = cfg.horizon_samples();
    match cfg.schedule_kind {
        ScheduleKind::Single => {
            let mut segments = vec![
                Segment {
                    phase: Phase::Steady,
                    amplitude: cfg.schedule_amplitude,
                    duration_samples: cfg.seconds_to_samples(cfg.single_steady_s),
                },
                Segment {
                    phase: Phase::Silent,
                    amplitude: 0.0,
                    duration_samples: cfg.seconds_to_samples(cfg.single_silent_s),
                },
            ];
            let tail = cfg.seconds_to_samples(cfg.single_tail_s);
            if tail > 0 {
                segments.push(Segment {
                    phase: Phase::Steady,
                    amplitude: cfg.schedule_amplitude,
                    duration_samples: tail,
                });
            }
            ChallengeSchedule::new(segments)
        }
        ScheduleKind::Random => {
            let grid = cfg.seconds_to_samples(cfg.schedule_grid_s).max(1);
            let mean_period = cfg.seconds_to_samples(cfg.schedule_mean_period_s).max(2);
            if cfg.schedule_beta_amp > 1.0 {
                let mean_silent = grid as f64 / cfg.schedule_rho;
                let mean_steady = ((mean_period as f64 - mean_silent).max(2.0)) as usize;
                let params = ConfusionParams::with_default_confusion_window(
                    cfg.schedule_amplitude,
                    cfg.schedule_beta_amp,
                    cfg.schedule_rho,
                    grid,
                    mean_steady,
                );
                gen_confusion_schedule(rng, horizon, &params)
            } else {
                gen_random_challenge_schedule(
                    rng,
                    horizon,
                    mean_period,
                    cfg.schedule_rho,
                    grid,
                    cfg.schedule_amplitude,
                )
            }
        }
    }
}

pub fn build_model(cfg: &ScenarioConfig) -> Result<StateSpaceModel> {
    match cfg.plant_kind {
        PlantKind::Resonant => StateSpaceModel::resonant(
            cfg.ring_freq_hz,
            cfg.plant_settle_s,
            cfg.fs_hz,
            cfg.plant_sigma_w,
            cfg.plant_sigma_v,
        ),
        PlantKind::FirstOrder => StateSpaceModel::from_settle_time(
            cfg.plant_settle_s,
            cfg.fs_hz,
            cfg.plant_sigma_w,
            cfg.plant_sigma_v,
        ),
    }
}

pub fn build_attacker_model(cfg: &ScenarioConfig) -> Result<Option<AttackerModel>> {
    if !cfg.attacker_enabled {
        return Ok(None);
    }
    let waveform = match cfg.attacker_waveform {
        WaveformCfg::Fixed => AttackWaveform::FixedSine {
            freq_hz: cfg.attacker_freq_hz,
            phase_rad: cfg.attacker_phase_rad,
        },
        WaveformCfg::Swept => AttackWaveform::SweptSine {
            f_start_hz: cfg.attacker_f_start_hz,
            f_end_hz: cfg.attacker_f_end_hz,
            duration_s: if cfg.attacker_sweep_duration_s > 0.0 {
                cfg.attacker_sweep_duration_s
            } else {
                cfg.horizon_s
            },
        },
    };
    let detector = match cfg.attacker_detector {
        DetectorCfg::Oracle => ChallengeDetector::Oracle {
            delay_samples: cfg.seconds_to_samples(cfg.attacker_delay_s),
        },
        DetectorCfg::Qcd => ChallengeDetector::Qcd {
            alpha: cfg.attacker_alpha,
            rho: cfg.attacker_det_rho,
            sigma_obs: cfg.attacker_sigma_obs,
            assumed_on_amplitude: if cfg.attacker_assumed_amplitude > 0.0 {
                cfg.attacker_assumed_amplitude
            } else if cfg.schedule_beta_amp > 1.0 {
                cfg.schedule_amplitude / cfg.schedule_beta_amp
            } else {
                cfg.schedule_amplitude
            },
        },
    };
    let model = AttackerModel {
        kind: match cfg.attacker_kind {
            AttackerKindCfg::Blind => AttackerKind::BlindInjection,
            AttackerKindCfg::Cancel => AttackerKind::Cancellation { cancel_gain: cfg.attacker_cancel_gain },
        },
        waveform,
        amplitude: cfg.attacker_amplitude,
        tau_attack_s: cfg.attacker_tau_attack_s,
        detector,
    };
    model.validate()?;
    Ok(Some(model))
}

/// Attack-free calibration run: same generator parameters on independent
/// streams, threshold at the configured quantile of per-challenge g_max.
pub fn calibrate_alarm_threshold(cfg: &ScenarioConfig) -> Result<f64> {
    if cfg.detector_alarm_threshold > 0.0 {
        return Ok(cfg.detector_alarm_threshold);
    }
    let root = RngStream::with_stream(cfg.seed, 0);
    let mut sched_rng = root.substream(streams::CALIB_SCHEDULE);
    let mut plant_rng = root.substream(streams::CALIB_PLANT);
    let schedule = match cfg.schedule_kind {
        ScheduleKind::Single => {
            // Repeat the fixed pattern until enough challenges accumulate.
            let steady = cfg.seconds_to_samples(cfg.single_steady_s).max(1);
            let silent = cfg.seconds_to_samples(cfg.single_silent_s).max(1);
            let mut segments = Vec::new();
            for _ in 0..cfg.detector_calibration_challenges {
                segments.push(Segment {
                    phase: Phase::Steady,
                    amplitude: cfg.schedule_amplitude,
                    duration_samples: steady,
                });
                segments.push(Segment { phase: Phase::Silent, amplitude: 0.0, duration_samples: silent });
            }
            ChallengeSchedule::new(segments)?
        }
        ScheduleKind::Random => {
            let mut c = cfg.clone();
            // Size the horizon to yield roughly the requested challenge count.
            c.horizon_s = cfg.schedule_mean_period_s * (cfg.detector_calibration_challenges as f64) * 1.25;
            build_schedule(&c, &mut sched_rng)?
        }
    };
    let mut model = build_model(cfg)?;
    let ring = ToneRing::new(cfg.ring_freq_hz, cfg.ring_gain, cfg.ring_phase_rad)?;
    let y = simulate_sensor(&mut model, &schedule, &ring, None, cfg.fs_hz, &mut plant_rng)?;
    let probe = DetectorConfig::new(cfg.detector_window_t, f64::MAX / 4.0)?
        .with_fit_window(cfg.seconds_to_samples(cfg.detector_fit_window_s));
    let report = detect(&y, &schedule, &model, cfg.ring_freq_hz, &probe, None)?;
    let stats: Vec<f64> = report
        .records
        .iter()
        .filter(|r| !r.skipped)
        .map(|r| r.g_max)
        .collect();
    calibrate_threshold(&stats, cfg.detector_quantile)
}

// ── artifacts ──

/// One secure-estimate evaluation instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub sample: usize,
    /// None until the tracker has produced its first authenticated estimate.
    pub freq_hz: Option<f64>,
    /// False when the value is held from an earlier frame rather than
    /// freshly authenticated.
    pub fresh: bool,
}

/// One spectrogram cell (emitted at the configured stride).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectroRow {
    pub frame: usize,
    pub bin: usize,
    pub freq_hz: f64,
    pub magnitude: f64,
    pub g: f64,
    pub attacked: bool,
}

/// Attacked-bin classification for one silent window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowClassification {
    pub start: usize,
    pub len: usize,
    /// Bins flagged at any frame within this window.
    pub attacked: BTreeSet<usize>,
}

#[derive(Debug, Clone)]
pub struct ResilienceArtifacts {
    pub track: Vec<TrackPoint>,
    pub spectro: Vec<SpectroRow>,
    pub windows: Vec<WindowClassification>,
    pub n: usize,
    pub bin_lo: usize,
    pub bin_hi: usize,
    pub bin_width_hz: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioArtifacts {
    pub config: ScenarioConfig,
    pub schedule: ChallengeSchedule,
    pub y: SignalTrace,
    pub attack: Option<AttackRun>,
    pub alarm_threshold: f64,
    pub report: DetectionReport,
    pub resilience: Option<ResilienceArtifacts>,
}

// ── execution ──

fn run_resilience(
    cfg: &ScenarioConfig,
    schedule: &ChallengeSchedule,
    model: &StateSpaceModel,
    y: &SignalTrace,
) -> Result<ResilienceArtifacts> {
    let n = cfg.resilient_n;
    let fs = cfg.fs_hz;
    let bin_lo = ((cfg.resilient_band_lo_hz * n as f64 / fs).floor() as usize).min(n / 2);
    let bin_hi = ((cfg.resilient_band_hi_hz * n as f64 / fs).ceil() as usize).min(n / 2);
    let mut live = SlidingDft::with_band(n, bin_lo, bin_hi)?;
    let peak_cfg = PeakConfig {
        mad_factor: cfg.resilient_mad_factor,
        min_separation_bins: cfg.resilient_min_separation_bins,
        guard_bins: cfg.resilient_guard_bins,
    };
    let memory = cfg.seconds_to_samples(cfg.resilient_memory_s);
    let min_fit = model.order() + 2;
    let auto_fit = ((0.01 * fs).round() as usize).max(4 * min_fit);
    let cfg_fit = cfg.seconds_to_samples(cfg.detector_fit_window_s);

    let windows = schedule.silent_windows();
    let mut window_iter = windows.iter().enumerate().peekable();
    let mut residual: Option<(usize, FreqResidual, Vec<f64>)> = None; // (window end, tracker, predicted decay)
    let mut classifications: Vec<WindowClassification> = Vec::new();
    let mut last_flagged: BTreeMap<usize, usize> = BTreeMap::new();
    let mut track = Vec::new();
    let mut spectro = Vec::new();
    let mut held: Option<f64> = None;

    for i in 0..y.len() {
        live.update(y.samples[i]);

        // Entering a silent window: snapshot the spectrum and the predicted
        // decay so the residual starts at exactly zero.
        if let Some(&(_, win)) = window_iter.peek() {
            if i == win.start {
                if live.is_warm() && win.start >= min_fit {
                    let want = if cfg_fit == 0 { auto_fit } else { cfg_fit.max(min_fit) };
                    let m = want.min(win.start);
                    let drive: Vec<f64> = (win.start - m..win.start)
                        .map(|k| {
                            let (phase, amplitude) = schedule.at(k);
                            if phase.is_actuated() {
                                amplitude
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    match estimate_onset_state_gated(
                        model,
                        &y.samples[win.start - m..win.start],
                        &drive,
                        cfg.ring_freq_hz,
                        fs,
                        cfg.seconds_to_samples(cfg.resilient_fit_guard_s),
                    ) {
                        Ok(x_hat) => {
                            let decay = model.free_response(&x_hat, win.len + 1)?[1..].to_vec();
                            let res = FreqResidual::begin(
                                &live,
                                cfg.resilient_window_frames,
                                cfg.resilient_beta_freq,
                            )?;
                            residual = Some((win.end(), res, decay));
                            classifications.push(WindowClassification {
                                start: win.start,
                                len: win.len,
                                attacked: BTreeSet::new(),
                            });
                        }
                        // A window the state fit cannot serve is simply not
                        // tracked; detection handles its own skip logic.
                        Err(Error::DegenerateFit(_)) => {}
                        Err(e) => return Err(e),
                    }
                }
                window_iter.next();
            }
        }

        let mut in_window = false;
        if let Some((end, res, decay)) = residual.as_mut() {
            let win_start = *end - decay.len();
            let j = i - win_start;
            res.step(&live, decay[j])?;
            in_window = true;
            // The probe bin and its neighbors are never classified as
            // attacked: they always carry legitimate energy, and any error
            // in the predicted decay concentrates exactly there. A spoof at
            // the probe frequency is invisible to frequency discrimination
            // by construction; the time-domain detector owns that case.
            let ring_bin = (cfg.ring_freq_hz * n as f64 / fs).round() as usize;
            let keepout = peak_cfg.guard_bins + 2;
            let mut flagged = res.attacked();
            flagged.retain(|&bin| bin.abs_diff(ring_bin) > keepout);
            if !flagged.is_empty() {
                for &bin in &flagged {
                    last_flagged.insert(bin, i);
                }
                if let Some(cls) = classifications.last_mut() {
                    cls.attacked.extend(flagged.iter().copied());
                }
            }
            if i + 1 == *end {
                residual = None;
            }
        }

        if !live.is_warm() {
            continue;
        }

        // Age out stale flags, keep the rest as the active masked set.
        let active: BTreeSet<usize> = last_flagged
            .iter()
            .filter(|(_, &at)| i - at <= memory)
            .map(|(&bin, _)| bin)
            .collect();

        if i % cfg.resilient_track_stride == 0 {
            let mags = live.magnitudes();
            let est = secure_frequency_estimate(&mags, bin_lo, &active, &peak_cfg, n, fs);
            let point = match est {
                Some(e) => {
                    held = Some(e.freq_hz);
                    TrackPoint { sample: i, freq_hz: Some(e.freq_hz), fresh: true }
                }
                None => TrackPoint { sample: i, freq_hz: held, fresh: false },
            };
            track.push(point);
        }

        if in_window && cfg.resilient_spectro_stride > 0 && i % cfg.resilient_spectro_stride == 0 {
            let mags = live.magnitudes();
            let g = residual
                .as_ref()
                .and_then(|(_, res, _)| res.g())
                .unwrap_or_else(|| vec![0.0; mags.len()]);
            for (k, (&m, &gk)) in mags.iter().zip(&g).enumerate() {
                let bin = bin_lo + k;
                spectro.push(SpectroRow {
                    frame: i,
                    bin,
                    freq_hz: bin as f64 * fs / n as f64,
                    magnitude: m,
                    g: gk,
                    attacked: active.contains(&bin),
                });
            }
        }
    }

    Ok(ResilienceArtifacts {
        track,
        spectro,
        windows: classifications,
        n,
        bin_lo,
        bin_hi,
        bin_width_hz: fs / n as f64,
    })
}

/// Execute one scenario end to end. Deterministic in (config, seed).
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioArtifacts> {
    cfg.validate()?;
    let root = RngStream::with_stream(cfg.seed, 0);
    let mut sched_rng = root.substream(streams::SCHEDULE);
    let attacker_rng = root.substream(streams::ATTACKER);
    let mut plant_rng = root.substream(streams::PLANT);

    let schedule = build_schedule(cfg, &mut sched_rng)?;
    let mut model = build_model(cfg)?;
    let ring = ToneRing::new(cfg.ring_freq_hz, cfg.ring_gain, cfg.ring_phase_rad)?;
    let attack = match build_attacker_model(cfg)? {
        Some(m) => Some(run_attacker(m, &schedule, &ring, cfg.fs_hz, attacker_rng)?),
        None => None,
    };
    let y = simulate_sensor(
        &mut model,
        &schedule,
        &ring,
        attack.as_ref().map(|a| &a.attack),
        cfg.fs_hz,
        &mut plant_rng,
    )?;
    let alarm_threshold = calibrate_alarm_threshold(cfg)?;
    let det_cfg = DetectorConfig::new(cfg.detector_window_t, alarm_threshold)?
        .with_fit_window(cfg.seconds_to_samples(cfg.detector_fit_window_s));
    let truth = vec![cfg.attacker_enabled; schedule.silent_windows().len()];
    let report = detect(&y, &schedule, &model, cfg.ring_freq_hz, &det_cfg, Some(&truth))?;
    let resilience = if cfg.resilient_enabled {
        Some(run_resilience(cfg, &schedule, &model, &y)?)
    } else {
        None
    };
    Ok(ScenarioArtifacts {
        config: cfg.clone(),
        schedule,
        y,
        attack,
        alarm_threshold,
        report,
        resilience,
    })
}

// ── presets ──

pub const PRESET_NAMES: [&str; 7] = ["fig5", "fig6", "fig9", "fig10", "fig11", "fig12", "fig14"];

/// Canonical experiment setups, addressable by name from the CLI.
pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::default();
    match name {
        // Single worked challenge: challenge at 5 ms, sluggish spoofer keeps
        // transmitting into the silence, residual alarm fires.
        "fig5" => {
            cfg.schedule_kind = ScheduleKind::Single;
            cfg.horizon_s = 0.03;
            cfg.single_steady_s = 0.005;
            cfg.single_silent_s = 0.015;
            cfg.single_tail_s = 0.01;
            cfg.attacker_enabled = true;
            cfg.attacker_kind = AttackerKindCfg::Blind;
            cfg.attacker_waveform = WaveformCfg::Fixed;
            cfg.attacker_freq_hz = 71.0;
            cfg.attacker_amplitude = 1.0;
            cfg.attacker_tau_attack_s = 0.002;
            cfg.attacker_detector = DetectorCfg::Oracle;
            cfg.attacker_delay_s = 0.004;
            cfg.detector_window_t = 50;
        }
        // Two-tone residual separation: true tone stays clean while the
        // attack tone's residual grows.
        "fig6" => {
            cfg.horizon_s = 4.0;
            cfg.ring_freq_hz = 50.0;
            cfg.schedule_mean_period_s = 0.12;
            cfg.schedule_grid_s = 0.02;
            cfg.attacker_enabled = true;
            cfg.attacker_waveform = WaveformCfg::Fixed;
            cfg.attacker_freq_hz = 120.0;
            cfg.attacker_amplitude = 0.8;
            cfg.attacker_tau_attack_s = 0.02;
            cfg.attacker_detector = DetectorCfg::Oracle;
            cfg.attacker_delay_s = 0.01;
            cfg.detector_fit_window_s = 0.1;
            cfg.resilient_enabled = true;
            // 10 kHz / 2000 puts both the 50 Hz probe (bin 10) and the
            // 120 Hz spoof (bin 24) on bin centers.
            cfg.resilient_n = 2_000;
            cfg.resilient_window_frames = 40;
            cfg.resilient_beta_freq = 40.0;
            cfg.resilient_band_hi_hz = 200.0;
            cfg.resilient_spectro_stride = 50;
            cfg.resilient_track_stride = 10;
        }
        // Detection-accuracy sweep base point (tau grid applied on top).
        // A broadband pickup and a fast attack carrier keep every challenge
        // informative: the attacker's shutdown lag leaves a burst whose
        // in-window energy grows with the sampling rate.
        "fig9" => {
            cfg.horizon_s = 0.6;
            cfg.schedule_mean_period_s = 0.06;
            cfg.schedule_rho = 1.0;
            cfg.schedule_grid_s = 0.005;
            cfg.plant_kind = PlantKind::FirstOrder;
            cfg.plant_settle_s = 0.0005;
            cfg.plant_sigma_v = 0.08;
            cfg.attacker_enabled = true;
            cfg.attacker_waveform = WaveformCfg::Fixed;
            cfg.attacker_freq_hz = 2_000.0;
            cfg.attacker_amplitude = 1.0;
            cfg.attacker_tau_attack_s = 0.0007;
            cfg.attacker_detector = DetectorCfg::Oracle;
            cfg.attacker_delay_s = 0.0;
            cfg.detector_window_t = 30;
            cfg.detector_calibration_challenges = 1_000;
        }
        // Attacked-bin classification base point. The spoof frequency sits
        // on a bin center so ground truth is unambiguous, and the reaction
        // delay is kept short so leaked in-silence energy is governed by
        // the lag being swept.
        "fig10" => {
            cfg.horizon_s = 4.0;
            cfg.schedule_mean_period_s = 0.1;
            cfg.schedule_grid_s = 0.012;
            cfg.attacker_enabled = true;
            cfg.attacker_waveform = WaveformCfg::Fixed;
            cfg.attacker_freq_hz = 152.0;
            cfg.attacker_amplitude = 2.0;
            cfg.attacker_tau_attack_s = 0.002;
            cfg.attacker_detector = DetectorCfg::Oracle;
            cfg.attacker_delay_s = 0.0005;
            cfg.detector_fit_window_s = 0.1;
            cfg.resilient_enabled = true;
            cfg.resilient_n = 2_500;
            cfg.resilient_window_frames = 40;
            cfg.resilient_beta_freq = 30.0;
            cfg.resilient_track_stride = 10;
        }
        // Swept attack vs the 71 Hz ring; secure estimate must hold at 71.
        "fig11" => {
            cfg.horizon_s = 6.0;
            cfg.schedule_mean_period_s = 0.05;
            cfg.schedule_grid_s = 0.008;
            cfg.schedule_rho = 0.6;
            cfg.attacker_enabled = true;
            cfg.attacker_waveform = WaveformCfg::Swept;
            cfg.attacker_f_start_hz = 60.0;
            cfg.attacker_f_end_hz = 400.0;
            cfg.attacker_amplitude = 1.2;
            cfg.attacker_tau_attack_s = 0.002;
            // Sweeping jammer does not bother hiding: it transmits through
            // the challenges (a very slow oracle keeps the gate open).
            cfg.attacker_detector = DetectorCfg::Oracle;
            cfg.attacker_delay_s = 10.0;
            cfg.detector_fit_window_s = 0.1;
            cfg.resilient_enabled = true;
            cfg.resilient_n = 5_000;
            cfg.resilient_window_frames = 30;
            cfg.resilient_beta_freq = 50.0;
            cfg.resilient_track_stride = 10;
        }
        // Advanced cancellation with a fixed-frequency spoof; the true tone
        // reappears right after each resumption.
        "fig12" => {
            cfg.horizon_s = 6.0;
            cfg.schedule_mean_period_s = 0.05;
            cfg.schedule_grid_s = 0.008;
            cfg.schedule_rho = 0.6;
            cfg.attacker_enabled = true;
            cfg.attacker_kind = AttackerKindCfg::Cancel;
            cfg.attacker_cancel_gain = 1.0;
            cfg.attacker_waveform = WaveformCfg::Fixed;
            cfg.attacker_freq_hz = 180.0;
            cfg.attacker_amplitude = 2.0;
            cfg.attacker_tau_attack_s = 0.002;
            cfg.attacker_detector = DetectorCfg::Oracle;
            cfg.attacker_delay_s = 0.003;
            cfg.detector_fit_window_s = 0.1;
            cfg.resilient_enabled = true;
            cfg.resilient_n = 5_000;
            cfg.resilient_window_frames = 30;
            cfg.resilient_beta_freq = 15.0;
            cfg.resilient_track_stride = 10;
        }
        // RFID eavesdropper base point (the coupling grid is applied by the
        // rfid experiment runner).
        "fig14" => {
            cfg.fs_hz = 1_000_000.0;
            cfg.horizon_s = 0.02;
            cfg.ring_freq_hz = 125_000.0;
            cfg.schedule_mean_period_s = 0.002;
            cfg.schedule_grid_s = 0.0002;
            cfg.detector_window_t = 50;
            cfg.plant_sigma_v = 0.005;
        }
        other => {
            return Err(Error::Parameter(format!(
                "unknown preset {other:?}; expected one of {PRESET_NAMES:?}"
            )))
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_text() {
        let cfg = preset("fig11").unwrap();
        let text = cfg.to_text();
        let back = parse_scenario_config(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn parser_collects_every_problem_at_once() {
        let text = "fs_hz = banana\nschedule.rho = 7\nno.such.key = 1\n";
        let err = parse_scenario_config(text).unwrap_err();
        match err {
            Error::Validation(problems) => {
                assert!(problems.len() >= 3, "{problems:?}");
                assert!(problems.iter().any(|p| p.contains("fs_hz")));
                assert!(problems.iter().any(|p| p.contains("schedule.rho")));
                assert!(problems.iter().any(|p| p.contains("no.such.key")));
            }
            other => panic!("expected Validation, got {other:?}"),
        }
    }

    #[test]
    fn parser_rejects_malformed_lines_with_location() {
        let err = KvMap::parse("a = 1\nnot a kv line\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected Parse, got {other:?}"),
        }
    }

    #[test]
    fn all_presets_build_and_validate() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            cfg.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(preset("fig7").is_err());
    }

    #[test]
    fn noiseless_unattacked_scenario_raises_no_alarms() {
        let mut cfg = ScenarioConfig::default();
        cfg.horizon_s = 1.0;
        cfg.plant_sigma_v = 0.0;
        cfg.detector_alarm_threshold = 1e-12;
        let art = run_scenario(&cfg).unwrap();
        assert!(art.report.records.len() >= 5, "{} challenges", art.report.records.len());
        assert_eq!(art.report.alarm_count(), 0);
    }

    #[test]
    fn single_challenge_preset_fires_its_alarm() {
        let art = run_scenario(&preset("fig5").unwrap()).unwrap();
        assert_eq!(art.report.records.len(), 1);
        let rec = art.report.records[0];
        assert!(!rec.skipped);
        assert!((rec.t_challenge_s - 0.005).abs() < 1e-9, "challenge at {}", rec.t_challenge_s);
        assert!(rec.alarm, "g_max {} vs threshold {}", rec.g_max, art.alarm_threshold);
    }

    #[test]
    fn scenario_is_deterministic_in_config_and_seed() {
        let mut cfg = ScenarioConfig::default();
        cfg.horizon_s = 0.5;
        cfg.attacker_enabled = true;
        cfg.detector_alarm_threshold = 1e-3;
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a.y.samples, b.y.samples);
        assert_eq!(a.report.records.len(), b.report.records.len());
        for (ra, rb) in a.report.records.iter().zip(&b.report.records) {
            assert_eq!(ra.g_max.to_bits(), rb.g_max.to_bits());
            assert_eq!(ra.alarm, rb.alarm);
        }
        let mut cfg2 = cfg.clone();
        cfg2.seed = 2;
        let c = run_scenario(&cfg2).unwrap();
        assert_ne!(a.y.samples, c.y.samples, "different seed must change the run");
    }
}
