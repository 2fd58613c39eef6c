//! Challenge schedules: when the actuator is on, off, or deliberately
//! running at reduced amplitude to confuse an eavesdropping attacker.
//!
//! A schedule is a list of constant-amplitude segments. The actuation
//! envelope is u(i) = 0 in `Silent` segments and 1 otherwise; the modulated
//! probe is u(i) * amplitude(i) * carrier(i).

use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const SCHEDULE_HEADER: &str = "# pycra-schedule v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Actuator on at the nominal challenge amplitude.
    Steady,
    /// Actuator off; the detector inspects the sensor decay here.
    Silent,
    /// Actuator on at a reduced amplitude right after a silent period.
    Confusion,
}

impl Phase {
    pub fn is_actuated(self) -> bool {
        !matches!(self, Phase::Silent)
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Steady => "steady",
            Phase::Silent => "silent",
            Phase::Confusion => "confusion",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "steady" => Some(Phase::Steady),
            "silent" => Some(Phase::Silent),
            "confusion" => Some(Phase::Confusion),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub phase: Phase,
    pub amplitude: f64,
    pub duration_samples: usize,
}

/// A contiguous run of silence, as seen by the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SilentWindow {
    pub start: usize,
    pub len: usize,
}

impl SilentWindow {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChallengeSchedule {
    segments: Vec<Segment>,
    /// starts[i] = first sample index of segments[i]; last entry = total.
    starts: Vec<usize>,
}

impl ChallengeSchedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Parameter("schedule needs at least one segment".into()));
        }
        let mut starts = Vec::with_capacity(segments.len() + 1);
        let mut total = 0usize;
        for (i, seg) in segments.iter().enumerate() {
            if seg.duration_samples == 0 {
                return Err(Error::Parameter(format!("segment {i} has zero duration")));
            }
            if !seg.amplitude.is_finite() {
                return Err(Error::NonFinite(format!("segment {i} amplitude")));
            }
            match seg.phase {
                Phase::Silent if seg.amplitude != 0.0 => {
                    return Err(Error::Parameter(format!(
                        "segment {i} is silent but has amplitude {}",
                        seg.amplitude
                    )));
                }
                Phase::Steady | Phase::Confusion if seg.amplitude <= 0.0 => {
                    return Err(Error::Parameter(format!(
                        "segment {i} is actuated but has amplitude {}",
                        seg.amplitude
                    )));
                }
                _ => {}
            }
            starts.push(total);
            total += seg.duration_samples;
        }
        starts.push(total);
        Ok(Self { segments, starts })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_samples(&self) -> usize {
        *self.starts.last().unwrap()
    }

    /// Phase and amplitude at sample `i`. Panics past the end.
    pub fn at(&self, i: usize) -> (Phase, f64) {
        assert!(i < self.total_samples(), "sample {i} beyond schedule end");
        let idx = match self.starts.binary_search(&i) {
            Ok(k) => k,
            Err(k) => k - 1,
        };
        let seg = &self.segments[idx];
        (seg.phase, seg.amplitude)
    }

    /// Actuation envelope u(i) as 0.0 or 1.0.
    pub fn u(&self, i: usize) -> f64 {
        if self.at(i).0.is_actuated() {
            1.0
        } else {
            0.0
        }
    }

    /// Per-sample (phase, amplitude) without repeated lookups.
    pub fn iter_samples(&self) -> impl Iterator<Item = (Phase, f64)> + '_ {
        self.segments
            .iter()
            .flat_map(|seg| std::iter::repeat((seg.phase, seg.amplitude)).take(seg.duration_samples))
    }

    /// Contiguous silent runs in sample coordinates (adjacent silent
    /// segments merged).
    pub fn silent_windows(&self) -> Vec<SilentWindow> {
        let mut out: Vec<SilentWindow> = Vec::new();
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.phase == Phase::Silent {
                let start = self.starts[i];
                match out.last_mut() {
                    Some(last) if last.end() == start => last.len += seg.duration_samples,
                    _ => out.push(SilentWindow { start, len: seg.duration_samples }),
                }
            }
        }
        out
    }

    /// Amplitude of the first actuated segment after sample `i`, if any.
    pub fn resume_amplitude_after(&self, i: usize) -> Option<f64> {
        let mut idx = match self.starts.binary_search(&i) {
            Ok(k) => k,
            Err(k) => k - 1,
        };
        while idx < self.segments.len() {
            if self.segments[idx].phase.is_actuated() && self.starts[idx] > i {
                return Some(self.segments[idx].amplitude);
            }
            idx += 1;
        }
        None
    }

    /// Plain-text serialization: header line, then one
    /// `phase,amplitude,duration_samples` line per segment.
    pub fn to_text(&self) -> String {
        let mut out = String::from(SCHEDULE_HEADER);
        out.push('\n');
        for seg in &self.segments {
            out.push_str(&format!("{},{},{}\n", seg.phase.name(), seg.amplitude, seg.duration_samples));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, first)) if first.trim() == SCHEDULE_HEADER => {}
            Some((_, first)) => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header {SCHEDULE_HEADER:?}, got {first:?}"),
                })
            }
            None => return Err(Error::Parse { line: 1, message: "empty schedule file".into() }),
        }
        let mut segments = Vec::new();
        for (lineno, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected 3 comma-separated fields, got {}", parts.len()),
                });
            }
            let phase = Phase::from_name(parts[0].trim()).ok_or_else(|| Error::Parse {
                line: lineno + 1,
                message: format!("unknown phase {:?}", parts[0]),
            })?;
            let amplitude: f64 = parts[1].trim().parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                message: format!("bad amplitude {:?}", parts[1]),
            })?;
            let duration_samples: usize = parts[2].trim().parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                message: format!("bad duration {:?}", parts[2]),
            })?;
            segments.push(Segment { phase, amplitude, duration_samples });
        }
        ChallengeSchedule::new(segments)
    }
}

fn check_common(rho: f64, grid_t: usize, amplitude: f64) -> Result<()> {
    // rho = 1 is the degenerate geometric: every silence is one grid slot.
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Parameter(format!("rho = {rho} outside (0, 1]")));
    }
    if grid_t == 0 {
        return Err(Error::Parameter("grid_t must be >= 1 sample".into()));
    }
    if !(amplitude > 0.0) || !amplitude.is_finite() {
        return Err(Error::Parameter(format!("amplitude = {amplitude} must be > 0")));
    }
    Ok(())
}

/// Random alternating Steady/Silent schedule covering exactly
/// `horizon_samples`.
///
/// Steady stretches are uniform over [1, 2*mean_steady - 1] so challenge
/// onsets are unpredictable; silent stretches are `grid_t` times a
/// geometric(rho) draw, i.e. P(n * grid_t) = (1-rho)^(n-1) * rho. `mean_period`
/// is the expected full cycle (steady + silent) in samples.
pub fn gen_random_challenge_schedule(
    rng: &mut RngStream,
    horizon_samples: usize,
    mean_period: usize,
    rho: f64,
    grid_t: usize,
    amplitude: f64,
) -> Result<ChallengeSchedule> {
    check_common(rho, grid_t, amplitude)?;
    if horizon_samples == 0 {
        return Err(Error::Parameter("horizon_samples must be > 0".into()));
    }
    let mean_silent = grid_t as f64 / rho;
    let mean_steady = mean_period as f64 - mean_silent;
    if mean_steady < 2.0 {
        return Err(Error::Parameter(format!(
            "mean_period = {mean_period} leaves mean steady {mean_steady:.1} < 2 samples \
             (silent periods average {mean_silent:.1})"
        )));
    }
    let hi = (2.0 * mean_steady) as usize - 1;
    let mut segments = Vec::new();
    let mut total = 0usize;
    while total < horizon_samples {
        let steady = rng.uniform_usize(1, hi).min(horizon_samples - total);
        segments.push(Segment { phase: Phase::Steady, amplitude, duration_samples: steady });
        total += steady;
        if total >= horizon_samples {
            break;
        }
        let silent = (rng.geometric(rho)? as usize * grid_t).min(horizon_samples - total);
        segments.push(Segment { phase: Phase::Silent, amplitude: 0.0, duration_samples: silent });
        total += silent;
    }
    ChallengeSchedule::new(segments)
}

/// Parameters for the confusion-phase scheduler.
#[derive(Debug, Clone, Copy)]
pub struct ConfusionParams {
    /// Nominal challenge amplitude A.
    pub amplitude: f64,
    /// Confusion segments run at A / beta_amp; must be > 1.
    pub beta_amp: f64,
    /// Per-grid-slot stop probability of the silent period.
    pub rho: f64,
    /// Silence granularity in samples.
    pub grid_t: usize,
    /// Mean steady stretch in samples (uniform over [1, 2*mean-1]).
    pub mean_steady: usize,
    /// Confusion duration bounds in samples, inclusive.
    pub confusion_min: usize,
    pub confusion_max: usize,
}

impl ConfusionParams {
    /// Conventional duration bounds: uniform over [grid_t, 50 * grid_t].
    pub fn with_default_confusion_window(amplitude: f64, beta_amp: f64, rho: f64, grid_t: usize, mean_steady: usize) -> Self {
        Self {
            amplitude,
            beta_amp,
            rho,
            grid_t,
            mean_steady,
            confusion_min: grid_t,
            confusion_max: 50 * grid_t,
        }
    }
}

/// Steady -> Silent -> Confusion cycles covering exactly `horizon_samples`.
///
/// After each silent period the actuator resumes at the reduced amplitude
/// A / beta_amp for a uniform random stretch before returning to A. An
/// attacker that waits to see full-amplitude actuation therefore reveals
/// itself; one that reacts to the weak resumption needs a more sensitive
/// (hence more false-alarm-prone) change detector.
pub fn gen_confusion_schedule(
    rng: &mut RngStream,
    horizon_samples: usize,
    params: &ConfusionParams,
) -> Result<ChallengeSchedule> {
    check_common(params.rho, params.grid_t, params.amplitude)?;
    if !(params.beta_amp > 1.0) || !params.beta_amp.is_finite() {
        return Err(Error::Parameter(format!("beta_amp = {} must be > 1", params.beta_amp)));
    }
    if horizon_samples == 0 {
        return Err(Error::Parameter("horizon_samples must be > 0".into()));
    }
    if params.mean_steady < 1 {
        return Err(Error::Parameter("mean_steady must be >= 1".into()));
    }
    if params.confusion_min == 0 || params.confusion_min > params.confusion_max {
        return Err(Error::Parameter(format!(
            "confusion bounds [{}, {}] invalid",
            params.confusion_min, params.confusion_max
        )));
    }
    let steady_hi = (2 * params.mean_steady).saturating_sub(1).max(1);
    let confusion_amp = params.amplitude / params.beta_amp;
    let mut segments = Vec::new();
    let mut total = 0usize;
    'outer: loop {
        let pieces = [
            (Phase::Steady, params.amplitude, rng.uniform_usize(1, steady_hi)),
            (Phase::Silent, 0.0, rng.geometric(params.rho)? as usize * params.grid_t),
            (
                Phase::Confusion,
                confusion_amp,
                rng.uniform_usize(params.confusion_min, params.confusion_max),
            ),
        ];
        for (phase, amplitude, len) in pieces {
            let len = len.min(horizon_samples - total);
            if len > 0 {
                segments.push(Segment { phase, amplitude, duration_samples: len });
                total += len;
            }
            if total >= horizon_samples {
                break 'outer;
            }
        }
    }
    ChallengeSchedule::new(segments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    #[test]
    fn at_and_u_follow_segments() {
        let s = ChallengeSchedule::new(vec![
            Segment { phase: Phase::Steady, amplitude: 2.0, duration_samples: 3 },
            Segment { phase: Phase::Silent, amplitude: 0.0, duration_samples: 2 },
            Segment { phase: Phase::Confusion, amplitude: 0.5, duration_samples: 1 },
        ])
        .unwrap();
        assert_eq!(s.total_samples(), 6);
        assert_eq!(s.at(0), (Phase::Steady, 2.0));
        assert_eq!(s.at(2), (Phase::Steady, 2.0));
        assert_eq!(s.at(3), (Phase::Silent, 0.0));
        assert_eq!(s.at(5), (Phase::Confusion, 0.5));
        assert_eq!(s.u(3), 0.0);
        assert_eq!(s.u(5), 1.0);
        let per_sample: Vec<_> = s.iter_samples().collect();
        assert_eq!(per_sample.len(), 6);
        assert_eq!(per_sample[4], (Phase::Silent, 0.0));
    }

    #[test]
    fn rejects_bad_segments() {
        assert!(ChallengeSchedule::new(vec![]).is_err());
        assert!(ChallengeSchedule::new(vec![Segment {
            phase: Phase::Steady,
            amplitude: 0.0,
            duration_samples: 5
        }])
        .is_err());
        assert!(ChallengeSchedule::new(vec![Segment {
            phase: Phase::Silent,
            amplitude: 0.1,
            duration_samples: 5
        }])
        .is_err());
        assert!(ChallengeSchedule::new(vec![Segment {
            phase: Phase::Steady,
            amplitude: 1.0,
            duration_samples: 0
        }])
        .is_err());
    }

    #[test]
    fn silent_windows_merge_adjacent() {
        let s = ChallengeSchedule::new(vec![
            Segment { phase: Phase::Steady, amplitude: 1.0, duration_samples: 4 },
            Segment { phase: Phase::Silent, amplitude: 0.0, duration_samples: 2 },
            Segment { phase: Phase::Silent, amplitude: 0.0, duration_samples: 3 },
            Segment { phase: Phase::Steady, amplitude: 1.0, duration_samples: 1 },
        ])
        .unwrap();
        assert_eq!(s.silent_windows(), vec![SilentWindow { start: 4, len: 5 }]);
        assert_eq!(s.resume_amplitude_after(4), Some(1.0));
        assert_eq!(s.resume_amplitude_after(9), None);
    }

    #[test]
    fn random_schedule_covers_horizon_and_alternates() {
        let mut rng = RngStream::new(5);
        let s = gen_random_challenge_schedule(&mut rng, 10_000, 1_000, 0.5, 10, 1.0).unwrap();
        assert_eq!(s.total_samples(), 10_000);
        assert_eq!(s.segments()[0].phase, Phase::Steady);
        for pair in s.segments().windows(2) {
            assert_ne!(pair[0].phase, pair[1].phase, "must alternate");
        }
    }

    #[test]
    fn random_schedule_challenge_count_in_expected_band() {
        // horizon 10_000, mean_period 1_000: challenge count stays in [5, 20].
        for seed in 0..20 {
            let mut rng = RngStream::new(seed);
            let s = gen_random_challenge_schedule(&mut rng, 10_000, 1_000, 0.5, 10, 1.0).unwrap();
            let n = s.silent_windows().len();
            assert!((5..=20).contains(&n), "seed {seed}: {n} challenges");
        }
    }

    #[test]
    fn silent_lengths_are_geometric_on_the_grid() {
        // rho = 0.5 makes the mean silent length 2 * grid_t.
        let mut rng = RngStream::new(17);
        let grid = 5usize;
        let mut lens = Vec::new();
        while lens.len() < 100_000 {
            let s = gen_random_challenge_schedule(&mut rng, 3_000_000, 30, 0.5, grid, 1.0).unwrap();
            // Drop the last window of each batch: it may be clipped by the horizon.
            let w = s.silent_windows();
            lens.extend(w[..w.len() - 1].iter().map(|x| x.len as f64));
        }
        for len in &lens {
            assert_eq!(*len as usize % grid, 0, "silence must sit on the grid");
        }
        let m = stats::mean(&lens);
        let expect = 2.0 * grid as f64;
        assert!((m - expect).abs() / expect < 0.02, "mean silent {m}, want ~{expect}");
    }

    #[test]
    fn confusion_schedule_shape() {
        let mut rng = RngStream::new(3);
        let params = ConfusionParams::with_default_confusion_window(2.0, 4.0, 0.5, 10, 500);
        let s = gen_confusion_schedule(&mut rng, 50_000, &params).unwrap();
        assert_eq!(s.total_samples(), 50_000);
        let mut saw_confusion = false;
        for seg in s.segments() {
            match seg.phase {
                Phase::Confusion => {
                    saw_confusion = true;
                    assert_eq!(seg.amplitude, 0.5, "A / beta_amp");
                    assert!(seg.duration_samples <= 500, "within [T, 50T]");
                }
                Phase::Steady => assert_eq!(seg.amplitude, 2.0),
                Phase::Silent => {}
            }
        }
        assert!(saw_confusion);
    }

    #[test]
    fn confusion_rejects_beta_at_most_one() {
        let mut rng = RngStream::new(3);
        let params = ConfusionParams::with_default_confusion_window(2.0, 1.0, 0.5, 10, 500);
        assert!(gen_confusion_schedule(&mut rng, 1_000, &params).is_err());
    }

    #[test]
    fn text_round_trip_preserves_schedule() {
        let mut rng = RngStream::new(8);
        let s = gen_random_challenge_schedule(&mut rng, 5_000, 500, 0.4, 7, 1.25).unwrap();
        let text = s.to_text();
        assert!(text.starts_with(SCHEDULE_HEADER));
        let back = ChallengeSchedule::from_text(&text).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn from_text_rejects_bad_header_and_rows() {
        assert!(ChallengeSchedule::from_text("nope\nsteady,1,5\n").is_err());
        let bad_row = format!("{SCHEDULE_HEADER}\nsteady,1\n");
        assert!(ChallengeSchedule::from_text(&bad_row).is_err());
        let bad_phase = format!("{SCHEDULE_HEADER}\nwarmup,1,5\n");
        assert!(ChallengeSchedule::from_text(&bad_phase).is_err());
    }
}
