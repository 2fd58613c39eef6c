//! Frequency-domain attack-resilient estimation.
//!
//! Raising an alarm is only half the job: the sensor should keep producing
//! a trustworthy reading while under attack. During each silent window the
//! live spectrum is compared bin by bin against the spectrum the natural
//! decay would produce; bins where the residual energy G_k exceeds a
//! trigger are declared under attack, and the frequency estimate is taken
//! from the strongest spectral peak that is not in (or adjacent to) the
//! attacked set. A matched-filter estimator over a sinusoid family, with
//! score fusion across challenges, covers the parametric variant.

use std::collections::{BTreeSet, VecDeque};

use crate::detect::chi2_statistic;
use crate::dft::SlidingDft;
use crate::error::{Error, Result};
use crate::plant::StateSpaceModel;

/// Per-bin residual tracker for one silent window.
///
/// Created at silence onset as a clone of the live DFT, so the predicted
/// and measured spectra start identical and the residual Z_k = |Y_k| -
/// |Y_hat_k| is exactly zero until measured samples diverge from the
/// predicted decay.
#[derive(Debug, Clone)]
pub struct FreqResidual {
    predicted: SlidingDft,
    window_t: usize,
    beta_freq: f64,
    /// Per-frame residual vectors over the tracked band, newest last.
    hist: VecDeque<Vec<f64>>,
    frames: usize,
}

impl FreqResidual {
    pub fn begin(live: &SlidingDft, window_t: usize, beta_freq: f64) -> Result<Self> {
        if window_t == 0 {
            return Err(Error::Parameter("window_t must be >= 1".into()));
        }
        if !(beta_freq > 0.0) || !beta_freq.is_finite() {
            return Err(Error::Parameter(format!("beta_freq = {beta_freq} must be > 0")));
        }
        Ok(Self {
            predicted: live.clone(),
            window_t,
            beta_freq,
            hist: VecDeque::with_capacity(window_t + 1),
            frames: 0,
        })
    }

    /// Advance one frame. The caller has already pushed the measured sample
    /// into `live`; `y_pred` is the predicted decay sample for this instant.
    pub fn step(&mut self, live: &SlidingDft, y_pred: f64) -> Result<()> {
        if live.n() != self.predicted.n() || live.band() != self.predicted.band() {
            return Err(Error::Dimension(
                "live and predicted DFTs differ in length or band".into(),
            ));
        }
        self.predicted.update(y_pred);
        let live_mag = live.magnitudes();
        let pred_mag = self.predicted.magnitudes();
        let z: Vec<f64> = live_mag.iter().zip(&pred_mag).map(|(a, b)| a - b).collect();
        self.hist.push_back(z);
        if self.hist.len() > self.window_t {
            self.hist.pop_front();
        }
        self.frames += 1;
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Latest residual vector over the band, if any frames were seen.
    pub fn z_latest(&self) -> Option<&[f64]> {
        self.hist.back().map(|v| v.as_slice())
    }

    /// Per-bin G over the last T frames; None until T frames accumulated.
    /// Recomputed from the stored window, so it matches a batch evaluation
    /// exactly.
    pub fn g(&self) -> Option<Vec<f64>> {
        if self.hist.len() < self.window_t {
            return None;
        }
        let bins = self.hist.back().map(|z| z.len())?;
        let mut g = vec![0.0; bins];
        for z in &self.hist {
            for (acc, zk) in g.iter_mut().zip(z) {
                *acc += zk * zk;
            }
        }
        for acc in &mut g {
            *acc /= self.window_t as f64;
        }
        Some(g)
    }

    /// Absolute bin indices currently classified as under attack.
    pub fn attacked(&self) -> BTreeSet<usize> {
        match self.g() {
            Some(g) => classify_attacked_bins(&g, self.predicted.band().0, self.beta_freq),
            None => BTreeSet::new(),
        }
    }

    pub fn beta_freq(&self) -> f64 {
        self.beta_freq
    }
}

/// Windowed per-bin residual statistic G_k = (1/T) sum of the last T Z_k^2.
pub fn freq_chi2(z: &[f64], t: usize) -> Result<f64> {
    chi2_statistic(z, t)
}

/// Bins where the residual energy peaks above the trigger. `bin_lo` is the
/// absolute index of g[0].
///
/// Only local maxima are flagged: a short burst smears residual energy over
/// a mainlobe of width fs / burst_len, and flagging the whole lobe would
/// mask bins far from the interferer itself. The estimator's guard band
/// covers the immediate neighbours of each flagged peak.
pub fn classify_attacked_bins(g: &[f64], bin_lo: usize, beta_freq: f64) -> BTreeSet<usize> {
    g.iter()
        .enumerate()
        .filter(|&(i, &gk)| {
            let left_ok = i == 0 || gk > g[i - 1];
            let right_ok = i + 1 == g.len() || gk >= g[i + 1];
            left_ok && right_ok && gk > beta_freq
        })
        .map(|(i, _)| bin_lo + i)
        .collect()
}

/// Feed the model's free decay from `state_at_challenge` through a clone of
/// the live DFT, returning per-frame band magnitudes (the predicted
/// natural-response spectrum over the silent window).
pub fn predict_natural_spectrum(
    model: &StateSpaceModel,
    state_at_challenge: &[f64],
    horizon: usize,
    live: &SlidingDft,
) -> Result<Vec<Vec<f64>>> {
    let decay = model.free_response(state_at_challenge, horizon + 1)?;
    let mut dft = live.clone();
    let mut frames = Vec::with_capacity(horizon);
    for &y in &decay[1..] {
        dft.update(y);
        frames.push(dft.magnitudes());
    }
    Ok(frames)
}

/// Peak-detection knobs for the secure estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakConfig {
    /// Candidates must exceed median + mad_factor * MAD of the spectrum.
    pub mad_factor: f64,
    /// Minimum spacing between candidates, bins.
    pub min_separation_bins: usize,
    /// A candidate within this many bins of an attacked bin is discarded.
    pub guard_bins: usize,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self { mad_factor: 6.0, min_separation_bins: 3, guard_bins: 1 }
    }
}

/// An authenticated frequency estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecureEstimate {
    /// Absolute bin index.
    pub bin: usize,
    pub freq_hz: f64,
    pub magnitude: f64,
}

/// Local maxima above median + mad_factor * MAD, strongest first, with the
/// minimum separation enforced greedily. Returns indices into `magnitudes`.
pub fn find_peaks(magnitudes: &[f64], config: &PeakConfig) -> Vec<usize> {
    if magnitudes.len() < 2 {
        return Vec::new();
    }
    let med = crate::stats::median(magnitudes);
    let mad = crate::stats::mad(magnitudes);
    let floor = med + config.mad_factor * mad;
    let mut candidates: Vec<usize> = (0..magnitudes.len())
        .filter(|&i| {
            let left_ok = i == 0 || magnitudes[i] > magnitudes[i - 1];
            let right_ok = i + 1 == magnitudes.len() || magnitudes[i] >= magnitudes[i + 1];
            left_ok && right_ok && magnitudes[i] > floor
        })
        .collect();
    candidates.sort_by(|&a, &b| magnitudes[b].partial_cmp(&magnitudes[a]).unwrap());
    let mut kept: Vec<usize> = Vec::new();
    for c in candidates {
        if kept.iter().all(|&k| k.abs_diff(c) >= config.min_separation_bins) {
            kept.push(c);
        }
    }
    kept
}

/// Strongest spectral peak that is not within `guard_bins` of any attacked
/// bin; None when every candidate is masked (legitimate "cannot estimate
/// securely" outcome).
///
/// `magnitudes` covers absolute bins `bin_lo..bin_lo + magnitudes.len()`;
/// `n` and `fs_hz` convert the winning bin to a frequency.
pub fn secure_frequency_estimate(
    magnitudes: &[f64],
    bin_lo: usize,
    attacked: &BTreeSet<usize>,
    config: &PeakConfig,
    n: usize,
    fs_hz: f64,
) -> Option<SecureEstimate> {
    let peaks = find_peaks(magnitudes, config);
    for idx in peaks {
        let bin = bin_lo + idx;
        let masked = attacked
            .iter()
            .any(|&a| a.abs_diff(bin) <= config.guard_bins);
        if !masked {
            debug_assert!(!attacked.contains(&bin));
            return Some(SecureEstimate {
                bin,
                freq_hz: bin as f64 * fs_hz / n as f64,
                magnitude: magnitudes[idx],
            });
        }
    }
    None
}

/// A family of candidate waveforms for matched-filter estimation; the
/// default realization is the sinusoid family sin(2 pi theta t).
#[derive(Debug, Clone, PartialEq)]
pub struct SignalFamily {
    freqs_hz: Vec<f64>,
}

impl SignalFamily {
    pub fn sinusoids(freqs_hz: Vec<f64>) -> Result<Self> {
        if freqs_hz.is_empty() {
            return Err(Error::Parameter("signal family grid is empty".into()));
        }
        if !freqs_hz.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Parameter("family grid must be strictly ascending".into()));
        }
        if !freqs_hz.iter().all(|f| f.is_finite() && *f > 0.0) {
            return Err(Error::Parameter("family frequencies must be finite and > 0".into()));
        }
        Ok(Self { freqs_hz })
    }

    pub fn len(&self) -> usize {
        self.freqs_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs_hz.is_empty()
    }

    pub fn theta(&self, idx: usize) -> f64 {
        self.freqs_hz[idx]
    }

    /// Unit-energy basis vector phi_theta sampled over n samples starting
    /// at absolute time offset_s. Normalizing to unit energy makes the ML
    /// penalty term constant across the grid without moving the argmax.
    pub fn basis(&self, idx: usize, n: usize, fs_hz: f64, offset_s: f64) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::Parameter("basis window must be >= 1 sample".into()));
        }
        let f = self.freqs_hz[idx];
        let dt = 1.0 / fs_hz;
        let mut phi: Vec<f64> = (0..n)
            .map(|i| (std::f64::consts::TAU * f * (offset_s + i as f64 * dt)).sin())
            .collect();
        let norm = phi.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::DegenerateFit(format!(
                "basis at {f} Hz is identically zero over this window"
            )));
        }
        phi.iter_mut().for_each(|v| *v /= norm);
        Ok(phi)
    }

    /// Largest |<phi_i, phi_j>|, i != j, over the grid: how far the family
    /// is from orthogonal on a window of n samples. Falls toward zero as
    /// the window grows.
    pub fn max_offdiag_correlation(&self, n: usize, fs_hz: f64) -> Result<f64> {
        let bases: Vec<Vec<f64>> = (0..self.len())
            .map(|i| self.basis(i, n, fs_hz, 0.0))
            .collect::<Result<_>>()?;
        let mut worst = 0.0f64;
        for i in 0..bases.len() {
            for j in (i + 1)..bases.len() {
                let dot: f64 = bases[i].iter().zip(&bases[j]).map(|(a, b)| a * b).sum();
                worst = worst.max(dot.abs());
            }
        }
        Ok(worst)
    }
}

/// Matched-filter estimate over the family grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlEstimate {
    pub index: usize,
    pub theta_hz: f64,
    /// <y, phi> - ||phi||^2 / 2 at the winner (unit-energy phi).
    pub score: f64,
}

fn window_score(y: &[f64], family: &SignalFamily, idx: usize, fs_hz: f64, offset_s: f64) -> Result<f64> {
    let phi = family.basis(idx, y.len(), fs_hz, offset_s)?;
    let dot: f64 = y.iter().zip(&phi).map(|(a, b)| a * b).sum();
    Ok(dot - 0.5)
}

/// argmax_theta <y, phi_theta> - ||phi_theta||^2 / 2 over the grid; ties
/// break toward the lower theta.
pub fn ml_estimate(y: &[f64], family: &SignalFamily, fs_hz: f64, offset_s: f64) -> Result<MlEstimate> {
    if y.is_empty() {
        return Err(Error::Parameter("ml_estimate window is empty".into()));
    }
    let mut best = MlEstimate { index: 0, theta_hz: family.theta(0), score: f64::NEG_INFINITY };
    for idx in 0..family.len() {
        let score = window_score(y, family, idx, fs_hz, offset_s)?;
        if score > best.score {
            best = MlEstimate { index: idx, theta_hz: family.theta(idx), score };
        }
    }
    Ok(best)
}

/// Fuse several challenge windows by summing matched-filter scores, with
/// each basis evaluated at that window's absolute time offset so the
/// correlations add coherently. Assumes the true parameter is constant
/// across the windows.
pub fn fuse_challenges(
    windows: &[(f64, &[f64])],
    family: &SignalFamily,
    fs_hz: f64,
) -> Result<MlEstimate> {
    if windows.is_empty() {
        return Err(Error::Parameter("no windows to fuse".into()));
    }
    if windows.iter().any(|(_, y)| y.is_empty()) {
        return Err(Error::Parameter("fuse_challenges got an empty window".into()));
    }
    let mut best = MlEstimate { index: 0, theta_hz: family.theta(0), score: f64::NEG_INFINITY };
    for idx in 0..family.len() {
        let mut score = 0.0;
        for &(offset_s, y) in windows {
            score += window_score(y, family, idx, fs_hz, offset_s)?;
        }
        if score > best.score {
            best = MlEstimate { index: idx, theta_hz: family.theta(idx), score };
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    const FS: f64 = 1_000.0;
    const N: usize = 500; // 2 Hz bins at 1 kHz

    fn tone(f: f64, amp: f64, i: usize) -> f64 {
        amp * (TAU * f * i as f64 / FS).sin()
    }

    #[test]
    fn identical_streams_leave_residual_at_zero() {
        let mut live = SlidingDft::new(N).unwrap();
        for i in 0..N {
            live.update(tone(50.0, 1.0, i));
        }
        let mut res = FreqResidual::begin(&live, 10, 1e-12).unwrap();
        for i in N..(N + 40) {
            let y = tone(50.0, 1.0, i);
            live.update(y);
            res.step(&live, y).unwrap();
        }
        let g = res.g().unwrap();
        assert!(g.iter().all(|&v| v < 1e-18), "max G = {:?}", g.iter().cloned().fold(0.0, f64::max));
        assert!(res.attacked().is_empty());
    }

    #[test]
    fn attack_tone_flags_its_own_bin_and_spares_the_true_one() {
        // True tone 50 Hz (bin 25), attack 120 Hz (bin 60), both bin-aligned.
        let mut live = SlidingDft::new(N).unwrap();
        for i in 0..N {
            live.update(tone(50.0, 1.0, i));
        }
        let mut res = FreqResidual::begin(&live, 25, 1.0).unwrap();
        for i in N..(N + 200) {
            let clean = tone(50.0, 1.0, i);
            live.update(clean + tone(120.0, 0.8, i));
            res.step(&live, clean).unwrap();
        }
        let attacked = res.attacked();
        assert!(attacked.contains(&60), "attacked = {attacked:?}");
        assert!(!attacked.contains(&25), "true bin flagged: {attacked:?}");
        // While the attack tone fills the window it leaks into every bin,
        // so the true bin is not exactly zero; it must still sit orders of
        // magnitude below the attacked bin and under the flag threshold.
        let g = res.g().unwrap();
        assert!(g[60] > 1e3 * g[25], "G[60] = {}, G[25] = {}", g[60], g[25]);
        assert!(g[25] < 1.0, "G at true bin = {}", g[25]);
    }

    #[test]
    fn residual_g_matches_batch_recompute_exactly() {
        let mut live = SlidingDft::new(64).unwrap();
        let mut rng = RngStream::new(2);
        for _ in 0..64 {
            live.update(rng.normal(0.0, 1.0));
        }
        let mut res = FreqResidual::begin(&live, 16, 1.0).unwrap();
        let mut z_log: Vec<Vec<f64>> = Vec::new();
        let mut predicted = live.clone();
        for _ in 0..40 {
            let y = rng.normal(0.0, 1.0);
            let y_hat = rng.normal(0.0, 1.0);
            live.update(y);
            predicted.update(y_hat);
            res.step(&live, y_hat).unwrap();
            let z: Vec<f64> = live
                .magnitudes()
                .iter()
                .zip(predicted.magnitudes())
                .map(|(a, b)| a - b)
                .collect();
            z_log.push(z);
        }
        let g = res.g().unwrap();
        let bins = g.len();
        for k in 0..bins {
            let zk: Vec<f64> = z_log.iter().map(|z| z[k]).collect();
            let batch = freq_chi2(&zk, 16).unwrap();
            assert_eq!(g[k], batch, "bin {k}");
        }
    }

    #[test]
    fn secure_estimate_skips_attacked_and_guarded_bins() {
        let mut mags = vec![0.1; 100];
        mags[10] = 5.0;
        mags[40] = 9.0;
        let cfg = PeakConfig::default();
        let clean = secure_frequency_estimate(&mags, 0, &BTreeSet::new(), &cfg, 200, FS).unwrap();
        assert_eq!(clean.bin, 40);
        assert!((clean.freq_hz - 200.0).abs() < 1e-12);
        let attacked: BTreeSet<usize> = [40].into();
        let est = secure_frequency_estimate(&mags, 0, &attacked, &cfg, 200, FS).unwrap();
        assert_eq!(est.bin, 10, "must fall back to the unattacked peak");
        // Guard band: flagging the neighbour still masks the peak.
        let adjacent: BTreeSet<usize> = [39].into();
        let est = secure_frequency_estimate(&mags, 0, &adjacent, &cfg, 200, FS).unwrap();
        assert_eq!(est.bin, 10);
        // Everything masked -> None.
        let all: BTreeSet<usize> = [10, 40].into();
        assert!(secure_frequency_estimate(&mags, 0, &all, &cfg, 200, FS).is_none());
    }

    #[test]
    fn peak_separation_collapses_adjacent_maxima() {
        let mut mags = vec![0.0; 50];
        mags[20] = 8.0;
        mags[22] = 7.0; // within min separation of the stronger peak
        mags[30] = 5.0;
        let peaks = find_peaks(&mags, &PeakConfig::default());
        assert_eq!(peaks, vec![20, 30]);
    }

    #[test]
    fn ml_estimate_recovers_grid_tone_and_ignores_scale() {
        let family = SignalFamily::sinusoids(vec![50.0, 65.0, 80.0]).unwrap();
        let n = 1000;
        let phi = family.basis(1, n, FS, 0.0).unwrap();
        let y: Vec<f64> = phi.iter().map(|v| 3.0 * v).collect();
        let est = ml_estimate(&y, &family, FS, 0.0).unwrap();
        assert_eq!(est.index, 1);
        let y_scaled: Vec<f64> = y.iter().map(|v| 10.0 * v).collect();
        assert_eq!(ml_estimate(&y_scaled, &family, FS, 0.0).unwrap().index, 1);
    }

    #[test]
    fn ml_estimate_breaks_ties_toward_lower_theta() {
        let family = SignalFamily::sinusoids(vec![50.0, 65.0]).unwrap();
        let y = vec![0.0; 400];
        let est = ml_estimate(&y, &family, FS, 0.0).unwrap();
        assert_eq!(est.index, 0);
        assert_eq!(est.score, -0.5);
    }

    #[test]
    fn ml_estimate_survives_noise_at_comfortable_snr() {
        let family = SignalFamily::sinusoids(vec![50.0, 70.0, 90.0]).unwrap();
        let n = 1000; // 0.1 s window: 10 Hz resolution, 20 Hz spacing
        let mut rng = RngStream::new(31);
        let phi = family.basis(1, n, FS, 0.0).unwrap();
        let mut hits = 0;
        let trials = 300;
        for _ in 0..trials {
            let y: Vec<f64> = phi.iter().map(|v| v + rng.normal(0.0, 0.2)).collect();
            if ml_estimate(&y, &family, FS, 0.0).unwrap().index == 1 {
                hits += 1;
            }
        }
        assert!(hits as f64 / trials as f64 >= 0.99, "{hits}/{trials}");
    }

    #[test]
    fn fused_noiseless_score_is_exactly_linear_in_window_count() {
        let family = SignalFamily::sinusoids(vec![50.0, 65.0, 80.0]).unwrap();
        let n = 800;
        let dt = n as f64 / FS;
        let windows: Vec<(f64, Vec<f64>)> = (0..8)
            .map(|w| {
                let offset = w as f64 * (dt + 0.013);
                (offset, family.basis(1, n, FS, offset).unwrap())
            })
            .collect();
        let single = ml_estimate(&windows[0].1, &family, FS, windows[0].0).unwrap();
        for count in 2..=8usize {
            let refs: Vec<(f64, &[f64])> =
                windows[..count].iter().map(|(o, y)| (*o, y.as_slice())).collect();
            let fused = fuse_challenges(&refs, &family, FS).unwrap();
            assert_eq!(fused.index, 1);
            let ratio = fused.score / single.score;
            assert!(
                (ratio - count as f64).abs() < 0.01 * count as f64,
                "count {count}: ratio {ratio}"
            );
        }
    }

    #[test]
    fn fusion_beats_single_window_accuracy_in_noise() {
        let family = SignalFamily::sinusoids(vec![50.0, 70.0, 90.0]).unwrap();
        let n = 500;
        let dt = n as f64 / FS;
        let sigma = 1.3;
        let mut rng = RngStream::new(8);
        let mut single_hits = 0;
        let mut fused_hits = 0;
        let trials = 150;
        for _ in 0..trials {
            let windows: Vec<(f64, Vec<f64>)> = (0..8)
                .map(|w| {
                    let offset = w as f64 * (dt + 0.029);
                    let phi = family.basis(1, n, FS, offset).unwrap();
                    let y: Vec<f64> = phi.iter().map(|v| v + rng.normal(0.0, sigma)).collect();
                    (offset, y)
                })
                .collect();
            if ml_estimate(&windows[0].1, &family, FS, windows[0].0).unwrap().index == 1 {
                single_hits += 1;
            }
            let refs: Vec<(f64, &[f64])> = windows.iter().map(|(o, y)| (*o, y.as_slice())).collect();
            if fuse_challenges(&refs, &family, FS).unwrap().index == 1 {
                fused_hits += 1;
            }
        }
        assert!(
            fused_hits > single_hits + 10,
            "fusion {fused_hits}/{trials} vs single {single_hits}/{trials}"
        );
    }

    #[test]
    fn family_correlation_decays_with_window_length() {
        let family = SignalFamily::sinusoids(vec![60.0, 63.0]).unwrap();
        let short = family.max_offdiag_correlation(300, FS).unwrap();
        let long = family.max_offdiag_correlation(6000, FS).unwrap();
        assert!(long < short, "short {short}, long {long}");
        assert!(long < 0.05, "long-window correlation {long}");
    }

    #[test]
    fn family_rejects_bad_grids() {
        assert!(SignalFamily::sinusoids(vec![]).is_err());
        assert!(SignalFamily::sinusoids(vec![50.0, 50.0]).is_err());
        assert!(SignalFamily::sinusoids(vec![50.0, -10.0]).is_err());
    }

    #[test]
    fn predicted_spectrum_from_zero_state_is_zero() {
        let model = StateSpaceModel::resonant(71.0, 0.035, FS, 0.0, 0.0).unwrap();
        let live = SlidingDft::new(64).unwrap();
        let frames = predict_natural_spectrum(&model, &[0.0, 0.0], 30, &live).unwrap();
        assert_eq!(frames.len(), 30);
        assert!(frames.iter().all(|f| f.iter().all(|&m| m == 0.0)));
    }

    proptest! {
        #[test]
        fn classification_is_monotone_in_the_trigger(
            g in prop::collection::vec(0.0f64..10.0, 4..64),
            beta_lo in 0.1f64..5.0,
            lift in 0.0f64..5.0,
        ) {
            let low = classify_attacked_bins(&g, 7, beta_lo);
            let high = classify_attacked_bins(&g, 7, beta_lo + lift);
            prop_assert!(high.is_subset(&low), "raising the trigger added bins");
        }

        #[test]
        fn secure_estimate_never_returns_a_masked_bin(
            seed in 0u64..500,
            mask in prop::collection::btree_set(0usize..64, 0..20),
        ) {
            let mut rng = RngStream::new(seed);
            let mut mags: Vec<f64> = (0..64).map(|_| rng.uniform(0.0, 0.2)).collect();
            for _ in 0..4 {
                let at = rng.uniform_usize(0, 63);
                mags[at] += rng.uniform(1.0, 9.0);
            }
            let cfg = PeakConfig::default();
            if let Some(est) = secure_frequency_estimate(&mags, 0, &mask, &cfg, 128, FS) {
                for &a in &mask {
                    prop_assert!(est.bin.abs_diff(a) > cfg.guard_bins,
                        "estimate bin {} within guard of masked {}", est.bin, a);
                }
            }
        }
    }
}
