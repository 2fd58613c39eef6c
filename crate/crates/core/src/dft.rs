//! Recursive sliding DFT over the last N samples, O(bins) per update.
//!
//! Each accumulator obeys Y_k <- e^(j 2 pi k / N) (Y_k + y_new - y_old),
//! which keeps Y_k equal to the DFT of the current window referenced to the
//! window start. Floating-point drift is wiped by recomputing the bins
//! directly from the sample buffer every N updates, so magnitudes track a
//! direct DFT to within a relative error far below 1e-9 indefinitely.

use num_complex::Complex64;
use std::f64::consts::TAU;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SlidingDft {
    n: usize,
    bin_lo: usize,
    bin_hi: usize, // exclusive
    twiddle: Vec<Complex64>,
    acc: Vec<Complex64>,
    buf: Vec<f64>,
    pos: usize,
    seen: usize,
    since_sync: usize,
}

impl SlidingDft {
    /// Track all N bins.
    pub fn new(n: usize) -> Result<Self> {
        Self::with_band(n, 0, n)
    }

    /// Track only bins [bin_lo, bin_hi); cheaper when the analysis band is
    /// a small slice of the spectrum.
    pub fn with_band(n: usize, bin_lo: usize, bin_hi: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Parameter(format!("window n = {n} must be >= 2")));
        }
        if bin_lo >= bin_hi || bin_hi > n {
            return Err(Error::Parameter(format!("bin band [{bin_lo}, {bin_hi}) invalid for n = {n}")));
        }
        let twiddle = (bin_lo..bin_hi)
            .map(|k| Complex64::from_polar(1.0, TAU * k as f64 / n as f64))
            .collect();
        Ok(Self {
            n,
            bin_lo,
            bin_hi,
            twiddle,
            acc: vec![Complex64::new(0.0, 0.0); bin_hi - bin_lo],
            buf: vec![0.0; n],
            pos: 0,
            seen: 0,
            since_sync: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Tracked bin range [lo, hi).
    pub fn band(&self) -> (usize, usize) {
        (self.bin_lo, self.bin_hi)
    }

    /// True once a full window of samples has been absorbed.
    pub fn is_warm(&self) -> bool {
        self.seen >= self.n
    }

    pub fn samples_seen(&self) -> usize {
        self.seen
    }

    /// Center frequency of bin k for a given sample rate.
    pub fn bin_freq_hz(&self, k: usize, fs_hz: f64) -> f64 {
        k as f64 * fs_hz / self.n as f64
    }

    /// Push one sample, sliding the window forward.
    pub fn update(&mut self, y: f64) {
        let old = self.buf[self.pos];
        self.buf[self.pos] = y;
        self.pos = (self.pos + 1) % self.n;
        self.seen = self.seen.saturating_add(1);
        let delta = y - old;
        for (acc, tw) in self.acc.iter_mut().zip(&self.twiddle) {
            *acc = (*acc + delta) * tw;
        }
        self.since_sync += 1;
        if self.since_sync >= self.n {
            self.resync();
        }
    }

    /// Complex bin value; k must be inside the tracked band.
    pub fn bin(&self, k: usize) -> Complex64 {
        assert!(k >= self.bin_lo && k < self.bin_hi, "bin {k} outside tracked band");
        self.acc[k - self.bin_lo]
    }

    pub fn magnitude(&self, k: usize) -> f64 {
        self.bin(k).norm()
    }

    /// Magnitudes of the tracked band, indexed from bin_lo.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.acc.iter().map(|c| c.norm()).collect()
    }

    /// Current window in chronological order (oldest first).
    pub fn window(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n);
        out.extend_from_slice(&self.buf[self.pos..]);
        out.extend_from_slice(&self.buf[..self.pos]);
        out
    }

    /// Recompute every tracked bin directly from the buffered window.
    fn resync(&mut self) {
        let window = self.window();
        for (idx, k) in (self.bin_lo..self.bin_hi).enumerate() {
            self.acc[idx] = direct_bin(&window, k);
        }
        self.since_sync = 0;
    }
}

/// Direct evaluation of one DFT bin over a window in chronological order.
pub fn direct_bin(window: &[f64], k: usize) -> Complex64 {
    let n = window.len() as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for (m, &y) in window.iter().enumerate() {
        let angle = -TAU * k as f64 * m as f64 / n;
        acc += y * Complex64::from_polar(1.0, angle);
    }
    acc
}
