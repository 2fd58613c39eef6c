//! The sensor plant: discrete-time dynamics, the passive tone ring the
//! sensor measures, decay-model fitting, detector threshold calibration,
//! and the magnetically coupled RFID variant.

use crate::error::{ensure_all_finite, ensure_finite, Error, Result};
use crate::rng::RngStream;
use crate::schedule::ChallengeSchedule;
use crate::signal::SignalTrace;
use num_complex::Complex64;
use std::f64::consts::TAU;

/// Linear discrete-time sensor model
/// x(t+1) = A x(t) + B u(t) + w, y(t) = C x(t),
/// with process noise entering the driven (first) state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    a: Vec<f64>, // n x n, row major
    b: Vec<f64>, // n
    c: Vec<f64>, // 1 x n
    pub sigma_w: f64,
    pub sigma_v: f64,
    x: Vec<f64>,
    n: usize,
}

impl StateSpaceModel {
    pub fn new(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>, sigma_w: f64, sigma_v: f64) -> Result<Self> {
        let n = b.len();
        if n == 0 {
            return Err(Error::Dimension("state dimension must be >= 1".into()));
        }
        if a.len() != n * n || c.len() != n {
            return Err(Error::Dimension(format!(
                "A is {} long, C is {} long; expected {} and {} for n = {n}",
                a.len(),
                c.len(),
                n * n,
                n
            )));
        }
        ensure_all_finite("A", &a)?;
        ensure_all_finite("B", &b)?;
        ensure_all_finite("C", &c)?;
        ensure_finite("sigma_w", sigma_w)?;
        ensure_finite("sigma_v", sigma_v)?;
        if sigma_w < 0.0 || sigma_v < 0.0 {
            return Err(Error::Parameter("noise std must be >= 0".into()));
        }
        let model = Self { a, b, c, sigma_w, sigma_v, x: vec![0.0; n], n };
        let rho = model.spectral_radius();
        if !(rho < 1.0) {
            return Err(Error::Parameter(format!(
                "A has spectral radius {rho:.6} >= 1; the sensor must be passive"
            )));
        }
        Ok(model)
    }

    /// Single-pole sensor with unit DC gain.
    pub fn first_order(pole: f64, sigma_w: f64, sigma_v: f64) -> Result<Self> {
        Self::new(vec![pole], vec![1.0 - pole], vec![1.0], sigma_w, sigma_v)
    }

    /// Two-real-pole sensor in companion form with unit DC gain.
    pub fn second_order(p1: f64, p2: f64, sigma_w: f64, sigma_v: f64) -> Result<Self> {
        let a1 = p1 + p2;
        let a2 = -p1 * p2;
        Self::new(
            vec![a1, a2, 1.0, 0.0],
            vec![1.0 - a1 - a2, 0.0],
            vec![1.0, 0.0],
            sigma_w,
            sigma_v,
        )
    }

    /// First-order sensor whose free response falls to 1% of its starting
    /// value `settle_s` seconds after actuation stops.
    pub fn from_settle_time(settle_s: f64, fs_hz: f64, sigma_w: f64, sigma_v: f64) -> Result<Self> {
        if !(settle_s > 0.0) || !(fs_hz > 0.0) {
            return Err(Error::Parameter(format!(
                "settle_s = {settle_s}, fs_hz = {fs_hz}; both must be > 0"
            )));
        }
        let tau = settle_s / 100f64.ln();
        let pole = (-1.0 / (fs_hz * tau)).exp();
        Self::first_order(pole, sigma_w, sigma_v)
    }

    /// Resonant pickup tuned to `freq_hz` whose free response envelope falls
    /// to 1% `settle_s` seconds after actuation stops: complex pole pair at
    /// radius exp(-1/(fs tau)), angle 2 pi f / fs, with the input gain
    /// normalized so a steady drive at `freq_hz` comes out at unit gain.
    pub fn resonant(freq_hz: f64, settle_s: f64, fs_hz: f64, sigma_w: f64, sigma_v: f64) -> Result<Self> {
        if !(freq_hz > 0.0) || !(settle_s > 0.0) || !(fs_hz > 0.0) {
            return Err(Error::Parameter(format!(
                "freq_hz = {freq_hz}, settle_s = {settle_s}, fs_hz = {fs_hz}; all must be > 0"
            )));
        }
        if freq_hz >= fs_hz / 2.0 {
            return Err(Error::Parameter(format!(
                "resonance {freq_hz} Hz violates Nyquist at fs = {fs_hz} Hz"
            )));
        }
        let tau = settle_s / 100f64.ln();
        let r = (-1.0 / (fs_hz * tau)).exp();
        let omega = TAU * freq_hz / fs_hz;
        let a1 = 2.0 * r * omega.cos();
        let a2 = -r * r;
        // b0 = |1 - a1 e^{-jw} - a2 e^{-2jw}| makes the gain at resonance 1.
        let e1 = Complex64::new(0.0, -omega).exp();
        let b0 = (Complex64::new(1.0, 0.0) - a1 * e1 - a2 * e1 * e1).norm();
        Self::new(vec![a1, a2, 1.0, 0.0], vec![b0, 0.0], vec![1.0, 0.0], sigma_w, sigma_v)
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    pub fn set_state(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!("state has {} entries, model has {}", x.len(), self.n)));
        }
        ensure_all_finite("state", x)?;
        self.x.copy_from_slice(x);
        Ok(())
    }

    pub fn reset(&mut self) {
        self.x.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Advance one sample: x <- A x + B u + w e1, returning y = C x.
    pub fn step(&mut self, u: f64, w: f64) -> f64 {
        let mut next = vec![0.0; self.n];
        for i in 0..self.n {
            let mut acc = 0.0;
            for j in 0..self.n {
                acc += self.a[i * self.n + j] * self.x[j];
            }
            next[i] = acc + self.b[i] * u;
        }
        next[0] += w;
        self.x = next;
        self.output()
    }

    /// y for the current state, without stepping.
    pub fn output(&self) -> f64 {
        self.c.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    /// Free (u = 0, noiseless) output y_k = C A^k x0 for k = 0..horizon.
    pub fn free_response(&self, x0: &[f64], horizon: usize) -> Result<Vec<f64>> {
        if x0.len() != self.n {
            return Err(Error::Dimension(format!("x0 has {} entries, model has {}", x0.len(), self.n)));
        }
        let mut x = x0.to_vec();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            out.push(self.c.iter().zip(&x).map(|(c, v)| c * v).sum());
            let mut next = vec![0.0; self.n];
            for i in 0..self.n {
                for j in 0..self.n {
                    next[i] += self.a[i * self.n + j] * x[j];
                }
            }
            x = next;
        }
        Ok(out)
    }

    /// Steady-state gain C (I - A)^-1 B.
    pub fn dc_gain(&self) -> f64 {
        // Solve (I - A) z = B by Gaussian elimination.
        let n = self.n;
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = (if i == j { 1.0 } else { 0.0 }) - self.a[i * n + j];
            }
        }
        let mut rhs = self.b.clone();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&p, &q| m[p * n + col].abs().partial_cmp(&m[q * n + col].abs()).unwrap())
                .unwrap();
            if pivot != col {
                for j in 0..n {
                    m.swap(col * n + j, pivot * n + j);
                }
                rhs.swap(col, pivot);
            }
            let p = m[col * n + col];
            if p.abs() < 1e-300 {
                return f64::NAN;
            }
            for row in (col + 1)..n {
                let f = m[row * n + col] / p;
                for j in col..n {
                    m[row * n + j] -= f * m[col * n + j];
                }
                rhs[row] -= f * rhs[col];
            }
        }
        let mut z = vec![0.0; n];
        for row in (0..n).rev() {
            let mut acc = rhs[row];
            for j in (row + 1)..n {
                acc -= m[row * n + j] * z[j];
            }
            z[row] = acc / m[row * n + row];
        }
        self.c.iter().zip(&z).map(|(c, v)| c * v).sum()
    }

    /// Largest eigenvalue magnitude: exact for n <= 2, power-iteration
    /// growth-rate estimate above that.
    pub fn spectral_radius(&self) -> f64 {
        match self.n {
            1 => self.a[0].abs(),
            2 => {
                let (a, b, c, d) = (self.a[0], self.a[1], self.a[2], self.a[3]);
                let tr = a + d;
                let det = a * d - b * c;
                let disc = tr * tr - 4.0 * det;
                if disc >= 0.0 {
                    let r = disc.sqrt();
                    ((tr + r) / 2.0).abs().max(((tr - r) / 2.0).abs())
                } else {
                    det.abs().sqrt()
                }
            }
            n => {
                let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64) * 0.37).collect();
                let mut log_growth = 0.0;
                let iters = 512;
                for _ in 0..iters {
                    let mut next = vec![0.0; n];
                    for i in 0..n {
                        for j in 0..n {
                            next[i] += self.a[i * n + j] * v[j];
                        }
                    }
                    let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm == 0.0 {
                        return 0.0;
                    }
                    log_growth += norm.ln();
                    v = next.iter().map(|x| x / norm).collect();
                }
                (log_growth / iters as f64).exp()
            }
        }
    }
}

/// The passive entity the sensor measures: a tone ring that reflects the
/// probe signal at its characteristic frequency. It emits nothing on its
/// own, so with the actuator off its contribution is identically zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneRing {
    pub freq_hz: f64,
    pub gain: f64,
    pub phase_rad: f64,
}

impl ToneRing {
    pub fn new(freq_hz: f64, gain: f64, phase_rad: f64) -> Result<Self> {
        if !(freq_hz > 0.0) || !freq_hz.is_finite() {
            return Err(Error::Parameter(format!("ring freq_hz = {freq_hz} must be > 0")));
        }
        ensure_finite("ring gain", gain)?;
        ensure_finite("ring phase", phase_rad)?;
        Ok(Self { freq_hz, gain, phase_rad })
    }

    /// Reflection waveform at time `t` (seconds), before modulation.
    pub fn value(&self, t: f64) -> f64 {
        self.gain * (TAU * self.freq_hz * t + self.phase_rad).sin()
    }
}

/// Run the modulated probe through the plant and return the measured pickup
/// signal y(t) = sensor(amplitude(t) u(t) ring(t) + attack(t)) + v(t).
///
/// The attack couples at the plant input: injected field energy drives the
/// same pickup dynamics as the genuine reflection, so an attacker that
/// stops exactly at a challenge leaves no trace in the decay, while late
/// attack energy rings through the sensor and shows up in the residual.
///
/// Per sample the rng is consumed in a fixed order (process noise w, then
/// measurement noise v), so traces are reproducible for a given stream.
/// The model's state is advanced in place.
pub fn simulate_sensor(
    model: &mut StateSpaceModel,
    schedule: &ChallengeSchedule,
    ring: &ToneRing,
    attack: Option<&SignalTrace>,
    fs_hz: f64,
    rng: &mut RngStream,
) -> Result<SignalTrace> {
    if !(fs_hz > 0.0) {
        return Err(Error::Parameter(format!("fs_hz = {fs_hz} must be > 0")));
    }
    if ring.freq_hz >= fs_hz / 2.0 {
        return Err(Error::Parameter(format!(
            "ring frequency {} Hz violates Nyquist at fs = {} Hz",
            ring.freq_hz, fs_hz
        )));
    }
    let n = schedule.total_samples();
    if let Some(atk) = attack {
        if atk.len() < n {
            return Err(Error::Dimension(format!(
                "attack trace has {} samples, schedule needs {n}",
                atk.len()
            )));
        }
    }
    let dt = 1.0 / fs_hz;
    let mut samples = Vec::with_capacity(n);
    for (i, (phase, amplitude)) in schedule.iter_samples().enumerate() {
        let t = i as f64 * dt;
        let reflection = if phase.is_actuated() { amplitude * ring.value(t) } else { 0.0 };
        let a = attack.map_or(0.0, |atk| atk.samples[i]);
        let w = rng.normal(0.0, model.sigma_w);
        let y_clean = model.step(reflection + a, w);
        let v = rng.normal(0.0, model.sigma_v);
        samples.push(y_clean + v);
    }
    SignalTrace::new(samples, fs_hz, 0.0)
}

/// Result of fitting a low-order decay model to silence responses.
#[derive(Debug, Clone)]
pub struct DecayFit {
    pub model: StateSpaceModel,
    /// Pooled RMS of (measured - fitted) over all provided responses.
    pub residual_rms: f64,
    /// Per-pole magnitude decay time constants, seconds.
    pub time_constants_s: Vec<f64>,
    /// Pole magnitudes of the fitted A matrix.
    pub pole_magnitudes: Vec<f64>,
}

/// Least-squares fit of a first- or second-order linear decay to one or
/// more recorded silence responses (sampled at `fs_hz`).
///
/// The fit estimates the autoregression y(k+order) = sum a_i y(k+i) pooled
/// across responses, then per-response initial states, and reports the
/// pooled residual RMS. The input gain is not identifiable from decay data,
/// so B is chosen for unit DC gain.
pub fn fit_decay_model(responses: &[Vec<f64>], order: usize, fs_hz: f64) -> Result<DecayFit> {
    if !(order == 1 || order == 2) {
        return Err(Error::Parameter(format!("order = {order}; only 1 and 2 are supported")));
    }
    if !(fs_hz > 0.0) {
        return Err(Error::Parameter(format!("fs_hz = {fs_hz} must be > 0")));
    }
    if responses.is_empty() {
        return Err(Error::DegenerateFit("no responses provided".into()));
    }
    for (i, r) in responses.iter().enumerate() {
        ensure_all_finite("response", r)?;
        if r.len() < order + 2 {
            return Err(Error::DegenerateFit(format!(
                "response {i} has {} samples; need at least {}",
                r.len(),
                order + 2
            )));
        }
    }
    let energy: f64 = responses.iter().flat_map(|r| r.iter()).map(|y| y * y).sum();
    if energy < 1e-18 {
        return Err(Error::DegenerateFit("responses are identically zero".into()));
    }

    let mut coeffs = ar_regress(responses, order)?;
    // The one-shot regression is biased low by the noise on its lagged
    // regressors, so refine against the real objective: pooled squared
    // error of the refit free responses. Levenberg-Marquardt with finite
    // differences is plenty for one or two coefficients.
    refine_decay_coeffs(&mut coeffs, responses);
    let model = decay_model_from_coeffs(&coeffs)?;

    // Per-response initial state by linear least squares on y_k = C A^k x0.
    let mut sq_sum = 0.0;
    let mut count = 0usize;
    for r in responses {
        let x0 = fit_initial_state(&model, r)?;
        let fitted = model.free_response(&x0, r.len())?;
        for (y, f) in r.iter().zip(&fitted) {
            sq_sum += (y - f) * (y - f);
            count += 1;
        }
    }
    let residual_rms = (sq_sum / count as f64).sqrt();

    let pole_magnitudes = pole_mags(&coeffs);
    let dt = 1.0 / fs_hz;
    let time_constants_s = pole_magnitudes
        .iter()
        .map(|&m| if m > 0.0 && m < 1.0 { -dt / m.ln() } else { f64::INFINITY })
        .collect();

    Ok(DecayFit { model, residual_rms, time_constants_s, pole_magnitudes })
}

/// Pooled least-squares autoregression y(k+order) = sum a_i y(k+i).
fn ar_regress(responses: &[Vec<f64>], order: usize) -> Result<Vec<f64>> {
    match order {
        1 => {
            let (mut num, mut den) = (0.0, 0.0);
            for r in responses {
                for k in 0..r.len() - 1 {
                    num += r[k + 1] * r[k];
                    den += r[k] * r[k];
                }
            }
            if den < 1e-18 {
                return Err(Error::DegenerateFit("zero-energy regression".into()));
            }
            Ok(vec![num / den])
        }
        _ => {
            // Normal equations for y2 = a1 y1 + a2 y0.
            let (mut s11, mut s10, mut s00, mut t1, mut t0) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in responses {
                for k in 0..r.len() - 2 {
                    let (y0, y1, y2) = (r[k], r[k + 1], r[k + 2]);
                    s11 += y1 * y1;
                    s10 += y1 * y0;
                    s00 += y0 * y0;
                    t1 += y2 * y1;
                    t0 += y2 * y0;
                }
            }
            let det = s11 * s00 - s10 * s10;
            if det.abs() < 1e-15 * s11.max(s00).max(1e-300) {
                return Err(Error::DegenerateFit(
                    "singular regression (responses too simple for order 2)".into(),
                ));
            }
            let a1 = (t1 * s00 - t0 * s10) / det;
            let a2 = (t0 * s11 - t1 * s10) / det;
            Ok(vec![a1, a2])
        }
    }
}

/// Pooled squared error of the best per-response refit under `coeffs`,
/// or None when the coefficients do not describe a usable decay.
fn decay_sse(coeffs: &[f64], responses: &[Vec<f64>]) -> Option<f64> {
    let model = decay_model_from_coeffs(coeffs).ok()?;
    let mut sse = 0.0;
    for r in responses {
        let x0 = fit_initial_state(&model, r).ok()?;
        let fitted = model.free_response(&x0, r.len()).ok()?;
        sse += r.iter().zip(&fitted).map(|(y, f)| (y - f) * (y - f)).sum::<f64>();
    }
    Some(sse)
}

/// Minimize decay_sse over the AR coefficients, starting from (and falling
/// back to) the supplied estimate. Best effort: leaves `coeffs` at the best
/// point seen.
fn refine_decay_coeffs(coeffs: &mut Vec<f64>, responses: &[Vec<f64>]) {
    let dim = coeffs.len();
    let Some(mut best) = decay_sse(coeffs, responses) else { return };
    let h = 1e-6;
    let mut lambda = 1e-3;
    for _ in 0..60 {
        let f0 = best;
        // Gradient and Hessian stencils around the current point.
        let mut grad = vec![0.0; dim];
        let mut hess = vec![0.0; dim * dim];
        let mut probe = coeffs.clone();
        let eval = |p: &mut Vec<f64>, i: usize, di: f64, j: usize, dj: f64| -> Option<f64> {
            p.copy_from_slice(coeffs);
            p[i] += di;
            p[j] += dj;
            decay_sse(p, responses)
        };
        let mut ok = true;
        for i in 0..dim {
            let (Some(fp), Some(fm)) =
                (eval(&mut probe, i, h, i, 0.0), eval(&mut probe, i, -h, i, 0.0))
            else {
                ok = false;
                break;
            };
            grad[i] = (fp - fm) / (2.0 * h);
            hess[i * dim + i] = (fp + fm - 2.0 * f0) / (h * h);
        }
        if ok && dim == 2 {
            match (
                eval(&mut probe, 0, h, 1, h),
                eval(&mut probe, 0, h, 1, -h),
                eval(&mut probe, 0, -h, 1, h),
                eval(&mut probe, 0, -h, 1, -h),
            ) {
                (Some(fpp), Some(fpm), Some(fmp), Some(fmm)) => {
                    let hxy = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
                    hess[1] = hxy;
                    hess[2] = hxy;
                }
                _ => ok = false,
            }
        }
        if !ok || grad.iter().all(|g| g.abs() < 1e-14 * (1.0 + f0)) {
            break;
        }
        // Damped Newton step; grow the damping until the step helps.
        let mut improved = false;
        for _ in 0..25 {
            let step = match dim {
                1 => {
                    let d = hess[0] + lambda;
                    if d <= 0.0 {
                        lambda = (lambda * 10.0).max(1e-12);
                        continue;
                    }
                    vec![-grad[0] / d]
                }
                _ => {
                    let (a, b, c) = (hess[0] + lambda, hess[1], hess[3] + lambda);
                    let det = a * c - b * b;
                    if det <= 0.0 || a <= 0.0 {
                        lambda = (lambda * 10.0).max(1e-12);
                        continue;
                    }
                    vec![(-grad[0] * c + grad[1] * b) / det, (grad[0] * b - grad[1] * a) / det]
                }
            };
            let cand: Vec<f64> = coeffs.iter().zip(&step).map(|(c, s)| c + s).collect();
            match decay_sse(&cand, responses) {
                Some(s2) if s2 < best => {
                    *coeffs = cand;
                    best = s2;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = true;
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !improved || (f0 - best) < 1e-15 * (1.0 + f0) {
            break;
        }
    }
}

fn decay_model_from_coeffs(coeffs: &[f64]) -> Result<StateSpaceModel> {
    match coeffs.len() {
        1 => {
            let a = coeffs[0];
            if a.abs() >= 1.0 {
                return Err(Error::DegenerateFit(format!("fitted pole {a} is not a decay")));
            }
            StateSpaceModel::first_order(a, 0.0, 0.0)
        }
        _ => {
            let (a1, a2) = (coeffs[0], coeffs[1]);
            let m = StateSpaceModel::new(
                vec![a1, a2, 1.0, 0.0],
                vec![1.0 - a1 - a2, 0.0],
                vec![1.0, 0.0],
                0.0,
                0.0,
            );
            match m {
                Ok(m) => Ok(m),
                Err(Error::Parameter(msg)) => {
                    Err(Error::DegenerateFit(format!("fit is not a decay: {msg}")))
                }
                Err(e) => Err(e),
            }
        }
    }
}

fn pole_mags(coeffs: &[f64]) -> Vec<f64> {
    match coeffs.len() {
        1 => vec![coeffs[0].abs()],
        _ => {
            let (a1, a2) = (coeffs[0], coeffs[1]);
            // Roots of z^2 - a1 z - a2.
            let disc = a1 * a1 + 4.0 * a2;
            if disc >= 0.0 {
                let r = disc.sqrt();
                vec![((a1 + r) / 2.0).abs(), ((a1 - r) / 2.0).abs()]
            } else {
                let m = (-a2).sqrt();
                vec![m, m]
            }
        }
    }
}

fn fit_initial_state(model: &StateSpaceModel, r: &[f64]) -> Result<Vec<f64>> {
    let n = model.order();
    // Rows of the design matrix: C A^k, built by iterating ck <- ck A.
    let mut ck = model.c().to_vec();
    let mut ata = vec![0.0; n * n];
    let mut aty = vec![0.0; n];
    for &y in r {
        for i in 0..n {
            aty[i] += ck[i] * y;
            for j in 0..n {
                ata[i * n + j] += ck[i] * ck[j];
            }
        }
        let mut next = vec![0.0; n];
        for j in 0..n {
            for i in 0..n {
                next[j] += ck[i] * model.a()[i * n + j];
            }
        }
        ck = next;
    }
    solve_sym(&mut ata, &mut aty, n)
        .ok_or_else(|| Error::DegenerateFit("initial-state normal equations are singular".into()))
}

fn solve_sym(m: &mut [f64], rhs: &mut [f64], n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let pivot = (col..n).max_by(|&p, &q| m[p * n + col].abs().partial_cmp(&m[q * n + col].abs()).unwrap())?;
        if m[pivot * n + col].abs() < 1e-14 {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                m.swap(col * n + j, pivot * n + j);
            }
            rhs.swap(col, pivot);
        }
        for row in (col + 1)..n {
            let f = m[row * n + col] / m[col * n + col];
            for j in col..n {
                m[row * n + j] -= f * m[col * n + j];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut out = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for j in (row + 1)..n {
            acc -= m[row * n + j] * out[j];
        }
        out[row] = acc / m[row * n + row];
    }
    Some(out)
}

/// Empirical q-quantile of attack-free detection statistics, used as the
/// alarm threshold. Requires at least 100 samples so the tail is real data,
/// not interpolation artifacts.
pub fn calibrate_threshold(attack_free_stats: &[f64], q: f64) -> Result<f64> {
    if attack_free_stats.len() < 100 {
        return Err(Error::Calibration(format!(
            "{} attack-free statistics provided; need >= 100",
            attack_free_stats.len()
        )));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Parameter(format!("quantile q = {q} outside (0, 1)")));
    }
    crate::stats::quantile(attack_free_stats, q)
}

/// Inductive coupling scene for the RFID eavesdropper experiment.
///
/// The reader drives a carrier; the tag load-modulates it with coupling
/// kappa_tag and bit pattern m(t); a passive eavesdropper siphons a further
/// kappa_eve of the field. Total coupling must stay below 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingScene {
    pub carrier_freq_hz: f64,
    pub kappa_tag: f64,
    pub tag_bits: Vec<bool>,
    pub bit_rate_hz: f64,
    pub kappa_eve: f64,
    pub sigma_v: f64,
}

impl CouplingScene {
    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_freq_hz > 0.0) {
            return Err(Error::Parameter("carrier_freq_hz must be > 0".into()));
        }
        if self.kappa_tag < 0.0 || self.kappa_eve < 0.0 {
            return Err(Error::Parameter("coupling coefficients must be >= 0".into()));
        }
        if self.kappa_tag + self.kappa_eve >= 1.0 {
            return Err(Error::Parameter(format!(
                "kappa_tag + kappa_eve = {} must be < 1",
                self.kappa_tag + self.kappa_eve
            )));
        }
        if !self.tag_bits.is_empty() && !(self.bit_rate_hz > 0.0) {
            return Err(Error::Parameter("bit_rate_hz must be > 0 when tag bits are present".into()));
        }
        if self.sigma_v < 0.0 {
            return Err(Error::Parameter("sigma_v must be >= 0".into()));
        }
        Ok(())
    }

    /// Tag load modulation m(t): the current bit as 0.0 / 1.0.
    pub fn tag_bit_at(&self, t: f64) -> f64 {
        if self.tag_bits.is_empty() {
            return 0.0;
        }
        let idx = (t * self.bit_rate_hz).floor() as usize % self.tag_bits.len();
        if self.tag_bits[idx] {
            1.0
        } else {
            0.0
        }
    }
}

/// Measured reader pickup:
/// y = amplitude u(t) carrier(t) (1 - kappa_tag m(t) - kappa_eve) + v.
pub fn rfid_observe(
    scene: &CouplingScene,
    schedule: &ChallengeSchedule,
    fs_hz: f64,
    rng: &mut RngStream,
) -> Result<SignalTrace> {
    rfid_trace(scene, schedule, fs_hz, true, Some(rng))
}

/// The defender's model of the same pickup: tag coupling included,
/// eavesdropper and noise excluded.
pub fn rfid_expected(scene: &CouplingScene, schedule: &ChallengeSchedule, fs_hz: f64) -> Result<SignalTrace> {
    rfid_trace(scene, schedule, fs_hz, false, None)
}

fn rfid_trace(
    scene: &CouplingScene,
    schedule: &ChallengeSchedule,
    fs_hz: f64,
    with_eve: bool,
    rng: Option<&mut RngStream>,
) -> Result<SignalTrace> {
    scene.validate()?;
    if !(fs_hz > 0.0) {
        return Err(Error::Parameter(format!("fs_hz = {fs_hz} must be > 0")));
    }
    if scene.carrier_freq_hz >= fs_hz / 2.0 {
        return Err(Error::Parameter(format!(
            "carrier {} Hz violates Nyquist at fs = {} Hz",
            scene.carrier_freq_hz, fs_hz
        )));
    }
    let dt = 1.0 / fs_hz;
    let eve = if with_eve { scene.kappa_eve } else { 0.0 };
    let mut rng = rng;
    let samples = schedule
        .iter_samples()
        .enumerate()
        .map(|(i, (phase, amplitude))| {
            let t = i as f64 * dt;
            let carrier = (TAU * scene.carrier_freq_hz * t).sin();
            let base = if phase.is_actuated() {
                amplitude * carrier * (1.0 - scene.kappa_tag * scene.tag_bit_at(t) - eve)
            } else {
                0.0
            };
            let v = rng.as_deref_mut().map_or(0.0, |r| r.normal(0.0, scene.sigma_v));
            base + v
        })
        .collect();
    SignalTrace::new(samples, fs_hz, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{Phase, Segment};

    fn steady_then_silent(steady: usize, silent: usize) -> ChallengeSchedule {
        ChallengeSchedule::new(vec![
            Segment { phase: Phase::Steady, amplitude: 1.0, duration_samples: steady },
            Segment { phase: Phase::Silent, amplitude: 0.0, duration_samples: silent },
        ])
        .unwrap()
    }

    #[test]
    fn constructor_rejects_unstable_a() {
        assert!(StateSpaceModel::first_order(1.0, 0.0, 0.0).is_err());
        assert!(StateSpaceModel::first_order(-1.2, 0.0, 0.0).is_err());
        assert!(StateSpaceModel::second_order(0.99, 1.01, 0.0, 0.0).is_err());
    }

    #[test]
    fn constructor_rejects_bad_dims_and_noise() {
        assert!(StateSpaceModel::new(vec![0.5], vec![1.0, 0.0], vec![1.0], 0.0, 0.0).is_err());
        assert!(StateSpaceModel::first_order(0.5, -0.1, 0.0).is_err());
        assert!(StateSpaceModel::new(vec![f64::NAN], vec![1.0], vec![1.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn step_matches_hand_computation() {
        let mut m = StateSpaceModel::first_order(0.5, 0.0, 0.0).unwrap();
        // x1 = 0.5*0 + 0.5*1 = 0.5, y = 0.5
        assert_eq!(m.step(1.0, 0.0), 0.5);
        // x2 = 0.5*0.5 + 0.5*1 = 0.75
        assert_eq!(m.step(1.0, 0.0), 0.75);
        // process noise enters the driven state
        assert_eq!(m.step(0.0, 0.125), 0.5);
    }

    #[test]
    fn dc_gain_is_unity_for_canonical_models() {
        let m1 = StateSpaceModel::first_order(0.9, 0.0, 0.0).unwrap();
        assert!((m1.dc_gain() - 1.0).abs() < 1e-12);
        let m2 = StateSpaceModel::second_order(0.8, 0.5, 0.0, 0.0).unwrap();
        assert!((m2.dc_gain() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resonant_model_rings_at_its_tuned_frequency() {
        let fs = 10_000.0;
        let mut m = StateSpaceModel::resonant(71.0, 0.035, fs, 0.0, 0.0).unwrap();
        // Steady drive at resonance comes out near unit amplitude.
        let mut peak = 0.0f64;
        for k in 0..10_000 {
            let t = k as f64 / fs;
            let y = m.step((TAU * 71.0 * t).sin(), 0.0);
            if k > 6_000 {
                peak = peak.max(y.abs());
            }
        }
        assert!((peak - 1.0).abs() < 0.02, "steady gain at resonance {peak}");
        // Free decay keeps oscillating near 71 Hz while the envelope falls
        // to ~1% of its start by 35 ms.
        let x0 = m.state().to_vec();
        let free = m.free_response(&x0, 500).unwrap();
        let start_env = free[..70].iter().fold(0.0f64, |acc, y| acc.max(y.abs()));
        let late_env = free[350..].iter().fold(0.0f64, |acc, y| acc.max(y.abs()));
        assert!(late_env < 0.02 * start_env, "late {late_env} vs start {start_env}");
        let crossings = free[..280].windows(2).filter(|w| w[0] * w[1] < 0.0).count();
        // 71 Hz over 28 ms is just short of two periods: 4 sign changes.
        assert!((3..=5).contains(&crossings), "zero crossings {crossings}");
    }

    #[test]
    fn free_response_is_plain_geometric_decay_for_first_order() {
        let m = StateSpaceModel::first_order(0.75, 0.0, 0.0).unwrap();
        let resp = m.free_response(&[2.0], 5).unwrap();
        let expect = [2.0, 1.5, 1.125, 0.84375, 0.6328125];
        for (a, b) in resp.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn default_sensor_settles_to_one_percent_at_35ms() {
        let fs = 10_000.0;
        let mut m = StateSpaceModel::from_settle_time(0.035, fs, 0.0, 0.0).unwrap();
        m.set_state(&[1.0]).unwrap();
        let resp = m.free_response(&[1.0], 400).unwrap();
        let at_35ms = resp[(0.035 * fs) as usize];
        assert!(at_35ms <= 0.0101, "|y| at 35 ms = {at_35ms}");
        assert!(resp[(0.020 * fs) as usize] > 0.05, "should not have settled by 20 ms");
    }

    #[test]
    fn doubling_the_drive_doubles_the_noiseless_output_exactly() {
        let ring = ToneRing::new(71.0, 1.0, 0.0).unwrap();
        let fs = 10_000.0;
        let sched1 = steady_then_silent(300, 100);
        let sched2 = ChallengeSchedule::new(vec![
            Segment { phase: Phase::Steady, amplitude: 2.0, duration_samples: 300 },
            Segment { phase: Phase::Silent, amplitude: 0.0, duration_samples: 100 },
        ])
        .unwrap();
        let mut m1 = StateSpaceModel::from_settle_time(0.035, fs, 0.0, 0.0).unwrap();
        let mut m2 = m1.clone();
        let mut rng1 = RngStream::new(1);
        let mut rng2 = RngStream::new(1);
        let y1 = simulate_sensor(&mut m1, &sched1, &ring, None, fs, &mut rng1).unwrap();
        let y2 = simulate_sensor(&mut m2, &sched2, &ring, None, fs, &mut rng2).unwrap();
        for (a, b) in y1.samples.iter().zip(&y2.samples) {
            assert_eq!(2.0 * a, *b, "superposition must be exact for a doubled drive");
        }
    }

    #[test]
    fn passive_ring_means_silence_decays_to_nothing() {
        let ring = ToneRing::new(71.0, 1.0, 0.0).unwrap();
        let fs = 10_000.0;
        let sched = steady_then_silent(2_000, 1_000);
        let mut m = StateSpaceModel::from_settle_time(0.035, fs, 0.0, 0.0).unwrap();
        let mut rng = RngStream::new(2);
        let y = simulate_sensor(&mut m, &sched, &ring, None, fs, &mut rng).unwrap();
        let fs_i = fs as usize;
        // 35 ms after the challenge the free response is at the 1% level.
        let k = 2_000 + 35 * fs_i / 1000;
        assert!(y.samples[k].abs() < 0.011, "y = {} at 35 ms into silence", y.samples[k]);
        let tail_rms = (y.samples[2_900..].iter().map(|v| v * v).sum::<f64>() / 100.0).sqrt();
        assert!(tail_rms < 1e-3, "tail rms {tail_rms}");
    }

    #[test]
    fn simulate_rejects_nyquist_violation() {
        let ring = ToneRing::new(6_000.0, 1.0, 0.0).unwrap();
        let mut m = StateSpaceModel::first_order(0.5, 0.0, 0.0).unwrap();
        let mut rng = RngStream::new(2);
        let sched = steady_then_silent(10, 10);
        assert!(simulate_sensor(&mut m, &sched, &ring, None, 10_000.0, &mut rng).is_err());
    }

    #[test]
    fn fit_recovers_first_order_time_constant_exactly_on_clean_data() {
        let fs = 10_000.0;
        let tau = 0.0076;
        let pole = f64::exp(-1.0 / (fs * tau));
        let m = StateSpaceModel::first_order(pole, 0.0, 0.0).unwrap();
        let resp = m.free_response(&[0.8], 300).unwrap();
        let fit = fit_decay_model(&[resp], 1, fs).unwrap();
        let err = (fit.time_constants_s[0] - tau).abs() / tau;
        assert!(err < 1e-3, "tau relative error {err}");
        assert!(fit.residual_rms < 1e-12);
    }

    #[test]
    fn fit_second_order_hits_noise_floor_on_noisy_data() {
        let fs = 10_000.0;
        let m = StateSpaceModel::second_order(0.97, 0.90, 0.0, 0.0).unwrap();
        let mut rng = RngStream::new(21);
        let sigma = 0.0035;
        let mut responses = Vec::new();
        for amp in [1.0, 0.8, 1.2] {
            let clean = m.free_response(&[amp, amp], 250).unwrap();
            responses.push(clean.iter().map(|y| y + rng.normal(0.0, sigma)).collect());
        }
        let fit = fit_decay_model(&responses, 2, fs).unwrap();
        assert!(fit.residual_rms <= 0.005, "residual rms {}", fit.residual_rms);
        assert!(fit.pole_magnitudes.iter().all(|p| *p < 1.0));
    }

    #[test]
    fn fit_rejects_degenerate_inputs() {
        assert!(fit_decay_model(&[], 1, 100.0).is_err());
        assert!(fit_decay_model(&[vec![0.0; 50]], 1, 100.0).is_err());
        assert!(matches!(
            fit_decay_model(&[vec![1.0, 1.1]], 2, 100.0),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn calibrate_needs_a_real_sample() {
        assert!(calibrate_threshold(&[1.0; 99], 0.95).is_err());
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let thr = calibrate_threshold(&xs, 0.95).unwrap();
        assert!((thr - 949.05).abs() < 1e-9, "thr {thr}");
        assert!(calibrate_threshold(&xs, 1.0).is_err());
    }

    #[test]
    fn rfid_scene_validation() {
        let mut scene = CouplingScene {
            carrier_freq_hz: 125_000.0,
            kappa_tag: 0.6,
            tag_bits: vec![true, false],
            bit_rate_hz: 4_000.0,
            kappa_eve: 0.5,
            sigma_v: 0.01,
        };
        assert!(scene.validate().is_err(), "couplings sum to >= 1");
        scene.kappa_eve = 0.1;
        assert!(scene.validate().is_ok());
    }

    #[test]
    fn rfid_eavesdropper_shaves_the_expected_fraction_of_amplitude() {
        let fs = 1_000_000.0;
        let scene = CouplingScene {
            carrier_freq_hz: 125_000.0,
            kappa_tag: 0.0,
            tag_bits: vec![],
            bit_rate_hz: 0.0,
            kappa_eve: 0.05,
            sigma_v: 0.0005,
        };
        let sched = steady_then_silent(4_000, 1_000);
        let mut rng = RngStream::new(5);
        let y = rfid_observe(&scene, &sched, fs, &mut rng).unwrap();
        let expected = rfid_expected(&scene, &sched, fs).unwrap();
        let rms_meas = (y.samples[..4_000].iter().map(|v| v * v).sum::<f64>() / 4_000.0).sqrt();
        let rms_model = (expected.samples[..4_000].iter().map(|v| v * v).sum::<f64>() / 4_000.0).sqrt();
        let ratio = rms_meas / rms_model;
        assert!((ratio - 0.95).abs() < 0.005, "amplitude ratio {ratio}, want ~0.95");
        // Silence carries no carrier at all.
        assert!(y.samples[4_500].abs() < 5.0 * scene.sigma_v);
    }
}
