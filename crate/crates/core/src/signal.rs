//! Uniformly sampled finite-horizon signals and their one-sided Fourier
//! transforms.
//!
//! A [`Signal`] stands in for a function on `[0, T]` (zero afterwards). Time
//! integrals use the trapezoidal rule, and [`fourier`] evaluates the unitary
//! one-sided transform
//!
//! ```text
//! û(jω) = 1/√(2π) ∫₀^T u(t) e^{-jωt} dt
//! ```
//!
//! of the trapezoid-weighted samples, which makes it exact for the sampled
//! representative. Frequency-band integrals are trapezoidal as well, with the
//! integrand interpolated linearly when a band edge falls between grid points.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Relative tolerance used when comparing sample spacings.
const DT_RTOL: f64 = 1e-12;

/// Uniformly sampled, vector-valued time series starting at `t = 0`.
///
/// Samples are stored row-major: sample `m` occupies
/// `data[m * dim..(m + 1) * dim]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    dt: f64,
    dim: usize,
    data: Vec<f64>,
}

impl Signal {
    pub fn from_flat(dt: f64, dim: usize, data: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("sample spacing must be positive, got {dt}")));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("signal dimension must be at least 1".into()));
        }
        if data.is_empty() || data.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values cannot be split into samples of dimension {dim}",
                data.len()
            )));
        }
        Ok(Signal { dt, dim, data })
    }

    /// Builds a signal from a list of sample vectors that must share one dimension.
    pub fn new(dt: f64, samples: &[Vec<f64>]) -> Result<Self> {
        let dim = samples.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(samples.len() * dim);
        for s in samples {
            if s.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: s.len() });
            }
            data.extend_from_slice(s);
        }
        Signal::from_flat(dt, dim, data)
    }

    pub fn scalar(dt: f64, values: Vec<f64>) -> Result<Self> {
        Signal::from_flat(dt, 1, values)
    }

    pub fn zeros(dt: f64, dim: usize, len: usize) -> Result<Self> {
        Signal::from_flat(dt, dim, vec![0.0; dim * len])
    }

    /// Number of samples needed to cover `[0, horizon]` at spacing `dt`.
    pub fn len_for(dt: f64, horizon: f64) -> usize {
        (horizon / dt).round() as usize + 1
    }

    /// Samples a scalar function on `[0, horizon]`.
    pub fn from_fn(dt: f64, horizon: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let len = Signal::len_for(dt, horizon);
        Signal::scalar(dt, (0..len).map(|m| f(m as f64 * dt)).collect())
    }

    /// Samples a vector-valued function on `[0, horizon]`.
    pub fn from_fn_vec(dt: f64, horizon: f64, dim: usize, f: impl Fn(f64, &mut [f64])) -> Result<Self> {
        let len = Signal::len_for(dt, horizon);
        let mut data = vec![0.0; len * dim];
        for (m, chunk) in data.chunks_exact_mut(dim.max(1)).enumerate() {
            f(m as f64 * dt, chunk);
        }
        Signal::from_flat(dt, dim, data)
    }

    /// Rectangular scalar pulse on `[start, start + width)` whose trapezoidal
    /// area is exactly `area`. A sample landing on the trailing edge takes half
    /// the height, which makes the area `height * width` whenever the edges are
    /// on the grid.
    pub fn pulse(dt: f64, horizon: f64, start: f64, width: f64, area: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::InvalidArgument(format!("pulse width must be positive, got {width}")));
        }
        let len = Signal::len_for(dt, horizon);
        let end = start + width;
        let eps = 1e-9 * dt;
        let mut values: Vec<f64> = (0..len)
            .map(|m| {
                let t = m as f64 * dt;
                let on_edge = (t - end).abs() <= eps || (start > eps && (t - start).abs() <= eps);
                if on_edge {
                    0.5
                } else if t >= start - eps && t < end {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let sig = Signal::scalar(dt, values.clone())?;
        let raw = trapezoid(&sig.component(0), dt);
        if raw <= 0.0 {
            return Err(Error::InvalidArgument("pulse narrower than one sample".into()));
        }
        let h = area / raw;
        values.iter_mut().for_each(|v| *v *= h);
        Signal::scalar(dt, values)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Final sample time `dt * (len - 1)`.
    pub fn horizon(&self) -> f64 {
        self.dt * (self.len() - 1) as f64
    }

    pub fn time(&self, m: usize) -> f64 {
        self.dt * m as f64
    }

    pub fn sample(&self, m: usize) -> &[f64] {
        &self.data[m * self.dim..(m + 1) * self.dim]
    }

    pub fn sample_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.data[m * self.dim..(m + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Values of component `i` over time.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.samples().map(|s| s[i]).collect()
    }

    pub fn scaled(&self, a: f64) -> Signal {
        Signal { dt: self.dt, dim: self.dim, data: self.data.iter().map(|v| a * v).collect() }
    }

    /// Pointwise `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Signal, b: f64) -> Result<Signal> {
        check_same_grid(self, other)?;
        let data = self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect();
        Ok(Signal { dt: self.dt, dim: self.dim, data })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Largest Euclidean sample norm over the trailing `fraction` of the horizon.
    pub fn tail_max_norm(&self, fraction: f64) -> f64 {
        let len = self.len();
        let start = ((1.0 - fraction.clamp(0.0, 1.0)) * (len - 1) as f64).floor() as usize;
        (start..len).map(|m| norm(self.sample(m))).fold(0.0, f64::max)
    }

    /// Whether the signal has decayed below `rtol * (1 + peak)` before the horizon,
    /// the numerical stand-in for L1 ∩ L2 membership.
    pub fn is_decayed(&self, rtol: f64) -> bool {
        let peak = (0..self.len()).map(|m| norm(self.sample(m))).fold(0.0, f64::max);
        self.tail_max_norm(0.02) <= rtol * (1.0 + peak)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn check_same_grid(a: &Signal, b: &Signal) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch { expected: a.dim, found: b.dim });
    }
    if (a.dt - b.dt).abs() > DT_RTOL * a.dt || a.len() != b.len() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// Trapezoidal integral of uniformly spaced scalar samples.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => dt * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1])),
    }
}

/// Trapezoidal integral with the leading Euler-Maclaurin endpoint correction,
/// using third-order one-sided derivative estimates. An endpoint is left
/// uncorrected when second- and third-order estimates disagree, i.e. when the
/// samples do not resolve a smooth function there (a step at `t = 0`, say).
/// Falls back to the plain rule for fewer than four samples.
pub fn trapezoid_corrected(values: &[f64], dt: f64) -> f64 {
    let n = values.len();
    let base = trapezoid(values, dt);
    if n < 4 {
        return base;
    }
    let slope = |f: [f64; 4]| -> f64 {
        let d3 = (-11.0 * f[0] + 18.0 * f[1] - 9.0 * f[2] + 2.0 * f[3]) / 6.0;
        let d2 = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / 2.0;
        let scale = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if (d3 - d2).abs() <= 1e-2 * scale {
            d3 / dt
        } else {
            0.0
        }
    };
    let d0 = slope([values[0], values[1], values[2], values[3]]);
    let d1 = -slope([values[n - 1], values[n - 2], values[n - 3], values[n - 4]]);
    base - dt * dt / 12.0 * (d1 - d0)
}

/// Linear frequency grid `ω_k = k * omega_max / (count - 1)`, `k = 0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqGrid {
    pub omega_max: f64,
    pub count: usize,
}

impl FreqGrid {
    pub const MIN_COUNT: usize = 64;

    pub fn new(omega_max: f64, count: usize) -> Result<Self> {
        if !(omega_max > 0.0 && omega_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("omega_max must be positive, got {omega_max}")));
        }
        if count < Self::MIN_COUNT {
            return Err(Error::InvalidArgument(format!(
                "frequency grid needs at least {} points, got {count}",
                Self::MIN_COUNT
            )));
        }
        Ok(FreqGrid { omega_max, count })
    }

    /// 4096 points on `[0, min(100, π/dt)]`.
    pub fn default_for(dt: f64) -> Self {
        FreqGrid { omega_max: nyquist(dt).min(100.0), count: 4096 }
    }

    /// Grid reaching the Nyquist frequency of `dt`.
    pub fn to_nyquist(dt: f64, count: usize) -> Result<Self> {
        FreqGrid::new(nyquist(dt), count)
    }

    pub fn step(&self) -> f64 {
        self.omega_max / (self.count - 1) as f64
    }

    pub fn freqs(&self) -> Vec<f64> {
        let step = self.step();
        let mut v: Vec<f64> = (0..self.count).map(|k| k as f64 * step).collect();
        v[self.count - 1] = self.omega_max;
        v
    }
}

pub fn nyquist(dt: f64) -> f64 {
    PI / dt
}

/// Complex samples of a signal's Fourier transform on a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    freqs: Vec<f64>,
    dim: usize,
    values: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(freqs: Vec<f64>, dim: usize, values: Vec<Complex64>) -> Result<Self> {
        if dim == 0 || values.len() != freqs.len() * dim {
            return Err(Error::InvalidArgument("spectrum values do not match the grid".into()));
        }
        if freqs.first().is_some_and(|&w| w < 0.0) || freqs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("frequencies must be nonnegative and strictly increasing".into()));
        }
        Ok(Spectrum { freqs, dim, values })
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, k: usize) -> &[Complex64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn omega_max(&self) -> f64 {
        *self.freqs.last().unwrap_or(&0.0)
    }

    pub fn scaled(&self, a: f64) -> Spectrum {
        Spectrum { freqs: self.freqs.clone(), dim: self.dim, values: self.values.iter().map(|v| v * a).collect() }
    }
}

/// Returns `sig` with every sample after time `t_cut` set to zero.
pub fn truncate(sig: &Signal, t_cut: f64) -> Signal {
    let mut out = sig.clone();
    if t_cut < 0.0 {
        out.data.iter_mut().for_each(|v| *v = 0.0);
        return out;
    }
    let keep = (t_cut / sig.dt + 1e-9).floor();
    if keep >= (sig.len() - 1) as f64 {
        return out;
    }
    let first_zero = keep as usize + 1;
    out.data[first_zero * sig.dim..].iter_mut().for_each(|v| *v = 0.0);
    out
}

/// `√(∫|u|² dt)` by the trapezoidal rule.
pub fn l2_norm(sig: &Signal) -> f64 {
    let sq: Vec<f64> = sig.samples().map(|s| s.iter().map(|x| x * x).sum()).collect();
    trapezoid(&sq, sig.dt).max(0.0).sqrt()
}

/// Central differences inside, second-order one-sided stencils at both ends.
pub fn derivative(sig: &Signal) -> Result<Signal> {
    let len = sig.len();
    if len < 3 {
        return Err(Error::TooShort { len, min: 3 });
    }
    let (n, dt) = (sig.dim, sig.dt);
    let mut out = vec![0.0; sig.data.len()];
    let at = |m: usize, i: usize| sig.data[m * n + i];
    for i in 0..n {
        out[i] = (-3.0 * at(0, i) + 4.0 * at(1, i) - at(2, i)) / (2.0 * dt);
        for m in 1..len - 1 {
            out[m * n + i] = (at(m + 1, i) - at(m - 1, i)) / (2.0 * dt);
        }
        let l = len - 1;
        out[l * n + i] = (3.0 * at(l, i) - 4.0 * at(l - 1, i) + at(l - 2, i)) / (2.0 * dt);
    }
    Ok(Signal { dt, dim: n, data: out })
}

/// Trapezoidal `∫₀^T ⟨a(t), b(t)⟩ dt`. A cut between samples integrates the
/// last partial interval with the product interpolated linearly.
pub fn inner_integral(a: &Signal, b: &Signal, t_cut: f64) -> Result<f64> {
    check_same_grid(a, b)?;
    if t_cut <= 0.0 {
        return Ok(0.0);
    }
    let prod: Vec<f64> =
        a.samples().zip(b.samples()).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum()).collect();
    let pos = t_cut / a.dt;
    if pos >= (prod.len() - 1) as f64 {
        return Ok(trapezoid(&prod, a.dt));
    }
    let whole = (pos + 1e-9).floor() as usize;
    let mut total = trapezoid(&prod[..=whole], a.dt);
    let frac = pos - whole as f64;
    if frac > 1e-9 {
        let p0 = prod[whole];
        let p1 = prod[whole + 1];
        let mid = p0 + frac * (p1 - p0);
        total += 0.5 * frac * a.dt * (p0 + mid);
    }
    Ok(total)
}

fn trapezoid_weighted(sig: &Signal, i: usize) -> Vec<f64> {
    let len = sig.len();
    let mut c: Vec<f64> = sig.samples().map(|s| s[i]).collect();
    if len > 1 {
        c[0] *= 0.5;
        c[len - 1] *= 0.5;
    }
    c
}

/// One-sided unitary Fourier transform on a linear grid.
///
/// The sum `Σ_m c_m e^{-jω_k t_m}` is evaluated for all grid points at once
/// with Bluestein's chirp substitution `km = (k² + m² − (k−m)²)/2`, which
/// turns it into a single FFT convolution.
pub fn fourier(sig: &Signal, grid: &FreqGrid) -> Result<Spectrum> {
    let nyq = nyquist(sig.dt);
    if grid.omega_max > nyq * (1.0 + 1e-12) {
        return Err(Error::AboveNyquist { omega_max: grid.omega_max, nyquist: nyq });
    }
    let freqs = grid.freqs();
    let m_out = grid.count;
    let n_in = sig.len();
    let theta = grid.step() * sig.dt;
    let scale = sig.dt * INV_SQRT_2PI;

    let l = (n_in + m_out - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(l);
    let inv = planner.plan_fft_inverse(l);

    let chirp: Vec<Complex64> = (0..n_in.max(m_out))
        .map(|p| {
            let p = p as f64;
            Complex64::from_polar(1.0, -0.5 * theta * p * p)
        })
        .collect();
    let mut kernel = vec![Complex64::new(0.0, 0.0); l];
    for p in 0..m_out {
        kernel[p] = chirp[p].conj();
    }
    for p in 1..n_in {
        kernel[l - p] = chirp[p].conj();
    }
    fwd.process(&mut kernel);

    let mut values = vec![Complex64::new(0.0, 0.0); m_out * sig.dim];
    for i in 0..sig.dim {
        let c = trapezoid_weighted(sig, i);
        let x = chirp_convolve(&c, &chirp, &kernel, l, m_out, &fwd, &inv);
        for (k, xk) in x.into_iter().enumerate() {
            values[k * sig.dim + i] = xk * scale;
        }
    }
    Spectrum::new(freqs, sig.dim, values)
}

fn chirp_convolve(
    c: &[f64],
    chirp: &[Complex64],
    kernel_hat: &[Complex64],
    l: usize,
    m_out: usize,
    fwd: &Arc<dyn Fft<f64>>,
    inv: &Arc<dyn Fft<f64>>,
) -> Vec<Complex64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); l];
    for (m, &cm) in c.iter().enumerate() {
        buf[m] = chirp[m] * cm;
    }
    fwd.process(&mut buf);
    for (b, k) in buf.iter_mut().zip(kernel_hat) {
        *b *= k;
    }
    inv.process(&mut buf);
    let norm = 1.0 / l as f64;
    (0..m_out).map(|k| chirp[k] * buf[k] * norm).collect()
}

/// Direct O(N·M) evaluation of the same transform at arbitrary frequencies.
pub fn fourier_at(sig: &Signal, omegas: &[f64]) -> Vec<Vec<Complex64>> {
    let weighted: Vec<Vec<f64>> = (0..sig.dim).map(|i| trapezoid_weighted(sig, i)).collect();
    omegas
        .iter()
        .map(|&w| {
            weighted
                .iter()
                .map(|c| {
                    let sum: Complex64 = c
                        .iter()
                        .enumerate()
                        .map(|(m, &cm)| Complex64::from_polar(cm, -w * m as f64 * sig.dt))
                        .sum();
                    sum * sig.dt * INV_SQRT_2PI
                })
                .collect()
        })
        .collect()
}

fn check_band(spec: &Spectrum, lo: f64, hi: f64) -> Result<()> {
    if !(lo >= 0.0 && lo <= hi && hi <= spec.omega_max() * (1.0 + 1e-12)) {
        return Err(Error::InvalidArgument(format!(
            "band [{lo}, {hi}] is not inside the grid [0, {}]",
            spec.omega_max()
        )));
    }
    Ok(())
}

/// Trapezoidal integral over `[lo, hi]` of samples given on `freqs`, with the
/// integrand interpolated linearly at band edges that fall between grid points.
pub fn integrate_band(freqs: &[f64], integrand: &[f64], lo: f64, hi: f64) -> f64 {
    let hi = hi.min(*freqs.last().unwrap_or(&0.0));
    if hi <= lo || freqs.len() < 2 {
        return 0.0;
    }
    let interp = |w: f64| -> f64 {
        let k = match freqs.binary_search_by(|f| f.partial_cmp(&w).unwrap()) {
            Ok(k) => return integrand[k],
            Err(k) => k.clamp(1, freqs.len() - 1),
        };
        let (w0, w1) = (freqs[k - 1], freqs[k]);
        let s = (w - w0) / (w1 - w0);
        integrand[k - 1] + s * (integrand[k] - integrand[k - 1])
    };
    let mut total = 0.0;
    let mut prev_w = lo;
    let mut prev_f = interp(lo);
    for (k, &w) in freqs.iter().enumerate() {
        if w <= lo {
            continue;
        }
        if w >= hi {
            break;
        }
        total += 0.5 * (w - prev_w) * (prev_f + integrand[k]);
        prev_w = w;
        prev_f = integrand[k];
    }
    total + 0.5 * (hi - prev_w) * (prev_f + interp(hi))
}

fn check_same_spectrum_grid(a: &Spectrum, b: &Spectrum) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch { expected: a.dim, found: b.dim });
    }
    if a.freqs != b.freqs {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// `Re ∫_{lo}^{hi} ⟨û(jω), jω ŷ(jω)⟩ dω`.
pub fn band_quadratic(u_hat: &Spectrum, y_hat: &Spectrum, omega_lo: f64, omega_hi: f64) -> Result<f64> {
    check_same_spectrum_grid(u_hat, y_hat)?;
    check_band(u_hat, omega_lo, omega_hi)?;
    let integrand: Vec<f64> = u_hat
        .freqs
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            let inner: Complex64 = u_hat.value(k).iter().zip(y_hat.value(k)).map(|(u, y)| u.conj() * y).sum();
            // Re(jω z) = -ω Im z
            -w * inner.im
        })
        .collect();
    Ok(integrate_band(&u_hat.freqs, &integrand, omega_lo, omega_hi))
}

/// `∫_{lo}^{hi} |û(jω)|² dω`.
pub fn band_energy(u_hat: &Spectrum, omega_lo: f64, omega_hi: f64) -> Result<f64> {
    check_band(u_hat, omega_lo, omega_hi)?;
    let integrand: Vec<f64> =
        (0..u_hat.freqs.len()).map(|k| u_hat.value(k).iter().map(|v| v.norm_sqr()).sum()).collect();
    Ok(integrate_band(&u_hat.freqs, &integrand, omega_lo, omega_hi))
}
