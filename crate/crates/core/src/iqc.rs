//! Ξ-constrained sets, multipliers and the finite-frequency IQC inequalities.
//!
//! `B(Ξ, ε)` holds the systems whose time averages `ū = ∫u`, `ȳ = ∫y` satisfy
//! `[ȳ; ū]ᵀ Ξ [ȳ; ū] <= -ε |ū|²` for every admissible input. The complement
//! `B_C(Ξ, ε)` is `B(Ξ̃, ε)` with `Ξ̃ = -J Ξ J`, `J = [[0, I], [I, 0]]`.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{congruence_transpose, ensure_hermitian, max_hermitian_eigenvalue, real_matrix, CMatrix};
use crate::ni_analysis::BandConfig;
use crate::report::{Outcome, VerdictReport, Witness};
use crate::signal::{fourier, integrate_band, l2_norm, nyquist, trapezoid_corrected, FreqGrid, Signal, Spectrum};
use crate::sysmodel::{freq_response, simulate, SystemModel};

/// Absolute slack allowed in the averaged quadratic form.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Relative part of the tolerance, scaled by `|ū|² + |ȳ|²`. Covers quadrature
/// and truncation error of systems sitting on the boundary of a set.
pub const MEMBERSHIP_RTOL: f64 = 1e-6;
/// Inputs with a smaller average are skipped when measuring ε.
pub const NEGLIGIBLE_AVERAGE: f64 = 1e-9;
pub const DEFAULT_TAU_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct XiConstraint {
    xi: CMatrix,
    epsilon: f64,
}

impl XiConstraint {
    pub fn new(xi: CMatrix, epsilon: f64) -> Result<Self> {
        ensure_hermitian(&xi)?;
        if xi.nrows() == 0 || xi.nrows() % 2 != 0 {
            return Err(Error::InvalidArgument(format!("Ξ must be 2n×2n, got {}×{}", xi.nrows(), xi.ncols())));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("ε must be a finite nonnegative number, got {epsilon}")));
        }
        Ok(XiConstraint { xi, epsilon })
    }

    pub fn real(rows: &[&[f64]], epsilon: f64) -> Result<Self> {
        XiConstraint::new(real_matrix(rows), epsilon)
    }

    /// `[[0, 1], [1, 0]]`.
    pub fn xi1(epsilon: f64) -> Self {
        XiConstraint::real(&[&[0.0, 1.0], &[1.0, 0.0]], epsilon).expect("symmetric")
    }

    /// `[[1, 0], [0, -1]]`.
    pub fn xi2(epsilon: f64) -> Self {
        XiConstraint::real(&[&[1.0, 0.0], &[0.0, -1.0]], epsilon).expect("symmetric")
    }

    pub fn xi(&self) -> &CMatrix {
        &self.xi
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n(&self) -> usize {
        self.xi.nrows() / 2
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        XiConstraint::new(self.xi.clone(), epsilon)
    }

    /// `vᵀ Ξ v` for a real vector.
    pub fn form(&self, v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..v.len() {
            for j in 0..v.len() {
                acc += v[i] * self.xi[(i, j)].re * v[j];
            }
        }
        acc
    }
}

/// `(−J Ξ J, ε)`.
pub fn complement(c: &XiConstraint) -> Result<XiConstraint> {
    ensure_hermitian(&c.xi)?;
    let n = c.n();
    let mut out = CMatrix::zeros(2 * n, 2 * n);
    // (J Ξ J)_{ij} = Ξ_{σ(i) σ(j)} with σ swapping the two halves
    let swap = |i: usize| if i < n { i + n } else { i - n };
    for i in 0..2 * n {
        for j in 0..2 * n {
            out[(i, j)] = -c.xi[(swap(i), swap(j))];
        }
    }
    Ok(XiConstraint { xi: out, epsilon: c.epsilon })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeAverage {
    pub values: Vec<f64>,
    /// False when the signal has not decayed below 1e-6 near the horizon.
    pub decayed: bool,
}

/// `∫₀^T u dt` per component.
pub fn time_average(sig: &Signal) -> TimeAverage {
    let values = (0..sig.dim()).map(|i| trapezoid_corrected(&sig.component(i), sig.dt())).collect();
    TimeAverage { values, decayed: sig.tail_max_norm(0.02) < 1e-6 }
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Per-member averages, shared by the membership checks.
struct Averages {
    u_bar: Vec<f64>,
    y_bar: Vec<f64>,
    decayed: bool,
}

fn averages(sys: &SystemModel, u: &Signal) -> Result<Averages> {
    let y = simulate(sys, u)?.output;
    let (ua, ya) = (time_average(u), time_average(&y));
    Ok(Averages { u_bar: ua.values, y_bar: ya.values, decayed: ua.decayed && ya.decayed })
}

fn stacked(y: &[f64], u: &[f64]) -> Vec<f64> {
    y.iter().chain(u).copied().collect()
}

fn tolerance(scale: f64) -> f64 {
    MEMBERSHIP_TOL + MEMBERSHIP_RTOL * scale
}

fn membership_report(
    check: &str,
    c: &XiConstraint,
    battery: &[Signal],
    mut per_member: impl FnMut(usize) -> Result<(Vec<(f64, f64, f64)>, bool)>,
) -> Result<VerdictReport> {
    if battery.is_empty() {
        return Err(Error::EmptyBattery);
    }
    let mut eps_meas = f64::INFINITY;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_ratio = f64::NAN;
    let mut worst_slack = f64::NEG_INFINITY;
    let mut witness = None;
    let mut undecayed = 0;
    let mut usable = 0;
    for (i, u) in battery.iter().enumerate() {
        let (pairs, decayed) = per_member(i)?;
        if !decayed {
            undecayed += 1;
        }
        for (q, u_sq, scale) in pairs {
            let excess = q + c.epsilon * u_sq;
            if u_sq.sqrt() >= NEGLIGIBLE_AVERAGE {
                usable += 1;
                eps_meas = eps_meas.min(-q / u_sq);
            }
            if excess > worst_excess {
                worst_excess = excess;
                worst_ratio = if u_sq > 0.0 { q / u_sq } else { f64::NAN };
            }
            let slack = excess - tolerance(scale);
            if slack > worst_slack {
                worst_slack = slack;
                if slack > 0.0 {
                    witness = Some(Witness::new(i, q, u));
                }
            }
        }
    }
    if usable == 0 {
        return Err(Error::InvalidArgument("every battery input has a negligible time average".into()));
    }
    let mut report = VerdictReport::from_bool(check, worst_slack <= 0.0)
        .margin("epsilon", c.epsilon)
        .margin("epsilon_measured", eps_meas)
        .margin("worst_excess", worst_excess)
        .margin("worst_form_ratio", worst_ratio)
        .with_witness(witness);
    if undecayed > 0 {
        report = report.flag(format!("{undecayed} battery members have signals not decayed below 1e-6 at the horizon"));
    }
    Ok(report)
}

/// Membership of `sys` in `B(Ξ, ε)` on the battery.
pub fn b_membership(sys: &SystemModel, c: &XiConstraint, battery: &[Signal]) -> Result<VerdictReport> {
    if c.n() != sys.io_dim() {
        return Err(Error::DimensionMismatch { expected: sys.io_dim(), found: c.n() });
    }
    membership_report("b-membership", c, battery, |i| {
        let a = averages(sys, &battery[i])?;
        let q = c.form(&stacked(&a.y_bar, &a.u_bar));
        let u_sq = norm_sq(&a.u_bar);
        Ok((vec![(q, u_sq, u_sq + norm_sq(&a.y_bar))], a.decayed))
    })
}

/// Membership of `sys` in `B_C(Ξ, ε)`.
pub fn bc_membership(sys: &SystemModel, c: &XiConstraint, battery: &[Signal]) -> Result<VerdictReport> {
    let mut r = b_membership(sys, &complement(c)?, battery)?;
    r.check = "bc-membership".into();
    Ok(r)
}

/// Membership of `τ·sys` in `B_C(Ξ, ε)` for the scales in `tau_grid`.
///
/// The scaled output averages are exactly `τ ȳ`, so the form is a quadratic
/// `a τ² + b τ + c` per input. It is evaluated on `tau_grid` and, in addition,
/// maximized exactly over the interval spanned by the grid.
pub fn bc_membership_scaled(
    sys: &SystemModel,
    c: &XiConstraint,
    battery: &[Signal],
    tau_grid: &[f64],
) -> Result<VerdictReport> {
    if c.n() != sys.io_dim() {
        return Err(Error::DimensionMismatch { expected: sys.io_dim(), found: c.n() });
    }
    let (t_lo, t_hi) = tau_hull(tau_grid)?;
    let ct = complement(c)?;
    let mut exact_excess = f64::NEG_INFINITY;
    let mut exact_slack = f64::NEG_INFINITY;
    let mut report = membership_report("bc-membership-scaled", &ct, battery, |i| {
        let a = averages(sys, &battery[i])?;
        let zero = vec![0.0; a.y_bar.len()];
        let q0 = ct.form(&stacked(&zero, &a.u_bar));
        let q1 = ct.form(&stacked(&a.y_bar, &a.u_bar));
        let qm = ct.form(&stacked(&a.y_bar.iter().map(|v| -v).collect::<Vec<_>>(), &a.u_bar));
        // q(τ) = qa τ² + qb τ + q0 from q(1) and q(-1)
        let qa = 0.5 * (q1 + qm) - q0;
        let qb = 0.5 * (q1 - qm);
        let q = |t: f64| qa * t * t + qb * t + q0;
        let u_sq = norm_sq(&a.u_bar);
        let mut top = q(t_lo).max(q(t_hi));
        if qa < 0.0 {
            let v = -qb / (2.0 * qa);
            if (t_lo..=t_hi).contains(&v) {
                top = top.max(q(v));
            }
        }
        let y_sq = norm_sq(&a.y_bar);
        exact_excess = exact_excess.max(top + ct.epsilon * u_sq);
        exact_slack = exact_slack.max(top + ct.epsilon * u_sq - tolerance(u_sq + t_hi * t_hi * y_sq));
        Ok((tau_grid.iter().map(|&t| (q(t), u_sq, u_sq + t * t * y_sq)).collect(), a.decayed))
    })?;
    report = report.margin("interval_worst_excess", exact_excess);
    if exact_slack > 0.0 && report.outcome == Outcome::Pass {
        report.outcome = Outcome::Fail;
        report = report.note("the τ grid passes but the exact maximum between grid points violates the bound");
    }
    Ok(report)
}

/// Smallest and largest scale of a nonempty grid inside `[0, 1]`.
pub fn tau_hull(tau_grid: &[f64]) -> Result<(f64, f64)> {
    if tau_grid.is_empty() || tau_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidArgument("τ grid must be nonempty and lie in [0, 1]".into()));
    }
    let lo = tau_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = tau_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

/// `[G(j0); I]ᵀ Ξ [G(j0); I] <= -ε I`, a sufficient condition for `B(Ξ, ε)`.
pub fn lti_b_condition(sys: &SystemModel, c: &XiConstraint) -> Result<VerdictReport> {
    if !sys.is_lti() {
        return Err(Error::NotLti);
    }
    let g0 = freq_response(sys, 0.0)?;
    let m = dc_form(&g0, c.xi(), false)?;
    let lam = max_hermitian_eigenvalue(&m)?;
    Ok(VerdictReport::from_bool("lti-b-condition", lam <= -c.epsilon + 1e-12)
        .margin("max_eigenvalue", lam)
        .margin("margin", -c.epsilon - lam))
}

/// `[G; I]ᵀ Ξ [G; I]`, or `[I; G]ᵀ Ξ [I; G]` when `input_first`.
pub fn dc_form(g: &CMatrix, xi: &CMatrix, input_first: bool) -> Result<CMatrix> {
    let n = g.nrows();
    if xi.nrows() != 2 * n {
        return Err(Error::DimensionMismatch { expected: 2 * n, found: xi.nrows() });
    }
    let mut w = CMatrix::zeros(2 * n, n);
    let (top, bottom) = if input_first { (n, 0) } else { (0, n) };
    w.view_mut((top, 0), (n, n)).copy_from(g);
    for i in 0..n {
        w[(bottom + i, i)] = Complex64::new(1.0, 0.0);
    }
    let m = congruence_transpose(xi, &w);
    // symmetrize rounding noise before the eigenvalue call
    Ok((&m + m.adjoint()) * Complex64::new(0.5, 0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierSet {
    pub pi0: CMatrix,
    pub pi_inf: CMatrix,
    pub eps0: f64,
    pub eps_inf: f64,
    pub alpha: f64,
}

impl MultiplierSet {
    pub fn n(&self) -> usize {
        self.pi0.nrows() / 2
    }
}

/// `Π_m(ω) = [[0, jωI], [-jωI, 0]]`.
pub fn pi_m(n: usize, omega: f64) -> CMatrix {
    let mut m = CMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        m[(i, n + i)] = Complex64::new(0.0, omega);
        m[(n + i, i)] = Complex64::new(0.0, -omega);
    }
    m
}

/// `Π0 = Ξ + (ε/3) diag(0, I)` and `Π∞ = diag(I, -(ε∞ + α²) I)`.
pub fn construct_multipliers(c: &XiConstraint, alpha: f64, eps_inf: f64) -> Result<MultiplierSet> {
    if c.epsilon <= 0.0 {
        return Err(Error::InvalidArgument("multipliers need a strictly positive ε".into()));
    }
    if !(alpha > 0.0 && eps_inf > 0.0) {
        return Err(Error::InvalidArgument(format!("need α > 0 and ε∞ > 0, got α = {alpha}, ε∞ = {eps_inf}")));
    }
    let n = c.n();
    let eps0 = c.epsilon / 3.0;
    let mut pi0 = c.xi.clone();
    let mut pi_inf = CMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        pi0[(n + i, n + i)] += eps0;
        pi_inf[(i, i)] = Complex64::new(1.0, 0.0);
        pi_inf[(n + i, n + i)] = Complex64::new(-(eps_inf + alpha * alpha), 0.0);
    }
    Ok(MultiplierSet { pi0, pi_inf, eps0, eps_inf, alpha })
}

/// `Re ∫ [a; b]* Π(ω) [a; b] dω` over `[lo, hi]`.
fn form_integral(a: &Spectrum, b: &Spectrum, pi: impl Fn(f64) -> CMatrix, lo: f64, hi: f64) -> f64 {
    let n = a.dim();
    let freqs = a.freqs();
    let integrand: Vec<f64> = freqs
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            let m = pi(w);
            let v: Vec<Complex64> = a.value(k).iter().chain(b.value(k)).copied().collect();
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..2 * n {
                for j in 0..2 * n {
                    acc += v[i].conj() * m[(i, j)] * v[j];
                }
            }
            acc.re
        })
        .collect();
    integrate_band(freqs, &integrand, lo, hi)
}

fn energy(a: &Spectrum, lo: f64, hi: f64) -> f64 {
    let integrand: Vec<f64> = (0..a.freqs().len()).map(|k| a.value(k).iter().map(|v| v.norm_sqr()).sum()).collect();
    integrate_band(a.freqs(), &integrand, lo, hi)
}

/// Number of points on the grid reaching Nyquist.
pub const HIGH_GRID_POINTS: usize = 1 << 16;
const LOW_GRID_POINTS: usize = 257;

/// Evaluates the four finite-frequency inequalities on the battery, plus the
/// mid-band NI inequalities as a diagnostic.
///
/// P-side forms use `[P u; u]` and must not exceed `-ε·∫|û|²`; C-side forms use
/// `[y; τ C y]` and must be nonnegative for every `τ` in the grid. The low
/// band is `[0, Ω̲*]`, the high band `[Ω̄*, π/dt]`.
pub fn verify_prop_iqc(
    p: &SystemModel,
    c_sys: &SystemModel,
    m: &MultiplierSet,
    bands: &BandConfig,
    battery: &[Signal],
    tau_grid: &[f64],
) -> Result<VerdictReport> {
    let first = battery.first().ok_or(Error::EmptyBattery)?;
    bands.validate()?;
    tau_hull(tau_grid)?;
    let n = m.n();
    if p.io_dim() != n || c_sys.io_dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: p.io_dim().max(c_sys.io_dim()) });
    }
    let dt = first.dt();
    let (lo, hi) = (bands.omega_lo_star, bands.omega_hi_star);
    let nyq = nyquist(dt);
    if nyq < hi {
        return Err(Error::AboveNyquist { omega_max: hi, nyquist: nyq });
    }
    let low_grid = FreqGrid::new(lo, LOW_GRID_POINTS)?;
    let mid_grid = FreqGrid::new(hi, 4096)?;
    let high_grid = FreqGrid::to_nyquist(dt, HIGH_GRID_POINTS)?;
    let pi0 = |_: f64| m.pi0.clone();
    let pi_inf = |_: f64| m.pi_inf.clone();
    let pim = |w: f64| pi_m(n, w);

    let mut p_low = f64::NEG_INFINITY;
    let mut p_high = f64::NEG_INFINITY;
    let mut p_mid = f64::NEG_INFINITY;
    let mut c_low = f64::INFINITY;
    let mut c_high = f64::INFINITY;
    let mut c_mid = f64::INFINITY;
    let mut witness = None;
    for (i, u) in battery.iter().enumerate() {
        let tol = 1e-9 * (1.0 + l2_norm(u).powi(2));
        let yp = simulate(p, u)?.output;
        let yc = simulate(c_sys, u)?.output;
        for (grid, band) in [(&low_grid, (0.0, lo)), (&mid_grid, (lo, hi)), (&high_grid, (hi, nyq))] {
            let (uh, ph, ch) = (fourier(u, grid)?, fourier(&yp, grid)?, fourier(&yc, grid)?);
            let e = energy(&uh, band.0, band.1);
            let (p_val, c_vals): (f64, Vec<f64>) = if band.0 == 0.0 {
                let pv = form_integral(&ph, &uh, pi0, band.0, band.1) + m.eps0 * e;
                let cv = tau_grid.iter().map(|&t| form_integral(&uh, &ch.scaled(t), pi0, band.0, band.1)).collect();
                (pv, cv)
            } else if band.1 == nyq {
                let pv = form_integral(&ph, &uh, pi_inf, band.0, band.1) + m.eps_inf * e;
                let cv = tau_grid.iter().map(|&t| form_integral(&uh, &ch.scaled(t), pi_inf, band.0, band.1)).collect();
                (pv, cv)
            } else {
                let pv = form_integral(&ph, &uh, pim, band.0, band.1);
                let cv = tau_grid.iter().map(|&t| form_integral(&uh, &ch.scaled(t), pim, band.0, band.1)).collect();
                (pv, cv)
            };
            let c_min = c_vals.iter().copied().fold(f64::INFINITY, f64::min);
            let (p_slot, c_slot, is_diag) = if band.0 == 0.0 {
                (&mut p_low, &mut c_low, false)
            } else if band.1 == nyq {
                (&mut p_high, &mut c_high, false)
            } else {
                (&mut p_mid, &mut c_mid, true)
            };
            *p_slot = p_slot.max(p_val);
            *c_slot = c_slot.min(c_min);
            if !is_diag && witness.is_none() && (p_val > tol || c_min < -tol) {
                witness = Some(Witness::new(i, if p_val > tol { p_val } else { c_min }, u));
            }
        }
    }
    let ok = witness.is_none();
    Ok(VerdictReport::from_bool("prop-iqc", ok)
        .margin("p_low_slack", p_low)
        .margin("c_low_slack", c_low)
        .margin("p_high_slack", p_high)
        .margin("c_high_slack", c_high)
        .margin("p_mid_max", p_mid)
        .margin("c_mid_min", c_mid)
        .margin("omega_low", lo)
        .margin("omega_high", hi)
        .margin("nyquist_cap", nyq)
        .with_witness(witness)
        .note(format!("high band truncated at the Nyquist frequency {nyq:.6} rad/s"))
        .note("mid-band values are diagnostics: P-side should be negative, C-side nonnegative"))
}
