//! Positive-feedback interconnection `P # C`, impulse experiments and the
//! assembly of stability certificates.
//!
//! Loop equations: `u1 = d1 + u2`, `y1 = P u1`, `y2 = d2 + y1`, `u2 = C y2`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iqc::{bc_membership_scaled, b_membership, dc_form, tau_hull, XiConstraint};
use crate::linalg::{max_hermitian_eigenvalue, min_hermitian_eigenvalue, CMatrix};
use crate::ni_analysis::{
    check_ccw, check_ni, default_sweep_grid, discrepancy_flag, lti_ni_sweep, ni_report, BandConfig, NiClass, NiVerdict,
    SWEEP_TOL,
};
use crate::report::{Outcome, VerdictReport};
use crate::signal::{trapezoid, Signal};
use crate::sysmodel::{freq_response, instantaneous_gain, midpoint_input, SystemModel, OVERFLOW_LIMIT};

/// Margin by which the gain product must stay below one.
pub const GAIN_MARGIN: f64 = 1e-9;
pub const FIXED_POINT_ITERATIONS: usize = 50;
pub const FIXED_POINT_TOL: f64 = 1e-12;
/// Slack used for strict matrix inequalities.
pub const STRICT_TOL: f64 = 1e-12;

/// Sampled signals of one loop run. `y2` is the input of `C` and `u2` its output.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopTrace {
    pub d1: Signal,
    pub d2: Signal,
    pub u1: Signal,
    pub y1: Signal,
    pub y2: Signal,
    pub u2: Signal,
}

/// A loop run that may have stopped early on overflow.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopRun {
    /// Samples up to the last finite one.
    pub trace: LoopTrace,
    pub overflow_time: Option<f64>,
}

/// `γ(P) γ(C) < 1`.
pub fn wellposed_gate(p: &SystemModel, c: &SystemModel) -> Result<VerdictReport> {
    let (gp, gc) = (instantaneous_gain(p)?, instantaneous_gain(c)?);
    let product = gp.value * gc.value;
    let mut r = VerdictReport::from_bool("wellposed", product < 1.0 - GAIN_MARGIN)
        .margin("gain_p", gp.value)
        .margin("gain_c", gc.value)
        .margin("gain_product", product);
    for (side, g) in [("P", gp), ("C", gc)] {
        if g.kind != crate::sysmodel::GainKind::Exact {
            r = r.note(format!("instantaneous gain of {side} is {:?}", g.kind).to_lowercase());
        }
    }
    Ok(r)
}

#[derive(Clone, Copy)]
enum Strategy {
    /// `P` has no feedthrough, evaluate it first.
    PFirst,
    CFirst,
    FixedPoint,
}

struct Node<'a> {
    p: &'a SystemModel,
    c: &'a SystemModel,
    n: usize,
    kp: usize,
    strategy: Strategy,
    u1: Vec<f64>,
    y1: Vec<f64>,
    y2: Vec<f64>,
    u2: Vec<f64>,
}

fn eval_output(sys: &SystemModel, x: &[f64], u: &[f64], y: &mut [f64]) -> Result<()> {
    y.iter_mut().for_each(|v| *v = 0.0);
    sys.output_acc(x, u, y, 1.0)
}

impl Node<'_> {
    /// Solves the algebraic part of the loop at combined state `x`.
    fn solve(&mut self, x: &[f64], d1: &[f64], d2: &[f64], time: f64) -> Result<()> {
        let (xp, xc) = x.split_at(self.kp);
        let n = self.n;
        match self.strategy {
            Strategy::PFirst => {
                eval_output(self.p, xp, d1, &mut self.y1)?;
                for i in 0..n {
                    self.y2[i] = d2[i] + self.y1[i];
                }
                eval_output(self.c, xc, &self.y2, &mut self.u2)?;
                for i in 0..n {
                    self.u1[i] = d1[i] + self.u2[i];
                }
            }
            Strategy::CFirst => {
                eval_output(self.c, xc, d2, &mut self.u2)?;
                for i in 0..n {
                    self.u1[i] = d1[i] + self.u2[i];
                }
                eval_output(self.p, xp, &self.u1, &mut self.y1)?;
                for i in 0..n {
                    self.y2[i] = d2[i] + self.y1[i];
                }
            }
            Strategy::FixedPoint => {
                self.u1.copy_from_slice(d1);
                let mut acc = Anderson::new(n);
                let mut next = vec![0.0; n];
                let mut converged = false;
                for _ in 0..FIXED_POINT_ITERATIONS {
                    self.loop_map(xp, xc, d1, d2, &mut next)?;
                    let mut diff = 0.0f64;
                    let mut size = 0.0f64;
                    for i in 0..n {
                        diff = diff.max((next[i] - self.u1[i]).abs());
                        size = size.max(next[i].abs());
                    }
                    if !diff.is_finite() {
                        break;
                    }
                    if diff <= FIXED_POINT_TOL * (1.0 + size) {
                        self.u1.copy_from_slice(&next);
                        converged = true;
                        break;
                    }
                    acc.step(&mut self.u1, &next);
                }
                if !converged {
                    return Err(Error::FixedPoint { time });
                }
                // make u1 = d1 + u2 hold exactly
                eval_output(self.p, xp, &self.u1, &mut self.y1)?;
                for i in 0..n {
                    self.y2[i] = d2[i] + self.y1[i];
                }
                eval_output(self.c, xc, &self.y2, &mut self.u2)?;
                for i in 0..n {
                    self.u1[i] = d1[i] + self.u2[i];
                }
            }
        }
        Ok(())
    }

    /// `u1 ↦ d1 + C(d2 + P u1)` at fixed states.
    fn loop_map(&mut self, xp: &[f64], xc: &[f64], d1: &[f64], d2: &[f64], out: &mut [f64]) -> Result<()> {
        eval_output(self.p, xp, &self.u1, &mut self.y1)?;
        for i in 0..self.n {
            self.y2[i] = d2[i] + self.y1[i];
        }
        eval_output(self.c, xc, &self.y2, &mut self.u2)?;
        for i in 0..self.n {
            out[i] = d1[i] + self.u2[i];
        }
        Ok(())
    }

    fn deriv(&mut self, x: &[f64], d1: &[f64], d2: &[f64], time: f64, dx: &mut [f64]) -> Result<()> {
        self.solve(x, d1, d2, time)?;
        let (xp, xc) = x.split_at(self.kp);
        let (dp, dc) = dx.split_at_mut(self.kp);
        self.p.deriv(xp, &self.u1, dp)?;
        self.c.deriv(xc, &self.y2, dc)
    }
}

const ANDERSON_DEPTH: usize = 5;

/// Anderson mixing for `x = g(x)`. Exact after `n + 1` steps on affine maps,
/// which plain iteration only approaches at the contraction rate.
struct Anderson {
    n: usize,
    xs: Vec<Vec<f64>>,
    gs: Vec<Vec<f64>>,
}

impl Anderson {
    fn new(n: usize) -> Self {
        Anderson { n, xs: Vec::new(), gs: Vec::new() }
    }

    /// Replaces `x` by the next iterate given `g = g(x)`.
    fn step(&mut self, x: &mut [f64], g: &[f64]) {
        self.xs.push(x.to_vec());
        self.gs.push(g.to_vec());
        if self.xs.len() > ANDERSON_DEPTH.min(self.n + 1) + 1 {
            self.xs.remove(0);
            self.gs.remove(0);
        }
        let k = self.xs.len();
        let resid = |j: usize| -> Vec<f64> { (0..self.n).map(|i| self.gs[j][i] - self.xs[j][i]).collect() };
        let fk = resid(k - 1);
        let mut next = g.to_vec();
        if k >= 2 {
            let m = k - 1;
            let mut df = DMatrix::zeros(self.n, m);
            let mut dg = DMatrix::zeros(self.n, m);
            for j in 0..m {
                let (f0, f1) = (resid(j), resid(j + 1));
                for i in 0..self.n {
                    df[(i, j)] = f1[i] - f0[i];
                    dg[(i, j)] = self.gs[j + 1][i] - self.gs[j][i];
                }
            }
            let rhs = DVector::from_vec(fk);
            if let Ok(gamma) = df.svd(true, true).solve(&rhs, 1e-14) {
                let corr = &dg * gamma;
                if corr.iter().all(|v| v.is_finite()) {
                    for i in 0..self.n {
                        next[i] -= corr[i];
                    }
                }
            }
        }
        x.copy_from_slice(&next);
    }
}

fn diverged(v: &[f64]) -> bool {
    v.iter().any(|x| !x.is_finite() || x.abs() > OVERFLOW_LIMIT)
}

fn at_time(time: f64) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::DivisionByZero => Error::Simulation { time, reason: "division by zero in expression".into() },
        other => other,
    }
}

/// Integrates the closed loop from rest. Overflow stops the run and is
/// reported through `overflow_time` with the samples computed so far.
pub fn simulate_loop_partial(p: &SystemModel, c: &SystemModel, d1: &Signal, d2: &Signal) -> Result<LoopRun> {
    p.validate()?;
    c.validate()?;
    let n = p.io_dim();
    if c.io_dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: c.io_dim() });
    }
    if d1.dim() != n || d2.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: d1.dim().max(d2.dim()) });
    }
    crate::signal::check_same_grid(d1, d2)?;
    let strategy = match (p.has_feedthrough(), c.has_feedthrough()) {
        (false, _) => Strategy::PFirst,
        (true, false) => Strategy::CFirst,
        (true, true) => {
            let gate = wellposed_gate(p, c)?;
            if !gate.passed() {
                return Err(Error::InvalidArgument(format!(
                    "loop is not well-posed: gain product {} is not below 1",
                    gate.margins["gain_product"]
                )));
            }
            Strategy::FixedPoint
        }
    };
    let kp = p.state_dim();
    let nx = kp + c.state_dim();
    let mut node = Node { p, c, n, kp, strategy, u1: vec![0.0; n], y1: vec![0.0; n], y2: vec![0.0; n], u2: vec![0.0; n] };

    let len = d1.len();
    let dt = d1.dt();
    let mut rec: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(n * len));
    let mut x = vec![0.0; nx];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; nx], vec![0.0; nx], vec![0.0; nx], vec![0.0; nx]);
    let mut tmp = vec![0.0; nx];
    let (mut d1_mid, mut d2_mid) = (vec![0.0; n], vec![0.0; n]);
    let mut overflow_time = None;
    let mut kept = len;

    'steps: for m in 0..len {
        let t = d1.time(m);
        let err = at_time(t);
        node.solve(&x, d1.sample(m), d2.sample(m), t).map_err(&err)?;
        for v in [&node.u1, &node.y1, &node.y2, &node.u2] {
            if diverged(v) {
                overflow_time = Some(t);
                kept = m;
                break 'steps;
            }
        }
        for (buf, v) in rec.iter_mut().zip([&node.u1, &node.y1, &node.y2, &node.u2]) {
            buf.extend_from_slice(v);
        }
        if m + 1 == len {
            break;
        }
        midpoint_input(d1, m, &mut d1_mid);
        midpoint_input(d2, m, &mut d2_mid);
        let (d1n, d2n) = (d1.sample(m + 1), d2.sample(m + 1));
        node.deriv(&x, d1.sample(m), d2.sample(m), t, &mut k1).map_err(&err)?;
        for i in 0..nx {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        node.deriv(&tmp, &d1_mid, &d2_mid, t, &mut k2).map_err(&err)?;
        for i in 0..nx {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        node.deriv(&tmp, &d1_mid, &d2_mid, t, &mut k3).map_err(&err)?;
        for i in 0..nx {
            tmp[i] = x[i] + dt * k3[i];
        }
        node.deriv(&tmp, d1n, d2n, t, &mut k4).map_err(&err)?;
        for i in 0..nx {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if diverged(&x) {
            overflow_time = Some(d1.time(m + 1));
            kept = m + 1;
            break;
        }
    }
    if kept == 0 {
        return Err(Error::Simulation { time: 0.0, reason: "output overflow at the first sample".into() });
    }
    let prefix = |s: &Signal| Signal::from_flat(dt, n, s.as_flat()[..kept * n].to_vec());
    let [u1, y1, y2, u2] = rec;
    let trace = LoopTrace {
        d1: prefix(d1)?,
        d2: prefix(d2)?,
        u1: Signal::from_flat(dt, n, u1)?,
        y1: Signal::from_flat(dt, n, y1)?,
        y2: Signal::from_flat(dt, n, y2)?,
        u2: Signal::from_flat(dt, n, u2)?,
    };
    Ok(LoopRun { trace, overflow_time })
}

/// Like [`simulate_loop_partial`] but overflow is an error.
pub fn simulate_loop(p: &SystemModel, c: &SystemModel, d1: &Signal, d2: &Signal) -> Result<LoopTrace> {
    let run = simulate_loop_partial(p, c, d1, d2)?;
    match run.overflow_time {
        Some(time) => Err(Error::Simulation { time, reason: "closed-loop overflow".into() }),
        None => Ok(run.trace),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImpulseConfig {
    pub pulse_width: f64,
    pub horizon: f64,
    pub dt: f64,
    /// Ratios below this are labelled decaying.
    pub decaying_below: f64,
    /// Ratios above this are labelled growing.
    pub growing_above: f64,
}

impl Default for ImpulseConfig {
    fn default() -> Self {
        ImpulseConfig { pulse_width: 0.01, horizon: 50.0, dt: 1e-3, decaying_below: 0.1, growing_above: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImpulseLabel {
    Decaying,
    Growing,
    Indeterminate,
}

impl ImpulseLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ImpulseLabel::Decaying => "decaying",
            ImpulseLabel::Growing => "growing",
            ImpulseLabel::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpulseSummary {
    /// Which exogenous channel carried the pulse.
    pub channel: String,
    /// Infinite when the run overflowed.
    pub tail_ratio: f64,
    pub max_abs_y1: f64,
    pub label: ImpulseLabel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overflow_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseDiagnostics {
    pub summary: ImpulseSummary,
    pub run: LoopRun,
}

/// `∫_{T/2}^T |y|² / ∫_0^{T/2} |y|²`.
pub fn tail_energy_ratio(y: &Signal) -> f64 {
    let sq: Vec<f64> = y.samples().map(|v| v.iter().map(|x| x * x).sum()).collect();
    let mid = (sq.len() - 1) / 2;
    let head = trapezoid(&sq[..=mid], y.dt());
    let tail = trapezoid(&sq[mid..], y.dt());
    if head > 0.0 {
        tail / head
    } else if tail > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

fn label_for(ratio: f64, cfg: &ImpulseConfig) -> ImpulseLabel {
    if ratio < cfg.decaying_below {
        ImpulseLabel::Decaying
    } else if ratio > cfg.growing_above {
        ImpulseLabel::Growing
    } else {
        ImpulseLabel::Indeterminate
    }
}

fn validate_impulse(cfg: &ImpulseConfig) -> Result<()> {
    let ok = cfg.pulse_width > 0.0
        && cfg.dt > 0.0
        && cfg.horizon > cfg.pulse_width
        && cfg.horizon / cfg.dt >= 100.0
        && cfg.decaying_below > 0.0
        && cfg.growing_above >= cfg.decaying_below;
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("invalid impulse experiment settings: {cfg:?}")))
    }
}

/// Unit-area rectangular pulse on channel `d1` (or `d2`) at time zero, every
/// component excited.
pub fn impulse_on(p: &SystemModel, c: &SystemModel, cfg: &ImpulseConfig, on_d2: bool) -> Result<ImpulseDiagnostics> {
    validate_impulse(cfg)?;
    let n = p.io_dim();
    let pulse = broadcast(&Signal::pulse(cfg.dt, cfg.horizon, 0.0, cfg.pulse_width, 1.0)?, n)?;
    let zero = Signal::zeros(cfg.dt, n, pulse.len())?;
    let (d1, d2) = if on_d2 { (&zero, &pulse) } else { (&pulse, &zero) };
    let run = simulate_loop_partial(p, c, d1, d2)?;
    let y1 = &run.trace.y1;
    let (ratio, label) = match run.overflow_time {
        Some(_) => (f64::INFINITY, ImpulseLabel::Growing),
        None => {
            let r = tail_energy_ratio(y1);
            (r, label_for(r, cfg))
        }
    };
    let summary = ImpulseSummary {
        channel: if on_d2 { "d2" } else { "d1" }.into(),
        tail_ratio: ratio,
        max_abs_y1: y1.max_abs(),
        label,
        overflow_time: run.overflow_time,
    };
    Ok(ImpulseDiagnostics { summary, run })
}

fn broadcast(s: &Signal, n: usize) -> Result<Signal> {
    let data: Vec<f64> = s.as_flat().iter().flat_map(|&v| std::iter::repeat(v).take(n)).collect();
    Signal::from_flat(s.dt(), n, data)
}

/// Pulse on `d1`, `d2 = 0`.
pub fn impulse_experiment(p: &SystemModel, c: &SystemModel, cfg: &ImpulseConfig) -> Result<ImpulseDiagnostics> {
    impulse_on(p, c, cfg, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conclusion {
    Certified,
    NotCertified,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub rule: String,
    pub premises: BTreeMap<String, VerdictReport>,
    pub conclusion: Conclusion,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<ImpulseSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    #[serde(skip)]
    classes: (Option<NiClass>, Option<NiClass>),
}

impl StabilityVerdict {
    fn assemble(rule: &str, premises: Vec<(&str, VerdictReport)>, classes: (Option<NiClass>, Option<NiClass>)) -> Self {
        let premises: BTreeMap<String, VerdictReport> = premises.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        let conclusion = if premises.values().all(VerdictReport::passed) {
            Conclusion::Certified
        } else {
            Conclusion::NotCertified
        };
        let mut flags: Vec<String> = Vec::new();
        for r in premises.values() {
            for f in &r.flags {
                if !flags.contains(f) {
                    flags.push(f.clone());
                }
            }
        }
        StabilityVerdict { rule: rule.into(), premises, conclusion, diagnostics: Vec::new(), flags, classes }
    }

    pub fn certified(&self) -> bool {
        self.conclusion == Conclusion::Certified
    }

    /// Names of premises that did not pass.
    pub fn failed_premises(&self) -> Vec<&str> {
        self.premises.iter().filter(|(_, r)| !r.passed()).map(|(k, _)| k.as_str()).collect()
    }

    /// Flags computed classes that contradict the documented class of a builtin.
    pub fn annotate_builtins(mut self, p_name: Option<&str>, c_name: Option<&str>) -> Self {
        for (name, class) in [(p_name, self.classes.0), (c_name, self.classes.1)] {
            if let (Some(name), Some(class)) = (name, class) {
                if let Some(f) = discrepancy_flag(name, class) {
                    if !self.flags.contains(&f) {
                        self.flags.push(f);
                    }
                }
            }
        }
        self
    }

    /// Runs impulse experiments on both exogenous channels. These never change
    /// the conclusion: a finite trace can only falsify stability.
    pub fn with_diagnostics(mut self, p: &SystemModel, c: &SystemModel, cfg: &ImpulseConfig) -> Result<Self> {
        for on_d2 in [false, true] {
            self.diagnostics.push(impulse_on(p, c, cfg, on_d2)?.summary);
        }
        if self.certified() && self.diagnostics.iter().any(|d| d.label != ImpulseLabel::Decaying) {
            self.flags.push("certified loop did not show a decaying impulse response".into());
        }
        Ok(self)
    }
}

fn class_premise(check: &str, verdict: &NiVerdict, accept: &[NiClass]) -> VerdictReport {
    let mut r = ni_report(verdict);
    r.check = check.into();
    r.outcome = if accept.contains(&verdict.classification) {
        Outcome::Pass
    } else if verdict.classification == NiClass::Inconclusive {
        Outcome::Inconclusive
    } else {
        Outcome::Fail
    };
    r
}

/// SNI `P` in `B(Ξ, ε)`, NI `C` with every `τC` in `B_C(Ξ, 0)`, and `γ(P)γ(C) < 1`.
pub fn check_theorem_sni2(
    p: &SystemModel,
    c: &SystemModel,
    xi: &XiConstraint,
    battery: &[Signal],
    bands: &BandConfig,
    tau_grid: &[f64],
) -> Result<StabilityVerdict> {
    if xi.epsilon() <= 0.0 {
        return Err(Error::InvalidArgument("the SNI side needs Ξ with ε > 0".into()));
    }
    let ni_p = check_ni(p, battery, bands)?;
    let ni_c = check_ni(c, battery, bands)?;
    let premises = vec![
        ("sni_p", class_premise("sni-p", &ni_p, &[NiClass::Sni])),
        ("b_membership_p", b_membership(p, xi, battery)?),
        ("ni_c", class_premise("ni-c", &ni_c, &[NiClass::Sni, NiClass::Ni])),
        ("bc_membership_c", bc_membership_scaled(c, &xi.with_epsilon(0.0)?, battery, tau_grid)?),
        ("wellposed", wellposed_gate(p, c)?),
    ];
    Ok(StabilityVerdict::assemble("theorem", premises, (Some(ni_p.classification), Some(ni_c.classification))))
}

/// `[Ĝ; I]ᵀ Ξ [Ĝ; I] < 0` at a single frequency.
fn strict_negative(check: &str, g: &CMatrix, xi: &CMatrix) -> Result<VerdictReport> {
    let lam = max_hermitian_eigenvalue(&dc_form(g, xi, false)?)?;
    Ok(VerdictReport::from_bool(check, lam <= -STRICT_TOL).margin("max_eigenvalue", lam))
}

/// `[I; τĈ]ᵀ Ξ [I; τĈ] >= 0` on the grid, plus the minimum over the interval
/// the grid spans.
fn scaled_nonnegative(check: &str, g: &CMatrix, xi: &CMatrix, tau_grid: &[f64]) -> Result<VerdictReport> {
    let (lo, hi) = tau_hull(tau_grid)?;
    let form = |t: f64| -> Result<f64> {
        let scaled = g * Complex64::new(t, 0.0);
        min_hermitian_eigenvalue(&dc_form(&scaled, xi, true)?)
    };
    let mut grid_min = f64::INFINITY;
    for &t in tau_grid {
        grid_min = grid_min.min(form(t)?);
    }
    let interval_min = if g.nrows() == 1 {
        // scalar quadratic in τ, minimized exactly
        let (q0, q1, qm) = (form(0.0)?, form(1.0)?, form(-1.0)?);
        let (a, b) = (0.5 * (q1 + qm) - q0, 0.5 * (q1 - qm));
        let q = |t: f64| a * t * t + b * t + q0;
        let mut m = q(lo).min(q(hi));
        if a > 0.0 {
            let v = -b / (2.0 * a);
            if (lo..=hi).contains(&v) {
                m = m.min(q(v));
            }
        }
        m
    } else {
        let mut m = f64::INFINITY;
        for k in 0..=1000 {
            m = m.min(form(lo + (hi - lo) * k as f64 / 1000.0)?);
        }
        m.min(grid_min)
    };
    let ok = grid_min >= -STRICT_TOL && interval_min >= -STRICT_TOL;
    Ok(VerdictReport::from_bool(check, ok).margin("grid_min_eigenvalue", grid_min).margin("interval_min_eigenvalue", interval_min))
}

/// LTI `P` with positive NI sweep, strict DC inequality, CCW `C` in every
/// `B_C(Ξ, 0)` for `τ` on the default grid, and `γ(C) σ̄(P̂(j∞)) < 1`.
pub fn check_corollary_nl(
    p_lti: &SystemModel,
    c_nl: &SystemModel,
    xi: &XiConstraint,
    battery: &[Signal],
) -> Result<StabilityVerdict> {
    if !p_lti.is_lti() {
        return Err(Error::NotLti);
    }
    let sweep = lti_ni_sweep(p_lti, &default_sweep_grid(), SWEEP_TOL)?;
    let g0 = freq_response(p_lti, 0.0)?;
    let premises = vec![
        ("sni_sweep_p", class_premise("sni-sweep-p", &sweep, &[NiClass::Sni])),
        ("dc_inequality_p", strict_negative("dc-inequality-p", &g0, xi.xi())?),
        ("ccw_c", check_ccw(c_nl, battery)?),
        (
            "bc_membership_c",
            bc_membership_scaled(c_nl, &xi.with_epsilon(0.0)?, battery, &crate::iqc::DEFAULT_TAU_GRID)?,
        ),
        ("gain_product", wellposed_gate(p_lti, c_nl)?),
    ];
    Ok(StabilityVerdict::assemble("corollary-nl", premises, (Some(sweep.classification), None)))
}

/// The four frequency-domain matrix inequalities at `j0` and `j∞` for LTI
/// `P` and `C`, with `P` SNI and `C` NI by eigenvalue sweep.
pub fn check_corollary_lti(
    p_tf: &SystemModel,
    c_tf: &SystemModel,
    xi0: &XiConstraint,
    xi_inf: &XiConstraint,
    tau_grid: &[f64],
) -> Result<StabilityVerdict> {
    if !p_tf.is_lti() || !c_tf.is_lti() {
        return Err(Error::NotLti);
    }
    let grid = default_sweep_grid();
    let sp = lti_ni_sweep(p_tf, &grid, SWEEP_TOL)?;
    let sc = lti_ni_sweep(c_tf, &grid, SWEEP_TOL)?;
    let to_c = |m: nalgebra::DMatrix<f64>| m.map(|v| Complex64::new(v, 0.0));
    let (p0, c0) = (freq_response(p_tf, 0.0)?, freq_response(c_tf, 0.0)?);
    let (pinf, cinf) = (to_c(p_tf.feedthrough_matrix()?), to_c(c_tf.feedthrough_matrix()?));
    let premises = vec![
        ("sni_sweep_p", class_premise("sni-sweep-p", &sp, &[NiClass::Sni])),
        ("ni_sweep_c", class_premise("ni-sweep-c", &sc, &[NiClass::Sni, NiClass::Ni])),
        ("p_form_j0", strict_negative("p-form-j0", &p0, xi0.xi())?),
        ("c_form_j0", scaled_nonnegative("c-form-j0", &c0, xi0.xi(), tau_grid)?),
        ("p_form_jinf", strict_negative("p-form-jinf", &pinf, xi_inf.xi())?),
        ("c_form_jinf", scaled_nonnegative("c-form-jinf", &cinf, xi_inf.xi(), tau_grid)?),
    ];
    Ok(StabilityVerdict::assemble("corollary-lti", premises, (Some(sp.classification), Some(sc.classification))))
}
