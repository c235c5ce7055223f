//! System representations, simulation and gain estimation.

mod builtin;
mod expr;
mod simulate;
mod tf;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{max_singular_value, CMatrix};
use crate::signal::{l2_norm, Signal};

pub use builtin::{builtin, builtin_names, documented_class, linearized_plant};
pub use expr::{parse_dynamics, BinOp, Expr, Expression, Func};
pub use simulate::{simulate, Trajectory};
pub(crate) use simulate::{midpoint_input, OVERFLOW_LIMIT};
pub use tf::{routh_hurwitz_stable, tf_matrix_to_ss, tf_to_ss, RationalTF};

/// Linear state-space realization with zero initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let nx = a.nrows();
        let n = d.nrows();
        if n == 0 {
            return Err(Error::InvalidArgument("system must have at least one input".into()));
        }
        let check = |cond: bool, expected: usize, found: usize| {
            if cond {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { expected, found })
            }
        };
        check(a.ncols() == nx, nx, a.ncols())?;
        check(d.ncols() == n, n, d.ncols())?;
        check(b.nrows() == nx, nx, b.nrows())?;
        check(b.ncols() == n, n, b.ncols())?;
        check(c.nrows() == n, n, c.nrows())?;
        check(c.ncols() == nx, nx, c.ncols())?;
        if a.iter().chain(b.iter()).chain(c.iter()).chain(d.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite matrix entry".into()));
        }
        Ok(StateSpace { a, b, c, d })
    }

    /// Static gain `y = D u`.
    pub fn static_gain(d: DMatrix<f64>) -> Result<Self> {
        let n = d.nrows();
        StateSpace::new(DMatrix::zeros(0, 0), DMatrix::zeros(0, n), DMatrix::zeros(n, 0), d)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.d.nrows()
    }

    /// Output map scaled by `k` (state equation unchanged).
    pub fn scaled(&self, k: f64) -> StateSpace {
        StateSpace { a: self.a.clone(), b: self.b.clone(), c: &self.c * k, d: &self.d * k }
    }

    /// `C (jωI - A)⁻¹ B + D`.
    pub fn response(&self, omega: f64) -> Result<CMatrix> {
        let n = self.n();
        let nx = self.nx();
        let mut out = self.d.map(|v| Complex64::new(v, 0.0));
        if nx == 0 {
            return Ok(out);
        }
        let jw = Complex64::new(0.0, omega);
        let m = CMatrix::from_fn(nx, nx, |i, j| if i == j { jw } else { Complex64::new(0.0, 0.0) } - self.a[(i, j)]);
        let rhs = self.b.map(|v| Complex64::new(v, 0.0));
        let x = m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidArgument(format!("jωI - A is singular at ω = {omega}")))?;
        for i in 0..n {
            for j in 0..n {
                for k in 0..nx {
                    out[(i, j)] += self.c[(i, k)] * x[(k, j)];
                }
            }
        }
        Ok(out)
    }
}

/// Nonlinear state-space model `ẋ = f(x,u)`, `y = h(x,u)`, `x(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearStateSpace {
    nx: usize,
    n: usize,
    f: Vec<Expression>,
    h: Vec<Expression>,
    feedthrough: bool,
}

impl NonlinearStateSpace {
    pub fn new(nx: usize, n: usize, f: Vec<Expression>, h: Vec<Expression>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("system must have at least one input".into()));
        }
        if f.len() != nx {
            return Err(Error::DimensionMismatch { expected: nx, found: f.len() });
        }
        if h.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: h.len() });
        }
        for e in f.iter().chain(&h) {
            if e.max_state_index() > nx {
                return Err(Error::InvalidArgument(format!("`{e}` references x{} but n_x = {nx}", e.max_state_index())));
            }
            if e.max_input_index() > n {
                return Err(Error::InvalidArgument(format!("`{e}` references u{} but n = {n}", e.max_input_index())));
            }
        }
        let (x0, u0) = (vec![0.0; nx], vec![0.0; n]);
        for e in f.iter().chain(&h) {
            let v = e.eval(&x0, &u0)?;
            if v.abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!("`{e}` evaluates to {v} at the origin, expected 0")));
            }
        }
        let feedthrough = h.iter().any(Expression::uses_input);
        Ok(NonlinearStateSpace { nx, n, f, h, feedthrough })
    }

    pub fn parse(nx: usize, n: usize, f: &[&str], h: &[&str]) -> Result<Self> {
        let f = f.iter().map(|s| parse_dynamics(s)).collect::<Result<_>>()?;
        let h = h.iter().map(|s| parse_dynamics(s)).collect::<Result<_>>()?;
        NonlinearStateSpace::new(nx, n, f, h)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn f(&self) -> &[Expression] {
        &self.f
    }

    pub fn h(&self) -> &[Expression] {
        &self.h
    }

    /// True when no output expression mentions an input variable.
    pub fn feedthrough_free(&self) -> bool {
        !self.feedthrough
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SystemModel {
    Lti(StateSpace),
    Nonlinear(NonlinearStateSpace),
    Scaled { tau: f64, inner: Box<SystemModel> },
    Parallel(Box<SystemModel>, Box<SystemModel>),
}

impl From<StateSpace> for SystemModel {
    fn from(ss: StateSpace) -> Self {
        SystemModel::Lti(ss)
    }
}

impl From<NonlinearStateSpace> for SystemModel {
    fn from(ns: NonlinearStateSpace) -> Self {
        SystemModel::Nonlinear(ns)
    }
}

impl SystemModel {
    pub fn from_tf(tf: &RationalTF) -> Result<Self> {
        Ok(SystemModel::Lti(tf_to_ss(tf)?))
    }

    pub fn scaled(tau: f64, inner: SystemModel) -> Result<Self> {
        let m = SystemModel::Scaled { tau, inner: Box::new(inner) };
        m.validate()?;
        Ok(m)
    }

    pub fn parallel(left: SystemModel, right: SystemModel) -> Result<Self> {
        let m = SystemModel::Parallel(Box::new(left), Box::new(right));
        m.validate()?;
        Ok(m)
    }

    /// Checks the scale range and operand dimensions throughout the tree.
    pub fn validate(&self) -> Result<()> {
        match self {
            SystemModel::Lti(_) | SystemModel::Nonlinear(_) => Ok(()),
            SystemModel::Scaled { tau, inner } => {
                if !(0.0..=1.0).contains(tau) {
                    return Err(Error::InvalidArgument(format!("scale τ = {tau} outside [0, 1]")));
                }
                inner.validate()
            }
            SystemModel::Parallel(l, r) => {
                l.validate()?;
                r.validate()?;
                if l.io_dim() != r.io_dim() {
                    return Err(Error::DimensionMismatch { expected: l.io_dim(), found: r.io_dim() });
                }
                Ok(())
            }
        }
    }

    pub fn io_dim(&self) -> usize {
        match self {
            SystemModel::Lti(ss) => ss.n(),
            SystemModel::Nonlinear(ns) => ns.n,
            SystemModel::Scaled { inner, .. } => inner.io_dim(),
            SystemModel::Parallel(l, _) => l.io_dim(),
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            SystemModel::Lti(ss) => ss.nx(),
            SystemModel::Nonlinear(ns) => ns.nx,
            SystemModel::Scaled { inner, .. } => inner.state_dim(),
            SystemModel::Parallel(l, r) => l.state_dim() + r.state_dim(),
        }
    }

    /// True when every leaf is linear.
    pub fn is_lti(&self) -> bool {
        match self {
            SystemModel::Lti(_) => true,
            SystemModel::Nonlinear(_) => false,
            SystemModel::Scaled { inner, .. } => inner.is_lti(),
            SystemModel::Parallel(l, r) => l.is_lti() && r.is_lti(),
        }
    }

    /// Whether the output can depend on the current input.
    pub fn has_feedthrough(&self) -> bool {
        match self {
            SystemModel::Lti(ss) => ss.d.iter().any(|v| *v != 0.0),
            SystemModel::Nonlinear(ns) => ns.feedthrough,
            SystemModel::Scaled { tau, inner } => *tau != 0.0 && inner.has_feedthrough(),
            SystemModel::Parallel(l, r) => l.has_feedthrough() || r.has_feedthrough(),
        }
    }

    /// Short human-readable description.
    pub fn describe(&self) -> String {
        match self {
            SystemModel::Lti(ss) => format!("LTI(n={}, n_x={})", ss.n(), ss.nx()),
            SystemModel::Nonlinear(ns) => format!("Nonlinear(n={}, n_x={})", ns.n, ns.nx),
            SystemModel::Scaled { tau, inner } => format!("{tau}*{}", inner.describe()),
            SystemModel::Parallel(l, r) => format!("({} + {})", l.describe(), r.describe()),
        }
    }

    pub(crate) fn deriv(&self, x: &[f64], u: &[f64], dx: &mut [f64]) -> Result<()> {
        match self {
            SystemModel::Lti(ss) => {
                for i in 0..ss.nx() {
                    let mut acc = 0.0;
                    for k in 0..ss.nx() {
                        acc += ss.a[(i, k)] * x[k];
                    }
                    for j in 0..ss.n() {
                        acc += ss.b[(i, j)] * u[j];
                    }
                    dx[i] = acc;
                }
                Ok(())
            }
            SystemModel::Nonlinear(ns) => {
                for (slot, f) in dx.iter_mut().zip(&ns.f) {
                    *slot = f.eval(x, u)?;
                }
                Ok(())
            }
            SystemModel::Scaled { inner, .. } => inner.deriv(x, u, dx),
            SystemModel::Parallel(l, r) => {
                let k = l.state_dim();
                l.deriv(&x[..k], u, &mut dx[..k])?;
                r.deriv(&x[k..], u, &mut dx[k..])
            }
        }
    }

    /// Adds `scale * h(x, u)` into `y`.
    pub(crate) fn output_acc(&self, x: &[f64], u: &[f64], y: &mut [f64], scale: f64) -> Result<()> {
        match self {
            SystemModel::Lti(ss) => {
                for i in 0..ss.n() {
                    let mut acc = 0.0;
                    for k in 0..ss.nx() {
                        acc += ss.c[(i, k)] * x[k];
                    }
                    for j in 0..ss.n() {
                        acc += ss.d[(i, j)] * u[j];
                    }
                    y[i] += scale * acc;
                }
                Ok(())
            }
            SystemModel::Nonlinear(ns) => {
                for (slot, h) in y.iter_mut().zip(&ns.h) {
                    *slot += scale * h.eval(x, u)?;
                }
                Ok(())
            }
            SystemModel::Scaled { tau, inner } => inner.output_acc(x, u, y, scale * tau),
            SystemModel::Parallel(l, r) => {
                let k = l.state_dim();
                l.output_acc(&x[..k], u, y, scale)?;
                r.output_acc(&x[k..], u, y, scale)
            }
        }
    }

    /// Feedthrough matrix of an LTI-composed system, i.e. its value at infinite frequency.
    pub fn feedthrough_matrix(&self) -> Result<DMatrix<f64>> {
        match self {
            SystemModel::Lti(ss) => Ok(ss.d.clone()),
            SystemModel::Nonlinear(_) => Err(Error::NotLti),
            SystemModel::Scaled { tau, inner } => Ok(inner.feedthrough_matrix()? * *tau),
            SystemModel::Parallel(l, r) => Ok(l.feedthrough_matrix()? + r.feedthrough_matrix()?),
        }
    }
}

/// Frequency response of an LTI-composed system.
pub fn freq_response(sys: &SystemModel, omega: f64) -> Result<CMatrix> {
    match sys {
        SystemModel::Lti(ss) => ss.response(omega),
        SystemModel::Nonlinear(_) => Err(Error::NotLti),
        SystemModel::Scaled { tau, inner } => Ok(freq_response(inner, omega)? * Complex64::new(*tau, 0.0)),
        SystemModel::Parallel(l, r) => Ok(freq_response(l, omega)? + freq_response(r, omega)?),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainKind {
    Exact,
    UpperBound,
    Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InstantaneousGain {
    pub value: f64,
    pub kind: GainKind,
}

const PROBE_WINDOWS: [f64; 3] = [0.1, 0.05, 0.025];
const PROBE_AMPLITUDES: [f64; 3] = [0.1, 1.0, 10.0];
const PROBE_STEPS: usize = 200;

/// Uniform instantaneous gain, exact where the structure allows it.
pub fn instantaneous_gain(sys: &SystemModel) -> Result<InstantaneousGain> {
    sys.validate()?;
    match sys {
        SystemModel::Lti(ss) => {
            let d = ss.d.map(|v| Complex64::new(v, 0.0));
            Ok(InstantaneousGain { value: max_singular_value(&d), kind: GainKind::Exact })
        }
        SystemModel::Nonlinear(ns) if !ns.feedthrough => Ok(InstantaneousGain { value: 0.0, kind: GainKind::Exact }),
        SystemModel::Nonlinear(_) => probe_gain(sys),
        SystemModel::Scaled { tau, inner } => {
            let g = instantaneous_gain(inner)?;
            Ok(InstantaneousGain { value: tau * g.value, kind: g.kind })
        }
        SystemModel::Parallel(l, r) => {
            let (gl, gr) = (instantaneous_gain(l)?, instantaneous_gain(r)?);
            let kind = if gl.kind == GainKind::Estimate || gr.kind == GainKind::Estimate {
                GainKind::Estimate
            } else {
                GainKind::UpperBound
            };
            Ok(InstantaneousGain { value: gl.value + gr.value, kind })
        }
    }
}

/// Constant inputs of several amplitudes and directions on shrinking windows;
/// the energy ratio is extrapolated linearly in the window length to zero.
fn probe_gain(sys: &SystemModel) -> Result<InstantaneousGain> {
    let n = sys.io_dim();
    let mut ratios = Vec::with_capacity(PROBE_WINDOWS.len());
    for &window in &PROBE_WINDOWS {
        let dt = window / PROBE_STEPS as f64;
        let mut best = 0.0f64;
        for &amp in &PROBE_AMPLITUDES {
            for dir in 0..2 * n {
                let sign = if dir % 2 == 0 { amp } else { -amp };
                let input = Signal::from_fn_vec(dt, window, n, |_, u| u[dir / 2] = sign)?;
                let out = simulate(sys, &input).map_err(|_| Error::GainProbe)?.output;
                let r = l2_norm(&out) / l2_norm(&input);
                if !r.is_finite() {
                    return Err(Error::GainProbe);
                }
                best = best.max(r);
            }
        }
        ratios.push(best);
    }
    let (g1, g2) = (ratios[1], ratios[2]);
    let (w1, w2) = (PROBE_WINDOWS[1], PROBE_WINDOWS[2]);
    let value = (g2 + (g2 - g1) * w2 / (w1 - w2)).max(0.0);
    Ok(InstantaneousGain { value, kind: GainKind::Estimate })
}

/// Largest observed energy ratio over the battery, a lower bound on the gain.
pub fn gain_estimate(sys: &SystemModel, battery: &[Signal]) -> Result<f64> {
    if battery.is_empty() {
        return Err(Error::EmptyBattery);
    }
    let mut best = 0.0f64;
    for (i, u) in battery.iter().enumerate() {
        let nu = l2_norm(u);
        if nu == 0.0 {
            return Err(Error::ZeroNormInput(i));
        }
        let y = simulate(sys, u)?.output;
        best = best.max(l2_norm(&y) / nu);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lti(num: &[f64], den: &[f64]) -> SystemModel {
        SystemModel::from_tf(&RationalTF::new(num, den).unwrap()).unwrap()
    }

    #[test]
    fn frequency_response_examples() {
        let c2 = lti(&[0.1], &[1.0, 1.0]);
        let v = freq_response(&c2, 1.0).unwrap()[(0, 0)];
        assert!((v - Complex64::new(0.05, -0.05)).norm() < 1e-15);
        let v = freq_response(&lti(&[1.0], &[1.0, 2.0]), 0.0).unwrap()[(0, 0)];
        assert!((v.re - 0.5).abs() < 1e-15);
        let g = lti(&[-1.0, -1.0], &[1.0, 2.0]);
        assert!((freq_response(&g, 0.0).unwrap()[(0, 0)].re + 0.5).abs() < 1e-15);
        let nl = builtin("paper-P").unwrap();
        assert_eq!(freq_response(&nl, 1.0), Err(Error::NotLti));
    }

    #[test]
    fn composed_response() {
        let a = lti(&[1.0], &[1.0, 1.0]);
        let b = lti(&[-1.0, -1.0], &[1.0, 2.0]);
        let sum = SystemModel::parallel(SystemModel::scaled(0.5, a.clone()).unwrap(), b.clone()).unwrap();
        for w in [0.0, 0.3, 7.0] {
            let expect = freq_response(&a, w).unwrap()[(0, 0)] * 0.5 + freq_response(&b, w).unwrap()[(0, 0)];
            assert!((freq_response(&sum, w).unwrap()[(0, 0)] - expect).norm() < 1e-15);
        }
    }

    #[test]
    fn model_validation() {
        let a = lti(&[1.0], &[1.0, 1.0]);
        assert!(SystemModel::scaled(1.5, a.clone()).is_err());
        assert!(SystemModel::scaled(-0.1, a.clone()).is_err());
        let two = SystemModel::Lti(StateSpace::static_gain(DMatrix::identity(2, 2)).unwrap());
        assert!(matches!(SystemModel::parallel(a, two), Err(Error::DimensionMismatch { .. })));
        assert!(NonlinearStateSpace::parse(1, 1, &["x1 + 1"], &["x1"]).is_err());
        assert!(NonlinearStateSpace::parse(1, 1, &["x2"], &["x1"]).is_err());
        assert!(NonlinearStateSpace::parse(1, 1, &["-x1 + u2"], &["x1"]).is_err());
        let ok = NonlinearStateSpace::parse(1, 1, &["-x1 + u1"], &["x1 + 0.5*u1"]).unwrap();
        assert!(!ok.feedthrough_free());
    }

    #[test]
    fn instantaneous_gain_examples() {
        let p = instantaneous_gain(&builtin("paper-P").unwrap()).unwrap();
        assert_eq!(p, InstantaneousGain { value: 0.0, kind: GainKind::Exact });
        let c1 = instantaneous_gain(&builtin("C1").unwrap()).unwrap();
        assert!((c1.value - 1.0).abs() < 1e-12);
        assert_eq!(c1.kind, GainKind::Exact);
        let c4 = instantaneous_gain(&builtin("C4").unwrap()).unwrap();
        assert!((c4.value - 4.0).abs() < 1e-12);
        assert_eq!(c4.kind, GainKind::UpperBound);
        let half = SystemModel::scaled(0.5, builtin("C1").unwrap()).unwrap();
        assert!((instantaneous_gain(&half).unwrap().value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn probe_recovers_static_feedthrough() {
        // y = x1 + 2 u1 has instantaneous gain 2
        let sys: SystemModel = NonlinearStateSpace::parse(1, 1, &["-x1 + u1"], &["x1 + 2*u1"]).unwrap().into();
        let g = instantaneous_gain(&sys).unwrap();
        assert_eq!(g.kind, GainKind::Estimate);
        assert!((g.value - 2.0).abs() < 1e-3, "{}", g.value);
    }

    #[test]
    fn gain_estimate_examples() {
        let lag = lti(&[1.0], &[1.0, 1.0]);
        let slow = Signal::from_fn(0.01, 200.0, |t| (-0.02 * t).exp()).unwrap();
        let fast = Signal::from_fn(0.01, 200.0, |t| (-t).exp() * (3.0 * t).sin()).unwrap();
        let g = gain_estimate(&lag, &[fast.clone(), slow.clone()]).unwrap();
        assert!((0.9..=1.0 + 1e-6).contains(&g), "{g}");
        let zero = SystemModel::Lti(StateSpace::static_gain(DMatrix::zeros(1, 1)).unwrap());
        assert_eq!(gain_estimate(&zero, &[fast.clone()]).unwrap(), 0.0);
        let one = SystemModel::Lti(StateSpace::static_gain(DMatrix::identity(1, 1)).unwrap());
        let half = SystemModel::scaled(0.5, one).unwrap();
        assert!((gain_estimate(&half, &[fast.clone()]).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(gain_estimate(&lag, &[]), Err(Error::EmptyBattery));
        let z = Signal::zeros(0.01, 1, 10).unwrap();
        assert_eq!(gain_estimate(&lag, &[fast, z]), Err(Error::ZeroNormInput(1)));
    }
}
