use super::SystemModel;
use crate::error::{Error, Result};
use crate::signal::Signal;

/// States or outputs beyond this magnitude are treated as divergence.
pub(crate) const OVERFLOW_LIMIT: f64 = 1e100;

/// Sampled response of a system. `states` is `None` for static systems.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub output: Signal,
    pub states: Option<Signal>,
}

/// Input value half a step after sample `m`, interpolated from samples up to
/// `m + 1` only: cubic through `m-2..=m+1` once enough history exists,
/// quadratic on the second step and linear on the first.
pub(crate) fn midpoint_input(input: &Signal, m: usize, out: &mut [f64]) {
    let (a, b) = (input.sample(m), input.sample(m + 1));
    if m == 0 {
        for i in 0..out.len() {
            out[i] = 0.5 * (a[i] + b[i]);
        }
    } else if m == 1 {
        let p = input.sample(0);
        for i in 0..out.len() {
            out[i] = -0.125 * p[i] + 0.75 * a[i] + 0.375 * b[i];
        }
    } else {
        let (pp, p) = (input.sample(m - 2), input.sample(m - 1));
        for i in 0..out.len() {
            out[i] = 0.0625 * pp[i] - 0.3125 * p[i] + 0.9375 * a[i] + 0.3125 * b[i];
        }
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

/// Fixed-step classical Runge–Kutta from `x(0) = 0` on the input's grid.
pub fn simulate(sys: &SystemModel, input: &Signal) -> Result<Trajectory> {
    sys.validate()?;
    let n = sys.io_dim();
    if input.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: input.dim() });
    }
    let nx = sys.state_dim();
    let len = input.len();
    let dt = input.dt();

    let mut x = vec![0.0; nx];
    let mut states = vec![0.0; nx * len];
    let mut outputs = vec![0.0; n * len];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; nx], vec![0.0; nx], vec![0.0; nx], vec![0.0; nx]);
    let mut tmp = vec![0.0; nx];
    let mut u_mid = vec![0.0; n];

    for m in 0..len {
        let t = input.time(m);
        let u = input.sample(m);
        let y = &mut outputs[m * n..(m + 1) * n];
        sys.output_acc(&x, u, y, 1.0).map_err(at_time(t))?;
        if diverged(y) {
            return Err(Error::Simulation { time: t, reason: "output overflow".into() });
        }
        states[m * nx..(m + 1) * nx].copy_from_slice(&x);
        if m + 1 == len || nx == 0 {
            continue;
        }
        midpoint_input(input, m, &mut u_mid);
        let u_next = input.sample(m + 1);
        let err = at_time(t);
        sys.deriv(&x, u, &mut k1).map_err(&err)?;
        for i in 0..nx {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        sys.deriv(&tmp, &u_mid, &mut k2).map_err(&err)?;
        for i in 0..nx {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        sys.deriv(&tmp, &u_mid, &mut k3).map_err(&err)?;
        for i in 0..nx {
            tmp[i] = x[i] + dt * k3[i];
        }
        sys.deriv(&tmp, u_next, &mut k4).map_err(&err)?;
        for i in 0..nx {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if diverged(&x) {
            return Err(Error::Simulation { time: input.time(m + 1), reason: "state overflow".into() });
        }
    }
    let states = if nx == 0 { None } else { Some(Signal::from_flat(dt, nx, states)?) };
    Ok(Trajectory { output: Signal::from_flat(dt, n, outputs)?, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{trapezoid, truncate};
    use crate::sysmodel::{builtin, RationalTF};

    fn lag() -> SystemModel {
        SystemModel::from_tf(&RationalTF::new(&[1.0], &[1.0, 1.0]).unwrap()).unwrap()
    }

    #[test]
    fn zero_input_zero_output() {
        let u = Signal::zeros(0.01, 1, 500).unwrap();
        for name in ["paper-P", "C1", "C4", "C5"] {
            let y = simulate(&builtin(name).unwrap(), &u).unwrap().output;
            assert_eq!(y.max_abs(), 0.0, "{name}");
        }
    }

    #[test]
    fn lag_response_to_decaying_exponential() {
        let u = Signal::from_fn(1e-3, 5.0, |t| (-t).exp()).unwrap();
        let y = simulate(&lag(), &u).unwrap().output;
        let y1 = y.sample(1000)[0];
        assert!((y1 - (-1.0f64).exp()).abs() < 1e-6, "{y1}");
    }

    #[test]
    fn fourth_order_convergence_for_input_flat_at_start() {
        // u = sin t has u''(0) = 0, so the causal first interval is not the bottleneck
        let err = |dt: f64| {
            let u = Signal::from_fn(dt, 4.0, |t| t.sin()).unwrap();
            let y = simulate(&lag(), &u).unwrap().output;
            let exact = |t: f64| 0.5 * (t.sin() - t.cos() + (-t).exp());
            (0..y.len()).map(|m| (y.sample(m)[0] - exact(y.time(m))).abs()).fold(0.0, f64::max)
        };
        let errs: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&dt| err(dt)).collect();
        for w in errs.windows(2) {
            assert!(w[0] / w[1] >= 14.0, "{errs:?}");
        }
    }

    #[test]
    fn midpoint_stencils_are_exact_on_polynomials() {
        let dt = 0.1;
        let cubic = Signal::from_fn(dt, 1.0, |t| 1.0 - 2.0 * t + 3.0 * t * t - 4.0 * t.powi(3)).unwrap();
        let quad = Signal::from_fn(dt, 1.0, |t| 1.0 - 2.0 * t + 3.0 * t * t).unwrap();
        let lin = Signal::from_fn(dt, 1.0, |t| 1.0 - 2.0 * t).unwrap();
        let mut out = [0.0];
        for (sig, from, f) in [
            (&cubic, 2, &(|t: f64| 1.0 - 2.0 * t + 3.0 * t * t - 4.0 * t.powi(3)) as &dyn Fn(f64) -> f64),
            (&quad, 1, &|t: f64| 1.0 - 2.0 * t + 3.0 * t * t),
            (&lin, 0, &|t: f64| 1.0 - 2.0 * t),
        ] {
            for m in from..sig.len() - 1 {
                midpoint_input(sig, m, &mut out);
                assert!((out[0] - f((m as f64 + 0.5) * dt)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn plant_preserves_input_integral() {
        let u = Signal::from_fn(1e-3, 40.0, |t| (-t).exp()).unwrap();
        let y = simulate(&builtin("paper-P").unwrap(), &u).unwrap().output;
        let iy = trapezoid(&y.component(0), y.dt());
        assert!((iy - 1.0).abs() < 1e-2, "{iy}");
    }

    #[test]
    fn causal() {
        let u = Signal::from_fn(0.01, 10.0, |t| (2.0 * t).sin() * (-0.1 * t).exp()).unwrap();
        let sys = builtin("C5").unwrap();
        let full = simulate(&sys, &u).unwrap().output;
        let cut = 4.0;
        let part = simulate(&sys, &truncate(&u, cut)).unwrap().output;
        for m in 0..=400 {
            assert!((full.sample(m)[0] - part.sample(m)[0]).abs() <= 1e-12);
        }
    }

    #[test]
    fn reports_divergence_time() {
        let sys: SystemModel =
            crate::sysmodel::NonlinearStateSpace::parse(1, 1, &["x1^2 + u1"], &["x1"]).unwrap().into();
        let u = Signal::from_fn(0.01, 10.0, |_| 1.0).unwrap();
        match simulate(&sys, &u) {
            Err(Error::Simulation { time, .. }) => assert!(time > 0.5 && time < 10.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dimension_checked() {
        let u = Signal::zeros(0.01, 2, 10).unwrap();
        assert!(matches!(simulate(&lag(), &u), Err(Error::DimensionMismatch { .. })));
    }
}
