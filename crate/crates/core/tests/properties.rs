use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use niq_core::battery::InputBattery;
use niq_core::feedback::simulate_loop;
use niq_core::iqc::{b_membership, complement, lti_b_condition, time_average, XiConstraint};
use niq_core::linalg::{hermitian_deviation, CMatrix};
use niq_core::ni_analysis::{check_ni, BandConfig, NiClass};
use niq_core::signal::{band_energy, fourier, l2_norm, nyquist, truncate, FreqGrid, Signal};
use niq_core::sysmodel::{builtin, freq_response, simulate, RationalTF, StateSpace, SystemModel};

fn damped(dt: f64, horizon: f64, a: f64, l: f64, w: f64, p: f64) -> Signal {
    Signal::from_fn(dt, horizon, |t| a * (-l * t).exp() * (w * t + p).sin()).unwrap()
}

fn lti(num: &[f64], den: &[f64]) -> SystemModel {
    SystemModel::from_tf(&RationalTF::new(num, den).unwrap()).unwrap()
}

fn small_battery() -> Vec<Signal> {
    InputBattery { count: 5, dt: 5e-3, ..Default::default() }.members().unwrap()
}

fn poly_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for r in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (i, v) in c.iter().enumerate() {
            next[i] += v;
            next[i + 1] -= r * v;
        }
        c = next;
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fourier_is_linear(
        a in -3.0f64..3.0, b in -3.0f64..3.0,
        l1 in 0.3f64..2.0, w1 in 0.1f64..10.0, l2 in 0.3f64..2.0, w2 in 0.1f64..10.0,
    ) {
        let u = damped(1e-2, 30.0, 1.0, l1, w1, 0.3);
        let v = damped(1e-2, 30.0, 1.0, l2, w2, 1.1);
        let grid = FreqGrid::new(50.0, 512).unwrap();
        let mixed = fourier(&u.combine(a, &v, b).unwrap(), &grid).unwrap();
        let (fu, fv) = (fourier(&u, &grid).unwrap(), fourier(&v, &grid).unwrap());
        for k in 0..grid.count {
            let want = fu.value(k)[0] * a + fv.value(k)[0] * b;
            let scale = a.abs() * fu.value(k)[0].norm() + b.abs() * fv.value(k)[0].norm() + 1e-300;
            prop_assert!((mixed.value(k)[0] - want).norm() <= 1e-12 * scale.max(1e-3));
        }
    }

    #[test]
    fn truncate_is_idempotent(t_cut in -1.0f64..12.0, w in 0.1f64..5.0) {
        let s = damped(1e-2, 10.0, 1.0, 0.5, w, 0.0);
        let once = truncate(&s, t_cut);
        prop_assert_eq!(truncate(&once, t_cut), once);
    }

    #[test]
    fn complement_is_an_exact_involution(
        diag in prop::collection::vec(-5.0f64..5.0, 4),
        off in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 6),
        eps in 0.0f64..2.0,
    ) {
        let mut m = CMatrix::zeros(4, 4);
        let mut k = 0;
        for i in 0..4 {
            m[(i, i)] = Complex64::new(diag[i], 0.0);
            for j in i + 1..4 {
                let z = Complex64::new(off[k].0, off[k].1);
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
                k += 1;
            }
        }
        let xi = XiConstraint::new(m, eps).unwrap();
        let once = complement(&xi).unwrap();
        prop_assert_eq!(hermitian_deviation(once.xi()), 0.0);
        prop_assert_eq!(complement(&once).unwrap(), xi);
    }

    #[test]
    fn realization_matches_rational_evaluation(
        poles in prop::collection::vec(0.2f64..5.0, 1..4),
        num in prop::collection::vec(-3.0f64..3.0, 1..4),
        omegas in prop::collection::vec(0.0f64..50.0, 10),
    ) {
        let den = poly_from_roots(&poles.iter().map(|p| -p).collect::<Vec<_>>());
        let num: Vec<f64> = num.into_iter().take(den.len()).collect();
        prop_assume!(num.iter().any(|v| *v != 0.0));
        let tf = RationalTF::new(&num, &den).unwrap();
        let sys = SystemModel::from_tf(&tf).unwrap();
        for w in omegas {
            let exact = tf.eval(Complex64::new(0.0, w));
            let got = freq_response(&sys, w).unwrap()[(0, 0)];
            prop_assert!((got - exact).norm() <= 1e-9 * exact.norm().max(1e-12), "ω = {}: {} vs {}", w, got, exact);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn simulation_is_causal(idx in 0usize..7, t_cut in 0.5f64..9.5, w in 0.2f64..6.0) {
        let name = ["paper-P", "C1", "C2", "C3", "C4", "C5", "G"][idx];
        let sys = builtin(name).unwrap();
        let u = damped(1e-2, 10.0, 1.0, 0.2, w, 0.4);
        let full = simulate(&sys, &u).unwrap().output;
        let part = simulate(&sys, &truncate(&u, t_cut)).unwrap().output;
        for m in 0..full.len() {
            if full.time(m) > t_cut {
                break;
            }
            prop_assert!((full.sample(m)[0] - part.sample(m)[0]).abs() <= 1e-12, "{} at {}", name, full.time(m));
        }
    }

    #[test]
    fn parseval_holds(l in 0.3f64..2.0, w in 0.1f64..15.0, p in 0.0f64..6.0) {
        let dt = 1e-3;
        let u = Signal::from_fn(dt, 40.0, |t| (1.0 - (-4.0 * t * t).exp()) * (-l * t).exp() * (w * t + p).sin()).unwrap();
        let grid = FreqGrid::to_nyquist(dt, 1 << 16).unwrap();
        let e = band_energy(&fourier(&u, &grid).unwrap(), 0.0, nyquist(dt)).unwrap();
        let n2 = l2_norm(&u).powi(2);
        prop_assert!((2.0 * e - n2).abs() <= 1e-3 * (1.0 + n2), "{} vs {}", 2.0 * e, n2);
    }

    #[test]
    fn scaling_scales_averages(tau in 0.0f64..=1.0, member in 0usize..10) {
        let u = InputBattery { dt: 5e-3, ..Default::default() }.member(member).unwrap();
        let p = builtin("paper-P").unwrap();
        let base = time_average(&simulate(&p, &u).unwrap().output).values[0];
        let scaled = time_average(&simulate(&SystemModel::scaled(tau, p).unwrap(), &u).unwrap().output).values[0];
        prop_assert!((scaled - tau * base).abs() <= 1e-9 * base.abs().max(1e-12));
    }

    #[test]
    fn scaled_form_is_quadratic_in_tau(member in 0usize..10) {
        let u = InputBattery { dt: 5e-3, ..Default::default() }.member(member).unwrap();
        let xt = complement(&XiConstraint::xi2(0.0)).unwrap();
        let p = builtin("paper-P").unwrap();
        let form = |tau: f64| {
            let y = simulate(&SystemModel::scaled(tau, p.clone()).unwrap(), &u).unwrap().output;
            xt.form(&[time_average(&y).values[0], time_average(&u).values[0]])
        };
        let taus = [0.0, 0.25, 0.5, 0.75, 1.0];
        let q: Vec<f64> = taus.iter().map(|&t| form(t)).collect();
        // quadratic through τ = 0, 0.5, 1 predicts the other two
        let (a, b, c) = (2.0 * (q[4] - 2.0 * q[2] + q[0]), -3.0 * q[0] + 4.0 * q[2] - q[4], q[0]);
        for (t, v) in [(0.25, q[1]), (0.75, q[3])] {
            prop_assert!((a * t * t + b * t + c - v).abs() <= 1e-6);
        }
    }

    #[test]
    fn linear_loop_matches_closed_form(k1 in 0.1f64..1.5, k2 in -1.5f64..1.5, a1 in 0.5f64..3.0, a2 in 0.5f64..3.0) {
        prop_assume!(k1 * k2 < 0.9 * a1 * a2);
        let p = lti(&[k1], &[1.0, a1]);
        let c = lti(&[k2], &[1.0, a2]);
        // P/(1 − PC) = k1(s + a2) / ((s + a1)(s + a2) − k1 k2)
        let closed = lti(&[k1, k1 * a2], &[1.0, a1 + a2, a1 * a2 - k1 * k2]);
        let d1 = Signal::pulse(1e-3, 20.0, 0.0, 0.05, 1.0).unwrap();
        let d2 = Signal::zeros(1e-3, 1, d1.len()).unwrap();
        let tr = simulate_loop(&p, &c, &d1, &d2).unwrap();
        let want = simulate(&closed, &d1).unwrap().output;
        let rel = l2_norm(&tr.y1.combine(1.0, &want, -1.0).unwrap()) / l2_norm(&want);
        prop_assert!(rel <= 1e-3, "{}", rel);
    }

    #[test]
    fn summing_nodes_balance(k in 0.1f64..0.9, amp in -2.0f64..2.0, w in 0.5f64..5.0) {
        let p = lti(&[k, 1.0], &[1.0, 2.0]);
        let c = builtin("G").unwrap();
        let d1 = damped(1e-2, 10.0, amp, 0.5, w, 0.2);
        let d2 = damped(1e-2, 10.0, 1.0, 1.0, 1.0, 0.0);
        let tr = simulate_loop(&p, &c, &d1, &d2).unwrap();
        for m in 0..d1.len() {
            let scale = 1.0 + tr.u1.sample(m)[0].abs();
            prop_assert!((tr.u1.sample(m)[0] - d1.sample(m)[0] - tr.u2.sample(m)[0]).abs() <= 1e-12 * scale);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn ni_cone_is_closed(alpha in 0.0f64..=1.0, beta in 0.0f64..=1.0) {
        let b = small_battery();
        let bands = BandConfig::default();
        let g = SystemModel::scaled(alpha, builtin("C2").unwrap()).unwrap();
        let h = SystemModel::scaled(beta, builtin("paper-P").unwrap()).unwrap();
        let v = check_ni(&SystemModel::parallel(g, h).unwrap(), &b, &bands).unwrap();
        prop_assert!(v.min_value >= -1e-6, "{:?}", v);
    }

    #[test]
    fn classification_is_scale_invariant(tau in 0.05f64..=1.0, idx in 0usize..3) {
        let b = small_battery();
        let bands = BandConfig::default();
        let sys = builtin(["C2", "C3", "G"][idx]).unwrap();
        let base = check_ni(&sys, &b, &bands).unwrap().classification;
        let scaled = check_ni(&SystemModel::scaled(tau, sys).unwrap(), &b, &bands).unwrap().classification;
        prop_assert_eq!(base, NiClass::Sni);
        prop_assert_eq!(scaled, base);
    }

    #[test]
    fn dc_condition_implies_battery_membership(k in -3.0f64..3.0, a in 0.5f64..3.0, which in 0usize..2) {
        let sys = lti(&[k * a], &[1.0, a]);
        let xi = if which == 0 { XiConstraint::xi1(0.0) } else { XiConstraint::xi2(0.0) };
        let dc = lti_b_condition(&sys, &xi).unwrap();
        let delta = dc.margins["margin"];
        prop_assume!(delta > 0.0);
        let battery = InputBattery::default().members().unwrap();
        let r = b_membership(&sys, &xi.with_epsilon(delta).unwrap(), &battery).unwrap();
        prop_assert!(r.margins["epsilon_measured"] >= delta - 0.01, "{:?}", r.margins);
    }
}

#[test]
fn static_zero_system_is_ni_but_not_sni() {
    let z = SystemModel::Lti(StateSpace::static_gain(DMatrix::zeros(1, 1)).unwrap());
    let v = check_ni(&z, &small_battery(), &BandConfig::default()).unwrap();
    assert_eq!(v.classification, NiClass::Ni);
}
