//! Acceptance criteria 1–11, one PASS/FAIL line each. Exits nonzero if any
//! criterion fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use niq_cli::app::invoke;
use niq_core::battery::InputBattery;
use niq_core::feedback::{
    check_corollary_lti, check_corollary_nl, check_theorem_sni2, impulse_experiment, simulate_loop, ImpulseConfig,
    ImpulseLabel,
};
use niq_core::iqc::{
    b_membership, bc_membership, construct_multipliers, verify_prop_iqc, XiConstraint, DEFAULT_TAU_GRID,
};
use niq_core::ni_analysis::{
    ccw_functional, crosscheck_lti, default_sweep_grid, discrepancy_flag, lti_ni_sweep, ni_sweep_values,
    BandConfig, NiClass, SWEEP_TOL,
};
use niq_core::signal::{band_energy, band_quadratic, fourier, l2_norm, nyquist, trapezoid, FreqGrid, Signal};
use niq_core::sysmodel::{builtin, linearized_plant, simulate, RationalTF, SystemModel};
use serde_json::Value;
use tempfile::TempDir;

type Outcome = Result<String, String>;

fn tf(num: &[f64], den: &[f64]) -> SystemModel {
    SystemModel::from_tf(&RationalTF::new(num, den).unwrap()).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn default_battery() -> Vec<Signal> {
    InputBattery::default().members().unwrap()
}

fn criterion_1() -> Outcome {
    let grid = default_sweep_grid();
    let cases: [(&str, fn(f64) -> f64); 4] = [
        ("C2", |w| 0.2 * w / (1.0 + w * w)),
        ("C3", |w| 2.0 * w / (1.0 + w * w)),
        ("G", |w| 2.0 * w / (4.0 + w * w)),
        ("C1", |w| -2.0 * w / (1.0 + w * w)),
    ];
    let mut worst: f64 = 0.0;
    let mut problems = Vec::new();
    for (name, exact) in cases {
        let sys = builtin(name).unwrap();
        let values = ni_sweep_values(&sys, &grid).unwrap();
        for (&w, v) in grid.iter().zip(&values) {
            worst = worst.max((v - exact(w)).abs() / exact(w).abs());
        }
        let class = lti_ni_sweep(&sys, &grid, SWEEP_TOL).unwrap().classification;
        let want = if name == "C1" { NiClass::NotNi } else { NiClass::Sni };
        if class != want {
            problems.push(format!("{name} classified {}", class.as_str()));
        }
    }
    if discrepancy_flag("C1", NiClass::NotNi).is_none() {
        problems.push("C1 discrepancy flag missing".into());
    }
    check(worst <= 1e-10 && problems.is_empty(), format!("max relative sweep error {worst:.2e}; {problems:?}"))
}

fn criterion_2() -> Outcome {
    let battery = default_battery();
    let bands = BandConfig::default();
    let mut systems: Vec<(String, SystemModel)> = Vec::new();
    for name in ["C1", "C2", "C3", "G", "C4", "C5", "paper-P"] {
        let sys = builtin(name).unwrap();
        if sys.is_lti() {
            systems.push((name.to_string(), sys));
        }
    }
    systems.push(("paper-P linearized".into(), linearized_plant()));
    systems.push(("unit gain".into(), tf(&[1.0], &[1.0])));
    let mut problems = Vec::new();
    let mut lines = Vec::new();
    for (name, sys) in &systems {
        let x = crosscheck_lti(sys, &battery, &bands).unwrap();
        lines.push(format!("{name}: {}", x.battery.classification.as_str()));
        if !x.report.passed() {
            problems.push(format!("{name}: battery {} vs sweep {}", x.battery.classification.as_str(), x.sweep.classification.as_str()));
        }
        if x.sweep.min_value > 0.0 && x.battery.epsilon_hat <= 0.0 {
            problems.push(format!("{name}: sweep margin positive but battery margin {}", x.battery.epsilon_hat));
        }
    }
    check(problems.is_empty(), format!("{} systems [{}]; {problems:?}", systems.len(), lines.join(", ")))
}

fn criterion_3() -> Outcome {
    let battery = InputBattery { count: 20, ..Default::default() }.members().unwrap();
    let plant = builtin("paper-P").unwrap();
    let dt = battery[0].dt();
    let grid = FreqGrid::to_nyquist(dt, 1 << 16).unwrap();
    let mut worst: f64 = 0.0;
    for u in &battery {
        let y = simulate(&plant, u).unwrap().output;
        let time = ccw_functional(u, &y, u.horizon()).unwrap();
        let freq = 2.0 * band_quadratic(&fourier(u, &grid).unwrap(), &fourier(&y, &grid).unwrap(), 0.0, nyquist(dt)).unwrap();
        worst = worst.max((time - freq).abs() / (1e-3 * (1.0 + time.abs())));
    }
    check(worst <= 1.0, format!("worst |Δ| / (1e-3 (1 + |value|)) = {worst:.3}"))
}

fn criterion_4() -> Outcome {
    let battery = default_battery();
    let plant = builtin("paper-P").unwrap();
    let (mut worst, mut min_full) = (f64::INFINITY, f64::INFINITY);
    for u in &battery {
        let y = simulate(&plant, u).unwrap().output;
        let scale = 1.0 + l2_norm(u) * l2_norm(&y);
        for t in [10.0, 20.0, 40.0] {
            let v = ccw_functional(u, &y, t).unwrap();
            worst = worst.min(v / scale);
            if t == 40.0 {
                min_full = min_full.min(v);
            }
        }
    }
    check(worst >= -1e-6 && min_full > 0.0, format!("min normalized value {worst:.3e}; min full-horizon value {min_full:.3e}"))
}

fn criterion_5() -> Outcome {
    let u = Signal::from_fn(1e-3, 40.0, |t| (-t).exp()).unwrap();
    let y = simulate(&builtin("paper-P").unwrap(), &u).unwrap().output;
    let integral = trapezoid(&y.component(0), y.dt());
    check((integral - 1.0).abs() <= 0.01, format!("∫y dt = {integral:.6}"))
}

fn criterion_6() -> Outcome {
    let battery = default_battery();
    let plant = builtin("paper-P").unwrap();
    let mut problems = Vec::new();
    for (label, xi) in [("xi1", XiConstraint::xi1(0.0)), ("xi2", XiConstraint::xi2(0.0))] {
        for tau in DEFAULT_TAU_GRID {
            let r = bc_membership(&SystemModel::scaled(tau, plant.clone()).unwrap(), &xi, &battery).unwrap();
            if !r.passed() {
                problems.push(format!("τ = {tau} fails B_C({label})"));
            }
        }
    }
    let c4 = b_membership(&builtin("C4").unwrap(), &XiConstraint::xi1(0.5), &battery).unwrap();
    let eps = c4.margins["epsilon_measured"];
    if !c4.passed() || !(1.8..=2.2).contains(&eps) {
        problems.push(format!("C4: outcome {:?}, ε_meas {eps}", c4.outcome));
    }
    let c5 = b_membership(&builtin("C5").unwrap(), &XiConstraint::xi1(0.0), &battery).unwrap();
    let ratio = c5.margins["worst_form_ratio"];
    // the excess grows with ε, so failing at ε = 0 means failing for every ε >= 0
    if c5.passed() || c5.witness.is_none() || !(0.9..=1.1).contains(&ratio) {
        problems.push(format!("C5: outcome {:?}, form ratio {ratio}", c5.outcome));
    }
    check(problems.is_empty(), format!("C4 ε_meas {eps:.4}; C5 witness form ratio {ratio:.4}; {problems:?}"))
}

fn criterion_7() -> Outcome {
    let p = tf(&[0.5], &[1.0, 1.0]);
    let (dt, w, horizon) = (1e-3, 0.01, 20.0);
    let d1 = Signal::pulse(dt, horizon, 0.0, w, 1.0).unwrap();
    let d2 = Signal::zeros(dt, 1, d1.len()).unwrap();
    let trace = simulate_loop(&p, &p, &d1, &d2).unwrap();
    // 0.5(s+1)/((s+0.5)(s+1.5)) = 0.25/(s+0.5) + 0.25/(s+1.5), driven by a 1/w box of width w
    let exact = Signal::from_fn(dt, horizon, |t| {
        [0.5f64, 1.5]
            .iter()
            .map(|&a| {
                let step = |s: f64| if s <= 0.0 { 0.0 } else { 0.25 / (w * a) * (1.0 - (-a * s).exp()) };
                step(t) - step(t - w)
            })
            .sum()
    })
    .unwrap();
    let rel = l2_norm(&trace.y1.combine(1.0, &exact, -1.0).unwrap()) / l2_norm(&exact);
    check(rel <= 1e-3, format!("relative L2 error {rel:.3e}"))
}

fn niq(out: &Path, args: &[&str]) -> (i32, Option<Value>) {
    let mut argv = vec!["niq".to_string(), "--out".into(), out.display().to_string()];
    argv.extend(args.iter().map(|a| a.to_string()));
    let r = invoke(argv);
    (r.code, serde_json::from_str(&r.stdout).ok())
}

fn criterion_8() -> Outcome {
    let dir = TempDir::new().unwrap();
    let mut parts = Vec::new();
    let mut ok = true;
    for (fig, total) in [("fig2", 3), ("fig3", 2)] {
        let (code, report) = niq(dir.path(), &["reproduce", fig]);
        let s = report.map(|r| r["results"].clone()).unwrap_or(Value::Null);
        let labels: Vec<String> = s["pairs"]
            .as_array()
            .map(|a| a.iter().map(|p| format!("{}={}", p["c"].as_str().unwrap_or("?"), p["label"].as_str().unwrap_or("?"))).collect())
            .unwrap_or_default();
        let horizon = s["impulse"]["horizon"].as_f64();
        let width = s["impulse"]["pulse_width"].as_f64();
        ok &= code == 0 && s["matches"].as_u64() == Some(total) && horizon == Some(50.0) && width == Some(0.01);
        parts.push(format!("{fig}: {}/{total} [{}]", s["matches"], labels.join(", ")));
    }
    check(ok, parts.join("; "))
}

fn criterion_9() -> Outcome {
    let battery = default_battery();
    let bands = BandConfig::default();
    let (c2, c3, plant) = (builtin("C2").unwrap(), builtin("C3").unwrap(), builtin("paper-P").unwrap());
    let theorem = check_theorem_sni2(&c2, &plant, &XiConstraint::xi2(0.5), &battery, &bands, &DEFAULT_TAU_GRID).unwrap();
    let nl1 = check_corollary_nl(&c3, &plant, &XiConstraint::xi1(0.0), &battery).unwrap();
    let nl2 = check_corollary_nl(&c3, &plant, &XiConstraint::xi2(0.0), &battery).unwrap();
    let (g1, g2) = (tf(&[1.0], &[1.0, 1.0]), tf(&[1.0], &[1.0, 2.0]));
    let xi0 = XiConstraint::real(&[&[1.0, -1.0], &[-1.0, 0.0]], 0.0).unwrap();
    let lti = check_corollary_lti(&g1, &g2, &xi0, &XiConstraint::xi2(0.0), &DEFAULT_TAU_GRID).unwrap();
    let label = impulse_experiment(&g1, &g2, &ImpulseConfig::default()).unwrap().summary.label;
    let ok = theorem.certified() && !nl1.certified() && !nl2.certified() && lti.certified() && label == ImpulseLabel::Decaying;
    check(
        ok,
        format!(
            "theorem(C2, P): {:?}; corollary-nl(C3, P) Ξ₁ failed {:?}, Ξ₂ failed {:?}; corollary-lti: {:?}, loop {}",
            theorem.conclusion,
            nl1.failed_premises(),
            nl2.failed_premises(),
            lti.conclusion,
            label.as_str()
        ),
    )
}

fn criterion_10() -> Outcome {
    let battery = default_battery();
    let xi = XiConstraint::xi2(0.5);
    let m = construct_multipliers(&xi, 1.0, 0.1).unwrap();
    let eps0_ok = (m.eps0 - 0.5 / 3.0).abs() < 1e-15;
    let r = verify_prop_iqc(
        &builtin("C2").unwrap(),
        &builtin("paper-P").unwrap(),
        &m,
        &BandConfig::single(0.05, 50.0),
        &battery,
        &DEFAULT_TAU_GRID,
    )
    .unwrap();
    let g = |k: &str| r.margins.get(k).copied().unwrap_or(f64::NAN);
    let ok = eps0_ok
        && r.passed()
        && g("p_low_slack") <= 0.0
        && g("p_high_slack") <= 0.0
        && g("c_low_slack") >= 0.0
        && g("c_high_slack") >= 0.0;
    check(
        ok,
        format!(
            "P slacks low {:.3e} high {:.3e}; C slacks low {:.3e} high {:.3e}; ε0 = {}",
            g("p_low_slack"),
            g("p_high_slack"),
            g("c_low_slack"),
            g("c_high_slack"),
            m.eps0
        ),
    )
}

fn rk4_ratios() -> Vec<f64> {
    let lag = tf(&[1.0], &[1.0, 1.0]);
    let err = |dt: f64| {
        let u = Signal::from_fn(dt, 5.0, |t| (-t).exp()).unwrap();
        let y = simulate(&lag, &u).unwrap().output;
        (0..y.len()).map(|m| (y.sample(m)[0] - y.time(m) * (-y.time(m)).exp()).abs()).fold(0.0, f64::max)
    };
    let errs: Vec<f64> = [0.2, 0.1, 0.05, 0.025, 0.0125].iter().map(|&dt| err(dt)).collect();
    errs.windows(2).map(|w| w[0] / w[1]).collect()
}

fn criterion_11() -> Outcome {
    let ratios = rk4_ratios();
    let rk4_ok = ratios.iter().all(|&r| r >= 8.0);

    let dt = 1e-3;
    let grid = FreqGrid::to_nyquist(dt, 1 << 16).unwrap();
    let mut parseval: f64 = 0.0;
    let members = InputBattery { count: 10, ..Default::default() }.members().unwrap();
    for u in members {
        let e = band_energy(&fourier(&u, &grid).unwrap(), 0.0, nyquist(dt)).unwrap();
        let n2 = l2_norm(&u).powi(2);
        parseval = parseval.max((2.0 * e - n2).abs() / (1.0 + n2));
    }
    let parseval_ok = parseval <= 1e-3;

    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for dir in [&a, &b] {
        niq(dir.path(), &["--seed", "11", "check-ni", "--system", "C1"]);
        niq(dir.path(), &["simulate", "--p", "C4", "--c", "paper-P", "--horizon", "10"]);
    }
    let strip = |p: &Path| -> Vec<String> {
        let text = fs::read_to_string(p).unwrap_or_default();
        text.lines().filter(|l| !l.trim_start().starts_with("\"timing\"")).map(String::from).collect()
    };
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let deterministic = names.len() >= 4 && names.iter().all(|n| strip(&a.path().join(n)) == strip(&b.path().join(n)));

    check(
        rk4_ok && parseval_ok && deterministic,
        format!(
            "RK4 halving ratios for u = e^-t {:?} (need >= 8); Parseval worst {parseval:.2e}; reports identical modulo timing: {deterministic}",
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn main() {
    let start = Instant::now();
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("LTI sweep oracle", criterion_1),
        ("battery/sweep equivalence", criterion_2),
        ("frequency/time identity", criterion_3),
        ("CCW of the plant", criterion_4),
        ("DC average identity", criterion_5),
        ("IQC memberships", criterion_6),
        ("closed-loop linear oracle", criterion_7),
        ("figure reproduction", criterion_8),
        ("theorem and corollary verdicts", criterion_9),
        ("multiplier inequalities", criterion_10),
        ("numerical properties", criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag} {name} ({:.1} s): {detail}", i + 1, t.elapsed().as_secs_f64());
    }
    println!("acceptance: {} of 11 passed in {:.1} s", 11 - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
