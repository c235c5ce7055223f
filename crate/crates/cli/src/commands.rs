//! Subcommand implementations. Each returns the results object, flags and
//! exit code that go into the report document.

use niq_core::feedback::{
    check_corollary_lti, check_corollary_nl, check_theorem_sni2, impulse_on, wellposed_gate, ImpulseConfig,
    ImpulseDiagnostics, ImpulseLabel, StabilityVerdict,
};
use niq_core::iqc::{
    b_membership, bc_membership_scaled, complement, construct_multipliers, lti_b_condition, verify_prop_iqc,
    XiConstraint,
};
use niq_core::ni_analysis::{
    check_ccw, check_ni_on, default_sweep_grid, discrepancy_flag, lti_ni_sweep, NiClass, NiVerdict, SWEEP_TOL,
};
use niq_core::report::{Outcome, VerdictReport};
use niq_core::signal::Signal;
use niq_core::sysmodel::SystemModel;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, XiDef};
use crate::exit::{self, CliError};
use crate::output::{sanitize, trace_csv, Output};

pub struct Ctx<'a> {
    pub cfg: &'a ExperimentConfig,
    pub out: &'a Output,
}

pub struct Finding {
    pub results: Value,
    pub flags: Vec<String>,
    pub exit_code: i32,
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result serializes")
}

fn push_unique(flags: &mut Vec<String>, more: impl IntoIterator<Item = String>) {
    for f in more {
        if !flags.contains(&f) {
            flags.push(f);
        }
    }
}

/// Exit code for a set of check outcomes: any failure wins over inconclusive.
fn outcome_code<'a>(outcomes: impl IntoIterator<Item = &'a Outcome>) -> i32 {
    let mut code = exit::PASS;
    for o in outcomes {
        match o {
            Outcome::Fail => return exit::NEGATIVE,
            Outcome::Inconclusive => code = exit::INCONCLUSIVE,
            Outcome::Pass => {}
        }
    }
    code
}

fn class_code(class: NiClass) -> i32 {
    match class {
        NiClass::Sni | NiClass::Ni => exit::PASS,
        NiClass::NotNi => exit::NEGATIVE,
        NiClass::Inconclusive => exit::INCONCLUSIVE,
    }
}

/// Builtin claims are only compared when the name was not redefined in the config.
fn builtin_name<'a>(cfg: &ExperimentConfig, name: &'a str) -> Option<&'a str> {
    (!cfg.systems.contains_key(name)).then_some(name)
}

fn battery(cfg: &ExperimentConfig) -> Result<Vec<Signal>, CliError> {
    Ok(cfg.input_battery().members()?)
}

pub fn check_ni(ctx: &Ctx, name: &str) -> Result<Finding, CliError> {
    let sys = ctx.cfg.system(name)?;
    let members = battery(ctx.cfg)?;
    let grid = ctx.cfg.freq_grid();
    let bands = &ctx.cfg.numerics.bands;
    let (verdict, sweep) = if sys.is_lti() {
        let (v, s) = rayon::join(
            || check_ni_on(&sys, &members, bands, &grid),
            || lti_ni_sweep(&sys, &default_sweep_grid(), SWEEP_TOL),
        );
        (v?, Some(s?))
    } else {
        (check_ni_on(&sys, &members, bands, &grid)?, None)
    };
    let mut verdict: NiVerdict = verdict;
    ctx.out.store_witness(&mut verdict.witness, &format!("check-ni-{name}"))?;

    // The sweep is exact for LTI systems, so it decides the class.
    let class = sweep.as_ref().map_or(verdict.classification, |s| s.classification);
    let mut flags = verdict.flags.clone();
    if let Some(f) = builtin_name(ctx.cfg, name).and_then(|n| discrepancy_flag(n, class)) {
        push_unique(&mut flags, [f]);
    }
    let crosscheck = sweep.as_ref().map(|s| {
        let agree = s.classification == verdict.classification;
        if !agree {
            push_unique(
                &mut flags,
                [format!(
                    "crosscheck-disagreement: battery {}, sweep {}",
                    verdict.classification.as_str(),
                    s.classification.as_str()
                )],
            );
        }
        json!({ "agree": agree })
    });
    let results = json!({
        "system": name,
        "classification": class.as_str(),
        "battery": to_value(&verdict),
        "sweep": sweep.as_ref().map(to_value),
        "crosscheck": crosscheck,
    });
    Ok(Finding { results, flags, exit_code: class_code(class) })
}

pub fn check_ccw_cmd(ctx: &Ctx, name: &str) -> Result<Finding, CliError> {
    let sys = ctx.cfg.system(name)?;
    let mut report = check_ccw(&sys, &battery(ctx.cfg)?)?;
    ctx.out.store_report_witness(&mut report, &format!("check-ccw-{name}"))?;
    let flags = report.flags.clone();
    let exit_code = outcome_code([&report.outcome]);
    Ok(Finding { results: json!({ "system": name, "ccw": to_value(&report) }), flags, exit_code })
}

/// Ξ from the command line, falling back to the config.
pub fn xi_from(
    preset: Option<&str>,
    epsilon: Option<f64>,
    fallback: Option<&XiDef>,
    what: &str,
) -> Result<XiConstraint, CliError> {
    let def = match (preset, fallback) {
        (Some(p), _) => XiDef::preset(p, epsilon.unwrap_or(0.0)),
        (None, Some(d)) => {
            let mut d = d.clone();
            if let Some(e) = epsilon {
                d.epsilon = e;
            }
            d
        }
        (None, None) => return Err(CliError::config(format!("{what} is required (flag or config)"))),
    };
    def.build()
}

pub struct IqcArgs<'a> {
    pub system: &'a str,
    pub xi: XiConstraint,
    pub complement: bool,
    pub against: Option<&'a str>,
}

pub fn check_iqc(ctx: &Ctx, args: IqcArgs) -> Result<Finding, CliError> {
    let sys = ctx.cfg.system(args.system)?;
    let members = battery(ctx.cfg)?;
    let nm = &ctx.cfg.numerics;
    let xi = if args.complement { complement(&args.xi)? } else { args.xi.clone() };
    let stem = sanitize(args.system);

    let mut checks: Vec<(String, VerdictReport)> = Vec::new();
    let mut b = b_membership(&sys, &xi, &members)?;
    ctx.out.store_report_witness(&mut b, &format!("b-membership-{stem}"))?;
    checks.push(("b_membership".into(), b));
    let mut bc = bc_membership_scaled(&sys, &xi, &members, &nm.tau_grid)?;
    ctx.out.store_report_witness(&mut bc, &format!("bc-membership-{stem}"))?;
    checks.push(("bc_membership".into(), bc));
    if sys.is_lti() {
        checks.push(("lti_b_condition".into(), lti_b_condition(&sys, &xi)?));
    }
    if let Some(c_name) = args.against {
        let c = ctx.cfg.system(c_name)?;
        let m = construct_multipliers(&xi, nm.alpha, nm.eps_inf)?;
        checks.push(("prop_iqc".into(), verify_prop_iqc(&sys, &c, &m, &nm.bands, &members, &nm.tau_grid)?));
    }

    let mut flags = Vec::new();
    for (_, r) in &checks {
        push_unique(&mut flags, r.flags.iter().cloned());
    }
    let exit_code = outcome_code(checks.iter().map(|(_, r)| &r.outcome));
    let checks: serde_json::Map<String, Value> = checks.iter().map(|(k, r)| (k.clone(), to_value(r))).collect();
    let results = json!({
        "system": args.system,
        "against": args.against,
        "complement": args.complement,
        "epsilon": xi.epsilon(),
        "checks": checks,
    });
    Ok(Finding { results, flags, exit_code })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Rule {
    Theorem,
    CorollaryNl,
    CorollaryLti,
}

pub struct StabilityArgs<'a> {
    pub p: &'a str,
    pub c: &'a str,
    pub rule: Rule,
    pub xi: XiConstraint,
    pub xi_inf: Option<XiConstraint>,
    pub diagnostics: bool,
}

pub fn check_stability(ctx: &Ctx, args: StabilityArgs) -> Result<Finding, CliError> {
    let p = ctx.cfg.system(args.p)?;
    let c = ctx.cfg.system(args.c)?;
    let nm = &ctx.cfg.numerics;
    let verdict: StabilityVerdict = match args.rule {
        Rule::Theorem => check_theorem_sni2(&p, &c, &args.xi, &battery(ctx.cfg)?, &nm.bands, &nm.tau_grid)?,
        Rule::CorollaryNl => check_corollary_nl(&p, &c, &args.xi, &battery(ctx.cfg)?)?,
        Rule::CorollaryLti => {
            let xi_inf = args.xi_inf.clone().ok_or_else(|| CliError::config("corollary-lti needs Ξ∞ (--xi-inf or config xi_inf)"))?;
            check_corollary_lti(&p, &c, &args.xi, &xi_inf, &nm.tau_grid)?
        }
    };
    let mut verdict = verdict.annotate_builtins(builtin_name(ctx.cfg, args.p), builtin_name(ctx.cfg, args.c));
    if args.diagnostics {
        verdict = verdict.with_diagnostics(&p, &c, &nm.impulse)?;
    }
    for (name, premise) in verdict.premises.iter_mut() {
        ctx.out.store_report_witness(premise, &format!("{}-{name}", args.rule_slug()))?;
    }
    let exit_code = if verdict.certified() { exit::PASS } else { exit::NEGATIVE };
    let flags = verdict.flags.clone();
    let results = json!({
        "p": args.p,
        "c": args.c,
        "failed_premises": verdict.failed_premises(),
        "verdict": to_value(&verdict),
    });
    Ok(Finding { results, flags, exit_code })
}

impl StabilityArgs<'_> {
    fn rule_slug(&self) -> &'static str {
        match self.rule {
            Rule::Theorem => "theorem",
            Rule::CorollaryNl => "corollary-nl",
            Rule::CorollaryLti => "corollary-lti",
        }
    }
}

const OVERFLOW_LABEL: &str = "growing/overflow";

fn label_text(d: &ImpulseDiagnostics) -> &'static str {
    if d.summary.overflow_time.is_some() {
        OVERFLOW_LABEL
    } else {
        d.summary.label.as_str()
    }
}

fn impulse_json(d: &ImpulseDiagnostics, file: &str) -> Value {
    json!({
        "channel": d.summary.channel,
        "tail_ratio": d.summary.tail_ratio.is_finite().then_some(d.summary.tail_ratio),
        "max_abs_y1": d.summary.max_abs_y1,
        "label": label_text(d),
        "overflow_time": d.summary.overflow_time,
        "samples": d.run.trace.y1.len(),
        "file": file,
    })
}

fn gate(p: &SystemModel, c: &SystemModel) -> Result<(), CliError> {
    let g = wellposed_gate(p, c)?;
    if !g.passed() {
        return Err(CliError::config(format!(
            "the loop fails the well-posedness gain gate (gain product {})",
            g.margins.get("gain_product").copied().unwrap_or(f64::NAN)
        )));
    }
    Ok(())
}

pub fn simulate(ctx: &Ctx, p_name: &str, c_name: &str, on_d2: bool, horizon: Option<f64>) -> Result<Finding, CliError> {
    let p = ctx.cfg.system(p_name)?;
    let c = ctx.cfg.system(c_name)?;
    gate(&p, &c)?;
    let mut icfg: ImpulseConfig = ctx.cfg.numerics.impulse;
    if let Some(h) = horizon {
        icfg.horizon = h;
    }
    let d = impulse_on(&p, &c, &icfg, on_d2)?;
    let stem = format!("simulate-{}-{}-{}", sanitize(p_name), sanitize(c_name), d.summary.channel);
    let csv = ctx.out.write(&format!("{stem}.csv"), &trace_csv(&d.run.trace, false))?;
    let diag = impulse_json(&d, &csv);
    ctx.out.write(&format!("{stem}.diagnostics.json"), &(serde_json::to_string_pretty(&diag).unwrap() + "\n"))?;
    let overflow = d.summary.overflow_time.is_some();
    let flags = if overflow {
        vec![format!("integration overflow at t = {:?}; partial trace written", d.summary.overflow_time.unwrap())]
    } else {
        Vec::new()
    };
    let results = json!({ "p": p_name, "c": c_name, "impulse": icfg, "diagnostics": diag });
    Ok(Finding { results, flags, exit_code: if overflow { exit::NUMERIC } else { exit::PASS } })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Figure {
    Fig2,
    Fig3,
}

impl Figure {
    pub fn slug(self) -> &'static str {
        match self {
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
        }
    }

    /// Controllers fed back around the plant, with the expected labels.
    pub fn cases(self) -> &'static [(&'static str, ImpulseLabel)] {
        match self {
            Figure::Fig2 => &[("C1", ImpulseLabel::Decaying), ("C2", ImpulseLabel::Decaying), ("C3", ImpulseLabel::Growing)],
            Figure::Fig3 => &[("C4", ImpulseLabel::Decaying), ("C5", ImpulseLabel::Growing)],
        }
    }
}

pub const FIGURE_PLANT: &str = "paper-P";

/// Runs the figure's impulse experiments. Builtins and the default numerics
/// are used regardless of the config, apart from an explicit horizon.
pub fn reproduce(out: &Output, figure: Figure, horizon: Option<f64>) -> Result<Finding, CliError> {
    let mut icfg = ImpulseConfig::default();
    if let Some(h) = horizon {
        icfg.horizon = h;
    }
    let plant = niq_core::sysmodel::builtin(FIGURE_PLANT)?;
    let runs: Vec<Result<ImpulseDiagnostics, CliError>> = figure
        .cases()
        .par_iter()
        .map(|(name, _)| {
            let ci = niq_core::sysmodel::builtin(name)?;
            Ok(impulse_on(&ci, &plant, &icfg, false)?)
        })
        .collect();

    let abs = figure == Figure::Fig3;
    let mut pairs = Vec::new();
    let (mut matches, mut mismatch, mut indeterminate) = (0usize, false, false);
    for ((name, expected), run) in figure.cases().iter().zip(runs) {
        let d = run?;
        let file = out.write(&format!("{}/{name}.csv", figure.slug()), &trace_csv(&d.run.trace, abs))?;
        let got = d.summary.label;
        let ok = got == *expected;
        if ok {
            matches += 1;
        } else if got == ImpulseLabel::Indeterminate {
            indeterminate = true;
        } else {
            mismatch = true;
        }
        let mut entry = impulse_json(&d, &file);
        entry["c"] = json!(name);
        entry["p"] = json!(FIGURE_PLANT);
        entry["expected"] = json!(expected.as_str());
        entry["match"] = json!(ok);
        pairs.push(entry);
    }
    let summary = json!({
        "figure": figure.slug(),
        "impulse": icfg,
        "matches": matches,
        "total": pairs.len(),
        "pairs": pairs,
    });
    out.write(&format!("{}/summary.json", figure.slug()), &(serde_json::to_string_pretty(&summary).unwrap() + "\n"))?;
    let exit_code = if mismatch {
        exit::NEGATIVE
    } else if indeterminate {
        exit::INCONCLUSIVE
    } else {
        exit::PASS
    };
    let flags = if indeterminate { vec!["some labels are indeterminate at this horizon".to_string()] } else { Vec::new() };
    Ok(Finding { results: summary, flags, exit_code })
}
