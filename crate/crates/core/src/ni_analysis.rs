//! Negative-imaginary and counterclockwise checks.
//!
//! Nonlinear checks are falsification tests over a battery of inputs: an
//! `SNI` or `NI` verdict means no battery member violated the inequality.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::min_hermitian_eigenvalue;
use crate::report::{Outcome, VerdictReport, Witness};
use crate::signal::{band_energy, band_quadratic, derivative, fourier, inner_integral, l2_norm, trapezoid, FreqGrid, Signal};
use crate::sysmodel::{documented_class, freq_response, simulate, SystemModel};

/// Band-integral ratio separating SNI from NI.
pub const EPS_MIN: f64 = 1e-4;
/// Relative threshold below which an output counts as decayed.
pub const DECAY_RTOL: f64 = 1e-5;
pub const SWEEP_TOL: f64 = 1e-9;
pub const SWEEP_POINTS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NiClass {
    #[serde(rename = "SNI")]
    Sni,
    #[serde(rename = "NI")]
    Ni,
    #[serde(rename = "not-NI")]
    NotNi,
    #[serde(rename = "inconclusive")]
    Inconclusive,
}

impl NiClass {
    pub fn as_str(self) -> &'static str {
        match self {
            NiClass::Sni => "SNI",
            NiClass::Ni => "NI",
            NiClass::NotNi => "not-NI",
            NiClass::Inconclusive => "inconclusive",
        }
    }

    /// SNI or NI.
    pub fn is_ni(self) -> bool {
        matches!(self, NiClass::Sni | NiClass::Ni)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandConfig {
    pub omega_lo_star: f64,
    pub omega_hi_star: f64,
    pub probe_bands: Vec<(f64, f64)>,
}

impl Default for BandConfig {
    fn default() -> Self {
        BandConfig {
            omega_lo_star: 0.05,
            omega_hi_star: 50.0,
            probe_bands: vec![(0.05, 50.0), (0.02, 50.0), (0.05, 80.0), (0.02, 80.0)],
        }
    }
}

impl BandConfig {
    /// A single band.
    pub fn single(lo: f64, hi: f64) -> Self {
        BandConfig { omega_lo_star: lo, omega_hi_star: hi, probe_bands: vec![(lo, hi)] }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_lo_star > 0.0 && self.omega_lo_star <= self.omega_hi_star) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < Ω̲* <= Ω̄*, got [{}, {}]",
                self.omega_lo_star, self.omega_hi_star
            )));
        }
        if self.probe_bands.is_empty() {
            return Err(Error::InvalidArgument("no probe bands".into()));
        }
        for &(lo, hi) in &self.probe_bands {
            if !(lo > 0.0 && lo <= self.omega_lo_star && hi >= self.omega_hi_star) {
                return Err(Error::InvalidArgument(format!(
                    "probe band [{lo}, {hi}] must contain [{}, {}] and exclude 0",
                    self.omega_lo_star, self.omega_hi_star
                )));
            }
        }
        Ok(())
    }

    pub fn max_hi(&self) -> f64 {
        self.probe_bands.iter().map(|b| b.1).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NiVerdict {
    pub classification: NiClass,
    pub method: &'static str,
    pub epsilon_hat: f64,
    pub worst_band: (f64, f64),
    /// Smallest band integral (battery) or smallest eigenvalue (sweep).
    pub min_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    pub battery_size: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// `∫₀^T ⟨u, ẏ⟩ dt`.
pub fn ccw_functional(u: &Signal, y: &Signal, t_cut: f64) -> Result<f64> {
    inner_integral(u, &derivative(y)?, t_cut)
}

fn feedthrough_note(sys: &SystemModel, report: VerdictReport) -> VerdictReport {
    if sys.has_feedthrough() {
        report.flag("output has direct feedthrough and may jump at t = 0; continuity of outputs is not established")
    } else {
        report
    }
}

/// CCW functional over the battery at 25%, 50% and 100% of the horizon.
pub fn check_ccw(sys: &SystemModel, battery: &[Signal]) -> Result<VerdictReport> {
    if battery.is_empty() {
        return Err(Error::EmptyBattery);
    }
    let mut min_value = f64::INFINITY;
    let mut min_full = f64::INFINITY;
    let mut worst_slack = f64::INFINITY;
    let mut witness = None;
    let mut min_dy_energy = f64::INFINITY;
    for (i, u) in battery.iter().enumerate() {
        let y = simulate(sys, u)?.output;
        let dy = derivative(&y)?;
        let tol = 1e-6 * (1.0 + l2_norm(u) * l2_norm(&y));
        let horizon = u.horizon();
        for frac in [0.25, 0.5, 1.0] {
            let v = inner_integral(u, &dy, frac * horizon)?;
            min_value = min_value.min(v);
            if frac == 1.0 {
                min_full = min_full.min(v);
            }
            if v + tol < worst_slack {
                worst_slack = v + tol;
                if worst_slack < 0.0 {
                    witness = Some(Witness::new(i, v, u));
                }
            }
        }
        min_dy_energy = min_dy_energy.min(l2_norm(&dy).powi(2));
    }
    let report = VerdictReport::from_bool("ccw", worst_slack >= 0.0)
        .margin("min_value", min_value)
        .margin("min_full_horizon", min_full)
        .margin("worst_slack", worst_slack)
        .margin("battery_size", battery.len() as f64)
        .with_witness(witness)
        .note(if min_full > 0.0 {
            "evidence: every full-horizon integral is strictly positive"
        } else {
            "evidence: some full-horizon integral is not strictly positive"
        })
        .note(if min_dy_energy > 1e-10 {
            "evidence: every output derivative has energy above 1e-10"
        } else {
            "evidence: some output derivative has energy below 1e-10"
        });
    Ok(feedthrough_note(sys, report))
}

/// Finite-frequency NI test on the default grid for the battery's step.
pub fn check_ni(sys: &SystemModel, battery: &[Signal], bands: &BandConfig) -> Result<NiVerdict> {
    let dt = battery.first().ok_or(Error::EmptyBattery)?.dt();
    check_ni_on(sys, battery, bands, &FreqGrid::default_for(dt))
}

pub fn check_ni_on(sys: &SystemModel, battery: &[Signal], bands: &BandConfig, grid: &FreqGrid) -> Result<NiVerdict> {
    if battery.is_empty() {
        return Err(Error::EmptyBattery);
    }
    bands.validate()?;
    if bands.max_hi() > grid.omega_max * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "probe band reaches {} rad/s beyond the grid cap {}",
            bands.max_hi(),
            grid.omega_max
        )));
    }
    let mut min_ratio = f64::INFINITY;
    let mut min_slack = f64::INFINITY;
    let mut min_value = f64::INFINITY;
    let mut worst_band = bands.probe_bands[0];
    let mut witness = None;
    let mut undecayed = Vec::new();
    for (i, u) in battery.iter().enumerate() {
        let y = simulate(sys, u)?.output;
        if !y.is_decayed(DECAY_RTOL) {
            undecayed.push(i);
        }
        let (u_hat, y_hat) = (fourier(u, grid)?, fourier(&y, grid)?);
        let tol = 1e-6 * (1.0 + l2_norm(u).powi(2));
        for &(lo, hi) in &bands.probe_bands {
            let r = band_quadratic(&u_hat, &y_hat, lo, hi)?;
            let e = band_energy(&u_hat, lo, hi)?;
            min_value = min_value.min(r);
            if e > 0.0 && r / e < min_ratio {
                min_ratio = r / e;
                worst_band = (lo, hi);
            }
            if r + tol < min_slack {
                min_slack = r + tol;
                if min_slack < 0.0 {
                    witness = Some(Witness::new(i, r, u));
                }
            }
        }
    }
    let mut flags = Vec::new();
    let classification = if min_slack < 0.0 {
        NiClass::NotNi
    } else if !undecayed.is_empty() {
        flags.push(format!("outputs of {} battery members have not decayed by the horizon", undecayed.len()));
        NiClass::Inconclusive
    } else if min_ratio >= EPS_MIN {
        NiClass::Sni
    } else {
        NiClass::Ni
    };
    Ok(NiVerdict {
        classification,
        method: "battery",
        epsilon_hat: min_ratio.max(0.0),
        worst_band,
        min_value,
        witness,
        battery_size: battery.len(),
        flags,
    })
}

pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|k| (a + (b - a) * k as f64 / (count - 1).max(1) as f64).exp()).collect()
}

/// Default sweep grid, 256 log-spaced points on `[1e-2, 1e2]`.
pub fn default_sweep_grid() -> Vec<f64> {
    log_grid(1e-2, 1e2, SWEEP_POINTS)
}

/// Smallest eigenvalue of `j(Ĝ(jω) − Ĝ(jω)*)` at each frequency.
pub fn ni_sweep_values(sys: &SystemModel, omegas: &[f64]) -> Result<Vec<f64>> {
    let j = Complex64::new(0.0, 1.0);
    omegas
        .iter()
        .map(|&w| {
            let g = freq_response(sys, w)?;
            if g.nrows() == 1 {
                return Ok(-2.0 * g[(0, 0)].im);
            }
            let h = (&g - g.adjoint()) * j;
            min_hermitian_eigenvalue(&h)
        })
        .collect()
}

pub fn lti_ni_sweep(sys: &SystemModel, omegas: &[f64], tol: f64) -> Result<NiVerdict> {
    if !sys.is_lti() {
        return Err(Error::NotLti);
    }
    if omegas.is_empty() {
        return Err(Error::InvalidArgument("empty frequency grid".into()));
    }
    let values = ni_sweep_values(sys, omegas)?;
    let (k, min) = values.iter().copied().enumerate().fold((0, f64::INFINITY), |acc, (k, v)| if v < acc.1 { (k, v) } else { acc });
    let classification = if min > tol {
        NiClass::Sni
    } else if min >= -tol {
        NiClass::Ni
    } else {
        NiClass::NotNi
    };
    Ok(NiVerdict {
        classification,
        method: "sweep",
        epsilon_hat: min.max(0.0),
        worst_band: (omegas[k], omegas[k]),
        min_value: min,
        witness: None,
        battery_size: 0,
        flags: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Crosscheck {
    pub battery: NiVerdict,
    pub sweep: NiVerdict,
    pub report: VerdictReport,
}

/// Runs the battery test and the eigenvalue sweep and compares the classes.
pub fn crosscheck_lti(sys: &SystemModel, battery: &[Signal], bands: &BandConfig) -> Result<Crosscheck> {
    let sweep = lti_ni_sweep(sys, &default_sweep_grid(), SWEEP_TOL)?;
    let bat = check_ni(sys, battery, bands)?;
    let agree = sweep.classification == bat.classification;
    let report = VerdictReport::from_bool("crosscheck", agree)
        .margin("battery_epsilon_hat", bat.epsilon_hat)
        .margin("sweep_min_eigenvalue", sweep.min_value)
        .note(format!("battery: {}, sweep: {}", bat.classification.as_str(), sweep.classification.as_str()));
    Ok(Crosscheck { battery: bat, sweep, report })
}

/// Compares a computed class with the documented class of a builtin.
pub fn discrepancy_flag(name: &str, computed: NiClass) -> Option<String> {
    let claimed = documented_class(name)?;
    let consistent = match claimed {
        NiClass::Sni => computed == NiClass::Sni || computed == NiClass::Inconclusive,
        NiClass::Ni => computed.is_ni() || computed == NiClass::Inconclusive,
        _ => true,
    };
    (!consistent).then(|| {
        format!("claim-discrepancy: {name} is documented as {} but computes as {}", claimed.as_str(), computed.as_str())
    })
}

/// Both sides of the CCW energy identity proposed for the builtin plant:
/// `∫u ẏ` against `∫((u−y)² + u²y²)/(1+y²)`.
pub fn example_identity_check(u: &Signal) -> Result<(f64, f64)> {
    let plant = crate::sysmodel::builtin("paper-P")?;
    let y = simulate(&plant, u)?.output;
    let lhs = ccw_functional(u, &y, u.horizon())?;
    let integrand: Vec<f64> = u
        .samples()
        .zip(y.samples())
        .map(|(u, y)| {
            let (u, y) = (u[0], y[0]);
            ((u - y).powi(2) + u * u * y * y) / (1.0 + y * y)
        })
        .collect();
    Ok((lhs, trapezoid(&integrand, u.dt())))
}

/// Report wrapper for a classification, used by the CLI.
pub fn ni_report(verdict: &NiVerdict) -> VerdictReport {
    let outcome = match verdict.classification {
        NiClass::Sni | NiClass::Ni => Outcome::Pass,
        NiClass::NotNi => Outcome::Fail,
        NiClass::Inconclusive => Outcome::Inconclusive,
    };
    let mut r = VerdictReport::new(format!("ni-{}", verdict.method), outcome)
        .margin("epsilon_hat", verdict.epsilon_hat)
        .margin("min_value", verdict.min_value)
        .margin("worst_band_lo", verdict.worst_band.0)
        .margin("worst_band_hi", verdict.worst_band.1)
        .note(format!("classification: {}", verdict.classification.as_str()))
        .with_witness(verdict.witness.clone());
    r.flags = verdict.flags.clone();
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::battery::InputBattery;
    use crate::sysmodel::{builtin, RationalTF, StateSpace};
    use nalgebra::DMatrix;

    fn lti(num: &[f64], den: &[f64]) -> SystemModel {
        SystemModel::from_tf(&RationalTF::new(num, den).unwrap()).unwrap()
    }

    fn small_battery() -> Vec<Signal> {
        InputBattery { count: 6, dt: 5e-3, ..Default::default() }.members().unwrap()
    }

    #[test]
    fn ccw_functional_examples() {
        let u = Signal::from_fn(1e-3, 20.0, |t| (-t).exp()).unwrap();
        let zero = Signal::zeros(1e-3, 1, u.len()).unwrap();
        assert_eq!(ccw_functional(&u, &zero, 20.0).unwrap(), 0.0);
        let y = simulate(&lti(&[1.0], &[1.0, 1.0]), &u).unwrap().output;
        assert!((ccw_functional(&u, &y, 20.0).unwrap() - 0.25).abs() < 1e-3);
        let v = ccw_functional(&u, &u, 20.0).unwrap();
        assert!((v - ((-40.0f64).exp() - 1.0) / 2.0).abs() < 1e-5);
    }

    #[test]
    fn check_ccw_examples() {
        let b = small_battery();
        assert!(check_ccw(&builtin("paper-P").unwrap(), &b).unwrap().passed());
        let neg = check_ccw(&lti(&[-1.0], &[1.0, 1.0]), &b).unwrap();
        assert_eq!(neg.outcome, Outcome::Fail);
        assert!(neg.witness.is_some());
        let zero = SystemModel::Lti(StateSpace::static_gain(DMatrix::zeros(1, 1)).unwrap());
        let r = check_ccw(&zero, &b).unwrap();
        assert!(r.passed());
        assert_eq!(r.margins["min_value"], 0.0);
    }

    #[test]
    fn check_ni_examples() {
        let b = small_battery();
        let bands = BandConfig::default();
        let lag = check_ni(&lti(&[1.0], &[1.0, 1.0]), &b, &bands).unwrap();
        assert_eq!(lag.classification, NiClass::Sni);
        assert!(lag.epsilon_hat > 0.0);
        let one = SystemModel::Lti(StateSpace::static_gain(DMatrix::identity(1, 1)).unwrap());
        let id = check_ni(&one, &b, &bands).unwrap();
        assert_eq!(id.classification, NiClass::Ni);
        assert_eq!(id.min_value, 0.0);
        let neg = check_ni(&lti(&[-1.0], &[1.0, 1.0]), &b, &bands).unwrap();
        assert_eq!(neg.classification, NiClass::NotNi);
        assert!(neg.witness.is_some());
    }

    #[test]
    fn sweep_examples() {
        let w = [1.0];
        let v = ni_sweep_values(&builtin("C3").unwrap(), &w).unwrap()[0];
        assert!((v - 1.0).abs() < 1e-14);
        let v = ni_sweep_values(&builtin("G").unwrap(), &w).unwrap()[0];
        assert!((v - 0.4).abs() < 1e-14);
        let v = ni_sweep_values(&builtin("C1").unwrap(), &w).unwrap()[0];
        assert!((v + 1.0).abs() < 1e-14);
        let grid = default_sweep_grid();
        assert_eq!(lti_ni_sweep(&builtin("C3").unwrap(), &grid, SWEEP_TOL).unwrap().classification, NiClass::Sni);
        assert_eq!(lti_ni_sweep(&builtin("C1").unwrap(), &grid, SWEEP_TOL).unwrap().classification, NiClass::NotNi);
        assert_eq!(lti_ni_sweep(&builtin("paper-P").unwrap(), &grid, SWEEP_TOL), Err(Error::NotLti));
    }

    #[test]
    fn matrix_sweep_uses_eigenvalues() {
        let lag = RationalTF::new(&[1.0], &[1.0, 1.0]).unwrap();
        let z = RationalTF::constant(0.0);
        let ss = crate::sysmodel::tf_matrix_to_ss(&[vec![lag.clone(), z.clone()], vec![z, lag.scaled(-1.0)]]).unwrap();
        let v = ni_sweep_values(&ss.into(), &[1.0]).unwrap()[0];
        assert!((v + 1.0).abs() < 1e-12);
    }

    #[test]
    fn discrepancy_flags() {
        assert!(discrepancy_flag("C1", NiClass::NotNi).is_some());
        assert!(discrepancy_flag("C2", NiClass::Sni).is_none());
        assert!(discrepancy_flag("paper-P", NiClass::Sni).is_none());
        assert!(discrepancy_flag("custom", NiClass::NotNi).is_none());
    }

    #[test]
    fn identity_check_zero_input() {
        let u = Signal::zeros(1e-2, 1, 1001).unwrap();
        assert_eq!(example_identity_check(&u).unwrap(), (0.0, 0.0));
        let u = Signal::from_fn(1e-3, 40.0, |t| (-t).exp()).unwrap();
        let (lhs, rhs) = example_identity_check(&u).unwrap();
        assert!(lhs > 0.0 && rhs > 0.0);
    }

    #[test]
    fn band_config_validation() {
        assert!(BandConfig::default().validate().is_ok());
        let mut b = BandConfig::default();
        b.probe_bands.push((0.1, 50.0));
        assert!(b.validate().is_err());
        assert!(BandConfig::single(0.0, 1.0).validate().is_err());
    }
}
