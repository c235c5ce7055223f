use nalgebra::DMatrix;

use super::{NonlinearStateSpace, RationalTF, StateSpace, SystemModel};
use crate::error::{Error, Result};
use crate::ni_analysis::NiClass;

const NAMES: [&str; 7] = ["paper-P", "C1", "C2", "C3", "C4", "C5", "G"];

pub fn builtin_names() -> &'static [&'static str] {
    &NAMES
}

fn tf(num: &[f64], den: &[f64]) -> Result<SystemModel> {
    SystemModel::from_tf(&RationalTF::new(num, den)?)
}

/// The nonlinear plant
///
/// ```text
/// ẋ1 = x2 - u
/// ẋ2 = -3 x1 - x2 / (1 + x2²) + u
/// y  = x2
/// ```
fn plant() -> Result<SystemModel> {
    Ok(NonlinearStateSpace::parse(2, 1, &["x2 - u1", "-3*x1 - x2/(1 + x2^2) + u1"], &["x2"])?.into())
}

/// Linearization of `paper-P` at the origin, `(s+3)/(s²+s+3)`.
pub fn linearized_plant() -> SystemModel {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -3.0, -1.0]);
    let b = DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]);
    let c = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
    StateSpace::new(a, b, c, DMatrix::zeros(1, 1)).expect("consistent dimensions").into()
}

pub fn builtin(name: &str) -> Result<SystemModel> {
    match name {
        "paper-P" => plant(),
        "C1" => tf(&[-1.0, -2.0], &[1.0, 1.0]),
        "C2" => tf(&[0.1], &[1.0, 1.0]),
        "C3" => tf(&[1.0], &[1.0, 1.0]),
        "G" => tf(&[-1.0, -1.0], &[1.0, 2.0]),
        "C4" => SystemModel::parallel(plant()?, tf(&[-4.0, -4.0], &[1.0, 2.0])?),
        "C5" => SystemModel::parallel(plant()?, builtin("G")?),
        other => Err(Error::UnknownBuiltin(other.to_string())),
    }
}

/// Class each builtin is documented to have in the literature it comes from.
pub fn documented_class(name: &str) -> Option<NiClass> {
    match name {
        "paper-P" => Some(NiClass::Ni),
        "C1" | "C2" | "C3" | "C4" | "C5" | "G" => Some(NiClass::Sni),
        _ => None,
    }
}
