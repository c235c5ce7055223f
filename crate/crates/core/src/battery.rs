//! Seeded families of decaying test inputs.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Signal;

/// Parameters of a reproducible input battery.
///
/// Member `i` draws from its own ChaCha stream, so members do not depend on
/// `count`. Every fifth member is a smooth unit-area pulse, the rest are sums
/// of up to five damped sinusoids `a e^{-λt} sin(ωt + φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputBattery {
    pub seed: u64,
    pub count: usize,
    pub dt: f64,
    pub horizon: f64,
}

impl Default for InputBattery {
    fn default() -> Self {
        InputBattery { seed: 0, count: 50, dt: 1e-3, horizon: 40.0 }
    }
}

const MAX_TERMS: usize = 5;
const OMEGA_RANGE: (f64, f64) = (0.05, 20.0);
const LAMBDA_MAX: f64 = 2.0;

impl InputBattery {
    pub fn new(seed: u64, count: usize, dt: f64, horizon: f64) -> Result<Self> {
        let b = InputBattery { seed, count, dt, horizon };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::EmptyBattery);
        }
        if !(self.dt > 0.0 && self.horizon >= 10.0 && self.horizon / self.dt >= 100.0) {
            return Err(Error::InvalidArgument(format!(
                "battery needs dt > 0 and horizon >= 10 with at least 100 samples (dt = {}, horizon = {})",
                self.dt, self.horizon
            )));
        }
        Ok(())
    }

    /// Smallest decay rate used, chosen so that `e^{-λ T} < 1e-6`.
    pub fn lambda_min(&self) -> f64 {
        (16.0 / self.horizon).max(0.2)
    }

    pub fn member(&self, i: usize) -> Result<Signal> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(i as u64);
        if i % 5 == 4 {
            let width = rng.gen_range(0.5..=2.0);
            let start = rng.gen_range(0.0..=2.0);
            return Signal::from_fn(self.dt, self.horizon, |t| {
                let s = t - start;
                if (0.0..=width).contains(&s) {
                    (1.0 - (2.0 * PI * s / width).cos()) / width
                } else {
                    0.0
                }
            });
        }
        let k = rng.gen_range(1..=MAX_TERMS);
        let terms: Vec<[f64; 4]> = (0..k)
            .map(|_| {
                let a = rng.gen_range(0.1..=1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 } / k as f64;
                let lambda = rng.gen_range(self.lambda_min()..=LAMBDA_MAX);
                let omega = rng.gen_range(OMEGA_RANGE.0..=OMEGA_RANGE.1);
                let phi = rng.gen_range(0.0..2.0 * PI);
                [a, lambda, omega, phi]
            })
            .collect();
        Signal::from_fn(self.dt, self.horizon, |t| {
            terms.iter().map(|[a, l, w, p]| a * (-l * t).exp() * (w * t + p).sin()).sum()
        })
    }

    pub fn members(&self) -> Result<Vec<Signal>> {
        self.validate()?;
        (0..self.count).map(|i| self.member(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{l2_norm, trapezoid};

    #[test]
    fn deterministic_and_count_independent() {
        let a = InputBattery { count: 10, ..Default::default() };
        let b = InputBattery { count: 3, ..Default::default() };
        assert_eq!(a.member(2).unwrap(), b.member(2).unwrap());
        assert_ne!(a.member(1).unwrap(), a.member(2).unwrap());
        let c = InputBattery { seed: 7, ..a };
        assert_ne!(a.member(1).unwrap(), c.member(1).unwrap());
    }

    #[test]
    fn members_decay_and_are_nonzero() {
        let b = InputBattery { count: 15, dt: 1e-2, ..Default::default() };
        for (i, u) in b.members().unwrap().iter().enumerate() {
            assert!(u.tail_max_norm(0.02) < 1e-6, "member {i}");
            assert!(l2_norm(u) > 1e-3, "member {i}");
        }
    }

    #[test]
    fn pulses_have_unit_area() {
        let b = InputBattery::default();
        let u = b.member(4).unwrap();
        assert!((trapezoid(&u.component(0), u.dt()) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(InputBattery::new(0, 0, 1e-3, 40.0).is_err());
        assert!(InputBattery::new(0, 5, 1.0, 40.0).is_err());
        assert!(InputBattery::new(0, 5, 1e-3, 1.0).is_err());
    }
}
