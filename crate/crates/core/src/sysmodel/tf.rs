use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::StateSpace;
use crate::error::{Error, Result};

/// Scalar stable proper rational transfer function, coefficients in
/// descending powers of `s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RationalTF {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl RationalTF {
    pub fn new(num: &[f64], den: &[f64]) -> Result<Self> {
        let num = strip(num);
        let den = strip(den);
        if den.is_empty() {
            return Err(Error::InvalidArgument("denominator is identically zero".into()));
        }
        if num.iter().chain(&den).any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coefficient".into()));
        }
        let num = if num.is_empty() { vec![0.0] } else { num };
        if num.len() > den.len() {
            return Err(Error::Improper);
        }
        if !routh_hurwitz_stable(&den) {
            return Err(Error::NotHurwitz);
        }
        Ok(RationalTF { num, den })
    }

    pub fn constant(k: f64) -> Self {
        RationalTF { num: vec![k], den: vec![1.0] }
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn order(&self) -> usize {
        self.den.len() - 1
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        horner(&self.num, s) / horner(&self.den, s)
    }

    pub fn scaled(&self, k: f64) -> RationalTF {
        RationalTF { num: self.num.iter().map(|c| c * k).collect(), den: self.den.clone() }
    }
}

impl<'de> Deserialize<'de> for RationalTF {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            num: Vec<f64>,
            den: Vec<f64>,
        }
        let raw = Raw::deserialize(d)?;
        RationalTF::new(&raw.num, &raw.den).map_err(serde::de::Error::custom)
    }
}

fn strip(c: &[f64]) -> Vec<f64> {
    c.iter().skip_while(|v| **v == 0.0).copied().collect()
}

fn horner(c: &[f64], s: Complex64) -> Complex64 {
    c.iter().fold(Complex64::new(0.0, 0.0), |acc, &v| acc * s + v)
}

/// Routh–Hurwitz test: true when every root of the polynomial has strictly
/// negative real part.
pub fn routh_hurwitz_stable(poly: &[f64]) -> bool {
    let p = strip(poly);
    if p.is_empty() {
        return false;
    }
    let sign = p[0].signum();
    let p: Vec<f64> = p.iter().map(|c| c * sign).collect();
    if p.len() == 1 {
        return true;
    }
    if p.iter().any(|c| *c <= 0.0) {
        return false;
    }
    let mut prev: Vec<f64> = p.iter().step_by(2).copied().collect();
    let mut cur: Vec<f64> = p.iter().skip(1).step_by(2).copied().collect();
    for _ in 1..p.len() - 1 {
        if cur[0] <= 0.0 {
            return false;
        }
        let mut next = Vec::with_capacity(prev.len());
        for k in 0..prev.len() - 1 {
            let c = cur.get(k + 1).copied().unwrap_or(0.0);
            next.push((cur[0] * prev[k + 1] - prev[0] * c) / cur[0]);
        }
        if next.is_empty() {
            next.push(0.0);
        }
        prev = cur;
        cur = next;
    }
    cur[0] > 0.0
}

/// Controllable canonical realization.
pub fn tf_to_ss(tf: &RationalTF) -> Result<StateSpace> {
    if tf.num.len() > tf.den.len() {
        return Err(Error::Improper);
    }
    let n = tf.order();
    let lead = tf.den[0];
    // monic denominator coefficients a_0..a_{n-1} in ascending order
    let a: Vec<f64> = (0..n).map(|i| tf.den[n - i] / lead).collect();
    let mut b = vec![0.0; n + 1];
    for (k, c) in tf.num.iter().rev().enumerate() {
        b[k] = c / lead;
    }
    let d = b[n];
    let am = DMatrix::from_fn(n, n, |i, j| if i + 1 == n { -a[j] } else if j == i + 1 { 1.0 } else { 0.0 });
    let bm = DMatrix::from_fn(n, 1, |i, _| if i + 1 == n { 1.0 } else { 0.0 });
    let cm = DMatrix::from_fn(1, n, |_, j| b[j] - d * a[j]);
    StateSpace::new(am, bm, cm, DMatrix::from_element(1, 1, d))
}

/// Realizes an `n×n` grid of scalar transfer functions, one canonical block per entry.
pub fn tf_matrix_to_ss(grid: &[Vec<RationalTF>]) -> Result<StateSpace> {
    let n = grid.len();
    if n == 0 || grid.iter().any(|row| row.len() != n) {
        return Err(Error::InvalidArgument("transfer matrix must be square and nonempty".into()));
    }
    let blocks: Vec<StateSpace> = grid.iter().flatten().map(tf_to_ss).collect::<Result<_>>()?;
    let nx: usize = blocks.iter().map(|b| b.nx()).sum();
    let mut a = DMatrix::zeros(nx, nx);
    let mut b = DMatrix::zeros(nx, n);
    let mut c = DMatrix::zeros(n, nx);
    let mut d = DMatrix::zeros(n, n);
    let mut off = 0;
    for (idx, blk) in blocks.iter().enumerate() {
        let (i, j) = (idx / n, idx % n);
        let k = blk.nx();
        a.view_mut((off, off), (k, k)).copy_from(blk.a());
        b.view_mut((off, j), (k, 1)).copy_from(blk.b());
        c.view_mut((i, off), (1, k)).copy_from(blk.c());
        d[(i, j)] = blk.d()[(0, 0)];
        off += k;
    }
    StateSpace::new(a, b, c, d)
}
