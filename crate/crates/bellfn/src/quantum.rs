//! Quantum predictions for the singlet with reduced visibility, and the
//! closed-form norm of the prediction under the sphere-product scalar
//! product.

use crate::sphere::{pairwise_sum, Direction, QuadratureGrid};
use crate::{BellError, Result};
use std::f64::consts::PI;

/// Interference visibility, the contrast factor multiplying the
/// correlation term of the joint probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Visibility(f64);

impl Visibility {
    pub fn new(v: f64) -> Result<Self> {
        if !v.is_finite() || !(0.0..=1.0).contains(&v) {
            return Err(BellError::InvalidVisibility(v));
        }
        Ok(Visibility(v))
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.0
    }
}

fn check_outcome(m: i8) -> Result<()> {
    if m == 1 || m == -1 {
        Ok(())
    } else {
        Err(BellError::InvalidOutcome(m))
    }
}

/// Joint probability of outcomes (m, m') at settings (a, b):
/// (1/4)(1 - m m' v a.b).
pub fn p_qm(m: i8, mp: i8, a: &Direction, b: &Direction, v: Visibility) -> Result<f64> {
    check_outcome(m)?;
    check_outcome(mp)?;
    Ok(0.25 * (1.0 - f64::from(m) * f64::from(mp) * v.value() * a.dot(b)))
}

/// Unchecked variant for hot loops; outcomes must be +-1.
#[inline]
pub fn p_qm_unchecked(m: i8, mp: i8, dot_ab: f64, v: f64) -> f64 {
    0.25 * (1.0 - f64::from(m) * f64::from(mp) * v * dot_ab)
}

/// Two-point correlation E(a, b) = sum over outcomes of m m' p = -v a.b.
pub fn correlation_qm(a: &Direction, b: &Direction, v: Visibility) -> f64 {
    -v.value() * a.dot(b)
}

/// ||P_QM||^2 in closed form: (2 pi)^2 (1 + v^2 / 3).
pub fn norm_sq_qm_analytic(v: Visibility) -> f64 {
    let two_pi_sq = (2.0 * PI) * (2.0 * PI);
    two_pi_sq * (1.0 + v.value() * v.value() / 3.0)
}

pub const OUTCOMES: [i8; 2] = [1, -1];

/// ||P_QM||^2 by literal double-sphere quadrature and outcome sums of
/// p_qm squared. The independent numerical route to `norm_sq_qm_analytic`.
pub fn norm_sq_qm_numeric(v: Visibility, grid: &QuadratureGrid) -> f64 {
    let vv = v.value();
    // inner phi/outcome sums accumulated per outer node, then pairwise
    let partials: Vec<f64> = grid
        .nodes
        .iter()
        .zip(&grid.weights)
        .map(|(a, wa)| {
            let inner: Vec<f64> = grid
                .nodes
                .iter()
                .zip(&grid.weights)
                .map(|(b, wb)| {
                    let x = a.dot(b);
                    let mut s = 0.0;
                    for m in OUTCOMES {
                        for mp in OUTCOMES {
                            let p = p_qm_unchecked(m, mp, x, vv);
                            s += p * p;
                        }
                    }
                    wb * s
                })
                .collect();
            wa * pairwise_sum(&inner)
        })
        .collect();
    pairwise_sum(&partials)
}
