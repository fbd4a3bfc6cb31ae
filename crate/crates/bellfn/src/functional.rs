//! The inequality itself: quantum value vs LHV bound, violation margin,
//! threshold visibilities, and the coplanar (equator-only) variant.

use crate::lhv::lhv_bound_analytic;
use crate::quantum::{norm_sq_qm_analytic, norm_sq_qm_numeric, p_qm_unchecked, Visibility, OUTCOMES};
use crate::sphere::{build_circle_grid, build_circle_grid_split, build_grid, pairwise_sum, Direction};
use crate::Result;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Geometry {
    /// Settings range over the whole sphere on both sides.
    Sphere,
    /// Settings restricted to the equator, measure dphi per side.
    Coplanar,
}

impl std::fmt::Display for Geometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Geometry::Sphere => write!(f, "sphere"),
            Geometry::Coplanar => write!(f, "coplanar"),
        }
    }
}

/// Reference thresholds quoted for comparison; not derived here.
pub const THRESHOLD_SPHERE: f64 = 0.75;
pub const THRESHOLD_GISIN: f64 = PI / 4.0;
pub const THRESHOLD_CHAINED_LIMIT: f64 = 1.0;

/// Critical visibility for the coplanar variant: 8 / pi^2.
pub fn threshold_coplanar() -> f64 {
    8.0 / (PI * PI)
}

/// Smallest visibility at which the quantum value exceeds the LHV bound.
pub fn threshold_visibility(geometry: Geometry) -> f64 {
    match geometry {
        // v^2/3 = v/4  =>  v = 3/4
        Geometry::Sphere => THRESHOLD_SPHERE,
        // pi^2 v^2 / 2 = 4 v  =>  v = 8 / pi^2
        Geometry::Coplanar => threshold_coplanar(),
    }
}

/// One evaluation of the inequality, with enough context to reproduce it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InequalityReport {
    pub geometry: Geometry,
    pub v: f64,
    pub quantum_value: f64,
    pub lhv_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lhv_best_found: Option<f64>,
    pub margin: f64,
    /// Dimensionless margin, margin / (2 pi)^2, comparable across
    /// geometries.
    pub margin_ratio: f64,
    pub threshold_v: f64,
    pub grid_n_theta: usize,
    pub grid_n_phi: usize,
    pub quad_error_estimate: f64,
}

/// Coplanar quantum norm in closed form: pi^2 (1 + v^2 / 2).
///
/// Derived from the circle analog of the sphere case and confirmed at
/// build-verification time by the direct circle-quadrature oracle
/// (`coplanar_norm_sq_numeric`).
pub fn coplanar_norm_sq_analytic(v: Visibility) -> f64 {
    PI * PI * (1.0 + v.value() * v.value() / 2.0)
}

/// Coplanar LHV bound in closed form: pi^2 + 4 v.
///
/// The constant term is (1/4)(2 pi)^2 and the correlation term is
/// bounded by (v/4) (integral of |cos phi| d phi)^2 = 4 v; confirmed by
/// `coplanar_lhv_bound_numeric`.
pub fn coplanar_lhv_bound_analytic(v: Visibility) -> f64 {
    PI * PI + 4.0 * v.value()
}

/// Literal double-circle quadrature of sum_{m,m'} P_QM^2 with uniform
/// azimuthal nodes; the independent route to `coplanar_norm_sq_analytic`.
pub fn coplanar_norm_sq_numeric(v: Visibility, n_phi: usize) -> Result<f64> {
    let (nodes, weights) = build_circle_grid(n_phi)?;
    let vv = v.value();
    let partials: Vec<f64> = nodes
        .iter()
        .zip(&weights)
        .map(|(a, wa)| {
            let inner: Vec<f64> = nodes
                .iter()
                .zip(&weights)
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
    Ok(pairwise_sum(&partials))
}

/// Numeric coplanar LHV bound: constant term from circle quadrature plus
/// the correlation term saturated by half-circle sign strategies, whose
/// projection integral is computed on the kink-split circle rule.
pub fn coplanar_lhv_bound_numeric(v: Visibility, n_per_panel: usize) -> Result<f64> {
    let (nodes, weights) = build_circle_grid_split(n_per_panel)?;
    let total: f64 = pairwise_sum(&weights);
    // integral of sign(cos phi) cos phi d phi = integral |cos phi| = 4
    let terms: Vec<f64> = nodes
        .iter()
        .zip(&weights)
        .map(|(d, w)| {
            let c = d.phi.cos();
            w * c.abs()
        })
        .collect();
    let abs_cos = pairwise_sum(&terms);
    Ok(total * total / 4.0 + v.value() / 4.0 * abs_cos * abs_cos)
}

/// Assembles the report for the full-sphere geometry. The closed forms
/// supply the headline numbers; the quadrature cross-check of the
/// quantum norm is recorded as the error estimate.
pub fn evaluate_inequality(
    geometry: Geometry,
    v: Visibility,
    n_theta: usize,
    n_phi: usize,
) -> Result<InequalityReport> {
    match geometry {
        Geometry::Sphere => {
            let grid = build_grid(n_theta, n_phi)?;
            let quantum = norm_sq_qm_analytic(v);
            let numeric = norm_sq_qm_numeric(v, &grid);
            let bound = lhv_bound_analytic(v);
            let margin = quantum - bound;
            Ok(InequalityReport {
                geometry,
                v: v.value(),
                quantum_value: quantum,
                lhv_bound: bound,
                lhv_best_found: None,
                margin,
                margin_ratio: margin / (4.0 * PI * PI),
                threshold_v: threshold_visibility(geometry),
                grid_n_theta: n_theta,
                grid_n_phi: n_phi,
                quad_error_estimate: (numeric - quantum).abs(),
            })
        }
        Geometry::Coplanar => evaluate_coplanar(v, n_phi),
    }
}

/// The coplanar variant: both settings on the equator, measure dphi.
pub fn evaluate_coplanar(v: Visibility, n_phi: usize) -> Result<InequalityReport> {
    let n_phi = n_phi.max(8);
    let quantum = coplanar_norm_sq_analytic(v);
    let numeric = coplanar_norm_sq_numeric(v, n_phi)?;
    let bound = coplanar_lhv_bound_analytic(v);
    let margin = quantum - bound;
    Ok(InequalityReport {
        geometry: Geometry::Coplanar,
        v: v.value(),
        quantum_value: quantum,
        lhv_bound: bound,
        lhv_best_found: None,
        margin,
        margin_ratio: margin / (4.0 * PI * PI),
        threshold_v: threshold_coplanar(),
        grid_n_theta: 0,
        grid_n_phi: n_phi,
        quad_error_estimate: (numeric - quantum).abs(),
    })
}

/// Locates the coplanar zero crossing of the fully numeric margin
/// (numeric quantum norm minus numeric LHV bound) by bisection.
pub fn coplanar_threshold_numeric(n_phi: usize, tol: f64) -> Result<f64> {
    let margin = |x: f64| -> Result<f64> {
        let vis = Visibility::new(x)?;
        Ok(coplanar_norm_sq_numeric(vis, n_phi)? - coplanar_lhv_bound_numeric(vis, n_phi / 2)?)
    };
    let (mut lo, mut hi) = (0.5, 1.0);
    if margin(lo)? >= 0.0 || margin(hi)? <= 0.0 {
        return Err(crate::BellError::InvalidOrder(
            "coplanar margin does not bracket a zero on [0.5, 1]".into(),
        ));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if margin(mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Direct-quadrature cross-check of the sphere bound at the hemisphere
/// optimum, used by the acceptance suite and the report plumbing.
pub fn sphere_margin_sign_consistent(report: &InequalityReport) -> bool {
    let above = report.v > report.threshold_v + 1e-12;
    let below = report.v < report.threshold_v - 1e-12;
    if above {
        report.margin > -report.quad_error_estimate
    } else if below {
        report.margin < report.quad_error_estimate
    } else {
        report.margin.abs() <= report.quad_error_estimate.max(1e-9)
    }
}

/// One direction on the equator for coplanar scenarios.
pub fn equator_setting(phi: f64) -> Result<Direction> {
    Direction::equator(phi)
}
