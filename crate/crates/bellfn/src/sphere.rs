//! Measurement directions on the unit sphere and product quadrature rules
//! for the rotationally invariant measure dOmega = sin(theta) dtheta dphi.

use crate::{BellError, Result};
use std::f64::consts::PI;

/// A unit vector on S2, stored as spherical angles with cached Cartesian
/// components (n1, n2, n3) = (sin t cos p, sin t sin p, cos t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    pub theta: f64,
    pub phi: f64,
    n: [f64; 3],
}

impl Direction {
    /// Builds a direction from polar angle `theta` in [0, pi] and azimuth
    /// `phi` (any finite real, reduced mod 2 pi).
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !theta.is_finite() || !phi.is_finite() {
            return Err(BellError::InvalidDirection(format!(
                "non-finite angles ({theta}, {phi})"
            )));
        }
        if !(0.0..=PI).contains(&theta) {
            return Err(BellError::InvalidDirection(format!(
                "theta {theta} outside [0, pi]"
            )));
        }
        let phi = phi.rem_euclid(2.0 * PI);
        let (st, ct) = (theta.sin(), theta.cos());
        let (sp, cp) = (phi.sin(), phi.cos());
        Ok(Direction {
            theta,
            phi,
            n: [st * cp, st * sp, ct],
        })
    }

    /// Builds a direction from an arbitrary nonzero Cartesian vector.
    pub fn from_cartesian(v: [f64; 3]) -> Result<Self> {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(BellError::InvalidDirection(format!(
                "cannot normalize {v:?}"
            )));
        }
        let u = [v[0] / norm, v[1] / norm, v[2] / norm];
        let theta = u[2].clamp(-1.0, 1.0).acos();
        let phi = u[1].atan2(u[0]).rem_euclid(2.0 * PI);
        Ok(Direction { theta, phi, n: u })
    }

    pub fn z() -> Self {
        Direction::new(0.0, 0.0).unwrap()
    }

    /// Equatorial direction at azimuth `phi`.
    pub fn equator(phi: f64) -> Result<Self> {
        Direction::new(PI / 2.0, phi)
    }

    #[inline]
    pub fn cartesian(&self) -> [f64; 3] {
        self.n
    }

    #[inline]
    pub fn dot(&self, other: &Direction) -> f64 {
        self.n[0] * other.n[0] + self.n[1] * other.n[1] + self.n[2] * other.n[2]
    }

    pub fn antipode(&self) -> Direction {
        Direction::from_cartesian([-self.n[0], -self.n[1], -self.n[2]]).unwrap()
    }
}

/// A proper rotation of R3, stored row-major.
#[derive(Debug, Clone, Copy)]
pub struct Rotation(pub [[f64; 3]; 3]);

impl Rotation {
    pub fn identity() -> Self {
        Rotation([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    /// Rodrigues rotation about `axis` (need not be normalized) by `angle`.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        assert!(norm > 0.0, "rotation axis must be nonzero");
        let k = [axis[0] / norm, axis[1] / norm, axis[2] / norm];
        let (s, c) = angle.sin_cos();
        let v = 1.0 - c;
        Rotation([
            [
                c + k[0] * k[0] * v,
                k[0] * k[1] * v - k[2] * s,
                k[0] * k[2] * v + k[1] * s,
            ],
            [
                k[1] * k[0] * v + k[2] * s,
                c + k[1] * k[1] * v,
                k[1] * k[2] * v - k[0] * s,
            ],
            [
                k[2] * k[0] * v - k[1] * s,
                k[2] * k[1] * v + k[0] * s,
                c + k[2] * k[2] * v,
            ],
        ])
    }

    /// The rotation taking the z versor onto `target`.
    pub fn z_to(target: &Direction) -> Self {
        let c = target.cartesian();
        // axis = z x c, angle = theta of target
        let axis = [-c[1], c[0], 0.0];
        let axis_norm = (axis[0] * axis[0] + axis[1] * axis[1]).sqrt();
        if axis_norm < 1e-14 {
            if c[2] > 0.0 {
                Rotation::identity()
            } else {
                Rotation::from_axis_angle([1.0, 0.0, 0.0], PI)
            }
        } else {
            Rotation::from_axis_angle(axis, target.theta)
        }
    }

    #[inline]
    pub fn apply_vec(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn apply(&self, d: &Direction) -> Direction {
        Direction::from_cartesian(self.apply_vec(d.cartesian())).unwrap()
    }

    pub fn transpose(&self) -> Rotation {
        let m = &self.0;
        Rotation([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence. Nodes in increasing order.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_n(x) and P_n'(x)
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        weights[i] = w;
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Which rule is used in the cos(theta) direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    /// One Gauss-Legendre panel on cos(theta) in [-1, 1].
    Single,
    /// Two Gauss-Legendre panels, split at the equator. Integrands with a
    /// kink at cos(theta) = 0 (hemisphere responses) stay smooth per panel.
    SplitEquator,
}

/// Product quadrature rule on S2: Gauss-Legendre in cos(theta) times a
/// uniform periodic rule in phi. Nodes are theta-major, phi-minor.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub nodes: Vec<Direction>,
    pub weights: Vec<f64>,
    pub n_theta: usize,
    pub n_phi: usize,
    pub kind: GridKind,
    pub label: String,
}

impl QuadratureGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn grid_from_u_nodes(
    u: &[f64],
    wu: &[f64],
    n_theta: usize,
    n_phi: usize,
    kind: GridKind,
    label: &str,
) -> QuadratureGrid {
    let wp = 2.0 * PI / n_phi as f64;
    let mut nodes = Vec::with_capacity(u.len() * n_phi);
    let mut weights = Vec::with_capacity(u.len() * n_phi);
    for (ui, wi) in u.iter().zip(wu) {
        let theta = ui.clamp(-1.0, 1.0).acos();
        for j in 0..n_phi {
            let phi = 2.0 * PI * j as f64 / n_phi as f64;
            nodes.push(Direction::new(theta, phi).unwrap());
            weights.push(wi * wp);
        }
    }
    QuadratureGrid {
        nodes,
        weights,
        n_theta,
        n_phi,
        kind,
        label: label.to_string(),
    }
}

/// Default grid builder: the equator-split Gauss-Legendre rule with
/// `n_theta` nodes per panel and `n_phi` uniform azimuthal nodes.
pub fn build_grid(n_theta: usize, n_phi: usize) -> Result<QuadratureGrid> {
    build_grid_kind(n_theta, n_phi, GridKind::SplitEquator)
}

pub fn build_grid_kind(n_theta: usize, n_phi: usize, kind: GridKind) -> Result<QuadratureGrid> {
    if n_theta < 2 || n_phi < 4 {
        return Err(BellError::InvalidOrder(format!(
            "need n_theta >= 2 and n_phi >= 4, got ({n_theta}, {n_phi})"
        )));
    }
    let (x, w) = gauss_legendre(n_theta);
    match kind {
        GridKind::Single => Ok(grid_from_u_nodes(&x, &w, n_theta, n_phi, kind, "gl")),
        GridKind::SplitEquator => {
            // map [-1,1] onto [-1,0] and [0,1]
            let mut u = Vec::with_capacity(2 * n_theta);
            let mut wu = Vec::with_capacity(2 * n_theta);
            for (xi, wi) in x.iter().zip(&w) {
                u.push((xi - 1.0) / 2.0);
                wu.push(wi / 2.0);
            }
            for (xi, wi) in x.iter().zip(&w) {
                u.push((xi + 1.0) / 2.0);
                wu.push(wi / 2.0);
            }
            Ok(grid_from_u_nodes(&u, &wu, n_theta, n_phi, kind, "gl-split"))
        }
    }
}

/// Uniform quadrature on the circle [0, 2 pi): the coplanar analog of
/// `build_grid`. Exact for trigonometric polynomials of degree < n.
pub fn build_circle_grid(n_phi: usize) -> Result<(Vec<Direction>, Vec<f64>)> {
    if n_phi < 4 {
        return Err(BellError::InvalidOrder(format!(
            "need n_phi >= 4, got {n_phi}"
        )));
    }
    let w = 2.0 * PI / n_phi as f64;
    let mut nodes = Vec::with_capacity(n_phi);
    for j in 0..n_phi {
        nodes.push(Direction::equator(2.0 * PI * j as f64 / n_phi as f64)?);
    }
    Ok((nodes, vec![w; n_phi]))
}

/// Two Gauss-Legendre panels on the circle, split at phi = +-pi/2 where
/// half-circle sign responses have their kink.
pub fn build_circle_grid_split(n_per_panel: usize) -> Result<(Vec<Direction>, Vec<f64>)> {
    if n_per_panel < 2 {
        return Err(BellError::InvalidOrder(format!(
            "need >= 2 nodes per panel, got {n_per_panel}"
        )));
    }
    let (x, w) = gauss_legendre(n_per_panel);
    let mut nodes = Vec::with_capacity(2 * n_per_panel);
    let mut weights = Vec::with_capacity(2 * n_per_panel);
    // panel 1: phi in (-pi/2, pi/2); panel 2: phi in (pi/2, 3 pi/2)
    for offset in [0.0, PI] {
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(Direction::equator(offset + xi * PI / 2.0)?);
            weights.push(wi * PI / 2.0);
        }
    }
    Ok((nodes, weights))
}

/// Pairwise (cascade) summation; the reduction order is fixed by the slice
/// order, so results do not depend on thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 32;
    if xs.len() <= BASE {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Quadrature of `f` over the grid: sum of w_i f(node_i).
/// Non-finite values of `f` are reported with the offending node.
pub fn integrate<F: Fn(&Direction) -> f64>(f: F, grid: &QuadratureGrid) -> Result<f64> {
    let mut terms = Vec::with_capacity(grid.len());
    for (i, (node, w)) in grid.nodes.iter().zip(&grid.weights).enumerate() {
        let v = f(node);
        if !v.is_finite() {
            return Err(BellError::NonFiniteIntegrand {
                index: i,
                theta: node.theta,
                phi: node.phi,
            });
        }
        terms.push(w * v);
    }
    Ok(pairwise_sum(&terms))
}
