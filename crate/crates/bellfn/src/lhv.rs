//! Local-hidden-variable side: deterministic response strategies, their
//! projections onto the degree-1 subspace of L2(S2), the analytic bound
//! on the functional, and a direct-search maximizer over strategy
//! families that confirms the bound is tight.

use crate::quantum::{p_qm_unchecked, Visibility, OUTCOMES};
use crate::sphere::{pairwise_sum, Direction, QuadratureGrid, Rotation};
use crate::{BellError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::Arc;

/// sign with the tie broken towards +1; a measure-zero choice, fixed for
/// determinism.
#[inline]
fn sign_pos(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Number of real-spherical-harmonic basis functions up to `degree`
/// (constant + 3 linear, plus 5 quadratic for degree 2).
pub fn harmonic_basis_size(degree: usize) -> usize {
    match degree {
        0 => 1,
        1 => 4,
        _ => 9,
    }
}

fn harmonic_eval(coeffs: &[f64], n: [f64; 3]) -> f64 {
    let mut s = 0.0;
    let basis = [
        1.0,
        n[0],
        n[1],
        n[2],
        n[0] * n[1],
        n[0] * n[2],
        n[1] * n[2],
        n[0] * n[0] - n[1] * n[1],
        3.0 * n[2] * n[2] - 1.0,
    ];
    for (c, b) in coeffs.iter().zip(basis) {
        s += c * b;
    }
    s
}

/// A deterministic local response function I: S2 -> [-1, 1]. Stochastic
/// local responses are covered too, since I is exactly the local
/// expectation value of the outcome.
#[derive(Debug, Clone)]
pub enum ResponseStrategy {
    /// I(n) = sign(c.n); the extreme strategy that saturates the
    /// projection-norm bound.
    Hemisphere(Direction),
    /// I(n) = c.n.
    Linear(Direction),
    /// I(n) = clip(sum_k coeffs[k] * basis_k(n)), basis up to `degree`.
    /// Clipping keeps the strategy admissible while an optimizer explores
    /// coefficient space.
    Harmonic { coeffs: Vec<f64>, degree: usize },
    /// Values tabulated on the nodes of a grid, clipped to [-1, 1].
    /// Off-node evaluation falls back to the nearest node.
    Tabulated {
        values: Vec<f64>,
        grid: Arc<QuadratureGrid>,
    },
}

impl ResponseStrategy {
    pub fn harmonic(coeffs: Vec<f64>, degree: usize) -> Result<Self> {
        let want = harmonic_basis_size(degree);
        if coeffs.len() != want {
            return Err(BellError::InvalidModel(format!(
                "harmonic degree {degree} needs {want} coefficients, got {}",
                coeffs.len()
            )));
        }
        Ok(ResponseStrategy::Harmonic { coeffs, degree })
    }

    pub fn tabulated(values: Vec<f64>, grid: Arc<QuadratureGrid>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(BellError::InvalidModel(format!(
                "tabulated values ({}) do not match grid size ({})",
                values.len(),
                grid.len()
            )));
        }
        Ok(ResponseStrategy::Tabulated { values, grid })
    }

    /// Response at `d`, clipped to [-1, 1].
    pub fn eval(&self, d: &Direction) -> f64 {
        match self {
            ResponseStrategy::Hemisphere(c) => sign_pos(c.dot(d)),
            ResponseStrategy::Linear(c) => c.dot(d),
            ResponseStrategy::Harmonic { coeffs, .. } => {
                harmonic_eval(coeffs, d.cartesian()).clamp(-1.0, 1.0)
            }
            ResponseStrategy::Tabulated { values, grid } => {
                let mut best = 0usize;
                let mut best_dot = f64::NEG_INFINITY;
                for (i, node) in grid.nodes.iter().enumerate() {
                    let x = node.dot(d);
                    if x > best_dot {
                        best_dot = x;
                        best = i;
                    }
                }
                values[best].clamp(-1.0, 1.0)
            }
        }
    }

    /// Largest amount by which the raw (unclipped) response exceeds 1 in
    /// magnitude over the grid nodes; 0 for strategies that never clip.
    pub fn unclipped_excess(&self, grid: &QuadratureGrid) -> f64 {
        match self {
            ResponseStrategy::Harmonic { coeffs, .. } => grid
                .nodes
                .iter()
                .map(|d| (harmonic_eval(coeffs, d.cartesian()).abs() - 1.0).max(0.0))
                .fold(0.0, f64::max),
            ResponseStrategy::Tabulated { values, .. } => values
                .iter()
                .map(|v| (v.abs() - 1.0).max(0.0))
                .fold(0.0, f64::max),
            _ => 0.0,
        }
    }
}

/// Coefficients of the projection of a response function onto the
/// subspace spanned by the normalized basis sqrt(3/4pi) n_k.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionCoefficients {
    pub alpha: [f64; 3],
}

impl ProjectionCoefficients {
    pub fn norm(&self) -> f64 {
        (self.alpha[0] * self.alpha[0]
            + self.alpha[1] * self.alpha[1]
            + self.alpha[2] * self.alpha[2])
            .sqrt()
    }
}

/// Upper bound on the projection norm of any admissible response:
/// 2 pi sqrt(3/4pi) = sqrt(3 pi).
pub fn projection_norm_bound() -> f64 {
    (3.0 * PI).sqrt()
}

/// alpha_k = sqrt(3/4pi) * integral of I(n) n_k over the grid.
///
/// Hemisphere strategies are integrated in a rotated frame that puts the
/// sign discontinuity on the equator, where the split rule is exact; the
/// change of variables is exact because dOmega is rotationally invariant.
pub fn project(strategy: &ResponseStrategy, grid: &QuadratureGrid) -> ProjectionCoefficients {
    let scale = (3.0 / (4.0 * PI)).sqrt();
    match strategy {
        ResponseStrategy::Hemisphere(c) => {
            let rot = Rotation::z_to(c);
            let mut terms = vec![[0.0f64; 3]; grid.len()];
            for (i, (node, w)) in grid.nodes.iter().zip(&grid.weights).enumerate() {
                let s = sign_pos(node.cartesian()[2]);
                let image = rot.apply_vec(node.cartesian());
                for k in 0..3 {
                    terms[i][k] = w * s * image[k];
                }
            }
            let alpha = gather_alpha(&terms, scale);
            ProjectionCoefficients { alpha }
        }
        ResponseStrategy::Tabulated { values, grid: own } => {
            // integrate on the strategy's own grid when compatible
            let g = if own.len() == grid.len() { grid } else { own };
            let mut terms = vec![[0.0f64; 3]; g.len()];
            for (i, (node, w)) in g.nodes.iter().zip(&g.weights).enumerate() {
                let iv = values[i].clamp(-1.0, 1.0);
                let n = node.cartesian();
                for k in 0..3 {
                    terms[i][k] = w * iv * n[k];
                }
            }
            let alpha = gather_alpha(&terms, scale);
            ProjectionCoefficients { alpha }
        }
        _ => {
            let mut terms = vec![[0.0f64; 3]; grid.len()];
            for (i, (node, w)) in grid.nodes.iter().zip(&grid.weights).enumerate() {
                let iv = strategy.eval(node);
                let n = node.cartesian();
                for k in 0..3 {
                    terms[i][k] = w * iv * n[k];
                }
            }
            let alpha = gather_alpha(&terms, scale);
            ProjectionCoefficients { alpha }
        }
    }
}

fn gather_alpha(terms: &[[f64; 3]], scale: f64) -> [f64; 3] {
    let mut alpha = [0.0; 3];
    let mut col = vec![0.0; terms.len()];
    for (k, a) in alpha.iter_mut().enumerate() {
        for (j, t) in terms.iter().enumerate() {
            col[j] = t[k];
        }
        *a = scale * pairwise_sum(&col);
    }
    alpha
}

/// A finite mixture of deterministic strategy pairs. Extreme points of
/// the LHV set are deterministic pairs, and the functional is linear in
/// the model, so finite mixtures lose no generality.
#[derive(Debug, Clone)]
pub struct LhvModel {
    pub ensemble: Vec<(f64, ResponseStrategy, ResponseStrategy)>,
}

impl LhvModel {
    pub fn new(ensemble: Vec<(f64, ResponseStrategy, ResponseStrategy)>) -> Result<Self> {
        if ensemble.is_empty() {
            return Err(BellError::InvalidModel("empty ensemble".into()));
        }
        let mut total = 0.0;
        for (w, _, _) in &ensemble {
            if !w.is_finite() || *w < 0.0 {
                return Err(BellError::InvalidModel(format!("bad weight {w}")));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(BellError::InvalidModel(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(LhvModel { ensemble })
    }

    pub fn pair(a: ResponseStrategy, b: ResponseStrategy) -> Self {
        LhvModel {
            ensemble: vec![(1.0, a, b)],
        }
    }

    /// Joint probability induced by the mixture:
    /// sum_l w_l (1 + m I_a)/2 (1 + m' I_b)/2.
    pub fn joint_probability(&self, m: i8, mp: i8, a: &Direction, b: &Direction) -> Result<f64> {
        if m.abs() != 1 {
            return Err(BellError::InvalidOutcome(m));
        }
        if mp.abs() != 1 {
            return Err(BellError::InvalidOutcome(mp));
        }
        let mut p = 0.0;
        for (w, sa, sb) in &self.ensemble {
            p += w * 0.25 * (1.0 + f64::from(m) * sa.eval(a)) * (1.0 + f64::from(mp) * sb.eval(b));
        }
        Ok(p)
    }
}

/// <P_QM, P_HV> via the three-term decomposition:
/// (2 pi)^2 - (v pi / 3) sum_l w_l sum_k alpha_k^a alpha_k^b.
///
/// The minus sign is forced by the singlet's anti-correlation; the fast
/// path must agree with `lhv_functional_value_direct`, which integrates
/// the product of probabilities literally.
pub fn lhv_functional_value(model: &LhvModel, v: Visibility, grid: &QuadratureGrid) -> f64 {
    let two_pi_sq = 4.0 * PI * PI;
    let mut corr = 0.0;
    for (w, sa, sb) in &model.ensemble {
        let aa = project(sa, grid).alpha;
        let ab = project(sb, grid).alpha;
        corr += w * (aa[0] * ab[0] + aa[1] * ab[1] + aa[2] * ab[2]);
    }
    two_pi_sq - v.value() * PI / 3.0 * corr
}

/// The independent oracle: the 4-fold quadrature of
/// sum_{m,m'} P_QM(m,m';a,b) P_HV(m,m';a,b) over both spheres.
pub fn lhv_functional_value_direct(model: &LhvModel, v: Visibility, grid: &QuadratureGrid) -> f64 {
    let vv = v.value();
    let mut component_values = Vec::with_capacity(model.ensemble.len());
    for (w, sa, sb) in &model.ensemble {
        let ia: Vec<f64> = grid.nodes.iter().map(|d| sa.eval(d)).collect();
        let ib: Vec<f64> = grid.nodes.iter().map(|d| sb.eval(d)).collect();
        let partials: Vec<f64> = grid
            .nodes
            .iter()
            .zip(&grid.weights)
            .enumerate()
            .map(|(i, (a, wa))| {
                let inner: Vec<f64> = grid
                    .nodes
                    .iter()
                    .zip(&grid.weights)
                    .enumerate()
                    .map(|(j, (b, wb))| {
                        let x = a.dot(b);
                        let mut s = 0.0;
                        for m in OUTCOMES {
                            for mp in OUTCOMES {
                                let pq = p_qm_unchecked(m, mp, x, vv);
                                let ph = 0.25
                                    * (1.0 + f64::from(m) * ia[i])
                                    * (1.0 + f64::from(mp) * ib[j]);
                                s += pq * ph;
                            }
                        }
                        wb * s
                    })
                    .collect();
                wa * pairwise_sum(&inner)
            })
            .collect();
        component_values.push(w * pairwise_sum(&partials));
    }
    pairwise_sum(&component_values)
}

/// The analytic LHV bound: (2 pi)^2 (1 + v/4).
pub fn lhv_bound_analytic(v: Visibility) -> f64 {
    4.0 * PI * PI * (1.0 + v.value() / 4.0)
}

/// Strategy family searched by `optimize_lhv`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyFamily {
    /// Two hemisphere axes, 6 raw parameters (unnormalized 3-vectors).
    HemispherePair,
    /// Clipped harmonic responses of the given degree on both sides.
    Harmonic { degree: usize },
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub model: LhvModel,
    pub value: f64,
    pub evaluations: usize,
    /// Objective spread of the final simplex of the winning restart; a
    /// convergence diagnostic, reported instead of failing silently.
    pub final_simplex_spread: f64,
    pub restarts: usize,
}

fn family_model(family: StrategyFamily, x: &[f64]) -> Option<LhvModel> {
    match family {
        StrategyFamily::HemispherePair => {
            let ca = Direction::from_cartesian([x[0], x[1], x[2]]).ok()?;
            let cb = Direction::from_cartesian([x[3], x[4], x[5]]).ok()?;
            Some(LhvModel::pair(
                ResponseStrategy::Hemisphere(ca),
                ResponseStrategy::Hemisphere(cb),
            ))
        }
        StrategyFamily::Harmonic { degree } => {
            let nb = harmonic_basis_size(degree);
            let sa = ResponseStrategy::harmonic(x[..nb].to_vec(), degree).ok()?;
            let sb = ResponseStrategy::harmonic(x[nb..].to_vec(), degree).ok()?;
            Some(LhvModel::pair(sa, sb))
        }
    }
}

fn family_dim(family: StrategyFamily) -> usize {
    match family {
        StrategyFamily::HemispherePair => 6,
        StrategyFamily::Harmonic { degree } => 2 * harmonic_basis_size(degree),
    }
}

/// Derivative-free maximization of the LHV functional over a strategy
/// family: Nelder-Mead with a fixed schedule of 3 seeded random restarts
/// after an initial deterministic start. Deterministic given the seed.
pub fn optimize_lhv(
    v: Visibility,
    family: StrategyFamily,
    grid: &QuadratureGrid,
    budget: usize,
    seed: u64,
) -> Result<OptimizeResult> {
    if budget < 100 {
        return Err(BellError::InvalidModel(format!(
            "optimizer budget {budget} < 100"
        )));
    }
    let dim = family_dim(family);
    let mut evals = 0usize;
    let objective = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        match family_model(family, x) {
            Some(model) => lhv_functional_value(&model, v, grid),
            None => f64::NEG_INFINITY,
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(4);
    starts.push(match family {
        StrategyFamily::HemispherePair => vec![0.1, 0.2, 1.0, 0.1, 0.2, -1.0],
        StrategyFamily::Harmonic { .. } => {
            let mut x = vec![0.0; dim];
            x[3] = 0.5; // linear z term on side a
            x[dim / 2 + 3] = -0.5; // anti-aligned on side b
            x
        }
    });
    let restarts = 3usize;
    for _ in 0..restarts {
        starts.push((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }

    let per_run = budget / starts.len();
    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    for start in &starts {
        let (x, fx, spread) = nelder_mead_max(
            |x| objective(x, &mut evals),
            start,
            0.5,
            per_run,
            1e-12,
        );
        let better = match &best {
            None => true,
            Some((bf, _, _)) => fx > *bf,
        };
        if better {
            best = Some((fx, x, spread));
        }
    }
    let (value, x, final_simplex_spread) = best.unwrap();
    let model = family_model(family, &x)
        .ok_or_else(|| BellError::InvalidModel("optimizer produced invalid point".into()))?;
    Ok(OptimizeResult {
        model,
        value,
        evaluations: evals,
        final_simplex_spread,
        restarts,
    })
}

/// Plain Nelder-Mead maximizer; returns (argmax, max, final f-spread).
fn nelder_mead_max<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    step: f64,
    max_evals: usize,
    ftol: f64,
) -> (Vec<f64>, f64, f64) {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut evals = 0usize;
    let fx0 = f(x0);
    evals += 1;
    simplex.push((x0.to_vec(), fx0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let fx = f(&x);
        evals += 1;
        simplex.push((x, fx));
    }
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    while evals < max_evals {
        // descending by value: best first (maximization)
        simplex.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let spread = simplex[0].1 - simplex[n].1;
        if spread.abs() < ftol {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|(x, _)| x[k]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let reflect: Vec<f64> = (0..n)
            .map(|k| centroid[k] + alpha * (centroid[k] - worst.0[k]))
            .collect();
        let fr = f(&reflect);
        evals += 1;
        if fr > simplex[0].1 {
            let expand: Vec<f64> = (0..n)
                .map(|k| centroid[k] + gamma * (reflect[k] - centroid[k]))
                .collect();
            let fe = f(&expand);
            evals += 1;
            simplex[n] = if fe > fr { (expand, fe) } else { (reflect, fr) };
        } else if fr > simplex[n - 1].1 {
            simplex[n] = (reflect, fr);
        } else {
            let contract: Vec<f64> = (0..n)
                .map(|k| centroid[k] + rho * (worst.0[k] - centroid[k]))
                .collect();
            let fc = f(&contract);
            evals += 1;
            if fc > worst.1 {
                simplex[n] = (contract, fc);
            } else {
                // shrink towards best
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    for (x, b) in item.0.iter_mut().zip(&best) {
                        *x = b + sigma * (*x - b);
                    }
                    item.1 = f(&item.0);
                    evals += 1;
                }
            }
        }
    }
    simplex.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    let spread = (simplex[0].1 - simplex[simplex.len() - 1].1).abs();
    (simplex[0].0.clone(), simplex[0].1, spread)
}
