//! Finite-settings adaptation of the functional: weighted setting
//! ensembles, the discrete quantum value and LHV maximum (exact
//! brute force with a factorized inner loop, and an alternating
//! heuristic), and threshold-vs-resolution studies.

use crate::quantum::{p_qm_unchecked, Visibility, OUTCOMES};
use crate::sphere::{pairwise_sum, Direction, QuadratureGrid};
use crate::{BellError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::io::BufRead;

pub const BRUTE_FORCE_LIMIT: usize = 26;

/// A finite set of measurement settings with positive weights summing to
/// the measure of the setting space (4 pi for the sphere, 2 pi coplanar).
#[derive(Debug, Clone)]
pub struct SettingEnsemble {
    pub settings: Vec<Direction>,
    pub weights: Vec<f64>,
}

impl SettingEnsemble {
    pub fn new(settings: Vec<Direction>, weights: Vec<f64>) -> Result<Self> {
        if settings.is_empty() || settings.len() != weights.len() {
            return Err(BellError::InvalidEnsemble(format!(
                "{} settings vs {} weights",
                settings.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(BellError::InvalidEnsemble("weights must be positive".into()));
        }
        Ok(SettingEnsemble { settings, weights })
    }

    /// Ensemble carrying a quadrature rule's nodes and weights.
    pub fn from_grid(grid: &QuadratureGrid) -> Self {
        SettingEnsemble {
            settings: grid.nodes.clone(),
            weights: grid.weights.clone(),
        }
    }

    /// Experimental convention for settings without a quadrature rule:
    /// uniform weights summing to `total` (4 pi sphere, 2 pi coplanar).
    pub fn uniform(settings: Vec<Direction>, total: f64) -> Result<Self> {
        if settings.is_empty() {
            return Err(BellError::InvalidEnsemble("no settings".into()));
        }
        let w = total / settings.len() as f64;
        let n = settings.len();
        Self::new(settings, vec![w; n])
    }

    /// `n` evenly spaced equatorial settings with uniform weights 2 pi / n.
    pub fn coplanar_uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(BellError::InvalidEnsemble("no settings".into()));
        }
        let settings = (0..n)
            .map(|j| Direction::equator(2.0 * PI * j as f64 / n as f64))
            .collect::<Result<Vec<_>>>()?;
        Self::uniform(settings, 2.0 * PI)
    }

    pub fn len(&self) -> usize {
        self.settings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.settings.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        pairwise_sum(&self.weights)
    }

    /// Parses "theta phi [weight]" lines; '#' starts a comment. Settings
    /// without explicit weights get the uniform convention w = total / N.
    pub fn from_reader<R: BufRead>(reader: R, uniform_total: f64) -> Result<Self> {
        let mut settings = Vec::new();
        let mut weights: Vec<Option<f64>> = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let text = line.split('#').next().unwrap_or("").trim();
            if text.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let fields: Vec<&str> = text.split_whitespace().collect();
            if fields.len() < 2 || fields.len() > 3 {
                return Err(BellError::Parse {
                    line: lineno,
                    message: format!("expected 'theta phi [weight]', got {} fields", fields.len()),
                });
            }
            let parse = |s: &str, what: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|e| BellError::Parse {
                    line: lineno,
                    message: format!("bad {what} '{s}': {e}"),
                })
            };
            let theta = parse(fields[0], "theta")?;
            let phi = parse(fields[1], "phi")?;
            let dir = Direction::new(theta, phi).map_err(|e| BellError::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            settings.push(dir);
            weights.push(if fields.len() == 3 {
                Some(parse(fields[2], "weight")?)
            } else {
                None
            });
        }
        if settings.is_empty() {
            return Err(BellError::Parse {
                line: 0,
                message: "no settings in file".into(),
            });
        }
        if weights.iter().all(|w| w.is_some()) {
            Self::new(settings, weights.into_iter().map(|w| w.unwrap()).collect())
        } else if weights.iter().all(|w| w.is_none()) {
            Self::uniform(settings, uniform_total)
        } else {
            Err(BellError::Parse {
                line: 0,
                message: "either all lines or no lines may carry weights".into(),
            })
        }
    }
}

/// One deterministic local strategy on a finite ensemble: a sign per
/// setting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteStrategy {
    pub signs: Vec<i8>,
}

impl DiscreteStrategy {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if let Some(&s) = signs.iter().find(|s| s.abs() != 1) {
            return Err(BellError::InvalidOutcome(s));
        }
        Ok(DiscreteStrategy { signs })
    }

    pub fn all_plus(n: usize) -> Self {
        DiscreteStrategy { signs: vec![1; n] }
    }
}

/// Discrete quantum value: sum_ij w_i w_j sum_{m,m'} P_QM(m,m';a_i,b_j)^2.
pub fn discrete_quantum_value(
    ens_a: &SettingEnsemble,
    ens_b: &SettingEnsemble,
    v: Visibility,
) -> f64 {
    let vv = v.value();
    let partials: Vec<f64> = ens_a
        .settings
        .iter()
        .zip(&ens_a.weights)
        .map(|(a, wa)| {
            let inner: Vec<f64> = ens_b
                .settings
                .iter()
                .zip(&ens_b.weights)
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

/// Weighted sign moments X_k = sum_i w_i s_i n_k(a_i).
fn sign_moments(ens: &SettingEnsemble, signs: &[i8]) -> [f64; 3] {
    let mut x = [0.0; 3];
    for ((d, w), s) in ens.settings.iter().zip(&ens.weights).zip(signs) {
        let n = d.cartesian();
        let ws = w * f64::from(*s);
        x[0] += ws * n[0];
        x[1] += ws * n[1];
        x[2] += ws * n[2];
    }
    x
}

/// The discrete functional for a fixed sign pair:
/// (sum w_a)(sum w_b)/4 + (v/4) sum_k X_k Y_k.
pub fn discrete_functional_value(
    ens_a: &SettingEnsemble,
    ens_b: &SettingEnsemble,
    s: &DiscreteStrategy,
    t: &DiscreteStrategy,
    v: Visibility,
) -> f64 {
    let c0 = ens_a.total_weight() * ens_b.total_weight() / 4.0;
    let x = sign_moments(ens_a, &s.signs);
    let y = sign_moments(ens_b, &t.signs);
    c0 + v.value() / 4.0 * (x[0] * y[0] + x[1] * y[1] + x[2] * y[2])
}

/// Given the side-A moments X, the inner optimum over t is closed form:
/// t_j = sign(b_j . X); returns (sum_k X_k Y_k at the optimum, t).
fn inner_optimum(ens_b: &SettingEnsemble, x: [f64; 3]) -> (f64, Vec<i8>) {
    let mut value = 0.0;
    let mut t = Vec::with_capacity(ens_b.len());
    for (d, w) in ens_b.settings.iter().zip(&ens_b.weights) {
        let n = d.cartesian();
        let proj = n[0] * x[0] + n[1] * x[1] + n[2] * x[2];
        let sign: i8 = if proj >= 0.0 { 1 } else { -1 };
        value += w * proj.abs();
        t.push(sign);
    }
    (value, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LhvMaxMethod {
    /// Exact: 2^{N_a} outer loop over side-A signs, closed-form inner
    /// optimum over side B. Rejected above `BRUTE_FORCE_LIMIT` total
    /// settings.
    BruteForce,
    /// Alternating sign flips from a deterministic start plus seeded
    /// random restarts; a lower bound on the exact maximum.
    Alternating { restarts: usize, seed: u64 },
}

impl Default for LhvMaxMethod {
    fn default() -> Self {
        LhvMaxMethod::Alternating {
            restarts: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteLhvMax {
    pub value: f64,
    pub strategy_a: DiscreteStrategy,
    pub strategy_b: DiscreteStrategy,
    /// True when the value is an exact maximum (brute force).
    pub exact: bool,
}

/// Maximum of the discrete functional over deterministic sign vectors.
pub fn discrete_lhv_max(
    ens_a: &SettingEnsemble,
    ens_b: &SettingEnsemble,
    v: Visibility,
    method: LhvMaxMethod,
) -> Result<DiscreteLhvMax> {
    let c0 = ens_a.total_weight() * ens_b.total_weight() / 4.0;
    let (corr, s, t, exact) = match method {
        LhvMaxMethod::BruteForce => {
            let (na, nb) = (ens_a.len(), ens_b.len());
            if na + nb > BRUTE_FORCE_LIMIT {
                return Err(BellError::BruteForceTooLarge {
                    na,
                    nb,
                    limit: BRUTE_FORCE_LIMIT,
                });
            }
            let mut best = f64::NEG_INFINITY;
            let mut best_s = vec![1i8; na];
            let mut best_t = vec![1i8; nb];
            for mask in 0u64..(1u64 << na) {
                let signs: Vec<i8> = (0..na)
                    .map(|i| if mask >> i & 1 == 1 { -1 } else { 1 })
                    .collect();
                let x = sign_moments(ens_a, &signs);
                let (val, t) = inner_optimum(ens_b, x);
                if val > best {
                    best = val;
                    best_s = signs;
                    best_t = t;
                }
            }
            (best, best_s, best_t, true)
        }
        LhvMaxMethod::Alternating { restarts, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut starts = vec![vec![1i8; ens_a.len()]];
            for _ in 0..restarts {
                starts.push(
                    (0..ens_a.len())
                        .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
                        .collect(),
                );
            }
            let mut best = f64::NEG_INFINITY;
            let mut best_s = vec![1i8; ens_a.len()];
            let mut best_t = vec![1i8; ens_b.len()];
            for mut signs in starts {
                // alternate closed-form inner optima until a fixed point
                for _ in 0..100 {
                    let x = sign_moments(ens_a, &signs);
                    let (_, t) = inner_optimum(ens_b, x);
                    let y = sign_moments(ens_b, &t);
                    let (_, s_new) = inner_optimum(ens_a, y);
                    if s_new == signs {
                        break;
                    }
                    signs = s_new;
                }
                let x = sign_moments(ens_a, &signs);
                let (val, t) = inner_optimum(ens_b, x);
                if val > best {
                    best = val;
                    best_s = signs;
                    best_t = t;
                }
            }
            (best, best_s, best_t, false)
        }
    };
    Ok(DiscreteLhvMax {
        value: c0 + v.value() / 4.0 * corr,
        strategy_a: DiscreteStrategy::new(s)?,
        strategy_b: DiscreteStrategy::new(t)?,
        exact,
    })
}

/// Threshold visibility for the finite scenario. The quantum value is
/// c0 + c2 v^2 and the LHV maximum c0 + c1 v; the maximizing signs do
/// not depend on v, but the slope is taken as an upper envelope over a
/// 21-point v-grid anyway. Returns None when no v <= 1 violates.
pub fn discrete_threshold(
    ens_a: &SettingEnsemble,
    ens_b: &SettingEnsemble,
    method: LhvMaxMethod,
) -> Result<Option<f64>> {
    let c0 = ens_a.total_weight() * ens_b.total_weight() / 4.0;
    let one = Visibility::new(1.0).unwrap();
    let c2 = discrete_quantum_value(ens_a, ens_b, one) - c0;
    let mut c1 = f64::NEG_INFINITY;
    for i in 1..=21 {
        let x = i as f64 / 21.0;
        let max = discrete_lhv_max(ens_a, ens_b, Visibility::new(x).unwrap(), method)?;
        c1 = c1.max((max.value - c0) / x);
    }
    if c2 <= 0.0 || c1 >= c2 {
        return Ok(None); // no violation for any v <= 1
    }
    Ok(Some(c1 / c2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lhv::{lhv_bound_analytic, LhvModel, ResponseStrategy};
    use crate::sphere::build_grid;
    use std::io::Cursor;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn v(x: f64) -> Visibility {
        Visibility::new(x).unwrap()
    }

    fn random_ensemble(rng: &mut ChaCha8Rng, n: usize) -> SettingEnsemble {
        let settings = (0..n)
            .map(|_| {
                Direction::new(rng.gen_range(0.0..PI), rng.gen_range(0.0..2.0 * PI)).unwrap()
            })
            .collect();
        SettingEnsemble::uniform(settings, 4.0 * PI).unwrap()
    }

    #[test]
    fn quantum_value_with_quadrature_weights_matches_continuum() {
        let grid = build_grid(16, 32).unwrap();
        let ens = SettingEnsemble::from_grid(&grid);
        for vis in [0.0, 0.5, 1.0] {
            let d = discrete_quantum_value(&ens, &ens, v(vis));
            let a = crate::quantum::norm_sq_qm_analytic(v(vis));
            approx(d / a, 1.0, 1e-9);
        }
    }

    #[test]
    fn quantum_value_single_setting() {
        let one = SettingEnsemble::uniform(vec![Direction::z()], 4.0 * PI).unwrap();
        let w = 4.0 * PI;
        approx(
            discrete_quantum_value(&one, &one, v(1.0)),
            w * w / 2.0,
            1e-10,
        );
        approx(
            discrete_quantum_value(&one, &one, v(0.0)),
            w * w / 4.0,
            1e-10,
        );
    }

    #[test]
    fn single_setting_admits_lhv() {
        let one = SettingEnsemble::uniform(vec![Direction::z()], 4.0 * PI).unwrap();
        let max = discrete_lhv_max(&one, &one, v(1.0), LhvMaxMethod::BruteForce).unwrap();
        let q = discrete_quantum_value(&one, &one, v(1.0));
        approx(max.value, q, 1e-10);
        assert!(discrete_threshold(&one, &one, LhvMaxMethod::BruteForce)
            .unwrap()
            .is_none());
    }

    #[test]
    fn alternating_never_beats_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let mut agree = 0;
        let total = 100;
        for i in 0..total {
            let ea = random_ensemble(&mut rng, 6);
            let eb = random_ensemble(&mut rng, 6);
            let exact = discrete_lhv_max(&ea, &eb, v(1.0), LhvMaxMethod::BruteForce).unwrap();
            let heur = discrete_lhv_max(
                &ea,
                &eb,
                v(1.0),
                LhvMaxMethod::Alternating {
                    restarts: 32,
                    seed: i,
                },
            )
            .unwrap();
            assert!(
                heur.value <= exact.value + 1e-10,
                "heuristic exceeded exact: {} > {}",
                heur.value,
                exact.value
            );
            if (exact.value - heur.value).abs() <= 1e-10 {
                agree += 1;
            }
        }
        assert!(agree >= 95, "only {agree}/{total} instances agreed");
    }

    #[test]
    fn inner_optimum_matches_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let ea = random_ensemble(&mut rng, 4);
            let eb = random_ensemble(&mut rng, 5);
            let signs: Vec<i8> = (0..4)
                .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
                .collect();
            let x = sign_moments(&ea, &signs);
            let (val, _) = inner_optimum(&eb, x);
            // exhaustive over all 2^5 t vectors
            let mut best = f64::NEG_INFINITY;
            for mask in 0u32..(1 << 5) {
                let t: Vec<i8> = (0..5)
                    .map(|j| if mask >> j & 1 == 1 { -1 } else { 1 })
                    .collect();
                let y = sign_moments(&eb, &t);
                best = best.max(x[0] * y[0] + x[1] * y[1] + x[2] * y[2]);
            }
            approx(val, best, 1e-12);
        }
    }

    #[test]
    fn lhv_max_converges_to_continuum_bound() {
        let mut prev = f64::INFINITY;
        for (nt, np) in [(4, 8), (8, 16), (16, 32)] {
            let grid = build_grid(nt, np).unwrap();
            let ens = SettingEnsemble::from_grid(&grid);
            let max = discrete_lhv_max(&ens, &ens, v(1.0), LhvMaxMethod::default()).unwrap();
            assert!(max.value < prev);
            prev = max.value;
        }
        approx(prev, lhv_bound_analytic(v(1.0)), 0.05);
    }

    #[test]
    fn thresholds_decrease_toward_continuum() {
        let mut prev = f64::INFINITY;
        for (nt, np) in [(4, 8), (8, 16), (16, 32)] {
            let grid = build_grid(nt, np).unwrap();
            let ens = SettingEnsemble::from_grid(&grid);
            let t = discrete_threshold(&ens, &ens, LhvMaxMethod::default())
                .unwrap()
                .expect("violation expected");
            assert!(t < prev, "threshold not decreasing: {t} >= {prev}");
            prev = t;
        }
        approx(prev, 0.75, 0.01);
    }

    #[test]
    fn coplanar_thresholds_decrease_toward_circle_limit() {
        let mut prev = f64::INFINITY;
        for n in [8usize, 16, 32, 64] {
            let ens = SettingEnsemble::coplanar_uniform(n).unwrap();
            let t = discrete_threshold(&ens, &ens, LhvMaxMethod::default())
                .unwrap()
                .expect("violation expected");
            assert!(t <= prev + 1e-12);
            prev = t;
        }
        approx(prev, 8.0 / (PI * PI), 0.01);
    }

    #[test]
    fn mixed_models_never_beat_sign_vectors() {
        // extreme-point sufficiency: restrict random LHV mixtures to the
        // ensemble's settings and compare with the sign-vector maximum
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let ea = random_ensemble(&mut rng, 5);
            let eb = random_ensemble(&mut rng, 5);
            let vis = v(rng.gen_range(0.0..1.0));
            let exact = discrete_lhv_max(&ea, &eb, vis, LhvMaxMethod::BruteForce).unwrap();
            // random mixture of response strategies evaluated at settings
            let mut raw: Vec<f64> = (0..3).map(|_| rng.gen_range(0.01..1.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.iter_mut().for_each(|w| *w /= total);
            let mut mix_value = ea.total_weight() * eb.total_weight() / 4.0;
            for w in raw {
                let ca =
                    Direction::new(rng.gen_range(0.0..PI), rng.gen_range(0.0..2.0 * PI)).unwrap();
                let cb =
                    Direction::new(rng.gen_range(0.0..PI), rng.gen_range(0.0..2.0 * PI)).unwrap();
                let model = LhvModel::pair(
                    ResponseStrategy::Hemisphere(ca),
                    ResponseStrategy::Hemisphere(cb),
                );
                let (_, sa, sb) = &model.ensemble[0];
                let ia: Vec<f64> = ea.settings.iter().map(|d| sa.eval(d)).collect();
                let ib: Vec<f64> = eb.settings.iter().map(|d| sb.eval(d)).collect();
                let mut corr = [0.0; 3];
                let mut ycorr = [0.0; 3];
                for ((d, wi), i) in ea.settings.iter().zip(&ea.weights).zip(&ia) {
                    let n = d.cartesian();
                    for k in 0..3 {
                        corr[k] += wi * i * n[k];
                    }
                }
                for ((d, wj), i) in eb.settings.iter().zip(&eb.weights).zip(&ib) {
                    let n = d.cartesian();
                    for k in 0..3 {
                        ycorr[k] += wj * i * n[k];
                    }
                }
                mix_value += w
                    * vis.value()
                    / 4.0
                    * (corr[0] * ycorr[0] + corr[1] * ycorr[1] + corr[2] * ycorr[2]);
            }
            assert!(mix_value <= exact.value + 1e-10);
        }
    }

    #[test]
    fn brute_force_rejects_oversize() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ea = random_ensemble(&mut rng, 20);
        let eb = random_ensemble(&mut rng, 20);
        assert!(matches!(
            discrete_lhv_max(&ea, &eb, v(1.0), LhvMaxMethod::BruteForce),
            Err(BellError::BruteForceTooLarge { .. })
        ));
    }

    #[test]
    fn file_parsing() {
        let text = "# two settings\n0.0 0.0\n1.5707963 0.0  # equator\n";
        let ens = SettingEnsemble::from_reader(Cursor::new(text), 4.0 * PI).unwrap();
        assert_eq!(ens.len(), 2);
        approx(ens.total_weight(), 4.0 * PI, 1e-12);

        let text = "0.0 0.0 6.28\n1.0 1.0 6.0\n";
        let ens = SettingEnsemble::from_reader(Cursor::new(text), 4.0 * PI).unwrap();
        approx(ens.weights[1], 6.0, 1e-12);

        let bad = "0.0 0.0\nnot a line\n";
        let err = SettingEnsemble::from_reader(Cursor::new(bad), 4.0 * PI).unwrap_err();
        match err {
            BellError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
