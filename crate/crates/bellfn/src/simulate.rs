//! Event-by-event Monte Carlo: generate measurement records from the
//! quantum prediction or from an LHV model, then estimate the functional
//! from finite data with an uncertainty and a verdict.

use crate::discrete::SettingEnsemble;
use crate::lhv::{lhv_bound_analytic, LhvModel};
use crate::quantum::{norm_sq_qm_analytic, p_qm_unchecked, Visibility};
use crate::sphere::{pairwise_sum, Direction};
use crate::{BellError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// One coincidence event: the two settings and the two outcomes.
#[derive(Debug, Clone, Copy)]
pub struct EventRecord {
    pub a: Direction,
    pub b: Direction,
    pub m: i8,
    pub mp: i8,
}

#[derive(Debug, Clone)]
pub enum Source {
    Quantum(Visibility),
    Lhv(LhvModel),
}

impl Source {
    pub fn describe(&self) -> String {
        match self {
            Source::Quantum(v) => format!("quantum(v={})", v.value()),
            Source::Lhv(m) => format!("lhv({} components)", m.ensemble.len()),
        }
    }
}

#[derive(Debug, Clone)]
pub enum SettingSampler {
    /// Area-uniform on S2 per side: cos(theta) uniform on [-1, 1], phi
    /// uniform on [0, 2 pi).
    UniformSphere,
    /// Settings drawn uniformly at random from a finite ensemble
    /// (ignoring weights); used to reproduce finite-settings scenarios.
    Ensemble(SettingEnsemble),
}

impl SettingSampler {
    pub fn describe(&self) -> String {
        match self {
            SettingSampler::UniformSphere => "uniform-sphere".into(),
            SettingSampler::Ensemble(e) => format!("ensemble({} settings)", e.len()),
        }
    }

    fn is_uniform(&self) -> bool {
        matches!(self, SettingSampler::UniformSphere)
    }
}

/// A generated event set with its provenance, as needed by the estimator
/// and the CSV sidecar.
#[derive(Debug, Clone)]
pub struct EventSet {
    pub records: Vec<EventRecord>,
    pub meta: EventMeta,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventMeta {
    pub seed: u64,
    pub source: String,
    pub sampler: String,
    pub n: usize,
    /// Whether settings were drawn area-uniformly; required by the
    /// reweighted estimator.
    pub uniform_settings: bool,
}

fn sample_direction(rng: &mut impl Rng) -> Direction {
    let u: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    Direction::new(u.clamp(-1.0, 1.0).acos(), phi).unwrap()
}

fn one_event(source: &Source, sampler: &SettingSampler, rng: &mut ChaCha8Rng) -> EventRecord {
    let (a, b) = match sampler {
        SettingSampler::UniformSphere => (sample_direction(rng), sample_direction(rng)),
        SettingSampler::Ensemble(e) => {
            let i = rng.gen_range(0..e.len());
            let j = rng.gen_range(0..e.len());
            (e.settings[i], e.settings[j])
        }
    };
    let (m, mp) = match source {
        Source::Quantum(v) => {
            // m is a fair coin (marginals are 1/2); m' from the
            // conditional (1 - m m' v a.b) / 2
            let m: i8 = if rng.gen::<bool>() { 1 } else { -1 };
            let p_plus = 0.5 * (1.0 - f64::from(m) * v.value() * a.dot(&b));
            let mp: i8 = if rng.gen::<f64>() < p_plus { 1 } else { -1 };
            (m, mp)
        }
        Source::Lhv(model) => {
            // pick a hidden state by weight, then local coins
            let mut pick = rng.gen::<f64>();
            let mut idx = model.ensemble.len() - 1;
            for (i, (w, _, _)) in model.ensemble.iter().enumerate() {
                if pick < *w {
                    idx = i;
                    break;
                }
                pick -= w;
            }
            let (_, sa, sb) = &model.ensemble[idx];
            let pa = 0.5 * (1.0 + sa.eval(&a));
            let pb = 0.5 * (1.0 + sb.eval(&b));
            let m: i8 = if rng.gen::<f64>() < pa { 1 } else { -1 };
            let mp: i8 = if rng.gen::<f64>() < pb { 1 } else { -1 };
            (m, mp)
        }
    };
    EventRecord { a, b, m, mp }
}

/// Generates `n` i.i.d. events. Each event's randomness comes from a
/// ChaCha stream indexed by (seed, event index), so the result is
/// reproducible and independent of how the work is parallelized.
pub fn generate_events(
    source: &Source,
    sampler: &SettingSampler,
    n: usize,
    seed: u64,
) -> Result<EventSet> {
    if n == 0 {
        return Err(BellError::TooFewEvents { need: 1, got: 0 });
    }
    let records: Vec<EventRecord> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            one_event(source, sampler, &mut rng)
        })
        .collect();
    Ok(EventSet {
        records,
        meta: EventMeta {
            seed,
            source: source.describe(),
            sampler: sampler.describe(),
            n,
            uniform_settings: sampler.is_uniform(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Violation,
    NoViolation,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Violation => write!(f, "violation"),
            Verdict::NoViolation => write!(f, "no-violation"),
            Verdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub n_events: usize,
    pub v_assumed: f64,
    pub functional_estimate: f64,
    pub std_error: f64,
    pub lhv_bound: f64,
    /// Standard errors above the LHV bound.
    pub significance: f64,
    pub sigma_threshold: f64,
    pub verdict: Verdict,
}

/// Unbiased plug-in estimator of <P_QM, P_source> under area-uniform
/// setting sampling: the sample mean of (4 pi)^2 P_QM(observed event).
///
/// Verdict: `violation` when the estimate exceeds the LHV bound by more
/// than `sigma_threshold` standard errors; otherwise `inconclusive` when
/// the run could not have resolved the expected quantum-LHV gap at the
/// assumed visibility (gap <= sigma_threshold standard errors), else
/// `no-violation`.
pub fn estimate_functional(
    events: &EventSet,
    v_assumed: Visibility,
    sigma_threshold: f64,
) -> Result<EstimateReport> {
    if !events.meta.uniform_settings {
        return Err(BellError::NonUniformProvenance(events.meta.sampler.clone()));
    }
    let n = events.records.len();
    if n < 100 {
        return Err(BellError::TooFewEvents { need: 100, got: n });
    }
    let scale = (4.0 * PI) * (4.0 * PI);
    let values: Vec<f64> = events
        .records
        .par_iter()
        .map(|e| scale * p_qm_unchecked(e.m, e.mp, e.a.dot(&e.b), v_assumed.value()))
        .collect();
    let mean = pairwise_sum(&values) / n as f64;
    let sq_dev: Vec<f64> = values.iter().map(|x| (x - mean) * (x - mean)).collect();
    let variance = pairwise_sum(&sq_dev) / (n as f64 - 1.0);
    let std_error = (variance / n as f64).sqrt();
    let bound = lhv_bound_analytic(v_assumed);
    let significance = (mean - bound) / std_error;
    let expected_gap = norm_sq_qm_analytic(v_assumed) - bound;
    let verdict = if significance > sigma_threshold {
        Verdict::Violation
    } else if expected_gap <= sigma_threshold * std_error {
        Verdict::Inconclusive
    } else {
        Verdict::NoViolation
    };
    Ok(EstimateReport {
        n_events: n,
        v_assumed: v_assumed.value(),
        functional_estimate: mean,
        std_error,
        lhv_bound: bound,
        significance,
        sigma_threshold,
        verdict,
    })
}

/// CSV header for event dumps.
pub const EVENT_CSV_HEADER: &str = "theta_a,phi_a,theta_b,phi_b,m_a,m_b";

/// Formats one event as a CSV row, angles at 9 significant digits.
pub fn event_to_csv(e: &EventRecord) -> String {
    format!(
        "{:.8e},{:.8e},{:.8e},{:.8e},{},{}",
        e.a.theta, e.a.phi, e.b.theta, e.b.phi, e.m, e.mp
    )
}

/// Parses an event CSV stream (with header) back into an event set.
/// `meta` supplies the provenance the CSV itself cannot carry.
pub fn events_from_csv<R: std::io::BufRead>(reader: R, meta: EventMeta) -> Result<EventSet> {
    let mut records = Vec::new();
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == EVENT_CSV_HEADER => {}
        Some((_, Ok(h))) => {
            return Err(BellError::Parse {
                line: 1,
                message: format!("bad header '{h}', expected '{EVENT_CSV_HEADER}'"),
            })
        }
        Some((_, Err(e))) => return Err(e.into()),
        None => {
            return Err(BellError::Parse {
                line: 1,
                message: "empty file".into(),
            })
        }
    }
    for (idx, line) in lines {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 6 {
            return Err(BellError::Parse {
                line: lineno,
                message: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let fl = |s: &str| -> Result<f64> {
            s.parse().map_err(|e| BellError::Parse {
                line: lineno,
                message: format!("bad float '{s}': {e}"),
            })
        };
        let it = |s: &str| -> Result<i8> {
            s.parse().map_err(|e| BellError::Parse {
                line: lineno,
                message: format!("bad outcome '{s}': {e}"),
            })
        };
        let a = Direction::new(fl(fields[0])?, fl(fields[1])?).map_err(|e| BellError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let b = Direction::new(fl(fields[2])?, fl(fields[3])?).map_err(|e| BellError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let (m, mp) = (it(fields[4])?, it(fields[5])?);
        if m.abs() != 1 || mp.abs() != 1 {
            return Err(BellError::Parse {
                line: lineno,
                message: format!("outcomes must be +-1, got {m},{mp}"),
            });
        }
        records.push(EventRecord { a, b, m, mp });
    }
    Ok(EventSet {
        records,
        meta,
    })
}

/// Rounds events through the 9-significant-digit CSV representation, so
/// in-memory estimates match estimates recomputed from a dumped file
/// bit for bit.
pub fn round_trip_precision(events: &EventSet) -> EventSet {
    let records = events
        .records
        .iter()
        .map(|e| {
            let r = |x: f64| format!("{x:.8e}").parse::<f64>().unwrap();
            EventRecord {
                a: Direction::new(r(e.a.theta), r(e.a.phi)).unwrap(),
                b: Direction::new(r(e.b.theta), r(e.b.phi)).unwrap(),
                m: e.m,
                mp: e.mp,
            }
        })
        .collect();
    EventSet {
        records,
        meta: events.meta.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lhv::ResponseStrategy;
    use std::io::Cursor;

    fn v(x: f64) -> Visibility {
        Visibility::new(x).unwrap()
    }

    #[test]
    fn perfect_anticorrelation_at_equal_settings() {
        // degenerate one-setting ensemble forces a = b
        let ens = SettingEnsemble::uniform(vec![Direction::new(1.0, 2.0).unwrap()], 4.0 * PI)
            .unwrap();
        let events = generate_events(
            &Source::Quantum(v(1.0)),
            &SettingSampler::Ensemble(ens),
            2000,
            7,
        )
        .unwrap();
        for e in &events.records {
            assert_eq!(e.mp, -e.m);
        }
    }

    #[test]
    fn zero_visibility_gives_independent_coins() {
        let n = 40_000;
        let events =
            generate_events(&Source::Quantum(v(0.0)), &SettingSampler::UniformSphere, n, 3)
                .unwrap();
        let corr: f64 = events
            .records
            .iter()
            .map(|e| f64::from(e.m) * f64::from(e.mp))
            .sum::<f64>()
            / n as f64;
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr = {corr}");
    }

    #[test]
    fn deterministic_strategy_fixes_outcomes() {
        let z = Direction::z();
        let model = LhvModel::pair(
            ResponseStrategy::Hemisphere(z),
            ResponseStrategy::Hemisphere(z),
        );
        let events =
            generate_events(&Source::Lhv(model), &SettingSampler::UniformSphere, 500, 11)
                .unwrap();
        for e in &events.records {
            assert_eq!(f64::from(e.m), if e.a.cartesian()[2] >= 0.0 { 1.0 } else { -1.0 });
            assert_eq!(f64::from(e.mp), if e.b.cartesian()[2] >= 0.0 { 1.0 } else { -1.0 });
        }
    }

    #[test]
    fn seed_determinism() {
        let a = generate_events(&Source::Quantum(v(0.8)), &SettingSampler::UniformSphere, 300, 5)
            .unwrap();
        let b = generate_events(&Source::Quantum(v(0.8)), &SettingSampler::UniformSphere, 300, 5)
            .unwrap();
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.a.theta.to_bits(), y.a.theta.to_bits());
            assert_eq!(x.m, y.m);
            assert_eq!(x.mp, y.mp);
        }
    }

    #[test]
    fn estimator_tracks_quantum_norm() {
        let n = 200_000;
        let events =
            generate_events(&Source::Quantum(v(1.0)), &SettingSampler::UniformSphere, n, 42)
                .unwrap();
        let report = estimate_functional(&events, v(1.0), 3.0).unwrap();
        let target = norm_sq_qm_analytic(v(1.0));
        assert!(
            (report.functional_estimate - target).abs() < 4.0 * report.std_error,
            "estimate {} vs {target} (se {})",
            report.functional_estimate,
            report.std_error
        );
        assert_eq!(report.verdict, Verdict::Violation);
    }

    #[test]
    fn lhv_source_stays_below_bound() {
        let z = Direction::z();
        let model = LhvModel::pair(
            ResponseStrategy::Hemisphere(z),
            ResponseStrategy::Hemisphere(z.antipode()),
        );
        let events =
            generate_events(&Source::Lhv(model), &SettingSampler::UniformSphere, 200_000, 9)
                .unwrap();
        let report = estimate_functional(&events, v(1.0), 3.0).unwrap();
        assert!((report.functional_estimate - report.lhv_bound).abs() < 4.0 * report.std_error);
        assert_ne!(report.verdict, Verdict::Violation);
    }

    #[test]
    fn underpowered_run_is_inconclusive() {
        let events =
            generate_events(&Source::Quantum(v(1.0)), &SettingSampler::UniformSphere, 100, 1)
                .unwrap();
        let report = estimate_functional(&events, v(1.0), 3.0).unwrap();
        assert_eq!(report.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn estimator_rejects_ensemble_provenance() {
        let ens = SettingEnsemble::uniform(vec![Direction::z()], 4.0 * PI).unwrap();
        let events = generate_events(
            &Source::Quantum(v(1.0)),
            &SettingSampler::Ensemble(ens),
            200,
            1,
        )
        .unwrap();
        assert!(matches!(
            estimate_functional(&events, v(1.0), 3.0),
            Err(BellError::NonUniformProvenance(_))
        ));
    }

    #[test]
    fn csv_round_trip_is_exact_after_rounding() {
        let events =
            generate_events(&Source::Quantum(v(0.9)), &SettingSampler::UniformSphere, 500, 21)
                .unwrap();
        let rounded = round_trip_precision(&events);
        let mut text = String::from(EVENT_CSV_HEADER);
        text.push('\n');
        for e in &rounded.records {
            text.push_str(&event_to_csv(e));
            text.push('\n');
        }
        let parsed = events_from_csv(Cursor::new(text), rounded.meta.clone()).unwrap();
        let r1 = estimate_functional(&rounded, v(0.9), 3.0).unwrap();
        let r2 = estimate_functional(&parsed, v(0.9), 3.0).unwrap();
        assert_eq!(
            r1.functional_estimate.to_bits(),
            r2.functional_estimate.to_bits()
        );
        assert_eq!(r1.std_error.to_bits(), r2.std_error.to_bits());
    }

    #[test]
    fn estimator_expectation_cross_visibility() {
        // E[estimate] = (2 pi)^2 (1 + v_source v_assumed / 3)
        let n = 100_000;
        let mut grand = 0.0;
        let runs = 20;
        let mut se_acc = 0.0;
        for s in 0..runs {
            let events = generate_events(
                &Source::Quantum(v(0.6)),
                &SettingSampler::UniformSphere,
                n,
                1000 + s,
            )
            .unwrap();
            let r = estimate_functional(&events, v(0.9), 3.0).unwrap();
            grand += r.functional_estimate / runs as f64;
            se_acc += r.std_error * r.std_error;
        }
        let combined_se = se_acc.sqrt() / runs as f64;
        let expect = 4.0 * PI * PI * (1.0 + 0.6 * 0.9 / 3.0);
        assert!(
            (grand - expect).abs() < 4.0 * combined_se,
            "grand mean {grand} vs {expect} (se {combined_se})"
        );
    }
}
