//! Command-line surface: evaluate the inequality, locate thresholds,
//! optimize LHV strategies, discretize to finite settings, and run
//! Monte Carlo experiments. Machine formats carry full precision so
//! reruns are byte-comparable.

use bellfn::discrete::{
    discrete_lhv_max, discrete_quantum_value, discrete_threshold, LhvMaxMethod, SettingEnsemble,
};
use bellfn::functional::{
    coplanar_threshold_numeric, evaluate_inequality, threshold_visibility, Geometry,
    InequalityReport, THRESHOLD_CHAINED_LIMIT, THRESHOLD_GISIN,
};
use bellfn::lhv::{
    lhv_bound_analytic, optimize_lhv, LhvModel, ResponseStrategy, StrategyFamily,
};
use bellfn::quantum::Visibility;
use bellfn::simulate::{
    estimate_functional, event_to_csv, events_from_csv, generate_events, round_trip_precision,
    EventMeta, EventSet, SettingSampler, Source, EVENT_CSV_HEADER,
};
use bellfn::sphere::{build_grid, Direction};
use bellfn::BellError;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bellfn", version, about = "Functional Bell inequality toolkit")]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    format: Format,
    /// Worker thread cap; does not change results.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Csv,
    Jsonl,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GeometryArg {
    Sphere,
    Coplanar,
}

impl From<GeometryArg> for Geometry {
    fn from(g: GeometryArg) -> Self {
        match g {
            GeometryArg::Sphere => Geometry::Sphere,
            GeometryArg::Coplanar => Geometry::Coplanar,
        }
    }
}

#[derive(Args)]
struct GridArgs {
    /// Gauss-Legendre nodes per equator panel.
    #[arg(long, default_value_t = 16)]
    n_theta: usize,
    /// Uniform azimuthal nodes.
    #[arg(long, default_value_t = 32)]
    n_phi: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the inequality at one visibility.
    Evaluate {
        #[arg(long, value_enum, default_value_t = GeometryArg::Sphere)]
        geometry: GeometryArg,
        #[arg(long)]
        v: f64,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Print threshold visibilities and the reference constants.
    Threshold {
        #[arg(long, value_enum, default_value_t = GeometryArg::Sphere)]
        geometry: GeometryArg,
        /// Also locate the coplanar crossing with the numeric oracle.
        #[arg(long)]
        numeric: bool,
    },
    /// Sweep visibility and emit one row per point.
    Sweep {
        #[arg(long, value_enum, default_value_t = GeometryArg::Sphere)]
        geometry: GeometryArg,
        #[arg(long, default_value_t = 0.0)]
        v_min: f64,
        #[arg(long, default_value_t = 1.0)]
        v_max: f64,
        #[arg(long, default_value_t = 11)]
        steps: usize,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Search LHV strategy space for the largest functional value.
    OptimizeLhv {
        #[arg(long)]
        v: f64,
        #[arg(long, value_enum, default_value_t = FamilyArg::Hemisphere)]
        family: FamilyArg,
        #[arg(long, default_value_t = 1)]
        degree: usize,
        #[arg(long, default_value_t = 2000)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Finite-settings functional: values or thresholds per ensemble.
    Discretize {
        /// Side-A settings file ("theta phi [weight]" lines).
        #[arg(long)]
        file_a: Option<PathBuf>,
        /// Side-B settings file; defaults to side A.
        #[arg(long)]
        file_b: Option<PathBuf>,
        /// Generate quadrature ensembles instead; "NTxNP", repeatable.
        #[arg(long, value_delimiter = ',')]
        order: Vec<String>,
        /// Generate N uniform equatorial settings instead.
        #[arg(long)]
        coplanar: Option<usize>,
        /// Report the threshold visibility instead of a value.
        #[arg(long)]
        threshold: bool,
        #[arg(long, default_value_t = 1.0)]
        v: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
        method: MethodArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate events and estimate the functional from them.
    Simulate {
        #[arg(long, value_enum, default_value_t = SourceArg::Quantum)]
        source: SourceArg,
        /// Source visibility (quantum source).
        #[arg(long, default_value_t = 1.0)]
        v: f64,
        /// Visibility assumed by the estimator; defaults to --v.
        #[arg(long)]
        v_assumed: Option<f64>,
        /// Hemisphere axes for the LHV source, "theta,phi".
        #[arg(long, default_value = "0,0")]
        axis_a: String,
        #[arg(long, default_value = "3.14159265358979,0")]
        axis_b: String,
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Verdict threshold in standard errors.
        #[arg(long, default_value_t = 3.0)]
        sigma: f64,
        /// Dump the event stream to CSV (plus a .meta.json sidecar).
        #[arg(long)]
        dump: Option<PathBuf>,
        /// Re-estimate from a previously dumped CSV instead of generating.
        #[arg(long)]
        from_file: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Hemisphere,
    Harmonic,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    BruteForce,
    Alternating,
    /// Brute force when small enough, alternating otherwise.
    Auto,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SourceArg {
    Quantum,
    LhvHemisphere,
}

fn full(x: f64) -> String {
    format!("{x:.16e}")
}

fn print_report(report: &InequalityReport, format: Format) {
    match format {
        Format::Human => {
            println!("geometry            {}", report.geometry);
            println!("visibility          {}", report.v);
            println!("quantum value       {:.9}", report.quantum_value);
            println!("LHV bound           {:.9}", report.lhv_bound);
            println!(
                "margin              {:.9}  (ratio {:.9})",
                report.margin, report.margin_ratio
            );
            println!("threshold v         {:.9}", report.threshold_v);
            println!("quad error estimate {:.3e}", report.quad_error_estimate);
        }
        Format::Csv => {
            println!("geometry,v,quantum_value,lhv_bound,margin,margin_ratio,threshold_v,n_theta,n_phi,quad_error_estimate");
            println!(
                "{},{},{},{},{},{},{},{},{},{}",
                report.geometry,
                full(report.v),
                full(report.quantum_value),
                full(report.lhv_bound),
                full(report.margin),
                full(report.margin_ratio),
                full(report.threshold_v),
                report.grid_n_theta,
                report.grid_n_phi,
                full(report.quad_error_estimate)
            );
        }
        Format::Jsonl => println!("{}", serde_json::to_string(report).unwrap()),
    }
}

fn parse_axis(text: &str) -> Result<Direction, BellError> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(BellError::InvalidDirection(format!(
            "expected 'theta,phi', got '{text}'"
        )));
    }
    let theta = parts[0].trim().parse::<f64>().map_err(|e| {
        BellError::InvalidDirection(format!("bad theta '{}': {e}", parts[0]))
    })?;
    let phi = parts[1].trim().parse::<f64>().map_err(|e| {
        BellError::InvalidDirection(format!("bad phi '{}': {e}", parts[1]))
    })?;
    Direction::new(theta, phi)
}

fn parse_order(text: &str) -> Result<(usize, usize), BellError> {
    let parts: Vec<&str> = text.split(['x', 'X']).collect();
    if parts.len() != 2 {
        return Err(BellError::InvalidOrder(format!(
            "expected 'NTxNP', got '{text}'"
        )));
    }
    let nt = parts[0].parse().map_err(|_| {
        BellError::InvalidOrder(format!("bad n_theta '{}'", parts[0]))
    })?;
    let np = parts[1].parse().map_err(|_| {
        BellError::InvalidOrder(format!("bad n_phi '{}'", parts[1]))
    })?;
    Ok((nt, np))
}

fn run(cli: Cli) -> Result<(), BellError> {
    match cli.command {
        Command::Evaluate { geometry, v, grid } => {
            let report = evaluate_inequality(
                geometry.into(),
                Visibility::new(v)?,
                grid.n_theta,
                grid.n_phi,
            )?;
            print_report(&report, cli.format);
        }
        Command::Threshold { geometry, numeric } => {
            let geometry: Geometry = geometry.into();
            let t = threshold_visibility(geometry);
            match cli.format {
                Format::Human => {
                    println!("threshold ({geometry})  {t:.9}");
                    println!("reference: sphere 0.75, gisin {THRESHOLD_GISIN:.9}, coplanar {:.9}, chained limit {THRESHOLD_CHAINED_LIMIT}", threshold_visibility(Geometry::Coplanar));
                    if numeric && geometry == Geometry::Coplanar {
                        println!(
                            "numeric crossing     {:.9}",
                            coplanar_threshold_numeric(4096, 1e-9)?
                        );
                    }
                }
                Format::Csv => {
                    println!("geometry,threshold_v,gisin,coplanar,chained_limit");
                    println!(
                        "{},{},{},{},{}",
                        geometry,
                        full(t),
                        full(THRESHOLD_GISIN),
                        full(threshold_visibility(Geometry::Coplanar)),
                        full(THRESHOLD_CHAINED_LIMIT)
                    );
                }
                Format::Jsonl => {
                    println!(
                        "{}",
                        serde_json::json!({
                            "geometry": geometry.to_string(),
                            "threshold_v": t,
                            "gisin": THRESHOLD_GISIN,
                            "coplanar": threshold_visibility(Geometry::Coplanar),
                            "chained_limit": THRESHOLD_CHAINED_LIMIT,
                        })
                    );
                }
            }
        }
        Command::Sweep {
            geometry,
            v_min,
            v_max,
            steps,
            grid,
        } => {
            if steps < 2 || !(0.0..=1.0).contains(&v_min) || !(0.0..=1.0).contains(&v_max)
                || v_min >= v_max
            {
                return Err(BellError::InvalidOrder(
                    "sweep needs 0 <= v_min < v_max <= 1 and steps >= 2".into(),
                ));
            }
            println!("v,quantum_value,lhv_bound,margin");
            for i in 0..steps {
                let v = v_min + (v_max - v_min) * i as f64 / (steps - 1) as f64;
                let report = evaluate_inequality(
                    geometry.into(),
                    Visibility::new(v)?,
                    grid.n_theta,
                    grid.n_phi,
                )?;
                println!(
                    "{},{},{},{}",
                    full(report.v),
                    full(report.quantum_value),
                    full(report.lhv_bound),
                    full(report.margin)
                );
            }
        }
        Command::OptimizeLhv {
            v,
            family,
            degree,
            budget,
            seed,
            grid,
        } => {
            let vis = Visibility::new(v)?;
            let family = match family {
                FamilyArg::Hemisphere => StrategyFamily::HemispherePair,
                FamilyArg::Harmonic => StrategyFamily::Harmonic { degree },
            };
            let g = build_grid(grid.n_theta, grid.n_phi)?;
            let res = optimize_lhv(vis, family, &g, budget, seed)?;
            let bound = lhv_bound_analytic(vis);
            match cli.format {
                Format::Human => {
                    println!("achieved value      {:.9}", res.value);
                    println!("analytic bound      {bound:.9}");
                    println!("gap to bound        {:.3e}", bound - res.value);
                    println!("evaluations         {}", res.evaluations);
                    println!("final simplex size  {:.3e}", res.final_simplex_spread);
                }
                Format::Csv => {
                    println!("v,achieved,bound,gap,evaluations,final_simplex");
                    println!(
                        "{},{},{},{},{},{}",
                        full(v),
                        full(res.value),
                        full(bound),
                        full(bound - res.value),
                        res.evaluations,
                        full(res.final_simplex_spread)
                    );
                }
                Format::Jsonl => println!(
                    "{}",
                    serde_json::json!({
                        "v": v,
                        "achieved": res.value,
                        "bound": bound,
                        "evaluations": res.evaluations,
                        "final_simplex": res.final_simplex_spread,
                    })
                ),
            }
        }
        Command::Discretize {
            file_a,
            file_b,
            order,
            coplanar,
            threshold,
            v,
            method,
            seed,
        } => {
            let mut ensembles: Vec<(String, SettingEnsemble, SettingEnsemble)> = Vec::new();
            if let Some(fa) = &file_a {
                let ea = load_ensemble(fa)?;
                let eb = match &file_b {
                    Some(fb) => load_ensemble(fb)?,
                    None => ea.clone(),
                };
                ensembles.push((format!("{}", fa.display()), ea, eb));
            }
            for spec in &order {
                let (nt, np) = parse_order(spec)?;
                let g = build_grid(nt, np)?;
                let ens = SettingEnsemble::from_grid(&g);
                ensembles.push((format!("grid-{nt}x{np}"), ens.clone(), ens));
            }
            if let Some(n) = coplanar {
                let ens = SettingEnsemble::coplanar_uniform(n)?;
                ensembles.push((format!("coplanar-{n}"), ens.clone(), ens));
            }
            if ensembles.is_empty() {
                return Err(BellError::InvalidEnsemble(
                    "give --file-a, --order, or --coplanar".into(),
                ));
            }
            if cli.format != Format::Human {
                println!("label,n_a,n_b,method,exact,quantum_value,lhv_max,threshold_v");
            }
            for (label, ea, eb) in &ensembles {
                let pick = |m: MethodArg| match m {
                    MethodArg::BruteForce => LhvMaxMethod::BruteForce,
                    MethodArg::Alternating => LhvMaxMethod::Alternating { restarts: 32, seed },
                    MethodArg::Auto => {
                        if ea.len() + eb.len() <= bellfn::discrete::BRUTE_FORCE_LIMIT {
                            LhvMaxMethod::BruteForce
                        } else {
                            LhvMaxMethod::Alternating { restarts: 32, seed }
                        }
                    }
                };
                let m = pick(method);
                let vis = Visibility::new(v)?;
                let q = discrete_quantum_value(ea, eb, vis);
                let max = discrete_lhv_max(ea, eb, vis, m)?;
                let thr = if threshold {
                    discrete_threshold(ea, eb, m)?
                } else {
                    None
                };
                let thr_text = match (threshold, thr) {
                    (true, Some(t)) => full(t),
                    (true, None) => "no-violation".to_string(),
                    (false, _) => String::new(),
                };
                match cli.format {
                    Format::Human => {
                        println!(
                            "{label}: n={}x{}, method={}, quantum={:.9}, lhv_max={:.9}{}",
                            ea.len(),
                            eb.len(),
                            if max.exact { "exact" } else { "heuristic" },
                            q,
                            max.value,
                            if threshold {
                                format!(
                                    ", threshold={}",
                                    match thr {
                                        Some(t) => format!("{t:.9}"),
                                        None => "no-violation".into(),
                                    }
                                )
                            } else {
                                String::new()
                            }
                        );
                    }
                    _ => {
                        println!(
                            "{label},{},{},{},{},{},{},{}",
                            ea.len(),
                            eb.len(),
                            if max.exact { "exact" } else { "heuristic" },
                            max.exact,
                            full(q),
                            full(max.value),
                            thr_text
                        );
                    }
                }
            }
        }
        Command::Simulate {
            source,
            v,
            v_assumed,
            axis_a,
            axis_b,
            n,
            seed,
            sigma,
            dump,
            from_file,
        } => {
            let v_assumed = Visibility::new(v_assumed.unwrap_or(v))?;
            let events: EventSet = if let Some(path) = &from_file {
                let meta_path = sidecar_path(path);
                let meta: EventMeta = serde_json::from_reader(
                    File::open(&meta_path).map_err(BellError::Io)?,
                )
                .map_err(|e| BellError::Parse {
                    line: 0,
                    message: format!("bad sidecar {}: {e}", meta_path.display()),
                })?;
                events_from_csv(BufReader::new(File::open(path)?), meta)?
            } else {
                let src = match source {
                    SourceArg::Quantum => Source::Quantum(Visibility::new(v)?),
                    SourceArg::LhvHemisphere => {
                        let ca = parse_axis(&axis_a)?;
                        let cb = parse_axis(&axis_b)?;
                        Source::Lhv(LhvModel::pair(
                            ResponseStrategy::Hemisphere(ca),
                            ResponseStrategy::Hemisphere(cb),
                        ))
                    }
                };
                let raw = generate_events(&src, &SettingSampler::UniformSphere, n, seed)?;
                // estimates always go through CSV precision, so a dumped
                // file re-estimates to the identical report
                round_trip_precision(&raw)
            };
            if let Some(path) = &dump {
                let mut f = File::create(path)?;
                writeln!(f, "{EVENT_CSV_HEADER}")?;
                for e in &events.records {
                    writeln!(f, "{}", event_to_csv(e))?;
                }
                let meta_file = File::create(sidecar_path(path))?;
                serde_json::to_writer_pretty(meta_file, &events.meta).map_err(|e| {
                    BellError::Parse {
                        line: 0,
                        message: e.to_string(),
                    }
                })?;
            }
            let report = estimate_functional(&events, v_assumed, sigma)?;
            match cli.format {
                Format::Human => {
                    println!("events              {}", report.n_events);
                    println!("estimate            {:.9}", report.functional_estimate);
                    println!("std error           {:.9}", report.std_error);
                    println!("LHV bound           {:.9}", report.lhv_bound);
                    println!("significance        {:.4}", report.significance);
                    println!("verdict             {}", report.verdict);
                }
                Format::Csv => {
                    println!("n_events,v_assumed,estimate,std_error,lhv_bound,significance,verdict");
                    println!(
                        "{},{},{},{},{},{},{}",
                        report.n_events,
                        full(report.v_assumed),
                        full(report.functional_estimate),
                        full(report.std_error),
                        full(report.lhv_bound),
                        full(report.significance),
                        report.verdict
                    );
                }
                Format::Jsonl => println!("{}", serde_json::to_string(&report).unwrap()),
            }
        }
    }
    Ok(())
}

fn sidecar_path(path: &std::path::Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn load_ensemble(path: &std::path::Path) -> Result<SettingEnsemble, BellError> {
    let f = File::open(path)?;
    SettingEnsemble::from_reader(BufReader::new(f), 4.0 * std::f64::consts::PI)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // results are thread-count independent by construction
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                BellError::Io(_) | BellError::Parse { .. } => 3u8,
                _ => 2u8,
            };
            ExitCode::from(code)
        }
    }
}
