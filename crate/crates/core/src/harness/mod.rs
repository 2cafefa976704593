//! Benchmark suites mirroring the paper's experimental protocol at desk
//! scale: Ising grids, `G(n,p)` random graphs, and a message-passing vs
//! general-solver timing comparison. Rows are written as CSV with a fixed,
//! versioned schema.
//!
//! Determinism: every instance seed is derived from the master seed and the
//! instance coordinates through a documented splitmix64 chain, and rows are
//! emitted in configuration order regardless of how many worker threads run
//! the trials. Wall-clock columns are inherently run-dependent; all other
//! columns are byte-reproducible for a fixed config.

mod stats;

pub use stats::spearman;

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::beliefs::BeliefSet;
use crate::counting::{
    check_admissible, fit_convex_l2, fit_convex_maxent, solve_admissible, trw_pairwise_counting,
    CountingNumbers,
};
use crate::energy::{free_energy, run, EnergyError, FreeEnergySpec, Schedule};
use crate::exact::{
    brute_force_marginals, elimination_marginals, projected_minimize, ProjectedOptions,
    ProjectedStop,
};
use crate::graph::{ising_grid, random_graph, FactorGraph, Interaction};

/// CSV schema version; bump when the column set changes.
pub const CSV_HEADER: &str =
    "suite,trial_seed,method,d_f,d_o,mode,l1_error,converged,iterations,wall_seconds,free_energy";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("l1 marginal error requires binary variables with matching shapes")]
    NonBinary,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteKind {
    Grid,
    Random,
    Timing,
}

impl SuiteKind {
    fn salt(&self) -> u64 {
        match self {
            SuiteKind::Grid => 0x67726964,   // "grid"
            SuiteKind::Random => 0x726e6470, // "rndp"
            SuiteKind::Timing => 0x74696d65, // "time"
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Bp,
    Trw,
    ConvexL2,
    ConvexH,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Bp => "bp",
            Method::Trw => "trw",
            Method::ConvexL2 => "convex-l2",
            Method::ConvexH => "convex-h",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bp" => Ok(Method::Bp),
            "trw" => Ok(Method::Trw),
            "convex-l2" | "l2" => Ok(Method::ConvexL2),
            "convex-h" | "maxent" | "h" => Ok(Method::ConvexH),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

/// Suite configuration; see the per-suite constructors for the defaults
/// that mirror the paper's protocol.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub suite: SuiteKind,
    /// Grid side length (grid/timing: largest side) or vertex count (random).
    pub n: usize,
    /// Edge probability for the random suite.
    pub p: f64,
    pub d_f: Vec<f64>,
    pub d_o: Vec<f64>,
    pub modes: Vec<Interaction>,
    pub methods: Vec<Method>,
    pub schedule: Schedule,
    pub trials: usize,
    pub seed: u64,
    pub stop_tol: f64,
    pub max_iters: usize,
}

impl ExperimentConfig {
    pub fn grid_default() -> Self {
        ExperimentConfig {
            suite: SuiteKind::Grid,
            n: 8,
            p: 0.5,
            d_f: vec![0.05, 1.0],
            d_o: (1..=20).map(|k| 0.2 * k as f64).collect(),
            modes: vec![Interaction::Mixed, Interaction::Attractive],
            methods: vec![Method::Bp, Method::Trw, Method::ConvexL2, Method::ConvexH],
            schedule: Schedule::Sequential,
            trials: 10,
            seed: 0,
            stop_tol: 1e-5,
            max_iters: 10_000,
        }
    }

    pub fn random_default() -> Self {
        ExperimentConfig {
            suite: SuiteKind::Random,
            n: 10,
            p: 0.5,
            ..Self::grid_default()
        }
    }

    pub fn timing_default() -> Self {
        ExperimentConfig {
            suite: SuiteKind::Timing,
            n: 10,
            d_f: vec![1.0],
            d_o: vec![1.0],
            modes: vec![Interaction::Mixed],
            methods: vec![Method::ConvexL2],
            ..Self::grid_default()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials < 1 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(HarnessError::Config("methods must be nonempty".into()));
        }
        if self.d_f.is_empty() || self.d_o.is_empty() || self.modes.is_empty() {
            return Err(HarnessError::Config("parameter lists must be nonempty".into()));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(HarnessError::Config("p must lie in [0,1]".into()));
        }
        if self.n < 2 {
            return Err(HarnessError::Config("n must be at least 2".into()));
        }
        Ok(())
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub suite: String,
    pub trial_seed: u64,
    pub method: String,
    pub d_f: f64,
    pub d_o: f64,
    pub mode: String,
    /// Blank when exact marginals were unavailable or the row failed.
    pub l1_error: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub wall_seconds: f64,
    pub free_energy: Option<f64>,
}

/// splitmix64 step (Steele, Lea, Flood 2014); the documented seed-splitting
/// primitive used throughout the harness.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Per-instance seed: fold the instance coordinates into the master seed
/// with one splitmix64 application per component.
pub fn derive_seed(master: u64, coordinates: &[u64]) -> u64 {
    let mut s = splitmix64(master);
    for &c in coordinates {
        s = splitmix64(s ^ c);
    }
    s
}

/// Mean over variables of `|p_alg(x_i = 1) − p_true(x_i = 1)|`.
pub fn l1_marginal_error(estimate: &BeliefSet, exact: &BeliefSet) -> Result<f64, HarnessError> {
    if estimate.var.len() != exact.var.len() || estimate.var.is_empty() {
        return Err(HarnessError::NonBinary);
    }
    let mut total = 0.0;
    for (a, b) in estimate.var.iter().zip(&exact.var) {
        if a.len() != 2 || b.len() != 2 {
            return Err(HarnessError::NonBinary);
        }
        total += (a[1] - b[1]).abs();
    }
    Ok(total / estimate.var.len() as f64)
}

/// Counting numbers for one method, or `None` for plain BP. TRW targets are
/// spanning-tree edge probabilities with singleton factors pinned to 1,
/// reconciled through the linear feasibility solver.
pub fn counting_for_method(
    graph: &FactorGraph,
    method: Method,
) -> Result<Option<CountingNumbers>, String> {
    match method {
        Method::Bp => Ok(None),
        Method::Trw => {
            let targets = trw_pairwise_counting(graph).map_err(|e| e.to_string())?;
            let counting = solve_admissible(graph, &targets).map_err(|e| e.to_string())?;
            Ok(Some(counting))
        }
        Method::ConvexL2 => Ok(Some(fit_convex_l2(graph).map_err(|e| e.to_string())?)),
        Method::ConvexH => Ok(Some(fit_convex_maxent(graph).map_err(|e| e.to_string())?)),
    }
}

fn failure_row(
    suite: &str,
    trial_seed: u64,
    method: &str,
    d_f: f64,
    d_o: f64,
    mode: Interaction,
) -> ResultRow {
    ResultRow {
        suite: suite.to_string(),
        trial_seed,
        method: method.to_string(),
        d_f,
        d_o,
        mode: mode.as_str().to_string(),
        l1_error: None,
        converged: false,
        iterations: 0,
        wall_seconds: 0.0,
        free_energy: None,
    }
}

/// Runs one method on one instance; `exact` may be missing (timing rows
/// still report wall time without an error column).
#[allow(clippy::too_many_arguments)]
fn method_row(
    suite: &str,
    graph: &FactorGraph,
    exact: Option<&BeliefSet>,
    method: Method,
    config: &ExperimentConfig,
    trial_seed: u64,
    d_f: f64,
    d_o: f64,
    mode: Interaction,
) -> ResultRow {
    let mut row = failure_row(suite, trial_seed, method.as_str(), d_f, d_o, mode);
    if method == Method::Bp {
        let start = Instant::now();
        let bp = crate::bp::sum_product_bp(
            graph,
            &crate::bp::BpOptions {
                max_iters: config.max_iters,
                ..Default::default()
            },
        );
        row.wall_seconds = start.elapsed().as_secs_f64();
        row.converged = bp.converged;
        row.iterations = bp.iterations;
        row.l1_error = exact.and_then(|x| l1_marginal_error(&bp.beliefs, x).ok());
        return row;
    }
    let counting = match counting_for_method(graph, method) {
        Ok(Some(c)) => c,
        _ => return row,
    };
    // Inadmissible counting: record the row and leave aggregates to skip it.
    if !check_admissible(graph, &counting, 1e-8).passes() {
        return row;
    }
    let Ok(spec) = FreeEnergySpec::new(graph.clone(), counting) else {
        return row;
    };
    let start = Instant::now();
    let outcome = run(&spec, config.schedule, config.stop_tol, config.max_iters);
    row.wall_seconds = start.elapsed().as_secs_f64();
    let result = match outcome {
        Ok(r) => r,
        Err(EnergyError::DidNotConverge(r)) => *r,
        Err(_) => return row,
    };
    row.converged = result.converged;
    row.iterations = result.iterations;
    row.free_energy = Some(result.final_free_energy);
    row.l1_error = exact.and_then(|x| l1_marginal_error(&result.beliefs, x).ok());
    row
}

struct Instance {
    d_f: f64,
    d_o: f64,
    mode: Interaction,
    seed: u64,
}

fn instances(config: &ExperimentConfig) -> Vec<Instance> {
    let mut out = Vec::new();
    for (i_f, &d_f) in config.d_f.iter().enumerate() {
        for (i_o, &d_o) in config.d_o.iter().enumerate() {
            for (i_m, &mode) in config.modes.iter().enumerate() {
                for trial in 0..config.trials {
                    let seed = derive_seed(
                        config.seed,
                        &[
                            config.suite.salt(),
                            i_f as u64,
                            i_o as u64,
                            i_m as u64,
                            trial as u64,
                        ],
                    );
                    out.push(Instance { d_f, d_o, mode, seed });
                }
            }
        }
    }
    out
}

/// Ising-grid suite: exact marginals via elimination (row-major order),
/// every configured method per instance. Per-instance failures produce
/// failure rows; the suite continues.
pub fn run_grid_suite(config: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    config.validate()?;
    let jobs = instances(config);
    let rows: Vec<Vec<ResultRow>> = jobs
        .par_iter()
        .map(|inst| {
            let graph = ising_grid(config.n, inst.d_f, inst.d_o, inst.mode, inst.seed);
            let exact = elimination_marginals(&graph, None).ok();
            config
                .methods
                .iter()
                .map(|&method| {
                    method_row(
                        "grid",
                        &graph,
                        exact.as_ref(),
                        method,
                        config,
                        inst.seed,
                        inst.d_f,
                        inst.d_o,
                        inst.mode,
                    )
                })
                .collect()
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// `G(n,p)` suite with exact marginals from full enumeration.
pub fn run_random_suite(config: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    config.validate()?;
    let jobs = instances(config);
    let rows: Vec<Vec<ResultRow>> = jobs
        .par_iter()
        .map(|inst| {
            let graph = random_graph(config.n, config.p, inst.d_f, inst.d_o, inst.mode, inst.seed);
            let exact = brute_force_marginals(&graph).ok().map(|(b, _)| b);
            config
                .methods
                .iter()
                .map(|&method| {
                    method_row(
                        "random",
                        &graph,
                        exact.as_ref(),
                        method,
                        config,
                        inst.seed,
                        inst.d_f,
                        inst.d_o,
                        inst.mode,
                    )
                })
                .collect()
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// Timing suite: sequential message passing vs projected gradient on
/// `k × k` grids for `k = 2..=n`, identical primal-change stopping. The
/// suite id embeds the grid side (`timing-n5`); methods are reported as
/// `mp` and `pg`.
pub fn run_timing_suite(config: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    config.validate()?;
    let d_f = config.d_f[0];
    let d_o = config.d_o[0];
    let mode = config.modes[0];
    let mut jobs = Vec::new();
    for side in 2..=config.n {
        for trial in 0..config.trials {
            let seed = derive_seed(
                config.seed,
                &[config.suite.salt(), side as u64, trial as u64],
            );
            jobs.push((side, seed));
        }
    }
    let rows: Vec<Vec<ResultRow>> = jobs
        .par_iter()
        .map(|&(side, seed)| {
            let suite = format!("timing-n{side}");
            let graph = ising_grid(side, d_f, d_o, mode, seed);
            let exact = elimination_marginals(&graph, None).ok();
            let mut out = Vec::with_capacity(2);
            let counting = match fit_convex_l2(&graph) {
                Ok(c) => c,
                Err(_) => {
                    out.push(failure_row(&suite, seed, "mp", d_f, d_o, mode));
                    out.push(failure_row(&suite, seed, "pg", d_f, d_o, mode));
                    return out;
                }
            };
            let spec = FreeEnergySpec::new(graph.clone(), counting).expect("consistent spec");

            let start = Instant::now();
            let mp = run(&spec, Schedule::Sequential, config.stop_tol, config.max_iters);
            let mp_wall = start.elapsed().as_secs_f64();
            let mut mp_row = failure_row(&suite, seed, "mp", d_f, d_o, mode);
            mp_row.wall_seconds = mp_wall;
            let mp_result = match mp {
                Ok(r) => Some(r),
                Err(EnergyError::DidNotConverge(r)) => Some(*r),
                Err(_) => None,
            };
            if let Some(r) = mp_result {
                mp_row.converged = r.converged;
                mp_row.iterations = r.iterations;
                mp_row.free_energy = Some(r.final_free_energy);
                mp_row.l1_error = exact.as_ref().and_then(|x| l1_marginal_error(&r.beliefs, x).ok());
            }
            out.push(mp_row);

            let start = Instant::now();
            let pg = projected_minimize(
                &spec,
                &ProjectedOptions {
                    stop: ProjectedStop::PrimalChange(config.stop_tol),
                    max_iters: config.max_iters,
                },
            );
            let pg_wall = start.elapsed().as_secs_f64();
            let mut pg_row = failure_row(&suite, seed, "pg", d_f, d_o, mode);
            pg_row.wall_seconds = pg_wall;
            if let Ok(beliefs) = pg {
                pg_row.converged = true;
                pg_row.l1_error =
                    exact.as_ref().and_then(|x| l1_marginal_error(&beliefs, x).ok());
                pg_row.free_energy = free_energy(&spec, &beliefs).ok();
            }
            out.push(pg_row);
            out
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

fn format_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Serializes rows with the fixed schema; floats use Rust's shortest
/// round-trip formatting so the bytes are a pure function of the values.
pub fn rows_to_csv(rows: &[ResultRow]) -> Result<String, HarnessError> {
    let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
    writer.write_record(CSV_HEADER.split(','))?;
    for r in rows {
        writer.write_record(&[
            r.suite.clone(),
            r.trial_seed.to_string(),
            r.method.clone(),
            format!("{}", r.d_f),
            format!("{}", r.d_o),
            r.mode.clone(),
            format_opt(r.l1_error),
            r.converged.to_string(),
            r.iterations.to_string(),
            format!("{}", r.wall_seconds),
            format_opt(r.free_energy),
        ])?;
    }
    let bytes = writer.into_inner().map_err(|e| {
        HarnessError::Config(format!("csv buffer error: {e}"))
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_rows_csv(path: &std::path::Path, rows: &[ResultRow]) -> Result<(), HarnessError> {
    std::fs::write(path, rows_to_csv(rows)?)?;
    Ok(())
}

/// Parses `key=value` lines (blank lines and `#` comments ignored).
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, HarnessError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(HarnessError::Config(format!(
                "line {}: expected key=value, got `{line}`",
                lineno + 1
            )));
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}
