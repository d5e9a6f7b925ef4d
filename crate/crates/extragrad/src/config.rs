//! Experiment configuration: a strict JSON schema (unknown keys are errors),
//! per-seed sweep execution with CSV emission, and the aggregate summary.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithm::{run, AlgorithmKind, MetricSelector, Trajectory};
use crate::error::{Error, Result};
use crate::merit::{fit_rate, FitScale, InnerSolver, MeritConfig, RateFit};
use crate::oracle::{NoiseModel, Oracle};
use crate::problems;
use crate::schedule::StepSchedule;
use crate::vi::{standard_normal, ConvexSet, VIProblem, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    QuadQuartic { d1: usize, d2: usize, eps1: f64, eps2: f64, matrix_seed: u64 },
    StronglyMonotoneQuadratic { dim: usize, alpha: f64, lipschitz: f64, matrix_seed: u64 },
    Bilinear { dim: usize, matrix_seed: u64, set: SetSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    WholeSpace,
    /// Origin-centered ball.
    Ball { radius: f64 },
}

impl ProblemSpec {
    pub fn build(&self) -> Result<VIProblem> {
        match *self {
            ProblemSpec::QuadQuartic { d1, d2, eps1, eps2, matrix_seed } => {
                problems::make_quad_quartic(d1, d2, eps1, eps2, matrix_seed)
            }
            ProblemSpec::StronglyMonotoneQuadratic { dim, alpha, lipschitz, matrix_seed } => {
                problems::make_strongly_monotone_quadratic(dim, alpha, lipschitz, matrix_seed)
            }
            ProblemSpec::Bilinear { dim, matrix_seed, ref set } => {
                let set = match *set {
                    SetSpec::WholeSpace => ConvexSet::whole_space(2 * dim),
                    SetSpec::Ball { radius } => {
                        ConvexSet::ball(Vector::zeros(2 * dim), radius)?
                    }
                };
                problems::make_bilinear(dim, matrix_seed, set)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StartSpec {
    Explicit { value: Vec<f64> },
    /// `x* + scale * (seeded unit Gaussian direction)`, projected onto the set.
    NearSolution { scale: f64 },
    RandomInSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InnerSolverSpec {
    ClosedFormAffine,
    ProjectedAscent { restarts: usize, iters: usize },
}

impl InnerSolverSpec {
    fn build(self) -> InnerSolver {
        match self {
            InnerSolverSpec::ClosedFormAffine => InnerSolver::ClosedFormAffine,
            InnerSolverSpec::ProjectedAscent { restarts, iters } => {
                InnerSolver::ProjectedAscent { restarts, iters }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrResSpec {
    /// Radius of the merit region around the starting point.
    pub radius: f64,
    pub inner: InnerSolverSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub err_res: Option<ErrResSpec>,
    /// Radius around the known solution for the stay-in-neighborhood flag.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stay_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    /// One entry runs a single method; several run in lockstep for iterate
    /// comparisons.
    pub algorithms: Vec<AlgorithmKind>,
    pub schedule: StepSchedule,
    pub noise: NoiseModel,
    pub x_start: StartSpec,
    pub t_max: u64,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub metrics: MetricsSpec,
    pub output_dir: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::InvalidArgument("at least one algorithm is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("at least one seed is required".into()));
        }
        if self.t_max == 0 {
            return Err(Error::InvalidArgument("t_max must be >= 1".into()));
        }
        if let Some(e) = &self.metrics.err_res {
            if !(e.radius > 0.0) {
                return Err(Error::InvalidArgument("err_res radius must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Starting point for one seed.
pub fn resolve_start(spec: &StartSpec, problem: &VIProblem, seed: u64) -> Result<Vector> {
    match spec {
        StartSpec::Explicit { value } => {
            if value.len() != problem.dim() {
                return Err(Error::DimensionMismatch {
                    expected: problem.dim(),
                    got: value.len(),
                });
            }
            Ok(Vector::from_vec(value.clone()))
        }
        StartSpec::NearSolution { scale } => {
            let sol = problem.known_solution.as_ref().ok_or_else(|| {
                Error::InvalidArgument("near_solution start needs a known solution".into())
            })?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(1));
            let mut dir = Vector::from_fn(problem.dim(), |_, _| standard_normal(&mut rng));
            let n = dir.norm();
            if n > 0.0 {
                dir /= n;
            }
            problem.set.project(&(sol + dir * *scale))
        }
        StartSpec::RandomInSet => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x6c62_272e).wrapping_add(2));
            Ok(problem.set.sample(&mut rng))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AlgorithmSummary {
    pub dist_sq_last_fit: Option<RateFit>,
    pub dist_sq_avg_base_fit: Option<RateFit>,
    pub stay_frequency: Option<f64>,
    pub final_dist_sq_mean: f64,
    pub oracle_calls: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub config: RunConfig,
    pub algorithms: BTreeMap<String, AlgorithmSummary>,
    /// Max over iterations and algorithm pairs of the relative base-iterate
    /// deviation; present only for multi-algorithm runs.
    pub max_pairwise_deviation: Option<f64>,
}

struct SeedRun {
    seed: u64,
    traj: Trajectory,
}

/// Runs the sweep, writes one CSV per (algorithm, seed) plus a seed-averaged
/// CSV per algorithm and `summary.json`, and returns the summary.
pub fn execute(config: &RunConfig, output_dir: &Path) -> Result<Summary> {
    config.validate()?;
    let problem = Arc::new(config.problem.build()?);
    std::fs::create_dir_all(output_dir)
        .map_err(|e| Error::InvalidArgument(format!("cannot create output dir: {e}")))?;

    let compare_iterates = config.algorithms.len() > 1;
    let stay_ball = match (config.metrics.stay_radius, problem.known_solution.as_ref()) {
        (Some(r), Some(sol)) => Some((sol.clone(), r)),
        (Some(_), None) => {
            return Err(Error::InvalidArgument("stay_radius needs a known solution".into()))
        }
        _ => None,
    };

    let run_one = |kind: AlgorithmKind, seed: u64| -> Result<SeedRun> {
        let x0 = resolve_start(&config.x_start, &problem, seed)?;
        let selector = MetricSelector {
            err_res: match &config.metrics.err_res {
                Some(e) => Some(MeritConfig {
                    radius: e.radius,
                    center: x0.clone(),
                    inner: e.inner.build(),
                }),
                None => None,
            },
            store_states: compare_iterates,
            stay_ball: stay_ball.clone(),
        };
        let oracle = Oracle::new(problem.clone(), config.noise, seed);
        let traj = run(kind, &oracle, &config.schedule, &x0, config.t_max, &selector, seed)
            .map_err(|e| match e {
                Error::RunFailure { t, msg } => Error::RunFailure {
                    t,
                    msg: format!("{} seed {seed}: {msg}", kind.name()),
                },
                other => other,
            })?;
        Ok(SeedRun { seed, traj })
    };

    let jobs: Vec<(AlgorithmKind, u64)> = config
        .algorithms
        .iter()
        .flat_map(|&k| config.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let results: Vec<(AlgorithmKind, SeedRun)> = match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(|| {
                jobs.par_iter()
                    .map(|&(k, s)| run_one(k, s).map(|r| (k, r)))
                    .collect::<Result<Vec<_>>>()
            })?,
        None => jobs
            .par_iter()
            .map(|&(k, s)| run_one(k, s).map(|r| (k, r)))
            .collect::<Result<Vec<_>>>()?,
    };

    let mut by_algo: BTreeMap<String, Vec<&SeedRun>> = BTreeMap::new();
    for (kind, sr) in &results {
        by_algo.entry(kind.name().to_string()).or_default().push(sr);
    }
    // restore configured seed order within each algorithm
    for runs in by_algo.values_mut() {
        runs.sort_by_key(|sr| {
            config.seeds.iter().position(|&s| s == sr.seed).unwrap_or(usize::MAX)
        });
    }

    for (name, runs) in &by_algo {
        for sr in runs {
            write_csv(&output_dir.join(format!("{name}_seed{}.csv", sr.seed)), &sr.traj)?;
        }
        write_mean_csv(&output_dir.join(format!("{name}_mean.csv")), runs)?;
    }

    let fit_window = (config.t_max as f64 / 100.0, config.t_max as f64);
    let mut algo_summaries = BTreeMap::new();
    for (name, runs) in &by_algo {
        let mean_rows = mean_rows(runs);
        let last_pts: Vec<(f64, f64)> =
            mean_rows.iter().map(|r| (r.0, r.2)).collect();
        let base_pts: Vec<(f64, f64)> =
            mean_rows.iter().map(|r| (r.0, r.4)).collect();
        let stay_frequency = if stay_ball.is_some() {
            let stayed = runs.iter().filter(|sr| sr.traj.stayed == Some(true)).count();
            Some(stayed as f64 / runs.len() as f64)
        } else {
            None
        };
        let final_dist_sq_mean = runs
            .iter()
            .map(|sr| sr.traj.rows.last().map(|r| r.dist_sq_last).unwrap_or(f64::NAN))
            .sum::<f64>()
            / runs.len() as f64;
        algo_summaries.insert(
            name.clone(),
            AlgorithmSummary {
                dist_sq_last_fit: fit_rate(&last_pts, FitScale::LogLog, fit_window).ok(),
                dist_sq_avg_base_fit: fit_rate(&base_pts, FitScale::LogLog, fit_window).ok(),
                stay_frequency,
                final_dist_sq_mean,
                oracle_calls: runs.iter().map(|sr| sr.traj.oracle_calls).sum(),
            },
        );
    }

    let max_pairwise_deviation = if compare_iterates {
        Some(pairwise_deviation(&by_algo))
    } else {
        None
    };

    let summary = Summary {
        config: config.clone(),
        algorithms: algo_summaries,
        max_pairwise_deviation,
    };
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::InvalidArgument(format!("summary serialization: {e}")))?;
    std::fs::write(output_dir.join("summary.json"), json)
        .map_err(|e| Error::InvalidArgument(format!("cannot write summary: {e}")))?;
    Ok(summary)
}

pub const CSV_HEADER: &str = "t,oracle_calls,dist_sq_last,dist_sq_avg_lead,dist_sq_avg_base,err_res";

fn write_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut out = String::with_capacity(64 * (traj.rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &traj.rows {
        let err = r.err_res.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.t, r.oracle_calls, r.dist_sq_last, r.dist_sq_avg_lead, r.dist_sq_avg_base, err
        ));
    }
    write_file(path, &out)
}

/// Rows of `(t, calls_mean, dist_sq_last, dist_sq_avg_lead, dist_sq_avg_base)`
/// averaged over seeds; all seeds share the recording grid.
fn mean_rows(runs: &[&SeedRun]) -> Vec<(f64, f64, f64, f64, f64)> {
    let n = runs.len() as f64;
    let rows0 = &runs[0].traj.rows;
    (0..rows0.len())
        .map(|i| {
            let mut acc = (rows0[i].t as f64, 0.0, 0.0, 0.0, 0.0);
            for sr in runs {
                let r = &sr.traj.rows[i];
                acc.1 += r.oracle_calls as f64;
                acc.2 += r.dist_sq_last;
                acc.3 += r.dist_sq_avg_lead;
                acc.4 += r.dist_sq_avg_base;
            }
            (acc.0, acc.1 / n, acc.2 / n, acc.3 / n, acc.4 / n)
        })
        .collect()
}

fn write_mean_csv(path: &Path, runs: &[&SeedRun]) -> Result<()> {
    let mut out = String::new();
    out.push_str("t,oracle_calls,dist_sq_last,dist_sq_avg_lead,dist_sq_avg_base\n");
    for (t, calls, last, lead, base) in mean_rows(runs) {
        out.push_str(&format!("{t},{calls},{last},{lead},{base}\n"));
    }
    write_file(path, &out)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Error::InvalidArgument(format!("cannot write {}: {e}", path.display())))
}

/// Max over iterations of the relative distance between base iterates of any
/// two algorithms (same seed), using the recorded states.
fn pairwise_deviation(by_algo: &BTreeMap<String, Vec<&SeedRun>>) -> f64 {
    let groups: Vec<&Vec<&SeedRun>> = by_algo.values().collect();
    let mut worst = 0.0f64;
    for i in 0..groups.len() {
        for j in (i + 1)..groups.len() {
            for (a, b) in groups[i].iter().zip(groups[j].iter()) {
                let (Some(sa), Some(sb)) = (&a.traj.states, &b.traj.states) else {
                    continue;
                };
                for (xa, xb) in sa.bases.iter().zip(sb.bases.iter()) {
                    let rel = (xa - xb).norm() / xa.norm().max(1.0);
                    worst = worst.max(rel);
                }
            }
        }
    }
    worst
}
