use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use extragrad::algorithm::{init_with_lead_seed, run_from, AlgorithmKind, MetricSelector};
use extragrad::config::{execute, RunConfig};
use extragrad::merit::{fit_rate, FitScale};
use extragrad::oracle::{NoiseModel, Oracle};
use extragrad::problems::make_strongly_monotone_quadratic;
use extragrad::schedule::{validate, RateGuarantee, StepSchedule};
use extragrad::verify::{
    check_chung_recurrence, check_descent_along_run, check_lemma_four_point,
    check_lemma_three_point, FourPointPart, InequalityReport,
};
use extragrad::vi::Vector;
use extragrad::Error;

/// Override for the run-command output directory.
const OUTPUT_DIR_ENV: &str = "EXTRAGRAD_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "extragrad", about = "Extra-gradient solvers for variational inequalities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the runs described by a JSON config file.
    Run { config: PathBuf },
    /// Numerically check the inequalities behind the convergence guarantees.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fault injection: corrupt projections to prove violations are caught.
        #[arg(long, hide = true, default_value_t = 0.0)]
        corrupt_projection: f64,
    },
    /// Fit a convergence rate to a column of a run CSV.
    Fit {
        csv: PathBuf,
        #[arg(long)]
        column: String,
        #[arg(long, value_enum)]
        scale: ScaleArg,
        /// Inclusive t-window "A:B"; defaults to all rows.
        #[arg(long)]
        window: Option<String>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Lemmas,
    Descent,
    Chung,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Loglog,
    Semilog,
}

impl From<ScaleArg> for FitScale {
    fn from(s: ScaleArg) -> FitScale {
        match s {
            ScaleArg::Loglog => FitScale::LogLog,
            ScaleArg::Semilog => FitScale::SemiLog,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::Verify { suite, trials, seed, corrupt_projection } => {
            cmd_verify(suite, trials, seed, corrupt_projection)
        }
        Command::Fit { csv, column, scale, window } => {
            cmd_fit(&csv, &column, scale.into(), window.as_deref())
        }
    }
}

fn cmd_run(path: &PathBuf) -> ExitCode {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    let config = match RunConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: config parse failed at line {}, column {}: {e}", e.line(), e.column());
            return ExitCode::from(2);
        }
    };
    if let Err(e) = config.validate() {
        eprintln!("error: invalid config: {e}");
        return ExitCode::from(2);
    }
    print_schedule_warnings(&config);

    let out_dir = std::env::var(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|_| PathBuf::from(&config.output_dir));
    match execute(&config, &out_dir) {
        Ok(summary) => {
            println!("wrote artifacts to {}", out_dir.display());
            for (name, s) in &summary.algorithms {
                let slope = s
                    .dist_sq_last_fit
                    .map(|f| format!("{:.4}", f.slope))
                    .unwrap_or_else(|| "n/a".into());
                println!(
                    "{name}: final dist_sq mean {:.6e}, last-iterate slope {slope}",
                    s.final_dist_sq_mean
                );
            }
            if let Some(dev) = summary.max_pairwise_deviation {
                println!("max pairwise iterate deviation: {dev:.3e}");
            }
            ExitCode::SUCCESS
        }
        Err(Error::RunFailure { t, msg }) => {
            eprintln!("error: run diverged at iteration {t}: {msg}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Guarantee-side step conditions are advisory for arbitrary configs.
fn print_schedule_warnings(config: &RunConfig) {
    let problem = match config.problem.build() {
        Ok(p) => p,
        Err(_) => return,
    };
    let guarantee = match config.schedule {
        StepSchedule::Constant { .. } => RateGuarantee::DetErgodic,
        StepSchedule::InverseLinear { .. } => RateGuarantee::StochGlobal,
    };
    for &kind in &config.algorithms {
        let v = validate(&config.schedule, &problem, kind, guarantee);
        if !v.satisfied {
            for c in v.conditions.iter().filter(|c| !c.ok) {
                eprintln!(
                    "warning: {}: step condition not met: {} (required {:.6}, actual {:.6})",
                    kind.name(),
                    c.name,
                    c.required,
                    c.actual
                );
            }
        }
    }
}

fn print_report(rep: &InequalityReport) -> bool {
    println!(
        "{}: trials {}, violations {}, worst slack {:.3e} (tolerance {:.0e})",
        rep.name, rep.trials, rep.violations, rep.worst_slack, rep.tolerance
    );
    rep.ok()
}

fn cmd_verify(suite: Suite, trials: u64, seed: u64, corruption: f64) -> ExitCode {
    let mut ok = true;

    if matches!(suite, Suite::Lemmas | Suite::All) {
        ok &= print_report(&check_lemma_three_point(trials, seed, corruption));
        ok &= print_report(&check_lemma_four_point(trials, seed.wrapping_add(1), FourPointPart::A));
        ok &= print_report(&check_lemma_four_point(trials, seed.wrapping_add(2), FourPointPart::B));
    }

    if matches!(suite, Suite::Descent | Suite::All) {
        match descent_report(seed, corruption) {
            Ok(rep) => ok &= print_report(&rep),
            Err(e) => {
                eprintln!("error: descent check failed to run: {e}");
                ok = false;
            }
        }
    }

    if matches!(suite, Suite::Chung | Suite::All) {
        for (q, c_prime) in [(2.0, 1.0), (3.0, 4.0), (1.5, 0.5)] {
            match check_chung_recurrence(q, 1.0, c_prime, 0.0, 1_000_000) {
                Ok((limsup, bound)) => {
                    let pass = limsup <= 1.01 * bound;
                    println!(
                        "chung q={q} c'={c_prime}: limsup t*a_t = {limsup:.6} vs bound {bound:.6} -> {}",
                        if pass { "ok" } else { "VIOLATION" }
                    );
                    ok &= pass;
                }
                Err(e) => {
                    eprintln!("error: chung check failed: {e}");
                    ok = false;
                }
            }
        }
    }

    if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}

/// Quasi-descent check along a deterministic PEG run under the step-size
/// hypothesis, with a distinct lead seed so the first telescoping term is
/// exercised.
fn descent_report(seed: u64, corruption: f64) -> extragrad::Result<InequalityReport> {
    let problem = Arc::new(make_strongly_monotone_quadratic(10, 1.0, 4.0, seed.wrapping_add(7))?);
    let gamma = 1.0 / 16.0;
    let oracle = Oracle::new(problem.clone(), NoiseModel::None, seed);
    let schedule = StepSchedule::constant(gamma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(13));
    let ball = extragrad::vi::ConvexSet::ball(Vector::zeros(10), 2.0)
        .expect("probe ball");
    let x0 = ball.sample(&mut rng);
    let mut x_half = ball.sample(&mut rng) * 0.1 + &x0;
    x_half[0] += corruption;
    let selector = MetricSelector { store_states: true, ..Default::default() };
    let (state, calls) = init_with_lead_seed(AlgorithmKind::Peg, &x0, &x_half, &oracle, 0)?;
    let traj = run_from(AlgorithmKind::Peg, &oracle, &schedule, state, 500, &selector, 0, calls)?;
    check_descent_along_run(&traj, &problem, gamma, 1e-9)
}

fn cmd_fit(csv: &PathBuf, column: &str, scale: FitScale, window: Option<&str>) -> ExitCode {
    let text = match std::fs::read_to_string(csv) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", csv.display());
            return ExitCode::from(2);
        }
    };
    let mut lines = text.lines();
    let header: Vec<&str> = match lines.next() {
        Some(h) => h.split(',').collect(),
        None => {
            eprintln!("error: empty csv");
            return ExitCode::from(2);
        }
    };
    let Some(t_idx) = header.iter().position(|&c| c == "t") else {
        eprintln!("error: csv lacks a t column");
        return ExitCode::from(2);
    };
    let Some(col_idx) = header.iter().position(|&c| c == column) else {
        eprintln!("error: no column named {column} (have: {})", header.join(", "));
        return ExitCode::from(2);
    };

    let mut points = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            eprintln!("error: line {}: expected {} fields, got {}", lineno + 2, header.len(), fields.len());
            return ExitCode::from(2);
        }
        let raw = fields[col_idx].trim();
        if raw.is_empty() {
            continue;
        }
        let t: f64 = match fields[t_idx].trim().parse() {
            Ok(v) => v,
            Err(e) => {
                eprintln!("error: line {}: bad t value: {e}", lineno + 2);
                return ExitCode::from(2);
            }
        };
        let v: f64 = match raw.parse() {
            Ok(v) => v,
            Err(e) => {
                eprintln!("error: line {}: bad {column} value: {e}", lineno + 2);
                return ExitCode::from(2);
            }
        };
        points.push((t, v));
    }

    let window = match window {
        None => {
            let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        }
        Some(w) => {
            let parts: Vec<&str> = w.split(':').collect();
            let parsed = if parts.len() == 2 {
                parts[0].parse::<f64>().ok().zip(parts[1].parse::<f64>().ok())
            } else {
                None
            };
            match parsed {
                Some(p) => p,
                None => {
                    eprintln!("error: window must look like A:B with numeric bounds");
                    return ExitCode::from(2);
                }
            }
        }
    };

    if let Some(&(t, v)) = points
        .iter()
        .find(|&&(t, v)| t >= window.0 && t <= window.1 && !(v > 0.0))
    {
        eprintln!("error: nonpositive value {v} at t = {t} inside the window");
        return ExitCode::from(4);
    }

    match fit_rate(&points, scale, window) {
        Ok(fit) => {
            println!(
                "slope {:.6}, intercept {:.6}, r^2 {:.6}, window [{}, {}], points {}",
                fit.slope, fit.intercept, fit.r_squared, window.0, window.1, fit.n_points
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
