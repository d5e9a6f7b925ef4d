//! Extra-gradient iteration kernels (two-call EG and the single-call PEG, RG
//! and OG variants) over a shared base/leading state machine, plus the run
//! loop with metric recording and ergodic averaging.

use crate::error::{Error, Result};
use crate::merit::{self, MeritConfig};
use crate::oracle::{Oracle, StreamKey};
use crate::schedule::StepSchedule;
use crate::vi::{check_finite, VIProblem, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    /// Extra-Gradient: two projections, two oracle calls per iteration.
    Eg,
    /// Past Extra-Gradient: reuse the previous leading-state feedback.
    Peg,
    /// Reflected Gradient: unprojected reflection of successive base states.
    Rg,
    /// Optimistic Gradient: past feedback plus an unprojected base update.
    Og,
}

impl AlgorithmKind {
    pub fn is_single_call(self) -> bool {
        !matches!(self, AlgorithmKind::Eg)
    }

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::Eg => "eg",
            AlgorithmKind::Peg => "peg",
            AlgorithmKind::Rg => "rg",
            AlgorithmKind::Og => "og",
        }
    }
}

/// State after `t` completed iterations. `base` is X_{t+1}, `lead` the most
/// recent leading state X_{t+1/2} (the lead seed X_{1/2} at t = 0).
#[derive(Debug, Clone)]
pub struct IterState {
    pub base: Vector,
    pub lead: Vector,
    /// Realized feedback V_{t-1/2}, carried by PEG and OG.
    pub carried: Option<Vector>,
    /// Previous base state, carried by RG.
    pub prev_base: Option<Vector>,
    pub t: u64,
}

/// Default initialization: equal starting states with zero carried feedback
/// (the convention under which the single-call variants coincide without
/// constraints).
pub fn init(kind: AlgorithmKind, x_start: &Vector, problem: &VIProblem) -> Result<IterState> {
    if !problem.set.contains(x_start, 1e-8) {
        let dist = (problem.set.project(x_start)? - x_start).norm();
        return Err(Error::Infeasible { dist });
    }
    let zeros = Vector::zeros(x_start.len());
    Ok(IterState {
        base: x_start.clone(),
        lead: x_start.clone(),
        carried: match kind {
            AlgorithmKind::Peg | AlgorithmKind::Og => Some(zeros),
            _ => None,
        },
        prev_base: match kind {
            AlgorithmKind::Rg => Some(x_start.clone()),
            _ => None,
        },
        t: 0,
    })
}

/// Alternate initialization with a distinct lead seed X_{1/2}: PEG and OG
/// query the oracle once at the seed for their first carried feedback, RG
/// uses it as X_0. Returns the state and the number of oracle calls spent.
pub fn init_with_lead_seed(
    kind: AlgorithmKind,
    x_start: &Vector,
    lead_seed: &Vector,
    oracle: &Oracle,
    run_id: u64,
) -> Result<(IterState, u64)> {
    let mut state = init(kind, x_start, oracle.problem())?;
    state.lead = lead_seed.clone();
    match kind {
        AlgorithmKind::Peg | AlgorithmKind::Og => {
            let v = oracle.query(lead_seed, StreamKey::lead(run_id, 0))?;
            state.carried = Some(v);
            Ok((state, 1))
        }
        AlgorithmKind::Rg => {
            state.prev_base = Some(lead_seed.clone());
            Ok((state, 0))
        }
        AlgorithmKind::Eg => Ok((state, 0)),
    }
}

/// One iteration of the selected kernel. Returns the new state and the number
/// of oracle calls consumed.
pub fn step(
    kind: AlgorithmKind,
    state: &IterState,
    oracle: &Oracle,
    run_id: u64,
    gamma: f64,
) -> Result<(IterState, u64)> {
    match kind {
        AlgorithmKind::Eg => step_eg(state, oracle, run_id, gamma),
        AlgorithmKind::Peg => step_peg(state, oracle, run_id, gamma),
        AlgorithmKind::Rg => step_rg(state, oracle, run_id, gamma),
        AlgorithmKind::Og => step_og(state, oracle, run_id, gamma),
    }
}

pub fn step_eg(
    state: &IterState,
    oracle: &Oracle,
    run_id: u64,
    gamma: f64,
) -> Result<(IterState, u64)> {
    let set = &oracle.problem().set;
    let t = state.t + 1;
    let vb = oracle.query(&state.base, StreamKey::base(run_id, t))?;
    let lead = set.project(&(&state.base - vb * gamma))?;
    let vl = oracle.query(&lead, StreamKey::lead(run_id, t))?;
    let base = set.project(&(&state.base - vl * gamma))?;
    Ok((IterState { base, lead, carried: None, prev_base: None, t }, 2))
}

pub fn step_peg(
    state: &IterState,
    oracle: &Oracle,
    run_id: u64,
    gamma: f64,
) -> Result<(IterState, u64)> {
    let set = &oracle.problem().set;
    let t = state.t + 1;
    let carried = state
        .carried
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("PEG state lacks carried feedback".into()))?;
    let lead = set.project(&(&state.base - carried * gamma))?;
    let v = oracle.query(&lead, StreamKey::lead(run_id, t))?;
    let base = set.project(&(&state.base - &v * gamma))?;
    Ok((IterState { base, lead, carried: Some(v), prev_base: None, t }, 1))
}

pub fn step_rg(
    state: &IterState,
    oracle: &Oracle,
    run_id: u64,
    gamma: f64,
) -> Result<(IterState, u64)> {
    let set = &oracle.problem().set;
    let t = state.t + 1;
    let prev = state
        .prev_base
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("RG state lacks previous base".into()))?;
    // unprojected reflection
    let lead = &state.base * 2.0 - prev;
    let v = oracle.query(&lead, StreamKey::lead(run_id, t))?;
    let base = set.project(&(&state.base - v * gamma))?;
    Ok((IterState {
        base,
        lead,
        carried: None,
        prev_base: Some(state.base.clone()),
        t,
    }, 1))
}

pub fn step_og(
    state: &IterState,
    oracle: &Oracle,
    run_id: u64,
    gamma: f64,
) -> Result<(IterState, u64)> {
    let set = &oracle.problem().set;
    let t = state.t + 1;
    let carried = state
        .carried
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("OG state lacks carried feedback".into()))?;
    let lead = set.project(&(&state.base - carried * gamma))?;
    let v = oracle.query(&lead, StreamKey::lead(run_id, t))?;
    // unprojected base update
    let base = &lead + carried * gamma - &v * gamma;
    Ok((IterState { base, lead, carried: Some(v), prev_base: None, t }, 1))
}

/// What to record along a run.
#[derive(Clone, Default)]
pub struct MetricSelector {
    /// Compute the restricted error of the ergodic lead average on a sparse
    /// geometric grid (the inner maximization is expensive).
    pub err_res: Option<MeritConfig>,
    /// Keep every base/lead state (for inequality checks on short runs).
    pub store_states: bool,
    /// Track whether every leading state stays inside this ball.
    pub stay_ball: Option<(Vector, f64)>,
}

#[derive(Debug, Clone)]
pub struct MetricRow {
    pub t: u64,
    pub oracle_calls: u64,
    pub dist_sq_last: f64,
    pub dist_sq_avg_lead: f64,
    pub dist_sq_avg_base: f64,
    pub err_res: Option<f64>,
}

/// Full state history of a run (only on request).
#[derive(Debug, Clone)]
pub struct RecordedStates {
    /// X_{1/2}
    pub lead_seed: Vector,
    /// X_1
    pub start: Vector,
    /// leads[t-1] = X_{t+1/2}
    pub leads: Vec<Vector>,
    /// bases[t-1] = X_{t+1}
    pub bases: Vec<Vector>,
}

#[derive(Clone)]
pub struct Trajectory {
    pub kind: AlgorithmKind,
    pub rows: Vec<MetricRow>,
    pub oracle_calls: u64,
    /// Running mean of the leading states X_{s+1/2}, s = 1..t.
    pub ergodic_lead: Vector,
    /// Running mean of the base states X_s, s = 1..t.
    pub ergodic_base: Vector,
    pub final_state: IterState,
    pub states: Option<RecordedStates>,
    /// Whether every leading state stayed inside the selector's ball.
    pub stayed: Option<bool>,
}

/// Runs `t_max` iterations from the default initialization.
pub fn run(
    kind: AlgorithmKind,
    oracle: &Oracle,
    schedule: &StepSchedule,
    x_start: &Vector,
    t_max: u64,
    selector: &MetricSelector,
    run_id: u64,
) -> Result<Trajectory> {
    let state = init(kind, x_start, oracle.problem())?;
    run_from(kind, oracle, schedule, state, t_max, selector, run_id, 0)
}

/// Runs from an explicit initial state (see [`init_with_lead_seed`]);
/// `initial_calls` accounts for any oracle call spent during initialization.
#[allow(clippy::too_many_arguments)]
pub fn run_from(
    kind: AlgorithmKind,
    oracle: &Oracle,
    schedule: &StepSchedule,
    init_state: IterState,
    t_max: u64,
    selector: &MetricSelector,
    run_id: u64,
    initial_calls: u64,
) -> Result<Trajectory> {
    if t_max == 0 {
        return Err(Error::InvalidArgument("t_max must be >= 1".into()));
    }
    let problem = oracle.problem();
    let solution = problem.known_solution.clone();

    let mut state = init_state;
    let mut calls = initial_calls;
    let mut mean_lead = Vector::zeros(problem.dim());
    let mut mean_base = Vector::zeros(problem.dim());
    let mut rows = Vec::new();
    let mut recorded = selector.store_states.then(|| RecordedStates {
        lead_seed: state.lead.clone(),
        start: state.base.clone(),
        leads: Vec::with_capacity(t_max as usize),
        bases: Vec::with_capacity(t_max as usize),
    });

    let mut stayed = selector.stay_ball.as_ref().map(|(c, r)| (&state.lead - c).norm() <= *r);

    // geometric thinning grids for row recording and for the (much more
    // expensive) restricted-error evaluations
    let mut next_row = 1u64;
    let mut next_err = 1u64;

    for t in 1..=t_max {
        let gamma = schedule.step_at(t)?;
        // the base state entering iteration t is X_t
        mean_base += (&state.base - &mean_base) / t as f64;
        let (next, used) = step(kind, &state, oracle, run_id, gamma)
            .map_err(|e| Error::RunFailure { t, msg: e.to_string() })?;
        calls += used;
        state = next;
        check_finite(&state.base)
            .and_then(|_| check_finite(&state.lead))
            .map_err(|e| Error::RunFailure { t, msg: e.to_string() })?;
        mean_lead += (&state.lead - &mean_lead) / t as f64;
        if let (Some(flag), Some((c, r))) = (stayed.as_mut(), selector.stay_ball.as_ref()) {
            if (&state.lead - c).norm() > *r {
                *flag = false;
            }
        }

        if let Some(rec) = recorded.as_mut() {
            rec.leads.push(state.lead.clone());
            rec.bases.push(state.base.clone());
        }

        if t == next_row || t == t_max {
            check_feasibility(kind, &state, problem, t)?;
            let err_res = match &selector.err_res {
                Some(cfg) if t >= next_err || t == t_max => {
                    while next_err <= t {
                        next_err = (next_err + 1).max((next_err as f64 * 1.12).ceil() as u64);
                    }
                    Some(merit::restricted_error(&mean_lead, problem, cfg)?)
                }
                _ => None,
            };
            let (d_last, d_avg_lead, d_avg_base) = match &solution {
                Some(sol) => (
                    (&state.base - sol).norm_squared(),
                    (&mean_lead - sol).norm_squared(),
                    (&mean_base - sol).norm_squared(),
                ),
                None => (f64::NAN, f64::NAN, f64::NAN),
            };
            rows.push(MetricRow {
                t,
                oracle_calls: calls,
                dist_sq_last: d_last,
                dist_sq_avg_lead: d_avg_lead,
                dist_sq_avg_base: d_avg_base,
                err_res,
            });
            while next_row <= t {
                next_row += 1 + (next_row / 100).max(0);
            }
        }
    }

    Ok(Trajectory {
        kind,
        rows,
        oracle_calls: calls,
        ergodic_lead: mean_lead,
        ergodic_base: mean_base,
        final_state: state,
        states: recorded,
        stayed,
    })
}

/// Feasibility contract per kernel: EG/PEG keep base and lead feasible, RG
/// only the base, OG only the lead.
fn check_feasibility(kind: AlgorithmKind, state: &IterState, problem: &VIProblem, t: u64) -> Result<()> {
    let tol = 1e-8;
    let (check_base, check_lead) = match kind {
        AlgorithmKind::Eg | AlgorithmKind::Peg => (true, true),
        AlgorithmKind::Rg => (true, false),
        AlgorithmKind::Og => (false, true),
    };
    if check_base && !problem.set.contains(&state.base, tol) {
        return Err(Error::RunFailure { t, msg: "base state drifted out of the set".into() });
    }
    if check_lead && !problem.set.contains(&state.lead, tol) {
        return Err(Error::RunFailure { t, msg: "lead state drifted out of the set".into() });
    }
    Ok(())
}
