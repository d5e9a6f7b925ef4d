//! Numerical checks of the inequalities the convergence analysis rests on:
//! the projection lemmas, the quasi-descent inequality along actual runs, and
//! the scalar recurrence giving the O(1/t) stochastic rate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::algorithm::Trajectory;
use crate::error::{Error, Result};
use crate::vi::{standard_normal, ConvexSet, VIProblem, Vector};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
const TRIAL_DIM: usize = 5;

#[derive(Debug, Clone, serde::Serialize)]
pub struct InequalityReport {
    pub name: String,
    pub trials: u64,
    pub violations: u64,
    /// Most negative margin seen (negative margins are violations once they
    /// pass the tolerance).
    pub worst_slack: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl InequalityReport {
    pub fn ok(&self) -> bool {
        self.violations == 0
    }
}

fn random_set(rng: &mut ChaCha8Rng) -> ConvexSet {
    if rng_bool(rng) {
        let center = gaussian(TRIAL_DIM, rng);
        let radius = 0.5 + 2.0 * uniform(rng);
        ConvexSet::ball(center, radius).expect("positive radius")
    } else {
        let a = gaussian(TRIAL_DIM, rng);
        let b = gaussian(TRIAL_DIM, rng);
        let lower = a.zip_map(&b, f64::min);
        let upper = a.zip_map(&b, f64::max) + Vector::from_element(TRIAL_DIM, 0.1);
        ConvexSet::box_set(lower, upper).expect("ordered bounds")
    }
}

fn gaussian(dim: usize, rng: &mut ChaCha8Rng) -> Vector {
    Vector::from_fn(dim, |_, _| standard_normal(rng))
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    use rand::Rng;
    rng.gen::<f64>()
}

fn rng_bool(rng: &mut ChaCha8Rng) -> bool {
    use rand::Rng;
    rng.gen::<bool>()
}

/// Projection inequality: with `x+ = proj_C(x - y)` and any `p in C`,
/// `|x+ - p|^2 <= |x - p|^2 - 2<y, x+ - p> - |x+ - x|^2`.
/// `corruption` shifts the projection output and exists only to prove the
/// harness can detect a broken projection; pass 0 for the real check.
pub fn check_lemma_three_point(trials: u64, seed: u64, corruption: f64) -> InequalityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let set = random_set(&mut rng);
        let x = gaussian(TRIAL_DIM, &mut rng) * 2.0;
        let y = gaussian(TRIAL_DIM, &mut rng) * 2.0;
        let p = set.sample(&mut rng);
        let mut xp = set.project(&(&x - &y)).expect("projection");
        xp[0] += corruption;
        let lhs = (&xp - &p).norm_squared();
        let rhs = (&x - &p).norm_squared() - 2.0 * y.dot(&(&xp - &p)) - (&xp - &x).norm_squared();
        let margin = rhs - lhs;
        worst = worst.min(margin);
        if margin < -DEFAULT_TOLERANCE {
            violations += 1;
        }
    }
    InequalityReport {
        name: "three_point".into(),
        trials,
        violations,
        worst_slack: worst,
        tolerance: DEFAULT_TOLERANCE,
        seed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FourPointPart {
    /// Second projection onto the whole space: an exact identity.
    A,
    /// Both projections onto the same set: two inequalities, the tight form
    /// with the cross term and its Young relaxation.
    B,
}

/// Two-projection inequality with `x1 = proj_C1(x - y1)`, `x2 = proj_C2(x - y2)`.
pub fn check_lemma_four_point(trials: u64, seed: u64, part: FourPointPart) -> InequalityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let c1 = random_set(&mut rng);
        let x = gaussian(TRIAL_DIM, &mut rng) * 2.0;
        let y1 = gaussian(TRIAL_DIM, &mut rng) * 2.0;
        let y2 = gaussian(TRIAL_DIM, &mut rng) * 2.0;
        let x1 = c1.project(&(&x - &y1)).expect("projection");
        let margin = match part {
            FourPointPart::A => {
                let x2 = &x - &y2;
                let p = gaussian(TRIAL_DIM, &mut rng) * 2.0;
                let lhs = (&x2 - &p).norm_squared();
                let rhs = (&x - &p).norm_squared() - 2.0 * y2.dot(&(&x1 - &p))
                    + (&x2 - &x1).norm_squared()
                    - (&x1 - &x).norm_squared();
                -(lhs - rhs).abs()
            }
            FourPointPart::B => {
                let x2 = c1.project(&(&x - &y2)).expect("projection");
                let p = c1.sample(&mut rng);
                let lhs = (&x2 - &p).norm_squared();
                let common = (&x - &p).norm_squared()
                    - 2.0 * y2.dot(&(&x1 - &p))
                    - (&x1 - &x).norm_squared();
                let tight = common + 2.0 * (&y2 - &y1).dot(&(&x1 - &x2))
                    - (&x2 - &x1).norm_squared();
                let relaxed = common + (&y2 - &y1).norm_squared();
                (tight - lhs).min(relaxed - lhs)
            }
        };
        worst = worst.min(margin);
        if margin < -DEFAULT_TOLERANCE {
            violations += 1;
        }
    }
    InequalityReport {
        name: match part {
            FourPointPart::A => "four_point_a".into(),
            FourPointPart::B => "four_point_b".into(),
        },
        trials,
        violations,
        worst_slack: worst,
        tolerance: DEFAULT_TOLERANCE,
        seed,
    }
}

/// Iterates `a_{t+1} = (1 - q/(t+b)) a_t + c'/(t+b)^2` with equality (the
/// worst case the recurrence allows) and returns the max of `t * a_t` over the
/// last decade together with the claimed asymptotic bound `c'/(q-1)`.
pub fn check_chung_recurrence(
    q: f64,
    b: f64,
    c_prime: f64,
    a_init: f64,
    t_max: u64,
) -> Result<(f64, f64)> {
    if !(q > 1.0) {
        return Err(Error::InvalidArgument(format!("recurrence needs q > 1, got {q}")));
    }
    if !(c_prime >= 0.0) || !(b >= 0.0) {
        return Err(Error::InvalidArgument("b and c' must be nonnegative".into()));
    }
    if t_max < 1000 {
        return Err(Error::InvalidArgument("t_max must be >= 1000".into()));
    }
    // start where the contraction factor enters (0, 1)
    let t0 = (1u64..).find(|&t| (t as f64 + b) > q).expect("finite start");
    let mut a = a_init;
    let mut max_ta = f64::NEG_INFINITY;
    let last_decade = t_max / 10;
    for t in t0..=t_max {
        if t >= last_decade {
            max_ta = max_ta.max(t as f64 * a);
        }
        let denom = t as f64 + b;
        a = (1.0 - q / denom) * a + c_prime / (denom * denom);
    }
    Ok((max_ta, c_prime / (q - 1.0)))
}

/// Quasi-descent inequality along a recorded trajectory with constant step:
/// `|X_{t+1} - p|^2 <= |X_t - p|^2 - 2g <V(X_{t+1/2}), X_{t+1/2} - p> + tau_t - tau_{t+1}`
/// with `tau_1 = 4 g^2 L^2 |X_1 - X_{1/2}|^2` and
/// `tau_t = g^2 L^2 |X_{t-1/2} - X_{t-3/2}|^2` afterwards. Needs recorded
/// states, the Lipschitz constant and a known solution as the trial point.
pub fn check_descent_along_run(
    traj: &Trajectory,
    problem: &VIProblem,
    gamma: f64,
    tol: f64,
) -> Result<InequalityReport> {
    let states = traj
        .states
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("trajectory lacks recorded states".into()))?;
    let l = problem
        .lipschitz
        .ok_or_else(|| Error::InvalidArgument("problem lacks a Lipschitz constant".into()))?;
    let p = problem
        .known_solution
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("problem lacks a known solution".into()))?;
    let gl2 = gamma * gamma * l * l;
    let t_max = states.bases.len();
    let base_at = |t: usize| if t == 1 { &states.start } else { &states.bases[t - 2] };
    let lead_at = |t2: usize| {
        // t2 indexes half-integers: lead_at(t) is X_{t+1/2}, with t = 0 the seed
        if t2 == 0 { &states.lead_seed } else { &states.leads[t2 - 1] }
    };

    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for t in 1..=t_max {
        let tau_t = if t == 1 {
            4.0 * gl2 * (&states.start - &states.lead_seed).norm_squared()
        } else {
            gl2 * (lead_at(t - 1) - lead_at(t - 2)).norm_squared()
        };
        let tau_next = gl2 * (lead_at(t) - lead_at(t - 1)).norm_squared();
        let lead = lead_at(t);
        let v = problem.eval(lead)?;
        let lhs = (&states.bases[t - 1] - p).norm_squared();
        let rhs = (base_at(t) - p).norm_squared() - 2.0 * gamma * v.dot(&(lead - p)) + tau_t
            - tau_next;
        let margin = rhs - lhs;
        worst = worst.min(margin);
        if margin < -tol {
            violations += 1;
        }
    }
    Ok(InequalityReport {
        name: "descent_along_run".into(),
        trials: t_max as u64,
        violations,
        worst_slack: worst,
        tolerance: tol,
        seed: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithm::{init_with_lead_seed, run, run_from, AlgorithmKind, MetricSelector};
    use crate::oracle::{NoiseModel, Oracle};
    use crate::problems::make_strongly_monotone_quadratic;
    use crate::schedule::StepSchedule;
    use std::sync::Arc;

    #[test]
    fn three_point_holds_over_random_trials() {
        let rep = check_lemma_three_point(10_000, 1, 0.0);
        assert_eq!(rep.violations, 0, "worst slack {}", rep.worst_slack);
    }

    #[test]
    fn three_point_whole_space_is_an_identity() {
        // x+ = x - y turns the inequality into an equality
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let x = gaussian(TRIAL_DIM, &mut rng);
            let y = gaussian(TRIAL_DIM, &mut rng);
            let p = gaussian(TRIAL_DIM, &mut rng);
            let xp = &x - &y;
            let lhs = (&xp - &p).norm_squared();
            let rhs =
                (&x - &p).norm_squared() - 2.0 * y.dot(&(&xp - &p)) - (&xp - &x).norm_squared();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn corrupted_projection_is_caught() {
        let rep = check_lemma_three_point(10_000, 1, 1e-2);
        assert!(rep.violations > 0);
        assert!(rep.worst_slack < -DEFAULT_TOLERANCE);
    }

    #[test]
    fn four_point_part_a_equality() {
        let rep = check_lemma_four_point(10_000, 3, FourPointPart::A);
        assert_eq!(rep.violations, 0, "worst slack {}", rep.worst_slack);
        assert!(rep.worst_slack > -1e-10);
    }

    #[test]
    fn four_point_part_b_inequalities() {
        let rep = check_lemma_four_point(10_000, 4, FourPointPart::B);
        assert_eq!(rep.violations, 0, "worst slack {}", rep.worst_slack);
    }

    #[test]
    fn chung_unit_case_bound() {
        let (limsup, bound) = check_chung_recurrence(2.0, 1.0, 1.0, 0.0, 1_000_000).unwrap();
        assert_eq!(bound, 1.0);
        assert!(limsup <= 1.01, "limsup {limsup}");
        assert!(limsup > 0.9, "limsup {limsup} suspiciously small");
    }

    #[test]
    fn chung_homogeneous_case_decays_faster() {
        let (limsup, bound) = check_chung_recurrence(2.0, 1.0, 0.0, 1.0, 100_000).unwrap();
        assert_eq!(bound, 0.0);
        assert!(limsup < 1e-3, "t * a_t should vanish, got {limsup}");
    }

    #[test]
    fn chung_rejects_bad_hypotheses() {
        assert!(check_chung_recurrence(1.0, 1.0, 1.0, 0.0, 10_000).is_err());
        assert!(check_chung_recurrence(0.5, 1.0, 1.0, 0.0, 10_000).is_err());
        assert!(check_chung_recurrence(2.0, 1.0, 1.0, 0.0, 100).is_err());
    }

    fn peg_trajectory(gamma: f64, t: u64) -> (Trajectory, Arc<VIProblem>) {
        let problem = Arc::new(make_strongly_monotone_quadratic(6, 1.0, 4.0, 11).unwrap());
        let oracle = Oracle::new(problem.clone(), NoiseModel::None, 0);
        let sched = StepSchedule::constant(gamma).unwrap();
        let sel = MetricSelector { store_states: true, ..Default::default() };
        let x0 = Vector::from_fn(6, |i, _| 1.0 / (i + 1) as f64);
        // the descent analysis takes V(X_{1/2}) as the first carried feedback
        let (state, calls) =
            init_with_lead_seed(AlgorithmKind::Peg, &x0, &x0, &oracle, 0).unwrap();
        let traj =
            run_from(AlgorithmKind::Peg, &oracle, &sched, state, t, &sel, 0, calls).unwrap();
        (traj, problem)
    }

    #[test]
    fn descent_holds_under_step_hypothesis() {
        // gamma = 1/(4L) is well inside the gamma <= 1/(2L) hypothesis
        let (traj, problem) = peg_trajectory(1.0 / 16.0, 500);
        let rep = check_descent_along_run(&traj, &problem, 1.0 / 16.0, 1e-9).unwrap();
        assert_eq!(rep.violations, 0, "worst slack {}", rep.worst_slack);
    }

    #[test]
    fn descent_zero_operator_all_margins_zero() {
        let dim = 3;
        let mut p = VIProblem::new(ConvexSet::whole_space(dim), move |_: &Vector| {
            Vector::zeros(dim)
        });
        p.lipschitz = Some(1.0);
        p.known_solution = Some(Vector::zeros(dim));
        let problem = Arc::new(p);
        let oracle = Oracle::new(problem.clone(), NoiseModel::None, 0);
        let sched = StepSchedule::constant(0.1).unwrap();
        let sel = MetricSelector { store_states: true, ..Default::default() };
        let traj = run(
            AlgorithmKind::Peg,
            &oracle,
            &sched,
            &Vector::from_element(dim, 0.7),
            50,
            &sel,
            0,
        )
        .unwrap();
        let rep = check_descent_along_run(&traj, &problem, 0.1, 1e-12).unwrap();
        assert_eq!(rep.violations, 0);
        assert!(rep.worst_slack.abs() < 1e-12);
    }

    #[test]
    fn descent_broken_hypothesis_is_informational() {
        // gamma = 2/L breaks the hypothesis; the check must still run and
        // report whatever it sees
        let (traj, problem) = peg_trajectory(0.5, 200);
        let rep = check_descent_along_run(&traj, &problem, 0.5, 1e-9).unwrap();
        assert_eq!(rep.trials, 200);
    }

    #[test]
    fn descent_requires_recorded_states() {
        let problem = Arc::new(make_strongly_monotone_quadratic(4, 1.0, 4.0, 1).unwrap());
        let oracle = Oracle::new(problem.clone(), NoiseModel::None, 0);
        let sched = StepSchedule::constant(0.05).unwrap();
        let traj = run(
            AlgorithmKind::Peg,
            &oracle,
            &sched,
            &Vector::from_element(4, 1.0),
            10,
            &MetricSelector::default(),
            0,
        )
        .unwrap();
        assert!(check_descent_along_run(&traj, &problem, 0.05, 1e-9).is_err());
    }
}
