//! Step-size rules and validation of the conditions each convergence
//! guarantee places on them.

use crate::algorithm::AlgorithmKind;
use crate::error::{Error, Result};
use crate::vi::VIProblem;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant { gamma: f64 },
    /// `gamma_t = gamma / (t + b)` for t >= 1.
    InverseLinear { gamma: f64, b: f64 },
}

impl StepSchedule {
    pub fn constant(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidArgument(format!("gamma must be > 0, got {gamma}")));
        }
        Ok(StepSchedule::Constant { gamma })
    }

    pub fn inverse_linear(gamma: f64, b: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidArgument(format!("gamma must be > 0, got {gamma}")));
        }
        if !(b >= 0.0) {
            return Err(Error::InvalidArgument(format!("b must be >= 0, got {b}")));
        }
        Ok(StepSchedule::InverseLinear { gamma, b })
    }

    /// Step size at iteration `t` (1-indexed).
    pub fn step_at(&self, t: u64) -> Result<f64> {
        if t == 0 {
            return Err(Error::InvalidArgument("iterations are 1-indexed".into()));
        }
        Ok(match *self {
            StepSchedule::Constant { gamma } => gamma,
            StepSchedule::InverseLinear { gamma, b } => gamma / (t as f64 + b),
        })
    }
}

/// Which guarantee's step-size conditions to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateGuarantee {
    /// Deterministic ergodic rate: constant gamma < 1/(cL), with c depending
    /// on the algorithm variant.
    DetErgodic,
    /// Stochastic strongly monotone rate: gamma_t = gamma/(t+b), gamma > 1/alpha,
    /// b >= 4 L gamma.
    StochGlobal,
}

/// The step-contraction constant `c` in `gamma < 1/(cL)`.
pub fn contraction_constant(kind: AlgorithmKind) -> f64 {
    match kind {
        AlgorithmKind::Rg => 1.0 + std::f64::consts::SQRT_2,
        // EG tolerates gamma < 1/L; we keep the conservative single-call bound
        AlgorithmKind::Eg | AlgorithmKind::Peg | AlgorithmKind::Og => 2.0,
    }
}

#[derive(Debug, Clone)]
pub struct Condition {
    pub name: String,
    pub required: f64,
    pub actual: f64,
    pub ok: bool,
}

#[derive(Debug, Clone)]
pub struct ScheduleValidation {
    pub satisfied: bool,
    pub conditions: Vec<Condition>,
}

impl ScheduleValidation {
    fn from_conditions(conditions: Vec<Condition>) -> Self {
        let satisfied = conditions.iter().all(|c| c.ok);
        ScheduleValidation { satisfied, conditions }
    }
}

/// Checks the guarantee-side step conditions. Failures are reported in the
/// returned value, never thrown.
pub fn validate(
    schedule: &StepSchedule,
    problem: &VIProblem,
    kind: AlgorithmKind,
    guarantee: RateGuarantee,
) -> ScheduleValidation {
    let mut conds = Vec::new();
    match guarantee {
        RateGuarantee::DetErgodic => {
            match problem.lipschitz {
                None => conds.push(missing("lipschitz constant L")),
                Some(l) => {
                    let c = contraction_constant(kind);
                    let bound = 1.0 / (c * l);
                    match *schedule {
                        StepSchedule::Constant { gamma } => conds.push(Condition {
                            name: format!("gamma < 1/({c:.4}*L)"),
                            required: bound,
                            actual: gamma,
                            ok: gamma < bound,
                        }),
                        StepSchedule::InverseLinear { .. } => conds.push(Condition {
                            name: "constant schedule required".into(),
                            required: 0.0,
                            actual: 1.0,
                            ok: false,
                        }),
                    }
                }
            }
        }
        RateGuarantee::StochGlobal => match (problem.lipschitz, problem.strong_mono) {
            (Some(l), Some(alpha)) if alpha > 0.0 => match *schedule {
                StepSchedule::InverseLinear { gamma, b } => {
                    conds.push(Condition {
                        name: "gamma > 1/alpha".into(),
                        required: 1.0 / alpha,
                        actual: gamma,
                        ok: gamma > 1.0 / alpha,
                    });
                    let required = 4.0 * l * gamma;
                    // L is often computed numerically; allow rounding slack on
                    // the equality case b = 4*L*gamma
                    let slack = 1e-9 * (1.0 + required.abs());
                    conds.push(Condition {
                        name: "b >= 4*L*gamma".into(),
                        required,
                        actual: b,
                        ok: b >= required - slack,
                    });
                }
                StepSchedule::Constant { .. } => conds.push(Condition {
                    name: "inverse-linear schedule required".into(),
                    required: 0.0,
                    actual: 1.0,
                    ok: false,
                }),
            },
            (Some(_), _) => conds.push(missing("strong monotonicity constant alpha")),
            (None, _) => conds.push(missing("lipschitz constant L")),
        },
    }
    ScheduleValidation::from_conditions(conds)
}

fn missing(what: &str) -> Condition {
    Condition { name: format!("missing constant: {what}"), required: f64::NAN, actual: f64::NAN, ok: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vi::{ConvexSet, Vector};

    fn problem_with(l: Option<f64>, alpha: Option<f64>) -> VIProblem {
        let mut p = VIProblem::new(ConvexSet::whole_space(2), |x: &Vector| x.clone());
        p.lipschitz = l;
        p.strong_mono = alpha;
        p
    }

    #[test]
    fn step_values() {
        let c = StepSchedule::constant(0.1).unwrap();
        assert_eq!(c.step_at(7).unwrap(), 0.1);
        let inv = StepSchedule::inverse_linear(2.0, 15.0).unwrap();
        assert_eq!(inv.step_at(1).unwrap(), 0.125);
        let inv0 = StepSchedule::inverse_linear(2.0, 0.0).unwrap();
        assert_eq!(inv0.step_at(4).unwrap(), 0.5);
        assert!(c.step_at(0).is_err());
    }

    #[test]
    fn det_ergodic_peg_bound() {
        let p = problem_with(Some(4.0), None);
        let v = validate(
            &StepSchedule::constant(0.1).unwrap(),
            &p,
            AlgorithmKind::Peg,
            RateGuarantee::DetErgodic,
        );
        assert!(v.satisfied, "{:?}", v.conditions);
    }

    #[test]
    fn det_ergodic_rg_tighter_constant() {
        let p = problem_with(Some(4.0), None);
        let v = validate(
            &StepSchedule::constant(0.15).unwrap(),
            &p,
            AlgorithmKind::Rg,
            RateGuarantee::DetErgodic,
        );
        assert!(!v.satisfied);
        // 0.15 >= 1/((1+sqrt(2))*4) ~ 0.1036
        assert!((v.conditions[0].required - 1.0 / ((1.0 + 2f64.sqrt()) * 4.0)).abs() < 1e-12);
    }

    #[test]
    fn stoch_global_b_condition() {
        let p = problem_with(Some(4.0), Some(1.0));
        let v = validate(
            &StepSchedule::inverse_linear(2.0, 15.0).unwrap(),
            &p,
            AlgorithmKind::Peg,
            RateGuarantee::StochGlobal,
        );
        assert!(!v.satisfied);
        let b_cond = v.conditions.iter().find(|c| c.name.starts_with("b >=")).unwrap();
        assert_eq!(b_cond.required, 32.0);
        assert_eq!(b_cond.actual, 15.0);

        let ok = validate(
            &StepSchedule::inverse_linear(2.0, 32.0).unwrap(),
            &p,
            AlgorithmKind::Peg,
            RateGuarantee::StochGlobal,
        );
        assert!(ok.satisfied);
    }

    #[test]
    fn missing_constants_reported() {
        let p = problem_with(None, None);
        let v = validate(
            &StepSchedule::constant(0.1).unwrap(),
            &p,
            AlgorithmKind::Peg,
            RateGuarantee::DetErgodic,
        );
        assert!(!v.satisfied);
        assert!(v.conditions[0].name.contains("missing"));
    }

    #[test]
    fn strict_inequality_at_boundary() {
        let p = problem_with(Some(4.0), None);
        let v = validate(
            &StepSchedule::constant(0.125).unwrap(),
            &p,
            AlgorithmKind::Peg,
            RateGuarantee::DetErgodic,
        );
        assert!(!v.satisfied, "gamma = 1/(cL) exactly must fail");
    }

    #[test]
    fn shrinking_gamma_preserves_det_ergodic() {
        let p = problem_with(Some(4.0), None);
        let mut gamma = 0.12;
        let mut seen_ok = false;
        while gamma > 1e-6 {
            let v = validate(
                &StepSchedule::constant(gamma).unwrap(),
                &p,
                AlgorithmKind::Peg,
                RateGuarantee::DetErgodic,
            );
            if seen_ok {
                assert!(v.satisfied, "monotonicity violated at gamma={gamma}");
            }
            seen_ok = seen_ok || v.satisfied;
            gamma *= 0.5;
        }
        assert!(seen_ok);
    }

    #[test]
    fn inverse_linear_square_sum_bounded() {
        // partial sums of gamma_t^2 stay under the gamma^2/b closed bound
        let gamma = 2.0;
        let b = 15.0;
        let s = StepSchedule::inverse_linear(gamma, b).unwrap();
        let mut acc = 0.0;
        for t in 1..=1_000_000u64 {
            let g = s.step_at(t).unwrap();
            acc += g * g;
        }
        let bound = gamma * gamma / b;
        assert!(acc <= bound + 1e-3, "sum {acc} vs bound {bound}");
    }
}
