//! Core types for variational-inequality problems: vectors, convex constraint
//! sets with Euclidean projection, operators and regularity/monotonicity probes.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Tolerance for set-membership checks.
pub const MEMBERSHIP_TOL: f64 = 1e-10;

pub fn check_finite(x: &Vector) -> Result<()> {
    let bad: Vec<usize> = (0..x.len()).filter(|&i| !x[i].is_finite()).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::NonFinite { coords: bad })
    }
}

/// Closed convex subsets of R^d with exact Euclidean projections.
#[derive(Debug, Clone)]
pub enum ConvexSet {
    WholeSpace { dim: usize },
    Ball { center: Vector, radius: f64 },
    Box { lower: Vector, upper: Vector },
    Simplex { dim: usize },
}

impl ConvexSet {
    pub fn whole_space(dim: usize) -> Self {
        ConvexSet::WholeSpace { dim }
    }

    pub fn ball(center: Vector, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidSet(format!("ball radius must be > 0, got {radius}")));
        }
        check_finite(&center)?;
        Ok(ConvexSet::Ball { center, radius })
    }

    pub fn box_set(lower: Vector, upper: Vector) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        if (0..lower.len()).any(|i| lower[i] > upper[i]) {
            return Err(Error::InvalidSet("box lower bound exceeds upper bound".into()));
        }
        Ok(ConvexSet::Box { lower, upper })
    }

    pub fn simplex(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSet("simplex dimension must be positive".into()));
        }
        Ok(ConvexSet::Simplex { dim })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::WholeSpace { dim } | ConvexSet::Simplex { dim } => *dim,
            ConvexSet::Ball { center, .. } => center.len(),
            ConvexSet::Box { lower, .. } => lower.len(),
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, y: &Vector) -> Result<Vector> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: y.len() });
        }
        Ok(match self {
            ConvexSet::WholeSpace { .. } => y.clone(),
            ConvexSet::Ball { center, radius } => {
                let d = y - center;
                let n = d.norm();
                if n <= *radius {
                    y.clone()
                } else {
                    center + d * (*radius / n)
                }
            }
            ConvexSet::Box { lower, upper } => {
                Vector::from_fn(y.len(), |i, _| y[i].clamp(lower[i], upper[i]))
            }
            ConvexSet::Simplex { dim } => project_simplex(y, *dim),
        })
    }

    /// Membership test with an absolute tolerance.
    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            ConvexSet::WholeSpace { .. } => true,
            ConvexSet::Ball { center, radius } => (x - center).norm() <= radius + tol,
            ConvexSet::Box { lower, upper } => {
                (0..x.len()).all(|i| x[i] >= lower[i] - tol && x[i] <= upper[i] + tol)
            }
            ConvexSet::Simplex { .. } => {
                let sum: f64 = x.iter().sum();
                (sum - 1.0).abs() <= tol && x.iter().all(|&v| v >= -tol)
            }
        }
    }

    /// Draws a uniform point of the set (standard Gaussian for the whole space).
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vector {
        match self {
            ConvexSet::WholeSpace { dim } => gaussian_vector(*dim, rng),
            ConvexSet::Ball { center, radius } => {
                let dim = center.len();
                let mut dir = gaussian_vector(dim, rng);
                let n = dir.norm();
                if n == 0.0 {
                    return center.clone();
                }
                dir /= n;
                let u: f64 = rng.gen::<f64>();
                let r = radius * u.powf(1.0 / dim as f64);
                center + dir * r
            }
            ConvexSet::Box { lower, upper } => Vector::from_fn(lower.len(), |i, _| {
                lower[i] + rng.gen::<f64>() * (upper[i] - lower[i])
            }),
            ConvexSet::Simplex { dim } => {
                // exponential spacings give the flat Dirichlet
                let mut x = Vector::from_fn(*dim, |_, _| -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln());
                let s: f64 = x.iter().sum();
                x /= s;
                x
            }
        }
    }
}

/// Sort-and-threshold projection onto the probability simplex.
fn project_simplex(y: &Vector, dim: usize) -> Vector {
    let mut u: Vec<f64> = y.iter().copied().collect();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cssv = 0.0;
    let mut rho = 0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cssv += uj;
        let t = (cssv - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            rho = j + 1;
            theta = t;
        }
    }
    debug_assert!(rho > 0);
    let _ = dim;
    Vector::from_fn(y.len(), |i, _| (y[i] - theta).max(0.0))
}

fn gaussian_vector<R: Rng>(dim: usize, rng: &mut R) -> Vector {
    Vector::from_fn(dim, |_, _| standard_normal(rng))
}

/// Box–Muller draw; kept local so probe streams never depend on an external
/// sampler's implementation details.
pub(crate) fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum MonotonicityClass {
    StronglyMonotone,
    Monotone,
    NonMonotoneRegular,
    Unknown,
}

/// Affine structure `V(x) = Mx + c`, available on problems whose operator is
/// known to be affine. Lets the merit module solve inner problems exactly.
#[derive(Clone)]
pub struct AffineOperator {
    pub matrix: Matrix,
    pub offset: Vector,
}

/// Declared saddle structure: `V = (grad_theta phi, -grad_phi phi)` for a
/// min-max objective `phi` over variables split as (theta, phi-vars).
#[derive(Clone)]
pub struct SaddleStructure {
    pub dim_min: usize,
    pub dim_max: usize,
    pub value: Arc<dyn Fn(&Vector, &Vector) -> f64 + Send + Sync>,
}

/// A variational-inequality instance: operator, constraint set and whatever
/// constants are known about it.
#[derive(Clone)]
pub struct VIProblem {
    dim: usize,
    operator: Arc<dyn Fn(&Vector) -> Vector + Send + Sync>,
    pub set: ConvexSet,
    pub lipschitz: Option<f64>,
    pub strong_mono: Option<f64>,
    pub known_solution: Option<Vector>,
    pub monotonicity_class: MonotonicityClass,
    pub affine: Option<AffineOperator>,
    pub saddle: Option<SaddleStructure>,
}

impl VIProblem {
    pub fn new<F>(set: ConvexSet, operator: F) -> Self
    where
        F: Fn(&Vector) -> Vector + Send + Sync + 'static,
    {
        VIProblem {
            dim: set.dim(),
            operator: Arc::new(operator),
            set,
            lipschitz: None,
            strong_mono: None,
            known_solution: None,
            monotonicity_class: MonotonicityClass::Unknown,
            affine: None,
            saddle: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Evaluates the operator, rejecting non-finite inputs and outputs.
    pub fn eval(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        check_finite(x)?;
        let v = (self.operator)(x);
        check_finite(&v)?;
        Ok(v)
    }
}

/// Samples pairs in `region` and returns the (min, max) of the monotonicity
/// quotient `<V(x') - V(x), x' - x> / |x' - x|^2`. The minimum estimates the
/// strong-monotonicity modulus; a negative value witnesses non-monotonicity.
pub fn probe_monotonicity(
    problem: &VIProblem,
    samples: usize,
    rng_seed: u64,
    region: &ConvexSet,
) -> Result<(f64, f64)> {
    if samples < 2 {
        return Err(Error::InvalidArgument("probe needs samples >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut min_q = f64::INFINITY;
    let mut max_q = f64::NEG_INFINITY;
    for _ in 0..samples {
        let (x, x2, d2) = sample_distinct_pair(region, &mut rng);
        let dv = problem.eval(&x2)? - problem.eval(&x)?;
        let q = dv.dot(&(&x2 - &x)) / d2;
        min_q = min_q.min(q);
        max_q = max_q.max(q);
    }
    Ok((min_q, max_q))
}

/// Max over sampled pairs of `|V(x') - V(x)| / |x' - x|`, a lower bound on the
/// Lipschitz constant over the region.
pub fn probe_lipschitz(
    problem: &VIProblem,
    samples: usize,
    rng_seed: u64,
    region: &ConvexSet,
) -> Result<f64> {
    if samples < 2 {
        return Err(Error::InvalidArgument("probe needs samples >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut max_ratio = 0.0f64;
    for _ in 0..samples {
        let (x, x2, d2) = sample_distinct_pair(region, &mut rng);
        let dv = problem.eval(&x2)? - problem.eval(&x)?;
        max_ratio = max_ratio.max(dv.norm() / d2.sqrt());
    }
    Ok(max_ratio)
}

fn sample_distinct_pair<R: Rng>(region: &ConvexSet, rng: &mut R) -> (Vector, Vector, f64) {
    loop {
        let x = region.sample(rng);
        let x2 = region.sample(rng);
        let d2 = (&x2 - &x).norm_squared();
        if d2 > 1e-24 {
            return (x, x2, d2);
        }
    }
}

/// Second-order diagnostics at a candidate solution.
#[derive(Debug, Clone)]
pub struct RegularityReport {
    /// Min over unit tangent vectors of `v' Jac_V(x*) v`.
    pub min_symmetric_eigenvalue: f64,
    pub neighborhood_radius: f64,
    /// Min over the sampled neighborhood of `<V(x), x - x*> / |x - x*|^2`.
    pub local_strong_mono: f64,
    /// Max over the sampled neighborhood of `|V(x)|`.
    pub local_bound: f64,
}

const REGULARITY_SAMPLES: usize = 512;
const REGULARITY_SEED: u64 = 0x5eed_4e67;

/// Probes whether `candidate` is a regular solution: builds the Jacobian by
/// central finite differences and reports the minimum symmetric-part curvature
/// along tangent directions, together with sampled local constants.
pub fn check_regular_solution(
    problem: &VIProblem,
    candidate: &Vector,
    radius: f64,
    fd_step: f64,
) -> Result<RegularityReport> {
    if !(radius > 0.0) || !(fd_step > 0.0) {
        return Err(Error::InvalidArgument("radius and fd_step must be positive".into()));
    }
    if !problem.set.contains(candidate, 1e-8) {
        return Err(Error::Infeasible { dist: f64::NAN });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(REGULARITY_SEED);

    // first-order condition
    let v_cand = problem.eval(candidate)?;
    match problem.set {
        ConvexSet::WholeSpace { .. } => {
            let viol = v_cand.amax();
            if viol > 1e-6 {
                return Err(Error::NotASolution { violation: viol });
            }
        }
        _ => {
            let mut worst = 0.0f64;
            for _ in 0..REGULARITY_SAMPLES {
                let x = problem.set.sample(&mut rng);
                worst = worst.min(v_cand.dot(&(&x - candidate)));
            }
            if worst < -1e-6 {
                return Err(Error::NotASolution { violation: -worst });
            }
        }
    }

    let jac = fd_jacobian(problem, candidate, fd_step)?;
    let sym = (&jac + jac.transpose()) * 0.5;

    let min_eig = match problem.set {
        ConvexSet::WholeSpace { .. } => sym
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min),
        _ => {
            // sampled tangent directions: normalized differences of feasible points
            let mut min_q = f64::INFINITY;
            for _ in 0..REGULARITY_SAMPLES {
                let (a, b, d2) = sample_distinct_pair(&problem.set, &mut rng);
                let v = (&b - &a) / d2.sqrt();
                min_q = min_q.min(v.dot(&(&sym * &v)));
            }
            min_q
        }
    };

    // sampled local constants over the radius-ball intersected with the set
    let ball = ConvexSet::Ball { center: candidate.clone(), radius };
    let mut local_alpha = f64::INFINITY;
    let mut local_bound = 0.0f64;
    let mut accepted = 0;
    while accepted < REGULARITY_SAMPLES {
        let y = ball.sample(&mut rng);
        let x = problem.set.project(&y)?;
        let d2 = (&x - candidate).norm_squared();
        if d2 <= 1e-24 || (&x - candidate).norm() > radius {
            continue;
        }
        accepted += 1;
        let v = problem.eval(&x)?;
        local_alpha = local_alpha.min(v.dot(&(&x - candidate)) / d2);
        local_bound = local_bound.max(v.norm());
    }

    Ok(RegularityReport {
        min_symmetric_eigenvalue: min_eig,
        neighborhood_radius: radius,
        local_strong_mono: local_alpha,
        local_bound,
    })
}

/// Central-difference Jacobian of the problem operator.
pub fn fd_jacobian(problem: &VIProblem, x: &Vector, h: f64) -> Result<Matrix> {
    let dim = problem.dim();
    let mut jac = Matrix::zeros(dim, dim);
    for j in 0..dim {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (problem.eval(&xp)? - problem.eval(&xm)?) / (2.0 * h);
        jac.set_column(j, &col);
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec2(a: f64, b: f64) -> Vector {
        Vector::from_vec(vec![a, b])
    }

    #[test]
    fn ball_projection_radial_clamp() {
        let set = ConvexSet::ball(Vector::zeros(2), 1.0).unwrap();
        let p = set.project(&vec2(2.0, 0.0)).unwrap();
        assert!((p - vec2(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn projection_fixes_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sets = [
            ConvexSet::ball(vec2(0.5, -0.5), 2.0).unwrap(),
            ConvexSet::box_set(vec2(-1.0, 0.0), vec2(1.0, 3.0)).unwrap(),
            ConvexSet::simplex(2).unwrap(),
            ConvexSet::whole_space(2),
        ];
        for set in &sets {
            for _ in 0..100 {
                let x = set.sample(&mut rng);
                assert!(set.contains(&x, MEMBERSHIP_TOL), "sample outside {set:?}");
                let p = set.project(&x).unwrap();
                assert!((&p - &x).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sets = [
            ConvexSet::ball(vec2(0.0, 1.0), 0.7).unwrap(),
            ConvexSet::box_set(vec2(-1.0, -1.0), vec2(1.0, 1.0)).unwrap(),
            ConvexSet::simplex(2).unwrap(),
        ];
        for set in &sets {
            for _ in 0..200 {
                let y = gaussian_vector(2, &mut rng) * 3.0;
                let p1 = set.project(&y).unwrap();
                let p2 = set.project(&p1).unwrap();
                let rel = (&p2 - &p1).norm() / p1.norm().max(1.0);
                assert!(rel < 1e-12);
                assert!(set.contains(&p1, MEMBERSHIP_TOL));
            }
        }
    }

    #[test]
    fn simplex_projection_matches_grid_oracle() {
        // brute-force grid minimization of |y - x| over the 3-simplex
        let y = Vector::from_vec(vec![0.5, 0.5, 0.5]);
        let set = ConvexSet::simplex(3).unwrap();
        let p = set.project(&y).unwrap();
        let mut best = f64::INFINITY;
        let mut best_x = Vector::zeros(3);
        let n = 1000;
        for i in 0..=n {
            for j in 0..=(n - i) {
                let a = i as f64 / n as f64;
                let b = j as f64 / n as f64;
                let x = Vector::from_vec(vec![a, b, 1.0 - a - b]);
                let d = (&x - &y).norm_squared();
                if d < best {
                    best = d;
                    best_x = x;
                }
            }
        }
        assert!((&p - &best_x).norm() < 2e-3, "{p:?} vs {best_x:?}");
        let third = Vector::from_element(3, 1.0 / 3.0);
        assert!((&p - &third).norm() < 1e-12);
    }

    #[test]
    fn degenerate_sets_rejected() {
        assert!(ConvexSet::ball(Vector::zeros(2), 0.0).is_err());
        assert!(ConvexSet::ball(Vector::zeros(2), -1.0).is_err());
        assert!(ConvexSet::box_set(vec2(1.0, 0.0), vec2(0.0, 1.0)).is_err());
    }

    #[test]
    fn projection_dimension_mismatch() {
        let set = ConvexSet::ball(Vector::zeros(2), 1.0).unwrap();
        assert!(set.project(&Vector::zeros(3)).is_err());
    }

    #[test]
    fn eval_identity_and_zero() {
        let id = VIProblem::new(ConvexSet::whole_space(2), |x: &Vector| x.clone());
        let out = id.eval(&vec2(1.0, -2.0)).unwrap();
        assert_eq!(out, vec2(1.0, -2.0));
        let zero = VIProblem::new(ConvexSet::whole_space(2), |_: &Vector| Vector::zeros(2));
        assert_eq!(zero.eval(&vec2(3.0, 4.0)).unwrap(), Vector::zeros(2));
    }

    #[test]
    fn eval_rejects_non_finite_output() {
        let bad = VIProblem::new(ConvexSet::whole_space(2), |_: &Vector| {
            Vector::from_vec(vec![f64::NAN, 1.0])
        });
        match bad.eval(&Vector::zeros(2)) {
            Err(Error::NonFinite { coords }) => assert_eq!(coords, vec![0]),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn probe_monotonicity_identity() {
        let id = VIProblem::new(ConvexSet::whole_space(3), |x: &Vector| x.clone());
        let region = ConvexSet::ball(Vector::zeros(3), 2.0).unwrap();
        let (lo, hi) = probe_monotonicity(&id, 100, 7, &region).unwrap();
        assert!((lo - 1.0).abs() < 1e-12);
        assert!((hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn probe_lipschitz_scalings() {
        let three = VIProblem::new(ConvexSet::whole_space(3), |x: &Vector| x * 3.0);
        let region = ConvexSet::ball(Vector::zeros(3), 2.0).unwrap();
        let l = probe_lipschitz(&three, 100, 7, &region).unwrap();
        assert!((l - 3.0).abs() < 1e-12);
        let zero = VIProblem::new(ConvexSet::whole_space(3), |_: &Vector| Vector::zeros(3));
        assert_eq!(probe_lipschitz(&zero, 100, 7, &region).unwrap(), 0.0);
    }

    #[test]
    fn probe_lipschitz_linear_operator_near_spectral_norm() {
        let m = Matrix::from_row_slice(5, 5, &[
            2.0, 0.3, 0.0, 0.1, 0.0,
            0.0, 1.0, 0.2, 0.0, 0.0,
            0.1, 0.0, 0.8, 0.0, 0.3,
            0.0, 0.2, 0.0, 0.5, 0.0,
            0.3, 0.0, 0.1, 0.0, 1.2,
        ]);
        let spec = m.clone().svd(false, false).singular_values[0];
        let mc = m.clone();
        let p = VIProblem::new(ConvexSet::whole_space(5), move |x: &Vector| &mc * x);
        let region = ConvexSet::ball(Vector::zeros(5), 1.0).unwrap();
        let l = probe_lipschitz(&p, 10_000, 11, &region).unwrap();
        assert!(l <= spec + 1e-12);
        assert!(l >= spec * 0.98, "probe {l} vs spectral norm {spec}");
    }

    #[test]
    fn regular_solution_identity() {
        let id = VIProblem::new(ConvexSet::whole_space(2), |x: &Vector| x.clone());
        let rep = check_regular_solution(&id, &Vector::zeros(2), 0.5, 1e-5).unwrap();
        assert!((rep.min_symmetric_eigenvalue - 1.0).abs() < 1e-6);
        assert!((rep.local_strong_mono - 1.0).abs() < 1e-9);
    }

    #[test]
    fn regular_solution_negated_identity_reports_negative_curvature() {
        let neg = VIProblem::new(ConvexSet::whole_space(2), |x: &Vector| -x);
        // the origin solves the reversed VI only; regularity must fail
        match check_regular_solution(&neg, &Vector::zeros(2), 0.5, 1e-5) {
            Ok(rep) => assert!(rep.min_symmetric_eigenvalue < 0.0),
            Err(Error::NotASolution { .. }) => {}
            Err(other) => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn regular_solution_rejects_non_solution() {
        let shifted = VIProblem::new(ConvexSet::whole_space(2), |x: &Vector| {
            x + Vector::from_element(2, 1.0)
        });
        assert!(matches!(
            check_regular_solution(&shifted, &Vector::zeros(2), 0.5, 1e-5),
            Err(Error::NotASolution { .. })
        ));
    }

    #[test]
    fn regular_solution_halved_radius_keeps_sign() {
        let id = VIProblem::new(ConvexSet::whole_space(3), |x: &Vector| x.clone());
        let r1 = check_regular_solution(&id, &Vector::zeros(3), 0.8, 1e-5).unwrap();
        let r2 = check_regular_solution(&id, &Vector::zeros(3), 0.4, 1e-5).unwrap();
        assert!(r1.local_strong_mono > 0.0 && r2.local_strong_mono > 0.0);
    }
}
