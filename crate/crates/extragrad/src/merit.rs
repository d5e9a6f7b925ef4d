//! Merit functions: squared distance to a known solution, the restricted
//! dual-gap error over a ball around the starting point, a saddle gap for
//! min-max problems, and regression helpers for empirical convergence rates.

use nalgebra::SymmetricEigen;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::vi::{ConvexSet, Matrix, VIProblem, Vector};

pub fn dist_sq(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm_squared()
}

/// How the inner maximization is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerSolver {
    /// Exact trust-region solution; valid only for affine operators on an
    /// unconstrained domain.
    ClosedFormAffine,
    /// Multi-restart projected gradient ascent with an adaptive step.
    ProjectedAscent { restarts: usize, iters: usize },
}

impl Default for InnerSolver {
    fn default() -> Self {
        InnerSolver::ProjectedAscent { restarts: 20, iters: 500 }
    }
}

/// Configuration of the restricted merit region `X ∩ B_R(center)`.
#[derive(Clone)]
pub struct MeritConfig {
    pub radius: f64,
    pub center: Vector,
    pub inner: InnerSolver,
}

impl MeritConfig {
    pub fn new(radius: f64, center: Vector) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!("merit radius must be > 0, got {radius}")));
        }
        Ok(MeritConfig { radius, center, inner: InnerSolver::default() })
    }
}

/// Restricted error of a test point `u`:
/// `sup { <V(x), u - x> : x in X, |x - center| <= R }`.
/// The ascent path returns a lower bound on the supremum; the closed form is
/// exact for affine operators on an unconstrained domain.
pub fn restricted_error(u: &Vector, problem: &VIProblem, cfg: &MeritConfig) -> Result<f64> {
    if u.len() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), got: u.len() });
    }
    match cfg.inner {
        InnerSolver::ClosedFormAffine => restricted_error_closed_form(u, problem, cfg),
        InnerSolver::ProjectedAscent { restarts, iters } => {
            restricted_error_ascent(u, problem, cfg, restarts, iters)
        }
    }
}

fn restricted_error_closed_form(u: &Vector, problem: &VIProblem, cfg: &MeritConfig) -> Result<f64> {
    let aff = problem.affine.as_ref().ok_or(Error::NotAffine)?;
    if !matches!(problem.set, ConvexSet::WholeSpace { .. }) {
        return Err(Error::InvalidArgument(
            "closed-form restricted error needs an unconstrained domain".into(),
        ));
    }
    // with x = center + y, |y| <= R:
    //   <V(x), u - x> = m0'w + b'y - y'Ay
    // where m0 = M center + c, w = u - center, b = M'w - m0, A = sym(M)
    let m0 = &aff.matrix * &cfg.center + &aff.offset;
    let w = u - &cfg.center;
    let b = aff.matrix.transpose() * &w - &m0;
    let a = (&aff.matrix + aff.matrix.transpose()) * 0.5;
    let (val, _y) = trs_maximize(&a, &b, cfg.radius);
    Ok(m0.dot(&w) + val)
}

/// Maximizes `b'y - y'Ay` over `|y| <= r` exactly (A symmetric). Returns the
/// optimum value and the maximizer.
fn trs_maximize(a: &Matrix, b: &Vector, r: f64) -> (f64, Vector) {
    let eig = SymmetricEigen::new(a.clone());
    let q = &eig.eigenvectors;
    let lam = &eig.eigenvalues;
    let beta = q.transpose() * b;
    let n = b.len();
    let lam_min = lam.iter().copied().fold(f64::INFINITY, f64::min);
    let mu_lo = (-lam_min).max(0.0);

    let y_at = |mu: f64| -> Vector {
        Vector::from_fn(n, |i, _| {
            let d = lam[i] + mu;
            if d.abs() < 1e-300 { 0.0 } else { beta[i] / (2.0 * d) }
        })
    };
    let norm_at = |mu: f64| y_at(mu).norm();

    let eps = 1e-10 * (1.0 + lam_min.abs());
    let y_eig = if norm_at(mu_lo + eps) <= r {
        if mu_lo == 0.0 {
            // interior stationary point of a concave objective
            y_at(0.0)
        } else {
            // degenerate boundary case: move along the top-curvature direction
            let tol = 1e-9 * (1.0 + lam_min.abs());
            let mut y = Vector::from_fn(n, |i, _| {
                let d = lam[i] + mu_lo;
                if d.abs() <= tol { 0.0 } else { beta[i] / (2.0 * d) }
            });
            let idx = (0..n).find(|&i| (lam[i] - lam_min).abs() <= tol).unwrap_or(0);
            let slack = (r * r - y.norm_squared()).max(0.0);
            y[idx] += slack.sqrt();
            y
        }
    } else {
        // boundary solution; the norm is strictly decreasing in mu
        let mut lo = mu_lo + eps;
        let mut hi = mu_lo + b.norm() / (2.0 * r) + 1.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if norm_at(mid) > r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        y_at(0.5 * (lo + hi))
    };

    let y = q * y_eig;
    let val = b.dot(&y) - y.dot(&(a * &y));
    (val, y)
}

/// Approximate projection onto `set ∩ B_R(center)` by alternating projections.
fn project_region(set: &ConvexSet, ball: &ConvexSet, x: &Vector) -> Result<Vector> {
    if matches!(set, ConvexSet::WholeSpace { .. }) {
        return ball.project(x);
    }
    let mut y = x.clone();
    for _ in 0..20 {
        y = set.project(&ball.project(&y)?)?;
    }
    ball.project(&y)
}

fn restricted_error_ascent(
    u: &Vector,
    problem: &VIProblem,
    cfg: &MeritConfig,
    restarts: usize,
    iters: usize,
) -> Result<f64> {
    let objective = |x: &Vector| -> Result<f64> {
        Ok(problem.eval(x)?.dot(&(u - x)))
    };
    let grad = |x: &Vector| -> Result<Vector> {
        let v = problem.eval(x)?;
        let w = u - x;
        let jt_w = match &problem.affine {
            Some(aff) => aff.matrix.transpose() * &w,
            None => {
                // directional finite differences of <V(.), w> with w frozen
                let h = 1e-5 * (1.0 + x.norm());
                let mut g = Vector::zeros(x.len());
                for i in 0..x.len() {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    g[i] = (problem.eval(&xp)?.dot(&w) - problem.eval(&xm)?.dot(&w)) / (2.0 * h);
                }
                g
            }
        };
        Ok(jt_w - v)
    };
    maximize_over_region(problem, cfg, restarts, iters, u, &objective, &grad)
}

/// Shared multi-restart ascent driver. Starts at the region center, at the
/// projected test point and at seeded random draws; returns the best value.
fn maximize_over_region(
    problem: &VIProblem,
    cfg: &MeritConfig,
    restarts: usize,
    iters: usize,
    test: &Vector,
    objective: &(dyn Fn(&Vector) -> Result<f64> + Sync),
    grad: &(dyn Fn(&Vector) -> Result<Vector> + Sync),
) -> Result<f64> {
    let ball = ConvexSet::ball(cfg.center.clone(), cfg.radius)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let restarts = restarts.max(2);
    let starts: Vec<Vector> = (0..restarts)
        .map(|k| -> Result<Vector> {
            let raw = match k {
                0 => cfg.center.clone(),
                1 => test.clone(),
                _ => {
                    let mut rng = ChaCha8Rng::seed_from_u64(0xa5ce_4d00 ^ k as u64);
                    ball.sample(&mut rng)
                }
            };
            project_region(&problem.set, &ball, &raw)
        })
        .collect::<Result<Vec<_>>>()?;

    let values: Vec<f64> = starts
        .par_iter()
        .map(|start| -> Result<f64> {
            let mut x = start.clone();
            let mut fx = objective(&x)?;
            let mut step = 0.1 * cfg.radius;
            for _ in 0..iters {
                let g = grad(&x)?;
                let gn = g.norm();
                if gn < 1e-14 || step < 1e-16 {
                    break;
                }
                let cand = project_region(&problem.set, &ball, &(&x + g * (step / gn)))?;
                let fc = objective(&cand)?;
                if fc > fx {
                    x = cand;
                    fx = fc;
                    step *= 1.1;
                } else {
                    step *= 0.5;
                }
            }
            Ok(fx)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(values.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Restricted saddle gap of a test point `(th, ph)`:
/// `sup { value(th, q) - value(p, ph) : (p, q) in X ∩ B_R(center) }`.
/// The closed form fits a quadratic model by central differences, so it is
/// exact only when the saddle value is quadratic.
pub fn restricted_ni_gap(test: &Vector, problem: &VIProblem, cfg: &MeritConfig) -> Result<f64> {
    let saddle = problem.saddle.as_ref().ok_or(Error::NotSaddle)?;
    let (dm, dx) = (saddle.dim_min, saddle.dim_max);
    if test.len() != dm + dx {
        return Err(Error::DimensionMismatch { expected: dm + dx, got: test.len() });
    }
    let th_hat = test.rows(0, dm).into_owned();
    let ph_hat = test.rows(dm, dx).into_owned();
    let value = saddle.value.clone();
    let g = move |x: &Vector| -> f64 {
        let p = x.rows(0, dm).into_owned();
        let q = x.rows(dm, dx).into_owned();
        (value)(&th_hat, &q) - (value)(&p, &ph_hat)
    };

    match cfg.inner {
        InnerSolver::ClosedFormAffine => {
            if !matches!(problem.set, ConvexSet::WholeSpace { .. }) {
                return Err(Error::InvalidArgument(
                    "closed-form saddle gap needs an unconstrained domain".into(),
                ));
            }
            // quadratic model at the center: g(center + y) = g0 + b'y - y'Ay
            let n = dm + dx;
            let h = 1e-3;
            let g0 = g(&cfg.center);
            let mut b = Vector::zeros(n);
            let mut hess = Matrix::zeros(n, n);
            for i in 0..n {
                let mut xp = cfg.center.clone();
                let mut xm = cfg.center.clone();
                xp[i] += h;
                xm[i] -= h;
                b[i] = (g(&xp) - g(&xm)) / (2.0 * h);
                hess[(i, i)] = (g(&xp) - 2.0 * g0 + g(&xm)) / (h * h);
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    let mut xpp = cfg.center.clone();
                    let mut xpm = cfg.center.clone();
                    let mut xmp = cfg.center.clone();
                    let mut xmm = cfg.center.clone();
                    xpp[i] += h;
                    xpp[j] += h;
                    xpm[i] += h;
                    xpm[j] -= h;
                    xmp[i] -= h;
                    xmp[j] += h;
                    xmm[i] -= h;
                    xmm[j] -= h;
                    let v = (g(&xpp) - g(&xpm) - g(&xmp) + g(&xmm)) / (4.0 * h * h);
                    hess[(i, j)] = v;
                    hess[(j, i)] = v;
                }
            }
            let a = hess * -0.5;
            let (val, _) = trs_maximize(&a, &b, cfg.radius);
            Ok(g0 + val)
        }
        InnerSolver::ProjectedAscent { restarts, iters } => {
            let objective = |x: &Vector| -> Result<f64> { Ok(g(x)) };
            let grad = |x: &Vector| -> Result<Vector> {
                let h = 1e-6 * (1.0 + x.norm());
                let mut gr = Vector::zeros(x.len());
                for i in 0..x.len() {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    gr[i] = (g(&xp) - g(&xm)) / (2.0 * h);
                }
                Ok(gr)
            };
            maximize_over_region(problem, cfg, restarts, iters, test, &objective, &grad)
        }
    }
}

/// Axis transformation for rate regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitScale {
    /// slope of log(v) against log(t): polynomial rates
    LogLog,
    /// slope of log(v) against t: geometric rates
    SemiLog,
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Least-squares fit of `log v` against the transformed abscissa over the
/// inclusive window `t in [window.0, window.1]`.
pub fn fit_rate(points: &[(f64, f64)], scale: FitScale, window: (f64, f64)) -> Result<RateFit> {
    let selected: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(t, _)| t >= window.0 && t <= window.1)
        .collect();
    if selected.len() < 3 {
        return Err(Error::RateFit(format!(
            "need at least 3 points in the window, got {}",
            selected.len()
        )));
    }
    if let Some(&(t, v)) = selected.iter().find(|&&(_, v)| !(v > 0.0)) {
        return Err(Error::RateFit(format!("nonpositive value {v} at t = {t}")));
    }
    let xy: Vec<(f64, f64)> = selected
        .iter()
        .map(|&(t, v)| {
            let x = match scale {
                FitScale::LogLog => t.ln(),
                FitScale::SemiLog => t,
            };
            (x, v.ln())
        })
        .collect();
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = xy.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::RateFit("degenerate abscissa: all points coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xy.iter().map(|p| (p.1 - (intercept + slope * p.0)).powi(2)).sum();
    let r_squared = if syy <= 1e-30 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(RateFit { slope, intercept, r_squared, n_points: xy.len() })
}
