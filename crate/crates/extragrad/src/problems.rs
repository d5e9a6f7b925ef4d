//! Benchmark problem factories: a quadratic-plus-quartic saddle family whose
//! two scale knobs interpolate between strongly monotone, merely monotone and
//! non-monotone-but-regular regimes, a strongly monotone quadratic with exact
//! constants, and a bilinear saddle.

use std::sync::Arc;

use nalgebra::SymmetricEigen;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::vi::{
    probe_lipschitz, standard_normal, AffineOperator, ConvexSet, Matrix, MonotonicityClass,
    SaddleStructure, VIProblem, Vector,
};

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| standard_normal(rng))
}

/// Random symmetric positive definite matrix `G'G/d + 0.5 I`; the ridge keeps
/// the spectrum away from zero at every dimension.
fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let g = gaussian_matrix(d, d, rng);
    g.transpose() * &g / d as f64 + Matrix::identity(d, d) * 0.5
}

fn spectral_norm(m: &Matrix) -> f64 {
    m.clone().svd(false, false).singular_values[0]
}

fn min_symmetric_eig(m: &Matrix) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

const LIPSCHITZ_PROBE_SAMPLES: usize = 2000;
const LIPSCHITZ_PROBE_RADIUS: f64 = 2.0;
const LIPSCHITZ_PROBE_SEED: u64 = 0x11b5;

/// Saddle objective
/// `phi(p, q) = 2 e1 p'A1 p + e2 (p'A2 p)^2 - 2 e1 q'B1 q - e2 (q'B2 q)^2 + 4 p'C q`
/// with SPD blocks, solved by the origin. `e1 = 1, e2 = 0` is strongly
/// monotone, `e1 = 0, e2 = 1` monotone, `e1 = 1, e2 = -1` non-monotone with a
/// regular solution.
#[allow(clippy::too_many_arguments)]
pub fn quad_quartic(
    a1: Matrix,
    a2: Matrix,
    b1: Matrix,
    b2: Matrix,
    c: Matrix,
    eps1: f64,
    eps2: f64,
) -> Result<VIProblem> {
    let d1 = a1.nrows();
    let d2 = b1.nrows();
    for (m, rows, cols, name) in [
        (&a1, d1, d1, "a1"),
        (&a2, d1, d1, "a2"),
        (&b1, d2, d2, "b1"),
        (&b2, d2, d2, "b2"),
        (&c, d1, d2, "c"),
    ] {
        if m.nrows() != rows || m.ncols() != cols {
            return Err(Error::InvalidArgument(format!("matrix {name} has the wrong shape")));
        }
    }
    let dim = d1 + d2;

    let (a1_op, a2_op, b1_op, b2_op, c_op) =
        (a1.clone(), a2.clone(), b1.clone(), b2.clone(), c.clone());
    let operator = move |x: &Vector| {
        let p = x.rows(0, d1).into_owned();
        let q = x.rows(d1, d2).into_owned();
        let mut vp = &c_op * &q * 4.0;
        let mut vq = c_op.transpose() * &p * -4.0;
        if eps1 != 0.0 {
            vp += &a1_op * &p * (4.0 * eps1);
            vq += &b1_op * &q * (4.0 * eps1);
        }
        if eps2 != 0.0 {
            let a2p = &a2_op * &p;
            let b2q = &b2_op * &q;
            vp += &a2p * (4.0 * eps2 * p.dot(&a2p));
            vq += &b2q * (4.0 * eps2 * q.dot(&b2q));
        }
        let mut v = Vector::zeros(d1 + d2);
        v.rows_mut(0, d1).copy_from(&vp);
        v.rows_mut(d1, d2).copy_from(&vq);
        v
    };

    let mut problem = VIProblem::new(ConvexSet::whole_space(dim), operator);
    problem.known_solution = Some(Vector::zeros(dim));
    problem.monotonicity_class = match (eps1 > 0.0, eps2) {
        (true, e) if e == 0.0 => MonotonicityClass::StronglyMonotone,
        (false, e) if e > 0.0 && eps1 == 0.0 => MonotonicityClass::Monotone,
        (true, e) if e < 0.0 => MonotonicityClass::NonMonotoneRegular,
        _ => MonotonicityClass::Unknown,
    };

    let (a1_s, b1_s, c_s) = (a1.clone(), b1.clone(), c.clone());
    let (a2_s, b2_s) = (a2, b2);
    problem.saddle = Some(SaddleStructure {
        dim_min: d1,
        dim_max: d2,
        value: Arc::new(move |p: &Vector, q: &Vector| {
            let quad = 2.0 * eps1 * (p.dot(&(&a1_s * p)) - q.dot(&(&b1_s * q)));
            let quart =
                eps2 * (p.dot(&(&a2_s * p)).powi(2) - q.dot(&(&b2_s * q)).powi(2));
            quad + quart + 4.0 * p.dot(&(&c_s * q))
        }),
    });

    if eps2 == 0.0 {
        // the operator is linear: assemble its matrix and take exact constants
        let mut j = Matrix::zeros(dim, dim);
        j.view_mut((0, 0), (d1, d1)).copy_from(&(&a1 * (4.0 * eps1)));
        j.view_mut((0, d1), (d1, d2)).copy_from(&(&c * 4.0));
        j.view_mut((d1, 0), (d2, d1)).copy_from(&(c.transpose() * -4.0));
        j.view_mut((d1, d1), (d2, d2)).copy_from(&(&b1 * (4.0 * eps1)));
        problem.lipschitz = Some(spectral_norm(&j));
        let alpha = min_symmetric_eig(&j);
        if alpha > 0.0 {
            problem.strong_mono = Some(alpha);
        }
        problem.affine = Some(AffineOperator { matrix: j, offset: Vector::zeros(dim) });
    } else {
        let region = ConvexSet::ball(Vector::zeros(dim), LIPSCHITZ_PROBE_RADIUS)
            .expect("probe ball");
        problem.lipschitz = Some(probe_lipschitz(
            &problem,
            LIPSCHITZ_PROBE_SAMPLES,
            LIPSCHITZ_PROBE_SEED,
            &region,
        )?);
    }
    Ok(problem)
}

/// Random instance of the saddle family with Gaussian-derived SPD blocks and
/// coupling `C` scaled by `1/sqrt(d)`.
pub fn make_quad_quartic(
    d1: usize,
    d2: usize,
    eps1: f64,
    eps2: f64,
    seed: u64,
) -> Result<VIProblem> {
    if d1 == 0 || d2 == 0 {
        return Err(Error::InvalidArgument("block dimensions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a1 = random_spd(d1, &mut rng);
    let a2 = random_spd(d1, &mut rng);
    let b1 = random_spd(d2, &mut rng);
    let b2 = random_spd(d2, &mut rng);
    let c = gaussian_matrix(d1, d2, &mut rng) / ((d1 + d2) as f64 / 2.0).sqrt();
    quad_quartic(a1, a2, b1, b2, c, eps1, eps2)
}

/// Linear operator `V(x) = Qx` with exact constants: the symmetric part of `Q`
/// has spectrum in `[alpha, alpha + 0.8 (lipschitz - alpha)]` and the
/// antisymmetric part is rescaled until the spectral norm hits `lipschitz`.
pub fn make_strongly_monotone_quadratic(
    dim: usize,
    alpha: f64,
    lipschitz: f64,
    seed: u64,
) -> Result<VIProblem> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    if !(alpha > 0.0) || !(lipschitz > alpha) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < alpha < lipschitz, got alpha = {alpha}, lipschitz = {lipschitz}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = gaussian_matrix(dim, dim, &mut rng).qr().q();
    let top = alpha + 0.8 * (lipschitz - alpha);
    let spectrum = Vector::from_fn(dim, |i, _| {
        if dim == 1 { alpha } else { alpha + (top - alpha) * i as f64 / (dim - 1) as f64 }
    });
    let sym = &basis * Matrix::from_diagonal(&spectrum) * basis.transpose();

    let g = gaussian_matrix(dim, dim, &mut rng);
    let mut skew = (&g - g.transpose()) * 0.5;
    let q = if dim == 1 {
        // no antisymmetric part in one dimension; rescale the symmetric one
        sym * (lipschitz / top)
    } else {
        skew /= spectral_norm(&skew);
        // spectral_norm(sym + s * skew) is continuous in s, equals `top` < L at
        // s = 0 and grows without bound, so a crossing exists
        let target = lipschitz;
        let mut hi = lipschitz;
        while spectral_norm(&(&sym + &skew * hi)) < target {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if spectral_norm(&(&sym + &skew * mid)) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        &sym + &skew * (0.5 * (lo + hi))
    };

    let qc = q.clone();
    let mut problem = VIProblem::new(ConvexSet::whole_space(dim), move |x: &Vector| &qc * x);
    problem.known_solution = Some(Vector::zeros(dim));
    problem.monotonicity_class = MonotonicityClass::StronglyMonotone;
    problem.strong_mono = Some(min_symmetric_eig(&q));
    problem.lipschitz = Some(spectral_norm(&q));
    problem.affine = Some(AffineOperator { matrix: q, offset: Vector::zeros(dim) });
    Ok(problem)
}

/// Bilinear saddle `phi(p, q) = p'Mq` over the given set (dimension `2 d`),
/// with `M` Gaussian scaled by `1/sqrt(d)`. Monotone but not strongly so; the
/// origin solves it whenever it is feasible.
pub fn make_bilinear(d: usize, seed: u64, set: ConvexSet) -> Result<VIProblem> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    if set.dim() != 2 * d {
        return Err(Error::DimensionMismatch { expected: 2 * d, got: set.dim() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = gaussian_matrix(d, d, &mut rng) / (d as f64).sqrt();

    let mut j = Matrix::zeros(2 * d, 2 * d);
    j.view_mut((0, d), (d, d)).copy_from(&m);
    j.view_mut((d, 0), (d, d)).copy_from(&(-m.transpose()));

    let jc = j.clone();
    let mut problem = VIProblem::new(set, move |x: &Vector| &jc * x);
    problem.monotonicity_class = MonotonicityClass::Monotone;
    problem.lipschitz = Some(spectral_norm(&j));
    let origin = Vector::zeros(2 * d);
    if problem.set.contains(&origin, 0.0) {
        problem.known_solution = Some(origin.clone());
    }
    problem.affine = Some(AffineOperator { matrix: j, offset: origin });
    let mc = m;
    problem.saddle = Some(SaddleStructure {
        dim_min: d,
        dim_max: d,
        value: Arc::new(move |p: &Vector, q: &Vector| p.dot(&(&mc * q))),
    });
    Ok(problem)
}
