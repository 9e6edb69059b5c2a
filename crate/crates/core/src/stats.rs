//! Random sampling primitives for every distribution the sampler touches.
//!
//! All functions are pure given their parameters and the [`RngStream`]
//! passed in: replaying the same seed replays the same draws bit-exactly.

use crate::error::{Error, Result};
use crate::real::{cast, Real};
use crate::rng::RngStream;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Binomial, Distribution};

/// A symmetric positive-definite matrix.
///
/// Construction symmetrizes the input after checking it is symmetric to a
/// 1e-10 relative tolerance, and requires a successful Cholesky
/// factorization, so every held matrix admits one.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix<T: Real> {
    m: DMatrix<T>,
}

impl<T: Real> SpdMatrix<T> {
    pub fn new(m: DMatrix<T>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::dim(format!(
                "SPD matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = m.amax().max(T::one());
        let tol = cast::<T>(1e-10) * scale;
        for i in 0..m.nrows() {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > tol {
                    return Err(Error::linalg(format!(
                        "matrix is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let sym = symmetric_part(&m);
        if sym.clone().cholesky().is_none() {
            return Err(Error::linalg("matrix is not positive definite"));
        }
        Ok(Self { m: sym })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: DMatrix::identity(dim, dim),
        }
    }

    /// `s * I`, requiring `s > 0`.
    pub fn scaled_identity(dim: usize, s: T) -> Result<Self> {
        if !(s > T::zero()) {
            return Err(Error::param("scaled identity requires a positive scale"));
        }
        Ok(Self {
            m: DMatrix::identity(dim, dim) * s,
        })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.m
    }

    pub fn into_inner(self) -> DMatrix<T> {
        self.m
    }

    pub fn cholesky(&self) -> Result<Cholesky<T, Dyn>> {
        self.m
            .clone()
            .cholesky()
            .ok_or_else(|| Error::linalg("Cholesky failed on an SPD-typed matrix"))
    }

    /// Inverse computed through the Cholesky factor.
    pub fn inverse(&self) -> Result<DMatrix<T>> {
        Ok(self.cholesky()?.inverse())
    }
}

pub(crate) fn symmetric_part<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let half = cast::<T>(0.5);
    (m + m.transpose()) * half
}

/// Draw from Gamma(shape, rate), mean `shape / rate`.
pub fn sample_gamma<T: Real>(shape: T, rate: T, rng: &mut RngStream) -> Result<T> {
    if !(shape > T::zero()) || !(rate > T::zero()) {
        return Err(Error::param(format!(
            "gamma requires shape > 0 and rate > 0, got shape={shape:?}, rate={rate:?}"
        )));
    }
    Ok(T::gamma_draw(shape, T::one() / rate, rng))
}

/// Draw from Beta(c, d).
pub fn sample_beta<T: Real>(c: T, d: T, rng: &mut RngStream) -> Result<T> {
    if !(c > T::zero()) || !(d > T::zero()) {
        return Err(Error::param(format!(
            "beta requires positive parameters, got c={c:?}, d={d:?}"
        )));
    }
    Ok(T::beta_draw(c, d, rng))
}

/// Draw a probability vector from Dirichlet(concentration).
pub fn sample_dirichlet<T: Real>(concentration: &[T], rng: &mut RngStream) -> Result<DVector<T>> {
    if concentration.is_empty() {
        return Err(Error::param("dirichlet requires a non-empty concentration"));
    }
    for (i, &a) in concentration.iter().enumerate() {
        if !(a > T::zero()) || !a.is_finite() {
            return Err(Error::param(format!(
                "dirichlet concentration[{i}] must be positive and finite, got {a:?}"
            )));
        }
    }
    if concentration.len() == 1 {
        return Ok(DVector::from_element(1, T::one()));
    }
    let mut draws = DVector::zeros(concentration.len());
    let mut total = T::zero();
    for (i, &a) in concentration.iter().enumerate() {
        let g = T::gamma_draw(a, T::one(), rng);
        draws[i] = g;
        total += g;
    }
    if !(total > T::zero()) {
        // Every gamma draw underflowed (only possible for tiny shapes); the
        // limiting draw is a point mass with P(coordinate i) ∝ concentration.
        let idx = sample_categorical(concentration, rng)?;
        draws.fill(T::zero());
        draws[idx] = T::one();
        return Ok(draws);
    }
    Ok(draws / total)
}

/// Draw an index with probability proportional to `weights`.
pub fn sample_categorical<T: Real>(weights: &[T], rng: &mut RngStream) -> Result<usize> {
    if weights.is_empty() {
        return Err(Error::param("categorical requires at least one weight"));
    }
    let mut total = T::zero();
    for (i, &w) in weights.iter().enumerate() {
        if w < T::zero() || !w.is_finite() {
            return Err(Error::param(format!(
                "categorical weight[{i}] must be finite and nonnegative, got {w:?}"
            )));
        }
        total += w;
    }
    if !(total > T::zero()) {
        return Err(Error::param("categorical weights sum to zero"));
    }
    let target = T::open01(rng) * total;
    let mut cum = T::zero();
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > T::zero() {
            last_positive = i;
            cum += w;
            if target < cum {
                return Ok(i);
            }
        }
    }
    // Rounding pushed the target past the final cumulative value.
    Ok(last_positive)
}

/// Draw an index with probability proportional to `exp(log_weights)`.
///
/// Weights are shifted by their maximum before exponentiation so that long
/// sequences of very negative log-likelihoods cannot underflow to an
/// all-zero weight vector.
pub fn sample_categorical_log<T: Real>(log_weights: &[T], rng: &mut RngStream) -> Result<usize> {
    if log_weights.is_empty() {
        return Err(Error::param("categorical requires at least one weight"));
    }
    let mut max = T::neg_infinity();
    for &lw in log_weights {
        if lw.is_nan() {
            return Err(Error::param("categorical log-weight is NaN"));
        }
        if lw > max {
            max = lw;
        }
    }
    if max == T::neg_infinity() {
        return Err(Error::param("all categorical log-weights are -inf"));
    }
    let weights: Vec<T> = log_weights.iter().map(|&lw| (lw - max).exp()).collect();
    sample_categorical(&weights, rng)
}

/// Draw from Binomial(n, p).
pub fn sample_binomial<T: Real>(n: u64, p: T, rng: &mut RngStream) -> Result<u64> {
    let p = p.to_f64().unwrap_or(f64::NAN);
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param(format!(
            "binomial requires p in [0,1], got {p}"
        )));
    }
    let dist = Binomial::new(n, p).map_err(|e| Error::param(format!("binomial: {e}")))?;
    Ok(dist.sample(rng))
}

/// Draw from a multivariate normal N(mean, cov).
pub fn sample_mvn<T: Real>(
    mean: &DVector<T>,
    cov: &SpdMatrix<T>,
    rng: &mut RngStream,
) -> Result<DVector<T>> {
    if mean.len() != cov.dim() {
        return Err(Error::dim(format!(
            "mvn mean has length {}, covariance is {}x{}",
            mean.len(),
            cov.dim(),
            cov.dim()
        )));
    }
    let chol = cov
        .cholesky()
        .map_err(|_| Error::linalg("mvn covariance is not positive definite"))?;
    let z = standard_normal_vector(mean.len(), rng);
    Ok(mean + chol.l() * z)
}

/// Draw from a Gaussian in information form: precision `lambda`, mean
/// `lambda⁻¹ theta`.
pub fn sample_mvn_info<T: Real>(
    theta: &DVector<T>,
    lambda: &SpdMatrix<T>,
    rng: &mut RngStream,
) -> Result<DVector<T>> {
    if theta.len() != lambda.dim() {
        return Err(Error::dim(format!(
            "information vector has length {}, precision is {}x{}",
            theta.len(),
            lambda.dim(),
            lambda.dim()
        )));
    }
    let chol = lambda
        .cholesky()
        .map_err(|_| Error::linalg("information matrix is not positive definite"))?;
    let mean = chol.solve(theta);
    let z = standard_normal_vector(theta.len(), rng);
    // x = mean + L⁻ᵀ z has covariance (L Lᵀ)⁻¹ = Λ⁻¹.
    let shift = chol
        .l()
        .tr_solve_lower_triangular(&z)
        .ok_or_else(|| Error::linalg("triangular solve failed in information sampling"))?;
    Ok(mean + shift)
}

/// Draw an SPD matrix from the inverse-Wishart IW(dof, scale).
///
/// Realized by a Bartlett draw of Wishart(dof, scale⁻¹) followed by a
/// triangular inversion; the result is symmetrized to absorb round-off.
pub fn sample_inverse_wishart<T: Real>(
    dof: T,
    scale: &SpdMatrix<T>,
    rng: &mut RngStream,
) -> Result<SpdMatrix<T>> {
    let d = scale.dim();
    if !(dof > cast::<T>((d - 1) as f64)) {
        return Err(Error::param(format!(
            "inverse-Wishart requires dof > D-1 = {}, got {dof:?}",
            d - 1
        )));
    }
    let inv_scale = scale.inverse()?;
    let lv = inv_scale
        .cholesky()
        .ok_or_else(|| Error::linalg("inverse of IW scale lost positive definiteness"))?
        .l();
    let two = cast::<T>(2.0);
    let half = cast::<T>(0.5);
    let mut bartlett = DMatrix::<T>::zeros(d, d);
    for i in 0..d {
        let chi_dof = dof - cast::<T>(i as f64);
        bartlett[(i, i)] = T::gamma_draw(chi_dof * half, two, rng).sqrt();
        for j in 0..i {
            bartlett[(i, j)] = T::standard_normal(rng);
        }
    }
    // W = (Lv A)(Lv A)ᵀ ~ Wishart(dof, scale⁻¹); the IW draw is W⁻¹.
    let b = lv * bartlett;
    let inv_b = b
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| Error::linalg("Bartlett factor is singular"))?;
    let draw = symmetric_part(&(inv_b.transpose() * inv_b));
    SpdMatrix::new(draw)
}

/// Draw from the matrix normal MN(mean, row_cov, col_cov).
pub fn sample_matrix_normal<T: Real>(
    mean: &DMatrix<T>,
    row_cov: &SpdMatrix<T>,
    col_cov: &SpdMatrix<T>,
    rng: &mut RngStream,
) -> Result<DMatrix<T>> {
    let (n, p) = mean.shape();
    if row_cov.dim() != n || col_cov.dim() != p {
        return Err(Error::dim(format!(
            "matrix normal mean is {n}x{p} but scales are {}x{} and {}x{}",
            row_cov.dim(),
            row_cov.dim(),
            col_cov.dim(),
            col_cov.dim()
        )));
    }
    let lu = row_cov.cholesky()?.l();
    let lv = col_cov.cholesky()?.l();
    let z = DMatrix::from_fn(n, p, |_, _| T::standard_normal(rng));
    Ok(mean + lu * z * lv.transpose())
}

pub(crate) fn standard_normal_vector<T: Real>(dim: usize, rng: &mut RngStream) -> DVector<T> {
    DVector::from_fn(dim, |_, _| T::standard_normal(rng))
}
