//! Conjugate matrix-normal inverse-Wishart sampling of per-mode dynamics.
//!
//! Conditioned on the state and mode sequences, each mode's regression
//! `x_t = A x_{t-1} + e_t`, `e_t ~ N(0, Σ)` has a conjugate posterior:
//! `Σ` is inverse-Wishart and `A | Σ` is matrix normal. `Σ` is always drawn
//! first and `A` conditions on it.
//!
//! The transition pair for time `t` is `(x_{t-1} → x_t)`, attributed to mode
//! `z_t`; the first time step contributes no pair.

use crate::error::{Error, Result};
use crate::real::{cast, Real};
use crate::rng::RngStream;
use crate::stats::{
    sample_inverse_wishart, sample_matrix_normal, symmetric_part, SpdMatrix,
};
use nalgebra::DMatrix;

/// Matrix-normal inverse-Wishart prior on a mode's `(A, Σ)`.
///
/// `A | Σ ~ MN(M, Σ, K⁻¹)` and `Σ ~ IW(n₀, S₀)`; `K` acts as a column
/// precision, so larger `K` pulls `A` harder toward `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct MniwPrior<T: Real> {
    m: DMatrix<T>,
    k: SpdMatrix<T>,
    n0: T,
    s0: SpdMatrix<T>,
}

impl<T: Real> MniwPrior<T> {
    pub fn new(m: DMatrix<T>, k: SpdMatrix<T>, n0: T, s0: SpdMatrix<T>) -> Result<Self> {
        let d = m.nrows();
        if m.ncols() != d {
            return Err(Error::dim("prior mean M must be square"));
        }
        if k.dim() != d || s0.dim() != d {
            return Err(Error::dim("prior scales must match the state dimension"));
        }
        if !(n0 > cast::<T>((d.saturating_sub(1)) as f64)) {
            return Err(Error::param(format!(
                "inverse-Wishart degrees of freedom must exceed D-1 = {}",
                d - 1
            )));
        }
        Ok(Self { m, k, n0, s0 })
    }

    /// Default weakly-informative prior: `M = I` (persistence bias),
    /// `K = 0.01·I`, `n₀ = D+2`, `S₀ = 0.01·I`.
    pub fn default_for_dim(d: usize) -> Result<Self> {
        let hundredth = cast::<T>(0.01);
        Self::new(
            DMatrix::identity(d, d),
            SpdMatrix::scaled_identity(d, hundredth)?,
            cast::<T>((d + 2) as f64),
            SpdMatrix::scaled_identity(d, hundredth)?,
        )
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn mean(&self) -> &DMatrix<T> {
        &self.m
    }

    pub fn col_precision(&self) -> &SpdMatrix<T> {
        &self.k
    }

    pub fn dof(&self) -> T {
        self.n0
    }

    pub fn scale(&self) -> &SpdMatrix<T> {
        &self.s0
    }
}

/// Prior-augmented regression statistics for one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats<T: Real> {
    /// `X̄X̄ᵀ + K` (always SPD thanks to the prior term).
    pub s_xbarxbar: DMatrix<T>,
    /// `XX̄ᵀ + MK`.
    pub s_xxbar: DMatrix<T>,
    /// `XXᵀ + MKMᵀ`.
    pub s_xx: DMatrix<T>,
    /// Number of transition pairs assigned to the mode.
    pub n_pairs: usize,
}

/// Accumulate the mode-`k` regression statistics over `(x_{t-1}, x_t)` pairs.
///
/// `x` is `D×T` with one column per time step; `z` holds one mode label per
/// column.
pub fn accumulate_statistics<T: Real>(
    x: &DMatrix<T>,
    z: &[usize],
    k: usize,
    prior: &MniwPrior<T>,
) -> Result<SufficientStats<T>> {
    let d = prior.dim();
    if x.nrows() != d {
        return Err(Error::dim(format!(
            "state dimension {} does not match prior dimension {d}",
            x.nrows()
        )));
    }
    if x.ncols() != z.len() {
        return Err(Error::dim(format!(
            "state sequence has {} steps but mode sequence has {}",
            x.ncols(),
            z.len()
        )));
    }
    let mut xbar_xbar = DMatrix::<T>::zeros(d, d);
    let mut x_xbar = DMatrix::<T>::zeros(d, d);
    let mut x_x = DMatrix::<T>::zeros(d, d);
    let mut n_pairs = 0usize;
    for t in 1..z.len() {
        if z[t] != k {
            continue;
        }
        let prev = x.column(t - 1);
        let cur = x.column(t);
        xbar_xbar += prev * prev.transpose();
        x_xbar += cur * prev.transpose();
        x_x += cur * cur.transpose();
        n_pairs += 1;
    }
    let km = prior.col_precision().matrix();
    let mk = prior.mean() * km;
    Ok(SufficientStats {
        s_xbarxbar: xbar_xbar + km,
        s_xxbar: x_xbar + &mk,
        s_xx: x_x + mk * prior.mean().transpose(),
        n_pairs,
    })
}

/// Draw `Σ ~ IW(N_k + n₀, S_{x|x̄} + S₀)`.
pub fn sample_sigma<T: Real>(
    stats: &SufficientStats<T>,
    prior: &MniwPrior<T>,
    rng: &mut RngStream,
) -> Result<SpdMatrix<T>> {
    let chol = stats
        .s_xbarxbar
        .clone()
        .cholesky()
        .ok_or_else(|| Error::linalg("S_xbarxbar is not positive definite"))?;
    // S_{x|x̄} = S_xx - S_xx̄ S_x̄x̄⁻¹ S_xx̄ᵀ.
    let cross = chol.solve(&stats.s_xxbar.transpose());
    let residual = symmetric_part(&(&stats.s_xx - &stats.s_xxbar * cross));
    let dof = cast::<T>(stats.n_pairs as f64) + prior.dof();
    match SpdMatrix::new(&residual + prior.scale().matrix()) {
        Ok(scale) => sample_inverse_wishart(dof, &scale, rng),
        Err(_) => {
            // The subtraction can cancel catastrophically when the states
            // span many orders of magnitude; project back onto the PSD cone.
            let scale = SpdMatrix::new(psd_projection(&residual) + prior.scale().matrix())?;
            sample_inverse_wishart(dof, &scale, rng)
        }
    }
}

/// Nearest-PSD projection: clamp negative eigenvalues of a symmetric matrix.
fn psd_projection<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let eig = m.clone().symmetric_eigen();
    let mut acc = DMatrix::zeros(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        if eig.eigenvalues[i] > T::zero() {
            let v = eig.eigenvectors.column(i);
            acc += v * v.transpose() * eig.eigenvalues[i];
        }
    }
    acc
}

/// Draw `A ~ MN(S_xx̄ S_x̄x̄⁻¹, Σ, S_x̄x̄⁻¹)` given a sampled `Σ`.
///
/// The third matrix-normal argument is the column *covariance*; the
/// statistics matrix enters in inverted (information) form, which is what
/// makes the posterior tighten as pairs accumulate.
pub fn sample_dynamics_matrix<T: Real>(
    stats: &SufficientStats<T>,
    sigma: &SpdMatrix<T>,
    rng: &mut RngStream,
) -> Result<DMatrix<T>> {
    let chol = stats
        .s_xbarxbar
        .clone()
        .cholesky()
        .ok_or_else(|| Error::linalg("S_xbarxbar is not positive definite"))?;
    let mean = chol.solve(&stats.s_xxbar.transpose()).transpose();
    let col_cov = SpdMatrix::new(symmetric_part(&chol.inverse()))?;
    sample_matrix_normal(&mean, sigma, &col_cov, rng)
}

/// Per-mode dynamics: transition matrix and process noise.
#[derive(Debug, Clone, PartialEq)]
pub struct DynParams<T: Real> {
    pub a: DMatrix<T>,
    pub sigma: SpdMatrix<T>,
}

impl<T: Real> DynParams<T> {
    pub fn new(a: DMatrix<T>, sigma: SpdMatrix<T>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() != sigma.dim() {
            return Err(Error::dim("dynamics matrix and noise must be square and match"));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("dynamics matrix has non-finite entries"));
        }
        Ok(Self { a, sigma })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

/// Resample `(A, Σ)` for every mode label in `0..l`.
///
/// Modes with no assigned pairs fall back to prior draws, so the state keeps
/// all `l` slots populated.
pub fn sample_dynamics_all<T: Real>(
    x: &DMatrix<T>,
    z: &[usize],
    prior: &MniwPrior<T>,
    l: usize,
    rng: &mut RngStream,
) -> Result<Vec<DynParams<T>>> {
    let mut out = Vec::with_capacity(l);
    for k in 0..l {
        let stats = accumulate_statistics(x, z, k, prior)?;
        let sigma = sample_sigma(&stats, prior, rng)?;
        let a = sample_dynamics_matrix(&stats, &sigma, rng)?;
        out.push(DynParams::new(a, sigma)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn rng(seed: u64) -> RngStream {
        RngStream::from_seed(seed)
    }

    fn zero_mean_prior(d: usize, k_scale: f64) -> MniwPrior<f64> {
        MniwPrior::new(
            DMatrix::zeros(d, d),
            SpdMatrix::scaled_identity(d, k_scale).unwrap(),
            (d + 2) as f64,
            SpdMatrix::scaled_identity(d, 0.01).unwrap(),
        )
        .unwrap()
    }

    /// Roll out a scalar AR(1) sequence with dynamics `a` and noise `sigma`.
    fn scalar_ar_data(a: f64, sigma: f64, t: usize, seed: u64) -> DMatrix<f64> {
        let mut r = rng(seed);
        let mut x = DMatrix::zeros(1, t);
        x[(0, 0)] = 1.0;
        for i in 1..t {
            x[(0, i)] = a * x[(0, i - 1)] + sigma.sqrt() * f64::standard_normal(&mut r);
        }
        x
    }

    #[test]
    fn empty_mode_stats_equal_prior_terms() {
        let prior = MniwPrior::<f64>::default_for_dim(2).unwrap();
        let x = DMatrix::zeros(2, 5);
        let z = vec![0; 5];
        let stats = accumulate_statistics(&x, &z, 1, &prior).unwrap();
        assert_eq!(stats.n_pairs, 0);
        assert_relative_eq!(stats.s_xbarxbar, prior.col_precision().matrix().clone());
        assert_relative_eq!(stats.s_xxbar, prior.mean() * prior.col_precision().matrix());
        assert_relative_eq!(
            stats.s_xx,
            prior.mean() * prior.col_precision().matrix() * prior.mean().transpose()
        );
    }

    #[test]
    fn single_pair_statistics() {
        // One pair x̄ = e₁, x = e₂ with M = 0, K = I.
        let prior = zero_mean_prior(2, 1.0);
        let mut x = DMatrix::zeros(2, 2);
        x[(0, 0)] = 1.0;
        x[(1, 1)] = 1.0;
        let z = vec![0, 0];
        let stats = accumulate_statistics(&x, &z, 0, &prior).unwrap();
        assert_eq!(stats.n_pairs, 1);
        let mut expect_xbar = DMatrix::identity(2, 2);
        expect_xbar[(0, 0)] = 2.0;
        assert_relative_eq!(stats.s_xbarxbar, expect_xbar);
        let mut expect_cross = DMatrix::zeros(2, 2);
        expect_cross[(1, 0)] = 1.0;
        assert_relative_eq!(stats.s_xxbar, expect_cross);
    }

    #[test]
    fn streamed_statistics_match_batch_products() {
        let mut r = rng(1);
        let d = 2;
        let t = 40;
        let prior = MniwPrior::<f64>::default_for_dim(d).unwrap();
        let x = DMatrix::from_fn(d, t, |_, _| f64::standard_normal(&mut r));
        let z: Vec<usize> = (0..t).map(|i| i % 3).collect();
        let k = 1;
        let stats = accumulate_statistics(&x, &z, k, &prior).unwrap();

        // Batch oracle: assemble X and X̄ as explicit matrices and multiply.
        let cols: Vec<usize> = (1..t).filter(|&i| z[i] == k).collect();
        let xk = DMatrix::from_fn(d, cols.len(), |i, j| x[(i, cols[j])]);
        let xbark = DMatrix::from_fn(d, cols.len(), |i, j| x[(i, cols[j] - 1)]);
        let km = prior.col_precision().matrix();
        assert_relative_eq!(
            stats.s_xbarxbar,
            &xbark * xbark.transpose() + km,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            stats.s_xxbar,
            &xk * xbark.transpose() + prior.mean() * km,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            stats.s_xx,
            &xk * xk.transpose() + prior.mean() * km * prior.mean().transpose(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn sigma_prior_recovery_at_zero_data() {
        // With no pairs S_{x|x̄} vanishes, so Σ ~ IW(n₀, S₀) exactly.
        let mut r = rng(2);
        let prior = MniwPrior::<f64>::default_for_dim(1).unwrap();
        let x = DMatrix::zeros(1, 3);
        let z = vec![0; 3];
        let stats = accumulate_statistics(&x, &z, 5.min(0), &prior).unwrap();
        assert_eq!(stats.n_pairs, 2); // mode 0 holds both pairs here
        let empty = accumulate_statistics(&x, &z, 1, &prior).unwrap();
        assert_eq!(empty.n_pairs, 0);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sample_sigma(&empty, &prior, &mut r).unwrap().matrix()[(0, 0)])
            .sum::<f64>()
            / n as f64;
        // E[IW(3, 0.01)] = 0.01 / (3 - 1 - 1).
        let expect = 0.01;
        assert!((mean - expect).abs() / expect < 0.03, "mean={mean}");
    }

    #[test]
    fn scalar_posterior_matches_normal_inverse_gamma() {
        // D = 1: Σ ~ IG((N+n₀)/2, (S_{x|x̄}+S₀)/2) and A | Σ ~ N(m̂, Σ/S_x̄x̄).
        let mut r = rng(3);
        let prior = zero_mean_prior(1, 0.5);
        let x = scalar_ar_data(0.8, 0.04, 60, 7);
        let z = vec![0; 60];
        let stats = accumulate_statistics(&x, &z, 0, &prior).unwrap();

        let sxx = stats.s_xbarxbar[(0, 0)];
        let sxy = stats.s_xxbar[(0, 0)];
        let syy = stats.s_xx[(0, 0)];
        let a_hat = sxy / sxx;
        let resid = syy - sxy * sxy / sxx;
        let shape = (stats.n_pairs as f64 + prior.dof()) / 2.0;
        let scale = (resid + 0.01) / 2.0;
        let sigma_mean_expect = scale / (shape - 1.0);
        let n = 100_000;
        let mut sigma_mean = 0.0;
        let mut a_mean = 0.0;
        let mut a_std_accum = 0.0;
        for _ in 0..n {
            let sigma = sample_sigma(&stats, &prior, &mut r).unwrap();
            let a = sample_dynamics_matrix(&stats, &sigma, &mut r).unwrap();
            sigma_mean += sigma.matrix()[(0, 0)];
            a_mean += a[(0, 0)];
            a_std_accum += (a[(0, 0)] - a_hat).powi(2);
        }
        sigma_mean /= n as f64;
        a_mean /= n as f64;
        let a_var = a_std_accum / n as f64;
        assert!(
            (sigma_mean - sigma_mean_expect).abs() / sigma_mean_expect < 0.03,
            "sigma mean {sigma_mean} vs {sigma_mean_expect}"
        );
        assert!((a_mean - a_hat).abs() / a_hat.abs() < 0.03);
        // Var[A] = E[Σ]/S_x̄x̄ under the NIG posterior.
        let a_var_expect = sigma_mean_expect / sxx;
        assert!(
            (a_var - a_var_expect).abs() / a_var_expect < 0.05,
            "a var {a_var} vs {a_var_expect}"
        );
    }

    #[test]
    fn sigma_posterior_is_consistent() {
        let mut r = rng(4);
        let true_sigma = 0.09;
        let x = scalar_ar_data(0.5, true_sigma, 10_000, 11);
        let z = vec![0; 10_000];
        let prior = zero_mean_prior(1, 0.01);
        let stats = accumulate_statistics(&x, &z, 0, &prior).unwrap();
        let n = 2000;
        let mean: f64 = (0..n)
            .map(|_| sample_sigma(&stats, &prior, &mut r).unwrap().matrix()[(0, 0)])
            .sum::<f64>()
            / n as f64;
        assert!(
            (mean - true_sigma).abs() / true_sigma < 0.05,
            "posterior mean {mean} vs true {true_sigma}"
        );
    }

    #[test]
    fn dynamics_matrix_prior_mean_zero_at_no_data() {
        let mut r = rng(5);
        let prior = zero_mean_prior(2, 1.0);
        let x = DMatrix::zeros(2, 2);
        let z = vec![1, 1];
        let empty = accumulate_statistics(&x, &z, 0, &prior).unwrap();
        let sigma = SpdMatrix::scaled_identity(2, 0.5).unwrap();
        let n = 20_000;
        let mut mean = DMatrix::zeros(2, 2);
        for _ in 0..n {
            mean += sample_dynamics_matrix(&empty, &sigma, &mut r).unwrap();
        }
        mean /= n as f64;
        assert!(mean.amax() < 0.02, "prior mean should be 0, got {mean}");
    }

    #[test]
    fn dynamics_matrix_concentrates_on_noiseless_slope() {
        let mut r = rng(6);
        let t = 201;
        let mut x = DMatrix::zeros(1, t);
        x[(0, 0)] = 1e-20;
        for i in 1..t {
            x[(0, i)] = 2.0 * x[(0, i - 1)];
        }
        let z = vec![0; t];
        let prior = zero_mean_prior(1, 1e-6);
        let stats = accumulate_statistics(&x, &z, 0, &prior).unwrap();
        let sigma = SpdMatrix::scaled_identity(1, 1e-10).unwrap();
        for _ in 0..100 {
            let a = sample_dynamics_matrix(&stats, &sigma, &mut r).unwrap();
            assert!((a[(0, 0)] - 2.0).abs() < 1e-2, "a={}", a[(0, 0)]);
        }
    }

    #[test]
    fn toy_mode_posterior_mean_recovers_dynamics() {
        // Mode 0 of the reference trajectory with the true assignments.
        let mut r = rng(7);
        let spec = crate::data::toy_spec::<f64>(400, None).unwrap();
        let traj = crate::data::generate_slds(&spec, &mut r).unwrap();
        let a_true = spec.dynamics[0].a.clone();
        let x = traj.x_true.transpose();
        let prior = MniwPrior::<f64>::default_for_dim(2).unwrap();
        let stats = accumulate_statistics(&x, &traj.z_true, 0, &prior).unwrap();
        assert!(stats.n_pairs > 100);
        let n = 500;
        let mut mean = DMatrix::zeros(2, 2);
        for _ in 0..n {
            let sigma = sample_sigma(&stats, &prior, &mut r).unwrap();
            mean += sample_dynamics_matrix(&stats, &sigma, &mut r).unwrap();
        }
        mean /= n as f64;
        assert!(
            (&mean - &a_true).amax() < 0.05,
            "posterior mean {mean} vs true {a_true}"
        );
    }

    #[test]
    fn posterior_mean_converges_to_least_squares() {
        let x = scalar_ar_data(0.7, 0.01, 10_000, 13);
        let z = vec![0; 10_000];
        let prior = zero_mean_prior(1, 0.01);
        let stats = accumulate_statistics(&x, &z, 0, &prior).unwrap();
        let posterior_mean = stats.s_xxbar[(0, 0)] / stats.s_xbarxbar[(0, 0)];
        // Ordinary least squares without the prior terms.
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for t in 1..10_000 {
            sxx += x[(0, t - 1)] * x[(0, t - 1)];
            sxy += x[(0, t)] * x[(0, t - 1)];
        }
        let ols = sxy / sxx;
        assert!(
            (posterior_mean - ols).abs() / ols.abs() < 0.01,
            "posterior {posterior_mean} vs OLS {ols}"
        );
    }

    #[test]
    fn all_modes_resampled_and_empty_modes_survive() {
        let mut r = rng(8);
        let prior = MniwPrior::<f64>::default_for_dim(2).unwrap();
        let x = DMatrix::from_fn(2, 30, |_, _| f64::standard_normal(&mut r));
        let z: Vec<usize> = (0..30).map(|i| i % 2).collect();
        let l = 5;
        let all = sample_dynamics_all(&x, &z, &prior, l, &mut r).unwrap();
        assert_eq!(all.len(), l);
        for dp in &all {
            assert!(dp.a.iter().all(|v| v.is_finite()));
            assert!(dp.sigma.cholesky().is_ok());
        }
    }

    #[test]
    fn label_permutation_permutes_statistics() {
        let mut r = rng(9);
        let prior = MniwPrior::<f64>::default_for_dim(2).unwrap();
        let x = DMatrix::from_fn(2, 40, |_, _| f64::standard_normal(&mut r));
        let z: Vec<usize> = (0..40).map(|i| (i / 5) % 3).collect();
        // Swap labels 0 and 2.
        let perm = [2usize, 1, 0];
        let z_perm: Vec<usize> = z.iter().map(|&m| perm[m]).collect();
        for k in 0..3 {
            let a = accumulate_statistics(&x, &z, k, &prior).unwrap();
            let b = accumulate_statistics(&x, &z_perm, perm[k], &prior).unwrap();
            assert_eq!(a.n_pairs, b.n_pairs);
            assert_relative_eq!(a.s_xx, b.s_xx);
            assert_relative_eq!(a.s_xxbar, b.s_xxbar);
            assert_relative_eq!(a.s_xbarxbar, b.s_xbarxbar);
        }
    }

    #[test]
    fn single_mode_recovers_generating_system() {
        let mut r = rng(10);
        let a_true = 0.85;
        let sigma_true = 0.04;
        let x = scalar_ar_data(a_true, sigma_true, 5000, 17);
        let z = vec![0; 5000];
        let prior = zero_mean_prior(1, 0.01);
        let n = 400;
        let mut a_mean = 0.0;
        let mut s_mean = 0.0;
        for _ in 0..n {
            let params = sample_dynamics_all(&x, &z, &prior, 1, &mut r).unwrap();
            a_mean += params[0].a[(0, 0)];
            s_mean += params[0].sigma.matrix()[(0, 0)];
        }
        a_mean /= n as f64;
        s_mean /= n as f64;
        assert!((a_mean - a_true).abs() / a_true < 0.05, "a={a_mean}");
        assert!((s_mean - sigma_true).abs() / sigma_true < 0.05, "sigma={s_mean}");
    }
}
