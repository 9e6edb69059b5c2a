//! Gaussian and discrete message passing along the state chain.
//!
//! Continuous messages are kept in information form `(Λ, ϑ)`, i.e. the
//! factor `exp(-½ xᵀΛx + ϑᵀx)`. The backward filter runs from the end of
//! the sequence toward the front, marginalizing future states; the forward
//! filter marginalizes past states. Both re-symmetrize every intermediate
//! matrix, and any near-singular sum gets a tiny diagonal jitter before
//! inversion.
//!
//! Discrete messages over mode labels are computed in log space with
//! per-step max subtraction and stored row-normalized.

use crate::dynamics::DynParams;
use crate::error::{Error, Result};
use crate::hdp::TransitionModel;
use crate::real::{cast, Real};
use crate::stats::{symmetric_part, SpdMatrix};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// A Gaussian factor in information form.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoMessage<T: Real> {
    /// Information matrix `Λ` (symmetric PSD; the terminal message is zero).
    pub lambda: DMatrix<T>,
    /// Information vector `ϑ`.
    pub theta: DVector<T>,
}

impl<T: Real> InfoMessage<T> {
    /// The vacuous message `(Λ, ϑ) = (0, 0)`.
    pub fn zero(dim: usize) -> Self {
        Self {
            lambda: DMatrix::zeros(dim, dim),
            theta: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// Check symmetry (1e-10) and positive semidefiniteness (-1e-10).
    pub fn check(&self) -> Result<()> {
        let scale = self.lambda.amax().max(T::one());
        let tol = cast::<T>(1e-10) * scale;
        for i in 0..self.lambda.nrows() {
            for j in 0..i {
                if (self.lambda[(i, j)] - self.lambda[(j, i)]).abs() > tol {
                    return Err(Error::linalg("information matrix is not symmetric"));
                }
            }
        }
        let eigs = self.lambda.clone().symmetric_eigenvalues();
        if eigs.iter().any(|&e| e < -tol) {
            return Err(Error::linalg("information matrix is not PSD"));
        }
        Ok(())
    }
}

/// Linear-Gaussian observation model `y = Cx + w`, `w ~ N(0, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsModel<T: Real> {
    c: DMatrix<T>,
    r: SpdMatrix<T>,
    ct_rinv: DMatrix<T>,
    obs_info: DMatrix<T>,
    pinv_c: DMatrix<T>,
}

impl<T: Real> ObsModel<T> {
    pub fn new(c: DMatrix<T>, r: SpdMatrix<T>) -> Result<Self> {
        if c.nrows() != r.dim() {
            return Err(Error::dim(format!(
                "observation matrix has {} rows but noise is {}x{}",
                c.nrows(),
                r.dim(),
                r.dim()
            )));
        }
        if c.nrows() == 0 || c.ncols() == 0 {
            return Err(Error::dim("observation matrix must be non-empty"));
        }
        let rinv = r.inverse()?;
        let ct_rinv = c.transpose() * rinv;
        let obs_info = symmetric_part(&(&ct_rinv * &c));
        let pinv_c = c
            .clone()
            .pseudo_inverse(cast::<T>(1e-12))
            .map_err(|e| Error::linalg(format!("observation matrix pseudo-inverse: {e}")))?;
        Ok(Self {
            c,
            r,
            ct_rinv,
            obs_info,
            pinv_c,
        })
    }

    /// `C = I` with the given noise.
    pub fn identity(r: SpdMatrix<T>) -> Self {
        let d = r.dim();
        Self::new(DMatrix::identity(d, d), r).expect("identity observation model is valid")
    }

    pub fn obs_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.c.ncols()
    }

    pub fn c(&self) -> &DMatrix<T> {
        &self.c
    }

    pub fn r(&self) -> &SpdMatrix<T> {
        &self.r
    }

    /// `CᵀR⁻¹C`, the information added by one observation.
    pub fn obs_info(&self) -> &DMatrix<T> {
        &self.obs_info
    }

    /// `CᵀR⁻¹ y`, the information vector added by observation `y`.
    pub fn obs_theta(&self, y: &DVector<T>) -> DVector<T> {
        &self.ct_rinv * y
    }

    /// Map an observation into state space through the pseudo-inverse.
    pub fn state_from_obs(&self, y: &DVector<T>) -> DVector<T> {
        &self.pinv_c * y
    }
}

/// Prior on the pre-sequence state `x₀ ~ N(mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePrior<T: Real> {
    pub mean: DVector<T>,
    pub cov: SpdMatrix<T>,
}

impl<T: Real> StatePrior<T> {
    pub fn new(mean: DVector<T>, cov: SpdMatrix<T>) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::dim("state prior mean and covariance disagree"));
        }
        Ok(Self { mean, cov })
    }

    /// The prior as an information-form message.
    pub fn info(&self) -> Result<InfoMessage<T>> {
        let lambda = self.cov.inverse()?;
        let theta = &lambda * &self.mean;
        Ok(InfoMessage {
            lambda: symmetric_part(&lambda),
            theta,
        })
    }
}

/// Cholesky that tolerates slightly indefinite inputs.
///
/// Symmetrizes, then retries once with a 1e-10 diagonal jitter when the
/// smallest eigenvalue sits below 1e-12.
pub(crate) fn robust_cholesky<T: Real>(m: &DMatrix<T>, what: &str) -> Result<Cholesky<T, Dyn>> {
    let sym = symmetric_part(m);
    if let Some(chol) = sym.clone().cholesky() {
        return Ok(chol);
    }
    let eig_min = sym
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(T::infinity(), |acc, &e| acc.min(e));
    if eig_min < cast::<T>(1e-12) {
        let jittered = &sym + DMatrix::identity(m.nrows(), m.ncols()) * cast::<T>(1e-10);
        if let Some(chol) = jittered.cholesky() {
            return Ok(chol);
        }
    }
    Err(Error::linalg(format!(
        "{what}: matrix not positive definite (min eigenvalue {:?})",
        eig_min.to_f64()
    )))
}

fn ln_det_from_chol<T: Real>(chol: &Cholesky<T, Dyn>) -> T {
    let l = chol.l_dirty();
    let mut acc = T::zero();
    for i in 0..l.nrows() {
        acc += l[(i, i)].ln();
    }
    acc + acc
}

/// Per-mode quantities reused across message updates.
pub(crate) struct ModeDynCache<T: Real> {
    pub a: DMatrix<T>,
    pub sigma_inv: DMatrix<T>,
    /// `Σ⁻¹ A`.
    pub sigma_inv_a: DMatrix<T>,
    /// `Aᵀ Σ⁻¹ A`.
    pub at_sigma_inv_a: DMatrix<T>,
    /// Cholesky factor of `Σ` for density evaluation.
    pub lik: GaussLik<T>,
}

impl<T: Real> ModeDynCache<T> {
    pub fn new(dyn_k: &DynParams<T>) -> Result<Self> {
        let sigma_inv = dyn_k.sigma.inverse()?;
        let sigma_inv_a = &sigma_inv * &dyn_k.a;
        let at_sigma_inv_a = symmetric_part(&(dyn_k.a.transpose() * &sigma_inv_a));
        Ok(Self {
            a: dyn_k.a.clone(),
            sigma_inv,
            sigma_inv_a,
            at_sigma_inv_a,
            lik: GaussLik::new(&dyn_k.sigma)?,
        })
    }
}

pub(crate) fn mode_caches<T: Real>(dynamics: &[DynParams<T>]) -> Result<Vec<ModeDynCache<T>>> {
    dynamics.iter().map(ModeDynCache::new).collect()
}

/// Log-density evaluator for a fixed-covariance Gaussian.
pub(crate) struct GaussLik<T: Real> {
    chol_l: DMatrix<T>,
    log_norm: T,
}

impl<T: Real> GaussLik<T> {
    pub fn new(cov: &SpdMatrix<T>) -> Result<Self> {
        let chol = cov.cholesky()?;
        let l = chol.l();
        let mut ln_det_half = T::zero();
        for i in 0..l.nrows() {
            ln_det_half += l[(i, i)].ln();
        }
        let d = cast::<T>(l.nrows() as f64);
        let log_norm = -ln_det_half - d * cast::<T>(0.5) * cast::<T>((2.0 * std::f64::consts::PI).ln());
        Ok(Self { chol_l: l, log_norm })
    }

    /// `log N(resid; 0, cov)`.
    pub fn log_pdf(&self, resid: &DVector<T>) -> T {
        let w = self
            .chol_l
            .solve_lower_triangular(resid)
            .expect("Cholesky factor is nonsingular");
        self.log_norm - cast::<T>(0.5) * w.dot(&w)
    }
}

fn validate_sequence_inputs<T: Real>(
    y: &DMatrix<T>,
    z: &[usize],
    dynamics: &[DynParams<T>],
    obs: &ObsModel<T>,
) -> Result<()> {
    if y.nrows() != z.len() {
        return Err(Error::dim(format!(
            "observations have {} steps but mode sequence has {}",
            y.nrows(),
            z.len()
        )));
    }
    if y.ncols() != obs.obs_dim() {
        return Err(Error::dim(format!(
            "observations are {}-dimensional but the observation model expects {}",
            y.ncols(),
            obs.obs_dim()
        )));
    }
    if let Some(&bad) = z.iter().find(|&&m| m >= dynamics.len()) {
        return Err(Error::validation(format!(
            "mode index {bad} has no dynamics entry (have {})",
            dynamics.len()
        )));
    }
    for (k, d) in dynamics.iter().enumerate() {
        if d.dim() != obs.state_dim() {
            return Err(Error::dim(format!(
                "dynamics {k} has dimension {} but the state dimension is {}",
                d.dim(),
                obs.state_dim()
            )));
        }
    }
    Ok(())
}

/// Backward information filter.
///
/// Returns, for each `t`, the information parameters `(Λᵇ_t, ϑᵇ_t)` of the
/// factor `p(y_{t:T} | x_t, z_{t+1:T})` — the backward message into `x_t`
/// *combined with* the local observation at `t`. The recursion starts from
/// the vacuous `(0, 0)` message beyond the final step.
pub fn backward_info_messages<T: Real>(
    y: &DMatrix<T>,
    z: &[usize],
    dynamics: &[DynParams<T>],
    obs: &ObsModel<T>,
) -> Result<Vec<InfoMessage<T>>> {
    validate_sequence_inputs(y, z, dynamics, obs)?;
    let caches = mode_caches(dynamics)?;
    backward_info_messages_cached(y, z, &caches, obs)
}

pub(crate) fn backward_info_messages_cached<T: Real>(
    y: &DMatrix<T>,
    z: &[usize],
    caches: &[ModeDynCache<T>],
    obs: &ObsModel<T>,
) -> Result<Vec<InfoMessage<T>>> {
    let t_len = y.nrows();
    let d = obs.state_dim();
    let mut out = vec![InfoMessage::zero(d); t_len];
    let mut pred = InfoMessage::zero(d);
    for t in (0..t_len).rev() {
        let y_t = y.row(t).transpose();
        out[t] = InfoMessage {
            lambda: symmetric_part(&(&pred.lambda + obs.obs_info())),
            theta: &pred.theta + obs.obs_theta(&y_t),
        };
        if t > 0 {
            pred = backward_predict(&out[t], &caches[z[t]])
                .map_err(|e| Error::linalg(format!("backward filter at t={t}: {e}")))?;
        }
    }
    Ok(out)
}

/// Push an information message backward through one dynamics step,
/// marginalizing the later state.
fn backward_predict<T: Real>(
    updated: &InfoMessage<T>,
    cache: &ModeDynCache<T>,
) -> Result<InfoMessage<T>> {
    let sum = &cache.sigma_inv + &updated.lambda;
    let chol = robust_cholesky(&sum, "backward prediction")?;
    let solved = chol.solve(&cache.sigma_inv_a);
    let lambda = symmetric_part(&(&cache.at_sigma_inv_a - cache.sigma_inv_a.transpose() * &solved));
    let theta = cache.sigma_inv_a.transpose() * chol.solve(&updated.theta);
    Ok(InfoMessage { lambda, theta })
}

/// Forward information filter.
///
/// Returns, for each `t`, the filtered information parameters of
/// `p(x_t | y_{1:t}, z_{1:t})`, starting from the state prior.
pub fn forward_info_messages<T: Real>(
    y: &DMatrix<T>,
    z: &[usize],
    dynamics: &[DynParams<T>],
    obs: &ObsModel<T>,
    prior: &StatePrior<T>,
) -> Result<Vec<InfoMessage<T>>> {
    validate_sequence_inputs(y, z, dynamics, obs)?;
    let caches = mode_caches(dynamics)?;
    let t_len = y.nrows();
    let mut out = Vec::with_capacity(t_len);
    let mut filt = prior.info()?;
    for t in 0..t_len {
        let y_t = y.row(t).transpose();
        let pred = forward_predict(&filt, &caches[z[t]])
            .map_err(|e| Error::linalg(format!("forward filter at t={t}: {e}")))?;
        filt = InfoMessage {
            lambda: symmetric_part(&(&pred.lambda + obs.obs_info())),
            theta: &pred.theta + obs.obs_theta(&y_t),
        };
        out.push(filt.clone());
    }
    Ok(out)
}

/// Push a filtered message forward through one dynamics step, marginalizing
/// the earlier state.
pub(crate) fn forward_predict<T: Real>(
    filtered: &InfoMessage<T>,
    cache: &ModeDynCache<T>,
) -> Result<InfoMessage<T>> {
    let sum = &filtered.lambda + &cache.at_sigma_inv_a;
    let chol = robust_cholesky(&sum, "forward prediction")?;
    let solved = chol.solve(&cache.sigma_inv_a.transpose());
    let lambda = symmetric_part(&(&cache.sigma_inv - &cache.sigma_inv_a * &solved));
    let theta = &cache.sigma_inv_a * chol.solve(&filtered.theta);
    Ok(InfoMessage { lambda, theta })
}

/// Propagate a forward message through mode-`k` dynamics, without the local
/// observation: the information form of `p(x_t | y_{1:t-1}, z_t = k)`.
pub fn mode_predicted_params<T: Real>(
    forward_msg: &InfoMessage<T>,
    dyn_k: &DynParams<T>,
) -> Result<InfoMessage<T>> {
    let cache = ModeDynCache::new(dyn_k)?;
    forward_predict(forward_msg, &cache)
}

/// Mode-`k` local parameters over `x_t`: the forward message propagated
/// through mode-`k` dynamics and updated with the observation at `t`.
pub fn mode_filtered_params<T: Real>(
    forward_msg: &InfoMessage<T>,
    y_t: &DVector<T>,
    dyn_k: &DynParams<T>,
    obs: &ObsModel<T>,
) -> Result<InfoMessage<T>> {
    let pred = mode_predicted_params(forward_msg, dyn_k)?;
    Ok(InfoMessage {
        lambda: symmetric_part(&(&pred.lambda + obs.obs_info())),
        theta: &pred.theta + obs.obs_theta(y_t),
    })
}

/// Log of the mode likelihood factor `f_k`, up to a mode-independent
/// constant.
///
/// `params_k` must be the mode-`k` *predicted* parameters over `x_t`
/// (observation excluded) and `backward` the observation-updated backward
/// message produced by [`backward_info_messages`]; together they cover
/// `y_{t:T}` exactly once. The value is the information-form Gaussian
/// convolution
/// `½ ln|Λ| - ½ ln|Λ+Λᵇ| - ½ ϑᵀΛ⁻¹ϑ + ½ (ϑ+ϑᵇ)ᵀ(Λ+Λᵇ)⁻¹(ϑ+ϑᵇ)`.
pub fn mode_marginal_loglik<T: Real>(
    params_k: &InfoMessage<T>,
    backward: &InfoMessage<T>,
) -> Result<T> {
    let half = cast::<T>(0.5);
    let chol_p = robust_cholesky(&params_k.lambda, "mode parameters")?;
    let sum = &params_k.lambda + &backward.lambda;
    let chol_s = robust_cholesky(&sum, "mode + backward information")?;
    let theta_sum = &params_k.theta + &backward.theta;
    let quad_p = params_k.theta.dot(&chol_p.solve(&params_k.theta));
    let quad_s = theta_sum.dot(&chol_s.solve(&theta_sum));
    Ok(half * (ln_det_from_chol(&chol_p) - ln_det_from_chol(&chol_s) - quad_p + quad_s))
}

/// Backward messages over mode labels, row-normalized.
///
/// Row `t` holds the message flowing into time `t` from the future; the last
/// row is the uniform terminal message.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMessages<T: Real> {
    values: DMatrix<T>,
}

impl<T: Real> DiscreteMessages<T> {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn num_modes(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    /// One row as an owned probability vector.
    pub fn row_probs(&self, t: usize) -> Vec<T> {
        self.values.row(t).iter().copied().collect()
    }
}

/// Discrete backward messages for block-resampling the mode sequence given
/// the states.
///
/// The emission for `z_t` is the state-transition density
/// `N(x_t; A^(z_t) x_{t-1}, Σ^(z_t))`; messages are computed in log space
/// and normalized per step.
pub fn hmm_backward_messages<T: Real>(
    x: &DMatrix<T>,
    transition: &TransitionModel<T>,
    dynamics: &[DynParams<T>],
) -> Result<DiscreteMessages<T>> {
    let caches = mode_caches(dynamics)?;
    let loglik = state_transition_logliks(x, &caches)?;
    hmm_backward_messages_from_logliks(&loglik, transition)
}

/// Log `N(x_t; A_k x_{t-1}, Σ_k)` for every `t ≥ 1` (row) and mode (column).
/// Row 0 is unused and left at zero.
pub(crate) fn state_transition_logliks<T: Real>(
    x: &DMatrix<T>,
    caches: &[ModeDynCache<T>],
) -> Result<Vec<Vec<T>>> {
    let t_len = x.ncols();
    let l = caches.len();
    let mut loglik = vec![vec![T::zero(); l]; t_len];
    for t in 1..t_len {
        let prev = x.column(t - 1);
        let cur = x.column(t);
        for (k, cache) in caches.iter().enumerate() {
            let resid = cur - &cache.a * prev;
            loglik[t][k] = cache.lik.log_pdf(&resid);
        }
    }
    Ok(loglik)
}

pub(crate) fn hmm_backward_messages_from_logliks<T: Real>(
    loglik: &[Vec<T>],
    transition: &TransitionModel<T>,
) -> Result<DiscreteMessages<T>> {
    let t_len = loglik.len();
    let l = transition.trunc();
    if t_len == 0 {
        return Err(Error::validation("empty sequence has no messages"));
    }
    let mut values = DMatrix::<T>::zeros(t_len, l);
    let uniform = T::one() / cast::<T>(l as f64);
    for k in 0..l {
        values[(t_len - 1, k)] = uniform;
    }
    let mut log_next: Vec<T> = vec![uniform.ln(); l];
    for t in (0..t_len.saturating_sub(1)).rev() {
        // v_k = log lik(t+1, k) + log m_{t+2,t+1}(k); shared max keeps the
        // matrix-vector product in range.
        let mut vmax = T::neg_infinity();
        let mut u = DVector::<T>::zeros(l);
        for k in 0..l {
            let v = loglik[t + 1][k] + log_next[k];
            u[k] = v;
            if v > vmax {
                vmax = v;
            }
        }
        if vmax == T::neg_infinity() {
            return Err(Error::linalg(format!(
                "discrete backward message vanished at t={t}"
            )));
        }
        for k in 0..l {
            u[k] = (u[k] - vmax).exp();
        }
        let row = transition.pi() * &u;
        let sum = row.sum();
        if !(sum > T::zero()) || !sum.is_finite() {
            return Err(Error::linalg(format!(
                "discrete backward message vanished at t={t}"
            )));
        }
        for j in 0..l {
            let p = row[j] / sum;
            values[(t, j)] = p;
            log_next[j] = p.ln();
        }
    }
    Ok(DiscreteMessages { values })
}
