//! The Gibbs sampler: initialization, the six-step sweep, and chain
//! management.
//!
//! One sweep resamples, in order: the mode sequence sequentially with the
//! states marginalized, the state sequence as a block, the mode sequence as
//! a block, the transition model `(β, π)`, optionally the hyperparameters,
//! and finally the per-mode dynamics. Each draw targets its exact
//! conditional, so the sweep leaves the posterior invariant.

use crate::config::RunConfig;
use crate::dynamics::{sample_dynamics_all, DynParams, MniwPrior};
use crate::error::{Error, Result};
use crate::hdp::{
    count_transitions, expected_self_transition, init_beta, sample_global_beta,
    sample_hyperparameters, sample_overrides, sample_table_counts, sample_transition_rows,
    HdpParams, HyperPriors, TransitionModel, TransitionStats,
};
use crate::messages::{
    backward_info_messages_cached, forward_predict, hmm_backward_messages_from_logliks,
    mode_caches, mode_marginal_loglik, state_transition_logliks, GaussLik, InfoMessage, ObsModel,
    StatePrior,
};
use crate::real::{cast, Real};
use crate::rng::RngStream;
use crate::stats::{
    sample_categorical, sample_categorical_log, sample_mvn_info, symmetric_part, SpdMatrix,
};
use nalgebra::{DMatrix, DVector};
use std::collections::VecDeque;

/// Full state of the Gibbs sampler.
#[derive(Debug, Clone)]
pub struct ModelState<T: Real> {
    /// Mode labels, one per time step.
    pub z: Vec<usize>,
    /// States, one column per time step.
    pub x: DMatrix<T>,
    /// Per-mode dynamics, one entry per label in `0..L`.
    pub dynamics: Vec<DynParams<T>>,
    pub transition: TransitionModel<T>,
    pub hp: HdpParams<T>,
    pub obs: ObsModel<T>,
    pub mniw: MniwPrior<T>,
    /// Prior on the pre-sequence state `x₀`.
    pub init: StatePrior<T>,
}

impl<T: Real> ModelState<T> {
    pub fn num_steps(&self) -> usize {
        self.z.len()
    }

    pub fn state_dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn trunc(&self) -> usize {
        self.transition.trunc()
    }

    /// Cross-field consistency checks used by tests and debug paths.
    pub fn check_invariants(&self) -> Result<()> {
        let t = self.z.len();
        let d = self.x.nrows();
        let l = self.transition.trunc();
        if self.x.ncols() != t {
            return Err(Error::dim("state sequence length disagrees with z"));
        }
        if self.dynamics.len() != l {
            return Err(Error::dim("dynamics list does not cover the truncation"));
        }
        if self.hp.trunc() != l {
            return Err(Error::dim("hyperparameters disagree on L"));
        }
        if self.obs.state_dim() != d || self.init.mean.len() != d {
            return Err(Error::dim("observation model or prior dimension mismatch"));
        }
        if self.z.iter().any(|&m| m >= l) {
            return Err(Error::validation("mode label out of range"));
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("state sequence has non-finite entries"));
        }
        for dp in &self.dynamics {
            if dp.dim() != d {
                return Err(Error::dim("dynamics dimension mismatch"));
            }
        }
        Ok(())
    }

    /// Distinct labels used by the mode sequence.
    pub fn modes_used(&self) -> Vec<usize> {
        let mut labels = self.z.clone();
        labels.sort_unstable();
        labels.dedup();
        labels
    }

    /// Diagnostic: prior mean of each self-transition probability.
    pub fn expected_self_transitions(&self) -> DVector<T> {
        expected_self_transition(&self.hp, self.transition.beta())
    }
}

/// Sampler options derived from the run configuration.
#[derive(Debug, Clone)]
pub struct GibbsOptions<T: Real> {
    pub priors: HyperPriors<T>,
    pub resample_hyperparameters: bool,
    pub sticky: bool,
}

impl<T: Real> GibbsOptions<T> {
    pub fn from_config(config: &RunConfig) -> Result<Self> {
        let p = &config.priors;
        Ok(Self {
            priors: HyperPriors::new(
                cast(p.a),
                cast(p.b),
                cast(p.c),
                cast(p.d),
                cast(p.e),
                cast(p.f),
            )?,
            resample_hyperparameters: config.resample_hyperparameters,
            sticky: config.sticky,
        })
    }
}

fn validate_observations<T: Real>(y: &DMatrix<T>) -> Result<()> {
    if y.nrows() < 2 {
        return Err(Error::validation("need at least two observations"));
    }
    if y.ncols() == 0 {
        return Err(Error::validation("observations must have at least one dimension"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("observations contain NaN or infinite values"));
    }
    Ok(())
}

fn matrix_from_rows<T: Real>(rows: &[Vec<f64>]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| cast(rows[i][j]))
}

/// Resolve the observation model from the configuration and data.
fn resolve_obs_model<T: Real>(y: &DMatrix<T>, config: &RunConfig) -> Result<ObsModel<T>> {
    let d_obs = y.ncols();
    let c: DMatrix<T> = if config.obs_matrix.is_identity() {
        DMatrix::identity(d_obs, d_obs)
    } else {
        let rows = match &config.obs_matrix {
            crate::config::NamedMatrixSpec::Full(rows) => rows.clone(),
            crate::config::NamedMatrixSpec::Named(name) => {
                return Err(Error::validation(format!(
                    "C: unknown matrix name {name:?} (only \"identity\" is supported)"
                )))
            }
        };
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::validation("C: matrix must be non-empty"));
        }
        if rows.len() != d_obs {
            return Err(Error::dim(format!(
                "C has {} rows but observations are {d_obs}-dimensional",
                rows.len()
            )));
        }
        if rows.iter().any(|r| r.len() != rows[0].len()) {
            return Err(Error::dim("C rows have inconsistent lengths"));
        }
        matrix_from_rows(&rows)
    };
    let r_rows = config.obs_noise.resolve(d_obs, "R")?;
    let r = SpdMatrix::new(matrix_from_rows(&r_rows))?;
    ObsModel::new(c, r)
}

fn resolve_state_prior<T: Real>(
    y: &DMatrix<T>,
    config: &RunConfig,
    obs: &ObsModel<T>,
) -> Result<StatePrior<T>> {
    let d = obs.state_dim();
    let mean = match &config.x0_mean {
        Some(values) => {
            if values.len() != d {
                return Err(Error::dim(format!(
                    "x0_mean has length {}, state dimension is {d}",
                    values.len()
                )));
            }
            DVector::from_fn(d, |i, _| cast(values[i]))
        }
        None => obs.state_from_obs(&y.row(0).transpose()),
    };
    let cov = match &config.x0_cov {
        Some(spec) => SpdMatrix::new(matrix_from_rows(&spec.resolve(d, "x0_cov")?))?,
        None => {
            if config.obs_matrix.is_identity() {
                obs.r().clone()
            } else {
                return Err(Error::validation(
                    "x0_cov must be given explicitly when C is not the identity",
                ));
            }
        }
    };
    StatePrior::new(mean, cov)
}

/// Default inverse-Wishart scale: three times the mean diagonal of the
/// observation noise mapped into state space. The states are initialized
/// from the observations, so this is the noise floor their one-step
/// regression residuals start at.
fn default_s0_scale<T: Real>(obs: &ObsModel<T>) -> f64 {
    let pinv_r = {
        let y_dim = obs.obs_dim();
        let mut cols = DMatrix::<T>::zeros(obs.state_dim(), y_dim);
        for j in 0..y_dim {
            let e = DVector::from_fn(y_dim, |i, _| if i == j { T::one() } else { T::zero() });
            cols.set_column(j, &obs.state_from_obs(&e));
        }
        let mapped = &cols * obs.r().matrix() * cols.transpose();
        mapped.diagonal().iter().map(|v| v.to_f64().unwrap_or(0.0)).sum::<f64>()
            / obs.state_dim() as f64
    };
    (3.0 * pinv_r).max(1e-12)
}

fn resolve_mniw_prior<T: Real>(config: &RunConfig, obs: &ObsModel<T>) -> Result<MniwPrior<T>> {
    let d = obs.state_dim();
    let m = matrix_from_rows(&config.mniw.m.resolve(d, d, "mniw.M")?);
    let k = SpdMatrix::new(matrix_from_rows(&config.mniw.k.resolve(d, "mniw.K")?))?;
    let s0 = match &config.mniw.s0 {
        Some(spec) => SpdMatrix::new(matrix_from_rows(&spec.resolve(d, "mniw.S0")?))?,
        None => SpdMatrix::scaled_identity(d, cast::<T>(default_s0_scale(obs)))?,
    };
    let n0 = cast::<T>(config.mniw.n0.unwrap_or((d + 2) as f64));
    MniwPrior::new(m, k, n0, s0)
}

/// Draw a complete starting state.
///
/// Hyperparameters come from their priors, `β` and `π` from the truncated
/// Dirichlet prior, the mode sequence by rolling the transition rows
/// forward, the dynamics from the matrix-normal inverse-Wishart prior, and
/// the states from the observations mapped through the observation matrix's
/// pseudo-inverse.
pub fn initialize<T: Real>(
    y: &DMatrix<T>,
    config: &RunConfig,
    rng: &mut RngStream,
) -> Result<ModelState<T>> {
    validate_observations(y)?;
    config.validate()?;
    let obs = resolve_obs_model(y, config)?;
    let d = obs.state_dim();
    let init = resolve_state_prior(y, config, &obs)?;
    let mniw = resolve_mniw_prior(config, &obs)?;
    let l = config.trunc;
    let opts = GibbsOptions::<T>::from_config(config)?;

    let hp = opts.priors.draw_initial(l, opts.sticky, rng)?;
    let beta = init_beta(&hp, rng)?;
    let pi = sample_transition_rows(
        &beta,
        &DMatrix::zeros(l, l),
        hp.alpha(),
        hp.kappa(),
        rng,
    )?;
    let transition = TransitionModel::new(beta, pi)?;

    let t_len = y.nrows();
    let mut z = Vec::with_capacity(t_len);
    let beta_weights: Vec<T> = transition.beta().iter().copied().collect();
    z.push(sample_categorical(&beta_weights, rng)?);
    for t in 1..t_len {
        let row = transition.pi_row(z[t - 1]);
        z.push(sample_categorical(&row, rng)?);
    }

    let mut x = DMatrix::zeros(d, t_len);
    for t in 0..t_len {
        let xt = obs.state_from_obs(&y.row(t).transpose());
        x.set_column(t, &xt);
    }

    // Dynamics are drawn from their conjugate posteriors given the initial
    // mode blocks and the observation-mapped states (Σ first, then A).
    // Modes the initial sequence never visits fall back to prior draws.
    let dynamics = sample_dynamics_all(&x, &z, &mniw, l, rng)?;

    let state = ModelState {
        z,
        x,
        dynamics,
        transition,
        hp,
        obs,
        mniw,
        init,
    };
    state.check_invariants()?;
    Ok(state)
}

/// Propagate the `x₀` prior through mode-`k` dynamics: the marginal of the
/// first state when that mode generates it.
fn propagated_initial<T: Real>(
    dyn_k: &DynParams<T>,
    init: &StatePrior<T>,
) -> (DVector<T>, DMatrix<T>) {
    let mean = &dyn_k.a * &init.mean;
    let cov = &dyn_k.a * init.cov.matrix() * dyn_k.a.transpose() + dyn_k.sigma.matrix();
    (mean, symmetric_part(&cov))
}

fn initial_state_logliks<T: Real>(state: &ModelState<T>) -> Result<Vec<T>> {
    let x0 = state.x.column(0).into_owned();
    state
        .dynamics
        .iter()
        .map(|dyn_k| {
            let (mean, cov) = propagated_initial(dyn_k, &state.init);
            let lik = GaussLik::new(&SpdMatrix::new(cov)?)?;
            Ok(lik.log_pdf(&(&x0 - mean)))
        })
        .collect()
}

/// Resample the whole mode sequence from `p(z | x, π, β, θ)` using discrete
/// backward messages and a forward pass of categorical draws.
pub fn block_sample_modes<T: Real>(state: &ModelState<T>, rng: &mut RngStream) -> Result<Vec<usize>> {
    let l = state.trunc();
    let t_len = state.num_steps();
    let caches = mode_caches(&state.dynamics)?;
    let loglik = state_transition_logliks(&state.x, &caches)?;
    let messages = hmm_backward_messages_from_logliks(&loglik, &state.transition)?;
    let init_ll = initial_state_logliks(state)?;

    let mut z = Vec::with_capacity(t_len);
    let mut logw = vec![T::zero(); l];
    for t in 0..t_len {
        let msg_row = messages.row_probs(t);
        for k in 0..l {
            let trans = if t == 0 {
                state.transition.beta()[k].ln()
            } else {
                state.transition.pi()[(z[t - 1], k)].ln()
            };
            let lik = if t == 0 { init_ll[k] } else { loglik[t][k] };
            logw[k] = trans + lik + msg_row[k].ln();
        }
        z.push(sample_categorical_log(&logw, rng)?);
    }
    Ok(z)
}

/// Resample the whole state sequence from `p(x | y, z, θ)` via the backward
/// information filter and a forward pass of Gaussian draws.
pub fn block_sample_states<T: Real>(
    state: &ModelState<T>,
    y: &DMatrix<T>,
    rng: &mut RngStream,
) -> Result<DMatrix<T>> {
    let t_len = state.num_steps();
    let d = state.state_dim();
    if y.nrows() != t_len {
        return Err(Error::dim("observations disagree with the state length"));
    }
    let caches = mode_caches(&state.dynamics)?;
    let backward = backward_info_messages_cached(y, &state.z, &caches, &state.obs)?;

    let mut x = DMatrix::zeros(d, t_len);
    let mut prev = DVector::zeros(d);
    for t in 0..t_len {
        let (lambda, theta) = if t == 0 {
            let (mean, cov) = propagated_initial(&state.dynamics[state.z[0]], &state.init);
            let prior_info = cov
                .cholesky()
                .ok_or_else(|| Error::linalg("initial state covariance is not SPD"))?
                .inverse();
            let theta = &prior_info * mean + &backward[0].theta;
            (symmetric_part(&prior_info) + &backward[0].lambda, theta)
        } else {
            let cache = &caches[state.z[t]];
            let theta = &cache.sigma_inv_a * &prev + &backward[t].theta;
            (&cache.sigma_inv + &backward[t].lambda, theta)
        };
        let precision = SpdMatrix::new(symmetric_part(&lambda))
            .map_err(|e| Error::linalg(format!("state sampling at t={t}: {e}")))?;
        let draw = sample_mvn_info(&theta, &precision, rng)
            .map_err(|e| Error::linalg(format!("state sampling at t={t}: {e}")))?;
        x.set_column(t, &draw);
        prev = draw;
    }
    Ok(x)
}

/// Resample each mode label in turn from `p(z_t | z_{\t}, y, π, θ)` with the
/// states marginalized by the forward/backward information filters.
pub fn sequential_sample_modes<T: Real>(
    state: &ModelState<T>,
    y: &DMatrix<T>,
    rng: &mut RngStream,
) -> Result<Vec<usize>> {
    let l = state.trunc();
    let t_len = state.num_steps();
    if y.nrows() != t_len {
        return Err(Error::dim("observations disagree with the state length"));
    }
    let caches = mode_caches(&state.dynamics)?;
    // Backward messages depend only on the not-yet-resampled suffix of z, so
    // computing them once under the current sequence keeps each step exact.
    let backward = backward_info_messages_cached(y, &state.z, &caches, &state.obs)?;

    let mut z = state.z.clone();
    let mut forward = state.init.info()?;
    let mut logw = vec![T::zero(); l];
    let mut predicted: Vec<InfoMessage<T>> = Vec::with_capacity(l);
    for t in 0..t_len {
        predicted.clear();
        for (k, cache) in caches.iter().enumerate() {
            let pred = forward_predict(&forward, cache)
                .map_err(|e| Error::linalg(format!("sequential sampling at t={t}: {e}")))?;
            let marginal = mode_marginal_loglik(&pred, &backward[t])
                .map_err(|e| Error::linalg(format!("sequential sampling at t={t}: {e}")))?;
            let trans_in = if t == 0 {
                state.transition.beta()[k].ln()
            } else {
                state.transition.pi()[(z[t - 1], k)].ln()
            };
            let trans_out = if t + 1 < t_len {
                state.transition.pi()[(k, state.z[t + 1])].ln()
            } else {
                T::zero()
            };
            logw[k] = trans_in + trans_out + marginal;
            predicted.push(pred);
        }
        let choice = sample_categorical_log(&logw, rng)?;
        z[t] = choice;
        let y_t = y.row(t).transpose();
        forward = InfoMessage {
            lambda: symmetric_part(&(&predicted[choice].lambda + state.obs.obs_info())),
            theta: &predicted[choice].theta + state.obs.obs_theta(&y_t),
        };
    }
    Ok(z)
}

/// Additive components of the joint log-density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogJointParts<T: Real> {
    /// `Σ_t log N(y_t; C x_t, R)`.
    pub observations: T,
    /// `log p(x_1 | z_1) + Σ_t log N(x_t; A x_{t-1}, Σ)`.
    pub states: T,
    /// `log β(z_1) + Σ_t log π_{z_{t-1}}(z_t)`.
    pub modes: T,
    /// Matrix-normal inverse-Wishart prior over every mode's `(A, Σ)`.
    pub dynamics_prior: T,
}

impl<T: Real> LogJointParts<T> {
    pub fn total(&self) -> T {
        self.observations + self.states + self.modes + self.dynamics_prior
    }
}

/// Joint log-density of the sampled variables given the transition model:
/// observation, state-dynamics, mode-transition, and dynamics-prior terms,
/// up to a state-independent constant.
///
/// The Dirichlet densities of `β` and the rows of `π` are deliberately not
/// scored: with concentrations below one they diverge at the simplex
/// corners that sampled rows routinely touch, which would drown the
/// data-coupled terms in noise. Returns `-inf` for zero-probability
/// configurations, never NaN.
pub fn log_joint<T: Real>(state: &ModelState<T>, y: &DMatrix<T>) -> T {
    match log_joint_parts(state, y) {
        Ok(parts) => {
            let total = parts.total();
            if total.is_nan() {
                T::neg_infinity()
            } else {
                total
            }
        }
        Err(_) => T::neg_infinity(),
    }
}

pub fn log_joint_parts<T: Real>(state: &ModelState<T>, y: &DMatrix<T>) -> Result<LogJointParts<T>> {
    let t_len = state.num_steps();
    let caches = mode_caches(&state.dynamics)?;
    let obs_lik = GaussLik::new(state.obs.r())?;

    let mut observations = T::zero();
    for t in 0..t_len {
        let resid = y.row(t).transpose() - state.obs.c() * state.x.column(t);
        observations += obs_lik.log_pdf(&resid);
    }

    let mut states = {
        let (mean, cov) = propagated_initial(&state.dynamics[state.z[0]], &state.init);
        let lik = GaussLik::new(&SpdMatrix::new(cov)?)?;
        lik.log_pdf(&(state.x.column(0) - mean))
    };
    for t in 1..t_len {
        let cache = &caches[state.z[t]];
        let resid = state.x.column(t) - &cache.a * state.x.column(t - 1);
        states += cache.lik.log_pdf(&resid);
    }

    let mut modes = ln_or_neg_inf(state.transition.beta()[state.z[0]]);
    for t in 1..t_len {
        modes += ln_or_neg_inf(state.transition.pi()[(state.z[t - 1], state.z[t])]);
    }

    let mut dynamics_prior = T::zero();
    for dp in &state.dynamics {
        dynamics_prior += log_mniw_pdf(dp, &state.mniw)?;
    }

    Ok(LogJointParts {
        observations,
        states,
        modes,
        dynamics_prior,
    })
}

fn ln_or_neg_inf<T: Real>(p: T) -> T {
    if p > T::zero() {
        p.ln()
    } else {
        T::neg_infinity()
    }
}

fn ln_multivariate_gamma<T: Real>(a: T, d: usize) -> T {
    let quarter = cast::<T>(0.25);
    let mut acc = cast::<T>((d * (d - 1)) as f64) * quarter * T::pi().ln();
    for i in 0..d {
        acc += (a - cast::<T>(i as f64) * cast::<T>(0.5)).ln_gamma();
    }
    acc
}

fn ln_det_spd<T: Real>(m: &SpdMatrix<T>) -> Result<T> {
    let l = m.cholesky()?.l();
    let mut acc = T::zero();
    for i in 0..l.nrows() {
        acc += l[(i, i)].ln();
    }
    Ok(acc + acc)
}

/// Log-density of `(A, Σ)` under the matrix-normal inverse-Wishart prior.
fn log_mniw_pdf<T: Real>(dp: &DynParams<T>, prior: &MniwPrior<T>) -> Result<T> {
    let d = prior.dim();
    let dd = cast::<T>(d as f64);
    let half = cast::<T>(0.5);
    let two = cast::<T>(2.0);
    let ln2pi = cast::<T>((2.0 * std::f64::consts::PI).ln());

    let sigma_chol = dp.sigma.cholesky()?;
    let ln_det_sigma = ln_det_spd(&dp.sigma)?;
    let sigma_inv = sigma_chol.inverse();

    // Inverse-Wishart part.
    let n0 = prior.dof();
    let ln_det_s0 = ln_det_spd(prior.scale())?;
    let trace_term = (prior.scale().matrix() * &sigma_inv).trace();
    let iw = n0 * half * ln_det_s0 - n0 * dd * half * two.ln()
        - ln_multivariate_gamma(n0 * half, d)
        - (n0 + dd + T::one()) * half * ln_det_sigma
        - half * trace_term;

    // Matrix-normal part with row covariance Σ and column covariance K⁻¹.
    let delta = &dp.a - prior.mean();
    let ln_det_k = ln_det_spd(prior.col_precision())?;
    let quad = (prior.col_precision().matrix() * delta.transpose() * &sigma_inv * &delta).trace();
    let mn = -dd * dd * half * ln2pi + dd * half * ln_det_k - dd * half * ln_det_sigma
        - half * quad;

    Ok(iw + mn)
}

/// One full Gibbs sweep in the fixed step order.
pub fn sweep<T: Real>(
    state: &ModelState<T>,
    y: &DMatrix<T>,
    opts: &GibbsOptions<T>,
    rng: &mut RngStream,
) -> Result<ModelState<T>> {
    let mut s = state.clone();
    let l = s.trunc();

    s.z = sequential_sample_modes(&s, y, rng).map_err(|e| e.in_step("sequential mode sampling"))?;
    s.x = block_sample_states(&s, y, rng).map_err(|e| e.in_step("block state sampling"))?;
    s.z = block_sample_modes(&s, rng).map_err(|e| e.in_step("block mode sampling"))?;

    let stats = {
        let n = count_transitions(&s.z, l).map_err(|e| e.in_step("transition counting"))?;
        let m = sample_table_counts(&n, s.transition.beta(), s.hp.alpha(), s.hp.kappa(), rng)
            .map_err(|e| e.in_step("table count sampling"))?;
        let (w, m_bar) = sample_overrides(&m, s.hp.rho(), s.transition.beta(), rng)
            .map_err(|e| e.in_step("override sampling"))?;
        let beta = sample_global_beta(&m_bar, s.hp.gamma(), l, rng)
            .map_err(|e| e.in_step("global weight sampling"))?;
        let pi = sample_transition_rows(&beta, &n, s.hp.alpha(), s.hp.kappa(), rng)
            .map_err(|e| e.in_step("transition row sampling"))?;
        s.transition =
            TransitionModel::new(beta, pi).map_err(|e| e.in_step("transition row sampling"))?;
        TransitionStats { n, m, w, m_bar }
    };

    if opts.resample_hyperparameters {
        s.hp = sample_hyperparameters(&stats, &s.hp, &opts.priors, opts.sticky, rng)
            .map_err(|e| e.in_step("hyperparameter sampling"))?;
    }

    s.dynamics = sample_dynamics_all(&s.x, &s.z, &s.mniw, l, rng)
        .map_err(|e| e.in_step("dynamics sampling"))?;
    Ok(s)
}

/// Result of one chain: retained snapshots, the per-sweep log-joint trace,
/// and the best state from the final selection window.
#[derive(Debug, Clone)]
pub struct ChainResult<T: Real> {
    /// Thinned snapshots (every `thin`-th sweep), plus the final state.
    pub samples: Vec<ModelState<T>>,
    /// Log joint after every sweep.
    pub log_joint_trace: Vec<T>,
    /// Highest-scoring state among the final `select_window` sweeps.
    pub best: ModelState<T>,
    pub best_log_joint: T,
    /// 1-based sweep index the best state came from (0 = initialization).
    pub best_sweep: usize,
    /// The fully resolved configuration this chain ran with.
    pub config_echo: RunConfig,
}

/// Run `iterations` sweeps and select the best of the final window by log
/// joint. The chain is fully determined by `(y, config, seed)`.
pub fn run_chain<T: Real>(
    y: &DMatrix<T>,
    config: &RunConfig,
    rng: &mut RngStream,
) -> Result<ChainResult<T>> {
    config.validate()?;
    let opts = GibbsOptions::from_config(config)?;
    let mut state = initialize(y, config, rng)?;
    let mut echo = config.clone();
    echo.resolve_defaults(state.state_dim(), default_s0_scale(&state.obs));

    let mut trace = Vec::with_capacity(config.iterations);
    let mut samples = Vec::new();
    let window = config.select_window.min(config.iterations.max(1));
    let mut tail: VecDeque<(usize, T, ModelState<T>)> = VecDeque::with_capacity(window + 1);

    if config.iterations == 0 {
        let lj = log_joint(&state, y);
        return Ok(ChainResult {
            samples: vec![state.clone()],
            log_joint_trace: trace,
            best: state,
            best_log_joint: lj,
            best_sweep: 0,
            config_echo: echo,
        });
    }

    for i in 1..=config.iterations {
        state = sweep(&state, y, &opts, rng).map_err(|e| e.in_sweep(i))?;
        let lj = log_joint(&state, y);
        trace.push(lj);
        if i % config.thin == 0 {
            samples.push(state.clone());
        }
        tail.push_back((i, lj, state.clone()));
        if tail.len() > window {
            tail.pop_front();
        }
    }
    if config.iterations % config.thin != 0 {
        samples.push(state.clone());
    }

    let (best_sweep, best_log_joint, best) = tail
        .into_iter()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
        .expect("window holds at least one state");

    Ok(ChainResult {
        samples,
        log_joint_trace: trace,
        best,
        best_log_joint,
        best_sweep,
        config_echo: echo,
    })
}
