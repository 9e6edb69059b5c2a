//! Sticky HDP transition machinery under a finite truncation.
//!
//! The transition prior places a global weight vector `β ~ Dir(γ/L, ..., γ/L)`
//! over `L` mode labels and draws each transition row as
//! `π_j ~ Dir(αβ_1, ..., αβ_j + κ, ..., αβ_L)`, where `κ` adds extra prior
//! mass to self-transitions. Resampling `β` requires auxiliary counts from
//! the restaurant-franchise view of the hierarchy: per-pair table counts
//! `m_jk`, self-transition override counts `w_j`, and informative counts
//! `m̄_jk` (`m̄_jj = m_jj - w_j`, `m̄_jk = m_jk` off the diagonal).
//!
//! # Hyperparameter resampling scheme
//!
//! The concentration parameters are refreshed with the standard
//! auxiliary-variable updates for Dirichlet-process concentrations:
//!
//! * `(α+κ)`: for each mode row `j` with `n_j· ≥ 1` customers and `m_j·`
//!   tables, draw `r_j ~ Beta(α+κ+1, n_j·)` and
//!   `s_j ~ Bernoulli(n_j· / (n_j· + α+κ))`; then
//!   `(α+κ) ~ Gamma(a + m_·· - Σ_j s_j, b - Σ_j log r_j)`.
//! * `γ`: with `M = m̄_··` informative tables serving `K̄` distinct modes,
//!   draw `η ~ Beta(γ+1, M)` and mix
//!   `γ ~ π_η Gamma(e + K̄, f - log η) + (1-π_η) Gamma(e + K̄ - 1, f - log η)`
//!   with `π_η / (1-π_η) = (e + K̄ - 1) / (M (f - log η))`.
//! * `ρ`: every table is an override with probability `ρ`, and only
//!   overrides of self-transition tables are observed, so
//!   `ρ ~ Beta(c + w_·, d + m_·· - w_·)`.
//!
//! With empty statistics each update reduces exactly to its prior, which is
//! what the prior-recovery tests pin down.

use crate::error::{Error, Result};
use crate::real::{cast, Real};
use crate::rng::RngStream;
use crate::stats::{sample_beta, sample_binomial, sample_dirichlet, sample_gamma};
use nalgebra::{DMatrix, DVector};

/// Concentration and stickiness parameters of the transition prior.
///
/// Holds `γ` (global concentration), the pair `(α, κ)` split of the
/// row concentration mass, `ρ = κ/(α+κ)`, and the truncation level `L`.
/// `α = (1-ρ)(α+κ)` and `κ = ρ(α+κ)` hold by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HdpParams<T: Real> {
    gamma: T,
    alpha: T,
    kappa: T,
    rho: T,
    trunc: usize,
}

impl<T: Real> HdpParams<T> {
    /// Build from `γ`, the total row mass `α+κ`, and the sticky fraction `ρ`.
    pub fn new(gamma: T, alpha_plus_kappa: T, rho: T, trunc: usize) -> Result<Self> {
        if !(gamma > T::zero()) || !gamma.is_finite() {
            return Err(Error::param("gamma must be positive and finite"));
        }
        if !(alpha_plus_kappa > T::zero()) || !alpha_plus_kappa.is_finite() {
            return Err(Error::param("alpha + kappa must be positive and finite"));
        }
        if rho < T::zero() || rho > T::one() {
            return Err(Error::param("rho must lie in [0, 1]"));
        }
        if trunc == 0 {
            return Err(Error::param("truncation level must be at least 1"));
        }
        Ok(Self {
            gamma,
            alpha: (T::one() - rho) * alpha_plus_kappa,
            kappa: rho * alpha_plus_kappa,
            rho,
            trunc,
        })
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn kappa(&self) -> T {
        self.kappa
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn alpha_plus_kappa(&self) -> T {
        self.alpha + self.kappa
    }

    /// Truncation level `L`.
    pub fn trunc(&self) -> usize {
        self.trunc
    }
}

/// Global weights `β` and the row-stochastic transition matrix `π`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel<T: Real> {
    beta: DVector<T>,
    pi: DMatrix<T>,
}

impl<T: Real> TransitionModel<T> {
    pub fn new(beta: DVector<T>, pi: DMatrix<T>) -> Result<Self> {
        let l = beta.len();
        if pi.nrows() != l || pi.ncols() != l {
            return Err(Error::dim(format!(
                "transition matrix is {}x{}, beta has length {l}",
                pi.nrows(),
                pi.ncols()
            )));
        }
        check_simplex(beta.as_slice(), "beta")?;
        for j in 0..l {
            let row: Vec<T> = pi.row(j).iter().copied().collect();
            check_simplex(&row, &format!("pi row {j}"))?;
        }
        Ok(Self { beta, pi })
    }

    pub fn trunc(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self) -> &DVector<T> {
        &self.beta
    }

    pub fn pi(&self) -> &DMatrix<T> {
        &self.pi
    }

    pub fn pi_row(&self, j: usize) -> Vec<T> {
        self.pi.row(j).iter().copied().collect()
    }
}

fn check_simplex<T: Real>(v: &[T], what: &str) -> Result<()> {
    let mut sum = T::zero();
    for &x in v {
        if x < T::zero() || !x.is_finite() {
            return Err(Error::validation(format!(
                "{what} has a negative or non-finite entry"
            )));
        }
        sum += x;
    }
    if (sum - T::one()).abs() > cast::<T>(1e-12) {
        return Err(Error::validation(format!(
            "{what} does not sum to 1 (sum = {sum:?})"
        )));
    }
    Ok(())
}

/// Transition counts and restaurant auxiliaries for one mode sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionStats {
    /// Transition counts `n_jk`.
    pub n: DMatrix<u64>,
    /// Table counts `m_jk`, with `m_jk ≥ 1` whenever `n_jk ≥ 1`.
    pub m: DMatrix<u64>,
    /// Override counts `w_j ≤ m_jj`.
    pub w: DVector<u64>,
    /// Informative table counts `m̄`.
    pub m_bar: DMatrix<u64>,
}

impl TransitionStats {
    /// All-zero statistics at truncation level `l` (the empty-data case).
    pub fn empty(l: usize) -> Self {
        Self {
            n: DMatrix::zeros(l, l),
            m: DMatrix::zeros(l, l),
            w: DVector::zeros(l),
            m_bar: DMatrix::zeros(l, l),
        }
    }

    pub fn trunc(&self) -> usize {
        self.n.nrows()
    }
}

/// Draw the global weights from their symmetric Dirichlet prior.
pub fn init_beta<T: Real>(hp: &HdpParams<T>, rng: &mut RngStream) -> Result<DVector<T>> {
    let l = hp.trunc();
    let conc = vec![hp.gamma() / cast::<T>(l as f64); l];
    sample_dirichlet(&conc, rng)
}

/// Count transitions `n_jk = #{t ≥ 2 : z_{t-1} = j, z_t = k}`.
pub fn count_transitions(z: &[usize], l: usize) -> Result<DMatrix<u64>> {
    let mut n = DMatrix::zeros(l, l);
    for (t, &zt) in z.iter().enumerate() {
        if zt >= l {
            return Err(Error::validation(format!(
                "mode index {zt} at position {t} exceeds truncation {l}"
            )));
        }
        if t > 0 {
            n[(z[t - 1], zt)] += 1;
        }
    }
    Ok(n)
}

/// Sample table counts by sequential restaurant simulation.
///
/// Customer `i` of pair `(j, k)` opens a new table with probability
/// `c / (c + i - 1)` where `c = αβ_k + κ·[j=k]`; the first customer always
/// opens one.
pub fn sample_table_counts<T: Real>(
    n: &DMatrix<u64>,
    beta: &DVector<T>,
    alpha: T,
    kappa: T,
    rng: &mut RngStream,
) -> Result<DMatrix<u64>> {
    let l = n.nrows();
    if n.ncols() != l || beta.len() != l {
        return Err(Error::dim("table counts need square n and matching beta"));
    }
    if !(alpha + kappa > T::zero()) {
        return Err(Error::param("table counts require alpha + kappa > 0"));
    }
    let mut m = DMatrix::zeros(l, l);
    for j in 0..l {
        for k in 0..l {
            let customers = n[(j, k)];
            if customers == 0 {
                continue;
            }
            let c = alpha * beta[k] + if j == k { kappa } else { T::zero() };
            let mut tables = 1u64;
            for i in 2..=customers {
                let denom = c + cast::<T>((i - 1) as f64);
                if denom > T::zero() && T::open01(rng) < c / denom {
                    tables += 1;
                }
            }
            m[(j, k)] = tables;
        }
    }
    Ok(m)
}

/// Sample self-transition overrides and derive the informative counts.
pub fn sample_overrides<T: Real>(
    m: &DMatrix<u64>,
    rho: T,
    beta: &DVector<T>,
    rng: &mut RngStream,
) -> Result<(DVector<u64>, DMatrix<u64>)> {
    let l = m.nrows();
    if m.ncols() != l || beta.len() != l {
        return Err(Error::dim("overrides need square m and matching beta"));
    }
    if rho < T::zero() || rho > T::one() {
        return Err(Error::param("rho must lie in [0, 1]"));
    }
    let mut w = DVector::zeros(l);
    let mut m_bar = m.clone();
    if rho == T::zero() {
        return Ok((w, m_bar));
    }
    for j in 0..l {
        let tables = m[(j, j)];
        if tables == 0 {
            continue;
        }
        let denom = rho + beta[j] * (T::one() - rho);
        let p = if denom > T::zero() { rho / denom } else { T::one() };
        let wj = sample_binomial(tables, p, rng)?;
        w[j] = wj;
        m_bar[(j, j)] = tables - wj;
    }
    Ok((w, m_bar))
}

/// Resample the global weights from `Dir(γ/L + m̄_·1, ..., γ/L + m̄_·L)`.
pub fn sample_global_beta<T: Real>(
    m_bar: &DMatrix<u64>,
    gamma: T,
    l: usize,
    rng: &mut RngStream,
) -> Result<DVector<T>> {
    if m_bar.nrows() != l || m_bar.ncols() != l {
        return Err(Error::dim("informative counts must be LxL"));
    }
    let base = gamma / cast::<T>(l as f64);
    let conc: Vec<T> = (0..l)
        .map(|k| {
            let col_sum: u64 = (0..l).map(|j| m_bar[(j, k)]).sum();
            base + cast::<T>(col_sum as f64)
        })
        .collect();
    sample_dirichlet(&conc, rng)
}

/// Resample every transition row; `κ` is added only to the diagonal entry.
///
/// Rows with no observed transitions are still refreshed from the prior so
/// the state keeps a fixed dimension.
pub fn sample_transition_rows<T: Real>(
    beta: &DVector<T>,
    n: &DMatrix<u64>,
    alpha: T,
    kappa: T,
    rng: &mut RngStream,
) -> Result<DMatrix<T>> {
    let l = beta.len();
    if n.nrows() != l || n.ncols() != l {
        return Err(Error::dim("transition counts must be LxL"));
    }
    if !(alpha + kappa > T::zero()) {
        return Err(Error::param("transition rows require alpha + kappa > 0"));
    }
    // A beta entry can underflow to exactly zero; floor the concentration so
    // the Dirichlet draw stays well-defined (the row entry then underflows
    // to zero itself, which is the correct limit).
    let floor = cast::<T>(1e-300);
    let mut pi = DMatrix::zeros(l, l);
    let mut conc = vec![T::zero(); l];
    for j in 0..l {
        for k in 0..l {
            let sticky = if j == k { kappa } else { T::zero() };
            conc[k] = (alpha * beta[k] + sticky + cast::<T>(n[(j, k)] as f64)).max(floor);
        }
        let row = sample_dirichlet(&conc, rng)?;
        pi.row_mut(j).copy_from(&row.transpose());
    }
    Ok(pi)
}

/// Hyperprior constants `(a, b, c, d, e, f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperPriors<T: Real> {
    /// Gamma(a, b) prior on `α+κ`.
    pub a: T,
    pub b: T,
    /// Beta(c, d) prior on `ρ`.
    pub c: T,
    pub d: T,
    /// Gamma(e, f) prior on `γ`.
    pub e: T,
    pub f: T,
}

impl<T: Real> HyperPriors<T> {
    pub fn new(a: T, b: T, c: T, d: T, e: T, f: T) -> Result<Self> {
        for (name, v) in [("a", a), ("b", b), ("c", c), ("d", d), ("e", e), ("f", f)] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::param(format!(
                    "hyperprior parameter {name} must be positive"
                )));
            }
        }
        Ok(Self { a, b, c, d, e, f })
    }

    /// Draw `(α+κ, ρ, γ)` from the priors; `ρ = 0` when sticky is disabled.
    pub fn draw_initial(
        &self,
        trunc: usize,
        sticky: bool,
        rng: &mut RngStream,
    ) -> Result<HdpParams<T>> {
        let apk = sample_gamma(self.a, self.b, rng)?;
        let rho = if sticky {
            sample_beta(self.c, self.d, rng)?
        } else {
            T::zero()
        };
        let gamma = sample_gamma(self.e, self.f, rng)?;
        HdpParams::new(gamma, apk, rho, trunc)
    }
}

/// Resample `(γ, α+κ, ρ)` given the transition statistics.
///
/// Uses the auxiliary-variable updates described in the module docs. With
/// `sticky` disabled, `ρ` is pinned at zero and only the concentrations are
/// refreshed.
pub fn sample_hyperparameters<T: Real>(
    stats: &TransitionStats,
    hp: &HdpParams<T>,
    priors: &HyperPriors<T>,
    sticky: bool,
    rng: &mut RngStream,
) -> Result<HdpParams<T>> {
    let l = stats.trunc();
    if l != hp.trunc() {
        return Err(Error::dim("statistics and parameters disagree on L"));
    }
    let apk = sample_concentration_row_mass(stats, hp.alpha_plus_kappa(), priors, rng)?;
    let gamma = sample_concentration_global(stats, hp.gamma(), priors, rng)?;
    let rho = if sticky {
        let w_total: u64 = stats.w.iter().sum();
        let m_total: u64 = stats.m.iter().sum();
        sample_beta(
            priors.c + cast::<T>(w_total as f64),
            priors.d + cast::<T>((m_total - w_total) as f64),
            rng,
        )?
    } else {
        T::zero()
    };
    HdpParams::new(gamma, apk, rho, l)
}

fn sample_concentration_row_mass<T: Real>(
    stats: &TransitionStats,
    current: T,
    priors: &HyperPriors<T>,
    rng: &mut RngStream,
) -> Result<T> {
    let l = stats.trunc();
    let m_total: u64 = stats.m.iter().sum();
    let mut shape = priors.a + cast::<T>(m_total as f64);
    let mut rate = priors.b;
    for j in 0..l {
        let customers: u64 = (0..l).map(|k| stats.n[(j, k)]).sum();
        if customers == 0 {
            continue;
        }
        let nj = cast::<T>(customers as f64);
        let r = sample_beta(current + T::one(), nj, rng)?;
        rate -= r.ln();
        if T::open01(rng) < nj / (nj + current) {
            shape -= T::one();
        }
    }
    if !(shape > T::zero()) {
        // Only possible when every row auxiliary fired and no tables exist.
        shape = priors.a;
    }
    sample_gamma(shape, rate, rng)
}

fn sample_concentration_global<T: Real>(
    stats: &TransitionStats,
    current: T,
    priors: &HyperPriors<T>,
    rng: &mut RngStream,
) -> Result<T> {
    let l = stats.trunc();
    let m_bar_total: u64 = stats.m_bar.iter().sum();
    if m_bar_total == 0 {
        return sample_gamma(priors.e, priors.f, rng);
    }
    let occupied = (0..l)
        .filter(|&k| (0..l).any(|j| stats.m_bar[(j, k)] > 0))
        .count();
    let kbar = cast::<T>(occupied as f64);
    let total = cast::<T>(m_bar_total as f64);
    let eta = sample_beta(current + T::one(), total, rng)?;
    let rate = priors.f - eta.ln();
    let odds_num = priors.e + kbar - T::one();
    let odds_den = total * rate;
    let p_upper = odds_num / (odds_num + odds_den);
    let shape = if T::open01(rng) < p_upper {
        priors.e + kbar
    } else {
        priors.e + kbar - T::one()
    };
    sample_gamma(shape, rate, rng)
}

/// Prior expectation of each diagonal transition entry: `(αβ_j + κ)/(α+κ)`.
pub fn expected_self_transition<T: Real>(hp: &HdpParams<T>, beta: &DVector<T>) -> DVector<T> {
    let apk = hp.alpha_plus_kappa();
    beta.map(|b| (hp.alpha() * b + hp.kappa()) / apk)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rng(seed: u64) -> RngStream {
        RngStream::from_seed(seed)
    }

    fn hp(gamma: f64, apk: f64, rho: f64, l: usize) -> HdpParams<f64> {
        HdpParams::new(gamma, apk, rho, l).unwrap()
    }

    #[test]
    fn params_satisfy_deterministic_relationships() {
        let p = hp(3.0, 10.0, 0.9, 4);
        assert!((p.alpha() - 0.1 * 10.0).abs() < 1e-10);
        assert!((p.kappa() - 0.9 * 10.0).abs() < 1e-10);
        let q = hp(3.0, 10.0, 0.0, 4);
        assert_eq!(q.kappa(), 0.0);
        assert_eq!(q.rho(), 0.0);
    }

    #[test]
    fn init_beta_degenerate_and_mean() {
        let mut r = rng(1);
        let single = init_beta(&hp(2.0, 1.0, 0.0, 1), &mut r).unwrap();
        assert_eq!(single[0], 1.0);

        let p = hp(5.0, 1.0, 0.0, 4);
        let n = 10_000;
        let mut mean = DVector::zeros(4);
        for _ in 0..n {
            mean += init_beta(&p, &mut r).unwrap();
        }
        mean /= n as f64;
        for k in 0..4 {
            assert!((mean[k] - 0.25).abs() / 0.25 < 0.02, "mean[{k}]={}", mean[k]);
        }
    }

    #[test]
    fn init_beta_concentrates_for_large_gamma() {
        let mut r = rng(2);
        let p = hp(1e6, 1.0, 0.0, 10);
        for _ in 0..20 {
            let beta = init_beta(&p, &mut r).unwrap();
            for k in 0..10 {
                assert!((beta[k] - 0.1).abs() < 0.01);
            }
        }
    }

    #[test]
    fn count_transitions_examples() {
        let n = count_transitions(&[0, 0, 1, 1, 1], 2).unwrap();
        assert_eq!(n[(0, 0)], 1);
        assert_eq!(n[(0, 1)], 1);
        assert_eq!(n[(1, 0)], 0);
        assert_eq!(n[(1, 1)], 2);

        let single = count_transitions(&[0], 2).unwrap();
        assert_eq!(single.sum(), 0);

        assert!(count_transitions(&[0, 3], 2).is_err());
    }

    #[test]
    fn table_counts_edge_cases() {
        let mut r = rng(3);
        let beta = DVector::from_vec(vec![0.5, 0.5]);
        let mut n = DMatrix::zeros(2, 2);
        n[(0, 1)] = 1;
        let m = sample_table_counts(&n, &beta, 1.0, 2.0, &mut r).unwrap();
        assert_eq!(m[(0, 1)], 1, "a single customer opens one table");
        assert_eq!(m[(0, 0)], 0, "no customers, no tables");
    }

    #[test]
    fn table_counts_match_restaurant_expectation() {
        let mut r = rng(4);
        let beta = DVector::from_vec(vec![0.3, 0.7]);
        let alpha = 2.0;
        let kappa = 1.5;
        let customers = 6u64;
        let mut n = DMatrix::zeros(2, 2);
        n[(1, 1)] = customers;
        // E[m] = Σ_{i=1..n} c / (c + i - 1) with c = αβ_k + κ on the diagonal.
        let c = alpha * beta[1] + kappa;
        let expect: f64 = (1..=customers).map(|i| c / (c + (i - 1) as f64)).sum();
        let reps = 100_000;
        let mut total = 0u64;
        for _ in 0..reps {
            total += sample_table_counts(&n, &beta, alpha, kappa, &mut r).unwrap()[(1, 1)];
        }
        let mean = total as f64 / reps as f64;
        assert!((mean - expect).abs() / expect < 0.02, "mean={mean}, expect={expect}");
    }

    #[test]
    fn overrides_rho_extremes() {
        let mut r = rng(5);
        let beta = DVector::from_vec(vec![0.4, 0.6]);
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = 7;
        m[(1, 1)] = 3;
        m[(0, 1)] = 2;

        let (w, m_bar) = sample_overrides(&m, 0.0, &beta, &mut r).unwrap();
        assert!(w.iter().all(|&x| x == 0), "rho = 0 never overrides");
        assert_eq!(m_bar, m);

        let (w, m_bar) = sample_overrides(&m, 1.0, &beta, &mut r).unwrap();
        assert_eq!(w[0], 7);
        assert_eq!(w[1], 3);
        assert_eq!(m_bar[(0, 0)], 0);
        assert_eq!(m_bar[(1, 1)], 0);
        assert_eq!(m_bar[(0, 1)], 2, "off-diagonal tables are never overridden");
    }

    #[test]
    fn overrides_binomial_mean() {
        let mut r = rng(6);
        let rho = 0.6;
        let beta = DVector::from_vec(vec![0.25, 0.75]);
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = 5;
        let p = rho / (rho + beta[0] * (1.0 - rho));
        let reps = 100_000;
        let mut total = 0u64;
        for _ in 0..reps {
            total += sample_overrides(&m, rho, &beta, &mut r).unwrap().0[0];
        }
        let mean = total as f64 / (reps as f64 * 5.0);
        assert!((mean - p).abs() / p < 0.02, "mean={mean} p={p}");
    }

    #[test]
    fn global_beta_zero_counts_is_prior() {
        let mut r = rng(7);
        let l = 3;
        let gamma = 6.0;
        let m_bar = DMatrix::zeros(l, l);
        let n = 20_000;
        let mut mean = DVector::zeros(l);
        for _ in 0..n {
            mean += sample_global_beta(&m_bar, gamma, l, &mut r).unwrap();
        }
        mean /= n as f64;
        for k in 0..l {
            assert!((mean[k] - 1.0 / l as f64).abs() < 0.01);
        }
    }

    #[test]
    fn global_beta_posterior_mean() {
        let mut r = rng(8);
        let l = 2;
        let gamma = 2.0;
        let mut m_bar = DMatrix::zeros(l, l);
        m_bar[(0, 0)] = 4;
        m_bar[(1, 0)] = 2;
        m_bar[(1, 1)] = 3;
        // Concentration (γ/L + 6, γ/L + 3).
        let conc = [gamma / 2.0 + 6.0, gamma / 2.0 + 3.0];
        let total: f64 = conc.iter().sum();
        let n = 100_000;
        let mut mean = DVector::zeros(l);
        for _ in 0..n {
            let b = sample_global_beta(&m_bar, gamma, l, &mut r).unwrap();
            assert!((b.sum() - 1.0).abs() < 1e-12);
            mean += b;
        }
        mean /= n as f64;
        for k in 0..l {
            let expect = conc[k] / total;
            assert!((mean[k] - expect).abs() / expect < 0.02);
        }
    }

    #[test]
    fn transition_rows_match_beta_without_stickiness() {
        let mut r = rng(9);
        let beta = DVector::from_vec(vec![0.2, 0.5, 0.3]);
        let n = DMatrix::zeros(3, 3);
        let reps = 100_000;
        let mut mean = DVector::zeros(3);
        for _ in 0..reps {
            let pi = sample_transition_rows(&beta, &n, 4.0, 0.0, &mut r).unwrap();
            for k in 0..3 {
                mean[k] += pi[(0, k)];
            }
        }
        mean /= reps as f64;
        for k in 0..3 {
            assert!((mean[k] - beta[k]).abs() / beta[k] < 0.02, "k={k} mean={}", mean[k]);
        }
    }

    #[test]
    fn transition_rows_diagonal_dominates_for_large_kappa() {
        let mut r = rng(10);
        let beta = DVector::from_vec(vec![0.25; 4]);
        let n = DMatrix::zeros(4, 4);
        for _ in 0..50 {
            let pi = sample_transition_rows(&beta, &n, 1.0, 1e6, &mut r).unwrap();
            for k in 0..4 {
                assert!(pi[(k, k)] > 0.999);
                let row_sum: f64 = (0..4).map(|i| pi[(k, i)]).sum();
                assert!((row_sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn posterior_concentrates_on_normalized_counts() {
        let mut r = rng(11);
        let beta = DVector::from_vec(vec![0.5, 0.5]);
        let mut n = DMatrix::zeros(2, 2);
        n[(0, 0)] = 300;
        n[(0, 1)] = 100;
        let reps = 20_000;
        let mut mean = 0.0;
        for _ in 0..reps {
            mean += sample_transition_rows(&beta, &n, 2.0, 1.0, &mut r).unwrap()[(0, 0)];
        }
        mean /= reps as f64;
        let expect = (2.0 * 0.5 + 1.0 + 300.0) / (2.0 + 1.0 + 400.0);
        assert!((mean - expect).abs() / expect < 0.02, "mean={mean} expect={expect}");
    }

    #[test]
    fn hyperparameters_recover_priors_on_empty_stats() {
        let mut r = rng(12);
        let priors = HyperPriors::new(10.0, 1.0, 20.0, 2.0, 10.0, 1.0).unwrap();
        let stats = TransitionStats::empty(5);
        let start = hp(10.0, 10.0, 0.9, 5);
        let n = 50_000;
        let (mut apk, mut rho, mut gamma) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let out = sample_hyperparameters(&stats, &start, &priors, true, &mut r).unwrap();
            apk += out.alpha_plus_kappa();
            rho += out.rho();
            gamma += out.gamma();
        }
        apk /= n as f64;
        rho /= n as f64;
        gamma /= n as f64;
        assert!((apk - 10.0).abs() / 10.0 < 0.03, "apk={apk}");
        assert!((gamma - 10.0).abs() / 10.0 < 0.03, "gamma={gamma}");
        let rho_expect = 20.0 / 22.0;
        assert!((rho - rho_expect).abs() / rho_expect < 0.03, "rho={rho}");
    }

    #[test]
    fn hyperparameters_hold_invariants_on_random_stats() {
        let mut r = rng(13);
        let priors = HyperPriors::new(10.0, 1.0, 20.0, 2.0, 10.0, 1.0).unwrap();
        let l = 3;
        for trial in 0..200 {
            let z: Vec<usize> = (0..50).map(|i| (i + trial) % l).collect();
            let n = count_transitions(&z, l).unwrap();
            let beta = DVector::from_vec(vec![1.0 / 3.0; 3]);
            let m = sample_table_counts(&n, &beta, 1.0, 2.0, &mut r).unwrap();
            let (w, m_bar) = sample_overrides(&m, 0.7, &beta, &mut r).unwrap();
            let stats = TransitionStats { n, m, w, m_bar };
            let out =
                sample_hyperparameters(&stats, &hp(2.0, 5.0, 0.5, l), &priors, true, &mut r)
                    .unwrap();
            let apk = out.alpha_plus_kappa();
            assert!((out.alpha() - (1.0 - out.rho()) * apk).abs() < 1e-10);
            assert!((out.kappa() - out.rho() * apk).abs() < 1e-10);
        }
    }

    #[test]
    fn nonsticky_pipeline_has_exact_zero_overrides() {
        let mut r = rng(14);
        let l = 3;
        let z: Vec<usize> = (0..60).map(|i| i % l).collect();
        let n = count_transitions(&z, l).unwrap();
        assert_eq!(n.sum(), 59, "count conservation");
        let beta = DVector::from_vec(vec![1.0 / 3.0; 3]);
        let m = sample_table_counts(&n, &beta, 2.0, 0.0, &mut r).unwrap();
        for j in 0..l {
            for k in 0..l {
                assert!(m[(j, k)] <= n[(j, k)]);
                assert!(n[(j, k)] == 0 || m[(j, k)] >= 1);
            }
        }
        let (w, m_bar) = sample_overrides(&m, 0.0, &beta, &mut r).unwrap();
        assert!(w.iter().all(|&x| x == 0));
        assert_eq!(m_bar, m);
    }

    #[test]
    fn expected_self_transition_limits() {
        let beta = DVector::from_vec(vec![0.2, 0.8]);
        let nonsticky = expected_self_transition(&hp(1.0, 5.0, 0.0, 2), &beta);
        assert!((nonsticky[0] - 0.2).abs() < 1e-12);
        assert!((nonsticky[1] - 0.8).abs() < 1e-12);

        let sticky = expected_self_transition(&hp(1.0, 1e9, 1.0 - 1e-9, 2), &beta);
        assert!(sticky[0] > 0.999);
    }

    #[test]
    fn expected_self_transition_matches_empirical() {
        let mut r = rng(15);
        let beta = DVector::from_vec(vec![0.3, 0.7]);
        let p = hp(1.0, 4.0, 0.6, 2);
        let n = DMatrix::zeros(2, 2);
        let expect = expected_self_transition(&p, &beta);
        let reps = 100_000;
        let mut mean = DVector::zeros(2);
        for _ in 0..reps {
            let pi = sample_transition_rows(&beta, &n, p.alpha(), p.kappa(), &mut r).unwrap();
            mean[0] += pi[(0, 0)];
            mean[1] += pi[(1, 1)];
        }
        mean /= reps as f64;
        for k in 0..2 {
            assert!((mean[k] - expect[k]).abs() / expect[k] < 0.02);
        }
    }

    proptest! {
        #[test]
        fn transition_count_conservation(
            z in proptest::collection::vec(0usize..4, 1..200),
        ) {
            let n = count_transitions(&z, 4).unwrap();
            prop_assert_eq!(n.sum() as usize, z.len() - 1);
        }

        #[test]
        fn auxiliary_count_ordering(seed in 0u64..500) {
            let mut r = rng(seed);
            let z: Vec<usize> = (0..80).map(|i| (i / 7) % 3).collect();
            let n = count_transitions(&z, 3).unwrap();
            let beta = DVector::from_vec(vec![0.2, 0.3, 0.5]);
            let m = sample_table_counts(&n, &beta, 1.5, 3.0, &mut r).unwrap();
            let (_, m_bar) = sample_overrides(&m, 0.8, &beta, &mut r).unwrap();
            for j in 0..3 {
                for k in 0..3 {
                    prop_assert!(m_bar[(j, k)] <= m[(j, k)]);
                    prop_assert!(m[(j, k)] <= n[(j, k)]);
                    prop_assert!(n[(j, k)] == 0 || m[(j, k)] >= 1);
                }
            }
        }
    }
}
