//! Run configuration: every knob of a segmentation run, serializable so
//! result files can embed the fully resolved setup.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A matrix-valued option given either as a scalar multiple of the identity
/// or as explicit rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Full(Vec<Vec<f64>>),
}

impl MatrixSpec {
    /// Materialize into `dim x dim` rows.
    pub fn resolve(&self, dim: usize, what: &str) -> Result<Vec<Vec<f64>>> {
        match self {
            MatrixSpec::Scalar(s) => {
                if !s.is_finite() {
                    return Err(Error::validation(format!("{what}: scalar must be finite")));
                }
                Ok((0..dim)
                    .map(|i| (0..dim).map(|j| if i == j { *s } else { 0.0 }).collect())
                    .collect())
            }
            MatrixSpec::Full(rows) => {
                check_rows(rows, dim, dim, what)?;
                Ok(rows.clone())
            }
        }
    }
}

/// A matrix-valued option that may also be the literal string `"identity"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NamedMatrixSpec {
    Named(String),
    Full(Vec<Vec<f64>>),
}

impl NamedMatrixSpec {
    pub fn identity() -> Self {
        NamedMatrixSpec::Named("identity".to_owned())
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, NamedMatrixSpec::Named(n) if n == "identity")
    }

    /// Materialize into `rows x cols` entries.
    pub fn resolve(&self, rows: usize, cols: usize, what: &str) -> Result<Vec<Vec<f64>>> {
        match self {
            NamedMatrixSpec::Named(name) => {
                if name != "identity" {
                    return Err(Error::validation(format!(
                        "{what}: unknown matrix name {name:?} (only \"identity\" is supported)"
                    )));
                }
                if rows != cols {
                    return Err(Error::dim(format!("{what}: identity must be square")));
                }
                Ok((0..rows)
                    .map(|i| (0..cols).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                    .collect())
            }
            NamedMatrixSpec::Full(m) => {
                check_rows(m, rows, cols, what)?;
                Ok(m.clone())
            }
        }
    }
}

fn check_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<()> {
    if rows.len() != nrows {
        return Err(Error::dim(format!(
            "{what}: expected {nrows} rows, got {}",
            rows.len()
        )));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::dim(format!(
                "{what}: row {i} has {} entries, expected {ncols}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!("{what}: row {i} has non-finite entries")));
        }
    }
    Ok(())
}

/// Hyperprior constants `(a, b, c, d, e, f)`:
/// `(α+κ) ~ Gamma(a, b)`, `ρ ~ Beta(c, d)`, `γ ~ Gamma(e, f)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            a: 10.0,
            b: 1.0,
            c: 20.0,
            d: 2.0,
            e: 10.0,
            f: 1.0,
        }
    }
}

/// Matrix-normal inverse-Wishart prior configuration.
///
/// `n0` defaults to `D + 2` once the data dimension is known. `S0` defaults
/// to three times the observation-noise scale mapped into state space;
/// anchoring the process-noise prior near the noise floor of the
/// observation-initialized states keeps freshly born modes competitive with
/// established ones. Both defaults are echoed into result files once
/// resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MniwConfig {
    #[serde(rename = "M")]
    pub m: NamedMatrixSpec,
    #[serde(rename = "K")]
    pub k: MatrixSpec,
    pub n0: Option<f64>,
    #[serde(rename = "S0")]
    pub s0: Option<MatrixSpec>,
}

impl Default for MniwConfig {
    fn default() -> Self {
        Self {
            m: NamedMatrixSpec::identity(),
            k: MatrixSpec::Scalar(0.1),
            n0: None,
            s0: None,
        }
    }
}

/// Full configuration of one segmentation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Truncation level of the mode set.
    #[serde(rename = "L")]
    pub trunc: usize,
    /// Number of Gibbs sweeps.
    pub iterations: usize,
    /// The best sample is chosen from the last `select_window` sweeps.
    pub select_window: usize,
    /// Sweeps trimmed from the front of the reported trace.
    pub burn_in: usize,
    /// Keep every `thin`-th state snapshot.
    pub thin: usize,
    /// Base seed; chain `i` runs on `seed + i`.
    pub seed: u64,
    /// Number of independent chains.
    pub chains: usize,
    pub priors: PriorConfig,
    /// Refresh `(γ, α+κ, ρ)` each sweep.
    pub resample_hyperparameters: bool,
    /// With `sticky = false`, `ρ` and `κ` are pinned to zero.
    pub sticky: bool,
    /// Observation noise covariance (scalar means `R = r·I`).
    #[serde(rename = "R")]
    pub obs_noise: MatrixSpec,
    /// Observation matrix (`"identity"` or explicit rows).
    #[serde(rename = "C")]
    pub obs_matrix: NamedMatrixSpec,
    /// Mean of the pre-sequence state prior; defaults to the first
    /// observation mapped into state space.
    pub x0_mean: Option<Vec<f64>>,
    /// Covariance of the pre-sequence state prior; defaults to `R` when the
    /// observation matrix is the identity.
    pub x0_cov: Option<MatrixSpec>,
    pub mniw: MniwConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            trunc: 100,
            iterations: 105,
            select_window: 5,
            burn_in: 0,
            thin: 5,
            seed: 0,
            chains: 1,
            priors: PriorConfig::default(),
            resample_hyperparameters: true,
            sticky: true,
            obs_noise: MatrixSpec::Scalar(1e-4),
            obs_matrix: NamedMatrixSpec::identity(),
            x0_mean: None,
            x0_cov: None,
            mniw: MniwConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trunc == 0 {
            return Err(Error::validation("L must be at least 1"));
        }
        if self.select_window == 0 || self.select_window > self.iterations + 1 {
            return Err(Error::validation(
                "select_window must lie in [1, iterations + 1]",
            ));
        }
        if self.thin == 0 {
            return Err(Error::validation("thin must be at least 1"));
        }
        if self.chains == 0 {
            return Err(Error::validation("chains must be at least 1"));
        }
        let p = &self.priors;
        for (name, v) in [
            ("a", p.a),
            ("b", p.b),
            ("c", p.c),
            ("d", p.d),
            ("e", p.e),
            ("f", p.f),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::validation(format!(
                    "prior parameter {name} must be positive, got {v}"
                )));
            }
        }
        if let Some(n0) = self.mniw.n0 {
            if !n0.is_finite() {
                return Err(Error::validation("mniw.n0 must be finite"));
            }
        }
        Ok(())
    }

    /// Fill in the data-dependent defaults so the echoed configuration is
    /// self-contained and replayable.
    pub fn resolve_defaults(&mut self, state_dim: usize, s0_scale: f64) {
        if self.mniw.n0.is_none() {
            self.mniw.n0 = Some((state_dim + 2) as f64);
        }
        if self.mniw.s0.is_none() {
            self.mniw.s0 = Some(MatrixSpec::Scalar(s0_scale));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_protocol() {
        let c = RunConfig::default();
        assert_eq!(c.trunc, 100);
        assert_eq!(c.iterations, 105);
        assert_eq!(c.select_window, 5);
        assert_eq!(c.thin, 5);
        assert_eq!(c.chains, 1);
        assert!(c.sticky);
        assert!(c.resample_hyperparameters);
        assert_eq!(
            c.priors,
            PriorConfig {
                a: 10.0,
                b: 1.0,
                c: 20.0,
                d: 2.0,
                e: 10.0,
                f: 1.0
            }
        );
        assert_eq!(c.obs_noise, MatrixSpec::Scalar(1e-4));
        assert!(c.obs_matrix.is_identity());
        assert!(c.validate().is_ok());
    }

    #[test]
    fn toml_round_trip_with_dotted_keys() {
        let text = r#"
            L = 10
            iterations = 20
            seed = 7
            sticky = false
            R = 0.01
            priors.a = 5.0
            mniw.n0 = 4.0
            mniw.K = [[0.5, 0.0], [0.0, 0.5]]
        "#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.trunc, 10);
        assert_eq!(cfg.iterations, 20);
        assert!(!cfg.sticky);
        assert_eq!(cfg.priors.a, 5.0);
        assert_eq!(cfg.priors.b, 1.0);
        assert_eq!(cfg.mniw.n0, Some(4.0));
        assert_eq!(
            cfg.mniw.k,
            MatrixSpec::Full(vec![vec![0.5, 0.0], vec![0.0, 0.5]])
        );
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let err = toml::from_str::<RunConfig>("bogus_key = 3\n").unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut c = RunConfig::default();
        c.trunc = 0;
        assert!(c.validate().is_err());

        let mut c = RunConfig::default();
        c.select_window = 0;
        assert!(c.validate().is_err());

        let mut c = RunConfig::default();
        c.iterations = 3;
        c.select_window = 5;
        assert!(c.validate().is_err());

        let mut c = RunConfig::default();
        c.priors.d = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn matrix_specs_resolve() {
        let m = MatrixSpec::Scalar(2.0).resolve(2, "R").unwrap();
        assert_eq!(m, vec![vec![2.0, 0.0], vec![0.0, 2.0]]);
        assert!(MatrixSpec::Full(vec![vec![1.0]]).resolve(2, "R").is_err());

        let id = NamedMatrixSpec::identity().resolve(2, 2, "C").unwrap();
        assert_eq!(id, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(NamedMatrixSpec::Named("diag".into()).resolve(2, 2, "C").is_err());
    }

    #[test]
    fn resolve_defaults_fills_n0_and_s0() {
        let mut c = RunConfig::default();
        c.resolve_defaults(2, 3e-4);
        assert_eq!(c.mniw.n0, Some(4.0));
        assert_eq!(c.mniw.s0, Some(MatrixSpec::Scalar(3e-4)));

        let mut c = RunConfig::default();
        c.mniw.s0 = Some(MatrixSpec::Scalar(0.5));
        c.resolve_defaults(2, 3e-4);
        assert_eq!(c.mniw.s0, Some(MatrixSpec::Scalar(0.5)), "explicit S0 wins");
    }
}
