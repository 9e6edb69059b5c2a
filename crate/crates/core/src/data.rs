//! Synthetic trajectory generation and segmentation metrics.

use crate::dynamics::DynParams;
use crate::error::{Error, Result};
use crate::messages::ObsModel;
use crate::real::{cast, Real};
use crate::rng::RngStream;
use crate::stats::{sample_mvn, SpdMatrix};
use nalgebra::{DMatrix, DVector};
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix as PfMatrix;
use std::collections::BTreeMap;

/// Specification of a switching-linear-dynamics trajectory.
#[derive(Debug, Clone)]
pub struct SldsSpec<T: Real> {
    /// The dynamical systems addressed by the layout.
    pub dynamics: Vec<DynParams<T>>,
    /// `(segment length, mode index)` pairs; lengths sum to the duration.
    pub layout: Vec<(usize, usize)>,
    /// Deterministic initial state.
    pub x0: DVector<T>,
    pub obs: ObsModel<T>,
}

impl<T: Real> SldsSpec<T> {
    pub fn new(
        dynamics: Vec<DynParams<T>>,
        layout: Vec<(usize, usize)>,
        x0: DVector<T>,
        obs: ObsModel<T>,
    ) -> Result<Self> {
        if dynamics.is_empty() || layout.is_empty() {
            return Err(Error::validation("spec needs dynamics and a layout"));
        }
        for dp in &dynamics {
            if dp.dim() != x0.len() {
                return Err(Error::dim("dynamics dimension does not match x0"));
            }
        }
        if obs.state_dim() != x0.len() {
            return Err(Error::dim("observation model does not match the state dimension"));
        }
        for &(len, mode) in &layout {
            if len == 0 {
                return Err(Error::validation("layout segments must be non-empty"));
            }
            if mode >= dynamics.len() {
                return Err(Error::validation(format!(
                    "layout references mode {mode} but only {} dynamics exist",
                    dynamics.len()
                )));
            }
        }
        Ok(Self {
            dynamics,
            layout,
            x0,
            obs,
        })
    }

    pub fn duration(&self) -> usize {
        self.layout.iter().map(|&(len, _)| len).sum()
    }

    /// The mode label of every time step implied by the layout.
    pub fn labels(&self) -> Vec<usize> {
        let mut z = Vec::with_capacity(self.duration());
        for &(len, mode) in &self.layout {
            z.extend(std::iter::repeat(mode).take(len));
        }
        z
    }
}

/// A generated trajectory with its ground truth.
#[derive(Debug, Clone)]
pub struct LabeledTrajectory<T: Real> {
    /// Observations, one row per time step.
    pub y: DMatrix<T>,
    /// Noise-free states, one row per time step.
    pub x_true: DMatrix<T>,
    /// Generating mode labels.
    pub z_true: Vec<usize>,
}

/// Simulate the generative model: `x_t = A^(z_t) x_{t-1} + e_t`,
/// `y_t = C x_t + w_t`.
pub fn generate_slds<T: Real>(spec: &SldsSpec<T>, rng: &mut RngStream) -> Result<LabeledTrajectory<T>> {
    let t_total = spec.duration();
    let d = spec.x0.len();
    let d_obs = spec.obs.obs_dim();
    let z = spec.labels();
    let mut x = DMatrix::<T>::zeros(t_total, d);
    let mut y = DMatrix::<T>::zeros(t_total, d_obs);
    let mut prev = spec.x0.clone();
    let zero_state = DVector::<T>::zeros(d);
    let zero_obs = DVector::<T>::zeros(d_obs);
    for t in 0..t_total {
        let dp = &spec.dynamics[z[t]];
        let noise = sample_mvn(&zero_state, &dp.sigma, rng)?;
        let next = &dp.a * &prev + noise;
        let w = sample_mvn(&zero_obs, spec.obs.r(), rng)?;
        let obs = spec.obs.c() * &next + w;
        x.row_mut(t).copy_from(&next.transpose());
        y.row_mut(t).copy_from(&obs.transpose());
        prev = next;
    }
    Ok(LabeledTrajectory { y, x_true: x, z_true: z })
}

/// The three-mode planar toy system.
///
/// Dynamics matrices
/// `A₀ = [[0, 1], [0.7, 0.36]]`, `A₁ = [[0, 1], [0.4, 0.56]]`,
/// `A₂ = [[0.5, 0.5], [0.32, 0.67]]`, all with process noise `1e-5·I`,
/// observed through `C = I` with noise `1e-4·I`, starting from `x₀ = (1, 1)`.
/// The default layout cycles the modes over six segments proportioned as
/// `(80, 60, 70, 60, 70, 60)` out of 400 steps.
pub fn toy_spec<T: Real>(t_total: usize, layout: Option<Vec<(usize, usize)>>) -> Result<SldsSpec<T>> {
    let a_mats = [
        [0.0, 1.0, 0.7, 0.36],
        [0.0, 1.0, 0.4, 0.56],
        [0.5, 0.5, 0.32, 0.67],
    ];
    let sigma = SpdMatrix::scaled_identity(2, cast::<T>(1e-5))?;
    let dynamics: Vec<DynParams<T>> = a_mats
        .iter()
        .map(|rows| {
            let a = DMatrix::from_fn(2, 2, |i, j| cast::<T>(rows[i * 2 + j]));
            DynParams::new(a, sigma.clone())
        })
        .collect::<Result<_>>()?;
    let layout = match layout {
        Some(given) => {
            let sum: usize = given.iter().map(|&(len, _)| len).sum();
            if sum != t_total {
                return Err(Error::validation(format!(
                    "layout lengths sum to {sum}, expected T = {t_total}"
                )));
            }
            given
        }
        None => default_layout(t_total)?,
    };
    let obs = ObsModel::identity(SpdMatrix::scaled_identity(2, cast::<T>(1e-4))?);
    SldsSpec::new(
        dynamics,
        layout,
        DVector::from_element(2, T::one()),
        obs,
    )
}

/// Six segments cycling modes (0, 1, 2, 0, 1, 2) with the reference
/// proportions (80, 60, 70, 60, 70, 60)/400, rescaled to `t_total`.
fn default_layout(t_total: usize) -> Result<Vec<(usize, usize)>> {
    const WEIGHTS: [usize; 6] = [80, 60, 70, 60, 70, 60];
    const MODES: [usize; 6] = [0, 1, 2, 0, 1, 2];
    let total_w: usize = WEIGHTS.iter().sum();
    let mut layout = Vec::with_capacity(6);
    let mut cum_w = 0usize;
    let mut prev_boundary = 0usize;
    for (i, &w) in WEIGHTS.iter().enumerate() {
        cum_w += w;
        // Rounded cumulative boundaries always sum to exactly t_total.
        let boundary = (cum_w * t_total + total_w / 2) / total_w;
        let len = boundary - prev_boundary;
        if len == 0 {
            return Err(Error::validation(format!(
                "T = {t_total} is too short for the default six-segment layout"
            )));
        }
        layout.push((len, MODES[i]));
        prev_boundary = boundary;
    }
    Ok(layout)
}

/// Optimal injective mapping from predicted labels to true labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatching {
    /// Predicted label → matched true label (`None` when unmatched).
    pub assignment: BTreeMap<usize, Option<usize>>,
    /// Total number of time steps explained by the mapping.
    pub overlap: usize,
}

/// Match predicted labels to true labels by maximum-overlap assignment on
/// the confusion matrix.
pub fn match_labels(z_pred: &[usize], z_true: &[usize]) -> Result<LabelMatching> {
    if z_pred.len() != z_true.len() {
        return Err(Error::validation(format!(
            "label sequences differ in length: {} vs {}",
            z_pred.len(),
            z_true.len()
        )));
    }
    if z_pred.is_empty() {
        return Err(Error::validation("label sequences are empty"));
    }
    let pred_labels = distinct(z_pred);
    let true_labels = distinct(z_true);
    let confusion: Vec<Vec<i64>> = pred_labels
        .iter()
        .map(|&p| {
            true_labels
                .iter()
                .map(|&t| {
                    z_pred
                        .iter()
                        .zip(z_true)
                        .filter(|&(&zp, &zt)| zp == p && zt == t)
                        .count() as i64
                })
                .collect()
        })
        .collect();

    // Pad to a square matrix; kuhn_munkres maximizes total weight over
    // row-to-column assignments.
    let side = pred_labels.len().max(true_labels.len());
    let padded = PfMatrix::from_fn(side, side, |(i, j)| {
        confusion
            .get(i)
            .and_then(|row| row.get(j))
            .copied()
            .unwrap_or(0)
    });
    let (total, cols) = kuhn_munkres(&padded);

    let mut assignment = BTreeMap::new();
    let mut overlap = 0usize;
    for (i, &p) in pred_labels.iter().enumerate() {
        let j = cols[i];
        let matched = if j < true_labels.len() && confusion[i][j] > 0 {
            overlap += confusion[i][j] as usize;
            Some(true_labels[j])
        } else {
            None
        };
        assignment.insert(p, matched);
    }
    debug_assert!(overlap as i64 <= total);
    Ok(LabelMatching { assignment, overlap })
}

fn distinct(z: &[usize]) -> Vec<usize> {
    let mut labels: Vec<usize> = z.to_vec();
    labels.sort_unstable();
    labels.dedup();
    labels
}

/// Label-invariant segmentation error: misassigned fraction after the
/// optimal label matching.
pub fn hamming_error(z_pred: &[usize], z_true: &[usize]) -> Result<f64> {
    let matching = match_labels(z_pred, z_true)?;
    Ok((z_pred.len() - matching.overlap) as f64 / z_pred.len() as f64)
}

/// Number of time steps whose label differs from the previous one.
pub fn count_switches(z: &[usize]) -> usize {
    z.windows(2).filter(|w| w[0] != w[1]).count()
}
