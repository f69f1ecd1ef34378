use nalgebra::SMatrix;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::filter::innovation;
use super::{TrackerState, POS, STATE_DIM};
use crate::geometry::Detection;

/// Outcome of gating a set of simultaneous detections against the estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateDecision {
    /// Index of the selected detection in the input slice.
    pub chosen: Option<usize>,
    /// Track id of the selected detection.
    pub track_id: Option<u32>,
    /// Squared Mahalanobis distance of the selected detection.
    pub mahalanobis_sq: f64,
    /// χ²(p, 3) critical value.
    pub critical: f64,
    pub accepted: bool,
    /// Number of detections that passed the Euclidean pre-gate.
    pub candidates: usize,
}

/// Critical value of the χ² distribution with `dof` degrees of freedom at
/// cumulative probability `p`.
pub fn chi_square_critical(p: f64, dof: usize) -> f64 {
    ChiSquared::new(dof as f64).map(|d| d.inverse_cdf(p)).unwrap_or(f64::NAN)
}

/// Picks the detection with the lowest squared Mahalanobis distance among
/// those within `euclidean_gate` of the estimated position, and accepts it if
/// that distance is below `χ²(p, 3)`.
///
/// `state` must be the estimate at the detections' stamp.
pub fn associate(
    detections: &[Detection],
    state: &TrackerState,
    euclidean_gate: f64,
    gate_probability: f64,
) -> GateDecision {
    let critical = chi_square_critical(gate_probability, 3);
    let mut decision = GateDecision {
        chosen: None,
        track_id: None,
        mahalanobis_sq: f64::INFINITY,
        critical,
        accepted: false,
        candidates: 0,
    };
    let mut h = SMatrix::<f64, 3, STATE_DIM>::zeros();
    for a in 0..3 {
        h[(a, POS + a)] = 1.0;
    }
    let estimate = state.position();
    for (i, d) in detections.iter().enumerate() {
        if (d.position - estimate).norm() > euclidean_gate {
            continue;
        }
        decision.candidates += 1;
        let (y, s) = innovation(state, &h, &d.position, &d.covariance, None);
        let Some(chol) = s.cholesky() else {
            continue;
        };
        let delta_sq = y.dot(&chol.solve(&y));
        if delta_sq < decision.mahalanobis_sq {
            decision.mahalanobis_sq = delta_sq;
            decision.chosen = Some(i);
            decision.track_id = Some(d.track_id);
        }
    }
    decision.accepted = decision.chosen.is_some() && decision.mahalanobis_sq <= critical;
    decision
}
