//! Constant-velocity Kalman tracker of the secondary agent in the LiDAR frame.
//!
//! The state is `[x y z vx vy vz φ ω]`: position, velocity, heading and heading
//! rate, all in frame `L`. Measurements are kept in a [`HistoryBuffer`] so
//! that delayed or out-of-order arrivals are handled by replaying the filter
//! from the oldest retained state.

mod association;
mod buffer;
mod filter;
mod init;
mod measurement;

use nalgebra::{SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use association::{associate, chi_square_critical, GateDecision};
pub use buffer::HistoryBuffer;
pub use filter::{predict, update};
pub use init::{initial_state, motion_consistency, try_initialize, Initialization};
pub use measurement::{
    lidar_measurement, make_heading_measurement, make_vio_measurement, Measurement, MeasurementData,
    MeasurementKind,
};

pub const STATE_DIM: usize = 8;
pub type StateVector = SVector<f64, STATE_DIM>;
pub type StateMatrix = SMatrix<f64, STATE_DIM, STATE_DIM>;

pub(crate) const POS: usize = 0;
pub(crate) const VEL: usize = 3;
pub(crate) const HEADING: usize = 6;
pub(crate) const HEADING_RATE: usize = 7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("negative time step {0}")]
    NegativeTimeStep(f64),
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("measurement at {measurement} does not match state stamp {state}")]
    StampMismatch { state: f64, measurement: f64 },
    #[error("measurement at {stamp} is older than the buffer anchor at {anchor}")]
    TooStale { stamp: f64, anchor: f64 },
    #[error("transform unavailable")]
    TransformUnavailable,
}

/// Tracker estimate at one stamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerState {
    pub stamp: f64,
    pub mean: StateVector,
    pub covariance: StateMatrix,
}

impl TrackerState {
    pub fn position(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(POS).into_owned()
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(VEL).into_owned()
    }

    pub fn heading(&self) -> f64 {
        self.mean[HEADING]
    }

    pub fn heading_rate(&self) -> f64 {
        self.mean[HEADING_RATE]
    }

    pub fn position_covariance(&self) -> nalgebra::Matrix3<f64> {
        self.covariance.fixed_view::<3, 3>(POS, POS).into_owned()
    }
}

/// White-noise accelerations driving the constant-velocity model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProcessNoise {
    /// Linear acceleration σ (m/s²).
    pub acceleration_sigma: f64,
    /// Heading acceleration σ (rad/s²).
    pub heading_acceleration_sigma: f64,
}

impl Default for ProcessNoise {
    fn default() -> Self {
        Self { acceleration_sigma: 1.0, heading_acceleration_sigma: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    pub process_noise: ProcessNoise,
    /// σ of the VIO velocity measurement (m/s).
    pub vio_velocity_sigma: f64,
    /// σ of the heading measurement (rad).
    pub heading_sigma: f64,
    /// σ of the heading-rate measurement (rad/s).
    pub heading_rate_sigma: f64,
    /// Constant σ (m) of the VIO displacement added to a detection.
    pub vio_delta_sigma: f64,
    /// Variance growth (m²/s) of the VIO displacement with its duration.
    pub vio_delta_growth: f64,
    pub initial_position_sigma: f64,
    pub initial_velocity_sigma: f64,
    pub initial_heading_sigma: f64,
    pub initial_heading_rate_sigma: f64,
    /// Euclidean pre-gate radius (m).
    pub euclidean_gate: f64,
    /// Confidence level of the χ² gate.
    pub gate_probability: f64,
    /// Time span (s) retained in the history buffer.
    pub buffer_span: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            process_noise: ProcessNoise::default(),
            vio_velocity_sigma: 0.1,
            heading_sigma: 0.05,
            heading_rate_sigma: 0.05,
            vio_delta_sigma: 0.02,
            vio_delta_growth: 0.01,
            initial_position_sigma: 0.3,
            initial_velocity_sigma: 0.5,
            initial_heading_sigma: 0.2,
            initial_heading_rate_sigma: 0.2,
            euclidean_gate: 2.0,
            gate_probability: 0.95,
            buffer_span: 2.0,
        }
    }
}
