use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use super::{StateMatrix, StateVector, TrackerConfig, TrackerError, HEADING, HEADING_RATE, POS, VEL};
use crate::geometry::{rotate_yaw, wrap, Detection, TimedPose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MeasurementKind {
    LidarPosition,
    VioFull,
    VioHeadingOnly,
}

/// Measurement value and covariance; the variant fixes the dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasurementData {
    /// Associated LiDAR detection `[x y z]`.
    LidarPosition { position: Vector3<f64>, covariance: Matrix3<f64> },
    /// Full state from VIO chained onto the latest detection.
    VioFull { value: StateVector, covariance: StateMatrix },
    /// `[φ ω]` from a VIO pose older than the latest detection.
    VioHeadingOnly { value: Vector2<f64>, covariance: Matrix2<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub stamp: f64,
    pub data: MeasurementData,
}

impl Measurement {
    pub fn kind(&self) -> MeasurementKind {
        match self.data {
            MeasurementData::LidarPosition { .. } => MeasurementKind::LidarPosition,
            MeasurementData::VioFull { .. } => MeasurementKind::VioFull,
            MeasurementData::VioHeadingOnly { .. } => MeasurementKind::VioHeadingOnly,
        }
    }

    pub fn dimension(&self) -> usize {
        match self.kind() {
            MeasurementKind::LidarPosition => 3,
            MeasurementKind::VioFull => 8,
            MeasurementKind::VioHeadingOnly => 2,
        }
    }
}

pub fn lidar_measurement(detection: &Detection) -> Measurement {
    Measurement {
        stamp: detection.stamp,
        data: MeasurementData::LidarPosition {
            position: detection.position,
            covariance: detection.covariance,
        },
    }
}

/// Chains the VIO displacement since the latest detection onto that detection.
///
/// With `θ` the heading of the `L → V` transform:
/// `z_x = d(t_k) + R(−θ)·(p(t_l) − p(t_k))`, `z_v = R(−θ)·v(t_l)`,
/// `z_φ = φ(t_l) − θ`, `z_ω = ω(t_l)`.
pub fn make_vio_measurement(
    vio: &TimedPose,
    last_detection: &Detection,
    vio_at_detection: &TimedPose,
    theta: Option<f64>,
    config: &TrackerConfig,
) -> Result<Measurement, TrackerError> {
    let theta = theta.ok_or(TrackerError::TransformUnavailable)?;
    let delta = vio.position - vio_at_detection.position;
    let position = last_detection.position + rotate_yaw(-theta, &delta);
    let velocity = rotate_yaw(-theta, &vio.velocity);

    let mut value = StateVector::zeros();
    value.fixed_rows_mut::<3>(POS).copy_from(&position);
    value.fixed_rows_mut::<3>(VEL).copy_from(&velocity);
    value[HEADING] = wrap(vio.heading - theta);
    value[HEADING_RATE] = vio.heading_rate;

    let elapsed = (vio.stamp - last_detection.stamp).abs();
    let delta_var = config.vio_delta_sigma.powi(2) + config.vio_delta_growth * elapsed;
    let mut covariance = StateMatrix::zeros();
    covariance
        .fixed_view_mut::<3, 3>(POS, POS)
        .copy_from(&(last_detection.covariance + Matrix3::identity() * delta_var));
    for a in 0..3 {
        covariance[(VEL + a, VEL + a)] = config.vio_velocity_sigma.powi(2);
    }
    covariance[(HEADING, HEADING)] = config.heading_sigma.powi(2);
    covariance[(HEADING_RATE, HEADING_RATE)] = config.heading_rate_sigma.powi(2);

    Ok(Measurement { stamp: vio.stamp, data: MeasurementData::VioFull { value, covariance } })
}

/// Heading and heading rate only, for VIO poses older than the latest detection.
pub fn make_heading_measurement(vio: &TimedPose, theta: f64, config: &TrackerConfig) -> Measurement {
    Measurement {
        stamp: vio.stamp,
        data: MeasurementData::VioHeadingOnly {
            value: Vector2::new(wrap(vio.heading - theta), vio.heading_rate),
            covariance: Matrix2::new(config.heading_sigma.powi(2), 0.0, 0.0, config.heading_rate_sigma.powi(2)),
        },
    }
}
