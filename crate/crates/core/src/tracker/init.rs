use std::collections::BTreeMap;

use nalgebra::Vector3;

use super::{StateMatrix, StateVector, TrackerConfig, TrackerState, HEADING, HEADING_RATE, POS, VEL};
use crate::alignment::{align_window, AlignmentConfig, AlignmentResult};
use crate::geometry::{interpolate, rotate_yaw, wrap, Detection, RelativeTransform, TimedPose};

/// A track whose detections line up with the VIO trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Initialization {
    pub state: TrackerState,
    /// `L → V` transform fitted on the track.
    pub transform: RelativeTransform,
    pub track_id: u32,
    pub alignment: AlignmentResult,
}

/// Aligns every detection track with the VIO buffer and initializes the
/// estimate from the accepted track with the lowest alignment cost.
///
/// The state starts at the newest detection of that track, with the VIO
/// velocity rotated into `L` and heading `φ_V − θ`.
pub fn try_initialize(
    per_track_buffers: &BTreeMap<u32, Vec<Detection>>,
    vio_buffer: &[TimedPose],
    previous: Option<&RelativeTransform>,
    alignment: &AlignmentConfig,
    config: &TrackerConfig,
) -> Option<Initialization> {
    let mut best: Option<(u32, AlignmentResult)> = None;
    for (&id, detections) in per_track_buffers {
        let Ok((result, true)) = align_window(detections, vio_buffer, previous, alignment) else {
            continue;
        };
        if best.as_ref().is_none_or(|(_, b)| result.final_cost < b.final_cost) {
            best = Some((id, result));
        }
    }
    let (track_id, result) = best?;
    let newest = per_track_buffers[&track_id].last()?;
    let state = initial_state(newest, vio_buffer, result.transform.heading(), alignment.interpolation_tolerance, config)?;

    Some(Initialization {
        state,
        transform: result.transform,
        track_id,
        alignment: result,
    })
}

/// Estimate at `detection`: its position, the VIO velocity rotated into `L`
/// and heading `φ_V − θ`, with the configured initial uncertainty.
pub fn initial_state(
    detection: &Detection,
    vio_buffer: &[TimedPose],
    theta: f64,
    tolerance: f64,
    config: &TrackerConfig,
) -> Option<TrackerState> {
    let vio = interpolate(vio_buffer, detection.stamp, tolerance).ok().or_else(|| vio_buffer.last().copied())?;

    let mut mean = StateVector::zeros();
    mean.fixed_rows_mut::<3>(POS).copy_from(&detection.position);
    mean.fixed_rows_mut::<3>(VEL).copy_from(&rotate_yaw(-theta, &vio.velocity));
    mean[HEADING] = wrap(vio.heading - theta);
    mean[HEADING_RATE] = vio.heading_rate;

    let mut covariance = StateMatrix::zeros();
    for a in 0..3 {
        covariance[(POS + a, POS + a)] = config.initial_position_sigma.powi(2);
        covariance[(VEL + a, VEL + a)] = config.initial_velocity_sigma.powi(2);
    }
    covariance[(HEADING, HEADING)] = config.initial_heading_sigma.powi(2);
    covariance[(HEADING_RATE, HEADING_RATE)] = config.initial_heading_rate_sigma.powi(2);
    Some(TrackerState { stamp: detection.stamp, mean, covariance })
}

/// Fraction of the VIO motion missing from the latest `window` seconds of a
/// detection track under heading `θ`, `−Δo·Δm / ‖Δm‖²`.
///
/// The detections are split into an older and a newer half. `Δm` is the
/// VIO displacement between the halves rotated into `L` and `Δo` the change
/// of the mean offset `d − R(−θ)·p_V`. A track carried by the VIO body scores
/// near zero, a static one near one. `None` when the track is shorter than
/// three quarters of `window`, VIO cannot be interpolated, or `‖Δm‖` is
/// below `min_motion`.
pub fn motion_consistency(
    track: &[Detection],
    vio_buffer: &[TimedPose],
    theta: f64,
    window: f64,
    min_motion: f64,
    tolerance: f64,
) -> Option<f64> {
    let last = track.last()?.stamp;
    let begin = track.partition_point(|d| d.stamp < last - window);
    let recent = &track[begin..];
    if recent.len() < 4 || last - recent[0].stamp < 0.75 * window {
        return None;
    }
    let mut moved = Vec::with_capacity(recent.len());
    for d in recent {
        let vio = interpolate(vio_buffer, d.stamp, tolerance).ok()?;
        moved.push(rotate_yaw(-theta, &vio.position));
    }
    let half = recent.len() / 2;
    let mean = |v: &[Vector3<f64>]| v.iter().sum::<Vector3<f64>>() / v.len() as f64;
    let detected: Vec<_> = recent.iter().map(|d| d.position).collect();
    let (m_old, m_new) = (mean(&moved[..half]), mean(&moved[half..]));
    let (d_old, d_new) = (mean(&detected[..half]), mean(&detected[half..]));
    let dm = m_new - m_old;
    if dm.norm() < min_motion {
        return None;
    }
    Some(-((d_new - m_new) - (d_old - m_old)).dot(&dm) / dm.norm_squared())
}
