//! Trajectory alignment and error metrics.
//!
//! The relative-localization error of a simulated run is the distance between
//! the estimated secondary position in `L` and its ground truth in `L`, with
//! no alignment. ATEs are computed after fitting the estimate to the ground
//! truth on an initial window only.

use std::fmt::Write as _;

use nalgebra::Vector3;
use thiserror::Error;

use crate::alignment::closed_form_yaw_alignment;
use crate::geometry::{interpolate, FrameId, RelativeTransform, TimedPose};
use crate::sim::{EventLog, Record};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvaluationError {
    #[error("only {found} time-matched samples in the alignment window, need {required}")]
    InsufficientOverlap { found: usize, required: usize },
    #[error("trajectories do not overlap in time")]
    EmptyOverlap,
    #[error("alignment window is degenerate")]
    Degenerate,
}

/// Path a trajectory is meant to follow.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferencePath {
    /// Horizontal circle at the altitude of `center`.
    Circle { center: Vector3<f64>, radius: f64 },
    Polyline { points: Vec<Vector3<f64>>, closed: bool },
}

fn point_segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let d = b - a;
    let len_sq = d.norm_squared();
    let s = if len_sq > 0.0 { ((p - a).dot(&d) / len_sq).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + d * s)).norm()
}

impl ReferencePath {
    /// Distance from `p` to the path.
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        match self {
            ReferencePath::Circle { center, radius } => {
                let radial = (p - center).xy().norm() - radius;
                radial.hypot(p.z - center.z)
            }
            ReferencePath::Polyline { points, closed } => {
                let n = points.len();
                match n {
                    0 => f64::INFINITY,
                    1 => (p - points[0]).norm(),
                    _ => {
                        let segments = if *closed { n } else { n - 1 };
                        (0..segments)
                            .map(|i| point_segment_distance(p, &points[i], &points[(i + 1) % n]))
                            .fold(f64::INFINITY, f64::min)
                    }
                }
            }
        }
    }
}

/// Fits the 4-DOF transform taking `trajectory` onto `ground_truth` using only
/// samples within `window` seconds of the trajectory's first stamp.
pub fn align_first_window(
    trajectory: &[TimedPose],
    ground_truth: &[TimedPose],
    window: f64,
) -> Result<RelativeTransform, EvaluationError> {
    let first = trajectory.first().ok_or(EvaluationError::InsufficientOverlap { found: 0, required: 3 })?.stamp;
    let (src, dst): (Vec<_>, Vec<_>) = trajectory
        .iter()
        .filter(|p| p.stamp <= first + window)
        .filter_map(|p| interpolate(ground_truth, p.stamp, 0.0).ok().map(|g| (p.position, g.position)))
        .unzip();
    if src.len() < 3 {
        return Err(EvaluationError::InsufficientOverlap { found: src.len(), required: 3 });
    }
    let (translation, heading) = closed_form_yaw_alignment(&src, &dst).ok_or(EvaluationError::Degenerate)?;
    let source = trajectory[0].frame;
    let target = ground_truth.first().map_or(FrameId::L, |g| g.frame);
    RelativeTransform::new(translation, heading, source, target).map_err(|_| EvaluationError::Degenerate)
}

/// Positions of `trajectory` mapped through `transform`.
pub fn apply_alignment(trajectory: &[TimedPose], transform: &RelativeTransform) -> Vec<TimedPose> {
    trajectory
        .iter()
        .map(|p| TimedPose {
            frame: transform.target_frame,
            position: transform.apply_unchecked(&p.position),
            heading: transform.apply_heading(p.heading),
            velocity: transform.rotate(&p.velocity),
            ..*p
        })
        .collect()
}

/// Per-sample position errors against ground truth interpolated at the
/// sample stamps; samples outside the ground-truth span are skipped.
pub fn position_errors(trajectory: &[TimedPose], ground_truth: &[TimedPose]) -> Vec<(f64, f64, f64)> {
    trajectory
        .iter()
        .filter_map(|p| {
            let g = interpolate(ground_truth, p.stamp, 0.0).ok()?;
            let e = p.position - g.position;
            Some((p.stamp, e.xy().norm(), e.norm()))
        })
        .collect()
}

fn rmse(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    (n > 0).then(|| (sum / n as f64).sqrt())
}

/// 2D and 3D RMSE of position errors.
pub fn absolute_trajectory_error(
    aligned: &[TimedPose],
    ground_truth: &[TimedPose],
) -> Result<(f64, f64), EvaluationError> {
    let errors = position_errors(aligned, ground_truth);
    let ate_2d = rmse(errors.iter().map(|e| e.1)).ok_or(EvaluationError::EmptyOverlap)?;
    let ate_3d = rmse(errors.iter().map(|e| e.2)).ok_or(EvaluationError::EmptyOverlap)?;
    Ok((ate_2d, ate_3d))
}

/// Mean distance of the samples to the path; zero for no samples.
pub fn mean_path_deviation(actual: &[Vector3<f64>], path: &ReferencePath) -> f64 {
    if actual.is_empty() {
        return 0.0;
    }
    actual.iter().map(|p| path.distance(p)).sum::<f64>() / actual.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSample {
    pub t: f64,
    pub error_2d: f64,
    pub error_3d: f64,
    /// Secondary in line of sight of the primary's LiDAR.
    pub visible: bool,
}

/// RMSE of the 3D error over visible and over occluded samples; `None` when
/// a set is empty.
pub fn split_samples(samples: &[ErrorSample]) -> (Option<f64>, Option<f64>) {
    (
        rmse(samples.iter().filter(|s| s.visible).map(|s| s.error_3d)),
        rmse(samples.iter().filter(|s| !s.visible).map(|s| s.error_3d)),
    )
}

/// Tracked and untracked relative-localization RMSE of a simulated run.
pub fn split_tracked_rmse(log: &EventLog) -> (Option<f64>, Option<f64>) {
    split_samples(&LogTrajectories::from_log(log).samples())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub ate_2d: f64,
    pub ate_3d: f64,
    pub mean_path_deviation: f64,
    /// 3D RMSE of the estimate against ground truth in `L`, unaligned.
    pub rel_loc_rmse: f64,
    pub per_sample_errors: Vec<ErrorSample>,
    pub tracked_rmse: Option<f64>,
    pub untracked_rmse: Option<f64>,
    pub failure: bool,
    pub failure_reason: Option<String>,
}

/// Time series extracted from an event log.
#[derive(Debug, Clone, Default)]
pub struct LogTrajectories {
    pub truth: Vec<TimedPose>,
    pub visible: Vec<bool>,
    pub estimate: Vec<TimedPose>,
    pub estimate_track_ids: Vec<Option<u32>>,
    pub path: Option<(f64, f64, ReferencePath)>,
}

impl LogTrajectories {
    pub fn from_log(log: &EventLog) -> Self {
        let mut out = Self::default();
        for r in &log.records {
            match r {
                Record::Truth { t, secondary, secondary_heading, visible, .. } => {
                    out.truth.push(TimedPose::new(*t, FrameId::L, *secondary, *secondary_heading));
                    out.visible.push(*visible);
                }
                Record::Estimate { t, position, heading, track_id, .. } => {
                    out.estimate.push(TimedPose::new(*t, FrameId::L, *position, *heading));
                    out.estimate_track_ids.push(*track_id);
                }
                Record::Path { start, end, path, .. } => out.path = Some((*start, *end, path.clone())),
                _ => {}
            }
        }
        out
    }

    /// Visibility at `t`: the flag of the latest ground-truth sample at or before `t`.
    pub fn visible_at(&self, t: f64) -> bool {
        let i = self.truth.partition_point(|p| p.stamp <= t);
        i > 0 && self.visible[i - 1]
    }

    pub fn samples(&self) -> Vec<ErrorSample> {
        position_errors(&self.estimate, &self.truth)
            .into_iter()
            .map(|(t, error_2d, error_3d)| ErrorSample { t, error_2d, error_3d, visible: self.visible_at(t) })
            .collect()
    }
}

/// Window (s) of the initial alignment used for ATE.
pub const ATE_ALIGNMENT_WINDOW: f64 = 20.0;

pub fn evaluate_log(log: &EventLog) -> ErrorReport {
    let series = LogTrajectories::from_log(log);
    let samples = series.samples();
    let (tracked_rmse, untracked_rmse) = split_samples(&samples);
    let rel_loc_rmse = rmse(samples.iter().map(|s| s.error_3d)).unwrap_or(f64::NAN);

    let (ate_2d, ate_3d) = align_first_window(&series.estimate, &series.truth, ATE_ALIGNMENT_WINDOW)
        .and_then(|tf| absolute_trajectory_error(&apply_alignment(&series.estimate, &tf), &series.truth))
        .unwrap_or((f64::NAN, f64::NAN));

    let mean_path_deviation = match &series.path {
        Some((start, end, path)) => {
            let on_path: Vec<_> = series
                .truth
                .iter()
                .filter(|p| p.stamp >= *start && p.stamp <= *end)
                .map(|p| p.position)
                .collect();
            mean_path_deviation(&on_path, path)
        }
        None => f64::NAN,
    };

    let failure_reason = log.failure().map(|(_, r)| r.to_string());
    ErrorReport {
        ate_2d,
        ate_3d,
        mean_path_deviation,
        rel_loc_rmse,
        per_sample_errors: samples,
        tracked_rmse,
        untracked_rmse,
        failure: failure_reason.is_some(),
        failure_reason,
    }
}

impl ErrorReport {
    /// `key=value` lines; absent values are written as `none`.
    pub fn to_key_values(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |v| v.to_string());
        let mut out = String::new();
        let _ = writeln!(out, "ate_2d={}", self.ate_2d);
        let _ = writeln!(out, "ate_3d={}", self.ate_3d);
        let _ = writeln!(out, "mean_path_deviation={}", self.mean_path_deviation);
        let _ = writeln!(out, "rel_loc_rmse={}", self.rel_loc_rmse);
        let _ = writeln!(out, "tracked_rmse={}", opt(self.tracked_rmse));
        let _ = writeln!(out, "untracked_rmse={}", opt(self.untracked_rmse));
        let _ = writeln!(out, "samples={}", self.per_sample_errors.len());
        let _ = writeln!(out, "failure={}", self.failure);
        let _ = writeln!(out, "failure_reason={}", self.failure_reason.as_deref().unwrap_or("none"));
        out
    }

    /// Per-sample errors with columns `t,error_2d,error_3d,visible_flag`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,error_2d,error_3d,visible_flag\n");
        for s in &self.per_sample_errors {
            let _ = writeln!(out, "{},{},{},{}", s.t, s.error_2d, s.error_3d, u8::from(s.visible));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn circle(n: usize, rate: f64) -> Vec<TimedPose> {
        (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                let a = 0.1 * t;
                TimedPose::new(t, FrameId::L, Vector3::new(4.0 * a.cos(), 4.0 * a.sin(), 2.0 + 0.2 * a.sin()), a)
            })
            .collect()
    }

    fn mapped(traj: &[TimedPose], tf: &RelativeTransform) -> Vec<TimedPose> {
        apply_alignment(traj, tf)
    }

    #[test]
    fn self_alignment_is_identity() {
        let gt = circle(300, 10.0);
        let tf = align_first_window(&gt, &gt, 20.0).unwrap();
        assert!(tf.translation.norm() < 1e-9);
        assert!(tf.heading().abs() < 1e-12);
    }

    #[test]
    fn known_offset_recovered() {
        let gt = circle(300, 10.0);
        let offset = RelativeTransform::new(Vector3::new(1.0, 0.0, 0.0), FRAC_PI_4, FrameId::L, FrameId::V).unwrap();
        let traj = mapped(&gt, &offset.inverse());
        let tf = align_first_window(&traj, &gt, 20.0).unwrap();
        let (t_cf, th_cf) = closed_form_yaw_alignment(
            &traj.iter().filter(|p| p.stamp <= 20.0).map(|p| p.position).collect::<Vec<_>>(),
            &gt.iter().filter(|p| p.stamp <= 20.0).map(|p| p.position).collect::<Vec<_>>(),
        )
        .unwrap();
        assert_relative_eq!(tf.translation, t_cf, epsilon = 1e-12);
        assert_relative_eq!(tf.heading(), th_cf, epsilon = 1e-12);
        assert_relative_eq!(tf.translation, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-9);
        assert_relative_eq!(tf.heading(), FRAC_PI_4, epsilon = 1e-12);
    }

    #[test]
    fn post_window_drift_ignored() {
        let gt = circle(600, 10.0);
        let mut traj = gt.clone();
        for p in traj.iter_mut().filter(|p| p.stamp > 20.0) {
            p.position.x += 0.3 * (p.stamp - 20.0);
        }
        let tf = align_first_window(&traj, &gt, 20.0).unwrap();
        assert!(tf.translation.norm() < 1e-9 && tf.heading().abs() < 1e-12);
    }

    #[test]
    fn insufficient_overlap() {
        let gt = circle(300, 10.0);
        let late: Vec<_> = circle(5, 10.0).into_iter().map(|mut p| {
            p.stamp += 100.0;
            p
        }).collect();
        assert!(matches!(
            align_first_window(&late, &gt, 20.0),
            Err(EvaluationError::InsufficientOverlap { found: 0, .. })
        ));
        assert!(matches!(absolute_trajectory_error(&late, &gt), Err(EvaluationError::EmptyOverlap)));
    }

    #[test]
    fn ate_examples() {
        let gt = circle(100, 10.0);
        assert_eq!(absolute_trajectory_error(&gt, &gt).unwrap(), (0.0, 0.0));

        let lifted: Vec<_> = gt.iter().map(|p| TimedPose { position: p.position + Vector3::new(0.0, 0.0, 0.3), ..*p }).collect();
        let (a2, a3) = absolute_trajectory_error(&lifted, &gt).unwrap();
        assert_eq!(a2, 0.0);
        assert_relative_eq!(a3, 0.3, epsilon = 1e-12);

        let two = [
            TimedPose::new(0.0, FrameId::L, Vector3::zeros(), 0.0),
            TimedPose::new(1.0, FrameId::L, Vector3::new(1.0, 0.0, 0.0), 0.0),
        ];
        let truth = [
            TimedPose::new(0.0, FrameId::L, Vector3::zeros(), 0.0),
            TimedPose::new(1.0, FrameId::L, Vector3::zeros(), 0.0),
        ];
        let (a2, a3) = absolute_trajectory_error(&two, &truth).unwrap();
        assert_relative_eq!(a2, 0.5f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(a3, 0.5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn ate_invariant_under_common_transform() {
        let gt = circle(300, 10.0);
        let est: Vec<_> = gt
            .iter()
            .map(|p| TimedPose { position: p.position + Vector3::new(0.1 * p.stamp.sin(), 0.05, -0.02 * p.stamp.cos()), ..*p })
            .collect();
        let base = absolute_trajectory_error(&est, &gt).unwrap();
        let tf = RelativeTransform::new(Vector3::new(-3.0, 7.0, 1.0), 2.5, FrameId::L, FrameId::L).unwrap();
        let moved = absolute_trajectory_error(&mapped(&est, &tf), &mapped(&gt, &tf)).unwrap();
        assert_relative_eq!(base.0, moved.0, epsilon = 1e-12);
        assert_relative_eq!(base.1, moved.1, epsilon = 1e-12);
        assert!(base.0 <= base.1);
    }

    #[test]
    fn drift_free_alignment_gives_zero_ate() {
        let gt = circle(1000, 100.0);
        let offset = RelativeTransform::new(Vector3::new(2.0, -1.0, 0.5), -2.0, FrameId::L, FrameId::V).unwrap();
        // estimate sampled at offset stamps, so matching interpolates the ground truth
        let est: Vec<_> = gt
            .windows(2)
            .map(|w| interpolate(&gt, 0.5 * (w[0].stamp + w[1].stamp), 0.0).unwrap())
            .collect();
        let est = mapped(&est, &offset);
        let tf = align_first_window(&est, &gt, 20.0).unwrap();
        let (a2, a3) = absolute_trajectory_error(&apply_alignment(&est, &tf), &gt).unwrap();
        assert!(a2 <= 1e-6 && a3 <= 1e-6, "{a2} {a3}");
    }

    #[test]
    fn path_deviation_examples() {
        let path = ReferencePath::Circle { center: Vector3::new(0.0, 0.0, 2.0), radius: 4.0 };
        let on: Vec<_> = (0..36).map(|i| {
            let a = i as f64 * PI / 18.0;
            Vector3::new(4.0 * a.cos(), 4.0 * a.sin(), 2.0)
        }).collect();
        assert!(mean_path_deviation(&on, &path) < 1e-12);
        let out: Vec<_> = on.iter().map(|p| p * 4.5 / 4.0 + Vector3::new(0.0, 0.0, 2.0 - p.z * 4.5 / 4.0)).collect();
        assert_relative_eq!(mean_path_deviation(&out, &path), 0.5, epsilon = 1e-12);
        let alternating: Vec<_> = on
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let r = if i % 2 == 0 { 4.5 } else { 3.5 };
                Vector3::new(p.x * r / 4.0, p.y * r / 4.0, 2.0)
            })
            .collect();
        assert_relative_eq!(mean_path_deviation(&alternating, &path), 0.5, epsilon = 1e-12);
        // altitude error adds in quadrature
        assert_relative_eq!(path.distance(&Vector3::new(4.3, 0.0, 2.4)), 0.5, epsilon = 1e-12);
        assert_eq!(mean_path_deviation(&[], &path), 0.0);
    }

    #[test]
    fn polyline_distance() {
        let square = ReferencePath::Polyline {
            points: vec![Vector3::zeros(), Vector3::new(2.0, 0.0, 0.0), Vector3::new(2.0, 2.0, 0.0), Vector3::new(0.0, 2.0, 0.0)],
            closed: true,
        };
        assert_relative_eq!(square.distance(&Vector3::new(1.0, 1.0, 0.0)), 1.0);
        assert_relative_eq!(square.distance(&Vector3::new(-1.0, 1.0, 0.0)), 1.0);
        let open = ReferencePath::Polyline { points: vec![Vector3::zeros(), Vector3::new(2.0, 0.0, 0.0)], closed: false };
        assert_relative_eq!(open.distance(&Vector3::new(3.0, 0.0, 0.0)), 1.0);
    }

    #[test]
    fn split_examples() {
        let samples: Vec<_> = (0..10)
            .map(|i| ErrorSample { t: i as f64, error_2d: 0.0, error_3d: if i < 6 { 0.1 } else { 0.3 }, visible: i < 6 })
            .collect();
        let (tracked, untracked) = split_samples(&samples);
        assert_relative_eq!(tracked.unwrap(), 0.1, epsilon = 1e-15);
        assert_relative_eq!(untracked.unwrap(), 0.3, epsilon = 1e-15);

        let visible: Vec<_> = samples.iter().map(|s| ErrorSample { visible: true, ..*s }).collect();
        assert_eq!(split_samples(&visible).1, None);
    }

    #[test]
    fn report_formats() {
        let report = ErrorReport {
            ate_2d: 0.1,
            ate_3d: 0.2,
            mean_path_deviation: 0.3,
            rel_loc_rmse: 0.4,
            per_sample_errors: vec![ErrorSample { t: 0.5, error_2d: 0.25, error_3d: 0.5, visible: true }],
            tracked_rmse: Some(0.5),
            untracked_rmse: None,
            failure: false,
            failure_reason: None,
        };
        let kv = report.to_key_values();
        assert!(kv.contains("ate_2d=0.1\n"));
        assert!(kv.contains("untracked_rmse=none\n"));
        assert_eq!(report.to_csv(), "t,error_2d,error_3d,visible_flag\n0.5,0.25,0.5,1\n");
    }
}
