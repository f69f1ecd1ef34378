//! The UAV guider: fuses detections and VIO into a pose estimate of the
//! secondary agent in `L`, keeps the `L → V` frame transform up to date, and
//! re-expresses desired trajectories in the secondary's own frame.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{align_window, AlignmentConfig};
use crate::geometry::{interpolate, wrap, Detection, FrameId, RelativeTransform, TimedPose};
use crate::tracker::{
    associate, initial_state, lidar_measurement, make_heading_measurement, make_vio_measurement, motion_consistency,
    try_initialize,
    GateDecision, HistoryBuffer, TrackerConfig, TrackerError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GuiderError {
    #[error("guider is not initialized")]
    Uninitialized,
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error("trajectory is in frame {actual}, expected {expected}")]
    WrongFrame { expected: FrameId, actual: FrameId },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GuiderConfig {
    pub alignment: AlignmentConfig,
    pub tracker: TrackerConfig,
    /// Period (s) of the sliding-window alignment refresh.
    pub alignment_period: f64,
    /// Detections older than this (s) mark the estimate as dead-reckoned.
    pub detection_staleness: f64,
    /// VIO older than this (s) freezes heading.
    pub vio_staleness: f64,
    /// Consecutive gated-out detection frames before re-initialization is tried.
    pub reinit_rejections: usize,
    /// Span (s) of a new track checked against VIO motion before it may
    /// replace a lost one.
    pub reacquire_window: f64,
    /// Minimum VIO displacement (m) across that span.
    pub reacquire_min_motion: f64,
    /// Largest fraction of the VIO motion a new track may miss.
    pub reacquire_max_score: f64,
    /// Reference transmission rate (Hz).
    pub stream_rate: f64,
    /// Length (s) of the trajectory suffix sent with each transmission.
    pub stream_horizon: f64,
}

impl Default for GuiderConfig {
    fn default() -> Self {
        Self {
            alignment: AlignmentConfig::default(),
            tracker: TrackerConfig::default(),
            alignment_period: 1.0,
            detection_staleness: 1.0,
            vio_staleness: 0.5,
            reinit_rejections: 3,
            reacquire_window: 2.0,
            reacquire_min_motion: 0.3,
            reacquire_max_score: 0.4,
            stream_rate: 5.0,
            stream_horizon: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GuiderStatus {
    Uninitialized,
    Tracking,
    /// No fresh detections; position follows VIO only.
    DeadReckoningVio,
    /// No fresh VIO; heading and heading rate are not corrected.
    HeadingFrozen,
    /// Both streams fresh, but the last window alignment was rejected.
    TransformFrozen,
}

impl GuiderStatus {
    pub fn label(&self) -> &'static str {
        match self {
            GuiderStatus::Uninitialized => "uninitialized",
            GuiderStatus::Tracking => "tracking",
            GuiderStatus::DeadReckoningVio => "dead_reckoning_vio",
            GuiderStatus::HeadingFrozen => "heading_frozen",
            GuiderStatus::TransformFrozen => "transform_frozen",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        [
            GuiderStatus::Uninitialized,
            GuiderStatus::Tracking,
            GuiderStatus::DeadReckoningVio,
            GuiderStatus::HeadingFrozen,
            GuiderStatus::TransformFrozen,
        ]
        .into_iter()
        .find(|x| x.label() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub stamp: f64,
    pub position: Vector3<f64>,
    pub heading: f64,
}

/// Stamped position and heading references in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub frame: FrameId,
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn new(frame: FrameId, points: Vec<TrajectoryPoint>) -> Self {
        Self { frame, points }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Reference at `t`, linearly interpolated and clamped to the end points.
    pub fn sample(&self, t: f64) -> Option<TrajectoryPoint> {
        let first = self.points.first()?;
        let last = self.points.last()?;
        if t <= first.stamp {
            return Some(*first);
        }
        if t >= last.stamp {
            return Some(*last);
        }
        let upper = self.points.partition_point(|p| p.stamp <= t);
        let (a, b) = (&self.points[upper - 1], &self.points[upper]);
        let s = (t - a.stamp) / (b.stamp - a.stamp);
        Some(TrajectoryPoint {
            stamp: t,
            position: a.position + (b.position - a.position) * s,
            heading: wrap(a.heading + wrap(b.heading - a.heading) * s),
        })
    }
}

/// Maps the points of `trajectory` stamped in `[from, until]` through `transform`.
pub fn transform_trajectory(
    trajectory: &Trajectory,
    transform: &RelativeTransform,
    from: f64,
    until: f64,
) -> Result<Trajectory, GuiderError> {
    if trajectory.frame != transform.source_frame {
        return Err(GuiderError::WrongFrame { expected: transform.source_frame, actual: trajectory.frame });
    }
    let begin = trajectory.points.partition_point(|p| p.stamp < from);
    let end = trajectory.points.partition_point(|p| p.stamp <= until);
    let points = trajectory.points[begin..end.max(begin)]
        .iter()
        .map(|p| TrajectoryPoint {
            stamp: p.stamp,
            position: transform.apply_unchecked(&p.position),
            heading: transform.apply_heading(p.heading),
        })
        .collect();
    Ok(Trajectory { frame: transform.target_frame, points })
}

/// Guider estimate at one query time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuiderOutput {
    pub stamp: f64,
    /// Secondary pose in `L`.
    pub secondary_pose_in_l: TimedPose,
    /// Drift-compensated `L → V` transform derived from the estimate.
    pub transform_l_to_s: RelativeTransform,
    pub status: GuiderStatus,
}

/// Counters for diagnostics and tests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GuiderStats {
    pub associated: usize,
    pub gated_out: usize,
    pub initializations: usize,
    /// Estimate restarts on the followed track after it kept failing the gate.
    pub track_resets: usize,
    /// Switches to a new track after the followed one went silent.
    pub reacquisitions: usize,
    pub alignments_accepted: usize,
    pub alignments_rejected: usize,
    pub full_vio_updates: usize,
    pub heading_updates: usize,
}

#[derive(Debug, Clone)]
pub struct Guider {
    config: GuiderConfig,
    vio: Vec<TimedPose>,
    tracks: BTreeMap<u32, Vec<Detection>>,
    /// Detections accepted into the estimate, for window alignment.
    associated: Vec<Detection>,
    buffer: Option<HistoryBuffer>,
    transform: Option<RelativeTransform>,
    transform_frozen: bool,
    last_alignment_at: f64,
    last_detection: Option<Detection>,
    tracked_id: Option<u32>,
    rejections: usize,
    /// Consecutive frames in which the followed track was gated out.
    track_rejections: usize,
    last_reinit_attempt: f64,
    last_stream_at: Option<f64>,
    stream_progress: usize,
    last_gate: Option<GateDecision>,
    stats: GuiderStats,
}

fn insert_sorted<T, F: Fn(&T) -> f64>(v: &mut Vec<T>, item: T, stamp: F) {
    let s = stamp(&item);
    if v.last().is_none_or(|last| stamp(last) < s) {
        v.push(item);
    } else {
        let i = v.partition_point(|x| stamp(x) <= s);
        v.insert(i, item);
    }
}

fn prune_before<T, F: Fn(&T) -> f64>(v: &mut Vec<T>, cutoff: f64, stamp: F) {
    let n = v.partition_point(|x| stamp(x) < cutoff);
    if n > 0 {
        v.drain(..n);
    }
}

impl Guider {
    pub fn new(config: GuiderConfig) -> Self {
        Self {
            config,
            vio: Vec::new(),
            tracks: BTreeMap::new(),
            associated: Vec::new(),
            buffer: None,
            transform: None,
            transform_frozen: false,
            last_alignment_at: f64::NEG_INFINITY,
            last_detection: None,
            tracked_id: None,
            rejections: 0,
            track_rejections: 0,
            last_reinit_attempt: f64::NEG_INFINITY,
            last_stream_at: None,
            stream_progress: 0,
            last_gate: None,
            stats: GuiderStats::default(),
        }
    }

    pub fn config(&self) -> &GuiderConfig {
        &self.config
    }

    pub fn is_initialized(&self) -> bool {
        self.buffer.is_some()
    }

    /// Active `L → V` transform from the window alignment.
    pub fn active_transform(&self) -> Option<&RelativeTransform> {
        self.transform.as_ref()
    }

    /// Track id of the detection track currently associated with the estimate.
    pub fn tracked_id(&self) -> Option<u32> {
        self.tracked_id
    }

    pub fn last_gate(&self) -> Option<&GateDecision> {
        self.last_gate.as_ref()
    }

    pub fn stats(&self) -> GuiderStats {
        self.stats
    }

    pub fn history(&self) -> Option<&HistoryBuffer> {
        self.buffer.as_ref()
    }

    fn retention(&self) -> f64 {
        self.config.alignment.window + self.config.tracker.buffer_span + 1.0
    }

    /// Feeds one frame of simultaneous detections.
    pub fn ingest_detections(&mut self, detections: &[Detection]) {
        let Some(stamp) = detections.iter().map(|d| d.stamp).reduce(f64::max) else {
            return;
        };
        for d in detections {
            insert_sorted(self.tracks.entry(d.track_id).or_default(), *d, |d| d.stamp);
        }
        let cutoff = stamp - self.retention();
        self.tracks.retain(|_, v| {
            prune_before(v, cutoff, |d| d.stamp);
            !v.is_empty()
        });

        if self.buffer.is_none() {
            self.initialize(stamp);
            return;
        }
        let Some(Ok(state)) = self.buffer.as_ref().map(|b| b.estimate_at(stamp)) else {
            return;
        };
        // only the followed track feeds the estimate; others must first
        // prove they move with the VIO body
        let own: Vec<Detection> = match self.tracked_id {
            Some(id) => detections.iter().filter(|d| d.track_id == id).copied().collect(),
            None => detections.to_vec(),
        };
        if own.is_empty() {
            let followed_stale = self.last_detection.is_none_or(|d| stamp - d.stamp > self.config.detection_staleness);
            if followed_stale && self.reacquire(stamp) {
                return;
            }
            self.rejections += 1;
            self.track_rejections = 0;
            if self.rejections >= self.config.reinit_rejections
                && stamp - self.last_reinit_attempt >= self.config.alignment_period
            {
                self.last_reinit_attempt = stamp;
                self.initialize(stamp);
            }
            return;
        }
        let decision = associate(
            &own,
            &state,
            self.config.tracker.euclidean_gate,
            self.config.tracker.gate_probability,
        );
        self.last_gate = Some(decision);
        if let (true, Some(i)) = (decision.accepted, decision.chosen) {
            let d = own[i];
            let buffer = self.buffer.as_mut().expect("initialized");
            if buffer.insert_and_replay(lidar_measurement(&d)).is_ok() {
                insert_sorted(&mut self.associated, d, |d| d.stamp);
                prune_before(&mut self.associated, cutoff, |d| d.stamp);
                if self.last_detection.is_none_or(|l| l.stamp < d.stamp) {
                    self.last_detection = Some(d);
                }
                self.tracked_id = Some(d.track_id);
                self.stats.associated += 1;
                self.rejections = 0;
                self.track_rejections = 0;
            }
        } else {
            self.stats.gated_out += 1;
            self.rejections += 1;
            let own = self.tracked_id.and_then(|id| own.iter().find(|d| d.track_id == id)).copied();
            self.track_rejections = if own.is_some() { self.track_rejections + 1 } else { 0 };
            if let Some(d) = own.filter(|_| self.track_rejections >= self.config.reinit_rejections) {
                self.reset_on_track(d);
            } else if self.rejections >= self.config.reinit_rejections
                && stamp - self.last_reinit_attempt >= self.config.alignment_period
            {
                self.last_reinit_attempt = stamp;
                self.initialize(stamp);
            }
        }
    }

    fn initialize(&mut self, stamp: f64) -> bool {
        // tracks that went silent describe where a target was, not where it is
        let fresh: BTreeMap<u32, Vec<Detection>> = self
            .tracks
            .iter()
            .filter(|(_, v)| v.last().is_some_and(|d| stamp - d.stamp <= self.config.detection_staleness))
            .map(|(id, v)| (*id, v.clone()))
            .collect();
        let Some(init) = try_initialize(
            &fresh,
            &self.vio,
            self.transform.as_ref(),
            &self.config.alignment,
            &self.config.tracker,
        ) else {
            return false;
        };
        self.buffer = Some(HistoryBuffer::new(
            init.state,
            self.config.tracker.buffer_span,
            self.config.tracker.process_noise,
        ));
        self.transform = Some(init.transform);
        self.transform_frozen = false;
        self.associated = self.tracks[&init.track_id].clone();
        self.last_detection = self.associated.last().copied();
        self.tracked_id = Some(init.track_id);
        self.rejections = 0;
        self.track_rejections = 0;
        self.last_alignment_at = stamp;
        self.stats.initializations += 1;
        true
    }

    /// Switches to the fresh track that best follows the VIO motion once the
    /// followed one has gone silent.
    fn reacquire(&mut self, stamp: f64) -> bool {
        let Some(theta) = self.transform.map(|t| t.heading()) else {
            return false;
        };
        let c = &self.config;
        let best = self
            .tracks
            .iter()
            .filter(|(id, v)| {
                Some(**id) != self.tracked_id && v.last().is_some_and(|d| stamp - d.stamp <= c.detection_staleness)
            })
            .filter_map(|(id, v)| {
                let score = motion_consistency(
                    v,
                    &self.vio,
                    theta,
                    c.reacquire_window,
                    c.reacquire_min_motion,
                    c.alignment.interpolation_tolerance,
                )?;
                (score <= c.reacquire_max_score).then_some((*id, score))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let Some((id, _)) = best else {
            return false;
        };
        let window = c.reacquire_window;
        let track = self.tracks[&id].clone();
        let newest = *track.last().expect("non-empty track");
        for d in track.iter().filter(|d| d.stamp >= newest.stamp - window && d.stamp < newest.stamp) {
            insert_sorted(&mut self.associated, *d, |d| d.stamp);
        }
        self.tracked_id = Some(id);
        self.reset_on_track(newest);
        self.stats.reacquisitions += 1;
        true
    }

    /// Restarts the estimate at a detection of the track it was following,
    /// keeping the active transform.
    fn reset_on_track(&mut self, d: Detection) {
        let Some(transform) = self.transform else {
            return;
        };
        let Some(state) = initial_state(
            &d,
            &self.vio,
            transform.heading(),
            self.config.alignment.interpolation_tolerance,
            &self.config.tracker,
        ) else {
            return;
        };
        self.buffer = Some(HistoryBuffer::new(state, self.config.tracker.buffer_span, self.config.tracker.process_noise));
        insert_sorted(&mut self.associated, d, |d| d.stamp);
        self.last_detection = Some(d);
        self.rejections = 0;
        self.track_rejections = 0;
        self.stats.track_resets += 1;
    }

    /// Feeds one VIO pose (frame `V`).
    pub fn ingest_vio(&mut self, pose: TimedPose) {
        let stamp = pose.stamp;
        insert_sorted(&mut self.vio, pose, |p| p.stamp);
        let cutoff = self.vio.last().map_or(stamp, |p| p.stamp) - self.retention();
        prune_before(&mut self.vio, cutoff, |p| p.stamp);

        let (Some(buffer), Some(transform)) = (self.buffer.as_mut(), self.transform.as_ref()) else {
            return;
        };
        let theta = transform.heading();
        let tolerance = self.config.alignment.interpolation_tolerance;
        let full = self.last_detection.filter(|d| stamp > d.stamp).and_then(|d| {
            let at_detection = interpolate(&self.vio, d.stamp, tolerance).ok()?;
            make_vio_measurement(&pose, &d, &at_detection, Some(theta), &self.config.tracker).ok()
        });
        let measurement = match full {
            Some(m) => {
                self.stats.full_vio_updates += 1;
                m
            }
            None => {
                self.stats.heading_updates += 1;
                make_heading_measurement(&pose, theta, &self.config.tracker)
            }
        };
        // too-stale VIO is dropped
        let _ = buffer.insert_and_replay(measurement);

        if stamp - self.last_alignment_at >= self.config.alignment_period {
            self.last_alignment_at = stamp;
            self.refresh_alignment();
        }
    }

    fn refresh_alignment(&mut self) {
        match align_window(&self.associated, &self.vio, self.transform.as_ref(), &self.config.alignment) {
            Ok((result, true)) => {
                self.transform = Some(result.transform);
                self.transform_frozen = false;
                self.stats.alignments_accepted += 1;
            }
            _ => {
                self.transform_frozen = true;
                self.stats.alignments_rejected += 1;
            }
        }
    }

    /// Pose estimate, drift-compensated frame transform and status at `t`.
    pub fn current_output(&self, t: f64) -> Result<GuiderOutput, GuiderError> {
        let buffer = self.buffer.as_ref().ok_or(GuiderError::Uninitialized)?;
        let state = buffer.estimate_at(t)?;
        let pose = TimedPose {
            stamp: t,
            frame: FrameId::L,
            position: state.position(),
            heading: state.heading(),
            velocity: state.velocity(),
            heading_rate: state.heading_rate(),
        };

        // relate the estimate and the VIO pose at the newest VIO stamp
        let transform_l_to_s = match self.vio.last() {
            Some(vio) => {
                let at = if vio.stamp >= buffer.anchor().stamp && vio.stamp <= t {
                    buffer.estimate_at(vio.stamp)?
                } else {
                    state
                };
                let theta = wrap(vio.heading - at.heading());
                let translation = vio.position - crate::geometry::rotate_yaw(theta, &at.position());
                let mut tf = RelativeTransform::new(translation, theta, FrameId::L, FrameId::V)
                    .map_err(|_| GuiderError::Uninitialized)?;
                tf.stamp = vio.stamp;
                tf
            }
            None => self.transform.ok_or(GuiderError::Uninitialized)?,
        };

        Ok(GuiderOutput { stamp: t, secondary_pose_in_l: pose, transform_l_to_s, status: self.status(t) })
    }

    pub fn status(&self, t: f64) -> GuiderStatus {
        if self.buffer.is_none() {
            return GuiderStatus::Uninitialized;
        }
        let detections_fresh =
            self.last_detection.is_some_and(|d| t - d.stamp <= self.config.detection_staleness);
        let vio_fresh = self.vio.last().is_some_and(|p| t - p.stamp <= self.config.vio_staleness);
        if !detections_fresh {
            GuiderStatus::DeadReckoningVio
        } else if !vio_fresh {
            GuiderStatus::HeadingFrozen
        } else if self.transform_frozen {
            GuiderStatus::TransformFrozen
        } else {
            GuiderStatus::Tracking
        }
    }

    /// Transforms the not-yet-completed part of `desired` (frame `L`) into
    /// the secondary's frame `V`, up to the streaming horizon.
    pub fn transform_and_stream(&mut self, desired: &Trajectory, t: f64) -> Result<Trajectory, GuiderError> {
        if desired.frame != FrameId::L {
            return Err(GuiderError::WrongFrame { expected: FrameId::L, actual: desired.frame });
        }
        let output = self.current_output(t)?;
        let begin = desired.points.partition_point(|p| p.stamp < t).max(self.stream_progress);
        self.stream_progress = begin;
        let from = desired.points.get(begin).map_or(f64::INFINITY, |p| p.stamp);
        transform_trajectory(desired, &output.transform_l_to_s, from, t + self.config.stream_horizon)
    }

    /// Like [`Self::transform_and_stream`], but only when a transmission is due
    /// at the configured rate.
    pub fn poll_stream(&mut self, desired: &Trajectory, t: f64) -> Result<Option<Trajectory>, GuiderError> {
        let period = 1.0 / self.config.stream_rate;
        if self.last_stream_at.is_some_and(|last| t - last < period - 1e-9) {
            return Ok(None);
        }
        let out = self.transform_and_stream(desired, t)?;
        self.last_stream_at = Some(t);
        Ok(Some(out))
    }
}
