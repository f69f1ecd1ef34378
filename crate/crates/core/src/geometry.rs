//! Frames, gravity-aligned 4-DOF transforms, heading arithmetic and
//! time interpolation of stamped quantities.
//!
//! All frames share the gravity axis `z`, so a transform between two frames is
//! a translation plus a single rotation about `z` (the heading).

use std::f64::consts::{PI, TAU};
use std::fmt;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default tolerance (s) for extrapolating beyond the ends of a buffer.
pub const DEFAULT_EXTRAPOLATION_TOLERANCE: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("angle is not finite: {0}")]
    NonFiniteAngle(f64),
    #[error("transform {source_frame}->{target_frame} is not valid")]
    InvalidTransform { source_frame: FrameId, target_frame: FrameId },
    #[error("frame mismatch: expected {expected}, got {actual}")]
    FrameMismatch { expected: FrameId, actual: FrameId },
    #[error("stale query: t={query} outside [{first}, {last}] by more than {tolerance} s")]
    StaleQuery { query: f64, first: f64, last: f64, tolerance: f64 },
    #[error("empty buffer")]
    EmptyBuffer,
}

/// Reference frames of the two-agent setup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FrameId {
    /// World frame (ground truth only).
    W,
    /// Local frame of the primary agent's LiDAR SLAM.
    L,
    /// Local frame of the secondary agent's VIO.
    V,
    /// Body frame of the primary agent.
    P,
    /// Body frame of the secondary agent.
    S,
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FrameId::W => "W",
            FrameId::L => "L",
            FrameId::V => "V",
            FrameId::P => "P",
            FrameId::S => "S",
        };
        f.write_str(s)
    }
}

/// Wraps `angle` into `(-π, π]`.
pub fn wrap_heading(angle: f64) -> Result<f64, GeometryError> {
    if !angle.is_finite() {
        return Err(GeometryError::NonFiniteAngle(angle));
    }
    Ok(wrap(angle))
}

/// Infallible wrap for angles already known to be finite.
pub(crate) fn wrap(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    // rem_euclid may round up to TAU itself
    if a > PI {
        a - TAU
    } else {
        a
    }
}

/// Rotation about the gravity axis.
pub fn yaw_rotation(heading: f64) -> Matrix3<f64> {
    let (s, c) = heading.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Derivative of [`yaw_rotation`] with respect to the heading.
pub fn yaw_rotation_derivative(heading: f64) -> Matrix3<f64> {
    let (s, c) = heading.sin_cos();
    Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

/// Rotates only the horizontal components of `v` by `heading`.
#[inline]
pub fn rotate_yaw(heading: f64, v: &Vector3<f64>) -> Vector3<f64> {
    let (s, c) = heading.sin_cos();
    Vector3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
}

/// Gravity-aligned transform mapping points of `source_frame` into `target_frame`:
/// `x_target = R(heading) * x_source + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeTransform {
    pub translation: Vector3<f64>,
    heading: f64,
    pub source_frame: FrameId,
    pub target_frame: FrameId,
    pub stamp: f64,
    pub valid: bool,
    pub final_cost: f64,
    pub min_eigenvalue: f64,
}

impl RelativeTransform {
    /// A valid transform with the heading wrapped into `(-π, π]`.
    pub fn new(
        translation: Vector3<f64>,
        heading: f64,
        source_frame: FrameId,
        target_frame: FrameId,
    ) -> Result<Self, GeometryError> {
        Ok(Self {
            translation,
            heading: wrap_heading(heading)?,
            source_frame,
            target_frame,
            stamp: 0.0,
            valid: true,
            final_cost: 0.0,
            min_eigenvalue: f64::INFINITY,
        })
    }

    pub fn identity(source_frame: FrameId, target_frame: FrameId) -> Self {
        Self {
            translation: Vector3::zeros(),
            heading: 0.0,
            source_frame,
            target_frame,
            stamp: 0.0,
            valid: true,
            final_cost: 0.0,
            min_eigenvalue: f64::INFINITY,
        }
    }

    pub fn with_stamp(mut self, stamp: f64) -> Self {
        self.stamp = stamp;
        self
    }

    pub fn heading(&self) -> f64 {
        self.heading
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        yaw_rotation(self.heading)
    }

    /// Maps a point from `source_frame` into `target_frame`.
    pub fn apply(&self, x: &Vector3<f64>) -> Result<Vector3<f64>, GeometryError> {
        if !self.valid {
            return Err(GeometryError::InvalidTransform {
                source_frame: self.source_frame,
                target_frame: self.target_frame,
            });
        }
        Ok(self.apply_unchecked(x))
    }

    #[inline]
    pub(crate) fn apply_unchecked(&self, x: &Vector3<f64>) -> Vector3<f64> {
        rotate_yaw(self.heading, x) + self.translation
    }

    /// Rotates a free vector (velocity, displacement); translation is ignored.
    #[inline]
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        rotate_yaw(self.heading, v)
    }

    /// Maps a heading expressed in `source_frame` into `target_frame`.
    #[inline]
    pub fn apply_heading(&self, heading: f64) -> f64 {
        wrap(heading + self.heading)
    }

    pub fn inverse(&self) -> Self {
        let translation = -rotate_yaw(-self.heading, &self.translation);
        Self {
            translation,
            heading: wrap(-self.heading),
            source_frame: self.target_frame,
            target_frame: self.source_frame,
            ..*self
        }
    }

    /// `self ∘ inner`: first `inner`, then `self`. `inner.target_frame` must equal
    /// `self.source_frame`.
    pub fn compose(&self, inner: &RelativeTransform) -> Result<Self, GeometryError> {
        if inner.target_frame != self.source_frame {
            return Err(GeometryError::FrameMismatch {
                expected: self.source_frame,
                actual: inner.target_frame,
            });
        }
        Ok(Self {
            translation: rotate_yaw(self.heading, &inner.translation) + self.translation,
            heading: wrap(self.heading + inner.heading),
            source_frame: inner.source_frame,
            target_frame: self.target_frame,
            stamp: self.stamp.max(inner.stamp),
            valid: self.valid && inner.valid,
            final_cost: self.final_cost.max(inner.final_cost),
            min_eigenvalue: self.min_eigenvalue.min(inner.min_eigenvalue),
        })
    }
}

/// Stamped position, heading and their rates in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPose {
    pub stamp: f64,
    pub frame: FrameId,
    pub position: Vector3<f64>,
    pub heading: f64,
    pub velocity: Vector3<f64>,
    pub heading_rate: f64,
}

impl TimedPose {
    pub fn new(stamp: f64, frame: FrameId, position: Vector3<f64>, heading: f64) -> Self {
        Self {
            stamp,
            frame,
            position,
            heading: wrap(heading),
            velocity: Vector3::zeros(),
            heading_rate: 0.0,
        }
    }

    pub fn with_rates(mut self, velocity: Vector3<f64>, heading_rate: f64) -> Self {
        self.velocity = velocity;
        self.heading_rate = heading_rate;
        self
    }

    /// Expresses the pose in `transform.target_frame`.
    pub fn transformed(&self, transform: &RelativeTransform) -> Result<Self, GeometryError> {
        if self.frame != transform.source_frame {
            return Err(GeometryError::FrameMismatch {
                expected: transform.source_frame,
                actual: self.frame,
            });
        }
        Ok(Self {
            stamp: self.stamp,
            frame: transform.target_frame,
            position: transform.apply(&self.position)?,
            heading: transform.apply_heading(self.heading),
            velocity: transform.rotate(&self.velocity),
            heading_rate: self.heading_rate,
        })
    }
}

/// LiDAR detection of a flying object, expressed in the LiDAR SLAM frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub stamp: f64,
    pub frame: FrameId,
    pub position: Vector3<f64>,
    pub covariance: Matrix3<f64>,
    pub track_id: u32,
}

impl Detection {
    pub fn new(stamp: f64, track_id: u32, position: Vector3<f64>, sigma: f64) -> Self {
        Self {
            stamp,
            frame: FrameId::L,
            position,
            covariance: Matrix3::identity() * (sigma * sigma),
            track_id,
        }
    }
}

/// Locates `t` in a sorted stamp sequence.
enum Bracket {
    Exact(usize),
    /// Interpolate/extrapolate on the segment `(i, i + 1)`.
    Segment(usize),
    /// Single-element buffer, within tolerance.
    Single,
}

fn bracket<F>(len: usize, stamp_at: F, t: f64, tolerance: f64) -> Result<Bracket, GeometryError>
where
    F: Fn(usize) -> f64,
{
    if len == 0 {
        return Err(GeometryError::EmptyBuffer);
    }
    let first = stamp_at(0);
    let last = stamp_at(len - 1);
    if !t.is_finite() || t < first - tolerance || t > last + tolerance {
        return Err(GeometryError::StaleQuery { query: t, first, last, tolerance });
    }
    // partition point: first index with stamp > t
    let (mut lo, mut hi) = (0usize, len);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if stamp_at(mid) <= t {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let upper = lo;
    if upper > 0 && stamp_at(upper - 1) == t {
        return Ok(Bracket::Exact(upper - 1));
    }
    if len == 1 {
        return Ok(Bracket::Single);
    }
    let seg = upper.clamp(1, len - 1) - 1;
    Ok(Bracket::Segment(seg))
}

fn lerp_heading(a: f64, b: f64, s: f64) -> f64 {
    wrap(a + wrap(b - a) * s)
}

/// Interpolates a time-sorted pose buffer at `t`.
///
/// Positions and velocities are interpolated linearly, headings along the
/// shortest arc. Queries up to `tolerance` seconds outside the buffer span are
/// linearly extrapolated from the end segment.
pub fn interpolate(buffer: &[TimedPose], t: f64, tolerance: f64) -> Result<TimedPose, GeometryError> {
    match bracket(buffer.len(), |i| buffer[i].stamp, t, tolerance)? {
        Bracket::Exact(i) => Ok(buffer[i]),
        Bracket::Single => {
            let p = buffer[0];
            let dt = t - p.stamp;
            Ok(TimedPose {
                stamp: t,
                position: p.position + p.velocity * dt,
                heading: wrap(p.heading + p.heading_rate * dt),
                ..p
            })
        }
        Bracket::Segment(i) => {
            let (a, b) = (&buffer[i], &buffer[i + 1]);
            let s = (t - a.stamp) / (b.stamp - a.stamp);
            Ok(TimedPose {
                stamp: t,
                frame: a.frame,
                position: a.position + (b.position - a.position) * s,
                heading: lerp_heading(a.heading, b.heading, s),
                velocity: a.velocity + (b.velocity - a.velocity) * s,
                heading_rate: a.heading_rate + (b.heading_rate - a.heading_rate) * s,
            })
        }
    }
}

/// Interpolates detection positions at `t`; same rules as [`interpolate`],
/// except a single detection is held constant.
pub fn interpolate_detection(
    buffer: &[Detection],
    t: f64,
    tolerance: f64,
) -> Result<Vector3<f64>, GeometryError> {
    interpolate_position_by(buffer.len(), |i| (buffer[i].stamp, buffer[i].position), t, tolerance)
}

pub(crate) fn interpolate_position_by<F>(
    len: usize,
    at: F,
    t: f64,
    tolerance: f64,
) -> Result<Vector3<f64>, GeometryError>
where
    F: Fn(usize) -> (f64, Vector3<f64>),
{
    match bracket(len, |i| at(i).0, t, tolerance)? {
        Bracket::Exact(i) => Ok(at(i).1),
        Bracket::Single => Ok(at(0).1),
        Bracket::Segment(i) => {
            let (ta, a) = at(i);
            let (tb, b) = at(i + 1);
            let s = (t - ta) / (tb - ta);
            Ok(a + (b - a) * s)
        }
    }
}
