use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector3;

use super::config::{DesiredPattern, PrimaryMotion};
use crate::evaluation::ReferencePath;
use crate::geometry::{wrap, FrameId, TimedPose};
use crate::guider::{Trajectory, TrajectoryPoint};

/// Position of a point travelling at `speed` back and forth between `a` and `b`.
fn shuttle(a: &Vector3<f64>, b: &Vector3<f64>, speed: f64, t: f64) -> (Vector3<f64>, Vector3<f64>) {
    let length = (b - a).norm();
    let s = (speed * t).rem_euclid(2.0 * length);
    let dir = (b - a) / length;
    if s <= length {
        (a + dir * s, dir * speed)
    } else {
        (b - dir * (s - length), -dir * speed)
    }
}

/// Ground-truth pose of the primary agent in `L`.
pub fn primary_pose(motion: &PrimaryMotion, t: f64) -> TimedPose {
    let (position, velocity) = match motion {
        PrimaryMotion::Square { center, size, speed } => {
            let h = size / 2.0;
            let corners = [
                center + Vector3::new(-h, -h, 0.0),
                center + Vector3::new(h, -h, 0.0),
                center + Vector3::new(h, h, 0.0),
                center + Vector3::new(-h, h, 0.0),
            ];
            let s = (speed * t).rem_euclid(4.0 * size);
            let side = ((s / size) as usize).min(3);
            let (a, b) = (corners[side], corners[(side + 1) % 4]);
            let dir = (b - a) / *size;
            (a + dir * (s - side as f64 * *size), dir * *speed)
        }
        PrimaryMotion::Line { start, end, speed } => shuttle(start, end, *speed, t),
        PrimaryMotion::Static { position, heading } => {
            return TimedPose::new(t, FrameId::L, *position, *heading);
        }
    };
    TimedPose::new(t, FrameId::L, position, velocity.y.atan2(velocity.x)).with_rates(velocity, 0.0)
}

/// Reference flown in `V` before guidance starts: a small figure around the origin.
pub fn warmup_reference(amplitude: f64, t: f64) -> Vector3<f64> {
    // peak speed 0.5 m/s per axis
    let w = 0.5 / amplitude.max(1e-3);
    Vector3::new(amplitude * (w * t).sin(), 0.5 * amplitude * (2.0 * w * t).sin(), 0.0)
}

/// Closed or open polyline with arc-length lookup.
#[derive(Debug, Clone)]
struct Polyline {
    points: Vec<Vector3<f64>>,
    cumulative: Vec<f64>,
}

impl Polyline {
    fn new(mut points: Vec<Vector3<f64>>, closed: bool) -> Self {
        if closed {
            points.push(points[0]);
        }
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            cumulative.push(cumulative.last().unwrap() + (w[1] - w[0]).norm());
        }
        Self { points, cumulative }
    }

    fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn at(&self, s: f64) -> (Vector3<f64>, f64) {
        let s = s.clamp(0.0, self.length());
        let i = self.cumulative.partition_point(|&c| c <= s).clamp(1, self.points.len() - 1);
        let (a, b) = (self.points[i - 1], self.points[i]);
        let seg = self.cumulative[i] - self.cumulative[i - 1];
        let f = if seg > 0.0 { (s - self.cumulative[i - 1]) / seg } else { 0.0 };
        let d = b - a;
        (a + d * f, d.y.atan2(d.x))
    }
}

enum Lap {
    Circle { center: Vector3<f64>, radius: f64, phase: f64 },
    Polyline(Polyline),
}

impl Lap {
    fn length(&self) -> f64 {
        match self {
            Lap::Circle { radius, .. } => 2.0 * PI * radius,
            Lap::Polyline(p) => p.length(),
        }
    }

    fn at(&self, s: f64) -> (Vector3<f64>, f64) {
        match self {
            Lap::Circle { center, radius, phase } => {
                let a = phase + s / radius;
                (center + Vector3::new(radius * a.cos(), radius * a.sin(), 0.0), wrap(a + FRAC_PI_2))
            }
            Lap::Polyline(p) => p.at(s),
        }
    }
}

/// Desired trajectory in `L` with the path it follows.
#[derive(Debug, Clone)]
pub struct DesiredPlan {
    pub trajectory: Trajectory,
    pub path: ReferencePath,
    /// Time the approach segment ends and the path itself begins.
    pub path_start: f64,
    pub path_end: f64,
}

/// Plans an approach from `from` starting at `start`, followed by `laps`
/// laps of `pattern`, sampled at `rate`.
pub fn plan_desired(
    pattern: &DesiredPattern,
    laps: u32,
    start: f64,
    from: &Vector3<f64>,
    approach_time: f64,
    rate: f64,
) -> DesiredPlan {
    let (lap, speed, path, repeat) = match pattern {
        DesiredPattern::Circle { center, radius, speed } => {
            let rel = from - center;
            let phase = rel.y.atan2(rel.x);
            (
                Lap::Circle { center: *center, radius: *radius, phase },
                *speed,
                ReferencePath::Circle { center: *center, radius: *radius },
                true,
            )
        }
        DesiredPattern::FigureEight { center, size, speed } => {
            let n = 2000;
            let points: Vec<_> = (0..n)
                .map(|i| {
                    let u = 2.0 * PI * i as f64 / n as f64;
                    center + Vector3::new(size * u.sin(), size * u.sin() * u.cos(), 0.0)
                })
                .collect();
            let line = Polyline::new(points.clone(), true);
            (Lap::Polyline(line), *speed, ReferencePath::Polyline { points, closed: true }, true)
        }
        DesiredPattern::Waypoints { points, speed, closed } => (
            Lap::Polyline(Polyline::new(points.clone(), *closed)),
            *speed,
            ReferencePath::Polyline { points: points.clone(), closed: *closed },
            *closed,
        ),
    };
    let laps = if repeat { laps.max(1) } else { 1 };
    let (entry, entry_heading) = lap.at(0.0);
    let approach = approach_time.max((entry - from).norm());
    let path_start = start + approach;
    let path_end = path_start + lap.length() * laps as f64 / speed;

    let n = ((path_end - start) * rate).ceil() as usize;
    let points = (0..=n)
        .map(|i| {
            let stamp = start + i as f64 / rate;
            let (position, heading) = if stamp < path_start {
                let f = (stamp - start) / approach;
                (from + (entry - from) * f, entry_heading)
            } else {
                let s = ((stamp - path_start) * speed).min(lap.length() * laps as f64);
                lap.at(if s >= lap.length() * laps as f64 { lap.length() } else { s % lap.length() })
            };
            TrajectoryPoint { stamp, position, heading }
        })
        .collect();
    DesiredPlan { trajectory: Trajectory::new(FrameId::L, points), path, path_start, path_end }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn square_visits_corners() {
        let m = PrimaryMotion::Square { center: Vector3::new(0.0, 0.0, 1.0), size: 3.0, speed: 0.5 };
        assert_relative_eq!(primary_pose(&m, 0.0).position, Vector3::new(-1.5, -1.5, 1.0));
        assert_relative_eq!(primary_pose(&m, 6.0).position, Vector3::new(1.5, -1.5, 1.0), epsilon = 1e-12);
        assert_relative_eq!(primary_pose(&m, 12.0).position, Vector3::new(1.5, 1.5, 1.0), epsilon = 1e-12);
        assert_relative_eq!(primary_pose(&m, 24.0).position, Vector3::new(-1.5, -1.5, 1.0), epsilon = 1e-12);
        assert_relative_eq!(primary_pose(&m, 7.0).heading, FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn line_shuttles() {
        let m = PrimaryMotion::Line { start: Vector3::zeros(), end: Vector3::new(2.0, 0.0, 0.0), speed: 1.0 };
        assert_relative_eq!(primary_pose(&m, 3.0).position.x, 1.0);
        assert_relative_eq!(primary_pose(&m, 1.0).position.x, 1.0);
        assert_relative_eq!(primary_pose(&m, 4.0).position.x, 0.0);
    }

    #[test]
    fn circle_plan_stays_on_circle() {
        let pattern = DesiredPattern::Circle { center: Vector3::new(0.0, 0.0, 2.0), radius: 4.0, speed: 0.5 };
        let plan = plan_desired(&pattern, 2, 10.0, &Vector3::new(3.0, 0.5, 2.0), 5.0, 10.0);
        assert_relative_eq!(plan.path_start, 15.0);
        assert_relative_eq!(plan.path_end, 15.0 + 2.0 * 2.0 * PI * 4.0 / 0.5, epsilon = 1e-9);
        let stamps: Vec<_> = plan.trajectory.points.iter().map(|p| p.stamp).collect();
        assert!(stamps.windows(2).all(|w| w[1] > w[0]));
        for p in plan.trajectory.points.iter().filter(|p| p.stamp >= plan.path_start) {
            assert!(plan.path.distance(&p.position) < 1e-9);
        }
        assert_relative_eq!(plan.trajectory.points[0].position, Vector3::new(3.0, 0.5, 2.0));
    }

    #[test]
    fn waypoint_plan_follows_polyline() {
        let pattern = DesiredPattern::Waypoints {
            points: vec![Vector3::zeros(), Vector3::new(4.0, 0.0, 0.0), Vector3::new(4.0, 4.0, 0.0)],
            speed: 1.0,
            closed: true,
        };
        let plan = plan_desired(&pattern, 3, 0.0, &Vector3::zeros(), 2.0, 10.0);
        let lap = 8.0 + 32f64.sqrt();
        assert_relative_eq!(plan.path_end, 2.0 + 3.0 * lap, epsilon = 1e-9);
        for p in &plan.trajectory.points {
            assert!(plan.path.distance(&p.position) < 1e-9);
        }
    }

    #[test]
    fn figure_eight_plan_is_on_path() {
        let pattern = DesiredPattern::FigureEight { center: Vector3::new(0.0, 0.0, 2.0), size: 4.0, speed: 0.5 };
        let plan = plan_desired(&pattern, 1, 0.0, &Vector3::new(0.0, 0.0, 2.0), 1.0, 10.0);
        for p in plan.trajectory.points.iter().filter(|p| p.stamp >= plan.path_start) {
            assert!(plan.path.distance(&p.position) < 1e-9);
        }
    }
}
