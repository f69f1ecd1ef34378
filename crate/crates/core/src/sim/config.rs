use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::guider::GuiderConfig;

/// Motion of the primary agent in `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pattern", rename_all = "snake_case", deny_unknown_fields)]
pub enum PrimaryMotion {
    /// Square of side `size` around `center`, flown counter-clockwise.
    Square { center: Vector3<f64>, size: f64, speed: f64 },
    /// Back and forth between two points.
    Line { start: Vector3<f64>, end: Vector3<f64>, speed: f64 },
    Static { position: Vector3<f64>, heading: f64 },
}

impl Default for PrimaryMotion {
    fn default() -> Self {
        PrimaryMotion::Square { center: Vector3::new(0.0, 0.0, 1.5), size: 3.0, speed: 0.5 }
    }
}

/// Desired trajectory of the secondary agent in `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pattern", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesiredPattern {
    Circle { center: Vector3<f64>, radius: f64, speed: f64 },
    /// Lemniscate of Gerono with half-width `size`.
    FigureEight { center: Vector3<f64>, size: f64, speed: f64 },
    /// Polyline through `points`; closed loops return to the first point.
    Waypoints { points: Vec<Vector3<f64>>, speed: f64, closed: bool },
}

impl Default for DesiredPattern {
    fn default() -> Self {
        DesiredPattern::Circle { center: Vector3::new(0.0, 0.0, 2.0), radius: 4.0, speed: 0.5 }
    }
}

/// VIO drift in `V`: constant velocity plus a random walk, both starting at `onset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VioDrift {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Random walk intensity (m/√s) per axis.
    pub random_walk_sigma: f64,
    /// Drift start (s); `None` starts it together with guidance.
    pub onset: Option<f64>,
}

impl Default for VioDrift {
    fn default() -> Self {
        Self { x: 0.0, y: 0.0, z: 0.0, random_walk_sigma: 0.0, onset: None }
    }
}

impl VioDrift {
    pub fn velocity(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }
}

/// Delay drawn uniformly from `[mean − jitter, mean + jitter]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Delay {
    pub mean: f64,
    pub jitter: f64,
}

/// Vertical wall seen from above, blocking line of sight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wall {
    pub from: Vector2<f64>,
    pub to: Vector2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SecondaryConfig {
    /// Initial position in `L`; also the origin of `V`.
    pub start_position: Vector3<f64>,
    /// Initial heading in `L`; `V` starts at heading zero.
    pub start_heading: f64,
    /// First-order position time constant (s).
    pub tau: f64,
    pub max_speed: f64,
    pub heading_tau: f64,
    pub max_heading_rate: f64,
    /// Amplitude (m) of the figure flown in `V` before guidance.
    pub warmup_amplitude: f64,
}

impl Default for SecondaryConfig {
    fn default() -> Self {
        Self {
            start_position: Vector3::new(4.0, 0.0, 2.0),
            start_heading: 2.0,
            tau: 0.5,
            max_speed: 2.0,
            heading_tau: 0.5,
            max_heading_rate: 1.5,
            warmup_amplitude: 1.5,
        }
    }
}

fn default_step() -> f64 {
    0.01
}
fn default_laps() -> u32 {
    10
}
fn default_vio_rate() -> f64 {
    30.0
}
fn default_detection_noise() -> f64 {
    0.1
}
fn default_detection_rate() -> f64 {
    10.0
}
fn default_detection_delay() -> Delay {
    Delay { mean: 0.1, jitter: 0.05 }
}
fn default_comm_delay() -> Delay {
    Delay { mean: 0.05, jitter: 0.02 }
}
fn default_guidance_start() -> f64 {
    15.0
}
fn default_approach_time() -> f64 {
    5.0
}
fn default_abort_radius() -> f64 {
    3.0
}
fn default_log_rate() -> f64 {
    10.0
}
fn default_reference_rate() -> f64 {
    10.0
}

/// Closed-loop scenario. `seed` and `duration` have no defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Simulated time (s); the run also ends once the desired trajectory is complete.
    pub duration: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default)]
    pub primary_motion: PrimaryMotion,
    #[serde(default)]
    pub desired_trajectory: DesiredPattern,
    #[serde(default = "default_laps")]
    pub laps: u32,
    /// Sample rate (Hz) of the desired trajectory.
    #[serde(default = "default_reference_rate")]
    pub reference_rate: f64,
    #[serde(default)]
    pub secondary: SecondaryConfig,
    #[serde(default)]
    pub vio_drift: VioDrift,
    /// White position noise (m) on VIO samples.
    #[serde(default)]
    pub vio_noise: f64,
    #[serde(default = "default_vio_rate")]
    pub vio_rate: f64,
    #[serde(default = "default_detection_noise")]
    pub detection_noise: f64,
    #[serde(default = "default_detection_rate")]
    pub detection_rate: f64,
    #[serde(default = "default_detection_delay")]
    pub detection_delay: Delay,
    #[serde(default = "default_comm_delay")]
    pub comm_delay: Delay,
    #[serde(default)]
    pub false_targets: Vec<Vector3<f64>>,
    /// Intervals `[start, end]` (s) without detections of the secondary.
    #[serde(default)]
    pub nlos_windows: Vec<[f64; 2]>,
    #[serde(default)]
    pub walls: Vec<Wall>,
    /// Time (s) at which streamed references take over from the warm-up figure.
    #[serde(default = "default_guidance_start")]
    pub guidance_start: f64,
    /// Duration (s) of the transfer onto the desired trajectory.
    #[serde(default = "default_approach_time")]
    pub approach_time: f64,
    #[serde(default = "default_abort_radius")]
    pub abort_radius: f64,
    /// Rate (Hz) of ground-truth and estimate records.
    #[serde(default = "default_log_rate")]
    pub log_rate: f64,
    #[serde(default)]
    pub guider: GuiderConfig,
}

impl ScenarioConfig {
    /// Default circle scenario.
    pub fn new(seed: u64, duration: f64) -> Self {
        Self {
            seed,
            duration,
            step: default_step(),
            primary_motion: PrimaryMotion::default(),
            desired_trajectory: DesiredPattern::default(),
            laps: default_laps(),
            reference_rate: default_reference_rate(),
            secondary: SecondaryConfig::default(),
            vio_drift: VioDrift::default(),
            vio_noise: 0.0,
            vio_rate: default_vio_rate(),
            detection_noise: default_detection_noise(),
            detection_rate: default_detection_rate(),
            detection_delay: default_detection_delay(),
            comm_delay: default_comm_delay(),
            false_targets: Vec::new(),
            nlos_windows: Vec::new(),
            walls: Vec::new(),
            guidance_start: default_guidance_start(),
            approach_time: default_approach_time(),
            abort_radius: default_abort_radius(),
            log_rate: default_log_rate(),
            guider: GuiderConfig::default(),
        }
    }

    /// 4 m circle at 0.5 m/s around a primary flying a 3 m square, with
    /// constant drift along `x` of `V`.
    pub fn drift_sweep(seed: u64, drift_x: f64) -> Self {
        let mut config = Self::new(seed, 600.0);
        config.vio_drift.x = drift_x;
        config
    }

    /// Loop through a 1 m gap and behind a wall, with two hovering false targets.
    pub fn nlos(seed: u64) -> Self {
        let mut config = Self::new(seed, 600.0);
        config.primary_motion = PrimaryMotion::Line {
            start: Vector3::new(0.0, -3.0, 1.5),
            end: Vector3::new(2.0, -3.0, 1.5),
            speed: 0.3,
        };
        config.desired_trajectory = DesiredPattern::Waypoints {
            points: vec![
                Vector3::new(0.0, 0.0, 2.0),
                Vector3::new(0.0, 4.0, 2.0),
                Vector3::new(4.0, 4.0, 2.0),
                Vector3::new(4.0, 0.0, 2.0),
            ],
            speed: 0.5,
            closed: true,
        };
        config.secondary.start_position = Vector3::new(2.0, 0.0, 2.0);
        config.walls = vec![
            Wall { from: Vector2::new(-5.0, 2.0), to: Vector2::new(-0.5, 2.0) },
            Wall { from: Vector2::new(0.5, 2.0), to: Vector2::new(3.0, 2.0) },
        ];
        config.false_targets = vec![Vector3::new(2.0, -1.5, 2.0), Vector3::new(5.5, 2.0, 2.0)];
        config.vio_drift.x = 0.1;
        config
    }

    pub fn drift_onset(&self) -> f64 {
        self.vio_drift.onset.unwrap_or(self.guidance_start)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("duration", self.duration),
            ("step", self.step),
            ("reference_rate", self.reference_rate),
            ("vio_rate", self.vio_rate),
            ("detection_rate", self.detection_rate),
            ("log_rate", self.log_rate),
            ("abort_radius", self.abort_radius),
            ("secondary.tau", self.secondary.tau),
            ("secondary.max_speed", self.secondary.max_speed),
            ("secondary.heading_tau", self.secondary.heading_tau),
            ("secondary.max_heading_rate", self.secondary.max_heading_rate),
            ("guider.alignment_period", self.guider.alignment_period),
            ("guider.stream_rate", self.guider.stream_rate),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(SimError::InvalidConfig(format!("{name} must be positive and finite, got {value}")));
            }
        }
        let non_negative = [
            ("vio_noise", self.vio_noise),
            ("detection_noise", self.detection_noise),
            ("vio_drift.random_walk_sigma", self.vio_drift.random_walk_sigma),
            ("guidance_start", self.guidance_start),
            ("approach_time", self.approach_time),
            ("detection_delay.mean", self.detection_delay.mean),
            ("detection_delay.jitter", self.detection_delay.jitter),
            ("comm_delay.mean", self.comm_delay.mean),
            ("comm_delay.jitter", self.comm_delay.jitter),
        ];
        for (name, value) in non_negative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(SimError::InvalidConfig(format!("{name} must be non-negative, got {value}")));
            }
        }
        for (name, d) in [("detection_delay", self.detection_delay), ("comm_delay", self.comm_delay)] {
            if d.jitter > d.mean {
                return Err(SimError::InvalidConfig(format!("{name}.jitter exceeds {name}.mean")));
            }
        }
        if !self.vio_drift.velocity().iter().all(|v| v.is_finite()) {
            return Err(SimError::InvalidConfig("vio_drift must be finite".into()));
        }
        if self.laps == 0 {
            return Err(SimError::InvalidConfig("laps must be at least 1".into()));
        }
        match &self.primary_motion {
            PrimaryMotion::Square { size, speed, .. } if !(*size > 0.0 && *speed > 0.0) => {
                return Err(SimError::InvalidConfig("primary square needs positive size and speed".into()));
            }
            PrimaryMotion::Line { speed, start, end } if !(*speed > 0.0) || start == end => {
                return Err(SimError::InvalidConfig("primary line needs distinct ends and positive speed".into()));
            }
            _ => {}
        }
        let speed = match &self.desired_trajectory {
            DesiredPattern::Circle { radius, speed, .. } => {
                if !(*radius > 0.0) {
                    return Err(SimError::InvalidConfig("circle radius must be positive".into()));
                }
                *speed
            }
            DesiredPattern::FigureEight { size, speed, .. } => {
                if !(*size > 0.0) {
                    return Err(SimError::InvalidConfig("figure-eight size must be positive".into()));
                }
                *speed
            }
            DesiredPattern::Waypoints { points, speed, .. } => {
                if points.len() < 2 {
                    return Err(SimError::InvalidConfig("waypoints need at least two points".into()));
                }
                *speed
            }
        };
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(SimError::InvalidConfig("desired speed must be positive".into()));
        }
        for w in &self.nlos_windows {
            if !(w[0] <= w[1]) {
                return Err(SimError::InvalidConfig(format!("nlos window [{}, {}] is reversed", w[0], w[1])));
            }
        }
        Ok(())
    }
}
