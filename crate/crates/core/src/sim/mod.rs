//! Deterministic closed-loop scenario simulator.
//!
//! A fixed-step loop advances the primary along its pattern and the secondary
//! through a first-order plant that tracks references in its own drifting
//! frame `V`. Detections and VIO samples are delivered to the [`Guider`] after
//! randomized delays, and the references it streams back reach the secondary
//! after a communication delay. `L` serves as the world frame.

mod config;
mod drift;
mod events;
mod lidar;
mod patterns;
mod plant;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use config::{Delay, DesiredPattern, PrimaryMotion, ScenarioConfig, SecondaryConfig, VioDrift, Wall};
pub use drift::{vio_sample, DriftState};
pub use events::{EventLog, LogError, Record};
pub use lidar::{is_occluded, lidar_detect, segments_intersect, Target};
pub use patterns::{plan_desired, primary_pose, warmup_reference, DesiredPlan};
pub use plant::{plant_step, PlantState};

use crate::geometry::{Detection, FrameId, RelativeTransform, TimedPose};
use crate::guider::{Guider, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
}

/// Track id of the first false target; the secondary's ids start above all of them.
const FIRST_FALSE_ID: u32 = 1;
const FIRST_SECONDARY_ID: u32 = 100;
/// Time after guidance start by which the guider must be initialized.
const INIT_DEADLINE: f64 = 60.0;

/// Independent random streams, so toggling one noise source leaves the others intact.
#[derive(Debug, Clone, Copy)]
enum Stream {
    DetectionNoise = 0,
    DetectionDelay = 1,
    VioNoise = 2,
    CommDelay = 3,
    Drift = 4,
}

fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

fn draw_delay<R: Rng>(delay: &Delay, rng: &mut R) -> f64 {
    if delay.jitter > 0.0 {
        delay.mean + rng.gen_range(-delay.jitter..=delay.jitter)
    } else {
        delay.mean
    }
}

#[derive(Debug)]
enum Payload {
    Detections(Vec<Detection>),
    Vio(TimedPose),
    References(Trajectory),
}

#[derive(Debug)]
struct Pending {
    at: f64,
    seq: u64,
    payload: Payload,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // reversed: BinaryHeap pops the earliest delivery first
    fn cmp(&self, other: &Self) -> Ordering {
        other.at.total_cmp(&self.at).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Fires at multiples of `1 / rate`.
struct Clock {
    rate: f64,
    next: u64,
}

impl Clock {
    fn new(rate: f64) -> Self {
        Self { rate, next: 0 }
    }

    fn due(&mut self, t: f64) -> bool {
        if t + 1e-9 >= self.next as f64 / self.rate {
            self.next = (t * self.rate + 1e-9).floor() as u64 + 1;
            true
        } else {
            false
        }
    }
}

struct Simulation<'a> {
    config: &'a ScenarioConfig,
    guider: Guider,
    drift: DriftState,
    plant: PlantState,
    detection_noise: ChaCha8Rng,
    detection_delay: ChaCha8Rng,
    vio_noise: ChaCha8Rng,
    comm_delay: ChaCha8Rng,
    drift_rng: ChaCha8Rng,
    queue: BinaryHeap<Pending>,
    seq: u64,
    secondary_id: u32,
    was_visible: bool,
    seen_secondary: bool,
    false_targets: Vec<(u32, Vector3<f64>)>,
    references: Option<Trajectory>,
    plan: Option<DesiredPlan>,
    log: EventLog,
}

impl<'a> Simulation<'a> {
    fn new(config: &'a ScenarioConfig) -> Self {
        let sec = &config.secondary;
        // V starts at the secondary's initial pose with zero heading
        let theta = -sec.start_heading;
        let initial = RelativeTransform::new(
            -crate::geometry::rotate_yaw(theta, &sec.start_position),
            theta,
            FrameId::L,
            FrameId::V,
        )
        .expect("finite start pose");
        let false_targets: Vec<_> =
            config.false_targets.iter().enumerate().map(|(i, p)| (FIRST_FALSE_ID + i as u32, *p)).collect();
        let mut log = EventLog::default();
        log.push(Record::Header { seed: config.seed, false_target_ids: false_targets.iter().map(|f| f.0).collect() });
        let seed = config.seed;
        Self {
            config,
            guider: Guider::new(config.guider),
            drift: DriftState::new(initial, &config.vio_drift, config.drift_onset()),
            plant: PlantState::at_rest(Vector3::zeros(), 0.0),
            detection_noise: stream_rng(seed, Stream::DetectionNoise),
            detection_delay: stream_rng(seed, Stream::DetectionDelay),
            vio_noise: stream_rng(seed, Stream::VioNoise),
            comm_delay: stream_rng(seed, Stream::CommDelay),
            drift_rng: stream_rng(seed, Stream::Drift),
            queue: BinaryHeap::new(),
            seq: 0,
            secondary_id: FIRST_SECONDARY_ID,
            was_visible: false,
            seen_secondary: false,
            false_targets,
            references: None,
            plan: None,
            log,
        }
    }

    fn enqueue(&mut self, at: f64, payload: Payload) {
        self.seq += 1;
        self.queue.push(Pending { at, seq: self.seq, payload });
    }

    fn truth(&self, t: f64) -> TimedPose {
        let to_l = self.drift.transform().inverse();
        TimedPose {
            stamp: t,
            frame: FrameId::L,
            position: to_l.apply_unchecked(&self.plant.position),
            heading: to_l.apply_heading(self.plant.heading),
            velocity: to_l.rotate(&(self.plant.velocity - self.drift.rate())),
            heading_rate: self.plant.heading_rate,
        }
    }

    fn reference(&self, t: f64) -> (Vector3<f64>, f64) {
        match self.references.as_ref().and_then(|r| r.sample(t)) {
            Some(p) => (p.position, p.heading),
            None => (warmup_reference(self.config.secondary.warmup_amplitude, t), 0.0),
        }
    }

    fn deliver(&mut self, t: f64) {
        while self.queue.peek().is_some_and(|p| p.at <= t) {
            let pending = self.queue.pop().expect("peeked");
            match pending.payload {
                Payload::Detections(d) => self.guider.ingest_detections(&d),
                Payload::Vio(p) => self.guider.ingest_vio(p),
                Payload::References(r) => self.references = Some(r),
            }
        }
    }

    fn secondary_visible(&self, t: f64, truth: &TimedPose, primary: &TimedPose) -> bool {
        let in_window = self.config.nlos_windows.iter().any(|w| t >= w[0] && t <= w[1]);
        !in_window && !is_occluded(&primary.position, &truth.position, &self.config.walls)
    }

    fn detect(&mut self, t: f64, truth: &TimedPose, primary: &TimedPose, visible: bool) {
        // the detector starts a new track when the secondary reappears
        if visible && !self.was_visible {
            if self.seen_secondary {
                self.secondary_id += 1;
            }
            self.seen_secondary = true;
        }
        self.was_visible = visible;
        let mut targets: Vec<_> = self
            .false_targets
            .iter()
            .map(|(id, p)| Target { track_id: *id, position: *p, suppressed: false })
            .collect();
        targets.push(Target { track_id: self.secondary_id, position: truth.position, suppressed: !visible });
        let detections = lidar_detect(
            t,
            &primary.position,
            &targets,
            &self.config.walls,
            self.config.detection_noise,
            &mut self.detection_noise,
        );
        if detections.is_empty() {
            return;
        }
        for d in &detections {
            self.log.push(Record::Detection {
                stamp: d.stamp,
                track_id: d.track_id,
                position: d.position,
                variance: d.covariance[(0, 0)],
            });
        }
        let delay = draw_delay(&self.config.detection_delay, &mut self.detection_delay);
        self.enqueue(t + delay, Payload::Detections(detections));
    }

    fn sample_vio(&mut self, truth: &TimedPose) {
        let pose = vio_sample(truth, &self.drift, self.config.vio_noise, &mut self.vio_noise);
        self.log.push(Record::Vio {
            stamp: pose.stamp,
            position: pose.position,
            heading: pose.heading,
            velocity: pose.velocity,
            heading_rate: pose.heading_rate,
        });
        let delay = draw_delay(&self.config.comm_delay, &mut self.comm_delay);
        self.enqueue(pose.stamp + delay, Payload::Vio(pose));
    }

    fn guide(&mut self, t: f64) {
        if t < self.config.guidance_start || !self.guider.is_initialized() {
            return;
        }
        if self.plan.is_none() {
            let Ok(output) = self.guider.current_output(t) else {
                return;
            };
            let plan = plan_desired(
                &self.config.desired_trajectory,
                self.config.laps,
                t,
                &output.secondary_pose_in_l.position,
                self.config.approach_time,
                self.config.reference_rate,
            );
            self.log.push(Record::Path { t, start: plan.path_start, end: plan.path_end, path: plan.path.clone() });
            self.plan = Some(plan);
        }
        let plan = self.plan.as_ref().expect("planned");
        if let Ok(Some(refs)) = self.guider.poll_stream(&plan.trajectory, t) {
            self.log.push(Record::Reference {
                t,
                count: refs.len(),
                first: refs.points.first().map(|p| (p.stamp, p.position, p.heading)),
            });
            let delay = draw_delay(&self.config.comm_delay, &mut self.comm_delay);
            self.enqueue(t + delay, Payload::References(refs));
        }
    }

    fn record(&mut self, t: f64, truth: &TimedPose, primary: &TimedPose, visible: bool) {
        let tf = self.drift.transform();
        self.log.push(Record::Truth {
            t,
            secondary: truth.position,
            secondary_heading: truth.heading,
            primary: primary.position,
            primary_heading: primary.heading,
            translation: tf.translation,
            heading: tf.heading(),
            visible,
        });
        if let Ok(out) = self.guider.current_output(t) {
            self.log.push(Record::Estimate {
                t,
                status: out.status,
                track_id: self.guider.tracked_id(),
                position: out.secondary_pose_in_l.position,
                heading: out.secondary_pose_in_l.heading,
                translation: out.transform_l_to_s.translation,
                transform_heading: out.transform_l_to_s.heading(),
            });
        }
    }

    fn check_failure(&self, t: f64, truth: &TimedPose) -> Option<&'static str> {
        match &self.plan {
            Some(plan) if t >= plan.path_start && t <= plan.path_end => {
                (plan.path.distance(&truth.position) > self.config.abort_radius).then_some("deviation")
            }
            Some(_) => None,
            None => (t > self.config.guidance_start + INIT_DEADLINE).then_some("not_initialized"),
        }
    }

    fn run(mut self) -> EventLog {
        let config = self.config;
        let dt = config.step;
        let ticks = (config.duration / dt).round() as u64;
        let mut detection_clock = Clock::new(config.detection_rate);
        let mut vio_clock = Clock::new(config.vio_rate);
        let mut log_clock = Clock::new(config.log_rate);
        let mut end = config.duration;

        for i in 0..=ticks {
            let t = i as f64 * dt;
            if i > 0 {
                self.drift.advance(t, &mut self.drift_rng);
                let (position, heading) = self.reference(t);
                self.plant = plant_step(&self.plant, &position, heading, dt, &config.secondary);
            }
            let truth = self.truth(t);
            let primary = primary_pose(&config.primary_motion, t);
            let visible = self.secondary_visible(t, &truth, &primary);

            self.deliver(t);
            if detection_clock.due(t) {
                self.detect(t, &truth, &primary, visible);
            }
            if vio_clock.due(t) {
                self.sample_vio(&truth);
            }
            self.guide(t);

            if log_clock.due(t) {
                self.record(t, &truth, &primary, visible);
                if let Some(reason) = self.check_failure(t, &truth) {
                    self.log.push(Record::Failure { t, reason: reason.to_string() });
                    end = t;
                    break;
                }
            }
            if self.plan.as_ref().is_some_and(|p| t >= p.path_end + 1.0) {
                end = t;
                break;
            }
        }
        self.log.push(Record::End { t: end });
        self.log
    }
}

/// Runs one scenario to completion, failure or `duration`.
pub fn run_scenario(config: &ScenarioConfig) -> Result<EventLog, SimError> {
    config.validate()?;
    Ok(Simulation::new(config).run())
}
