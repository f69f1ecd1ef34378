use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::VioDrift;
use crate::geometry::{FrameId, RelativeTransform, TimedPose};

/// Accumulated VIO drift: an offset of frame `V` on top of its initial pose.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftState {
    /// `L → V` at the start of the run.
    initial: RelativeTransform,
    velocity: Vector3<f64>,
    sigma: f64,
    onset: f64,
    offset: Vector3<f64>,
    stamp: f64,
}

impl DriftState {
    pub fn new(initial: RelativeTransform, model: &VioDrift, onset: f64) -> Self {
        Self {
            initial,
            velocity: model.velocity(),
            sigma: model.random_walk_sigma,
            onset,
            offset: Vector3::zeros(),
            stamp: 0.0,
        }
    }

    pub fn offset(&self) -> Vector3<f64> {
        self.offset
    }

    pub fn stamp(&self) -> f64 {
        self.stamp
    }

    /// Drift velocity at the current stamp.
    pub fn rate(&self) -> Vector3<f64> {
        if self.stamp >= self.onset {
            self.velocity
        } else {
            Vector3::zeros()
        }
    }

    /// Advances the drift to `stamp`.
    pub fn advance<R: Rng>(&mut self, stamp: f64, rng: &mut R) {
        let start = self.stamp.max(self.onset);
        let dt = stamp - start;
        if dt > 0.0 {
            self.offset += self.velocity * dt;
            if self.sigma > 0.0 {
                let normal = Normal::new(0.0, self.sigma * dt.sqrt()).expect("finite sigma");
                self.offset += Vector3::from_fn(|_, _| normal.sample(rng));
            }
        }
        self.stamp = stamp;
    }

    /// True `L → V` transform at the current stamp.
    pub fn transform(&self) -> RelativeTransform {
        let mut t = self.initial;
        t.translation += self.offset;
        t.stamp = self.stamp;
        t
    }
}

/// VIO pose for a ground-truth pose in `L`, under the current drift, plus
/// white position noise of standard deviation `noise`.
pub fn vio_sample<R: Rng>(truth: &TimedPose, drift: &DriftState, noise: f64, rng: &mut R) -> TimedPose {
    let transform = drift.transform();
    let mut position = transform.apply_unchecked(&truth.position);
    if noise > 0.0 {
        let normal = Normal::new(0.0, noise).expect("finite noise");
        position += Vector3::from_fn(|_, _| normal.sample(rng));
    }
    TimedPose {
        stamp: truth.stamp,
        frame: FrameId::V,
        position,
        heading: transform.apply_heading(truth.heading),
        velocity: transform.rotate(&truth.velocity) + drift.rate(),
        heading_rate: truth.heading_rate,
    }
}
