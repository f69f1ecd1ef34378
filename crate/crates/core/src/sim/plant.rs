use nalgebra::Vector3;

use super::config::SecondaryConfig;
use crate::geometry::wrap;

/// Secondary agent as seen by its own estimator, in frame `V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub position: Vector3<f64>,
    pub heading: f64,
    pub velocity: Vector3<f64>,
    pub heading_rate: f64,
}

impl PlantState {
    pub fn at_rest(position: Vector3<f64>, heading: f64) -> Self {
        Self { position, heading, velocity: Vector3::zeros(), heading_rate: 0.0 }
    }
}

/// Exact first-order response toward the reference over `dt`, with speed
/// and heading-rate saturation.
pub fn plant_step(
    state: &PlantState,
    reference_position: &Vector3<f64>,
    reference_heading: f64,
    dt: f64,
    config: &SecondaryConfig,
) -> PlantState {
    debug_assert!(dt > 0.0);
    let gain = 1.0 - (-dt / config.tau).exp();
    let mut step = (reference_position - state.position) * gain;
    let max_step = config.max_speed * dt;
    if step.norm() > max_step {
        step *= max_step / step.norm();
    }

    let heading_gain = 1.0 - (-dt / config.heading_tau).exp();
    let max_turn = config.max_heading_rate * dt;
    let turn = (wrap(reference_heading - state.heading) * heading_gain).clamp(-max_turn, max_turn);

    PlantState {
        position: state.position + step,
        heading: wrap(state.heading + turn),
        velocity: step / dt,
        heading_rate: turn / dt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn equilibrium_stays_put() {
        let config = SecondaryConfig::default();
        let s = PlantState::at_rest(Vector3::new(1.0, 2.0, 3.0), 0.4);
        let next = plant_step(&s, &s.position, 0.4, 0.01, &config);
        assert_eq!(next, s);
    }

    #[test]
    fn first_order_response() {
        let config = SecondaryConfig { tau: 0.5, ..SecondaryConfig::default() };
        let mut s = PlantState::at_rest(Vector3::zeros(), 0.0);
        let target = Vector3::new(1.0, 0.0, 0.0);
        for _ in 0..50 {
            s = plant_step(&s, &target, 0.0, 0.01, &config);
        }
        assert_relative_eq!(s.position.x, 1.0 - (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn speed_saturates() {
        let config = SecondaryConfig::default();
        let mut s = PlantState::at_rest(Vector3::zeros(), 0.0);
        let target = Vector3::new(10.0, 0.0, 0.0);
        for _ in 0..1000 {
            s = plant_step(&s, &target, 0.0, 0.01, &config);
            assert!(s.velocity.norm() <= config.max_speed + 1e-12);
        }
    }

    #[test]
    fn heading_turns_the_short_way() {
        let config = SecondaryConfig::default();
        let s = PlantState::at_rest(Vector3::zeros(), 3.0);
        let next = plant_step(&s, &Vector3::zeros(), -3.0, 0.01, &config);
        assert!(next.heading_rate > 0.0);
    }
}
