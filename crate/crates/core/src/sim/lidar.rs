use nalgebra::{Matrix3, Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::Wall;
use crate::geometry::{Detection, FrameId};

fn cross(o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    (a - o).perp(&(b - o))
}

/// Whether the 2D segments `p–q` and `a–b` intersect, end points included.
pub fn segments_intersect(p: &Vector2<f64>, q: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> bool {
    let d1 = cross(a, b, p);
    let d2 = cross(a, b, q);
    let d3 = cross(p, q, a);
    let d4 = cross(p, q, b);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |o: &Vector2<f64>, e: &Vector2<f64>, x: &Vector2<f64>, d: f64| {
        d == 0.0 && x.x >= o.x.min(e.x) && x.x <= o.x.max(e.x) && x.y >= o.y.min(e.y) && x.y <= o.y.max(e.y)
    };
    on(a, b, p, d1) || on(a, b, q, d2) || on(p, q, a, d3) || on(p, q, b, d4)
}

/// Line of sight from `from` to `to` is blocked by a wall.
pub fn is_occluded(from: &Vector3<f64>, to: &Vector3<f64>, walls: &[Wall]) -> bool {
    let (p, q) = (from.xy(), to.xy());
    walls.iter().any(|w| segments_intersect(&p, &q, &w.from, &w.to))
}

/// A body the detector may report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub track_id: u32,
    pub position: Vector3<f64>,
    /// Forced invisibility, e.g. inside a configured NLOS window.
    pub suppressed: bool,
}

/// One detection per visible target, stamped at acquisition, with isotropic
/// Gaussian position noise of standard deviation `noise`.
pub fn lidar_detect<R: Rng>(
    stamp: f64,
    primary: &Vector3<f64>,
    targets: &[Target],
    walls: &[Wall],
    noise: f64,
    rng: &mut R,
) -> Vec<Detection> {
    let normal = Normal::new(0.0, noise).expect("finite noise");
    // reported covariance never collapses to zero
    let covariance = Matrix3::identity() * noise.max(1e-3).powi(2);
    targets
        .iter()
        .filter(|t| !t.suppressed && !is_occluded(primary, &t.position, walls))
        .map(|t| Detection {
            stamp,
            frame: FrameId::L,
            position: t.position + Vector3::from_fn(|_, _| normal.sample(rng)),
            covariance,
            track_id: t.track_id,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn wall() -> Wall {
        Wall { from: Vector2::new(-1.0, 2.0), to: Vector2::new(1.0, 2.0) }
    }

    #[test]
    fn intersection_cases() {
        let v = |x, y| Vector2::new(x, y);
        assert!(segments_intersect(&v(0.0, 0.0), &v(0.0, 4.0), &v(-1.0, 2.0), &v(1.0, 2.0)));
        assert!(!segments_intersect(&v(2.0, 0.0), &v(2.0, 4.0), &v(-1.0, 2.0), &v(1.0, 2.0)));
        assert!(!segments_intersect(&v(0.0, 0.0), &v(0.0, 1.9), &v(-1.0, 2.0), &v(1.0, 2.0)));
        // touching an end point counts
        assert!(segments_intersect(&v(1.0, 0.0), &v(1.0, 4.0), &v(-1.0, 2.0), &v(1.0, 2.0)));
        // collinear overlap
        assert!(segments_intersect(&v(0.0, 2.0), &v(3.0, 2.0), &v(-1.0, 2.0), &v(1.0, 2.0)));
    }

    #[test]
    fn gaussian_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth = Vector3::new(1.0, 2.0, 3.0);
        let targets = [Target { track_id: 5, position: truth, suppressed: false }];
        let sigma = 0.1;
        let n = 20_000;
        let mut inside = 0;
        for i in 0..n {
            let dets = lidar_detect(i as f64 * 0.1, &Vector3::zeros(), &targets, &[], sigma, &mut rng);
            assert_eq!(dets.len(), 1);
            assert_eq!(dets[0].track_id, 5);
            // per-axis 3σ
            if (dets[0].position - truth).iter().all(|e| e.abs() <= 3.0 * sigma) {
                inside += 1;
            }
        }
        let rate = inside as f64 / n as f64;
        let expected = 0.997_300_203_936_740_f64.powi(3);
        assert!((rate - expected).abs() < 0.003, "rate {rate}");
    }

    #[test]
    fn target_behind_wall_is_hidden() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let targets = [
            Target { track_id: 1, position: Vector3::new(0.0, 4.0, 2.0), suppressed: false },
            Target { track_id: 2, position: Vector3::new(3.0, 4.0, 2.0), suppressed: false },
            Target { track_id: 3, position: Vector3::new(0.0, 1.0, 2.0), suppressed: true },
        ];
        let dets = lidar_detect(0.0, &Vector3::zeros(), &targets, &[wall()], 0.1, &mut rng);
        assert_eq!(dets.iter().map(|d| d.track_id).collect::<Vec<_>>(), vec![2]);
    }
}
