//! Sliding-window estimation of the LiDAR-to-VIO frame transform.
//!
//! Detections of the secondary agent (frame `L`) are paired with its VIO
//! positions (frame `V`) and the 4-DOF transform `p_V = R(θ)·d_L + t` is fitted
//! with Levenberg–Marquardt under a soft-L1 loss. Rotation is parametrized about
//! the centroid of the LiDAR points, which decouples heading from translation and
//! makes the Fisher information independent of where the window sits in space.

use nalgebra::{Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    rotate_yaw, wrap, yaw_rotation_derivative, Detection, FrameId, RelativeTransform, TimedPose,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignmentError {
    #[error("insufficient correspondences: {found} < {required}")]
    InsufficientCorrespondences { found: usize, required: usize },
    #[error("squared residual must be non-negative, got {0}")]
    NegativeSquaredResidual(f64),
    #[error("window must be positive, got {0}")]
    InvalidWindow(f64),
}

/// Paired LiDAR and VIO positions of the secondary agent at one stamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub stamp: f64,
    pub lidar_position: Vector3<f64>,
    pub vio_position: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmConfig {
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            initial_damping: 1e-4,
            damping_increase: 2.0,
            damping_decrease: 3.0,
            max_iterations: 100,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignmentConfig {
    /// Sliding window length (s).
    pub window: f64,
    pub min_correspondences: usize,
    /// Detections further apart than this (s) are not interpolated between.
    pub max_detection_gap: f64,
    /// Allowed extrapolation past either end of the detection buffer (s).
    pub interpolation_tolerance: f64,
    /// Residual scale `a` (m) of the optimized loss `a²·ρ(s/a²)`; `1.0` is the
    /// plain soft-L1.
    pub loss_scale: f64,
    /// Upper bound on the mean robustified residual `ρ(s)` of an accepted solution.
    pub cost_threshold: f64,
    /// Minimum VIO path length inside the window (m).
    pub min_path_length: f64,
    /// Minimum eigenvalue of the Fisher information `JᵀJ`.
    pub min_eigenvalue: f64,
    /// Largest heading difference (rad) between the fitted transform and a fit
    /// that also models a constant VIO drift velocity. Larger gaps mean drift
    /// leaked into the rotation and the window is rejected.
    pub max_drift_heading_gap: f64,
    pub lm: LmConfig,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            window: 15.0,
            min_correspondences: 10,
            max_detection_gap: 0.5,
            interpolation_tolerance: 0.1,
            loss_scale: 0.1,
            cost_threshold: 0.09,
            min_path_length: 1.0,
            min_eigenvalue: 1.0,
            max_drift_heading_gap: 0.05,
            lm: LmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentResult {
    /// Maps `L` into `V`.
    pub transform: RelativeTransform,
    pub converged: bool,
    /// Mean of `ρ(‖r_i‖²)` over the correspondences.
    pub final_cost: f64,
    pub min_eigenvalue: f64,
    pub iterations: usize,
    /// Length of the VIO trajectory covered by the correspondences (m).
    pub path_length: f64,
    pub correspondences: usize,
}

/// Pairs every VIO pose inside the window with the detection track
/// interpolated to its stamp.
///
/// The window ends at the newest VIO stamp. VIO stamps not bracketed by two
/// detections at most `max_detection_gap` apart (or within
/// `interpolation_tolerance` of either end of the track) are skipped.
pub fn build_correspondences(
    detections: &[Detection],
    vio_buffer: &[TimedPose],
    config: &AlignmentConfig,
) -> Result<Vec<Correspondence>, AlignmentError> {
    if !(config.window > 0.0) {
        return Err(AlignmentError::InvalidWindow(config.window));
    }
    let insufficient = |found| AlignmentError::InsufficientCorrespondences {
        found,
        required: config.min_correspondences,
    };
    let (Some(newest), false) = (vio_buffer.last(), detections.is_empty()) else {
        return Err(insufficient(0));
    };
    let start = newest.stamp - config.window;
    let first = detections[0].stamp;
    let last = detections[detections.len() - 1].stamp;
    let tol = config.interpolation_tolerance;

    let mut out = Vec::new();
    let begin = vio_buffer.partition_point(|p| p.stamp < start);
    for pose in &vio_buffer[begin..] {
        let t = pose.stamp;
        if t < first - tol || t > last + tol {
            continue;
        }
        let upper = detections.partition_point(|d| d.stamp <= t);
        let lidar_position = if upper > 0 && detections[upper - 1].stamp == t {
            detections[upper - 1].position
        } else if upper == 0 || upper == detections.len() {
            // within tolerance of one end; extrapolate from the end segment
            if detections.len() < 2 {
                detections[0].position
            } else {
                let (a, b) = if upper == 0 {
                    (&detections[0], &detections[1])
                } else {
                    (&detections[detections.len() - 2], &detections[detections.len() - 1])
                };
                if b.stamp - a.stamp > config.max_detection_gap {
                    continue;
                }
                a.position + (b.position - a.position) * ((t - a.stamp) / (b.stamp - a.stamp))
            }
        } else {
            let (a, b) = (&detections[upper - 1], &detections[upper]);
            if b.stamp - a.stamp > config.max_detection_gap {
                continue;
            }
            a.position + (b.position - a.position) * ((t - a.stamp) / (b.stamp - a.stamp))
        };
        out.push(Correspondence { stamp: t, lidar_position, vio_position: pose.position });
    }
    if out.len() < config.min_correspondences {
        return Err(insufficient(out.len()));
    }
    Ok(out)
}

/// Soft-L1 loss `ρ(s) = 2(√(1+s) − 1)` of a squared residual.
pub fn soft_l1(s: f64) -> Result<f64, AlignmentError> {
    if s < 0.0 || s.is_nan() {
        return Err(AlignmentError::NegativeSquaredResidual(s));
    }
    Ok(rho(s))
}

#[inline]
fn rho(s: f64) -> f64 {
    // 2(√(1+s) − 1) without cancellation for small s
    2.0 * s / ((1.0 + s).sqrt() + 1.0)
}

#[inline]
fn rho_prime(s: f64) -> f64 {
    1.0 / (1.0 + s).sqrt()
}

/// Starting point for the solver: the previous accepted transform if any,
/// otherwise the centroid offset with zero heading.
pub fn initial_guess(corrs: &[Correspondence], previous: Option<&RelativeTransform>) -> RelativeTransform {
    if let Some(prev) = previous {
        return *prev;
    }
    let n = corrs.len().max(1) as f64;
    let d: Vector3<f64> = corrs.iter().map(|c| c.lidar_position).sum::<Vector3<f64>>() / n;
    let p: Vector3<f64> = corrs.iter().map(|c| c.vio_position).sum::<Vector3<f64>>() / n;
    let mut t = RelativeTransform::identity(FrameId::L, FrameId::V);
    t.translation = p - d;
    t
}

/// Problem in centroid-relative form: `r_i = R(θ)·(d_i − d̄) + u − p_i`,
/// where `u = t + R(θ)·d̄`.
struct CenteredProblem<'a> {
    corrs: &'a [Correspondence],
    centroid: Vector3<f64>,
    /// `1 / a²`
    inv_scale_sq: f64,
}

impl CenteredProblem<'_> {
    fn residual(&self, c: &Correspondence, x: &Vector4<f64>) -> Vector3<f64> {
        let u = Vector3::new(x[0], x[1], x[2]);
        rotate_yaw(x[3], &(c.lidar_position - self.centroid)) + u - c.vio_position
    }

    /// ½ Σ a²·ρ(‖r_i‖²/a²)
    fn cost(&self, x: &Vector4<f64>) -> f64 {
        let k = self.inv_scale_sq;
        0.5 * self.corrs.iter().map(|c| rho(self.residual(c, x).norm_squared() * k)).sum::<f64>() / k
    }

    /// Mean of the unscaled `ρ(‖r_i‖²)`.
    fn mean_rho(&self, x: &Vector4<f64>) -> f64 {
        self.corrs.iter().map(|c| rho(self.residual(c, x).norm_squared())).sum::<f64>()
            / self.corrs.len() as f64
    }

    /// Reweighted normal equations: `(Σ w_i J_iᵀJ_i, Σ w_i J_iᵀ r_i)` with `w_i = ρ'(s_i)`.
    fn normal_equations(&self, x: &Vector4<f64>) -> (Matrix4<f64>, Vector4<f64>) {
        let dr = yaw_rotation_derivative(x[3]);
        let mut h = Matrix4::zeros();
        let mut g = Vector4::zeros();
        for c in self.corrs {
            let r = self.residual(c, x);
            let w = rho_prime(r.norm_squared() * self.inv_scale_sq);
            let jt = dr * (c.lidar_position - self.centroid);
            // J = [I₃ | jt]
            for a in 0..3 {
                h[(a, a)] += w;
                h[(a, 3)] += w * jt[a];
                g[a] += w * r[a];
            }
            h[(3, 3)] += w * jt.norm_squared();
            g[3] += w * jt.dot(&r);
        }
        for a in 0..3 {
            h[(3, a)] = h[(a, 3)];
        }
        (h, g)
    }

    /// Unweighted `JᵀJ` at `x`.
    fn fisher_information(&self, x: &Vector4<f64>) -> Matrix4<f64> {
        let dr = yaw_rotation_derivative(x[3]);
        let mut f = Matrix4::zeros();
        for c in self.corrs {
            let jt = dr * (c.lidar_position - self.centroid);
            for a in 0..3 {
                f[(a, a)] += 1.0;
                f[(a, 3)] += jt[a];
                f[(3, a)] += jt[a];
            }
            f[(3, 3)] += jt.norm_squared();
        }
        f
    }
}

/// Fits the `L → V` transform to `corrs` by Levenberg–Marquardt on
/// `½ Σ ρ(‖R(θ)·d_i + t − p_i‖²)`.
///
/// Non-convergence is reported through [`AlignmentResult::converged`]; a
/// converged solution whose mean robustified residual exceeds
/// `config.cost_threshold` is also marked as not converged.
pub fn solve_alignment(
    corrs: &[Correspondence],
    initial: &RelativeTransform,
    config: &AlignmentConfig,
) -> Result<AlignmentResult, AlignmentError> {
    solve_traced(corrs, initial, config, |_| {})
}

/// [`solve_alignment`], reporting the objective after every accepted step.
fn solve_traced(
    corrs: &[Correspondence],
    initial: &RelativeTransform,
    config: &AlignmentConfig,
    mut on_accept: impl FnMut(f64),
) -> Result<AlignmentResult, AlignmentError> {
    if corrs.len() < config.min_correspondences || corrs.is_empty() {
        return Err(AlignmentError::InsufficientCorrespondences {
            found: corrs.len(),
            required: config.min_correspondences,
        });
    }
    let n = corrs.len() as f64;
    let centroid = corrs.iter().map(|c| c.lidar_position).sum::<Vector3<f64>>() / n;
    let problem = CenteredProblem { corrs, centroid, inv_scale_sq: 1.0 / (config.loss_scale * config.loss_scale) };
    let lm = &config.lm;

    let theta0 = wrap(initial.heading());
    let u0 = initial.translation + rotate_yaw(theta0, &centroid);
    let mut x = Vector4::new(u0.x, u0.y, u0.z, theta0);
    let mut cost = problem.cost(&x);
    let mut damping = lm.initial_damping;
    let mut iterations = 0;
    let mut tolerance_met = false;

    'outer: while iterations < lm.max_iterations {
        let (h, g) = problem.normal_equations(&x);
        if g.amax() <= lm.gradient_tolerance {
            tolerance_met = true;
            break;
        }
        loop {
            iterations += 1;
            let mut damped = h;
            for a in 0..4 {
                damped[(a, a)] += damping * h[(a, a)].max(1e-9);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-g))) else {
                damping *= lm.damping_increase;
                if iterations >= lm.max_iterations {
                    break 'outer;
                }
                continue;
            };
            if step.norm() <= lm.step_tolerance * (x.norm() + lm.step_tolerance) {
                tolerance_met = true;
                break 'outer;
            }
            let candidate = x + step;
            let candidate_cost = problem.cost(&candidate);
            if candidate_cost < cost {
                x = candidate;
                x[3] = wrap(x[3]);
                cost = candidate_cost;
                on_accept(cost);
                damping /= lm.damping_decrease;
                continue 'outer;
            }
            damping *= lm.damping_increase;
            if iterations >= lm.max_iterations || !damping.is_finite() {
                break 'outer;
            }
        }
    }

    let theta = wrap(x[3]);
    let u = Vector3::new(x[0], x[1], x[2]);
    let translation = u - rotate_yaw(theta, &centroid);
    let final_cost = problem.mean_rho(&x);
    let eigen = problem.fisher_information(&x).symmetric_eigenvalues();
    let min_eigenvalue = eigen.min();
    let path_length = corrs.windows(2).map(|w| (w[1].vio_position - w[0].vio_position).norm()).sum();
    let converged = tolerance_met && final_cost.is_finite() && final_cost <= config.cost_threshold;

    let mut transform = RelativeTransform::new(translation, theta, FrameId::L, FrameId::V)
        .unwrap_or_else(|_| RelativeTransform::identity(FrameId::L, FrameId::V));
    transform.stamp = corrs[corrs.len() - 1].stamp;
    transform.valid = converged;
    transform.final_cost = final_cost;
    transform.min_eigenvalue = min_eigenvalue;

    Ok(AlignmentResult {
        transform,
        converged,
        final_cost,
        min_eigenvalue,
        iterations,
        path_length,
        correspondences: corrs.len(),
    })
}

/// Accepts a solution only if it converged below the cost threshold and the
/// window carried enough motion to observe the transform.
pub fn degeneracy_check(result: &AlignmentResult, min_path_length: f64, min_eig: f64) -> bool {
    result.converged && result.path_length >= min_path_length && result.min_eigenvalue >= min_eig
}

/// Builds correspondences, solves, and applies the degeneracy check.
/// Returns the result together with its acceptance.
pub fn align_window(
    detections: &[Detection],
    vio_buffer: &[TimedPose],
    previous: Option<&RelativeTransform>,
    config: &AlignmentConfig,
) -> Result<(AlignmentResult, bool), AlignmentError> {
    let corrs = build_correspondences(detections, vio_buffer, config)?;
    let initial = initial_guess(&corrs, previous);
    let result = solve_alignment(&corrs, &initial, config)?;
    let accepted = degeneracy_check(&result, config.min_path_length, config.min_eigenvalue)
        && drift_heading(&corrs).is_some_and(|h| {
            wrap(h - result.transform.heading()).abs() <= config.max_drift_heading_gap
        });
    Ok((result, accepted))
}

/// Closed-form heading of the model `p_V = R(θ)·d_L + t + b·τ` in the
/// horizontal plane, where `b` is a constant drift velocity.
///
/// Solved as linear least squares in complex form with the scale of `R`
/// left free. `None` when time and position are too close to collinear.
pub fn drift_heading(corrs: &[Correspondence]) -> Option<f64> {
    if corrs.len() < 3 {
        return None;
    }
    let n = corrs.len() as f64;
    let mean_t = corrs.iter().map(|c| c.stamp).sum::<f64>() / n;
    let mean_l = corrs.iter().map(|c| c.lidar_position).sum::<Vector3<f64>>() / n;
    let mean_v = corrs.iter().map(|c| c.vio_position).sum::<Vector3<f64>>() / n;
    // complex numbers as (re, im)
    let (mut a, mut d) = (0.0, 0.0);
    let (mut b, mut u, mut w) = ([0.0; 2], [0.0; 2], [0.0; 2]);
    for c in corrs {
        let s = c.stamp - mean_t;
        let l = c.lidar_position - mean_l;
        let v = c.vio_position - mean_v;
        a += l.x * l.x + l.y * l.y;
        d += s * s;
        // conj(l)·s, conj(l)·v, s·v
        b[0] += l.x * s;
        b[1] -= l.y * s;
        u[0] += l.x * v.x + l.y * v.y;
        u[1] += l.x * v.y - l.y * v.x;
        w[0] += s * v.x;
        w[1] += s * v.y;
    }
    let det = a * d - (b[0] * b[0] + b[1] * b[1]);
    if !(det > 1e-9 * a * d) {
        return None;
    }
    // numerator of the rotation coefficient: d·u − b·w
    let re = d * u[0] - (b[0] * w[0] - b[1] * w[1]);
    let im = d * u[1] - (b[0] * w[1] + b[1] * w[0]);
    Some(wrap(im.atan2(re)))
}

/// Closed-form least-squares yaw-constrained alignment mapping `source` points
/// onto `target` points (`target ≈ R(θ)·source + t`).
///
/// Returns `None` for fewer than one pair or mismatched lengths.
pub fn closed_form_yaw_alignment(
    source: &[Vector3<f64>],
    target: &[Vector3<f64>],
) -> Option<(Vector3<f64>, f64)> {
    if source.is_empty() || source.len() != target.len() {
        return None;
    }
    let n = source.len() as f64;
    let sc = source.iter().sum::<Vector3<f64>>() / n;
    let tc = target.iter().sum::<Vector3<f64>>() / n;
    let (mut cross, mut dot) = (0.0, 0.0);
    for (s, t) in source.iter().zip(target) {
        let a = s - sc;
        let b = t - tc;
        cross += a.x * b.y - a.y * b.x;
        dot += a.x * b.x + a.y * b.y;
    }
    let theta = wrap(cross.atan2(dot));
    Some((tc - rotate_yaw(theta, &sc), theta))
}

/// Fisher information of a correspondence set in the centroid-relative
/// parametrization, for callers that want the raw matrix.
pub fn fisher_information(corrs: &[Correspondence], heading: f64) -> Matrix4<f64> {
    let n = corrs.len().max(1) as f64;
    let centroid = corrs.iter().map(|c| c.lidar_position).sum::<Vector3<f64>>() / n;
    CenteredProblem { corrs, centroid, inv_scale_sq: 1.0 }.fisher_information(&Vector4::new(0.0, 0.0, 0.0, heading))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn circle_points(n: usize, radius: f64) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|i| {
                let a = i as f64 / n as f64 * 2.0 * PI;
                Vector3::new(radius * a.cos() + 1.0, radius * a.sin() - 2.0, 1.5 + 0.1 * a.sin())
            })
            .collect()
    }

    fn corrs_for(lidar: &[Vector3<f64>], t: Vector3<f64>, theta: f64) -> Vec<Correspondence> {
        lidar
            .iter()
            .enumerate()
            .map(|(i, d)| Correspondence {
                stamp: i as f64 * 0.1,
                lidar_position: *d,
                vio_position: rotate_yaw(theta, d) + t,
            })
            .collect()
    }

    #[test]
    fn soft_l1_examples() {
        assert_eq!(soft_l1(0.0).unwrap(), 0.0);
        assert_relative_eq!(soft_l1(3.0).unwrap(), 2.0, epsilon = 1e-15);
        assert_relative_eq!(soft_l1(8.0).unwrap(), 4.0, epsilon = 1e-15);
        assert!(soft_l1(-1e-3).is_err());
        assert_relative_eq!(soft_l1(1e-8).unwrap(), 1e-8, max_relative = 1e-7);
    }

    #[test]
    fn soft_l1_ratio_is_non_increasing() {
        let mut prev = f64::INFINITY;
        for k in 1..2000 {
            let s = k as f64 * 0.01;
            let ratio = soft_l1(s).unwrap() / s;
            assert!(ratio <= prev + 1e-15);
            prev = ratio;
        }
    }

    #[test]
    fn identity_case() {
        let pts = circle_points(20, 2.0);
        let corrs = corrs_for(&pts, Vector3::zeros(), 0.0);
        let init = RelativeTransform::identity(FrameId::L, FrameId::V);
        let res = solve_alignment(&corrs, &init, &AlignmentConfig::default()).unwrap();
        assert!(res.converged);
        assert!(res.transform.translation.norm() < 1e-12);
        assert!(res.transform.heading().abs() < 1e-12);
        assert!(res.final_cost < 1e-20);
    }

    #[test]
    fn noiseless_circle_recovers_known_transform() {
        let pts = circle_points(50, 4.0);
        let t_star = Vector3::new(3.0, -7.5, 0.4);
        let theta_star = 2.2;
        let corrs = corrs_for(&pts, t_star, theta_star);
        let config = AlignmentConfig::default();
        let res = solve_alignment(&corrs, &initial_guess(&corrs, None), &config).unwrap();
        assert!(res.converged);
        assert!((res.transform.translation - t_star).norm() < 1e-6);
        assert!((res.transform.heading() - theta_star).abs() < 1e-8);

        let vio: Vec<_> = corrs.iter().map(|c| c.vio_position).collect();
        let (t_cf, th_cf) = closed_form_yaw_alignment(&pts, &vio).unwrap();
        assert!((res.transform.translation - t_cf).norm() < 1e-6);
        assert!((res.transform.heading() - th_cf).abs() < 1e-8);
    }

    #[test]
    fn drift_heading_sees_through_linear_drift() {
        // quarter circle, drift perpendicular to the mean direction of travel
        let pts: Vec<_> = circle_points(200, 4.0).into_iter().take(50).collect();
        let theta_star = -0.7;
        let drift = Vector3::new(0.3, 0.2, 0.0);
        let corrs: Vec<_> = corrs_for(&pts, Vector3::new(1.0, 2.0, 0.0), theta_star)
            .into_iter()
            .map(|c| Correspondence { vio_position: c.vio_position + drift * c.stamp, ..c })
            .collect();
        assert_relative_eq!(drift_heading(&corrs).unwrap(), theta_star, epsilon = 1e-9);

        let fitted = solve_alignment(&corrs, &initial_guess(&corrs, None), &AlignmentConfig::default()).unwrap();
        assert!(wrap(fitted.transform.heading() - theta_star).abs() > 0.05);
    }

    #[test]
    fn drift_heading_rejects_static_window() {
        let c = Correspondence { stamp: 0.0, lidar_position: Vector3::zeros(), vio_position: Vector3::zeros() };
        assert_eq!(drift_heading(&[c; 10]), None);
    }

    #[test]
    fn outliers_are_suppressed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = circle_points(50, 4.0);
        let t_star = Vector3::new(-2.0, 1.0, 0.0);
        let theta_star = -0.8;
        let mut corrs = corrs_for(&pts, t_star, theta_star);
        let mut inliers = Vec::new();
        for (i, c) in corrs.iter_mut().enumerate() {
            if i % 5 == 0 {
                let a: f64 = rng.gen_range(0.0..2.0 * PI);
                c.vio_position += Vector3::new(5.0 * a.cos(), 5.0 * a.sin(), 0.0);
            } else {
                inliers.push(*c);
            }
        }
        let config = AlignmentConfig { cost_threshold: f64::INFINITY, ..Default::default() };
        let res = solve_alignment(&corrs, &initial_guess(&corrs, None), &config).unwrap();
        let src: Vec<_> = inliers.iter().map(|c| c.lidar_position).collect();
        let dst: Vec<_> = inliers.iter().map(|c| c.vio_position).collect();
        let (t_cf, th_cf) = closed_form_yaw_alignment(&src, &dst).unwrap();
        assert!((res.transform.translation - t_cf).norm() < 0.05);
        assert!((res.transform.heading() - th_cf).abs() < 0.01);
    }

    #[test]
    fn cost_threshold_marks_non_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = circle_points(40, 3.0);
        let corrs: Vec<_> = pts
            .iter()
            .enumerate()
            .map(|(i, d)| Correspondence {
                stamp: i as f64,
                lidar_position: *d,
                vio_position: Vector3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), 0.0),
            })
            .collect();
        let res = solve_alignment(&corrs, &initial_guess(&corrs, None), &AlignmentConfig::default()).unwrap();
        assert!(res.final_cost > 0.09);
        assert!(!res.converged);
        assert!(!res.transform.valid);
    }

    #[test]
    fn accepted_steps_never_increase_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let pts = circle_points(40, rng.gen_range(0.5..5.0));
            let mut corrs = corrs_for(&pts, Vector3::new(rng.gen_range(-9.0..9.0), 2.0, 0.0), rng.gen_range(-3.0..3.0));
            for c in corrs.iter_mut() {
                c.vio_position += Vector3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), 0.0);
            }
            let init = initial_guess(&corrs, None);
            let mut history = vec![CenteredProblem {
                corrs: &corrs,
                centroid: corrs.iter().map(|c| c.lidar_position).sum::<Vector3<f64>>() / corrs.len() as f64,
                inv_scale_sq: 1.0,
            }
            .cost(&{
                let th = init.heading();
                let centroid = corrs.iter().map(|c| c.lidar_position).sum::<Vector3<f64>>() / corrs.len() as f64;
                let u = init.translation + rotate_yaw(th, &centroid);
                Vector4::new(u.x, u.y, u.z, th)
            })];
            solve_traced(&corrs, &init, &AlignmentConfig::default(), |c| history.push(c)).unwrap();
            assert!(history.len() > 1);
            assert!(history.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn min_eigenvalue_invariant_under_translation() {
        let pts = circle_points(30, 2.0);
        let corrs = corrs_for(&pts, Vector3::new(1.0, 2.0, 3.0), 0.4);
        let shift = Vector3::new(120.0, -45.0, 7.0);
        let moved: Vec<_> = corrs
            .iter()
            .map(|c| Correspondence { lidar_position: c.lidar_position + shift, vio_position: c.vio_position + shift, ..*c })
            .collect();
        let config = AlignmentConfig::default();
        let a = solve_alignment(&corrs, &initial_guess(&corrs, None), &config).unwrap();
        let b = solve_alignment(&moved, &initial_guess(&moved, None), &config).unwrap();
        assert_relative_eq!(a.min_eigenvalue, b.min_eigenvalue, max_relative = 1e-9);
    }

    #[test]
    fn insufficient_correspondences_error() {
        let pts = circle_points(5, 1.0);
        let corrs = corrs_for(&pts, Vector3::zeros(), 0.0);
        let init = RelativeTransform::identity(FrameId::L, FrameId::V);
        assert!(matches!(
            solve_alignment(&corrs, &init, &AlignmentConfig::default()),
            Err(AlignmentError::InsufficientCorrespondences { found: 5, required: 10 })
        ));
    }

    #[test]
    fn single_point_is_degenerate() {
        let corrs: Vec<_> = (0..30)
            .map(|i| Correspondence {
                stamp: i as f64 * 0.1,
                lidar_position: Vector3::new(2.0, 1.0, 1.0),
                vio_position: Vector3::new(2.0, 1.0, 1.0),
            })
            .collect();
        let res = solve_alignment(&corrs, &initial_guess(&corrs, None), &AlignmentConfig::default()).unwrap();
        assert!(res.min_eigenvalue.abs() < 1e-9);
        assert!(!degeneracy_check(&res, 1.0, 1.0));
    }

    #[test]
    fn build_correspondences_examples() {
        let dets = [
            Detection::new(0.0, 1, Vector3::zeros(), 0.1),
            Detection::new(1.0, 1, Vector3::new(2.0, 0.0, 0.0), 0.1),
        ];
        let vio = [TimedPose::new(0.5, FrameId::V, Vector3::new(9.0, 9.0, 9.0), 0.0)];
        let config = AlignmentConfig { min_correspondences: 1, max_detection_gap: 2.0, ..Default::default() };
        let c = build_correspondences(&dets, &vio, &config).unwrap();
        assert_eq!(c.len(), 1);
        assert_relative_eq!(c[0].lidar_position, Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(c[0].vio_position, Vector3::new(9.0, 9.0, 9.0));

        // outside the detection span by more than the tolerance
        let vio = [
            TimedPose::new(0.5, FrameId::V, Vector3::zeros(), 0.0),
            TimedPose::new(1.5, FrameId::V, Vector3::zeros(), 0.0),
        ];
        let c = build_correspondences(&dets, &vio, &config).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].stamp, 0.5);
    }

    #[test]
    fn build_correspondences_identical_stamps_and_minimum() {
        let dets: Vec<_> = (0..20)
            .map(|i| Detection::new(i as f64 * 0.1, 1, Vector3::new(i as f64 * 0.37, 1.0, 0.0), 0.1))
            .collect();
        let vio: Vec<_> = dets
            .iter()
            .map(|d| TimedPose::new(d.stamp, FrameId::V, d.position * 2.0, 0.0))
            .collect();
        let c = build_correspondences(&dets, &vio, &AlignmentConfig::default()).unwrap();
        assert_eq!(c.len(), 20);
        for (c, d) in c.iter().zip(&dets) {
            assert_eq!(c.lidar_position, d.position);
        }
        let config = AlignmentConfig { min_correspondences: 21, ..Default::default() };
        assert!(matches!(
            build_correspondences(&dets, &vio, &config),
            Err(AlignmentError::InsufficientCorrespondences { found: 20, required: 21 })
        ));
    }

    #[test]
    fn build_correspondences_skips_detection_gaps() {
        let dets = [
            Detection::new(0.0, 1, Vector3::zeros(), 0.1),
            Detection::new(0.1, 1, Vector3::zeros(), 0.1),
            Detection::new(5.0, 1, Vector3::zeros(), 0.1),
            Detection::new(5.1, 1, Vector3::zeros(), 0.1),
        ];
        let vio: Vec<_> = (0..52).map(|i| TimedPose::new(i as f64 * 0.1, FrameId::V, Vector3::zeros(), 0.0)).collect();
        let config = AlignmentConfig { min_correspondences: 1, ..Default::default() };
        let c = build_correspondences(&dets, &vio, &config).unwrap();
        assert!(c.iter().all(|c| c.stamp <= 0.2 + 1e-9 || c.stamp >= 4.9 - 1e-9));
    }
}
