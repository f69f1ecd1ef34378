use nalgebra::{SMatrix, SVector};

use super::{
    MeasurementData, ProcessNoise, StateMatrix, TrackerError, TrackerState, HEADING, HEADING_RATE,
    POS, STATE_DIM, VEL,
};
use crate::geometry::wrap;
use crate::tracker::Measurement;

/// Advances the state by `dt` under the constant-velocity model.
pub fn predict(state: &TrackerState, dt: f64, noise: &ProcessNoise) -> Result<TrackerState, TrackerError> {
    if dt < 0.0 || dt.is_nan() {
        return Err(TrackerError::NegativeTimeStep(dt));
    }
    if dt == 0.0 {
        return Ok(*state);
    }
    let mut f = StateMatrix::identity();
    for a in 0..3 {
        f[(POS + a, VEL + a)] = dt;
    }
    f[(HEADING, HEADING_RATE)] = dt;

    let mut mean = f * state.mean;
    mean[HEADING] = wrap(mean[HEADING]);

    let (dt2, dt3) = (dt * dt, dt * dt * dt);
    let mut q = StateMatrix::zeros();
    let mut block = |p: usize, v: usize, var: f64| {
        q[(p, p)] += var * dt3 / 3.0;
        q[(p, v)] += var * dt2 / 2.0;
        q[(v, p)] += var * dt2 / 2.0;
        q[(v, v)] += var * dt;
    };
    let sa = noise.acceleration_sigma * noise.acceleration_sigma;
    for a in 0..3 {
        block(POS + a, VEL + a, sa);
    }
    let sh = noise.heading_acceleration_sigma * noise.heading_acceleration_sigma;
    block(HEADING, HEADING_RATE, sh);

    let covariance = symmetrize(f * state.covariance * f.transpose() + q);
    Ok(TrackerState { stamp: state.stamp + dt, mean, covariance })
}

/// Kalman correction with a measurement taken at the state's stamp.
pub fn update(state: &TrackerState, z: &Measurement) -> Result<TrackerState, TrackerError> {
    if (z.stamp - state.stamp).abs() > 1e-9 {
        return Err(TrackerError::StampMismatch { state: state.stamp, measurement: z.stamp });
    }
    match &z.data {
        MeasurementData::LidarPosition { position, covariance } => {
            let mut h = SMatrix::<f64, 3, STATE_DIM>::zeros();
            for a in 0..3 {
                h[(a, POS + a)] = 1.0;
            }
            correct(state, &h, position, covariance, None)
        }
        MeasurementData::VioFull { value, covariance } => {
            let h = SMatrix::<f64, STATE_DIM, STATE_DIM>::identity();
            correct(state, &h, value, covariance, Some(HEADING))
        }
        MeasurementData::VioHeadingOnly { value, covariance } => {
            let mut h = SMatrix::<f64, 2, STATE_DIM>::zeros();
            h[(0, HEADING)] = 1.0;
            h[(1, HEADING_RATE)] = 1.0;
            correct(state, &h, value, covariance, Some(0))
        }
    }
}

/// Innovation `y = z − H·x` with the heading row wrapped, and its covariance.
pub(super) fn innovation<const M: usize>(
    state: &TrackerState,
    h: &SMatrix<f64, M, STATE_DIM>,
    z: &SVector<f64, M>,
    r: &SMatrix<f64, M, M>,
    heading_row: Option<usize>,
) -> (SVector<f64, M>, SMatrix<f64, M, M>) {
    let mut y = z - h * state.mean;
    if let Some(k) = heading_row {
        y[k] = wrap(y[k]);
    }
    let s = h * state.covariance * h.transpose() + r;
    (y, symmetrize(s))
}

fn correct<const M: usize>(
    state: &TrackerState,
    h: &SMatrix<f64, M, STATE_DIM>,
    z: &SVector<f64, M>,
    r: &SMatrix<f64, M, M>,
    heading_row: Option<usize>,
) -> Result<TrackerState, TrackerError> {
    let (y, s) = innovation(state, h, z, r, heading_row);
    let chol = s.cholesky().ok_or(TrackerError::SingularInnovation)?;
    // K = P Hᵀ S⁻¹, computed as (S⁻¹ H P)ᵀ
    let k = chol.solve(&(h * state.covariance)).transpose();

    let mut mean = state.mean + k * y;
    mean[HEADING] = wrap(mean[HEADING]);

    // Joseph form
    let ikh = StateMatrix::identity() - k * h;
    let covariance = symmetrize(ikh * state.covariance * ikh.transpose() + k * r * k.transpose());
    Ok(TrackerState { stamp: state.stamp, mean, covariance })
}

pub(super) fn symmetrize<const N: usize>(m: SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}
