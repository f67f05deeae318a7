//! Constant-velocity Kalman filter over `(cx, cy, aspect, h)`.
//!
//! Noise standard deviations scale with the current box height so the same
//! coefficients behave sensibly for near and far objects.

use nalgebra::{SMatrix, SVector};

use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

pub type StateVector = SVector<f64, 8>;
pub type StateCovariance = SMatrix<f64, 8, 8>;
type MeasVector = SVector<f64, 4>;
type MeasMatrix = SMatrix<f64, 4, 8>;

const ASPECT_STD: f64 = 1e-2;
const ASPECT_VEL_STD: f64 = 1e-5;
const ASPECT_MEAS_STD: f64 = 1e-1;

/// Mean `(cx, cy, a, h, vcx, vcy, va, vh)` and its covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionState {
    pub mean: StateVector,
    pub covariance: StateCovariance,
}

impl MotionState {
    /// Box described by the position part of the mean.
    pub fn to_box(&self) -> Result<BoundingBox> {
        let (cx, cy, a, h) = (self.mean[0], self.mean[1], self.mean[2], self.mean[3]);
        if !(a > 0.0 && h > 0.0 && a.is_finite() && h.is_finite()) {
            return Err(Error::DegenerateState(format!("aspect {a}, height {h}")));
        }
        BoundingBox::from_center_aspect(cx, cy, a, h)
            .map_err(|e| Error::DegenerateState(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanFilter {
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
    pub init_position_factor: f64,
    pub init_velocity_factor: f64,
}

impl Default for KalmanFilter {
    fn default() -> Self {
        Self::from(&TrackerConfig::default())
    }
}

impl From<&TrackerConfig> for KalmanFilter {
    fn from(cfg: &TrackerConfig) -> Self {
        Self {
            std_weight_position: cfg.std_weight_position,
            std_weight_velocity: cfg.std_weight_velocity,
            init_position_factor: cfg.init_position_factor,
            init_velocity_factor: cfg.init_velocity_factor,
        }
    }
}

fn measurement(b: &BoundingBox) -> MeasVector {
    let (cx, cy) = b.center();
    MeasVector::new(cx, cy, b.aspect(), b.h())
}

fn observation() -> MeasMatrix {
    let mut h = MeasMatrix::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

fn transition() -> StateCovariance {
    let mut f = StateCovariance::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

impl KalmanFilter {
    pub fn init(&self, b: &BoundingBox) -> MotionState {
        let z = measurement(b);
        let mut mean = StateVector::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(&z);
        let h = b.h();
        let p = self.init_position_factor * self.std_weight_position * h;
        let v = self.init_velocity_factor * self.std_weight_velocity * h;
        let std = [p, p, ASPECT_STD, p, v, v, ASPECT_VEL_STD, v];
        let covariance = StateCovariance::from_diagonal(&StateVector::from_iterator(
            std.iter().map(|s| s * s),
        ));
        MotionState { mean, covariance }
    }

    pub fn predict(&self, state: &MotionState) -> MotionState {
        let h = state.mean[3].abs();
        let p = self.std_weight_position * h;
        let v = self.std_weight_velocity * h;
        let std = [p, p, ASPECT_STD, p, v, v, ASPECT_VEL_STD, v];
        let q = StateCovariance::from_diagonal(&StateVector::from_iterator(std.iter().map(|s| s * s)));
        let f = transition();
        let covariance = f * state.covariance * f.transpose() + q;
        MotionState {
            mean: f * state.mean,
            covariance: symmetrize(covariance),
        }
    }

    pub fn update(&self, state: &MotionState, measured: &BoundingBox) -> Result<MotionState> {
        let h_obs = observation();
        let h = state.mean[3].abs();
        let p = self.std_weight_position * h;
        let r = SMatrix::<f64, 4, 4>::from_diagonal(&MeasVector::new(
            p * p,
            p * p,
            ASPECT_MEAS_STD * ASPECT_MEAS_STD,
            p * p,
        ));
        let innovation = measurement(measured) - h_obs * state.mean;
        let s = h_obs * state.covariance * h_obs.transpose() + r;
        let chol = s
            .cholesky()
            .ok_or_else(|| Error::Numerical("innovation covariance is not positive definite".into()))?;
        // K = P H^T S^-1, computed as (S^-1 H P)^T since S and P are symmetric.
        let gain = chol.solve(&(h_obs * state.covariance)).transpose();
        let mean = state.mean + gain * innovation;
        let i_kh = StateCovariance::identity() - gain * h_obs;
        let covariance = i_kh * state.covariance * i_kh.transpose() + gain * r * gain.transpose();
        Ok(MotionState {
            mean,
            covariance: symmetrize(covariance),
        })
    }
}

fn symmetrize(m: StateCovariance) -> StateCovariance {
    (m + m.transpose()) * 0.5
}
