//! Fixed-interval (forward filter + backward pass) Kalman smoothing with a
//! constant-acceleration motion model driven by white jerk noise.
//!
//! The two axes are independent and share the same noise model, so the
//! covariance recursion is run once and applied to a `3 x 2` state matrix
//! whose columns are the x and y axes.

use nalgebra::{Matrix3, Matrix3x2, RowVector2, Vector3};
use thiserror::Error;

use crate::geometry::Point2;
use crate::trajectory::{Track, TrackSample, OBSERVED_LEN, SAMPLE_PERIOD};

/// Headings are only computed from velocities faster than this (m/s).
pub const MIN_HEADING_SPEED: f64 = 0.1;

const INITIAL_STD: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum SmoothError {
    #[error("smoothing needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("invalid smoother config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmootherConfig {
    /// Standard deviation of the white jerk input (m/s^3).
    pub sigma_jerk: f64,
    /// Standard deviation of the position measurement (m).
    pub sigma_meas: f64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self {
            sigma_jerk: 2.0,
            sigma_meas: 0.5,
        }
    }
}

impl SmootherConfig {
    pub fn new(sigma_jerk: f64, sigma_meas: f64) -> Result<Self, SmoothError> {
        let cfg = Self {
            sigma_jerk,
            sigma_meas,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SmoothError> {
        if !(self.sigma_jerk > 0.0 && self.sigma_jerk.is_finite()) {
            return Err(SmoothError::Config(format!(
                "sigma_jerk must be > 0, got {}",
                self.sigma_jerk
            )));
        }
        if !(self.sigma_meas > 0.0 && self.sigma_meas.is_finite()) {
            return Err(SmoothError::Config(format!(
                "sigma_meas must be > 0, got {}",
                self.sigma_meas
            )));
        }
        Ok(())
    }
}

/// Which samples the smoother may consume.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    /// Only the first [`OBSERVED_LEN`] samples; the output covers just those.
    Observed,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedTrack {
    pub ticks: Vec<i64>,
    pub position: Vec<Point2>,
    pub velocity: Vec<Point2>,
    pub acceleration: Vec<Point2>,
    /// Heading of the velocity, held at the last valid value while the speed
    /// is at most [`MIN_HEADING_SPEED`]; `None` until the first valid value.
    pub heading: Vec<Option<f64>>,
}

impl SmoothedTrack {
    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    pub fn index_of_tick(&self, tick: i64) -> Option<usize> {
        self.ticks.binary_search(&tick).ok()
    }

    /// Copy with positions shifted by `offset`; velocities are untouched.
    pub fn translated(&self, offset: Point2) -> SmoothedTrack {
        SmoothedTrack {
            position: self.position.iter().map(|&p| p + offset).collect(),
            ..self.clone()
        }
    }
}

pub fn smooth_track(
    track: &Track,
    config: &SmootherConfig,
    horizon: Horizon,
) -> Result<SmoothedTrack, SmoothError> {
    let samples = match horizon {
        Horizon::Full => &track.samples[..],
        Horizon::Observed => &track.samples[..track.len().min(OBSERVED_LEN)],
    };
    smooth_samples(samples, config)
}

/// Smooths an arbitrary time-sorted run of samples; gaps in the tick sequence
/// are handled by propagating over the actual elapsed time.
pub fn smooth_samples(
    samples: &[TrackSample],
    config: &SmootherConfig,
) -> Result<SmoothedTrack, SmoothError> {
    config.validate()?;
    let n = samples.len();
    if n < 2 {
        return Err(SmoothError::TooFewSamples(n));
    }
    let r = config.sigma_meas * config.sigma_meas;
    let q = config.sigma_jerk * config.sigma_jerk;
    let z = |k: usize| RowVector2::new(samples[k].position.x, samples[k].position.y);
    let dt = |k: usize| (samples[k].tick - samples[k - 1].tick) as f64 * SAMPLE_PERIOD;

    // Diffuse prior around the first measurement, with the velocity taken
    // from the first difference.
    let v0 = (z(1) - z(0)) / dt(1);
    let mut x = Matrix3x2::zeros();
    x.set_row(0, &z(0));
    x.set_row(1, &v0);
    let mut p = Matrix3::from_diagonal_element(INITIAL_STD * INITIAL_STD);

    let mut filtered = Vec::with_capacity(n);
    let mut filtered_cov = Vec::with_capacity(n);
    let mut predicted = Vec::with_capacity(n);
    let mut predicted_cov = Vec::with_capacity(n);
    let mut transitions = Vec::with_capacity(n);

    for k in 0..n {
        let (xp, pp, f) = if k == 0 {
            (x, p, Matrix3::identity())
        } else {
            let h = dt(k);
            let f = transition(h);
            (f * x, f * p * f.transpose() + process_noise(h, q), f)
        };
        let s = pp[(0, 0)] + r;
        let gain: Vector3<f64> = pp.column(0) / s;
        let innovation = z(k) - xp.row(0);
        x = xp + gain * innovation;
        // Joseph form keeps the covariance symmetric positive definite.
        let mut ikh = Matrix3::identity();
        ikh.set_column(0, &(ikh.column(0) - gain));
        p = ikh * pp * ikh.transpose() + gain * gain.transpose() * r;

        filtered.push(x);
        filtered_cov.push(p);
        predicted.push(xp);
        predicted_cov.push(pp);
        transitions.push(f);
    }

    let mut smoothed = filtered.clone();
    for k in (0..n - 1).rev() {
        let f = transitions[k + 1];
        let chol = predicted_cov[k + 1]
            .cholesky()
            .expect("predicted covariance is positive definite");
        // gain = P_k F^T Pp^-1, obtained as (Pp^-1 F P_k)^T
        let gain = chol.solve(&(f * filtered_cov[k])).transpose();
        smoothed[k] = filtered[k] + gain * (smoothed[k + 1] - predicted[k + 1]);
    }

    let row = |m: &Matrix3x2<f64>, i: usize| Point2::new(m[(i, 0)], m[(i, 1)]);
    let position: Vec<Point2> = smoothed.iter().map(|m| row(m, 0)).collect();
    let velocity: Vec<Point2> = smoothed.iter().map(|m| row(m, 1)).collect();
    let acceleration: Vec<Point2> = smoothed.iter().map(|m| row(m, 2)).collect();
    let heading = headings(&velocity);
    Ok(SmoothedTrack {
        ticks: samples.iter().map(|s| s.tick).collect(),
        position,
        velocity,
        acceleration,
        heading,
    })
}

fn headings(velocity: &[Point2]) -> Vec<Option<f64>> {
    let mut last = None;
    velocity
        .iter()
        .map(|v| {
            if v.norm() > MIN_HEADING_SPEED {
                last = Some(v.y.atan2(v.x));
            }
            last
        })
        .collect()
}

fn transition(h: f64) -> Matrix3<f64> {
    Matrix3::new(1.0, h, 0.5 * h * h, 0.0, 1.0, h, 0.0, 0.0, 1.0)
}

/// Covariance of the state increment produced by continuous white jerk of
/// spectral density `q` over an interval `h`.
fn process_noise(h: f64, q: f64) -> Matrix3<f64> {
    let h2 = h * h;
    let h3 = h2 * h;
    let h4 = h3 * h;
    let h5 = h4 * h;
    Matrix3::new(
        h5 / 20.0,
        h4 / 8.0,
        h3 / 6.0,
        h4 / 8.0,
        h3 / 3.0,
        h2 / 2.0,
        h3 / 6.0,
        h2 / 2.0,
        h,
    ) * q
}
