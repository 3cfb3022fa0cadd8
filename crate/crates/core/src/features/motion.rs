use super::calibration::CalibrationModel;
use super::geometry::{lateral_displacement, LateralModel, SignConvention};
use super::track::BoundingBoxTrack;
use crate::error::{Error, Result};

pub const GRID: [f64; 3] = [0.25, 0.5, 0.75];
pub const NUM_POINTS: usize = GRID.len() * GRID.len();
pub const MOTION_DIM: usize = 3 * NUM_POINTS;
pub const DEFAULT_TAU: usize = 10;
pub const MIN_TAU: usize = 4;

/// Least-squares `a0 + a1·t + a2·t²` through `values` sampled at
/// `t = 0, 1, …`.
pub fn fit_quadratic(values: &[f64]) -> Result<[f64; 3]> {
    if values.len() < 3 {
        return Err(Error::OutOfRange(format!(
            "quadratic fit needs 3 samples, got {}",
            values.len()
        )));
    }
    let mut moments = [0.0; 5];
    let mut rhs = [0.0; 3];
    for (t, &v) in values.iter().enumerate() {
        let t = t as f64;
        let powers = [1.0, t, t * t, t * t * t, t * t * t * t];
        for (m, p) in moments.iter_mut().zip(powers) {
            *m += p;
        }
        for (r, p) in rhs.iter_mut().zip(&powers[..3]) {
            *r += p * v;
        }
    }
    let mut a = [[0.0; 4]; 3];
    for i in 0..3 {
        for j in 0..3 {
            a[i][j] = moments[i + j];
        }
        a[i][3] = rhs[i];
    }
    // Gaussian elimination with partial pivoting
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .expect("non-empty range");
        a.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let tail: f64 = (i + 1..3).map(|j| a[i][j] * x[j]).sum();
        x[i] = (a[i][3] - tail) / a[i][i];
    }
    Ok(x)
}

/// Window length used at frame `t` for a nominal `tau`: shortened to the
/// frames available, never below [`MIN_TAU`].
pub fn effective_tau(t: usize, tau: usize) -> Result<usize> {
    let tau = tau.min(t + 1);
    if tau < MIN_TAU {
        return Err(Error::OutOfRange(format!(
            "motion window of {tau} frames at frame {t}; at least {MIN_TAU} required"
        )));
    }
    Ok(tau)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MotionConfig {
    pub signs: SignConvention,
    pub model: LateralModel,
}

/// Lateral displacement series of the 9 grid points over frames
/// `t−τ+1..=t` (`τ−1` values each).
pub fn lateral_series(
    track: &BoundingBoxTrack,
    cal: &CalibrationModel,
    t: usize,
    tau: usize,
    cfg: &MotionConfig,
) -> Result<Vec<Vec<f64>>> {
    if tau < MIN_TAU {
        return Err(Error::OutOfRange(format!("window of {tau} frames; at least {MIN_TAU} required")));
    }
    if t >= track.len() || t + 1 < tau {
        return Err(Error::OutOfRange(format!(
            "window of {tau} frames ending at {t} exceeds track of {} frames",
            track.len()
        )));
    }
    let boxes = (t + 1 - tau..=t)
        .map(|k| {
            track.boxes[k].ok_or_else(|| Error::InvalidTrack(format!("frame {k} has no box; smooth the track first")))
        })
        .collect::<Result<Vec<_>>>()?;
    let [ppx, ppy] = cal.principal_point;
    let mut series = Vec::with_capacity(NUM_POINTS);
    for &v in &GRID {
        for &u in &GRID {
            let values = boxes
                .windows(2)
                .map(|w| {
                    let (a, b) = (w[0].point(u, v), w[1].point(u, v));
                    let center = (0.5 * (a.0 + b.0) - ppx, 0.5 * (a.1 + b.1) - ppy);
                    lateral_displacement(cal.focal_px, center, b.0 - a.0, b.1 - a.1, &cfg.signs, cfg.model)
                })
                .collect();
            series.push(values);
        }
    }
    Ok(series)
}

/// The 27 motion features at frame `t`: every point's `a0`, then every
/// `a1`, then every `a2`. Points run row by row over the grid.
pub fn motion_features(
    track: &BoundingBoxTrack,
    cal: &CalibrationModel,
    t: usize,
    tau: usize,
    cfg: &MotionConfig,
) -> Result<Vec<f64>> {
    let series = lateral_series(track, cal, t, tau, cfg)?;
    let mut out = vec![0.0; MOTION_DIM];
    for (p, values) in series.iter().enumerate() {
        let coeffs = fit_quadratic(values)?;
        for (c, value) in coeffs.iter().enumerate() {
            out[c * NUM_POINTS + p] = *value;
        }
    }
    Ok(out)
}
