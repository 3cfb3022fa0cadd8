//! Ground-plane depth lines.
//!
//! A line of constant depth `d` on the road appears in the image as
//! `y = m(d)·x + c(d)` with `m(d) = k_m − p_m·e^{−d·l_m}` and
//! `c(d) = k_c − p_c·e^{−d·l_c}`. Three lines at equally spaced depths fix
//! the six parameters in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthLine {
    pub slope: f64,
    pub intercept: f64,
    pub depth: f64,
}

/// `v(d) = k − p·e^{−d·l}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub k: f64,
    pub p: f64,
    pub l: f64,
}

impl DecayCurve {
    pub fn eval(&self, d: f64) -> f64 {
        self.k - self.p * (-d * self.l).exp()
    }

    /// Exact fit through three samples at equally spaced depths.
    pub fn fit(d: [f64; 3], v: [f64; 3], what: &str) -> Result<Self> {
        let step = d[1] - d[0];
        if !(step > 0.0) || ((d[2] - d[1]) - step).abs() > 1e-9 * step.max(1.0) {
            return Err(Error::Calibration(format!(
                "depths must be strictly increasing and equally spaced, got {d:?}"
            )));
        }
        let ratio = (v[0] - v[1]) / (v[1] - v[2]);
        if !(ratio > 0.0 && ratio.is_finite()) {
            return Err(Error::Calibration(format!(
                "{what} values {v:?} admit no exponential fit"
            )));
        }
        let l = ratio.ln() / step;
        if !(l > 0.0) {
            return Err(Error::Calibration(format!(
                "{what} values {v:?} do not decay with depth"
            )));
        }
        let (e0, e1) = ((-d[0] * l).exp(), (-d[1] * l).exp());
        let p = (v[1] - v[0]) / (e0 - e1);
        Ok(Self {
            k: v[0] + p * e0,
            p,
            l,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub slope: DecayCurve,
    pub intercept: DecayCurve,
    pub focal_px: f64,
    pub principal_point: [f64; 2],
}

pub const DEPTH_SEARCH_RANGE: (f64, f64) = (0.1, 500.0);
const DEPTH_TOLERANCE: f64 = 1e-6;

impl CalibrationModel {
    pub fn line_at(&self, depth: f64) -> DepthLine {
        DepthLine {
            slope: self.slope.eval(depth),
            intercept: self.intercept.eval(depth),
            depth,
        }
    }

    /// Depth `d` with `y = m(d)·x + c(d)`, by bisection over
    /// [`DEPTH_SEARCH_RANGE`].
    pub fn depth_of_point(&self, x: f64, y: f64) -> Result<f64> {
        let residual = |d: f64| self.slope.eval(d) * x + self.intercept.eval(d) - y;
        let (mut lo, mut hi) = DEPTH_SEARCH_RANGE;
        let (mut f_lo, f_hi) = (residual(lo), residual(hi));
        if f_lo == 0.0 {
            return Ok(lo);
        }
        if f_hi == 0.0 {
            return Ok(hi);
        }
        if f_lo.signum() == f_hi.signum() || !(f_lo * f_hi).is_finite() {
            return Err(Error::OutOfRange(format!(
                "point ({x}, {y}) has no depth in [{lo}, {hi}] m"
            )));
        }
        while hi - lo > DEPTH_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            let f = residual(mid);
            if f == 0.0 {
                return Ok(mid);
            }
            if f.signum() == f_lo.signum() {
                lo = mid;
                f_lo = f;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Calibration from three depth lines plus camera intrinsics.
pub fn calibrate_depth(
    lines: &[DepthLine; 3],
    focal_px: f64,
    principal_point: [f64; 2],
) -> Result<CalibrationModel> {
    if !(focal_px > 0.0) {
        return Err(Error::Calibration(format!("focal length must be positive, got {focal_px}")));
    }
    let d = lines.map(|l| l.depth);
    Ok(CalibrationModel {
        slope: DecayCurve::fit(d, lines.map(|l| l.slope), "slope")?,
        intercept: DecayCurve::fit(d, lines.map(|l| l.intercept), "intercept")?,
        focal_px,
        principal_point,
    })
}

/// On-disk calibration: three lines and intrinsics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub lines: [DepthLine; 3],
    pub focal_px: f64,
    pub principal_point: [f64; 2],
}

impl CalibrationFile {
    pub fn calibrate(&self) -> Result<CalibrationModel> {
        calibrate_depth(&self.lines, self.focal_px, self.principal_point)
    }
}
