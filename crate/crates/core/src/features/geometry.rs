//! Lateral part of an image displacement.
//!
//! A displacement `(S_ix, S_iz)` of an image point at `(p_x, p_z)` (pixels
//! from the principal point, `x_i` right, `z_i` down) mixes the world
//! lateral motion with the longitudinal one. The vertical component only
//! carries longitudinal motion, which fixes the angle `θ_y = σ_z·S_iz / r_z`
//! with `r = √(f² + p²)`. Removing the longitudinal share from `S_ix` leaves
//! `S_xx`, the lateral motion expressed in image pixels.

use serde::{Deserialize, Serialize};

/// Signs `(σ_x, σ_z, σ_xy)` of one image quadrant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadrantSigns {
    pub sigma_x: i8,
    pub sigma_z: i8,
    pub sigma_xy: i8,
}

impl QuadrantSigns {
    const fn new(sigma_x: i8, sigma_z: i8, sigma_xy: i8) -> Self {
        Self {
            sigma_x,
            sigma_z,
            sigma_xy,
        }
    }
}

/// Sign table indexed by the quadrant of the displacement centre. A
/// coordinate of exactly zero counts as positive.
///
/// The default mapping follows from a forward-looking pinhole camera with
/// world `x` to the right and `y` forward: moving away (`+θ_y`) pulls a
/// point towards the principal point, so below the horizon `S_iz` is
/// negative and the horizontal pull points against the sign of `p_x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignConvention {
    pub right_below: QuadrantSigns,
    pub left_below: QuadrantSigns,
    pub right_above: QuadrantSigns,
    pub left_above: QuadrantSigns,
}

impl Default for SignConvention {
    fn default() -> Self {
        Self {
            right_below: QuadrantSigns::new(1, -1, -1),
            left_below: QuadrantSigns::new(1, -1, 1),
            right_above: QuadrantSigns::new(1, 1, -1),
            left_above: QuadrantSigns::new(1, 1, 1),
        }
    }
}

impl SignConvention {
    pub fn signs(&self, p_x: f64, p_z: f64) -> QuadrantSigns {
        match (p_x >= 0.0, p_z >= 0.0) {
            (true, true) => self.right_below,
            (false, true) => self.left_below,
            (true, false) => self.right_above,
            (false, false) => self.left_above,
        }
    }
}

/// How the longitudinal angle maps onto the horizontal image axis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LateralModel {
    /// Longitudinal motion moves a point along the ray through the principal
    /// point, so its horizontal share is `(|p_x|/|p_z|)·|S_iz|`.
    #[default]
    Radial,
    /// Horizontal share `r_x·θ_y`, the arc length at radius `r_x`.
    ArcLength,
}

/// `S_xx` for a displacement centred at `(p_x, p_z)`.
pub fn lateral_displacement(
    focal_px: f64,
    center: (f64, f64),
    s_ix: f64,
    s_iz: f64,
    signs: &SignConvention,
    model: LateralModel,
) -> f64 {
    let (p_x, p_z) = center;
    let q = signs.signs(p_x, p_z);
    let r_x = focal_px.hypot(p_x);
    let r_z = focal_px.hypot(p_z);
    let theta_y = f64::from(q.sigma_z) * s_iz / r_z;
    let scale = match model {
        LateralModel::ArcLength => 1.0,
        LateralModel::Radial => {
            if p_z.abs() < 1e-9 {
                return f64::from(q.sigma_x) * s_ix;
            }
            p_x.abs() * r_z / (p_z.abs() * r_x)
        }
    };
    let theta_x = (s_ix - f64::from(q.sigma_xy) * scale * r_x * theta_y) / (f64::from(q.sigma_x) * r_x);
    r_x * theta_x
}
