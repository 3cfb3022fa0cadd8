//! Bounding-box tracks: gap interpolation and constant-velocity filtering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h }
    }

    fn to_array(self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    /// Image position of the relative box coordinate `(u, v)`, where
    /// `(0, 0)` is the top-left and `(1, 1)` the bottom-right corner.
    pub fn point(&self, u: f64, v: f64) -> (f64, f64) {
        (self.cx + (u - 0.5) * self.w, self.cy + (v - 0.5) * self.h)
    }

    pub fn bottom(&self) -> f64 {
        self.cy + 0.5 * self.h
    }
}

/// One box per frame; `None` marks an occluded or missed frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBoxTrack {
    pub boxes: Vec<Option<BoundingBox>>,
}

impl BoundingBoxTrack {
    pub fn new(boxes: Vec<Option<BoundingBox>>) -> Result<Self> {
        for b in boxes.iter().flatten() {
            if !(b.w > 0.0 && b.h > 0.0) || b.to_array().iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidTrack(format!("invalid observed box {b:?}")));
            }
        }
        Ok(Self { boxes })
    }

    pub fn observed(boxes: Vec<BoundingBox>) -> Result<Self> {
        Self::new(boxes.into_iter().map(Some).collect())
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn num_observed(&self) -> usize {
        self.boxes.iter().flatten().count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KalmanConfig {
    /// White-acceleration intensity, px²/frame².
    pub process_noise: f64,
    /// Measurement variance, px².
    pub measurement_noise: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            process_noise: 1.0,
            measurement_noise: 4.0,
        }
    }
}

/// Fills unobserved frames by linear interpolation between neighbouring
/// observations; leading and trailing gaps repeat the nearest observation.
pub fn interpolate_gaps(track: &BoundingBoxTrack) -> Result<Vec<BoundingBox>> {
    let known: Vec<(usize, [f64; 4])> = track
        .boxes
        .iter()
        .enumerate()
        .filter_map(|(t, b)| b.map(|b| (t, b.to_array())))
        .collect();
    let (first, last) = match (known.first(), known.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err(Error::InvalidTrack("track has no observed frame".into())),
    };
    let mut out = Vec::with_capacity(track.len());
    let mut seg = 0;
    for t in 0..track.len() {
        let v = if t <= first.0 {
            first.1
        } else if t >= last.0 {
            last.1
        } else {
            while known[seg + 1].0 < t {
                seg += 1;
            }
            let (t0, a) = known[seg];
            let (t1, b) = known[seg + 1];
            let w = (t - t0) as f64 / (t1 - t0) as f64;
            std::array::from_fn(|k| a[k] + w * (b[k] - a[k]))
        };
        out.push(BoundingBox::from_array(v));
    }
    Ok(out)
}

/// Constant-velocity filter run forward over one coordinate series. The
/// state starts at the first two samples, so exactly linear input passes
/// through unchanged.
fn filter_series(z: &[f64], cfg: &KalmanConfig) -> Vec<f64> {
    if z.len() < 2 {
        return z.to_vec();
    }
    let (q, r) = (cfg.process_noise, cfg.measurement_noise);
    let mut x = [z[1], z[1] - z[0]];
    let mut p = [[r, r], [r, 2.0 * r]];
    let mut out = vec![z[0], z[1]];
    for &obs in &z[2..] {
        // predict with F = [[1, 1], [0, 1]], Q = q·G·Gᵀ, G = [1/2, 1]
        let xp = [x[0] + x[1], x[1]];
        let pp = [
            [
                p[0][0] + 2.0 * p[0][1] + p[1][1] + 0.25 * q,
                p[0][1] + p[1][1] + 0.5 * q,
            ],
            [p[0][1] + p[1][1] + 0.5 * q, p[1][1] + q],
        ];
        let s = pp[0][0] + r;
        let k = [pp[0][0] / s, pp[1][0] / s];
        let innov = obs - xp[0];
        x = [xp[0] + k[0] * innov, xp[1] + k[1] * innov];
        p = [
            [(1.0 - k[0]) * pp[0][0], (1.0 - k[0]) * pp[0][1]],
            [pp[1][0] - k[1] * pp[0][0], pp[1][1] - k[1] * pp[0][1]],
        ];
        out.push(x[0]);
    }
    out
}

/// Interpolates gaps, then filters `cx`, `cy`, `w`, `h` independently.
/// Widths and heights are kept at 1 px or more.
pub fn smooth_track(track: &BoundingBoxTrack, cfg: &KalmanConfig) -> Result<BoundingBoxTrack> {
    if track.num_observed() < 2 {
        return Err(Error::InvalidTrack(format!(
            "need at least 2 observed frames, found {}",
            track.num_observed()
        )));
    }
    let filled = interpolate_gaps(track)?;
    let columns: Vec<Vec<f64>> = (0..4)
        .map(|k| {
            let series: Vec<f64> = filled.iter().map(|b| b.to_array()[k]).collect();
            filter_series(&series, cfg)
        })
        .collect();
    let boxes = (0..filled.len())
        .map(|t| {
            Some(BoundingBox::new(
                columns[0][t],
                columns[1][t],
                columns[2][t].max(1.0),
                columns[3][t].max(1.0),
            ))
        })
        .collect();
    Ok(BoundingBoxTrack { boxes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn linear(t: usize) -> BoundingBox {
        let t = t as f64;
        BoundingBox::new(100.0 + 2.5 * t, 400.0 - 0.5 * t, 40.0 + 0.1 * t, 90.0)
    }

    #[test]
    fn linear_track_passes_through() {
        let track = BoundingBoxTrack::observed((0..30).map(linear).collect()).unwrap();
        let out = smooth_track(&track, &KalmanConfig::default()).unwrap();
        for (t, b) in out.boxes.iter().enumerate().skip(3) {
            let (got, want) = (b.unwrap().to_array(), linear(t).to_array());
            for k in 0..4 {
                assert!((got[k] - want[k]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gap_is_collinear() {
        let mut boxes: Vec<_> = (0..12).map(|t| Some(linear(t))).collect();
        for b in &mut boxes[4..7] {
            *b = None;
        }
        let filled = interpolate_gaps(&BoundingBoxTrack::new(boxes).unwrap()).unwrap();
        for t in 4..7 {
            let (got, want) = (filled[t].to_array(), linear(t).to_array());
            for k in 0..4 {
                assert!((got[k] - want[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn filtering_reduces_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise = Normal::new(0.0, 2.0).unwrap();
        let truth: Vec<BoundingBox> = (0..200)
            .map(|t| {
                let t = t as f64;
                BoundingBox::new(300.0 + 1.5 * t + 10.0 * (t / 40.0).sin(), 500.0 - 0.2 * t, 50.0, 120.0)
            })
            .collect();
        let noisy: Vec<BoundingBox> = truth
            .iter()
            .map(|b| {
                let v = b.to_array().map(|x| x + noise.sample(&mut rng));
                BoundingBox::from_array(v)
            })
            .collect();
        let out = smooth_track(&BoundingBoxTrack::observed(noisy.clone()).unwrap(), &KalmanConfig::default()).unwrap();
        let mse = |boxes: &mut dyn Iterator<Item = BoundingBox>| {
            boxes
                .zip(&truth)
                .map(|(a, b)| a.to_array().iter().zip(b.to_array()).map(|(x, y)| (x - y).powi(2)).sum::<f64>())
                .sum::<f64>()
        };
        let before = mse(&mut noisy.into_iter());
        let after = mse(&mut out.boxes.into_iter().flatten());
        assert!(after < before, "{after} vs {before}");
    }

    #[test]
    fn sizes_stay_positive_and_errors() {
        let boxes = vec![
            BoundingBox::new(0.0, 0.0, 5.0, 5.0),
            BoundingBox::new(0.0, 0.0, 1.5, 1.5),
            BoundingBox::new(0.0, 0.0, 1.0, 1.0),
            BoundingBox::new(0.0, 0.0, 1.0, 1.0),
        ];
        let out = smooth_track(&BoundingBoxTrack::observed(boxes).unwrap(), &KalmanConfig::default()).unwrap();
        assert!(out.boxes.iter().flatten().all(|b| b.w >= 1.0 && b.h >= 1.0));
        let none = BoundingBoxTrack::new(vec![None, None]).unwrap();
        assert!(matches!(smooth_track(&none, &KalmanConfig::default()), Err(Error::InvalidTrack(_))));
        assert!(BoundingBoxTrack::observed(vec![BoundingBox::new(0.0, 0.0, 0.0, 1.0)]).is_err());
    }
}
