//! Road / non-road modes in three regions next to a pedestrian box.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::track::BoundingBox;
use crate::error::{Error, Result};

/// Binary raster, `true` for road pixels, row-major from the top-left.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoadMask {
    width: usize,
    height: usize,
    road: Vec<bool>,
}

impl RoadMask {
    pub fn new(width: usize, height: usize, road: Vec<bool>) -> Result<Self> {
        if road.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                found: road.len(),
                context: "road mask pixels",
            });
        }
        Ok(Self { width, height, road })
    }

    pub fn filled(width: usize, height: usize, road: bool) -> Self {
        Self {
            width,
            height,
            road: vec![road; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_road(&self, x: usize, y: usize) -> bool {
        self.road[y * self.width + x]
    }

    /// Reads a binary (`P5`) or plain (`P2`) PGM; nonzero pixels are road.
    pub fn read_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::parse_pgm(&bytes).map_err(|reason| Error::parse(path, reason))
    }

    pub fn parse_pgm(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut pos = 0;
        let mut header = Vec::with_capacity(4);
        while header.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err("truncated PGM header".into());
            }
            header.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        let magic = header[0].as_str();
        let num = |s: &str| s.parse::<usize>().map_err(|_| format!("bad PGM header field {s:?}"));
        let (width, height, maxval) = (num(&header[1])?, num(&header[2])?, num(&header[3])?);
        if maxval == 0 || maxval > 65535 {
            return Err(format!("bad PGM maxval {maxval}"));
        }
        let n = width * height;
        let values: Vec<usize> = match magic {
            "P5" => {
                let data = &bytes[(pos + 1).min(bytes.len())..];
                let per = if maxval < 256 { 1 } else { 2 };
                if data.len() < n * per {
                    return Err(format!("PGM raster has {} bytes, expected {}", data.len(), n * per));
                }
                if per == 1 {
                    data[..n].iter().map(|&b| b as usize).collect()
                } else {
                    data[..2 * n]
                        .chunks_exact(2)
                        .map(|c| ((c[0] as usize) << 8) | c[1] as usize)
                        .collect()
                }
            }
            "P2" => {
                let text = String::from_utf8_lossy(&bytes[pos..]);
                let values: Vec<usize> = text
                    .split_ascii_whitespace()
                    .take(n)
                    .map(|s| s.parse().map_err(|_| format!("bad PGM sample {s:?}")))
                    .collect::<std::result::Result<_, String>>()?;
                if values.len() < n {
                    return Err(format!("PGM raster has {} samples, expected {n}", values.len()));
                }
                values
            }
            other => return Err(format!("unsupported PGM magic {other:?}")),
        };
        Ok(Self {
            width,
            height,
            road: values.into_iter().map(|v| v > 0).collect(),
        })
    }
}

/// Strip below the box, split into left, centre and right thirds of the
/// box width, `height_fraction` of the box height tall.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionConfig {
    pub height_fraction: f64,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self { height_fraction: 0.2 }
    }
}

/// Pixel rectangle `[x0, x1) × [y0, y1)` of region `index` (0 = left),
/// clipped to the raster. Pixels count when their centre lies inside.
pub fn region_pixels(mask: &RoadMask, bbox: &BoundingBox, cfg: &RegionConfig, index: usize) -> [usize; 4] {
    let left = bbox.cx - 0.5 * bbox.w + index as f64 * bbox.w / 3.0;
    let right = left + bbox.w / 3.0;
    let top = bbox.bottom();
    let bottom = top + cfg.height_fraction * bbox.h;
    let to_px = |v: f64, limit: usize| (v - 0.5).ceil().clamp(0.0, limit as f64) as usize;
    [
        to_px(left, mask.width),
        to_px(right, mask.width),
        to_px(top, mask.height),
        to_px(bottom, mask.height),
    ]
}

/// `(m1, m2, m3)`: 1 where road pixels are a strict majority of the
/// region, 0 otherwise (including empty regions).
pub fn spatial_context(mask: &RoadMask, bbox: &BoundingBox, cfg: &RegionConfig) -> [f64; 3] {
    std::array::from_fn(|i| {
        let [x0, x1, y0, y1] = region_pixels(mask, bbox, cfg, i);
        let (mut road, mut total) = (0usize, 0usize);
        for y in y0..y1 {
            for x in x0..x1 {
                total += 1;
                road += usize::from(mask.is_road(x, y));
            }
        }
        if 2 * road > total {
            1.0
        } else {
            0.0
        }
    })
}
