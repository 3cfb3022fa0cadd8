//! Detections-to-dataset pipeline.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::calibration::CalibrationModel;
use super::labeling::label_with_pred_ahead;
use super::motion::{effective_tau, motion_features, MotionConfig, DEFAULT_TAU, MIN_TAU};
use super::spatial::{spatial_context, RegionConfig, RoadMask};
use super::track::{smooth_track, BoundingBox, BoundingBoxTrack, KalmanConfig};
use crate::error::{Error, Result};
use crate::seqmodel::{Dataset, Frame, Sequence, SequenceType};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackKind {
    Pedestrian,
    Vehicle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub id: String,
    pub kind: TrackKind,
    /// `[cx, cy, w, h]` in pixels.
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    /// Mean optical flow of a vehicle, used as given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<f64>,
}

/// One line of a detections file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionFrame {
    pub frame: i64,
    pub tracks: Vec<Detection>,
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<DetectionFrame>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut frames: Vec<DetectionFrame> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::parse(path, format!("line {}: {e}", n + 1)))
        })
        .collect::<Result<_>>()?;
    frames.sort_by_key(|f| f.frame);
    if frames.windows(2).any(|w| w[0].frame == w[1].frame) {
        return Err(Error::parse(path, "duplicate frame number"));
    }
    Ok(frames)
}

/// Ego-vehicle speed category at and after `frame`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgoSpeedChange {
    pub frame: i64,
    pub state: String,
}

pub fn ego_speed_code(state: &str) -> Result<f64> {
    match state {
        "standing" => Ok(0.0),
        "moving slow" => Ok(1.0),
        "moving fast" => Ok(2.0),
        other => Err(Error::InvalidConfig(format!("unknown ego velocity label {other:?}"))),
    }
}

/// Which pedestrian track forms a sequence, and its type and event frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceAnnotation {
    pub id: String,
    pub pedestrian: String,
    #[serde(rename = "type")]
    pub sequence_type: SequenceType,
    /// Event frame, or the critical point of a standing sequence.
    #[serde(default)]
    pub event_frame: Option<i64>,
    #[serde(default)]
    pub first_frame: Option<i64>,
    #[serde(default)]
    pub last_frame: Option<i64>,
    #[serde(default)]
    pub ego_velocity: Vec<EgoSpeedChange>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleContext {
    #[default]
    None,
    /// `(ncl, ncr, nclf, ncrf)`: relative depth and flow of the nearest
    /// vehicle on each side of the pedestrian, `-1` depth and zero flow
    /// when there is none.
    Ntu,
    /// `(ego_dep, ego_vel)`: pedestrian depth and ego-speed category.
    Jaad,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractConfig {
    pub tau: usize,
    pub pred_ahead: usize,
    pub vehicle_context: VehicleContext,
    pub region: RegionConfig,
    pub kalman: KalmanConfig,
    pub motion: MotionConfig,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            pred_ahead: 30,
            vehicle_context: VehicleContext::None,
            region: RegionConfig::default(),
            kalman: KalmanConfig::default(),
            motion: MotionConfig::default(),
        }
    }
}

/// Expands `{frame}` or a zero-padded `{frame:0N}` in `template`.
pub fn mask_path(template: &str, frame: i64) -> String {
    let Some(start) = template.find("{frame") else {
        return template.to_string();
    };
    let Some(len) = template[start..].find('}') else {
        return template.to_string();
    };
    let spec = &template[start + 6..start + len];
    let value = match spec.strip_prefix(":0").and_then(|w| w.parse::<usize>().ok()) {
        Some(width) => format!("{frame:0width$}"),
        None => frame.to_string(),
    };
    format!("{}{}{}", &template[..start], value, &template[start + len + 1..])
}

fn to_box(b: [f64; 4]) -> BoundingBox {
    BoundingBox::new(b[0], b[1], b[2], b[3])
}

fn ntu_context(cal: &CalibrationModel, ped: &BoundingBox, ped_depth: f64, frame: &DetectionFrame) -> [f64; 4] {
    let mut nearest = [(f64::INFINITY, 0.0); 2];
    for det in frame.tracks.iter().filter(|d| d.kind == TrackKind::Vehicle) {
        let veh = to_box(det.bbox);
        let Ok(depth) = cal.depth_of_point(veh.cx, veh.bottom()) else {
            continue;
        };
        let side = usize::from(veh.cx >= ped.cx);
        let rel = (depth - ped_depth).abs();
        if rel < nearest[side].0 {
            nearest[side] = (rel, det.flow.unwrap_or(0.0));
        }
    }
    let depth = |n: (f64, f64)| if n.0.is_finite() { n.0 } else { -1.0 };
    [depth(nearest[0]), depth(nearest[1]), nearest[0].1, nearest[1].1]
}

/// Builds one labeled sequence per annotation.
///
/// Frames before the first full motion window (the first `MIN_TAU − 1`
/// frames of the span) carry no motion features and are dropped.
/// `masks`, when given, returns the road raster of a frame number.
pub fn extract(
    detections: &[DetectionFrame],
    annotations: &[SequenceAnnotation],
    cal: &CalibrationModel,
    mut masks: Option<&mut dyn FnMut(i64) -> Result<RoadMask>>,
    cfg: &ExtractConfig,
    framerate_fps: f64,
) -> Result<Dataset> {
    let by_frame: BTreeMap<i64, &DetectionFrame> = detections.iter().map(|f| (f.frame, f)).collect();
    let mut sequences = Vec::with_capacity(annotations.len());
    for ann in annotations {
        let invalid = |reason: String| Error::InvalidSequence {
            id: ann.id.clone(),
            reason,
        };
        let seen: Vec<i64> = detections
            .iter()
            .filter(|f| f.tracks.iter().any(|d| d.kind == TrackKind::Pedestrian && d.id == ann.pedestrian))
            .map(|f| f.frame)
            .collect();
        let first = ann.first_frame.or(seen.first().copied()).ok_or_else(|| invalid(format!("pedestrian {} never detected", ann.pedestrian)))?;
        let last = ann.last_frame.or(seen.last().copied()).ok_or_else(|| invalid(format!("pedestrian {} never detected", ann.pedestrian)))?;
        if last < first {
            return Err(invalid(format!("last frame {last} precedes first frame {first}")));
        }
        let span: Vec<i64> = (first..=last).collect();
        let find = |frame: i64| -> Option<&Detection> {
            by_frame
                .get(&frame)
                .and_then(|f| f.tracks.iter().find(|d| d.kind == TrackKind::Pedestrian && d.id == ann.pedestrian))
        };
        let raw = BoundingBoxTrack::new(span.iter().map(|&f| find(f).map(|d| to_box(d.bbox))).collect())?;
        let track = smooth_track(&raw, &cfg.kalman)?;

        let mut frames = Vec::new();
        for (pos, &frame) in span.iter().enumerate().skip(MIN_TAU - 1) {
            let tau = effective_tau(pos, cfg.tau)?;
            let mut x = motion_features(&track, cal, pos, tau, &cfg.motion)?;
            let ped = track.boxes[pos].expect("smoothed track is dense");
            if let Some(load) = masks.as_mut() {
                let mask = load(frame)?;
                x.extend(spatial_context(&mask, &ped, &cfg.region));
            }
            match cfg.vehicle_context {
                VehicleContext::None => {}
                VehicleContext::Ntu => {
                    let d = cal.depth_of_point(ped.cx, ped.bottom())?;
                    let empty = DetectionFrame { frame, tracks: Vec::new() };
                    x.extend(ntu_context(cal, &ped, d, by_frame.get(&frame).copied().unwrap_or(&empty)));
                }
                VehicleContext::Jaad => {
                    x.push(cal.depth_of_point(ped.cx, ped.bottom())?);
                    let state = ann
                        .ego_velocity
                        .iter()
                        .filter(|c| c.frame <= frame)
                        .max_by_key(|c| c.frame)
                        .map(|c| c.state.as_str())
                        .unwrap_or("standing");
                    x.push(ego_speed_code(state)?);
                }
            }
            frames.push(Frame::unlabeled(frame, x));
        }
        if frames.is_empty() {
            return Err(invalid(format!("span of {} frames is shorter than the {MIN_TAU}-frame motion window", span.len())));
        }
        let offset = first + (MIN_TAU as i64 - 1);
        let event = match ann.event_frame {
            Some(e) if e < offset || e > last => {
                return Err(invalid(format!("event frame {e} outside the usable span {offset}..={last}")))
            }
            Some(e) => Some((e - offset) as usize),
            None => None,
        };
        let seq = Sequence::new(ann.id.clone(), frames, ann.sequence_type, event)?;
        sequences.push(label_with_pred_ahead(&seq, cfg.pred_ahead)?);
    }
    Dataset::new(sequences, framerate_fps)
}
