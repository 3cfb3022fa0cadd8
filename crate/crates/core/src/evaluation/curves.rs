//! Event-aligned probability and accuracy curves, and the selection
//! metric `mt`.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::predict::SequencePrediction;
use crate::error::{Error, Result};
use crate::features::{CROSSING, NOT_CROSSING};
use crate::seqmodel::{Dataset, SequenceType};

/// Label whose probability a sequence of this type should carry.
pub fn appropriate_label(kind: SequenceType) -> Option<&'static str> {
    match kind {
        SequenceType::Stopping | SequenceType::Standing => Some(NOT_CROSSING),
        SequenceType::ContinuousCrossing | SequenceType::Starting => Some(CROSSING),
        SequenceType::Generic => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Frames before the alignment instant (negative after it).
    pub offset_frames: i64,
    pub offset_s: f64,
    pub mean_prob: f64,
    pub accuracy: f64,
    /// Population std of the probability within each sequence type,
    /// averaged over the types present at this offset.
    pub std: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    pub framerate_fps: f64,
    /// All sequences pooled, offsets decreasing.
    pub points: Vec<CurvePoint>,
    /// Same aggregation restricted to one sequence type.
    pub by_type: BTreeMap<SequenceType, Vec<CurvePoint>>,
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Samples at one offset, keyed by sequence type, in a canonical order.
type Samples = BTreeMap<SequenceType, Vec<f64>>;

fn aggregate(offset: i64, fps: f64, samples: &Samples) -> CurvePoint {
    let mut all: Vec<f64> = samples.values().flatten().copied().collect();
    all.sort_by(f64::total_cmp);
    let count = all.len();
    let mean_prob = all.iter().sum::<f64>() / count as f64;
    let accuracy = all.iter().filter(|&&p| p > 0.5).count() as f64 / count as f64;
    let std = samples.values().map(|v| population_std(v)).sum::<f64>() / samples.len() as f64;
    CurvePoint {
        offset_frames: offset,
        offset_s: offset as f64 / fps,
        mean_prob,
        accuracy,
        std,
        count,
    }
}

/// Aligns every prediction on its sequence's event instant (or critical
/// point) and aggregates the appropriate-class probability per offset.
pub fn build_curves(predictions: &[SequencePrediction], dataset: &Dataset) -> Result<CurveSet> {
    let fps = dataset.framerate_fps();
    let by_id: HashMap<&str, &crate::seqmodel::Sequence> =
        dataset.sequences().iter().map(|s| (s.id(), s)).collect();
    let mut per_offset: BTreeMap<i64, Samples> = BTreeMap::new();
    for pred in predictions {
        let seq = by_id
            .get(pred.id.as_str())
            .ok_or_else(|| Error::Evaluation(format!("prediction for unknown sequence {}", pred.id)))?;
        let kind = seq.sequence_type();
        let label = appropriate_label(kind)
            .ok_or_else(|| Error::Evaluation(format!("sequence {} has no evaluable type", pred.id)))?;
        let event = seq
            .event_instant()
            .ok_or_else(|| Error::Evaluation(format!("sequence {} has no alignment frame", pred.id)))?;
        let event_t = seq.frames()[event].t;
        for (pos, &t) in pred.frames.iter().enumerate() {
            let p = pred
                .prob_of(pos, label)
                .ok_or_else(|| Error::Evaluation(format!("prediction for {} lacks label {label}", pred.id)))?;
            per_offset.entry(event_t - t).or_default().entry(kind).or_default().push(p);
        }
    }
    if per_offset.is_empty() {
        return Err(Error::Evaluation("no predictions to evaluate".into()));
    }
    for types in per_offset.values_mut() {
        for v in types.values_mut() {
            v.sort_by(f64::total_cmp);
        }
    }
    let points = per_offset.iter().rev().map(|(&k, s)| aggregate(k, fps, s)).collect();
    let mut by_type: BTreeMap<SequenceType, Vec<CurvePoint>> = BTreeMap::new();
    for (&k, samples) in per_offset.iter().rev() {
        for (&kind, values) in samples {
            let single: Samples = [(kind, values.clone())].into_iter().collect();
            by_type.entry(kind).or_default().push(aggregate(k, fps, &single));
        }
    }
    Ok(CurveSet {
        framerate_fps: fps,
        points,
        by_type,
    })
}

/// Evaluation interval in seconds relative to the event, e.g. `[2, −0.5]`
/// for two seconds before to half a second after.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub before_s: f64,
    pub after_s: f64,
}

impl Window {
    pub const NTU: Window = Window { before_s: 2.0, after_s: -0.5 };
    pub const JAAD: Window = Window { before_s: 1.33, after_s: -1.0 };

    pub fn new(before_s: f64, after_s: f64) -> Self {
        Self { before_s, after_s }
    }

    /// Inclusive integer frame offsets `(low, high)` covered at `fps`.
    pub fn frame_range(&self, fps: f64) -> (i64, i64) {
        let a = (self.before_s * fps).round() as i64;
        let b = (self.after_s * fps).round() as i64;
        (a.min(b), a.max(b))
    }
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

/// `mt = (1/T_p)·Σ_t (acc_t + prob_t − std_t)` over the frame offsets of
/// `window`.
pub fn metric_mt(points: &[CurvePoint], window: &Window, fps: f64) -> Result<f64> {
    if !(fps > 0.0) {
        return Err(Error::Evaluation(format!("framerate must be positive, got {fps}")));
    }
    let (lo, hi) = window.frame_range(fps);
    let by_offset: HashMap<i64, &CurvePoint> = points.iter().map(|p| (p.offset_frames, p)).collect();
    let terms = (lo..=hi)
        .map(|k| {
            by_offset
                .get(&k)
                .map(|p| p.accuracy + p.mean_prob - p.std)
                .ok_or_else(|| Error::Evaluation(format!("no curve data at offset {k} frames")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if terms.is_empty() {
        return Err(Error::Evaluation("empty evaluation window".into()));
    }
    Ok(compensated_sum(terms.iter().copied()) / terms.len() as f64)
}

/// CSV with columns `group,offset_frames,offset_s,mean_prob,accuracy,std,count`.
/// The pooled curve comes first under group `all`, then one block per
/// sequence type.
pub fn curves_to_csv(curves: &CurveSet) -> String {
    let mut out = String::from("group,offset_frames,offset_s,mean_prob,accuracy,std,count\n");
    let groups = std::iter::once(("all", &curves.points)).chain(curves.by_type.iter().map(|(k, v)| (k.as_str(), v)));
    for (group, points) in groups {
        for p in points {
            out.push_str(&format!(
                "{group},{},{:.8e},{:.8e},{:.8e},{:.8e},{}\n",
                p.offset_frames, p.offset_s, p.mean_prob, p.accuracy, p.std, p.count
            ));
        }
    }
    out
}

/// Largest offset (seconds) from which `accuracy ≥ threshold` holds at
/// every curve point down to `until_s`.
pub fn sustained_accuracy_onset(points: &[CurvePoint], threshold: f64, until_s: f64) -> Option<f64> {
    let mut ordered: Vec<&CurvePoint> = points.iter().filter(|p| p.offset_s >= until_s - 1e-12).collect();
    ordered.sort_by_key(|p| p.offset_frames);
    let mut onset = None;
    for p in ordered {
        if p.accuracy >= threshold {
            onset = Some(p.offset_s);
        } else {
            break;
        }
    }
    onset
}
