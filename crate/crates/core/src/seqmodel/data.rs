use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Behaviour category of a pedestrian sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceType {
    ContinuousCrossing,
    Stopping,
    Standing,
    Starting,
    Generic,
}

impl SequenceType {
    pub const ALL: [SequenceType; 5] = [
        SequenceType::ContinuousCrossing,
        SequenceType::Stopping,
        SequenceType::Standing,
        SequenceType::Starting,
        SequenceType::Generic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SequenceType::ContinuousCrossing => "continuous_crossing",
            SequenceType::Stopping => "stopping",
            SequenceType::Standing => "standing",
            SequenceType::Starting => "starting",
            SequenceType::Generic => "generic",
        }
    }
}

impl fmt::Display for SequenceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SequenceType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SequenceType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidDataset(format!("unknown sequence type `{s}`")))
    }
}

/// Labels attached to a frame: one string in single-label mode, one per
/// layer otherwise.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum FrameLabelsRepr {
    One(String),
    Many(Vec<String>),
}

/// One time step: observation `x_t` and optional labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: i64,
    pub x: Vec<f64>,
    #[serde(
        default,
        serialize_with = "serialize_labels",
        deserialize_with = "deserialize_labels"
    )]
    pub y: Option<Vec<String>>,
}

fn serialize_labels<S: serde::Serializer>(
    y: &Option<Vec<String>>,
    ser: S,
) -> std::result::Result<S::Ok, S::Error> {
    match y {
        None => ser.serialize_none(),
        Some(v) if v.len() == 1 => ser.serialize_str(&v[0]),
        Some(v) => v.serialize(ser),
    }
}

fn deserialize_labels<'de, D: serde::Deserializer<'de>>(
    de: D,
) -> std::result::Result<Option<Vec<String>>, D::Error> {
    Ok(
        Option::<FrameLabelsRepr>::deserialize(de)?.map(|r| match r {
            FrameLabelsRepr::One(s) => vec![s],
            FrameLabelsRepr::Many(v) => v,
        }),
    )
}

impl Frame {
    pub fn unlabeled(t: i64, x: Vec<f64>) -> Self {
        Self { t, x, y: None }
    }

    pub fn labeled(t: i64, x: Vec<f64>, label: impl Into<String>) -> Self {
        Self {
            t,
            x,
            y: Some(vec![label.into()]),
        }
    }

    pub fn multi_labeled(t: i64, x: Vec<f64>, labels: Vec<String>) -> Self {
        Self {
            t,
            x,
            y: Some(labels),
        }
    }
}

/// A time-indexed observation sequence.
///
/// `event_instant` is a position into `frames` (not a `t` value).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SequenceRepr", into = "SequenceRepr")]
pub struct Sequence {
    id: String,
    frames: Vec<Frame>,
    sequence_type: SequenceType,
    event_instant: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct SequenceRepr {
    id: String,
    #[serde(rename = "type", default = "generic")]
    sequence_type: SequenceType,
    #[serde(default)]
    event_instant: Option<usize>,
    frames: Vec<Frame>,
}

fn generic() -> SequenceType {
    SequenceType::Generic
}

impl TryFrom<SequenceRepr> for Sequence {
    type Error = Error;

    fn try_from(r: SequenceRepr) -> Result<Self> {
        Sequence::new(r.id, r.frames, r.sequence_type, r.event_instant)
    }
}

impl From<Sequence> for SequenceRepr {
    fn from(s: Sequence) -> Self {
        SequenceRepr {
            id: s.id,
            sequence_type: s.sequence_type,
            event_instant: s.event_instant,
            frames: s.frames,
        }
    }
}

impl Sequence {
    pub fn new(
        id: impl Into<String>,
        frames: Vec<Frame>,
        sequence_type: SequenceType,
        event_instant: Option<usize>,
    ) -> Result<Self> {
        let id = id.into();
        let invalid = |reason: String| Error::InvalidSequence {
            id: id.clone(),
            reason,
        };
        if frames.is_empty() {
            return Err(invalid("sequence has no frames".into()));
        }
        let dim = frames[0].x.len();
        for (i, f) in frames.iter().enumerate() {
            if f.x.len() != dim {
                return Err(invalid(format!(
                    "frame {i} has {} features, expected {dim}",
                    f.x.len()
                )));
            }
            if f.x.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("frame {i} has a non-finite feature")));
            }
            if i > 0 && f.t <= frames[i - 1].t {
                return Err(invalid(format!(
                    "frame indices not strictly increasing at position {i}"
                )));
            }
            if let Some(y) = &f.y {
                if y.is_empty() {
                    return Err(invalid(format!("frame {i} has an empty label list")));
                }
            }
        }
        if let Some(e) = event_instant {
            if e >= frames.len() {
                return Err(invalid(format!(
                    "event instant {e} outside [0, {})",
                    frames.len()
                )));
            }
        }
        Ok(Self {
            id,
            frames,
            sequence_type,
            event_instant,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.frames[0].x.len()
    }

    pub fn sequence_type(&self) -> SequenceType {
        self.sequence_type
    }

    pub fn event_instant(&self) -> Option<usize> {
        self.event_instant
    }

    pub fn is_labeled(&self) -> bool {
        self.frames.iter().all(|f| f.y.is_some())
    }

    /// Same sequence with labels replaced by `labels` (one entry per frame).
    pub fn with_labels(&self, labels: Vec<Option<Vec<String>>>) -> Result<Self> {
        if labels.len() != self.frames.len() {
            return Err(Error::DimensionMismatch {
                expected: self.frames.len(),
                found: labels.len(),
                context: "per-frame labels",
            });
        }
        let frames = self
            .frames
            .iter()
            .zip(labels)
            .map(|(f, y)| Frame {
                t: f.t,
                x: f.x.clone(),
                y,
            })
            .collect();
        Sequence::new(self.id.clone(), frames, self.sequence_type, self.event_instant)
    }

    /// Same sequence with every feature vector passed through `map`.
    pub fn map_features(&self, mut map: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let frames = self
            .frames
            .iter()
            .map(|f| Frame {
                t: f.t,
                x: map(&f.x),
                y: f.y.clone(),
            })
            .collect();
        Sequence::new(self.id.clone(), frames, self.sequence_type, self.event_instant)
    }

    pub fn with_meta(&self, sequence_type: SequenceType, event_instant: Option<usize>) -> Result<Self> {
        Sequence::new(self.id.clone(), self.frames.clone(), sequence_type, event_instant)
    }
}

/// A collection of sequences sharing one feature dimensionality.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    sequences: Vec<Sequence>,
    framerate_fps: f64,
}

impl Dataset {
    pub fn new(sequences: Vec<Sequence>, framerate_fps: f64) -> Result<Self> {
        if !(framerate_fps > 0.0 && framerate_fps.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "framerate must be positive, got {framerate_fps}"
            )));
        }
        if let Some(first) = sequences.first() {
            let dim = first.feature_dim();
            if let Some(bad) = sequences.iter().find(|s| s.feature_dim() != dim) {
                return Err(Error::InvalidDataset(format!(
                    "sequence {} has {} features, expected {dim}",
                    bad.id(),
                    bad.feature_dim()
                )));
            }
        }
        Ok(Self {
            sequences,
            framerate_fps,
        })
    }

    pub fn sequences(&self) -> &[Sequence] {
        &self.sequences
    }

    pub fn into_sequences(self) -> Vec<Sequence> {
        self.sequences
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn framerate_fps(&self) -> f64 {
        self.framerate_fps
    }

    /// `None` for an empty dataset.
    pub fn feature_dim(&self) -> Option<usize> {
        self.sequences.first().map(Sequence::feature_dim)
    }

    pub fn num_frames(&self) -> usize {
        self.sequences.iter().map(Sequence::len).sum()
    }

    /// Subset by sequence position, in the order given.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            sequences: indices.iter().map(|&i| self.sequences[i].clone()).collect(),
            framerate_fps: self.framerate_fps,
        }
    }

    /// Appends a constant 1.0 feature to every frame.
    pub fn with_bias_feature(&self) -> Dataset {
        self.map_features(|x| {
            let mut v = x.to_vec();
            v.push(1.0);
            v
        })
        .expect("appending a constant keeps the dataset valid")
    }

    /// Keeps only the given feature column ranges, concatenated in order.
    pub fn select_columns(&self, ranges: &[Range<usize>]) -> Result<Dataset> {
        let dim = self.feature_dim().unwrap_or(0);
        if let Some(r) = ranges.iter().find(|r| r.end > dim || r.start > r.end) {
            return Err(Error::InvalidConfig(format!(
                "column range {}..{} outside feature dimension {dim}",
                r.start, r.end
            )));
        }
        if ranges.iter().all(|r| r.is_empty()) {
            return Err(Error::InvalidConfig("column selection is empty".into()));
        }
        self.map_features(|x| ranges.iter().flat_map(|r| x[r.clone()].iter().copied()).collect())
    }

    fn map_features(&self, map: impl Fn(&[f64]) -> Vec<f64>) -> Result<Dataset> {
        let sequences = self
            .sequences
            .iter()
            .map(|s| s.map_features(&map))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(sequences, self.framerate_fps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_invariants() {
        let f = |t| Frame::unlabeled(t, vec![0.0]);
        assert!(Sequence::new("a", vec![], SequenceType::Generic, None).is_err());
        assert!(Sequence::new("a", vec![f(0), f(0)], SequenceType::Generic, None).is_err());
        assert!(Sequence::new("a", vec![f(0), f(1)], SequenceType::Stopping, Some(2)).is_err());
        assert!(Sequence::new("a", vec![f(0), f(3)], SequenceType::Stopping, Some(1)).is_ok());
        let bad = Frame::unlabeled(1, vec![f64::NAN]);
        assert!(Sequence::new("a", vec![f(0), bad], SequenceType::Generic, None).is_err());
    }

    #[test]
    fn dataset_invariants() {
        let a = Sequence::new("a", vec![Frame::unlabeled(0, vec![0.0])], SequenceType::Generic, None)
            .unwrap();
        let b = Sequence::new(
            "b",
            vec![Frame::unlabeled(0, vec![0.0, 1.0])],
            SequenceType::Generic,
            None,
        )
        .unwrap();
        assert!(Dataset::new(vec![a.clone(), b], 15.0).is_err());
        assert!(Dataset::new(vec![a.clone()], 0.0).is_err());
        let d = Dataset::new(vec![a], 15.0).unwrap();
        assert_eq!(d.with_bias_feature().feature_dim(), Some(2));
    }

    #[test]
    fn labels_json_shapes() {
        let f: Frame = serde_json::from_str(r#"{"t":0,"x":[1.0],"y":"c"}"#).unwrap();
        assert_eq!(f.y, Some(vec!["c".to_string()]));
        let f: Frame = serde_json::from_str(r#"{"t":0,"x":[1.0],"y":["c","n"]}"#).unwrap();
        assert_eq!(f.y.as_ref().unwrap().len(), 2);
        let f: Frame = serde_json::from_str(r#"{"t":0,"x":[1.0],"y":null}"#).unwrap();
        assert_eq!(f.y, None);
        let f: Frame = serde_json::from_str(r#"{"t":0,"x":[1.0]}"#).unwrap();
        assert_eq!(f.y, None);
    }

    #[test]
    fn column_selection() {
        let s = Sequence::new(
            "a",
            vec![Frame::unlabeled(0, vec![0.0, 1.0, 2.0, 3.0])],
            SequenceType::Generic,
            None,
        )
        .unwrap();
        let d = Dataset::new(vec![s], 15.0).unwrap();
        let sel = d.select_columns(&[0..1, 2..4]).unwrap();
        assert_eq!(sel.sequences()[0].frames()[0].x, vec![0.0, 2.0, 3.0]);
        assert!(d.select_columns(&[3..5]).is_err());
    }
}
