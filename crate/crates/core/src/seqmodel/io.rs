use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::data::{Dataset, Frame, Sequence, SequenceType};

/// Serializes one sequence per line.
pub fn dataset_to_jsonl_string(dataset: &Dataset) -> String {
    let mut out = String::new();
    for s in dataset.sequences() {
        out.push_str(&serde_json::to_string(s).expect("sequence serialization is infallible"));
        out.push('\n');
    }
    out
}

pub fn dataset_from_jsonl_str(text: &str, framerate_fps: f64, origin: &Path) -> Result<Dataset> {
    let mut sequences = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let seq: Sequence = serde_json::from_str(line)
            .map_err(|e| Error::parse(origin, format!("line {}: {e}", lineno + 1)))?;
        sequences.push(seq);
    }
    Dataset::new(sequences, framerate_fps)
}

pub fn write_jsonl_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, dataset_to_jsonl_string(dataset)).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl_dataset(path: impl AsRef<Path>, framerate_fps: f64) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    dataset_from_jsonl_str(&text, framerate_fps, path)
}

/// Reads a CSV with one row per frame.
///
/// Required columns: `id`, `t`. Optional: `type`, `event_instant`, `y`
/// (labels, `|`-separated for multi-label). Every column whose name starts
/// with `x` is a feature, in header order. Rows of a sequence must be
/// contiguous-by-id in the sense that sequences are created in order of
/// first appearance; frames keep file order.
pub fn read_csv_dataset(path: impl AsRef<Path>, framerate_fps: f64) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    let headers = reader.headers().map_err(|e| Error::parse(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let id_col = col("id").ok_or_else(|| Error::parse(path, "missing `id` column"))?;
    let t_col = col("t").ok_or_else(|| Error::parse(path, "missing `t` column"))?;
    let type_col = col("type");
    let event_col = col("event_instant");
    let y_col = col("y");
    let x_cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with('x'))
        .map(|(i, _)| i)
        .collect();
    if x_cols.is_empty() {
        return Err(Error::parse(path, "no feature columns (names starting with `x`)"));
    }

    struct Pending {
        id: String,
        seq_type: SequenceType,
        event: Option<usize>,
        frames: Vec<Frame>,
    }
    let mut order: Vec<Pending> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();

    for (rowno, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e))?;
        let field = |c: usize| record.get(c).unwrap_or("").trim();
        let bad = |what: &str| Error::parse(path, format!("row {}: {what}", rowno + 2));
        let id = field(id_col).to_string();
        let t: i64 = field(t_col).parse().map_err(|_| bad("invalid `t`"))?;
        let x = x_cols
            .iter()
            .map(|&c| field(c).parse::<f64>().map_err(|_| bad("invalid feature value")))
            .collect::<Result<Vec<_>>>()?;
        let y = y_col
            .map(field)
            .filter(|s| !s.is_empty())
            .map(|s| s.split('|').map(str::to_string).collect::<Vec<_>>());
        let idx = *by_id.entry(id.clone()).or_insert_with(|| {
            order.push(Pending {
                id: id.clone(),
                seq_type: SequenceType::Generic,
                event: None,
                frames: Vec::new(),
            });
            order.len() - 1
        });
        let pending = &mut order[idx];
        if let Some(c) = type_col {
            if !field(c).is_empty() {
                pending.seq_type = field(c).parse()?;
            }
        }
        if let Some(c) = event_col {
            if !field(c).is_empty() {
                pending.event = Some(field(c).parse().map_err(|_| bad("invalid `event_instant`"))?);
            }
        }
        pending.frames.push(Frame { t, x, y });
    }

    let sequences = order
        .into_iter()
        .map(|p| Sequence::new(p.id, p.frames, p.seq_type, p.event))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(sequences, framerate_fps)
}
