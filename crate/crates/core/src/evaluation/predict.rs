use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::build_tables;
use crate::inference::{filtered_label_marginals, forward};
use crate::seqmodel::{Dataset, ModelSpec, ParameterVector, Sequence};

/// Per-frame label probabilities of one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SequencePrediction {
    pub id: String,
    pub frames: Vec<i64>,
    pub labels: Vec<String>,
    /// `probs[t][k]`: probability of `labels[k]` at frame position `t`.
    pub probs: Vec<Vec<f64>>,
}

impl SequencePrediction {
    pub fn prob_of(&self, t: usize, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| l == label).map(|k| self.probs[t][k])
    }
}

/// Filtered (online) marginals for every frame of `sequence`.
pub fn predict_sequence(spec: &ModelSpec, theta: &ParameterVector, sequence: &Sequence) -> Result<SequencePrediction> {
    let tables = build_tables(spec, theta, sequence)?;
    let marginals = filtered_label_marginals(spec, &forward(&tables)?);
    Ok(SequencePrediction {
        id: sequence.id().to_string(),
        frames: sequence.frames().iter().map(|f| f.t).collect(),
        labels: marginals.outcomes().iter().map(|o| o.join("+")).collect(),
        probs: (0..marginals.len()).map(|t| marginals.row(t).to_vec()).collect(),
    })
}

pub fn predict_dataset(spec: &ModelSpec, theta: &ParameterVector, dataset: &Dataset) -> Result<Vec<SequencePrediction>> {
    use rayon::prelude::*;
    dataset
        .sequences()
        .par_iter()
        .map(|s| predict_sequence(spec, theta, s))
        .collect()
}

/// CSV with columns `id,t,p_<label>…`; probabilities carry 9 significant
/// digits.
pub fn predictions_to_csv(predictions: &[SequencePrediction]) -> Result<String> {
    let labels = predictions.first().map(|p| p.labels.clone()).unwrap_or_default();
    let mut out = String::from("id,t");
    for l in &labels {
        out.push_str(",p_");
        out.push_str(l);
    }
    out.push('\n');
    for p in predictions {
        if p.labels != labels {
            return Err(Error::Evaluation(format!("sequence {} uses a different label set", p.id)));
        }
        for (t, row) in p.frames.iter().zip(&p.probs) {
            out.push_str(&p.id);
            out.push(',');
            out.push_str(&t.to_string());
            for v in row {
                out.push_str(&format!(",{v:.8e}"));
            }
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn read_predictions_csv(path: impl AsRef<Path>) -> Result<Vec<SequencePrediction>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    let headers = reader.headers().map_err(|e| Error::parse(path, e))?.clone();
    if headers.len() < 3 || &headers[0] != "id" || &headers[1] != "t" {
        return Err(Error::parse(path, "expected header id,t,p_<label>..."));
    }
    let labels: Vec<String> = headers
        .iter()
        .skip(2)
        .map(|h| h.strip_prefix("p_").map(str::to_string).ok_or_else(|| Error::parse(path, format!("bad column {h:?}"))))
        .collect::<Result<_>>()?;
    let mut out: Vec<SequencePrediction> = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e))?;
        let bad = |what: &str| Error::parse(path, format!("row {}: bad {what}", n + 2));
        let id = record[0].to_string();
        let t: i64 = record[1].parse().map_err(|_| bad("frame"))?;
        let probs: Vec<f64> = record
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>().map_err(|_| bad("probability")))
            .collect::<Result<_>>()?;
        match out.last_mut() {
            Some(p) if p.id == id => {
                p.frames.push(t);
                p.probs.push(probs);
            }
            _ => out.push(SequencePrediction {
                id,
                frames: vec![t],
                labels: labels.clone(),
                probs: vec![probs],
            }),
        }
    }
    Ok(out)
}
