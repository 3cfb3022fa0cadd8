//! Nested cross-validation over a grid of `<layers>/<states>` settings.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::curves::{build_curves, metric_mt, CurveSet, Window};
use super::predict::{predict_dataset, SequencePrediction};
use crate::error::{Error, Result};
use crate::seqmodel::{build_model_spec, Dataset, LayerDescriptor, ModelSpec, SequenceType};
use crate::training::{train, TrainConfig};

/// `FLDCRF-<layers>/<states>`: `layers` tied layers with `states` hidden
/// states per label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSetting {
    pub layers: usize,
    pub states: usize,
}

impl GridSetting {
    pub fn new(layers: usize, states: usize) -> Self {
        Self { layers, states }
    }

    pub fn build_spec(&self, labels: &[String], feature_dim: usize) -> Result<ModelSpec> {
        if self.layers == 0 || self.states == 0 {
            return Err(Error::InvalidSpec(format!("setting {self} needs positive layers and states")));
        }
        let layer = LayerDescriptor::uniform(labels, self.states);
        build_model_spec(&vec![layer; self.layers], feature_dim, None)
    }
}

impl fmt::Display for GridSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.layers, self.states)
    }
}

impl FromStr for GridSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidSpec(format!("expected <layers>/<states> with positive integers, got {s:?}"));
        let (l, n) = s.split_once('/').ok_or_else(bad)?;
        let layers: usize = l.trim().parse().map_err(|_| bad())?;
        let states: usize = n.trim().parse().map_err(|_| bad())?;
        if layers == 0 || states == 0 {
            return Err(bad());
        }
        Ok(Self { layers, states })
    }
}

pub fn default_grid() -> Vec<GridSetting> {
    [(1, 1), (1, 2), (1, 3), (1, 4), (1, 5), (1, 6), (2, 1), (2, 2), (2, 3)]
        .into_iter()
        .map(|(l, s)| GridSetting::new(l, s))
        .collect()
}

/// Sorted distinct labels appearing in `dataset`.
pub fn dataset_labels(dataset: &Dataset) -> Result<Vec<String>> {
    let mut labels: Vec<String> = dataset
        .sequences()
        .iter()
        .flat_map(|s| s.frames())
        .flat_map(|f| f.y.iter().flatten())
        .cloned()
        .collect();
    labels.sort();
    labels.dedup();
    if labels.is_empty() {
        return Err(Error::InvalidDataset("dataset carries no labels".into()));
    }
    Ok(labels)
}

/// Stratified fold assignment of sequence indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub outer: Vec<Vec<usize>>,
    /// `inner[k]` partitions the training part of outer fold `k`.
    pub inner: Vec<Vec<Vec<usize>>>,
    pub seed: u64,
}

/// Shuffles each type's members and deals them round-robin, continuing
/// the deal across types so fold sizes stay balanced.
fn stratified_folds(dataset: &Dataset, members: &[usize], folds: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    let mut by_type: BTreeMap<SequenceType, Vec<usize>> = BTreeMap::new();
    for &i in members {
        by_type.entry(dataset.sequences()[i].sequence_type()).or_default().push(i);
    }
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for (kind, mut group) in by_type {
        if group.len() < folds {
            return Err(Error::Evaluation(format!(
                "cannot stratify {} {kind} sequences into {folds} folds",
                group.len()
            )));
        }
        group.shuffle(rng);
        for i in group {
            out[next % folds].push(i);
            next += 1;
        }
    }
    for fold in &mut out {
        fold.sort_unstable();
    }
    Ok(out)
}

impl CvPlan {
    pub fn new(dataset: &Dataset, outer_folds: usize, inner_folds: usize, seed: u64) -> Result<Self> {
        if outer_folds < 2 || inner_folds < 2 {
            return Err(Error::InvalidConfig("need at least 2 outer and 2 inner folds".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all: Vec<usize> = (0..dataset.len()).collect();
        let outer = stratified_folds(dataset, &all, outer_folds, &mut rng)?;
        let inner = (0..outer_folds)
            .map(|k| stratified_folds(dataset, &complement(&outer, k), inner_folds, &mut rng))
            .collect::<Result<_>>()?;
        Ok(Self { outer, inner, seed })
    }
}

/// Everything except fold `k`, in ascending order.
fn complement(folds: &[Vec<usize>], k: usize) -> Vec<usize> {
    let mut rest: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .flat_map(|(_, f)| f.iter().copied())
        .collect();
    rest.sort_unstable();
    rest
}

#[derive(Clone, Debug, PartialEq)]
pub struct NestedCvConfig {
    pub grid: Vec<GridSetting>,
    pub train: TrainConfig,
    pub window: Window,
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub seed: u64,
}

impl Default for NestedCvConfig {
    fn default() -> Self {
        Self {
            grid: default_grid(),
            train: TrainConfig::default(),
            window: Window::NTU,
            outer_folds: 5,
            inner_folds: 4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingScore {
    pub setting: GridSetting,
    pub param_count: usize,
    /// Mean `mt` over inner folds, each fold weighted equally.
    pub mean_mt: f64,
    pub fold_mt: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub selected: GridSetting,
    pub scores: Vec<SettingScore>,
    pub test_ids: Vec<String>,
    pub test_mt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestedCvReport {
    pub folds: Vec<FoldReport>,
    /// Curves over all outer test predictions together.
    pub curves: CurveSet,
    pub pooled_mt: f64,
    pub mean_test_mt: f64,
    #[serde(skip)]
    pub predictions: Vec<SequencePrediction>,
}

fn fit_and_predict(
    setting: GridSetting,
    labels: &[String],
    dataset: &Dataset,
    train_idx: &[usize],
    test_idx: &[usize],
    config: &TrainConfig,
) -> Result<(usize, Vec<SequencePrediction>)> {
    let dim = dataset.feature_dim().unwrap_or(0);
    let spec = setting.build_spec(labels, dim)?;
    let (theta, _) = train(&spec, &dataset.subset(train_idx), config)?;
    Ok((spec.param_count(), predict_dataset(&spec, &theta, &dataset.subset(test_idx))?))
}

fn score(predictions: &[SequencePrediction], dataset: &Dataset, idx: &[usize], window: &Window) -> Result<f64> {
    let part = dataset.subset(idx);
    let curves = build_curves(predictions, &part)?;
    metric_mt(&curves.points, window, part.framerate_fps())
}

/// Picks the setting with the highest mean inner `mt`; ties go to the
/// smaller parameter count, then to grid order.
fn select(scores: &[SettingScore]) -> GridSetting {
    let mut best = &scores[0];
    for s in &scores[1..] {
        if s.mean_mt > best.mean_mt || (s.mean_mt == best.mean_mt && s.param_count < best.param_count) {
            best = s;
        }
    }
    best.setting
}

/// Runs nested cross-validation with models trained on the current rayon
/// pool. Results are identical for any pool size.
pub fn nested_cv(dataset: &Dataset, config: &NestedCvConfig) -> Result<NestedCvReport> {
    if config.grid.is_empty() {
        return Err(Error::InvalidConfig("hyper-parameter grid is empty".into()));
    }
    let labels = dataset_labels(dataset)?;
    let plan = CvPlan::new(dataset, config.outer_folds, config.inner_folds, config.seed)?;

    let mut folds = Vec::with_capacity(config.outer_folds);
    let mut pooled = Vec::new();
    for (k, test_idx) in plan.outer.iter().enumerate() {
        let inner = &plan.inner[k];
        let jobs: Vec<(usize, usize)> = (0..config.grid.len())
            .flat_map(|g| (0..inner.len()).map(move |j| (g, j)))
            .collect();
        let results: Vec<(usize, f64)> = jobs
            .par_iter()
            .map(|&(g, j)| {
                let val = &inner[j];
                let train_idx = complement(inner, j);
                let (params, preds) = fit_and_predict(config.grid[g], &labels, dataset, &train_idx, val, &config.train)?;
                Ok((params, score(&preds, dataset, val, &config.window)?))
            })
            .collect::<Result<_>>()?;
        let scores: Vec<SettingScore> = config
            .grid
            .iter()
            .enumerate()
            .map(|(g, &setting)| {
                let fold_mt: Vec<f64> = (0..inner.len()).map(|j| results[g * inner.len() + j].1).collect();
                SettingScore {
                    setting,
                    param_count: results[g * inner.len()].0,
                    mean_mt: fold_mt.iter().sum::<f64>() / fold_mt.len() as f64,
                    fold_mt,
                }
            })
            .collect();
        let selected = select(&scores);
        let train_idx = complement(&plan.outer, k);
        let (_, preds) = fit_and_predict(selected, &labels, dataset, &train_idx, test_idx, &config.train)?;
        let test_mt = score(&preds, dataset, test_idx, &config.window)?;
        folds.push(FoldReport {
            fold: k,
            selected,
            scores,
            test_ids: test_idx.iter().map(|&i| dataset.sequences()[i].id().to_string()).collect(),
            test_mt,
        });
        pooled.extend(preds);
    }
    let curves = build_curves(&pooled, dataset)?;
    let pooled_mt = metric_mt(&curves.points, &config.window, dataset.framerate_fps())?;
    let mean_test_mt = folds.iter().map(|f| f.test_mt).sum::<f64>() / folds.len() as f64;
    Ok(NestedCvReport {
        folds,
        curves,
        pooled_mt,
        mean_test_mt,
        predictions: pooled,
    })
}
