use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered set of label identifiers for one layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelAlphabet {
    labels: Vec<String>,
}

impl LabelAlphabet {
    pub fn new<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        Self::try_from(labels.iter().map(|s| s.as_ref().to_owned()).collect::<Vec<_>>())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

impl TryFrom<Vec<String>> for LabelAlphabet {
    type Error = Error;

    fn try_from(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidSpec("empty label alphabet".into()));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::InvalidSpec(format!("duplicate label `{l}`")));
            }
        }
        Ok(Self { labels })
    }
}

impl From<LabelAlphabet> for Vec<String> {
    fn from(a: LabelAlphabet) -> Self {
        a.labels
    }
}

/// User-facing description of one hidden layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDescriptor {
    pub labels: Vec<String>,
    pub states_per_label: Vec<usize>,
}

impl LayerDescriptor {
    pub fn new<S: AsRef<str>>(labels: &[S], states_per_label: &[usize]) -> Self {
        Self {
            labels: labels.iter().map(|s| s.as_ref().to_owned()).collect(),
            states_per_label: states_per_label.to_vec(),
        }
    }

    /// Same number of hidden states for every label.
    pub fn uniform<S: AsRef<str>>(labels: &[S], states: usize) -> Self {
        Self::new(labels, &vec![states; labels.len()])
    }
}

/// A hidden layer: label alphabet plus the disjoint hidden-state block of
/// each label. Blocks are laid out contiguously in label order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    alphabet: LabelAlphabet,
    states_per_label: Vec<usize>,
    block_start: Vec<usize>,
    label_of_state: Vec<usize>,
}

impl LayerSpec {
    pub fn new(alphabet: LabelAlphabet, states_per_label: Vec<usize>) -> Result<Self> {
        if states_per_label.len() != alphabet.len() {
            return Err(Error::InvalidSpec(format!(
                "{} labels but {} state counts",
                alphabet.len(),
                states_per_label.len()
            )));
        }
        if let Some(pos) = states_per_label.iter().position(|&n| n == 0) {
            return Err(Error::InvalidSpec(format!(
                "label `{}` has no hidden states",
                alphabet.label(pos)
            )));
        }
        let mut block_start = Vec::with_capacity(states_per_label.len());
        let mut label_of_state = Vec::new();
        for (label, &n) in states_per_label.iter().enumerate() {
            block_start.push(label_of_state.len());
            label_of_state.extend(std::iter::repeat(label).take(n));
        }
        Ok(Self {
            alphabet,
            states_per_label,
            block_start,
            label_of_state,
        })
    }

    pub fn alphabet(&self) -> &LabelAlphabet {
        &self.alphabet
    }

    pub fn states_per_label(&self) -> &[usize] {
        &self.states_per_label
    }

    /// |H_i|
    pub fn num_states(&self) -> usize {
        self.label_of_state.len()
    }

    pub fn num_labels(&self) -> usize {
        self.alphabet.len()
    }

    /// Hidden states owned by `label`.
    pub fn state_range(&self, label: usize) -> Range<usize> {
        let start = self.block_start[label];
        start..start + self.states_per_label[label]
    }

    pub fn label_of(&self, state: usize) -> usize {
        self.label_of_state[state]
    }

    fn descriptor(&self) -> LayerDescriptor {
        LayerDescriptor {
            labels: self.alphabet.labels().to_vec(),
            states_per_label: self.states_per_label.clone(),
        }
    }
}

/// Influence pair as requested by the caller. Only same-instant (`lag == 0`)
/// couplings are supported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairDescriptor {
    pub first: usize,
    pub second: usize,
    #[serde(default)]
    pub lag: i64,
}

impl PairDescriptor {
    pub fn same_instant(first: usize, second: usize) -> Self {
        Self {
            first,
            second,
            lag: 0,
        }
    }
}

/// Whether layers predict one shared label or one label each.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// All layers share one alphabet and are tied to the same label.
    Single,
    /// Every layer carries its own label sequence.
    Multi,
}

/// Enumeration of the joint hidden-state space `H_1 × … × H_L`.
///
/// Joint index is mixed-radix with layer 0 most significant, so index 0 is
/// the all-lowest tuple and the order is lexicographic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointSpace {
    num_layers: usize,
    size: usize,
    strides: Vec<usize>,
    states: Vec<usize>,
}

impl JointSpace {
    fn new(layer_sizes: &[usize]) -> Self {
        let num_layers = layer_sizes.len();
        let size: usize = layer_sizes.iter().product();
        let mut strides = vec![1; num_layers];
        for i in (0..num_layers.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * layer_sizes[i + 1];
        }
        let mut states = Vec::with_capacity(size * num_layers);
        for s in 0..size {
            for i in 0..num_layers {
                states.push((s / strides[i]) % layer_sizes[i]);
            }
        }
        Self {
            num_layers,
            size,
            strides,
            states,
        }
    }

    /// M = Π |H_i|
    pub fn size(&self) -> usize {
        self.size
    }

    /// Per-layer hidden states of joint state `s`.
    pub fn decode(&self, s: usize) -> &[usize] {
        &self.states[s * self.num_layers..(s + 1) * self.num_layers]
    }

    pub fn encode(&self, per_layer: &[usize]) -> usize {
        per_layer
            .iter()
            .zip(&self.strides)
            .map(|(h, stride)| h * stride)
            .sum()
    }
}

/// Serialized form of a [`ModelSpec`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpecDescriptor {
    pub layers: Vec<LayerDescriptor>,
    pub feature_dim: usize,
    pub influence_pairs: Vec<[usize; 2]>,
    pub label_mode: LabelMode,
}

/// Model structure and the canonical flat parameter layout.
///
/// Parameters are stored as state weights (layer, state, feature), then
/// transition weights (layer, from-state, to-state), then influence weights
/// (pair, state of the lower layer, state of the higher layer).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpecDescriptor", into = "ModelSpecDescriptor")]
pub struct ModelSpec {
    layers: Vec<LayerSpec>,
    feature_dim: usize,
    pairs: Vec<(usize, usize)>,
    label_mode: LabelMode,
    state_offsets: Vec<usize>,
    transition_offsets: Vec<usize>,
    influence_offsets: Vec<usize>,
    param_count: usize,
    joint: JointSpace,
}

/// Builds a spec from layer descriptors. `pairs = None` couples every
/// unordered pair of layers. The label mode is single-label when all layers
/// share one alphabet, multi-label otherwise.
pub fn build_model_spec(
    layers: &[LayerDescriptor],
    feature_dim: usize,
    pairs: Option<&[PairDescriptor]>,
) -> Result<ModelSpec> {
    let same_alphabet = layers.windows(2).all(|w| w[0].labels == w[1].labels);
    let mode = if same_alphabet {
        LabelMode::Single
    } else {
        LabelMode::Multi
    };
    ModelSpec::new(layers, feature_dim, pairs, mode)
}

impl ModelSpec {
    pub fn new(
        layers: &[LayerDescriptor],
        feature_dim: usize,
        pairs: Option<&[PairDescriptor]>,
        label_mode: LabelMode,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidSpec("at least one layer is required".into()));
        }
        if feature_dim == 0 {
            return Err(Error::InvalidSpec("feature_dim must be at least 1".into()));
        }
        let layer_specs = layers
            .iter()
            .map(|d| LayerSpec::new(LabelAlphabet::new(&d.labels)?, d.states_per_label.clone()))
            .collect::<Result<Vec<_>>>()?;
        if label_mode == LabelMode::Single
            && layer_specs
                .windows(2)
                .any(|w| w[0].alphabet != w[1].alphabet)
        {
            return Err(Error::InvalidSpec(
                "single-label mode requires every layer to share one alphabet".into(),
            ));
        }

        let num_layers = layer_specs.len();
        let mut normalized: Vec<(usize, usize)> = Vec::new();
        match pairs {
            None => {
                for i in 0..num_layers {
                    for j in i + 1..num_layers {
                        normalized.push((i, j));
                    }
                }
            }
            Some(pairs) => {
                for p in pairs {
                    if p.lag != 0 {
                        return Err(Error::InvalidSpec(format!(
                            "influence pair ({}, {}) has lag {}; only same-instant influence is supported",
                            p.first, p.second, p.lag
                        )));
                    }
                    if p.first >= num_layers || p.second >= num_layers {
                        return Err(Error::InvalidSpec(format!(
                            "influence pair ({}, {}) references a missing layer (have {num_layers})",
                            p.first, p.second
                        )));
                    }
                    if p.first == p.second {
                        return Err(Error::InvalidSpec(format!(
                            "influence pair ({}, {}) couples a layer with itself",
                            p.first, p.second
                        )));
                    }
                    let pair = (p.first.min(p.second), p.first.max(p.second));
                    if normalized.contains(&pair) {
                        return Err(Error::InvalidSpec(format!(
                            "duplicate influence pair ({}, {})",
                            pair.0, pair.1
                        )));
                    }
                    normalized.push(pair);
                }
                normalized.sort_unstable();
            }
        }

        let sizes: Vec<usize> = layer_specs.iter().map(LayerSpec::num_states).collect();
        let mut cursor = 0;
        let mut state_offsets = Vec::with_capacity(num_layers);
        for &n in &sizes {
            state_offsets.push(cursor);
            cursor += n * feature_dim;
        }
        let mut transition_offsets = Vec::with_capacity(num_layers);
        for &n in &sizes {
            transition_offsets.push(cursor);
            cursor += n * n;
        }
        let mut influence_offsets = Vec::with_capacity(normalized.len());
        for &(i, j) in &normalized {
            influence_offsets.push(cursor);
            cursor += sizes[i] * sizes[j];
        }

        Ok(Self {
            joint: JointSpace::new(&sizes),
            layers: layer_specs,
            feature_dim,
            pairs: normalized,
            label_mode,
            state_offsets,
            transition_offsets,
            influence_offsets,
            param_count: cursor,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &LayerSpec {
        &self.layers[i]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Unordered influence pairs, stored as `(lower, higher)` in ascending order.
    pub fn influence_pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn label_mode(&self) -> LabelMode {
        self.label_mode
    }

    pub fn is_single_label(&self) -> bool {
        self.label_mode == LabelMode::Single
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn joint(&self) -> &JointSpace {
        &self.joint
    }

    pub fn joint_size(&self) -> usize {
        self.joint.size
    }

    /// Global hidden-state index of `local_state` within `label`'s block.
    pub fn state_index(&self, layer: usize, label: usize, local_state: usize) -> Result<usize> {
        let l = self
            .layers
            .get(layer)
            .filter(|l| label < l.num_labels() && local_state < l.states_per_label[label])
            .ok_or(Error::StateOutOfRange {
                layer,
                label,
                state: local_state,
            })?;
        Ok(l.block_start[label] + local_state)
    }

    /// Inverse of [`state_index`](Self::state_index): `(label, local_state)`.
    pub fn state_label(&self, layer: usize, state: usize) -> (usize, usize) {
        let l = &self.layers[layer];
        let label = l.label_of(state);
        (label, state - l.block_start[label])
    }

    pub fn state_weight_index(&self, layer: usize, state: usize, feature: usize) -> usize {
        self.state_offsets[layer] + state * self.feature_dim + feature
    }

    /// Start of the contiguous `|H_i| × D` block of state weights for `layer`.
    pub fn state_block(&self, layer: usize) -> Range<usize> {
        let start = self.state_offsets[layer];
        start..start + self.layers[layer].num_states() * self.feature_dim
    }

    pub fn transition_weight_index(&self, layer: usize, from: usize, to: usize) -> usize {
        self.transition_offsets[layer] + from * self.layers[layer].num_states() + to
    }

    /// Position of the unordered pair `{i, j}` in [`influence_pairs`](Self::influence_pairs).
    pub fn pair_position(&self, i: usize, j: usize) -> Option<usize> {
        let key = (i.min(j), i.max(j));
        self.pairs.iter().position(|&p| p == key)
    }

    /// Influence weight for pair number `pair` with states `a` (lower layer)
    /// and `b` (higher layer).
    pub fn influence_weight_index(&self, pair: usize, a: usize, b: usize) -> usize {
        let (_, hi) = self.pairs[pair];
        self.influence_offsets[pair] + a * self.layers[hi].num_states() + b
    }

    /// Influence weight between `state_i` of layer `i` and `state_j` of
    /// layer `j`, independent of argument orientation.
    pub fn influence_weight_index_between(
        &self,
        i: usize,
        state_i: usize,
        j: usize,
        state_j: usize,
    ) -> Option<usize> {
        let pair = self.pair_position(i, j)?;
        Some(if i < j {
            self.influence_weight_index(pair, state_i, state_j)
        } else {
            self.influence_weight_index(pair, state_j, state_i)
        })
    }

    pub fn descriptor(&self) -> ModelSpecDescriptor {
        ModelSpecDescriptor {
            layers: self.layers.iter().map(LayerSpec::descriptor).collect(),
            feature_dim: self.feature_dim,
            influence_pairs: self.pairs.iter().map(|&(i, j)| [i, j]).collect(),
            label_mode: self.label_mode,
        }
    }

    /// Same structure with a different feature dimensionality.
    pub fn with_feature_dim(&self, feature_dim: usize) -> Result<Self> {
        let mut d = self.descriptor();
        d.feature_dim = feature_dim;
        Self::try_from(d)
    }
}

impl TryFrom<ModelSpecDescriptor> for ModelSpec {
    type Error = Error;

    fn try_from(d: ModelSpecDescriptor) -> Result<Self> {
        let pairs: Vec<PairDescriptor> = d
            .influence_pairs
            .iter()
            .map(|p| PairDescriptor::same_instant(p[0], p[1]))
            .collect();
        ModelSpec::new(&d.layers, d.feature_dim, Some(&pairs), d.label_mode)
    }
}

impl From<ModelSpec> for ModelSpecDescriptor {
    fn from(s: ModelSpec) -> Self {
        s.descriptor()
    }
}

/// Flat parameter vector θ laid out as described on [`ModelSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(spec: &ModelSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(Error::DimensionMismatch {
                expected: spec.param_count(),
                found: values.len(),
                context: "parameter vector",
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        Ok(Self(values))
    }

    pub fn zeros(spec: &ModelSpec) -> Self {
        Self(vec![0.0; spec.param_count()])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl std::ops::Index<usize> for ParameterVector {
    type Output = f64;

    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}
