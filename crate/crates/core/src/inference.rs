//! Exact inference on the factored chain.
//!
//! Forward messages are rescaled to sum to one at every instant and the log
//! normalizers are accumulated, so `log Z = Σ_t log c_t`. Label marginals sum
//! the hidden-state marginals over each label's disjoint block.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{dot, PotentialTables};
use crate::seqmodel::{ModelSpec, ParameterVector, Sequence};

/// Result of the scaled forward recursion.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardResult {
    len: usize,
    size: usize,
    scaled_alpha: Vec<f64>,
    log_scale: Vec<f64>,
    log_z: f64,
}

impl ForwardResult {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_states(&self) -> usize {
        self.size
    }

    /// Normalized forward message at `t`, i.e. `P(h_t | x_{1:t})`.
    pub fn alpha(&self, t: usize) -> &[f64] {
        &self.scaled_alpha[t * self.size..(t + 1) * self.size]
    }

    pub fn log_scale(&self) -> &[f64] {
        &self.log_scale
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }
}

/// Which joint states are admissible at each instant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateMask {
    size: usize,
    allowed: Vec<bool>,
}

impl StateMask {
    pub fn allowed(&self, t: usize, s: usize) -> bool {
        self.allowed[t * self.size + s]
    }
}

/// Scale factors below this send a pass to the log-domain recursion.
const MIN_SCALE: f64 = 1e-150;

fn lse(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let top = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + values.map(|v| (v - top).exp()).sum::<f64>().ln()
}

/// Potentials for one pass, restricted to the admissible states.
///
/// The fast path works with exponentiated potentials: transitions shifted
/// per destination column with the shift folded into the node rows, and
/// each row shifted by its admissible maximum. When a scale factor
/// degenerates the pass is redone in the log domain.
pub(crate) struct ScaledPotentials {
    len: usize,
    size: usize,
    log_node: Vec<f64>,
    trans: Vec<f64>,
    phi: Vec<f64>,
    phi_shift: Vec<f64>,
    psi: Vec<f64>,
    psi_t: Vec<f64>,
}

impl ScaledPotentials {
    pub(crate) fn new(tables: &PotentialTables, mask: Option<&StateMask>) -> Self {
        let len = tables.len();
        let m = tables.num_states();
        let trans = tables.trans_matrix().to_vec();
        let col_shift: Vec<f64> = (0..m)
            .map(|to| (0..m).map(|from| trans[from * m + to]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let mut psi = vec![0.0; m * m];
        let mut psi_t = vec![0.0; m * m];
        for from in 0..m {
            for to in 0..m {
                let v = (trans[from * m + to] - col_shift[to]).exp();
                psi[from * m + to] = v;
                psi_t[to * m + from] = v;
            }
        }
        let mut log_node = vec![f64::NEG_INFINITY; len * m];
        let mut phi = vec![0.0; len * m];
        let mut phi_shift = Vec::with_capacity(len);
        let mut shifted = vec![f64::NEG_INFINITY; m];
        for t in 0..len {
            let row = tables.node_row(t);
            for s in 0..m {
                if mask.map_or(true, |mk| mk.allowed(t, s)) {
                    log_node[t * m + s] = row[s];
                    shifted[s] = row[s] + if t > 0 { col_shift[s] } else { 0.0 };
                } else {
                    shifted[s] = f64::NEG_INFINITY;
                }
            }
            let shift = shifted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            phi_shift.push(shift);
            for s in 0..m {
                phi[t * m + s] = (shifted[s] - shift).exp();
            }
        }
        Self {
            len,
            size: m,
            log_node,
            trans,
            phi,
            phi_shift,
            psi,
            psi_t,
        }
    }

    fn phi_row(&self, t: usize) -> &[f64] {
        &self.phi[t * self.size..(t + 1) * self.size]
    }

    fn check_admissible(&self) -> Result<()> {
        match self.phi_shift.iter().position(|v| !v.is_finite()) {
            Some(t) => Err(Error::Numerical(format!("no admissible state at instant {t}"))),
            None => Ok(()),
        }
    }

    pub(crate) fn forward(&self) -> Result<ForwardResult> {
        self.check_admissible()?;
        match self.fast_forward() {
            Some((fwd, _)) => Ok(fwd),
            None => self.log_forward().map(|(fwd, _)| fwd),
        }
    }

    /// Forward pass plus smoothed node marginals `γ_t(s)` (T × M) and
    /// expected transition counts `Σ_t ξ_t(s', s)` (M × M).
    pub(crate) fn posterior(
        &self,
        node_marginals: &mut [f64],
        pair_counts: &mut [f64],
    ) -> Result<ForwardResult> {
        self.check_admissible()?;
        if let Some((fwd, scale)) = self.fast_forward() {
            let beta = self.backward(&scale);
            self.accumulate(&fwd, &scale, &beta, node_marginals, pair_counts);
            if node_marginals.iter().chain(pair_counts.iter()).all(|v| v.is_finite()) {
                return Ok(fwd);
            }
        }
        self.log_posterior(node_marginals, pair_counts)
    }

    fn fast_forward(&self) -> Option<(ForwardResult, Vec<f64>)> {
        let (len, m) = (self.len, self.size);
        let mut alpha = vec![0.0; len * m];
        let mut log_scale = Vec::with_capacity(len);
        let mut scale = Vec::with_capacity(len);
        for t in 0..len {
            let (done, rest) = alpha.split_at_mut(t * m);
            let cur = &mut rest[..m];
            let phi = self.phi_row(t);
            if t == 0 {
                cur.copy_from_slice(phi);
            } else {
                let prev = &done[(t - 1) * m..];
                for (s, slot) in cur.iter_mut().enumerate() {
                    *slot = if phi[s] == 0.0 {
                        0.0
                    } else {
                        dot(prev, &self.psi_t[s * m..(s + 1) * m]) * phi[s]
                    };
                }
            }
            let c: f64 = cur.iter().sum();
            if !(c >= MIN_SCALE && c.is_finite()) {
                return None;
            }
            let inv = 1.0 / c;
            cur.iter_mut().for_each(|v| *v *= inv);
            scale.push(c);
            log_scale.push(c.ln() + self.phi_shift[t]);
        }
        let log_z = log_scale.iter().sum();
        let fwd = ForwardResult {
            len,
            size: m,
            scaled_alpha: alpha,
            log_scale,
            log_z,
        };
        Some((fwd, scale))
    }

    /// Scaled backward messages; `alpha ⊙ beta` is the smoothed marginal.
    fn backward(&self, scale: &[f64]) -> Vec<f64> {
        let (len, m) = (self.len, self.size);
        let mut beta = vec![0.0; len * m];
        beta[(len - 1) * m..].iter_mut().for_each(|v| *v = 1.0);
        let mut weighted = vec![0.0; m];
        for t in (0..len - 1).rev() {
            let c = scale[t + 1];
            let phi = self.phi_row(t + 1);
            let (head, tail) = beta.split_at_mut((t + 1) * m);
            let next = &tail[..m];
            for s in 0..m {
                weighted[s] = phi[s] * next[s] / c;
            }
            let cur = &mut head[t * m..];
            for (s, slot) in cur.iter_mut().enumerate() {
                *slot = dot(&self.psi[s * m..(s + 1) * m], &weighted);
            }
        }
        beta
    }

    fn accumulate(
        &self,
        fwd: &ForwardResult,
        scale: &[f64],
        beta: &[f64],
        node_marginals: &mut [f64],
        pair_counts: &mut [f64],
    ) {
        let (len, m) = (self.len, self.size);
        for t in 0..len {
            let a = fwd.alpha(t);
            let b = &beta[t * m..(t + 1) * m];
            for s in 0..m {
                node_marginals[t * m + s] = a[s] * b[s];
            }
        }
        let mut outer = vec![0.0; m * m];
        let mut right = vec![0.0; m];
        for t in 1..len {
            let c = scale[t];
            let phi = self.phi_row(t);
            let b = &beta[t * m..(t + 1) * m];
            for s in 0..m {
                right[s] = phi[s] * b[s] / c;
            }
            let prev = fwd.alpha(t - 1);
            for (from, &ap) in prev.iter().enumerate() {
                if ap == 0.0 {
                    continue;
                }
                let row = &mut outer[from * m..(from + 1) * m];
                for (slot, &r) in row.iter_mut().zip(&right) {
                    *slot += ap * r;
                }
            }
        }
        for (slot, (&o, &p)) in pair_counts.iter_mut().zip(outer.iter().zip(&self.psi)) {
            *slot = o * p;
        }
    }

    /// Unnormalized log forward messages and the matching `ForwardResult`.
    fn log_forward(&self) -> Result<(ForwardResult, Vec<f64>)> {
        let (len, m) = (self.len, self.size);
        let mut log_alpha = vec![f64::NEG_INFINITY; len * m];
        let mut scaled_alpha = vec![0.0; len * m];
        let mut log_scale = Vec::with_capacity(len);
        let mut prev_norm = 0.0;
        for t in 0..len {
            for s in 0..m {
                let node = self.log_node[t * m + s];
                if node == f64::NEG_INFINITY {
                    continue;
                }
                log_alpha[t * m + s] = if t == 0 {
                    node
                } else {
                    let prev = &log_alpha[(t - 1) * m..t * m];
                    node + lse((0..m).map(|from| prev[from] + self.trans[from * m + s]))
                };
            }
            let row = &log_alpha[t * m..(t + 1) * m];
            let norm = lse(row.iter().copied());
            if !norm.is_finite() {
                return Err(Error::Numerical(format!(
                    "forward message vanished at instant {t}"
                )));
            }
            for s in 0..m {
                scaled_alpha[t * m + s] = (row[s] - norm).exp();
            }
            log_scale.push(norm - prev_norm);
            prev_norm = norm;
        }
        let fwd = ForwardResult {
            len,
            size: m,
            scaled_alpha,
            log_scale,
            log_z: prev_norm,
        };
        Ok((fwd, log_alpha))
    }

    fn log_posterior(
        &self,
        node_marginals: &mut [f64],
        pair_counts: &mut [f64],
    ) -> Result<ForwardResult> {
        let (len, m) = (self.len, self.size);
        let (fwd, log_alpha) = self.log_forward()?;
        let log_z = fwd.log_z;
        let mut log_beta = vec![0.0; len * m];
        let mut ahead = vec![0.0; m];
        for t in (0..len - 1).rev() {
            for s in 0..m {
                ahead[s] = self.log_node[(t + 1) * m + s] + log_beta[(t + 1) * m + s];
            }
            for from in 0..m {
                log_beta[t * m + from] =
                    lse((0..m).map(|to| self.trans[from * m + to] + ahead[to]));
            }
        }
        for (slot, (a, b)) in node_marginals.iter_mut().zip(log_alpha.iter().zip(&log_beta)) {
            *slot = (a + b - log_z).exp();
        }
        pair_counts.iter_mut().for_each(|v| *v = 0.0);
        for t in 1..len {
            for from in 0..m {
                let a = log_alpha[(t - 1) * m + from];
                if a == f64::NEG_INFINITY {
                    continue;
                }
                for to in 0..m {
                    let w = self.trans[from * m + to]
                        + self.log_node[t * m + to]
                        + log_beta[t * m + to];
                    pair_counts[from * m + to] += (a + w - log_z).exp();
                }
            }
        }
        Ok(fwd)
    }
}

/// Scaled forward recursion `α_t ∝ Φ_t ⊙ (Ψᵀ α_{t-1})`.
pub fn forward(tables: &PotentialTables) -> Result<ForwardResult> {
    ScaledPotentials::new(tables, None).forward()
}

/// Forward recursion restricted to the admissible states of `mask`.
pub fn forward_masked(tables: &PotentialTables, mask: &StateMask) -> Result<ForwardResult> {
    ScaledPotentials::new(tables, Some(mask)).forward()
}

/// Per-layer label indices of every frame (`T × L`).
///
/// In single-label mode a frame may carry one label (shared by all layers)
/// or `L` identical labels.
pub fn encode_labels(spec: &ModelSpec, sequence: &Sequence) -> Result<Vec<Vec<usize>>> {
    let layers = spec.num_layers();
    sequence
        .frames()
        .iter()
        .enumerate()
        .map(|(pos, frame)| {
            let y = frame.y.as_ref().ok_or_else(|| Error::Unlabeled {
                id: sequence.id().to_string(),
                frame: pos,
            })?;
            let names: Vec<&String> = if spec.is_single_label() {
                if y.len() != 1 && !(y.len() == layers && y.iter().all(|l| l == &y[0])) {
                    return Err(Error::InvalidSequence {
                        id: sequence.id().to_string(),
                        reason: format!("frame {pos}: expected one label in single-label mode"),
                    });
                }
                vec![&y[0]; layers]
            } else {
                if y.len() != layers {
                    return Err(Error::InvalidSequence {
                        id: sequence.id().to_string(),
                        reason: format!("frame {pos}: expected {layers} labels, found {}", y.len()),
                    });
                }
                y.iter().collect()
            };
            names
                .iter()
                .enumerate()
                .map(|(i, name)| {
                    spec.layer(i)
                        .alphabet()
                        .index_of(name)
                        .ok_or_else(|| Error::UnknownLabel {
                            layer: i,
                            label: (*name).clone(),
                        })
                })
                .collect()
        })
        .collect()
}

/// Mask admitting only joint states whose per-layer hidden states lie in
/// the blocks of the frame labels.
pub fn label_mask(spec: &ModelSpec, sequence: &Sequence) -> Result<StateMask> {
    let labels = encode_labels(spec, sequence)?;
    let joint = spec.joint();
    let m = joint.size();
    let mut allowed = Vec::with_capacity(labels.len() * m);
    for y in &labels {
        for s in 0..m {
            let hs = joint.decode(s);
            allowed.push(
                hs.iter()
                    .enumerate()
                    .all(|(i, &h)| spec.layer(i).label_of(h) == y[i]),
            );
        }
    }
    Ok(StateMask { size: m, allowed })
}

/// Index of the label tuple `(ℓ_1, …, ℓ_L)` (layer 0 most significant).
fn tuple_index_of_states(spec: &ModelSpec) -> Vec<usize> {
    let joint = spec.joint();
    (0..joint.size())
        .map(|s| {
            joint
                .decode(s)
                .iter()
                .enumerate()
                .fold(0, |acc, (i, &h)| {
                    acc * spec.layer(i).num_labels() + spec.layer(i).label_of(h)
                })
        })
        .collect()
}

/// Per-instant probabilities over label outcomes.
///
/// In single-label mode the outcomes are the labels of the shared alphabet
/// (the agreeing tuples `(ℓ, …, ℓ)`, renormalized); otherwise they are all
/// label tuples in lexicographic order.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMarginals {
    outcomes: Vec<Vec<String>>,
    probs: Vec<f64>,
    len: usize,
}

impl LabelMarginals {
    /// Builds marginals from joint-state marginals (`T × M`, rows summing to one).
    pub fn from_state_marginals(spec: &ModelSpec, len: usize, state_probs: &[f64]) -> Self {
        let m = spec.joint_size();
        let tuple_of = tuple_index_of_states(spec);
        let counts: Vec<usize> = spec.layers().iter().map(|l| l.num_labels()).collect();
        let num_tuples: usize = counts.iter().product();
        let mut tuple_probs = vec![0.0; len * num_tuples];
        for t in 0..len {
            for s in 0..m {
                tuple_probs[t * num_tuples + tuple_of[s]] += state_probs[t * m + s];
            }
        }
        let decode_tuple = |mut k: usize| {
            let mut out = vec![0; counts.len()];
            for i in (0..counts.len()).rev() {
                out[i] = k % counts[i];
                k /= counts[i];
            }
            out
        };
        if spec.is_single_label() {
            let alphabet = spec.layer(0).alphabet();
            let n = alphabet.len();
            let diag: Vec<usize> = (0..n)
                .map(|l| {
                    (0..num_tuples)
                        .find(|&k| decode_tuple(k).iter().all(|&v| v == l))
                        .expect("diagonal tuple exists")
                })
                .collect();
            let mut probs = Vec::with_capacity(len * n);
            for t in 0..len {
                let row: Vec<f64> = diag.iter().map(|&k| tuple_probs[t * num_tuples + k]).collect();
                let total: f64 = row.iter().sum();
                if total > 0.0 {
                    probs.extend(row.iter().map(|p| p / total));
                } else {
                    probs.extend(std::iter::repeat(1.0 / n as f64).take(n));
                }
            }
            LabelMarginals {
                outcomes: alphabet.labels().iter().map(|l| vec![l.clone()]).collect(),
                probs,
                len,
            }
        } else {
            let outcomes = (0..num_tuples)
                .map(|k| {
                    decode_tuple(k)
                        .iter()
                        .enumerate()
                        .map(|(i, &l)| spec.layer(i).alphabet().label(l).to_string())
                        .collect()
                })
                .collect();
            LabelMarginals {
                outcomes,
                probs: tuple_probs,
                len,
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_outcomes(&self) -> usize {
        self.outcomes.len()
    }

    /// Labels of outcome `k` (one entry in single-label mode).
    pub fn outcome(&self, k: usize) -> &[String] {
        &self.outcomes[k]
    }

    pub fn outcomes(&self) -> &[Vec<String>] {
        &self.outcomes
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let k = self.outcomes.len();
        &self.probs[t * k..(t + 1) * k]
    }

    pub fn prob(&self, t: usize, k: usize) -> f64 {
        self.row(t)[k]
    }

    /// Probability of a single label at `t` (single-label outcomes only).
    pub fn label_prob(&self, t: usize, label: &str) -> Option<f64> {
        self.outcomes
            .iter()
            .position(|o| o.len() == 1 && o[0] == label)
            .map(|k| self.prob(t, k))
    }

    /// Most probable outcome per instant; ties go to the lowest index.
    pub fn argmax(&self) -> Vec<usize> {
        (0..self.len)
            .map(|t| {
                let row = self.row(t);
                let mut best = 0;
                for (k, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    /// Marginal over the labels of `layer` alone, summing the other layers
    /// out of the tuple probabilities (`T × N_layer`).
    pub fn layer_marginal(&self, spec: &ModelSpec, layer: usize) -> Vec<Vec<f64>> {
        let alphabet = spec.layer(layer).alphabet();
        let column = if self.outcomes.first().map_or(0, Vec::len) == 1 { 0 } else { layer };
        (0..self.len)
            .map(|t| {
                let mut out = vec![0.0; alphabet.len()];
                for (k, o) in self.outcomes.iter().enumerate() {
                    let l = alphabet.index_of(&o[column]).expect("outcome label in alphabet");
                    out[l] += self.prob(t, k);
                }
                out
            })
            .collect()
    }
}

/// Online label marginals `P(y_t | x_{1:t})` from a forward pass.
pub fn filtered_label_marginals(spec: &ModelSpec, forward: &ForwardResult) -> LabelMarginals {
    LabelMarginals::from_state_marginals(spec, forward.len, &forward.scaled_alpha)
}

/// Joint-state smoothed marginals `P(h_t | x_{1:T})` (`T × M`).
pub fn smoothed_state_marginals(tables: &PotentialTables) -> Result<Vec<f64>> {
    let m = tables.num_states();
    let mut gamma = vec![0.0; tables.len() * m];
    let mut pairs = vec![0.0; m * m];
    ScaledPotentials::new(tables, None).posterior(&mut gamma, &mut pairs)?;
    Ok(gamma)
}

/// Offline label marginals `P(y_t | x_{1:T})` by forward-backward.
pub fn smoothed_label_marginals(spec: &ModelSpec, tables: &PotentialTables) -> Result<LabelMarginals> {
    let gamma = smoothed_state_marginals(tables)?;
    Ok(LabelMarginals::from_state_marginals(spec, tables.len(), &gamma))
}

/// Best joint-state path and its unnormalized log-score.
#[derive(Clone, Debug, PartialEq)]
pub struct ViterbiPath {
    pub states: Vec<usize>,
    pub score: f64,
}

impl ViterbiPath {
    /// Per-layer label indices along the path.
    pub fn labels(&self, spec: &ModelSpec) -> Vec<Vec<usize>> {
        self.states
            .iter()
            .map(|&s| {
                spec.joint()
                    .decode(s)
                    .iter()
                    .enumerate()
                    .map(|(i, &h)| spec.layer(i).label_of(h))
                    .collect()
            })
            .collect()
    }
}

/// Max-product decoding in log space. Ties resolve to the lowest joint
/// state index, both at the final instant and at every backtrack step.
pub fn viterbi(spec: &ModelSpec, tables: &PotentialTables) -> Result<ViterbiPath> {
    let (len, m) = (tables.len(), tables.num_states());
    if m != spec.joint_size() {
        return Err(Error::DimensionMismatch {
            expected: spec.joint_size(),
            found: m,
            context: "potential tables",
        });
    }
    let mut delta = tables.node_row(0).to_vec();
    let mut back = vec![0usize; len * m];
    let mut next = vec![0.0; m];
    for t in 1..len {
        for s in 0..m {
            let mut best = 0;
            let mut best_v = delta[0] + tables.trans(0, s);
            for p in 1..m {
                let v = delta[p] + tables.trans(p, s);
                if v > best_v {
                    best_v = v;
                    best = p;
                }
            }
            back[t * m + s] = best;
            next[s] = best_v + tables.node(t, s);
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let mut last = 0;
    for s in 1..m {
        if delta[s] > delta[last] {
            last = s;
        }
    }
    let score = delta[last];
    let mut states = vec![0; len];
    states[len - 1] = last;
    for t in (1..len).rev() {
        states[t - 1] = back[t * m + states[t]];
    }
    Ok(ViterbiPath { states, score })
}

/// `log P(y | x, θ)`: constrained minus unconstrained log partition function.
pub fn sequence_conditional_loglik(
    spec: &ModelSpec,
    theta: &ParameterVector,
    sequence: &Sequence,
) -> Result<f64> {
    let mask = label_mask(spec, sequence)?;
    let tables = crate::graph::build_tables(spec, theta, sequence)?;
    let constrained = ScaledPotentials::new(&tables, Some(&mask)).forward()?;
    let free = ScaledPotentials::new(&tables, None).forward()?;
    Ok((constrained.log_z - free.log_z).min(0.0))
}

/// Largest number of joint paths the enumeration oracle accepts.
pub const ORACLE_PATH_LIMIT: f64 = 1e6;

/// Exhaustive enumeration of every joint hidden path.
#[derive(Clone, Debug)]
pub struct OracleResult {
    pub log_z: f64,
    /// Score of every path, lexicographic path order (instant 0 most significant).
    pub path_scores: Vec<f64>,
    pub best_path: Vec<usize>,
    pub best_score: f64,
    pub smoothed: LabelMarginals,
    pub filtered: LabelMarginals,
    /// Probability of every label-tuple sequence with nonzero mass, keyed
    /// by per-instant per-layer label indices.
    pub label_sequence_probs: BTreeMap<Vec<Vec<usize>>, f64>,
    /// `log P(y | x)` when the sequence is fully labeled.
    pub loglik: Option<f64>,
}

/// Direct `Σ_k θ_k f_k` for one step, read off the parameter indices.
fn step_score(
    spec: &ModelSpec,
    w: &[f64],
    x: &[f64],
    prev: Option<&[usize]>,
    cur: &[usize],
) -> f64 {
    let mut score = 0.0;
    for (i, &h) in cur.iter().enumerate() {
        for (k, &xv) in x.iter().enumerate() {
            score += w[spec.state_weight_index(i, h, k)] * xv;
        }
        if let Some(prev) = prev {
            score += w[spec.transition_weight_index(i, prev[i], h)];
        }
    }
    for (p, &(a, b)) in spec.influence_pairs().iter().enumerate() {
        score += w[spec.influence_weight_index(p, cur[a], cur[b])];
    }
    score
}

fn enumerate_scores(spec: &ModelSpec, w: &[f64], sequence: &Sequence, len: usize) -> Vec<f64> {
    let m = spec.joint_size();
    let joint = spec.joint();
    let mut scores = Vec::with_capacity(m.pow(len as u32));
    fn rec(
        spec: &ModelSpec,
        w: &[f64],
        sequence: &Sequence,
        len: usize,
        t: usize,
        prev: Option<usize>,
        acc: f64,
        out: &mut Vec<f64>,
    ) {
        let joint = spec.joint();
        for s in 0..joint.size() {
            let score = acc
                + step_score(
                    spec,
                    w,
                    &sequence.frames()[t].x,
                    prev.map(|p| joint.decode(p)),
                    joint.decode(s),
                );
            if t + 1 == len {
                out.push(score);
            } else {
                rec(spec, w, sequence, len, t + 1, Some(s), score, out);
            }
        }
    }
    let _ = (m, joint);
    rec(spec, w, sequence, len, 0, None, 0.0, &mut scores);
    scores
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Decodes lexicographic path number `index` into per-instant joint states.
fn path_of(mut index: usize, m: usize, len: usize) -> Vec<usize> {
    let mut path = vec![0; len];
    for t in (0..len).rev() {
        path[t] = index % m;
        index /= m;
    }
    path
}

/// Test oracle: enumerates all `M^T` joint paths.
pub fn brute_force_oracle(
    spec: &ModelSpec,
    theta: &ParameterVector,
    sequence: &Sequence,
) -> Result<OracleResult> {
    if theta.len() != spec.param_count() {
        return Err(Error::DimensionMismatch {
            expected: spec.param_count(),
            found: theta.len(),
            context: "parameter vector",
        });
    }
    if sequence.feature_dim() != spec.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.feature_dim(),
            found: sequence.feature_dim(),
            context: "sequence features",
        });
    }
    let m = spec.joint_size();
    let len = sequence.len();
    let paths = (m as f64).powi(len as i32);
    if paths > ORACLE_PATH_LIMIT {
        return Err(Error::InstanceTooLarge {
            paths,
            limit: ORACLE_PATH_LIMIT,
        });
    }
    let w = theta.as_slice();
    let joint = spec.joint();
    let labels_of = |s: usize| -> Vec<usize> {
        joint
            .decode(s)
            .iter()
            .enumerate()
            .map(|(i, &h)| spec.layer(i).label_of(h))
            .collect()
    };

    let scores = enumerate_scores(spec, w, sequence, len);
    let log_z = log_sum_exp(&scores);

    let mut best = 0;
    for (p, &v) in scores.iter().enumerate() {
        if v > scores[best] {
            best = p;
        }
    }

    let mut smoothed_states = vec![0.0; len * m];
    let mut label_sequence_probs: BTreeMap<Vec<Vec<usize>>, f64> = BTreeMap::new();
    for (p, &v) in scores.iter().enumerate() {
        let prob = (v - log_z).exp();
        let path = path_of(p, m, len);
        for (t, &s) in path.iter().enumerate() {
            smoothed_states[t * m + s] += prob;
        }
        let key: Vec<Vec<usize>> = path.iter().map(|&s| labels_of(s)).collect();
        *label_sequence_probs.entry(key).or_insert(0.0) += prob;
    }

    let mut filtered_states = vec![0.0; len * m];
    for t in 0..len {
        let prefix = enumerate_scores(spec, w, sequence, t + 1);
        let lz = log_sum_exp(&prefix);
        for (p, &v) in prefix.iter().enumerate() {
            filtered_states[t * m + p % m] += (v - lz).exp();
        }
    }

    let loglik = if sequence.is_labeled() {
        let y = encode_labels(spec, sequence)?;
        let consistent: Vec<f64> = scores
            .iter()
            .enumerate()
            .filter(|(p, _)| {
                path_of(*p, m, len)
                    .iter()
                    .enumerate()
                    .all(|(t, &s)| labels_of(s) == y[t])
            })
            .map(|(_, &v)| v)
            .collect();
        Some(if consistent.is_empty() {
            f64::NEG_INFINITY
        } else {
            log_sum_exp(&consistent) - log_z
        })
    } else {
        None
    };

    Ok(OracleResult {
        log_z,
        best_path: path_of(best, m, len),
        best_score: scores[best],
        path_scores: scores,
        smoothed: LabelMarginals::from_state_marginals(spec, len, &smoothed_states),
        filtered: LabelMarginals::from_state_marginals(spec, len, &filtered_states),
        label_sequence_probs,
        loglik,
    })
}
