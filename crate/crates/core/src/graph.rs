//! Log-potentials of the factored chain graph.
//!
//! At every instant the joint hidden state `(h_1, …, h_L)` scores
//! `Σ_i ⟨w_state(i, h_i), x_t⟩ + Σ_{(i,j)} w_infl(i, j, h_i, h_j)` and every
//! step between instants adds `Σ_i w_trans(i, h_{i,t-1}, h_{i,t})`. The
//! chain over joint states is homogeneous, so the transition table is
//! shared by all steps.

use crate::error::{Error, Result};
use crate::seqmodel::{ModelSpec, ParameterVector, Sequence};

/// Per-layer hidden states at one instant.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct JointState(pub Vec<usize>);

impl JointState {
    pub fn from_index(spec: &ModelSpec, index: usize) -> Self {
        JointState(spec.joint().decode(index).to_vec())
    }

    pub fn index(&self, spec: &ModelSpec) -> usize {
        spec.joint().encode(&self.0)
    }
}

fn check_theta(spec: &ModelSpec, theta: &ParameterVector) -> Result<()> {
    if theta.len() != spec.param_count() {
        return Err(Error::DimensionMismatch {
            expected: spec.param_count(),
            found: theta.len(),
            context: "parameter vector",
        });
    }
    Ok(())
}

fn check_state(spec: &ModelSpec, s: &[usize]) -> Result<()> {
    if s.len() != spec.num_layers() {
        return Err(Error::DimensionMismatch {
            expected: spec.num_layers(),
            found: s.len(),
            context: "joint state",
        });
    }
    for (i, &h) in s.iter().enumerate() {
        if h >= spec.layer(i).num_states() {
            return Err(Error::StateOutOfRange {
                layer: i,
                label: usize::MAX,
                state: h,
            });
        }
    }
    Ok(())
}

/// State plus influence score of joint state `s` at an instant with
/// observation `x`.
pub fn node_log_potential(
    spec: &ModelSpec,
    theta: &ParameterVector,
    x: &[f64],
    s: &[usize],
) -> Result<f64> {
    check_theta(spec, theta)?;
    check_state(spec, s)?;
    if x.len() != spec.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.feature_dim(),
            found: x.len(),
            context: "observation",
        });
    }
    let w = theta.as_slice();
    let mut score = 0.0;
    for (i, &h) in s.iter().enumerate() {
        let row = spec.state_weight_index(i, h, 0);
        score += dot(&w[row..row + x.len()], x);
    }
    for (p, &(a, b)) in spec.influence_pairs().iter().enumerate() {
        score += w[spec.influence_weight_index(p, s[a], s[b])];
    }
    Ok(score)
}

/// Sum of per-layer transition weights from `prev` to `curr`.
pub fn transition_log_potential(
    spec: &ModelSpec,
    theta: &ParameterVector,
    prev: &[usize],
    curr: &[usize],
) -> Result<f64> {
    check_theta(spec, theta)?;
    check_state(spec, prev)?;
    check_state(spec, curr)?;
    Ok(prev
        .iter()
        .zip(curr)
        .enumerate()
        .map(|(i, (&a, &b))| theta[spec.transition_weight_index(i, a, b)])
        .sum())
}

/// Precomputed log-potentials for one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialTables {
    len: usize,
    size: usize,
    node: Vec<f64>,
    trans: Vec<f64>,
}

impl PotentialTables {
    pub fn from_raw(len: usize, size: usize, node: Vec<f64>, trans: Vec<f64>) -> Result<Self> {
        if len == 0 || size == 0 || node.len() != len * size || trans.len() != size * size {
            return Err(Error::InvalidConfig("inconsistent potential table shapes".into()));
        }
        if node.iter().chain(&trans).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("potential tables".into()));
        }
        Ok(Self {
            len,
            size,
            node,
            trans,
        })
    }

    /// T
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// M
    pub fn num_states(&self) -> usize {
        self.size
    }

    pub fn node_row(&self, t: usize) -> &[f64] {
        &self.node[t * self.size..(t + 1) * self.size]
    }

    pub fn node(&self, t: usize, s: usize) -> f64 {
        self.node[t * self.size + s]
    }

    pub fn trans(&self, from: usize, to: usize) -> f64 {
        self.trans[from * self.size + to]
    }

    pub fn trans_matrix(&self) -> &[f64] {
        &self.trans
    }

    /// Unnormalized log-score of a joint-state path.
    pub fn path_score(&self, path: &[usize]) -> f64 {
        let mut score = 0.0;
        for (t, &s) in path.iter().enumerate() {
            score += self.node(t, s);
            if t > 0 {
                score += self.trans(path[t - 1], s);
            }
        }
        score
    }
}

/// Materializes node and transition tables for `sequence`.
pub fn build_tables(
    spec: &ModelSpec,
    theta: &ParameterVector,
    sequence: &Sequence,
) -> Result<PotentialTables> {
    check_theta(spec, theta)?;
    if sequence.feature_dim() != spec.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.feature_dim(),
            found: sequence.feature_dim(),
            context: "sequence features",
        });
    }
    let w = theta.as_slice();
    let joint = spec.joint();
    let m = joint.size();
    let d = spec.feature_dim();
    let layers = spec.num_layers();

    let mut influence = vec![0.0; m];
    for (s, slot) in influence.iter_mut().enumerate() {
        let hs = joint.decode(s);
        for (p, &(a, b)) in spec.influence_pairs().iter().enumerate() {
            *slot += w[spec.influence_weight_index(p, hs[a], hs[b])];
        }
    }

    let mut trans = vec![0.0; m * m];
    for from in 0..m {
        let hf = joint.decode(from);
        for to in 0..m {
            let ht = joint.decode(to);
            let mut v = 0.0;
            for i in 0..layers {
                v += w[spec.transition_weight_index(i, hf[i], ht[i])];
            }
            trans[from * m + to] = v;
        }
    }

    let mut layer_scores: Vec<Vec<f64>> = spec
        .layers()
        .iter()
        .map(|l| vec![0.0; l.num_states()])
        .collect();
    let mut node = vec![0.0; sequence.len() * m];
    for (t, frame) in sequence.frames().iter().enumerate() {
        for (i, scores) in layer_scores.iter_mut().enumerate() {
            let block = &w[spec.state_block(i)];
            for (h, sc) in scores.iter_mut().enumerate() {
                *sc = dot(&block[h * d..(h + 1) * d], &frame.x);
            }
        }
        let row = &mut node[t * m..(t + 1) * m];
        for (s, slot) in row.iter_mut().enumerate() {
            let hs = joint.decode(s);
            let mut v = influence[s];
            for i in 0..layers {
                v += layer_scores[i][hs[i]];
            }
            *slot = v;
        }
    }
    if node.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "node potentials of sequence {}",
            sequence.id()
        )));
    }
    PotentialTables::from_raw(sequence.len(), m, node, trans)
}

/// Global feature counts `F_k(h, x) = Σ_t f_k(h_{t-1}, h_t, x, t)` of a
/// joint-state path, one entry per parameter.
pub fn feature_counts(spec: &ModelSpec, sequence: &Sequence, path: &[usize]) -> Result<Vec<f64>> {
    if path.len() != sequence.len() {
        return Err(Error::DimensionMismatch {
            expected: sequence.len(),
            found: path.len(),
            context: "path length",
        });
    }
    let joint = spec.joint();
    let mut counts = vec![0.0; spec.param_count()];
    for (t, (&s, frame)) in path.iter().zip(sequence.frames()).enumerate() {
        if s >= joint.size() {
            return Err(Error::InvalidConfig(format!("joint state {s} out of range")));
        }
        let hs = joint.decode(s);
        for (i, &h) in hs.iter().enumerate() {
            for (k, &xv) in frame.x.iter().enumerate() {
                counts[spec.state_weight_index(i, h, k)] += xv;
            }
        }
        for (p, &(a, b)) in spec.influence_pairs().iter().enumerate() {
            counts[spec.influence_weight_index(p, hs[a], hs[b])] += 1.0;
        }
        if t > 0 {
            let prev = joint.decode(path[t - 1]);
            for (i, (&from, &to)) in prev.iter().zip(hs).enumerate() {
                counts[spec.transition_weight_index(i, from, to)] += 1.0;
            }
        }
    }
    Ok(counts)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
