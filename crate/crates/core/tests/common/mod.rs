//! Random small instances and independently coded reference models.
#![allow(dead_code)]

use fldcrf::graph::build_tables;
use fldcrf::inference::{
    brute_force_oracle, filtered_label_marginals, forward, sequence_conditional_loglik, smoothed_label_marginals,
    viterbi, LabelMarginals,
};
use fldcrf::{build_model_spec, Frame, LayerDescriptor, ModelSpec, ParameterVector, Sequence, SequenceType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LABELS: [&str; 2] = ["c", "n"];
pub const SECOND_LABELS: [&str; 2] = ["a", "b"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_theta(spec: &ModelSpec, scale: f64, rng: &mut ChaCha8Rng) -> ParameterVector {
    ParameterVector::new(spec, (0..spec.param_count()).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

fn random_x(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

/// Labeled sequence matching the spec's label mode.
pub fn random_sequence(spec: &ModelSpec, len: usize, rng: &mut ChaCha8Rng) -> Sequence {
    let frames = (0..len)
        .map(|t| {
            let x = random_x(spec.feature_dim(), rng);
            if spec.is_single_label() {
                Frame::labeled(t as i64, x, LABELS[rng.gen_range(0..2)])
            } else {
                let labels = spec
                    .layers()
                    .iter()
                    .map(|layer| layer.alphabet().label(rng.gen_range(0..layer.num_labels())).to_string())
                    .collect();
                Frame::multi_labeled(t as i64, x, labels)
            }
        })
        .collect();
    Sequence::new("r", frames, SequenceType::Generic, None).unwrap()
}

pub fn unlabeled(seq: &Sequence) -> Sequence {
    let frames = seq.frames().iter().map(|f| Frame::unlabeled(f.t, f.x.clone())).collect();
    Sequence::new(seq.id(), frames, seq.sequence_type(), seq.event_instant()).unwrap()
}

/// `L ∈ {1, 2}`, `|H_i| ≤ 4`, `T ≤ 5`, `D ≤ 3`, at most a million joint paths.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (ModelSpec, ParameterVector, Sequence) {
    let layers = rng.gen_range(1..=2);
    let multi = layers == 2 && rng.gen_bool(0.5);
    let d = rng.gen_range(1..=3);
    let descs: Vec<_> = (0..layers)
        .map(|i| {
            let labels = if multi && i == 1 { SECOND_LABELS } else { LABELS };
            let first = rng.gen_range(1..=3);
            let second = rng.gen_range(1..=4 - first);
            LayerDescriptor::new(&labels, &[first, second])
        })
        .collect();
    let spec = build_model_spec(&descs, d, None).unwrap();
    let m = spec.joint_size() as f64;
    let max_len = (1..=5).rev().find(|&t| m.powi(t) <= 1e6).unwrap();
    let len = rng.gen_range(1..=max_len as usize);
    let theta = random_theta(&spec, 1.0, rng);
    let seq = random_sequence(&spec, len, rng);
    (spec, theta, seq)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn marginal_error(a: &LabelMarginals, b: &LabelMarginals) -> f64 {
    assert_eq!(a.outcomes(), b.outcomes());
    (0..a.len())
        .flat_map(|t| a.row(t).iter().zip(b.row(t)).map(|(x, y)| rel(*x, *y)).collect::<Vec<_>>())
        .fold(0.0, f64::max)
}

/// Largest relative disagreement between the exact algorithms and the
/// enumeration oracle, plus whether the Viterbi path matched.
pub fn oracle_discrepancy(spec: &ModelSpec, theta: &ParameterVector, seq: &Sequence) -> (f64, bool) {
    let oracle = brute_force_oracle(spec, theta, seq).unwrap();
    let tables = build_tables(spec, theta, seq).unwrap();
    let fwd = forward(&tables).unwrap();
    let mut err = rel(fwd.log_z(), oracle.log_z);
    err = err.max(marginal_error(&filtered_label_marginals(spec, &fwd), &oracle.filtered));
    err = err.max(marginal_error(&smoothed_label_marginals(spec, &tables).unwrap(), &oracle.smoothed));
    let path = viterbi(spec, &tables).unwrap();
    err = err.max(rel(path.score, oracle.best_score));
    let ll = sequence_conditional_loglik(spec, theta, seq).unwrap();
    err = err.max(rel(ll, oracle.loglik.expect("labeled sequence")));
    (err, path.states == oracle.best_path)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    top + v.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

/// Filtered and smoothed state marginals of a plain chain given node
/// scores `node[t][s]` and transition scores `trans[a][b]`, computed with
/// log-space messages.
pub fn chain_marginals(node: &[Vec<f64>], trans: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let len = node.len();
    let m = trans.len();
    let mut la = vec![vec![0.0; m]; len];
    la[0] = node[0].clone();
    for t in 1..len {
        for s in 0..m {
            let terms: Vec<f64> = (0..m).map(|p| la[t - 1][p] + trans[p][s]).collect();
            la[t][s] = node[t][s] + log_sum_exp(&terms);
        }
    }
    let mut lb = vec![vec![0.0; m]; len];
    for t in (0..len - 1).rev() {
        for s in 0..m {
            let terms: Vec<f64> = (0..m).map(|n| trans[s][n] + node[t + 1][n] + lb[t + 1][n]).collect();
            lb[t][s] = log_sum_exp(&terms);
        }
    }
    let log_z = log_sum_exp(&la[len - 1]);
    let filtered = la
        .iter()
        .map(|row| {
            let z = log_sum_exp(row);
            row.iter().map(|v| (v - z).exp()).collect()
        })
        .collect();
    let smoothed = (0..len)
        .map(|t| (0..m).map(|s| (la[t][s] + lb[t][s] - log_z).exp()).collect())
        .collect();
    (filtered, smoothed)
}

/// Layer-`layer` state and transition scores of `seq`, read straight off
/// `theta` by parameter index.
fn layer_scores(spec: &ModelSpec, theta: &ParameterVector, seq: &Sequence, layer: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let w = theta.as_slice();
    let h = spec.layer(layer).num_states();
    let node = seq
        .frames()
        .iter()
        .map(|f| {
            (0..h)
                .map(|s| f.x.iter().enumerate().map(|(k, x)| w[spec.state_weight_index(layer, s, k)] * x).sum())
                .collect()
        })
        .collect();
    let trans = (0..h)
        .map(|a| (0..h).map(|b| w[spec.transition_weight_index(layer, a, b)]).collect())
        .collect();
    (node, trans)
}

/// LDCRF label marginals (filtered, smoothed): hidden chain over one
/// layer's states, label probability summed over the label's block.
pub fn ldcrf_label_marginals(spec: &ModelSpec, theta: &ParameterVector, seq: &Sequence, layer: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (node, trans) = layer_scores(spec, theta, seq, layer);
    let (filtered, smoothed) = chain_marginals(&node, &trans);
    let lay = spec.layer(layer);
    let to_labels = |rows: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|row| (0..lay.num_labels()).map(|l| lay.state_range(l).map(|s| row[s]).sum()).collect())
            .collect()
    };
    (to_labels(filtered), to_labels(smoothed))
}

/// Linear-chain CRF over labels with `score = Σ_t w_{y_t}·x_t + Σ_t A_{y_{t−1} y_t}`,
/// where `spec` has one hidden state per label.
pub fn lccrf_label_marginals(spec: &ModelSpec, theta: &ParameterVector, seq: &Sequence) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let w = theta.as_slice();
    let labels = spec.layer(0).num_labels();
    let node: Vec<Vec<f64>> = seq
        .frames()
        .iter()
        .map(|f| {
            (0..labels)
                .map(|y| {
                    let s = spec.state_index(0, y, 0).unwrap();
                    let mut v = 0.0;
                    for (k, x) in f.x.iter().enumerate() {
                        v += w[spec.state_weight_index(0, s, k)] * x;
                    }
                    v
                })
                .collect()
        })
        .collect();
    let trans: Vec<Vec<f64>> = (0..labels)
        .map(|a| {
            (0..labels)
                .map(|b| {
                    let (sa, sb) = (spec.state_index(0, a, 0).unwrap(), spec.state_index(0, b, 0).unwrap());
                    w[spec.transition_weight_index(0, sa, sb)]
                })
                .collect()
        })
        .collect();
    chain_marginals(&node, &trans)
}

/// Rows of `m` as plain vectors, in the model's label order.
pub fn rows(m: &LabelMarginals) -> Vec<Vec<f64>> {
    (0..m.len()).map(|t| m.row(t).to_vec()).collect()
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}
