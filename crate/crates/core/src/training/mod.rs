//! Penalized conditional maximum-likelihood training.
//!
//! The objective is `Σ_n log P(y_n | x_n, θ) − ‖θ‖² / (2σ²)`. Its gradient is
//! the difference between feature expectations under the label-constrained
//! and the free posterior, both obtained from the scaled forward-backward
//! pass used at inference time.

mod lbfgs;
mod model_file;

pub use lbfgs::{minimize, LbfgsOutcome, LbfgsSettings};
pub use model_file::{load_model, save_model, TrainedModel, MODEL_FORMAT_VERSION};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::build_tables;
use crate::inference::{label_mask, ScaledPotentials};
use crate::seqmodel::{Dataset, ModelSpec, ParameterVector, Sequence};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub sigma2: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            sigma2: 10.0,
            max_iterations: 500,
            gradient_tolerance: 1e-5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gradient tolerance must be positive, got {}",
                self.gradient_tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Penalized log-likelihood at the returned parameters.
    pub final_objective: f64,
    pub iterations: usize,
    /// Penalized log-likelihood after initialization and after every step.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

/// Entries drawn i.i.d. from `U[−0.01, 0.01]` with a seeded ChaCha8 stream.
pub fn initialize_parameters(spec: &ModelSpec, seed: u64) -> ParameterVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..spec.param_count())
        .map(|_| rng.gen_range(-0.01..=0.01))
        .collect();
    ParameterVector::new(spec, values).expect("finite values of the right length")
}

/// Log-likelihood of one sequence and the gradient of it with respect to θ.
fn sequence_term(spec: &ModelSpec, theta: &ParameterVector, seq: &Sequence) -> Result<(f64, Vec<f64>)> {
    let mask = label_mask(spec, seq)?;
    let tables = build_tables(spec, theta, seq)?;
    let (len, m) = (seq.len(), spec.joint_size());
    let mut gamma_free = vec![0.0; len * m];
    let mut gamma_clamped = vec![0.0; len * m];
    let mut xi_free = vec![0.0; m * m];
    let mut xi_clamped = vec![0.0; m * m];
    let free = ScaledPotentials::new(&tables, None).posterior(&mut gamma_free, &mut xi_free)?;
    let clamped =
        ScaledPotentials::new(&tables, Some(&mask)).posterior(&mut gamma_clamped, &mut xi_clamped)?;

    let d = spec.feature_dim();
    let joint = spec.joint();
    let mut grad = vec![0.0; spec.param_count()];

    // Σ_t Δγ_t(s) x_t per joint state, then projected onto each layer's state
    let mut by_state = vec![0.0; m * d];
    let mut occupancy = vec![0.0; m];
    for (t, frame) in seq.frames().iter().enumerate() {
        for s in 0..m {
            let delta = gamma_clamped[t * m + s] - gamma_free[t * m + s];
            if delta == 0.0 {
                continue;
            }
            occupancy[s] += delta;
            let row = &mut by_state[s * d..(s + 1) * d];
            for (acc, xv) in row.iter_mut().zip(&frame.x) {
                *acc += delta * xv;
            }
        }
    }
    for s in 0..m {
        let hs = joint.decode(s);
        for (i, &h) in hs.iter().enumerate() {
            let base = spec.state_weight_index(i, h, 0);
            for (g, v) in grad[base..base + d].iter_mut().zip(&by_state[s * d..(s + 1) * d]) {
                *g += v;
            }
        }
        for (p, &(a, b)) in spec.influence_pairs().iter().enumerate() {
            grad[spec.influence_weight_index(p, hs[a], hs[b])] += occupancy[s];
        }
    }
    for from in 0..m {
        let hf = joint.decode(from);
        for to in 0..m {
            let delta = xi_clamped[from * m + to] - xi_free[from * m + to];
            if delta == 0.0 {
                continue;
            }
            let ht = joint.decode(to);
            for i in 0..hf.len() {
                grad[spec.transition_weight_index(i, hf[i], ht[i])] += delta;
            }
        }
    }
    Ok((clamped.log_z() - free.log_z(), grad))
}

fn check_dataset(spec: &ModelSpec, theta: &ParameterVector, dataset: &Dataset) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::InvalidDataset("training dataset is empty".into()));
    }
    if theta.len() != spec.param_count() {
        return Err(Error::DimensionMismatch {
            expected: spec.param_count(),
            found: theta.len(),
            context: "parameter vector",
        });
    }
    if let Some(d) = dataset.feature_dim() {
        if d != spec.feature_dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.feature_dim(),
                found: d,
                context: "dataset features",
            });
        }
    }
    Ok(())
}

/// Unpenalized `Σ_n log P(y_n | x_n)` and its gradient.
///
/// Per-sequence terms may run on the current rayon pool. They are summed
/// sequentially in order of sequence id (dataset position breaks ties), so
/// the result does not depend on thread count or on dataset order when ids
/// are distinct.
pub fn data_term(spec: &ModelSpec, theta: &ParameterVector, dataset: &Dataset) -> Result<(f64, Vec<f64>)> {
    check_dataset(spec, theta, dataset)?;
    let seqs = dataset.sequences();
    let terms: Vec<(f64, Vec<f64>)> = seqs
        .par_iter()
        .map(|seq| sequence_term(spec, theta, seq))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    order.sort_by(|&a, &b| seqs[a].id().cmp(seqs[b].id()));
    let mut value = 0.0;
    let mut grad = vec![0.0; spec.param_count()];
    for n in order {
        value += terms[n].0;
        for (g, v) in grad.iter_mut().zip(&terms[n].1) {
            *g += v;
        }
    }
    Ok((value, grad))
}

/// Penalized objective `L(θ)` and `∇L(θ)`.
pub fn objective_and_gradient(
    spec: &ModelSpec,
    theta: &ParameterVector,
    dataset: &Dataset,
    sigma2: f64,
) -> Result<(f64, Vec<f64>)> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidConfig(format!("sigma2 must be positive, got {sigma2}")));
    }
    let (mut value, mut grad) = data_term(spec, theta, dataset)?;
    let w = theta.as_slice();
    value -= w.iter().map(|v| v * v).sum::<f64>() / (2.0 * sigma2);
    for (g, v) in grad.iter_mut().zip(w) {
        *g -= v / sigma2;
    }
    Ok((value, grad))
}

/// Maximizes the penalized likelihood with L-BFGS from
/// [`initialize_parameters`].
pub fn train(spec: &ModelSpec, dataset: &Dataset, config: &TrainConfig) -> Result<(ParameterVector, TrainReport)> {
    config.validate()?;
    let init = initialize_parameters(spec, config.seed);
    check_dataset(spec, &init, dataset)?;
    for seq in dataset.sequences() {
        crate::inference::encode_labels(spec, seq)?;
    }
    let settings = LbfgsSettings {
        max_iterations: config.max_iterations,
        gradient_tolerance: config.gradient_tolerance,
        ..LbfgsSettings::default()
    };
    let negated = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let theta = ParameterVector::new(spec, x.to_vec()).map_err(|_| Error::NonFiniteObjective {
            iteration: 0,
            theta: x.to_vec(),
        })?;
        let (v, g) = objective_and_gradient(spec, &theta, dataset, config.sigma2)?;
        Ok((-v, g.into_iter().map(|v| -v).collect()))
    };
    let out = minimize(negated, init.into_inner(), &settings)?;
    let report = TrainReport {
        final_objective: -out.value,
        iterations: out.iterations,
        objective_trace: out.trace.iter().map(|v| -v).collect(),
        converged: out.converged,
    };
    Ok((ParameterVector::new(spec, out.x)?, report))
}
