//! # fldcrf
//!
//! Factored latent-dynamic conditional random fields (FLDCRF) for sequence
//! labeling. A model stacks `L` hidden layers over a shared observation
//! sequence; every layer partitions its hidden states into disjoint blocks,
//! one per label, and neighbouring layers are coupled by same-instant
//! influence potentials. One layer gives the latent-dynamic CRF, and one
//! layer with one state per label gives the linear-chain CRF.
//!
//! Besides the model the crate carries the supporting pipeline used for
//! pedestrian intention prediction: geometric feature extraction from
//! tracked bounding boxes, the probability/accuracy-vs-time evaluation
//! protocol with nested cross-validation, and a synthetic scenario generator.
//!
//! ```
//! use fldcrf::{build_model_spec, LayerDescriptor, Frame, Sequence, SequenceType};
//! use fldcrf::inference::{forward, filtered_label_marginals};
//! use fldcrf::graph::build_tables;
//! use fldcrf::training::initialize_parameters;
//!
//! let spec = build_model_spec(
//!     &[LayerDescriptor::uniform(&["crossing", "not-crossing"], 2)],
//!     3,
//!     None,
//! )
//! .unwrap();
//! let theta = initialize_parameters(&spec, 7);
//! let seq = Sequence::new(
//!     "s0",
//!     (0..4).map(|t| Frame::unlabeled(t, vec![1.0, 0.5, -0.5])).collect(),
//!     SequenceType::Generic,
//!     None,
//! )
//! .unwrap();
//! let tables = build_tables(&spec, &theta, &seq).unwrap();
//! let fwd = forward(&tables).unwrap();
//! let marginals = filtered_label_marginals(&spec, &fwd);
//! assert_eq!(marginals.len(), 4);
//! ```

pub mod error;
pub mod evaluation;
pub mod features;
pub mod graph;
pub mod inference;
pub mod seqmodel;
pub mod synthgen;
pub mod training;

pub use error::{Error, Result};
pub use seqmodel::{
    build_model_spec, read_csv_dataset, read_jsonl_dataset, write_jsonl_dataset, Dataset, Frame,
    LabelAlphabet, LayerDescriptor, LayerSpec, ModelSpec, PairDescriptor, ParameterVector,
    Sequence, SequenceType,
};
