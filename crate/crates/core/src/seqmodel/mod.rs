//! Shared domain types: label alphabets, model specifications with their
//! canonical parameter layout, sequences and datasets.

mod data;
mod io;
mod spec;

pub use data::{Dataset, Frame, Sequence, SequenceType};
pub use io::{
    dataset_from_jsonl_str, dataset_to_jsonl_string, read_csv_dataset, read_jsonl_dataset,
    write_jsonl_dataset,
};
pub use spec::{
    build_model_spec, JointSpace, LabelAlphabet, LabelMode, LayerDescriptor, LayerSpec,
    ModelSpec, ModelSpecDescriptor, PairDescriptor, ParameterVector,
};
