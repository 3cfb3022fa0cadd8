//! Event-aligned evaluation, the `mt` selection metric and nested
//! cross-validation.

mod curves;
mod cv;
mod predict;

pub use curves::{appropriate_label, build_curves, curves_to_csv, metric_mt, sustained_accuracy_onset, CurvePoint, CurveSet, Window};
pub use cv::{
    dataset_labels, default_grid, nested_cv, CvPlan, FoldReport, GridSetting, NestedCvConfig, NestedCvReport,
    SettingScore,
};
pub use predict::{predict_dataset, predict_sequence, predictions_to_csv, read_predictions_csv, SequencePrediction};
