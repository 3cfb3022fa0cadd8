//! Features from tracked detections: depth calibration, lateral motion,
//! box smoothing, quadratic motion dynamics and context vectors.

mod calibration;
mod extract;
mod geometry;
mod labeling;
mod motion;
mod spatial;
mod track;

pub use calibration::{calibrate_depth, CalibrationFile, CalibrationModel, DecayCurve, DepthLine, DEPTH_SEARCH_RANGE};
pub use extract::{
    ego_speed_code, extract, mask_path, read_detections, Detection, DetectionFrame, EgoSpeedChange, ExtractConfig,
    SequenceAnnotation, TrackKind, VehicleContext,
};
pub use geometry::{lateral_displacement, LateralModel, QuadrantSigns, SignConvention};
pub use labeling::{label_with_pred_ahead, CROSSING, NOT_CROSSING};
pub use motion::{
    effective_tau, fit_quadratic, lateral_series, motion_features, MotionConfig, DEFAULT_TAU, GRID, MIN_TAU,
    MOTION_DIM, NUM_POINTS,
};
pub use spatial::{region_pixels, spatial_context, RegionConfig, RoadMask};
pub use track::{interpolate_gaps, smooth_track, BoundingBox, BoundingBoxTrack, KalmanConfig};
