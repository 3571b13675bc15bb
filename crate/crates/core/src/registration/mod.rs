//! Keypoint-driven registration and intensity harmonization.
//!
//! Keypoints and descriptors are produced elsewhere and read from JSON files
//! in letterboxed 1024 x 1024 model space. Per eye, an anchor visit is chosen,
//! every other visit is matched and fitted against it with a robust model
//! search, gated, warped, cropped and histogram matched. Left eyes are
//! mirrored last.

mod fov;
mod harmonize;
mod keypoints;
mod matching;
mod model;
mod pipeline;
mod ransac;
mod select;

pub use fov::{estimate_fov_mask, letterbox, FovConfig, Letterbox};
pub use harmonize::{
    flip_sequence, gaussian_blur, histogram_match, normalize_chirality, quality_score,
    select_best_duplicate, Matched, MixtureReference,
};
pub use keypoints::{normalize_descriptor, KeypointSet, DESCRIPTOR_DIM, MODEL_SIZE};
pub use matching::{correspondences, match_descriptors, Correspondence};
pub use model::{
    diagnostics, fit_least_squares, hull_area, inliers, reprojection_error, FitDiagnostics,
    ModelKind, ScoreConfig, TransformModel,
};
pub use pipeline::{
    chain_to_first, register_eye, EyeReport, RegisterConfig, Registered, VisitInput, VisitReport,
};
pub use ransac::{fit_model_ransac, required_iterations, RansacConfig};
pub use select::{
    anchor_score, gate, homography_admissible, select_anchor, select_model, AnchorCandidate,
    AnchorConfig, GateConfig, GateDecision, SelectConfig,
};
