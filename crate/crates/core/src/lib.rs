//! Two-stage interactive trajectory prediction: classification-aware
//! marginal proposals refined by keypoint-guided joint decoding.

pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod scene;
pub mod taxonomy;
pub mod tensor;
