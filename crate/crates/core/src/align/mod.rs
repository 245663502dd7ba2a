//! Exposure normalization, flow estimation and warping of a burst onto its
//! reference frame.

mod burst;
mod exposure;
mod flow;
mod warp;

pub use burst::{align_burst, AlignConfig, AlignedBurst, FrameGain, GainSource, MAX_GAIN_DEVIATION};
pub use exposure::{
    clip_level, estimate_exposure_gain, normalize_exposure, GainEstimate, Thresholds, ValidityMask,
    CLIP_NOISE_SIGMAS, MIN_INLIER_FRACTION,
};
pub use flow::{estimate_flow, estimate_flow_masked, FlowConfig, FlowField};
pub use warp::{warp_bilinear, warp_mask_min};

pub(crate) use exposure::median;
pub(crate) use flow::MAX_SEARCH_STARTS;
