//! Classical multi-frame RAW burst restoration: synthesis of degraded
//! bracketed bursts, exposure-aware alignment, inverse-variance HDR merging,
//! a minimal ISP, quality metrics, a compute budget gate and file I/O.

pub mod align;
pub mod budget;
pub mod cfa;
pub mod error;
pub mod image;
pub mod io;
pub mod isp;
pub mod merge;
pub mod metrics;
pub mod synth;

pub use align::{align_burst, AlignConfig, AlignedBurst, FlowConfig, FlowField, ValidityMask};
pub use cfa::{
    bayer_flip, pack_cfa, unpack_cfa, CfaPattern, CfaSite, ExposureGroup, FlipAxis, PackedRaw,
    RawFrame,
};
pub use error::{Error, Result, Stage};
pub use image::{BitDepth, ImagePlane, RgbImage};
pub use isp::{reference_only_isp, restore_scene, tiled_restore, RestoreConfig};
pub use merge::{group_exposures, merge, merge_weights, MergeConfig, MergedRadiance, MergeWeights};
pub use synth::{procedural_hdr, synth_scene, BurstScene, HdrImage, NoiseParams, SceneSpec, SynthOptions};
