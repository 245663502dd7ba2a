//! Display rendering and the end-to-end restore pipeline.

mod demosaic;
mod restore;
mod tonemap;

pub use demosaic::demosaic_bilinear;
pub use restore::{
    reference_only_isp, reference_packed, restore_merged, restore_scene, restore_scene_detailed,
    tiled_merge, tiled_restore, RestoreConfig, RestoreOutput,
};
pub use tonemap::{tone_map, tone_map_value, DISPLAY_GAMMA};
