//! On-disk formats: the TIFF subset, scene directories and flow dumps.

mod flowdump;
mod scene_dir;
mod tiff;

pub use flowdump::{decode_flow, encode_flow, read_flow, write_flow, FLOW_MAGIC};
pub use scene_dir::{
    frame_file, load_manifest, load_scene, save_scene, FrameEntry, SceneManifest, FORMAT_VERSION,
    GT_FILE, MANIFEST_FILE,
};
pub use tiff::{decode_tiff16, encode_tiff16, read_tiff16, write_tiff16, TiffImage};
