//! Synthetic stereo scenes, training-sample extraction, file formats and
//! run configuration.

mod config;
mod io;
mod sample;
mod scene;

pub use config::RunConfig;
pub use io::{
    encode_disparity, read_disparity, read_disparity_png, read_image, read_pfm, read_scene, write_confidence_png,
    write_disparity_png, write_gray, write_image, write_scene, DISPARITY_SCALE,
};
pub use sample::{sample_gdn_patches, sample_match_pairs};
pub use scene::{generate_scene, SceneKind, SceneSpec, SyntheticScene};
