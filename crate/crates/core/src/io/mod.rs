//! File formats, configuration, scene loading and synthetic ground truth.

mod checkpoint;
mod config;
mod external;
pub mod fras;
mod manifest;
pub mod ply;
pub mod synthetic;

pub use checkpoint::{load_checkpoint, load_optimizer, save_checkpoint, sidecar_path, Checkpoint};
pub use config::{BackendConfig, MeshConfig, OutputConfig, RunConfig};
pub use external::{ExternalCommand, FEATURE_CMD_ENV, STEREO_CMD_ENV};
pub use fras::{read_fras, write_fras, FrasRaster};
pub use manifest::{
    load_manifest, load_scene, read_image, write_png, GroundTruth, Manifest, SceneDataset, Split, ViewEntry, MANIFEST_NAME,
};
pub use ply::{read_mesh, read_points, write_mesh, write_points, PlyFormat};
pub use synthetic::{ring_cameras, Preset, SyntheticData, SyntheticScene, SyntheticSpec, SyntheticView};
