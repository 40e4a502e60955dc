//! File formats: PLY scenes, camera JSON, images and the clustered container.

pub mod cameras;
pub mod container;
pub mod image_file;
pub mod ply;

pub use cameras::{load_cameras, write_cameras};
pub use container::{load_clustered_scene, write_clustered_scene, ChunkId, ClusteredSceneStore, Manifest};
pub use image_file::{read_image, write_image};
pub use ply::{load_ply, write_ply, SceneFile};
