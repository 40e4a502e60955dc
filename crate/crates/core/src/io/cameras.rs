//! Camera trajectories as a JSON array of poses.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::CameraPose;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CameraRecord {
    position: [f64; 3],
    orientation_wxyz: [f64; 4],
    fov_x: f64,
    fov_y: f64,
    width: u32,
    height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    near_clip: Option<f64>,
}

pub fn parse_cameras(path: &Path, text: &str) -> Result<Vec<CameraPose>> {
    let records: Vec<CameraRecord> = serde_json::from_str(text).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let mut cam = CameraPose::new(
                r.position,
                r.orientation_wxyz,
                r.fov_x,
                r.fov_y,
                r.width,
                r.height,
            )
            .map_err(|e| Error::Data {
                path: path.to_path_buf(),
                record: Some(i),
                message: e.to_string(),
            })?;
            if let Some(near) = r.near_clip {
                cam.near_clip = near;
            }
            Ok(cam)
        })
        .collect()
}

pub fn load_cameras(path: impl AsRef<Path>) -> Result<Vec<CameraPose>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cameras(path, &text)
}

pub fn cameras_to_json(cams: &[CameraPose]) -> String {
    let records: Vec<CameraRecord> = cams
        .iter()
        .map(|c| CameraRecord {
            position: c.position,
            orientation_wxyz: c.orientation,
            fov_x: c.fov_x,
            fov_y: c.fov_y,
            width: c.width,
            height: c.height,
            near_clip: Some(c.near_clip),
        })
        .collect();
    serde_json::to_string_pretty(&records).expect("camera records serialize")
}

pub fn write_cameras(path: impl AsRef<Path>, cams: &[CameraPose]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, cameras_to_json(cams)).map_err(|e| Error::io(path, e))
}
