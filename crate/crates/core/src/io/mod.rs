//! File formats: PGM depth/label/mask images, raw `f32` rasters with JSON
//! headers, ASCII PLY meshes with symmetry sidecars, and scene directories.

mod pgm;
mod ply;

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use pgm::{
    decode_pgm, encode_pgm, read_depth, read_labels, read_mask, read_raster, write_depth, write_labels, write_mask,
    write_raster, DepthHeader, RasterHeader, RasterType, DEFAULT_DEPTH_SCALE,
};
pub use ply::{format_ply, format_symmetry, parse_ply, parse_symmetry, read_ply_model, write_ply_model, PlyMesh};

use crate::scenegen::{GroundTruthScene, Placement, PredictionMaps, SceneSpec};
use crate::{Error, Result};

/// Writes via a temporary sibling and a rename so readers never observe a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_sibling(path);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn tmp_sibling(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

/// `scene.json` contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub spec: SceneSpec,
    pub placements: Vec<Placement>,
}

pub const SCENE_FILE: &str = "scene.json";
pub const DEPTH_FILE: &str = "depth.pgm";
pub const CLASS_LABEL_FILE: &str = "class_labels.pgm";
pub const INSTANCE_LABEL_FILE: &str = "instance_labels.pgm";
pub const BOUNDARY_FILE: &str = "boundary.pgm";
pub const SEMANTIC_FILE: &str = "semantic.bin";
pub const BOUNDARY_PROB_FILE: &str = "boundary_prob.bin";

/// Writes a complete scene directory. The directory is assembled under a
/// temporary name and renamed into place, replacing any previous version.
pub fn write_scene(dir: &Path, gt: &GroundTruthScene, maps: Option<&PredictionMaps>) -> Result<()> {
    let tmp = tmp_sibling(dir);
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let record = SceneRecord {
        spec: gt.spec.clone(),
        placements: gt.placements.clone(),
    };
    write_json(&tmp.join(SCENE_FILE), &record)?;
    write_depth(&tmp.join(DEPTH_FILE), &gt.depth, DEFAULT_DEPTH_SCALE)?;
    write_labels(&tmp.join(CLASS_LABEL_FILE), &gt.class_labels)?;
    write_labels(&tmp.join(INSTANCE_LABEL_FILE), &gt.instance_labels)?;
    write_mask(&tmp.join(BOUNDARY_FILE), &gt.boundary)?;
    if let Some(m) = maps {
        write_maps(&tmp, m)?;
    }
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))
}

pub fn read_scene(dir: &Path) -> Result<GroundTruthScene> {
    let record: SceneRecord = read_json(&dir.join(SCENE_FILE))?;
    let depth = read_depth(&dir.join(DEPTH_FILE))?;
    let class_labels = read_labels(&dir.join(CLASS_LABEL_FILE))?;
    let instance_labels = read_labels(&dir.join(INSTANCE_LABEL_FILE))?;
    let boundary = read_mask(&dir.join(BOUNDARY_FILE))?;
    let cam = &record.spec.camera;
    for (name, w, h) in [
        (DEPTH_FILE, depth.width, depth.height),
        (CLASS_LABEL_FILE, class_labels.width, class_labels.height),
        (INSTANCE_LABEL_FILE, instance_labels.width, instance_labels.height),
        (BOUNDARY_FILE, boundary.width, boundary.height),
    ] {
        if (w, h) != (cam.width, cam.height) {
            return Err(Error::parse(dir.join(name), "image size does not match the camera"));
        }
    }
    Ok(GroundTruthScene {
        spec: record.spec,
        placements: record.placements,
        depth,
        class_labels,
        instance_labels,
        boundary,
    })
}

pub fn write_maps(dir: &Path, maps: &PredictionMaps) -> Result<()> {
    write_raster(&dir.join(SEMANTIC_FILE), maps.width, maps.height, maps.channels(), &maps.semantic)?;
    write_raster(&dir.join(BOUNDARY_PROB_FILE), maps.width, maps.height, 1, &maps.boundary)
}

pub fn read_maps(dir: &Path) -> Result<PredictionMaps> {
    let path = dir.join(SEMANTIC_FILE);
    let (sh, semantic) = read_raster(&path)?;
    let (bh, boundary) = read_raster(&dir.join(BOUNDARY_PROB_FILE))?;
    if (sh.width, sh.height) != (bh.width, bh.height) || bh.channels != 1 || sh.channels < 1 {
        return Err(Error::parse(&path, "semantic and boundary rasters disagree"));
    }
    PredictionMaps::new(sh.width, sh.height, sh.channels - 1, semantic, boundary)
        .map_err(|e| Error::parse(&path, e.to_string()))
}

/// Scene directories directly under `root` that contain a `scene.json`,
/// sorted by name.
pub fn list_scene_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let p = entry.path();
        if p.join(SCENE_FILE).is_file() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}
