//! COLMAP sparse reconstructions: cameras, images and points3D in either the
//! binary or the text encoding, assembled into a [`SceneBundle`].

pub mod binary;
pub mod text;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::camera::{Camera, PoseRecord};
use crate::error::{Error, Result};

/// COLMAP camera models, with the ids used in `cameras.bin`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraModel {
    SimplePinhole,
    Pinhole,
    SimpleRadial,
    Radial,
    OpenCv,
    OpenCvFisheye,
    FullOpenCv,
    Fov,
    SimpleRadialFisheye,
    RadialFisheye,
    ThinPrismFisheye,
}

const MODELS: [(CameraModel, &str, usize); 11] = [
    (CameraModel::SimplePinhole, "SIMPLE_PINHOLE", 3),
    (CameraModel::Pinhole, "PINHOLE", 4),
    (CameraModel::SimpleRadial, "SIMPLE_RADIAL", 4),
    (CameraModel::Radial, "RADIAL", 5),
    (CameraModel::OpenCv, "OPENCV", 8),
    (CameraModel::OpenCvFisheye, "OPENCV_FISHEYE", 8),
    (CameraModel::FullOpenCv, "FULL_OPENCV", 12),
    (CameraModel::Fov, "FOV", 5),
    (CameraModel::SimpleRadialFisheye, "SIMPLE_RADIAL_FISHEYE", 4),
    (CameraModel::RadialFisheye, "RADIAL_FISHEYE", 5),
    (CameraModel::ThinPrismFisheye, "THIN_PRISM_FISHEYE", 12),
];

impl CameraModel {
    pub fn name(self) -> &'static str {
        MODELS.iter().find(|m| m.0 == self).unwrap().1
    }

    pub fn num_params(self) -> usize {
        MODELS.iter().find(|m| m.0 == self).unwrap().2
    }
}

impl std::str::FromStr for CameraModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MODELS
            .iter()
            .find(|m| m.1 == s)
            .map(|m| m.0)
            .ok_or_else(|| Error::Colmap(format!("unknown camera model {s:?}")))
    }
}

pub(crate) fn model_from_id(id: i32) -> Result<CameraModel> {
    usize::try_from(id)
        .ok()
        .and_then(|i| MODELS.get(i))
        .map(|m| m.0)
        .ok_or_else(|| Error::Colmap(format!("unknown camera model id {id}")))
}

pub(crate) fn model_id(model: CameraModel) -> i32 {
    MODELS.iter().position(|m| m.0 == model).unwrap() as i32
}

pub(crate) fn camera_from_params(
    camera_id: u32,
    model: CameraModel,
    width: usize,
    height: usize,
    params: &[f64],
) -> Result<Camera> {
    if model != CameraModel::SimplePinhole {
        return Err(Error::UnsupportedCameraModel(model.name().to_string()));
    }
    Camera::new(camera_id, width, height, params[0], params[1], params[2])
}

const QUAT_NORM_TOLERANCE: f64 = 1e-2;

pub(crate) fn pose(image_id: u32, camera_id: u32, q: [f64; 4], t: [f64; 3], name: String) -> Result<PoseRecord> {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !n.is_finite() || (n - 1.0).abs() > QUAT_NORM_TOLERANCE {
        return Err(Error::Colmap(format!(
            "image {image_id}: quaternion norm {n} is not close to 1"
        )));
    }
    if !t.iter().all(|v| v.is_finite()) {
        return Err(Error::Colmap(format!("image {image_id}: non-finite translation")));
    }
    Ok(PoseRecord {
        image_id,
        camera_id,
        q: q.map(|v| v / n),
        t,
        name,
    })
}

pub(crate) fn check_unique_images(poses: &[PoseRecord]) -> Result<()> {
    let mut seen = HashSet::new();
    for p in poses {
        if !seen.insert(p.image_id) {
            return Err(Error::Colmap(format!("duplicate image_id {}", p.image_id)));
        }
    }
    Ok(())
}

/// Sparse SfM points used to seed the Gaussian cloud.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedCloud {
    pub positions: Vec<[f64; 3]>,
    /// Linear `[0, 1]`, from 8-bit COLMAP colors.
    pub colors: Vec<[f64; 3]>,
    pub point_ids: Vec<u64>,
}

impl SeedCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub(crate) fn push(&mut self, id: u64, p: [f64; 3], c: [u8; 3]) {
        self.point_ids.push(id);
        self.positions.push(p);
        self.colors.push(c.map(|v| v as f64 / 255.0));
    }

    pub fn color_u8(&self, i: usize) -> [u8; 3] {
        self.colors[i].map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Colmap("points3D: N >= 1 required".into()));
        }
        if self.colors.len() != self.len() || self.point_ids.len() != self.len() {
            return Err(Error::Colmap("points3D: ragged arrays".into()));
        }
        if !self.positions.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::Colmap("points3D: non-finite position".into()));
        }
        Ok(())
    }

    /// Radius of the sphere around the centroid containing every point.
    pub fn bounding_radius(&self) -> f64 {
        let pts: Vec<Vector3<f64>> = self.positions.iter().map(|p| Vector3::from(*p)).collect();
        bounding_radius(&pts)
    }
}

fn bounding_radius(pts: &[Vector3<f64>]) -> f64 {
    if pts.is_empty() {
        return 0.0;
    }
    let c = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
    pts.iter().map(|p| (p - c).norm()).fold(0.0, f64::max)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn is_binary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bin")
}

fn as_text(path: &Path) -> Result<String> {
    String::from_utf8(read(path)?)
        .map_err(|_| Error::Colmap(format!("{} is not utf-8 text", path.display())))
}

/// `cameras.bin` or `cameras.txt`, chosen by extension.
pub fn parse_cameras(path: &Path) -> Result<Vec<Camera>> {
    if is_binary(path) {
        binary::read_cameras(&read(path)?)
    } else {
        text::read_cameras(&as_text(path)?)
    }
}

pub fn parse_images(path: &Path) -> Result<Vec<PoseRecord>> {
    if is_binary(path) {
        binary::read_images(&read(path)?)
    } else {
        text::read_images(&as_text(path)?)
    }
}

pub fn parse_points3d(path: &Path) -> Result<SeedCloud> {
    if is_binary(path) {
        binary::read_points3d(&read(path)?)
    } else {
        text::read_points3d(&as_text(path)?)
    }
}

/// Finds the model files in `dir`, preferring `.bin` when both exist.
pub fn model_paths(dir: &Path) -> Result<[PathBuf; 3]> {
    let pick = |stem: &str| -> Result<PathBuf> {
        for ext in ["bin", "txt"] {
            let p = dir.join(format!("{stem}.{ext}"));
            if p.exists() {
                return Ok(p);
            }
        }
        Err(Error::Colmap(format!("no {stem}.bin or {stem}.txt in {}", dir.display())))
    };
    Ok([pick("cameras")?, pick("images")?, pick("points3D")?])
}

/// Parsed reconstruction with holdout split and scene scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneBundle {
    pub cameras: Vec<Camera>,
    /// Sorted by name.
    pub poses: Vec<PoseRecord>,
    pub seed: SeedCloud,
    pub extent: f64,
    pub test_every: usize,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

impl SceneBundle {
    pub fn camera_for(&self, pose: &PoseRecord) -> &Camera {
        self.cameras
            .iter()
            .find(|c| c.camera_id == pose.camera_id)
            .expect("validated in build_scene")
    }
}

/// Sorts poses by name, computes the scene extent and the holdout split
/// (every `test_every`-th view starting at the first; 0 disables the split).
///
/// Extent is 1.1x the radius of the camera centers' bounding sphere; with
/// coincident cameras it falls back to the seed cloud's bounding radius.
pub fn build_scene(
    cameras: Vec<Camera>,
    mut poses: Vec<PoseRecord>,
    seed: SeedCloud,
    test_every: usize,
) -> Result<SceneBundle> {
    seed.validate()?;
    if poses.is_empty() {
        return Err(Error::Colmap("no images in reconstruction".into()));
    }
    for p in &poses {
        if !cameras.iter().any(|c| c.camera_id == p.camera_id) {
            return Err(Error::Colmap(format!(
                "image {} references missing camera {}",
                p.name, p.camera_id
            )));
        }
    }
    poses.sort_by(|a, b| a.name.cmp(&b.name).then(a.image_id.cmp(&b.image_id)));
    let centers: Vec<Vector3<f64>> = poses.iter().map(|p| p.center()).collect();
    let mut extent = bounding_radius(&centers) * 1.1;
    if extent <= 1e-12 {
        extent = seed.bounding_radius() * 1.1;
    }
    if extent <= 1e-12 {
        extent = 1.0;
    }
    let (test_indices, train_indices): (Vec<usize>, Vec<usize>) =
        (0..poses.len()).partition(|i| test_every > 0 && i % test_every == 0);
    Ok(SceneBundle {
        cameras,
        poses,
        seed,
        extent,
        test_every,
        train_indices,
        test_indices,
    })
}
