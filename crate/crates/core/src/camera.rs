//! Pinhole intrinsics and world-to-camera poses.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// SIMPLE_PINHOLE camera: one focal length, principal point in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub camera_id: u32,
    pub width: usize,
    pub height: usize,
    pub f: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Camera {
    pub fn new(camera_id: u32, width: usize, height: usize, f: f64, cx: f64, cy: f64) -> Result<Self> {
        let cam = Camera {
            camera_id,
            width,
            height,
            f,
            cx,
            cy,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.f > 0.0
            && self.cx > 0.0
            && self.cx < self.width as f64
            && self.cy > 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "camera {}: need f > 0, 0 < cx < width, 0 < cy < height (got f={}, cx={}, cy={}, {}x{})",
                self.camera_id, self.f, self.cx, self.cy, self.width, self.height
            )))
        }
    }

    /// Same intrinsics at a different resolution.
    pub fn scaled(&self, factor: f64) -> Camera {
        Camera {
            width: ((self.width as f64) * factor).round() as usize,
            height: ((self.height as f64) * factor).round() as usize,
            f: self.f * factor,
            cx: self.cx * factor,
            cy: self.cy * factor,
            ..*self
        }
    }
}

/// World-to-camera transform `x_cam = R * x_world + t`, `q` scalar-first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub image_id: u32,
    pub camera_id: u32,
    pub q: [f64; 4],
    pub t: [f64; 3],
    pub name: String,
}

impl PoseRecord {
    pub fn rotation(&self) -> Matrix3<f64> {
        quat_to_matrix(self.q)
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::from(self.t)
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation()
    }

    /// Camera center in world coordinates, `-R^T t`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation().transpose() * self.translation())
    }

    /// File stem of `name`, used to pair poses with raw frames.
    pub fn stem(&self) -> &str {
        let base = self.name.rsplit(['/', '\\']).next().unwrap_or(&self.name);
        match base.rfind('.') {
            Some(i) if i > 0 => &base[..i],
            _ => base,
        }
    }

    /// A camera at `eye` looking at `target`, image y axis pointing along `-up`.
    pub fn look_at(image_id: u32, camera_id: u32, name: &str, eye: [f64; 3], target: [f64; 3], up: [f64; 3]) -> Self {
        let eye = Vector3::from(eye);
        let forward = (Vector3::from(target) - eye).normalize();
        let right = forward.cross(&Vector3::from(up)).normalize();
        let down = forward.cross(&right);
        let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(r * eye);
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
        PoseRecord {
            image_id,
            camera_id,
            q: [q.w, q.i, q.j, q.k],
            t: [t.x, t.y, t.z],
            name: name.to_string(),
        }
    }
}

/// Rotation matrix of the normalized quaternion `(w, x, y, z)`.
pub fn quat_to_matrix(q: [f64; 4]) -> Matrix3<f64> {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_pose() {
        let p = PoseRecord {
            image_id: 1,
            camera_id: 1,
            q: [1.0, 0.0, 0.0, 0.0],
            t: [0.0; 3],
            name: "a.png".into(),
        };
        let x = Vector3::new(0.3, -1.0, 2.0);
        assert_eq!(p.world_to_camera(&x), x);
        assert_eq!(p.center(), Vector3::zeros());
        assert_eq!(p.stem(), "a");
    }

    #[test]
    fn look_at_puts_target_on_axis() {
        let p = PoseRecord::look_at(1, 1, "v", [3.0, 1.0, -2.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        let c = p.world_to_camera(&Vector3::zeros());
        assert!(c.x.abs() < 1e-12 && c.y.abs() < 1e-12);
        assert!((c.z - 14f64.sqrt()).abs() < 1e-12);
        assert!((p.center() - Vector3::new(3.0, 1.0, -2.0)).norm() < 1e-12);
        let qn: f64 = p.q.iter().map(|v| v * v).sum();
        assert!((qn - 1.0).abs() < 1e-12);
    }

    #[test]
    fn camera_bounds() {
        assert!(Camera::new(1, 100, 100, 120.0, 50.0, 50.0).is_ok());
        assert!(Camera::new(1, 100, 100, 0.0, 50.0, 50.0).is_err());
        assert!(Camera::new(1, 100, 100, 10.0, 100.0, 50.0).is_err());
    }

    #[test]
    fn stems() {
        let mut p = PoseRecord::look_at(1, 1, "dir/IMG_0001.JPG", [0.0, 0.0, -1.0], [0.0; 3], [0.0, 1.0, 0.0]);
        assert_eq!(p.stem(), "IMG_0001");
        p.name = "noext".into();
        assert_eq!(p.stem(), "noext");
    }
}
