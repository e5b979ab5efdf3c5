//! COLMAP `.txt` models.

use std::fmt::Write;

use super::{CameraModel, SeedCloud};
use crate::camera::{Camera, PoseRecord};
use crate::error::{Error, Result};

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn num<T: std::str::FromStr>(tok: Option<&str>, file: &str, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::Colmap(format!("{file}:{line}: missing {what}")))?;
    tok.parse()
        .map_err(|_| Error::Colmap(format!("{file}:{line}: bad {what} {tok:?}")))
}

pub fn read_cameras(text: &str) -> Result<Vec<Camera>> {
    let mut out = Vec::new();
    for (ln, line) in content_lines(text) {
        let mut it = line.split_whitespace();
        let id: u32 = num(it.next(), "cameras.txt", ln, "camera id")?;
        let model_name = it
            .next()
            .ok_or_else(|| Error::Colmap(format!("cameras.txt:{ln}: missing model")))?;
        let model: CameraModel = model_name.parse()?;
        let width: usize = num(it.next(), "cameras.txt", ln, "width")?;
        let height: usize = num(it.next(), "cameras.txt", ln, "height")?;
        let params = it
            .map(|t| num::<f64>(Some(t), "cameras.txt", ln, "parameter"))
            .collect::<Result<Vec<_>>>()?;
        if params.len() != model.num_params() {
            return Err(Error::Colmap(format!(
                "cameras.txt:{ln}: {} parameters for {model_name}, expected {}",
                params.len(),
                model.num_params()
            )));
        }
        out.push(super::camera_from_params(id, model, width, height, &params)?);
    }
    Ok(out)
}

pub fn read_images(text: &str) -> Result<Vec<PoseRecord>> {
    let mut out = Vec::new();
    let mut lines = text.lines().enumerate();
    while let Some((i, raw)) = lines.next() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let ln = i + 1;
        let mut it = line.split_whitespace();
        let image_id: u32 = num(it.next(), "images.txt", ln, "image id")?;
        let mut q = [0.0; 4];
        for (k, v) in q.iter_mut().enumerate() {
            *v = num(it.next(), "images.txt", ln, ["QW", "QX", "QY", "QZ"][k])?;
        }
        let mut t = [0.0; 3];
        for (k, v) in t.iter_mut().enumerate() {
            *v = num(it.next(), "images.txt", ln, ["TX", "TY", "TZ"][k])?;
        }
        let camera_id: u32 = num(it.next(), "images.txt", ln, "camera id")?;
        let name: Vec<&str> = it.collect();
        if name.is_empty() {
            return Err(Error::Colmap(format!("images.txt:{ln}: missing image name")));
        }
        // the following line holds the 2D observations, possibly empty
        let _points = lines.next();
        out.push(super::pose(image_id, camera_id, q, t, name.join(" "))?);
    }
    super::check_unique_images(&out)?;
    Ok(out)
}

pub fn read_points3d(text: &str) -> Result<SeedCloud> {
    let mut seed = SeedCloud::default();
    for (ln, line) in content_lines(text) {
        let mut it = line.split_whitespace();
        let id: u64 = num(it.next(), "points3D.txt", ln, "point id")?;
        let mut p = [0.0; 3];
        for v in p.iter_mut() {
            *v = num(it.next(), "points3D.txt", ln, "coordinate")?;
        }
        let mut c = [0u8; 3];
        for v in c.iter_mut() {
            *v = num(it.next(), "points3D.txt", ln, "color")?;
        }
        let _error: f64 = num(it.next(), "points3D.txt", ln, "error")?;
        seed.push(id, p, c);
    }
    seed.validate()?;
    Ok(seed)
}

pub fn write_cameras(cameras: &[Camera]) -> String {
    let mut s = String::from("# Camera list with one line of data per camera:\n#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n");
    writeln!(s, "# Number of cameras: {}", cameras.len()).unwrap();
    for c in cameras {
        writeln!(s, "{} SIMPLE_PINHOLE {} {} {} {} {}", c.camera_id, c.width, c.height, c.f, c.cx, c.cy).unwrap();
    }
    s
}

pub fn write_images(poses: &[PoseRecord]) -> String {
    let mut s = String::from("# Image list with two lines of data per image:\n#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n#   POINTS2D[] as (X, Y, POINT3D_ID)\n");
    writeln!(s, "# Number of images: {}", poses.len()).unwrap();
    for p in poses {
        let [qw, qx, qy, qz] = p.q;
        let [tx, ty, tz] = p.t;
        writeln!(s, "{} {qw} {qx} {qy} {qz} {tx} {ty} {tz} {} {}", p.image_id, p.camera_id, p.name).unwrap();
        s.push('\n');
    }
    s
}

pub fn write_points3d(seed: &SeedCloud) -> String {
    let mut s = String::from("# 3D point list with one line of data per point:\n#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n");
    writeln!(s, "# Number of points: {}", seed.len()).unwrap();
    for i in 0..seed.len() {
        let [x, y, z] = seed.positions[i];
        let [r, g, b] = seed.color_u8(i);
        writeln!(s, "{} {x} {y} {z} {r} {g} {b} 0", seed.point_ids[i]).unwrap();
    }
    s
}
