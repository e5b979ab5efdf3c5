//! Little-endian COLMAP `.bin` models.

use super::{model_from_id, model_id, CameraModel, SeedCloud};
use crate::camera::{Camera, PoseRecord};
use crate::error::{Error, Result};

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], what: &'static str) -> Self {
        Reader { buf, pos: 0, what }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let s = self.buf.get(self.pos..end).ok_or_else(|| {
            Error::Colmap(format!("{}: truncated at byte {}", self.what, self.pos))
        })?;
        self.pos = end;
        Ok(s.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }
    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take()?))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn skip(&mut self, n: u64) -> Result<()> {
        let end = usize::try_from(n)
            .ok()
            .and_then(|n| self.pos.checked_add(n))
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Colmap(format!("{}: truncated record", self.what)))?;
        self.pos = end;
        Ok(())
    }

    fn cstr(&mut self) -> Result<String> {
        let rest = &self.buf[self.pos..];
        let len = rest.iter().position(|&b| b == 0).ok_or_else(|| {
            Error::Colmap(format!("{}: unterminated image name", self.what))
        })?;
        let s = String::from_utf8(rest[..len].to_vec())
            .map_err(|_| Error::Colmap(format!("{}: image name is not utf-8", self.what)))?;
        self.pos += len + 1;
        Ok(s)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Colmap(format!(
                "{}: {} trailing bytes",
                self.what,
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn read_cameras(buf: &[u8]) -> Result<Vec<Camera>> {
    let mut r = Reader::new(buf, "cameras.bin");
    let n = r.u64()?;
    let mut out = Vec::new();
    for _ in 0..n {
        let camera_id = r.u32()?;
        let id = r.i32()?;
        let model = model_from_id(id)?;
        let width = r.u64()? as usize;
        let height = r.u64()? as usize;
        let mut params = Vec::with_capacity(model.num_params());
        for _ in 0..model.num_params() {
            params.push(r.f64()?);
        }
        out.push(super::camera_from_params(camera_id, model, width, height, &params)?);
    }
    r.finish()?;
    Ok(out)
}

pub fn read_images(buf: &[u8]) -> Result<Vec<PoseRecord>> {
    let mut r = Reader::new(buf, "images.bin");
    let n = r.u64()?;
    let mut out = Vec::new();
    for _ in 0..n {
        let image_id = r.u32()?;
        let q = [r.f64()?, r.f64()?, r.f64()?, r.f64()?];
        let t = [r.f64()?, r.f64()?, r.f64()?];
        let camera_id = r.u32()?;
        let name = r.cstr()?;
        let n2d = r.u64()?;
        // x, y: f64; point3D_id: i64
        r.skip(n2d.checked_mul(24).ok_or_else(|| Error::Colmap("images.bin: bad point count".into()))?)?;
        out.push(super::pose(image_id, camera_id, q, t, name)?);
    }
    r.finish()?;
    super::check_unique_images(&out)?;
    Ok(out)
}

pub fn read_points3d(buf: &[u8]) -> Result<SeedCloud> {
    let mut r = Reader::new(buf, "points3D.bin");
    let n = if buf.is_empty() { 0 } else { r.u64()? };
    let mut seed = SeedCloud::default();
    for _ in 0..n {
        let id = r.u64()?;
        let p = [r.f64()?, r.f64()?, r.f64()?];
        let c = [r.u8()?, r.u8()?, r.u8()?];
        let _error = r.f64()?;
        let track = r.u64()?;
        // image_id: i32, point2D_idx: i32
        r.skip(track.checked_mul(8).ok_or_else(|| Error::Colmap("points3D.bin: bad track".into()))?)?;
        seed.push(id, p, c);
    }
    r.finish()?;
    seed.validate()?;
    Ok(seed)
}

pub fn write_cameras(cameras: &[Camera]) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend((cameras.len() as u64).to_le_bytes());
    for c in cameras {
        b.extend(c.camera_id.to_le_bytes());
        b.extend(model_id(CameraModel::SimplePinhole).to_le_bytes());
        b.extend((c.width as u64).to_le_bytes());
        b.extend((c.height as u64).to_le_bytes());
        for p in [c.f, c.cx, c.cy] {
            b.extend(p.to_le_bytes());
        }
    }
    b
}

pub fn write_images(poses: &[PoseRecord]) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend((poses.len() as u64).to_le_bytes());
    for p in poses {
        b.extend(p.image_id.to_le_bytes());
        for v in p.q.iter().chain(&p.t) {
            b.extend(v.to_le_bytes());
        }
        b.extend(p.camera_id.to_le_bytes());
        b.extend(p.name.as_bytes());
        b.push(0);
        b.extend(0u64.to_le_bytes());
    }
    b
}

pub fn write_points3d(seed: &SeedCloud) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend((seed.len() as u64).to_le_bytes());
    for i in 0..seed.len() {
        b.extend(seed.point_ids[i].to_le_bytes());
        for v in seed.positions[i] {
            b.extend(v.to_le_bytes());
        }
        b.extend(seed.color_u8(i));
        b.extend(0f64.to_le_bytes());
        b.extend(0u64.to_le_bytes());
    }
    b
}
