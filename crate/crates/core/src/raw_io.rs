//! Bayer raw frames: a 16-bit binary PGM mosaic plus a JSON sidecar holding
//! the sensor metadata the pipeline consumes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2x2 color filter layout, named by the colors of the top-left tile read
/// row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cfa {
    #[serde(rename = "RGGB")]
    Rggb,
    #[serde(rename = "BGGR", alias = "BGRG")]
    Bggr,
    #[serde(rename = "GRBG")]
    Grbg,
    #[serde(rename = "GBRG")]
    Gbrg,
}

impl Cfa {
    /// Channel index (0 = R, 1 = G, 2 = B) measured at pixel `(x, y)`.
    #[inline]
    pub fn channel_at(self, x: usize, y: usize) -> usize {
        let tile = match self {
            Cfa::Rggb => [0, 1, 1, 2],
            Cfa::Bggr => [2, 1, 1, 0],
            Cfa::Grbg => [1, 0, 2, 1],
            Cfa::Gbrg => [1, 2, 0, 1],
        };
        tile[(y & 1) * 2 + (x & 1)]
    }
}

impl std::str::FromStr for Cfa {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RGGB" => Ok(Cfa::Rggb),
            "BGGR" | "BGRG" => Ok(Cfa::Bggr),
            "GRBG" => Ok(Cfa::Grbg),
            "GBRG" => Ok(Cfa::Gbrg),
            other => Err(Error::InvalidParameter(format!("unknown CFA pattern {other}"))),
        }
    }
}

/// Sensor metadata stored next to the mosaic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub width: usize,
    pub height: usize,
    pub cfa: Cfa,
    pub bit_depth: u32,
    pub black_level: u16,
    pub white_level: u16,
    pub iso_gain: f64,
    pub noise_k: f64,
    pub noise_sigma2: f64,
    pub wb_gains: [f64; 3],
    pub ccm: [f64; 9],
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    pub width: usize,
    pub height: usize,
    pub cfa: Cfa,
    pub bit_depth: u32,
    pub black_level: u16,
    pub white_level: u16,
    /// Row-major sensor counts, `width * height` long.
    pub data: Vec<u16>,
    pub iso_gain: f64,
    /// Shot-noise slope in normalized units.
    pub noise_k: f64,
    /// Read-noise variance in normalized units squared.
    pub noise_sigma2: f64,
    pub wb_gains: [f64; 3],
    /// Row-major 3x3.
    pub ccm: [f64; 9],
}

impl RawFrame {
    pub fn max_count(&self) -> u16 {
        (((1u32 << self.bit_depth.min(16)) - 1).min(u16::MAX as u32)) as u16
    }

    /// Checks every frame invariant.
    pub fn validate(&self) -> Result<()> {
        if self.bit_depth == 0 || self.bit_depth > 16 {
            return Err(Error::InvalidFrame(format!(
                "bit_depth {} outside 1..=16",
                self.bit_depth
            )));
        }
        if self.width == 0 || self.height == 0 || self.width % 2 != 0 || self.height % 2 != 0 {
            return Err(Error::InvalidFrame(format!(
                "dimensions {}x{} must be non-zero and even",
                self.width, self.height
            )));
        }
        if self.data.len() != self.width * self.height {
            return Err(Error::Dimension(format!(
                "payload has {} samples, expected {}x{}",
                self.data.len(),
                self.width,
                self.height
            )));
        }
        let max = self.max_count();
        if let Some(&value) = self.data.iter().find(|&&v| v > max) {
            return Err(Error::SampleExceedsBitDepth { value, max });
        }
        if self.black_level >= self.white_level || self.white_level > max {
            return Err(Error::InvalidFrame(format!(
                "levels must satisfy black {} < white {} <= {}",
                self.black_level, self.white_level, max
            )));
        }
        if !self.wb_gains.iter().all(|&g| g.is_finite() && g > 0.0) {
            return Err(Error::InvalidFrame("wb_gains must be positive".into()));
        }
        for row in self.ccm.chunks(3) {
            let sum: f64 = row.iter().sum();
            if !sum.is_finite() || (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidFrame(format!(
                    "ccm row sums to {sum}, expected 1"
                )));
            }
        }
        if !(self.noise_k.is_finite() && self.noise_k >= 0.0)
            || !(self.noise_sigma2.is_finite() && self.noise_sigma2 >= 0.0)
        {
            return Err(Error::InvalidFrame("noise parameters must be >= 0".into()));
        }
        Ok(())
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            width: self.width,
            height: self.height,
            cfa: self.cfa,
            bit_depth: self.bit_depth,
            black_level: self.black_level,
            white_level: self.white_level,
            iso_gain: self.iso_gain,
            noise_k: self.noise_k,
            noise_sigma2: self.noise_sigma2,
            wb_gains: self.wb_gains,
            ccm: self.ccm,
        }
    }

    fn from_parts(meta: Sidecar, data: Vec<u16>) -> Self {
        RawFrame {
            width: meta.width,
            height: meta.height,
            cfa: meta.cfa,
            bit_depth: meta.bit_depth,
            black_level: meta.black_level,
            white_level: meta.white_level,
            data,
            iso_gain: meta.iso_gain,
            noise_k: meta.noise_k,
            noise_sigma2: meta.noise_sigma2,
            wb_gains: meta.wb_gains,
            ccm: meta.ccm,
        }
    }
}

/// Normalized, black-level-subtracted mosaic.
#[derive(Debug, Clone, PartialEq)]
pub struct BayerPlane {
    pub width: usize,
    pub height: usize,
    pub cfa: Cfa,
    pub data: Vec<f64>,
}

/// Lowest value a normalized plane may hold.
pub const NEGATIVE_FLOOR: f64 = -0.05;

impl BayerPlane {
    pub fn new(width: usize, height: usize, cfa: Cfa, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "plane data has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(BayerPlane {
            width,
            height,
            cfa,
            data,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Maps sensor counts to `(count - black) / (white - black)`, floored at
/// [`NEGATIVE_FLOOR`].
pub fn normalize(frame: &RawFrame) -> Result<BayerPlane> {
    frame.validate()?;
    let black = frame.black_level as f64;
    let range = frame.white_level as f64 - black;
    let data = frame
        .data
        .iter()
        .map(|&c| ((c as f64 - black) / range).max(NEGATIVE_FLOOR))
        .collect();
    BayerPlane::new(frame.width, frame.height, frame.cfa, data)
}

/// Big-endian 16-bit binary PGM bytes, maxval 65535.
pub fn encode_pgm16(width: usize, height: usize, data: &[u16]) -> Vec<u8> {
    let header = format!("P5\n{width} {height}\n65535\n");
    let mut out = Vec::with_capacity(header.len() + data.len() * 2);
    out.extend_from_slice(header.as_bytes());
    for &v in data {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

/// Parses a binary P5 PGM with maxval 65535. Returns `(width, height, samples)`.
pub fn decode_pgm16(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err(Error::Pgm("truncated header".into())),
            }
        }
        let start = pos;
        while let Some(b) = bytes.get(pos) {
            if b.is_ascii_whitespace() {
                break;
            }
            pos += 1;
        }
        fields.push(
            std::str::from_utf8(&bytes[start..pos])
                .map_err(|_| Error::Pgm("non-ascii header".into()))?
                .to_string(),
        );
    }
    if fields[0] != "P5" {
        return Err(Error::Pgm(format!("magic {:?}, expected P5", fields[0])));
    }
    let parse = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Pgm(format!("bad {what} {s:?}")))
    };
    let width = parse(&fields[1], "width")?;
    let height = parse(&fields[2], "height")?;
    let maxval = parse(&fields[3], "maxval")?;
    if maxval != 65535 {
        return Err(Error::Pgm(format!("maxval {maxval}, expected 65535")));
    }
    // exactly one whitespace byte separates the header from the payload
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::Pgm("missing payload separator".into()));
    }
    pos += 1;
    let payload = &bytes[pos..];
    let expected = width * height * 2;
    if payload.len() != expected {
        return Err(Error::Dimension(format!(
            "header declares {width}x{height} ({expected} bytes) but payload has {} bytes",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((width, height, data))
}

pub fn load_raw_frame(mosaic_path: &Path, sidecar_path: &Path) -> Result<RawFrame> {
    let bytes = fs::read(mosaic_path).map_err(|e| Error::io(mosaic_path, e))?;
    let text = fs::read_to_string(sidecar_path).map_err(|e| Error::io(sidecar_path, e))?;
    let meta: Sidecar =
        serde_json::from_str(&text).map_err(|e| Error::Sidecar(format!("{e}")))?;
    let (width, height, data) = decode_pgm16(&bytes)?;
    if width != meta.width || height != meta.height {
        return Err(Error::Dimension(format!(
            "PGM is {width}x{height} but sidecar says {}x{}",
            meta.width, meta.height
        )));
    }
    let frame = RawFrame::from_parts(meta, data);
    frame.validate()?;
    Ok(frame)
}

pub fn save_raw_frame(frame: &RawFrame, mosaic_path: &Path, sidecar_path: &Path) -> Result<()> {
    frame.validate()?;
    let bytes = encode_pgm16(frame.width, frame.height, &frame.data);
    write_file(mosaic_path, &bytes)?;
    let mut json = serde_json::to_string_pretty(&frame.sidecar())?;
    json.push('\n');
    write_file(sidecar_path, json.as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn frame(width: usize, height: usize, data: Vec<u16>) -> RawFrame {
        RawFrame {
            width,
            height,
            cfa: Cfa::Rggb,
            bit_depth: 14,
            black_level: 512,
            white_level: 16383,
            data,
            iso_gain: 1.0,
            noise_k: 1e-3,
            noise_sigma2: 1e-6,
            wb_gains: [2.0, 1.0, 1.5],
            ccm: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        }
    }

    #[test]
    fn constant_payload_loads() {
        let dir = tempfile::tempdir().unwrap();
        let f = frame(2, 2, vec![1023; 4]);
        let (m, s) = (dir.path().join("a.pgm"), dir.path().join("a.json"));
        save_raw_frame(&f, &m, &s).unwrap();
        let g = load_raw_frame(&m, &s).unwrap();
        assert_eq!(g.data, vec![1023; 4]);
        assert_eq!(g, f);
    }

    #[test]
    fn sample_over_bit_depth_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (m, s) = (dir.path().join("a.pgm"), dir.path().join("a.json"));
        let good = frame(2, 2, vec![0; 4]);
        save_raw_frame(&good, &m, &s).unwrap();
        fs::write(&m, encode_pgm16(2, 2, &[16384, 0, 0, 0])).unwrap();
        let err = load_raw_frame(&m, &s).unwrap_err();
        assert!(err.to_string().contains("sample exceeds bit depth"), "{err}");
        // 16383 is the last legal value
        fs::write(&m, encode_pgm16(2, 2, &[16383, 0, 0, 0])).unwrap();
        assert!(load_raw_frame(&m, &s).is_ok());
    }

    #[test]
    fn odd_width_rejected_before_write() {
        let dir = tempfile::tempdir().unwrap();
        let (m, s) = (dir.path().join("a.pgm"), dir.path().join("a.json"));
        let f = frame(3, 2, vec![0; 6]);
        assert!(matches!(
            save_raw_frame(&f, &m, &s),
            Err(Error::InvalidFrame(_))
        ));
        assert!(!m.exists() && !s.exists());
    }

    #[test]
    fn pgm_byte_count() {
        let data: Vec<u16> = (0..16).map(|i| i * 1000).collect();
        let bytes = encode_pgm16(4, 4, &data);
        let header = b"P5\n4 4\n65535\n";
        assert_eq!(bytes.len(), header.len() + 32);
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(decode_pgm16(&bytes).unwrap(), (4, 4, data));
    }

    #[test]
    fn malformed_headers() {
        assert!(matches!(decode_pgm16(b"P6\n2 2\n65535\n"), Err(Error::Pgm(_))));
        assert!(matches!(decode_pgm16(b"P5\n2 2\n255\n"), Err(Error::Pgm(_))));
        assert!(matches!(decode_pgm16(b"P5\n2"), Err(Error::Pgm(_))));
        let mut short = encode_pgm16(2, 2, &[1, 2, 3, 4]);
        short.pop();
        assert!(matches!(decode_pgm16(&short), Err(Error::Dimension(_))));
        let commented = b"P5\n# made by hand\n1 1\n65535\n\x01\x02";
        assert_eq!(decode_pgm16(commented).unwrap(), (1, 1, vec![0x0102]));
    }

    #[test]
    fn missing_sidecar_field() {
        let dir = tempfile::tempdir().unwrap();
        let (m, s) = (dir.path().join("a.pgm"), dir.path().join("a.json"));
        save_raw_frame(&frame(2, 2, vec![0; 4]), &m, &s).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&s).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("noise_k");
        fs::write(&s, v.to_string()).unwrap();
        let err = load_raw_frame(&m, &s).unwrap_err();
        assert!(matches!(err, Error::Sidecar(_)));
        assert!(err.to_string().contains("noise_k"), "{err}");
    }

    #[test]
    fn header_sidecar_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (m, s) = (dir.path().join("a.pgm"), dir.path().join("a.json"));
        save_raw_frame(&frame(2, 2, vec![0; 4]), &m, &s).unwrap();
        fs::write(&m, encode_pgm16(4, 2, &[0; 8])).unwrap();
        assert!(matches!(load_raw_frame(&m, &s), Err(Error::Dimension(_))));
    }

    #[test]
    fn normalize_levels() {
        let f = frame(2, 2, vec![16383, 512, 8447, 0]);
        let p = normalize(&f).unwrap();
        assert_eq!(p.data[0], 1.0);
        assert_eq!(p.data[1], 0.0);
        assert!((p.data[2] - 0.49997).abs() < 5e-6);
        assert_eq!(p.data[3], -512.0 / 15871.0);
        let mut low = frame(2, 2, vec![0; 4]);
        low.black_level = 2000;
        assert_eq!(normalize(&low).unwrap().data[0], NEGATIVE_FLOOR);
    }

    #[test]
    fn cfa_layouts() {
        assert_eq!(Cfa::Rggb.channel_at(0, 0), 0);
        assert_eq!(Cfa::Rggb.channel_at(1, 1), 2);
        assert_eq!(Cfa::Bggr.channel_at(0, 0), 2);
        assert_eq!(Cfa::Grbg.channel_at(1, 0), 0);
        assert_eq!(Cfa::Gbrg.channel_at(0, 1), 0);
        let c: Cfa = serde_json::from_str("\"BGRG\"").unwrap();
        assert_eq!(c, Cfa::Bggr);
    }

    #[test]
    fn ccm_rows_must_preserve_white() {
        let mut f = frame(2, 2, vec![0; 4]);
        f.ccm[0] = 1.1;
        assert!(f.validate().is_err());
        f.ccm = [1.5, -0.3, -0.2, -0.1, 1.2, -0.1, 0.0, -0.4, 1.4];
        assert!(f.validate().is_ok());
    }
}
