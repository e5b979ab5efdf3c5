//! Binary little-endian PLY checkpoints with the property names used across
//! the Gaussian splatting ecosystem.

use std::fs;
use std::path::Path;

use super::sh::SH_COEFFS;
use super::GaussianCloud;
use crate::error::{Error, Result};
use crate::raw_io::write_file;

/// x,y,z + f_dc_0..2 + f_rest_0..44 + opacity + scale_0..2 + rot_0..3
pub const PLY_FLOATS_PER_VERTEX: usize = 3 + 3 + 45 + 1 + 3 + 4;

const REST_PER_CHANNEL: usize = SH_COEFFS - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyPrecision {
    /// `float` properties, readable by every splat viewer.
    #[default]
    F32,
    /// `double` properties; round trips the in-memory cloud exactly.
    F64,
}

fn property_names() -> Vec<String> {
    let mut names: Vec<String> = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend((0..3 * REST_PER_CHANNEL).map(|i| format!("f_rest_{i}")));
    names.push("opacity".into());
    names.extend((0..3).map(|i| format!("scale_{i}")));
    names.extend((0..4).map(|i| format!("rot_{i}")));
    names
}

fn vertex_values(cloud: &GaussianCloud, i: usize, out: &mut Vec<f64>) {
    out.clear();
    out.extend(cloud.positions[i]);
    out.extend(cloud.sh_coeffs[i][0]);
    // channel-major: f_rest_{c * 15 + (k - 1)}
    for c in 0..3 {
        for k in 1..SH_COEFFS {
            out.push(cloud.sh_coeffs[i][k][c]);
        }
    }
    out.push(cloud.opacity_logits[i]);
    out.extend(cloud.log_scales[i]);
    out.extend(cloud.quaternions[i]);
}

pub fn save_ply(cloud: &GaussianCloud, path: &Path, precision: PlyPrecision) -> Result<()> {
    cloud.validate()?;
    write_file(path, &encode_ply(cloud, precision))
}

pub fn encode_ply(cloud: &GaussianCloud, precision: PlyPrecision) -> Vec<u8> {
    let ty = match precision {
        PlyPrecision::F32 => "float",
        PlyPrecision::F64 => "double",
    };
    let mut header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n",
        cloud.len()
    );
    for name in property_names() {
        header.push_str(&format!("property {ty} {name}\n"));
    }
    header.push_str("end_header\n");
    let mut bytes = header.into_bytes();
    let mut vals = Vec::with_capacity(PLY_FLOATS_PER_VERTEX);
    for i in 0..cloud.len() {
        vertex_values(cloud, i, &mut vals);
        for &v in &vals {
            match precision {
                PlyPrecision::F32 => bytes.extend((v as f32).to_le_bytes()),
                PlyPrecision::F64 => bytes.extend(v.to_le_bytes()),
            }
        }
    }
    bytes
}

#[derive(Debug, Clone, Copy)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(Error::Ply(format!("unknown property type {other:?}"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

pub fn load_ply(path: &Path) -> Result<GaussianCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ply(&bytes)
}

/// Reads the `vertex` element of a binary little-endian PLY. Unknown
/// properties are skipped; missing `f_rest_*` leave the higher SH orders zero.
pub fn decode_ply(bytes: &[u8]) -> Result<GaussianCloud> {
    const END: &[u8] = b"end_header\n";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::Ply("missing end_header".into()))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Ply("non-ascii header".into()))?;
    let body = &bytes[end + END.len()..];

    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(Error::Ply("missing ply magic".into()));
    }
    let mut vertex_count = None;
    let mut in_vertex = false;
    let mut seen_vertex = false;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, _] => {
                if *fmt != "binary_little_endian" {
                    return Err(Error::Ply(format!("unsupported format {fmt}")));
                }
            }
            ["element", name, count] => {
                if seen_vertex && !in_vertex {
                    continue;
                }
                in_vertex = *name == "vertex";
                if in_vertex {
                    if seen_vertex {
                        return Err(Error::Ply("duplicate vertex element".into()));
                    }
                    seen_vertex = true;
                    vertex_count = Some(count.parse::<usize>().map_err(|_| Error::Ply(format!("bad count {count}")))?);
                } else if !seen_vertex {
                    return Err(Error::Ply(format!("element {name} precedes vertex")));
                }
            }
            ["property", "list", ..] if in_vertex => {
                return Err(Error::Ply("list properties in vertex element".into()));
            }
            ["property", ty, name] if in_vertex => props.push((name.to_string(), Scalar::parse(ty)?)),
            _ => {}
        }
    }
    let n = vertex_count.ok_or_else(|| Error::Ply("no vertex element".into()))?;
    let stride: usize = props.iter().map(|p| p.1.size()).sum();
    if body.len() < n * stride {
        return Err(Error::Ply(format!(
            "payload has {} bytes, {} vertices need {}",
            body.len(),
            n,
            n * stride
        )));
    }
    let mut offsets = Vec::with_capacity(props.len());
    let mut off = 0;
    for p in &props {
        offsets.push(off);
        off += p.1.size();
    }
    let find = |name: &str| props.iter().position(|p| p.0 == name);
    let required = |name: &str| find(name).ok_or_else(|| Error::Ply(format!("missing property {name}")));
    let pos = [required("x")?, required("y")?, required("z")?];
    let dc = [required("f_dc_0")?, required("f_dc_1")?, required("f_dc_2")?];
    let opacity = required("opacity")?;
    let scale = [required("scale_0")?, required("scale_1")?, required("scale_2")?];
    let rot = [required("rot_0")?, required("rot_1")?, required("rot_2")?, required("rot_3")?];
    let mut rest = Vec::new();
    while let Some(i) = find(&format!("f_rest_{}", rest.len())) {
        rest.push(i);
    }
    if rest.len() % 3 != 0 {
        return Err(Error::Ply(format!("{} f_rest properties is not a multiple of 3", rest.len())));
    }
    let per_channel = rest.len() / 3;

    let mut cloud = GaussianCloud::default();
    for v in 0..n {
        let rec = &body[v * stride..(v + 1) * stride];
        let get = |i: usize| props[i].1.read(&rec[offsets[i]..]);
        let mut sh = [[0.0; 3]; SH_COEFFS];
        sh[0] = dc.map(get);
        for c in 0..3 {
            for j in 0..per_channel.min(REST_PER_CHANNEL) {
                sh[j + 1][c] = get(rest[c * per_channel + j]);
            }
        }
        cloud.push(pos.map(get), scale.map(get), rot.map(get), sh, get(opacity));
    }
    cloud.validate()?;
    Ok(cloud)
}
