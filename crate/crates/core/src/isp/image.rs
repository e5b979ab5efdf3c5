use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raw_io::write_file;

/// Scene-referred RGB, row-major `H x W x 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

/// Display-referred RGB in `[0, 1]`, row-major `H x W x 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct LdrImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

macro_rules! rgb_image_common {
    ($t:ty) => {
        impl $t {
            pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
                if data.len() != width * height * 3 {
                    return Err(Error::Dimension(format!(
                        "{} values for a {}x{} RGB image",
                        data.len(),
                        width,
                        height
                    )));
                }
                Ok(Self {
                    width,
                    height,
                    data,
                })
            }

            pub fn zeros(width: usize, height: usize) -> Self {
                Self {
                    width,
                    height,
                    data: vec![0.0; width * height * 3],
                }
            }

            pub fn filled(width: usize, height: usize, value: f64) -> Self {
                Self {
                    width,
                    height,
                    data: vec![value; width * height * 3],
                }
            }

            #[inline]
            pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
                let i = (y * self.width + x) * 3;
                [self.data[i], self.data[i + 1], self.data[i + 2]]
            }

            #[inline]
            pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
                let i = (y * self.width + x) * 3;
                self.data[i..i + 3].copy_from_slice(&rgb);
            }

            pub fn same_shape(&self, other: &Self) -> Result<()> {
                if self.width != other.width || self.height != other.height {
                    return Err(Error::Dimension(format!(
                        "{}x{} vs {}x{}",
                        self.width, self.height, other.width, other.height
                    )));
                }
                Ok(())
            }
        }
    };
}

rgb_image_common!(LinearImage);
rgb_image_common!(LdrImage);

impl LinearImage {
    pub fn is_valid(&self) -> bool {
        self.data.iter().all(|v| v.is_finite() && *v >= -0.05)
    }
}

impl LdrImage {
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(
            width,
            height,
            bytes.iter().map(|&b| b as f64 / 255.0).collect(),
        )
    }

    /// Round-trips through 8 bits, as the image would be when written to disk.
    pub fn quantized(&self) -> Self {
        Self::from_u8(self.width, self.height, &self.to_u8()).expect("same shape")
    }
}

/// Writes an 8-bit PNG or binary PPM, selected by the `.ppm` extension.
pub fn write_ldr(img: &LdrImage, path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm")) {
        write_ppm(img, path)
    } else {
        write_png(img, path)
    }
}

pub fn write_ppm(img: &LdrImage, path: &Path) -> Result<()> {
    let mut bytes = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    bytes.extend(img.to_u8());
    write_file(path, &bytes)
}

pub fn write_png(img: &LdrImage, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(
        std::io::BufWriter::new(file),
        img.width as u32,
        img.height as u32,
    );
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
    writer
        .write_image_data(&img.to_u8())
        .map_err(|e| Error::Png(e.to_string()))?;
    writer.finish().map_err(|e| Error::Png(e.to_string()))
}

pub fn read_png(path: &Path) -> Result<LdrImage> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(std::io::BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| Error::Png(e.to_string()))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Png(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let bytes = &buf[..info.buffer_size()];
    let rgb: Vec<u8> = match info.color_type {
        png::ColorType::Rgb => bytes.to_vec(),
        png::ColorType::Rgba => bytes.chunks(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => bytes.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => bytes.chunks(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
        png::ColorType::Indexed => return Err(Error::Png("unexpanded palette".into())),
    };
    LdrImage::from_u8(w, h, &rgb)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearHeader {
    width: usize,
    height: usize,
    channels: usize,
    dtype: String,
    byte_order: String,
}

/// Debug dump: little-endian `f32` payload at `path` and a JSON header at
/// `path` with `.json` appended.
pub fn write_linear(img: &LinearImage, path: &Path) -> Result<()> {
    let header = LinearHeader {
        width: img.width,
        height: img.height,
        channels: 3,
        dtype: "float32".into(),
        byte_order: "little".into(),
    };
    let mut bytes = Vec::with_capacity(img.data.len() * 4);
    for &v in &img.data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    write_file(path, &bytes)?;
    write_file(
        &linear_header_path(path),
        serde_json::to_string_pretty(&header)?.as_bytes(),
    )
}

pub fn read_linear(path: &Path) -> Result<LinearImage> {
    let hp = linear_header_path(path);
    let header: LinearHeader = serde_json::from_str(
        &fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?,
    )?;
    if header.channels != 3 || header.dtype != "float32" || header.byte_order != "little" {
        return Err(Error::Dimension(format!("unsupported linear header {header:?}")));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let data: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    LinearImage::new(header.width, header.height, data)
}

pub fn linear_header_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// 16-bit grayscale PGM for depth maps.
pub fn write_depth_pgm(depth: &[f64], width: usize, height: usize, scale: f64, path: &Path) -> Result<()> {
    let counts: Vec<u16> = depth
        .iter()
        .map(|d| (d * scale).round().clamp(0.0, 65535.0) as u16)
        .collect();
    write_file(path, &crate::raw_io::encode_pgm16(width, height, &counts))
}
