//! Image decoding and the `OSIM` raw container.
//!
//! `OSIM` layout: magic `OSIM`, `u32` LE width, `u32` LE height, `u8`
//! channel count (1 or 3), then row-major interleaved 8-bit pixels.

use std::path::Path;

use base64::Engine;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::tensor::{resize_bilinear, Tensor};

pub const RAW_MAGIC: &[u8; 4] = b"OSIM";

/// An 8-bit image held in memory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawImage {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    #[serde(serialize_with = "to_base64", deserialize_with = "from_base64")]
    pub pixels: Vec<u8>,
}

fn to_base64<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes))
}

fn from_base64<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
    let text = String::deserialize(d)?;
    base64::engine::general_purpose::STANDARD.decode(text).map_err(serde::de::Error::custom)
}

impl RawImage {
    pub fn new(width: u32, height: u32, channels: u8, pixels: Vec<u8>) -> Result<Self> {
        let img = RawImage { width, height, channels, pixels };
        img.check().map_err(Error::Usage)?;
        Ok(img)
    }

    fn check(&self) -> std::result::Result<(), String> {
        if !matches!(self.channels, 1 | 3) {
            return Err(format!("{} channels (expected 1 or 3)", self.channels));
        }
        if self.width == 0 || self.height == 0 {
            return Err(format!("empty image {}x{}", self.width, self.height));
        }
        let want = self.width as usize * self.height as usize * self.channels as usize;
        if self.pixels.len() != want {
            return Err(format!("{} pixel bytes, header needs {want}", self.pixels.len()));
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + self.pixels.len());
        out.extend_from_slice(RAW_MAGIC);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.push(self.channels);
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        let (w, h, c) = raw_header(bytes)?;
        let img = RawImage { width: w, height: h, channels: c, pixels: bytes[13..].to_vec() };
        img.check()?;
        Ok(img)
    }

    /// Planar `[3, H, W]` values in `[0, 1]`; gray is replicated.
    pub fn to_planar(&self) -> Vec<f32> {
        let (w, h, c) = (self.width as usize, self.height as usize, self.channels as usize);
        let mut out = vec![0.0f32; 3 * w * h];
        for i in 0..w * h {
            for ch in 0..3 {
                let src = if c == 1 { self.pixels[i] } else { self.pixels[i * 3 + ch] };
                out[ch * w * h + i] = src as f32 / 255.0;
            }
        }
        out
    }
}

fn raw_header(bytes: &[u8]) -> std::result::Result<(u32, u32, u8), String> {
    if bytes.len() < 13 || &bytes[..4] != RAW_MAGIC {
        return Err("not an OSIM container".into());
    }
    let w = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    Ok((w, h, bytes[12]))
}

fn is_raw(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("raw"))
}

/// Supported image extensions (lowercase comparison).
pub fn is_image_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "jpg" | "jpeg" | "png" | "raw"))
}

fn decode_err(path: &Path, reason: impl ToString) -> Error {
    Error::Decode { path: path.to_path_buf(), reason: reason.to_string() }
}

/// Cheap decodability check that reads only the header.
pub fn probe(path: &Path) -> Result<(u32, u32)> {
    if is_raw(path) {
        let bytes = std::fs::read(path).map_err(|e| decode_err(path, e))?;
        let img = RawImage::decode(&bytes).map_err(|e| decode_err(path, e))?;
        return Ok((img.width, img.height));
    }
    image::ImageReader::open(path)
        .map_err(|e| decode_err(path, e))?
        .with_guessed_format()
        .map_err(|e| decode_err(path, e))?
        .into_dimensions()
        .map_err(|e| decode_err(path, e))
}

/// Decodes a JPEG, PNG or `OSIM` file to 8-bit RGB.
pub fn decode_file(path: &Path) -> Result<RawImage> {
    if is_raw(path) {
        let bytes = std::fs::read(path).map_err(|e| decode_err(path, e))?;
        return RawImage::decode(&bytes).map_err(|e| decode_err(path, e));
    }
    let img = image::ImageReader::open(path)
        .map_err(|e| decode_err(path, e))?
        .with_guessed_format()
        .map_err(|e| decode_err(path, e))?
        .decode()
        .map_err(|e| decode_err(path, e))?
        .into_rgb8();
    let (w, h) = img.dimensions();
    Ok(RawImage { width: w, height: h, channels: 3, pixels: img.into_raw() })
}

/// Bilinear resize to `[3, side, side]` with values in `[0, 1]`.
pub fn resize_to_side(img: &RawImage, side: usize) -> Result<Vec<f32>> {
    if side < 8 {
        return Err(Error::Usage(format!("side {side} is below 8 pixels")));
    }
    let planar = img.to_planar();
    Ok(resize_bilinear(&planar, 3, img.height as usize, img.width as usize, side, side))
}

pub fn to_tensor(img: &RawImage, side: usize) -> Result<Tensor<f32>> {
    Tensor::from_vec(resize_to_side(img, side)?, &[3, side, side])
}

/// Writes an 8-bit RGB PNG.
pub fn write_png(path: &Path, img: &RawImage) -> Result<()> {
    let color = if img.channels == 1 { image::ExtendedColorType::L8 } else { image::ExtendedColorType::Rgb8 };
    image::save_buffer_with_format(path, &img.pixels, img.width, img.height, color, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::io(path, std::io::Error::other(other.to_string())),
        })
}
