//! Image ingestion and PNG output.
//!
//! Accepted inputs are 8-bit PNG (RGB, RGBA with alpha dropped, grayscale
//! replicated to three channels) and raw RGB8 buffers of exactly
//! `height * width * 3` bytes. Pixel `p` becomes `p / 255`. Images are never
//! resampled; a size mismatch is an error.

use std::io::Cursor;

use convscope_core::{Shape, Tensor3};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

/// A decoded input: three channels, every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputImage {
    pixels: Tensor3,
}

impl InputImage {
    pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != height * width * 3 {
            return Err(Error::Format(format!(
                "{} bytes cannot hold a {height}x{width} RGB8 image",
                bytes.len()
            )));
        }
        let pixels = Tensor3::from_vec(
            Shape::new(height, width, 3),
            bytes.iter().map(|&p| f32::from(p) / 255.0).collect(),
        )?;
        Ok(InputImage { pixels })
    }

    pub fn pixels(&self) -> &Tensor3 {
        &self.pixels
    }

    pub fn into_tensor(self) -> Tensor3 {
        self.pixels
    }

    /// SHA-256 over the little-endian `f32` pixel data.
    pub fn digest(&self) -> String {
        tensor_digest(&self.pixels)
    }
}

pub fn tensor_digest(t: &Tensor3) -> String {
    let mut hasher = Sha256::new();
    for v in t.data() {
        hasher.update(v.to_le_bytes());
    }
    format!("sha256:{}", hex(&hasher.finalize()))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Decode `bytes` and check them against `target` (height and width; the
/// channel count is always 3).
pub fn ingest_image(bytes: &[u8], target: Shape) -> Result<InputImage> {
    let (height, width, rgb) = if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)?
    } else if bytes.len() == target.height * target.width * 3 {
        (target.height, target.width, bytes.to_vec())
    } else {
        return Err(Error::Format(format!(
            "not a PNG and {} bytes is not a raw {}x{} RGB8 buffer",
            bytes.len(),
            target.height,
            target.width
        )));
    };
    if (height, width) != (target.height, target.width) || target.channels != 3 {
        return Err(Error::Dimension {
            expected: format!("{}x{}x{}", target.height, target.width, target.channels),
            actual: format!("{height}x{width}x3"),
        });
    }
    InputImage::from_rgb8(height, width, &rgb)
}

fn decode_png(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| Error::Format(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| Error::Format("image too large".into()))?];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Format(e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format(format!("{:?}-bit PNG; only 8-bit images are supported", info.bit_depth)));
    }
    let data = &buf[..info.buffer_size()];
    let (w, h) = (info.width as usize, info.height as usize);
    let rgb: Vec<u8> = match info.color_type {
        png::ColorType::Rgb => data.to_vec(),
        png::ColorType::Rgba => data.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => data.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => data.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
        png::ColorType::Indexed => return Err(Error::Format("unexpanded palette PNG".into())),
    };
    Ok((h, w, rgb))
}

/// Encode an 8-bit RGB PNG.
pub fn encode_png(width: usize, height: usize, rgb: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width as u32, height as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().map_err(|e| Error::Format(e.to_string()))?;
        writer.write_image_data(rgb).map_err(|e| Error::Format(e.to_string()))?;
    }
    Ok(out)
}
