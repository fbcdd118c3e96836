//! Raster I/O. Pixel values map linearly between `[-1, 1]` and the full
//! integer range of the stored bit depth.

use std::io::Cursor;
use std::path::Path;

use image::codecs::jpeg::JpegEncoder;
use image::{DynamicImage, ExtendedColorType, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Geometry, Image};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitDepth {
    #[default]
    #[serde(rename = "8")]
    Eight,
    #[serde(rename = "16")]
    Sixteen,
}

impl BitDepth {
    fn max(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

/// Only PNG is accepted for writing watermarked images.
pub fn ensure_lossless(path: &Path) -> Result<()> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => Ok(()),
        Some(other) => Err(Error::Codec(format!(
            "refusing to write `{}`: `.{other}` is not a lossless format, use .png",
            path.display()
        ))),
        None => Err(Error::Codec(format!("`{}` has no extension, use .png", path.display()))),
    }
}

fn to_levels(x: &Image, depth: BitDepth) -> Vec<u16> {
    let g = x.geometry();
    let m = depth.max();
    let mut out = Vec::with_capacity(g.len());
    for r in 0..g.height {
        for c in 0..g.width {
            for ch in 0..g.channels {
                let u = 0.5 * (x.get(ch, r, c).clamp(-1.0, 1.0) + 1.0);
                out.push((u * m).round() as u16);
            }
        }
    }
    out
}

fn from_levels(data: &[u16], g: Geometry, max: f64) -> Image {
    Image::from_fn(g, |ch, r, c| 2.0 * data[(r * g.width + c) * g.channels + ch] as f64 / max - 1.0)
}

fn from_dynamic(img: DynamicImage) -> Image {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let buf = img.into_rgb16();
        from_levels(buf.as_raw(), Geometry::new(3, h, w), 65535.0)
    } else {
        let buf = img.into_luma16();
        from_levels(buf.as_raw(), Geometry::new(1, h, w), 65535.0)
    }
}

/// Loads any supported raster as gray (1 channel) or RGB (3 channels);
/// alpha is dropped.
pub fn load_image(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| Error::Codec(format!("{}: {e}", path.display())))?;
    Ok(from_dynamic(img))
}

pub fn save_png(x: &Image, path: &Path, depth: BitDepth) -> Result<()> {
    save_png_tagged(x, path, depth, &[])
}

/// Writes a PNG with `tEXt` chunks for each `(keyword, text)` pair.
pub fn save_png_tagged(x: &Image, path: &Path, depth: BitDepth, text: &[(&str, &str)]) -> Result<()> {
    ensure_lossless(path)?;
    let g = x.geometry();
    let color = match g.channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        _ => return Err(Error::Codec(format!("cannot store a {g} image"))),
    };
    let levels = to_levels(x, depth);
    let bytes: Vec<u8> = match depth {
        BitDepth::Eight => levels.into_iter().map(|l| l as u8).collect(),
        BitDepth::Sixteen => levels.into_iter().flat_map(u16::to_be_bytes).collect(),
    };
    let codec = |e: png::EncodingError| Error::Codec(format!("{}: {e}", path.display()));
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut enc = png::Encoder::new(file, g.width as u32, g.height as u32);
    enc.set_color(color);
    enc.set_depth(match depth {
        BitDepth::Eight => png::BitDepth::Eight,
        BitDepth::Sixteen => png::BitDepth::Sixteen,
    });
    for (k, v) in text {
        enc.add_text_chunk(k.to_string(), v.to_string()).map_err(codec)?;
    }
    let mut w = enc.write_header().map_err(codec)?;
    w.write_image_data(&bytes).map_err(codec)?;
    w.finish().map_err(codec)
}

/// `tEXt` chunks of a PNG file.
pub fn read_png_text(path: &Path) -> Result<Vec<(String, String)>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let reader = png::Decoder::new(file)
        .read_info()
        .map_err(|e| Error::Codec(format!("{}: {e}", path.display())))?;
    Ok(reader
        .info()
        .uncompressed_latin1_text
        .iter()
        .map(|t| (t.keyword.clone(), t.text.clone()))
        .collect())
}

/// Encodes at 8 bits with the given JPEG quality (1–100) and decodes again.
pub fn jpeg_roundtrip(x: &Image, quality: u8) -> Result<Image> {
    if !(1..=100).contains(&quality) {
        return Err(Error::InvalidParameter(format!("jpeg quality {quality} outside 1..=100")));
    }
    let g = x.geometry();
    let color = match g.channels {
        1 => ExtendedColorType::L8,
        3 => ExtendedColorType::Rgb8,
        _ => return Err(Error::Codec(format!("cannot JPEG-encode a {g} image"))),
    };
    let bytes: Vec<u8> = to_levels(x, BitDepth::Eight).into_iter().map(|l| l as u8).collect();
    let mut buf = Vec::new();
    JpegEncoder::new_with_quality(&mut buf, quality)
        .encode(&bytes, g.width as u32, g.height as u32, color)
        .map_err(|e| Error::Codec(e.to_string()))?;
    let img = image::load(Cursor::new(buf), ImageFormat::Jpeg).map_err(|e| Error::Codec(e.to_string()))?;
    let out = from_dynamic(img);
    if g.channels == 1 && out.geometry().channels == 3 {
        return Ok(Image::from_fn(g, |_, r, c| out.get(0, r, c)));
    }
    Ok(out)
}
