//! PNG images and portable-float-map depth files.

use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use crate::error::{Error, Result};
use crate::haze::{DepthMap, Image};

/// Integer depth of a stored PNG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_code(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

/// Integer codes of one PNG with the maximum code of its bit depth.
struct Codes {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<u16>,
    max_code: u32,
}

fn decode_png(path: &Path) -> Result<Codes> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map_err(|e| Error::format(path, format!("cannot decode PNG: {e}")))?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let codes = |channels, values, max_code| Codes {
        width,
        height,
        channels,
        values,
        max_code,
    };
    Ok(match img {
        DynamicImage::ImageLuma8(b) => codes(1, b.into_raw().into_iter().map(u16::from).collect(), 255),
        DynamicImage::ImageLumaA8(_) => codes(1, img.to_luma8().into_raw().into_iter().map(u16::from).collect(), 255),
        DynamicImage::ImageLuma16(b) => codes(1, b.into_raw(), 65535),
        DynamicImage::ImageLumaA16(_) => codes(1, img.to_luma16().into_raw(), 65535),
        DynamicImage::ImageRgb16(b) => codes(3, b.into_raw(), 65535),
        DynamicImage::ImageRgba16(_) => codes(3, img.to_rgb16().into_raw(), 65535),
        _ => codes(3, img.to_rgb8().into_raw().into_iter().map(u16::from).collect(), 255),
    })
}

/// Loads an 8- or 16-bit PNG, mapping codes to `[0, 1]` by the type
/// maximum. Alpha is dropped.
pub fn load_image(path: &Path) -> Result<Image> {
    let c = decode_png(path)?;
    let m = f64::from(c.max_code);
    let data = c.values.iter().map(|&v| f64::from(v) / m).collect();
    Image::new(c.width, c.height, c.channels, data)
}

/// Integer codes of `img` at `depth`, rounded to nearest.
pub fn image_codes(img: &Image, depth: BitDepth) -> Vec<u16> {
    let m = f64::from(depth.max_code());
    img.data().iter().map(|v| (v * m).round() as u16).collect()
}

/// Writes `img` as a PNG. Reloading differs from `img` by at most half a
/// quantization step.
pub fn save_image(img: &Image, path: &Path, depth: BitDepth) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let codes = image_codes(img, depth);
    let dynamic = match (img.channels(), depth) {
        (1, BitDepth::Eight) => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, codes.iter().map(|&v| v as u8).collect()).expect("sized"),
        ),
        (1, BitDepth::Sixteen) => {
            DynamicImage::ImageLuma16(ImageBuffer::<Luma<u16>, _>::from_raw(w, h, codes).expect("sized"))
        }
        (_, BitDepth::Eight) => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, codes.iter().map(|&v| v as u8).collect()).expect("sized"),
        ),
        (_, BitDepth::Sixteen) => {
            DynamicImage::ImageRgb16(ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, codes).expect("sized"))
        }
    };
    let mut buf = std::io::Cursor::new(Vec::new());
    dynamic
        .write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| Error::format(path, format!("cannot encode PNG: {e}")))?;
    fs::write(path, buf.into_inner()).map_err(|e| Error::io(path, e))
}

/// Reads a single-channel little- or big-endian PFM (`Pf`). Rows are
/// stored bottom-up.
pub fn read_pfm(path: &Path) -> Result<DepthMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::format(path, msg.to_string());
    let mut pos = 0;
    let mut token = || -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PFM header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let kind = token()?;
    if kind != "Pf" {
        return Err(bad("only single-channel PFM (Pf) depth is supported"));
    }
    let width: usize = token()?.parse().map_err(|_| bad("bad PFM width"))?;
    let height: usize = token()?.parse().map_err(|_| bad("bad PFM height"))?;
    let scale: f64 = token()?.parse().map_err(|_| bad("bad PFM scale"))?;
    // Exactly one whitespace byte separates the header from the raster.
    let start = pos + 1;
    let n = width * height;
    if bytes.len() < start + 4 * n {
        return Err(bad("truncated PFM raster"));
    }
    let little = scale < 0.0;
    let mut values = vec![0.0; n];
    for (i, chunk) in bytes[start..start + 4 * n].chunks_exact(4).enumerate() {
        let raw: [u8; 4] = chunk.try_into().expect("4 bytes");
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (row, col) = (i / width, i % width);
        values[(height - 1 - row) * width + col] = f64::from(v);
    }
    DepthMap::new(width, height, values).map_err(|e| match e {
        Error::Validation(msg) => Error::Validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Writes depth as little-endian `f32` PFM. Lossless for values already at
/// `f32` precision.
pub fn write_pfm(depth: &DepthMap, path: &Path) -> Result<()> {
    let (w, h) = (depth.width(), depth.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(4 * w * h);
    for row in (0..h).rev() {
        for &v in &depth.values()[row * w..(row + 1) * w] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Loads a depth map from `.pfm`, or from an integer PNG scaled by
/// `scale · code / max_code`. PNG depth without a scale is a config error.
pub fn load_depth(path: &Path, scale: Option<f64>) -> Result<DepthMap> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("pfm") => read_pfm(path),
        Some(ext) if ext.eq_ignore_ascii_case("png") => {
            let scale = scale.ok_or_else(|| {
                Error::Config(format!("{}: integer depth needs a scale factor", path.display()))
            })?;
            if !(scale.is_finite() && scale > 0.0) {
                return Err(Error::Config(format!("depth scale must be positive, got {scale}")));
            }
            let c = decode_png(path)?;
            if c.channels != 1 {
                return Err(Error::format(path, "depth PNG must be single-channel"));
            }
            let m = f64::from(c.max_code);
            DepthMap::new(c.width, c.height, c.values.iter().map(|&v| f64::from(v) / m * scale).collect())
        }
        _ => Err(Error::format(path, "depth must be .pfm or .png")),
    }
}
