use crate::error::{shape_err, Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Rec.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Raster with values in `[0, 1]`, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
            return Err(shape_err!(
                "image must be non-empty with 1 or 3 channels, got {width}×{height}×{channels}"
            ));
        }
        if data.len() != width * height * channels {
            return Err(shape_err!(
                "image {width}×{height}×{channels} needs {} values, got {}",
                width * height * channels,
                data.len()
            ));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!("pixel value {v} outside [0,1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c).clamp(0.0, 1.0));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn constant(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        (self.width, self.height, self.channels) == (other.width, other.height, other.channels)
    }

    /// Single-channel intensity; Rec.601 luma for colour input.
    pub fn luma(&self) -> Vec<f64> {
        if self.channels == 1 {
            return self.data.clone();
        }
        self.data
            .chunks_exact(3)
            .map(|p| LUMA_WEIGHTS[0] * p[0] + LUMA_WEIGHTS[1] * p[1] + LUMA_WEIGHTS[2] * p[2])
            .collect()
    }

    pub fn flip_horizontal(&self) -> Image {
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in (0..self.width).rev() {
                let i = (y * self.width + x) * self.channels;
                data.extend_from_slice(&self.data[i..i + self.channels]);
            }
        }
        Image { data, ..*self }
    }

    /// Bilinear resampling with pixel-centre alignment.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Result<Image> {
        let data = resize_plane(&self.data, self.width, self.height, self.channels, width, height)?;
        Image::new(width, height, self.channels, data)
    }

    /// Rounds every value to the nearest multiple of `1/max_code`, i.e. what
    /// survives storage as an integer-coded image.
    pub fn quantized(&self, max_code: u32) -> Image {
        let m = f64::from(max_code);
        Image {
            data: self.data.iter().map(|v| (v * m).round() / m).collect(),
            ..*self
        }
    }

    /// Packs images of identical dimensions into an `N×C×H×W` tensor.
    pub fn batch_to_tensor<T: Scalar>(images: &[&Image]) -> Result<Tensor<T>> {
        let Some(first) = images.first() else {
            return Err(shape_err!("empty image batch"));
        };
        let (w, h, c) = (first.width, first.height, first.channels);
        let mut data = Vec::with_capacity(images.len() * w * h * c);
        for img in images {
            if !img.same_dims(first) {
                return Err(shape_err!("image batch has mixed dimensions"));
            }
            for ch in 0..c {
                data.extend(img.data[ch..].iter().step_by(c).map(|&v| T::from_f64_lossy(v)));
            }
        }
        Tensor::from_vec(&[images.len(), c, h, w], data)
    }

    /// Unpacks an `N×C×H×W` tensor, clamping values into `[0, 1]`.
    pub fn batch_from_tensor<T: Scalar>(t: &Tensor<T>) -> Result<Vec<Image>> {
        let [n, c, h, w] = t.dims4()?;
        let plane = h * w;
        (0..n)
            .map(|ni| {
                let mut data = vec![0.0; c * plane];
                for ch in 0..c {
                    let src = &t.data()[(ni * c + ch) * plane..][..plane];
                    for (k, v) in src.iter().enumerate() {
                        data[k * c + ch] = v.as_f64().clamp(0.0, 1.0);
                    }
                }
                Image::new(w, h, c, data)
            })
            .collect()
    }
}

pub(crate) fn resize_plane(
    src: &[f64],
    sw: usize,
    sh: usize,
    channels: usize,
    dw: usize,
    dh: usize,
) -> Result<Vec<f64>> {
    if dw == 0 || dh == 0 {
        return Err(shape_err!("resize target {dw}×{dh} is empty"));
    }
    if (sw, sh) == (dw, dh) {
        return Ok(src.to_vec());
    }
    let coord = |o: usize, s: usize, d: usize| -> (usize, usize, f64) {
        let pos = ((o as f64 + 0.5) * s as f64 / d as f64 - 0.5).clamp(0.0, (s - 1) as f64);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(s - 1);
        (i0, i1, pos - i0 as f64)
    };
    let mut out = Vec::with_capacity(dw * dh * channels);
    for y in 0..dh {
        let (y0, y1, fy) = coord(y, sh, dh);
        for x in 0..dw {
            let (x0, x1, fx) = coord(x, sw, dw);
            for c in 0..channels {
                let at = |xx: usize, yy: usize| src[(yy * sw + xx) * channels + c];
                let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
                let bot = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
                out.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    Ok(out)
}

/// Per-pixel scene depth in arbitrary non-negative units.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(shape_err!(
                "depth map {width}×{height} needs {} values, got {}",
                width * height,
                values.len()
            ));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Validation(format!("depth value {v} is negative or non-finite")));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn has_positive(&self) -> bool {
        self.values.iter().any(|&v| v > 0.0)
    }

    pub fn resize_bilinear(&self, width: usize, height: usize) -> Result<DepthMap> {
        let values = resize_plane(&self.values, self.width, self.height, 1, width, height)?;
        DepthMap::new(width, height, values)
    }

    /// Rounds every value through `f32`, the precision of stored depth files.
    pub fn to_f32_precision(&self) -> DepthMap {
        DepthMap {
            values: self.values.iter().map(|&v| f64::from(v as f32)).collect(),
            ..*self
        }
    }
}

/// Fraction of scene radiance reaching the camera, in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl TransmissionMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(shape_err!("transmission map size mismatch"));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            return Err(Error::Validation(format!("transmission {v} outside (0,1]")));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Spatially constant map; handy for exercising the compositing step.
    pub fn uniform(width: usize, height: usize, t: f64) -> Self {
        Self {
            width,
            height,
            values: vec![t; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(Image::new(1, 1, 1, vec![1.5]).is_err());
        assert!(Image::new(1, 1, 2, vec![0.5, 0.5]).is_err());
        assert!(DepthMap::new(1, 1, vec![-1.0]).is_err());
    }

    #[test]
    fn tensor_round_trip() {
        let a = Image::from_fn(3, 2, 3, |x, y, c| (x + 2 * y + c) as f64 / 10.0).unwrap();
        let b = Image::from_fn(3, 2, 3, |x, _, _| x as f64 / 4.0).unwrap();
        let t = Image::batch_to_tensor::<f64>(&[&a, &b]).unwrap();
        assert_eq!(t.shape(), &[2, 3, 2, 3]);
        assert_eq!(t.data()[1], a.get(1, 0, 0));
        let back = Image::batch_from_tensor(&t).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn resize_identity_and_constant() {
        let a = Image::from_fn(5, 4, 1, |x, y, _| (x * y) as f64 / 20.0).unwrap();
        assert_eq!(a.resize_bilinear(5, 4).unwrap(), a);
        let c = Image::constant(7, 3, 3, 0.25).unwrap();
        let r = c.resize_bilinear(4, 9).unwrap();
        assert!(r.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn flip_twice_is_identity() {
        let a = Image::from_fn(4, 3, 3, |x, y, c| ((x * 7 + y * 3 + c) % 11) as f64 / 10.0).unwrap();
        assert_ne!(a.flip_horizontal(), a);
        assert_eq!(a.flip_horizontal().flip_horizontal(), a);
    }
}
