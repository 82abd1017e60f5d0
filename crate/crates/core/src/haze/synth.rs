use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::par;
use crate::rng::RngStream;

use super::image::{DepthMap, Image, TransmissionMap};

/// Range of the scattering coefficient.
pub const BETA_RANGE: (f64, f64) = (1.8, 3.0);
/// Allowed global atmospheric light levels.
pub const AIRLIGHT_CHOICES: [f64; 5] = [0.8, 0.85, 0.9, 0.95, 1.0];
/// Hazy variants generated per clear image.
pub const DEFAULT_VARIANTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazeParams {
    pub beta: f64,
    pub airlight: f64,
}

impl HazeParams {
    pub fn is_valid(&self) -> bool {
        (BETA_RANGE.0..=BETA_RANGE.1).contains(&self.beta)
            && AIRLIGHT_CHOICES.contains(&self.airlight)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HazeVariant {
    pub image: Image,
    pub params: HazeParams,
}

/// Min-max rescale to `[0, 1]`; a constant map becomes all zeros.
pub fn normalize_depth(d: &DepthMap) -> DepthMap {
    let (lo, hi) = d
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let values = if span > 0.0 {
        d.values().iter().map(|&v| (v - lo) / span).collect()
    } else {
        vec![0.0; d.values().len()]
    };
    DepthMap::new(d.width(), d.height(), values).expect("rescaled depth stays valid")
}

/// `t = exp(−β·d)` per pixel.
pub fn transmission_from_depth(d: &DepthMap, beta: f64) -> Result<TransmissionMap> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Param(format!("beta must be positive, got {beta}")));
    }
    let values = d.values().iter().map(|&v| (-beta * v).exp()).collect();
    TransmissionMap::new(d.width(), d.height(), values)
}

/// Atmospheric scattering composite `I = J·t + A·(1 − t)`, with one `t`
/// shared by all channels of a pixel.
pub fn apply_haze(clear: &Image, t: &TransmissionMap, airlight: f64) -> Result<Image> {
    if (clear.width(), clear.height()) != (t.width(), t.height()) {
        return Err(shape_err!(
            "image {}×{} vs transmission {}×{}",
            clear.width(),
            clear.height(),
            t.width(),
            t.height()
        ));
    }
    if !(0.0..=1.0).contains(&airlight) {
        return Err(Error::Param(format!("airlight {airlight} outside [0,1]")));
    }
    let c = clear.channels();
    let (w, src, tv) = (clear.width(), clear.data(), t.values());
    let mut data = vec![0.0; src.len()];
    par::for_each_chunk_mut(&mut data, w * c, |y, row| {
        for (x, px) in row.chunks_exact_mut(c).enumerate() {
            let t = tv[y * w + x];
            for (ch, out) in px.iter_mut().enumerate() {
                let j = src[(y * w + x) * c + ch];
                // rounding can step one ulp outside the blend interval
                *out = (j * t + airlight * (1.0 - t)).clamp(j.min(airlight), j.max(airlight));
            }
        }
    });
    Image::new(clear.width(), clear.height(), c, data)
}

/// Recovers the clear value from a hazy one given `t > 0` and `A`.
pub fn invert_haze(hazy: f64, t: f64, airlight: f64) -> f64 {
    (hazy - airlight * (1.0 - t)) / t
}

pub fn sample_params(rng: &mut RngStream) -> HazeParams {
    let beta = rng.uniform(BETA_RANGE.0, BETA_RANGE.1);
    let airlight = AIRLIGHT_CHOICES[rng.index(AIRLIGHT_CHOICES.len())];
    HazeParams { beta, airlight }
}

/// Hazy rendering of `clear` for already-normalized depth and fixed
/// parameters. This is the replay path for recorded variants.
pub fn render_variant(clear: &Image, normalized: &DepthMap, params: HazeParams) -> Result<Image> {
    let t = transmission_from_depth(normalized, params.beta)?;
    apply_haze(clear, &t, params.airlight)
}

/// `k` hazy variants of one clear image. Variant `i` draws its parameters
/// from the stream `(seed, i)`, so any single variant can be regenerated
/// on its own.
pub fn synthesize_variants(
    clear: &Image,
    depth: &DepthMap,
    k: usize,
    seed: u64,
) -> Result<Vec<HazeVariant>> {
    if (clear.width(), clear.height()) != (depth.width(), depth.height()) {
        return Err(shape_err!(
            "clear image {}×{} vs depth {}×{}",
            clear.width(),
            clear.height(),
            depth.width(),
            depth.height()
        ));
    }
    if k == 0 {
        return Err(Error::Param("at least one variant is required".into()));
    }
    let normalized = normalize_depth(depth);
    (0..k)
        .map(|i| {
            let params = sample_params(&mut RngStream::derive(seed, &[i as u64]));
            let image = render_variant(clear, &normalized, params)?;
            Ok(HazeVariant { image, params })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthKind {
    /// Left-to-right linear ramp.
    Ramp,
    /// Distance from the image centre.
    Radial,
    /// Seeded sum of Gaussian bumps.
    Blobs,
}

/// Analytic depth field in `[0, 1]`, standing in for a monocular depth
/// estimator in tests and demos.
pub fn synthetic_depth(height: usize, width: usize, kind: DepthKind, seed: u64) -> Result<DepthMap> {
    if height == 0 || width == 0 {
        return Err(shape_err!("depth size {width}×{height} is empty"));
    }
    let values: Vec<f64> = match kind {
        DepthKind::Ramp => (0..height)
            .flat_map(|_| {
                (0..width).map(move |x| if width > 1 { x as f64 / (width - 1) as f64 } else { 0.0 })
            })
            .collect(),
        DepthKind::Radial => {
            let (cy, cx) = ((height - 1) as f64 / 2.0, (width - 1) as f64 / 2.0);
            let rmax = (cy * cy + cx * cx).sqrt();
            (0..height)
                .flat_map(|y| {
                    (0..width).map(move |x| {
                        let r = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
                        if rmax > 0.0 { r / rmax } else { 0.0 }
                    })
                })
                .collect()
        }
        DepthKind::Blobs => {
            let mut rng = RngStream::new(seed, 0xb10b);
            let blobs: Vec<(f64, f64, f64, f64)> = (0..4)
                .map(|_| {
                    (
                        rng.uniform(0.0, width as f64),
                        rng.uniform(0.0, height as f64),
                        rng.uniform(0.1, 0.4) * width.max(height) as f64,
                        rng.uniform(0.3, 1.0),
                    )
                })
                .collect();
            let raw: Vec<f64> = (0..height)
                .flat_map(|y| (0..width).map(move |x| (x as f64, y as f64)))
                .map(|(x, y)| {
                    blobs
                        .iter()
                        .map(|&(bx, by, s, a)| a * (-((x - bx).powi(2) + (y - by).powi(2)) / (2.0 * s * s)).exp())
                        .sum()
                })
                .collect();
            return Ok(normalize_depth(&DepthMap::new(width, height, raw)?));
        }
    };
    DepthMap::new(width, height, values)
}

/// Seeded colour test scene: smooth per-channel gradients, a few sinusoidal
/// textures and flat rectangles with hard edges.
pub fn synthetic_scene(width: usize, height: usize, seed: u64) -> Result<Image> {
    let mut rng = RngStream::new(seed, 0x5ce7e);
    let base: Vec<[f64; 3]> = (0..3)
        .map(|_| [rng.uniform(0.1, 0.6), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)])
        .collect();
    let waves: Vec<[f64; 4]> = (0..3)
        .map(|_| {
            [
                rng.uniform(0.05, 0.15),
                rng.uniform(0.0, std::f64::consts::TAU),
                rng.uniform(0.0, std::f64::consts::TAU),
                rng.uniform(0.05, 0.15),
            ]
        })
        .collect();
    let rects: Vec<([f64; 4], [f64; 3])> = (0..3)
        .map(|_| {
            let (x0, y0) = (rng.uniform(0.0, 0.7), rng.uniform(0.0, 0.7));
            let (w, h) = (rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3));
            let colour = [rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)];
            ([x0, y0, x0 + w, y0 + h], colour)
        })
        .collect();
    Image::from_fn(width, height, 3, |x, y, c| {
        let (u, v) = (x as f64 / width as f64, y as f64 / height as f64);
        if let Some((_, colour)) = rects
            .iter()
            .find(|(r, _)| u >= r[0] && u < r[2] && v >= r[1] && v < r[3])
        {
            return colour[c];
        }
        let [b0, bu, bv] = base[c];
        let [freq, phase, angle, amp] = waves[c];
        let along = x as f64 * angle.cos() + y as f64 * angle.sin();
        b0 + bu * u + bv * v + amp * (freq * along * std::f64::consts::TAU / 4.0 + phase).sin() + 0.2
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn depth(v: &[f64]) -> DepthMap {
        DepthMap::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_depth(&depth(&[2.0, 4.0, 6.0])).values(), &[0.0, 0.5, 1.0]);
        let ramp = [0.0, 0.25, 0.5, 1.0];
        assert_eq!(normalize_depth(&depth(&ramp)).values(), &ramp);
        assert_eq!(normalize_depth(&depth(&[3.0; 4])).values(), &[0.0; 4]);
    }

    #[test]
    fn transmission_examples() {
        let t = transmission_from_depth(&depth(&[0.0, 1.0]), 1.8).unwrap();
        assert_eq!(t.values()[0], 1.0);
        assert!((t.values()[1] - 0.165299).abs() < 1e-6);
        let t = transmission_from_depth(&depth(&[1.0]), 3.0).unwrap();
        assert!((t.values()[0] - 0.049787).abs() < 1e-6);
        assert!(matches!(
            transmission_from_depth(&depth(&[1.0]), 0.0),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn haze_limits() {
        let j = Image::from_fn(4, 3, 3, |x, y, c| ((x + y + c) % 5) as f64 / 4.0).unwrap();
        let clear_view = apply_haze(&j, &TransmissionMap::uniform(4, 3, 1.0), 0.9).unwrap();
        assert_eq!(clear_view, j);
        // t → 0 is outside the map's domain; use the smallest positive value
        let opaque = apply_haze(&j, &TransmissionMap::uniform(4, 3, f64::MIN_POSITIVE), 0.9).unwrap();
        assert!(opaque.data().iter().all(|&v| v == 0.9));
        let px = Image::constant(1, 1, 1, 0.2).unwrap();
        let i = apply_haze(&px, &TransmissionMap::uniform(1, 1, 0.5), 0.9).unwrap();
        assert!((i.data()[0] - 0.55).abs() < 1e-15);
        let wrong = TransmissionMap::uniform(2, 2, 0.5);
        assert!(matches!(apply_haze(&px, &wrong, 0.9), Err(Error::Shape(_))));
    }

    #[test]
    fn sampled_params_statistics() {
        let mut rng = RngStream::from_seed(123);
        let draws: Vec<HazeParams> = (0..10_000).map(|_| sample_params(&mut rng)).collect();
        let mean = draws.iter().map(|p| p.beta).sum::<f64>() / draws.len() as f64;
        assert!((mean - 2.4).abs() < 0.02, "{mean}");
        assert!(draws.iter().all(HazeParams::is_valid));
        let mut again = RngStream::from_seed(123);
        assert!(draws.iter().all(|p| *p == sample_params(&mut again)));
    }

    #[test]
    fn variants_replay_bitwise() {
        let clear = Image::from_fn(16, 8, 3, |x, y, c| ((x * 3 + y * 5 + c * 7) % 17) as f64 / 16.0).unwrap();
        let d = synthetic_depth(8, 16, DepthKind::Radial, 0).unwrap();
        let vs = synthesize_variants(&clear, &d, 3, 99).unwrap();
        assert_eq!(vs.len(), 3);
        let normalized = normalize_depth(&d);
        for v in &vs {
            assert!(v.params.is_valid());
            assert_eq!(render_variant(&clear, &normalized, v.params).unwrap(), v.image);
        }
        assert_eq!(vs, synthesize_variants(&clear, &d, 3, 99).unwrap());
        assert_ne!(vs, synthesize_variants(&clear, &d, 3, 100).unwrap());
    }

    #[test]
    fn constant_depth_gives_global_blend() {
        let clear = Image::from_fn(5, 5, 3, |x, y, c| ((x + 2 * y + c) % 6) as f64 / 5.0).unwrap();
        let d = DepthMap::new(5, 5, vec![7.0; 25]).unwrap();
        for v in synthesize_variants(&clear, &d, 3, 1).unwrap() {
            // normalized constant depth is 0, so t = 1 everywhere
            let t = 1.0;
            for (i, j) in v.image.data().iter().zip(clear.data()) {
                assert_eq!(*i, j * t + v.params.airlight * (1.0 - t));
            }
        }
    }

    #[test]
    fn synthetic_depth_fields() {
        let ramp = synthetic_depth(1, 4, DepthKind::Ramp, 0).unwrap();
        let want = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        for (a, b) in ramp.values().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let radial = synthetic_depth(5, 5, DepthKind::Radial, 0).unwrap();
        assert_eq!(radial.values()[12], 0.0);
        assert_eq!(
            synthetic_depth(9, 7, DepthKind::Blobs, 4).unwrap(),
            synthetic_depth(9, 7, DepthKind::Blobs, 4).unwrap()
        );
        let b = synthetic_depth(9, 7, DepthKind::Blobs, 4).unwrap();
        assert!(b.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    proptest! {
        #[test]
        fn composite_is_bounded_and_invertible(
            j in 0.0f64..=1.0,
            d in 0.0f64..=1.0,
            beta in 1.8f64..=3.0,
            a_idx in 0usize..5,
        ) {
            let a = AIRLIGHT_CHOICES[a_idx];
            let clear = Image::constant(1, 1, 1, j).unwrap();
            let t = transmission_from_depth(&DepthMap::new(1, 1, vec![d]).unwrap(), beta).unwrap();
            let tv = t.values()[0];
            prop_assert!(tv >= (-beta).exp() && tv <= 1.0);
            let i = apply_haze(&clear, &t, a).unwrap().data()[0];
            prop_assert!(j.min(a) <= i && i <= j.max(a));
            prop_assert!((invert_haze(i, tv, a) - j).abs() < 1e-6);
        }

        #[test]
        fn deeper_is_hazier_when_airlight_brighter(
            j in 0.0f64..0.8,
            d1 in 0.0f64..=1.0,
            d2 in 0.0f64..=1.0,
            beta in 1.8f64..=3.0,
        ) {
            let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let clear = Image::constant(2, 1, 1, j).unwrap();
            let t = transmission_from_depth(&DepthMap::new(2, 1, vec![near, far]).unwrap(), beta).unwrap();
            prop_assert!(t.values()[0] >= t.values()[1]);
            let i = apply_haze(&clear, &t, 0.9).unwrap();
            prop_assert!(i.data()[0] <= i.data()[1]);
        }
    }
}
