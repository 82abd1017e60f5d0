use crate::error::{shape_err, Result};
use crate::haze::Image;

pub(crate) fn check_pair(a: &Image, b: &Image) -> Result<()> {
    if !a.same_dims(b) {
        return Err(shape_err!(
            "image pair dims differ: {}×{}×{} vs {}×{}×{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        ));
    }
    Ok(())
}

/// Mean squared error pooled over all pixels and channels.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_pair(a, b)?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum();
    Ok(sum / a.data().len() as f64)
}

/// Peak signal-to-noise ratio in dB; `f64::INFINITY` for identical inputs.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        let a = Image::from_fn(8, 6, 3, |x, y, c| ((x + y + c) % 9) as f64 / 10.0).unwrap();
        let b = Image::new(8, 6, 3, a.data().iter().map(|v| v + 0.1).collect()).unwrap();
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-6);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let zero = Image::constant(4, 4, 1, 0.0).unwrap();
        let one = Image::constant(4, 4, 1, 1.0).unwrap();
        assert_eq!(psnr(&zero, &one, 1.0).unwrap(), 0.0);
        assert!(psnr(&zero, &a, 1.0).is_err());
    }
}
