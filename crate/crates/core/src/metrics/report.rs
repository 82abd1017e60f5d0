use serde::{Deserialize, Serialize, Serializer};

use crate::error::Result;
use crate::haze::Image;
use crate::par;

use super::{fsim, psnr, ssim};

fn db_or_inf<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

/// Formats a PSNR value, spelling infinity as `inf`.
pub fn format_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairScore {
    pub name: String,
    #[serde(serialize_with = "db_or_inf")]
    pub psnr: f64,
    pub ssim: f64,
    pub fsim: Option<f64>,
}

/// Per-image and mean scores over a set of image pairs. Infinite PSNR
/// values are excluded from the PSNR mean and counted separately.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityReport {
    pub pairs: Vec<PairScore>,
    pub count: usize,
    #[serde(serialize_with = "db_or_inf")]
    pub mean_psnr: f64,
    pub infinite_psnr: usize,
    pub mean_ssim: f64,
    pub mean_fsim: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub psnr: f64,
    pub ssim: f64,
}

impl QualityReport {
    /// Scores `(name, prediction, reference)` triples in parallel.
    pub fn evaluate(pairs: &[(String, Image, Image)], with_fsim: bool) -> Result<Self> {
        let scores: Vec<Result<PairScore>> = par::map_slice(pairs, |(name, pred, reference)| {
            Ok(PairScore {
                name: name.clone(),
                psnr: psnr(pred, reference, 1.0)?,
                ssim: ssim(pred, reference)?,
                fsim: if with_fsim { Some(fsim(pred, reference)?) } else { None },
            })
        });
        let pairs = scores.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(Self::from_scores(pairs))
    }

    pub fn from_scores(pairs: Vec<PairScore>) -> Self {
        let count = pairs.len();
        let finite: Vec<f64> = pairs.iter().map(|p| p.psnr).filter(|v| v.is_finite()).collect();
        let infinite_psnr = count - finite.len();
        let mean_psnr = if finite.is_empty() {
            if count > 0 { f64::INFINITY } else { f64::NAN }
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        let mean_ssim = pairs.iter().map(|p| p.ssim).sum::<f64>() / count as f64;
        let mean_fsim = pairs
            .iter()
            .map(|p| p.fsim)
            .collect::<Option<Vec<f64>>>()
            .filter(|v| !v.is_empty())
            .map(|v| v.iter().sum::<f64>() / v.len() as f64);
        Self {
            pairs,
            count,
            mean_psnr,
            infinite_psnr,
            mean_ssim,
            mean_fsim,
        }
    }
}
