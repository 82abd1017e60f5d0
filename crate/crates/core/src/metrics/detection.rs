//! IoU and single-threshold mean average precision.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub class_id: u32,
    /// Present on predictions only.
    pub confidence: Option<f64>,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64, class_id: u32) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
            class_id,
            confidence: None,
        }
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = Some(confidence);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_max <= self.x_min || self.y_max <= self.y_min {
            return Err(Error::Contract(format!("degenerate box {self:?}")));
        }
        if let Some(c) = self.confidence {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::Contract(format!("confidence {c} outside [0,1]")));
            }
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

/// A box attached to the image it was found in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub bbox: BoundingBox,
}

pub fn iou(p: &BoundingBox, g: &BoundingBox) -> Result<f64> {
    p.validate()?;
    g.validate()?;
    let iw = (p.x_max.min(g.x_max) - p.x_min.max(g.x_min)).max(0.0);
    let ih = (p.y_max.min(g.y_max) - p.y_min.max(g.y_min)).max(0.0);
    let inter = iw * ih;
    Ok(inter / (p.area() + g.area() - inter))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub class_id: u32,
    pub ap: f64,
    pub ground_truths: usize,
    pub predictions: usize,
    pub true_positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub map: f64,
    pub miou: f64,
    pub iou_threshold: f64,
    pub per_class: Vec<ClassAp>,
}

/// Area under the precision envelope: `Σ (r_k − r_{k−1}) · max_{j≥k} p_j`.
pub fn all_point_ap(precision: &[f64], recall: &[f64]) -> f64 {
    let mut envelope = precision.to_vec();
    for k in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[k] = envelope[k].max(envelope[k + 1]);
    }
    let mut prev = 0.0;
    let mut ap = 0.0;
    for (&r, &p) in recall.iter().zip(&envelope) {
        ap += (r - prev) * p;
        prev = r;
    }
    ap
}

/// mAP over the classes present in `gts` and mean IoU over true positives.
///
/// Per class, predictions are ranked by descending confidence (ties keep
/// input order); each one claims the unmatched ground truth in its image
/// with the highest IoU at or above `iou_threshold`, otherwise it is a
/// false positive. Predictions of classes without ground truth are ignored.
pub fn evaluate_detections(
    preds: &[Detection],
    gts: &[Detection],
    iou_threshold: f64,
) -> Result<DetectionSummary> {
    if gts.is_empty() {
        return Err(Error::Undefined("no ground-truth boxes to evaluate against".into()));
    }
    for d in preds.iter().chain(gts) {
        d.bbox.validate()?;
    }
    if let Some(p) = preds.iter().find(|p| p.bbox.confidence.is_none()) {
        return Err(Error::Contract(format!("prediction without confidence in {}", p.image_id)));
    }

    let classes: BTreeSet<u32> = gts.iter().map(|g| g.bbox.class_id).collect();
    let mut per_class = Vec::with_capacity(classes.len());
    let mut matched_ious = Vec::new();
    for &class in &classes {
        let mut pool: HashMap<&str, Vec<(&BoundingBox, bool)>> = HashMap::new();
        let mut n_gt = 0;
        for g in gts.iter().filter(|g| g.bbox.class_id == class) {
            pool.entry(&g.image_id).or_default().push((&g.bbox, false));
            n_gt += 1;
        }
        let mut ranked: Vec<&Detection> = preds.iter().filter(|p| p.bbox.class_id == class).collect();
        ranked.sort_by(|a, b| {
            let (ca, cb) = (a.bbox.confidence.unwrap(), b.bbox.confidence.unwrap());
            cb.total_cmp(&ca)
        });

        let mut tp = 0usize;
        let mut precision = Vec::with_capacity(ranked.len());
        let mut recall = Vec::with_capacity(ranked.len());
        for (k, p) in ranked.iter().enumerate() {
            let mut best: Option<(usize, f64)> = None;
            if let Some(cands) = pool.get_mut(p.image_id.as_str()) {
                for (i, (g, used)) in cands.iter().enumerate() {
                    if *used {
                        continue;
                    }
                    let v = iou(&p.bbox, g)?;
                    if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                        best = Some((i, v));
                    }
                }
                if let Some((i, v)) = best {
                    cands[i].1 = true;
                    tp += 1;
                    matched_ious.push(v);
                }
            }
            precision.push(tp as f64 / (k + 1) as f64);
            recall.push(tp as f64 / n_gt as f64);
        }
        per_class.push(ClassAp {
            class_id: class,
            ap: all_point_ap(&precision, &recall),
            ground_truths: n_gt,
            predictions: ranked.len(),
            true_positives: tp,
        });
    }

    let map = per_class.iter().map(|c| c.ap).sum::<f64>() / per_class.len() as f64;
    let miou = if matched_ious.is_empty() {
        0.0
    } else {
        matched_ious.iter().sum::<f64>() / matched_ious.len() as f64
    };
    Ok(DetectionSummary {
        map,
        miou,
        iou_threshold,
        per_class,
    })
}

/// Groups detections by image id, preserving order within each image.
pub fn by_image(dets: &[Detection]) -> BTreeMap<&str, Vec<&Detection>> {
    let mut out: BTreeMap<&str, Vec<&Detection>> = BTreeMap::new();
    for d in dets {
        out.entry(d.image_id.as_str()).or_default().push(d);
    }
    out
}
