#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::Path;

use hazelab::dataset::{save_image, write_pfm, BitDepth};
use hazelab::haze::{synthesize_variants, synthetic_depth, synthetic_scene, DepthKind};
use hazelab::metrics::{BoundingBox, Detection};
use hazelab::model::Pair;
use hazelab::rng::RngStream;

/// `n` seeded `(hazy, clear)` pairs of size `size`×`size` with ramp depth.
pub fn toy_pairs(n: usize, size: usize, seed: u64) -> Vec<Pair> {
    let depth = synthetic_depth(size, size, DepthKind::Ramp, seed).unwrap();
    (0..n as u64)
        .map(|i| {
            let clear = synthetic_scene(size, size, seed.wrapping_add(i)).unwrap();
            let v = synthesize_variants(&clear, &depth, 1, seed.wrapping_add(1000 + i)).unwrap();
            (v[0].image.clone(), clear)
        })
        .collect()
}

/// Writes `n` clear PNGs with PFM depth (`img_XX.png`, `img_XX.depth.pfm`).
pub fn write_fixtures(dir: &Path, n: usize, width: usize, height: usize) {
    std::fs::create_dir_all(dir).unwrap();
    for i in 0..n {
        let stem = format!("img_{i:02}");
        let clear = synthetic_scene(width, height, 100 + i as u64).unwrap();
        let kind = [DepthKind::Ramp, DepthKind::Radial, DepthKind::Blobs][i % 3];
        let depth = synthetic_depth(height, width, kind, i as u64).unwrap();
        save_image(&clear, &dir.join(format!("{stem}.png")), BitDepth::Eight).unwrap();
        write_pfm(&depth, &dir.join(format!("{stem}.depth.pfm"))).unwrap();
    }
}

/// Every file under `dir` with its bytes, keyed by relative path.
pub fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Random detection instance: at most `max_boxes` ground truths and
/// predictions over two images and two classes, on a coarse grid so that
/// overlaps, ties in confidence and IoU exactly at 0.5 all occur.
pub fn random_instance(rng: &mut RngStream, max_boxes: usize) -> (Vec<Detection>, Vec<Detection>) {
    let boxes = |n: usize, conf: bool, rng: &mut RngStream| -> Vec<Detection> {
        (0..n)
            .map(|_| {
                let (x, y) = (rng.index(6) as f64, rng.index(6) as f64);
                let (w, h) = (1.0 + rng.index(4) as f64, 1.0 + rng.index(4) as f64);
                let mut b = BoundingBox::new(x, y, x + w, y + h, rng.index(2) as u32);
                if conf {
                    b.confidence = Some(rng.index(5) as f64 / 4.0);
                }
                Detection {
                    image_id: ["a", "b"][rng.index(2)].to_string(),
                    bbox: b,
                }
            })
            .collect()
    };
    let n_gt = 1 + rng.index(max_boxes);
    let n_pred = rng.index(max_boxes + 1);
    let gts = boxes(n_gt, false, rng);
    let preds = boxes(n_pred, true, rng);
    (preds, gts)
}

fn oracle_iou(p: &BoundingBox, g: &BoundingBox) -> f64 {
    let iw = (p.x_max.min(g.x_max) - p.x_min.max(g.x_min)).max(0.0);
    let ih = (p.y_max.min(g.y_max) - p.y_min.max(g.y_min)).max(0.0);
    let inter = iw * ih;
    let area = |b: &BoundingBox| (b.x_max - b.x_min) * (b.y_max - b.y_min);
    inter / (area(p) + area(g) - inter)
}

/// Brute-force mAP: for every rank prefix the matching is replayed from
/// scratch over all ground truths, the precision/recall point read off,
/// and AP integrated over distinct recall levels using the best precision
/// at any equal or higher recall.
pub fn oracle_map(preds: &[Detection], gts: &[Detection], thr: f64) -> f64 {
    let classes: BTreeSet<u32> = gts.iter().map(|g| g.bbox.class_id).collect();
    let mut aps = Vec::new();
    for &c in &classes {
        let cls_gts: Vec<&Detection> = gts.iter().filter(|g| g.bbox.class_id == c).collect();
        let mut ranked: Vec<(usize, &Detection)> =
            preds.iter().enumerate().filter(|(_, p)| p.bbox.class_id == c).collect();
        // Descending confidence, ties by input position.
        ranked.sort_by(|(ia, a), (ib, b)| {
            b.bbox.confidence.unwrap().total_cmp(&a.bbox.confidence.unwrap()).then(ia.cmp(ib))
        });
        let n_gt = cls_gts.len() as f64;
        let mut curve = Vec::new();
        for k in 1..=ranked.len() {
            let mut used = vec![false; cls_gts.len()];
            let mut tp = 0usize;
            for (_, p) in &ranked[..k] {
                let mut best: Option<(usize, f64)> = None;
                for (gi, g) in cls_gts.iter().enumerate() {
                    if used[gi] || g.image_id != p.image_id {
                        continue;
                    }
                    let v = oracle_iou(&p.bbox, &g.bbox);
                    if v >= thr && best.map_or(true, |(_, bv)| v > bv) {
                        best = Some((gi, v));
                    }
                }
                if let Some((gi, _)) = best {
                    used[gi] = true;
                    tp += 1;
                }
            }
            curve.push((tp as f64 / n_gt, tp as f64 / k as f64));
        }
        let mut levels: Vec<f64> = curve.iter().map(|&(r, _)| r).collect();
        levels.dedup();
        let mut ap = 0.0;
        let mut prev = 0.0;
        for r in levels {
            if r == prev {
                continue;
            }
            let p = curve
                .iter()
                .filter(|&&(rr, _)| rr >= r)
                .map(|&(_, p)| p)
                .fold(0.0, f64::max);
            ap += (r - prev) * p;
            prev = r;
        }
        aps.push(ap);
    }
    aps.iter().sum::<f64>() / aps.len() as f64
}
