//! Detection files: one box per line,
//! `image_id class_id [confidence] x_min y_min x_max y_max`.
//! Blank lines and lines starting with `#` are skipped.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{BoundingBox, Detection};

pub fn parse_detections(text: &str, with_confidence: bool, path: &Path) -> Result<Vec<Detection>> {
    let want = if with_confidence { 7 } else { 6 };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: String| Error::format(path, format!("line {}: {msg}", i + 1));
        if fields.len() != want {
            return Err(bad(format!("expected {want} fields, got {}", fields.len())));
        }
        let class_id: u32 = fields[1].parse().map_err(|_| bad(format!("bad class id {}", fields[1])))?;
        let nums = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| bad(format!("bad number {f}"))))
            .collect::<Result<Vec<f64>>>()?;
        let (conf, c) = if with_confidence { (Some(nums[0]), &nums[1..]) } else { (None, &nums[..]) };
        let mut bbox = BoundingBox::new(c[0], c[1], c[2], c[3], class_id);
        bbox.confidence = conf;
        bbox.validate().map_err(|e| bad(e.to_string()))?;
        out.push(Detection {
            image_id: fields[0].to_string(),
            bbox,
        });
    }
    Ok(out)
}

pub fn load_detections(path: &Path, with_confidence: bool) -> Result<Vec<Detection>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections(&text, with_confidence, path)
}
