//! Line-delimited dataset manifest: one header line, then one line per
//! clear image.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRecord {
    pub hazy_path: String,
    pub beta: f64,
    pub airlight: f64,
    pub variant_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub stem: String,
    pub clear_path: String,
    pub depth_path: String,
    pub split: Split,
    /// Seed of this image's variant streams.
    pub image_seed: u64,
    pub variants: Vec<VariantRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub tool_version: String,
    pub seed: u64,
    pub k: usize,
    pub width: usize,
    pub height: usize,
    /// Scale applied to integer-coded source depth, if any.
    pub depth_scale: Option<f64>,
}

/// Paths in records are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub records: Vec<Record>,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

impl Manifest {
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| Error::format(path, "empty manifest"))?;
        let header: ManifestHeader =
            serde_json::from_str(first).map_err(|e| Error::format(path, format!("header: {e}")))?;
        let records = lines
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))
            })
            .collect::<Result<_>>()?;
        Ok(Self { header, records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn split_records(&self, split: Split) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn split_sizes(&self) -> [usize; 3] {
        [Split::Train, Split::Val, Split::Test].map(|s| self.split_records(s).count())
    }

    pub fn hazy_count(&self) -> usize {
        self.records.iter().map(|r| r.variants.len()).sum()
    }

    /// Every problem found, or an empty list: missing files, wrong variant
    /// counts or indices, duplicated clear images or hazy files.
    pub fn problems(&self, root: &Path) -> Vec<String> {
        let mut out = Vec::new();
        let mut stems = BTreeSet::new();
        let mut files = BTreeSet::new();
        let mut check = |rel: &str, what: &str, stem: &str, out: &mut Vec<String>| {
            if !root.join(rel).is_file() {
                out.push(format!("{stem}: {what} file {rel} is missing"));
            }
            if !files.insert(rel.to_string()) {
                out.push(format!("{stem}: file {rel} is referenced twice"));
            }
        };
        for r in &self.records {
            if !stems.insert(r.stem.clone()) {
                out.push(format!("{}: clear image appears in more than one record", r.stem));
            }
            check(&r.clear_path, "clear", &r.stem, &mut out);
            check(&r.depth_path, "depth", &r.stem, &mut out);
            if r.variants.len() != self.header.k {
                out.push(format!(
                    "{}: {} variants, expected {}",
                    r.stem,
                    r.variants.len(),
                    self.header.k
                ));
            }
            for (i, v) in r.variants.iter().enumerate() {
                if v.variant_index != i {
                    out.push(format!("{}: variant {i} has index {}", r.stem, v.variant_index));
                }
                check(&v.hazy_path, "hazy", &r.stem, &mut out);
            }
        }
        out
    }

    /// Fails with a validation error listing every problem.
    pub fn validate(&self, root: &Path) -> Result<()> {
        let problems = self.problems(root);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "manifest has {} problem(s):\n  {}",
                problems.len(),
                problems.join("\n  ")
            )))
        }
    }
}

/// Directory holding the manifest, against which record paths resolve.
pub fn manifest_root(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}
