//! Discovery of clear/depth pairs, split assignment and dataset synthesis.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::haze::{render_variant, normalize_depth, synthesize_variants, DepthMap, HazeParams, Image};
use crate::model::Pair;
use crate::par;
use crate::rng::{hash_str, RngStream};

use super::io::{image_codes, load_depth, load_image, read_pfm, save_image, write_pfm, BitDepth};
use super::manifest::{Manifest, ManifestHeader, Record, Split, VariantRecord, MANIFEST_FILE};

const SPLIT_STREAM: u64 = 0x5350_4c54;
const IMAGE_STREAM: u64 = 0x494d_4147;

/// Clear/val/test partition of the clear images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSpec {
    Counts { train: usize, val: usize, test: usize },
    /// Val and test sizes are `round(fraction · n)`; train takes the rest.
    Fractions { val: f64, test: f64 },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Fractions { val: 0.05, test: 0.05 }
    }
}

impl SplitSpec {
    /// `[train, val, test]` sizes for `n` clear images.
    pub fn sizes(&self, n: usize) -> Result<[usize; 3]> {
        match *self {
            SplitSpec::Counts { train, val, test } => {
                if train + val + test != n {
                    return Err(Error::Config(format!(
                        "split counts {train}/{val}/{test} sum to {}, but there are {n} clear images",
                        train + val + test
                    )));
                }
                Ok([train, val, test])
            }
            SplitSpec::Fractions { val, test } => {
                let ok = |f: f64| f.is_finite() && (0.0..=1.0).contains(&f);
                if !ok(val) || !ok(test) || val + test > 1.0 {
                    return Err(Error::Config(format!("invalid split fractions val={val} test={test}")));
                }
                let v = (val * n as f64).round() as usize;
                let t = ((test * n as f64).round() as usize).min(n - v);
                Ok([n - v - t, v, t])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input_dir: PathBuf,
    pub output_dir: PathBuf,
    pub k: usize,
    pub seed: u64,
    pub splits: SplitSpec,
    pub width: usize,
    pub height: usize,
    /// Scale for integer-coded depth PNGs.
    pub depth_scale: Option<f64>,
    /// Skip unpaired files instead of aborting.
    pub allow_partial: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input_dir: PathBuf::from("data"),
            output_dir: PathBuf::from("out"),
            k: crate::haze::DEFAULT_VARIANTS,
            seed: 0,
            splits: SplitSpec::default(),
            width: 640,
            height: 480,
            depth_scale: None,
            allow_partial: false,
        }
    }
}

/// Sizes a dataset would have, computed without touching any file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetPlan {
    pub clear: usize,
    pub k: usize,
    pub hazy: usize,
    pub clear_per_split: [usize; 3],
    pub hazy_per_split: [usize; 3],
}

pub fn plan(clear: usize, k: usize, splits: &SplitSpec) -> Result<DatasetPlan> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let sizes = splits.sizes(clear)?;
    Ok(DatasetPlan {
        clear,
        k,
        hazy: clear * k,
        clear_per_split: sizes,
        hazy_per_split: sizes.map(|s| s * k),
    })
}

/// A clear image and its depth file, matched by stem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourcePair {
    pub stem: String,
    pub clear: PathBuf,
    pub depth: PathBuf,
}

/// Result of scanning an input directory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Discovery {
    pub pairs: Vec<SourcePair>,
    /// Files without a partner, with the reason.
    pub unpaired: Vec<String>,
}

/// Pairs `<stem>.png` with `<stem>.depth.pfm` or `<stem>.depth.png`, sorted
/// by stem.
pub fn discover(dir: &Path) -> Result<Discovery> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut clear: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut depth: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() {
            continue;
        }
        let Some(name) = path.file_name().and_then(|n| n.to_str()).map(str::to_owned) else {
            continue;
        };
        if let Some(stem) = name.strip_suffix(".depth.pfm").or_else(|| name.strip_suffix(".depth.png")) {
            depth.entry(stem.to_owned()).or_default().push(path);
        } else if let Some(stem) = name.strip_suffix(".png") {
            clear.insert(stem.to_owned(), path);
        }
    }
    let mut out = Discovery::default();
    for (stem, path) in &clear {
        match depth.get(stem).map(Vec::as_slice) {
            Some([d]) => out.pairs.push(SourcePair {
                stem: stem.clone(),
                clear: path.clone(),
                depth: d.clone(),
            }),
            Some(_) => out.unpaired.push(format!("{stem}: more than one depth file")),
            None => out.unpaired.push(format!("{stem}: no {stem}.depth.pfm or {stem}.depth.png")),
        }
    }
    for stem in depth.keys().filter(|s| !clear.contains_key(*s)) {
        out.unpaired.push(format!("{stem}: depth file without {stem}.png"));
    }
    Ok(out)
}

/// Seed of the variant streams of image `stem`.
pub fn image_seed(seed: u64, stem: &str) -> u64 {
    RngStream::derive(seed, &[IMAGE_STREAM, hash_str(stem)]).next_u64()
}

/// Split of each stem (given sorted) under a seeded shuffle.
pub fn assign_splits(stems: &[String], sizes: [usize; 3], seed: u64) -> BTreeMap<String, Split> {
    let mut order: Vec<usize> = (0..stems.len()).collect();
    RngStream::derive(seed, &[SPLIT_STREAM]).shuffle(&mut order);
    order
        .iter()
        .enumerate()
        .map(|(rank, &i)| {
            let split = if rank < sizes[0] {
                Split::Train
            } else if rank < sizes[0] + sizes[1] {
                Split::Val
            } else {
                Split::Test
            };
            (stems[i].clone(), split)
        })
        .collect()
}

pub fn hazy_name(stem: &str, i: usize) -> String {
    format!("hazy/{stem}_{i}.png")
}

fn prepare(cfg: &PipelineConfig, src: &SourcePair) -> Result<(Image, DepthMap)> {
    let mut clear = load_image(&src.clear)?;
    if clear.channels() != 3 {
        return Err(Error::format(&src.clear, "clear image must be RGB"));
    }
    let mut depth = load_depth(&src.depth, cfg.depth_scale)?;
    if (clear.width(), clear.height()) != (cfg.width, cfg.height) {
        clear = clear.resize_bilinear(cfg.width, cfg.height)?;
    }
    if (depth.width(), depth.height()) != (cfg.width, cfg.height) {
        depth = depth.resize_bilinear(cfg.width, cfg.height)?;
    }
    // Synthesize from exactly what is stored so replay is bitwise.
    Ok((clear.quantized(BitDepth::Eight.max_code()), depth.to_f32_precision()))
}

/// Builds the dataset described by `cfg` and writes `manifest.jsonl` into
/// the output directory. Output bytes depend only on the inputs and `cfg`.
pub fn build_dataset(cfg: &PipelineConfig) -> Result<Manifest> {
    if cfg.k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if cfg.width == 0 || cfg.height == 0 {
        return Err(Error::Config("target resolution must be positive".into()));
    }
    let found = discover(&cfg.input_dir)?;
    if !found.unpaired.is_empty() && !cfg.allow_partial {
        return Err(Error::Validation(format!(
            "{} unpaired file(s) in {} (use --allow-partial to skip them):\n  {}",
            found.unpaired.len(),
            cfg.input_dir.display(),
            found.unpaired.join("\n  ")
        )));
    }
    if found.pairs.is_empty() {
        return Err(Error::Config(format!("no clear/depth pairs in {}", cfg.input_dir.display())));
    }
    let stems: Vec<String> = found.pairs.iter().map(|p| p.stem.clone()).collect();
    let splits = assign_splits(&stems, cfg.splits.sizes(stems.len())?, cfg.seed);

    let out = &cfg.output_dir;
    for sub in ["clear", "depth", "hazy"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let records: Vec<Result<Record>> = par::map_slice(&found.pairs, |src| {
        let (clear, depth) = prepare(cfg, src)?;
        let clear_path = format!("clear/{}.png", src.stem);
        let depth_path = format!("depth/{}.pfm", src.stem);
        save_image(&clear, &out.join(&clear_path), BitDepth::Eight)?;
        write_pfm(&depth, &out.join(&depth_path))?;
        let seed = image_seed(cfg.seed, &src.stem);
        let variants = synthesize_variants(&clear, &depth, cfg.k, seed)?
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                let hazy_path = hazy_name(&src.stem, i);
                save_image(&v.image, &out.join(&hazy_path), BitDepth::Eight)?;
                Ok(VariantRecord {
                    hazy_path,
                    beta: v.params.beta,
                    airlight: v.params.airlight,
                    variant_index: i,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Record {
            stem: src.stem.clone(),
            clear_path,
            depth_path,
            split: splits[&src.stem],
            image_seed: seed,
            variants,
        })
    });
    let manifest = Manifest {
        header: ManifestHeader {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed: cfg.seed,
            k: cfg.k,
            width: cfg.width,
            height: cfg.height,
            depth_scale: cfg.depth_scale,
        },
        records: records.into_iter().collect::<Result<_>>()?,
    };
    manifest.save(&out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Re-renders variant `i` of `record` from the stored clear image, stored
/// depth and recorded parameters, and reports whether its 8-bit codes equal
/// the stored hazy file's.
pub fn replay_matches(root: &Path, record: &Record, i: usize) -> Result<bool> {
    let v = record
        .variants
        .get(i)
        .ok_or_else(|| Error::Validation(format!("{} has no variant {i}", record.stem)))?;
    let clear = load_image(&root.join(&record.clear_path))?;
    let depth = read_pfm(&root.join(&record.depth_path))?;
    let params = HazeParams {
        beta: v.beta,
        airlight: v.airlight,
    };
    let rendered = render_variant(&clear, &normalize_depth(&depth), params)?;
    let stored = load_image(&root.join(&v.hazy_path))?;
    Ok(image_codes(&rendered, BitDepth::Eight) == image_codes(&stored, BitDepth::Eight))
}

/// `(hazy, clear)` pairs of every variant in `split`.
pub fn load_pairs(manifest: &Manifest, root: &Path, split: Split) -> Result<Vec<Pair>> {
    let records: Vec<&Record> = manifest.split_records(split).collect();
    let nested: Vec<Result<Vec<Pair>>> = par::map_slice(&records, |r| {
        let clear = load_image(&root.join(&r.clear_path))?;
        r.variants
            .iter()
            .map(|v| Ok((load_image(&root.join(&v.hazy_path))?, clear.clone())))
            .collect()
    });
    Ok(nested.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect())
}
