//! Image and depth I/O, dataset manifests and the synthesis pipeline.

mod build;
mod detfile;
mod io;
mod manifest;

pub use build::{
    assign_splits, build_dataset, discover, hazy_name, image_seed, load_pairs, plan, replay_matches,
    DatasetPlan, Discovery, PipelineConfig, SourcePair, SplitSpec,
};
pub use detfile::{load_detections, parse_detections};
pub use io::{image_codes, load_depth, load_image, read_pfm, save_image, write_pfm, BitDepth};
pub use manifest::{
    manifest_root, Manifest, ManifestHeader, Record, Split, VariantRecord, MANIFEST_FILE,
};
