//! Depth-driven haze synthesis with the atmospheric scattering model.

mod image;
mod synth;

pub use image::{DepthMap, Image, TransmissionMap, LUMA_WEIGHTS};
pub use synth::{
    apply_haze, invert_haze, normalize_depth, render_variant, sample_params, synthesize_variants,
    synthetic_depth, synthetic_scene, transmission_from_depth, DepthKind, HazeParams, HazeVariant,
    AIRLIGHT_CHOICES, BETA_RANGE, DEFAULT_VARIANTS,
};
