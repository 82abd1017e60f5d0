//! The dehazing GAN: an encoder-decoder generator whose encoder stages run
//! a plain conv block and an inception block side by side, a patch
//! discriminator, their objectives, and the training loop.

mod adam;
pub mod checkpoint;
mod discriminator;
mod generator;
mod loss;
mod params;
mod train;

pub use adam::{Adam, AdamConfig};
pub use discriminator::{discriminator_forward, DiscriminatorConfig, DISC_BLOCKS, LEAKY_SLOPE};
pub use generator::{
    decoder_forward, encoder_forward, generator_forward, inception_block, inception_specs,
    GeneratorConfig, IMAGE_CHANNELS, INCEPTION_KERNELS,
};
pub use loss::{discriminator_loss, generator_loss, GeneratorLoss, LAMBDA_L1};
pub use params::{Bound, Init, ModelParams, ParamSpec, INIT_STDDEV};
pub use train::{
    checkpoint_path, dehaze, generate, train_loop, EpochRecord, ModelConfig, Pair, StepReport,
    TrainConfig, TrainOutcome, TrainOutputs, Trainer,
};
