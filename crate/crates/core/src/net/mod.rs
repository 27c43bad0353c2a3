//! The four networks: U-Net generator G, patch discriminator D_p, feature
//! discriminator D_f and the frozen identity extractor F.

pub mod checkpoint;
mod extractor;
mod feature_disc;
mod generator;
mod model;
mod params;
mod patch_disc;

pub use checkpoint::Checkpoint;
pub use extractor::{ExtractorConfig, FeatureExtractor};
pub use feature_disc::{FeatureDiscriminator, FeatureDiscriminatorConfig};
pub use generator::{Generator, GeneratorConfig, SkipAudit};
pub use model::{BlanModel, ModelConfig, ParamCounts};
pub use params::{Init, Layer, NetState, ParamSet, Pass};
pub use patch_disc::{PatchDiscriminator, PatchDiscriminatorConfig};
