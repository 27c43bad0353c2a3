//! Procedural paired faces: identity rendering, a parametric makeup operator,
//! fold splitting and PPM image IO.

mod dataset;
mod face;
mod makeup;
pub mod ppm;

pub use dataset::{
    make_dataset, mirror, render_pool, Dataset, DatasetSpec, FoldSplit, ImagePair, PairRecipe,
    MIN_IDENTITIES,
};
pub use face::{render_identity, Nuisance, NuisanceConfig, Occlusion, Region, Rendering, SyntheticIdentity};
pub use makeup::{apply_makeup, MakeupParams};
pub use ppm::{read_image, write_image};
