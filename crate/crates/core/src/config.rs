//! Default hyperparameters.
//!
//! Every tunable number used by training and evaluation lives here. The
//! "origin" column separates values taken from the published method's
//! implementation settings from values chosen for this implementation.
//!
//! | constant | value | origin | role |
//! |---|---|---|---|
//! | [`LAMBDA_ADV_PIXEL`] | 3e-3 | published | weight of the pixel-level adversarial term on G |
//! | [`LAMBDA_CONS_FEATURE`] | 0.02 | published | weight of the feature reconstruction term |
//! | [`LAMBDA_ADV_FEATURE`] | 3e-3 | published | weight of the feature-level adversarial term on G |
//! | [`EDGE_WEIGHT`] | 0.1 | published | edge loss weight inside the pixel consistency loss |
//! | [`SYMMETRY_WEIGHT`] | 0.3 | published | symmetry loss weight inside the pixel consistency loss |
//! | [`LEARNING_RATE`] | 1e-4 | published | Adam step size for G, D_p and D_f |
//! | [`PATCH_GRID`] | 2 | published | the pixel discriminator judges a k×k grid of patches |
//! | [`REFERENCE_IMAGE_SIZE`] | 128 | published | side length at reference scale |
//! | [`FEATURE_DISC_HIDDEN`] | 100 | chosen | hidden width of the two-layer feature discriminator |
//! | [`ADAM_BETA1`] | 0.5 | chosen | image-to-image GAN convention |
//! | [`ADAM_BETA2`] | 0.999 | chosen | |
//! | [`ADAM_EPS`] | 1e-8 | chosen | |
//! | [`BATCH_SIZE`] | 4 | chosen | |
//! | [`LOG_EPS`] | 1e-7 | chosen | clamp inside every logarithm |
//! | [`LEAKY_SLOPE`] | 0.2 | chosen | encoder and discriminator activations |
//! | [`INIT_STD`] | 0.02 | chosen | N(0, σ) weight init for G, D_p, D_f |
//! | [`FOLDS`] | 5 | published | identity-disjoint cross-validation folds |
//! | [`FPR_POINTS`] | 0.001, 0.01 | published | operating points of the TPR table |
//! | [`TRAIN_ITERATIONS`] | 2000 | chosen | generator steps per fold |
//! | [`EXTRACTOR_POOL_IDENTITIES`] | 100 | chosen | identities in the extractor's pretraining pool |

/// λ1.
pub const LAMBDA_ADV_PIXEL: f64 = 3e-3;
/// λ2.
pub const LAMBDA_CONS_FEATURE: f64 = 0.02;
/// λ3.
pub const LAMBDA_ADV_FEATURE: f64 = 3e-3;
pub const EDGE_WEIGHT: f64 = 0.1;
pub const SYMMETRY_WEIGHT: f64 = 0.3;
pub const LEARNING_RATE: f64 = 1e-4;
pub const PATCH_GRID: usize = 2;
pub const REFERENCE_IMAGE_SIZE: usize = 128;

pub const FEATURE_DISC_HIDDEN: usize = 100;
pub const ADAM_BETA1: f64 = 0.5;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const BATCH_SIZE: usize = 4;
pub const LOG_EPS: f64 = 1e-7;
pub const LEAKY_SLOPE: f64 = 0.2;
pub const INIT_STD: f64 = 0.02;
pub const FOLDS: usize = 5;
pub const FPR_POINTS: [f64; 2] = [0.001, 0.01];
pub const TRAIN_ITERATIONS: usize = 2000;
/// Disjoint from every benchmark identity by seed path.
pub const EXTRACTOR_POOL_IDENTITIES: usize = 100;

/// Desk-scale image side.
pub const DESK_IMAGE_SIZE: usize = 64;
/// Feature length of the desk-scale extractor.
pub const DESK_FEATURE_DIM: usize = 64;
/// Consecutive near-zero D_p losses before a saturation warning.
pub const SATURATION_WINDOW: usize = 100;
pub const SATURATION_LOSS: f64 = 1e-3;
