//! Optimisation, extractor pretraining, verification metrics and the
//! cross-validated benchmark.

mod adam;
pub mod benchmark;
pub mod eval;
pub mod pretrain;
mod trainer;

use blan_autograd::Tensor;

pub use adam::{Adam, AdamConfig};
pub use eval::{cosine, rank1, remove_makeup, tpr_at_fpr, verify_pair, EvalReport, FoldEval, Probe, ScoreMatrix};
pub use pretrain::{pretrain_feature_extractor, PretrainConfig, PretrainReport};
pub use trainer::{Ablation, SubStep, TrainConfig, Trainer};

use crate::error::Result;

/// Stacks `[c, h, w]` images into `[N, c, h, w]`.
pub fn batch_images<'a>(images: impl IntoIterator<Item = &'a Tensor<f32>>) -> Result<Tensor<f32>> {
    let images: Vec<&Tensor<f32>> = images.into_iter().collect();
    let first = images
        .first()
        .ok_or_else(|| crate::Error::config("cannot batch zero images"))?;
    let mut shape = vec![images.len()];
    shape.extend_from_slice(first.shape());
    let mut data = Vec::with_capacity(shape.iter().product());
    for im in &images {
        if im.shape() != first.shape() {
            return Err(crate::Error::config(format!(
                "cannot batch images of shapes {:?} and {:?}",
                first.shape(),
                im.shape()
            )));
        }
        data.extend_from_slice(im.data());
    }
    Ok(Tensor::from_vec(shape, data)?)
}
