use blan_autograd::layer::{self, LayerSpec, Mode};
use blan_autograd::{Graph, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;

use super::adam::{Adam, AdamConfig};
use super::batch_images;
use super::eval::cosine;
use crate::error::{Error, Result};
use crate::net::{ExtractorConfig, FeatureExtractor};
use crate::seed::{self, label};
use crate::synth::{mirror, render_pool, NuisanceConfig};

/// Identity-classification pretraining of the feature extractor.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub extractor: ExtractorConfig,
    pub identities: usize,
    /// Views per identity used for training.
    pub renderings: usize,
    /// Further views per identity kept for the nearest-neighbour check.
    pub held_out: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub nuisance: NuisanceConfig,
    /// Nearest-neighbour accuracy the extractor must exceed.
    pub required_accuracy: f64,
}

impl PretrainConfig {
    pub fn new(extractor: ExtractorConfig, seed: u64) -> Self {
        PretrainConfig {
            extractor,
            identities: 50,
            renderings: 10,
            held_out: 2,
            epochs: 12,
            batch_size: 16,
            learning_rate: 1e-3,
            seed,
            nuisance: NuisanceConfig::default(),
            required_accuracy: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainReport {
    /// Held-out views matched to the nearest training view's identity.
    pub nn_accuracy: f64,
    /// Mean cross-entropy over the last epoch.
    pub final_loss: f64,
    pub epoch_losses: Vec<f64>,
}

/// Trains the extractor plus a throwaway linear classifier head, then checks
/// nearest-neighbour identity accuracy on held-out views.
pub fn pretrain_feature_extractor(cfg: &PretrainConfig) -> Result<(FeatureExtractor<f32>, PretrainReport)> {
    if cfg.identities < 2 || cfg.renderings < 1 || cfg.held_out < 1 || cfg.batch_size == 0 {
        return Err(Error::config(
            "pretraining needs >= 2 identities, >= 1 training and >= 1 held-out view each, and a positive batch size",
        ));
    }
    let per = cfg.renderings + cfg.held_out;
    let pool = render_pool(cfg.seed, cfg.identities, per, cfg.extractor.size, &cfg.nuisance);
    let (train, held): (Vec<_>, Vec<_>) = pool.into_iter().enumerate().partition(|(i, _)| i % per < cfg.renderings);
    let train: Vec<(Tensor<f32>, u32)> = train.into_iter().map(|(_, x)| x).collect();
    let held: Vec<(Tensor<f32>, u32)> = held.into_iter().map(|(_, x)| x).collect();

    let mut rng = seed::rng(cfg.seed, &[label::PRETRAIN]);
    let mut f = FeatureExtractor::<f32>::new(cfg.extractor.clone(), &mut rng)?;
    let head_spec = LayerSpec::Linear {
        in_features: cfg.extractor.feature_dim,
        out_features: cfg.identities,
        bias: true,
    };
    let head_shapes = head_spec.param_shapes();
    let head_std = (1.0 / cfg.extractor.feature_dim as f64).sqrt();
    let mut head = vec![
        Tensor::randn(head_shapes[0].1.as_slice(), head_std, &mut rng),
        Tensor::zeros(head_shapes[1].1.as_slice()),
    ];
    let mut adam_f = Adam::new(AdamConfig::default(), f.state.params.tensors());
    let mut adam_h = Adam::new(AdamConfig::default(), &head);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let images: Vec<Tensor<f32>> = chunk
                .iter()
                .map(|&i| {
                    if rng.random_bool(0.5) {
                        mirror(&train[i].0)
                    } else {
                        train[i].0.clone()
                    }
                })
                .collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train[i].1 as usize).collect();
            let g = Graph::new();
            let mut pass = f.state.begin(&g, true, Mode::Train);
            let feats = f.forward(&mut pass, g.constant(batch_images(images.iter())?))?;
            let hp: Vec<_> = head.iter().map(|t| g.param(t.clone())).collect();
            let (logits, _) = layer::forward(&head_spec, &hp, &[feats], Mode::Train, None)?;
            let loss = logits.softmax_cross_entropy(&labels)?;
            let value = loss.item() as f64;
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    term: "extractor cross-entropy",
                    iteration: batches,
                });
            }
            g.backward(loss)?;
            f.state.commit(&pass);
            adam_f.step(f.state.params.tensors_mut(), &pass.grads(), cfg.learning_rate);
            let hg: Vec<_> = hp.iter().map(|v| v.grad().expect("head reached by loss")).collect();
            adam_h.step(&mut head, &hg, cfg.learning_rate);
            sum += value;
            batches += 1;
        }
        epoch_losses.push(sum / batches.max(1) as f64);
    }

    let nn_accuracy = nearest_neighbour_accuracy(&f, &train, &held)?;
    let final_loss = epoch_losses.last().copied().unwrap_or(f64::NAN);
    if nn_accuracy <= cfg.required_accuracy {
        return Err(Error::Pretrain {
            accuracy: nn_accuracy,
            required: cfg.required_accuracy,
            loss: final_loss,
        });
    }
    Ok((
        f,
        PretrainReport {
            nn_accuracy,
            final_loss,
            epoch_losses,
        },
    ))
}

fn features(f: &FeatureExtractor<f32>, set: &[(Tensor<f32>, u32)]) -> Result<Vec<Vec<f32>>> {
    let mut out = Vec::with_capacity(set.len());
    for chunk in set.chunks(64) {
        let t = f.extract(&batch_images(chunk.iter().map(|(x, _)| x))?)?;
        let d = t.shape()[1];
        out.extend(t.data().chunks(d).map(<[f32]>::to_vec));
    }
    Ok(out)
}

/// Fraction of `queries` whose most similar `gallery` entry shares its label.
pub fn nearest_neighbour_accuracy(
    f: &FeatureExtractor<f32>,
    gallery: &[(Tensor<f32>, u32)],
    queries: &[(Tensor<f32>, u32)],
) -> Result<f64> {
    let gf = features(f, gallery)?;
    let qf = features(f, queries)?;
    let mut correct = 0;
    for (q, (_, label)) in qf.iter().zip(queries) {
        let mut best = (f64::NEG_INFINITY, u32::MAX);
        for (g, (_, gl)) in gf.iter().zip(gallery) {
            let s = cosine(q, g)?;
            if s > best.0 {
                best = (s, *gl);
            }
        }
        correct += (best.1 == *label) as usize;
    }
    Ok(correct as f64 / queries.len().max(1) as f64)
}
