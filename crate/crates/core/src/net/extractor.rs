use blan_autograd::layer::{LayerSpec, Mode};
use blan_autograd::{Graph, Scalar, Tensor, Var};
use rand::Rng;

use super::params::{Builder, Init, Layer, NetState, Pass};
use crate::config::{DESK_FEATURE_DIM, LEAKY_SLOPE};
use crate::error::{Error, Result};

/// Identity feature extractor: four stride-2 convolutions and a linear
/// projection. Pretraining adds a classifier head on top (see
/// [`crate::train::pretrain`]); the feature is the layer below that head.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtractorConfig {
    pub size: usize,
    pub channels: usize,
    pub base_channels: usize,
    pub feature_dim: usize,
}

impl ExtractorConfig {
    pub fn desk() -> Self {
        ExtractorConfig {
            size: 64,
            channels: 3,
            base_channels: 16,
            feature_dim: DESK_FEATURE_DIM,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 16 || self.size % 16 != 0 {
            return Err(Error::config(format!(
                "extractor input size {} must be a positive multiple of 16",
                self.size
            )));
        }
        if self.feature_dim == 0 || self.base_channels == 0 {
            return Err(Error::config("extractor widths must be positive"));
        }
        Ok(())
    }

    fn widths(&self) -> [usize; 4] {
        let b = self.base_channels;
        [b, 2 * b, 4 * b, 4 * b]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureExtractor<T> {
    config: ExtractorConfig,
    layers: Vec<Layer>,
    pub state: NetState<T>,
}

impl<T: Scalar> FeatureExtractor<T> {
    pub fn new(config: ExtractorConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut b = Builder::<T, _>::new(rng, Init::Kaiming);
        let mut layers = Vec::new();
        let mut in_ch = config.channels;
        for (i, out) in config.widths().into_iter().enumerate() {
            layers.push(b.layer(
                &format!("conv{}", i + 1),
                LayerSpec::Conv2d {
                    in_channels: in_ch,
                    out_channels: out,
                    kernel: 4,
                    stride: 2,
                    padding: 1,
                    bias: i == 0,
                },
            ));
            if i > 0 {
                layers.push(b.layer(&format!("bn{}", i + 1), LayerSpec::BatchNorm2d { channels: out }));
            }
            layers.push(b.layer("", LayerSpec::LeakyRelu { slope: LEAKY_SLOPE }));
            in_ch = out;
        }
        let side = config.size / 16;
        layers.push(b.layer("", LayerSpec::Flatten));
        layers.push(b.layer(
            "fc",
            LayerSpec::Linear {
                in_features: in_ch * side * side,
                out_features: config.feature_dim,
                bias: true,
            },
        ));
        Ok(FeatureExtractor {
            config,
            layers,
            state: b.finish(),
        })
    }

    pub fn config(&self) -> &ExtractorConfig {
        &self.config
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim
    }

    pub fn param_count(&self) -> usize {
        self.state.params.count()
    }

    /// Maps images `[N, c, h, w]` to features `[N, feature_dim]`.
    pub fn forward<'g>(&self, pass: &mut Pass<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let c = &self.config;
        let shape = x.shape();
        if shape.len() != 4 || shape[1..] != [c.channels, c.size, c.size] {
            return Err(Error::config(format!(
                "extractor expects [N, {}, {}, {}], got {shape:?}",
                c.channels, c.size, c.size
            )));
        }
        let mut h = x;
        for layer in &self.layers {
            h = pass.apply(&self.state, layer, &[h])?;
        }
        Ok(h)
    }

    /// Features of a batch in inference mode.
    pub fn extract(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        let g = Graph::new();
        let mut pass = self.state.begin(&g, false, Mode::Eval);
        let f = self.forward(&mut pass, g.constant(images.clone()))?;
        let out = f.value().clone();
        Ok(out)
    }
}
