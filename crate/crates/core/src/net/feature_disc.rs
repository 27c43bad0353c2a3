use blan_autograd::layer::LayerSpec;
use blan_autograd::{Scalar, Var};
use rand::Rng;

use super::params::{Builder, Init, Layer, NetState, Pass};
use crate::config::{DESK_FEATURE_DIM, FEATURE_DISC_HIDDEN, INIT_STD, LEAKY_SLOPE};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDiscriminatorConfig {
    pub feature_dim: usize,
    pub hidden_dim: usize,
}

impl FeatureDiscriminatorConfig {
    pub fn desk() -> Self {
        FeatureDiscriminatorConfig {
            feature_dim: DESK_FEATURE_DIM,
            hidden_dim: FEATURE_DISC_HIDDEN,
        }
    }

    /// Scalars in the two linear layers.
    pub fn param_count(&self) -> usize {
        (self.feature_dim + 1) * self.hidden_dim + self.hidden_dim + 1
    }
}

/// Two fully connected layers judging whether a feature came from a real
/// non-makeup image.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDiscriminator<T> {
    config: FeatureDiscriminatorConfig,
    layers: [Layer; 4],
    pub state: NetState<T>,
}

impl<T: Scalar> FeatureDiscriminator<T> {
    pub fn new(config: FeatureDiscriminatorConfig, rng: &mut impl Rng) -> Result<Self> {
        if config.feature_dim == 0 || config.hidden_dim == 0 {
            return Err(Error::config("feature discriminator widths must be positive"));
        }
        let mut b = Builder::<T, _>::new(rng, Init::Normal(INIT_STD));
        let layers = [
            b.layer(
                "fc1",
                LayerSpec::Linear {
                    in_features: config.feature_dim,
                    out_features: config.hidden_dim,
                    bias: true,
                },
            ),
            b.layer("", LayerSpec::LeakyRelu { slope: LEAKY_SLOPE }),
            b.layer(
                "fc2",
                LayerSpec::Linear {
                    in_features: config.hidden_dim,
                    out_features: 1,
                    bias: true,
                },
            ),
            b.layer("", LayerSpec::Sigmoid),
        ];
        Ok(FeatureDiscriminator {
            config,
            layers,
            state: b.finish(),
        })
    }

    pub fn config(&self) -> &FeatureDiscriminatorConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        self.state.params.count()
    }

    /// Maps features `[N, feature_dim]` to probabilities `[N, 1]`.
    pub fn forward<'g>(&self, pass: &mut Pass<'g, T>, f: Var<'g, T>) -> Result<Var<'g, T>> {
        let shape = f.shape();
        if shape.len() != 2 || shape[1] != self.config.feature_dim {
            return Err(Error::config(format!(
                "feature discriminator expects [N, {}], got {shape:?}",
                self.config.feature_dim
            )));
        }
        let mut h = f;
        for layer in &self.layers {
            h = pass.apply(&self.state, layer, &[h])?;
        }
        Ok(h)
    }
}
