use blan_autograd::layer::LayerSpec;
use blan_autograd::{Scalar, Var};
use rand::Rng;

use super::params::{Builder, Init, Layer, NetState, Pass};
use crate::config::{INIT_STD, LEAKY_SLOPE, PATCH_GRID};
use crate::error::{Error, Result};

/// Patch discriminator hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchDiscriminatorConfig {
    pub size: usize,
    pub channels: usize,
    /// The image is judged as a k×k grid of non-overlapping patches.
    pub k: usize,
    /// Convolutions per patch, the last one collapsing the patch to a logit.
    pub conv_layers: usize,
    pub base_channels: usize,
    pub max_channels: usize,
}

impl PatchDiscriminatorConfig {
    pub fn desk() -> Self {
        PatchDiscriminatorConfig {
            size: 64,
            channels: 3,
            k: PATCH_GRID,
            conv_layers: 4,
            base_channels: 16,
            max_channels: 128,
        }
    }

    pub fn reference() -> Self {
        PatchDiscriminatorConfig {
            size: 128,
            channels: 3,
            k: PATCH_GRID,
            conv_layers: 4,
            base_channels: 64,
            max_channels: 512,
        }
    }

    pub fn patch_size(&self) -> usize {
        self.size / self.k.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.size % self.k != 0 {
            return Err(Error::config(format!(
                "image size {} is not divisible by patch grid k = {}",
                self.size, self.k
            )));
        }
        if self.conv_layers == 0 || self.base_channels == 0 || self.channels == 0 {
            return Err(Error::config("patch discriminator needs at least one conv layer and positive widths"));
        }
        let halvings = 1usize << (self.conv_layers - 1).min(40);
        let p = self.patch_size();
        if p % halvings != 0 {
            return Err(Error::config(format!(
                "patch side {p} cannot be halved {} times",
                self.conv_layers - 1
            )));
        }
        Ok(())
    }

    fn width(&self, i: usize) -> usize {
        self.base_channels
            .saturating_mul(1usize << (i - 1).min(40))
            .min(self.max_channels)
    }
}

/// Shared-weight convolutional classifier applied to each of the k×k patches.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchDiscriminator<T> {
    config: PatchDiscriminatorConfig,
    layers: Vec<Layer>,
    pub state: NetState<T>,
}

impl<T: Scalar> PatchDiscriminator<T> {
    pub fn new(config: PatchDiscriminatorConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut b = Builder::<T, _>::new(rng, Init::Normal(INIT_STD));
        let mut layers = Vec::new();
        let mut in_ch = config.channels;
        let mut side = config.patch_size();
        for i in 1..config.conv_layers {
            let out = config.width(i);
            layers.push(b.layer(
                &format!("conv{i}"),
                LayerSpec::Conv2d {
                    in_channels: in_ch,
                    out_channels: out,
                    kernel: 4,
                    stride: 2,
                    padding: 1,
                    bias: true,
                },
            ));
            layers.push(b.layer("", LayerSpec::LeakyRelu { slope: LEAKY_SLOPE }));
            in_ch = out;
            side /= 2;
        }
        // the last convolution covers the whole remaining map
        layers.push(b.layer(
            &format!("conv{}", config.conv_layers),
            LayerSpec::Conv2d {
                in_channels: in_ch,
                out_channels: 1,
                kernel: side,
                stride: 1,
                padding: 0,
                bias: true,
            },
        ));
        layers.push(b.layer("", LayerSpec::Sigmoid));
        Ok(PatchDiscriminator {
            config,
            layers,
            state: b.finish(),
        })
    }

    pub fn config(&self) -> &PatchDiscriminatorConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        self.state.params.count()
    }

    /// Maps `[N, c, h, w]` to a probability map `[N, k, k]`.
    pub fn forward<'g>(&self, pass: &mut Pass<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let c = &self.config;
        let shape = x.shape();
        if shape.len() != 4 || shape[1..] != [c.channels, c.size, c.size] {
            return Err(Error::config(format!(
                "patch discriminator expects [N, {}, {}, {}], got {shape:?}",
                c.channels, c.size, c.size
            )));
        }
        let mut h = x.patchify(c.k)?;
        for layer in &self.layers {
            h = pass.apply(&self.state, layer, &[h])?;
        }
        Ok(h.reshape(&[shape[0], c.k, c.k])?)
    }
}
