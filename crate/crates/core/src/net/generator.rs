use blan_autograd::layer::{LayerSpec, Mode};
use blan_autograd::{Graph, Scalar, Var};
use rand::Rng;

use super::params::{Builder, Init, Layer, NetState, Pass};
use crate::config::{INIT_STD, LEAKY_SLOPE};
use crate::error::{Error, Result};

/// U-Net generator hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    /// Side length; images are square.
    pub size: usize,
    pub channels: usize,
    /// Encoder layers; must equal log2(size) so the bottleneck is 1×1.
    pub encoder_depth: usize,
    pub base_channels: usize,
    /// Cap on the doubling channel schedule.
    pub max_channels: usize,
    pub skip_connections: bool,
}

impl GeneratorConfig {
    /// 64×64×3, depth 6, 16 base channels capped at 128.
    pub fn desk() -> Self {
        GeneratorConfig {
            size: 64,
            channels: 3,
            encoder_depth: 6,
            base_channels: 16,
            max_channels: 128,
            skip_connections: true,
        }
    }

    /// 128×128×3 with pix2pix-style widths (64 doubling to 512).
    pub fn reference() -> Self {
        GeneratorConfig {
            size: 128,
            channels: 3,
            encoder_depth: 7,
            base_channels: 64,
            max_channels: 512,
            skip_connections: true,
        }
    }

    /// Square generator of side `size` with depth log2(size).
    pub fn for_size(size: usize, base_channels: usize, max_channels: usize) -> Self {
        GeneratorConfig {
            size,
            channels: 3,
            encoder_depth: size.max(1).trailing_zeros() as usize,
            base_channels,
            max_channels,
            skip_connections: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.size.is_power_of_two() || self.size < 2 {
            return Err(Error::config(format!(
                "generator size {} is not a power of two >= 2",
                self.size
            )));
        }
        let log2 = self.size.trailing_zeros() as usize;
        if self.encoder_depth != log2 {
            return Err(Error::config(format!(
                "generator encoder_depth {} must equal log2({}) = {log2}",
                self.encoder_depth, self.size
            )));
        }
        if self.channels == 0 || self.base_channels == 0 || self.max_channels == 0 {
            return Err(Error::config("generator channel counts must be positive"));
        }
        Ok(())
    }

    /// Total layer count n.
    pub fn layers(&self) -> usize {
        2 * self.encoder_depth
    }

    /// Output channels of encoder layer `i` (1-based).
    pub fn encoder_channels(&self, i: usize) -> usize {
        let doubled = self.base_channels.saturating_mul(1usize << (i - 1).min(40));
        doubled.min(self.max_channels)
    }

    /// Trainable scalars of the network this config builds, without building it.
    pub fn param_count(&self) -> usize {
        let d = self.encoder_depth;
        let mut total = 0;
        let mut in_ch = self.channels;
        for i in 1..=d {
            let out = self.encoder_channels(i);
            let norm = i > 1 && i < d;
            total += out * in_ch * 16 + if norm { 2 * out } else { out };
            in_ch = out;
        }
        for j in 1..=d {
            let skip = if j > 1 && self.skip_connections {
                self.encoder_channels(d - j + 1)
            } else {
                0
            };
            let last = j == d;
            let out = if last { self.channels } else { self.encoder_channels(d - j) };
            // transposed kernels are [in, out, 4, 4]; bias on the last layer, norm elsewhere
            total += (in_ch + skip) * out * 16 + if last { out } else { 2 * out };
            in_ch = out;
        }
        total
    }
}

/// One skip connection as seen at runtime.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkipAudit {
    /// Encoder layer i whose activation is copied.
    pub encoder_layer: usize,
    /// Layer n−i whose activation it is concatenated with.
    pub decoder_layer: usize,
    pub upstream_channels: usize,
    pub skip_channels: usize,
    /// Channels entering layer n−i+1.
    pub input_channels: usize,
    pub spatial: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator<T> {
    config: GeneratorConfig,
    encoder: Vec<(Layer, Option<Layer>, Layer)>,
    decoder: Vec<(Layer, Option<Layer>, Layer)>,
    pub state: NetState<T>,
}

impl<T: Scalar> Generator<T> {
    pub fn new(config: GeneratorConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let d = config.encoder_depth;
        let mut b = Builder::<T, _>::new(rng, Init::Normal(INIT_STD));
        let mut encoder = Vec::with_capacity(d);
        let mut in_ch = config.channels;
        for i in 1..=d {
            let out = config.encoder_channels(i);
            // outermost and bottleneck layers carry no batch norm: the first
            // sees raw pixels and the last has a 1×1 map
            let norm = i > 1 && i < d;
            let conv = b.layer(
                &format!("enc{i}.conv"),
                LayerSpec::Conv2d {
                    in_channels: in_ch,
                    out_channels: out,
                    kernel: 4,
                    stride: 2,
                    padding: 1,
                    bias: !norm,
                },
            );
            let bn = norm.then(|| b.layer(&format!("enc{i}.bn"), LayerSpec::BatchNorm2d { channels: out }));
            let act = b.layer("", LayerSpec::LeakyRelu { slope: LEAKY_SLOPE });
            encoder.push((conv, bn, act));
            in_ch = out;
        }
        let mut decoder = Vec::with_capacity(d);
        for j in 1..=d {
            let skip = if j > 1 && config.skip_connections {
                config.encoder_channels(d - j + 1)
            } else {
                0
            };
            let input = in_ch + skip;
            let last = j == d;
            let out = if last {
                config.channels
            } else {
                config.encoder_channels(d - j)
            };
            let conv = b.layer(
                &format!("dec{j}.deconv"),
                LayerSpec::ConvTranspose2d {
                    in_channels: input,
                    out_channels: out,
                    kernel: 4,
                    stride: 2,
                    padding: 1,
                    bias: last,
                },
            );
            let bn = (!last).then(|| b.layer(&format!("dec{j}.bn"), LayerSpec::BatchNorm2d { channels: out }));
            let act = b.layer("", if last { LayerSpec::Tanh } else { LayerSpec::Relu });
            decoder.push((conv, bn, act));
            in_ch = out;
        }
        Ok(Generator {
            config,
            encoder,
            decoder,
            state: b.finish(),
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        self.state.params.count()
    }

    /// Runs the generator on a batch `[N, c, h, w]`.
    pub fn forward<'g>(&self, pass: &mut Pass<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        Ok(self.forward_audited(pass, x)?.0)
    }

    /// Like [`Generator::forward`], also recording every skip concatenation.
    pub fn forward_audited<'g>(
        &self,
        pass: &mut Pass<'g, T>,
        x: Var<'g, T>,
    ) -> Result<(Var<'g, T>, Vec<SkipAudit>)> {
        let c = &self.config;
        let shape = x.shape();
        if shape.len() != 4 || shape[1..] != [c.channels, c.size, c.size] {
            return Err(Error::config(format!(
                "generator expects [N, {}, {}, {}], got {shape:?}",
                c.channels, c.size, c.size
            )));
        }
        let d = c.encoder_depth;
        let n = c.layers();
        let mut acts = Vec::with_capacity(d);
        let mut h = x;
        for block in &self.encoder {
            h = self.block(pass, block, h)?;
            acts.push(h);
        }
        let mut audits = Vec::new();
        for (j, block) in self.decoder.iter().enumerate() {
            let j = j + 1;
            if j > 1 && c.skip_connections {
                let i = d - j + 1;
                let skip = acts[i - 1];
                let upstream = h.shape()[1];
                h = h.concat_channels(skip)?;
                audits.push(SkipAudit {
                    encoder_layer: i,
                    decoder_layer: n - i,
                    upstream_channels: upstream,
                    skip_channels: skip.shape()[1],
                    input_channels: h.shape()[1],
                    spatial: h.shape()[2],
                });
            }
            h = self.block(pass, block, h)?;
        }
        Ok((h, audits))
    }

    fn block<'g>(
        &self,
        pass: &mut Pass<'g, T>,
        (conv, bn, act): &(Layer, Option<Layer>, Layer),
        x: Var<'g, T>,
    ) -> Result<Var<'g, T>> {
        let mut h = pass.apply(&self.state, conv, &[x])?;
        if let Some(bn) = bn {
            h = pass.apply(&self.state, bn, &[h])?;
        }
        pass.apply(&self.state, act, &[h])
    }

    /// Convenience inference on a batch, in eval mode with constant parameters.
    pub fn infer(&self, x: &blan_autograd::Tensor<T>) -> Result<blan_autograd::Tensor<T>> {
        let g = Graph::new();
        let mut pass = self.state.begin(&g, false, Mode::Eval);
        let y = self.forward(&mut pass, g.constant(x.clone()))?;
        let out = y.value().clone();
        Ok(out)
    }
}
