use blan_autograd::Scalar;

use super::checkpoint::{decode_usize, encode_usize, Checkpoint};
use super::extractor::{ExtractorConfig, FeatureExtractor};
use super::feature_disc::{FeatureDiscriminator, FeatureDiscriminatorConfig};
use super::generator::{Generator, GeneratorConfig};
use super::params::NetState;
use super::patch_disc::{PatchDiscriminator, PatchDiscriminatorConfig};
use crate::error::{Error, Result};
use crate::seed::{self, label};

/// Architecture of all four networks.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub generator: GeneratorConfig,
    pub patch: PatchDiscriminatorConfig,
    pub feature_disc: FeatureDiscriminatorConfig,
    pub extractor: ExtractorConfig,
}

impl ModelConfig {
    pub fn desk() -> Self {
        ModelConfig {
            generator: GeneratorConfig::desk(),
            patch: PatchDiscriminatorConfig::desk(),
            feature_disc: FeatureDiscriminatorConfig::desk(),
            extractor: ExtractorConfig::desk(),
        }
    }

    /// Reference-scale generator and discriminators; the extractor stays desk-sized
    /// apart from its input side.
    pub fn reference() -> Self {
        let mut extractor = ExtractorConfig::desk();
        extractor.size = 128;
        ModelConfig {
            generator: GeneratorConfig::reference(),
            patch: PatchDiscriminatorConfig::reference(),
            feature_disc: FeatureDiscriminatorConfig::desk(),
            extractor,
        }
    }

    /// Desk widths at another image side.
    pub fn desk_at(size: usize) -> Self {
        let mut c = Self::desk();
        c.generator = GeneratorConfig::for_size(size, 16, 128);
        c.patch.size = size;
        c.extractor.size = size;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.patch.validate()?;
        self.extractor.validate()?;
        let g = &self.generator;
        if self.patch.size != g.size || self.extractor.size != g.size {
            return Err(Error::config(format!(
                "image sides disagree: generator {}, patch discriminator {}, extractor {}",
                g.size, self.patch.size, self.extractor.size
            )));
        }
        if self.patch.channels != g.channels || self.extractor.channels != g.channels {
            return Err(Error::config("image channel counts disagree between networks"));
        }
        if self.feature_disc.feature_dim != self.extractor.feature_dim {
            return Err(Error::config(format!(
                "feature discriminator expects {} features, extractor produces {}",
                self.feature_disc.feature_dim, self.extractor.feature_dim
            )));
        }
        Ok(())
    }

    pub(crate) fn write(&self, ckpt: &mut Checkpoint) {
        let g = &self.generator;
        ckpt.push(
            "config.G",
            encode_usize(&[
                g.size,
                g.channels,
                g.encoder_depth,
                g.base_channels,
                g.max_channels,
                g.skip_connections as usize,
            ]),
        );
        let p = &self.patch;
        ckpt.push(
            "config.D_p",
            encode_usize(&[p.size, p.channels, p.k, p.conv_layers, p.base_channels, p.max_channels]),
        );
        let d = &self.feature_disc;
        ckpt.push("config.D_f", encode_usize(&[d.feature_dim, d.hidden_dim]));
        write_extractor_config(&self.extractor, ckpt);
    }

    pub(crate) fn read(ckpt: &Checkpoint) -> Result<Self> {
        let g = decode_usize("config.G", ckpt.get("config.G")?, 6)?;
        let p = decode_usize("config.D_p", ckpt.get("config.D_p")?, 6)?;
        let d = decode_usize("config.D_f", ckpt.get("config.D_f")?, 2)?;
        let c = ModelConfig {
            generator: GeneratorConfig {
                size: g[0],
                channels: g[1],
                encoder_depth: g[2],
                base_channels: g[3],
                max_channels: g[4],
                skip_connections: g[5] != 0,
            },
            patch: PatchDiscriminatorConfig {
                size: p[0],
                channels: p[1],
                k: p[2],
                conv_layers: p[3],
                base_channels: p[4],
                max_channels: p[5],
            },
            feature_disc: FeatureDiscriminatorConfig {
                feature_dim: d[0],
                hidden_dim: d[1],
            },
            extractor: read_extractor_config(ckpt)?,
        };
        c.validate()?;
        Ok(c)
    }
}

fn write_extractor_config(e: &ExtractorConfig, ckpt: &mut Checkpoint) {
    ckpt.push(
        "config.F",
        encode_usize(&[e.size, e.channels, e.base_channels, e.feature_dim]),
    );
}

fn read_extractor_config(ckpt: &Checkpoint) -> Result<ExtractorConfig> {
    let e = decode_usize("config.F", ckpt.get("config.F")?, 4)?;
    Ok(ExtractorConfig {
        size: e[0],
        channels: e[1],
        base_channels: e[2],
        feature_dim: e[3],
    })
}

/// Scalar counts per network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCounts {
    pub generator: usize,
    pub patch_disc: usize,
    pub feature_disc: usize,
    pub extractor: usize,
}

/// G, D_p and D_f plus the frozen extractor F.
#[derive(Clone, Debug, PartialEq)]
pub struct BlanModel<T> {
    pub g: Generator<T>,
    pub dp: PatchDiscriminator<T>,
    pub df: FeatureDiscriminator<T>,
    pub f: FeatureExtractor<T>,
}

impl<T: Scalar> BlanModel<T> {
    /// Fresh G, D_p and D_f around an existing extractor.
    pub fn new(config: &ModelConfig, extractor: FeatureExtractor<T>, seed: u64) -> Result<Self> {
        config.validate()?;
        if extractor.config() != &config.extractor {
            return Err(Error::config(format!(
                "extractor built for {:?}, model expects {:?}",
                extractor.config(),
                config.extractor
            )));
        }
        Ok(BlanModel {
            g: Generator::new(config.generator.clone(), &mut seed::rng(seed, &[label::INIT_G]))?,
            dp: PatchDiscriminator::new(config.patch.clone(), &mut seed::rng(seed, &[label::INIT_DP]))?,
            df: FeatureDiscriminator::new(
                config.feature_disc.clone(),
                &mut seed::rng(seed, &[label::INIT_DF]),
            )?,
            f: extractor,
        })
    }

    /// Model with a randomly initialised extractor, for tests and audits.
    pub fn with_random_extractor(config: &ModelConfig, seed: u64) -> Result<Self> {
        let f = FeatureExtractor::new(config.extractor.clone(), &mut seed::rng(seed, &[label::INIT_F]))?;
        Self::new(config, f, seed)
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            generator: self.g.config().clone(),
            patch: self.dp.config().clone(),
            feature_disc: self.df.config().clone(),
            extractor: self.f.config().clone(),
        }
    }

    pub fn param_counts(&self) -> ParamCounts {
        ParamCounts {
            generator: self.g.param_count(),
            patch_disc: self.dp.param_count(),
            feature_disc: self.df.param_count(),
            extractor: self.f.param_count(),
        }
    }

    pub fn write_checkpoint(&self, ckpt: &mut Checkpoint) {
        self.config().write(ckpt);
        write_state("G", &self.g.state, ckpt);
        write_state("D_p", &self.dp.state, ckpt);
        write_state("D_f", &self.df.state, ckpt);
        write_state("F", &self.f.state, ckpt);
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config = ModelConfig::read(ckpt)?;
        let mut m = Self::with_random_extractor(&config, 0)?;
        read_state("G", &mut m.g.state, ckpt)?;
        read_state("D_p", &mut m.dp.state, ckpt)?;
        read_state("D_f", &mut m.df.state, ckpt)?;
        read_state("F", &mut m.f.state, ckpt)?;
        Ok(m)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        self.write_checkpoint(&mut c);
        c
    }
}

impl<T: Scalar> FeatureExtractor<T> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        write_extractor_config(self.config(), &mut c);
        write_state("F", &self.state, &mut c);
        c
    }

    /// Reads the extractor from a standalone or full-model checkpoint.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config = read_extractor_config(ckpt)?;
        let mut f = FeatureExtractor::new(config, &mut seed::rng(0, &[label::INIT_F]))?;
        read_state("F", &mut f.state, ckpt)?;
        Ok(f)
    }
}

fn to_f32<T: Scalar>(v: Vec<T>) -> Vec<f32> {
    v.into_iter().map(|x| x.as_f64() as f32).collect()
}

pub(crate) fn write_state<T: Scalar>(name: &str, state: &NetState<T>, ckpt: &mut Checkpoint) {
    ckpt.push(name, to_f32(state.params.flatten()));
    if !state.bn.is_empty() {
        ckpt.push(format!("{name}.running"), to_f32(state.running_stats()));
    }
}

pub(crate) fn read_state<T: Scalar>(name: &str, state: &mut NetState<T>, ckpt: &Checkpoint) -> Result<()> {
    let conv = |v: &[f32]| v.iter().map(|&x| T::of(x as f64)).collect::<Vec<_>>();
    state
        .params
        .load_flat(&conv(ckpt.get(name)?))
        .map_err(|e| Error::Checkpoint(format!("section {name:?}: {e}")))?;
    if !state.bn.is_empty() {
        let sec = format!("{name}.running");
        state
            .load_running_stats(&conv(ckpt.get(&sec)?))
            .map_err(|e| Error::Checkpoint(format!("section {sec:?}: {e}")))?;
    }
    Ok(())
}
