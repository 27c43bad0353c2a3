use blan_autograd::layer::Mode;
use blan_autograd::{Graph, Tensor, Var};
use rand::seq::index;
use rand::Rng;

use super::adam::{Adam, AdamConfig};
use super::batch_images;
use crate::config::{BATCH_SIZE, LEARNING_RATE, SATURATION_LOSS, SATURATION_WINDOW, TRAIN_ITERATIONS};
use crate::error::{Error, Result};
use crate::losses::{self, LossReport, LossWeights};
use crate::net::checkpoint::{decode_u64, encode_u64};
use crate::net::{BlanModel, Checkpoint};
use crate::seed::{self, label};
use crate::synth::ImagePair;

/// Loss terms that can be switched off for ablation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Ablation {
    pub edg: bool,
    pub sym: bool,
    /// Feature discriminator: its adversarial term and its updates.
    pub df: bool,
    pub consf: bool,
}

impl Ablation {
    pub const NONE: Ablation = Ablation {
        edg: false,
        sym: false,
        df: false,
        consf: false,
    };

    /// The full model followed by one run per removed term.
    pub fn variants() -> [Ablation; 5] {
        let n = Self::NONE;
        [
            n,
            Ablation { edg: true, ..n },
            Ablation { sym: true, ..n },
            Ablation { df: true, ..n },
            Ablation { consf: true, ..n },
        ]
    }

    /// Parses a comma-separated list of `edg`, `sym`, `df`, `consf`.
    pub fn parse(list: &str) -> Result<Self> {
        let mut a = Self::NONE;
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "edg" => a.edg = true,
                "sym" => a.sym = true,
                "df" => a.df = true,
                "consf" => a.consf = true,
                other => {
                    return Err(Error::config(format!(
                        "unknown ablation term {other:?} (expected edg, sym, df or consf)"
                    )))
                }
            }
        }
        Ok(a)
    }

    /// `full`, or `no_` followed by the removed terms.
    pub fn label(&self) -> String {
        let names: Vec<&str> = [
            (self.edg, "edg"),
            (self.sym, "sym"),
            (self.df, "df"),
            (self.consf, "consf"),
        ]
        .into_iter()
        .filter_map(|(on, n)| on.then_some(n))
        .collect();
        if names.is_empty() {
            "full".into()
        } else {
            format!("no_{}", names.join("_"))
        }
    }

    fn bits(&self) -> u64 {
        self.edg as u64 | (self.sym as u64) << 1 | (self.df as u64) << 2 | (self.consf as u64) << 3
    }

    fn from_bits(b: u64) -> Self {
        Ablation {
            edg: b & 1 != 0,
            sym: b & 2 != 0,
            df: b & 4 != 0,
            consf: b & 8 != 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_iterations: usize,
    pub weights: LossWeights,
    pub seed: u64,
    pub ablation: Ablation,
    /// Flip each sampled pair left-right with probability 1/2.
    pub mirror_augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: LEARNING_RATE,
            batch_size: BATCH_SIZE,
            max_iterations: TRAIN_ITERATIONS,
            weights: LossWeights::default(),
            seed: 0,
            ablation: Ablation::NONE,
            mirror_augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        self.weights.validate()
    }

    fn encode(&self) -> Vec<f32> {
        let w = &self.weights;
        [
            self.learning_rate.to_bits(),
            self.batch_size as u64,
            self.max_iterations as u64,
            w.lambda1.to_bits(),
            w.lambda2.to_bits(),
            w.lambda3.to_bits(),
            w.w_edge.to_bits(),
            w.w_sym.to_bits(),
            self.seed,
            self.ablation.bits(),
            self.mirror_augment as u64,
        ]
        .into_iter()
        .flat_map(encode_u64)
        .collect()
    }

    fn decode(values: &[f32]) -> Result<Self> {
        if values.len() != 44 {
            return Err(Error::Checkpoint(format!("train.config has {} values, expected 44", values.len())));
        }
        let w: Vec<u64> = values
            .chunks(4)
            .map(|c| decode_u64("train.config", c))
            .collect::<Result<_>>()?;
        Ok(TrainConfig {
            learning_rate: f64::from_bits(w[0]),
            batch_size: w[1] as usize,
            max_iterations: w[2] as usize,
            weights: LossWeights {
                lambda1: f64::from_bits(w[3]),
                lambda2: f64::from_bits(w[4]),
                lambda3: f64::from_bits(w[5]),
                w_edge: f64::from_bits(w[6]),
                w_sym: f64::from_bits(w[7]),
            },
            seed: w[8],
            ablation: Ablation::from_bits(w[9]),
            mirror_augment: w[10] != 0,
        })
    }
}

/// The three updates of one training step, in order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubStep {
    PatchDisc,
    FeatureDisc,
    Generator,
}

/// Alternating optimisation of D_p, D_f and G.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: BlanModel<f32>,
    pub config: TrainConfig,
    adam_g: Adam<f32>,
    adam_dp: Adam<f32>,
    adam_df: Adam<f32>,
    iteration: usize,
    saturated_for: usize,
}

fn finite(term: &'static str, iteration: usize, v: &Var<'_, f32>) -> Result<f64> {
    let x = v.item() as f64;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite { term, iteration })
    }
}

impl Trainer {
    pub fn new(model: BlanModel<f32>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = |p: &[Tensor<f32>]| Adam::new(AdamConfig::default(), p);
        Ok(Trainer {
            adam_g: adam(model.g.state.params.tensors()),
            adam_dp: adam(model.dp.state.params.tensors()),
            adam_df: adam(model.df.state.params.tensors()),
            model,
            config,
            iteration: 0,
            saturated_for: 0,
        })
    }

    /// Steps taken so far.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// The batch used at `iteration`; depends only on the seed and the iteration.
    pub fn sample_batch(&self, pairs: &[&ImagePair], iteration: usize) -> Vec<ImagePair> {
        let mut rng = seed::rng(self.config.seed, &[label::BATCH, iteration as u64]);
        let k = self.config.batch_size.min(pairs.len());
        let picks = index::sample(&mut rng, pairs.len(), k);
        picks
            .into_iter()
            .map(|i| {
                if self.config.mirror_augment && rng.random_bool(0.5) {
                    pairs[i].mirrored()
                } else {
                    pairs[i].clone()
                }
            })
            .collect()
    }

    /// Trains until `max_iterations`, calling `on_step` after every step.
    pub fn run(
        &mut self,
        pairs: &[&ImagePair],
        mut on_step: impl FnMut(usize, &LossReport) -> Result<()>,
    ) -> Result<()> {
        if pairs.is_empty() {
            return Err(Error::config("no training pairs"));
        }
        while self.iteration < self.config.max_iterations {
            let batch = self.sample_batch(pairs, self.iteration);
            let it = self.iteration;
            let report = self.step(&batch)?;
            on_step(it, &report)?;
        }
        Ok(())
    }

    /// One D_p update, one D_f update and one G update on `batch`.
    pub fn step(&mut self, batch: &[ImagePair]) -> Result<LossReport> {
        self.step_observed(batch, |_, _| {})
    }

    /// Like [`Trainer::step`], calling `observe` after each of the three updates.
    pub fn step_observed(
        &mut self,
        batch: &[ImagePair],
        mut observe: impl FnMut(SubStep, &BlanModel<f32>),
    ) -> Result<LossReport> {
        if batch.is_empty() {
            return Err(Error::config("empty batch"));
        }
        let it = self.iteration;
        let lr = self.config.learning_rate;
        let ab = self.config.ablation;
        let w = self.config.weights;
        let m = &mut self.model;
        let real_a = batch_images(batch.iter().map(|p| &p.makeup))?;
        let real_b = batch_images(batch.iter().map(|p| &p.clean))?;

        let g = Graph::new();
        let mut pass_g = m.g.state.begin(&g, true, Mode::Train);
        let fake = m.g.forward(&mut pass_g, g.constant(real_a))?;
        m.g.state.commit(&pass_g);
        let fake_value = fake.value().clone();

        // D_p on real vs detached fake
        let loss_dp = {
            let gd = Graph::new();
            let mut pass = m.dp.state.begin(&gd, true, Mode::Train);
            let d_real = m.dp.forward(&mut pass, gd.constant(real_b.clone()))?;
            let d_fake = m.dp.forward(&mut pass, gd.constant(fake_value.clone()))?;
            let loss = losses::loss_d_p(d_real, d_fake)?;
            let value = finite("loss_Dp", it, &loss)?;
            gd.backward(loss)?;
            self.adam_dp.step(m.dp.state.params.tensors_mut(), &pass.grads(), lr);
            value
        };
        observe(SubStep::PatchDisc, m);

        let need_features = !(ab.df && ab.consf);
        let f_real = if need_features {
            Some(m.f.extract(&real_b)?)
        } else {
            None
        };

        // D_f on F(real) vs detached F(fake)
        let loss_df = match (&f_real, ab.df) {
            (Some(f_real), false) => {
                let f_fake = m.f.extract(&fake_value)?;
                let gd = Graph::new();
                let mut pass = m.df.state.begin(&gd, true, Mode::Train);
                let d_real = m.df.forward(&mut pass, gd.constant(f_real.clone()))?;
                let d_fake = m.df.forward(&mut pass, gd.constant(f_fake))?;
                let loss = losses::loss_d_f(d_real, d_fake)?;
                let value = finite("loss_Df", it, &loss)?;
                gd.backward(loss)?;
                self.adam_df.step(m.df.state.params.tensors_mut(), &pass.grads(), lr);
                value
            }
            _ => 0.0,
        };
        observe(SubStep::FeatureDisc, m);

        // G against the updated discriminators, all other weights constant
        let gt = g.constant(real_b);
        let mut report = LossReport {
            loss_dp,
            loss_df,
            ..LossReport::default()
        };
        let pxl = losses::loss_pxl(fake, gt)?;
        report.pxl = finite("pxl", it, &pxl)?;
        let mut total = pxl;
        if !ab.edg {
            let edg = losses::loss_edge(fake, gt)?;
            report.edg = finite("edg", it, &edg)?;
            total = total.add(edg.scale(w.w_edge))?;
        }
        if !ab.sym {
            let sym = losses::loss_sym(fake)?;
            report.sym = finite("sym", it, &sym)?;
            total = total.add(sym.scale(w.w_sym))?;
        }
        let mut pass_dp = m.dp.state.begin(&g, false, Mode::Eval);
        let adv_p = losses::loss_adv_pixel_g(m.dp.forward(&mut pass_dp, fake)?)?;
        report.adv_p = finite("adv_p", it, &adv_p)?;
        total = total.add(adv_p.scale(w.lambda1))?;
        if let Some(f_real) = f_real {
            let mut pass_f = m.f.state.begin(&g, false, Mode::Eval);
            let f_fake = m.f.forward(&mut pass_f, fake)?;
            if !ab.consf {
                let cons = losses::loss_cons_feature(f_fake, g.constant(f_real))?;
                report.cons_f = finite("cons_f", it, &cons)?;
                total = total.add(cons.scale(w.lambda2))?;
            }
            if !ab.df {
                let mut pass_df = m.df.state.begin(&g, false, Mode::Eval);
                let adv_f = losses::loss_adv_feature_g(m.df.forward(&mut pass_df, f_fake)?)?;
                report.adv_f = finite("adv_f", it, &adv_f)?;
                total = total.add(adv_f.scale(w.lambda3))?;
            }
        }
        finite("total_G", it, &total)?;
        g.backward(total)?;
        self.adam_g.step(m.g.state.params.tensors_mut(), &pass_g.grads(), lr);
        observe(SubStep::Generator, m);

        if loss_dp < SATURATION_LOSS {
            self.saturated_for += 1;
            if self.saturated_for == SATURATION_WINDOW {
                log::warn!(
                    "pixel discriminator loss below {SATURATION_LOSS} for {SATURATION_WINDOW} consecutive steps (iteration {it})"
                );
            }
        } else {
            self.saturated_for = 0;
        }
        self.iteration += 1;
        Ok(report.with_composites(&w))
    }

    /// Model, optimizer moments, configuration and progress.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = self.model.to_checkpoint();
        for (name, adam) in [("G", &self.adam_g), ("D_p", &self.adam_dp), ("D_f", &self.adam_df)] {
            let (t, mm, vv) = adam.flatten();
            c.push(format!("adam.{name}.t"), encode_u64(t));
            c.push(format!("adam.{name}.m"), mm);
            c.push(format!("adam.{name}.v"), vv);
        }
        c.push("train.config", self.config.encode());
        let mut state = encode_u64(self.iteration as u64);
        state.extend(encode_u64(self.saturated_for as u64));
        c.push("train.state", state);
        c
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let model = BlanModel::from_checkpoint(ckpt)?;
        let config = TrainConfig::decode(ckpt.get("train.config")?)?;
        let mut t = Trainer::new(model, config)?;
        for (name, adam) in [("G", &mut t.adam_g), ("D_p", &mut t.adam_dp), ("D_f", &mut t.adam_df)] {
            let step = decode_u64("adam.t", ckpt.get(&format!("adam.{name}.t"))?)?;
            adam.load(step, ckpt.get(&format!("adam.{name}.m"))?, ckpt.get(&format!("adam.{name}.v"))?)
                .map_err(|e| Error::Checkpoint(format!("adam.{name}: {e}")))?;
        }
        let state = ckpt.get("train.state")?;
        if state.len() != 8 {
            return Err(Error::Checkpoint("train.state must hold 8 values".into()));
        }
        t.iteration = decode_u64("train.state", &state[..4])? as usize;
        t.saturated_for = decode_u64("train.state", &state[4..])? as usize;
        Ok(t)
    }
}
