use std::ops::Range;

use blan_autograd::layer::{self, BatchNormState, LayerSpec, Mode};
use blan_autograd::{BatchStats, Graph, Scalar, Tensor, Var};
use rand::Rng;

use crate::error::Result;

/// Named parameter tensors of one network, in definition order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> usize {
        self.names.push(name.into());
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    /// Number of trainable scalars.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Places every tensor on `g`, as trainable leaves or as constants.
    pub fn bind<'g>(&self, g: &'g Graph<T>, trainable: bool) -> Vec<Var<'g, T>> {
        self.tensors
            .iter()
            .map(|t| g.leaf(t.clone(), trainable))
            .collect()
    }

    /// All values concatenated in definition order.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.count());
        for t in &self.tensors {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Inverse of [`ParamSet::flatten`]; the length must match exactly.
    pub fn load_flat(&mut self, values: &[T]) -> std::result::Result<(), String> {
        if values.len() != self.count() {
            return Err(format!("expected {} values, got {}", self.count(), values.len()));
        }
        let mut at = 0;
        for t in &mut self.tensors {
            let n = t.numel();
            t.data_mut().copy_from_slice(&values[at..at + n]);
            at += n;
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// One layer of a network: its spec plus where its parameters and
/// batch-norm statistics live.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    params: Range<usize>,
    bn: Option<usize>,
}

/// Mutable state of a network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetState<T> {
    pub params: ParamSet<T>,
    pub bn: Vec<BatchNormState<T>>,
}

impl<T: Scalar> NetState<T> {
    /// Starts a forward pass on `g`.
    pub fn begin<'g>(&self, g: &'g Graph<T>, trainable: bool, mode: Mode) -> Pass<'g, T> {
        Pass {
            vars: self.params.bind(g, trainable),
            mode,
            stats: Vec::new(),
        }
    }

    /// Folds the batch statistics collected by `pass` into the running averages.
    pub fn commit(&mut self, pass: &Pass<'_, T>) {
        for (slot, stats) in &pass.stats {
            self.bn[*slot].update(stats);
        }
    }

    /// Running means followed by running variances, layer by layer.
    pub fn running_stats(&self) -> Vec<T> {
        let mut out = Vec::new();
        for s in &self.bn {
            out.extend_from_slice(&s.mean);
            out.extend_from_slice(&s.var);
        }
        out
    }

    pub fn load_running_stats(&mut self, values: &[T]) -> std::result::Result<(), String> {
        let need: usize = self.bn.iter().map(|s| 2 * s.mean.len()).sum();
        if values.len() != need {
            return Err(format!("expected {need} running statistics, got {}", values.len()));
        }
        let mut at = 0;
        for s in &mut self.bn {
            let c = s.mean.len();
            s.mean.copy_from_slice(&values[at..at + c]);
            s.var.copy_from_slice(&values[at + c..at + 2 * c]);
            at += 2 * c;
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> NetState<U> {
        NetState {
            params: self.params.cast(),
            bn: self
                .bn
                .iter()
                .map(|s| BatchNormState {
                    mean: s.mean.iter().map(|v| U::of(v.as_f64())).collect(),
                    var: s.var.iter().map(|v| U::of(v.as_f64())).collect(),
                    momentum: s.momentum,
                    eps: s.eps,
                })
                .collect(),
        }
    }
}

/// Parameters bound to one graph plus the batch statistics gathered so far.
pub struct Pass<'g, T: Scalar> {
    vars: Vec<Var<'g, T>>,
    mode: Mode,
    stats: Vec<(usize, BatchStats<T>)>,
}

impl<'g, T: Scalar> Pass<'g, T> {
    pub fn apply(
        &mut self,
        state: &NetState<T>,
        layer: &Layer,
        inputs: &[Var<'g, T>],
    ) -> Result<Var<'g, T>> {
        let bn = layer.bn.map(|i| &state.bn[i]);
        let (y, stats) = layer::forward(
            &layer.spec,
            &self.vars[layer.params.clone()],
            inputs,
            self.mode,
            bn,
        )?;
        if let (Some(slot), Some(stats)) = (layer.bn, stats) {
            self.stats.push((slot, stats));
        }
        Ok(y)
    }

    pub fn vars(&self) -> &[Var<'g, T>] {
        &self.vars
    }

    /// Gradients after `backward`, zero for parameters the root did not reach.
    pub fn grads(&self) -> Vec<Tensor<T>> {
        self.vars
            .iter()
            .map(|v| v.grad().unwrap_or_else(|| Tensor::zeros(v.shape())))
            .collect()
    }
}

/// Weight initialisation scheme.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// N(0, σ) for every weight.
    Normal(f64),
    /// N(0, sqrt(2 / fan_in)).
    Kaiming,
}

pub(crate) struct Builder<'r, T, R> {
    state: NetState<T>,
    rng: &'r mut R,
    init: Init,
}

impl<'r, T: Scalar, R: Rng> Builder<'r, T, R> {
    pub fn new(rng: &'r mut R, init: Init) -> Self {
        Builder {
            state: NetState {
                params: ParamSet::new(),
                bn: Vec::new(),
            },
            rng,
            init,
        }
    }

    pub fn layer(&mut self, name: &str, spec: LayerSpec) -> Layer {
        let start = self.state.params.len();
        let mut bn = None;
        match spec {
            LayerSpec::Conv2d { .. } | LayerSpec::ConvTranspose2d { .. } | LayerSpec::Linear { .. } => {
                let shapes = spec.param_shapes();
                let w = &shapes[0].1;
                let fan_in: usize = w[1..].iter().product();
                let std = match self.init {
                    Init::Normal(s) => s,
                    Init::Kaiming => (2.0 / fan_in as f64).sqrt(),
                };
                for (i, (pname, shape)) in shapes.iter().enumerate() {
                    let t = if i == 0 {
                        Tensor::randn(shape.as_slice(), std, self.rng)
                    } else {
                        Tensor::zeros(shape.as_slice())
                    };
                    self.state.params.push(format!("{name}.{pname}"), t);
                }
            }
            LayerSpec::BatchNorm2d { channels } => {
                self.state.params.push(format!("{name}.gamma"), Tensor::ones(&[channels]));
                self.state.params.push(format!("{name}.beta"), Tensor::zeros(&[channels]));
                bn = Some(self.state.bn.len());
                self.state.bn.push(BatchNormState::new(channels));
            }
            _ => {}
        }
        Layer {
            spec,
            params: start..self.state.params.len(),
            bn,
        }
    }

    pub fn finish(self) -> NetState<T> {
        self.state
    }
}
