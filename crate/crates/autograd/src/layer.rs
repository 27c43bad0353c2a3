//! Declarative layer descriptions and a single dispatching `forward`.

use std::fmt;

use crate::ops::{conv2d_output_size, conv_transpose2d_output_size};
use crate::{BatchStats, Error, Result, Scalar, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running averages updated.
    Train,
    /// Frozen running statistics.
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    },
    ConvTranspose2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    },
    BatchNorm2d {
        channels: usize,
    },
    Relu,
    LeakyRelu {
        slope: f64,
    },
    Sigmoid,
    Tanh,
    Linear {
        in_features: usize,
        out_features: usize,
        bias: bool,
    },
    ConcatChannels,
    DownsampleStride2,
    Flatten,
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use LayerSpec::*;
        match self {
            Conv2d { in_channels, out_channels, kernel, stride, padding, .. } => write!(
                f,
                "conv2d({in_channels}->{out_channels}, k{kernel} s{stride} p{padding})"
            ),
            ConvTranspose2d { in_channels, out_channels, kernel, stride, padding, .. } => write!(
                f,
                "conv_transpose2d({in_channels}->{out_channels}, k{kernel} s{stride} p{padding})"
            ),
            BatchNorm2d { channels } => write!(f, "batchnorm2d({channels})"),
            Relu => write!(f, "relu"),
            LeakyRelu { slope } => write!(f, "leaky_relu({slope})"),
            Sigmoid => write!(f, "sigmoid"),
            Tanh => write!(f, "tanh"),
            Linear { in_features, out_features, .. } => write!(f, "linear({in_features}->{out_features})"),
            ConcatChannels => write!(f, "concat_channels"),
            DownsampleStride2 => write!(f, "downsample_stride2"),
            Flatten => write!(f, "flatten"),
        }
    }
}

impl LayerSpec {
    /// Trainable tensors in definition order.
    pub fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        use LayerSpec::*;
        match *self {
            Conv2d { in_channels, out_channels, kernel, bias, .. } => {
                let mut v = vec![("weight", vec![out_channels, in_channels, kernel, kernel])];
                if bias {
                    v.push(("bias", vec![out_channels]));
                }
                v
            }
            ConvTranspose2d { in_channels, out_channels, kernel, bias, .. } => {
                let mut v = vec![("weight", vec![in_channels, out_channels, kernel, kernel])];
                if bias {
                    v.push(("bias", vec![out_channels]));
                }
                v
            }
            BatchNorm2d { channels } => vec![("gamma", vec![channels]), ("beta", vec![channels])],
            Linear { in_features, out_features, bias } => {
                let mut v = vec![("weight", vec![out_features, in_features])];
                if bias {
                    v.push(("bias", vec![out_features]));
                }
                v
            }
            _ => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }

    fn arity(&self) -> usize {
        if matches!(self, LayerSpec::ConcatChannels) {
            2
        } else {
            1
        }
    }

    fn err(&self, detail: String) -> Error {
        Error::shape(self.to_string(), detail)
    }

    /// Output shape for the given input shapes, validating compatibility.
    pub fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        use LayerSpec::*;
        if inputs.len() != self.arity() {
            return Err(self.err(format!("expected {} inputs, got {}", self.arity(), inputs.len())));
        }
        let x = inputs[0];
        let image = |channels: Option<usize>| -> Result<(usize, usize, usize, usize)> {
            if x.len() != 4 {
                return Err(self.err(format!("expected a [N, C, H, W] input, got {x:?}")));
            }
            if let Some(c) = channels {
                if x[1] != c {
                    return Err(self.err(format!("expected input [N, {c}, H, W], got {x:?}")));
                }
            }
            Ok((x[0], x[1], x[2], x[3]))
        };
        match *self {
            Conv2d { in_channels, out_channels, kernel, stride, padding, .. } => {
                let (n, _, h, w) = image(Some(in_channels))?;
                match (
                    conv2d_output_size(h, kernel, stride, padding),
                    conv2d_output_size(w, kernel, stride, padding),
                ) {
                    (Some(ho), Some(wo)) => Ok(vec![n, out_channels, ho, wo]),
                    _ => Err(self.err(format!("input {x:?} does not give an integer output size"))),
                }
            }
            ConvTranspose2d { in_channels, out_channels, kernel, stride, padding, .. } => {
                let (n, _, h, w) = image(Some(in_channels))?;
                match (
                    conv_transpose2d_output_size(h, kernel, stride, padding),
                    conv_transpose2d_output_size(w, kernel, stride, padding),
                ) {
                    (Some(ho), Some(wo)) => Ok(vec![n, out_channels, ho, wo]),
                    _ => Err(self.err(format!("input {x:?} gives an empty output"))),
                }
            }
            BatchNorm2d { channels } => {
                image(Some(channels))?;
                Ok(x.to_vec())
            }
            Relu | LeakyRelu { .. } | Sigmoid | Tanh => Ok(x.to_vec()),
            Linear { in_features, out_features, .. } => {
                if x.len() != 2 || x[1] != in_features {
                    return Err(self.err(format!("expected input [N, {in_features}], got {x:?}")));
                }
                Ok(vec![x[0], out_features])
            }
            ConcatChannels => {
                let (n, c, h, w) = image(None)?;
                let y = inputs[1];
                if y.len() != 4 || y[0] != n || y[2] != h || y[3] != w {
                    return Err(self.err(format!("cannot concatenate {x:?} with {y:?}")));
                }
                Ok(vec![n, c + y[1], h, w])
            }
            DownsampleStride2 => {
                let (n, c, h, w) = image(None)?;
                if h % 2 != 0 || w % 2 != 0 {
                    return Err(self.err(format!("spatial size of {x:?} must be even")));
                }
                Ok(vec![n, c, h / 2, w / 2])
            }
            Flatten => {
                if x.len() < 2 {
                    return Err(self.err(format!("expected at least rank 2, got {x:?}")));
                }
                Ok(vec![x[0], x[1..].iter().product()])
            }
        }
    }
}

/// Running statistics of one batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Scalar> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        // momentum 0.1 and eps 1e-5, the usual framework defaults
        BatchNormState {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn update(&mut self, stats: &BatchStats<T>) {
        let m = T::of(self.momentum);
        for (r, &b) in self.mean.iter_mut().zip(&stats.mean) {
            *r = (T::one() - m) * *r + m * b;
        }
        for (r, &b) in self.var.iter_mut().zip(&stats.var) {
            *r = (T::one() - m) * *r + m * b;
        }
    }
}

/// Applies one layer. `params` follow [`LayerSpec::param_shapes`]; batch-norm
/// layers additionally need their running statistics. In [`Mode::Train`] a
/// batch-norm layer also returns the batch statistics, which the caller folds
/// into its running averages with [`BatchNormState::update`].
pub fn forward<'g, T: Scalar>(
    spec: &LayerSpec,
    params: &[Var<'g, T>],
    inputs: &[Var<'g, T>],
    mode: Mode,
    bn: Option<&BatchNormState<T>>,
) -> Result<(Var<'g, T>, Option<BatchStats<T>>)> {
    use LayerSpec::*;
    let shapes: Vec<Vec<usize>> = inputs.iter().map(|v| v.shape()).collect();
    let refs: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
    spec.output_shape(&refs)?;
    let expected = spec.param_shapes();
    if params.len() != expected.len()
        || params.iter().zip(&expected).any(|(p, (_, s))| p.shape() != *s)
    {
        return Err(Error::Config {
            layer: spec.to_string(),
            reason: format!("expected parameters {expected:?}"),
        });
    }
    let x = inputs[0];
    let bias = |i: usize| params.get(i).copied();
    let y = match *spec {
        Conv2d { stride, padding, .. } => x.conv2d(params[0], bias(1), stride, padding),
        ConvTranspose2d { stride, padding, .. } => x.conv_transpose2d(params[0], bias(1), stride, padding),
        BatchNorm2d { .. } => {
            let state = bn.ok_or_else(|| Error::Config {
                layer: spec.to_string(),
                reason: "running statistics not supplied".into(),
            })?;
            return match mode {
                Mode::Train => {
                    let (y, stats) = x.batch_norm_train(params[0], params[1], state.eps)?;
                    Ok((y, Some(stats)))
                }
                Mode::Eval => Ok((
                    x.batch_norm_eval(params[0], params[1], &state.mean, &state.var, state.eps)?,
                    None,
                )),
            };
        }
        Relu => Ok(x.relu()),
        LeakyRelu { slope } => Ok(x.leaky_relu(slope)),
        Sigmoid => Ok(x.sigmoid()),
        Tanh => Ok(x.tanh()),
        Linear { .. } => x.linear(params[0], bias(1)),
        ConcatChannels => x.concat_channels(inputs[1]),
        DownsampleStride2 => x.downsample_stride2(),
        Flatten => x.flatten(),
    }?;
    Ok((y, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Graph, Tensor};

    #[test]
    fn conv_output_shape() {
        let spec = LayerSpec::Conv2d {
            in_channels: 3,
            out_channels: 8,
            kernel: 4,
            stride: 2,
            padding: 1,
            bias: true,
        };
        assert_eq!(spec.output_shape(&[&[1, 3, 32, 32]]).unwrap(), vec![1, 8, 16, 16]);
        let err = spec.output_shape(&[&[1, 4, 32, 32]]).unwrap_err().to_string();
        assert!(err.contains("conv2d(3->8") && err.contains("[1, 4, 32, 32]"), "{err}");
        assert!(spec.output_shape(&[&[1, 3, 7, 7]]).is_err());
    }

    #[test]
    fn linear_param_count() {
        let spec = LayerSpec::Linear { in_features: 256, out_features: 100, bias: true };
        assert_eq!(spec.param_count(), 25_700);
    }

    #[test]
    fn batchnorm_updates_running_stats_in_train_mode() {
        let g = Graph::<f64>::new();
        let spec = LayerSpec::BatchNorm2d { channels: 1 };
        let x = g.constant(Tensor::from_vec(vec![2, 1, 1, 1], vec![0.0, 2.0]).unwrap());
        let p = [g.param(Tensor::ones(vec![1])), g.param(Tensor::zeros(vec![1]))];
        let mut st = BatchNormState::<f64>::new(1);
        let (_, stats) = forward(&spec, &p, &[x], Mode::Train, Some(&st)).unwrap();
        st.update(&stats.unwrap());
        assert!((st.mean[0] - 0.1).abs() < 1e-12);
        assert!((st.var[0] - (0.9 + 0.1 * 2.0)).abs() < 1e-12);
        let (_, stats) = forward(&spec, &p, &[x], Mode::Eval, Some(&st)).unwrap();
        assert!(stats.is_none());
        assert!(forward(&spec, &p, &[x], Mode::Eval, None).is_err());
    }

    #[test]
    fn relu_layer() {
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_vec(vec![3], vec![-1.0, 0.0, 2.0]).unwrap());
        let (y, _) = forward(&LayerSpec::Relu, &[], &[x], Mode::Eval, None).unwrap();
        assert_eq!(y.value().data(), &[0.0, 0.0, 2.0]);
    }
}
