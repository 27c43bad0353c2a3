use crate::{Error, Result, Scalar, Tensor, Var};

/// Per-channel statistics of one training batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Unbiased variance, the estimate folded into running averages.
    pub var: Vec<T>,
}

fn check(x: &[usize], gamma: &[usize], beta: &[usize]) -> Result<usize> {
    if x.len() != 4 {
        return Err(Error::shape("batchnorm2d", format!("expected [N, C, H, W] input, got {x:?}")));
    }
    let c = x[1];
    if gamma != [c] || beta != [c] {
        return Err(Error::shape(
            "batchnorm2d",
            format!("affine shapes {gamma:?}/{beta:?} do not match input {x:?}"),
        ));
    }
    Ok(c)
}

/// Shared backward for both modes: `xhat` per element is `(x - mean) * inv`.
fn affine_backward<T: Scalar>(
    grad: &[T],
    x: &[T],
    gamma: &[T],
    mean: &[T],
    inv: &[T],
    n: usize,
    plane: usize,
    batch_coupled: bool,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let c = gamma.len();
    let m = T::of((n * plane) as f64);
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for ni in 0..n {
        for ci in 0..c {
            let off = (ni * c + ci) * plane;
            for i in off..off + plane {
                dbeta[ci] += grad[i];
                dgamma[ci] += grad[i] * (x[i] - mean[ci]) * inv[ci];
            }
        }
    }
    let mut dx = vec![T::zero(); x.len()];
    for ni in 0..n {
        for ci in 0..c {
            let off = (ni * c + ci) * plane;
            let scale = gamma[ci] * inv[ci];
            for i in off..off + plane {
                dx[i] = if batch_coupled {
                    let xhat = (x[i] - mean[ci]) * inv[ci];
                    scale / m * (m * grad[i] - dbeta[ci] - xhat * dgamma[ci])
                } else {
                    scale * grad[i]
                };
            }
        }
    }
    (dx, dgamma, dbeta)
}

impl<'g, T: Scalar> Var<'g, T> {
    /// Normalizes each channel with the statistics of this batch.
    pub fn batch_norm_train(
        self,
        gamma: Var<'g, T>,
        beta: Var<'g, T>,
        eps: f64,
    ) -> Result<(Var<'g, T>, BatchStats<T>)> {
        let shape = self.shape();
        let c = check(&shape, &gamma.shape(), &beta.shape())?;
        let (n, plane) = (shape[0], shape[2] * shape[3]);
        let count = n * plane;
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        let out = {
            let xv = self.value();
            let x = xv.data();
            for ni in 0..n {
                for ci in 0..c {
                    let off = (ni * c + ci) * plane;
                    mean[ci] += x[off..off + plane].iter().copied().sum::<T>();
                }
            }
            for m in &mut mean {
                *m /= T::of(count as f64);
            }
            for ni in 0..n {
                for ci in 0..c {
                    let off = (ni * c + ci) * plane;
                    var[ci] += x[off..off + plane]
                        .iter()
                        .map(|&v| (v - mean[ci]) * (v - mean[ci]))
                        .sum::<T>();
                }
            }
            let biased: Vec<T> = var.iter().map(|&s| s / T::of(count as f64)).collect();
            let inv: Vec<T> = biased.iter().map(|&v| T::one() / (v + T::of(eps)).sqrt()).collect();
            let gv = gamma.value();
            let bv = beta.value();
            let mut y = vec![T::zero(); x.len()];
            for ni in 0..n {
                for ci in 0..c {
                    let off = (ni * c + ci) * plane;
                    let (s, b) = (gv.data()[ci] * inv[ci], bv.data()[ci]);
                    for i in off..off + plane {
                        y[i] = (x[i] - mean[ci]) * s + b;
                    }
                }
            }
            Tensor::from_vec(shape.clone(), y)?
        };
        let unbiased: Vec<T> = var
            .iter()
            .map(|&s| s / T::of(count.saturating_sub(1).max(1) as f64))
            .collect();
        let inv: Vec<T> = var
            .iter()
            .map(|&s| T::one() / (s / T::of(count as f64) + T::of(eps)).sqrt())
            .collect();
        let stats = BatchStats {
            mean: mean.clone(),
            var: unbiased,
        };
        let y = self.graph.push(out, &[self, gamma, beta], move |a| {
            let (dx, dg, db) = affine_backward(
                a.grad.data(),
                a.inputs[0].data(),
                a.inputs[1].data(),
                &mean,
                &inv,
                n,
                plane,
                true,
            );
            vec![
                a.needs[0].then(|| Tensor::from_vec(a.grad.shape().to_vec(), dx).expect("shape")),
                a.needs[1].then(|| Tensor::from_vec(vec![c], dg).expect("shape")),
                a.needs[2].then(|| Tensor::from_vec(vec![c], db).expect("shape")),
            ]
        });
        Ok((y, stats))
    }

    /// Normalizes each channel with fixed statistics.
    pub fn batch_norm_eval(
        self,
        gamma: Var<'g, T>,
        beta: Var<'g, T>,
        mean: &[T],
        var: &[T],
        eps: f64,
    ) -> Result<Var<'g, T>> {
        let shape = self.shape();
        let c = check(&shape, &gamma.shape(), &beta.shape())?;
        if mean.len() != c || var.len() != c {
            return Err(Error::shape("batchnorm2d", format!("running statistics do not have {c} channels")));
        }
        let (n, plane) = (shape[0], shape[2] * shape[3]);
        let mean = mean.to_vec();
        let inv: Vec<T> = var.iter().map(|&v| T::one() / (v + T::of(eps)).sqrt()).collect();
        let out = {
            let xv = self.value();
            let x = xv.data();
            let gv = gamma.value();
            let bv = beta.value();
            let mut y = vec![T::zero(); x.len()];
            for ni in 0..n {
                for ci in 0..c {
                    let off = (ni * c + ci) * plane;
                    let (s, b) = (gv.data()[ci] * inv[ci], bv.data()[ci]);
                    for i in off..off + plane {
                        y[i] = (x[i] - mean[ci]) * s + b;
                    }
                }
            }
            Tensor::from_vec(shape.clone(), y)?
        };
        Ok(self.graph.push(out, &[self, gamma, beta], move |a| {
            let (dx, dg, db) = affine_backward(
                a.grad.data(),
                a.inputs[0].data(),
                a.inputs[1].data(),
                &mean,
                &inv,
                n,
                plane,
                false,
            );
            vec![
                a.needs[0].then(|| Tensor::from_vec(a.grad.shape().to_vec(), dx).expect("shape")),
                a.needs[1].then(|| Tensor::from_vec(vec![c], dg).expect("shape")),
                a.needs[2].then(|| Tensor::from_vec(vec![c], db).expect("shape")),
            ]
        }))
    }
}

#[cfg(test)]
mod tests {
    use crate::{Graph, Tensor};

    #[test]
    fn train_mode_normalizes_channels() {
        let g = Graph::<f64>::new();
        let x = g.param(
            Tensor::from_vec(vec![2, 1, 1, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap(),
        );
        let (y, stats) = x
            .batch_norm_train(g.param(Tensor::ones(vec![1])), g.param(Tensor::zeros(vec![1])), 0.0)
            .unwrap();
        assert_eq!(stats.mean, vec![4.0]);
        // biased variance 5, unbiased 20/3
        assert!((stats.var[0] - 20.0 / 3.0).abs() < 1e-12);
        let v = y.value().clone();
        let m: f64 = v.data().iter().sum::<f64>() / 4.0;
        let s: f64 = v.data().iter().map(|a| a * a).sum::<f64>() / 4.0;
        assert!(m.abs() < 1e-12 && (s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eval_mode_with_unit_stats_is_identity() {
        let g = Graph::<f64>::new();
        let data: Vec<f64> = (0..24).map(|v| v as f64 * 0.3 - 2.0).collect();
        let x = g.constant(Tensor::from_vec(vec![2, 3, 2, 2], data.clone()).unwrap());
        let y = x
            .batch_norm_eval(
                g.constant(Tensor::ones(vec![3])),
                g.constant(Tensor::zeros(vec![3])),
                &[0.0; 3],
                &[1.0; 3],
                1e-5,
            )
            .unwrap();
        for (a, b) in y.value().data().iter().zip(&data) {
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0));
        }
    }
}
