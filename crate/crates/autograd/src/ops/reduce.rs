use crate::{Scalar, Tensor, Var};

impl<'g, T: Scalar> Var<'g, T> {
    /// Sum of all elements as a `[1]` tensor.
    pub fn sum(self) -> Var<'g, T> {
        let out = {
            let v = self.value();
            Tensor::scalar(v.data().iter().copied().sum())
        };
        self.graph.push(out, &[self], |a| {
            let g = a.grad.item();
            vec![Some(Tensor::full(a.inputs[0].shape().to_vec(), g))]
        })
    }

    /// Mean of all elements as a `[1]` tensor.
    pub fn mean(self) -> Var<'g, T> {
        let n = self.value().numel();
        self.sum().scale(1.0 / n as f64)
    }
}

#[cfg(test)]
mod tests {
    use crate::{Graph, Tensor};

    #[test]
    fn sum_gradient_is_all_ones() {
        let g = Graph::<f64>::new();
        let x = g.param(Tensor::from_vec(vec![2, 3, 2], (0..12).map(f64::from).collect()).unwrap());
        let y = x.sum();
        assert_eq!(y.item(), 66.0);
        g.backward(y).unwrap();
        assert_eq!(x.grad().unwrap(), Tensor::ones(vec![2, 3, 2]));
    }

    #[test]
    fn mean_gradient_is_uniform() {
        let g = Graph::<f64>::new();
        let x = g.param(Tensor::full(vec![4], 2.0));
        g.backward(x.mean()).unwrap();
        assert_eq!(x.grad().unwrap().data(), &[0.25; 4]);
    }
}
