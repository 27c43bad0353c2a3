use crate::linalg::{matmul, MatRef};
use crate::{Error, Result, Scalar, Tensor, Var};

impl<'g, T: Scalar> Var<'g, T> {
    /// `[N, in] x [out, in]^T + [out] -> [N, out]`.
    pub fn linear(self, weight: Var<'g, T>, bias: Option<Var<'g, T>>) -> Result<Var<'g, T>> {
        let xs = self.shape();
        let ws = weight.shape();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(Error::shape(
                "linear",
                format!("input {xs:?} is incompatible with weight {ws:?}"),
            ));
        }
        let (n, fin, fout) = (xs[0], xs[1], ws[0]);
        if let Some(b) = &bias {
            if b.shape() != [fout] {
                return Err(Error::shape("linear", format!("bias {:?} for {fout} outputs", b.shape())));
            }
        }
        let mut out = vec![T::zero(); n * fout];
        {
            let xv = self.value();
            let wv = weight.value();
            matmul(n, fin, fout, MatRef::rows(xv.data(), fin), MatRef::rows_t(wv.data(), fin), T::zero(), &mut out);
            if let Some(b) = &bias {
                let bv = b.value();
                for row in out.chunks_mut(fout) {
                    for (o, &bb) in row.iter_mut().zip(bv.data()) {
                        *o += bb;
                    }
                }
            }
        }
        let out = Tensor::from_vec(vec![n, fout], out)?;
        let mut parents = vec![self, weight];
        parents.extend(bias);
        let has_bias = bias.is_some();
        Ok(self.graph.push(out, &parents, move |a| {
            let g = a.grad.data();
            let gx = a.needs[0].then(|| {
                let mut gx = vec![T::zero(); n * fin];
                matmul(n, fout, fin, MatRef::rows(g, fout), MatRef::rows(a.inputs[1].data(), fin), T::zero(), &mut gx);
                Tensor::from_vec(vec![n, fin], gx).expect("shape")
            });
            let gw = a.needs[1].then(|| {
                let mut gw = vec![T::zero(); fout * fin];
                matmul(fout, n, fin, MatRef::rows_t(g, fout), MatRef::rows(a.inputs[0].data(), fin), T::zero(), &mut gw);
                Tensor::from_vec(vec![fout, fin], gw).expect("shape")
            });
            let mut res = vec![gx, gw];
            if has_bias {
                res.push(a.needs[2].then(|| {
                    let mut gb = vec![T::zero(); fout];
                    for row in g.chunks(fout) {
                        for (s, &v) in gb.iter_mut().zip(row) {
                            *s += v;
                        }
                    }
                    Tensor::from_vec(vec![fout], gb).expect("shape")
                }));
            }
            res
        }))
    }

    /// Mean negative log-likelihood of `targets` under `softmax(self)` for
    /// `[N, classes]` logits.
    pub fn softmax_cross_entropy(self, targets: &[usize]) -> Result<Var<'g, T>> {
        let s = self.shape();
        if s.len() != 2 || s[0] != targets.len() {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!("logits {s:?} for {} targets", targets.len()),
            ));
        }
        let (n, c) = (s[0], s[1]);
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::shape("softmax_cross_entropy", format!("target {bad} out of {c} classes")));
        }
        let mut probs = vec![T::zero(); n * c];
        let mut loss = T::zero();
        {
            let v = self.value();
            for (i, row) in v.data().chunks(c).enumerate() {
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                let z: T = row.iter().map(|&x| (x - max).exp()).sum();
                for (j, &x) in row.iter().enumerate() {
                    probs[i * c + j] = (x - max).exp() / z;
                }
                loss += z.ln() + max - row[targets[i]];
            }
        }
        let loss = loss / T::of(n as f64);
        let targets = targets.to_vec();
        Ok(self.graph.push(Tensor::scalar(loss), &[self], move |a| {
            let g = a.grad.item() / T::of(n as f64);
            let mut d = probs.clone();
            for (i, &t) in targets.iter().enumerate() {
                d[i * c + t] -= T::one();
            }
            for v in &mut d {
                *v *= g;
            }
            vec![Some(Tensor::from_vec(vec![n, c], d).expect("shape"))]
        }))
    }
}
