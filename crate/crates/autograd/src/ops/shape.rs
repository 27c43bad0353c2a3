use crate::{Error, Result, Scalar, Tensor, Var};

/// `(outer, dim, inner)` decomposition of a shape around `axis`.
fn split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn require_rank<T: Scalar>(v: &Tensor<T>, rank: usize, op: &str) -> Result<()> {
    if v.shape().len() != rank {
        return Err(Error::shape(
            op,
            format!("expected a rank-{rank} tensor, got shape {:?}", v.shape()),
        ));
    }
    Ok(())
}

impl<'g, T: Scalar> Var<'g, T> {
    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Var<'g, T>> {
        let out = self.value().clone().reshape(shape)?;
        Ok(self.graph.push(out, &[self], |a| {
            vec![Some(
                a.grad
                    .clone()
                    .reshape(a.inputs[0].shape().to_vec())
                    .expect("same numel"),
            )]
        }))
    }

    /// `[N, ...] -> [N, prod(...)]`.
    pub fn flatten(self) -> Result<Var<'g, T>> {
        let s = self.shape();
        let n = s[0];
        self.reshape(vec![n, s[1..].iter().product()])
    }

    /// Concatenation along `axis`; all other dimensions must agree.
    pub fn concat(parts: &[Var<'g, T>], axis: usize) -> Result<Var<'g, T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let graph = first.graph;
        let shapes: Vec<Vec<usize>> = parts.iter().map(|p| p.shape()).collect();
        let base = &shapes[0];
        if axis >= base.len() {
            return Err(Error::shape(
                "concat",
                format!("axis {axis} out of range for shape {base:?}"),
            ));
        }
        for s in &shapes[1..] {
            let ok = s.len() == base.len()
                && s.iter()
                    .zip(base)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(Error::shape(
                    "concat",
                    format!("shapes {base:?} and {s:?} differ outside axis {axis}"),
                ));
            }
        }
        let dims: Vec<usize> = shapes.iter().map(|s| s[axis]).collect();
        let total: usize = dims.iter().sum();
        let (outer, _, inner) = split(base, axis);
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let mut data = Vec::with_capacity(outer * total * inner);
        {
            let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
            for o in 0..outer {
                for (v, &d) in values.iter().zip(&dims) {
                    data.extend_from_slice(&v.data()[o * d * inner..(o + 1) * d * inner]);
                }
            }
        }
        let out = Tensor::from_vec(out_shape, data)?;
        Ok(graph.push(out, parts, move |a| {
            let g = a.grad.data();
            let mut grads: Vec<Vec<T>> = dims.iter().map(|&d| Vec::with_capacity(outer * d * inner)).collect();
            let mut off = 0;
            for _ in 0..outer {
                for (buf, &d) in grads.iter_mut().zip(&dims) {
                    buf.extend_from_slice(&g[off..off + d * inner]);
                    off += d * inner;
                }
            }
            grads
                .into_iter()
                .zip(&a.inputs)
                .zip(&a.needs)
                .map(|((buf, x), &need)| {
                    need.then(|| Tensor::from_vec(x.shape().to_vec(), buf).expect("same numel"))
                })
                .collect()
        }))
    }

    /// Channel-wise concatenation of two `[N, C, H, W]` tensors.
    pub fn concat_channels(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        require_rank(&self.value(), 4, "concat_channels")?;
        Var::concat(&[self, other], 1)
    }

    /// Elements `start..start+len` along `axis`.
    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Result<Var<'g, T>> {
        let shape = self.shape();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::shape(
                "narrow",
                format!("range {start}..{} on axis {axis} invalid for shape {shape:?}", start + len),
            ));
        }
        let (outer, dim, inner) = split(&shape, axis);
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let mut data = Vec::with_capacity(outer * len * inner);
        {
            let v = self.value();
            for o in 0..outer {
                let base = (o * dim + start) * inner;
                data.extend_from_slice(&v.data()[base..base + len * inner]);
            }
        }
        let out = Tensor::from_vec(out_shape, data)?;
        Ok(self.graph.push(out, &[self], move |a| {
            let mut gx = Tensor::zeros(a.inputs[0].shape().to_vec());
            let g = a.grad.data();
            let gd = gx.data_mut();
            for o in 0..outer {
                let base = (o * dim + start) * inner;
                gd[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(gx)]
        }))
    }

    /// Reverses the order of elements along `axis`.
    pub fn flip(self, axis: usize) -> Result<Var<'g, T>> {
        let shape = self.shape();
        if axis >= shape.len() {
            return Err(Error::shape("flip", format!("axis {axis} out of range for {shape:?}")));
        }
        let (outer, dim, inner) = split(&shape, axis);
        let flip = move |src: &[T]| {
            let mut dst = Vec::with_capacity(src.len());
            for o in 0..outer {
                for d in (0..dim).rev() {
                    let base = (o * dim + d) * inner;
                    dst.extend_from_slice(&src[base..base + inner]);
                }
            }
            dst
        };
        let out = Tensor::from_vec(shape.clone(), flip(self.value().data()))?;
        Ok(self.graph.push(out, &[self], move |a| {
            vec![Some(
                Tensor::from_vec(a.grad.shape().to_vec(), flip(a.grad.data())).expect("same shape"),
            )]
        }))
    }

    /// Splits each image of `[N, C, H, W]` into a `k x k` grid of
    /// non-overlapping patches, giving `[N*k*k, C, H/k, W/k]`. Patch
    /// `(a, b)` of image `n` lands at batch index `n*k*k + a*k + b`.
    pub fn patchify(self, k: usize) -> Result<Var<'g, T>> {
        let shape = self.shape();
        require_rank(&self.value(), 4, "patchify")?;
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        if k == 0 || h % k != 0 || w % k != 0 {
            return Err(Error::shape(
                "patchify",
                format!("spatial size {h}x{w} is not divisible into a {k}x{k} grid"),
            ));
        }
        let (ph, pw) = (h / k, w / k);
        // index map: output flat index -> input flat index
        let mut map = Vec::with_capacity(n * c * h * w);
        for ni in 0..n {
            for a in 0..k {
                for b in 0..k {
                    for ci in 0..c {
                        for y in 0..ph {
                            let row = ((ni * c + ci) * h + a * ph + y) * w + b * pw;
                            map.extend(row..row + pw);
                        }
                    }
                }
            }
        }
        let out = {
            let v = self.value();
            let d = v.data();
            Tensor::from_vec(vec![n * k * k, c, ph, pw], map.iter().map(|&i| d[i]).collect())?
        };
        Ok(self.graph.push(out, &[self], move |a| {
            let mut gx = Tensor::zeros(a.inputs[0].shape().to_vec());
            let gd = gx.data_mut();
            for (&src, &g) in map.iter().zip(a.grad.data()) {
                gd[src] += g;
            }
            vec![Some(gx)]
        }))
    }

    /// Keeps every second row and column of `[N, C, H, W]`.
    pub fn downsample_stride2(self) -> Result<Var<'g, T>> {
        let shape = self.shape();
        require_rank(&self.value(), 4, "downsample_stride2")?;
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape(
                "downsample_stride2",
                format!("spatial size {h}x{w} must be even"),
            ));
        }
        let (ho, wo) = (h / 2, w / 2);
        let index = move |p: usize, y: usize, x: usize| (p * h + 2 * y) * w + 2 * x;
        let out = {
            let v = self.value();
            let d = v.data();
            let mut data = Vec::with_capacity(n * c * ho * wo);
            for p in 0..n * c {
                for y in 0..ho {
                    for x in 0..wo {
                        data.push(d[index(p, y, x)]);
                    }
                }
            }
            Tensor::from_vec(vec![n, c, ho, wo], data)?
        };
        Ok(self.graph.push(out, &[self], move |a| {
            let mut gx = Tensor::zeros(a.inputs[0].shape().to_vec());
            let gd = gx.data_mut();
            let g = a.grad.data();
            let mut i = 0;
            for p in 0..n * c {
                for y in 0..ho {
                    for x in 0..wo {
                        gd[index(p, y, x)] = g[i];
                        i += 1;
                    }
                }
            }
            vec![Some(gx)]
        }))
    }
}
