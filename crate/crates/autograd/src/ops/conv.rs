//! 2-D convolution and transposed convolution via im2col and GEMM.
//!
//! Tensors are `[N, C, H, W]`. Convolution weights are `[C_out, C_in, kH, kW]`;
//! transposed-convolution weights are `[C_in, C_out, kH, kW]`, so the same
//! weight tensor used by both ops gives a pair of adjoint linear maps.

use crate::linalg::{matmul, MatRef};
use crate::{Error, Result, Scalar, Tensor, Var};

/// Output extent of a convolution, or `None` when the kernel, stride and
/// padding do not tile the padded input exactly.
pub fn conv2d_output_size(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if stride == 0 || kernel == 0 || padded < kernel {
        return None;
    }
    let span = padded - kernel;
    (span % stride == 0).then_some(span / stride + 1)
}

pub fn conv_transpose2d_output_size(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Option<usize> {
    if stride == 0 || kernel == 0 || input == 0 {
        return None;
    }
    ((input - 1) * stride + kernel)
        .checked_sub(2 * padding)
        .filter(|&v| v > 0)
}

/// Geometry of a strided window walk over a `c x h x w` image producing an
/// `ho x wo` grid.
#[derive(Clone, Copy, Debug)]
struct Geom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geom {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }
}

fn im2col<T: Scalar>(x: &[T], g: Geom, cols: &mut [T]) {
    let l = g.cols();
    let pad = g.pad as isize;
    for ci in 0..g.c {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * l..(row + 1) * l];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - pad;
                    let drow = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        drow.fill(T::zero());
                        continue;
                    }
                    let src = &x[(ci * g.h + iy as usize) * g.w..][..g.w];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - pad;
                        *d = if ix >= 0 && ix < g.w as isize {
                            src[ix as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating into `x`.
fn col2im<T: Scalar>(cols: &[T], g: Geom, x: &mut [T]) {
    let l = g.cols();
    let pad = g.pad as isize;
    for ci in 0..g.c {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let src = &cols[row * l..(row + 1) * l];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - pad;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let drow = &mut x[(ci * g.h + iy as usize) * g.w..][..g.w];
                    let srow = &src[oy * g.wo..(oy + 1) * g.wo];
                    for (ox, &s) in srow.iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - pad;
                        if ix >= 0 && ix < g.w as isize {
                            drow[ix as usize] += s;
                        }
                    }
                }
            }
        }
    }
}

fn check_bias<T: Scalar>(bias: Option<&Var<'_, T>>, channels: usize, op: &str) -> Result<()> {
    if let Some(b) = bias {
        let s = b.shape();
        if s != [channels] {
            return Err(Error::shape(op, format!("bias shape {s:?} does not match {channels} output channels")));
        }
    }
    Ok(())
}

fn add_bias<T: Scalar>(out: &mut [T], bias: &[T], n: usize, l: usize) {
    let c = bias.len();
    for ni in 0..n {
        for (co, &b) in bias.iter().enumerate() {
            for v in &mut out[(ni * c + co) * l..][..l] {
                *v += b;
            }
        }
    }
}

fn bias_grad<T: Scalar>(grad: &[T], n: usize, c: usize, l: usize) -> Tensor<T> {
    let mut gb = vec![T::zero(); c];
    for ni in 0..n {
        for (co, g) in gb.iter_mut().enumerate() {
            *g += grad[(ni * c + co) * l..][..l].iter().copied().sum::<T>();
        }
    }
    Tensor::from_vec(vec![c], gb).expect("bias length")
}

impl<'g, T: Scalar> Var<'g, T> {
    /// Cross-correlation of `[N, C_in, H, W]` with `[C_out, C_in, kH, kW]`
    /// weights, zero padding on every side.
    pub fn conv2d(
        self,
        weight: Var<'g, T>,
        bias: Option<Var<'g, T>>,
        stride: usize,
        padding: usize,
    ) -> Result<Var<'g, T>> {
        let xs = self.shape();
        let ws = weight.shape();
        let op = "conv2d";
        if xs.len() != 4 || ws.len() != 4 {
            return Err(Error::shape(op, format!("input {xs:?} and weight {ws:?} must both be rank 4")));
        }
        let (n, cin, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, kh, kw) = (ws[0], ws[2], ws[3]);
        if ws[1] != cin {
            return Err(Error::shape(op, format!("input {xs:?} has {cin} channels but weight {ws:?} expects {}", ws[1])));
        }
        check_bias(bias.as_ref(), cout, op)?;
        let (ho, wo) = match (
            conv2d_output_size(h, kh, stride, padding),
            conv2d_output_size(w, kw, stride, padding),
        ) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::shape(
                    op,
                    format!("kernel {kh}x{kw}, stride {stride}, padding {padding} do not tile input {xs:?}"),
                ))
            }
        };
        let geom = Geom { c: cin, h, w, kh, kw, stride, pad: padding, ho, wo };
        let (k, l) = (geom.rows(), geom.cols());
        let mut cols = vec![T::zero(); n * k * l];
        let mut out = vec![T::zero(); n * cout * l];
        {
            let xv = self.value();
            let wv = weight.value();
            for ni in 0..n {
                let c = &mut cols[ni * k * l..(ni + 1) * k * l];
                im2col(&xv.data()[ni * cin * h * w..(ni + 1) * cin * h * w], geom, c);
                matmul(
                    cout,
                    k,
                    l,
                    MatRef::rows(wv.data(), k),
                    MatRef::rows(c, l),
                    T::zero(),
                    &mut out[ni * cout * l..(ni + 1) * cout * l],
                );
            }
            if let Some(b) = &bias {
                add_bias(&mut out, b.value().data(), n, l);
            }
        }
        let out = Tensor::from_vec(vec![n, cout, ho, wo], out)?;
        let mut parents = vec![self, weight];
        parents.extend(bias);
        let has_bias = bias.is_some();
        Ok(self.graph.push(out, &parents, move |a| {
            let grad = a.grad.data();
            let wv = a.inputs[1].data();
            let gx = a.needs[0].then(|| {
                let mut gx = Tensor::zeros(a.inputs[0].shape().to_vec());
                let mut dcols = vec![T::zero(); k * l];
                for ni in 0..n {
                    matmul(
                        k,
                        cout,
                        l,
                        MatRef::rows_t(wv, k),
                        MatRef::rows(&grad[ni * cout * l..(ni + 1) * cout * l], l),
                        T::zero(),
                        &mut dcols,
                    );
                    col2im(&dcols, geom, &mut gx.data_mut()[ni * cin * h * w..(ni + 1) * cin * h * w]);
                }
                gx
            });
            let gw = a.needs[1].then(|| {
                let mut gw = Tensor::zeros(a.inputs[1].shape().to_vec());
                for ni in 0..n {
                    matmul(
                        cout,
                        l,
                        k,
                        MatRef::rows(&grad[ni * cout * l..(ni + 1) * cout * l], l),
                        MatRef::rows_t(&cols[ni * k * l..(ni + 1) * k * l], l),
                        T::one(),
                        gw.data_mut(),
                    );
                }
                gw
            });
            let mut res = vec![gx, gw];
            if has_bias {
                res.push(a.needs[2].then(|| bias_grad(grad, n, cout, l)));
            }
            res
        }))
    }

    /// Transposed convolution of `[N, C_in, H, W]` with `[C_in, C_out, kH, kW]`
    /// weights; the adjoint of [`Var::conv2d`] with the same geometry.
    pub fn conv_transpose2d(
        self,
        weight: Var<'g, T>,
        bias: Option<Var<'g, T>>,
        stride: usize,
        padding: usize,
    ) -> Result<Var<'g, T>> {
        let xs = self.shape();
        let ws = weight.shape();
        let op = "conv_transpose2d";
        if xs.len() != 4 || ws.len() != 4 {
            return Err(Error::shape(op, format!("input {xs:?} and weight {ws:?} must both be rank 4")));
        }
        let (n, cin, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, kh, kw) = (ws[1], ws[2], ws[3]);
        if ws[0] != cin {
            return Err(Error::shape(op, format!("input {xs:?} has {cin} channels but weight {ws:?} expects {}", ws[0])));
        }
        check_bias(bias.as_ref(), cout, op)?;
        let (ho, wo) = match (
            conv_transpose2d_output_size(h, kh, stride, padding),
            conv_transpose2d_output_size(w, kw, stride, padding),
        ) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::shape(
                    op,
                    format!("kernel {kh}x{kw}, stride {stride}, padding {padding} give no output for input {xs:?}"),
                ))
            }
        };
        // Geometry of the forward convolution this op is the adjoint of.
        let geom = Geom { c: cout, h: ho, w: wo, kh, kw, stride, pad: padding, ho: h, wo: w };
        let (k, l) = (geom.rows(), geom.cols());
        let plane = ho * wo;
        let mut out = vec![T::zero(); n * cout * plane];
        {
            let xv = self.value();
            let wv = weight.value();
            let mut cols = vec![T::zero(); k * l];
            for ni in 0..n {
                matmul(
                    k,
                    cin,
                    l,
                    MatRef::rows_t(wv.data(), k),
                    MatRef::rows(&xv.data()[ni * cin * l..(ni + 1) * cin * l], l),
                    T::zero(),
                    &mut cols,
                );
                col2im(&cols, geom, &mut out[ni * cout * plane..(ni + 1) * cout * plane]);
            }
            if let Some(b) = &bias {
                add_bias(&mut out, b.value().data(), n, plane);
            }
        }
        let out = Tensor::from_vec(vec![n, cout, ho, wo], out)?;
        let mut parents = vec![self, weight];
        parents.extend(bias);
        let has_bias = bias.is_some();
        Ok(self.graph.push(out, &parents, move |a| {
            let grad = a.grad.data();
            let xv = a.inputs[0].data();
            let wv = a.inputs[1].data();
            let mut gx = a.needs[0].then(|| Tensor::zeros(a.inputs[0].shape().to_vec()));
            let mut gw = a.needs[1].then(|| Tensor::zeros(a.inputs[1].shape().to_vec()));
            let mut dcols = vec![T::zero(); k * l];
            for ni in 0..n {
                im2col(&grad[ni * cout * plane..(ni + 1) * cout * plane], geom, &mut dcols);
                if let Some(gx) = gx.as_mut() {
                    matmul(
                        cin,
                        k,
                        l,
                        MatRef::rows(wv, k),
                        MatRef::rows(&dcols, l),
                        T::zero(),
                        &mut gx.data_mut()[ni * cin * l..(ni + 1) * cin * l],
                    );
                }
                if let Some(gw) = gw.as_mut() {
                    matmul(
                        cin,
                        l,
                        k,
                        MatRef::rows(&xv[ni * cin * l..(ni + 1) * cin * l], l),
                        MatRef::rows_t(&dcols, l),
                        T::one(),
                        gw.data_mut(),
                    );
                }
            }
            let mut res = vec![gx, gw];
            if has_bias {
                res.push(a.needs[2].then(|| bias_grad(grad, n, cout, plane)));
            }
            res
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Graph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct nested-loop convolution used as an oracle.
    fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
        let (n, cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (cout, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
        let ho = conv2d_output_size(h, kh, stride, pad).unwrap();
        let wo = conv2d_output_size(wd, kw, stride, pad).unwrap();
        let mut out = vec![0.0; n * cout * ho * wo];
        for ni in 0..n {
            for co in 0..cout {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = 0.0;
                        for ci in 0..cin {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                        acc += x.data()[((ni * cin + ci) * h + iy as usize) * wd + ix as usize]
                                            * w.data()[((co * cin + ci) * kh + ky) * kw + kx];
                                    }
                                }
                            }
                        }
                        out[((ni * cout + co) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        Tensor::from_vec(vec![n, cout, ho, wo], out).unwrap()
    }

    #[test]
    fn output_size_formula() {
        assert_eq!(conv2d_output_size(32, 4, 2, 1), Some(16));
        assert_eq!(conv2d_output_size(8, 3, 1, 1), Some(8));
        assert_eq!(conv2d_output_size(5, 4, 2, 1), None);
        assert_eq!(conv_transpose2d_output_size(16, 4, 2, 1), Some(32));
        assert_eq!(conv_transpose2d_output_size(1, 4, 2, 1), Some(2));
    }

    #[test]
    fn strided_conv_shape() {
        let g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros(vec![1, 3, 32, 32]));
        let w = g.constant(Tensor::zeros(vec![8, 3, 4, 4]));
        let y = x.conv2d(w, None, 2, 1).unwrap();
        assert_eq!(y.shape(), vec![1, 8, 16, 16]);
    }

    #[test]
    fn zero_kernel_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::randn(vec![1, 1, 8, 8], 1.0, &mut rng));
        let w = g.constant(Tensor::zeros(vec![1, 1, 3, 3]));
        let y = x.conv2d(w, None, 1, 1).unwrap();
        assert_eq!(*y.value(), Tensor::zeros(vec![1, 1, 8, 8]));
    }

    #[test]
    fn matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(stride, pad, k) in &[(1, 0, 3), (1, 1, 3), (2, 1, 4), (2, 0, 2), (1, 0, 5)] {
            let x = Tensor::randn(vec![2, 3, 9 + (k % 2), 9 + (k % 2)], 1.0, &mut rng);
            let w = Tensor::randn(vec![4, 3, k, k], 1.0, &mut rng);
            let g = Graph::<f64>::new();
            let size = x.shape()[2];
            if conv2d_output_size(size, k, stride, pad).is_none() {
                continue;
            }
            let y = g.constant(x.clone()).conv2d(g.constant(w.clone()), None, stride, pad).unwrap();
            let expect = naive_conv(&x, &w, stride, pad);
            assert!(y.value().max_abs_diff(&expect) < 1e-12);
        }
    }

    #[test]
    fn channel_mismatch_is_descriptive() {
        let g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros(vec![1, 4, 8, 8]));
        let w = g.constant(Tensor::zeros(vec![8, 3, 4, 4]));
        let err = x.conv2d(w, None, 2, 1).unwrap_err().to_string();
        assert!(err.contains("conv2d") && err.contains("[1, 4, 8, 8]") && err.contains("[8, 3, 4, 4]"), "{err}");
    }

    #[test]
    fn transpose_upsamples() {
        let g = Graph::<f32>::new();
        let x = g.constant(Tensor::ones(vec![2, 5, 4, 4]));
        let w = g.constant(Tensor::ones(vec![5, 3, 4, 4]));
        let b = g.constant(Tensor::zeros(vec![3]));
        let y = x.conv_transpose2d(w, Some(b), 2, 1).unwrap();
        assert_eq!(y.shape(), vec![2, 3, 8, 8]);
    }
}
