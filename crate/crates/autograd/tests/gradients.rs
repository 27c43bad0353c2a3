//! Finite-difference checks for every differentiable op, at 64-bit.

use blan_autograd::{grad_check, Error, GradCheckOptions, Graph, Result, Tensor, Var};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Projects an arbitrary-shaped output onto a fixed random direction so the
/// check exercises the full Jacobian, not just its column sums.
fn project<'g>(y: Var<'g, f64>, seed: u64) -> Result<Var<'g, f64>> {
    let dir = Tensor::randn(y.shape(), 1.0, &mut rng(seed));
    y.mul(y.graph().constant(dir)).map(|v| v.sum())
}

fn check<F>(f: F, params: &[Tensor<f64>]) -> f64
where
    F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>,
{
    let r = grad_check(f, params, &GradCheckOptions::default(), |_, _| false).unwrap();
    assert!(r.checked > 0);
    r.max_rel_error
}

#[test]
fn conv2d_gradients() {
    let mut r = rng(1);
    let x = Tensor::randn(vec![2, 2, 6, 6], 1.0, &mut r);
    let w = Tensor::randn(vec![3, 2, 4, 4], 0.5, &mut r);
    let b = Tensor::randn(vec![3], 0.5, &mut r);
    let err = check(|_g, p| project(p[0].conv2d(p[1], Some(p[2]), 2, 1)?, 7), &[x, w, b]);
    assert!(err < TOL, "{err}");
}

#[test]
fn conv_transpose2d_gradients() {
    let mut r = rng(2);
    let x = Tensor::randn(vec![2, 3, 3, 3], 1.0, &mut r);
    let w = Tensor::randn(vec![3, 2, 4, 4], 0.5, &mut r);
    let b = Tensor::randn(vec![2], 0.5, &mut r);
    let err = check(|_g, p| project(p[0].conv_transpose2d(p[1], Some(p[2]), 2, 1)?, 8), &[x, w, b]);
    assert!(err < TOL, "{err}");
}

#[test]
fn batchnorm_gradients_both_modes() {
    let mut r = rng(3);
    let x = Tensor::randn(vec![3, 2, 2, 3], 1.0, &mut r);
    let gamma = Tensor::uniform(vec![2], 0.5, 1.5, &mut r);
    let beta = Tensor::randn(vec![2], 0.5, &mut r);
    let err = check(
        |_g, p| project(p[0].batch_norm_train(p[1], p[2], 1e-5)?.0, 9),
        &[x.clone(), gamma.clone(), beta.clone()],
    );
    assert!(err < TOL, "train {err}");
    let err = check(
        |_g, p| project(p[0].batch_norm_eval(p[1], p[2], &[0.3, -0.2], &[1.5, 0.7], 1e-5)?, 10),
        &[x, gamma, beta],
    );
    assert!(err < TOL, "eval {err}");
}

#[test]
fn linear_and_cross_entropy_gradients() {
    let mut r = rng(4);
    let x = Tensor::randn(vec![3, 5], 1.0, &mut r);
    let w = Tensor::randn(vec![4, 5], 0.5, &mut r);
    let b = Tensor::randn(vec![4], 0.5, &mut r);
    let err = check(
        |_g, p| p[0].linear(p[1], Some(p[2]))?.softmax_cross_entropy(&[1, 0, 3]),
        &[x, w, b],
    );
    assert!(err < TOL, "{err}");
}

#[test]
fn pointwise_activation_gradients() {
    let x = Tensor::randn(vec![4, 5], 1.5, &mut rng(5));
    for (i, name) in ["sigmoid", "tanh", "relu", "leaky_relu", "abs", "exp"].iter().enumerate() {
        let err = check(
            |_g, p| {
                let y = match *name {
                    "sigmoid" => p[0].sigmoid(),
                    "tanh" => p[0].tanh(),
                    "relu" => p[0].relu(),
                    "leaky_relu" => p[0].leaky_relu(0.2),
                    "abs" => p[0].abs(),
                    _ => p[0].exp(),
                };
                project(y, 20 + i as u64)
            },
            &[x.clone()],
        );
        assert!(err < TOL, "{name}: {err}");
    }
    let pos = Tensor::uniform(vec![6], 0.1, 3.0, &mut rng(6));
    assert!(check(|_g, p| project(p[0].ln(), 30), &[pos]) < TOL);
}

#[test]
fn structural_op_gradients() {
    let mut r = rng(7);
    let a = Tensor::randn(vec![2, 2, 4, 4], 1.0, &mut r);
    let b = Tensor::randn(vec![2, 3, 4, 4], 1.0, &mut r);
    let err = check(
        |_g, p| {
            let c = p[0].concat_channels(p[1])?;
            let c = c.narrow(3, 1, 3)?.flip(2)?;
            project(c, 40)
        },
        &[a.clone(), b],
    );
    assert!(err < TOL, "{err}");
    let err = check(|_g, p| project(p[0].patchify(2)?.downsample_stride2()?.flatten()?, 41), &[a]);
    assert!(err < TOL, "{err}");
}

#[test]
fn backward_of_sum_is_ones() {
    let g = Graph::<f64>::new();
    let x = g.param(Tensor::randn(vec![3, 4, 5], 1.0, &mut rng(8)));
    g.backward(x.sum()).unwrap();
    assert_eq!(x.grad().unwrap(), Tensor::ones(vec![3, 4, 5]));
}

#[test]
fn backward_of_mean_abs_difference_is_sign_over_n() {
    let mut r = rng(9);
    let xv = Tensor::<f64>::randn(vec![10], 1.0, &mut r);
    let yv = Tensor::<f64>::randn(vec![10], 1.0, &mut r);
    let g = Graph::new();
    let x = g.param(xv.clone());
    let y = g.constant(yv.clone());
    g.backward(x.sub(y).unwrap().abs().mean()).unwrap();
    let grad = x.grad().unwrap();
    for i in 0..10 {
        let d: f64 = xv.data()[i] - yv.data()[i];
        assert_eq!(grad.data()[i], d.signum() / 10.0);
    }
    // and the same against finite differences
    let err = check(
        move |g, p| Ok(p[0].sub(g.constant(yv.clone()))?.abs().mean()),
        &[xv],
    );
    assert!(err < TOL);
}

#[test]
fn sigmoid_chain_matches_central_difference() {
    let mut r = rng(10);
    let w = Tensor::randn(vec![1, 6], 1.0, &mut r);
    let x = Tensor::randn(vec![1, 6], 1.0, &mut r);
    let err = check(
        move |g, p| Ok(p[0].mul(g.constant(x.clone()))?.sum().sigmoid()),
        &[w],
    );
    assert!(err < TOL, "{err}");
}

#[test]
fn non_scalar_root_is_rejected() {
    let g = Graph::<f64>::new();
    let x = g.param(Tensor::zeros(vec![2, 2]));
    assert_eq!(g.backward(x.relu()), Err(Error::NonScalarRoot(vec![2, 2])));
}

#[test]
fn every_reachable_leaf_gets_a_gradient() {
    let g = Graph::<f64>::new();
    let mut r = rng(11);
    let a = g.param(Tensor::randn(vec![2, 3], 1.0, &mut r));
    let b = g.param(Tensor::randn(vec![2, 3], 1.0, &mut r));
    let c = g.constant(Tensor::randn(vec![2, 3], 1.0, &mut r));
    let unused = g.param(Tensor::zeros(vec![1]));
    let y = a.mul(b).unwrap().add(c).unwrap().tanh().sum();
    g.backward(y).unwrap();
    for v in [a, b] {
        assert_eq!(v.grad().unwrap().shape(), &[2, 3]);
    }
    assert!(c.grad().is_none());
    assert!(unused.grad().is_none());
}

#[test]
fn same_seed_same_bits_in_f32() {
    let run = || {
        let mut r = rng(12);
        let g = Graph::<f32>::new();
        let x = g.param(Tensor::randn(vec![2, 3, 8, 8], 1.0, &mut r));
        let w = g.param(Tensor::randn(vec![4, 3, 4, 4], 0.1, &mut r));
        let y = x.conv2d(w, None, 2, 1).unwrap().leaky_relu(0.2).mean();
        g.backward(y).unwrap();
        (y.item().to_bits(), w.grad().unwrap().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// <conv2d(x, k), y> == <x, conv_transpose2d(y, k)>.
    #[test]
    fn conv_transpose_is_adjoint_of_conv(
        seed in 0u64..1000,
        cin in 1usize..4,
        cout in 1usize..4,
        cfg in prop::sample::select(vec![(4usize, 2usize, 1usize), (3, 1, 1), (3, 1, 0), (2, 2, 0)]),
        half in 2usize..5,
    ) {
        let (k, s, p) = cfg;
        let size = half * 2;
        let mut r = rng(seed);
        let x = Tensor::<f64>::randn(vec![2, cin, size, size], 1.0, &mut r);
        let kernel = Tensor::<f64>::randn(vec![cout, cin, k, k], 1.0, &mut r);
        let g = Graph::new();
        let fwd = g.constant(x.clone()).conv2d(g.constant(kernel.clone()), None, s, p);
        prop_assume!(fwd.is_ok());
        let fwd = fwd.unwrap().value().clone();
        let y = Tensor::<f64>::randn(fwd.shape().to_vec(), 1.0, &mut r);
        let adj = g.constant(y.clone()).conv_transpose2d(g.constant(kernel), None, s, p).unwrap();
        prop_assume!(adj.shape() == x.shape());
        let lhs = dot(&fwd, &y);
        let rhs = dot(&x, &adj.value());
        prop_assert!((lhs - rhs).abs() <= 1e-5 * lhs.abs().max(rhs.abs()).max(1.0));
    }
}
