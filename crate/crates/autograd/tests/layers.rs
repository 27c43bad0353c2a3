use blan_autograd::layer::forward;
use blan_autograd::{Graph, LayerSpec, Mode, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn zero_kernel_gives_zero_output() {
    let g = Graph::new();
    let x = g.constant(Tensor::<f64>::uniform(vec![1, 1, 8, 8], -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(0)));
    let w = g.constant(Tensor::zeros(vec![1, 1, 3, 3]));
    let y = x.conv2d(w, None, 1, 1).unwrap();
    assert_eq!(y.shape(), &[1, 1, 8, 8]);
    assert!(y.value().data().iter().all(|&v| v == 0.0));
}

#[test]
fn relu_clips_negatives() {
    let g = Graph::new();
    let x = g.constant(Tensor::from_vec(vec![3], vec![-1.0f32, 0.0, 2.0]).unwrap());
    assert_eq!(x.relu().value().data(), &[0.0, 0.0, 2.0]);
}

#[test]
fn strided_conv_halves_the_side() {
    assert_eq!((32 - 4 + 2) / 2 + 1, 16);
    let spec = LayerSpec::Conv2d {
        in_channels: 3,
        out_channels: 8,
        kernel: 4,
        stride: 2,
        padding: 1,
        bias: true,
    };
    let g = Graph::new();
    let params: Vec<_> = spec
        .param_shapes()
        .into_iter()
        .map(|(_, s)| g.constant(Tensor::<f32>::zeros(s)))
        .collect();
    let x = g.constant(Tensor::zeros(vec![1, 3, 32, 32]));
    let (y, _) = forward(&spec, &params, &[x], Mode::Eval, None).unwrap();
    assert_eq!(y.shape(), &[1, 8, 16, 16]);
}

#[test]
fn shape_errors_name_layer_and_shapes() {
    let spec = LayerSpec::Conv2d {
        in_channels: 3,
        out_channels: 8,
        kernel: 4,
        stride: 2,
        padding: 1,
        bias: false,
    };
    let g = Graph::new();
    let params: Vec<_> = spec
        .param_shapes()
        .into_iter()
        .map(|(_, s)| g.constant(Tensor::<f32>::zeros(s)))
        .collect();
    let x = g.constant(Tensor::zeros(vec![1, 5, 32, 32]));
    let err = forward(&spec, &params, &[x], Mode::Eval, None).unwrap_err().to_string();
    assert!(err.contains("conv2d(3->8") && err.contains("[1, 5, 32, 32]") && err.contains("[N, 3, H, W]"), "{err}");
}
