use blan_autograd::{grad_check, GradCheckOptions, Graph, Mode, Tensor};
use blan_core::net::checkpoint::Checkpoint;
use blan_core::net::*;
use blan_core::seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(s: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(s)
}

fn image(n: usize, size: usize, r: &mut impl Rng) -> Tensor<f32> {
    Tensor::uniform(vec![n, 3, size, size], -1.0, 1.0, r)
}

#[test]
fn skip_audit_for_every_depth() {
    for depth in 4..=7 {
        let size = 1 << depth;
        let cfg = GeneratorConfig::for_size(size, 4, 32);
        assert_eq!(cfg.encoder_depth, depth);
        assert_eq!(cfg.layers(), 2 * depth);
        let gen = Generator::<f32>::new(cfg.clone(), &mut rng(1)).unwrap();
        let g = Graph::new();
        let mut pass = gen.state.begin(&g, false, Mode::Eval);
        let x = g.constant(image(1, size, &mut rng(2)));
        let (y, audits) = gen.forward_audited(&mut pass, x).unwrap();
        assert_eq!(y.shape(), &[1, 3, size, size]);
        assert_eq!(audits.len(), depth - 1, "depth {depth}");
        let mut seen: Vec<_> = audits.iter().map(|a| a.encoder_layer).collect();
        seen.sort();
        assert_eq!(seen, (1..depth).collect::<Vec<_>>());
        for a in &audits {
            let i = a.encoder_layer;
            assert_eq!(a.decoder_layer, 2 * depth - i);
            assert_eq!(a.skip_channels, cfg.encoder_channels(i));
            assert_eq!(a.input_channels, a.upstream_channels + a.skip_channels);
            assert_eq!(a.spatial, size >> i);
        }
    }
}

#[test]
fn generator_shapes_and_bottleneck() {
    let cfg = GeneratorConfig::desk();
    assert_eq!((cfg.size, cfg.encoder_depth), (64, 6));
    assert_eq!(64 >> cfg.encoder_depth, 1);
    let gen = Generator::<f32>::new(cfg, &mut rng(3)).unwrap();
    let x = image(2, 64, &mut rng(4));
    let y = gen.infer(&x).unwrap();
    assert_eq!(y.shape(), x.shape());
    assert!(y.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    let r = GeneratorConfig::reference();
    assert_eq!((r.size, r.encoder_depth), (128, 7));
}

#[test]
fn generator_rejects_bad_sizes() {
    let mut cfg = GeneratorConfig::desk();
    cfg.size = 48;
    assert!(Generator::<f32>::new(cfg, &mut rng(0)).is_err());
    let mut cfg = GeneratorConfig::desk();
    cfg.encoder_depth = 5;
    assert!(cfg.validate().is_err());
    let gen = Generator::<f32>::new(GeneratorConfig::for_size(16, 4, 8), &mut rng(0)).unwrap();
    let err = gen.infer(&image(1, 32, &mut rng(0))).unwrap_err();
    assert!(err.to_string().contains("16"), "{err}");
}

#[test]
fn removing_skips_changes_the_output() {
    let mut cfg = GeneratorConfig::for_size(32, 8, 32);
    let with = Generator::<f32>::new(cfg.clone(), &mut rng(5)).unwrap();
    cfg.skip_connections = false;
    let without = Generator::<f32>::new(cfg, &mut rng(5)).unwrap();
    let x = image(1, 32, &mut rng(6));
    let (a, b) = (with.infer(&x).unwrap(), without.infer(&x).unwrap());
    assert_eq!(a.shape(), b.shape());
    assert!(a.max_abs_diff(&b) > 0.0);
}

fn patch_config(k: usize) -> PatchDiscriminatorConfig {
    PatchDiscriminatorConfig {
        size: 32,
        k,
        conv_layers: if k == 4 { 3 } else { 4 },
        base_channels: 4,
        max_channels: 16,
        ..PatchDiscriminatorConfig::desk()
    }
}

fn patch_forward(d: &PatchDiscriminator<f32>, x: &Tensor<f32>) -> Tensor<f32> {
    let g = Graph::new();
    let mut pass = d.state.begin(&g, false, Mode::Eval);
    let out = d.forward(&mut pass, g.constant(x.clone())).unwrap().value().clone();
    out
}

#[test]
fn patch_discriminator_is_local() {
    let mut r = rng(7);
    for k in [1, 2, 4] {
        let cfg = patch_config(k);
        let d = PatchDiscriminator::<f32>::new(cfg.clone(), &mut r).unwrap();
        let p = cfg.patch_size();
        for _ in 0..8 {
            let x = image(1, 32, &mut r);
            let base = patch_forward(&d, &x);
            assert_eq!(base.shape(), &[1, k, k]);
            assert!(base.data().iter().all(|&v| v > 0.0 && v < 1.0));
            let (pa, pb) = (r.random_range(0..k), r.random_range(0..k));
            let mut y = x.clone();
            for c in 0..3 {
                for i in 0..p {
                    for j in 0..p {
                        let idx = (c * 32 + pa * p + i) * 32 + pb * p + j;
                        y.data_mut()[idx] = r.random_range(-1.0..1.0);
                    }
                }
            }
            let out = patch_forward(&d, &y);
            for a in 0..k {
                for b in 0..k {
                    let (u, v) = (base.data()[a * k + b], out.data()[a * k + b]);
                    if (a, b) == (pa, pb) {
                        assert_ne!(u.to_bits(), v.to_bits(), "k={k} cell ({a},{b}) unchanged");
                    } else {
                        assert_eq!(u.to_bits(), v.to_bits(), "k={k} cell ({a},{b}) leaked");
                    }
                }
            }
        }
    }
}

#[test]
fn patch_discriminator_desk_map() {
    let d = PatchDiscriminator::<f32>::new(PatchDiscriminatorConfig::desk(), &mut rng(8)).unwrap();
    let out = patch_forward(&d, &image(2, 64, &mut rng(9)));
    assert_eq!(out.shape(), &[2, 2, 2]);
    let mut bad = PatchDiscriminatorConfig::desk();
    bad.k = 3;
    assert!(bad.validate().is_err());
}

#[test]
fn feature_discriminator_counts() {
    assert_eq!(256 * 100 + 100, 25_700);
    let cfg = FeatureDiscriminatorConfig {
        feature_dim: 256,
        hidden_dim: 100,
    };
    assert_eq!(cfg.param_count(), 25_801);
    let d = FeatureDiscriminator::<f32>::new(cfg, &mut rng(0)).unwrap();
    assert_eq!(d.param_count(), 25_801);
}

#[test]
fn feature_discriminator_range_and_gradient() {
    let cfg = FeatureDiscriminatorConfig {
        feature_dim: 6,
        hidden_dim: 5,
    };
    let d = FeatureDiscriminator::<f64>::new(cfg, &mut rng(10)).unwrap();
    let run = |x: &Tensor<f64>| {
        let g = Graph::new();
        let mut pass = d.state.begin(&g, false, Mode::Eval);
        let out = d.forward(&mut pass, g.constant(x.clone())).unwrap().value().clone();
        out
    };
    let zero = Tensor::zeros(vec![1, 6]);
    let p = run(&zero).item();
    assert!(p > 0.0 && p < 1.0);
    assert_eq!(run(&zero), run(&zero));

    let x = Tensor::uniform(vec![2, 6], -1.0, 1.0, &mut rng(11));
    let report = grad_check(
        |g, v| {
            let mut pass = d.state.begin(g, false, Mode::Eval);
            Ok(d.forward(&mut pass, v[0]).map_err(|e| blan_autograd::Error::shape("D_f", e.to_string()))?.sum())
        },
        &[x],
        &GradCheckOptions::default(),
        |_, _| false,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
    assert!(report.checked > 0);
}

#[test]
fn feature_discriminator_rejects_wrong_length() {
    let d = FeatureDiscriminator::<f32>::new(FeatureDiscriminatorConfig::desk(), &mut rng(0)).unwrap();
    let g = Graph::new();
    let mut pass = d.state.begin(&g, false, Mode::Eval);
    assert!(d.forward(&mut pass, g.constant(Tensor::zeros(vec![1, 3]))).is_err());
}

#[test]
fn extractor_is_deterministic_and_sensitive() {
    let f = FeatureExtractor::<f32>::new(ExtractorConfig::desk(), &mut rng(12)).unwrap();
    let x = image(1, 64, &mut rng(13));
    let a = f.extract(&x).unwrap();
    assert_eq!(a.shape(), &[1, 64]);
    assert_eq!(a, f.extract(&x).unwrap());
    let mut y = x.clone();
    y.data_mut()[64 * 20 + 31] += 0.5;
    assert!(a.max_abs_diff(&f.extract(&y).unwrap()) > 0.0);
}

#[test]
fn model_parameter_sets_are_disjoint() {
    let cfg = ModelConfig::desk_at(32);
    let model = BlanModel::<f32>::with_random_extractor(&cfg, 3).unwrap();
    let counts = model.param_counts();
    assert_eq!(counts.generator, model.g.state.params.count());
    assert_eq!(counts.feature_disc, FeatureDiscriminatorConfig::desk().param_count());
    let mut other = model.clone();
    for t in other.g.state.params.tensors_mut() {
        for v in t.data_mut() {
            *v += 1.0;
        }
    }
    assert_eq!(other.dp, model.dp);
    assert_eq!(other.df, model.df);
    assert_eq!(other.f, model.f);
}

#[test]
fn analytic_generator_count_matches_built_network() {
    for (size, base, max, skip) in [(16, 4, 16, true), (32, 8, 32, false), (64, 16, 128, true)] {
        let mut cfg = GeneratorConfig::for_size(size, base, max);
        cfg.skip_connections = skip;
        let built = Generator::<f32>::new(cfg.clone(), &mut rng(0)).unwrap();
        assert_eq!(cfg.param_count(), built.param_count(), "{cfg:?}");
    }
    let reference = ModelConfig::reference();
    reference.validate().unwrap();
    assert_eq!(reference.generator.size, 128);
    assert!(reference.generator.param_count() > 10_000_000);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let cfg = ModelConfig::desk_at(32);
    let model = BlanModel::<f32>::with_random_extractor(&cfg, seed::derive(9, &[1])).unwrap();
    let bytes = model.to_checkpoint().to_bytes();
    let back = BlanModel::<f32>::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.to_checkpoint().to_bytes(), bytes);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    model.to_checkpoint().save(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    assert_eq!(BlanModel::<f32>::from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap(), model);
}

#[test]
fn checkpoint_corruption_is_detected() {
    let cfg = ModelConfig::desk_at(32);
    let bytes = BlanModel::<f32>::with_random_extractor(&cfg, 1).unwrap().to_checkpoint().to_bytes();
    let mut flipped = bytes.clone();
    flipped[bytes.len() / 2] ^= 0x10;
    assert!(Checkpoint::from_bytes(&flipped).is_err());
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 9]).is_err());
    assert!(Checkpoint::from_bytes(b"NOPE").is_err());
}
