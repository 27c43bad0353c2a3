use blan_autograd::{Graph, Tensor, Var};
use blan_core::gradcheck::{loss_gradient_suite, LOSS_NAMES, TOLERANCE};
use blan_core::losses::*;
use proptest::prelude::*;

const EPS: f64 = 1e-7;
const LN2: f64 = std::f64::consts::LN_2;

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(shape.to_vec(), data.to_vec()).unwrap()
}

fn eval1(f: impl for<'g> Fn(Var<'g, f64>) -> blan_autograd::Result<Var<'g, f64>>, a: &Tensor<f64>) -> f64 {
    let g = Graph::new();
    f(g.constant(a.clone())).unwrap().item()
}

fn eval2(
    f: impl for<'g> Fn(Var<'g, f64>, Var<'g, f64>) -> blan_autograd::Result<Var<'g, f64>>,
    a: &Tensor<f64>,
    b: &Tensor<f64>,
) -> f64 {
    let g = Graph::new();
    f(g.constant(a.clone()), g.constant(b.clone())).unwrap().item()
}

// brute-force oracles over [c, h, w]

fn oracle_pxl(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

fn oracle_edge(a: &[f64], b: &[f64], c: usize, h: usize, w: usize) -> f64 {
    let at = |x: &[f64], k: usize, i: usize, j: usize| x[(k * h + i) * w + j];
    let mut total = 0.0;
    for k in 0..c {
        let mut s = 0.0;
        for i in 0..h {
            for j in 0..w {
                if j + 1 < w {
                    let ga = (at(a, k, i, j + 1) - at(a, k, i, j)).abs();
                    let gb = (at(b, k, i, j + 1) - at(b, k, i, j)).abs();
                    s += (ga - gb).abs();
                }
                if i + 1 < h {
                    let ga = (at(a, k, i + 1, j) - at(a, k, i, j)).abs();
                    let gb = (at(b, k, i + 1, j) - at(b, k, i, j)).abs();
                    s += (ga - gb).abs();
                }
            }
        }
        total += s / (h * w) as f64;
    }
    total / c as f64
}

fn oracle_sym(a: &[f64], c: usize, h: usize, w: usize) -> f64 {
    let mut total = 0.0;
    for k in 0..c {
        let mut s = 0.0;
        for i in 0..h {
            for j in 0..w / 2 {
                s += (a[(k * h + i) * w + j] - a[(k * h + i) * w + (w - 1 - j)]).abs();
            }
        }
        total += s / (h * w / 2) as f64;
    }
    total / c as f64
}

fn mirror(a: &Tensor<f64>) -> Tensor<f64> {
    let w = *a.shape().last().unwrap();
    let mut out = a.clone();
    for row in out.data_mut().chunks_mut(w) {
        row.reverse();
    }
    out
}

#[test]
fn pixel_loss_examples() {
    let x = t(&[1, 2, 2], &[0.3, -0.2, 0.9, 0.1]);
    assert_eq!(eval2(loss_pxl, &x, &x), 0.0);
    let a = Tensor::full(vec![3, 4, 4], 0.5);
    let b = Tensor::full(vec![3, 4, 4], 0.25);
    assert!((eval2(loss_pxl, &a, &b) - 0.25).abs() < 1e-7);
    let a = t(&[1, 3, 3], &[0.1, -0.7, 0.3, 0.9, 0.0, -0.4, 0.25, 0.6, -0.95]);
    let b = t(&[1, 3, 3], &[-0.2, 0.5, 0.3, 0.1, 0.8, -0.1, 0.0, -0.6, 0.45]);
    assert!((eval2(loss_pxl, &a, &b) - oracle_pxl(a.data(), b.data())).abs() < 1e-6);
}

#[test]
fn edge_loss_examples() {
    let c1 = Tensor::full(vec![1, 3, 4], 0.7);
    let c2 = Tensor::full(vec![1, 3, 4], -0.2);
    assert_eq!(eval2(loss_edge, &c1, &c2), 0.0);
    let x = t(&[1, 2, 3], &[0.1, 0.9, -0.3, 0.4, 0.0, 0.2]);
    assert_eq!(eval2(loss_edge, &x, &x), 0.0);
    let gen = t(&[1, 2, 2], &[0.0, 1.0, 0.0, 1.0]);
    let gt = t(&[1, 2, 2], &[0.0; 4]);
    let v = eval2(loss_edge, &gen, &gt);
    assert!((v - 0.5).abs() < 1e-6, "{v}");
    assert!((oracle_edge(gen.data(), gt.data(), 1, 2, 2) - 0.5).abs() < 1e-12);
}

#[test]
fn symmetry_loss_examples() {
    let sym = t(&[1, 2, 4], &[0.1, 0.5, 0.5, 0.1, -0.3, 0.8, 0.8, -0.3]);
    assert_eq!(eval1(loss_sym, &sym), 0.0);
    let x = t(&[1, 2, 2], &[1.0, 0.0, 1.0, 0.0]);
    assert!((eval1(loss_sym, &x) - 1.0).abs() < 1e-6);
    assert!((oracle_sym(x.data(), 1, 2, 2) - 1.0).abs() < 1e-12);
}

#[test]
fn adversarial_pixel_examples() {
    let perfect = Tensor::full(vec![2, 2], 1.0 - EPS);
    assert!(eval1(loss_adv_pixel_g, &perfect).abs() < 1e-6);
    let half = Tensor::full(vec![2, 2], 0.5);
    assert!((eval1(loss_adv_pixel_g, &half) - LN2).abs() < 1e-6);
    let mixed = t(&[2, 2], &[0.5, 0.5, 1.0 - EPS, 1.0 - EPS]);
    assert!((eval1(loss_adv_pixel_g, &mixed) - LN2 / 2.0).abs() < 1e-6);
}

#[test]
fn adversarial_feature_examples() {
    let one = |p: f64| eval1(loss_adv_feature_g, &t(&[1], &[p]));
    assert!(one(1.0 - EPS).abs() < 1e-6);
    assert!((one(0.5) - LN2).abs() < 1e-6);
    assert!((one((-1f64).exp()) - 1.0).abs() < 1e-6);
}

#[test]
fn feature_reconstruction_examples() {
    let f = t(&[4], &[0.3, -1.2, 0.0, 2.5]);
    assert_eq!(eval2(loss_cons_feature, &f, &f), 0.0);
    let v = eval2(loss_cons_feature, &t(&[2], &[1.0, 0.0]), &t(&[2], &[0.0, 1.0]));
    assert!((v - 1.0).abs() < 1e-6);
    let a = t(&[8], &[0.4, -0.1, 1.7, -2.2, 0.05, 0.9, -0.6, 0.3]);
    let b = t(&[8], &[-0.3, 0.2, 1.1, 0.4, -0.5, 0.9, 0.25, -1.0]);
    assert!((eval2(loss_cons_feature, &a, &b) - oracle_pxl(a.data(), b.data())).abs() < 1e-6);
}

#[test]
fn discriminator_examples() {
    let hi = Tensor::full(vec![2, 2], 1.0 - EPS);
    let lo = Tensor::full(vec![2, 2], EPS);
    assert!(eval2(loss_d_p, &hi, &lo).abs() < 1e-6);
    let half = Tensor::full(vec![2, 2], 0.5);
    assert!((eval2(loss_d_p, &half, &half) - 2.0 * LN2).abs() < 1e-6);

    let s = |p: f64| t(&[1], &[p]);
    assert!(eval2(loss_d_f, &s(1.0 - EPS), &s(EPS)).abs() < 1e-6);
    assert!((eval2(loss_d_f, &s(0.5), &s(0.5)) - 2.0 * LN2).abs() < 1e-6);
    let e = (-1f64).exp();
    assert!((eval2(loss_d_f, &s(e), &s(1.0 - e)) - 2.0).abs() < 1e-6);
}

#[test]
fn composite_examples() {
    let w = LossWeights::default();
    assert_eq!(loss_total_g(&LossReport::default(), &w), 0.0);

    let only = LossWeights {
        lambda1: 1.0,
        lambda2: 0.0,
        lambda3: 0.0,
        w_edge: 0.0,
        w_sym: 0.0,
    };
    let parts = LossReport {
        adv_p: 0.7,
        ..LossReport::default()
    };
    // pxl enters with unit weight and is zero here
    assert!((loss_total_g(&parts, &only) - 0.7).abs() < 1e-12);

    let parts = LossReport {
        pxl: 0.2,
        edg: 0.1,
        sym: 0.1,
        adv_p: 0.69,
        cons_f: 0.5,
        adv_f: 0.69,
        ..LossReport::default()
    };
    let oracle = [0.2, 0.1 * 0.1, 0.3 * 0.1, 3e-3 * 0.69, 0.02 * 0.5, 3e-3 * 0.69].iter().sum::<f64>();
    assert!((oracle - 0.25414).abs() < 1e-12);
    assert!((loss_total_g(&parts, &w) - 0.25414).abs() < 1e-6);
    let r = parts.with_composites(&w);
    assert!((r.cons_p - (0.2 + 0.01 + 0.03)).abs() < 1e-12);
    assert_eq!(r.total_g, loss_total_g(&parts, &w));
}

#[test]
fn default_weights() {
    let w = LossWeights::default();
    assert_eq!((w.lambda1, w.lambda2, w.lambda3, w.w_edge, w.w_sym), (3e-3, 0.02, 3e-3, 0.1, 0.3));
    assert!(LossWeights { lambda2: -1.0, ..w }.validate().is_err());
}

#[test]
fn shape_errors_name_the_loss() {
    let a = Tensor::<f64>::zeros(vec![1, 2, 2]);
    let b = Tensor::<f64>::zeros(vec![1, 2, 3]);
    let g = Graph::new();
    let e = loss_pxl(g.constant(a.clone()), g.constant(b.clone())).unwrap_err();
    assert!(e.to_string().contains("loss_pxl"), "{e}");
    let e = loss_sym(g.constant(Tensor::<f64>::zeros(vec![1, 2, 3]))).unwrap_err();
    assert!(e.to_string().contains("odd"), "{e}");
    let e = loss_edge(g.constant(Tensor::<f64>::zeros(vec![1, 1, 3])), g.constant(Tensor::<f64>::zeros(vec![1, 1, 3])))
        .unwrap_err();
    assert!(e.to_string().contains("2x2"), "{e}");
}

#[test]
fn csv_row_round_trips_nine_digits() {
    let r = LossReport {
        pxl: 0.123456789123,
        edg: 1.0 / 3.0,
        total_g: 12345.6789,
        ..LossReport::default()
    };
    let row = r.csv_row(17);
    let (it, back) = LossReport::parse_csv_row(&row).unwrap();
    assert_eq!(it, 17);
    for ((_, a), (_, b)) in r.fields().iter().zip(back.fields()) {
        assert!((a - b).abs() <= 5e-9 * a.abs().max(1e-300), "{a} vs {b}");
    }
    assert_eq!(row.split(',').count(), 11);
    assert!(row.contains("1.23456789e-1"), "{row}");
}

#[test]
fn gradient_suite_passes_for_all_losses() {
    let checks = loss_gradient_suite(3, None).unwrap();
    assert_eq!(checks.iter().map(|c| c.name).collect::<Vec<_>>(), LOSS_NAMES);
    for c in &checks {
        assert!(c.max_rel_error < TOLERANCE, "{c:?}");
        assert!(c.checked > 0, "{c:?}");
    }
}

#[test]
fn gradient_suite_flags_a_corrupted_backward() {
    let checks = loss_gradient_suite(3, Some("loss_sym")).unwrap();
    for c in checks {
        assert_eq!(c.passed(), c.name != "loss_sym", "{c:?}");
    }
}

fn image(c: usize, h: usize, w: usize) -> impl Strategy<Value = Tensor<f64>> {
    prop::collection::vec(-1.0f64..1.0, c * h * w).prop_map(move |d| t(&[c, h, w], &d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn losses_match_loop_oracles(a in image(2, 3, 4), b in image(2, 3, 4)) {
        prop_assert!((eval2(loss_pxl, &a, &b) - oracle_pxl(a.data(), b.data())).abs() < 1e-9);
        prop_assert!((eval2(loss_edge, &a, &b) - oracle_edge(a.data(), b.data(), 2, 3, 4)).abs() < 1e-9);
        prop_assert!((eval1(loss_sym, &a) - oracle_sym(a.data(), 2, 3, 4)).abs() < 1e-9);
    }

    #[test]
    fn losses_are_nonnegative(a in image(1, 4, 4), b in image(1, 4, 4), p in 0.0f64..1.0, q in 0.0f64..1.0) {
        prop_assert!(eval2(loss_pxl, &a, &b) >= 0.0);
        prop_assert!(eval2(loss_edge, &a, &b) >= 0.0);
        prop_assert!(eval1(loss_sym, &a) >= 0.0);
        prop_assert!(eval2(loss_cons_feature, &a, &b) >= 0.0);
        let (p, q) = (t(&[1], &[p]), t(&[1], &[q]));
        prop_assert!(eval1(loss_adv_pixel_g, &p) >= 0.0);
        prop_assert!(eval1(loss_adv_feature_g, &p) >= 0.0);
        // −ln(x + ε) can dip below zero only when x + ε > 1
        prop_assert!(eval2(loss_d_p, &p, &q) >= -2.0 * EPS);
        prop_assert!(eval2(loss_d_f, &p, &q).is_finite());
    }

    #[test]
    fn zero_characterisations(a in image(1, 4, 4), b in image(1, 4, 4)) {
        prop_assert_eq!(eval2(loss_pxl, &a, &a), 0.0);
        prop_assert_eq!(eval2(loss_edge, &a, &a), 0.0);
        if a.data() != b.data() {
            prop_assert!(eval2(loss_pxl, &a, &b) > 0.0);
        }
        let sym = t(&[1, 4, 4], &a.data().iter().zip(mirror(&a).data()).map(|(x, y)| x + y).collect::<Vec<_>>());
        prop_assert_eq!(eval1(loss_sym, &sym), 0.0);
        let asym = a.data().chunks(4).any(|r| r[0] != r[3] || r[1] != r[2]);
        prop_assert_eq!(eval1(loss_sym, &a) > 0.0, asym);
    }

    #[test]
    fn symmetry_loss_is_mirror_invariant(a in image(3, 2, 6)) {
        prop_assert!((eval1(loss_sym, &a) - eval1(loss_sym, &mirror(&a))).abs() < 1e-12);
    }

    #[test]
    fn edge_loss_ignores_constant_offsets(a in image(1, 4, 4), b in image(1, 4, 4), c in 0.05f64..1.0) {
        let shift = |x: &Tensor<f64>| x.map(|v| v + c);
        let base = eval2(loss_edge, &a, &b);
        prop_assert!((eval2(loss_edge, &shift(&a), &shift(&b)) - base).abs() < 1e-9);
        prop_assert!((eval2(loss_edge, &shift(&a), &b) - base).abs() < 1e-9);
        prop_assert!(eval2(loss_pxl, &shift(&a), &a) > 0.0);
    }

    #[test]
    fn composite_is_affine_in_each_weight(
        parts in prop::array::uniform6(0.0f64..2.0),
        which in 0usize..5,
        lo in 0.0f64..1.0,
        hi in 1.0f64..3.0,
    ) {
        let r = LossReport {
            pxl: parts[0], edg: parts[1], sym: parts[2], adv_p: parts[3], cons_f: parts[4], adv_f: parts[5],
            ..LossReport::default()
        };
        let set = |x: f64| {
            let mut w = LossWeights::default();
            match which {
                0 => w.lambda1 = x,
                1 => w.lambda2 = x,
                2 => w.lambda3 = x,
                3 => w.w_edge = x,
                _ => w.w_sym = x,
            }
            w
        };
        let slope = [r.adv_p, r.cons_f, r.adv_f, r.edg, r.sym][which];
        let got = (loss_total_g(&r, &set(hi)) - loss_total_g(&r, &set(lo))) / (hi - lo);
        prop_assert!((got - slope).abs() < 1e-9);
    }
}
