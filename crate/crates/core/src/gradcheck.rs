//! Finite-difference verification of every loss function in 64-bit precision.

use blan_autograd::{grad_check, GradCheckOptions, Graph, Tensor, Var};
use rand::Rng;

use crate::error::Result;
use crate::losses;
use crate::seed;

/// Largest relative error accepted by [`loss_gradient_suite`].
pub const TOLERANCE: f64 = 1e-4;

/// Names of the checked losses, in report order.
pub const LOSS_NAMES: [&str; 8] = [
    "loss_pxl",
    "loss_edge",
    "loss_sym",
    "loss_adv_pixel_g",
    "loss_adv_feature_g",
    "loss_cons_feature",
    "loss_d_p",
    "loss_d_f",
];

#[derive(Clone, Debug, PartialEq)]
pub struct LossCheck {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

impl LossCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

type LossFn = for<'g> fn(&'g Graph<f64>, &[Var<'g, f64>]) -> blan_autograd::Result<Var<'g, f64>>;

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_vec(shape.to_vec(), data).expect("shape matches data")
}

/// Checks each loss on random inputs drawn from `seed`. `corrupt` names a
/// loss whose backward pass is deliberately doubled, to exercise the harness.
pub fn loss_gradient_suite(seed: u64, corrupt: Option<&str>) -> Result<Vec<LossCheck>> {
    let mut rng = seed::rng(seed, &[0x6772_6164]);
    let img = [2, 3, 4, 4];
    let cases: [(&'static str, LossFn, Vec<Tensor<f64>>); 8] = [
        (
            "loss_pxl",
            |_, v| losses::loss_pxl(v[0], v[1]),
            vec![uniform(&img, -1.0, 1.0, &mut rng), uniform(&img, -1.0, 1.0, &mut rng)],
        ),
        (
            "loss_edge",
            |_, v| losses::loss_edge(v[0], v[1]),
            vec![uniform(&img, -1.0, 1.0, &mut rng), uniform(&img, -1.0, 1.0, &mut rng)],
        ),
        ("loss_sym", |_, v| losses::loss_sym(v[0]), vec![uniform(&img, -1.0, 1.0, &mut rng)]),
        (
            "loss_adv_pixel_g",
            |_, v| losses::loss_adv_pixel_g(v[0]),
            vec![uniform(&[2, 2, 2], 0.05, 0.95, &mut rng)],
        ),
        (
            "loss_adv_feature_g",
            |_, v| losses::loss_adv_feature_g(v[0]),
            vec![uniform(&[3, 1], 0.05, 0.95, &mut rng)],
        ),
        (
            "loss_cons_feature",
            |_, v| losses::loss_cons_feature(v[0], v[1]),
            vec![uniform(&[2, 8], -2.0, 2.0, &mut rng), uniform(&[2, 8], -2.0, 2.0, &mut rng)],
        ),
        (
            "loss_d_p",
            |_, v| losses::loss_d_p(v[0], v[1]),
            vec![uniform(&[2, 2, 2], 0.05, 0.95, &mut rng), uniform(&[2, 2, 2], 0.05, 0.95, &mut rng)],
        ),
        (
            "loss_d_f",
            |_, v| losses::loss_d_f(v[0], v[1]),
            vec![uniform(&[3, 1], 0.05, 0.95, &mut rng), uniform(&[3, 1], 0.05, 0.95, &mut rng)],
        ),
    ];
    let opts = GradCheckOptions {
        seed,
        ..GradCheckOptions::default()
    };
    let mut out = Vec::with_capacity(cases.len());
    for (name, f, params) in cases {
        // keep clear of the |x − y| kink for the two-input L1 losses
        let kink = 10.0 * opts.eps;
        let exclude = |_: usize, c: usize| {
            matches!(name, "loss_pxl" | "loss_cons_feature")
                && (params[0].data()[c] - params[1].data()[c]).abs() < kink
        };
        let report = if corrupt == Some(name) {
            // forward value unchanged, gradient doubled
            grad_check(
                |g, v| {
                    let l = f(g, v)?;
                    l.scale(2.0).sub(l.detach())
                },
                &params,
                &opts,
                exclude,
            )?
        } else {
            grad_check(f, &params, &opts, exclude)?
        };
        out.push(LossCheck {
            name,
            max_rel_error: report.max_rel_error,
            checked: report.checked,
            skipped: report.skipped,
        });
    }
    Ok(out)
}
