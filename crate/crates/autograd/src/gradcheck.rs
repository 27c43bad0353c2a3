//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Graph, Result, Tensor, Var};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Coordinates checked per parameter; `None` checks all of them.
    pub max_coords: Option<usize>,
    pub seed: u64,
    /// Coordinates whose one-sided difference quotients disagree by more
    /// than this (relative) straddle a kink and are skipped.
    pub kink_tolerance: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-5,
            max_coords: None,
            seed: 0,
            kink_tolerance: 1e-3,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    /// max over checked coordinates of
    /// `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// Compares the gradient of `f` from [`Graph::backward`] against central
/// differences in 64-bit precision.
///
/// `exclude(param, coord)` lets the caller skip coordinates known to sit
/// near a non-differentiable point; near-kink coordinates are also detected
/// automatically from disagreeing one-sided quotients.
pub fn grad_check<F>(
    f: F,
    params: &[Tensor<f64>],
    opts: &GradCheckOptions,
    exclude: impl Fn(usize, usize) -> bool,
) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>,
{
    assert!(opts.eps > 0.0, "eps must be positive");
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let g = Graph::new();
        let vars: Vec<_> = values.iter().map(|t| g.constant(t.clone())).collect();
        Ok(f(&g, &vars)?.item())
    };

    let g = Graph::new();
    let vars: Vec<_> = params.iter().map(|t| g.param(t.clone())).collect();
    let root = f(&g, &vars)?;
    if !root.item().is_finite() {
        return Err(Error::NonFinite("function value".into()));
    }
    g.backward(root)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(params)
        .map(|(v, p)| v.grad().unwrap_or_else(|| Tensor::zeros(p.shape().to_vec())))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport::default();
    let mut work: Vec<Tensor<f64>> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        let name = format!("parameter {pi}");
        if !analytic[pi].is_finite() {
            return Err(Error::NonFinite(format!("analytic gradient of {name}")));
        }
        let n = p.numel();
        let coords: Vec<usize> = match opts.max_coords {
            Some(m) if m < n => sample(&mut rng, n, m).into_vec(),
            _ => (0..n).collect(),
        };
        for c in coords {
            if exclude(pi, c) {
                report.skipped += 1;
                continue;
            }
            let x0 = p.data()[c];
            let f0 = eval(&work)?;
            work[pi].data_mut()[c] = x0 + opts.eps;
            let fp = eval(&work)?;
            work[pi].data_mut()[c] = x0 - opts.eps;
            let fm = eval(&work)?;
            work[pi].data_mut()[c] = x0;
            if !(f0.is_finite() && fp.is_finite() && fm.is_finite()) {
                return Err(Error::NonFinite(format!("{name}, coordinate {c}")));
            }
            let fwd = (fp - f0) / opts.eps;
            let bwd = (f0 - fm) / opts.eps;
            if (fwd - bwd).abs() > opts.kink_tolerance * 1f64.max(fwd.abs()).max(bwd.abs()) {
                report.skipped += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * opts.eps);
            let a = analytic[pi].data()[c];
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_function_has_zero_error() {
        let x = Tensor::from_vec(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let r = grad_check(
            |g, _p| Ok(g.constant(Tensor::scalar(4.0))),
            &[x],
            &GradCheckOptions::default(),
            |_, _| false,
        )
        .unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        assert_eq!(r.checked, 3);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // detach hides the dependence from backward, so analytic grad is 0
        let x = Tensor::from_vec(vec![2], vec![0.3, -0.7]).unwrap();
        let r = grad_check(
            |_g, p| Ok(p[0].detach().mul(p[0])?.sum()),
            &[x],
            &GradCheckOptions::default(),
            |_, _| false,
        )
        .unwrap();
        assert!(r.max_rel_error > 0.1);
    }

    #[test]
    fn kink_coordinates_are_skipped() {
        let x = Tensor::from_vec(vec![2], vec![0.0, 1.0]).unwrap();
        let r = grad_check(|_g, p| Ok(p[0].abs().sum()), &[x], &GradCheckOptions::default(), |_, _| false)
            .unwrap();
        assert_eq!(r.skipped, 1);
        assert_eq!(r.checked, 1);
        assert!(r.max_rel_error < 1e-8);
    }

    #[test]
    fn non_finite_is_reported() {
        let x = Tensor::from_vec(vec![1], vec![-1.0]).unwrap();
        let err = grad_check(|_g, p| Ok(p[0].ln().sum()), &[x], &GradCheckOptions::default(), |_, _| false)
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }
}
