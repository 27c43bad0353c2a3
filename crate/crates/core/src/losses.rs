//! Generator and discriminator objectives.
//!
//! Image losses accept any tensor whose last two axes are height and width
//! (`[h, w]`, `[c, h, w]` or `[N, c, h, w]`) and average over the leading axes.
//! Probability inputs are clamped with [`LOG_EPS`] inside every logarithm.

use std::fmt;

use blan_autograd::{Scalar, Var};

use crate::config::{
    EDGE_WEIGHT, LAMBDA_ADV_FEATURE, LAMBDA_ADV_PIXEL, LAMBDA_CONS_FEATURE, LOG_EPS, SYMMETRY_WEIGHT,
};
use crate::error::{Error, Result};

type VarResult<'g, T> = blan_autograd::Result<Var<'g, T>>;

/// Weights of the composite generator objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// On the pixel-level adversarial term.
    pub lambda1: f64,
    /// On the feature reconstruction term.
    pub lambda2: f64,
    /// On the feature-level adversarial term.
    pub lambda3: f64,
    pub w_edge: f64,
    pub w_sym: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: LAMBDA_ADV_PIXEL,
            lambda2: LAMBDA_CONS_FEATURE,
            lambda3: LAMBDA_ADV_FEATURE,
            w_edge: EDGE_WEIGHT,
            w_sym: SYMMETRY_WEIGHT,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("w_edge", self.w_edge),
            ("w_sym", self.w_sym),
        ];
        for (name, v) in all {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("loss weight {name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Loss values of one training iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport {
    pub pxl: f64,
    pub edg: f64,
    pub sym: f64,
    pub cons_p: f64,
    pub adv_p: f64,
    pub cons_f: f64,
    pub adv_f: f64,
    pub total_g: f64,
    pub loss_dp: f64,
    pub loss_df: f64,
}

impl LossReport {
    pub const CSV_HEADER: &'static str =
        "iteration,pxl,edg,sym,cons_p,adv_p,cons_f,adv_f,total_G,loss_Dp,loss_Df";

    /// Fills `cons_p` and `total_g` from the individual terms.
    pub fn with_composites(mut self, w: &LossWeights) -> Self {
        self.cons_p = self.pxl + w.w_edge * self.edg + w.w_sym * self.sym;
        self.total_g = loss_total_g(&self, w);
        self
    }

    pub fn fields(&self) -> [(&'static str, f64); 10] {
        [
            ("pxl", self.pxl),
            ("edg", self.edg),
            ("sym", self.sym),
            ("cons_p", self.cons_p),
            ("adv_p", self.adv_p),
            ("cons_f", self.cons_f),
            ("adv_f", self.adv_f),
            ("total_G", self.total_g),
            ("loss_Dp", self.loss_dp),
            ("loss_Df", self.loss_df),
        ]
    }

    /// One CSV row with 9 significant digits per value.
    pub fn csv_row(&self, iteration: usize) -> String {
        let mut s = iteration.to_string();
        for (_, v) in self.fields() {
            s.push(',');
            s.push_str(&sig9(v));
        }
        s
    }

    pub fn parse_csv_row(line: &str) -> Result<(usize, Self)> {
        let bad = || Error::Dataset(format!("malformed loss log row {line:?}"));
        let cells: Vec<&str> = line.trim().split(',').collect();
        if cells.len() != 11 {
            return Err(bad());
        }
        let it = cells[0].parse().map_err(|_| bad())?;
        let mut v = [0.0; 10];
        for (slot, cell) in v.iter_mut().zip(&cells[1..]) {
            *slot = cell.parse().map_err(|_| bad())?;
        }
        Ok((
            it,
            LossReport {
                pxl: v[0],
                edg: v[1],
                sym: v[2],
                cons_p: v[3],
                adv_p: v[4],
                cons_f: v[5],
                adv_f: v[6],
                total_g: v[7],
                loss_dp: v[8],
                loss_df: v[9],
            },
        ))
    }

    /// Name of the first non-finite field.
    pub fn non_finite(&self) -> Option<&'static str> {
        self.fields().into_iter().find(|(_, v)| !v.is_finite()).map(|(n, _)| n)
    }
}

impl fmt::Display for LossReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (name, v)) in self.fields().into_iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{name}={v:.4}")?;
        }
        Ok(())
    }
}

/// `v` in scientific notation with 9 significant digits.
pub fn sig9(v: f64) -> String {
    format!("{v:.8e}")
}

/// Composite generator objective from already computed terms.
pub fn loss_total_g(parts: &LossReport, w: &LossWeights) -> f64 {
    (parts.pxl + w.w_edge * parts.edg + w.w_sym * parts.sym)
        + w.lambda1 * parts.adv_p
        + w.lambda2 * parts.cons_f
        + w.lambda3 * parts.adv_f
}

fn same_shape<T: Scalar>(op: &'static str, a: &Var<'_, T>, b: &Var<'_, T>) -> blan_autograd::Result<()> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa != sb {
        return Err(blan_autograd::Error::shape(op, format!("{sa:?} vs {sb:?}")));
    }
    Ok(())
}

fn spatial<T: Scalar>(op: &'static str, x: &Var<'_, T>) -> blan_autograd::Result<(usize, usize, usize)> {
    let s = x.shape();
    if s.len() < 2 {
        return Err(blan_autograd::Error::shape(op, format!("need at least [h, w], got {s:?}")));
    }
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    let lead = s[..s.len() - 2].iter().product();
    Ok((lead, h, w))
}

/// Mean absolute pixel difference.
pub fn loss_pxl<'g, T: Scalar>(gen: Var<'g, T>, gt: Var<'g, T>) -> VarResult<'g, T> {
    same_shape("loss_pxl", &gen, &gt)?;
    Ok(gen.sub(gt)?.abs().mean())
}

/// L1 distance between absolute horizontal and vertical first differences,
/// normalised by h·w per image plane. The last column and row have no
/// forward neighbour and contribute nothing.
pub fn loss_edge<'g, T: Scalar>(gen: Var<'g, T>, gt: Var<'g, T>) -> VarResult<'g, T> {
    same_shape("loss_edge", &gen, &gt)?;
    let (lead, h, w) = spatial("loss_edge", &gen)?;
    if h < 2 || w < 2 {
        return Err(blan_autograd::Error::shape("loss_edge", format!("image {h}x{w} is smaller than 2x2")));
    }
    let rank = gen.shape().len();
    let (ax_h, ax_w) = (rank - 2, rank - 1);
    let diff = |x: Var<'g, T>, axis: usize, len: usize| -> VarResult<'g, T> {
        Ok(x.narrow(axis, 1, len - 1)?.sub(x.narrow(axis, 0, len - 1)?)?.abs())
    };
    let horiz = diff(gen, ax_w, w)?.sub(diff(gt, ax_w, w)?)?.abs().sum();
    let vert = diff(gen, ax_h, h)?.sub(diff(gt, ax_h, h)?)?.abs().sum();
    Ok(horiz.add(vert)?.scale(1.0 / (h * w * lead) as f64))
}

/// Mean absolute difference between mirror pixel pairs (j, w−1−j), each pair
/// counted once and normalised by h·w/2 per image plane.
pub fn loss_sym<'g, T: Scalar>(gen: Var<'g, T>) -> VarResult<'g, T> {
    let (lead, h, w) = spatial("loss_sym", &gen)?;
    if w % 2 != 0 {
        return Err(blan_autograd::Error::shape("loss_sym", format!("width {w} is odd")));
    }
    let ax = gen.shape().len() - 1;
    let left = gen.narrow(ax, 0, w / 2)?;
    let right = gen.narrow(ax, w / 2, w / 2)?.flip(ax)?;
    Ok(left.sub(right)?.abs().sum().scale(1.0 / (h * (w / 2) * lead) as f64))
}

fn neg_log<'g, T: Scalar>(p: Var<'g, T>) -> Var<'g, T> {
    p.add_scalar(LOG_EPS).ln().neg()
}

/// Mean of −log(p + ε) over the discriminator map (and batch).
pub fn loss_adv_pixel_g<'g, T: Scalar>(dp_map: Var<'g, T>) -> VarResult<'g, T> {
    Ok(neg_log(dp_map).mean())
}

/// −log(p + ε), averaged over the batch.
pub fn loss_adv_feature_g<'g, T: Scalar>(df_out: Var<'g, T>) -> VarResult<'g, T> {
    Ok(neg_log(df_out).mean())
}

/// Mean absolute feature difference.
pub fn loss_cons_feature<'g, T: Scalar>(f_gen: Var<'g, T>, f_gt: Var<'g, T>) -> VarResult<'g, T> {
    same_shape("loss_cons_feature", &f_gen, &f_gt)?;
    Ok(f_gen.sub(f_gt)?.abs().mean())
}

/// −[mean log(real + ε) + mean log(1 − fake + ε)].
pub fn loss_d_p<'g, T: Scalar>(real: Var<'g, T>, fake: Var<'g, T>) -> VarResult<'g, T> {
    Ok(neg_log(real).mean().add(neg_log(fake.one_minus()).mean())?)
}

/// Feature discriminator objective; batch-averaged form of [`loss_d_p`].
pub fn loss_d_f<'g, T: Scalar>(real: Var<'g, T>, fake: Var<'g, T>) -> VarResult<'g, T> {
    loss_d_p(real, fake)
}
