use std::fmt::Write as _;

use blan_autograd::Tensor;
use rand::seq::index;

use super::batch_images;
use crate::config::FPR_POINTS;
use crate::error::{Error, Result};
use crate::net::{FeatureExtractor, Generator};
use crate::seed::{self, label};
use crate::synth::ImagePair;

/// Cosine similarity; fails if either vector has zero norm.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    assert_eq!(a.len(), b.len(), "feature lengths differ");
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Generator inference on one `[3, h, w]` image or a batch.
pub fn remove_makeup(g: &Generator<f32>, image: &Tensor<f32>) -> Result<Tensor<f32>> {
    let single = image.shape().len() == 3;
    let batch = if single {
        let mut s = vec![1];
        s.extend_from_slice(image.shape());
        image.clone().reshape(s)?
    } else {
        image.clone()
    };
    let out = g.infer(&batch)?;
    Ok(if single { out.reshape(image.shape().to_vec())? } else { out })
}

/// Scores the makeup probe `image1` (after makeup removal) against `image2`.
pub fn verify_pair(
    g: &Generator<f32>,
    f: &FeatureExtractor<f32>,
    image1: &Tensor<f32>,
    image2: &Tensor<f32>,
    threshold: f64,
) -> Result<(f64, bool)> {
    let probe = remove_makeup(g, image1)?;
    let feats = f.extract(&batch_images([&probe, image2])?)?;
    let d = feats.shape()[1];
    let score = cosine(&feats.data()[..d], &feats.data()[d..])?;
    Ok((score, score >= threshold))
}

/// Probe × gallery similarities; probe i's true match is gallery entry i.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    pub n: usize,
    pub scores: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(n: usize, scores: Vec<f64>) -> Self {
        assert_eq!(scores.len(), n * n, "score matrix must be square");
        ScoreMatrix { n, scores }
    }

    pub fn get(&self, probe: usize, gallery: usize) -> f64 {
        self.scores[probe * self.n + gallery]
    }

    /// Cosine similarity between every probe and gallery feature row.
    pub fn from_features(probes: &Tensor<f32>, gallery: &Tensor<f32>) -> Result<Self> {
        let n = probes.shape()[0];
        let d = probes.shape()[1];
        assert_eq!(gallery.shape(), probes.shape(), "probe and gallery feature shapes differ");
        let mut scores = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let p = &probes.data()[i * d..(i + 1) * d];
                let q = &gallery.data()[j * d..(j + 1) * d];
                scores.push(cosine(p, q)?);
            }
        }
        Ok(ScoreMatrix { n, scores })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rank1 {
    pub accuracy: f64,
    /// Probes whose top score was shared by several gallery entries.
    pub ties: usize,
}

/// Fraction of probes whose best gallery match is the true one. Ties go to
/// the lowest gallery index.
pub fn rank1(s: &ScoreMatrix) -> Rank1 {
    let mut correct = 0;
    let mut ties = 0;
    for i in 0..s.n {
        let mut best = 0;
        for j in 1..s.n {
            if s.get(i, j) > s.get(i, best) {
                best = j;
            }
        }
        let top = s.get(i, best);
        if (0..s.n).filter(|&j| s.get(i, j) == top).count() > 1 {
            ties += 1;
        }
        if best == i {
            correct += 1;
        }
    }
    if ties > 0 {
        log::warn!("{ties} of {} probes had tied top scores; resolved to the lowest gallery index", s.n);
    }
    Rank1 {
        accuracy: if s.n == 0 { 0.0 } else { correct as f64 / s.n as f64 },
        ties,
    }
}

/// True positive rate at false positive rate `fpr`, or `None` when fewer than
/// 1/fpr negatives make the operating point unobservable.
///
/// The threshold is the (⌊fpr·n⌋+1)-th largest negative score and a pair is
/// accepted when its score is strictly greater, so at most ⌊fpr·n⌋
/// negatives pass.
pub fn tpr_at_fpr(positives: &[f64], negatives: &[f64], fpr: f64) -> Option<f64> {
    let n = negatives.len();
    if positives.is_empty() || (n as f64) < (1.0 / fpr).ceil() - 1e-9 {
        return None;
    }
    let mut neg = negatives.to_vec();
    neg.sort_by(|a, b| b.total_cmp(a));
    let allowed = ((fpr * n as f64) + 1e-9).floor() as usize;
    let threshold = neg[allowed.min(n - 1)];
    let hits = positives.iter().filter(|&&p| p > threshold).count();
    Some(hits as f64 / positives.len() as f64)
}

/// Verification results on one test fold.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldEval {
    pub fold: usize,
    pub rank1: f64,
    pub ties: usize,
    /// At each of [`FPR_POINTS`].
    pub tpr: [Option<f64>; 2],
    pub positives: Vec<f64>,
    pub negatives: Vec<f64>,
}

/// How probes are presented to the extractor.
#[derive(Clone, Copy, Debug)]
pub enum Probe<'a> {
    /// Makeup images passed through the generator first.
    Demakeup(&'a Generator<f32>),
    /// Makeup images as they are.
    Raw,
}

/// Probe features (makeup side) and gallery features (non-makeup side).
pub fn fold_features(probe: Probe<'_>, f: &FeatureExtractor<f32>, test: &[&ImagePair]) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let a = batch_images(test.iter().map(|p| &p.makeup))?;
    let a = match probe {
        Probe::Demakeup(g) => g.infer(&a)?,
        Probe::Raw => a,
    };
    let b = batch_images(test.iter().map(|p| &p.clean))?;
    Ok((f.extract(&a)?, f.extract(&b)?))
}

/// Rank-1 over the fold's probes plus a verification ROC on all positive
/// pairs and an equal number of seeded random negative pairs.
pub fn evaluate_fold(
    probe: Probe<'_>,
    f: &FeatureExtractor<f32>,
    test: &[&ImagePair],
    fold: usize,
    seed: u64,
) -> Result<FoldEval> {
    if test.len() < 2 {
        return Err(Error::config(format!(
            "fold {fold} has {} identities; evaluation needs at least 2",
            test.len()
        )));
    }
    let (pf, gf) = fold_features(probe, f, test)?;
    let s = ScoreMatrix::from_features(&pf, &gf)?;
    Ok(score_fold(&s, fold, seed))
}

/// Evaluation from a precomputed score matrix.
pub fn score_fold(s: &ScoreMatrix, fold: usize, seed: u64) -> FoldEval {
    let n = s.n;
    let r = rank1(s);
    let positives: Vec<f64> = (0..n).map(|i| s.get(i, i)).collect();
    let mut rng = seed::rng(seed, &[label::NEGATIVES, fold as u64]);
    // off-diagonal cell k maps to probe k / (n−1) and the k % (n−1)-th other gallery entry
    let off = n * (n - 1);
    let negatives: Vec<f64> = index::sample(&mut rng, off, n.min(off))
        .into_iter()
        .map(|k| {
            let (i, j) = (k / (n - 1), k % (n - 1));
            s.get(i, if j >= i { j + 1 } else { j })
        })
        .collect();
    let tpr = FPR_POINTS.map(|fpr| tpr_at_fpr(&positives, &negatives, fpr));
    FoldEval {
        fold,
        rank1: r.accuracy,
        ties: r.ties,
        tpr,
        positives,
        negatives,
    }
}

/// Per-fold results plus means.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub label: String,
    pub folds: Vec<FoldEval>,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "fold,rank1,tpr_fpr001,tpr_fpr01";

    pub fn mean_rank1(&self) -> f64 {
        self.folds.iter().map(|f| f.rank1).sum::<f64>() / self.folds.len().max(1) as f64
    }

    /// Mean over the folds where the operating point was observable.
    pub fn mean_tpr(&self, point: usize) -> Option<f64> {
        mean_defined(self.folds.iter().map(|f| f.tpr[point]))
    }

    /// TPR pooled over all folds' scores, which may be observable when the
    /// per-fold values are not.
    pub fn pooled_tpr(&self, point: usize) -> Option<f64> {
        let pos: Vec<f64> = self.folds.iter().flat_map(|f| f.positives.iter().copied()).collect();
        let neg: Vec<f64> = self.folds.iter().flat_map(|f| f.negatives.iter().copied()).collect();
        tpr_at_fpr(&pos, &neg, FPR_POINTS[point])
    }

    /// One row per fold, then a `mean` row. Unobservable cells read `NA`.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for f in &self.folds {
            writeln!(s, "{},{:.6},{},{}", f.fold, f.rank1, cell(f.tpr[0]), cell(f.tpr[1])).unwrap();
        }
        writeln!(
            s,
            "mean,{:.6},{},{}",
            self.mean_rank1(),
            cell(self.mean_tpr(0)),
            cell(self.mean_tpr(1))
        )
        .unwrap();
        s
    }
}
