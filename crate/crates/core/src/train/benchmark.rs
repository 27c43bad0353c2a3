use std::fmt::Write as _;

use rayon::prelude::*;

use super::eval::{evaluate_fold, EvalReport, FoldEval, Probe};
use super::trainer::{Ablation, TrainConfig, Trainer};
use crate::config::FOLDS;
use crate::error::{Error, Result};
use crate::losses::LossReport;
use crate::net::{BlanModel, FeatureExtractor, ModelConfig};
use crate::seed::{self, label};
use crate::synth::Dataset;

/// One fold: train on the other four, score the held-out identities.
#[derive(Clone, Debug)]
pub struct FoldRun {
    pub fold: usize,
    pub trainer: Trainer,
    pub log: Vec<LossReport>,
    pub demakeup: FoldEval,
    pub raw: FoldEval,
}

/// Training seed of `fold`; shared by every ablation variant.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed::derive(seed, &[label::RUN, fold as u64])
}

/// Trains a fresh model on every identity outside `fold`.
pub fn train_fold(
    dataset: &Dataset,
    extractor: &FeatureExtractor<f32>,
    model: &ModelConfig,
    train: &TrainConfig,
    fold: usize,
) -> Result<(Trainer, Vec<LossReport>)> {
    if fold >= FOLDS {
        return Err(Error::config(format!("fold {fold} outside 0..{FOLDS}")));
    }
    let s = fold_seed(train.seed, fold);
    let m = BlanModel::new(model, extractor.clone(), s)?;
    let mut cfg = train.clone();
    cfg.seed = s;
    let mut trainer = Trainer::new(m, cfg)?;
    let pairs = dataset.train_pairs(fold);
    let mut log = Vec::with_capacity(train.max_iterations);
    trainer.run(&pairs, |_, r| {
        log.push(*r);
        Ok(())
    })?;
    Ok((trainer, log))
}

/// Trains and evaluates one fold, scoring both de-makeup and raw probes.
pub fn run_fold(
    dataset: &Dataset,
    extractor: &FeatureExtractor<f32>,
    model: &ModelConfig,
    train: &TrainConfig,
    fold: usize,
) -> Result<FoldRun> {
    let (trainer, log) = train_fold(dataset, extractor, model, train, fold)?;
    let test = dataset.test_pairs(fold);
    let demakeup = evaluate_fold(Probe::Demakeup(&trainer.model.g), extractor, &test, fold, train.seed)?;
    let raw = evaluate_fold(Probe::Raw, extractor, &test, fold, train.seed)?;
    Ok(FoldRun {
        fold,
        trainer,
        log,
        demakeup,
        raw,
    })
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start {jobs} worker threads: {e}")))
}

#[derive(Clone, Debug)]
pub struct CrossValidation {
    pub demakeup: EvalReport,
    pub raw: EvalReport,
    pub runs: Vec<FoldRun>,
}

/// Five-fold cross-validation with `jobs` folds in flight.
pub fn cross_validate(
    dataset: &Dataset,
    extractor: &FeatureExtractor<f32>,
    model: &ModelConfig,
    train: &TrainConfig,
    jobs: usize,
) -> Result<CrossValidation> {
    let runs: Vec<FoldRun> = pool(jobs)?.install(|| {
        (0..FOLDS)
            .into_par_iter()
            .map(|k| run_fold(dataset, extractor, model, train, k))
            .collect::<Result<_>>()
    })?;
    Ok(CrossValidation {
        demakeup: EvalReport {
            label: train.ablation.label(),
            folds: runs.iter().map(|r| r.demakeup.clone()).collect(),
        },
        raw: EvalReport {
            label: "raw".into(),
            folds: runs.iter().map(|r| r.raw.clone()).collect(),
        },
        runs,
    })
}

/// One ablation configuration.
#[derive(Clone, Debug)]
pub struct AblationRow {
    pub ablation: Ablation,
    pub report: EvalReport,
    /// Per-fold training logs.
    pub logs: Vec<Vec<LossReport>>,
}

/// Trains the full model and the four single-term ablations on every fold,
/// all from the same seeds.
pub fn run_ablation(
    dataset: &Dataset,
    extractor: &FeatureExtractor<f32>,
    model: &ModelConfig,
    base: &TrainConfig,
    jobs: usize,
) -> Result<Vec<AblationRow>> {
    let tasks: Vec<(Ablation, usize)> = Ablation::variants()
        .into_iter()
        .flat_map(|a| (0..FOLDS).map(move |k| (a, k)))
        .collect();
    let results: Vec<(FoldEval, Vec<LossReport>)> = pool(jobs)?.install(|| {
        tasks
            .par_iter()
            .map(|&(a, k)| {
                let cfg = TrainConfig {
                    ablation: a,
                    ..base.clone()
                };
                let (trainer, log) = train_fold(dataset, extractor, model, &cfg, k)?;
                let test = dataset.test_pairs(k);
                let e = evaluate_fold(Probe::Demakeup(&trainer.model.g), extractor, &test, k, base.seed)?;
                Ok((e, log))
            })
            .collect::<Result<_>>()
    })?;
    let mut rows = Vec::new();
    for (chunk, a) in results.chunks(FOLDS).zip(Ablation::variants()) {
        rows.push(AblationRow {
            ablation: a,
            report: EvalReport {
                label: a.label(),
                folds: chunk.iter().map(|(e, _)| e.clone()).collect(),
            },
            logs: chunk.iter().map(|(_, l)| l.clone()).collect(),
        });
    }
    Ok(rows)
}

/// Folds the rows of several seeded repetitions into one row per
/// configuration; each merged report holds every repetition's folds.
pub fn merge_repeats(reps: &[Vec<AblationRow>]) -> Vec<AblationRow> {
    let mut merged: Vec<AblationRow> = Vec::new();
    for rows in reps {
        for row in rows {
            match merged.iter_mut().find(|m| m.ablation == row.ablation) {
                Some(m) => {
                    m.report.folds.extend(row.report.folds.iter().cloned());
                    m.logs.extend(row.logs.iter().cloned());
                }
                None => merged.push(row.clone()),
            }
        }
    }
    merged
}

/// 1-based position of `label` counted from the worst mean rank-1: one plus
/// the number of configurations strictly below it. Ties share the better
/// (lower) position.
pub fn position_from_worst(rows: &[AblationRow], label: &str) -> Option<usize> {
    let target = rows.iter().find(|r| r.report.label == label)?.report.mean_rank1();
    Some(1 + rows.iter().filter(|r| r.report.mean_rank1() < target).count())
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

/// `config,rank1,tpr_fpr001,tpr_fpr01`, one row per configuration.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("config,rank1,tpr_fpr001,tpr_fpr01\n");
    for r in rows {
        writeln!(
            s,
            "{},{:.6},{},{}",
            r.report.label,
            r.report.mean_rank1(),
            cell(r.report.mean_tpr(0)),
            cell(r.report.mean_tpr(1))
        )
        .unwrap();
    }
    s
}
