use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use blan_core::config::FOLDS;
use blan_core::gradcheck::{loss_gradient_suite, LOSS_NAMES, TOLERANCE};
use blan_core::losses::{LossReport, LossWeights};
use blan_core::net::{BlanModel, Checkpoint, ExtractorConfig, FeatureExtractor, ModelConfig};
use blan_core::synth::{make_dataset, read_image, write_image, Dataset, DatasetSpec};
use blan_autograd::Tensor;
use blan_core::train::benchmark::{ablation_csv, fold_seed, merge_repeats, position_from_worst, run_ablation};
use blan_core::train::eval::evaluate_fold;
use blan_core::train::{
    pretrain_feature_extractor, remove_makeup as demakeup, verify_pair, Ablation, EvalReport, PretrainConfig, Probe,
    TrainConfig, Trainer,
};
use blan_core::Error;

use crate::{AblateArgs, ExtractorSource, GradcheckArgs, PretrainArgs, RemoveArgs, SynthArgs, TrainArgs, VerifyArgs};

/// Invalid invocation detected by the front end itself.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// Worker-thread cap from `BLAN_THREADS`, if set.
pub fn thread_cap() -> Option<usize> {
    let v = std::env::var("BLAN_THREADS").ok()?;
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => Some(n),
        _ => {
            log::warn!("ignoring BLAN_THREADS={v:?}; expected a positive integer");
            None
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

fn model_config(data: &Dataset, k: usize) -> Result<ModelConfig> {
    let mut cfg = ModelConfig::desk_at(data.spec.size);
    cfg.patch.k = k;
    cfg.validate()?;
    Ok(cfg)
}

fn load_extractor(src: &ExtractorSource, cfg: &ModelConfig, seed: u64) -> Result<FeatureExtractor<f32>> {
    if let Some(path) = &src.extractor {
        let f = FeatureExtractor::from_checkpoint(&Checkpoint::load(path)?)
            .with_context(|| format!("loading extractor {}", path.display()))?;
        if f.config() != &cfg.extractor {
            return Err(Usage(format!(
                "extractor {} expects {}x{} images, dataset has {}x{}",
                path.display(),
                f.config().size,
                f.config().size,
                cfg.extractor.size,
                cfg.extractor.size
            ))
            .into());
        }
        return Ok(f);
    }
    let mut pc = PretrainConfig::new(cfg.extractor.clone(), seed);
    pc.identities = src.pretrain_identities;
    log::info!("pretraining the feature extractor on {} identities", pc.identities);
    let (f, report) = pretrain_feature_extractor(&pc)?;
    log::info!("extractor nearest-neighbour accuracy {:.3}", report.nn_accuracy);
    Ok(f)
}

pub fn synth(a: SynthArgs) -> Result<u8> {
    let mut spec = DatasetSpec::new(a.identities, a.seed, a.size);
    spec.makeup_strength = a.makeup_strength;
    let data = make_dataset(&spec)?;
    data.save(&a.out)?;
    println!(
        "wrote {} pairs ({} images, {}x{}) to {}",
        data.pairs.len(),
        2 * data.pairs.len(),
        a.size,
        a.size,
        a.out.display()
    );
    println!(
        "seed {}, makeup strength {}, fold sizes {:?}",
        a.seed,
        a.makeup_strength,
        data.folds.sizes()
    );
    Ok(0)
}

pub fn train(a: TrainArgs) -> Result<u8> {
    if a.fold >= FOLDS {
        return Err(Usage(format!("--fold {} outside 0..{FOLDS}", a.fold)).into());
    }
    let data = Dataset::load(&a.data)?;
    let cfg = model_config(&data, a.k)?;
    let train_cfg = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch_size,
        max_iterations: a.iters,
        weights: LossWeights {
            lambda1: a.lambda1,
            lambda2: a.lambda2,
            lambda3: a.lambda3,
            w_edge: a.w_edge,
            w_sym: a.w_sym,
        },
        seed: fold_seed(a.seed, a.fold),
        ablation: Ablation::parse(&a.ablate)?,
        mirror_augment: !a.no_mirror,
    };
    train_cfg.validate()?;
    println!(
        "generator parameters: {} at {}x{}; {} at the 128x128 reference configuration",
        cfg.generator.param_count(),
        cfg.generator.size,
        cfg.generator.size,
        ModelConfig::reference().generator.param_count()
    );
    let extractor = load_extractor(&a.extractor, &cfg, a.seed)?;
    let model = BlanModel::new(&cfg, extractor, train_cfg.seed)?;
    let mut trainer = Trainer::new(model, train_cfg)?;

    let log_path = a.log.clone().unwrap_or_else(|| a.out.with_extension("csv"));
    let file = File::create(&log_path).map_err(|source| Error::Io {
        path: log_path.clone(),
        source,
    })?;
    let mut log = BufWriter::new(file);
    writeln!(log, "{}", LossReport::CSV_HEADER)?;
    let pairs = data.train_pairs(a.fold);
    let mut last = None;
    let outcome = trainer.run(&pairs, |it, r| {
        writeln!(log, "{}", r.csv_row(it)).map_err(|source| Error::Io {
            path: log_path.clone(),
            source,
        })?;
        if (it + 1) % 100 == 0 {
            log::info!("iteration {}: {r}", it + 1);
        }
        last = Some(*r);
        Ok(())
    });
    log.flush()?;
    outcome?;

    trainer.to_checkpoint().save(&a.out)?;
    if let Some(r) = last {
        println!("trained {} iterations; final {r}", trainer.iteration());
    }
    println!("checkpoint {}; log {}", a.out.display(), log_path.display());
    Ok(0)
}

fn load_model(path: &Path) -> Result<BlanModel<f32>> {
    BlanModel::from_checkpoint(&Checkpoint::load(path)?).with_context(|| format!("loading {}", path.display()))
}

fn check_size(model: &BlanModel<f32>, image: &Tensor<f32>, path: &Path) -> Result<()> {
    let s = model.g.config().size;
    let (h, w) = (image.shape()[1], image.shape()[2]);
    if h != s || w != s {
        return Err(Usage(format!("{} is {w}x{h} but the checkpoint expects {s}x{s}", path.display())).into());
    }
    Ok(())
}

pub fn remove_makeup(a: RemoveArgs) -> Result<u8> {
    let model = load_model(&a.ckpt)?;
    let image = read_image(&a.input)?;
    check_size(&model, &image, &a.input)?;
    let out = demakeup(&model.g, &image)?;
    write_image(&a.out, &out)?;
    println!("wrote {}", a.out.display());
    Ok(0)
}

pub fn verify(a: VerifyArgs) -> Result<u8> {
    let model = load_model(&a.ckpt)?;
    if let (Some(probe), Some(gallery)) = (&a.probe, &a.gallery) {
        let (p, g) = (read_image(probe)?, read_image(gallery)?);
        check_size(&model, &p, probe)?;
        check_size(&model, &g, gallery)?;
        let (score, same) = verify_pair(&model.g, &model.f, &p, &g, a.threshold)?;
        println!("score {score:.6} {}", if same { "same" } else { "different" });
        return Ok(0);
    }
    let dir = a.data.as_ref().ok_or_else(|| Usage("--data or --probe/--gallery required".into()))?;
    if a.fold >= FOLDS {
        return Err(Usage(format!("--fold {} outside 0..{FOLDS}", a.fold)).into());
    }
    let data = Dataset::load(dir)?;
    if data.spec.size != model.g.config().size {
        return Err(Usage(format!(
            "dataset images are {0}x{0} but the checkpoint expects {1}x{1}",
            data.spec.size,
            model.g.config().size
        ))
        .into());
    }
    let probe = if a.raw { Probe::Raw } else { Probe::Demakeup(&model.g) };
    let fold = evaluate_fold(probe, &model.f, &data.test_pairs(a.fold), a.fold, a.seed)?;
    let report = EvalReport {
        label: if a.raw { "raw" } else { "demakeup" }.into(),
        folds: vec![fold],
    };
    let csv = report.to_csv();
    write_text(&a.out, &csv)?;
    print!("{csv}");
    Ok(0)
}

pub fn ablate(a: AblateArgs, cap: Option<usize>) -> Result<u8> {
    if a.repeats == 0 {
        return Err(Usage("--repeats must be at least 1".into()).into());
    }
    let data = Dataset::load(&a.data)?;
    let cfg = model_config(&data, blan_core::config::PATCH_GRID)?;
    let extractor = load_extractor(&a.extractor, &cfg, a.seed)?;
    let jobs = cap.map_or(a.jobs, |c| a.jobs.min(c)).max(1);
    let mut reps = Vec::new();
    for r in 0..a.repeats {
        let base = TrainConfig {
            max_iterations: a.iters,
            seed: a.seed + r,
            ..TrainConfig::default()
        };
        let rows = run_ablation(&data, &extractor, &cfg, &base, jobs)?;
        for row in &rows {
            log::info!("seed {}: {} rank-1 {:.4}", base.seed, row.report.label, row.report.mean_rank1());
        }
        reps.push(rows);
    }
    let rows = merge_repeats(&reps);
    let csv = ablation_csv(&rows);
    write_text(&a.out, &csv)?;
    print!("{csv}");
    if let Some(p) = position_from_worst(&rows, "no_consf") {
        log::info!("no_consf is at position {p} of {} counted from the worst", rows.len());
    }
    Ok(0)
}

pub fn gradcheck(a: GradcheckArgs) -> Result<u8> {
    if let Some(name) = &a.corrupt {
        if !LOSS_NAMES.contains(&name.as_str()) {
            return Err(Usage(format!("--corrupt {name:?} is not one of {}", LOSS_NAMES.join(", "))).into());
        }
    }
    let checks = loss_gradient_suite(a.seed, a.corrupt.as_deref())?;
    let mut failed = Vec::new();
    for c in &checks {
        println!(
            "{:<22} max_rel_error {:.3e}  checked {:>3}  skipped {:>2}  {}",
            c.name,
            c.max_rel_error,
            c.checked,
            c.skipped,
            if c.passed() { "ok" } else { "FAIL" }
        );
        if !c.passed() {
            failed.push(c.name);
        }
    }
    if failed.is_empty() {
        println!("all {} losses within {TOLERANCE:e}", checks.len());
        Ok(0)
    } else {
        eprintln!("gradient check failed for: {}", failed.join(", "));
        Ok(1)
    }
}

pub fn pretrain(a: PretrainArgs) -> Result<u8> {
    let mut extractor = ExtractorConfig::desk();
    extractor.size = a.size;
    let mut pc = PretrainConfig::new(extractor, a.seed);
    pc.identities = a.identities;
    let (f, report) = pretrain_feature_extractor(&pc)?;
    f.to_checkpoint().save(&a.out)?;
    println!(
        "nearest-neighbour accuracy {:.4} on held-out views; final loss {:.4}; wrote {}",
        report.nn_accuracy,
        report.final_loss,
        a.out.display()
    );
    Ok(0)
}
