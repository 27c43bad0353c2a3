//! `blan`: synthesize paired faces, train the makeup remover, verify and ablate.

mod commands;
mod config_file;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

use blan_core::config::{
    BATCH_SIZE, EDGE_WEIGHT, EXTRACTOR_POOL_IDENTITIES, LAMBDA_ADV_FEATURE, LAMBDA_ADV_PIXEL, LAMBDA_CONS_FEATURE,
    LEARNING_RATE, PATCH_GRID, SYMMETRY_WEIGHT, TRAIN_ITERATIONS,
};

#[derive(Parser, Debug)]
#[command(
    name = "blan",
    version,
    about = "Makeup removal with pixel- and feature-level adversaries",
    args_override_self = true,
    after_help = "BLAN_THREADS caps worker threads. Exit codes: 0 ok, 1 gradient check failed, \
                  2 invalid input, 3 numerical failure."
)]
struct Cli {
    /// Flat key = value file of this subcommand's flags; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a paired makeup / non-makeup dataset with a five-fold identity split.
    Synth(SynthArgs),
    /// Train on four folds and write a checkpoint plus a loss log.
    Train(TrainArgs),
    /// Run a trained generator on one PPM image.
    RemoveMakeup(RemoveArgs),
    /// Score a checkpoint on its held-out fold, or one probe/gallery pair.
    Verify(VerifyArgs),
    /// Train and score the full model and the four single-term ablations on every fold.
    Ablate(AblateArgs),
    /// Finite-difference check of every loss gradient in 64-bit.
    Gradcheck(GradcheckArgs),
    /// Pretrain the frozen feature extractor on a separate identity pool.
    PretrainExtractor(PretrainArgs),
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct SynthArgs {
    /// Number of identities, one pair each (at least 5).
    #[arg(long, default_value_t = 50)]
    identities: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Image side in pixels.
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Scale of the sampled makeup parameters, in [0, 2].
    #[arg(long, default_value_t = 1.0)]
    makeup_strength: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExtractorSource {
    /// Pretrained extractor checkpoint; pretrained from scratch when absent.
    #[arg(long)]
    extractor: Option<PathBuf>,
    /// Identities in the pretraining pool when no --extractor is given.
    #[arg(long, default_value_t = EXTRACTOR_POOL_IDENTITIES)]
    pretrain_identities: usize,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct TrainArgs {
    /// Dataset directory written by `synth`.
    #[arg(long)]
    data: PathBuf,
    /// Held-out fold, 0..5.
    #[arg(long, default_value_t = 0)]
    fold: usize,
    #[arg(long, default_value_t = TRAIN_ITERATIONS)]
    iters: usize,
    /// Adam step size for G, D_p and D_f.
    #[arg(long, default_value_t = LEARNING_RATE)]
    lr: f64,
    #[arg(long, default_value_t = BATCH_SIZE)]
    batch_size: usize,
    /// λ1, pixel-level adversarial weight.
    #[arg(long, default_value_t = LAMBDA_ADV_PIXEL)]
    lambda1: f64,
    /// λ2, feature reconstruction weight.
    #[arg(long, default_value_t = LAMBDA_CONS_FEATURE)]
    lambda2: f64,
    /// λ3, feature-level adversarial weight.
    #[arg(long, default_value_t = LAMBDA_ADV_FEATURE)]
    lambda3: f64,
    #[arg(long, default_value_t = EDGE_WEIGHT)]
    w_edge: f64,
    #[arg(long, default_value_t = SYMMETRY_WEIGHT)]
    w_sym: f64,
    /// Patch grid side of the pixel discriminator.
    #[arg(long, default_value_t = PATCH_GRID)]
    k: usize,
    /// Comma-separated terms to switch off: edg, sym, df, consf.
    #[arg(long, default_value = "")]
    ablate: String,
    /// Disable random left-right mirroring of training pairs.
    #[arg(long)]
    no_mirror: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    extractor: ExtractorSource,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// Loss log CSV [default: the checkpoint path with a .csv extension].
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct RemoveArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct VerifyArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset directory; scores the held-out identities of --fold.
    #[arg(long, required_unless_present = "probe")]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    fold: usize,
    /// Seed for the random negative pairs.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Score the makeup images directly instead of the generator's output.
    #[arg(long)]
    raw: bool,
    /// Report CSV.
    #[arg(long, default_value = "verify.csv")]
    out: PathBuf,
    /// Makeup-side image for a single pair.
    #[arg(long, requires = "gallery", conflicts_with = "data")]
    probe: Option<PathBuf>,
    /// Non-makeup image for a single pair.
    #[arg(long, requires = "probe")]
    gallery: Option<PathBuf>,
    /// Cosine score at or above which a pair is accepted.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = TRAIN_ITERATIONS)]
    iters: usize,
    /// First seed; repetition r uses seed + r.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Seeded repetitions averaged into each row.
    #[arg(long, default_value_t = 1)]
    repeats: u64,
    /// Training runs in flight (capped by BLAN_THREADS).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    extractor: ExtractorSource,
    /// Report CSV.
    #[arg(long, default_value = "ablation.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Double the backward pass of the named loss (harness self-test).
    #[arg(long, hide = true)]
    corrupt: Option<String>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct PretrainArgs {
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = EXTRACTOR_POOL_IDENTITIES)]
    identities: usize,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use blan_core::Error;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::NonFinite { .. } | Error::Pretrain { .. } => 3,
                _ => 2,
            };
        }
        if cause.downcast_ref::<commands::Usage>().is_some() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let args = match config_file::expand(std::env::args().collect(), &Cli::command()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    let threads = commands::thread_cap();
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not cap worker threads at {n}: {e}");
        }
    }
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::RemoveMakeup(a) => commands::remove_makeup(a),
        Command::Verify(a) => commands::verify(a),
        Command::Ablate(a) => commands::ablate(a, threads),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::PretrainExtractor(a) => commands::pretrain(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
