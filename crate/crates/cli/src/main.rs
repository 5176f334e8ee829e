use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use holosub::kv::{KvDoc, Section};

use holosub_cli::config::{Command, RunConfig};
use holosub_cli::error::{CliError, Result};
use holosub_cli::manifest::{RunManifest, RUN_MANIFEST_FILE};
use holosub_cli::commands;

#[derive(Parser)]
#[command(name = "holosub", version, about = "Subitizing experiments with an HRR loss")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Generate dataset variants as PGM files plus manifests.
    Gen(Common),
    /// Train a model and write a checkpoint and training log.
    Train(Common),
    /// Per-class accuracy of trained runs on the test variants.
    Eval(Common),
    /// Export vanilla-gradient saliency maps for a trained run.
    Saliency(Common),
    /// Check the HRR algebra: round trips, target range and retrieval.
    VsaBench(Common),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Config file or run manifest to start from.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Seed for initialization, dropout and shuffling (defaults to --seed).
    #[arg(long)]
    model_seed: Option<u64>,
    /// desk or full
    #[arg(long)]
    profile: Option<String>,
    /// hrr or ce
    #[arg(long)]
    loss: Option<String>,
    /// cnn or vit
    #[arg(long)]
    model: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Variant name, a comma-separated list, `all` or `eval`.
    #[arg(long)]
    variant: Option<String>,
    /// Dataset root written by `gen`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Training run directory (repeatable).
    #[arg(long = "run")]
    runs: Vec<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Learning-rate schedule such as `0:1e-3,100:1e-4`.
    #[arg(long)]
    lr: Option<String>,
    /// `adam`, `adam:b1:b2:eps`, `sgd` or `sgd:momentum`.
    #[arg(long)]
    optimizer: Option<String>,
    /// Stop training once every training image is classified correctly.
    #[arg(long)]
    stop_when_fit: bool,
    /// Comma-separated image indices for `saliency`.
    #[arg(long)]
    images: Option<String>,
    /// Trials per check for `vsa-bench`.
    #[arg(long)]
    trials: Option<usize>,
}

impl Common {
    fn flag_section(&self) -> Section {
        let mut s = Section::new("config");
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                s.set(k, v);
            }
        };
        put("seed", self.seed.map(|v| v.to_string()));
        put("model_seed", self.model_seed.map(|v| v.to_string()));
        put("profile", self.profile.clone());
        put("loss", self.loss.clone());
        put("model", self.model.clone());
        put("variant", self.variant.clone());
        put("data", self.data.as_ref().map(|p| p.display().to_string()));
        put("epochs", self.epochs.map(|v| v.to_string()));
        put("batch_size", self.batch_size.map(|v| v.to_string()));
        put("lr", self.lr.clone());
        put("optimizer", self.optimizer.clone());
        put("images", self.images.clone());
        put("trials", self.trials.map(|v| v.to_string()));
        if self.stop_when_fit {
            put("stop_when_fit", Some("true".into()));
        }
        if !self.runs.is_empty() {
            let runs: Vec<String> = self.runs.iter().map(|p| p.display().to_string()).collect();
            put("runs", Some(runs.join(",")));
        }
        s
    }
}

fn run(cmd: Command, args: &Common, argv: Vec<String>) -> Result<()> {
    let file = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(CliError::io(p.display()))?;
            Some(KvDoc::parse(&text)?)
        }
        None => None,
    };
    let cfg = RunConfig::resolve(cmd, file.as_ref(), &args.flag_section())?;
    std::fs::create_dir_all(&args.out).map_err(CliError::io(args.out.display()))?;
    let mut manifest = RunManifest::new(argv, cfg);
    let outputs = commands::dispatch(&mut manifest, &args.out)?;
    manifest.record_outputs(&args.out, &outputs)?;
    manifest.write(&args.out)?;
    println!("run manifest: {}", args.out.join(RUN_MANIFEST_FILE).display());
    println!("content digest: {}", manifest.content_digest());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let (cmd, args) = match &cli.command {
        Sub::Gen(a) => (Command::Gen, a),
        Sub::Train(a) => (Command::Train, a),
        Sub::Eval(a) => (Command::Eval, a),
        Sub::Saliency(a) => (Command::Saliency, a),
        Sub::VsaBench(a) => (Command::VsaBench, a),
    };
    match run(cmd, args, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
