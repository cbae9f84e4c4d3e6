use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use twinfuse::config::{load_json, to_pretty_json, Modalities, RunConfig, SynthConfig};
use twinfuse::pipeline::{self, FEATURES_DIR, FUSED_DIR, SCORES_DIR, TRUTH_FILE};
use twinfuse::report::write_report;
use twinfuse::synth::generate_synthetic;
use twinfuse::{Error, Result};

/// Twin identification by fused voice and ear scores.
#[derive(Parser)]
#[command(name = "twinfuse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic twin dataset.
    Synth(SynthArgs),
    /// Extract MFCC and HOG features into <out>/features.
    Extract(RunArgs),
    /// Score probes from stored features into <out>/scores.
    Score(RunArgs),
    /// Normalize and fuse stored scores into <out>/fused.
    Fuse(RunArgs),
    /// Evaluate stored scores and write the report.
    Eval(RunArgs),
    /// Run the whole pipeline.
    Run(RunArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// JSON synthesis config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    twin_correlation: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Print the effective config and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Deep ear embedding table (CSV).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fail instead of dropping scorers with missing inputs.
    #[arg(long)]
    strict: bool,
    #[arg(long, value_enum)]
    modality: Option<Modalities>,
    /// Print the effective config and exit.
    #[arg(long)]
    print_config: bool,
}

impl SynthArgs {
    fn resolve(&self) -> Result<SynthConfig> {
        let mut cfg: SynthConfig = match &self.config {
            Some(p) => load_json(p)?,
            None => SynthConfig::default(),
        };
        if let Some(n) = self.pairs {
            cfg.n_pairs = n;
        }
        if let Some(r) = self.twin_correlation {
            cfg.twin_correlation = r;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg: RunConfig = match &self.config {
            Some(p) => load_json(p)?,
            None => RunConfig::default(),
        };
        if let Some(m) = &self.manifest {
            cfg.manifest = Some(m.clone());
        }
        if let Some(e) = &self.embeddings {
            cfg.embeddings = Some(e.clone());
        }
        if let Some(s) = self.seed {
            cfg.lstm.seed = s;
        }
        if self.strict {
            cfg.strict = true;
        }
        if let Some(m) = self.modality {
            cfg.modality = m;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = Some(o.clone());
        }
        Ok(cfg)
    }
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    cfg.out_dir
        .as_deref()
        .ok_or_else(|| Error::Config("no output directory given (--out)".into()))
}

fn synth(args: &SynthArgs) -> Result<()> {
    let cfg = args.resolve()?;
    if args.print_config {
        print!("{}", to_pretty_json(&cfg));
        return Ok(());
    }
    let out = args
        .out
        .as_deref()
        .ok_or_else(|| Error::Config("no output directory given (--out)".into()))?;
    let o = generate_synthetic(&cfg, out)?;
    println!("{}", o.manifest.display());
    Ok(())
}

fn stage(cmd: &Command, args: &RunArgs) -> Result<()> {
    let cfg = args.resolve()?;
    if args.print_config {
        print!("{}", to_pretty_json(&cfg));
        return Ok(());
    }
    cfg.validate()?;
    let out = out_dir(&cfg)?;
    match cmd {
        Command::Run(_) => {
            let o = pipeline::run_pipeline(&cfg, out)?;
            println!("{}", o.paths.json.display());
        }
        Command::Extract(_) => {
            let prep = pipeline::prepare(&cfg)?;
            let f = pipeline::extract_features(&prep, &cfg)?;
            pipeline::write_features(&out.join(FEATURES_DIR), &f)?;
        }
        Command::Score(_) => {
            let prep = pipeline::prepare(&cfg)?;
            let f = pipeline::read_features(&out.join(FEATURES_DIR), &prep)?;
            let s = pipeline::compute_scores(&prep, &f, &cfg)?;
            pipeline::write_scores(&out.join(SCORES_DIR), &s)?;
        }
        Command::Fuse(_) => {
            let leaves = pipeline::read_scores(&out.join(SCORES_DIR), &cfg.fusion)?;
            let (nodes, _) = pipeline::fuse_scores(&cfg, &leaves)?;
            pipeline::write_fused(&out.join(FUSED_DIR), &nodes)?;
        }
        Command::Eval(_) => {
            let prep = pipeline::prepare(&cfg)?;
            let leaves = pipeline::read_scores(&out.join(SCORES_DIR), &cfg.fusion)?;
            let truth = pipeline::read_truth(&out.join(SCORES_DIR).join(TRUTH_FILE))?;
            let (mut nodes, dropped) = pipeline::fuse_scores(&cfg, &leaves)?;
            pipeline::read_fused(&out.join(FUSED_DIR), &mut nodes)?;
            let report = pipeline::build_report(&cfg, &prep, dropped, &nodes, &leaves, &truth)?;
            let paths = write_report(&report, out)?;
            pipeline::log_report(&report);
            println!("{}", paths.json.display());
        }
        Command::Synth(_) => unreachable!("handled separately"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Extract(a) | Command::Score(a) | Command::Fuse(a) | Command::Eval(a) | Command::Run(a) => {
            stage(&cli.command, a)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
