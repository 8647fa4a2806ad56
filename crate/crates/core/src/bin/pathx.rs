use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pathx_core::pipeline::{self, stages, PipelineConfig, StageOutcome, SynthConfig};
use pathx_core::{Error, Result};

#[derive(Parser)]
#[command(name = "pathx", version, about = "Deterministic pathomics pipeline")]
struct Cli {
    /// TOML config; defaults to `<out>/pathx.toml` when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; relative config paths resolve against it.
    #[arg(long, global = true, env = "PATHX_OUT", default_value = "pathx_out")]
    out: PathBuf,
    /// Worker threads (0 uses all cores). Results do not depend on it.
    #[arg(short = 'j', long = "jobs", global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic cohort with planted risk groups.
    Synth(SynthArgs),
    /// Score tiles and keep the best slice of each slide.
    Score,
    /// Encode best slices with the ViT.
    Extract,
    /// Train the autoencoder on the feature table.
    TrainAe,
    /// Write latent vectors for every case.
    Encode,
    /// Cluster, rank risk groups and run survival tests.
    Stratify {
        /// Number of groups; repeats allowed. Defaults to the config list.
        #[arg(long = "k")]
        k: Vec<usize>,
    },
    /// Train and evaluate the three classifiers.
    Classify,
    /// Attribute latent features to inputs and tile patches.
    Explain {
        /// Case to explain; repeats allowed.
        #[arg(long = "case")]
        cases: Vec<String>,
    },
    /// Run every stage from score to explain and write a manifest.
    Run,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 300)]
    n: usize,
    #[arg(long, default_value_t = 4.0)]
    separation: f64,
    #[arg(long, default_value_t = 0.2)]
    censoring_rate: f64,
    /// Comma-separated daily hazards, one per group.
    #[arg(long, value_delimiter = ',')]
    hazards: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1024)]
    feature_dim: usize,
    #[arg(long, default_value_t = 64)]
    tile_size: usize,
    #[arg(long, default_value_t = 2)]
    grid: usize,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let default_path = cli.out.join("pathx.toml");
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None if default_path.is_file() => PipelineConfig::load(&default_path)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(name: &str, out: &Path, outcome: &StageOutcome) {
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    println!("{name}: wrote {} file(s)", outcome.outputs.len());
    for p in &outcome.outputs {
        let rel = p.strip_prefix(out).unwrap_or(p);
        println!("  {}", rel.display());
    }
}

fn execute(cli: &Cli) -> Result<()> {
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    let out = cli.out.as_path();
    if let Command::Synth(a) = &cli.command {
        let cfg = SynthConfig {
            k: a.k,
            n: a.n,
            seed: cli.seed.unwrap_or(0),
            separation: a.separation,
            censoring_rate: a.censoring_rate,
            hazards: a.hazards.clone(),
            feature_dim: a.feature_dim,
            tile_size: a.tile_size,
            grid: a.grid,
        };
        let s = pipeline::synthesize(out, &cfg)?;
        println!(
            "synth: {} cases, {} events, hazards {:?} -> {}",
            s.cases,
            s.events,
            s.hazards,
            out.display()
        );
        return Ok(());
    }
    let cfg = load_config(cli)?.seeded();
    match &cli.command {
        Command::Synth(_) => unreachable!(),
        Command::Score => report("score", out, &stages::score(&cfg, out)?),
        Command::Extract => report("extract", out, &stages::extract(&cfg, out)?),
        Command::TrainAe => report("train-ae", out, &stages::train_ae(&cfg, out)?),
        Command::Encode => report("encode", out, &stages::encode(&cfg, out)?),
        Command::Stratify { k } => {
            let ks = if k.is_empty() { cfg.stratify.ks.clone() } else { k.clone() };
            for k in ks {
                let o = stages::stratify(&cfg, out, k)?;
                report(&format!("stratify k={k}"), out, &o);
                let summary = stages::stratify_dir(out, k).join("summary.txt");
                if let Ok(text) = std::fs::read_to_string(&summary) {
                    print!("{text}");
                }
            }
        }
        Command::Classify => report("classify", out, &stages::classify(&cfg, out)?),
        Command::Explain { cases } => {
            report("explain", out, &stages::explain(&cfg, out, Some(cases))?)
        }
        Command::Run => {
            let m = pipeline::run(&cfg, out)?;
            for s in &m.stages {
                for w in &s.warnings {
                    eprintln!("warning: {}: {w}", s.stage);
                }
                println!("{}: {} output(s) in {:.2}s", s.stage, s.outputs.len(), s.seconds);
            }
            println!("manifest: {}", out.join(pipeline::MANIFEST_FILE).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
