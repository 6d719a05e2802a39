use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fba2d_core::Shape;
use fba2d_harness::config::{parse_size, parse_thresholds, OracleSpec, RunConfig};
use fba2d_harness::dataset::{load_dataset, write_dataset, Generator};
use fba2d_harness::pipeline::{self, AttackContext};
use fba2d_harness::{bench, Result};
use log::info;

#[derive(Debug, Parser)]
#[command(name = "fba2d", version, about = "Frequency-domain hard-label attacks on real-vs-generated image detectors")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `freq-energy` or an http(s) endpoint.
    #[arg(long, global = true)]
    oracle: Option<String>,
    /// Per-sample attack query budget.
    #[arg(long, global = true)]
    queries: Option<u64>,
    /// Comma-separated, e.g. `0.1,0.05,0.01`.
    #[arg(long = "rmse-thresholds", global = true)]
    rmse_thresholds: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic labeled PNG dataset and its manifest.
    GenDataset {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        n_per_class: Option<usize>,
        /// HxW or HxWxC.
        #[arg(long)]
        size: Option<String>,
    },
    /// Fit the logistic surrogate and write it as an FBAS file.
    TrainSurrogate {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attack every sample of a dataset.
    Attack {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip soup initialization and start from the target pool.
        #[arg(long)]
        no_soup: bool,
        #[arg(long)]
        surrogate: Option<PathBuf>,
    },
    /// Summarize an attack output directory.
    Bench {
        /// Directory written by `attack`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Where summaries go; defaults to the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-step query curves.
        #[arg(long)]
        curves: bool,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(o) = &cli.oracle {
        cfg.oracle = OracleSpec::parse_flag(o)?;
    }
    if let Some(q) = cli.queries {
        cfg.attack.max_queries = q;
    }
    if let Some(t) = &cli.rmse_thresholds {
        cfg.thresholds = parse_thresholds(t)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn labeled(samples: &[fba2d_harness::dataset::Sample]) -> Vec<(fba2d_core::ImageTensor, fba2d_core::Label)> {
    samples.iter().map(|s| (s.image.clone(), s.label)).collect()
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::GenDataset { out, n_per_class, size } => {
            let out = out.unwrap_or_else(|| cfg.dataset.path.clone());
            let (h, w, c) = match size {
                Some(s) => parse_size(&s)?,
                None => cfg.dataset.size,
            };
            let n = n_per_class.unwrap_or(cfg.dataset.n_per_class);
            let generator = Generator::new(Shape::new(h, w, c)?, cfg.dataset.generator.clone())?;
            let samples = generator.generate(n, cfg.seed)?;
            let manifest = write_dataset(&out, &samples)?;
            info!("wrote {} images to {}", manifest.len(), out.display());
        }
        Command::TrainSurrogate { dataset, out } => {
            let dataset = dataset.unwrap_or_else(|| cfg.dataset.path.clone());
            let samples = load_dataset(&dataset)?;
            let (model, acc) = pipeline::train_surrogate(&labeled(&samples), &cfg.surrogate)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(&out, model.to_file().to_bytes())?;
            info!("surrogate trained to {acc:.3} accuracy, written to {}", out.display());
        }
        Command::Attack { dataset, out, no_soup, surrogate } => {
            if no_soup {
                cfg.soup.enabled = false;
            }
            if surrogate.is_some() {
                cfg.surrogate.path = surrogate;
            }
            let dataset = dataset.unwrap_or_else(|| cfg.dataset.path.clone());
            let out = out.unwrap_or_else(|| cfg.output.clone());
            attack(&cfg, &dataset, &out)?;
        }
        Command::Bench { input, out, curves } => {
            let input = input.unwrap_or_else(|| cfg.output.clone());
            let out = out.unwrap_or_else(|| input.clone());
            let reports = pipeline::read_reports(&input)?;
            let summary = bench::summarize(&reports, &cfg.thresholds)?;
            bench::write_summary(&out, summary.as_ref())?;
            if curves {
                std::fs::write(out.join(bench::CURVES_CSV), bench::curves_csv(&input, &reports)?)?;
            }
            info!("summarized {} samples into {}", reports.samples.len(), out.display());
        }
    }
    Ok(())
}

fn attack(cfg: &RunConfig, dataset: &Path, out: &Path) -> Result<()> {
    let samples = load_dataset(dataset)?;
    let Some(shape) = samples.first().map(|s| s.image.shape()) else {
        pipeline::write_outcomes(out, &[])?;
        info!("dataset is empty; wrote an empty report");
        return Ok(());
    };
    let oracle = cfg.oracle.build(shape)?;
    let surrogate = if cfg.soup.enabled {
        Some(match &cfg.surrogate.path {
            Some(p) => pipeline::load_surrogate(p, &cfg.surrogate, shape)?,
            None => {
                info!("no surrogate file configured; training one on the dataset");
                pipeline::train_surrogate(&labeled(&samples), &cfg.surrogate)?.0
            }
        })
    } else {
        None
    };
    let ctx = AttackContext {
        config: cfg,
        oracle: oracle.as_ref(),
        surrogate: surrogate.as_ref(),
        samples: &samples,
    };
    let outcomes = ctx.run()?;
    pipeline::write_outcomes(out, &outcomes)?;
    info!("{} oracle queries in total", oracle.total_queries());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FBA2D_LOG", "info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
