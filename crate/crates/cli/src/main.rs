//! `glomfuse` command-line pipeline.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use glomfuse::synthetic::Experiment;
use glomfuse::DSub;

use config::{PipelineConfig, SlideEntry};

#[derive(Parser, Debug)]
#[command(
    name = "glomfuse",
    version,
    about = "Glomerulus matching across serial sections and multi-stain feature ranking"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Pipeline config (JSON); paths inside are relative to its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Candidate search radius, µm.
    #[arg(long, global = true)]
    d_match: Option<f64>,
    /// Neighbour associations per match energy.
    #[arg(long, global = true)]
    n_neighbors: Option<usize>,
    /// Subgraph radius: `auto` or a value in µm.
    #[arg(long, global = true, value_parser = parse_d_sub)]
    d_sub: Option<DSub>,
}

fn parse_d_sub(s: &str) -> Result<DSub, String> {
    s.parse().map_err(|e: glomfuse::Error| e.to_string())
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ExperimentArg {
    Shift,
    Unpaired,
    Both,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Match landmarks between adjacent slides and chain the matches.
    Match {
        /// Landmark CSVs in stack order, instead of the config's slide list;
        /// slide ids are the file stems.
        #[arg(long, num_args = 2..)]
        landmarks: Vec<PathBuf>,
    },
    /// Run the synthetic shift and unpaired sweeps.
    Simulate {
        #[arg(long, value_enum, default_value = "both")]
        experiment: ExperimentArg,
        /// Repetitions per level.
        #[arg(long)]
        repetitions: Option<usize>,
        /// Also write per-repetition confusion counts.
        #[arg(long)]
        per_repetition: bool,
    },
    /// Score a match file against reference correspondences.
    Evaluate {
        #[arg(long)]
        predicted: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Also write the metrics JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Colour deconvolution of tile directories into cell maps.
    Deconvolve {
        /// Tile directory of a single slide, instead of the config's slide list.
        #[arg(long, requires = "slide")]
        tiles: Option<PathBuf>,
        #[arg(long)]
        slide: Option<String>,
        #[arg(long)]
        stain_config: Option<PathBuf>,
    },
    /// Build the feature matrix over complete chains.
    Features {
        /// Chain file; defaults to `<out-dir>/chains.tsv`.
        #[arg(long)]
        chain: Option<PathBuf>,
    },
    /// Rank chains by the leading principal component of their features.
    Rank {
        /// Feature matrix; defaults to `<out-dir>/features.csv`.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        chain: Option<PathBuf>,
        /// Histogram bins over [0, 1].
        #[arg(long)]
        bins: Option<usize>,
    },
}

fn resolve_config(global: &GlobalArgs, command: &Command) -> Result<PipelineConfig> {
    let mut cfg = match &global.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    cfg.synthetic.rng_seed = cfg.seed;
    if global.threads.is_some() {
        cfg.threads = global.threads;
    }
    if let Some(dir) = &global.out_dir {
        cfg.out_dir = dir.clone();
    }
    let params = match command {
        Command::Simulate { .. } => &mut cfg.synthetic.params,
        _ => &mut cfg.match_params,
    };
    if let Some(d) = global.d_match {
        params.d_match = d;
    }
    if let Some(n) = global.n_neighbors {
        params.n_neighbors = n;
    }
    if let Some(d) = global.d_sub {
        params.d_sub = d;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = resolve_config(&cli.global, &cli.command)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("cannot configure the thread pool")?;
    }
    match cli.command {
        Command::Match { landmarks } => {
            if !landmarks.is_empty() {
                cfg.slides = landmarks
                    .into_iter()
                    .map(|p| {
                        let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                        SlideEntry { id, landmarks: Some(p), cellmaps: None, tiles: None }
                    })
                    .collect();
            }
            commands::cmd_match(&cfg)
        }
        Command::Simulate { experiment, repetitions, per_repetition } => {
            if let Some(r) = repetitions {
                cfg.synthetic.n_repetitions = r;
            }
            let experiment = match experiment {
                ExperimentArg::Shift => Some(Experiment::Shift),
                ExperimentArg::Unpaired => Some(Experiment::Unpaired),
                ExperimentArg::Both => None,
            };
            commands::cmd_simulate(&cfg, experiment, per_repetition)
        }
        Command::Evaluate { predicted, truth, out } => commands::cmd_evaluate(&predicted, &truth, out.as_deref()),
        Command::Deconvolve { tiles, slide, stain_config } => {
            if let Some(p) = stain_config {
                cfg.stain_config = Some(p);
            }
            if let (Some(dir), Some(id)) = (tiles, slide) {
                cfg.slides = vec![SlideEntry { id, landmarks: None, cellmaps: None, tiles: Some(dir) }];
            }
            commands::cmd_deconvolve(&cfg)
        }
        Command::Features { chain } => commands::cmd_features(&cfg, chain.as_deref()),
        Command::Rank { features, chain, bins } => {
            let bins = bins.unwrap_or(cfg.histogram_bins);
            commands::cmd_rank(&cfg, features.as_deref(), chain.as_deref(), bins)
        }
    }
}

/// Error chain joined by `: `, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let s = cause.to_string();
        if !msg.contains(&s) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&s);
        }
    }
    msg
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}
