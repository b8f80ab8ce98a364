use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use poachmap::app;
use poachmap::config::Config;
use poachmap::{Error, FEATURE_NAMES};

/// Poaching-hotspot mapping from land-cover rasters and incident records.
#[derive(Debug, Parser)]
#[command(name = "poachmap", version)]
struct Cli {
    /// TOML config file; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Top-level seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Land-cover raster (ESRI ASCII grid).
    #[arg(long, global = true)]
    raster: Option<PathBuf>,
    /// Incident CSV.
    #[arg(long, global = true)]
    incidents: Option<PathBuf>,
    /// Model file for `heatmap` and `importance`.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the feature grid V and write features.csv.
    Featurize,
    /// Label V from incidents and write labels.csv.
    Label,
    /// Fit the configured model and write model.txt and scores.csv.
    Train {
        /// Grid-search the configured lattice on the validation split.
        #[arg(long)]
        grid_search: bool,
    },
    /// Score every cell of V and write heatmap.pgm and heatmap.csv.
    Heatmap {
        /// Render high probability light.
        #[arg(long)]
        invert: bool,
    },
    /// Permutation feature importance on the validation split.
    Importance,
    /// Generate a synthetic raster, incidents and ground truth.
    Synth,
    /// Run featurize, label, train, heatmap and importance, then write a manifest.
    Pipeline,
}

fn effective_config(cli: &Cli) -> Result<Config, Error> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(p) = &cli.raster {
        cfg.paths.raster = Some(p.clone());
    }
    if let Some(p) = &cli.incidents {
        cfg.paths.incidents = Some(p.clone());
    }
    if let Some(p) = &cli.model {
        cfg.paths.model = Some(p.clone());
    }
    match cli.command {
        Command::Train { grid_search: true } => cfg.model.grid_search = true,
        Command::Heatmap { invert: true } => cfg.heatmap.invert = true,
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = effective_config(cli)?;
    log::info!("effective config:\n{}", cfg.to_toml());
    match cli.command {
        Command::Featurize => {
            let v = app::cmd_featurize(&cfg)?;
            let (rows, cols) = v.dims();
            println!("feature grid {rows}x{cols} (g = {})", v.g());
            for (k, name) in FEATURE_NAMES.iter().enumerate() {
                let col: Vec<f64> = v.vectors().iter().map(|f| f.to_array()[k]).collect();
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
                println!("  {name:<4} mean {mean:>10.4}  min {lo:>10.4}  max {hi:>10.4}");
            }
        }
        Command::Label => {
            let set = app::cmd_label(&cfg)?;
            let stats = poachmap::labeling::label_stats(&set);
            println!("{} rows: {} positive, {} zero", set.len(), stats.positive, stats.zero);
        }
        Command::Train { .. } => {
            let (_, report) = app::cmd_train(&cfg)?;
            println!("{report}");
        }
        Command::Heatmap { .. } => {
            let p = app::cmd_heatmap(&cfg)?;
            let (rows, cols) = p.dims();
            println!("heatmap {rows}x{cols} written to {}", cfg.out.display());
        }
        Command::Importance => {
            let report = app::cmd_importance(&cfg)?;
            println!("{report}");
        }
        Command::Synth => {
            let s = app::cmd_synth(&cfg)?;
            println!(
                "{}x{} raster, {} incidents written to {}",
                s.landcover.n_rows(),
                s.landcover.n_cols(),
                s.incidents.len(),
                cfg.out.display()
            );
        }
        Command::Pipeline => {
            let manifest = app::cmd_pipeline(&cfg)?;
            print!("{}", manifest.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
