use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rilqr::experiment::{bench_qr_update, run_grid, GridResult, Methods};
use rilqr::plant::generate_similar_record;
use rilqr::{ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "rilqr", version, about = "Compressed data-driven receding-horizon LQR experiments")]
struct Cli {
    /// TOML config; defaults give the reference setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replicas per case.
    #[arg(long, global = true)]
    seeds: Option<usize>,
    /// Override a config key, e.g. `--set noise_variance=0.02`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output root directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the historical similar-plant record as CSV.
    GenerateSimilar,
    /// Closed-loop RiLQR replicas.
    RunRilqr,
    /// Explore/exploit baseline over the variance grid.
    RunMlqr,
    /// Both controllers over the variance grid.
    Table2,
    /// Time the rank-one QR update across problem sizes.
    BenchQrUpdate {
        #[arg(long, value_delimiter = ',', default_value = "20,40,80,160")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 2000)]
        updates: usize,
    },
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let mut pairs = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        pairs.push(format!("seed={seed}"));
    }
    if let Some(seeds) = cli.seeds {
        pairs.push(format!("seeds={seeds}"));
    }
    if let Some(out) = &cli.out {
        pairs.push(format!("out_dir={:?}", out.display().to_string()));
    }
    cfg = cfg.with_overrides(&pairs)?;
    Ok(cfg)
}

fn report(res: &GridResult) -> Result<bool> {
    let dir = res.write(&res.config.out_dir)?;
    print!("{}", res.table_csv()?);
    println!("results written to {}", dir.display());
    let failures = res.failures();
    if failures > 0 {
        eprintln!("{failures} replica(s) failed; see replicas.csv");
    }
    Ok(failures == 0)
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = load(&cli)?;
    match cli.command {
        Command::GenerateSimilar => {
            let rec = generate_similar_record(
                &cfg.similar()?,
                cfg.record_length,
                cfg.record_input_variance,
                cfg.seed,
            )?;
            let dir = PathBuf::from(&cfg.out_dir);
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("similar_record.csv");
            rec.write_csv_file(&path)?;
            println!("{} samples written to {}", rec.len(), path.display());
            Ok(true)
        }
        Command::RunRilqr => {
            let mut cfg = cfg;
            cfg.explore_variances.truncate(1);
            report(&run_grid(&cfg, Methods::RilqrOnly)?)
        }
        Command::RunMlqr => report(&run_grid(&cfg, Methods::MlqrOnly)?),
        Command::Table2 => report(&run_grid(&cfg, Methods::Both)?),
        Command::BenchQrUpdate { sizes, updates } => {
            let rep = bench_qr_update(&sizes, updates, cfg.oversampling, cfg.seed)?;
            println!("{}", serde_json::to_string_pretty(&rep)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
