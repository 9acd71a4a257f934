use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sdcn_cli::config::{ConfigLayer, ExperimentConfig};
use sdcn_cli::dataset::save_dataset;
use sdcn_cli::experiment::{evaluate_files, run_experiment, run_pretrain, sweep, SweepKind};
use sdcn_cli::probe::run_probes;
use sdcn_cli::synth::{make_synthetic, SynthKind};
use sdcn_cli::Result;

#[derive(Parser)]
#[command(name = "sdcn", version, about = "Structural deep clustering experiments")]
struct Cli {
    /// Flat key = value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// full, no-delivery, mlp or q-output.
    #[arg(long, global = true)]
    variant: Option<String>,
    /// Dataset directory (features.csv, optional labels.txt and edges.txt).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain the autoencoder and write pretrained.bin.
    Pretrain,
    /// Pretrain (or load), train jointly and write the run reports.
    Train,
    /// Train across a grid: epsilon, knn_k or depth.
    Sweep { kind: SweepKind },
    /// Randomized checks of the propagation identities.
    Probe,
    /// Write a synthetic dataset directory.
    Synth { kind: SynthKind },
    /// Score a predicted label file against ground truth.
    Eval { pred: PathBuf, truth: PathBuf },
}

impl Cli {
    fn flags(&self) -> Result<ConfigLayer> {
        let mut layer = ConfigLayer::new();
        for pair in &self.set {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| sdcn_cli::CliError::Config(format!("--set expects key=value, got {pair:?}")))?;
            layer.set(k.trim(), v.trim())?;
        }
        if let Some(seed) = self.seed {
            layer.set("seed", seed.to_string())?;
        }
        if let Some(out) = &self.out {
            layer.set("out", out.display().to_string())?;
        }
        if let Some(v) = &self.variant {
            layer.set("variant", v.clone())?;
        }
        if let Some(d) = &self.dataset {
            layer.set("dataset", d.display().to_string())?;
        }
        Ok(layer)
    }

    fn experiment(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::load(self.config.as_deref(), &self.flags()?)
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Pretrain => {
            let path = run_pretrain(&cli.experiment()?)?;
            println!("wrote {}", path.display());
        }
        Command::Train => {
            let config = cli.experiment()?;
            let summary = run_experiment(&config)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Sweep { kind } => {
            let table = sweep(*kind, &cli.experiment()?)?;
            print!("{}", table.to_tsv());
        }
        Command::Probe => {
            let report = run_probes(cli.seed.unwrap_or(0))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Synth { kind } => {
            let config = cli.experiment()?;
            let params = match &config.data {
                Some(sdcn_cli::config::DataSource::Synthetic { params, .. }) => params.clone(),
                _ => Default::default(),
            };
            let bundle = make_synthetic(*kind, &params, cli.seed.unwrap_or(0))?;
            save_dataset(&config.out, &bundle)?;
            println!("wrote {} samples to {}", bundle.n_samples(), config.out.display());
        }
        Command::Eval { pred, truth } => {
            let scores = evaluate_files(pred, truth)?;
            println!("{}", serde_json::to_string_pretty(&scores)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
