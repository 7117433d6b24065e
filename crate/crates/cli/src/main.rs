use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cvqng::gradcheck::gradcheck;
use cvqng::harness::{self, emit, ExperimentConfig, OutputFormat, DEFAULT_RATES};
use cvqng::optim::OptimizerKind;
use cvqng::targets::{hex_gkp_target, number_target, write_target, HexGkpSpec};

/// Natural-gradient training of single-mode photonic circuits.
#[derive(Parser)]
#[command(name = "cvqng", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration for every seed and write the traces.
    Run {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Output format; defaults to the extension of the output path.
        #[arg(long)]
        format: Option<String>,
    },
    /// Learning-rate sweep over optimizers × rates × seeds.
    Sweep {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Comma-separated learning rates.
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
        /// Comma-separated optimizers (sgd, adam, ngd).
        #[arg(long, value_delimiter = ',', default_value = "sgd,adam,ngd")]
        optimizers: Vec<String>,
        /// Also write every trace as CSV here.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Target-state utilities.
    Target {
        #[command(subcommand)]
        command: TargetCommand,
    },
    /// Compare analytic derivatives with finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 3)]
        layers: usize,
        #[arg(long, default_value_t = 20)]
        cutoff: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum TargetCommand {
    /// Write a Hex-GKP codeword in the target file format.
    GenHexgkp {
        #[arg(long, default_value_t = 2)]
        d: u32,
        #[arg(long, default_value_t = 1)]
        mu: u32,
        #[arg(long, default_value_t = 0.3)]
        delta: f64,
        #[arg(long, default_value_t = 50)]
        cutoff: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// Flat TOML file with experiment settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a built-in preset instead of a file (single_photon, hex_gkp).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    cutoff: Option<usize>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Any other field, as key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = match (&self.config, self.preset.as_deref()) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some("single_photon")) | (None, None) => ExperimentConfig::single_photon(),
            (None, Some("hex_gkp")) => ExperimentConfig::hex_gkp(),
            (None, Some(other)) => bail!("unknown preset {other:?}"),
        };
        let mut overrides: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                overrides.push((k.to_string(), v));
            }
        };
        push("layers", self.layers.map(|v| v.to_string()));
        push("cutoff", self.cutoff.map(|v| v.to_string()));
        push("optimizer", self.optimizer.as_ref().map(|v| format!("{v:?}")));
        push("learning_rate", self.learning_rate.map(|v| format!("{v:?}")));
        push("steps", self.steps.map(|v| v.to_string()));
        push(
            "seeds",
            self.seeds
                .as_ref()
                .map(|s| format!("[{}]", s.iter().map(u64::to_string).collect::<Vec<_>>().join(","))),
        );
        push("output", self.output.as_ref().map(|p| format!("{:?}", p.display().to_string())));
        for kv in &self.set {
            let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
            overrides.push((k.trim().to_string(), v.trim().to_string()));
        }
        for (k, v) in overrides {
            config.set(&k, &v)?;
        }
        config.validate()?;
        Ok(config)
    }
}

fn output_format(path: &Path, explicit: Option<&str>) -> Result<OutputFormat> {
    match explicit {
        Some(f) => Ok(f.parse()?),
        None => OutputFormat::from_path(path)
            .with_context(|| format!("cannot infer format of {}; pass --format", path.display())),
    }
}

fn echo_config(config: &ExperimentConfig, output: &Path) -> Result<()> {
    let path = output.with_extension("config.toml");
    std::fs::write(&path, config.to_toml_string()?).with_context(|| format!("writing {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { experiment, format } => {
            let config = experiment.resolve()?;
            let records = harness::run(&config)?;
            for r in &records {
                println!(
                    "seed {:>4}  final loss {:.6e}  steps-to-threshold {:>6}  status {:?}{}",
                    r.seed,
                    r.final_loss().unwrap_or(f64::NAN),
                    r.steps_to_threshold.map_or("-".into(), |s| s.to_string()),
                    r.status,
                    if r.leakage_warning { "  (leakage)" } else { "" }
                );
            }
            if let Some(out) = &config.output {
                emit(&records, output_format(out, format.as_deref())?, out)?;
                echo_config(&config, out)?;
                log::info!("wrote {}", out.display());
            }
        }
        Command::Sweep {
            experiment,
            rates,
            optimizers,
            traces,
        } => {
            let config = experiment.resolve()?;
            let rates = rates.unwrap_or_else(|| DEFAULT_RATES.to_vec());
            let optimizers = optimizers
                .iter()
                .map(|o| o.parse::<OptimizerKind>())
                .collect::<Result<Vec<_>, _>>()?;
            let (summary, records) = harness::sweep(&config, &rates, &optimizers)?;
            println!("optimizer  rate      median-final-loss  median-steps  divergences");
            for c in &summary.cells {
                println!(
                    "{:<9}  {:<8}  {:<17.6e}  {:<12}  {}{}",
                    c.optimizer.to_string(),
                    c.learning_rate,
                    c.median_final_loss,
                    c.median_steps_to_threshold.map_or("inf".into(), |s| s.to_string()),
                    c.divergences,
                    if c.optimal { "  <- optimal" } else { "" }
                );
            }
            if let Some(out) = &config.output {
                harness::emit::write_json(&summary, out)?;
                log::info!("wrote {}", out.display());
            }
            if let Some(path) = &traces {
                emit(&records, OutputFormat::Csv, path)?;
            }
        }
        Command::Target {
            command:
                TargetCommand::GenHexgkp {
                    d,
                    mu,
                    delta,
                    cutoff,
                    out,
                },
        } => {
            let target = hex_gkp_target(&HexGkpSpec { d, mu, delta, cutoff })?;
            write_target(&out, &target)?;
            println!(
                "wrote {} (mean photon number {:.4})",
                out.display(),
                target.state().mean_photon_number()
            );
        }
        Command::Gradcheck { layers, cutoff, seed } => {
            let target = number_target(1, cutoff)?;
            let report = gradcheck(layers, cutoff, seed, &target)?;
            println!("max Jacobian column relative error: {:.3e}", report.max_jacobian_rel_error);
            println!("loss gradient relative error:       {:.3e}", report.gradient_rel_error);
        }
    }
    Ok(())
}
