use std::path::PathBuf;
use std::process::ExitCode;

use actinf::agent::EngineKind;
use actinf::oracle::{exact_evidence, exact_posterior_marginals};
use actinf::OneHot;
use actinf_cli::{load_config, run_experiment, CliError, ExperimentConfig, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "actinf", version, about = "Discrete active inference experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Engine {
    Structured,
    Vmp,
    Bandit,
}

impl From<Engine> for EngineKind {
    fn from(e: Engine) -> Self {
        match e {
            Engine::Structured => EngineKind::Structured,
            Engine::Vmp => EngineKind::Vmp,
            Engine::Bandit => EngineKind::Bandit,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run all trials and write cycles.jsonl and summary.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, value_enum)]
        engine: Option<Engine>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Exact evidence and state marginals of a frozen model, per policy.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        /// Observed outcome indices, comma separated.
        #[arg(long, value_delimiter = ',')]
        obs: Vec<usize>,
    },
}

fn run(
    cfg: &mut ExperimentConfig,
    seed: Option<u64>,
    trials: Option<usize>,
    engine: Option<Engine>,
    out: Option<PathBuf>,
) -> Result<()> {
    if let Some(s) = seed {
        cfg.agent.seed = s;
    }
    if let Some(n) = trials {
        cfg.run.trials = n;
    }
    if let Some(e) = engine {
        cfg.agent.engine = e.into();
    }
    if let Some(o) = out {
        cfg.run.output = o;
    }
    let output = run_experiment(cfg)?;
    println!("wrote {} and {}", output.cycles.display(), output.summary.display());
    Ok(())
}

fn oracle(cfg: &ExperimentConfig, obs: &[usize]) -> Result<()> {
    let model = cfg.validate()?;
    let obs = obs
        .iter()
        .map(|o| OneHot::new(*o, model.dims.num_obs))
        .collect::<actinf::Result<Vec<_>>>()?;
    for (k, policy) in model.policies.iter().enumerate() {
        let ln_p = exact_evidence(&model, &obs, k)?;
        println!("policy {k} {policy:?}: ln P(o) = {ln_p}");
        match exact_posterior_marginals(&model, &obs, k) {
            Ok(marginals) => {
                for (tau, m) in marginals.iter().enumerate() {
                    println!("  tau {tau}: {:?}", m.to_vec());
                }
            }
            Err(e) => println!("  {e}"),
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            trials,
            engine,
            out,
        } => {
            let text = std::fs::read_to_string(&config).map_err(|source| CliError::Io { path: config, source })?;
            let mut cfg = ExperimentConfig::from_toml_str(&text)?;
            run(&mut cfg, seed, trials, engine, out)
        }
        Command::Validate { config } => {
            load_config(&config)?;
            println!("{}: ok", config.display());
            Ok(())
        }
        Command::Oracle { config, obs } => oracle(&load_config(&config)?, &obs),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
