use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use glued_cli::config::parse_override;
use glued_cli::{
    exit_code, list_models, run_scenario, run_scenario_config, CliError, Mode, RunOptions, ScenarioConfig,
};
use glued_core::models::Registry;

#[derive(Parser)]
#[command(name = "glued", version, about = "Run glued hybrid-system scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed of the samplers.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Model parameter override, repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario in a TOML config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// List the available models and their parameters.
    List,
    /// Run the certification checks of one model.
    Certify {
        model_id: String,
        #[command(flatten)]
        common: Common,
    },
}

fn options(common: &Common) -> Result<RunOptions, CliError> {
    let overrides = common
        .overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<BTreeMap<_, _>, _>>()?;
    Ok(RunOptions {
        out_dir: common.out.clone(),
        seed: common.seed,
        overrides,
        jobs: common.jobs,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let registry = Registry::builtin();
    let result = match &cli.command {
        Command::List => {
            print!("{}", list_models(&registry));
            return ExitCode::SUCCESS;
        }
        Command::Run { config, common } => {
            options(common).and_then(|opts| run_scenario(config, &registry, &opts))
        }
        Command::Certify { model_id, common } => options(common).and_then(|opts| {
            run_scenario_config(ScenarioConfig::new(model_id.clone(), Mode::Certify), &registry, &opts)
        }),
    };
    match &result {
        Ok(runs) => {
            for run in runs {
                let verdict = if run.pass() { "PASS" } else { "FAIL" };
                println!("{verdict} {} {}", run.manifest.config.model_id, run.dir.display());
                for c in run.manifest.checks.iter().filter(|c| !c.pass) {
                    println!("  failed: {}", c.name);
                }
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
