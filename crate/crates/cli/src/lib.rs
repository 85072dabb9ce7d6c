//! Batch driver for the `fesim` command: ENC sweeps, simulated bench
//! scans, register files and reproducible run manifests.

pub mod args;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod presets;
pub mod run_config;

use std::path::PathBuf;

pub use args::{Cli, RegistersAction, Sub};
pub use commands::{execute, rerun, Command, Format, RunContext};
pub use error::{CliError, CliResult, ExitClass};
pub use manifest::{RunManifest, MANIFEST_FILE};
pub use run_config::RunConfig;

/// Configuration from `--preset` or `--config` (not both); empty when
/// neither is given.
pub fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    match (&cli.preset, &cli.config) {
        (Some(_), Some(_)) => Err(CliError::config("--preset and --config are mutually exclusive")),
        (Some(name), None) => presets::load_preset(name),
        (None, Some(path)) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            RunConfig::from_toml_str(&text).map_err(|e| e.context(path.display()))
        }
        (None, None) => Ok(RunConfig::default()),
    }
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(args::DEFAULT_OUT_DIR))
}

/// Runs a parsed command line and returns a one-line summary.
pub fn run(cli: Cli) -> CliResult<String> {
    match cli.jobs {
        Some(0) => Err(CliError::config("--jobs must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::runtime(e.to_string()))?
            .install(|| dispatch(&cli)),
        None => dispatch(&cli),
    }
}

fn dispatch(cli: &Cli) -> CliResult<String> {
    let command = match &cli.command {
        Sub::Presets => return Ok(presets::preset_names().join("\n")),
        Sub::Rerun { manifest } => {
            let stored = RunManifest::read(manifest)?;
            let dir = out_dir(cli);
            let report = rerun(&stored, &dir)?;
            if report.mismatched.is_empty() {
                return Ok(format!(
                    "reproduced {} outputs in {}",
                    report.manifest.outputs.len(),
                    dir.display()
                ));
            }
            return Err(CliError::runtime(format!(
                "rerun differs from manifest: {}",
                report.mismatched.join(", ")
            )));
        }
        Sub::EncSweep => Command::EncSweep,
        Sub::Scan => Command::Scan,
        Sub::Registers {
            action: RegistersAction::Dump,
        } => Command::RegistersDump,
        Sub::Registers {
            action: RegistersAction::Load { file },
        } => Command::RegistersLoad(Some(file.clone())),
    };
    let config = load_config(cli)?;
    let ctx = RunContext {
        out_dir: out_dir(cli),
        format: cli.format,
        seed: config.effective_seed(cli.seed),
    };
    let manifest = execute(&command, &config, &ctx)?;
    Ok(format!(
        "{}: wrote {} files and {} to {}",
        manifest.command,
        manifest.outputs.len(),
        MANIFEST_FILE,
        ctx.out_dir.display()
    ))
}
