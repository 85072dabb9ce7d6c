use clap::{Parser, Subcommand};
use std::path::PathBuf;

use crate::commands::Format;

pub const OUT_DIR_ENV: &str = "FESIM_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "fesim-out";

#[derive(Debug, Parser)]
#[command(name = "fesim", version, about = "Front-end noise sweeps and simulated bench scans")]
pub struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Base seed; overrides the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
    /// Format for curves and grids.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,
    /// Bundled configuration (fig1..fig4, fig9..fig12).
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Option<String>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// ENC decomposition over a (tp, C, I) grid with per-slice optima.
    EncSweep,
    /// Threshold, noise-occupancy and time-walk scans with fits.
    Scan,
    /// Register map dump and load.
    Registers {
        #[command(subcommand)]
        action: RegistersAction,
    },
    /// Repeat a run from its manifest and check the outputs match.
    Rerun { manifest: PathBuf },
    /// List bundled presets.
    Presets,
}

#[derive(Debug, Subcommand)]
pub enum RegistersAction {
    /// Write registers.toml for the configured chip.
    Dump,
    /// Apply a register file and write the resulting config.toml.
    Load { file: PathBuf },
}
