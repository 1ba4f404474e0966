//! `dno` — command-line driver for the multiprecision Dirichlet-Neumann
//! operator library.  Every subcommand reads an optional JSON config,
//! applies flag overrides, runs one experiment, and writes headered CSV
//! artifacts plus a JSON metadata sibling.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical diagnostic
//! (results were written but a solver flagged a problem).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;

#[derive(Debug)]
pub enum CliError {
    /// bad input: config file, flag values, incompatible options
    Config(String),
    /// the computation ran but a numerical diagnostic tripped
    Numeric(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical diagnostic: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "dno",
    version,
    about = "Multiprecision Dirichlet-Neumann operator experiments for periodic surfaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-order operator norm growth and cancellation report
    CsGrowth(RunArgs),
    /// Column norms of the expansion operators
    CsColumns(RunArgs),
    /// Self-adjointness defect per expansion order
    CsSym(RunArgs),
    /// Partial-sum errors of the expansion on exact data
    CsApply(RunArgs),
    /// Pseudo-inverse cutoff sweep for the surface-adapted solvers
    AfmSweep(RunArgs),
    /// Surface-adapted transform of the Neumann trace vs plain Fourier
    AfmTransform(RunArgs),
    /// Second-kind integral-equation solve for the Neumann trace
    BimSolve(RunArgs),
    /// Flattened-layer expansion with resolution diagnostics
    TfeRun(RunArgs),
    /// Truncated-series divergence demonstration
    DemoDivergence(RunArgs),
    /// Cross-method comparison against the best available oracle
    Compare(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file (flags below override its fields)
    #[arg(long)]
    config: Option<PathBuf>,
    /// working precision in bits
    #[arg(long)]
    bits: Option<u32>,
    /// number of collocation points
    #[arg(long)]
    grid: Option<usize>,
    /// number of basis wavenumbers (even)
    #[arg(long)]
    modes: Option<usize>,
    /// expansion order
    #[arg(long)]
    order: Option<usize>,
    /// vertical polynomial degree for the flattened-layer solver
    #[arg(long)]
    cheb: Option<usize>,
    /// pseudo-inverse cutoff
    #[arg(long)]
    cutoff: Option<usize>,
    /// wavenumber cutoff for partial-sum error measurement
    #[arg(long)]
    mode_cutoff: Option<usize>,
    /// "inf" or a positive decimal depth
    #[arg(long)]
    depth: Option<String>,
    /// profile spec, e.g. polepair:0.5, smooth:64, file:surface.json
    #[arg(long)]
    profile: Option<String>,
    /// surface data spec: cos | exact | file
    #[arg(long)]
    dirichlet: Option<String>,
    /// enforce the single-harmonic structural zero pattern in operator columns
    #[arg(long)]
    filter: bool,
    /// use the iterative integral-equation solver
    #[arg(long)]
    iterative: bool,
    /// deformation scale for rescaled norm reporting
    #[arg(long)]
    rescale: Option<String>,
    /// truncation order for the divergence demonstration (repeatable)
    #[arg(long = "truncation")]
    truncations: Vec<i64>,
    /// method for the comparison table (repeatable)
    #[arg(long = "method")]
    methods: Vec<String>,
    /// output directory
    #[arg(long)]
    out: Option<String>,
}

impl RunArgs {
    fn into_config(self) -> Result<ExperimentConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.bits {
            c.bits = v;
        }
        if let Some(v) = self.grid {
            c.grid = v;
        }
        if let Some(v) = self.modes {
            c.modes = v;
        }
        if let Some(v) = self.order {
            c.order = v;
        }
        if let Some(v) = self.cheb {
            c.cheb = v;
        }
        if let Some(v) = self.cutoff {
            c.cutoff = Some(v);
        }
        if let Some(v) = self.mode_cutoff {
            c.mode_cutoff = Some(v);
        }
        if let Some(v) = self.depth {
            c.depth = v;
        }
        if let Some(v) = self.profile {
            c.profile = v;
        }
        if let Some(v) = self.dirichlet {
            c.dirichlet = v;
        }
        if self.filter {
            c.filter = true;
        }
        if self.iterative {
            c.iterative = true;
        }
        if let Some(v) = self.rescale {
            c.rescale = Some(v);
        }
        if !self.truncations.is_empty() {
            c.truncations = self.truncations;
        }
        if !self.methods.is_empty() {
            c.methods = self.methods;
        }
        if let Some(v) = self.out {
            c.out = v;
        }
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::CsGrowth(a) => commands::cs_growth(&a.into_config()?),
        Command::CsColumns(a) => commands::cs_columns(&a.into_config()?),
        Command::CsSym(a) => commands::cs_sym(&a.into_config()?),
        Command::CsApply(a) => commands::cs_apply(&a.into_config()?),
        Command::AfmSweep(a) => commands::afm_sweep(&a.into_config()?),
        Command::AfmTransform(a) => commands::afm_transform(&a.into_config()?),
        Command::BimSolve(a) => commands::bim_solve(&a.into_config()?),
        Command::TfeRun(a) => commands::tfe_run(&a.into_config()?),
        Command::DemoDivergence(a) => commands::demo_divergence(&a.into_config()?),
        Command::Compare(a) => commands::compare(&a.into_config()?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dno: {e}");
            match e {
                CliError::Config(_) => ExitCode::from(2),
                CliError::Numeric(_) => ExitCode::from(3),
            }
        }
    }
}
