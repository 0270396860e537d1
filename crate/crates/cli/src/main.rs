mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use env_logger::Env;

#[derive(Parser, Debug)]
#[command(name = "contlim", version, about = "Continuum limits of translationally invariant MPS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide whether a channel or MPS transfer matrix is infinitely divisible.
    Analyze(Common),
    /// Build the generalised continuous MPS of a divisible input.
    Gcmps(Common),
    /// Tabulate the density and one-body correlation of a generalised cMPS.
    Correlate(CorrelateArgs),
    /// Build the generator whose long-time limit is a projector channel.
    Thermo(Common),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Input JSON file (channel, MPS tensor, canonical form or generalised cMPS).
    #[arg(long, conflicts_with = "preset")]
    pub input: Option<PathBuf>,
    /// Built-in MPS fixture: ferro, antiferro, depolarizing, bracket, aklt, identity.
    #[arg(long)]
    pub preset: Option<String>,
    /// Continuum bracket rate; the per-site rate is gamma times the spacing.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Lattice spacing of preset tensors and of channel inputs.
    #[arg(long, default_value_t = 1.0)]
    pub spacing: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Args, Debug, Clone)]
pub struct CorrelateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Segment length.
    #[arg(long, default_value_t = 1.0)]
    pub length: f64,
    /// Number of midpoint grid points per axis.
    #[arg(long, default_value_t = 64)]
    pub grid: usize,
    /// Created species; requires --beta. All diagonal pairs are summed when omitted.
    #[arg(long, requires = "beta")]
    pub alpha: Option<usize>,
    /// Annihilated species; requires --alpha.
    #[arg(long, requires = "alpha")]
    pub beta: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Text,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(Env::new().filter_or("CONTLIM_LOG", "warn")).init();
    // Usage errors exit with 1 so that 2 and 3 keep their verdict meaning.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Analyze(c) => commands::analyze(c),
        Command::Gcmps(c) => commands::gcmps(c),
        Command::Correlate(c) => commands::correlate(c),
        Command::Thermo(c) => commands::thermo(c),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
