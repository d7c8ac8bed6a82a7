//! `nearfield` command-line front end.
//!
//! Every subcommand writes its CSV/JSON outputs plus a
//! `<subcommand>_manifest.json` into `--out-dir`. Exit status is 0 on
//! success, 2 for usage, configuration and domain errors, and 1 for numeric
//! and I/O failures.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nearfield_core::{Error, Result};

mod commands;
pub mod output;

pub use output::{emit_csv, format_float, Cell, RunManifest, Table};

#[derive(Debug, Parser)]
#[command(name = "nearfield", version, about = "Near-field ELAA simulation toolkit")]
pub struct Cli {
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads for parallel kernels (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Scenario TOML file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Near/far-field boundary distances.
    Boundary(BoundaryArgs),
    /// Narrowband gain over an angle x distance grid.
    Fieldmap(FieldmapArgs),
    /// Build and export an angular or polar codebook.
    Codebook(CodebookArgs),
    /// Monte-Carlo NMSE of OMP with angular vs polar codebooks.
    Estimate(EstimateArgs),
    /// Gain across the band for phase-shifter and true-time-delay beamformers.
    Beamsplit(BeamsplitArgs),
    /// LoS-MIMO effective degrees of freedom against distance.
    Dof(DofArgs),
    /// Same-angle multi-user comparison of near-field ZF and far-field beams.
    Sdma(SdmaArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Boundary(_) => "boundary",
            Command::Fieldmap(_) => "fieldmap",
            Command::Codebook(_) => "codebook",
            Command::Estimate(_) => "estimate",
            Command::Beamsplit(_) => "beamsplit",
            Command::Dof(_) => "dof",
            Command::Sdma(_) => "sdma",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundaryKind {
    Simo,
    Mimo,
    Ris,
    Numeric,
}

#[derive(Debug, Args)]
pub struct BoundaryArgs {
    #[arg(value_enum, default_value = "simo")]
    pub kind: BoundaryKind,
    /// Array aperture in meters (default: the scenario array).
    #[arg(long)]
    pub aperture: Option<f64>,
    /// Receive aperture for `mimo` (default: same as `--aperture`).
    #[arg(long)]
    pub aperture_rx: Option<f64>,
    /// Carrier frequency in Hz (default: the scenario carrier).
    #[arg(long)]
    pub freq: Option<f64>,
    /// BS-RIS distance for `ris`, meters.
    #[arg(long)]
    pub d1: Option<f64>,
    /// ULA element count for `numeric` (default: the scenario array).
    #[arg(long)]
    pub elements: Option<usize>,
    /// ULA spacing for `numeric` (default: half a wavelength).
    #[arg(long)]
    pub spacing: Option<f64>,
    /// Direction for `numeric`, degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub theta: f64,
    #[arg(long, default_value_t = 0.95)]
    pub gain_floor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignKind {
    Focus,
    Steer,
}

#[derive(Debug, Args)]
pub struct FieldmapArgs {
    #[arg(long, value_enum, default_value = "focus")]
    pub design: DesignKind,
    /// Target angle in degrees (default: first scenario user).
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// Focal distance in meters (default: first scenario user).
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub angles: usize,
    #[arg(long, default_value_t = 200)]
    pub distances: usize,
    #[arg(long, default_value_t = -60.0, allow_negative_numbers = true)]
    pub theta_min: f64,
    #[arg(long, default_value_t = 60.0, allow_negative_numbers = true)]
    pub theta_max: f64,
    /// Default: one aperture.
    #[arg(long)]
    pub r_min: Option<f64>,
    /// Default: twice the Rayleigh distance.
    #[arg(long)]
    pub r_max: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CodebookChoice {
    Angular,
    Polar,
}

#[derive(Debug, Args)]
pub struct CodebookArgs {
    #[arg(long, value_enum, default_value = "polar")]
    pub kind: CodebookChoice,
    /// Number of angles (default: element count).
    #[arg(long)]
    pub size: Option<usize>,
    /// Adjacent-ring coherence target.
    #[arg(long, default_value_t = 0.5)]
    pub mu: f64,
    /// Innermost ring distance (default: max(aperture, 0.01 x Rayleigh distance)).
    #[arg(long)]
    pub r_min: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Per-measurement SNRs in dB.
    #[arg(long, value_delimiter = ',', default_value = "20", allow_negative_numbers = true)]
    pub snr: Vec<f64>,
    /// Pilot count (default: N/4).
    #[arg(long)]
    pub pilots: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub sparsity: usize,
    #[arg(long, default_value_t = 0.0)]
    pub stop_residual: f64,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Half-width in sin(theta) of the per-trial user angle window.
    #[arg(long, default_value_t = 0.25)]
    pub angle_window: f64,
    /// Codebook angle count (default: element count).
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub mu: f64,
    /// Innermost polar ring (default: max(aperture, 0.01 x Rayleigh distance)).
    #[arg(long)]
    pub r_min: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BeamsplitArgs {
    /// TTD subarray count; must divide the element count.
    #[arg(long, default_value_t = 16)]
    pub subarrays: usize,
    /// Also write per-subcarrier focal points on a grid around the target.
    #[arg(long)]
    pub focal: bool,
    /// Focal grid size per axis.
    #[arg(long, default_value_t = 21)]
    pub focal_cells: usize,
}

#[derive(Debug, Args)]
pub struct DofArgs {
    /// Explicit distances in meters (ascending).
    #[arg(long, value_delimiter = ',')]
    pub distances: Option<Vec<f64>>,
    /// Log-spaced sweep start (default: 0.01 x MIMO Rayleigh distance).
    #[arg(long)]
    pub d_min: Option<f64>,
    /// Log-spaced sweep end (default: 2 x MIMO Rayleigh distance).
    #[arg(long)]
    pub d_max: Option<f64>,
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    #[arg(long, default_value_t = 20.0, allow_negative_numbers = true)]
    pub snr: f64,
    /// Relative power threshold for counting modes.
    #[arg(long, default_value_t = 0.01)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct SdmaArgs {
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    pub snr: f64,
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) | Error::Domain(_) | Error::UnsupportedModel(_) | Error::Config { .. } => 2,
        Error::Numeric { .. } | Error::Io { .. } | Error::Csv(_) => 1,
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit status.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let mut stdout = std::io::stdout();
    match run(&cli, &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Numeric { diagnostics, .. } = &e {
                eprintln!("diagnostics: {diagnostics}");
            }
            exit_code(&e)
        }
    }
}

/// Runs a parsed command, writing human-readable results to `out`.
pub fn run(cli: &Cli, out: &mut (dyn Write + Send)) -> Result<()> {
    let start = Instant::now();
    let outcome = match cli.threads {
        Some(0) => {
            return Err(Error::Config {
                key: "--threads".into(),
                message: "must be >= 1".into(),
            })
        }
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config {
                    key: "--threads".into(),
                    message: e.to_string(),
                })?;
            pool.install(|| commands::execute(cli, out))?
        }
        None => commands::execute(cli, out)?,
    };

    let mut outputs = outcome.outputs;
    let manifest = RunManifest {
        subcommand: cli.command.name().into(),
        config_path: cli.config.as_ref().map(|p| p.display().to_string()),
        seed: outcome.seed,
        threads: cli.threads,
        outputs: outputs.written().to_vec(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        duration_s: start.elapsed().as_secs_f64(),
    };
    outputs.json(&format!("{}_manifest.json", cli.command.name()), &manifest)
}
