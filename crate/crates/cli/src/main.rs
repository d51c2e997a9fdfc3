//! `sphmimo` command-line front end.
//!
//! Inputs resolve as flag, then config file, then built-in default. Exit codes:
//! 0 success, 2 validation error, 3 I/O or file-format error, 4 numeric error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sphmimo::commands::{
    cmd_analyze_rank, cmd_ingest, cmd_reproduce, cmd_simulate, AnalyzeRequest, SystemSource,
};
use sphmimo::io::config::{ConfigOverrides, RunConfig, TauGrid, DEFAULT_ANALYSIS_FREQ, DEFAULT_TAU_GRID};
use sphmimo::{Error, Result};

#[derive(Parser)]
#[command(name = "sphmimo", version, about = "Spherical-array MIMO room simulation and rank analysis")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the configured room and write the SH-domain impulse-response tensor.
    Simulate(SimulateArgs),
    /// Effective rank against window length, singular spectra and the omni trace.
    AnalyzeRank(AnalyzeArgs),
    /// Regularized inversion and reproduction of the target field.
    Reproduce(ReproduceArgs),
    /// Assemble measured element responses listed in a layout manifest.
    Ingest(IngestArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sample rate in Hz.
    #[arg(long)]
    fs: Option<f64>,
    /// Response length in samples (power of two).
    #[arg(long)]
    length: Option<usize>,
    /// Highest image-source reflection order.
    #[arg(long)]
    max_order: Option<usize>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Tensor WAV; its `_manifest.csv` sidecar must sit next to it.
    #[arg(long)]
    rir: PathBuf,
    /// Analysis frequency in Hz.
    #[arg(long)]
    freq: Option<f64>,
    /// Window grid: log:START:STOP:COUNT, lin:START:STOP:COUNT or list:T1,T2,...
    #[arg(long)]
    tau_grid: Option<String>,
    /// Extra window lengths (s) for singular-spectrum files.
    #[arg(long, value_delimiter = ',')]
    spectrum_tau: Vec<f64>,
    /// Output directory; defaults to the config's, else the tensor's directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run config supplying defaults and the array grids for element-domain input.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    threshold_db: Option<f64>,
    #[arg(long)]
    freq: Option<f64>,
    /// Use the full-window transform of this tensor instead of the configured scene.
    #[arg(long)]
    rir: Option<PathBuf>,
    /// `icosahedron12` or a `coeff_index,re,im` CSV.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    /// Layout manifest with header `speaker,file,mic_channels`.
    #[arg(long)]
    manifest: PathBuf,
    /// Output tensor WAV.
    #[arg(long)]
    out: PathBuf,
    /// Run config whose array grids the element counts must match.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn report(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let overrides = ConfigOverrides {
        fs: a.fs,
        length: a.length,
        max_order: a.max_order,
        directory: a.out,
        ..Default::default()
    };
    let cfg = RunConfig::load(&a.config, &overrides)?;
    report(&cmd_simulate(&cfg)?);
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let overrides = ConfigOverrides {
        analysis_freq: a.freq,
        tau_grid: a.tau_grid.clone(),
        directory: a.out.clone(),
        ..Default::default()
    };
    let cfg = a.config.as_deref().map(|p| RunConfig::load(p, &overrides)).transpose()?;
    let tau_text = a
        .tau_grid
        .or_else(|| cfg.as_ref().map(|c| c.analysis.tau_grid.clone()))
        .unwrap_or_else(|| DEFAULT_TAU_GRID.to_string());
    let tau_grid = TauGrid::parse(&tau_text).map_err(|m| Error::Validation {
        field: "tau-grid".into(),
        message: m,
    })?;
    let spectrum_taus = if a.spectrum_tau.is_empty() {
        cfg.as_ref().map(|c| c.analysis.spectrum_taus.clone()).unwrap_or_default()
    } else {
        a.spectrum_tau
    };
    let out_dir = match (&a.out, &cfg) {
        (Some(o), _) => o.clone(),
        (None, Some(c)) => c.output_dir(),
        (None, None) => a.rir.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let arrays = match &cfg {
        Some(c) => Some((c.loudspeaker_spec()?, c.microphone_spec()?)),
        None => None,
    };
    let req = AnalyzeRequest {
        rir: a.rir,
        freq: a
            .freq
            .or(cfg.as_ref().map(|c| c.analysis.analysis_freq))
            .unwrap_or(DEFAULT_ANALYSIS_FREQ),
        tau_grid,
        spectrum_taus,
        out_dir,
        arrays,
        omni_trace: cfg.as_ref().is_none_or(|c| c.outputs.omni_trace),
        singular_spectra: cfg.as_ref().is_none_or(|c| c.outputs.singular_spectra),
    };
    let summary = cmd_analyze_rank(&req)?;
    if let (Some(t), Some(e)) = (summary.curve.taus.last(), summary.curve.eranks.last()) {
        println!("erank at tau = {t} s: {e:.4}");
    }
    report(&summary.files);
    Ok(())
}

fn reproduce(a: ReproduceArgs) -> Result<()> {
    let overrides = ConfigOverrides {
        threshold_db: a.threshold_db,
        analysis_freq: a.freq,
        target: a.target,
        directory: a.out,
        ..Default::default()
    };
    let cfg = RunConfig::load(&a.config, &overrides)?;
    let source = a.rir.map_or(SystemSource::Scene, SystemSource::Rir);
    let summary = cmd_reproduce(&cfg, &source)?;
    println!(
        "error {:.3} dB with {} inverted singular values",
        summary.report.error_db, summary.report.inverted_count
    );
    report(&summary.files);
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let arrays = match &a.config {
        Some(p) => {
            let c = RunConfig::load(p, &ConfigOverrides::default())?;
            Some((c.loudspeaker_spec()?, c.microphone_spec()?))
        }
        None => None,
    };
    report(&cmd_ingest(&a.manifest, &a.out, arrays)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::AnalyzeRank(a) => analyze(a),
        Command::Reproduce(a) => reproduce(a),
        Command::Ingest(a) => ingest(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
