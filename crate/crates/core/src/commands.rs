//! End-to-end workflows behind the command-line subcommands.
//!
//! Each command writes its files into an output directory and finishes with a
//! `run_<command>.json` metadata file that echoes the resolved inputs and the
//! toolkit version. Output bytes depend only on the inputs.

use std::path::{Path, PathBuf};

use serde_json::json;

use crate::analysis::{
    erank_vs_window, reproduce_field, reproduction_target, singular_spectrum, windowed_system, ErankCurve,
    ReproductionReport,
};
use crate::error::{Error, Result};
use crate::freefield::SphArraySpec;
use crate::io::config::{RunConfig, TauGrid, DEFAULT_TARGET};
use crate::io::measured::{element_tensor_to_sh, ingest_measured};
use crate::io::tables::{
    erank_curve_csv, omni_csv, read_target, read_tensor, reproduction_csv, spectrum_csv, write_tensor, TensorDomain,
};
use crate::io::{fmt_f64, write_atomic};
use crate::room::{room_system_sh, synthesize_rir, RirTensor, SynthesisParams};
use crate::sampling::ShVector;
use crate::special::SPEED_OF_SOUND;
use crate::system::{Provenance, ShMatrix};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const RIR_FILE: &str = "rir.wav";
pub const ERANK_FILE: &str = "erank_curve.csv";
pub const SPECTRUM_FILE: &str = "singular_spectrum.csv";
pub const OMNI_FILE: &str = "omni_rir.csv";
pub const REPRODUCTION_FILE: &str = "reproduction.csv";

/// Name of the spectrum file for a window of `tau` seconds.
pub fn spectrum_file_for(tau: f64) -> String {
    format!("singular_spectrum_{}s.csv", fmt_f64(tau))
}

fn write_metadata(dir: &Path, command: &str, body: serde_json::Value) -> Result<PathBuf> {
    let mut doc = json!({ "toolkit": "sphmimo", "version": VERSION, "command": command });
    if let (Some(d), Some(b)) = (doc.as_object_mut(), body.as_object()) {
        d.extend(b.clone());
    }
    let path = dir.join(format!("run_{}.json", command.replace('-', "_")));
    let mut text = serde_json::to_string_pretty(&doc).expect("metadata serializes");
    text.push('\n');
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

fn config_json(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

/// Synthesizes the configured room and writes `rir.wav`, its manifest and
/// `run_simulate.json`. Returns the written paths.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let room = cfg.room_spec()?;
    let spec_l = cfg.loudspeaker_spec()?;
    let spec_m = cfg.microphone_spec()?;
    let rir = synthesize_rir(
        &room,
        &spec_l,
        &spec_m,
        SynthesisParams::new(cfg.synthesis.fs, cfg.synthesis.length),
    )?;
    let dir = cfg.output_dir();
    let wav = dir.join(RIR_FILE);
    let domain = TensorDomain::Sh {
        mic_order: spec_m.sh_order(),
        speaker_order: spec_l.sh_order(),
    };
    write_tensor(&wav, &rir, domain)?;
    let manifest = crate::io::tables::manifest_path(&wav);
    let meta = write_metadata(
        &dir,
        "simulate",
        json!({
            "config": config_json(cfg),
            "tensor": { "rows": rir.rows(), "cols": rir.cols(), "length": rir.len(), "fs": rir.fs() },
            "outputs": [RIR_FILE, manifest.file_name().map(|n| n.to_string_lossy().into_owned())],
        }),
    )?;
    Ok(vec![wav, manifest, meta])
}

/// A stored tensor brought into the SH domain.
#[derive(Debug, Clone)]
pub struct ShTensor {
    pub rir: RirTensor,
    pub mic_order: usize,
    pub speaker_order: usize,
    /// The file held element responses that were projected here.
    pub projected: bool,
}

/// Loads a tensor file in the SH domain, projecting element-domain files with
/// `arrays` (loudspeaker, microphone).
pub fn load_sh_tensor(path: &Path, arrays: Option<&(SphArraySpec, SphArraySpec)>) -> Result<ShTensor> {
    let (rir, domain) = read_tensor(path)?;
    match domain {
        TensorDomain::Sh { mic_order, speaker_order } => Ok(ShTensor {
            rir,
            mic_order,
            speaker_order,
            projected: false,
        }),
        TensorDomain::Elements { .. } => {
            let (spec_l, spec_m) = arrays.ok_or_else(|| {
                Error::validation(
                    "config",
                    format!("{} holds element responses; array grids from a config are needed", path.display()),
                )
            })?;
            Ok(ShTensor {
                rir: element_tensor_to_sh(&rir, spec_l, spec_m)?,
                mic_order: spec_m.sh_order(),
                speaker_order: spec_l.sh_order(),
                projected: true,
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnalyzeRequest {
    pub rir: PathBuf,
    pub freq: f64,
    pub tau_grid: TauGrid,
    pub spectrum_taus: Vec<f64>,
    pub out_dir: PathBuf,
    /// `(loudspeaker, microphone)`, required for element-domain input.
    pub arrays: Option<(SphArraySpec, SphArraySpec)>,
    pub omni_trace: bool,
    pub singular_spectra: bool,
}

#[derive(Debug, Clone)]
pub struct AnalyzeSummary {
    pub curve: ErankCurve,
    pub files: Vec<PathBuf>,
}

/// Effective rank against window length, singular spectra and the
/// omnidirectional trace of a stored tensor.
pub fn cmd_analyze_rank(req: &AnalyzeRequest) -> Result<AnalyzeSummary> {
    let ShTensor {
        rir,
        mic_order,
        speaker_order,
        projected,
    } = load_sh_tensor(&req.rir, req.arrays.as_ref())?;
    if !(req.freq > 0.0 && req.freq < rir.fs() / 2.0) {
        return Err(Error::validation(
            "freq",
            format!("{} Hz is outside (0, fs/2) for fs = {} Hz", req.freq, rir.fs()),
        ));
    }
    let duration = rir.duration();
    let taus = req.tau_grid.resolve(duration).map_err(|m| Error::validation("tau_grid", m))?;
    for t in &req.spectrum_taus {
        if !(*t > 0.0 && *t <= duration) {
            return Err(Error::validation("spectrum_taus", format!("window {t} s is outside (0, {duration}] s")));
        }
    }
    let curve = erank_vs_window(&rir, req.freq, &taus)?;
    let dir = &req.out_dir;
    let mut files = vec![dir.join(ERANK_FILE)];
    write_atomic(&files[0], erank_curve_csv(&curve).as_bytes())?;
    if req.singular_spectra {
        let full = dir.join(SPECTRUM_FILE);
        write_atomic(&full, spectrum_csv(&singular_spectrum(&windowed_system(&rir, duration, req.freq)?)).as_bytes())?;
        files.push(full);
        for t in &req.spectrum_taus {
            let p = dir.join(spectrum_file_for(*t));
            write_atomic(&p, spectrum_csv(&singular_spectrum(&windowed_system(&rir, *t, req.freq)?)).as_bytes())?;
            files.push(p);
        }
    }
    if req.omni_trace {
        let p = dir.join(OMNI_FILE);
        write_atomic(&p, omni_csv(rir.omni(), rir.fs()).as_bytes())?;
        files.push(p);
    }
    let names: Vec<String> = files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    let meta = write_metadata(
        dir,
        "analyze-rank",
        json!({
            "rir": req.rir.to_string_lossy(),
            "analysis_freq": req.freq,
            "tau_grid": req.tau_grid.to_string(),
            "spectrum_taus": req.spectrum_taus,
            "mic_order": mic_order,
            "speaker_order": speaker_order,
            "projected_from_elements": projected,
            "windows_evaluated": taus.len(),
            "windows_kept": curve.taus.len(),
            "outputs": names,
        }),
    )?;
    files.push(meta);
    Ok(AnalyzeSummary { curve, files })
}

/// Where the transfer matrix for reproduction comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemSource {
    /// Evaluate the configured room directly at the analysis frequency.
    Scene,
    /// Full-window transform of a stored tensor.
    Rir(PathBuf),
}

#[derive(Debug, Clone)]
pub struct ReproduceSummary {
    pub report: ReproductionReport,
    pub files: Vec<PathBuf>,
}

fn load_target(cfg: &RunConfig, order: usize) -> Result<ShVector> {
    if cfg.analysis.target == DEFAULT_TARGET {
        return reproduction_target(order);
    }
    let coeffs = read_target(&cfg.resolve_path(Path::new(&cfg.analysis.target)))?;
    ShVector::new(coeffs, order).map_err(|e| Error::validation("analysis.target", e.to_string()))
}

/// Regularized inversion of the system at the analysis frequency and the
/// resulting reproduction of the target field.
pub fn cmd_reproduce(cfg: &RunConfig, source: &SystemSource) -> Result<ReproduceSummary> {
    cfg.validate()?;
    let f = cfg.analysis.analysis_freq;
    let k = 2.0 * std::f64::consts::PI * f / SPEED_OF_SOUND;
    let sys = match source {
        SystemSource::Scene => room_system_sh(&cfg.room_spec()?, &cfg.loudspeaker_spec()?, &cfg.microphone_spec()?, k)?,
        SystemSource::Rir(path) => {
            let arrays = (cfg.loudspeaker_spec()?, cfg.microphone_spec()?);
            let t = load_sh_tensor(path, Some(&arrays))?;
            let provenance = if t.projected { Provenance::Measured } else { Provenance::Room };
            let g = windowed_system(&t.rir, t.rir.duration(), f)?;
            ShMatrix::new(g, k, t.mic_order, t.speaker_order, provenance)?
        }
    };
    let target = load_target(cfg, sys.mic_order())?;
    let report = reproduce_field(&sys, &target, cfg.analysis.threshold_db)?;
    let dir = cfg.output_dir();
    let csv = dir.join(REPRODUCTION_FILE);
    write_atomic(&csv, reproduction_csv(&report).as_bytes())?;
    let source_text = match source {
        SystemSource::Scene => "scene".to_string(),
        SystemSource::Rir(p) => p.to_string_lossy().into_owned(),
    };
    let meta = write_metadata(
        &dir,
        "reproduce",
        json!({
            "config": config_json(cfg),
            "system_source": source_text,
            "error_db": report.error_db,
            "inverted_count": report.inverted_count,
            "outputs": [REPRODUCTION_FILE],
        }),
    )?;
    Ok(ReproduceSummary {
        report,
        files: vec![csv, meta],
    })
}

/// Assembles measured element responses into one tensor file plus manifest.
pub fn cmd_ingest(layout: &Path, out: &Path, arrays: Option<(SphArraySpec, SphArraySpec)>) -> Result<Vec<PathBuf>> {
    let measured = ingest_measured(layout, arrays)?;
    measured.write(out)?;
    let manifest = crate::io::tables::manifest_path(out);
    let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
    let meta = write_metadata(
        &dir,
        "ingest",
        json!({
            "layout": layout.to_string_lossy(),
            "mics": measured.mic_count(),
            "speakers": measured.speaker_count(),
            "length": measured.tensor.len(),
            "fs": measured.tensor.fs(),
            "outputs": [out.file_name().map(|n| n.to_string_lossy().into_owned()),
                        manifest.file_name().map(|n| n.to_string_lossy().into_owned())],
        }),
    )?;
    Ok(vec![out.to_path_buf(), manifest, meta])
}
