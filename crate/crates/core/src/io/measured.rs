//! Ingestion of measured (already deconvolved) element-space responses, and
//! conversion between element-domain and SH-domain tensors.
//!
//! A layout manifest has the header `speaker,file,mic_channels`. Each row
//! names one loudspeaker element, the WAV file holding its microphone
//! responses and, in file-channel order, the microphone element index of
//! every channel (`;`-separated). Relative file paths are taken from the
//! manifest's directory.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::freefield::{sh_to_elements, SphArraySpec};
use crate::io::tables::{write_tensor, TensorDomain};
use crate::io::wav::read_wav;
use crate::room::RirTensor;
use crate::sampling::SteeringMatrix;
use crate::special::sh_count;
use crate::CMatrix;

pub const LAYOUT_HEADER: &[&str] = &["speaker", "file", "mic_channels"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutEntry {
    pub speaker: usize,
    pub file: PathBuf,
    /// Microphone element index of each file channel.
    pub mic_channels: Vec<usize>,
    /// Byte offset of the manifest line, for error reports.
    pub offset: u64,
}

/// Element-domain responses: rows are microphone elements, columns
/// loudspeaker elements, both in declared element order.
#[derive(Debug, Clone)]
pub struct MeasuredRir {
    pub tensor: RirTensor,
    /// `(loudspeaker, microphone)` specifications when known.
    pub arrays: Option<(SphArraySpec, SphArraySpec)>,
}

impl MeasuredRir {
    pub fn mic_count(&self) -> usize {
        self.tensor.rows()
    }

    pub fn speaker_count(&self) -> usize {
        self.tensor.cols()
    }

    /// Writes the element-domain tensor and its manifest.
    pub fn write(&self, wav: &Path) -> Result<()> {
        let domain = TensorDomain::Elements {
            mics: self.mic_count(),
            speakers: self.speaker_count(),
        };
        write_tensor(wav, &self.tensor, domain)
    }

    /// Projects to the SH domain with the attached array specifications.
    pub fn to_sh(&self) -> Result<RirTensor> {
        let (spec_l, spec_m) = self
            .arrays
            .as_ref()
            .ok_or_else(|| Error::Precondition("array specifications are needed for SH projection".into()))?;
        element_tensor_to_sh(&self.tensor, spec_l, spec_m)
    }
}

pub fn read_layout(path: &Path) -> Result<Vec<LayoutEntry>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let fail = |offset: u64, message: String| Error::Format {
        path: path.to_path_buf(),
        offset,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(file);
    let header = rdr.headers().map_err(|e| fail(0, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != LAYOUT_HEADER {
        return Err(fail(0, format!("expected header `{}`", LAYOUT_HEADER.join(","))));
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut entries = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| fail(e.position().map(|p| p.byte()).unwrap_or(0), e.to_string()))?;
        let offset = rec.position().map(|p| p.byte()).unwrap_or(0);
        let speaker = rec[0]
            .parse()
            .map_err(|_| fail(offset, format!("speaker index `{}` is not a number", &rec[0])))?;
        let mic_channels = rec[2]
            .split(';')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| fail(offset, format!("microphone index `{s}` is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        let file = Path::new(&rec[1]);
        entries.push(LayoutEntry {
            speaker,
            file: if file.is_absolute() { file.to_path_buf() } else { base.join(file) },
            mic_channels,
            offset,
        });
    }
    Ok(entries)
}

/// Reads every file named by the layout manifest and assembles a
/// microphones × loudspeakers tensor. With `arrays` given, element counts must
/// match the grids.
pub fn ingest_measured(layout: &Path, arrays: Option<(SphArraySpec, SphArraySpec)>) -> Result<MeasuredRir> {
    let entries = read_layout(layout)?;
    let fail = |offset: u64, message: String| Error::Format {
        path: layout.to_path_buf(),
        offset,
        message,
    };
    let Some(first) = entries.first() else {
        return Err(fail(0, "layout lists no loudspeakers".into()));
    };
    let speakers = entries.len();
    let mics = first.mic_channels.len();
    for (i, e) in entries.iter().enumerate() {
        if let Some(prev) = entries[..i].iter().find(|p| p.speaker == e.speaker) {
            return Err(fail(e.offset, format!("loudspeaker {} is listed twice (first at byte {})", e.speaker, prev.offset)));
        }
        if e.speaker >= speakers {
            return Err(fail(e.offset, format!("loudspeaker index {} out of range for {speakers} rows", e.speaker)));
        }
        let mut seen = vec![false; mics];
        for &m in &e.mic_channels {
            if m >= mics || std::mem::replace(&mut seen[m], true) {
                return Err(fail(
                    e.offset,
                    format!("mic_channels must be a permutation of 0..{mics}, found {m} out of range or repeated"),
                ));
            }
        }
        if e.mic_channels.len() != mics {
            return Err(fail(e.offset, format!("row lists {} microphones, the first row {mics}", e.mic_channels.len())));
        }
    }
    if let Some((spec_l, spec_m)) = &arrays {
        if spec_l.element_count() != speakers || spec_m.element_count() != mics {
            return Err(Error::Validation {
                field: "layout".into(),
                message: format!(
                    "a {mics}x{speakers} layout does not match arrays of {} microphones and {} loudspeakers",
                    spec_m.element_count(),
                    spec_l.element_count()
                ),
            });
        }
    }

    let mut fs: Option<u32> = None;
    let mut len: Option<usize> = None;
    let mut samples = vec![0.0; 0];
    for e in &entries {
        let data = read_wav(&e.file)?;
        if data.channels as usize != mics {
            return Err(fail(
                e.offset,
                format!("{} has {} channels but the row declares {mics} microphones", e.file.display(), data.channels),
            ));
        }
        match fs {
            Some(f) if f != data.fs => {
                return Err(fail(
                    e.offset,
                    format!("{} is sampled at {} Hz, earlier files at {f} Hz", e.file.display(), data.fs),
                ));
            }
            _ => fs = Some(data.fs),
        }
        let frames = data.frames();
        match len {
            Some(l) if l != frames => {
                return Err(fail(e.offset, format!("{} has {frames} frames, earlier files {l}", e.file.display())));
            }
            None => {
                len = Some(frames);
                samples = vec![0.0; mics * speakers * frames];
            }
            _ => {}
        }
        for (ch, &mic) in e.mic_channels.iter().enumerate() {
            let dst = (mic * speakers + e.speaker) * frames;
            for t in 0..frames {
                samples[dst + t] = data.samples[t * mics + ch] as f64;
            }
        }
    }
    let tensor = RirTensor::new(samples, mics, speakers, len.unwrap_or(0), fs.unwrap_or(0) as f64)?;
    Ok(MeasuredRir { tensor, arrays })
}

/// `G = (4π/M) Y_Mᴴ G_e Y_L`, the inverse of [`sh_to_elements`] for exact grids.
pub fn elements_to_sh(g_e: &CMatrix, spec_l: &SphArraySpec, spec_m: &SphArraySpec) -> CMatrix {
    let ym = SteeringMatrix::new(spec_m.grid(), spec_m.sh_order());
    let yl = SteeringMatrix::new(spec_l.grid(), spec_l.sh_order());
    let scale = Complex64::new(4.0 * PI / spec_m.element_count() as f64, 0.0);
    ym.entries().adjoint() * g_e * yl.entries() * scale
}

fn check_exact(spec: &SphArraySpec, what: &str) {
    if spec.grid().exactness_order() < spec.sh_order() {
        log::warn!(
            "{what} grid is exact only to order {}, projection at order {} is approximate",
            spec.grid().exactness_order(),
            spec.sh_order()
        );
    }
}

/// Applies a per-bin matrix map to a tensor: bins `1..T/2` are transformed,
/// DC and Nyquist are dropped and the result is resynthesized with the
/// synthesis convention.
fn map_bins(
    rir: &RirTensor,
    out_rows: usize,
    out_cols: usize,
    f: impl Fn(&CMatrix) -> CMatrix + Sync,
) -> Result<RirTensor> {
    let len = rir.len();
    if len < 4 || !len.is_multiple_of(2) {
        return Err(Error::Argument(format!("tensor length {len} must be even and at least 4")));
    }
    let half = len / 2;
    let mut planner = FftPlanner::<f64>::new();
    let analyze = planner.plan_fft_inverse(len);
    let synth = planner.plan_fft_forward(len);
    let spectra: Vec<Vec<Complex64>> = (0..rir.channels())
        .into_par_iter()
        .map(|ch| {
            let mut buf: Vec<Complex64> = rir.samples()[ch * len..(ch + 1) * len]
                .iter()
                .map(|v| Complex64::new(*v, 0.0))
                .collect();
            analyze.process(&mut buf);
            buf.truncate(half);
            buf
        })
        .collect();
    let cols = rir.cols();
    let mapped: Vec<CMatrix> = (1..half)
        .into_par_iter()
        .map(|i| f(&CMatrix::from_fn(rir.rows(), cols, |r, c| spectra[r * cols + c][i])))
        .collect();
    let scale = 1.0 / len as f64;
    let channels: Vec<Vec<f64>> = (0..out_rows * out_cols)
        .into_par_iter()
        .map(|ch| {
            let (r, c) = (ch / out_cols, ch % out_cols);
            let mut buf = vec![Complex64::new(0.0, 0.0); len];
            for i in 1..half {
                let v = mapped[i - 1][(r, c)];
                buf[i] = v;
                buf[len - i] = v.conj();
            }
            synth.process(&mut buf);
            buf.iter().map(|v| v.re * scale).collect()
        })
        .collect();
    RirTensor::new(channels.concat(), out_rows, out_cols, len, rir.fs())
}

/// Projects an element-domain tensor onto both arrays' SH bases, bin by bin.
pub fn element_tensor_to_sh(rir: &RirTensor, spec_l: &SphArraySpec, spec_m: &SphArraySpec) -> Result<RirTensor> {
    if (rir.rows(), rir.cols()) != (spec_m.element_count(), spec_l.element_count()) {
        return Err(Error::Argument(format!(
            "a {}x{} element tensor does not match {} microphones and {} loudspeakers",
            rir.rows(),
            rir.cols(),
            spec_m.element_count(),
            spec_l.element_count()
        )));
    }
    check_exact(spec_m, "microphone");
    check_exact(spec_l, "loudspeaker");
    map_bins(rir, sh_count(spec_m.sh_order()), sh_count(spec_l.sh_order()), |g| {
        elements_to_sh(g, spec_l, spec_m)
    })
}

/// Element-domain responses `Y_M G (4π/L) Y_Lᴴ` of an SH-domain tensor.
pub fn sh_tensor_to_elements(rir: &RirTensor, spec_l: &SphArraySpec, spec_m: &SphArraySpec) -> Result<RirTensor> {
    if (rir.rows(), rir.cols()) != (sh_count(spec_m.sh_order()), sh_count(spec_l.sh_order())) {
        return Err(Error::Argument("SH tensor does not match the array orders".into()));
    }
    map_bins(rir, spec_m.element_count(), spec_l.element_count(), |g| {
        sh_to_elements(g, spec_l, spec_m)
    })
}
