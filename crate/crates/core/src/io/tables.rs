//! CSV result tables and the channel manifest that accompanies tensor WAVs.
//!
//! Schemas (one header line, shortest round-trip floats):
//!
//! | file | columns |
//! |------|---------|
//! | `erank_curve.csv` | `tau_s,erank` |
//! | `singular_spectrum*.csv` | `index,sigma` (index from 1, descending σ) |
//! | `reproduction.csv` | `coeff_index,target_re,target_im,achieved_re,achieved_im` |
//! | `omni_rir.csv` | `t_s,amplitude` |
//! | target fields | `coeff_index,re,im` |
//!
//! A tensor `name.wav` has channel `row·cols + col` and a sidecar
//! `name_manifest.csv`, either `channel,mic_index,speaker_index,mic_n,mic_m,speaker_n,speaker_m`
//! for SH-domain tensors or `channel,mic_element,speaker_element` for
//! element-domain responses.

use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::analysis::{ErankCurve, ReproductionReport};
use crate::error::{Error, Result};
use crate::io::wav::{read_wav, write_wav, WavData};
use crate::io::{fmt_f64, write_atomic};
use crate::room::RirTensor;
use crate::special::sh_count;

pub const ERANK_HEADER: &[&str] = &["tau_s", "erank"];
pub const SPECTRUM_HEADER: &[&str] = &["index", "sigma"];
pub const REPRODUCTION_HEADER: &[&str] = &["coeff_index", "target_re", "target_im", "achieved_re", "achieved_im"];
pub const OMNI_HEADER: &[&str] = &["t_s", "amplitude"];
pub const TARGET_HEADER: &[&str] = &["coeff_index", "re", "im"];

const SH_MANIFEST_HEADER: &[&str] = &["channel", "mic_index", "speaker_index", "mic_n", "mic_m", "speaker_n", "speaker_m"];
const ELEMENT_MANIFEST_HEADER: &[&str] = &["channel", "mic_element", "speaker_element"];

fn table(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

pub fn erank_curve_csv(curve: &ErankCurve) -> String {
    table(
        ERANK_HEADER,
        curve.taus.iter().zip(&curve.eranks).map(|(t, e)| vec![fmt_f64(*t), fmt_f64(*e)]),
    )
}

pub fn spectrum_csv(sigma: &[f64]) -> String {
    table(
        SPECTRUM_HEADER,
        sigma.iter().enumerate().map(|(i, s)| vec![(i + 1).to_string(), fmt_f64(*s)]),
    )
}

pub fn reproduction_csv(report: &ReproductionReport) -> String {
    table(
        REPRODUCTION_HEADER,
        report.target.coeffs().iter().zip(report.achieved.coeffs()).enumerate().map(|(i, (t, a))| {
            vec![i.to_string(), fmt_f64(t.re), fmt_f64(t.im), fmt_f64(a.re), fmt_f64(a.im)]
        }),
    )
}

pub fn omni_csv(trace: &[f64], fs: f64) -> String {
    table(
        OMNI_HEADER,
        trace.iter().enumerate().map(|(i, v)| vec![fmt_f64(i as f64 / fs), fmt_f64(*v)]),
    )
}

pub fn target_csv(coeffs: &[Complex64]) -> String {
    table(
        TARGET_HEADER,
        coeffs.iter().enumerate().map(|(i, c)| vec![i.to_string(), fmt_f64(c.re), fmt_f64(c.im)]),
    )
}

/// Parsed rows of a numeric table, each with the byte offset of its line.
struct Table {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(file);
        let fail = |offset: u64, message: String| Error::Format {
            path: path.to_path_buf(),
            offset,
            message,
        };
        let from_csv = |e: csv::Error| {
            let offset = e.position().map(|p| p.byte()).unwrap_or(0);
            match e.into_kind() {
                csv::ErrorKind::Io(source) => Error::io(path, source),
                kind => fail(offset, format!("{kind:?}")),
            }
        };
        let header: Vec<String> = rdr.headers().map_err(from_csv)?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(from_csv)?;
            let offset = rec.position().map(|p| p.byte()).unwrap_or(0);
            rows.push((offset, rec.iter().map(str::to_string).collect()));
        }
        Ok(Self {
            path: path.to_path_buf(),
            header,
            rows,
        })
    }

    fn fail(&self, offset: u64, message: String) -> Error {
        Error::Format {
            path: self.path.clone(),
            offset,
            message,
        }
    }

    fn expect_header(&self, expected: &[&str]) -> Result<()> {
        if self.header != expected {
            return Err(self.fail(0, format!("expected header `{}`, found `{}`", expected.join(","), self.header.join(","))));
        }
        Ok(())
    }

    fn parse<T: std::str::FromStr>(&self, offset: u64, field: &str) -> Result<T> {
        field
            .parse()
            .map_err(|_| self.fail(offset, format!("cannot parse `{field}`")))
    }

    fn floats(&self, expected: &[&str]) -> Result<Vec<Vec<f64>>> {
        self.expect_header(expected)?;
        self.rows
            .iter()
            .map(|(off, r)| r.iter().map(|f| self.parse(*off, f)).collect())
            .collect()
    }
}

fn column(rows: &[Vec<f64>], i: usize) -> Vec<f64> {
    rows.iter().map(|r| r[i]).collect()
}

pub fn read_erank_curve(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let rows = Table::read(path)?.floats(ERANK_HEADER)?;
    Ok((column(&rows, 0), column(&rows, 1)))
}

pub fn read_spectrum(path: &Path) -> Result<Vec<f64>> {
    let rows = Table::read(path)?.floats(SPECTRUM_HEADER)?;
    Ok(column(&rows, 1))
}

pub fn read_omni(path: &Path) -> Result<Vec<f64>> {
    let rows = Table::read(path)?.floats(OMNI_HEADER)?;
    Ok(column(&rows, 1))
}

/// Target and achieved coefficients of a `reproduction.csv`.
pub fn read_reproduction(path: &Path) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let rows = Table::read(path)?.floats(REPRODUCTION_HEADER)?;
    Ok((
        rows.iter().map(|r| Complex64::new(r[1], r[2])).collect(),
        rows.iter().map(|r| Complex64::new(r[3], r[4])).collect(),
    ))
}

/// Coefficients of a target-field CSV; indices must run `0, 1, …`.
pub fn read_target(path: &Path) -> Result<Vec<Complex64>> {
    let t = Table::read(path)?;
    let rows = t.floats(TARGET_HEADER)?;
    for (i, ((off, _), r)) in t.rows.iter().zip(&rows).enumerate() {
        if r[0] != i as f64 {
            return Err(t.fail(*off, format!("coefficient index {} out of sequence (expected {i})", r[0])));
        }
    }
    Ok(rows.iter().map(|r| Complex64::new(r[1], r[2])).collect())
}

/// What the rows and columns of a stored tensor mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorDomain {
    Sh { mic_order: usize, speaker_order: usize },
    Elements { mics: usize, speakers: usize },
}

impl TensorDomain {
    pub fn rows(&self) -> usize {
        match self {
            Self::Sh { mic_order, .. } => sh_count(*mic_order),
            Self::Elements { mics, .. } => *mics,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Self::Sh { speaker_order, .. } => sh_count(*speaker_order),
            Self::Elements { speakers, .. } => *speakers,
        }
    }
}

fn nm_of(p: usize) -> (usize, i64) {
    let n = (p as f64).sqrt() as usize;
    let n = if (n + 1) * (n + 1) <= p { n + 1 } else { n };
    (n, p as i64 - (n * n + n) as i64)
}

pub fn manifest_csv(domain: TensorDomain) -> String {
    let cols = domain.cols();
    let rows = (0..domain.rows() * cols).map(|ch| {
        let (r, c) = (ch / cols, ch % cols);
        match domain {
            TensorDomain::Sh { .. } => {
                let ((rn, rm), (cn, cm)) = (nm_of(r), nm_of(c));
                [ch, r, c].iter().map(|v| v.to_string()).chain([rn.to_string(), rm.to_string(), cn.to_string(), cm.to_string()]).collect()
            }
            TensorDomain::Elements { .. } => vec![ch.to_string(), r.to_string(), c.to_string()],
        }
    });
    let header = match domain {
        TensorDomain::Sh { .. } => SH_MANIFEST_HEADER,
        TensorDomain::Elements { .. } => ELEMENT_MANIFEST_HEADER,
    };
    table(header, rows)
}

pub fn read_manifest(path: &Path) -> Result<TensorDomain> {
    let t = Table::read(path)?;
    let sh = t.header == SH_MANIFEST_HEADER;
    if !sh {
        t.expect_header(ELEMENT_MANIFEST_HEADER).map_err(|_| {
            t.fail(
                0,
                format!(
                    "expected header `{}` or `{}`, found `{}`",
                    SH_MANIFEST_HEADER.join(","),
                    ELEMENT_MANIFEST_HEADER.join(","),
                    t.header.join(",")
                ),
            )
        })?;
    }
    let mut parsed = Vec::with_capacity(t.rows.len());
    for (off, r) in &t.rows {
        let v: Vec<i64> = r.iter().map(|f| t.parse(*off, f)).collect::<Result<_>>()?;
        parsed.push((*off, v));
    }
    let Some(&(last_off, _)) = parsed.last() else {
        return Err(t.fail(0, "manifest lists no channels".into()));
    };
    let rows = parsed.iter().map(|(_, v)| v[1]).max().unwrap_or(0) as usize + 1;
    let cols = parsed.iter().map(|(_, v)| v[2]).max().unwrap_or(0) as usize + 1;
    if parsed.len() != rows * cols {
        return Err(t.fail(last_off, format!("{} channels do not form a {rows}x{cols} grid", parsed.len())));
    }
    for (i, (off, v)) in parsed.iter().enumerate() {
        let (r, c) = (i / cols, i % cols);
        if v[0] != i as i64 || v[1] != r as i64 || v[2] != c as i64 {
            return Err(t.fail(*off, format!("channel {i} must map to ({r}, {c}) in row-major order")));
        }
        if sh && (v[3], v[4], v[5], v[6]) != {
            let ((rn, rm), (cn, cm)) = (nm_of(r), nm_of(c));
            (rn as i64, rm, cn as i64, cm)
        } {
            return Err(t.fail(*off, format!("channel {i} has (n, m) labels inconsistent with packed order")));
        }
    }
    if !sh {
        return Ok(TensorDomain::Elements { mics: rows, speakers: cols });
    }
    let order_of = |count: usize, what: &str| {
        let n = (count as f64).sqrt() as usize - 1;
        if sh_count(n) == count {
            Ok(n)
        } else {
            Err(t.fail(last_off, format!("{count} {what} coefficients is not a square count")))
        }
    };
    Ok(TensorDomain::Sh {
        mic_order: order_of(rows, "microphone")?,
        speaker_order: order_of(cols, "loudspeaker")?,
    })
}

/// `dir/name.wav` → `dir/name_manifest.csv`.
pub fn manifest_path(wav: &Path) -> PathBuf {
    let stem = wav.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    wav.with_file_name(format!("{stem}_manifest.csv"))
}

pub fn write_tensor(wav: &Path, rir: &RirTensor, domain: TensorDomain) -> Result<()> {
    if (domain.rows(), domain.cols()) != (rir.rows(), rir.cols()) {
        return Err(Error::Argument(format!(
            "domain {domain:?} does not describe a {}x{} tensor",
            rir.rows(),
            rir.cols()
        )));
    }
    let fs = rir.fs();
    if !(fs.fract() == 0.0 && fs <= u32::MAX as f64) {
        return Err(Error::Argument(format!("WAV needs an integer sample rate, got {fs}")));
    }
    let channels = u16::try_from(rir.channels())
        .map_err(|_| Error::Argument(format!("{} channels exceed the WAV limit", rir.channels())))?;
    let data = WavData {
        channels,
        fs: fs as u32,
        samples: rir.interleaved().into_iter().map(|v| v as f32).collect(),
    };
    write_wav(wav, &data)?;
    write_atomic(&manifest_path(wav), manifest_csv(domain).as_bytes())
}

/// Reads a tensor WAV and its sidecar manifest.
pub fn read_tensor(wav: &Path) -> Result<(RirTensor, TensorDomain)> {
    let domain = read_manifest(&manifest_path(wav))?;
    let data = read_wav(wav)?;
    let expected = domain.rows() * domain.cols();
    if data.channels as usize != expected {
        return Err(Error::Format {
            path: wav.to_path_buf(),
            offset: 22,
            message: format!("file has {} channels but the manifest describes {expected}", data.channels),
        });
    }
    let frames: Vec<f64> = data.samples.iter().map(|v| *v as f64).collect();
    let rir = RirTensor::from_interleaved(&frames, domain.rows(), domain.cols(), data.fs as f64)?;
    Ok((rir, domain))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::ShVector;

    #[test]
    fn packed_labels() {
        for p in 0..49 {
            let (n, m) = nm_of(p);
            assert_eq!((n * n + n) as i64 + m, p as i64);
        }
        assert_eq!(nm_of(0), (0, 0));
        assert_eq!(nm_of(3), (1, 1));
        assert_eq!(nm_of(4), (2, -2));
    }

    #[test]
    fn manifests_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for d in [
            TensorDomain::Sh { mic_order: 2, speaker_order: 1 },
            TensorDomain::Elements { mics: 32, speakers: 12 },
        ] {
            let p = dir.path().join("m.csv");
            write_atomic(&p, manifest_csv(d).as_bytes()).unwrap();
            assert_eq!(read_manifest(&p).unwrap(), d);
        }
        let text = manifest_csv(TensorDomain::Sh { mic_order: 1, speaker_order: 0 });
        assert_eq!(text.lines().nth(4).unwrap(), "3,3,0,1,1,0,0");
    }

    #[test]
    fn corrupt_manifest_points_at_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let good = manifest_csv(TensorDomain::Elements { mics: 2, speakers: 2 });
        let bad = good.replace("2,1,0", "2,0,1");
        write_atomic(&p, bad.as_bytes()).unwrap();
        let expected_offset = good.find("2,1,0").unwrap() as u64;
        match read_manifest(&p).unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset, expected_offset),
            e => panic!("unexpected {e}"),
        }
        write_atomic(&p, b"a,b\n1,2\n").unwrap();
        assert!(matches!(read_manifest(&p).unwrap_err(), Error::Format { offset: 0, .. }));
    }

    #[test]
    fn tensor_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let wav = dir.path().join("rir.wav");
        let len = 16;
        let samples: Vec<f64> = (0..4 * 9 * len).map(|i| ((i as f32) * 0.01).cos() as f64).collect();
        let rir = RirTensor::new(samples, 4, 9, len, 8000.0).unwrap();
        let d = TensorDomain::Sh { mic_order: 1, speaker_order: 2 };
        write_tensor(&wav, &rir, d).unwrap();
        let (back, dom) = read_tensor(&wav).unwrap();
        assert_eq!(dom, d);
        assert_eq!(back, rir);
        assert!(manifest_path(&wav).ends_with("rir_manifest.csv"));

        write_atomic(&manifest_path(&wav), manifest_csv(TensorDomain::Sh { mic_order: 1, speaker_order: 1 }).as_bytes()).unwrap();
        assert!(matches!(read_tensor(&wav).unwrap_err(), Error::Format { .. }));
    }

    #[test]
    fn result_tables_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let curve = ErankCurve {
            taus: vec![1e-3, 0.0123456789, 0.5],
            eranks: vec![1.0, 1.0000000000000002, 7.25],
            analysis_freq: 700.0,
        };
        let p = dir.path().join("erank_curve.csv");
        write_atomic(&p, erank_curve_csv(&curve).as_bytes()).unwrap();
        assert_eq!(read_erank_curve(&p).unwrap(), (curve.taus.clone(), curve.eranks.clone()));

        let sigma = vec![3.0, 1.0 / 3.0, 1e-300, 0.0];
        let p = dir.path().join("singular_spectrum.csv");
        write_atomic(&p, spectrum_csv(&sigma).as_bytes()).unwrap();
        assert_eq!(read_spectrum(&p).unwrap(), sigma);
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("index,sigma\n1,3.0\n"));

        let trace = vec![0.0, -0.25, 1e-9];
        let p = dir.path().join("omni_rir.csv");
        write_atomic(&p, omni_csv(&trace, 48_000.0).as_bytes()).unwrap();
        assert_eq!(read_omni(&p).unwrap(), trace);

        let t = ShVector::new(vec![Complex64::new(0.1, -0.2); 4], 1).unwrap();
        let a = ShVector::new(vec![Complex64::new(1.0 / 7.0, 2e-17); 4], 1).unwrap();
        let report = ReproductionReport {
            target: t.clone(),
            achieved: a.clone(),
            weights: a.clone(),
            error_db: -3.0,
            inverted_count: 2,
        };
        let p = dir.path().join("reproduction.csv");
        write_atomic(&p, reproduction_csv(&report).as_bytes()).unwrap();
        let (tt, aa) = read_reproduction(&p).unwrap();
        assert_eq!(tt, t.coeffs());
        assert_eq!(aa, a.coeffs());

        let p = dir.path().join("target.csv");
        write_atomic(&p, target_csv(t.coeffs()).as_bytes()).unwrap();
        assert_eq!(read_target(&p).unwrap(), t.coeffs());
        write_atomic(&p, b"coeff_index,re,im\n0,1,0\n2,1,0\n").unwrap();
        assert!(matches!(read_target(&p).unwrap_err(), Error::Format { offset: 24, .. }));
        write_atomic(&p, b"coeff_index,re,im\n0,x,0\n").unwrap();
        assert!(matches!(read_target(&p).unwrap_err(), Error::Format { offset: 18, .. }));
    }
}
