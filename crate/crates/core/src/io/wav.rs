//! 32-bit float multichannel WAV files.
//!
//! Reading walks the RIFF chunk list first so that malformed or truncated
//! files are reported with the byte offset where they go wrong; decoding
//! itself is done by `hound`.

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic_with;

/// Interleaved float samples, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WavData {
    pub channels: u16,
    pub fs: u32,
    pub samples: Vec<f32>,
}

impl WavData {
    pub fn frames(&self) -> usize {
        self.samples.len() / self.channels as usize
    }
}

pub fn write_wav(path: &Path, data: &WavData) -> Result<()> {
    let channels = data.channels as usize;
    if channels == 0 || !data.samples.len().is_multiple_of(channels) {
        return Err(Error::Argument(format!(
            "{} samples do not split into {channels} channels",
            data.samples.len()
        )));
    }
    if data.samples.len() as u64 * 4 > u32::MAX as u64 - 1024 {
        return Err(Error::Argument("sample data exceeds the 4 GiB WAV limit".into()));
    }
    let spec = hound::WavSpec {
        channels: data.channels,
        sample_rate: data.fs,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    write_atomic_with(path, |file| {
        let mut w = hound::WavWriter::new(std::io::BufWriter::new(file), spec).map_err(hound_io)?;
        for s in &data.samples {
            w.write_sample(*s).map_err(hound_io)?;
        }
        w.finalize().map_err(hound_io)
    })
}

fn hound_io(e: hound::Error) -> std::io::Error {
    match e {
        hound::Error::IoError(e) => e,
        other => std::io::Error::other(other.to_string()),
    }
}

/// Location of the sample payload found by the chunk walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    channels: u16,
    fs: u32,
    data_offset: u64,
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn scan(bytes: &[u8], path: &Path) -> Result<Layout> {
    let fail = |offset: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    if bytes.len() < 12 {
        return Err(fail(bytes.len(), "file ends inside the RIFF header".into()));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(fail(0, "missing RIFF signature".into()));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(fail(8, "RIFF form type is not WAVE".into()));
    }
    let mut at = 12;
    let mut fmt: Option<(u16, u32, u16)> = None;
    while at < bytes.len() {
        if bytes.len() - at < 8 {
            return Err(fail(at, "file ends inside a chunk header".into()));
        }
        let id = String::from_utf8_lossy(&bytes[at..at + 4]).into_owned();
        let size = le_u32(bytes, at + 4) as usize;
        let body = at + 8;
        if bytes.len() - body < size {
            return Err(fail(
                body,
                format!("chunk `{id}` declares {size} bytes but only {} remain (truncated file)", bytes.len() - body),
            ));
        }
        match id.as_str() {
            "fmt " => {
                if size < 16 {
                    return Err(fail(body, format!("fmt chunk of {size} bytes is too short")));
                }
                let mut tag = le_u16(bytes, body);
                let channels = le_u16(bytes, body + 2);
                let fs = le_u32(bytes, body + 4);
                let block = le_u16(bytes, body + 12);
                let bits = le_u16(bytes, body + 14);
                if tag == 0xfffe {
                    if size < 40 {
                        return Err(fail(body, "extensible fmt chunk is too short".into()));
                    }
                    tag = le_u16(bytes, body + 24);
                }
                if tag != 3 || bits != 32 {
                    return Err(fail(body, format!("expected 32-bit float samples, found format {tag} with {bits} bits")));
                }
                if channels == 0 || block != channels.wrapping_mul(4) {
                    return Err(fail(body + 2, format!("{channels} channels with block size {block} is inconsistent")));
                }
                fmt = Some((channels, fs, block));
            }
            "data" => {
                let Some((channels, fs, block)) = fmt else {
                    return Err(fail(at, "data chunk precedes the fmt chunk".into()));
                };
                if !size.is_multiple_of(block as usize) {
                    return Err(fail(body, format!("{size} data bytes are not a whole number of {block}-byte frames")));
                }
                return Ok(Layout {
                    channels,
                    fs,
                    data_offset: body as u64,
                });
            }
            _ => {}
        }
        at = body + size + (size & 1);
    }
    Err(fail(bytes.len(), "no data chunk found".into()))
}

pub fn read_wav(path: &Path) -> Result<WavData> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let layout = scan(&bytes, path)?;
    let decode_err = |e: hound::Error| Error::Format {
        path: path.to_path_buf(),
        offset: layout.data_offset,
        message: e.to_string(),
    };
    let reader = hound::WavReader::new(Cursor::new(&bytes)).map_err(decode_err)?;
    let samples = reader
        .into_samples::<f32>()
        .collect::<std::result::Result<Vec<f32>, _>>()
        .map_err(decode_err)?;
    Ok(WavData {
        channels: layout.channels,
        fs: layout.fs,
        samples,
    })
}
