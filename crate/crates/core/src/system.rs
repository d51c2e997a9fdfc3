use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::special::sh_count;
use crate::CMatrix;

/// Where a transfer matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    FreeField,
    Room,
    Measured,
}

/// A transfer matrix in the SH domain: rows are microphone-array pressure
/// coefficients, columns loudspeaker-array velocity coefficients, both in
/// packed `(n, m)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ShMatrix {
    entries: CMatrix,
    k: f64,
    mic_order: usize,
    speaker_order: usize,
    provenance: Provenance,
}

impl ShMatrix {
    pub fn new(
        entries: CMatrix,
        k: f64,
        mic_order: usize,
        speaker_order: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        if entries.nrows() != sh_count(mic_order) || entries.ncols() != sh_count(speaker_order) {
            return Err(Error::Argument(format!(
                "a {}x{} matrix does not match orders ({mic_order}, {speaker_order})",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Domain("transfer matrix has non-finite entries".into()));
        }
        Ok(Self {
            entries,
            k,
            mic_order,
            speaker_order,
            provenance,
        })
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    /// Wavenumber in rad/m.
    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn mic_order(&self) -> usize {
        self.mic_order
    }

    pub fn speaker_order(&self) -> usize {
        self.speaker_order
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub(crate) fn with_entries(&self, entries: CMatrix) -> Self {
        Self {
            entries,
            ..self.clone()
        }
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        self.with_entries(&self.entries * s)
    }
}
