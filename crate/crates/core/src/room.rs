//! Shoebox rooms via image sources, and time-domain impulse-response tensors.
//!
//! Walls are numbered `x=0, x=Lx, y=0, y=Ly, z=0, z=Lz`. Along each axis an
//! image is described by a parity `p ∈ {0, 1}` and a lattice index `q`, with
//! coordinate `(1 - 2p)·x_L + 2q·Lx`; it has met the near wall `|q - p|` times
//! and the far wall `|q|` times.
//!
//! Each image contributes a free-field link from its own position, mirrored
//! on the loudspeaker side by the parity planes. Reflection coefficients are
//! real and carry no phase; the propagation delay sits in `h_n(k D_g)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freefield::{cap_diag, mode_strength_diag, norm, radial_ratio, sub, SceneGeometry, SphArraySpec};
use crate::sampling::Direction;
use crate::special::{sh_count, sh_row, SPEED_OF_SOUND};
use crate::system::{Provenance, ShMatrix};
use crate::transforms::parity_mirror;
use crate::CMatrix;

/// Default cap on `(N_M+1)²·(N_L+1)²·T` for synthesized tensors.
pub const DEFAULT_MAX_TENSOR_SAMPLES: usize = 1 << 28;

/// Reflection coefficient of one wall, possibly frequency dependent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WallReflection {
    Constant(f64),
    /// `values[i]` applies below `edges_hz[i]`; the last value applies above
    /// every edge.
    Banded { edges_hz: Vec<f64>, values: Vec<f64> },
}

impl WallReflection {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let in_range = |v: f64| (0.0..=1.0).contains(&v);
        match self {
            Self::Constant(v) if in_range(*v) => Ok(()),
            Self::Constant(v) => Err(format!("reflection coefficient {v} outside [0, 1]")),
            Self::Banded { edges_hz, values } => {
                if values.len() != edges_hz.len() + 1 {
                    return Err(format!(
                        "{} band edges need {} values, got {}",
                        edges_hz.len(),
                        edges_hz.len() + 1,
                        values.len()
                    ));
                }
                if edges_hz.windows(2).any(|w| !(w[0] < w[1])) || edges_hz.iter().any(|e| !(*e > 0.0)) {
                    return Err("band edges must be positive and strictly increasing".into());
                }
                match values.iter().find(|v| !in_range(**v)) {
                    Some(v) => Err(format!("reflection coefficient {v} outside [0, 1]")),
                    None => Ok(()),
                }
            }
        }
    }

    pub fn at(&self, f: f64) -> f64 {
        match self {
            Self::Constant(v) => *v,
            Self::Banded { edges_hz, values } => {
                let band = edges_hz.iter().take_while(|e| f >= **e).count();
                values[band]
            }
        }
    }
}

/// A rectangular room with both arrays inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomSpec {
    dims: [f64; 3],
    walls: [WallReflection; 6],
    max_order: usize,
    geometry: SceneGeometry,
}

impl RoomSpec {
    pub fn new(dims: [f64; 3], walls: [WallReflection; 6], max_order: usize, geometry: SceneGeometry) -> Result<Self> {
        if dims.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::Argument(format!("room dimensions must be positive, got {dims:?}")));
        }
        for (i, w) in walls.iter().enumerate() {
            w.validate().map_err(|m| Error::Argument(format!("wall {i}: {m}")))?;
        }
        for (name, p) in [("loudspeaker", geometry.pos_l), ("microphone", geometry.pos_m)] {
            if (0..3).any(|a| !(p[a] > 0.0 && p[a] < dims[a])) {
                return Err(Error::Argument(format!("{name} position {p:?} is not inside the room {dims:?}")));
            }
        }
        Ok(Self {
            dims,
            walls,
            max_order,
            geometry,
        })
    }

    /// Same coefficient on every wall.
    pub fn uniform(dims: [f64; 3], beta: f64, max_order: usize, geometry: SceneGeometry) -> Result<Self> {
        let w = WallReflection::Constant(beta);
        Self::new(dims, std::array::from_fn(|_| w.clone()), max_order, geometry)
    }

    pub fn dims(&self) -> [f64; 3] {
        self.dims
    }

    pub fn walls(&self) -> &[WallReflection; 6] {
        &self.walls
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn geometry(&self) -> &SceneGeometry {
        &self.geometry
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSource {
    /// Lattice indices `q` per axis.
    pub index: [i64; 3],
    /// Parity `p` per axis; odd parity means the image is mirrored.
    pub parity: [bool; 3],
    pub position: [f64; 3],
    /// Hits per wall, in wall order.
    pub hits: [u32; 6],
    pub distance: f64,
    /// Direction of the microphone seen from the image.
    pub theta_lm: Direction,
    /// Direction of the image seen from the microphone.
    pub eta_ml: Direction,
}

impl ImageSource {
    pub fn order(&self) -> u32 {
        self.hits.iter().sum()
    }

    pub fn is_direct(&self) -> bool {
        self.order() == 0
    }

    /// Product of wall coefficients along the path at frequency `f`.
    pub fn attenuation(&self, room: &RoomSpec, f: f64) -> f64 {
        self.hits
            .iter()
            .zip(room.walls())
            .map(|(h, w)| w.at(f).powi(*h as i32))
            .product()
    }
}

/// All images of total order `≤ max_order`, direct path first, then by
/// increasing order and lattice index.
pub fn enumerate_images(room: &RoomSpec) -> Vec<ImageSource> {
    let max = room.max_order() as i64;
    let src = room.geometry().pos_l;
    let mic = room.geometry().pos_m;
    // (parity, q, near hits, far hits, coordinate) per axis
    let per_axis: Vec<Vec<(bool, i64, u32, u32, f64)>> = (0..3)
        .map(|a| {
            let mut v = Vec::new();
            for q in -max..=max {
                for p in [0i64, 1] {
                    let near = (q - p).unsigned_abs() as u32;
                    let far = q.unsigned_abs() as u32;
                    if (near + far) as i64 <= max {
                        let x = (1 - 2 * p) as f64 * src[a] + 2.0 * q as f64 * room.dims()[a];
                        v.push((p == 1, q, near, far, x));
                    }
                }
            }
            v
        })
        .collect();
    let mut images = Vec::new();
    for ix in &per_axis[0] {
        for iy in &per_axis[1] {
            for iz in &per_axis[2] {
                let hits = [ix.2, ix.3, iy.2, iy.3, iz.2, iz.3];
                if hits.iter().sum::<u32>() as i64 > max {
                    continue;
                }
                let position = [ix.4, iy.4, iz.4];
                let geom = SceneGeometry { pos_l: position, pos_m: mic };
                images.push(ImageSource {
                    index: [ix.1, iy.1, iz.1],
                    parity: [ix.0, iy.0, iz.0],
                    position,
                    hits,
                    distance: norm(sub(mic, position)),
                    theta_lm: geom.theta_lm(),
                    eta_ml: geom.eta_ml(),
                });
            }
        }
    }
    images.sort_by_key(|g| (g.order(), g.index, g.parity));
    images
}

/// Frequency-independent parts of each image term, `y*(η_g)` and
/// `y(θ_g)ᵀ M_g`, plus the image list.
struct ImageBasis {
    images: Vec<ImageSource>,
    mic_rows: Vec<Vec<Complex64>>,
    speaker_rows: Vec<Vec<Complex64>>,
}

impl ImageBasis {
    fn new(room: &RoomSpec, spec_l: &SphArraySpec, spec_m: &SphArraySpec) -> Result<Self> {
        let geom = room.geometry();
        geom.check_clearance(spec_l, spec_m)?;
        let images = enumerate_images(room);
        let (nl, nm) = (spec_l.sh_order(), spec_m.sh_order());
        let mut mic_rows = Vec::with_capacity(images.len());
        let mut speaker_rows = Vec::with_capacity(images.len());
        for g in &images {
            if !(g.distance > spec_l.radius() + spec_m.radius()) {
                return Err(Error::Domain(format!(
                    "image at {:?} overlaps the microphone array",
                    g.position
                )));
            }
            mic_rows.push(sh_row(nm, g.eta_ml.theta, g.eta_ml.phi).iter().map(|y| y.conj()).collect());
            let y = sh_row(nl, g.theta_lm.theta, g.theta_lm.phi);
            let row = match parity_mirror(nl, g.parity) {
                None => y,
                Some(m) => {
                    let v = nalgebra::DVector::from_vec(y).transpose() * m.matrix();
                    v.iter().copied().collect()
                }
            };
            speaker_rows.push(row);
        }
        Ok(Self {
            images,
            mic_rows,
            speaker_rows,
        })
    }

    fn system(&self, room: &RoomSpec, spec_l: &SphArraySpec, spec_m: &SphArraySpec, k: f64) -> Result<CMatrix> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Domain(format!("room system needs k > 0, got {k}")));
        }
        let f = k * SPEED_OF_SOUND / (2.0 * PI);
        let (nl, nm) = (spec_l.sh_order(), spec_m.sh_order());
        let b = mode_strength_diag(spec_m, k)?;
        let q = cap_diag(spec_l)?;
        let active: Vec<usize> = (0..self.images.len())
            .filter(|&g| self.images[g].attenuation(room, f) != 0.0)
            .collect();
        let (rows, cols) = (sh_count(nm), sh_count(nl));
        let left = CMatrix::from_fn(rows, active.len(), |r, j| b[r] * self.mic_rows[active[j]][r]);
        let mut right = CMatrix::zeros(active.len(), cols);
        for (j, &g) in active.iter().enumerate() {
            let img = &self.images[g];
            let a = img.attenuation(room, f);
            let h = radial_ratio(nl, spec_l.radius(), img.distance, k)?;
            for c in 0..cols {
                let n = (c as f64).sqrt() as usize;
                // same association as the free-field product, so the direct
                // term alone reproduces it exactly
                right[(j, c)] = self.speaker_rows[g][c] * h[n] * q[c] * a;
            }
        }
        Ok(left * right)
    }
}

/// SH-domain room transfer matrix at wavenumber `k`.
pub fn room_system_sh(room: &RoomSpec, spec_l: &SphArraySpec, spec_m: &SphArraySpec, k: f64) -> Result<ShMatrix> {
    let basis = ImageBasis::new(room, spec_l, spec_m)?;
    let entries = basis.system(room, spec_l, spec_m, k)?;
    ShMatrix::new(entries, k, spec_m.sh_order(), spec_l.sh_order(), Provenance::Room)
}

/// Real impulse responses for every (mic coefficient, speaker coefficient)
/// pair, stored channel-major with channel `row · cols + col`.
#[derive(Debug, Clone, PartialEq)]
pub struct RirTensor {
    samples: Vec<f64>,
    rows: usize,
    cols: usize,
    len: usize,
    fs: f64,
}

impl RirTensor {
    pub fn new(samples: Vec<f64>, rows: usize, cols: usize, len: usize, fs: f64) -> Result<Self> {
        if samples.len() != rows * cols * len {
            return Err(Error::Argument(format!(
                "{} samples do not fill a {rows}x{cols}x{len} tensor",
                samples.len()
            )));
        }
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::Argument(format!("sample rate must be positive, got {fs}")));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("tensor has non-finite samples".into()));
        }
        Ok(Self {
            samples,
            rows,
            cols,
            len,
            fs,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn duration(&self) -> f64 {
        self.len as f64 / self.fs
    }

    pub fn channels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn channel(&self, row: usize, col: usize) -> &[f64] {
        let ch = row * self.cols + col;
        &self.samples[ch * self.len..(ch + 1) * self.len]
    }

    /// The omnidirectional-to-omnidirectional response.
    pub fn omni(&self) -> &[f64] {
        self.channel(0, 0)
    }

    /// Interleaved frames, as stored in a multichannel audio file.
    pub fn interleaved(&self) -> Vec<f64> {
        let ch = self.channels();
        let mut out = vec![0.0; ch * self.len];
        for c in 0..ch {
            for t in 0..self.len {
                out[t * ch + c] = self.samples[c * self.len + t];
            }
        }
        out
    }

    pub fn from_interleaved(frames: &[f64], rows: usize, cols: usize, fs: f64) -> Result<Self> {
        let ch = rows * cols;
        if ch == 0 || !frames.len().is_multiple_of(ch) {
            return Err(Error::Argument(format!(
                "{} interleaved samples are not a whole number of {ch}-channel frames",
                frames.len()
            )));
        }
        let len = frames.len() / ch;
        let mut samples = vec![0.0; frames.len()];
        for c in 0..ch {
            for t in 0..len {
                samples[c * len + t] = frames[t * ch + c];
            }
        }
        Self::new(samples, rows, cols, len, fs)
    }
}

/// Synthesis controls for [`synthesize_rir`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisParams {
    pub fs: f64,
    pub len: usize,
    pub max_tensor_samples: usize,
}

impl SynthesisParams {
    pub fn new(fs: f64, len: usize) -> Self {
        Self {
            fs,
            len,
            max_tensor_samples: DEFAULT_MAX_TENSOR_SAMPLES,
        }
    }
}

/// Evaluates the room system on bins `i·fs/T`, `i = 1..T/2` (DC and Nyquist
/// zeroed), completes the conjugate-symmetric spectrum and inverse transforms
/// each entry.
///
/// With the `e^{-jωt}` convention the time signal is
/// `g[t] = (1/T) Σ_i G_i e^{-j2πit/T}`.
pub fn synthesize_rir(
    room: &RoomSpec,
    spec_l: &SphArraySpec,
    spec_m: &SphArraySpec,
    params: SynthesisParams,
) -> Result<RirTensor> {
    let SynthesisParams { fs, len, max_tensor_samples } = params;
    if !(fs > 0.0 && fs.is_finite()) {
        return Err(Error::Argument(format!("sample rate must be positive, got {fs}")));
    }
    if len < 4 || !len.is_power_of_two() {
        return Err(Error::Argument(format!("response length must be a power of two >= 4, got {len}")));
    }
    let (rows, cols) = (sh_count(spec_m.sh_order()), sh_count(spec_l.sh_order()));
    let total = rows.saturating_mul(cols).saturating_mul(len);
    if total > max_tensor_samples {
        return Err(Error::Precondition(format!(
            "tensor of {rows}x{cols}x{len} = {total} samples exceeds the cap of {max_tensor_samples}"
        )));
    }
    let basis = ImageBasis::new(room, spec_l, spec_m)?;
    let half = len / 2;
    log::info!(
        "synthesizing {rows}x{cols}x{len} tensor from {} images over {} bins",
        basis.images.len(),
        half - 1
    );
    let latest = basis.images.iter().map(|g| g.distance).fold(0.0, f64::max) / SPEED_OF_SOUND;
    if latest >= len as f64 / fs {
        log::warn!(
            "latest image arrives at {latest:.3} s, beyond the {:.3} s response; late energy wraps to the start",
            len as f64 / fs
        );
    }
    let spectra: Vec<CMatrix> = (1..half)
        .into_par_iter()
        .map(|i| {
            let k = 2.0 * PI * (i as f64 * fs / len as f64) / SPEED_OF_SOUND;
            basis.system(room, spec_l, spec_m, k)
        })
        .collect::<Result<_>>()?;

    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);
    let scale = 1.0 / len as f64;
    let channels: Vec<Vec<f64>> = (0..rows * cols)
        .into_par_iter()
        .map(|ch| {
            let (r, c) = (ch / cols, ch % cols);
            let mut buf = vec![Complex64::new(0.0, 0.0); len];
            for i in 1..half {
                let v = spectra[i - 1][(r, c)];
                buf[i] = v;
                buf[len - i] = v.conj();
            }
            fft.process(&mut buf);
            buf.iter().map(|v| v.re * scale).collect()
        })
        .collect();
    if channels.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Domain("synthesized response is not finite".into()));
    }
    RirTensor::new(channels.concat(), rows, cols, len, fs)
}
