//! Effective rank, time-windowed system matrices and regularized
//! reproduction.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::room::RirTensor;
use crate::sampling::{steering_vector, ShVector, SphGrid};
use crate::special::sh_count;
use crate::system::ShMatrix;
use crate::CMatrix;

/// Singular values, descending.
pub fn singular_spectrum(matrix: &CMatrix) -> Vec<f64> {
    if matrix.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = matrix.singular_values().iter().map(|v| v.max(0.0)).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `exp(H)` with `H` the entropy of the L1-normalized spectrum.
pub fn effective_rank_from_spectrum(sigma: &[f64]) -> Result<f64> {
    let total: f64 = sigma.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Argument("effective rank is undefined for a zero matrix".into()));
    }
    // H = -Σ p ln p with p = σ/Σσ, rearranged as ln Σσ - Σ σ ln σ / Σσ
    let weighted: f64 = sigma.iter().filter(|s| **s > 0.0).map(|s| s * s.ln()).sum();
    Ok((total.ln() - weighted / total).exp())
}

pub fn effective_rank(matrix: &CMatrix) -> Result<f64> {
    effective_rank_from_spectrum(&singular_spectrum(matrix))
}

/// Number of samples inside the window `[0, τ)`.
fn window_len(tau: f64, rir: &RirTensor) -> Result<usize> {
    let full = rir.duration();
    if !(tau > 0.0 && tau <= full * (1.0 + 1e-12)) {
        return Err(Error::Argument(format!(
            "window length {tau} s must lie in (0, {full}] s"
        )));
    }
    let n = (tau * rir.fs() * (1.0 - 1e-12)).ceil() as usize;
    Ok(n.min(rir.len()))
}

/// `e^{+j2πft/fs}` for `t < len`, reduced modulo one period before scaling.
fn analysis_kernel(f: f64, fs: f64, len: usize) -> Result<Vec<Complex64>> {
    if !(f > 0.0 && f < fs / 2.0) {
        return Err(Error::Argument(format!(
            "analysis frequency {f} Hz must lie in (0, {}) Hz",
            fs / 2.0
        )));
    }
    Ok((0..len)
        .map(|t| {
            let cycles = (f * t as f64).rem_euclid(fs) / fs;
            Complex64::from_polar(1.0, 2.0 * PI * cycles)
        })
        .collect())
}

/// `G[τ, f] = Σ_{t < τ·fs} g[t] e^{+j2πft/fs}`.
///
/// The kernel sign matches the synthesis convention, so a full-length window
/// returns the frequency response the tensor was built from.
pub fn windowed_system(rir: &RirTensor, tau: f64, f: f64) -> Result<CMatrix> {
    let n = window_len(tau, rir)?;
    let kernel = analysis_kernel(f, rir.fs(), n)?;
    let values: Vec<Complex64> = (0..rir.channels())
        .into_par_iter()
        .map(|ch| {
            let g = &rir.samples()[ch * rir.len()..ch * rir.len() + n];
            g.iter().zip(&kernel).map(|(g, e)| e * *g).sum()
        })
        .collect();
    Ok(CMatrix::from_fn(rir.rows(), rir.cols(), |r, c| values[r * rir.cols() + c]))
}

/// Effective rank of `G[τ, f]` over a window grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ErankCurve {
    pub taus: Vec<f64>,
    pub eranks: Vec<f64>,
    pub analysis_freq: f64,
}

/// Windows whose matrix is identically zero are left out of the curve.
pub fn erank_vs_window(rir: &RirTensor, f: f64, taus: &[f64]) -> Result<ErankCurve> {
    if taus.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Argument("window lengths must be strictly increasing".into()));
    }
    let ends: Vec<usize> = taus.iter().map(|t| window_len(*t, rir)).collect::<Result<_>>()?;
    let kernel = analysis_kernel(f, rir.fs(), rir.len())?;
    // running prefix sums per channel, sampled at each window end
    let per_channel: Vec<Vec<Complex64>> = (0..rir.channels())
        .into_par_iter()
        .map(|ch| {
            let g = &rir.samples()[ch * rir.len()..(ch + 1) * rir.len()];
            let mut acc = Complex64::new(0.0, 0.0);
            let mut t = 0;
            ends.iter()
                .map(|&end| {
                    while t < end {
                        acc += kernel[t] * g[t];
                        t += 1;
                    }
                    acc
                })
                .collect()
        })
        .collect();
    let cols = rir.cols();
    let eranks: Vec<Option<f64>> = (0..taus.len())
        .into_par_iter()
        .map(|w| {
            let m = CMatrix::from_fn(rir.rows(), cols, |r, c| per_channel[r * cols + c][w]);
            if m.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
                None
            } else {
                Some(effective_rank(&m).expect("nonzero matrix"))
            }
        })
        .collect();
    let (kept_taus, kept): (Vec<f64>, Vec<f64>) = taus
        .iter()
        .zip(eranks)
        .filter_map(|(t, e)| e.map(|e| (*t, e)))
        .unzip();
    Ok(ErankCurve {
        taus: kept_taus,
        eranks: kept,
        analysis_freq: f,
    })
}

/// Pseudo-inverse that inverts only singular values within `threshold_db`
/// of the largest.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoInverse {
    pub matrix: CMatrix,
    pub inverted_count: usize,
}

pub fn regularized_pinv(matrix: &CMatrix, threshold_db: f64) -> Result<PseudoInverse> {
    if threshold_db.is_nan() {
        return Err(Error::Argument("threshold must be a number".into()));
    }
    let svd = matrix.clone().svd(true, true);
    let s1 = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if !(s1 > 0.0) {
        return Err(Error::Argument("cannot invert a zero matrix".into()));
    }
    let floor = s1 * 10f64.powf(-threshold_db / 20.0);
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    let mut pinv = CMatrix::zeros(matrix.ncols(), matrix.nrows());
    let mut inverted_count = 0;
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s >= floor && *s > 0.0 {
            inverted_count += 1;
            pinv += v_t.row(i).adjoint() * u.column(i).adjoint() * Complex64::new(1.0 / s, 0.0);
        }
    }
    Ok(PseudoInverse {
        matrix: pinv,
        inverted_count,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReproductionReport {
    pub target: ShVector,
    pub achieved: ShVector,
    pub weights: ShVector,
    pub error_db: f64,
    pub inverted_count: usize,
}

/// `u = G† p_t`, `p_a = G u`, error `20 log10(‖p_a − p_t‖ / ‖p_t‖)`.
pub fn reproduce_field(sys: &ShMatrix, target: &ShVector, threshold_db: f64) -> Result<ReproductionReport> {
    if target.order() != sys.mic_order() {
        return Err(Error::Argument(format!(
            "target order {} does not match microphone order {}",
            target.order(),
            sys.mic_order()
        )));
    }
    let norm_t = target.norm();
    if !(norm_t > 0.0) {
        return Err(Error::Argument("target field is zero".into()));
    }
    let pinv = regularized_pinv(sys.entries(), threshold_db)?;
    let p_t: DVector<Complex64> = target.as_column();
    let u = &pinv.matrix * &p_t;
    let p_a = sys.entries() * &u;
    let error_db = 20.0 * ((&p_a - &p_t).norm() / norm_t).log10();
    Ok(ReproductionReport {
        target: target.clone(),
        achieved: ShVector::new(p_a.iter().copied().collect(), sys.mic_order())?,
        weights: ShVector::new(u.iter().copied().collect(), sys.speaker_order())?,
        error_db,
        inverted_count: pinv.inverted_count,
    })
}

/// Unit-norm target field: the plane-wave steering vectors of the 12-point
/// icosahedral layout, orthonormalized and summed with equal weights.
pub fn reproduction_target(order: usize) -> Result<ShVector> {
    let grid = SphGrid::builtin("icosahedron_12")?;
    let dim = sh_count(order);
    let cols: Vec<DVector<Complex64>> = grid
        .points()
        .iter()
        .map(|d| DVector::from_vec(steering_vector(*d, order).into_coeffs()))
        .collect();
    // modified Gram-Schmidt, dropping dependent directions at low orders
    let mut basis: Vec<DVector<Complex64>> = Vec::new();
    for c in cols {
        let mut v = c;
        for b in &basis {
            let proj = b.dotc(&v);
            v -= b * proj;
        }
        let n = v.norm();
        if n > 1e-10 {
            basis.push(v / Complex64::new(n, 0.0));
        }
    }
    let mut sum = DVector::zeros(dim);
    for b in &basis {
        sum += b;
    }
    let n = sum.norm();
    ShVector::new(sum.iter().map(|v| v / n).collect(), order)
}
