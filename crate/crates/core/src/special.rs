//! Scalar special functions on which the array models are built.
//!
//! * complex spherical harmonics `Y_n^m` with the Condon–Shortley phase,
//! * spherical Bessel `j_n`, Neumann `y_n` and Hankel `h_n = j_n + j·y_n`
//!   functions together with their derivatives,
//! * the spherical-cap radiation coefficients `q(n, cos α)`,
//! * the open/rigid sphere mode strength `b_n(kr)`.
//!
//! Outgoing waves are `h_n(kr)` under an `e^{-jωt}` time dependence.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default speed of sound in m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;
/// Default density of air in kg/m³.
pub const AIR_DENSITY: f64 = 1.2;

/// Number of coefficients of an order-`order` expansion, `(N+1)²`.
pub const fn sh_count(order: usize) -> usize {
    (order + 1) * (order + 1)
}

/// An `(n, m)` spherical-harmonic index with its packed position `n² + n + m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ShIndex {
    n: usize,
    m: i64,
}

impl ShIndex {
    pub fn new(n: usize, m: i64) -> Result<Self> {
        if m.unsigned_abs() as usize > n {
            return Err(Error::Argument(format!(
                "degree m = {m} out of range for order n = {n}"
            )));
        }
        Ok(Self { n, m })
    }

    pub fn from_packed(p: usize) -> Self {
        let n = (p as f64).sqrt() as usize;
        // guard against rounding of the square root near perfect squares
        let n = if (n + 1) * (n + 1) <= p {
            n + 1
        } else if n * n > p {
            n - 1
        } else {
            n
        };
        let m = p as i64 - (n * n + n) as i64;
        Self { n, m }
    }

    pub fn n(self) -> usize {
        self.n
    }

    pub fn m(self) -> i64 {
        self.m
    }

    pub fn packed(self) -> usize {
        ((self.n * self.n + self.n) as i64 + self.m) as usize
    }

    /// All indices up to `order` in packed order.
    pub fn iter(order: usize) -> impl Iterator<Item = ShIndex> {
        (0..sh_count(order)).map(ShIndex::from_packed)
    }
}

/// Orthonormalised associated Legendre values for fixed `m ≥ 0`:
/// `sqrt((2n+1)/(4π) (n-m)!/(n+m)!) P_n^m(cos θ)` for `n = m..=order`.
///
/// The recurrence runs on the normalised values, so nothing overflows for
/// large orders.
fn normalized_legendre_column(order: usize, m: usize, cos_t: f64, sin_t: f64) -> Vec<f64> {
    debug_assert!(m <= order);
    let mut pmm = (0.25 / PI).sqrt();
    for k in 1..=m {
        let k = k as f64;
        // Condon–Shortley phase enters through the minus sign
        pmm *= -((2.0 * k + 1.0) / (2.0 * k)).sqrt() * sin_t;
    }
    let mut out = Vec::with_capacity(order - m + 1);
    out.push(pmm);
    if order == m {
        return out;
    }
    let mut prev = pmm;
    let mut cur = (2.0 * m as f64 + 3.0).sqrt() * cos_t * pmm;
    out.push(cur);
    let mf = m as f64;
    for n in (m + 2)..=order {
        let nf = n as f64;
        let a = ((4.0 * nf * nf - 1.0) / (nf * nf - mf * mf)).sqrt();
        let b = (((nf - 1.0) * (nf - 1.0) - mf * mf) / (4.0 * (nf - 1.0) * (nf - 1.0) - 1.0)).sqrt();
        let next = a * (cos_t * cur - b * prev);
        prev = cur;
        cur = next;
        out.push(cur);
    }
    out
}

/// `Y_n^m(θ, φ)`.
pub fn sh_eval(idx: ShIndex, theta: f64, phi: f64) -> Complex64 {
    let ma = idx.m.unsigned_abs() as usize;
    let col = normalized_legendre_column(idx.n, ma, theta.cos(), theta.sin());
    let pos = col[idx.n - ma] * Complex64::from_polar(1.0, ma as f64 * phi);
    if idx.m >= 0 {
        pos
    } else if ma.is_multiple_of(2) {
        pos.conj()
    } else {
        -pos.conj()
    }
}

/// All harmonics up to `order` at one direction, in packed order.
pub fn sh_row(order: usize, theta: f64, phi: f64) -> Vec<Complex64> {
    let (sin_t, cos_t) = theta.sin_cos();
    let mut out = vec![Complex64::new(0.0, 0.0); sh_count(order)];
    for m in 0..=order {
        let col = normalized_legendre_column(order, m, cos_t, sin_t);
        let e = Complex64::from_polar(1.0, m as f64 * phi);
        for (i, &p) in col.iter().enumerate() {
            let n = m + i;
            let y = p * e;
            out[n * n + n + m] = y;
            if m > 0 {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                out[n * n + n - m] = sign * y.conj();
            }
        }
    }
    out
}

/// Legendre polynomials `P_0..=P_nmax` at `x`.
pub fn legendre_seq(nmax: usize, x: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(nmax + 1);
    p.push(1.0);
    if nmax == 0 {
        return p;
    }
    p.push(x);
    for n in 2..=nmax {
        let nf = n as f64;
        let next = ((2.0 * nf - 1.0) * x * p[n - 1] - (nf - 1.0) * p[n - 2]) / nf;
        p.push(next);
    }
    p
}

/// `j_0(x)..=j_nmax(x)` for `x ≥ 0`.
pub fn sph_bessel_seq(nmax: usize, x: f64) -> Vec<f64> {
    debug_assert!(x >= 0.0);
    let mut out = vec![0.0; nmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    if x < 1e-4 {
        // two-term ascending series; the next term is below 1e-17 relative
        let mut lead = 1.0;
        for (n, v) in out.iter_mut().enumerate() {
            if n > 0 {
                lead *= x / (2 * n + 1) as f64;
            }
            *v = lead * (1.0 - x * x / (2.0 * (2 * n + 3) as f64));
        }
        return out;
    }
    let (s, c) = x.sin_cos();
    let j0 = s / x;
    let j1 = s / (x * x) - c / x;
    if (nmax as f64) <= x {
        out[0] = j0;
        if nmax >= 1 {
            out[1] = j1;
        }
        for n in 1..nmax {
            out[n + 1] = (2 * n + 1) as f64 / x * out[n] - out[n - 1];
        }
        return out;
    }
    // Miller's downward recurrence from well above both nmax and x.
    let start = nmax + 16 + (40.0 * (nmax as f64 + x)).sqrt() as usize;
    let mut next = 0.0f64;
    let mut cur = 1e-300f64;
    for n in (1..=start).rev() {
        let prev = (2 * n + 1) as f64 / x * cur - next;
        next = cur;
        cur = prev;
        if n - 1 <= nmax {
            out[n - 1] = cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            for v in out.iter_mut().skip(n - 1) {
                *v *= 1e-250;
            }
        }
    }
    // normalise on whichever closed form is better conditioned here
    let scale = if j0.abs() >= j1.abs() || nmax == 0 {
        j0 / out[0]
    } else {
        j1 / out[1]
    };
    for v in &mut out {
        *v *= scale;
    }
    out
}

/// `y_0(x)..=y_nmax(x)` for `x > 0` by upward recurrence.
pub fn sph_neumann_seq(nmax: usize, x: f64) -> Vec<f64> {
    let (s, c) = x.sin_cos();
    let mut out = vec![0.0; nmax + 1];
    out[0] = -c / x;
    if nmax >= 1 {
        out[1] = -c / (x * x) - s / x;
    }
    for n in 1..nmax {
        out[n + 1] = (2 * n + 1) as f64 / x * out[n] - out[n - 1];
    }
    out
}

fn deriv_from_seq<T>(seq: &[T], n: usize) -> T
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Sub<Output = T> + std::ops::Neg<Output = T>,
{
    if n == 0 {
        -seq[1]
    } else {
        (seq[n - 1] * n as f64 - seq[n + 1] * (n + 1) as f64) * (1.0 / (2 * n + 1) as f64)
    }
}

/// Spherical Bessel function of the first kind `j_n(x)`, `x ≥ 0`.
pub fn sph_bessel(n: usize, x: f64) -> f64 {
    sph_bessel_seq(n, x)[n]
}

/// `j'_n(x)`.
pub fn sph_bessel_deriv(n: usize, x: f64) -> f64 {
    deriv_from_seq(&sph_bessel_seq(n + 1, x), n)
}

/// Spherical Neumann function `y_n(x)`, `x > 0`.
pub fn sph_neumann(n: usize, x: f64) -> f64 {
    sph_neumann_seq(n, x)[n]
}

/// `y'_n(x)`.
pub fn sph_neumann_deriv(n: usize, x: f64) -> f64 {
    deriv_from_seq(&sph_neumann_seq(n + 1, x), n)
}

/// `h_0(x)..=h_nmax(x)` where `h_n = j_n + j·y_n`.
pub fn sph_hankel1_seq(nmax: usize, x: f64) -> Result<Vec<Complex64>> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!(
            "spherical Hankel function requires x > 0, got {x}"
        )));
    }
    let j = sph_bessel_seq(nmax, x);
    let y = sph_neumann_seq(nmax, x);
    Ok(j.into_iter().zip(y).map(|(a, b)| Complex64::new(a, b)).collect())
}

/// Spherical Hankel function of the first kind `h_n(x)`.
pub fn sph_hankel1(n: usize, x: f64) -> Result<Complex64> {
    Ok(sph_hankel1_seq(n, x)?[n])
}

/// `h'_n(x)`.
pub fn sph_hankel1_deriv(n: usize, x: f64) -> Result<Complex64> {
    Ok(deriv_from_seq(&sph_hankel1_seq(n + 1, x)?, n))
}

/// `h_n(x)` and `h'_n(x)` for every `n ≤ nmax`.
pub(crate) fn sph_hankel1_with_deriv(nmax: usize, x: f64) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let mut h = sph_hankel1_seq(nmax + 1, x)?;
    let d = (0..=nmax).map(|n| deriv_from_seq(&h, n)).collect();
    h.truncate(nmax + 1);
    Ok((h, d))
}

/// Radiation coefficient of `count` identical spherical caps with aperture `alpha`.
///
/// `q(0) = 4πL(1 - cos α)` and `q(n) = 4πL/(2n+1) (P_{n-1}(cos α) - P_{n+1}(cos α))`.
pub fn cap_coeff(n: usize, alpha: f64, count: usize) -> f64 {
    let ca = alpha.cos();
    let scale = 4.0 * PI * count as f64;
    if n == 0 {
        scale * (1.0 - ca)
    } else {
        let p = legendre_seq(n + 1, ca);
        scale / (2 * n + 1) as f64 * (p[n - 1] - p[n + 1])
    }
}

/// Boundary condition of a microphone array sphere.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SphereKind {
    Open,
    /// Rigid scatterer of radius `r0` (not larger than the microphone radius).
    Rigid { r0: f64 },
}

/// Radial quantities shared by the mode-strength and propagation terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialContext {
    pub k: f64,
    pub r_speaker: f64,
    pub r_mic: f64,
    pub sphere: SphereKind,
    pub rho0: f64,
    pub c: f64,
}

impl RadialContext {
    pub fn validate(&self) -> Result<()> {
        if !(self.k >= 0.0) {
            return Err(Error::Argument(format!("wavenumber must be >= 0, got {}", self.k)));
        }
        if !(self.r_speaker > 0.0 && self.r_mic > 0.0) {
            return Err(Error::Argument("array radii must be positive".into()));
        }
        if let SphereKind::Rigid { r0 } = self.sphere {
            if !(r0 > 0.0 && r0 <= self.r_mic) {
                return Err(Error::Argument(format!(
                    "rigid radius r0 = {r0} must satisfy 0 < r0 <= r_mic = {}",
                    self.r_mic
                )));
            }
        }
        Ok(())
    }
}

/// `j^n` for the imaginary unit.
pub(crate) fn j_pow(n: usize) -> Complex64 {
    match n % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Mode strengths `b_0..=b_nmax` evaluated at `k·r_mic`.
pub fn mode_strength_seq(nmax: usize, ctx: &RadialContext) -> Result<Vec<Complex64>> {
    ctx.validate()?;
    let kr = ctx.k * ctx.r_mic;
    let j = sph_bessel_seq(nmax, kr);
    match ctx.sphere {
        SphereKind::Open => Ok((0..=nmax).map(|n| 4.0 * PI * j_pow(n) * j[n]).collect()),
        SphereKind::Rigid { r0 } => {
            let kr0 = ctx.k * r0;
            if !(kr0 > 0.0) {
                return Err(Error::Domain(
                    "rigid-sphere mode strength is undefined at k = 0".into(),
                ));
            }
            let h = sph_hankel1_seq(nmax, kr)?;
            let j0seq = sph_bessel_seq(nmax + 1, kr0);
            let (_, hd) = sph_hankel1_with_deriv(nmax, kr0)?;
            Ok((0..=nmax)
                .map(|n| {
                    let jd = deriv_from_seq(&j0seq, n);
                    4.0 * PI * j_pow(n) * (j[n] - jd / hd[n] * h[n])
                })
                .collect())
        }
    }
}

/// Mode strength `b_n(k r_mic)` for the configured sphere.
pub fn mode_strength(n: usize, ctx: &RadialContext) -> Result<Complex64> {
    Ok(mode_strength_seq(n, ctx)?[n])
}
