//! Free-field MIMO transfer matrices between a spherical loudspeaker array
//! (rigid sphere with vibrating caps) and a spherical microphone array.
//!
//! The microphone sees the loudspeaker field as a single plane wave of
//! amplitude `ã`, so the SH-domain matrix is the outer product
//! `G = B_M y*(η_ML) · y(θ_LM)ᵀ H_L(D) Q_L` and has unit rank.
//!
//! Time convention is `e^{-jωt}` with outgoing `h_n = h_n^{(1)}`.

use std::f64::consts::PI;

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{Direction, ShVector, SphGrid, SteeringMatrix};
use crate::special::{
    cap_coeff, mode_strength_seq, sh_count, sh_row, sph_hankel1_seq, sph_hankel1_with_deriv,
    RadialContext, SphereKind, AIR_DENSITY, SPEED_OF_SOUND,
};
use crate::system::{Provenance, ShMatrix};
use crate::CMatrix;

/// Distances below `FAR_FIELD_RATIO · r_L` trigger a far-field warning.
pub const FAR_FIELD_RATIO: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "lowercase")]
pub enum ArrayRole {
    Loudspeaker { cap_alpha: f64 },
    Microphone { sphere: SphereKind },
}

/// Geometry and SH order of one spherical array.
#[derive(Debug, Clone)]
pub struct SphArraySpec {
    radius: f64,
    grid: SphGrid,
    sh_order: usize,
    role: ArrayRole,
}

impl SphArraySpec {
    pub fn loudspeaker(radius: f64, grid: SphGrid, sh_order: usize, cap_alpha: f64) -> Result<Self> {
        if !(cap_alpha > 0.0 && cap_alpha <= PI) {
            return Err(Error::Argument(format!("cap half-angle must lie in (0, π], got {cap_alpha}")));
        }
        Self::checked(radius, grid, sh_order, ArrayRole::Loudspeaker { cap_alpha })
    }

    pub fn microphone(radius: f64, grid: SphGrid, sh_order: usize, sphere: SphereKind) -> Result<Self> {
        if let SphereKind::Rigid { r0 } = sphere {
            if !(r0 > 0.0 && r0 <= radius) {
                return Err(Error::Argument(format!(
                    "rigid radius r0 = {r0} must satisfy 0 < r0 <= {radius}"
                )));
            }
        }
        Self::checked(radius, grid, sh_order, ArrayRole::Microphone { sphere })
    }

    fn checked(radius: f64, grid: SphGrid, sh_order: usize, role: ArrayRole) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Argument(format!("array radius must be positive, got {radius}")));
        }
        if sh_count(sh_order) > grid.len() {
            return Err(Error::Argument(format!(
                "order {sh_order} needs at least {} elements, grid has {}",
                sh_count(sh_order),
                grid.len()
            )));
        }
        Ok(Self {
            radius,
            grid,
            sh_order,
            role,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn grid(&self) -> &SphGrid {
        &self.grid
    }

    pub fn sh_order(&self) -> usize {
        self.sh_order
    }

    pub fn role(&self) -> ArrayRole {
        self.role
    }

    pub fn element_count(&self) -> usize {
        self.grid.len()
    }

    fn cap_alpha(&self) -> Result<f64> {
        match self.role {
            ArrayRole::Loudspeaker { cap_alpha } => Ok(cap_alpha),
            ArrayRole::Microphone { .. } => Err(Error::Argument("expected a loudspeaker array".into())),
        }
    }

    fn sphere(&self) -> Result<SphereKind> {
        match self.role {
            ArrayRole::Microphone { sphere } => Ok(sphere),
            ArrayRole::Loudspeaker { .. } => Err(Error::Argument("expected a microphone array".into())),
        }
    }
}

/// Array centres in a shared, axis-aligned global frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneGeometry {
    pub pos_l: [f64; 3],
    pub pos_m: [f64; 3],
}

impl SceneGeometry {
    pub fn new(pos_l: [f64; 3], pos_m: [f64; 3]) -> Result<Self> {
        let g = Self { pos_l, pos_m };
        if !(g.distance() > 0.0) {
            return Err(Error::Argument("array centres coincide".into()));
        }
        Ok(g)
    }

    pub fn distance(&self) -> f64 {
        norm(sub(self.pos_m, self.pos_l))
    }

    /// Direction of the microphone array seen from the loudspeaker array.
    pub fn theta_lm(&self) -> Direction {
        Direction::from_cartesian(sub(self.pos_m, self.pos_l)).expect("nonzero separation")
    }

    /// Direction of the loudspeaker array seen from the microphone array.
    pub fn eta_ml(&self) -> Direction {
        self.theta_lm().antipode()
    }

    /// The spheres must not overlap.
    pub fn check_clearance(&self, spec_l: &SphArraySpec, spec_m: &SphArraySpec) -> Result<()> {
        let d = self.distance();
        if d <= spec_l.radius() + spec_m.radius() {
            return Err(Error::Argument(format!(
                "array spheres overlap: D = {d} m, r_L + r_M = {} m",
                spec_l.radius() + spec_m.radius()
            )));
        }
        Ok(())
    }
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn repeat_per_order<T: Copy>(per_order: &[T]) -> Vec<T> {
    per_order
        .iter()
        .enumerate()
        .flat_map(|(n, v)| std::iter::repeat_n(*v, 2 * n + 1))
        .collect()
}

fn check_wavenumber(k: f64) -> Result<()> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Domain(format!(
            "radiating-sphere propagation needs k > 0, got {k}"
        )));
    }
    Ok(())
}

/// Diagonal of `H_L(D)`: `jρ0c · h_n(kD) / h'_n(k r_L)`, each order repeated
/// `2n+1` times.
pub fn propagation_diag(spec_l: &SphArraySpec, d: f64, k: f64) -> Result<Vec<Complex64>> {
    check_wavenumber(k)?;
    if !(d > spec_l.radius()) {
        return Err(Error::Domain(format!(
            "propagation distance {d} m is inside the loudspeaker sphere"
        )));
    }
    Ok(repeat_per_order(&radial_ratio(spec_l.sh_order(), spec_l.radius(), d, k)?))
}

pub(crate) fn radial_ratio(order: usize, r_l: f64, r: f64, k: f64) -> Result<Vec<Complex64>> {
    let h = sph_hankel1_seq(order, k * r)?;
    let (_, hd) = sph_hankel1_with_deriv(order, k * r_l)?;
    let jrc = Complex64::new(0.0, AIR_DENSITY * SPEED_OF_SOUND);
    Ok(h.iter().zip(&hd).map(|(h, hd)| jrc * h / hd).collect())
}

/// Diagonal of `Q_L`.
pub fn cap_diag(spec_l: &SphArraySpec) -> Result<Vec<f64>> {
    let alpha = spec_l.cap_alpha()?;
    let l = spec_l.element_count();
    let per: Vec<f64> = (0..=spec_l.sh_order()).map(|n| cap_coeff(n, alpha, l)).collect();
    Ok(repeat_per_order(&per))
}

/// Diagonal of `B_M`.
pub fn mode_strength_diag(spec_m: &SphArraySpec, k: f64) -> Result<Vec<Complex64>> {
    let ctx = RadialContext {
        k,
        r_speaker: spec_m.radius(),
        r_mic: spec_m.radius(),
        sphere: spec_m.sphere()?,
        rho0: AIR_DENSITY,
        c: SPEED_OF_SOUND,
    };
    Ok(repeat_per_order(&mode_strength_seq(spec_m.sh_order(), &ctx)?))
}

/// Column factor `B_M y*(η)` and row factor `y(θ)ᵀ H_L(D) Q_L` of a single
/// plane-wave link, so that `G = a bᵀ`.
pub(crate) fn link_factors(
    b_m: &[Complex64],
    q_l: &[f64],
    h_l: &[Complex64],
    theta: Direction,
    eta: Direction,
    order_l: usize,
    order_m: usize,
) -> (Vec<Complex64>, Vec<Complex64>) {
    let ym = sh_row(order_m, eta.theta, eta.phi);
    let yl = sh_row(order_l, theta.theta, theta.phi);
    let a = b_m.iter().zip(&ym).map(|(b, y)| b * y.conj()).collect();
    let b = yl.iter().zip(h_l).zip(q_l).map(|((y, h), q)| y * h * *q).collect();
    (a, b)
}

fn warn_far_field(spec_l: &SphArraySpec, d: f64) {
    if d < FAR_FIELD_RATIO * spec_l.radius() {
        warn!(
            "distance {d:.3} m is below {FAR_FIELD_RATIO}·r_L = {:.3} m; plane-wave link may be inaccurate",
            FAR_FIELD_RATIO * spec_l.radius()
        );
    }
}

/// SH-domain free-field transfer matrix at wavenumber `k`.
pub fn freefield_system_sh(
    spec_l: &SphArraySpec,
    spec_m: &SphArraySpec,
    geom: &SceneGeometry,
    k: f64,
) -> Result<ShMatrix> {
    check_wavenumber(k)?;
    geom.check_clearance(spec_l, spec_m)?;
    let d = geom.distance();
    warn_far_field(spec_l, d);
    let (a, b) = link_factors(
        &mode_strength_diag(spec_m, k)?,
        &cap_diag(spec_l)?,
        &propagation_diag(spec_l, d, k)?,
        geom.theta_lm(),
        geom.eta_ml(),
        spec_l.sh_order(),
        spec_m.sh_order(),
    );
    let entries = CMatrix::from_fn(a.len(), b.len(), |r, c| a[r] * b[c]);
    ShMatrix::new(entries, k, spec_m.sh_order(), spec_l.sh_order(), Provenance::FreeField)
}

/// Element-space matrix `G_s = Y_M G (4π/L) Y_Lᴴ`, microphones by loudspeakers.
pub fn freefield_system_elements(
    spec_l: &SphArraySpec,
    spec_m: &SphArraySpec,
    geom: &SceneGeometry,
    k: f64,
) -> Result<CMatrix> {
    let g = freefield_system_sh(spec_l, spec_m, geom, k)?;
    Ok(sh_to_elements(g.entries(), spec_l, spec_m))
}

/// `Y_M G (4π/L) Y_Lᴴ` for any SH-domain matrix.
pub fn sh_to_elements(g: &CMatrix, spec_l: &SphArraySpec, spec_m: &SphArraySpec) -> CMatrix {
    let ym = SteeringMatrix::new(spec_m.grid(), spec_m.sh_order());
    let yl = SteeringMatrix::new(spec_l.grid(), spec_l.sh_order());
    let scale = Complex64::new(4.0 * PI / spec_l.element_count() as f64, 0.0);
    ym.entries() * g * yl.entries().adjoint() * scale
}

/// Plane-wave amplitude `ã` produced at the microphone position by the
/// loudspeaker velocity coefficients `u_sh`.
pub fn planewave_amplitude(
    spec_l: &SphArraySpec,
    u_sh: &ShVector,
    geom: &SceneGeometry,
    k: f64,
) -> Result<Complex64> {
    if u_sh.order() > spec_l.sh_order() {
        return Err(Error::Argument(format!(
            "velocity order {} exceeds loudspeaker order {}",
            u_sh.order(),
            spec_l.sh_order()
        )));
    }
    let h = propagation_diag(spec_l, geom.distance(), k)?;
    let q = cap_diag(spec_l)?;
    let theta = geom.theta_lm();
    let y = sh_row(u_sh.order(), theta.theta, theta.phi);
    Ok(u_sh
        .coeffs()
        .iter()
        .enumerate()
        .map(|(p, u)| y[p] * h[p] * q[p] * u)
        .sum())
}

/// Direct evaluation of the cap-array field at `obs` (relative to the
/// loudspeaker centre), with the order sum truncated at `trunc_order`.
/// No scatterer is present at the observation point.
pub fn nearfield_pressure_open(
    spec_l: &SphArraySpec,
    u_elements: &[Complex64],
    obs: [f64; 3],
    k: f64,
    trunc_order: usize,
) -> Result<Complex64> {
    check_wavenumber(k)?;
    let alpha = spec_l.cap_alpha()?;
    let l = spec_l.element_count();
    if u_elements.len() != l {
        return Err(Error::Argument(format!(
            "expected {l} element velocities, got {}",
            u_elements.len()
        )));
    }
    let r = norm(obs);
    if !(r > spec_l.radius()) {
        return Err(Error::Domain(format!(
            "observation radius {r} m is not outside the loudspeaker sphere"
        )));
    }
    let dir = Direction::from_cartesian(obs)?;
    let ratio = radial_ratio(trunc_order, spec_l.radius(), r, k)?;
    let steering = SteeringMatrix::new(spec_l.grid(), trunc_order);
    let u_nm = steering.forward_unchecked(u_elements)?;
    let y = sh_row(trunc_order, dir.theta, dir.phi);
    let mut p = Complex64::new(0.0, 0.0);
    for n in 0..=trunc_order {
        let q = cap_coeff(n, alpha, l);
        let mut inner = Complex64::new(0.0, 0.0);
        for i in (n * n)..sh_count(n) {
            inner += y[i] * u_nm.coeffs()[i];
        }
        p += q * ratio[n] * inner;
    }
    Ok(p)
}
