//! Spherical sampling grids, steering vectors and the discrete spherical
//! Fourier transform in matrix form.
//!
//! For a grid of `L` directions with steering matrix `Y_L` (one row per
//! direction, packed `(n, m)` columns) the transform pair is
//!
//! ```text
//! f    = Y_L f_SH
//! f_SH = (4π / L) Y_Lᴴ f
//! ```
//!
//! which is exact when `(4π/L) Y_Lᴴ Y_L = I`. The largest order for which
//! that holds is measured for every grid and stored as its exactness order.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::special::{sh_count, sh_row};
use crate::CMatrix;

/// Orthonormality tolerance that defines a grid's exactness order.
pub const EXACTNESS_TOL: f64 = 1e-8;

/// Singular-value spread of `sqrt(4π/L) Y_L` accepted for nearly-uniform
/// layouts that are not exact designs.
pub const NEARLY_UNIFORM_SPREAD: f64 = 1e-2;

/// A direction on the unit sphere: polar angle `theta ∈ [0, π]` from +z,
/// azimuth `phi ∈ [0, 2π)` from +x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    pub theta: f64,
    pub phi: f64,
}

impl Direction {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&theta) || !phi.is_finite() {
            return Err(Error::Argument(format!(
                "direction angles out of range: theta = {theta}, phi = {phi}"
            )));
        }
        Ok(Self {
            theta,
            phi: phi.rem_euclid(2.0 * PI),
        })
    }

    /// Direction of a nonzero Cartesian vector.
    pub fn from_cartesian(v: [f64; 3]) -> Result<Self> {
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::Argument("direction of a zero-length vector".into()));
        }
        let theta = (v[2] / r).clamp(-1.0, 1.0).acos();
        let phi = v[1].atan2(v[0]).rem_euclid(2.0 * PI);
        Ok(Self { theta, phi })
    }

    pub fn to_cartesian(self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    pub fn antipode(self) -> Self {
        Self {
            theta: PI - self.theta,
            phi: (self.phi + PI).rem_euclid(2.0 * PI),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    NearlyUniform,
    Custom,
}

/// An ordered set of sampling directions with its measured exactness order.
#[derive(Debug, Clone, PartialEq)]
pub struct SphGrid {
    points: Vec<Direction>,
    kind: GridKind,
    exactness_order: usize,
}

const ICOSAHEDRON_12: &str = include_str!("../data/grids/icosahedron_12.csv");
const PENTAKIS_32: &str = include_str!("../data/grids/pentakis_dodecahedron_32.csv");
const DESIGN_72: &str = include_str!("../data/grids/tdesign10_72.csv");

/// Names of the layouts shipped with the library, usable as `builtin` grids in configs.
pub const BUILTIN_GRIDS: &[&str] = &["icosahedron_12", "pentakis_dodecahedron_32", "tdesign10_72"];

impl SphGrid {
    /// A grid of user-supplied directions; the exactness order is measured.
    pub fn custom(points: Vec<Direction>) -> Result<Self> {
        Self::with_kind(points, GridKind::Custom)
    }

    fn with_kind(points: Vec<Direction>, kind: GridKind) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Argument("a grid needs at least one direction".into()));
        }
        for p in &points {
            if !(0.0..=PI).contains(&p.theta) || !(0.0..2.0 * PI).contains(&p.phi) {
                return Err(Error::Argument(format!(
                    "grid direction out of range: ({}, {})",
                    p.theta, p.phi
                )));
            }
        }
        let exactness_order = measure_exactness(&points, EXACTNESS_TOL);
        Ok(Self {
            points,
            kind,
            exactness_order,
        })
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let text = match name {
            "icosahedron_12" => ICOSAHEDRON_12,
            "pentakis_dodecahedron_32" => PENTAKIS_32,
            "tdesign10_72" => DESIGN_72,
            _ => {
                return Err(Error::Argument(format!(
                    "unknown builtin grid `{name}` (available: {})",
                    BUILTIN_GRIDS.join(", ")
                )))
            }
        };
        let points = parse_grid_csv(text, Path::new(name))?;
        Self::with_kind(points, GridKind::NearlyUniform)
    }

    pub fn points(&self) -> &[Direction] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn exactness_order(&self) -> usize {
        self.exactness_order
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::custom(parse_grid_csv(&text, path)?)
    }

    /// Serialises as `theta,phi` CSV (radians, shortest round-trip formatting).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("theta,phi\n");
        for p in &self.points {
            s.push_str(&format!("{},{}\n", p.theta, p.phi));
        }
        s
    }
}

/// Parses the `theta,phi` grid format. Lines starting with `#` are comments.
pub fn parse_grid_csv(text: &str, path: &Path) -> Result<Vec<Direction>> {
    let mut points = Vec::new();
    let mut header_seen = false;
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let here = offset;
        offset += line.len() as u64;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fail = |message: String| Error::Format {
            path: path.to_path_buf(),
            offset: here,
            message,
        };
        if !header_seen {
            let cols: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if cols != ["theta", "phi"] {
                return Err(fail(format!("expected header `theta,phi`, found `{trimmed}`")));
            }
            header_seen = true;
            continue;
        }
        let mut it = trimmed.split(',').map(str::trim);
        let (Some(t), Some(p), None) = (it.next(), it.next(), it.next()) else {
            return Err(fail(format!("expected two columns, found `{trimmed}`")));
        };
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| fail(format!("not a number: `{s}`")))
        };
        let dir = Direction::new(parse(t)?, parse(p)?).map_err(|e| fail(e.to_string()))?;
        points.push(dir);
    }
    if !header_seen {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset,
            message: "missing `theta,phi` header".into(),
        });
    }
    Ok(points)
}

/// Largest order `N` with `(N+1)² ≤ L` for which the discrete orthonormality
/// error `max |(4π/L) Y_Lᴴ Y_L - I|` stays within `tol`.
pub fn measure_exactness(points: &[Direction], tol: f64) -> usize {
    let l = points.len();
    let mut nmax = 0;
    while sh_count(nmax + 1) <= l {
        nmax += 1;
    }
    let y = steering_rows(points, nmax);
    let gram = y.adjoint() * &y * Complex64::new(4.0 * PI / l as f64, 0.0);
    let mut best = 0;
    for order in 0..=nmax {
        let d = sh_count(order);
        let mut worst = 0.0f64;
        // only the new rows/columns of the leading block need checking
        let lo = if order == 0 { 0 } else { sh_count(order - 1) };
        for i in 0..d {
            for j in 0..d {
                if i < lo && j < lo {
                    continue;
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).norm());
            }
        }
        if worst <= tol {
            best = order;
        } else {
            break;
        }
    }
    best
}

fn steering_rows(points: &[Direction], order: usize) -> CMatrix {
    let cols = sh_count(order);
    let mut y = DMatrix::zeros(points.len(), cols);
    for (l, p) in points.iter().enumerate() {
        for (c, v) in sh_row(order, p.theta, p.phi).into_iter().enumerate() {
            y[(l, c)] = v;
        }
    }
    y
}

/// Deterministic nearly-uniform layout of `count` directions.
///
/// Shipped polyhedral and design layouts are used where one exists for
/// `count`; any other count falls back to a golden-angle spiral.
pub fn make_grid(kind: GridKind, count: usize) -> Result<SphGrid> {
    if kind != GridKind::NearlyUniform {
        return Err(Error::Argument(
            "only nearly-uniform grids can be generated; custom grids are read from files".into(),
        ));
    }
    match count {
        0 => Err(Error::Argument("grid size must be at least 1".into())),
        1 => SphGrid::with_kind(vec![Direction { theta: 0.0, phi: 0.0 }], kind),
        12 => SphGrid::builtin("icosahedron_12"),
        32 => SphGrid::builtin("pentakis_dodecahedron_32"),
        72 => SphGrid::builtin("tdesign10_72"),
        _ => SphGrid::with_kind(spiral_points(count), kind),
    }
}

fn spiral_points(count: usize) -> Vec<Direction> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            Direction {
                theta: z.clamp(-1.0, 1.0).acos(),
                phi: (golden * i as f64).rem_euclid(2.0 * PI),
            }
        })
        .collect()
}

/// Coefficients of an order-`N` expansion in packed `(n, m)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ShVector {
    coeffs: Vec<Complex64>,
    order: usize,
}

impl ShVector {
    pub fn new(coeffs: Vec<Complex64>, order: usize) -> Result<Self> {
        if coeffs.len() != sh_count(order) {
            return Err(Error::Argument(format!(
                "order {order} needs {} coefficients, got {}",
                sh_count(order),
                coeffs.len()
            )));
        }
        Ok(Self { coeffs, order })
    }

    pub fn zeros(order: usize) -> Self {
        Self {
            coeffs: vec![Complex64::new(0.0, 0.0); sh_count(order)],
            order,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn as_column(&self) -> nalgebra::DVector<Complex64> {
        nalgebra::DVector::from_column_slice(&self.coeffs)
    }
}

/// `[Y_0^0(θ), Y_1^{-1}(θ), ..., Y_N^N(θ)]`.
pub fn steering_vector(direction: Direction, order: usize) -> ShVector {
    ShVector {
        coeffs: sh_row(order, direction.theta, direction.phi),
        order,
    }
}

/// `L × (N+1)²` matrix whose row `l` is the steering vector of grid direction `l`.
#[derive(Debug, Clone)]
pub struct SteeringMatrix {
    entries: CMatrix,
    grid: SphGrid,
    order: usize,
}

impl SteeringMatrix {
    pub fn new(grid: &SphGrid, order: usize) -> Self {
        Self {
            entries: steering_rows(grid.points(), order),
            grid: grid.clone(),
            order,
        }
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn grid(&self) -> &SphGrid {
        &self.grid
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `max σ - min σ` of `sqrt(4π/L) Y_L`; zero for an exact layout.
    pub fn singular_spread(&self) -> f64 {
        let scale = (4.0 * PI / self.grid.len() as f64).sqrt();
        let sv = (self.entries.clone() * Complex64::new(scale, 0.0)).singular_values();
        let max = sv.iter().cloned().fold(f64::MIN, f64::max);
        let min = sv.iter().cloned().fold(f64::MAX, f64::min);
        max - min
    }

    /// Whether the layout is acceptable as nearly uniform at this order.
    pub fn is_nearly_uniform(&self) -> bool {
        self.grid.len() >= sh_count(self.order) && self.singular_spread() <= NEARLY_UNIFORM_SPREAD
    }

    /// `f_SH = (4π/L) Y_Lᴴ f`.
    pub fn forward(&self, samples: &[Complex64]) -> Result<ShVector> {
        if self.grid.exactness_order() < self.order {
            return Err(Error::Precondition(format!(
                "grid is exact only up to order {}, transform requested at order {}",
                self.grid.exactness_order(),
                self.order
            )));
        }
        self.forward_unchecked(samples)
    }

    /// The same product without the exactness check; used for measured
    /// hardware whose layout is only approximately uniform.
    pub fn forward_unchecked(&self, samples: &[Complex64]) -> Result<ShVector> {
        let l = self.grid.len();
        if samples.len() != l {
            return Err(Error::Argument(format!(
                "expected {l} samples, got {}",
                samples.len()
            )));
        }
        let scale = 4.0 * PI / l as f64;
        let coeffs = (0..sh_count(self.order))
            .map(|c| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (r, s) in samples.iter().enumerate() {
                    acc += self.entries[(r, c)].conj() * s;
                }
                acc * scale
            })
            .collect();
        Ok(ShVector {
            coeffs,
            order: self.order,
        })
    }

    /// `f = Y_L f_SH`.
    pub fn inverse(&self, coeffs: &ShVector) -> Result<Vec<Complex64>> {
        if coeffs.order() != self.order {
            return Err(Error::Argument(format!(
                "coefficient order {} does not match steering order {}",
                coeffs.order(),
                self.order
            )));
        }
        Ok((0..self.grid.len())
            .map(|r| {
                coeffs
                    .coeffs()
                    .iter()
                    .enumerate()
                    .map(|(c, v)| self.entries[(r, c)] * v)
                    .sum()
            })
            .collect())
    }
}

/// Discrete SFT of samples taken on `grid`.
pub fn sft_forward(samples: &[Complex64], grid: &SphGrid, order: usize) -> Result<ShVector> {
    SteeringMatrix::new(grid, order).forward(samples)
}

/// Synthesis of `coeffs` at the directions of `grid`.
pub fn sft_inverse(coeffs: &ShVector, grid: &SphGrid) -> Vec<Complex64> {
    SteeringMatrix::new(grid, coeffs.order())
        .inverse(coeffs)
        .expect("orders match by construction")
}
