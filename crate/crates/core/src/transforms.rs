//! Rotation and mirroring operators acting on SH coefficient vectors.
//!
//! Rotations use intrinsic z-y-z Euler angles and act actively: the rotated
//! function is `f_R(x) = f(R⁻¹ x)` with `R = R_z(α) R_y(β) R_z(γ)`, which in
//! the SH domain is `f_R = D(α, β, γ) f` with
//! `D^n_{m m'} = e^{-jmα} d^n_{m m'}(β) e^{-jm'γ}`.
//!
//! Mirrors act the same way, `f_M(x) = f(P x)` for a Cartesian reflection `P`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::special::sh_count;
use crate::system::ShMatrix;
use crate::CMatrix;

/// Coordinate plane of a reflection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MirrorPlane {
    /// `y → -y`
    Xz,
    /// `x → -x`
    Yz,
    /// `z → -z`
    Xy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatorKind {
    Rotation { alpha: f64, beta: f64, gamma: f64 },
    Mirror(MirrorPlane),
    Composed,
}

/// A block-diagonal unitary operator on order-`N` coefficient vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ShOperator {
    matrix: CMatrix,
    order: usize,
    kind: OperatorKind,
}

impl ShOperator {
    pub fn identity(order: usize) -> Self {
        Self {
            matrix: DMatrix::identity(sh_count(order), sh_count(order)),
            order,
            kind: OperatorKind::Composed,
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    /// `self · other`: applies `other` first.
    pub fn compose(&self, other: &ShOperator) -> Result<ShOperator> {
        if self.order != other.order {
            return Err(Error::Argument(format!(
                "cannot compose operators of orders {} and {}",
                self.order, other.order
            )));
        }
        Ok(Self {
            matrix: &self.matrix * &other.matrix,
            order: self.order,
            kind: OperatorKind::Composed,
        })
    }

    pub fn adjoint(&self) -> ShOperator {
        Self {
            matrix: self.matrix.adjoint(),
            order: self.order,
            kind: OperatorKind::Composed,
        }
    }

    pub fn apply(&self, coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
        if coeffs.len() != self.matrix.ncols() {
            return Err(Error::Argument(format!(
                "operator of order {} applied to {} coefficients",
                self.order,
                coeffs.len()
            )));
        }
        let v = &self.matrix * nalgebra::DVector::from_column_slice(coeffs);
        Ok(v.iter().copied().collect())
    }

    /// `max |Mᴴ M - I|`.
    pub fn unitarity_error(&self) -> f64 {
        let g = self.matrix.adjoint() * &self.matrix;
        let mut worst = 0.0f64;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let t = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - t).norm());
            }
        }
        worst
    }

    /// Entries coupling different orders `n` are exactly zero.
    pub fn is_block_diagonal(&self) -> bool {
        let order_of = |p: usize| (p as f64).sqrt() as usize;
        for i in 0..self.matrix.nrows() {
            for j in 0..self.matrix.ncols() {
                if order_of(i) != order_of(j) && self.matrix[(i, j)] != Complex64::new(0.0, 0.0) {
                    return false;
                }
            }
        }
        true
    }
}

fn log_factorials(n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n + 1];
    for k in 1..=n {
        t[k] = t[k - 1] + (k as f64).ln();
    }
    t
}

/// `d^{j0}_{m' m}(β)` (argument order as in the usual explicit sum) at the lowest order `j0 = max(|m|, |m'|)`, where the
/// general finite sum collapses to a single term.
fn wigner_small_d_seed(m: i64, mp: i64, beta: f64, lf: &[f64]) -> f64 {
    let j = m.abs().max(mp.abs());
    let (s, c) = (0.5 * beta).sin_cos();
    let kmin = 0.max(m - mp);
    let kmax = (j + m).min(j - mp);
    debug_assert_eq!(kmin, kmax);
    let k = kmin;
    let f = |x: i64| lf[x as usize];
    let log_coef = 0.5 * (f(j + m) + f(j - m) + f(j + mp) + f(j - mp))
        - f(j + m - k)
        - f(k)
        - f(j - k - mp)
        - f(k - m + mp);
    let sign = if (k - m + mp).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let pc = (2 * j - 2 * k + m - mp) as i32;
    let ps = (2 * k - m + mp) as i32;
    sign * log_coef.exp() * c.powi(pc) * s.powi(ps)
}

/// Little-d matrices `d^n(β)` for `n = 0..=order`, each `(2n+1)²` with rows
/// indexed by `m` and columns by `m'` (offset by `n`).
///
/// Each `(m, m')` pair is seeded at its lowest order and carried upward by
/// the three-term recurrence in `n`.
pub fn wigner_small_d(order: usize, beta: f64) -> Vec<DMatrix<f64>> {
    let n_max = order as i64;
    let lf = log_factorials(2 * order + 2);
    let x = beta.cos();
    let mut blocks: Vec<DMatrix<f64>> = (0..=order).map(|n| DMatrix::zeros(2 * n + 1, 2 * n + 1)).collect();
    for m in -n_max..=n_max {
        for mp in -n_max..=n_max {
            let j0 = m.abs().max(mp.abs());
            let mut prev = 0.0;
            let mut cur = wigner_small_d_seed(mp, m, beta, &lf);
            blocks[j0 as usize][((m + j0) as usize, (mp + j0) as usize)] = cur;
            let (mf, mpf) = (m as f64, mp as f64);
            for j in j0..n_max {
                let jf = j as f64;
                let next = if j == 0 {
                    x * cur
                } else {
                    let den = (((jf + 1.0).powi(2) - mf * mf) * ((jf + 1.0).powi(2) - mpf * mpf)).sqrt();
                    let a = (jf + 1.0) * (2.0 * jf + 1.0) / den * (x - mf * mpf / (jf * (jf + 1.0)));
                    let b = (jf + 1.0) * ((jf * jf - mf * mf) * (jf * jf - mpf * mpf)).sqrt() / (jf * den);
                    a * cur - b * prev
                };
                prev = cur;
                cur = next;
                let jn = (j + 1) as usize;
                blocks[jn][((m + j + 1) as usize, (mp + j + 1) as usize)] = cur;
            }
        }
    }
    blocks
}

/// `D_N(α, β, γ)`.
pub fn wigner_d_matrix(order: usize, alpha: f64, beta: f64, gamma: f64) -> ShOperator {
    let small = wigner_small_d(order, beta);
    let dim = sh_count(order);
    let mut matrix = DMatrix::zeros(dim, dim);
    for (n, block) in small.iter().enumerate() {
        let base = n * n;
        let ni = n as i64;
        for (r, m) in (-ni..=ni).enumerate() {
            for (c, mp) in (-ni..=ni).enumerate() {
                let phase = Complex64::from_polar(1.0, -(m as f64) * alpha - (mp as f64) * gamma);
                matrix[(base + r, base + c)] = phase * block[(r, c)];
            }
        }
    }
    ShOperator {
        matrix,
        order,
        kind: OperatorKind::Rotation { alpha, beta, gamma },
    }
}

/// Mirror about the x-z plane, `f_nm → (-1)^m f_{n,-m}`, assembled as a sign
/// diagonal times the per-order anti-diagonal permutation.
pub fn mirror_xz_matrix(order: usize) -> ShOperator {
    let dim = sh_count(order);
    let mut signs = DMatrix::zeros(dim, dim);
    let mut perm = DMatrix::zeros(dim, dim);
    for n in 0..=order {
        let base = n * n;
        for i in 0..(2 * n + 1) {
            let m = i as i64 - n as i64;
            signs[(base + i, base + i)] = Complex64::new(if m % 2 == 0 { 1.0 } else { -1.0 }, 0.0);
            perm[(base + i, base + 2 * n - i)] = Complex64::new(1.0, 0.0);
        }
    }
    ShOperator {
        matrix: signs * perm,
        order,
        kind: OperatorKind::Mirror(MirrorPlane::Xz),
    }
}

/// Mirror about a coordinate plane, built from the x-z mirror by rotation
/// conjugation: `yz = D(-π/2,0,0) M D(π/2,0,0)` and
/// `xy = D(0,π/2,0) M_yz D(0,π/2,0)ᴴ`.
pub fn mirror_plane_matrix(order: usize, plane: MirrorPlane) -> ShOperator {
    let xz = mirror_xz_matrix(order);
    let matrix = match plane {
        MirrorPlane::Xz => return xz,
        MirrorPlane::Yz => yz_matrix(&xz),
        MirrorPlane::Xy => {
            let yz = yz_matrix(&xz);
            let ry = wigner_d_matrix(order, 0.0, FRAC_PI_2, 0.0);
            ry.matrix() * yz * ry.matrix().adjoint()
        }
    };
    ShOperator {
        matrix: snap_zeros(matrix),
        order,
        kind: OperatorKind::Mirror(plane),
    }
}

fn yz_matrix(xz: &ShOperator) -> CMatrix {
    let order = xz.order();
    let ccw = wigner_d_matrix(order, FRAC_PI_2, 0.0, 0.0);
    let cw = wigner_d_matrix(order, -FRAC_PI_2, 0.0, 0.0);
    cw.matrix() * xz.matrix() * ccw.matrix()
}

// Mirrors about coordinate planes are signed permutations; products of the
// rotation factors leave round-off where exact zeros belong.
fn snap_zeros(mut m: CMatrix) -> CMatrix {
    for v in m.iter_mut() {
        if v.re.abs() < 1e-14 {
            v.re = 0.0;
        }
        if v.im.abs() < 1e-14 {
            v.im = 0.0;
        }
    }
    m
}

/// Mirror operator for an image source whose orientation is flipped along
/// the Cartesian axes marked in `flips = [x, y, z]`.
pub fn parity_mirror(order: usize, flips: [bool; 3]) -> Option<ShOperator> {
    let planes = [MirrorPlane::Yz, MirrorPlane::Xz, MirrorPlane::Xy];
    let mut acc: Option<ShOperator> = None;
    for (flip, plane) in flips.into_iter().zip(planes) {
        if flip {
            let m = mirror_plane_matrix(order, plane);
            acc = Some(match acc {
                None => m,
                Some(a) => {
                    let mut c = a.compose(&m).expect("same order");
                    c.matrix = snap_zeros(c.matrix);
                    c
                }
            });
        }
    }
    acc
}

/// `op · G`: rotates or mirrors the microphone array.
pub fn apply_left(sys: &ShMatrix, op: &ShOperator) -> Result<ShMatrix> {
    if op.order() != sys.mic_order() {
        return Err(Error::Argument(format!(
            "operator order {} does not match microphone order {}",
            op.order(),
            sys.mic_order()
        )));
    }
    Ok(sys.with_entries(op.matrix() * sys.entries()))
}

/// `G · opᴴ`: rotates or mirrors the loudspeaker array.
pub fn apply_right(sys: &ShMatrix, op: &ShOperator) -> Result<ShMatrix> {
    if op.order() != sys.speaker_order() {
        return Err(Error::Argument(format!(
            "operator order {} does not match loudspeaker order {}",
            op.order(),
            sys.speaker_order()
        )));
    }
    Ok(sys.with_entries(sys.entries() * op.matrix().adjoint()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::Direction;
    use crate::special::{sh_row, ShIndex};
    use crate::system::Provenance;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_coeffs(order: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
        (0..sh_count(order))
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    fn synth(coeffs: &[Complex64], order: usize, d: Direction) -> Complex64 {
        sh_row(order, d.theta, d.phi).iter().zip(coeffs).map(|(y, c)| y * c).sum()
    }

    fn rz(a: f64) -> [[f64; 3]; 3] {
        let (s, c) = a.sin_cos();
        [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
    }

    fn ry(b: f64) -> [[f64; 3]; 3] {
        let (s, c) = b.sin_cos();
        [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
    }

    fn mul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut o = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                o[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        o
    }

    fn apply_t(r: [[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
        // Rᵀ v = R⁻¹ v
        [0, 1, 2].map(|i| (0..3).map(|k| r[k][i] * v[k]).sum())
    }

    /// Brute-force little d from the explicit finite sum (small orders only).
    fn explicit_small_d(j: i64, m: i64, mp: i64, beta: f64) -> f64 {
        let fact = |n: i64| (1..=n).map(|k| k as f64).product::<f64>();
        let (s, c) = (0.5 * beta).sin_cos();
        let mut acc = 0.0;
        for k in 0..=(2 * j) {
            if j + m - k < 0 || j - k - mp < 0 || k - m + mp < 0 {
                continue;
            }
            let sign = if (k - m + mp) % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * (fact(j + m) * fact(j - m) * fact(j + mp) * fact(j - mp)).sqrt()
                / (fact(j + m - k) * fact(k) * fact(j - k - mp) * fact(k - m + mp))
                * c.powi((2 * j - 2 * k + m - mp) as i32)
                * s.powi((2 * k - m + mp) as i32);
        }
        acc
    }

    #[test]
    fn recurrence_matches_explicit_sum() {
        for &beta in &[0.0, 0.3, 1.2, PI / 2.0, 2.9, PI] {
            let d = wigner_small_d(8, beta);
            for j in 0..=8i64 {
                for m in -j..=j {
                    for mp in -j..=j {
                        let got = d[j as usize][((m + j) as usize, (mp + j) as usize)];
                        let want = explicit_small_d(j, mp, m, beta);
                        assert!((got - want).abs() < 1e-12, "d^{j}_{m},{mp}({beta}) {got} vs {want}");
                    }
                }
            }
        }
    }

    #[test]
    fn small_d_is_orthogonal_at_high_order() {
        let d = wigner_small_d(50, 1.1);
        let b = &d[50];
        let e = b.transpose() * b - DMatrix::identity(101, 101);
        assert!(e.amax() < 1e-10);
    }

    #[test]
    fn identity_rotation() {
        let d = wigner_d_matrix(4, 0.0, 0.0, 0.0);
        assert!((d.matrix() - CMatrix::identity(25, 25)).camax() < 1e-15);
    }

    #[test]
    fn rotation_matches_sampled_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let order = 4;
        for _ in 0..10 {
            let (a, b, g) = (rng.gen_range(-PI..PI), rng.gen_range(0.0..PI), rng.gen_range(-PI..PI));
            let f = random_coeffs(order, &mut rng);
            let d = wigner_d_matrix(order, a, b, g);
            let fr = d.apply(&f).unwrap();
            assert!((fr[0] - f[0]).norm() < 1e-14);
            let r = mul(mul(rz(a), ry(b)), rz(g));
            for _ in 0..10 {
                let x = Direction::new(rng.gen_range(0.0..PI), rng.gen_range(0.0..2.0 * PI)).unwrap();
                let back = Direction::from_cartesian(apply_t(r, x.to_cartesian())).unwrap();
                let want = synth(&f, order, back);
                let got = synth(&fr, order, x);
                assert!((got - want).norm() < 1e-8, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn mirror_xz_properties() {
        let m = mirror_xz_matrix(3);
        assert!((m.matrix() * m.matrix() - CMatrix::identity(16, 16)).camax() < 1e-15);
        let mut v = vec![Complex64::new(0.0, 0.0); 16];
        v[ShIndex::new(1, 1).unwrap().packed()] = Complex64::new(1.0, 0.0);
        let out = m.apply(&v).unwrap();
        for (p, c) in out.iter().enumerate() {
            let want = if p == ShIndex::new(1, -1).unwrap().packed() { -1.0 } else { 0.0 };
            assert_eq!(*c, Complex64::new(want, 0.0));
        }
    }

    fn mirrored_direction(d: Direction, plane: MirrorPlane) -> Direction {
        match plane {
            MirrorPlane::Xz => Direction::new(d.theta, 2.0 * PI - d.phi).unwrap(),
            MirrorPlane::Yz => Direction::new(d.theta, PI - d.phi).unwrap(),
            MirrorPlane::Xy => Direction::new(PI - d.theta, d.phi).unwrap(),
        }
    }

    #[test]
    fn plane_mirrors_match_sampled_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let order = 5;
        for plane in [MirrorPlane::Xz, MirrorPlane::Yz, MirrorPlane::Xy] {
            let m = mirror_plane_matrix(order, plane);
            assert!(m.unitarity_error() < 1e-10);
            assert!(m.is_block_diagonal());
            let sq = m.compose(&m).unwrap();
            assert!((sq.matrix() - CMatrix::identity(36, 36)).camax() < 1e-12);
            let f = random_coeffs(order, &mut rng);
            let fm = m.apply(&f).unwrap();
            for _ in 0..20 {
                let x = Direction::new(rng.gen_range(0.0..PI), rng.gen_range(0.0..2.0 * PI)).unwrap();
                let got = synth(&fm, order, x);
                let want = synth(&f, order, mirrored_direction(x, plane));
                assert!((got - want).norm() < 1e-10, "{plane:?}");
            }
        }
    }

    #[test]
    fn composed_mirrors_equal_direct_signed_permutations() {
        // yz: f_nm → f_{n,-m}; xy: f_nm → (-1)^{n+m} f_nm
        let order = 4;
        let yz = mirror_plane_matrix(order, MirrorPlane::Yz);
        let xy = mirror_plane_matrix(order, MirrorPlane::Xy);
        for a in ShIndex::iter(order) {
            for b in ShIndex::iter(order) {
                let want_yz = if a.n() == b.n() && a.m() == -b.m() { 1.0 } else { 0.0 };
                let want_xy = if a == b {
                    if (a.n() as i64 + a.m()) % 2 == 0 { 1.0 } else { -1.0 }
                } else {
                    0.0
                };
                assert!((yz.matrix()[(a.packed(), b.packed())] - want_yz).norm() < 1e-14);
                assert!((xy.matrix()[(a.packed(), b.packed())] - want_xy).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn parity_mirror_composes_commuting_flips() {
        assert!(parity_mirror(3, [false; 3]).is_none());
        let all = parity_mirror(3, [true, true, true]).unwrap();
        // point reflection: f_nm → (-1)^n f_nm
        for a in ShIndex::iter(3) {
            let s = if a.n() % 2 == 0 { 1.0 } else { -1.0 };
            assert!((all.matrix()[(a.packed(), a.packed())] - s).norm() < 1e-14);
        }
        assert!(all.is_block_diagonal());
    }

    fn random_system(rng: &mut ChaCha8Rng, mo: usize, so: usize) -> ShMatrix {
        let m = CMatrix::from_fn(sh_count(mo), sh_count(so), |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        ShMatrix::new(m, 1.0, mo, so, Provenance::FreeField).unwrap()
    }

    #[test]
    fn apply_checks_dimensions_and_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_system(&mut rng, 2, 3);
        assert_eq!(apply_left(&g, &ShOperator::identity(2)).unwrap(), g);
        assert_eq!(apply_right(&g, &ShOperator::identity(3)).unwrap(), g);
        assert!(apply_left(&g, &ShOperator::identity(3)).is_err());
        assert!(apply_right(&g, &ShOperator::identity(2)).is_err());
    }

    #[test]
    fn z_rotations_compose_additively() {
        let (g1, g2) = (0.7, -2.1);
        let a = wigner_d_matrix(5, 0.0, 0.0, g1);
        let b = wigner_d_matrix(5, 0.0, 0.0, g2);
        let c = wigner_d_matrix(5, 0.0, 0.0, g1 + g2);
        assert!((a.compose(&b).unwrap().matrix() - c.matrix()).camax() < 1e-9);
    }

    proptest! {
        #[test]
        fn rotations_are_unitary_block_diagonal(a in -PI..PI, b in 0.0..PI, g in -PI..PI, order in 0usize..8) {
            let d = wigner_d_matrix(order, a, b, g);
            prop_assert!(d.unitarity_error() < 1e-10);
            prop_assert!(d.is_block_diagonal());
        }

        #[test]
        fn singular_values_survive_rotation(seed in 0u64..500, a in -PI..PI, b in 0.0..PI, g in -PI..PI) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sys = random_system(&mut rng, 3, 2);
            let before = sys.entries().singular_values();
            let rotated = apply_right(&apply_left(&sys, &wigner_d_matrix(3, a, b, g)).unwrap(),
                                      &wigner_d_matrix(2, g, b, a)).unwrap();
            let mut s0: Vec<f64> = before.iter().copied().collect();
            let mut s1: Vec<f64> = rotated.entries().singular_values().iter().copied().collect();
            s0.sort_by(|x, y| y.total_cmp(x));
            s1.sort_by(|x, y| y.total_cmp(x));
            for (x, y) in s0.iter().zip(&s1) {
                prop_assert!((x - y).abs() < 1e-10 * s0[0]);
            }
        }
    }
}
