//! Matrix Lie groups: group law, exp/log, right-invariant frame and the
//! truncation functions used by characteristics.
//!
//! Every group is a concrete matrix group. Euclidean space is carried as
//! translation matrices so that one code path serves all drivers.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement(pub DMatrix<f64>);

impl GroupElement {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dist(&self, other: &GroupElement) -> f64 {
        (&self.0 - &other.0).abs().max()
    }
}

#[derive(Clone, Debug)]
pub enum GroupKind {
    Additive(usize),
    SpecialOrthogonal(usize),
    Product(Arc<LieGroup>, Arc<LieGroup>),
}

#[derive(Clone)]
pub struct LieGroup {
    kind: GroupKind,
    name: String,
    n: usize,
    k: usize,
    basis: Vec<DMatrix<f64>>,
    basis_norm2: Vec<f64>,
    r0: f64,
}

impl fmt::Debug for LieGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LieGroup({}, n={}, k={})", self.name, self.n, self.k)
    }
}

/// C² bump: 1 on [0, 1/2], 0 on [1, ∞), quintic smootherstep in between.
pub fn cutoff(x: f64) -> f64 {
    if x <= 0.5 {
        1.0
    } else if x >= 1.0 {
        0.0
    } else {
        let s = (1.0 - x) * 2.0;
        s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

fn unit(k: usize, i: usize, j: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(k, k);
    m[(i, j)] = 1.0;
    m
}

impl LieGroup {
    pub fn additive(n: usize) -> Arc<LieGroup> {
        assert!(n >= 1, "additive group needs n >= 1");
        let basis: Vec<_> = (0..n).map(|a| unit(n + 1, a, n)).collect();
        Arc::new(Self::build(GroupKind::Additive(n), format!("additive:{n}"), n + 1, basis, 1.0))
    }

    /// Basis ordered by pairs (i, j), i < j, with ξ = E_ji − E_ij so that
    /// for n = 2 the single generator is [[0,−1],[1,0]].
    pub fn so(n: usize) -> Arc<LieGroup> {
        assert!(n >= 2, "SO(n) needs n >= 2");
        let mut basis = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                basis.push(unit(n, j, i) - unit(n, i, j));
            }
        }
        Arc::new(Self::build(GroupKind::SpecialOrthogonal(n), format!("so:{n}"), n, basis, PI / 2.0))
    }

    pub fn product(a: Arc<LieGroup>, b: Arc<LieGroup>) -> Arc<LieGroup> {
        let k = a.k + b.k;
        let mut basis = Vec::with_capacity(a.n + b.n);
        for xi in &a.basis {
            let mut m = DMatrix::zeros(k, k);
            m.view_mut((0, 0), (a.k, a.k)).copy_from(xi);
            basis.push(m);
        }
        for xi in &b.basis {
            let mut m = DMatrix::zeros(k, k);
            m.view_mut((a.k, a.k), (b.k, b.k)).copy_from(xi);
            basis.push(m);
        }
        let name = format!("product:{},{}", a.name, b.name);
        let r0 = a.r0.min(b.r0);
        Arc::new(Self::build(GroupKind::Product(a, b), name, k, basis, r0))
    }

    fn build(kind: GroupKind, name: String, k: usize, basis: Vec<DMatrix<f64>>, r0: f64) -> Self {
        let basis_norm2 = basis.iter().map(|b| b.norm_squared()).collect();
        LieGroup { kind, name, n: basis.len(), k, basis, basis_norm2, r0 }
    }

    /// Same group with a different truncation radius (not meaningful for products,
    /// whose truncation is taken factor by factor).
    pub fn with_radius(&self, r0: f64) -> Arc<LieGroup> {
        assert!(r0 > 0.0);
        let mut g = self.clone();
        g.r0 = r0;
        Arc::new(g)
    }

    /// Parse "additive:n", "so:n" or "product:<a>,<b>".
    pub fn parse(spec: &str) -> Result<Arc<LieGroup>> {
        let spec = spec.trim();
        if let Some(rest) = spec.strip_prefix("product:") {
            for (i, c) in rest.char_indices() {
                if c != ',' {
                    continue;
                }
                if let (Ok(a), Ok(b)) = (Self::parse(&rest[..i]), Self::parse(&rest[i + 1..])) {
                    return Ok(Self::product(a, b));
                }
            }
            return Err(Error::Invalid(format!("bad product group '{spec}'")));
        }
        let (head, arg) = spec
            .split_once(':')
            .ok_or_else(|| Error::Invalid(format!("bad group '{spec}'")))?;
        let n: usize = arg.parse().map_err(|_| Error::Invalid(format!("bad dimension in '{spec}'")))?;
        match head {
            "additive" if n >= 1 => Ok(Self::additive(n)),
            "so" if n >= 2 => Ok(Self::so(n)),
            _ => Err(Error::Invalid(format!("unknown group '{spec}'"))),
        }
    }

    pub fn kind(&self) -> &GroupKind {
        &self.kind
    }
    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn matrix_size(&self) -> usize {
        self.k
    }
    pub fn basis(&self) -> &[DMatrix<f64>] {
        &self.basis
    }
    pub fn radius(&self) -> f64 {
        self.r0
    }

    pub fn is_abelian(&self) -> bool {
        match &self.kind {
            GroupKind::Additive(_) => true,
            GroupKind::SpecialOrthogonal(n) => *n == 2,
            GroupKind::Product(a, b) => a.is_abelian() && b.is_abelian(),
        }
    }

    /// True when exp/log are exact linear bijections (additive groups and products of them).
    pub fn is_linear(&self) -> bool {
        match &self.kind {
            GroupKind::Additive(_) => true,
            GroupKind::SpecialOrthogonal(_) => false,
            GroupKind::Product(a, b) => a.is_linear() && b.is_linear(),
        }
    }

    /// Description of the truncation function; b is only comparable between
    /// triplets carrying the same fingerprint.
    pub fn truncation_fingerprint(&self) -> String {
        match &self.kind {
            GroupKind::Product(a, b) => {
                format!("product({};{})", a.truncation_fingerprint(), b.truncation_fingerprint())
            }
            _ => format!("log-cutoff[quintic](r0={})", self.r0),
        }
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement(DMatrix::identity(self.k, self.k))
    }

    fn check(&self, a: &GroupElement) -> Result<()> {
        if a.0.nrows() != self.k || a.0.ncols() != self.k {
            return Err(Error::Shape(format!(
                "{}x{} element for {} (expects {}x{})",
                a.0.nrows(),
                a.0.ncols(),
                self.name,
                self.k,
                self.k
            )));
        }
        Ok(())
    }

    pub fn try_mul(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.mul(a, b))
    }

    pub fn mul(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        debug_assert_eq!(a.0.nrows(), self.k);
        debug_assert_eq!(b.0.nrows(), self.k);
        if let GroupKind::Additive(n) = self.kind {
            // translations compose by adding the last column
            let mut out = a.0.clone();
            for i in 0..n {
                out[(i, n)] += b.0[(i, n)];
            }
            return GroupElement(out);
        }
        GroupElement(&a.0 * &b.0)
    }

    pub fn try_inv(&self, a: &GroupElement) -> Result<GroupElement> {
        self.check(a)?;
        match &self.kind {
            GroupKind::Additive(n) => {
                let mut out = a.0.clone();
                for i in 0..*n {
                    out[(i, *n)] = -out[(i, *n)];
                }
                Ok(GroupElement(out))
            }
            GroupKind::SpecialOrthogonal(_) => Ok(GroupElement(a.0.transpose())),
            GroupKind::Product(ga, gb) => {
                let (x, y) = self.split(a);
                Ok(self.join(&ga.try_inv(&x)?, &gb.try_inv(&y)?))
            }
        }
    }

    pub fn inv(&self, a: &GroupElement) -> GroupElement {
        self.try_inv(a).expect("group inverse")
    }

    /// Σ v_α ξ_α.
    pub fn hat(&self, v: &[f64]) -> DMatrix<f64> {
        assert_eq!(v.len(), self.n, "algebra vector length");
        let mut m = DMatrix::zeros(self.k, self.k);
        for (c, xi) in v.iter().zip(&self.basis) {
            if *c != 0.0 {
                m += xi * *c;
            }
        }
        m
    }

    /// Coordinates of an algebra matrix (the bases are Frobenius-orthogonal).
    pub fn vee(&self, m: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.n,
            self.basis.iter().zip(&self.basis_norm2).map(|(xi, nn)| xi.dot(m) / nn),
        )
    }

    pub fn exp(&self, v: &[f64]) -> GroupElement {
        assert_eq!(v.len(), self.n, "algebra vector length");
        match &self.kind {
            GroupKind::Additive(n) => {
                let mut m = DMatrix::identity(n + 1, n + 1);
                for i in 0..*n {
                    m[(i, *n)] = v[i];
                }
                GroupElement(m)
            }
            GroupKind::SpecialOrthogonal(2) => {
                let (s, c) = v[0].sin_cos();
                GroupElement(DMatrix::from_row_slice(2, 2, &[c, -s, s, c]))
            }
            GroupKind::SpecialOrthogonal(_) => GroupElement(expm(&self.hat(v))),
            GroupKind::Product(a, b) => {
                let x = a.exp(&v[..a.n]);
                let y = b.exp(&v[a.n..]);
                self.join(&x, &y)
            }
        }
    }

    pub fn log(&self, z: &GroupElement) -> Result<DVector<f64>> {
        self.check(z)?;
        match &self.kind {
            GroupKind::Additive(n) => Ok(DVector::from_iterator(*n, (0..*n).map(|i| z.0[(i, *n)]))),
            GroupKind::SpecialOrthogonal(2) => {
                let theta = z.0[(1, 0)].atan2(z.0[(0, 0)]);
                if theta.abs() >= PI - 1e-12 {
                    return Err(Error::OutOfDomain { angle: theta.abs() });
                }
                Ok(DVector::from_element(1, theta))
            }
            GroupKind::SpecialOrthogonal(3) => {
                let r = &z.0;
                let c = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
                let theta = c.acos();
                if theta >= PI - 1e-7 {
                    return Err(Error::OutOfDomain { angle: theta });
                }
                let factor = if theta < 1e-4 {
                    0.5 * (1.0 + theta * theta / 6.0 + 7.0 * theta.powi(4) / 360.0)
                } else {
                    theta / (2.0 * theta.sin())
                };
                Ok(self.vee(&((r - r.transpose()) * factor)))
            }
            GroupKind::SpecialOrthogonal(_) => {
                let l = logm_near_identity(&z.0)?;
                let l = (&l - l.transpose()) * 0.5;
                let angle = max_rotation_angle(&l);
                if angle >= PI - 1e-7 {
                    return Err(Error::OutOfDomain { angle });
                }
                Ok(self.vee(&l))
            }
            GroupKind::Product(a, b) => {
                let (x, y) = self.split(z);
                let mut out = a.log(&x)?.as_slice().to_vec();
                out.extend_from_slice(b.log(&y)?.as_slice());
                Ok(DVector::from_vec(out))
            }
        }
    }

    /// Split a product element into its factor blocks.
    pub fn split(&self, z: &GroupElement) -> (GroupElement, GroupElement) {
        match &self.kind {
            GroupKind::Product(a, b) => {
                let x = z.0.view((0, 0), (a.k, a.k)).into_owned();
                let y = z.0.view((a.k, a.k), (b.k, b.k)).into_owned();
                (GroupElement(x), GroupElement(y))
            }
            _ => panic!("split on non-product group {}", self.name),
        }
    }

    pub fn join(&self, x: &GroupElement, y: &GroupElement) -> GroupElement {
        match &self.kind {
            GroupKind::Product(a, b) => {
                let mut m = DMatrix::zeros(self.k, self.k);
                m.view_mut((0, 0), (a.k, a.k)).copy_from(&x.0);
                m.view_mut((a.k, a.k), (b.k, b.k)).copy_from(&y.0);
                GroupElement(m)
            }
            _ => panic!("join on non-product group {}", self.name),
        }
    }

    pub fn factors(&self) -> Option<(&Arc<LieGroup>, &Arc<LieGroup>)> {
        match &self.kind {
            GroupKind::Product(a, b) => Some((a, b)),
            _ => None,
        }
    }

    /// Row α is the row-major flattening of ξ_α·z, the value of the
    /// right-invariant field Y_α at z.
    pub fn frame_matrix(&self, z: &GroupElement) -> DMatrix<f64> {
        let kk = self.k * self.k;
        let mut p = DMatrix::zeros(self.n, kk);
        for (a, xi) in self.basis.iter().enumerate() {
            let y = xi * &z.0;
            for i in 0..self.k {
                for j in 0..self.k {
                    p[(a, i * self.k + j)] = y[(i, j)];
                }
            }
        }
        p
    }

    /// Frame coordinates of an ambient tangent vector `w` at `z`.
    pub fn tangent_coords(&self, z: &GroupElement, w: &DMatrix<f64>) -> Result<DVector<f64>> {
        let p = self.frame_matrix(z);
        let pt = pseudo_inverse(&p)?;
        let flat = DVector::from_iterator(self.k * self.k, w.transpose().iter().copied());
        Ok(pt.transpose() * flat)
    }

    /// h(z) = log(z)·χ(‖log z‖/r₀); zero where log is undefined.
    pub fn truncation(&self, z: &GroupElement) -> DVector<f64> {
        match &self.kind {
            GroupKind::Product(a, b) => {
                let (x, y) = self.split(z);
                let mut out = a.truncation(&x).as_slice().to_vec();
                out.extend_from_slice(b.truncation(&y).as_slice());
                DVector::from_vec(out)
            }
            _ => match self.log(z) {
                Ok(v) => self.truncate_coords(&v),
                Err(_) => DVector::zeros(self.n),
            },
        }
    }

    /// Truncation expressed on canonical coordinates.
    pub fn truncate_coords(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            GroupKind::Product(a, b) => {
                let x = a.truncate_coords(&v.rows(0, a.n).into_owned());
                let y = b.truncate_coords(&v.rows(a.n, b.n).into_owned());
                let mut out = x.as_slice().to_vec();
                out.extend_from_slice(y.as_slice());
                DVector::from_vec(out)
            }
            _ => v * cutoff(v.norm() / self.r0),
        }
    }

    pub fn membership_residual(&self, z: &GroupElement) -> f64 {
        if self.check(z).is_err() {
            return f64::INFINITY;
        }
        match &self.kind {
            GroupKind::Additive(n) => {
                let mut r: f64 = 0.0;
                for i in 0..=*n {
                    for j in 0..*n {
                        let want = if i == j { 1.0 } else { 0.0 };
                        r = r.max((z.0[(i, j)] - want).abs());
                    }
                }
                r.max((z.0[(*n, *n)] - 1.0).abs())
            }
            GroupKind::SpecialOrthogonal(k) => {
                let o = (z.0.transpose() * &z.0 - DMatrix::<f64>::identity(*k, *k)).abs().max();
                o.max((z.0.determinant() - 1.0).abs())
            }
            GroupKind::Product(a, b) => {
                let (x, y) = self.split(z);
                let mut off: f64 = 0.0;
                for i in 0..self.k {
                    for j in 0..self.k {
                        if (i < a.k) != (j < a.k) {
                            off = off.max(z.0[(i, j)].abs());
                        }
                    }
                }
                off.max(a.membership_residual(&x)).max(b.membership_residual(&y))
            }
        }
    }

    /// Global chart used for export: translation vector for additive groups,
    /// row-major matrix entries for rotation groups, concatenation for products.
    pub fn coordinates(&self, z: &GroupElement) -> Vec<f64> {
        match &self.kind {
            GroupKind::Additive(n) => (0..*n).map(|i| z.0[(i, *n)]).collect(),
            GroupKind::SpecialOrthogonal(_) => z.0.transpose().iter().copied().collect(),
            GroupKind::Product(a, b) => {
                let (x, y) = self.split(z);
                let mut out = a.coordinates(&x);
                out.extend(b.coordinates(&y));
                out
            }
        }
    }

    pub fn coordinate_count(&self) -> usize {
        match &self.kind {
            GroupKind::Additive(n) => *n,
            GroupKind::SpecialOrthogonal(k) => k * k,
            GroupKind::Product(a, b) => a.coordinate_count() + b.coordinate_count(),
        }
    }

    /// exp of a Gaussian algebra vector with per-coordinate std `scale`.
    pub fn random_element<R: Rng + ?Sized>(&self, rng: &mut R, scale: f64) -> GroupElement {
        let v: Vec<f64> = (0..self.n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        self.exp(&v)
    }
}

/// Scaling and squaring with a truncated Taylor series.
pub fn expm(x: &DMatrix<f64>) -> DMatrix<f64> {
    let k = x.nrows();
    let norm = x.iter().map(|v| v.abs()).sum::<f64>().max(0.0);
    let mut s = 0i32;
    if norm > 0.25 {
        s = (norm / 0.25).log2().ceil() as i32;
    }
    let scaled = x / 2f64.powi(s);
    let mut term = DMatrix::<f64>::identity(k, k);
    let mut sum = term.clone();
    for j in 1..=20 {
        term = &term * &scaled / j as f64;
        sum += &term;
        if term.abs().max() < 1e-18 {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Denman–Beavers square root.
fn sqrtm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::<f64>::identity(k, k);
    for _ in 0..60 {
        let yi = y.clone().try_inverse().ok_or(Error::Singular("sqrtm"))?;
        let zi = z.clone().try_inverse().ok_or(Error::Singular("sqrtm"))?;
        let ny = (&y + zi) * 0.5;
        let nz = (&z + yi) * 0.5;
        let delta = (&ny - &y).abs().max();
        y = ny;
        z = nz;
        if delta < 1e-15 {
            break;
        }
    }
    Ok(y)
}

/// Inverse scaling and squaring: take square roots until close to I, then
/// sum the Mercator series.
fn logm_near_identity(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = a.nrows();
    let id = DMatrix::<f64>::identity(k, k);
    if (a + &id).determinant().abs() < 1e-12 {
        return Err(Error::OutOfDomain { angle: PI });
    }
    let mut y = a.clone();
    let mut s = 0;
    while (&y - &id).abs().max() > 0.1 && s < 40 {
        y = sqrtm(&y)?;
        s += 1;
    }
    let e = &y - &id;
    let mut term = e.clone();
    let mut sum = e.clone();
    for j in 2..=40 {
        term = &term * &e;
        let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
        sum += &term * (sign / j as f64);
        if term.abs().max() < 1e-18 {
            break;
        }
    }
    Ok(sum * 2f64.powi(s))
}

fn max_rotation_angle(l: &DMatrix<f64>) -> f64 {
    let g = l.transpose() * l;
    let eig = nalgebra::SymmetricEigen::new(g);
    eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v)).max(0.0).sqrt()
}

/// Moore–Penrose inverse of a full-rank matrix: P̃ = Pᵀ(PPᵀ)⁻¹ for wide P
/// (so P·P̃ = I), (PᵀP)⁻¹Pᵀ for tall P (so P̃·P = I).
pub fn pseudo_inverse(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (r, c) = p.shape();
    let expected = r.min(c);
    let rank = p.clone().svd(false, false).rank(1e-12 * p.abs().max().max(1e-300));
    if rank < expected {
        return Err(Error::RankDeficient { rank, expected });
    }
    if r <= c {
        let gram = p * p.transpose();
        let inv = gram.try_inverse().ok_or(Error::Singular("pseudo_inverse"))?;
        Ok(p.transpose() * inv)
    } else {
        let gram = p.transpose() * p;
        let inv = gram.try_inverse().ok_or(Error::Singular("pseudo_inverse"))?;
        Ok(inv * p.transpose())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{role, stream};

    fn rot(t: f64) -> GroupElement {
        LieGroup::so(2).exp(&[t])
    }

    #[test]
    fn additive_examples() {
        let g = LieGroup::additive(2);
        let a = g.exp(&[1.0, 0.0]);
        let b = g.exp(&[0.0, 2.0]);
        assert_eq!(g.mul(&a, &b), g.exp(&[1.0, 2.0]));
        assert_eq!(g.inv(&g.exp(&[3.0, -1.0])), g.exp(&[-3.0, 1.0]));
        let l = g.log(&g.exp(&[3.0, 4.0])).unwrap();
        assert_eq!(l.as_slice(), &[3.0, 4.0]);
        assert_eq!(g.truncation(&g.exp(&[0.1, 0.0])).as_slice(), &[0.1, 0.0]);
        assert_eq!(g.truncation(&g.exp(&[5.0, 0.0])).as_slice(), &[0.0, 0.0]);
        assert_eq!(g.truncation(&g.identity()).as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn additive_fast_path_matches_matrix_product() {
        let g = LieGroup::additive(3);
        let mut rng = stream(1, 0, role::CONFIG);
        for _ in 0..20 {
            let a = g.random_element(&mut rng, 2.0);
            let b = g.random_element(&mut rng, 2.0);
            let fast = g.mul(&a, &b);
            let slow = &a.0 * &b.0;
            assert!((&fast.0 - slow).abs().max() <= 1e-12);
        }
    }

    #[test]
    fn so2_examples() {
        let g = LieGroup::so(2);
        assert_eq!(g.basis()[0], DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
        let p = g.mul(&rot(PI / 3.0), &rot(PI / 6.0));
        assert!(p.dist(&rot(PI / 2.0)) < 1e-15);
        assert!(g.inv(&rot(0.7)).dist(&rot(-0.7)) < 1e-15);
        assert!(expm(&g.hat(&[0.9])).relative_eq(&rot(0.9).0, 1e-14, 1e-14));
        assert!(matches!(g.log(&rot(PI)), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn so2_frame_at_quarter_turn() {
        let g = LieGroup::so(2);
        let z = rot(PI / 2.0);
        let p = g.frame_matrix(&z);
        let y = &g.basis()[0] * &z.0;
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(p[(0, 2 * i + j)], y[(i, j)]);
            }
        }
    }

    #[test]
    fn so_n_log_roundtrip() {
        let mut rng = stream(2, 0, role::CONFIG);
        for n in [3usize, 4] {
            let g = LieGroup::so(n);
            for _ in 0..20 {
                let v: Vec<f64> = (0..g.dim()).map(|_| rng.random_range(-0.5..0.5)).collect();
                let z = g.exp(&v);
                assert!(g.membership_residual(&z) < 1e-12);
                let back = g.log(&z).unwrap();
                for (a, b) in back.iter().zip(&v) {
                    assert!((a - b).abs() < 1e-9, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn pseudo_inverse_examples() {
        let p = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let pt = pseudo_inverse(&p).unwrap();
        assert_eq!(pt, DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]));
        let c = DVector::from_vec(vec![2.0, -5.0]);
        let w = p.transpose() * &c;
        assert_eq!(pt.transpose() * w, c);

        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(pseudo_inverse(&id).unwrap(), id);

        let mut rng = stream(3, 0, role::CONFIG);
        let p = DMatrix::from_fn(2, 4, |_, _| rng.random_range(-1.0..1.0));
        let pt = pseudo_inverse(&p).unwrap();
        let res = (&p * &pt - DMatrix::<f64>::identity(2, 2)).abs().max();
        assert!(res <= 1e-10);

        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(pseudo_inverse(&bad), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn truncation_has_unit_jacobian_at_identity() {
        for g in [LieGroup::additive(2), LieGroup::so(3), LieGroup::product(LieGroup::additive(1), LieGroup::so(2))] {
            let eps = 1e-6;
            for a in 0..g.dim() {
                let mut v = vec![0.0; g.dim()];
                v[a] = eps;
                let hp = g.truncation(&g.exp(&v));
                v[a] = -eps;
                let hm = g.truncation(&g.exp(&v));
                for b in 0..g.dim() {
                    let d = (hp[b] - hm[b]) / (2.0 * eps);
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((d - want).abs() < 1e-6, "{} {a} {b} {d}", g.name());
                }
            }
        }
    }

    #[test]
    fn parse_names() {
        assert_eq!(LieGroup::parse("additive:2").unwrap().dim(), 2);
        assert_eq!(LieGroup::parse("so:3").unwrap().dim(), 3);
        let p = LieGroup::parse("product:additive:2,additive:1").unwrap();
        assert_eq!((p.dim(), p.matrix_size()), (3, 5));
        let q = LieGroup::parse("product:product:additive:1,so:2,additive:1").unwrap();
        assert_eq!(q.dim(), 3);
        assert!(LieGroup::parse("so:1").is_err());
        assert!(LieGroup::parse("torus:2").is_err());
    }

    #[test]
    fn cutoff_profile() {
        assert_eq!(cutoff(0.3), 1.0);
        assert_eq!(cutoff(1.2), 0.0);
        assert!((cutoff(0.75) - 0.5).abs() < 1e-15);
        let d = 1e-6;
        // C¹ at the knots
        assert!(((cutoff(0.5 + d) - 1.0) / d).abs() < 1e-4);
        assert!((cutoff(1.0 - d) / d).abs() < 1e-4);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let g = LieGroup::additive(2);
        let wrong = LieGroup::additive(3).identity();
        assert!(matches!(g.try_mul(&g.identity(), &wrong), Err(Error::Shape(_))));
        assert!(g.try_inv(&wrong).is_err());
    }
}
