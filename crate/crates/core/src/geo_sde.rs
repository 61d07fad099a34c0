//! Geometrical SDEs Ψ_k(x, z) and two integrators: the one-step jump map and
//! a second-order Taylor scheme kept for cross-validation.

use crate::error::{invalid, Result};
use crate::gauge::GaugeElement;
use crate::lie::{GroupElement, LieGroup};
use crate::path::CadlagPath;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// Strict-past view handed to controls and gauge processes when computing
/// the value used on the step ending at node `step`. All slices stop at node
/// `step − 1`; node `step` is not reachable.
#[derive(Clone, Copy)]
pub struct PastView<'a, S> {
    pub step: usize,
    pub times: &'a [f64],
    pub driver: &'a [GroupElement],
    pub state: &'a [S],
}

/// A point of the parameter space 𝒦: real parameters plus gauge values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Param {
    pub values: Vec<f64>,
    pub gauges: Vec<GaugeElement>,
}

impl Param {
    pub fn none() -> Self {
        Param::default()
    }
    pub fn values(values: Vec<f64>) -> Self {
        Param { values, gauges: Vec::new() }
    }
}

pub trait Control: Send + Sync {
    fn eval(&self, view: &PastView<'_, Vec<f64>>) -> Result<Param>;
}

#[derive(Clone, Debug, Default)]
pub struct ConstantControl(pub Param);

impl Control for ConstantControl {
    fn eval(&self, _view: &PastView<'_, Vec<f64>>) -> Result<Param> {
        Ok(self.0.clone())
    }
}

pub struct FnControl<F>(pub F);

impl<F> Control for FnControl<F>
where
    F: Fn(&PastView<'_, Vec<f64>>) -> Param + Send + Sync,
{
    fn eval(&self, view: &PastView<'_, Vec<f64>>) -> Result<Param> {
        Ok((self.0)(view))
    }
}

pub trait GeometricSde: Send + Sync {
    fn group(&self) -> &Arc<LieGroup>;
    fn state_dim(&self) -> usize;
    /// Ψ_k(x, z); must satisfy Ψ_k(x, 1) = x.
    fn psi(&self, k: &Param, x: &[f64], z: &GroupElement) -> Vec<f64>;
    fn in_domain(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.is_finite())
    }
    /// m×n matrix ∂_{a^α} Ψ_k(x, exp(aᵝξ_β)) at a = 0.
    fn first_derivative(&self, _k: &Param, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
    /// For each state component, the n×n Hessian of a ↦ Ψ_k(x, exp(aᵝξ_β)) at 0.
    fn second_derivative(&self, _k: &Param, _x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        None
    }
}

pub const FIRST_STEP: f64 = 1e-5;
pub const SECOND_STEP: f64 = 1e-4;

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn psi_at(sde: &dyn GeometricSde, k: &Param, x: &[f64], a: &[f64]) -> DVector<f64> {
    DVector::from_vec(sde.psi(k, x, &sde.group().exp(a)))
}

pub fn first_derivative_fd(sde: &dyn GeometricSde, k: &Param, x: &[f64]) -> DMatrix<f64> {
    let n = sde.group().dim();
    let m = sde.state_dim();
    let e0 = FIRST_STEP * norm(x).max(1.0);
    let mut out = DMatrix::zeros(m, n);
    let central = |al: usize, e: f64| {
        let mut a = vec![0.0; n];
        a[al] = e;
        let p = psi_at(sde, k, x, &a);
        a[al] = -e;
        (p - psi_at(sde, k, x, &a)) / (2.0 * e)
    };
    for al in 0..n {
        let d = (central(al, e0 / 2.0) * 4.0 - central(al, e0)) / 3.0;
        out.set_column(al, &d);
    }
    out
}

pub fn second_derivative_fd(sde: &dyn GeometricSde, k: &Param, x: &[f64]) -> Vec<DMatrix<f64>> {
    let n = sde.group().dim();
    let m = sde.state_dim();
    let e0 = SECOND_STEP * norm(x).max(1.0);
    let f0 = psi_at(sde, k, x, &vec![0.0; n]);
    let at = |pairs: &[(usize, f64)]| {
        let mut a = vec![0.0; n];
        for &(i, v) in pairs {
            a[i] += v;
        }
        psi_at(sde, k, x, &a)
    };
    let second = |al: usize, be: usize, e: f64| -> DVector<f64> {
        if al == be {
            (at(&[(al, e)]) - &f0 * 2.0 + at(&[(al, -e)])) / (e * e)
        } else {
            (at(&[(al, e), (be, e)]) - at(&[(al, e), (be, -e)]) - at(&[(al, -e), (be, e)]) + at(&[(al, -e), (be, -e)]))
                / (4.0 * e * e)
        }
    };
    let mut out = vec![DMatrix::zeros(n, n); m];
    for al in 0..n {
        for be in al..n {
            let d = (second(al, be, e0 / 2.0) * 4.0 - second(al, be, e0)) / 3.0;
            for i in 0..m {
                out[i][(al, be)] = d[i];
                out[i][(be, al)] = d[i];
            }
        }
    }
    out
}

/// Integrated state path on the driver's grid.
#[derive(Clone, Debug)]
pub struct Solution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// (node index, X_{t−}) for every driver jump.
    pub left_limits: Vec<(usize, Vec<f64>)>,
    /// First node at which the state was non-finite or left the domain.
    pub stopped_at: Option<usize>,
}

impl Solution {
    pub fn last(&self) -> &[f64] {
        self.states.last().unwrap()
    }
    pub fn exploded(&self) -> bool {
        self.stopped_at.is_some()
    }
}

fn check_start(sde: &dyn GeometricSde, z: &CadlagPath, x0: &[f64]) -> Result<()> {
    if sde.group().name() != z.group().name() {
        return invalid(format!("SDE driven by {} given a path on {}", sde.group().name(), z.group().name()));
    }
    if x0.len() != sde.state_dim() || !sde.in_domain(x0) {
        return invalid("initial state outside the domain");
    }
    Ok(())
}

/// Drive the integration loop; `cont_step` advances the state across the
/// continuous part of step n, jumps are always applied by the exact map.
fn run<F>(sde: &dyn GeometricSde, control: &dyn Control, z: &CadlagPath, x0: &[f64], mut cont_step: F) -> Result<Solution>
where
    F: FnMut(&Param, &[f64], &GroupElement) -> Result<Vec<f64>>,
{
    check_start(sde, z, x0)?;
    let m = z.increments().len();
    let mut states = Vec::with_capacity(m + 1);
    states.push(x0.to_vec());
    let mut left_limits = Vec::new();
    let mut stopped_at = None;
    for n in 1..=m {
        let view = PastView { step: n, times: &z.times()[..n], driver: &z.nodes()[..n], state: &states[..n] };
        let k = control.eval(&view)?;
        let s = &z.increments()[n - 1];
        let mut x = cont_step(&k, &states[n - 1], &s.cont)?;
        if let Some(j) = &s.jump {
            if !sde.in_domain(&x) {
                stopped_at = Some(n);
                break;
            }
            let next = sde.psi(&k, &x, j);
            left_limits.push((n, x));
            x = next;
        }
        if !sde.in_domain(&x) {
            stopped_at = Some(n);
            break;
        }
        states.push(x);
    }
    let times = z.times()[..states.len()].to_vec();
    Ok(Solution { times, states, left_limits, stopped_at })
}

/// X_n = Ψ_{K_n}(Ψ_{K_n}(X_{n−1}, ΔZ^c_n), ΔZ^J_n): the continuous increment
/// first, then the exact jump map, so X_{t−} is available at every jump.
pub fn integrate_jump_map(sde: &dyn GeometricSde, control: &dyn Control, z: &CadlagPath, x0: &[f64]) -> Result<Solution> {
    run(sde, control, z, x0, |k, x, c| Ok(sde.psi(k, x, c)))
}

/// Source of the per-step continuous covariation δ[Z]^c.
#[derive(Clone, Debug)]
pub enum QvSource {
    /// Model value A₀·Δt.
    Model(DMatrix<f64>),
    /// δδᵀ with δ = log of the continuous increment.
    Realized,
}

/// x + ∂Ψ·δ + ½∂²Ψ : δ[Z]^c on continuous parts, exact jump map at jumps.
pub fn integrate_taylor(
    sde: &dyn GeometricSde,
    control: &dyn Control,
    z: &CadlagPath,
    x0: &[f64],
    qv: &QvSource,
) -> Result<Solution> {
    let group = z.group().clone();
    let n = group.dim();
    if let QvSource::Model(a) = qv {
        if a.nrows() != n || a.ncols() != n {
            return invalid("model covariation has the wrong shape");
        }
    }
    let times = z.times().to_vec();
    let mut idx = 0usize;
    run(sde, control, z, x0, |k, x, c| {
        idx += 1;
        let delta = group.log(c)?;
        let d1 = sde.first_derivative(k, x).unwrap_or_else(|| first_derivative_fd(sde, k, x));
        let d2 = sde.second_derivative(k, x).unwrap_or_else(|| second_derivative_fd(sde, k, x));
        let q = match qv {
            QvSource::Model(a) => a * (times[idx] - times[idx - 1]),
            QvSource::Realized => &delta * delta.transpose(),
        };
        let lin = d1 * &delta;
        Ok((0..x.len()).map(|i| x[i] + lin[i] + 0.5 * d2[i].component_mul(&q).sum()).collect())
    })
}

// ---------------------------------------------------------------------------
// Presets

/// Ψ(x, z) = x + C·log(z) on ℝᵐ driven by ℝⁿ; with C = I this is Z itself.
#[derive(Debug, Clone)]
pub struct AdditiveSde {
    group: Arc<LieGroup>,
    c: DMatrix<f64>,
}

impl AdditiveSde {
    pub fn identity(n: usize) -> Self {
        AdditiveSde { group: LieGroup::additive(n), c: DMatrix::identity(n, n) }
    }
    pub fn with_matrix(group: Arc<LieGroup>, c: DMatrix<f64>) -> Result<Self> {
        if c.ncols() != group.dim() {
            return invalid("coefficient matrix must have one column per driver direction");
        }
        Ok(AdditiveSde { group, c })
    }
}

impl GeometricSde for AdditiveSde {
    fn group(&self) -> &Arc<LieGroup> {
        &self.group
    }
    fn state_dim(&self) -> usize {
        self.c.nrows()
    }
    fn psi(&self, _k: &Param, x: &[f64], z: &GroupElement) -> Vec<f64> {
        let v = self.group.log(z).expect("log on a linear group");
        let dx = &self.c * v;
        x.iter().zip(dx.iter()).map(|(a, b)| a + b).collect()
    }
    fn first_derivative(&self, _k: &Param, _x: &[f64]) -> Option<DMatrix<f64>> {
        if self.group.is_linear() {
            Some(self.c.clone())
        } else {
            None
        }
    }
}

/// Ψ(x, z) = z·x for x a flattened k×k matrix (row-major), i.e. the
/// right-invariant SDE dX = dZ·X on the driver group itself.
#[derive(Debug, Clone)]
pub struct LeftMultiplication {
    group: Arc<LieGroup>,
}

impl LeftMultiplication {
    pub fn new(group: Arc<LieGroup>) -> Self {
        LeftMultiplication { group }
    }
}

impl GeometricSde for LeftMultiplication {
    fn group(&self) -> &Arc<LieGroup> {
        &self.group
    }
    fn state_dim(&self) -> usize {
        self.group.matrix_size().pow(2)
    }
    fn psi(&self, _k: &Param, x: &[f64], z: &GroupElement) -> Vec<f64> {
        let k = self.group.matrix_size();
        let xm = DMatrix::from_row_slice(k, k, x);
        let out = &z.0 * xm;
        out.transpose().as_slice().to_vec()
    }
}

/// Vector field on ℝᵐ.
pub type Field = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// ∂_a R(a, z) for a Marcus curve; z in algebra coordinates.
pub type CurveDerivative = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

/// Ψ(x, z) = Φ(1, x, z) where ∂_aΦ = ∂_aR^α(a, z)·V_α(Φ), Φ(0) = x, solved by
/// fixed-step RK4. The default curve R(a, z) = a·log(z) gives the classical
/// Marcus (canonical) equation.
#[derive(Clone)]
pub struct MarcusSde {
    group: Arc<LieGroup>,
    m: usize,
    fields: Vec<Field>,
    curve: Option<CurveDerivative>,
    substeps: usize,
}

impl MarcusSde {
    pub const DEFAULT_SUBSTEPS: usize = 32;

    pub fn new(group: Arc<LieGroup>, m: usize, fields: Vec<Field>) -> Result<Self> {
        Self::with_options(group, m, fields, None, Self::DEFAULT_SUBSTEPS)
    }

    pub fn with_options(
        group: Arc<LieGroup>,
        m: usize,
        fields: Vec<Field>,
        curve: Option<CurveDerivative>,
        substeps: usize,
    ) -> Result<Self> {
        if fields.len() != group.dim() {
            return invalid(format!("{} vector fields for a {}-dimensional driver", fields.len(), group.dim()));
        }
        if substeps == 0 {
            return invalid("substeps must be positive");
        }
        let sde = MarcusSde { group, m, fields, curve, substeps };
        // probe the flow along every unit direction from a generic point
        let x = vec![1.0; m];
        for al in 0..sde.group.dim() {
            for s in [1.0, -1.0] {
                let mut v = vec![0.0; sde.group.dim()];
                v[al] = s;
                let y = sde.flow(&x, &v);
                if y.len() != m || y.iter().any(|c| !c.is_finite()) {
                    return invalid(format!("flow along direction {al} is not finite"));
                }
            }
        }
        Ok(sde)
    }

    /// Scalar linear equation dX = X ◇ dZ on ℝ.
    pub fn linear() -> Self {
        let f: Field = Arc::new(|x: &[f64]| vec![x[0]]);
        MarcusSde::new(LieGroup::additive(1), 1, vec![f]).expect("linear preset")
    }

    fn rhs(&self, a: f64, z: &[f64], y: &[f64]) -> Vec<f64> {
        let w = match &self.curve {
            Some(c) => c(a, z),
            None => z.to_vec(),
        };
        let mut out = vec![0.0; self.m];
        for (al, field) in self.fields.iter().enumerate() {
            if w[al] == 0.0 {
                continue;
            }
            let v = field(y);
            for i in 0..self.m {
                out[i] += w[al] * v[i];
            }
        }
        out
    }

    fn flow(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        let h = 1.0 / self.substeps as f64;
        let mut y = x.to_vec();
        let axpy = |y: &[f64], k: &[f64], s: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + s * b).collect() };
        for i in 0..self.substeps {
            let a = i as f64 * h;
            let k1 = self.rhs(a, z, &y);
            let k2 = self.rhs(a + h / 2.0, z, &axpy(&y, &k1, h / 2.0));
            let k3 = self.rhs(a + h / 2.0, z, &axpy(&y, &k2, h / 2.0));
            let k4 = self.rhs(a + h, z, &axpy(&y, &k3, h));
            for j in 0..self.m {
                y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
        }
        y
    }
}

impl GeometricSde for MarcusSde {
    fn group(&self) -> &Arc<LieGroup> {
        &self.group
    }
    fn state_dim(&self) -> usize {
        self.m
    }
    fn psi(&self, _k: &Param, x: &[f64], z: &GroupElement) -> Vec<f64> {
        match self.group.log(z) {
            Ok(v) if v.iter().all(|c| *c == 0.0) => x.to_vec(),
            Ok(v) => self.flow(x, v.as_slice()),
            Err(_) => vec![f64::NAN; self.m],
        }
    }
    // Along the straight curve a ↦ aᵅV_α the flow derivatives at 0 are V_α(x)
    // and the symmetrised ½(DV_α·V_β + DV_β·V_α)(x); only the field Jacobians
    // need differencing, which is far cheaper than differencing the flow.
    fn first_derivative(&self, _k: &Param, x: &[f64]) -> Option<DMatrix<f64>> {
        if self.curve.is_some() {
            return None;
        }
        let cols: Vec<DVector<f64>> = self.fields.iter().map(|f| DVector::from_vec(f(x))).collect();
        Some(DMatrix::from_columns(&cols))
    }
    fn second_derivative(&self, _k: &Param, x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        if self.curve.is_some() {
            return None;
        }
        let n = self.fields.len();
        let v: Vec<Vec<f64>> = self.fields.iter().map(|f| f(x)).collect();
        let e = FIRST_STEP * norm(x).max(1.0);
        // (DV_α · w) by a central difference along w
        let dir = |al: usize, w: &[f64]| -> Vec<f64> {
            let p: Vec<f64> = x.iter().zip(w).map(|(a, b)| a + e * b).collect();
            let q: Vec<f64> = x.iter().zip(w).map(|(a, b)| a - e * b).collect();
            let (fp, fq) = ((self.fields[al])(&p), (self.fields[al])(&q));
            fp.iter().zip(&fq).map(|(a, b)| (a - b) / (2.0 * e)).collect()
        };
        let mut out = vec![DMatrix::zeros(n, n); self.m];
        for al in 0..n {
            for be in al..n {
                let (a, b) = (dir(al, &v[be]), dir(be, &v[al]));
                for i in 0..self.m {
                    let s = 0.5 * (a[i] + b[i]);
                    out[i][(al, be)] = s;
                    out[i][(be, al)] = s;
                }
            }
        }
        Some(out)
    }
}

pub type DriftFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// σ(x) as an m×(n₁−1) matrix, column α−2 being σ_α.
pub type DiffusionFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
/// F(x, z) with z in the jump coordinates.
pub type JumpFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// Smooth SDE driven by a Lévy process Z on ℝⁿ whose first coordinate is
/// time, coordinates 2..n₁ are standard Brownian and the rest carry the jumps.
///
/// Ψ(x, z) = x + μ̃(x)z¹ + σ_α(x)z^α + F(x, z_J) with the compensated drift
/// μ̃(x) = μ(x) − ∫_{|z|≤1} (F(x,z) − ∂_zF(x,0)·z) ν₀(dz).
#[derive(Clone)]
pub struct SmoothLevySde {
    group: Arc<LieGroup>,
    m: usize,
    n1: usize,
    mu: DriftFn,
    sigma: Option<DiffusionFn>,
    f: Option<JumpFn>,
    /// Quadrature nodes (jump coordinates, weight) for ν₀ restricted to |z| ≤ 1.
    small: Vec<(Vec<f64>, f64)>,
}

impl SmoothLevySde {
    /// `nu0` is a list of weighted nodes over ℝ^{n−n₁}; for a finite measure
    /// given by a sampler pass the samples with weight rate/len.
    pub fn new(
        m: usize,
        n1: usize,
        n: usize,
        mu: DriftFn,
        sigma: Option<DiffusionFn>,
        f: Option<JumpFn>,
        nu0: &[(Vec<f64>, f64)],
    ) -> Result<Self> {
        if n1 == 0 || n1 > n {
            return invalid("need 1 <= n1 <= n");
        }
        if nu0.iter().any(|(z, w)| z.len() != n - n1 || !w.is_finite() || *w < 0.0) {
            return invalid("jump quadrature nodes must live in the jump coordinates with finite nonnegative weights");
        }
        let small = nu0.iter().filter(|(z, _)| norm(z) <= 1.0).cloned().collect();
        Ok(SmoothLevySde { group: LieGroup::additive(n), m, n1, mu, sigma, f, small })
    }

    pub fn compensation(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        let f = match &self.f {
            Some(f) => f,
            None => return out,
        };
        const E: f64 = 1e-5;
        for (z, w) in &self.small {
            let fz = f(x, z);
            let zp: Vec<f64> = z.iter().map(|v| v * E).collect();
            let zm: Vec<f64> = z.iter().map(|v| -v * E).collect();
            let (p, q) = (f(x, &zp), f(x, &zm));
            for i in 0..self.m {
                let lin = (p[i] - q[i]) / (2.0 * E);
                out[i] += w * (fz[i] - lin);
            }
        }
        out
    }

    pub fn mu_tilde(&self, x: &[f64]) -> Vec<f64> {
        let mu = (self.mu)(x);
        let c = self.compensation(x);
        mu.iter().zip(c).map(|(a, b)| a - b).collect()
    }
}

impl GeometricSde for SmoothLevySde {
    fn group(&self) -> &Arc<LieGroup> {
        &self.group
    }
    fn state_dim(&self) -> usize {
        self.m
    }
    fn psi(&self, _k: &Param, x: &[f64], z: &GroupElement) -> Vec<f64> {
        let n = self.group.dim();
        let v: Vec<f64> = (0..n).map(|i| z.0[(i, n)]).collect();
        let mut out = x.to_vec();
        if v[0] != 0.0 {
            for (o, m) in out.iter_mut().zip(self.mu_tilde(x)) {
                *o += m * v[0];
            }
        }
        if let Some(sigma) = &self.sigma {
            if self.n1 > 1 && v[1..self.n1].iter().any(|c| *c != 0.0) {
                let s = sigma(x);
                let dw = DVector::from_column_slice(&v[1..self.n1]);
                let d = s * dw;
                for (o, d) in out.iter_mut().zip(d.iter()) {
                    *o += d;
                }
            }
        }
        if let Some(f) = &self.f {
            let zj = &v[self.n1..];
            if zj.iter().any(|c| *c != 0.0) {
                for (o, d) in out.iter_mut().zip(f(x, zj)) {
                    *o += d;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::Step;

    fn drift_path(b: &[f64], m: usize, h: f64) -> CadlagPath {
        let g = LieGroup::additive(b.len());
        let step: Vec<f64> = b.iter().map(|v| v * h).collect();
        let steps = (0..m).map(|_| Step { cont: g.exp(&step), jump: None }).collect();
        CadlagPath::from_steps(g, (0..=m).map(|i| i as f64 * h).collect(), steps, h).unwrap()
    }

    #[test]
    fn constant_map_keeps_state() {
        struct Still(Arc<LieGroup>);
        impl GeometricSde for Still {
            fn group(&self) -> &Arc<LieGroup> {
                &self.0
            }
            fn state_dim(&self) -> usize {
                2
            }
            fn psi(&self, _k: &Param, x: &[f64], _z: &GroupElement) -> Vec<f64> {
                x.to_vec()
            }
        }
        let z = drift_path(&[1.0, -2.0], 16, 1.0 / 16.0);
        let sde = Still(z.group().clone());
        let sol = integrate_jump_map(&sde, &ConstantControl::default(), &z, &[3.0, 4.0]).unwrap();
        assert!(sol.states.iter().all(|x| x == &vec![3.0, 4.0]));
    }

    #[test]
    fn marcus_flows() {
        let lin = MarcusSde::linear();
        let g = LieGroup::additive(1);
        let y = lin.psi(&Param::none(), &[1.0], &g.exp(&[1.0]));
        assert!((y[0] - std::f64::consts::E).abs() / std::f64::consts::E < 1e-8);
        assert_eq!(lin.psi(&Param::none(), &[2.5], &g.identity()), vec![2.5]);

        let one: Field = Arc::new(|_: &[f64]| vec![1.0]);
        let c = MarcusSde::new(g.clone(), 1, vec![one]).unwrap();
        assert!((c.psi(&Param::none(), &[0.5], &g.exp(&[0.7]))[0] - 1.2).abs() < 1e-14);

        let g2 = LieGroup::additive(2);
        let e1: Field = Arc::new(|_: &[f64]| vec![1.0, 0.0]);
        let e2: Field = Arc::new(|_: &[f64]| vec![0.0, 1.0]);
        let c = MarcusSde::new(g2.clone(), 2, vec![e1, e2]).unwrap();
        let y = c.psi(&Param::none(), &[1.0, 1.0], &g2.exp(&[0.25, -0.5]));
        assert!((y[0] - 1.25).abs() < 1e-14 && (y[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn marcus_rejects_blowing_up_flow() {
        let f: Field = Arc::new(|x: &[f64]| vec![(x[0] * x[0]).exp()]);
        assert!(MarcusSde::new(LieGroup::additive(1), 1, vec![f]).is_err());
    }

    #[test]
    fn fd_derivatives_of_marcus_linear() {
        let lin = MarcusSde::linear();
        let d1 = first_derivative_fd(&lin, &Param::none(), &[2.0]);
        let d2 = second_derivative_fd(&lin, &Param::none(), &[2.0]);
        assert!((d1[(0, 0)] - 2.0).abs() < 1e-7);
        assert!((d2[0][(0, 0)] - 2.0).abs() < 1e-5);
    }

    #[test]
    fn marcus_field_derivatives_match_flow() {
        let g = LieGroup::additive(2);
        let sde = MarcusSde::new(g, 2, vec![
            Arc::new(|x: &[f64]| vec![1.0, 0.5 * x[0].sin()]),
            Arc::new(|x: &[f64]| vec![0.3 * x[1], (0.4 * x[0]).cos()]),
        ])
        .unwrap();
        let (k, x) = (Param::none(), [0.7, -1.3]);
        let d1 = sde.first_derivative(&k, &x).unwrap() - first_derivative_fd(&sde, &k, &x);
        assert!(d1.abs().max() < 1e-8);
        let fd = second_derivative_fd(&sde, &k, &x);
        for (a, b) in sde.second_derivative(&k, &x).unwrap().iter().zip(&fd) {
            assert!((a - b).abs().max() < 1e-5);
        }
    }

    #[test]
    fn pure_drift_schemes_agree() {
        let z = drift_path(&[1.0, 0.5], 32, 1.0 / 32.0);
        let sde = AdditiveSde::identity(2);
        let ctl = ConstantControl::default();
        let a = integrate_jump_map(&sde, &ctl, &z, &[0.0, 0.0]).unwrap();
        let b = integrate_taylor(&sde, &ctl, &z, &[0.0, 0.0], &QvSource::Model(DMatrix::zeros(2, 2))).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            assert!((x[0] - y[0]).abs() < 1e-12 && (x[1] - y[1]).abs() < 1e-12);
        }
        assert!((a.last()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn smooth_levy_compensation() {
        let mu: DriftFn = Arc::new(|_: &[f64]| vec![0.0]);
        let f: JumpFn = Arc::new(|x: &[f64], z: &[f64]| vec![x[0] * z[0] * z[0]]);
        let sde = SmoothLevySde::new(1, 1, 2, mu.clone(), None, Some(f), &[(vec![0.5], 1.0)]).unwrap();
        assert!((sde.mu_tilde(&[2.0])[0] + 0.5).abs() < 1e-9);

        let lin: JumpFn = Arc::new(|x: &[f64], z: &[f64]| vec![x[0] * z[0]]);
        let sde = SmoothLevySde::new(1, 1, 2, mu.clone(), None, Some(lin), &[(vec![0.5], 1.0)]).unwrap();
        assert!(sde.mu_tilde(&[2.0])[0].abs() < 1e-9);

        let add: JumpFn = Arc::new(|_: &[f64], z: &[f64]| vec![z[0]]);
        let sde = SmoothLevySde::new(1, 1, 2, mu, None, Some(add), &[(vec![1.5], 2.0)]).unwrap();
        assert_eq!(sde.mu_tilde(&[1.0])[0], 0.0);
    }

    #[test]
    fn left_multiplication_reproduces_driver() {
        let g = LieGroup::so(2);
        let steps: Vec<Step> = (0..10)
            .map(|i| Step { cont: g.exp(&[0.1 * i as f64]), jump: (i % 4 == 3).then(|| g.exp(&[0.5])) })
            .collect();
        let z = CadlagPath::from_steps(g.clone(), (0..=10).map(|i| i as f64).collect(), steps, 1.0).unwrap();
        let sde = LeftMultiplication::new(g.clone());
        let x0 = g.identity().0.transpose().as_slice().to_vec();
        let sol = integrate_jump_map(&sde, &ConstantControl::default(), &z, &x0).unwrap();
        for (x, node) in sol.states.iter().zip(z.nodes()) {
            let m = DMatrix::from_row_slice(2, 2, x);
            assert!((m - &node.0).abs().max() < 1e-12);
        }
        assert_eq!(sol.left_limits.len(), z.jumps().len());
    }
}
