//! Group actions Ξ_g on the driver group, random transformations by
//! predictable gauge processes, composition/inversion of jump maps, and the
//! linearisations Γ_g, O_g.

use crate::error::{invalid, Error, Result};
use crate::geo_sde::{Control, GeometricSde, Param, PastView};
use crate::lie::{GroupElement, GroupKind, LieGroup};
use crate::path::{CadlagPath, Step};
use crate::rng::StreamRng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::Arc;

/// Element of the gauge group, always in a matrix representation:
/// rotations as n×n, scalings as 1×1, the shear group (ℝ,+) as 2×2
/// unipotent matrices. Composition is the matrix product.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugeElement(pub DMatrix<f64>);

impl GaugeElement {
    pub fn rotation2(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        GaugeElement(DMatrix::from_row_slice(2, 2, &[c, -s, s, c]))
    }

    /// Rotation by `theta` in the (0,1) plane of ℝⁿ.
    pub fn plane_rotation(n: usize, theta: f64) -> Self {
        let mut m = DMatrix::identity(n, n);
        let (s, c) = theta.sin_cos();
        m[(0, 0)] = c;
        m[(0, 1)] = -s;
        m[(1, 0)] = s;
        m[(1, 1)] = c;
        GaugeElement(m)
    }

    pub fn scalar(s: f64) -> Self {
        GaugeElement(DMatrix::from_element(1, 1, s))
    }

    pub fn shear(a: f64) -> Self {
        GaugeElement(DMatrix::from_row_slice(2, 2, &[1.0, a, 0.0, 1.0]))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Dense n×n×n array indexed as O^α_{βγ}.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n: usize) -> Self {
        Tensor3 { n, data: vec![0.0; n * n * n] }
    }
    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.n + b) * self.n + c]
    }
    pub fn set(&mut self, a: usize, b: usize, c: usize, v: f64) {
        self.data[(a * self.n + b) * self.n + c] = v;
    }
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
    pub fn symmetrized(&self) -> Tensor3 {
        let mut out = Tensor3::zeros(self.n);
        for a in 0..self.n {
            for b in 0..self.n {
                for c in 0..self.n {
                    out.set(a, b, c, 0.5 * (self.get(a, b, c) + self.get(a, c, b)));
                }
            }
        }
        out
    }
    /// (O:A)^α = Σ_{βγ} O^α_{βγ} A^{βγ}.
    pub fn contract(&self, a: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_fn(self.n, |al, _| {
            let mut s = 0.0;
            for b in 0..self.n {
                for c in 0..self.n {
                    s += self.get(al, b, c) * a[(b, c)];
                }
            }
            s
        })
    }
}

pub trait GaugeAction: Send + Sync + Debug {
    fn name(&self) -> String;
    fn group(&self) -> &Arc<LieGroup>;
    fn apply(&self, g: &GaugeElement, z: &GroupElement) -> GroupElement;
    fn identity(&self) -> GaugeElement;
    fn compose(&self, a: &GaugeElement, b: &GaugeElement) -> GaugeElement {
        GaugeElement(&a.0 * &b.0)
    }
    fn inverse(&self, g: &GaugeElement) -> GaugeElement {
        GaugeElement(g.0.clone().try_inverse().expect("gauge elements are invertible"))
    }
    /// Draw from a compact generating subset of the gauge group.
    fn sample(&self, rng: &mut StreamRng) -> GaugeElement;
    fn is_automorphism(&self) -> bool {
        false
    }
    fn gamma_analytic(&self, _g: &GaugeElement) -> Option<DMatrix<f64>> {
        None
    }
    fn big_o_analytic(&self, _g: &GaugeElement) -> Option<Tensor3> {
        None
    }
    /// True for actions of the form (Ξ¹, id) on a product group.
    fn fixes_second_factor(&self) -> bool {
        false
    }
}

fn haar_rotation(n: usize, reflections: bool, rng: &mut StreamRng) -> DMatrix<f64> {
    let mut q = if n == 2 {
        GaugeElement::rotation2(rng.random_range(-PI..PI)).0
    } else {
        let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let qr = a.qr();
        let (mut q, r) = (qr.q(), qr.r());
        for j in 0..n {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        if q.determinant() < 0.0 {
            q.column_mut(0).neg_mut();
        }
        q
    };
    if reflections && rng.random::<bool>() {
        q.row_mut(0).neg_mut();
    }
    q
}

fn additive_dim(group: &LieGroup) -> usize {
    match group.kind() {
        GroupKind::Additive(n) => *n,
        _ => panic!("{} is not an additive group", group.name()),
    }
}

fn translate(group: &LieGroup, v: &DVector<f64>) -> GroupElement {
    group.exp(v.as_slice())
}

fn translation(z: &GroupElement, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|i| z.0[(i, n)]))
}

/// Ξ_B(z) = B·z on ℝⁿ, B ∈ SO(n) (or O(n) when reflections are allowed).
#[derive(Debug, Clone)]
pub struct RotationAction {
    group: Arc<LieGroup>,
    n: usize,
    reflections: bool,
}

impl RotationAction {
    pub fn new(n: usize) -> Self {
        RotationAction { group: LieGroup::additive(n), n, reflections: false }
    }
    pub fn orthogonal(n: usize) -> Self {
        RotationAction { group: LieGroup::additive(n), n, reflections: true }
    }
    pub fn on(group: Arc<LieGroup>) -> Self {
        let n = additive_dim(&group);
        RotationAction { group, n, reflections: false }
    }
}

impl GaugeAction for RotationAction {
    fn name(&self) -> String {
        format!("rotation:{}", self.n)
    }
    fn group(&self) -> &Arc<LieGroup> {
        &self.group
    }
    fn apply(&self, g: &GaugeElement, z: &GroupElement) -> GroupElement {
        translate(&self.group, &(&g.0 * translation(z, self.n)))
    }
    fn identity(&self) -> GaugeElement {
        GaugeElement(DMatrix::identity(self.n, self.n))
    }
    fn inverse(&self, g: &GaugeElement) -> GaugeElement {
        GaugeElement(g.0.transpose())
    }
    fn sample(&self, rng: &mut StreamRng) -> GaugeElement {
        GaugeElement(haar_rotation(self.n, self.reflections, rng))
    }
    fn is_automorphism(&self) -> bool {
        true
    }
    fn gamma_analytic(&self, g: &GaugeElement) -> Option<DMatrix<f64>> {
        Some(g.0.clone())
    }
    fn big_o_analytic(&self, _g: &GaugeElement) -> Option<Tensor3> {
        Some(Tensor3::zeros(self.n))
    }
}

/// Ξ_s(z) = s·z on ℝⁿ, s > 0.
#[derive(Debug, Clone)]
pub struct ScalingAction {
    group: Arc<LieGroup>,
    n: usize,
}

impl ScalingAction {
    pub fn new(n: usize) -> Self {
        ScalingAction { group: LieGroup::additive(n), n }
    }
    pub fn on(group: Arc<LieGroup>) -> Self {
        let n = additive_dim(&group);
        ScalingAction { group, n }
    }
}

impl GaugeAction for ScalingAction {
    fn name(&self) -> String {
        "scaling".into()
    }
    fn group(&self) -> &Arc<LieGroup> {
        &self.group
    }
    fn apply(&self, g: &GaugeElement, z: &GroupElement) -> GroupElement {
        translate(&self.group, &(translation(z, self.n) * g.0[(0, 0)]))
    }
    fn identity(&self) -> GaugeElement {
        GaugeElement::scalar(1.0)
    }
    fn inverse(&self, g: &GaugeElement) -> GaugeElement {
        GaugeElement::scalar(1.0 / g.0[(0, 0)])
    }
    fn sample(&self, rng: &mut StreamRng) -> GaugeElement {
        GaugeElement::scalar(rng.random_range(-2f64.ln()..2f64.ln()).exp())
    }
    fn is_automorphism(&self) -> bool {
        true
    }
    fn gamma_analytic(&self, g: &GaugeElement) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(self.n, self.n) * g.0[(0, 0)])
    }
    fn big_o_analytic(&self, _g: &GaugeElement) -> Option<Tensor3> {
        Some(Tensor3::zeros(self.n))
    }
}

/// Ξ_a(z) = (z₁, z₂ + a·z₁²) on ℝ², gauge group (ℝ,+). Not an automorphism;
/// it is the built-in action with a nonzero second-order term.
#[derive(Debug, Clone)]
pub struct QuadraticShear {
    group: Arc<LieGroup>,
}

impl QuadraticShear {
    pub fn new() -> Self {
        QuadraticShear { group: LieGroup::additive(2) }
    }
    pub fn on(group: Arc<LieGroup>) -> Self {
        assert_eq!(additive_dim(&group), 2, "qshear acts on additive:2");
        QuadraticShear { group }
    }
}

impl Default for QuadraticShear {
    fn default() -> Self {
        Self::new()
    }
}

impl GaugeAction for QuadraticShear {
    fn name(&self) -> String {
        "qshear".into()
    }
    fn group(&self) -> &Arc<LieGroup> {
        &self.group
    }
    fn apply(&self, g: &GaugeElement, z: &GroupElement) -> GroupElement {
        let a = g.0[(0, 1)];
        let v = translation(z, 2);
        self.group.exp(&[v[0], v[1] + a * v[0] * v[0]])
    }
    fn identity(&self) -> GaugeElement {
        GaugeElement::shear(0.0)
    }
    fn inverse(&self, g: &GaugeElement) -> GaugeElement {
        GaugeElement::shear(-g.0[(0, 1)])
    }
    fn sample(&self, rng: &mut StreamRng) -> GaugeElement {
        GaugeElement::shear(rng.random_range(-1.0..1.0))
    }
    fn gamma_analytic(&self, _g: &GaugeElement) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(2, 2))
    }
    fn big_o_analytic(&self, g: &GaugeElement) -> Option<Tensor3> {
        let mut o = Tensor3::zeros(2);
        o.set(1, 0, 0, 2.0 * g.0[(0, 1)]);
        Some(o)
    }
}

/// Rotation of algebra coordinates (i, j) on a group whose exp/log are
/// linear (additive groups and products of them).
#[derive(Debug, Clone)]
pub struct PlaneRotation {
    group: Arc<LieGroup>,
    i: usize,
    j: usize,
}

impl PlaneRotation {
    pub fn new(group: Arc<LieGroup>, i: usize, j: usize) -> Result<Self> {
        if !group.is_linear() {
            return invalid(format!("plane rotation needs a linear group, got {}", group.name()));
        }
        if i == j || i >= group.dim() || j >= group.dim() {
            return invalid("plane rotation indices out of range");
        }
        Ok(PlaneRotation { group, i, j })
    }
}

impl GaugeAction for PlaneRotation {
    fn name(&self) -> String {
        format!("plane-rotation:{},{}", self.i, self.j)
    }
    fn group(&self) -> &Arc<LieGroup> {
        &self.group
    }
    fn apply(&self, g: &GaugeElement, z: &GroupElement) -> GroupElement {
        let mut v = self.group.log(z).expect("linear group log");
        let (a, b) = (v[self.i], v[self.j]);
        v[self.i] = g.0[(0, 0)] * a + g.0[(0, 1)] * b;
        v[self.j] = g.0[(1, 0)] * a + g.0[(1, 1)] * b;
        self.group.exp(v.as_slice())
    }
    fn identity(&self) -> GaugeElement {
        GaugeElement(DMatrix::identity(2, 2))
    }
    fn inverse(&self, g: &GaugeElement) -> GaugeElement {
        GaugeElement(g.0.transpose())
    }
    fn sample(&self, rng: &mut StreamRng) -> GaugeElement {
        GaugeElement::rotation2(rng.random_range(-PI..PI))
    }
    fn is_automorphism(&self) -> bool {
        true
    }
    fn gamma_analytic(&self, g: &GaugeElement) -> Option<DMatrix<f64>> {
        let n = self.group.dim();
        let mut m = DMatrix::identity(n, n);
        m[(self.i, self.i)] = g.0[(0, 0)];
        m[(self.i, self.j)] = g.0[(0, 1)];
        m[(self.j, self.i)] = g.0[(1, 0)];
        m[(self.j, self.j)] = g.0[(1, 1)];
        Some(m)
    }
    fn big_o_analytic(&self, _g: &GaugeElement) -> Option<Tensor3> {
        Some(Tensor3::zeros(self.group.dim()))
    }
    fn fixes_second_factor(&self) -> bool {
        match self.group.factors() {
            Some((a, _)) => self.i < a.dim() && self.j < a.dim(),
            None => false,
        }
    }
}

/// (Ξ¹_g, id) on N₁ × N₂.
#[derive(Debug, Clone)]
pub struct FirstFactorAction {
    inner: Arc<dyn GaugeAction>,
    group: Arc<LieGroup>,
}

impl FirstFactorAction {
    pub fn new(inner: Arc<dyn GaugeAction>, second: Arc<LieGroup>) -> Self {
        let group = LieGroup::product(inner.group().clone(), second);
        FirstFactorAction { inner, group }
    }
    pub fn inner(&self) -> &Arc<dyn GaugeAction> {
        &self.inner
    }
}

impl GaugeAction for FirstFactorAction {
    fn name(&self) -> String {
        format!("first-factor:{}", self.inner.name())
    }
    fn group(&self) -> &Arc<LieGroup> {
        &self.group
    }
    fn apply(&self, g: &GaugeElement, z: &GroupElement) -> GroupElement {
        let (x, y) = self.group.split(z);
        self.group.join(&self.inner.apply(g, &x), &y)
    }
    fn identity(&self) -> GaugeElement {
        self.inner.identity()
    }
    fn compose(&self, a: &GaugeElement, b: &GaugeElement) -> GaugeElement {
        self.inner.compose(a, b)
    }
    fn inverse(&self, g: &GaugeElement) -> GaugeElement {
        self.inner.inverse(g)
    }
    fn sample(&self, rng: &mut StreamRng) -> GaugeElement {
        self.inner.sample(rng)
    }
    fn is_automorphism(&self) -> bool {
        self.inner.is_automorphism()
    }
    fn gamma_analytic(&self, g: &GaugeElement) -> Option<DMatrix<f64>> {
        let inner = self.inner.gamma_analytic(g)?;
        let n = self.group.dim();
        let n1 = inner.nrows();
        let mut m = DMatrix::identity(n, n);
        m.view_mut((0, 0), (n1, n1)).copy_from(&inner);
        Some(m)
    }
    fn big_o_analytic(&self, g: &GaugeElement) -> Option<Tensor3> {
        let inner = self.inner.big_o_analytic(g)?;
        let mut o = Tensor3::zeros(self.group.dim());
        let n1 = inner.dim();
        for a in 0..n1 {
            for b in 0..n1 {
                for c in 0..n1 {
                    o.set(a, b, c, inner.get(a, b, c));
                }
            }
        }
        Some(o)
    }
    fn fixes_second_factor(&self) -> bool {
        true
    }
}

/// Ξ_B(z) = B z Bᵀ on SO(n), B ∈ O(n). An automorphism of a non-additive group.
#[derive(Debug, Clone)]
pub struct ConjugationAction {
    group: Arc<LieGroup>,
    n: usize,
}

impl ConjugationAction {
    pub fn new(n: usize) -> Self {
        ConjugationAction { group: LieGroup::so(n), n }
    }
}

impl GaugeAction for ConjugationAction {
    fn name(&self) -> String {
        format!("conjugation:{}", self.n)
    }
    fn group(&self) -> &Arc<LieGroup> {
        &self.group
    }
    // B z B⁻¹ rather than B z Bᵀ: equal on O(n), but when B is itself a
    // reconstructed node (orthogonal only up to rounding) the transpose form
    // feeds the defect back and it grows geometrically along the path.
    fn apply(&self, g: &GaugeElement, z: &GroupElement) -> GroupElement {
        let gi = g.0.clone().try_inverse().unwrap_or_else(|| g.0.transpose());
        GroupElement(&g.0 * &z.0 * gi)
    }
    fn identity(&self) -> GaugeElement {
        GaugeElement(DMatrix::identity(self.n, self.n))
    }
    fn sample(&self, rng: &mut StreamRng) -> GaugeElement {
        GaugeElement(haar_rotation(self.n, true, rng))
    }
    fn is_automorphism(&self) -> bool {
        true
    }
    fn gamma_analytic(&self, g: &GaugeElement) -> Option<DMatrix<f64>> {
        let n = self.group.dim();
        let mut m = DMatrix::zeros(n, n);
        for (a, xi) in self.group.basis().iter().enumerate() {
            let col = self.group.vee(&(&g.0 * xi * g.0.transpose()));
            m.set_column(a, &col);
        }
        Some(m)
    }
}

/// Trivial gauge group acting as the identity.
#[derive(Debug, Clone)]
pub struct IdentityAction {
    group: Arc<LieGroup>,
}

impl IdentityAction {
    pub fn new(group: Arc<LieGroup>) -> Self {
        IdentityAction { group }
    }
}

impl GaugeAction for IdentityAction {
    fn name(&self) -> String {
        "identity".into()
    }
    fn group(&self) -> &Arc<LieGroup> {
        &self.group
    }
    fn apply(&self, _g: &GaugeElement, z: &GroupElement) -> GroupElement {
        z.clone()
    }
    fn identity(&self) -> GaugeElement {
        GaugeElement::scalar(1.0)
    }
    fn sample(&self, _rng: &mut StreamRng) -> GaugeElement {
        GaugeElement::scalar(1.0)
    }
    fn is_automorphism(&self) -> bool {
        true
    }
    fn gamma_analytic(&self, _g: &GaugeElement) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(self.group.dim(), self.group.dim()))
    }
    fn big_o_analytic(&self, _g: &GaugeElement) -> Option<Tensor3> {
        Some(Tensor3::zeros(self.group.dim()))
    }
}

/// Parse "rotation:n", "orthogonal:n", "scaling", "qshear", "conjugation:n",
/// "identity" or "first-factor:<action>". The group is needed for actions
/// whose dimension is implied (scaling, first-factor).
pub fn parse_action(spec: &str, group: &Arc<LieGroup>) -> Result<Arc<dyn GaugeAction>> {
    let spec = spec.trim();
    if let Some(inner) = spec.strip_prefix("first-factor:") {
        let (a, b) = group
            .factors()
            .ok_or_else(|| Error::Invalid(format!("first-factor needs a product group, got {}", group.name())))?;
        let inner = parse_action(inner, a)?;
        return Ok(Arc::new(FirstFactorAction::new(inner, b.clone())));
    }
    let (head, arg) = match spec.split_once(':') {
        Some((h, a)) => (h, Some(a)),
        None => (spec, None),
    };
    let dim = |a: Option<&str>| -> Result<usize> {
        a.ok_or_else(|| Error::Invalid(format!("'{spec}' needs a dimension")))?
            .parse::<usize>()
            .map_err(|_| Error::Invalid(format!("bad dimension in '{spec}'")))
    };
    let need_additive = |n: usize| -> Result<()> {
        match group.kind() {
            GroupKind::Additive(m) if *m == n => Ok(()),
            _ => invalid(format!("action '{spec}' does not act on {}", group.name())),
        }
    };
    match head {
        "rotation" => {
            let n = dim(arg)?;
            need_additive(n)?;
            Ok(Arc::new(RotationAction::on(group.clone())))
        }
        "orthogonal" => {
            let n = dim(arg)?;
            need_additive(n)?;
            Ok(Arc::new(RotationAction { group: group.clone(), n, reflections: true }))
        }
        "scaling" => match group.kind() {
            GroupKind::Additive(_) => Ok(Arc::new(ScalingAction::on(group.clone()))),
            _ => invalid("scaling acts on additive groups only"),
        },
        "qshear" => {
            need_additive(2)?;
            Ok(Arc::new(QuadraticShear::on(group.clone())))
        }
        "conjugation" => {
            let n = dim(arg)?;
            match group.kind() {
                GroupKind::SpecialOrthogonal(m) if *m == n => Ok(Arc::new(ConjugationAction::new(n))),
                _ => invalid(format!("conjugation:{n} does not act on {}", group.name())),
            }
        }
        "identity" => Ok(Arc::new(IdentityAction::new(group.clone()))),
        _ => invalid(format!("unknown action '{spec}'")),
    }
}

// ---------------------------------------------------------------------------
// Predictable gauge processes

pub trait GaugeProcess: Send + Sync {
    /// `view.state` holds the transformed path's past; it is empty when the
    /// process is evaluated inside a composed SDE.
    fn eval(&self, view: &PastView<'_, GroupElement>) -> Result<GaugeElement>;
    fn describe(&self) -> String {
        "custom".into()
    }
}

#[derive(Debug, Clone)]
pub struct ConstantGauge(pub GaugeElement);

impl GaugeProcess for ConstantGauge {
    fn eval(&self, _view: &PastView<'_, GroupElement>) -> Result<GaugeElement> {
        Ok(self.0.clone())
    }
    fn describe(&self) -> String {
        "constant".into()
    }
}

/// Externally recorded values; entry n−1 is used for the step ending at node n.
#[derive(Debug, Clone)]
pub struct RecordedGauge(pub Vec<GaugeElement>);

impl GaugeProcess for RecordedGauge {
    fn eval(&self, view: &PastView<'_, GroupElement>) -> Result<GaugeElement> {
        self.0.get(view.step - 1).cloned().ok_or(Error::Unreconstructible(view.step))
    }
    fn describe(&self) -> String {
        "recorded".into()
    }
}

pub struct FnGauge<F>(pub F);

impl<F> GaugeProcess for FnGauge<F>
where
    F: Fn(&PastView<'_, GroupElement>) -> GaugeElement + Send + Sync,
{
    fn eval(&self, view: &PastView<'_, GroupElement>) -> Result<GaugeElement> {
        Ok((self.0)(view))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PastSource {
    Driver,
    Transformed,
}

/// Rotation in the (0,1) plane by `offset + scale · c`, where c is global
/// coordinate `coord` of the previous node of the chosen path.
#[derive(Debug, Clone)]
pub struct AngleOfPast {
    pub group: Arc<LieGroup>,
    pub source: PastSource,
    pub coord: usize,
    pub scale: f64,
    pub offset: f64,
    /// Size of the rotation matrix produced.
    pub dim: usize,
}

impl AngleOfPast {
    pub fn transformed(group: Arc<LieGroup>, coord: usize) -> Self {
        AngleOfPast { group, source: PastSource::Transformed, coord, scale: 1.0, offset: 0.0, dim: 2 }
    }
    pub fn driver(group: Arc<LieGroup>, coord: usize) -> Self {
        AngleOfPast { group, source: PastSource::Driver, coord, scale: 1.0, offset: 0.0, dim: 2 }
    }
}

impl GaugeProcess for AngleOfPast {
    fn eval(&self, view: &PastView<'_, GroupElement>) -> Result<GaugeElement> {
        let hist = match self.source {
            PastSource::Driver => view.driver,
            PastSource::Transformed => view.state,
        };
        let last = hist.last().ok_or(Error::Unreconstructible(view.step))?;
        let value = match self.group.coordinates(last).get(self.coord) {
            Some(v) => *v,
            None => return invalid("angle coordinate out of range"),
        };
        Ok(GaugeElement::plane_rotation(self.dim, self.offset + self.scale * value))
    }
    fn describe(&self) -> String {
        format!("angle-of-past({:?},{})", self.source, self.coord)
    }
}

// ---------------------------------------------------------------------------
// Transformations

#[derive(Debug, Clone)]
pub struct Transformed {
    pub path: CadlagPath,
    /// Gauge value used on each step.
    pub gauges: Vec<GaugeElement>,
    /// Node index at which a non-finite value stopped the transformation.
    pub stopped_at: Option<usize>,
}

fn same_group(a: &LieGroup, b: &LieGroup) -> Result<()> {
    if a.name() != b.name() {
        return Err(Error::Shape(format!("action on {} applied to path on {}", a.name(), b.name())));
    }
    Ok(())
}

fn finite(z: &GroupElement) -> bool {
    z.0.iter().all(|v| v.is_finite())
}

/// Z̃_{n} = Ξ_{G_n}(ΔZ_n)·Z̃_{n−1}, applied to the continuous increment and to
/// the jump separately so that jumps of Z̃ are exactly Ξ_G(ΔZ).
pub fn random_transform(action: &dyn GaugeAction, gauge: &dyn GaugeProcess, z: &CadlagPath) -> Result<Transformed> {
    let group = z.group().clone();
    same_group(action.group(), &group)?;
    let times = z.times();
    let m = z.increments().len();
    let mut nodes = Vec::with_capacity(m + 1);
    nodes.push(group.identity());
    let mut steps = Vec::with_capacity(m);
    let mut gauges = Vec::with_capacity(m);
    let mut stopped_at = None;
    for n in 1..=m {
        let view = PastView { step: n, times: &times[..n], driver: &z.nodes()[..n], state: &nodes[..n] };
        let g = gauge.eval(&view)?;
        let s = &z.increments()[n - 1];
        let cont = action.apply(&g, &s.cont);
        let jump = s.jump.as_ref().map(|j| action.apply(&g, j));
        let mut node = group.mul(&cont, &nodes[n - 1]);
        if let Some(j) = &jump {
            node = group.mul(j, &node);
        }
        if !finite(&node) || !g.is_finite() {
            stopped_at = Some(n);
            break;
        }
        nodes.push(node);
        steps.push(Step { cont, jump });
        gauges.push(g);
    }
    let last = steps.len();
    let path = CadlagPath::from_steps(group, times[..=last].to_vec(), steps, z.base_step())?;
    Ok(Transformed { path, gauges, stopped_at })
}

/// dZ = Ξ_{G⁻¹}(dZ̃). The gauge process sees the reconstructed original path
/// as `driver` and the transformed path as `state`, mirroring the forward pass.
pub fn invert_transform(action: &dyn GaugeAction, gauge: &dyn GaugeProcess, zt: &CadlagPath) -> Result<CadlagPath> {
    let group = zt.group().clone();
    same_group(action.group(), &group)?;
    let times = zt.times();
    let m = zt.increments().len();
    let mut nodes = Vec::with_capacity(m + 1);
    nodes.push(group.identity());
    let mut steps = Vec::with_capacity(m);
    for n in 1..=m {
        let view = PastView { step: n, times: &times[..n], driver: &nodes[..n], state: &zt.nodes()[..n] };
        let g = gauge.eval(&view)?;
        let gi = action.inverse(&g);
        let s = &zt.increments()[n - 1];
        let cont = action.apply(&gi, &s.cont);
        let jump = s.jump.as_ref().map(|j| action.apply(&gi, j));
        let mut node = group.mul(&cont, &nodes[n - 1]);
        if let Some(j) = &jump {
            node = group.mul(j, &node);
        }
        nodes.push(node);
        steps.push(Step { cont, jump });
    }
    CadlagPath::from_steps(group, times.to_vec(), steps, zt.base_step())
}

/// For automorphisms Ξ_g(exp v) = exp(Γ_g v): build the transformed path
/// from linearised increments instead of applying Ξ directly.
pub fn integral_form(action: &dyn GaugeAction, gauge: &dyn GaugeProcess, z: &CadlagPath) -> Result<CadlagPath> {
    if !action.is_automorphism() {
        return invalid(format!("{} is not an automorphism", action.name()));
    }
    let group = z.group().clone();
    same_group(action.group(), &group)?;
    let times = z.times();
    let m = z.increments().len();
    let mut nodes = Vec::with_capacity(m + 1);
    nodes.push(group.identity());
    let mut steps = Vec::with_capacity(m);
    let lin = |gamma: &DMatrix<f64>, e: &GroupElement| -> Result<GroupElement> {
        let v = group.log(e)?;
        Ok(group.exp((gamma * v).as_slice()))
    };
    for n in 1..=m {
        let view = PastView { step: n, times: &times[..n], driver: &z.nodes()[..n], state: &nodes[..n] };
        let g = gauge.eval(&view)?;
        let gamma = gamma(action, &g)?;
        let s = &z.increments()[n - 1];
        let cont = lin(&gamma, &s.cont)?;
        let jump = match &s.jump {
            Some(j) => Some(lin(&gamma, j)?),
            None => None,
        };
        let mut node = group.mul(&cont, &nodes[n - 1]);
        if let Some(j) = &jump {
            node = group.mul(j, &node);
        }
        nodes.push(node);
        steps.push(Step { cont, jump });
    }
    CadlagPath::from_steps(group, times.to_vec(), steps, z.base_step())
}

// ---------------------------------------------------------------------------
// Composition with geometrical SDEs

/// Ψ̂_{(k,g)}(x, z) = Ψ_k(x, Ξ_g(z)); the gauge value travels as the last
/// entry of `Param::gauges`.
pub struct ComposedSde {
    base: Arc<dyn GeometricSde>,
    action: Arc<dyn GaugeAction>,
}

pub fn compose_sde(base: Arc<dyn GeometricSde>, action: Arc<dyn GaugeAction>) -> Result<ComposedSde> {
    same_group(action.group(), base.group())?;
    Ok(ComposedSde { base, action })
}

impl GeometricSde for ComposedSde {
    fn group(&self) -> &Arc<LieGroup> {
        self.base.group()
    }
    fn state_dim(&self) -> usize {
        self.base.state_dim()
    }
    fn psi(&self, k: &Param, x: &[f64], z: &GroupElement) -> Vec<f64> {
        let (g, rest) = k.gauges.split_last().expect("composed SDE needs a gauge parameter");
        let inner = Param { values: k.values.clone(), gauges: rest.to_vec() };
        self.base.psi(&inner, x, &self.action.apply(g, z))
    }
    fn in_domain(&self, x: &[f64]) -> bool {
        self.base.in_domain(x)
    }
}

/// Control for a composed SDE: K from the base control, G appended.
pub struct PairedControl {
    pub control: Arc<dyn Control>,
    pub gauge: Arc<dyn GaugeProcess>,
}

impl Control for PairedControl {
    fn eval(&self, view: &PastView<'_, Vec<f64>>) -> Result<Param> {
        let mut k = self.control.eval(view)?;
        let gv = PastView { step: view.step, times: view.times, driver: view.driver, state: &[] };
        k.gauges.push(self.gauge.eval(&gv)?);
        Ok(k)
    }
}

// ---------------------------------------------------------------------------
// Γ_g and O_g

pub const GAMMA_STEP: f64 = 1e-5;
pub const BIG_O_STEP: f64 = 1e-4;

pub fn gamma(action: &dyn GaugeAction, g: &GaugeElement) -> Result<DMatrix<f64>> {
    match action.gamma_analytic(g) {
        Some(m) => Ok(m),
        None => gamma_fd(action, g),
    }
}

/// Columns Γ_g(ξ_α) from central differences of a ↦ Ξ_g(exp(aξ_α)) in the
/// ambient matrix space, mapped to frame coordinates with the pseudo-inverse
/// of the frame at the identity. Richardson-extrapolated once.
pub fn gamma_fd(action: &dyn GaugeAction, g: &GaugeElement) -> Result<DMatrix<f64>> {
    let group = action.group();
    let n = group.dim();
    let id = group.identity();
    let mut out = DMatrix::zeros(n, n);
    let central = |a: usize, eps: f64| -> DMatrix<f64> {
        let mut v = vec![0.0; n];
        v[a] = eps;
        let p = action.apply(g, &group.exp(&v)).0;
        v[a] = -eps;
        let m = action.apply(g, &group.exp(&v)).0;
        (p - m) / (2.0 * eps)
    };
    for a in 0..n {
        let d1 = central(a, GAMMA_STEP);
        let d2 = central(a, GAMMA_STEP / 2.0);
        let d = (d2 * 4.0 - d1) / 3.0;
        out.set_column(a, &group.tangent_coords(&id, &d)?);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct BigO {
    /// O^α_{βγ} = ∂_a∂_b log^α Ξ_g(exp(aξ_β)·exp(bξ_γ)) at 0.
    pub raw: Tensor3,
    /// Symmetrised in (β,γ); this is the part that enters contractions with A.
    pub sym: Tensor3,
}

pub fn big_o(action: &dyn GaugeAction, g: &GaugeElement) -> Result<BigO> {
    match action.big_o_analytic(g) {
        Some(raw) => Ok(BigO { sym: raw.symmetrized(), raw }),
        None => big_o_fd(action, g),
    }
}

pub fn big_o_fd(action: &dyn GaugeAction, g: &GaugeElement) -> Result<BigO> {
    let group = action.group();
    let n = group.dim();
    let f = |b: usize, c: usize, x: f64, y: f64| -> Result<DVector<f64>> {
        let mut u = vec![0.0; n];
        u[b] = x;
        let mut w = vec![0.0; n];
        w[c] = y;
        let z = group.mul(&group.exp(&u), &group.exp(&w));
        group.log(&action.apply(g, &z))
    };
    let mixed = |b: usize, c: usize, e: f64| -> Result<DVector<f64>> {
        let v = f(b, c, e, e)? - f(b, c, e, -e)? - f(b, c, -e, e)? + f(b, c, -e, -e)?;
        Ok(v / (4.0 * e * e))
    };
    let mut raw = Tensor3::zeros(n);
    for b in 0..n {
        for c in 0..n {
            let m1 = mixed(b, c, BIG_O_STEP)?;
            let m2 = mixed(b, c, BIG_O_STEP / 2.0)?;
            let m = (m2 * 4.0 - m1) / 3.0;
            for a in 0..n {
                raw.set(a, b, c, m[a]);
            }
        }
    }
    Ok(BigO { sym: raw.symmetrized(), raw })
}

// ---------------------------------------------------------------------------
// Discrete-time Λ and its explicit inverse on ℝᵈ

/// Z′_n = Σ_{i≤n} B_i(Z_0..Z_{i−1})(Z_i − Z_{i−1}).
pub fn lambda_discrete<F>(b: F, z: &[DVector<f64>]) -> Vec<DVector<f64>>
where
    F: Fn(&[DVector<f64>]) -> DMatrix<f64>,
{
    let mut out = vec![DVector::zeros(z[0].len())];
    for i in 1..z.len() {
        let bi = b(&z[..i]);
        let next = &out[i - 1] + bi * (&z[i] - &z[i - 1]);
        out.push(next);
    }
    out
}

/// Z_n = Z_{n−1} + B_n(Z_0..Z_{n−1})⁻¹(Z′_n − Z′_{n−1}), the history being the
/// already reconstructed Z.
pub fn lambda_discrete_inverse<F>(b: F, zp: &[DVector<f64>]) -> Result<Vec<DVector<f64>>>
where
    F: Fn(&[DVector<f64>]) -> DMatrix<f64>,
{
    let mut out = vec![DVector::zeros(zp[0].len())];
    for i in 1..zp.len() {
        let bi = b(&out[..i]).try_inverse().ok_or(Error::Singular("lambda inverse"))?;
        let next = &out[i - 1] + bi * (&zp[i] - &zp[i - 1]);
        out.push(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{role, stream};

    #[test]
    fn gamma_examples() {
        let rot = RotationAction::new(2);
        let b = GaugeElement::rotation2(0.7);
        let fd = gamma_fd(&rot, &b).unwrap();
        assert!((fd - &b.0).abs().max() < 1e-10);
        let sc = ScalingAction::new(2);
        let fd = gamma_fd(&sc, &GaugeElement::scalar(2.0)).unwrap();
        assert!((fd - DMatrix::<f64>::identity(2, 2) * 2.0).abs().max() < 1e-10);
        let qs = QuadraticShear::new();
        let fd = gamma_fd(&qs, &GaugeElement::shear(0.8)).unwrap();
        assert!((fd - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-9);
    }

    #[test]
    fn big_o_examples() {
        let rot = RotationAction::new(2);
        assert!(big_o_fd(&rot, &GaugeElement::rotation2(1.1)).unwrap().raw.max_abs() < 1e-10);
        let sc = ScalingAction::new(2);
        assert!(big_o_fd(&sc, &GaugeElement::scalar(3.0)).unwrap().raw.max_abs() < 1e-10);
        let qs = QuadraticShear::new();
        let g = 0.5;
        let o = big_o_fd(&qs, &GaugeElement::shear(g)).unwrap();
        assert!((o.raw.get(1, 0, 0) - 2.0 * g).abs() < 1e-4);
        for (a, b, c) in [(0, 0, 0), (0, 1, 1), (1, 1, 1), (1, 0, 1), (0, 0, 1)] {
            assert!(o.raw.get(a, b, c).abs() < 1e-4);
        }
    }

    #[test]
    fn conjugation_gamma_matches_fd() {
        let act = ConjugationAction::new(3);
        let mut rng = stream(5, 0, role::CONFIG);
        let g = act.sample(&mut rng);
        let a = act.gamma_analytic(&g).unwrap();
        let fd = gamma_fd(&act, &g).unwrap();
        assert!((a - fd).abs().max() < 1e-5);
        let o = big_o_fd(&act, &g).unwrap();
        assert!(o.sym.max_abs() < 1e-5);
    }

    #[test]
    fn parse_actions() {
        let g2 = LieGroup::additive(2);
        assert_eq!(parse_action("rotation:2", &g2).unwrap().name(), "rotation:2");
        assert_eq!(parse_action("scaling", &g2).unwrap().name(), "scaling");
        assert_eq!(parse_action("qshear", &g2).unwrap().name(), "qshear");
        assert!(parse_action("rotation:3", &g2).is_err());
        let p = LieGroup::parse("product:additive:2,additive:1").unwrap();
        let a = parse_action("first-factor:rotation:2", &p).unwrap();
        assert!(a.fixes_second_factor());
        assert_eq!(a.group().name(), p.name());
        assert!(parse_action("conjugation:2", &LieGroup::so(2)).is_ok());
        assert!(parse_action("warp", &g2).is_err());
    }

    #[test]
    fn discrete_lambda_three_steps_by_hand() {
        let z: Vec<DVector<f64>> = [[0.0, 0.0], [1.0, 0.0], [1.0, 2.0], [-1.0, 3.0]]
            .iter()
            .map(|v| DVector::from_row_slice(v))
            .collect();
        let b = |h: &[DVector<f64>]| GaugeElement::rotation2(h.last().unwrap()[0]).0;
        let zp = lambda_discrete(b, &z);
        // unrolled: B1 = R(0), B2 = R(1), B3 = R(1)
        let r = |t: f64| GaugeElement::rotation2(t).0;
        let d1 = r(0.0) * DVector::from_row_slice(&[1.0, 0.0]);
        let d2 = r(1.0) * DVector::from_row_slice(&[0.0, 2.0]);
        let d3 = r(1.0) * DVector::from_row_slice(&[-2.0, 1.0]);
        let want = [d1.clone(), &d1 + &d2, &d1 + &d2 + &d3];
        for i in 0..3 {
            assert!((&zp[i + 1] - &want[i]).abs().max() < 1e-15);
        }
        let back = lambda_discrete_inverse(b, &zp).unwrap();
        for (a, w) in back.iter().zip(&z) {
            assert!((a - w).abs().max() < 1e-12);
        }
    }
}
