//! Characteristic triplets (b, A, ν): transformation under a deterministic
//! gauge, Lévy and conditional invariance checks, and estimation from paths.

use crate::drivers::{matrix_rows, mean_se, JumpMeasure, LevyTriplet};
use crate::error::{Error, Result};
use crate::gauge::{big_o, gamma, GaugeAction, GaugeElement};
use crate::lie::{GroupElement, LieGroup};
use crate::par;
use crate::path::CadlagPath;
use crate::rng::{role, stream};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::sync::Arc;

/// Time-homogeneous triplet: b(t) = b₀t, A(t) = A₀t, ν(dt,dz) = ν₀(dz)dt.
#[derive(Clone, Debug)]
pub struct CharTriplet {
    pub group: Arc<LieGroup>,
    pub b0: DVector<f64>,
    /// Quadrature standard error carried by b₀ (zero for exact triplets).
    pub b0_se: DVector<f64>,
    pub a0: DMatrix<f64>,
    pub jumps: Option<JumpMeasure>,
    /// Names the truncation h that b₀ refers to.
    pub truncation: String,
}

impl CharTriplet {
    pub fn from_levy(t: &LevyTriplet) -> Self {
        CharTriplet {
            group: t.group.clone(),
            b0: t.b0.clone(),
            b0_se: DVector::zeros(t.b0.len()),
            a0: t.a0.clone(),
            jumps: t.jumps.clone(),
            truncation: t.group.truncation_fingerprint(),
        }
    }

    pub fn b(&self, t: f64) -> DVector<f64> {
        &self.b0 * t
    }
    pub fn a(&self, t: f64) -> DMatrix<f64> {
        &self.a0 * t
    }
    pub fn rate(&self) -> f64 {
        self.jumps.as_ref().map_or(0.0, |j| j.rate)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "group": self.group.name(),
            "b0": self.b0.as_slice(),
            "b0_se": self.b0_se.as_slice(),
            "a0": matrix_rows(&self.a0),
            "jumps": self.jumps.as_ref().map(|j| j.describe()),
            "truncation": self.truncation,
        })
    }
}

/// Monte Carlo settings for integrals against ν.
#[derive(Clone, Copy, Debug)]
pub struct QuadratureOptions {
    pub draws: usize,
    pub seed: u64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions { draws: 4096, seed: 0x0b5e_55ed }
    }
}

fn check_action(group: &LieGroup, action: &dyn GaugeAction) -> Result<()> {
    if action.group().name() != group.name() {
        return Err(Error::Shape(format!("{} does not act on {}", action.name(), group.name())));
    }
    Ok(())
}

/// ∫(h(Ξ_g z) − Γ_g h(z)) ν(dz) with its standard error; this is the
/// integral over ν̃ = Ξ_{g*}ν after the substitution z′ = Ξ_g z.
fn drift_correction(
    triplet: &CharTriplet,
    action: &dyn GaugeAction,
    g: &GaugeElement,
    gm: &DMatrix<f64>,
    opts: QuadratureOptions,
) -> (DVector<f64>, DVector<f64>) {
    let group = &triplet.group;
    let n = group.dim();
    match &triplet.jumps {
        Some(j) if j.rate > 0.0 => {
            let q = j.quadrature(group, opts.draws, opts.seed);
            q.integrate_vec(n, |z| group.truncation(&action.apply(g, z)) - gm * group.truncation(z))
        }
        _ => (DVector::zeros(n), DVector::zeros(n)),
    }
}

/// b̃ = Γb + ½O:A + ∫(h(Ξ_g z) − Γh(z))ν(dz), Ã = ΓAΓᵀ, ν̃ = Ξ_{g*}ν.
pub fn transform_triplet(
    triplet: &CharTriplet,
    action: &Arc<dyn GaugeAction>,
    g: &GaugeElement,
    opts: QuadratureOptions,
) -> Result<CharTriplet> {
    check_action(&triplet.group, action.as_ref())?;
    let gm = gamma(action.as_ref(), g)?;
    let o = big_o(action.as_ref(), g)?;
    let (corr, corr_se) = drift_correction(triplet, action.as_ref(), g, &gm, opts);
    let b0 = &gm * &triplet.b0 + o.sym.contract(&triplet.a0) * 0.5 + corr;
    let carried = gm.map(|v| v * v) * triplet.b0_se.map(|s| s * s);
    let b0_se = DVector::from_fn(b0.len(), |i, _| (carried[i] + corr_se[i] * corr_se[i]).sqrt());
    let a0 = &gm * &triplet.a0 * gm.transpose();
    let jumps = triplet.jumps.as_ref().map(|j| j.pushed(action.clone(), g.clone()));
    Ok(CharTriplet { group: triplet.group.clone(), b0, b0_se, a0, jumps, truncation: triplet.truncation.clone() })
}

// ---------------------------------------------------------------------------
// Test functions for the weak measure condition

pub type TestFn = Arc<dyn Fn(&GroupElement) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct TestFunction {
    pub name: String,
    pub f: TestFn,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TestFunction({})", self.name)
    }
}

/// The default dictionary: radial bumps at several scales, odd and even
/// coordinate bumps, the truncation components and two cubic bumps. All of
/// them vary slowly in angle. Functions are written on canonical coordinates
/// v = log z (zero where log is undefined).
pub fn default_test_functions(group: &Arc<LieGroup>) -> Vec<TestFunction> {
    let n = group.dim();
    let mut out = Vec::new();
    let coords = {
        let group = group.clone();
        move |z: &GroupElement| group.log(z).unwrap_or_else(|_| DVector::zeros(group.dim()))
    };
    type Scalar = Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
    let mk = |name: String, f: Scalar| {
        let c = coords.clone();
        TestFunction { name, f: Arc::new(move |z: &GroupElement| f(&c(z))) }
    };
    for (c, w) in [(0.02, 0.01), (0.1, 0.05), (0.5, 0.2), (2.0, 1.0)] {
        out.push(mk(
            format!("radial-bump(c={c},w={w})"),
            Box::new(move |v| (-(v.norm() - c).powi(2) / (2.0 * w * w)).exp()),
        ));
    }
    let bump = |v: &DVector<f64>, s: f64| (-v.norm_squared() / (2.0 * s * s)).exp();
    let second = if n > 1 { 1 } else { 0 };
    for s in [0.1, 1.0] {
        out.push(mk(format!("v1*bump({s})"), Box::new(move |v| v[0] * bump(v, s))));
        out.push(mk(format!("v{}*bump({s})", second + 1), Box::new(move |v| v[second] * bump(v, s))));
    }
    out.push(mk("v1^2*bump(1)".into(), Box::new(move |v| v[0] * v[0] * bump(v, 1.0))));
    out.push(mk(format!("v{}^2*bump(1)", second + 1), Box::new(move |v| v[second] * v[second] * bump(v, 1.0))));
    out.push(mk(format!("v1*v{}*bump(1)", second + 1), Box::new(move |v| v[0] * v[second] * bump(v, 1.0))));
    out.push(mk(
        format!("(v1^2-v{}^2)*bump(1)", second + 1),
        Box::new(move |v| (v[0] * v[0] - v[second] * v[second]) * bump(v, 1.0)),
    ));
    for a in [0, second] {
        let group = group.clone();
        out.push(TestFunction { name: format!("h{}", a + 1), f: Arc::new(move |z: &GroupElement| group.truncation(z)[a]) });
    }
    out.push(mk("v1^3*bump(1)".into(), Box::new(move |v| v[0].powi(3) * bump(v, 1.0))));
    out.push(mk(
        format!("v1*v{}^2*bump(1)", second + 1),
        Box::new(move |v| v[0] * v[second] * v[second] * bump(v, 1.0)),
    ));
    out
}

// ---------------------------------------------------------------------------
// Invariance reports

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Residual {
    pub value: f64,
    pub se: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Residual {
    fn new(value: f64, se: f64, tolerance: f64) -> Self {
        Residual { value, se, tolerance, pass: value <= tolerance }
    }
    fn zero() -> Self {
        Residual::new(0.0, 0.0, 0.0)
    }
    /// Order residuals by how close they come to failing.
    fn severity(&self) -> f64 {
        if self.tolerance > 0.0 {
            self.value / self.tolerance
        } else if self.value > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GaugeCheck {
    pub g: Vec<Vec<f64>>,
    pub drift: Residual,
    pub diffusion: Residual,
    pub measure: Vec<Residual>,
}

impl GaugeCheck {
    pub fn pass(&self) -> bool {
        self.drift.pass && self.diffusion.pass && self.measure.iter().all(|m| m.pass)
    }
    fn severity(&self) -> f64 {
        self.measure.iter().fold(self.drift.severity().max(self.diffusion.severity()), |m, r| m.max(r.severity()))
    }
}

/// Failing gauge checks kept per auxiliary path in conditional reports.
const MAX_FAILING_PER_PATH: usize = 16;

#[derive(Clone, Debug, Serialize)]
pub struct InvarianceReport {
    pub action: String,
    pub truncation: String,
    pub test_functions: Vec<String>,
    pub checks: Vec<GaugeCheck>,
    pub worst_drift: Residual,
    pub worst_diffusion: Residual,
    pub worst_measure: Residual,
    /// Only set by the conditional check.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixes_second_factor: Option<bool>,
    pub verdict: bool,
}

impl InvarianceReport {
    fn from_checks(action: String, truncation: String, test_functions: Vec<String>, checks: Vec<GaugeCheck>) -> Self {
        let worst = |sel: &dyn Fn(&GaugeCheck) -> Vec<Residual>| {
            checks
                .iter()
                .flat_map(sel)
                .max_by(|a, b| a.severity().total_cmp(&b.severity()).then(a.value.total_cmp(&b.value)))
                .unwrap_or_else(Residual::zero)
        };
        let worst_drift = worst(&|c| vec![c.drift.clone()]);
        let worst_diffusion = worst(&|c| vec![c.diffusion.clone()]);
        let worst_measure = worst(&|c| c.measure.clone());
        let verdict = checks.iter().all(|c| c.pass());
        InvarianceReport {
            action,
            truncation,
            test_functions,
            checks,
            worst_drift,
            worst_diffusion,
            worst_measure,
            fixes_second_factor: None,
            verdict,
        }
    }
}

/// Tolerance for exact-structure residuals.
pub const EXACT_TOL: f64 = 1e-8;
/// Monte Carlo residuals pass within this many standard errors.
pub const SE_FACTOR: f64 = 3.0;

#[derive(Clone, Debug)]
pub struct LevyCheckOptions {
    pub quadrature: QuadratureOptions,
    /// Random gauge draws added to the identity when no sample is given.
    pub g_draws: usize,
    pub seed: u64,
}

impl Default for LevyCheckOptions {
    fn default() -> Self {
        LevyCheckOptions { quadrature: QuadratureOptions::default(), g_draws: 32, seed: 0x9a09e }
    }
}

/// Identity followed by `draws` samples from the action's generating set.
pub fn default_g_sample(action: &dyn GaugeAction, draws: usize, seed: u64) -> Vec<GaugeElement> {
    let mut rng = stream(seed, 0, role::GAUGE_SAMPLE);
    let mut out = vec![action.identity()];
    out.extend((0..draws).map(|_| action.sample(&mut rng)));
    out
}

fn check_one(
    triplet: &CharTriplet,
    action: &Arc<dyn GaugeAction>,
    g: &GaugeElement,
    tests: &[TestFunction],
    opts: &LevyCheckOptions,
) -> Result<GaugeCheck> {
    let t = transform_triplet(triplet, action, g, opts.quadrature)?;
    let db = &triplet.b0 - &t.b0;
    let drift = Residual::new(db.norm(), t.b0_se.norm(), EXACT_TOL + SE_FACTOR * t.b0_se.norm());
    let diffusion = Residual::new((&triplet.a0 - &t.a0).norm(), 0.0, EXACT_TOL);
    let mut measure = Vec::with_capacity(tests.len());
    if let Some(j) = triplet.jumps.as_ref().filter(|j| j.rate > 0.0) {
        let q = j.quadrature(&triplet.group, opts.quadrature.draws, opts.quadrature.seed);
        for tf in tests {
            let est = q.integrate(|z| (tf.f)(&action.apply(g, z)) - (tf.f)(z));
            // paired differences can cancel to rounding level; keep a floor
            let floor = 1e-12 * j.rate;
            measure.push(Residual::new(est.value.abs(), est.se, SE_FACTOR * est.se + floor));
        }
    } else {
        measure.extend(tests.iter().map(|_| Residual::zero()));
    }
    Ok(GaugeCheck { g: matrix_rows(&g.0), drift, diffusion, measure })
}

/// Drift, diffusion and jump-measure conditions for a Lévy triplet and every
/// g in `g_sample` (identity plus random draws when `None`).
pub fn check_levy_invariance(
    triplet: &CharTriplet,
    action: &Arc<dyn GaugeAction>,
    g_sample: Option<&[GaugeElement]>,
    tests: Option<&[TestFunction]>,
    opts: &LevyCheckOptions,
) -> Result<InvarianceReport> {
    check_action(&triplet.group, action.as_ref())?;
    let owned_g;
    let gs = match g_sample {
        Some(g) => g,
        None => {
            owned_g = default_g_sample(action.as_ref(), opts.g_draws, opts.seed);
            &owned_g
        }
    };
    let owned_t;
    let tests = match tests {
        Some(t) => t,
        None => {
            owned_t = default_test_functions(&triplet.group);
            &owned_t
        }
    };
    let checks = gs.iter().map(|g| check_one(triplet, action, g, tests, opts)).collect::<Result<Vec<_>>>()?;
    Ok(InvarianceReport::from_checks(
        action.name(),
        triplet.truncation.clone(),
        tests.iter().map(|t| t.name.clone()).collect(),
        checks,
    ))
}

/// Instantaneous triplet at step n given the auxiliary path's strict past.
pub type TripletFamily<'a> = dyn Fn(&CadlagPath, usize) -> Result<CharTriplet> + Sync + 'a;

#[derive(Clone, Debug)]
pub struct ConditionalOptions {
    pub levy: LevyCheckOptions,
    /// Check every `stride`-th step of each auxiliary path.
    pub stride: usize,
}

impl Default for ConditionalOptions {
    fn default() -> Self {
        ConditionalOptions { levy: LevyCheckOptions::default(), stride: 1 }
    }
}

/// Run the Lévy check on the conditional triplet of every sampled auxiliary
/// path and step, keeping the worst residuals. Actions that do not fix the
/// second factor are evaluated all the same and flagged in the report.
pub fn check_conditional_invariance(
    family: &TripletFamily<'_>,
    action: &Arc<dyn GaugeAction>,
    g_sample: Option<&[GaugeElement]>,
    aux_paths: &[CadlagPath],
    opts: &ConditionalOptions,
) -> Result<InvarianceReport> {
    if action.group().factors().is_none() {
        return Err(Error::Invalid(format!("conditional check needs a product group, got {}", action.group().name())));
    }
    let gs = match g_sample {
        Some(g) => g.to_vec(),
        None => default_g_sample(action.as_ref(), opts.levy.g_draws, opts.levy.seed),
    };
    let stride = opts.stride.max(1);
    let per_path = par::map_indexed(aux_paths.len(), |p| -> Result<Vec<GaugeCheck>> {
        let aux = &aux_paths[p];
        let mut failing: Vec<GaugeCheck> = Vec::new();
        let mut worst: Option<GaugeCheck> = None;
        for n in (1..aux.len()).step_by(stride) {
            let t = family(aux, n)?;
            let r = check_levy_invariance(&t, action, Some(&gs), None, &opts.levy)?;
            for c in r.checks {
                if !c.pass() {
                    if failing.len() < MAX_FAILING_PER_PATH {
                        failing.push(c);
                    }
                } else if worst.as_ref().is_none_or(|w| c.severity() > w.severity()) {
                    worst = Some(c);
                }
            }
        }
        failing.extend(worst);
        Ok(failing)
    });
    let mut checks = Vec::new();
    for r in per_path {
        checks.extend(r?);
    }
    let tests = aux_paths
        .first()
        .map(|a| family(a, 1))
        .transpose()?
        .map(|t| default_test_functions(&t.group).into_iter().map(|t| t.name).collect())
        .unwrap_or_default();
    let mut report = InvarianceReport::from_checks(action.name(), action.group().truncation_fingerprint(), tests, checks);
    report.fixes_second_factor = Some(action.fixes_second_factor());
    Ok(report)
}

// ---------------------------------------------------------------------------
// Estimation

/// Radius bin edges of the jump histogram (‖log Δ‖).
pub const HISTOGRAM_EDGES: [f64; 8] = [0.0, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0, f64::INFINITY];

#[derive(Clone, Debug, Serialize)]
pub struct EmpiricalTriplet {
    pub group: String,
    pub truncation: String,
    pub horizon: f64,
    pub paths: usize,
    pub b0: Vec<f64>,
    pub b0_se: Vec<f64>,
    pub a0: Vec<Vec<f64>>,
    pub a0_se: Vec<Vec<f64>>,
    pub rate: f64,
    pub rate_se: f64,
    /// Jump rate per unit time in each radius bin of HISTOGRAM_EDGES.
    pub histogram: Vec<f64>,
    /// True when jumps were separated by thresholding (paths without records).
    pub thresholded: bool,
}

pub const MIN_PATHS: usize = 100;

struct PathStats {
    b: DVector<f64>,
    a: DMatrix<f64>,
    count: f64,
    bins: Vec<f64>,
    thresholded: bool,
}

fn bin_of(r: f64) -> usize {
    HISTOGRAM_EDGES.windows(2).position(|w| r >= w[0] && r < w[1]).unwrap_or(HISTOGRAM_EDGES.len() - 2)
}

/// Bipower estimate of the per-coordinate diffusion scale, largest over coordinates.
fn bipower_sigma(deltas: &[DVector<f64>], dt: f64) -> f64 {
    if deltas.len() < 2 {
        return 0.0;
    }
    let n = deltas[0].len();
    let mut best: f64 = 0.0;
    for a in 0..n {
        let s: f64 = deltas.windows(2).map(|w| w[0][a].abs() * w[1][a].abs()).sum();
        let var = std::f64::consts::FRAC_PI_2 * s / ((deltas.len() - 1) as f64 * dt);
        best = best.max(var.sqrt());
    }
    best
}

fn path_stats(path: &CadlagPath) -> Result<PathStats> {
    let g = path.group();
    let n = g.dim();
    let t = path.horizon();
    let mut b = DVector::zeros(n);
    let mut a = DMatrix::zeros(n, n);
    let mut count = 0.0;
    let mut bins = vec![0.0; HISTOGRAM_EDGES.len() - 1];
    let mut add_jump = |v: &DVector<f64>, z: &GroupElement, b: &mut DVector<f64>| {
        *b += g.truncation(z);
        count += 1.0;
        bins[bin_of(v.norm())] += 1.0;
    };
    if path.jumps_known() {
        for s in path.increments() {
            let d = g.log(&s.cont)?;
            b += &d;
            a += &d * d.transpose();
            if let Some(j) = &s.jump {
                let v = g.log(j).unwrap_or_else(|_| DVector::from_element(n, f64::INFINITY));
                add_jump(&v, j, &mut b);
            }
        }
        return Ok(PathStats { b: b / t, a: a / t, count: count / t, bins: bins.iter().map(|c| c / t).collect(), thresholded: false });
    }
    let deltas = path.increments().iter().map(|s| g.log(&s.cont)).collect::<Result<Vec<_>>>()?;
    let dt = path.base_step();
    let threshold = 4.0 * bipower_sigma(&deltas, dt) * dt.sqrt();
    for (s, d) in path.increments().iter().zip(&deltas) {
        if threshold > 0.0 && d.norm() > threshold {
            add_jump(d, &s.cont, &mut b);
        } else {
            b += d;
            a += d * d.transpose();
        }
    }
    Ok(PathStats { b: b / t, a: a / t, count: count / t, bins: bins.iter().map(|c| c / t).collect(), thresholded: true })
}

/// b from h-truncated increments plus jump h-terms, A from realized
/// covariation of continuous increments, ν from jump counts; standard errors
/// across paths. All paths must share group and horizon.
pub fn estimate_characteristics(paths: &[CadlagPath]) -> Result<EmpiricalTriplet> {
    estimate_characteristics_with(paths.len(), |i| Ok(std::borrow::Cow::Borrowed(&paths[i])))
}

/// Same estimate with paths produced on demand, so large samples never have
/// to be held in memory at once.
pub fn estimate_characteristics_with<'a, F>(count: usize, source: F) -> Result<EmpiricalTriplet>
where
    F: Fn(usize) -> Result<std::borrow::Cow<'a, CadlagPath>> + Sync,
{
    if count < MIN_PATHS {
        return Err(Error::TooFewPaths { got: count, need: MIN_PATHS });
    }
    let per_path = par::map_indexed(count, |i| -> Result<(Arc<LieGroup>, f64, PathStats)> {
        let p = source(i)?;
        Ok((p.group().clone(), p.horizon(), path_stats(&p)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let group = per_path[0].0.clone();
    let horizon = per_path[0].1;
    if per_path.iter().any(|(g, t, _)| g.name() != group.name() || (t - horizon).abs() > 1e-9 * horizon) {
        return Err(Error::Invalid("paths must share group and horizon".into()));
    }
    let stats: Vec<PathStats> = per_path.into_iter().map(|p| p.2).collect();
    let n = group.dim();
    let col = |f: &dyn Fn(&PathStats) -> f64| -> (f64, f64) { mean_se(&stats.iter().map(f).collect::<Vec<_>>()) };
    let mut b0 = vec![0.0; n];
    let mut b0_se = vec![0.0; n];
    let mut a0 = vec![vec![0.0; n]; n];
    let mut a0_se = vec![vec![0.0; n]; n];
    for i in 0..n {
        (b0[i], b0_se[i]) = col(&|s| s.b[i]);
        for j in 0..n {
            (a0[i][j], a0_se[i][j]) = col(&|s| s.a[(i, j)]);
        }
    }
    let (rate, rate_se) = col(&|s| s.count);
    let histogram = (0..HISTOGRAM_EDGES.len() - 1).map(|k| col(&|s| s.bins[k]).0).collect();
    Ok(EmpiricalTriplet {
        group: group.name().to_string(),
        truncation: group.truncation_fingerprint(),
        horizon,
        paths: count,
        b0,
        b0_se,
        a0,
        a0_se,
        rate,
        rate_se,
        histogram,
        thresholded: stats.iter().any(|s| s.thresholded),
    })
}

/// One entry of a model-vs-estimate comparison.
#[derive(Clone, Debug, Serialize)]
pub struct EntryComparison {
    pub entry: String,
    pub model: f64,
    pub model_se: f64,
    pub estimate: f64,
    pub estimate_se: f64,
    pub z: f64,
    pub pass: bool,
}

/// Compare b₀, the upper triangle of A₀ and the jump rate entrywise; an entry
/// passes when |Δ| ≤ k·√(se_model² + se_est²) (or 1e-8 when both are exact).
pub fn compare_triplets(model: &CharTriplet, est: &EmpiricalTriplet, k: f64) -> Result<Vec<EntryComparison>> {
    if model.truncation != est.truncation {
        return Err(Error::Invalid(format!("truncations differ: {} vs {}", model.truncation, est.truncation)));
    }
    let n = model.group.dim();
    let mut out = Vec::new();
    let mut push = |entry: String, m: f64, ms: f64, e: f64, es: f64| {
        let se = (ms * ms + es * es).sqrt();
        let d = (m - e).abs();
        let z = if se > 0.0 { d / se } else if d <= EXACT_TOL { 0.0 } else { f64::INFINITY };
        out.push(EntryComparison { entry, model: m, model_se: ms, estimate: e, estimate_se: es, z, pass: z <= k });
    };
    for i in 0..n {
        push(format!("b[{i}]"), model.b0[i], model.b0_se[i], est.b0[i], est.b0_se[i]);
    }
    for i in 0..n {
        for j in i..n {
            push(format!("A[{i}][{j}]"), model.a0[(i, j)], 0.0, est.a0[i][j], est.a0_se[i][j]);
        }
    }
    push("rate".into(), model.rate(), 0.0, est.rate, est.rate_se);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::JumpLaw;
    use crate::gauge::{QuadraticShear, RotationAction, ScalingAction};

    fn rot() -> Arc<dyn GaugeAction> {
        Arc::new(RotationAction::new(2))
    }

    #[test]
    fn brownian_triplet_transforms() {
        let t = CharTriplet::from_levy(&LevyTriplet::brownian(2));
        let r = transform_triplet(&t, &rot(), &GaugeElement::rotation2(0.4), QuadratureOptions::default()).unwrap();
        assert!((r.a0 - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-15);
        let sc: Arc<dyn GaugeAction> = Arc::new(ScalingAction::new(2));
        let r = transform_triplet(&t, &sc, &GaugeElement::scalar(2.0), QuadratureOptions::default()).unwrap();
        assert!((r.a0 - DMatrix::<f64>::identity(2, 2) * 4.0).abs().max() < 1e-15);
        assert_eq!(r.b0, DVector::zeros(2));
    }

    #[test]
    fn identity_transform_is_exact() {
        let g = LieGroup::additive(2);
        let jm = JumpMeasure::new(2.0, JumpLaw::IsotropicGaussian { sigma: 0.5 });
        let lt = LevyTriplet::new(g, DVector::from_vec(vec![0.3, -0.2]), DMatrix::identity(2, 2), Some(jm)).unwrap();
        let t = CharTriplet::from_levy(&lt);
        let q: Arc<dyn GaugeAction> = Arc::new(QuadraticShear::new());
        let r = transform_triplet(&t, &q, &GaugeElement::shear(0.0), QuadratureOptions::default()).unwrap();
        assert_eq!(r.b0, t.b0);
        assert_eq!(r.a0, t.a0);
    }

    #[test]
    fn disjoint_supports_give_zero_correction() {
        let g = LieGroup::additive(2);
        let jm = JumpMeasure::new(3.0, JumpLaw::RadialUniform { r_min: 2.0, r_max: 3.0 });
        let lt = LevyTriplet::new(g, DVector::zeros(2), DMatrix::zeros(2, 2), Some(jm)).unwrap();
        let t = CharTriplet::from_levy(&lt);
        let r = transform_triplet(&t, &rot(), &GaugeElement::rotation2(1.0), QuadratureOptions::default()).unwrap();
        assert_eq!(r.b0, DVector::zeros(2));
        assert_eq!(r.b0_se, DVector::zeros(2));
    }

    #[test]
    fn anisotropic_diffusion_residual_is_one() {
        let lt = LevyTriplet::new(LieGroup::additive(2), DVector::zeros(2), DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])), None)
            .unwrap();
        let t = CharTriplet::from_levy(&lt);
        let g = [GaugeElement::rotation2(std::f64::consts::FRAC_PI_4)];
        let r = check_levy_invariance(&t, &rot(), Some(&g), None, &LevyCheckOptions::default()).unwrap();
        assert!((r.worst_diffusion.value - 1.0).abs() < 1e-10);
        assert!(!r.verdict);
    }

    #[test]
    fn dictionary_has_sixteen_entries() {
        assert_eq!(default_test_functions(&LieGroup::additive(2)).len(), 16);
    }

    #[test]
    fn too_few_paths() {
        assert!(matches!(estimate_characteristics(&[]), Err(Error::TooFewPaths { .. })));
    }
}
