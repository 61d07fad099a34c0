//! Driving semimartingales: Brownian, compound Poisson, Lévy triplets,
//! discrete-time chains and the modulated Brownian composite on ℝ²×ℝ.

use crate::error::{invalid, Error, Result};
use crate::gauge::{GaugeAction, GaugeElement};
use crate::lie::{GroupElement, LieGroup};
use crate::path::{CadlagPath, Step};
use crate::rng::{role, stream, StreamRng};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// Law of a single jump, in algebra coordinates (the jump is exp(v)).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum JumpLaw {
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    IsotropicGaussian { sigma: f64 },
    /// Atoms with probabilities summing to one.
    PointMasses { atoms: Vec<(Vec<f64>, f64)> },
    /// Uniform direction, radius uniform on [r_min, r_max].
    RadialUniform { r_min: f64, r_max: f64 },
    /// Uniform direction, Pareto radius r = ε·U^{−1/α}: the normalised
    /// restriction of an isotropic α-stable Lévy measure to |z| ≥ ε.
    Stable { alpha: f64, epsilon: f64 },
}

impl JumpLaw {
    fn validate(&self, n: usize) -> Result<()> {
        match self {
            JumpLaw::Gaussian { mean, cov } => {
                if mean.len() != n || cov.len() != n || cov.iter().any(|r| r.len() != n) {
                    return Err(Error::Shape(format!("gaussian jump law must be {n}-dimensional")));
                }
                psd_sqrt(&rows_to_matrix(cov))?;
            }
            JumpLaw::IsotropicGaussian { sigma } => {
                if !(*sigma > 0.0) {
                    return invalid("sigma must be positive");
                }
            }
            JumpLaw::PointMasses { atoms } => {
                if atoms.is_empty() || atoms.iter().any(|(v, p)| v.len() != n || !(*p >= 0.0)) {
                    return invalid("point masses need n-dimensional atoms with nonnegative weights");
                }
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return invalid(format!("point mass probabilities sum to {total}"));
                }
            }
            JumpLaw::RadialUniform { r_min, r_max } => {
                if !(*r_min >= 0.0 && r_max > r_min) {
                    return invalid("need 0 <= r_min < r_max");
                }
            }
            JumpLaw::Stable { alpha, epsilon } => {
                if !(*alpha > 0.0 && *alpha < 2.0) {
                    return invalid("stable index must lie in (0, 2)");
                }
                if !(*epsilon > 0.0) {
                    return invalid("stable cutoff must be positive");
                }
            }
        }
        Ok(())
    }

    /// True when the law is invariant under v ↦ −v, so ∫h dν vanishes for
    /// odd (rotation-equivariant) truncations.
    pub fn is_symmetric(&self) -> bool {
        match self {
            JumpLaw::Gaussian { mean, .. } => mean.iter().all(|m| *m == 0.0),
            JumpLaw::PointMasses { .. } => false,
            _ => true,
        }
    }

    pub fn is_radial(&self) -> bool {
        matches!(self, JumpLaw::IsotropicGaussian { .. } | JumpLaw::RadialUniform { .. } | JumpLaw::Stable { .. })
    }

    /// Radius of a radial law (ignored for the others).
    fn sample_radius(&self, n: usize, rng: &mut StreamRng) -> f64 {
        match self {
            JumpLaw::IsotropicGaussian { sigma } => {
                let s: f64 = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal).powi(2)).sum();
                sigma * s.sqrt()
            }
            JumpLaw::RadialUniform { r_min, r_max } => rng.random_range(*r_min..*r_max),
            JumpLaw::Stable { alpha, epsilon } => {
                let u: f64 = 1.0 - rng.random::<f64>();
                epsilon * u.powf(-1.0 / alpha)
            }
            _ => unreachable!("not a radial law"),
        }
    }

    pub fn sample(&self, n: usize, rng: &mut StreamRng) -> DVector<f64> {
        match self {
            JumpLaw::Gaussian { mean, cov } => {
                let c = psd_sqrt(&rows_to_matrix(cov)).expect("validated");
                let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                DVector::from_column_slice(mean) + c * z
            }
            JumpLaw::PointMasses { atoms } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in atoms {
                    acc += p;
                    if u < acc {
                        return DVector::from_column_slice(v);
                    }
                }
                DVector::from_column_slice(&atoms.last().unwrap().0)
            }
            _ => {
                let r = self.sample_radius(n, rng);
                unit_direction(n, rng) * r
            }
        }
    }
}

fn unit_direction(n: usize, rng: &mut StreamRng) -> DVector<f64> {
    if n == 1 {
        return DVector::from_element(1, if rng.random::<bool>() { 1.0 } else { -1.0 });
    }
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let r = v.norm();
        if r > 1e-12 {
            return v / r;
        }
    }
}

pub fn rows_to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

/// Surface area of the unit sphere in ℝⁿ.
pub fn sphere_area(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / (n as f64 - 2.0) * sphere_area(n - 2),
    }
}

/// Symmetric square root via eigendecomposition; eigenvalues in [−1e-12, 0)
/// are clamped to zero, anything more negative is rejected.
pub fn psd_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::Shape("covariance must be square".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return invalid("covariance has non-finite entries");
    }
    let scale = a.abs().max().max(1.0);
    if (a - a.transpose()).abs().max() > 1e-12 * scale {
        return invalid("covariance must be symmetric");
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.min();
    if min < -1e-12 {
        return Err(Error::NotPsd(min));
    }
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose())
}

/// A finite jump measure ν = rate · (law pushed through the listed actions).
#[derive(Clone)]
pub struct JumpMeasure {
    pub rate: f64,
    pub law: JumpLaw,
    /// Applied in order to every sampled jump: Ξ_{g_k} ∘ … ∘ Ξ_{g_1}.
    pub pushforwards: Vec<(Arc<dyn GaugeAction>, GaugeElement)>,
    /// (α, scale, ε) when this measure truncates an isotropic stable one.
    pub stable_origin: Option<(f64, f64, f64)>,
}

impl fmt::Debug for JumpMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.pushforwards.iter().map(|(a, _)| a.name()).collect();
        f.debug_struct("JumpMeasure")
            .field("rate", &self.rate)
            .field("law", &self.law)
            .field("pushforwards", &names)
            .finish()
    }
}

/// Quadrature for ν: groups of weighted nodes whose group sums are i.i.d.
/// unbiased estimates of ∫f dν / rate.
#[derive(Clone, Debug)]
pub struct Quadrature {
    pub rate: f64,
    pub groups: Vec<Vec<(GroupElement, f64)>>,
    /// Exact rule (point masses): no Monte Carlo error.
    pub exact: bool,
}

/// Estimate with standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Quadrature {
    /// ∫f dν and its standard error.
    pub fn integrate<F: Fn(&GroupElement) -> f64>(&self, f: F) -> Estimate {
        let means: Vec<f64> = self.groups.iter().map(|g| g.iter().map(|(z, w)| w * f(z)).sum()).collect();
        let (m, se) = mean_se(&means);
        Estimate { value: self.rate * m, se: if self.exact { 0.0 } else { self.rate * se } }
    }

    /// Vector-valued version; the standard error is per component.
    pub fn integrate_vec<F: Fn(&GroupElement) -> DVector<f64>>(&self, dim: usize, f: F) -> (DVector<f64>, DVector<f64>) {
        let means: Vec<DVector<f64>> = self
            .groups
            .iter()
            .map(|g| g.iter().fold(DVector::zeros(dim), |acc, (z, w)| acc + f(z) * *w))
            .collect();
        let mut value = DVector::zeros(dim);
        let mut se = DVector::zeros(dim);
        for i in 0..dim {
            let col: Vec<f64> = means.iter().map(|v| v[i]).collect();
            let (m, s) = mean_se(&col);
            value[i] = self.rate * m;
            se[i] = if self.exact { 0.0 } else { self.rate * s };
        }
        (value, se)
    }
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Angular copies per radial draw in the stratified rule for planar laws.
pub const ANGULAR_STRATA: usize = 16;
/// Radial draws used for the compensator of asymmetric laws.
const COMPENSATOR_DRAWS: usize = 1 << 16;
const COMPENSATOR_SEED: u64 = 0x5eed_c0de;

impl JumpMeasure {
    pub fn new(rate: f64, law: JumpLaw) -> Self {
        JumpMeasure { rate, law, pushforwards: Vec::new(), stable_origin: None }
    }

    /// Isotropic stable Lévy measure c·|z|^{−n−α}dz restricted to |z| ≥ ε.
    pub fn truncated_stable(n: usize, alpha: f64, scale: f64, epsilon: f64) -> Result<Self> {
        let law = JumpLaw::Stable { alpha, epsilon };
        law.validate(n)?;
        if !(scale > 0.0) {
            return invalid("stable scale must be positive");
        }
        let rate = scale * sphere_area(n) * epsilon.powf(-alpha) / alpha;
        Ok(JumpMeasure { rate, law, pushforwards: Vec::new(), stable_origin: Some((alpha, scale, epsilon)) })
    }

    pub fn pushed(&self, action: Arc<dyn GaugeAction>, g: GaugeElement) -> Self {
        let mut out = self.clone();
        out.pushforwards.push((action, g));
        out
    }

    pub fn validate(&self, group: &LieGroup) -> Result<()> {
        if !(self.rate >= 0.0) || !self.rate.is_finite() {
            return invalid("jump rate must be finite and nonnegative");
        }
        self.law.validate(group.dim())?;
        for (a, _) in &self.pushforwards {
            if a.group().name() != group.name() {
                return invalid(format!("pushforward by {} does not act on {}", a.name(), group.name()));
            }
        }
        Ok(())
    }

    fn push(&self, z: GroupElement) -> GroupElement {
        self.pushforwards.iter().fold(z, |z, (a, g)| a.apply(g, &z))
    }

    pub fn sample(&self, group: &LieGroup, rng: &mut StreamRng) -> GroupElement {
        let v = self.law.sample(group.dim(), rng);
        self.push(group.exp(v.as_slice()))
    }

    /// Quadrature with `draws` groups. Planar radial laws use
    /// ANGULAR_STRATA equally spaced angles per radial draw (random offset);
    /// other radial laws use antithetic pairs; point masses are exact.
    pub fn quadrature(&self, group: &LieGroup, draws: usize, seed: u64) -> Quadrature {
        let n = group.dim();
        let mut rng = stream(seed, 0, role::QUADRATURE);
        let groups: Vec<Vec<(GroupElement, f64)>> = match &self.law {
            JumpLaw::PointMasses { atoms } => {
                let g = atoms.iter().map(|(v, p)| (self.push(group.exp(v)), *p)).collect();
                return Quadrature { rate: self.rate, groups: vec![g], exact: true };
            }
            law if law.is_radial() && n == 2 => (0..draws)
                .map(|_| {
                    let r = law.sample_radius(2, &mut rng);
                    let off = rng.random::<f64>() * 2.0 * PI / ANGULAR_STRATA as f64;
                    (0..ANGULAR_STRATA)
                        .map(|k| {
                            let t = off + 2.0 * PI * k as f64 / ANGULAR_STRATA as f64;
                            let z = group.exp(&[r * t.cos(), r * t.sin()]);
                            (self.push(z), 1.0 / ANGULAR_STRATA as f64)
                        })
                        .collect()
                })
                .collect(),
            law if law.is_symmetric() => (0..draws)
                .map(|_| {
                    let v = law.sample(n, &mut rng);
                    let m = -&v;
                    vec![(self.push(group.exp(v.as_slice())), 0.5), (self.push(group.exp(m.as_slice())), 0.5)]
                })
                .collect(),
            law => (0..draws).map(|_| vec![(self.push(group.exp(law.sample(n, &mut rng).as_slice())), 1.0)]).collect(),
        };
        Quadrature { rate: self.rate, groups, exact: false }
    }

    /// m_h = ∫h dν: zero by symmetry when no pushforward is present and the
    /// law is symmetric, exact for point masses, else a fixed-seed quadrature.
    pub fn compensator(&self, group: &LieGroup) -> DVector<f64> {
        let n = group.dim();
        if self.rate == 0.0 || (self.pushforwards.is_empty() && self.law.is_symmetric()) {
            return DVector::zeros(n);
        }
        let draws = match self.law {
            JumpLaw::PointMasses { .. } => 1,
            _ if self.law.is_radial() && n == 2 => COMPENSATOR_DRAWS / ANGULAR_STRATA,
            _ => COMPENSATOR_DRAWS,
        };
        self.quadrature(group, draws, COMPENSATOR_SEED).integrate_vec(n, |z| group.truncation(z)).0
    }

    pub fn describe(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "rate": self.rate,
            "law": self.law,
            "pushforwards": self.pushforwards.iter().map(|(a, g)| serde_json::json!({
                "action": a.name(),
                "g": matrix_rows(&g.0),
            })).collect::<Vec<_>>(),
        });
        if let Some((alpha, scale, eps)) = self.stable_origin {
            v["truncated_stable"] = serde_json::json!({ "alpha": alpha, "scale": scale, "epsilon": eps });
        }
        v
    }
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// (b₀, A₀, ν₀) of a Lévy process on `group`, b₀ taken relative to the
/// group's truncation function.
#[derive(Clone, Debug)]
pub struct LevyTriplet {
    pub group: Arc<LieGroup>,
    pub b0: DVector<f64>,
    pub a0: DMatrix<f64>,
    pub jumps: Option<JumpMeasure>,
}

impl LevyTriplet {
    pub fn new(group: Arc<LieGroup>, b0: DVector<f64>, a0: DMatrix<f64>, jumps: Option<JumpMeasure>) -> Result<Self> {
        let t = LevyTriplet { group, b0, a0, jumps };
        t.validate()?;
        Ok(t)
    }

    pub fn brownian(n: usize) -> Self {
        LevyTriplet { group: LieGroup::additive(n), b0: DVector::zeros(n), a0: DMatrix::identity(n, n), jumps: None }
    }

    /// Triplet whose simulated continuous part has drift `drift`: b₀ is
    /// shifted by the compensator so that the two conventions agree.
    pub fn from_continuous_drift(
        group: Arc<LieGroup>,
        drift: DVector<f64>,
        a0: DMatrix<f64>,
        jumps: Option<JumpMeasure>,
    ) -> Result<Self> {
        let m = jumps.as_ref().map_or_else(|| DVector::zeros(group.dim()), |j| j.compensator(&group));
        Self::new(group, drift + m, a0, jumps)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.group.dim();
        if self.b0.len() != n || self.a0.nrows() != n || self.a0.ncols() != n {
            return Err(Error::Shape(format!("triplet on {} needs b0 of length {n} and {n}x{n} A0", self.group.name())));
        }
        psd_sqrt(&self.a0)?;
        if let Some(j) = &self.jumps {
            j.validate(&self.group)?;
        }
        Ok(())
    }

    pub fn rate(&self) -> f64 {
        self.jumps.as_ref().map_or(0.0, |j| j.rate)
    }

    pub fn compensator(&self) -> DVector<f64> {
        self.jumps.as_ref().map_or_else(|| DVector::zeros(self.group.dim()), |j| j.compensator(&self.group))
    }
}

/// Transition sampler of a discrete-time chain on ℝᵈ: draws Z_n − Z_{n−1}
/// given the previous increments.
pub trait DiscreteSampler: Send + Sync {
    fn dim(&self) -> usize;
    fn sample(&self, history: &[DVector<f64>], rng: &mut StreamRng) -> DVector<f64>;
    fn name(&self) -> String {
        "custom".into()
    }
}

/// Integrand of the modulated composite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Modulation {
    /// G_n = 1 + max of W⁰ over nodes 0..n−1.
    RunningMaxPlusOne,
    Constant { value: f64 },
}

impl Modulation {
    pub fn value(&self, running_max: f64) -> f64 {
        match self {
            Modulation::RunningMaxPlusOne => 1.0 + running_max,
            Modulation::Constant { value } => *value,
        }
    }
}

#[derive(Clone)]
pub enum DriverSpec {
    Brownian(usize),
    Levy(LevyTriplet),
    /// Pure-jump driver, no continuous part.
    CompoundPoisson { group: Arc<LieGroup>, rate: f64, law: JumpLaw },
    DiscreteTime { sampler: Arc<dyn DiscreteSampler>, steps: usize },
    /// (W̃¹, W̃², W⁰) on ℝ²×ℝ with dW̃^α = s_α G(W⁰ past) dW^α.
    ModulatedBrownian { modulation: Modulation, scales: [f64; 2] },
}

impl fmt::Debug for DriverSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriverSpec::Brownian(n) => write!(f, "Brownian({n})"),
            DriverSpec::Levy(t) => write!(f, "Levy({t:?})"),
            DriverSpec::CompoundPoisson { group, rate, law } => {
                write!(f, "CompoundPoisson({}, {rate}, {law:?})", group.name())
            }
            DriverSpec::DiscreteTime { sampler, steps } => write!(f, "DiscreteTime({}, {steps})", sampler.name()),
            DriverSpec::ModulatedBrownian { modulation, scales } => {
                write!(f, "ModulatedBrownian({modulation:?}, {scales:?})")
            }
        }
    }
}

impl DriverSpec {
    pub fn group(&self) -> Arc<LieGroup> {
        match self {
            DriverSpec::Brownian(n) => LieGroup::additive(*n),
            DriverSpec::Levy(t) => t.group.clone(),
            DriverSpec::CompoundPoisson { group, .. } => group.clone(),
            DriverSpec::DiscreteTime { sampler, .. } => LieGroup::additive(sampler.dim()),
            DriverSpec::ModulatedBrownian { .. } => modulated_group(),
        }
    }

    /// The model triplet, when the driver is Lévy.
    pub fn triplet(&self) -> Option<LevyTriplet> {
        match self {
            DriverSpec::Brownian(n) => Some(LevyTriplet::brownian(*n)),
            DriverSpec::Levy(t) => Some(t.clone()),
            DriverSpec::CompoundPoisson { group, rate, law } => {
                let jm = JumpMeasure::new(*rate, law.clone());
                let b0 = jm.compensator(group);
                Some(LevyTriplet { group: group.clone(), b0, a0: DMatrix::zeros(group.dim(), group.dim()), jumps: Some(jm) })
            }
            _ => None,
        }
    }
}

pub fn modulated_group() -> Arc<LieGroup> {
    LieGroup::product(LieGroup::additive(2), LieGroup::additive(1))
}

/// Time grid with base step h; h must divide T.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub horizon: f64,
    pub step: f64,
}

impl Grid {
    pub fn new(horizon: f64, step: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return invalid("horizon must be positive");
        }
        if !(step > 0.0) || step > horizon {
            return invalid("step must satisfy 0 < h <= T");
        }
        let m = horizon / step;
        if (m - m.round()).abs() > 1e-9 * m.max(1.0) {
            return invalid(format!("step {step} does not divide horizon {horizon}"));
        }
        Ok(Grid { horizon, step })
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.step
    }
}

/// Validated driver with its precomputed square root and drift.
#[derive(Clone)]
pub struct PreparedDriver {
    spec: DriverSpec,
    group: Arc<LieGroup>,
    c: DMatrix<f64>,
    drift: DVector<f64>,
    jumps: Option<JumpMeasure>,
}

impl PreparedDriver {
    pub fn new(spec: DriverSpec) -> Result<Self> {
        let group = spec.group();
        let n = group.dim();
        let (c, drift, jumps) = match &spec {
            DriverSpec::Brownian(_) => (DMatrix::identity(n, n), DVector::zeros(n), None),
            DriverSpec::Levy(t) => {
                t.validate()?;
                let c = psd_sqrt(&t.a0)?;
                (c, &t.b0 - t.compensator(), t.jumps.clone())
            }
            DriverSpec::CompoundPoisson { rate, law, .. } => {
                let jm = JumpMeasure::new(*rate, law.clone());
                jm.validate(&group)?;
                (DMatrix::zeros(n, n), DVector::zeros(n), Some(jm))
            }
            DriverSpec::DiscreteTime { steps, .. } => {
                if *steps == 0 {
                    return invalid("discrete-time driver needs at least one step");
                }
                (DMatrix::zeros(n, n), DVector::zeros(n), None)
            }
            DriverSpec::ModulatedBrownian { scales, .. } => {
                if scales.iter().any(|s| !s.is_finite()) {
                    return invalid("scales must be finite");
                }
                (DMatrix::identity(n, n), DVector::zeros(n), None)
            }
        };
        Ok(PreparedDriver { spec, group, c, drift, jumps })
    }

    pub fn group(&self) -> &Arc<LieGroup> {
        &self.group
    }
    pub fn spec(&self) -> &DriverSpec {
        &self.spec
    }

    /// Replica `replica` of the driver; identical arguments give bit-identical paths.
    pub fn simulate(&self, grid: &Grid, seed: u64, replica: u64) -> Result<CadlagPath> {
        match &self.spec {
            DriverSpec::DiscreteTime { sampler, steps } => simulate_discrete(sampler.as_ref(), *steps, seed, replica),
            DriverSpec::ModulatedBrownian { modulation, scales } => {
                simulate_modulated(*modulation, *scales, grid, seed, replica)
            }
            _ => self.simulate_levy(grid, seed, replica),
        }
    }

    fn continuous(&self, dt: f64, rng: &mut StreamRng) -> GroupElement {
        let n = self.group.dim();
        let zeta = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let v = &self.drift * dt + &self.c * zeta * dt.sqrt();
        self.group.exp(v.as_slice())
    }

    fn simulate_levy(&self, grid: &Grid, seed: u64, replica: u64) -> Result<CadlagPath> {
        let m = grid.steps();
        let mut rng = stream(seed, replica, role::DRIVER);
        let mut jrng = stream(seed, replica, role::JUMPS);
        let mut jump_times: Vec<f64> = Vec::new();
        if let Some(j) = &self.jumps {
            let mean = j.rate * grid.horizon;
            if mean > 0.0 {
                let count = Poisson::new(mean).map_err(|e| Error::Invalid(e.to_string()))?.sample(&mut jrng) as usize;
                jump_times = (0..count).map(|_| jrng.random::<f64>() * grid.horizon).collect();
                jump_times.sort_by(f64::total_cmp);
            }
        }
        let mut times = Vec::with_capacity(m + jump_times.len() + 1);
        let mut steps: Vec<Step> = Vec::with_capacity(m + jump_times.len());
        times.push(0.0);
        let mut next = jump_times.iter().peekable();
        let tol = 1e-12 * grid.horizon;
        for i in 1..=m {
            let end = grid.time(i);
            while let Some(&&tau) = next.peek() {
                if tau > end - tol {
                    break;
                }
                next.next();
                let jump = self.jumps.as_ref().unwrap().sample(&self.group, &mut jrng);
                let t0 = *times.last().unwrap();
                if tau - t0 <= tol {
                    // coincident jump times: merge into the previous jump
                    if let Some(last) = steps.last_mut() {
                        let prev = last.jump.take().unwrap_or_else(|| self.group.identity());
                        last.jump = Some(self.group.mul(&jump, &prev));
                        continue;
                    }
                }
                steps.push(Step { cont: self.continuous(tau - t0, &mut rng), jump: Some(jump) });
                times.push(tau);
            }
            let t0 = *times.last().unwrap();
            let mut jump = None;
            if let Some(&&tau) = next.peek() {
                if tau <= end + tol {
                    next.next();
                    jump = Some(self.jumps.as_ref().unwrap().sample(&self.group, &mut jrng));
                }
            }
            steps.push(Step { cont: self.continuous(end - t0, &mut rng), jump });
            times.push(end);
        }
        CadlagPath::from_steps(self.group.clone(), times, steps, grid.step)
    }
}

pub fn simulate_driver(spec: &DriverSpec, grid: &Grid, seed: u64, replica: u64) -> Result<CadlagPath> {
    PreparedDriver::new(spec.clone())?.simulate(grid, seed, replica)
}

fn simulate_discrete(sampler: &dyn DiscreteSampler, steps: usize, seed: u64, replica: u64) -> Result<CadlagPath> {
    let d = sampler.dim();
    let group = LieGroup::additive(d);
    let mut rng = stream(seed, replica, role::DRIVER);
    let mut history: Vec<DVector<f64>> = Vec::with_capacity(steps);
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let dz = sampler.sample(&history, &mut rng);
        if dz.len() != d {
            return Err(Error::Shape("discrete sampler returned the wrong dimension".into()));
        }
        out.push(Step { cont: group.identity(), jump: Some(group.exp(dz.as_slice())) });
        history.push(dz);
    }
    CadlagPath::from_steps(group, (0..=steps).map(|i| i as f64).collect(), out, 1.0)
}

fn simulate_modulated(modulation: Modulation, scales: [f64; 2], grid: &Grid, seed: u64, replica: u64) -> Result<CadlagPath> {
    let group = modulated_group();
    let m = grid.steps();
    let sq = grid.step.sqrt();
    let mut rng = stream(seed, replica, role::DRIVER);
    let mut w0 = 0.0f64;
    let mut running_max = 0.0f64;
    let mut steps = Vec::with_capacity(m);
    for _ in 0..m {
        let g = modulation.value(running_max);
        let z: [f64; 3] = std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal) * sq);
        steps.push(Step { cont: group.exp(&[scales[0] * g * z[0], scales[1] * g * z[1], z[2]]), jump: None });
        w0 += z[2];
        running_max = running_max.max(w0);
    }
    CadlagPath::from_steps(group, (0..=m).map(|i| grid.time(i)).collect(), steps, grid.step)
}

/// Σ δδᵀ over continuous increments, δ = log of the continuous part.
pub fn brownian_qv(path: &CadlagPath) -> Result<DMatrix<f64>> {
    let g = path.group();
    let n = g.dim();
    let mut q = DMatrix::zeros(n, n);
    for s in path.increments() {
        let d = g.log(&s.cont)?;
        q += &d * d.transpose();
    }
    Ok(q)
}
