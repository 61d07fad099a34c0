//! JSON experiment configuration and its translation into library objects.
//! The published schema lives in docs/config.schema.json.

use anyhow::{anyhow, bail, Context, Result};
use gaugesde::characteristics::{LevyCheckOptions, QuadratureOptions};
use gaugesde::drivers::{DriverSpec, Grid, JumpLaw, JumpMeasure, LevyTriplet, PreparedDriver};
use gaugesde::gauge::{parse_action, AngleOfPast, ConstantGauge, GaugeAction, GaugeElement, GaugeProcess, PastSource};
use gaugesde::geo_sde::{AdditiveSde, GeometricSde, LeftMultiplication, MarcusSde, SmoothLevySde};
use gaugesde::lab::ExperimentOptions;
use gaugesde::lie::LieGroup;
use gaugesde::stats::Method;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_path_to_error::Segment;
use std::path::Path;
use std::sync::Arc;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_name")]
    pub name: String,
    /// "additive:n", "so:n" or "product:<a>,<b>".
    pub group: String,
    /// Cutoff radius of the truncation function; group default when absent.
    #[serde(default)]
    pub truncation_radius: Option<f64>,
    pub driver: DriverConfig,
    #[serde(default)]
    pub action: Option<String>,
    #[serde(default)]
    pub gauge: Option<GaugeConfig>,
    #[serde(default)]
    pub sde: Option<SdeConfig>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub test: TestConfig,
    #[serde(default)]
    pub check: CheckConfig,
    /// Output directory; overridden by --out.
    #[serde(default)]
    pub output: Option<String>,
}

fn default_name() -> String {
    "experiment".into()
}
fn default_paths() -> usize {
    100
}
fn default_seed() -> u64 {
    1
}

// Tagged objects `{"kind": k, ...}` are rewritten to `{k: {...}}` before
// deserialising (see `untag`) so that error paths survive; serde buffers
// internally tagged content and would lose them.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriverConfig {
    /// Standard Brownian motion in algebra coordinates.
    Brownian {},
    Levy {
        b0: Vec<f64>,
        a0: Vec<Vec<f64>>,
        #[serde(default)]
        jumps: Option<JumpsConfig>,
    },
    CompoundPoisson { rate: f64, law: LawConfig },
    /// Isotropic α-stable jumps truncated below ε, plus optional Gaussian part.
    Stable {
        alpha: f64,
        #[serde(default = "one")]
        scale: f64,
        epsilon: f64,
        #[serde(default)]
        b0: Option<Vec<f64>>,
        #[serde(default)]
        a0: Option<Vec<Vec<f64>>>,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpsConfig {
    pub rate: f64,
    pub law: LawConfig,
}

/// Mirror of `JumpLaw`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum LawConfig {
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    IsotropicGaussian { sigma: f64 },
    PointMasses { atoms: Vec<(Vec<f64>, f64)> },
    RadialUniform { r_min: f64, r_max: f64 },
    Stable { alpha: f64, epsilon: f64 },
}

impl From<&LawConfig> for JumpLaw {
    fn from(l: &LawConfig) -> JumpLaw {
        match l.clone() {
            LawConfig::Gaussian { mean, cov } => JumpLaw::Gaussian { mean, cov },
            LawConfig::IsotropicGaussian { sigma } => JumpLaw::IsotropicGaussian { sigma },
            LawConfig::PointMasses { atoms } => JumpLaw::PointMasses { atoms },
            LawConfig::RadialUniform { r_min, r_max } => JumpLaw::RadialUniform { r_min, r_max },
            LawConfig::Stable { alpha, epsilon } => JumpLaw::Stable { alpha, epsilon },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum GaugeConfig {
    Identity {},
    /// Planar rotation by a fixed angle.
    Rotation { angle: f64 },
    Scalar { value: f64 },
    Shear { value: f64 },
    Matrix { rows: Vec<Vec<f64>> },
    /// Rotation by offset + scale · (coordinate `coord` of the previous node).
    AngleOfPast {
        #[serde(default = "transformed")]
        source: PastSource,
        #[serde(default)]
        coord: usize,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        offset: f64,
        #[serde(default = "two")]
        dim: usize,
    },
}

fn transformed() -> PastSource {
    PastSource::Transformed
}
fn two() -> usize {
    2
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeConfig {
    /// "additive", "left-multiplication", "marcus:linear" or "smooth-levy:ou".
    pub preset: String,
    /// Initial state; presets supply a default when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub step: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { horizon: 1.0, step: 1.0 / 1024.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestConfig {
    pub alpha: f64,
    pub method: Method,
    pub permutations: usize,
    pub obs_times: Option<Vec<f64>>,
    pub qv_tol: f64,
}

impl Default for TestConfig {
    fn default() -> Self {
        let o = ExperimentOptions::default();
        TestConfig { alpha: o.alpha, method: o.method, permutations: o.permutations, obs_times: o.obs_times, qv_tol: o.qv_tol }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    /// Explicit gauge elements; identity plus `g_draws` random draws when absent.
    pub gauges: Option<Vec<GaugeConfig>>,
    pub g_draws: usize,
    pub draws: usize,
    pub seed: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        let o = LevyCheckOptions::default();
        CheckConfig { gauges: None, g_draws: o.g_draws, draws: o.quadrature.draws, seed: o.seed }
    }
}

/// SDE and its initial state.
pub type Preset = (Arc<dyn GeometricSde>, Vec<f64>);

/// A config problem located by JSON pointer.
#[derive(Debug)]
pub struct ConfigError {
    pub pointer: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let at = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "config error at {at}: {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

fn pointer(path: &serde_path_to_error::Path) -> String {
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            // variants come from the "kind" rewrite, not from the document
            Segment::Enum { .. } => {}
            Segment::Unknown => out.push_str("/?"),
        }
    }
    out
}

fn err<T>(pointer: &str, message: impl Into<String>) -> std::result::Result<T, ConfigError> {
    Err(ConfigError { pointer: pointer.into(), message: message.into() })
}

/// Rewrite `{"kind": k, rest..}` at `at` into `{k: {rest..}}`.
fn untag(v: &mut serde_json::Value, at: &str) -> std::result::Result<(), ConfigError> {
    let Some(obj) = v.pointer_mut(at).and_then(|o| o.as_object_mut()) else { return Ok(()) };
    let kind = match obj.remove("kind") {
        Some(serde_json::Value::String(k)) => k,
        Some(_) => return err(&format!("{at}/kind"), "must be a string"),
        None => return err(at, "missing field `kind`"),
    };
    let rest = std::mem::take(obj);
    obj.insert(kind, serde_json::Value::Object(rest));
    Ok(())
}

pub fn parse(text: &str) -> std::result::Result<Config, ConfigError> {
    let mut v: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError { pointer: String::new(), message: e.to_string() })?;
    untag(&mut v, "/driver")?;
    for law in ["/driver/levy/jumps/law", "/driver/compound-poisson/law"] {
        untag(&mut v, law)?;
    }
    untag(&mut v, "/gauge")?;
    let n = v.pointer("/check/gauges").and_then(|g| g.as_array()).map_or(0, Vec::len);
    for i in 0..n {
        untag(&mut v, &format!("/check/gauges/{i}"))?;
    }
    let cfg: Config = serde_path_to_error::deserialize(v).map_err(|e| {
        let message = e.inner().to_string();
        ConfigError { pointer: pointer(e.path()), message }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse(&text)?)
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

impl Config {
    /// Range checks serde cannot express.
    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        if !positive(self.grid.horizon) {
            return err("/grid/horizon", "must be positive");
        }
        if !positive(self.grid.step) {
            return err("/grid/step", "must be positive");
        }
        if self.grid.step > self.grid.horizon {
            return err("/grid/step", "must not exceed the horizon");
        }
        if let Some(r) = self.truncation_radius {
            if !positive(r) {
                return err("/truncation_radius", "must be positive");
            }
        }
        if self.n_paths == 0 {
            return err("/n_paths", "must be at least 1");
        }
        if !(self.test.alpha > 0.0 && self.test.alpha < 1.0) {
            return err("/test/alpha", "must lie in (0, 1)");
        }
        match &self.driver {
            DriverConfig::CompoundPoisson { rate, .. } if !rate.is_finite() || *rate < 0.0 => return err("/driver/rate", "must be nonnegative"),
            DriverConfig::Levy { jumps: Some(j), .. } if !j.rate.is_finite() || j.rate < 0.0 => return err("/driver/jumps/rate", "must be nonnegative"),
            DriverConfig::Stable { alpha, .. } if !(*alpha > 0.0 && *alpha < 2.0) => return err("/driver/alpha", "must lie in (0, 2)"),
            DriverConfig::Stable { epsilon, .. } if !positive(*epsilon) => return err("/driver/epsilon", "must be positive"),
            _ => {}
        }
        if LieGroup::parse(&self.group).is_err() {
            return err("/group", format!("unknown group '{}'", self.group));
        }
        Ok(())
    }

    pub fn group(&self) -> Result<Arc<LieGroup>> {
        let g = LieGroup::parse(&self.group)?;
        Ok(match self.truncation_radius {
            Some(r) => g.with_radius(r),
            None => g,
        })
    }

    pub fn grid(&self) -> Result<Grid> {
        Ok(Grid::new(self.grid.horizon, self.grid.step)?)
    }

    pub fn triplet(&self) -> Result<LevyTriplet> {
        let group = self.group()?;
        let n = group.dim();
        let matrix = |rows: &[Vec<f64>], at: &str| -> Result<DMatrix<f64>> {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                bail!(ConfigError { pointer: at.into(), message: format!("must be a {n}x{n} matrix") });
            }
            Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
        };
        let vector = |v: &[f64], at: &str| -> Result<DVector<f64>> {
            if v.len() != n {
                bail!(ConfigError { pointer: at.into(), message: format!("must have {n} entries") });
            }
            Ok(DVector::from_column_slice(v))
        };
        let t = match &self.driver {
            DriverConfig::Brownian {} => LevyTriplet::new(group, DVector::zeros(n), DMatrix::identity(n, n), None)?,
            DriverConfig::Levy { b0, a0, jumps } => {
                let jumps = jumps.as_ref().map(|j| JumpMeasure::new(j.rate, (&j.law).into()));
                LevyTriplet::new(group, vector(b0, "/driver/b0")?, matrix(a0, "/driver/a0")?, jumps)?
            }
            DriverConfig::CompoundPoisson { rate, law } => {
                LevyTriplet::new(group, DVector::zeros(n), DMatrix::zeros(n, n), Some(JumpMeasure::new(*rate, law.into())))?
            }
            DriverConfig::Stable { alpha, scale, epsilon, b0, a0 } => {
                let b = match b0 {
                    Some(b) => vector(b, "/driver/b0")?,
                    None => DVector::zeros(n),
                };
                let a = match a0 {
                    Some(a) => matrix(a, "/driver/a0")?,
                    None => DMatrix::zeros(n, n),
                };
                LevyTriplet::new(group, b, a, Some(JumpMeasure::truncated_stable(n, *alpha, *scale, *epsilon)?))?
            }
        };
        Ok(t)
    }

    pub fn driver(&self) -> Result<PreparedDriver> {
        Ok(PreparedDriver::new(DriverSpec::Levy(self.triplet()?))?)
    }

    pub fn action(&self) -> Result<Arc<dyn GaugeAction>> {
        let spec = self.action.as_deref().ok_or_else(|| ConfigError { pointer: "/action".into(), message: "required by this command".into() })?;
        parse_action(spec, &self.group()?).map_err(|e| anyhow!(ConfigError { pointer: "/action".into(), message: e.to_string() }))
    }

    pub fn gauge(&self) -> Result<Arc<dyn GaugeProcess>> {
        let g = self.gauge.as_ref().ok_or_else(|| ConfigError { pointer: "/gauge".into(), message: "required by this command".into() })?;
        match g {
            GaugeConfig::AngleOfPast { source, coord, scale, offset, dim } => {
                let mut a = AngleOfPast::transformed(self.group()?, *coord);
                a.source = *source;
                a.scale = *scale;
                a.offset = *offset;
                a.dim = *dim;
                Ok(Arc::new(a))
            }
            other => Ok(Arc::new(ConstantGauge(self.element(other, "/gauge")?))),
        }
    }

    pub fn element(&self, g: &GaugeConfig, at: &str) -> Result<GaugeElement> {
        let action = self.action()?;
        let e = match g {
            GaugeConfig::Identity {} => action.identity(),
            GaugeConfig::Rotation { angle } => GaugeElement::rotation2(*angle),
            GaugeConfig::Scalar { value } => GaugeElement::scalar(*value),
            GaugeConfig::Shear { value } => GaugeElement::shear(*value),
            GaugeConfig::Matrix { rows } => {
                let k = rows.len();
                if k == 0 || rows.iter().any(|r| r.len() != k) {
                    bail!(ConfigError { pointer: format!("{at}/rows"), message: "must be a nonempty square matrix".into() });
                }
                GaugeElement(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
            }
            GaugeConfig::AngleOfPast { .. } => bail!(ConfigError { pointer: at.into(), message: "a fixed gauge element is required here".into() }),
        };
        let shape = action.identity().0.shape();
        if e.0.shape() != shape {
            bail!(ConfigError { pointer: at.into(), message: format!("{} expects a {}x{} element", action.name(), shape.0, shape.1) });
        }
        if !e.is_finite() || e.0.clone().try_inverse().is_none() {
            bail!(ConfigError { pointer: at.into(), message: "gauge element must be finite and invertible".into() });
        }
        Ok(e)
    }

    pub fn check_options(&self) -> LevyCheckOptions {
        LevyCheckOptions { quadrature: QuadratureOptions { draws: self.check.draws, seed: self.check.seed }, g_draws: self.check.g_draws, seed: self.check.seed }
    }

    pub fn gauge_sample(&self) -> Result<Option<Vec<GaugeElement>>> {
        match &self.check.gauges {
            None => Ok(None),
            Some(list) => Ok(Some(list.iter().enumerate().map(|(i, g)| self.element(g, &format!("/check/gauges/{i}"))).collect::<Result<_>>()?)),
        }
    }

    pub fn experiment_options(&self) -> ExperimentOptions {
        ExperimentOptions {
            horizon: self.grid.horizon,
            step: self.grid.step,
            n_paths: self.n_paths,
            seed: self.seed,
            obs_times: self.test.obs_times.clone(),
            alpha: self.test.alpha,
            method: self.test.method,
            permutations: self.test.permutations,
            qv_tol: self.test.qv_tol,
        }
    }

    /// SDE preset and initial state.
    pub fn sde(&self) -> Result<Option<Preset>> {
        let Some(s) = &self.sde else { return Ok(None) };
        let group = self.group()?;
        let n = group.dim();
        let bad = |m: String| anyhow!(ConfigError { pointer: "/sde/preset".into(), message: m });
        let (sde, x0): (Arc<dyn GeometricSde>, Vec<f64>) = match s.preset.as_str() {
            "additive" => {
                let sde = AdditiveSde::with_matrix(group.clone(), DMatrix::identity(n, n)).map_err(|e| bad(e.to_string()))?;
                (Arc::new(sde), vec![0.0; n])
            }
            "left-multiplication" => {
                let x0 = group.identity().0.transpose().as_slice().to_vec();
                (Arc::new(LeftMultiplication::new(group.clone())), x0)
            }
            "marcus:linear" => {
                if group.name() != LieGroup::additive(1).name() {
                    return Err(bad("marcus:linear is driven by additive:1".into()));
                }
                (Arc::new(MarcusSde::linear()), vec![1.0])
            }
            "smooth-levy:ou" => {
                // coordinate 0 of the driver is time, the rest drive an OU state
                if n < 2 {
                    return Err(bad("smooth-levy:ou needs additive:n with n >= 2".into()));
                }
                let m = n - 1;
                let sde = SmoothLevySde::new(
                    m,
                    n,
                    n,
                    Arc::new(|x: &[f64]| x.iter().map(|v| -v).collect()),
                    Some(Arc::new(move |_x: &[f64]| DMatrix::identity(m, m))),
                    None,
                    &[],
                )
                .map_err(|e| bad(e.to_string()))?;
                (Arc::new(sde), vec![0.0; m])
            }
            other => return Err(bad(format!("unknown SDE preset '{other}'"))),
        };
        let x0 = s.x0.clone().unwrap_or(x0);
        if x0.len() != sde.state_dim() {
            bail!(ConfigError { pointer: "/sde/x0".into(), message: format!("must have {} entries", sde.state_dim()) });
        }
        Ok(Some((sde, x0)))
    }
}
