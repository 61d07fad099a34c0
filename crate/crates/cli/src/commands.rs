use crate::config::{self, Config, ConfigError};
use crate::{Common, Demo, Drift, Variant};
use anyhow::{Context, Result};
use gaugesde::characteristics::{check_levy_invariance, estimate_characteristics, CharTriplet, MIN_PATHS};
use gaugesde::gauge::{invert_transform, random_transform};
use gaugesde::geo_sde::{integrate_jump_map, ConstantControl};
use gaugesde::io;
use gaugesde::lab::{self, DiscreteCase, DiscreteMode, DiscreteOptions, ExperimentOptions, GaugeSource, NonmarkovianOptions, NonmarkovianVariant, RadialDrift, StableOptions};
use gaugesde::par::map_indexed;
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const SCHEMA: &str = include_str!("../../../docs/config.schema.json");
pub const OUT_ENV: &str = "GAUGESDE_OUT_DIR";

/// Round-trip tolerance for `transform`.
const ROUND_TRIP_TOL: f64 = 1e-10;

fn out_dir(common: &Common, config: Option<&str>) -> PathBuf {
    if let Some(p) = &common.out {
        return p.clone();
    }
    if let Some(p) = config {
        return PathBuf::from(p);
    }
    match std::env::var_os(OUT_ENV) {
        Some(p) if !p.is_empty() => PathBuf::from(p),
        _ => PathBuf::from("out"),
    }
}

fn load(path: &Path, common: &Common) -> Result<Config> {
    let mut cfg = config::load(path)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Report plus a sibling metadata file; prints where it went.
fn emit<T: Serialize>(dir: &Path, stem: &str, report: &T, pass: bool) -> Result<bool> {
    let file = dir.join(format!("{stem}.json"));
    io::write_json(&file, report)?;
    let command: Vec<String> = std::env::args().collect();
    io::write_meta(&dir.join(format!("{stem}.meta.json")), &command.join(" "))?;
    println!("{}: {}", if pass { "pass" } else { "fail" }, file.display());
    Ok(pass)
}

#[derive(Serialize)]
struct SdeSummary {
    preset: String,
    mean_final_state: Vec<f64>,
    stopped_paths: usize,
}

#[derive(Serialize)]
struct SimulateSummary {
    name: String,
    group: String,
    truncation_radius: f64,
    horizon: f64,
    step: f64,
    n_paths: usize,
    seed: u64,
    total_jumps: usize,
    mean_endpoint: Vec<f64>,
    /// Absent below `MIN_PATHS` paths.
    characteristics: Option<gaugesde::characteristics::EmpiricalTriplet>,
    sde: Option<SdeSummary>,
}

pub fn simulate(path: &Path, common: &Common) -> Result<bool> {
    let cfg = load(path, common)?;
    let dir = out_dir(common, cfg.output.as_deref());
    let driver = cfg.driver()?;
    let grid = cfg.grid()?;
    let group = driver.group().clone();
    let paths = map_indexed(cfg.n_paths, |i| driver.simulate(&grid, cfg.seed, i as u64)).into_iter().collect::<gaugesde::Result<Vec<_>>>()?;
    let k = group.coordinate_count();
    let mut mean = vec![0.0; k];
    for z in &paths {
        for (m, c) in mean.iter_mut().zip(group.coordinates(z.nodes().last().unwrap())) {
            *m += c / paths.len() as f64;
        }
    }
    let est = if paths.len() >= MIN_PATHS {
        let est = estimate_characteristics(&paths)?;
        io::write_histogram_csv(&dir.join("histogram.csv"), &est)?;
        Some(est)
    } else {
        eprintln!("note: fewer than {MIN_PATHS} paths, characteristics not estimated");
        None
    };
    io::write_paths_csv(&dir.join("paths.csv"), &paths)?;
    let sde = match cfg.sde()? {
        None => None,
        Some((sde, x0)) => {
            let ctl = ConstantControl::default();
            let sols = map_indexed(paths.len(), |i| integrate_jump_map(sde.as_ref(), &ctl, &paths[i], &x0)).into_iter().collect::<gaugesde::Result<Vec<_>>>()?;
            io::write_states_csv(&dir.join("states.csv"), &sols)?;
            let ok: Vec<_> = sols.iter().filter(|s| !s.exploded()).collect();
            let mut m = vec![0.0; x0.len()];
            for s in &ok {
                for (a, b) in m.iter_mut().zip(s.last()) {
                    *a += b / ok.len().max(1) as f64;
                }
            }
            Some(SdeSummary { preset: cfg.sde.as_ref().unwrap().preset.clone(), mean_final_state: m, stopped_paths: sols.len() - ok.len() })
        }
    };
    let summary = SimulateSummary {
        name: cfg.name.clone(),
        group: group.name().to_string(),
        truncation_radius: group.radius(),
        horizon: grid.horizon,
        step: grid.step,
        n_paths: paths.len(),
        seed: cfg.seed,
        total_jumps: paths.iter().map(|z| z.jumps().len()).sum(),
        mean_endpoint: mean,
        characteristics: est,
        sde,
    };
    emit(&dir, "simulate", &summary, true)
}

#[derive(Serialize)]
struct TransformReport {
    name: String,
    action: String,
    gauge: String,
    n_paths: usize,
    max_round_trip_residual: f64,
    tolerance: f64,
    pass: bool,
}

pub fn transform(path: &Path, common: &Common) -> Result<bool> {
    let cfg = load(path, common)?;
    let dir = out_dir(common, cfg.output.as_deref());
    let driver = cfg.driver()?;
    let grid = cfg.grid()?;
    let action = cfg.action()?;
    let gauge = cfg.gauge()?;
    let results = map_indexed(cfg.n_paths, |i| -> gaugesde::Result<_> {
        let z = driver.simulate(&grid, cfg.seed, i as u64)?;
        let zt = random_transform(action.as_ref(), gauge.as_ref(), &z)?.path;
        let back = invert_transform(action.as_ref(), gauge.as_ref(), &zt)?;
        let r = z.nodes().iter().zip(back.nodes()).map(|(a, b)| a.dist(b)).fold(0.0, f64::max);
        Ok((zt, r))
    })
    .into_iter()
    .collect::<gaugesde::Result<Vec<_>>>()?;
    let residual = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let transformed: Vec<_> = results.into_iter().map(|r| r.0).collect();
    io::write_paths_csv(&dir.join("transformed.csv"), &transformed)?;
    let pass = residual <= ROUND_TRIP_TOL;
    let report = TransformReport {
        name: cfg.name.clone(),
        action: action.name(),
        gauge: gauge.describe(),
        n_paths: transformed.len(),
        max_round_trip_residual: residual,
        tolerance: ROUND_TRIP_TOL,
        pass,
    };
    emit(&dir, "transform", &report, pass)
}

pub fn check_levy(path: &Path, common: &Common) -> Result<bool> {
    let cfg = load(path, common)?;
    let dir = out_dir(common, cfg.output.as_deref());
    let triplet = CharTriplet::from_levy(&cfg.triplet()?);
    let action = cfg.action()?;
    let sample = cfg.gauge_sample()?;
    let mut opts = cfg.check_options();
    if let Some(s) = common.seed {
        opts.seed = s;
        opts.quadrature.seed = s;
    }
    let report = check_levy_invariance(&triplet, &action, sample.as_deref(), None, &opts)?;
    let pass = report.verdict;
    emit(&dir, "check-levy", &report, pass)
}

pub fn test_invariance(path: &Path, common: &Common) -> Result<bool> {
    let cfg = load(path, common)?;
    let dir = out_dir(common, cfg.output.as_deref());
    let driver = cfg.driver()?;
    let report = lab::invariance_experiment(&cfg.name, &driver, cfg.action()?, GaugeSource::Shared(cfg.gauge()?), &cfg.experiment_options())?;
    io::write_samples_csv(&dir.join("samples.csv"), &report.samples)?;
    let pass = report.verdict.passed();
    emit(&dir, "test-invariance", &report, pass)
}

fn demo_options<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(p) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = e.path().iter().map(|s| format!("/{s}")).collect::<String>();
        anyhow::anyhow!(ConfigError { pointer, message: e.inner().to_string() })
    })
}

#[derive(Serialize)]
struct DiscreteDemo {
    cases: Vec<lab::DiscreteReport>,
    expected: Vec<bool>,
    pass: bool,
}

pub fn demo(name: Demo, config: Option<&Path>, paths: Option<usize>, variant: Variant, drift: Drift, common: &Common) -> Result<bool> {
    let dir = out_dir(common, None);
    let experiment = |mut o: ExperimentOptions| {
        if let Some(s) = common.seed {
            o.seed = s;
        }
        if let Some(n) = paths {
            o.n_paths = n;
        }
        o
    };
    match name {
        Demo::BmRotation => {
            let r = lab::bm_rotation_demo(&experiment(demo_options(config)?))?;
            io::write_samples_csv(&dir.join("bm-rotation-samples.csv"), &r.samples)?;
            emit(&dir, "demo-bm-rotation", &r, r.verdict.passed())
        }
        Demo::Bessel => {
            let f = match drift {
                Drift::Zero => RadialDrift::Zero,
                Drift::Saturating => RadialDrift::Saturating,
            };
            let r = lab::bessel_reduction_demo(f, &experiment(demo_options(config)?))?;
            io::write_samples_csv(&dir.join("bessel-samples.csv"), &r.samples)?;
            emit(&dir, "demo-bessel", &r, r.verdict.passed())
        }
        Demo::Nonmarkovian => {
            let mut o: NonmarkovianOptions = demo_options(config)?;
            o.experiment = experiment(o.experiment);
            let v = match variant {
                Variant::Default => NonmarkovianVariant::Default,
                Variant::Anisotropic => NonmarkovianVariant::Anisotropic,
                Variant::Unmodulated => NonmarkovianVariant::Unmodulated,
            };
            let r = lab::nonmarkovian_demo(v, &o)?;
            io::write_samples_csv(&dir.join("nonmarkovian-samples.csv"), &r.samples)?;
            emit(&dir, "demo-nonmarkovian", &r, r.verdict.passed())
        }
        Demo::Discrete => {
            let mut o: DiscreteOptions = demo_options(config)?;
            if let Some(s) = common.seed {
                o.seed = s;
            }
            if let Some(n) = paths {
                o.paths = n;
            }
            let mut cases = Vec::new();
            let mut expected = Vec::new();
            for c in DiscreteCase::ALL {
                cases.push(lab::discrete_gauge_check(Arc::new(c), DiscreteMode::Both, &o)?);
                expected.push(c.expected_invariant());
            }
            let pass = cases.iter().zip(&expected).all(|(r, e)| r.verdict == *e && r.agree != Some(false));
            emit(&dir, "demo-discrete", &DiscreteDemo { cases, expected, pass }, pass)
        }
        Demo::AlphaStable => {
            let mut o: StableOptions = demo_options(config)?;
            if let Some(s) = common.seed {
                o.seed = s;
            }
            let r = lab::alpha_stable_demo(&o)?;
            emit(&dir, "demo-alpha-stable", &r, r.verdict)
        }
    }
}
