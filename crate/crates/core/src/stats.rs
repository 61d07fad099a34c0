//! Two-sample tests with permutation nulls: exact energy distance, a sliced
//! energy distance that scales to large samples, and marginal KS tests.

use crate::error::{invalid, Result};
use crate::par;
use crate::rng::{role, stream};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Full V-statistic; quadratic memory, for small samples.
    Energy,
    /// Average of 1-D energy distances along fixed projection directions.
    SlicedEnergy,
    /// Per-marginal Kolmogorov–Smirnov with a Bonferroni correction.
    Ks,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct TwoSampleResult {
    pub method: Method,
    pub statistic: f64,
    pub p_value: f64,
    pub n_x: usize,
    pub n_y: usize,
    pub permutations: usize,
    pub seed: u64,
}

pub const DEFAULT_PERMUTATIONS: usize = 1000;
pub const MIN_SAMPLES: usize = 100;
/// Projection directions per sliced test.
pub const SLICES: usize = 16;
/// Above this pooled size the exact energy test is refused.
pub const ENERGY_MAX_POOLED: usize = 6000;

fn dims(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<usize> {
    let d = x.first().map_or(0, |v| v.len());
    if d == 0 || x.iter().chain(y).any(|v| v.len() != d) {
        return invalid("samples must be nonempty vectors of one dimension");
    }
    if x.iter().chain(y).flatten().any(|v| !v.is_finite()) {
        return invalid("samples contain non-finite values");
    }
    Ok(d)
}

fn degenerate(x: &[Vec<f64>], y: &[Vec<f64>]) -> bool {
    let first = &x[0];
    x.iter().chain(y).all(|v| v == first)
}

/// Permutation test for the difference in law of `x` and `y`. The p-value is
/// (1 + #{T_b ≥ T}) / (1 + B); permutation b draws from its own stream, so the
/// result does not depend on the thread count.
pub fn two_sample_test(x: &[Vec<f64>], y: &[Vec<f64>], method: Method, permutations: usize, seed: u64) -> Result<TwoSampleResult> {
    if x.len() < MIN_SAMPLES || y.len() < MIN_SAMPLES {
        return invalid(format!("two-sample tests need at least {MIN_SAMPLES} samples per side"));
    }
    let d = dims(x, y)?;
    let (n_x, n_y) = (x.len(), y.len());
    let method = if degenerate(x, y) { Method::Ks } else { method };
    let (statistic, p_value, permutations) = match method {
        Method::Ks => {
            let (s, p) = ks_bonferroni(x, y, d);
            (s, p, 0)
        }
        Method::Energy => {
            if n_x + n_y > ENERGY_MAX_POOLED {
                return invalid(format!("exact energy test limited to {ENERGY_MAX_POOLED} pooled samples"));
            }
            let e = ExactEnergy::new(x, y);
            let (s, p) = permutation_p(n_x, n_y, permutations, seed, |lab| e.statistic(lab));
            (s, p, permutations)
        }
        Method::SlicedEnergy => {
            let s = Sliced::new(x, y, d, seed);
            let (st, p) = permutation_p(n_x, n_y, permutations, seed, |lab| s.statistic(lab));
            (st, p, permutations)
        }
    };
    Ok(TwoSampleResult { method, statistic, p_value, n_x, n_y, permutations, seed })
}

/// `stat` receives a label vector (true = first sample) over the pooled data.
fn permutation_p<F>(n_x: usize, n_y: usize, b: usize, seed: u64, stat: F) -> (f64, f64)
where
    F: Fn(&[bool]) -> f64 + Sync,
{
    let pooled = n_x + n_y;
    let labels: Vec<bool> = (0..pooled).map(|i| i < n_x).collect();
    let observed = stat(&labels);
    let exceed = par::map_indexed(b, |k| {
        let mut rng = stream(seed, k as u64, role::PERMUTATION);
        let mut lab = labels.clone();
        lab.shuffle(&mut rng);
        // ties count as exceedances, so identical samples give p = 1
        stat(&lab) >= observed * (1.0 - 1e-12)
    });
    let count = exceed.iter().filter(|e| **e).count();
    (observed, (1 + count) as f64 / (1 + b) as f64)
}

struct ExactEnergy {
    n: usize,
    dist: Vec<f64>,
    n_x: usize,
}

impl ExactEnergy {
    fn new(x: &[Vec<f64>], y: &[Vec<f64>]) -> Self {
        let pooled: Vec<&Vec<f64>> = x.iter().chain(y).collect();
        let n = pooled.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = pooled[i].iter().zip(pooled[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        ExactEnergy { n, dist, n_x: x.len() }
    }

    /// n·m/(n+m) · (2E|X−Y| − E|X−X′| − E|Y−Y′|), V-statistic form.
    fn statistic(&self, lab: &[bool]) -> f64 {
        let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
        for i in 0..self.n {
            let row = &self.dist[i * self.n..(i + 1) * self.n];
            for j in 0..self.n {
                match (lab[i], lab[j]) {
                    (true, true) => xx += row[j],
                    (false, false) => yy += row[j],
                    _ => xy += row[j],
                }
            }
        }
        let nx = self.n_x as f64;
        let ny = (self.n - self.n_x) as f64;
        let e = xy / (nx * ny) - xx / (nx * nx) - yy / (ny * ny);
        nx * ny / (nx + ny) * e
    }
}

/// Projection directions: equally spaced on the half circle for d = 2, the
/// coordinate axes plus seeded random unit vectors otherwise.
pub fn slice_directions(d: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0]],
        2 => (0..k).map(|i| (PI * i as f64 / k as f64).sin_cos()).map(|(s, c)| vec![c, s]).collect(),
        _ => {
            let mut out: Vec<Vec<f64>> = (0..d).map(|a| (0..d).map(|b| if a == b { 1.0 } else { 0.0 }).collect()).collect();
            let mut rng = stream(seed, 0, role::DIRECTIONS);
            while out.len() < k.max(d) {
                let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                if r > 1e-12 {
                    out.push(v.iter().map(|a| a / r).collect());
                }
            }
            out
        }
    }
}

struct Sliced {
    /// Per direction: pooled indices in sorted order and the gaps between
    /// consecutive sorted values.
    slices: Vec<(Vec<usize>, Vec<f64>)>,
    n_x: usize,
    n_y: usize,
}

impl Sliced {
    fn new(x: &[Vec<f64>], y: &[Vec<f64>], d: usize, seed: u64) -> Self {
        let pooled: Vec<&Vec<f64>> = x.iter().chain(y).collect();
        let slices = slice_directions(d, SLICES, seed)
            .into_iter()
            .map(|u| {
                let proj: Vec<f64> = pooled.iter().map(|v| v.iter().zip(&u).map(|(a, b)| a * b).sum()).collect();
                let mut order: Vec<usize> = (0..proj.len()).collect();
                order.sort_by(|&a, &b| proj[a].total_cmp(&proj[b]));
                let gaps = order.windows(2).map(|w| proj[w[1]] - proj[w[0]]).collect();
                (order, gaps)
            })
            .collect();
        Sliced { slices, n_x: x.len(), n_y: y.len() }
    }

    /// Mean over directions of n·m/(n+m) · 2∫(F_X − F_Y)².
    fn statistic(&self, lab: &[bool]) -> f64 {
        let nx = self.n_x as f64;
        let ny = self.n_y as f64;
        let mut total = 0.0;
        for (order, gaps) in &self.slices {
            let (mut cx, mut cy) = (0.0f64, 0.0f64);
            let mut s = 0.0;
            for (j, gap) in gaps.iter().enumerate() {
                if lab[order[j]] {
                    cx += 1.0;
                } else {
                    cy += 1.0;
                }
                let diff = cx / nx - cy / ny;
                s += gap * diff * diff;
            }
            total += 2.0 * s;
        }
        nx * ny / (nx + ny) * total / self.slices.len() as f64
    }
}

/// Kolmogorov distribution tail Q(λ) = 2Σ(−1)^{k−1}e^{−2k²λ²}.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample KS statistic and asymptotic p-value (Stephens' correction).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    (d, kolmogorov_q((ne + 0.12 + 0.11 / ne) * d))
}

fn ks_bonferroni(x: &[Vec<f64>], y: &[Vec<f64>], d: usize) -> (f64, f64) {
    let mut worst_d: f64 = 0.0;
    let mut min_p: f64 = 1.0;
    for a in 0..d {
        let xa: Vec<f64> = x.iter().map(|v| v[a]).collect();
        let ya: Vec<f64> = y.iter().map(|v| v[a]).collect();
        let (s, p) = ks_two_sample(&xa, &ya);
        worst_d = worst_d.max(s);
        min_p = min_p.min(p);
    }
    (worst_d, (min_p * d as f64).min(1.0))
}
