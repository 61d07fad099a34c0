//! Grid-sampled càdlàg paths on a matrix group.
//!
//! A path stores, for every grid step, the continuous increment and the
//! optional jump at the step's right end. Nodes are the post-jump values, so
//! `node[i+1] = jump · cont · node[i]`, and a jump's left limit is
//! `cont · node[i]`.

use crate::error::{invalid, Error, Result};
use crate::lie::{GroupElement, LieGroup};
use std::sync::Arc;

#[derive(Clone, Debug)]
pub struct Step {
    pub cont: GroupElement,
    pub jump: Option<GroupElement>,
}

#[derive(Clone, Debug)]
pub struct JumpRecord {
    /// Node index at which the jump happens.
    pub index: usize,
    pub left_limit: GroupElement,
}

#[derive(Clone, Debug)]
pub struct CadlagPath {
    group: Arc<LieGroup>,
    times: Vec<f64>,
    nodes: Vec<GroupElement>,
    steps: Vec<Step>,
    jumps: Vec<JumpRecord>,
    base_step: f64,
    jumps_known: bool,
}

fn is_identity(g: &LieGroup, z: &GroupElement) -> bool {
    z.dist(&g.identity()) <= 1e-14
}

impl CadlagPath {
    /// Build from per-step increments. Jumps equal to the identity are dropped.
    pub fn from_steps(group: Arc<LieGroup>, times: Vec<f64>, steps: Vec<Step>, base_step: f64) -> Result<Self> {
        if times.len() != steps.len() + 1 {
            return invalid(format!("{} times for {} steps", times.len(), steps.len()));
        }
        check_times(&times)?;
        let mut nodes = Vec::with_capacity(times.len());
        let mut jumps = Vec::new();
        nodes.push(group.identity());
        let mut clean = Vec::with_capacity(steps.len());
        for (i, mut s) in steps.into_iter().enumerate() {
            let left = group.mul(&s.cont, &nodes[i]);
            if s.jump.as_ref().is_some_and(|j| is_identity(&group, j)) {
                s.jump = None;
            }
            let node = match &s.jump {
                Some(j) => {
                    let n = group.mul(j, &left);
                    jumps.push(JumpRecord { index: i + 1, left_limit: left });
                    n
                }
                None => left,
            };
            nodes.push(node);
            clean.push(s);
        }
        Ok(CadlagPath { group, times, nodes, steps: clean, jumps, base_step, jumps_known: true })
    }

    /// Paths loaded from outside: full increments are known, the split into
    /// continuous part and jump is not.
    pub fn from_nodes(group: Arc<LieGroup>, times: Vec<f64>, nodes: Vec<GroupElement>) -> Result<Self> {
        if times.len() != nodes.len() || nodes.is_empty() {
            return invalid("times and nodes must have equal, nonzero length");
        }
        check_times(&times)?;
        if nodes[0].dist(&group.identity()) > 1e-12 {
            return invalid("paths must start at the identity");
        }
        let steps = nodes
            .windows(2)
            .map(|w| Step { cont: group.mul(&w[1], &group.inv(&w[0])), jump: None })
            .collect();
        let base_step = if times.len() > 1 { times[1] - times[0] } else { 0.0 };
        Ok(CadlagPath { group, times, nodes, steps, jumps: Vec::new(), base_step, jumps_known: false })
    }

    pub fn group(&self) -> &Arc<LieGroup> {
        &self.group
    }
    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn nodes(&self) -> &[GroupElement] {
        &self.nodes
    }
    pub fn jumps(&self) -> &[JumpRecord] {
        &self.jumps
    }
    pub fn base_step(&self) -> f64 {
        self.base_step
    }
    pub fn jumps_known(&self) -> bool {
        self.jumps_known
    }
    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Per-step increment records; step i moves node i to node i+1.
    pub fn increments(&self) -> &[Step] {
        &self.steps
    }

    /// Node at the last grid time not after `t`.
    pub fn node_at(&self, t: f64) -> &GroupElement {
        let idx = self.index_at(t);
        &self.nodes[idx]
    }

    pub fn index_at(&self, t: f64) -> usize {
        let tol = 1e-9 * self.horizon().max(1.0);
        self.times.iter().rposition(|&s| s <= t + tol).unwrap_or_default()
    }

    /// Largest deviation between stored nodes and the recomposed increments.
    pub fn recomposition_residual(&self) -> f64 {
        let g = &self.group;
        let mut z = g.identity();
        let mut worst: f64 = 0.0;
        for (i, s) in self.steps.iter().enumerate() {
            z = g.mul(&s.cont, &z);
            if let Some(j) = &s.jump {
                z = g.mul(j, &z);
            }
            worst = worst.max(z.dist(&self.nodes[i + 1]));
        }
        worst
    }

    pub fn check_invariants(&self) -> Result<()> {
        check_times(&self.times)?;
        let g = &self.group;
        if self.nodes[0].dist(&g.identity()) > 1e-12 {
            return invalid("first node is not the identity");
        }
        for r in &self.jumps {
            let delta = g.mul(&self.nodes[r.index], &g.inv(&r.left_limit));
            if is_identity(g, &delta) {
                return invalid(format!("trivial jump record at {}", r.index));
            }
        }
        let residual = self.recomposition_residual();
        if residual > 1e-10 {
            return Err(Error::Invalid(format!("recomposition residual {residual:e}")));
        }
        Ok(())
    }

    /// Keep every `factor`-th base grid node plus all jump nodes, merging the
    /// continuous increments in between. Driving noise is unchanged.
    pub fn coarsen(&self, factor: usize) -> Result<CadlagPath> {
        if factor == 0 {
            return invalid("coarsening factor must be positive");
        }
        let h = self.base_step;
        let coarse = h * factor as f64;
        let last = self.times.len() - 1;
        let keep: Vec<usize> = (0..=last)
            .filter(|&i| {
                let t = self.times[i];
                let on_grid = ((t / coarse).round() * coarse - t).abs() <= 1e-9 * h.max(1e-300);
                i == 0 || i == last || on_grid || self.steps[i - 1].jump.is_some()
            })
            .collect();
        let g = &self.group;
        let mut times = vec![self.times[0]];
        let mut steps = Vec::with_capacity(keep.len());
        for w in keep.windows(2) {
            let mut cont = g.identity();
            for i in w[0]..w[1] {
                if i + 1 < w[1] && self.steps[i].jump.is_some() {
                    return invalid("jump strictly inside a coarse step");
                }
                cont = g.mul(&self.steps[i].cont, &cont);
            }
            steps.push(Step { cont, jump: self.steps[w[1] - 1].jump.clone() });
            times.push(self.times[w[1]]);
        }
        CadlagPath::from_steps(g.clone(), times, steps, coarse)
    }

    /// Prefix up to and including node `last`.
    pub fn truncated(&self, last: usize) -> CadlagPath {
        let last = last.min(self.nodes.len() - 1);
        CadlagPath {
            group: self.group.clone(),
            times: self.times[..=last].to_vec(),
            nodes: self.nodes[..=last].to_vec(),
            steps: self.steps[..last].to_vec(),
            jumps: self.jumps.iter().filter(|r| r.index <= last).cloned().collect(),
            base_step: self.base_step,
            jumps_known: self.jumps_known,
        }
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || times[0] != 0.0 {
        return invalid("time grid must start at 0");
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("time grid must be strictly increasing");
    }
    Ok(())
}

/// Piecewise-constant embedding of a discrete-time sequence Z₀ = 1, Z₁, …, Z_m
/// with jumps Z_n·Z_{n−1}⁻¹ at integer times.
pub fn discrete_to_cadlag(group: Arc<LieGroup>, samples: &[GroupElement]) -> Result<CadlagPath> {
    if samples.len() < 2 {
        return invalid("need at least Z0 and Z1");
    }
    if samples[0].dist(&group.identity()) > 1e-12 {
        return invalid("Z0 must be the identity");
    }
    let steps = samples
        .windows(2)
        .map(|w| Step { cont: group.identity(), jump: Some(group.mul(&w[1], &group.inv(&w[0]))) })
        .collect();
    let times = (0..samples.len()).map(|i| i as f64).collect();
    CadlagPath::from_steps(group, times, steps, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn discrete_examples() {
        let g = LieGroup::additive(1);
        let s: Vec<_> = [0.0, 1.0, 3.0].iter().map(|v| g.exp(&[*v])).collect();
        let p = discrete_to_cadlag(g.clone(), &s).unwrap();
        assert_eq!(p.jumps().len(), 2);
        let d: Vec<f64> = p.increments().iter().map(|s| g.log(s.jump.as_ref().unwrap()).unwrap()[0]).collect();
        assert_eq!(d, vec![1.0, 2.0]);
        assert_eq!(p.jumps()[0].index, 1);

        let c = vec![g.identity(); 4];
        assert!(discrete_to_cadlag(g, &c).unwrap().jumps().is_empty());

        let so = LieGroup::so(2);
        let s = vec![so.exp(&[0.0]), so.exp(&[PI / 4.0])];
        let p = discrete_to_cadlag(so.clone(), &s).unwrap();
        assert_eq!(p.jumps().len(), 1);
        let delta = p.increments()[0].jump.as_ref().unwrap();
        assert!(delta.dist(&so.exp(&[PI / 4.0])) < 1e-15);
    }

    #[test]
    fn rejects_bad_grids() {
        let g = LieGroup::additive(1);
        let steps = vec![Step { cont: g.identity(), jump: None }];
        assert!(CadlagPath::from_steps(g.clone(), vec![0.0, 0.0], steps.clone(), 1.0).is_err());
        assert!(CadlagPath::from_steps(g, vec![0.0], steps, 1.0).is_err());
    }
}
