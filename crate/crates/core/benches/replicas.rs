//! Replica simulation: rayon pool versus a plain loop. On a single core the two
//! should be within noise of each other.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gaugesde::drivers::{DriverSpec, Grid, JumpLaw, JumpMeasure, LevyTriplet, PreparedDriver};
use gaugesde::gauge::{parse_action, random_transform, AngleOfPast};
use gaugesde::lie::LieGroup;
use gaugesde::par::{map_indexed, map_indexed_sequential};
use nalgebra::{DMatrix, DVector};
use std::hint::black_box;

fn replicas(c: &mut Criterion) {
    let group = LieGroup::additive(2);
    let t = LevyTriplet::new(group.clone(), DVector::zeros(2), DMatrix::identity(2, 2), Some(JumpMeasure::new(2.0, JumpLaw::IsotropicGaussian { sigma: 0.5 })))
        .unwrap();
    let driver = PreparedDriver::new(DriverSpec::Levy(t)).unwrap();
    let grid = Grid::new(1.0, 1.0 / 256.0).unwrap();
    let action = parse_action("rotation:2", &group).unwrap();
    let gauge = AngleOfPast::transformed(group.clone(), 0);
    let one = |i: usize| {
        let z = driver.simulate(&grid, 1, i as u64).unwrap();
        let zt = random_transform(action.as_ref(), &gauge, &z).unwrap();
        zt.path.nodes().last().unwrap().0[(0, 2)]
    };

    let mut g = c.benchmark_group("transformed_replicas");
    g.sample_size(10);
    for n in [64usize, 256] {
        g.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| b.iter(|| black_box(map_indexed(n, one))));
        g.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| b.iter(|| black_box(map_indexed_sequential(n, one))));
    }
    g.finish();
}

criterion_group!(benches, replicas);
criterion_main!(benches);
