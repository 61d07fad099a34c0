use gaugesde::drivers::{DriverSpec, Grid, JumpLaw, JumpMeasure, LevyTriplet, PreparedDriver};
use gaugesde::gauge::{
    compose_sde, invert_transform, parse_action, random_transform, AngleOfPast, ConstantGauge, GaugeAction, GaugeElement, PairedControl,
};
use gaugesde::geo_sde::{integrate_jump_map, AdditiveSde, ConstantControl, GeometricSde, LeftMultiplication, MarcusSde, Param};
use gaugesde::lie::LieGroup;
use gaugesde::rng::{role, stream};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use std::sync::Arc;

fn group_strategy() -> impl Strategy<Value = Arc<LieGroup>> {
    prop_oneof![
        (1usize..4).prop_map(LieGroup::additive),
        (2usize..4).prop_map(LieGroup::so),
        Just(LieGroup::product(LieGroup::additive(2), LieGroup::additive(1))),
        Just(LieGroup::product(LieGroup::so(2), LieGroup::additive(1))),
    ]
}

fn element(g: &LieGroup, seed: u64, k: u64, scale: f64) -> gaugesde::lie::GroupElement {
    g.random_element(&mut stream(seed, k, role::CONFIG), scale)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn group_axioms(g in group_strategy(), seed in any::<u64>()) {
        let (a, b, c) = (element(&g, seed, 0, 0.7), element(&g, seed, 1, 0.7), element(&g, seed, 2, 0.7));
        let e = g.identity();
        prop_assert!(g.mul(&a, &e).dist(&a) < 1e-12);
        prop_assert!(g.mul(&e, &a).dist(&a) < 1e-12);
        prop_assert!(g.mul(&a, &g.inv(&a)).dist(&e) < 1e-12);
        let l = g.mul(&g.mul(&a, &b), &c);
        let r = g.mul(&a, &g.mul(&b, &c));
        prop_assert!(l.dist(&r) < 1e-12);
        prop_assert!(g.membership_residual(&l) < 1e-10);
    }

    #[test]
    fn exp_log_round_trip(g in group_strategy(), seed in any::<u64>()) {
        let mut rng = stream(seed, 0, role::CONFIG);
        let v: Vec<f64> = (0..g.dim()).map(|_| rand::Rng::random_range(&mut rng, -0.4..0.4)).collect();
        let back = g.log(&g.exp(&v)).unwrap();
        for (x, y) in v.iter().zip(back.iter()) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn truncation_is_rotation_equivariant(theta in -3.1f64..3.1, x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let g = LieGroup::additive(2);
        let b = GaugeElement::rotation2(theta).0;
        let v = DVector::from_vec(vec![x, y]);
        let hv = g.truncation(&g.exp(v.as_slice()));
        let hbv = g.truncation(&g.exp((&b * &v).as_slice()));
        prop_assert!((hbv - &b * hv).norm() < 1e-12);
    }

    #[test]
    fn truncation_is_identity_near_one(g in group_strategy(), seed in any::<u64>()) {
        // small elements sit inside the region where h agrees with log
        let z = element(&g, seed, 0, 0.05);
        let d = (g.truncation(&z) - g.log(&z).unwrap()).norm();
        prop_assert!(d < 1e-12);
    }

    #[test]
    fn action_axioms(which in 0usize..5, seed in any::<u64>()) {
        let (spec, group) = [
            ("rotation:2", LieGroup::additive(2)),
            ("scaling", LieGroup::additive(3)),
            ("qshear", LieGroup::additive(2)),
            ("conjugation:3", LieGroup::so(3)),
            ("first-factor:rotation:2", LieGroup::product(LieGroup::additive(2), LieGroup::additive(1))),
        ][which].clone();
        let action = parse_action(spec, &group).unwrap();
        let mut rng = stream(seed, 0, role::GAUGE_SAMPLE);
        let (a, b) = (action.sample(&mut rng), action.sample(&mut rng));
        let z = element(&group, seed, 1, 0.8);
        let w = element(&group, seed, 2, 0.8);
        prop_assert!(action.apply(&action.identity(), &z).dist(&z) < 1e-12);
        let ab = action.apply(&action.compose(&a, &b), &z);
        prop_assert!(ab.dist(&action.apply(&a, &action.apply(&b, &z))) < 1e-10);
        prop_assert!(action.apply(&action.inverse(&a), &action.apply(&a, &z)).dist(&z) < 1e-10);
        prop_assert!(action.apply(&a, &group.identity()).dist(&group.identity()) < 1e-12);
        if action.is_automorphism() {
            let lhs = action.apply(&a, &group.mul(&z, &w));
            let rhs = group.mul(&action.apply(&a, &z), &action.apply(&a, &w));
            prop_assert!(lhs.dist(&rhs) < 1e-10);
        }
    }

    #[test]
    fn simulated_paths_satisfy_invariants(rate in 0.0f64..20.0, k in 3i32..7, seed in any::<u64>(), so2 in any::<bool>()) {
        let group = if so2 { LieGroup::so(2) } else { LieGroup::additive(2) };
        let n = group.dim();
        let jumps = (rate > 0.0).then(|| JumpMeasure::new(rate, JumpLaw::IsotropicGaussian { sigma: 0.3 }));
        let t = LevyTriplet::new(group.clone(), DVector::from_element(n, 0.1), DMatrix::identity(n, n) * 0.5, jumps).unwrap();
        let d = PreparedDriver::new(DriverSpec::Levy(t)).unwrap();
        let z = d.simulate(&Grid::new(1.0, 2f64.powi(-k)).unwrap(), seed, 0).unwrap();
        prop_assert!(z.check_invariants().is_ok());
        prop_assert!(z.recomposition_residual() < 1e-10);
        prop_assert!(z.times().windows(2).all(|w| w[1] > w[0]));
        prop_assert!((z.horizon() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jump_map_fixes_state_at_identity(x in -2.0f64..2.0, y in -2.0f64..2.0) {
        let g = LieGroup::additive(2);
        let x0 = [x, y];
        let sdes: Vec<Box<dyn GeometricSde>> = vec![
            Box::new(AdditiveSde::identity(2)),
            Box::new(LeftMultiplication::new(g.clone())),
            Box::new(MarcusSde::new(g.clone(), 2, vec![
                Arc::new(|x: &[f64]| vec![x[1].sin(), 1.0]),
                Arc::new(|x: &[f64]| vec![1.0, x[0] * 0.3]),
            ]).unwrap()),
        ];
        for s in &sdes {
            let x = if s.state_dim() == 2 { x0.to_vec() } else { g.exp(&x0).0.transpose().as_slice().to_vec() };
            let out = s.psi(&Param::none(), &x, &g.identity());
            for (a, b) in out.iter().zip(&x) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transform_round_trip(seed in any::<u64>(), rate in 0.0f64..10.0) {
        let group = LieGroup::additive(2);
        let jumps = (rate > 0.0).then(|| JumpMeasure::new(rate, JumpLaw::IsotropicGaussian { sigma: 0.5 }));
        let t = LevyTriplet::new(group.clone(), DVector::zeros(2), DMatrix::identity(2, 2), jumps).unwrap();
        let z = PreparedDriver::new(DriverSpec::Levy(t)).unwrap().simulate(&Grid::new(1.0, 1.0 / 64.0).unwrap(), seed, 0).unwrap();
        let action = parse_action("rotation:2", &group).unwrap();
        let gauge = AngleOfPast::transformed(group.clone(), 0);
        let zt = random_transform(action.as_ref(), &gauge, &z).unwrap();
        let back = invert_transform(action.as_ref(), &gauge, &zt.path).unwrap();
        for (a, b) in z.nodes().iter().zip(back.nodes()) {
            prop_assert!(a.dist(b) < 1e-12);
        }
    }

    #[test]
    fn composition_identity(seed in any::<u64>(), theta in -3.0f64..3.0) {
        // integrating Ψ against Ξ_G(dZ) equals integrating Ψ̂ = Ψ∘Ξ against Z
        let group = LieGroup::additive(2);
        let t = LevyTriplet::new(group.clone(), DVector::zeros(2), DMatrix::identity(2, 2), Some(JumpMeasure::new(3.0, JumpLaw::IsotropicGaussian { sigma: 0.4 }))).unwrap();
        let z = PreparedDriver::new(DriverSpec::Levy(t)).unwrap().simulate(&Grid::new(1.0, 1.0 / 64.0).unwrap(), seed, 0).unwrap();
        let action: Arc<dyn GaugeAction> = parse_action("rotation:2", &group).unwrap();
        let gauge = Arc::new(ConstantGauge(GaugeElement::rotation2(theta)));
        let base: Arc<dyn GeometricSde> = Arc::new(MarcusSde::new(group.clone(), 2, vec![
            Arc::new(|x: &[f64]| vec![x[1].sin(), 1.0]),
            Arc::new(|x: &[f64]| vec![1.0, (0.3 * x[0]).cos()]),
        ]).unwrap());
        let zt = random_transform(action.as_ref(), gauge.as_ref(), &z).unwrap().path;
        let direct = integrate_jump_map(base.as_ref(), &ConstantControl::default(), &zt, &[0.1, -0.2]).unwrap();
        let composed = compose_sde(base.clone(), action.clone()).unwrap();
        let control = PairedControl { control: Arc::new(ConstantControl::default()), gauge };
        let via = integrate_jump_map(&composed, &control, &z, &[0.1, -0.2]).unwrap();
        for (a, b) in direct.states.iter().zip(&via.states) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
