use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

use cubesig_core::engine::{evaluate_indices, monomial, signature, Quadrature};
use cubesig_core::fixtures;
use cubesig_core::index::{
    act_on_level_index, bd_act_on_perms, enumerate_hyperoctahedral, enumerate_injections,
};
use cubesig_core::map::{bd_transform, metric_mu, reparametrize, MetricKind};
use cubesig_core::tensor::{bd_act, compound_matrix, induced_map, normalize, shuffle_product};
use cubesig_core::verify::linear_image;
use cubesig_core::{jacobian_field, Functional, LevelIndex, NormalizationConfig};

const QUADS: [Quadrature; 2] = [Quadrature::StrictGrid, Quadrature::CellExact];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn relabeling_points_is_invisible(seed in any::<u64>(), m in 1usize..=3) {
        let mut rng = fixtures::rng(seed);
        let f = fixtures::random_field(&mut rng, 2, 3, &[4, 5]).unwrap();
        let idx = fixtures::random_index(&mut rng, f.forms(), 2, m);
        let sigma = fixtures::random_permutation(&mut rng, m);
        let (a, b) = act_on_level_index(&sigma, &idx).unwrap();
        for q in &QUADS {
            let lhs = monomial(&f, &a, q, None).unwrap();
            let rhs = monomial(&f, &b, q, None).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }
    }

    #[test]
    fn breakpoint_relabeling_is_invisible(seed in any::<u64>(), m in 1usize..=3) {
        let mut rng = fixtures::rng(seed);
        let x = fixtures::random_map(&mut rng, 3, &[5, 4]).unwrap();
        let maps = vec![
            fixtures::random_breakpoints(&mut rng, 5),
            fixtures::random_breakpoints(&mut rng, 4),
        ];
        let y = reparametrize(&x, &maps).unwrap();
        let (fx, fy) = (jacobian_field(&x).unwrap(), jacobian_field(&y).unwrap());
        let idx = fixtures::random_index(&mut rng, fx.forms(), 2, m);
        for q in &QUADS {
            let a = monomial(&fx, &idx, q, None).unwrap();
            let b = monomial(&fy, &idx, q, None).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn hyperoctahedral_equivariance(seed in any::<u64>(), g in 0usize..8, m in 1usize..=3) {
        let mut rng = fixtures::rng(seed);
        let g = &enumerate_hyperoctahedral(2)[g];
        let x = fixtures::random_map(&mut rng, 3, &[4, 4]).unwrap();
        let idx = fixtures::random_index(&mut rng, &enumerate_injections(2, 3).unwrap(), 2, m);
        let lhs = monomial(&jacobian_field(&bd_transform(&x, g).unwrap()).unwrap(), &idx, &Quadrature::CellExact, None).unwrap();
        let (moved, _) = bd_act_on_perms(g, idx.perms()).unwrap();
        let source = LevelIndex::new(idx.forms().to_vec(), moved).unwrap();
        let base = evaluate_indices(&jacobian_field(&x).unwrap(), &[source], &Quadrature::CellExact, None).unwrap();
        let rhs = bd_act(g, &base).unwrap().get(&idx);
        prop_assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn linear_equivariance(seed in any::<u64>(), rows in 2usize..=4) {
        let mut rng = fixtures::rng(seed);
        let x = fixtures::random_map(&mut rng, 3, &[4, 4]).unwrap();
        let a = fixtures::random_matrix(&mut rng, rows, 3);
        let lhs = signature(&jacobian_field(&linear_image(&a, &x).unwrap()).unwrap(), 2, &Quadrature::StrictGrid).unwrap();
        let rhs = induced_map(&a, &signature(&jacobian_field(&x).unwrap(), 2, &Quadrature::StrictGrid).unwrap()).unwrap();
        prop_assert!(lhs.sub(&rhs).norm() <= 1e-9 * rhs.norm());
    }

    #[test]
    fn compound_is_multiplicative(seed in any::<u64>(), d in 1usize..=3) {
        let mut rng = fixtures::rng(seed);
        let a = fixtures::random_matrix(&mut rng, 4, 3);
        let b = fixtures::random_matrix(&mut rng, 3, 5);
        let lhs = compound_matrix(&(&a * &b), d).unwrap();
        let rhs: DMatrix<f64> = compound_matrix(&a, d).unwrap() * compound_matrix(&b, d).unwrap();
        prop_assert!((&lhs - &rhs).norm() <= 1e-10 * rhs.norm().max(1.0));
    }

    #[test]
    fn shuffle_identity_is_exact_for_the_cell_exact_rule(seed in any::<u64>(), m1 in 1usize..=2) {
        let mut rng = fixtures::rng(seed);
        let x = fixtures::random_map(&mut rng, 3, &[4, 3]).unwrap();
        let f = jacobian_field(&x).unwrap();
        let forms = f.forms().to_vec();
        let a = Functional::basis(2, 3, fixtures::random_index(&mut rng, &forms, 2, m1)).unwrap();
        let b = Functional::basis(2, 3, fixtures::random_index(&mut rng, &forms, 2, 3 - m1)).unwrap();
        let ab = shuffle_product(&a, &b).unwrap();
        let idx: Vec<LevelIndex> = a.terms().chain(b.terms()).chain(ab.terms()).map(|(_, k)| k.clone()).collect();
        let sig = evaluate_indices(&f, &idx, &Quadrature::CellExact, None).unwrap();
        prop_assert!((ab.pair(&sig) - a.pair(&sig) * b.pair(&sig)).abs() <= 1e-12);
    }

    #[test]
    fn metrics_satisfy_triangle_inequality(seed in any::<u64>()) {
        let mut rng = fixtures::rng(seed);
        let bps = vec![fixtures::random_breakpoints(&mut rng, 4), fixtures::random_breakpoints(&mut rng, 3)];
        let maps: Vec<_> = (0..3)
            .map(|_| fixtures::SmoothMap::random(&mut rng, 2, 3).sample(bps.clone()).unwrap())
            .collect();
        for kind in [MetricKind::One, MetricKind::Inf] {
            let ab = metric_mu(&maps[0], &maps[1], kind).unwrap();
            let bc = metric_mu(&maps[1], &maps[2], kind).unwrap();
            let ac = metric_mu(&maps[0], &maps[2], kind).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert_eq!(metric_mu(&maps[0], &maps[0], kind).unwrap(), 0.0);
        }
    }

    #[test]
    fn normalization_respects_cap_and_is_monotone(seed in any::<u64>(), cap in 1.5f64..6.0) {
        let mut rng = fixtures::rng(seed);
        let x = fixtures::random_map(&mut rng, 3, &[3, 3]).unwrap();
        let cfg = NormalizationConfig::with_cap(cap);
        let base = signature(&jacobian_field(&x).unwrap(), 3, &Quadrature::StrictGrid).unwrap();
        let mut last_lambda = f64::INFINITY;
        for k in 0..6 {
            let scaled = cubesig_core::tensor::graded_scale(1.0 + 2.0 * k as f64, &base);
            let (out, lambda) = normalize(&scaled, &cfg).unwrap();
            prop_assert!(out.norm() <= cap + 1e-9);
            prop_assert!(lambda <= last_lambda);
            last_lambda = lambda;
        }
    }
}

#[test]
fn random_levels_cover_each_level() {
    // guard against a fixture that silently never draws some level
    let mut rng = fixtures::rng(3);
    let forms = enumerate_injections(2, 3).unwrap();
    let mut seen = [false; 4];
    for _ in 0..50 {
        let m = rng.random_range(1..=3);
        seen[fixtures::random_index(&mut rng, &forms, 2, m).level()] = true;
    }
    assert!(seen[1] && seen[2] && seen[3]);
}
