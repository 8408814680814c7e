use cubesig_core::engine::{monomial, Quadrature};
use cubesig_core::fixtures::{worked_example_index, worked_example_map};
use cubesig_core::jacobian_field;
use cubesig_core::oracles::mc_monomial;

#[test]
fn exact_rule_agrees_with_monte_carlo() {
    let field = jacobian_field(&worked_example_map(16).unwrap()).unwrap();
    let idx = worked_example_index();
    let exact = monomial(&field, &idx, &Quadrature::CellExact, None).unwrap();
    let (mc, se) = mc_monomial(&field, &idx, 400_000, 5, None).unwrap();
    assert!((exact - mc).abs() <= 3.0 * se, "exact {exact} mc {mc} se {se}");
}

#[test]
fn strict_rule_approaches_the_exact_value() {
    let idx = worked_example_index();
    let mut gaps = Vec::new();
    for cells in [8, 16, 32] {
        let field = jacobian_field(&worked_example_map(cells).unwrap()).unwrap();
        let strict = monomial(&field, &idx, &Quadrature::StrictGrid, None).unwrap();
        let exact = monomial(&field, &idx, &Quadrature::CellExact, None).unwrap();
        gaps.push((strict - exact).abs());
    }
    // first order: the gap roughly halves per doubling
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2]);
    assert!(gaps[1] / gaps[2] > 1.5);
}

#[test]
fn monte_carlo_uses_the_seed() {
    let field = jacobian_field(&worked_example_map(8).unwrap()).unwrap();
    let idx = worked_example_index();
    let a = mc_monomial(&field, &idx, 5000, 1, None).unwrap();
    let b = mc_monomial(&field, &idx, 5000, 1, None).unwrap();
    let c = mc_monomial(&field, &idx, 5000, 2, None).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
}
