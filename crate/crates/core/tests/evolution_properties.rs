use std::f64::consts::PI;

use proptest::prelude::*;
use wavectl_core::*;

#[test]
fn autonomous_table_matches_closed_forms() {
    let grid = TimeGrid::<f64>::with_steps(PI, 3142).unwrap();
    let table = EvolutionTable::build(16, Coefficient::zero(), grid, None).unwrap();
    let mut worst = 0.0f64;
    for &j in &table.sample_anchors() {
        for i in (j..=grid.n_steps()).step_by(7) {
            let tau = grid.time(i) - grid.time(j);
            for n in -16i64..=16 {
                let p = table.pair_at(n, i, j);
                worst = worst.max((p.c.re - autonomous_cosine(n, tau)).abs() + p.c.im.abs());
                worst = worst.max((p.s.re - autonomous_sine(n, tau)).abs() + p.s.im.abs());
            }
        }
    }
    assert!(worst <= 1e-8, "{worst:e}");
}

#[test]
fn growth_bound_for_three_coefficients() {
    let grid = TimeGrid::<f64>::new(2.0, 1e-3).unwrap();
    for b in [
        Coefficient::Constant(0.5),
        Coefficient::cosine(0.3),
        Coefficient::Sinusoidal { amplitude: 1.0, frequency: 3.0, phase: 0.4 },
    ] {
        let table = EvolutionTable::build(16, b, grid, None).unwrap();
        let (checked, violated) = growth_bound_violations(&table, 1e-12);
        assert!(checked > 0);
        assert_eq!(violated, 0);
    }
}

#[test]
fn axioms_for_cosine_coefficient() {
    let grid = TimeGrid::<f64>::new(PI, PI / 2000.0).unwrap();
    let table = EvolutionTable::build(8, Coefficient::cosine(0.3), grid, None).unwrap();
    let r = check_evolution_axioms(&table);
    assert_eq!(r.s_diagonal, 0.0);
    assert!(r.forward_quotient <= 1e-4 && r.backward_quotient <= 1e-4, "{r:?}");
    assert!(r.ode_residual <= 1e-6, "{r:?}");
    assert!(r.lipschitz.is_finite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adjoint_pairing(seed in 0u64..1000, t in 0.0f64..1.0, s in 0.0f64..1.0) {
        let (t, s) = if t >= s { (t, s) } else { (s, t) };
        let grid = TimeGrid::<f64>::new(1.0, 1e-2).unwrap();
        let table = EvolutionTable::build(3, Coefficient::cosine(0.3), grid, None).unwrap();
        let x = SpectralField::from_fn(3, false, |n| Cplx::new((seed as f64 + n as f64).sin(), (n as f64).cos())).unwrap();
        let y = SpectralField::from_fn(3, false, |n| Cplx::new((n as f64 * 0.7).cos(), (seed as f64 * 0.1).sin())).unwrap();
        let lhs = table.apply_s(t, s, &x).unwrap().inner(&y);
        let rhs = x.inner(&table.apply_s_adjoint(t, s, &y).unwrap());
        prop_assert!((lhs - rhs).norm() <= 1e-12);
    }

    #[test]
    fn wronskian_composition_keeps_diagonal_exact(i in 0usize..=100, n in -3i64..=3) {
        let grid = TimeGrid::<f64>::new(1.0, 1e-2).unwrap();
        let table = EvolutionTable::build(3, Coefficient::cosine(0.3), grid, None).unwrap();
        let p = table.pair_at(n, i, i);
        prop_assert_eq!(p.s, Cplx::new(0.0, 0.0));
        prop_assert_eq!(p.c, Cplx::new(1.0, 0.0));
        prop_assert_eq!(p.ds, Cplx::new(1.0, 0.0));
    }
}
