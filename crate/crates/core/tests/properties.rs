use atwflow_core::anisotropy::Family;
use atwflow_core::incremental::{perimeter, SolverSettings, StepOperator};
use atwflow_core::levelset::{self, LevelLadder, Reconstruction, Variant};
use atwflow_core::verification::submodularity_defect;
use atwflow_core::{AnisotropyModel, Expr, Grid, ScalarField, SetState, Shape};
use proptest::prelude::*;

fn disk() -> impl Strategy<Value = Shape> {
    (0.3f64..0.7, 0.3f64..0.7, 0.08f64..0.2).prop_map(|(x, y, r)| Shape::disk([x, y], r))
}

fn ellipse() -> impl Strategy<Value = Shape> {
    (0.35f64..0.65, 0.35f64..0.65, 0.1f64..0.25, 0.06f64..0.15, 0.0f64..3.1).prop_map(|(x, y, a, b, angle)| {
        Shape::Ellipse { center: [x, y], semi_axes: [a, b], angle }
    })
}

fn metric() -> impl Strategy<Value = AnisotropyModel> {
    prop_oneof![
        Just(AnisotropyModel::euclidean()),
        (1.0f64..3.0, -0.4f64..0.4, 1.0f64..3.0)
            .prop_map(|(a, b, c)| AnisotropyModel::new(Family::riemannian_const([[a, b], [b, c]])).unwrap()),
        (-0.4f64..0.4, -0.4f64..0.4).prop_map(|(a, b)| AnisotropyModel::new(Family::Drifted { drift: [a, b] }).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn perimeter_is_submodular(e in prop_oneof![disk(), ellipse()], f in prop_oneof![disk(), ellipse()], phi in metric()) {
        let g = Grid::unit(96);
        let (a, b) = (SetState::from_shape(g, &e), SetState::from_shape(g, &f));
        let scale = perimeter(&a, &phi).unwrap() + perimeter(&b, &phi).unwrap();
        let d = submodularity_defect(&a, &b, &phi).unwrap();
        prop_assert!(d <= 0.02 * scale, "defect {d} vs {scale}");
    }

    #[test]
    fn symmetric_difference_is_a_metric(a in disk(), b in disk(), c in ellipse()) {
        let g = Grid::unit(64);
        let [a, b, c] = [a, b, c].map(|s| SetState::from_shape(g, &s));
        let (ab, bc, ac) = (a.symmetric_difference_area(&b), b.symmetric_difference_area(&c), a.symmetric_difference_area(&c));
        prop_assert!(ac <= ab + bc + 1e-12);
        prop_assert_eq!(ab, b.symmetric_difference_area(&a));
        prop_assert_eq!(a.symmetric_difference_area(&a), 0.0);
    }

    #[test]
    fn ladders_bracket_their_function(cx in 0.3f64..0.7, cy in 0.3f64..0.7, slope in 0.5f64..2.0, m in 2usize..24) {
        let g = Grid::unit(40);
        let u = ScalarField::from_fn(g, |x| slope * (0.4 - ((x[0] - cx).powi(2) + (x[1] - cy).powi(2)).sqrt()));
        for variant in [Variant::Plus, Variant::Minus] {
            let lad = LevelLadder::from_function(&u, m, variant).unwrap();
            prop_assert_eq!(lad.nesting_defect(), 0);
            let lo = levelset::reconstruct(&lad, Reconstruction::Lower);
            let up = levelset::reconstruct(&lad, Reconstruction::Upper);
            prop_assert_eq!(levelset::ordering_violations(&lo, &up), 0);
            for ((l, v), h) in lo.data().iter().zip(u.data()).zip(up.data()) {
                prop_assert!(*l <= *v + 1e-12 && *v <= *h + 1e-12);
            }
        }
    }

    #[test]
    fn enforcing_nesting_is_idempotent(shapes in proptest::collection::vec(disk(), 2..6)) {
        let g = Grid::unit(32);
        let mut sets: Vec<SetState> = shapes.iter().map(|s| SetState::from_shape(g, s)).collect();
        levelset::enforce_nesting(&mut sets);
        for w in sets.windows(2) {
            prop_assert_eq!(w[1].cells_not_in(&w[0]), 0);
        }
        prop_assert_eq!(levelset::enforce_nesting(&mut sets), 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn one_step_preserves_inclusion(x in 0.45f64..0.55, y in 0.45f64..0.55, r in 0.12f64..0.18, grow in 0.04f64..0.1, f in -2.0f64..2.0) {
        let g = Grid::unit(48);
        let m = AnisotropyModel::euclidean();
        let forcing = Expr::Const(f);
        let op = StepOperator::new(&g, &m, &m, &forcing, SolverSettings::default()).unwrap();
        let inner = SetState::from_shape(g, &Shape::disk([x, y], r));
        let outer = SetState::from_shape(g, &Shape::disk([0.5, 0.5], r + grow + 0.05));
        prop_assume!(inner.cells_not_in(&outer) == 0);
        let a = op.step(&inner, 2e-3, 0.0).unwrap();
        let b = op.step(&outer, 2e-3, 0.0).unwrap();
        prop_assert_eq!(a.e_min.cells_not_in(&b.e_min), 0);
        prop_assert_eq!(a.e_max.cells_not_in(&b.e_max), 0);
        prop_assert_eq!(a.e_min.cells_not_in(&a.e_max), 0);
    }

    #[test]
    fn one_step_commutes_with_cell_shifts(dx in -4i32..=4, dy in -4i32..=4) {
        let g = Grid::unit(48);
        let s = g.spacing;
        let m = AnisotropyModel::euclidean();
        let forcing = Expr::Const(0.0);
        let op = StepOperator::new(&g, &m, &m, &forcing, SolverSettings::default()).unwrap();
        let base = SetState::from_shape(g, &Shape::disk([0.5, 0.5], 0.2));
        let moved = SetState::from_shape(g, &Shape::disk([0.5 + dx as f64 * s, 0.5 + dy as f64 * s], 0.2));
        let a = op.step(&base, 2e-3, 0.0).unwrap().e_min;
        let b = op.step(&moved, 2e-3, 0.0).unwrap().e_min;
        let mut mismatched = 0;
        for j in 8..40 {
            for i in 8..40 {
                let (si, sj) = ((i as i32 + dx) as usize, (j as i32 + dy) as usize);
                if a.contains(i, j) != b.contains(si, sj) {
                    mismatched += 1;
                }
            }
        }
        prop_assert_eq!(mismatched, 0);
    }
}
