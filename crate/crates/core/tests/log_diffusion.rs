use maxent_core::log_diffusion::max_excess;
use maxent_core::*;
use proptest::prelude::*;

fn regularised(n: u32) -> SchemeConfig {
    SchemeConfig {
        terminal_regularisation_n: Some(n),
        ..SchemeConfig::default()
    }
}

fn gap(size: usize, n: u32) -> f64 {
    let grid = make_grid(size, size, 1.0).unwrap();
    let hjb = solve_hjb(&grid, &regularised(n)).unwrap();
    let p = solve_log_diffusion(&grid, &LadderConfig::with_n(n)).unwrap();
    cross_solver_gap(&hjb, &entropy_from_p(&p)).unwrap()
}

#[test]
fn stationary_pair_agrees_exactly() {
    assert!(gap(40, 1) < 1e-12);
    let grid = make_grid(30, 30, 1.0).unwrap();
    let e = entropy_from_p(&PField::ones(grid));
    assert!(e.sup_distance(&ValueSurface::stationary(grid)).unwrap() < 1e-12);
}

#[test]
fn representation_gap_shrinks_under_refinement() {
    for n in [2, 4] {
        let coarse = gap(50, n);
        let fine = gap(100, n);
        assert!(coarse > 0.0);
        assert!(coarse / fine >= 1.4, "n = {n}: {coarse} -> {fine}");
    }
}

#[test]
fn ladder_is_monotone_in_n() {
    let grid = make_grid(40, 40, 1.0).unwrap();
    let members = solve_ladder(&grid, &DEFAULT_LADDER, &LadderConfig::default()).unwrap();
    let surfaces: Vec<_> = members.iter().map(entropy_from_p).collect();
    for i in 1..members.len() {
        assert!(max_excess(members[i].field(), members[i - 1].field()).0 <= 1e-9);
        assert!(max_excess(surfaces[i].field(), surfaces[i - 1].field()).0 <= 1e-9);
    }
    let limit = ladder_limit(&grid, &DEFAULT_LADDER, 1e-9).unwrap();
    assert_eq!(limit.regularisation_n(), 16);
    assert_eq!(&limit, members.last().unwrap());
}

#[test]
fn ladder_members_solve_in_any_order() {
    let grid = make_grid(20, 20, 1.0).unwrap();
    let forward = solve_ladder(&grid, &[1, 4, 16], &LadderConfig::default()).unwrap();
    let backward = solve_ladder(&grid, &[16, 4, 1], &LadderConfig::default()).unwrap();
    assert_eq!(forward[0], backward[2]);
    assert_eq!(forward[2], backward[0]);
}

#[test]
fn represented_surface_satisfies_theorem1() {
    let grid = make_grid(60, 60, 1.0).unwrap();
    let p = solve_log_diffusion(&grid, &LadderConfig::with_n(16)).unwrap();
    let report = check_theorem1(&entropy_from_p(&p));
    assert!(report.all_passed(), "{report}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn p_stays_between_initial_value_and_one(size in 4usize..40, m in 2usize..40, n in 1u32..32, t in 0.1f64..4.0) {
        let grid = make_grid(size, m, t).unwrap();
        let p = solve_log_diffusion(&grid, &LadderConfig::with_n(n)).unwrap();
        let lo = 1.0 / f64::from(n);
        for v in p.field().as_slice() {
            prop_assert!(*v >= lo - 1e-12 && *v <= 1.0 + 1e-12, "{v}");
        }
        for level in 1..grid.levels() {
            for x in 0..grid.nodes() {
                // p grows towards the boundary value 1
                prop_assert!(p.get(level, x) >= p.get(level - 1, x) - 1e-12);
            }
        }
    }
}
