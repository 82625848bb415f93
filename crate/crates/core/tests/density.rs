use maxent_core::*;

fn optimal_density(size: usize) -> DensitySurface {
    let grid = make_grid(size, size, 1.0).unwrap();
    let cfg = SchemeConfig::default();
    let surface = solve_hjb(&grid, &cfg).unwrap();
    let control = optimal_control_field(&surface, &cfg);
    solve_forward_density(VolatilityModel::EarlyTermination(&control), &grid, 0.5).unwrap()
}

#[test]
fn early_termination_mass_ledger() {
    let d = optimal_density(200);
    let g = *d.grid();
    assert!((survival_probability(&d, 0.0).unwrap() - 1.0).abs() < 1e-12);
    for m in 0..g.levels() {
        assert!((d.total_mass(m) - 1.0).abs() < 1e-10, "level {m}");
        assert!(d.values().row(m).iter().all(|&q| q >= 0.0));
    }
    for m in 1..g.levels() {
        assert!(d.interior_mass(m) <= d.interior_mass(m - 1) + 1e-14);
        assert!(d.absorbed_left()[m] >= d.absorbed_left()[m - 1]);
        // the symmetric start splits absorption evenly
        assert!((d.absorbed_left()[m] - d.absorbed_right()[m]).abs() < 1e-10);
    }
    assert!(survival_probability(&d, 0.123_456).is_err());
}

#[test]
fn early_termination_absorbs_most_mass() {
    let d = optimal_density(200);
    let g = *d.grid();
    let s: Vec<f64> = [0.5, 0.9, 0.99].iter().map(|&t| survival_probability(&d, t).unwrap()).collect();
    assert!(s[0] > s[1] && s[1] > s[2]);
    assert!(s[2] > 0.0 && s[0] < 0.5);
    assert!((d.absorbed(g.steps()) + d.interior_mass(g.steps()) - 1.0).abs() < 1e-10);
}

fn full_length_leak(size: usize) -> f64 {
    let grid = make_grid(size, 400, 1.0).unwrap();
    let d = solve_forward_density(VolatilityModel::FullLength { horizon: 1.0 }, &grid, 0.5).unwrap();
    let last = grid.steps();
    assert!((d.absorbed_left()[last] - 0.5).abs() < 1e-10);
    assert!((d.absorbed_right()[last] - 0.5).abs() < 1e-10);
    assert!(d.interior_mass(last) < 1e-12);
    1.0 - survival_probability(&d, 0.99).unwrap()
}

#[test]
fn full_length_boundary_leak_is_first_order() {
    // mass reaching the boundary before T is pure discretisation error
    let leaks: Vec<f64> = [250, 500, 1000].into_iter().map(full_length_leak).collect();
    assert!(leaks[0] < 0.1);
    for w in leaks.windows(2) {
        assert!(w[0] / w[1] > 1.8, "{leaks:?}");
    }
}

#[test]
fn off_centre_start_is_a_martingale() {
    let grid = make_grid(100, 200, 1.0).unwrap();
    let d = solve_forward_density(VolatilityModel::FullLength { horizon: 1.0 }, &grid, 0.3).unwrap();
    let last = grid.steps();
    assert!((d.absorbed_right()[last] - 0.3).abs() < 0.02);
    // the mean of X is conserved up to the boundary flux discretisation
    for m in [0, 50, 100, 150] {
        let row = d.values().row(m);
        let mean: f64 = (0..grid.nodes()).map(|n| grid.x(n) * row[n]).sum::<f64>() * grid.h() + d.absorbed_right()[m];
        assert!((mean - 0.3).abs() < 5e-3, "level {m}: {mean}");
    }
}

#[test]
fn cdf_ends_at_one() {
    let d = optimal_density(100);
    for m in [0, 50, 100] {
        let cdf = d.cdf(m);
        assert!(cdf.windows(2).all(|w| w[1] >= w[0]));
        assert!((cdf[cdf.len() - 1] - 1.0).abs() < 1e-10);
    }
}

#[test]
fn summary_serialises() {
    let d = optimal_density(20);
    let s = d.summary();
    assert_eq!(s.times.len(), 21);
    let json = serde_json::to_string(&s).unwrap();
    let back: MassSummary = serde_json::from_str(&json).unwrap();
    assert_eq!(back, s);
}

#[test]
fn control_from_another_grid_is_rejected() {
    let cfg = SchemeConfig::default();
    let g = make_grid(20, 20, 1.0).unwrap();
    let control = optimal_control_field(&solve_hjb(&g, &cfg).unwrap(), &cfg);
    let other = make_grid(40, 20, 1.0).unwrap();
    assert!(solve_forward_density(VolatilityModel::EarlyTermination(&control), &other, 0.5).is_err());
}
