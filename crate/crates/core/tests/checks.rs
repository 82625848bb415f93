use maxent_core::checks::{hamiltonian_residual, log_pde_residual};
use maxent_core::*;

fn solve(size: usize, horizon: f64, steps: usize) -> Result<ValueSurface> {
    solve_hjb(&make_grid(size, steps, horizon)?, &SchemeConfig::default())
}

#[test]
fn solved_surfaces_pass_theorem1() {
    for size in [20, 50, 100] {
        let report = check_theorem1(&solve(size, 1.0, size).unwrap());
        assert!(report.all_passed(), "N = {size}\n{report}");
    }
}

#[test]
fn solver_output_has_small_step_residual() {
    let cfg = SchemeConfig::default();
    let s = solve(60, 1.0, 60).unwrap();
    let (r, _, _) = hamiltonian_residual(&s, &cfg).unwrap();
    assert!(r < 1e-10, "{r}");
}

#[test]
fn decay_check_passes_on_short_horizons() {
    let k = 0.01;
    let report = decay_rate_check(|t| solve(40, t, (t / k).round() as usize), &[0.5, 1.0, 2.0], 2).unwrap();
    assert!(report.all_passed(), "{report}");
    let d: Vec<f64> = report.checks[..3].iter().map(|c| c.measured.unwrap()).collect();
    assert!(d[0] > d[1] && d[1] > d[2]);
}

#[test]
fn decay_check_flags_a_surface_that_never_decays() {
    let report = decay_rate_check(|t| Ok(ValueSurface::zeros(make_grid(100, 4000, t)?)), &[40.0], 2).unwrap();
    assert!(!report.all_passed());
    assert_eq!(report.failed, 1);
    assert_eq!(report.checks[0].location, Some((0, 50)));
    assert_eq!(report.checks[0].measured, Some(0.125));
}

#[test]
fn benchmark_residual_decays() {
    let e = |t: f64, x: f64| benchmark_entropy(t, x, 1.0);
    let r1 = log_pde_residual(e, 0.5, 0.5, 0.02, 1e-3).unwrap().abs();
    let r2 = log_pde_residual(e, 0.5, 0.5, 0.01, 1e-3).unwrap().abs();
    assert!(r1 / r2 > 1.8, "{r1} {r2}");
    let s1 = log_pde_residual(e, 0.5, 0.3, 1e-7, 0.1).unwrap().abs();
    let s2 = log_pde_residual(e, 0.5, 0.3, 1e-7, 0.05).unwrap().abs();
    assert!(s1 / s2 > 3.5, "{s1} {s2}");
    assert!(log_pde_residual(|_, x| Ok(x * x), 0.0, 0.5, 0.1, 0.1).is_err());
}

#[test]
fn report_round_trips_through_json() {
    let report = check_theorem1(&solve(10, 1.0, 10).unwrap());
    let json = serde_json::to_string_pretty(&report).unwrap();
    assert!(json.contains("\"status\": \"pass\""));
    let back: CheckReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
    assert!(report.to_string().ends_with("4 passed, 0 failed"));
}
