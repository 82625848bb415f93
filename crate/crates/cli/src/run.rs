use std::result::Result;

use maxent_core::checks::CheckEntry;
use maxent_core::grid::strided_indices;
use maxent_core::hjb::second_derivative_row;
use maxent_core::*;
use serde_json::{json, Value};

use crate::config::{Command, Format, Model, RunConfig};
use crate::error::CliError;
use crate::output::{self, strided_field, write_csv, write_json};

/// Fractions of the horizon at which densities and rows are reported.
const PROBE_FRACTIONS: [f64; 3] = [0.5, 0.9, 0.99];
const DECAY_HORIZONS: [f64; 4] = [2.0, 5.0, 10.0, 20.0];

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    match cfg.command {
        Command::Solve => solve(cfg),
        Command::ForwardP => forward_p(cfg),
        Command::Density => density(cfg),
        Command::Simulate => simulate(cfg),
        Command::Check => check(cfg),
        Command::ReproduceFigures => reproduce_figures(cfg),
    }
}

fn grid(cfg: &RunConfig) -> Result<Grid, CliError> {
    Ok(make_grid(cfg.grid_n, cfg.grid_m, cfg.horizon)?)
}

fn hjb_config(cfg: &RunConfig) -> SchemeConfig {
    SchemeConfig {
        terminal_regularisation_n: cfg.regularisation_n,
        ..cfg.scheme_config()
    }
}

fn probe_levels(grid: &Grid) -> Vec<usize> {
    PROBE_FRACTIONS
        .iter()
        .map(|f| (f * grid.steps() as f64).round() as usize)
        .collect()
}

fn solve(cfg: &RunConfig) -> Result<(), CliError> {
    let grid = grid(cfg)?;
    let sol = solve_hjb_with_stats(&grid, &hjb_config(cfg))?;
    let median = sol.median_iterations();
    match cfg.format {
        Format::Csv => write_csv(&cfg.output_path, cfg, |w| sol.surface.write_csv(w, cfg.stride))?,
        Format::Json => write_json(
            &cfg.output_path,
            cfg,
            json!({
                "median_policy_iterations": median,
                "surface": strided_field(sol.surface.field(), cfg.stride),
            }),
        )?,
    }
    let x = (cfg.x0 * grid.intervals() as f64).round() as usize;
    eprintln!(
        "e(0, {}) = {:.10}; median policy iterations {}",
        grid.x(x),
        sol.surface.get(0, x),
        median.map_or("-".into(), |m| m.to_string())
    );
    Ok(())
}

fn forward_p(cfg: &RunConfig) -> Result<(), CliError> {
    let grid = grid(cfg)?;
    let p = match cfg.regularisation_n {
        Some(n) => solve_log_diffusion(&grid, &LadderConfig::with_n(n))?,
        None => ladder_limit(&grid, &DEFAULT_LADDER, 1e-9)?,
    };
    match cfg.format {
        Format::Csv => write_csv(&cfg.output_path, cfg, |w| p.write_csv(w, cfg.stride))?,
        Format::Json => write_json(
            &cfg.output_path,
            cfg,
            json!({ "regularisation_n": p.regularisation_n(), "p": strided_field(p.field(), cfg.stride) }),
        )?,
    }
    eprintln!("p solved with regularisation n = {}", p.regularisation_n());
    Ok(())
}

fn solve_density(cfg: &RunConfig, model: Model, grid: &Grid) -> Result<DensitySurface, CliError> {
    Ok(match model {
        Model::EarlyTermination => {
            let scheme = hjb_config(cfg);
            let control = optimal_control_field(&solve_hjb(grid, &scheme)?, &scheme);
            solve_forward_density(VolatilityModel::EarlyTermination(&control), grid, cfg.x0)?
        }
        Model::FullLength => solve_forward_density(VolatilityModel::FullLength { horizon: cfg.horizon }, grid, cfg.x0)?,
    })
}

fn probe_summary(d: &DensitySurface) -> Value {
    let g = d.grid();
    Value::Array(
        probe_levels(g)
            .into_iter()
            .map(|m| {
                json!({
                    "t": g.t(m),
                    "interior_mass": d.interior_mass(m),
                    "absorbed_left": d.absorbed_left()[m],
                    "absorbed_right": d.absorbed_right()[m],
                    "match_over": d.absorbed(m),
                })
            })
            .collect(),
    )
}

fn density(cfg: &RunConfig) -> Result<(), CliError> {
    let grid = grid(cfg)?;
    let d = solve_density(cfg, cfg.model, &grid)?;
    let summary = json!({
        "model": cfg.model,
        "probes": probe_summary(&d),
        "mass": d.summary(),
    });
    match cfg.format {
        Format::Csv => {
            write_csv(&cfg.output_path, cfg, |w| d.write_csv(w, cfg.stride))?;
            write_json(&output::sidecar(&cfg.output_path), cfg, summary)?;
        }
        Format::Json => {
            let mut doc = summary;
            doc["density"] = strided_field(d.values(), cfg.stride);
            write_json(&cfg.output_path, cfg, doc)?;
        }
    }
    for m in probe_levels(&grid) {
        eprintln!("t = {:.4}: interior mass {:.4}", grid.t(m), d.interior_mass(m));
    }
    Ok(())
}

fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let sim = SimConfig {
        n_paths: cfg.n_paths,
        dt: cfg.dt,
        base_seed: cfg.seed,
        x0: cfg.x0,
        probe_times: PROBE_FRACTIONS.iter().map(|f| f * cfg.horizon).collect(),
        ..SimConfig::default()
    };
    let (stats, pde_value) = match cfg.model {
        Model::EarlyTermination => {
            let grid = grid(cfg)?;
            let scheme = hjb_config(cfg);
            let surface = solve_hjb(&grid, &scheme)?;
            let control = optimal_control_field(&surface, &scheme);
            let x = (cfg.x0 * grid.intervals() as f64).round() as usize;
            (simulate_paths(&control, &sim)?, Some(surface.get(0, x)))
        }
        Model::FullLength => (
            simulate_paths(&VolatilityModel::FullLength { horizon: cfg.horizon }, &sim)?,
            None,
        ),
    };
    let qv = quadratic_variation_check(&stats, &sim);
    let mut rows: Vec<(String, f64)> = vec![
        ("reward_mean".into(), stats.reward_mean),
        ("reward_stderr".into(), stats.reward_stderr),
        ("qv_mean".into(), stats.qv_mean),
        ("qv_stderr".into(), stats.qv_stderr),
        ("x_stop_mean".into(), stats.x_stop_mean),
        ("x_stop_stderr".into(), stats.x_stop_stderr),
        ("x_stop_sq_mean".into(), stats.x_stop_sq_mean),
        ("ito_gap_mean".into(), stats.ito_gap_mean),
        ("ito_gap_stderr".into(), stats.ito_gap_stderr),
    ];
    for &(t, f) in &stats.fraction_absorbed_by {
        rows.push((format!("absorbed_by_{t}"), f));
    }
    if let Some(v) = pde_value {
        rows.push(("pde_value".into(), v));
    }
    match cfg.format {
        Format::Csv => write_csv(&cfg.output_path, cfg, |w| {
            writeln!(w, "quantity,value")?;
            for (k, v) in &rows {
                writeln!(w, "{k},{v:.16e}")?;
            }
            Ok(())
        })?,
        Format::Json => write_json(
            &cfg.output_path,
            cfg,
            json!({
                "n_paths": stats.n_paths,
                "reward_mean": stats.reward_mean,
                "reward_stderr": stats.reward_stderr,
                "pde_value": pde_value,
                "fraction_absorbed_by": stats.fraction_absorbed_by.iter()
                    .map(|(t, f)| json!({ "t": t, "fraction": f }))
                    .collect::<Vec<_>>(),
                "x_stop_mean": stats.x_stop_mean,
                "x_stop_stderr": stats.x_stop_stderr,
                "quadratic_variation": qv,
            }),
        )?,
    }
    eprintln!("reward {:.6} ± {:.6}", stats.reward_mean, stats.reward_stderr);
    if !qv.passed {
        eprintln!("warning: quadratic variation identity off by {:.2} standard errors", qv.gap / qv.gap_stderr);
    }
    Ok(())
}

fn prefixed(report: CheckReport, prefix: &str) -> CheckReport {
    let mut out = CheckReport::default();
    for mut entry in report.checks {
        entry.name = format!("{prefix}.{}", entry.name);
        out.push(entry);
    }
    out
}

fn check_report(cfg: &RunConfig) -> Result<CheckReport, CliError> {
    let grid = grid(cfg)?;
    let scheme = cfg.scheme_config();
    let mut report = prefixed(check_theorem1(&solve_hjb(&grid, &scheme)?), "hjb");

    let n = cfg.regularisation_n.unwrap_or(1);
    let regularised = solve_hjb(
        &grid,
        &SchemeConfig {
            terminal_regularisation_n: Some(n),
            ..scheme
        },
    )?;
    let represented = entropy_from_p(&solve_log_diffusion(&grid, &LadderConfig::with_n(n))?);
    report.extend(prefixed(check_theorem1(&represented), "represented"));
    let gap = cross_solver_gap(&regularised, &represented)?;
    let mut entry = CheckEntry::new(
        format!("cross_solver_gap_n={n}"),
        gap,
        10.0 * (grid.k() + grid.h() * grid.h()),
        None,
    );
    entry.measured = Some(gap);
    report.push(entry);

    let k = grid.k();
    let decay = decay_rate_check(
        |t| solve_hjb(&make_grid(cfg.grid_n, ((t / k).round() as usize).max(1), t)?, &scheme),
        &DECAY_HORIZONS,
        2,
    )?;
    report.extend(decay);
    Ok(report)
}

fn check(cfg: &RunConfig) -> Result<(), CliError> {
    let report = check_report(cfg)?;
    println!("{report}");
    match cfg.format {
        Format::Json => write_json(&cfg.output_path, cfg, json!({ "report": report }))?,
        Format::Csv => write_csv(&cfg.output_path, cfg, |w| {
            writeln!(w, "name,status,worst_violation,tolerance,m,n,measured")?;
            for c in &report.checks {
                let (m, n) = c.location.map_or((String::new(), String::new()), |(m, n)| (m.to_string(), n.to_string()));
                let measured = c.measured.map(|v| format!("{v:.16e}")).unwrap_or_default();
                let status = if c.passed() { "pass" } else { "fail" };
                writeln!(w, "{},{status},{:.16e},{:.16e},{m},{n},{measured}", c.name, c.worst_violation, c.tolerance)?;
            }
            Ok(())
        })?,
    }
    if report.all_passed() {
        Ok(())
    } else {
        Err(CliError::CheckFailed { failed: report.failed })
    }
}

fn reproduce_figures(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = cfg.output_path.as_path();
    let grid = grid(cfg)?;
    let scheme = hjb_config(cfg);
    let surface = solve_hjb(&grid, &scheme)?;
    let control = optimal_control_field(&surface, &scheme);
    let early = solve_forward_density(VolatilityModel::EarlyTermination(&control), &grid, cfg.x0)?;
    let full = solve_forward_density(VolatilityModel::FullLength { horizon: cfg.horizon }, &grid, cfg.x0)?;
    let levels = probe_levels(&grid);
    let nodes: Vec<usize> = strided_indices(grid.nodes(), cfg.stride).collect();

    write_csv(&dir.join("fig1_density.csv"), cfg, |w| {
        writeln!(w, "model,t,x,q")?;
        for (name, d) in [("early_termination", &early), ("full_length", &full)] {
            for &m in &levels {
                for &n in &nodes {
                    writeln!(w, "{name},{:.16e},{:.16e},{:.16e}", grid.t(m), grid.x(n), d.values().get(m, n))?;
                }
            }
        }
        Ok(())
    })?;
    write_json(
        &dir.join("fig1_summary.json"),
        cfg,
        json!({ "early_termination": probe_summary(&early), "full_length": probe_summary(&full) }),
    )?;
    write_csv(&dir.join("fig2_entropy.csv"), cfg, |w| surface.write_csv(w, cfg.stride))?;
    write_csv(&dir.join("fig3_rows.csv"), cfg, |w| {
        writeln!(w, "t,x,uxx,sigma")?;
        for &m in &levels {
            let uxx = second_derivative_row(&surface, m);
            for &n in &nodes {
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e},{:.16e}",
                    grid.t(m),
                    grid.x(n),
                    uxx[n],
                    control.sigma_star().get(m, n)
                )?;
            }
        }
        Ok(())
    })?;
    for m in levels {
        eprintln!(
            "t = {:.4}: match over {:.1}% (early termination), {:.1}% (full length)",
            grid.t(m),
            100.0 * early.absorbed(m),
            100.0 * full.absorbed(m)
        );
    }
    eprintln!("figures written to {}", dir.display());
    Ok(())
}
