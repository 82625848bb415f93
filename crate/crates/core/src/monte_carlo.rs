//! Euler–Maruyama simulation of the controlled win-probability martingale
//! `dX = sqrt(a(t, X)) dW`, stopped on leaving `(0, 1)` or at the horizon.
//!
//! Each path accrues the reward `1/2 (1 + log a) dt` and the quadratic
//! variation `a dt` for every step it completes inside the interval.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{DensitySurface, VolatilityModel};
use crate::error::{Error, Result};
use crate::hjb::ControlField;

/// A feedback diffusion coefficient `a(t, x)` on `[0, T] x [0, 1]`.
pub trait FeedbackControl: Sync {
    fn horizon(&self) -> f64;

    fn diffusion(&self, t: f64, x: f64) -> Result<f64>;

    /// True when the controlled process is known to end in `{0, 1}` at the
    /// horizon; the last step is then drawn from its exact law `Bernoulli(x)`.
    fn terminates_at_horizon(&self) -> bool {
        false
    }
}

impl FeedbackControl for ControlField {
    fn horizon(&self) -> f64 {
        self.grid().horizon()
    }

    fn diffusion(&self, t: f64, x: f64) -> Result<f64> {
        self.diffusion_at(t, x)
    }
}

impl FeedbackControl for VolatilityModel<'_> {
    fn horizon(&self) -> f64 {
        VolatilityModel::horizon(self)
    }

    fn diffusion(&self, t: f64, x: f64) -> Result<f64> {
        VolatilityModel::diffusion(self, t, x)
    }

    fn terminates_at_horizon(&self) -> bool {
        matches!(self, VolatilityModel::FullLength { .. })
    }
}

/// Time-homogeneous control `a(t, x) = a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantControl {
    pub a: f64,
    pub horizon: f64,
}

impl FeedbackControl for ConstantControl {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn diffusion(&self, t: f64, x: f64) -> Result<f64> {
        if !(0.0..=self.horizon).contains(&t) || !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfDomain { t, x });
        }
        Ok(self.a)
    }
}

/// How a step is tested for leaving `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExitDetection {
    /// Endpoint outside, or a Brownian-bridge crossing between the two
    /// endpoints with probability `exp(-2 d0 d1 / (a dt))` per boundary.
    #[default]
    Bridge,
    /// Endpoint outside only; overstates survival by O(sqrt(dt)).
    Endpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub base_seed: u64,
    pub x0: f64,
    /// Times at which the absorbed fraction is reported.
    pub probe_times: Vec<f64>,
    /// Records `X` at this time for every path (absorbed paths at their boundary).
    pub snapshot_time: Option<f64>,
    pub exit_detection: ExitDetection,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            dt: 1e-3,
            base_seed: 0x5eed,
            x0: 0.5,
            probe_times: vec![0.5, 0.9, 0.99],
            snapshot_time: None,
            exit_detection: ExitDetection::Bridge,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, horizon: f64) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::validation("n_paths", "must be at least 1"));
        }
        if !(self.dt > 0.0 && self.dt <= horizon) {
            return Err(Error::validation("dt", format!("need 0 < dt <= T = {horizon}, got {}", self.dt)));
        }
        if !(self.x0 > 0.0 && self.x0 < 1.0) {
            return Err(Error::validation("x0", format!("{} must lie in (0, 1)", self.x0)));
        }
        if let Some(t) = self.snapshot_time {
            if !(0.0..=horizon).contains(&t) {
                return Err(Error::validation("snapshot_time", format!("{t} is outside [0, {horizon}]")));
            }
        }
        Ok(())
    }
}

/// Aggregated estimates over all paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStats {
    pub n_paths: usize,
    pub reward_mean: f64,
    pub reward_stderr: f64,
    /// Exit times of the paths absorbed before the horizon, in path order.
    pub exit_time_samples: Vec<f64>,
    /// `(probe time, fraction absorbed by then)`, ordered by probe time.
    pub fraction_absorbed_by: Vec<(f64, f64)>,
    pub qv_mean: f64,
    pub qv_stderr: f64,
    pub x_stop_mean: f64,
    pub x_stop_stderr: f64,
    pub x_stop_sq_mean: f64,
    /// Mean and standard error of `X_stop^2 - x0^2 - QV` over paths.
    pub ito_gap_mean: f64,
    pub ito_gap_stderr: f64,
    pub snapshot: Option<Vec<f64>>,
}

impl PathStats {
    /// Fraction of paths absorbed at or before `t`.
    pub fn exit_time_cdf(&self, t: f64) -> f64 {
        let hits = self.exit_time_samples.iter().filter(|&&s| s <= t + 1e-12).count();
        hits as f64 / self.n_paths as f64
    }
}

#[derive(Debug, Clone, Copy)]
struct PathOutcome {
    reward: f64,
    qv: f64,
    x_stop: f64,
    exit_time: Option<f64>,
    snapshot: f64,
}

fn path_rng(base_seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(path);
    rng
}

fn simulate_one<C: FeedbackControl + ?Sized>(control: &C, cfg: &SimConfig, path: u64) -> Result<PathOutcome> {
    let horizon = control.horizon();
    let n_steps = ((horizon / cfg.dt) - 1e-9).ceil().max(1.0) as usize;
    let snapshot_step = cfg.snapshot_time.map(|t| ((t / cfg.dt).round() as usize).min(n_steps));
    let mut rng = path_rng(cfg.base_seed, path);

    let mut x = cfg.x0;
    let mut reward = 0.0;
    let mut qv = 0.0;
    let mut exit_time = None;
    let mut snapshot = f64::NAN;

    for j in 0..n_steps {
        if snapshot_step == Some(j) {
            snapshot = x;
        }
        let t = j as f64 * cfg.dt;
        let step = cfg.dt.min(horizon - t);

        if j + 1 == n_steps && control.terminates_at_horizon() {
            let u: f64 = rng.random();
            qv += x * (1.0 - x);
            x = if u < x { 1.0 } else { 0.0 };
            break;
        }

        let a = control.diffusion(t, x)?;
        let var = a * step;
        let z: f64 = rng.sample(StandardNormal);
        let next = x + var.sqrt() * z;

        let mut crossed = None;
        if next <= 0.0 {
            crossed = Some(0.0);
        } else if next >= 1.0 {
            crossed = Some(1.0);
        } else if cfg.exit_detection == ExitDetection::Bridge {
            let u: f64 = rng.random();
            let p_left = (-2.0 * x * next / var).exp();
            let p_right = (-2.0 * (1.0 - x) * (1.0 - next) / var).exp();
            if u < p_left {
                crossed = Some(0.0);
            } else if u < p_left + p_right {
                crossed = Some(1.0);
            }
        }

        if let Some(boundary) = crossed {
            x = boundary;
            exit_time = Some(t + step);
            break;
        }
        reward += 0.5 * (1.0 + a.ln()) * step;
        qv += var;
        x = next;
    }
    if snapshot.is_nan() {
        snapshot = x;
    }
    Ok(PathOutcome {
        reward,
        qv,
        x_stop: x,
        exit_time,
        snapshot,
    })
}

fn mean_and_stderr(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = values.clone().sum::<f64>() / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

/// Simulates `cfg.n_paths` independent paths. Paths run concurrently; each
/// draws from its own ChaCha stream keyed by `(base_seed, path index)` and the
/// reduction runs in path order, so results are bit-identical across runs
/// and thread counts.
pub fn simulate_paths<C: FeedbackControl + ?Sized>(control: &C, cfg: &SimConfig) -> Result<PathStats> {
    cfg.validate(control.horizon())?;
    let outcomes: Vec<PathOutcome> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_one(control, cfg, i))
        .collect::<Result<_>>()?;
    let n = outcomes.len();

    let (reward_mean, reward_stderr) = mean_and_stderr(outcomes.iter().map(|o| o.reward), n);
    let (qv_mean, qv_stderr) = mean_and_stderr(outcomes.iter().map(|o| o.qv), n);
    let (x_stop_mean, x_stop_stderr) = mean_and_stderr(outcomes.iter().map(|o| o.x_stop), n);
    let x_stop_sq_mean = outcomes.iter().map(|o| o.x_stop * o.x_stop).sum::<f64>() / n as f64;
    let x0_sq = cfg.x0 * cfg.x0;
    let (ito_gap_mean, ito_gap_stderr) =
        mean_and_stderr(outcomes.iter().map(|o| o.x_stop * o.x_stop - x0_sq - o.qv), n);

    let exit_time_samples: Vec<f64> = outcomes.iter().filter_map(|o| o.exit_time).collect();
    let mut probes = cfg.probe_times.clone();
    probes.sort_by(f64::total_cmp);
    let fraction_absorbed_by = probes
        .into_iter()
        .map(|t| {
            let hits = exit_time_samples.iter().filter(|&&s| s <= t + 1e-12).count();
            (t, hits as f64 / n as f64)
        })
        .collect();

    Ok(PathStats {
        n_paths: n,
        reward_mean,
        reward_stderr,
        exit_time_samples,
        fraction_absorbed_by,
        qv_mean,
        qv_stderr,
        x_stop_mean,
        x_stop_stderr,
        x_stop_sq_mean,
        ito_gap_mean,
        ito_gap_stderr,
        snapshot: cfg
            .snapshot_time
            .map(|_| outcomes.iter().map(|o| o.snapshot).collect()),
    })
}

/// Outcome of the Itô identity `E[QV] = E[X_stop^2] - x0^2` on simulated paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QvReport {
    pub qv_mean: f64,
    pub x_stop_sq_minus_x0_sq: f64,
    pub gap: f64,
    pub gap_stderr: f64,
    pub passed: bool,
}

/// Checks the Itô identity within three standard errors of the per-path gap.
pub fn quadratic_variation_check(stats: &PathStats, cfg: &SimConfig) -> QvReport {
    let gap = stats.ito_gap_mean;
    let se = stats.ito_gap_stderr;
    QvReport {
        qv_mean: stats.qv_mean,
        x_stop_sq_minus_x0_sq: stats.x_stop_sq_mean - cfg.x0 * cfg.x0,
        gap,
        gap_stderr: se,
        passed: gap.abs() <= 3.0 * se + 1e-15,
    }
}

/// Kolmogorov–Smirnov distance between the empirical law of `samples` and
/// the law of `X_{t_m}` carried by `density` (both boundary atoms included).
pub fn ks_against_density(samples: &[f64], density: &DensitySurface, m: usize) -> f64 {
    let cdf = density.cdf(m);
    let grid = density.grid();
    let n_int = grid.intervals();
    let left_atom = density.absorbed_left()[m];
    let right_atom = density.absorbed_right()[m];
    // right-continuous model CDF and its left limit
    let model = |x: f64| -> (f64, f64) {
        if x < 0.0 {
            return (0.0, 0.0);
        }
        if x > 1.0 {
            return (cdf[n_int], cdf[n_int]);
        }
        if x == 1.0 {
            return (cdf[n_int], cdf[n_int] - right_atom);
        }
        let pos = x * n_int as f64;
        let i = (pos.floor() as usize).min(n_int - 1);
        let w = pos - i as f64;
        let hi = if i + 1 == n_int { cdf[n_int] - right_atom } else { cdf[i + 1] };
        let v = (1.0 - w) * cdf[i] + w * hi;
        if x == 0.0 {
            (left_atom, 0.0)
        } else {
            (v, v)
        }
    };

    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == x {
            j += 1;
        }
        let (at, below) = model(x);
        d = d.max((j as f64 / n - at).abs()).max((i as f64 / n - below).abs());
        i = j;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn small_cfg(n_paths: usize) -> SimConfig {
        SimConfig {
            n_paths,
            dt: 1e-2,
            ..SimConfig::default()
        }
    }

    #[test]
    fn zero_reward_control() {
        let c = ConstantControl {
            a: 1.0 / E,
            horizon: 1.0,
        };
        let stats = simulate_paths(&c, &small_cfg(2000)).unwrap();
        assert!(stats.reward_mean.abs() < 1e-15);
        assert!(stats.reward_stderr < 1e-15);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let c = ConstantControl { a: 1.0, horizon: 1.0 };
        let cfg = small_cfg(500);
        let a = simulate_paths(&c, &cfg).unwrap();
        let b = simulate_paths(&c, &cfg).unwrap();
        assert_eq!(a, b);
        let other = simulate_paths(&c, &SimConfig { base_seed: 7, ..cfg }).unwrap();
        assert_ne!(a.reward_mean, other.reward_mean);
    }

    #[test]
    fn probe_fractions_are_monotone() {
        let c = ConstantControl { a: 1.0, horizon: 1.0 };
        let stats = simulate_paths(&c, &small_cfg(2000)).unwrap();
        let fr: Vec<f64> = stats.fraction_absorbed_by.iter().map(|p| p.1).collect();
        assert!(fr.windows(2).all(|w| w[0] <= w[1]));
        assert!(fr.iter().all(|f| (0.0..=1.0).contains(f)));
        assert_eq!(stats.exit_time_cdf(0.5), stats.fraction_absorbed_by[0].1);
    }

    #[test]
    fn tiny_horizon_has_vanishing_qv() {
        let c = ConstantControl { a: 1.0, horizon: 1e-6 };
        let cfg = SimConfig {
            n_paths: 1000,
            dt: 1e-7,
            ..SimConfig::default()
        };
        let stats = simulate_paths(&c, &cfg).unwrap();
        assert!(stats.qv_mean <= 1e-6 + 1e-12);
        assert!(quadratic_variation_check(&stats, &cfg).passed);
    }

    #[test]
    fn rejects_bad_config() {
        let c = ConstantControl { a: 1.0, horizon: 1.0 };
        for cfg in [
            SimConfig { n_paths: 0, ..SimConfig::default() },
            SimConfig { dt: 0.0, ..SimConfig::default() },
            SimConfig { dt: 2.0, ..SimConfig::default() },
            SimConfig { x0: 1.0, ..SimConfig::default() },
            SimConfig { snapshot_time: Some(3.0), ..SimConfig::default() },
        ] {
            assert!(simulate_paths(&c, &cfg).is_err());
        }
    }

    #[test]
    fn snapshot_at_start_is_x0() {
        let c = ConstantControl { a: 1.0, horizon: 1.0 };
        let cfg = SimConfig {
            snapshot_time: Some(0.0),
            ..small_cfg(50)
        };
        let stats = simulate_paths(&c, &cfg).unwrap();
        assert!(stats.snapshot.unwrap().iter().all(|&x| x == 0.5));
    }
}
