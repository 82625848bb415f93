//! Run configuration: defaults, `key=value` files and command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use maxent_core::hjb::check_cfl;
use maxent_core::{make_grid, Scheme, SchemeConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const OUTPUT_DIR_ENV: &str = "MAXENT_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    ForwardP,
    Density,
    Simulate,
    Check,
    ReproduceFigures,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::ForwardP => "forward-p",
            Command::Density => "density",
            Command::Simulate => "simulate",
            Command::Check => "check",
            Command::ReproduceFigures => "reproduce-figures",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    #[value(name = "early_termination")]
    EarlyTermination,
    #[value(name = "full_length")]
    FullLength,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

fn enum_name<T: ValueEnum>(v: &T) -> String {
    v.to_possible_value().map(|p| p.get_name().to_owned()).unwrap_or_default()
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub grid_n: usize,
    pub grid_m: usize,
    pub horizon: f64,
    pub cap_d: f64,
    pub scheme: Scheme,
    pub model: Model,
    pub regularisation_n: Option<u32>,
    pub n_paths: usize,
    pub seed: u64,
    pub dt: f64,
    pub x0: f64,
    pub output_path: PathBuf,
    pub format: Format,
    pub stride: usize,
}

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        Self {
            command,
            grid_n: 1000,
            grid_m: 1000,
            horizon: 1.0,
            cap_d: 1e6,
            scheme: Scheme::Implicit,
            model: Model::EarlyTermination,
            regularisation_n: None,
            n_paths: 100_000,
            seed: 0x5eed,
            dt: 1e-3,
            x0: 0.5,
            output_path: PathBuf::new(),
            format: Format::Csv,
            stride: 1,
        }
    }

    pub fn scheme_config(&self) -> SchemeConfig {
        SchemeConfig {
            cap_d: self.cap_d,
            scheme: self.scheme,
            ..SchemeConfig::default()
        }
    }

    /// Pairs in the config-file syntax, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("command", self.command.name().to_owned()),
            ("grid_n", self.grid_n.to_string()),
            ("grid_m", self.grid_m.to_string()),
            ("horizon", self.horizon.to_string()),
            ("cap_d", self.cap_d.to_string()),
            ("scheme", self.scheme.to_string()),
            ("model", enum_name(&self.model)),
            (
                "regularisation_n",
                self.regularisation_n.map(|n| n.to_string()).unwrap_or_else(|| "none".into()),
            ),
            ("n_paths", self.n_paths.to_string()),
            ("seed", self.seed.to_string()),
            ("dt", self.dt.to_string()),
            ("x0", self.x0.to_string()),
            ("output_path", self.output_path.display().to_string()),
            ("format", enum_name(&self.format)),
            ("stride", self.stride.to_string()),
        ]
    }

    pub fn to_kv(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Parses a full configuration written by [`RunConfig::to_kv`].
    pub fn from_kv(text: &str) -> Result<Self, CliError> {
        let file = FileConfig::parse(text)?;
        let command = file
            .command
            .ok_or_else(|| CliError::Validation("configuration has no `command`".into()))?;
        let mut cfg = RunConfig::defaults(command);
        file.apply(&mut cfg);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let grid = make_grid(self.grid_n, self.grid_m, self.horizon)?;
        self.scheme_config().validate()?;
        if self.regularisation_n == Some(0) {
            return Err(CliError::Validation("regularisation_n must be at least 1".into()));
        }
        if self.regularisation_n.is_some() && self.model == Model::FullLength {
            return Err(CliError::Validation(
                "--regularisation-n cannot be combined with --model full_length".into(),
            ));
        }
        if self.n_paths == 0 {
            return Err(CliError::Validation("n_paths must be at least 1".into()));
        }
        if !(self.dt > 0.0 && self.dt <= self.horizon) {
            return Err(CliError::Validation(format!("dt must lie in (0, T], got {}", self.dt)));
        }
        if !(self.x0 > 0.0 && self.x0 < 1.0) {
            return Err(CliError::Validation(format!("x0 must lie in (0, 1), got {}", self.x0)));
        }
        if self.stride == 0 {
            return Err(CliError::Validation("stride must be at least 1".into()));
        }
        if self.scheme == Scheme::Explicit {
            check_cfl(&grid, self.cap_d)?;
        }
        Ok(())
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.to_pairs() {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

/// Flags shared by every subcommand; unset flags fall back to the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Number of space intervals N
    #[arg(long)]
    pub grid_n: Option<usize>,
    /// Number of time steps M
    #[arg(long)]
    pub grid_m: Option<usize>,
    /// Horizon T
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Upper bound d of the control set
    #[arg(long)]
    pub cap_d: Option<f64>,
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: Option<Scheme>,
    #[arg(long, value_enum)]
    pub model: Option<Model>,
    /// Ladder index n (terminal data e_inf/n, initial data 1/n)
    #[arg(long)]
    pub regularisation_n: Option<u32>,
    #[arg(long)]
    pub n_paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Starting point of the win probability
    #[arg(long)]
    pub x0: Option<f64>,
    /// Output file (a directory for reproduce-figures)
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Flat key=value configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Keep every stride-th row and column of surface outputs
    #[arg(long)]
    pub stride: Option<usize>,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    Scheme::from_str(s).map_err(|e| e.to_string())
}

/// Values read from a config file; all optional.
#[derive(Debug, Clone, Default, PartialEq)]
struct FileConfig {
    command: Option<Command>,
    grid_n: Option<usize>,
    grid_m: Option<usize>,
    horizon: Option<f64>,
    cap_d: Option<f64>,
    scheme: Option<Scheme>,
    model: Option<Model>,
    regularisation_n: Option<Option<u32>>,
    n_paths: Option<usize>,
    seed: Option<u64>,
    dt: Option<f64>,
    x0: Option<f64>,
    output_path: Option<PathBuf>,
    format: Option<Format>,
    stride: Option<usize>,
}

fn typed<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Validation(format!("line {line}: `{value}` is not a valid value for `{key}`")))
}

fn value_enum<T: ValueEnum>(key: &str, value: &str, line: usize) -> Result<T, CliError> {
    T::from_str(value, false)
        .map_err(|_| CliError::Validation(format!("line {line}: `{value}` is not a valid value for `{key}`")))
}

impl FileConfig {
    fn parse(text: &str) -> Result<Self, CliError> {
        let mut out = FileConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| CliError::Validation(format!("line {line}: expected key=value, got `{content}`")))?;
            let key = key.trim().replace('-', "_");
            let value = value.trim();
            match key.as_str() {
                "command" => out.command = Some(value_enum("command", value, line)?),
                "grid_n" => out.grid_n = Some(typed(&key, value, line)?),
                "grid_m" => out.grid_m = Some(typed(&key, value, line)?),
                "horizon" => out.horizon = Some(typed(&key, value, line)?),
                "cap_d" => out.cap_d = Some(typed(&key, value, line)?),
                "scheme" => {
                    out.scheme = Some(
                        Scheme::from_str(value)
                            .map_err(|e| CliError::Validation(format!("line {line}: {e}")))?,
                    )
                }
                "model" => out.model = Some(value_enum("model", value, line)?),
                "regularisation_n" => {
                    out.regularisation_n = Some(if value == "none" {
                        None
                    } else {
                        Some(typed(&key, value, line)?)
                    })
                }
                "n_paths" => out.n_paths = Some(typed(&key, value, line)?),
                "seed" => out.seed = Some(typed(&key, value, line)?),
                "dt" => out.dt = Some(typed(&key, value, line)?),
                "x0" => out.x0 = Some(typed(&key, value, line)?),
                "output_path" | "output" => out.output_path = Some(PathBuf::from(value)),
                "format" => out.format = Some(value_enum("format", value, line)?),
                "stride" => out.stride = Some(typed(&key, value, line)?),
                other => return Err(CliError::Validation(format!("line {line}: unknown key `{other}`"))),
            }
        }
        Ok(out)
    }

    fn apply(self, cfg: &mut RunConfig) {
        macro_rules! take {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$target = v; })*
            };
        }
        take!(grid_n => grid_n, grid_m => grid_m, horizon => horizon, cap_d => cap_d, scheme => scheme,
            model => model, regularisation_n => regularisation_n, n_paths => n_paths, seed => seed,
            dt => dt, x0 => x0, output_path => output_path, format => format, stride => stride);
    }
}

fn default_output(command: Command, format: Format, env_dir: Option<&Path>) -> PathBuf {
    let dir = env_dir.map(Path::to_path_buf).unwrap_or_default();
    match command {
        Command::ReproduceFigures => {
            if dir.as_os_str().is_empty() {
                PathBuf::from("figures")
            } else {
                dir
            }
        }
        other => dir.join(format!("{}.{}", other.name().replace('-', "_"), format.extension())),
    }
}

/// Flags over config file over defaults. `file_text` is the content of
/// `--config` when given; `env_dir` the default output directory.
pub fn resolve(
    command: Command,
    flags: &Flags,
    file_text: Option<&str>,
    env_dir: Option<&Path>,
) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::defaults(command);
    if let Some(text) = file_text {
        let file = FileConfig::parse(text)?;
        if let Some(c) = file.command {
            if c != command {
                return Err(CliError::Validation(format!(
                    "config file is for `{}` but the command is `{}`",
                    c.name(),
                    command.name()
                )));
            }
        }
        file.apply(&mut cfg);
    }
    macro_rules! flag {
        ($($field:ident => $target:ident),*) => {
            $(if let Some(v) = flags.$field.clone() { cfg.$target = v; })*
        };
    }
    flag!(grid_n => grid_n, grid_m => grid_m, horizon => horizon, cap_d => cap_d, scheme => scheme,
        model => model, n_paths => n_paths, seed => seed, dt => dt, x0 => x0, output => output_path,
        format => format, stride => stride);
    if flags.regularisation_n.is_some() {
        cfg.regularisation_n = flags.regularisation_n;
    }
    if cfg.output_path.as_os_str().is_empty() {
        cfg.output_path = default_output(command, cfg.format, env_dir);
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_run() {
        let cfg = resolve(Command::Solve, &Flags::default(), None, None).unwrap();
        assert_eq!((cfg.grid_n, cfg.grid_m, cfg.horizon, cfg.cap_d), (1000, 1000, 1.0, 1e6));
        assert_eq!(cfg.output_path, PathBuf::from("solve.csv"));
    }

    #[test]
    fn flags_override_file() {
        let flags = Flags {
            grid_n: Some(50),
            ..Flags::default()
        };
        let cfg = resolve(Command::Solve, &flags, Some("grid_n = 20\ngrid-m=30\n# note\n"), None).unwrap();
        assert_eq!((cfg.grid_n, cfg.grid_m), (50, 30));
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::defaults(Command::Density);
        cfg.regularisation_n = Some(4);
        cfg.horizon = 0.3;
        cfg.dt = 1.0 / 3.0;
        cfg.output_path = PathBuf::from("out/q.csv");
        let back = RunConfig::from_kv(&cfg.to_kv()).unwrap();
        assert_eq!(back, cfg);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), cfg);
    }

    #[test]
    fn rejections() {
        let bad = |flags: Flags, file: Option<&str>| resolve(Command::Solve, &flags, file, None).unwrap_err();
        assert!(matches!(bad(Flags { grid_n: Some(0), ..Flags::default() }, None), CliError::Validation(_)));
        assert!(matches!(bad(Flags::default(), Some("grid_n=ten")), CliError::Validation(_)));
        assert!(matches!(bad(Flags::default(), Some("colour=blue")), CliError::Validation(_)));
        assert!(matches!(bad(Flags::default(), Some("command=check")), CliError::Validation(_)));
        let both = Flags {
            model: Some(Model::FullLength),
            regularisation_n: Some(2),
            ..Flags::default()
        };
        assert!(matches!(bad(both, None), CliError::Validation(_)));
        match bad(Flags::default(), Some("scheme=explicit")) {
            CliError::Validation(msg) => assert!(msg.contains("CFL"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn env_directory_sets_default_output() {
        let cfg = resolve(Command::ForwardP, &Flags::default(), None, Some(Path::new("/tmp/x"))).unwrap();
        assert_eq!(cfg.output_path, PathBuf::from("/tmp/x/forward_p.csv"));
        let figs = resolve(Command::ReproduceFigures, &Flags::default(), None, None).unwrap();
        assert_eq!(figs.output_path, PathBuf::from("figures"));
    }
}
