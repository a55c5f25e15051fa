//! Run configuration: flat `key = value` files with command-line overrides.

use std::path::PathBuf;

use thiserror::Error;

use crate::expm::PadePolicy;
use crate::integrators::IntegratorKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Accuracy,
    Sweep,
    Stability,
    ExpmBench,
}

impl Command {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "simulate" => Some(Command::Simulate),
            "accuracy" => Some(Command::Accuracy),
            "sweep" => Some(Command::Sweep),
            "stability" => Some(Command::Stability),
            "expm-bench" => Some(Command::ExpmBench),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Accuracy => "accuracy",
            Command::Sweep => "sweep",
            Command::Stability => "stability",
            Command::ExpmBench => "expm-bench",
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Violations(Vec<String>),
}

/// Raw option set before validation. Every field can come from a config file
/// (flat `key = value` lines) or a command-line flag; flags win.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    pub command: Option<Command>,
    pub scenario: Option<String>,
    pub integrators: Option<Vec<String>>,
    pub dts_ms: Option<Vec<f64>>,
    pub dt_c_ms: Option<f64>,
    pub stiffness: Option<f64>,
    pub damping: Option<f64>,
    pub damping_ratio: Option<f64>,
    pub friction: Option<f64>,
    pub policies: Option<Vec<String>>,
    pub duration: Option<f64>,
    pub output: Option<PathBuf>,
    pub repetitions: Option<usize>,
    pub k_grid: Option<Vec<f64>>,
    pub xi_grid: Option<Vec<f64>>,
}

impl RawConfig {
    /// Parses flat `key = value` lines. `#` starts a comment; unknown keys
    /// are an error with their line number.
    pub fn parse_file_text(text: &str) -> Result<RawConfig, ConfigError> {
        let mut raw = RawConfig::default();
        for (idx, line_raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = line_raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let err = |message: String| ConfigError::Parse {
                line: line_no,
                message,
            };
            match key {
                "command" => {
                    raw.command = Some(
                        Command::parse(value)
                            .ok_or_else(|| err(format!("unknown command `{value}`")))?,
                    )
                }
                "scenario" => raw.scenario = Some(value.to_string()),
                "integrators" => raw.integrators = Some(parse_list(value)),
                "dt" => raw.dts_ms = Some(parse_f64_list(value).map_err(err)?),
                "dt_c" => raw.dt_c_ms = Some(parse_f64(value).map_err(err)?),
                "k" => raw.stiffness = Some(parse_f64(value).map_err(err)?),
                "b" => raw.damping = Some(parse_f64(value).map_err(err)?),
                "damping_ratio" => raw.damping_ratio = Some(parse_f64(value).map_err(err)?),
                "mu" => raw.friction = Some(parse_f64(value).map_err(err)?),
                "mmm" => raw.policies = Some(parse_list(value)),
                "duration" => raw.duration = Some(parse_f64(value).map_err(err)?),
                "output" => raw.output = Some(PathBuf::from(value)),
                "repetitions" => {
                    raw.repetitions = Some(value.parse().map_err(|_| {
                        err(format!("expected a non-negative integer, got `{value}`"))
                    })?)
                }
                "k_grid" => raw.k_grid = Some(parse_f64_list(value).map_err(err)?),
                "xi_grid" => raw.xi_grid = Some(parse_f64_list(value).map_err(err)?),
                other => {
                    return Err(err(format!("unknown key `{other}`")));
                }
            }
        }
        Ok(raw)
    }

    /// Field-wise override: anything set in `over` wins.
    pub fn merged_with(mut self, over: RawConfig) -> RawConfig {
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f; } )* };
        }
        take!(
            command,
            scenario,
            integrators,
            dts_ms,
            dt_c_ms,
            stiffness,
            damping,
            damping_ratio,
            friction,
            policies,
            duration,
            output,
            repetitions,
            k_grid,
            xi_grid
        );
        self
    }
}

fn parse_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_f64(value: &str) -> Result<f64, String> {
    value
        .parse::<f64>()
        .map_err(|_| format!("expected a number, got `{value}`"))
}

fn parse_f64_list(value: &str) -> Result<Vec<f64>, String> {
    value
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(parse_f64)
        .collect()
}

/// Validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub scenario: String,
    pub integrators: Vec<IntegratorKind>,
    /// Integration steps in milliseconds; each must divide dt_c.
    pub dts_ms: Vec<f64>,
    /// Controller step override in milliseconds (scenario default if None).
    pub dt_c_ms: Option<f64>,
    pub stiffness: f64,
    pub damping: f64,
    pub friction: f64,
    pub policies: Vec<PadePolicy>,
    pub duration: Option<f64>,
    pub output: Option<PathBuf>,
    pub repetitions: usize,
    pub k_grid: Vec<f64>,
    pub xi_grid: Vec<f64>,
}

/// Default sweep grids: stiffness decades 1e3..1e8 and damping ratios around
/// the critically damped point ξ = 1.
const DEFAULT_K_GRID: [f64; 6] = [1e3, 1e4, 1e5, 1e6, 1e7, 1e8];
const DEFAULT_XI_GRID: [f64; 6] = [0.125, 0.25, 0.5, 0.75, 1.0, 2.0];

/// Validates a merged raw configuration, collecting every violation.
pub fn validate(raw: RawConfig) -> Result<RunConfig, ConfigError> {
    let mut violations = Vec::new();

    let command = raw.command;
    if command.is_none() {
        violations.push("no command given (simulate, accuracy, sweep, stability, expm-bench)".to_string());
    }

    let scenario = raw.scenario.clone();
    if scenario.is_none() {
        violations.push("scenario unspecified".to_string());
    }

    let mut integrators = Vec::new();
    for name in raw
        .integrators
        .clone()
        .unwrap_or_else(|| vec!["expo".to_string()])
    {
        match IntegratorKind::parse(&name) {
            Some(kind) => integrators.push(kind),
            None => violations.push(format!(
                "unknown integrator `{name}` (expo, euler-exp, rk4, euler-imp)"
            )),
        }
    }

    let mut policies = Vec::new();
    for name in raw
        .policies
        .clone()
        .unwrap_or_else(|| vec!["full".to_string()])
    {
        match PadePolicy::parse(&name) {
            Some(p) => policies.push(p),
            None => violations.push(format!("unknown mmm policy `{name}` (full or 0..4)")),
        }
    }

    let stiffness = match raw.stiffness {
        Some(k) if k > 0.0 => Some(k),
        Some(k) => {
            violations.push(format!("stiffness must be positive, got {k}"));
            None
        }
        None => {
            violations.push("stiffness unspecified".to_string());
            None
        }
    };

    let damping = match (raw.damping, raw.damping_ratio, stiffness) {
        (Some(b), None, _) => Some(b),
        (None, Some(xi), Some(k)) => Some(2.0 * xi * k.sqrt()),
        (None, Some(_), None) => None, // stiffness violation already recorded
        (Some(_), Some(_), _) => {
            violations.push("give exactly one of b / damping_ratio, not both".to_string());
            None
        }
        (None, None, _) => {
            violations.push("damping unspecified (give b or damping_ratio)".to_string());
            None
        }
    };
    if let Some(b) = damping {
        if b < 0.0 {
            violations.push(format!("damping must be non-negative, got {b}"));
        }
    }

    let friction = raw.friction.unwrap_or(1.0);
    if friction < 0.0 {
        violations.push(format!("friction must be non-negative, got {friction}"));
    }

    let dt_c_ms = raw.dt_c_ms;
    if let Some(dt_c) = dt_c_ms {
        if dt_c <= 0.0 {
            violations.push(format!("dt_c must be positive, got {dt_c}"));
        }
    }

    let dts_ms = raw.dts_ms.clone().unwrap_or_default();
    if let Some(dt_c) = dt_c_ms {
        for &dt in &dts_ms {
            let ratio = dt_c / dt;
            if dt <= 0.0 || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
                violations.push(format!("dt must divide dt_c: dt = {dt} ms, dt_c = {dt_c} ms"));
            }
        }
    }

    let repetitions = raw.repetitions.unwrap_or(3);

    if violations.is_empty() {
        Ok(RunConfig {
            command: command.unwrap(),
            scenario: scenario.unwrap(),
            integrators,
            dts_ms,
            dt_c_ms,
            stiffness: stiffness.unwrap(),
            damping: damping.unwrap(),
            friction,
            policies,
            duration: raw.duration,
            output: raw.output,
            repetitions,
            k_grid: raw.k_grid.unwrap_or_else(|| DEFAULT_K_GRID.to_vec()),
            xi_grid: raw.xi_grid.unwrap_or_else(|| DEFAULT_XI_GRID.to_vec()),
        })
    } else {
        Err(ConfigError::Violations(violations))
    }
}
