//! Command-line front end: experiment dispatch and CSV emission.
//!
//! Subcommands: `simulate` (trajectory dump), `accuracy` (speed–accuracy
//! sweep), `sweep` (stiffness/damping sweep), `stability` (largest stable
//! step search), `expm-bench` (kernel accuracy/timing per policy). Exit
//! codes: 0 success, 1 usage/config error, 2 numerical divergence.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use crate::bench::{
    simulate_trajectory, speed_accuracy_sweep, stability_search, stiffness_damping_sweep,
    BenchError, BenchRecord, ContactParams, Scenario,
};
use crate::config::{validate, Command, ConfigError, RawConfig, RunConfig};
use crate::expm::{compute_integrals, PadePolicy};
use crate::integrators::{build_contact_lds, expo_step, IntegratorKind, SimError};

/// Environment variable overriding the output directory for relative paths.
pub const OUT_DIR_ENV: &str = "EXPOSIM_OUT_DIR";

pub const CSV_HEADER: &str =
    "scenario,integrator,mmm,dt_ms,dt_c_ms,K,B,mu,err_mean,err_max,ns_per_step,realtime_factor";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("numerical divergence: {0}")]
    Diverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Diverged(_) => 2,
        }
    }
}

impl From<BenchError> for CliError {
    fn from(err: BenchError) -> Self {
        match err {
            BenchError::StepMismatch { dt, dt_c } => CliError::Usage(format!(
                "dt must divide dt_c: dt = {} ms, dt_c = {} ms",
                dt * 1e3,
                dt_c * 1e3
            )),
            BenchError::GroundTruthDiverged { .. } | BenchError::NonMonotoneStability { .. } => {
                CliError::Diverged(err.to_string())
            }
            BenchError::Sim(e) => CliError::from(e),
        }
    }
}

impl From<SimError> for CliError {
    fn from(err: SimError) -> Self {
        CliError::Diverged(err.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "exposim",
    about = "Benchmark suite for stiff visco-elastic contact integration",
    disable_help_subcommand = true
)]
struct Cli {
    /// simulate | accuracy | sweep | stability | expm-bench (may also come
    /// from the config file's `command` key)
    command: Option<String>,
    /// Flat `key = value` config file; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario: mass-drop, box-drop, box-push, hopper-squat, hopper-hop.
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated integrators: expo,euler-exp,rk4,euler-imp.
    #[arg(long)]
    integrators: Option<String>,
    /// Comma-separated integration steps (ms); must divide dt_c.
    #[arg(long)]
    dt: Option<String>,
    /// Controller step (ms); defaults to the scenario's.
    #[arg(long)]
    dt_c: Option<f64>,
    /// Contact stiffness K (N/m).
    #[arg(long)]
    k: Option<f64>,
    /// Contact damping B (N·s/m); exclusive with --damping-ratio.
    #[arg(long)]
    b: Option<f64>,
    /// Damping ratio xi = B/(2*sqrt(K)); exclusive with --b.
    #[arg(long)]
    damping_ratio: Option<f64>,
    /// Friction coefficient mu (default 1).
    #[arg(long)]
    mu: Option<f64>,
    /// Comma-separated kernel policies: full or mmm budgets 0..4.
    #[arg(long)]
    mmm: Option<String>,
    /// Simulated duration (s); defaults to the scenario's.
    #[arg(long)]
    duration: Option<f64>,
    /// Output CSV path (relative paths land in $EXPOSIM_OUT_DIR or `.`).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Timing repetitions (median reported, first run discarded).
    #[arg(long)]
    repetitions: Option<usize>,
    /// Stiffness grid for `sweep` (comma-separated).
    #[arg(long)]
    k_grid: Option<String>,
    /// Damping-ratio grid for `sweep` (comma-separated).
    #[arg(long)]
    xi_grid: Option<String>,
}

fn parse_f64_list(value: &str, what: &str) -> Result<Vec<f64>, CliError> {
    value
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| CliError::Usage(format!("{what}: expected a number, got `{s}`")))
        })
        .collect()
}

fn raw_from_cli(cli: &Cli) -> Result<RawConfig, CliError> {
    let command = match &cli.command {
        Some(name) => Some(
            Command::parse(name)
                .ok_or_else(|| CliError::Usage(format!("unknown command `{name}`")))?,
        ),
        None => None,
    };
    let split = |s: &String| -> Vec<String> {
        s.split(',')
            .map(|x| x.trim().to_string())
            .filter(|x| !x.is_empty())
            .collect()
    };
    Ok(RawConfig {
        command,
        scenario: cli.scenario.clone(),
        integrators: cli.integrators.as_ref().map(split),
        dts_ms: cli
            .dt
            .as_ref()
            .map(|s| parse_f64_list(s, "--dt"))
            .transpose()?,
        dt_c_ms: cli.dt_c,
        stiffness: cli.k,
        damping: cli.b,
        damping_ratio: cli.damping_ratio,
        friction: cli.mu,
        policies: cli.mmm.as_ref().map(split),
        duration: cli.duration,
        output: cli.output.clone(),
        repetitions: cli.repetitions,
        k_grid: cli
            .k_grid
            .as_ref()
            .map(|s| parse_f64_list(s, "--k-grid"))
            .transpose()?,
        xi_grid: cli
            .xi_grid
            .as_ref()
            .map(|s| parse_f64_list(s, "--xi-grid"))
            .transpose()?,
    })
}

/// Entry point used by the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let run_result = (|| -> Result<(), CliError> {
        let file_raw = match &cli.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                RawConfig::parse_file_text(&text)?
            }
            None => RawConfig::default(),
        };
        let config = validate(file_raw.merged_with(raw_from_cli(&cli)?))?;
        run(&config).map(|_| ())
    })();
    match run_result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

/// Resolves the scenario named by the config and applies the overrides.
pub fn resolve_scenario(config: &RunConfig) -> Result<Scenario, CliError> {
    let mut scenario = Scenario::builtin(&config.scenario).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown scenario `{}` (available: {})",
            config.scenario,
            Scenario::names().join(", ")
        ))
    })?;
    scenario = scenario.with_contact(ContactParams::new(
        config.stiffness,
        config.damping,
        config.friction,
    ));
    if let Some(dt_c) = config.dt_c_ms {
        scenario = scenario.with_dt_c(dt_c * 1e-3);
    }
    if let Some(duration) = config.duration {
        scenario = scenario.with_duration(duration);
    }
    Ok(scenario)
}

/// Integration steps in seconds; defaults to the halving grid
/// dt_c, dt_c/2, … down to 1/8 ms when none are configured.
fn effective_dts(config: &RunConfig, scenario: &Scenario) -> Vec<f64> {
    if config.dts_ms.is_empty() {
        let mut dts = Vec::new();
        let mut dt = scenario.dt_c;
        while dt >= 0.125e-3 {
            dts.push(dt);
            dt /= 2.0;
        }
        dts
    } else {
        config.dts_ms.iter().map(|ms| ms * 1e-3).collect()
    }
}

/// Runs the configured experiment and returns the paths written.
pub fn run(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let scenario = resolve_scenario(config)?;
    let dts = effective_dts(config, &scenario);
    match config.command {
        Command::Simulate => run_simulate(config, &scenario, &dts),
        Command::Accuracy => run_accuracy(config, &scenario, &dts),
        Command::Sweep => run_sweep(config, &scenario, &dts),
        Command::Stability => run_stability(config, &scenario, &dts),
        Command::ExpmBench => run_expm_bench(config, &scenario, &dts),
    }
}

fn output_path(config: &RunConfig, default_name: &str) -> PathBuf {
    let name = config
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from(default_name));
    if name.is_absolute() {
        name
    } else {
        let dir = std::env::var(OUT_DIR_ENV).unwrap_or_else(|_| ".".to_string());
        Path::new(&dir).join(name)
    }
}

fn write_file(path: &PathBuf, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(contents.as_bytes())?;
    Ok(())
}

/// Serializes records in the fixed column order, full-precision decimal.
pub fn records_to_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.scenario,
            r.integrator,
            r.mmm,
            r.dt_ms,
            r.dt_c_ms,
            r.stiffness,
            r.damping,
            r.friction,
            r.err_mean,
            r.err_max,
            r.ns_per_step,
            r.realtime_factor
        ));
    }
    out
}

/// Parses a CSV produced by [`records_to_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<BenchRecord>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == CSV_HEADER => {}
        other => return Err(format!("bad header: {other:?}")),
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 12 {
            return Err(format!("row {}: expected 12 fields", i + 2));
        }
        let num = |j: usize| -> Result<f64, String> {
            fields[j]
                .parse::<f64>()
                .map_err(|_| format!("row {}: bad number `{}`", i + 2, fields[j]))
        };
        records.push(BenchRecord {
            scenario: fields[0].to_string(),
            integrator: fields[1].to_string(),
            mmm: fields[2].to_string(),
            dt_ms: num(3)?,
            dt_c_ms: num(4)?,
            stiffness: num(5)?,
            damping: num(6)?,
            friction: num(7)?,
            err_mean: num(8)?,
            err_max: num(9)?,
            ns_per_step: num(10)?,
            realtime_factor: num(11)?,
        });
    }
    Ok(records)
}

fn emit_records(
    config: &RunConfig,
    default_name: &str,
    records: &[BenchRecord],
) -> Result<Vec<PathBuf>, CliError> {
    let path = output_path(config, default_name);
    write_file(&path, &records_to_csv(records))?;
    for r in records {
        let note = if (ContactParams::new(r.stiffness, r.damping, r.friction).damping_ratio()
            - 1.0)
            .abs()
            < 1e-9
        {
            "  (critically damped)"
        } else {
            ""
        };
        println!(
            "{} {} mmm={} dt={}ms err_mean={:.3e} err_max={:.3e} rt={:.1}{}",
            r.scenario, r.integrator, r.mmm, r.dt_ms, r.err_mean, r.err_max, r.realtime_factor, note
        );
    }
    println!("wrote {}", path.display());
    Ok(vec![path])
}

fn run_simulate(
    config: &RunConfig,
    scenario: &Scenario,
    dts: &[f64],
) -> Result<Vec<PathBuf>, CliError> {
    let dt = dts[0];
    let integrator = config.integrators[0];
    let policy = config.policies[0];
    let records = simulate_trajectory(scenario, integrator, policy, dt)?;

    let info = scenario.model.info();
    let mut header: Vec<String> = vec!["t_s".to_string()];
    header.extend((0..info.nq).map(|i| format!("q{i}")));
    header.extend((0..info.nv).map(|i| format!("v{i}")));
    for name in &info.contact_names {
        for axis in ["x", "y", "z"] {
            header.push(format!("f_{name}_{axis}"));
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    for rec in &records {
        let mut row: Vec<String> = vec![format!("{}", rec.time)];
        row.extend(rec.state.q.iter().map(|x| format!("{x}")));
        row.extend(rec.state.v.iter().map(|x| format!("{x}")));
        for f in &rec.forces {
            for axis in 0..3 {
                row.push(format!("{}", f[axis]));
            }
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    let path = output_path(config, &format!("{}-trajectory.csv", scenario.id));
    write_file(&path, &out)?;
    println!(
        "simulated {} with {integrator} for {} s at dt = {} ms ({} rows)",
        scenario.id,
        scenario.duration,
        dt * 1e3,
        records.len()
    );
    println!("wrote {}", path.display());
    Ok(vec![path])
}

fn run_accuracy(
    config: &RunConfig,
    scenario: &Scenario,
    dts: &[f64],
) -> Result<Vec<PathBuf>, CliError> {
    let mut entries = Vec::new();
    for &integrator in &config.integrators {
        if integrator == IntegratorKind::Expo {
            for &policy in &config.policies {
                entries.push((integrator, policy));
            }
        } else {
            entries.push((integrator, PadePolicy::Full));
        }
    }
    let records = speed_accuracy_sweep(scenario, &entries, dts, config.repetitions)?;
    emit_records(config, &format!("{}-accuracy.csv", scenario.id), &records)
}

fn run_sweep(
    config: &RunConfig,
    scenario: &Scenario,
    dts: &[f64],
) -> Result<Vec<PathBuf>, CliError> {
    let dt = dts[0];
    let mut records = Vec::new();
    for &integrator in &config.integrators {
        let policy = config.policies[0];
        records.extend(stiffness_damping_sweep(
            scenario,
            integrator,
            policy,
            dt,
            &config.k_grid,
            &config.xi_grid,
            config.repetitions,
        )?);
    }
    emit_records(config, &format!("{}-sweep.csv", scenario.id), &records)
}

fn run_stability(
    config: &RunConfig,
    scenario: &Scenario,
    dts: &[f64],
) -> Result<Vec<PathBuf>, CliError> {
    let mut records = Vec::new();
    for &integrator in &config.integrators {
        let policy = config.policies[0];
        let t0 = Instant::now();
        let max_stable = stability_search(scenario, integrator, policy, dts)?;
        let elapsed = t0.elapsed().as_secs_f64();
        match max_stable {
            Some(dt) => println!(
                "{}: max stable dt = {} ms ({elapsed:.1} s search)",
                integrator,
                dt * 1e3
            ),
            None => println!("{integrator}: no stable dt in the grid ({elapsed:.1} s search)"),
        }
        // One row per grid entry: stable runs carry 0 in the error columns,
        // diverged runs +inf.
        for &dt in dts {
            let stable = max_stable.map_or(false, |m| dt <= m + 1e-15);
            let err = if stable { 0.0 } else { f64::INFINITY };
            records.push(BenchRecord {
                scenario: scenario.id.clone(),
                integrator: integrator.name().to_string(),
                mmm: match integrator {
                    IntegratorKind::Expo => policy.to_string(),
                    _ => "-".to_string(),
                },
                dt_ms: dt * 1e3,
                dt_c_ms: scenario.dt_c * 1e3,
                stiffness: scenario.contact.stiffness,
                damping: scenario.contact.damping,
                friction: scenario.contact.friction,
                err_mean: err,
                err_max: err,
                ns_per_step: 0.0,
                realtime_factor: 0.0,
            });
        }
    }
    emit_records(config, &format!("{}-stability.csv", scenario.id), &records)
}

/// Kernel benchmark: gathers the contact systems produced along an actual
/// trajectory and times `compute_integrals` per policy, with accuracy
/// measured against the full policy.
fn run_expm_bench(
    config: &RunConfig,
    scenario: &Scenario,
    dts: &[f64],
) -> Result<Vec<PathBuf>, CliError> {
    let dt = dts[0];
    let model = scenario.model.as_ref();
    let mut state = scenario.initial_state.clone();
    let mut contacts = scenario.fresh_contacts();
    let n_steps = (scenario.duration / dt).round() as usize;
    let mut samples = Vec::new();

    for step_idx in 0..n_steps.min(2000) {
        let t = step_idx as f64 * dt;
        let tick_t = (t / scenario.dt_c).floor() * scenario.dt_c;
        let tau = scenario.controller.torque(tick_t, model, &state, &contacts);
        if contacts.iter().any(|c| c.active) && samples.len() < 500 {
            let lds = build_contact_lds(model, &contacts, &state.q, &state.v, &tau)?;
            samples.push((lds.a, lds.b, lds.x0));
        }
        let (next, _) = expo_step(model, &mut contacts, &state, &tau, dt, PadePolicy::Full)?;
        state = next;
    }
    if samples.is_empty() {
        return Err(CliError::Usage(format!(
            "no contact activity in `{}`; nothing to benchmark",
            scenario.id
        )));
    }
    println!("collected {} contact systems from {}", samples.len(), scenario.id);

    let reference: Vec<_> = samples
        .iter()
        .map(|(a, b, x0)| compute_integrals(a, b, x0, dt, PadePolicy::Full).unwrap())
        .collect();

    let mut records = Vec::new();
    for &policy in &config.policies {
        let mut errors = Vec::new();
        let mut times = Vec::new();
        for ((a, b, x0), full) in samples.iter().zip(&reference) {
            let t0 = Instant::now();
            let result = compute_integrals(a, b, x0, dt, policy);
            times.push(t0.elapsed().as_nanos() as f64);
            match result {
                Ok(ints) => {
                    let scale = full.x_int.norm().max(full.x_int2.norm()).max(1e-300);
                    let err = ((&ints.x_int - &full.x_int).norm()
                        + (&ints.x_int2 - &full.x_int2).norm())
                        / scale;
                    errors.push(err);
                }
                Err(_) => errors.push(f64::INFINITY),
            }
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ns = times[times.len() / 2];
        records.push(BenchRecord {
            scenario: scenario.id.clone(),
            integrator: "expm".to_string(),
            mmm: policy.to_string(),
            dt_ms: dt * 1e3,
            dt_c_ms: scenario.dt_c * 1e3,
            stiffness: scenario.contact.stiffness,
            damping: scenario.contact.damping,
            friction: scenario.contact.friction,
            err_mean: errors.iter().sum::<f64>() / errors.len() as f64,
            err_max: errors.iter().fold(0.0_f64, |a, &b| a.max(b)),
            ns_per_step: ns,
            realtime_factor: dt * 1e9 / ns,
        });
    }
    emit_records(config, &format!("{}-expm.csv", scenario.id), &records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(i: usize) -> BenchRecord {
        BenchRecord {
            scenario: "mass-drop".to_string(),
            integrator: "expo".to_string(),
            mmm: "full".to_string(),
            dt_ms: 10.0 / (i + 1) as f64,
            dt_c_ms: 10.0,
            stiffness: 1e5,
            damping: 300.0,
            friction: 1.0,
            err_mean: 1.234e-7 * (i + 1) as f64,
            err_max: f64::INFINITY,
            ns_per_step: 1234.5,
            realtime_factor: 8100.0 / (i + 1) as f64,
        }
    }

    #[test]
    fn csv_round_trip_reproduces_records() {
        let records: Vec<BenchRecord> = (0..5).map(record).collect();
        let text = records_to_csv(&records);
        assert!(text.starts_with(CSV_HEADER));
        let parsed = parse_csv(&text).unwrap();
        assert_eq!(parsed, records);
    }

    #[test]
    fn csv_rejects_bad_header() {
        assert!(parse_csv("nope\n1,2,3\n").is_err());
    }
}
