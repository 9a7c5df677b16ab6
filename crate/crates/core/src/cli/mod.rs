//! `sim` commands: calibrate, sweep, scenario and lifetime.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | runtime or I/O failure |
//! | 2 | bad command line |
//! | 3 | invalid scenario document, or no calibrated profiles |
//! | 4 | calibration failed |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{calibrate, CalibrationAnchor, ChannelError, Composition, ProfileSet};
use crate::energy::{duty_cycle_lifetime, lifetime_hours, EnergyError};
use crate::engine::{run_range_sweep, run_scenario_with, EngineError, RunOptions, ScenarioReport, TrialStats};
use crate::protocol::PairOutcome;
use crate::scenario::{parse_document, parse_scenario, Scenario, ScenarioError};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_CALIBRATION: i32 = 4;

pub const CALIBRATION_FILE: &str = "calibration.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const REPORT_FILE: &str = "report.json";
pub const PAIRS_FILE: &str = "pairs.csv";
pub const ENERGY_FILE: &str = "energy.csv";
pub const TRACE_FILE: &str = "trace.txt";
pub const LIFETIME_FILE: &str = "lifetime.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Calibrate,
    Sweep,
    Scenario,
    Lifetime,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "sim", version, about = "BTS-coordinated D2D network simulator")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// Scenario document (JSON).
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Replace the document's trial seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent runs with seeds seed, seed + 1, ...
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub replications: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub command: Command,
    pub input_path: PathBuf,
    pub output_dir: PathBuf,
    pub seed_override: Option<u64>,
    pub replications: u32,
}

impl From<Args> for RunConfig {
    fn from(a: Args) -> Self {
        Self {
            command: a.command,
            input_path: a.input,
            output_dir: a.out,
            seed_override: a.seed,
            replications: a.replications,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Scenario { path: PathBuf, source: ScenarioError },
    #[error("replications must be at least 1")]
    NoReplications,
    #[error("no calibrated profiles at {0}; run `sim calibrate` with the same --out first")]
    MissingCalibration(PathBuf),
    #[error("{path}: unreadable calibration artifact: {source}")]
    BadCalibration { path: PathBuf, source: serde_json::Error },
    #[error("calibration failed: {0}")]
    Calibration(ChannelError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::BadCalibration { .. } => EXIT_RUNTIME,
            CliError::Scenario { .. }
            | CliError::NoReplications
            | CliError::MissingCalibration(_)
            | CliError::Energy(_) => EXIT_VALIDATION,
            CliError::Calibration(_) => EXIT_CALIBRATION,
            CliError::Engine(e) => match e {
                EngineError::Scenario(_) | EngineError::Geometry { .. } | EngineError::BadDistance { .. } => {
                    EXIT_VALIDATION
                }
                _ => EXIT_RUNTIME,
            },
        }
    }
}

/// What a command produced: files written under the output directory and a
/// short summary for stdout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// One anchor's achieved range after calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorCheck {
    pub anchor: CalibrationAnchor,
    pub achieved_range_m: f64,
    pub error_m: f64,
    pub achieved_efficiency_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    pub retries_per_hop: u32,
    pub profiles: ProfileSet,
    pub verification: Vec<AnchorCheck>,
}

pub fn run(config: &RunConfig) -> Result<Outcome, CliError> {
    if config.replications < 1 {
        return Err(CliError::NoReplications);
    }
    match config.command {
        Command::Calibrate => cmd_calibrate(config),
        Command::Sweep => cmd_sweep(config),
        Command::Scenario => cmd_scenario(config),
        Command::Lifetime => cmd_lifetime(config),
    }
}

fn read_input(config: &RunConfig) -> Result<String, CliError> {
    fs::read_to_string(&config.input_path).map_err(|source| CliError::Io { path: config.input_path.clone(), source })
}

fn load_scenario(config: &RunConfig) -> Result<Scenario, CliError> {
    let text = read_input(config)?;
    let mut s =
        parse_scenario(&text).map_err(|source| CliError::Scenario { path: config.input_path.clone(), source })?;
    if let Some(seed) = config.seed_override {
        s.trial.seed = seed;
    }
    Ok(s)
}

fn write_file(dir: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| CliError::Io { path: path.clone(), source })?;
    files.push(path);
    Ok(())
}

pub fn verify_calibration(
    anchors: &[CalibrationAnchor],
    profiles: &ProfileSet,
    retries_per_hop: u32,
) -> Result<Vec<AnchorCheck>, ChannelError> {
    anchors
        .iter()
        .map(|&anchor| {
            let p = profiles.get(anchor.link);
            let achieved_range_m = p.range_at_threshold(anchor.composition, anchor.efficiency_pct, retries_per_hop)?;
            let eff = 100.0 * p.path_success(anchor.composition, anchor.distance_m, retries_per_hop)?;
            Ok(AnchorCheck {
                anchor,
                achieved_range_m,
                error_m: achieved_range_m - anchor.distance_m,
                achieved_efficiency_pct: eff,
            })
        })
        .collect()
}

fn cmd_calibrate(config: &RunConfig) -> Result<Outcome, CliError> {
    let s = load_scenario(config)?;
    let retries = s.trial.retries_per_hop;
    let profiles = calibrate(&s.anchors, &s.profiles, retries).map_err(CliError::Calibration)?;
    let verification = verify_calibration(&s.anchors, &profiles, retries).map_err(CliError::Calibration)?;
    let artifact = CalibrationArtifact { retries_per_hop: retries, profiles, verification };
    let mut json = serde_json::to_string_pretty(&artifact).expect("artifact serialises");
    json.push('\n');

    let mut summary = String::from("link    composition            target_m  eff_pct  achieved_m  error_m\n");
    for c in &artifact.verification {
        let comp = match c.anchor.composition {
            Composition::SingleHop => "SingleHop",
            Composition::TwoHopMidpointRelay => "TwoHopMidpointRelay",
        };
        let _ = writeln!(
            summary,
            "{:<7} {:<22} {:>8.2} {:>8.2} {:>11.2} {:>8.2}",
            c.anchor.link.as_str(),
            comp,
            c.anchor.distance_m,
            c.anchor.efficiency_pct,
            c.achieved_range_m,
            if c.error_m.abs() < 0.005 { 0.0 } else { c.error_m }
        );
    }
    let mut files = Vec::new();
    write_file(&config.output_dir, CALIBRATION_FILE, &json, &mut files)?;
    Ok(Outcome { files, summary })
}

/// Profiles for sweep and scenario runs: the document's own when it pins
/// every success parameter, otherwise the artifact from `sim calibrate`.
pub fn resolve_profiles(scenario: &Scenario, output_dir: &Path) -> Result<ProfileSet, CliError> {
    if let Some(p) = scenario.profiles.complete() {
        return Ok(p);
    }
    let path = output_dir.join(CALIBRATION_FILE);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(CliError::MissingCalibration(path)),
        Err(source) => return Err(CliError::Io { path, source }),
    };
    let artifact: CalibrationArtifact =
        serde_json::from_str(&text).map_err(|source| CliError::BadCalibration { path, source })?;
    Ok(artifact.profiles)
}

fn seeds(base: u64, replications: u32) -> Vec<u64> {
    (0..replications as u64).map(|i| base.wrapping_add(i)).collect()
}

/// Run `f` once per seed on scoped threads; results come back in seed order.
fn replicate<T: Send>(
    scenario: &Scenario,
    replications: u32,
    f: impl Fn(&Scenario) -> Result<T, EngineError> + Sync,
) -> Result<Vec<T>, EngineError> {
    let runs: Vec<Scenario> = seeds(scenario.trial.seed, replications)
        .into_iter()
        .map(|seed| {
            let mut s = scenario.clone();
            s.trial.seed = seed;
            s
        })
        .collect();
    if runs.len() == 1 {
        return Ok(vec![f(&runs[0])?]);
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = runs.iter().map(|s| scope.spawn(|| f(s))).collect();
        handles.into_iter().map(|h| h.join().expect("replication thread panicked")).collect()
    })
}

fn pool(runs: &[TrialStats]) -> Result<TrialStats, EngineError> {
    let sent = runs.iter().map(|t| t.sent).sum();
    let received = runs.iter().map(|t| t.received).sum();
    let rssi = runs.iter().flat_map(|t| t.rssi_samples.iter().copied()).collect();
    TrialStats::new(runs[0].distance_m, sent, received, rssi)
}

pub const SWEEP_HEADER: &str = "distance_m,link,mean_rssi_dbm,rssi_var_db2,sent,received,efficiency_pct";

fn cmd_sweep(config: &RunConfig) -> Result<Outcome, CliError> {
    let s = load_scenario(config)?;
    let profiles = resolve_profiles(&s, &config.output_dir)?;
    let distances = s.trial.sweep.distances();
    let links = s.trial.sweep.links.clone();
    // Replications pool into one row per point.
    let runs = replicate(&s, config.replications, |run| {
        links.iter().map(|&link| run_range_sweep(link, &distances, run, &profiles)).collect::<Result<Vec<_>, _>>()
    })?;

    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    for (li, link) in links.iter().enumerate() {
        for di in 0..distances.len() {
            let per_run: Vec<TrialStats> = runs.iter().map(|r| r[li][di].clone()).collect();
            let t = pool(&per_run)?;
            let _ = writeln!(
                csv,
                "{:.4},{},{:.4},{:.4},{},{},{:.4}",
                t.distance_m,
                link.as_str(),
                t.mean_rssi().unwrap_or(f64::NAN),
                t.rssi_variance(),
                t.sent,
                t.received,
                t.efficiency_pct
            );
        }
    }
    let mut files = Vec::new();
    write_file(&config.output_dir, SWEEP_FILE, &csv, &mut files)?;
    let summary = format!("{} rows over {} link(s)\n", links.len() * distances.len(), links.len());
    Ok(Outcome { files, summary })
}

fn outcome_cells(o: &PairOutcome) -> (String, String) {
    match o {
        PairOutcome::Decided(d) => (format!("{:?}", d.mode), d.relay.map_or_else(String::new, |r| r.to_string())),
        PairOutcome::Unreachable(_) => ("Unreachable".into(), String::new()),
    }
}

fn cmd_scenario(config: &RunConfig) -> Result<Outcome, CliError> {
    let s = load_scenario(config)?;
    let profiles = resolve_profiles(&s, &config.output_dir)?;
    let reports: Vec<ScenarioReport> =
        replicate(&s, config.replications, |run| run_scenario_with(run, &profiles, RunOptions { trace: true }))?;

    let mut pairs = String::from("replication,seed,a,b,distance_m,mode,relay,sent,received,efficiency_pct,acked\n");
    let mut energy =
        String::from("replication,seed,id,final_state,on_time_s,off_time_s,consumed_wh,remaining_wh,depleted\n");
    let mut trace = String::new();
    let mut summary = String::new();
    for (i, r) in reports.iter().enumerate() {
        for p in &r.pairs {
            let (mode, relay) = outcome_cells(&p.outcome);
            let (sent, received, eff) = match &p.stats {
                Some(t) => (t.sent, t.received, format!("{:.4}", t.efficiency_pct)),
                None => (0, 0, String::new()),
            };
            let _ = writeln!(
                pairs,
                "{i},{},{},{},{:.4},{mode},{relay},{sent},{received},{eff},{}",
                r.seed, p.a, p.b, p.distance_m, p.acked
            );
            let _ = writeln!(
                summary,
                "seed {}: pair ({}, {}) -> {mode}{}",
                r.seed,
                p.a,
                p.b,
                if relay.is_empty() { String::new() } else { format!(" via {relay}") }
            );
        }
        for e in &r.energy {
            let _ = writeln!(
                energy,
                "{i},{},{},{},{:.4},{:.4},{:.6},{:.6},{}",
                r.seed, e.id, e.final_state, e.on_time_s, e.off_time_s, e.consumed_wh, e.remaining_wh, e.depleted
            );
        }
        let _ = writeln!(trace, "# replication {i} seed {}", r.seed);
        for line in &r.trace {
            trace.push_str(line);
            trace.push('\n');
        }
    }
    // The trace has its own file; keep the JSON report compact.
    let stripped: Vec<ScenarioReport> = reports
        .iter()
        .cloned()
        .map(|mut r| {
            r.trace.clear();
            r
        })
        .collect();
    let mut json = serde_json::to_string_pretty(&stripped).expect("report serialises");
    json.push('\n');

    let mut files = Vec::new();
    write_file(&config.output_dir, REPORT_FILE, &json, &mut files)?;
    write_file(&config.output_dir, PAIRS_FILE, &pairs, &mut files)?;
    write_file(&config.output_dir, ENERGY_FILE, &energy, &mut files)?;
    write_file(&config.output_dir, TRACE_FILE, &trace, &mut files)?;
    Ok(Outcome { files, summary })
}

/// The lifetime report text for a document's power settings.
pub fn lifetime_report(s: &Scenario) -> Result<String, EnergyError> {
    let model = s.power.model();
    let battery = s.power.battery();
    model.validate()?;
    battery.validate()?;
    let mut out = String::new();
    let _ = writeln!(out, "Battery capacity: {:.2} Wh at {:.2} V", battery.capacity_wh, battery.nominal_voltage_v);
    let _ = writeln!(out, "Power consumption (D2D feature ON): {:.1} mW", model.draw_d2d_on_w * 1e3);
    let _ = writeln!(out, "Power consumption (D2D feature OFF): {:.1} mW", model.draw_d2d_off_w * 1e3);
    let _ = writeln!(out, "Active time (D2D feature ON): {:.2} h", lifetime_hours(&battery, model.draw_d2d_on_w)?);
    let _ = writeln!(out, "Active time (D2D feature OFF): {:.2} h", lifetime_hours(&battery, model.draw_d2d_off_w)?);
    for &f in &s.power.duty_fractions {
        let _ = writeln!(
            out,
            "Active time (D2D ON {:.0}% of the time): {:.2} h",
            f * 100.0,
            duty_cycle_lifetime(&model, &battery, f)?
        );
    }
    Ok(out)
}

fn cmd_lifetime(config: &RunConfig) -> Result<Outcome, CliError> {
    let text = read_input(config)?;
    let s = parse_document(&text).map_err(|source| CliError::Scenario { path: config.input_path.clone(), source })?;
    if let Some(f) = s.power.duty_fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(EnergyError::InvalidFraction(*f).into());
    }
    let report = lifetime_report(&s)?;
    let mut files = Vec::new();
    write_file(&config.output_dir, LIFETIME_FILE, &report, &mut files)?;
    Ok(Outcome { files, summary: report })
}

/// Entry point shared by the binary and tests: parse `args`, run, and return
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&RunConfig::from(args)) {
        Ok(o) => {
            print!("{}", o.summary);
            for f in &o.files {
                println!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("sim: {e}");
            e.exit_code()
        }
    }
}
