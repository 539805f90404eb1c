//! Command-line front end: config parsing, the batch commands, and the run
//! manifest that makes every output reproducible.
//!
//! Output schemas (column order is fixed; bump `CSV_SCHEMA` on change):
//!
//! * `users.csv`: user, x, y, destination, coalition, coop_payoff,
//!   noncoop_payoff, gain, cost, data_power, exchange_power
//! * `sweep.csv`: n_users, drops, mean_coop, stderr_coop, mean_noncoop,
//!   stderr_noncoop, improvement_pct, grand_coalitions
//! * `mobility.csv`: time, user, x, y, coalition, payoff, exchange_power,
//!   merges, splits

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{db_to_linear, dbm_to_watts, max_exchange_distance, Deployment, Point, SimConfig};
use crate::error::Error;
use crate::game::{EventKind, Game, Partition, SweepOrder};
use crate::scenario::{draw_instance, random_deployment, run_mobility, simulate_drop, sweep, MobilityTrace};
use crate::secrecy::Payoff;
use crate::stability::{stability_report, StabilityReport};

pub const CSV_SCHEMA: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.txt";

#[derive(Debug, Parser)]
#[command(name = "physec", version, about = "Coalition formation for cooperative physical-layer security")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// `key = value` config file; omitted keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `rng_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One drop: snapshot, per-user table and formation trace.
    Simulate(Common),
    /// Monte Carlo averages over network sizes.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200)]
        drops: usize,
        #[arg(long, value_delimiter = ',', default_value = "10,20,30,45")]
        n_list: Vec<usize>,
    },
    /// Stability report for one drop's formation outcome.
    Stability(Common),
    /// Periodic re-formation along a mobility trace.
    Mobility {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Re-runs the job recorded in a manifest.
    Replay {
        manifest: PathBuf,
        /// Defaults to the manifest's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// The reproducible part of an invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Job {
    Simulate,
    Sweep { drops: usize, n_list: Vec<usize> },
    Stability,
    Mobility { trace: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub csv_schema: u32,
    #[serde(flatten)]
    pub job: Job,
    pub seed: u64,
    /// Fully resolved, linear units.
    pub config: SimConfig,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Engine(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Engine(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Engine(m) => write!(f, "error: {m}"),
        }
    }
}

fn engine(e: Error) -> CliError {
    match e {
        Error::Config { .. } | Error::InvalidTrace(_) => CliError::Config(e.to_string()),
        other => CliError::Engine(other.to_string()),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Engine(format!("{}: {e}", path.display()))
}

/// Parses `key = value` lines (`#` comments) on top of the defaults.
///
/// Besides every `SimConfig` field, accepts `noise_dbm` and `exchange_snr_db`,
/// converted to watts and linear.
pub fn parse_config_str(text: &str) -> Result<SimConfig, Error> {
    let mut cfg = SimConfig::default();
    for raw in text.lines() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config { key: line.to_string(), reason: "expected 'key = value'".into() });
        };
        let key = key.trim();
        let value = value.trim().replace('\u{2212}', "-");
        let bad = |reason: &str| Error::Config { key: key.to_string(), reason: reason.to_string() };
        let float = || -> Result<f64, Error> {
            let v: f64 = value.parse().map_err(|_| bad("not a number"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad("must be finite"))
            }
        };
        let positive = || -> Result<f64, Error> {
            let v = float()?;
            if v > 0.0 {
                Ok(v)
            } else {
                Err(bad("must be strictly positive"))
            }
        };
        let int = || -> Result<u64, Error> { value.parse().map_err(|_| bad("not a non-negative integer")) };
        let count = || -> Result<usize, Error> {
            let v = int()? as usize;
            if v > 0 {
                Ok(v)
            } else {
                Err(bad("must be strictly positive"))
            }
        };
        match key {
            "n_users" => cfg.n_users = count()?,
            "n_destinations" => cfg.n_destinations = count()?,
            "n_eavesdroppers" => cfg.n_eavesdroppers = count()?,
            "area_side" => cfg.area_side = positive()?,
            "slot_power" => cfg.slot_power = positive()?,
            "noise_power" => cfg.noise_power = positive()?,
            "noise_dbm" => cfg.noise_power = dbm_to_watts(float()?),
            "exchange_snr" => cfg.exchange_snr = positive()?,
            "exchange_snr_db" => cfg.exchange_snr = db_to_linear(float()?),
            "pathloss_exp" => cfg.pathloss_exp = positive()?,
            "rng_seed" => cfg.rng_seed = int()?,
            "singular_threshold" => cfg.singular_threshold = positive()?,
            "numeric_tol" => cfg.numeric_tol = positive()?,
            "max_sweeps" => cfg.max_sweeps = count()?,
            "split_size_cap" => cfg.split_size_cap = count()?,
            "subset_cap" => cfg.subset_cap = int()?.max(1),
            "dc_size_cap" => cfg.dc_size_cap = count()?,
            _ => return Err(bad("unknown key")),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<SimConfig, Error> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config { key: path.display().to_string(), reason: e.to_string() })?;
    parse_config_str(&text)
}

/// Every field in `key = value` form; reads back to the same config.
pub fn config_to_text(cfg: &SimConfig) -> String {
    format!(
        "n_users = {}\nn_destinations = {}\nn_eavesdroppers = {}\narea_side = {}\nslot_power = {}\n\
         noise_power = {}\nexchange_snr = {}\npathloss_exp = {}\nrng_seed = {}\nsingular_threshold = {}\n\
         numeric_tol = {}\nmax_sweeps = {}\nsplit_size_cap = {}\nsubset_cap = {}\ndc_size_cap = {}\n",
        cfg.n_users,
        cfg.n_destinations,
        cfg.n_eavesdroppers,
        cfg.area_side,
        cfg.slot_power,
        cfg.noise_power,
        cfg.exchange_snr,
        cfg.pathloss_exp,
        cfg.rng_seed,
        cfg.singular_threshold,
        cfg.numeric_tol,
        cfg.max_sweeps,
        cfg.split_size_cap,
        cfg.subset_cap,
        cfg.dc_size_cap,
    )
}

#[derive(Serialize)]
struct SlotRecord {
    user: usize,
    destination: usize,
    payoff: Payoff,
    noncoop: f64,
    gain: f64,
    cost: f64,
    data_power: f64,
    exchange_power: f64,
}

#[derive(Serialize)]
struct CoalitionBlock {
    members: Vec<usize>,
    slots: Vec<SlotRecord>,
}

#[derive(Serialize)]
struct Snapshot<'a> {
    seed: u64,
    n_users: usize,
    max_exchange_distance: f64,
    deployment: &'a Deployment,
    partition: &'a Partition,
    sweeps: usize,
    avg_coop_utility: f64,
    avg_noncoop_utility: f64,
    improvement_pct: Option<f64>,
    coalitions: Vec<CoalitionBlock>,
}

#[derive(Serialize)]
struct StabilityOutput<'a> {
    seed: u64,
    n_users: usize,
    partition: &'a Partition,
    report: &'a StabilityReport,
}

struct Writer<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl Writer<'_> {
    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Engine(e.to_string()))?;
        text.push('\n');
        self.put(name, text.as_bytes())
    }
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Engine(e.to_string());
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(&r).map_err(fail)?;
    }
    w.into_inner().map_err(|e| CliError::Engine(e.to_string()))
}

fn coalition_label(members: &[usize]) -> String {
    members.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(" ")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Runs `job` under `cfg` and writes its outputs plus manifest into `dir`.
pub fn execute(job: &Job, cfg: &SimConfig, dir: &Path) -> Result<RunManifest, CliError> {
    cfg.validate().map_err(engine)?;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut out = Writer { dir, written: Vec::new() };
    match job {
        Job::Simulate => simulate(cfg, &mut out)?,
        Job::Sweep { drops, n_list } => {
            let points = sweep(cfg, n_list, *drops).map_err(engine)?;
            let rows = points
                .iter()
                .map(|p| {
                    vec![
                        p.n_users.to_string(),
                        p.drops.to_string(),
                        p.mean_coop.to_string(),
                        p.stderr_coop.to_string(),
                        p.mean_noncoop.to_string(),
                        p.stderr_noncoop.to_string(),
                        opt(p.improvement_pct),
                        p.grand_coalitions.to_string(),
                    ]
                })
                .collect();
            let header = [
                "n_users",
                "drops",
                "mean_coop",
                "stderr_coop",
                "mean_noncoop",
                "stderr_noncoop",
                "improvement_pct",
                "grand_coalitions",
            ];
            out.put("sweep.csv", &csv_bytes(&header, rows)?)?;
        }
        Job::Stability => {
            let drop = simulate_drop(cfg, 0, SweepOrder::Ascending).map_err(engine)?;
            let (_, ch) = draw_instance(cfg).map_err(engine)?;
            let game = Game::new(&ch, cfg);
            let report = stability_report(&game, &drop.round.partition, true).map_err(engine)?;
            let body = StabilityOutput {
                seed: cfg.rng_seed,
                n_users: cfg.n_users,
                partition: &drop.round.partition,
                report: &report,
            };
            out.json("stability.json", &body)?;
        }
        Job::Mobility { trace } => mobility(cfg, trace, &mut out)?,
    }
    out.put(RESOLVED_CONFIG_FILE, config_to_text(cfg).as_bytes())?;
    let mut outputs = out.written.clone();
    outputs.push(MANIFEST_FILE.to_string());
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        csv_schema: CSV_SCHEMA,
        job: job.clone(),
        seed: cfg.rng_seed,
        config: cfg.clone(),
        outputs,
    };
    out.json(MANIFEST_FILE, &manifest)?;
    Ok(manifest)
}

fn simulate(cfg: &SimConfig, out: &mut Writer<'_>) -> Result<(), CliError> {
    let drop = simulate_drop(cfg, 0, SweepOrder::Ascending).map_err(engine)?;
    let (_, ch) = draw_instance(cfg).map_err(engine)?;
    let game = Game::new(&ch, cfg);
    let mut blocks = Vec::new();
    let mut rows = Vec::new();
    for c in drop.round.partition.coalitions() {
        let value = game.value(c).map_err(engine)?;
        let mut slots = Vec::new();
        for m in &value.members {
            let u = m.user;
            let slot = SlotRecord {
                user: u,
                destination: ch.destination(u),
                payoff: m.payoff,
                noncoop: drop.noncoop[u],
                gain: m.breakdown.gain,
                cost: m.breakdown.cost,
                data_power: m.breakdown.data_power,
                exchange_power: m.breakdown.exchange_power,
            };
            let pos = drop.deployment.user_pos[u];
            rows.push((
                u,
                vec![
                    u.to_string(),
                    pos.x.to_string(),
                    pos.y.to_string(),
                    slot.destination.to_string(),
                    coalition_label(c.members()),
                    slot.payoff.to_string(),
                    slot.noncoop.to_string(),
                    slot.gain.to_string(),
                    slot.cost.to_string(),
                    slot.data_power.to_string(),
                    slot.exchange_power.to_string(),
                ],
            ));
            slots.push(slot);
        }
        blocks.push(CoalitionBlock { members: c.members().to_vec(), slots });
    }
    rows.sort_by_key(|(u, _)| *u);
    let snapshot = Snapshot {
        seed: cfg.rng_seed,
        n_users: cfg.n_users,
        max_exchange_distance: max_exchange_distance(cfg),
        deployment: &drop.deployment,
        partition: &drop.round.partition,
        sweeps: drop.round.trace.sweeps,
        avg_coop_utility: drop.metrics.avg_coop_utility,
        avg_noncoop_utility: drop.metrics.avg_noncoop_utility,
        improvement_pct: drop.metrics.improvement_pct,
        coalitions: blocks,
    };
    out.json("snapshot.json", &snapshot)?;
    let header = [
        "user",
        "x",
        "y",
        "destination",
        "coalition",
        "coop_payoff",
        "noncoop_payoff",
        "gain",
        "cost",
        "data_power",
        "exchange_power",
    ];
    out.put("users.csv", &csv_bytes(&header, rows.into_iter().map(|(_, r)| r).collect())?)?;
    let mut trace = Vec::new();
    drop.round.trace.write_jsonl(&mut trace).map_err(engine)?;
    out.put("trace.jsonl", &trace)
}

fn mobility(cfg: &SimConfig, trace_text: &str, out: &mut Writer<'_>) -> Result<(), CliError> {
    let trace = MobilityTrace::parse(trace_text).map_err(engine)?;
    let base = random_deployment(cfg, &mut ChaCha8Rng::seed_from_u64(cfg.rng_seed));
    let snaps = run_mobility(cfg, &base, &trace).map_err(engine)?;
    let mut rows = Vec::new();
    let mut events = Vec::new();
    for s in &snaps {
        let merges = s.trace.events.iter().filter(|e| e.kind == EventKind::Merge).count();
        let splits = s.trace.events.len() - merges;
        for (u, p) in s.payoffs.iter().enumerate() {
            let c = s.partition.coalition_of(u).expect("partition covers every user");
            let pos = s.positions[u];
            let power = if c.len() > 1 { exchange_from_positions(u, c.members(), &s.positions, cfg) } else { 0.0 };
            rows.push(vec![
                s.time.to_string(),
                u.to_string(),
                pos.x.to_string(),
                pos.y.to_string(),
                coalition_label(c.members()),
                p.to_string(),
                power.to_string(),
                merges.to_string(),
                splits.to_string(),
            ]);
        }
        for e in &s.trace.events {
            let mut line = serde_json::to_string(&serde_json::json!({ "time": s.time, "event": e }))
                .map_err(|e| CliError::Engine(e.to_string()))?;
            line.push('\n');
            events.extend_from_slice(line.as_bytes());
        }
    }
    let header = ["time", "user", "x", "y", "coalition", "payoff", "exchange_power", "merges", "splits"];
    out.put("mobility.csv", &csv_bytes(&header, rows)?)?;
    out.put("events.jsonl", &events)
}

/// Exchange power from geometry alone; matches `secrecy::exchange_power`.
fn exchange_from_positions(user: usize, members: &[usize], pos: &[Point], cfg: &SimConfig) -> f64 {
    let far = members.iter().filter(|&&m| m != user).map(|&m| pos[user].distance(&pos[m])).fold(0.0, f64::max);
    cfg.exchange_snr * cfg.noise_power * far.powf(cfg.pathloss_exp)
}

fn resolve(common: &Common) -> Result<SimConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => parse_config(p).map_err(|e| CliError::Config(e.to_string()))?,
        None => SimConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.rng_seed = s;
    }
    Ok(cfg)
}

pub fn run_command(cli: Cli) -> Result<RunManifest, CliError> {
    match cli.command {
        Command::Simulate(c) => execute(&Job::Simulate, &resolve(&c)?, &c.out),
        Command::Stability(c) => execute(&Job::Stability, &resolve(&c)?, &c.out),
        Command::Sweep { common, drops, n_list } => {
            if drops == 0 || n_list.is_empty() || n_list.contains(&0) {
                return Err(CliError::Config("--drops and every --n-list entry must be positive".into()));
            }
            execute(&Job::Sweep { drops, n_list }, &resolve(&common)?, &common.out)
        }
        Command::Mobility { common, trace } => {
            let text = fs::read_to_string(&trace).map_err(|e| CliError::Config(format!("{}: {e}", trace.display())))?;
            execute(&Job::Mobility { trace: text }, &resolve(&common)?, &common.out)
        }
        Command::Replay { manifest, out } => {
            let text =
                fs::read_to_string(&manifest).map_err(|e| CliError::Config(format!("{}: {e}", manifest.display())))?;
            let m: RunManifest =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", manifest.display())))?;
            let dir = out.unwrap_or_else(|| manifest.parent().map(Path::to_path_buf).unwrap_or_default());
            let mut cfg = m.config.clone();
            cfg.rng_seed = m.seed;
            execute(&m.job, &cfg, &dir)
        }
    }
}

/// Entry point returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_command(cli) {
        Ok(m) => {
            eprintln!("wrote {}", m.outputs.join(", "));
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::secrecy::exchange_power;

    #[test]
    fn empty_config_gives_defaults() {
        assert_eq!(parse_config_str("").unwrap(), SimConfig::default());
        assert_eq!(parse_config_str("# nothing\n\n").unwrap(), SimConfig::default());
    }

    #[test]
    fn unit_conversions() {
        let c = parse_config_str("noise_dbm = -90\nexchange_snr_db = 10\n").unwrap();
        assert!((c.noise_power - 1e-12).abs() < 1e-24);
        assert!((c.exchange_snr - 10.0).abs() < 1e-12);
        let c = parse_config_str("noise_dbm = \u{2212}60").unwrap();
        assert!((c.noise_power - 1e-9).abs() < 1e-21);
    }

    #[test]
    fn errors_name_the_key() {
        let key = |text: &str| match parse_config_str(text) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("{other:?}"),
        };
        assert_eq!(key("bandwidth = 5"), "bandwidth");
        assert_eq!(key("slot_power = 0"), "slot_power");
        assert_eq!(key("area_side = -3"), "area_side");
        assert_eq!(key("n_eavesdroppers = 1"), "n_eavesdroppers");
        assert_eq!(key("n_users = ten"), "n_users");
    }

    #[test]
    fn resolved_text_round_trips() {
        let cfg = SimConfig { noise_power: dbm_to_watts(-93.7), rng_seed: 99, ..SimConfig::default() };
        assert_eq!(parse_config_str(&config_to_text(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn geometric_exchange_power_matches_channel_version() {
        let cfg = SimConfig::default().with_counts(6, 2, 2).with_seed(3);
        let (dep, ch) = crate::scenario::draw_instance(&cfg).unwrap();
        let members: Vec<usize> = (0..6).collect();
        let s = crate::secrecy::Coalition::new(members.clone()).unwrap();
        for u in 0..6 {
            let a = exchange_from_positions(u, &members, &dep.user_pos, &cfg);
            let b = exchange_power(u, &s, &ch, &cfg).unwrap();
            assert!((a - b).abs() <= 1e-12 * b);
        }
    }
}
