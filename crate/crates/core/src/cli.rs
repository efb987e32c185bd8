//! Batch front-end: `aggruin <command> --config PATH [--seed N] [--workers N]
//! [--out DIR] [--format csv]`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure, 3 I/O.
//! Outputs are written atomically (temp file + rename) next to a
//! `<name>.manifest.toml` sidecar.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::asymptotics::{self, ruin_asymptotic, AsymptoticsError};
use crate::config::{load_config, CommandName, ConfigError, ExperimentConfig, DEFAULT_SEED};
use crate::constants::{self, ConstantsError, ConstantsProvider};
use crate::levy::{self, tail_equivalence_report, LevyError, ReportBudget};
use crate::simulation::{self, convergence_study, crossing_prob_is, crossing_prob_mc, GridPlan, PathSampler, SamplerKind, SimError};

#[derive(Debug, Parser)]
#[command(name = "aggruin", version, about = "Finite-time ruin of aggregate Gaussian and perturbed Lévy risk processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact asymptotic ruin probability over a u grid.
    Asym(RunArgs),
    /// Monte-Carlo crossing probabilities (crude, importance or extrapolated).
    Simulate(RunArgs),
    /// Pickands and Piterbarg constants.
    Constants(RunArgs),
    /// Tail-equivalence report for a perturbed Lévy model.
    Perturbed(RunArgs),
    /// Asymptotic value against simulation, one row per u.
    Report(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config worker count; never changes results.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory (default: config `output.dir`, else `.`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn from_asym(e: AsymptoticsError, u_key: &str) -> CliError {
    match e {
        AsymptoticsError::InvalidModel { key, reason } => CliError::Config(ConfigError::new(format!("model.{key}"), reason)),
        AsymptoticsError::NonPositiveLevel(_) => CliError::Config(ConfigError::new(u_key, e)),
        AsymptoticsError::TrendCondition(_) => CliError::Config(ConfigError::new("model.trend", e)),
        AsymptoticsError::Ordering(_) => CliError::Config(ConfigError::new("model.components", e)),
        AsymptoticsError::Constants(c) => from_constants(c),
        other => CliError::Numerical(other.to_string()),
    }
}

fn from_constants(e: ConstantsError) -> CliError {
    match e {
        ConstantsError::MissingExact(_) => CliError::Config(ConfigError::new("constants.mode", format!("{e}; set mode = \"mc\""))),
        ConstantsError::InvalidArgument(m) => CliError::Config(ConfigError::new("constants", m)),
        other => CliError::Numerical(other.to_string()),
    }
}

fn from_sim(e: SimError) -> CliError {
    match e {
        SimError::Grid(m) => CliError::Config(ConfigError::new("simulation", m)),
        SimError::InvalidArgument(m) => CliError::Config(ConfigError::new("simulation", m)),
        other => CliError::Numerical(other.to_string()),
    }
}

fn from_levy(e: LevyError) -> CliError {
    match e {
        LevyError::Sim(s) => from_sim(s),
        LevyError::Asymptotics(a) => from_asym(a, "u_grid"),
        LevyError::Unsupported(m) => CliError::Config(ConfigError::new("levy", m)),
        other => CliError::Config(ConfigError::new("levy", other)),
    }
}

/// One CSV table produced by a command.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str], rows: Vec<Vec<String>>) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows,
        }
    }

    fn to_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(|e| CliError::Io(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }
}

struct Outcome {
    table: Table,
    /// Extra binary artifacts `(file name, bytes)`.
    extra: Vec<(String, Vec<u8>)>,
    notes: Vec<String>,
}

/// Writes `bytes` to `path` through a temp file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    config: String,
    config_sha256: String,
    seed: u64,
    workers: usize,
    version: String,
    wall_time_seconds: f64,
    finished_unix: u64,
    outputs: Vec<ManifestOutput>,
    notes: Vec<String>,
}

#[derive(Serialize)]
struct ManifestOutput {
    path: String,
    sha256: String,
    bytes: usize,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Summary of a successful run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub outputs: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub notes: Vec<String>,
}

/// Parses the config and runs `command`.
pub fn run(command: CommandName, args: &RunArgs) -> Result<RunSummary, CliError> {
    let start = Instant::now();
    let (text, cfg) = load_config(&args.config).map_err(|e| io_err(&args.config, e))??;
    if let Some(c) = cfg.command {
        if c != command {
            return Err(ConfigError::new("command", format!("config is for `{c}`, invoked as `{command}`")).into());
        }
    }
    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let seed = args.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let workers = args.workers.or(cfg.workers).unwrap_or(1);
    if workers == 0 {
        return Err(ConfigError::new("workers", "must be at least 1").into());
    }
    let outcome = match command {
        CommandName::Asym => run_asym(&cfg, &base, seed, workers)?,
        CommandName::Simulate => run_simulate(&cfg, &base, seed, workers)?,
        CommandName::Constants => run_constants(&cfg, seed, workers)?,
        CommandName::Perturbed => run_perturbed(&cfg, &base, seed, workers)?,
        CommandName::Report => run_report(&cfg, &base, seed, workers)?,
    };

    let out_dir = args.out.clone().or_else(|| cfg.output_dir().map(|d| base.join(d))).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir).map_err(|e| io_err(&out_dir, e))?;
    let name = cfg
        .output
        .as_ref()
        .and_then(|o| o.name.clone())
        .unwrap_or_else(|| command.to_string());
    let mut files = vec![(format!("{name}.csv"), outcome.table.to_bytes()?)];
    files.extend(outcome.extra);
    let mut outputs = Vec::new();
    let mut entries = Vec::new();
    for (file, bytes) in &files {
        let path = out_dir.join(file);
        write_atomic(&path, bytes).map_err(|e| io_err(&path, e))?;
        entries.push(ManifestOutput {
            path: file.clone(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        outputs.push(path);
    }
    let manifest = Manifest {
        command: command.to_string(),
        config: args.config.display().to_string(),
        config_sha256: sha256_hex(text.as_bytes()),
        seed,
        workers,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        finished_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        outputs: entries,
        notes: outcome.notes.clone(),
    };
    let text = toml::to_string(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    let manifest_path = out_dir.join(format!("{name}.manifest.toml"));
    write_atomic(&manifest_path, text.as_bytes()).map_err(|e| io_err(&manifest_path, e))?;
    Ok(RunSummary {
        outputs,
        manifest: manifest_path,
        notes: outcome.notes,
    })
}

fn provider(cfg: &ExperimentConfig, seed: u64, workers: usize) -> Result<ConstantsProvider, CliError> {
    Ok(ConstantsProvider::new(cfg.provider_mode(seed, workers)?))
}

fn run_asym(cfg: &ExperimentConfig, base: &Path, seed: u64, workers: usize) -> Result<Outcome, CliError> {
    let model = cfg.model(base)?;
    let u_grid = cfg.u_grid()?;
    let prov = provider(cfg, seed, workers)?;
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for (i, &u) in u_grid.iter().enumerate() {
        let r = ruin_asymptotic(&model, u, &prov).map_err(|e| from_asym(e, &format!("u_grid[{i}]")))?;
        if r.low_tail_arg {
            notes.push(format!("u={u}: tail argument {:.3} is small; first-order asymptotics may be inaccurate", r.tail_arg));
        }
        rows.push(r.csv_record());
    }
    Ok(Outcome {
        table: Table::new(&asymptotics::CSV_HEADER, rows),
        extra: vec![],
        notes,
    })
}

fn run_simulate(cfg: &ExperimentConfig, base: &Path, seed: u64, workers: usize) -> Result<Outcome, CliError> {
    let model = cfg.model(base)?;
    let u_grid = cfg.u_grid()?;
    let sim = cfg.simulation()?;
    let grid = cfg.grid(model.horizon())?;
    let method = sim.method.as_deref().unwrap_or("crude");
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    let mut finest = grid;
    for &u in &u_grid {
        let estimates = match method {
            "crude" => vec![crossing_prob_mc(&model, u, grid, sim.n, seed, workers).map_err(from_sim)?],
            "importance" => vec![crossing_prob_is(&model, u, grid, sim.n, seed, workers).map_err(from_sim)?],
            "extrapolated" => {
                let ms = sim.grids.clone().unwrap_or_else(|| vec![grid.m() / 2, grid.m()]);
                let grids = ms
                    .iter()
                    .enumerate()
                    .map(|(i, &m)| GridPlan::new(m, model.horizon()).map_err(|e| ConfigError::new(format!("simulation.grids[{i}]"), e)))
                    .collect::<Result<Vec<_>, _>>()?;
                finest = *grids.iter().max_by_key(|g| g.m()).unwrap_or(&grid);
                let table = convergence_study(&model, u, &grids, sim.n, seed, workers).map_err(|e| match e {
                    SimError::Grid(m) => CliError::Config(ConfigError::new("simulation.grids", m)),
                    other => from_sim(other),
                })?;
                if let Some(r) = table.fitted_exponent {
                    notes.push(format!("u={u}: fitted bias exponent {r:.4}"));
                }
                let mut v: Vec<_> = table.rows.into_iter().map(|r| r.estimate).collect();
                v.push(table.extrapolated);
                v
            }
            other => {
                return Err(ConfigError::new("simulation.method", format!("unknown method `{other}` (expected crude, importance or extrapolated)")).into())
            }
        };
        for e in estimates {
            for f in &e.flags {
                notes.push(format!("u={u} {} m={}: {f}", e.method, e.grid.m()));
            }
            rows.push(e.csv_record());
        }
    }
    let mut extra = Vec::new();
    if let Some(k) = sim.dump_paths {
        let sampler = PathSampler::new(&model, finest, SamplerKind::Composite).map_err(from_sim)?;
        let batch = sampler.sample_batch(k, seed, workers);
        let mut bytes = Vec::new();
        batch.write_dump(&mut bytes).map_err(|e| CliError::Io(e.to_string()))?;
        extra.push(("paths.bin".to_string(), bytes));
    }
    Ok(Outcome {
        table: Table::new(&simulation::CSV_HEADER, rows),
        extra,
        notes,
    })
}

fn run_constants(cfg: &ExperimentConfig, seed: u64, workers: usize) -> Result<Outcome, CliError> {
    let kinds = cfg.constant_list()?;
    let prov = provider(cfg, seed, workers)?;
    let rows = kinds
        .into_iter()
        .map(|k| prov.get_constant(k).map(|v| v.csv_record()).map_err(from_constants))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Outcome {
        table: Table::new(&constants::CSV_HEADER, rows),
        extra: vec![],
        notes: vec![],
    })
}

fn run_perturbed(cfg: &ExperimentConfig, base: &Path, seed: u64, workers: usize) -> Result<Outcome, CliError> {
    let model = cfg.perturbed_model(base)?;
    let u_grid = cfg.u_grid()?;
    if u_grid[0] <= 0.0 {
        return Err(ConfigError::new("u_grid[0]", "must be positive").into());
    }
    let sim = cfg.simulation()?;
    let d = ReportBudget::default();
    let budget = ReportBudget {
        n: sim.n,
        m: sim.m.unwrap_or(d.m),
        workers,
        min_hits: sim.min_hits.unwrap_or(d.min_hits),
    };
    let prov = provider(cfg, seed, workers)?;
    let report = tail_equivalence_report(&model, &u_grid, &budget, seed, &prov).map_err(from_levy)?;
    let mut notes = vec![format!("verdict: {}", report.verdict)];
    if let Some(b) = &report.banner {
        eprintln!("WARNING: {b}");
        notes.push(b.clone());
    }
    Ok(Outcome {
        table: Table::new(&levy::REPORT_CSV_HEADER, report.csv_rows()),
        extra: vec![],
        notes,
    })
}

pub const REPORT_HEADER: [&str; 11] = [
    "u", "regime", "asymptote", "provenance", "method", "p_hat", "stderr", "ratio", "ess", "log10_asymptote", "log10_p_hat",
];

fn run_report(cfg: &ExperimentConfig, base: &Path, seed: u64, workers: usize) -> Result<Outcome, CliError> {
    let model = cfg.model(base)?;
    let u_grid = cfg.u_grid()?;
    let sim = cfg.simulation()?;
    let grid = cfg.grid(model.horizon())?;
    let prov = provider(cfg, seed, workers)?;
    let method = sim.method.as_deref().unwrap_or("importance");
    let l10 = std::f64::consts::LN_10;
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for (i, &u) in u_grid.iter().enumerate() {
        let a = ruin_asymptotic(&model, u, &prov).map_err(|e| from_asym(e, &format!("u_grid[{i}]")))?;
        let e = match method {
            "importance" => crossing_prob_is(&model, u, grid, sim.n, seed, workers),
            "crude" => crossing_prob_mc(&model, u, grid, sim.n, seed, workers),
            other => return Err(ConfigError::new("simulation.method", format!("`{other}` not supported by report (crude or importance)")).into()),
        }
        .map_err(from_sim)?;
        for f in &e.flags {
            notes.push(format!("u={u}: {f}"));
        }
        rows.push(vec![
            format!("{u}"),
            a.regime.to_string(),
            format!("{:.12e}", a.value),
            a.provenance.to_string(),
            e.method.to_string(),
            format!("{:.12e}", e.p_hat),
            format!("{:.6e}", e.stderr),
            format!("{:.6}", (e.log_p_hat - a.log_value).exp()),
            e.ess.map(|x| format!("{x:.1}")).unwrap_or_default(),
            format!("{:.6}", a.log_value / l10),
            format!("{:.6}", e.log_p_hat / l10),
        ]);
    }
    Ok(Outcome {
        table: Table::new(&REPORT_HEADER, rows),
        extra: vec![],
        notes,
    })
}

/// Entry point shared by the binary: parses `args`, runs, prints a summary
/// and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (name, args) = match &cli.command {
        Command::Asym(a) => (CommandName::Asym, a),
        Command::Simulate(a) => (CommandName::Simulate, a),
        Command::Constants(a) => (CommandName::Constants, a),
        Command::Perturbed(a) => (CommandName::Perturbed, a),
        Command::Report(a) => (CommandName::Report, a),
    };
    match run(name, args) {
        Ok(s) => {
            for n in &s.notes {
                eprintln!("note: {n}");
            }
            for p in &s.outputs {
                println!("wrote {}", p.display());
            }
            println!("manifest {}", s.manifest.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(config: &Path, out: &Path) -> RunArgs {
        RunArgs {
            config: config.to_path_buf(),
            seed: None,
            workers: None,
            out: Some(out.to_path_buf()),
            format: Format::Csv,
        }
    }

    #[test]
    fn asym_writes_csv_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(
            &cfg,
            "u_grid = [5.0, 10.0, 20.0]\n[model]\nT = 1.0\ncomponents = [{ weight = 1.0, family = \"fbm\", hurst = 0.5 }]\ntrend = { kind = \"linear\", rate = 1.0 }\n",
        )
        .unwrap();
        let s = run(CommandName::Asym, &args(&cfg, dir.path())).unwrap();
        let body = std::fs::read_to_string(&s.outputs[0]).unwrap();
        assert_eq!(body.lines().count(), 4);
        assert!(body.lines().nth(1).unwrap().contains("ALPHA_EQ_BETA"));
        let manifest = std::fs::read_to_string(&s.manifest).unwrap();
        assert!(manifest.contains("config_sha256"));
    }

    #[test]
    fn exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(
            &cfg,
            "u_grid = [5.0]\n[model]\nT = 1.0\ncomponents = [{ weight = -1.0, family = \"fbm\", hurst = 0.5 }]\n",
        )
        .unwrap();
        let e = run(CommandName::Asym, &args(&cfg, dir.path())).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().contains("model.components[0].weight"), "{e}");
        let missing = dir.path().join("nope.toml");
        assert_eq!(run(CommandName::Asym, &args(&missing, dir.path())).unwrap_err().exit_code(), 3);
        let code = main_with_args(["aggruin", "asym", "--config", cfg.to_str().unwrap(), "--format", "json"]);
        assert_eq!(code, 1);
    }
}
