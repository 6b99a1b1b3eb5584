//! Command-line front end: JSON run configuration, experiment dispatch and
//! CSV output.

use std::ffi::OsString;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::agents::{FixedLevels, Policy};
use crate::engine::{rollout, StepRecord};
use crate::error::SimError;
use crate::experiments::{
    action_sweep, calibrate_damage, horizon_experiment, masking_demo, pariah_experiment, tariff_effect_experiment,
    trade_effect_experiment, SweepGrid, SWEEP_MEASURES,
};
use crate::types::{ActionDimension, SimParams, VariantConfig, MAX_LEVEL, N_LEVELS};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "RICE_SIM_OUT";
/// Output directory used when neither the flag, the config nor the environment names one.
pub const DEFAULT_OUT_DIR: &str = "rice-sim-out";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Subcommand)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// One episode with the configured policy, every step recorded.
    Run,
    /// Fixed-action sweep with correlation matrix.
    Sweep,
    /// Tariff study with a random subject region per run.
    Pariah,
    /// Full trade against no trade.
    TradeEffect,
    /// Max tariff against zero tariff under ideal trade.
    TariffEffect,
    /// End-of-run damages at several horizons.
    Horizon,
    /// Commitment statistics under random proposals.
    MaskingDemo,
    /// Fit the quadratic damage coefficient.
    Calibrate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Sweep => "sweep",
            Command::Pariah => "pariah",
            Command::TradeEffect => "trade-effect",
            Command::TariffEffect => "tariff-effect",
            Command::Horizon => "horizon",
            Command::MaskingDemo => "masking-demo",
            Command::Calibrate => "calibrate",
        }
    }
}

/// Per-experiment settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Experiment the config was written for; the subcommand takes precedence.
    pub kind: Option<Command>,
    /// Levels per action dimension in the sweep.
    pub grid: u8,
    pub pariah_runs: usize,
    pub tariff_levels: Vec<u8>,
    pub masking_episodes: usize,
    pub horizons: Vec<u32>,
    /// Policy for `run`.
    pub policy: Policy,
    /// Use a 10-level sweep grid and 1000 pariah runs per condition.
    pub full_scale: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: None,
            grid: 4,
            pariah_runs: 100,
            tariff_levels: vec![5, 7, 9],
            masking_episodes: 10_000,
            horizons: vec![100, 200, 300],
            policy: Policy::FixedLevels(FixedLevels::IDEAL_TRADE),
            full_scale: false,
        }
    }
}

impl ExperimentConfig {
    pub fn effective_grid(&self) -> u8 {
        if self.full_scale {
            N_LEVELS as u8
        } else {
            self.grid
        }
    }

    pub fn effective_pariah_runs(&self) -> usize {
        if self.full_scale {
            1000
        } else {
            self.pariah_runs
        }
    }

    pub fn validate(&self, dt_years: u32) -> Result<(), SimError> {
        SweepGrid::uniform(self.grid)
            .validate()
            .map_err(|_| SimError::config("experiment.grid", format!("must lie in 1..=10, got {}", self.grid)))?;
        if self.pariah_runs == 0 {
            return Err(SimError::config("experiment.pariah_runs", "must be at least 1"));
        }
        if let Some(l) = self.tariff_levels.iter().find(|&&l| l > MAX_LEVEL) {
            return Err(SimError::config(
                "experiment.tariff_levels",
                format!("level {l} exceeds 9"),
            ));
        }
        if self.masking_episodes == 0 {
            return Err(SimError::config("experiment.masking_episodes", "must be at least 1"));
        }
        if let Some(h) = self.horizons.iter().find(|&&h| h == 0 || !h.is_multiple_of(dt_years)) {
            return Err(SimError::config(
                "experiment.horizons",
                format!("{h} is not a positive multiple of dt_years ({dt_years})"),
            ));
        }
        Ok(())
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Worker threads; all available cores when absent.
    pub workers: Option<usize>,
    pub params: SimParams,
    pub variant: VariantConfig,
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.params.validate()?;
        self.variant.validate()?;
        self.experiment.validate(self.params.dt_years)?;
        if self.workers == Some(0) {
            return Err(SimError::config("workers", "must be at least 1"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Parses and validates a JSON run configuration. An empty document yields
/// the defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, SimError> {
    let config: RunConfig = if text.trim().is_empty() {
        RunConfig::default()
    } else {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let key = if path == "." { "<root>".to_string() } else { path };
            SimError::config(key, e.into_inner().to_string())
        })?
    };
    config.validate()?;
    Ok(config)
}

/// Written next to every set of outputs; passing it back through `--config`
/// repeats the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub config: RunConfig,
}

/// Reads either a run config or a manifest.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    if let Ok(manifest) = serde_json::from_str::<Manifest>(&text) {
        manifest.config.validate()?;
        return Ok(manifest.config);
    }
    Ok(parse_config(&text)?)
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config { .. } => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn runtime(e: impl Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "rice-sim",
    version,
    about = "Multi-region climate-economy simulator and experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration, or a manifest from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: $RICE_SIM_OUT, else rice-sim-out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Levels per action dimension for the sweep (1-10).
    #[arg(long, global = true)]
    grid: Option<u8>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// 10-level sweep and 1000 pariah runs per condition.
    #[arg(long, global = true)]
    full_scale: bool,
}

/// Runs the command line in `argv` (program name first) and returns the
/// process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(dir) => {
            println!("{}: outputs written to {}", cli.command.name(), dir.display());
            0
        }
        Err(e) => {
            eprintln!("rice-sim {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

fn resolve(cli: &Cli) -> Result<(RunConfig, PathBuf), CliError> {
    let mut config = match &cli.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    config.experiment.kind = Some(cli.command);
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(grid) = cli.grid {
        config.experiment.grid = grid;
    }
    if let Some(workers) = cli.workers {
        config.workers = Some(workers);
    }
    if cli.full_scale {
        config.experiment.full_scale = true;
    }
    if let Some(out) = &cli.out {
        config.out_dir = Some(out.clone());
    }
    config.validate()?;
    let dir = config
        .out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    Ok((config, dir))
}

fn execute(cli: &Cli) -> Result<PathBuf, CliError> {
    let (config, dir) = resolve(cli)?;
    fs::create_dir_all(&dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
    let mut out = Output {
        dir: dir.clone(),
        files: Vec::new(),
    };
    run_command(cli.command, &config, &mut out)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cli.command,
        seed: config.seed,
        outputs: out.files.clone(),
        config,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(runtime)? + "\n";
    fs::write(dir.join(MANIFEST_FILE), text).map_err(runtime)?;
    Ok(dir)
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = Vec<String>>,
    ) -> Result<(), CliError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(self.dir.join(name))
            .map_err(runtime)?;
        w.write_record(header).map_err(runtime)?;
        for row in rows {
            w.write_record(&row).map_err(runtime)?;
        }
        w.flush().map_err(runtime)?;
        self.files.push(name.into());
        Ok(())
    }

    fn summary(&mut self, pairs: Vec<(&str, String)>) -> Result<(), CliError> {
        self.csv(
            "summary.csv",
            &["key", "value"],
            pairs.into_iter().map(|(k, v)| vec![k.to_string(), v]),
        )
    }
}

/// CSV cell text. Floats use the shortest representation that parses back
/// to the same value.
trait Cell {
    fn cell(&self) -> String;
}

impl Cell for f64 {
    fn cell(&self) -> String {
        format!("{self:?}")
    }
}

macro_rules! display_cell {
    ($($t:ty),*) => {
        $(impl Cell for $t {
            fn cell(&self) -> String {
                self.to_string()
            }
        })*
    };
}

display_cell!(u8, u32, u64, usize, ActionDimension);

fn s(v: impl Cell) -> String {
    v.cell()
}

fn opt(v: Option<f64>) -> String {
    v.map(s).unwrap_or_default()
}

fn run_command(command: Command, config: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let (p, v, e, seed, workers) = (
        &config.params,
        &config.variant,
        &config.experiment,
        config.seed,
        config.workers,
    );
    match command {
        Command::Run => {
            let mut steps: Vec<StepRecord> = Vec::new();
            let summary = rollout(p, v, &e.policy, seed, |r| steps.push(r))?;
            let rows = steps.iter().flat_map(|r| {
                r.actions.regions.iter().enumerate().map(move |(i, a)| {
                    vec![
                        s(r.step),
                        s(i),
                        s(a.savings),
                        s(a.mitigation),
                        s(a.max_export),
                        r.commitments.as_ref().map(|c| s(c[i])).unwrap_or_default(),
                        s(r.economy[i].gross_output),
                        s(r.economy[i].net_output),
                        s(r.economy[i].investment),
                        s(r.economy[i].emissions),
                        s(r.consumption[i].domestic),
                        s(r.consumption[i].foreign),
                        s(r.consumption[i].aggregate),
                        s(r.exports_scaled[i]),
                        s(r.imports_scaled[i]),
                        s(r.tariff_revenue[i]),
                        s(r.balance_after[i]),
                        s(r.rewards[i]),
                        s(r.temperature),
                        s(r.climate.t_atmosphere),
                    ]
                })
            });
            out.csv(
                "steps.csv",
                &[
                    "step",
                    "region",
                    "savings",
                    "mitigation",
                    "max_export",
                    "commitment",
                    "gross_output",
                    "net_output",
                    "investment",
                    "emissions",
                    "consumption_domestic",
                    "consumption_foreign",
                    "consumption_aggregate",
                    "exports",
                    "imports",
                    "tariff_revenue",
                    "balance",
                    "reward",
                    "temperature_start",
                    "temperature_end",
                ],
                rows,
            )?;
            out.summary(vec![
                ("seed", s(seed)),
                ("delta_t_end", s(summary.delta_t_end)),
                ("cumulative_gross_output", s(summary.cumulative_gross_output)),
                ("mean_reward", s(summary.mean_reward())),
                ("damage_end", s(summary.damage_end)),
                ("carbon_balance_error", s(summary.carbon_balance_error)),
            ])
        }
        Command::Sweep => {
            let grid = SweepGrid::uniform(e.effective_grid());
            let t = action_sweep(p, v, grid, seed, workers)?;
            out.csv(
                "sweep.csv",
                &[
                    "savings",
                    "mitigation",
                    "max_export",
                    "desired_import",
                    "tariff",
                    "delta_t_end",
                    "cumulative_gross_output",
                    "mean_reward",
                    "climate_index",
                    "economic_index",
                ],
                t.rows.iter().map(|r| {
                    let mut row: Vec<String> = ActionDimension::ALL.iter().map(|&d| s(r.levels.level(d))).collect();
                    row.extend([
                        s(r.delta_t_end),
                        s(r.cumulative_gross_output),
                        s(r.mean_reward),
                        s(r.climate_index),
                        s(r.economic_index),
                    ]);
                    row
                }),
            )?;
            let mut header = vec!["action"];
            header.extend(SWEEP_MEASURES);
            out.csv(
                "correlations.csv",
                &header,
                ActionDimension::ALL.iter().map(|&d| {
                    let mut row = vec![s(d)];
                    row.extend(t.correlations[d.index()].iter().map(|&c| opt(c)));
                    row
                }),
            )?;
            out.summary(vec![
                ("seed", s(seed)),
                ("grid", s(grid.0[0])),
                ("rows", s(t.rows.len())),
                ("distinct_points", s(t.distinct_points)),
                ("max_carbon_balance_error", s(t.max_carbon_balance_error)),
            ])
        }
        Command::Pariah => {
            let r = pariah_experiment(p, v, e.effective_pariah_runs(), &e.tariff_levels, seed, workers)?;
            out.csv(
                "pariah.csv",
                &["condition", "run", "subject", "reward", "z", "tariff_toward_subject"],
                r.conditions.iter().flat_map(|c| {
                    c.samples.iter().map(move |x| {
                        vec![
                            c.condition.label(),
                            s(x.run),
                            s(x.subject),
                            s(x.reward),
                            s(x.z),
                            s(x.tariff_toward_subject),
                        ]
                    })
                }),
            )?;
            out.csv(
                "pariah_summary.csv",
                &["condition", "runs", "mean_z", "std_z", "realized_mean_tariff"],
                r.conditions.iter().map(|c| {
                    vec![
                        c.condition.label(),
                        s(c.samples.len()),
                        s(c.mean_z),
                        s(c.std_z),
                        s(c.realized_mean_tariff),
                    ]
                }),
            )
        }
        Command::TradeEffect => {
            let r = trade_effect_experiment(p, v, seed)?;
            out.csv(
                "trade_effect.csv",
                &["region", "max_trade_reward", "no_trade_reward", "ratio"],
                (0..r.ratio.len())
                    .map(|i| vec![s(i), s(r.max_trade_reward[i]), s(r.no_trade_reward[i]), s(r.ratio[i])]),
            )
        }
        Command::TariffEffect => {
            let r = tariff_effect_experiment(p, v, seed)?;
            out.csv(
                "tariff_effect.csv",
                &[
                    "region",
                    "baseline_reward",
                    "all_tariffed_reward",
                    "total_change",
                    "own_tariff_change",
                    "received_tariff_change",
                    "baseline_exports",
                    "baseline_imports",
                ],
                (0..r.baseline_reward.len()).map(|i| {
                    vec![
                        s(i),
                        s(r.baseline_reward[i]),
                        s(r.all_tariffed_reward[i]),
                        s(r.total_change[i]),
                        s(r.own_tariff_change[i]),
                        s(r.received_tariff_change[i]),
                        s(r.baseline_exports[i]),
                        s(r.baseline_imports[i]),
                    ]
                }),
            )
        }
        Command::Horizon => {
            let r = horizon_experiment(p, v, &e.horizons, seed)?;
            out.csv(
                "horizon.csv",
                &["horizon_years", "delta_t_end", "damage_end"],
                r.rows
                    .iter()
                    .map(|h| vec![s(h.horizon_years), s(h.delta_t_end), s(h.damage_end)]),
            )?;
            let mut pairs = vec![("seed", s(seed))];
            if let Some(c) = r.calibration {
                pairs.push(("damage_quadratic", s(c.damage_quadratic)));
                pairs.push(("calibration_t_ref", s(c.t_ref)));
            }
            out.summary(pairs)
        }
        Command::MaskingDemo => {
            let r = masking_demo(p, e.masking_episodes, seed, workers)?;
            let total: u64 = r.histogram.iter().sum();
            out.csv(
                "masking.csv",
                &["level", "count", "frequency"],
                r.histogram
                    .iter()
                    .enumerate()
                    .map(|(k, &c)| vec![s(k), s(c), s(c as f64 / total as f64)]),
            )?;
            out.summary(vec![
                ("seed", s(seed)),
                ("n_regions", s(r.n_regions)),
                ("episodes", s(r.episodes)),
                ("mean_commitment", s(r.mean_commitment)),
                ("p_max_commitment", s(r.p_max_commitment)),
                ("analytic_mean_commitment", s(r.analytic_mean_commitment)),
                ("analytic_p_max_commitment", s(r.analytic_p_max_commitment)),
                ("mean_mitigation_masked", opt(r.mean_mitigation_masked)),
                ("mean_mitigation_unmasked", opt(r.mean_mitigation_unmasked)),
            ])
        }
        Command::Calibrate => {
            let c = calibrate_damage(p, v, seed)?;
            out.csv(
                "calibration.csv",
                &["damage_quadratic", "t_ref", "d_ref", "iterations"],
                [vec![s(c.damage_quadratic), s(c.t_ref), s(c.d_ref), s(c.iterations)]],
            )
        }
    }
}
