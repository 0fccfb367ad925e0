//! Command-line frontend: configuration, subcommands and exit codes.
//!
//! Settings come from an optional TOML or JSON file; command-line flags
//! override it. Every command runs inside a rayon pool sized by `--threads`,
//! and its output does not depend on that size.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use diskpop::catalog::{
    generate_synthetic_corpus_with, parse_catalog_weeks, write_catalog, CatalogFormat,
    DatasetRecord, PopularMixConfig, SplitConfig,
};
use diskpop::evaluation::{
    comparison_report, render_report_table, write_report_csv, ComparisonGrid, TimeParams,
};
use diskpop::features::{extract_corpus, write_feature_dump};
use diskpop::intensity::{default_bandwidth_grid, write_intensity_dump};
use diskpop::pipeline::{score_corpus, PipelineConfig};
use diskpop::placement::{verify_plan, write_plan_csv, CostParams, PlanSummary};
use diskpop::popularity::GbdtConfig;

/// Exit code for a failed pipeline stage.
pub const EXIT_PIPELINE: u8 = 1;
/// Exit code for bad usage, configuration or input/output.
pub const EXIT_USAGE: u8 = 2;

/// A failure together with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

impl CliError {
    fn usage(error: anyhow::Error) -> Self {
        Self {
            code: EXIT_USAGE,
            error,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<diskpop::Error> for CliError {
    fn from(e: diskpop::Error) -> Self {
        use diskpop::Error as E;
        let code = match e {
            E::Io { .. }
            | E::Parse { .. }
            | E::WeekCount { .. }
            | E::DuplicateId(_)
            | E::Config(_)
            | E::Csv(_) => EXIT_USAGE,
            _ => EXIT_PIPELINE,
        };
        Self {
            code,
            error: e.into(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    pub alpha: Vec<f64>,
    pub max_replicas: Vec<u32>,
    pub lru_weeks: Vec<usize>,
    /// Candidate smoothing bandwidths in weeks.
    pub bandwidth: Vec<f64>,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            alpha: vec![0.0, 0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 2.0],
            max_replicas: vec![4, 7],
            lru_weeks: ComparisonGrid::default().lru_weeks,
            bandwidth: default_bandwidth_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub n: usize,
    pub mix: PopularMixConfig,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            n: 7375,
            mix: PopularMixConfig::default(),
        }
    }
}

/// Everything a run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: Option<CatalogFormat>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub generate: GenerateConfig,
    pub split: SplitConfig,
    pub gbdt: GbdtConfig,
    pub costs: CostParams,
    pub times: TimeParams,
    pub grids: Grids,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            out: None,
            format: None,
            seed: 42,
            threads: None,
            generate: GenerateConfig::default(),
            split: SplitConfig::default(),
            gbdt: GbdtConfig::default(),
            costs: CostParams::default(),
            times: TimeParams::default(),
            grids: Grids::default(),
        }
    }
}

impl RunConfig {
    /// Reads a `.toml` or `.json` config file.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("")
            .to_ascii_lowercase();
        match ext.as_str() {
            "json" => {
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
            }
            "toml" => toml::from_str(&text).with_context(|| format!("parsing {}", path.display())),
            _ => Err(anyhow!(
                "config {} must end in .toml or .json",
                path.display()
            )),
        }
    }

    pub fn validate(&self) -> diskpop::Result<()> {
        use diskpop::Error;
        self.split.validate()?;
        self.gbdt.validate()?;
        self.costs.validate()?;
        self.times.validate()?;
        self.generate.mix.validate()?;
        let g = &self.grids;
        if g.alpha.is_empty()
            || g.max_replicas.is_empty()
            || g.lru_weeks.is_empty()
            || g.bandwidth.is_empty()
        {
            return Err(Error::Config(
                "grids.alpha, max_replicas, lru_weeks and bandwidth must be nonempty".into(),
            ));
        }
        for &a in &g.alpha {
            CostParams {
                alpha: a,
                ..self.costs
            }
            .validate()?;
        }
        if g.max_replicas.contains(&0) {
            return Err(Error::Config(
                "grids.max_replicas entries must be at least 1".into(),
            ));
        }
        if let Some(&n) = g
            .lru_weeks
            .iter()
            .find(|&&n| n < 1 || n > self.split.observation_weeks)
        {
            return Err(Error::Config(format!(
                "grids.lru_weeks entry {n} outside 1..={}",
                self.split.observation_weeks
            )));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }

    fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            split: self.split,
            gbdt: self.gbdt.clone(),
            bandwidth_grid: self.grids.bandwidth.clone(),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for CatalogFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => CatalogFormat::Csv,
            FormatArg::Json => CatalogFormat::Json,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "diskpop",
    version,
    about = "Recommend which datasets stay on disk, and with how many replicas"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML or JSON run configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file (generate, features) or directory (recommend, compare).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Root seed for every random stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Catalogue format; guessed from the file extension when omitted.
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic catalogue (default mix: 50% cold, 50% hot).
    Generate {
        /// Number of datasets.
        #[arg(long)]
        n: Option<usize>,
        /// Share of datasets unused in the final weeks; the rest stay in use.
        #[arg(long)]
        cold_fraction: Option<f64>,
    },
    /// Dump the feature vectors and labels of a catalogue.
    Features {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Score a catalogue and write the placement plan.
    Recommend {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Re-check the plan's invariants and fail if any is violated.
        #[arg(long)]
        verify: bool,
    },
    /// Compare the optimizer over its grids against LRU.
    Compare {
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

/// Merges the config file (if any) with flag overrides.
pub fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let g = &cli.global;
    let mut config = match &g.config {
        Some(path) => RunConfig::load(path).map_err(CliError::usage)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &g.out {
        config.out = Some(out.clone());
    }
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(t) = g.threads {
        config.threads = Some(t);
    }
    if let Some(f) = g.format {
        config.format = Some(f.into());
    }
    match &cli.command {
        Command::Generate { n, cold_fraction } => {
            if let Some(n) = n {
                config.generate.n = *n;
            }
            if let Some(c) = cold_fraction {
                config.generate.mix = PopularMixConfig::with_cold_fraction(*c);
            }
        }
        Command::Features { input }
        | Command::Recommend { input, .. }
        | Command::Compare { input } => {
            if let Some(i) = input {
                config.input = Some(i.clone());
            }
        }
    }
    config.validate()?;
    Ok(config)
}

/// Parses flags, builds the thread pool and runs the command.
pub fn run(cli: Cli) -> CliResult<()> {
    let config = resolve_config(&cli)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = config.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::usage(anyhow!("building thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Generate { .. } => cmd_generate(&config),
        Command::Features { .. } => cmd_features(&config),
        Command::Recommend { verify, .. } => cmd_recommend(&config, verify),
        Command::Compare { .. } => cmd_compare(&config),
    })
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> CliResult<&'a Path> {
    path.as_deref().ok_or_else(|| {
        CliError::usage(anyhow!(
            "missing {what}; pass --{what} or set it in the config"
        ))
    })
}

fn format_for(config: &RunConfig, path: &Path) -> CliResult<CatalogFormat> {
    config
        .format
        .or_else(|| CatalogFormat::from_path(path))
        .ok_or_else(|| {
            CliError::usage(anyhow!(
                "cannot tell the format of {}; pass --format csv or --format json",
                path.display()
            ))
        })
}

fn load_input(config: &RunConfig) -> CliResult<Vec<DatasetRecord>> {
    let path = required(&config.input, "input")?;
    let format = format_for(config, path)?;
    Ok(parse_catalog_weeks(
        path,
        format,
        config.split.total_weeks(),
    )?)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(CliError::usage)
}

fn out_dir(config: &RunConfig) -> CliResult<&Path> {
    let dir = required(&config.out, "out")?;
    fs::create_dir_all(dir)
        .with_context(|| format!("creating directory {}", dir.display()))
        .map_err(CliError::usage)?;
    Ok(dir)
}

fn finish(mut w: BufWriter<File>, path: &Path) -> CliResult<()> {
    w.flush()
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::usage)
}

pub fn cmd_generate(config: &RunConfig) -> CliResult<()> {
    let out = required(&config.out, "out")?;
    if config.generate.n == 0 {
        return Err(CliError::usage(anyhow!("--n must be at least 1")));
    }
    let format = format_for(config, out)?;
    let records = generate_synthetic_corpus_with(
        config.generate.n,
        config.seed,
        &config.generate.mix,
        &config.split,
    )?;
    write_catalog(&records, out, format)?;
    Ok(())
}

pub fn cmd_features(config: &RunConfig) -> CliResult<()> {
    let records = load_input(config)?;
    let out = required(&config.out, "out")?;
    let features = extract_corpus(&records, &config.split);
    let mut w = create(out)?;
    write_feature_dump(&records, &features, &mut w)?;
    finish(w, out)
}

/// Writes `plan.csv`, `summary.json` and `intensity.csv` into the output directory.
pub fn cmd_recommend(config: &RunConfig, verify: bool) -> CliResult<()> {
    let records = load_input(config)?;
    let dir = out_dir(config)?;
    let scored = score_corpus(&records, &config.pipeline())?;
    let plan = scored.optimize(&config.costs)?;
    if verify {
        verify_plan(&plan, &scored.inputs(), &config.costs)?;
        if scored
            .scores
            .iter()
            .any(|s| !(0.0..=1.0).contains(&s.probability) || !(0.0..=1.0).contains(&s.popularity))
        {
            return Err(CliError {
                code: EXIT_PIPELINE,
                error: anyhow!("verification failed: a score lies outside [0, 1]"),
            });
        }
    }

    let path = dir.join("plan.csv");
    let mut w = create(&path)?;
    write_plan_csv(&plan, scored.popularity(), scored.intensity(), &mut w)?;
    finish(w, &path)?;

    let path = dir.join("intensity.csv");
    let mut w = create(&path)?;
    write_intensity_dump(&records, &scored.forecasts, &mut w)?;
    finish(w, &path)?;

    let path = dir.join("summary.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &PlanSummary::new(&plan, &records))
        .map_err(diskpop::Error::from)?;
    writeln!(w)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::usage)?;
    finish(w, &path)
}

/// Writes `report.csv` and `report.txt` into the output directory.
pub fn cmd_compare(config: &RunConfig) -> CliResult<()> {
    let records = load_input(config)?;
    let dir = out_dir(config)?;
    let scored = score_corpus(&records, &config.pipeline())?;
    let grid = ComparisonGrid {
        alphas: config.grids.alpha.clone(),
        max_replicas: config.grids.max_replicas.clone(),
        lru_weeks: config.grids.lru_weeks.clone(),
    };
    let rows = comparison_report(
        &records,
        &scored,
        &config.split,
        &config.costs,
        &config.times,
        &grid,
    )?;

    let path = dir.join("report.csv");
    let mut w = create(&path)?;
    write_report_csv(&rows, &mut w)?;
    finish(w, &path)?;

    let path = dir.join("report.txt");
    let mut w = create(&path)?;
    w.write_all(render_report_table(&rows).as_bytes())
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::usage)?;
    finish(w, &path)
}
