//! Command-line front end: `run` parses arguments, executes one pipeline
//! stage and returns the process exit code.

pub mod format;
pub mod manifest;
pub mod svg;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use panel_bias::bias::{self, Scope, StageFilter};
use panel_bias::ingest::{parse_dataset, preprocess, MarkRecord};
use panel_bias::pipeline::{analyze, Analysis, AnalysisConfig};
use panel_bias::ranking::{ranking_impact, ranking_impact_default, AggregationRule, RankingSummary, ReferenceHandling};
use panel_bias::stats::weighted_ecdf;
use panel_bias::synth::{generate, GeneratorConfig};
use panel_bias::variability::{profile_all, SigmaModel};

use format::EstimateRow;
use manifest::{FileDigest, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Keys of the configuration file read by the analysis subcommands; they may
/// also sit in an `[analysis]` table. Everything else is generator config.
const ANALYSIS_KEYS: [&str; 4] = ["min_median", "min_panel", "exclude_sn_from_profiles", "covariance"];

#[derive(Debug, Parser)]
#[command(name = "panel-bias", version, about = "National bias analysis for judging panels")]
pub struct Cli {
    /// Worker threads (defaults to all cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides the generator seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Only report errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// TOML configuration file.
    #[arg(long, global = true, env = "PANEL_BIAS_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    Discipline,
    Nation,
    Judge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    All,
    Finals,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReferenceArg {
    Average,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotFormat {
    Svg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    Scatter,
    Forest,
    /// Same-nationality estimates weighted by their mark counts.
    Ecdf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Six disciplines with the reference dataset's sizes and bias levels.
    FullCorpus,
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    match s {
        "0.05" => Ok(0.05),
        "0.01" => Ok(0.01),
        _ => Err("must be 0.05 or 0.01".into()),
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic mark file and its ground truth.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Built-in configuration used instead of `--config`.
        #[arg(long, value_enum)]
        preset: Option<Preset>,
    },
    /// Fit the judging error variability curve of every group.
    FitSigma {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "sigma.csv")]
        out: PathBuf,
        /// SVG chart of the fitted curves.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Per-judge tendency and marking score.
    MarkingScores {
        #[arg(long = "in")]
        input: PathBuf,
        /// Fitted curves from `fit-sigma`; refitted when absent.
        #[arg(long)]
        sigma: Option<PathBuf>,
        #[arg(long, default_value = "profiles.csv")]
        out: PathBuf,
        /// Leave same-nationality marks out of the profiles.
        #[arg(long)]
        exclude_sn: bool,
    },
    /// Estimate same-nationality and direct-competitor bias.
    EstimateBias {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        sigma: Option<PathBuf>,
        #[arg(long)]
        profiles: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "discipline")]
        scope: ScopeArg,
        #[arg(long, value_enum, default_value = "all")]
        stage: StageArg,
        /// Leave out estimates with fewer same-nationality marks.
        #[arg(long, default_value_t = 0)]
        min_sn_marks: usize,
        /// Significance level for highlighting in charts.
        #[arg(long, default_value = "0.05", value_parser = parse_alpha)]
        alpha: f64,
        #[arg(long, default_value = "estimates.csv")]
        out: PathBuf,
        /// Weighted ECDF of the estimates.
        #[arg(long)]
        ecdf: Option<PathBuf>,
        /// SVG scatter of estimates against same-nationality marks.
        #[arg(long)]
        plot: Option<PathBuf>,
        /// SVG chart of confidence intervals.
        #[arg(long)]
        forest: Option<PathBuf>,
    },
    /// Rank every event with and without same-nationality marks.
    RankingImpact {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "ranking.csv")]
        out: PathBuf,
        /// Marks dropped at each end of the panel; discipline defaults when
        /// absent.
        #[arg(long)]
        trim: Option<usize>,
        #[arg(long, value_enum, default_value = "average")]
        reference_handling: ReferenceArg,
        /// Aggregate the panel with its median.
        #[arg(long)]
        median: bool,
        /// Summary counts as JSON.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Charts and tables from an estimates file.
    Report {
        #[arg(long)]
        estimates: PathBuf,
        #[arg(long, value_enum, default_value = "svg")]
        plot: PlotFormat,
        #[arg(long, value_enum, default_value = "scatter")]
        kind: PlotKind,
        #[arg(long, default_value = "0.01", value_parser = parse_alpha)]
        alpha: f64,
        #[arg(long, default_value = "report.svg")]
        out: PathBuf,
        /// Markdown table of the estimates.
        #[arg(long)]
        table: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Runs the command line `argv` (program name first) and returns the exit
/// code: 0 on success, 1 on data errors, 2 on usage errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.quiet { log::LevelFilter::Error } else { log::LevelFilter::Warn };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();

    let result = match cli.threads {
        Some(0) => Err(UsageError("--threads must be positive".into()).into()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(anyhow::Error::from)
            .and_then(|pool| pool.install(|| execute(&cli))),
        None => execute(&cli),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                EXIT_USAGE
            } else {
                EXIT_DATA
            }
        }
    }
}

fn read_config_table(path: &Path) -> Result<toml::Table> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    text.parse::<toml::Table>().with_context(|| format!("parsing config {}", path.display()))
}

fn analysis_config(cli: &Cli) -> Result<AnalysisConfig> {
    let Some(path) = &cli.config else { return Ok(AnalysisConfig::default()) };
    let table = read_config_table(path)?;
    let mut merged = toml::Table::new();
    for key in ANALYSIS_KEYS {
        if let Some(v) = table.get(key) {
            merged.insert(key.to_string(), v.clone());
        }
    }
    if let Some(toml::Value::Table(t)) = table.get("analysis") {
        merged.extend(t.clone());
    }
    AnalysisConfig::from_toml_str(&toml::to_string(&merged)?).with_context(|| format!("config {}", path.display()))
}

fn generator_config(cli: &Cli, preset: Option<Preset>) -> Result<GeneratorConfig> {
    let mut cfg = match (preset, &cli.config) {
        (Some(Preset::FullCorpus), _) => GeneratorConfig::full_corpus(cli.seed.unwrap_or(0)),
        (None, Some(path)) => {
            let mut table = read_config_table(path)?;
            table.remove("analysis");
            for key in ANALYSIS_KEYS {
                table.remove(key);
            }
            GeneratorConfig::from_toml_str(&toml::to_string(&table)?).with_context(|| format!("config {}", path.display()))?
        }
        (None, None) => bail!(UsageError("simulate needs --config, PANEL_BIAS_CONFIG or --preset".into())),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_marks(path: &Path) -> Result<Vec<MarkRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    parse_dataset(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(contents)?;
    w.flush()?;
    Ok(())
}

struct Run<'a> {
    cli: &'a Cli,
    subcommand: &'static str,
    arguments: BTreeMap<String, String>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seed: Option<u64>,
}

impl<'a> Run<'a> {
    fn new(cli: &'a Cli, subcommand: &'static str) -> Self {
        Run { cli, subcommand, arguments: BTreeMap::new(), inputs: Vec::new(), outputs: Vec::new(), seed: None }
    }

    fn arg(&mut self, key: &str, value: impl ToString) {
        self.arguments.insert(key.to_string(), value.to_string());
    }

    fn finish(self) -> Result<()> {
        let digests = |paths: &[PathBuf]| -> Result<Vec<FileDigest>> { paths.iter().map(|p| manifest::digest(p)).collect() };
        let config = match &self.cli.config {
            Some(p) if p.exists() => Some(manifest::digest(p)?),
            _ => None,
        };
        let run = RunManifest {
            subcommand: self.subcommand.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seed: self.seed,
            arguments: self.arguments,
            inputs: digests(&self.inputs)?,
            outputs: digests(&self.outputs)?,
        };
        manifest::record(run, &self.outputs)
    }
}

fn say(cli: &Cli, line: &str) {
    if !cli.quiet {
        println!("{line}");
    }
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate { out, truth, preset } => simulate(cli, out, truth, *preset),
        Command::FitSigma { input, out, plot } => fit_sigma(cli, input, out, plot.as_deref()),
        Command::MarkingScores { input, sigma, out, exclude_sn } => marking_scores(cli, input, sigma.as_deref(), out, *exclude_sn),
        Command::EstimateBias { .. } => estimate_bias(cli),
        Command::RankingImpact { input, out, trim, reference_handling, median, summary } => {
            ranking(cli, input, out, *trim, *reference_handling, *median, summary.as_deref())
        }
        Command::Report { estimates, plot: _, kind, alpha, out, table } => report(cli, estimates, *kind, *alpha, out, table.as_deref()),
    }
}

fn simulate(cli: &Cli, out: &Path, truth_path: &Path, preset: Option<Preset>) -> Result<()> {
    let cfg = generator_config(cli, preset)?;
    let (csv, truth) = generate(&cfg)?;
    write_file(out, &csv)?;
    let mut json = truth.to_json();
    json.push('\n');
    write_file(truth_path, json.as_bytes())?;
    let rows: usize = truth.disciplines.iter().map(|d| d.n_marks).sum();
    say(cli, &format!("wrote {rows} marks to {}", out.display()));
    let mut run = Run::new(cli, "simulate");
    run.seed = Some(cfg.seed);
    if let Some(p) = preset {
        run.arg("preset", format!("{p:?}"));
    }
    run.outputs = vec![out.to_path_buf(), truth_path.to_path_buf()];
    run.finish()
}

fn load_analysis(cli: &Cli, input: &Path) -> Result<Analysis> {
    let records = read_marks(input)?;
    let cfg = analysis_config(cli)?;
    let a = analyze(&records, &cfg)?;
    let r = &a.preprocessed.report;
    log::info!(
        "{} of {} performances kept ({} below the median threshold, {} small panels)",
        r.kept_performances,
        r.input_performances,
        r.dropped_low_median,
        r.dropped_small_panel
    );
    Ok(a)
}

fn fit_sigma(cli: &Cli, input: &Path, out: &Path, plot: Option<&Path>) -> Result<()> {
    let a = load_analysis(cli, input)?;
    format::write_sigma(&a.models, create(out)?)?;
    let mut run = Run::new(cli, "fit-sigma");
    run.inputs.push(input.to_path_buf());
    run.outputs.push(out.to_path_buf());
    if let Some(p) = plot {
        let models: Vec<&SigmaModel> = a.models.values().collect();
        write_file(p, svg::sigma_curves(&models).as_bytes())?;
        run.outputs.push(p.to_path_buf());
    }
    say(cli, &format!("fitted {} groups ({} failed)", a.models.len(), a.fit_failures.len()));
    run.finish()
}

fn with_sigma(mut a: Analysis, sigma: Option<&Path>, run: &mut Run) -> Result<Analysis> {
    if let Some(path) = sigma {
        a.models = format::read_sigma(File::open(path).with_context(|| format!("opening {}", path.display()))?)?;
        a.marks.retain(|m| a.models.contains_key(&panel_bias::variability::GroupKey::for_record(&m.base)));
        a.profiles = profile_all(&a.marks, &a.models, a.config.exclude_sn_from_profiles);
        run.inputs.push(path.to_path_buf());
    }
    Ok(a)
}

fn marking_scores(cli: &Cli, input: &Path, sigma: Option<&Path>, out: &Path, exclude_sn: bool) -> Result<()> {
    let mut run = Run::new(cli, "marking-scores");
    run.inputs.push(input.to_path_buf());
    let mut a = load_analysis(cli, input)?;
    a.config.exclude_sn_from_profiles |= exclude_sn;
    a.profiles = profile_all(&a.marks, &a.models, a.config.exclude_sn_from_profiles);
    let a = with_sigma(a, sigma, &mut run)?;
    format::write_profiles(&a.profiles, create(out)?)?;
    run.arg("exclude_sn", a.config.exclude_sn_from_profiles);
    run.outputs.push(out.to_path_buf());
    say(cli, &format!("profiled {} judge-group pairs", a.profiles.len()));
    run.finish()
}

fn estimate_bias(cli: &Cli) -> Result<()> {
    let Command::EstimateBias { input, sigma, profiles, scope, stage, min_sn_marks, alpha, out, ecdf, plot, forest } = &cli.command else {
        unreachable!()
    };
    let mut run = Run::new(cli, "estimate-bias");
    run.inputs.push(input.clone());
    let a = with_sigma(load_analysis(cli, input)?, sigma.as_deref(), &mut run)?;
    let mut a = a;
    if let Some(path) = profiles {
        a.profiles = format::read_profiles(File::open(path).with_context(|| format!("opening {}", path.display()))?)?;
        run.inputs.push(path.clone());
    }
    let scope = match scope {
        ScopeArg::Discipline => Scope::Discipline,
        ScopeArg::Nation => Scope::Nation,
        ScopeArg::Judge => Scope::Judge,
    };
    let stage = match stage {
        StageArg::All => StageFilter::AllGymnasts,
        StageArg::Finals => StageFilter::Top8Finalists,
    };
    let estimates: Vec<_> = a.estimates(scope, stage)?.into_iter().filter(|e| e.fit.n_sn_marks >= *min_sn_marks).collect();
    let rows: Vec<EstimateRow> = estimates.iter().map(EstimateRow::from).collect();
    format::write_estimates(&rows, create(out)?)?;
    run.outputs.push(out.clone());
    run.arg("scope", scope);
    run.arg("stage", stage);
    run.arg("min_sn_marks", min_sn_marks);
    run.arg("alpha", alpha);
    if let Some(path) = ecdf {
        let points = if estimates.is_empty() { Vec::new() } else { bias::weighted_ecdf(&estimates)? };
        format::write_ecdf(&points, create(path)?)?;
        run.outputs.push(path.clone());
    }
    if let Some(path) = plot {
        write_file(path, svg::scatter(&rows, *alpha).as_bytes())?;
        run.outputs.push(path.clone());
    }
    if let Some(path) = forest {
        write_file(path, svg::forest(&rows, *alpha).as_bytes())?;
        run.outputs.push(path.clone());
    }
    let significant = rows.iter().filter(|r| r.p_sn < *alpha).count();
    say(cli, &format!("{} estimates, {significant} significant at {alpha}", rows.len()));
    run.finish()
}

fn ranking(
    cli: &Cli,
    input: &Path,
    out: &Path,
    trim: Option<usize>,
    reference: ReferenceArg,
    median: bool,
    summary_path: Option<&Path>,
) -> Result<()> {
    let records = read_marks(input)?;
    let cfg = analysis_config(cli)?;
    let pre = preprocess(&records, &cfg.preprocess_config())?;
    let reference_handling = match reference {
        ReferenceArg::Average => ReferenceHandling::AverageOfReferences,
        ReferenceArg::None => ReferenceHandling::None,
    };
    let mut run = Run::new(cli, "ranking-impact");
    let outcomes = match trim {
        Some(panel_trim) => {
            let rule = AggregationRule { panel_trim, reference_handling, use_median: median };
            run.arg("rule", format!("{rule:?}"));
            ranking_impact(&pre.performances, &rule)
        }
        None => {
            run.arg("rule", "discipline defaults");
            ranking_impact_default(&pre.performances)
        }
    };
    format::write_ranking(&outcomes, create(out)?)?;
    run.inputs.push(input.to_path_buf());
    run.outputs.push(out.to_path_buf());
    let s = RankingSummary::of(&outcomes);
    say(
        cli,
        &format!(
            "ranking changed in {} of {} events with same-nationality marks ({} podiums); {} of {} entries moved; {} incomplete",
            s.changed_events, s.sn_affected_events, s.podium_changed_events, s.changed_entries, s.sn_affected_entries, s.incomplete_events
        ),
    );
    if let Some(path) = summary_path {
        let mut json = serde_json::to_string_pretty(&s)?;
        json.push('\n');
        write_file(path, json.as_bytes())?;
        run.outputs.push(path.to_path_buf());
    }
    run.finish()
}

fn stars(p: f64) -> &'static str {
    bias::Significance::of(p).stars()
}

fn markdown_table(rows: &[EstimateRow]) -> String {
    let mut s = String::from("| key | stage | coefficient | estimate (se) | t | p |\n|---|---|---|---|---|---|\n");
    for r in rows {
        s.push_str(&format!(
            "| {} | {} | beta_sn | {:.2} ({:.2}) | {:.2} | {:.3}{} |\n",
            r.key,
            r.stage,
            r.beta_sn,
            r.se_sn,
            r.t_sn,
            r.p_sn,
            stars(r.p_sn)
        ));
        if let (Some(b), Some(se), Some(t), Some(p)) = (r.beta_comp, r.se_comp, r.t_comp, r.p_comp) {
            s.push_str(&format!("| {} | {} | beta_comp | {b:.2} ({se:.2}) | {t:.2} | {p:.3}{} |\n", r.key, r.stage, stars(p)));
        }
    }
    s
}

fn report(cli: &Cli, estimates: &Path, kind: PlotKind, alpha: f64, out: &Path, table: Option<&Path>) -> Result<()> {
    let rows = format::read_estimates(File::open(estimates).with_context(|| format!("opening {}", estimates.display()))?)?;
    let chart = match kind {
        PlotKind::Scatter => svg::scatter(&rows, alpha),
        PlotKind::Forest => svg::forest(&rows, alpha),
        PlotKind::Ecdf => {
            let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.beta_sn, r.n_sn_marks as f64)).collect();
            svg::ecdf(&weighted_ecdf(&points).context("empty estimates file")?)
        }
    };
    write_file(out, chart.as_bytes())?;
    let mut run = Run::new(cli, "report");
    run.inputs.push(estimates.to_path_buf());
    run.outputs.push(out.to_path_buf());
    run.arg("kind", format!("{kind:?}").to_lowercase());
    run.arg("alpha", alpha);
    if let Some(path) = table {
        write_file(path, markdown_table(&rows).as_bytes())?;
        run.outputs.push(path.to_path_buf());
    }
    say(cli, &format!("{} estimates charted", rows.len()));
    run.finish()
}
