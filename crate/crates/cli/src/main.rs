//! Command-line front end for the safety-pool experiment pipeline.
//!
//! Exit codes: 0 on success, 2 on usage or configuration errors, 1 on
//! runtime failures.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use safety_pool::learners::{persist, LearnerFamily};
use safety_pool::metrics::Averaging;
use safety_pool::records::{
    category_counts, eligible_combinations_with, header_lexicon, read_pool, write_pool, CombinationKey,
    EligibilityRule, Lexicon, RecordPool, Taxonomy,
};
use safety_pool::runner::{
    build_stack, emit_report, evaluate_model, fit_family, fit_task, plan, read_report_json, run_on_pool,
    write_plan, EvaluationReport, ExperimentConfig, FamilyFit, KeyGain, ModelKind, Plan, ReportFormat,
};
use safety_pool::synth::{difficulty_curve, generate_pool, write_curve_to, CurveConfig, PoolSpec};
use safety_pool::tuning::{write_trace, GridMode};
use safety_pool::Error;

#[derive(Debug, Parser)]
#[command(name = "safety-pool", version, about = "Generic vs. specific safety-outcome models")]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Grid selection: full, strided:<k> or at_most:<n>.
    #[arg(long, global = true)]
    grid: Option<GridMode>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a pool CSV and summarize it.
    Ingest(IngestArgs),
    /// Write split manifests for every planned task.
    Split,
    /// Grid-search one family on one task and write the trace.
    Tune(TaskArgs),
    /// Tune, refit on train+validation and save models for one task.
    Train(TaskArgs),
    /// Stack a generic and a specific model for one specific task.
    Ensemble(EnsembleArgs),
    /// Run the whole pipeline and write the report.
    Evaluate,
    /// Render a saved report, or summarize a gain table.
    Report(ReportArgs),
    /// Generate a synthetic pool CSV.
    Synth(SynthArgs),
    /// Baseline difficulty against the number of categories.
    Difficulty(DifficultyArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    csv: PathBuf,
    /// Attribute names, one per line; defaults to the CSV header.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Records needed per category for a combination to be eligible.
    #[arg(long, default_value_t = 100)]
    min_count: u64,
}

#[derive(Debug, Args)]
struct TaskArgs {
    /// Task slug, e.g. spec__company1__construction__severity or full__severity.
    #[arg(long)]
    task: String,
    /// Learner family; all configured families when absent.
    #[arg(long)]
    family: Option<LearnerFamily>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GenericScope {
    Domain,
    Full,
}

#[derive(Debug, Args)]
struct EnsembleArgs {
    /// Specific task slug.
    #[arg(long)]
    task: String,
    #[arg(long, value_enum, default_value = "full")]
    generic: GenericScope,
    /// Family for both bases; the validation-best of each when absent.
    #[arg(long)]
    family: Option<LearnerFamily>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// A report.json written by `evaluate`.
    #[arg(long, conflicts_with = "gains", required_unless_present = "gains")]
    input: Option<PathBuf>,
    /// CSV with company,domain,outcome,gain columns; blank gain = no improvement.
    #[arg(long)]
    gains: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Pool specification (TOML).
    #[arg(long)]
    spec: PathBuf,
}

#[derive(Debug, Args)]
struct DifficultyArgs {
    /// Inclusive range of category counts, e.g. 2..12.
    #[arg(long, default_value = "2..12", value_parser = parse_range)]
    k: (usize, usize),
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 2.0)]
    sd: f64,
    #[arg(long, default_value_t = CurveConfig::default().replicates)]
    replicates: usize,
    #[arg(long, value_enum, default_value = "weighted")]
    averaging: AveragingArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AveragingArg {
    Macro,
    Weighted,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once("..").ok_or("expected <min>..<max>")?;
    let a = a.trim().parse().map_err(|_| format!("bad lower bound {a:?}"))?;
    let b = b.trim_start_matches('=').trim().parse().map_err(|_| format!("bad upper bound {b:?}"))?;
    Ok((a, b))
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn io_fail(path: &Path, e: io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Split => split(&cli),
        Command::Tune(a) => tune(&cli, a),
        Command::Train(a) => train(&cli, a),
        Command::Ensemble(a) => ensemble(&cli, a),
        Command::Evaluate => evaluate(&cli),
        Command::Report(a) => report(&cli, a),
        Command::Synth(a) => synth(&cli, a),
        Command::Difficulty(a) => difficulty(&cli, a),
    }
}

/// The config file with command-line overrides applied.
fn config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("this command needs --config".into()))?;
    let mut cfg = ExperimentConfig::load(path).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(grid) = cli.grid {
        cfg.grid = grid;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn load_plan(cfg: &ExperimentConfig) -> CliResult<(RecordPool, Plan)> {
    let pool = RecordPool::new(cfg.load_records()?)?;
    let p = plan(&pool, cfg)?;
    Ok((pool, p))
}

fn find_task(p: &Plan, slug: &str) -> CliResult<CombinationKey> {
    p.find(slug).cloned().ok_or_else(|| {
        let known: Vec<String> = p.tasks().map(|k| k.slug()).collect();
        Failure::Config(format!("unknown task {slug:?}; planned tasks: {}", known.join(", ")))
    })
}

fn ingest(a: &IngestArgs) -> CliResult {
    let lexicon = match &a.lexicon {
        Some(p) => Lexicon::load(p)?,
        None => header_lexicon(&a.csv)?,
    };
    let taxonomy = match &a.taxonomy {
        Some(p) => Taxonomy::load(p)?,
        None => Taxonomy::default(),
    };
    let records = read_pool(&a.csv, &lexicon, &taxonomy)?;
    let pool = RecordPool::new(records)?;
    let rule = EligibilityRule { min_count: a.min_count, ..EligibilityRule::default() };
    let eligible = eligible_combinations_with(pool.records(), &rule);
    let mut companies: Vec<&str> = pool.records().iter().map(|r| r.company.as_str()).collect();
    companies.sort_unstable();
    companies.dedup();
    println!("records\t{}", pool.len());
    println!("attributes\t{}", lexicon.len());
    println!("companies\t{}", companies.len());
    println!("eligible\t{}", eligible.len());
    for key in &eligible {
        let records = pool.combination(key.company().unwrap(), key.domain().unwrap(), key.outcome);
        let counts = category_counts(records.iter().copied(), key.outcome);
        let cells: Vec<String> = counts.iter().map(|(c, n)| format!("{c}={n}")).collect();
        println!("{}\t{}", key.slug(), cells.join(";"));
    }
    Ok(())
}

fn split(cli: &Cli) -> CliResult {
    let cfg = config(cli)?;
    let (_, p) = load_plan(&cfg)?;
    let dir = out_dir(&cfg).join("splits");
    let written = write_plan(&p, &dir)?;
    for key in p.eligible.iter().chain(&p.per_domain).chain(&p.full) {
        let (tr, va, te) = p.split(key).unwrap().sizes();
        println!("{}\t{tr}\t{va}\t{te}", key.slug());
    }
    eprintln!("{} manifests in {}", written.len(), dir.display());
    Ok(())
}

fn families(cfg: &ExperimentConfig, family: Option<LearnerFamily>) -> Vec<LearnerFamily> {
    family.map_or_else(|| cfg.families.clone(), |f| vec![f])
}

fn tune(cli: &Cli, a: &TaskArgs) -> CliResult {
    let cfg = config(cli)?;
    let (pool, p) = load_plan(&cfg)?;
    let key = find_task(&p, &a.task)?;
    let dir = out_dir(&cfg).join("traces");
    fs::create_dir_all(&dir).map_err(|e| io_fail(&dir, e))?;
    for family in families(&cfg, a.family) {
        let fit = fit_family(family, &pool, p.split(&key).unwrap(), &cfg)?;
        let path = dir.join(format!("{}__{}.csv", key.slug(), family));
        write_trace(&path, &fit.search.trace)?;
        println!(
            "{}\t{family}\t{}\t{}\t{}",
            key.slug(),
            fit.search.trace.len(),
            fit.search.score,
            fit.search.best.describe()
        );
    }
    Ok(())
}

fn train(cli: &Cli, a: &TaskArgs) -> CliResult {
    let cfg = config(cli)?;
    let (pool, p) = load_plan(&cfg)?;
    let key = find_task(&p, &a.task)?;
    let split = p.split(&key).unwrap();
    let dir = out_dir(&cfg).join("models");
    for family in families(&cfg, a.family) {
        let fit = fit_family(family, &pool, split, &cfg)?;
        let path = dir.join(format!("{}__{}.json", key.slug(), family));
        persist::save_model(&path, &fit.final_model)?;
        let own = evaluate_model(&fit.final_model, &pool, split, &cfg.metrics)?;
        println!(
            "{}\t{family}\t{}\t{}\t{}",
            key.slug(),
            fit.search.score,
            own.macro_f1,
            path.display()
        );
    }
    Ok(())
}

fn pick<'a>(fit: &'a safety_pool::runner::TaskFit, family: Option<LearnerFamily>) -> CliResult<&'a FamilyFit> {
    match family {
        Some(f) => fit.get(f).map_err(Failure::Runtime),
        None => fit.best().ok_or_else(|| Failure::Runtime("no family could be fitted".into())),
    }
}

fn ensemble(cli: &Cli, a: &EnsembleArgs) -> CliResult {
    let cfg = config(cli)?;
    let (pool, p) = load_plan(&cfg)?;
    let key = find_task(&p, &a.task)?;
    let domain = match key.domain() {
        Some(d) if p.specific.contains(&key) => d,
        _ => return Err(Failure::Config(format!("{} is not a specific task", key.slug()))),
    };
    let generic_key = match a.generic {
        GenericScope::Domain => CombinationKey::per_domain(domain, key.outcome),
        GenericScope::Full => CombinationKey::full(key.outcome),
    };
    let split = p.split(&key).unwrap();
    let spec_fit = fit_task(&pool, split, &cfg);
    let gen_fit = fit_task(&pool, p.split(&generic_key).unwrap(), &cfg);
    let (g, s) = (pick(&gen_fit, a.family)?, pick(&spec_fit, a.family)?);
    let validation: Vec<_> = pool.resolve(&split.validation).collect();
    let stack = build_stack(g, s, &validation, key.outcome, &cfg.metrics)?;
    let test: Vec<_> = pool.resolve(&split.test).collect();
    let pred = stack.predict_labels(test.iter().copied())?;
    let scores = safety_pool::runner::score_on(&pred, &test, key.outcome, &g.final_model.categories, &cfg.metrics)?;
    let kind = match a.generic {
        GenericScope::Domain => ModelKind::EnsDomain,
        GenericScope::Full => ModelKind::EnsFull,
    };
    let path = out_dir(&cfg)
        .join("models")
        .join(format!("{}__{}.json", key.slug(), kind.as_str()));
    persist::save(&path, &stack)?;
    println!(
        "{}\t{}+{}\ta={}\tb={}\t{}\t{}",
        key.slug(),
        g.family.short(),
        s.family.short(),
        stack.coefficients.a,
        stack.coefficients.b,
        scores.macro_f1,
        path.display()
    );
    Ok(())
}

fn evaluate(cli: &Cli) -> CliResult {
    let mut cfg = config(cli)?;
    cfg.out = Some(out_dir(&cfg));
    let pool = RecordPool::new(cfg.load_records()?)?;
    let report = run_on_pool(&cfg, &pool)?;
    let summary = report.positive_gain_summary();
    println!("keys\t{}", report.key_gains.len());
    println!("win_rate\t{}", report.win_rate());
    if let Some(s) = summary {
        println!("gains\tn={} min={:.2} max={:.2} mean={:.2}", s.n, s.min, s.max, s.mean);
    }
    eprintln!("report in {}", cfg.out.unwrap().join("report").display());
    Ok(())
}

#[derive(Debug, serde::Deserialize)]
struct GainInput {
    company: String,
    domain: String,
    outcome: String,
    gain: Option<f64>,
}

fn read_gains(path: &Path) -> CliResult<EvaluationReport> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    let mut gains = Vec::new();
    for row in rdr.deserialize::<GainInput>() {
        let row = row.map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        let key = CombinationKey::specific(row.company, row.domain.parse()?, row.outcome.parse()?);
        gains.push(KeyGain {
            key,
            kind: ModelKind::GenFull,
            family: "best".into(),
            gain: row.gain.unwrap_or(0.0),
        });
    }
    Ok(EvaluationReport::from_key_gains(gains))
}

fn report(cli: &Cli, a: &ReportArgs) -> CliResult {
    let report = match (&a.input, &a.gains) {
        (Some(p), _) => read_report_json(p)?,
        (None, Some(p)) => read_gains(p)?,
        (None, None) => unreachable!("clap requires one input"),
    };
    let format = match a.format {
        Format::Csv => ReportFormat::Csv,
        Format::Markdown => ReportFormat::Markdown,
    };
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("report"));
    for path in emit_report(&report, &dir, format)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn synth(cli: &Cli, a: &SynthArgs) -> CliResult {
    let text = fs::read_to_string(&a.spec).map_err(|e| Failure::Config(format!("{}: {e}", a.spec.display())))?;
    let mut spec: PoolSpec = toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", a.spec.display())))?;
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    let records = generate_pool(&spec, &Taxonomy::default())?;
    let lexicon = Lexicon::numbered(spec.n_attributes);
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("pool.csv"));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_fail(dir, e))?;
    }
    write_pool(&out, &records, &lexicon)?;
    eprintln!("{} records written to {}", records.len(), out.display());
    Ok(())
}

fn difficulty(cli: &Cli, a: &DifficultyArgs) -> CliResult {
    let cfg = CurveConfig {
        k_min: a.k.0,
        k_max: a.k.1,
        n: a.n,
        lognormal_sd: a.sd,
        replicates: a.replicates,
        averaging: match a.averaging {
            AveragingArg::Macro => Averaging::Macro,
            AveragingArg::Weighted => Averaging::Weighted,
        },
        seed: cli.seed.unwrap_or(0),
    };
    let rows = difficulty_curve(&cfg)?;
    match &cli.out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| io_fail(path, e))?;
            write_curve_to(file, &rows)?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_curve_to(&mut lock, &rows)?;
            lock.flush().map_err(|e| io_fail(Path::new("<stdout>"), e))?;
        }
    }
    Ok(())
}
