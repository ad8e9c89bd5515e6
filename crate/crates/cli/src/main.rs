mod config;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sqare_core::analysis::{emit_sparql_queries, AnalysisError, Analyzer};
use sqare_core::graph::{parse_ntriples, write_ntriples, write_turtle, Graph};
use sqare_core::harness::{
    materialize_trials, outcome_summary, render_trials_tsv, run_experiment, Cassette, Clock, FixedClock, HttpAdapter,
    ModelAdapter, RecordingAdapter, ReplayAdapter, RunConfig, SystemClock, TRIALS_TSV_COLUMNS,
};
use sqare_core::judge::{answers, ingest_judgments, judge_graph, read_judgment, render_review_tsv, ValidityPolicy, REVIEW_COLUMNS};
use sqare_core::shapes::{builtin_shapes_for, render_violations, shapes_turtle, validate, ShapeStage, Violation};
use sqare_core::stats::{self, CiMethod, ReportRow};
use sqare_core::studydef::{enumerate_trials, load_study, Study};
use sqare_core::vocab::{builtin_registry, emit_tbox, iri, node, standard_prefixes, tbox_turtle};

use config::{parse_instant, CliConfig, FileConfig, Format, Mode};

const ANSWERS: &str = "answers.nt";
const TRIALS: &str = "trials.tsv";
const JUDGED: &str = "judged.nt";
const VIOLATIONS: &str = "violations.tsv";

#[derive(Parser)]
#[command(name = "sqare", version, about = "Multilingual knowledge-conflict evaluations stored and analyzed as RDF")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Study definition (JSON).
    #[arg(long, global = true)]
    study: Option<PathBuf>,
    /// Output directory for pipeline stages (default `out`); the target file for `schema emit`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces the study's base IRI when minting instance IRIs.
    #[arg(long, global = true)]
    base_iri: Option<String>,
    /// Use this instant for every timestamp instead of the system clock.
    #[arg(long, global = true, value_name = "RFC3339", value_parser = parse_instant)]
    fixed_clock: Option<DateTime<Utc>>,
    /// Output format for reports printed to stdout.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Vocabulary schema operations.
    #[command(subcommand)]
    Schema(SchemaCommand),
    /// Study definition operations.
    #[command(subcommand)]
    Study(StudyCommand),
    /// Collect model answers and write `answers.nt` and `trials.tsv`.
    #[command(after_help = trials_help())]
    Run(RunArgs),
    /// Attach validation results to every answer and write `judged.nt`.
    #[command(after_help = review_help())]
    Judge(JudgeArgs),
    /// Check a stage graph against the shapes; exit 1 on any violation.
    #[command(after_help = "violations.tsv columns: shape_id, focus, message")]
    Validate(ValidateArgs),
    /// Compute metrics from `judged.nt` and write reports plus SPARQL queries.
    #[command(after_help = "reports/metrics.tsv columns: metric, model, language, condition, count, total, value")]
    Analyze(AnalyzeArgs),
    /// Paired comparison of two models per language and condition.
    #[command(after_help = compare_help())]
    Compare(CompareArgs),
    /// Write the judged dataset merged with the schema as Turtle and N-Triples.
    Export,
}

#[derive(Subcommand)]
enum SchemaCommand {
    /// Write the vocabulary as Turtle (to `--out`, or stdout).
    Emit {
        /// Write the SHACL rendering of the shapes instead.
        #[arg(long)]
        shapes: bool,
    },
}

#[derive(Subcommand)]
enum StudyCommand {
    /// Load and validate the study, then print a summary.
    Check,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    cassette: Option<PathBuf>,
    /// Models to replay; defaults to the configured models, or every model in the cassette.
    #[arg(long = "model")]
    models: Vec<String>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    parallelism: Option<u64>,
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    languages: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    conditions: Vec<String>,
    /// Defaults to a timestamp taken from the clock.
    #[arg(long)]
    run_id: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Factual,
    Abstention,
}

#[derive(Args)]
struct JudgeArgs {
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    /// Apply human judgments from a review TSV after automatic judging.
    #[arg(long, value_name = "TSV")]
    ingest: Option<PathBuf>,
    /// Write the final judgments as a review TSV.
    #[arg(long, value_name = "TSV")]
    review_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    Collected,
    Judged,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, value_enum, default_value = "judged")]
    stage: StageArg,
    /// Graph to check; defaults to the stage file in the output directory.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Models used in the contingency query; default is the first two by name.
    #[arg(long)]
    model_a: Option<String>,
    #[arg(long)]
    model_b: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CiArg {
    PairedWald,
    Newcombe,
}

#[derive(Args)]
struct CompareArgs {
    /// Row model of each table: `b` counts questions only this model answered validly.
    #[arg(long)]
    model_a: String,
    /// Column model: `c` counts questions only this model answered validly.
    #[arg(long)]
    model_b: String,
    #[arg(long, value_enum, default_value = "paired-wald")]
    ci: CiArg,
}

fn trials_help() -> String {
    format!("trials.tsv columns: {}", TRIALS_TSV_COLUMNS.join(", "))
}

fn review_help() -> String {
    format!("Review TSV columns: {} (`-` leaves a flag unset)", REVIEW_COLUMNS.join(", "))
}

fn compare_help() -> String {
    format!("reports/compare.tsv columns (unrounded): {}", stats::TSV_COLUMNS.replace('\t', ", "))
}

/// Whether a command found problems in the data it looked at.
enum Outcome {
    Clean,
    Findings,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Findings) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn settings(global: &Global) -> Result<CliConfig> {
    let file = match &global.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut config = CliConfig::from_file(file)?;
    if let Some(study) = &global.study {
        config.study = Some(study.clone());
    }
    if let Some(out) = &global.out {
        config.out = out.clone();
    }
    if let Some(base) = &global.base_iri {
        config.base_iri = Some(base.clone());
    }
    if let Some(instant) = global.fixed_clock {
        config.fixed_clock = Some(instant);
    }
    if let Some(format) = global.format {
        config.format = format;
    }
    Ok(config)
}

fn dispatch(cli: Cli) -> Result<Outcome> {
    let mut config = settings(&cli.global)?;
    match cli.command {
        Command::Schema(SchemaCommand::Emit { shapes }) => schema_emit(cli.global.out.as_deref(), shapes),
        Command::Study(StudyCommand::Check) => study_check(&config),
        Command::Run(args) => {
            apply_run_flags(&mut config, &args)?;
            run(&config, &args)
        }
        Command::Judge(args) => {
            if let Some(policy) = args.policy {
                config.policy = match policy {
                    PolicyArg::Factual => ValidityPolicy::Factual,
                    PolicyArg::Abstention => ValidityPolicy::AbstentionAware,
                };
            }
            judge(&config, &args)
        }
        Command::Validate(args) => validate_stage(&config, &args),
        Command::Analyze(args) => analyze(&config, &args),
        Command::Compare(args) => compare(&config, &args),
        Command::Export => export(&config),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn read_graph(path: &Path, hint: &str) -> Result<Graph> {
    let text = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            bail!("{} not found; {hint}", path.display())
        }
        Err(e) => return Err(e).with_context(|| format!("reading {}", path.display())),
    };
    parse_ntriples(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_judged(config: &CliConfig) -> Result<Graph> {
    read_graph(&config.out.join(JUDGED), "run `sqare judge` first")
}

fn load(config: &CliConfig) -> Result<Study> {
    let path = config.study_path()?;
    let mut study = load_study(path).with_context(|| format!("loading study {}", path.display()))?;
    if let Some(base) = &config.base_iri {
        study.base_iri = base.clone();
    }
    Ok(study)
}

fn clock(config: &CliConfig) -> Arc<dyn Clock> {
    match config.fixed_clock {
        Some(instant) => Arc::new(FixedClock::new(instant)),
        None => Arc::new(SystemClock),
    }
}

/// Languages present in a graph, read from its language profiles.
fn graph_languages(graph: &Graph) -> Vec<String> {
    let languages: BTreeSet<String> = graph
        .match_pattern(&sqare_core::graph::TriplePattern::new(None, Some(&node(iri::LANGUAGE_TAG)), None))
        .into_iter()
        .map(|t| t.object.value().to_string())
        .collect();
    languages.into_iter().collect()
}

fn print_violations(violations: &[Violation]) {
    eprint!("{}", render_violations(violations));
    eprintln!("{} violation(s); run `sqare validate` for details", violations.len());
}

fn schema_emit(out: Option<&Path>, shapes: bool) -> Result<Outcome> {
    let text = if shapes {
        shapes_turtle(&builtin_shapes_for(ShapeStage::Judged, &["de".into(), "en".into()]))
    } else {
        tbox_turtle(&builtin_registry())
    };
    match out {
        Some(path) => write_file(path, &text)?,
        None => print!("{text}"),
    }
    Ok(Outcome::Clean)
}

fn study_check(config: &CliConfig) -> Result<Outcome> {
    let study = load(config)?;
    let trials = enumerate_trials(&study, &["model".to_string()], &config.conditions, &study.languages)?;
    println!("study {}: base {}", study.id, study.base_iri);
    println!("questions  {}", study.questions.len());
    println!("materials  {}", study.materials.len());
    println!("languages  {}", study.languages.join(", "));
    println!("trials per model  {}", trials.len());
    Ok(Outcome::Clean)
}

fn apply_run_flags(config: &mut CliConfig, args: &RunArgs) -> Result<()> {
    if let Some(mode) = args.mode {
        config.mode = mode;
    }
    if let Some(cassette) = &args.cassette {
        config.cassette = Some(cassette.clone());
    }
    if let Some(p) = args.parallelism {
        config.parallelism = usize::try_from(p)?;
    }
    if let Some(r) = args.max_retries {
        config.max_retries = r;
    }
    if !args.languages.is_empty() {
        config.languages = args.languages.clone();
    }
    if !args.conditions.is_empty() {
        config.conditions = args.conditions.iter().map(|c| c.parse()).collect::<Result<_, _>>()?;
    }
    config.check()
}

fn adapters(config: &CliConfig, args: &RunArgs, clock: &Arc<dyn Clock>) -> Result<Vec<Arc<dyn ModelAdapter>>> {
    let http = |configs: &[_]| -> Vec<Arc<dyn ModelAdapter>> {
        configs.iter().map(|c: &sqare_core::harness::HttpAdapterConfig| Arc::new(HttpAdapter::new(c.clone())) as _).collect()
    };
    let open_cassette = |create: bool| -> Result<Arc<Cassette>> {
        let path = config.cassette.as_ref().context("no cassette configured")?;
        let cassette = if create { Cassette::open(path) } else { Cassette::load(path) };
        Ok(Arc::new(cassette.with_context(|| format!("opening cassette {}", path.display()))?))
    };
    let adapters = match config.mode {
        Mode::Live => http(&config.models),
        Mode::Record => {
            let cassette = open_cassette(true)?;
            http(&config.models)
                .into_iter()
                .map(|inner| Arc::new(RecordingAdapter::new(inner, cassette.clone(), clock.clone())) as _)
                .collect()
        }
        Mode::Replay => {
            let cassette = open_cassette(false)?;
            let mut names = args.models.clone();
            if names.is_empty() {
                names = config.models.iter().map(|m| m.model.clone()).collect();
            }
            if names.is_empty() {
                names = cassette.models();
            }
            names.into_iter().map(|m| Arc::new(ReplayAdapter::new(m, cassette.clone())) as _).collect()
        }
    };
    if adapters.is_empty() {
        bail!("no models configured; add \"models\" to the config file or pass --model");
    }
    Ok(adapters)
}

fn run(config: &CliConfig, args: &RunArgs) -> Result<Outcome> {
    let study = load(config)?;
    let clock = clock(config);
    let adapters = adapters(config, args, &clock)?;
    let started = clock.now();
    let run_id = args.run_id.clone().unwrap_or_else(|| started.format("%Y%m%dT%H%M%SZ").to_string());
    let run_config = RunConfig {
        conditions: config.conditions.clone(),
        languages: config.languages.clone(),
        parallelism: config.parallelism,
        max_retries: config.max_retries,
        ..RunConfig::new(run_id.clone())
    };
    let records = run_experiment(&study, &adapters, &run_config, clock.as_ref())?;
    let models: Vec<String> = adapters.iter().map(|a| a.name().to_string()).collect();
    let graph = materialize_trials(&study, &run_id, &models, started, &records);
    write_file(&config.out.join(ANSWERS), &write_ntriples(&graph))?;
    write_file(&config.out.join(TRIALS), &render_trials_tsv(&records))?;

    let mut failed_total = 0;
    for (model, (answered, failed)) in outcome_summary(&records) {
        eprintln!("{model}: {answered} answered, {failed} failed");
        failed_total += failed;
    }
    Ok(if failed_total == 0 { Outcome::Clean } else { Outcome::Findings })
}

fn judge(config: &CliConfig, args: &JudgeArgs) -> Result<Outcome> {
    let study = load(config)?;
    let mut graph = read_graph(&config.out.join(ANSWERS), "run `sqare run` first")?;
    let mut judgments = judge_graph(&mut graph, &study, config.policy)?;
    if let Some(path) = &args.ingest {
        let tsv = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let applied = ingest_judgments(&mut graph, &tsv, config.policy)?;
        eprintln!("applied {applied} human judgment(s)");
        judgments = answers(&graph)
            .into_iter()
            .filter_map(|a| read_judgment(&graph, &a).map(|j| (a, j)))
            .collect();
    }
    write_file(&config.out.join(JUDGED), &write_ntriples(&graph))?;
    if let Some(path) = &args.review_out {
        write_file(path, &render_review_tsv(&judgments))?;
    }
    let valid = judgments.iter().filter(|(_, j)| j.is_valid).count();
    eprintln!("judged {} answer(s) under the {} policy; {valid} valid", judgments.len(), config.policy);
    Ok(Outcome::Clean)
}

fn violations_tsv(violations: &[Violation]) -> String {
    let mut out = String::from("shape_id\tfocus\tmessage\n");
    for v in violations {
        out.push_str(&format!("{}\t{}\t{}\n", v.shape, v.focus.value(), v.message.replace(['\t', '\n'], " ")));
    }
    out
}

fn validate_stage(config: &CliConfig, args: &ValidateArgs) -> Result<Outcome> {
    let (stage, default, hint) = match args.stage {
        StageArg::Collected => (ShapeStage::Collected, ANSWERS, "run `sqare run` first"),
        StageArg::Judged => (ShapeStage::Judged, JUDGED, "run `sqare judge` first"),
    };
    let path = args.input.clone().unwrap_or_else(|| config.out.join(default));
    let graph = read_graph(&path, hint)?;
    let violations = validate(&graph, &builtin_shapes_for(stage, &graph_languages(&graph)));
    write_file(&config.out.join(VIOLATIONS), &violations_tsv(&violations))?;
    if violations.is_empty() {
        println!("{}: conforms ({} triples)", path.display(), graph.len());
        return Ok(Outcome::Clean);
    }
    let width = violations.iter().map(|v| v.shape.len()).max().unwrap_or(0);
    for v in &violations {
        println!("{:width$}  {}  {}", v.shape, v.focus.to_ntriples(), v.message);
    }
    println!("{} violation(s)", violations.len());
    Ok(Outcome::Findings)
}

/// Builds an analyzer, or reports why the graph cannot be analyzed.
fn analyzer(graph: &Graph) -> Result<Option<Analyzer>> {
    let shapes = builtin_shapes_for(ShapeStage::Judged, &graph_languages(graph));
    match Analyzer::new(graph, &shapes) {
        Ok(a) => Ok(Some(a)),
        Err(AnalysisError::NonConforming(violations)) => {
            print_violations(&violations);
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn analyze(config: &CliConfig, args: &AnalyzeArgs) -> Result<Outcome> {
    let graph = read_judged(config)?;
    let Some(analyzer) = analyzer(&graph)? else { return Ok(Outcome::Findings) };
    let report = analyzer.report();
    let reports = config.out.join("reports");
    write_file(&reports.join("metrics.txt"), &report.render_text())?;
    write_file(&reports.join("metrics.md"), &report.render_markdown())?;
    write_file(&reports.join("metrics.tsv"), &report.render_tsv())?;

    let models = analyzer.models();
    let pick = |flag: &Option<String>, index: usize| flag.clone().or_else(|| models.get(index).cloned());
    if let (Some(a), Some(b)) = (pick(&args.model_a, 0), pick(&args.model_b, 1)) {
        let dir = config.out.join("queries");
        emit_sparql_queries(&dir, &a, &b).with_context(|| format!("writing queries to {}", dir.display()))?;
    }
    print!(
        "{}",
        match config.format {
            Format::Text => report.render_text(),
            Format::Markdown => report.render_markdown(),
            Format::Tsv => report.render_tsv(),
        }
    );
    Ok(Outcome::Clean)
}

fn per_language(rows: &[ReportRow], render: fn(&[ReportRow]) -> String, heading: fn(&str) -> String) -> String {
    let languages: BTreeSet<&str> = rows.iter().map(|r| r.language.as_str()).collect();
    let sections: Vec<String> = languages
        .into_iter()
        .map(|lang| {
            let subset: Vec<ReportRow> = rows.iter().filter(|r| r.language == lang).cloned().collect();
            format!("{}\n{}", heading(lang), render(&subset))
        })
        .collect();
    sections.join("\n")
}

fn compare(config: &CliConfig, args: &CompareArgs) -> Result<Outcome> {
    let graph = read_judged(config)?;
    let Some(analyzer) = analyzer(&graph)? else { return Ok(Outcome::Findings) };
    let tables = analyzer.build_contingency(&args.model_a, &args.model_b)?;
    let method = match args.ci {
        CiArg::PairedWald => CiMethod::PairedWald,
        CiArg::Newcombe => CiMethod::NewcombeHybrid,
    };
    let rows = stats::compare(&tables, method);
    let title = format!("{} vs {}", args.model_a, args.model_b);
    let text = per_language(&rows, stats::render_text, |l| format!("Language: {l}\n"));
    let markdown = per_language(&rows, stats::render_markdown, |l| format!("### {l}\n"));
    let tsv = stats::render_tsv(&rows);
    let reports = config.out.join("reports");
    write_file(&reports.join("compare.txt"), &format!("{title}\n\n{text}"))?;
    write_file(&reports.join("compare.md"), &format!("## {title}\n\n{markdown}"))?;
    write_file(&reports.join("compare.tsv"), &tsv)?;
    print!(
        "{}",
        match config.format {
            Format::Text => format!("{title}\n\n{text}"),
            Format::Markdown => format!("## {title}\n\n{markdown}"),
            Format::Tsv => tsv,
        }
    );
    Ok(Outcome::Clean)
}

fn export(config: &CliConfig) -> Result<Outcome> {
    let mut graph = read_judged(config)?;
    let languages = graph_languages(&graph);
    graph.extend(emit_tbox(&builtin_registry()).iter().cloned());
    let dir = config.out.join("export");
    write_file(&dir.join("dataset.nt"), &write_ntriples(&graph))?;
    write_file(&dir.join("dataset.ttl"), &write_turtle(&graph, &standard_prefixes()))?;
    write_file(&dir.join("shapes.ttl"), &shapes_turtle(&builtin_shapes_for(ShapeStage::Judged, &languages)))?;
    eprintln!("exported {} triples to {}", graph.len(), dir.display());
    Ok(Outcome::Clean)
}
