//! Operator entry point: parse documents, run verification end-to-end,
//! evaluate, and run the committee-reliability ablation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use bibagent_core::acsv::FunnelConfig;
use bibagent_core::csac::FixtureClient;
use bibagent_core::dpcm::{normalize_markup, parse_markdown, verify_extraction, StyleConfig};
use bibagent_core::eval::{
    ablation::{ablation_csv, coherent_case},
    acc_pass_at_3, committee_ablation, grade_sample, load_benchmark, token_economy, GradedSample,
    InstanceRun, Prediction,
};
use bibagent_core::gateway::{Gateway, StubBackend, StubOptions};
use bibagent_core::icsv::ReferenceStats;
use bibagent_core::model::{ParsedDocument, VerdictLabel};
use bibagent_core::pipeline::{verify_parsed, DocumentReport, PipelineConfig, RouteForce};

const EXIT_CONFIG: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_FATAL: u8 = 3;

#[derive(Parser)]
#[command(name = "bibagent", version, about = "Citation verification pipeline")]
struct Cli {
    /// JSON run configuration (funnel overrides, reference statistics path).
    #[arg(long, global = true, env = "BIBAGENT_CONFIG")]
    config: Option<PathBuf>,
    /// Backend selector: "stub" or "stub:<fixture-dir>".
    #[arg(long, global = true, env = "BIBAGENT_BACKEND", default_value = "stub")]
    backend: String,
    /// Directory holding the persistent deterministic-call cache.
    #[arg(long, global = true, env = "BIBAGENT_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "BIBAGENT_OUT", default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, env = "BIBAGENT_SEED", default_value_t = 0)]
    seed: u64,
    /// Upper bound on concurrent per-edge work.
    #[arg(long, global = true, env = "BIBAGENT_MAX_PARALLEL", default_value_t = 1)]
    max_parallel: usize,
    #[arg(long, global = true, env = "BIBAGENT_ROUTE", value_enum, default_value_t = RouteArg::Auto)]
    route: RouteArg,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RouteArg {
    Auto,
    Accessible,
    Inaccessible,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize and parse documents; emit structure and anomaly reports.
    Parse {
        inputs: Vec<PathBuf>,
    },
    /// Verify every citation edge; emit per-citation bundles and a summary.
    Verify {
        inputs: Vec<PathBuf>,
        /// Metadata fixture directory (records.json + fulltext/).
        #[arg(long, env = "BIBAGENT_RECORDS")]
        records: PathBuf,
    },
    /// Grade predictions against a benchmark CSV and compute metrics.
    Eval {
        #[arg(long)]
        benchmark: PathBuf,
        /// JSON: instance id -> list of exactly 3 {label, explanation}.
        #[arg(long)]
        predictions: PathBuf,
        /// Optional JSON {"full": {...}, "agent": {...}} instance runs for
        /// the token-economy metric.
        #[arg(long)]
        ledgers: Option<PathBuf>,
    },
    /// Committee-reliability ablation over synthetic coherent committees.
    Ablate {
        #[arg(long, default_value_t = 30)]
        cases: usize,
        #[arg(long, default_value_t = 30)]
        witnesses: usize,
        #[arg(long, default_value_t = 10)]
        trials: usize,
    },
}

#[derive(Default, Deserialize)]
struct ConfigFile {
    #[serde(default)]
    funnel: Option<FunnelConfig>,
    #[serde(default)]
    reference_stats: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Failure {
        Failure { code: EXIT_CONFIG, message: message.into() }
    }
    fn fatal(message: impl Into<String>) -> Failure {
        Failure { code: EXIT_FATAL, message: message.into() }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    let config_file = load_config(cli)?;
    fs::create_dir_all(&cli.out)
        .map_err(|e| Failure::fatal(format!("out directory: {e}")))?;
    let gateway = build_gateway(cli)?;
    if let Some(dir) = &cli.cache_dir {
        load_cache(&gateway, dir);
    }
    let status = dispatch(cli, &config_file, &gateway)?;
    if let Some(dir) = &cli.cache_dir {
        save_cache(&gateway, dir)?;
    }
    Ok(status)
}

fn dispatch(cli: &Cli, config_file: &ConfigFile, gateway: &Gateway) -> Result<u8, Failure> {
    match &cli.command {
        Command::Parse { inputs } => cmd_parse(cli, inputs),
        Command::Verify { inputs, records } => {
            cmd_verify(cli, config_file, gateway, inputs, records)
        }
        Command::Eval { benchmark, predictions, ledgers } => {
            cmd_eval(cli, gateway, benchmark, predictions, ledgers.as_deref())
        }
        Command::Ablate { cases, witnesses, trials } => {
            cmd_ablate(cli, *cases, *witnesses, *trials)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ConfigFile, Failure> {
    let Some(path) = &cli.config else {
        return Ok(ConfigFile::default());
    };
    let raw = fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("config {}: {e}", path.display())))?;
    let parsed: ConfigFile = serde_json::from_str(&raw)
        .map_err(|e| Failure::config(format!("config {}: {e}", path.display())))?;
    if let Some(funnel) = &parsed.funnel {
        funnel
            .validate()
            .map_err(|e| Failure::config(format!("config funnel: {e}")))?;
    }
    Ok(parsed)
}

fn build_gateway(cli: &Cli) -> Result<Gateway, Failure> {
    let (kind, fixture) = match cli.backend.split_once(':') {
        Some((k, dir)) => (k, Some(PathBuf::from(dir))),
        None => (cli.backend.as_str(), None),
    };
    if kind != "stub" {
        return Err(Failure::config(format!("unknown backend {:?}", cli.backend)));
    }
    let backend = StubBackend::new("stub", StubOptions { fixture_dir: fixture });
    Ok(Gateway::new(Box::new(backend)))
}

fn load_document(path: &Path) -> Result<ParsedDocument, Failure> {
    let raw = fs::read_to_string(path)
        .map_err(|e| Failure::fatal(format!("{}: {e}", path.display())))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("tex") | Some("html") | Some("htm") => {
            normalize_markup(&raw, &StyleConfig::numeric())
                .map_err(|e| Failure::fatal(format!("{}: {e}", path.display())))
        }
        _ => Ok(parse_markdown(&raw, 1)),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("document")
        .to_string()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::fatal(format!("serialize {}: {e}", path.display())))?;
    fs::write(path, body + "\n")
        .map_err(|e| Failure::fatal(format!("write {}: {e}", path.display())))
}

fn cmd_parse(cli: &Cli, inputs: &[PathBuf]) -> Result<u8, Failure> {
    if inputs.is_empty() {
        return Err(Failure::config("parse requires at least one input"));
    }
    let mut total_anomalies = 0usize;
    for input in inputs {
        let doc = load_document(input)?;
        let anomalies = verify_extraction(&doc);
        total_anomalies += anomalies.len();
        let name = stem(input);
        write_json(&cli.out.join(format!("{name}.parsed.json")), &doc)?;
        write_json(&cli.out.join(format!("{name}.anomalies.json")), &anomalies)?;
        println!(
            "{}: {} blocks, {} sentences, {} anomalies",
            name,
            doc.blocks.len(),
            doc.sentences.len(),
            anomalies.len()
        );
    }
    Ok(if total_anomalies > 0 { EXIT_PARTIAL } else { 0 })
}

fn cmd_verify(
    cli: &Cli,
    config_file: &ConfigFile,
    gateway: &Gateway,
    inputs: &[PathBuf],
    records: &Path,
) -> Result<u8, Failure> {
    if inputs.is_empty() {
        return Err(Failure::config("verify requires at least one input"));
    }
    let client = FixtureClient::load(records)
        .map_err(|e| Failure::config(format!("records {}: {e}", records.display())))?;
    let stats = match &config_file.reference_stats {
        Some(path) => {
            let raw = fs::read_to_string(path)
                .map_err(|e| Failure::config(format!("reference stats: {e}")))?;
            ReferenceStats::from_csv(&raw)
                .map_err(|e| Failure::config(format!("reference stats: {e}")))?
        }
        None => ReferenceStats::default(),
    };
    let config = PipelineConfig {
        funnel: config_file.funnel.clone().unwrap_or_default(),
        seed: cli.seed,
        route_force: match cli.route {
            RouteArg::Auto => None,
            RouteArg::Accessible => Some(RouteForce::Accessible),
            RouteArg::Inaccessible => Some(RouteForce::Inaccessible),
        },
    };

    let mut partial = false;
    for input in inputs {
        let doc = load_document(input)?;
        let report = verify_parsed(&doc, &client, gateway, &stats, &config)
            .map_err(|e| Failure::fatal(format!("{}: {e}", input.display())))?;
        partial |= report.summary.partial_failures > 0;
        let dir = cli.out.join(stem(input));
        fs::create_dir_all(&dir)
            .map_err(|e| Failure::fatal(format!("create {}: {e}", dir.display())))?;
        for bundle in &report.bundles {
            write_json(&dir.join(format!("{}.json", bundle.occurrence_id)), bundle)?;
        }
        write_json(&dir.join("summary.json"), &report.summary)?;
        write_json(&dir.join("anomalies.json"), &report.anomalies)?;
        fs::write(dir.join("digest.md"), digest(&stem(input), &report))
            .map_err(|e| Failure::fatal(format!("digest: {e}")))?;
        println!(
            "{}: {} citations, {} abstained, {} anomalies",
            stem(input),
            report.summary.citation_count,
            (report.summary.abstention_rate * report.summary.citation_count as f64).round(),
            report.summary.anomaly_count
        );
    }
    Ok(if partial { EXIT_PARTIAL } else { 0 })
}

/// Human-readable paper-level integrity digest.
fn digest(name: &str, report: &DocumentReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("# Citation integrity digest: {name}\n\n"));
    let s = &report.summary;
    out.push_str(&format!("- Citations checked: {}\n", s.citation_count));
    for (label, count) in &s.verdict_counts {
        out.push_str(&format!("- {label}: {count}\n"));
    }
    out.push_str(&format!("- Mean confidence: {:.3}\n", s.mean_confidence));
    out.push_str(&format!("- Abstention rate: {:.3}\n", s.abstention_rate));
    out.push_str(&format!("- Extraction anomalies: {}\n", s.anomaly_count));
    if !s.taxonomy_counts.is_empty() {
        out.push_str("\n## Error codes\n\n");
        for (code, count) in &s.taxonomy_counts {
            out.push_str(&format!("- {code}: {count}\n"));
        }
    }
    if s.partial_failures > 0 {
        out.push_str(&format!("\n{} citation(s) failed to verify; see bundles.\n", s.partial_failures));
    }
    out
}

fn cmd_eval(
    cli: &Cli,
    gateway: &Gateway,
    benchmark: &Path,
    predictions: &Path,
    ledgers: Option<&Path>,
) -> Result<u8, Failure> {
    let instances = load_benchmark(benchmark)
        .map_err(|e| Failure::config(format!("benchmark: {e}")))?;
    let raw = fs::read_to_string(predictions)
        .map_err(|e| Failure::config(format!("predictions: {e}")))?;
    let predictions: BTreeMap<String, Vec<Prediction>> = serde_json::from_str(&raw)
        .map_err(|e| Failure::config(format!("predictions: {e}")))?;

    let mut grades: BTreeMap<String, Vec<GradedSample>> = BTreeMap::new();
    for (id, preds) in &predictions {
        let index: usize = id
            .parse()
            .map_err(|_| Failure::config(format!("prediction key {id:?} is not an instance index")))?;
        let Some(gold) = instances.get(index) else {
            return Err(Failure::config(format!("prediction {id} out of range")));
        };
        let mut graded = Vec::new();
        for (s, pred) in preds.iter().enumerate() {
            graded.push(
                grade_sample(gold, pred, gateway, cli.seed, &format!("eval/grader@inst-{id}-s{s}"))
                    .map_err(|e| Failure::fatal(format!("grading instance {id}: {e}")))?,
            );
        }
        grades.insert(id.clone(), graded);
    }
    let acc = acc_pass_at_3(&grades).map_err(|e| Failure::config(e.to_string()))?;

    let mut metrics = serde_json::Map::new();
    metrics.insert("acc_pass_at_3".into(), acc.into());
    metrics.insert("instances_graded".into(), grades.len().into());
    if let Some(path) = ledgers {
        let raw = fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("ledgers: {e}")))?;
        #[derive(Deserialize)]
        struct Ledgers {
            full: BTreeMap<String, InstanceRun>,
            agent: BTreeMap<String, InstanceRun>,
        }
        let ledgers: Ledgers = serde_json::from_str(&raw)
            .map_err(|e| Failure::config(format!("ledgers: {e}")))?;
        let econ = token_economy(&ledgers.full, &ledgers.agent)
            .map_err(|e| Failure::config(e.to_string()))?;
        metrics.insert("token_economy".into(), econ.into());
    }

    write_json(&cli.out.join("metrics.json"), &metrics)?;
    let mut csv_body = String::from("metric,value\n");
    for (k, v) in &metrics {
        csv_body.push_str(&format!("{k},{v}\n"));
    }
    fs::write(cli.out.join("metrics.csv"), csv_body)
        .map_err(|e| Failure::fatal(format!("metrics.csv: {e}")))?;
    write_json(&cli.out.join("grades.json"), &grades)?;
    println!("acc_pass_at_3 = {acc:.4} over {} instances", grades.len());
    Ok(0)
}

fn cmd_ablate(cli: &Cli, cases: usize, witnesses: usize, trials: usize) -> Result<u8, Failure> {
    if cases == 0 || trials == 0 {
        return Err(Failure::config("ablate requires cases >= 1 and trials >= 1"));
    }
    let pool: Vec<_> = (0..cases)
        .map(|_| coherent_case(witnesses, VerdictLabel::Supported))
        .collect();
    let rows = committee_ablation(&pool, trials, cli.seed)
        .map_err(|e| Failure::config(e.to_string()))?;
    write_json(&cli.out.join("ablation.json"), &rows)?;
    fs::write(cli.out.join("ablation.csv"), ablation_csv(&rows))
        .map_err(|e| Failure::fatal(format!("ablation.csv: {e}")))?;
    println!("ablation table written: {} buckets", rows.len());
    Ok(0)
}

fn load_cache(gateway: &Gateway, dir: &Path) {
    let path = dir.join("cache.json");
    if let Ok(raw) = fs::read_to_string(&path) {
        if let Ok(entries) = serde_json::from_str(&raw) {
            gateway.import_cache(entries);
        }
    }
}

fn save_cache(gateway: &Gateway, dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::fatal(format!("cache dir: {e}")))?;
    let entries = gateway.export_cache();
    let body = serde_json::to_string(&entries)
        .map_err(|e| Failure::fatal(format!("cache serialize: {e}")))?;
    fs::write(dir.join("cache.json"), body)
        .map_err(|e| Failure::fatal(format!("cache write: {e}")))
}
