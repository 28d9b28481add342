use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use dagreason::augment::{augment as augment_pair, AugmentConfig, AugmentMode, Augmentation, QaPair, RedundancyCount};
use dagreason::client::{CompletionClient, FixtureClient, HttpClient, HttpConfig, RetryPolicy};
use dagreason::dataset::{
    build_eval_suite, export_sft, read_eval_items, read_jsonl, write_json, write_jsonl, write_suite, DatasetError,
    EvalItem, EvalSuiteConfig,
};
use dagreason::eval::mock::{EchoChainClient, TopologicalOnlyClient};
use dagreason::eval::{accuracy_grid, grade as grade_responses, run_eval, vov as compute_vov, AccuracyGrid, EvalMode, RunConfig, VovReport};
use dagreason::probe::synthetic::{shuffle_labels, synthetic_dumps, SyntheticConfig};
use dagreason::probe::{
    build_probe_dataset, f1_macro, knn_probe, load_dump_dir, predict, train_linear_probe, FeatureStats, ProbeError,
    ProbeHyperparams, DEFAULT_KNN_K,
};
use dagreason::render::{parse_query, semantic_equal, OrderTag};
use dagreason::rng::{derive_seed, SplitMix64};
use dagreason::{Problem, Task};

use crate::{Failure, EXIT_PROPERTY, EXIT_RUNTIME, EXIT_VALIDATION};

type CmdResult = Result<(), Failure>;

fn validation(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_VALIDATION,
        error: error.into(),
    }
}

fn runtime(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        error: error.into(),
    }
}

fn dataset_failure(e: DatasetError) -> Failure {
    match e {
        DatasetError::Io { .. } => runtime(e),
        other => validation(other),
    }
}

fn probe_failure(e: ProbeError) -> Failure {
    match e {
        ProbeError::Io { .. } => runtime(e),
        other => validation(other),
    }
}

/// `\n` and `\t` escapes, so separators can be typed on a command line.
fn unescape(s: &str) -> String {
    s.replace("\\n", "\n").replace("\\t", "\t")
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

#[derive(Serialize)]
struct RunManifest<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    schema_version: u32,
    command: &'a str,
    flags: &'a T,
}

/// Records the flags next to an output as `<out>.run.json`.
fn write_run_manifest<T: Serialize>(out: &Path, command: &str, flags: &T) -> CmdResult {
    let manifest = RunManifest {
        tool: env!("CARGO_BIN_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        schema_version: dagreason::dataset::SCHEMA_VERSION,
        command,
        flags,
    };
    write_json(&sidecar(out, ".run.json"), &manifest).map_err(dataset_failure)
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[arg(long)]
    task: Task,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    depths: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "topological,random,reversed")]
    orders: Vec<OrderTag>,
    /// Redundancy levels, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    redundancy: Vec<usize>,
    /// Items per (depth, order, redundancy) cell.
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

pub fn gen(args: GenArgs) -> CmdResult {
    let config = EvalSuiteConfig {
        task: args.task,
        depths: args.depths.clone(),
        orders: args.orders.clone(),
        redundancy_levels: args.redundancy.clone(),
        count: args.count,
        master_seed: args.seed,
    };
    let suite = build_eval_suite(&config).map_err(dataset_failure)?;
    write_suite(&args.out, &suite).map_err(dataset_failure)?;
    write_run_manifest(&args.out, "gen", &args)?;
    for cell in &suite.cells {
        println!(
            "depth {} order {} redundancy {}: {} items",
            cell.depth,
            cell.order,
            cell.redundancy,
            cell.items.len()
        );
    }
    println!("wrote {} items to {}", suite.len(), args.out.display());
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct AugmentArgs {
    /// JSONL of QA pairs or suite items.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "mend")]
    mode: AugmentMode,
    /// Augmentations per source pair.
    #[arg(short = 'k', long = "k", default_value_t = 4)]
    k: usize,
    /// Redundant partitions per MEND query: N or MIN..MAX.
    #[arg(short = 'r', long = "r", default_value = "0..4")]
    r: RedundancyCount,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "\\n")]
    sep: String,
}

#[derive(serde::Deserialize)]
#[serde(untagged)]
enum AugmentInput {
    Pair(QaPair),
    Item(EvalItem),
}

pub fn augment(args: AugmentArgs) -> CmdResult {
    let sep = unescape(&args.sep);
    let config = AugmentConfig {
        k: args.k,
        r: args.r,
        sep: sep.clone(),
        mode: args.mode,
    };
    config.validate().map_err(validation)?;
    let inputs: Vec<AugmentInput> = read_jsonl(&args.input).map_err(dataset_failure)?;
    let mut corpus = Vec::new();
    for (i, input) in inputs.into_iter().enumerate() {
        let pair = match input {
            AugmentInput::Pair(p) => p,
            AugmentInput::Item(item) => QaPair {
                query: item.query,
                response: item.chain,
                source_id: item.id,
                augmentation: Augmentation::None,
            },
        };
        let mut rng = SplitMix64::new(derive_seed(args.seed, i as u64));
        let out = augment_pair(&pair, &config, &mut rng)
            .with_context(|| format!("line {}: `{}`", i + 1, pair.source_id))
            .map_err(validation)?;
        corpus.push(out);
    }
    let sources = corpus.len();
    let law_ok = corpus.iter().all(|group| match args.mode {
        AugmentMode::Mend | AugmentMode::MendRc => group.len() == args.k + 1,
        AugmentMode::Rc => (1..=args.k + 1).contains(&group.len()),
    });
    let corpus: Vec<QaPair> = corpus.into_iter().flatten().collect();
    let written = export_sft(&corpus, &args.out, &sep).map_err(dataset_failure)?;
    write_run_manifest(&args.out, "augment", &args)?;
    let law = match args.mode {
        AugmentMode::Rc => format!("between 1 and {} per source", args.k + 1),
        _ => format!("{} per source", args.k + 1),
    };
    println!(
        "{sources} source pairs -> {written} lines ({law}: {})",
        if law_ok { "ok" } else { "VIOLATED" }
    );
    if !law_ok {
        return Err(Failure {
            code: EXIT_PROPERTY,
            error: anyhow!("augmentation size law violated"),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModeArg {
    Direct,
    Scop,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    suite: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Direct)]
    mode: ModeArg,
    /// Paraphrases per item in scop mode.
    #[arg(short = 'k', long = "k", default_value_t = 8)]
    k: usize,
    /// Responses JSONL.
    #[arg(long)]
    out: PathBuf,
    /// Offline client: `echo-chain`, `topological-only` or `fixture=PATH`.
    #[arg(long)]
    mock: Option<String>,
    #[arg(long, default_value = "http://localhost:8000")]
    base_url: String,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    api_key_env: String,
    #[arg(long, default_value = "default")]
    model: String,
    #[arg(long, default_value_t = 120)]
    timeout_secs: u64,
    /// Total attempts per request.
    #[arg(long, default_value_t = 3)]
    retries: u32,
    #[arg(long, default_value_t = 8)]
    concurrency: usize,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[arg(long, default_value_t = 1024)]
    max_tokens: u32,
    #[arg(long, default_value_t = 1)]
    samples: u32,
    /// Paraphrase seed; required in scop mode.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "\\n")]
    sep: String,
}

fn make_client(args: &EvalArgs, sep: &str) -> Result<Box<dyn CompletionClient>, Failure> {
    match args.mock.as_deref() {
        Some("echo-chain") => Ok(Box::new(EchoChainClient { sep: sep.to_owned() })),
        Some("topological-only") => Ok(Box::new(TopologicalOnlyClient { sep: sep.to_owned() })),
        Some(other) => match other.strip_prefix("fixture=") {
            Some(path) => FixtureClient::load(Path::new(path))
                .map(|c| Box::new(c) as Box<dyn CompletionClient>)
                .with_context(|| format!("loading fixture {path}"))
                .map_err(runtime),
            None => Err(validation(anyhow!("unknown mock `{other}`"))),
        },
        None => {
            let config = HttpConfig {
                base_url: args.base_url.clone(),
                api_key_env: args.api_key_env.clone(),
                timeout: Duration::from_secs(args.timeout_secs),
            };
            HttpClient::from_env(&config)
                .map(|c| Box::new(c) as Box<dyn CompletionClient>)
                .map_err(runtime)
        }
    }
}

pub fn eval(args: EvalArgs) -> CmdResult {
    let sep = unescape(&args.sep);
    let mode = match args.mode {
        ModeArg::Direct => EvalMode::Direct,
        ModeArg::Scop => EvalMode::Scop { k: args.k },
    };
    let seed = match (mode, args.seed) {
        (EvalMode::Scop { .. }, None) => return Err(validation(anyhow!("scop mode needs --seed"))),
        (_, seed) => seed.unwrap_or(0),
    };
    let items = read_eval_items(&args.suite, &sep).map_err(dataset_failure)?;
    let client = make_client(&args, &sep)?;
    let config = RunConfig {
        mode,
        model: args.model.clone(),
        temperature: args.temperature,
        max_tokens: args.max_tokens,
        samples: args.samples,
        concurrency: args.concurrency,
        retry: RetryPolicy {
            max_attempts: args.retries.max(1),
            ..RetryPolicy::default()
        },
        seed,
        sep,
    };
    let output = run_eval(&items, &client, &config).map_err(validation)?;
    write_jsonl(&args.out, &output.responses).map_err(dataset_failure)?;
    if !output.votes.is_empty() {
        write_jsonl(&sidecar(&args.out, ".votes.jsonl"), &output.votes).map_err(dataset_failure)?;
    }
    write_run_manifest(&args.out, "eval", &args)?;
    println!(
        "{} responses for {} items written to {}",
        output.responses.len(),
        items.len(),
        args.out.display()
    );
    if !output.failures.is_empty() {
        let path = sidecar(&args.out, ".failures.jsonl");
        write_jsonl(&path, &output.failures).map_err(dataset_failure)?;
        for f in &output.failures {
            eprintln!("failed: {} sample {}: {}", f.id, f.sample_index, f.error);
        }
        return Err(runtime(anyhow!(
            "{} requests failed after retries (see {})",
            output.failures.len(),
            path.display()
        )));
    }
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct GradeArgs {
    #[arg(long)]
    suite: PathBuf,
    #[arg(long)]
    responses: PathBuf,
    /// Grade records JSONL; the summary goes to `<out>.summary.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "\\n")]
    sep: String,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    #[serde(flatten)]
    summary: &'a dagreason::eval::GradeSummary,
    accuracy_grid: Option<AccuracyGrid>,
}

pub fn grade(args: GradeArgs) -> CmdResult {
    let items = read_eval_items(&args.suite, &unescape(&args.sep)).map_err(dataset_failure)?;
    let responses = read_jsonl(&args.responses).map_err(dataset_failure)?;
    let report = grade_responses(&items, &responses).map_err(validation)?;
    let grid = match accuracy_grid(&items, &report.records) {
        Ok(g) => Some(g),
        Err(e) => {
            log::warn!("no accuracy grid: {e}");
            None
        }
    };
    write_jsonl(&args.out, &report.records).map_err(dataset_failure)?;
    let summary = SummaryFile {
        summary: &report.summary,
        accuracy_grid: grid,
    };
    write_json(&sidecar(&args.out, ".summary.json"), &summary).map_err(dataset_failure)?;
    write_run_manifest(&args.out, "grade", &args)?;
    let s = &report.summary;
    println!("accuracy {:.4} ({}/{})", s.accuracy, s.correct, s.records);
    for (kind, n) in &s.failures {
        println!("  {}: {n}", serde_json::to_value(kind).unwrap_or(Value::Null).as_str().unwrap_or("?"));
    }
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct VovArgs {
    /// Accuracy grid JSON, a grade summary, or a VoV report.
    #[arg(long)]
    grid: PathBuf,
    /// Report (or grid) to normalize against.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long)]
    baseline_name: Option<String>,
    /// Where to write the report; printed to stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_vov(path: &Path) -> Result<VovReport, Failure> {
    let value: Value = dagreason::dataset::read_json(path).map_err(dataset_failure)?;
    let grid_value = if value.get("vov_o").is_some() || value.get("accuracy_grid").is_some() {
        value.get("accuracy_grid").cloned().unwrap_or(Value::Null)
    } else {
        value
    };
    let grid: AccuracyGrid = serde_json::from_value(grid_value)
        .with_context(|| format!("{}: no accuracy grid", path.display()))
        .map_err(validation)?;
    compute_vov(&grid).map_err(validation)
}

pub fn vov(args: VovArgs) -> CmdResult {
    let mut report = load_vov(&args.grid)?;
    if let Some(path) = &args.baseline {
        let baseline = load_vov(path)?;
        let name = args.baseline_name.clone().unwrap_or_else(|| path.display().to_string());
        report = report.normalized_against(name, &baseline);
    }
    match &args.out {
        Some(out) => {
            write_json(out, &report).map_err(dataset_failure)?;
            write_run_manifest(out, "vov", &args)?;
            let show = |v: Option<f64>| v.map_or("absent".to_owned(), |x| format!("{x}"));
            println!("vov_o {} vov_r {}", show(report.vov_o), show(report.vov_r));
        }
        None => println!("{}", serde_json::to_string_pretty(&report).map_err(runtime)?),
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ProbeMethod {
    Linear,
    Knn,
}

#[derive(Debug, Args, Serialize)]
pub struct ProbeArgs {
    /// Directory of training dumps.
    #[arg(long)]
    train: PathBuf,
    /// Directory of held-out dumps.
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_enum, default_value_t = ProbeMethod::Linear)]
    method: ProbeMethod,
    /// Neighbours for the KNN probe.
    #[arg(short = 'k', long = "k", default_value_t = DEFAULT_KNN_K)]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    /// Report JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ProbeReport {
    method: ProbeMethod,
    train_examples: usize,
    test_examples: usize,
    f1_macro: f64,
    accuracy: f64,
    probe: Option<dagreason::probe::LinearProbe>,
}

pub fn probe(args: ProbeArgs) -> CmdResult {
    let train = build_probe_dataset(&load_dump_dir(&args.train).map_err(probe_failure)?).map_err(probe_failure)?;
    let test = build_probe_dataset(&load_dump_dir(&args.test).map_err(probe_failure)?).map_err(probe_failure)?;
    if test.labels.is_empty() {
        return Err(validation(anyhow!("no test statements in {}", args.test.display())));
    }
    let (predictions, probe) = match args.method {
        ProbeMethod::Linear => {
            let hp = ProbeHyperparams {
                learning_rate: args.lr,
                epochs: args.epochs,
                l2: args.l2,
                ..ProbeHyperparams::default()
            };
            let probe = train_linear_probe(&train.features, &train.labels, &hp).map_err(probe_failure)?;
            let preds = test
                .features
                .iter()
                .map(|x| predict(&probe, x).map(|(_, bit)| bit))
                .collect::<Result<Vec<u8>, _>>()
                .map_err(probe_failure)?;
            (preds, Some(probe))
        }
        ProbeMethod::Knn => {
            let stats = FeatureStats::fit(&train.features).map_err(probe_failure)?;
            let z = |xs: &[Vec<f64>]| xs.iter().map(|x| stats.transform(x)).collect::<Result<Vec<_>, _>>();
            let train_z = z(&train.features).map_err(probe_failure)?;
            let preds = z(&test.features)
                .map_err(probe_failure)?
                .iter()
                .map(|x| knn_probe(&train_z, &train.labels, args.k, x))
                .collect::<Result<Vec<u8>, _>>()
                .map_err(probe_failure)?;
            (preds, None)
        }
    };
    let f1 = f1_macro(&test.labels, &predictions).map_err(probe_failure)?;
    let correct = test.labels.iter().zip(&predictions).filter(|(a, b)| a == b).count();
    let report = ProbeReport {
        method: args.method,
        train_examples: train.labels.len(),
        test_examples: test.labels.len(),
        f1_macro: f1,
        accuracy: correct as f64 / test.labels.len() as f64,
        probe,
    };
    if let Some(out) = &args.out {
        write_json(out, &report).map_err(dataset_failure)?;
        write_run_manifest(out, "probe", &args)?;
    }
    println!("F1-macro {f1:.4} on {} held-out statements", report.test_examples);
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct SynthDumpsArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    problems: usize,
    #[arg(long, default_value_t = 8)]
    layers: usize,
    #[arg(long, default_value_t = 2)]
    heads: usize,
    #[arg(long)]
    seed: u64,
    /// Permute labels within each dump.
    #[arg(long)]
    shuffle_labels: bool,
}

pub fn synth_dumps(args: SynthDumpsArgs) -> CmdResult {
    let mut dumps = synthetic_dumps(&SyntheticConfig {
        problems: args.problems,
        num_layers: args.layers,
        num_heads: args.heads,
        seed: args.seed,
        ..SyntheticConfig::default()
    });
    if args.shuffle_labels {
        shuffle_labels(&mut dumps, &mut SplitMix64::new(derive_seed(args.seed, u64::MAX)));
    }
    std::fs::create_dir_all(&args.out)
        .with_context(|| args.out.display().to_string())
        .map_err(runtime)?;
    for d in &dumps {
        let path = args.out.join(format!("{}.json", d.id));
        std::fs::write(&path, d.to_json())
            .with_context(|| path.display().to_string())
            .map_err(runtime)?;
    }
    println!("wrote {} dumps to {}", dumps.len(), args.out.display());
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct RoundtripArgs {
    #[arg(long)]
    suite: PathBuf,
    #[arg(long, default_value = "\\n")]
    sep: String,
}

/// Every reason `item` fails to round-trip, empty when it passes.
fn roundtrip_violations(item: &EvalItem, sep: &str) -> Vec<String> {
    let mut problems = Vec::new();
    if let Err(e) = item.validate(sep) {
        problems.push(e.to_string());
    }
    let parsed = match parse_query(&item.query, sep) {
        Ok(p) => p,
        Err(e) => {
            problems.push(format!("parse: {e}"));
            return problems;
        }
    };
    if parsed.render() != item.query {
        problems.push("re-rendered text differs".into());
    }
    match parse_query(&parsed.render(), sep) {
        Ok(again) if semantic_equal(&again.dag, &parsed.dag) => {}
        _ => problems.push("parse of re-rendered text is not equivalent".into()),
    }
    match Problem::generate(item.task, item.depth, item.redundancy, item.seed) {
        Ok(p) if semantic_equal(&parsed.dag, &p.dag) && parsed.dag.len() == p.dag.len() => {}
        Ok(_) => problems.push("query disagrees with the problem regenerated from its seed".into()),
        Err(e) => problems.push(format!("regenerate: {e}")),
    }
    problems
}

pub fn roundtrip(args: RoundtripArgs) -> CmdResult {
    let sep = unescape(&args.sep);
    let items: Vec<EvalItem> = read_jsonl(&args.suite).map_err(dataset_failure)?;
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut violations = 0;
    for item in &items {
        *seen.entry(&item.id).or_default() += 1;
        for problem in roundtrip_violations(item, &sep) {
            violations += 1;
            eprintln!("{}: {problem}", item.id);
        }
    }
    for (id, n) in seen.into_iter().filter(|(_, n)| *n > 1) {
        violations += 1;
        eprintln!("{id}: appears {n} times");
    }
    println!("checked {} items, {violations} violations", items.len());
    if violations > 0 {
        return Err(Failure {
            code: EXIT_PROPERTY,
            error: anyhow!("round-trip violated"),
        });
    }
    Ok(())
}
