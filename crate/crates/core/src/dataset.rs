//! Evaluation suites, SFT exports and JSONL plumbing.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::QaPair;
use crate::dag::{DagError, Problem, Task};
use crate::eval::parse_final_answer;
use crate::render::{
    format_answer, parse_query, render_query_with_sep, render_reasoning_chain, validate_chain,
    OrderTag, SentenceKind, DEFAULT_SEP,
};
use crate::rng::{derive_seed, problem_seed, SplitMix64};

/// Version of the JSONL record layouts written by this crate.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: schema violation: {message}")]
    Schema { line: usize, message: String },
    #[error("item `{id}`: {reason}")]
    InvalidItem { id: String, reason: String },
    #[error("invalid suite config: {0}")]
    Config(String),
    #[error("pair from `{source_id}` is inconsistent: {reason}")]
    InvalidPair { source_id: String, reason: String },
    #[error(transparent)]
    Dag(#[from] DagError),
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalItem {
    pub id: String,
    pub task: Task,
    pub depth: usize,
    pub difficulty: usize,
    pub order_tag: OrderTag,
    pub redundancy: usize,
    #[serde(with = "crate::serde_u64_string")]
    pub seed: u64,
    pub query: String,
    pub answer: String,
    pub chain: String,
    /// Relevance bit per premise sentence, in query order.
    pub labels: Vec<u8>,
}

impl EvalItem {
    /// Re-derives everything checkable from the query: it parses, labels
    /// match relevance, the redundancy count matches, the answer matches
    /// the evaluator and the chain validates.
    pub fn validate(&self, sep: &str) -> Result<(), DatasetError> {
        let invalid = |reason: String| DatasetError::InvalidItem {
            id: self.id.clone(),
            reason,
        };
        let parsed = parse_query(&self.query, sep).map_err(|e| invalid(e.to_string()))?;
        if parsed.task != self.task {
            return Err(invalid(format!("query is {} but item says {}", parsed.task, self.task)));
        }
        if parsed.labels() != self.labels {
            return Err(invalid("labels disagree with premise relevance".into()));
        }
        let redundant = parsed
            .premises()
            .iter()
            .filter(|p| !p.relevant && p.kind == SentenceKind::Dependency)
            .count();
        if redundant != self.redundancy {
            return Err(invalid(format!(
                "{redundant} redundant dependencies, item says {}",
                self.redundancy
            )));
        }
        let expected = format_answer(self.task, parsed.answer());
        if expected != self.answer {
            return Err(invalid(format!("answer {} but query evaluates to {expected}", self.answer)));
        }
        validate_chain(&parsed.dag, self.task, &self.chain).map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSuiteConfig {
    pub task: Task,
    pub depths: Vec<usize>,
    pub orders: Vec<OrderTag>,
    pub redundancy_levels: Vec<usize>,
    /// Items per (depth, order, redundancy) cell.
    pub count: usize,
    #[serde(with = "crate::serde_u64_string")]
    pub master_seed: u64,
}

impl EvalSuiteConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let fail = |m: &str| Err(DatasetError::Config(m.to_owned()));
        if self.depths.is_empty() || self.orders.is_empty() || self.redundancy_levels.is_empty() {
            return fail("depths, orders and redundancy levels must be nonempty");
        }
        if self.count == 0 {
            return fail("count must be at least 1");
        }
        if self.depths.contains(&0) {
            return fail("depths must be at least 1");
        }
        if self.count > u32::MAX as usize || self.depths.iter().any(|&d| d > u32::MAX as usize) {
            return fail("count and depths must fit in 32 bits");
        }
        let has_dups = |v: Vec<u64>| {
            let mut s = v.clone();
            s.sort_unstable();
            s.dedup();
            s.len() != v.len()
        };
        if has_dups(self.depths.iter().map(|&d| d as u64).collect())
            || has_dups(self.orders.iter().map(|&o| o as u64).collect())
            || has_dups(self.redundancy_levels.iter().map(|&r| r as u64).collect())
        {
            return fail("axis values must be distinct");
        }
        Ok(())
    }

    /// The `index`-th base problem of `depth` is seeded with
    /// `mix64(master ^ (depth << 32 | index))`.
    pub fn problem_seed(&self, depth: usize, index: usize) -> u64 {
        problem_seed(self.master_seed, ((depth as u64) << 32) | index as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCell {
    pub depth: usize,
    pub order: OrderTag,
    pub redundancy: usize,
    pub items: Vec<EvalItem>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalSuite {
    pub config: EvalSuiteConfig,
    pub cells: Vec<EvalCell>,
}

impl EvalSuite {
    pub fn items(&self) -> impl Iterator<Item = &EvalItem> {
        self.cells.iter().flat_map(|c| c.items.iter())
    }

    pub fn len(&self) -> usize {
        self.cells.iter().map(|c| c.items.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn manifest(&self) -> SuiteManifest {
        SuiteManifest {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            config: self.config.clone(),
            cells: self
                .cells
                .iter()
                .map(|c| CellCount {
                    depth: c.depth,
                    order: c.order,
                    redundancy: c.redundancy,
                    count: c.items.len(),
                })
                .collect(),
            total: self.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCount {
    pub depth: usize,
    pub order: OrderTag,
    pub redundancy: usize,
    pub count: usize,
}

/// Sidecar written next to every suite file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub config: EvalSuiteConfig,
    pub cells: Vec<CellCount>,
    pub total: usize,
}

fn order_index(order: OrderTag) -> u64 {
    match order {
        OrderTag::Topological => 0,
        OrderTag::Random => 1,
        OrderTag::Reversed => 2,
    }
}

/// Builds `count` items for every (depth, order, redundancy) cell.
///
/// Within a depth the same base problems appear in every cell: the problem
/// for redundancy `r` is `Problem::generate(task, depth, r, seed)`, whose
/// tree draws come first, so only the distractors differ across levels (and
/// lower levels' distractors are a prefix of higher ones). Each rendering
/// uses its own stream derived from the problem seed and the cell.
pub fn build_eval_suite(config: &EvalSuiteConfig) -> Result<EvalSuite, DatasetError> {
    config.validate()?;
    let mut cells = Vec::new();
    for &depth in &config.depths {
        for &order in &config.orders {
            for &redundancy in &config.redundancy_levels {
                let items = (0..config.count)
                    .into_par_iter()
                    .map(|index| build_item(config, depth, order, redundancy, index))
                    .collect::<Result<Vec<_>, _>>()?;
                cells.push(EvalCell {
                    depth,
                    order,
                    redundancy,
                    items,
                });
            }
        }
    }
    Ok(EvalSuite {
        config: config.clone(),
        cells,
    })
}

fn build_item(
    config: &EvalSuiteConfig,
    depth: usize,
    order: OrderTag,
    redundancy: usize,
    index: usize,
) -> Result<EvalItem, DatasetError> {
    let seed = config.problem_seed(depth, index);
    let problem = Problem::generate(config.task, depth, redundancy, seed)?;
    let mut rng = SplitMix64::new(derive_seed(seed, (order_index(order) << 32) | redundancy as u64));
    let query = render_query_with_sep(&problem, order, DEFAULT_SEP, &mut rng);
    Ok(EvalItem {
        id: format!("{}-d{depth}-{order}-r{redundancy}-{index:05}", config.task),
        task: config.task,
        depth,
        difficulty: problem.difficulty(),
        order_tag: order,
        redundancy,
        seed,
        query: query.text(),
        answer: format_answer(config.task, problem.answer()),
        chain: render_reasoning_chain(&problem).text,
        labels: query.labels(),
    })
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(io_error(path))?;
    let mut out = BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut out, record).map_err(|e| io_error(path)(e.into()))?;
        out.write_all(b"\n").map_err(io_error(path))?;
    }
    out.flush().map_err(io_error(path))
}

/// Reads one record per nonblank line; schema errors carry the 1-based line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let reader = BufReader::new(File::open(path).map_err(io_error(path))?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_error(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| DatasetError::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DatasetError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_error(path)(e.into()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_error(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(io_error(path))?;
    serde_json::from_str(&text).map_err(|e| DatasetError::Schema {
        line: e.line(),
        message: e.to_string(),
    })
}

/// Writes the suite's items to `path` and its manifest to
/// `<path>.manifest.json`.
pub fn write_suite(path: &Path, suite: &EvalSuite) -> Result<PathBuf, DatasetError> {
    let items: Vec<&EvalItem> = suite.items().collect();
    write_jsonl(path, &items)?;
    let manifest_path = manifest_path(path);
    write_json(&manifest_path, &suite.manifest())?;
    Ok(manifest_path)
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Reads items and re-validates each one, reporting the first bad line.
pub fn read_eval_items(path: &Path, sep: &str) -> Result<Vec<EvalItem>, DatasetError> {
    let items: Vec<EvalItem> = read_jsonl(path)?;
    for item in &items {
        item.validate(sep)?;
    }
    let mut ids: Vec<&str> = items.iter().map(|i| i.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(DatasetError::InvalidItem {
            id: w[0].to_owned(),
            reason: "duplicate id".into(),
        });
    }
    Ok(items)
}

/// Checks that the response's final answer equals the query's value.
pub fn check_pair(pair: &QaPair, sep: &str) -> Result<(), DatasetError> {
    let invalid = |reason: String| DatasetError::InvalidPair {
        source_id: pair.source_id.clone(),
        reason,
    };
    let parsed = parse_query(&pair.query, sep).map_err(|e| invalid(e.to_string()))?;
    let stated = parse_final_answer(&pair.response, parsed.task).map_err(|e| invalid(e.to_string()))?;
    if &stated != parsed.answer() {
        return Err(invalid(format!(
            "response answers {stated} but the query evaluates to {}",
            parsed.answer()
        )));
    }
    Ok(())
}

/// Validates the whole corpus, then writes it as JSONL. Nothing is written
/// if any pair is inconsistent.
pub fn export_sft(corpus: &[QaPair], path: &Path, sep: &str) -> Result<usize, DatasetError> {
    corpus
        .par_iter()
        .map(|pair| check_pair(pair, sep))
        .collect::<Result<Vec<()>, _>>()?;
    write_jsonl(path, corpus)?;
    Ok(corpus.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::Augmentation;

    fn tiny() -> EvalSuiteConfig {
        EvalSuiteConfig {
            task: Task::Arithmetic,
            depths: vec![1],
            orders: vec![OrderTag::Topological],
            redundancy_levels: vec![0],
            count: 1,
            master_seed: 3,
        }
    }

    #[test]
    fn single_cell_single_item() {
        let suite = build_eval_suite(&tiny()).unwrap();
        assert_eq!(suite.len(), 1);
        let item = suite.items().next().unwrap();
        item.validate(DEFAULT_SEP).unwrap();
        assert_eq!(item.id, "arithmetic-d1-topological-r0-00000");
    }

    #[test]
    fn base_problems_are_shared_across_cells() {
        let config = EvalSuiteConfig {
            orders: OrderTag::ALL.to_vec(),
            redundancy_levels: vec![0, 3],
            depths: vec![2],
            count: 4,
            ..tiny()
        };
        let suite = build_eval_suite(&config).unwrap();
        assert_eq!(suite.cells.len(), 6);
        for index in 0..4 {
            let answers: Vec<&str> = suite.cells.iter().map(|c| c.items[index].answer.as_str()).collect();
            assert!(answers.windows(2).all(|w| w[0] == w[1]));
            let chains: Vec<&str> = suite.cells.iter().map(|c| c.items[index].chain.as_str()).collect();
            assert!(chains.windows(2).all(|w| w[0] == w[1]));
        }
        for item in suite.items() {
            item.validate(DEFAULT_SEP).unwrap();
        }
    }

    #[test]
    fn config_validation() {
        let mut c = tiny();
        c.count = 0;
        assert!(build_eval_suite(&c).is_err());
        let mut c = tiny();
        c.orders.clear();
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.depths = vec![2, 2];
        assert!(c.validate().is_err());
    }

    #[test]
    fn missing_field_reports_line_and_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, r#"{"id":"x","task":"logical","depth":1,"difficulty":1,"order_tag":"random","redundancy":0,"seed":"1","answer":"1","chain":"","labels":[]}"#).unwrap();
        let err = read_jsonl::<EvalItem>(&path).unwrap_err();
        match err {
            DatasetError::Schema { line, message } => {
                assert_eq!(line, 1);
                assert!(message.contains("query"), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        write_jsonl::<EvalItem>(&path, &[]).unwrap();
        assert_eq!(std::fs::read(&path).unwrap().len(), 0);
        assert!(read_jsonl::<EvalItem>(&path).unwrap().is_empty());
    }

    #[test]
    fn item_round_trips_with_string_seed() {
        let suite = build_eval_suite(&EvalSuiteConfig {
            master_seed: u64::MAX,
            ..tiny()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        write_suite(&path, &suite).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let item = suite.items().next().unwrap();
        assert!(text.contains(&format!("\"seed\":\"{}\"", item.seed)));
        let back = read_eval_items(&path, DEFAULT_SEP).unwrap();
        assert_eq!(back, vec![item.clone()]);
        assert!(manifest_path(&path).exists());
    }

    #[test]
    fn export_rejects_inconsistent_pairs() {
        let p = Problem::generate(Task::Arithmetic, 2, 0, 1).unwrap();
        let good = QaPair::vanilla(&p, "p1", DEFAULT_SEP, &mut SplitMix64::new(0));
        let mut bad = good.clone();
        bad.source_id = "broken".into();
        bad.response = "Thus, the answer is 123456789.0".into();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sft.jsonl");
        assert_eq!(export_sft(std::slice::from_ref(&good), &path, DEFAULT_SEP).unwrap(), 1);
        let line = std::fs::read_to_string(&path).unwrap();
        assert!(line.contains("\"augmentation\":\"none\""));
        assert_eq!(good.augmentation, Augmentation::None);
        let err = export_sft(&[good, bad], &dir.path().join("x.jsonl"), DEFAULT_SEP).unwrap_err();
        assert!(matches!(err, DatasetError::InvalidPair { ref source_id, .. } if source_id == "broken"));
        assert!(!dir.path().join("x.jsonl").exists());
    }
}
