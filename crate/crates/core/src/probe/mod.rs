//! Attention dumps, simplified attention and relevance probes.
//!
//! A raw dump holds, for every layer and head, the attention weights from
//! the final input token to each token of the query. Simplification averages
//! heads, then pools each statement span by mean and the question span by
//! max, giving one column per statement plus one for the question.
//!
//! Dump files are JSON:
//!
//! ```text
//! {"version":1,"id":..,"num_layers":L,"num_heads":H,"num_tokens":T,
//!  "statement_spans":[[s,e],..],"question_span":[s,e],"labels":[..],
//!  "attention":"<base64 of L*H*T little-endian f32, [layer][head][token]>"}
//! ```
//!
//! Simplified dumps drop `num_heads` and `attention` and carry
//! `"matrix":[[..S+1 values..] per layer]`.

mod linear;
pub mod synthetic;

pub use linear::{
    f1_macro, knn_probe, logistic_loss_and_gradient, predict, train_linear_probe, FeatureStats, LinearProbe,
    ProbeHyperparams, DEFAULT_KNN_K, STD_FLOOR,
};

use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DUMP_VERSION: u32 = 1;
/// Slack on attention row sums, for truncated tokenizations.
pub const ROW_SUM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {message}")]
    Format { context: String, message: String },
    #[error("dump `{id}`: {reason}")]
    InvalidDump { id: String, reason: String },
    #[error("dump `{id}`: empty span")]
    EmptySpan { id: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training data needs both classes")]
    SingleClass,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Half-open token range `[start, end)`, written as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span(pub usize, pub usize);

impl Span {
    pub fn start(self) -> usize {
        self.0
    }

    pub fn end(self) -> usize {
        self.1
    }

    pub fn len(self) -> usize {
        self.1.saturating_sub(self.0)
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    pub fn range(self) -> std::ops::Range<usize> {
        self.0..self.1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawAttentionDump {
    pub id: String,
    pub num_layers: usize,
    pub num_heads: usize,
    pub num_tokens: usize,
    /// `num_layers * num_heads * num_tokens` values, `[layer][head][token]`.
    pub last_token_attn: Vec<f32>,
    pub statement_spans: Vec<Span>,
    pub question_span: Span,
    pub labels: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDumpFile {
    version: u32,
    id: String,
    num_layers: usize,
    num_heads: usize,
    num_tokens: usize,
    statement_spans: Vec<Span>,
    question_span: Span,
    labels: Vec<u8>,
    attention: String,
}

impl RawAttentionDump {
    pub fn row(&self, layer: usize, head: usize) -> &[f32] {
        let start = (layer * self.num_heads + head) * self.num_tokens;
        &self.last_token_attn[start..start + self.num_tokens]
    }

    pub fn validate(&self) -> Result<(), ProbeError> {
        let fail = |reason: String| {
            Err(ProbeError::InvalidDump {
                id: self.id.clone(),
                reason,
            })
        };
        if self.num_layers == 0 || self.num_heads == 0 || self.num_tokens == 0 {
            return fail("dimensions must be positive".into());
        }
        let expected = self.num_layers * self.num_heads * self.num_tokens;
        if self.last_token_attn.len() != expected {
            return fail(format!("{} attention values, expected {expected}", self.last_token_attn.len()));
        }
        if self.labels.len() != self.statement_spans.len() {
            return fail(format!(
                "{} labels for {} statements",
                self.labels.len(),
                self.statement_spans.len()
            ));
        }
        if self.labels.iter().any(|&b| b > 1) {
            return fail("labels must be 0 or 1".into());
        }
        check_spans(&self.statement_spans, self.question_span, self.num_tokens).or_else(fail)?;
        for layer in 0..self.num_layers {
            for head in 0..self.num_heads {
                let row = self.row(layer, head);
                if row.iter().any(|&x| !x.is_finite() || x < 0.0) {
                    return fail(format!("layer {layer} head {head}: negative or non-finite weight"));
                }
                let sum: f64 = row.iter().map(|&x| f64::from(x)).sum();
                if sum > 1.0 + ROW_SUM_TOLERANCE {
                    return fail(format!("layer {layer} head {head}: row sums to {sum}"));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let bytes: Vec<u8> = self.last_token_attn.iter().flat_map(|x| x.to_le_bytes()).collect();
        let file = RawDumpFile {
            version: DUMP_VERSION,
            id: self.id.clone(),
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            num_tokens: self.num_tokens,
            statement_spans: self.statement_spans.clone(),
            question_span: self.question_span,
            labels: self.labels.clone(),
            attention: STANDARD.encode(bytes),
        };
        serde_json::to_string(&file).expect("dump serialization cannot fail")
    }

    /// Parses and validates a dump.
    pub fn from_json(text: &str) -> Result<Self, ProbeError> {
        let file: RawDumpFile = serde_json::from_str(text).map_err(|e| format_error("raw dump", e))?;
        from_raw_file(file)
    }
}

fn format_error(context: &str, e: impl std::fmt::Display) -> ProbeError {
    ProbeError::Format {
        context: context.to_owned(),
        message: e.to_string(),
    }
}

fn from_raw_file(file: RawDumpFile) -> Result<RawAttentionDump, ProbeError> {
    if file.version != DUMP_VERSION {
        return Err(format_error(&file.id, format!("unsupported version {}", file.version)));
    }
    let bytes = STANDARD.decode(&file.attention).map_err(|e| format_error(&file.id, e))?;
    if bytes.len() % 4 != 0 {
        return Err(format_error(&file.id, "attention byte length is not a multiple of 4"));
    }
    let dump = RawAttentionDump {
        last_token_attn: bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        id: file.id,
        num_layers: file.num_layers,
        num_heads: file.num_heads,
        num_tokens: file.num_tokens,
        statement_spans: file.statement_spans,
        question_span: file.question_span,
        labels: file.labels,
    };
    dump.validate()?;
    Ok(dump)
}

fn check_spans(statements: &[Span], question: Span, num_tokens: usize) -> Result<(), String> {
    let mut all: Vec<Span> = statements.iter().copied().chain([question]).collect();
    if let Some(s) = all.iter().find(|s| s.0 > s.1 || s.1 > num_tokens) {
        return Err(format!("span [{}, {}) outside [0, {num_tokens})", s.0, s.1));
    }
    all.retain(|s| !s.is_empty());
    all.sort_by_key(|s| s.0);
    if let Some(w) = all.windows(2).find(|w| w[0].1 > w[1].0) {
        return Err(format!("spans [{}, {}) and [{}, {}) overlap", w[0].0, w[0].1, w[1].0, w[1].1));
    }
    Ok(())
}

/// `num_layers x (S + 1)` pooled attention: statement columns in order,
/// then the question column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimplifiedAttention {
    pub version: u32,
    pub id: String,
    pub num_layers: usize,
    pub num_tokens: usize,
    pub statement_spans: Vec<Span>,
    pub question_span: Span,
    pub labels: Vec<u8>,
    pub matrix: Vec<Vec<f64>>,
}

impl SimplifiedAttention {
    pub fn num_statements(&self) -> usize {
        self.labels.len()
    }

    /// Statement `s` across layers.
    pub fn statement_feature(&self, s: usize) -> Vec<f64> {
        self.matrix.iter().map(|row| row[s]).collect()
    }

    pub fn validate(&self) -> Result<(), ProbeError> {
        let fail = |reason: String| {
            Err(ProbeError::InvalidDump {
                id: self.id.clone(),
                reason,
            })
        };
        if self.version != DUMP_VERSION {
            return fail(format!("unsupported version {}", self.version));
        }
        if self.labels.len() != self.statement_spans.len() {
            return fail("labels and statement spans differ in length".into());
        }
        if self.matrix.len() != self.num_layers || self.num_layers == 0 {
            return fail(format!("{} matrix rows for {} layers", self.matrix.len(), self.num_layers));
        }
        let width = self.labels.len() + 1;
        if self.matrix.iter().any(|r| r.len() != width) {
            return fail(format!("matrix rows must have {width} entries"));
        }
        if self.matrix.iter().flatten().any(|x| !x.is_finite()) {
            return fail("matrix has non-finite entries".into());
        }
        check_spans(&self.statement_spans, self.question_span, self.num_tokens).or_else(fail)
    }
}

/// Head mean, then mean over each statement span and max over the question
/// span.
pub fn simplify_attention(dump: &RawAttentionDump) -> Result<SimplifiedAttention, ProbeError> {
    dump.validate()?;
    if dump.statement_spans.iter().chain([&dump.question_span]).any(|s| s.is_empty()) {
        return Err(ProbeError::EmptySpan { id: dump.id.clone() });
    }
    let heads = dump.num_heads as f64;
    let matrix = (0..dump.num_layers)
        .map(|layer| {
            let pooled: Vec<f64> = (0..dump.num_tokens)
                .map(|t| (0..dump.num_heads).map(|h| f64::from(dump.row(layer, h)[t])).sum::<f64>() / heads)
                .collect();
            let mut row: Vec<f64> = dump
                .statement_spans
                .iter()
                .map(|s| pooled[s.range()].iter().sum::<f64>() / s.len() as f64)
                .collect();
            row.push(pooled[dump.question_span.range()].iter().copied().fold(f64::NEG_INFINITY, f64::max));
            row
        })
        .collect();
    Ok(SimplifiedAttention {
        version: DUMP_VERSION,
        id: dump.id.clone(),
        num_layers: dump.num_layers,
        num_tokens: dump.num_tokens,
        statement_spans: dump.statement_spans.clone(),
        question_span: dump.question_span,
        labels: dump.labels.clone(),
        matrix,
    })
}

/// Parses either dump form, simplifying raw dumps.
pub fn parse_dump(text: &str) -> Result<SimplifiedAttention, ProbeError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| format_error("dump", e))?;
    if value.get("matrix").is_some() {
        let s: SimplifiedAttention = serde_json::from_value(value).map_err(|e| format_error("simplified dump", e))?;
        s.validate()?;
        Ok(s)
    } else {
        let file: RawDumpFile = serde_json::from_value(value).map_err(|e| format_error("raw dump", e))?;
        simplify_attention(&from_raw_file(file)?)
    }
}

/// Loads every `*.json` file of `dir` in file-name order.
pub fn load_dump_dir(dir: &Path) -> Result<Vec<SimplifiedAttention>, ProbeError> {
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| ProbeError::Io { path, source }
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io(dir))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io(dir))?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(io(p))?;
            parse_dump(&text).map_err(|e| match e {
                ProbeError::Format { message, .. } => format_error(&p.display().to_string(), message),
                other => other,
            })
        })
        .collect()
}

/// One example per statement: its across-layer column and relevance bit.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

pub fn build_probe_dataset(dumps: &[SimplifiedAttention]) -> Result<ProbeDataset, ProbeError> {
    let layers = dumps.first().map_or(0, |d| d.num_layers);
    let mut data = ProbeDataset {
        features: Vec::new(),
        labels: Vec::new(),
    };
    for d in dumps {
        d.validate()?;
        if d.num_layers != layers {
            return Err(ProbeError::Shape(format!(
                "dump `{}` has {} layers, expected {layers}",
                d.id, d.num_layers
            )));
        }
        for s in 0..d.num_statements() {
            data.features.push(d.statement_feature(s));
            data.labels.push(d.labels[s]);
        }
    }
    Ok(data)
}
