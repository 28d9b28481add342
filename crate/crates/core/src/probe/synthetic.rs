//! Synthetic attention dumps with a known relevance margin.
//!
//! Every statement is one token and the question two. In every layer and
//! head a relevant statement gets weight in `[0.21, 0.23)`, an irrelevant
//! one `[0, 0.004)` and each question token `[0, 0.005)`, so relevant
//! layer means exceed irrelevant ones by more than 0.2 and rows stay below 1.

use super::{RawAttentionDump, Span};
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticConfig {
    pub problems: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub min_statements: usize,
    pub max_statements: usize,
    pub min_relevant: usize,
    pub max_relevant: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            problems: 50,
            num_layers: 8,
            num_heads: 2,
            min_statements: 12,
            max_statements: 18,
            min_relevant: 2,
            max_relevant: 4,
            seed: 0,
        }
    }
}

pub const RELEVANT_RANGE: (f64, f64) = (0.21, 0.23);
pub const IRRELEVANT_MAX: f64 = 0.004;
pub const QUESTION_MAX: f64 = 0.005;

fn between(rng: &mut SplitMix64, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

/// # Panics
/// Panics on empty ranges or more relevant statements than statements.
pub fn synthetic_dumps(config: &SyntheticConfig) -> Vec<RawAttentionDump> {
    assert!(config.min_statements <= config.max_statements && config.min_relevant <= config.max_relevant);
    assert!(config.max_relevant <= config.min_statements && config.min_relevant >= 1);
    (0..config.problems)
        .map(|p| {
            let mut rng = SplitMix64::new(derive_seed(config.seed, p as u64));
            let statements = between(&mut rng, config.min_statements, config.max_statements);
            let relevant = between(&mut rng, config.min_relevant, config.max_relevant);
            let mut order: Vec<usize> = (0..statements).collect();
            rng.shuffle(&mut order);
            let mut labels = vec![0u8; statements];
            for &i in &order[..relevant] {
                labels[i] = 1;
            }
            let tokens = statements + 2;
            let mut attn = Vec::with_capacity(config.num_layers * config.num_heads * tokens);
            for _ in 0..config.num_layers * config.num_heads {
                for &label in &labels {
                    let u = rng.next_f64();
                    let w = if label == 1 {
                        RELEVANT_RANGE.0 + (RELEVANT_RANGE.1 - RELEVANT_RANGE.0) * u
                    } else {
                        IRRELEVANT_MAX * u
                    };
                    attn.push(w as f32);
                }
                for _ in 0..2 {
                    attn.push((QUESTION_MAX * rng.next_f64()) as f32);
                }
            }
            RawAttentionDump {
                id: format!("synthetic-{p:04}"),
                num_layers: config.num_layers,
                num_heads: config.num_heads,
                num_tokens: tokens,
                last_token_attn: attn,
                statement_spans: (0..statements).map(|i| Span(i, i + 1)).collect(),
                question_span: Span(statements, tokens),
                labels,
            }
        })
        .collect()
}

/// Permutes each dump's labels in place, breaking the link to attention.
pub fn shuffle_labels(dumps: &mut [RawAttentionDump], rng: &mut SplitMix64) {
    for d in dumps {
        rng.shuffle(&mut d.labels);
    }
}
