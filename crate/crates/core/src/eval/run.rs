use num_bigint::BigInt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::grade::{scop_vote, ResponseRecord};
use super::parse_final_answer;
use crate::augment::{permute_paraphrases, AugmentError};
use crate::client::{with_retry, CompletionClient, CompletionRequest, RetryPolicy};
use crate::dataset::EvalItem;
use crate::render::DEFAULT_SEP;
use crate::rng::{derive_seed, mix64, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum EvalMode {
    /// One completion of the item's own query.
    Direct,
    /// `k` premise permutations, majority-voted.
    Scop { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: EvalMode,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Repeated samples per item, numbered from 0.
    pub samples: u32,
    /// Upper bound on in-flight requests.
    pub concurrency: usize,
    pub retry: RetryPolicy,
    #[serde(with = "crate::serde_u64_string")]
    pub seed: u64,
    pub sep: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: EvalMode::Direct,
            model: "default".into(),
            temperature: 0.0,
            max_tokens: 1024,
            samples: 1,
            concurrency: 8,
            retry: RetryPolicy::default(),
            seed: 0,
            sep: DEFAULT_SEP.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub id: String,
    pub sample_index: u32,
    /// Parsed answer per paraphrase index; `None` for any failure.
    pub answers: Vec<Option<String>>,
    pub voted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunFailure {
    pub id: String,
    pub sample_index: u32,
    pub paraphrase_index: Option<u32>,
    pub error: String,
}

/// Everything a run produced, sorted by (id, sample, paraphrase).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutput {
    pub responses: Vec<ResponseRecord>,
    pub votes: Vec<VoteRecord>,
    pub failures: Vec<RunFailure>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error("cannot paraphrase `{id}`: {source}")]
    Paraphrase {
        id: String,
        #[source]
        source: AugmentError,
    },
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

struct Job<'a> {
    item: &'a EvalItem,
    sample_index: u32,
    paraphrase_index: Option<u32>,
    prompt: String,
}

fn id_hash(id: &str) -> u64 {
    id.bytes().fold(0, |h, b| mix64(h ^ u64::from(b)))
}

/// Queries the client for every item and sample. Transport failures that
/// survive the retry policy are recorded and the run continues; failed
/// requests have no response record and grade as missing.
pub fn run_eval<C: CompletionClient + ?Sized>(
    items: &[EvalItem],
    client: &C,
    config: &RunConfig,
) -> Result<RunOutput, RunError> {
    if let EvalMode::Scop { k } = config.mode {
        if k < 2 {
            return Err(RunError::Config("scop needs at least 2 paraphrases".into()));
        }
    }
    if config.concurrency == 0 || config.samples == 0 {
        return Err(RunError::Config("concurrency and samples must be at least 1".into()));
    }
    if !(config.temperature >= 0.0 && config.temperature.is_finite()) {
        return Err(RunError::Config("temperature must be finite and non-negative".into()));
    }

    let mut sorted: Vec<&EvalItem> = items.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut jobs = Vec::new();
    for item in sorted {
        for sample_index in 0..config.samples {
            match config.mode {
                EvalMode::Direct => jobs.push(Job {
                    item,
                    sample_index,
                    paraphrase_index: None,
                    prompt: item.query.clone(),
                }),
                EvalMode::Scop { k } => {
                    let seed = derive_seed(config.seed ^ id_hash(&item.id), u64::from(sample_index));
                    let paraphrases = permute_paraphrases(&item.query, &config.sep, k, &mut SplitMix64::new(seed))
                        .map_err(|source| RunError::Paraphrase {
                            id: item.id.clone(),
                            source,
                        })?;
                    jobs.extend(paraphrases.into_iter().enumerate().map(|(j, prompt)| Job {
                        item,
                        sample_index,
                        paraphrase_index: Some(j as u32),
                        prompt,
                    }));
                }
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.concurrency)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    let results: Vec<_> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let request = CompletionRequest {
                    prompt: job.prompt.clone(),
                    temperature: config.temperature,
                    max_tokens: config.max_tokens,
                    model: config.model.clone(),
                };
                with_retry(&config.retry, || client.complete(&request))
            })
            .collect()
    });

    let mut output = RunOutput::default();
    let mut answers: Vec<Option<BigInt>> = Vec::new();
    for (i, (job, result)) in jobs.iter().zip(results).enumerate() {
        match result {
            Ok(response) => {
                if job.paraphrase_index.is_some() {
                    answers.push(parse_final_answer(&response, job.item.task).ok());
                }
                output.responses.push(ResponseRecord {
                    id: job.item.id.clone(),
                    sample_index: job.sample_index,
                    paraphrase_index: job.paraphrase_index,
                    response,
                });
            }
            Err(e) => {
                log::warn!("{} sample {}: {e}", job.item.id, job.sample_index);
                answers.push(None);
                output.failures.push(RunFailure {
                    id: job.item.id.clone(),
                    sample_index: job.sample_index,
                    paraphrase_index: job.paraphrase_index,
                    error: e.to_string(),
                });
            }
        }
        let group_ends = jobs
            .get(i + 1)
            .is_none_or(|next| next.paraphrase_index.is_none_or(|p| p == 0));
        if job.paraphrase_index.is_some() && group_ends {
            output.votes.push(VoteRecord {
                id: job.item.id.clone(),
                sample_index: job.sample_index,
                voted: scop_vote(&answers).map(|v| v.to_string()),
                answers: answers.drain(..).map(|a| a.map(|v| v.to_string())).collect(),
            });
        }
        if job.paraphrase_index.is_none() {
            answers.clear();
        }
    }
    Ok(output)
}
