use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::parse_final_answer;
use super::vov::AccuracyGrid;
use crate::dataset::EvalItem;
use crate::render::{parse_exact_integer, OrderTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Error)]
#[serde(rename_all = "kebab-case")]
pub enum AnswerFailure {
    #[error("no answer marker")]
    NoMarker,
    #[error("value after the answer marker is not parseable")]
    UnparseableValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Failure {
    None,
    NoMarker,
    UnparseableValue,
}

impl From<AnswerFailure> for Failure {
    fn from(f: AnswerFailure) -> Self {
        match f {
            AnswerFailure::NoMarker => Failure::NoMarker,
            AnswerFailure::UnparseableValue => Failure::UnparseableValue,
        }
    }
}

/// One line of a responses file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseRecord {
    pub id: String,
    #[serde(default)]
    pub sample_index: u32,
    #[serde(default)]
    pub paraphrase_index: Option<u32>,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradeRecord {
    pub id: String,
    pub sample_index: u32,
    #[serde(with = "crate::serde_opt_bigint")]
    pub parsed_answer: Option<BigInt>,
    pub correct: bool,
    pub failure: Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleAccuracy {
    pub sample_index: u32,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeSummary {
    pub items: usize,
    pub records: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub failures: BTreeMap<Failure, usize>,
    pub per_sample: Vec<SampleAccuracy>,
    /// Mean and population stddev of the per-sample accuracies.
    pub sample_mean: f64,
    pub sample_stddev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeReport {
    pub records: Vec<GradeRecord>,
    pub summary: GradeSummary,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GradeError {
    #[error("duplicate response for `{id}` sample {sample_index} paraphrase {paraphrase_index:?}")]
    DuplicateResponse {
        id: String,
        sample_index: u32,
        paraphrase_index: Option<u32>,
    },
    #[error("response for unknown item `{0}`")]
    UnknownId(String),
    #[error("duplicate item `{0}`")]
    DuplicateItem(String),
    #[error("item `{0}` has an unparseable reference answer")]
    BadReference(String),
    #[error("no graded records for order {order}, redundancy {redundancy}")]
    IncompleteGrid { order: OrderTag, redundancy: usize },
}

/// Majority value over answers listed in paraphrase order; failures are
/// `None` and ignored. Ties go to the value seen first.
pub fn scop_vote(answers: &[Option<BigInt>]) -> Option<BigInt> {
    let mut tally: Vec<(&BigInt, usize)> = Vec::new();
    for a in answers.iter().flatten() {
        match tally.iter_mut().find(|(v, _)| *v == a) {
            Some(entry) => entry.1 += 1,
            None => tally.push((a, 1)),
        }
    }
    let mut best: Option<(&BigInt, usize)> = None;
    for (v, n) in tally {
        if best.is_none_or(|(_, m)| n > m) {
            best = Some((v, n));
        }
    }
    best.map(|(v, _)| v.clone())
}

/// Grades every item once per sample index seen in `responses` (or once if
/// there are none). Several paraphrases for one (id, sample) are combined
/// with [`scop_vote`]. Missing responses score as `no-marker`.
pub fn grade(items: &[EvalItem], responses: &[ResponseRecord]) -> Result<GradeReport, GradeError> {
    let mut by_id: HashMap<&str, &EvalItem> = HashMap::with_capacity(items.len());
    for item in items {
        if by_id.insert(&item.id, item).is_some() {
            return Err(GradeError::DuplicateItem(item.id.clone()));
        }
    }
    let mut grouped: BTreeMap<(&str, u32), BTreeMap<u32, &str>> = BTreeMap::new();
    for r in responses {
        if !by_id.contains_key(r.id.as_str()) {
            return Err(GradeError::UnknownId(r.id.clone()));
        }
        let slot = grouped.entry((&r.id, r.sample_index)).or_default();
        if slot.insert(r.paraphrase_index.unwrap_or(0), &r.response).is_some() {
            return Err(GradeError::DuplicateResponse {
                id: r.id.clone(),
                sample_index: r.sample_index,
                paraphrase_index: r.paraphrase_index,
            });
        }
    }
    let mut samples: BTreeSet<u32> = responses.iter().map(|r| r.sample_index).collect();
    if samples.is_empty() {
        samples.insert(0);
    }

    let mut sorted: Vec<&EvalItem> = items.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut records = Vec::with_capacity(sorted.len() * samples.len());
    for item in sorted {
        let reference = parse_exact_integer(&item.answer).ok_or_else(|| GradeError::BadReference(item.id.clone()))?;
        for &sample_index in &samples {
            let parsed = match grouped.get(&(item.id.as_str(), sample_index)) {
                None => Err(AnswerFailure::NoMarker),
                Some(group) => {
                    let answers: Vec<Result<BigInt, AnswerFailure>> =
                        group.values().map(|text| parse_final_answer(text, item.task)).collect();
                    if answers.len() == 1 {
                        answers.into_iter().next().unwrap()
                    } else {
                        let ok: Vec<Option<BigInt>> = answers.iter().map(|a| a.as_ref().ok().cloned()).collect();
                        scop_vote(&ok).ok_or_else(|| *answers[0].as_ref().unwrap_err())
                    }
                }
            };
            records.push(match parsed {
                Ok(v) => GradeRecord {
                    id: item.id.clone(),
                    sample_index,
                    correct: v == reference,
                    parsed_answer: Some(v),
                    failure: Failure::None,
                },
                Err(f) => GradeRecord {
                    id: item.id.clone(),
                    sample_index,
                    parsed_answer: None,
                    correct: false,
                    failure: f.into(),
                },
            });
        }
    }
    let summary = summarize(items.len(), &samples, &records);
    Ok(GradeReport { records, summary })
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn summarize(items: usize, samples: &BTreeSet<u32>, records: &[GradeRecord]) -> GradeSummary {
    let correct = records.iter().filter(|r| r.correct).count();
    let mut failures = BTreeMap::new();
    for r in records {
        *failures.entry(r.failure).or_insert(0) += 1;
    }
    let per_sample: Vec<SampleAccuracy> = samples
        .iter()
        .map(|&s| {
            let of_sample = records.iter().filter(|r| r.sample_index == s);
            let n = of_sample.clone().count();
            SampleAccuracy {
                sample_index: s,
                accuracy: ratio(of_sample.filter(|r| r.correct).count(), n),
            }
        })
        .collect();
    let n = per_sample.len() as f64;
    let sample_mean = per_sample.iter().map(|s| s.accuracy).sum::<f64>() / n;
    let sample_stddev = (per_sample.iter().map(|s| (s.accuracy - sample_mean).powi(2)).sum::<f64>() / n).sqrt();
    GradeSummary {
        items,
        records: records.len(),
        correct,
        accuracy: ratio(correct, records.len()),
        failures,
        per_sample,
        sample_mean,
        sample_stddev,
    }
}

/// Accuracy per (order, redundancy) cell. Rows follow `OrderTag::ALL`,
/// columns ascending redundancy; every combination present in `items` must
/// have graded records.
pub fn accuracy_grid(items: &[EvalItem], records: &[GradeRecord]) -> Result<AccuracyGrid, GradeError> {
    let cell_of: HashMap<&str, (OrderTag, usize)> =
        items.iter().map(|i| (i.id.as_str(), (i.order_tag, i.redundancy))).collect();
    let orders: Vec<OrderTag> = OrderTag::ALL
        .into_iter()
        .filter(|o| items.iter().any(|i| i.order_tag == *o))
        .collect();
    let levels: Vec<usize> = items
        .iter()
        .map(|i| i.redundancy)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut counts: HashMap<(OrderTag, usize), (usize, usize)> = HashMap::new();
    for r in records {
        let cell = *cell_of.get(r.id.as_str()).ok_or_else(|| GradeError::UnknownId(r.id.clone()))?;
        let entry = counts.entry(cell).or_default();
        entry.0 += usize::from(r.correct);
        entry.1 += 1;
    }
    let mut accuracy = Vec::with_capacity(orders.len());
    for &order in &orders {
        let mut row = Vec::with_capacity(levels.len());
        for &redundancy in &levels {
            let &(c, n) = counts
                .get(&(order, redundancy))
                .ok_or(GradeError::IncompleteGrid { order, redundancy })?;
            row.push(ratio(c, n));
        }
        accuracy.push(row);
    }
    Ok(AccuracyGrid {
        orders,
        redundancy_levels: levels,
        accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_eval_suite, EvalSuiteConfig};
    use crate::dag::Task;

    fn items(count: usize) -> Vec<EvalItem> {
        build_eval_suite(&EvalSuiteConfig {
            task: Task::Arithmetic,
            depths: vec![2],
            orders: vec![OrderTag::Topological, OrderTag::Reversed],
            redundancy_levels: vec![0, 2],
            count,
            master_seed: 11,
        })
        .unwrap()
        .items()
        .cloned()
        .collect()
    }

    fn echo(item: &EvalItem) -> ResponseRecord {
        ResponseRecord {
            id: item.id.clone(),
            sample_index: 0,
            paraphrase_index: None,
            response: item.chain.clone(),
        }
    }

    #[test]
    fn vote_rules() {
        let v = |xs: &[Option<i64>]| scop_vote(&xs.iter().map(|x| x.map(BigInt::from)).collect::<Vec<_>>());
        assert_eq!(v(&[Some(5), Some(5), Some(7)]), Some(BigInt::from(5)));
        assert_eq!(v(&[Some(5), Some(7)]), Some(BigInt::from(5)));
        assert_eq!(v(&[Some(7), Some(5)]), Some(BigInt::from(7)));
        assert_eq!(v(&[None, Some(7), Some(5), Some(5)]), Some(BigInt::from(5)));
        assert_eq!(v(&[None, None]), None);
        assert_eq!(v(&[]), None);
    }

    #[test]
    fn echoed_chains_score_one() {
        let items = items(2);
        let responses: Vec<_> = items.iter().map(echo).collect();
        let report = grade(&items, &responses).unwrap();
        assert_eq!(report.summary.accuracy, 1.0);
        assert_eq!(report.summary.failures.get(&Failure::None), Some(&items.len()));
        let grid = accuracy_grid(&items, &report.records).unwrap();
        assert_eq!(grid.accuracy, vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
    }

    #[test]
    fn empty_responses_score_zero() {
        let items = items(1);
        let report = grade(&items, &[]).unwrap();
        assert_eq!(report.summary.accuracy, 0.0);
        assert_eq!(report.summary.failures.get(&Failure::NoMarker), Some(&items.len()));
    }

    #[test]
    fn half_correct() {
        let items = items(1);
        let mut responses: Vec<_> = items.iter().map(echo).collect();
        responses[1].response = "Thus, the answer is 999999999".into();
        responses[3].response = "no idea".into();
        let report = grade(&items, &responses).unwrap();
        assert_eq!(report.summary.accuracy, 0.5);
        assert_eq!(report.summary.failures.get(&Failure::NoMarker), Some(&1));
    }

    #[test]
    fn duplicates_and_unknown_ids_are_errors() {
        let items = items(1);
        let mut responses = vec![echo(&items[0]), echo(&items[0])];
        assert!(matches!(grade(&items, &responses), Err(GradeError::DuplicateResponse { .. })));
        responses[1].sample_index = 1;
        assert!(grade(&items, &responses).is_ok());
        responses[1].id = "nope".into();
        assert_eq!(grade(&items, &responses), Err(GradeError::UnknownId("nope".into())));
    }

    #[test]
    fn paraphrases_are_voted() {
        let items = items(1);
        let item = &items[0];
        let wrong = "Thus, the answer is 999999999.0".to_owned();
        let mk = |p: u32, response: String| ResponseRecord {
            id: item.id.clone(),
            sample_index: 0,
            paraphrase_index: Some(p),
            response,
        };
        let report = grade(&items[..1], &[mk(1, wrong.clone()), mk(0, item.chain.clone())]).unwrap();
        assert!(report.records[0].correct);
        let report = grade(&items[..1], &[mk(0, wrong.clone()), mk(1, item.chain.clone())]).unwrap();
        assert!(!report.records[0].correct);
    }

    #[test]
    fn per_sample_statistics() {
        let items = items(1);
        let mut responses: Vec<_> = items.iter().map(echo).collect();
        for item in &items {
            let mut r = echo(item);
            r.sample_index = 1;
            r.response.clear();
            responses.push(r);
        }
        let s = grade(&items, &responses).unwrap().summary;
        assert_eq!(s.records, 8);
        assert_eq!(s.accuracy, 0.5);
        assert_eq!(s.sample_mean, 0.5);
        assert_eq!(s.sample_stddev, 0.5);
    }
}
