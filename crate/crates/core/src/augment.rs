//! Training-corpus augmentation.
//!
//! * MEND: shuffle the premise partitions of a query and inject freshly
//!   drawn redundant partitions, keeping the response.
//! * RC: keep the query and add responses that walk alternative topological
//!   orders of the relevant subgraph.
//! * MEND-RC: pair fresh MEND queries with alternative chains, adding no
//!   untransformed queries.
//! * Paraphrases: plain premise permutations used for inference-time voting.

use std::collections::HashSet;
use std::fmt;
use std::ops::ControlFlow;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::{draw_unit, sample_topological_order, Dag, NameGen, NodeId, Problem, Task};
use crate::render::{
    dependency_sentence, leaf_sentence, parse_query, render_chain, render_query_with_sep,
    render_reasoning_chain, OrderTag, ParseError, ParsedQuery,
};
use crate::rng::SplitMix64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AugmentError {
    #[error("query does not parse: {0}")]
    Parse(#[from] ParseError),
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentMode {
    Mend,
    Rc,
    MendRc,
}

impl FromStr for AugmentMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mend" => Ok(AugmentMode::Mend),
            "rc" => Ok(AugmentMode::Rc),
            "mend-rc" => Ok(AugmentMode::MendRc),
            other => Err(format!("unknown mode `{other}` (expected mend, rc or mend-rc)")),
        }
    }
}

/// Which augmentation produced a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Augmentation {
    None,
    Mend,
    Rc,
    MendRc,
}

impl fmt::Display for Augmentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Augmentation::None => "none",
            Augmentation::Mend => "mend",
            Augmentation::Rc => "rc",
            Augmentation::MendRc => "mend-rc",
        })
    }
}

/// Number of redundant partitions per augmented query: a fixed count, or a
/// uniform draw from `min..=max` per augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedundancyCount {
    pub min: usize,
    pub max: usize,
}

impl RedundancyCount {
    pub fn fixed(n: usize) -> Self {
        Self { min: n, max: n }
    }

    pub fn uniform(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    fn draw(&self, rng: &mut SplitMix64) -> usize {
        if self.min == self.max {
            self.min
        } else {
            self.min + rng.below(self.max - self.min + 1)
        }
    }
}

impl FromStr for RedundancyCount {
    type Err = String;

    /// `"3"` or `"0..4"` (inclusive).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("invalid redundancy `{s}` (expected N or MIN..MAX)");
        match s.split_once("..") {
            Some((lo, hi)) => {
                let (min, max) = (lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?);
                if min > max {
                    return Err(bad());
                }
                Ok(Self::uniform(min, max))
            }
            None => s.parse().map(Self::fixed).map_err(|_| bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Augmentations per source pair.
    pub k: usize,
    /// Redundant partitions per augmented query.
    pub r: RedundancyCount,
    pub sep: String,
    pub mode: AugmentMode,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            k: 4,
            r: RedundancyCount::uniform(0, 4),
            sep: crate::render::DEFAULT_SEP.to_owned(),
            mode: AugmentMode::Mend,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if self.sep.is_empty() {
            return Err(AugmentError::InvalidConfig("separator must be nonempty".into()));
        }
        if self.r.min > self.r.max {
            return Err(AugmentError::InvalidConfig("redundancy min exceeds max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaPair {
    pub query: String,
    pub response: String,
    pub source_id: String,
    pub augmentation: Augmentation,
}

impl QaPair {
    /// The unaugmented pair for a problem: topological query, canonical chain.
    pub fn vanilla(problem: &Problem, source_id: impl Into<String>, sep: &str, rng: &mut SplitMix64) -> Self {
        Self {
            query: render_query_with_sep(problem, OrderTag::Topological, sep, rng).text(),
            response: render_reasoning_chain(problem).text,
            source_id: source_id.into(),
            augmentation: Augmentation::None,
        }
    }
}

/// Dispatches on `config.mode`.
pub fn augment(qa: &QaPair, config: &AugmentConfig, rng: &mut SplitMix64) -> Result<Vec<QaPair>, AugmentError> {
    match config.mode {
        AugmentMode::Mend => mend_augment(qa, config, rng),
        AugmentMode::Rc => rc_augment(qa, config.k, &config.sep, rng),
        AugmentMode::MendRc => mend_rc_augment(qa, config, rng),
    }
}

/// The source pair followed by `k` MEND transforms of its query, each with
/// the source response.
pub fn mend_augment(qa: &QaPair, config: &AugmentConfig, rng: &mut SplitMix64) -> Result<Vec<QaPair>, AugmentError> {
    config.validate()?;
    let parsed = parse_query(&qa.query, &config.sep)?;
    let mut out = Vec::with_capacity(config.k + 1);
    out.push(qa.clone());
    for _ in 0..config.k {
        out.push(QaPair {
            query: mend_transform(&qa.query, &parsed, config, rng),
            response: qa.response.clone(),
            source_id: qa.source_id.clone(),
            augmentation: Augmentation::Mend,
        });
    }
    Ok(out)
}

/// One MEND transform: split on `sep`, shuffle the premise partitions,
/// append `R` redundant partitions, shuffle again and rejoin. The preamble
/// and question stay pinned at the ends.
///
/// A redundant partition is a unit's leaf sentences followed by its
/// dependency sentence, joined by `sep`, shuffled as one element. Names are
/// fresh with respect to the source query.
fn mend_transform(text: &str, parsed: &ParsedQuery, config: &AugmentConfig, rng: &mut SplitMix64) -> String {
    let sep = config.sep.as_str();
    let (preamble, partitions, question) = split_pinned(text, parsed);
    let mut partitions: Vec<String> = partitions.into_iter().map(str::to_owned).collect();
    rng.shuffle(&mut partitions);
    let redundancy = config.r.draw(rng);
    let mut names = NameGen::avoiding(parsed.dag.nodes().iter().map(|n| n.name.as_str()));
    for _ in 0..redundancy {
        partitions.push(redundant_partition(parsed.task, &mut names, sep, rng));
    }
    rng.shuffle(&mut partitions);
    join_pinned(preamble, &partitions, question, sep)
}

fn redundant_partition(task: Task, names: &mut NameGen, sep: &str, rng: &mut SplitMix64) -> String {
    let unit = draw_unit(task, names, rng);
    let mut sentences: Vec<String> = unit
        .leaves
        .iter()
        .map(|(name, value)| leaf_sentence(task, name, value))
        .collect();
    let parents: Vec<&str> = unit.leaves.iter().map(|(n, _)| n.as_str()).collect();
    sentences.push(dependency_sentence(&unit.internal, unit.op, &parents));
    sentences.join(sep)
}

fn split_pinned<'a>(text: &'a str, parsed: &ParsedQuery) -> (Option<&'a str>, Vec<&'a str>, &'a str) {
    let mut parts: Vec<&str> = text.split(parsed.sep.as_str()).collect();
    let question = parts.pop().expect("parsed queries end with a question");
    let preamble = parsed.preamble.then(|| parts.remove(0));
    (preamble, parts, question)
}

fn join_pinned<S: AsRef<str>>(preamble: Option<&str>, premises: &[S], question: &str, sep: &str) -> String {
    let mut parts: Vec<&str> = Vec::with_capacity(premises.len() + 2);
    parts.extend(preamble);
    parts.extend(premises.iter().map(AsRef::as_ref));
    parts.push(question);
    parts.join(sep)
}

/// The source pair followed by up to `k` pairs with the same query and
/// distinct alternative reasoning chains (deduplicated by exact text,
/// including against the source response).
pub fn rc_augment(qa: &QaPair, k: usize, sep: &str, rng: &mut SplitMix64) -> Result<Vec<QaPair>, AugmentError> {
    if sep.is_empty() {
        return Err(AugmentError::InvalidConfig("separator must be nonempty".into()));
    }
    let parsed = parse_query(&qa.query, sep)?;
    let chains = alternative_chains(&parsed, &qa.response, k, rng);
    let mut out = Vec::with_capacity(chains.len() + 1);
    out.push(qa.clone());
    out.extend(chains.into_iter().map(|response| QaPair {
        query: qa.query.clone(),
        response,
        source_id: qa.source_id.clone(),
        augmentation: Augmentation::Rc,
    }));
    Ok(out)
}

/// The source pair followed by `k` pairs, each a fresh MEND transform of the
/// source query answered by a sampled topological chain. Chains are distinct
/// while enough linear extensions exist and then repeat cyclically.
pub fn mend_rc_augment(qa: &QaPair, config: &AugmentConfig, rng: &mut SplitMix64) -> Result<Vec<QaPair>, AugmentError> {
    config.validate()?;
    let parsed = parse_query(&qa.query, &config.sep)?;
    let mut pool = alternative_chains(&parsed, &qa.response, config.k, rng);
    if pool.is_empty() {
        pool.push(qa.response.clone());
    }
    let mut out = Vec::with_capacity(config.k + 1);
    out.push(qa.clone());
    for i in 0..config.k {
        out.push(QaPair {
            query: mend_transform(&qa.query, &parsed, config, rng),
            response: pool[i % pool.len()].clone(),
            source_id: qa.source_id.clone(),
            augmentation: Augmentation::MendRc,
        });
    }
    Ok(out)
}

/// Up to `k` chain texts over the relevant subgraph that differ from
/// `existing` and from each other. Random orders are sampled first; if that
/// stalls, the remaining extensions are enumerated depth-first, so the
/// result has exactly `min(k, #extensions - dups)` entries.
fn alternative_chains(parsed: &ParsedQuery, existing: &str, k: usize, rng: &mut SplitMix64) -> Vec<String> {
    let relevant = parsed.dag.relevant_subgraph();
    let mut seen: HashSet<String> = HashSet::from([existing.to_owned()]);
    let mut chains = Vec::with_capacity(k);
    let budget = 8 * (k + 1);
    for _ in 0..budget {
        if chains.len() == k {
            return chains;
        }
        let order = sample_topological_order(&relevant, rng).expect("parsed queries are acyclic");
        let text = render_chain(&relevant, parsed.task, &order).text;
        if seen.insert(text.clone()) {
            chains.push(text);
        }
    }
    let _ = for_each_linear_extension(&relevant, |order| {
        if chains.len() == k {
            return ControlFlow::Break(());
        }
        let text = render_chain(&relevant, parsed.task, order).text;
        if seen.insert(text.clone()) {
            chains.push(text);
        }
        ControlFlow::Continue(())
    });
    chains
}

/// Visits every topological order of `dag` depth-first, lowest id first,
/// until `visit` breaks.
pub fn for_each_linear_extension<F>(dag: &Dag, mut visit: F) -> ControlFlow<()>
where
    F: FnMut(&[NodeId]) -> ControlFlow<()>,
{
    let mut pending = vec![0usize; dag.len()];
    let mut children = vec![Vec::new(); dag.len()];
    for node in dag.nodes() {
        for p in &node.parents {
            pending[node.id.0] += 1;
            children[p.0].push(node.id.0);
        }
    }
    let mut placed = vec![false; dag.len()];
    let mut order = Vec::with_capacity(dag.len());

    fn go<F: FnMut(&[NodeId]) -> ControlFlow<()>>(
        pending: &mut [usize],
        children: &[Vec<usize>],
        placed: &mut [bool],
        order: &mut Vec<NodeId>,
        visit: &mut F,
    ) -> ControlFlow<()> {
        if order.len() == placed.len() {
            return visit(order);
        }
        for i in 0..placed.len() {
            if placed[i] || pending[i] > 0 {
                continue;
            }
            placed[i] = true;
            order.push(NodeId(i));
            children[i].iter().for_each(|&c| pending[c] -= 1);
            let flow = go(pending, children, placed, order, visit);
            children[i].iter().for_each(|&c| pending[c] += 1);
            order.pop();
            placed[i] = false;
            flow?;
        }
        ControlFlow::Continue(())
    }

    go(&mut pending, &children, &mut placed, &mut order, &mut visit)
}

/// `k` independent premise permutations of `query` (preamble and question
/// pinned). Every output parses to the same semantic form as the source.
pub fn permute_paraphrases(query: &str, sep: &str, k: usize, rng: &mut SplitMix64) -> Result<Vec<String>, AugmentError> {
    if k == 0 {
        return Err(AugmentError::InvalidConfig("paraphrase count must be at least 1".into()));
    }
    if sep.is_empty() {
        return Err(AugmentError::InvalidConfig("separator must be nonempty".into()));
    }
    let parsed = parse_query(query, sep)?;
    let (preamble, premises, question) = split_pinned(query, &parsed);
    Ok((0..k)
        .map(|_| {
            let mut shuffled = premises.clone();
            rng.shuffle(&mut shuffled);
            join_pinned(preamble, &shuffled, question, sep)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::semantic_equal;

    fn pair(seed: u64, depth: usize) -> (Problem, QaPair) {
        let p = Problem::generate(Task::Arithmetic, depth, 0, seed).unwrap();
        let qa = QaPair::vanilla(&p, format!("p{seed}"), "\n", &mut SplitMix64::new(0));
        (p, qa)
    }

    fn config(mode: AugmentMode, k: usize, r: usize) -> AugmentConfig {
        AugmentConfig {
            k,
            r: RedundancyCount::fixed(r),
            sep: "\n".into(),
            mode,
        }
    }

    #[test]
    fn k_zero_returns_the_source_only() {
        let (_, qa) = pair(1, 2);
        let mut rng = SplitMix64::new(9);
        for mode in [AugmentMode::Mend, AugmentMode::Rc, AugmentMode::MendRc] {
            assert_eq!(augment(&qa, &config(mode, 0, 2), &mut rng).unwrap(), vec![qa.clone()]);
        }
    }

    #[test]
    fn mend_adds_exactly_r_dependencies() {
        let (p, qa) = pair(3, 3);
        let out = mend_augment(&qa, &config(AugmentMode::Mend, 3, 2), &mut SplitMix64::new(4)).unwrap();
        assert_eq!(out.len(), 4);
        let base = parse_query(&qa.query, "\n").unwrap();
        for aug in &out[1..] {
            let parsed = parse_query(&aug.query, "\n").unwrap();
            assert!(semantic_equal(&parsed.dag, &p.dag));
            let extra_deps = parsed.dag.nodes().iter().filter(|n| !n.is_leaf()).count()
                - base.dag.nodes().iter().filter(|n| !n.is_leaf()).count();
            assert_eq!(extra_deps, 2);
            assert_eq!(parsed.answer(), p.answer());
            assert_eq!(aug.response, qa.response);
            assert!(aug.query.ends_with(&format!("What is the value of {}?", p.dag.root_node().name)));
        }
    }

    #[test]
    fn two_premise_permutation_follows_the_stream() {
        // Two premises and no redundancy: each of the two shuffles swaps iff
        // its draw is even, so the order flips iff the draws differ in parity.
        let qa = QaPair {
            query: "The value of aaa is 3.\naab gets its value by squaring the value that aaa has.\nWhat is the value of aab?".into(),
            response: "aaa is 3.0\naab = aaa^2 = (3.0)^2 = 9.0\nThus, the answer is 9.0".into(),
            source_id: "two".into(),
            augmentation: Augmentation::None,
        };
        let mut probe = SplitMix64::new(42);
        let flips = (probe.next_u64() % 2) != (probe.next_u64() % 2);
        let out = mend_augment(&qa, &config(AugmentMode::Mend, 1, 0), &mut SplitMix64::new(42)).unwrap();
        let expected = if flips {
            "aab gets its value by squaring the value that aaa has.\nThe value of aaa is 3.\nWhat is the value of aab?"
        } else {
            qa.query.as_str()
        };
        assert_eq!(out[1].query, expected);
    }

    #[test]
    fn rc_on_a_chain_adds_nothing() {
        let qa = QaPair {
            query: "The value of aaa is 3.\naab gets its value by squaring the value that aaa has.\nWhat is the value of aab?".into(),
            response: "aaa is 3.0\naab = aaa^2 = (3.0)^2 = 9.0\nThus, the answer is 9.0".into(),
            source_id: "chain".into(),
            augmentation: Augmentation::None,
        };
        let out = rc_augment(&qa, 5, "\n", &mut SplitMix64::new(1)).unwrap();
        assert_eq!(out, vec![qa]);
    }

    #[test]
    fn rc_on_a_diamond_finds_both_orders() {
        let qa = QaPair {
            query: "The value of aaa is 3.\nThe value of aab is 4.\naac gets its value by adding together the value of aaa and aab.\nWhat is the value of aac?".into(),
            response: "aaa is 3.0\naab is 4.0\naac = aaa + aab = 3.0 + 4.0 = 7.0\nThus, the answer is 7.0".into(),
            source_id: "diamond".into(),
            augmentation: Augmentation::None,
        };
        let out = rc_augment(&qa, 8, "\n", &mut SplitMix64::new(1)).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out[1].response.starts_with("aab is 4.0\naaa is 3.0"));
        assert_eq!(out[1].query, qa.query);
    }

    #[test]
    fn mend_rc_is_reproducible() {
        let (p, qa) = pair(5, 2);
        let cfg = config(AugmentMode::MendRc, 2, 1);
        let a = mend_rc_augment(&qa, &cfg, &mut SplitMix64::new(3)).unwrap();
        let b = mend_rc_augment(&qa, &cfg, &mut SplitMix64::new(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        let distinct: HashSet<&str> = a.iter().map(|q| q.response.as_str()).collect();
        assert!(distinct.len() <= 3);
        for aug in &a {
            assert!(semantic_equal(&parse_query(&aug.query, "\n").unwrap().dag, &p.dag));
        }
    }

    #[test]
    fn paraphrases_keep_semantics() {
        let p = Problem::generate(Task::Logical, 3, 2, 8).unwrap();
        let qa = QaPair::vanilla(&p, "x", "\n", &mut SplitMix64::new(0));
        let out = permute_paraphrases(&qa.query, "\n", 8, &mut SplitMix64::new(6)).unwrap();
        assert_eq!(out.len(), 8);
        for q in &out {
            let parsed = parse_query(q, "\n").unwrap();
            assert!(semantic_equal(&parsed.dag, &p.dag));
            assert!(q.starts_with(crate::render::LOGICAL_PREAMBLE));
        }
        let again = permute_paraphrases(&qa.query, "\n", 8, &mut SplitMix64::new(6)).unwrap();
        assert_eq!(out, again);
        assert!(permute_paraphrases(&qa.query, "\n", 0, &mut SplitMix64::new(6)).is_err());
        assert!(matches!(
            permute_paraphrases("nonsense", "\n", 1, &mut SplitMix64::new(6)),
            Err(AugmentError::Parse(_))
        ));
    }

    #[test]
    fn single_premise_paraphrase_is_identity() {
        let q = "The value of aaa is 3.\nWhat is the value of aaa?";
        assert_eq!(permute_paraphrases(q, "\n", 1, &mut SplitMix64::new(0)).unwrap(), vec![q.to_string()]);
    }

    #[test]
    fn redundancy_count_parsing() {
        assert_eq!("3".parse::<RedundancyCount>().unwrap(), RedundancyCount::fixed(3));
        assert_eq!("0..4".parse::<RedundancyCount>().unwrap(), RedundancyCount::uniform(0, 4));
        assert!("4..1".parse::<RedundancyCount>().is_err());
    }
}
