use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{dependency_sentence, leaf_sentence, question_sentence, DEFAULT_SEP, LOGICAL_PREAMBLE};
use crate::dag::{topological_order, Dag, Node, Problem, Task};
use crate::rng::SplitMix64;

/// Premise ordering of the relevant statements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderTag {
    Topological,
    Random,
    Reversed,
}

impl OrderTag {
    pub const ALL: [OrderTag; 3] = [OrderTag::Topological, OrderTag::Random, OrderTag::Reversed];

    pub fn as_str(self) -> &'static str {
        match self {
            OrderTag::Topological => "topological",
            OrderTag::Random => "random",
            OrderTag::Reversed => "reversed",
        }
    }
}

impl fmt::Display for OrderTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OrderTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "topological" => Ok(OrderTag::Topological),
            "random" => Ok(OrderTag::Random),
            "reversed" => Ok(OrderTag::Reversed),
            other => Err(format!(
                "unknown order `{other}` (expected topological, random or reversed)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SentenceKind {
    LeafValue,
    Dependency,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PremiseSentence {
    pub text: String,
    pub subject: String,
    pub kind: SentenceKind,
    /// Subject lies in the root's ancestor-closure.
    pub relevant: bool,
}

impl PremiseSentence {
    pub(crate) fn for_node(task: Task, dag: &Dag, node: &Node, relevant: bool) -> Self {
        let (text, kind) = match node.op {
            None => (
                leaf_sentence(task, &node.name, &node.value),
                SentenceKind::LeafValue,
            ),
            Some(op) => {
                let parents: Vec<&str> = node
                    .parents
                    .iter()
                    .map(|&p| dag.node(p).name.as_str())
                    .collect();
                (
                    dependency_sentence(&node.name, op, &parents),
                    SentenceKind::Dependency,
                )
            }
        };
        Self {
            text,
            subject: node.name.clone(),
            kind,
            relevant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedQuery {
    pub preamble: Option<String>,
    pub premises: Vec<PremiseSentence>,
    pub question: String,
    pub order_tag: OrderTag,
    pub sep: String,
}

impl RenderedQuery {
    pub fn text(&self) -> String {
        let mut parts: Vec<&str> = Vec::with_capacity(self.premises.len() + 2);
        parts.extend(self.preamble.as_deref());
        parts.extend(self.premises.iter().map(|p| p.text.as_str()));
        parts.push(&self.question);
        parts.join(&self.sep)
    }

    /// Relevance bit per premise, in premise order.
    pub fn labels(&self) -> Vec<u8> {
        self.premises.iter().map(|p| u8::from(p.relevant)).collect()
    }
}

/// One sentence per node, in id order: a value sentence for each leaf and a
/// dependency sentence for each operator node.
pub fn render_premises(problem: &Problem) -> Vec<PremiseSentence> {
    let mask = problem.dag.relevant_mask();
    problem
        .dag
        .nodes()
        .iter()
        .map(|n| PremiseSentence::for_node(problem.task, &problem.dag, n, mask[n.id.0]))
        .collect()
}

pub fn render_query(problem: &Problem, order_tag: OrderTag, rng: &mut SplitMix64) -> RenderedQuery {
    render_query_with_sep(problem, order_tag, DEFAULT_SEP, rng)
}

/// Relevant premises in canonical topological order (reversed or shuffled
/// per `order_tag`), then each redundant sentence inserted at position
/// `rng.below(len + 1)`, unit by unit, leaves before the dependency.
pub fn render_query_with_sep(
    problem: &Problem,
    order_tag: OrderTag,
    sep: &str,
    rng: &mut SplitMix64,
) -> RenderedQuery {
    let dag = &problem.dag;
    let mask = dag.relevant_mask();
    let order = topological_order(dag).expect("generated problems are acyclic");
    let mut premises: Vec<PremiseSentence> = order
        .into_iter()
        .filter(|id| mask[id.0])
        .map(|id| PremiseSentence::for_node(problem.task, dag, dag.node(id), true))
        .collect();
    match order_tag {
        OrderTag::Topological => {}
        OrderTag::Reversed => premises.reverse(),
        OrderTag::Random => rng.shuffle(&mut premises),
    }
    for unit in &problem.redundant_units {
        for &id in unit.leaves.iter().chain(std::iter::once(&unit.internal)) {
            let sentence = PremiseSentence::for_node(problem.task, dag, dag.node(id), false);
            let at = rng.below(premises.len() + 1);
            premises.insert(at, sentence);
        }
    }
    RenderedQuery {
        preamble: (problem.task == Task::Logical).then(|| LOGICAL_PREAMBLE.to_owned()),
        premises,
        question: question_sentence(&dag.root_node().name),
        order_tag,
        sep: sep.to_owned(),
    }
}
