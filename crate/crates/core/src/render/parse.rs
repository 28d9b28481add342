use std::collections::HashMap;

use num_bigint::BigInt;
use thiserror::Error;

use super::query::PremiseSentence;
use super::{is_valid_name, question_sentence, LOGICAL_PREAMBLE, QUESTION_PREFIX};
use crate::dag::{Dag, DagError, Node, NodeId, Operator, Task};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("sentence {index} is malformed ({reason}): `{sentence}`")]
    Malformed {
        index: usize,
        sentence: String,
        reason: &'static str,
    },
    #[error("`{name}` is referenced but never defined")]
    Undeclared { name: String },
    #[error("`{name}` is defined more than once")]
    DuplicateDefinition { name: String },
    #[error("the query does not end with a question sentence")]
    MissingQuestion,
    #[error("dependencies form a cycle through `{name}`")]
    Cycle { name: String },
}

/// The semantic form recovered from a query, plus what is needed to
/// re-render the same text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedQuery {
    pub task: Task,
    /// Nodes carry ids in definition order and evaluated values.
    pub dag: Dag,
    pub preamble: bool,
    /// Subject of each premise sentence, in text order.
    pub premise_order: Vec<NodeId>,
    pub sep: String,
}

impl ParsedQuery {
    pub fn premises(&self) -> Vec<PremiseSentence> {
        let mask = self.dag.relevant_mask();
        self.premise_order
            .iter()
            .map(|&id| PremiseSentence::for_node(self.task, &self.dag, self.dag.node(id), mask[id.0]))
            .collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        let mask = self.dag.relevant_mask();
        self.premise_order.iter().map(|id| u8::from(mask[id.0])).collect()
    }

    pub fn answer(&self) -> &BigInt {
        &self.dag.root_node().value
    }

    /// Re-renders the query in the parsed sentence order.
    pub fn render(&self) -> String {
        let premises = self.premises();
        let mut parts: Vec<&str> = Vec::with_capacity(premises.len() + 2);
        if self.preamble {
            parts.push(LOGICAL_PREAMBLE);
        }
        parts.extend(premises.iter().map(|p| p.text.as_str()));
        let question = question_sentence(&self.dag.root_node().name);
        parts.push(&question);
        parts.join(&self.sep)
    }
}

enum Sentence<'a> {
    Leaf {
        name: &'a str,
        value: BigInt,
    },
    Dependency {
        name: &'a str,
        op: Operator,
        parents: Vec<&'a str>,
    },
}

impl Sentence<'_> {
    fn name(&self) -> &str {
        match self {
            Sentence::Leaf { name, .. } | Sentence::Dependency { name, .. } => name,
        }
    }
}

/// Parses a query written in the template grammar back into its graph.
///
/// The operator family is taken from the preamble when present, otherwise
/// from the sentence forms; mixing families is a malformed-sentence error.
pub fn parse_query(text: &str, sep: &str) -> Result<ParsedQuery, ParseError> {
    assert!(!sep.is_empty(), "separator must be nonempty");
    let mut parts: Vec<&str> = text.split(sep).collect();
    let root_name = parts
        .pop()
        .and_then(|q| q.strip_prefix(QUESTION_PREFIX)?.strip_suffix('?'))
        .filter(|name| is_valid_name(name))
        .ok_or(ParseError::MissingQuestion)?;
    let preamble = parts.first() == Some(&LOGICAL_PREAMBLE);
    let offset = usize::from(preamble);
    let mut task = preamble.then_some(Task::Logical);

    let mut sentences = Vec::with_capacity(parts.len());
    for (index, raw) in parts.iter().enumerate().skip(offset) {
        let malformed = |reason| ParseError::Malformed {
            index,
            sentence: raw.to_string(),
            reason,
        };
        let (family, sentence) = parse_sentence(raw).map_err(malformed)?;
        match task {
            None => task = Some(family),
            Some(t) if t != family => return Err(malformed("mixes arithmetic and logical forms")),
            Some(_) => {}
        }
        sentences.push(sentence);
    }
    let task = task.unwrap_or(Task::Arithmetic);

    let mut ids: HashMap<&str, NodeId> = HashMap::with_capacity(sentences.len());
    for (i, s) in sentences.iter().enumerate() {
        if ids.insert(s.name(), NodeId(i)).is_some() {
            return Err(ParseError::DuplicateDefinition {
                name: s.name().to_owned(),
            });
        }
    }
    let lookup = |name: &str| {
        ids.get(name).copied().ok_or_else(|| ParseError::Undeclared {
            name: name.to_owned(),
        })
    };
    let mut nodes = Vec::with_capacity(sentences.len());
    for (i, s) in sentences.iter().enumerate() {
        let id = NodeId(i);
        nodes.push(match s {
            Sentence::Leaf { name, value } => Node::leaf(id, *name, value.clone()),
            Sentence::Dependency { name, op, parents } => Node {
                id,
                name: name.to_string(),
                op: Some(*op),
                parents: parents.iter().map(|p| lookup(p)).collect::<Result<_, _>>()?,
                value: BigInt::default(),
            },
        });
    }
    let root = lookup(root_name)?;
    let mut dag = Dag::new(nodes, root).expect("names, ids and arities checked while parsing");
    dag.reevaluate().map_err(|e| match e {
        DagError::Cycle(name) => ParseError::Cycle { name },
        other => unreachable!("evaluation of a checked graph failed: {other}"),
    })?;
    let premise_order = (0..dag.len()).map(NodeId).collect();
    Ok(ParsedQuery {
        task,
        dag,
        preamble,
        premise_order,
        sep: sep.to_owned(),
    })
}

fn parse_sentence(raw: &str) -> Result<(Task, Sentence<'_>), &'static str> {
    let body = raw.strip_suffix('.').ok_or("missing final period")?;
    let name = |n: &'_ str| -> Result<(), &'static str> {
        if is_valid_name(n) {
            Ok(())
        } else {
            Err("invalid node name")
        }
    };

    if let Some(rest) = body.strip_prefix("The value of ") {
        if let Some((subject, expr)) = rest.split_once(" equals to ") {
            name(subject)?;
            let inner = expr
                .strip_prefix('(')
                .and_then(|e| e.strip_suffix(')'))
                .ok_or("expected parenthesised expression")?;
            let (op, parents) = if let Some(p) = inner.strip_prefix("NOT ") {
                (Operator::Not, vec![p])
            } else if let Some((a, b)) = inner.split_once(" AND ") {
                (Operator::And, vec![a, b])
            } else if let Some((a, b)) = inner.split_once(" OR ") {
                (Operator::Or, vec![a, b])
            } else {
                return Err("unknown logical operator");
            };
            parents.iter().try_for_each(|p| name(p))?;
            return Ok((
                Task::Logical,
                Sentence::Dependency {
                    name: subject,
                    op,
                    parents,
                },
            ));
        }
        let (subject, value) = rest.split_once(" is ").ok_or("expected `is <value>`")?;
        name(subject)?;
        let value = parse_integer(value).ok_or("leaf value is not an integer")?;
        return Ok((Task::Arithmetic, Sentence::Leaf { name: subject, value }));
    }

    if let Some((subject, phrase)) = body.split_once(" gets its value by ") {
        name(subject)?;
        let (op, parents) = parse_phrase(phrase).ok_or("unknown operator phrase")?;
        parents.iter().try_for_each(|p| name(p))?;
        return Ok((
            Task::Arithmetic,
            Sentence::Dependency {
                name: subject,
                op,
                parents,
            },
        ));
    }

    if let Some((subject, value)) = body.split_once(" is ") {
        name(subject)?;
        let value = match value {
            "0" | "1" => BigInt::from(u8::from(value == "1")),
            _ => return Err("logical value must be 0 or 1"),
        };
        return Ok((Task::Logical, Sentence::Leaf { name: subject, value }));
    }

    Err("matches no sentence template")
}

fn parse_phrase(phrase: &str) -> Option<(Operator, Vec<&str>)> {
    if let Some(rest) = phrase.strip_prefix("subtracting the value of ") {
        let (subtrahend, minuend) = rest.split_once(" from the value of ")?;
        return Some((Operator::Sub, vec![minuend, subtrahend]));
    }
    if let Some(rest) = phrase.strip_prefix("adding together the value of ") {
        let (a, b) = rest.split_once(" and ")?;
        return Some((Operator::Add, vec![a, b]));
    }
    if let Some(rest) = phrase.strip_prefix("multiplying together the value of ") {
        let (a, b) = rest.split_once(" and ")?;
        return Some((Operator::Mul, vec![a, b]));
    }
    let p = phrase
        .strip_prefix("squaring the value that ")?
        .strip_suffix(" has")?;
    Some((Operator::Square, vec![p]))
}

fn parse_integer(text: &str) -> Option<BigInt> {
    let digits = text.strip_prefix('-').unwrap_or(text);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    text.parse().ok()
}

/// Whether two semantic forms agree on the root's ancestor-closure, name for
/// name: same operators, same operands (either order for commutative
/// operators) and same values. Nodes outside the closure are ignored.
pub fn semantic_equal(a: &Dag, b: &Dag) -> bool {
    if a.root_node().name != b.root_node().name {
        return false;
    }
    let (mask_a, mask_b) = (a.relevant_mask(), b.relevant_mask());
    if mask_a.iter().filter(|&&m| m).count() != mask_b.iter().filter(|&&m| m).count() {
        return false;
    }
    let index_b = b.name_index();
    let operand_names = |dag: &Dag, node: &Node| {
        let mut names: Vec<String> = node
            .parents
            .iter()
            .map(|&p| dag.node(p).name.clone())
            .collect();
        if node.op.is_some_and(Operator::is_commutative) {
            names.sort_unstable();
        }
        names
    };
    a.nodes().iter().filter(|n| mask_a[n.id.0]).all(|na| {
        let Some(&id_b) = index_b.get(na.name.as_str()) else {
            return false;
        };
        let nb = b.node(id_b);
        mask_b[id_b.0]
            && na.op == nb.op
            && na.value == nb.value
            && operand_names(a, na) == operand_names(b, nb)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::Problem;
    use crate::render::{render_query, OrderTag};
    use crate::rng::SplitMix64;

    #[test]
    fn round_trips_generated_queries() {
        for task in [Task::Arithmetic, Task::Logical] {
            for order in OrderTag::ALL {
                let p = Problem::generate(task, 3, 4, 21).unwrap();
                let q = render_query(&p, order, &mut SplitMix64::new(2));
                let text = q.text();
                let parsed = parse_query(&text, "\n").unwrap();
                assert!(semantic_equal(&parsed.dag, &p.dag));
                assert_eq!(parsed.render(), text);
                assert_eq!(parsed.labels(), q.labels());
                assert_eq!(parsed.answer(), p.answer());
            }
        }
    }

    #[test]
    fn truncated_sentence_is_malformed() {
        let err = parse_query("The value of x is\nWhat is the value of x?", "\n").unwrap_err();
        assert!(matches!(err, ParseError::Malformed { index: 0, .. }));
    }

    #[test]
    fn distinct_error_kinds() {
        assert_eq!(
            parse_query("The value of x is 3.", "\n"),
            Err(ParseError::MissingQuestion)
        );
        assert_eq!(
            parse_query("y gets its value by squaring the value that x has.\nWhat is the value of y?", "\n"),
            Err(ParseError::Undeclared { name: "x".into() })
        );
        assert_eq!(
            parse_query("The value of x is 3.\nThe value of x is 4.\nWhat is the value of x?", "\n"),
            Err(ParseError::DuplicateDefinition { name: "x".into() })
        );
        assert!(matches!(
            parse_query(
                "x gets its value by squaring the value that y has.\ny gets its value by squaring the value that x has.\nWhat is the value of x?",
                "\n"
            ),
            Err(ParseError::Cycle { .. })
        ));
        assert_eq!(
            parse_query("The value of x is 3.\nWhat is the value of z?", "\n"),
            Err(ParseError::Undeclared { name: "z".into() })
        );
        assert!(matches!(
            parse_query("The value of x is 3.\ny is 1.\nWhat is the value of x?", "\n"),
            Err(ParseError::Malformed { index: 1, .. })
        ));
    }

    #[test]
    fn semantic_equality_detects_value_changes() {
        let text = "The value of a is 8.\nThe value of b is 2.\nc gets its value by subtracting the value of b from the value of a.\nWhat is the value of c?";
        let p = parse_query(text, "\n").unwrap();
        assert_eq!(p.answer(), &BigInt::from(6));
        assert!(semantic_equal(&p.dag, &p.dag));
        let changed = parse_query(&text.replace("is 8.", "is 7."), "\n").unwrap();
        assert!(!semantic_equal(&p.dag, &changed.dag));
        let swapped = text.replace("of b from the value of a", "of a from the value of b");
        assert!(!semantic_equal(&p.dag, &parse_query(&swapped, "\n").unwrap().dag));
    }
}
