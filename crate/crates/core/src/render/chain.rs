use std::collections::HashMap;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{format_answer, parse_exact_integer};
use crate::dag::{topological_order, Dag, NodeId, Operator, Problem, Task};

pub const ANSWER_MARKER: &str = "Thus, the answer is";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStep {
    pub subject: String,
    #[serde(with = "crate::serde_bigint")]
    pub value: BigInt,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningChain {
    pub steps: Vec<ChainStep>,
    #[serde(with = "crate::serde_bigint")]
    pub final_answer: BigInt,
    pub text: String,
}

/// The canonical chain: relevant nodes only, in canonical topological order.
pub fn render_reasoning_chain(problem: &Problem) -> ReasoningChain {
    let relevant = problem.dag.relevant_subgraph();
    let order = topological_order(&relevant).expect("generated problems are acyclic");
    render_chain(&relevant, problem.task, &order)
}

/// Renders one step per node of `order`, then the answer line for the root.
pub fn render_chain(dag: &Dag, task: Task, order: &[NodeId]) -> ReasoningChain {
    let steps: Vec<ChainStep> = order
        .iter()
        .map(|&id| {
            let node = dag.node(id);
            ChainStep {
                subject: node.name.clone(),
                value: node.value.clone(),
                text: step_text(dag, task, id),
            }
        })
        .collect();
    let final_answer = dag.root_node().value.clone();
    let mut lines: Vec<&str> = steps.iter().map(|s| s.text.as_str()).collect();
    let answer_line = format!("{ANSWER_MARKER} {}", format_answer(task, &final_answer));
    lines.push(&answer_line);
    let text = lines.join("\n");
    ReasoningChain {
        steps,
        final_answer,
        text,
    }
}

fn step_text(dag: &Dag, task: Task, id: NodeId) -> String {
    let node = dag.node(id);
    let v = |x: &BigInt| format_answer(task, x);
    let Some(op) = node.op else {
        return match task {
            Task::Arithmetic => format!("{} is {}", node.name, v(&node.value)),
            Task::Logical => format!("{} is {}.", node.name, v(&node.value)),
        };
    };
    let names: Vec<&str> = node.parents.iter().map(|&p| dag.node(p).name.as_str()).collect();
    let vals: Vec<String> = node.parents.iter().map(|&p| v(&dag.node(p).value)).collect();
    let result = v(&node.value);
    match op {
        Operator::Square => format!("{} = {}^2 = ({})^2 = {result}", node.name, names[0], vals[0]),
        Operator::Not => format!("{} = (NOT {}) = (NOT {}) = {result}.", node.name, names[0], vals[0]),
        Operator::Add | Operator::Sub | Operator::Mul => {
            let sym = arithmetic_symbol(op);
            format!(
                "{} = {} {sym} {} = {} {sym} {} = {result}",
                node.name, names[0], names[1], vals[0], vals[1]
            )
        }
        Operator::And | Operator::Or => {
            let word = if op == Operator::And { "AND" } else { "OR" };
            format!(
                "{} = ({} {word} {}) = ({} {word} {}) = {result}.",
                node.name, names[0], names[1], vals[0], vals[1]
            )
        }
    }
}

fn arithmetic_symbol(op: Operator) -> &'static str {
    match op {
        Operator::Add => "+",
        Operator::Sub => "-",
        Operator::Mul => "*",
        _ => unreachable!("only binary arithmetic operators have a symbol"),
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("line {line}: cannot read step `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: `{name}` is not part of the problem")]
    UnknownNode { line: usize, name: String },
    #[error("line {line}: `{name}` is computed twice")]
    Repeated { line: usize, name: String },
    #[error("line {line}: `{name}` uses `{parent}` before it is computed")]
    OutOfOrder {
        line: usize,
        name: String,
        parent: String,
    },
    #[error("line {line}: `{name}` is not computed from the stated operands")]
    WrongOperands { line: usize, name: String },
    #[error("line {line}: `{name}` states {stated} for `{operand}`, which was {earlier}")]
    OperandMismatch {
        line: usize,
        name: String,
        operand: String,
        stated: BigInt,
        earlier: BigInt,
    },
    #[error("line {line}: `{name}` is stated as {stated} but the step computes {computed}")]
    Arithmetic {
        line: usize,
        name: String,
        stated: BigInt,
        computed: BigInt,
    },
    #[error("line {line}: leaf `{name}` is stated as {stated} but is {expected}")]
    LeafValue {
        line: usize,
        name: String,
        stated: BigInt,
        expected: BigInt,
    },
    #[error("the chain never computes the root")]
    Incomplete,
    #[error("the chain has no answer line")]
    MissingAnswer,
    #[error("the answer line states {stated} but the chain computed {computed}")]
    AnswerMismatch { stated: BigInt, computed: BigInt },
}

/// Checks a reasoning chain line by line against `dag` and returns its
/// final answer.
///
/// Every step must name a relevant node, come after the steps of its
/// operands, restate the operand values computed earlier, and compute its
/// result correctly; leaves must carry their true values. Operands of
/// commutative operators may appear in either order. The last line must be
/// the answer line.
pub fn validate_chain(dag: &Dag, task: Task, text: &str) -> Result<BigInt, ChainError> {
    let mask = dag.relevant_mask();
    let index = dag.name_index();
    let mut computed: HashMap<NodeId, BigInt> = HashMap::new();
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let Some((answer_line, steps)) = lines.split_last() else {
        return Err(ChainError::MissingAnswer);
    };
    let stated_answer = answer_line
        .strip_prefix(ANSWER_MARKER)
        .map(|rest| rest.trim().trim_end_matches('.'))
        .ok_or(ChainError::MissingAnswer)?;
    let stated_answer = parse_value(task, stated_answer).ok_or(ChainError::MissingAnswer)?;

    for (i, raw) in steps.iter().enumerate() {
        let line = i + 1;
        let malformed = || ChainError::Malformed {
            line,
            text: raw.to_string(),
        };
        let step = parse_step(task, raw).ok_or_else(malformed)?;
        let id = *index
            .get(step.subject.as_str())
            .filter(|id| mask[id.0])
            .ok_or_else(|| ChainError::UnknownNode {
                line,
                name: step.subject.clone(),
            })?;
        if computed.contains_key(&id) {
            return Err(ChainError::Repeated {
                line,
                name: step.subject,
            });
        }
        let node = dag.node(id);
        match (node.op, &step.operation) {
            (None, None) => {
                if step.result != node.value {
                    return Err(ChainError::LeafValue {
                        line,
                        name: step.subject,
                        stated: step.result,
                        expected: node.value.clone(),
                    });
                }
            }
            (Some(op), Some((stated_op, operands))) if op == *stated_op => {
                let expected: Vec<&str> = node
                    .parents
                    .iter()
                    .map(|&p| dag.node(p).name.as_str())
                    .collect();
                let mut stated_names: Vec<&str> = operands.iter().map(|(n, _)| n.as_str()).collect();
                let same = if op.is_commutative() {
                    let mut want = expected.clone();
                    want.sort_unstable();
                    stated_names.sort_unstable();
                    want == stated_names
                } else {
                    expected == stated_names
                };
                if !same {
                    return Err(ChainError::WrongOperands {
                        line,
                        name: step.subject,
                    });
                }
                for (operand, stated) in operands {
                    let pid = index[operand.as_str()];
                    let earlier = computed.get(&pid).ok_or_else(|| ChainError::OutOfOrder {
                        line,
                        name: step.subject.clone(),
                        parent: operand.clone(),
                    })?;
                    if earlier != stated {
                        return Err(ChainError::OperandMismatch {
                            line,
                            name: step.subject.clone(),
                            operand: operand.clone(),
                            stated: stated.clone(),
                            earlier: earlier.clone(),
                        });
                    }
                }
                let args: Vec<BigInt> = operands.iter().map(|(_, v)| v.clone()).collect();
                let value = op.apply(&args);
                if value != step.result {
                    return Err(ChainError::Arithmetic {
                        line,
                        name: step.subject,
                        stated: step.result,
                        computed: value,
                    });
                }
            }
            _ => {
                return Err(ChainError::WrongOperands {
                    line,
                    name: step.subject,
                })
            }
        }
        computed.insert(id, step.result);
    }
    let root_value = computed.get(&dag.root()).ok_or(ChainError::Incomplete)?;
    if *root_value != stated_answer {
        return Err(ChainError::AnswerMismatch {
            stated: stated_answer,
            computed: root_value.clone(),
        });
    }
    Ok(stated_answer)
}

struct ParsedStep {
    subject: String,
    /// `None` for a leaf restatement.
    operation: Option<(Operator, Vec<(String, BigInt)>)>,
    result: BigInt,
}

fn parse_value(task: Task, text: &str) -> Option<BigInt> {
    match task {
        Task::Arithmetic => parse_exact_integer(text),
        Task::Logical => match text {
            "0" | "1" => text.parse().ok(),
            _ => None,
        },
    }
}

fn parse_step(task: Task, line: &str) -> Option<ParsedStep> {
    let body = match task {
        Task::Logical => line.strip_suffix('.')?,
        Task::Arithmetic => line,
    };
    if let Some((subject, value)) = body.split_once(" is ") {
        return Some(ParsedStep {
            subject: subject.trim().to_owned(),
            operation: None,
            result: parse_value(task, value.trim())?,
        });
    }
    let parts: Vec<&str> = body.split(" = ").map(str::trim).collect();
    let [subject, names, values, result] = parts.as_slice() else {
        return None;
    };
    let result = parse_value(task, result)?;
    let (op, names, values) = match task {
        Task::Arithmetic => split_arithmetic(names, values)?,
        Task::Logical => split_logical(names, values)?,
    };
    let operands = names
        .into_iter()
        .zip(values)
        .map(|(n, v)| Some((n.to_owned(), parse_value(task, v)?)))
        .collect::<Option<Vec<_>>>()?;
    Some(ParsedStep {
        subject: subject.to_string(),
        operation: Some((op, operands)),
        result,
    })
}

type Split<'a> = (Operator, Vec<&'a str>, Vec<&'a str>);

fn split_arithmetic<'a>(names: &'a str, values: &'a str) -> Option<Split<'a>> {
    if let Some(name) = names.strip_suffix("^2") {
        let value = values.strip_prefix('(')?.strip_suffix(")^2")?;
        return Some((Operator::Square, vec![name], vec![value]));
    }
    for op in [Operator::Add, Operator::Sub, Operator::Mul] {
        let sep = format!(" {} ", arithmetic_symbol(op));
        if let (Some((a, b)), Some((va, vb))) = (names.split_once(&sep), values.split_once(&sep)) {
            return Some((op, vec![a, b], vec![va, vb]));
        }
    }
    None
}

fn split_logical<'a>(names: &'a str, values: &'a str) -> Option<Split<'a>> {
    let names = names.strip_prefix('(')?.strip_suffix(')')?;
    let values = values.strip_prefix('(')?.strip_suffix(')')?;
    if let (Some(n), Some(v)) = (names.strip_prefix("NOT "), values.strip_prefix("NOT ")) {
        return Some((Operator::Not, vec![n], vec![v]));
    }
    for (op, word) in [(Operator::And, " AND "), (Operator::Or, " OR ")] {
        if let (Some((a, b)), Some((va, vb))) = (names.split_once(word), values.split_once(word)) {
            return Some((op, vec![a, b], vec![va, vb]));
        }
    }
    None
}
