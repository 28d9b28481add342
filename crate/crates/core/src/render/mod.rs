//! Surface forms: fixed sentence templates for queries and reasoning chains,
//! and the parser that maps a query back to its semantic graph.
//!
//! Template grammar (one sentence per `sep`-delimited part):
//!
//! ```text
//! query      = [preamble sep] premise {sep premise} sep question
//! preamble   = "The value 1 means True, and the value 0 means False."
//! question   = "What is the value of " name "?"
//! premise    = arith-leaf | logic-leaf | arith-dep | logic-dep
//! arith-leaf = "The value of " name " is " integer "."
//! logic-leaf = name " is " ("0" | "1") "."
//! arith-dep  = name " gets its value by " phrase "."
//! phrase     = "adding together the value of " name " and " name
//!            | "subtracting the value of " name " from the value of " name
//!            | "multiplying together the value of " name " and " name
//!            | "squaring the value that " name " has"
//! logic-dep  = "The value of " name " equals to (" name (" AND " | " OR ") name ")."
//!            | "The value of " name " equals to (NOT " name ")."
//! name       = [a-z] {[a-z0-9_]}
//! ```
//!
//! In the subtraction phrase the first name is the subtrahend and the second
//! the minuend.

mod chain;
mod parse;
mod query;

pub use chain::{
    render_chain, render_reasoning_chain, validate_chain, ChainError, ChainStep, ReasoningChain,
    ANSWER_MARKER,
};
pub use parse::{parse_query, semantic_equal, ParseError, ParsedQuery};
pub use query::{
    render_premises, render_query, render_query_with_sep, OrderTag, PremiseSentence,
    RenderedQuery, SentenceKind,
};

use num_bigint::BigInt;

use crate::dag::{Operator, Task};

pub const DEFAULT_SEP: &str = "\n";
pub const LOGICAL_PREAMBLE: &str = "The value 1 means True, and the value 0 means False.";
pub(crate) const QUESTION_PREFIX: &str = "What is the value of ";

pub fn question_sentence(root: &str) -> String {
    format!("{QUESTION_PREFIX}{root}?")
}

pub fn leaf_sentence(task: Task, name: &str, value: &BigInt) -> String {
    match task {
        Task::Arithmetic => format!("The value of {name} is {value}."),
        Task::Logical => format!("{name} is {value}."),
    }
}

/// Dependency sentence for `name = op(parents)`; `Sub` parents are
/// `[minuend, subtrahend]`.
pub fn dependency_sentence(name: &str, op: Operator, parents: &[&str]) -> String {
    match op {
        Operator::Add => format!(
            "{name} gets its value by adding together the value of {} and {}.",
            parents[0], parents[1]
        ),
        Operator::Sub => format!(
            "{name} gets its value by subtracting the value of {} from the value of {}.",
            parents[1], parents[0]
        ),
        Operator::Mul => format!(
            "{name} gets its value by multiplying together the value of {} and {}.",
            parents[0], parents[1]
        ),
        Operator::Square => format!("{name} gets its value by squaring the value that {} has.", parents[0]),
        Operator::And => format!("The value of {name} equals to ({} AND {}).", parents[0], parents[1]),
        Operator::Or => format!("The value of {name} equals to ({} OR {}).", parents[0], parents[1]),
        Operator::Not => format!("The value of {name} equals to (NOT {}).", parents[0]),
    }
}

/// Answer/chain value text: `"-6.0"` for arithmetic, `"1"` for logical.
pub fn format_answer(task: Task, value: &BigInt) -> String {
    match task {
        Task::Arithmetic => format!("{value}.0"),
        Task::Logical => value.to_string(),
    }
}

/// Parses an exact integer written as `-?digits` optionally followed by a
/// fractional part of zeros only (`"12348"`, `"12348.0"`, `"-6.00"`).
pub fn parse_exact_integer(text: &str) -> Option<BigInt> {
    let (int_part, frac) = match text.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (text, None),
    };
    if let Some(f) = frac {
        if f.is_empty() || !f.bytes().all(|b| b == b'0') {
            return None;
        }
    }
    let digits = int_part.strip_prefix('-').unwrap_or(int_part);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    int_part.parse().ok()
}

pub(crate) fn is_valid_name(name: &str) -> bool {
    let mut bytes = name.bytes();
    matches!(bytes.next(), Some(b'a'..=b'z'))
        && bytes.all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates_match_reference_sentences() {
        let b = |v: i64| BigInt::from(v);
        assert_eq!(
            dependency_sentence("aai", Operator::Sub, &["aag", "aah"]),
            "aai gets its value by subtracting the value of aah from the value of aag."
        );
        assert_eq!(
            dependency_sentence("aao", Operator::Or, &["aak", "aan"]),
            "The value of aao equals to (aak OR aan)."
        );
        assert_eq!(
            dependency_sentence("aae", Operator::Square, &["aad"]),
            "aae gets its value by squaring the value that aad has."
        );
        assert_eq!(leaf_sentence(Task::Arithmetic, "aag", &b(8)), "The value of aag is 8.");
        assert_eq!(leaf_sentence(Task::Logical, "aak", &b(1)), "aak is 1.");
        assert_eq!(question_sentence("aap"), "What is the value of aap?");
    }

    #[test]
    fn exact_integers() {
        assert_eq!(parse_exact_integer("12348.0"), Some(BigInt::from(12348)));
        assert_eq!(parse_exact_integer("12348"), Some(BigInt::from(12348)));
        assert_eq!(parse_exact_integer("-6.00"), Some(BigInt::from(-6)));
        assert_eq!(parse_exact_integer("6.5"), None);
        assert_eq!(parse_exact_integer("6."), None);
        assert_eq!(parse_exact_integer("-"), None);
        assert_eq!(parse_exact_integer("1e3"), None);
        assert_eq!(parse_exact_integer("+4"), None);
    }
}
