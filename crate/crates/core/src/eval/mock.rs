//! Scripted clients that answer by parsing the prompt.

use crate::client::{ClientError, CompletionClient, CompletionRequest};
use crate::dag::{topological_order, Task};
use crate::render::{parse_query, render_chain, ParsedQuery, ANSWER_MARKER, DEFAULT_SEP};
use crate::rng::mix64;

const UNPARSED: &str = "I cannot follow this question.";

fn reference_chain(parsed: &ParsedQuery) -> String {
    let sub = parsed.dag.relevant_subgraph();
    let order = topological_order(&sub).expect("parsed queries are acyclic");
    render_chain(&sub, parsed.task, &order).text
}

/// Always answers with the reference chain for the prompt.
#[derive(Debug, Clone)]
pub struct EchoChainClient {
    pub sep: String,
}

impl Default for EchoChainClient {
    fn default() -> Self {
        Self { sep: DEFAULT_SEP.into() }
    }
}

impl CompletionClient for EchoChainClient {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        Ok(match parse_query(&request.prompt, &self.sep) {
            Ok(parsed) => reference_chain(&parsed),
            Err(_) => UNPARSED.into(),
        })
    }
}

/// Correct only when every relevant premise comes after the premises it
/// depends on; otherwise a wrong answer keyed on the prompt text, or for
/// logical prompts sometimes no answer at all.
#[derive(Debug, Clone)]
pub struct TopologicalOnlyClient {
    pub sep: String,
}

impl Default for TopologicalOnlyClient {
    fn default() -> Self {
        Self { sep: DEFAULT_SEP.into() }
    }
}

/// Whether the relevant premises of `parsed` appear in a topological order.
pub fn is_topologically_ordered(parsed: &ParsedQuery) -> bool {
    let mut position = vec![usize::MAX; parsed.dag.len()];
    for (i, id) in parsed.premise_order.iter().enumerate() {
        position[id.0] = i;
    }
    let mask = parsed.dag.relevant_mask();
    parsed
        .dag
        .nodes()
        .iter()
        .filter(|n| mask[n.id.0])
        .all(|n| n.parents.iter().all(|p| position[p.0] < position[n.id.0]))
}

impl CompletionClient for TopologicalOnlyClient {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let parsed = match parse_query(&request.prompt, &self.sep) {
            Ok(p) => p,
            Err(_) => return Ok(UNPARSED.into()),
        };
        if is_topologically_ordered(&parsed) {
            return Ok(reference_chain(&parsed));
        }
        let h = request.prompt.bytes().fold(0, |h, b| mix64(h ^ u64::from(b)));
        let answer = parsed.answer();
        Ok(match parsed.task {
            Task::Arithmetic => format!("{ANSWER_MARKER} {}.0", answer + 1 + h % 97),
            Task::Logical if h % 2 == 0 => format!("{ANSWER_MARKER} {}", 1 - answer),
            Task::Logical => "I am not sure.".into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::Problem;
    use crate::render::{render_query, OrderTag};
    use crate::rng::SplitMix64;

    #[test]
    fn order_detection() {
        let p = Problem::generate(Task::Arithmetic, 2, 3, 4).unwrap();
        let mut rng = SplitMix64::new(1);
        let topo = render_query(&p, OrderTag::Topological, &mut rng).text();
        let rev = render_query(&p, OrderTag::Reversed, &mut rng).text();
        assert!(is_topologically_ordered(&parse_query(&topo, "\n").unwrap()));
        assert!(!is_topologically_ordered(&parse_query(&rev, "\n").unwrap()));
        let client = TopologicalOnlyClient::default();
        let ask = |q: &str| client.complete(&CompletionRequest::greedy(q, "m")).unwrap();
        assert!(ask(&topo).ends_with(&format!("{}.0", p.answer())));
        assert!(!ask(&rev).ends_with(&format!(" {}.0", p.answer())));
        assert_eq!(ask("nonsense"), UNPARSED);
    }
}
