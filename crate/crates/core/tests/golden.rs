//! Reference example QA pairs, parsed and checked end to end.

use dagreason::dag::{difficulty, topological_order};
use dagreason::dataset::EvalItem;
use dagreason::eval::{grade, parse_final_answer, ResponseRecord};
use dagreason::render::{
    format_answer, parse_query, render_chain, validate_chain, ChainError, OrderTag, ParsedQuery, SentenceKind,
};
use dagreason::Task;
use num_bigint::BigInt;

const LOGICAL_QUERY: &str = include_str!("fixtures/logical_query.txt");
const LOGICAL_RESPONSE: &str = include_str!("fixtures/logical_response.txt");
const ARITHMETIC_QUERY: &str = include_str!("fixtures/arithmetic_query.txt");
const ARITHMETIC_RESPONSE: &str = include_str!("fixtures/arithmetic_response.txt");
const ARITHMETIC_RESPONSE_PLAIN: &str = include_str!("fixtures/arithmetic_response_plain.txt");

fn canonical_chain(parsed: &ParsedQuery) -> String {
    let sub = parsed.dag.relevant_subgraph();
    render_chain(&sub, parsed.task, &topological_order(&sub).unwrap()).text
}

fn item_for(id: &str, parsed: &ParsedQuery, query: &str) -> EvalItem {
    let redundancy = parsed
        .premises()
        .iter()
        .filter(|p| !p.relevant && p.kind == SentenceKind::Dependency)
        .count();
    EvalItem {
        id: id.into(),
        task: parsed.task,
        depth: parsed.dag.relevant_subgraph().depth(),
        difficulty: difficulty(&parsed.dag),
        order_tag: OrderTag::Random,
        redundancy,
        seed: 0,
        query: query.into(),
        answer: format_answer(parsed.task, parsed.answer()),
        chain: canonical_chain(parsed),
        labels: parsed.labels(),
    }
}

#[test]
fn logical_example() {
    let parsed = parse_query(LOGICAL_QUERY, "\n").unwrap();
    assert_eq!(parsed.task, Task::Logical);
    assert_eq!(parsed.render(), LOGICAL_QUERY);
    assert_eq!(*parsed.answer(), BigInt::from(1));
    assert_eq!(difficulty(&parsed.dag), 7);
    // aax, aay and the aaz dependency are distractors.
    let mut irrelevant: Vec<String> = parsed
        .premises()
        .into_iter()
        .filter(|p| !p.relevant)
        .map(|p| p.subject)
        .collect();
    irrelevant.sort();
    assert_eq!(irrelevant, ["aax", "aay", "aaz"]);

    let chain = canonical_chain(&parsed);
    assert_eq!(validate_chain(&parsed.dag, Task::Logical, &chain), Ok(BigInt::from(1)));
    assert_eq!(validate_chain(&parsed.dag, Task::Logical, LOGICAL_RESPONSE), Ok(BigInt::from(1)));
    assert_eq!(parse_final_answer(LOGICAL_RESPONSE, Task::Logical), Ok(BigInt::from(1)));

    let item = item_for("logical-example", &parsed, LOGICAL_QUERY);
    item.validate("\n").unwrap();
    let response = ResponseRecord {
        id: item.id.clone(),
        sample_index: 0,
        paraphrase_index: None,
        response: LOGICAL_RESPONSE.into(),
    };
    let report = grade(&[item], &[response]).unwrap();
    assert!(report.records[0].correct);
}

/// Under the templates' semantics `aac = aab - aaa = 7 - 1 = 6`, which makes
/// the root -12348. The reference response states `aac = -6.0` and so
/// arrives at 12348; the chain validator pins that step and grading marks
/// the response wrong.
#[test]
fn arithmetic_example_sign_discrepancy() {
    let parsed = parse_query(ARITHMETIC_QUERY, "\n").unwrap();
    assert_eq!(parsed.task, Task::Arithmetic);
    assert_eq!(parsed.render(), ARITHMETIC_QUERY);
    assert_eq!(*parsed.answer(), BigInt::from(-12348));
    assert_eq!(difficulty(&parsed.dag), 7);

    let chain = canonical_chain(&parsed);
    assert_eq!(validate_chain(&parsed.dag, Task::Arithmetic, &chain), Ok(BigInt::from(-12348)));

    let printed = parse_final_answer(ARITHMETIC_RESPONSE, Task::Arithmetic).unwrap();
    assert_eq!(printed, BigInt::from(12348));
    assert_ne!(&printed, parsed.answer());

    match validate_chain(&parsed.dag, Task::Arithmetic, ARITHMETIC_RESPONSE_PLAIN) {
        Err(ChainError::Arithmetic {
            name, stated, computed, ..
        }) => {
            assert_eq!(name, "aac");
            assert_eq!(stated, BigInt::from(-6));
            assert_eq!(computed, BigInt::from(6));
        }
        other => panic!("expected the aac step to be flagged, got {other:?}"),
    }

    let corrected = ARITHMETIC_RESPONSE_PLAIN
        .replace("7.0 - 1.0 = -6.0", "7.0 - 1.0 = 6.0")
        .replace("-6.0 * 49.0 = -294.0", "6.0 * 49.0 = 294.0")
        .replace("-42.0 * -294.0 = 12348.0", "-42.0 * 294.0 = -12348.0")
        .replace("answer is 12348.0", "answer is -12348.0");
    assert_eq!(
        validate_chain(&parsed.dag, Task::Arithmetic, &corrected),
        Ok(BigInt::from(-12348))
    );

    let item = item_for("arithmetic-example", &parsed, ARITHMETIC_QUERY);
    item.validate("\n").unwrap();
    let respond = |text: &str| ResponseRecord {
        id: item.id.clone(),
        sample_index: 0,
        paraphrase_index: None,
        response: text.into(),
    };
    let report = grade(std::slice::from_ref(&item), &[respond(ARITHMETIC_RESPONSE)]).unwrap();
    assert!(!report.records[0].correct);
    assert_eq!(report.records[0].parsed_answer, Some(BigInt::from(12348)));
    let report = grade(std::slice::from_ref(&item), &[respond(&corrected)]).unwrap();
    assert!(report.records[0].correct);
}
