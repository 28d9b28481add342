//! Answer extraction, grading, accuracy grids, VoV and the run harness.

mod grade;
pub mod mock;
mod run;
mod vov;

pub use grade::{
    accuracy_grid, grade, scop_vote, AnswerFailure, Failure, GradeError, GradeRecord, GradeReport, GradeSummary,
    ResponseRecord, SampleAccuracy,
};
pub use run::{run_eval, EvalMode, RunConfig, RunError, RunFailure, RunOutput, VoteRecord};
pub use vov::{vov, AccuracyGrid, VovError, VovReport};

use num_bigint::BigInt;

use crate::dag::Task;
use crate::render::{parse_exact_integer, ANSWER_MARKER};

/// Value after the last answer marker. Arithmetic accepts `12348` and
/// `12348.0`; logical accepts `0` or `1`. One trailing period is ignored.
pub fn parse_final_answer(text: &str, task: Task) -> Result<BigInt, AnswerFailure> {
    let start = text.rfind(ANSWER_MARKER).ok_or(AnswerFailure::NoMarker)? + ANSWER_MARKER.len();
    let token = text[start..].split_whitespace().next().ok_or(AnswerFailure::UnparseableValue)?;
    let token = token.trim_matches('$');
    let token = match token.strip_suffix('.') {
        Some(t) if !t.ends_with('.') => t,
        _ => token,
    };
    let value = parse_exact_integer(token).ok_or(AnswerFailure::UnparseableValue)?;
    match task {
        Task::Logical if value != BigInt::from(0) && value != BigInt::from(1) => Err(AnswerFailure::UnparseableValue),
        _ => Ok(value),
    }
}
