//! Tooling for sentence-level literary coreference with generative models.
//!
//! - [`markup`]: the inline `[span: id]` annotation format.
//! - [`strict`]: edit distance, exact match and the length-gated entity and
//!   coreference F1 scores.
//! - [`metrics`]: MUC, B³, CEAF, BLANC, LEA and the CoNLL average.
//! - [`dataset`]: corpus validation and the train/validation/test split.
//! - [`analysis`]: failure taxonomy, word replacements and hallucinated tails.
//! - [`records`] and [`report`]: JSONL file schemas and the scoring report.

pub mod analysis;
pub mod assignment;
pub mod dataset;
pub mod markup;
pub mod metrics;
pub mod records;
pub mod report;
pub mod strict;

pub use markup::{
    parse_lenient, parse_strict, serialize, simplify_duplicates, strip, AnnotatedSentence, Diagnostic, DiagnosticKind,
    MarkupError, Mention, ParseDiagnostics,
};
