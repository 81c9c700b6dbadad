//! Building blocks for evaluating retrieval-augmented answers to student math
//! questions: textbook ingestion, dense retrieval, guidance-conditioned
//! prompting, lexical groundedness metrics, blinded annotation campaigns and
//! the statistics used to analyse them.

pub mod campaign;
pub mod corpus;
pub mod generation;
pub mod http;
pub mod metrics;
pub mod registry;
pub mod retrieval;
pub mod retry;
pub mod stats;
