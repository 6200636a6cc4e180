//! Harness for measuring how string-token formatting changes the symbolic
//! reasoning accuracy of black-box language models.
//!
//! The pipeline runs in five stages, each usable on its own:
//!
//! ```text
//! taskgen::generate -> prompts::render_prompt -> runner::run_batch -> parse::judge -> metrics
//! ```
//!
//! [`tokenizer`] provides a small character-level BPE used to inspect token
//! boundaries and to drive the simulated backend.

pub mod error;
pub mod jsonl;
pub mod metrics;
pub mod parse;
pub mod pipeline;
pub mod prompts;
pub mod runner;
pub mod taskgen;
pub mod tokenizer;

pub use error::{Error, Result};
pub use metrics::{AccuracyCell, DeltaTok, ErrorShift, FrequencyTable};
pub use parse::{ParsedAnswer, Verdict};
pub use prompts::{PromptBundle, PromptVariant};
pub use runner::{BackendConfig, RunRecord, SimErrorModel};
pub use taskgen::{AlphabetSpec, FormatType, Gold, Instance, LengthBucket, TaskKind};
pub use tokenizer::{AlignmentReport, MergeTable, TokenizationView};
