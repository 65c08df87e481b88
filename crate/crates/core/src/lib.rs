//! Paired TW/CN review benchmark: ingest raw reviews, pair them by hotel,
//! sentiment class and length bin, ask rating models about both sides and
//! report the accuracy and MSE gaps with paired significance tests.

pub mod artifact;
pub mod config;
pub mod ingest;
pub mod llm;
pub mod metrics;
pub mod mt;
pub mod pairing;
#[cfg(feature = "http")]
pub mod pipeline;
pub mod prompting;
pub mod report;
pub mod script;
pub mod synth;
pub mod textstats;
pub mod validate;

pub use ingest::{ReviewRecord, Variety};
pub use pairing::{build_pairs, ReviewPair, Side};
pub use prompting::{PromptInstance, PromptVariant};
pub use script::{CharSetTables, ScriptBucket, Subset};
