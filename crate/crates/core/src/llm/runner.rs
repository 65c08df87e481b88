use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{complete, CompletionResult, ModelEndpoint, SideChannel};
use crate::ingest::ReviewRecord;
use crate::pairing::{ReviewPair, Side};
use crate::prompting::{render, shuffle_seed, template_version, PromptVariant};

/// One request to issue: a record standing on one side of a pair.
#[derive(Debug, Clone, Copy)]
pub struct EvalItem<'a> {
    pub pair_id: &'a str,
    pub side: Side,
    pub record: &'a ReviewRecord,
}

/// What a run depended on. `hash` covers every other field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub endpoint: String,
    pub variant: PromptVariant,
    pub seed: u64,
    pub template_version: String,
    pub charset_version: String,
    pub hash: String,
}

impl RunManifest {
    pub fn new(endpoint: &str, variant: PromptVariant, seed: u64, charset_version: &str) -> Self {
        let template_version = template_version();
        let mut h = Sha256::new();
        for field in [
            endpoint,
            variant.as_str(),
            &seed.to_string(),
            &template_version,
            charset_version,
        ] {
            h.update(field.as_bytes());
            h.update([0u8]);
        }
        Self {
            endpoint: endpoint.to_string(),
            variant,
            seed,
            template_version,
            charset_version: charset_version.to_string(),
            hash: hex::encode(h.finalize())[..16].to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalRun {
    pub manifest: RunManifest,
    pub results: Vec<CompletionResult>,
}

impl EvalRun {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            out.push_str(&serde_json::to_string(r).expect("result serializes"));
            out.push('\n');
        }
        out
    }
}

/// Issues one request per item with up to `parallelism` in flight. Results
/// come back sorted by (pair_id, side) whatever the completion order.
pub fn run_items(
    items: &[EvalItem<'_>],
    endpoint: &dyn ModelEndpoint,
    variant: PromptVariant,
    seed: u64,
    parallelism: usize,
) -> Vec<CompletionResult> {
    let workers = parallelism.max(1).min(items.len().max(1));
    let next = AtomicUsize::new(0);
    let sink = Mutex::new(Vec::with_capacity(items.len()));
    let system = endpoint.supports_system_role();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let prompt = render(
                    item.record,
                    variant,
                    shuffle_seed(seed, item.pair_id, item.side),
                    system,
                );
                let truth = SideChannel {
                    score: item.record.score,
                    variety: item.record.variety,
                };
                let result = complete(endpoint, &prompt, &truth, item.pair_id, item.side);
                sink.lock().expect("result sink poisoned").push(result);
            });
        }
    });
    let mut results = sink.into_inner().expect("result sink poisoned");
    results.sort_by(|a, b| (&a.pair_id, a.side).cmp(&(&b.pair_id, b.side)));
    results
}

/// Evaluates both sides of every pair.
pub fn run_eval(
    pairs: &[ReviewPair],
    endpoint: &dyn ModelEndpoint,
    variant: PromptVariant,
    seed: u64,
    parallelism: usize,
    charset_version: &str,
) -> EvalRun {
    let items: Vec<EvalItem<'_>> = pairs
        .iter()
        .flat_map(|p| {
            Side::BOTH.map(|side| EvalItem {
                pair_id: &p.pair_id,
                side,
                record: p.side(side),
            })
        })
        .collect();
    EvalRun {
        manifest: RunManifest::new(endpoint.name(), variant, seed, charset_version),
        results: run_items(&items, endpoint, variant, seed, parallelism),
    }
}
