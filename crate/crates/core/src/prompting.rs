//! Prompt rendering for the structured, plain and shuffled review settings.
//!
//! Templates live in `assets/templates/` and are compiled in. Placeholders
//! are `{title}`, `{positive_review}`, `{negative_review}` and `{text}`;
//! substitution is single-pass, so review text that happens to contain a
//! placeholder is never expanded again.
//!
//! Shuffling uses SplitMix64 so the permutation is portable:
//!
//! ```text
//! state = mix(global_seed) ^ fnv1a64(pair_id) ^ (side_index + 1) * 0x9E3779B97F4A7C15
//! for i in (1..n).rev(): j = next(state) % (i + 1); swap(i, j)
//! ```
//!
//! where `side_index` is 0 for TW and 1 for CN and `mix` is the SplitMix64
//! output function.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ingest::ReviewRecord;
use crate::pairing::Side;

pub const SYSTEM_TEMPLATE: &str = include_str!("../assets/templates/system.txt");
pub const STRUCTURED_TEMPLATE: &str = include_str!("../assets/templates/structured.txt");
pub const PLAIN_TEMPLATE: &str = include_str!("../assets/templates/plain.txt");
pub const SENTIMENT_TEMPLATE: &str = include_str!("../assets/templates/sentiment.txt");

/// Content hash of all prompt templates.
pub fn template_version() -> String {
    let mut h = Sha256::new();
    for t in [SYSTEM_TEMPLATE, STRUCTURED_TEMPLATE, PLAIN_TEMPLATE, SENTIMENT_TEMPLATE] {
        h.update(t.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())[..12].to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptVariant {
    Structured,
    Plain,
    Shuffled,
    /// Three-way sentiment labelling used by the length sweep.
    Sentiment,
}

impl PromptVariant {
    pub const RATING: [PromptVariant; 3] = [
        PromptVariant::Structured,
        PromptVariant::Plain,
        PromptVariant::Shuffled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptVariant::Structured => "structured",
            PromptVariant::Plain => "plain",
            PromptVariant::Shuffled => "shuffled",
            PromptVariant::Sentiment => "sentiment",
        }
    }

    /// Parses one of the three rating variants.
    pub fn parse_rating(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "structured" | "stru" => Some(PromptVariant::Structured),
            "plain" => Some(PromptVariant::Plain),
            "shuffled" | "shuf" => Some(PromptVariant::Shuffled),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub system_text: Option<String>,
    pub user_text: String,
    pub variant: PromptVariant,
    pub seed: u64,
    pub review_ref: String,
}

impl PromptInstance {
    /// Drops the system message for endpoints without a system role.
    pub fn for_endpoint(mut self, supports_system_role: bool) -> Self {
        if !supports_system_role {
            self.system_text = None;
        }
        self
    }
}

/// SplitMix64 generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        mix64(self.state)
    }

    /// Fisher-Yates, high index first.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = (self.next_u64() % (i as u64 + 1)) as usize;
            items.swap(i, j);
        }
    }
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Per-(pair, side) shuffle seed derived from the run's global seed.
pub fn shuffle_seed(global_seed: u64, pair_id: &str, side: Side) -> u64 {
    let side_index = match side {
        Side::Tw => 1u64,
        Side::Cn => 2u64,
    };
    mix64(global_seed) ^ fnv1a64(pair_id.as_bytes()) ^ side_index.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let hit = slots.iter().find_map(|(name, value)| {
            let key_len = name.len() + 2;
            (tail.len() >= key_len
                && tail.as_bytes()[key_len - 1] == b'}'
                && &tail[1..key_len - 1] == *name)
                .then_some((key_len, *value))
        });
        match hit {
            Some((len, value)) => {
                out.push_str(value);
                rest = &tail[len..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn instance(record: &ReviewRecord, variant: PromptVariant, seed: u64, user_text: String) -> PromptInstance {
    PromptInstance {
        system_text: Some(SYSTEM_TEMPLATE.to_string()),
        user_text,
        variant,
        seed,
        review_ref: record.record_id.clone(),
    }
}

/// Labelled title / positive / negative lines; absent parts render empty.
pub fn render_structured(record: &ReviewRecord) -> PromptInstance {
    let user = fill(
        STRUCTURED_TEMPLATE,
        &[
            ("title", record.title.as_deref().unwrap_or("")),
            ("positive_review", record.positive.as_deref().unwrap_or("")),
            ("negative_review", record.negative.as_deref().unwrap_or("")),
        ],
    );
    instance(record, PromptVariant::Structured, 0, user)
}

/// Non-empty parts, newline-joined, in title → positive → negative order.
pub fn plain_text(record: &ReviewRecord) -> String {
    record.nonempty_parts().join("\n")
}

pub fn render_plain(record: &ReviewRecord) -> PromptInstance {
    let user = fill(PLAIN_TEMPLATE, &[("text", &plain_text(record))]);
    instance(record, PromptVariant::Plain, 0, user)
}

/// Non-empty parts in a seeded random order.
pub fn shuffled_parts(record: &ReviewRecord, seed: u64) -> Vec<&str> {
    let mut parts = record.nonempty_parts();
    SplitMix64::new(seed).shuffle(&mut parts);
    parts
}

/// `seed` is normally [`shuffle_seed`] of the run seed, pair id and side.
pub fn render_shuffled(record: &ReviewRecord, seed: u64) -> PromptInstance {
    let text = shuffled_parts(record, seed).join("\n");
    let user = fill(PLAIN_TEMPLATE, &[("text", &text)]);
    instance(record, PromptVariant::Shuffled, seed, user)
}

/// Sentiment-label prompt; never carries a system message.
pub fn render_sentiment(record: &ReviewRecord) -> PromptInstance {
    let user = fill(SENTIMENT_TEMPLATE, &[("text", &plain_text(record))]);
    PromptInstance {
        system_text: None,
        ..instance(record, PromptVariant::Sentiment, 0, user)
    }
}

pub fn render(
    record: &ReviewRecord,
    variant: PromptVariant,
    shuffle_seed: u64,
    supports_system_role: bool,
) -> PromptInstance {
    let prompt = match variant {
        PromptVariant::Structured => render_structured(record),
        PromptVariant::Plain => render_plain(record),
        PromptVariant::Shuffled => render_shuffled(record, shuffle_seed),
        PromptVariant::Sentiment => render_sentiment(record),
    };
    prompt.for_endpoint(supports_system_role)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::record_with;

    const HEAD: &str = "The following is a hotel review from a user.";

    #[test]
    fn structured_template_bytes() {
        let p = render_structured(&record_with(Some("ok"), Some("clean"), None));
        assert_eq!(p.system_text.as_deref(), Some("You are a grading assistant for hotel reviews"));
        let expected = "The following is a hotel review from a user. Based on the title, positive feedback, and negative feedback provided below, give an overall score from 1 to 10, where 1 is the worst and 10 is the best. DO NOT include any words in your output, just provide the number.\n\nTitle: ok\nPositive Feedback: clean\nNegative Feedback: \nOverall Score (1-10):";
        assert_eq!(p.user_text, expected);
    }

    #[test]
    fn plain_template_bytes() {
        let p = render_plain(&record_with(Some("t"), Some("p"), Some("n")));
        let expected = "The following is a hotel review from a user. Based on the input review below, give an overall score from 1 to 10, where 1 is the worst and 10 is the best. DO NOT include any words in your output, just provide the number.\n\ninput: t\np\nn\nOverall Score (1-10):";
        assert_eq!(p.user_text, expected);
        let p = render_plain(&record_with(Some("t"), None, Some("n")));
        assert!(p.user_text.contains("input: t\nn\nOverall"));
        let p = render_plain(&record_with(Some("t"), Some("  "), Some("n")));
        assert!(p.user_text.contains("input: t\nn\nOverall"));
    }

    #[test]
    fn structured_rendering_is_deterministic() {
        let r = record_with(Some("a"), Some("b"), Some("c"));
        assert_eq!(render_structured(&r), render_structured(&r));
        let text = render_structured(&r).user_text;
        let lines: Vec<_> = text.lines().skip(2).collect();
        assert_eq!(lines, ["Title: a", "Positive Feedback: b", "Negative Feedback: c", "Overall Score (1-10):"]);
    }

    #[test]
    fn placeholders_in_review_text_are_not_expanded() {
        let r = record_with(Some("{positive_review}"), Some("{text}"), None);
        let p = render_structured(&r);
        assert!(p.user_text.contains("Title: {positive_review}\nPositive Feedback: {text}\n"));
        assert!(render_plain(&r).user_text.contains("input: {positive_review}\n{text}\n"));
    }

    #[test]
    fn single_part_shuffle_equals_plain() {
        let r = record_with(None, Some("only"), None);
        assert_eq!(render_shuffled(&r, 99).user_text, render_plain(&r).user_text);
    }

    #[test]
    fn shuffle_is_reproducible_and_varies_with_seed() {
        let r = record_with(Some("t"), Some("p"), Some("n"));
        assert_eq!(render_shuffled(&r, 5), render_shuffled(&r, 5));
        let orders: std::collections::BTreeSet<Vec<&str>> =
            (0..6).map(|s| shuffled_parts(&r, s)).collect();
        assert!(orders.len() >= 2);
    }

    #[test]
    fn splitmix_reference_values() {
        // First outputs of SplitMix64 seeded with 0, as published with the algorithm.
        let mut rng = SplitMix64::new(0);
        assert_eq!(rng.next_u64(), 0xE220A8397B1DCDAF);
        assert_eq!(rng.next_u64(), 0x6E789E6AA1B965F4);
        assert_eq!(rng.next_u64(), 0x06C45D188009454F);
    }

    #[test]
    fn system_role_removal() {
        let r = record_with(Some("a"), None, None);
        assert!(render(&r, PromptVariant::Plain, 0, false).system_text.is_none());
        assert!(render(&r, PromptVariant::Plain, 0, true).system_text.is_some());
        assert!(render_sentiment(&r).system_text.is_none());
    }

    #[test]
    fn sentiment_template() {
        let p = render_sentiment(&record_with(Some("t"), None, Some("n")));
        assert!(p.user_text.starts_with("Predict the sentiment of the following text."));
        assert!(p.user_text.ends_with("\n\nText: t\nn"));
    }

    #[test]
    fn no_metadata_leaks_into_prompts() {
        let mut r = record_with(Some("a"), Some("b"), None);
        r.hotel_id = "HOTEL-XYZ".into();
        r.score = 7.0;
        for v in PromptVariant::RATING {
            let p = render(&r, v, 1, true);
            assert!(p.user_text.starts_with(HEAD));
            assert!(!p.user_text.contains("HOTEL-XYZ"));
            assert!(!p.user_text.contains("TW"));
            assert!(!p.user_text.contains("7.0"));
        }
    }

    #[test]
    fn template_version_is_short_hex() {
        let v = template_version();
        assert_eq!(v.len(), 12);
        assert!(v.chars().all(|c| c.is_ascii_hexdigit()));
    }

    proptest::proptest! {
        #[test]
        fn shuffle_preserves_parts(
            t in proptest::option::of("[a-z]{0,5}"),
            p in proptest::option::of("[a-z]{0,5}"),
            n in proptest::option::of("[a-z]{0,5}"),
            seed in proptest::num::u64::ANY,
        ) {
            let r = record_with(t.as_deref(), p.as_deref(), n.as_deref());
            let mut a = shuffled_parts(&r, seed);
            let mut b = r.nonempty_parts();
            a.sort();
            b.sort();
            proptest::prop_assert_eq!(a, b);
        }
    }
}
