//! Contextually aligned TW-CN pairs.
//!
//! Two reviews are compatible when they share a hotel, a sentiment class and
//! a length bin. Grouping by that [`BucketKey`] and zipping each bucket's two
//! sides yields `min(|TW|, |CN|)` pairs per bucket, which is the maximum
//! matching of the compatibility graph since compatibility is an equivalence
//! relation on bucket keys.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{ReviewRecord, Variety};
use crate::textstats::{review_length, LengthConfig, LengthGroup};

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("score {0} is outside the 1-10 rating scale")]
pub struct ScoreRangeError(pub f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SentimentClass {
    Negative,
    Neutral,
    Positive,
}

impl SentimentClass {
    pub const ALL: [SentimentClass; 3] = [
        SentimentClass::Negative,
        SentimentClass::Neutral,
        SentimentClass::Positive,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SentimentClass::Negative => "negative",
            SentimentClass::Neutral => "neutral",
            SentimentClass::Positive => "positive",
        }
    }
}

impl fmt::Display for SentimentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Upper bounds (inclusive) of the negative and neutral classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassBoundaries {
    pub negative_max: u8,
    pub neutral_max: u8,
}

impl Default for ClassBoundaries {
    fn default() -> Self {
        Self {
            negative_max: 3,
            neutral_max: 7,
        }
    }
}

/// Rounds half-up to the nearest integer rating. Values within 1e-9 below a
/// `.5` boundary round up.
pub fn round_score(score: f64) -> Result<u8, ScoreRangeError> {
    if !score.is_finite() || !(1.0 - 1e-9..=10.0 + 1e-9).contains(&score) {
        return Err(ScoreRangeError(score));
    }
    Ok((score + 0.5 + 1e-9).floor().clamp(1.0, 10.0) as u8)
}

impl ClassBoundaries {
    pub fn classify(&self, score: f64) -> Result<SentimentClass, ScoreRangeError> {
        let rating = round_score(score)?;
        Ok(if rating <= self.negative_max {
            SentimentClass::Negative
        } else if rating <= self.neutral_max {
            SentimentClass::Neutral
        } else {
            SentimentClass::Positive
        })
    }
}

/// Class of a score under the default 1-3 / 4-7 / 8-10 boundaries.
pub fn sentiment_class(score: f64) -> Result<SentimentClass, ScoreRangeError> {
    ClassBoundaries::default().classify(score)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BucketKey {
    pub hotel_id: String,
    pub sentiment: SentimentClass,
    pub bin: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "tw")]
    Tw,
    #[serde(rename = "cn")]
    Cn,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Tw, Side::Cn];

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Tw => "tw",
            Side::Cn => "cn",
        }
    }

    pub fn variety(self) -> Variety {
        match self {
            Side::Tw => Variety::TW,
            Side::Cn => Variety::CN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewPair {
    pub pair_id: String,
    pub key: BucketKey,
    #[serde(rename = "tw_record")]
    pub tw: ReviewRecord,
    #[serde(rename = "cn_record")]
    pub cn: ReviewRecord,
}

impl ReviewPair {
    pub fn side(&self, side: Side) -> &ReviewRecord {
        match side {
            Side::Tw => &self.tw,
            Side::Cn => &self.cn,
        }
    }

    /// Long when either member is long.
    pub fn length_group(&self, config: &LengthConfig) -> LengthGroup {
        let longest = review_length(&self.tw).max(review_length(&self.cn));
        config.group(longest)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingConfig {
    pub boundaries: ClassBoundaries,
    pub length: LengthConfig,
}

/// Pairs plus what was left out and why.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairingOutcome {
    pub pairs: Vec<ReviewPair>,
    /// Records over the length cap.
    pub too_long: usize,
    /// Records without any characters.
    pub empty: usize,
    /// Records passed in on the wrong side or with an unusable score.
    pub invalid: usize,
    pub unpaired_tw: usize,
    pub unpaired_cn: usize,
}

/// Stable id for a pair, salted by `seed`.
pub fn pair_id(seed: u64, tw_id: &str, cn_id: &str) -> String {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tw_id.as_bytes());
    h.update([0u8]);
    h.update(cn_id.as_bytes());
    hex::encode(h.finalize())[..16].to_string()
}

pub fn bucket_key(record: &ReviewRecord, config: &PairingConfig) -> Option<BucketKey> {
    let count = review_length(record);
    if !config.length.admits(count) {
        return None;
    }
    Some(BucketKey {
        hotel_id: record.hotel_id.clone(),
        sentiment: config.boundaries.classify(record.score).ok()?,
        bin: config.length.bin(count).ok()?,
    })
}

/// Builds the maximum number of same-bucket TW-CN pairs.
///
/// Within a bucket both sides are sorted by (score, length, record id) and
/// zipped. Output is in `BucketKey` order, then zip order; `seed` only salts
/// pair ids.
pub fn build_pairs(
    tw_records: &[ReviewRecord],
    cn_records: &[ReviewRecord],
    seed: u64,
    config: &PairingConfig,
) -> PairingOutcome {
    let mut outcome = PairingOutcome::default();
    let mut buckets: BTreeMap<BucketKey, [Vec<&ReviewRecord>; 2]> = BTreeMap::new();
    for (side, records) in [(Side::Tw, tw_records), (Side::Cn, cn_records)] {
        for record in records {
            if record.variety != side.variety() {
                outcome.invalid += 1;
                continue;
            }
            let count = review_length(record);
            if count == 0 {
                outcome.empty += 1;
                continue;
            }
            if count > config.length.max_len {
                outcome.too_long += 1;
                continue;
            }
            match bucket_key(record, config) {
                Some(key) => buckets.entry(key).or_default()[side as usize].push(record),
                None => outcome.invalid += 1,
            }
        }
    }
    for (key, [mut tw, mut cn]) in buckets {
        for side in [&mut tw, &mut cn] {
            side.sort_by(|a, b| {
                a.score
                    .total_cmp(&b.score)
                    .then_with(|| review_length(a).cmp(&review_length(b)))
                    .then_with(|| a.record_id.cmp(&b.record_id))
            });
        }
        let matched = tw.len().min(cn.len());
        outcome.unpaired_tw += tw.len() - matched;
        outcome.unpaired_cn += cn.len() - matched;
        for (t, c) in tw.into_iter().zip(cn) {
            outcome.pairs.push(ReviewPair {
                pair_id: pair_id(seed, &t.record_id, &c.record_id),
                key: key.clone(),
                tw: t.clone(),
                cn: c.clone(),
            });
        }
    }
    outcome
}

pub fn pairs_to_jsonl(pairs: &[ReviewPair]) -> String {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&serde_json::to_string(p).expect("pair serializes"));
        out.push('\n');
    }
    out
}
