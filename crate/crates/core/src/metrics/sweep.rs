//! Sentiment accuracy by text length: up to `per_bin_quota` reviews per
//! (length bin, sentiment class), each labelled by the endpoint with the
//! three-way sentiment prompt.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ingest::{ReviewRecord, Variety};
use crate::llm::{run_items, EvalItem, ModelEndpoint};
use crate::pairing::{ClassBoundaries, SentimentClass, Side};
use crate::prompting::{fnv1a64, PromptVariant, SplitMix64};
use crate::textstats::{review_length, LengthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub bin_width: usize,
    pub max_len: usize,
    pub per_bin_quota: usize,
    pub seed: u64,
    pub boundaries: ClassBoundaries,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            bin_width: 10,
            max_len: 500,
            per_bin_quota: 200,
            seed: 0,
            boundaries: ClassBoundaries::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassCell {
    pub available: usize,
    pub used: usize,
    pub valid: usize,
    pub correct: usize,
    /// Replies outside {positive, negative, neutral}.
    pub excluded: usize,
    pub shortfall: bool,
}

impl ClassCell {
    pub fn accuracy(&self) -> Option<f64> {
        (self.valid > 0).then(|| 100.0 * self.correct as f64 / self.valid as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub bin: usize,
    pub lo: usize,
    pub hi: usize,
    /// Classes without any sample in this bin are absent.
    pub classes: BTreeMap<SentimentClass, ClassCell>,
}

impl SweepRow {
    pub fn overall_accuracy(&self) -> Option<f64> {
        let valid: usize = self.classes.values().map(|c| c.valid).sum();
        let correct: usize = self.classes.values().map(|c| c.correct).sum();
        (valid > 0).then(|| 100.0 * correct as f64 / valid as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub issued: usize,
    pub excluded: usize,
}

/// Exact label after trimming and lowercasing.
pub fn parse_sentiment_label(raw: &str) -> Option<SentimentClass> {
    match raw.trim().to_lowercase().as_str() {
        "positive" => Some(SentimentClass::Positive),
        "neutral" => Some(SentimentClass::Neutral),
        "negative" => Some(SentimentClass::Negative),
        _ => None,
    }
}

pub fn length_sweep(
    records: &[ReviewRecord],
    config: &SweepConfig,
    endpoint: &dyn ModelEndpoint,
    parallelism: usize,
) -> SweepTable {
    let length = LengthConfig {
        bin_width: config.bin_width,
        max_len: config.max_len,
        ..LengthConfig::default()
    };
    let mut groups: BTreeMap<(usize, SentimentClass), Vec<&ReviewRecord>> = BTreeMap::new();
    for record in records {
        let count = review_length(record);
        if !length.admits(count) {
            continue;
        }
        let Ok(class) = config.boundaries.classify(record.score) else {
            continue;
        };
        let bin = length.bin(count).expect("admitted count >= 1");
        groups.entry((bin, class)).or_default().push(record);
    }

    let salt = SplitMix64::new(config.seed).next_u64();
    let mut chosen: Vec<(usize, SentimentClass, &ReviewRecord)> = Vec::new();
    let mut cells: BTreeMap<usize, BTreeMap<SentimentClass, ClassCell>> = BTreeMap::new();
    for ((bin, class), mut members) in groups {
        members.sort_by_key(|r| (fnv1a64(r.record_id.as_bytes()) ^ salt, r.record_id.clone()));
        let used = members.len().min(config.per_bin_quota);
        cells.entry(bin).or_default().insert(
            class,
            ClassCell {
                available: members.len(),
                used,
                shortfall: used < config.per_bin_quota,
                ..ClassCell::default()
            },
        );
        chosen.extend(members.into_iter().take(used).map(|r| (bin, class, r)));
    }

    let items: Vec<EvalItem<'_>> = chosen
        .iter()
        .map(|(_, _, r)| EvalItem {
            pair_id: &r.record_id,
            side: if r.variety == Variety::CN { Side::Cn } else { Side::Tw },
            record: r,
        })
        .collect();
    let results = run_items(&items, endpoint, PromptVariant::Sentiment, config.seed, parallelism);
    let by_key: BTreeMap<(&str, Side), &crate::llm::CompletionResult> = results
        .iter()
        .map(|r| ((r.pair_id.as_str(), r.side), r))
        .collect();

    let mut table = SweepTable {
        issued: results.len(),
        ..SweepTable::default()
    };
    for (item, (bin, class, _)) in items.iter().zip(&chosen) {
        let cell = cells
            .get_mut(bin)
            .and_then(|c| c.get_mut(class))
            .expect("cell exists for chosen record");
        let label = by_key
            .get(&(item.pair_id, item.side))
            .and_then(|r| r.raw_text.as_deref())
            .and_then(parse_sentiment_label);
        match label {
            Some(predicted) => {
                cell.valid += 1;
                if predicted == *class {
                    cell.correct += 1;
                }
            }
            None => {
                cell.excluded += 1;
                table.excluded += 1;
            }
        }
    }
    table.rows = cells
        .into_iter()
        .map(|(bin, classes)| SweepRow {
            bin,
            lo: bin * config.bin_width + 1,
            hi: (bin + 1) * config.bin_width,
            classes,
        })
        .collect();
    table
}

impl SweepTable {
    pub fn to_markdown(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |a| format!("{a:.1}"));
        let mut out = String::from(
            "| bin | range | negative | neutral | positive | overall | n | shortfall |\n|---|---|---:|---:|---:|---:|---:|---|\n",
        );
        for row in &self.rows {
            let cell = |c: SentimentClass| fmt(row.classes.get(&c).and_then(ClassCell::accuracy));
            let n: usize = row.classes.values().map(|c| c.used).sum();
            let short: Vec<&str> = row
                .classes
                .iter()
                .filter(|(_, c)| c.shortfall)
                .map(|(k, _)| k.label())
                .collect();
            out.push_str(&format!(
                "| {} | {}-{} | {} | {} | {} | {} | {} | {} |\n",
                row.bin,
                row.lo,
                row.hi,
                cell(SentimentClass::Negative),
                cell(SentimentClass::Neutral),
                cell(SentimentClass::Positive),
                fmt(row.overall_accuracy()),
                n,
                short.join(", "),
            ));
        }
        out.push_str(&format!(
            "\n{} requests, {} replies outside the label set excluded.\n",
            self.issued, self.excluded
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::llm::MockEndpoint;
    use crate::script::CharSetTables;
    use crate::test_support::review;

    fn mock(spec: &str) -> MockEndpoint {
        MockEndpoint::parse(spec, Arc::new(CharSetTables::bundled())).unwrap()
    }

    #[test]
    fn label_parsing() {
        assert_eq!(parse_sentiment_label(" Positive\n"), Some(SentimentClass::Positive));
        assert_eq!(parse_sentiment_label("The sentiment is positive"), None);
        assert_eq!(parse_sentiment_label(""), None);
    }

    #[test]
    fn echo_is_perfect_and_missing_classes_are_omitted() {
        let mut records = Vec::new();
        for i in 0..30 {
            records.push(review(&format!("p{i}"), "h", Variety::TW, 9.0, 5 + i % 20));
        }
        for i in 0..5 {
            records.push(review(&format!("n{i}"), "h", Variety::CN, 2.0, 15));
        }
        let table = length_sweep(&records, &SweepConfig::default(), &mock("mock:echo"), 4);
        assert_eq!(table.excluded, 0);
        for row in &table.rows {
            assert_eq!(row.overall_accuracy(), Some(100.0));
            assert!(!row.classes.contains_key(&SentimentClass::Neutral));
        }
        assert!(!table.rows[0].classes.contains_key(&SentimentClass::Negative));
        assert!(table.rows[1].classes.contains_key(&SentimentClass::Negative));
    }

    #[test]
    fn quota_shortfall() {
        let records: Vec<_> = (0..150).map(|i| review(&format!("r{i}"), "h", Variety::TW, 9.0, 5)).collect();
        let table = length_sweep(&records, &SweepConfig::default(), &mock("mock:echo"), 2);
        let cell = table.rows[0].classes[&SentimentClass::Positive];
        assert_eq!((cell.available, cell.used, cell.shortfall), (150, 150, true));
        let config = SweepConfig { per_bin_quota: 100, ..SweepConfig::default() };
        let cell = length_sweep(&records, &config, &mock("mock:echo"), 2).rows[0].classes[&SentimentClass::Positive];
        assert_eq!((cell.used, cell.shortfall), (100, false));
    }

    #[test]
    fn numeric_replies_are_excluded() {
        let records: Vec<_> = (0..10).map(|i| review(&format!("r{i}"), "h", Variety::TW, 9.0, 5)).collect();
        let table = length_sweep(&records, &SweepConfig::default(), &mock("mock:constant-5"), 2);
        assert_eq!(table.excluded, 10);
        assert_eq!(table.rows[0].overall_accuracy(), None);
    }

    #[test]
    fn over_cap_records_are_ignored() {
        let records = vec![review("r", "h", Variety::TW, 9.0, 501)];
        let table = length_sweep(&records, &SweepConfig::default(), &mock("mock:echo"), 1);
        assert!(table.rows.is_empty());
        assert_eq!(table.issued, 0);
    }
}
