//! Review lengths, width-10 length bins and the short/long split.
//!
//! Length is counted in Unicode scalar values over the title, positive and
//! negative parts. Separators that a renderer inserts between parts are not
//! counted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{ReviewRecord, Variety};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("length bins are defined for counts >= 1, got {0}")]
pub struct EmptyLengthError(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LengthGroup {
    Short,
    Long,
}

impl LengthGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            LengthGroup::Short => "Short",
            LengthGroup::Long => "Long",
        }
    }
}

/// Length parameters. Defaults: bins of 10, cap of 500, short means 1..=49.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthConfig {
    pub bin_width: usize,
    pub max_len: usize,
    pub short_max: usize,
}

impl Default for LengthConfig {
    fn default() -> Self {
        Self {
            bin_width: 10,
            max_len: 500,
            short_max: 49,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthInfo {
    pub char_count: usize,
    pub bin_index: usize,
    pub group: LengthGroup,
}

impl LengthConfig {
    /// `None` for records with no characters at all.
    pub fn info(&self, record: &ReviewRecord) -> Option<LengthInfo> {
        let char_count = review_length(record);
        let bin_index = self.bin(char_count).ok()?;
        Some(LengthInfo {
            char_count,
            bin_index,
            group: self.group(char_count),
        })
    }

    pub fn bin(&self, char_count: usize) -> Result<usize, EmptyLengthError> {
        if char_count == 0 {
            return Err(EmptyLengthError(char_count));
        }
        Ok((char_count - 1) / self.bin_width)
    }

    pub fn group(&self, char_count: usize) -> LengthGroup {
        if char_count <= self.short_max {
            LengthGroup::Short
        } else {
            LengthGroup::Long
        }
    }

    pub fn admits(&self, char_count: usize) -> bool {
        (1..=self.max_len).contains(&char_count)
    }
}

/// Total scalar count of the three text parts; absent parts count zero.
pub fn review_length(record: &ReviewRecord) -> usize {
    record
        .parts()
        .into_iter()
        .flatten()
        .map(|p| p.chars().count())
        .sum()
}

/// Bin of width 10: 1..=10 is bin 0, 11..=20 is bin 1, and so on.
pub fn length_bin(char_count: usize) -> Result<usize, EmptyLengthError> {
    LengthConfig::default().bin(char_count)
}

pub fn length_group(char_count: usize) -> LengthGroup {
    LengthConfig::default().group(char_count)
}

/// Per-variety counts of records per length bin. Records over the cap land
/// in `over_cap`, zero-length ones in `empty`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LengthHistogram {
    pub bins: BTreeMap<Variety, BTreeMap<usize, usize>>,
    pub over_cap: BTreeMap<Variety, usize>,
    pub empty: BTreeMap<Variety, usize>,
}

pub fn length_histogram(records: &[ReviewRecord], config: &LengthConfig) -> LengthHistogram {
    let mut hist = LengthHistogram::default();
    for record in records {
        let count = review_length(record);
        if count == 0 {
            *hist.empty.entry(record.variety).or_default() += 1;
        } else if count > config.max_len {
            *hist.over_cap.entry(record.variety).or_default() += 1;
        } else {
            let bin = config.bin(count).expect("count >= 1");
            *hist
                .bins
                .entry(record.variety)
                .or_default()
                .entry(bin)
                .or_default() += 1;
        }
    }
    hist
}

impl LengthHistogram {
    pub fn to_markdown(&self, config: &LengthConfig) -> String {
        let varieties: Vec<Variety> = self.bins.keys().copied().collect();
        let mut out = String::from("| bin | range |");
        for v in &varieties {
            out.push_str(&format!(" {v} |"));
        }
        out.push_str("\n|---|---|");
        out.push_str(&"---:|".repeat(varieties.len()));
        out.push('\n');
        let max_bin = self
            .bins
            .values()
            .flat_map(|b| b.keys().copied())
            .max()
            .unwrap_or(0);
        for bin in 0..=max_bin {
            let lo = bin * config.bin_width + 1;
            let hi = lo + config.bin_width - 1;
            out.push_str(&format!("| {bin} | {lo}-{hi} |"));
            for v in &varieties {
                let n = self.bins[v].get(&bin).copied().unwrap_or(0);
                out.push_str(&format!(" {n} |"));
            }
            out.push('\n');
        }
        for (v, n) in &self.over_cap {
            out.push_str(&format!("\n{v}: {n} over {} characters", config.max_len));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::record_with;

    #[test]
    fn counts_scalars_across_parts() {
        assert_eq!(review_length(&record_with(Some("好"), None, None)), 1);
        assert_eq!(review_length(&record_with(Some("ab"), Some("cd"), Some("e"))), 5);
        let long = "好".repeat(60);
        let r = record_with(None, Some(&long), None);
        assert_eq!(LengthConfig::default().info(&r).unwrap().group, LengthGroup::Long);
    }

    #[test]
    fn bin_boundaries() {
        assert_eq!(length_bin(1), Ok(0));
        assert_eq!(length_bin(10), Ok(0));
        assert_eq!(length_bin(11), Ok(1));
        assert_eq!(length_bin(500), Ok(49));
        assert_eq!(length_bin(0), Err(EmptyLengthError(0)));
        let config = LengthConfig::default();
        assert!(config.admits(500));
        assert!(!config.admits(501));
        assert!(!config.admits(0));
    }

    #[test]
    fn short_long_boundary() {
        assert_eq!(length_group(1), LengthGroup::Short);
        assert_eq!(length_group(49), LengthGroup::Short);
        assert_eq!(length_group(50), LengthGroup::Long);
    }

    #[test]
    fn empty_record_has_no_length_info() {
        assert_eq!(LengthConfig::default().info(&record_with(None, None, None)), None);
    }

    #[test]
    fn histogram_splits_over_cap() {
        let long = "x".repeat(501);
        let records = vec![
            record_with(Some("abc"), None, None),
            record_with(Some(&long), None, None),
            record_with(None, None, None),
        ];
        let hist = length_histogram(&records, &LengthConfig::default());
        assert_eq!(hist.bins[&Variety::TW][&0], 1);
        assert_eq!(hist.over_cap[&Variety::TW], 1);
        assert_eq!(hist.empty[&Variety::TW], 1);
    }

    proptest::proptest! {
        #[test]
        fn same_bin_means_close(a in 1usize..2000, b in 1usize..2000) {
            if length_bin(a) == length_bin(b) {
                proptest::prop_assert!(a.abs_diff(b) < 10);
            }
        }

        #[test]
        fn length_ignores_part_order(a in ".{0,20}", b in ".{0,20}", c in ".{0,20}") {
            let x = record_with(Some(&a), Some(&b), Some(&c));
            let y = record_with(Some(&c), Some(&a), Some(&b));
            proptest::prop_assert_eq!(review_length(&x), review_length(&y));
        }
    }
}
