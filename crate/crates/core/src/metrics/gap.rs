//! Per-split TW vs CN comparison rows.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::stats::{paired_t_test, stars, TTest};
use crate::pairing::{round_score, ReviewPair, Side};
use crate::prompting::PromptVariant;
use crate::script::{ProfileIndex, Subset};
use crate::textstats::{LengthConfig, LengthGroup};
use crate::validate::OutcomeIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LengthSplit {
    Overall,
    Short,
    Long,
}

impl LengthSplit {
    pub const ALL: [LengthSplit; 3] = [LengthSplit::Overall, LengthSplit::Short, LengthSplit::Long];

    pub fn as_str(self) -> &'static str {
        match self {
            LengthSplit::Overall => "Overall",
            LengthSplit::Short => "Short",
            LengthSplit::Long => "Long",
        }
    }

    fn admits(self, group: LengthGroup) -> bool {
        match self {
            LengthSplit::Overall => true,
            LengthSplit::Short => group == LengthGroup::Short,
            LengthSplit::Long => group == LengthGroup::Long,
        }
    }
}

impl fmt::Display for LengthSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A prediction next to its integer truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scored {
    pub prediction: u8,
    pub truth: u8,
}

impl Scored {
    fn correct(self) -> f64 {
        if self.prediction == self.truth {
            1.0
        } else {
            0.0
        }
    }

    fn squared_error(self) -> f64 {
        (self.prediction as f64 - self.truth as f64).powi(2)
    }
}

/// Acc/MSE on both sides of a set of pairs, with paired tests on the
/// per-pair differences (cn − tw).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GapStats {
    pub n_pairs: usize,
    pub acc_tw: Option<f64>,
    pub acc_cn: Option<f64>,
    pub mse_tw: Option<f64>,
    pub mse_cn: Option<f64>,
    pub acc_test: Option<TTest>,
    pub mse_test: Option<TTest>,
}

impl GapStats {
    pub fn delta_acc(&self) -> Option<f64> {
        Some(self.acc_cn? - self.acc_tw?)
    }

    pub fn delta_mse(&self) -> Option<f64> {
        Some(self.mse_cn? - self.mse_tw?)
    }
}

/// `items` holds (tw, cn) per pair.
pub fn gap_stats(items: &[(Scored, Scored)]) -> GapStats {
    let n = items.len();
    if n == 0 {
        return GapStats::default();
    }
    let mean = |f: &dyn Fn(&(Scored, Scored)) -> f64| items.iter().map(f).sum::<f64>() / n as f64;
    let acc_diffs: Vec<f64> = items.iter().map(|(t, c)| c.correct() - t.correct()).collect();
    let mse_diffs: Vec<f64> = items
        .iter()
        .map(|(t, c)| c.squared_error() - t.squared_error())
        .collect();
    GapStats {
        n_pairs: n,
        acc_tw: Some(100.0 * mean(&|(t, _)| t.correct())),
        acc_cn: Some(100.0 * mean(&|(_, c)| c.correct())),
        mse_tw: Some(mean(&|(t, _)| t.squared_error())),
        mse_cn: Some(mean(&|(_, c)| c.squared_error())),
        acc_test: paired_t_test(&acc_diffs).ok(),
        mse_test: paired_t_test(&mse_diffs).ok(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReportRow {
    pub model: String,
    pub variant: PromptVariant,
    pub length_group: LengthSplit,
    pub subset: Subset,
    pub n_pairs: usize,
    pub acc_tw: Option<f64>,
    pub acc_cn: Option<f64>,
    pub delta_acc: Option<f64>,
    pub mse_tw: Option<f64>,
    pub mse_cn: Option<f64>,
    pub delta_mse: Option<f64>,
    pub t_acc: Option<f64>,
    pub p_acc: Option<f64>,
    pub stars_acc: String,
    pub t_mse: Option<f64>,
    pub p_mse: Option<f64>,
    pub stars_mse: String,
}

impl GapReportRow {
    pub fn from_stats(
        model: &str,
        variant: PromptVariant,
        length_group: LengthSplit,
        subset: Subset,
        stats: &GapStats,
    ) -> Self {
        Self {
            model: model.to_string(),
            variant,
            length_group,
            subset,
            n_pairs: stats.n_pairs,
            acc_tw: stats.acc_tw,
            acc_cn: stats.acc_cn,
            delta_acc: stats.delta_acc(),
            mse_tw: stats.mse_tw,
            mse_cn: stats.mse_cn,
            delta_mse: stats.delta_mse(),
            t_acc: stats.acc_test.map(|t| t.t),
            p_acc: stats.acc_test.map(|t| t.p),
            stars_acc: stats.acc_test.map_or("", |t| stars(t.p)).to_string(),
            t_mse: stats.mse_test.map(|t| t.t),
            p_mse: stats.mse_test.map(|t| t.p),
            stars_mse: stats.mse_test.map_or("", |t| stars(t.p)).to_string(),
        }
    }
}

/// Scored (tw, cn) for a pair when both sides have a valid prediction.
pub fn scored_pair(pair: &ReviewPair, outcomes: &OutcomeIndex) -> Option<(Scored, Scored)> {
    let side = |s: Side| -> Option<Scored> {
        let outcome = outcomes.get(&(pair.pair_id.clone(), s))?;
        Some(Scored {
            prediction: outcome.parsed_score?,
            truth: round_score(pair.side(s).score).ok()?,
        })
    };
    Some((side(Side::Tw)?, side(Side::Cn)?))
}

/// Rows for every (subset, length split) over complete pairs, subset-major.
pub fn gap_rows(
    model: &str,
    variant: PromptVariant,
    pairs: &[ReviewPair],
    outcomes: &OutcomeIndex,
    profiles: &ProfileIndex,
    subsets: &[Subset],
    length: &LengthConfig,
) -> Vec<GapReportRow> {
    let scored: Vec<(&ReviewPair, LengthGroup, (Scored, Scored))> = pairs
        .iter()
        .filter_map(|p| Some((p, p.length_group(length), scored_pair(p, outcomes)?)))
        .collect();
    let mut rows = Vec::new();
    for &subset in subsets {
        for split in LengthSplit::ALL {
            let items: Vec<(Scored, Scored)> = scored
                .iter()
                .filter(|(p, group, _)| {
                    split.admits(*group) && subset_admits(subset, p, profiles)
                })
                .map(|(_, _, s)| *s)
                .collect();
            rows.push(GapReportRow::from_stats(
                model,
                variant,
                split,
                subset,
                &gap_stats(&items),
            ));
        }
    }
    rows
}

fn subset_admits(subset: Subset, pair: &ReviewPair, profiles: &ProfileIndex) -> bool {
    if subset == Subset::All {
        return true;
    }
    match (profiles.get(&pair.tw.record_id), profiles.get(&pair.cn.record_id)) {
        (Some(&tw), Some(&cn)) => subset.admits(tw, cn),
        _ => false,
    }
}

/// Paired test of raw scores (cn − tw) across pairs: do the two sides rate
/// differently?
pub fn score_difference_test(pairs: &[ReviewPair]) -> Option<TTest> {
    let diffs: Vec<f64> = pairs.iter().map(|p| p.cn.score - p.tw.score).collect();
    paired_t_test(&diffs).ok()
}
