//! Strict parsing of model replies and the pair-completeness filter.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::llm::CompletionResult;
use crate::pairing::{ReviewPair, Side};
use crate::prompting::PromptVariant;
use crate::textstats::{LengthConfig, LengthGroup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InvalidReason {
    NonNumeric,
    OutOfRange,
    ExtraText,
    Empty,
    Transport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionOutcome {
    pub pair_id: String,
    pub side: Side,
    pub review_ref: String,
    pub parsed_score: Option<u8>,
    pub invalid_reason: Option<InvalidReason>,
}

impl PredictionOutcome {
    pub fn is_valid(&self) -> bool {
        self.parsed_score.is_some()
    }
}

/// Accepts a bare integer 1..=10, optionally surrounded by whitespace.
///
/// Anything else is classified: an integer outside the scale is
/// `OutOfRange`, text containing a digit (`"7/10"`, `"7."`, `"The score is
/// 7"`) is `ExtraText`, text without digits is `NonNumeric`.
pub fn parse_prediction(raw: &str) -> Result<u8, InvalidReason> {
    let s = raw.trim();
    if s.is_empty() {
        return Err(InvalidReason::Empty);
    }
    let digits = s.strip_prefix(['+', '-']).unwrap_or(s);
    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
        if s.starts_with('-') {
            return Err(InvalidReason::OutOfRange);
        }
        return match digits.trim_start_matches('0').parse::<u8>() {
            Ok(n) if (1..=10).contains(&n) => Ok(n),
            _ => Err(InvalidReason::OutOfRange),
        };
    }
    if s.chars().any(|c| c.is_ascii_digit()) {
        Err(InvalidReason::ExtraText)
    } else {
        Err(InvalidReason::NonNumeric)
    }
}

pub fn outcome_of(result: &CompletionResult) -> PredictionOutcome {
    let parsed = match (&result.raw_text, &result.transport_error) {
        (Some(text), _) => parse_prediction(text),
        (None, _) => Err(InvalidReason::Transport),
    };
    PredictionOutcome {
        pair_id: result.pair_id.clone(),
        side: result.side,
        review_ref: result.review_ref.clone(),
        parsed_score: parsed.ok(),
        invalid_reason: parsed.err(),
    }
}

pub fn outcomes_of(results: &[CompletionResult]) -> Vec<PredictionOutcome> {
    results.iter().map(outcome_of).collect()
}

/// Outcomes keyed by (pair_id, side).
pub type OutcomeIndex = HashMap<(String, Side), PredictionOutcome>;

pub fn index_outcomes(outcomes: &[PredictionOutcome]) -> OutcomeIndex {
    outcomes
        .iter()
        .map(|o| ((o.pair_id.clone(), o.side), o.clone()))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Completeness {
    pub complete: BTreeSet<String>,
    pub issued: usize,
    pub valid: usize,
    pub invalid: usize,
    pub invalid_tw: usize,
    pub invalid_cn: usize,
    pub invalid_by_reason: BTreeMap<InvalidReason, usize>,
}

/// Pair ids with a valid prediction on both sides, plus request accounting.
pub fn complete_pairs(outcomes: &[PredictionOutcome]) -> Completeness {
    let mut report = Completeness::default();
    let mut valid_sides: BTreeMap<&str, [bool; 2]> = BTreeMap::new();
    for o in outcomes {
        report.issued += 1;
        let slot = valid_sides.entry(&o.pair_id).or_default();
        if o.is_valid() {
            report.valid += 1;
            slot[o.side as usize] = true;
        } else {
            report.invalid += 1;
            match o.side {
                Side::Tw => report.invalid_tw += 1,
                Side::Cn => report.invalid_cn += 1,
            }
            if let Some(reason) = o.invalid_reason {
                *report.invalid_by_reason.entry(reason).or_default() += 1;
            }
        }
    }
    report.complete = valid_sides
        .into_iter()
        .filter(|(_, sides)| sides[0] && sides[1])
        .map(|(id, _)| id.to_string())
        .collect();
    report
}

/// Counts for one (model, variant, length group) cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityCell {
    pub issued: usize,
    pub valid: usize,
    pub invalid: usize,
}

/// Valid / invalid request counts split by the pair's length group.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidityTable {
    /// (model, variant) -> [All, Short, Long]
    pub cells: BTreeMap<(String, PromptVariant), [ValidityCell; 3]>,
}

impl ValidityTable {
    pub fn add_run(
        &mut self,
        model: &str,
        variant: PromptVariant,
        outcomes: &[PredictionOutcome],
        pairs: &[ReviewPair],
        length: &LengthConfig,
    ) {
        let groups: HashMap<&str, LengthGroup> = pairs
            .iter()
            .map(|p| (p.pair_id.as_str(), p.length_group(length)))
            .collect();
        let row = self
            .cells
            .entry((model.to_string(), variant))
            .or_default();
        for o in outcomes {
            let group = groups.get(o.pair_id.as_str()).copied();
            let columns = [
                Some(0),
                (group == Some(LengthGroup::Short)).then_some(1),
                (group == Some(LengthGroup::Long)).then_some(2),
            ];
            for col in columns.into_iter().flatten() {
                let cell = &mut row[col];
                cell.issued += 1;
                if o.is_valid() {
                    cell.valid += 1;
                } else {
                    cell.invalid += 1;
                }
            }
        }
    }

    fn render(&self, value: impl Fn(&ValidityCell) -> String) -> String {
        let variants = [PromptVariant::Plain, PromptVariant::Shuffled, PromptVariant::Structured];
        let mut out = String::from("| model |");
        for group in ["All", "Short", "Long"] {
            for v in variants {
                out.push_str(&format!(" {group} {} |", v.as_str()));
            }
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(9));
        out.push('\n');
        let models: BTreeSet<&String> = self.cells.keys().map(|(m, _)| m).collect();
        for model in models {
            out.push_str(&format!("| {model} |"));
            for col in 0..3 {
                for v in variants {
                    match self.cells.get(&(model.clone(), v)) {
                        Some(cells) => out.push_str(&format!(" {} |", value(&cells[col]))),
                        None => out.push_str(" - |"),
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    /// Valid prediction counts, then invalid counts shown as negatives.
    pub fn to_markdown(&self) -> String {
        format!(
            "Valid predictions\n\n{}\nInvalid predictions\n\n{}",
            self.render(|c| c.valid.to_string()),
            self.render(|c| if c.invalid == 0 { "0".to_string() } else { format!("-{}", c.invalid) }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(pair: &str, side: Side, score: Option<u8>) -> PredictionOutcome {
        PredictionOutcome {
            pair_id: pair.into(),
            side,
            review_ref: format!("{pair}-{side:?}"),
            parsed_score: score,
            invalid_reason: score.is_none().then_some(InvalidReason::ExtraText),
        }
    }

    #[test]
    fn parse_examples() {
        assert_eq!(parse_prediction("7"), Ok(7));
        assert_eq!(parse_prediction("10"), Ok(10));
        assert_eq!(parse_prediction("  9\n"), Ok(9));
        assert_eq!(parse_prediction("The score is 7"), Err(InvalidReason::ExtraText));
        assert_eq!(parse_prediction("11"), Err(InvalidReason::OutOfRange));
        assert_eq!(parse_prediction("0"), Err(InvalidReason::OutOfRange));
        assert_eq!(parse_prediction("-3"), Err(InvalidReason::OutOfRange));
        assert_eq!(parse_prediction("99999999999999999999"), Err(InvalidReason::OutOfRange));
        assert_eq!(parse_prediction("7."), Err(InvalidReason::ExtraText));
        assert_eq!(parse_prediction("7/10"), Err(InvalidReason::ExtraText));
        assert_eq!(parse_prediction(""), Err(InvalidReason::Empty));
        assert_eq!(parse_prediction(" \n"), Err(InvalidReason::Empty));
        assert_eq!(parse_prediction("excellent"), Err(InvalidReason::NonNumeric));
        assert_eq!(parse_prediction("7 8"), Err(InvalidReason::ExtraText));
    }

    #[test]
    fn completeness_and_accounting() {
        let outcomes = vec![
            outcome("a", Side::Tw, Some(7)),
            outcome("a", Side::Cn, Some(8)),
            outcome("b", Side::Tw, Some(7)),
            outcome("b", Side::Cn, None),
        ];
        let c = complete_pairs(&outcomes);
        assert_eq!(c.complete.iter().collect::<Vec<_>>(), ["a"]);
        assert_eq!((c.valid, c.invalid, c.issued), (3, 1, 4));
        assert_eq!((c.invalid_tw, c.invalid_cn), (0, 1));
    }

    #[test]
    fn ten_pairs_two_excluded() {
        let mut outcomes = Vec::new();
        for i in 0..10 {
            let id = format!("p{i}");
            outcomes.push(outcome(&id, Side::Tw, (i != 3).then_some(5)));
            outcomes.push(outcome(&id, Side::Cn, (i != 6).then_some(5)));
        }
        let c = complete_pairs(&outcomes);
        assert_eq!(c.complete.len(), 8);
        assert_eq!(c.complete.len(), outcomes.len() / 2 - 2);
    }

    #[test]
    fn transport_failures_are_invalid() {
        let r = CompletionResult {
            pair_id: "p".into(),
            side: Side::Tw,
            review_ref: "r".into(),
            variant: PromptVariant::Plain,
            raw_text: None,
            transport_error: Some("reset".into()),
            attempt_count: 4,
            latency_ms: 0,
        };
        assert_eq!(outcome_of(&r).invalid_reason, Some(InvalidReason::Transport));
    }

    proptest::proptest! {
        #[test]
        fn adding_a_valid_outcome_never_removes_pairs(
            flags in proptest::collection::vec((0u8..6, proptest::bool::ANY, proptest::bool::ANY), 0..30),
            extra in (0u8..6, proptest::bool::ANY),
        ) {
            let mut outcomes: Vec<_> = flags
                .iter()
                .map(|&(p, tw, ok)| outcome(&format!("p{p}"), if tw { Side::Tw } else { Side::Cn }, ok.then_some(5)))
                .collect();
            let before = complete_pairs(&outcomes);
            proptest::prop_assert_eq!(before.valid + before.invalid, before.issued);
            outcomes.push(outcome(&format!("p{}", extra.0), if extra.1 { Side::Tw } else { Side::Cn }, Some(4)));
            let after = complete_pairs(&outcomes);
            proptest::prop_assert!(before.complete.is_subset(&after.complete));
        }

        #[test]
        fn every_string_gets_exactly_one_label(s in "\\PC{0,12}") {
            let parsed = parse_prediction(&s);
            if let Ok(n) = parsed {
                proptest::prop_assert!((1..=10).contains(&n));
                proptest::prop_assert_eq!(s.trim().trim_start_matches(['+', '0']), n.to_string());
            }
        }
    }
}
