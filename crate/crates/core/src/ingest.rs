//! Reading raw review exports into normalized [`ReviewRecord`]s.
//!
//! Input is line-delimited JSON, one review object per line. Source key names
//! are configurable through [`FieldMap`]; the defaults follow the Booking.com
//! export layout (`hotel__booking_id`, `user_nationality`, `score`,
//! `review_title`, `positive_review`, `negative_review`, `review_time`).

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::config::{parse_kv, ConfigError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read input: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Language variety of a reviewer, derived from the nationality field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variety {
    TW,
    CN,
    Other,
}

impl Variety {
    pub fn as_str(self) -> &'static str {
        match self {
            Variety::TW => "TW",
            Variety::CN => "CN",
            Variety::Other => "Other",
        }
    }
}

impl fmt::Display for Variety {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Direction a record was machine-translated in, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TranslationDirection {
    #[serde(rename = "TW_to_CN")]
    TwToCn,
    #[serde(rename = "CN_to_TW")]
    CnToTw,
}

/// One normalized review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub record_id: String,
    pub hotel_id: String,
    pub variety: Variety,
    pub score: f64,
    pub title: Option<String>,
    pub positive: Option<String>,
    pub negative: Option<String>,
    pub review_time: Option<String>,
    /// Set when the text parts are a machine translation of the original.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translated: Option<TranslationDirection>,
}

impl ReviewRecord {
    /// The three text parts in canonical order: title, positive, negative.
    pub fn parts(&self) -> [Option<&str>; 3] {
        [
            self.title.as_deref(),
            self.positive.as_deref(),
            self.negative.as_deref(),
        ]
    }

    /// Parts that contain something other than whitespace, in canonical order.
    pub fn nonempty_parts(&self) -> Vec<&str> {
        self.parts()
            .into_iter()
            .flatten()
            .filter(|p| !p.trim().is_empty())
            .collect()
    }

    pub fn is_nonempty(&self) -> bool {
        !self.nonempty_parts().is_empty()
    }
}

/// Source key names and nationality codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldMap {
    pub record_id: String,
    pub hotel_id: String,
    pub nationality: String,
    pub score: String,
    pub title: String,
    pub positive: String,
    pub negative: String,
    pub review_time: String,
    pub tw_code: String,
    pub cn_code: String,
}

impl Default for FieldMap {
    fn default() -> Self {
        Self {
            record_id: "record_id".into(),
            hotel_id: "hotel__booking_id".into(),
            nationality: "user_nationality".into(),
            score: "score".into(),
            title: "review_title".into(),
            positive: "positive_review".into(),
            negative: "negative_review".into(),
            review_time: "review_time".into(),
            tw_code: "tw".into(),
            cn_code: "cn".into(),
        }
    }
}

impl FieldMap {
    /// Overrides defaults from a flat `key = value` file. Keys are the
    /// canonical field names (`hotel_id`, `score`, ...) plus `tw_code` and
    /// `cn_code`.
    pub fn from_kv_text(text: &str) -> Result<Self, ConfigError> {
        let kv = parse_kv(text)?;
        Self::from_kv(&kv)
    }

    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let mut map = Self::default();
        for (key, value) in kv {
            let slot = match key.as_str() {
                "record_id" => &mut map.record_id,
                "hotel_id" => &mut map.hotel_id,
                "nationality" => &mut map.nationality,
                "score" => &mut map.score,
                "title" => &mut map.title,
                "positive" => &mut map.positive,
                "negative" => &mut map.negative,
                "review_time" => &mut map.review_time,
                "tw_code" => &mut map.tw_code,
                "cn_code" => &mut map.cn_code,
                _ => return Err(ConfigError::UnknownKey(key.clone())),
            };
            *slot = value.clone();
        }
        Ok(map)
    }

    pub fn variety_of(&self, nationality: Option<&str>) -> Variety {
        match nationality.map(|n| n.trim()) {
            Some(n) if n.eq_ignore_ascii_case(&self.tw_code) => Variety::TW,
            Some(n) if n.eq_ignore_ascii_case(&self.cn_code) => Variety::CN,
            _ => Variety::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    BadScore,
    MissingVenue,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::BadScore => "bad_score",
            RejectReason::MissingVenue => "missing_venue",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    Blank,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based input line number.
    pub line: usize,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skip {
    pub line: usize,
    pub reason: SkipReason,
}

/// Everything [`parse_records`] saw, line by line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub records: Vec<ReviewRecord>,
    pub skipped: Vec<Skip>,
    pub rejected: Vec<Rejection>,
    pub lines: usize,
}

impl IngestReport {
    /// One line per rejected record: `<line>\t<reason>`.
    pub fn reject_log(&self) -> String {
        self.rejected
            .iter()
            .map(|r| format!("{}\t{}\n", r.line, r.reason.as_str()))
            .collect()
    }
}

/// Parses line-delimited review objects.
///
/// Every input line ends up in exactly one of `records`, `skipped` or
/// `rejected`. Records without a source id get `"{id_prefix}-{line}"`.
pub fn parse_records<R: BufRead>(
    mut input: R,
    fields: &FieldMap,
    id_prefix: &str,
) -> Result<IngestReport, IngestError> {
    let mut report = IngestReport::default();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if input.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        report.lines += 1;
        let line_no = report.lines;
        let Ok(line) = std::str::from_utf8(&buf) else {
            report.skipped.push(Skip {
                line: line_no,
                reason: SkipReason::Malformed,
            });
            continue;
        };
        if line.trim().is_empty() {
            report.skipped.push(Skip {
                line: line_no,
                reason: SkipReason::Blank,
            });
            continue;
        }
        let object = match serde_json::from_str::<Value>(line) {
            Ok(Value::Object(object)) => object,
            _ => {
                report.skipped.push(Skip {
                    line: line_no,
                    reason: SkipReason::Malformed,
                });
                continue;
            }
        };
        match normalize(&object, fields, id_prefix, line_no) {
            Ok(record) => report.records.push(record),
            Err(reason) => report.rejected.push(Rejection {
                line: line_no,
                reason,
            }),
        }
    }
    Ok(report)
}

fn normalize(
    object: &serde_json::Map<String, Value>,
    fields: &FieldMap,
    id_prefix: &str,
    line_no: usize,
) -> Result<ReviewRecord, RejectReason> {
    let hotel_id = scalar_text(object.get(&fields.hotel_id))
        .filter(|h| !h.trim().is_empty())
        .ok_or(RejectReason::MissingVenue)?;
    let score = parse_score(object.get(&fields.score)).ok_or(RejectReason::BadScore)?;
    let record_id = scalar_text(object.get(&fields.record_id))
        .unwrap_or_else(|| format!("{id_prefix}-{line_no}"));
    let nationality = scalar_text(object.get(&fields.nationality));
    Ok(ReviewRecord {
        record_id,
        hotel_id,
        variety: fields.variety_of(nationality.as_deref()),
        score,
        title: scalar_text(object.get(&fields.title)),
        positive: scalar_text(object.get(&fields.positive)),
        negative: scalar_text(object.get(&fields.negative)),
        review_time: scalar_text(object.get(&fields.review_time)),
        translated: None,
    })
}

fn scalar_text(value: Option<&Value>) -> Option<String> {
    match value? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn parse_score(value: Option<&Value>) -> Option<f64> {
    let score = match value? {
        Value::Number(n) => n.as_f64()?,
        Value::String(s) => s.trim().parse::<f64>().ok()?,
        _ => return None,
    };
    (score.is_finite() && (1.0..=10.0).contains(&score)).then_some(score)
}

/// Keeps records with at least one non-whitespace text part.
pub fn filter_nonempty(records: Vec<ReviewRecord>) -> Vec<ReviewRecord> {
    records.into_iter().filter(ReviewRecord::is_nonempty).collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VarietySplit {
    pub tw: Vec<ReviewRecord>,
    pub cn: Vec<ReviewRecord>,
    pub excluded: usize,
}

pub fn filter_varieties(records: Vec<ReviewRecord>) -> VarietySplit {
    let mut split = VarietySplit::default();
    for record in records {
        match record.variety {
            Variety::TW => split.tw.push(record),
            Variety::CN => split.cn.push(record),
            Variety::Other => split.excluded += 1,
        }
    }
    split
}

/// Writes records as canonical line-delimited JSON.
pub fn to_jsonl(records: &[ReviewRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> IngestReport {
        parse_records(text.as_bytes(), &FieldMap::default(), "t").unwrap()
    }

    fn record(title: Option<&str>, positive: Option<&str>, negative: Option<&str>) -> ReviewRecord {
        ReviewRecord {
            record_id: "r".into(),
            hotel_id: "h".into(),
            variety: Variety::TW,
            score: 8.0,
            title: title.map(Into::into),
            positive: positive.map(Into::into),
            negative: negative.map(Into::into),
            review_time: None,
            translated: None,
        }
    }

    #[test]
    fn sample_entry_parses_as_tw() {
        let line = r#"{"hotel__booking_id":311092,"hotel__ufi":-240213,"user":"---------","user_nationality":"tw","score":10.0,"review_title":null,"positive_review":"櫃檯很友善，有事情都很熱心協助","negative_review":null,"hotel_response":null,"review_time":"2023-05-15 10:55:59+00:00"}"#;
        let report = parse(line);
        assert_eq!(report.records.len(), 1);
        let r = &report.records[0];
        assert_eq!(r.variety, Variety::TW);
        assert_eq!(r.score, 10.0);
        assert_eq!(r.hotel_id, "311092");
        assert_eq!(r.title, None);
        assert_eq!(r.negative, None);
        assert_eq!(r.record_id, "t-1");
        assert_eq!(r.review_time.as_deref(), Some("2023-05-15 10:55:59+00:00"));
    }

    #[test]
    fn all_null_text_is_parsed_then_dropped_by_nonempty_filter() {
        let line = r#"{"hotel__booking_id":1,"user_nationality":"cn","score":5,"review_title":null,"positive_review":null,"negative_review":null}"#;
        let report = parse(line);
        assert_eq!(report.records.len(), 1);
        assert!(filter_nonempty(report.records).is_empty());
    }

    #[test]
    fn rejects_out_of_range_and_non_numeric_scores() {
        let text = [
            r#"{"hotel__booking_id":1,"score":"11"}"#,
            r#"{"hotel__booking_id":1,"score":0.5}"#,
            r#"{"hotel__booking_id":1,"score":"great"}"#,
            r#"{"hotel__booking_id":1,"score":null}"#,
            r#"{"score":7}"#,
            r#"{"hotel__booking_id":"  ","score":7}"#,
        ]
        .join("\n");
        let report = parse(&text);
        let reasons: Vec<_> = report.rejected.iter().map(|r| r.reason.as_str()).collect();
        assert_eq!(
            reasons,
            ["bad_score", "bad_score", "bad_score", "bad_score", "missing_venue", "missing_venue"]
        );
        assert!(report.records.is_empty());
    }

    #[test]
    fn malformed_and_blank_lines_are_skipped_and_counted() {
        let text = "not json\n\n[1,2]\n{\"hotel__booking_id\":\"h\",\"score\":\"3\"}\n";
        let report = parse(text);
        assert_eq!(report.lines, 4);
        assert_eq!(report.skipped.len(), 3);
        assert_eq!(report.records.len(), 1);
        assert_eq!(report.records[0].score, 3.0);
    }

    #[test]
    fn invalid_utf8_line_is_malformed_not_fatal() {
        let mut bytes = b"{\"hotel__booking_id\":1,\"score\":5}\n".to_vec();
        bytes.extend_from_slice(&[0xff, 0xfe, b'\n']);
        let report = parse_records(bytes.as_slice(), &FieldMap::default(), "t").unwrap();
        assert_eq!(report.records.len(), 1);
        assert_eq!(report.skipped[0].reason, SkipReason::Malformed);
    }

    #[test]
    fn field_map_overrides_keys_and_codes() {
        let fields = FieldMap::from_kv_text("hotel_id = venue\nnationality = region\ntw_code = TWN\n").unwrap();
        let report = parse_records(
            r#"{"venue":"v9","region":"twn","score":8,"review_title":"ok"}"#.as_bytes(),
            &fields,
            "x",
        )
        .unwrap();
        assert_eq!(report.records[0].hotel_id, "v9");
        assert_eq!(report.records[0].variety, Variety::TW);
        assert!(FieldMap::from_kv_text("bogus = 1").is_err());
    }

    #[test]
    fn nonempty_filter_cases() {
        assert!(record(Some("ok"), None, None).is_nonempty());
        assert!(!record(Some(""), Some("  "), None).is_nonempty());
        let records = vec![
            record(Some("a"), None, None),
            record(None, None, None),
            record(None, Some("b"), None),
            record(Some(" "), None, Some("\t")),
            record(None, None, Some("c")),
        ];
        let kept = filter_nonempty(records);
        assert_eq!(kept.len(), 3);
        assert_eq!(filter_nonempty(kept.clone()), kept);
    }

    #[test]
    fn variety_partition() {
        let mut a = record(Some("a"), None, None);
        let mut b = a.clone();
        let mut c = a.clone();
        a.variety = Variety::TW;
        b.variety = Variety::CN;
        c.variety = Variety::Other;
        let split = filter_varieties(vec![a, b, c.clone()]);
        assert_eq!((split.tw.len(), split.cn.len(), split.excluded), (1, 1, 1));
        let split = filter_varieties(vec![c.clone(), c]);
        assert!(split.tw.is_empty() && split.cn.is_empty());
        assert_eq!(split.excluded, 2);
    }

    #[test]
    fn canonical_round_trip() {
        let r = record(Some("標題"), None, Some("x"));
        let text = to_jsonl(std::slice::from_ref(&r));
        let back: ReviewRecord = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(back, r);
        assert!(text.contains("\"variety\":\"TW\""));
    }
}
