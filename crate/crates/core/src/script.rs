//! Character-level script classification and code-mixing buckets.
//!
//! Every scalar value maps to one [`CharCategory`] through the character-set
//! tables in `assets/charsets/`. Tables may overlap; the first match in this
//! order wins:
//!
//! Bopomofo > Emoji > Japanese/Korean > Chinese sets > English > Number >
//! Punctuation > Symbol > Whitespace > Unknown
//!
//! A Han character listed in both the traditional and the simplified table is
//! [`CharCategory::SharedChinese`]; one listed in neither is `Unknown`.
//!
//! A text's set of categories reduces to a [`ScriptBucket`]. Punctuation,
//! numbers and whitespace are neutral and never produce a `+ X` bucket.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{ReviewRecord, Variety};
use crate::pairing::ReviewPair;

#[derive(Debug, Error)]
pub enum CharsetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{table}.txt line {line}: cannot parse {text:?}")]
    Parse {
        table: &'static str,
        line: usize,
        text: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CharCategory {
    TraditionalOnly,
    SimplifiedOnly,
    SharedChinese,
    English,
    Emoji,
    Bopomofo,
    Japanese,
    Korean,
    Symbol,
    Punctuation,
    Number,
    Whitespace,
    Unknown,
}

impl CharCategory {
    pub fn is_neutral(self) -> bool {
        matches!(
            self,
            CharCategory::Punctuation | CharCategory::Number | CharCategory::Whitespace
        )
    }
}

/// Inclusive code point ranges, sorted and merged.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct RangeSet(Vec<(u32, u32)>);

impl RangeSet {
    fn parse(table: &'static str, text: &str) -> Result<Self, CharsetError> {
        let mut ranges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = || CharsetError::Parse {
                table,
                line: i + 1,
                text: raw.to_string(),
            };
            let (lo, hi) = match line.split_once("..") {
                Some((lo, hi)) => (lo, hi),
                None => (line, line),
            };
            let lo = u32::from_str_radix(lo.trim(), 16).map_err(|_| err())?;
            let hi = u32::from_str_radix(hi.trim(), 16).map_err(|_| err())?;
            if lo > hi {
                return Err(err());
            }
            ranges.push((lo, hi));
        }
        ranges.sort_unstable();
        let mut merged: Vec<(u32, u32)> = Vec::with_capacity(ranges.len());
        for (lo, hi) in ranges {
            match merged.last_mut() {
                Some(last) if lo <= last.1.saturating_add(1) => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        Ok(Self(merged))
    }

    fn contains(&self, c: char) -> bool {
        let cp = c as u32;
        let idx = self.0.partition_point(|&(_, hi)| hi < cp);
        self.0.get(idx).is_some_and(|&(lo, _)| lo <= cp)
    }
}

const TABLE_NAMES: [&str; 11] = [
    "bopomofo",
    "emoji",
    "japanese",
    "korean",
    "traditional",
    "simplified",
    "english",
    "number",
    "punctuation",
    "symbol",
    "whitespace",
];

const BUNDLED: [&str; 11] = [
    include_str!("../assets/charsets/bopomofo.txt"),
    include_str!("../assets/charsets/emoji.txt"),
    include_str!("../assets/charsets/japanese.txt"),
    include_str!("../assets/charsets/korean.txt"),
    include_str!("../assets/charsets/traditional.txt"),
    include_str!("../assets/charsets/simplified.txt"),
    include_str!("../assets/charsets/english.txt"),
    include_str!("../assets/charsets/number.txt"),
    include_str!("../assets/charsets/punctuation.txt"),
    include_str!("../assets/charsets/symbol.txt"),
    include_str!("../assets/charsets/whitespace.txt"),
];

/// Immutable character-set tables plus a content hash used as their version.
#[derive(Debug, Clone)]
pub struct CharSetTables {
    sets: [RangeSet; 11],
    version: String,
}

impl CharSetTables {
    /// Tables shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_texts(BUNDLED).expect("bundled charset tables parse")
    }

    /// Loads `<name>.txt` for every table name from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, CharsetError> {
        let mut texts: Vec<String> = Vec::with_capacity(TABLE_NAMES.len());
        for name in TABLE_NAMES {
            let path = dir.join(format!("{name}.txt"));
            let text = std::fs::read_to_string(&path).map_err(|source| CharsetError::Io {
                path: path.display().to_string(),
                source,
            })?;
            texts.push(text);
        }
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        Self::from_texts(refs.try_into().expect("one text per table"))
    }

    fn from_texts(texts: [&str; 11]) -> Result<Self, CharsetError> {
        let mut hasher = Sha256::new();
        let mut sets: [RangeSet; 11] = Default::default();
        for (i, (name, text)) in TABLE_NAMES.iter().zip(texts).enumerate() {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            hasher.update(text.as_bytes());
            hasher.update([0u8]);
            sets[i] = RangeSet::parse(name, text)?;
        }
        let version = hex::encode(hasher.finalize())[..12].to_string();
        Ok(Self { sets, version })
    }

    /// Short content hash of all table files.
    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn classify_char(&self, c: char) -> CharCategory {
        let [bopomofo, emoji, japanese, korean, traditional, simplified, english, number, punctuation, symbol, whitespace] =
            &self.sets;
        if bopomofo.contains(c) {
            return CharCategory::Bopomofo;
        }
        if emoji.contains(c) {
            return CharCategory::Emoji;
        }
        if japanese.contains(c) {
            return CharCategory::Japanese;
        }
        if korean.contains(c) {
            return CharCategory::Korean;
        }
        match (traditional.contains(c), simplified.contains(c)) {
            (true, true) => return CharCategory::SharedChinese,
            (true, false) => return CharCategory::TraditionalOnly,
            (false, true) => return CharCategory::SimplifiedOnly,
            (false, false) => {}
        }
        if english.contains(c) {
            CharCategory::English
        } else if number.contains(c) {
            CharCategory::Number
        } else if punctuation.contains(c) {
            CharCategory::Punctuation
        } else if symbol.contains(c) {
            CharCategory::Symbol
        } else if whitespace.contains(c) {
            CharCategory::Whitespace
        } else {
            CharCategory::Unknown
        }
    }

    pub fn profile_text(&self, text: &str) -> ScriptProfile {
        ScriptProfile::from_present(text.chars().map(|c| self.classify_char(c)).collect())
    }

    /// Profile over all text parts of a record.
    pub fn profile_record(&self, record: &ReviewRecord) -> ScriptProfile {
        let present = record
            .parts()
            .into_iter()
            .flatten()
            .flat_map(str::chars)
            .map(|c| self.classify_char(c))
            .collect();
        ScriptProfile::from_present(present)
    }

    pub fn contains_traditional_only(&self, text: &str) -> bool {
        text.chars()
            .any(|c| self.classify_char(c) == CharCategory::TraditionalOnly)
    }
}

/// Primary Chinese script of a bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    Traditional,
    Simplified,
}

/// Non-neutral, non-Chinese script element. Japanese and Korean collapse into
/// one `JpKr` element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Element {
    English,
    Emoji,
    Symbol,
    Bopomofo,
    JpKr,
    Unknown,
}

impl Element {
    pub const ALL: [Element; 6] = [
        Element::English,
        Element::Emoji,
        Element::Symbol,
        Element::Bopomofo,
        Element::JpKr,
        Element::Unknown,
    ];

    fn of(category: CharCategory) -> Option<Self> {
        Some(match category {
            CharCategory::English => Element::English,
            CharCategory::Emoji => Element::Emoji,
            CharCategory::Symbol => Element::Symbol,
            CharCategory::Bopomofo => Element::Bopomofo,
            CharCategory::Japanese | CharCategory::Korean => Element::JpKr,
            CharCategory::Unknown => Element::Unknown,
            _ => return None,
        })
    }

    fn label(self) -> &'static str {
        match self {
            Element::English => "English",
            Element::Emoji => "Emoji",
            Element::Symbol => "Symbol",
            Element::Bopomofo => "Bopomofo",
            Element::JpKr => "JP/KR",
            Element::Unknown => "Unknown",
        }
    }
}

/// Code-mixing bucket of a text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScriptBucket {
    OnlyFamily(Family),
    OnlyElement(Element),
    OnlyPunctuation,
    FamilyPlus(Family, Element),
    /// Only characters common to both Chinese scripts, plus neutrals.
    ChineseUndetermined,
    OnlyNumber,
    OnlyWhitespace,
    OtherMixed,
    Empty,
}

impl ScriptBucket {
    pub fn label(self) -> String {
        match self {
            ScriptBucket::OnlyFamily(Family::Traditional) => "Only Traditional".into(),
            ScriptBucket::OnlyFamily(Family::Simplified) => "Only Simplified".into(),
            ScriptBucket::OnlyElement(e) => format!("Only {}", e.label()),
            ScriptBucket::OnlyPunctuation => "Only Punctuation".into(),
            ScriptBucket::FamilyPlus(Family::Traditional, e) => format!("Traditional + {}", e.label()),
            ScriptBucket::FamilyPlus(Family::Simplified, e) => format!("Simplified + {}", e.label()),
            ScriptBucket::ChineseUndetermined => "Chinese (undetermined)".into(),
            ScriptBucket::OnlyNumber => "Only Number".into(),
            ScriptBucket::OnlyWhitespace => "Only Whitespace".into(),
            ScriptBucket::OtherMixed => "Other mixed".into(),
            ScriptBucket::Empty => "Empty".into(),
        }
    }

    /// Distribution table rows: the code-mixing table layout first, then the
    /// buckets it has no row for.
    pub fn table_rows() -> Vec<ScriptBucket> {
        let mut rows = vec![
            ScriptBucket::OnlyFamily(Family::Traditional),
            ScriptBucket::OnlyFamily(Family::Simplified),
            ScriptBucket::OnlyElement(Element::English),
            ScriptBucket::OnlyElement(Element::Emoji),
            ScriptBucket::OnlyElement(Element::Symbol),
            ScriptBucket::OnlyElement(Element::Bopomofo),
            ScriptBucket::OnlyElement(Element::JpKr),
            ScriptBucket::OnlyPunctuation,
            ScriptBucket::OnlyElement(Element::Unknown),
        ];
        for family in [Family::Traditional, Family::Simplified] {
            rows.extend(Element::ALL.iter().map(|&e| ScriptBucket::FamilyPlus(family, e)));
        }
        rows.extend([
            ScriptBucket::ChineseUndetermined,
            ScriptBucket::OnlyNumber,
            ScriptBucket::OnlyWhitespace,
            ScriptBucket::OtherMixed,
            ScriptBucket::Empty,
        ]);
        rows
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::table_rows().into_iter().find(|b| b.label() == label)
    }
}

impl fmt::Display for ScriptBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl Serialize for ScriptBucket {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for ScriptBucket {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let label = String::deserialize(d)?;
        ScriptBucket::from_label(&label)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown script bucket {label:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptProfile {
    pub present: BTreeSet<CharCategory>,
    pub bucket: ScriptBucket,
}

impl ScriptProfile {
    pub fn from_present(present: BTreeSet<CharCategory>) -> Self {
        let bucket = reduce(&present);
        Self { present, bucket }
    }
}

fn reduce(present: &BTreeSet<CharCategory>) -> ScriptBucket {
    use CharCategory as C;
    if present.is_empty() {
        return ScriptBucket::Empty;
    }
    let traditional = present.contains(&C::TraditionalOnly);
    let simplified = present.contains(&C::SimplifiedOnly);
    let shared = present.contains(&C::SharedChinese);
    let elements: BTreeSet<Element> = present.iter().filter_map(|&c| Element::of(c)).collect();

    let family = match (traditional, simplified) {
        (true, true) => return ScriptBucket::OtherMixed,
        (true, false) => Some(Family::Traditional),
        (false, true) => Some(Family::Simplified),
        (false, false) => None,
    };
    let single = (elements.len() == 1).then(|| *elements.iter().next().expect("one element"));

    match (family, shared, elements.len()) {
        (Some(f), _, 0) => ScriptBucket::OnlyFamily(f),
        (Some(f), _, 1) => ScriptBucket::FamilyPlus(f, single.expect("one element")),
        (Some(_), _, _) => ScriptBucket::OtherMixed,
        (None, true, 0) => ScriptBucket::ChineseUndetermined,
        (None, true, _) => ScriptBucket::OtherMixed,
        (None, false, 1) => ScriptBucket::OnlyElement(single.expect("one element")),
        (None, false, 0) => {
            if present.contains(&C::Punctuation) {
                ScriptBucket::OnlyPunctuation
            } else if present.contains(&C::Number) {
                ScriptBucket::OnlyNumber
            } else {
                ScriptBucket::OnlyWhitespace
            }
        }
        (None, false, _) => ScriptBucket::OtherMixed,
    }
}

/// Character-set constraint on both sides of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Subset {
    All,
    ChineseOnly,
    ChinesePlusEnglish,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::All, Subset::ChineseOnly, Subset::ChinesePlusEnglish];

    pub fn as_str(self) -> &'static str {
        match self {
            Subset::All => "All",
            Subset::ChineseOnly => "ChineseOnly",
            Subset::ChinesePlusEnglish => "ChinesePlusEnglish",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace(['-', '_', '+'], "").as_str() {
            "all" => Some(Subset::All),
            "chineseonly" | "chinese" => Some(Subset::ChineseOnly),
            "chineseplusenglish" | "chineseenglish" => Some(Subset::ChinesePlusEnglish),
            _ => None,
        }
    }

    /// Whether a pair with these TW and CN buckets belongs to the subset.
    /// Each side must use its own variety's primary script: traditional for
    /// TW, simplified for CN.
    pub fn admits(self, tw: ScriptBucket, cn: ScriptBucket) -> bool {
        use ScriptBucket::{FamilyPlus, OnlyFamily};
        match self {
            Subset::All => true,
            Subset::ChineseOnly => {
                tw == OnlyFamily(Family::Traditional) && cn == OnlyFamily(Family::Simplified)
            }
            Subset::ChinesePlusEnglish => {
                tw == FamilyPlus(Family::Traditional, Element::English)
                    && cn == FamilyPlus(Family::Simplified, Element::English)
            }
        }
    }
}

/// Bucket per record id.
pub type ProfileIndex = HashMap<String, ScriptBucket>;

pub fn profile_index<'a>(
    tables: &CharSetTables,
    records: impl IntoIterator<Item = &'a ReviewRecord>,
) -> ProfileIndex {
    records
        .into_iter()
        .map(|r| (r.record_id.clone(), tables.profile_record(r).bucket))
        .collect()
}

/// Pairs whose two sides satisfy `constraint`. Pairs with a side missing
/// from `profiles` are dropped.
pub fn subset_filter<'a>(
    pairs: &'a [ReviewPair],
    constraint: Subset,
    profiles: &ProfileIndex,
) -> Vec<&'a ReviewPair> {
    pairs
        .iter()
        .filter(|p| {
            match (profiles.get(&p.tw.record_id), profiles.get(&p.cn.record_id)) {
                (Some(&tw), Some(&cn)) => constraint.admits(tw, cn),
                _ => constraint == Subset::All,
            }
        })
        .collect()
}

/// Per-record classification output of the `classify` stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordProfile {
    pub record_id: String,
    pub variety: Variety,
    pub bucket: ScriptBucket,
    pub present: BTreeSet<CharCategory>,
}

/// Count and ratio per bucket, per variety.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BucketDistribution {
    pub counts: BTreeMap<Variety, BTreeMap<ScriptBucket, usize>>,
    pub totals: BTreeMap<Variety, usize>,
}

impl BucketDistribution {
    pub fn from_profiles<'a>(profiles: impl IntoIterator<Item = &'a RecordProfile>) -> Self {
        let mut dist = Self::default();
        for p in profiles {
            *dist.counts.entry(p.variety).or_default().entry(p.bucket).or_default() += 1;
            *dist.totals.entry(p.variety).or_default() += 1;
        }
        dist
    }

    pub fn count(&self, variety: Variety, bucket: ScriptBucket) -> usize {
        self.counts
            .get(&variety)
            .and_then(|c| c.get(&bucket))
            .copied()
            .unwrap_or(0)
    }

    pub fn ratio(&self, variety: Variety, bucket: ScriptBucket) -> f64 {
        match self.totals.get(&variety) {
            Some(&total) if total > 0 => self.count(variety, bucket) as f64 / total as f64,
            _ => 0.0,
        }
    }

    /// Markdown table with CN and TW count/ratio columns.
    pub fn to_markdown(&self, table_version: &str) -> String {
        let mut out = String::from(
            "| Category | CN Count | CN Ratio | TW Count | TW Ratio |\n|---|---:|---:|---:|---:|\n",
        );
        for bucket in ScriptBucket::table_rows() {
            out.push_str(&format!("| {bucket} |"));
            for v in [Variety::CN, Variety::TW] {
                out.push_str(&format!(
                    " {} | {:.2}% |",
                    self.count(v, bucket),
                    100.0 * self.ratio(v, bucket)
                ));
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "\nTotals: CN {}, TW {}. Character tables {table_version}.\n",
            self.totals.get(&Variety::CN).copied().unwrap_or(0),
            self.totals.get(&Variety::TW).copied().unwrap_or(0),
        ));
        out
    }
}
