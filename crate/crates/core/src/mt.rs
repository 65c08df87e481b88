//! Translation round-trip: evaluate each review against its machine
//! translation into the other variety.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use crate::ingest::TranslationDirection;
use crate::ingest::{ReviewRecord, Variety};
use crate::llm::{run_items, EvalItem, ModelEndpoint};
use crate::metrics::{gap_stats, GapReportRow, LengthSplit, Scored};
use crate::pairing::{round_score, ReviewPair, Side};
use crate::prompting::PromptVariant;
use crate::script::Subset;
use crate::validate::parse_prediction;

impl TranslationDirection {
    pub const BOTH: [TranslationDirection; 2] = [TranslationDirection::TwToCn, TranslationDirection::CnToTw];

    pub fn as_str(self) -> &'static str {
        match self {
            TranslationDirection::TwToCn => "TW_to_CN",
            TranslationDirection::CnToTw => "CN_to_TW",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "tw_to_cn" | "tw2cn" => Some(TranslationDirection::TwToCn),
            "cn_to_tw" | "cn2tw" => Some(TranslationDirection::CnToTw),
            _ => None,
        }
    }

    /// The side whose text gets translated.
    pub fn source_side(self) -> Side {
        match self {
            TranslationDirection::TwToCn => Side::Tw,
            TranslationDirection::CnToTw => Side::Cn,
        }
    }

    pub fn source_variety(self) -> Variety {
        self.source_side().variety()
    }
}

pub trait Translator: Send + Sync {
    fn name(&self) -> &str;

    fn translate(&self, text: &str, direction: TranslationDirection) -> Result<String, String>;
}

/// Returns its input.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn name(&self) -> &str {
        "mock:identity"
    }

    fn translate(&self, text: &str, _direction: TranslationDirection) -> Result<String, String> {
        Ok(text.to_string())
    }
}

/// Character-for-character substitution over a fixed traditional ↔
/// simplified table; characters outside the table pass through.
#[derive(Debug, Clone, Default)]
pub struct CharMapTranslator {
    to_simplified: HashMap<char, char>,
    to_traditional: HashMap<char, char>,
}

const BUNDLED_CHARMAP: &str = include_str!("../assets/charmap.txt");

impl CharMapTranslator {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_CHARMAP)
    }

    /// Lines of `<traditional>\t<simplified>`; `#` starts a comment.
    pub fn parse(text: &str) -> Self {
        let mut map = Self::default();
        for line in text.lines().filter(|l| !l.starts_with('#')) {
            let mut cols = line.split('\t').filter_map(|c| c.chars().next());
            if let (Some(t), Some(s)) = (cols.next(), cols.next()) {
                map.to_simplified.insert(t, s);
                map.to_traditional.insert(s, t);
            }
        }
        map
    }

    pub fn len(&self) -> usize {
        self.to_simplified.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_simplified.is_empty()
    }
}

impl Translator for CharMapTranslator {
    fn name(&self) -> &str {
        "mock:charmap"
    }

    fn translate(&self, text: &str, direction: TranslationDirection) -> Result<String, String> {
        let table = match direction {
            TranslationDirection::TwToCn => &self.to_simplified,
            TranslationDirection::CnToTw => &self.to_traditional,
        };
        Ok(text.chars().map(|c| *table.get(&c).unwrap_or(&c)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CacheEntry {
    hash: String,
    direction: TranslationDirection,
    output: String,
}

fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Memoizes another translator by (text hash, direction), optionally
/// persisting entries as line-delimited records.
pub struct CachedTranslator<T> {
    inner: T,
    entries: Mutex<HashMap<(String, TranslationDirection), String>>,
    log: Option<Mutex<File>>,
}

impl<T: Translator> CachedTranslator<T> {
    pub fn in_memory(inner: T) -> Self {
        Self {
            inner,
            entries: Mutex::new(HashMap::new()),
            log: None,
        }
    }

    /// Loads existing entries from `path` and appends new ones to it.
    pub fn persistent(inner: T, path: &Path) -> std::io::Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                if let Ok(e) = serde_json::from_str::<CacheEntry>(&line) {
                    entries.insert((e.hash, e.direction), e.output);
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            inner,
            entries: Mutex::new(entries),
            log: Some(Mutex::new(file)),
        })
    }

    pub fn cached(&self) -> usize {
        self.entries.lock().expect("cache poisoned").len()
    }
}

impl<T: Translator> Translator for CachedTranslator<T> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn translate(&self, text: &str, direction: TranslationDirection) -> Result<String, String> {
        let key = (text_hash(text), direction);
        if let Some(hit) = self.entries.lock().expect("cache poisoned").get(&key) {
            return Ok(hit.clone());
        }
        let output = self.inner.translate(text, direction)?;
        let mut entries = self.entries.lock().expect("cache poisoned");
        if !entries.contains_key(&key) {
            if let Some(log) = &self.log {
                let entry = CacheEntry {
                    hash: key.0.clone(),
                    direction,
                    output: output.clone(),
                };
                let mut f = log.lock().expect("cache log poisoned");
                writeln!(f, "{}", serde_json::to_string(&entry).expect("entry serializes"))
                    .map_err(|e| format!("cache write failed: {e}"))?;
            }
            entries.insert(key, output.clone());
        }
        Ok(output)
    }
}

/// Google Translate v2 style client: `POST url` with
/// `{q, source, target, format}`; reads `data.translations[0].translatedText`.
#[cfg(feature = "http")]
pub struct HttpTranslator {
    url: String,
    api_key_env_var: Option<String>,
    max_retries: u32,
    backoff_base: std::time::Duration,
    client: reqwest::blocking::Client,
}

#[cfg(feature = "http")]
impl HttpTranslator {
    pub fn new(url: impl Into<String>, api_key_env_var: Option<String>) -> Result<Self, reqwest::Error> {
        Ok(Self {
            url: url.into(),
            api_key_env_var,
            max_retries: 3,
            backoff_base: std::time::Duration::from_millis(500),
            client: reqwest::blocking::Client::builder()
                .timeout(std::time::Duration::from_secs(60))
                .build()?,
        })
    }

    pub fn with_retries(mut self, max_retries: u32, backoff_base: std::time::Duration) -> Self {
        self.max_retries = max_retries;
        self.backoff_base = backoff_base;
        self
    }

    fn once(&self, text: &str, direction: TranslationDirection) -> Result<String, (bool, String)> {
        let (source, target) = match direction {
            TranslationDirection::TwToCn => ("zh-TW", "zh-CN"),
            TranslationDirection::CnToTw => ("zh-CN", "zh-TW"),
        };
        let mut request = self.client.post(&self.url).json(&serde_json::json!({
            "q": text,
            "source": source,
            "target": target,
            "format": "text",
        }));
        if let Some(key) = self.api_key_env_var.as_ref().and_then(|v| std::env::var(v).ok()) {
            request = request.header("X-Goog-Api-Key", key);
        }
        let response = request.send().map_err(|e| (true, e.to_string()))?;
        let status = response.status();
        let body = response.text().map_err(|e| (true, e.to_string()))?;
        if !status.is_success() {
            let retry = status.is_server_error() || status.as_u16() == 429;
            return Err((retry, format!("HTTP {}: {body}", status.as_u16())));
        }
        serde_json::from_str::<serde_json::Value>(&body)
            .ok()
            .and_then(|v| v["data"]["translations"][0]["translatedText"].as_str().map(str::to_string))
            .ok_or_else(|| (false, format!("malformed translation body: {body}")))
    }
}

#[cfg(feature = "http")]
impl Translator for HttpTranslator {
    fn name(&self) -> &str {
        &self.url
    }

    fn translate(&self, text: &str, direction: TranslationDirection) -> Result<String, String> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.once(text, direction) {
                Ok(out) => return Ok(out),
                Err((true, _)) if attempt <= self.max_retries => {
                    std::thread::sleep(self.backoff_base.saturating_mul(1 << (attempt - 1).min(16)));
                }
                Err((_, e)) => return Err(e),
            }
        }
    }
}

/// `mock:identity`, `mock:charmap`, or an HTTP URL. HTTP translations are
/// cached in `cache` when given.
#[cfg(feature = "http")]
pub fn translator_from_spec(spec: &str, cache: Option<&Path>) -> Result<Box<dyn Translator>, String> {
    match spec {
        "mock:identity" => Ok(Box::new(IdentityTranslator)),
        "mock:charmap" => Ok(Box::new(CharMapTranslator::bundled())),
        url if url.starts_with("http://") || url.starts_with("https://") => {
            let http = HttpTranslator::new(url, Some("TRANSLATE_API_KEY".to_string())).map_err(|e| e.to_string())?;
            match cache {
                Some(path) => CachedTranslator::persistent(http, path)
                    .map(|c| Box::new(c) as Box<dyn Translator>)
                    .map_err(|e| format!("opening translation cache {}: {e}", path.display())),
                None => Ok(Box::new(CachedTranslator::in_memory(http))),
            }
        }
        other => Err(format!("unknown translator {other:?} (use mock:identity, mock:charmap or a URL)")),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TranslatedCorpus {
    pub records: Vec<ReviewRecord>,
    /// Ids of records whose translation failed; they are left out of `records`.
    pub failed: Vec<String>,
}

/// Translates each text part independently. Absent parts stay absent; all
/// metadata is kept and `translated` is set.
pub fn translate_corpus(
    records: &[ReviewRecord],
    direction: TranslationDirection,
    translator: &dyn Translator,
) -> TranslatedCorpus {
    let mut corpus = TranslatedCorpus::default();
    for record in records {
        let part = |p: &Option<String>| -> Result<Option<String>, String> {
            p.as_deref().map(|t| translator.translate(t, direction)).transpose()
        };
        match (part(&record.title), part(&record.positive), part(&record.negative)) {
            (Ok(title), Ok(positive), Ok(negative)) => corpus.records.push(ReviewRecord {
                title,
                positive,
                negative,
                translated: Some(direction),
                ..record.clone()
            }),
            _ => corpus.failed.push(record.record_id.clone()),
        }
    }
    corpus
}

/// One row of the translation table: original texts of one variety against
/// their translations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtRow {
    pub direction: TranslationDirection,
    pub original: Variety,
    /// `tw`/`cn` columns: for TW originals `tw` is the original and `cn`
    /// the translation; the other way round for CN originals.
    pub row: GapReportRow,
    pub translation_failures: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn mt_gap_rows(
    model: &str,
    pairs: &[ReviewPair],
    direction: TranslationDirection,
    translator: &dyn Translator,
    endpoint: &dyn ModelEndpoint,
    variant: PromptVariant,
    seed: u64,
    parallelism: usize,
) -> MtRow {
    let side = direction.source_side();
    let originals: Vec<ReviewRecord> = pairs.iter().map(|p| p.side(side).clone()).collect();
    let corpus = translate_corpus(&originals, direction, translator);
    let translated: HashMap<&str, &ReviewRecord> = corpus
        .records
        .iter()
        .map(|r| (r.record_id.as_str(), r))
        .collect();

    let kept: Vec<(&ReviewPair, &ReviewRecord)> = pairs
        .iter()
        .filter_map(|p| Some((p, *translated.get(p.side(side).record_id.as_str())?)))
        .collect();
    let items = |translated_side: bool| -> Vec<EvalItem<'_>> {
        kept.iter()
            .map(|(p, t)| EvalItem {
                pair_id: &p.pair_id,
                side,
                record: if translated_side { t } else { p.side(side) },
            })
            .collect()
    };
    let original_items = items(false);
    let translated_items = items(true);
    let original_results = run_items(&original_items, endpoint, variant, seed, parallelism);
    let translated_results = run_items(&translated_items, endpoint, variant, seed, parallelism);

    let prediction = |results: &[crate::llm::CompletionResult]| -> HashMap<String, Option<u8>> {
        results
            .iter()
            .map(|r| {
                let parsed = r.raw_text.as_deref().and_then(|t| parse_prediction(t).ok());
                (r.pair_id.clone(), parsed)
            })
            .collect()
    };
    let original_pred = prediction(&original_results);
    let translated_pred = prediction(&translated_results);

    let mut scored = Vec::new();
    for (pair, _) in &kept {
        let (Some(Some(o)), Some(Some(t))) = (
            original_pred.get(&pair.pair_id),
            translated_pred.get(&pair.pair_id),
        ) else {
            continue;
        };
        let Ok(truth) = round_score(pair.side(side).score) else {
            continue;
        };
        let original = Scored { prediction: *o, truth };
        let translation = Scored { prediction: *t, truth };
        scored.push(match direction {
            TranslationDirection::TwToCn => (original, translation),
            TranslationDirection::CnToTw => (translation, original),
        });
    }
    MtRow {
        direction,
        original: direction.source_variety(),
        row: GapReportRow::from_stats(
            model,
            variant,
            LengthSplit::Overall,
            Subset::All,
            &gap_stats(&scored),
        ),
        translation_failures: corpus.failed.len(),
    }
}

/// Rows grouped by setting, original TW first.
pub fn mt_markdown(rows: &[MtRow]) -> String {
    let num = |v: Option<f64>, digits: usize| v.map_or("-".to_string(), |x| format!("{x:.digits$}"));
    let mut out = String::from(
        "| setting | Ori. | #pairs | Acc tw | Acc cn | ΔAcc (cn-tw) | | MSE tw | MSE cn | ΔMSE (cn-tw) | |\n|---|---|---:|---:|---:|---:|---|---:|---:|---:|---|\n",
    );
    let mut sorted: Vec<&MtRow> = rows.iter().collect();
    sorted.sort_by_key(|r| (r.row.variant, r.row.model.clone(), r.original));
    for r in sorted {
        let g = &r.row;
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
            g.variant.as_str(),
            r.original.as_str().to_ascii_lowercase(),
            g.n_pairs,
            num(g.acc_tw, 2),
            num(g.acc_cn, 2),
            num(g.delta_acc, 2),
            g.stars_acc,
            num(g.mse_tw, 3),
            num(g.mse_cn, 3),
            num(g.delta_mse, 3),
            g.stars_mse,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::record_with;

    struct Failing;

    impl Translator for Failing {
        fn name(&self) -> &str {
            "failing"
        }

        fn translate(&self, text: &str, _: TranslationDirection) -> Result<String, String> {
            if text.contains('!') {
                Err("refused".into())
            } else {
                Ok(text.to_string())
            }
        }
    }

    #[test]
    fn identity_keeps_text_and_marks_direction() {
        let r = record_with(Some("機場"), None, Some("近"));
        let out = translate_corpus(std::slice::from_ref(&r), TranslationDirection::TwToCn, &IdentityTranslator);
        assert_eq!(out.records[0].title, r.title);
        assert_eq!(out.records[0].positive, None);
        assert_eq!(out.records[0].translated, Some(TranslationDirection::TwToCn));
        assert_eq!(out.records[0].score, r.score);
    }

    #[test]
    fn charmap_maps_both_ways() {
        let t = CharMapTranslator::bundled();
        assert_eq!(t.len(), 50);
        assert_eq!(t.translate("機", TranslationDirection::TwToCn), Ok("机".into()));
        assert_eq!(t.translate("机场很近", TranslationDirection::CnToTw), Ok("機場很近".into()));
        assert_eq!(t.translate("abc", TranslationDirection::TwToCn), Ok("abc".into()));
    }

    #[test]
    fn bundled_charmap_pairs_are_script_exclusive() {
        let tables = crate::script::CharSetTables::bundled();
        for line in BUNDLED_CHARMAP.lines().filter(|l| !l.starts_with('#')) {
            let (t, s) = line.split_once('\t').unwrap();
            let t = t.chars().next().unwrap();
            let s = s.chars().next().unwrap();
            assert_eq!(tables.classify_char(t), crate::script::CharCategory::TraditionalOnly, "{t}");
            assert_eq!(tables.classify_char(s), crate::script::CharCategory::SimplifiedOnly, "{s}");
        }
    }

    #[test]
    fn failures_drop_the_record() {
        let ok = record_with(Some("fine"), None, None);
        let mut bad = record_with(Some("fine"), Some("bad!"), None);
        bad.record_id = "bad".into();
        let out = translate_corpus(&[ok, bad], TranslationDirection::CnToTw, &Failing);
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.failed, ["bad"]);
    }

    #[test]
    fn cache_persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let cached = CachedTranslator::persistent(CharMapTranslator::bundled(), &path).unwrap();
            assert_eq!(cached.translate("機場", TranslationDirection::TwToCn), Ok("机场".into()));
            assert_eq!(cached.translate("機場", TranslationDirection::TwToCn), Ok("机场".into()));
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        let reloaded = CachedTranslator::persistent(Failing, &path).unwrap();
        assert_eq!(reloaded.cached(), 1);
        // served from the cache even though the inner translator would pass it through
        assert_eq!(reloaded.translate("機場", TranslationDirection::TwToCn), Ok("机场".into()));
    }

    #[test]
    fn direction_parsing() {
        assert_eq!(TranslationDirection::parse("TW_to_CN"), Some(TranslationDirection::TwToCn));
        assert_eq!(TranslationDirection::parse("cn-to-tw"), Some(TranslationDirection::CnToTw));
        assert_eq!(TranslationDirection::parse("x"), None);
        assert_eq!(serde_json::to_string(&TranslationDirection::TwToCn).unwrap(), "\"TW_to_CN\"");
    }
}
