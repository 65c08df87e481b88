//! Synthetic raw review lines for tests and the bundled fixture.
//!
//! Output lines use the default source keys, so they go through the same
//! ingest path as real exports. The generator plants "twins": a CN review
//! and a TW review at the same hotel with ratings in the same sentiment
//! class, lengths in the same bin and the same writing style. Every twin is
//! therefore pairable whatever else the corpus holds.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::ingest::Variety;
use crate::pairing::ClassBoundaries;

/// Characters only in the traditional table.
pub const TRADITIONAL_POOL: &str = "機場們這個電視覺應該飯廳顯樂鬆點齊員務環淨適貼頭級滿戶張間邊離車門開關問題熱處實歡讓還設備購從來時會";
/// Characters only in the simplified table.
pub const SIMPLIFIED_POOL: &str = "机场们这个电视觉应该饭厅显乐点齐员务环净贴头级满户张间边车门开关问题热处实欢让还设备购从来时会";
/// Characters in both tables.
pub const SHARED_POOL: &str = "很好的是我在有不人大房住早餐非常方便近小一也都就地方位置交通步行分站下次再推床";

const PUNCTUATION: [char; 3] = ['，', '。', '！'];
const ENGLISH_WORDS: [&str; 6] = ["good", "clean", "wifi", "nice", "staff", "view"];
const EMOJI: [char; 3] = ['😀', '👍', '😡'];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Style {
    Pure,
    English,
    Emoji,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub records: usize,
    /// Share of TW among TW + CN records.
    pub tw_fraction: f64,
    /// Planted pairs; each uses two records.
    pub twins: usize,
    /// Records with a nationality outside TW and CN.
    pub other: usize,
    /// Lines the ingest step must reject, skip or drop as empty.
    pub noise: usize,
    /// Single records longer than the 500 cap.
    pub over_cap: usize,
    pub hotels: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// The bundled fixture.
    fn default() -> Self {
        Self {
            records: 2000,
            tw_fraction: 0.65,
            twins: 650,
            other: 60,
            noise: 40,
            over_cap: 5,
            hotels: 30,
            seed: 20240,
        }
    }
}

struct Gen {
    rng: ChaCha8Rng,
    traditional: Vec<char>,
    simplified: Vec<char>,
    shared: Vec<char>,
    boundaries: ClassBoundaries,
}

impl Gen {
    fn score_in_class(&mut self, class: usize) -> u8 {
        let b = self.boundaries;
        let (lo, hi) = match class {
            0 => (1, b.negative_max),
            1 => (b.negative_max + 1, b.neutral_max),
            _ => (b.neutral_max + 1, 10),
        };
        self.rng.gen_range(lo..=hi)
    }

    /// Positive ratings dominate, as on review sites.
    fn class(&mut self) -> usize {
        match self.rng.gen_range(0..10) {
            0 => 0,
            1..=3 => 1,
            _ => 2,
        }
    }

    fn style(&mut self) -> Style {
        match self.rng.gen_range(0..10) {
            0..=6 => Style::Pure,
            7 | 8 => Style::English,
            _ => Style::Emoji,
        }
    }

    fn length(&mut self) -> usize {
        if self.rng.gen_bool(0.3) {
            self.rng.gen_range(50..=200)
        } else {
            self.rng.gen_range(4..=49)
        }
    }

    /// A length in the same width-10 bin as `len`.
    fn length_in_bin_of(&mut self, len: usize) -> usize {
        let lo = (len - 1) / 10 * 10 + 1;
        self.rng.gen_range(lo.max(4)..=lo + 9)
    }

    /// Exactly `len` characters. The first is always from the variety's own
    /// script family so the text is never ambiguous.
    fn text(&mut self, variety: Variety, style: Style, len: usize) -> Vec<char> {
        let family = if variety == Variety::CN {
            self.simplified.clone()
        } else {
            self.traditional.clone()
        };
        let mut chars = Vec::with_capacity(len);
        chars.push(*family.choose(&mut self.rng).expect("pool"));
        while chars.len() < len {
            let c = match self.rng.gen_range(0..20) {
                0..=6 => *family.choose(&mut self.rng).expect("pool"),
                7..=17 => *self.shared.choose(&mut self.rng).expect("pool"),
                _ => PUNCTUATION[self.rng.gen_range(0..PUNCTUATION.len())],
            };
            chars.push(c);
        }
        match style {
            Style::Pure => {}
            Style::English => {
                let word: Vec<char> = ENGLISH_WORDS[self.rng.gen_range(0..ENGLISH_WORDS.len())].chars().collect();
                let word = &word[..word.len().min(len - 1)];
                let at = self.rng.gen_range(1..=len - word.len());
                chars.splice(at..at + word.len(), word.iter().copied());
            }
            Style::Emoji => {
                let at = self.rng.gen_range(1..len.max(2)).min(len - 1);
                chars[at] = EMOJI[self.rng.gen_range(0..EMOJI.len())];
            }
        }
        chars
    }

    /// Splits `chars` over title / positive / negative. Each present part
    /// gets at least one character.
    fn parts(&mut self, chars: Vec<char>) -> [Option<String>; 3] {
        let mut present: Vec<usize> = (0..3).filter(|_| self.rng.gen_bool(0.6)).collect();
        if present.is_empty() {
            present.push(self.rng.gen_range(0..3));
        }
        present.truncate(chars.len());
        let mut cuts: Vec<usize> = (1..chars.len()).collect();
        cuts.shuffle(&mut self.rng);
        let mut cuts: Vec<usize> = cuts.into_iter().take(present.len() - 1).collect();
        cuts.sort_unstable();
        let mut bounds = vec![0];
        bounds.extend(cuts);
        bounds.push(chars.len());
        let mut out = [None, None, None];
        for (i, &slot) in present.iter().enumerate() {
            out[slot] = Some(chars[bounds[i]..bounds[i + 1]].iter().collect());
        }
        out
    }

    fn line(&mut self, hotel: usize, nationality: &str, score: u8, parts: [Option<String>; 3], n: usize) -> String {
        let [title, positive, negative] = parts;
        let value = json!({
            "hotel__booking_id": format!("hotel-{hotel:03}"),
            "user": "Removed the user identity",
            "user_nationality": nationality,
            "score": format!("{score}.0"),
            "review_title": title,
            "positive_review": positive,
            "negative_review": negative,
            "review_time": format!("2023-{:02}-{:02}", n % 12 + 1, n % 28 + 1),
        });
        value.to_string()
    }

    fn record(&mut self, hotel: usize, variety: Variety, class: usize, style: Style, len: usize, n: usize) -> String {
        let score = self.score_in_class(class);
        let chars = self.text(variety, style, len);
        let parts = self.parts(chars);
        let nationality = if variety == Variety::CN { "cn" } else { "tw" };
        self.line(hotel, nationality, score, parts, n)
    }
}

fn noise_line(kind: usize, n: usize) -> String {
    let base = |score: Value, hotel: Value, text: Value| {
        json!({
            "hotel__booking_id": hotel,
            "user_nationality": "tw",
            "score": score,
            "review_title": text,
            "positive_review": null,
            "negative_review": null,
            "review_time": format!("2023-01-{:02}", n % 28 + 1),
        })
        .to_string()
    };
    match kind % 5 {
        0 => base(json!("11"), json!("hotel-000"), json!("很好")),
        1 => base(json!("great"), json!("hotel-000"), json!("很好")),
        2 => base(json!("9.0"), Value::Null, json!("很好")),
        3 => format!("{{\"hotel__booking_id\": \"hotel-000\", \"score\": \"9.0\", \"review_title\": \"broken {n}\""),
        _ => base(json!("9.0"), json!("hotel-001"), json!("   ")),
    }
}

/// Raw line-delimited records, one per element, in a shuffled but
/// deterministic order.
pub fn generate(config: &SynthConfig) -> Vec<String> {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        traditional: TRADITIONAL_POOL.chars().collect(),
        simplified: SIMPLIFIED_POOL.chars().collect(),
        shared: SHARED_POOL.chars().collect(),
        boundaries: ClassBoundaries::default(),
    };
    let hotels = config.hotels.max(1);
    let fixed = 2 * config.twins + config.other + config.noise;
    let singles = config.records.saturating_sub(fixed);
    let labelled = 2 * config.twins + singles;
    let tw_target = (config.tw_fraction * labelled as f64).round() as usize;
    let tw_singles = tw_target.saturating_sub(config.twins).min(singles);
    let cn_singles = singles - tw_singles;

    let mut lines = Vec::with_capacity(config.records);
    let mut n = 0;
    for _ in 0..config.twins {
        let hotel = g.rng.gen_range(0..hotels);
        let class = g.class();
        let style = g.style();
        let len = g.length();
        let tw_len = g.length_in_bin_of(len);
        lines.push(g.record(hotel, Variety::CN, class, style, len, n));
        lines.push(g.record(hotel, Variety::TW, class, style, tw_len, n + 1));
        n += 2;
    }
    for i in 0..singles {
        let variety = if i < tw_singles { Variety::TW } else { Variety::CN };
        let hotel = g.rng.gen_range(0..hotels);
        let class = g.class();
        let style = g.style();
        let len = if i < config.over_cap {
            g.rng.gen_range(501..=520)
        } else {
            g.length()
        };
        lines.push(g.record(hotel, variety, class, style, len, n));
        n += 1;
    }
    debug_assert_eq!(cn_singles, singles - tw_singles);
    for i in 0..config.other {
        let hotel = g.rng.gen_range(0..hotels);
        let score = g.score_in_class(i % 3);
        let chars = g.text(Variety::TW, Style::Pure, 12);
        let parts = g.parts(chars);
        let nationality = ["jp", "hk", "us"][i % 3];
        lines.push(g.line(hotel, nationality, score, parts, n));
        n += 1;
    }
    for i in 0..config.noise {
        lines.push(noise_line(i, n));
        n += 1;
    }
    lines.shuffle(&mut g.rng);
    lines
}

pub fn generate_text(config: &SynthConfig) -> String {
    let mut out = generate(config).join("\n");
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{filter_nonempty, filter_varieties, parse_records, FieldMap};
    use crate::pairing::{build_pairs, PairingConfig};
    use crate::script::{CharCategory, CharSetTables};

    #[test]
    fn pools_are_script_exclusive() {
        let tables = CharSetTables::bundled();
        for (pool, expected) in [
            (TRADITIONAL_POOL, CharCategory::TraditionalOnly),
            (SIMPLIFIED_POOL, CharCategory::SimplifiedOnly),
            (SHARED_POOL, CharCategory::SharedChinese),
        ] {
            for c in pool.chars() {
                assert_eq!(tables.classify_char(c), expected, "{c}");
            }
        }
    }

    #[test]
    fn deterministic_and_sized() {
        let a = generate(&SynthConfig::default());
        assert_eq!(a.len(), 2000);
        assert_eq!(a, generate(&SynthConfig::default()));
        let other = generate(&SynthConfig { seed: 1, ..SynthConfig::default() });
        assert_ne!(a, other);
    }

    #[test]
    fn variety_share_is_exact_by_construction() {
        let config = SynthConfig {
            records: 1000,
            tw_fraction: 0.956,
            twins: 0,
            other: 0,
            noise: 0,
            over_cap: 0,
            ..SynthConfig::default()
        };
        let text = generate_text(&config);
        let report = parse_records(text.as_bytes(), &FieldMap::default(), "s").unwrap();
        let split = filter_varieties(filter_nonempty(report.records));
        assert_eq!((split.tw.len(), split.cn.len(), split.excluded), (956, 44, 0));
    }

    #[test]
    fn every_twin_is_pairable() {
        let config = SynthConfig::default();
        let text = generate_text(&config);
        let report = parse_records(text.as_bytes(), &FieldMap::default(), "s").unwrap();
        assert_eq!(report.records.len() + report.rejected.len() + report.skipped.len(), 2000);
        assert_eq!(report.rejected.len() + report.skipped.len(), 32);
        let kept = filter_nonempty(report.records);
        let split = filter_varieties(kept);
        assert_eq!(split.excluded, config.other);
        let outcome = build_pairs(&split.tw, &split.cn, 0, &PairingConfig::default());
        assert!(outcome.pairs.len() >= config.twins, "{}", outcome.pairs.len());
        assert_eq!(outcome.too_long, config.over_cap);
    }
}
