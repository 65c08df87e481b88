//! Browser demo: script profiling, prompt rendering and a paired gap test.
//!
//! Each export returns a JSON string. The `*_json` functions hold the logic
//! so native tests can call them without a JS host.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use varietybench::ingest::{ReviewRecord, Variety};
use varietybench::metrics::{gap_stats, stars, Scored};
use varietybench::pairing::Side;
use varietybench::prompting::{render, shuffle_seed, PromptVariant};
use varietybench::script::CharSetTables;

thread_local! {
    static TABLES: CharSetTables = CharSetTables::bundled();
}

pub fn classify_json(text: &str) -> Value {
    TABLES.with(|tables| {
        let chars: Vec<Value> = text
            .chars()
            .map(|c| json!({ "char": c.to_string(), "category": format!("{:?}", tables.classify_char(c)) }))
            .collect();
        let profile = tables.profile_text(text);
        json!({
            "bucket": profile.bucket.label(),
            "present": profile.present.iter().map(|c| format!("{c:?}")).collect::<Vec<_>>(),
            "chars": chars,
            "tables": tables.version(),
        })
    })
}

fn part(s: &str) -> Option<String> {
    (!s.is_empty()).then(|| s.to_string())
}

pub fn render_json(
    title: &str,
    positive: &str,
    negative: &str,
    variant: &str,
    seed: u64,
    system_role: bool,
) -> Result<Value, String> {
    let variant = match variant {
        "sentiment" => PromptVariant::Sentiment,
        other => PromptVariant::parse_rating(other).ok_or_else(|| format!("unknown variant {other:?}"))?,
    };
    let record = ReviewRecord {
        record_id: "demo".into(),
        hotel_id: "demo".into(),
        variety: Variety::TW,
        score: 8.0,
        title: part(title),
        positive: part(positive),
        negative: part(negative),
        review_time: None,
        translated: None,
    };
    if !record.is_nonempty() {
        return Err("the review needs at least one non-empty part".into());
    }
    let prompt = render(&record, variant, shuffle_seed(seed, "demo", Side::Tw), system_role);
    Ok(json!({ "system": prompt.system_text, "user": prompt.user_text }))
}

fn numbers(list: &str) -> Result<Vec<u8>, String> {
    list.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| match s.parse::<u8>() {
            Ok(n) if (1..=10).contains(&n) => Ok(n),
            _ => Err(format!("{s:?} is not a rating between 1 and 10")),
        })
        .collect()
}

/// Three equally long rating lists: TW predictions, CN predictions and the
/// shared truth.
pub fn gap_json(tw: &str, cn: &str, truth: &str) -> Result<Value, String> {
    let (tw, cn, truth) = (numbers(tw)?, numbers(cn)?, numbers(truth)?);
    if tw.len() != cn.len() || tw.len() != truth.len() {
        return Err(format!("lists differ in length: {}, {}, {}", tw.len(), cn.len(), truth.len()));
    }
    if tw.is_empty() {
        return Err("no ratings given".into());
    }
    let items: Vec<(Scored, Scored)> = tw
        .iter()
        .zip(&cn)
        .zip(&truth)
        .map(|((&t, &c), &y)| (Scored { prediction: t, truth: y }, Scored { prediction: c, truth: y }))
        .collect();
    let g = gap_stats(&items);
    let test = |t: Option<varietybench::metrics::TTest>| {
        t.map_or(Value::Null, |t| json!({ "t": finite(t.t), "df": t.df, "p": t.p, "stars": stars(t.p) }))
    };
    Ok(json!({
        "n": g.n_pairs,
        "acc_tw": g.acc_tw,
        "acc_cn": g.acc_cn,
        "delta_acc": g.delta_acc(),
        "mse_tw": g.mse_tw,
        "mse_cn": g.mse_cn,
        "delta_mse": g.delta_mse(),
        "acc_test": test(g.acc_test),
        "mse_test": test(g.mse_test),
    }))
}

/// JSON has no infinities; report them as strings.
fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn wrap(result: Result<Value, String>) -> Result<String, JsValue> {
    result.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn classify(text: &str) -> String {
    classify_json(text).to_string()
}

#[wasm_bindgen]
pub fn render_prompt(
    title: &str,
    positive: &str,
    negative: &str,
    variant: &str,
    seed: u32,
    system_role: bool,
) -> Result<String, JsValue> {
    wrap(render_json(title, positive, negative, variant, seed as u64, system_role))
}

#[wasm_bindgen]
pub fn paired_gap(tw: &str, cn: &str, truth: &str) -> Result<String, JsValue> {
    wrap(gap_json(tw, cn, truth))
}
