//! End-to-end run: ingest, length stats, script profiles, pairing, one
//! evaluation per (endpoint, variant), validation, metrics and reports.
//!
//! Each stage writes its artifact through [`ArtifactStore`], so a rerun with
//! unchanged inputs reuses what is on disk and produces the same bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::artifact::{from_jsonl, to_jsonl, ArtifactStore, StageFailure, StageSpec, Written};
use crate::config::RunConfig;
use crate::ingest::{filter_nonempty, filter_varieties, parse_records, FieldMap, ReviewRecord};
use crate::llm::{endpoint_from_spec, run_eval, CompletionResult, ModelEndpoint, RunManifest};
use crate::metrics::{gap_rows, length_sweep, score_difference_test, GapReportRow, SweepConfig};
use crate::mt::{mt_gap_rows, mt_markdown, translator_from_spec, MtRow};
use crate::pairing::{build_pairs, ReviewPair};
use crate::prompting::{template_version, PromptVariant};
use crate::report::{gap_csv, gap_markdown, score_test_markdown};
use crate::script::{BucketDistribution, CharSetTables, ProfileIndex, RecordProfile};
use crate::textstats::length_histogram;
use crate::validate::{complete_pairs, index_outcomes, outcomes_of, PredictionOutcome, ValidityTable};

#[derive(Debug, Error)]
#[error("stage `{stage}` failed: {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub message: String,
}

fn fail<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError {
        stage,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageRecord {
    pub stage: String,
    pub artifact: String,
    pub reused: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub bundle_sha256: String,
    pub pairs: usize,
    pub gap_rows: Vec<GapReportRow>,
    pub mt_rows: Vec<MtRow>,
    pub stages: Vec<StageRecord>,
}

/// File-name-safe form of an endpoint spec.
pub fn slug(spec: &str) -> String {
    spec.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '-' })
        .collect()
}

struct Run<'a> {
    config: &'a RunConfig,
    store: ArtifactStore,
    stages: Vec<StageRecord>,
}

type Produced = (Vec<u8>, BTreeMap<String, String>);

impl Run<'_> {
    fn stage(
        &mut self,
        stage: &'static str,
        rel: &str,
        spec: StageSpec,
        produce: impl FnOnce() -> Result<Produced, String>,
    ) -> Result<(Vec<u8>, Written), PipelineError> {
        let (bytes, written) = self.store.stage(rel, spec, produce).map_err(|e| match e {
            StageFailure::Stage(message) => PipelineError { stage, message },
            StageFailure::Io(e) => fail(stage)(format!("writing {rel}: {e}")),
        })?;
        self.stages.push(StageRecord {
            stage: stage.to_string(),
            artifact: rel.to_string(),
            reused: written.reused,
        });
        Ok((bytes, written))
    }

    fn text_stage(
        &mut self,
        stage: &'static str,
        rel: &str,
        spec: StageSpec,
        produce: impl FnOnce() -> Result<String, String>,
    ) -> Result<Written, PipelineError> {
        self.stage(stage, rel, spec, || Ok((produce()?.into_bytes(), BTreeMap::new())))
            .map(|(_, w)| w)
    }
}

fn counts<const N: usize>(items: [(&str, usize); N]) -> BTreeMap<String, String> {
    items.into_iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

struct Ingested {
    records: Vec<ReviewRecord>,
    rejects: String,
    summary: BTreeMap<String, String>,
}

fn ingest_all(inputs: &[std::path::PathBuf], fields: &FieldMap) -> Result<Ingested, String> {
    let mut records = Vec::new();
    let mut rejects = String::new();
    let (mut lines, mut skipped, mut rejected) = (0, 0, 0);
    for path in inputs {
        let file = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let prefix = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "input".into());
        let report = parse_records(BufReader::new(file), fields, &prefix)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        lines += report.lines;
        skipped += report.skipped.len();
        rejected += report.rejected.len();
        for line in report.reject_log().lines() {
            rejects.push_str(&format!("{}\t{line}\n", path.display()));
        }
        records.extend(report.records);
    }
    let parsed = records.len();
    let records = filter_nonempty(records);
    let summary = counts([
        ("lines", lines),
        ("parsed", parsed),
        ("skipped", skipped),
        ("rejected", rejected),
        ("empty_dropped", parsed - records.len()),
        ("kept", records.len()),
    ]);
    Ok(Ingested {
        records,
        rejects,
        summary,
    })
}

pub fn run_pipeline(config: &RunConfig) -> Result<RunSummary, PipelineError> {
    if config.inputs.is_empty() {
        return Err(fail("ingest")("no input files configured"));
    }
    let tables = Arc::new(match &config.charsets {
        Some(dir) => CharSetTables::load_dir(dir).map_err(fail("classify"))?,
        None => CharSetTables::bundled(),
    });
    let fields = match &config.field_map {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| fail("ingest")(format!("{}: {e}", path.display())))?;
            FieldMap::from_kv_text(&text).map_err(fail("ingest"))?
        }
        None => FieldMap::default(),
    };
    std::fs::create_dir_all(&config.output_dir).map_err(fail("ingest"))?;
    let mut run = Run {
        config,
        store: ArtifactStore::new(&config.output_dir),
        stages: Vec::new(),
    };

    // ingest
    let mut ingest_spec = StageSpec::new("ingest").param("field_map", format!("{fields:?}"));
    for path in config.inputs.iter().chain(&config.field_map) {
        ingest_spec = ingest_spec
            .input_file(path)
            .map_err(|e| fail("ingest")(format!("{}: {e}", path.display())))?;
    }
    let mut ingested: Option<Ingested> = None;
    let (bytes, records_w) = run.stage("ingest", "records.jsonl", ingest_spec.clone(), || {
        let i = ingested.insert(ingest_all(&config.inputs, &fields)?);
        Ok((to_jsonl(&i.records), i.summary.clone()))
    })?;
    run.stage("ingest", "rejects.log", ingest_spec, || {
        let i = match ingested.take() {
            Some(i) => i,
            None => ingest_all(&config.inputs, &fields)?,
        };
        Ok((i.rejects.into_bytes(), i.summary))
    })?;
    let records: Vec<ReviewRecord> = from_jsonl(&bytes).map_err(fail("ingest"))?;
    let split = filter_varieties(records.clone());

    // stats
    run.text_stage(
        "stats",
        "report/length_histogram.md",
        StageSpec::new("stats")
            .param("bin_width", config.length.bin_width)
            .param("max_len", config.length.max_len)
            .param("short_max", config.length.short_max)
            .after(&records_w),
        || Ok(length_histogram(&records, &config.length).to_markdown(&config.length)),
    )?;

    // classify
    let classify_spec = StageSpec::new("classify")
        .param("charset_version", tables.version())
        .after(&records_w);
    let (bytes, profiles_w) = run.stage("classify", "profiles.jsonl", classify_spec, || {
        let profiles: Vec<RecordProfile> = split
            .tw
            .iter()
            .chain(&split.cn)
            .map(|r| {
                let p = tables.profile_record(r);
                RecordProfile {
                    record_id: r.record_id.clone(),
                    variety: r.variety,
                    bucket: p.bucket,
                    present: p.present,
                }
            })
            .collect();
        Ok((to_jsonl(&profiles), counts([("profiles", profiles.len())])))
    })?;
    let profiles: Vec<RecordProfile> = from_jsonl(&bytes).map_err(fail("classify"))?;
    let profile_index: ProfileIndex = profiles.iter().map(|p| (p.record_id.clone(), p.bucket)).collect();
    let version = tables.version().to_string();
    run.text_stage(
        "classify",
        "report/script_distribution.md",
        StageSpec::new("classify").after(&profiles_w),
        || Ok(BucketDistribution::from_profiles(&profiles).to_markdown(&version)),
    )?;

    // pair
    let pair_spec = StageSpec::new("pair")
        .param("seed", config.seed)
        .param("negative_max", config.boundaries.negative_max)
        .param("neutral_max", config.boundaries.neutral_max)
        .param("bin_width", config.length.bin_width)
        .param("max_len", config.length.max_len)
        .after(&records_w);
    let (bytes, pairs_w) = run.stage("pair", "pairs.jsonl", pair_spec, || {
        let outcome = build_pairs(&split.tw, &split.cn, config.seed, &config.pairing());
        let summary = counts([
            ("pairs", outcome.pairs.len()),
            ("tw_records", split.tw.len()),
            ("cn_records", split.cn.len()),
            ("other_excluded", split.excluded),
            ("too_long", outcome.too_long),
            ("empty", outcome.empty),
            ("invalid", outcome.invalid),
            ("unpaired_tw", outcome.unpaired_tw),
            ("unpaired_cn", outcome.unpaired_cn),
        ]);
        Ok((to_jsonl(&outcome.pairs), summary))
    })?;
    let pairs: Vec<ReviewPair> = from_jsonl(&bytes).map_err(fail("pair"))?;
    if pairs.is_empty() {
        return Err(fail("pair")("no pairs could be formed from the input"));
    }

    // eval + validate
    let mut endpoints: Vec<(String, Box<dyn ModelEndpoint>)> = Vec::new();
    for spec in &config.endpoints {
        let endpoint = endpoint_from_spec(spec, &config.endpoint_defs, &tables).map_err(fail("eval"))?;
        endpoints.push((spec.clone(), endpoint));
    }
    let mut runs: Vec<(String, PromptVariant, Vec<PredictionOutcome>, Written)> = Vec::new();
    for (spec, endpoint) in &endpoints {
        for &variant in &config.variants {
            let manifest = RunManifest::new(endpoint.name(), variant, config.seed, tables.version());
            let mut eval_spec = StageSpec::new("eval")
                .param("endpoint", endpoint.name())
                .param("variant", variant.as_str())
                .param("seed", config.seed)
                .param("template_version", template_version())
                .param("charset_version", tables.version())
                .param("run_hash", &manifest.hash)
                .after(&pairs_w);
            if let Some(def) = config.endpoint_defs.get(spec) {
                eval_spec = eval_spec
                    .param("base_url", &def.base_url)
                    .param("model", &def.model)
                    .param("supports_system_role", def.supports_system_role);
            }
            let name = format!("{}.{}", slug(spec), variant.as_str());
            let (bytes, eval_w) = run.stage("eval", &format!("completions/{name}.jsonl"), eval_spec, || {
                let eval = run_eval(&pairs, endpoint.as_ref(), variant, config.seed, config.parallelism, tables.version());
                let errors = eval.results.iter().filter(|r| r.transport_error.is_some()).count();
                let summary = counts([("issued", eval.results.len()), ("transport_errors", errors)]);
                Ok((eval.to_jsonl().into_bytes(), summary))
            })?;
            let results: Vec<CompletionResult> = from_jsonl(&bytes).map_err(fail("eval"))?;

            let (bytes, outcomes_w) = run.stage(
                "validate",
                &format!("outcomes/{name}.jsonl"),
                StageSpec::new("validate").after(&eval_w),
                || {
                    let outcomes = outcomes_of(&results);
                    let c = complete_pairs(&outcomes);
                    let summary = counts([
                        ("issued", c.issued),
                        ("valid", c.valid),
                        ("invalid", c.invalid),
                        ("invalid_tw", c.invalid_tw),
                        ("invalid_cn", c.invalid_cn),
                        ("complete_pairs", c.complete.len()),
                    ]);
                    Ok((to_jsonl(&outcomes), summary))
                },
            )?;
            let outcomes: Vec<PredictionOutcome> = from_jsonl(&bytes).map_err(fail("validate"))?;
            runs.push((endpoint.name().to_string(), variant, outcomes, outcomes_w));
        }
    }

    let mut report_spec = StageSpec::new("metrics")
        .param("subsets", config.subsets.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(","))
        .param("short_max", config.length.short_max)
        .after(&profiles_w)
        .after(&pairs_w);
    for (_, _, _, w) in &runs {
        report_spec = report_spec.after(w);
    }

    run.text_stage("validate", "report/validity.md", report_spec.clone(), || {
        let mut table = ValidityTable::default();
        for (model, variant, outcomes, _) in &runs {
            table.add_run(model, *variant, outcomes, &pairs, &config.length);
        }
        Ok(table.to_markdown())
    })?;

    // metrics
    let mut rows = Vec::new();
    for (model, variant, outcomes, _) in &runs {
        let index = index_outcomes(outcomes);
        rows.extend(gap_rows(model, *variant, &pairs, &index, &profile_index, &config.subsets, &config.length));
    }
    run.text_stage("metrics", "report/gap.csv", report_spec.clone(), || gap_csv(&rows).map_err(|e| e.to_string()))?;
    run.text_stage("metrics", "report/gap.md", report_spec.clone(), || gap_markdown(&rows).map_err(|e| e.to_string()))?;
    run.text_stage(
        "metrics",
        "report/score_test.md",
        StageSpec::new("metrics").after(&pairs_w),
        || Ok(score_test_markdown(pairs.len(), score_difference_test(&pairs))),
    )?;

    // mt
    let mut mt_rows = Vec::new();
    if let Some(mt_spec) = &config.mt_endpoint {
        let endpoint = endpoint_from_spec(mt_spec, &config.endpoint_defs, &tables).map_err(fail("mt"))?;
        let cache = config.output_dir.join("mt_cache.jsonl");
        let translator = translator_from_spec(&config.mt_translator, Some(&cache)).map_err(fail("mt"))?;
        let spec = StageSpec::new("mt")
            .param("endpoint", endpoint.name())
            .param("translator", &config.mt_translator)
            .param(
                "directions",
                config.mt_directions.iter().map(|d| d.as_str()).collect::<Vec<_>>().join(","),
            )
            .param("variants", config.variants.iter().map(|v| v.as_str()).collect::<Vec<_>>().join(","))
            .param("seed", config.seed)
            .param("template_version", template_version())
            .after(&pairs_w);
        let (bytes, mt_w) = run.stage("mt", "mt_rows.jsonl", spec, || {
            let mut rows = Vec::new();
            for &variant in &config.variants {
                for &direction in &config.mt_directions {
                    rows.push(mt_gap_rows(
                        endpoint.name(),
                        &pairs,
                        direction,
                        translator.as_ref(),
                        endpoint.as_ref(),
                        variant,
                        config.seed,
                        config.parallelism,
                    ));
                }
            }
            let dropped: usize = rows.iter().map(|r: &MtRow| r.translation_failures).sum();
            Ok((to_jsonl(&rows), counts([("rows", rows.len()), ("translation_failures", dropped)])))
        })?;
        mt_rows = from_jsonl(&bytes).map_err(fail("mt"))?;
        run.text_stage("mt", "report/mt.md", StageSpec::new("mt").after(&mt_w), || Ok(mt_markdown(&mt_rows)))?;
    }

    // sweep
    if let Some(sweep_spec) = &config.sweep_endpoint {
        let endpoint = endpoint_from_spec(sweep_spec, &config.endpoint_defs, &tables).map_err(fail("sweep"))?;
        let sweep_config = SweepConfig {
            bin_width: config.length.bin_width,
            max_len: config.length.max_len,
            per_bin_quota: config.sweep_quota,
            seed: config.seed,
            boundaries: config.boundaries,
        };
        let spec = StageSpec::new("sweep")
            .param("endpoint", endpoint.name())
            .param("quota", config.sweep_quota)
            .param("seed", config.seed)
            .param("template_version", template_version())
            .after(&records_w);
        let mut sweep_records = split.tw.clone();
        sweep_records.extend(split.cn.iter().cloned());
        run.text_stage("sweep", "report/sweep.md", spec, || {
            Ok(length_sweep(&sweep_records, &sweep_config, endpoint.as_ref(), config.parallelism).to_markdown())
        })?;
    }

    // bundle
    let artifacts: Vec<String> = run.stages.iter().map(|s| s.artifact.clone()).collect();
    let (listing, digest) = run.store.bundle_listing(&artifacts).map_err(fail("report"))?;
    let listing = format!("{listing}{digest}  bundle\n");
    std::fs::write(run.store.path("bundle.sha256"), listing).map_err(fail("report"))?;
    write_config_echo(run.store.root(), run.config).map_err(fail("report"))?;

    Ok(RunSummary {
        bundle_sha256: digest,
        pairs: pairs.len(),
        gap_rows: rows,
        mt_rows,
        stages: run.stages,
    })
}

/// The effective settings, for the reader of the bundle.
fn write_config_echo(root: &Path, config: &RunConfig) -> std::io::Result<()> {
    std::fs::write(root.join("run_config.txt"), config.to_kv_text())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs_are_file_safe() {
        assert_eq!(slug("mock:echo-score"), "mock-echo-score");
        assert_eq!(slug("gpt/4o"), "gpt-4o");
    }

    #[test]
    fn missing_input_names_ingest() {
        let dir = tempfile::tempdir().unwrap();
        let config = RunConfig {
            inputs: vec![dir.path().join("absent.jsonl")],
            output_dir: dir.path().join("out"),
            ..RunConfig::default()
        };
        let err = run_pipeline(&config).unwrap_err();
        assert_eq!(err.stage, "ingest");
    }
}
