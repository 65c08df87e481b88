use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use varietybench::artifact::{from_jsonl, to_jsonl};
use varietybench::config::{parse_kv, RunConfig};
use varietybench::ingest::{filter_nonempty, filter_varieties, parse_records, FieldMap, ReviewRecord};
use varietybench::llm::{endpoint_from_spec, run_eval, CompletionResult, ModelEndpoint};
use varietybench::metrics::{gap_rows, length_sweep, GapReportRow, SweepConfig};
use varietybench::mt::{mt_gap_rows, mt_markdown, translator_from_spec, TranslationDirection};
use varietybench::pairing::{build_pairs, PairingConfig, ReviewPair};
use varietybench::pipeline::run_pipeline;
use varietybench::prompting::{render, shuffle_seed, PromptVariant};
use varietybench::report::{emit_report, ReportFormat};
use varietybench::script::{BucketDistribution, CharSetTables, ProfileIndex, RecordProfile, Subset};
use varietybench::synth::{generate_text, SynthConfig};
use varietybench::textstats::{length_histogram, LengthConfig};
use varietybench::validate::{complete_pairs, index_outcomes, outcomes_of, PredictionOutcome};

#[derive(Parser)]
#[command(name = "varietybench", version, about = "Paired TW/CN review rating benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw line-delimited reviews into normalized records.
    Ingest(IngestArgs),
    /// Length histogram per variety.
    Stats(StatsArgs),
    /// Script profile per record and the bucket distribution.
    Classify(ClassifyArgs),
    /// Build TW-CN pairs.
    Pair(PairArgs),
    /// Print the prompts a run would send.
    Render(RenderArgs),
    /// Ask one endpoint about both sides of every pair.
    Eval(EvalArgs),
    /// Parse completions and report request accounting.
    Validate(ValidateArgs),
    /// Gap rows for one evaluated run.
    Metrics(MetricsArgs),
    /// Original vs machine-translated texts.
    Mt(MtArgs),
    /// Sentiment accuracy by length bin.
    Sweep(SweepArgs),
    /// Render gap rows as CSV or Markdown.
    Report(ReportArgs),
    /// The whole pipeline from a config file.
    Run(RunArgs),
    /// Write a synthetic raw review file.
    Synth(SynthArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Raw input files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, short)]
    output: PathBuf,
    /// Flat `key = value` file overriding source key names.
    #[arg(long)]
    field_map: Option<PathBuf>,
    /// One line per rejected record with its reason.
    #[arg(long)]
    reject_log: Option<PathBuf>,
}

#[derive(Args, Clone, Copy)]
struct LengthArgs {
    #[arg(long, default_value_t = 10)]
    bin_width: usize,
    #[arg(long, default_value_t = 500)]
    max_len: usize,
    #[arg(long, default_value_t = 49)]
    short_max: usize,
}

impl LengthArgs {
    fn config(self) -> LengthConfig {
        LengthConfig {
            bin_width: self.bin_width,
            max_len: self.max_len,
            short_max: self.short_max,
        }
    }
}

#[derive(Args)]
struct StatsArgs {
    /// Normalized records.
    input: PathBuf,
    #[command(flatten)]
    length: LengthArgs,
}

#[derive(Args)]
struct ClassifyArgs {
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    /// Directory of character-set tables (bundled tables when omitted).
    #[arg(long)]
    charsets: Option<PathBuf>,
}

#[derive(Args)]
struct PairArgs {
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    length: LengthArgs,
}

#[derive(Args)]
struct EndpointArgs {
    /// `mock:*` spec or the name of an endpoint defined in `--config`.
    #[arg(long)]
    model: String,
    /// Config file with `endpoint.<name>.*` definitions.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    charsets: Option<PathBuf>,
}

impl EndpointArgs {
    fn build(&self) -> Result<(Box<dyn ModelEndpoint>, Arc<CharSetTables>)> {
        let tables = Arc::new(load_tables(self.charsets.as_deref())?);
        let defs = match &self.config {
            Some(path) => RunConfig::from_kv_text(&read_text(path)?)?.endpoint_defs,
            None => BTreeMap::new(),
        };
        let endpoint = endpoint_from_spec(&self.model, &defs, &tables).map_err(|e| anyhow!(e))?;
        Ok((endpoint, tables))
    }
}

#[derive(Args)]
struct RenderArgs {
    pairs: PathBuf,
    #[arg(long, default_value = "structured")]
    variant: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fold the system message into the user turn.
    #[arg(long)]
    no_system: bool,
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    pairs: PathBuf,
    #[command(flatten)]
    endpoint: EndpointArgs,
    #[arg(long, default_value = "structured")]
    variant: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Completion results.
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    outcomes: PathBuf,
    /// Script profiles; required for subsets other than `all`.
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Model name written into the rows.
    #[arg(long)]
    model: String,
    #[arg(long)]
    variant: String,
    #[arg(long, default_value = "all")]
    subsets: String,
    #[command(flatten)]
    length: LengthArgs,
    /// Gap rows as JSON lines.
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct MtArgs {
    pairs: PathBuf,
    #[command(flatten)]
    endpoint: EndpointArgs,
    #[arg(long, default_value = "TW_to_CN")]
    direction: String,
    /// `mock:identity`, `mock:charmap` or a translation service URL.
    #[arg(long, default_value = "mock:identity")]
    translator: String,
    /// Translation cache file (HTTP translators only).
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, default_value = "structured")]
    variant: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
}

#[derive(Args)]
struct SweepArgs {
    /// Normalized records.
    input: PathBuf,
    #[command(flatten)]
    endpoint: EndpointArgs,
    #[arg(long, default_value_t = 200)]
    quota: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    #[command(flatten)]
    length: LengthArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Gap rows as JSON lines.
    rows: PathBuf,
    #[arg(long, default_value = "markdown")]
    format: String,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Raw input files (override `input`).
    #[arg(long)]
    input: Vec<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Comma-separated endpoint specs (override `endpoints`).
    #[arg(long)]
    model: Option<String>,
    /// Comma-separated variants (override `variants`).
    #[arg(long)]
    variants: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    field_map: Option<PathBuf>,
    #[arg(long)]
    charsets: Option<PathBuf>,
    /// Any other `key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long, default_value_t = SynthConfig::default().records)]
    records: usize,
    #[arg(long, default_value_t = SynthConfig::default().tw_fraction)]
    tw_fraction: f64,
    #[arg(long, default_value_t = SynthConfig::default().twins)]
    twins: usize,
    #[arg(long, default_value_t = SynthConfig::default().seed)]
    seed: u64,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    from_jsonl(&bytes).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load_tables(dir: Option<&Path>) -> Result<CharSetTables> {
    Ok(match dir {
        Some(dir) => CharSetTables::load_dir(dir)?,
        None => CharSetTables::bundled(),
    })
}

fn rating_variant(s: &str) -> Result<PromptVariant> {
    PromptVariant::parse_rating(s).ok_or_else(|| anyhow!("unknown variant {s:?} (structured, plain, shuffled)"))
}

fn ingest(args: IngestArgs) -> Result<()> {
    let fields = match &args.field_map {
        Some(path) => FieldMap::from_kv_text(&read_text(path)?)?,
        None => FieldMap::default(),
    };
    let mut records = Vec::new();
    let mut log = String::new();
    let (mut lines, mut skipped, mut rejected) = (0, 0, 0);
    for path in &args.inputs {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let prefix = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let report = parse_records(BufReader::new(file), &fields, &prefix)?;
        lines += report.lines;
        skipped += report.skipped.len();
        rejected += report.rejected.len();
        for line in report.reject_log().lines() {
            log.push_str(&format!("{}\t{line}\n", path.display()));
        }
        records.extend(report.records);
    }
    let parsed = records.len();
    let records = filter_nonempty(records);
    write_file(&args.output, &to_jsonl(&records))?;
    if let Some(path) = &args.reject_log {
        write_file(path, log.as_bytes())?;
    }
    let split = filter_varieties(records.clone());
    println!(
        "lines {lines}, parsed {parsed}, skipped {skipped}, rejected {rejected}, empty {}, kept {} (tw {}, cn {}, other {})",
        parsed - records.len(),
        records.len(),
        split.tw.len(),
        split.cn.len(),
        split.excluded
    );
    Ok(())
}

fn stats(args: StatsArgs) -> Result<()> {
    let records: Vec<ReviewRecord> = read_jsonl(&args.input)?;
    let config = args.length.config();
    print!("{}", length_histogram(&records, &config).to_markdown(&config));
    Ok(())
}

fn classify(args: ClassifyArgs) -> Result<()> {
    let tables = load_tables(args.charsets.as_deref())?;
    let records: Vec<ReviewRecord> = read_jsonl(&args.input)?;
    let split = filter_varieties(records);
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
    write_file(&args.output, &to_jsonl(&profiles))?;
    print!("{}", BucketDistribution::from_profiles(&profiles).to_markdown(tables.version()));
    Ok(())
}

fn pair(args: PairArgs) -> Result<()> {
    let records: Vec<ReviewRecord> = read_jsonl(&args.input)?;
    let split = filter_varieties(records);
    let config = PairingConfig {
        length: args.length.config(),
        ..PairingConfig::default()
    };
    let outcome = build_pairs(&split.tw, &split.cn, args.seed, &config);
    write_file(&args.output, &to_jsonl(&outcome.pairs))?;
    println!(
        "pairs {}, unpaired tw {}, unpaired cn {}, too long {}, empty {}, invalid {}",
        outcome.pairs.len(),
        outcome.unpaired_tw,
        outcome.unpaired_cn,
        outcome.too_long,
        outcome.empty,
        outcome.invalid
    );
    Ok(())
}

fn render_prompts(args: RenderArgs) -> Result<()> {
    let pairs: Vec<ReviewPair> = read_jsonl(&args.pairs)?;
    let variant = match args.variant.as_str() {
        "sentiment" => PromptVariant::Sentiment,
        other => rating_variant(other)?,
    };
    let mut out = std::io::stdout().lock();
    for p in pairs.iter().take(args.limit.unwrap_or(usize::MAX)) {
        for side in varietybench::Side::BOTH {
            let prompt = render(p.side(side), variant, shuffle_seed(args.seed, &p.pair_id, side), !args.no_system);
            let line = serde_json::json!({
                "pair_id": p.pair_id,
                "side": side,
                "prompt": prompt,
            });
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let pairs: Vec<ReviewPair> = read_jsonl(&args.pairs)?;
    let (endpoint, tables) = args.endpoint.build()?;
    let variant = rating_variant(&args.variant)?;
    if args.parallelism == 0 {
        bail!("--parallelism must be at least 1");
    }
    let run = run_eval(&pairs, endpoint.as_ref(), variant, args.seed, args.parallelism, tables.version());
    write_file(&args.output, run.to_jsonl().as_bytes())?;
    let manifest = args.output.with_extension("manifest.json");
    write_file(&manifest, format!("{}\n", serde_json::to_string_pretty(&run.manifest)?).as_bytes())?;
    let errors = run.results.iter().filter(|r| r.transport_error.is_some()).count();
    println!("issued {}, transport errors {errors}, run hash {}", run.results.len(), run.manifest.hash);
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<()> {
    let results: Vec<CompletionResult> = read_jsonl(&args.input)?;
    let outcomes = outcomes_of(&results);
    write_file(&args.output, &to_jsonl(&outcomes))?;
    let c = complete_pairs(&outcomes);
    println!(
        "issued {}, valid {}, invalid {} (tw {}, cn {}), complete pairs {}",
        c.issued,
        c.valid,
        c.invalid,
        c.invalid_tw,
        c.invalid_cn,
        c.complete.len()
    );
    for (reason, n) in &c.invalid_by_reason {
        println!("  {reason:?}: {n}");
    }
    Ok(())
}

fn metrics(args: MetricsArgs) -> Result<()> {
    let pairs: Vec<ReviewPair> = read_jsonl(&args.pairs)?;
    let outcomes: Vec<PredictionOutcome> = read_jsonl(&args.outcomes)?;
    let subsets = args
        .subsets
        .split(',')
        .map(|s| Subset::parse(s).ok_or_else(|| anyhow!("unknown subset {s:?}")))
        .collect::<Result<Vec<_>>>()?;
    let profiles: ProfileIndex = match &args.profiles {
        Some(path) => read_jsonl::<RecordProfile>(path)?
            .into_iter()
            .map(|p| (p.record_id, p.bucket))
            .collect(),
        None if subsets.iter().any(|&s| s != Subset::All) => bail!("--profiles is needed for subsets other than all"),
        None => ProfileIndex::new(),
    };
    let rows = gap_rows(
        &args.model,
        rating_variant(&args.variant)?,
        &pairs,
        &index_outcomes(&outcomes),
        &profiles,
        &subsets,
        &args.length.config(),
    );
    write_file(&args.output, &to_jsonl(&rows))?;
    print!("{}", emit_report(&rows, ReportFormat::Markdown)?);
    Ok(())
}

fn mt(args: MtArgs) -> Result<()> {
    let pairs: Vec<ReviewPair> = read_jsonl(&args.pairs)?;
    let (endpoint, _) = args.endpoint.build()?;
    let direction = TranslationDirection::parse(&args.direction)
        .ok_or_else(|| anyhow!("unknown direction {:?} (TW_to_CN, CN_to_TW)", args.direction))?;
    let translator = translator_from_spec(&args.translator, args.cache.as_deref()).map_err(|e| anyhow!(e))?;
    let row = mt_gap_rows(
        endpoint.name(),
        &pairs,
        direction,
        translator.as_ref(),
        endpoint.as_ref(),
        rating_variant(&args.variant)?,
        args.seed,
        args.parallelism,
    );
    print!("{}", mt_markdown(std::slice::from_ref(&row)));
    println!("\ntranslation failures: {}", row.translation_failures);
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let records: Vec<ReviewRecord> = read_jsonl(&args.input)?;
    let (endpoint, _) = args.endpoint.build()?;
    let split = filter_varieties(records);
    let mut records = split.tw;
    records.extend(split.cn);
    let config = SweepConfig {
        bin_width: args.length.bin_width,
        max_len: args.length.max_len,
        per_bin_quota: args.quota,
        seed: args.seed,
        ..SweepConfig::default()
    };
    print!("{}", length_sweep(&records, &config, endpoint.as_ref(), args.parallelism).to_markdown());
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let rows: Vec<GapReportRow> = read_jsonl(&args.rows)?;
    let format = ReportFormat::parse(&args.format).ok_or_else(|| anyhow!("unknown format {:?} (csv, markdown)", args.format))?;
    let text = emit_report(&rows, format)?;
    match &args.output {
        Some(path) => write_file(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(args: RunArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => RunConfig::from_kv_text(&read_text(path)?)?,
        None => RunConfig::default(),
    };
    let mut overrides = BTreeMap::new();
    let mut put = |k: &str, v: String| overrides.insert(k.to_string(), v);
    if !args.input.is_empty() {
        put("input", args.input.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(","));
    }
    if let Some(v) = &args.output {
        put("output", v.display().to_string());
    }
    if let Some(v) = &args.model {
        put("endpoints", v.clone());
    }
    if let Some(v) = &args.variants {
        put("variants", v.clone());
    }
    if let Some(v) = args.seed {
        put("seed", v.to_string());
    }
    if let Some(v) = args.parallelism {
        put("parallelism", v.to_string());
    }
    if let Some(v) = args.max_len {
        put("max_len", v.to_string());
    }
    if let Some(v) = &args.field_map {
        put("field_map", v.display().to_string());
    }
    if let Some(v) = &args.charsets {
        put("charsets", v.display().to_string());
    }
    let extra = parse_kv(&args.set.join("\n"))?;
    for (k, v) in extra {
        put(&k, v);
    }
    config.apply(&overrides)?;
    let summary = run_pipeline(&config)?;
    let reused = summary.stages.iter().filter(|s| s.reused).count();
    println!(
        "pairs {}, gap rows {}, artifacts {} ({reused} reused), bundle {}",
        summary.pairs,
        summary.gap_rows.len(),
        summary.stages.len(),
        summary.bundle_sha256
    );
    println!("report: {}", config.output_dir.join("report/gap.md").display());
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        records: args.records,
        tw_fraction: args.tw_fraction,
        twins: args.twins,
        seed: args.seed,
        ..SynthConfig::default()
    };
    if !(0.0..=1.0).contains(&config.tw_fraction) {
        bail!("--tw-fraction must be within [0, 1]");
    }
    write_file(&args.output, generate_text(&config).as_bytes())?;
    println!("wrote {} lines to {}", config.records, args.output.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, result) = match cli.command {
        Command::Ingest(a) => ("ingest", ingest(a)),
        Command::Stats(a) => ("stats", stats(a)),
        Command::Classify(a) => ("classify", classify(a)),
        Command::Pair(a) => ("pair", pair(a)),
        Command::Render(a) => ("render", render_prompts(a)),
        Command::Eval(a) => ("eval", eval(a)),
        Command::Validate(a) => ("validate", validate(a)),
        Command::Metrics(a) => ("metrics", metrics(a)),
        Command::Mt(a) => ("mt", mt(a)),
        Command::Sweep(a) => ("sweep", sweep(a)),
        Command::Report(a) => ("report", report(a)),
        Command::Run(a) => ("run", run(a)),
        Command::Synth(a) => ("synth", synth(a)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{stage}]: {e:#}");
            ExitCode::FAILURE
        }
    }
}
