use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_varietybench"))
}

fn ok(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "{:?} failed:\n{}",
        cmd,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn failing(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(!out.status.success(), "{cmd:?} unexpectedly succeeded");
    out
}

struct Workdir {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workdir {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        ok(bin().args(["synth", "--records", "300", "--twins", "90", "-o"]).arg(root.join("raw.jsonl")));
        Self { _dir: dir, root }
    }

    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn stage_by_stage_chain() {
    let w = Workdir::new();
    let summary = ok(bin().arg("ingest").arg(w.p("raw.jsonl")).arg("-o").arg(w.p("rec.jsonl")).arg("--reject-log").arg(w.p("rej.log")));
    assert!(summary.starts_with("lines 300,"), "{summary}");
    assert!(lines(&w.p("rej.log")) > 0);

    let hist = ok(bin().arg("stats").arg(w.p("rec.jsonl")));
    assert!(hist.starts_with("| bin | range | TW | CN |"));

    let dist = ok(bin().arg("classify").arg(w.p("rec.jsonl")).arg("-o").arg(w.p("prof.jsonl")));
    assert!(dist.contains("| Only Traditional |"));
    // other-nationality records are not profiled
    let other = std::fs::read_to_string(w.p("rec.jsonl")).unwrap().matches("\"variety\":\"Other\"").count();
    assert!(other > 0);
    assert_eq!(lines(&w.p("prof.jsonl")), lines(&w.p("rec.jsonl")) - other);

    let paired = ok(bin().arg("pair").arg(w.p("rec.jsonl")).arg("-o").arg(w.p("pairs.jsonl")));
    assert!(paired.starts_with("pairs "), "{paired}");
    let n_pairs = lines(&w.p("pairs.jsonl"));
    assert!(n_pairs >= 90);

    let prompts = ok(bin().arg("render").arg(w.p("pairs.jsonl")).args(["--variant", "plain", "--limit", "2", "--no-system"]));
    assert_eq!(prompts.lines().count(), 4);
    assert!(prompts.contains("\"system_text\":null"));

    ok(bin().arg("eval").arg(w.p("pairs.jsonl")).args(["--model", "mock:noisy", "--variant", "plain", "--parallelism", "3", "-o"]).arg(w.p("comp.jsonl")));
    assert_eq!(lines(&w.p("comp.jsonl")), 2 * n_pairs);
    assert!(w.p("comp.manifest.json").exists());

    let accounting = ok(bin().arg("validate").arg(w.p("comp.jsonl")).arg("-o").arg(w.p("out.jsonl")));
    assert!(accounting.starts_with(&format!("issued {},", 2 * n_pairs)), "{accounting}");

    ok(bin()
        .arg("metrics")
        .arg("--pairs")
        .arg(w.p("pairs.jsonl"))
        .arg("--outcomes")
        .arg(w.p("out.jsonl"))
        .arg("--profiles")
        .arg(w.p("prof.jsonl"))
        .args(["--model", "mock:noisy", "--variant", "plain", "--subsets", "all,chinese-only", "-o"])
        .arg(w.p("rows.jsonl")));
    assert_eq!(lines(&w.p("rows.jsonl")), 6);

    let csv = ok(bin().arg("report").arg(w.p("rows.jsonl")).args(["--format", "csv"]));
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("model,variant,length_group,subset,n_pairs,"));
    ok(bin().arg("report").arg(w.p("rows.jsonl")).arg("-o").arg(w.p("gap.md")));
    assert!(std::fs::read_to_string(w.p("gap.md")).unwrap().contains("## Subset: ChineseOnly"));

    let mt = ok(bin().arg("mt").arg(w.p("pairs.jsonl")).args(["--model", "mock:script-biased", "--translator", "mock:charmap", "--direction", "CN_to_TW"]));
    assert!(mt.contains("| structured | cn |"), "{mt}");

    let sweep = ok(bin().arg("sweep").arg(w.p("rec.jsonl")).args(["--model", "mock:echo-sentiment", "--quota", "10"]));
    assert!(sweep.starts_with("| bin | range | negative | neutral | positive |"));
}

#[test]
fn eval_is_independent_of_parallelism() {
    let w = Workdir::new();
    ok(bin().arg("ingest").arg(w.p("raw.jsonl")).arg("-o").arg(w.p("rec.jsonl")));
    ok(bin().arg("pair").arg(w.p("rec.jsonl")).arg("-o").arg(w.p("pairs.jsonl")));
    for (p, name) in [("1", "a.jsonl"), ("8", "b.jsonl")] {
        ok(bin().arg("eval").arg(w.p("pairs.jsonl")).args(["--model", "mock:noisy", "--variant", "shuffled", "--parallelism", p, "-o"]).arg(w.p(name)));
    }
    assert_eq!(std::fs::read(w.p("a.jsonl")).unwrap(), std::fs::read(w.p("b.jsonl")).unwrap());
}

#[test]
fn run_with_config_and_overrides() {
    let w = Workdir::new();
    let config = w.p("run.conf");
    std::fs::write(
        &config,
        format!(
            "# test run\ninput = {}\noutput_dir = {}\nendpoints = mock:echo-score, mock:biased-tw-1\nvariants = plain\n",
            w.p("raw.jsonl").display(),
            w.p("out").display()
        ),
    )
    .unwrap();
    let first = ok(bin().arg("run").arg("--config").arg(&config).args(["--set", "mt_endpoint=mock:echo"]));
    assert!(first.contains("report"), "{first}");
    let gap = std::fs::read_to_string(w.p("out/report/gap.csv")).unwrap();
    assert!(gap.contains("mock:biased-tw-1,plain,Overall,All,"));
    assert!(!gap.contains("structured"));
    assert!(w.p("out/report/mt.md").exists());
    assert!(w.p("out/bundle.sha256").exists());

    let bundle = std::fs::read(w.p("out/bundle.sha256")).unwrap();
    ok(bin().arg("run").arg("--config").arg(&config).args(["--set", "mt_endpoint=mock:echo"]));
    assert_eq!(bundle, std::fs::read(w.p("out/bundle.sha256")).unwrap());

    // flags override the file
    ok(bin().arg("run").arg("--config").arg(&config).args(["--model", "mock:constant-5", "--variants", "structured", "-o"]).arg(w.p("out2")));
    let gap2 = std::fs::read_to_string(w.p("out2/report/gap.csv")).unwrap();
    assert!(gap2.lines().skip(1).all(|l| l.starts_with("mock:constant-5,structured,")));
}

#[test]
fn failures_exit_non_zero_and_name_the_stage() {
    let w = Workdir::new();
    let out = failing(bin().arg("ingest").arg(w.p("missing.jsonl")).arg("-o").arg(w.p("rec.jsonl")));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error [ingest]:"));

    ok(bin().arg("ingest").arg(w.p("raw.jsonl")).arg("-o").arg(w.p("rec.jsonl")));
    ok(bin().arg("pair").arg(w.p("rec.jsonl")).arg("-o").arg(w.p("pairs.jsonl")));
    let out = failing(bin().arg("eval").arg(w.p("pairs.jsonl")).args(["--model", "mock:bogus", "-o"]).arg(w.p("x.jsonl")));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error [eval]:") && err.contains("mock:bogus"), "{err}");

    let out = failing(bin().arg("eval").arg(w.p("pairs.jsonl")).args(["--model", "mock:echo", "--variant", "poetic", "-o"]).arg(w.p("x.jsonl")));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown variant"));

    let out = failing(bin().arg("run").arg("--input").arg(w.p("raw.jsonl")).args(["--set", "neutral_max=2", "-o"]).arg(w.p("o")));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error [run]:"));

    let out = failing(bin().arg("run").arg("--input").arg(w.p("raw.jsonl")).args(["--model", "nowhere", "-o"]).arg(w.p("o")));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stage `eval` failed"), "{err}");

    let out = failing(bin().arg("run").arg("--input").arg(w.p("raw.jsonl")).args(["--set", "colour=blue"]));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn custom_field_map() {
    let w = Workdir::new();
    let raw = std::fs::read_to_string(w.p("raw.jsonl")).unwrap().replace("\"score\":", "\"rating\":");
    std::fs::write(w.p("renamed.jsonl"), raw).unwrap();
    std::fs::write(w.p("fields.conf"), "score = rating\n").unwrap();
    let with_map = ok(bin().arg("ingest").arg(w.p("renamed.jsonl")).arg("--field-map").arg(w.p("fields.conf")).arg("-o").arg(w.p("a.jsonl")));
    let plain = ok(bin().arg("ingest").arg(w.p("raw.jsonl")).arg("-o").arg(w.p("b.jsonl")));
    assert_eq!(with_map, plain);
}
