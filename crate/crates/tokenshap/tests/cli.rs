//! The `tokenshap` binary end to end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tokenshap::synthetic;

fn tokenshap(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tokenshap"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn error_record(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {stderr}"))
}

struct Project {
    dir: tempfile::TempDir,
}

impl Project {
    fn new(config: &str, files: &[(&str, &str)]) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("config.toml"), config).unwrap();
        for (name, contents) in files {
            fs::write(dir.path().join(name), contents).unwrap();
        }
        Project { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        let mut all = vec!["--config", "config.toml"];
        all.extend(args);
        tokenshap(&all, self.dir.path())
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.path(format!("out/{name}").as_str())).unwrap()
    }
}

const MODEL: &str = r#"{"kind":"keyword-score","classes":["A","B"],"weights":{"A":{"w0":1.0,"w3":2.0}}}"#;

fn words(n: usize) -> String {
    (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
}

fn small_project(method: &str, text: &str) -> Project {
    let config = format!(
        "corpus = \"corpus.jsonl\"\nmodel = \"builtin:model.json\"\nmethod = \"{method}\"\noutput_mode = \"score\"\n"
    );
    let corpus = format!("{{\"id\":\"u1\",\"text\":\"{text}\"}}\n");
    Project::new(&config, &[("model.json", MODEL), ("corpus.jsonl", &corpus)])
}

#[test]
fn exact_over_cap_is_a_stage_failure() {
    let p = small_project("exact", &words(25));
    assert!(p.run(&["mask"]).status.success());
    let out = p.run(&["explain"]);
    assert_eq!(out.status.code(), Some(3));
    let record = error_record(&out);
    assert_eq!(record["error"]["stage"], "explain");
    assert_eq!(record["error"]["exit_code"], 3);
    assert!(record["error"]["message"].as_str().unwrap().contains("25"));
    // The same utterance is fine for the partition explainer.
    assert!(p.run(&["--method", "partition", "explain"]).status.success());
}

#[test]
fn validation_failures_exit_two() {
    let p = small_project("exact", "a b");
    let out = p.run(&["--method", "sideways", "mask"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"]["kind"], "validation");

    let out = tokenshap(&["mask"], p.dir.path());
    assert_eq!(out.status.code(), Some(2), "missing --config");

    let out = tokenshap(&["--config", "nope.toml", "mask"], p.dir.path());
    assert_eq!(out.status.code(), Some(2));

    let p = Project::new("corpus = \"absent.jsonl\"\n", &[]);
    assert_eq!(p.run(&["mask"]).status.code(), Some(2));
}

#[test]
fn missing_upstream_artifact_is_a_stage_failure() {
    let p = small_project("partition", "a b");
    let out = p.run(&["aggregate"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(error_record(&out)["error"]["message"]
        .as_str()
        .unwrap()
        .contains("attributions.jsonl"));
}

#[test]
fn bench_reports_evaluation_budgets() {
    let p = small_project("partition", "unused");
    let out = p.run(&["bench", "--text", &words(10)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = p.read("bench.csv");
    let evals: Vec<(String, u64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[3].parse().unwrap())
        })
        .collect();
    let of = |m: &str| evals.iter().find(|(k, _)| k == m).unwrap().1;
    assert_eq!(of("exact"), 1024);
    assert!(of("partition") <= 42);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("1024"));
}

#[test]
fn corrections_round_trip() {
    let config = "corpus = \"corpus.jsonl\"\ngazetteer = \"gazetteer.csv\"\ncorrections = \"corrections.csv\"\n\
                  model = \"builtin:model.json\"\noutput_mode = \"score\"\n";
    let corpus = "{\"id\":\"u1\",\"text\":\"Ask John about New York\"}\n{\"id\":\"u2\",\"text\":\"fine\"}\n";
    let gazetteer = "phrase,category\njohn,NAME\nnew york,LOCATION\n";
    let p = Project::new(
        config,
        &[
            ("model.json", MODEL),
            ("corpus.jsonl", corpus),
            ("gazetteer.csv", gazetteer),
            ("corrections.csv", "utterance_id,start,end,category,placeholder,decision\n"),
        ],
    );
    assert!(p.run(&["mask"]).status.success());
    let proposals = p.read("proposals.csv");
    assert_eq!(
        proposals,
        "utterance_id,start,end,category,placeholder,decision\nu1,1,2,NAME,[NAME],\nu1,3,5,LOCATION,[LOCATION],\n"
    );
    let reviewed = proposals.replace("[NAME],\n", "[NAME],reject\n").replace("[LOCATION],\n", "[LOCATION],recategorize:DEVICE\n");
    fs::write(p.path("corrections.csv"), reviewed).unwrap();
    let out = p.run(&["correct"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let corrected = p.read("corrected.jsonl");
    let first: serde_json::Value = serde_json::from_str(corrected.lines().next().unwrap()).unwrap();
    assert_eq!(first["tokens"], serde_json::json!(["ask", "john", "about", "[DEVICE]"]));

    fs::write(
        p.path("corrections.csv"),
        "utterance_id,start,end,category,placeholder,decision\nu9,0,1,NAME,[NAME],\n",
    )
    .unwrap();
    let out = p.run(&["correct"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn synth_writes_the_bundled_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("fx");
    let out = tokenshap(&["synth", target.to_str().unwrap()], dir.path());
    assert!(out.status.success());
    for (name, contents) in synthetic::fixture_files() {
        assert_eq!(fs::read_to_string(target.join(name)).unwrap(), contents);
    }
}

#[test]
fn stages_after_pipeline_on_fixture() {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic");
    let out_dir = tempfile::tempdir().unwrap();
    let out = out_dir.path().to_str().unwrap();
    let config = fixture.join("config.toml");
    let config = config.to_str().unwrap();
    for stage in ["pipeline", "freq", "simcheck", "eval"] {
        let o = tokenshap(&["--config", config, "--out-dir", out, stage], out_dir.path());
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let eval = fs::read_to_string(out_dir.path().join("eval.csv")).unwrap();
    assert!(eval.ends_with("weighted,,,1.0,300\n"), "{eval}");
    let simcheck = fs::read_to_string(out_dir.path().join("simcheck.csv")).unwrap();
    let flagged: Vec<&str> = simcheck.lines().filter(|l| l.ends_with(",spurious")).collect();
    assert_eq!(flagged.len(), 1);
    assert!(flagged[0].starts_with("A,atlas,amber,"));
    let freq = fs::read_to_string(out_dir.path().join("frequency.csv")).unwrap();
    assert!(freq.contains("\namber,1\n"));
    assert!(freq.contains("\n[NAME],0\n"));
}
