//! Bridge client against a scripted Python worker.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use tokenshap::bridge::BridgeAdapter;
use tokenshap::formats::ModelSpecFile;
use tokenshap::synthetic;
use tokenshap_core::attribution::{explain_corpus, explain_utterance, ExplainConfig, Method};
use tokenshap_core::corpus::TokenizedUtterance;
use tokenshap_core::model::{make_builtin, Coalition, MaskedInput, MaskingStrategy, ModelAdapter};
use tokenshap_core::Error;

fn python() -> bool {
    Command::new("python3").arg("--version").output().is_ok()
}

fn softmax_spec() -> ModelSpecFile {
    ModelSpecFile {
        kind: "keyword-softmax".into(),
        output_mode: None,
        ..synthetic::model_spec()
    }
}

struct Setup {
    _dir: tempfile::TempDir,
    model: PathBuf,
}

fn setup() -> Setup {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    std::fs::write(&model, serde_json::to_string(&softmax_spec()).unwrap()).unwrap();
    Setup { _dir: dir, model }
}

fn stub_command(model: &Path, extra: &str) -> String {
    let stub = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/stub_worker.py");
    format!("python3 {} {} {extra}", stub.display(), model.display())
}

fn spawn(model: &Path, extra: &str, timeout: Duration) -> BridgeAdapter {
    BridgeAdapter::spawn(
        &stub_command(model, extra),
        None,
        synthetic::DIMENSION,
        MaskingStrategy::Substitute,
        timeout,
    )
    .unwrap()
}

fn synthetic_corpus() -> Vec<TokenizedUtterance> {
    synthetic::corpus()
        .into_iter()
        .map(|r| TokenizedUtterance::from_text(r.id, &r.text).unwrap())
        .collect()
}

#[test]
fn handshake_declares_head() {
    if !python() {
        return;
    }
    let s = setup();
    let bridge = spawn(&s.model, "", Duration::from_secs(5));
    assert_eq!(bridge.dimension().classes(), synthetic::CLASSES);
    assert_eq!(bridge.output_mode().as_str(), "probability");
    assert_eq!(bridge.name(), "synthetic-planted");
}

#[test]
fn bridge_attributions_match_builtin() {
    if !python() {
        return;
    }
    let s = setup();
    let bridge = spawn(&s.model, "", Duration::from_secs(5));
    let builtin = make_builtin(&softmax_spec().to_spec().unwrap()).unwrap();
    let config = ExplainConfig::default();
    for method in [Method::Partition, Method::Exact] {
        let corpus = synthetic_corpus();
        let corpus = if method == Method::Exact { &corpus[..30] } else { &corpus[..] };
        let via_bridge = explain_corpus(&bridge, corpus, method, &config).unwrap();
        let via_builtin = explain_corpus(&builtin, corpus, method, &config).unwrap();
        assert!(via_bridge.skipped.is_empty());
        assert_eq!(via_bridge.results.len(), via_builtin.results.len());
        for (a, b) in via_bridge.results.iter().zip(&via_builtin.results) {
            for (ca, cb) in a.classes.iter().zip(&b.classes) {
                for (x, y) in ca.phi.iter().zip(&cb.phi) {
                    assert!((x - y).abs() <= 1e-6, "{} {}: {x} vs {y}", a.utterance_id, ca.class);
                }
            }
        }
    }
}

#[test]
fn thousand_random_requests_round_trip() {
    if !python() {
        return;
    }
    let s = setup();
    let bridge = spawn(&s.model, "", Duration::from_secs(5));
    let builtin = make_builtin(&softmax_spec().to_spec().unwrap()).unwrap();
    let corpus = synthetic_corpus();
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    for _ in 0..1000 {
        let u = &corpus[next() as usize % corpus.len()];
        let batch = 1 + next() as usize % 4;
        let inputs: Vec<MaskedInput> = (0..batch)
            .map(|_| MaskedInput::new(u, Coalition::from_mask(u.len(), next())))
            .collect();
        let got = bridge.predict_batch(&inputs).unwrap();
        let want = builtin.predict_batch(&inputs).unwrap();
        assert_eq!(got.len(), batch);
        for (g, w) in got.iter().zip(&want) {
            for (x, y) in g.values().iter().zip(w.values()) {
                assert!((x - y).abs() <= 1e-9);
            }
        }
    }
    assert_eq!(bridge.eval_count(), builtin.eval_count());
}

#[test]
fn malformed_worker_lines_are_ignored() {
    if !python() {
        return;
    }
    let s = setup();
    let bridge = spawn(&s.model, "--garbage", Duration::from_secs(5));
    let u = TokenizedUtterance::from_words("u", &["amber", "table"]);
    let r = explain_utterance(&bridge, &u, Method::Exact, &ExplainConfig::default()).unwrap();
    assert!(r.classes[0].phi[0] > 0.0);
}

#[test]
fn killed_worker_is_an_adapter_failure() {
    if !python() {
        return;
    }
    let s = setup();
    let bridge = spawn(&s.model, "--die-after 3", Duration::from_secs(5));
    let corpus = synthetic_corpus();
    let start = Instant::now();
    let config = ExplainConfig {
        batch_size: 4,
        ..ExplainConfig::default()
    };
    let out = explain_corpus(&bridge, &corpus[..5], Method::Partition, &config).unwrap();
    assert!(start.elapsed() < Duration::from_secs(10));
    assert_eq!(out.skipped.len(), 5 - out.results.len());
    assert!(!out.skipped.is_empty());
    let u = &corpus[0];
    let err = bridge
        .predict_batch(&[MaskedInput::new(u, Coalition::full(u.len()))])
        .unwrap_err();
    assert!(matches!(err, Error::Adapter { .. }), "{err:?}");
}

#[test]
fn hung_worker_times_out() {
    if !python() {
        return;
    }
    let s = setup();
    let bridge = spawn(&s.model, "--hang-after 1", Duration::from_millis(500));
    let u = TokenizedUtterance::from_words("u", &["amber", "table"]);
    let full = [MaskedInput::new(&u, Coalition::full(2))];
    bridge.predict_batch(&full).unwrap();
    let start = Instant::now();
    let err = bridge.predict_batch(&full).unwrap_err();
    assert!(start.elapsed() < Duration::from_secs(3));
    let Error::Adapter { message, .. } = err else { panic!("{err:?}") };
    assert!(message.contains("timed out"), "{message}");
}

#[test]
fn worker_that_never_handshakes_fails_fast() {
    let start = Instant::now();
    let err = BridgeAdapter::spawn(
        "echo hello; sleep 30",
        None,
        "d",
        MaskingStrategy::Substitute,
        Duration::from_millis(300),
    )
    .err()
    .unwrap();
    assert!(err.contains("handshake failed"), "{err}");
    assert!(start.elapsed() < Duration::from_secs(3));
    assert!(BridgeAdapter::spawn("exit 0", None, "d", MaskingStrategy::Substitute, Duration::from_secs(5)).is_err());
}
