//! Planted-keyword fixture: 300 utterances over three classes. Each class has
//! five planted words that raise its score and lower the next class's; fifty
//! filler words carry no weight at all.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::formats::{ModelSpecFile, RawUtterance};

pub const CLASSES: [&str; 3] = ["A", "B", "C"];
pub const DIMENSION: &str = "synthetic";
pub const UTTERANCES: usize = 300;

pub const PLANTED: [[&str; 5]; 3] = [
    ["amber", "anchor", "apple", "arrow", "atlas"],
    ["banjo", "basil", "beacon", "bison", "bridge"],
    ["cactus", "canyon", "cedar", "cobalt", "comet"],
];

pub const FILLERS: [&str; 50] = [
    "table", "river", "paper", "stone", "window", "garden", "yellow", "quiet", "simple", "number",
    "morning", "letter", "button", "circle", "forest", "pocket", "silver", "winter", "ladder",
    "mirror", "orange", "pencil", "rabbit", "saddle", "tunnel", "velvet", "wagon", "zipper",
    "kettle", "lemon", "meadow", "needle", "oyster", "puzzle", "quartz", "ribbon", "socket",
    "thimble", "umbrella", "violin", "walnut", "yogurt", "harbor", "island", "jacket", "marble",
    "napkin", "pillow", "tomato", "feather",
];

/// Entity mentions and their gazetteer categories.
const ENTITIES: [(&str, &str); 6] = [
    ("John", "NAME"),
    ("Mary", "NAME"),
    ("New York", "LOCATION"),
    ("laptop", "DEVICE"),
    ("chess", "ENTERTAINMENT"),
    ("textbook", "RESOURCE"),
];

/// Weight a planted word adds to its own class.
pub fn planted_weight(rank: usize) -> f64 {
    1.0 + 0.25 * rank as f64
}

/// Weight a planted word adds to the following class.
pub const CROSS_WEIGHT: f64 = -0.5;

fn utterance(i: usize) -> RawUtterance {
    let class = i % 3;
    let r = i / 3;
    let first = r % 5;
    let second = (first + 1 + (r / 5) % 4) % 5;
    let n_fillers = 3 + i % 4;
    let fillers: Vec<&str> = (0..n_fillers)
        .map(|k| FILLERS[(i * 7 + k * 11 + r) % FILLERS.len()])
        .collect();
    let mut words = vec![fillers[0], PLANTED[class][first], fillers[1]];
    if i % 7 != 6 {
        words.push(ENTITIES[i % ENTITIES.len()].0);
    }
    words.push(PLANTED[class][second]);
    words.extend(&fillers[2..]);
    let mut text = words.join(" ");
    if i.is_multiple_of(5) {
        text.push('?');
    }
    RawUtterance {
        id: format!("s{i:03}"),
        text,
        dimension: Some(DIMENSION.to_string()),
        gold_label: Some(CLASSES[class].to_string()),
    }
}

pub fn corpus() -> Vec<RawUtterance> {
    (0..UTTERANCES).map(utterance).collect()
}

pub fn model_spec() -> ModelSpecFile {
    let mut weights: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for (c, words) in PLANTED.iter().enumerate() {
        for (rank, word) in words.iter().enumerate() {
            weights
                .entry(CLASSES[c].to_string())
                .or_default()
                .insert(word.to_string(), planted_weight(rank));
            weights
                .entry(CLASSES[(c + 1) % 3].to_string())
                .or_default()
                .insert(word.to_string(), CROSS_WEIGHT);
        }
    }
    ModelSpecFile {
        kind: "keyword-score".into(),
        name: Some("synthetic-planted".into()),
        dimension: Some(DIMENSION.into()),
        classes: CLASSES.iter().map(|c| c.to_string()).collect(),
        base: Vec::new(),
        weights,
        triggers: Vec::new(),
        target: None,
        output_mode: Some("score".into()),
    }
}

const CONFIG: &str = r#"# Planted-keyword fixture. Regenerate with `tokenshap synth <dir>`.
corpus = "corpus.jsonl"
gazetteer = "gazetteer.csv"
model = "builtin:model.json"
method = "partition"
output_mode = "score"
seed = 42
workers = 2
out_dir = "out"

[[dimensions]]
name = "synthetic"
classes = ["A", "B", "C"]

[simcheck]
embeddings = "vectors.txt"
threshold = 0.5
anchors = { A = ["amber"], B = ["banjo"], C = ["cactus"] }

[freq]
document = "task.txt"
"#;

const TASK: &str = "Pack the amber lantern and the anchor before crossing the bridge.\n\
Follow the river past the cedar grove, then wait by the stone table.\n\
Each team member carries one apple, one pencil and a copy of the atlas.\n";

/// Three-dimensional vectors: planted words sit near their class axis,
/// except `atlas`, which points at the second class and is meant to be
/// flagged by the similarity check.
fn vectors() -> String {
    let mut rows = Vec::new();
    for (c, words) in PLANTED.iter().enumerate() {
        for (rank, word) in words.iter().enumerate() {
            let axis = if *word == "atlas" { 1 } else { c };
            let mut v = [0.1 * rank as f64; 3];
            v[axis] = 1.0;
            rows.push(format!("{word} {:.4} {:.4} {:.4}", v[0], v[1], v[2]));
        }
    }
    let mut out = format!("{} 3\n", rows.len());
    for row in rows {
        let _ = writeln!(out, "{row}");
    }
    out
}

fn gazetteer() -> String {
    let mut out = String::from("phrase,category\n");
    for (phrase, category) in ENTITIES {
        let _ = writeln!(out, "{},{category}", phrase.to_lowercase());
    }
    out
}

/// Every fixture file as (name, contents).
pub fn fixture_files() -> Vec<(&'static str, String)> {
    let mut corpus_text = String::new();
    for u in corpus() {
        corpus_text.push_str(&serde_json::to_string(&u).expect("corpus rows serialize"));
        corpus_text.push('\n');
    }
    let mut model = serde_json::to_string_pretty(&model_spec()).expect("model spec serializes");
    model.push('\n');
    vec![
        ("config.toml", CONFIG.to_string()),
        ("corpus.jsonl", corpus_text),
        ("gazetteer.csv", gazetteer()),
        ("model.json", model),
        ("task.txt", TASK.to_string()),
        ("vectors.txt", vectors()),
    ]
}

pub fn write_fixture(dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for (name, contents) in fixture_files() {
        fs::write(dir.join(name), contents)?;
    }
    Ok(())
}
