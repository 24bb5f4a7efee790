//! Pipeline stages. Each reads the files written by the previous stage from
//! the output directory and writes its own.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use tokenshap_core::aggregate::{
    aggregate_avg_shap, min_ratio_diagnostic, rank_entries, task_text_frequency, weighted_f1,
    AggregateEntry, AggregateOptions, RankedWordList, Scope,
};
use tokenshap_core::attribution::{
    explain_member, explain_utterance, CorpusExplanation, Method, Outcome, Skipped,
};
use tokenshap_core::corpus::{
    apply_corrections, apply_gazetteer, Dimension, Gazetteer, TokenizedUtterance,
};
use tokenshap_core::model::{make_builtin, predicted_class, ModelAdapter};
use tokenshap_core::report::{build_heatmap, render_svg};
use tokenshap_core::simcheck::{spuriousness_report, EmbeddingStore};
use tokenshap_core::Error;

use crate::bridge::BridgeAdapter;
use crate::config::{ModelRef, RunConfig};
use crate::error::{CliError, CliResult};
use crate::formats::*;

pub const MASKED: &str = "masked.jsonl";
pub const PROPOSALS: &str = "proposals.csv";
pub const CORRECTED: &str = "corrected.jsonl";
pub const ATTRIBUTIONS: &str = "attributions.jsonl";
pub const SKIPPED: &str = "skipped.json";
pub const AVG_SHAP: &str = "avg_shap.csv";
pub const RANKED: &str = "ranked.csv";
pub const MIN_RATIO: &str = "min_ratio.csv";
pub const HEATMAP_SVG: &str = "heatmap.svg";
pub const HEATMAP_CSV: &str = "heatmap.csv";
pub const FREQUENCY: &str = "frequency.csv";
pub const SIMCHECK: &str = "simcheck.csv";
pub const EVAL: &str = "eval.csv";
pub const BENCH: &str = "bench.csv";

pub type Adapter = Box<dyn ModelAdapter + Send + Sync>;

fn out_dir(stage: &'static str, config: &RunConfig) -> CliResult<()> {
    fs::create_dir_all(&config.out_dir).map_err(|e| CliError::io(stage, &config.out_dir, e))
}

/// Path of an upstream artifact, which must already exist.
fn upstream(stage: &'static str, config: &RunConfig, file: &str) -> CliResult<PathBuf> {
    let path = config.out(file);
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::stage(
            stage,
            format!("{} is missing; run the stage that produces it first", path.display()),
        ))
    }
}

fn required<'a, T>(what: &str, value: &'a Option<T>) -> CliResult<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| CliError::validation(format!("the config does not set `{what}`")))
}

/// Loads the configured model and checks it against the configured
/// dimension and output mode.
pub fn load_model(stage: &'static str, config: &RunConfig) -> CliResult<Adapter> {
    let dim_name = config.dimension.as_ref().map(|d| d.name().to_string());
    let adapter: Adapter = match required("model", &config.model)? {
        ModelRef::Builtin(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(stage, path, e))?;
            let file: ModelSpecFile = serde_json::from_str(&text)
                .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
            let mut spec = file
                .to_spec()
                .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
            match (spec.output_mode, config.output_mode) {
                (Some(a), Some(b)) if a != b => {
                    return Err(CliError::validation(format!(
                        "the config asks for {b} output but {} declares {a}",
                        path.display()
                    )))
                }
                (None, wanted) => spec.output_mode = wanted,
                _ => {}
            }
            if spec.dimension.is_none() {
                spec.dimension = dim_name.clone();
            }
            let model = make_builtin(&spec)
                .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
            Box::new(model)
        }
        ModelRef::Bridge(command) => {
            let adapter = BridgeAdapter::spawn(
                command,
                Some(&config.base_dir),
                dim_name.as_deref().unwrap_or("default"),
                config.masking,
                config.request_timeout,
            )
            .map_err(|e| CliError::stage(stage, e))?;
            if let Some(wanted) = config.output_mode {
                if adapter.output_mode() != wanted {
                    return Err(CliError::validation(format!(
                        "the config asks for {wanted} output but the bridge worker declares {}",
                        adapter.output_mode()
                    )));
                }
            }
            Box::new(adapter)
        }
    };
    if let Some(d) = &config.dimension {
        if adapter.dimension().classes() != d.classes() {
            return Err(CliError::validation(format!(
                "dimension `{}` has classes {:?} but the model outputs {:?}",
                d.name(),
                d.classes(),
                adapter.dimension().classes()
            )));
        }
    }
    Ok(adapter)
}

/// The active dimension: the configured one, else the model's.
fn dimension(stage: &'static str, config: &RunConfig) -> CliResult<Dimension> {
    match &config.dimension {
        Some(d) => Ok(d.clone()),
        None => Ok(load_model(stage, config)?.dimension().clone()),
    }
}

fn read_raw_corpus(stage: &'static str, config: &RunConfig) -> CliResult<Vec<RawUtterance>> {
    let path = required("corpus", &config.corpus)?;
    let corpus: Vec<RawUtterance> = read_jsonl(stage, path)?;
    let mut seen = BTreeSet::new();
    for u in &corpus {
        if !seen.insert(u.id.as_str()) {
            return Err(CliError::stage(stage, format!("duplicate utterance id `{}`", u.id)));
        }
    }
    Ok(corpus)
}

/// Tokenizes and masks the corpus; writes the masked corpus and the
/// proposals awaiting review.
pub fn mask(config: &RunConfig) -> CliResult<()> {
    const STAGE: &str = "mask";
    let raw = read_raw_corpus(STAGE, config)?;
    let gazetteer = match &config.gazetteer {
        Some(path) => read_gazetteer(STAGE, path)?,
        None => Gazetteer::new(),
    };
    let mut masked = Vec::with_capacity(raw.len());
    let mut proposals = Vec::new();
    for r in raw {
        let mut u = match TokenizedUtterance::from_text(r.id.clone(), &r.text) {
            Ok(u) => u,
            Err(Error::EmptyUtterance) => TokenizedUtterance::from_words::<&str>(r.id, &[]),
            Err(e) => return Err(CliError::stage(STAGE, format!("{}: {e}", r.id))),
        };
        u.dimension = r.dimension;
        u.gold_label = r.gold_label;
        let (m, p) = apply_gazetteer(&u, &gazetteer);
        masked.push(m);
        proposals.extend(p.iter().map(ProposalRow::from));
    }
    out_dir(STAGE, config)?;
    write_tokenized(STAGE, &config.out(MASKED), &masked)?;
    write_csv_with_header(STAGE, &config.out(PROPOSALS), &PROPOSAL_HEADER, &proposals)?;
    log::info!("mask: {} utterances, {} proposals", masked.len(), proposals.len());
    Ok(())
}

/// Applies reviewed proposals to the masked corpus.
pub fn correct(config: &RunConfig) -> CliResult<()> {
    const STAGE: &str = "correct";
    let path = required("corrections", &config.corrections)?;
    let masked = read_tokenized(STAGE, &upstream(STAGE, config, MASKED)?)?;
    let corrections = read_csv::<ProposalRow>(STAGE, path)?
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.to_correction()
                .map_err(|e| CliError::stage(STAGE, format!("{} row {}: {e}", path.display(), i + 1)))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let corrected = apply_corrections(&masked, &corrections).map_err(|e| CliError::stage(STAGE, e))?;
    out_dir(STAGE, config)?;
    write_tokenized(STAGE, &config.out(CORRECTED), &corrected)
}

/// The corpus the model sees: corrected when corrections are configured,
/// otherwise masked; restricted to the active dimension.
fn model_corpus(
    stage: &'static str,
    config: &RunConfig,
    dimension: &Dimension,
) -> CliResult<Vec<TokenizedUtterance>> {
    let file = if config.corrections.is_some() { CORRECTED } else { MASKED };
    let corpus = read_tokenized(stage, &upstream(stage, config, file)?)?;
    Ok(corpus
        .into_iter()
        .filter(|u| u.dimension.as_deref().is_none_or(|d| d == dimension.name()))
        .collect())
}

/// Explains every utterance in parallel and writes one attribution record
/// per (utterance, class).
pub fn explain(config: &RunConfig) -> CliResult<()> {
    const STAGE: &str = "explain";
    let adapter = load_model(STAGE, config)?;
    let dimension = adapter.dimension().clone();
    let corpus = model_corpus(STAGE, config, &dimension)?;
    let explain_config = config.explain_config();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| CliError::stage(STAGE, e))?;
    let outcomes: Vec<_> = pool.install(|| {
        corpus
            .par_iter()
            .map(|u| explain_member(&*adapter, u, config.method, &explain_config))
            .collect()
    });
    let mut explanation = CorpusExplanation::default();
    for outcome in outcomes {
        match outcome.map_err(|e| CliError::stage(STAGE, e))? {
            Outcome::Explained(r) => explanation.results.push(r),
            Outcome::Skipped(s) => {
                log::warn!("explain: skipped {}: {}", s.id, s.reason);
                explanation.skipped.push(s);
            }
        }
    }
    explanation.sort();
    let records: Vec<AttributionRecord> =
        explanation.results.iter().flat_map(attribution_records).collect();
    out_dir(STAGE, config)?;
    write_jsonl(STAGE, &config.out(ATTRIBUTIONS), &records)?;
    write_skipped(STAGE, &config.out(SKIPPED), &explanation.skipped)?;
    log::info!(
        "explain: {} explained, {} skipped, {} model evaluations",
        explanation.results.len(),
        explanation.skipped.len(),
        adapter.eval_count()
    );
    Ok(())
}

fn write_skipped(stage: &'static str, path: &Path, skipped: &[Skipped]) -> CliResult<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        id: &'a str,
        reason: &'a str,
    }
    let rows: Vec<Row> = skipped
        .iter()
        .map(|s| Row {
            id: &s.id,
            reason: &s.reason,
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&rows).map_err(|e| CliError::stage(stage, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(stage, path, e))
}

/// Averages attributions per (word, class).
pub fn aggregate(config: &RunConfig) -> CliResult<()> {
    const STAGE: &str = "aggregate";
    let records: Vec<AttributionRecord> = read_jsonl(STAGE, &upstream(STAGE, config, ATTRIBUTIONS)?)?;
    let results = group_attributions(records).map_err(|e| CliError::stage(STAGE, e))?;
    let dimension = match (&config.dimension, results.first()) {
        (Some(d), _) => d.clone(),
        (None, Some(r)) => Dimension::new("default", r.classes.iter().map(|c| c.class.clone()))
            .map_err(|e| CliError::stage(STAGE, e))?,
        (None, None) => dimension(STAGE, config)?,
    };
    let scope = if config.gold_scope {
        let file = if config.corrections.is_some() { CORRECTED } else { MASKED };
        let corpus = read_tokenized(STAGE, &upstream(STAGE, config, file)?)?;
        Scope::Gold(
            corpus
                .into_iter()
                .filter_map(|u| u.gold_label.map(|g| (u.id, g)))
                .collect(),
        )
    } else {
        Scope::All
    };
    let options = AggregateOptions {
        mode: config.average,
        scope,
        keep_subwords: config.keep_subwords,
    };
    let table = aggregate_avg_shap(&dimension, &results, options).map_err(|e| CliError::stage(STAGE, e))?;
    let rows: Vec<AggregateRow> = table.entries().iter().map(AggregateRow::from).collect();
    out_dir(STAGE, config)?;
    write_csv_with_header(STAGE, &config.out(AVG_SHAP), &AGGREGATE_HEADER, &rows)
}

fn classes_of(stage: &'static str, config: &RunConfig, rows: &[AggregateRow]) -> CliResult<Vec<String>> {
    if let Some(d) = &config.dimension {
        return Ok(d.classes().to_vec());
    }
    let mut seen = Vec::new();
    for r in rows {
        if !seen.contains(&r.class) {
            seen.push(r.class.clone());
        }
    }
    if seen.is_empty() {
        return Ok(dimension(stage, config)?.classes().to_vec());
    }
    Ok(seen)
}

/// Top-k words per class plus the min-ratio diagnostic.
pub fn rank(config: &RunConfig) -> CliResult<()> {
    const STAGE: &str = "rank";
    let rows: Vec<AggregateRow> = read_csv(STAGE, &upstream(STAGE, config, AVG_SHAP)?)?;
    let classes = classes_of(STAGE, config, &rows)?;
    let entries: Vec<AggregateEntry> = rows.into_iter().map(AggregateEntry::from).collect();

    #[derive(Serialize)]
    struct RatioRow<'a> {
        class: &'a str,
        min_ratio: Option<f64>,
    }
    let mut ranked = Vec::new();
    let mut lists = Vec::new();
    for class in &classes {
        let list = rank_entries(entries.clone(), class, config.top_k).map_err(|e| CliError::stage(STAGE, e))?;
        ranked.extend(ranked_rows(&list));
        lists.push(list);
    }
    let ratios: Vec<RatioRow> = lists
        .iter()
        .map(|l| RatioRow {
            class: &l.class,
            min_ratio: min_ratio_diagnostic(l).ok(),
        })
        .collect();
    out_dir(STAGE, config)?;
    write_csv_with_header(STAGE, &config.out(RANKED), &RANKED_HEADER, &ranked)?;
    write_csv_with_header(STAGE, &config.out(MIN_RATIO), &["class", "min_ratio"], &ratios)
}

/// Ranked lists read back from `ranked.csv`, one per class of the active
/// dimension (empty for classes without rows).
fn read_ranked(stage: &'static str, config: &RunConfig) -> CliResult<(Dimension, Vec<RankedWordList>)> {
    let rows: Vec<RankedRow> = read_csv(stage, &upstream(stage, config, RANKED)?)?;
    let mut lists = ranked_lists(rows).map_err(|e| CliError::stage(stage, e))?;
    let dimension = match &config.dimension {
        Some(d) => d.clone(),
        None if lists.is_empty() => dimension(stage, config)?,
        None => Dimension::new("default", lists.iter().map(|l| l.class.clone()))
            .map_err(|e| CliError::stage(stage, e))?,
    };
    for class in dimension.classes() {
        if !lists.iter().any(|l| &l.class == class) {
            lists.push(RankedWordList {
                class: class.clone(),
                entries: Vec::new(),
            });
        }
    }
    Ok((dimension, lists))
}

/// Heatmap of words shared by at least half of the class lists.
pub fn heatmap(config: &RunConfig) -> CliResult<()> {
    const STAGE: &str = "heatmap";
    let (dimension, lists) = read_ranked(STAGE, config)?;
    let spec = build_heatmap(&dimension, &lists).map_err(|e| CliError::stage(STAGE, e))?;
    let rows: Vec<HeatmapRow> = spec
        .labelled_cells()
        .into_iter()
        .map(|(class, word, label)| HeatmapRow {
            class: class.to_string(),
            word: word.to_string(),
            label: label.to_string(),
        })
        .collect();
    out_dir(STAGE, config)?;
    let svg_path = config.out(HEATMAP_SVG);
    fs::write(&svg_path, render_svg(&spec, &config.palette)).map_err(|e| CliError::io(STAGE, &svg_path, e))?;
    write_csv_with_header(STAGE, &config.out(HEATMAP_CSV), &["class", "word", "label"], &rows)
}

/// Counts how often each ranked word occurs in the task document.
pub fn freq(config: &RunConfig) -> CliResult<()> {
    const STAGE: &str = "freq";
    let path = required("freq.document", &config.freq_document)?;
    let document = fs::read_to_string(path).map_err(|e| CliError::io(STAGE, path, e))?;
    let rows: Vec<RankedRow> = read_csv(STAGE, &upstream(STAGE, config, RANKED)?)?;
    let words: Vec<String> = rows
        .into_iter()
        .map(|r| r.word)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    #[derive(Serialize)]
    struct Row {
        word: String,
        count: usize,
    }
    let found = task_text_frequency(&words, &document);
    let counts: Vec<Row> = words
        .into_iter()
        .map(|word| Row {
            count: found.get(&word.to_lowercase()).copied().unwrap_or(0),
            word,
        })
        .collect();
    out_dir(STAGE, config)?;
    write_csv_with_header(STAGE, &config.out(FREQUENCY), &["word", "count"], &counts)
}

/// Flags positively ranked words that are far from every anchor of their class.
pub fn simcheck(config: &RunConfig) -> CliResult<()> {
    const STAGE: &str = "simcheck";
    let settings = required("simcheck", &config.simcheck)?;
    let text = fs::read_to_string(&settings.embeddings).map_err(|e| CliError::io(STAGE, &settings.embeddings, e))?;
    let loaded = EmbeddingStore::parse_word2vec(&text)
        .map_err(|e| CliError::stage(STAGE, format!("{}: {e}", settings.embeddings.display())))?;
    for w in &loaded.warnings {
        log::warn!("simcheck: {w}");
    }
    let (_, lists) = read_ranked(STAGE, config)?;
    let report = spuriousness_report(&lists, &settings.anchors, &loaded.store, settings.threshold)
        .map_err(|e| CliError::stage(STAGE, e))?;

    #[derive(Serialize)]
    struct Row<'a> {
        class: &'a str,
        word: &'a str,
        anchor: Option<&'a str>,
        best_cosine: Option<f64>,
        flag: &'static str,
    }
    let rows: Vec<Row> = report
        .iter()
        .map(|r| Row {
            class: &r.class,
            word: &r.word,
            anchor: r.anchor.as_deref(),
            best_cosine: r.best_cosine,
            flag: r.flag.as_str(),
        })
        .collect();
    out_dir(STAGE, config)?;
    write_csv_with_header(
        STAGE,
        &config.out(SIMCHECK),
        &["class", "word", "anchor", "best_cosine", "flag"],
        &rows,
    )
}

/// Weighted F1 of the model (or a predictions file) against gold labels.
pub fn eval(config: &RunConfig) -> CliResult<()> {
    const STAGE: &str = "eval";
    let (dimension, predicted): (Dimension, BTreeMap<String, String>) = match &config.predictions {
        Some(path) => {
            #[derive(serde::Deserialize)]
            struct Prediction {
                id: String,
                label: String,
            }
            let rows: Vec<Prediction> = read_csv(STAGE, path)?;
            let dimension = dimension(STAGE, config)?;
            (dimension, rows.into_iter().map(|p| (p.id, p.label)).collect())
        }
        None => {
            let adapter = load_model(STAGE, config)?;
            let dimension = adapter.dimension().clone();
            let corpus = model_corpus(STAGE, config, &dimension)?;
            let mut predicted = BTreeMap::new();
            for u in corpus.iter().filter(|u| u.gold_label.is_some()) {
                if u.is_empty() {
                    log::warn!("eval: {} has no tokens and is left out", u.id);
                    continue;
                }
                let k = predicted_class(&*adapter, u).map_err(|e| CliError::stage(STAGE, format!("{}: {e}", u.id)))?;
                predicted.insert(u.id.clone(), dimension.classes()[k].clone());
            }
            (dimension, predicted)
        }
    };
    let raw = read_raw_corpus(STAGE, config)?;
    let (mut gold, mut pred) = (Vec::new(), Vec::new());
    for u in raw {
        if u.dimension.as_deref().is_some_and(|d| d != dimension.name()) {
            continue;
        }
        let Some(label) = u.gold_label else { continue };
        match predicted.get(&u.id) {
            Some(p) => {
                gold.push(label);
                pred.push(p.clone());
            }
            None if config.predictions.is_some() => {
                return Err(CliError::stage(STAGE, format!("no prediction for `{}`", u.id)))
            }
            None => {}
        }
    }
    let report = weighted_f1(&gold, &pred, &dimension).map_err(|e| CliError::stage(STAGE, e))?;

    #[derive(Serialize)]
    struct Row<'a> {
        class: &'a str,
        precision: Option<f64>,
        recall: Option<f64>,
        f1: f64,
        support: usize,
    }
    let mut rows: Vec<Row> = report
        .classes
        .iter()
        .map(|c| Row {
            class: &c.class,
            precision: Some(c.precision),
            recall: Some(c.recall),
            f1: c.f1,
            support: c.support,
        })
        .collect();
    rows.push(Row {
        class: "weighted",
        precision: None,
        recall: None,
        f1: report.weighted_f1,
        support: gold.len(),
    });
    out_dir(STAGE, config)?;
    write_csv(STAGE, &config.out(EVAL), &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub id: String,
    pub n: usize,
    /// Distinct model evaluations read from the adapter's counter.
    pub model_evals: Option<u64>,
    pub wall_ms: Option<f64>,
    pub note: String,
}

/// Runs every method on each utterance and records evaluation counts and
/// wall time. `text` replaces the corpus with a single utterance.
pub fn bench(config: &RunConfig, text: Option<&str>) -> CliResult<Vec<BenchRow>> {
    const STAGE: &str = "bench";
    let adapter = load_model(STAGE, config)?;
    let corpus = match text {
        Some(t) => vec![TokenizedUtterance::from_text("text", t).map_err(|e| CliError::validation(e.to_string()))?],
        None => model_corpus(STAGE, config, &adapter.dimension().clone())?,
    };
    let explain_config = config.explain_config();
    let mut rows = Vec::new();
    for method in Method::ALL {
        for u in corpus.iter().filter(|u| !u.is_empty()) {
            let before = adapter.eval_count();
            let start = Instant::now();
            let outcome = explain_utterance(&*adapter, u, method, &explain_config);
            let wall = start.elapsed().as_secs_f64() * 1e3;
            let (model_evals, wall_ms, note) = match outcome {
                Ok(_) => (Some(adapter.eval_count() - before), Some(wall), String::new()),
                Err(Error::TooManyTokens { cap, .. }) => (None, None, format!("over cap {cap}")),
                Err(e) => return Err(CliError::stage(STAGE, format!("{}: {e}", u.id))),
            };
            rows.push(BenchRow {
                method: method.to_string(),
                id: u.id.clone(),
                n: u.len(),
                model_evals,
                wall_ms,
                note,
            });
        }
    }
    out_dir(STAGE, config)?;
    write_csv_with_header(
        STAGE,
        &config.out(BENCH),
        &["method", "id", "n", "model_evals", "wall_ms", "note"],
        &rows,
    )?;
    Ok(rows)
}

/// mask → correct (when configured) → explain → aggregate → rank → heatmap.
pub fn pipeline(config: &RunConfig) -> CliResult<()> {
    mask(config)?;
    if config.corrections.is_some() {
        correct(config)?;
    }
    explain(config)?;
    aggregate(config)?;
    rank(config)?;
    heatmap(config)
}
