//! On-disk formats for every stage: JSON Lines corpora and attributions, CSV
//! tables and the JSON builtin model spec.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokenshap_core::aggregate::{AggregateEntry, Label, RankedEntry, RankedWordList};
use tokenshap_core::attribution::{AttributionResult, ClassAttribution, Method};
use tokenshap_core::corpus::{
    Correction, Decision, Gazetteer, Mask, MaskCategory, MaskProposal, Token, TokenizedUtterance,
};
use tokenshap_core::model::{BuiltinSpec, OutputMode};

use crate::error::{CliError, CliResult};

pub fn read_jsonl<T: DeserializeOwned>(stage: &'static str, path: &Path) -> CliResult<Vec<T>> {
    let file = File::open(path).map_err(|e| CliError::io(stage, path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(stage, path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| {
            CliError::stage(stage, format!("{}:{}: {e}", path.display(), i + 1))
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(stage: &'static str, path: &Path, items: &[T]) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(stage, path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| CliError::stage(stage, e))?;
        w.write_all(b"\n").map_err(|e| CliError::io(stage, path, e))?;
    }
    w.flush().map_err(|e| CliError::io(stage, path, e))
}

pub fn read_csv<T: DeserializeOwned>(stage: &'static str, path: &Path) -> CliResult<Vec<T>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::stage(stage, format!("{}: {e}", path.display())))?;
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| CliError::stage(stage, format!("{} row {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn write_csv<T: Serialize>(stage: &'static str, path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::stage(stage, format!("{}: {e}", path.display())))?;
    for row in rows {
        w.serialize(row).map_err(|e| CliError::stage(stage, e))?;
    }
    w.flush().map_err(|e| CliError::io(stage, path, e))
}

/// CSV with only a header line when there are no rows.
pub fn write_csv_with_header<T: Serialize>(
    stage: &'static str,
    path: &Path,
    header: &[&str],
    rows: &[T],
) -> CliResult<()> {
    if !rows.is_empty() {
        return write_csv(stage, path, rows);
    }
    fs::write(path, format!("{}\n", header.join(","))).map_err(|e| CliError::io(stage, path, e))
}

/// One line of the input corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawUtterance {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub position: usize,
    pub start: usize,
    pub end: usize,
    pub category: String,
    pub original: Vec<String>,
}

/// One tokenized (and possibly masked) utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedRecord {
    pub id: String,
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub masks: Vec<MaskRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<String>,
}

impl From<&TokenizedUtterance> for TokenizedRecord {
    fn from(u: &TokenizedUtterance) -> Self {
        TokenizedRecord {
            id: u.id.clone(),
            tokens: u.surfaces().map(str::to_string).collect(),
            masks: u
                .tokens
                .iter()
                .filter_map(|t| {
                    t.mask.as_ref().map(|m| MaskRecord {
                        position: t.position,
                        start: m.start,
                        end: m.end,
                        category: m.category.to_string(),
                        original: m.original.clone(),
                    })
                })
                .collect(),
            dimension: u.dimension.clone(),
            gold_label: u.gold_label.clone(),
        }
    }
}

impl TokenizedRecord {
    pub fn into_utterance(self) -> Result<TokenizedUtterance, String> {
        let mut tokens: Vec<Token> = self
            .tokens
            .into_iter()
            .enumerate()
            .map(|(i, s)| Token::new(s, i))
            .collect();
        for m in self.masks {
            let category: MaskCategory = m.category.parse().map_err(|e| format!("{}: {e}", self.id))?;
            let token = tokens
                .get_mut(m.position)
                .ok_or_else(|| format!("{}: mask position {} out of range", self.id, m.position))?;
            token.mask = Some(Mask {
                category,
                start: m.start,
                end: m.end,
                original: m.original,
            });
        }
        Ok(TokenizedUtterance {
            id: self.id,
            tokens,
            dimension: self.dimension,
            gold_label: self.gold_label,
        })
    }
}

pub fn read_tokenized(stage: &'static str, path: &Path) -> CliResult<Vec<TokenizedUtterance>> {
    read_jsonl::<TokenizedRecord>(stage, path)?
        .into_iter()
        .map(|r| r.into_utterance().map_err(|e| CliError::stage(stage, e)))
        .collect()
}

pub fn write_tokenized(stage: &'static str, path: &Path, corpus: &[TokenizedUtterance]) -> CliResult<()> {
    let records: Vec<TokenizedRecord> = corpus.iter().map(TokenizedRecord::from).collect();
    write_jsonl(stage, path, &records)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GazetteerRow {
    pub phrase: String,
    pub category: String,
}

pub fn read_gazetteer(stage: &'static str, path: &Path) -> CliResult<Gazetteer> {
    let mut g = Gazetteer::new();
    for (i, row) in read_csv::<GazetteerRow>(stage, path)?.into_iter().enumerate() {
        let fail = |e: tokenshap_core::Error| {
            CliError::stage(stage, format!("{} row {}: {e}", path.display(), i + 1))
        };
        let category: MaskCategory = row.category.parse().map_err(fail)?;
        g.insert(&row.phrase, category).map_err(fail)?;
    }
    Ok(g)
}

/// Proposal and correction rows share one layout; proposals leave
/// `decision` blank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRow {
    pub utterance_id: String,
    pub start: usize,
    pub end: usize,
    pub category: String,
    pub placeholder: String,
    #[serde(default)]
    pub decision: String,
}

pub const PROPOSAL_HEADER: [&str; 6] = ["utterance_id", "start", "end", "category", "placeholder", "decision"];

impl From<&MaskProposal> for ProposalRow {
    fn from(p: &MaskProposal) -> Self {
        ProposalRow {
            utterance_id: p.utterance_id.clone(),
            start: p.start,
            end: p.end,
            category: p.category.to_string(),
            placeholder: p.placeholder().to_string(),
            decision: String::new(),
        }
    }
}

impl ProposalRow {
    pub fn to_correction(&self) -> Result<Correction, tokenshap_core::Error> {
        Ok(Correction {
            proposal: MaskProposal {
                utterance_id: self.utterance_id.clone(),
                start: self.start,
                end: self.end,
                category: self.category.parse()?,
            },
            decision: self.decision.parse::<Decision>()?,
        })
    }
}

/// One attribution record: an (utterance, class) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub id: String,
    pub class: String,
    pub method: String,
    pub base: f64,
    pub phi: Vec<f64>,
    pub tokens: Vec<String>,
    pub model_evals: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

pub fn attribution_records(result: &AttributionResult) -> Vec<AttributionRecord> {
    result
        .classes
        .iter()
        .map(|c| AttributionRecord {
            id: result.utterance_id.clone(),
            class: c.class.clone(),
            method: result.method.to_string(),
            base: c.base,
            phi: c.phi.clone(),
            tokens: result.tokens.clone(),
            model_evals: result.model_evals,
            seed: result.seed,
        })
        .collect()
}

/// Regroups consecutive records of one utterance into results. `full` is
/// reconstructed as `base + Σ phi`.
pub fn group_attributions(records: Vec<AttributionRecord>) -> Result<Vec<AttributionResult>, String> {
    let mut out: Vec<AttributionResult> = Vec::new();
    for r in records {
        let method: Method = r.method.parse().map_err(|e| format!("{}: {e}", r.id))?;
        let class = ClassAttribution {
            class: r.class,
            base: r.base,
            full: r.base + r.phi.iter().sum::<f64>(),
            phi: r.phi,
        };
        match out.last_mut() {
            Some(last) if last.utterance_id == r.id => {
                if last.tokens != r.tokens {
                    return Err(format!("{}: records disagree on tokens", r.id));
                }
                last.classes.push(class);
            }
            _ => out.push(AttributionResult {
                utterance_id: r.id,
                tokens: r.tokens,
                method,
                classes: vec![class],
                model_evals: r.model_evals,
                seed: r.seed,
            }),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub word: String,
    pub class: String,
    pub avg_shap: f64,
    pub occurrences: usize,
    pub utterances: usize,
}

impl From<&AggregateEntry> for AggregateRow {
    fn from(e: &AggregateEntry) -> Self {
        AggregateRow {
            word: e.word.clone(),
            class: e.class.clone(),
            avg_shap: e.avg_shap,
            occurrences: e.occurrences,
            utterances: e.utterances,
        }
    }
}

impl From<AggregateRow> for AggregateEntry {
    fn from(r: AggregateRow) -> Self {
        AggregateEntry {
            word: r.word,
            class: r.class,
            avg_shap: r.avg_shap,
            occurrences: r.occurrences,
            utterances: r.utterances,
        }
    }
}

pub const AGGREGATE_HEADER: [&str; 5] = ["word", "class", "avg_shap", "occurrences", "utterances"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRow {
    pub class: String,
    pub rank: usize,
    pub word: String,
    pub avg_shap: f64,
    #[serde(default)]
    pub label: String,
}

pub const RANKED_HEADER: [&str; 5] = ["class", "rank", "word", "avg_shap", "label"];

pub fn ranked_rows(list: &RankedWordList) -> Vec<RankedRow> {
    list.entries
        .iter()
        .enumerate()
        .map(|(i, e)| RankedRow {
            class: list.class.clone(),
            rank: i + 1,
            word: e.word.clone(),
            avg_shap: e.avg_shap,
            label: e.label.map(|l| l.to_string()).unwrap_or_default(),
        })
        .collect()
}

/// Rebuilds ranked lists, one per class in the order the classes appear.
pub fn ranked_lists(rows: Vec<RankedRow>) -> Result<Vec<RankedWordList>, String> {
    let mut lists: Vec<RankedWordList> = Vec::new();
    let mut sorted = rows;
    sorted.sort_by_key(|r| r.rank);
    let mut order: Vec<String> = Vec::new();
    let mut by_class: BTreeMap<String, Vec<RankedEntry>> = BTreeMap::new();
    for r in sorted {
        let label = if r.label.is_empty() {
            None
        } else {
            Some(r.label.parse::<Label>().map_err(|e| e.to_string())?)
        };
        if !by_class.contains_key(&r.class) {
            order.push(r.class.clone());
        }
        by_class.entry(r.class).or_default().push(RankedEntry {
            word: r.word,
            avg_shap: r.avg_shap,
            label,
        });
    }
    for class in order {
        let entries = by_class.remove(&class).unwrap_or_default();
        lists.push(RankedWordList { class, entries });
    }
    Ok(lists)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub class: String,
    pub word: String,
    pub label: String,
}

/// The builtin model spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpecFile {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<String>,
    pub classes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub base: Vec<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub weights: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub triggers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_mode: Option<String>,
}

impl ModelSpecFile {
    pub fn to_spec(&self) -> Result<BuiltinSpec, tokenshap_core::Error> {
        Ok(BuiltinSpec {
            kind: self.kind.clone(),
            name: self.name.clone(),
            dimension: self.dimension.clone(),
            classes: self.classes.clone(),
            base: self.base.clone(),
            weights: self.weights.clone(),
            triggers: self.triggers.clone(),
            target: self.target.clone(),
            output_mode: self
                .output_mode
                .as_deref()
                .map(str::parse::<OutputMode>)
                .transpose()?,
        })
    }
}
