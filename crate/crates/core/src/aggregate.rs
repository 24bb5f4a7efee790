//! avgSHAP tables, top-word ranking, task-text frequencies and weighted F1.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use crate::attribution::AttributionResult;
use crate::corpus::{tokenize, Dimension};
use crate::{Error, Result};

/// Prefix marking a subword piece that continues the previous token.
pub const CONTINUATION_PREFIX: &str = "##";

/// How occurrences of a word are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AverageMode {
    /// Mean over every occurrence; an utterance with k occurrences adds k samples.
    #[default]
    Occurrence,
    /// Mean of per-utterance means.
    Utterance,
}

impl FromStr for AverageMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "occurrence" => Ok(AverageMode::Occurrence),
            "utterance" => Ok(AverageMode::Utterance),
            other => Err(Error::InvalidArgument(format!("unknown average mode `{other}`"))),
        }
    }
}

/// Which utterances feed a class's average.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Scope {
    /// Every utterance contributes to every class.
    #[default]
    All,
    /// Only utterances whose gold label is the class (id → label).
    Gold(BTreeMap<String, String>),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AggregateOptions {
    pub mode: AverageMode,
    pub scope: Scope,
    /// Keep `##` pieces as separate words instead of summing them into the
    /// word they continue.
    pub keep_subwords: bool,
}

/// Occurrence values of one (word, class), grouped by utterance.
#[derive(Debug, Clone, Default, PartialEq)]
struct Samples {
    per_utterance: Vec<Vec<f64>>,
}

/// Order-independent sum: samples are sorted before adding so that the
/// result does not depend on the order attributions arrived in.
fn stable_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum()
}

impl Samples {
    fn occurrences(&self) -> usize {
        self.per_utterance.iter().map(Vec::len).sum()
    }

    fn average(&self, mode: AverageMode) -> f64 {
        match mode {
            AverageMode::Occurrence => {
                let mut all: Vec<f64> = self.per_utterance.iter().flatten().copied().collect();
                stable_sum(&mut all) / all.len() as f64
            }
            AverageMode::Utterance => {
                let mut means: Vec<f64> = self
                    .per_utterance
                    .iter()
                    .map(|u| {
                        let mut u = u.clone();
                        stable_sum(&mut u) / u.len() as f64
                    })
                    .collect();
                stable_sum(&mut means) / means.len() as f64
            }
        }
    }
}

/// One row of an [`AggregateTable`].
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateEntry {
    pub word: String,
    pub class: String,
    pub avg_shap: f64,
    pub occurrences: usize,
    pub utterances: usize,
}

/// Word × class avgSHAP values for one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateTable {
    dimension: Dimension,
    options: AggregateOptions,
    cells: BTreeMap<String, BTreeMap<usize, Samples>>,
}

/// Aggregation key: lowercase, except category placeholders such as `[NAME]`.
fn word_key(surface: &str) -> String {
    if surface.starts_with('[') && surface.ends_with(']') {
        surface.to_string()
    } else {
        surface.to_lowercase()
    }
}

/// Groups `(surface, value)` pairs into whole words, summing `##` pieces into
/// the word they continue.
pub fn merge_subwords<'a>(tokens: impl IntoIterator<Item = (&'a str, f64)>) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = Vec::new();
    for (surface, value) in tokens {
        match (surface.strip_prefix(CONTINUATION_PREFIX), out.last_mut()) {
            (Some(piece), Some((word, total))) => {
                word.push_str(piece);
                *total += value;
            }
            (Some(piece), None) => out.push((piece.to_string(), value)),
            (None, _) => out.push((surface.to_string(), value)),
        }
    }
    out
}

impl AggregateTable {
    pub fn new(dimension: Dimension, options: AggregateOptions) -> Self {
        AggregateTable {
            dimension,
            options,
            cells: BTreeMap::new(),
        }
    }

    pub fn dimension(&self) -> &Dimension {
        &self.dimension
    }

    /// Adds every class of one explained utterance.
    pub fn add(&mut self, result: &AttributionResult) -> Result<()> {
        for attribution in &result.classes {
            let class = self
                .dimension
                .index_of(&attribution.class)
                .map_err(|_| Error::MixedDimension(attribution.class.clone()))?;
            if attribution.phi.len() != result.tokens.len() {
                return Err(Error::InvalidArgument(format!(
                    "utterance `{}` has {} tokens but {} attributions",
                    result.utterance_id,
                    result.tokens.len(),
                    attribution.phi.len()
                )));
            }
            if let Scope::Gold(gold) = &self.options.scope {
                if gold.get(&result.utterance_id) != Some(&attribution.class) {
                    continue;
                }
            }
            let pairs = result
                .tokens
                .iter()
                .map(String::as_str)
                .zip(attribution.phi.iter().copied());
            let words: Vec<(String, f64)> = if self.options.keep_subwords {
                pairs.map(|(t, v)| (t.to_string(), v)).collect()
            } else {
                merge_subwords(pairs)
            };

            let mut here: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for (word, value) in words {
                if !value.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "non-finite attribution for `{word}` in `{}`",
                        result.utterance_id
                    )));
                }
                here.entry(word_key(&word)).or_default().push(value);
            }
            for (word, values) in here {
                self.cells
                    .entry(word)
                    .or_default()
                    .entry(class)
                    .or_default()
                    .per_utterance
                    .push(values);
            }
        }
        Ok(())
    }

    /// Folds another partial table over the same dimension into this one.
    pub fn merge(&mut self, other: AggregateTable) -> Result<()> {
        if other.dimension != self.dimension {
            return Err(Error::MixedDimension(other.dimension.name().to_string()));
        }
        for (word, classes) in other.cells {
            let mine = self.cells.entry(word).or_default();
            for (class, samples) in classes {
                mine.entry(class)
                    .or_default()
                    .per_utterance
                    .extend(samples.per_utterance);
            }
        }
        Ok(())
    }

    pub fn get(&self, word: &str, class: &str) -> Option<AggregateEntry> {
        let c = self.dimension.index_of(class).ok()?;
        let samples = self.cells.get(word)?.get(&c)?;
        Some(self.entry(word, c, samples))
    }

    fn entry(&self, word: &str, class: usize, samples: &Samples) -> AggregateEntry {
        AggregateEntry {
            word: word.to_string(),
            class: self.dimension.classes()[class].clone(),
            avg_shap: samples.average(self.options.mode),
            occurrences: samples.occurrences(),
            utterances: samples.per_utterance.len(),
        }
    }

    /// All entries, by word and then by class in dimension order.
    pub fn entries(&self) -> Vec<AggregateEntry> {
        self.cells
            .iter()
            .flat_map(|(word, classes)| {
                classes
                    .iter()
                    .map(move |(&c, samples)| self.entry(word, c, samples))
            })
            .collect()
    }

    /// Entries of one class.
    pub fn class_entries(&self, class: &str) -> Result<Vec<AggregateEntry>> {
        let c = self.dimension.index_of(class)?;
        Ok(self
            .cells
            .iter()
            .filter_map(|(word, classes)| classes.get(&c).map(|s| self.entry(word, c, s)))
            .collect())
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Builds a table from a stream of attributions.
pub fn aggregate_avg_shap<'a>(
    dimension: &Dimension,
    attributions: impl IntoIterator<Item = &'a AttributionResult>,
    options: AggregateOptions,
) -> Result<AggregateTable> {
    let mut table = AggregateTable::new(dimension.clone(), options);
    for result in attributions {
        table.add(result)?;
    }
    Ok(table)
}

/// Signed rank label among a class's top words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    /// `P1` is the strongest positive word.
    Positive(u8),
    /// `N1` is the strongest negative word.
    Negative(u8),
}

impl Label {
    /// 1-based rank within its sign.
    pub fn rank(self) -> u8 {
        match self {
            Label::Positive(r) | Label::Negative(r) => r,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Positive(r) => write!(f, "P{r}"),
            Label::Negative(r) => write!(f, "N{r}"),
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("invalid label `{s}`"));
        let (sign, rank) = s.split_at_checked(1).ok_or_else(bad)?;
        let rank: u8 = rank.parse().map_err(|_| bad())?;
        if !(1..=MAX_LABELS).contains(&rank) {
            return Err(bad());
        }
        match sign {
            "P" => Ok(Label::Positive(rank)),
            "N" => Ok(Label::Negative(rank)),
            _ => Err(bad()),
        }
    }
}

/// Labels handed out per sign.
pub const MAX_LABELS: u8 = 10;

/// Default list length.
pub const TOP_K: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry {
    pub word: String,
    pub avg_shap: f64,
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedWordList {
    pub class: String,
    /// By |avg_shap| descending, ties by word.
    pub entries: Vec<RankedEntry>,
}

impl RankedWordList {
    pub fn contains(&self, word: &str) -> bool {
        self.entries.iter().any(|e| e.word == word)
    }

    pub fn label_of(&self, word: &str) -> Option<Label> {
        self.entries.iter().find(|e| e.word == word).and_then(|e| e.label)
    }
}

fn by_magnitude(a: &AggregateEntry, b: &AggregateEntry) -> Ordering {
    libm::fabs(b.avg_shap)
        .total_cmp(&libm::fabs(a.avg_shap))
        .then_with(|| a.word.cmp(&b.word))
}

/// The `k` words with the largest |avg_shap| for `class`, labelled
/// `P1…P10` among positives and `N1…N10` among negatives. Zero gets no label.
pub fn rank_top_words(table: &AggregateTable, class: &str, k: usize) -> Result<RankedWordList> {
    rank_entries(table.class_entries(class)?, class, k)
}

/// [`rank_top_words`] over rows already extracted for one class, e.g. read
/// back from an aggregate CSV. Rows of other classes are ignored.
pub fn rank_entries(entries: Vec<AggregateEntry>, class: &str, k: usize) -> Result<RankedWordList> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut entries: Vec<AggregateEntry> = entries.into_iter().filter(|e| e.class == class).collect();
    entries.sort_by(by_magnitude);
    entries.truncate(k);
    let (mut pos, mut neg) = (0u8, 0u8);
    let entries = entries
        .into_iter()
        .map(|e| {
            let label = if e.avg_shap > 0.0 && pos < MAX_LABELS {
                pos += 1;
                Some(Label::Positive(pos))
            } else if e.avg_shap < 0.0 && neg < MAX_LABELS {
                neg += 1;
                Some(Label::Negative(neg))
            } else {
                None
            };
            RankedEntry {
                word: e.word,
                avg_shap: e.avg_shap,
                label,
            }
        })
        .collect();
    Ok(RankedWordList {
        class: class.to_string(),
        entries,
    })
}

/// `|last| / |first|` of a ranked list: how far the list reaches down from
/// its strongest word. An all-zero list reports 1.
pub fn min_ratio_diagnostic(list: &RankedWordList) -> Result<f64> {
    let (Some(first), Some(last)) = (list.entries.first(), list.entries.last()) else {
        return Err(Error::InvalidArgument(format!(
            "ranked list for `{}` is empty",
            list.class
        )));
    };
    let top = libm::fabs(first.avg_shap);
    if top == 0.0 {
        return Ok(1.0);
    }
    Ok(libm::fabs(last.avg_shap) / top)
}

/// Whole-word counts of `words` in `document`, using the corpus tokenizer.
pub fn task_text_frequency<S: AsRef<str>>(words: &[S], document: &str) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> = words
        .iter()
        .map(|w| (w.as_ref().to_lowercase(), 0))
        .collect();
    if let Ok(tokens) = tokenize(document) {
        for t in tokens {
            if let Some(c) = counts.get_mut(&t.surface) {
                *c += 1;
            }
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub classes: Vec<ClassMetrics>,
    /// `Σ support·F1 / Σ support`.
    pub weighted_f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision, recall and F1 (0/0 counts as 0) and their
/// support-weighted F1.
pub fn weighted_f1<S: AsRef<str>>(gold: &[S], predicted: &[S], dimension: &Dimension) -> Result<EvalReport> {
    if gold.len() != predicted.len() {
        return Err(Error::InvalidArgument(format!(
            "{} gold labels but {} predictions",
            gold.len(),
            predicted.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::InvalidArgument("no labels to evaluate".into()));
    }
    let k = dimension.len();
    let mut tp = alloc::vec![0usize; k];
    let mut gold_count = alloc::vec![0usize; k];
    let mut pred_count = alloc::vec![0usize; k];
    for (g, p) in gold.iter().zip(predicted) {
        let g = dimension.index_of(g.as_ref())?;
        let p = dimension.index_of(p.as_ref())?;
        gold_count[g] += 1;
        pred_count[p] += 1;
        if g == p {
            tp[g] += 1;
        }
    }
    let classes: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let precision = ratio(tp[c], pred_count[c]);
            let recall = ratio(tp[c], gold_count[c]);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                class: dimension.classes()[c].clone(),
                precision,
                recall,
                f1,
                support: gold_count[c],
            }
        })
        .collect();
    let weighted: f64 = classes.iter().map(|m| m.support as f64 * m.f1).sum();
    Ok(EvalReport {
        weighted_f1: weighted / gold.len() as f64,
        classes,
    })
}
