//! Word vectors and cosine similarity, used to flag top words that push a
//! class without being semantically related to it.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::aggregate::{Label, RankedWordList};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

/// A parsed vector file plus non-fatal warnings (duplicate words).
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedVectors {
    pub store: EmbeddingStore,
    pub warnings: Vec<String>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("vector dimensionality must be at least 1".into()));
        }
        Ok(EmbeddingStore {
            dim,
            vectors: BTreeMap::new(),
        })
    }

    /// Inserts or replaces a vector; returns true when the word was already present.
    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f64>) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "vector has {} components, store expects {}",
                vector.len(),
                self.dim
            )));
        }
        Ok(self.vectors.insert(word.into(), vector).is_some())
    }

    /// Parses word2vec text format: a `count dim` header, then `count` lines
    /// of `word v1 … vdim`. Duplicate words keep the last vector.
    pub fn parse_word2vec(text: &str) -> Result<LoadedVectors> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::MalformedHeader("file is empty".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::MalformedHeader(format!("`{header}` is not `count dim`")))
        };
        let [count, dim] = fields[..] else {
            return Err(Error::MalformedHeader(format!("`{header}` is not `count dim`")));
        };
        let (count, dim) = (parse(count)?, parse(dim)?);
        let mut store = EmbeddingStore::new(dim)
            .map_err(|_| Error::MalformedHeader("dimensionality is 0".into()))?;
        let mut warnings = Vec::new();
        let mut rows = 0;
        for (i, line) in lines {
            let line_no = i + 1;
            let mut parts = line.split_whitespace();
            let word = parts.next().unwrap_or_default();
            let values: Vec<&str> = parts.collect();
            if values.len() != dim {
                return Err(Error::DimensionMismatch {
                    line: line_no,
                    expected: dim,
                    found: values.len(),
                });
            }
            let vector = values
                .iter()
                .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("line {line_no}: invalid vector component"))
                })?;
            if store.insert(word, vector)? {
                warnings.push(format!("line {line_no}: duplicate word `{word}`, keeping the last vector"));
            }
            rows += 1;
        }
        if rows != count {
            return Err(Error::MalformedHeader(format!(
                "header declares {count} vectors but the file has {rows}"
            )));
        }
        Ok(LoadedVectors { store, warnings })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }
}

/// Cosine similarity of two vectors, clamped to `[-1, 1]`; `None` when
/// either vector is zero.
pub fn cosine_vectors(a: &[f64], b: &[f64]) -> Option<f64> {
    debug_assert_eq!(a.len(), b.len());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = libm::sqrt(a.iter().map(|x| x * x).sum());
    let nb = libm::sqrt(b.iter().map(|x| x * x).sum());
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine similarity between two stored words.
pub fn cosine(store: &EmbeddingStore, word_a: &str, word_b: &str) -> Result<f64> {
    let a = store
        .get(word_a)
        .ok_or_else(|| Error::MissingWord(word_a.to_string()))?;
    let b = store
        .get(word_b)
        .ok_or_else(|| Error::MissingWord(word_b.to_string()))?;
    if a.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroVector(word_a.to_string()));
    }
    cosine_vectors(a, b).ok_or_else(|| Error::ZeroVector(word_b.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flag {
    /// Related to at least one anchor.
    Ok,
    /// Best anchor similarity is below the threshold.
    Spurious,
    /// The word has no usable vector.
    NoVector,
    /// The class has no anchor with a usable vector.
    NoAnchor,
}

impl Flag {
    pub fn as_str(self) -> &'static str {
        match self {
            Flag::Ok => "ok",
            Flag::Spurious => "spurious",
            Flag::NoVector => "no-vector",
            Flag::NoAnchor => "no-anchor",
        }
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpuriousRow {
    pub class: String,
    pub word: String,
    pub anchor: Option<String>,
    pub best_cosine: Option<f64>,
    pub flag: Flag,
}

/// For every positively labelled word, the closest anchor of its class.
/// Words whose best similarity falls below `threshold` are flagged spurious.
pub fn spuriousness_report(
    lists: &[RankedWordList],
    anchors: &BTreeMap<String, Vec<String>>,
    store: &EmbeddingStore,
    threshold: f64,
) -> Result<Vec<SpuriousRow>> {
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!(
            "threshold {threshold} is outside [-1, 1]"
        )));
    }
    let usable = |w: &str| store.get(w).filter(|v| v.iter().any(|&x| x != 0.0));
    let mut rows = Vec::new();
    for list in lists {
        let class_anchors: Vec<(&str, &[f64])> = anchors
            .get(&list.class)
            .into_iter()
            .flatten()
            .filter_map(|a| usable(a).map(|v| (a.as_str(), v)))
            .collect();
        for entry in &list.entries {
            if !matches!(entry.label, Some(Label::Positive(_))) {
                continue;
            }
            let mut row = SpuriousRow {
                class: list.class.clone(),
                word: entry.word.clone(),
                anchor: None,
                best_cosine: None,
                flag: Flag::NoAnchor,
            };
            let Some(vector) = usable(&entry.word) else {
                row.flag = Flag::NoVector;
                rows.push(row);
                continue;
            };
            let best = class_anchors
                .iter()
                .filter_map(|(name, a)| cosine_vectors(vector, a).map(|c| (*name, c)))
                .fold(None, |best: Option<(&str, f64)>, (name, c)| match best {
                    Some((_, b)) if b >= c => best,
                    _ => Some((name, c)),
                });
            if let Some((name, c)) = best {
                row.anchor = Some(name.to_string());
                row.best_cosine = Some(c);
                row.flag = if c < threshold { Flag::Spurious } else { Flag::Ok };
            }
            rows.push(row);
        }
    }
    Ok(rows)
}
