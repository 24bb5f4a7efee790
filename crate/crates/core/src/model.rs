//! The black-box classifier contract and deterministic builtin models.
//!
//! Explainers only ever see a [`ModelAdapter`]: a function from masked token
//! sequences to one score per class. Hidden tokens are conceptually replaced
//! by [`MASK_TOKEN`] (or deleted, see [`MaskingStrategy`]), and the input with
//! every token hidden defines the baseline.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use core::sync::atomic::{AtomicU64, Ordering};

use crate::corpus::{Dimension, TokenizedUtterance};
use crate::{Error, Result};

/// Reserved surface substituted for hidden tokens.
pub const MASK_TOKEN: &str = "[MASK]";

const PROBABILITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputMode {
    /// Each vector is a distribution over classes.
    #[default]
    Probability,
    /// Unnormalized finite scores (e.g. logits).
    Score,
}

impl OutputMode {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputMode::Probability => "probability",
            OutputMode::Score => "score",
        }
    }
}

impl fmt::Display for OutputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OutputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "probability" => Ok(OutputMode::Probability),
            "score" => Ok(OutputMode::Score),
            other => Err(Error::InvalidArgument(format!("unknown output mode `{other}`"))),
        }
    }
}

/// How hidden tokens reach a text-consuming model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskingStrategy {
    /// Replace with [`MASK_TOKEN`], keeping the sequence length.
    #[default]
    Substitute,
    /// Drop hidden tokens.
    Delete,
}

impl FromStr for MaskingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "substitute" => Ok(MaskingStrategy::Substitute),
            "delete" => Ok(MaskingStrategy::Delete),
            other => Err(Error::InvalidArgument(format!("unknown masking strategy `{other}`"))),
        }
    }
}

/// Visibility flags over token positions, packed into words.
///
/// Ordering and hashing follow the packed bits, which makes coalitions usable
/// as cache keys.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Coalition {
    words: Vec<u64>,
    len: usize,
}

impl Coalition {
    pub fn empty(len: usize) -> Self {
        Coalition {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn full(len: usize) -> Self {
        let mut c = Coalition::empty(len);
        for i in 0..len {
            c.insert(i);
        }
        c
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut c = Coalition::empty(len);
        for i in indices {
            c.insert(i);
        }
        c
    }

    /// Bit `i` of `mask` is position `i`; `len` must be at most 64.
    pub fn from_mask(len: usize, mask: u64) -> Self {
        debug_assert!(len <= 64);
        let mut c = Coalition::empty(len);
        if len > 0 {
            c.words[0] = if len == 64 { mask } else { mask & ((1u64 << len) - 1) };
        }
        c
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.len && self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < self.len, "position {i} out of range {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        assert!(i < self.len, "position {i} out of range {}", self.len);
        self.words[i / 64] &= !(1 << (i % 64));
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&i| self.contains(i))
    }

    pub fn union(&self, other: &Coalition) -> Coalition {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn difference(&self, other: &Coalition) -> Coalition {
        self.zip_with(other, |a, b| a & !b)
    }

    fn zip_with(&self, other: &Coalition, f: impl Fn(u64, u64) -> u64) -> Coalition {
        assert_eq!(self.len, other.len, "coalitions over different token counts");
        Coalition {
            words: self.words.iter().zip(&other.words).map(|(&a, &b)| f(a, b)).collect(),
            len: self.len,
        }
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.contains(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// An utterance with some tokens hidden.
#[derive(Debug, Clone)]
pub struct MaskedInput<'a> {
    pub utterance: &'a TokenizedUtterance,
    pub present: Coalition,
}

impl<'a> MaskedInput<'a> {
    pub fn new(utterance: &'a TokenizedUtterance, present: Coalition) -> Self {
        debug_assert_eq!(utterance.len(), present.len());
        MaskedInput { utterance, present }
    }

    /// Surfaces of the visible tokens, in order.
    pub fn visible(&self) -> impl Iterator<Item = &'a str> + '_ {
        self.utterance
            .tokens
            .iter()
            .enumerate()
            .filter(|(i, _)| self.present.contains(*i))
            .map(|(_, t)| t.surface.as_str())
    }

    /// Space-joined text as a text model would receive it.
    pub fn render(&self, strategy: MaskingStrategy) -> String {
        let mut out = String::new();
        for (i, token) in self.utterance.tokens.iter().enumerate() {
            let word = if self.present.contains(i) {
                token.surface.as_str()
            } else {
                match strategy {
                    MaskingStrategy::Substitute => MASK_TOKEN,
                    MaskingStrategy::Delete => continue,
                }
            };
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(word);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest score; the first one wins ties.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.0.iter().enumerate() {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i)
    }
}

/// The scalar game value for one class: the component the explainers decompose.
pub fn explained_value(vector: &ScoreVector, dimension: &Dimension, target_class: &str) -> Result<f64> {
    let i = dimension.index_of(target_class)?;
    vector
        .0
        .get(i)
        .copied()
        .ok_or_else(|| Error::InvalidArgument(format!("score vector has no component {i}")))
}

/// Monotone count of single-input model evaluations.
#[derive(Debug, Default)]
pub struct EvalCounter(AtomicU64);

impl EvalCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&self, n: u64) {
        self.0.fetch_add(n, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// A black-box classifier.
///
/// Implementors provide [`evaluate`](ModelAdapter::evaluate); callers use
/// [`predict_batch`](ModelAdapter::predict_batch), which validates the batch,
/// counts evaluations and checks the returned vectors.
pub trait ModelAdapter {
    fn name(&self) -> &str;

    fn dimension(&self) -> &Dimension;

    fn output_mode(&self) -> OutputMode;

    /// Scores a validated batch, one vector per input in order.
    fn evaluate(&self, inputs: &[MaskedInput<'_>]) -> Result<Vec<ScoreVector>>;

    fn counter(&self) -> &EvalCounter;

    /// True when at most one batch may be in flight at a time.
    fn serialized(&self) -> bool {
        false
    }

    fn eval_count(&self) -> u64 {
        self.counter().get()
    }

    fn predict_batch(&self, inputs: &[MaskedInput<'_>]) -> Result<Vec<ScoreVector>> {
        let Some(first) = inputs.first() else {
            return Ok(Vec::new());
        };
        let n = first.present.len();
        if n == 0 {
            return Err(Error::InvalidArgument("cannot score an empty utterance".into()));
        }
        if let Some(bad) = inputs
            .iter()
            .position(|x| x.present.len() != n || x.utterance.len() != n)
        {
            return Err(Error::InvalidArgument(format!(
                "batch input {bad} has a different token count than input 0 ({n})"
            )));
        }
        self.counter().add(inputs.len() as u64);
        let out = self.evaluate(inputs)?;
        let all_indices = || (0..inputs.len()).collect::<Vec<_>>();
        if out.len() != inputs.len() {
            return Err(Error::Adapter {
                indices: all_indices(),
                message: format!("expected {} score vectors, got {}", inputs.len(), out.len()),
            });
        }
        let classes = self.dimension().len();
        for (i, v) in out.iter().enumerate() {
            if v.len() != classes || v.0.iter().any(|x| !x.is_finite()) {
                return Err(Error::Adapter {
                    indices: vec![i],
                    message: format!("malformed score vector {:?}", v.0),
                });
            }
            if self.output_mode() == OutputMode::Probability {
                let sum: f64 = v.0.iter().sum();
                if libm::fabs(sum - 1.0) > PROBABILITY_TOLERANCE
                    || v.0.iter().any(|&p| !(0.0..=1.0).contains(&p))
                {
                    return Err(Error::Adapter {
                        indices: vec![i],
                        message: format!("not a probability vector: {:?}", v.0),
                    });
                }
            }
        }
        Ok(out)
    }
}

impl<M: ModelAdapter + ?Sized> ModelAdapter for &M {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dimension(&self) -> &Dimension {
        (**self).dimension()
    }
    fn output_mode(&self) -> OutputMode {
        (**self).output_mode()
    }
    fn evaluate(&self, inputs: &[MaskedInput<'_>]) -> Result<Vec<ScoreVector>> {
        (**self).evaluate(inputs)
    }
    fn counter(&self) -> &EvalCounter {
        (**self).counter()
    }
    fn serialized(&self) -> bool {
        (**self).serialized()
    }
}

/// Scores the fully visible utterance.
pub fn predict_full<M: ModelAdapter + ?Sized>(
    adapter: &M,
    utterance: &TokenizedUtterance,
) -> Result<ScoreVector> {
    let input = MaskedInput::new(utterance, Coalition::full(utterance.len()));
    adapter
        .predict_batch(core::slice::from_ref(&input))
        .map(|mut v| v.remove(0))
}

/// Index of the predicted class on the fully visible utterance.
pub fn predicted_class<M: ModelAdapter + ?Sized>(
    adapter: &M,
    utterance: &TokenizedUtterance,
) -> Result<usize> {
    let scores = predict_full(adapter, utterance)?;
    scores
        .argmax()
        .ok_or_else(|| Error::InvalidModel("model returned an empty score vector".into()))
}

/// Parameters of a builtin model, mirroring the JSON model spec file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuiltinSpec {
    pub kind: String,
    pub name: Option<String>,
    pub dimension: Option<String>,
    pub classes: Vec<String>,
    /// Per-class base score (keyword models) or the fixed output (constant).
    pub base: Vec<f64>,
    /// class → token → weight.
    pub weights: BTreeMap<String, BTreeMap<String, f64>>,
    pub triggers: Vec<String>,
    /// Designated class of the and-gate; defaults to the first class.
    pub target: Option<String>,
    pub output_mode: Option<OutputMode>,
}

#[derive(Debug, Clone, PartialEq)]
enum Game {
    Constant(Vec<f64>),
    Keyword {
        base: Vec<f64>,
        weights: Vec<BTreeMap<String, f64>>,
        softmax: bool,
    },
    AndGate {
        class: usize,
        triggers: Vec<String>,
    },
}

/// A deterministic reference model.
#[derive(Debug)]
pub struct BuiltinModel {
    name: String,
    dimension: Dimension,
    mode: OutputMode,
    game: Game,
    counter: EvalCounter,
}

impl Clone for BuiltinModel {
    /// The clone starts with a fresh evaluation counter.
    fn clone(&self) -> Self {
        BuiltinModel {
            name: self.name.clone(),
            dimension: self.dimension.clone(),
            mode: self.mode,
            game: self.game.clone(),
            counter: EvalCounter::new(),
        }
    }
}

/// Builds one of the builtin models: `constant`, `keyword-score`,
/// `keyword-softmax` or `and-gate`.
///
/// * keyword-score: class score = base + Σ weight(t) over visible tokens t.
/// * keyword-softmax: softmax of the keyword scores.
/// * and-gate: the target class scores 1 iff every trigger word is visible,
///   every other class scores 0.
/// * constant: `base` is returned for every input.
pub fn make_builtin(spec: &BuiltinSpec) -> Result<BuiltinModel> {
    let dimension = Dimension::new(
        spec.dimension.clone().unwrap_or_else(|| "default".to_string()),
        spec.classes.iter().cloned(),
    )?;
    let k = dimension.len();
    let name = spec.name.clone().unwrap_or_else(|| spec.kind.clone());
    let base = || -> Result<Vec<f64>> {
        if spec.base.is_empty() {
            return Ok(vec![0.0; k]);
        }
        if spec.base.len() != k {
            return Err(Error::InvalidModel(format!(
                "base has {} entries for {k} classes",
                spec.base.len()
            )));
        }
        if spec.base.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidModel("non-finite base value".into()));
        }
        Ok(spec.base.clone())
    };
    let weights = || -> Result<Vec<BTreeMap<String, f64>>> {
        let mut per_class = vec![BTreeMap::new(); k];
        for (class, table) in &spec.weights {
            let c = dimension.index_of(class)?;
            for (token, &w) in table {
                if !w.is_finite() {
                    return Err(Error::NonFiniteWeight {
                        class: class.clone(),
                        token: token.clone(),
                    });
                }
                per_class[c].insert(token.clone(), w);
            }
        }
        Ok(per_class)
    };

    let (game, mode) = match spec.kind.as_str() {
        "constant" => {
            let values = base()?;
            let mode = spec.output_mode.unwrap_or(OutputMode::Score);
            if mode == OutputMode::Probability {
                let sum: f64 = values.iter().sum();
                if libm::fabs(sum - 1.0) > PROBABILITY_TOLERANCE
                    || values.iter().any(|p| !(0.0..=1.0).contains(p))
                {
                    return Err(Error::InvalidModel(format!(
                        "constant probability output {values:?} is not a distribution"
                    )));
                }
            }
            (Game::Constant(values), mode)
        }
        "keyword-score" | "keyword-softmax" => {
            let softmax = spec.kind == "keyword-softmax";
            let natural = if softmax {
                OutputMode::Probability
            } else {
                OutputMode::Score
            };
            if spec.output_mode.is_some_and(|m| m != natural) {
                return Err(Error::InvalidModel(format!(
                    "{} always produces {natural} output",
                    spec.kind
                )));
            }
            let game = Game::Keyword {
                base: base()?,
                weights: weights()?,
                softmax,
            };
            (game, natural)
        }
        "and-gate" => {
            let class = match &spec.target {
                Some(t) => dimension.index_of(t)?,
                None => 0,
            };
            if spec.output_mode == Some(OutputMode::Probability) && k > 1 {
                return Err(Error::InvalidModel(
                    "and-gate output is a 0/1 score, not a distribution".into(),
                ));
            }
            let game = Game::AndGate {
                class,
                triggers: spec.triggers.clone(),
            };
            (game, spec.output_mode.unwrap_or(OutputMode::Score))
        }
        other => return Err(Error::UnknownModelKind(other.to_string())),
    };
    Ok(BuiltinModel {
        name,
        dimension,
        mode,
        game,
        counter: EvalCounter::new(),
    })
}

impl BuiltinModel {
    /// The keyword-score model `alpha·f + beta·g`, built by combining bases and
    /// weights. Both models must be keyword-score models over the same classes.
    pub fn linear_combination(alpha: f64, f: &BuiltinModel, beta: f64, g: &BuiltinModel) -> Result<BuiltinModel> {
        let (
            Game::Keyword { base: bf, weights: wf, softmax: false },
            Game::Keyword { base: bg, weights: wg, softmax: false },
        ) = (&f.game, &g.game)
        else {
            return Err(Error::InvalidModel(
                "linear combinations are defined for keyword-score models only".into(),
            ));
        };
        if f.dimension != g.dimension {
            return Err(Error::InvalidModel("models cover different classes".into()));
        }
        let base = bf.iter().zip(bg).map(|(a, b)| alpha * a + beta * b).collect();
        let weights = wf
            .iter()
            .zip(wg)
            .map(|(tf, tg)| {
                let mut out: BTreeMap<String, f64> =
                    tf.iter().map(|(t, w)| (t.clone(), alpha * w)).collect();
                for (t, w) in tg {
                    *out.entry(t.clone()).or_insert(0.0) += beta * w;
                }
                out
            })
            .collect();
        Ok(BuiltinModel {
            name: format!("{alpha}*{}+{beta}*{}", f.name, g.name),
            dimension: f.dimension.clone(),
            mode: OutputMode::Score,
            game: Game::Keyword {
                base,
                weights,
                softmax: false,
            },
            counter: EvalCounter::new(),
        })
    }

    /// Keyword weight of `token` for class index `class`, 0 when absent.
    pub fn weight(&self, class: usize, token: &str) -> f64 {
        match &self.game {
            Game::Keyword { weights, .. } => weights[class].get(token).copied().unwrap_or(0.0),
            _ => 0.0,
        }
    }

    fn score(&self, input: &MaskedInput<'_>) -> Vec<f64> {
        match &self.game {
            Game::Constant(values) => values.clone(),
            Game::Keyword {
                base,
                weights,
                softmax,
            } => {
                let mut scores = base.clone();
                for word in input.visible() {
                    for (s, table) in scores.iter_mut().zip(weights) {
                        if let Some(w) = table.get(word) {
                            *s += w;
                        }
                    }
                }
                if *softmax {
                    softmax_in_place(&mut scores);
                }
                scores
            }
            Game::AndGate { class, triggers } => {
                let mut out = vec![0.0; self.dimension.len()];
                let fired = triggers
                    .iter()
                    .all(|t| input.visible().any(|w| w == t.as_str()));
                if fired {
                    out[*class] = 1.0;
                }
                out
            }
        }
    }
}

fn softmax_in_place(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = libm::exp(*s - max);
        total += *s;
    }
    for s in scores.iter_mut() {
        *s /= total;
    }
}

impl ModelAdapter for BuiltinModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> &Dimension {
        &self.dimension
    }

    fn output_mode(&self) -> OutputMode {
        self.mode
    }

    fn evaluate(&self, inputs: &[MaskedInput<'_>]) -> Result<Vec<ScoreVector>> {
        Ok(inputs.iter().map(|x| ScoreVector(self.score(x))).collect())
    }

    fn counter(&self) -> &EvalCounter {
        &self.counter
    }
}
