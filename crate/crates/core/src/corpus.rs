//! Utterances, tokenization and gazetteer-based entity masking.
//!
//! Masking is reviewable: every replacement is reported as a
//! [`MaskProposal`], and reviewed rows ([`Correction`]) can accept, reject or
//! recategorize it later. Masked tokens remember the words they replaced so a
//! rejection restores the original tokens without re-reading the raw text.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::{Error, Result};

/// Entity categories replaced by placeholders before classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MaskCategory {
    Name,
    Resource,
    Location,
    Entertainment,
    Device,
}

impl MaskCategory {
    pub const ALL: [MaskCategory; 5] = [
        MaskCategory::Name,
        MaskCategory::Resource,
        MaskCategory::Location,
        MaskCategory::Entertainment,
        MaskCategory::Device,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MaskCategory::Name => "NAME",
            MaskCategory::Resource => "RESOURCE",
            MaskCategory::Location => "LOCATION",
            MaskCategory::Entertainment => "ENTERTAINMENT",
            MaskCategory::Device => "DEVICE",
        }
    }

    /// The token surface that stands in for a masked span, e.g. `[NAME]`.
    pub fn placeholder(self) -> &'static str {
        match self {
            MaskCategory::Name => "[NAME]",
            MaskCategory::Resource => "[RESOURCE]",
            MaskCategory::Location => "[LOCATION]",
            MaskCategory::Entertainment => "[ENTERTAINMENT]",
            MaskCategory::Device => "[DEVICE]",
        }
    }
}

impl fmt::Display for MaskCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MaskCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim().trim_start_matches('[').trim_end_matches(']');
        MaskCategory::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(trimmed))
            .ok_or_else(|| Error::UnknownCategory(s.to_string()))
    }
}

/// Provenance of a placeholder token.
///
/// `start..end` is the replaced span in the positions of the unmasked
/// utterance; `original` holds the replaced surfaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub category: MaskCategory,
    pub start: usize,
    pub end: usize,
    pub original: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub position: usize,
    pub mask: Option<Mask>,
}

impl Token {
    pub fn new(surface: impl Into<String>, position: usize) -> Self {
        Token {
            surface: surface.into(),
            position,
            mask: None,
        }
    }

    pub fn mask_category(&self) -> Option<MaskCategory> {
        self.mask.as_ref().map(|m| m.category)
    }

    /// Number of unmasked tokens this token stands for.
    fn original_width(&self) -> usize {
        self.mask.as_ref().map_or(1, |m| m.end - m.start)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedUtterance {
    pub id: String,
    pub tokens: Vec<Token>,
    pub dimension: Option<String>,
    pub gold_label: Option<String>,
}

impl TokenizedUtterance {
    /// Tokenizes `text`; fails with [`Error::EmptyUtterance`] when nothing is left.
    pub fn from_text(id: impl Into<String>, text: &str) -> Result<Self> {
        Ok(TokenizedUtterance {
            id: id.into(),
            tokens: tokenize(text)?,
            dimension: None,
            gold_label: None,
        })
    }

    /// Builds an utterance from already-split words, kept verbatim.
    pub fn from_words<S: AsRef<str>>(id: impl Into<String>, words: &[S]) -> Self {
        TokenizedUtterance {
            id: id.into(),
            tokens: words
                .iter()
                .enumerate()
                .map(|(i, w)| Token::new(w.as_ref(), i))
                .collect(),
            dimension: None,
            gold_label: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.surface.as_str())
    }

    fn renumber(&mut self) {
        for (i, t) in self.tokens.iter_mut().enumerate() {
            t.position = i;
        }
    }
}

/// A named set of mutually exclusive classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dimension {
    name: String,
    classes: Vec<String>,
}

impl Dimension {
    pub fn new<S: Into<String>>(
        name: impl Into<String>,
        classes: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let name = name.into();
        let classes: Vec<String> = classes.into_iter().map(Into::into).collect();
        if classes.is_empty() {
            return Err(Error::InvalidDimension(alloc::format!(
                "dimension `{name}` has no classes"
            )));
        }
        for (i, c) in classes.iter().enumerate() {
            if classes[..i].contains(c) {
                return Err(Error::InvalidDimension(alloc::format!(
                    "class `{c}` is repeated in dimension `{name}`"
                )));
            }
        }
        Ok(Dimension { name, classes })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn index_of(&self, class: &str) -> Result<usize> {
        self.classes
            .iter()
            .position(|c| c == class)
            .ok_or_else(|| Error::UnknownClass(class.to_string()))
    }
}

/// Splits text into lowercase word tokens.
///
/// Any character that is not alphanumeric delimits tokens and is dropped, so
/// punctuation never survives. Subword splitting is left to the model.
pub fn tokenize(raw_text: &str) -> Result<Vec<Token>> {
    let tokens: Vec<Token> = raw_text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .enumerate()
        .map(|(i, w)| Token::new(w.to_lowercase(), i))
        .collect();
    if tokens.is_empty() {
        return Err(Error::EmptyUtterance);
    }
    Ok(tokens)
}

/// Phrase → category lookup for entity masking.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Gazetteer {
    entries: BTreeMap<Vec<String>, MaskCategory>,
    longest: usize,
}

impl Gazetteer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a phrase. The phrase goes through [`tokenize`] so it matches
    /// tokenized utterances. Re-adding a phrase with the same category is a
    /// no-op; a different category is rejected.
    pub fn insert(&mut self, phrase: &str, category: MaskCategory) -> Result<()> {
        let words: Vec<String> = match tokenize(phrase) {
            Ok(tokens) => tokens.into_iter().map(|t| t.surface).collect(),
            Err(_) => return Err(Error::EmptyPhrase),
        };
        if let Some(&existing) = self.entries.get(&words) {
            if existing != category {
                return Err(Error::GazetteerConflict {
                    phrase: words.join(" "),
                    first: existing.to_string(),
                    second: category.to_string(),
                });
            }
            return Ok(());
        }
        self.longest = self.longest.max(words.len());
        self.entries.insert(words, category);
        Ok(())
    }

    pub fn from_entries<'a>(
        entries: impl IntoIterator<Item = (&'a str, MaskCategory)>,
    ) -> Result<Self> {
        let mut g = Gazetteer::new();
        for (phrase, category) in entries {
            g.insert(phrase, category)?;
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Longest phrase matching `tokens` from the start, as (length, category).
    fn longest_match(&self, tokens: &[Token]) -> Option<(usize, MaskCategory)> {
        let max = self.longest.min(tokens.len());
        let mut key: Vec<String> = Vec::with_capacity(max);
        let mut best = None;
        for t in &tokens[..max] {
            if t.mask.is_some() {
                break;
            }
            key.push(t.surface.clone());
            if let Some(&category) = self.entries.get(&key) {
                best = Some((key.len(), category));
            }
        }
        best
    }
}

/// One replacement made by [`apply_gazetteer`], awaiting review.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskProposal {
    pub utterance_id: String,
    pub start: usize,
    pub end: usize,
    pub category: MaskCategory,
}

impl MaskProposal {
    pub fn placeholder(&self) -> &'static str {
        self.category.placeholder()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject,
    Recategorize(MaskCategory),
}

impl FromStr for Decision {
    type Err = Error;

    /// Blank decisions count as accept.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("accept") {
            return Ok(Decision::Accept);
        }
        if s.eq_ignore_ascii_case("reject") {
            return Ok(Decision::Reject);
        }
        match s.split_once(':') {
            Some((head, cat)) if head.eq_ignore_ascii_case("recategorize") => cat
                .parse()
                .map(Decision::Recategorize)
                .map_err(|_| Error::InvalidDecision(s.to_string())),
            _ => Err(Error::InvalidDecision(s.to_string())),
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Accept => f.write_str("accept"),
            Decision::Reject => f.write_str("reject"),
            Decision::Recategorize(c) => write!(f, "recategorize:{c}"),
        }
    }
}

/// A reviewed proposal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Correction {
    pub proposal: MaskProposal,
    pub decision: Decision,
}

/// Replaces gazetteer phrases with category placeholders.
///
/// Scans left to right; at each position the longest matching phrase wins and
/// collapses into one placeholder token. Tokens that are already masked are
/// never matched again, which makes masking idempotent.
pub fn apply_gazetteer(
    utterance: &TokenizedUtterance,
    gazetteer: &Gazetteer,
) -> (TokenizedUtterance, Vec<MaskProposal>) {
    let mut out = Vec::with_capacity(utterance.tokens.len());
    let mut proposals = Vec::new();
    let tokens = &utterance.tokens;
    let mut i = 0;
    let mut original_pos = 0;
    while i < tokens.len() {
        match gazetteer.longest_match(&tokens[i..]) {
            Some((len, category)) => {
                let original: Vec<String> =
                    tokens[i..i + len].iter().map(|t| t.surface.clone()).collect();
                let (start, end) = (original_pos, original_pos + len);
                proposals.push(MaskProposal {
                    utterance_id: utterance.id.clone(),
                    start,
                    end,
                    category,
                });
                out.push(Token {
                    surface: category.placeholder().to_string(),
                    position: 0,
                    mask: Some(Mask {
                        category,
                        start,
                        end,
                        original,
                    }),
                });
                i += len;
                original_pos = end;
            }
            None => {
                original_pos += tokens[i].original_width();
                out.push(tokens[i].clone());
                i += 1;
            }
        }
    }
    let mut masked = TokenizedUtterance {
        id: utterance.id.clone(),
        tokens: out,
        dimension: utterance.dimension.clone(),
        gold_label: utterance.gold_label.clone(),
    };
    masked.renumber();
    (masked, proposals)
}

/// Applies reviewed decisions to a masked corpus.
///
/// Rejected spans get their original tokens back, recategorized spans swap
/// the placeholder, accepted spans stay. Rows are addressed by
/// `(utterance_id, start, end)`; a row that matches no placeholder fails with
/// [`Error::DanglingCorrection`] carrying its 1-based row number.
pub fn apply_corrections(
    corpus: &[TokenizedUtterance],
    corrections: &[Correction],
) -> Result<Vec<TokenizedUtterance>> {
    let mut out: Vec<TokenizedUtterance> = corpus.to_vec();
    let index: BTreeMap<&str, usize> = corpus
        .iter()
        .enumerate()
        .map(|(i, u)| (u.id.as_str(), i))
        .collect();

    for (row, correction) in corrections.iter().enumerate() {
        let p = &correction.proposal;
        let dangling = || Error::DanglingCorrection {
            row: row + 1,
            utterance_id: p.utterance_id.clone(),
            start: p.start,
            end: p.end,
        };
        let &u = index.get(p.utterance_id.as_str()).ok_or_else(dangling)?;
        let utterance = &mut out[u];
        let slot = utterance
            .tokens
            .iter()
            .position(|t| {
                t.mask
                    .as_ref()
                    .is_some_and(|m| m.start == p.start && m.end == p.end)
            })
            .ok_or_else(dangling)?;

        match correction.decision {
            Decision::Accept => {}
            Decision::Recategorize(category) => {
                let token = &mut utterance.tokens[slot];
                token.surface = category.placeholder().to_string();
                if let Some(mask) = token.mask.as_mut() {
                    mask.category = category;
                }
            }
            Decision::Reject => {
                let mask = utterance.tokens[slot].mask.take().unwrap_or_else(|| {
                    unreachable!("slot was selected because it carries a mask")
                });
                let restored = mask.original.into_iter().map(|s| Token::new(s, 0));
                utterance.tokens.splice(slot..=slot, restored);
            }
        }
        utterance.renumber();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn words(u: &TokenizedUtterance) -> Vec<&str> {
        u.surfaces().collect()
    }

    fn ask_john() -> (TokenizedUtterance, Gazetteer) {
        let u = TokenizedUtterance::from_text("u1", "ask John to google it").unwrap();
        let g = Gazetteer::from_entries([
            ("john", MaskCategory::Name),
            ("google", MaskCategory::Resource),
        ])
        .unwrap();
        (u, g)
    }

    #[test]
    fn tokenize_drops_punctuation_and_lowercases() {
        let t = tokenize("Compare the radius!").unwrap();
        let s: Vec<_> = t.iter().map(|t| t.surface.as_str()).collect();
        assert_eq!(s, ["compare", "the", "radius"]);
        assert!(t.iter().enumerate().all(|(i, t)| t.position == i));
    }

    #[test]
    fn tokenize_empty_is_error() {
        assert_eq!(tokenize(""), Err(Error::EmptyUtterance));
        assert_eq!(tokenize(" ?! ..."), Err(Error::EmptyUtterance));
    }

    #[test]
    fn tokenize_keeps_whole_words() {
        let t = tokenize("walao").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].surface, "walao");
    }

    #[test]
    fn gazetteer_masks_two_entities() {
        let (u, g) = ask_john();
        let (masked, proposals) = apply_gazetteer(&u, &g);
        assert_eq!(words(&masked), ["ask", "[NAME]", "to", "[RESOURCE]", "it"]);
        assert_eq!(proposals.len(), 2);
        assert_eq!(proposals[0].start..proposals[0].end, 1..2);
        assert_eq!(proposals[1].placeholder(), "[RESOURCE]");
        assert_eq!(masked.tokens[1].mask_category(), Some(MaskCategory::Name));
    }

    #[test]
    fn empty_gazetteer_is_identity() {
        let (u, _) = ask_john();
        let (masked, proposals) = apply_gazetteer(&u, &Gazetteer::new());
        assert_eq!(masked, u);
        assert!(proposals.is_empty());
    }

    #[test]
    fn longest_match_wins_over_either_order() {
        // Both insertion orders must select the two-token span.
        let u = TokenizedUtterance::from_words("u", &["new", "york"]);
        for order in [[0, 1], [1, 0]] {
            let entries = [("new york", MaskCategory::Location), ("york", MaskCategory::Name)];
            let g = Gazetteer::from_entries(order.map(|i| entries[i])).unwrap();
            let (masked, proposals) = apply_gazetteer(&u, &g);
            assert_eq!(words(&masked), ["[LOCATION]"]);
            assert_eq!(proposals.len(), 1);
            assert_eq!((proposals[0].start, proposals[0].end), (0, 2));
        }
    }

    #[test]
    fn conflicting_gazetteer_entries_rejected() {
        let err = Gazetteer::from_entries([
            ("John", MaskCategory::Name),
            ("john", MaskCategory::Device),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::GazetteerConflict { .. }));
        assert_eq!(
            Gazetteer::from_entries([("??", MaskCategory::Name)]),
            Err(Error::EmptyPhrase)
        );
    }

    fn corrections_for(proposals: &[MaskProposal], decisions: &[Decision]) -> Vec<Correction> {
        proposals
            .iter()
            .zip(decisions)
            .map(|(p, &d)| Correction {
                proposal: p.clone(),
                decision: d,
            })
            .collect()
    }

    #[test]
    fn reject_restores_tokens() {
        let (u, g) = ask_john();
        let (masked, proposals) = apply_gazetteer(&u, &g);
        let rows = corrections_for(&proposals[1..], &[Decision::Reject]);
        let out = apply_corrections(&[masked], &rows).unwrap();
        assert_eq!(words(&out[0]), ["ask", "[NAME]", "to", "google", "it"]);
        assert!(out[0].tokens.iter().enumerate().all(|(i, t)| t.position == i));
    }

    #[test]
    fn recategorize_swaps_placeholder() {
        let (u, g) = ask_john();
        let (masked, proposals) = apply_gazetteer(&u, &g);
        let rows = corrections_for(&proposals[..1], &[Decision::Recategorize(MaskCategory::Device)]);
        let out = apply_corrections(&[masked], &rows).unwrap();
        assert_eq!(out[0].tokens[1].surface, "[DEVICE]");
        assert_eq!(out[0].tokens[1].mask_category(), Some(MaskCategory::Device));
    }

    #[test]
    fn empty_corrections_are_identity() {
        let (u, g) = ask_john();
        let (masked, _) = apply_gazetteer(&u, &g);
        let out = apply_corrections(core::slice::from_ref(&masked), &[]).unwrap();
        assert_eq!(out, vec![masked]);
    }

    #[test]
    fn dangling_row_is_named() {
        let (u, g) = ask_john();
        let (masked, mut proposals) = apply_gazetteer(&u, &g);
        proposals[1].start = 0;
        let rows = corrections_for(&proposals, &[Decision::Accept, Decision::Reject]);
        let err = apply_corrections(&[masked], &rows).unwrap_err();
        assert_eq!(
            err,
            Error::DanglingCorrection {
                row: 2,
                utterance_id: "u1".into(),
                start: 0,
                end: 4
            }
        );
    }

    #[test]
    fn multiword_spans_use_original_positions() {
        let u = TokenizedUtterance::from_text("u", "we met in New York with Ann").unwrap();
        let g = Gazetteer::from_entries([
            ("new york", MaskCategory::Location),
            ("ann", MaskCategory::Name),
        ])
        .unwrap();
        let (masked, proposals) = apply_gazetteer(&u, &g);
        assert_eq!(masked.len(), 6);
        assert_eq!((proposals[0].start, proposals[0].end), (3, 5));
        assert_eq!((proposals[1].start, proposals[1].end), (6, 7));
        let rows = corrections_for(&proposals, &[Decision::Reject, Decision::Reject]);
        assert_eq!(apply_corrections(&[masked], &rows).unwrap(), vec![u]);
    }

    #[test]
    fn decision_parsing() {
        assert_eq!("".parse::<Decision>(), Ok(Decision::Accept));
        assert_eq!("reject".parse::<Decision>(), Ok(Decision::Reject));
        assert_eq!(
            "recategorize:DEVICE".parse::<Decision>(),
            Ok(Decision::Recategorize(MaskCategory::Device))
        );
        assert!("maybe".parse::<Decision>().is_err());
        assert!("recategorize:PLANET".parse::<Decision>().is_err());
        let d = Decision::Recategorize(MaskCategory::Name);
        assert_eq!(d.to_string().parse::<Decision>(), Ok(d));
    }

    #[test]
    fn dimension_validation() {
        assert!(Dimension::new("d", Vec::<String>::new()).is_err());
        assert!(Dimension::new("d", ["a", "a"]).is_err());
        let d = Dimension::new("affective", ["AS1", "AS2", "AS3"]).unwrap();
        assert_eq!(d.index_of("AS2"), Ok(1));
        assert!(d.index_of("SS1").is_err());
    }
}
