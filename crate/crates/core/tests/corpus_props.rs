use proptest::prelude::*;
use tokenshap_core::corpus::{
    apply_corrections, apply_gazetteer, Correction, Decision, Gazetteer, MaskCategory, TokenizedUtterance,
};

const POOL: [&str; 10] = ["ask", "john", "smith", "about", "new", "york", "the", "laptop", "please", "chess"];

fn gazetteer() -> Gazetteer {
    Gazetteer::from_entries([
        ("john", MaskCategory::Name),
        ("john smith", MaskCategory::Name),
        ("new york", MaskCategory::Location),
        ("laptop", MaskCategory::Device),
        ("chess", MaskCategory::Entertainment),
    ])
    .unwrap()
}

fn utterances() -> impl Strategy<Value = Vec<TokenizedUtterance>> {
    prop::collection::vec(prop::collection::vec(prop::sample::select(&POOL[..]), 1..12), 1..6).prop_map(|rows| {
        rows.iter()
            .enumerate()
            .map(|(i, words)| TokenizedUtterance::from_text(format!("u{i}"), &words.join(" ")).unwrap())
            .collect()
    })
}

proptest! {
    #[test]
    fn masking_is_idempotent(corpus in utterances()) {
        let g = gazetteer();
        for u in &corpus {
            let (once, _) = apply_gazetteer(u, &g);
            let (twice, proposals) = apply_gazetteer(&once, &g);
            prop_assert_eq!(&once, &twice);
            prop_assert!(proposals.is_empty());
        }
    }

    #[test]
    fn each_mask_replaces_its_span_with_one_token(corpus in utterances()) {
        let g = gazetteer();
        for u in &corpus {
            let (masked, proposals) = apply_gazetteer(u, &g);
            let removed: usize = proposals.iter().map(|p| p.end - p.start - 1).sum();
            prop_assert_eq!(masked.len(), u.len() - removed);
            let placeholders = masked.tokens.iter().filter(|t| t.mask.is_some()).count();
            prop_assert_eq!(placeholders, proposals.len());
        }
    }

    #[test]
    fn reject_all_restores_and_accept_all_keeps(corpus in utterances()) {
        let g = gazetteer();
        let (masked, proposals): (Vec<_>, Vec<_>) = corpus.iter().map(|u| apply_gazetteer(u, &g)).unzip();
        let proposals: Vec<_> = proposals.into_iter().flatten().collect();
        let decide = |d: Decision| -> Vec<Correction> {
            proposals.iter().map(|p| Correction { proposal: p.clone(), decision: d }).collect()
        };
        let restored = apply_corrections(&masked, &decide(Decision::Reject)).unwrap();
        for (r, u) in restored.iter().zip(&corpus) {
            prop_assert_eq!(r.surfaces().collect::<Vec<_>>(), u.surfaces().collect::<Vec<_>>());
            prop_assert!(r.tokens.iter().all(|t| t.mask.is_none()));
        }
        prop_assert_eq!(apply_corrections(&masked, &decide(Decision::Accept)).unwrap(), masked);
    }
}
