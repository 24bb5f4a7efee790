//! Brute-force oracles shared by the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use tokenshap_core::attribution::TreeShape;
use tokenshap_core::corpus::TokenizedUtterance;
use tokenshap_core::model::{make_builtin, BuiltinModel, BuiltinSpec, Coalition, MaskedInput, ModelAdapter};

/// Scores of every class with exactly the tokens in `mask` visible.
pub struct Game<'a, M: ModelAdapter> {
    model: &'a M,
    utterance: &'a TokenizedUtterance,
    memo: HashMap<u64, Vec<f64>>,
}

impl<'a, M: ModelAdapter> Game<'a, M> {
    pub fn new(model: &'a M, utterance: &'a TokenizedUtterance) -> Self {
        Game { model, utterance, memo: HashMap::new() }
    }

    pub fn value(&mut self, mask: u64) -> Vec<f64> {
        if let Some(v) = self.memo.get(&mask) {
            return v.clone();
        }
        let input = MaskedInput::new(self.utterance, Coalition::from_mask(self.utterance.len(), mask));
        let v = self.model.predict_batch(&[input]).unwrap().remove(0).0;
        self.memo.insert(mask, v.clone());
        v
    }
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, left: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..left.len() {
            let x = left.remove(i);
            prefix.push(x);
            go(prefix, left, out);
            prefix.pop();
            left.insert(i, x);
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut (0..n).collect(), &mut out);
    out
}

/// Mean marginal contribution over the given orderings: `phi[token][class]`.
pub fn average_over<M: ModelAdapter>(game: &mut Game<'_, M>, n: usize, orders: &[Vec<usize>]) -> Vec<Vec<f64>> {
    let k = game.value(0).len();
    let mut phi = vec![vec![0.0; k]; n];
    for order in orders {
        let mut mask = 0u64;
        let mut before = game.value(0);
        for &i in order {
            mask |= 1 << i;
            let after = game.value(mask);
            for c in 0..k {
                phi[i][c] += after[c] - before[c];
            }
            before = after;
        }
    }
    for row in &mut phi {
        for x in row.iter_mut() {
            *x /= orders.len() as f64;
        }
    }
    phi
}

/// Shapley values by enumerating all n! orderings.
pub fn shapley_oracle<M: ModelAdapter>(model: &M, u: &TokenizedUtterance) -> Vec<Vec<f64>> {
    let mut game = Game::new(model, u);
    average_over(&mut game, u.len(), &permutations(u.len()))
}

pub fn leaves(shape: &TreeShape) -> Vec<usize> {
    match shape {
        TreeShape::Leaf(i) => vec![*i],
        TreeShape::Join(a, b) => {
            let mut v = leaves(a);
            v.extend(leaves(b));
            v
        }
    }
}

fn groups(shape: &TreeShape, out: &mut Vec<Vec<usize>>) {
    if let TreeShape::Join(a, b) = shape {
        out.push(leaves(shape));
        groups(a, out);
        groups(b, out);
    }
}

/// Owen values: orderings in which every tree node's leaves are contiguous.
pub fn owen_oracle<M: ModelAdapter>(model: &M, u: &TokenizedUtterance, shape: &TreeShape) -> Vec<Vec<f64>> {
    let mut gs = Vec::new();
    groups(shape, &mut gs);
    let consistent: Vec<Vec<usize>> = permutations(u.len())
        .into_iter()
        .filter(|order| {
            gs.iter().all(|g| {
                let pos: Vec<usize> = g.iter().map(|x| order.iter().position(|y| y == x).unwrap()).collect();
                pos.iter().max().unwrap() - pos.iter().min().unwrap() + 1 == g.len()
            })
        })
        .collect();
    let mut game = Game::new(model, u);
    average_over(&mut game, u.len(), &consistent)
}

/// Contiguous bisection with the split at ⌈(a+b)/2⌉, built independently.
pub fn bisection(a: usize, b: usize) -> TreeShape {
    if b - a == 1 {
        return TreeShape::Leaf(a);
    }
    let mid = (a + b).div_ceil(2);
    TreeShape::join(bisection(a, mid), bisection(mid, b))
}

pub fn words(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("t{i}")).collect()
}

/// Keyword model over `t0..t{n-1}`; `weights[class][token]`.
pub fn keyword_model(kind: &str, weights: &[Vec<f64>], base: &[f64]) -> BuiltinModel {
    let classes: Vec<String> = (0..weights.len()).map(|c| format!("c{c}")).collect();
    let mut table = BTreeMap::new();
    for (c, row) in weights.iter().enumerate() {
        table.insert(
            classes[c].clone(),
            row.iter().enumerate().map(|(i, w)| (format!("t{i}"), *w)).collect(),
        );
    }
    make_builtin(&BuiltinSpec {
        kind: kind.into(),
        classes,
        base: base.to_vec(),
        weights: table,
        ..Default::default()
    })
    .unwrap()
}

pub fn utterance(n: usize) -> TokenizedUtterance {
    TokenizedUtterance::from_words("u", &words(n))
}

/// Small deterministic generator for seeded test fixtures.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}
