//! Per-token attributions for a black-box classifier.
//!
//! Four explainers share one game: `v(S)` is the model's score vector on the
//! utterance with exactly the tokens in `S` visible. Every explainer works on
//! the whole score vector at once, so a single run yields attributions for
//! every class of the dimension.
//!
//! * [`exact_shapley`]: coalition enumeration, `2^n` evaluations.
//! * [`owen_exact`]: average over all leaf orderings consistent with a
//!   [`PartitionTree`], the oracle for the partition explainer.
//! * [`partition_attribute`]: the recursive two-context explainer with
//!   residual redistribution, at most `4n + 2` evaluations.
//! * [`permutation_shapley`]: antithetic permutation sampling.
//!
//! Model evaluations are cached per utterance and keyed by the visibility
//! bits, so the reported `model_evals` counts distinct coalitions.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::TokenizedUtterance;
use crate::model::{Coalition, MaskedInput, ModelAdapter};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Exact,
    Owen,
    Partition,
    Permutation,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Exact,
        Method::Owen,
        Method::Partition,
        Method::Permutation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Owen => "owen",
            Method::Partition => "partition",
            Method::Permutation => "permutation",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainConfig {
    /// Largest utterance accepted by [`exact_shapley`].
    pub exact_cap: usize,
    /// Largest utterance accepted by [`owen_exact`].
    pub owen_cap: usize,
    /// Permutations drawn per utterance (each is also walked in reverse).
    pub n_perms: usize,
    pub seed: u64,
    /// Coalitions sent to the adapter per batch.
    pub batch_size: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            exact_cap: 20,
            owen_cap: 12,
            n_perms: 1000,
            seed: 0,
            batch_size: 256,
        }
    }
}

/// Attributions of one utterance toward one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassAttribution {
    pub class: String,
    /// `v(∅)`: the score with every token hidden.
    pub base: f64,
    /// `v(N)`: the score with every token visible.
    pub full: f64,
    pub phi: Vec<f64>,
}

impl ClassAttribution {
    /// `|Σ phi + base − full|`.
    pub fn efficiency_gap(&self) -> f64 {
        let total: f64 = self.phi.iter().sum();
        libm::fabs(total + self.base - self.full)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionResult {
    pub utterance_id: String,
    pub tokens: Vec<String>,
    pub method: Method,
    /// One entry per class, in dimension order.
    pub classes: Vec<ClassAttribution>,
    /// Distinct coalitions this explainer sent to the model.
    pub model_evals: u64,
    pub seed: Option<u64>,
}

impl AttributionResult {
    pub fn for_class(&self, class: &str) -> Option<&ClassAttribution> {
        self.classes.iter().find(|c| c.class == class)
    }

    /// Attributions toward the class at `index` in the dimension.
    pub fn phi(&self, index: usize) -> &[f64] {
        &self.classes[index].phi
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble<M: ModelAdapter + ?Sized>(
        adapter: &M,
        utterance: &TokenizedUtterance,
        method: Method,
        empty: &[f64],
        full: &[f64],
        phi: Vec<Vec<f64>>,
        model_evals: u64,
        seed: Option<u64>,
    ) -> Self {
        let classes = adapter
            .dimension()
            .classes()
            .iter()
            .enumerate()
            .map(|(c, class)| ClassAttribution {
                class: class.clone(),
                base: empty[c],
                full: full[c],
                phi: phi.iter().map(|p| p[c]).collect(),
            })
            .collect();
        AttributionResult {
            utterance_id: utterance.id.clone(),
            tokens: utterance.surfaces().map(ToString::to_string).collect(),
            method,
            classes,
            model_evals,
            seed,
        }
    }
}

/// Score vectors for coalitions of one utterance, evaluated in batches and
/// cached by visibility bits.
struct CoalitionCache<'a, M: ?Sized> {
    adapter: &'a M,
    utterance: &'a TokenizedUtterance,
    batch_size: usize,
    values: BTreeMap<Coalition, Vec<f64>>,
    evals: u64,
}

impl<'a, M: ModelAdapter + ?Sized> CoalitionCache<'a, M> {
    fn new(adapter: &'a M, utterance: &'a TokenizedUtterance, batch_size: usize) -> Self {
        CoalitionCache {
            adapter,
            utterance,
            batch_size: batch_size.max(1),
            values: BTreeMap::new(),
            evals: 0,
        }
    }

    /// Evaluates every coalition not yet cached.
    fn fill(&mut self, coalitions: impl IntoIterator<Item = Coalition>) -> Result<()> {
        let missing: BTreeSet<Coalition> = coalitions
            .into_iter()
            .filter(|c| !self.values.contains_key(c))
            .collect();
        let missing: Vec<Coalition> = missing.into_iter().collect();
        for chunk in missing.chunks(self.batch_size) {
            let inputs: Vec<MaskedInput<'_>> = chunk
                .iter()
                .map(|c| MaskedInput::new(self.utterance, c.clone()))
                .collect();
            let scores = self.adapter.predict_batch(&inputs)?;
            self.evals += chunk.len() as u64;
            for (c, s) in chunk.iter().zip(scores) {
                self.values.insert(c.clone(), s.0);
            }
        }
        Ok(())
    }

    fn get(&self, c: &Coalition) -> &[f64] {
        self.values
            .get(c)
            .map(Vec::as_slice)
            .unwrap_or_else(|| panic!("coalition {c:?} was not evaluated"))
    }
}

fn check_nonempty(utterance: &TokenizedUtterance) -> Result<usize> {
    match utterance.len() {
        0 => Err(Error::EmptyUtterance),
        n => Ok(n),
    }
}

/// Exact Shapley values by enumerating all `2^n` coalitions.
///
/// `phi_i = Σ_{S ⊆ N∖{i}} |S|!(n−|S|−1)!/n! · (v(S∪{i}) − v(S))`
pub fn exact_shapley<M: ModelAdapter + ?Sized>(
    adapter: &M,
    utterance: &TokenizedUtterance,
    config: &ExplainConfig,
) -> Result<AttributionResult> {
    let n = check_nonempty(utterance)?;
    let cap = config.exact_cap.min(30);
    if n > cap {
        return Err(Error::TooManyTokens {
            method: "exact",
            tokens: n,
            cap,
        });
    }
    let k = adapter.dimension().len();
    let subsets = 1usize << n;

    // Dense table: values[mask * k + class].
    let mut values = vec![0.0; subsets * k];
    let batch = config.batch_size.max(1);
    let mut start = 0;
    while start < subsets {
        let end = (start + batch).min(subsets);
        let inputs: Vec<MaskedInput<'_>> = (start..end)
            .map(|m| MaskedInput::new(utterance, Coalition::from_mask(n, m as u64)))
            .collect();
        let scores = adapter.predict_batch(&inputs)?;
        for (m, s) in (start..end).zip(scores) {
            values[m * k..(m + 1) * k].copy_from_slice(&s.0);
        }
        start = end;
    }

    // weight[s] = s!(n−s−1)!/n! = 1 / (n · C(n−1, s))
    let mut weight = vec![0.0; n];
    let mut binom = 1.0;
    for (s, w) in weight.iter_mut().enumerate() {
        *w = 1.0 / (n as f64 * binom);
        binom = binom * (n - 1 - s) as f64 / (s + 1) as f64;
    }

    let mut phi = vec![vec![0.0; k]; n];
    for (i, phi_i) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for s in (0..subsets).filter(|s| s & bit == 0) {
            let w = weight[s.count_ones() as usize];
            let with = &values[(s | bit) * k..(s | bit) * k + k];
            let without = &values[s * k..s * k + k];
            for c in 0..k {
                phi_i[c] += w * (with[c] - without[c]);
            }
        }
    }

    let empty = &values[..k];
    let full = &values[(subsets - 1) * k..];
    Ok(AttributionResult::assemble(
        adapter,
        utterance,
        Method::Exact,
        empty,
        full,
        phi,
        subsets as u64,
        None,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Node {
    children: Option<(usize, usize)>,
    /// Token positions under this node, ascending.
    leaves: Vec<usize>,
}

/// Nested description of a binary tree over token positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeShape {
    Leaf(usize),
    Join(alloc::boxed::Box<TreeShape>, alloc::boxed::Box<TreeShape>),
}

impl TreeShape {
    pub fn join(left: TreeShape, right: TreeShape) -> TreeShape {
        TreeShape::Join(alloc::boxed::Box::new(left), alloc::boxed::Box::new(right))
    }
}

/// Binary hierarchy over the token positions `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionTree {
    nodes: Vec<Node>,
    root: usize,
    n_leaves: usize,
}

impl PartitionTree {
    /// Recursively splits `[a, b)` at `⌈(a+b)/2⌉`, so the left child is never
    /// smaller than the right one.
    pub fn contiguous_bisection(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidTree("a tree needs at least one leaf".into()));
        }
        fn split(a: usize, b: usize) -> TreeShape {
            if b - a == 1 {
                return TreeShape::Leaf(a);
            }
            let mid = (a + b).div_ceil(2);
            TreeShape::join(split(a, mid), split(mid, b))
        }
        Self::from_shape(n, &split(0, n))
    }

    /// Builds a tree from a nested shape; leaves must be exactly `0..n`.
    pub fn from_shape(n: usize, shape: &TreeShape) -> Result<Self> {
        let mut tree = PartitionTree {
            nodes: Vec::new(),
            root: 0,
            n_leaves: n,
        };
        let mut seen = vec![false; n];
        tree.root = tree.push(shape, &mut seen)?;
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidTree(format!("position {missing} is not a leaf")));
        }
        Ok(tree)
    }

    fn push(&mut self, shape: &TreeShape, seen: &mut [bool]) -> Result<usize> {
        let node = match shape {
            TreeShape::Leaf(i) => {
                let slot = seen
                    .get_mut(*i)
                    .ok_or_else(|| Error::InvalidTree(format!("leaf {i} is out of range")))?;
                if core::mem::replace(slot, true) {
                    return Err(Error::InvalidTree(format!("leaf {i} appears twice")));
                }
                Node {
                    children: None,
                    leaves: vec![*i],
                }
            }
            TreeShape::Join(left, right) => {
                let l = self.push(left, seen)?;
                let r = self.push(right, seen)?;
                let mut leaves = self.nodes[l].leaves.clone();
                leaves.extend_from_slice(&self.nodes[r].leaves);
                leaves.sort_unstable();
                Node {
                    children: Some((l, r)),
                    leaves,
                }
            }
        };
        self.nodes.push(node);
        Ok(self.nodes.len() - 1)
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn n_internal(&self) -> usize {
        self.nodes.iter().filter(|n| n.children.is_some()).count()
    }

    /// True when every node owns a contiguous index range.
    pub fn is_contiguous(&self) -> bool {
        self.nodes
            .iter()
            .all(|n| n.leaves.windows(2).all(|w| w[1] == w[0] + 1))
    }

    fn coalition(&self, node: usize) -> Coalition {
        Coalition::from_indices(self.n_leaves, self.nodes[node].leaves.iter().copied())
    }

    /// Node indices with every parent before its descendants.
    fn preorder(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(node) = stack.pop() {
            order.push(node);
            if let Some((l, r)) = self.nodes[node].children {
                stack.push(r);
                stack.push(l);
            }
        }
        order
    }

    /// Leaf order obtained by swapping the children of every internal node
    /// whose bit is set in `swaps` (bit index = position in `internal`).
    fn ordering(&self, internal: &[usize], swaps: u64, out: &mut Vec<usize>) {
        out.clear();
        let mut stack = vec![self.root];
        while let Some(node) = stack.pop() {
            match self.nodes[node].children {
                None => out.push(self.nodes[node].leaves[0]),
                Some((l, r)) => {
                    let bit = internal.iter().position(|&x| x == node).unwrap_or(0);
                    let (first, second) = if swaps >> bit & 1 == 1 { (r, l) } else { (l, r) };
                    stack.push(second);
                    stack.push(first);
                }
            }
        }
    }
}

impl fmt::Display for PartitionTree {
    /// Nested notation, e.g. `((0,1),2)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(t: &PartitionTree, node: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match t.nodes[node].children {
                None => write!(f, "{}", t.nodes[node].leaves[0]),
                Some((l, r)) => {
                    f.write_str("(")?;
                    go(t, l, f)?;
                    f.write_str(",")?;
                    go(t, r, f)?;
                    f.write_str(")")
                }
            }
        }
        go(self, self.root, f)
    }
}

/// Builds the default hierarchy for an utterance.
pub fn build_tree(utterance: &TokenizedUtterance) -> Result<PartitionTree> {
    PartitionTree::contiguous_bisection(utterance.len())
}

fn check_tree(tree: &PartitionTree, n: usize) -> Result<()> {
    if tree.n_leaves() != n {
        return Err(Error::InvalidTree(format!(
            "tree has {} leaves but the utterance has {n} tokens",
            tree.n_leaves()
        )));
    }
    Ok(())
}

/// Exact Owen values: the mean marginal contribution over every leaf
/// ordering reachable by swapping children of internal nodes.
pub fn owen_exact<M: ModelAdapter + ?Sized>(
    adapter: &M,
    utterance: &TokenizedUtterance,
    tree: &PartitionTree,
    config: &ExplainConfig,
) -> Result<AttributionResult> {
    let n = check_nonempty(utterance)?;
    let cap = config.owen_cap.min(24);
    if n > cap {
        return Err(Error::TooManyTokens {
            method: "owen",
            tokens: n,
            cap,
        });
    }
    check_tree(tree, n)?;
    let k = adapter.dimension().len();
    let internal: Vec<usize> = (0..tree.nodes.len())
        .filter(|&i| tree.nodes[i].children.is_some())
        .collect();
    let orderings = 1u64 << internal.len();

    // Prefix coalitions of every consistent ordering.
    let mut order = Vec::with_capacity(n);
    let mut needed = BTreeSet::new();
    for swaps in 0..orderings {
        tree.ordering(&internal, swaps, &mut order);
        let mut prefix = 0u64;
        needed.insert(prefix);
        for &leaf in &order {
            prefix |= 1 << leaf;
            needed.insert(prefix);
        }
    }
    let mut cache = CoalitionCache::new(adapter, utterance, config.batch_size);
    cache.fill(needed.into_iter().map(|m| Coalition::from_mask(n, m)))?;

    let mut phi = vec![vec![0.0; k]; n];
    for swaps in 0..orderings {
        tree.ordering(&internal, swaps, &mut order);
        let mut prefix = 0u64;
        let mut before = cache.get(&Coalition::from_mask(n, prefix));
        for &leaf in &order {
            prefix |= 1 << leaf;
            let after = cache.get(&Coalition::from_mask(n, prefix));
            for c in 0..k {
                phi[leaf][c] += after[c] - before[c];
            }
            before = after;
        }
    }
    let scale = 1.0 / orderings as f64;
    for p in phi.iter_mut().flatten() {
        *p *= scale;
    }

    let empty = cache.get(&Coalition::empty(n)).to_vec();
    let full = cache.get(&Coalition::full(n)).to_vec();
    Ok(AttributionResult::assemble(
        adapter,
        utterance,
        Method::Owen,
        &empty,
        &full,
        phi,
        cache.evals,
        None,
    ))
}

/// Recursive partition explainer.
///
/// Every node `D` is scored in a lower context `L` (tokens forced visible) and
/// an upper context `U` (tokens not yet removed):
/// `value(D) = ½[(v(L∪D) − v(L)) + (v(U) − v(U∖D))]`. The root uses `L = ∅`,
/// `U = N`. A child `A` with sibling `B` inherits `L` and gets `U∖B`. A leaf
/// takes its node value; an internal node spreads the gap between its value
/// and the sum of its leaves evenly over those leaves, so the root restores
/// `Σ phi = v(N) − v(∅)`.
pub fn partition_attribute<M: ModelAdapter + ?Sized>(
    adapter: &M,
    utterance: &TokenizedUtterance,
    tree: &PartitionTree,
    config: &ExplainConfig,
) -> Result<AttributionResult> {
    let n = check_nonempty(utterance)?;
    check_tree(tree, n)?;
    let k = adapter.dimension().len();

    // Contexts, top-down.
    let mut lower = vec![Coalition::empty(n); tree.nodes.len()];
    let mut upper = vec![Coalition::empty(n); tree.nodes.len()];
    upper[tree.root] = Coalition::full(n);
    let preorder = tree.preorder();
    for &node in &preorder {
        if let Some((a, b)) = tree.nodes[node].children {
            let (set_a, set_b) = (tree.coalition(a), tree.coalition(b));
            lower[a] = lower[node].clone();
            lower[b] = lower[node].clone();
            upper[a] = upper[node].difference(&set_b);
            upper[b] = upper[node].difference(&set_a);
        }
    }

    let mut cache = CoalitionCache::new(adapter, utterance, config.batch_size);
    let mut needed = vec![Coalition::empty(n), Coalition::full(n)];
    for &node in &preorder {
        let d = tree.coalition(node);
        needed.push(lower[node].union(&d));
        needed.push(lower[node].clone());
        needed.push(upper[node].clone());
        needed.push(upper[node].difference(&d));
    }
    cache.fill(needed)?;

    let node_value = |node: usize| -> Vec<f64> {
        let d = tree.coalition(node);
        let lo_with = cache.get(&lower[node].union(&d));
        let lo = cache.get(&lower[node]);
        let up = cache.get(&upper[node]);
        let up_without = cache.get(&upper[node].difference(&d));
        (0..k)
            .map(|c| 0.5 * ((lo_with[c] - lo[c]) + (up[c] - up_without[c])))
            .collect()
    };

    let mut phi = vec![vec![0.0; k]; n];
    // Reverse preorder visits every node after all of its descendants.
    for &node in preorder.iter().rev() {
        let value = node_value(node);
        let leaves = &tree.nodes[node].leaves;
        if tree.nodes[node].children.is_none() {
            phi[leaves[0]] = value;
            continue;
        }
        let share = 1.0 / leaves.len() as f64;
        for (c, total) in value.iter().enumerate() {
            let assigned: f64 = leaves.iter().map(|&l| phi[l][c]).sum();
            let residual = (total - assigned) * share;
            if residual != 0.0 {
                for &l in leaves {
                    phi[l][c] += residual;
                }
            }
        }
    }

    let empty = cache.get(&Coalition::empty(n)).to_vec();
    let full = cache.get(&Coalition::full(n)).to_vec();
    Ok(AttributionResult::assemble(
        adapter,
        utterance,
        Method::Partition,
        &empty,
        &full,
        phi,
        cache.evals,
        None,
    ))
}

/// Antithetic permutation sampling.
///
/// Draws `n_perms` uniform permutations from a ChaCha8 stream seeded with
/// `seed` (one `shuffle` of the identity per permutation, in order) and
/// averages marginal contributions along each permutation and its reverse.
pub fn permutation_shapley<M: ModelAdapter + ?Sized>(
    adapter: &M,
    utterance: &TokenizedUtterance,
    n_perms: usize,
    seed: u64,
    config: &ExplainConfig,
) -> Result<AttributionResult> {
    let n = check_nonempty(utterance)?;
    if n_perms == 0 {
        return Err(Error::InvalidArgument("n_perms must be at least 1".into()));
    }
    let k = adapter.dimension().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut walks: Vec<Vec<usize>> = Vec::with_capacity(2 * n_perms);
    for _ in 0..n_perms {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let reversed = perm.iter().rev().copied().collect();
        walks.push(perm);
        walks.push(reversed);
    }

    let prefixes = |walk: &[usize]| {
        let mut c = Coalition::empty(n);
        let mut out = Vec::with_capacity(n + 1);
        out.push(c.clone());
        for &i in walk {
            c.insert(i);
            out.push(c.clone());
        }
        out
    };

    let mut cache = CoalitionCache::new(adapter, utterance, config.batch_size);
    cache.fill(walks.iter().flat_map(|w| prefixes(w)))?;

    let mut phi = vec![vec![0.0; k]; n];
    for walk in &walks {
        let chain = prefixes(walk);
        for (step, &i) in walk.iter().enumerate() {
            let before = cache.get(&chain[step]);
            let after = cache.get(&chain[step + 1]);
            for c in 0..k {
                phi[i][c] += after[c] - before[c];
            }
        }
    }
    let scale = 1.0 / walks.len() as f64;
    for p in phi.iter_mut().flatten() {
        *p *= scale;
    }

    let empty = cache.get(&Coalition::empty(n)).to_vec();
    let full = cache.get(&Coalition::full(n)).to_vec();
    Ok(AttributionResult::assemble(
        adapter,
        utterance,
        Method::Permutation,
        &empty,
        &full,
        phi,
        cache.evals,
        Some(seed),
    ))
}

/// Explains one utterance with `method`; tree-based methods use
/// [`build_tree`].
pub fn explain_utterance<M: ModelAdapter + ?Sized>(
    adapter: &M,
    utterance: &TokenizedUtterance,
    method: Method,
    config: &ExplainConfig,
) -> Result<AttributionResult> {
    match method {
        Method::Exact => exact_shapley(adapter, utterance, config),
        Method::Owen => owen_exact(adapter, utterance, &build_tree(utterance)?, config),
        Method::Partition => partition_attribute(adapter, utterance, &build_tree(utterance)?, config),
        Method::Permutation => {
            permutation_shapley(adapter, utterance, config.n_perms, config.seed, config)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusExplanation {
    /// Sorted by utterance id.
    pub results: Vec<AttributionResult>,
    pub skipped: Vec<Skipped>,
}

impl CorpusExplanation {
    /// Orders results and skips by utterance id.
    pub fn sort(&mut self) {
        self.results.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
        self.skipped.sort_by(|a, b| a.id.cmp(&b.id));
    }
}

/// Outcome of explaining one utterance inside a corpus run.
pub enum Outcome {
    Explained(AttributionResult),
    Skipped(Skipped),
}

/// Explains one corpus member. Empty utterances and adapter failures become
/// skips; cap violations and other configuration errors are returned.
pub fn explain_member<M: ModelAdapter + ?Sized>(
    adapter: &M,
    utterance: &TokenizedUtterance,
    method: Method,
    config: &ExplainConfig,
) -> Result<Outcome> {
    let skip = |reason: String| {
        Ok(Outcome::Skipped(Skipped {
            id: utterance.id.clone(),
            reason,
        }))
    };
    if utterance.is_empty() {
        return skip(Error::EmptyUtterance.to_string());
    }
    match explain_utterance(adapter, utterance, method, config) {
        Ok(r) => Ok(Outcome::Explained(r)),
        Err(e @ Error::Adapter { .. }) => skip(e.to_string()),
        Err(e) => Err(e),
    }
}

/// Explains every utterance sequentially, ordered by utterance id.
pub fn explain_corpus<M: ModelAdapter + ?Sized>(
    adapter: &M,
    corpus: &[TokenizedUtterance],
    method: Method,
    config: &ExplainConfig,
) -> Result<CorpusExplanation> {
    let mut out = CorpusExplanation::default();
    for utterance in corpus {
        match explain_member(adapter, utterance, method, config)? {
            Outcome::Explained(r) => out.results.push(r),
            Outcome::Skipped(s) => out.skipped.push(s),
        }
    }
    out.sort();
    Ok(out)
}
