//! Binary selectors: pair partitions, the selector constant, and search for
//! selector trees minimising `max_b ‖2^N Σ_{I_b} T_n − T‖`.

use std::collections::HashMap;
use std::hash::Hash;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FramexError, Result};
use crate::linalg::{hermitian_norm, Matrix, PsdOperator, TAU_NUM};

/// Exhaustive search is allowed up to this many selector trees (log2).
pub const EXHAUSTIVE_LOG2_LIMIT: u32 = 20;
pub const DEFAULT_RESTARTS: usize = 1024;
const MAX_FLIP_ROUNDS: usize = 64;

/// `B_0..=B_n` from `B_{j+1} = B_j + 4 (2^j δ B_j)^{1/2} + 2^{j+1} δ`.
pub fn b_sequence(delta: f64, n: usize) -> Vec<f64> {
    let mut b = Vec::with_capacity(n + 1);
    b.push(1.0);
    for j in 0..n {
        let bj = b[j];
        let p = 2f64.powi(j as i32) * delta;
        b.push(bj + 4.0 * (p * bj).sqrt() + 2.0 * p);
    }
    b
}

/// Smallest constant with `Σ_{j<N} (B_j − 1) ≤ C (2^N δ)^{1/2}` for all
/// `1 ≤ N ≤ n_max`. An empty range gives 0.
pub fn constant_c(delta: f64, n_max: usize) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(FramexError::precondition("delta must be positive"));
    }
    if 2f64.powi(n_max as i32) * delta >= 1.0 {
        return Err(FramexError::precondition(format!(
            "2^{n_max} * delta = {} is not below 1",
            2f64.powi(n_max as i32) * delta
        )));
    }
    let b = b_sequence(delta, n_max);
    let mut partial = 0.0;
    let mut c: f64 = 0.0;
    for n in 1..=n_max {
        partial += b[n - 1] - 1.0;
        c = c.max(partial / (2f64.powi(n as i32) * delta).sqrt());
    }
    Ok(c)
}

/// Largest `N ≥ 0` with `2^N δ < 1`.
pub fn max_order(delta: f64) -> usize {
    assert!(delta > 0.0);
    let mut n = 0;
    while 2f64.powi(n as i32 + 1) * delta < 1.0 {
        n += 1;
    }
    n
}

/// `constant_c(δ, max_order(δ))`: one constant valid for every admissible
/// order at this δ.
pub fn selector_constant(delta: f64) -> f64 {
    match max_order(delta) {
        0 => 0.0,
        n => constant_c(delta, n).expect("max_order keeps 2^N delta below 1"),
    }
}

/// Constant used by the sampling and extraction pipelines when none is
/// given: the selector constant, floored at 1 so that small-δ degeneracies
/// (where it vanishes) do not make β unbounded.
pub fn pipeline_constant(delta: f64) -> f64 {
    selector_constant(delta).max(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Beta {
    pub value: u32,
    /// `ε² / (4 C² δ)`
    pub ratio: f64,
    /// Set when β = 0, which lies outside the strict `β ≥ 1` window.
    pub zero_convention: bool,
}

/// The integer β with `1 < 2^β ε²/(4C²δ) ≤ 2`.
pub fn beta_for(epsilon: f64, c: f64, delta: f64) -> Result<Beta> {
    if !(epsilon > 0.0 && c > 0.0 && delta > 0.0) {
        return Err(FramexError::precondition("epsilon, C and delta must be positive"));
    }
    beta_for_ratio(epsilon * epsilon / (4.0 * c * c * delta))
}

pub fn beta_for_ratio(ratio: f64) -> Result<Beta> {
    for value in 0..=64u32 {
        // Scaling by a power of two is exact.
        let scaled = ratio * 2f64.powi(value as i32);
        if scaled > 1.0 && scaled <= 2.0 {
            return Ok(Beta {
                value,
                ratio,
                zero_convention: value == 0,
            });
        }
    }
    Err(FramexError::NoAdmissibleBeta(ratio))
}

/// A partition of an index set into pairs. `None` marks the synthetic zero
/// operator that pads an odd cell.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairPartition {
    pub index_set: Vec<usize>,
    pub pairs: Vec<(usize, Option<usize>)>,
}

impl PairPartition {
    pub fn new(index_set: Vec<usize>, pairs: Vec<(usize, Option<usize>)>) -> Result<Self> {
        let mut covered: Vec<usize> = pairs
            .iter()
            .flat_map(|&(a, b)| std::iter::once(a).chain(b))
            .collect();
        covered.sort_unstable();
        let mut want = index_set.clone();
        want.sort_unstable();
        let pads = pairs.iter().filter(|p| p.1.is_none()).count();
        if covered != want || pads > 1 || (pads == 1) != (index_set.len() % 2 == 1) {
            return Err(FramexError::InconsistentTree(
                "pairs do not partition the index set".into(),
            ));
        }
        Ok(PairPartition { index_set, pairs })
    }

    /// Sort by trace descending (ties by index) and pair neighbours.
    pub fn by_descending_trace(cell: &[usize], traces: &[f64]) -> Self {
        let mut order = cell.to_vec();
        order.sort_by(|&a, &b| traces[b].total_cmp(&traces[a]).then(a.cmp(&b)));
        let pairs = order
            .chunks(2)
            .map(|c| (c[0], c.get(1).copied()))
            .collect();
        let mut index_set = cell.to_vec();
        index_set.sort_unstable();
        PairPartition { index_set, pairs }
    }

    /// Children for the given sides; side 0 sends the first element of a
    /// pair to child 0.
    pub fn apply(&self, sides: &[u8]) -> (Vec<usize>, Vec<usize>) {
        let mut c0 = Vec::with_capacity(self.pairs.len());
        let mut c1 = Vec::with_capacity(self.pairs.len());
        for (&(a, b), &s) in self.pairs.iter().zip(sides) {
            let (x, y) = if s == 0 { (Some(a), b) } else { (b, Some(a)) };
            c0.extend(x);
            c1.extend(y);
        }
        c0.sort_unstable();
        c1.sort_unstable();
        (c0, c1)
    }
}

/// All `2^{#pairs}` order-one selectors `(I_0, I_1)`, pads omitted.
pub fn enumerate_selectors(p: &PairPartition) -> impl Iterator<Item = (Vec<usize>, Vec<usize>)> + '_ {
    let k = p.pairs.len();
    assert!(k < 64, "too many pairs to enumerate");
    (0..1u64 << k).map(move |mask| {
        let sides: Vec<u8> = (0..k).map(|i| ((mask >> (k - 1 - i)) & 1) as u8).collect();
        p.apply(&sides)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Exhaustive,
    Greedy,
    Randomized { seed: u64, restarts: usize },
}

impl Strategy {
    pub fn randomized(seed: u64) -> Self {
        Strategy::Randomized {
            seed,
            restarts: DEFAULT_RESTARTS,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Exhaustive => "exhaustive",
            Strategy::Greedy => "greedy",
            Strategy::Randomized { .. } => "randomized",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellChoice {
    pub partition: PairPartition,
    pub sides: Vec<u8>,
}

/// Depth-`order` selector tree. Cell `c` at depth `t` has children `2c`
/// (side 0) and `2c + 1` (side 1) at depth `t + 1`, so leaf `b` sits at
/// index `Σ b_k 2^{N−k}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectorTree {
    pub order: usize,
    pub root: Vec<usize>,
    pub levels: Vec<Vec<CellChoice>>,
    pub leaves: Vec<Vec<usize>>,
}

impl SelectorTree {
    /// Leaves must partition the root (error otherwise). Returns whether
    /// every recorded split reproduces the cells below it.
    pub fn check_structure(&self) -> Result<bool> {
        if self.leaves.len() != 1usize << self.order || self.levels.len() != self.order {
            return Err(FramexError::InconsistentTree(format!(
                "expected {} leaves over {} levels",
                1usize << self.order,
                self.order
            )));
        }
        let mut all: Vec<usize> = self.leaves.iter().flatten().copied().collect();
        all.sort_unstable();
        let mut root = self.root.clone();
        root.sort_unstable();
        if all != root {
            return Err(FramexError::InconsistentTree(
                "leaves do not partition the root index set".into(),
            ));
        }
        let mut cells = vec![root];
        for level in &self.levels {
            if level.len() != cells.len() {
                return Ok(false);
            }
            let mut next = Vec::with_capacity(2 * cells.len());
            for (cell, choice) in cells.iter().zip(level) {
                if &choice.partition.index_set != cell
                    || choice.sides.len() != choice.partition.pairs.len()
                    || PairPartition::new(cell.clone(), choice.partition.pairs.clone()).is_err()
                {
                    return Ok(false);
                }
                let (a, b) = choice.partition.apply(&choice.sides);
                next.push(a);
                next.push(b);
            }
            cells = next;
        }
        Ok(cells
            .iter()
            .zip(&self.leaves)
            .all(|(c, l)| {
                let mut l = l.clone();
                l.sort_unstable();
                *c == l
            }))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorCertificate {
    pub delta: f64,
    pub order: usize,
    pub c: f64,
    /// `‖2^N Σ_{I_b} T_n − T‖` per leaf, leaf order as in the tree.
    pub achieved: Vec<f64>,
    pub bound: f64,
    pub satisfied: bool,
    pub strategy: String,
}

impl SelectorCertificate {
    pub fn worst(&self) -> f64 {
        self.achieved.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SelectorOptions {
    /// Trace bound δ; defaults to the largest trace among the operators.
    pub delta: Option<f64>,
    /// Constant C; defaults to [`selector_constant`] at δ.
    pub c: Option<f64>,
}

/// `log2` of the number of selector trees of the given order on `m`
/// indices with neighbour pairing.
pub fn selector_count_log2(m: usize, order: usize) -> u64 {
    if order == 0 || m == 0 {
        return 0;
    }
    let pairs = m.div_ceil(2);
    pairs as u64 + selector_count_log2(m.div_ceil(2), order - 1) + selector_count_log2(m / 2, order - 1)
}

struct IndexModel<'a> {
    ops: &'a [PsdOperator],
    traces: Vec<f64>,
    target: &'a Matrix,
}

impl SplitModel for IndexModel<'_> {
    type Cell = Vec<usize>;

    fn free_bits(&self, cell: &Vec<usize>) -> usize {
        cell.len().div_ceil(2)
    }

    fn split(&self, cell: &Vec<usize>, bits: &[bool]) -> [Vec<usize>; 2] {
        let p = PairPartition::by_descending_trace(cell, &self.traces);
        let sides: Vec<u8> = bits.iter().map(|&b| b as u8).collect();
        let (a, b) = p.apply(&sides);
        [a, b]
    }

    fn deviation(&self, cell: &Vec<usize>, level: usize) -> f64 {
        let mut m = Matrix::zeros(self.target.nrows(), self.target.ncols());
        for &n in cell {
            m += self.ops[n].matrix();
        }
        m = m.scale(2f64.powi(level as i32));
        m -= self.target;
        hermitian_norm(&m)
    }
}

/// Search for a selector tree of the given order.
pub fn best_selector(
    ops: &[PsdOperator],
    target: &PsdOperator,
    order: usize,
    strategy: Strategy,
) -> Result<(SelectorTree, SelectorCertificate)> {
    best_selector_with(ops, target, order, strategy, SelectorOptions::default())
}

pub fn best_selector_with(
    ops: &[PsdOperator],
    target: &PsdOperator,
    order: usize,
    strategy: Strategy,
    options: SelectorOptions,
) -> Result<(SelectorTree, SelectorCertificate)> {
    if ops.is_empty() {
        return Err(FramexError::precondition("no operators"));
    }
    if order == 0 {
        return Err(FramexError::precondition("order must be at least 1"));
    }
    let dim = target.dim();
    let total = PsdOperator::sum(dim, ops)?;
    if total.lambda_max() > 1.0 + TAU_NUM {
        return Err(FramexError::precondition(format!(
            "sum of operators has norm {} > 1",
            total.lambda_max()
        )));
    }
    let traces: Vec<f64> = ops.iter().map(|t| t.trace()).collect();
    let max_trace = traces.iter().copied().fold(0.0, f64::max);
    let delta = options.delta.unwrap_or(max_trace);
    if max_trace > delta * (1.0 + TAU_NUM) {
        return Err(FramexError::precondition("an operator's trace exceeds delta"));
    }
    if !(delta > 0.0) {
        return Err(FramexError::precondition("all operators are zero"));
    }
    let scale = 2f64.powi(order as i32) * delta;
    if scale > 1.0 + TAU_NUM {
        return Err(FramexError::precondition(format!(
            "2^N * delta = {scale} exceeds 1"
        )));
    }
    let c = options.c.unwrap_or_else(|| selector_constant(delta));

    let strategy = match strategy {
        Strategy::Exhaustive
            if selector_count_log2(ops.len(), order) > EXHAUSTIVE_LOG2_LIMIT as u64 =>
        {
            Strategy::randomized(0)
        }
        s => s,
    };
    let model = IndexModel {
        ops,
        traces: traces.clone(),
        target: target.matrix(),
    };
    let root: Vec<usize> = (0..ops.len()).collect();
    let plan = search(&model, root.clone(), order, strategy);

    let levels = plan
        .levels
        .iter()
        .map(|level| {
            level
                .iter()
                .map(|(cell, bits)| CellChoice {
                    partition: PairPartition::by_descending_trace(cell, &traces),
                    sides: bits.iter().map(|&b| b as u8).collect(),
                })
                .collect()
        })
        .collect();
    let tree = SelectorTree {
        order,
        root,
        levels,
        leaves: plan.leaves,
    };
    let bound = c * scale.sqrt();
    let achieved = plan.leaf_values;
    let worst = achieved.iter().copied().fold(0.0, f64::max);
    let cert = SelectorCertificate {
        delta,
        order,
        c,
        satisfied: worst <= bound + TAU_NUM,
        achieved,
        bound,
        strategy: strategy.name().to_string(),
    };
    Ok((tree, cert))
}

/// Recompute every leaf deviation and compare with the certificate.
pub fn verify_certificate(
    cert: &SelectorCertificate,
    tree: &SelectorTree,
    ops: &[PsdOperator],
    target: &PsdOperator,
) -> Result<bool> {
    if cert.order != tree.order {
        return Err(FramexError::InconsistentTree("order mismatch".into()));
    }
    if tree.root.iter().any(|&n| n >= ops.len()) {
        return Err(FramexError::InconsistentTree("index out of range".into()));
    }
    if !tree.check_structure()? || cert.achieved.len() != tree.leaves.len() {
        return Ok(false);
    }
    let model = IndexModel {
        ops,
        traces: ops.iter().map(|t| t.trace()).collect(),
        target: target.matrix(),
    };
    let scale = target.opnorm().max(1.0);
    let mut worst: f64 = 0.0;
    for (leaf, &claimed) in tree.leaves.iter().zip(&cert.achieved) {
        let mut leaf = leaf.clone();
        leaf.sort_unstable();
        let v = model.deviation(&leaf, tree.order);
        if (v - claimed).abs() > TAU_NUM * scale {
            return Ok(false);
        }
        worst = worst.max(v);
    }
    let bound = cert.c * (2f64.powi(tree.order as i32) * cert.delta).sqrt();
    if (bound - cert.bound).abs() > TAU_NUM * bound.max(1.0) {
        return Ok(false);
    }
    Ok(cert.satisfied == (worst <= cert.bound + TAU_NUM))
}

/// A family of cells that split level by level. Each cell exposes a number
/// of binary choices; `split` turns a choice vector into two children.
pub(crate) trait SplitModel: Sync {
    type Cell: Clone + Send + Sync + Eq + Hash;

    fn free_bits(&self, cell: &Self::Cell) -> usize;
    fn split(&self, cell: &Self::Cell, bits: &[bool]) -> [Self::Cell; 2];
    /// `‖2^level Σ_cell − target‖`; must be a deterministic function of the
    /// cell so that different strategies compare exactly.
    fn deviation(&self, cell: &Self::Cell, level: usize) -> f64;
}

pub(crate) struct SplitPlan<C> {
    /// Per depth, each cell with its chosen bits.
    pub levels: Vec<Vec<(C, Vec<bool>)>>,
    pub leaves: Vec<C>,
    pub leaf_values: Vec<f64>,
}

pub(crate) fn search<M: SplitModel>(
    model: &M,
    root: M::Cell,
    order: usize,
    strategy: Strategy,
) -> SplitPlan<M::Cell> {
    let mut levels = Vec::with_capacity(order);
    let mut cells = vec![root];
    for level in 0..order {
        let chosen: Vec<Vec<bool>> = match strategy {
            Strategy::Exhaustive => {
                let mut memo = HashMap::new();
                cells
                    .iter()
                    .map(|c| exhaustive(model, c, level, order, &mut memo).1)
                    .collect()
            }
            _ => cells
                .par_iter()
                .enumerate()
                .map(|(i, c)| local_search(model, c, level, strategy, i))
                .collect(),
        };
        let mut next = Vec::with_capacity(2 * cells.len());
        for (cell, bits) in cells.iter().zip(&chosen) {
            let [a, b] = model.split(cell, bits);
            next.push(a);
            next.push(b);
        }
        levels.push(cells.into_iter().zip(chosen).collect());
        cells = next;
    }
    let leaf_values = cells.par_iter().map(|c| model.deviation(c, order)).collect();
    SplitPlan {
        levels,
        leaves: cells,
        leaf_values,
    }
}

fn mask_bits(mask: u64, k: usize) -> Vec<bool> {
    (0..k).map(|i| (mask >> (k - 1 - i)) & 1 == 1).collect()
}

type Memo<C> = HashMap<(C, usize), (f64, Vec<bool>)>;

/// Optimal subtree value and root choice, minimising over every choice in
/// the subtree. Ties go to the lexicographically smallest choice.
fn exhaustive<M: SplitModel>(
    model: &M,
    cell: &M::Cell,
    level: usize,
    order: usize,
    memo: &mut Memo<M::Cell>,
) -> (f64, Vec<bool>) {
    if level == order {
        return (model.deviation(cell, order), Vec::new());
    }
    if let Some(hit) = memo.get(&(cell.clone(), level)) {
        return hit.clone();
    }
    let k = model.free_bits(cell);
    assert!(k < 40, "exhaustive search over {k} free choices");
    let mut best: Option<(f64, u64)> = None;
    for mask in 0..1u64 << k {
        let [a, b] = model.split(cell, &mask_bits(mask, k));
        let va = exhaustive(model, &a, level + 1, order, memo).0;
        let vb = exhaustive(model, &b, level + 1, order, memo).0;
        let v = va.max(vb);
        if best.is_none_or(|(bv, _)| v < bv) {
            best = Some((v, mask));
        }
    }
    let (v, mask) = best.unwrap_or((model.deviation(cell, level), 0));
    let out = (v, mask_bits(mask, k));
    memo.insert((cell.clone(), level), out.clone());
    out
}

fn split_value<M: SplitModel>(model: &M, cell: &M::Cell, level: usize, bits: &[bool]) -> f64 {
    let [a, b] = model.split(cell, bits);
    model
        .deviation(&a, level + 1)
        .max(model.deviation(&b, level + 1))
}

/// First-improvement single flips until no flip strictly helps.
fn improve<M: SplitModel>(model: &M, cell: &M::Cell, level: usize, bits: &mut [bool]) -> f64 {
    let mut value = split_value(model, cell, level, bits);
    for _ in 0..MAX_FLIP_ROUNDS {
        let mut moved = false;
        for i in 0..bits.len() {
            bits[i] = !bits[i];
            let v = split_value(model, cell, level, bits);
            if v < value {
                value = v;
                moved = true;
            } else {
                bits[i] = !bits[i];
            }
        }
        if !moved {
            break;
        }
    }
    value
}

fn local_search<M: SplitModel>(
    model: &M,
    cell: &M::Cell,
    level: usize,
    strategy: Strategy,
    cell_index: usize,
) -> Vec<bool> {
    let k = model.free_bits(cell);
    let mut start: Vec<bool> = (0..k).map(|i| i % 2 == 1).collect();
    let greedy_value = improve(model, cell, level, &mut start);
    let Strategy::Randomized { seed, restarts } = strategy else {
        return start;
    };
    let cell_seed = seed
        ^ (level as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (cell_index as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    let best = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cell_seed.wrapping_add(r as u64));
            let mut bits: Vec<bool> = (0..k).map(|_| rng.random()).collect();
            let v = improve(model, cell, level, &mut bits);
            (v, bits)
        })
        .chain(rayon::iter::once((greedy_value, start)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
        .expect("at least one candidate");
    best.1
}
