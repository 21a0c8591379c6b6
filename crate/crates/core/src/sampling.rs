//! Weighted-sum sampling: replace `T = Σ c_n T_n` by `2^{-β} Σ_k T_{σ(k)}`
//! with controlled error, via dyadic expansion of the weights, ceiling
//! padding, replication and a binary selector tree.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::Dyadic;
use crate::error::{FramexError, Result};
use crate::linalg::{self, extreme_eigs, hermitian_norm, Matrix, Projection, PsdOperator, TAU_NUM};
use crate::selectors::{
    self, beta_for, pipeline_constant, PairPartition, SelectorCertificate, SplitModel, Strategy,
};

pub const DEFAULT_DEPTH_CAP: usize = 48;
pub const DEFAULT_REPLICA_BUDGET: u64 = 1 << 22;
pub const DEFAULT_TAIL_FLOOR_BITS: u32 = 6;
/// Above this many free choices per cell the exhaustive search is replaced
/// by randomized restarts.
const EXHAUSTIVE_FREE_BITS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicDecomposition {
    pub target: f64,
    /// Strictly increasing; the kept sum is `Σ 2^{-ℓ_j}`.
    pub exponents: Vec<i32>,
    /// `target − Σ 2^{-ℓ_j}`, exact.
    pub remainder: f64,
    pub depth: usize,
}

impl DyadicDecomposition {
    pub fn truncated(&self) -> Dyadic {
        self.exponents
            .iter()
            .fold(Dyadic::ZERO, |acc, &l| acc.add(Dyadic::pow2_neg(l)))
    }
}

/// Greedy binary expansion of `c`, keeping at most `depth` terms.
pub fn dyadic_decompose(c: f64, depth: usize) -> Result<DyadicDecomposition> {
    if !(c > 0.0) {
        return Err(FramexError::precondition("weight must be positive"));
    }
    if depth == 0 {
        return Err(FramexError::precondition("depth must be at least 1"));
    }
    decompose_to_cutoff(c, i32::MAX, depth)
}

/// Terms with exponent at most `cutoff`, at most `depth` of them.
fn decompose_to_cutoff(c: f64, cutoff: i32, depth: usize) -> Result<DyadicDecomposition> {
    let exact = Dyadic::from_f64(c)?;
    let exponents: Vec<i32> = exact
        .binary_exponents()
        .into_iter()
        .take_while(|&l| l <= cutoff)
        .take(depth)
        .collect();
    let mut d = DyadicDecomposition {
        target: c,
        depth: exponents.len(),
        exponents,
        remainder: 0.0,
    };
    d.remainder = exact
        .checked_sub(d.truncated())
        .expect("truncation never exceeds the target")
        .to_f64();
    Ok(d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaddingSet {
    /// `Σ 2^{-m_j}` tops the truncated sum up to its ceiling.
    pub exponents: Vec<i32>,
    pub ceiling: u128,
}

impl PaddingSet {
    pub fn total(&self) -> Dyadic {
        self.exponents
            .iter()
            .fold(Dyadic::ZERO, |acc, &m| acc.add(Dyadic::pow2_neg(m)))
    }
}

pub fn ceiling_pad(d: &DyadicDecomposition) -> PaddingSet {
    let s = d.truncated();
    let ceiling = s.ceil();
    let gap = Dyadic::integer(ceiling)
        .checked_sub(s)
        .expect("ceiling is at least the value");
    PaddingSet {
        exponents: gap.binary_exponents(),
        ceiling,
    }
}

/// A replica `(n, i)`: the `i`-th copy attached to original index `n`.
pub type Replica = (usize, u64);

fn replica_count(exponents: &[i32], eta: i32) -> Result<u128> {
    let mut total: u128 = 0;
    for &l in exponents {
        if l > eta {
            return Err(FramexError::precondition(format!(
                "eta = {eta} is below exponent {l}"
            )));
        }
        let shift = (eta - l) as u32;
        if shift >= 100 {
            return Err(FramexError::BudgetExceeded(format!("2^{shift} replicas")));
        }
        total += 1u128 << shift;
    }
    Ok(total)
}

/// Replicated index multisets: `2^{η−ℓ}` copies of `n` in `I_1` per kept
/// term of `c_n`, and `2^{η−m}` copies in `I_2` per padding term.
pub fn build_index_sets(
    decomps: &[DyadicDecomposition],
    pads: &[PaddingSet],
    eta: i32,
    budget: u64,
) -> Result<(Vec<Replica>, Vec<Replica>)> {
    if decomps.len() != pads.len() {
        return Err(FramexError::DimensionMismatch {
            expected: decomps.len(),
            found: pads.len(),
        });
    }
    let mut counts = Vec::with_capacity(decomps.len());
    let mut total: u128 = 0;
    for (d, p) in decomps.iter().zip(pads) {
        let a = replica_count(&d.exponents, eta)?;
        let b = replica_count(&p.exponents, eta)?;
        total += a + b;
        counts.push((a, b));
    }
    if total > budget as u128 {
        return Err(FramexError::BudgetExceeded(format!(
            "{total} replicas exceed the budget of {budget}"
        )));
    }
    let mut i1 = Vec::new();
    let mut i2 = Vec::new();
    for (n, &(a, b)) in counts.iter().enumerate() {
        i1.extend((0..a as u64).map(|i| (n, i)));
        i2.extend((0..b as u64).map(|i| (n, i)));
    }
    Ok((i1, i2))
}

/// Pair the concatenation `I_1 ++ I_2` (indices into it): replicas of the
/// same original index in `I_1` first, an odd one out with a same-index
/// element of `I_2` when there is one, then leftovers across indices in a
/// seeded order.
pub fn paired_partition(i1: &[Replica], i2: &[Replica], seed: u64) -> Result<PairPartition> {
    let total = i1.len() + i2.len();
    if total % 2 == 1 {
        return Err(FramexError::precondition("odd number of replicas"));
    }
    let offset = i1.len();
    let max_n = i1.iter().chain(i2).map(|r| r.0 + 1).max().unwrap_or(0);
    let mut by_n1: Vec<Vec<usize>> = vec![Vec::new(); max_n];
    let mut by_n2: Vec<Vec<usize>> = vec![Vec::new(); max_n];
    for (k, r) in i1.iter().enumerate() {
        by_n1[r.0].push(k);
    }
    for (k, r) in i2.iter().enumerate() {
        by_n2[r.0].push(offset + k);
    }
    let mut pairs = Vec::with_capacity(total / 2);
    let mut spare1 = Vec::new();
    let mut spare2 = Vec::new();
    for n in 0..max_n {
        let ones = &by_n1[n];
        let mut twos = by_n2[n].clone();
        for c in ones.chunks_exact(2) {
            pairs.push((c[0], Some(c[1])));
        }
        let odd_one = (ones.len() % 2 == 1).then(|| ones[ones.len() - 1]);
        let partner = odd_one.and_then(|_| twos.pop());
        for c in twos.chunks(2) {
            match c {
                [a, b] => pairs.push((*a, Some(*b))),
                [a] => spare2.push(*a),
                _ => unreachable!(),
            }
        }
        match (odd_one, partner) {
            (Some(a), Some(b)) => pairs.push((a, Some(b))),
            (Some(a), None) => spare1.push(a),
            _ => {}
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    spare2.shuffle(&mut rng);
    let mut rest = Vec::new();
    let mut twos = spare2.into_iter();
    for a in spare1 {
        match twos.next() {
            Some(b) => pairs.push((a, Some(b))),
            None => rest.push(a),
        }
    }
    rest.extend(twos);
    for c in rest.chunks(2) {
        pairs.push((c[0], c.get(1).copied()));
    }
    PairPartition::new((0..total).collect(), pairs)
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct SamplingFunction {
    /// `#σ^{-1}(n)` for every original index. The domain is laid out in
    /// index order, so `σ` is determined by these counts.
    pub multiplicity: Vec<u64>,
}

impl SamplingFunction {
    pub fn from_counts(counts: &[u64]) -> Self {
        SamplingFunction {
            multiplicity: counts.to_vec(),
        }
    }

    /// Size of the domain.
    pub fn len(&self) -> u64 {
        self.multiplicity.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.multiplicity.iter().all(|&k| k == 0)
    }

    /// `σ(k)`, or `None` past the end of the domain.
    pub fn get(&self, mut k: u64) -> Option<usize> {
        for (n, &c) in self.multiplicity.iter().enumerate() {
            if k < c {
                return Some(n);
            }
            k -= c;
        }
        None
    }

    /// The full map `k -> σ(k)`; allocates one entry per domain element.
    pub fn map(&self) -> Vec<usize> {
        self.multiplicity
            .iter()
            .enumerate()
            .flat_map(|(n, &c)| std::iter::repeat_n(n, c as usize))
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PaddingConditions {
    /// φ_n lives on the range of T_n.
    pub span: bool,
    /// `λ_max(Σ pad_n φ_n) ≤ bound`.
    pub sum: bool,
    /// `tr φ_n ≤ cap`.
    pub trace: bool,
}

#[derive(Clone, Debug)]
pub struct Paddings {
    /// One per original index; empty when every padding weight is zero.
    pub ops: Vec<PsdOperator>,
    pub cap: f64,
    /// Uniform factor applied to keep the padded sum under the bound (1 if
    /// none was needed).
    pub uniform_scale: f64,
    pub conditions: PaddingConditions,
}

fn range_projection(op: &PsdOperator) -> Result<Projection> {
    let (vals, vecs) = linalg::eigh(op.matrix())?;
    let cut = 1e-10 * op.opnorm();
    let basis: Vec<_> = vals
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > cut)
        .map(|(k, _)| vecs.column(k).into_owned())
        .collect();
    Ok(linalg::project_onto(op.dim(), &basis))
}

/// Default padding operators: `φ_n = (min(cap, tr T_n)/rank T_n)·P_{ran T_n}`
/// with `cap = 2^{2−β} max(ε, γ)`, uniformly shrunk if needed so that
/// `Σ pad_n φ_n ≤ bound`.
pub fn make_paddings(
    ops: &[PsdOperator],
    pad_weights: &[f64],
    gamma: f64,
    epsilon: f64,
    beta: u32,
    bound: f64,
) -> Result<Paddings> {
    if ops.len() != pad_weights.len() {
        return Err(FramexError::DimensionMismatch {
            expected: ops.len(),
            found: pad_weights.len(),
        });
    }
    let cap = 2f64.powi(2 - beta as i32) * epsilon.max(gamma);
    let conditions = PaddingConditions {
        span: true,
        sum: true,
        trace: true,
    };
    if pad_weights.iter().all(|&w| w == 0.0) {
        return Ok(Paddings {
            ops: Vec::new(),
            cap,
            uniform_scale: 1.0,
            conditions,
        });
    }
    let dim = ops[0].dim();
    let mut pads = Vec::with_capacity(ops.len());
    for op in ops {
        let p = range_projection(op)?;
        if p.rank() == 0 {
            pads.push(PsdOperator::zero(dim));
            continue;
        }
        let tr = cap.min(op.trace());
        pads.push(PsdOperator::new(p.matrix().scale(tr / p.rank() as f64))?);
    }
    let mut total = Matrix::zeros(dim, dim);
    for (phi, &w) in pads.iter().zip(pad_weights) {
        total += phi.matrix().scale(w);
    }
    let top = extreme_eigs(&total).1;
    let mut uniform_scale = 1.0;
    if top > bound {
        uniform_scale = bound / top;
        pads = pads.iter().map(|p| p.scaled(uniform_scale)).collect();
    }
    let conditions = check_padding_conditions(ops, &pads, pad_weights, cap, bound)?;
    Ok(Paddings {
        ops: pads,
        cap,
        uniform_scale,
        conditions,
    })
}

/// Check span containment, the padded-sum bound and the trace cap.
pub fn check_padding_conditions(
    ops: &[PsdOperator],
    pads: &[PsdOperator],
    pad_weights: &[f64],
    cap: f64,
    bound: f64,
) -> Result<PaddingConditions> {
    if pads.is_empty() {
        return Ok(PaddingConditions {
            span: true,
            sum: true,
            trace: true,
        });
    }
    if pads.len() != ops.len() || pad_weights.len() != ops.len() {
        return Err(FramexError::DimensionMismatch {
            expected: ops.len(),
            found: pads.len(),
        });
    }
    let dim = ops[0].dim();
    let mut span = true;
    let mut trace = true;
    let mut total = Matrix::zeros(dim, dim);
    for ((op, phi), &w) in ops.iter().zip(pads).zip(pad_weights) {
        let p = range_projection(op)?;
        let inside = p.matrix() * phi.matrix() * p.matrix();
        let scale = phi.opnorm().max(f64::MIN_POSITIVE);
        span &= hermitian_norm(&(inside - phi.matrix())) <= 1e-8 * scale;
        trace &= phi.trace() <= cap * (1.0 + TAU_NUM);
        total += phi.matrix().scale(w);
    }
    let sum = extreme_eigs(&total).1 <= bound * (1.0 + TAU_NUM);
    Ok(PaddingConditions { span, sum, trace })
}

#[derive(Clone, Debug)]
pub struct SamplingParams {
    /// Selector constant; defaults to [`pipeline_constant`] at δ.
    pub c: Option<f64>,
    /// Fixed β, bypassing [`beta_for`].
    pub beta: Option<u32>,
    /// Required bound on `Σ c_n T_n` (½ when sampling on its own).
    pub operator_bound: f64,
    pub depth_cap: usize,
    /// The weight tail may reach `(ε/2)·2^{-bits}` even when γ is smaller.
    pub tail_floor_bits: u32,
    pub replica_budget: u64,
    pub strategy: Strategy,
    pub seed: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            c: None,
            beta: None,
            operator_bound: 0.5,
            depth_cap: DEFAULT_DEPTH_CAP,
            tail_floor_bits: DEFAULT_TAIL_FLOOR_BITS,
            replica_budget: DEFAULT_REPLICA_BUDGET,
            strategy: Strategy::Greedy,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SamplingCertificate {
    pub beta: u32,
    pub beta_zero_convention: bool,
    pub epsilon: f64,
    pub gamma: f64,
    pub delta: f64,
    pub c: f64,
    pub eta: i32,
    pub order: usize,
    /// Largest exponent kept in any weight expansion.
    pub cutoff_exponent: i32,
    pub tail_norm: f64,
    pub tail_threshold: f64,
    pub replicas_main: u64,
    pub replicas_padding: u64,
    pub padding_empty: bool,
    pub padding_cap: f64,
    pub padding_uniform_scale: f64,
    pub padding_conditions: PaddingConditions,
    /// Selector certificate of the replica system (δ scaled by 2^{-η}).
    pub selector: SelectorCertificate,
    pub leaf: usize,
    pub pigeonhole_trace: f64,
    pub pigeonhole_bound: f64,
    /// `"two_gamma"` when the chosen leaf meets `tr ≤ 2γ`, else `"average"`.
    pub pigeonhole_rule: String,
    pub sandwich_lo: f64,
    pub sandwich_hi: f64,
    /// `6 γ^{1/2}`
    pub envelope: f64,
    pub sandwich_ok: bool,
    /// `2^{β+1} c_n`
    pub multiplicity_caps: Vec<f64>,
    pub mult_ok: bool,
}

#[derive(Clone, Debug)]
pub struct SamplingOutcome {
    pub sigma: SamplingFunction,
    pub certificate: SamplingCertificate,
}

struct ReplicaModel {
    main: Vec<Matrix>,
    pads: Vec<Matrix>,
    psi: Matrix,
    eta: i32,
}

type Counts = Vec<(u64, u64)>;

impl ReplicaModel {
    fn weighted_sum(&self, cell: &Counts, main_only: bool) -> Matrix {
        let d = self.psi.nrows();
        let mut m = Matrix::zeros(d, d);
        for (n, &(t, p)) in cell.iter().enumerate() {
            if t > 0 {
                m += self.main[n].scale(t as f64);
            }
            if p > 0 && !main_only {
                m += self.pads[n].scale(p as f64);
            }
        }
        m
    }
}

impl SplitModel for ReplicaModel {
    type Cell = Counts;

    fn free_bits(&self, cell: &Counts) -> usize {
        cell.iter().filter(|(t, p)| t % 2 == 1 || p % 2 == 1).count()
    }

    fn split(&self, cell: &Counts, bits: &[bool]) -> [Counts; 2] {
        let mut a = Vec::with_capacity(cell.len());
        let mut b = Vec::with_capacity(cell.len());
        let mut k = 0;
        for &(t, p) in cell {
            let mut kids = [(t / 2, p / 2), (t / 2, p / 2)];
            if t % 2 == 1 || p % 2 == 1 {
                let side = bits[k] as usize;
                k += 1;
                if t % 2 == 1 {
                    kids[side].0 += 1;
                }
                if p % 2 == 1 {
                    let pside = if t % 2 == 1 { 1 - side } else { side };
                    kids[pside].1 += 1;
                }
            }
            a.push(kids[0]);
            b.push(kids[1]);
        }
        [a, b]
    }

    fn deviation(&self, cell: &Counts, level: usize) -> f64 {
        let scale = 2f64.powi(level as i32 - self.eta);
        hermitian_norm(&(self.weighted_sum(cell, false).scale(scale) - &self.psi))
    }
}

struct LeafEval {
    pig: f64,
    mult_ok: bool,
    lo: f64,
    hi: f64,
}

/// Sample `Σ c_n T_n` down to `2^{-β} Σ_k T_{σ(k)}`.
pub fn sample(
    ops: &[PsdOperator],
    weights: &[f64],
    m: &Projection,
    epsilon: f64,
    paddings: Option<&[PsdOperator]>,
    params: &SamplingParams,
) -> Result<SamplingOutcome> {
    if ops.is_empty() {
        return Err(FramexError::precondition("no operators"));
    }
    if ops.len() != weights.len() {
        return Err(FramexError::DimensionMismatch {
            expected: ops.len(),
            found: weights.len(),
        });
    }
    let dim = ops[0].dim();
    for op in ops {
        if op.dim() != dim {
            return Err(FramexError::DimensionMismatch {
                expected: dim,
                found: op.dim(),
            });
        }
    }
    if m.dim() != dim {
        return Err(FramexError::DimensionMismatch {
            expected: dim,
            found: m.dim(),
        });
    }
    if weights.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
        return Err(FramexError::precondition("weights must be positive and finite"));
    }
    if !(epsilon > 0.0) {
        return Err(FramexError::precondition("epsilon must be positive"));
    }

    let mut target = Matrix::zeros(dim, dim);
    for (op, &c) in ops.iter().zip(weights) {
        target += op.matrix().scale(c);
    }
    let top = extreme_eigs(&target).1;
    if top > params.operator_bound + TAU_NUM {
        return Err(FramexError::precondition(format!(
            "weighted sum has norm {top} above {}",
            params.operator_bound
        )));
    }
    let delta = ops.iter().map(|t| t.trace()).fold(0.0, f64::max);
    if !(delta > 0.0) {
        return Err(FramexError::precondition("all operators are zero"));
    }
    let in_m: Vec<f64> = ops.iter().map(|t| t.compressed_trace(m)).collect();
    let gamma = in_m.iter().zip(weights).map(|(t, c)| t * c).sum::<f64>().max(0.0);
    if gamma > 1.0 + TAU_NUM {
        return Err(FramexError::precondition(format!("gamma = {gamma} exceeds 1")));
    }
    let c = params.c.unwrap_or_else(|| pipeline_constant(delta));
    let (beta, zero_convention) = match params.beta {
        Some(b) => (b, b == 0),
        None => {
            let b = beta_for(epsilon, c, delta)?;
            (b.value, b.zero_convention)
        }
    };

    // Truncate every weight at one common binary place.
    let tail_threshold = (epsilon / 2.0)
        .min(gamma)
        .max(epsilon / 2.0 * 2f64.powi(-(params.tail_floor_bits as i32)));
    let exact: Vec<Vec<i32>> = weights
        .iter()
        .map(|&w| Dyadic::from_f64(w).map(|d| d.binary_exponents()))
        .collect::<Result<_>>()?;
    let lowest = exact.iter().map(|e| e[0]).min().expect("nonempty");
    let highest = exact
        .iter()
        .map(|e| e[e.len().min(params.depth_cap) - 1])
        .max()
        .expect("nonempty");
    let mut cutoff = lowest;
    let (decomps, tail_norm) = loop {
        let decomps = weights
            .iter()
            .map(|&w| decompose_to_cutoff(w, cutoff, params.depth_cap))
            .collect::<Result<Vec<_>>>()?;
        let mut tail = Matrix::zeros(dim, dim);
        for (op, d) in ops.iter().zip(&decomps) {
            if d.remainder > 0.0 {
                tail += op.matrix().scale(d.remainder);
            }
        }
        let tail_norm = extreme_eigs(&tail).1.max(0.0);
        if tail_norm <= tail_threshold || cutoff >= highest {
            break (decomps, tail_norm);
        }
        cutoff += 1;
    };
    let pads_exp: Vec<PaddingSet> = decomps.iter().map(ceiling_pad).collect();
    let eta = decomps
        .iter()
        .flat_map(|d| d.exponents.iter())
        .chain(pads_exp.iter().flat_map(|p| p.exponents.iter()))
        .copied()
        .chain(std::iter::once(beta as i32))
        .max()
        .expect("nonempty");
    let order = (eta - beta as i32) as usize;

    let mut root: Counts = Vec::with_capacity(ops.len());
    let mut replicas: u128 = 0;
    for (d, p) in decomps.iter().zip(&pads_exp) {
        let t = replica_count(&d.exponents, eta)?;
        let q = replica_count(&p.exponents, eta)?;
        replicas += t + q;
        root.push((t as u64, q as u64));
    }
    if replicas > params.replica_budget as u128 {
        return Err(FramexError::BudgetExceeded(format!(
            "{replicas} replicas exceed the budget of {} (eta = {eta})",
            params.replica_budget
        )));
    }

    let pad_weights: Vec<f64> = pads_exp.iter().map(|p| p.total().to_f64()).collect();
    let padding_empty = pad_weights.iter().all(|&w| w == 0.0);
    let pad_bound = 1.0 - params.operator_bound;
    let padding = match paddings {
        Some(given) if !padding_empty => {
            let cap = 2f64.powi(2 - beta as i32) * epsilon.max(gamma);
            let conditions = check_padding_conditions(ops, given, &pad_weights, cap, pad_bound)?;
            Paddings {
                ops: given.to_vec(),
                cap,
                uniform_scale: 1.0,
                conditions,
            }
        }
        _ => make_paddings(ops, &pad_weights, gamma, epsilon, beta, pad_bound)?,
    };
    let pad_ops: Vec<Matrix> = if padding.ops.is_empty() {
        vec![Matrix::zeros(dim, dim); ops.len()]
    } else {
        padding.ops.iter().map(|p| p.matrix().clone()).collect()
    };
    let pads_in_m: Vec<f64> = if padding.ops.is_empty() {
        vec![0.0; ops.len()]
    } else {
        padding.ops.iter().map(|p| p.compressed_trace(m)).collect()
    };

    let mut model = ReplicaModel {
        main: ops.iter().map(|t| t.matrix().clone()).collect(),
        pads: pad_ops,
        psi: Matrix::zeros(dim, dim),
        eta,
    };
    model.psi = model.weighted_sum(&root, false).scale(2f64.powi(-eta));

    let strategy = match params.strategy {
        Strategy::Exhaustive if model.free_bits(&root).max(ops.len()) > EXHAUSTIVE_FREE_BITS => {
            Strategy::randomized(params.seed)
        }
        s => s,
    };
    let plan = selectors::search(&model, root.clone(), order, strategy);

    let q = m.complement();
    let half_eps_q = q.matrix().scale(epsilon / 2.0);
    let caps: Vec<f64> = weights
        .iter()
        .map(|&c| c * 2f64.powi(beta as i32 + 1))
        .collect();
    let inv_beta = 2f64.powi(-(beta as i32));
    let evals: Vec<LeafEval> = plan
        .leaves
        .par_iter()
        .map(|leaf| {
            let pig = inv_beta
                * leaf
                    .iter()
                    .enumerate()
                    .map(|(n, &(t, p))| t as f64 * in_m[n] + p as f64 * pads_in_m[n])
                    .sum::<f64>();
            let mult_ok = leaf.iter().zip(&caps).all(|(&(t, _), &cap)| (t as f64) <= cap);
            let dev = model.weighted_sum(leaf, true).scale(inv_beta) - &target;
            let lo = extreme_eigs(&(&dev + &half_eps_q)).0;
            let hi = extreme_eigs(&(&dev - &half_eps_q)).1;
            LeafEval { pig, mult_ok, lo, hi }
        })
        .collect();

    let psi_in_m = tr_compressed(&model.psi, m);
    let slack = TAU_NUM * top.max(1.0);
    let two_gamma: Vec<usize> = (0..evals.len())
        .filter(|&b| evals[b].pig <= 2.0 * gamma + slack)
        .collect();
    let (candidates, rule, pig_bound) = if !two_gamma.is_empty() {
        (two_gamma, "two_gamma", 2.0 * gamma)
    } else {
        let avg = (0..evals.len())
            .filter(|&b| evals[b].pig <= psi_in_m + slack)
            .collect();
        (avg, "average", psi_in_m)
    };
    let leaf = candidates
        .iter()
        .copied()
        .min_by(|&a, &b| {
            let (ea, eb) = (&evals[a], &evals[b]);
            eb.mult_ok
                .cmp(&ea.mult_ok)
                .then(ea.hi.max(-ea.lo).total_cmp(&eb.hi.max(-eb.lo)))
                .then(a.cmp(&b))
        })
        .expect("some leaf is at most the average");
    let chosen = &evals[leaf];
    let counts: Vec<u64> = plan.leaves[leaf].iter().map(|&(t, _)| t).collect();

    let rep_delta = 2f64.powi(-eta)
        * delta.max(padding.ops.iter().map(|p| p.trace()).fold(0.0, f64::max));
    let bound = c * (2f64.powi(order as i32) * rep_delta).sqrt();
    let worst = plan.leaf_values.iter().copied().fold(0.0, f64::max);
    let selector = SelectorCertificate {
        delta: rep_delta,
        order,
        c,
        satisfied: worst <= bound + TAU_NUM,
        achieved: plan.leaf_values.clone(),
        bound,
        strategy: strategy.name().to_string(),
    };
    let envelope = 6.0 * gamma.sqrt();
    let certificate = SamplingCertificate {
        beta,
        beta_zero_convention: zero_convention,
        epsilon,
        gamma,
        delta,
        c,
        eta,
        order,
        cutoff_exponent: cutoff,
        tail_norm,
        tail_threshold,
        replicas_main: root.iter().map(|r| r.0).sum(),
        replicas_padding: root.iter().map(|r| r.1).sum(),
        padding_empty,
        padding_cap: padding.cap,
        padding_uniform_scale: padding.uniform_scale,
        padding_conditions: padding.conditions.clone(),
        selector,
        leaf,
        pigeonhole_trace: chosen.pig,
        pigeonhole_bound: pig_bound,
        pigeonhole_rule: rule.to_string(),
        sandwich_lo: chosen.lo,
        sandwich_hi: chosen.hi,
        envelope,
        sandwich_ok: chosen.lo >= -envelope - 1e-8 && chosen.hi <= envelope + 1e-8,
        multiplicity_caps: caps,
        mult_ok: chosen.mult_ok,
    };
    Ok(SamplingOutcome {
        sigma: SamplingFunction::from_counts(&counts),
        certificate,
    })
}

fn tr_compressed(a: &Matrix, p: &Projection) -> f64 {
    p.basis()
        .iter()
        .map(|u| linalg::inner(&(a * u), u).re)
        .sum()
}

/// Exact multiplicity audit `#σ^{-1}(n) ≤ 2^{β+1} c_n`.
pub fn multiplicity_ok(sigma: &SamplingFunction, weights: &[f64], beta: u32) -> bool {
    sigma.multiplicity.len() == weights.len()
        && sigma
            .multiplicity
            .iter()
            .zip(weights)
            .all(|(&k, &c)| {
                // k < 2^53 and the power-of-two scaling is exact
                (k as f64) <= c * 2f64.powi(beta as i32 + 1)
            })
}

/// `2^{-β} Σ_k T_{σ(k)}` as a matrix.
pub fn sampled_sum(ops: &[PsdOperator], sigma: &SamplingFunction, beta: u32) -> Matrix {
    let dim = ops[0].dim();
    let mut m = Matrix::zeros(dim, dim);
    for (op, &k) in ops.iter().zip(&sigma.multiplicity) {
        if k > 0 {
            m += op.matrix().scale(k as f64);
        }
    }
    m.scale(2f64.powi(-(beta as i32)))
}
