//! Frame extraction: from a family `{x_n}` with scalars making `{c_n x_n}`
//! a frame, choose a multiset of indices whose normalised vectors form a
//! frame with explicit bounds and multiplicity caps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FramexError, Result};
use crate::frames::{frame_bounds, frame_operator, random_unit, FrameReport, VectorFamily};
use crate::linalg::{
    self, extreme_eigs, hermitian_norm, hpd_inverse, inner, Matrix, Projection, PsdOperator,
    Vector, C64, TAU_NUM,
};
use crate::sampling::{self, SamplingCertificate, SamplingFunction, SamplingParams};
use crate::selectors::{beta_for, pipeline_constant, Beta};

/// Collinearity tolerance for grouping vectors that span the same line.
pub const TAU_COL: f64 = 1e-8;
/// Multiplicative slack on the verified frame-bound envelope.
pub const ENVELOPE_SLACK: f64 = 1e-6;
const PROBES: usize = 20;
const PROBE_SEED: u64 = 0xe1e7;

#[derive(Clone, Debug)]
pub struct ExtractionParams {
    /// Selector constant; defaults to [`pipeline_constant`] at `δ = 1/B`.
    pub c: Option<f64>,
    pub sampling: SamplingParams,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        ExtractionParams {
            c: None,
            sampling: SamplingParams {
                operator_bound: 1.0,
                ..SamplingParams::default()
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExtractionPlan {
    /// Half-open index ranges `[K_j, K_{j+1})`, `K_0 = 0`, `K_1 = 1`.
    pub blocks: Vec<(usize, usize)>,
    /// `H_1 = {0}, H_2, …, H_{J+1}`.
    pub subspaces: Vec<Projection>,
    /// `M_j^⊥ = H_{j+1} ⊕ H_{j+2}` for every block plus one trailing empty
    /// block, so the sum of these projections is twice the constructed span.
    pub m_perp: Vec<Projection>,
    /// `η_0 = 0`, `η_j = ε²/(36·4^j)`; one per block.
    pub thresholds: Vec<f64>,
    /// `tr(P_{M_j} Σ_{block j} w_n T_n P_{M_j})`.
    pub gammas: Vec<f64>,
    /// Tail traces recomputed at each chosen boundary `K_{j+1}`.
    pub tail_traces: Vec<f64>,
    pub epsilon: f64,
    pub beta: Beta,
    pub c: f64,
    pub lower: f64,
    pub upper: f64,
    /// `w_n = |c_n|² ‖x_n‖²`
    pub weights: Vec<f64>,
    /// `T_n = u_n u_n^* / B` with `u_n = x_n/‖x_n‖` (zero for zero vectors).
    pub ops: Vec<Option<PsdOperator>>,
    /// `‖Σ_j P_{M_j^⊥} − 2 P_{span}‖`
    pub projection_identity_residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PlanSummary {
    pub blocks: Vec<(usize, usize)>,
    pub subspace_ranks: Vec<usize>,
    pub thresholds: Vec<f64>,
    pub gammas: Vec<f64>,
    pub tail_traces: Vec<f64>,
    pub epsilon: f64,
    pub beta: Beta,
    pub c: f64,
    pub lower: f64,
    pub upper: f64,
    pub weights: Vec<f64>,
    pub projection_identity_residual: f64,
}

impl ExtractionPlan {
    pub fn summary(&self) -> PlanSummary {
        PlanSummary {
            blocks: self.blocks.clone(),
            subspace_ranks: self.subspaces.iter().map(|p| p.rank()).collect(),
            thresholds: self.thresholds.clone(),
            gammas: self.gammas.clone(),
            tail_traces: self.tail_traces.clone(),
            epsilon: self.epsilon,
            beta: self.beta,
            c: self.c,
            lower: self.lower,
            upper: self.upper,
            weights: self.weights.clone(),
            projection_identity_residual: self.projection_identity_residual,
        }
    }
}

fn scalars_or_ones(f: &VectorFamily) -> Vec<C64> {
    f.scalars()
        .map(|s| s.to_vec())
        .unwrap_or_else(|| vec![C64::new(1.0, 0.0); f.len()])
}

/// Build the block boundaries and subspaces for `extract`.
pub fn plan(f: &VectorFamily, lower: f64, upper: f64, c: Option<f64>) -> Result<ExtractionPlan> {
    let report = frame_bounds(f, true)?;
    if !report.is_frame || !(lower > 0.0) || upper < lower {
        return Err(FramexError::NotAFrame {
            lower: report.lower,
            upper: report.upper,
        });
    }
    let dim = f.dim();
    let n = f.len();
    let scalars = scalars_or_ones(f);
    let units: Vec<Option<Vector>> = f
        .vectors()
        .iter()
        .map(|x| {
            let r = x.norm();
            (r > 0.0).then(|| x.unscale(r))
        })
        .collect();
    let weights: Vec<f64> = f
        .vectors()
        .iter()
        .zip(&scalars)
        .map(|(x, c)| c.norm_sqr() * x.norm_squared())
        .collect();
    let ops = units
        .iter()
        .map(|u| {
            u.as_ref()
                .map(|u| linalg::rank_one(&u.unscale(upper.sqrt())))
                .transpose()
        })
        .collect::<Result<Vec<_>>>()?;

    let delta = 1.0 / upper;
    let c = c.unwrap_or_else(|| pipeline_constant(delta));
    let epsilon = (lower / (3.0 * upper)).min(upper.sqrt() / (2.0 * c));
    let beta = beta_for(epsilon, c, delta)?;
    let eta = |j: usize| {
        if j == 0 {
            0.0
        } else {
            epsilon * epsilon / (36.0 * 4f64.powi(j as i32))
        }
    };

    // Weighted trace of block members inside a projection.
    let trace_in = |p: &Projection, m: usize| -> f64 {
        units[m]
            .as_ref()
            .map(|u| weights[m] * p.apply(u).norm_squared() / upper)
            .unwrap_or(0.0)
    };

    let mut k = vec![0usize, n.min(1)];
    let mut subspaces = vec![Projection::zero(dim)];
    let mut acc = Projection::zero(dim);
    let mut tail_traces = Vec::new();
    let mut j = 1;
    loop {
        let comp = acc.complement();
        let residuals: Vec<Vector> = units[..k[j]]
            .iter()
            .flatten()
            .map(|u| comp.apply(u))
            .collect();
        let h_next = linalg::project_onto(dim, &residuals);
        let acc_next = acc.join(&h_next);
        subspaces.push(h_next);
        if k[j] >= n {
            break;
        }
        // minimal K ≥ K_j + 1 whose tail has small trace inside acc_next
        let per: Vec<f64> = (0..n).map(|m| trace_in(&acc_next, m)).collect();
        let mut suffix = vec![0.0; n + 1];
        for m in (0..n).rev() {
            suffix[m] = suffix[m + 1] + per[m];
        }
        let next = (k[j] + 1..=n)
            .find(|&kk| suffix[kk] <= eta(j + 1))
            .expect("the empty tail always qualifies");
        tail_traces.push(suffix[next]);
        k.push(next);
        acc = acc_next;
        j += 1;
    }
    let blocks: Vec<(usize, usize)> = k.windows(2).map(|w| (w[0], w[1])).collect();
    let zero = Projection::zero(dim);
    let m_perp: Vec<Projection> = (0..=blocks.len())
        .map(|j| {
            // subspaces[i] holds H_{i+1}
            let a = &subspaces[j];
            let b = subspaces.get(j + 1).unwrap_or(&zero);
            a.join(b)
        })
        .collect();
    let thresholds: Vec<f64> = (0..blocks.len()).map(eta).collect();
    let mut gammas = Vec::with_capacity(blocks.len());
    for (j, &(s, e)) in blocks.iter().enumerate() {
        let inside = m_perp[j].complement();
        let g: f64 = (s..e).map(|m| trace_in(&inside, m)).sum();
        let tol = 1e-9 * (1.0 + weights.iter().sum::<f64>() / upper);
        if g > thresholds[j] + tol {
            return Err(FramexError::precondition(format!(
                "block {j} has gamma {g:.3e} above its threshold {:.3e}",
                thresholds[j]
            )));
        }
        gammas.push(g);
    }
    let span = linalg::project_onto(dim, &units.iter().flatten().cloned().collect::<Vec<_>>());
    let mut total = Matrix::zeros(dim, dim);
    for p in &m_perp {
        total += p.matrix();
    }
    let projection_identity_residual = hermitian_norm(&(total - span.matrix().scale(2.0)));
    Ok(ExtractionPlan {
        blocks,
        subspaces,
        m_perp,
        thresholds,
        gammas,
        tail_traces,
        epsilon,
        beta,
        c,
        lower,
        upper,
        weights,
        ops,
        projection_identity_residual,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BlockReport {
    pub start: usize,
    pub end: usize,
    pub gamma: f64,
    pub threshold: f64,
    /// Absent when the block holds only zero vectors.
    pub certificate: Option<SamplingCertificate>,
    /// Whether the sampled block deviation fits `±((ε/2)P_{M⊥} + 6η_j^{1/2})`.
    pub within_threshold_envelope: bool,
}

#[derive(Clone, Debug)]
pub struct ExtractionResult {
    pub plan: ExtractionPlan,
    pub sigma: SamplingFunction,
    /// The distinct selected unit vectors, each carrying the scalar
    /// `√#σ^{-1}(n)`; its scaled frame operator is that of the repeated
    /// family `{x_σ(k)/‖x_σ(k)‖}`.
    pub normalized: VectorFamily,
    pub report: FrameReport,
    pub input_report: FrameReport,
    pub target_lower: f64,
    pub target_upper: f64,
    pub bounds_ok: bool,
    /// `max(144 C² B / A², 64 C⁴ / B²)`
    pub mult_bound_l: f64,
    pub mult_ok: bool,
    pub blocks: Vec<BlockReport>,
    /// `‖2^{-β} Σ_k T_{σ(k)} − Σ_n w_n T_n‖` and its bound `2ε`.
    pub total_deviation: f64,
    pub total_bound: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExtractionSummary {
    pub plan: PlanSummary,
    pub multiplicity: Vec<u64>,
    pub selected: u64,
    pub report: FrameReport,
    pub input_report: FrameReport,
    pub target_lower: f64,
    pub target_upper: f64,
    pub bounds_ok: bool,
    pub mult_bound_l: f64,
    pub mult_ok: bool,
    pub blocks: Vec<BlockReport>,
    pub total_deviation: f64,
    pub total_bound: f64,
}

impl ExtractionResult {
    /// The normalized family with every member repeated, one per element
    /// of the domain of `σ`.
    pub fn expanded(&self) -> Result<VectorFamily> {
        let units = self.normalized.vectors();
        let reps = self.sigma.multiplicity.iter().filter(|&&k| k > 0);
        let vs = units
            .iter()
            .zip(reps)
            .flat_map(|(u, &k)| std::iter::repeat_n(u.clone(), k as usize))
            .collect();
        VectorFamily::new(self.normalized.dim(), self.normalized.field(), vs)
    }

    pub fn summary(&self) -> ExtractionSummary {
        ExtractionSummary {
            plan: self.plan.summary(),
            multiplicity: self.sigma.multiplicity.clone(),
            selected: self.sigma.len(),
            report: self.report.clone(),
            input_report: self.input_report.clone(),
            target_lower: self.target_lower,
            target_upper: self.target_upper,
            bounds_ok: self.bounds_ok,
            mult_bound_l: self.mult_bound_l,
            mult_ok: self.mult_ok,
            blocks: self.blocks.clone(),
            total_deviation: self.total_deviation,
            total_bound: self.total_bound,
        }
    }
}

pub fn extract(f: &VectorFamily, params: &ExtractionParams) -> Result<ExtractionResult> {
    let input_report = frame_bounds(f, true)?;
    if !input_report.is_frame {
        return Err(FramexError::NotAFrame {
            lower: input_report.lower,
            upper: input_report.upper,
        });
    }
    let (a, b) = (input_report.lower, input_report.upper);
    let plan = plan(f, a, b, params.c)?;
    let dim = f.dim();
    let beta = plan.beta.value;
    let sparams = SamplingParams {
        c: Some(plan.c),
        beta: Some(beta),
        ..params.sampling.clone()
    };

    let mut counts = vec![0u64; f.len()];
    let mut blocks = Vec::with_capacity(plan.blocks.len());
    let mut sampled = Matrix::zeros(dim, dim);
    let mut target = Matrix::zeros(dim, dim);
    for (j, &(s, e)) in plan.blocks.iter().enumerate() {
        let members: Vec<usize> = (s..e)
            .filter(|&m| plan.ops[m].is_some() && plan.weights[m] > 0.0)
            .collect();
        let mut report = BlockReport {
            start: s,
            end: e,
            gamma: plan.gammas[j],
            threshold: plan.thresholds[j],
            certificate: None,
            within_threshold_envelope: true,
        };
        if !members.is_empty() {
            let ops: Vec<PsdOperator> = members
                .iter()
                .map(|&m| plan.ops[m].clone().expect("filtered"))
                .collect();
            let w: Vec<f64> = members.iter().map(|&m| plan.weights[m]).collect();
            let inside = plan.m_perp[j].complement();
            let block_params = SamplingParams {
                seed: sparams.seed.wrapping_add(j as u64),
                ..sparams.clone()
            };
            let out = sampling::sample(&ops, &w, &inside, plan.epsilon, None, &block_params)?;
            let block_sampled = sampling::sampled_sum(&ops, &out.sigma, beta);
            let mut block_target = Matrix::zeros(dim, dim);
            for (op, &c) in ops.iter().zip(&w) {
                block_target += op.matrix().scale(c);
            }
            let dev = &block_sampled - &block_target;
            let q = plan.m_perp[j].matrix().scale(plan.epsilon / 2.0);
            let env = 6.0 * plan.thresholds[j].sqrt() + 1e-8;
            let lo = extreme_eigs(&(&dev + &q)).0;
            let hi = extreme_eigs(&(&dev - &q)).1;
            report.within_threshold_envelope = lo >= -env && hi <= env;
            for (&m, &k) in members.iter().zip(&out.sigma.multiplicity) {
                counts[m] += k;
            }
            sampled += block_sampled;
            target += block_target;
            report.certificate = Some(out.certificate);
        }
        blocks.push(report);
    }

    let sigma = SamplingFunction::from_counts(&counts);
    let selected: Vec<usize> = (0..counts.len()).filter(|&n| counts[n] > 0).collect();
    if selected.is_empty() {
        return Err(FramexError::precondition("extraction selected nothing"));
    }
    let units: Vec<Vector> = selected
        .iter()
        .map(|&n| {
            let x = &f.vectors()[n];
            x.unscale(x.norm())
        })
        .collect();
    let roots = selected
        .iter()
        .map(|&n| C64::new((counts[n] as f64).sqrt(), 0.0))
        .collect();
    let normalized = VectorFamily::new(dim, f.field(), units)?.with_scalars(roots)?;
    let report = frame_bounds(&normalized, true)?;
    let scale = 2f64.powi(beta as i32);
    let target_lower = scale * a / 3.0;
    let target_upper = 3.0 * scale * b;
    let bounds_ok = report.is_frame
        && report.lower >= target_lower * (1.0 - ENVELOPE_SLACK)
        && report.upper <= target_upper * (1.0 + ENVELOPE_SLACK);
    let c = plan.c;
    let mult_bound_l = (144.0 * c * c * b / (a * a)).max(64.0 * c.powi(4) / (b * b));
    let mult_ok = counts
        .iter()
        .zip(&plan.weights)
        .all(|(&k, &w)| (k as f64) <= mult_bound_l * w);
    let total_deviation = hermitian_norm(&(sampled - target));
    Ok(ExtractionResult {
        total_bound: 2.0 * plan.epsilon,
        plan,
        sigma,
        normalized,
        report,
        input_report,
        target_lower,
        target_upper,
        bounds_ok,
        mult_bound_l,
        mult_ok,
        blocks,
        total_deviation,
    })
}

#[derive(Clone, Debug)]
pub struct CoefficientFamily {
    /// `c̄_n S^{-1}(c_n x_n)` with `S` the frame operator of `{c_n x_n}`.
    pub functionals: VectorFamily,
    /// Worst relative residual of `x − Σ ⟨x, out_n⟩ x_n` over probes.
    pub max_residual: f64,
}

/// Coefficient vectors that reconstruct through the unscaled family.
pub fn equivalence_b_to_a(f: &VectorFamily) -> Result<CoefficientFamily> {
    let report = frame_bounds(f, true)?;
    if !report.is_frame {
        return Err(FramexError::NotAFrame {
            lower: report.lower,
            upper: report.upper,
        });
    }
    let s = frame_operator(f, true)?;
    let inv = hpd_inverse(s.matrix())?;
    let scalars = scalars_or_ones(f);
    let out: Vec<Vector> = f
        .vectors()
        .iter()
        .zip(&scalars)
        .map(|(x, &c)| (&inv * (x * c)) * c.conj())
        .collect();
    let functionals = VectorFamily::new(f.dim(), f.field(), out)?;
    let max_residual = probe_residual(f.dim(), f.field(), |x| {
        let mut acc = Vector::zeros(f.dim());
        for (xn, yn) in f.vectors().iter().zip(functionals.vectors()) {
            acc += xn * inner(x, yn);
        }
        acc
    });
    Ok(CoefficientFamily {
        functionals,
        max_residual,
    })
}

fn probe_residual(dim: usize, field: linalg::Field, op: impl Fn(&Vector) -> Vector) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    (0..PROBES)
        .map(|_| {
            let x = random_unit(&mut rng, dim, field);
            (op(&x) - &x).norm()
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct SubsequenceResult {
    /// Collinearity classes of nonzero vectors, in order of first member.
    pub classes: Vec<Vec<usize>>,
    pub representatives: Vec<usize>,
    /// `W_k = Σ_{n ∈ Γ_k} |c_n|² ‖x_n‖²`, each at most `B`.
    pub class_weights: Vec<f64>,
    pub weight_bound: f64,
    /// Distinct original indices selected by the extraction.
    pub indices: Vec<usize>,
    pub extraction: ExtractionResult,
    /// Bounds of the normalised distinct selection.
    pub report: FrameReport,
    /// Largest `|⟨u_k, u_j⟩|` over distinct returned indices.
    pub max_overlap: f64,
}

/// Collapse collinear vectors, extract from the representatives, and
/// return pairwise non-collinear indices whose normalised vectors form a
/// frame. Without scalars, `c_n = 1/‖x_n‖` is used.
pub fn equivalence_a_to_d(f: &VectorFamily, params: &ExtractionParams) -> Result<SubsequenceResult> {
    let normalized = f.normalized();
    if normalized.is_empty() || !frame_bounds(&normalized, false)?.is_frame {
        return Err(FramexError::precondition("family does not span the space"));
    }
    let scalars: Vec<C64> = match f.scalars() {
        Some(s) => s.to_vec(),
        None => f
            .vectors()
            .iter()
            .map(|x| {
                let r = x.norm();
                C64::new(if r > 0.0 { 1.0 / r } else { 0.0 }, 0.0)
            })
            .collect(),
    };
    let scaled = f.clone().with_scalars(scalars.clone())?;
    let report = frame_bounds(&scaled, true)?;
    if !report.is_frame {
        return Err(FramexError::NotAFrame {
            lower: report.lower,
            upper: report.upper,
        });
    }
    let b = report.upper;

    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut reps: Vec<Vector> = Vec::new();
    for (n, x) in f.vectors().iter().enumerate() {
        let r = x.norm();
        if r == 0.0 {
            continue;
        }
        let u = x.unscale(r);
        match reps.iter().position(|v| inner(&u, v).norm() >= 1.0 - TAU_COL) {
            Some(k) => classes[k].push(n),
            None => {
                classes.push(vec![n]);
                reps.push(u);
            }
        }
    }
    let class_weights: Vec<f64> = classes
        .iter()
        .map(|cl| {
            cl.iter()
                .map(|&n| scalars[n].norm_sqr() * f.vectors()[n].norm_squared())
                .sum()
        })
        .collect();
    if let Some(k) = class_weights.iter().position(|&w| w > b * (1.0 + TAU_NUM)) {
        return Err(FramexError::precondition(format!(
            "class {k} carries weight {} above the upper bound {b}",
            class_weights[k]
        )));
    }
    let representatives: Vec<usize> = classes.iter().map(|c| c[0]).collect();
    let rep_vectors: Vec<Vector> = representatives.iter().map(|&n| f.vectors()[n].clone()).collect();
    let rep_scalars: Vec<C64> = representatives
        .iter()
        .zip(&class_weights)
        .map(|(&n, &w)| C64::new(w.sqrt() / f.vectors()[n].norm(), 0.0))
        .collect();
    let grouped = VectorFamily::new(f.dim(), f.field(), rep_vectors)?.with_scalars(rep_scalars)?;
    let extraction = extract(&grouped, params)?;
    let indices: Vec<usize> = extraction
        .sigma
        .multiplicity
        .iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .map(|(k, _)| representatives[k])
        .collect();
    let chosen = VectorFamily::new(
        f.dim(),
        f.field(),
        indices.iter().map(|&n| f.vectors()[n].clone()).collect(),
    )?
    .normalized();
    let report = frame_bounds(&chosen, false)?;
    let mut max_overlap: f64 = 0.0;
    for (i, u) in chosen.vectors().iter().enumerate() {
        for v in &chosen.vectors()[i + 1..] {
            max_overlap = max_overlap.max(inner(u, v).norm());
        }
    }
    Ok(SubsequenceResult {
        classes,
        representatives,
        class_weights,
        weight_bound: b,
        indices,
        extraction,
        report,
        max_overlap,
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct DualCheck {
    pub holds: bool,
    pub max_residual: f64,
}

/// Check `x = Σ ⟨x, x_n⟩ y_n` on seeded probes.
pub fn equivalence_c_check(f: &VectorFamily, duals: &VectorFamily) -> Result<DualCheck> {
    if f.len() != duals.len() {
        return Err(FramexError::DimensionMismatch {
            expected: f.len(),
            found: duals.len(),
        });
    }
    if f.dim() != duals.dim() {
        return Err(FramexError::DimensionMismatch {
            expected: f.dim(),
            found: duals.dim(),
        });
    }
    let max_residual = probe_residual(f.dim(), f.field(), |x| {
        let mut acc = Vector::zeros(f.dim());
        for (xn, yn) in f.vectors().iter().zip(duals.vectors()) {
            acc += yn * inner(x, xn);
        }
        acc
    });
    Ok(DualCheck {
        holds: max_residual < TAU_NUM,
        max_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::canonical_dual;
    use crate::linalg::{unit, Field};
    use rand::Rng;

    fn onb(d: usize) -> VectorFamily {
        VectorFamily::new(d, Field::Real, (0..d).map(|i| unit(d, i)).collect()).unwrap()
    }

    fn ones(n: usize) -> Vec<C64> {
        vec![C64::new(1.0, 0.0); n]
    }

    fn random_family(rng: &mut ChaCha8Rng, d: usize, n: usize) -> VectorFamily {
        let vs = (0..n)
            .map(|_| Vector::from_fn(d, |_, _| C64::new(rng.random_range(-1.0..1.0), 0.0)))
            .collect();
        VectorFamily::new(d, Field::Real, vs).unwrap()
    }

    #[test]
    fn onb_plan_has_zero_tails() {
        let f = onb(4).with_scalars(ones(4)).unwrap();
        let p = plan(&f, 1.0, 1.0, None).unwrap();
        assert!(p.tail_traces.iter().all(|&t| t == 0.0));
        assert!(p.gammas.iter().all(|&g| g == 0.0));
        assert_eq!(p.blocks.last().unwrap().1, 4);
        assert_eq!(p.thresholds[0], 0.0);
        assert!(p.projection_identity_residual < 1e-12);
    }

    #[test]
    fn rescaled_diagonal_plans_like_onb() {
        let d = 4;
        let vs = (0..d).map(|i| unit(d, i).unscale((i + 1) as f64)).collect();
        let f = VectorFamily::new(d, Field::Real, vs)
            .unwrap()
            .with_scalars((0..d).map(|i| C64::new((i + 1) as f64, 0.0)).collect())
            .unwrap();
        let a = plan(&f, 1.0, 1.0, None).unwrap().summary();
        let b = plan(&onb(d).with_scalars(ones(d)).unwrap(), 1.0, 1.0, None)
            .unwrap()
            .summary();
        assert_eq!(a, b);
    }

    #[test]
    fn random_plan_tail_traces_recompute() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let f = random_family(&mut rng, 8, 24);
        let f = f.clone().with_scalars(ones(24)).unwrap();
        let r = frame_bounds(&f, true).unwrap();
        let p = plan(&f, r.lower, r.upper, None).unwrap();
        // recompute every chosen boundary and its minimality independently
        let tail = |acc: &Projection, k: usize| -> f64 {
            (k..24)
                .map(|m| {
                    let x = &f.vectors()[m];
                    x.norm_squared() * acc.apply(&x.unscale(x.norm())).norm_squared() / r.upper
                })
                .sum()
        };
        let mut acc = Projection::zero(8);
        for j in 1..p.blocks.len() {
            acc = acc.join(&p.subspaces[j]);
            let (start, end) = p.blocks[j];
            let eta = p.epsilon.powi(2) / (36.0 * 4f64.powi(j as i32 + 1));
            assert!((tail(&acc, end) - p.tail_traces[j - 1]).abs() < 1e-12);
            assert!(tail(&acc, end) <= eta);
            if end - 1 > start {
                assert!(tail(&acc, end - 1) > eta);
            }
        }
        assert!(p.projection_identity_residual < 1e-9);
        for (g, t) in p.gammas.iter().zip(&p.thresholds) {
            assert!(*g <= t + 1e-9);
        }
    }

    #[test]
    fn onb_extraction_covers_basis() {
        let f = onb(4).with_scalars(ones(4)).unwrap();
        let r = extract(&f, &ExtractionParams::default()).unwrap();
        assert!(r.report.is_frame && r.bounds_ok && r.mult_ok);
        assert!(r.sigma.multiplicity.iter().all(|&k| k > 0));
        assert!(r.normalized.vectors().iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        assert!(r.blocks.iter().all(|b| b.within_threshold_envelope));
    }

    #[test]
    fn tight_frame_ratio_at_most_nine() {
        let h = 3f64.sqrt() / 2.0;
        let f = VectorFamily::real(2, &[vec![0.0, 1.0], vec![-h, -0.5], vec![h, -0.5]])
            .unwrap()
            .with_scalars(ones(3))
            .unwrap();
        let r = extract(&f, &ExtractionParams::default()).unwrap();
        assert!(r.bounds_ok && r.mult_ok);
        assert!(r.report.upper / r.report.lower <= 9.0 * (1.0 + 1e-6));
    }

    #[test]
    fn two_scale_family_respects_caps() {
        let d = 6;
        let mut vs = Vec::new();
        let mut cs = Vec::new();
        for i in 0..d {
            let k = (i + 1) as f64;
            vs.push(unit(d, i).unscale(k));
            cs.push(C64::new(k, 0.0));
            vs.push(unit(d, i).scale(k));
            cs.push(C64::new(1.0 / k, 0.0));
        }
        let f = VectorFamily::new(d, Field::Real, vs).unwrap().with_scalars(cs).unwrap();
        let r = extract(&f, &ExtractionParams::default()).unwrap();
        assert!(r.mult_ok && r.bounds_ok);
        for (&k, &w) in r.sigma.multiplicity.iter().zip(&r.plan.weights) {
            assert!((k as f64) <= r.mult_bound_l * w);
        }
    }

    #[test]
    fn random_extraction_within_envelope() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..3 {
            let d = rng.random_range(2..=5);
            let n = rng.random_range(d..=3 * d);
            let f = random_family(&mut rng, d, n);
            let cs = (0..n).map(|_| C64::new(rng.random_range(0.5..2.0), 0.0)).collect();
            let f = f.with_scalars(cs).unwrap();
            let r = extract(&f, &ExtractionParams::default()).unwrap();
            assert!(r.report.lower > 0.0);
            assert!(r.bounds_ok, "{:?} vs [{}, {}]", r.report, r.target_lower, r.target_upper);
            assert!(r.mult_ok);
            assert!(r.total_deviation <= r.total_bound);
        }
    }

    #[test]
    fn b_to_a_examples() {
        let f = onb(3).with_scalars(ones(3)).unwrap();
        let out = equivalence_b_to_a(&f).unwrap();
        for (a, b) in out.functionals.vectors().iter().zip(onb(3).vectors()) {
            assert!((a - b).norm() < 1e-15);
        }
        let f = VectorFamily::real(2, &[vec![2.0, 0.0], vec![0.0, 1.0]])
            .unwrap()
            .with_scalars(ones(2))
            .unwrap();
        let out = equivalence_b_to_a(&f).unwrap();
        assert!((out.functionals.vectors()[0][0].re - 0.5).abs() < 1e-15);
        assert!((out.functionals.vectors()[1][1].re - 1.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let f = random_family(&mut rng, 4, 9);
        let cs = (0..9).map(|_| C64::new(rng.random_range(0.3..3.0), 0.0)).collect();
        let out = equivalence_b_to_a(&f.with_scalars(cs).unwrap()).unwrap();
        assert!(out.max_residual < TAU_NUM);
    }

    #[test]
    fn a_to_d_examples() {
        let f = VectorFamily::real(2, &[vec![1.0, 0.0], vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let r = equivalence_a_to_d(&f, &ExtractionParams::default()).unwrap();
        assert_eq!(r.classes, vec![vec![0, 1], vec![2]]);
        assert!(r.report.is_frame);
        assert!(r.max_overlap <= 1.0 - TAU_COL);

        let r = equivalence_a_to_d(&onb(3), &ExtractionParams::default()).unwrap();
        assert_eq!(r.classes, vec![vec![0], vec![1], vec![2]]);

        let f = VectorFamily::real(2, &[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        assert!(equivalence_a_to_d(&f, &ExtractionParams::default()).is_err());
    }

    #[test]
    fn a_to_d_with_planted_duplicates() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let base = random_family(&mut rng, 3, 5);
        let mut vs = base.vectors().to_vec();
        for _ in 0..4 {
            let k = rng.random_range(0..5);
            let s = rng.random_range(-3.0..3.0);
            vs.push(base.vectors()[k].scale(s));
        }
        let f = VectorFamily::new(3, Field::Real, vs).unwrap();
        let r = equivalence_a_to_d(&f, &ExtractionParams::default()).unwrap();
        assert_eq!(r.classes.len(), 5);
        assert!(r.class_weights.iter().all(|&w| w <= r.weight_bound * (1.0 + TAU_NUM)));
        assert!(r.report.is_frame);
        assert!(r.max_overlap <= 1.0 - TAU_COL);
    }

    #[test]
    fn c_check_examples() {
        let f = onb(3);
        assert!(equivalence_c_check(&f, &f).unwrap().holds);

        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let f = random_family(&mut rng, 3, 7);
        let d = canonical_dual(&f).unwrap();
        assert!(equivalence_c_check(&d, &f).unwrap().holds);
        assert!(equivalence_c_check(&f, &d).unwrap().holds);

        let bad = VectorFamily::new(3, Field::Real, d.vectors().iter().map(|v| v.scale(1.1)).collect()).unwrap();
        assert!(!equivalence_c_check(&f, &bad).unwrap().holds);
        let short = onb(2);
        assert!(equivalence_c_check(&f, &short).is_err());
    }
}
