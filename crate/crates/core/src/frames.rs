//! Finite frames: frame operator, bounds, canonical dual, reconstruction and
//! the Riesz basis / frame / rescalable classification.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FramexError, Result};
use crate::linalg::{
    self, check_dims, hpd_inverse, inner, Field, Matrix, PsdOperator, Vector, C64, TAU_NUM,
};

/// Relative threshold under which a lower frame bound counts as zero.
pub const TAU_FRAME: f64 = 1e-10;
const PROBES: usize = 50;
const PROBE_SEED: u64 = 0x5eed_f4a3;

#[derive(Clone, Debug)]
pub struct VectorFamily {
    dim: usize,
    field: Field,
    vectors: Vec<Vector>,
    scalars: Option<Vec<C64>>,
    labels: Option<Vec<String>>,
}

impl VectorFamily {
    pub fn new(dim: usize, field: Field, vectors: Vec<Vector>) -> Result<Self> {
        if dim == 0 {
            return Err(FramexError::precondition("dimension must be positive"));
        }
        check_dims(&vectors, dim)?;
        if field == Field::Real && vectors.iter().flatten().any(|z| z.im != 0.0) {
            return Err(FramexError::precondition(
                "complex entries in a family declared real",
            ));
        }
        Ok(VectorFamily {
            dim,
            field,
            vectors,
            scalars: None,
            labels: None,
        })
    }

    pub fn real(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let vectors = rows.iter().map(|r| linalg::real_vector(r)).collect();
        VectorFamily::new(dim, Field::Real, vectors)
    }

    pub fn with_scalars(mut self, scalars: Vec<C64>) -> Result<Self> {
        if scalars.len() != self.vectors.len() {
            return Err(FramexError::DimensionMismatch {
                expected: self.vectors.len(),
                found: scalars.len(),
            });
        }
        if self.field == Field::Real && scalars.iter().any(|z| z.im != 0.0) {
            return Err(FramexError::precondition(
                "complex scalars on a family declared real",
            ));
        }
        self.scalars = Some(scalars);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.vectors.len() {
            return Err(FramexError::DimensionMismatch {
                expected: self.vectors.len(),
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vector] {
        &self.vectors
    }

    pub fn scalars(&self) -> Option<&[C64]> {
        self.scalars.as_deref()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// `c_n x_n` when `use_scalars` and scalars exist, `x_n` otherwise.
    pub fn weighted(&self, use_scalars: bool) -> Vec<Vector> {
        match (&self.scalars, use_scalars) {
            (Some(c), true) => self
                .vectors
                .iter()
                .zip(c)
                .map(|(x, &c)| x * c)
                .collect(),
            _ => self.vectors.clone(),
        }
    }

    /// The family `{x_n/‖x_n‖}` with zero vectors dropped.
    pub fn normalized(&self) -> VectorFamily {
        let vectors = self
            .vectors
            .iter()
            .filter(|v| v.norm() > 0.0)
            .map(|v| v.unscale(v.norm()))
            .collect();
        VectorFamily {
            dim: self.dim,
            field: self.field,
            vectors,
            scalars: None,
            labels: None,
        }
    }
}

fn require_nonempty(f: &VectorFamily) -> Result<()> {
    if f.is_empty() {
        return Err(FramexError::precondition("family is empty"));
    }
    Ok(())
}

/// `S x = Σ ⟨x, w_n⟩ w_n`.
pub fn frame_operator(f: &VectorFamily, use_scalars: bool) -> Result<PsdOperator> {
    require_nonempty(f)?;
    let mut s = Matrix::zeros(f.dim, f.dim);
    for w in f.weighted(use_scalars) {
        s += linalg::outer(&w);
    }
    PsdOperator::new(s)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FrameReport {
    pub lower: f64,
    pub upper: f64,
    pub is_frame: bool,
    pub is_bessel: bool,
    pub is_tight: bool,
    pub is_riesz_basis: bool,
    /// Worst relative violation of the frame inequality over random probes.
    pub probe_violation: f64,
}

/// Frame bounds from the extreme eigenvalues of the frame operator, with a
/// seeded probe check of the frame inequality.
pub fn frame_bounds(f: &VectorFamily, use_scalars: bool) -> Result<FrameReport> {
    let s = frame_operator(f, use_scalars)?;
    let upper = s.lambda_max().max(0.0);
    let mut lower = s.lambda_min().max(0.0);
    let is_frame = lower > TAU_FRAME * upper;
    if !is_frame {
        lower = lower.min(TAU_FRAME * upper);
    }
    let weighted = f.weighted(use_scalars);
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..PROBES {
        let x = random_unit(&mut rng, f.dim, f.field);
        let energy = analysis_energy(&weighted, &x);
        let below = (lower - energy).max(0.0);
        let above = (energy - upper).max(0.0);
        worst = worst.max(below.max(above) / upper.max(f64::MIN_POSITIVE));
    }
    if worst > TAU_NUM {
        return Err(FramexError::precondition(format!(
            "frame inequality self-check failed (relative violation {worst:.3e})"
        )));
    }
    let is_tight = is_frame && (upper - lower).abs() <= TAU_NUM * upper;
    Ok(FrameReport {
        lower,
        upper,
        is_frame,
        is_bessel: upper.is_finite(),
        is_tight,
        is_riesz_basis: is_frame && f.len() == f.dim,
        probe_violation: worst,
    })
}

/// `Σ |⟨x, w_n⟩|²`.
pub fn analysis_energy(vectors: &[Vector], x: &Vector) -> f64 {
    vectors.iter().map(|w| inner(x, w).norm_sqr()).sum()
}

/// Gaussian direction on the unit sphere of the declared field.
pub fn random_unit<R: rand::Rng>(rng: &mut R, dim: usize, field: Field) -> Vector {
    loop {
        let v = Vector::from_fn(dim, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = match field {
                Field::Real => 0.0,
                Field::Complex => StandardNormal.sample(rng),
            };
            C64::new(re, im)
        });
        let n = v.norm();
        if n > 0.0 {
            return v.unscale(n);
        }
    }
}

/// `{S⁻¹ x_n}` for the frame operator of the unweighted family.
pub fn canonical_dual(f: &VectorFamily) -> Result<VectorFamily> {
    let report = frame_bounds(f, false)?;
    if !report.is_frame {
        return Err(FramexError::NotAFrame {
            lower: report.lower,
            upper: report.upper,
        });
    }
    let s = frame_operator(f, false)?;
    let inv = hpd_inverse(s.matrix())?;
    let vectors = f.vectors.iter().map(|x| &inv * x).collect();
    Ok(VectorFamily {
        dim: f.dim,
        field: f.field,
        vectors,
        scalars: None,
        labels: f.labels.clone(),
    })
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub value: Vector,
    /// max over prefixes of ‖partial sum − final sum‖
    pub max_partial_deviation: f64,
}

/// `Σ ⟨x, y_n⟩ x_n` accumulated in the given order.
pub fn reconstruct(
    f: &VectorFamily,
    duals: &VectorFamily,
    x: &Vector,
    order: &[usize],
) -> Result<Reconstruction> {
    if f.len() != duals.len() {
        return Err(FramexError::DimensionMismatch {
            expected: f.len(),
            found: duals.len(),
        });
    }
    if f.dim != duals.dim || x.len() != f.dim {
        return Err(FramexError::DimensionMismatch {
            expected: f.dim,
            found: if f.dim != duals.dim { duals.dim } else { x.len() },
        });
    }
    let mut seen = vec![false; f.len()];
    if order.len() != f.len() || order.iter().any(|&i| i >= f.len() || std::mem::replace(&mut seen[i], true)) {
        return Err(FramexError::precondition("order is not a permutation of the index set"));
    }
    let mut partials = Vec::with_capacity(order.len());
    let mut acc = Vector::zeros(f.dim);
    for &n in order {
        acc += &f.vectors[n] * inner(x, &duals.vectors[n]);
        partials.push(acc.clone());
    }
    let max_partial_deviation = partials
        .iter()
        .map(|p| (p - &acc).norm())
        .fold(0.0, f64::max);
    Ok(Reconstruction {
        value: acc,
        max_partial_deviation,
    })
}

/// Largest distance between final sums over the given orders. At finite
/// scale this is pure rounding; it is a diagnostic, not a predicate.
pub fn permutation_spread(
    f: &VectorFamily,
    duals: &VectorFamily,
    x: &Vector,
    orders: &[Vec<usize>],
) -> Result<f64> {
    let finals = orders
        .iter()
        .map(|o| reconstruct(f, duals, x, o).map(|r| r.value))
        .collect::<Result<Vec<_>>>()?;
    let mut spread: f64 = 0.0;
    for a in &finals {
        for b in &finals {
            spread = spread.max((a - b).norm());
        }
    }
    Ok(spread)
}

/// Bounds of `{‖x_n‖ y_n}_{n ∈ J}` with `y_n` the canonical dual. The upper
/// bound is always finite; nothing is claimed about the lower one.
pub fn dual_norm_weighted_bounds(f: &VectorFamily, subset: &[usize]) -> Result<FrameReport> {
    let duals = canonical_dual(f)?;
    let mut vectors = Vec::with_capacity(subset.len());
    for &n in subset {
        let y = duals.vectors.get(n).ok_or_else(|| {
            FramexError::precondition(format!("index {n} out of range"))
        })?;
        vectors.push(y.scale(f.vectors[n].norm()));
    }
    frame_bounds(&VectorFamily::new(f.dim, f.field, vectors)?, false)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HierarchyLevel {
    RieszBasis,
    Frame,
    Rescalable,
    NonSpanning,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Classification {
    pub label: HierarchyLevel,
    /// Every level the family belongs to, most specific first.
    pub memberships: Vec<HierarchyLevel>,
    pub spanning: bool,
    pub rescale_recommended: bool,
    pub report: FrameReport,
    pub caveat: String,
}

const CAVEAT: &str = "finite dimension: every spanning family is a frame, and 'rescalable' \
     (some scalars make it a frame) coincides with spanning";

pub fn classify(f: &VectorFamily) -> Result<Classification> {
    let report = frame_bounds(f, false)?;
    // Spanning is decided on the normalised family so tiny but nonzero
    // vectors still count.
    let normalized = f.normalized();
    let spanning = !normalized.is_empty() && frame_bounds(&normalized, false)?.is_frame;
    let mut memberships = Vec::new();
    if spanning {
        if report.is_riesz_basis {
            memberships.push(HierarchyLevel::RieszBasis);
        }
        memberships.push(HierarchyLevel::Frame);
        memberships.push(HierarchyLevel::Rescalable);
    } else {
        memberships.push(HierarchyLevel::NonSpanning);
    }
    Ok(Classification {
        label: memberships[0],
        rescale_recommended: spanning && !report.is_frame,
        memberships,
        spanning,
        report,
        caveat: CAVEAT.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{real_vector, unit};
    use rand::Rng;

    fn onb(d: usize) -> VectorFamily {
        VectorFamily::new(d, Field::Real, (0..d).map(|i| unit(d, i)).collect()).unwrap()
    }

    fn mercedes() -> VectorFamily {
        let h = 3f64.sqrt() / 2.0;
        VectorFamily::real(2, &[vec![0.0, 1.0], vec![-h, -0.5], vec![h, -0.5]]).unwrap()
    }

    fn max_entry(m: &Matrix) -> f64 {
        m.iter().fold(0.0, |a, z| a.max(z.norm()))
    }

    fn random_family(rng: &mut ChaCha8Rng, d: usize, n: usize) -> VectorFamily {
        let vs = (0..n)
            .map(|_| Vector::from_fn(d, |_, _| C64::new(rng.random_range(-1.0..1.0), 0.0)))
            .collect();
        VectorFamily::new(d, Field::Real, vs).unwrap()
    }

    #[test]
    fn frame_operator_examples() {
        let s = frame_operator(&onb(3), false).unwrap();
        assert!(max_entry(&(s.matrix() - linalg::identity(3))) == 0.0);

        let f = VectorFamily::real(2, &[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let s = frame_operator(&f, false).unwrap();
        assert_eq!(s.matrix()[(0, 0)].re, 2.0);
        assert_eq!(s.matrix()[(1, 1)].re, 1.0);
        assert_eq!(s.matrix()[(0, 1)].norm(), 0.0);
    }

    #[test]
    fn mercedes_is_tight_three_halves() {
        let f = mercedes();
        let s = frame_operator(&f, false).unwrap();
        // direct summation oracle
        let mut m = [[0.0; 2]; 2];
        for v in f.vectors() {
            for i in 0..2 {
                for j in 0..2 {
                    m[i][j] += v[i].re * v[j].re;
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                assert!((s.matrix()[(i, j)].re - m[i][j]).abs() < 1e-15);
            }
        }
        let r = frame_bounds(&f, false).unwrap();
        assert!((r.lower - 1.5).abs() < 1e-12 && (r.upper - 1.5).abs() < 1e-12);
        assert!(r.is_tight && !r.is_riesz_basis);
    }

    #[test]
    fn scalars_enter_the_operator() {
        let f = onb(2)
            .with_scalars(vec![C64::new(2.0, 0.0), C64::new(0.5, 0.0)])
            .unwrap();
        let r = frame_bounds(&f, true).unwrap();
        assert!((r.lower - 0.25).abs() < 1e-15 && (r.upper - 4.0).abs() < 1e-15);
        let r = frame_bounds(&f, false).unwrap();
        assert!(r.is_tight);
    }

    #[test]
    fn onb_bounds() {
        let r = frame_bounds(&onb(4), false).unwrap();
        assert_eq!((r.lower, r.upper), (1.0, 1.0));
        assert!(r.is_frame && r.is_tight && r.is_riesz_basis && r.is_bessel);
    }

    #[test]
    fn harmonic_diagonal_ratio_is_d_squared() {
        for d in [4usize, 8] {
            let vs = (0..d).map(|i| unit(d, i).unscale((i + 1) as f64)).collect();
            let r = frame_bounds(&VectorFamily::new(d, Field::Real, vs).unwrap(), false).unwrap();
            assert!((r.lower - 1.0 / (d * d) as f64).abs() < 1e-15);
            assert!((r.upper - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn non_spanning_has_zero_lower_bound() {
        let f = VectorFamily::real(3, &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let r = frame_bounds(&f, false).unwrap();
        assert!(!r.is_frame && r.lower == 0.0);
    }

    #[test]
    fn dual_examples() {
        let d = canonical_dual(&onb(3)).unwrap();
        for (a, b) in d.vectors().iter().zip(onb(3).vectors()) {
            assert!((a - b).norm() < 1e-15);
        }
        let d = canonical_dual(&mercedes()).unwrap();
        for (a, b) in d.vectors().iter().zip(mercedes().vectors()) {
            assert!((a - b.unscale(1.5)).norm() < 1e-14);
        }
        let f = VectorFamily::real(2, &[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let d = canonical_dual(&f).unwrap();
        let expect = [real_vector(&[0.5, 0.0]), real_vector(&[0.5, 0.0]), real_vector(&[0.0, 1.0])];
        for (a, b) in d.vectors().iter().zip(&expect) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn dual_of_non_frame_errors() {
        let f = VectorFamily::real(2, &[vec![1.0, 0.0]]).unwrap();
        assert!(matches!(canonical_dual(&f), Err(FramexError::NotAFrame { .. })));
    }

    #[test]
    fn reconstruction_and_permutations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = random_family(&mut rng, 4, 9);
        let d = canonical_dual(&f).unwrap();
        let x = random_unit(&mut rng, 4, Field::Real);
        let id: Vec<usize> = (0..9).collect();
        let rev: Vec<usize> = (0..9).rev().collect();
        let a = reconstruct(&f, &d, &x, &id).unwrap();
        let b = reconstruct(&f, &d, &x, &rev).unwrap();
        assert!((&a.value - &x).norm() < 1e-9);
        assert!((&a.value - &b.value).norm() < 1e-12);

        let mut orders = Vec::new();
        for _ in 0..20 {
            let mut o = id.clone();
            for i in (1..o.len()).rev() {
                o.swap(i, rng.random_range(0..=i));
            }
            orders.push(o);
        }
        assert!(permutation_spread(&f, &d, &x, &orders).unwrap() < 1e-9);
    }

    #[test]
    fn reconstruct_rejects_length_mismatch() {
        let f = onb(2);
        let g = VectorFamily::new(2, Field::Real, vec![unit(2, 0)]).unwrap();
        assert!(reconstruct(&f, &g, &unit(2, 0), &[0, 1]).is_err());
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(&onb(3)).unwrap().label, HierarchyLevel::RieszBasis);

        let f = VectorFamily::real(2, &[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let c = classify(&f).unwrap();
        assert_eq!(c.label, HierarchyLevel::Frame);
        assert!(!c.rescale_recommended);

        let f = VectorFamily::real(2, &[vec![1e-6, 0.0], vec![0.0, 1.0]]).unwrap();
        let c = classify(&f).unwrap();
        assert!(c.memberships.contains(&HierarchyLevel::Frame));
        assert!((c.report.lower - 1e-12).abs() < 1e-24);
        assert!(c.rescale_recommended);

        let f = VectorFamily::real(2, &[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(classify(&f).unwrap().label, HierarchyLevel::NonSpanning);
    }

    #[test]
    fn weighted_dual_bounds_are_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f = random_family(&mut rng, 3, 7);
        let r = dual_norm_weighted_bounds(&f, &[0, 2, 4, 6]).unwrap();
        assert!(r.is_bessel && r.upper.is_finite());
    }
}
