//! Time-frequency systems on the cyclic group `Z_L`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{FramexError, Result};
use crate::frames::{canonical_dual, frame_bounds, random_unit, FrameReport, VectorFamily};
use crate::linalg::{identity, inner, spectral_norm, Field, Matrix, Vector, C64, TAU_NUM};
use crate::pointsets::{density, PointSet};

/// Largest number of step halvings tried when placing perturbed copies.
pub const MAX_REFINEMENTS: u32 = 48;
const COINCIDE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CyclicSignal {
    samples: Vec<C64>,
}

impl CyclicSignal {
    pub fn new(samples: Vec<C64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(FramexError::precondition("signal length must be positive"));
        }
        Ok(CyclicSignal { samples })
    }

    pub fn from_vector(v: &Vector) -> Result<Self> {
        CyclicSignal::new(v.iter().copied().collect())
    }

    pub fn delta(len: usize, at: usize) -> Result<Self> {
        let mut s = vec![C64::new(0.0, 0.0); len];
        if at >= len {
            return Err(FramexError::precondition("delta position outside the cycle"));
        }
        s[at] = C64::new(1.0, 0.0);
        CyclicSignal::new(s)
    }

    pub fn constant(len: usize, value: C64) -> Result<Self> {
        CyclicSignal::new(vec![value; len])
    }

    /// Samples of `exp(-π (t − L/2)² / L)`, scaled to unit norm.
    pub fn gaussian(len: usize) -> Result<Self> {
        let l = len as f64;
        let s: Vec<C64> = (0..len)
            .map(|t| {
                let u = t as f64 - l / 2.0;
                C64::new((-PI * u * u / l).exp(), 0.0)
            })
            .collect();
        let n = s.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        CyclicSignal::new(s.into_iter().map(|z| z / n).collect())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn norm(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn to_vector(&self) -> Vector {
        Vector::from_column_slice(&self.samples)
    }

    pub fn scaled(&self, c: C64) -> Self {
        CyclicSignal {
            samples: self.samples.iter().map(|z| z * c).collect(),
        }
    }
}

/// `(T_a f)(t) = f(t − a)` cyclically.
pub fn translate(f: &CyclicSignal, a: i64) -> CyclicSignal {
    let l = f.len() as i64;
    let s = (0..l)
        .map(|t| f.samples[(t - a).rem_euclid(l) as usize])
        .collect();
    CyclicSignal { samples: s }
}

/// `(M_b f)(t) = e^{2πi b t / L} f(t)`.
pub fn modulate(f: &CyclicSignal, b: i64) -> CyclicSignal {
    let l = f.len() as i64;
    let s = f
        .samples
        .iter()
        .enumerate()
        .map(|(t, z)| z * character(l, (b * t as i64).rem_euclid(l)))
        .collect();
    CyclicSignal { samples: s }
}

fn character(l: i64, k: i64) -> C64 {
    C64::from_polar(1.0, 2.0 * PI * k as f64 / l as f64)
}

/// `M_b T_a = e^{2πi ab/L} T_a M_b`; this returns the scalar.
pub fn commutation_phase(len: usize, a: i64, b: i64) -> C64 {
    let l = len as i64;
    character(l, (a * b).rem_euclid(l))
}

/// `M_b T_a g` for integer shifts.
pub fn tf_shift(g: &CyclicSignal, a: i64, b: i64) -> CyclicSignal {
    modulate(&translate(g, a), b)
}

/// `M_b T_a g` with real shifts: translation through the spectrum using
/// signed frequencies, modulation by `e^{2πi b t / L}`. Agrees with
/// [`tf_shift`] at integer arguments.
pub fn tf_shift_real(g: &CyclicSignal, a: f64, b: f64) -> Vector {
    let l = g.len();
    if a.fract() == 0.0 && b.fract() == 0.0 {
        return tf_shift(g, a as i64, b as i64).to_vector();
    }
    let moved: Vec<C64> = if a.fract() == 0.0 {
        translate(g, a as i64).samples
    } else {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(l);
        let inv = planner.plan_fft_inverse(l);
        let mut buf = g.samples.clone();
        fwd.process(&mut buf);
        for (k, z) in buf.iter_mut().enumerate() {
            let kk = if 2 * k < l { k as f64 } else { k as f64 - l as f64 };
            *z *= C64::from_polar(1.0 / l as f64, -2.0 * PI * kk * a / l as f64);
        }
        inv.process(&mut buf);
        buf
    };
    Vector::from_iterator(
        l,
        moved
            .into_iter()
            .enumerate()
            .map(|(t, z)| z * C64::from_polar(1.0, 2.0 * PI * b * t as f64 / l as f64)),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaborSpec {
    window: CyclicSignal,
    shifts: Vec<(i64, i64)>,
}

impl GaborSpec {
    /// Shifts are reduced mod L; duplicates are kept.
    pub fn new(window: CyclicSignal, shifts: Vec<(i64, i64)>) -> Self {
        let l = window.len() as i64;
        let shifts = shifts
            .into_iter()
            .map(|(a, b)| (a.rem_euclid(l), b.rem_euclid(l)))
            .collect();
        GaborSpec { window, shifts }
    }

    /// `aZ_L × bZ_L`, time index outermost.
    pub fn lattice(window: CyclicSignal, a: usize, b: usize) -> Result<Self> {
        if a == 0 || b == 0 {
            return Err(FramexError::precondition("lattice steps must be positive"));
        }
        let l = window.len();
        let shifts = (0..l)
            .step_by(a)
            .flat_map(|x| (0..l).step_by(b).map(move |w| (x as i64, w as i64)))
            .collect();
        Ok(GaborSpec::new(window, shifts))
    }

    pub fn full_lattice(window: CyclicSignal) -> Self {
        GaborSpec::lattice(window, 1, 1).expect("unit steps")
    }

    pub fn window(&self) -> &CyclicSignal {
        &self.window
    }

    pub fn shifts(&self) -> &[(i64, i64)] {
        &self.shifts
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }
}

fn nonzero_window(w: &CyclicSignal) -> Result<()> {
    if w.norm() == 0.0 {
        Err(FramexError::ZeroWindow)
    } else {
        Ok(())
    }
}

pub fn gabor_family(spec: &GaborSpec) -> Result<VectorFamily> {
    nonzero_window(&spec.window)?;
    let vs = spec
        .shifts
        .iter()
        .map(|&(a, b)| tf_shift(&spec.window, a, b).to_vector())
        .collect();
    VectorFamily::new(spec.len(), Field::Complex, vs)
}

/// `V(x, w) = ⟨f, M_w T_x ψ⟩`, rows indexed by `x`.
pub fn stft(f: &CyclicSignal, window: &CyclicSignal) -> Result<Matrix> {
    nonzero_window(window)?;
    let l = f.len();
    if window.len() != l {
        return Err(FramexError::DimensionMismatch {
            expected: l,
            found: window.len(),
        });
    }
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(l);
    let rows: Vec<Vec<C64>> = (0..l)
        .into_par_iter()
        .map(|x| {
            let mut buf: Vec<C64> = (0..l)
                .map(|t| f.samples[t] * window.samples[(t + l - x) % l].conj())
                .collect();
            fft.process(&mut buf);
            buf
        })
        .collect();
    Ok(Matrix::from_fn(l, l, |x, w| rows[x][w]))
}

/// `(L^{-1} Σ |V|^p)^{1/p}`: a discrete stand-in for a modulation-space
/// norm. Heuristic only; it says nothing about membership in `M^p`.
pub fn mp_proxy(f: &CyclicSignal, window: &CyclicSignal, p: f64) -> Result<f64> {
    if !(1.0..=2.0).contains(&p) {
        return Err(FramexError::precondition(format!("p = {p} must lie in [1, 2]")));
    }
    let v = stft(f, window)?;
    let cell = 1.0 / f.len() as f64;
    let s: f64 = v.iter().map(|z| z.norm().powf(p)).sum();
    Ok((cell * s).powf(1.0 / p))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentialSpec {
    len: usize,
    mask: Vec<usize>,
    frequencies: Vec<f64>,
}

impl ExponentialSpec {
    /// The mask is sorted and deduplicated.
    pub fn new(len: usize, mut mask: Vec<usize>, frequencies: Vec<f64>) -> Result<Self> {
        mask.sort_unstable();
        mask.dedup();
        if mask.is_empty() {
            return Err(FramexError::EmptyMask);
        }
        if mask.last().is_some_and(|&m| m >= len) {
            return Err(FramexError::precondition("mask index outside the cycle"));
        }
        Ok(ExponentialSpec {
            len,
            mask,
            frequencies,
        })
    }

    pub fn mask(&self) -> &[usize] {
        &self.mask
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }
}

/// Characters `t ↦ e^{2πi λ t / L}` restricted to the mask, as vectors in
/// `C^{|mask|}`.
pub fn exponential_family(spec: &ExponentialSpec) -> Result<VectorFamily> {
    let l = spec.len as f64;
    let vs = spec
        .frequencies
        .iter()
        .map(|&lam| {
            Vector::from_iterator(
                spec.mask.len(),
                spec.mask
                    .iter()
                    .map(|&t| C64::from_polar(1.0, 2.0 * PI * lam * t as f64 / l)),
            )
        })
        .collect();
    VectorFamily::new(spec.mask.len(), Field::Complex, vs)
}

#[derive(Clone, Debug)]
pub struct ConstructionParams {
    /// Copy counts for the first `k.len()` base elements; the rest get one.
    pub k: Vec<usize>,
    /// Allowed vector distance per base element; defaults to half the cap.
    pub budgets: Option<Vec<f64>>,
    /// Picks one of the eight symmetries of the placement spiral.
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ClusterReport {
    pub base_index: usize,
    pub base_shift: (i64, i64),
    pub copies: usize,
    /// `(4^n sup ‖φ*‖)^{-1}` with 1-based `n`.
    pub cap: f64,
    pub budget: f64,
    /// Grid step used for the copies, in grid units.
    pub step: f64,
    pub shifts: Vec<(f64, f64)>,
    /// Largest parameter distance in continuum units (grid distance / √L).
    pub max_parameter_distance: f64,
    pub parameter_limit: f64,
    pub max_vector_distance: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DensityWitness {
    pub center: (f64, f64),
    pub extent: f64,
    pub radius: f64,
    pub base_upper: f64,
    pub output_upper: f64,
    pub exceeds: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConstructionReport {
    pub base_report: FrameReport,
    pub dual_norm_sup: f64,
    /// `‖Σ_n g_n φ*_n^H − I‖` for the unperturbed base.
    pub base_resolution_defect: f64,
    pub clusters: Vec<ClusterReport>,
    pub s_minus_identity: f64,
    /// `Σ_n ‖φ*_n‖ max_i ‖g_{n,i} − g_n‖`
    pub triangle_bound: f64,
    pub invertible: bool,
    pub min_coefficient_norm: f64,
    pub coefficients_nonzero: bool,
    pub reconstruction_residual: f64,
    pub witness: DensityWitness,
}

#[derive(Clone, Debug)]
pub struct Construction {
    pub family: VectorFamily,
    /// `(S^{-1})^H φ*_n / K_n`, one per output vector.
    pub coefficients: VectorFamily,
    pub report: ConstructionReport,
}

/// Integer offsets ordered by distance then angle, under one of eight
/// symmetries of the square.
fn spiral(count: usize, seed: u64) -> Vec<(i64, i64)> {
    let mut r = 0i64;
    let mut offs: Vec<(i64, i64)> = Vec::new();
    while offs.len() < count.max(1) * 2 + 9 {
        r += 1;
        offs = (-r..=r).flat_map(|p| (-r..=r).map(move |q| (p, q))).collect();
    }
    offs.sort_by(|x, y| {
        let dx = x.0 * x.0 + x.1 * x.1;
        let dy = y.0 * y.0 + y.1 * y.1;
        let ax = (x.1 as f64).atan2(x.0 as f64).rem_euclid(2.0 * PI);
        let ay = (y.1 as f64).atan2(y.0 as f64).rem_euclid(2.0 * PI);
        dx.cmp(&dy).then(ax.total_cmp(&ay))
    });
    let sym = seed % 8;
    offs.truncate(count);
    offs.into_iter()
        .map(|(p, q)| {
            let (p, q) = if sym >= 4 { (q, p) } else { (p, q) };
            match sym % 4 {
                0 => (p, q),
                1 => (-q, p),
                2 => (-p, -q),
                _ => (q, -p),
            }
        })
        .collect()
}

fn torus_gap(x: f64, y: f64, l: f64) -> f64 {
    let d = (x - y).rem_euclid(l);
    d.min(l - d)
}

/// Replace each of the first base elements by `K_n` nearby time-frequency
/// shifts and weight them by `1/K_n` against the canonical dual, then
/// check the resulting operator stays within distance 1 of the identity.
pub fn clustered_frame_construct(base: &GaborSpec, params: &ConstructionParams) -> Result<Construction> {
    let l = base.len();
    let lf = l as f64;
    let fam = gabor_family(base)?;
    let base_report = frame_bounds(&fam, false)?;
    if !base_report.is_frame {
        return Err(FramexError::NotAFrame {
            lower: base_report.lower,
            upper: base_report.upper,
        });
    }
    let n_base = fam.len();
    if params.k.len() > n_base {
        return Err(FramexError::precondition(format!(
            "{} copy counts for {n_base} base elements",
            params.k.len()
        )));
    }
    if params.k.contains(&0) {
        return Err(FramexError::precondition("copy counts must be positive"));
    }
    if let Some(b) = &params.budgets {
        if b.len() != params.k.len() {
            return Err(FramexError::DimensionMismatch {
                expected: params.k.len(),
                found: b.len(),
            });
        }
    }
    let duals = canonical_dual(&fam)?;
    let dual_norm_sup = duals.vectors().iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut resolution = -identity(l);
    for (g, d) in fam.vectors().iter().zip(duals.vectors()) {
        resolution += g * d.adjoint();
    }
    let base_resolution_defect = spectral_norm(&resolution);

    let window = base.window();
    let base_pts: Vec<(f64, f64)> = base.shifts().iter().map(|&(a, b)| (a as f64, b as f64)).collect();
    let mut placed: Vec<(f64, f64)> = Vec::new();
    let mut clusters = Vec::new();
    let mut out = Vec::new();
    let mut owners = Vec::new();
    let mut s = Matrix::zeros(l, l);
    let mut triangle_bound = 0.0;
    for n in 0..n_base {
        let k = params.k.get(n).copied().unwrap_or(1);
        let g = &fam.vectors()[n];
        let (a0, b0) = base_pts[n];
        let ord = (n + 1) as i32;
        let cap = 1.0 / (4f64.powi(ord) * dual_norm_sup);
        let budget = match (&params.budgets, n < params.k.len()) {
            (Some(b), true) => b[n],
            _ => cap / 2.0,
        };
        if !(budget >= 0.0) || budget >= cap {
            return Err(FramexError::precondition(format!(
                "budget {budget} for element {} must lie in [0, {cap})",
                n + 1
            )));
        }
        let limit = 1.0 / (n + 1) as f64;
        let offs = spiral(k, params.seed);
        let mut h = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_REFINEMENTS {
            let pts: Vec<(f64, f64)> = offs
                .iter()
                .map(|&(p, q)| (a0 + p as f64 * h, b0 + q as f64 * h))
                .collect();
            let vecs: Vec<Vector> = pts.iter().map(|&(a, b)| tf_shift_real(window, a, b)).collect();
            let dists: Vec<f64> = vecs.iter().map(|v| (v - g).norm()).collect();
            let pdist = offs
                .iter()
                .map(|&(p, q)| h * ((p * p + q * q) as f64).sqrt() / lf.sqrt())
                .fold(0.0, f64::max);
            let max_dist = dists.iter().copied().fold(0.0, f64::max);
            let clash = pts.iter().any(|&(a, b)| {
                placed.iter().any(|&(x, y)| {
                    torus_gap(a, x, lf) < COINCIDE_TOL && torus_gap(b, y, lf) < COINCIDE_TOL
                })
            });
            if pdist < limit && max_dist <= budget && max_dist < cap && !clash {
                accepted = Some((pts, vecs, pdist, max_dist));
                break;
            }
            h /= 2.0;
        }
        let (pts, vecs, pdist, max_dist) = accepted.ok_or_else(|| {
            FramexError::GridTooCoarse(format!(
                "element {} needs a step finer than 2^-{MAX_REFINEMENTS}",
                n + 1
            ))
        })?;
        let dual = &duals.vectors()[n];
        triangle_bound += dual.norm() * max_dist;
        let wk = 1.0 / k as f64;
        for v in &vecs {
            s += (v * dual.adjoint()).scale(wk);
        }
        clusters.push(ClusterReport {
            base_index: n,
            base_shift: base.shifts()[n],
            copies: k,
            cap,
            budget,
            step: h,
            shifts: pts.clone(),
            max_parameter_distance: pdist,
            parameter_limit: limit,
            max_vector_distance: max_dist,
        });
        placed.extend(pts);
        owners.extend(std::iter::repeat_n(n, vecs.len()));
        out.extend(vecs);
    }
    let s_minus_identity = spectral_norm(&(&s - identity(l)));
    let s_inv = s.clone().try_inverse();
    let invertible = s_minus_identity < 1.0 && s_inv.is_some();
    let s_inv = s_inv.ok_or_else(|| FramexError::precondition("assembled operator is singular"))?;
    let s_inv_h = s_inv.adjoint();
    let coeffs: Vec<Vector> = owners
        .iter()
        .map(|&n| (&s_inv_h * &duals.vectors()[n]).unscale(clusters[n].copies as f64))
        .collect();
    let norms: Vec<f64> = coeffs.iter().map(|c| c.norm()).collect();
    let min_coefficient_norm = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let max_norm = norms.iter().copied().fold(0.0, f64::max);
    let coefficients_nonzero = min_coefficient_norm > TAU_NUM * max_norm;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut reconstruction_residual: f64 = 0.0;
    for _ in 0..10 {
        let x = random_unit(&mut rng, l, Field::Complex);
        let mut acc = Vector::zeros(l);
        for (v, c) in out.iter().zip(&coeffs) {
            acc += v * inner(&x, c);
        }
        reconstruction_residual = reconstruction_residual.max((acc - x).norm());
    }

    let witness = witness(&clusters, &base_pts, lf)?;
    let family = VectorFamily::new(l, Field::Complex, out)?;
    let coefficients = VectorFamily::new(l, Field::Complex, coeffs)?;
    Ok(Construction {
        family,
        coefficients,
        report: ConstructionReport {
            base_report,
            dual_norm_sup,
            base_resolution_defect,
            clusters,
            s_minus_identity,
            triangle_bound,
            invertible,
            min_coefficient_norm,
            coefficients_nonzero,
            reconstruction_residual,
            witness,
        },
    })
}

/// Upper density of output and base shifts in a window around the
/// largest cluster, both measured on the same centre grid.
fn witness(clusters: &[ClusterReport], base: &[(f64, f64)], l: f64) -> Result<DensityWitness> {
    let big = clusters
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.copies.cmp(&y.1.copies).then(y.0.cmp(&x.0)))
        .map(|(i, _)| i)
        .expect("at least one base element");
    let center = base[big];
    let rel = |p: &(f64, f64)| {
        let wrap = |d: f64| {
            let d = d.rem_euclid(l);
            if d > l / 2.0 {
                d - l
            } else {
                d
            }
        };
        vec![wrap(p.0 - center.0), wrap(p.1 - center.1)]
    };
    let nearest = base
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != big)
        .map(|(_, p)| {
            let d = rel(p);
            (d[0] * d[0] + d[1] * d[1]).sqrt()
        })
        .filter(|&d| d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let extent = if nearest.is_finite() { nearest.min(l / 2.0) } else { l / 2.0 };
    let radius = extent / 2.0;
    let inside = |pts: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        pts.into_iter()
            .filter(|p| (p[0] * p[0] + p[1] * p[1]).sqrt() <= extent)
            .collect()
    };
    let out_pts = inside(clusters.iter().flat_map(|c| c.shifts.iter().map(rel)).collect());
    let base_pts = inside(base.iter().map(rel).collect());
    let out = density(&PointSet::new(2, out_pts, extent)?, &[radius], None)?;
    let base = density(&PointSet::new(2, base_pts, extent)?, &[radius], None)?;
    Ok(DensityWitness {
        center,
        extent,
        radius,
        base_upper: base.upper,
        output_upper: out.upper,
        exceeds: out.upper > base.upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::frame_operator;
    use crate::linalg::hermitian_norm;
    use rand::Rng;

    fn random_signal(rng: &mut ChaCha8Rng, l: usize) -> CyclicSignal {
        CyclicSignal::new(
            (0..l)
                .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn shifts_of_delta_and_constant() {
        let d = CyclicSignal::delta(8, 0).unwrap();
        assert_eq!(translate(&d, 1), CyclicSignal::delta(8, 1).unwrap());
        assert_eq!(translate(&d, -1), CyclicSignal::delta(8, 7).unwrap());
        let one = CyclicSignal::constant(8, C64::new(1.0, 0.0)).unwrap();
        let m = modulate(&one, 3);
        for (t, z) in m.samples().iter().enumerate() {
            assert!((z - C64::from_polar(1.0, 2.0 * PI * 3.0 * t as f64 / 8.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn commutation_and_unitarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let f = random_signal(&mut rng, 16);
        for (a, b) in [(1, 1), (3, 5), (-2, 7), (15, 15)] {
            let lhs = modulate(&translate(&f, a), b);
            let rhs = translate(&modulate(&f, b), a).scaled(commutation_phase(16, a, b));
            for (x, y) in lhs.samples().iter().zip(rhs.samples()) {
                assert!((x - y).norm() < 1e-13);
            }
            assert!((translate(&f, a).norm() - f.norm()).abs() < 1e-12);
            assert!((modulate(&f, b).norm() - f.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn real_shift_matches_integer_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let g = random_signal(&mut rng, 12);
        let exact = tf_shift(&g, 5, 3).to_vector();
        assert!((tf_shift_real(&g, 5.0, 3.0) - &exact).norm() < 1e-12);
        // spectral path at an integer argument
        let near = tf_shift_real(&g, 5.0 + 1e-13, 3.0);
        assert!((near - exact).norm() < 1e-9);
        assert!((tf_shift_real(&g, 0.37, 1.5).norm() - g.norm()).abs() < 1e-12);
    }

    #[test]
    fn full_lattice_is_tight() {
        for l in [8, 16] {
            let g = CyclicSignal::gaussian(l).unwrap();
            let f = gabor_family(&GaborSpec::full_lattice(g)).unwrap();
            let s = frame_operator(&f, false).unwrap();
            assert!(hermitian_norm(&(s.matrix() - identity(l).scale(l as f64))) < 1e-10);
        }
        let g = CyclicSignal::gaussian(8).unwrap();
        assert_eq!(gabor_family(&GaborSpec::new(g, vec![(1, 2)])).unwrap().len(), 1);
        let zero = CyclicSignal::constant(8, C64::new(0.0, 0.0)).unwrap();
        assert!(matches!(
            gabor_family(&GaborSpec::full_lattice(zero)),
            Err(FramexError::ZeroWindow)
        ));
    }

    #[test]
    fn critical_lattice_reports_bounds() {
        let g = CyclicSignal::gaussian(16).unwrap();
        let f = gabor_family(&GaborSpec::lattice(g, 4, 4).unwrap()).unwrap();
        assert_eq!(f.len(), 16);
        let r = frame_bounds(&f, false).unwrap();
        assert!(r.upper >= r.lower && r.lower >= 0.0);
    }

    #[test]
    fn stft_energy_and_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let f = random_signal(&mut rng, 16);
        let w = CyclicSignal::gaussian(16).unwrap();
        let v = stft(&f, &w).unwrap();
        let energy: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let want = 16.0 * f.norm().powi(2) * w.norm().powi(2);
        assert!((energy - want).abs() < 1e-9 * want);
        // direct inner products
        for (x, b) in [(0usize, 0usize), (3, 7), (15, 2)] {
            let direct = inner(&f.to_vector(), &tf_shift(&w, x as i64, b as i64).to_vector());
            assert!((direct - v[(x, b)]).norm() < 1e-12);
        }
        let d = CyclicSignal::delta(8, 0).unwrap();
        let v = stft(&d, &d).unwrap();
        for x in 1..8 {
            assert!(v.row(x).iter().all(|z| z.norm() == 0.0));
        }
        assert!(v.row(0).iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn proxy_behaviour() {
        let g = CyclicSignal::gaussian(16).unwrap();
        let d = CyclicSignal::delta(16, 0).unwrap();
        let vals: Vec<f64> = [1.0, 1.25, 1.5, 2.0].iter().map(|&p| mp_proxy(&d, &g, p).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
        let zero = CyclicSignal::constant(16, C64::new(0.0, 0.0)).unwrap();
        assert_eq!(mp_proxy(&zero, &g, 1.5).unwrap(), 0.0);
        let c = C64::new(-2.0, 1.0);
        let a = mp_proxy(&d.scaled(c), &g, 1.3).unwrap();
        assert!((a - c.norm() * mp_proxy(&d, &g, 1.3).unwrap()).abs() < 1e-12);
        assert!(mp_proxy(&d, &g, 2.5).is_err());
    }

    #[test]
    fn exponential_families() {
        let l = 8;
        let full = ExponentialSpec::new(l, (0..l).collect(), (0..l).map(|k| k as f64).collect()).unwrap();
        let r = frame_bounds(&exponential_family(&full).unwrap(), false).unwrap();
        assert!((r.lower - 8.0).abs() < 1e-10 && (r.upper - 8.0).abs() < 1e-10);
        let one = ExponentialSpec::new(l, (0..l).collect(), vec![2.0]).unwrap();
        let s = frame_operator(&exponential_family(&one).unwrap(), false).unwrap();
        assert_eq!(s.spectrum().iter().filter(|&&e| e > 1e-9).count(), 1);
        let half = ExponentialSpec::new(l, (0..l / 2).collect(), (0..l).map(|k| k as f64).collect()).unwrap();
        let r = frame_bounds(&exponential_family(&half).unwrap(), false).unwrap();
        assert!(r.is_frame && r.lower > 0.0);
        assert!(matches!(ExponentialSpec::new(l, vec![], vec![1.0]), Err(FramexError::EmptyMask)));
    }

    fn base64() -> GaborSpec {
        GaborSpec::lattice(CyclicSignal::gaussian(64).unwrap(), 4, 4).unwrap()
    }

    #[test]
    fn unit_counts_reproduce_identity() {
        let c = clustered_frame_construct(
            &base64(),
            &ConstructionParams {
                k: vec![1, 1, 1, 1],
                budgets: Some(vec![0.0; 4]),
                seed: 0,
            },
        )
        .unwrap();
        assert!(c.report.s_minus_identity < 1e-9);
        assert!(c.report.coefficients_nonzero);
        assert!(!c.report.witness.exceeds);
    }

    #[test]
    fn growing_counts_stay_invertible() {
        let c = clustered_frame_construct(
            &base64(),
            &ConstructionParams {
                k: vec![1, 2, 4, 8],
                budgets: None,
                seed: 3,
            },
        )
        .unwrap();
        let r = &c.report;
        assert!(r.s_minus_identity < 1.0 && r.invertible);
        assert!(r.s_minus_identity <= r.triangle_bound + 1e-12);
        assert!(r.coefficients_nonzero);
        assert!(r.reconstruction_residual < 1e-9);
        assert!(r.witness.exceeds);
        for cl in &r.clusters {
            assert!(cl.max_parameter_distance < cl.parameter_limit);
            assert!(cl.max_vector_distance < cl.cap);
        }
        assert_eq!(c.family.len(), 256 - 4 + 15);
    }

    #[test]
    fn spiral_is_distinct() {
        for seed in 0..8 {
            let s = spiral(9, seed);
            assert_eq!(s[0], (0, 0));
            let mut u = s.clone();
            u.sort();
            u.dedup();
            assert_eq!(u.len(), 9);
        }
    }
}
