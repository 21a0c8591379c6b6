//! Beurling-type density estimates for finite point samples.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FramexError, Result};

/// Upper limit on window centres scanned per radius.
pub const MAX_CENTERS: usize = 4_000_000;
const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PointSet {
    ambient_dim: usize,
    points: Vec<Vec<f64>>,
    /// Radius of the origin-centred ball the sample represents faithfully.
    extent: f64,
}

impl PointSet {
    pub fn new(ambient_dim: usize, points: Vec<Vec<f64>>, extent: f64) -> Result<Self> {
        if ambient_dim == 0 {
            return Err(FramexError::precondition("ambient dimension must be positive"));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(FramexError::precondition("extent must be positive"));
        }
        for p in &points {
            if p.len() != ambient_dim {
                return Err(FramexError::DimensionMismatch {
                    expected: ambient_dim,
                    found: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(FramexError::precondition("point coordinates must be finite"));
            }
            if euclid(p) > extent * (1.0 + BOUNDARY_TOL) {
                return Err(FramexError::precondition(format!(
                    "point {p:?} lies outside the extent {extent}"
                )));
            }
        }
        Ok(PointSet {
            ambient_dim,
            points,
            extent,
        })
    }

    /// Points of a one-dimensional progression `offset + step·k` inside `[-extent, extent]`.
    pub fn progression(step: f64, offset: f64, extent: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(FramexError::precondition("step must be positive"));
        }
        let lo = ((-extent - offset) / step).ceil() as i64;
        let hi = ((extent - offset) / step).floor() as i64;
        let pts = (lo..=hi).map(|k| vec![offset + step * k as f64]).collect();
        PointSet::new(1, pts, extent)
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        PointSet::new(
            self.ambient_dim,
            self.points
                .iter()
                .map(|p| p.iter().map(|v| v * s).collect())
                .collect(),
            self.extent * s.abs(),
        )
    }
}

fn euclid(p: &[f64]) -> f64 {
    p.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Volume of the Euclidean ball of radius `r` in dimension `k`.
pub fn ball_volume(k: usize, r: f64) -> f64 {
    let mut v = if k % 2 == 0 { 1.0 } else { 2.0 * r };
    let mut j = if k % 2 == 0 { 0 } else { 1 };
    while j < k {
        j += 2;
        v *= 2.0 * std::f64::consts::PI * r * r / j as f64;
    }
    v
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct WindowStat {
    pub radius: f64,
    pub step: f64,
    pub centers: usize,
    pub min_count: usize,
    pub max_count: usize,
    pub inf_density: f64,
    pub sup_density: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DensityEstimate {
    /// Infimum curve evaluated at the largest radius.
    pub lower: f64,
    /// Supremum curve evaluated at the largest radius.
    pub upper: f64,
    pub window_radii: Vec<f64>,
    pub per_window: Vec<WindowStat>,
}

/// Grid of centres (multiples of `step`) inside the ball of radius `reach`.
fn centers(k: usize, reach: f64, step: f64) -> Result<Vec<Vec<f64>>> {
    let m = (reach / step + BOUNDARY_TOL).floor() as i64;
    let side = (2 * m + 1) as usize;
    if (side as f64).powi(k as i32) > MAX_CENTERS as f64 {
        return Err(FramexError::BudgetExceeded(format!(
            "{side}^{k} window centres exceed {MAX_CENTERS}"
        )));
    }
    let mut out = Vec::new();
    let mut idx = vec![-m; k];
    loop {
        let c: Vec<f64> = idx.iter().map(|&i| i as f64 * step).collect();
        if euclid(&c) <= reach * (1.0 + BOUNDARY_TOL) {
            out.push(c);
        }
        let mut d = 0;
        loop {
            if d == k {
                return Ok(out);
            }
            idx[d] += 1;
            if idx[d] <= m {
                break;
            }
            idx[d] = -m;
            d += 1;
        }
    }
}

fn density_of(
    k: usize,
    points: &[&[f64]],
    extent: f64,
    radii: &[f64],
    step: Option<f64>,
) -> Result<DensityEstimate> {
    if radii.is_empty() {
        return Err(FramexError::precondition("at least one radius is required"));
    }
    for &r in radii {
        if !(r > 0.0) || r > extent / 2.0 * (1.0 + BOUNDARY_TOL) {
            return Err(FramexError::precondition(format!(
                "radius {r} must lie in (0, extent/2 = {}]",
                extent / 2.0
            )));
        }
    }
    if let Some(s) = step {
        if !(s > 0.0) {
            return Err(FramexError::precondition("centre grid step must be positive"));
        }
    }
    let per_window = radii
        .par_iter()
        .map(|&r| {
            let h = step.unwrap_or(r / 20.0);
            let cs = centers(k, extent - r, h)?;
            let vol = ball_volume(k, r);
            let lim = r * (1.0 + BOUNDARY_TOL);
            let counts: Vec<usize> = cs
                .iter()
                .map(|c| {
                    points
                        .iter()
                        .filter(|p| {
                            p.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
                                <= lim
                        })
                        .count()
                })
                .collect();
            let min_count = counts.iter().copied().min().unwrap_or(0);
            let max_count = counts.iter().copied().max().unwrap_or(0);
            Ok(WindowStat {
                radius: r,
                step: h,
                centers: cs.len(),
                min_count,
                max_count,
                inf_density: min_count as f64 / vol,
                sup_density: max_count as f64 / vol,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let largest = per_window
        .iter()
        .max_by(|a, b| a.radius.total_cmp(&b.radius))
        .expect("nonempty radii");
    Ok(DensityEstimate {
        lower: largest.inf_density,
        upper: largest.sup_density,
        window_radii: radii.to_vec(),
        per_window,
    })
}

/// Inf/sup of `#(Λ ∩ B_r(x)) / |B_r(x)|` over a centre grid, per radius.
pub fn density(ps: &PointSet, radii: &[f64], center_grid_step: Option<f64>) -> Result<DensityEstimate> {
    let pts: Vec<&[f64]> = ps.points.iter().map(|p| p.as_slice()).collect();
    density_of(ps.ambient_dim, &pts, ps.extent, radii, center_grid_step)
}

/// Density of the multiset union; the faithful region is the smallest extent.
pub fn union_density(
    sets: &[PointSet],
    radii: &[f64],
    center_grid_step: Option<f64>,
) -> Result<DensityEstimate> {
    let first = sets
        .first()
        .ok_or_else(|| FramexError::precondition("at least one point set is required"))?;
    let k = first.ambient_dim;
    if let Some(bad) = sets.iter().find(|s| s.ambient_dim != k) {
        return Err(FramexError::DimensionMismatch {
            expected: k,
            found: bad.ambient_dim,
        });
    }
    let extent = sets.iter().map(|s| s.extent).fold(f64::INFINITY, f64::min);
    let pts: Vec<&[f64]> = sets
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.as_slice()))
        .collect();
    density_of(k, &pts, extent, radii, center_grid_step)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Separation {
    pub uniformly_discrete: bool,
    /// Minimum pairwise distance; absent with fewer than two points.
    pub separation: Option<f64>,
}

pub fn uniformly_discrete(ps: &PointSet) -> Separation {
    let pts = &ps.points;
    let min = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            pts[i + 1..]
                .iter()
                .map(|q| {
                    pts[i]
                        .iter()
                        .zip(q)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min);
    let separation = min.is_finite().then_some(min);
    Separation {
        uniformly_discrete: separation.is_none_or(|d| d > 0.0),
        separation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    #[test]
    fn ball_volumes() {
        let pi = std::f64::consts::PI;
        assert_eq!(ball_volume(1, 3.0), 6.0);
        assert!((ball_volume(2, 2.0) - 4.0 * pi).abs() < 1e-12);
        assert!((ball_volume(3, 1.0) - 4.0 * pi / 3.0).abs() < 1e-12);
        assert!((ball_volume(4, 1.0) - pi * pi / 2.0).abs() < 1e-12);
    }

    #[test]
    fn integer_lattice_density() {
        let z = PointSet::progression(1.0, 0.0, 100.0).unwrap();
        let e = density(&z, &[10.0, 25.0, 50.0], None).unwrap();
        assert!(close(e.lower, 1.0, 0.05) && close(e.upper, 1.0, 0.05));
        assert_eq!(e.per_window.len(), 3);
        let two = PointSet::progression(2.0, 0.0, 100.0).unwrap();
        let e = density(&two, &[10.0, 25.0, 50.0], None).unwrap();
        assert!(close(e.lower, 0.5, 0.05) && close(e.upper, 0.5, 0.05));
    }

    #[test]
    fn empty_set_has_zero_density() {
        let e = density(&PointSet::new(2, vec![], 10.0).unwrap(), &[5.0], None).unwrap();
        assert_eq!((e.lower, e.upper), (0.0, 0.0));
    }

    #[test]
    fn radius_must_fit() {
        let z = PointSet::progression(1.0, 0.0, 10.0).unwrap();
        assert!(density(&z, &[6.0], None).is_err());
        assert!(PointSet::new(1, vec![vec![11.0]], 10.0).is_err());
    }

    #[test]
    fn union_semantics() {
        let z = PointSet::progression(1.0, 0.0, 100.0).unwrap();
        let h = PointSet::progression(1.0, 0.5, 100.0).unwrap();
        let e = union_density(&[z.clone(), h], &[50.0], None).unwrap();
        assert!(close(e.lower, 2.0, 0.05) && close(e.upper, 2.0, 0.05));
        let empty = PointSet::new(1, vec![], 100.0).unwrap();
        let a = union_density(&[empty, z.clone()], &[50.0], None).unwrap();
        let b = density(&z, &[50.0], None).unwrap();
        assert_eq!(a.per_window, b.per_window);
        let d = union_density(&[z.clone(), z], &[50.0], None).unwrap();
        assert_eq!(d.upper, 2.0 * b.upper);
        let plane = PointSet::new(2, vec![], 100.0).unwrap();
        assert!(union_density(&[plane, b_set()], &[1.0], None).is_err());
    }

    fn b_set() -> PointSet {
        PointSet::progression(1.0, 0.0, 10.0).unwrap()
    }

    #[test]
    fn planar_lattice_density() {
        let mut pts = Vec::new();
        for i in -20..=20 {
            for j in -20..=20 {
                let p = vec![i as f64, j as f64];
                if euclid(&p) <= 20.0 {
                    pts.push(p);
                }
            }
        }
        let ps = PointSet::new(2, pts, 20.0).unwrap();
        let e = density(&ps, &[10.0], Some(0.5)).unwrap();
        assert!(close(e.lower, 1.0, 0.1) && close(e.upper, 1.0, 0.1));
    }

    #[test]
    fn separations() {
        let z = PointSet::new(1, (0..=10).map(|k| vec![k as f64]).collect(), 10.0).unwrap();
        assert_eq!(
            uniformly_discrete(&z),
            Separation {
                uniformly_discrete: true,
                separation: Some(1.0)
            }
        );
        let dup = PointSet::new(1, vec![vec![1.0], vec![1.0]], 2.0).unwrap();
        assert_eq!(dup_sep(&dup), (false, Some(0.0)));

        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let pts: Vec<Vec<f64>> = (0..8)
            .flat_map(|i| (0..8).map(move |j| (i, j)))
            .map(|(i, j)| vec![i as f64 + rng.random_range(-0.2..0.2), j as f64 + rng.random_range(-0.2..0.2)])
            .collect();
        let ps = PointSet::new(2, pts.clone(), 20.0).unwrap();
        let mut best = f64::INFINITY;
        for a in 0..pts.len() {
            for b in 0..pts.len() {
                if a != b {
                    best = best.min(euclid(&[pts[a][0] - pts[b][0], pts[a][1] - pts[b][1]]));
                }
            }
        }
        assert_eq!(uniformly_discrete(&ps).separation, Some(best));
    }

    fn dup_sep(ps: &PointSet) -> (bool, Option<f64>) {
        let s = uniformly_discrete(ps);
        (s.uniformly_discrete, s.separation)
    }
}
