//! Region-weighted sample allocation.
//!
//! A region's difficulty is `gamma = (delta - L*Delta + eps)^-p` and its
//! importance is `rho = gamma * A`, with `A` the share of episode time the
//! region covers. Minimizing `sum rho_i / sqrt(w_i)` on the simplex gives
//! `w_i = rho_i^(2/3) / sum_j rho_j^(2/3)`.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub start: f64,
    pub end: f64,
    pub delta: f64,
    /// Share of the episode covered by the interval.
    pub a: f64,
    /// Lipschitz constant times the region diameter.
    pub l_times_delta: f64,
    pub eps_num: f64,
    pub p: f64,
}

impl RegionSpec {
    pub fn margin(&self) -> f64 {
        self.delta - self.l_times_delta + self.eps_num
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

pub fn difficulty(region: &RegionSpec) -> Result<f64> {
    let m = region.margin();
    if !(m > 0.0) {
        return Err(Error::Domain(format!(
            "tolerance margin delta - L*Delta + eps must be > 0 (got {m})"
        )));
    }
    Ok(m.powf(-region.p))
}

pub fn optimal_weights(rhos: &[f64]) -> Result<Vec<f64>> {
    if rhos.is_empty() {
        return Err(Error::Empty("rho"));
    }
    if rhos.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::Domain("every rho must be finite and > 0".into()));
    }
    let powered: Vec<f64> = rhos.iter().map(|r| r.powf(2.0 / 3.0)).collect();
    let total: f64 = powered.iter().sum();
    Ok(powered.into_iter().map(|x| x / total).collect())
}

/// `sum_i rho_i / sqrt(w_i)`.
pub fn allocation_objective(rhos: &[f64], w: &[f64]) -> f64 {
    rhos.iter().zip(w).map(|(r, wi)| r / wi.sqrt()).sum()
}

/// Exhaustive minimization of [`allocation_objective`] over the simplex
/// grid with spacing `grid_step`, interior points only.
pub fn brute_force_weights(rhos: &[f64], grid_step: f64) -> Result<Vec<f64>> {
    let k = rhos.len();
    if k == 0 || k > 4 {
        return Err(Error::Domain(format!("brute force supports 1..=4 regions (got {k})")));
    }
    if !(grid_step > 0.0 && grid_step <= 0.1) {
        return Err(Error::Domain(format!("grid step must be in (0, 0.1] (got {grid_step})")));
    }
    if k == 1 {
        return Ok(vec![1.0]);
    }
    let m = (1.0 / grid_step).round() as usize;
    let mut best = (f64::INFINITY, vec![]);
    let mut parts = vec![1usize; k];
    fn walk(i: usize, left: usize, parts: &mut Vec<usize>, m: usize, rhos: &[f64], best: &mut (f64, Vec<f64>)) {
        let k = parts.len();
        if i == k - 1 {
            if left == 0 {
                return;
            }
            parts[i] = left;
            let w: Vec<f64> = parts.iter().map(|&p| p as f64 / m as f64).collect();
            let f = allocation_objective(rhos, &w);
            if f < best.0 {
                *best = (f, w);
            }
            return;
        }
        for p in 1..left {
            parts[i] = p;
            walk(i + 1, left - p, parts, m, rhos, best);
        }
    }
    walk(0, m, &mut parts, m, rhos, &mut best);
    if best.1.is_empty() {
        return Err(Error::Domain("grid too coarse for the number of regions".into()));
    }
    Ok(best.1)
}

/// Builds regions from `(start, end)` intervals that must tile
/// `[0, total]` (in any order). Per-region parameters are matched by index.
pub fn build_regions(
    total: f64,
    intervals: &[(f64, f64)],
    deltas: &[f64],
    eps_num: f64,
    p: f64,
    l_times_delta: &[f64],
) -> Result<Vec<RegionSpec>> {
    if intervals.is_empty() {
        return Err(Error::Empty("regions"));
    }
    if deltas.len() != intervals.len() || l_times_delta.len() != intervals.len() {
        return Err(Error::DimensionMismatch {
            what: "region parameters",
            expected: intervals.len(),
            got: deltas.len().min(l_times_delta.len()),
        });
    }
    if !(total > 0.0) {
        return Err(Error::Domain(format!("total duration must be > 0 (got {total})")));
    }
    let mut order: Vec<usize> = (0..intervals.len()).collect();
    order.sort_by(|&a, &b| intervals[a].0.total_cmp(&intervals[b].0));
    let tol = 1e-9 * total;
    let mut cursor = 0.0;
    for &i in &order {
        let (s, e) = intervals[i];
        if (s - cursor).abs() > tol {
            return Err(Error::Validation(format!(
                "regions must tile [0, {total}] without gaps or overlap (break at {cursor})"
            )));
        }
        if !(e > s) {
            return Err(Error::Validation(format!("empty region [{s}, {e}]")));
        }
        cursor = e;
    }
    if (cursor - total).abs() > tol {
        return Err(Error::Validation(format!("regions end at {cursor}, expected {total}")));
    }
    let regions: Vec<RegionSpec> = intervals
        .iter()
        .enumerate()
        .map(|(i, &(s, e))| RegionSpec {
            start: s,
            end: if (e - total).abs() <= tol { f64::INFINITY } else { e },
            delta: deltas[i],
            a: (e - s) / total,
            l_times_delta: l_times_delta[i],
            eps_num,
            p,
        })
        .collect();
    for r in &regions {
        difficulty(r)?;
    }
    Ok(regions)
}

/// The three-window split of a 5 s episode: the second after the
/// disturbance, the start-up phase and the recovery phase.
pub fn default_regions() -> Vec<RegionSpec> {
    build_regions(5.0, &[(2.0, 3.0), (0.0, 2.0), (3.0, 5.0)], &[0.05, 0.15, 0.30], 0.01, 1.0, &[0.0; 3])
        .expect("valid default regions")
}

pub fn region_of(regions: &[RegionSpec], t: f64) -> Option<usize> {
    regions.iter().position(|r| r.contains(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanKind {
    /// Importance-weighted allocation.
    Optimal,
    /// Allocation proportional to region duration, i.e. plain uniform
    /// sampling over time.
    Uniform,
}

impl std::str::FromStr for PlanKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "optimal" => Ok(PlanKind::Optimal),
            "uniform" => Ok(PlanKind::Uniform),
            _ => Err(Error::Config(format!("unknown sampling plan `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub gamma: Vec<f64>,
    pub rho: Vec<f64>,
    pub weights: Vec<f64>,
    pub budget: usize,
    pub counts: Vec<usize>,
}

impl SamplingPlan {
    pub fn new(regions: &[RegionSpec], kind: PlanKind, budget: usize) -> Result<Self> {
        let gamma = regions.iter().map(difficulty).collect::<Result<Vec<_>>>()?;
        let rho: Vec<f64> = gamma.iter().zip(regions).map(|(g, r)| g * r.a).collect();
        let weights = match kind {
            PlanKind::Optimal => optimal_weights(&rho)?,
            PlanKind::Uniform => {
                let total: f64 = regions.iter().map(|r| r.a).sum();
                regions.iter().map(|r| r.a / total).collect()
            }
        };
        let counts = allocate_counts(&weights, budget)?;
        Ok(SamplingPlan {
            gamma,
            rho,
            weights,
            budget,
            counts,
        })
    }
}

/// `round(w_i * budget)` repaired with the largest-remainder rule so the
/// counts sum to the budget exactly. Ties go to the lower index.
pub fn allocate_counts(weights: &[f64], budget: usize) -> Result<Vec<usize>> {
    if weights.is_empty() {
        return Err(Error::Empty("weights"));
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("weights must be >= 0 and sum to 1 (sum {total})")));
    }
    let exact: Vec<f64> = weights.iter().map(|w| w * budget as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(budget.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    Ok(counts)
}

/// Draws `counts[i]` items without replacement from each region's pool.
pub fn allocate_samples<T: Clone, R: Rng>(pools: &[Vec<T>], counts: &[usize], rng: &mut R) -> Result<Vec<T>> {
    if pools.len() != counts.len() {
        return Err(Error::DimensionMismatch {
            what: "region pools",
            expected: counts.len(),
            got: pools.len(),
        });
    }
    let mut out = Vec::with_capacity(counts.iter().sum());
    for (region, (pool, &c)) in pools.iter().zip(counts).enumerate() {
        if pool.len() < c {
            return Err(Error::InsufficientPool {
                region,
                available: pool.len(),
                requested: c,
            });
        }
        let mut idx = sample(rng, pool.len(), c).into_vec();
        idx.sort_unstable();
        out.extend(idx.into_iter().map(|i| pool[i].clone()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn region(delta: f64, ld: f64, p: f64) -> RegionSpec {
        RegionSpec {
            start: 0.0,
            end: 1.0,
            delta,
            a: 1.0,
            l_times_delta: ld,
            eps_num: 0.01,
            p,
        }
    }

    #[test]
    fn difficulty_values() {
        let g = difficulty(&region(0.05, 0.0, 1.0)).unwrap();
        assert_relative_eq!(g, 1.0 / 0.06, epsilon = 1e-12);
        assert_relative_eq!(g, 16.6667, epsilon = 1e-4);
        assert_eq!(difficulty(&region(0.3, 0.1, 0.0)).unwrap(), 1.0);
        assert!(difficulty(&region(0.3, 0.2, 1.0)).unwrap() > difficulty(&region(0.4, 0.2, 1.0)).unwrap());
        assert!(difficulty(&region(0.05, 0.1, 1.0)).is_err());
    }

    #[test]
    fn closed_form_weights() {
        let w = optimal_weights(&[1.0, 1.0, 1.0]).unwrap();
        assert!(w.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        let w = optimal_weights(&[8.0, 1.0, 1.0]).unwrap();
        assert_relative_eq!(w[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(w[1], 1.0 / 6.0, epsilon = 1e-12);
        assert!(optimal_weights(&[1.0, 0.0]).is_err());
        assert!(optimal_weights(&[]).is_err());
    }

    #[test]
    fn brute_force_agrees() {
        let w = brute_force_weights(&[8.0, 1.0, 1.0], 0.01).unwrap();
        let exact = [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0];
        assert!(w.iter().zip(exact).all(|(a, b)| (a - b).abs() <= 0.01));
        let w = brute_force_weights(&[1.0, 1.0, 1.0], 0.01).unwrap();
        let f = allocation_objective(&[1.0; 3], &w);
        assert!((f - allocation_objective(&[1.0; 3], &[1.0 / 3.0; 3])).abs() < 1e-3);
        assert_eq!(brute_force_weights(&[3.0], 0.01).unwrap(), vec![1.0]);
        assert!(brute_force_weights(&[1.0; 5], 0.1).is_err());
    }

    #[test]
    fn default_partition() {
        let r = default_regions();
        let a: Vec<f64> = r.iter().map(|x| x.a).collect();
        for (x, y) in a.iter().zip([0.2, 0.4, 0.4]) {
            assert_relative_eq!(*x, y, epsilon = 1e-12);
        }
        assert_eq!(r.iter().map(|x| x.delta).collect::<Vec<_>>(), vec![0.05, 0.15, 0.30]);
        assert_eq!(region_of(&r, 2.5), Some(0));
        assert_eq!(region_of(&r, 0.0), Some(1));
        assert_eq!(region_of(&r, 5.0), Some(2));
        let one = build_regions(5.0, &[(0.0, 5.0)], &[0.1], 0.01, 1.0, &[0.0]).unwrap();
        assert_eq!(one[0].a, 1.0);
        assert!(build_regions(5.0, &[(0.0, 2.0), (2.5, 5.0)], &[0.1; 2], 0.01, 1.0, &[0.0; 2]).is_err());
        assert!(build_regions(5.0, &[(0.0, 3.0), (2.0, 5.0)], &[0.1; 2], 0.01, 1.0, &[0.0; 2]).is_err());
    }

    #[test]
    fn count_rounding() {
        assert_eq!(allocate_counts(&[0.4475, 0.3407, 0.2118], 100_000).unwrap(), vec![44750, 34070, 21180]);
        assert_eq!(allocate_counts(&[1.0 / 3.0; 3], 3).unwrap(), vec![1, 1, 1]);
        assert_eq!(allocate_counts(&[1.0 / 3.0; 3], 100).unwrap(), vec![34, 33, 33]);
        for budget in [0, 1, 7, 999] {
            let c = allocate_counts(&[0.5, 0.3, 0.2], budget).unwrap();
            assert_eq!(c.iter().sum::<usize>(), budget);
        }
    }

    #[test]
    fn allocation_draws() {
        let pools = vec![(0..10).collect::<Vec<_>>(), (100..105).collect()];
        let a = allocate_samples(&pools, &[4, 5], &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = allocate_samples(&pools, &[4, 5], &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 9);
        assert_eq!(a.iter().filter(|x| **x >= 100).count(), 5);
        let err = allocate_samples(&pools, &[4, 6], &mut ChaCha8Rng::seed_from_u64(3)).unwrap_err();
        assert!(matches!(err, Error::InsufficientPool { region: 1, .. }));
    }

    #[test]
    fn plans() {
        let r = default_regions();
        let opt = SamplingPlan::new(&r, PlanKind::Optimal, 1000).unwrap();
        assert_relative_eq!(opt.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(opt.weights[0] > opt.weights[1] && opt.weights[1] > opt.weights[2]);
        let uni = SamplingPlan::new(&r, PlanKind::Uniform, 1000).unwrap();
        assert_eq!(uni.counts, vec![200, 400, 400]);
    }
}
