//! The independent-walkers maximum `max_{j ≤ Z_n} S_n^{(j)}` sampled through
//! the oracle quantile, and its stochastic comparison with the BRW maximum.

use rand::RngCore;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::oracle::GridDistribution;
use crate::stats::{dkw_halfwidth, Ecdf};

/// Maximum of `z` independent copies of the walk for a given uniform
/// `u ∈ (0, 1]`: the `x` with `P[S_n > x] = 1 − u^{1/z}`. `u = 1`
/// saturates at the upper grid bound.
pub fn indep_max_from_uniform(walk: &GridDistribution, z: u64, u: f64) -> Result<f64> {
    if z == 0 {
        return Err(invalid("independent-walkers maximum needs Z_n ≥ 1"));
    }
    let p = -(u.ln() / z as f64).exp_m1();
    Ok(walk.survival_quantile(p))
}

pub fn sample_indep_max<R: RngCore + ?Sized>(walk: &GridDistribution, z: u64, rng: &mut R) -> Result<f64> {
    // 53 random bits, mapped to (0, 1]
    let u = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    indep_max_from_uniform(walk, z, u)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominanceRow {
    pub x: f64,
    pub ecdf_brw: f64,
    pub ecdf_indep: f64,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceReport {
    pub rows: Vec<DominanceRow>,
    pub level: f64,
    /// Sum of both DKW half-widths.
    pub band: f64,
    /// Grid points with `ecdf_brw − ecdf_indep < −band`.
    pub violations: Vec<f64>,
}

/// Checks `P[M_n ≤ x] ≥ P[M̃_n ≤ x]` on `grid`.
pub fn dominance_check(brw: &[f64], indep: &[f64], grid: &[f64], level: f64) -> Result<DominanceReport> {
    let eb = Ecdf::new(brw)?;
    let ei = Ecdf::new(indep)?;
    let band = dkw_halfwidth(eb.len(), level) + dkw_halfwidth(ei.len(), level);
    let rows: Vec<DominanceRow> = grid
        .iter()
        .map(|&x| {
            let (b, i) = (eb.eval(x), ei.eval(x));
            DominanceRow { x, ecdf_brw: b, ecdf_indep: i, difference: b - i }
        })
        .collect();
    let violations = rows.iter().filter(|r| r.difference < -band).map(|r| r.x).collect();
    Ok(DominanceReport { rows, level, band, violations })
}

/// Evaluation grid: `points` quantiles of the pooled samples.
pub fn pooled_grid(a: &[f64], b: &[f64], points: usize) -> Result<Vec<f64>> {
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    let e = Ecdf::new(&all)?;
    Ok((1..=points).map(|i| e.quantile(i as f64 / (points + 1) as f64)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{walk_grid, GridOptions};
    use crate::steplaw::StepLaw;

    #[test]
    fn zero_walkers_rejected() {
        let step = StepLaw::symmetric_weibull(0.5).unwrap();
        let g = walk_grid(&step, 1, 0.125, 60.0, GridOptions::default()).unwrap();
        assert!(indep_max_from_uniform(&g, 0, 0.5).is_err());
        assert_eq!(indep_max_from_uniform(&g, 4, 1.0).unwrap(), g.hi());
    }

    #[test]
    fn identical_samples_do_not_violate() {
        let s: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let rep = dominance_check(&s, &s, &pooled_grid(&s, &s, 20).unwrap(), 0.01).unwrap();
        assert!(rep.violations.is_empty());
        assert!(rep.rows.iter().all(|r| r.difference == 0.0));
    }
}
