//! Empirical distribution tooling: e.c.d.f.s, Kolmogorov–Smirnov distances,
//! DKW bands, quantiles, bootstrap intervals, Poisson count checks and
//! exceedance counting.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::rng;

pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 1000;

/// Half-width of the DKW band: `P[sup |F_N − F| > ε] ≤ level`.
pub fn dkw_halfwidth(n: usize, level: f64) -> f64 {
    ((2.0 / level).ln() / (2.0 * n as f64)).sqrt()
}

/// Right-continuous empirical c.d.f.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(sample: &[f64]) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::EmptySample);
        }
        if sample.iter().any(|x| x.is_nan()) {
            return Err(invalid("sample contains NaN"));
        }
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// `#{x_i ≤ x} / N`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.len() as f64
    }

    pub fn quantile(&self, p: f64) -> f64 {
        quantile_sorted(&self.sorted, p)
    }

    pub fn ks_to<F: Fn(f64) -> f64>(&self, reference: F) -> f64 {
        ks_sorted(&self.sorted, reference)
    }

    pub fn report<F: Fn(f64) -> f64>(&self, reference: F, level: f64) -> EcdfReport {
        EcdfReport {
            n: self.len(),
            ks_to_reference: self.ks_to(reference),
            dkw_level: level,
            dkw_band: dkw_halfwidth(self.len(), level),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EcdfReport {
    pub n: usize,
    pub ks_to_reference: f64,
    pub dkw_level: f64,
    pub dkw_band: f64,
}

fn ks_sorted<F: Fn(f64) -> f64>(sorted: &[f64], reference: F) -> f64 {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == x {
            j += 1;
        }
        // left limit of F at x and its value at x, against the ecdf jump
        let below = i as f64 / n;
        let at = j as f64 / n;
        d = d.max((reference(x.next_down()) - below).abs()).max((at - reference(x)).abs());
        i = j;
    }
    d.min(1.0)
}

/// `sup_x |F_N(x) − F(x)|` over the jump points of the sample. Ties and
/// discontinuous references are handled through left limits.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &[f64], reference: F) -> Result<f64> {
    Ok(Ecdf::new(sample)?.ks_to(reference))
}

/// Two-sample KS statistic `sup |F_a − F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    let ea = Ecdf::new(a)?;
    let eb = Ecdf::new(b)?;
    let mut d: f64 = 0.0;
    for &x in ea.sorted.iter().chain(eb.sorted.iter()) {
        d = d.max((ea.eval(x) - eb.eval(x)).abs());
    }
    Ok(d)
}

/// Asymptotic critical value of the two-sample KS statistic at `level`.
pub fn ks_two_sample_critical(n1: usize, n2: usize, level: f64) -> f64 {
    let c = (-(level / 2.0).ln() / 2.0).sqrt();
    c * ((n1 + n2) as f64 / (n1 as f64 * n2 as f64)).sqrt()
}

/// Linear-interpolation quantile of an ascending sample.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let k = pos.floor() as usize;
    if k + 1 >= n {
        return sorted[n - 1];
    }
    let frac = pos - k as f64;
    sorted[k] + frac * (sorted[k + 1] - sorted[k])
}

pub fn quantile(sample: &[f64], p: f64) -> Result<f64> {
    Ok(Ecdf::new(sample)?.quantile(p))
}

pub fn median(sample: &[f64]) -> Result<f64> {
    quantile(sample, 0.5)
}

pub fn mean(sample: &[f64]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(sample.iter().sum::<f64>() / sample.len() as f64)
}

/// Unbiased sample variance; zero for a single observation.
pub fn variance(sample: &[f64]) -> Result<f64> {
    let m = mean(sample)?;
    if sample.len() < 2 {
        return Ok(0.0);
    }
    Ok(sample.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (sample.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Percentile bootstrap for a statistic of paired rows. Resample `b` draws
/// its indices from `stream(seed, scope, b)`.
pub fn bootstrap_ci<T, S>(rows: &[T], statistic: S, resamples: usize, level: f64, seed: u64, scope: &str) -> Result<ConfidenceInterval>
where
    T: Sync + Clone,
    S: Fn(&[T]) -> f64 + Sync,
{
    if rows.is_empty() {
        return Err(Error::EmptySample);
    }
    if resamples == 0 {
        return Err(invalid("bootstrap needs at least one resample"));
    }
    let estimate = statistic(rows);
    let mut stats: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .map(|b| {
            let mut s = rng::stream(seed, scope, b);
            let draw: Vec<T> = (0..rows.len()).map(|_| rows[s.random_range(0..rows.len())].clone()).collect();
            statistic(&draw)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(ConfidenceInterval {
        estimate,
        lower: quantile_sorted(&stats, tail),
        upper: quantile_sorted(&stats, 1.0 - tail),
        level,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoissonReport {
    pub replicates: usize,
    pub mean_count: f64,
    pub mean_intensity: f64,
    /// `Σ counts / Σ μ`.
    pub ratio: f64,
    pub ratio_ci: ConfidenceInterval,
    /// Variance of `count − μ` over mean `μ`; near 1 for a Poisson mixture.
    pub dispersion: f64,
    pub dispersion_ci: ConfidenceInterval,
    pub truncation_possible: bool,
}

/// Compares per-replicate counts against their predicted Poisson means.
/// `kth_values[i]` is replicate `i`'s smallest retained order statistic
/// (`None` when fewer than `K` values were seen, so nothing was cut off);
/// `left_end` is the interval's left end on the same scale.
pub fn poisson_count_check(
    counts: &[u64],
    intensities: &[f64],
    kth_values: &[Option<f64>],
    left_end: f64,
    seed: u64,
) -> Result<PoissonReport> {
    if counts.is_empty() {
        return Err(Error::EmptySample);
    }
    if counts.len() != intensities.len() || counts.len() != kth_values.len() {
        return Err(invalid("counts, intensities and order statistics differ in length"));
    }
    let truncation_possible = kth_values.iter().any(|k| k.is_some_and(|v| v > left_end));
    let rows: Vec<(f64, f64)> = counts.iter().zip(intensities).map(|(&c, &mu)| (c as f64, mu)).collect();
    let ratio = |rs: &[(f64, f64)]| {
        let mu: f64 = rs.iter().map(|r| r.1).sum();
        if mu > 0.0 {
            rs.iter().map(|r| r.0).sum::<f64>() / mu
        } else {
            f64::NAN
        }
    };
    let dispersion = |rs: &[(f64, f64)]| {
        let mu: f64 = rs.iter().map(|r| r.1).sum::<f64>() / rs.len() as f64;
        let resid: f64 = rs.iter().map(|r| (r.0 - r.1).powi(2)).sum::<f64>() / rs.len() as f64;
        if mu > 0.0 {
            resid / mu
        } else {
            f64::NAN
        }
    };
    let n = rows.len() as f64;
    Ok(PoissonReport {
        replicates: rows.len(),
        mean_count: rows.iter().map(|r| r.0).sum::<f64>() / n,
        mean_intensity: rows.iter().map(|r| r.1).sum::<f64>() / n,
        ratio: ratio(&rows),
        ratio_ci: bootstrap_ci(&rows, ratio, DEFAULT_BOOTSTRAP_RESAMPLES, 0.95, seed, "poisson-ratio")?,
        dispersion: dispersion(&rows),
        dispersion_ci: bootstrap_ci(&rows, dispersion, DEFAULT_BOOTSTRAP_RESAMPLES, 0.95, seed, "poisson-dispersion")?,
        truncation_possible,
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Exceedances {
    /// Indices with `value > curve` (strict).
    pub above: Vec<usize>,
    /// Indices with `value < curve` (strict).
    pub below: Vec<usize>,
}

/// Strict comparisons of a trajectory against a curve; entries where
/// either side is `None` are skipped.
pub fn exceedance_count(trajectory: &[Option<f64>], curve: &[f64]) -> Result<Exceedances> {
    if trajectory.len() != curve.len() {
        return Err(invalid("trajectory and curve differ in length"));
    }
    let mut out = Exceedances::default();
    for (i, (v, &c)) in trajectory.iter().zip(curve).enumerate() {
        let Some(v) = *v else { continue };
        if v > c {
            out.above.push(i);
        } else if v < c {
            out.below.push(i);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn uniforms(n: usize, seed: u64) -> Vec<f64> {
        let mut s = rng::stream(seed, "stats-test", 0);
        (0..n).map(|_| s.random::<f64>()).collect()
    }

    #[test]
    fn ks_against_own_ecdf_is_zero() {
        let sample = vec![3.0, 1.0, 2.0, 2.0, 5.0];
        let e = Ecdf::new(&sample).unwrap();
        assert_eq!(ks_distance(&sample, |x| e.eval(x)).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_samples() {
        let a = [0.0, 1.0, 2.0];
        let b = [5.0, 6.0];
        let eb = Ecdf::new(&b).unwrap();
        assert_eq!(ks_distance(&a, |x| eb.eval(x)).unwrap(), 1.0);
        assert_eq!(ks_two_sample(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn uniform_ks_below_dkw() {
        let band = dkw_halfwidth(10_000, 0.01);
        assert!((band - 0.016276).abs() < 1e-5);
        let mut misses = 0;
        for seed in 0..100 {
            if ks_distance(&uniforms(10_000, seed), |x| x.clamp(0.0, 1.0)).unwrap() > band {
                misses += 1;
            }
        }
        assert!(misses <= 2, "{misses}");
    }

    #[test]
    fn dkw_coverage_self_test() {
        let n = 500;
        let band = dkw_halfwidth(n, 0.01);
        let violations = (0..1000)
            .filter(|&seed| ks_distance(&uniforms(n, 10_000 + seed), |x| x.clamp(0.0, 1.0)).unwrap() > band)
            .count();
        assert!(violations <= 15, "{violations}");
    }

    #[test]
    fn quantiles() {
        let s = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&s).unwrap(), 2.5);
        assert_eq!(quantile(&s, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&s, 1.0).unwrap(), 4.0);
        assert!(median(&[]).is_err());
    }

    #[test]
    fn bootstrap_is_deterministic_and_covers() {
        let rows = uniforms(400, 3);
        let f = |r: &[f64]| r.iter().sum::<f64>() / r.len() as f64;
        let a = bootstrap_ci(&rows, f, 500, 0.95, 11, "t").unwrap();
        let b = bootstrap_ci(&rows, f, 500, 0.95, 11, "t").unwrap();
        assert_eq!(a, b);
        assert!(a.lower < a.estimate && a.estimate < a.upper);
        assert!(a.contains(0.5));
    }

    #[test]
    fn poisson_zero_intensity() {
        let r = poisson_count_check(&[0, 0, 0], &[0.0, 0.0, 0.0], &[None, None, None], 50.0, 1).unwrap();
        assert_eq!(r.mean_count, 0.0);
        assert!(!r.truncation_possible);
    }

    #[test]
    fn poisson_truncation_flag() {
        let r = poisson_count_check(&[3, 4], &[3.0, 3.0], &[Some(-1.0), Some(0.5)], 0.0, 1).unwrap();
        assert!(r.truncation_possible);
    }

    #[test]
    fn poisson_counts_match() {
        use rand_distr::{Distribution, Poisson};
        let mut s = rng::stream(5, "poisson-test", 0);
        let mus: Vec<f64> = (0..2000).map(|i| 0.5 + (i % 4) as f64).collect();
        let counts: Vec<u64> = mus.iter().map(|&m| Poisson::new(m).unwrap().sample(&mut s) as u64).collect();
        let r = poisson_count_check(&counts, &mus, &vec![None; 2000], 0.0, 2).unwrap();
        assert!(r.ratio_ci.contains(1.0), "{r:?}");
        assert!(r.dispersion_ci.contains(1.0), "{r:?}");
    }

    #[test]
    fn exceedances() {
        let traj = [Some(1.0), Some(2.0), None, Some(4.0)];
        let e = exceedance_count(&traj, &[f64::INFINITY; 4]).unwrap();
        assert!(e.above.is_empty());
        let same = [1.0, 2.0, 0.0, 4.0];
        let e = exceedance_count(&traj, &same).unwrap();
        assert!(e.above.is_empty() && e.below.is_empty());
    }
}
