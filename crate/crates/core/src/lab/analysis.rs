//! Statistics computed from replicate batches and oracle grids. Scenarios
//! and the acceptance suite share these.

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{dominance_check, pooled_grid, sample_indep_max, Batch, DominanceReport, ReplicateSummary};
use crate::error::{Error, Result};
use crate::limit_laws::{envelope_curves, normalize, super_limit, EnvelopeKind, EnvelopeSpec, Family, LimitLawContext, Psi, Regime};
use crate::offspring::{simulate_gw_surviving, OffspringLaw};
use crate::oracle::{walk_grid, GridDistribution, GridOptions};
use crate::rng;
use crate::stats::{self, bootstrap_ci, dkw_halfwidth, poisson_count_check, ConfidenceInterval, PoissonReport};
use crate::steplaw::{Constants, StepLaw};

pub fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Which running maximum a checkpoint value refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observable {
    /// `M_k`
    Rightmost,
    /// `N_k`
    BiggestJump,
}

fn checkpoint_values(batch: &Batch, k: u32, obs: Observable) -> Vec<f64> {
    batch
        .summaries()
        .filter_map(|s| match obs {
            Observable::Rightmost => s.m_at.get(&k).copied().flatten(),
            Observable::BiggestJump => s.n_at.get(&k).copied().flatten(),
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct LlnRow {
    pub n: u32,
    pub median_scaled: f64,
    pub alpha: f64,
    pub gap: f64,
    pub relative_gap: f64,
}

/// `median(M_k) / k^{1/r}` against `α`.
pub fn lln_trend(batch: &Batch, k: &Constants, ns: &[u32]) -> Result<Vec<LlnRow>> {
    ns.iter()
        .map(|&n| {
            let scale = (n as f64).powf(1.0 / k.r);
            let v: Vec<f64> = checkpoint_values(batch, n, Observable::Rightmost).iter().map(|m| m / scale).collect();
            let med = stats::median(&v)?;
            let gap = (med - k.alpha).abs();
            Ok(LlnRow { n, median_scaled: med, alpha: k.alpha, gap, relative_gap: gap / k.alpha })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct KsRow {
    pub n: u32,
    pub samples: usize,
    pub ks: f64,
    pub dkw_band_99: f64,
}

/// KS distance of the studentized checkpoint values to the family's limit law.
pub fn ks_trend(batch: &Batch, ctx: &LimitLawContext, obs: Observable, ns: &[u32]) -> Result<Vec<KsRow>> {
    let k = &ctx.constants;
    let regime = Regime::of(k.r);
    let family = match obs {
        Observable::Rightmost => Family::Brw,
        Observable::BiggestJump => Family::BiggestJump,
    };
    let cdf = ctx.limit_cdf(family)?;
    ns.iter()
        .map(|&n| {
            let v = checkpoint_values(batch, n, obs)
                .into_iter()
                .map(|x| normalize(k, x, n, regime, family))
                .collect::<Result<Vec<_>>>()?;
            Ok(KsRow { n, samples: v.len(), ks: stats::ks_distance(&v, &cdf)?, dkw_band_99: dkw_halfwidth(v.len(), 0.01) })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub n: u32,
    /// `median |M_k − N_k| / k^{1/r − 1}`
    pub median: f64,
}

pub fn compare_trend(batch: &Batch, k: &Constants, ns: &[u32]) -> Result<Vec<CompareRow>> {
    ns.iter()
        .map(|&n| {
            let scale = (n as f64).powf(1.0 / k.r - 1.0);
            let v: Vec<f64> = batch
                .summaries()
                .filter_map(|s| Some((s.m_at.get(&n).copied().flatten()? - s.n_at.get(&n).copied().flatten()?).abs() / scale))
                .collect();
            Ok(CompareRow { n, median: stats::median(&v)? })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SuperRow {
    pub n: u32,
    pub median: f64,
    pub target: f64,
    /// `|median − target|`
    pub half_width: f64,
}

pub fn super_trend(batch: &Batch, k: &Constants, ns: &[u32]) -> Result<Vec<SuperRow>> {
    let target = super_limit(k);
    ns.iter()
        .map(|&n| {
            let v = checkpoint_values(batch, n, Observable::Rightmost)
                .into_iter()
                .map(|x| normalize(k, x, n, Regime::Super, Family::Brw))
                .collect::<Result<Vec<_>>>()?;
            let median = stats::median(&v)?;
            Ok(SuperRow { n, median, target, half_width: (median - target).abs() })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PointProcessRow {
    pub x: f64,
    /// `c e^{−x}`
    pub target: f64,
    /// Mean of `Λ_n(x, ∞) / W_n` over replicates, with a 95% bootstrap CI.
    pub mean_scaled_count: ConfidenceInterval,
    pub ratio: f64,
    pub poisson: PoissonReport,
}

/// Counts of studentized displacements above each `x` at the horizon,
/// against `μ(W_n, (x, ∞))`.
pub fn point_process(batch: &Batch, ctx: &LimitLawContext, xs: &[f64], seed: u64) -> Result<Vec<PointProcessRow>> {
    let k = &ctx.constants;
    let c = ctx.mixture_coefficient(Family::BiggestJump);
    let reps: Vec<&ReplicateSummary> = batch.summaries().collect();
    if reps.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = reps[0].n;
    let top_k = reps.iter().map(|s| s.top_k.len()).max().unwrap_or(0);
    let studentize = |v: f64| normalize(k, v, n, Regime::of(k.r), Family::BiggestJump);
    xs.iter()
        .map(|&x| {
            let mut counts = Vec::with_capacity(reps.len());
            let mut mus = Vec::with_capacity(reps.len());
            let mut kth = Vec::with_capacity(reps.len());
            let mut scaled = Vec::with_capacity(reps.len());
            for s in &reps {
                let z: Vec<f64> = s.top_k.iter().map(|&v| studentize(v)).collect::<Result<_>>()?;
                let count = z.iter().filter(|&&v| v > x).count() as u64;
                let w = s.gw.w_n;
                counts.push(count);
                mus.push(ctx.intensity_mu(w, x, f64::INFINITY)?);
                kth.push((z.len() == top_k).then(|| z[z.len() - 1]));
                scaled.push(count as f64 / w);
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let ci = bootstrap_ci(&scaled, mean, stats::DEFAULT_BOOTSTRAP_RESAMPLES, 0.95, seed, &format!("pp-{x}"))?;
            let target = c * (-x).exp();
            Ok(PointProcessRow {
                x,
                target,
                ratio: ci.estimate / target,
                mean_scaled_count: ci,
                poisson: poisson_count_check(&counts, &mus, &kth, x, seed)?,
            })
        })
        .collect()
}

/// Oracle grid wide enough for the maximum of `m^n`-many `n`-step walks.
pub fn indep_walk_grid(step: &StepLaw, k: &Constants, n: u32, h: f64, opts: GridOptions) -> Result<GridDistribution> {
    let nf = n as f64;
    let scale = k.sigma * nf.powf(1.0 / k.r - 1.0);
    let half = 8.0 * nf.sqrt() + 2.0 * k.alpha * nf.powf(1.0 / k.r) + scale * (nf.ln() + 25.0) + 20.0;
    walk_grid(step, n, h, half, opts)
}

/// `M̃_n` for replicates `0..count`, each with its own `Z_n` from a
/// surviving count-only path.
pub fn indep_samples(walk: &GridDistribution, law: &OffspringLaw, n: u32, count: u64, seed: u64, scope: &str, cap: u64) -> Result<Vec<f64>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut s = rng::stream(seed, scope, i);
            let path = simulate_gw_surviving(law, n, cap, &mut s)?.value;
            sample_indep_max(walk, path.z_n(), &mut s)
        })
        .collect()
}

pub fn indep_ks(samples: &[f64], ctx: &LimitLawContext, n: u32) -> Result<KsRow> {
    let k = &ctx.constants;
    let v = samples.iter().map(|&x| normalize(k, x, n, Regime::of(k.r), Family::Indep)).collect::<Result<Vec<_>>>()?;
    let cdf = ctx.limit_cdf(Family::Indep)?;
    Ok(KsRow { n, samples: v.len(), ks: stats::ks_distance(&v, &cdf)?, dkw_band_99: dkw_halfwidth(v.len(), 0.01) })
}

pub fn dominance(batch: &Batch, level: f64) -> Result<DominanceReport> {
    let (brw, ind): (Vec<f64>, Vec<f64>) = batch.summaries().filter_map(|s| Some((s.m_n()?, s.indep_max?))).unzip();
    let grid = pooled_grid(&brw, &ind, 200)?;
    dominance_check(&brw, &ind, &grid, level)
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeRow {
    pub psi: Psi,
    pub integral_converges: bool,
    /// Mean number of `k` with `N_k` strictly above the curve.
    pub mean_exceedances: f64,
}

/// Upper-curve exceedances of the biggest-displacement trajectories.
pub fn envelope_exceedances(batch: &Batch, k: &Constants, ns: &[u32], psis: &[Psi]) -> Result<Vec<EnvelopeRow>> {
    psis.iter()
        .map(|&psi| {
            let spec = EnvelopeSpec::new(EnvelopeKind::UpperPsi, psi)?;
            let curve = envelope_curves(k, &spec, ns, 1.0)?;
            let mut total = 0usize;
            let mut reps = 0usize;
            for s in batch.summaries() {
                let traj: Vec<Option<f64>> = ns.iter().map(|n| s.n_at.get(n).copied().flatten()).collect();
                total += stats::exceedance_count(&traj, &curve)?.above.len();
                reps += 1;
            }
            if reps == 0 {
                return Err(Error::EmptySample);
            }
            Ok(EnvelopeRow { psi, integral_converges: spec.integral_converges, mean_exceedances: total as f64 / reps as f64 })
        })
        .collect()
}

/// Mean number of `k` with `M_k` strictly below the `log log` lower envelope
/// built from each replicate's `W_n`.
pub fn lower_envelope_crossings(batch: &Batch, ctx: &LimitLawContext, ns: &[u32]) -> Result<f64> {
    let k = &ctx.constants;
    let c = ctx.mixture_coefficient(Family::Brw);
    let spec = EnvelopeSpec::new(EnvelopeKind::LowerLoglog, Psi::Zero)?;
    let mut total = 0usize;
    let mut reps = 0usize;
    for s in batch.summaries() {
        let curve = envelope_curves(k, &spec, ns, c * s.gw.w_n)?;
        let traj: Vec<Option<f64>> = ns.iter().map(|n| s.m_at.get(n).copied().flatten()).collect();
        total += stats::exceedance_count(&traj, &curve)?.below.len();
        reps += 1;
    }
    Ok(total as f64 / reps.max(1) as f64)
}

/// Largest `|F_grid(√n z) − Φ(z)|` over a fine `z` grid.
pub fn clt_distance(walk: &GridDistribution) -> f64 {
    let root = (walk.n_fold() as f64).sqrt();
    (-6000..=6000)
        .map(|i| {
            let z = i as f64 * 1e-3;
            (walk.cdf_estimate(root * z) - crate::limit_laws::std_normal_cdf(z)).abs()
        })
        .fold(0.0, f64::max)
}
