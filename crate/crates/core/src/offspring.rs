//! Reproduction laws, Galton–Watson generation counts and the martingale
//! limit `W = lim m^{-n} Z_n`.

use rand::{Rng, RngCore};
use rand_distr::{Binomial, Distribution, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Default cap on the size of one generation in the particle engine.
pub const DEFAULT_POPULATION_CAP: u64 = 1 << 27;
/// Default cap for count-only simulation, where generations are sampled in
/// aggregate and memory does not grow with `Z_n`.
pub const DEFAULT_COUNT_CAP: u64 = 1 << 52;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OffspringKind {
    /// Every individual has exactly `b` children.
    Deterministic { b: u32 },
    /// `p_k = (1 − s) s^k`, `k ≥ 0`.
    Geometric { s: f64 },
    /// Finite support, `(k, p_k)` pairs.
    Custom { pmf: Vec<(u32, f64)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffspringLaw {
    kind: OffspringKind,
    mean: f64,
    q: f64,
    /// Dense pmf for the bounded kinds; empty for geometric.
    pmf: Vec<f64>,
    cumulative: Vec<f64>,
}

impl OffspringLaw {
    pub fn new(kind: OffspringKind) -> Result<Self> {
        let (pmf, mean) = match &kind {
            OffspringKind::Deterministic { b } => {
                if *b < 2 {
                    return Err(invalid(format!("deterministic law needs b ≥ 2, got {b}")));
                }
                let mut pmf = vec![0.0; *b as usize + 1];
                pmf[*b as usize] = 1.0;
                (pmf, *b as f64)
            }
            OffspringKind::Geometric { s } => {
                if !(*s > 0.0 && *s < 1.0) {
                    return Err(invalid(format!("geometric parameter must lie in (0, 1), got {s}")));
                }
                (Vec::new(), s / (1.0 - s))
            }
            OffspringKind::Custom { pmf: pairs } => {
                let top = pairs.iter().map(|&(k, _)| k).max().ok_or_else(|| invalid("empty pmf"))?;
                let mut pmf = vec![0.0; top as usize + 1];
                for &(k, p) in pairs {
                    if !(p >= 0.0) {
                        return Err(invalid(format!("negative probability {p} at k = {k}")));
                    }
                    pmf[k as usize] += p;
                }
                let total: f64 = pmf.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(invalid(format!("pmf sums to {total}, not 1")));
                }
                let mean = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
                (pmf, mean)
            }
        };
        let p01 = match &kind {
            OffspringKind::Geometric { s } => (1.0 - s) * (1.0 + s),
            _ => pmf.iter().take(2).sum(),
        };
        if p01 >= 1.0 {
            return Err(invalid(format!("p0 + p1 = {p01} must be below 1")));
        }
        if !(mean > 1.0) {
            return Err(invalid(format!("law is not supercritical: m = {mean}")));
        }
        let cumulative = pmf
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        let mut law = Self { kind, mean, q: 0.0, pmf, cumulative };
        law.q = law.extinction_probability()?;
        Ok(law)
    }

    pub fn deterministic(b: u32) -> Result<Self> {
        Self::new(OffspringKind::Deterministic { b })
    }

    pub fn geometric(s: f64) -> Result<Self> {
        Self::new(OffspringKind::Geometric { s })
    }

    pub fn kind(&self) -> &OffspringKind {
        &self.kind
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Extinction probability, the smallest fixed point of the generating function.
    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn pmf(&self, k: u64) -> f64 {
        match &self.kind {
            OffspringKind::Geometric { s } => (1.0 - s) * s.powf(k as f64),
            _ => self.pmf.get(k as usize).copied().unwrap_or(0.0),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.kind, OffspringKind::Deterministic { .. })
    }

    /// Generating function `f(s) = Σ p_k s^k` by direct summation.
    pub fn pgf(&self, x: f64) -> f64 {
        match &self.kind {
            OffspringKind::Geometric { s } => (1.0 - s) / (1.0 - s * x),
            _ => self.pmf.iter().rev().fold(0.0, |acc, &p| acc * x + p),
        }
    }

    fn extinction_probability(&self) -> Result<f64> {
        if self.pmf(0) == 0.0 {
            return Ok(0.0);
        }
        // Iterating from 0 increases monotonically to the minimal fixed point.
        let mut q = 0.0;
        for _ in 0..1_000_000 {
            let next = self.pgf(q);
            if (next - q).abs() <= 1e-16 {
                return Ok(next);
            }
            q = next;
        }
        if (self.pgf(q) - q).abs() <= 1e-14 {
            Ok(q)
        } else {
            Err(Error::Invariant(format!("extinction probability did not converge (q ≈ {q})")))
        }
    }

    /// Offspring count of a single individual.
    #[inline]
    pub fn sample_children<R: RngCore + ?Sized>(&self, rng: &mut R) -> u32 {
        match &self.kind {
            OffspringKind::Deterministic { b } => *b,
            OffspringKind::Geometric { s } => {
                let u: f64 = 1.0 - rng.random::<f64>();
                (u.ln() / s.ln()).floor() as u32
            }
            OffspringKind::Custom { .. } => {
                let u: f64 = rng.random();
                self.cumulative.iter().position(|&c| u < c).unwrap_or(self.cumulative.len() - 1) as u32
            }
        }
    }

    /// Total offspring of `parents` independent individuals, sampled in
    /// aggregate (exactly in distribution).
    pub fn sample_total<R: RngCore + ?Sized>(&self, parents: u64, rng: &mut R) -> u64 {
        if parents == 0 {
            return 0;
        }
        if parents <= 32 {
            return (0..parents).map(|_| self.sample_children(rng) as u64).sum();
        }
        match &self.kind {
            OffspringKind::Deterministic { b } => parents.saturating_mul(*b as u64),
            OffspringKind::Geometric { s } => {
                // Negative binomial as a gamma-mixed Poisson.
                let rate = Gamma::new(parents as f64, s / (1.0 - s)).expect("valid gamma").sample(rng);
                Poisson::new(rate).map(|p| p.sample(rng) as u64).unwrap_or(u64::MAX)
            }
            OffspringKind::Custom { .. } => {
                let mut remaining = parents;
                let mut mass_left = 1.0;
                let mut total = 0u64;
                for (k, &p) in self.pmf.iter().enumerate() {
                    if remaining == 0 {
                        break;
                    }
                    if p == 0.0 {
                        continue;
                    }
                    let share = (p / mass_left).min(1.0);
                    let drawn = if share >= 1.0 {
                        remaining
                    } else {
                        Binomial::new(remaining, share).expect("valid binomial").sample(rng)
                    };
                    total = total.saturating_add(drawn.saturating_mul(k as u64));
                    remaining -= drawn;
                    mass_left -= p;
                }
                total
            }
        }
    }
}

/// Generation sizes of one Galton–Watson path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwPath {
    /// `Z_0 ..= Z_n`, with `Z_0 = 1`.
    pub z: Vec<u64>,
    /// `Y_k = Z_1 + … + Z_k`; generation 0 is excluded, so `Y_0 = 0`.
    pub y: Vec<u64>,
    /// `m^{-n} Z_n`.
    pub w_n: f64,
    pub survived: bool,
}

impl GwPath {
    pub fn from_sizes(z: Vec<u64>, m: f64) -> Self {
        let n = z.len() - 1;
        let y = z
            .iter()
            .enumerate()
            .scan(0u64, |acc, (k, &zk)| {
                if k > 0 {
                    *acc += zk;
                }
                Some(*acc)
            })
            .collect();
        let last = z[n];
        Self { w_n: last as f64 / m.powi(n as i32), survived: last > 0, z, y }
    }

    pub fn generations(&self) -> u32 {
        (self.z.len() - 1) as u32
    }

    pub fn z_n(&self) -> u64 {
        *self.z.last().expect("Z_0 always present")
    }
}

/// Count-only simulation of `Z_0 ..= Z_n`.
pub fn simulate_gw<R: RngCore + ?Sized>(law: &OffspringLaw, n: u32, cap: u64, rng: &mut R) -> Result<GwPath> {
    let mut z = Vec::with_capacity(n as usize + 1);
    z.push(1u64);
    for generation in 1..=n {
        let prev = *z.last().unwrap();
        let next = law.sample_total(prev, rng);
        if next > cap {
            return Err(Error::PopulationCap { cap, generation, size: next });
        }
        z.push(next);
    }
    Ok(GwPath::from_sizes(z, law.mean()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conditioned<T> {
    pub value: T,
    /// Number of generated candidates including the accepted one.
    pub attempts: u64,
}

const MAX_SURVIVAL_ATTEMPTS: u64 = 10_000_000;

/// Rejection sampling: calls `generate` until it yields `Some`. `None`
/// stands for an extinct candidate.
pub fn condition_on_survival<T, F>(mut generate: F) -> Result<Conditioned<T>>
where
    F: FnMut() -> Result<Option<T>>,
{
    for attempts in 1..=MAX_SURVIVAL_ATTEMPTS {
        if let Some(value) = generate()? {
            return Ok(Conditioned { value, attempts });
        }
    }
    Err(Error::Invariant("no surviving path in the attempt budget".into()))
}

/// A path conditioned on `Z_n > 0`.
pub fn simulate_gw_surviving<R: RngCore + ?Sized>(
    law: &OffspringLaw,
    n: u32,
    cap: u64,
    rng: &mut R,
) -> Result<Conditioned<GwPath>> {
    condition_on_survival(|| simulate_gw(law, n, cap, rng).map(|p| p.survived.then_some(p)))
}

/// Empirical sample of `W_{n_w}` from surviving paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WPool {
    /// `(replicate_index, w)` in replicate order.
    pub samples: Vec<(u64, f64)>,
    pub n_w: u32,
    pub law: OffspringKind,
    pub attempts: u64,
    /// Replicate indices dropped because they hit the population cap.
    pub discarded: Vec<u64>,
}

impl WPool {
    /// The pool for `W ≡ 1`.
    pub fn degenerate() -> Self {
        Self {
            samples: vec![(0, 1.0)],
            n_w: 0,
            law: OffspringKind::Deterministic { b: 2 },
            attempts: 1,
            discarded: Vec::new(),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.1)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values().sum::<f64>() / self.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("replicate_index,w_value\n");
        for (i, w) in &self.samples {
            out.push_str(&format!("{i},{w:.17e}\n"));
        }
        out
    }
}

pub fn build_w_pool(law: &OffspringLaw, n_w: u32, count: usize, master_seed: u64, cap: u64) -> Result<WPool> {
    let results: Vec<(u64, Result<Conditioned<GwPath>>)> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut stream = rng::stream(master_seed, "w-pool", i);
            (i, simulate_gw_surviving(law, n_w, cap, &mut stream))
        })
        .collect();
    let mut pool = WPool {
        samples: Vec::with_capacity(count),
        n_w,
        law: law.kind().clone(),
        attempts: 0,
        discarded: Vec::new(),
    };
    for (i, res) in results {
        match res {
            Ok(c) => {
                pool.attempts += c.attempts;
                pool.samples.push((i, c.value.w_n));
            }
            Err(Error::PopulationCap { .. }) => pool.discarded.push(i),
            Err(e) => return Err(e),
        }
    }
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bisect_fixed_point(law: &OffspringLaw) -> f64 {
        // root of f(s) − s in (0, 1), where f(s) − s > 0 left of q
        let (mut lo, mut hi) = (0.0, 1.0 - 1e-9);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if law.pgf(mid) - mid > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn binary_law() {
        let law = OffspringLaw::deterministic(2).unwrap();
        assert_eq!(law.mean(), 2.0);
        assert_eq!(law.q(), 0.0);
    }

    #[test]
    fn geometric_law() {
        let law = OffspringLaw::geometric(2.0 / 3.0).unwrap();
        assert_relative_eq!(law.mean(), 2.0, max_relative = 1e-14);
        assert_relative_eq!(law.q(), 0.5, epsilon = 1e-13);
        assert_relative_eq!(law.q(), bisect_fixed_point(&law), epsilon = 1e-12);
        assert!((law.pgf(law.q()) - law.q()).abs() <= 1e-12);
    }

    #[test]
    fn custom_law() {
        let law = OffspringLaw::new(OffspringKind::Custom { pmf: vec![(0, 0.2), (3, 0.8)] }).unwrap();
        assert_relative_eq!(law.mean(), 2.4, max_relative = 1e-14);
        let oracle = bisect_fixed_point(&law);
        assert_relative_eq!(law.q(), oracle, epsilon = 1e-12);
        // q = 0.2 + 0.8 q³ has the closed-form root (√2 − 1) / 2
        assert_relative_eq!(law.q(), 0.20710678118654752, max_relative = 1e-12);
        assert!((law.pgf(law.q()) - law.q()).abs() <= 1e-12);
    }

    #[test]
    fn rejects_non_supercritical() {
        assert!(OffspringLaw::deterministic(1).is_err());
        assert!(OffspringLaw::geometric(0.5).is_err());
        assert!(OffspringLaw::geometric(0.3).is_err());
        assert!(OffspringLaw::new(OffspringKind::Custom { pmf: vec![(0, 0.5), (1, 0.5)] }).is_err());
        assert!(OffspringLaw::new(OffspringKind::Custom { pmf: vec![(0, 0.3), (1, 0.7)] }).is_err());
        assert!(OffspringLaw::new(OffspringKind::Custom { pmf: vec![(0, 0.5), (4, 0.4)] }).is_err());
    }

    #[test]
    fn deterministic_paths() {
        let law = OffspringLaw::deterministic(2).unwrap();
        let mut rng = rng::stream(1, "gw", 0);
        let p = simulate_gw(&law, 10, DEFAULT_COUNT_CAP, &mut rng).unwrap();
        assert_eq!(p.z_n(), 1024);
        assert_eq!(p.w_n, 1.0);
        assert_eq!(p.y[10], 2046);
        let p0 = simulate_gw(&law, 0, DEFAULT_COUNT_CAP, &mut rng).unwrap();
        assert_eq!(p0.z, vec![1]);
        assert_eq!(p0.y, vec![0]);
        assert!(p0.survived);
    }

    #[test]
    fn cap_is_reported() {
        let law = OffspringLaw::deterministic(2).unwrap();
        let mut rng = rng::stream(1, "gw", 0);
        let err = simulate_gw(&law, 12, 1000, &mut rng).unwrap_err();
        assert!(matches!(err, Error::PopulationCap { generation: 10, size: 1024, .. }));
    }

    #[test]
    fn geometric_mean_generation_size() {
        let law = OffspringLaw::geometric(2.0 / 3.0).unwrap();
        let reps = 10_000;
        let sizes: Vec<f64> = (0..reps)
            .map(|i| {
                let mut rng = rng::stream(5, "gw-mean", i);
                simulate_gw(&law, 12, DEFAULT_COUNT_CAP, &mut rng).unwrap().z_n() as f64
            })
            .collect();
        let mean = sizes.iter().sum::<f64>() / reps as f64;
        let var = sizes.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        assert!((mean - 4096.0).abs() < 4.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn martingale_mean_is_one() {
        let laws = [
            OffspringLaw::deterministic(3).unwrap(),
            OffspringLaw::geometric(2.0 / 3.0).unwrap(),
            OffspringLaw::new(OffspringKind::Custom { pmf: vec![(0, 0.2), (3, 0.8)] }).unwrap(),
            OffspringLaw::new(OffspringKind::Custom { pmf: vec![(1, 0.5), (2, 0.3), (4, 0.2)] }).unwrap(),
        ];
        for (li, law) in laws.iter().enumerate() {
            for n in [5u32, 10, 20] {
                let reps = 4000;
                let ws: Vec<f64> = (0..reps)
                    .map(|i| {
                        let mut rng = rng::stream(9, &format!("mart-{li}-{n}"), i);
                        simulate_gw(law, n, DEFAULT_COUNT_CAP, &mut rng).unwrap().w_n
                    })
                    .collect();
                let mean = ws.iter().sum::<f64>() / reps as f64;
                let var = ws.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
                let se = (var / reps as f64).sqrt().max(1e-12);
                assert!((mean - 1.0).abs() <= 4.0 * se, "law {li}, n {n}: mean {mean}, se {se}");
            }
        }
    }

    #[test]
    fn aggregate_sampling_matches_individual_sampling() {
        let law = OffspringLaw::new(OffspringKind::Custom { pmf: vec![(0, 0.1), (1, 0.3), (3, 0.6)] }).unwrap();
        let geo = OffspringLaw::geometric(0.7).unwrap();
        for l in [&law, &geo] {
            let mut rng = rng::stream(3, "agg", 0);
            let reps = 4000;
            let parents = 500u64;
            let totals: Vec<f64> = (0..reps).map(|_| l.sample_total(parents, &mut rng) as f64).collect();
            let mean = totals.iter().sum::<f64>() / reps as f64;
            let expect = parents as f64 * l.mean();
            let var = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / reps as f64;
            let se = (var / reps as f64).sqrt();
            assert!((mean - expect).abs() < 4.0 * se);
            // variance of a sum of iid counts
            let single_var: f64 = (0..200u64).map(|k| l.pmf(k) * (k as f64 - l.mean()).powi(2)).sum();
            let rel = var / (parents as f64 * single_var);
            assert!((rel - 1.0).abs() < 0.1, "variance ratio {rel}");
        }
    }

    #[test]
    fn survival_conditioning_acceptance() {
        let binary = OffspringLaw::deterministic(2).unwrap();
        let mut rng = rng::stream(4, "cond", 0);
        let c = simulate_gw_surviving(&binary, 8, DEFAULT_COUNT_CAP, &mut rng).unwrap();
        assert_eq!(c.attempts, 1);

        let geo = OffspringLaw::geometric(2.0 / 3.0).unwrap();
        let c0 = simulate_gw_surviving(&geo, 0, DEFAULT_COUNT_CAP, &mut rng).unwrap();
        assert_eq!(c0.attempts, 1);

        let accepted = 4000u64;
        let attempts: u64 = (0..accepted)
            .map(|_| simulate_gw_surviving(&geo, 30, DEFAULT_COUNT_CAP, &mut rng).unwrap().attempts)
            .sum();
        // P[Z_30 > 0] is within 1e-9 of 1 − q = ½.
        let rate = accepted as f64 / attempts as f64;
        let band = 4.0 * (0.25 / attempts as f64).sqrt();
        assert!((rate - 0.5).abs() < band, "acceptance {rate}");
    }

    #[test]
    fn w_pools() {
        let binary = OffspringLaw::deterministic(2).unwrap();
        let pool = build_w_pool(&binary, 30, 50, 1, DEFAULT_COUNT_CAP).unwrap();
        assert!(pool.values().all(|w| w == 1.0));
        assert_eq!(pool.len(), 50);

        let no_death = OffspringLaw::new(OffspringKind::Custom { pmf: vec![(1, 0.4), (2, 0.4), (3, 0.2)] }).unwrap();
        let pool = build_w_pool(&no_death, 30, 4000, 2, DEFAULT_COUNT_CAP).unwrap();
        let mean = pool.mean();
        let var = pool.values().map(|w| (w - mean).powi(2)).sum::<f64>() / (pool.len() - 1) as f64;
        assert!((mean - 1.0).abs() < 4.0 * (var / pool.len() as f64).sqrt());
        assert_eq!(pool.attempts, 4000);

        let geo = OffspringLaw::geometric(2.0 / 3.0).unwrap();
        let n_w = 30u32;
        let pool = build_w_pool(&geo, n_w, 4000, 3, DEFAULT_COUNT_CAP).unwrap();
        assert!(pool.values().all(|w| w > 0.0));
        let lo = (n_w as f64).powf(-6.0);
        let hi = (n_w as f64).powf(6.0);
        let below = pool.values().filter(|&w| w < lo).count() as f64 / pool.len() as f64;
        let outside = pool.values().filter(|&w| w < lo || w > hi).count() as f64 / pool.len() as f64;
        assert!(below <= 0.01);
        assert!(outside <= 1e-3);
        assert!(pool.to_csv().starts_with("replicate_index,w_value\n0,"));
    }

    #[test]
    fn pool_is_scheduling_independent() {
        let geo = OffspringLaw::geometric(0.75).unwrap();
        let a = build_w_pool(&geo, 12, 64, 77, DEFAULT_COUNT_CAP).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(|| build_w_pool(&geo, 12, 64, 77, DEFAULT_COUNT_CAP).unwrap());
        assert_eq!(a, b);
    }
}
