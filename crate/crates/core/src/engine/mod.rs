//! Layered simulation of the branching random walk.
//!
//! Generation `k + 1` is built from generation `k` alone; the engine keeps one
//! generation of particle states, a running top-`K` of every displacement seen
//! and the checkpoint maxima. Classes of the generation-`n` particles follow the
//! big-jump decomposition with thresholds fixed from the horizon `n`.

mod indep;
mod topk;

use std::collections::BTreeMap;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::offspring::{condition_on_survival, GwPath, OffspringLaw};
use crate::oracle::GridDistribution;
use crate::rng;
use crate::steplaw::{Constants, StepLaw};

pub use indep::{dominance_check, indep_max_from_uniform, pooled_grid, sample_indep_max, DominanceReport, DominanceRow};
pub use topk::TopK;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub delta: f64,
    pub t: f64,
    pub n: u32,
    /// `δ n^{1/r}`.
    pub big_jump_threshold: f64,
    /// `α n^{1/r} − T n^{1/r−1} log n`.
    pub s_n: f64,
}

impl ClassifierConfig {
    /// Midpoint of `(α / 2^{1/r}, α)`.
    pub fn default_delta(k: &Constants) -> f64 {
        0.5 * (k.alpha / 2f64.powf(1.0 / k.r) + k.alpha)
    }

    /// Infimum of admissible `T` for a given `δ`.
    pub fn t_lower_bound(k: &Constants, delta: f64) -> f64 {
        let (a, l, r) = (k.alpha, k.lambda, k.r);
        1.0 + (2.0 * a * l + 3.0 * delta) / (l * delta * (1.0 - r) * a.powf(r - 1.0))
    }

    pub fn new(k: &Constants, n: u32, delta: Option<f64>, t: Option<f64>) -> Result<Self> {
        let delta = delta.unwrap_or_else(|| Self::default_delta(k));
        let lo = k.alpha / 2f64.powf(1.0 / k.r);
        if !(delta > lo && delta < k.alpha) {
            return Err(invalid(format!("δ = {delta} outside ({lo}, {})", k.alpha)));
        }
        let bound = Self::t_lower_bound(k, delta);
        let t = t.unwrap_or(1.05 * bound);
        if !(t > bound) {
            return Err(invalid(format!("T = {t} must exceed {bound}")));
        }
        let nf = n as f64;
        let scale = nf.powf(1.0 / k.r);
        let log_n = if n > 0 { nf.ln() } else { 0.0 };
        Ok(Self {
            delta,
            t,
            n,
            big_jump_threshold: delta * scale,
            s_n: k.alpha * scale - t * nf.powf(1.0 / k.r - 1.0) * log_n,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleState {
    pub position: f64,
    /// Largest displacement on the ancestral line; `0` for the root.
    pub max_jump: f64,
    pub big_jumps: u32,
}

impl ParticleState {
    pub const ROOT: Self = Self { position: 0.0, max_jump: 0.0, big_jumps: 0 };

    #[inline]
    pub fn child(&self, x: f64, threshold: f64) -> Self {
        Self {
            position: self.position + x,
            max_jump: self.max_jump.max(x),
            big_jumps: self.big_jumps + (x > threshold) as u32,
        }
    }

    pub fn rest_sum(&self) -> f64 {
        self.position - self.max_jump
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Class {
    /// No big jump.
    A,
    /// At least two big jumps.
    B,
    /// One big jump, at most `s_n`.
    C,
    /// One big jump, above `s_n`.
    D,
}

impl Class {
    pub const ALL: [Class; 4] = [Class::A, Class::B, Class::C, Class::D];

    pub fn of(p: &ParticleState, cfg: &ClassifierConfig) -> Self {
        match p.big_jumps {
            0 => Class::A,
            1 if p.max_jump <= cfg.s_n => Class::C,
            1 => Class::D,
            _ => Class::B,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassStats {
    pub max: [Option<f64>; 4],
    pub counts: [u64; 4],
}

impl ClassStats {
    fn add(&mut self, class: Class, position: f64) {
        let i = class as usize;
        self.counts[i] += 1;
        self.max[i] = Some(self.max[i].map_or(position, |m| m.max(position)));
    }

    /// Maximum over the nonempty classes.
    pub fn overall_max(&self) -> Option<f64> {
        self.max.iter().flatten().copied().reduce(f64::max)
    }

    pub fn get(&self, class: Class) -> (Option<f64>, u64) {
        (self.max[class as usize], self.counts[class as usize])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedInfo {
    pub master_seed: u64,
    pub scope: String,
    pub replicate: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub n: u32,
    /// `M_k` at each checkpoint; `None` once the population is extinct.
    pub m_at: BTreeMap<u32, Option<f64>>,
    /// `N_k` at each checkpoint; `None` while no displacement exists.
    pub n_at: BTreeMap<u32, Option<f64>>,
    pub n_max: Option<f64>,
    pub classes: ClassStats,
    pub top_k: Vec<f64>,
    pub gw: GwPath,
    pub indep_max: Option<f64>,
    /// Candidates drawn before this one survived (1 when unconditioned).
    pub attempts: u64,
    pub seed: Option<SeedInfo>,
}

impl ReplicateSummary {
    pub fn m_n(&self) -> Option<f64> {
        self.m_at.get(&self.n).copied().flatten()
    }

    pub fn survived(&self) -> bool {
        self.gw.survived
    }

    /// Number of retained displacements strictly above `x`; `None` when the
    /// top-`K` list may have cut some off.
    pub fn count_above(&self, x: f64, k: usize) -> Option<u64> {
        let c = self.top_k.iter().take_while(|&&v| v > x).count();
        (c < k || self.top_k.len() < k).then_some(c as u64)
    }
}

/// Everything that stays fixed across replicates of one experiment.
#[derive(Debug, Clone)]
pub struct RunSpec<'a> {
    pub step: &'a StepLaw,
    pub offspring: &'a OffspringLaw,
    pub classifier: ClassifierConfig,
    /// Sorted, within `[0, n]`, always containing `n`.
    pub checkpoints: Vec<u32>,
    pub top_k: usize,
    pub cap: u64,
    /// Law of `S_n`; when present each replicate also samples `M̃_n`.
    pub indep_walk: Option<&'a GridDistribution>,
}

/// `{n/4, n/2, 3n/4, n}`.
pub fn default_checkpoints(n: u32) -> Vec<u32> {
    let mut v = vec![n / 4, n / 2, 3 * n / 4, n];
    v.dedup();
    v
}

impl<'a> RunSpec<'a> {
    pub fn new(
        step: &'a StepLaw,
        offspring: &'a OffspringLaw,
        classifier: ClassifierConfig,
        checkpoints: Option<Vec<u32>>,
        top_k: usize,
        cap: u64,
    ) -> Result<Self> {
        let n = classifier.n;
        let mut checkpoints = checkpoints.unwrap_or_else(|| default_checkpoints(n));
        if let Some(bad) = checkpoints.iter().find(|&&c| c > n) {
            return Err(invalid(format!("checkpoint {bad} beyond horizon {n}")));
        }
        checkpoints.push(n);
        checkpoints.sort_unstable();
        checkpoints.dedup();
        if top_k == 0 {
            return Err(invalid("K must be at least 1"));
        }
        Ok(Self { step, offspring, classifier, checkpoints, top_k, cap, indep_walk: None })
    }

    pub fn with_indep_walk(mut self, walk: &'a GridDistribution) -> Self {
        self.indep_walk = Some(walk);
        self
    }
}

/// Every displacement of a tiny tree; `generations[k][j] = (parent index in
/// generation k, displacement)` for child `j` of generation `k + 1`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FullTree {
    pub generations: Vec<Vec<(usize, f64)>>,
}

impl FullTree {
    pub fn positions(&self, generation: usize) -> Vec<f64> {
        if generation > self.generations.len() {
            return Vec::new();
        }
        let mut pos = vec![0.0];
        for gen in &self.generations[..generation] {
            pos = gen.iter().map(|&(p, x)| pos[p] + x).collect();
        }
        pos
    }

    pub fn displacements(&self) -> Vec<f64> {
        self.generations.iter().flatten().map(|g| g.1).collect()
    }
}

/// One unconditioned replicate. With `tree`, every displacement is also
/// recorded (only sensible for tiny `n`).
pub fn run_replicate<R: RngCore + ?Sized>(spec: &RunSpec<'_>, rng: &mut R, mut tree: Option<&mut FullTree>) -> Result<ReplicateSummary> {
    let n = spec.classifier.n;
    let threshold = spec.classifier.big_jump_threshold;
    let mut current = vec![ParticleState::ROOT];
    let mut next: Vec<ParticleState> = Vec::new();
    let mut top = TopK::new(spec.top_k);
    let mut n_running: Option<f64> = None;
    let mut z = vec![1u64];
    let mut m_at = BTreeMap::new();
    let mut n_at = BTreeMap::new();
    let mut checkpoints = spec.checkpoints.iter().peekable();
    let deterministic = spec.offspring.is_deterministic();
    let b = if deterministic { spec.offspring.sample_children(rng) } else { 0 };
    for g in 0..=n {
        while checkpoints.next_if(|&&c| c == g).is_some() {
            let m = current.iter().map(|p| p.position).reduce(f64::max);
            m_at.insert(g, m);
            n_at.insert(g, n_running);
        }
        if g == n || current.is_empty() {
            if g < n {
                // extinct: fill the remaining generations and checkpoints
                z.resize(n as usize + 1, 0);
                for &c in checkpoints.by_ref() {
                    m_at.insert(c, None);
                    n_at.insert(c, n_running);
                }
            }
            break;
        }
        next.clear();
        let mut record = tree.as_deref_mut().map(|t| {
            t.generations.push(Vec::new());
            t.generations.last_mut().unwrap()
        });
        for (i, parent) in current.iter().enumerate() {
            let children = if deterministic { b } else { spec.offspring.sample_children(rng) };
            for _ in 0..children {
                let x = spec.step.sample(rng);
                top.offer(x);
                next.push(parent.child(x, threshold));
                if let Some(r) = record.as_deref_mut() {
                    r.push((i, x));
                }
            }
        }
        if next.len() as u64 > spec.cap {
            return Err(Error::PopulationCap { cap: spec.cap, generation: g + 1, size: next.len() as u64 });
        }
        if let Some(mx) = top.max() {
            n_running = Some(mx);
        }
        z.push(next.len() as u64);
        std::mem::swap(&mut current, &mut next);
    }

    let mut classes = ClassStats::default();
    let mut direct: Option<f64> = None;
    for p in &current {
        classes.add(Class::of(p, &spec.classifier), p.position);
        direct = Some(direct.map_or(p.position, |d: f64| d.max(p.position)));
    }
    let z_n = current.len() as u64;
    if classes.overall_max().map(f64::to_bits) != direct.map(f64::to_bits) {
        return Err(Error::Invariant(format!("class maxima {:?} disagree with M_n {:?}", classes.max, direct)));
    }
    if classes.counts.iter().sum::<u64>() != z_n {
        return Err(Error::Invariant("class counts do not sum to Z_n".into()));
    }

    let gw = GwPath::from_sizes(z, spec.offspring.mean());
    let indep_max = match spec.indep_walk {
        Some(walk) if z_n > 0 => Some(sample_indep_max(walk, z_n, rng)?),
        _ => None,
    };
    Ok(ReplicateSummary {
        n,
        m_at,
        n_at,
        n_max: n_running,
        classes,
        top_k: top.to_sorted_desc(),
        gw,
        indep_max,
        attempts: 1,
        seed: None,
    })
}

/// One replicate conditioned on `Z_n > 0`, on its own stream.
pub fn run_surviving(spec: &RunSpec<'_>, master_seed: u64, scope: &str, replicate: u64) -> Result<ReplicateSummary> {
    let mut stream = rng::stream(master_seed, scope, replicate);
    let c = condition_on_survival(|| {
        let s = run_replicate(spec, &mut stream, None)?;
        Ok(s.survived().then_some(s))
    })?;
    let mut s = c.value;
    s.attempts = c.attempts;
    s.seed = Some(SeedInfo { master_seed, scope: scope.to_string(), replicate });
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    /// Accepted replicates in index order.
    pub replicates: Vec<(u64, ReplicateSummary)>,
    /// Indices dropped at the population cap.
    pub discarded: Vec<u64>,
}

impl Batch {
    pub fn summaries(&self) -> impl Iterator<Item = &ReplicateSummary> {
        self.replicates.iter().map(|r| &r.1)
    }

    pub fn acceptance_rate(&self) -> f64 {
        let attempts: u64 = self.summaries().map(|s| s.attempts).sum();
        self.replicates.len() as f64 / attempts.max(1) as f64
    }
}

/// Replicates `0..count` in parallel; the result does not depend on the
/// thread count.
pub fn run_batch(spec: &RunSpec<'_>, master_seed: u64, scope: &str, count: u64) -> Result<Batch> {
    let results: Vec<(u64, Result<ReplicateSummary>)> =
        (0..count).into_par_iter().map(|i| (i, run_surviving(spec, master_seed, scope, i))).collect();
    let mut batch = Batch { replicates: Vec::with_capacity(count as usize), discarded: Vec::new() };
    let mut cap_hit = None;
    for (i, r) in results {
        match r {
            Ok(s) => batch.replicates.push((i, s)),
            Err(e @ Error::PopulationCap { .. }) => {
                batch.discarded.push(i);
                cap_hit.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    // nothing left to analyse: report the cap rather than an empty sample
    match cap_hit {
        Some(e) if batch.replicates.is_empty() => Err(e),
        _ => Ok(batch),
    }
}
