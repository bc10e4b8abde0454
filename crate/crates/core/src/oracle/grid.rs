//! Truncated-grid laws with bracketed tails.
//!
//! Cell `k` holds mass located somewhere in `[lo + k·h, lo + k·h + spread]`.
//! Discretization uses exact c.d.f. differences, so `spread = h` for one step
//! and spreads add under convolution. Mass outside the core is never dropped:
//! it goes to `left_tail` (located at or below `left_bound`), `right_tail`
//! (at or above `right_bound`) or `unknown` (location not tracked). Survival
//! queries return a `[lower, upper]` bracket that accounts for all three,
//! for the spread, and for rounding.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::steplaw::StepLaw;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptions {
    pub cell_cap: usize,
    /// Pairwise products above which FFT replaces direct summation.
    pub direct_limit: u64,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self { cell_cap: 1 << 22, direct_limit: 400_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub fn symmetric(half_width: f64) -> Self {
        Self { lo: -half_width, hi: half_width }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailBracket {
    pub lower: f64,
    pub upper: f64,
}

impl TailBracket {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }

    /// `upper / lower − 1`, infinite when the lower end is zero.
    pub fn relative_gap(&self) -> f64 {
        if self.lower > 0.0 {
            self.upper / self.lower - 1.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridDistribution {
    lo: f64,
    step_width: f64,
    spread: f64,
    mass: Vec<f64>,
    left_tail: f64,
    right_tail: f64,
    unknown: f64,
    left_bound: f64,
    right_bound: f64,
    n_fold: u32,
    /// Bound on the 2-norm of the absolute error of `mass` (FFT rounding).
    abs_err_l2: f64,
    /// Relative error bound per cell from direct summation.
    rel_err: f64,
    suffix: Vec<f64>,
}

impl GridDistribution {
    /// One-step law on cells `[lo + k h, lo + (k+1) h)` covering `[lo, hi]`.
    pub fn discretize(step: &StepLaw, h: f64, lo: f64, hi: f64, opts: GridOptions) -> Result<Self> {
        if !(h > 0.0) || !(lo < 0.0 && 0.0 < hi) {
            return Err(invalid(format!("need h > 0 and lo < 0 < hi, got h={h}, [{lo}, {hi}]")));
        }
        let cells = ((hi - lo) / h).ceil() as usize;
        if cells > opts.cell_cap {
            return Err(Error::CellCap { cap: opts.cell_cap, requested: cells });
        }
        let edge = |k: usize| lo + k as f64 * h;
        let mass: Vec<f64> = (0..cells).map(|k| step.interval_mass(edge(k), edge(k + 1))).collect();
        let top = edge(cells);
        Ok(Self::assemble(GridParts {
            lo,
            step_width: h,
            spread: h,
            mass,
            left_tail: step.cdf(lo),
            right_tail: step.survival(top),
            unknown: 0.0,
            left_bound: lo,
            right_bound: top,
            n_fold: 1,
            abs_err_l2: 0.0,
            rel_err: 4.0 * f64::EPSILON,
        }))
    }

    /// A law from explicit atoms on a grid (atom `k` at `lo + k h`). Used for
    /// brute-force soundness checks with discrete laws.
    pub fn from_atoms(lo: f64, h: f64, mass: Vec<f64>) -> Result<Self> {
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-12 || mass.iter().any(|&p| p < 0.0) {
            return Err(invalid("atoms must be nonnegative and sum to 1"));
        }
        let top = lo + (mass.len() - 1) as f64 * h;
        Ok(Self::assemble(GridParts {
            lo,
            step_width: h,
            spread: 0.0,
            mass,
            left_tail: 0.0,
            right_tail: 0.0,
            unknown: 0.0,
            left_bound: lo,
            right_bound: top,
            n_fold: 1,
            abs_err_l2: 0.0,
            rel_err: 0.0,
        }))
    }

    fn assemble(p: GridParts) -> Self {
        let mut suffix = vec![0.0; p.mass.len() + 1];
        for k in (0..p.mass.len()).rev() {
            suffix[k] = suffix[k + 1] + p.mass[k];
        }
        let sum_err = p.mass.len() as f64 * f64::EPSILON;
        Self {
            lo: p.lo,
            step_width: p.step_width,
            spread: p.spread,
            mass: p.mass,
            left_tail: p.left_tail,
            right_tail: p.right_tail,
            unknown: p.unknown,
            left_bound: p.left_bound,
            right_bound: p.right_bound,
            n_fold: p.n_fold,
            abs_err_l2: p.abs_err_l2,
            rel_err: p.rel_err + sum_err,
            suffix,
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    /// Upper end of the core support.
    pub fn hi(&self) -> f64 {
        self.lo + (self.mass.len().saturating_sub(1)) as f64 * self.step_width + self.spread
    }

    pub fn step_width(&self) -> f64 {
        self.step_width
    }

    pub fn spread(&self) -> f64 {
        self.spread
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn left_tail(&self) -> f64 {
        self.left_tail
    }

    pub fn right_tail(&self) -> f64 {
        self.right_tail
    }

    pub fn unknown(&self) -> f64 {
        self.unknown
    }

    pub fn n_fold(&self) -> u32 {
        self.n_fold
    }

    pub fn core_mass(&self) -> f64 {
        self.suffix[0]
    }

    pub fn total_mass(&self) -> f64 {
        self.core_mass() + self.left_tail + self.right_tail + self.unknown
    }

    #[inline]
    fn edge(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.step_width
    }

    /// Midpoint of the location window of cell `k`.
    #[inline]
    pub fn cell_center(&self, k: usize) -> f64 {
        self.edge(k) + 0.5 * self.spread
    }

    /// First cell index whose left edge is strictly greater than `x`.
    fn first_edge_above(&self, x: f64) -> usize {
        let len = self.mass.len();
        if x < self.lo {
            return 0;
        }
        let guess = ((x - self.lo) / self.step_width).floor();
        if !(guess < len as f64) {
            return len;
        }
        let mut k = guess.max(0.0) as usize;
        while k > 0 && self.edge(k - 1) > x {
            k -= 1;
        }
        while k < len && self.edge(k) <= x {
            k += 1;
        }
        k
    }

    fn abs_err(&self, cells: usize) -> f64 {
        (cells as f64).sqrt() * self.abs_err_l2
    }

    /// Bracket for `P[S > x]`.
    pub fn tail_prob(&self, x: f64) -> TailBracket {
        let len = self.mass.len();
        let k_low = self.first_edge_above(x);
        let k_up = self.first_edge_above(x - self.spread).min(k_low);
        let mut lower = self.suffix[k_low];
        if x < self.right_bound {
            lower += self.right_tail;
        }
        let mut upper = self.suffix[k_up] + self.right_tail + self.unknown;
        if x < self.left_bound {
            upper += self.left_tail;
        }
        lower = lower * (1.0 - self.rel_err) - self.abs_err(len - k_low);
        upper = upper * (1.0 + self.rel_err) + self.abs_err(len - k_up);
        TailBracket { lower: lower.clamp(0.0, 1.0), upper: upper.clamp(0.0, 1.0) }
    }

    /// Piecewise-linear survival estimate through the cell centers.
    pub fn survival_estimate(&self, x: f64) -> f64 {
        let len = self.mass.len();
        if len == 0 {
            return self.right_tail;
        }
        let knot = |k: usize| self.suffix[k] - 0.5 * self.mass[k] + self.right_tail;
        let top = self.suffix[0] + self.right_tail;
        let first_center = self.cell_center(0);
        if x <= self.lo {
            return top;
        }
        if x <= first_center {
            let t = (x - self.lo) / (first_center - self.lo).max(f64::MIN_POSITIVE);
            return top + t * (knot(0) - top);
        }
        let last_center = self.cell_center(len - 1);
        if x >= self.hi() {
            return self.right_tail;
        }
        if x >= last_center {
            let span = (self.hi() - last_center).max(f64::MIN_POSITIVE);
            let t = (x - last_center) / span;
            return knot(len - 1) + t * (self.right_tail - knot(len - 1));
        }
        let pos = (x - first_center) / self.step_width;
        let k = (pos.floor() as usize).min(len - 2);
        let t = pos - k as f64;
        knot(k) + t * (knot(k + 1) - knot(k))
    }

    pub fn cdf_estimate(&self, x: f64) -> f64 {
        1.0 - self.survival_estimate(x)
    }

    /// Smallest `x` on the interpolated curve with `survival_estimate(x) = p`.
    /// Saturates at the core bounds: `p = 0` maps to `hi()`.
    pub fn survival_quantile(&self, p: f64) -> f64 {
        let len = self.mass.len();
        let top = self.suffix[0] + self.right_tail;
        if len == 0 || p >= top {
            return self.lo;
        }
        if p <= self.right_tail {
            return self.hi();
        }
        let knot = |k: usize| self.suffix[k] - 0.5 * self.mass[k] + self.right_tail;
        if p >= knot(0) {
            let t = (top - p) / (top - knot(0));
            return self.lo + t * (self.cell_center(0) - self.lo);
        }
        if p <= knot(len - 1) {
            let t = (knot(len - 1) - p) / (knot(len - 1) - self.right_tail);
            let last = self.cell_center(len - 1);
            return last + t * (self.hi() - last);
        }
        // knot(lo_k) > p ≥ knot(hi_k)
        let (mut lo_k, mut hi_k) = (0usize, len - 1);
        while hi_k - lo_k > 1 {
            let mid = (lo_k + hi_k) / 2;
            if knot(mid) > p {
                lo_k = mid;
            } else {
                hi_k = mid;
            }
        }
        let (a, b) = (knot(lo_k), knot(hi_k));
        let t = if a > b { (a - p) / (a - b) } else { 0.0 };
        self.cell_center(lo_k) + t * self.step_width
    }

    /// Raw moment of the core measure placed at cell centers.
    pub fn moment(&self, order: i32) -> f64 {
        self.mass.iter().enumerate().map(|(k, &p)| p * self.cell_center(k).powi(order)).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.moment(1);
        self.moment(2) - mean * mean
    }

    pub fn convolve(&self, other: &Self, window: Option<Window>, opts: GridOptions) -> Result<Self> {
        if (self.step_width - other.step_width).abs() > 1e-12 * self.step_width {
            return Err(invalid("grid spacings differ"));
        }
        let (a, b) = (self, other);
        let len = (a.mass.len() + b.mass.len()).saturating_sub(1);
        if len > opts.cell_cap.saturating_mul(2) {
            return Err(Error::CellCap { cap: opts.cell_cap, requested: len });
        }
        let products = a.mass.len() as u64 * b.mass.len() as u64;
        let (core, fft_err, direct_rel) = if products <= opts.direct_limit {
            (direct_convolution(&a.mass, &b.mass), 0.0, a.mass.len().min(b.mass.len()) as f64 * f64::EPSILON)
        } else {
            let (c, err) = fft_convolution(&a.mass, &b.mass);
            (c, err, 0.0)
        };
        let (ta, tb) = (a.core_mass(), b.core_mass());
        let total_a = a.total_mass();
        let total_b = b.total_mass();
        let unknown = ta * (b.right_tail + b.left_tail + b.unknown)
            + tb * (a.right_tail + a.left_tail + a.unknown)
            + a.right_tail * (b.left_tail + b.unknown)
            + a.left_tail * (b.right_tail + b.unknown)
            + a.unknown * (b.right_tail + b.left_tail + b.unknown);
        // Young: |e * b|_2 ≤ |e|_2 |b|_1
        let abs_err_l2 = a.abs_err_l2 * total_b + b.abs_err_l2 * total_a + fft_err + a.abs_err_l2 * b.abs_err_l2;
        let parts = GridParts {
            lo: a.lo + b.lo,
            step_width: a.step_width,
            spread: a.spread + b.spread,
            mass: core,
            left_tail: a.left_tail * b.left_tail,
            right_tail: a.right_tail * b.right_tail,
            unknown,
            left_bound: a.left_bound + b.left_bound,
            right_bound: a.right_bound + b.right_bound,
            n_fold: a.n_fold + b.n_fold,
            abs_err_l2,
            rel_err: a.rel_err + b.rel_err + direct_rel,
        };
        let parts = match window {
            Some(w) => parts.truncate(w),
            None => parts,
        };
        if parts.mass.len() > opts.cell_cap {
            return Err(Error::CellCap { cap: opts.cell_cap, requested: parts.mass.len() });
        }
        Ok(Self::assemble(parts))
    }

    /// `n`-fold convolution power by repeated squaring, re-truncating every
    /// intermediate result to `window`.
    pub fn convolve_power(&self, n: u32, window: Option<Window>, opts: GridOptions) -> Result<Self> {
        if n == 0 {
            return Err(invalid("convolution power must be at least 1"));
        }
        let mut result: Option<Self> = None;
        let mut base = self.clone();
        let mut k = n;
        loop {
            if k & 1 == 1 {
                result = Some(match result {
                    None => base.clone(),
                    Some(r) => r.convolve(&base, window, opts)?,
                });
            }
            k >>= 1;
            if k == 0 {
                break;
            }
            base = base.convolve(&base, window, opts)?;
        }
        Ok(result.expect("n ≥ 1"))
    }
}

struct GridParts {
    lo: f64,
    step_width: f64,
    spread: f64,
    mass: Vec<f64>,
    left_tail: f64,
    right_tail: f64,
    unknown: f64,
    left_bound: f64,
    right_bound: f64,
    n_fold: u32,
    abs_err_l2: f64,
    rel_err: f64,
}

impl GridParts {
    /// Moves cells lying entirely outside `w` into the tails.
    fn truncate(mut self, w: Window) -> Self {
        let h = self.step_width;
        let len = self.mass.len();
        let edge = |k: usize| self.lo + k as f64 * h;
        let mut first = 0;
        while first < len && edge(first) + self.spread <= w.lo {
            first += 1;
        }
        let mut end = len;
        while end > first && edge(end - 1) >= w.hi {
            end -= 1;
        }
        if first > 0 {
            self.left_bound = self.left_bound.max(edge(first - 1) + self.spread);
            self.left_tail += self.mass[..first].iter().sum::<f64>();
        }
        if end < len {
            self.right_bound = self.right_bound.min(edge(end));
            self.right_tail += self.mass[end..].iter().rev().sum::<f64>();
        }
        if first > 0 || end < len {
            self.lo = edge(first);
            self.mass = self.mass[first..end].to_vec();
        }
        self
    }
}

fn direct_convolution(a: &[f64], b: &[f64]) -> Vec<f64> {
    // a window can truncate a grid to no cells at all
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    for (i, &s) in short.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        for (o, &l) in out[i..i + long.len()].iter_mut().zip(long) {
            *o += s * l;
        }
    }
    out
}

/// FFT product with a conservative bound on the 2-norm of the rounding error.
fn fft_convolution(a: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
    let len = a.len() + b.len() - 1;
    let size = len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);
    let load = |v: &[f64]| {
        let mut buf = vec![Complex::new(0.0, 0.0); size];
        for (slot, &x) in buf.iter_mut().zip(v) {
            slot.re = x;
        }
        buf
    };
    let mut fa = load(a);
    let mut fb = load(b);
    forward.process(&mut fa);
    forward.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= *y;
    }
    inverse.process(&mut fa);
    let scale = 1.0 / size as f64;
    let out = fa[..len].iter().map(|c| (c.re * scale).max(0.0)).collect();
    let norm1 = |v: &[f64]| v.iter().sum::<f64>();
    let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let log_n = (size as f64).log2().max(1.0);
    let err = 5.0 * f64::EPSILON * log_n * (norm1(a) * norm2(b) + norm2(a) * norm1(b));
    (out, err)
}
