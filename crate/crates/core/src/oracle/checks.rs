use serde::Serialize;

use crate::error::{invalid, Result};
use crate::oracle::grid::{GridDistribution, GridOptions, TailBracket, Window};
use crate::quad;
use crate::steplaw::{Constants, StepLaw};

/// Rows with a relative bracket gap above this are flagged unresolved.
pub const RESOLVED_GAP: f64 = 0.1;

/// Law of `S_n` on a symmetric window `[−half_width, half_width]`.
pub fn walk_grid(step: &StepLaw, n: u32, h: f64, half_width: f64, opts: GridOptions) -> Result<GridDistribution> {
    let window = Window::symmetric(half_width);
    GridDistribution::discretize(step, h, window.lo, window.hi, opts)?.convolve_power(n, Some(window), opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleRow {
    pub n: u32,
    pub x: f64,
    pub lower: f64,
    pub upper: f64,
    pub reference_value: f64,
    pub ratio: f64,
    pub ratio_lower: f64,
    pub ratio_upper: f64,
    pub resolved: bool,
}

pub fn rows_to_csv(rows: &[OracleRow]) -> String {
    let mut out = String::from("n,x,lower,upper,reference_value,ratio,resolved_flag\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.17e},{:.17e},{:.17e},{:.17e},{}\n",
            r.n, r.x, r.lower, r.upper, r.reference_value, r.ratio, r.resolved as u8
        ));
    }
    out
}

fn resolved(b: &TailBracket) -> bool {
    b.lower > 0.0 && b.relative_gap() <= RESOLVED_GAP
}

/// `P[S_n > x]` against the single-big-jump approximation `n P[X > x]`.
pub fn big_jump_table(step: &StepLaw, walk: &GridDistribution, xs: &[f64]) -> Vec<OracleRow> {
    let n = walk.n_fold();
    xs.iter()
        .map(|&x| {
            let b = walk.tail_prob(x);
            let reference = n as f64 * step.survival(x);
            OracleRow {
                n,
                x,
                lower: b.lower,
                upper: b.upper,
                reference_value: reference,
                ratio: b.midpoint() / reference,
                ratio_lower: b.lower / reference,
                ratio_upper: b.upper / reference,
                resolved: resolved(&b),
            }
        })
        .collect()
}

/// Moderate-deviation check: `−log P[S_n > x_n]` over its predicted
/// leading term. For `r > 2/3`, `x_n = c n^{2−1/r}` and the prediction is
/// `(c²/2) n^{3−2/r}`; otherwise `x_n = c sqrt(n log n)` and `(c²/2) log n`.
pub fn gaussian_regime_check(
    step: &StepLaw,
    c: f64,
    n_grid: &[u32],
    h: f64,
    opts: GridOptions,
) -> Result<Vec<OracleRow>> {
    if !(c > 0.0) {
        return Err(invalid(format!("deviation coefficient must be positive, got {c}")));
    }
    let r = step.r;
    n_grid
        .iter()
        .map(|&n| {
            let nf = n as f64;
            let (x, target) = if r > 2.0 / 3.0 {
                (c * nf.powf(2.0 - 1.0 / r), 0.5 * c * c * nf.powf(3.0 - 2.0 / r))
            } else {
                (c * (nf * nf.ln()).sqrt(), 0.5 * c * c * nf.ln())
            };
            let half_width = 8.0 * nf.sqrt() + 2.0 * x + 40.0;
            let walk = walk_grid(step, n, h, half_width, opts)?;
            let b = walk.tail_prob(x);
            let ratio_of = |p: f64| if p > 0.0 { -p.ln() / target } else { f64::INFINITY };
            Ok(OracleRow {
                n,
                x,
                lower: b.lower,
                upper: b.upper,
                reference_value: target,
                ratio: ratio_of(b.midpoint()),
                ratio_lower: ratio_of(b.upper),
                ratio_upper: ratio_of(b.lower),
                resolved: resolved(&b),
            })
        })
        .collect()
}

/// `P[X + X' > x]` by one-dimensional quadrature, independent of the grid.
pub fn two_step_tail(step: &StepLaw, x: f64) -> Result<f64> {
    let inv_r = 1.0 / step.r;
    let scale = step.a * step.lambda;
    let integrand = |u: f64| {
        let v = u.powf(inv_r);
        scale * (-step.lambda * u).exp() * (step.survival(x - v) + step.survival(x + v))
    };
    let kink = x.abs().powf(step.r);
    let head = quad::integrate_pieces(&integrand, &[0.0, kink.max(1e-300)], 1e-16, 1e-13)?;
    let tail = quad::integrate_to_inf(&integrand, kink.max(1e-300), 1e-16, 1e-13)?;
    Ok(head + tail)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MgfBound {
    pub n: u32,
    /// `λ x_n`, the exponential tilt.
    pub tilt: f64,
    /// Truncation point `δ n^{1/r}`.
    pub cutoff: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

/// `E[exp(t X 1{X < cutoff})]`, computed as `1 + E[expm1(t X); X < cutoff]`.
pub fn truncated_mgf(step: &StepLaw, tilt: f64, cutoff: f64) -> Result<f64> {
    if tilt == 0.0 {
        return Ok(1.0);
    }
    let inv_r = 1.0 / step.r;
    let scale = step.a * step.lambda;
    let upper = |u: f64| {
        let e = tilt * u.powf(inv_r);
        if e < 500.0 {
            scale * (-step.lambda * u).exp() * e.exp_m1()
        } else {
            scale * ((e - step.lambda * u).exp() - (-step.lambda * u).exp())
        }
    };
    let lower = |u: f64| scale * (-step.lambda * u).exp() * (-tilt * u.powf(inv_r)).exp_m1();
    let mut pos = 0.0;
    if cutoff > 0.0 {
        let end = cutoff.powf(step.r);
        let mut breaks = vec![0.0];
        let mut b = 1.0 / step.lambda;
        while b < end {
            breaks.push(b);
            b *= 4.0;
        }
        breaks.push(end);
        pos = quad::integrate_pieces(upper, &breaks, 1e-18, 1e-12)?;
    }
    let neg = quad::integrate_to_inf(lower, 0.0, 1e-18, 1e-12)?;
    Ok(1.0 + pos + neg)
}

/// Compares `E[exp(λ x_n X̂)]`, `X̂ = X 1{X < δ n^{1/r}}`,
/// `x_n = α^{r−1} n^{1−1/r}`, with `1 + λ² x_n² / 2 + tol`.
pub fn truncated_mgf_bound(step: &StepLaw, k: &Constants, delta: f64, n: u32, tol: f64) -> Result<MgfBound> {
    let r = step.r;
    let lo = k.alpha / 2f64.powf(1.0 / r);
    if !(delta > lo && delta < k.alpha) {
        return Err(invalid(format!("δ = {delta} outside ({lo}, {})", k.alpha)));
    }
    let nf = n as f64;
    let x_n = k.alpha.powf(r - 1.0) * nf.powf(1.0 - 1.0 / r);
    let tilt = step.lambda * x_n;
    let cutoff = delta * nf.powf(1.0 / r);
    let lhs = truncated_mgf(step, tilt, cutoff)?;
    let rhs = 1.0 + 0.5 * tilt * tilt + tol;
    Ok(MgfBound { n, tilt, cutoff, lhs, rhs, margin: rhs - lhs })
}

#[derive(Debug, Clone, Serialize)]
pub struct SumstatRow {
    pub n: u32,
    pub level: f64,
    pub term_lower: f64,
    pub term_upper: f64,
    pub partial_lower: f64,
    pub partial_upper: f64,
    pub resolved: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SumstatReport {
    pub rows: Vec<SumstatRow>,
    /// Midpoint terms strictly decrease across the resolved rows.
    pub decreasing_on_resolved: bool,
}

/// Partial sums of `m^n P[S_n − α n^{1/r} ≥ ((1+ε) r log m / 2α) n^{2−1/r}]`.
pub fn sumstat_partial(step: &StepLaw, m: f64, eps: f64, n_max: u32, h: f64, opts: GridOptions) -> Result<SumstatReport> {
    if !(eps > 0.0) {
        return Err(invalid(format!("ε must be positive, got {eps}")));
    }
    let r = step.r;
    if !(r > 2.0 / 3.0) {
        return Err(invalid("partial sums apply to r > 2/3 only"));
    }
    if n_max == 0 {
        return Err(invalid("n_max must be at least 1"));
    }
    let k = step.derive_constants(m)?;
    let level = |n: u32| {
        let nf = n as f64;
        k.alpha * nf.powf(1.0 / r) + (1.0 + eps) * r * k.log_m / (2.0 * k.alpha) * nf.powf(2.0 - 1.0 / r)
    };
    let top = level(n_max);
    let window = Window::symmetric(8.0 * (n_max as f64).sqrt() + 2.0 * top + 40.0);
    let one = GridDistribution::discretize(step, h, window.lo, window.hi, opts)?;
    let mut walk = one.clone();
    let mut rows = Vec::with_capacity(n_max as usize);
    let (mut acc_lo, mut acc_hi) = (0.0, 0.0);
    for n in 1..=n_max {
        if n > 1 {
            walk = walk.convolve(&one, Some(window), opts)?;
        }
        let x = level(n);
        let b = walk.tail_prob(x);
        let weight = m.powi(n as i32);
        acc_lo += weight * b.lower;
        acc_hi += weight * b.upper;
        rows.push(SumstatRow {
            n,
            level: x,
            term_lower: weight * b.lower,
            term_upper: weight * b.upper,
            partial_lower: acc_lo,
            partial_upper: acc_hi,
            resolved: resolved(&b),
        });
    }
    let mids: Vec<f64> = rows.iter().filter(|r| r.resolved).map(|r| 0.5 * (r.term_lower + r.term_upper)).collect();
    let decreasing_on_resolved = mids.len() >= 2 && mids.windows(2).all(|w| w[1] < w[0]);
    Ok(SumstatReport { rows, decreasing_on_resolved })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> StepLaw {
        StepLaw::symmetric_weibull(0.5).unwrap()
    }

    #[test]
    fn two_step_quadrature_inside_bracket() {
        let step = half();
        let walk = walk_grid(&step, 2, 1.0 / 64.0, 120.0, GridOptions::default()).unwrap();
        for x in [2.0, 5.0, 10.0] {
            let exact = two_step_tail(&step, x).unwrap();
            let b = walk.tail_prob(x);
            assert!(b.lower * (1.0 - 1e-9) <= exact && exact <= b.upper * (1.0 + 1e-9), "x={x}: {exact} vs {b:?}");
            assert!(b.relative_gap() < 0.05);
        }
    }

    #[test]
    fn two_step_quadrature_sanity() {
        let step = half();
        // symmetric law: P[S_2 > 0] = ½
        assert!((two_step_tail(&step, 0.0).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn degenerate_tilt_is_exactly_one() {
        assert_eq!(truncated_mgf(&half(), 0.0, 3.0).unwrap(), 1.0);
    }

    #[test]
    fn mgf_tends_to_one() {
        let step = half();
        let k = step.derive_constants(2.0).unwrap();
        let delta = 0.5 * (k.alpha / 4.0 + k.alpha);
        let b = truncated_mgf_bound(&step, &k, delta, 1_000_000, 0.0).unwrap();
        assert!(b.lhs - 1.0 <= 1e-6 && b.lhs >= 1.0);
        assert!(truncated_mgf_bound(&step, &k, k.alpha, 16, 0.0).is_err());
        assert!(truncated_mgf_bound(&step, &k, k.alpha / 4.0, 16, 0.0).is_err());
    }

    #[test]
    fn mgf_matches_series_for_small_tilt() {
        // With no effective truncation, E[e^{tX}] − 1 ≈ t²/2 + t⁴ E[X⁴]/24.
        let step = half();
        let t = 1e-3;
        let fourth = libm::tgamma(9.0) / 576.0;
        // beyond 10⁴ the mass is of order e^{−220}
        let v = truncated_mgf(&step, t, 1e4).unwrap() - 1.0;
        let series = t * t / 2.0 + t.powi(4) * fourth / 24.0;
        assert!((v / series - 1.0).abs() < 1e-4, "{v} vs {series}");
    }

    #[test]
    fn gaussian_check_rejects_zero_c() {
        assert!(gaussian_regime_check(&half(), 0.0, &[16], 0.125, GridOptions::default()).is_err());
    }

    #[test]
    fn gaussian_check_deviation_grows_with_n() {
        let rows = gaussian_regime_check(&half(), 1.0, &[16, 64, 256], 1.0 / 128.0, GridOptions::default()).unwrap();
        for w in rows.windows(2) {
            assert!(-w[1].upper.ln() > -w[0].lower.ln(), "{w:?}");
            assert!(w[1].ratio * w[1].reference_value > w[0].ratio * w[0].reference_value);
        }
    }

    #[test]
    fn gaussian_ratio_approaches_one_slowly() {
        let rows = gaussian_regime_check(&half(), 1.0, &[16, 64, 256], 1.0 / 128.0, GridOptions::default()).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].ratio_upper < w[0].ratio_lower, "{w:?}");
        }
        // still well above 1.5 at n = 256: the approach is logarithmic
        assert!(rows[2].ratio_lower > 1.58 && rows[2].ratio_upper < 1.70, "{:?}", rows[2]);
    }

    #[test]
    fn sumstat_terms_rise_before_decaying() {
        let step = StepLaw::symmetric_weibull(0.8).unwrap();
        let rep = sumstat_partial(&step, 2.0, 1.0, 6, 1.0 / 256.0, GridOptions::default()).unwrap();
        assert!(rep.rows.iter().all(|r| r.resolved));
        assert!(rep.rows[2].term_upper < rep.rows[1].term_lower);
        assert!(rep.rows[4].term_lower > rep.rows[2].term_upper);
        assert!(!rep.decreasing_on_resolved);
    }

    #[test]
    fn sumstat_rejects_out_of_scope() {
        let step = StepLaw::symmetric_weibull(0.8).unwrap();
        assert!(sumstat_partial(&step, 2.0, 0.0, 4, 0.125, GridOptions::default()).is_err());
        assert!(sumstat_partial(&half(), 2.0, 1.0, 4, 0.125, GridOptions::default()).is_err());
    }

    #[test]
    fn sumstat_terms_shrink_with_large_eps() {
        let step = StepLaw::symmetric_weibull(0.8).unwrap();
        let rep = sumstat_partial(&step, 2.0, 20.0, 4, 1.0 / 32.0, GridOptions::default()).unwrap();
        assert!(rep.rows[3].term_upper < rep.rows[1].term_lower);
        let small = sumstat_partial(&step, 2.0, 1.0, 4, 1.0 / 32.0, GridOptions::default()).unwrap();
        for (a, b) in rep.rows.iter().zip(&small.rows) {
            assert!(a.term_upper <= b.term_lower);
        }
    }

    #[test]
    fn csv_layout() {
        let step = half();
        let walk = walk_grid(&step, 4, 1.0 / 16.0, 250.0, GridOptions::default()).unwrap();
        let rows = big_jump_table(&step, &walk, &[40.0]);
        let csv = rows_to_csv(&rows);
        assert!(csv.starts_with("n,x,lower,upper,reference_value,ratio,resolved_flag\n4,40,"));
    }
}
