//! Step distribution with an exactly known stretched-exponential upper tail.
//!
//! The only family implemented is the standardized symmetric Weibull law
//! `X = s · Wb / sd_base`, where `s` is a fair sign, `P[Wb ≥ t] = exp(−t^r)`
//! and `sd_base = sqrt(Γ(1 + 2/r))`. For `x > 0` this gives
//! `P[X ≥ x] = ½ · exp(−λ x^r)` with `λ = sd_base^r`, so the prefactor is the
//! constant `a = ½` rather than merely tending to it.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quad;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyTag {
    SymmetricWeibull,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLaw {
    pub family_tag: FamilyTag,
    pub r: f64,
    pub lambda: f64,
    pub a: f64,
    pub sd_base: f64,
    #[serde(skip)]
    inv_r: f64,
}

/// Constants shared by every limit law for a given `(step law, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Leading speed: `M_n / n^{1/r} → α`.
    pub alpha: f64,
    /// Scale of the second-order fluctuations.
    pub sigma: f64,
    pub log_m: f64,
    pub m: f64,
    pub lambda: f64,
    pub a: f64,
    pub r: f64,
}

impl StepLaw {
    pub fn symmetric_weibull(r: f64) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(invalid(format!("tail exponent r must lie in (0, 1), got {r}")));
        }
        let sd_base = libm::tgamma(1.0 + 2.0 / r).sqrt();
        Ok(Self {
            family_tag: FamilyTag::SymmetricWeibull,
            r,
            lambda: sd_base.powf(r),
            a: 0.5,
            sd_base,
            inv_r: 1.0 / r,
        })
    }

    /// Re-derives the cached exponent after deserialization.
    pub fn rebuild(self) -> Result<Self> {
        Self::symmetric_weibull(self.r)
    }

    /// Maps a uniform `u ∈ (0, 1]` and a sign to a step by inverse transform.
    #[inline]
    pub fn from_uniform(&self, u: f64, positive: bool) -> f64 {
        let e = -u.ln();
        // r = 1/2 is the workhorse; avoid powf there.
        let magnitude = if self.inv_r == 2.0 { e * e } else { e.powf(self.inv_r) } / self.sd_base;
        if positive {
            magnitude
        } else {
            -magnitude
        }
    }

    /// Draws one step. A single 64-bit word supplies both the sign (lowest
    /// bit) and a 53-bit uniform on `(0, 1]` (highest bits).
    #[inline]
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        let bits = rng.next_u64();
        let u = ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        self.from_uniform(u, bits & 1 == 1)
    }

    /// `a · exp(−λ |x|^r)`: the mass beyond `|x|` on one side.
    #[inline]
    pub fn one_sided_tail(&self, x: f64) -> f64 {
        self.a * (-self.lambda * x.abs().powf(self.r)).exp()
    }

    /// `P[X ≥ x]`. At `x = 0` the right-limit value `½` is returned.
    pub fn survival(&self, x: f64) -> f64 {
        if x >= 0.0 {
            self.one_sided_tail(x)
        } else {
            1.0 - self.one_sided_tail(x)
        }
    }

    /// `P[X < x]`, computed without cancellation on the left half-line.
    pub fn cdf(&self, x: f64) -> f64 {
        if x >= 0.0 {
            1.0 - self.one_sided_tail(x)
        } else {
            self.one_sided_tail(x)
        }
    }

    /// Probability of `[x1, x2)` with full relative precision on either side.
    pub fn interval_mass(&self, x1: f64, x2: f64) -> f64 {
        if x2 <= x1 {
            return 0.0;
        }
        if x1 >= 0.0 {
            tail_difference(self, x1, x2)
        } else if x2 <= 0.0 {
            tail_difference(self, -x2, -x1)
        } else {
            1.0 - self.one_sided_tail(x1) - self.one_sided_tail(x2)
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        let t = x.abs();
        if t == 0.0 {
            return f64::INFINITY;
        }
        self.a * self.lambda * self.r * t.powf(self.r - 1.0) * (-self.lambda * t.powf(self.r)).exp()
    }

    /// `E[g(X)]` by quadrature after the substitution `u = |x|^r`, which
    /// removes the density singularity at the origin.
    pub fn expect<G: Fn(f64) -> f64>(&self, g: G, abs_tol: f64) -> Result<f64> {
        let scale = self.a * self.lambda;
        quad::integrate_to_inf(
            |u| {
                let x = u.powf(self.inv_r);
                scale * (-self.lambda * u).exp() * (g(x) + g(-x))
            },
            0.0,
            abs_tol,
            1e-13,
        )
    }

    pub fn derive_constants(&self, m: f64) -> Result<Constants> {
        if !(m > 1.0) || !m.is_finite() {
            return Err(invalid(format!("branching mean must exceed 1, got {m}")));
        }
        let log_m = m.ln();
        let alpha = (log_m / self.lambda).powf(1.0 / self.r);
        let sigma = alpha.powf(1.0 - self.r) / (self.lambda * self.r);
        Ok(Constants {
            alpha,
            sigma,
            log_m,
            m,
            lambda: self.lambda,
            a: self.a,
            r: self.r,
        })
    }
}

/// `a e^{−λ x1^r} − a e^{−λ x2^r}` for `0 ≤ x1 < x2`.
fn tail_difference(law: &StepLaw, x1: f64, x2: f64) -> f64 {
    let e1 = law.lambda * x1.powf(law.r);
    let e2 = law.lambda * x2.powf(law.r);
    law.a * (-e1).exp() * -(-(e2 - e1)).exp_m1()
}

impl Constants {
    /// Builds constants directly from `(α, λ, r, m)`; used to inject
    /// perturbed values in sensitivity checks.
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_relative_eq;

    fn half() -> StepLaw {
        StepLaw::symmetric_weibull(0.5).unwrap()
    }

    #[test]
    fn r_half_constants() {
        let law = half();
        assert_relative_eq!(law.sd_base, 24f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(law.sd_base, 4.898979, epsilon = 1e-6);
        assert_relative_eq!(law.lambda, 2.213364, epsilon = 1e-6);
        assert_eq!(law.a, 0.5);
        assert_relative_eq!(law.survival(1.0), 0.5 * (-2.213364f64).exp(), epsilon = 1e-7);
        assert_relative_eq!(law.survival(1.0), 0.054666126555313328, max_relative = 1e-13);
        assert_relative_eq!(law.survival(4.0), 0.0059767707851230660, max_relative = 1e-13);
    }

    #[test]
    fn rejects_bad_exponent() {
        for r in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(StepLaw::symmetric_weibull(r).is_err());
        }
    }

    #[test]
    fn survival_limits_and_convention() {
        let law = half();
        assert_eq!(law.survival(0.0), 0.5);
        assert!(law.survival(1e-300) <= 0.5 && law.survival(1e-300) > 0.4999999);
        assert!(law.survival(1e9) < 1e-300);
        assert_eq!(law.survival(f64::INFINITY), 0.0);
    }

    #[test]
    fn inverse_transform_example() {
        let law = half();
        let x = law.from_uniform((-1.0f64).exp(), true);
        assert_relative_eq!(x, 1.0 / law.sd_base, max_relative = 1e-14);
        assert_relative_eq!(x, 0.204124, epsilon = 1e-6);
        assert_relative_eq!(law.survival(x), 0.5 * (-1.0f64).exp(), max_relative = 1e-14);
        assert_eq!(law.from_uniform((-1.0f64).exp(), false), -x);
    }

    #[test]
    fn exact_prefactor_identity() {
        for r in [0.3, 0.5, 2.0 / 3.0, 0.8] {
            let law = StepLaw::symmetric_weibull(r).unwrap();
            for x in [0.01, 0.5, 1.0, 3.0, 10.0, 50.0] {
                let ratio = law.survival(x) * (law.lambda * f64::powf(x, r)).exp() / law.a;
                assert_relative_eq!(ratio, 1.0, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn unit_variance_by_quadrature() {
        for r in [0.3, 0.5, 2.0 / 3.0, 0.8] {
            let law = StepLaw::symmetric_weibull(r).unwrap();
            let mean = law.expect(|x| x, 1e-12).unwrap();
            let second = law.expect(|x| x * x, 1e-12).unwrap();
            let total = law.expect(|_| 1.0, 1e-13).unwrap();
            assert!(mean.abs() < 1e-10, "r={r}: mean {mean}");
            assert!((second - 1.0).abs() < 1e-8, "r={r}: second moment {second}");
            assert!((total - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn interval_mass_matches_cdf_difference() {
        let law = half();
        for (x1, x2) in [(-3.0, -1.0), (-0.5, 0.25), (2.0, 7.5)] {
            assert_relative_eq!(law.interval_mass(x1, x2), law.cdf(x2) - law.cdf(x1), max_relative = 1e-12);
        }
        assert_eq!(law.interval_mass(1.0, 1.0), 0.0);
    }

    #[test]
    fn derive_constants_examples() {
        let law = half();
        let c = law.derive_constants(2.0).unwrap();
        assert_relative_eq!(c.alpha, (2f64.ln() / law.lambda).powi(2), max_relative = 1e-14);
        assert_relative_eq!(c.alpha, 0.098072060790158158, max_relative = 1e-13);
        assert_relative_eq!(c.sigma, 0.28297615150344426, max_relative = 1e-13);
        assert!(law.derive_constants(1.0).is_err());
        assert!(law.derive_constants(0.5).is_err());

        // λ = log m forces α = 1; α = λ = 1, r = ½ gives σ = 2.
        let mut unit = half();
        unit.lambda = 3f64.ln();
        let c = unit.derive_constants(3.0).unwrap();
        assert_relative_eq!(c.alpha, 1.0, max_relative = 1e-14);
        unit.lambda = 1.0;
        let c = unit.derive_constants(std::f64::consts::E).unwrap();
        assert_relative_eq!(c.sigma, 2.0, max_relative = 1e-14);
    }

    #[test]
    fn survival_nonincreasing_on_grid() {
        let law = StepLaw::symmetric_weibull(0.7).unwrap();
        let xs: Vec<f64> = (-400..=400).map(|i| i as f64 * 0.05).collect();
        assert!(xs.windows(2).all(|w| law.survival(w[0]) >= law.survival(w[1])));
    }

    #[test]
    fn sampler_agrees_with_survival() {
        let law = half();
        let mut rng = rng::stream(11, "steplaw-test", 0);
        let n = 1_000_000usize;
        let xs = [0.2, 0.5, 1.0, 2.0];
        let mut hits = [0u64; 4];
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let x = law.sample(&mut rng);
            sum += x;
            sum_sq += x * x;
            for (h, &t) in hits.iter_mut().zip(&xs) {
                if x >= t {
                    *h += 1;
                }
            }
        }
        for (h, &t) in hits.iter().zip(&xs) {
            let p = law.survival(t);
            let band = 4.0 * (p * (1.0 - p) / n as f64).sqrt();
            let freq = *h as f64 / n as f64;
            assert!((freq - p).abs() < band, "x={t}: {freq} vs {p}");
        }
        let mean = sum / n as f64;
        let se = (sum_sq / n as f64 - mean * mean).sqrt() / (n as f64).sqrt();
        assert!(mean.abs() < 4.0 * se);
    }
}
