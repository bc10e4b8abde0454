//! Limit laws of the rightmost particle, the biggest displacement and the
//! independent-walkers maximum, as mixtures over an empirical `W` pool.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::offspring::WPool;
use crate::quad;
use crate::steplaw::Constants;

/// Which maximum a value belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Rightmost particle `M_n`.
    Brw,
    /// Maximum of `Z_n` independent walks.
    Indep,
    /// Biggest displacement `N_n`.
    BiggestJump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `r < 2/3`
    Sub,
    /// `r = 2/3`
    Crit,
    /// `r > 2/3`
    Super,
}

impl Regime {
    pub fn of(r: f64) -> Self {
        let two_thirds = 2.0 / 3.0;
        if (r - two_thirds).abs() <= 1e-12 {
            Regime::Crit
        } else if r < two_thirds {
            Regime::Sub
        } else {
            Regime::Super
        }
    }
}

/// Standard normal c.d.f.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `∫ Φ(y − x) e^{−y} dy` by quadrature over `[x − 12/σ, x + 40]`, where `Φ`
/// is the centred Gaussian c.d.f. with variance `σ^{−2}`.
pub fn gaussian_shift_integral(x: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(invalid(format!("σ must be positive, got {sigma}")));
    }
    // In u = y − x the integrand is e^{−x} Φ(u) e^{−u}; integrate the scaled
    // part and restore e^{−x} afterwards.
    let f = |u: f64| std_normal_cdf(sigma * u) * (-u).exp();
    let lo = -12.0 / sigma;
    let mut breaks = vec![lo];
    let mut b = lo;
    while b < 40.0 {
        b = (b + 2.0).min(40.0);
        breaks.push(b);
    }
    Ok((-x).exp() * quad::integrate_pieces(f, &breaks, 0.0, 1e-13)?)
}

/// Closed form of [`gaussian_shift_integral`]: `e^{−x + 1/(2σ²)}`.
pub fn gaussian_shift_closed(x: f64, sigma: f64) -> f64 {
    (-x + 0.5 / (sigma * sigma)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitLawContext {
    pub constants: Constants,
    w: Vec<f64>,
    pub n_w: u32,
    /// Evaluate the `r = 2/3` laws by quadrature rather than by the shift.
    pub quadrature_fallback: bool,
}

impl LimitLawContext {
    pub fn new(constants: Constants, pool: &WPool) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::EmptySample);
        }
        if pool.values().any(|w| !(w > 0.0) || !w.is_finite()) {
            return Err(invalid("W pool values must be positive and finite"));
        }
        Ok(Self { constants, w: pool.values().collect(), n_w: pool.n_w, quadrature_fallback: false })
    }

    pub fn degenerate(constants: Constants) -> Self {
        Self { constants, w: vec![1.0], n_w: 0, quadrature_fallback: false }
    }

    pub fn pool(&self) -> &[f64] {
        &self.w
    }

    /// `a m / (m − 1)` for the rightmost particle and biggest displacement,
    /// `a` for independent walkers.
    pub fn mixture_coefficient(&self, family: Family) -> f64 {
        let k = &self.constants;
        match family {
            Family::Brw | Family::BiggestJump => k.a * k.m / (k.m - 1.0),
            Family::Indep => k.a,
        }
    }

    /// `σ^{−2}`.
    pub fn gaussian_variance(&self) -> f64 {
        1.0 / (self.constants.sigma * self.constants.sigma)
    }

    /// `E[exp(−c W t)]` over the pool.
    fn laplace(&self, c: f64, t: f64) -> f64 {
        if t == f64::INFINITY {
            return 0.0;
        }
        self.w.iter().map(|&w| (-c * w * t).exp()).sum::<f64>() / self.w.len() as f64
    }

    fn crit_weight(&self, x: f64) -> Result<f64> {
        if self.quadrature_fallback {
            gaussian_shift_integral(x, self.constants.sigma)
        } else {
            Ok(gaussian_shift_closed(x, self.constants.sigma))
        }
    }

    pub fn cdf_v(&self, x: f64) -> f64 {
        self.laplace(self.mixture_coefficient(Family::Brw), (-x).exp())
    }

    pub fn cdf_g(&self, x: f64) -> f64 {
        self.laplace(self.mixture_coefficient(Family::Indep), (-x).exp())
    }

    pub fn cdf_h23(&self, x: f64) -> Result<f64> {
        Ok(self.laplace(self.mixture_coefficient(Family::Brw), self.crit_weight(x)?))
    }

    pub fn cdf_g23(&self, x: f64) -> Result<f64> {
        Ok(self.laplace(self.mixture_coefficient(Family::Indep), self.crit_weight(x)?))
    }

    /// Limit c.d.f. for a family in the regime of the context's `r`.
    pub fn limit_cdf(&self, family: Family) -> Result<Box<dyn Fn(f64) -> f64 + Sync + '_>> {
        match (Regime::of(self.constants.r), family) {
            (Regime::Sub, Family::Brw | Family::BiggestJump) | (_, Family::BiggestJump) => Ok(Box::new(|x| self.cdf_v(x))),
            (Regime::Sub, Family::Indep) => Ok(Box::new(|x| self.cdf_g(x))),
            (Regime::Crit, Family::Brw) => {
                let shift = 0.5 / (self.constants.sigma * self.constants.sigma);
                Ok(Box::new(move |x| self.cdf_v(x - shift)))
            }
            (Regime::Crit, Family::Indep) => {
                let shift = 0.5 / (self.constants.sigma * self.constants.sigma);
                Ok(Box::new(move |x| self.cdf_g(x - shift)))
            }
            (Regime::Super, _) => Err(invalid("no distributional limit for r > 2/3")),
        }
    }

    /// `μ(w, (x₁, x₂]) = c w (e^{−x₁} − e^{−x₂})`.
    pub fn intensity_mu(&self, w: f64, x1: f64, x2: f64) -> Result<f64> {
        if x1 > x2 {
            return Err(invalid(format!("empty interval ({x1}, {x2}]")));
        }
        if x1 == x2 {
            return Ok(0.0);
        }
        Ok(self.mixture_coefficient(Family::BiggestJump) * w * ((-x1).exp() - (-x2).exp()))
    }

    /// Pool average of the void probability `exp(−μ(W, (x, ∞)))`.
    pub fn void_probability(&self, x: f64) -> Result<f64> {
        let mut acc = 0.0;
        for &w in &self.w {
            acc += (-self.intensity_mu(w, x, f64::INFINITY)?).exp();
        }
        Ok(acc / self.w.len() as f64)
    }

    /// Rows `x,F_V,F_G,F_H23,F_G23`.
    pub fn cdf_table_csv(&self, xs: &[f64]) -> Result<String> {
        let mut out = String::from("x,F_V,F_G,F_H23,F_G23\n");
        for &x in xs {
            out.push_str(&format!(
                "{x},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                self.cdf_v(x),
                self.cdf_g(x),
                self.cdf_h23(x)?,
                self.cdf_g23(x)?
            ));
        }
        Ok(out)
    }
}

/// Studentization prescribed for a family in a regime.
pub fn normalize(k: &Constants, raw: f64, n: u32, regime: Regime, family: Family) -> Result<f64> {
    if Regime::of(k.r) != regime {
        return Err(invalid(format!("regime {regime:?} does not match r = {}", k.r)));
    }
    if n == 0 {
        return Err(invalid("normalization needs n ≥ 1"));
    }
    let nf = n as f64;
    let centre = k.alpha * nf.powf(1.0 / k.r);
    let scale = k.sigma * nf.powf(1.0 / k.r - 1.0);
    match (regime, family) {
        (Regime::Super, Family::Brw | Family::Indep) => Ok((raw - centre) / nf.powf(2.0 - 1.0 / k.r)),
        (Regime::Super, Family::BiggestJump) | (_, Family::Brw) => Ok((raw - centre) / scale),
        (_, Family::BiggestJump) => Ok((raw - centre) / scale),
        (_, Family::Indep) => Ok((raw - centre - scale * nf.ln()) / scale),
    }
}

/// `r log m / (2α)`, the almost-sure limit for `r > 2/3`.
pub fn super_limit(k: &Constants) -> f64 {
    k.r * k.log_m / (2.0 * k.alpha)
}

/// Shapes of `ψ` whose integral test is decided by comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum Psi {
    Zero,
    /// `c log x`
    Log { c: f64 },
    /// `c (log x)^p`
    LogPower { c: f64, p: f64 },
    /// `c x^q`, `0 < q < 1`
    Power { c: f64, q: f64 },
}

impl Psi {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Psi::Zero => 0.0,
            Psi::Log { c } => c * x.ln(),
            Psi::LogPower { c, p } => c * x.ln().powf(p),
            Psi::Power { c, q } => c * x.powf(q),
        }
    }

    /// Whether `∫^∞ e^{−ψ(x)} dx` is finite.
    pub fn integral_converges(&self) -> Result<bool> {
        Ok(match *self {
            Psi::Zero => false,
            // ∫ x^{−c} dx
            Psi::Log { c } => c > 1.0,
            Psi::LogPower { c, p } => {
                if !(p > 0.0) {
                    return Err(invalid("(log x)^p needs p > 0"));
                }
                if p == 1.0 {
                    c > 1.0
                } else {
                    // p > 1 beats every power of x; p < 1 loses to all of them
                    c > 0.0 && p > 1.0
                }
            }
            Psi::Power { c, q } => {
                if !(q > 0.0 && q < 1.0) {
                    return Err(invalid("x^q needs 0 < q < 1"));
                }
                c > 0.0
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvelopeKind {
    LowerLoglog,
    UpperPsi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSpec {
    pub kind: EnvelopeKind,
    pub psi: Psi,
    pub integral_converges: bool,
}

impl EnvelopeSpec {
    pub fn new(kind: EnvelopeKind, psi: Psi) -> Result<Self> {
        Ok(Self { kind, psi, integral_converges: psi.integral_converges()? })
    }
}

/// Curves for `r = 2/3`: `α n^{3/2} ± σ √n log n` and `α n^{3/2} ± √(n log n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CritBands {
    pub sigma_log_lower: f64,
    pub sigma_log_upper: f64,
    pub sqrt_lower: f64,
    pub sqrt_upper: f64,
}

/// Envelope value at generation `n` for one replicate with mixture weight
/// `c w` (only read by the lower envelope).
pub fn envelope_curve(k: &Constants, spec: &EnvelopeSpec, n: u32, cw: f64) -> Result<f64> {
    if n < 3 {
        return Err(invalid("envelopes need n ≥ 3"));
    }
    let nf = n as f64;
    let centre = k.alpha * nf.powf(1.0 / k.r);
    let scale = k.sigma * nf.powf(1.0 / k.r - 1.0);
    match spec.kind {
        EnvelopeKind::LowerLoglog => {
            if !(cw > 0.0) {
                return Err(invalid("lower envelope needs c w > 0"));
            }
            Ok(centre - scale * (nf.ln().ln() - cw.ln()))
        }
        EnvelopeKind::UpperPsi => Ok(centre + scale * spec.psi.eval(nf)),
    }
}

pub fn envelope_curves(k: &Constants, spec: &EnvelopeSpec, ns: &[u32], cw: f64) -> Result<Vec<f64>> {
    ns.iter().map(|&n| envelope_curve(k, spec, n, cw)).collect()
}

pub fn crit_bands(k: &Constants, n: u32) -> Result<CritBands> {
    if n < 2 {
        return Err(invalid("bands need n ≥ 2"));
    }
    let nf = n as f64;
    let centre = k.alpha * nf.powf(1.5);
    let a = k.sigma * nf.sqrt() * nf.ln();
    let b = (nf * nf.ln()).sqrt();
    Ok(CritBands { sigma_log_lower: centre - a, sigma_log_upper: centre + a, sqrt_lower: centre - b, sqrt_upper: centre + b })
}
