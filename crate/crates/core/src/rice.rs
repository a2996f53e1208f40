//! Alternating binomial sums from the single-trap tail bound.
//!
//! With `x = (p_lambda - q_lambda) gamma^{-t}` and `g = gamma^alpha`,
//!
//! ```text
//! S(n) = sum_j C(n,j) (-1)^j x^j / (1 - g gamma^j)              = sum_k g^k (1 - x gamma^k)^n
//! T(n) = sum_j C(n,j) (-1)^j x^j g gamma^j / (1 - g gamma^j)^2  = sum_k k g^k (1 - x gamma^k)^n
//! ```
//!
//! The right-hand forms have nonnegative terms and are the production route.
//! The alternating forms are evaluated in fixed-point big-integer arithmetic as
//! an oracle, and the residue expansion gives the `n^-alpha` asymptotics.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::analytic::{bias_params, solve_mu_hat};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Simple,
    Squared,
}

pub const DEFAULT_DIRECT_CAP: usize = 10_000;
pub const DEFAULT_RESIDUE_K: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiceConfig {
    pub alpha: f64,
    pub gamma: f64,
    /// Drift `p_lambda - q_lambda = tanh(lambda)`.
    pub drift: f64,
    pub t: u32,
    pub variant: Variant,
    /// Decimal digits kept on top of the `n0 log10(2)` lost to cancellation.
    pub extra_digits: u32,
    pub direct_cap: usize,
    pub k_trunc: usize,
    /// Exponential-moment parameter of the excursion bound.
    pub mu: f64,
}

impl RiceConfig {
    pub fn new(p: f64, lambda: f64, variant: Variant) -> Result<Self> {
        let b = bias_params(p, lambda)?;
        let drift = b.p_lambda - b.q_lambda;
        let t = (-drift.ln() / (2.0 * lambda)).floor().max(0.0) as u32;
        let cfg = RiceConfig {
            alpha: b.alpha,
            gamma: b.gamma,
            drift,
            t,
            variant,
            extra_digits: 40,
            direct_cap: DEFAULT_DIRECT_CAP,
            k_trunc: DEFAULT_RESIDUE_K,
            mu: solve_mu_hat(lambda, 1e-9)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    /// `x = drift / gamma^t`, at most 1 by the choice of `t`.
    pub fn x(&self) -> f64 {
        self.drift * self.gamma.powi(-(self.t as i32))
    }

    pub fn validate(&self) -> Result<()> {
        let x = self.x();
        if !(self.gamma > 0.0 && self.gamma < 1.0 && self.alpha > 0.0) {
            return Err(Error::Domain(format!("need 0 < gamma < 1 and alpha > 0, got {} and {}", self.gamma, self.alpha)));
        }
        if !(x <= 1.0 && 1.0 < x / self.gamma) {
            return Err(Error::Domain(format!("t = {} violates drift gamma^-t <= 1 < drift gamma^-(t+1)", self.t)));
        }
        Ok(())
    }
}

/// Nonnegative-term evaluation.
pub fn alt_sum_geometric(n0: u64, cfg: &RiceConfig) -> Result<f64> {
    cfg.validate()?;
    let x = cfg.x();
    let g = cfg.gamma.powf(cfg.alpha);
    let mut sum = 0.0;
    let mut weight = 1.0; // g^k
    let mut gk = 1.0; // gamma^k
    for k in 0u64.. {
        let base = if n0 == 0 { 1.0 } else { (n0 as f64 * (-x * gk).ln_1p()).exp() };
        let w = match cfg.variant {
            Variant::Simple => 1.0,
            Variant::Squared => k as f64,
        };
        let term = w * weight * base;
        sum += term;
        // the base factor tends to 1, so the remaining tail is at most the weight series
        let tail_bound = match cfg.variant {
            Variant::Simple => weight * g / (1.0 - g),
            Variant::Squared => weight * g * ((k + 1) as f64 / (1.0 - g) + g / (1.0 - g).powi(2)),
        };
        if k > 0 && tail_bound < 1e-18 * sum {
            break;
        }
        weight *= g;
        gk *= cfg.gamma;
    }
    Ok(sum)
}

/// Fixed-point value `round(v * 2^bits)` of a finite double.
fn to_fixed(v: f64, bits: u64) -> BigInt {
    let (mant, exp, sign) = num_traits::float::FloatCore::integer_decode(v);
    let m = BigInt::from(mant) * sign as i64;
    let shift = exp as i64 + bits as i64;
    if shift >= 0 {
        m << shift as usize
    } else {
        m >> (-shift) as usize
    }
}

fn from_fixed(v: &BigInt, bits: u64) -> f64 {
    let keep = 120u64.min(bits);
    let shifted: BigInt = v >> (bits - keep) as usize;
    shifted.to_f64().unwrap_or(f64::NAN) / 2f64.powi(keep as i32)
}

/// Alternating form in fixed-point arithmetic with `n0 + extra` bits.
pub fn alt_sum_direct(n0: u64, cfg: &RiceConfig) -> Result<f64> {
    cfg.validate()?;
    if n0 as usize > cfg.direct_cap {
        return Err(Error::PrecisionBudget { n0: n0 as usize, cap: cfg.direct_cap });
    }
    let bits = n0 + (cfg.extra_digits as f64 * std::f64::consts::LOG2_10).ceil() as u64 + 64;
    let one: BigInt = BigInt::one() << bits as usize;
    let x = to_fixed(cfg.x(), bits);
    let gamma = to_fixed(cfg.gamma, bits);
    let mut g_pow = to_fixed(cfg.gamma.powf(cfg.alpha), bits); // g gamma^j
    let mut a = one.clone(); // C(n0, j) x^j
    let mut sum = BigInt::zero();
    for j in 0..=n0 {
        let denom = &one - &g_pow;
        let term: BigInt = match cfg.variant {
            Variant::Simple => (&a << bits as usize) / &denom,
            Variant::Squared => {
                let num: BigInt = (&a * &g_pow) / &denom;
                (num << bits as usize) / &denom
            }
        };
        if j % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
        if j < n0 {
            a = (&a * &x * BigInt::from(n0 - j)) / (BigInt::from(j + 1) << bits as usize);
            g_pow = (&g_pow * &gamma) >> bits as usize;
        }
    }
    Ok(from_fixed(&sum, bits))
}

/// The alternating form in plain double precision; loses about `n0` bits.
pub fn alt_sum_naive(n0: u64, cfg: &RiceConfig) -> f64 {
    let x = cfg.x();
    let mut a = 1.0;
    let mut g_pow = cfg.gamma.powf(cfg.alpha);
    let mut sum = 0.0;
    for j in 0..=n0 {
        let term = match cfg.variant {
            Variant::Simple => a / (1.0 - g_pow),
            Variant::Squared => a * g_pow / (1.0 - g_pow).powi(2),
        };
        sum += if j % 2 == 0 { term } else { -term };
        a *= x * (n0 - j) as f64 / (j + 1) as f64;
        g_pow *= cfg.gamma;
    }
    sum
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
// B_{2n} / (2n (2n - 1)) for n = 1..8
const STIRLING: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

/// Complex log-gamma for `Re z > 0`, via upward recurrence and the Stirling series.
/// Only `exp` of the result is meaningful (the branch is not tracked).
pub fn ln_gamma(z: Complex64) -> Complex64 {
    let mut z = z;
    let mut shift = Complex64::new(0.0, 0.0);
    while z.norm() < 16.0 || z.re < 8.0 {
        shift += z.ln();
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let mut series = Complex64::new(0.0, 0.0);
    let mut p = inv;
    for c in STIRLING {
        series += p * c;
        p *= inv2;
    }
    (z - 0.5) * z.ln() - z + LN_SQRT_2PI + series - shift
}

// B_{2n} / (2n) for n = 1..7
const DIGAMMA: [f64; 7] = [1.0 / 12.0, -1.0 / 120.0, 1.0 / 252.0, -1.0 / 240.0, 1.0 / 132.0, -691.0 / 32_760.0, 1.0 / 12.0];

/// Complex digamma for `Re z > 0`.
pub fn digamma(z: Complex64) -> Complex64 {
    let mut z = z;
    let mut shift = Complex64::new(0.0, 0.0);
    while z.norm() < 16.0 || z.re < 8.0 {
        shift += 1.0 / z;
        z += 1.0;
    }
    let inv2 = 1.0 / (z * z);
    let mut series = Complex64::new(0.0, 0.0);
    let mut p = inv2;
    for c in DIGAMMA {
        series += p * c;
        p *= inv2;
    }
    z.ln() - 0.5 / z - series - shift
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidueSeries {
    /// Truncated residue sum; equals the alternating sum up to the truncation error.
    pub value: f64,
    /// Leading-order form with `Gamma(n0+1)/Gamma(n0+1-z)` replaced by `n0^z`.
    pub asymptotic: f64,
    /// `C(n0) = n0^alpha * asymptotic` (simple) or `n0^alpha * asymptotic / log n0` (squared).
    pub leading_constant: f64,
    /// `|term_k|` of the full sum for `k = 0..=K`; the `-k` term is the conjugate.
    pub term_magnitudes: Vec<f64>,
    pub converged: bool,
}

/// Truncated residue expansion over the poles `z_k = 2 pi i k / log gamma - alpha`, `|k| <= K`.
/// Accepts real `n0 >= 1`.
pub fn residue_series(n0: f64, cfg: &RiceConfig) -> Result<ResidueSeries> {
    cfg.validate()?;
    if cfg.k_trunc < 1 {
        return Err(Error::Domain("residue truncation needs K >= 1".into()));
    }
    if n0 < 1.0 {
        return Err(Error::Domain(format!("residue series needs n0 >= 1, got {n0}")));
    }
    let lg = cfg.gamma.ln();
    let lx = cfg.x().ln();
    let ln_n = n0.ln();
    let lg_n = ln_gamma(Complex64::new(n0 + 1.0, 0.0));
    // (full, asymptotic) contributions of pole k
    let term = |k: i64| -> (Complex64, Complex64) {
        let z = Complex64::new(-cfg.alpha, 2.0 * std::f64::consts::PI * k as f64 / lg);
        let a = Complex64::new(n0 + 1.0, 0.0) - z;
        let common = ln_gamma(-z) + z * lx;
        let full = (lg_n - ln_gamma(a) + common).exp();
        let asym = (z * ln_n + common).exp();
        match cfg.variant {
            Variant::Simple => (full * (-1.0 / lg), asym * (-1.0 / lg)),
            Variant::Squared => {
                let psi = digamma(-z);
                (full * (lx + digamma(a) - psi) / (lg * lg), asym * (lx + ln_n - psi) / (lg * lg))
            }
        }
    };
    let mut total = Complex64::new(0.0, 0.0);
    let mut asym = Complex64::new(0.0, 0.0);
    let mut mags = Vec::with_capacity(cfg.k_trunc + 1);
    for k in 0..=cfg.k_trunc as i64 {
        let (f1, a1) = term(k);
        mags.push(f1.norm());
        let (f, a) = if k == 0 {
            (f1, a1)
        } else {
            let (f2, a2) = term(-k);
            (f1 + f2, a1 + a2)
        };
        total += f;
        asym += a;
    }
    let value = total.re;
    let converged = *mags.last().unwrap() <= 1e-14 * value.abs();
    let norm = n0.powf(cfg.alpha);
    let leading_constant = match cfg.variant {
        Variant::Simple => norm * asym.re,
        Variant::Squared => norm * asym.re / ln_n,
    };
    Ok(ResidueSeries { value, asymptotic: asym.re, leading_constant, term_magnitudes: mags, converged })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub n0: u64,
    pub simple: f64,
    pub squared: f64,
    pub simple_normalized: f64,
    pub squared_normalized: f64,
    /// Largest relative difference between the geometric and direct routes over both kernels (NaN when not evaluated).
    pub disagreement: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingProfile {
    pub rows: Vec<ProfileRow>,
    pub simple_ratio: f64,
    pub squared_ratio: f64,
}

fn max_min(v: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    hi / lo
}

/// Normalized profiles `n0^alpha S` and `n0^alpha T / log n0`; the direct route is compared
/// wherever `n0` is within its cap and `check_direct` is set.
pub fn scaling_profile(cfg: &RiceConfig, grid: &[u64], check_direct: bool) -> Result<ScalingProfile> {
    use rayon::prelude::*;
    let simple = cfg.with_variant(Variant::Simple);
    let squared = cfg.with_variant(Variant::Squared);
    let rows = grid
        .par_iter()
        .map(|&n0| -> Result<ProfileRow> {
            let s = alt_sum_geometric(n0, &simple)?;
            let q = alt_sum_geometric(n0, &squared)?;
            let disagreement = if check_direct && (n0 as usize) <= cfg.direct_cap {
                let ds = ((alt_sum_direct(n0, &simple)? - s) / s).abs();
                let dq = ((alt_sum_direct(n0, &squared)? - q) / q).abs();
                ds.max(dq)
            } else {
                f64::NAN
            };
            let norm = (n0 as f64).powf(cfg.alpha);
            Ok(ProfileRow { n0, simple: s, squared: q, simple_normalized: norm * s, squared_normalized: norm * q / (n0 as f64).ln(), disagreement })
        })
        .collect::<Result<Vec<_>>>()?;
    let simple_ratio = max_min(rows.iter().map(|r| r.simple_normalized));
    let squared_ratio = max_min(rows.iter().map(|r| r.squared_normalized));
    Ok(ScalingProfile { rows, simple_ratio, squared_ratio })
}
