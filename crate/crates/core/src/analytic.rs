//! Closed-form quantities for the biased walk on the ladder cluster.
//!
//! Everything here is a pure function of the retention probability `p`, the
//! bias `lambda` and small integer parameters. The simulation modules are
//! tested against these values.

use crate::error::{Error, Result};

/// Threshold above which the pruned walk is provably transient.
pub const LAMBDA_STAR: f64 = std::f64::consts::LN_2 / 2.0;

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("retention probability {p} outside (0,1)")))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("bias {lambda} must be positive and finite")))
    }
}

/// Critical bias separating positive speed from zero speed.
pub fn critical_bias(p: f64) -> Result<f64> {
    check_p(p)?;
    let p2 = p * p;
    let p3 = p2 * p;
    let p4 = p2 * p2;
    let radicand = (1.0 + 4.0 * p2 - 8.0 * p3 + 4.0 * p4).max(0.0);
    let denom = 1.0 + 2.0 * p - 2.0 * p2 - radicand.sqrt();
    Ok(0.5 * (2.0 / denom).ln())
}

/// Step law of the non-lazy biased walk on the integers and the lazy ladder walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineWalk {
    pub lambda: f64,
    /// Right step probability of the non-lazy walk.
    pub p_lambda: f64,
    pub q_lambda: f64,
    /// `q/p = exp(-2 lambda)`.
    pub gamma: f64,
    /// `e^lambda + 1 + e^-lambda`, the normaliser of the lazy ladder walk.
    pub norm: f64,
}

impl LineWalk {
    pub fn new(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        let up = lambda.exp();
        let down = (-lambda).exp();
        Ok(Self {
            lambda,
            p_lambda: up / (up + down),
            q_lambda: down / (up + down),
            gamma: (-2.0 * lambda).exp(),
            norm: up + 1.0 + down,
        })
    }

    /// Lazy candidate probabilities (right, left, vertical).
    pub fn candidates(&self) -> [f64; 3] {
        let up = self.lambda.exp();
        let down = (-self.lambda).exp();
        [up / self.norm, down / self.norm, 1.0 / self.norm]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasParams {
    pub p: f64,
    pub lambda: f64,
    pub lambda_c: f64,
    pub alpha: f64,
    pub p_lambda: f64,
    pub q_lambda: f64,
    pub gamma: f64,
    pub p_esc: f64,
    /// Mean first passage time to +1 of the non-lazy line walk.
    pub r: f64,
    pub lambda_star: f64,
    /// `lambda > LAMBDA_STAR`.
    pub above_lambda_star: bool,
}

pub fn bias_params(p: f64, lambda: f64) -> Result<BiasParams> {
    check_p(p)?;
    let walk = LineWalk::new(lambda)?;
    let lambda_c = critical_bias(p)?;
    Ok(BiasParams {
        p,
        lambda,
        lambda_c,
        alpha: lambda_c / lambda,
        p_lambda: walk.p_lambda,
        q_lambda: walk.q_lambda,
        gamma: walk.gamma,
        p_esc: (1.0 - (-lambda).exp()) / walk.norm,
        r: 1.0 / (1.0 - 2.0 * walk.q_lambda),
        lambda_star: LAMBDA_STAR,
        above_lambda_star: lambda > LAMBDA_STAR,
    })
}

/// Gambler's-ruin quantities for a trap of length `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuinQuantities {
    pub m: usize,
    pub gamma: f64,
    /// Escape-without-rebound probability from the bottom, non-lazy chain.
    pub e_m: f64,
    /// Same quantity for the lazy chain.
    pub e_m_lazy: f64,
    /// Probability that the ladder walk steps right and then crosses a line of length `m`.
    pub e_prime: f64,
    /// Probability of reaching the bottom before the entrance, starting next to the entrance.
    pub hit_bottom: f64,
}

impl RuinQuantities {
    /// Probability of hitting the entrance before the bottom from `y`.
    pub fn h(&self, y: usize) -> f64 {
        let m = self.m as i32;
        let g = self.gamma;
        (g.powi(y as i32) - g.powi(m)) / (1.0 - g.powi(m))
    }
}

pub fn ruin_quantities(m: usize, lambda: f64) -> Result<RuinQuantities> {
    if m < 1 {
        return Err(Error::Domain("trap length must be at least 1".into()));
    }
    let walk = LineWalk::new(lambda)?;
    let g = walk.gamma;
    let gm = g.powi(m as i32);
    // Probability, from m-1, of reaching 0 before m.
    let reach_entrance = g.powi(m as i32 - 1) * (1.0 - g) / (1.0 - gm);
    let down = (-lambda).exp();
    Ok(RuinQuantities {
        m,
        gamma: g,
        e_m: walk.q_lambda * reach_entrance,
        e_m_lazy: down / walk.norm * reach_entrance,
        e_prime: lambda.exp() / walk.norm * (1.0 - g) / (1.0 - gm),
        hit_bottom: (1.0 - g) / (1.0 - gm),
    })
}

/// Generating function `E[x^sigma]` of the first passage time to +1 of the non-lazy line walk.
pub fn first_passage_mgf(x: f64, lambda: f64) -> Result<f64> {
    let walk = LineWalk::new(lambda)?;
    let (p, q) = (walk.p_lambda, walk.q_lambda);
    let radicand = 1.0 - 4.0 * p * q * x * x;
    if !(x > 0.0) || radicand < 0.0 {
        return Err(Error::Domain(format!("x = {x} outside the real branch")));
    }
    Ok((1.0 - radicand.sqrt()) / (2.0 * q * x))
}

/// Left derivative of [`first_passage_mgf`] at `x = 1`.
pub fn first_passage_mgf_slope_at_one(lambda: f64) -> Result<f64> {
    let walk = LineWalk::new(lambda)?;
    let (p, q) = (walk.p_lambda, walk.q_lambda);
    let s = (1.0 - 4.0 * p * q).sqrt();
    let numer = 8.0 * p * q * q / s - 2.0 * q * (1.0 - s);
    Ok(numer / (4.0 * q * q))
}

/// Law of the length of a trap away from the origin.
pub fn trap_length_pmf(m: usize, p: f64) -> Result<f64> {
    if m < 1 {
        return Err(Error::Domain("trap length must be at least 1".into()));
    }
    let lc = critical_bias(p)?;
    Ok(((2.0 * lc).exp() - 1.0) * (-2.0 * lc * m as f64).exp())
}

pub fn trap_length_mean(p: f64) -> Result<f64> {
    let lc = critical_bias(p)?;
    Ok(1.0 / (1.0 - (-2.0 * lc).exp()))
}

/// Candidate moves at an obstacle, in the order:
/// joint right, joint left, joint vertical, (left, right-exit), (left, left-exit),
/// (vertical, right-exit), (vertical, left-exit).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleTransitions {
    pub lambda: f64,
    pub len: usize,
    pub probs: [f64; 7],
    pub valid: bool,
}

impl ObstacleTransitions {
    pub fn checked(&self) -> Result<[f64; 7]> {
        for (entry, &value) in self.probs.iter().enumerate() {
            if !(-1e-15..=1.0 + 1e-15).contains(&value) {
                return Err(Error::InvalidCouplingParameters {
                    lambda: self.lambda,
                    len: self.len,
                    entry,
                    value,
                });
            }
        }
        Ok(self.probs)
    }
}

fn obstacle_vector(lambda: f64, e_prime: f64) -> [f64; 7] {
    let up = lambda.exp();
    let down = (-lambda).exp();
    let norm = up + 1.0 + down;
    let a = (up - down) / (up + 1.0);
    let rest = 1.0 / (1.0 + down) - 1.0 / norm - e_prime / (1.0 + down);
    [
        a,
        down / norm,
        1.0 / norm,
        down / (1.0 + down) * (e_prime - a),
        down * rest,
        (e_prime - a) / (1.0 + down),
        rest,
    ]
}

/// Obstacle transition vector for a re-inserted trap of length `len`.
pub fn obstacle_transitions(lambda: f64, len: usize) -> Result<ObstacleTransitions> {
    if len < 1 {
        return Err(Error::Domain("re-inserted length must be at least 1".into()));
    }
    let e_prime = ruin_quantities(len + 1, lambda)?.e_prime;
    let probs = obstacle_vector(lambda, e_prime);
    let valid = probs.iter().all(|v| (-1e-15..=1.0 + 1e-15).contains(v));
    Ok(ObstacleTransitions { lambda, len, probs, valid })
}

/// Limit of [`obstacle_transitions`] as the length grows.
pub fn obstacle_transitions_limit(lambda: f64) -> Result<[f64; 7]> {
    let walk = LineWalk::new(lambda)?;
    let e_inf = (lambda.exp() - (-lambda).exp()) / walk.norm;
    Ok(obstacle_vector(lambda, e_inf))
}

/// Largest re-inserted length whose obstacle vector is nonnegative (None if every length works).
pub fn max_valid_obstacle_length(lambda: f64, search: usize) -> Result<Option<usize>> {
    let mut last = 0;
    for len in 1..=search {
        if obstacle_transitions(lambda, len)?.valid {
            last = len;
        } else {
            return Ok(Some(last));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrunedEnergy {
    /// Upper bound on the effective resistance to infinity, scaled by the local conductance.
    pub energy: f64,
    /// Uniform lower bound on the escape probability of the pruned walk.
    pub escape_bound: f64,
}

pub fn pruned_energy_bound(lambda: f64) -> Result<PrunedEnergy> {
    check_lambda(lambda)?;
    let g = (-2.0 * lambda).exp();
    let r = g / (1.0 - g);
    if lambda <= LAMBDA_STAR || r >= 1.0 {
        return Ok(PrunedEnergy { energy: f64::INFINITY, escape_bound: 0.0 });
    }
    let series = r / (1.0 - r);
    Ok(PrunedEnergy {
        energy: 1.0 + 2.0 * lambda.exp() * series,
        escape_bound: 1.0 / (3.0 * lambda.exp() * (1.0 + 2.0 * (2.0 * lambda).exp() * series)),
    })
}

/// Exponential-moment bound for a geometric number of line excursions.
pub fn excursion_bound_function(mu: f64, lambda: f64) -> Result<f64> {
    let walk = LineWalk::new(lambda)?;
    let (p, q) = (walk.p_lambda, walk.q_lambda);
    let r = 1.0 / (1.0 - 2.0 * q);
    if mu == 0.0 {
        return Ok(1.0);
    }
    let radicand = 1.0 - 4.0 * p * q * (2.0 * mu).exp();
    if radicand < -1e-12 {
        return Err(Error::Domain(format!("mu = {mu} beyond the real branch")));
    }
    Ok((-2.0 * mu * r).exp() * (1.0 - radicand.max(0.0).sqrt()) / (2.0 * q * mu.exp()))
}

/// Upper end of the admissible range for the excursion parameter.
pub fn mu_upper(lambda: f64) -> Result<f64> {
    let walk = LineWalk::new(lambda)?;
    Ok(0.5 * (1.0 / (4.0 * walk.p_lambda * walk.q_lambda)).ln())
}

/// Largest `mu` in the admissible range with `f(mu) <= 1 - tol`, located by bisection.
pub fn solve_mu_hat(lambda: f64, tol: f64) -> Result<f64> {
    let hi_end = mu_upper(lambda)?;
    let target = 1.0 - tol;
    let f = |mu: f64| excursion_bound_function(mu, lambda);
    // Locate a point below target by scanning; f decreases first since f'(0) < 0.
    let steps = 4096;
    let mut best = None;
    for i in 1..steps {
        let mu = hi_end * i as f64 / steps as f64;
        if f(mu)? <= target {
            best = Some(mu);
        }
    }
    let Some(mut lo) = best else {
        return Err(Error::Domain(format!("no mu with f(mu) <= {target}")));
    };
    if f(hi_end)? <= target {
        return Ok(hi_end);
    }
    let mut hi = (lo + hi_end / steps as f64).min(hi_end);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_bias_at_half() {
        let expected = 0.5 * (4.0 / (3.0 - 5f64.sqrt())).ln();
        assert!((critical_bias(0.5).unwrap() - expected).abs() < 1e-14);
        assert!((expected - 0.827785).abs() < 1e-6);
    }

    #[test]
    fn critical_bias_minimised_at_half() {
        let mid = critical_bias(0.5).unwrap();
        for i in 1..10 {
            let p = i as f64 / 10.0;
            assert!(critical_bias(p).unwrap() >= mid - 1e-15);
        }
    }

    #[test]
    fn critical_bias_diverges_near_one() {
        assert!(critical_bias(1.0 - 1e-6).unwrap() > 5.0);
        assert!(critical_bias(0.0).is_err());
        assert!(critical_bias(1.0).is_err());
    }

    #[test]
    fn critical_bias_exceeds_lambda_star_on_grid() {
        for i in 1..100 {
            let p = i as f64 / 100.0;
            assert!(critical_bias(p).unwrap() > LAMBDA_STAR, "p = {p}");
        }
    }

    #[test]
    fn bias_params_flags() {
        let lc = critical_bias(0.5).unwrap();
        let b = bias_params(0.5, lc).unwrap();
        assert_eq!(b.alpha, 1.0);
        assert!(b.above_lambda_star);
        let b = bias_params(0.5, LAMBDA_STAR).unwrap();
        assert!(!b.above_lambda_star);
        assert!((b.p_lambda + b.q_lambda - 1.0).abs() < 1e-15);
        assert!((b.gamma - b.q_lambda / b.p_lambda).abs() < 1e-15);
        assert!(b.r > 1.0 && b.p_esc > 0.0 && b.p_esc < 1.0);
        assert!(bias_params(0.5, 0.0).is_err());
    }

    #[test]
    fn ruin_small_cases() {
        let q = ruin_quantities(1, 0.7).unwrap();
        let w = LineWalk::new(0.7).unwrap();
        assert!((q.e_m - w.q_lambda).abs() < 1e-15);
        assert_eq!(q.hit_bottom, 1.0);
        let q = ruin_quantities(6, 0.7).unwrap();
        assert!((q.h(0) - 1.0).abs() < 1e-15);
        assert!(q.h(6).abs() < 1e-15);
        assert!(ruin_quantities(0, 0.7).is_err());
    }

    #[test]
    fn ruin_gambler_formula() {
        // e_m = gamma^m p (1-gamma)/(1-gamma^m)
        for m in 1..10 {
            let q = ruin_quantities(m, 0.5).unwrap();
            let w = LineWalk::new(0.5).unwrap();
            let g = w.gamma;
            let direct = g.powi(m as i32) * w.p_lambda * (1.0 - g) / (1.0 - g.powi(m as i32));
            assert!((q.e_m - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn ruin_harmonic_solves_recursion() {
        let lambda = 0.9;
        let w = LineWalk::new(lambda).unwrap();
        let q = ruin_quantities(7, lambda).unwrap();
        for y in 1..7 {
            let rhs = w.p_lambda * q.h(y + 1) + w.q_lambda * q.h(y - 1);
            assert!((q.h(y) - rhs).abs() < 1e-14);
        }
    }

    #[test]
    fn mgf_fixed_point_and_unit_value() {
        let lambda = 0.8;
        let w = LineWalk::new(lambda).unwrap();
        assert!((first_passage_mgf(1.0, lambda).unwrap() - 1.0).abs() < 1e-14);
        let xmax = 1.0 / (2.0 * (w.p_lambda * w.q_lambda).sqrt());
        for i in 1..50 {
            let x = xmax * i as f64 / 50.0;
            let f = first_passage_mgf(x, lambda).unwrap();
            assert!((f - (w.p_lambda * x + w.q_lambda * x * f * f)).abs() < 1e-12);
        }
        assert!(first_passage_mgf(xmax * 1.01, lambda).is_err());
    }

    #[test]
    fn mgf_slope_is_mean_passage() {
        for &lambda in &[0.3, 1.0, 2.0] {
            let w = LineWalk::new(lambda).unwrap();
            let slope = first_passage_mgf_slope_at_one(lambda).unwrap();
            assert!((slope - 1.0 / (w.p_lambda - w.q_lambda)).abs() < 1e-10);
            let h = 1e-6;
            let fd = (first_passage_mgf(1.0, lambda).unwrap() - first_passage_mgf(1.0 - h, lambda).unwrap()) / h;
            assert!((fd - slope).abs() / slope < 1e-4);
        }
    }

    #[test]
    fn trap_law_geometric() {
        let total: f64 = (1..400).map(|m| trap_length_pmf(m, 0.5).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let mean: f64 = (1..400).map(|m| m as f64 * trap_length_pmf(m, 0.5).unwrap()).sum();
        assert!((mean - trap_length_mean(0.5).unwrap()).abs() < 1e-10);
        let lc = critical_bias(0.5).unwrap();
        let ratio = trap_length_pmf(1, 0.5).unwrap() / trap_length_pmf(2, 0.5).unwrap();
        assert!((ratio - (2.0 * lc).exp()).abs() < 1e-12);
        assert!(trap_length_pmf(0, 0.5).is_err());
    }

    #[test]
    fn obstacle_vector_direct_evaluation() {
        let lambda: f64 = 1.0;
        let len = 3;
        let t = obstacle_transitions(lambda, len).unwrap();
        let (e, ei) = (lambda.exp(), (-lambda).exp());
        let d = e + 1.0 + ei;
        let ep = e / d * (1.0 - (-2.0 * lambda).exp()) / (1.0 - (-2.0 * lambda * 4.0).exp());
        let a = (e - ei) / (e + 1.0);
        let expected = [
            a,
            ei / d,
            1.0 / d,
            ei / (1.0 + ei) * (ep - a),
            ei * (1.0 / (1.0 + ei) - 1.0 / d - ep / (1.0 + ei)),
            (ep - a) / (1.0 + ei),
            1.0 / (1.0 + ei) - 1.0 / d - ep / (1.0 + ei),
        ];
        for (x, y) in t.probs.iter().zip(expected) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!((t.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // at this bias the exit-right mass falls short of the pruned right step
        assert!(!t.valid);
        assert!(t.checked().is_err());
    }

    #[test]
    fn obstacle_vector_limit() {
        let lambda = 0.4;
        let lim = obstacle_transitions_limit(lambda).unwrap();
        let far = obstacle_transitions(lambda, 200).unwrap().probs;
        for (x, y) in far.iter().zip(lim) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn obstacle_vector_valid_at_small_bias() {
        let t = obstacle_transitions(0.2, 2).unwrap();
        assert!(t.valid);
        assert!(t.checked().is_ok());
        assert_eq!(max_valid_obstacle_length(0.2, 50).unwrap(), Some(2));
        let lc = critical_bias(0.5).unwrap();
        assert_eq!(max_valid_obstacle_length(lc, 50).unwrap(), Some(0));
    }

    #[test]
    fn energy_bound() {
        let e = pruned_energy_bound(LAMBDA_STAR).unwrap();
        assert!(e.energy.is_infinite());
        let lambda: f64 = 1.0;
        let g = (-2.0f64).exp();
        let r = g / (1.0 - g);
        let expected = 1.0 + 2.0 * lambda.exp() * r / (1.0 - r);
        let e = pruned_energy_bound(lambda).unwrap();
        assert!((e.energy - expected).abs() < 1e-13);
        assert!(e.escape_bound > 0.0 && e.escape_bound < 1.0);
    }

    #[test]
    fn excursion_function_shape() {
        let lambda = 0.8;
        let w = LineWalk::new(lambda).unwrap();
        assert_eq!(excursion_bound_function(0.0, lambda).unwrap(), 1.0);
        let h = 1e-7;
        let slope = (excursion_bound_function(h, lambda).unwrap() - 1.0) / h;
        let expected = -1.0 / (1.0 - 2.0 * w.q_lambda);
        assert!((slope - expected).abs() < 1e-4);
        let mu = solve_mu_hat(lambda, 1e-3).unwrap();
        assert!(mu > 0.0 && mu <= mu_upper(lambda).unwrap());
        assert!(excursion_bound_function(mu, lambda).unwrap() <= 1.0 - 1e-3 + 1e-12);
    }
}
