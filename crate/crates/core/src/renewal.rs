//! Renewal counting processes with Pareto-tailed increments, used to probe
//! uniform integrability of the normalized first-passage index.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seeding::substream;
use crate::stats::{bootstrap_ci, mean};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Increment {
    /// `P(xi > s) = d s^-alpha` for `s >= d^(1/alpha)`, no mass below.
    Pareto { alpha: f64, d: f64 },
    Deterministic(f64),
}

impl Increment {
    pub fn pareto(alpha: f64, d: f64) -> Result<Self> {
        if !(alpha > 1.0 && d > 0.0) {
            return Err(Error::Domain(format!("Pareto increments need alpha > 1 and d > 0, got {alpha}, {d}")));
        }
        Ok(Increment::Pareto { alpha, d })
    }

    pub fn scale(&self) -> f64 {
        match *self {
            Increment::Pareto { alpha, d } => d.powf(1.0 / alpha),
            Increment::Deterministic(v) => v,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Increment::Pareto { alpha, .. } => alpha * self.scale() / (alpha - 1.0),
            Increment::Deterministic(v) => v,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Increment::Pareto { alpha, .. } => {
                // 1 - U lies in (0, 1]
                let u: f64 = 1.0 - rng.gen::<f64>();
                self.scale() * u.powf(-1.0 / alpha)
            }
            Increment::Deterministic(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalizer {
    /// `t^(1/alpha)` for `alpha < 2`, `sqrt(t log t)` at `alpha = 2`.
    Natural,
    /// `sqrt(t)` regardless of `alpha`; wrong at `alpha = 2`.
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenewalSpec {
    pub alpha: f64,
    pub d: f64,
    pub generic: Increment,
    pub first: Increment,
    pub normalizer: Normalizer,
}

impl RenewalSpec {
    pub fn new(alpha: f64, d: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha <= 2.0) {
            return Err(Error::Domain(format!("tail index must lie in (1, 2], got {alpha}")));
        }
        let generic = Increment::pareto(alpha, d)?;
        Ok(RenewalSpec { alpha, d, generic, first: generic, normalizer: Normalizer::Natural })
    }

    pub fn with_first(mut self, first: Increment) -> Self {
        self.first = first;
        self
    }

    pub fn with_normalizer(mut self, normalizer: Normalizer) -> Self {
        self.normalizer = normalizer;
        self
    }

    pub fn mu(&self) -> f64 {
        self.generic.mean()
    }

    pub fn a(&self, t: f64) -> f64 {
        match self.normalizer {
            Normalizer::Sqrt => t.sqrt(),
            Normalizer::Natural if self.alpha == 2.0 => (t * t.ln()).sqrt(),
            Normalizer::Natural => t.powf(1.0 / self.alpha),
        }
    }
}

/// First passage index `nu(t)` together with `S_nu(t)`.
pub fn first_passage_with_sum<R: Rng + ?Sized>(spec: &RenewalSpec, t: f64, rng: &mut R) -> Result<(u64, f64)> {
    if !(t >= 2.0) {
        return Err(Error::Domain(format!("first passage needs t >= 2, got {t}")));
    }
    let mut s = spec.first.sample(rng);
    let mut n = 1u64;
    while s <= t {
        s += spec.generic.sample(rng);
        n += 1;
    }
    Ok((n, s))
}

pub fn simulate_first_passage<R: Rng + ?Sized>(spec: &RenewalSpec, t: f64, rng: &mut R) -> Result<u64> {
    first_passage_with_sum(spec, t, rng).map(|(n, _)| n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UiStatistic {
    /// `E exp(theta Y)`
    ExpMoment { theta: f64 },
    /// `E (Y_-)^p`
    NegativeMoment { p: f64 },
}

impl UiStatistic {
    pub fn name(&self) -> String {
        match self {
            UiStatistic::ExpMoment { theta } => format!("exp_moment_theta_{theta}"),
            UiStatistic::NegativeMoment { p } => format!("negative_moment_p_{p}"),
        }
    }

    fn transform(&self, y: f64) -> f64 {
        match *self {
            UiStatistic::ExpMoment { theta } => (theta * y).exp(),
            UiStatistic::NegativeMoment { p } => (-y).max(0.0).powf(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UiRow {
    pub t: f64,
    pub statistic: String,
    pub value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct UiOptions {
    pub replicas: usize,
    pub bootstrap: usize,
    pub ci_tail: f64,
    pub seed: u64,
    pub stream: u64,
}

impl Default for UiOptions {
    fn default() -> Self {
        UiOptions { replicas: 10_000, bootstrap: 200, ci_tail: 0.025, seed: 1, stream: 0 }
    }
}

/// Normalized deviations `Y = (nu(t) - t/mu) / a(t)`, one per replica, in replica order.
pub fn normalized_deviations(spec: &RenewalSpec, t: f64, opts: &UiOptions, t_index: u64) -> Result<Vec<f64>> {
    let mu = spec.mu();
    let a = spec.a(t);
    (0..opts.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(opts.seed, opts.stream.wrapping_add(t_index), r);
            simulate_first_passage(spec, t, &mut rng).map(|n| (n as f64 - t / mu) / a)
        })
        .collect()
}

/// One row per `(t, statistic)`; all statistics at a given `t` share the same replicas.
pub fn ui_profile(spec: &RenewalSpec, t_grid: &[f64], stats: &[UiStatistic], opts: &UiOptions) -> Result<Vec<UiRow>> {
    if opts.replicas < 2 {
        return Err(Error::Domain("ui profile needs at least two replicas".into()));
    }
    let mut rows = Vec::new();
    for (i, &t) in t_grid.iter().enumerate() {
        let ys = normalized_deviations(spec, t, opts, i as u64)?;
        for (j, st) in stats.iter().enumerate() {
            let vals: Vec<f64> = ys.iter().map(|&y| st.transform(y)).collect();
            let mut rng = substream(opts.seed, opts.stream.wrapping_add(t_grid.len() as u64 + i as u64), j as u64);
            let (ci_lo, ci_hi) = bootstrap_ci(&vals, opts.bootstrap, opts.ci_tail, &mut rng, mean);
            rows.push(UiRow { t, statistic: st.name(), value: mean(&vals), ci_lo, ci_hi });
        }
    }
    Ok(rows)
}

/// `max / min` of the values of one statistic across the grid.
pub fn profile_variation(rows: &[UiRow], statistic: &str) -> f64 {
    let v: Vec<f64> = rows.iter().filter(|r| r.statistic == statistic).map(|r| r.value).collect();
    v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min)
}
