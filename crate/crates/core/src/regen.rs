//! Regeneration points and times, increment sampling and tail-index estimation.
//!
//! A regeneration point is a pre-regeneration point with `x > 0` that the walk
//! visits exactly once. On a finite horizon this is certified when the walk
//! has moved `delta` columns past the point without coming back.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{sample_environment, ColumnChain, CycleSource, WindowSampler};
use crate::error::{Error, Result};
use crate::stats::{bootstrap_ci, linear_fit, sorted, LinearFit};
use crate::walk::{Landscape, StepLaw, Trajectory};

pub const DEFAULT_DELTA: i64 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawTag {
    FirstIncrementUnderP,
    GenericIncrement,
    CircConditioned,
}

impl LawTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            LawTag::FirstIncrementUnderP => "first_increment_under_P",
            LawTag::GenericIncrement => "generic_increment",
            LawTag::CircConditioned => "circ_conditioned",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegenerationRecord {
    pub rho: Vec<i64>,
    pub tau: Vec<u64>,
    pub censored: Vec<bool>,
    pub law_tag: LawTag,
}

impl RegenerationRecord {
    /// Certified entries only.
    pub fn certified(&self) -> Vec<(u64, i64)> {
        (0..self.rho.len()).filter(|&i| !self.censored[i]).map(|i| (self.tau[i], self.rho[i])).collect()
    }

    /// `(tau_{k+1} - tau_k, rho_{k+1} - rho_k)` for consecutive certified entries, `k >= 1`.
    pub fn increments(&self) -> Vec<(u64, i64)> {
        self.certified().windows(2).map(|w| (w[1].0 - w[0].0, w[1].1 - w[0].1)).collect()
    }

    /// First certified regeneration `(tau_1, rho_1)`.
    pub fn first(&self) -> Option<(u64, i64)> {
        self.certified().first().copied()
    }
}

/// Regeneration points of a finished trajectory.
///
/// Entries are pre-regeneration points with `x > 0` visited exactly once. An
/// entry is certified when the final position lies at least `delta` to its
/// right; the remaining once-visited points are kept as censored.
pub fn detect_regenerations(traj: &Trajectory, delta: f64) -> RegenerationRecord {
    let final_x = traj.state.x;
    let mut rec = RegenerationRecord { rho: Vec::new(), tau: Vec::new(), censored: Vec::new(), law_tag: LawTag::GenericIncrement };
    for (&x, &(t, count)) in traj.state.pre_visits.range(1..) {
        if count != 1 {
            continue;
        }
        rec.rho.push(x);
        rec.tau.push(t);
        rec.censored.push(((final_x - x) as f64) < delta);
    }
    rec
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncrementConfig {
    pub delta: i64,
    /// Steps after which an attempt stops and is reported censored.
    pub time_cap: u64,
    /// Rejections allowed before a budget error.
    pub max_rejections: u64,
    /// Initial right extent of a freshly sampled environment.
    pub initial_right: i64,
}

impl Default for IncrementConfig {
    fn default() -> Self {
        Self { delta: DEFAULT_DELTA, time_cap: 2_000_000, max_rejections: 100_000, initial_right: 1024 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementSample {
    pub tau: u64,
    pub rho: i64,
    /// Attempts used, the accepted one included.
    pub attempts: u64,
    pub censored: bool,
    pub law_tag: LawTag,
}

enum Outcome {
    Accepted { tau: u64, rho: i64 },
    Censored { tau: u64, rho: i64 },
    Rejected,
}

/// Runs the walk from the origin until the leftmost once-visited pre-regeneration
/// point with `x > 0` is certified.
fn run_to_first_regeneration<R: Rng, G: Rng + ?Sized>(land: &mut Landscape<R>, lambda: f64, rng: &mut G, cfg: &IncrementConfig, reject_origin: bool) -> Result<Outcome> {
    let full = StepLaw::full(lambda);
    let obst = StepLaw::obstacle(lambda);
    let (mut x, mut y) = (0i64, 0u8);
    let mut t = 0u64;
    let mut visits: BTreeMap<i64, (u64, u32)> = BTreeMap::new();
    let mut cur: Option<i64> = None;
    loop {
        if t >= cfg.time_cap {
            return Ok(match cur {
                Some(c) => Outcome::Censored { tau: visits[&c].0, rho: c },
                None => Outcome::Censored { tau: t, rho: x },
            });
        }
        let u = rng.gen::<f64>();
        let (nx, ny) = match land.step(x, y, u, &full, &obst) {
            Ok(v) => v,
            Err(Error::WindowExit { .. }) => {
                return Ok(match cur {
                    Some(c) => Outcome::Censored { tau: visits[&c].0, rho: c },
                    None => Outcome::Censored { tau: t, rho: x },
                })
            }
            Err(e) => return Err(e),
        };
        t += 1;
        if reject_origin && nx == 0 && ny == 0 {
            return Ok(Outcome::Rejected);
        }
        if (nx, ny) != (x, y) && ny == 0 && nx > 0 && land.is_pre_regeneration(nx) {
            let e = visits.entry(nx).or_insert((t, 0));
            e.1 += 1;
            if e.1 == 1 {
                // every pre-regeneration point left of a fresh one has been visited already
                cur.get_or_insert(nx);
            } else if cur == Some(nx) {
                cur = visits.range(nx + 1..).find(|(_, v)| v.1 == 1).map(|(&k, _)| k);
            }
        }
        x = nx;
        y = ny;
        if let Some(c) = cur {
            if x >= c + cfg.delta {
                return Ok(Outcome::Accepted { tau: visits[&c].0, rho: c });
            }
        }
    }
}

/// Sampler of `(tau_2 - tau_1, rho_2 - rho_1)` through the cycle-stationary law
/// conditioned on no return to the origin.
#[derive(Debug, Clone)]
pub struct IncrementSampler {
    pub chain: ColumnChain,
    pub lambda: f64,
    pub cfg: IncrementConfig,
}

impl IncrementSampler {
    pub fn new(p: f64, lambda: f64, cfg: IncrementConfig) -> Result<Self> {
        if lambda <= 0.0 {
            return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self { chain: ColumnChain::build(p)?, lambda, cfg })
    }

    /// One attempt; `None` when the walk came back to the origin.
    pub fn attempt<G: Rng + ?Sized>(&self, rng: &mut G) -> Result<Option<(u64, i64, bool)>> {
        let mut source = CycleSource::new(self.chain.clone(), ChaCha8Rng::seed_from_u64(rng.gen()));
        let env = sample_environment(&mut source, -64, self.cfg.initial_right)?;
        let mut land = Landscape::growing(env, source);
        Ok(match run_to_first_regeneration(&mut land, self.lambda, rng, &self.cfg, true)? {
            Outcome::Accepted { tau, rho } => Some((tau, rho, false)),
            Outcome::Censored { tau, rho } => Some((tau, rho, true)),
            Outcome::Rejected => None,
        })
    }

    pub fn sample<G: Rng + ?Sized>(&self, rng: &mut G) -> Result<IncrementSample> {
        let mut attempts = 0;
        while attempts <= self.cfg.max_rejections {
            attempts += 1;
            if let Some((tau, rho, censored)) = self.attempt(rng)? {
                return Ok(IncrementSample { tau, rho, attempts, censored, law_tag: LawTag::CircConditioned });
            }
        }
        Err(Error::Budget { what: "regeneration increment rejections", attempts })
    }
}

pub fn sample_regeneration_increment<G: Rng + ?Sized>(p: f64, lambda: f64, rng: &mut G) -> Result<IncrementSample> {
    IncrementSampler::new(p, lambda, IncrementConfig::default())?.sample(rng)
}

/// `(tau_1, rho_1)` under the annealed law with the environment conditioned on `0` in the cluster.
pub fn sample_first_regeneration<G: Rng + ?Sized>(sampler: &WindowSampler, lambda: f64, rng: &mut G, cfg: &IncrementConfig, budget: u64) -> Result<IncrementSample> {
    let (env, _) = sampler.sample(rng, budget)?;
    let mut land: Landscape<ChaCha8Rng> = Landscape::fixed(env)?;
    let (tau, rho, censored) = match run_to_first_regeneration(&mut land, lambda, rng, cfg, false)? {
        Outcome::Accepted { tau, rho } => (tau, rho, false),
        Outcome::Censored { tau, rho } => (tau, rho, true),
        Outcome::Rejected => unreachable!("no rejection without origin check"),
    };
    Ok(IncrementSample { tau, rho, attempts: 1, censored, law_tag: LawTag::FirstIncrementUnderP })
}

/// `(k(n), nu(n))` with `k(n) = max{k : tau_k <= n}` over `tau_1 < tau_2 < ...`.
pub fn renewal_counts(tau: &[u64], n: u64) -> (usize, usize) {
    let k = tau.partition_point(|&t| t <= n);
    (k, k + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMethod {
    LoglogRegression,
    Hill,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailConfig {
    /// Quantile band of the complementary-CDF fit.
    pub band: (f64, f64),
    /// Order statistics used by the Hill estimator; `None` means `ceil(sqrt(N))`.
    pub hill_k: Option<usize>,
    pub bootstrap: usize,
    /// One-sided tail mass of the bootstrap interval.
    pub ci_tail: f64,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self { band: (0.90, 0.999), hill_k: None, bootstrap: 200, ci_tail: 0.025 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub method: TailMethod,
    pub estimate: f64,
    pub ci: (f64, f64),
    pub band: (f64, f64),
    pub k: usize,
    pub n: usize,
    pub light_tail_suspected: bool,
}

pub const LIGHT_TAIL_THRESHOLD: f64 = 5.0;
const MIN_TAIL_SAMPLES: usize = 1000;

fn hill_sorted(s: &[f64], k: usize) -> f64 {
    let n = s.len();
    let threshold = s[n - 1 - k];
    let sum: f64 = s[n - k..].iter().map(|&v| (v / threshold).ln()).sum();
    k as f64 / sum
}

fn loglog_sorted(s: &[f64], band: (f64, f64)) -> f64 {
    let n = s.len();
    let lo = ((band.0 * n as f64).floor() as usize).min(n - 1);
    let hi = ((band.1 * n as f64).ceil() as usize).min(n - 1);
    let stride = ((hi - lo) / 2000).max(1);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut i = lo;
    while i <= hi {
        xs.push(s[i].ln());
        ys.push(((n - i) as f64 / n as f64).ln());
        i += stride;
    }
    linear_fit(&xs, &ys).map(|f| -f.slope).unwrap_or(f64::NAN)
}

/// Tail index with a percentile bootstrap interval.
pub fn tail_index_estimate<G: Rng + ?Sized>(samples: &[f64], method: TailMethod, cfg: &TailConfig, rng: &mut G) -> Result<TailEstimate> {
    if samples.len() < MIN_TAIL_SAMPLES {
        return Err(Error::Domain(format!("need at least {MIN_TAIL_SAMPLES} samples, got {}", samples.len())));
    }
    if samples.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(Error::Domain("samples must be positive and finite".into()));
    }
    let s = sorted(samples);
    if s[0] == s[s.len() - 1] {
        return Err(Error::Degenerate("all samples equal".into()));
    }
    let n = s.len();
    let k = cfg.hill_k.unwrap_or((n as f64).sqrt().ceil() as usize).clamp(2, n - 1);
    let band = cfg.band;
    let mut stat = |v: &[f64]| -> f64 {
        let s = sorted(v);
        match method {
            TailMethod::Hill => hill_sorted(&s, k),
            TailMethod::LoglogRegression => loglog_sorted(&s, band),
        }
    };
    let estimate = stat(&s);
    if !estimate.is_finite() {
        return Err(Error::Degenerate("tail fit produced a non-finite estimate".into()));
    }
    let ci = if cfg.bootstrap > 0 { bootstrap_ci(&s, cfg.bootstrap, cfg.ci_tail, rng, &mut stat) } else { (estimate, estimate) };
    Ok(TailEstimate { method, estimate, ci, band, k, n, light_tail_suspected: estimate > LIGHT_TAIL_THRESHOLD })
}

/// Complementary CDF `P(X >= n)` on `points` log-spaced values of `[lo, hi]`.
pub fn ccdf_grid(samples: &[f64], lo: f64, hi: f64, points: usize) -> Vec<(f64, f64)> {
    let s = sorted(samples);
    let n = s.len() as f64;
    (0..points)
        .map(|j| {
            let t = lo * (hi / lo).powf(j as f64 / (points - 1) as f64);
            let below = s.partition_point(|&v| v < t);
            (t, (s.len() - below) as f64 / n)
        })
        .collect()
}

/// Least-squares slope of `log P(X >= n)` against `log n` over `[lo, hi]`, skipping empty grid points.
pub fn ccdf_slope(samples: &[f64], lo: f64, hi: f64, points: usize) -> Result<LinearFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = ccdf_grid(samples, lo, hi, points).into_iter().filter(|&(_, c)| c > 0.0).map(|(t, c)| (t.ln(), c.ln())).unzip();
    linear_fit(&xs, &ys)
}

/// Empirical `E[X^kappa]`.
pub fn moment(samples: &[f64], kappa: f64) -> f64 {
    samples.iter().map(|v| v.powf(kappa)).sum::<f64>() / samples.len() as f64
}
