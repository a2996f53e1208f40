//! Experiment drivers. Each returns plain data; deciding pass or fail is up to the caller.
//!
//! Every replica draws from its own substream keyed by `(seed, experiment, replica)`,
//! so the tables are identical for any worker count.

use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{bias_params, critical_bias, ruin_quantities, trap_length_pmf};
use crate::coupling::{build_coupled_environment, check_visit_domination, exact_full_marginal, exact_pruned_marginal, simulate_coupling, CoupledEnvironment};
use crate::env::{sample_environment, sample_environment_cycles, ColumnChain, CycleSource, Environment, WindowSampler};
use crate::error::{Error, Result};
use crate::regen::{ccdf_slope, tail_index_estimate, IncrementConfig, IncrementSampler, TailConfig, TailEstimate, TailMethod};
use crate::seeding::{substream, tag};
use crate::stats::{bootstrap_ci, chi_square_gof, histogram_tv, iqr, mean, median, std_error, ChiSquareTest};
use crate::traps::{enumerate_traps, enumerate_traps_unchecked};
use crate::walk::{exact_k_step_distribution, exact_pruned_k_step, escape_from_bottom, simulate_trap_excursion, Landscape, StopReason, WalkOptions};

/// Bias either given directly or as a multiple of the critical bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasSpec {
    Absolute(f64),
    CriticalMultiple(f64),
}

impl BiasSpec {
    pub fn resolve(&self, p: f64) -> Result<f64> {
        match *self {
            BiasSpec::Absolute(l) if l > 0.0 => Ok(l),
            BiasSpec::CriticalMultiple(c) if c > 0.0 => Ok(c * critical_bias(p)?),
            _ => Err(Error::Domain(format!("bias must be positive, got {self:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WalkSample {
    pub replica: usize,
    pub n: u64,
    pub x: i64,
    pub min_x: i64,
    pub trap_time: u64,
}

/// Walks from the origin of independent cycle-stationary environments, recording the
/// state at each horizon. Rows are sorted by `(replica, n)`.
pub fn walk_replicas(p: f64, lambda: f64, horizons: &[u64], replicas: usize, seed: u64) -> Result<Vec<WalkSample>> {
    let chain = ColumnChain::build(p)?;
    let mut hs = horizons.to_vec();
    hs.sort_unstable();
    hs.dedup();
    let last = *hs.last().ok_or_else(|| Error::Domain("no horizons given".into()))?;
    let key = tag("walk");
    let rows: Vec<Vec<WalkSample>> = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<Vec<WalkSample>> {
            let mut source = CycleSource::new(chain.clone(), substream(seed, key, 2 * r as u64));
            let env = sample_environment(&mut source, -1024, 4096)?;
            let mut land = Landscape::growing(env, source);
            let mut rng = substream(seed, key, 2 * r as u64 + 1);
            let mut out = Vec::with_capacity(hs.len());
            let mut next = 0;
            let opts = WalkOptions { record_positions: false, track_pre_regeneration: false };
            land.simulate(lambda, (0, 0), &mut rng, opts, |s| {
                while next < hs.len() && s.time == hs[next] {
                    out.push(WalkSample { replica: r, n: s.time, x: s.x, min_x: s.min_x, trap_time: s.trap_time });
                    next += 1;
                }
                (s.time >= last).then_some(StopReason::Horizon)
            })?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Positions at horizon `n`, in replica order.
pub fn positions_at(samples: &[WalkSample], n: u64) -> Vec<f64> {
    samples.iter().filter(|s| s.n == n).map(|s| s.x as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedRow {
    pub n: u64,
    /// Median of `X_n log(n) / n`.
    pub median_scaled: f64,
    /// Median of `X_n / n`.
    pub median_speed: f64,
}

pub fn critical_speed_table(samples: &[WalkSample], horizons: &[u64]) -> Vec<SpeedRow> {
    horizons
        .iter()
        .map(|&n| {
            let xs = positions_at(samples, n);
            let nf = n as f64;
            SpeedRow {
                n,
                median_scaled: median(&xs.iter().map(|x| x * nf.ln() / nf).collect::<Vec<_>>()),
                median_speed: median(&xs.iter().map(|x| x / nf).collect::<Vec<_>>()),
            }
        })
        .collect()
}

/// Consecutive ratios `v[i+1] / v[i]`.
pub fn consecutive_ratios(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| w[1] / w[0]).collect()
}

/// Fluctuation scale for tail index `alpha`: `sqrt(n log n)` at 2, `n^(1/alpha)` on (1, 2),
/// `n^alpha` below 1 (where the walk itself scales like `n^alpha`).
pub fn fluctuation_scale(alpha: f64, n: f64) -> f64 {
    if (alpha - 2.0).abs() < 1e-12 {
        (n * n.ln()).sqrt()
    } else if alpha > 1.0 {
        n.powf(1.0 / alpha)
    } else {
        n.powf(alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluctuationRow {
    pub n: u64,
    pub alpha: f64,
    pub speed_estimate: f64,
    pub iqr: f64,
}

/// IQR of `(X_n - n v) / scale(n)`; for `alpha <= 1` no centering is applied.
pub fn fluctuation_table(samples: &[WalkSample], horizons: &[u64], alpha: f64) -> Vec<FluctuationRow> {
    let last = *horizons.iter().max().expect("nonempty horizons");
    let v = if alpha > 1.0 { mean(&positions_at(samples, last)) / last as f64 } else { 0.0 };
    horizons
        .iter()
        .map(|&n| {
            let nf = n as f64;
            let ys: Vec<f64> = positions_at(samples, n).iter().map(|x| (x - nf * v) / fluctuation_scale(alpha, nf)).collect();
            FluctuationRow { n, alpha, speed_estimate: v, iqr: iqr(&ys) }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedEstimate {
    pub n: u64,
    pub value: f64,
    pub se: f64,
    pub ci: (f64, f64),
}

/// Mean of `X_n / n` over replicas with a percentile bootstrap interval at level `1 - 2 tail`.
pub fn speed_estimate(samples: &[WalkSample], n: u64, tail: f64, seed: u64) -> SpeedEstimate {
    let v: Vec<f64> = positions_at(samples, n).iter().map(|x| x / n as f64).collect();
    let mut rng = substream(seed, tag("speed-bootstrap"), n);
    let ci = bootstrap_ci(&v, 1000, tail, &mut rng, mean);
    SpeedEstimate { n, value: mean(&v), se: std_error(&v), ci }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrapLawReport {
    pub p: f64,
    /// `counts[m - 1]` traps of length `m`.
    pub counts: Vec<u64>,
    pub probabilities: Vec<f64>,
    pub test: ChiSquareTest,
}

/// Lengths of traps sampled under the cycle-stationary law, in chunks of `cycles_per_chunk` cycles.
pub fn trap_law(p: f64, traps: usize, cycles_per_chunk: usize, seed: u64) -> Result<TrapLawReport> {
    let chain = ColumnChain::build(p)?;
    let key = tag("trap-law");
    let mut lengths: Vec<usize> = Vec::with_capacity(traps);
    let mut chunk = 0u64;
    while lengths.len() < traps {
        let batch: Vec<Vec<usize>> = (chunk..chunk + 32)
            .into_par_iter()
            .map(|c| -> Result<Vec<usize>> {
                let mut source = CycleSource::new(chain.clone(), substream(seed, key, c));
                let env = sample_environment_cycles(&mut source, cycles_per_chunk)?;
                let inv = enumerate_traps_unchecked(&env, env.x_lo, env.x_hi());
                Ok(inv
                    .traps
                    .iter()
                    .filter(|t| t.entrance_x > env.x_lo && t.entrance_x + (t.length as i64) < env.x_hi() && !t.in_interior(0) && t.entrance_x != 0)
                    .map(|t| t.length)
                    .collect())
            })
            .collect::<Result<_>>()?;
        chunk += 32;
        for b in batch {
            lengths.extend(b);
        }
    }
    lengths.truncate(traps);
    let max = *lengths.iter().max().unwrap_or(&1);
    let mut counts = vec![0u64; max];
    for &l in &lengths {
        counts[l - 1] += 1;
    }
    let probabilities: Vec<f64> = (1..=max).map(|m| trap_length_pmf(m, p)).collect::<Result<_>>()?;
    let test = chi_square_gof(&counts, &probabilities, 5.0)?;
    Ok(TrapLawReport { p, counts, probabilities, test })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossValidation {
    pub window: i64,
    /// Histograms of the first trap length right of the origin; the last cell counts "no trap".
    pub doob: Vec<u64>,
    pub rejection: Vec<u64>,
    pub tv: f64,
}

const CROSS_CELLS: usize = 40;

fn first_trap_cell(env: &Environment, traps: &[crate::traps::TrapPiece]) -> usize {
    traps
        .iter()
        .filter(|t| t.entrance_x > 0 && t.entrance_x + (t.length as i64) < env.x_hi())
        .min_by_key(|t| t.entrance_x)
        .map(|t| t.length.min(CROSS_CELLS - 1) - 1)
        .unwrap_or(CROSS_CELLS - 1)
}

/// First-trap-length histograms under the Doob sampler and the window oracle.
pub fn sampler_cross_validation(p: f64, window: i64, samples: usize, seed: u64) -> Result<CrossValidation> {
    let chain = ColumnChain::build(p)?;
    let oracle = WindowSampler::new(p, window)?;
    let key_d = tag("cross-doob");
    let key_r = tag("cross-rejection");
    let doob_cells: Vec<usize> = (0..samples as u64)
        .into_par_iter()
        .map(|i| -> Result<usize> {
            let mut source = CycleSource::new(chain.clone(), substream(seed, key_d, i));
            let env = sample_environment(&mut source, -4, window)?;
            let inv = enumerate_traps_unchecked(&env, env.x_lo, env.x_hi());
            Ok(first_trap_cell(&env, &inv.traps))
        })
        .collect::<Result<_>>()?;
    let rej_cells: Vec<usize> = (0..samples as u64)
        .into_par_iter()
        .map(|i| -> Result<usize> {
            let mut rng = substream(seed, key_r, i);
            let (env, _) = oracle.sample(&mut rng, 1_000_000)?;
            let inv = enumerate_traps(&env)?;
            Ok(first_trap_cell(&env, &inv.traps))
        })
        .collect::<Result<_>>()?;
    let hist = |cells: &[usize]| {
        let mut h = vec![0u64; CROSS_CELLS];
        cells.iter().for_each(|&c| h[c] += 1);
        h
    };
    let doob = hist(&doob_cells);
    let rejection = hist(&rej_cells);
    let tv = histogram_tv(&doob, &rejection);
    Ok(CrossValidation { window, doob, rejection, tv })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncrementRow {
    pub replica: usize,
    pub tau_inc: u64,
    pub rho_inc: i64,
    pub attempts: u64,
    pub censored: bool,
    pub law_tag: &'static str,
}

/// Accepted regeneration increments, one per replica.
pub fn regeneration_increments(p: f64, lambda: f64, samples: usize, cfg: IncrementConfig, seed: u64) -> Result<Vec<IncrementRow>> {
    let sampler = IncrementSampler::new(p, lambda, cfg)?;
    let key = tag("regen-increments");
    (0..samples)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, key, r as u64);
            let s = sampler.sample(&mut rng)?;
            Ok(IncrementRow { replica: r, tau_inc: s.tau, rho_inc: s.rho, attempts: s.attempts, censored: s.censored, law_tag: s.law_tag.as_str() })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub alpha: f64,
    pub lambda: f64,
    pub samples: usize,
    pub censored: usize,
    pub acceptance_rate: f64,
    pub escape_lower_bound: f64,
    pub slope: f64,
    pub slope_se: f64,
    pub band: (f64, f64),
    pub regression: TailEstimate,
    pub hill: TailEstimate,
}

pub fn tail_report(p: f64, lambda: f64, rows: &[IncrementRow], band: (f64, f64), seed: u64) -> Result<TailReport> {
    let b = bias_params(p, lambda)?;
    let taus: Vec<f64> = rows.iter().map(|r| r.tau_inc as f64).collect();
    let fit = ccdf_slope(&taus, band.0, band.1, 25)?;
    let mut rng = substream(seed, tag("tail-bootstrap"), (lambda * 1e6) as u64);
    let cfg = TailConfig::default();
    let regression = tail_index_estimate(&taus, TailMethod::LoglogRegression, &cfg, &mut rng)?;
    let hill = tail_index_estimate(&taus, TailMethod::Hill, &cfg, &mut rng)?;
    let attempts: u64 = rows.iter().map(|r| r.attempts).sum();
    Ok(TailReport {
        alpha: b.alpha,
        lambda,
        samples: rows.len(),
        censored: rows.iter().filter(|r| r.censored).count(),
        acceptance_rate: rows.len() as f64 / attempts as f64,
        escape_lower_bound: b.p_esc,
        slope: fit.slope,
        slope_se: fit.slope_se,
        band,
        regression,
        hill,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedIdentity {
    pub direct: f64,
    pub direct_se: f64,
    pub ratio: f64,
    pub ratio_se: f64,
    pub z: f64,
}

/// Compares the direct speed estimate against `sum rho / sum tau` of the increments.
pub fn speed_identity(direct: &SpeedEstimate, rows: &[IncrementRow]) -> SpeedIdentity {
    let tau: Vec<f64> = rows.iter().map(|r| r.tau_inc as f64).collect();
    let rho: Vec<f64> = rows.iter().map(|r| r.rho_inc as f64).collect();
    let (mt, mr) = (mean(&tau), mean(&rho));
    let ratio = mr / mt;
    // delta method for a ratio of means
    let resid: Vec<f64> = tau.iter().zip(&rho).map(|(t, r)| r - ratio * t).collect();
    let ratio_se = std_error(&resid) / mt;
    let z = (direct.value - ratio).abs() / (direct.se.powi(2) + ratio_se.powi(2)).sqrt();
    SpeedIdentity { direct: direct.value, direct_se: direct.se, ratio, ratio_se, z }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuinRow {
    pub m: usize,
    pub lambda: f64,
    pub quantity: &'static str,
    pub empirical: f64,
    pub se: f64,
    pub exact: f64,
}

impl RuinRow {
    pub fn z(&self) -> f64 {
        let d = (self.empirical - self.exact).abs();
        if self.se > 0.0 {
            d / self.se
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

fn bernoulli_row(m: usize, lambda: f64, quantity: &'static str, hits: u64, n: u64, exact: f64) -> RuinRow {
    let f = hits as f64 / n as f64;
    RuinRow { m, lambda, quantity, empirical: f, se: (exact * (1.0 - exact) / n as f64).sqrt(), exact }
}

/// Escape probability, hit-bottom probability and mean bottom returns for each `(m, lambda)` cell.
pub fn ruin_oracles(lengths: &[usize], lambdas: &[f64], excursions: u64, seed: u64) -> Result<Vec<RuinRow>> {
    let cells: Vec<(usize, f64)> = lambdas.iter().flat_map(|&l| lengths.iter().map(move |&m| (m, l))).collect();
    let key = tag("ruin");
    let rows: Vec<Vec<RuinRow>> = cells
        .par_iter()
        .enumerate()
        .map(|(i, &(m, lambda))| -> Result<Vec<RuinRow>> {
            let q = ruin_quantities(m, lambda)?;
            let mut rng = substream(seed, key, i as u64);
            let escapes = (0..excursions).filter(|_| escape_from_bottom(m, lambda, &mut rng, false)).count() as u64;
            let mut reached = 0u64;
            let mut returns = Vec::new();
            for _ in 0..excursions {
                let e = simulate_trap_excursion(m, lambda, &mut rng, false);
                if e.reached_bottom {
                    reached += 1;
                    returns.push(e.bottom_returns as f64);
                }
            }
            let geo_mean = (1.0 - q.e_m) / q.e_m;
            let geo_se = ((1.0 - q.e_m) / (q.e_m * q.e_m) / returns.len() as f64).sqrt();
            Ok(vec![
                bernoulli_row(m, lambda, "escape_probability", escapes, excursions, q.e_m),
                bernoulli_row(m, lambda, "hit_bottom", reached, excursions, q.hit_bottom),
                RuinRow { m, lambda, quantity: "bottom_returns_mean", empirical: mean(&returns), se: geo_se, exact: geo_mean },
            ])
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Small handcrafted windows whose traps are short enough for the coupling at moderate bias.
pub fn coupling_windows() -> Vec<(&'static str, Environment)> {
    let all = |n: i64| (0..n).collect::<Vec<i64>>();
    vec![
        ("bottom_trap_len2", Environment::from_edges(0, 8, &all(8), &[0, 1, 2, 3, 5, 6, 7], &[0, 2, 5, 7])),
        ("top_trap_len1", Environment::from_edges(0, 7, &[0, 1, 2, 4, 5, 6], &all(7), &[0, 2, 4, 7])),
        ("three_traps", Environment::from_edges(0, 9, &[0, 1, 2, 3, 4, 5, 6, 8], &[0, 1, 3, 4, 5, 6, 7, 8], &[0, 1, 3, 5, 8])),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalCheck {
    pub window: String,
    pub lambda: f64,
    pub steps: usize,
    pub obstacles: usize,
    pub full_tv: f64,
    pub pruned_tv: f64,
}

pub fn coupling_marginal_check(name: &str, env: &Environment, lambda: f64, steps: usize) -> Result<MarginalCheck> {
    let cenv = CoupledEnvironment::from_full(env.clone(), lambda)?;
    let full = exact_full_marginal(&cenv, steps)?;
    let direct = exact_k_step_distribution(&cenv.full, lambda, (0, 0), steps)?;
    let pruned = exact_pruned_marginal(&cenv, steps)?;
    let direct_p = exact_pruned_k_step(&cenv.pruned, (0, 0), steps)?;
    Ok(MarginalCheck {
        window: name.to_string(),
        lambda,
        steps,
        obstacles: cenv.pruned.obstacles.len(),
        full_tv: full.total_variation(&direct),
        pruned_tv: pruned.total_variation(&direct_p),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominationRow {
    pub replica: usize,
    pub steps: u64,
    pub vertices_checked: usize,
    pub entrances_checked: usize,
    pub violations: usize,
    /// Steps spent in each coupling case.
    pub cases: std::collections::BTreeMap<u8, u64>,
}

/// Runs the coupled chain on sampled environments and counts domination violations.
pub fn domination_run(p: f64, lambda: f64, replicas: usize, steps: u64, extent: i64, seed: u64) -> Result<Vec<DominationRow>> {
    let key = tag("domination");
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, key, r as u64);
            let cenv = build_coupled_environment(p, lambda, &mut rng, extent, None)?;
            let traj = simulate_coupling(&cenv, steps, &mut rng)?;
            let rep = check_visit_domination(&traj, &cenv);
            Ok(DominationRow {
                replica: r,
                steps,
                vertices_checked: rep.vertices_checked,
                entrances_checked: rep.entrances_checked,
                violations: rep.violations.len() + rep.entrance_violations.len(),
                cases: traj.case_counts(),
            })
        })
        .collect()
}

/// Geometric grid with `per_decade` points per decade from `lo` to `hi`, rounded to integers.
pub fn geometric_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<u64> {
    let steps = ((hi / lo).log10() * per_decade as f64).round() as usize;
    let mut g: Vec<u64> = (0..=steps).map(|i| (lo * 10f64.powf(i as f64 / per_decade as f64)).round() as u64).collect();
    g.dedup();
    g
}
