//! The twelve end-to-end acceptance criteria, each at its stated sample sizes and
//! tolerances. The `acceptance` test target runs them (see `tests/acceptance.rs`).

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use ladderwalk::analytic::critical_bias;
use ladderwalk::experiments::{
    consecutive_ratios, coupling_marginal_check, coupling_windows, critical_speed_table, domination_run, fluctuation_table, geometric_grid, regeneration_increments, ruin_oracles, sampler_cross_validation, speed_estimate, speed_identity,
    tail_report, trap_law, walk_replicas, WalkSample,
};
use ladderwalk::regen::IncrementConfig;
use ladderwalk::renewal::{profile_variation, ui_profile, Normalizer, RenewalSpec, UiOptions, UiStatistic};
use ladderwalk::rice::{scaling_profile, RiceConfig, Variant};

const P: f64 = 0.5;
pub const SEED: u64 = 20240601;
const HORIZONS: [u64; 3] = [10_000, 100_000, 1_000_000];
const REPLICAS: usize = 200;

pub struct Verdict {
    pub pass: bool,
    /// Measured values and the thresholds they were held to.
    pub detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn lc() -> f64 {
    critical_bias(P).unwrap()
}

/// Walk samples at `lambda_c / alpha`, shared between criteria that use the same runs.
fn walks(alpha: f64) -> Vec<WalkSample> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Vec<WalkSample>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut map = cache.lock().unwrap();
    map.entry(alpha.to_bits()).or_insert_with(|| walk_replicas(P, lc() / alpha, &HORIZONS, REPLICAS, SEED).unwrap()).clone()
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn trap_length_law() -> Verdict {
    let rep = trap_law(P, 100_000, 200, SEED).unwrap();
    verdict(rep.test.p_value > 0.01, format!("chi2 = {:.2} on {} dof, p = {:.4} (need > 0.01)", rep.test.statistic, rep.test.dof, rep.test.p_value))
}

pub fn sampler_agreement() -> Verdict {
    let cv = sampler_cross_validation(P, 60, 100_000, SEED).unwrap();
    verdict(cv.tv < 0.02, format!("TV = {:.5} at N = 60 (need < 0.02)", cv.tv))
}

pub fn regeneration_tails() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for alpha in [0.8, 1.0, 1.5] {
        let lambda = lc() / alpha;
        let rows = regeneration_increments(P, lambda, 100_000, IncrementConfig::default(), SEED).unwrap();
        let rep = tail_report(P, lambda, &rows, (100.0, 10_000.0), SEED).unwrap();
        let ok = (rep.slope + alpha).abs() <= 0.15;
        pass &= ok;
        parts.push(format!("alpha {alpha}: slope {:.3} ({})", rep.slope, if ok { "ok" } else { "off" }));
    }
    verdict(pass, format!("{} (need within 0.15 of -alpha)", parts.join("; ")))
}

pub fn critical_speed() -> Verdict {
    let table = critical_speed_table(&walks(1.0), &HORIZONS);
    let scaled: Vec<f64> = table.iter().map(|r| r.median_scaled).collect();
    let speed: Vec<f64> = table.iter().map(|r| r.median_speed).collect();
    let ratios = consecutive_ratios(&scaled);
    let decrease: Vec<f64> = consecutive_ratios(&speed).iter().map(|r| 1.0 / r).collect();
    let pass = ratios.iter().all(|r| (0.6..=1.5).contains(r)) && decrease.iter().all(|&f| f >= 1.8);
    verdict(pass, format!("scaled ratios {} (need in [0.6, 1.5]); speed decrease factors {} (need >= 1.8)", fmt_list(&ratios), fmt_list(&decrease)))
}

pub fn phase_transition() -> Verdict {
    let n = *HORIZONS.last().unwrap();
    let fast = speed_estimate(&walks(2.0), n, 0.005, SEED);
    let slow = walks(1.0 / 1.5);
    let v_lo = speed_estimate(&slow, HORIZONS[0], 0.005, SEED).value;
    let v_hi = speed_estimate(&slow, n, 0.005, SEED).value;
    let pass = fast.value > 0.0 && fast.ci.0 > 0.0 && v_hi < v_lo / 2.0;
    verdict(pass, format!("v(lc/2) = {:.4}, 99% CI ({:.4}, {:.4}); v(1.5 lc): {:.4} at 1e4, {:.4} at 1e6", fast.value, fast.ci.0, fast.ci.1, v_lo, v_hi))
}

pub fn fluctuation_regimes() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for alpha in [2.0, 1.5, 0.8] {
        let table = fluctuation_table(&walks(alpha), &HORIZONS, alpha);
        let iqr: Vec<f64> = table.iter().map(|r| r.iqr).collect();
        let ratio = iqr.iter().cloned().fold(0.0, f64::max) / iqr.iter().cloned().fold(f64::INFINITY, f64::min);
        pass &= ratio <= 2.0;
        parts.push(format!("alpha {alpha}: IQRs {} max/min {ratio:.3}", fmt_list(&iqr)));
    }
    verdict(pass, format!("{} (need <= 2)", parts.join("; ")))
}

pub fn speed_identity_check() -> Verdict {
    let lambda = lc() / 2.0;
    let rows = regeneration_increments(P, lambda, 10_000, IncrementConfig::default(), SEED).unwrap();
    let n = *HORIZONS.last().unwrap();
    let direct = speed_estimate(&walks(2.0), n, 0.005, SEED);
    let id = speed_identity(&direct, &rows);
    verdict(id.z <= 3.0, format!("direct {:.5} +- {:.5}, ratio {:.5} +- {:.5}, z = {:.3} (need <= 3)", id.direct, id.direct_se, id.ratio, id.ratio_se, id.z))
}

pub fn ruin_oracle_check() -> Verdict {
    let lengths: Vec<usize> = (1..=8).collect();
    let rows = ruin_oracles(&lengths, &[0.5, lc()], 100_000, SEED).unwrap();
    let worst = rows.iter().max_by(|a, b| a.z().total_cmp(&b.z())).unwrap();
    let pass = rows.iter().all(|r| r.z() <= 3.0);
    verdict(pass, format!("{} cells, largest z = {:.3} ({} at m = {}, lambda = {:.4}) (need <= 3)", rows.len(), worst.z(), worst.quantity, worst.m, worst.lambda))
}

pub fn coupling_marginals() -> Verdict {
    let mut worst: f64 = 0.0;
    let windows = coupling_windows();
    for (name, env) in &windows {
        let m = coupling_marginal_check(name, env, 0.2, 8).unwrap();
        worst = worst.max(m.full_tv).max(m.pruned_tv);
    }
    verdict(worst <= 1e-12, format!("{} windows, 8 steps, largest TV = {worst:e} (need <= 1e-12)", windows.len()))
}

pub fn visit_domination() -> Verdict {
    match domination_run(P, lc(), 100, 100_000, 4096, SEED) {
        Ok(rows) => {
            let total: usize = rows.iter().map(|r| r.violations).sum();
            verdict(total == 0, format!("{} replicas, {total} violations (need 0)", rows.len()))
        }
        Err(e) => verdict(false, format!("run aborted: {e}")),
    }
}

pub fn rice_routes() -> Verdict {
    let rc = RiceConfig::new(P, lc(), Variant::Simple).unwrap();
    let grid = geometric_grid(10.0, 10_000.0, 4);
    let prof = scaling_profile(&rc, &grid, true).unwrap();
    let dis = prof.rows.iter().map(|r| r.disagreement).fold(0.0, f64::max);
    let pass = dis <= 1e-10 && prof.simple_ratio <= 10.0 && prof.squared_ratio <= 10.0;
    verdict(pass, format!("route disagreement {dis:e} (need <= 1e-10); max/min simple {:.3}, squared {:.3} (need <= 10)", prof.simple_ratio, prof.squared_ratio))
}

pub fn renewal_integrability() -> Verdict {
    let grid: Vec<f64> = geometric_grid(100.0, 100_000.0, 1).into_iter().map(|t| t as f64).collect();
    let opts = UiOptions { replicas: 10_000, bootstrap: 200, ci_tail: 0.025, seed: SEED, stream: 0 };
    let stats = [UiStatistic::ExpMoment { theta: 1.0 }, UiStatistic::NegativeMoment { p: 1.2 }];
    let rows = ui_profile(&RenewalSpec::new(1.5, 1.0).unwrap(), &grid, &stats, &opts).unwrap();
    let exp_var = profile_variation(&rows, &stats[0].name());
    let neg_var = profile_variation(&rows, &stats[1].name());

    let control_stat = UiStatistic::NegativeMoment { p: 1.2 };
    let control_spec = RenewalSpec::new(2.0, 1.0).unwrap().with_normalizer(Normalizer::Sqrt);
    let control: Vec<f64> = ui_profile(&control_spec, &grid, &[control_stat], &opts).unwrap().iter().map(|r| r.value).collect();
    let monotone = control.windows(2).all(|w| w[1] > w[0]);
    let pass = exp_var < 3.0 && neg_var < 3.0 && monotone;
    verdict(pass, format!("max/min exp {exp_var:.3}, negative {neg_var:.3} (need < 3); sqrt-normalised alpha = 2 control {} (need increasing)", fmt_list(&control)))
}

pub type Criterion = fn() -> Verdict;

/// All criteria, numbered.
pub const CRITERIA: [(u32, Criterion); 12] = [
    (1, trap_length_law),
    (2, sampler_agreement),
    (3, regeneration_tails),
    (4, critical_speed),
    (5, phase_transition),
    (6, fluctuation_regimes),
    (7, speed_identity_check),
    (8, ruin_oracle_check),
    (9, coupling_marginals),
    (10, visit_domination),
    (11, rice_routes),
    (12, renewal_integrability),
];
