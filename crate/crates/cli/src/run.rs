//! One function per subcommand. Each reads its keys from the config, writes its tables and
//! returns a JSON summary plus any invariant violations met along the way.

use anyhow::{bail, Result};
use ladderwalk::analytic::{bias_params, critical_bias, first_passage_mgf_slope_at_one, max_valid_obstacle_length, obstacle_transitions, pruned_energy_bound, ruin_quantities, trap_length_mean, trap_length_pmf};
use ladderwalk::env::{find_pre_regeneration_points, has_crossing, sample_environment_cycles, ColumnChain, CycleSource, Environment, WindowSampler};
use ladderwalk::experiments::{
    consecutive_ratios, coupling_marginal_check, coupling_windows, critical_speed_table, domination_run, fluctuation_table, geometric_grid, regeneration_increments, ruin_oracles, sampler_cross_validation, speed_estimate, speed_identity, tail_report, trap_law, walk_replicas, WalkSample,
};
use ladderwalk::regen::IncrementConfig;
use ladderwalk::renewal::{profile_variation, ui_profile, Increment, Normalizer, RenewalSpec, UiOptions, UiStatistic};
use ladderwalk::rice::{residue_series, scaling_profile, RiceConfig, Variant, DEFAULT_DIRECT_CAP, DEFAULT_RESIDUE_K};
use ladderwalk::seeding::{substream, tag};
use ladderwalk::traps::{enumerate_traps, inventory_csv};
use serde_json::{json, Value};

use crate::config::Config;
use crate::output::OutDir;
use crate::row;

pub struct Outcome {
    pub summary: Value,
    pub violations: Vec<String>,
}

impl Outcome {
    fn clean(summary: Value) -> Outcome {
        Outcome { summary, violations: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Experiment {
    Oracle,
    SampleEnv,
    TrapLaw,
    Walk,
    RegenTails,
    CriticalSpeed,
    Fluctuations,
    CouplingCheck,
    Rice,
    Renewal,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Oracle => "oracle",
            Experiment::SampleEnv => "sample-env",
            Experiment::TrapLaw => "trap-law",
            Experiment::Walk => "walk",
            Experiment::RegenTails => "regen-tails",
            Experiment::CriticalSpeed => "critical-speed",
            Experiment::Fluctuations => "fluctuations",
            Experiment::CouplingCheck => "coupling-check",
            Experiment::Rice => "rice",
            Experiment::Renewal => "renewal",
        }
    }

    pub fn keys(self) -> &'static [&'static str] {
        const BIAS: [&str; 3] = ["lambda", "lambda_over_critical", "alpha"];
        match self {
            Experiment::Oracle => &[BIAS[0], BIAS[1], BIAS[2], "lengths", "excursions"],
            Experiment::SampleEnv => &["sampler", "cycles", "window", "count", "budget", "cross_validate"],
            Experiment::TrapLaw => &["traps", "cycles_per_chunk"],
            Experiment::Walk | Experiment::CriticalSpeed | Experiment::Fluctuations => &[BIAS[0], BIAS[1], BIAS[2], "horizons", "replicas", "ci_level"],
            Experiment::RegenTails => &[BIAS[0], BIAS[1], BIAS[2], "samples", "band_lo", "band_hi", "delta", "time_cap", "max_rejections", "speed_replicas", "speed_horizon"],
            Experiment::CouplingCheck => &[BIAS[0], BIAS[1], BIAS[2], "window_lambda", "steps", "replicas", "domination_steps", "extent"],
            Experiment::Rice => &[BIAS[0], BIAS[1], BIAS[2], "n_lo", "n_hi", "per_decade", "check_direct", "direct_cap", "residue_terms", "extra_digits"],
            Experiment::Renewal => &["alpha", "d", "first_alpha", "t_lo", "t_hi", "per_decade", "theta", "moment_p", "replicas", "bootstrap", "ci_level", "normalizer"],
        }
    }

    pub fn run(self, cfg: &Config, seed: u64, out: &mut OutDir) -> Result<Outcome> {
        cfg.check_keys(self.name(), self.keys())?;
        match self {
            Experiment::Oracle => oracle(cfg, seed, out),
            Experiment::SampleEnv => sample_env(cfg, seed, out),
            Experiment::TrapLaw => trap_law_cmd(cfg, seed, out),
            Experiment::Walk => walk(cfg, seed, out, 1.0).map(|(o, _)| o),
            Experiment::RegenTails => regen_tails(cfg, seed, out),
            Experiment::CriticalSpeed => critical_speed(cfg, seed, out),
            Experiment::Fluctuations => fluctuations(cfg, seed, out),
            Experiment::CouplingCheck => coupling_check(cfg, seed, out),
            Experiment::Rice => rice(cfg, out),
            Experiment::Renewal => renewal(cfg, seed, out),
        }
    }
}

fn oracle(cfg: &Config, seed: u64, out: &mut OutDir) -> Result<Outcome> {
    let p = cfg.p()?;
    let lambda = cfg.lambda(1.0)?;
    let lengths: Vec<usize> = cfg.get_list("lengths", &(1..=8).collect::<Vec<_>>())?;
    let excursions: u64 = cfg.get("excursions", 0)?;
    let b = bias_params(p, lambda)?;
    let energy = pruned_energy_bound(lambda)?;
    let mut lines = vec![
        format!("p={}", b.p),
        format!("lambda={}", b.lambda),
        format!("lambda_c={}", b.lambda_c),
        format!("alpha={}", b.alpha),
        format!("p_lambda={}", b.p_lambda),
        format!("q_lambda={}", b.q_lambda),
        format!("gamma={}", b.gamma),
        format!("p_esc={}", b.p_esc),
        format!("mean_first_passage={}", b.r),
        format!("mgf_slope_at_one={}", first_passage_mgf_slope_at_one(lambda)?),
        format!("lambda_star={}", b.lambda_star),
        format!("above_lambda_star={}", b.above_lambda_star),
        format!("pruned_energy={}", energy.energy),
        format!("pruned_escape_bound={}", energy.escape_bound),
        format!("trap_length_mean={}", trap_length_mean(p)?),
        format!("max_valid_obstacle_length={}", max_valid_obstacle_length(lambda, 200)?.map_or("none".to_string(), |l| l.to_string())),
    ];
    for &m in &lengths {
        let q = ruin_quantities(m, lambda)?;
        let ob = obstacle_transitions(lambda, m)?;
        lines.push(format!("trap_length_pmf[{m}]={}", trap_length_pmf(m, p)?));
        lines.push(format!("escape_probability[{m}]={}", q.e_m));
        lines.push(format!("escape_probability_lazy[{m}]={}", q.e_m_lazy));
        lines.push(format!("escape_from_entrance[{m}]={}", q.e_prime));
        lines.push(format!("hit_bottom[{m}]={}", q.hit_bottom));
        lines.push(format!("harmonic[{m}]={}", (0..=m).map(|y| q.h(y).to_string()).collect::<Vec<_>>().join(";")));
        lines.push(format!("obstacle_transitions[{m}]={}", ob.probs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")));
        lines.push(format!("obstacle_valid[{m}]={}", ob.valid));
    }
    let mut text = lines.join("\n");
    text.push('\n');
    print!("{text}");
    out.text("oracle.txt", &text)?;

    let mut summary = json!({ "p": p, "lambda": lambda, "alpha": b.alpha });
    if excursions > 0 {
        let rows = ruin_oracles(&lengths, &[lambda], excursions, seed)?;
        let max_z = rows.iter().map(|r| r.z()).fold(0.0, f64::max);
        out.csv("ruin_monte_carlo.csv", &["m", "lambda", "quantity", "empirical", "se", "exact", "z"], rows.iter().map(|r| row![r.m, r.lambda, r.quantity, r.empirical, r.se, r.exact, r.z()]))?;
        summary["excursions"] = json!(excursions);
        summary["max_z"] = json!(max_z);
    }
    Ok(Outcome::clean(summary))
}

fn sample_env(cfg: &Config, seed: u64, out: &mut OutDir) -> Result<Outcome> {
    let p = cfg.p()?;
    let sampler: String = cfg.get("sampler", "cycle".to_string())?;
    let count: usize = cfg.get("count", 1)?;
    let budget: u64 = cfg.get("budget", 1_000_000)?;
    let window: i64 = cfg.get("window", 60)?;
    let cross: usize = cfg.get("cross_validate", 0)?;
    let key = tag("sample-env");
    let mut envs = Vec::new();
    for i in 0..count {
        let mut rng = substream(seed, key, i as u64);
        let env: Environment = match sampler.as_str() {
            "cycle" => {
                let cycles: usize = cfg.get("cycles", 20)?;
                let mut source = CycleSource::new(ColumnChain::build(p)?, rng);
                sample_environment_cycles(&mut source, cycles)?
            }
            "window" => WindowSampler::new(p, window)?.sample(&mut rng, budget)?.0,
            other => bail!("`sampler` must be `cycle` or `window`, got `{other}`"),
        };
        envs.push(env);
    }
    let mut violations = Vec::new();
    let mut per_env = Vec::new();
    for (i, env) in envs.iter().enumerate() {
        if !has_crossing(env) {
            violations.push(format!("environment {i} has no left-right crossing"));
        }
        let inv = enumerate_traps(env)?;
        let pre = find_pre_regeneration_points(env)?;
        out.text(&format!("env_{i}.txt"), &env.to_text())?;
        out.text(&format!("traps_{i}.csv"), &inventory_csv(&inv))?;
        per_env.push(json!({
            "index": i,
            "x_lo": env.x_lo,
            "x_hi": env.x_hi(),
            "traps": inv.traps.len(),
            "censored_traps": inv.censored.len(),
            "pre_regeneration_points": pre.len(),
        }));
    }
    let mut summary = json!({ "p": p, "sampler": sampler, "environments": per_env });
    if cross > 0 {
        let cv = sampler_cross_validation(p, window, cross, seed)?;
        let cells = cv.doob.len();
        out.csv(
            "cross_validation.csv",
            &["first_trap_length", "doob", "rejection"],
            (0..cells).map(|c| row![if c + 1 == cells { "none".to_string() } else { (c + 1).to_string() }, cv.doob[c], cv.rejection[c]]),
        )?;
        summary["cross_validation"] = json!({ "window": cv.window, "samples": cross, "tv": cv.tv });
    }
    Ok(Outcome { summary, violations })
}

fn trap_law_cmd(cfg: &Config, seed: u64, out: &mut OutDir) -> Result<Outcome> {
    let p = cfg.p()?;
    let traps: usize = cfg.get("traps", 100_000)?;
    let cycles: usize = cfg.get("cycles_per_chunk", 200)?;
    let rep = trap_law(p, traps, cycles, seed)?;
    out.csv("trap_law.csv", &["length", "observed", "probability"], rep.counts.iter().zip(&rep.probabilities).enumerate().map(|(i, (c, q))| row![i + 1, c, q]))?;
    Ok(Outcome::clean(json!({ "p": p, "traps": traps, "lambda_c": critical_bias(p)?, "chi_square": rep.test })))
}

fn ci_tail(cfg: &Config, default_level: f64) -> Result<f64> {
    let level: f64 = cfg.get("ci_level", default_level)?;
    if !(level > 0.0 && level < 1.0) {
        bail!("`ci_level` must lie in (0, 1), got {level}");
    }
    Ok((1.0 - level) / 2.0)
}

fn walk(cfg: &Config, seed: u64, out: &mut OutDir, default_alpha: f64) -> Result<(Outcome, Vec<WalkSample>)> {
    let p = cfg.p()?;
    let lambda = cfg.lambda(default_alpha)?;
    let horizons: Vec<u64> = cfg.get_list("horizons", &[10_000, 100_000, 1_000_000])?;
    let replicas: usize = cfg.get("replicas", 200)?;
    let tail = ci_tail(cfg, 0.99)?;
    let samples = walk_replicas(p, lambda, &horizons, replicas, seed)?;
    out.csv("walk.csv", &["replica", "n", "X_n", "min_x", "time_in_traps", "horizon_reason"], samples.iter().map(|s| row![s.replica, s.n, s.x, s.min_x, s.trap_time, "horizon"]))?;
    let mut hs = horizons.clone();
    hs.sort_unstable();
    hs.dedup();
    let speeds: Vec<_> = hs.iter().map(|&n| speed_estimate(&samples, n, tail, seed)).collect();
    let b = bias_params(p, lambda)?;
    let summary = json!({ "p": p, "lambda": lambda, "alpha": b.alpha, "replicas": replicas, "ci_tail": tail, "speed": speeds });
    Ok((Outcome::clean(summary), samples))
}

fn critical_speed(cfg: &Config, seed: u64, out: &mut OutDir) -> Result<Outcome> {
    let (mut o, samples) = walk(cfg, seed, out, 1.0)?;
    let mut hs: Vec<u64> = samples.iter().map(|s| s.n).collect();
    hs.sort_unstable();
    hs.dedup();
    let table = critical_speed_table(&samples, &hs);
    out.csv("critical_speed.csv", &["n", "median_x_log_n_over_n", "median_x_over_n"], table.iter().map(|r| row![r.n, r.median_scaled, r.median_speed]))?;
    let scaled: Vec<f64> = table.iter().map(|r| r.median_scaled).collect();
    let speed: Vec<f64> = table.iter().map(|r| r.median_speed).collect();
    o.summary["scaled_ratios"] = json!(consecutive_ratios(&scaled));
    o.summary["speed_decrease_factors"] = json!(consecutive_ratios(&speed).iter().map(|r| 1.0 / r).collect::<Vec<_>>());
    Ok(o)
}

fn fluctuations(cfg: &Config, seed: u64, out: &mut OutDir) -> Result<Outcome> {
    let (mut o, samples) = walk(cfg, seed, out, 2.0)?;
    let alpha = bias_params(cfg.p()?, cfg.lambda(2.0)?)?.alpha;
    let mut hs: Vec<u64> = samples.iter().map(|s| s.n).collect();
    hs.sort_unstable();
    hs.dedup();
    let table = fluctuation_table(&samples, &hs, alpha);
    out.csv("fluctuations.csv", &["n", "alpha", "speed_estimate", "iqr"], table.iter().map(|r| row![r.n, r.alpha, r.speed_estimate, r.iqr]))?;
    let (lo, hi) = table.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.iqr), hi.max(r.iqr)));
    o.summary["iqr_max_over_min"] = json!(hi / lo);
    Ok(o)
}

fn regen_tails(cfg: &Config, seed: u64, out: &mut OutDir) -> Result<Outcome> {
    let p = cfg.p()?;
    let lambda = cfg.lambda(1.0)?;
    let samples: usize = cfg.get("samples", 100_000)?;
    let band = (cfg.get("band_lo", 100.0)?, cfg.get("band_hi", 10_000.0)?);
    let def = IncrementConfig::default();
    let icfg = IncrementConfig {
        delta: cfg.get("delta", def.delta)?,
        time_cap: cfg.get("time_cap", def.time_cap)?,
        max_rejections: cfg.get("max_rejections", def.max_rejections)?,
        ..def
    };
    let rows = regeneration_increments(p, lambda, samples, icfg, seed)?;
    out.csv("increments.csv", &["replica", "tau_inc", "rho_inc", "law_tag", "censored", "attempts"], rows.iter().map(|r| row![r.replica, r.tau_inc, r.rho_inc, r.law_tag, r.censored, r.attempts]))?;
    let report = tail_report(p, lambda, &rows, band, seed)?;
    out.json("tail_report.json", &report)?;
    let mut summary = json!({ "tail": report });
    let speed_replicas: usize = cfg.get("speed_replicas", 0)?;
    if speed_replicas > 0 {
        let horizon: u64 = cfg.get("speed_horizon", 1_000_000)?;
        let walks = walk_replicas(p, lambda, &[horizon], speed_replicas, seed)?;
        let direct = speed_estimate(&walks, horizon, 0.005, seed);
        summary["speed_identity"] = json!(speed_identity(&direct, &rows));
    }
    Ok(Outcome::clean(summary))
}

fn coupling_check(cfg: &Config, seed: u64, out: &mut OutDir) -> Result<Outcome> {
    let p = cfg.p()?;
    let window_lambda: f64 = cfg.get("window_lambda", 0.2)?;
    let steps: usize = cfg.get("steps", 8)?;
    let mut violations = Vec::new();
    let marginals = coupling_windows().iter().map(|(name, env)| coupling_marginal_check(name, env, window_lambda, steps)).collect::<ladderwalk::Result<Vec<_>>>()?;
    for m in &marginals {
        if m.full_tv > 1e-12 || m.pruned_tv > 1e-12 {
            violations.push(format!("window {}: marginal TV full={:e} pruned={:e}", m.window, m.full_tv, m.pruned_tv));
        }
    }
    out.csv("marginals.csv", &["window", "lambda", "steps", "obstacles", "full_tv", "pruned_tv"], marginals.iter().map(|m| row![&m.window, m.lambda, m.steps, m.obstacles, m.full_tv, m.pruned_tv]))?;
    // Written before the domination run so the exact checks survive an invalid-parameter abort.
    out.json("coupling_audit.json", &json!({ "marginals": marginals }))?;

    let replicas: usize = cfg.get("replicas", 100)?;
    if replicas == 0 {
        return Ok(Outcome { summary: json!({ "window_lambda": window_lambda, "marginals": marginals }), violations });
    }
    let lambda = cfg.lambda(1.0)?;
    let dsteps: u64 = cfg.get("domination_steps", 100_000)?;
    let extent: i64 = cfg.get("extent", 4096)?;
    let rows = domination_run(p, lambda, replicas, dsteps, extent, seed)?;
    out.csv("domination.csv", &["replica", "steps", "vertices_checked", "entrances_checked", "violations"], rows.iter().map(|r| row![r.replica, r.steps, r.vertices_checked, r.entrances_checked, r.violations]))?;
    let total: usize = rows.iter().map(|r| r.violations).sum();
    if total > 0 {
        violations.push(format!("{total} visit-domination violations"));
    }
    let audit = json!({ "marginals": marginals, "domination": rows, "lambda": lambda, "violations": total });
    out.json("coupling_audit.json", &audit)?;
    Ok(Outcome { summary: json!({ "window_lambda": window_lambda, "lambda": lambda, "domination_violations": total }), violations })
}

fn rice(cfg: &Config, out: &mut OutDir) -> Result<Outcome> {
    let p = cfg.p()?;
    let lambda = cfg.lambda(1.0)?;
    let mut rc = RiceConfig::new(p, lambda, Variant::Simple)?;
    rc.direct_cap = cfg.get("direct_cap", DEFAULT_DIRECT_CAP)?;
    rc.k_trunc = cfg.get("residue_terms", DEFAULT_RESIDUE_K)?;
    rc.extra_digits = cfg.get("extra_digits", rc.extra_digits)?;
    let grid = geometric_grid(cfg.get("n_lo", 10.0)?, cfg.get("n_hi", 10_000.0)?, cfg.get("per_decade", 4)?);
    let check_direct = cfg.get_bool("check_direct", true)?;
    let prof = scaling_profile(&rc, &grid, check_direct)?;
    out.csv(
        "rice_profile.csv",
        &["n0", "S_simple", "S_squared", "simple_normalized", "squared_normalized", "route_disagreement"],
        prof.rows.iter().map(|r| row![r.n0, r.simple, r.squared, r.simple_normalized, r.squared_normalized, r.disagreement]),
    )?;
    let mut residue_rows = Vec::new();
    for &n0 in &grid {
        for v in [Variant::Simple, Variant::Squared] {
            let rs = residue_series(n0 as f64, &rc.with_variant(v))?;
            residue_rows.push(row![n0, if v == Variant::Simple { "simple" } else { "squared" }, rs.value, rs.asymptotic, rs.leading_constant, rs.converged]);
        }
    }
    out.csv("residue.csv", &["n0", "variant", "residue_value", "asymptotic", "leading_constant", "converged"], residue_rows)?;
    let max_dis = prof.rows.iter().map(|r| r.disagreement).filter(|d| !d.is_nan()).fold(0.0, f64::max);
    let mut violations = Vec::new();
    if max_dis > 1e-10 {
        violations.push(format!("geometric and direct routes disagree by {max_dis:e}"));
    }
    let summary = json!({
        "alpha": rc.alpha,
        "gamma": rc.gamma,
        "t": rc.t,
        "x": rc.x(),
        "simple_max_over_min": prof.simple_ratio,
        "squared_max_over_min": prof.squared_ratio,
        "max_route_disagreement": max_dis,
    });
    Ok(Outcome { summary, violations })
}

fn renewal(cfg: &Config, seed: u64, out: &mut OutDir) -> Result<Outcome> {
    let alpha: f64 = cfg.get("alpha", 1.5)?;
    let d: f64 = cfg.get("d", 1.0)?;
    let normalizer = match cfg.get("normalizer", "natural".to_string())?.as_str() {
        "natural" => Normalizer::Natural,
        "sqrt" => Normalizer::Sqrt,
        other => bail!("`normalizer` must be `natural` or `sqrt`, got `{other}`"),
    };
    let mut spec = RenewalSpec::new(alpha, d)?.with_normalizer(normalizer);
    if let Some(a1) = cfg.get_opt::<f64>("first_alpha")? {
        spec = spec.with_first(Increment::pareto(a1, d)?);
    }
    let grid: Vec<f64> = geometric_grid(cfg.get("t_lo", 100.0)?, cfg.get("t_hi", 100_000.0)?, cfg.get("per_decade", 1)?).into_iter().map(|t| t as f64).collect();
    let stats = [UiStatistic::ExpMoment { theta: cfg.get("theta", 1.0)? }, UiStatistic::NegativeMoment { p: cfg.get("moment_p", 1.2)? }];
    let opts = UiOptions { replicas: cfg.get("replicas", 10_000)?, bootstrap: cfg.get("bootstrap", 200)?, ci_tail: ci_tail(cfg, 0.95)?, seed, stream: 0 };
    let rows = ui_profile(&spec, &grid, &stats, &opts)?;
    out.csv("renewal.csv", &["t", "statistic", "value", "ci_lo", "ci_hi"], rows.iter().map(|r| row![r.t, &r.statistic, r.value, r.ci_lo, r.ci_hi]))?;
    let variation: serde_json::Map<String, Value> = stats.iter().map(|s| (s.name(), json!(profile_variation(&rows, &s.name())))).collect();
    Ok(Outcome::clean(json!({ "alpha": alpha, "d": d, "mean_increment": spec.mu(), "max_over_min": variation })))
}
