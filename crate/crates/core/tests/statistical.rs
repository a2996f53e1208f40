//! Monte Carlo checks of the sampling and walk modules against independent oracles.

use ladderwalk::analytic::{bias_params, critical_bias, pruned_energy_bound, trap_length_mean, trap_length_pmf};
use ladderwalk::coupling::{build_coupled_environment, check_visit_domination, extract_marginals, simulate_coupling};
use ladderwalk::env::{find_pre_regeneration_points, has_crossing, origin_in_cluster, sample_environment, sample_environment_cycles, sample_window_rejection, ColumnChain, CycleSource, Environment, Provenance, WindowSampler};
use ladderwalk::experiments::{coupling_windows, regeneration_increments, sampler_cross_validation};
use ladderwalk::regen::{detect_regenerations, moment, tail_index_estimate, IncrementConfig, TailConfig, TailMethod};
use ladderwalk::renewal::{ui_profile, Increment, RenewalSpec, UiOptions, UiStatistic};
use ladderwalk::rice::{alt_sum_direct, alt_sum_geometric, alt_sum_naive, residue_series, RiceConfig, Variant};
use ladderwalk::stats::{chi_square_gof, lag1_correlation, linear_fit, mean, spearman, std_error};
use ladderwalk::traps::{enumerate_traps, enumerate_traps_unchecked, prune_environment};
use ladderwalk::walk::{exact_k_step_distribution, simulate_trap_excursion, Landscape, StopReason, WalkOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn lc() -> f64 {
    critical_bias(0.5).unwrap()
}

fn growing(p: f64, seed: u64) -> Landscape<ChaCha8Rng> {
    let mut source = CycleSource::new(ColumnChain::build(p).unwrap(), rng(seed));
    let env = sample_environment(&mut source, -256, 1024).unwrap();
    Landscape::growing(env, source)
}

fn config_weight(p: f64, cols: &[u8]) -> f64 {
    cols.iter().map(|&c| (0..3).map(|b| if c >> b & 1 == 1 { p } else { 1.0 - p }).product::<f64>()).product()
}

/// Exhaustive crossing probability of an `n`-column window.
fn crossing_probability(p: f64, n: usize) -> f64 {
    let mut total = 0.0;
    for code in 0u64..1 << (3 * n) {
        let cols: Vec<u8> = (0..n).map(|i| (code >> (3 * i) & 7) as u8).collect();
        let env = Environment::new(p, 0, cols, Provenance::Handcrafted);
        if has_crossing(&env) {
            total += config_weight(p, &env.cols);
        }
    }
    total
}

#[test]
fn perron_root_is_crossing_decay_rate() {
    let chain = ColumnChain::build(0.5).unwrap();
    let probs: Vec<f64> = (3..=7).map(|n| crossing_probability(0.5, n)).collect();
    let ratios: Vec<f64> = probs.windows(2).map(|w| w[1] / w[0]).collect();
    let errs: Vec<f64> = ratios.iter().map(|r| (r / chain.perron_root - 1.0).abs()).collect();
    assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{ratios:?} vs {}", chain.perron_root);
    assert!(*errs.last().unwrap() < 0.01, "{ratios:?} vs {}", chain.perron_root);
}

#[test]
fn cycle_lengths_have_exponential_tail() {
    let chain = ColumnChain::build(0.5).unwrap();
    let mut r = rng(3);
    let lens: Vec<f64> = (0..20_000).map(|_| chain.sample_cycle(&mut r, 1 << 20).unwrap().len() as f64).collect();
    let max = lens.iter().cloned().fold(0.0, f64::max);
    let grid: Vec<f64> = (1..10).map(|j| j as f64 * max / 12.0).collect();
    let logs: Vec<f64> = grid.iter().map(|&l| (lens.iter().filter(|&&x| x >= l).count() as f64 / lens.len() as f64).ln()).collect();
    let fit = linear_fit(&grid, &logs).unwrap();
    assert!(fit.slope + 3.0 * fit.slope_se < 0.0, "slope {} +- {}", fit.slope, fit.slope_se);
}

#[test]
fn cycle_boundaries_start_at_zero_with_independent_gaps() {
    let chain = ColumnChain::build(0.5).unwrap();
    let mut source = CycleSource::new(chain, rng(11));
    let env = sample_environment_cycles(&mut source, 10_000).unwrap();
    let b = &env.cycle_boundaries;
    assert_eq!(b[0], 0);
    assert!(b.windows(2).all(|w| w[1] > w[0]));
    let gaps: Vec<f64> = b.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    let rho = spearman(&gaps[..gaps.len() - 1], &gaps[1..]);
    let se = 1.0 / ((gaps.len() - 1) as f64).sqrt();
    assert!(rho.abs() < 3.0 * se, "spearman {rho}, se {se}");
    // the leftmost column has no left neighbour to certify
    let interior: Vec<i64> = b.iter().copied().filter(|&x| x > env.x_lo).collect();
    assert_eq!(find_pre_regeneration_points(&env).unwrap(), interior);
}

#[test]
fn rejection_acceptance_matches_enumeration() {
    let (p, n) = (0.9, 2i64);
    let width = (2 * n + 1) as usize;
    let mut exact = 0.0;
    for code in 0u64..1 << (3 * width) {
        let cols: Vec<u8> = (0..width).map(|i| (code >> (3 * i) & 7) as u8).collect();
        let env = Environment::new(p, -n, cols, Provenance::WindowRejection);
        if origin_in_cluster(&env) {
            exact += config_weight(p, &env.cols);
        }
    }
    let mut r = rng(5);
    let accepted = 20_000u64;
    let mut attempts = 0u64;
    for _ in 0..accepted {
        let (env, a) = sample_window_rejection(p, n, &mut r, 1_000).unwrap();
        assert!(has_crossing(&env) && origin_in_cluster(&env));
        attempts += a;
    }
    let est = accepted as f64 / attempts as f64;
    let se = (exact * exact * (1.0 - exact) / accepted as f64).sqrt();
    assert!((est - exact).abs() < 3.0 * se, "estimate {est}, exact {exact}, se {se}");
}

#[test]
fn conditioned_windows_always_cross() {
    let s = WindowSampler::new(0.5, 20).unwrap();
    let mut r = rng(8);
    for _ in 0..2000 {
        let (env, _) = s.sample(&mut r, 10_000).unwrap();
        assert!(has_crossing(&env) && origin_in_cluster(&env));
    }
}

#[test]
fn handcrafted_pre_regeneration_points() {
    let top = [0, 1, 2, 3, 4, 9];
    let bottom: Vec<i64> = (0..10).collect();
    let vert = [0, 1, 2, 3, 4, 5, 7, 9, 10];
    let env = Environment::from_edges(0, 10, &top, &bottom, &vert);
    assert_eq!(find_pre_regeneration_points(&env).unwrap(), vec![6, 8]);
}

#[test]
fn origin_covering_trap_is_size_biased() {
    let s = WindowSampler::new(0.5, 30).unwrap();
    let mut r = rng(21);
    let mut covering = Vec::new();
    for _ in 0..20_000 {
        let (env, _) = s.sample(&mut r, 10_000).unwrap();
        let inv = enumerate_traps(&env).unwrap();
        if let Some(t) = inv.traps.iter().find(|t| t.entrance_x <= 0 && 0 <= t.bottom_x()) {
            covering.push(t.length as f64);
        }
    }
    assert!(covering.len() > 500);
    let m = mean(&covering);
    assert!(m - 3.0 * std_error(&covering) > trap_length_mean(0.5).unwrap(), "covering mean {m}");
}

#[test]
fn cross_validation_improves_with_window() {
    let small = sampler_cross_validation(0.5, 6, 20_000, 1).unwrap();
    let large = sampler_cross_validation(0.5, 40, 20_000, 1).unwrap();
    assert!(large.tv < small.tv, "tv {} at 6 vs {} at 40", small.tv, large.tv);
}

#[test]
fn straight_ladder_speed() {
    let lambda = 3.0;
    let len = 3000;
    let all: Vec<i64> = (0..len).collect();
    let env = Environment::from_edges(0, len, &all, &all, &all);
    let mut land: Landscape<ChaCha8Rng> = Landscape::fixed(env).unwrap();
    let n = 2000u64;
    let mut r = rng(2);
    let speeds: Vec<f64> = (0..400)
        .map(|_| {
            let t = land.simulate(lambda, (0, 0), &mut r, WalkOptions { record_positions: false, track_pre_regeneration: false }, |s| (s.time >= n).then_some(StopReason::Horizon)).unwrap();
            assert_eq!(t.state.trap_time, 0);
            t.state.x as f64 / n as f64
        })
        .collect();
    let v = (lambda.exp() - (-lambda).exp()) / (lambda.exp() + 1.0 + (-lambda).exp());
    assert!((mean(&speeds) - v).abs() < 3.0 * std_error(&speeds), "{} vs {v}", mean(&speeds));
}

#[test]
fn escape_frequency_exceeds_lower_bound() {
    let lambda = lc() / 2.0;
    let mut escapes = 0;
    let runs = 2000;
    for i in 0..runs {
        let mut land = growing(0.5, 100 + i);
        let mut r = rng(5000 + i);
        let t = land
            .simulate(lambda, (0, 0), &mut r, WalkOptions { record_positions: false, track_pre_regeneration: false }, |s| {
                if s.time > 0 && s.x == 0 && s.y == 0 {
                    Some(StopReason::ReturnedToOrigin)
                } else {
                    (s.x >= 100).then_some(StopReason::XThreshold)
                }
            })
            .unwrap();
        escapes += (t.reason == StopReason::XThreshold) as u64;
    }
    let p_esc = bias_params(0.5, lambda).unwrap().p_esc;
    assert!(escapes as f64 / runs as f64 >= p_esc, "escape frequency {} below {p_esc}", escapes as f64 / runs as f64);
}

#[test]
fn exact_kernel_matches_simulation() {
    let (_, env) = coupling_windows().remove(2);
    let lambda = 0.7;
    let k = 8u64;
    let exact = exact_k_step_distribution(&env, lambda, (0, 0), k as usize).unwrap();
    let mut land: Landscape<ChaCha8Rng> = Landscape::fixed(env.clone()).unwrap();
    let reps = 1_000_000u64;
    let mut counts = vec![0u64; 2 * env.len()];
    let mut r = rng(9);
    for _ in 0..reps {
        let t = land.simulate(lambda, (0, 0), &mut r, WalkOptions { record_positions: false, track_pre_regeneration: false }, |s| (s.time >= k).then_some(StopReason::Horizon)).unwrap();
        counts[2 * (t.state.x - env.x_lo) as usize + t.state.y as usize] += 1;
    }
    for x in env.x_lo..=env.x_hi() {
        for y in 0..2u8 {
            let q = exact.get(x, y);
            let f = counts[2 * (x - env.x_lo) as usize + y as usize] as f64 / reps as f64;
            let se = (q * (1.0 - q) / reps as f64).sqrt();
            assert!((f - q).abs() <= 3.0 * se, "vertex ({x},{y}): {f} vs {q}");
        }
    }
}

#[test]
fn lazy_excursions_last_longer() {
    let n = 100_000;
    for &(m, lambda) in &[(3usize, 0.5), (5, lc())] {
        let mut r = rng(m as u64);
        let mut lazy: Vec<u64> = (0..n).map(|_| simulate_trap_excursion(m, lambda, &mut r, true).duration).collect();
        let mut plain: Vec<u64> = (0..n).map(|_| simulate_trap_excursion(m, lambda, &mut r, false).duration).collect();
        lazy.sort_unstable();
        plain.sort_unstable();
        for q in [0.1, 0.25, 0.5, 0.75, 0.9, 0.99] {
            let d = plain[(q * n as f64) as usize];
            let f_lazy = lazy.partition_point(|&v| v <= d) as f64 / n as f64;
            let f_plain = plain.partition_point(|&v| v <= d) as f64 / n as f64;
            let se = (2.0 * f_plain * (1.0 - f_plain) / n as f64).sqrt();
            assert!(f_lazy <= f_plain + 3.0 * se, "m={m} at {d}: lazy cdf {f_lazy} above {f_plain}");
        }
    }
}

#[test]
fn walks_keep_advancing() {
    // at alpha = 1 single holding times have tail index 1, so long pauses are expected
    for &(alpha, need) in &[(1.0, 14), (2.0, 20)] {
        let mut advanced = 0;
        for i in 0..20 {
            let mut land = growing(0.5, 900 + i);
            let mut r = rng(950 + i);
            let mut half_max = 0;
            let t = land
                .simulate(lc() / alpha, (0, 0), &mut r, WalkOptions { record_positions: false, track_pre_regeneration: false }, |s| {
                    if s.time == 500_000 {
                        half_max = s.max_x;
                    }
                    (s.time >= 1_000_000).then_some(StopReason::Horizon)
                })
                .unwrap();
            assert!(t.state.max_x > 0);
            if t.state.max_x > half_max {
                advanced += 1;
            }
        }
        assert!(advanced >= need, "alpha {alpha}: {advanced} of 20 advanced");
    }
}

fn long_trajectory(alpha: f64, steps: u64, seed: u64) -> ladderwalk::walk::Trajectory {
    let mut land = growing(0.5, seed);
    land.simulate(lc() / alpha, (0, 0), &mut rng(seed + 1), WalkOptions { record_positions: false, track_pre_regeneration: true }, |s| (s.time >= steps).then_some(StopReason::Horizon)).unwrap()
}

#[test]
fn infinite_margin_certifies_nothing() {
    let t = long_trajectory(2.0, 100_000, 1);
    assert!(!detect_regenerations(&t, 200.0).certified().is_empty());
    assert!(detect_regenerations(&t, f64::INFINITY).certified().is_empty());
}

#[test]
fn regeneration_increments_are_uncorrelated() {
    let t = long_trajectory(2.0, 2_000_000, 7);
    let inc = detect_regenerations(&t, 200.0).increments();
    assert!(inc.len() > 1000, "{} increments", inc.len());
    let se = 1.0 / (inc.len() as f64).sqrt();
    let tau: Vec<f64> = inc.iter().map(|i| i.0 as f64).collect();
    let rho: Vec<f64> = inc.iter().map(|i| i.1 as f64).collect();
    assert!(lag1_correlation(&tau).abs() < 3.0 * se);
    assert!(lag1_correlation(&rho).abs() < 3.0 * se);
}

#[test]
fn increment_acceptance_and_moments() {
    let lambda = lc() / 2.0;
    let rows = regeneration_increments(0.5, lambda, 8000, IncrementConfig::default(), 3).unwrap();
    let attempts: u64 = rows.iter().map(|r| r.attempts).sum();
    let a = rows.len() as f64 / attempts as f64;
    let p_esc = bias_params(0.5, lambda).unwrap().p_esc;
    assert!(a >= p_esc - 3.0 * (a * (1.0 - a) / attempts as f64).sqrt(), "acceptance {a} vs {p_esc}");

    let tau: Vec<f64> = rows.iter().map(|r| r.tau_inc as f64).collect();
    let half = &tau[..tau.len() / 2];
    // kappa = alpha / 2 is finite: doubling the sample leaves the moment nearly unchanged
    let (m1, m2) = (moment(half, 1.0), moment(&tau, 1.0));
    assert!((m2 / m1 - 1.0).abs() < 0.15, "{m1} vs {m2}");
    // kappa = 2 alpha diverges: the largest observation carries a visible share
    let top = tau.iter().cloned().fold(0.0, f64::max);
    let share = top.powi(4) / tau.iter().map(|t| t.powi(4)).sum::<f64>();
    assert!(share > 0.05, "max share {share}");
    let small_share = top / tau.iter().sum::<f64>();
    assert!(small_share < 0.01);

    // spatial increments are light tailed
    let rho: Vec<f64> = rows.iter().map(|r| r.rho_inc as f64).collect();
    let e = |xs: &[f64]| mean(&xs.iter().map(|&x| (0.01 * x).exp()).collect::<Vec<_>>());
    let (e1, e2) = (e(&rho[..rho.len() / 2]), e(&rho));
    assert!((e2 / e1 - 1.0).abs() < 0.1, "{e1} vs {e2}");
}

#[test]
fn tail_estimators_on_synthetic_samples() {
    let mut r = rng(17);
    let pareto: Vec<f64> = (0..100_000).map(|_| (1.0 - r.gen::<f64>()).powf(-1.0 / 1.5)).collect();
    let cfg = TailConfig::default();
    for method in [TailMethod::Hill, TailMethod::LoglogRegression] {
        let e = tail_index_estimate(&pareto, method, &cfg, &mut r).unwrap();
        let se = 1.5 / (e.k as f64).sqrt();
        assert!((e.estimate - 1.5).abs() < 4.0 * se, "{method:?}: {} (k = {})", e.estimate, e.k);
        assert!(!e.light_tail_suspected);
    }
    let expo: Vec<f64> = (0..100_000).map(|_| 1.0 - (1.0 - r.gen::<f64>()).ln()).collect();
    let e = tail_index_estimate(&expo, TailMethod::Hill, &cfg, &mut r).unwrap();
    assert!(e.estimate > 5.0 && e.light_tail_suspected, "{}", e.estimate);
}

#[test]
fn coupled_lengths_follow_trap_law() {
    // small bias keeps every plausible length inside the coupling's valid region
    let lambda = 0.02;
    let mut r = rng(31);
    let mut lengths = Vec::new();
    while lengths.len() < 100_000 {
        let cenv = build_coupled_environment(0.5, lambda, &mut r, 1500, None).unwrap();
        let full_lengths: Vec<usize> = enumerate_traps(&cenv.full).unwrap().traps.iter().map(|t| t.length).collect();
        assert_eq!(full_lengths, cenv.lengths);
        let again = prune_environment(&cenv.full, lambda).unwrap();
        assert_eq!(again.env.cols, cenv.pruned.env.cols);
        lengths.extend(cenv.lengths);
    }
    let max = *lengths.iter().max().unwrap();
    let mut counts = vec![0u64; max];
    lengths.iter().for_each(|&l| counts[l - 1] += 1);
    let probs: Vec<f64> = (1..=max).map(|m| trap_length_pmf(m, 0.5).unwrap()).collect();
    let test = chi_square_gof(&counts, &probs, 5.0).unwrap();
    assert!(test.p_value > 0.01, "{test:?}");
}

#[test]
fn coupling_keeps_pruned_component_out_of_traps() {
    let lambda = 0.02;
    let mut r = rng(41);
    for _ in 0..3 {
        let cenv = build_coupled_environment(0.5, lambda, &mut r, 400, None).unwrap();
        let traj = simulate_coupling(&cenv, 20_000, &mut r).unwrap();
        let (pruned, _full) = extract_marginals(&traj, &cenv);
        assert!(pruned.iter().all(|&u| !cenv.in_piece_interior(cenv.embed(u))));
        assert!(check_visit_domination(&traj, &cenv).is_clean());
    }
}

#[test]
fn pruned_walk_escapes_at_least_as_often_as_bound() {
    let lambda = lc();
    let bound = pruned_energy_bound(lambda).unwrap().escape_bound;
    let (mut escapes, mut runs) = (0u64, 0u64);
    for e in 0..200 {
        let mut source = CycleSource::new(ColumnChain::build(0.5).unwrap(), rng(7000 + e));
        let env = sample_environment(&mut source, -200, 3000).unwrap();
        let pe = prune_environment(&env, lambda).unwrap();
        let mut land: Landscape<ChaCha8Rng> = Landscape::pruned(&pe).unwrap();
        let mut r = rng(8000 + e);
        for _ in 0..10 {
            let t = land
                .simulate(lambda, (0, 0), &mut r, WalkOptions { record_positions: false, track_pre_regeneration: false }, |s| {
                    if s.time > 0 && s.x == 0 && s.y == 0 {
                        Some(StopReason::ReturnedToOrigin)
                    } else {
                        (s.x >= 300).then_some(StopReason::XThreshold)
                    }
                })
                .unwrap();
            runs += 1;
            escapes += (t.reason == StopReason::XThreshold) as u64;
        }
    }
    let f = escapes as f64 / runs as f64;
    assert!(f >= bound - 3.0 * (bound * (1.0 - bound) / runs as f64).sqrt(), "escape {f} vs bound {bound}");
}

#[test]
fn naive_evaluation_cancels_catastrophically() {
    let cfg = RiceConfig::new(0.5, lc(), Variant::Simple).unwrap();
    let d = alt_sum_direct(200, &cfg).unwrap();
    let g = alt_sum_geometric(200, &cfg).unwrap();
    let naive = alt_sum_naive(200, &cfg);
    assert!(((g - d) / d).abs() < 1e-10);
    assert!(!naive.is_finite() || ((naive - d) / d).abs() > 1.0, "naive {naive} vs {d}");
}

#[test]
fn residue_asymptotics() {
    let cfg = RiceConfig::new(0.5, lc(), Variant::Simple).unwrap();
    let rs = residue_series(1e4, &cfg).unwrap();
    let g = alt_sum_geometric(10_000, &cfg).unwrap();
    assert!(((rs.asymptotic - g) / g).abs() <= 0.01);
    assert!(rs.converged);
    // log-periodicity of the normalized full sum
    for &n0 in &[1e3, 3e3, 1e4] {
        let a = residue_series(n0, &cfg).unwrap();
        let b = residue_series(n0 / cfg.gamma, &cfg).unwrap();
        let ca = a.value * n0.powf(cfg.alpha);
        let cb = b.value * (n0 / cfg.gamma).powf(cfg.alpha);
        assert!((ca / cb - 1.0).abs() < 1e-3, "n0={n0}: {ca} vs {cb}");
    }
}

#[test]
fn heavy_first_increment_washes_out() {
    let base = RenewalSpec::new(1.5, 1.0).unwrap();
    let heavy = base.with_first(Increment::pareto(1.1, 1.0).unwrap());
    let stats = [UiStatistic::ExpMoment { theta: 1.0 }];
    let opts = UiOptions { replicas: 10_000, ..UiOptions::default() };
    let a = ui_profile(&base, &[1e5], &stats, &opts).unwrap();
    let b = ui_profile(&heavy, &[1e5], &stats, &UiOptions { stream: 99, ..opts }).unwrap();
    let half = |r: &ladderwalk::renewal::UiRow| (r.ci_hi - r.ci_lo) / 2.0;
    let gap = (a[0].value - b[0].value).abs();
    assert!(gap < half(&a[0]) + half(&b[0]), "{} vs {}", a[0].value, b[0].value);
}

#[test]
fn renewal_profile_stable_under_doubling() {
    let spec = RenewalSpec::new(1.5, 1.0).unwrap();
    let stats = [UiStatistic::ExpMoment { theta: 1.0 }, UiStatistic::NegativeMoment { p: 1.2 }];
    let grid = [1e2, 1e3, 1e4];
    let a = ui_profile(&spec, &grid, &stats, &UiOptions { replicas: 5_000, ..UiOptions::default() }).unwrap();
    let b = ui_profile(&spec, &grid, &stats, &UiOptions { replicas: 10_000, stream: 50, ..UiOptions::default() }).unwrap();
    for (x, y) in a.iter().zip(&b) {
        let tol = (x.ci_hi - x.ci_lo) / 2.0 + (y.ci_hi - y.ci_lo) / 2.0;
        assert!((x.value - y.value).abs() < tol, "{}: {} vs {}", x.statistic, x.value, y.value);
    }
}

#[test]
fn unchecked_and_checked_inventories_agree_on_cycles() {
    let mut source = CycleSource::new(ColumnChain::build(0.5).unwrap(), rng(61));
    let env = sample_environment_cycles(&mut source, 500).unwrap();
    let a = enumerate_traps(&env).unwrap().traps;
    let b = enumerate_traps_unchecked(&env, env.x_lo, env.x_hi()).traps;
    assert_eq!(a, b);
}
