//! Quenched lazy biased walk and the line-graph excursion chains.
//!
//! At every vertex the walk draws one uniform and picks a candidate edge with
//! weights `e^lambda`, `e^-lambda`, `1` for right, left and vertical. A closed
//! candidate leaves the walk in place. On pruned environments the right
//! weight at an obstacle is multiplied by `1 - e^{-2 lambda}`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use crate::analytic::LineWalk;
use crate::env::{crossing_cluster, grow_environment, horizontal_bit, CycleSource, Environment, Provenance, VERT};
use crate::error::{Error, Result};
use crate::traps::{enumerate_traps_unchecked, enumerate_with_cluster, PrunedEnvironment, TrapPiece};

const FLAG_PRE: u8 = 1;
const FLAG_TRAP: [u8; 2] = [2, 4];
const FLAG_OBST: [u8; 2] = [8, 16];

/// Candidate thresholds `(right, right + left)` for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLaw {
    pub right: f64,
    pub left: f64,
    pub vertical: f64,
}

impl StepLaw {
    pub fn full(lambda: f64) -> StepLaw {
        let [right, left, vertical] = LineWalk::new(lambda).expect("positive bias").candidates();
        StepLaw { right, left, vertical }
    }

    /// Law at an obstacle of the pruned walk.
    pub fn obstacle(lambda: f64) -> StepLaw {
        let up = lambda.exp() * (1.0 - (-2.0 * lambda).exp());
        let down = (-lambda).exp();
        let total = up + down + 1.0;
        StepLaw { right: up / total, left: down / total, vertical: 1.0 / total }
    }
}

/// Distribution of one quenched step: (right, left, vertical, stay).
pub fn quenched_transition(env: &Environment, lambda: f64, x: i64, y: u8) -> Result<[f64; 4]> {
    if !env.contains(x) {
        return Err(Error::Margin { x });
    }
    let law = StepLaw::full(lambda);
    let right = if env.right_open(x, y) { law.right } else { 0.0 };
    let left = if x > env.x_lo && env.right_open(x - 1, y) { law.left } else { 0.0 };
    let vert = if env.vert_open(x) { law.vertical } else { 0.0 };
    Ok([right, left, vert, 1.0 - right - left - vert])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Horizon,
    XThreshold,
    ReturnedToOrigin,
    Certified,
    Cap,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Horizon => "horizon",
            StopReason::XThreshold => "x_threshold",
            StopReason::ReturnedToOrigin => "returned_to_origin",
            StopReason::Certified => "certified",
            StopReason::Cap => "cap",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkState {
    pub x: i64,
    pub y: u8,
    pub time: u64,
    pub min_x: i64,
    pub max_x: i64,
    /// Steps spent on dead-end vertices of traps.
    pub trap_time: u64,
    /// First visit time and visit count per pre-regeneration point.
    pub pre_visits: BTreeMap<i64, (u64, u32)>,
}

impl WalkState {
    pub fn new(x: i64, y: u8) -> Self {
        Self { x, y, time: 0, min_x: x, max_x: x, trap_time: 0, pre_visits: BTreeMap::new() }
    }

    pub fn backbone_time(&self) -> u64 {
        self.time - self.trap_time
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub state: WalkState,
    pub positions: Option<Vec<(i64, u8)>>,
    pub reason: StopReason,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkOptions {
    pub record_positions: bool,
    pub track_pre_regeneration: bool,
}

impl Default for WalkOptions {
    fn default() -> Self {
        Self { record_positions: false, track_pre_regeneration: true }
    }
}

/// An environment together with per-column flags, growable when it is cycle-stationary.
pub struct Landscape<R> {
    pub env: Environment,
    source: Option<CycleSource<R>>,
    flags: Vec<u8>,
    pub traps: Vec<TrapPiece>,
    /// Edges beyond a handcrafted window are closed; beyond a sampled window they are unknown.
    closed_outside: bool,
}

impl<R: Rng> Landscape<R> {
    /// Fixed window; pre-regeneration points and traps are located through the crossing cluster.
    pub fn fixed(env: Environment) -> Result<Self> {
        let mut land = Landscape { closed_outside: env.provenance == Provenance::Handcrafted, env, source: None, flags: Vec::new(), traps: Vec::new() };
        land.reflag_fixed()?;
        Ok(land)
    }

    /// Cycle-stationary environment that grows on demand.
    pub fn growing(env: Environment, source: CycleSource<R>) -> Self {
        let mut land = Landscape { env, source: Some(source), flags: Vec::new(), traps: Vec::new(), closed_outside: false };
        land.reflag_cycles();
        land
    }

    /// Pruned environment; obstacles change the local step law.
    pub fn pruned(pe: &PrunedEnvironment) -> Result<Self> {
        let mut land = Landscape::fixed(pe.env.clone())?;
        land.closed_outside = pe.env.provenance == Provenance::Handcrafted;
        for o in &pe.obstacles {
            land.flags[(o.x - land.env.x_lo) as usize] |= FLAG_OBST[o.rail as usize];
        }
        Ok(land)
    }

    fn reflag_fixed(&mut self) -> Result<()> {
        let cluster = crossing_cluster(&self.env);
        let inv = enumerate_with_cluster(&self.env, &cluster, self.env.x_lo, self.env.x_hi())?;
        self.flags = vec![0; self.env.len()];
        if self.env.len() >= 2 {
            for x in crate::env::find_pre_regeneration_points(&self.env)? {
                self.flags[(x - self.env.x_lo) as usize] |= FLAG_PRE;
            }
        }
        self.set_trap_flags(inv.traps);
        Ok(())
    }

    fn reflag_cycles(&mut self) {
        self.flags = vec![0; self.env.len()];
        for &b in &self.env.cycle_boundaries {
            if self.env.contains(b) {
                self.flags[(b - self.env.x_lo) as usize] |= FLAG_PRE;
            }
        }
        let inv = enumerate_traps_unchecked(&self.env, self.env.x_lo, self.env.x_hi());
        self.set_trap_flags(inv.traps);
    }

    fn set_trap_flags(&mut self, traps: Vec<TrapPiece>) {
        for t in &traps {
            for k in 1..=t.length as i64 {
                self.flags[(t.entrance_x + k - self.env.x_lo) as usize] |= FLAG_TRAP[t.rail as usize];
            }
        }
        self.traps = traps;
    }

    pub fn is_pre_regeneration(&self, x: i64) -> bool {
        self.env.contains(x) && self.flags[(x - self.env.x_lo) as usize] & FLAG_PRE != 0
    }

    pub fn is_trap_node(&self, x: i64, y: u8) -> bool {
        self.env.contains(x) && self.flags[(x - self.env.x_lo) as usize] & FLAG_TRAP[y as usize] != 0
    }

    pub fn is_obstacle(&self, x: i64, y: u8) -> bool {
        self.env.contains(x) && self.flags[(x - self.env.x_lo) as usize] & FLAG_OBST[y as usize] != 0
    }

    /// Makes sure columns `x - 1 ..= x + 1` exist, growing if possible.
    fn ensure_margin(&mut self, x: i64) -> Result<()> {
        if x > self.env.x_lo && x < self.env.x_hi() {
            return Ok(());
        }
        let Some(source) = self.source.as_mut() else {
            return Ok(());
        };
        let span = (self.env.len() as i64 / 2).max(1024);
        let (left, right) = if x <= self.env.x_lo { (self.env.x_lo - span, self.env.x_hi()) } else { (self.env.x_lo, self.env.x_hi() + span) };
        grow_environment(&mut self.env, source, left, right)?;
        self.reflag_cycles();
        Ok(())
    }

    /// One step from `(x, y)` given the candidate uniform `u`.
    #[inline]
    pub fn step(&mut self, x: i64, y: u8, u: f64, full: &StepLaw, obst: &StepLaw) -> Result<(i64, u8)> {
        self.ensure_margin(x)?;
        let flag = self.flags[(x - self.env.x_lo) as usize];
        let law = if flag & FLAG_OBST[y as usize] != 0 { obst } else { full };
        if u < law.right {
            if x == self.env.x_hi() {
                if self.closed_outside || !self.env.right_open(x, y) {
                    return Ok((x, y));
                }
                return Err(Error::WindowExit { x: x + 1, lo: self.env.x_lo, hi: self.env.x_hi() });
            }
            if self.env.col(x) & horizontal_bit(y) != 0 {
                return Ok((x + 1, y));
            }
            Ok((x, y))
        } else if u < law.right + law.left {
            if x == self.env.x_lo {
                if self.closed_outside {
                    return Ok((x, y));
                }
                return Err(Error::WindowExit { x: x - 1, lo: self.env.x_lo, hi: self.env.x_hi() });
            }
            if self.env.col(x - 1) & horizontal_bit(y) != 0 {
                return Ok((x - 1, y));
            }
            Ok((x, y))
        } else if self.env.col(x) & VERT != 0 {
            Ok((x, 1 - y))
        } else {
            Ok((x, y))
        }
    }

    /// Runs the walk from `start` until `stop` returns a reason.
    pub fn simulate<G, F>(&mut self, lambda: f64, start: (i64, u8), rng: &mut G, opts: WalkOptions, mut stop: F) -> Result<Trajectory>
    where
        G: Rng + ?Sized,
        F: FnMut(&WalkState) -> Option<StopReason>,
    {
        let full = StepLaw::full(lambda);
        let obst = StepLaw::obstacle(lambda);
        let mut st = WalkState::new(start.0, start.1);
        let mut positions = opts.record_positions.then(|| vec![start]);
        if opts.track_pre_regeneration && start.1 == 0 && self.is_pre_regeneration(start.0) {
            st.pre_visits.insert(start.0, (0, 1));
        }
        loop {
            if let Some(reason) = stop(&st) {
                return Ok(Trajectory { state: st, positions, reason });
            }
            if self.is_trap_node(st.x, st.y) {
                st.trap_time += 1;
            }
            let u = rng.gen::<f64>();
            let (nx, ny) = self.step(st.x, st.y, u, &full, &obst)?;
            st.time += 1;
            let moved_x = nx != st.x;
            let moved = moved_x || ny != st.y;
            st.x = nx;
            st.y = ny;
            if moved_x {
                st.min_x = st.min_x.min(nx);
                st.max_x = st.max_x.max(nx);
            }
            if opts.track_pre_regeneration && moved && ny == 0 && self.is_pre_regeneration(nx) {
                let e = st.pre_visits.entry(nx).or_insert((st.time, 0));
                e.1 += 1;
            }
            if let Some(p) = positions.as_mut() {
                p.push((nx, ny));
            }
        }
    }
}

/// Convenience wrapper: walk on a fixed window until `horizon` steps.
pub fn simulate_walk<G: Rng + ?Sized>(env: &Environment, lambda: f64, start: (i64, u8), rng: &mut G, horizon: u64, opts: WalkOptions) -> Result<Trajectory> {
    let mut land: Landscape<rand_chacha::ChaCha8Rng> = Landscape::fixed(env.clone())?;
    land.simulate(lambda, start, rng, opts, |s| (s.time >= horizon).then_some(StopReason::Horizon))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Excursion {
    pub duration: u64,
    pub reached_bottom: bool,
    /// Returns to the bottom after the first arrival (stays included).
    pub bottom_returns: u64,
}

/// Failures before `k` successes of probability `success`.
fn negative_binomial<G: Rng + ?Sized>(k: u64, success: f64, rng: &mut G) -> u64 {
    if k == 0 || success >= 1.0 {
        return 0;
    }
    if k <= 16 {
        let ln_fail = (1.0 - success).ln();
        return (0..k).map(|_| ((1.0 - rng.gen::<f64>()).ln() / ln_fail).floor() as u64).sum();
    }
    let rate = Gamma::new(k as f64, (1.0 - success) / success).expect("valid gamma").sample(rng);
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("valid poisson").sample(rng) as u64
}

/// Excursion into a trap of length `m`, started next to the entrance and run until absorption at 0.
///
/// The jump chain is simulated step by step; the holding times it skips are geometric per
/// visit, so their totals are drawn as negative binomials given the visit counts.
pub fn simulate_trap_excursion<G: Rng + ?Sized>(m: usize, lambda: f64, rng: &mut G, lazy: bool) -> Excursion {
    assert!(m >= 1, "trap length must be positive");
    let w = LineWalk::new(lambda).expect("positive bias");
    let (right, left) = if lazy { (lambda.exp() / w.norm, (-lambda).exp() / w.norm) } else { (w.p_lambda, w.q_lambda) };
    let interior_move = right + left;
    let up_threshold = (right / interior_move * 2f64.powi(64)).min(u64::MAX as f64) as u64;
    let m = m as i64;
    let mut y = 1i64;
    let mut jumps = 0u64;
    let mut bottom_visits = 0u64;
    let mut interior_visits = 0u64;
    while y > 0 {
        jumps += 1;
        if y == m {
            // right and vertical candidates are closed at the bottom
            bottom_visits += 1;
            y -= 1;
        } else {
            interior_visits += 1;
            if rng.next_u64() < up_threshold {
                y += 1;
            } else {
                y -= 1;
            }
        }
    }
    let bottom_stays = negative_binomial(bottom_visits, left, rng);
    let interior_stays = negative_binomial(interior_visits, interior_move, rng);
    let reached = bottom_visits > 0;
    Excursion {
        duration: jumps + bottom_stays + interior_stays,
        reached_bottom: reached,
        bottom_returns: if reached { bottom_stays + bottom_visits - 1 } else { 0 },
    }
}

/// One trial from the bottom: does the chain reach 0 before returning to `m`?
pub fn escape_from_bottom<G: Rng + ?Sized>(m: usize, lambda: f64, rng: &mut G, lazy: bool) -> bool {
    let w = LineWalk::new(lambda).expect("positive bias");
    let (right, left) = if lazy { (lambda.exp() / w.norm, (-lambda).exp() / w.norm) } else { (w.p_lambda, w.q_lambda) };
    let m = m as i64;
    if rng.gen::<f64>() >= left {
        return false;
    }
    let mut y = m - 1;
    while y > 0 && y < m {
        let u = rng.gen::<f64>();
        if u < right {
            y += 1;
        } else if u < right + left {
            y -= 1;
        }
    }
    y == 0
}

/// Dense distribution over the `2 * len` vertices of a window, indexed `2 * (x - x_lo) + y`.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexDistribution {
    pub x_lo: i64,
    pub mass: Vec<f64>,
    pub exit_mass: f64,
}

impl VertexDistribution {
    pub fn point(x_lo: i64, len: usize, x: i64, y: u8) -> Self {
        let mut mass = vec![0.0; 2 * len];
        mass[2 * (x - x_lo) as usize + y as usize] = 1.0;
        Self { x_lo, mass, exit_mass: 0.0 }
    }

    pub fn get(&self, x: i64, y: u8) -> f64 {
        let i = 2 * (x - self.x_lo);
        if i < 0 || i as usize >= self.mass.len() {
            return 0.0;
        }
        self.mass[i as usize + y as usize]
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum::<f64>() + self.exit_mass
    }

    pub fn total_variation(&self, other: &VertexDistribution) -> f64 {
        assert_eq!(self.x_lo, other.x_lo);
        0.5 * self.mass.iter().zip(&other.mass).map(|(a, b)| (a - b).abs()).sum::<f64>() + 0.5 * (self.exit_mass - other.exit_mass).abs()
    }
}

pub const DEFAULT_EXACT_CAP: usize = 16;

/// Exact `k`-step law of the walk on a window, by repeated application of the one-step kernel.
pub fn exact_k_step_distribution(env: &Environment, lambda: f64, start: (i64, u8), k: usize) -> Result<VertexDistribution> {
    exact_k_step_generic(env, &|_, _| StepLaw::full(lambda), start, k, DEFAULT_EXACT_CAP)
}

/// Exact `k`-step law of the pruned walk.
pub fn exact_pruned_k_step(pe: &PrunedEnvironment, start: (i64, u8), k: usize) -> Result<VertexDistribution> {
    let full = StepLaw::full(pe.lambda);
    let obst = StepLaw::obstacle(pe.lambda);
    exact_k_step_generic(&pe.env, &|x, y| if pe.is_obstacle(x, y) { obst } else { full }, start, k, DEFAULT_EXACT_CAP)
}

pub fn exact_k_step_generic(env: &Environment, law: &dyn Fn(i64, u8) -> StepLaw, start: (i64, u8), k: usize, cap: usize) -> Result<VertexDistribution> {
    if k > cap {
        return Err(Error::Domain(format!("k = {k} exceeds cap {cap}")));
    }
    let closed = env.provenance == Provenance::Handcrafted;
    let len = env.len();
    let mut dist = VertexDistribution::point(env.x_lo, len, start.0, start.1);
    for _ in 0..k {
        let mut next = vec![0.0; 2 * len];
        let mut exit = dist.exit_mass;
        for (i, &m) in dist.mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let x = env.x_lo + (i / 2) as i64;
            let y = (i % 2) as u8;
            let l = law(x, y);
            let mut stay = l.vertical;
            if env.vert_open(x) {
                next[i ^ 1] += m * l.vertical;
                stay = 0.0;
            }
            if env.right_open(x, y) {
                if x == env.x_hi() {
                    if closed {
                        stay += l.right;
                    } else {
                        exit += m * l.right;
                    }
                } else {
                    next[i + 2] += m * l.right;
                }
            } else {
                stay += l.right;
            }
            if x == env.x_lo {
                if closed {
                    stay += l.left;
                } else {
                    exit += m * l.left;
                }
            } else if env.right_open(x - 1, y) {
                next[i - 2] += m * l.left;
            } else {
                stay += l.left;
            }
            next[i] += m * stay;
        }
        dist = VertexDistribution { x_lo: env.x_lo, mass: next, exit_mass: exit };
    }
    if dist.exit_mass > 1e-15 {
        return Err(Error::WindowTooSmall { mass: dist.exit_mass, k });
    }
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ladder(x_hi: i64) -> Environment {
        let all: Vec<i64> = (0..x_hi).collect();
        Environment::from_edges(0, x_hi, &all, &all, &(0..=x_hi).collect::<Vec<_>>())
    }

    #[test]
    fn transition_masses() {
        let env = ladder(6);
        let t = quenched_transition(&env, 0.8, 3, 0).unwrap();
        let law = StepLaw::full(0.8);
        assert!((t[0] - law.right).abs() < 1e-15 && t[3].abs() < 1e-15);
        let closed = Environment::from_edges(0, 6, &[], &[], &[]);
        assert_eq!(quenched_transition(&closed, 0.8, 3, 0).unwrap()[3], 1.0);
        // bottom of a dead end: only the left edge exists
        let trap = Environment::from_edges(0, 6, &[0, 1, 2, 3, 4, 5], &[0, 1], &[0]);
        let t = quenched_transition(&trap, 0.8, 2, 0).unwrap();
        let w = LineWalk::new(0.8).unwrap();
        assert!((t[3] - (0.8f64.exp() + 1.0) / w.norm).abs() < 1e-15);
        for x in 0..=6 {
            for y in 0..2 {
                let t = quenched_transition(&trap, 0.8, x, y).unwrap();
                assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn excursion_single_cell_bookkeeping() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let e = simulate_trap_excursion(1, 0.6, &mut rng, false);
            assert!(e.reached_bottom);
            assert_eq!(e.duration, 1 + e.bottom_returns);
        }
    }

    #[test]
    fn exact_kernel_conserves_mass() {
        let env = Environment::from_edges(0, 9, &[0, 1, 2, 4, 5, 6, 7, 8], &[0, 1, 2, 3, 6, 7, 8], &[0, 2, 3, 5, 9]);
        let d0 = exact_k_step_distribution(&env, 0.7, (4, 0), 0).unwrap();
        assert_eq!(d0.get(4, 0), 1.0);
        for k in 1..=DEFAULT_EXACT_CAP {
            let d = exact_k_step_distribution(&env, 0.7, (4, 0), k).unwrap();
            assert!((d.total() - 1.0).abs() < 1e-12);
        }
        assert!(exact_k_step_distribution(&env, 0.7, (4, 0), DEFAULT_EXACT_CAP + 1).is_err());
    }

    #[test]
    fn window_exit_is_reported() {
        let all: Vec<i64> = (0..=4).collect();
        let mut env = Environment::from_edges(0, 4, &all, &all, &all);
        env.provenance = Provenance::WindowRejection;
        assert!(matches!(exact_k_step_distribution(&env, 0.7, (2, 0), 4), Err(Error::WindowTooSmall { .. })));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = simulate_walk(&env, 2.0, (2, 0), &mut rng, 1000, WalkOptions::default());
        assert!(matches!(r, Err(Error::WindowExit { .. })));
    }
}
