//! Joint chain of the pruned walk and the full walk.
//!
//! The state is `(u, v, w)`: `u` lives on the pruned environment, `v` on the
//! environment with traps re-inserted at the obstacles, and `w` remembers at
//! which end a trap piece must be left. Five cases drive the transitions:
//!
//! 1. `u = v` away from obstacles: both attempt the same step.
//! 2. `u = v` at an obstacle: the seven-entry obstacle vector.
//! 3. `v` on the parallel rail of a trap piece: `u` waits, `v` follows the
//!    lazy line walk, h-transformed to the prescribed exit when `w != 0`.
//! 4. `v` in a dead end: `u` waits, `v` does the plain lazy walk.
//! 5. positions differ with `v` on the pruned part: `v` waits, `u` moves.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analytic::{critical_bias, obstacle_transitions};
use crate::env::{sample_environment, ColumnChain, CycleSource, Environment, Provenance, WindowSampler, BOTTOM, TOP, VERT};
use crate::error::{Error, Result};
use crate::traps::{enumerate_traps, prune_environment, PrunedEnvironment};
use crate::walk::{StepLaw, VertexDistribution};

pub type Vertex = (i64, u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct CouplingState {
    pub u: Vertex,
    pub v: Vertex,
    pub w: i8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Case {
    Joint = 1,
    Obstacle = 2,
    PieceRail = 3,
    DeadEnd = 4,
    Apart = 5,
}

/// Outcome of the origin coin for the obstacle at `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OriginCoinOutcome {
    pub heads: bool,
    /// Position of the origin inside the trap piece when the coin shows tails.
    pub shift: usize,
}

/// Monte Carlo estimate of `P(0 in entrance column | 0 in entrance column or piece interior)`
/// together with the empirical law of `(length, position)` given the interior case.
#[derive(Debug, Clone, PartialEq)]
pub struct OriginCoin {
    pub p: f64,
    pub heads: f64,
    pub se: f64,
    pub samples: u64,
    pub interior: Vec<(usize, usize)>,
}

pub fn estimate_origin_coin<R: Rng + ?Sized>(p: f64, window: i64, samples: u64, rng: &mut R) -> Result<OriginCoin> {
    let sampler = WindowSampler::new(p, window)?;
    let mut entrance = 0u64;
    let mut interior = Vec::new();
    for _ in 0..samples {
        let (env, _) = sampler.sample(rng, 1_000_000)?;
        for t in enumerate_traps(&env)?.traps {
            if t.entrance_x == 0 {
                entrance += 1;
            } else if t.in_interior(0) {
                interior.push((t.length, (-t.entrance_x) as usize));
            }
        }
    }
    let n = entrance + interior.len() as u64;
    if n == 0 {
        return Err(Error::Degenerate("origin never met a trap piece".into()));
    }
    let heads = entrance as f64 / n as f64;
    Ok(OriginCoin { p, heads, se: (heads * (1.0 - heads) / n as f64).sqrt(), samples, interior })
}

#[derive(Debug, Clone)]
pub struct CoupledEnvironment {
    pub lambda: f64,
    pub pruned: PrunedEnvironment,
    /// Environment with the traps re-inserted.
    pub full: Environment,
    /// Re-inserted length per obstacle, in the order of `pruned.obstacles`.
    pub lengths: Vec<usize>,
    pub origin_coin: Option<OriginCoinOutcome>,
    probs: Vec<[f64; 7]>,
    /// Pruned column of every full column that survives pruning.
    full_to_pruned: Vec<Option<i64>>,
    /// `(obstacle index, position in piece)` for full columns strictly inside a piece.
    piece_at: Vec<Option<(usize, usize)>>,
    closed_outside: bool,
}

/// Rebuilds the full environment from a pruned one by expanding each obstacle
/// column into a trap piece of the given length.
pub fn reinsert_traps(pruned: &PrunedEnvironment, lengths: &[usize], coin: Option<OriginCoinOutcome>) -> Result<Environment> {
    if lengths.len() != pruned.obstacles.len() {
        return Err(Error::Domain("one length per obstacle required".into()));
    }
    let penv = &pruned.env;
    let mut cols = Vec::with_capacity(penv.len() + lengths.iter().sum::<usize>());
    let mut origin_index = 0usize;
    let mut next = 0;
    for c in penv.x_lo..=penv.x_hi() {
        let start = cols.len();
        let rec = penv.col(c);
        match pruned.obstacles.get(next) {
            Some(o) if o.x == c => {
                let l = lengths[next];
                if l == 0 {
                    return Err(Error::Domain("re-inserted lengths must be positive".into()));
                }
                let other = if o.rail == 0 { BOTTOM } else { TOP };
                cols.push(TOP | BOTTOM | (rec & VERT));
                cols.extend(std::iter::repeat_n(TOP | BOTTOM, l - 1));
                cols.push(other);
                next += 1;
                if c == 0 {
                    if let Some(OriginCoinOutcome { heads: false, shift }) = coin {
                        if shift == 0 || shift > l {
                            return Err(Error::Domain(format!("shift {shift} outside 1..={l}")));
                        }
                        origin_index = start + shift;
                        continue;
                    }
                }
            }
            _ => cols.push(rec),
        }
        if c == 0 {
            origin_index = start;
        }
    }
    Ok(Environment::new(penv.p, -(origin_index as i64), cols, penv.provenance))
}

impl CoupledEnvironment {
    /// Coupled environment whose full component is `full`; the traps of `full` are the re-inserted ones.
    pub fn from_full(full: Environment, lambda: f64) -> Result<Self> {
        let pruned = prune_environment(&full, lambda)?;
        let lengths: Vec<usize> = pruned.obstacles.iter().map(|o| o.piece.length).collect();
        let probs = lengths.iter().map(|&l| obstacle_transitions(lambda, l)?.checked()).collect::<Result<Vec<_>>>()?;
        let mut full_to_pruned = vec![None; full.len()];
        for (i, &ox) in pruned.orig_x.iter().enumerate() {
            full_to_pruned[(ox - full.x_lo) as usize] = Some(pruned.env.x_lo + i as i64);
        }
        let mut piece_at = vec![None; full.len()];
        for (i, o) in pruned.obstacles.iter().enumerate() {
            for k in 1..=o.piece.length {
                piece_at[(o.piece.entrance_x + k as i64 - full.x_lo) as usize] = Some((i, k));
            }
        }
        Ok(Self {
            lambda,
            closed_outside: full.provenance == Provenance::Handcrafted,
            pruned,
            full,
            lengths,
            origin_coin: None,
            probs,
            full_to_pruned,
            piece_at,
        })
    }

    pub fn obstacle_probs(&self, i: usize) -> [f64; 7] {
        self.probs[i]
    }

    /// Full vertex corresponding to a pruned vertex.
    pub fn embed(&self, u: Vertex) -> Vertex {
        (self.pruned.original_x(u.0), u.1)
    }

    /// Pruned vertex corresponding to a full vertex, if it survives pruning.
    pub fn project(&self, v: Vertex) -> Option<Vertex> {
        if !self.full.contains(v.0) {
            return None;
        }
        self.full_to_pruned[(v.0 - self.full.x_lo) as usize].map(|x| (x, v.1))
    }

    fn piece(&self, x: i64) -> Option<(usize, usize)> {
        if self.full.contains(x) {
            self.piece_at[(x - self.full.x_lo) as usize]
        } else {
            None
        }
    }

    /// Is `v` strictly inside a trap piece (not on the pruned part)?
    pub fn in_piece_interior(&self, v: Vertex) -> bool {
        self.piece(v.0).is_some()
    }

    pub fn case_of(&self, s: &CouplingState) -> Result<Case> {
        if let Some((i, _)) = self.piece(s.v.0) {
            return Ok(if s.v.1 == 1 - self.pruned.obstacles[i].rail { Case::DeadEnd } else { Case::PieceRail });
        }
        let Some(pv) = self.project(s.v) else {
            return Err(Error::InconsistentState(format!("v = {:?} outside the window", s.v)));
        };
        if !self.pruned.env.contains(s.u.0) {
            return Err(Error::InconsistentState(format!("u = {:?} outside the window", s.u)));
        }
        if pv != s.u {
            return Ok(Case::Apart);
        }
        Ok(if self.pruned.is_obstacle(s.u.0, s.u.1) { Case::Obstacle } else { Case::Joint })
    }

    fn try_move(&self, env: &Environment, p: Vertex, dir: Dir) -> Result<Vertex> {
        let (x, y) = p;
        let exit = |nx: i64| Error::WindowExit { x: nx, lo: env.x_lo, hi: env.x_hi() };
        Ok(match dir {
            Dir::Right => {
                if !env.right_open(x, y) {
                    p
                } else if x == env.x_hi() {
                    if self.closed_outside {
                        p
                    } else {
                        return Err(exit(x + 1));
                    }
                } else {
                    (x + 1, y)
                }
            }
            Dir::Left => {
                if x == env.x_lo {
                    if self.closed_outside {
                        p
                    } else {
                        return Err(exit(x - 1));
                    }
                } else if env.right_open(x - 1, y) {
                    (x - 1, y)
                } else {
                    p
                }
            }
            Dir::Rung => {
                if env.vert_open(x) {
                    (x, 1 - y)
                } else {
                    p
                }
            }
        })
    }

    fn mv_u(&self, u: Vertex, d: Dir) -> Result<Vertex> {
        self.try_move(&self.pruned.env, u, d)
    }

    fn mv_v(&self, v: Vertex, d: Dir) -> Result<Vertex> {
        self.try_move(&self.full, v, d)
    }

    /// Up to seven weighted successor states of `s`.
    pub fn transitions(&self, s: &CouplingState) -> Result<Moves> {
        let law = StepLaw::full(self.lambda);
        let dirs = [(Dir::Right, law.right), (Dir::Left, law.left), (Dir::Rung, law.vertical)];
        let mut out = Moves::default();
        match self.case_of(s)? {
            Case::Joint => {
                for (d, pr) in dirs {
                    out.push(pr, CouplingState { u: self.mv_u(s.u, d)?, v: self.mv_v(s.v, d)?, w: 0 });
                }
            }
            Case::Obstacle => {
                let i = self.pruned.obstacles.iter().position(|o| (o.x, o.rail) == s.u).expect("obstacle present");
                let pr = self.probs[i];
                let into = (s.v.0 + 1, s.v.1);
                out.push(pr[0], CouplingState { u: self.mv_u(s.u, Dir::Right)?, v: into, w: 1 });
                out.push(pr[1], CouplingState { u: self.mv_u(s.u, Dir::Left)?, v: self.mv_v(s.v, Dir::Left)?, w: 0 });
                out.push(pr[2], CouplingState { u: self.mv_u(s.u, Dir::Rung)?, v: self.mv_v(s.v, Dir::Rung)?, w: 0 });
                let left = self.mv_u(s.u, Dir::Left)?;
                let rung = self.mv_u(s.u, Dir::Rung)?;
                out.push(pr[3], CouplingState { u: left, v: into, w: 1 });
                out.push(pr[4], CouplingState { u: left, v: into, w: -1 });
                out.push(pr[5], CouplingState { u: rung, v: into, w: 1 });
                out.push(pr[6], CouplingState { u: rung, v: into, w: -1 });
            }
            Case::PieceRail => {
                let (i, k) = self.piece(s.v.0).expect("inside a piece");
                let big = self.lengths[i] + 1;
                let (r, l, st) = rail_step(self.lambda, k, big, s.w);
                let settle = |v: Vertex, kk: usize| CouplingState { u: s.u, v, w: if kk == 0 || kk == big { 0 } else { s.w } };
                out.push(r, settle((s.v.0 + 1, s.v.1), k + 1));
                out.push(l, settle((s.v.0 - 1, s.v.1), k - 1));
                out.push(st, *s);
            }
            Case::DeadEnd => {
                for (d, pr) in dirs {
                    out.push(pr, CouplingState { u: s.u, v: self.mv_v(s.v, d)?, w: 0 });
                }
            }
            Case::Apart => {
                let l = if self.pruned.is_obstacle(s.u.0, s.u.1) { StepLaw::obstacle(self.lambda) } else { law };
                for (d, pr) in [(Dir::Right, l.right), (Dir::Left, l.left), (Dir::Rung, l.vertical)] {
                    out.push(pr, CouplingState { u: self.mv_u(s.u, d)?, v: s.v, w: 0 });
                }
            }
        }
        Ok(out)
    }

    /// One step of the joint chain driven by a single uniform.
    pub fn coupled_step<R: Rng + ?Sized>(&self, s: &CouplingState, rng: &mut R) -> Result<CouplingState> {
        let moves = self.transitions(s)?;
        let u = rng.gen::<f64>();
        let mut acc = 0.0;
        for &(p, next) in moves.as_slice() {
            acc += p;
            if u < acc {
                return Ok(next);
            }
        }
        Ok(moves.as_slice().iter().rev().find(|m| m.0 > 0.0).map(|m| m.1).unwrap_or(*s))
    }

    /// Successors of `s` with a case-5 state replaced by the meeting state it reaches almost surely.
    fn full_embedded(&self, s: &CouplingState) -> Result<Vec<(f64, CouplingState)>> {
        let mut out = Vec::new();
        for &(p, n) in self.transitions(s)?.as_slice() {
            if self.case_of(&n)? == Case::Apart {
                let u = self.project(n.v).expect("apart states sit on the pruned part");
                out.push((p, CouplingState { u, v: n.v, w: 0 }));
            } else {
                out.push((p, n));
            }
        }
        Ok(out)
    }

    /// Successors of `s` with trap-piece excursions replaced by their exit state.
    fn pruned_embedded(&self, s: &CouplingState) -> Result<Vec<(f64, CouplingState)>> {
        let mut out = Vec::new();
        for &(p, n) in self.transitions(s)?.as_slice() {
            let Some((i, k)) = self.piece(n.v.0) else {
                out.push((p, n));
                continue;
            };
            let o = &self.pruned.obstacles[i];
            let x0 = o.piece.entrance_x;
            let big = self.lengths[i] + 1;
            let left_end = (x0, n.v.1);
            let right_end = (x0 + big as i64, n.v.1);
            if n.v.1 == 1 - o.rail {
                out.push((p, CouplingState { u: n.u, v: left_end, w: 0 }));
                continue;
            }
            let right = match n.w {
                1 => 1.0,
                -1 => 0.0,
                _ => exit_right_probability(self.lambda, k, big),
            };
            out.push((p * right, CouplingState { u: n.u, v: right_end, w: 0 }));
            out.push((p * (1.0 - right), CouplingState { u: n.u, v: left_end, w: 0 }));
        }
        Ok(out)
    }

    pub fn start_state(&self) -> CouplingState {
        CouplingState { u: (0, 0), v: (0, 0), w: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    Right,
    Left,
    Rung,
}

#[derive(Debug, Clone, Default)]
pub struct Moves {
    items: [(f64, CouplingState); 7],
    n: usize,
}

impl Moves {
    fn push(&mut self, p: f64, s: CouplingState) {
        self.items[self.n] = (p, s);
        self.n += 1;
    }

    pub fn as_slice(&self) -> &[(f64, CouplingState)] {
        &self.items[..self.n]
    }

    pub fn total(&self) -> f64 {
        self.as_slice().iter().map(|m| m.0).sum()
    }
}

/// `P_k(hit big before 0)` for the biased line walk.
pub fn exit_right_probability(lambda: f64, k: usize, big: usize) -> f64 {
    let g = (-2.0 * lambda).exp();
    (1.0 - g.powi(k as i32)) / (1.0 - g.powi(big as i32))
}

/// Right, left and stay probabilities of the lazy line walk on `{0..big}` at `k`,
/// conditioned to leave at `big` (`w = 1`), at `0` (`w = -1`) or unconditioned.
pub fn rail_step(lambda: f64, k: usize, big: usize, w: i8) -> (f64, f64, f64) {
    let law = StepLaw::full(lambda);
    let g = (-2.0 * lambda).exp();
    let h = |y: usize| -> f64 {
        match w {
            1 => (1.0 - g.powi(y as i32)) / (1.0 - g.powi(big as i32)),
            -1 => (g.powi(y as i32) - g.powi(big as i32)) / (1.0 - g.powi(big as i32)),
            _ => 1.0,
        }
    };
    let hk = h(k);
    let r = law.right * h(k + 1) / hk;
    let l = law.left * h(k - 1) / hk;
    (r, l, 1.0 - r - l)
}

/// Samples the coupled environment: base environment, pruning, re-inserted i.i.d. lengths.
///
/// Without a coin the base law is cycle-stationary over `[-extent, extent]`;
/// with a coin it is a window of half-width `extent` with the origin in the cluster.
pub fn build_coupled_environment<R: Rng + ?Sized>(p: f64, lambda: f64, rng: &mut R, extent: i64, coin: Option<&OriginCoin>) -> Result<CoupledEnvironment> {
    let base = match coin {
        None => {
            let mut source = CycleSource::new(ColumnChain::build(p)?, ChaCha8Rng::seed_from_u64(rng.gen()));
            sample_environment(&mut source, -extent, extent)?
        }
        Some(_) => WindowSampler::new(p, extent)?.sample(rng, 1_000_000)?.0,
    };
    let pruned = prune_environment(&base, lambda)?;
    let ratio = (-2.0 * critical_bias(p)?).exp();
    let draw = |rng: &mut R| -> usize {
        // inversion of P(L > m) = ratio^m
        let u: f64 = rng.gen::<f64>();
        1 + ((1.0 - u).ln() / ratio.ln()).floor() as usize
    };
    let mut lengths = Vec::with_capacity(pruned.obstacles.len());
    let mut outcome = None;
    for o in &pruned.obstacles {
        if o.x == 0 {
            if let Some(c) = coin {
                if rng.gen::<f64>() >= c.heads && !c.interior.is_empty() {
                    let (l, k) = c.interior[rng.gen_range(0..c.interior.len())];
                    lengths.push(l);
                    outcome = Some(OriginCoinOutcome { heads: false, shift: k });
                    continue;
                }
                outcome = Some(OriginCoinOutcome { heads: true, shift: 0 });
            }
        }
        lengths.push(draw(rng));
    }
    for &l in &lengths {
        obstacle_transitions(lambda, l)?.checked()?;
    }
    let full = reinsert_traps(&pruned, &lengths, outcome)?;
    let mut cenv = CoupledEnvironment::from_full(full, lambda)?;
    cenv.origin_coin = outcome;
    Ok(cenv)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTrajectory {
    pub states: Vec<CouplingState>,
    pub cases: Vec<Case>,
}

impl CouplingTrajectory {
    pub fn case_counts(&self) -> BTreeMap<u8, u64> {
        let mut m = BTreeMap::new();
        for c in &self.cases {
            *m.entry(*c as u8).or_insert(0) += 1;
        }
        m
    }
}

pub fn simulate_coupling<R: Rng + ?Sized>(cenv: &CoupledEnvironment, steps: u64, rng: &mut R) -> Result<CouplingTrajectory> {
    let mut s = cenv.start_state();
    let mut states = Vec::with_capacity(steps as usize + 1);
    let mut cases = Vec::with_capacity(steps as usize + 1);
    for _ in 0..steps {
        cases.push(cenv.case_of(&s)?);
        states.push(s);
        s = cenv.coupled_step(&s, rng)?;
    }
    cases.push(cenv.case_of(&s)?);
    states.push(s);
    Ok(CouplingTrajectory { states, cases })
}

/// Pruned component along the times where `v` sits on the pruned part, and the full
/// component along the times where the positions agree or `v` is inside a piece.
pub fn extract_marginals(traj: &CouplingTrajectory, cenv: &CoupledEnvironment) -> (Vec<Vertex>, Vec<Vertex>) {
    let mut pruned = Vec::new();
    let mut full = Vec::new();
    for s in &traj.states {
        match cenv.project(s.v) {
            Some(pv) => {
                pruned.push(s.u);
                if pv == s.u {
                    full.push(s.v);
                }
            }
            None => full.push(s.v),
        }
    }
    (pruned, full)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominationReport {
    pub vertices_checked: usize,
    pub entrances_checked: usize,
    /// `(full vertex, full visits, pruned visits)` where the full count is larger.
    pub violations: Vec<(Vertex, u64, u64)>,
    /// `(entrance x, excursions, pruned visits)` where excursions exceed pruned visits.
    pub entrance_violations: Vec<(i64, u64, u64)>,
}

impl DominationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty() && self.entrance_violations.is_empty()
    }
}

pub fn check_visit_domination(traj: &CouplingTrajectory, cenv: &CoupledEnvironment) -> DominationReport {
    let (pruned, full) = extract_marginals(traj, cenv);
    let mut pv: HashMap<Vertex, u64> = HashMap::new();
    for &u in &pruned {
        *pv.entry(u).or_insert(0) += 1;
    }
    let mut fv: HashMap<Vertex, u64> = HashMap::new();
    for &v in &full {
        if !cenv.in_piece_interior(v) {
            *fv.entry(v).or_insert(0) += 1;
        }
    }
    let mut violations = Vec::new();
    for (&v, &c) in &fv {
        let u = cenv.project(v).expect("non-interior vertices survive pruning");
        let d = pv.get(&u).copied().unwrap_or(0);
        if c > d {
            violations.push((v, c, d));
        }
    }
    violations.sort();
    let mut entrance_violations = Vec::new();
    for o in &cenv.pruned.obstacles {
        let u0 = (o.piece.entrance_x, o.piece.rail);
        let u1 = (o.piece.entrance_x + 1, o.piece.rail);
        let excursions = full.windows(2).filter(|w| w[0] == u0 && w[1] == u1).count() as u64;
        let visits = pv.get(&cenv.project(u0).expect("entrance survives")).copied().unwrap_or(0);
        if excursions > visits {
            entrance_violations.push((u0.0, excursions, visits));
        }
    }
    DominationReport { vertices_checked: fv.len(), entrances_checked: cenv.pruned.obstacles.len(), violations, entrance_violations }
}

fn iterate_exact<F>(start: CouplingState, k: usize, mut step: F) -> Result<BTreeMap<CouplingState, f64>>
where
    F: FnMut(&CouplingState) -> Result<Vec<(f64, CouplingState)>>,
{
    let mut dist = BTreeMap::new();
    dist.insert(start, 1.0);
    for _ in 0..k {
        let mut next = BTreeMap::new();
        for (s, &m) in &dist {
            for (p, n) in step(s)? {
                if p != 0.0 {
                    *next.entry(n).or_insert(0.0) += m * p;
                }
            }
        }
        dist = next;
    }
    Ok(dist)
}

/// Exact `k`-step law of the full component along its own clock.
pub fn exact_full_marginal(cenv: &CoupledEnvironment, k: usize) -> Result<VertexDistribution> {
    let dist = iterate_exact(cenv.start_state(), k, |s| cenv.full_embedded(s))?;
    let mut out = VertexDistribution::point(cenv.full.x_lo, cenv.full.len(), 0, 0);
    out.mass.iter_mut().for_each(|m| *m = 0.0);
    for (s, m) in dist {
        out.mass[2 * (s.v.0 - cenv.full.x_lo) as usize + s.v.1 as usize] += m;
    }
    Ok(out)
}

/// Exact `k`-step law of the pruned component along its own clock.
pub fn exact_pruned_marginal(cenv: &CoupledEnvironment, k: usize) -> Result<VertexDistribution> {
    let dist = iterate_exact(cenv.start_state(), k, |s| cenv.pruned_embedded(s))?;
    let penv = &cenv.pruned.env;
    let mut out = VertexDistribution::point(penv.x_lo, penv.len(), 0, 0);
    out.mass.iter_mut().for_each(|m| *m = 0.0);
    for (s, m) in dist {
        out.mass[2 * (s.u.0 - penv.x_lo) as usize + s.u.1 as usize] += m;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::max_valid_obstacle_length;
    use crate::walk::{exact_k_step_distribution, exact_pruned_k_step};

    /// Trap of length 2 on the bottom rail entered at x = 2.
    fn window() -> Environment {
        Environment::from_edges(0, 8, &[0, 1, 2, 3, 4, 5, 6, 7], &[0, 1, 2, 3, 5, 6, 7], &[0, 2, 5, 7])
    }

    #[test]
    fn window_has_expected_trap() {
        let inv = enumerate_traps(&window()).unwrap();
        assert_eq!(inv.traps.len(), 1);
        assert_eq!((inv.traps[0].entrance_x, inv.traps[0].rail, inv.traps[0].length), (2, 0, 2));
    }

    #[test]
    fn transitions_are_stochastic() {
        let lambda = 0.2;
        assert_eq!(max_valid_obstacle_length(lambda, 50).unwrap(), Some(2));
        let cenv = CoupledEnvironment::from_full(window(), lambda).unwrap();
        let mut seen = 0;
        let mut frontier = vec![cenv.start_state()];
        let mut visited = std::collections::HashSet::new();
        while let Some(s) = frontier.pop() {
            if !visited.insert(s) {
                continue;
            }
            let m = cenv.transitions(&s).unwrap();
            assert!((m.total() - 1.0).abs() < 1e-14, "{s:?}");
            assert!(m.as_slice().iter().all(|x| x.0 >= 0.0));
            seen += 1;
            frontier.extend(m.as_slice().iter().map(|x| x.1));
        }
        assert!(seen > 20);
    }

    #[test]
    fn obstacle_case_uses_obstacle_vector() {
        let lambda = 0.2;
        let cenv = CoupledEnvironment::from_full(window(), lambda).unwrap();
        let o = cenv.pruned.obstacles[0];
        let s = CouplingState { u: (o.x, o.rail), v: cenv.embed((o.x, o.rail)), w: 0 };
        assert_eq!(cenv.case_of(&s).unwrap(), Case::Obstacle);
        let got: Vec<f64> = cenv.transitions(&s).unwrap().as_slice().iter().map(|m| m.0).collect();
        assert_eq!(got, obstacle_transitions(lambda, 2).unwrap().probs.to_vec());
    }

    #[test]
    fn conditioned_rail_ratio_below_gamma() {
        let lambda: f64 = 0.7;
        let g = (-2.0 * lambda).exp();
        for big in 3..8 {
            for k in 1..big {
                let (r, l, _) = rail_step(lambda, k, big, -1);
                assert!(r / l < g);
            }
        }
    }

    #[test]
    fn marginals_match_direct_walks() {
        let cenv = CoupledEnvironment::from_full(window(), 0.2).unwrap();
        let full = exact_full_marginal(&cenv, 8).unwrap();
        let direct = exact_k_step_distribution(&cenv.full, 0.2, (0, 0), 8).unwrap();
        assert!(full.total_variation(&direct) < 1e-12);
        let pruned = exact_pruned_marginal(&cenv, 8).unwrap();
        let direct_p = exact_pruned_k_step(&cenv.pruned, (0, 0), 8).unwrap();
        assert!(pruned.total_variation(&direct_p) < 1e-12);
    }

    #[test]
    fn reinsertion_inverts_pruning() {
        let cenv = CoupledEnvironment::from_full(window(), 0.2).unwrap();
        let rebuilt = reinsert_traps(&cenv.pruned, &cenv.lengths, None).unwrap();
        assert_eq!(rebuilt.cols, cenv.full.cols);
        assert_eq!(rebuilt.x_lo, cenv.full.x_lo);
    }

    #[test]
    fn infeasible_at_critical_bias() {
        let lc = critical_bias(0.5).unwrap();
        assert!(matches!(CoupledEnvironment::from_full(window(), lc), Err(Error::InvalidCouplingParameters { .. })));
    }

    #[test]
    fn trap_free_components_move_together() {
        let all: Vec<i64> = (0..12).collect();
        let env = Environment::from_edges(0, 12, &all, &all, &[0, 3, 6, 9, 12]);
        let cenv = CoupledEnvironment::from_full(env, 1.0).unwrap();
        assert!(cenv.pruned.obstacles.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let traj = simulate_coupling(&cenv, 2000, &mut rng).unwrap();
        assert!(traj.states.iter().all(|s| cenv.embed(s.u) == s.v));
        assert!(check_visit_domination(&traj, &cenv).is_clean());
    }
}
