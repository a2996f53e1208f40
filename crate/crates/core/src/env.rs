//! Percolation environments on the ladder `Z x {0,1}`.
//!
//! An environment is a contiguous run of 3-bit column records. The record at
//! `x` holds the top horizontal edge `x -> x+1`, the bottom horizontal edge
//! `x -> x+1` and the vertical edge at `x`.
//!
//! Cycle-stationary environments are produced by a Doob transform of the
//! rail-connectivity chain: the state after column `x` is the set of rail
//! vertices at `x` joined to the left end, and the transform conditions that
//! set on never becoming empty.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};

pub const TOP: u8 = 0b001;
pub const BOTTOM: u8 = 0b010;
pub const VERT: u8 = 0b100;

#[inline]
pub fn horizontal_bit(y: u8) -> u8 {
    if y == 0 {
        BOTTOM
    } else {
        TOP
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    CycleStationary,
    WindowRejection,
    Handcrafted,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::CycleStationary => "cycle_stationary",
            Provenance::WindowRejection => "window_rejection",
            Provenance::Handcrafted => "handcrafted",
        }
    }
}

impl FromStr for Provenance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cycle_stationary" => Ok(Provenance::CycleStationary),
            "window_rejection" => Ok(Provenance::WindowRejection),
            "handcrafted" => Ok(Provenance::Handcrafted),
            other => Err(Error::Parse(format!("unknown provenance {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub p: f64,
    pub x_lo: i64,
    pub cols: Vec<u8>,
    pub provenance: Provenance,
    /// Pre-regeneration points, kept for cycle-stationary environments.
    pub cycle_boundaries: Vec<i64>,
}

impl Environment {
    pub fn new(p: f64, x_lo: i64, cols: Vec<u8>, provenance: Provenance) -> Self {
        Self { p, x_lo, cols, provenance, cycle_boundaries: Vec::new() }
    }

    /// Builds a handcrafted window from edge lists: `top`/`bottom` hold the left
    /// ends of open horizontal edges, `vert` the columns of open rungs.
    pub fn from_edges(x_lo: i64, x_hi: i64, top: &[i64], bottom: &[i64], vert: &[i64]) -> Self {
        let mut cols = vec![0u8; (x_hi - x_lo + 1) as usize];
        let mut set = |xs: &[i64], bit: u8| {
            for &x in xs {
                assert!(x >= x_lo && x <= x_hi, "edge at {x} outside window");
                cols[(x - x_lo) as usize] |= bit;
            }
        };
        set(top, TOP);
        set(bottom, BOTTOM);
        set(vert, VERT);
        Self::new(0.5, x_lo, cols, Provenance::Handcrafted)
    }

    pub fn x_hi(&self) -> i64 {
        self.x_lo + self.cols.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    pub fn contains(&self, x: i64) -> bool {
        x >= self.x_lo && x <= self.x_hi()
    }

    #[inline]
    pub fn col(&self, x: i64) -> u8 {
        self.cols[(x - self.x_lo) as usize]
    }

    /// Column record, or 0 outside the window.
    #[inline]
    pub fn col_or_closed(&self, x: i64) -> u8 {
        if self.contains(x) {
            self.col(x)
        } else {
            0
        }
    }

    /// Is the horizontal edge `(x,y) -> (x+1,y)` open?
    #[inline]
    pub fn right_open(&self, x: i64, y: u8) -> bool {
        self.col_or_closed(x) & horizontal_bit(y) != 0
    }

    #[inline]
    pub fn vert_open(&self, x: i64) -> bool {
        self.col_or_closed(x) & VERT != 0
    }

    /// Sub-window `[lo, hi]`, keeping provenance.
    pub fn slice(&self, lo: i64, hi: i64) -> Environment {
        let a = (lo - self.x_lo) as usize;
        let b = (hi - self.x_lo) as usize;
        let mut out = Environment::new(self.p, lo, self.cols[a..=b].to_vec(), self.provenance);
        out.cycle_boundaries = self.cycle_boundaries.iter().copied().filter(|&x| x >= lo && x <= hi).collect();
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "ladderenv v1 p={} x_lo={} x_hi={} provenance={}",
            self.p,
            self.x_lo,
            self.x_hi(),
            self.provenance.as_str()
        );
        for (i, &c) in self.cols.iter().enumerate() {
            let x = self.x_lo + i as i64;
            let bit = |b: u8| u8::from(c & b != 0);
            let _ = writeln!(s, "{} {} {} {}", x, bit(TOP), bit(BOTTOM), bit(VERT));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Environment> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty environment file".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("ladderenv") || fields.next() != Some("v1") {
            return Err(Error::Parse("missing `ladderenv v1` header".into()));
        }
        let (mut p, mut lo, mut hi, mut prov) = (None, None, None, None);
        for kv in fields {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse(format!("bad header field {kv}")))?;
            let bad = || Error::Parse(format!("bad value in {kv}"));
            match k {
                "p" => p = Some(v.parse::<f64>().map_err(|_| bad())?),
                "x_lo" => lo = Some(v.parse::<i64>().map_err(|_| bad())?),
                "x_hi" => hi = Some(v.parse::<i64>().map_err(|_| bad())?),
                "provenance" => prov = Some(v.parse::<Provenance>()?),
                _ => return Err(Error::Parse(format!("unknown header field {k}"))),
            }
        }
        let missing = |n: &str| Error::Parse(format!("header lacks {n}"));
        let (p, lo, hi, prov) = (
            p.ok_or_else(|| missing("p"))?,
            lo.ok_or_else(|| missing("x_lo"))?,
            hi.ok_or_else(|| missing("x_hi"))?,
            prov.ok_or_else(|| missing("provenance"))?,
        );
        if hi < lo {
            return Err(Error::Parse("x_hi < x_lo".into()));
        }
        let mut cols = vec![0u8; (hi - lo + 1) as usize];
        let mut seen = vec![false; cols.len()];
        for line in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 {
                return Err(Error::Parse(format!("bad column line `{line}`")));
            }
            let x: i64 = parts[0].parse().map_err(|_| Error::Parse(format!("bad x in `{line}`")))?;
            if x < lo || x > hi {
                return Err(Error::Parse(format!("column {x} outside header range")));
            }
            let mut c = 0u8;
            for (bit, s) in [TOP, BOTTOM, VERT].into_iter().zip(&parts[1..]) {
                match *s {
                    "0" => {}
                    "1" => c |= bit,
                    _ => return Err(Error::Parse(format!("bit must be 0 or 1 in `{line}`"))),
                }
            }
            let i = (x - lo) as usize;
            if seen[i] {
                return Err(Error::Parse(format!("duplicate column {x}")));
            }
            seen[i] = true;
            cols[i] = c;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Parse("missing column lines".into()));
        }
        let mut env = Environment::new(p, lo, cols, prov);
        if prov == Provenance::CycleStationary {
            env.cycle_boundaries = find_pre_regeneration_points(&env)?;
        }
        Ok(env)
    }
}

/// Union-find over the `2 * len` vertices of a window.
struct Dsu(Vec<u32>);

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu((0..n as u32).collect())
    }
    fn find(&mut self, mut a: u32) -> u32 {
        while self.0[a as usize] != a {
            let parent = self.0[a as usize];
            self.0[a as usize] = self.0[parent as usize];
            a = parent;
        }
        a
    }
    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra as usize] = rb;
        }
    }
}

/// Marks vertices belonging to a component that touches both window ends.
/// Index layout: `2 * (x - x_lo) + y`.
pub fn crossing_cluster(env: &Environment) -> Vec<bool> {
    let n = env.len();
    let mut dsu = Dsu::new(2 * n);
    for i in 0..n {
        let c = env.cols[i];
        if c & VERT != 0 {
            dsu.union(2 * i as u32, 2 * i as u32 + 1);
        }
        if i + 1 < n {
            if c & BOTTOM != 0 {
                dsu.union(2 * i as u32, 2 * (i + 1) as u32);
            }
            if c & TOP != 0 {
                dsu.union(2 * i as u32 + 1, 2 * (i + 1) as u32 + 1);
            }
        }
    }
    let left: Vec<u32> = (0..2).map(|y| dsu.find(y)).collect();
    let right: Vec<u32> = (0..2).map(|y| dsu.find(2 * (n as u32 - 1) + y)).collect();
    (0..2 * n as u32)
        .map(|v| {
            let r = dsu.find(v);
            left.contains(&r) && right.contains(&r)
        })
        .collect()
}

pub fn has_crossing(env: &Environment) -> bool {
    crossing_cluster(env).iter().any(|&b| b)
}

/// All `x` where `(x,0)` lies in the crossing cluster and `(x,1)` is isolated.
pub fn find_pre_regeneration_points(env: &Environment) -> Result<Vec<i64>> {
    if env.len() < 2 {
        return Err(Error::Margin { x: env.x_lo });
    }
    let cluster = crossing_cluster(env);
    let mut out = Vec::new();
    for x in env.x_lo + 1..=env.x_hi() {
        let c = env.col(x);
        let isolated_top = c & (TOP | VERT) == 0 && env.col(x - 1) & TOP == 0;
        if isolated_top && cluster[2 * (x - env.x_lo) as usize] {
            out.push(x);
        }
    }
    Ok(out)
}

/// Rail-connectivity states of the column chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RailState {
    TopOnly = 0,
    BottomOnly = 1,
    Both = 2,
}

impl RailState {
    pub const ALL: [RailState; 3] = [RailState::TopOnly, RailState::BottomOnly, RailState::Both];

    fn from_bits(top: bool, bottom: bool) -> Option<RailState> {
        match (top, bottom) {
            (true, true) => Some(RailState::Both),
            (true, false) => Some(RailState::TopOnly),
            (false, true) => Some(RailState::BottomOnly),
            (false, false) => None,
        }
    }

    fn top(self) -> bool {
        self != RailState::BottomOnly
    }

    fn bottom(self) -> bool {
        self != RailState::TopOnly
    }
}

/// Edges drawn in one step of the chain: horizontals `x -> x+1` and the rung at `x+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bundle {
    pub top: bool,
    pub bottom: bool,
    pub vert_next: bool,
}

impl Bundle {
    pub fn from_index(i: usize) -> Bundle {
        Bundle { top: i & 1 != 0, bottom: i & 2 != 0, vert_next: i & 4 != 0 }
    }

    fn open_count(&self) -> i32 {
        self.top as i32 + self.bottom as i32 + self.vert_next as i32
    }
}

/// State after drawing `bundle` from `state`; `None` when the live set dies.
pub fn chain_step(state: RailState, bundle: Bundle) -> Option<RailState> {
    let top = state.top() && bundle.top;
    let bottom = state.bottom() && bundle.bottom;
    let (top, bottom) = if (top || bottom) && bundle.vert_next { (true, true) } else { (top, bottom) };
    RailState::from_bits(top, bottom)
}

/// Prior probability of a bundle under i.i.d. percolation.
pub fn bundle_prob(p: f64, bundle: Bundle) -> f64 {
    let k = bundle.open_count();
    p.powi(k) * (1.0 - p).powi(3 - k)
}

#[derive(Debug, Clone)]
pub struct ColumnChain {
    pub p: f64,
    /// Live-to-live kernel summed over bundles.
    pub kernel: [[f64; 3]; 3],
    pub perron_root: f64,
    /// Harmonic function, normalised to `h(Both) = 1`.
    pub h: [f64; 3],
    /// Cumulative Doob probabilities over the 8 bundles, per state.
    doob_cdf: [[f64; 8]; 3],
    /// Doob law from `BottomOnly` given a closed top horizontal.
    restart_cdf: [f64; 8],
}

fn cdf_pick(cdf: &[f64; 8], u: f64) -> usize {
    if let Some(i) = cdf.iter().position(|&c| u < c) {
        return i;
    }
    // rounding fallback: last bundle carrying mass
    (0..8).rev().find(|&i| cdf[i] > if i == 0 { 0.0 } else { cdf[i - 1] }).unwrap_or(7)
}

impl ColumnChain {
    pub fn build(p: f64) -> Result<ColumnChain> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("retention probability {p} outside (0,1)")));
        }
        let mut kernel = [[0.0; 3]; 3];
        for s in RailState::ALL {
            for i in 0..8 {
                let b = Bundle::from_index(i);
                if let Some(t) = chain_step(s, b) {
                    kernel[s as usize][t as usize] += bundle_prob(p, b);
                }
            }
        }
        let mut h = [1.0; 3];
        let mut rho = 0.0;
        for _ in 0..100_000 {
            let mut next = [0.0; 3];
            for s in 0..3 {
                next[s] = (0..3).map(|t| kernel[s][t] * h[t]).sum();
            }
            let new_rho = next[2];
            for s in 0..3 {
                next[s] /= new_rho;
            }
            let delta = (0..3).map(|s| (next[s] - h[s]).abs()).fold(0.0, f64::max);
            h = next;
            let settled = (new_rho - rho).abs() < 1e-16 && delta < 1e-15;
            rho = new_rho;
            if settled {
                break;
            }
        }
        let mut doob_cdf = [[0.0; 8]; 3];
        for s in RailState::ALL {
            let mut acc = 0.0;
            for i in 0..8 {
                let b = Bundle::from_index(i);
                if let Some(t) = chain_step(s, b) {
                    acc += bundle_prob(p, b) * h[t as usize] / (rho * h[s as usize]);
                }
                doob_cdf[s as usize][i] = acc;
            }
        }
        let mut restart_cdf = [0.0; 8];
        let mut acc = 0.0;
        let mut weights = [0.0; 8];
        for (i, w) in weights.iter_mut().enumerate() {
            let b = Bundle::from_index(i);
            if b.top {
                continue;
            }
            if let Some(t) = chain_step(RailState::BottomOnly, b) {
                *w = bundle_prob(p, b) * h[t as usize];
            }
        }
        let total: f64 = weights.iter().sum();
        for i in 0..8 {
            acc += weights[i] / total;
            restart_cdf[i] = acc;
        }
        Ok(ColumnChain { p, kernel, perron_root: rho, h, doob_cdf, restart_cdf })
    }

    /// Doob transition probability of drawing `bundle` from `state`.
    pub fn doob_prob(&self, state: RailState, bundle: Bundle) -> f64 {
        match chain_step(state, bundle) {
            Some(t) => bundle_prob(self.p, bundle) * self.h[t as usize] / (self.perron_root * self.h[state as usize]),
            None => 0.0,
        }
    }

    pub fn doob_row_sum(&self, state: RailState) -> f64 {
        (0..8).map(|i| self.doob_prob(state, Bundle::from_index(i))).sum()
    }

    fn draw<R: Rng + ?Sized>(&self, state: RailState, rng: &mut R) -> Bundle {
        let cdf = &self.doob_cdf[state as usize];
        Bundle::from_index(cdf_pick(cdf, rng.gen::<f64>() * cdf[7]))
    }

    fn draw_restart<R: Rng + ?Sized>(&self, rng: &mut R) -> Bundle {
        Bundle::from_index(cdf_pick(&self.restart_cdf, rng.gen::<f64>() * self.restart_cdf[7]))
    }

    /// Geometric ratio of the trap-length law implied by the chain.
    pub fn trap_ratio(&self) -> f64 {
        let p = self.p;
        p * p * (1.0 - p) / self.perron_root
    }

    /// One cycle: column records from a pre-regeneration point up to (excluding) the next one.
    pub fn sample_cycle<R: Rng + ?Sized>(&self, rng: &mut R, cap: usize) -> Result<Vec<u8>> {
        let mut cols = Vec::new();
        let mut state = RailState::BottomOnly;
        let mut vert_here = false;
        let mut prev_top = false;
        let mut bundle = self.draw_restart(rng);
        loop {
            let x = cols.len();
            if x > 0 && state == RailState::BottomOnly && !vert_here && !prev_top && !bundle.top {
                return Ok(cols);
            }
            if x >= cap {
                return Err(Error::Horizon { cap });
            }
            let mut c = 0;
            if bundle.top {
                c |= TOP;
            }
            if bundle.bottom {
                c |= BOTTOM;
            }
            if vert_here {
                c |= VERT;
            }
            cols.push(c);
            state = chain_step(state, bundle).expect("Doob chain never dies");
            prev_top = bundle.top;
            vert_here = bundle.vert_next;
            bundle = self.draw(state, rng);
        }
    }
}

/// Mirror image of a cycle, to be placed immediately left of a pre-regeneration point.
pub fn mirror_cycle(cycle: &[u8]) -> Vec<u8> {
    let len = cycle.len();
    (0..len)
        .map(|i| {
            let src = cycle[len - 1 - i];
            let vert = if i == 0 { 0 } else { cycle[len - i] & VERT };
            (src & (TOP | BOTTOM)) | vert
        })
        .collect()
}

pub const DEFAULT_CYCLE_CAP: usize = 1_000_000;

/// Source of fresh cycles used to grow a cycle-stationary environment on demand.
#[derive(Debug, Clone)]
pub struct CycleSource<R> {
    pub chain: ColumnChain,
    pub rng: R,
    pub cap: usize,
}

impl<R: Rng> CycleSource<R> {
    pub fn new(chain: ColumnChain, rng: R) -> Self {
        Self { chain, rng, cap: DEFAULT_CYCLE_CAP }
    }

    pub fn next_cycle(&mut self) -> Result<Vec<u8>> {
        self.chain.sample_cycle(&mut self.rng, self.cap)
    }
}

/// Appends cycles to the right until the environment reaches `x_hi >= right`,
/// and prepends mirrored cycles until `x_lo <= left`.
pub fn grow_environment<R: Rng>(env: &mut Environment, source: &mut CycleSource<R>, left: i64, right: i64) -> Result<()> {
    while env.x_hi() < right {
        let start = env.x_hi() + 1;
        let cycle = source.next_cycle()?;
        env.cycle_boundaries.push(start);
        env.cols.extend_from_slice(&cycle);
    }
    while env.x_lo > left {
        let cycle = mirror_cycle(&source.next_cycle()?);
        let new_lo = env.x_lo - cycle.len() as i64;
        let mut cols = cycle;
        cols.extend_from_slice(&env.cols);
        env.cols = cols;
        env.x_lo = new_lo;
        env.cycle_boundaries.insert(0, new_lo);
    }
    Ok(())
}

/// Cycle-stationary environment covering at least `[left, right]`, with a pre-regeneration point at 0.
pub fn sample_environment<R: Rng>(source: &mut CycleSource<R>, left: i64, right: i64) -> Result<Environment> {
    let first = source.next_cycle()?;
    let mut env = Environment::new(source.chain.p, 0, first, Provenance::CycleStationary);
    env.cycle_boundaries.push(0);
    grow_environment(&mut env, source, left.min(-1), right)?;
    Ok(env)
}

/// Same as [`sample_environment`] but counted in cycles to the right of 0.
pub fn sample_environment_cycles<R: Rng>(source: &mut CycleSource<R>, n_cycles: usize) -> Result<Environment> {
    let mut env = Environment::new(source.chain.p, 0, Vec::new(), Provenance::CycleStationary);
    for _ in 0..n_cycles.max(1) {
        let start = env.x_lo + env.cols.len() as i64;
        env.cycle_boundaries.push(start);
        let cycle = source.next_cycle()?;
        env.cols.extend_from_slice(&cycle);
    }
    Ok(env)
}

fn sample_iid_window<R: Rng + ?Sized>(p: f64, n: i64, rng: &mut R) -> Vec<u8> {
    (0..2 * n + 1)
        .map(|_| {
            let mut c = 0;
            for bit in [TOP, BOTTOM, VERT] {
                if rng.gen::<f64>() < p {
                    c |= bit;
                }
            }
            c
        })
        .collect()
}

/// Does `(0,0)` lie in the crossing cluster of a window centred at 0?
pub fn origin_in_cluster(env: &Environment) -> bool {
    env.contains(0) && crossing_cluster(env)[2 * (0 - env.x_lo) as usize]
}

/// Plain rejection: i.i.d. columns on `[-n, n]` until a crossing exists with `(0,0)` in its cluster.
pub fn sample_window_rejection<R: Rng + ?Sized>(p: f64, n: i64, rng: &mut R, budget: u64) -> Result<(Environment, u64)> {
    if n < 2 {
        return Err(Error::Domain("half-width must be at least 2".into()));
    }
    for attempt in 1..=budget {
        let env = Environment::new(p, -n, sample_iid_window(p, n, rng), Provenance::WindowRejection);
        if origin_in_cluster(&env) {
            return Ok((env, attempt));
        }
    }
    Err(Error::Budget { what: "window rejection", attempts: budget })
}

/// Exact sampler of the crossing-conditioned window law on `[-n, n]`.
///
/// The crossing event is handled by backward survival probabilities of the
/// finite-horizon rail chain; membership of `(0,0)` is then enforced by rejection.
#[derive(Debug, Clone)]
pub struct WindowSampler {
    pub p: f64,
    pub n: i64,
    /// `survival[i][s]`: probability of reaching column `n` from state `s` at column `-n + i`.
    survival: Vec<[f64; 3]>,
}

impl WindowSampler {
    pub fn new(p: f64, n: i64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) || n < 2 {
            return Err(Error::Domain(format!("window sampler needs p in (0,1), n >= 2 (got p={p}, n={n})")));
        }
        let width = (2 * n) as usize;
        let mut survival = vec![[0.0; 3]; width + 1];
        survival[width] = [1.0; 3];
        for i in (0..width).rev() {
            for s in RailState::ALL {
                let mut acc = 0.0;
                for b in 0..8 {
                    let bundle = Bundle::from_index(b);
                    if let Some(t) = chain_step(s, bundle) {
                        acc += bundle_prob(p, bundle) * survival[i + 1][t as usize];
                    }
                }
                survival[i][s as usize] = acc;
            }
        }
        Ok(Self { p, n, survival })
    }

    /// Probability that the window is crossed.
    pub fn crossing_probability(&self) -> f64 {
        self.survival[0][RailState::Both as usize]
    }

    /// One crossing-conditioned window, without the origin requirement.
    pub fn sample_crossing<R: Rng + ?Sized>(&self, rng: &mut R) -> Environment {
        let p = self.p;
        let width = (2 * self.n) as usize;
        let mut cols = vec![0u8; width + 1];
        if rng.gen::<f64>() < p {
            cols[0] |= VERT;
        }
        let mut state = RailState::Both;
        for i in 0..width {
            let u = rng.gen::<f64>() * self.survival[i][state as usize];
            let mut acc = 0.0;
            let mut chosen = None;
            let mut last_live = None;
            for b in 0..8 {
                let bundle = Bundle::from_index(b);
                if let Some(t) = chain_step(state, bundle) {
                    acc += bundle_prob(p, bundle) * self.survival[i + 1][t as usize];
                    last_live = Some((bundle, t));
                    if u < acc {
                        chosen = Some((bundle, t));
                        break;
                    }
                }
            }
            let (bundle, next) = chosen.or(last_live).expect("live bundle exists");
            if bundle.top {
                cols[i] |= TOP;
            }
            if bundle.bottom {
                cols[i] |= BOTTOM;
            }
            if bundle.vert_next {
                cols[i + 1] |= VERT;
            }
            state = next;
        }
        for bit in [TOP, BOTTOM] {
            if rng.gen::<f64>() < p {
                cols[width] |= bit;
            }
        }
        Environment::new(p, -self.n, cols, Provenance::WindowRejection)
    }

    /// Crossing-conditioned window with `(0,0)` in the crossing cluster.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, budget: u64) -> Result<(Environment, u64)> {
        for attempt in 1..=budget {
            let env = self.sample_crossing(rng);
            if origin_in_cluster(&env) {
                return Ok((env, attempt));
            }
        }
        Err(Error::Budget { what: "origin membership", attempts: budget })
    }
}
