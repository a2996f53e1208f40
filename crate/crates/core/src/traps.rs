//! Traps, backbone and the pruned environment.
//!
//! A trap is a rightward dead end: from an entrance `u0 = (x0, y)` with an
//! open rung, both rails run `m` steps with every rung closed, then the trap
//! rail `y` stops while the other rail continues. Pruning deletes the `m`
//! interior columns, merges the parallel rail into one edge and turns the
//! vertex opposite the entrance into an obstacle.

use std::fmt::Write as _;

use crate::env::{crossing_cluster, horizontal_bit, Environment, Provenance, BOTTOM, TOP, VERT};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrapPiece {
    pub entrance_x: i64,
    /// Rail carrying the dead end.
    pub rail: u8,
    pub length: usize,
}

impl TrapPiece {
    pub fn bottom_x(&self) -> i64 {
        self.entrance_x + self.length as i64
    }

    /// Half-open column range `[x(u0), x(u_{m+1}))`.
    pub fn piece_range(&self) -> (i64, i64) {
        (self.entrance_x, self.entrance_x + self.length as i64 + 1)
    }

    /// Is `(x, y)` one of the dead-end vertices `u1..um`?
    pub fn is_node(&self, x: i64, y: u8) -> bool {
        y == self.rail && x > self.entrance_x && x <= self.bottom_x()
    }

    /// Interior of the piece: every vertex except the two leftmost and the two rightmost.
    pub fn in_interior(&self, x: i64) -> bool {
        x > self.entrance_x && x <= self.bottom_x()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrapInventory {
    pub traps: Vec<TrapPiece>,
    /// Runs that reach the window edge before their status is decided.
    pub censored: Vec<i64>,
}

/// Trap shape starting at `x0`, ignoring cluster membership.
/// `Ok(None)` means no trap; `Err(())` means the window ends first.
fn trap_at(env: &Environment, x0: i64) -> std::result::Result<Option<TrapPiece>, ()> {
    if !env.vert_open(x0) {
        return Ok(None);
    }
    let hi = env.x_hi();
    let mut m = 0i64;
    loop {
        let x = x0 + m;
        if x >= hi {
            return Err(());
        }
        let c = env.col(x);
        let both = c & (TOP | BOTTOM) == TOP | BOTTOM;
        if both && env.col(x + 1) & VERT == 0 {
            m += 1;
            continue;
        }
        if m == 0 {
            return Ok(None);
        }
        return Ok(match c & (TOP | BOTTOM) {
            TOP => Some(TrapPiece { entrance_x: x0, rail: 0, length: m as usize }),
            BOTTOM => Some(TrapPiece { entrance_x: x0, rail: 1, length: m as usize }),
            _ => None,
        });
    }
}

/// Inventory of complete traps in the window whose entrance lies in the crossing cluster.
pub fn enumerate_traps(env: &Environment) -> Result<TrapInventory> {
    let cluster = crossing_cluster(env);
    enumerate_with_cluster(env, &cluster, env.x_lo, env.x_hi())
}

/// Same as [`enumerate_traps`] restricted to entrances in `[lo, hi]`.
pub fn enumerate_with_cluster(env: &Environment, cluster: &[bool], lo: i64, hi: i64) -> Result<TrapInventory> {
    let mut inv = TrapInventory::default();
    let mut x = lo;
    while x <= hi {
        match trap_at(env, x) {
            Ok(Some(t)) => {
                if cluster[2 * (x - env.x_lo) as usize] {
                    inv.traps.push(t);
                    x = t.piece_range().1;
                    continue;
                }
            }
            Ok(None) => {}
            Err(()) => inv.censored.push(x),
        }
        x += 1;
    }
    Ok(inv)
}

/// Traps inside a cycle-stationary environment, where every trap shape belongs to the cluster.
pub fn enumerate_traps_unchecked(env: &Environment, lo: i64, hi: i64) -> TrapInventory {
    let mut inv = TrapInventory::default();
    let mut x = lo.max(env.x_lo);
    while x <= hi.min(env.x_hi()) {
        match trap_at(env, x) {
            Ok(Some(t)) => {
                inv.traps.push(t);
                x = t.piece_range().1;
                continue;
            }
            Ok(None) => {}
            Err(()) => inv.censored.push(x),
        }
        x += 1;
    }
    inv
}

pub fn inventory_csv(inv: &TrapInventory) -> String {
    let mut s = String::from("index,x_entrance,rail,length,x_bottom\n");
    for (i, t) in inv.traps.iter().enumerate() {
        let _ = writeln!(s, "{},{},{},{},{}", i, t.entrance_x, t.rail, t.length, t.bottom_x());
    }
    s
}

/// Cluster minus trap interiors.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    pub env: Environment,
    /// Vertex membership, indexed `2 * (x - x_lo) + y`.
    pub vertices: Vec<bool>,
}

impl Backbone {
    pub fn contains(&self, x: i64, y: u8) -> bool {
        self.env.contains(x) && self.vertices[2 * (x - self.env.x_lo) as usize + y as usize]
    }
}

pub fn extract_backbone(env: &Environment) -> Result<Backbone> {
    let cluster = crossing_cluster(env);
    let inv = enumerate_with_cluster(env, &cluster, env.x_lo, env.x_hi())?;
    let mut vertices = cluster.clone();
    let mut cols = env.cols.clone();
    let n = env.len();
    for i in 0..n {
        let in0 = cluster[2 * i];
        let in1 = cluster[2 * i + 1];
        let next0 = i + 1 < n && cluster[2 * (i + 1)];
        let next1 = i + 1 < n && cluster[2 * (i + 1) + 1];
        if !(in0 && in1) {
            cols[i] &= !VERT;
        }
        if !(in0 && next0) {
            cols[i] &= !BOTTOM;
        }
        if !(in1 && next1) {
            cols[i] &= !TOP;
        }
    }
    for t in &inv.traps {
        let bit = horizontal_bit(t.rail);
        for k in 0..t.length as i64 {
            cols[(t.entrance_x + k - env.x_lo) as usize] &= !bit;
            vertices[2 * (t.entrance_x + k + 1 - env.x_lo) as usize + t.rail as usize] = false;
        }
    }
    let mut out = Environment::new(env.p, env.x_lo, cols, Provenance::Handcrafted);
    out.cycle_boundaries = env.cycle_boundaries.clone();
    Ok(Backbone { env: out, vertices })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    /// Column of the obstacle in pruned coordinates.
    pub x: i64,
    /// Rail of the obstacle (opposite the removed entrance).
    pub rail: u8,
    /// The trap piece it replaces, in original coordinates.
    pub piece: TrapPiece,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrunedEnvironment {
    pub lambda: f64,
    /// Surviving edges in pruned coordinates.
    pub env: Environment,
    pub obstacles: Vec<Obstacle>,
    /// Original column of every pruned column.
    pub orig_x: Vec<i64>,
    /// Obstacle rail per pruned column, if any.
    obstacle_rail: Vec<Option<u8>>,
}

impl PrunedEnvironment {
    pub fn obstacle_at(&self, x: i64) -> Option<u8> {
        if self.env.contains(x) {
            self.obstacle_rail[(x - self.env.x_lo) as usize]
        } else {
            None
        }
    }

    pub fn is_obstacle(&self, x: i64, y: u8) -> bool {
        self.obstacle_at(x) == Some(y)
    }

    pub fn original_x(&self, x: i64) -> i64 {
        self.orig_x[(x - self.env.x_lo) as usize]
    }

    /// Signed number of obstacles between the origin and column `x`:
    /// obstacles in `[0, x)` for `x >= 0`, minus those in `[x, 0)` otherwise.
    pub fn obstacles_before(&self, x: i64) -> i64 {
        let right = self.obstacles.iter().filter(|o| o.x >= 0 && o.x < x).count() as i64;
        let left = self.obstacles.iter().filter(|o| o.x < 0 && o.x >= x).count() as i64;
        right - left
    }

    /// Conductance of the horizontal edge `(x,y) -> (x+1,y)` or the rung at `x` (`vertical = true`).
    pub fn conductance(&self, x: i64, vertical: bool) -> f64 {
        let lambda = self.lambda;
        let factor = 1.0 - (-2.0 * lambda).exp();
        if vertical {
            (2.0 * lambda * x as f64).exp() * factor.powi(self.obstacles_before(x) as i32)
        } else {
            (lambda * (2 * x + 1) as f64).exp() * factor.powi(self.obstacles_before(x + 1) as i32)
        }
    }

    /// Series resistance of the merged edge that replaced `piece`, in original coordinates.
    pub fn merged_resistance(&self, piece: &TrapPiece) -> f64 {
        let lambda = self.lambda;
        let k = piece.entrance_x as f64;
        let m = piece.length as f64;
        (-lambda * (2.0 * k + 1.0)).exp() * (1.0 - (-2.0 * lambda * (m + 1.0)).exp()) / (1.0 - (-2.0 * lambda).exp())
    }
}

/// Deletes every complete trap, merging its parallel rail into one edge.
///
/// Coordinates are compressed so that the original column 0 keeps x = 0;
/// when column 0 is deleted the covering obstacle takes x = 0.
pub fn prune_environment(env: &Environment, lambda: f64) -> Result<PrunedEnvironment> {
    let inv = enumerate_traps(env)?;
    prune_with(env, &inv.traps, lambda)
}

pub fn prune_with(env: &Environment, traps: &[TrapPiece], lambda: f64) -> Result<PrunedEnvironment> {
    let n = env.len();
    let mut deleted = vec![false; n];
    let mut entrance_of = vec![None; n];
    for t in traps {
        let i0 = (t.entrance_x - env.x_lo) as usize;
        entrance_of[i0] = Some(*t);
        for k in 1..=t.length {
            deleted[i0 + k] = true;
        }
    }
    let anchor = if env.contains(0) && deleted[(-env.x_lo) as usize] {
        traps.iter().find(|t| t.in_interior(0)).map(|t| t.entrance_x).unwrap_or(0)
    } else {
        0
    };
    let mut cols = Vec::with_capacity(n);
    let mut orig_x = Vec::with_capacity(n);
    let mut obstacle_rail = Vec::with_capacity(n);
    let mut anchor_index = None;
    let mut obstacles_tmp = Vec::new();
    for i in 0..n {
        if deleted[i] {
            continue;
        }
        let x = env.x_lo + i as i64;
        if x == anchor {
            anchor_index = Some(cols.len());
        }
        let mut c = env.cols[i];
        let mut rail = None;
        if let Some(t) = entrance_of[i] {
            c &= !horizontal_bit(t.rail);
            rail = Some(1 - t.rail);
            obstacles_tmp.push((cols.len(), t));
        }
        cols.push(c);
        orig_x.push(x);
        obstacle_rail.push(rail);
    }
    let anchor_index = anchor_index.unwrap_or(0) as i64;
    let x_lo = -anchor_index;
    let obstacles = obstacles_tmp
        .into_iter()
        .map(|(i, t)| Obstacle { x: x_lo + i as i64, rail: 1 - t.rail, piece: t })
        .collect();
    let mut penv = Environment::new(env.p, x_lo, cols, env.provenance);
    penv.cycle_boundaries = Vec::new();
    Ok(PrunedEnvironment { lambda, env: penv, obstacles, orig_x, obstacle_rail })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dead end of length 4 on the bottom rail entered at the origin.
    fn single_trap_window() -> Environment {
        Environment::from_edges(-2, 8, &[-2, -1, 0, 1, 2, 3, 4, 5, 6, 7], &[-2, -1, 0, 1, 2, 3, 6, 7], &[-2, 0, 5, 6])
    }

    #[test]
    fn single_trap_detected() {
        let env = single_trap_window();
        let inv = enumerate_traps(&env).unwrap();
        assert_eq!(inv.traps, vec![TrapPiece { entrance_x: 0, rail: 0, length: 4 }]);
        assert_eq!(inv.traps[0].bottom_x(), 4);
        assert!(inv.traps[0].is_node(4, 0));
        assert!(!inv.traps[0].is_node(5, 0));
    }

    #[test]
    fn all_rungs_open_has_no_traps() {
        let all: Vec<i64> = (0..12).collect();
        let env = Environment::from_edges(0, 12, &all, &all, &(0..=12).collect::<Vec<_>>());
        assert!(enumerate_traps(&env).unwrap().traps.is_empty());
    }

    #[test]
    fn pruning_merges_and_relabels() {
        let env = single_trap_window();
        let pe = prune_environment(&env, 1.0).unwrap();
        assert_eq!(pe.obstacles.len(), 1);
        let o = pe.obstacles[0];
        assert_eq!((o.x, o.rail), (0, 1));
        assert_eq!(pe.env.len(), env.len() - 4);
        assert_eq!(pe.original_x(1), 5);
        assert!(pe.env.right_open(0, 1));
        assert!(!pe.env.right_open(0, 0));
        assert!(enumerate_traps(&pe.env).unwrap().traps.is_empty());
    }

    #[test]
    fn merged_resistance_is_series_sum() {
        let env = single_trap_window();
        for &lambda in &[0.3, 1.0, 2.0] {
            let pe = prune_environment(&env, lambda).unwrap();
            let t = pe.obstacles[0].piece;
            let series: f64 = (0..=t.length as i64).map(|j| (-lambda * (2 * (t.entrance_x + j) + 1) as f64).exp()).sum();
            let merged = pe.merged_resistance(&t);
            assert!((merged - series).abs() / series < 1e-12);
        }
    }

    #[test]
    fn conductance_drops_by_obstacle_factor() {
        let env = single_trap_window();
        let lambda = 0.7;
        let pe = prune_environment(&env, lambda).unwrap();
        let factor = 1.0 - (-2.0 * lambda).exp();
        // left neighbour of the obstacle, the merged edge, and the next edge
        let before = pe.conductance(-1, false);
        let merged = pe.conductance(0, false);
        let after = pe.conductance(1, false);
        assert!((merged / before - (2.0 * lambda).exp() * factor).abs() < 1e-12);
        assert!((after / merged - (2.0 * lambda).exp()).abs() < 1e-12);
    }

    #[test]
    fn backbone_drops_dead_end() {
        let env = single_trap_window();
        let bb = extract_backbone(&env).unwrap();
        for x in 1..=4 {
            assert!(!bb.contains(x, 0));
            assert!(bb.contains(x, 1));
        }
        assert!(bb.contains(0, 0));
        assert!(!bb.env.right_open(0, 0));
    }

    /// Two traps, of lengths 1 and 3, on the bottom rail.
    fn two_trap_window() -> Environment {
        Environment::from_edges(-1, 9, &[-1, 0, 1, 2, 4, 5, 6, 7, 8], &[0, 1, 3, 5, 6, 7], &[0, 1, 3, 4, 5])
    }

    fn open_set(env: &Environment, bit: u8) -> Vec<i64> {
        (env.x_lo..=env.x_hi()).filter(|&x| env.col(x) & bit != 0).collect()
    }

    #[test]
    fn two_trap_window_reproduced() {
        let env = two_trap_window();
        let inv = enumerate_traps(&env).unwrap();
        assert_eq!(
            inv.traps,
            vec![TrapPiece { entrance_x: 1, rail: 0, length: 1 }, TrapPiece { entrance_x: 5, rail: 0, length: 3 }]
        );
        let pe = prune_environment(&env, 0.9).unwrap();
        assert_eq!((pe.env.x_lo, pe.env.x_hi()), (-1, 5));
        assert_eq!(pe.obstacles.iter().map(|o| (o.x, o.rail)).collect::<Vec<_>>(), vec![(1, 1), (4, 1)]);
        assert_eq!(open_set(&pe.env, TOP), vec![-1, 0, 1, 3, 4]);
        assert_eq!(open_set(&pe.env, BOTTOM), vec![0, 2]);
        assert_eq!(open_set(&pe.env, VERT), vec![0, 1, 2, 3, 4]);
        assert_eq!(pe.orig_x, vec![-1, 0, 1, 3, 4, 5, 9]);
    }

    #[test]
    fn pruning_is_idempotent() {
        for env in [single_trap_window(), two_trap_window()] {
            let once = prune_environment(&env, 0.5).unwrap();
            let twice = prune_environment(&once.env, 0.5).unwrap();
            assert!(twice.obstacles.is_empty());
            assert_eq!(twice.env.cols, once.env.cols);
            assert_eq!(twice.env.x_lo, once.env.x_lo);
        }
    }

    #[test]
    fn origin_inside_trap_maps_to_entrance() {
        let env = two_trap_window().slice(-1, 9);
        let shifted = Environment { x_lo: -7, ..env };
        // column 0 now lies inside the second trap
        let pe = prune_environment(&shifted, 0.5).unwrap();
        let o = pe.obstacles.iter().find(|o| o.piece.in_interior(0)).unwrap();
        assert_eq!(o.x, 0);
        assert_eq!(pe.original_x(0), o.piece.entrance_x);
    }
}
