//! Orbit enumeration of a root quadruple under the Apollonian group.
//!
//! Circles beyond the four root circles correspond one-to-one with non-returning
//! flip words (no slot flipped twice in a row). Along every word the freshly
//! inserted curvature is the largest entry of the quadruple and never decreases,
//! so a subtree can be pruned as soon as its new curvature reaches the bound.
//!
//! Strip packings `(0, 0, c, c)` have an infinite stabilizer generated by the two
//! flips fixing the root, so their walk skips those slots at the root and keeps a
//! visited set; strip walks always run on one worker.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descartes::{Curvature, PackingKind, Quadruple, RootQuadruple};
use crate::error::{Error, Result};

/// One of the four reflections `S₁..S₄` acting on curvature quadruples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Generator {
    slot: usize,
    matrix: [[i128; 4]; 4],
}

impl Generator {
    /// `Sᵢ`: the identity with row `i` replaced by `2` off the diagonal and `−1` on it.
    pub fn standard(slot: usize) -> Self {
        assert!(slot < 4, "slot index out of range: {slot}");
        let mut matrix = [[0i128; 4]; 4];
        for (r, row) in matrix.iter_mut().enumerate() {
            if r == slot {
                *row = [2; 4];
                row[slot] = -1;
            } else {
                row[r] = 1;
            }
        }
        Generator { slot, matrix }
    }

    pub fn all() -> [Generator; 4] {
        [0, 1, 2, 3].map(Generator::standard)
    }

    /// Arbitrary matrix tagged with a slot; used to plant corrupted generators in checks.
    pub fn from_matrix(slot: usize, matrix: [[i128; 4]; 4]) -> Self {
        Generator { slot, matrix }
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn matrix(&self) -> &[[i128; 4]; 4] {
        &self.matrix
    }

    /// Row-vector action `q·Sᵗ` (equivalently `S·q` on a column).
    pub fn apply(&self, q: &Quadruple) -> Result<Quadruple> {
        let mut out = [0i128; 4];
        for (o, row) in out.iter_mut().zip(&self.matrix) {
            *o = row
                .iter()
                .zip(q.entries())
                .try_fold(0i128, |acc, (&m, &x)| {
                    m.checked_mul(x).and_then(|p| acc.checked_add(p))
                })
                .ok_or(Error::Overflow)?;
        }
        Ok(Quadruple(out))
    }

    /// `S²` computed exactly.
    pub fn square(&self) -> [[i128; 4]; 4] {
        let mut out = [[0i128; 4]; 4];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..4).map(|k| self.matrix[i][k] * self.matrix[k][j]).sum();
            }
        }
        out
    }
}

/// `q·Sᵢᵗ` through the standard generator matrix.
pub fn apply_generator(q: &Quadruple, slot: usize) -> Result<Quadruple> {
    Generator::standard(slot).apply(q)
}

/// A node of the non-returning walk.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WalkNode {
    pub quad: Quadruple,
    /// Slot flipped to reach this node; `None` at the root.
    pub last: Option<usize>,
    pub depth: u32,
}

impl WalkNode {
    pub fn root(quad: Quadruple) -> Self {
        WalkNode {
            quad,
            last: None,
            depth: 0,
        }
    }

    pub fn new_entry(&self) -> Option<Curvature> {
        self.last.map(|s| self.quad.get(s))
    }
}

/// A circle of the packing, reported by [`enumerate_circles`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircleEvent {
    pub curvature: Curvature,
    /// The other three entries of the quadruple the circle was created in.
    pub parents: [Curvature; 3],
    pub depth: u32,
    /// Slot of the creating flip; `None` for the root circles.
    pub slot: Option<usize>,
}

impl CircleEvent {
    fn at_slot(quad: &Quadruple, slot: usize, depth: u32, from_flip: bool) -> Self {
        let mut parents = [0; 3];
        let mut k = 0;
        for (j, &x) in quad.entries().iter().enumerate() {
            if j != slot {
                parents[k] = x;
                k += 1;
            }
        }
        CircleEvent {
            curvature: quad.get(slot),
            parents,
            depth,
            slot: from_flip.then_some(slot),
        }
    }

    pub fn from_node(node: &WalkNode) -> Option<Self> {
        node.last
            .map(|slot| CircleEvent::at_slot(&node.quad, slot, node.depth, true))
    }

    /// `curvature,depth,parent1,parent2,parent3`
    pub fn to_csv_row(&self) -> String {
        let [p1, p2, p3] = self.parents;
        format!("{},{},{p1},{p2},{p3}", self.curvature, self.depth)
    }
}

/// Knobs for the walk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumerationOptions {
    pub workers: usize,
    /// Depth at which subtrees become independent work units.
    pub split_depth: u32,
    /// Exceeding this depth is an error.
    pub depth_cap: u32,
    /// Silently stop expanding below this depth (used for depth-limited comparisons).
    pub max_depth: Option<u32>,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        EnumerationOptions {
            workers: 1,
            split_depth: 4,
            depth_cap: 10_000,
            max_depth: None,
        }
    }
}

impl EnumerationOptions {
    pub fn with_workers(workers: usize) -> Self {
        EnumerationOptions {
            workers,
            ..Default::default()
        }
    }
}

/// Returned only when a walk ran to exhaustion.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumerationStats {
    pub events: u64,
    pub nodes: u64,
    pub pruned: u64,
    pub duplicates: u64,
    pub max_depth: u32,
}

impl EnumerationStats {
    fn absorb(&mut self, other: &EnumerationStats) {
        self.events += other.events;
        self.nodes += other.nodes;
        self.pruned += other.pruned;
        self.duplicates += other.duplicates;
        self.max_depth = self.max_depth.max(other.max_depth);
    }
}

/// Accumulator for circle events; one per worker, merged by summation.
pub trait CircleSink: Send {
    fn record(&mut self, event: &CircleEvent);
    fn merge(&mut self, other: Self)
    where
        Self: Sized;
}

/// Counts events.
#[derive(Clone, Debug, Default)]
pub struct CountSink(pub u64);

impl CircleSink for CountSink {
    fn record(&mut self, _: &CircleEvent) {
        self.0 += 1;
    }

    fn merge(&mut self, other: Self) {
        self.0 += other.0;
    }
}

/// Collects every event; merge order follows the work-unit order.
#[derive(Clone, Debug, Default)]
pub struct CollectSink(pub Vec<CircleEvent>);

impl CircleSink for CollectSink {
    fn record(&mut self, event: &CircleEvent) {
        self.0.push(event.clone());
    }

    fn merge(&mut self, mut other: Self) {
        self.0.append(&mut other.0);
    }
}

struct Walker<'a> {
    bound: Curvature,
    opts: &'a EnumerationOptions,
    /// Root slots never flipped at depth 0 (the strip stabilizer).
    root_skip: [bool; 4],
    visited: Option<HashSet<Quadruple>>,
    stats: EnumerationStats,
}

impl<'a> Walker<'a> {
    fn new(root: &RootQuadruple, bound: Curvature, opts: &'a EnumerationOptions) -> Self {
        let strip = root.kind() == PackingKind::Strip;
        let mut root_skip = [false; 4];
        if strip {
            let q = root.quad();
            for (slot, skip) in root_skip.iter_mut().enumerate() {
                *skip = q.flip(slot).map(|f| f == q).unwrap_or(false);
            }
        }
        Walker {
            bound,
            opts,
            root_skip,
            visited: strip.then(|| HashSet::from([root.quad()])),
            stats: EnumerationStats::default(),
        }
    }

    /// Admissible children of `node` that fall under the bound.
    fn children(&mut self, node: &WalkNode, out: &mut Vec<WalkNode>) -> Result<()> {
        if self.opts.max_depth.is_some_and(|m| node.depth >= m) {
            return Ok(());
        }
        let depth = node.depth + 1;
        let parent_new = node.new_entry();
        for slot in (0..4).rev() {
            if Some(slot) == node.last || (node.last.is_none() && self.root_skip[slot]) {
                continue;
            }
            let quad = node.quad.flip(slot)?;
            let new = quad.get(slot);
            if new < quad.max_entry() || parent_new.is_some_and(|p| new < p) {
                return Err(Error::InternalInvariant(format!(
                    "new curvature {new} is not maximal in {quad} (parent {})",
                    node.quad
                )));
            }
            if new >= self.bound {
                self.stats.pruned += 1;
                continue;
            }
            if depth > self.opts.depth_cap {
                return Err(Error::DepthCapExceeded(self.opts.depth_cap));
            }
            if let Some(seen) = self.visited.as_mut() {
                if !seen.insert(quad) {
                    self.stats.duplicates += 1;
                    continue;
                }
            }
            out.push(WalkNode {
                quad,
                last: Some(slot),
                depth,
            });
        }
        Ok(())
    }

    fn note(&mut self, node: &WalkNode) {
        self.stats.nodes += 1;
        self.stats.events += 1;
        self.stats.max_depth = self.stats.max_depth.max(node.depth);
    }

    /// Depth-first walk of everything below `start` (not including `start`).
    fn walk_below<F: FnMut(&WalkNode)>(&mut self, start: WalkNode, visit: &mut F) -> Result<()> {
        let mut stack = Vec::new();
        self.children(&start, &mut stack)?;
        let mut scratch = Vec::with_capacity(3);
        while let Some(node) = stack.pop() {
            self.note(&node);
            visit(&node);
            scratch.clear();
            self.children(&node, &mut scratch)?;
            stack.extend(scratch.drain(..));
        }
        Ok(())
    }
}

fn root_events(root: &RootQuadruple, bound: Curvature) -> impl Iterator<Item = CircleEvent> {
    let q = root.quad();
    (0..4)
        .filter(move |&s| q.get(s) < bound)
        .map(move |s| CircleEvent::at_slot(&q, s, 0, false))
}

/// Sequential walk: calls `visitor` once per circle with curvature `< bound`,
/// root circles first.
pub fn enumerate_circles<F: FnMut(&CircleEvent)>(
    root: &RootQuadruple,
    bound: Curvature,
    opts: &EnumerationOptions,
    mut visitor: F,
) -> Result<EnumerationStats> {
    let mut walker = Walker::new(root, bound, opts);
    for e in root_events(root, bound) {
        walker.stats.events += 1;
        visitor(&e);
    }
    walker.walk_below(WalkNode::root(root.quad()), &mut |node| {
        if let Some(e) = CircleEvent::from_node(node) {
            visitor(&e);
        }
    })?;
    Ok(walker.stats)
}

/// Walk into sinks built by `make`, splitting subtrees across `opts.workers` threads.
/// Strip packings always run on one worker.
pub fn enumerate_into<S, M>(
    root: &RootQuadruple,
    bound: Curvature,
    opts: &EnumerationOptions,
    make: M,
) -> Result<(S, EnumerationStats)>
where
    S: CircleSink,
    M: Fn() -> S + Sync,
{
    let mut head = make();
    if opts.workers <= 1 || root.kind() == PackingKind::Strip {
        let stats = enumerate_circles(root, bound, opts, |e| head.record(e))?;
        return Ok((head, stats));
    }

    let mut walker = Walker::new(root, bound, opts);
    for e in root_events(root, bound) {
        walker.stats.events += 1;
        head.record(&e);
    }
    let mut frontier = vec![WalkNode::root(root.quad())];
    for _ in 0..opts.split_depth {
        let mut next = Vec::new();
        for node in &frontier {
            walker.children(node, &mut next)?;
        }
        for node in &next {
            walker.note(node);
            if let Some(e) = CircleEvent::from_node(node) {
                head.record(&e);
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    let mut stats = walker.stats;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Resource(format!("thread pool: {e}")))?;
    let parts: Vec<(S, EnumerationStats)> = pool.install(|| {
        frontier
            .into_par_iter()
            .map(|node| {
                let mut sink = make();
                let mut w = Walker::new(root, bound, opts);
                w.walk_below(node, &mut |n| {
                    if let Some(e) = CircleEvent::from_node(n) {
                        sink.record(&e);
                    }
                })?;
                Ok((sink, w.stats))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    for (sink, s) in parts {
        head.merge(sink);
        stats.absorb(&s);
    }
    Ok((head, stats))
}

/// `N(T)`: circles with curvature `< bound`, root circles included.
pub fn count_circles(
    root: &RootQuadruple,
    bound: Curvature,
    opts: &EnumerationOptions,
) -> Result<u64> {
    Ok(enumerate_into(root, bound, opts, CountSink::default)?.0 .0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TangentPairCount {
    /// Pairs counted directly: six root pairs plus three per created circle.
    pub direct: u64,
    /// `3·N(T) − 6`.
    pub formula: u64,
}

/// `N₂(T)`, counted both directly and through `3·N(T) − 6`; the two must agree.
pub fn count_tangent_pairs(
    root: &RootQuadruple,
    bound: Curvature,
    opts: &EnumerationOptions,
) -> Result<TangentPairCount> {
    if bound <= root.quad().max_entry() {
        return Err(Error::InvalidInput(format!(
            "tangent pair count needs a bound above the root maximum {}",
            root.quad().max_entry()
        )));
    }
    #[derive(Default)]
    struct PairSink {
        circles: u64,
        pairs: u64,
    }
    impl CircleSink for PairSink {
        fn record(&mut self, e: &CircleEvent) {
            self.circles += 1;
            if e.depth > 0 {
                self.pairs += 3;
            }
        }
        fn merge(&mut self, other: Self) {
            self.circles += other.circles;
            self.pairs += other.pairs;
        }
    }
    let (sink, _) = enumerate_into(root, bound, opts, PairSink::default)?;
    let counts = TangentPairCount {
        direct: sink.pairs + 6,
        formula: 3 * sink.circles - 6,
    };
    if counts.direct != counts.formula {
        return Err(Error::InternalInvariant(format!(
            "direct tangent pair count {} differs from 3N-6 = {}",
            counts.direct, counts.formula
        )));
    }
    Ok(counts)
}

/// Norm used to bound orbit points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    Max,
    Euclidean,
}

impl Norm {
    /// Whether `‖v‖ < bound`, computed exactly.
    pub fn below(self, v: &Quadruple, bound: Curvature) -> Result<bool> {
        if bound <= 0 {
            return Ok(false);
        }
        match self {
            Norm::Max => Ok(v.entries().iter().all(|x| x.unsigned_abs() < bound as u128)),
            Norm::Euclidean => {
                let sq = v
                    .entries()
                    .iter()
                    .try_fold(0u128, |acc, x| {
                        let a = x.unsigned_abs();
                        a.checked_mul(a).and_then(|s| acc.checked_add(s))
                    })
                    .ok_or(Error::Overflow)?;
                let b = bound as u128;
                Ok(b.checked_mul(b).is_none_or(|b2| sq < b2))
            }
        }
    }
}

/// Distinct orbit vectors `v = ξγᵗ` with `‖v‖ < bound`.
///
/// Both supported norms dominate the largest entry, so the walk prunes on it.
pub fn count_orbit_points(
    root: &RootQuadruple,
    bound: Curvature,
    norm: Norm,
    opts: &EnumerationOptions,
) -> Result<u64> {
    let mut seen = HashSet::new();
    let mut walker = Walker::new(root, bound, opts);
    let start = WalkNode::root(root.quad());
    let mut failure = None;
    let mut consider = |q: &Quadruple, seen: &mut HashSet<Quadruple>| {
        if failure.is_some() {
            return;
        }
        match norm.below(q, bound) {
            Ok(true) => {
                seen.insert(*q);
            }
            Ok(false) => {}
            Err(e) => failure = Some(e),
        }
    };
    consider(&start.quad, &mut seen);
    walker.walk_below(start, &mut |n| consider(&n.quad, &mut seen))?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(seen.len() as u64)
}
