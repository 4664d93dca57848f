//! LPR stack distances for every capacity at once.
//!
//! LPR is a stack policy, so a single pass can report, for every access, the
//! position `rho(d)` of the accessed item in the LPR stack given its LRU depth
//! `d`; the access misses at capacity `C` exactly when that position exceeds
//! `C`. The map `rho` only ever permutes depths within a segment: an access at
//! LRU depth `d` in segment `a` rotates every segment above `a` by one and the
//! part of segment `a` down to `d` by one. [`LprSimulator`] keeps one treap per
//! segment and defers the whole-segment rotations as counters in a static tree,
//! giving `O(log V)` per access. [`NaiveLpr`] applies the same update to a
//! plain array and serves as the reference.
//!
//! Both engines run either from a full initial stack or cold. Cold, an item
//! seen for the first time is a miss at every capacity (reported as `V + 1`)
//! and is treated as sitting just below the `m` items seen so far.

mod fenwick;
mod treap;

use serde::Serialize;

use crate::dist::{LruStack, Trace};
use crate::error::{Error, Result};
use crate::segments::Segmentation;

use fenwick::LruDepths;
use treap::{Arena, NodeId};

/// Static tree over segments: `right` is the deepest depth covered by a node,
/// `counter` holds whole-segment rotations pending for its subtree.
#[derive(Debug, Clone)]
struct AuxTree {
    leaves: usize,
    right: Vec<usize>,
    counter: Vec<i64>,
}

impl AuxTree {
    fn new(q: &[usize]) -> Self {
        let segments = q.len().saturating_sub(1);
        let leaves = segments.next_power_of_two().max(1);
        let mut right = vec![0; 2 * leaves];
        right[leaves..leaves + segments].copy_from_slice(&q[1..=segments]);
        for n in (1..leaves).rev() {
            right[n] = right[2 * n].max(right[2 * n + 1]);
        }
        Self {
            leaves,
            right,
            counter: vec![0; 2 * leaves],
        }
    }

    /// Finds the segment holding `depth`, registers one rotation for every
    /// segment above it and returns the segment with its pending rotations,
    /// which are cleared.
    fn descend(&mut self, depth: usize) -> (usize, i64) {
        let mut node = 1;
        let mut pending = self.counter[1];
        while node < self.leaves {
            let left = 2 * node;
            if depth <= self.right[left] {
                node = left;
            } else {
                self.counter[left] += 1;
                node = left + 1;
            }
            pending += self.counter[node];
        }
        self.counter[node] -= pending;
        (node - self.leaves, pending)
    }

    /// Pending rotations of segment `seg`, cleared.
    fn take(&mut self, seg: usize) -> i64 {
        let leaf = self.leaves + seg;
        let mut pending = 0;
        let mut node = leaf;
        while node >= 1 {
            pending += self.counter[node];
            node /= 2;
        }
        self.counter[leaf] -= pending;
        pending
    }
}

/// `O(log V)`-per-access LPR stack-distance engine.
#[derive(Debug, Clone)]
pub struct LprSimulator {
    v: usize,
    q: Vec<usize>,
    lru: LruDepths,
    arena: Arena,
    roots: Vec<NodeId>,
    aux: AuxTree,
}

impl LprSimulator {
    /// Starts from a full LRU stack that coincides with the LPR stack.
    pub fn new(seg: &Segmentation, initial: &LruStack) -> Result<Self> {
        check_stack(seg, initial)?;
        Ok(Self::build(seg, LruDepths::full(initial.items())))
    }

    /// Starts with no item seen.
    pub fn cold(seg: &Segmentation) -> Self {
        Self::build(seg, LruDepths::empty(seg.len()))
    }

    fn build(seg: &Segmentation, lru: LruDepths) -> Self {
        let q = seg.breakpoints().to_vec();
        let mut arena = Arena::with_capacity(seg.len());
        let roots = q
            .windows(2)
            .map(|w| arena.build((w[0] + 1) as u32..=w[1] as u32))
            .collect();
        Self {
            v: seg.len(),
            aux: AuxTree::new(&q),
            q,
            lru,
            arena,
            roots,
        }
    }

    pub fn len(&self) -> usize {
        self.v
    }

    pub fn is_empty(&self) -> bool {
        self.v == 0
    }

    /// LPR depth of `item` before the access, `V + 1` for a first access in
    /// cold mode.
    pub fn step(&mut self, item: u32) -> Result<usize> {
        if item as usize >= self.v {
            return Err(Error::UnknownItem { item, size: self.v });
        }
        let before = self.lru.live();
        match self.lru.access(item) {
            Some(d) => Ok(self.advance(d)),
            None => {
                self.advance(before + 1);
                Ok(self.v + 1)
            }
        }
    }

    fn advance(&mut self, depth: usize) -> usize {
        if depth == 1 {
            return 1;
        }
        let (a, pending) = self.aux.descend(depth);
        let mut root = self.roots[a];
        let len = self.arena.len(root) as i64;
        root = self
            .arena
            .rotate_right(root, pending.rem_euclid(len) as usize);
        let offset = depth - self.q[a];
        let rho = self.arena.get(root, offset - 1) as usize;
        self.roots[a] = self.arena.rotate_prefix(root, offset);
        rho
    }

    /// The current map: entry `j - 1` is `rho(j)`.
    pub fn rho(&mut self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.v);
        if self.v > 0 {
            out.push(1);
        }
        for a in 0..self.roots.len() {
            let pending = self.aux.take(a);
            let root = self.roots[a];
            let len = self.arena.len(root) as i64;
            self.roots[a] = self
                .arena
                .rotate_right(root, pending.rem_euclid(len) as usize);
            out.extend(
                self.arena
                    .to_vec(self.roots[a])
                    .into_iter()
                    .map(|x| x as usize),
            );
        }
        out
    }
}

/// Reference engine: `rho` as a plain array, `O(V)` per access.
#[derive(Debug, Clone)]
pub struct NaiveLpr {
    q: Vec<usize>,
    /// 1-based; index 0 unused.
    rho: Vec<usize>,
    /// Seen items, most recent first.
    stack: Vec<u32>,
    v: usize,
}

impl NaiveLpr {
    pub fn new(seg: &Segmentation, initial: &LruStack) -> Result<Self> {
        check_stack(seg, initial)?;
        Ok(Self {
            stack: initial.items().to_vec(),
            ..Self::cold(seg)
        })
    }

    pub fn cold(seg: &Segmentation) -> Self {
        let v = seg.len();
        Self {
            q: seg.breakpoints().to_vec(),
            rho: (0..=v).collect(),
            stack: Vec::with_capacity(v),
            v,
        }
    }

    pub fn step(&mut self, item: u32) -> Result<usize> {
        if item as usize >= self.v {
            return Err(Error::UnknownItem { item, size: self.v });
        }
        match self.stack.iter().position(|&x| x == item) {
            Some(p) => {
                self.stack[..=p].rotate_right(1);
                Ok(self.advance(p + 1))
            }
            None => {
                self.stack.insert(0, item);
                self.advance(self.stack.len());
                Ok(self.v + 1)
            }
        }
    }

    fn advance(&mut self, d: usize) -> usize {
        if d == 1 {
            return 1;
        }
        let old = self.rho.clone();
        for w in self.q.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if d <= lo {
                break;
            }
            // rows q_i + 1 ..= end shift by (h - 1) mod m
            let end = hi.min(d);
            let m = end - lo;
            for h in lo + 1..=end {
                let k = h - lo;
                let src = lo + 1 + (k + m - 2) % m;
                self.rho[h] = old[src];
            }
        }
        old[d]
    }

    pub fn rho(&self) -> Vec<usize> {
        self.rho[1..].to_vec()
    }
}

fn check_stack(seg: &Segmentation, initial: &LruStack) -> Result<()> {
    if seg.len() != initial.len() {
        return Err(Error::InvalidInput(format!(
            "segmentation covers {} depths but the stack holds {} items",
            seg.len(),
            initial.len()
        )));
    }
    Ok(())
}

/// Miss counts for every capacity from one pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MissCurve {
    pub accesses: u64,
    /// `misses[c - 1]` is the miss count at capacity `c`.
    pub misses: Vec<u64>,
    /// `histogram[d - 1]` counts accesses at LPR depth `d`; the last entry
    /// counts first accesses in cold mode.
    pub histogram: Vec<u64>,
}

impl MissCurve {
    pub fn from_depths(v: usize, depths: impl IntoIterator<Item = usize>) -> Self {
        let mut histogram = vec![0u64; v + 1];
        let mut accesses = 0;
        for d in depths {
            histogram[d - 1] += 1;
            accesses += 1;
        }
        let mut misses = vec![0u64; v];
        let mut above = histogram[v];
        for c in (1..=v).rev() {
            misses[c - 1] = above;
            above += histogram[c - 1];
        }
        Self {
            accesses,
            misses,
            histogram,
        }
    }

    pub fn capacity_count(&self) -> usize {
        self.misses.len()
    }

    pub fn misses(&self, capacity: usize) -> u64 {
        self.misses[capacity - 1]
    }

    pub fn miss_rate(&self, capacity: usize) -> f64 {
        if self.accesses == 0 {
            0.0
        } else {
            self.misses(capacity) as f64 / self.accesses as f64
        }
    }

    /// `capacity,misses,miss_rate` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("capacity,misses,miss_rate\n");
        for c in 1..=self.capacity_count() {
            out.push_str(&format!("{c},{},{}\n", self.misses(c), self.miss_rate(c)));
        }
        out
    }
}

/// LPR miss curve of `trace` from a cold start.
pub fn miss_curve(seg: &Segmentation, trace: &Trace) -> Result<MissCurve> {
    trace.validate(seg.len())?;
    let mut sim = LprSimulator::cold(seg);
    let depths = trace
        .accesses()
        .iter()
        .map(|&a| sim.step(a))
        .collect::<Result<Vec<_>>>()?;
    Ok(MissCurve::from_depths(seg.len(), depths))
}

/// LPR miss curve of `trace` starting from a full stack, every top-`C` item
/// resident at capacity `C`.
pub fn miss_curve_warm(seg: &Segmentation, trace: &Trace, initial: &LruStack) -> Result<MissCurve> {
    let mut sim = LprSimulator::new(seg, initial)?;
    let depths = trace
        .accesses()
        .iter()
        .map(|&a| sim.step(a))
        .collect::<Result<Vec<_>>>()?;
    Ok(MissCurve::from_depths(seg.len(), depths))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{counterexample_distribution, Rng, StackDistribution};
    use crate::policies::{simulate, Policy};
    use crate::segments::segmentation;

    fn random_dist(rng: &mut Rng, v: usize) -> StackDistribution {
        // spiky weights give multi-depth segments
        let w: Vec<f64> = (0..v)
            .map(|_| {
                let u = rng.uniform();
                if u < 0.3 {
                    u * u
                } else {
                    u
                }
            })
            .collect();
        StackDistribution::normalized(&w).unwrap()
    }

    #[test]
    fn counterexample_segments_have_expected_sequences() {
        let seg = segmentation(&counterexample_distribution());
        let mut sim = LprSimulator::cold(&seg);
        assert_eq!(sim.roots.len(), 3);
        assert_eq!(sim.rho(), (1..=8).collect::<Vec<_>>());
    }

    #[test]
    fn depth_one_is_fixed() {
        let seg = segmentation(&counterexample_distribution());
        let st = LruStack::identity(8);
        let mut sim = LprSimulator::new(&seg, &st).unwrap();
        sim.step(5).unwrap();
        let before = sim.rho();
        assert_eq!(sim.step(5).unwrap(), 1);
        assert_eq!(sim.rho(), before);
    }

    #[test]
    fn decreasing_distribution_is_lru() {
        let d = StackDistribution::normalized(&[8.0, 7.0, 5.0, 4.0, 2.0, 1.0]).unwrap();
        let seg = segmentation(&d);
        let mut st = LruStack::identity(6);
        let mut sim = LprSimulator::new(&seg, &st).unwrap();
        let mut rng = Rng::new(8);
        for _ in 0..1_000 {
            let item = rng.below(6) as u32;
            assert_eq!(sim.step(item).unwrap(), st.update(item).unwrap());
        }
    }

    #[test]
    fn two_items_single_segment() {
        let d = StackDistribution::normalized(&[1.0, 3.0]).unwrap();
        let seg = segmentation(&d);
        let mut sim = LprSimulator::new(&seg, &LruStack::identity(2)).unwrap();
        assert_eq!(sim.step(1).unwrap(), 2);
        assert_eq!(sim.step(1).unwrap(), 1);
        assert_eq!(sim.step(0).unwrap(), 2);
    }

    #[test]
    fn naive_shift_rules() {
        // q = (1, 3, 5, 8)
        let seg = segmentation(&counterexample_distribution());
        let mut n = NaiveLpr::new(&seg, &LruStack::identity(8)).unwrap();
        // access at depth 7: segments [2,3], [4,5] rotate fully; [6,7] rotates
        assert_eq!(n.step(6).unwrap(), 7);
        assert_eq!(n.rho(), vec![1, 3, 2, 5, 4, 7, 6, 8]);
        // item 3 now sits at depth 5: [2,3] and [4,5] both rotate
        assert_eq!(n.step(3).unwrap(), 4);
        assert_eq!(n.rho(), vec![1, 2, 3, 4, 5, 7, 6, 8]);
        // depth 7 again, only rows 6..=7 of the last segment move
        assert_eq!(n.step(5).unwrap(), 6);
        assert_eq!(n.rho(), vec![1, 3, 2, 5, 4, 6, 7, 8]);
    }

    #[test]
    fn fast_matches_naive_full_and_cold() {
        let mut rng = Rng::new(2024);
        for case in 0..40 {
            let v = 2 + rng.below(40);
            let d = random_dist(&mut rng, v);
            let seg = segmentation(&d);
            let st = LruStack::identity(v);
            let trace = Trace::generate(&d, &st, 3_000, &mut rng);

            let mut fast = LprSimulator::new(&seg, &st).unwrap();
            let mut naive = NaiveLpr::new(&seg, &st).unwrap();
            let mut fast_cold = LprSimulator::cold(&seg);
            let mut naive_cold = NaiveLpr::cold(&seg);
            for (t, &a) in trace.accesses().iter().enumerate() {
                assert_eq!(
                    fast.step(a).unwrap(),
                    naive.step(a).unwrap(),
                    "case {case} t {t}"
                );
                assert_eq!(
                    fast_cold.step(a).unwrap(),
                    naive_cold.step(a).unwrap(),
                    "cold case {case} t {t}"
                );
                if t % 500 == 0 {
                    assert_eq!(fast.rho(), naive.rho());
                }
            }
        }
    }

    #[test]
    fn rho_stays_within_segments() {
        let mut rng = Rng::new(77);
        let d = random_dist(&mut rng, 30);
        let seg = segmentation(&d);
        let st = LruStack::identity(30);
        let trace = Trace::generate(&d, &st, 2_000, &mut rng);
        let mut sim = LprSimulator::new(&seg, &st).unwrap();
        for &a in trace.accesses() {
            sim.step(a).unwrap();
            let rho = sim.rho();
            assert_eq!(rho[0], 1);
            for i in 0..seg.segment_count() {
                let (lo, hi) = seg.segment_range(i);
                let mut part: Vec<usize> = rho[lo - 1..hi].to_vec();
                part.sort_unstable();
                assert_eq!(part, (lo..=hi).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn miss_curve_matches_per_capacity_lpr() {
        let mut rng = Rng::new(31);
        for _ in 0..10 {
            let v = 2 + rng.below(15);
            let d = random_dist(&mut rng, v);
            let seg = segmentation(&d);
            let st = LruStack::identity(v);
            let trace = Trace::generate(&d, &st, 2_000, &mut rng);
            let curve = miss_curve(&seg, &trace).unwrap();
            let policy = Policy::Lpr(seg.clone());
            for c in 1..=v {
                let r = simulate(&policy, &trace, c, &st).unwrap();
                assert_eq!(curve.misses(c), r.misses, "V={v} C={c}");
            }
            assert!(curve.misses.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn full_capacity_counts_cold_misses_only() {
        let d = StackDistribution::uniform(6).unwrap();
        let seg = segmentation(&d);
        let trace = Trace::new(vec![4, 4, 1, 4, 1, 5, 5, 1]);
        let curve = miss_curve(&seg, &trace).unwrap();
        assert_eq!(curve.misses(6), 3);
        assert_eq!(curve.misses(1), 6);
        assert_eq!(curve.accesses, 8);
    }

    #[test]
    fn unknown_item_rejected() {
        let seg = segmentation(&counterexample_distribution());
        assert!(LprSimulator::cold(&seg).step(8).is_err());
        assert!(NaiveLpr::cold(&seg).step(8).is_err());
    }

    #[test]
    fn csv_layout() {
        let curve = MissCurve::from_depths(2, [1, 3, 2]);
        assert_eq!(
            curve.to_csv(),
            "capacity,misses,miss_rate\n1,2,0.6666666666666666\n2,1,0.3333333333333333\n"
        );
    }
}
