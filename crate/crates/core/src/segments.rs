//! Profit-rate segmentation of the LRU stack.
//!
//! The points `(k/V, (1 - S(k))/V)` are the occupancy/miss costs of the
//! single-item policies that keep an item while its LRU depth is at most `k`.
//! Their lower-left convex hull has vertices `q_1 = 1 < q_2 < ... < q_l = V`.
//! Every capacity `C` lies in exactly one interval `q_i < C <= q_{i+1}`, which
//! gives the optimal KL parameters `K(C) = q_i`, `L(C) = q_{i+1}`. The hull is
//! found by a backward Graham-style scan in `O(V)`.
//!
//! Depth `j >= 2` belongs to segment `Q_i = [q_i + 1, q_{i+1}]`; its priority
//! `xi(j)` is the average of `s` over that segment. Priorities strictly decrease
//! from one segment to the next, and LPR evicts the resident item of least
//! priority, preferring the one closest to the top of the stack.

use serde::Serialize;

use crate::dist::StackDistribution;
use crate::error::{Error, Result};

/// Hull breakpoints, per-depth priorities and depth-to-segment lookup.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segmentation {
    v: usize,
    q: Vec<usize>,
    /// `xi[j]` for `j` in `[0, V]`; entries 0 and 1 are unused (NaN).
    #[serde(skip)]
    xi: Vec<f64>,
    /// Scan value `pi[j] / delta[j]` at each depth, i.e. `max_{j'} s̄(j, j')`.
    #[serde(skip)]
    block_rate: Vec<f64>,
    /// `segment[j]` is the 0-based index of the segment holding depth `j >= 2`.
    #[serde(skip)]
    segment: Vec<usize>,
}

/// Optimal KL parameters for one capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KlParams {
    #[serde(rename = "C")]
    pub c: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "L")]
    pub l: usize,
}

impl Segmentation {
    pub fn len(&self) -> usize {
        self.v
    }

    pub fn is_empty(&self) -> bool {
        self.v == 0
    }

    /// Breakpoints `q_1 = 1, ..., q_l = V`.
    pub fn breakpoints(&self) -> &[usize] {
        &self.q
    }

    /// Number of segments, `l - 1`.
    pub fn segment_count(&self) -> usize {
        self.q.len() - 1
    }

    /// Depth range `[q_i + 1, q_{i+1}]` of segment `i` (0-based).
    pub fn segment_range(&self, i: usize) -> (usize, usize) {
        (self.q[i] + 1, self.q[i + 1])
    }

    /// Segment index of `depth`, or `None` for depth 1 and out-of-range depths.
    pub fn segment_of(&self, depth: usize) -> Option<usize> {
        (2..=self.v).contains(&depth).then(|| self.segment[depth])
    }

    /// Priority `xi(depth)` for `depth` in `[2, V]`.
    pub fn xi(&self, depth: usize) -> f64 {
        assert!(
            (2..=self.v).contains(&depth),
            "priority undefined at depth {depth}"
        );
        self.xi[depth]
    }

    /// Priorities for depths `2..=V`.
    pub fn priorities(&self) -> &[f64] {
        if self.v < 2 {
            &[]
        } else {
            &self.xi[2..]
        }
    }

    /// The scan's per-depth ratio `pi[j]/delta[j]`. Equals [`Self::xi`] at the
    /// first depth of every segment; deeper inside a segment it can be larger.
    pub fn block_rate(&self, depth: usize) -> f64 {
        self.block_rate[depth]
    }

    /// `K(C)` and `L(C)`. `C = 1` leaves no choice and yields the sentinel `K = L = 1`.
    pub fn kl_for_capacity(&self, c: usize) -> Result<KlParams> {
        if c == 0 || c > self.v {
            return Err(Error::CapacityOutOfRange {
                capacity: c,
                min: 1,
                max: self.v,
            });
        }
        if c == 1 {
            return Ok(KlParams { c, k: 1, l: 1 });
        }
        // first breakpoint >= C is q_{i+1}
        let upper = self.q.partition_point(|&q| q < c);
        Ok(KlParams {
            c,
            k: self.q[upper - 1],
            l: self.q[upper],
        })
    }

    /// KL parameters for every `C` in `[2, V]`.
    pub fn kl_table(&self) -> Vec<KlParams> {
        (2..=self.v)
            .map(|c| self.kl_for_capacity(c).expect("capacity in range"))
            .collect()
    }

    /// Report with `q`, `xi` (depths `2..=V`) and the KL table.
    pub fn report(&self) -> SegmentsReport {
        SegmentsReport {
            q: self.q.clone(),
            xi: self.priorities().to_vec(),
            kl: self.kl_table(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentsReport {
    pub q: Vec<usize>,
    pub xi: Vec<f64>,
    pub kl: Vec<KlParams>,
}

/// Computes the segmentation in `O(V)`.
///
/// Backward scan: each depth starts as a block of width one and absorbs the
/// block below it while its average does not exceed that block's average.
/// Comparisons are cross-multiplied, so collinear hull points are merged.
pub fn segmentation(dist: &StackDistribution) -> Segmentation {
    let v = dist.len();
    // 1-based, with a sentinel block at V + 1 of zero mass.
    let mut next = vec![0usize; v + 2];
    let mut mass = vec![0.0f64; v + 2];
    let mut width = vec![0.0f64; v + 2];
    next[1] = 1;
    mass[1] = dist.prob(1);
    width[1] = 1.0;
    mass[v + 1] = 0.0;
    width[v + 1] = 1.0;
    for j in (2..=v).rev() {
        next[j] = j;
        mass[j] = dist.prob(j);
        width[j] = 1.0;
        let mut n = next[j] + 1;
        while mass[j] * width[n] <= mass[n] * width[j] {
            next[j] = next[n];
            mass[j] += mass[n];
            width[j] += width[n];
            n = next[j] + 1;
        }
    }

    let mut q = Vec::new();
    let mut j = 1;
    while j <= v {
        q.push(next[j]);
        j = next[j] + 1;
    }

    let mut xi = vec![f64::NAN; v + 1];
    let mut block_rate = vec![f64::NAN; v + 1];
    let mut segment = vec![usize::MAX; v + 1];
    for j in 2..=v {
        block_rate[j] = mass[j] / width[j];
    }
    for (i, w) in q.windows(2).enumerate() {
        let start = w[0] + 1;
        // the block opened at a segment start spans the whole segment
        let rate = mass[start] / width[start];
        for d in start..=w[1] {
            xi[d] = rate;
            segment[d] = i;
        }
    }

    Segmentation {
        v,
        q,
        xi,
        block_rate,
        segment,
    }
}

/// Free-function form of [`Segmentation::kl_for_capacity`].
pub fn kl_for_capacity(seg: &Segmentation, c: usize) -> Result<KlParams> {
    seg.kl_for_capacity(c)
}

/// Occupancy and miss cost of keeping an item while its depth is at most `k`:
/// `(k/V, (1 - S(k))/V)`.
pub fn ev_costs(dist: &StackDistribution, k: usize) -> (f64, f64) {
    let v = dist.len() as f64;
    (k as f64 / v, (1.0 - dist.cum(k)) / v)
}

/// Closed-form KL miss rate `1 - [S(K)(L-C) + S(L)(C-K)] / (L-K)`.
///
/// `L = C` reduces to the LRU rate `1 - S(C)`.
pub fn kl_miss_rate(dist: &StackDistribution, k: usize, l: usize, c: usize) -> Result<f64> {
    let v = dist.len();
    if !(1 <= k && k < c && c <= l && l <= v) {
        return Err(Error::InvalidKl { k, l, c, v });
    }
    if l == c {
        return Ok(1.0 - dist.cum(c));
    }
    let (kf, lf, cf) = (k as f64, l as f64, c as f64);
    Ok(1.0 - (dist.cum(k) * (lf - cf) + dist.cum(l) * (cf - kf)) / (lf - kf))
}

/// Result of the exhaustive KL search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteForceKl {
    pub k: usize,
    pub l: usize,
    pub miss_rate: f64,
}

/// Exhaustive `O(V^2)`-per-capacity search over admissible `(K, L)` pairs.
///
/// When the pair chosen by `seg` ties the minimum within `1e-12` it is reported;
/// otherwise the first minimizer in `(K, L)` order.
pub fn brute_force_kl(
    dist: &StackDistribution,
    seg: &Segmentation,
    c: usize,
) -> Result<BruteForceKl> {
    let v = dist.len();
    if c < 2 || c > v {
        return Err(Error::CapacityOutOfRange {
            capacity: c,
            min: 2,
            max: v,
        });
    }
    let mut best = BruteForceKl {
        k: 0,
        l: 0,
        miss_rate: f64::INFINITY,
    };
    for k in 1..c {
        for l in c..=v {
            let m = kl_miss_rate(dist, k, l, c)?;
            if m < best.miss_rate {
                best = BruteForceKl { k, l, miss_rate: m };
            }
        }
    }
    let fast = seg.kl_for_capacity(c)?;
    let fast_rate = kl_miss_rate(dist, fast.k, fast.l, c)?;
    if fast_rate <= best.miss_rate + 1e-12 {
        best = BruteForceKl {
            k: fast.k,
            l: fast.l,
            miss_rate: fast_rate,
        };
    }
    Ok(best)
}

/// Hull vertices of the `ev_k` cost points by an `O(V^2)` gift-wrapping scan.
///
/// From the current vertex the next one is the point making the smallest
/// angle (most negative slope); collinear candidates resolve to the farthest
/// one. Cross products are compared with tolerance `1e-12`.
pub fn sep_hull_oracle(dist: &StackDistribution) -> Vec<usize> {
    let v = dist.len();
    let point = |k: usize| ev_costs(dist, k);
    let mut hull = vec![1];
    let mut a = 1;
    while a < v {
        let (ax, ay) = point(a);
        let mut best = a + 1;
        for b in a + 2..=v {
            let (bx, by) = point(b);
            let (cx, cy) = point(best);
            // < 0: b lies strictly below the ray a -> best
            let cross = (cx - ax) * (by - ay) - (cy - ay) * (bx - ax);
            if cross <= 1e-12 {
                best = b;
            }
        }
        hull.push(best);
        a = best;
    }
    hull
}
