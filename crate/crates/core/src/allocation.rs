//! Occupancy/miss trade-offs for single items and their composition.
//!
//! Each item is driven by a characteristic generator: a Markov chain on
//! states `z` where entering a reference state is an access to the item. The
//! buffer decides after each transition whether to keep the item (if it is
//! resident); an access always leaves it resident. A stationary policy pays
//! `J_oc` (fraction of time resident) and `J_ms` (misses per step). The
//! supported points of the `(J_oc, J_ms)` frontier are found by sweeping the
//! scalarized cost `cos θ · J_oc + sin θ · J_ms`, and items are combined
//! greedily by marginal gain under a total occupancy budget.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::control::{relative_value_iteration, Branch, ControlledChain, RviOptions};
use crate::dist::{Rng, StackDistribution};
use crate::error::{Error, Result};
use crate::segments::segmentation;

const ROW_TOLERANCE: f64 = 1e-9;

/// Markov chain of one item plus the states that count as a reference.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicGenerator {
    p: Vec<Vec<f64>>,
    reference: Vec<bool>,
}

impl CharacteristicGenerator {
    pub fn new(p: Vec<Vec<f64>>, reference: Vec<bool>) -> Result<Self> {
        let n = p.len();
        if n == 0 || reference.len() != n {
            return Err(Error::InvalidInput(
                "generator needs matching, non-empty rows".into(),
            ));
        }
        for (z, row) in p.iter().enumerate() {
            if row.len() != n || row.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidInput(format!("bad transition row {z}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::InvalidInput(format!("row {z} sums to {sum}")));
            }
        }
        if !reference.iter().any(|&r| r) {
            return Err(Error::InvalidInput(
                "generator has no reference state".into(),
            ));
        }
        Ok(Self { p, reference })
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.p[from][to]
    }

    pub fn is_reference(&self, z: usize) -> bool {
        self.reference[z]
    }

    fn index(z: usize, resident: bool) -> usize {
        2 * z + resident as usize
    }

    /// Next residency under `keep` after moving to `to`.
    fn next_resident(&self, keep: &[bool], resident: bool, to: usize) -> bool {
        self.reference[to] || (resident && keep[to])
    }

    /// Scalarized single-item MDP on `(z, resident)`.
    fn chain(&self, w_oc: f64, w_ms: f64) -> ControlledChain {
        let n = self.len();
        let mut rows = Vec::with_capacity(2 * n);
        for z in 0..n {
            for resident in [false, true] {
                let row = (0..n)
                    .filter(|&to| self.p[z][to] > 0.0)
                    .map(|to| {
                        let miss = self.reference[to] && !resident;
                        let successors = if self.reference[to] {
                            vec![Self::index(to, true)]
                        } else if resident {
                            vec![Self::index(to, false), Self::index(to, true)]
                        } else {
                            vec![Self::index(to, false)]
                        };
                        Branch {
                            prob: self.p[z][to],
                            cost: w_oc * resident as u8 as f64 + w_ms * miss as u8 as f64,
                            successors,
                        }
                    })
                    .collect();
                rows.push(row);
            }
        }
        ControlledChain { rows }
    }

    /// Exact long-run `(J_oc, J_ms)` of a keep/evict rule.
    pub fn evaluate(&self, keep: &[bool]) -> Result<(f64, f64)> {
        let n = self.len();
        let m = 2 * n;
        // stationary law: (P^T - I) pi = 0 with one row replaced by sum(pi) = 1
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut miss = vec![0.0; m];
        for z in 0..n {
            for resident in [false, true] {
                let from = Self::index(z, resident);
                for to in 0..n {
                    let p = self.p[z][to];
                    if p == 0.0 {
                        continue;
                    }
                    let next = Self::index(to, self.next_resident(keep, resident, to));
                    a[(next, from)] += p;
                    if self.reference[to] && !resident {
                        miss[from] += p;
                    }
                }
                a[(from, from)] -= 1.0;
            }
        }
        for col in 0..m {
            a[(m - 1, col)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(m);
        rhs[m - 1] = 1.0;
        let pi = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidInput("policy chain is not unichain".into()))?;
        let oc = (0..n).map(|z| pi[Self::index(z, true)]).sum();
        let ms = (0..m).map(|x| pi[x] * miss[x]).sum();
        Ok((oc, ms))
    }

    /// Monte Carlo estimate of `(J_oc, J_ms)` starting from state 0, resident.
    pub fn simulate(&self, keep: &[bool], steps: usize, rng: &mut Rng) -> (f64, f64) {
        let cum: Vec<Vec<f64>> = self
            .p
            .iter()
            .map(|row| {
                row.iter()
                    .scan(0.0, |acc, &x| {
                        *acc += x;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        let (mut z, mut resident) = (0usize, true);
        let (mut oc, mut ms) = (0u64, 0u64);
        for _ in 0..steps {
            oc += resident as u64;
            let u = rng.uniform();
            let to = cum[z].partition_point(|&c| c <= u).min(self.len() - 1);
            if self.reference[to] && !resident {
                ms += 1;
            }
            resident = self.next_resident(keep, resident, to);
            z = to;
        }
        (oc as f64 / steps as f64, ms as f64 / steps as f64)
    }
}

/// Generator for one item of an LRU stack model: state `i` is the item's
/// LRU depth, and depth 1 is the reference state.
pub fn lrusm_cg(dist: &StackDistribution) -> CharacteristicGenerator {
    let v = dist.len();
    let mut p = vec![vec![0.0; v]; v];
    for i in 1..=v {
        let row = &mut p[i - 1];
        row[0] += dist.prob(i);
        if i != 1 {
            row[i - 1] += dist.cum(i - 1);
        }
        if i != v {
            row[i] += 1.0 - dist.cum(i);
        }
    }
    let mut reference = vec![false; v];
    reference[0] = true;
    CharacteristicGenerator { p, reference }
}

/// Keep rule of `ev_k`: resident through depth `k`, evicted on reaching `k + 1`.
pub fn ev_k_rule(v: usize, k: usize) -> Vec<bool> {
    (1..=v).map(|d| d <= k).collect()
}

/// For an LRU-stack item, the `k` of the `ev_k` policy a keep rule acts as.
pub fn lrusm_depth_of(keep: &[bool]) -> usize {
    keep.iter()
        .skip(1)
        .position(|&k| !k)
        .map_or(keep.len(), |i| i + 1)
}

/// A supported point of the occupancy/miss frontier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SepPoint {
    pub occupancy: f64,
    pub misses: f64,
    /// Keep rule realizing the point, when it came from a generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep: Option<Vec<bool>>,
}

/// Supported points ordered by increasing occupancy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SepList {
    pub points: Vec<SepPoint>,
}

impl SepList {
    /// Builds a list from `(occupancy, misses)` pairs and checks convexity.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let list = Self {
            points: pairs
                .iter()
                .map(|&(occupancy, misses)| SepPoint {
                    occupancy,
                    misses,
                    keep: None,
                })
                .collect(),
        };
        list.validate()?;
        Ok(list)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Marginal gain of moving from point `i` to `i + 1`.
    pub fn gain(&self, i: usize) -> f64 {
        let (a, b) = (&self.points[i], &self.points[i + 1]);
        (a.misses - b.misses) / (b.occupancy - a.occupancy)
    }

    /// Strictly increasing occupancy, strictly decreasing misses and strictly
    /// decreasing marginal gains.
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidInput("empty frontier".into()));
        }
        for (i, w) in self.points.windows(2).enumerate() {
            if !(w[0].occupancy < w[1].occupancy && w[0].misses > w[1].misses) {
                return Err(Error::InvalidInput(format!(
                    "frontier points {i} and {} are not strictly monotone",
                    i + 1
                )));
            }
        }
        for i in 1..self.points.len().saturating_sub(1) {
            if self.gain(i) >= self.gain(i - 1) {
                return Err(Error::InvalidInput(format!(
                    "marginal gains not strictly decreasing at point {i}"
                )));
            }
        }
        Ok(())
    }

    pub fn scaled_misses(&self, factor: f64) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| SepPoint {
                    misses: p.misses * factor,
                    ..p.clone()
                })
                .collect(),
        }
    }
}

/// Frontier of an LRU-stack item straight from the segmentation breakpoints.
pub fn lrusm_sep_list(dist: &StackDistribution) -> SepList {
    let v = dist.len() as f64;
    SepList {
        points: segmentation(dist)
            .breakpoints()
            .iter()
            .map(|&k| SepPoint {
                occupancy: k as f64 / v,
                misses: (1.0 - dist.cum(k)) / v,
                keep: Some(ev_k_rule(dist.len(), k)),
            })
            .collect(),
    }
}

/// Solution of the scalarized problem at one angle.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarizedSolution {
    pub keep: Vec<bool>,
    pub occupancy: f64,
    pub misses: f64,
}

/// Minimizes `cos θ · J_oc + sin θ · J_ms` by relative value iteration and
/// evaluates the resulting rule exactly.
pub fn scalarized_solve(cg: &CharacteristicGenerator, theta: f64) -> Result<ScalarizedSolution> {
    if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&theta) {
        return Err(Error::InvalidInput(format!(
            "angle {theta} outside [0, pi/2]"
        )));
    }
    solve_weighted(cg, theta.cos(), theta.sin())
}

fn solve_weighted(
    cg: &CharacteristicGenerator,
    w_oc: f64,
    w_ms: f64,
) -> Result<ScalarizedSolution> {
    let sol = relative_value_iteration(&cg.chain(w_oc, w_ms), RviOptions::default())?;
    let keep: Vec<bool> = (0..cg.len())
        .map(|z| {
            cg.reference[z]
                || sol.h[CharacteristicGenerator::index(z, true)]
                    < sol.h[CharacteristicGenerator::index(z, false)]
        })
        .collect();
    let (occupancy, misses) = cg.evaluate(&keep)?;
    Ok(ScalarizedSolution {
        keep,
        occupancy,
        misses,
    })
}

/// Supported frontier points by recursive bisection on the chord normals.
/// Stops refining a chord when the point found lies within a factor
/// `1 + epsilon` of it.
pub fn sep_sweep(cg: &CharacteristicGenerator, epsilon: f64) -> Result<SepList> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput("epsilon must be positive".into()));
    }
    let mut budget = 4 * cg.len();
    let lo = solve_weighted(cg, 1.0, 0.0)?;
    let hi = solve_weighted(cg, 0.0, 1.0)?;
    budget = budget.saturating_sub(2);
    let to_point = |s: ScalarizedSolution| SepPoint {
        occupancy: s.occupancy,
        misses: s.misses,
        keep: Some(s.keep),
    };
    let (lo, hi) = (to_point(lo), to_point(hi));
    let mut points = vec![lo.clone()];
    if hi.occupancy > lo.occupancy + 1e-12 && hi.misses < lo.misses - 1e-12 {
        refine(cg, &lo, &hi, epsilon, &mut budget, &mut points)?;
        points.push(hi);
    }
    Ok(SepList { points })
}

fn refine(
    cg: &CharacteristicGenerator,
    a: &SepPoint,
    b: &SepPoint,
    epsilon: f64,
    budget: &mut usize,
    out: &mut Vec<SepPoint>,
) -> Result<()> {
    if *budget == 0 {
        return Ok(());
    }
    *budget -= 1;
    let w_oc = a.misses - b.misses;
    let w_ms = b.occupancy - a.occupancy;
    let norm = w_oc.hypot(w_ms);
    let (w_oc, w_ms) = (w_oc / norm, w_ms / norm);
    let s = solve_weighted(cg, w_oc, w_ms)?;
    let chord = w_oc * a.occupancy + w_ms * a.misses;
    let found = w_oc * s.occupancy + w_ms * s.misses;
    let strictly_below = found < chord - 1e-12 * chord.abs().max(1.0);
    if !strictly_below || chord <= (1.0 + epsilon) * found {
        return Ok(());
    }
    let p = SepPoint {
        occupancy: s.occupancy,
        misses: s.misses,
        keep: Some(s.keep),
    };
    refine(cg, a, &p, epsilon, budget, out)?;
    out.push(p.clone());
    refine(cg, &p, b, epsilon, budget, out)
}

/// Randomized mixture of two policies, redrawn whenever the item leaves its
/// hit state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rmop {
    /// Frontier index used with probability `1 - gamma`.
    pub low: usize,
    /// Frontier index used with probability `gamma`.
    pub high: usize,
    pub gamma: f64,
}

impl Rmop {
    pub fn costs(&self, seps: &SepList) -> (f64, f64) {
        let (a, b) = (&seps.points[self.low], &seps.points[self.high]);
        (
            (1.0 - self.gamma) * a.occupancy + self.gamma * b.occupancy,
            (1.0 - self.gamma) * a.misses + self.gamma * b.misses,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemChoice {
    pub sep: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixture: Option<Rmop>,
    pub occupancy: f64,
    pub misses: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Allocation {
    pub items: Vec<ItemChoice>,
    #[serde(rename = "C")]
    pub occupancy: f64,
    #[serde(rename = "M")]
    pub misses: f64,
}

/// Greedy ascent by marginal gain from every item's cheapest point; the last
/// step is a mixture that uses up the remaining budget.
pub fn greedy_allocate(items: &[SepList], budget: f64) -> Result<Allocation> {
    for s in items {
        s.validate()?;
    }
    let mut level = vec![0usize; items.len()];
    let mut used: f64 = items.iter().map(|s| s.points[0].occupancy).sum();
    if used > budget + 1e-12 {
        return Err(Error::InfeasibleBudget {
            budget,
            minimum: used,
        });
    }
    let mut mixture: Option<(usize, Rmop)> = None;
    loop {
        let mut best: Option<(usize, f64)> = None;
        for (i, s) in items.iter().enumerate() {
            if level[i] + 1 < s.len() {
                let g = s.gain(level[i]);
                if best.is_none_or(|(_, bg)| g > bg) {
                    best = Some((i, g));
                }
            }
        }
        let Some((i, _)) = best else { break };
        let (a, b) = (&items[i].points[level[i]], &items[i].points[level[i] + 1]);
        let step = b.occupancy - a.occupancy;
        if used + step <= budget + 1e-12 {
            level[i] += 1;
            used += step;
            continue;
        }
        let gamma = (budget - used) / step;
        if gamma > 0.0 {
            mixture = Some((
                i,
                Rmop {
                    low: level[i],
                    high: level[i] + 1,
                    gamma,
                },
            ));
        }
        break;
    }

    let choices: Vec<ItemChoice> = items
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mix = mixture.filter(|(m, _)| *m == i).map(|(_, r)| r);
            let (occupancy, misses) = match mix {
                Some(r) => r.costs(s),
                None => (s.points[level[i]].occupancy, s.points[level[i]].misses),
            };
            ItemChoice {
                sep: level[i],
                mixture: mix,
                occupancy,
                misses,
            }
        })
        .collect();
    Ok(Allocation {
        occupancy: choices.iter().map(|c| c.occupancy).sum(),
        misses: choices.iter().map(|c| c.misses).sum(),
        items: choices,
    })
}

/// A process sharing the buffer: its items' frontiers and its share of the
/// total reference stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Process {
    pub items: Vec<SepList>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    pub capacities: Vec<f64>,
    pub allocation: Allocation,
}

/// Splits capacity `budget` among processes by allocating over the union of
/// their items with misses weighted by each process's share.
pub fn partition_buffer(processes: &[Process], budget: f64) -> Result<Partition> {
    if processes.is_empty() {
        return Err(Error::InvalidInput("no processes".into()));
    }
    if processes.iter().any(|p| !(p.weight > 0.0)) {
        return Err(Error::InvalidInput(
            "process weights must be positive".into(),
        ));
    }
    let total: f64 = processes.iter().map(|p| p.weight).sum();
    if (total - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::InvalidInput(format!(
            "process weights sum to {total}"
        )));
    }
    let mut owner = Vec::new();
    let mut items = Vec::new();
    for (k, p) in processes.iter().enumerate() {
        for s in &p.items {
            owner.push(k);
            items.push(s.scaled_misses(p.weight));
        }
    }
    let allocation = greedy_allocate(&items, budget)?;
    let mut capacities = vec![0.0; processes.len()];
    for (c, &k) in allocation.items.iter().zip(&owner) {
        capacities[k] += c.occupancy;
    }
    Ok(Partition {
        capacities,
        allocation,
    })
}

/// A process made of the `V` items of an LRU stack model.
pub fn lrusm_process(dist: &StackDistribution, weight: f64) -> Process {
    let seps = lrusm_sep_list(dist);
    Process {
        items: vec![seps; dist.len()],
        weight,
    }
}

/// Best total misses over pure frontier choices plus at most one item mixed
/// between two of its points, within `budget`. Exponential; for testing.
pub fn exhaustive_allocate(items: &[SepList], budget: f64) -> Option<f64> {
    let n = items.len();
    let mut best: Option<f64> = None;
    let mut idx = vec![0usize; n];
    loop {
        let occ: f64 = idx
            .iter()
            .zip(items)
            .map(|(&i, s)| s.points[i].occupancy)
            .sum();
        let ms: f64 = idx
            .iter()
            .zip(items)
            .map(|(&i, s)| s.points[i].misses)
            .sum();
        if occ <= budget + 1e-12 {
            best = Some(best.map_or(ms, |b: f64| b.min(ms)));
            // spend the slack on one item, mixing toward a costlier point
            for (m, s) in items.iter().enumerate() {
                let a = &s.points[idx[m]];
                for b in &s.points[idx[m] + 1..] {
                    let gamma = ((budget - occ) / (b.occupancy - a.occupancy)).min(1.0);
                    let mixed = ms - gamma * (a.misses - b.misses);
                    best = Some(best.map_or(mixed, |x: f64| x.min(mixed)));
                }
            }
        }
        let mut k = 0;
        loop {
            if k == n {
                return best;
            }
            idx[k] += 1;
            if idx[k] < items[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::counterexample_distribution;
    use crate::segments::ev_costs;

    #[test]
    fn lrusm_two_depths() {
        let d = StackDistribution::normalized(&[1.0, 3.0]).unwrap();
        let cg = lrusm_cg(&d);
        assert_eq!(cg.prob(0, 0), 0.25);
        assert_eq!(cg.prob(0, 1), 0.75);
        assert_eq!(cg.prob(1, 0), 0.75);
        assert_eq!(cg.prob(1, 1), 0.25);
    }

    #[test]
    fn ev_k_costs_exact() {
        let d = counterexample_distribution();
        let cg = lrusm_cg(&d);
        for k in 1..=8 {
            let (oc, ms) = cg.evaluate(&ev_k_rule(8, k)).unwrap();
            let (eo, em) = ev_costs(&d, k);
            assert!((oc - eo).abs() < 1e-12 && (ms - em).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn ev_k_occupancy_by_simulation() {
        let d = StackDistribution::normalized(&[4.0, 2.0, 1.0, 3.0, 1.0]).unwrap();
        let cg = lrusm_cg(&d);
        let (oc, ms) = cg.simulate(&ev_k_rule(5, 3), 400_000, &mut Rng::new(6));
        assert!((oc - 0.6).abs() < 0.01);
        assert!((ms - (1.0 - d.cum(3)) / 5.0).abs() < 0.01);
    }

    #[test]
    fn extreme_angles() {
        let d = counterexample_distribution();
        let cg = lrusm_cg(&d);
        let lo = scalarized_solve(&cg, 0.0).unwrap();
        assert_eq!(lrusm_depth_of(&lo.keep), 1);
        let hi = scalarized_solve(&cg, std::f64::consts::FRAC_PI_2).unwrap();
        assert_eq!(lrusm_depth_of(&hi.keep), 8);
        assert!(hi.misses.abs() < 1e-12);
        assert!(scalarized_solve(&cg, 2.0).is_err());
    }

    #[test]
    fn sweep_recovers_breakpoints() {
        let d = counterexample_distribution();
        let seps = sep_sweep(&lrusm_cg(&d), 1e-12).unwrap();
        let ks: Vec<usize> = seps
            .points
            .iter()
            .map(|p| lrusm_depth_of(p.keep.as_ref().unwrap()))
            .collect();
        assert_eq!(ks, vec![1, 3, 5, 8]);
        seps.validate().unwrap();
    }

    #[test]
    fn sweep_decreasing_and_increasing() {
        let dec = StackDistribution::normalized(&[6.0, 5.0, 4.0, 3.0, 2.0]).unwrap();
        let s = sep_sweep(&lrusm_cg(&dec), 1e-12).unwrap();
        assert_eq!(s.len(), 5);
        let inc = StackDistribution::normalized(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let s = sep_sweep(&lrusm_cg(&inc), 1e-12).unwrap();
        let ks: Vec<usize> = s
            .points
            .iter()
            .map(|p| lrusm_depth_of(p.keep.as_ref().unwrap()))
            .collect();
        assert_eq!(ks, vec![1, 5]);
    }

    #[test]
    fn greedy_two_items() {
        let a = SepList::from_pairs(&[(1.0, 0.5), (2.0, 0.1)]).unwrap();
        let b = SepList::from_pairs(&[(1.0, 0.4), (2.0, 0.35)]).unwrap();
        let r = greedy_allocate(&[a.clone(), b.clone()], 3.0).unwrap();
        assert_eq!(r.items[0].sep, 1);
        assert_eq!(r.items[1].sep, 0);
        assert!((r.misses - 0.5).abs() < 1e-12, "{r:?}");
        assert_eq!(exhaustive_allocate(&[a.clone(), b.clone()], 3.0), Some(0.5));
        assert!(greedy_allocate(&[a.clone(), b.clone()], 1.5).is_err());
        let full = greedy_allocate(&[a.clone(), b.clone()], 10.0).unwrap();
        assert!((full.misses - 0.45).abs() < 1e-12);
        let mixed = greedy_allocate(&[a, b], 3.5).unwrap();
        let r = mixed.items[1].mixture.unwrap();
        assert!((r.gamma - 0.5).abs() < 1e-12);
        assert!((mixed.occupancy - 3.5).abs() < 1e-12);
        assert!((mixed.misses - (0.1 + 0.375)).abs() < 1e-12);
    }

    #[test]
    fn greedy_matches_exhaustive() {
        let mut rng = Rng::new(44);
        for _ in 0..300 {
            let n = 1 + rng.below(3);
            let items: Vec<SepList> = (0..n)
                .map(|_| {
                    let len = 1 + rng.below(4);
                    let mut occ = rng.uniform();
                    let mut ms = 1.0 + rng.uniform();
                    let mut gain = 2.0 + rng.uniform();
                    let mut pairs = vec![(occ, ms)];
                    for _ in 1..len {
                        let step = 0.1 + rng.uniform();
                        gain *= 0.2 + 0.7 * rng.uniform();
                        occ += step;
                        ms -= gain * step;
                        pairs.push((occ, ms));
                    }
                    SepList::from_pairs(&pairs).unwrap()
                })
                .collect();
            let min: f64 = items.iter().map(|s| s.points[0].occupancy).sum();
            let budget = min + 3.0 * rng.uniform();
            let g = greedy_allocate(&items, budget).unwrap();
            let e = exhaustive_allocate(&items, budget).unwrap();
            assert!((g.misses - e).abs() < 1e-9, "{} vs {e}", g.misses);
            assert!(g.occupancy <= budget + 1e-9);
        }
    }

    #[test]
    fn partition_symmetric_and_weighted() {
        let d = StackDistribution::normalized(&[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap();
        let p = partition_buffer(&[lrusm_process(&d, 0.5), lrusm_process(&d, 0.5)], 4.0).unwrap();
        assert!(
            (p.capacities[0] - 2.0).abs() < 1e-9 && (p.capacities[1] - 2.0).abs() < 1e-9,
            "{:?}",
            p.capacities
        );
        let p = partition_buffer(&[lrusm_process(&d, 0.9), lrusm_process(&d, 0.1)], 4.0).unwrap();
        assert!(p.capacities[0] >= p.capacities[1]);
        assert!(partition_buffer(&[lrusm_process(&d, 0.7)], 2.0).is_err());
        let single = partition_buffer(&[lrusm_process(&d, 1.0)], 2.0).unwrap();
        let direct = greedy_allocate(&lrusm_process(&d, 1.0).items, 2.0).unwrap();
        assert_eq!(single.allocation, direct);
    }

    #[test]
    fn identical_lrusm_items_mix_adjacent_breakpoints() {
        let d = counterexample_distribution();
        let items = lrusm_process(&d, 1.0).items;
        // capacity 4 sits between breakpoints 3 and 5
        let a = greedy_allocate(&items, 4.0).unwrap();
        let expect = crate::segments::kl_miss_rate(&d, 3, 5, 4).unwrap();
        assert!(
            (a.misses - expect).abs() < 1e-12,
            "{} vs {expect}",
            a.misses
        );
    }

    #[test]
    fn generator_validation() {
        assert!(CharacteristicGenerator::new(
            vec![vec![0.5, 0.4], vec![1.0, 0.0]],
            vec![true, false]
        )
        .is_err());
        assert!(CharacteristicGenerator::new(vec![vec![1.0]], vec![false]).is_err());
        assert!(SepList::from_pairs(&[(1.0, 1.0), (2.0, 0.5), (3.0, 0.4), (4.0, 0.0)]).is_err());
    }
}
