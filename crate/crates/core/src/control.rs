//! Optimal control of a buffer under i.i.d. LRU stack depths.
//!
//! A state is the set of LRU positions whose items are resident, stored as a
//! bitmask (bit `j - 1` for depth `j`). An access at depth `d` rotates the
//! prefix `[1, d]`, puts the accessed item on top and, on a miss with a full
//! buffer, lets the controller pick the resident depth to drop *after* seeing
//! `d`. Costs count misses.

use serde::Serialize;

use crate::dist::StackDistribution;
use crate::error::{Error, Result};

/// Largest virtual space handled by the exhaustive solvers.
pub const MAX_STACK: usize = 12;

/// Tolerance used to group equally good actions.
pub const ACTION_TOLERANCE: f64 = 1e-12;

/// Occupancy mask with the given 1-based depths resident.
pub fn mask_from_depths(depths: &[usize]) -> u32 {
    depths.iter().fold(0, |m, &d| m | (1 << (d - 1)))
}

/// Resident depths of `mask`, shallowest first.
pub fn depths_of_mask(mask: u32) -> Vec<usize> {
    (1..=32).filter(|&d| mask & (1 << (d - 1)) != 0).collect()
}

/// Mask after an access at depth `d`: the prefix rotates and the accessed
/// position lands on top, resident.
pub fn rotate_mask(mask: u32, d: usize) -> u32 {
    let low = (1u32 << (d - 1)) - 1; // depths 1..d-1
    let high = if d >= 32 { 0 } else { !((1u32 << d) - 1) };
    ((mask & low) << 1) | (mask & high) | 1
}

/// One disturbance outcome from one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub cost: f64,
    /// `(evicted depth, next state index)`; the depth is 0 when nothing is evicted.
    pub options: Vec<(usize, usize)>,
}

/// Exhaustive buffer-occupancy MDP for one distribution and capacity.
#[derive(Debug, Clone)]
pub struct FiniteMdp {
    v: usize,
    c: usize,
    probs: Vec<f64>,
    states: Vec<u32>,
    index: Vec<usize>,
    /// `outcomes[state][d - 1]`
    outcomes: Vec<Vec<Outcome>>,
}

pub fn build_mdp(dist: &StackDistribution, c: usize) -> Result<FiniteMdp> {
    let v = dist.len();
    if v > MAX_STACK {
        return Err(Error::StateSpaceTooLarge { v, cap: MAX_STACK });
    }
    if c == 0 || c > v {
        return Err(Error::CapacityOutOfRange {
            capacity: c,
            min: 1,
            max: v,
        });
    }
    let states: Vec<u32> = (0..1u32 << v)
        .filter(|m| m.count_ones() as usize <= c)
        .collect();
    let mut index = vec![usize::MAX; 1 << v];
    for (i, &m) in states.iter().enumerate() {
        index[m as usize] = i;
    }
    let outcomes = states
        .iter()
        .map(|&x| {
            (1..=v)
                .map(|d| {
                    let y = rotate_mask(x, d);
                    if x & (1 << (d - 1)) != 0 {
                        return Outcome {
                            cost: 0.0,
                            options: vec![(0, index[y as usize])],
                        };
                    }
                    let options = if (y.count_ones() as usize) <= c {
                        vec![(0, index[y as usize])]
                    } else {
                        depths_of_mask(y)
                            .into_iter()
                            .filter(|&j| j >= 2)
                            .map(|j| (j, index[(y & !(1 << (j - 1))) as usize]))
                            .collect()
                    };
                    Outcome { cost: 1.0, options }
                })
                .collect()
        })
        .collect();
    Ok(FiniteMdp {
        v,
        c,
        probs: dist.probs().to_vec(),
        states,
        index,
        outcomes,
    })
}

impl FiniteMdp {
    pub fn stack_len(&self) -> usize {
        self.v
    }

    pub fn capacity(&self) -> usize {
        self.c
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[u32] {
        &self.states
    }

    pub fn state_index(&self, mask: u32) -> Option<usize> {
        self.index
            .get(mask as usize)
            .copied()
            .filter(|&i| i != usize::MAX)
    }

    /// Probability of depth `d`.
    pub fn prob(&self, d: usize) -> f64 {
        self.probs[d - 1]
    }

    pub fn outcome(&self, state: usize, d: usize) -> &Outcome {
        &self.outcomes[state][d - 1]
    }

    /// Whether the top-`C` state can be reached from every state.
    pub fn top_state_reachable(&self) -> bool {
        let target = self.index[((1u32 << self.c) - 1) as usize];
        // reverse reachability from the target
        let n = self.state_count();
        let mut preds = vec![Vec::new(); n];
        for s in 0..n {
            for (d, o) in self.outcomes[s].iter().enumerate() {
                if self.probs[d] > 0.0 {
                    for &(_, t) in &o.options {
                        preds[t].push(s);
                    }
                }
            }
        }
        let mut seen = vec![false; n];
        let mut todo = vec![target];
        seen[target] = true;
        while let Some(t) = todo.pop() {
            for &s in &preds[t] {
                if !seen[s] {
                    seen[s] = true;
                    todo.push(s);
                }
            }
        }
        seen.into_iter().all(|b| b)
    }

    /// The MDP as a generic controlled chain.
    pub fn chain(&self) -> ControlledChain {
        ControlledChain {
            rows: self
                .outcomes
                .iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .filter(|(d, _)| self.probs[*d] > 0.0)
                        .map(|(d, o)| Branch {
                            prob: self.probs[d],
                            cost: o.cost,
                            successors: o.options.iter().map(|&(_, t)| t).collect(),
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

/// Optimal expected misses for every state and horizon.
#[derive(Debug, Clone)]
pub struct HorizonTable {
    /// `j[tau][state]`
    pub j: Vec<Vec<f64>>,
}

impl HorizonTable {
    pub fn horizon(&self) -> usize {
        self.j.len() - 1
    }

    pub fn cost(&self, state: usize, tau: usize) -> f64 {
        self.j[tau][state]
    }

    /// Depths whose eviction is optimal with `tau` steps to go, the current
    /// step included, when the access is at depth `d`. Empty when no eviction
    /// takes place.
    pub fn optimal_evictions(
        &self,
        mdp: &FiniteMdp,
        state: usize,
        tau: usize,
        d: usize,
    ) -> Vec<usize> {
        let o = mdp.outcome(state, d);
        if o.options.len() == 1 && o.options[0].0 == 0 {
            return Vec::new();
        }
        argmin_set(&o.options, &self.j[tau - 1], ACTION_TOLERANCE)
    }
}

fn argmin_set(options: &[(usize, usize)], values: &[f64], tol: f64) -> Vec<usize> {
    let best = options
        .iter()
        .map(|&(_, t)| values[t])
        .fold(f64::INFINITY, f64::min);
    options
        .iter()
        .filter(|&&(_, t)| values[t] <= best + tol)
        .map(|&(j, _)| j)
        .collect()
}

/// Backward induction with the eviction chosen after the depth is revealed.
pub fn dp_optimal(mdp: &FiniteMdp, tau: usize) -> HorizonTable {
    let n = mdp.state_count();
    let mut j = vec![vec![0.0; n]];
    for _ in 0..tau {
        let prev = j.last().expect("layer");
        let next = (0..n)
            .map(|s| {
                (1..=mdp.v)
                    .map(|d| {
                        let o = mdp.outcome(s, d);
                        let cont = o
                            .options
                            .iter()
                            .map(|&(_, t)| prev[t])
                            .fold(f64::INFINITY, f64::min);
                        mdp.prob(d) * (o.cost + cont)
                    })
                    .sum()
            })
            .collect();
        j.push(next);
    }
    HorizonTable { j }
}

/// Fixed eviction rules for policy evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvictionRule {
    /// Deepest resident item.
    Lru,
    /// Shallowest resident item below the top.
    Mru,
}

impl EvictionRule {
    fn pick(self, options: &[(usize, usize)]) -> usize {
        let it = options.iter();
        let chosen = match self {
            EvictionRule::Lru => it.max_by_key(|o| o.0),
            EvictionRule::Mru => it.min_by_key(|o| o.0),
        };
        chosen.expect("at least one option").1
    }
}

/// Expected misses of a fixed rule, same layout as [`dp_optimal`].
pub fn policy_cost(mdp: &FiniteMdp, rule: EvictionRule, tau: usize) -> HorizonTable {
    let n = mdp.state_count();
    let mut j = vec![vec![0.0; n]];
    for _ in 0..tau {
        let prev = j.last().expect("layer");
        let next = (0..n)
            .map(|s| {
                (1..=mdp.v)
                    .map(|d| {
                        let o = mdp.outcome(s, d);
                        mdp.prob(d) * (o.cost + prev[rule.pick(&o.options)])
                    })
                    .sum()
            })
            .collect();
        j.push(next);
    }
    HorizonTable { j }
}

/// Backward induction when the victim must be named before the depth is
/// revealed: the controller picks a resident pre-access position `p`, which
/// sits at `p + 1` after an access below it.
pub fn dp_state_only(mdp: &FiniteMdp, tau: usize) -> HorizonTable {
    let n = mdp.state_count();
    let mut j = vec![vec![0.0; n]];
    for _ in 0..tau {
        let prev = j.last().expect("layer");
        let next = (0..n)
            .map(|s| {
                let x = mdp.states[s];
                let full = x.count_ones() as usize == mdp.c;
                let choices = if full { depths_of_mask(x) } else { vec![0] };
                choices
                    .into_iter()
                    .map(|p| {
                        (1..=mdp.v)
                            .map(|d| {
                                let o = mdp.outcome(s, d);
                                let t = if o.options[0].0 == 0 {
                                    o.options[0].1
                                } else {
                                    let victim = if p < d { p + 1 } else { p };
                                    o.options
                                        .iter()
                                        .find(|opt| opt.0 == victim)
                                        .expect("named position is resident")
                                        .1
                                };
                                mdp.prob(d) * (o.cost + prev[t])
                            })
                            .sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        j.push(next);
    }
    HorizonTable { j }
}

/// A disturbance outcome in a [`ControlledChain`].
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub prob: f64,
    pub cost: f64,
    /// States the controller may move to after this outcome.
    pub successors: Vec<usize>,
}

/// Finite chain where the control is picked after the disturbance:
/// `(T h)(x) = sum_b prob_b * (cost_b + min_{y in succ_b} h(y))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlledChain {
    pub rows: Vec<Vec<Branch>>,
}

impl ControlledChain {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|b| {
                        let m = b
                            .successors
                            .iter()
                            .map(|&t| h[t])
                            .fold(f64::INFINITY, f64::min);
                        b.prob * (b.cost + m)
                    })
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RviOptions {
    pub tol: f64,
    pub max_iterations: usize,
    /// Weight on the new iterate; values below 1 remove periodicity.
    pub damping: f64,
    pub reference: usize,
}

impl Default for RviOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iterations: 1_000_000,
            damping: 0.5,
            reference: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RviSolution {
    pub lambda: f64,
    /// Differential costs with `h(reference) = 0`.
    pub h: Vec<f64>,
    pub iterations: usize,
}

/// Relative value iteration for the average cost of `chain`.
pub fn relative_value_iteration(chain: &ControlledChain, opts: RviOptions) -> Result<RviSolution> {
    let n = chain.len();
    if n == 0
        || opts.reference >= n
        || !(opts.tol > 0.0)
        || !(0.0 < opts.damping && opts.damping <= 1.0)
    {
        return Err(Error::InvalidInput(
            "bad relative value iteration setup".into(),
        ));
    }
    let mut h = vec![0.0; n];
    let mut span = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        let th = chain.apply(&h);
        let diff: Vec<f64> = th.iter().zip(&h).map(|(a, b)| a - b).collect();
        let lo = diff.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = diff.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        span = hi - lo;
        if span < opts.tol {
            let r = h[opts.reference];
            return Ok(RviSolution {
                lambda: 0.5 * (lo + hi),
                h: h.iter().map(|x| x - r).collect(),
                iterations: it,
            });
        }
        for (x, d) in h.iter_mut().zip(&diff) {
            *x += opts.damping * d;
        }
        let r = h[opts.reference];
        h.iter_mut().for_each(|x| *x -= r);
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
        span,
    })
}

/// The `C = 2` chain on the depth `j in [2, V]` of the second resident item,
/// in the form whose solution is given by [`bellman_c2`]: a top-of-stack
/// access is charged as a miss with the same choice as any access above `j`.
pub fn c2_reduced_chain(dist: &StackDistribution) -> Result<ControlledChain> {
    let v = dist.len();
    if v < 2 {
        return Err(Error::InvalidInput("the C = 2 chain needs V >= 2".into()));
    }
    let idx = |j: usize| j - 2;
    let rows = (2..=v)
        .map(|j| {
            let mut row = Vec::new();
            for d in 1..=v {
                let p = dist.prob(d);
                if p == 0.0 {
                    continue;
                }
                row.push(if d == j {
                    Branch {
                        prob: p,
                        cost: 0.0,
                        successors: vec![idx(2)],
                    }
                } else if d < j {
                    Branch {
                        prob: p,
                        cost: 1.0,
                        successors: vec![idx(2), idx(j)],
                    }
                } else {
                    Branch {
                        prob: p,
                        cost: 1.0,
                        successors: vec![idx(2), idx(j + 1)],
                    }
                });
            }
            row
        })
        .collect();
    Ok(ControlledChain { rows })
}

/// Closed-form average cost and differential costs for `C = 2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BellmanC2Solution {
    /// `beta[j] = max_l s̄(j, j + l - 1)`, 1-based, entry 0 unused.
    pub beta: Vec<f64>,
    /// `phi[j]`, 1-based with `phi[V + 1] = 0`.
    pub phi: Vec<usize>,
    /// `rho[j]`, 1-based with `rho[V + 1] = 0`.
    pub rho: Vec<f64>,
    pub lambda: f64,
    /// `lambda - s(1)`: the chain charges every top-of-stack access, so this
    /// is the figure comparable with simulated miss rates.
    pub lambda_miss_rate: f64,
    /// `h[j]` for `j in [2, V]` at index `j - 2`; `h(2) = 0`.
    pub h: Vec<f64>,
    #[serde(skip)]
    cum: Vec<f64>,
    #[serde(skip)]
    s: Vec<f64>,
}

impl BellmanC2Solution {
    pub fn h_at(&self, j: usize) -> f64 {
        self.h[j - 2]
    }

    /// Largest violation of
    /// `h(j) = 1 - s(j) - lambda + S(j-1) min(0, h(j)) + (1 - S(j)) min(0, h(j+1))`.
    pub fn residual(&self) -> f64 {
        let v = self.s.len() - 1;
        (2..=v)
            .map(|j| {
                let next = if j < v { self.h_at(j + 1) } else { 0.0 };
                let rhs = 1.0 - self.s[j] - self.lambda
                    + self.cum[j - 1] * self.h_at(j).min(0.0)
                    + (1.0 - self.cum[j]) * next.min(0.0);
                (rhs - self.h_at(j)).abs()
            })
            .fold(0.0, f64::max)
    }
}

pub fn bellman_c2(dist: &StackDistribution) -> Result<BellmanC2Solution> {
    let v = dist.len();
    if v < 2 {
        return Err(Error::InvalidInput(
            "the C = 2 closed form needs V >= 2".into(),
        ));
    }
    const TIE: f64 = 1e-12;
    let mean = |i: usize, j: usize| dist.mean(i, j);
    let mut beta = vec![0.0; v + 2];
    for (j, b) in beta.iter_mut().enumerate().take(v + 1).skip(1) {
        *b = (j..=v)
            .map(|e| mean(j, e))
            .fold(f64::NEG_INFINITY, f64::max);
    }
    let b2 = beta[2];
    let mut phi = vec![0usize; v + 2];
    let mut rho = vec![0.0; v + 2];
    for j in 2..=v {
        let mut best = 0;
        for l in 1..=v - j + 1 {
            let end = j + l - 1;
            if (0..l).all(|k| mean(j + k, end) >= b2 - TIE) {
                best = l;
            }
        }
        phi[j] = best;
        rho[j] = if best > 0 {
            mean(j, j + best - 1) - b2
        } else {
            beta[j] - b2
        };
    }
    let cum: Vec<f64> = (0..=v).map(|j| dist.cum(j)).collect();
    let s: Vec<f64> = std::iter::once(0.0)
        .chain(dist.probs().iter().copied())
        .collect();
    let h = (2..=v)
        .map(|j| {
            let own = if phi[j] == 0 {
                0.0
            } else {
                cum[j - 1] / (1.0 - cum[j - 1]) * phi[j] as f64 * rho[j]
            };
            b2 - s[j] - own - phi[j + 1] as f64 * rho[j + 1]
        })
        .collect();
    let lambda = 1.0 - b2;
    Ok(BellmanC2Solution {
        beta,
        phi,
        rho,
        lambda,
        lambda_miss_rate: lambda - s[1],
        h,
        cum,
        s,
    })
}

/// Outcome of the non-stack-optimality experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleReport {
    #[serde(rename = "C2_eviction_depth")]
    pub c2_eviction_depth: usize,
    #[serde(rename = "C3_eviction_depth")]
    pub c3_eviction_depth: usize,
    pub horizon: usize,
    pub infinite_horizon_agrees: bool,
    pub inclusion_violated: bool,
    /// Continuation cost per candidate depth, for each capacity.
    #[serde(skip)]
    pub c2_costs: Vec<(usize, f64)>,
    #[serde(skip)]
    pub c3_costs: Vec<(usize, f64)>,
}

/// Horizon of the experiment: steps remaining after the eviction.
pub const COUNTEREXAMPLE_HORIZON: usize = 5;

const UNIQUE_TOLERANCE: f64 = 1e-9;

struct Choice {
    depth: usize,
    costs: Vec<(usize, f64)>,
    kept: u32,
    bias_depth: usize,
}

fn eviction_choice(
    dist: &StackDistribution,
    resident: &[usize],
    access: usize,
    horizon: usize,
) -> Result<Choice> {
    let c = resident.len();
    let mdp = build_mdp(dist, c)?;
    let x = mdp
        .state_index(mask_from_depths(resident))
        .ok_or_else(|| Error::InvalidInput("initial buffer is not a state".into()))?;
    let o = mdp.outcome(x, access);
    let table = dp_optimal(&mdp, horizon);
    let costs: Vec<(usize, f64)> = o
        .options
        .iter()
        .map(|&(j, t)| (j, table.cost(t, horizon)))
        .collect();
    let best = argmin_set(&o.options, &table.j[horizon], UNIQUE_TOLERANCE);
    if best.len() != 1 {
        return Err(Error::InvalidInput(format!(
            "optimal eviction is not unique at C = {c}: {best:?}"
        )));
    }
    let depth = best[0];
    let kept = rotate_mask(mask_from_depths(resident), access) & !(1 << (depth - 1));

    let rvi = relative_value_iteration(&mdp.chain(), RviOptions::default())?;
    let bias = argmin_set(&o.options, &rvi.h, UNIQUE_TOLERANCE);
    let bias_depth = if bias.len() == 1 { bias[0] } else { 0 };
    Ok(Choice {
        depth,
        costs,
        kept,
        bias_depth,
    })
}

/// Replays the experiment showing that no stack policy is optimal: with the
/// buffers `{1, 4}` and `{1, 4, 7}` and an access at depth 8, the optimal
/// evictions for `C = 2` and `C = 3` break inclusion.
pub fn counterexample_check() -> Result<CounterexampleReport> {
    let dist = crate::dist::counterexample_distribution();
    let c2 = eviction_choice(&dist, &[1, 4], 8, COUNTEREXAMPLE_HORIZON)?;
    let c3 = eviction_choice(&dist, &[1, 4, 7], 8, COUNTEREXAMPLE_HORIZON)?;
    Ok(CounterexampleReport {
        c2_eviction_depth: c2.depth,
        c3_eviction_depth: c3.depth,
        horizon: COUNTEREXAMPLE_HORIZON,
        infinite_horizon_agrees: c2.bias_depth == c2.depth && c3.bias_depth == c3.depth,
        inclusion_violated: c2.kept & !c3.kept != 0,
        c2_costs: c2.costs,
        c3_costs: c3.costs,
    })
}

/// Optimal and LRU costs when the depth law depends on the past depths.
#[derive(Debug, Clone, PartialEq)]
pub struct DependentSolution {
    /// Occupancy masks, same order as the cost vectors.
    pub states: Vec<u32>,
    pub optimal: Vec<f64>,
    pub lru: Vec<f64>,
}

/// Exhaustive DP over `(depth history, state)` for `horizon` steps.
/// `conditional` maps a history of depths to raw probabilities over `[1, V]`.
pub fn dp_dependent(
    conditional: impl Fn(&[usize]) -> Vec<f64>,
    v: usize,
    c: usize,
    horizon: usize,
    require_non_increasing: bool,
) -> Result<DependentSolution> {
    let placeholder = StackDistribution::uniform(v)?;
    let mdp = build_mdp(&placeholder, c)?;
    let n = mdp.state_count();

    // histories of each length, in base-V order
    let mut laws: Vec<Vec<StackDistribution>> = Vec::with_capacity(horizon);
    for len in 0..horizon {
        let count = v.pow(len as u32);
        let mut layer = Vec::with_capacity(count);
        let mut hist = vec![1usize; len];
        for code in 0..count {
            let mut k = code;
            for slot in hist.iter_mut().rev() {
                *slot = 1 + k % v;
                k /= v;
            }
            let raw = conditional(&hist);
            let law = StackDistribution::new(&raw)?;
            if law.len() != v {
                return Err(Error::InvalidDistribution(format!(
                    "conditional law has {} depths, expected {v}",
                    law.len()
                )));
            }
            if require_non_increasing && !law.is_non_increasing() {
                return Err(Error::InvalidDistribution(format!(
                    "conditional law after {hist:?} is not non-increasing"
                )));
            }
            layer.push(law);
        }
        laws.push(layer);
    }

    let mut opt = vec![vec![0.0; n]; v.pow(horizon as u32)];
    let mut lru = opt.clone();
    for len in (0..horizon).rev() {
        let layer = &laws[len];
        let mut next_opt = Vec::with_capacity(layer.len());
        let mut next_lru = Vec::with_capacity(layer.len());
        for (code, law) in layer.iter().enumerate() {
            let mut o_row = vec![0.0; n];
            let mut l_row = vec![0.0; n];
            for s in 0..n {
                for d in 1..=v {
                    let p = law.prob(d);
                    if p == 0.0 {
                        continue;
                    }
                    let child = code * v + (d - 1);
                    let out = mdp.outcome(s, d);
                    let best = out
                        .options
                        .iter()
                        .map(|&(_, t)| opt[child][t])
                        .fold(f64::INFINITY, f64::min);
                    o_row[s] += p * (out.cost + best);
                    l_row[s] += p * (out.cost + lru[child][EvictionRule::Lru.pick(&out.options)]);
                }
            }
            next_opt.push(o_row);
            next_lru.push(l_row);
        }
        opt = next_opt;
        lru = next_lru;
    }
    Ok(DependentSolution {
        states: mdp.states.clone(),
        optimal: opt.swap_remove(0),
        lru: lru.swap_remove(0),
    })
}
