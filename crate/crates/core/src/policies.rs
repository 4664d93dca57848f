//! Per-capacity reference simulation of eviction policies.
//!
//! Every simulator starts from an empty buffer and counts cold misses. The LRU
//! stack is kept explicitly (`O(V)` per access), which is what the KL and LPR
//! rules are phrased in terms of: evictions are decided on the stack *after*
//! the access has rotated the accessed item to the top.

use std::cmp::Reverse;
use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::dist::{LruStack, Trace};
use crate::error::{Error, Result};
use crate::segments::Segmentation;

/// An online eviction rule.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Lru,
    Mru,
    Fifo,
    /// Evict LRU depth `L + 1` if resident, else depth `K + 1`, else the least
    /// recently used resident item.
    Kl {
        k: usize,
        l: usize,
    },
    /// Evict the resident item of least priority, closest to the top on ties.
    Lpr(Segmentation),
}

impl Policy {
    pub fn name(&self) -> String {
        match self {
            Policy::Lru => "lru".into(),
            Policy::Mru => "mru".into(),
            Policy::Fifo => "fifo".into(),
            Policy::Kl { k, l } => format!("kl:{k}:{l}"),
            Policy::Lpr(_) => "lpr".into(),
        }
    }

    fn validate(&self, capacity: usize, v: usize) -> Result<()> {
        if capacity == 0 {
            return Err(Error::CapacityOutOfRange {
                capacity,
                min: 1,
                max: v.max(1),
            });
        }
        match *self {
            Policy::Kl { k, l } if !(1 <= k && k < capacity && capacity <= l && l <= v) => {
                Err(Error::InvalidKl {
                    k,
                    l,
                    c: capacity,
                    v,
                })
            }
            Policy::Lpr(ref seg) if seg.len() != v => Err(Error::InvalidInput(format!(
                "segmentation covers {} depths but the stack holds {v} items",
                seg.len()
            ))),
            _ => Ok(()),
        }
    }
}

/// Policy names as accepted on the command line: `lru`, `mru`, `fifo`,
/// `kl:K:L`, `lpr`, `opt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Lru,
    Mru,
    Fifo,
    Kl { k: usize, l: usize },
    Lpr,
    Opt,
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Ok(match lower.as_str() {
            "lru" => PolicyKind::Lru,
            "mru" => PolicyKind::Mru,
            "fifo" => PolicyKind::Fifo,
            "lpr" => PolicyKind::Lpr,
            "opt" | "belady" => PolicyKind::Opt,
            other => {
                let parts: Vec<&str> = other.split(':').collect();
                match parts.as_slice() {
                    ["kl", k, l] => PolicyKind::Kl {
                        k: k.parse()
                            .map_err(|_| Error::InvalidInput(format!("bad K in {s:?}")))?,
                        l: l.parse()
                            .map_err(|_| Error::InvalidInput(format!("bad L in {s:?}")))?,
                    },
                    _ => return Err(Error::InvalidInput(format!("unknown policy {s:?}"))),
                }
            }
        })
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::Lru => f.write_str("lru"),
            PolicyKind::Mru => f.write_str("mru"),
            PolicyKind::Fifo => f.write_str("fifo"),
            PolicyKind::Kl { k, l } => write!(f, "kl:{k}:{l}"),
            PolicyKind::Lpr => f.write_str("lpr"),
            PolicyKind::Opt => f.write_str("opt"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SimResult {
    pub accesses: u64,
    pub misses: u64,
    /// Evicted item per access, when logging was requested.
    #[serde(skip)]
    pub evictions: Option<Vec<Option<u32>>>,
}

impl SimResult {
    pub fn miss_rate(&self) -> f64 {
        if self.accesses == 0 {
            0.0
        } else {
            self.misses as f64 / self.accesses as f64
        }
    }
}

/// Outcome of a single access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    /// LRU depth of the accessed item before the access.
    pub depth: usize,
    pub hit: bool,
    pub evicted: Option<u32>,
}

/// A buffer of fixed capacity driven one access at a time.
#[derive(Debug, Clone)]
pub struct BufferSim<'p> {
    policy: &'p Policy,
    capacity: usize,
    stack: LruStack,
    resident: Vec<bool>,
    occupancy: usize,
    fifo: VecDeque<u32>,
    accesses: u64,
    misses: u64,
}

impl<'p> BufferSim<'p> {
    pub fn new(policy: &'p Policy, capacity: usize, initial: &LruStack) -> Result<Self> {
        policy.validate(capacity, initial.len())?;
        Ok(Self {
            policy,
            capacity,
            stack: initial.clone(),
            resident: vec![false; initial.len()],
            occupancy: 0,
            fifo: VecDeque::new(),
            accesses: 0,
            misses: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn stack(&self) -> &LruStack {
        &self.stack
    }

    pub fn is_resident(&self, item: u32) -> bool {
        self.resident[item as usize]
    }

    /// Resident items, in LRU stack order.
    pub fn resident_items(&self) -> Vec<u32> {
        self.stack
            .items()
            .iter()
            .copied()
            .filter(|&i| self.resident[i as usize])
            .collect()
    }

    pub fn result(&self) -> SimResult {
        SimResult {
            accesses: self.accesses,
            misses: self.misses,
            evictions: None,
        }
    }

    pub fn access(&mut self, item: u32) -> Result<Step> {
        let depth = self.stack.update(item)?;
        self.accesses += 1;
        if self.resident[item as usize] {
            return Ok(Step {
                depth,
                hit: true,
                evicted: None,
            });
        }
        self.misses += 1;
        let evicted = if self.occupancy == self.capacity {
            let victim_depth = self.victim_depth();
            let victim = self.stack.item_at(victim_depth);
            self.resident[victim as usize] = false;
            self.occupancy -= 1;
            Some(victim)
        } else {
            None
        };
        self.resident[item as usize] = true;
        self.occupancy += 1;
        if matches!(self.policy, Policy::Fifo) {
            self.fifo.push_back(item);
        }
        Ok(Step {
            depth,
            hit: false,
            evicted,
        })
    }

    fn resident_at(&self, depth: usize) -> bool {
        depth <= self.stack.len() && self.resident[self.stack.item_at(depth) as usize]
    }

    /// Resident depths below the top, shallowest first. The accessed item sits
    /// at depth 1 and is not yet marked resident on a miss.
    fn candidates(&self) -> impl DoubleEndedIterator<Item = usize> + '_ {
        (2..=self.stack.len()).filter(|&d| self.resident_at(d))
    }

    fn deepest(&self) -> usize {
        self.candidates()
            .next_back()
            .expect("full buffer has a victim")
    }

    fn victim_depth(&mut self) -> usize {
        match self.policy {
            Policy::Lru => self.deepest(),
            Policy::Mru => self.candidates().next().expect("full buffer has a victim"),
            Policy::Fifo => {
                let item = self.fifo.pop_front().expect("full buffer has a victim");
                self.stack.depth_of(item).expect("resident item is stacked")
            }
            Policy::Kl { k, l } => {
                if self.resident_at(l + 1) {
                    l + 1
                } else if self.resident_at(k + 1) {
                    k + 1
                } else {
                    self.deepest()
                }
            }
            Policy::Lpr(seg) => {
                lpr_evict_choice(seg, self.candidates()).expect("full buffer has a victim")
            }
        }
    }
}

/// Depth to evict under LPR: least priority, smallest depth on ties.
pub fn lpr_evict_choice(
    seg: &Segmentation,
    resident_depths: impl IntoIterator<Item = usize>,
) -> Result<usize> {
    let mut best: Option<(f64, usize)> = None;
    for d in resident_depths {
        if d < 2 || d > seg.len() {
            return Err(Error::InvalidInput(format!(
                "depth {d} is not an eviction candidate"
            )));
        }
        let xi = seg.xi(d);
        match best {
            Some((bx, bd)) if bx < xi || (bx == xi && bd < d) => {}
            _ => best = Some((xi, d)),
        }
    }
    best.map(|(_, d)| d)
        .ok_or_else(|| Error::InvalidInput("no eviction candidates".into()))
}

/// Runs `policy` at capacity `capacity` over `trace`, cold start.
pub fn simulate(
    policy: &Policy,
    trace: &Trace,
    capacity: usize,
    initial: &LruStack,
) -> Result<SimResult> {
    run(policy, trace, capacity, initial, false)
}

/// Like [`simulate`], also recording the eviction made at every access.
pub fn simulate_logged(
    policy: &Policy,
    trace: &Trace,
    capacity: usize,
    initial: &LruStack,
) -> Result<SimResult> {
    run(policy, trace, capacity, initial, true)
}

fn run(
    policy: &Policy,
    trace: &Trace,
    capacity: usize,
    initial: &LruStack,
    log: bool,
) -> Result<SimResult> {
    let mut sim = BufferSim::new(policy, capacity, initial)?;
    let mut evictions = log.then(|| Vec::with_capacity(trace.len()));
    for &a in trace.accesses() {
        let step = sim.access(a)?;
        if let Some(ev) = evictions.as_mut() {
            ev.push(step.evicted);
        }
    }
    Ok(SimResult {
        evictions,
        ..sim.result()
    })
}

/// Offline optimum: on a miss with a full buffer, evict the resident item whose
/// next reference is furthest away; items never referenced again go first, in
/// increasing id order.
pub fn simulate_belady(trace: &Trace, capacity: usize) -> Result<SimResult> {
    if capacity == 0 {
        return Err(Error::CapacityOutOfRange {
            capacity,
            min: 1,
            max: usize::MAX,
        });
    }
    let acc = trace.accesses();
    let n = acc.len();
    let mut next_use = vec![usize::MAX; n];
    let mut seen = vec![usize::MAX; trace.span()];
    for t in (0..n).rev() {
        let slot = &mut seen[acc[t] as usize];
        next_use[t] = *slot;
        *slot = t;
    }

    // keyed so that the maximum is the victim
    let mut buffer: BTreeSet<(usize, Reverse<u32>)> = BTreeSet::new();
    let mut key_of = vec![None; trace.span()];
    let mut misses = 0u64;
    for (t, &a) in acc.iter().enumerate() {
        let slot = a as usize;
        if let Some(old) = key_of[slot].take() {
            buffer.remove(&old);
        } else {
            misses += 1;
            if buffer.len() == capacity {
                let victim = buffer.pop_last().expect("full buffer");
                key_of[victim.1 .0 as usize] = None;
            }
        }
        let key = (next_use[t], Reverse(a));
        buffer.insert(key);
        key_of[slot] = Some(key);
    }
    Ok(SimResult {
        accesses: n as u64,
        misses,
        evictions: None,
    })
}
