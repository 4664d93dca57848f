//! LRU depths in `O(log V)` from last-access timestamps.

/// Binary indexed tree over `i64` counts.
#[derive(Debug, Clone)]
pub(crate) struct Fenwick {
    tree: Vec<i64>,
}

impl Fenwick {
    pub fn new(n: usize) -> Self {
        Self {
            tree: vec![0; n + 1],
        }
    }

    pub fn len(&self) -> usize {
        self.tree.len() - 1
    }

    pub fn add(&mut self, idx: usize, delta: i64) {
        let mut i = idx + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over `[0, idx]`.
    pub fn prefix(&self, idx: usize) -> i64 {
        let mut i = idx + 1;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }

    pub fn clear(&mut self) {
        self.tree.iter_mut().for_each(|x| *x = 0);
    }
}

const UNSEEN: usize = usize::MAX;

/// Recency of every item as a timestamp on a compacted time axis.
#[derive(Debug, Clone)]
pub(crate) struct LruDepths {
    slots: Fenwick,
    stamp: Vec<usize>,
    next: usize,
    live: usize,
}

impl LruDepths {
    /// No item seen yet.
    pub fn empty(v: usize) -> Self {
        Self {
            slots: Fenwick::new(2 * v.max(1) + 1),
            stamp: vec![UNSEEN; v],
            next: 0,
            live: 0,
        }
    }

    /// Every item present, in the given top-to-bottom order.
    pub fn full(items: &[u32]) -> Self {
        let v = items.len();
        let mut lru = Self::empty(v);
        for &item in items.iter().rev() {
            lru.stamp[item as usize] = lru.next;
            lru.slots.add(lru.next, 1);
            lru.next += 1;
        }
        lru.live = v;
        lru
    }

    pub fn live(&self) -> usize {
        self.live
    }

    /// Depth of `item` before the access, `None` if never seen. The item is
    /// moved to the top either way. `item` must be in range.
    pub fn access(&mut self, item: u32) -> Option<usize> {
        let old = self.stamp[item as usize];
        let depth = if old == UNSEEN {
            self.live += 1;
            None
        } else {
            let d = self.live as i64 - self.slots.prefix(old) + 1;
            self.slots.add(old, -1);
            self.stamp[item as usize] = UNSEEN;
            Some(d as usize)
        };
        if self.next == self.slots.len() {
            self.compact();
        }
        self.stamp[item as usize] = self.next;
        self.slots.add(self.next, 1);
        self.next += 1;
        depth
    }

    fn compact(&mut self) {
        let mut order: Vec<(usize, usize)> = self
            .stamp
            .iter()
            .enumerate()
            .filter(|(_, &t)| t != UNSEEN)
            .map(|(i, &t)| (t, i))
            .collect();
        order.sort_unstable();
        self.slots.clear();
        for (new, &(_, item)) in order.iter().enumerate() {
            self.stamp[item] = new;
            self.slots.add(new, 1);
        }
        self.next = order.len();
    }
}
