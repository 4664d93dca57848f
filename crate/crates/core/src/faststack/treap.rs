//! Implicit treaps in a shared arena: sequences with split/join by rank.

pub(crate) type NodeId = u32;
pub(crate) const NIL: NodeId = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    value: u32,
    priority: u64,
    size: u32,
    left: NodeId,
    right: NodeId,
}

#[derive(Debug, Clone)]
pub(crate) struct Arena {
    nodes: Vec<Node>,
    state: u64,
}

impl Arena {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            nodes: Vec::with_capacity(n),
            state: 0x9e37_79b9_7f4a_7c15,
        }
    }

    // splitmix64
    fn next_priority(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    fn size(&self, t: NodeId) -> u32 {
        if t == NIL {
            0
        } else {
            self.nodes[t as usize].size
        }
    }

    fn pull(&mut self, t: NodeId) {
        let n = &self.nodes[t as usize];
        let s = 1 + self.size(n.left) + self.size(n.right);
        self.nodes[t as usize].size = s;
    }

    /// Sequence holding `values` in order.
    pub fn build(&mut self, values: impl IntoIterator<Item = u32>) -> NodeId {
        let mut root = NIL;
        for value in values {
            let priority = self.next_priority();
            let id = self.nodes.len() as NodeId;
            self.nodes.push(Node {
                value,
                priority,
                size: 1,
                left: NIL,
                right: NIL,
            });
            root = self.join(root, id);
        }
        root
    }

    pub fn len(&self, t: NodeId) -> usize {
        self.size(t) as usize
    }

    /// Splits into the first `k` elements and the rest.
    pub fn split(&mut self, t: NodeId, k: usize) -> (NodeId, NodeId) {
        if t == NIL {
            return (NIL, NIL);
        }
        let left = self.nodes[t as usize].left;
        let ls = self.size(left) as usize;
        if k <= ls {
            let (a, b) = self.split(left, k);
            self.nodes[t as usize].left = b;
            self.pull(t);
            (a, t)
        } else {
            let right = self.nodes[t as usize].right;
            let (a, b) = self.split(right, k - ls - 1);
            self.nodes[t as usize].right = a;
            self.pull(t);
            (t, b)
        }
    }

    pub fn join(&mut self, a: NodeId, b: NodeId) -> NodeId {
        if a == NIL {
            return b;
        }
        if b == NIL {
            return a;
        }
        if self.nodes[a as usize].priority > self.nodes[b as usize].priority {
            let r = self.nodes[a as usize].right;
            let j = self.join(r, b);
            self.nodes[a as usize].right = j;
            self.pull(a);
            a
        } else {
            let l = self.nodes[b as usize].left;
            let j = self.join(a, l);
            self.nodes[b as usize].left = j;
            self.pull(b);
            b
        }
    }

    /// Element at 0-based rank `k`.
    pub fn get(&self, mut t: NodeId, mut k: usize) -> u32 {
        loop {
            let n = &self.nodes[t as usize];
            let ls = self.size(n.left) as usize;
            if k < ls {
                t = n.left;
            } else if k == ls {
                return n.value;
            } else {
                k -= ls + 1;
                t = n.right;
            }
        }
    }

    /// Rotates the whole sequence right by `r` (element `i` moves to `i + r`).
    pub fn rotate_right(&mut self, t: NodeId, r: usize) -> NodeId {
        let n = self.len(t);
        if n == 0 || r.is_multiple_of(n) {
            return t;
        }
        let (a, b) = self.split(t, n - r % n);
        self.join(b, a)
    }

    /// Moves the element at rank `p - 1` to the front.
    pub fn rotate_prefix(&mut self, t: NodeId, p: usize) -> NodeId {
        if p <= 1 {
            return t;
        }
        let (prefix, rest) = self.split(t, p);
        let (head, last) = self.split(prefix, p - 1);
        let front = self.join(last, head);
        self.join(front, rest)
    }

    pub fn to_vec(&self, t: NodeId) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.len(t));
        let mut stack = Vec::new();
        let mut cur = t;
        while cur != NIL || !stack.is_empty() {
            while cur != NIL {
                stack.push(cur);
                cur = self.nodes[cur as usize].left;
            }
            let n = stack.pop().expect("non-empty");
            out.push(self.nodes[n as usize].value);
            cur = self.nodes[n as usize].right;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matches_vec_rotations(n in 1usize..60, ops in prop::collection::vec((any::<bool>(), 0usize..200), 0..40)) {
            let mut arena = Arena::with_capacity(n);
            let mut root = arena.build(0..n as u32);
            let mut model: Vec<u32> = (0..n as u32).collect();
            for (whole, x) in ops {
                if whole {
                    root = arena.rotate_right(root, x);
                    model.rotate_right(x % n);
                } else {
                    let p = 1 + x % n;
                    root = arena.rotate_prefix(root, p);
                    model[..p].rotate_right(1);
                }
                prop_assert_eq!(arena.to_vec(root), model.clone());
            }
            for (k, &v) in model.iter().enumerate() {
                prop_assert_eq!(arena.get(root, k), v);
            }
        }
    }
}
