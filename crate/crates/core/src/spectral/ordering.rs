//! Geometric nested dissection and the supernodal elimination tree.

use crate::sparse::CsrMatrix;

/// A block of pivots eliminated together, with the rows of its front below
/// the pivot block (in the permuted numbering, ascending, all >= `p1`).
#[derive(Clone, Debug)]
pub struct Supernode {
    pub p0: usize,
    pub p1: usize,
    pub rows: Vec<usize>,
    pub children: Vec<usize>,
}

impl Supernode {
    pub fn npiv(&self) -> usize {
        self.p1 - self.p0
    }

    pub fn front(&self) -> usize {
        self.npiv() + self.rows.len()
    }
}

/// Fill-reducing order plus supernode partition.
#[derive(Clone, Debug)]
pub struct Symbolic {
    pub n: usize,
    /// perm[new] = old
    pub perm: Vec<usize>,
    /// inv[old] = new
    pub inv: Vec<usize>,
    /// Supernodes in postorder.
    pub nodes: Vec<Supernode>,
}

struct Dissector<'a> {
    adj: &'a CsrMatrix,
    shape: Vec<usize>,
    leaf: usize,
    stamp: Vec<u32>,
    tick: u32,
    order: Vec<usize>,
    tree: Vec<(usize, usize, Vec<usize>)>,
}

impl<'a> Dissector<'a> {
    fn coord(&self, v: usize, axis: usize) -> usize {
        let stride: usize = self.shape[..axis].iter().product();
        (v / stride) % self.shape[axis]
    }

    fn next_tick(&mut self) -> u32 {
        self.tick += 1;
        self.tick
    }

    // Nodes of `side` that touch a node tagged `tag`.
    fn boundary(&self, side: &[usize], tag: u32) -> Vec<usize> {
        side.iter()
            .cloned()
            .filter(|&u| {
                self.adj
                    .row(u)
                    .0
                    .iter()
                    .any(|&v| v != u && self.stamp[v] == tag)
            })
            .collect()
    }

    // Returns the id of the subtree root supernode.
    fn dissect(&mut self, nodes: Vec<usize>) -> usize {
        if nodes.len() <= self.leaf {
            return self.emit(nodes, Vec::new());
        }
        let mut best: Option<(usize, usize, Vec<usize>, Vec<usize>, Vec<usize>)> = None;
        for axis in 0..self.shape.len() {
            let mut vals: Vec<usize> = nodes.iter().map(|&v| self.coord(v, axis)).collect();
            vals.sort_unstable();
            let (lo, hi) = (vals[0], *vals.last().unwrap());
            if lo == hi {
                continue;
            }
            let mut m = vals[vals.len() / 2];
            if m == lo {
                m = lo + 1;
            }
            let (a, b): (Vec<usize>, Vec<usize>) =
                nodes.iter().partition(|&&v| self.coord(v, axis) < m);
            if a.is_empty() || b.is_empty() {
                continue;
            }
            let tb = self.next_tick();
            for &v in &b {
                self.stamp[v] = tb;
            }
            let sep_a = self.boundary(&a, tb);
            let ta = self.next_tick();
            for &v in &a {
                self.stamp[v] = ta;
            }
            let sep_b = self.boundary(&b, ta);
            let (sep, keep_a, keep_b) = if sep_a.len() <= sep_b.len() {
                let t = self.next_tick();
                for &v in &sep_a {
                    self.stamp[v] = t;
                }
                (
                    sep_a,
                    a.into_iter()
                        .filter(|&v| self.stamp[v] != t)
                        .collect::<Vec<_>>(),
                    b,
                )
            } else {
                let t = self.next_tick();
                for &v in &sep_b {
                    self.stamp[v] = t;
                }
                let kb = b
                    .into_iter()
                    .filter(|&v| self.stamp[v] != t)
                    .collect::<Vec<_>>();
                (sep_b, a, kb)
            };
            let score = sep.len();
            let extent = hi - lo;
            let better = match &best {
                None => true,
                Some((s, e, _, _, _)) => score < *s || (score == *s && extent > *e),
            };
            if better {
                best = Some((score, extent, sep, keep_a, keep_b));
            }
        }
        match best {
            None => self.emit(nodes, Vec::new()),
            Some((_, _, sep, ka, kb)) => {
                if sep.len() * 4 >= nodes.len() * 3 {
                    return self.emit(nodes, Vec::new());
                }
                let mut children = Vec::new();
                if !ka.is_empty() {
                    children.push(self.dissect(ka));
                }
                if !kb.is_empty() {
                    children.push(self.dissect(kb));
                }
                self.emit(sep, children)
            }
        }
    }

    fn emit(&mut self, mut pivots: Vec<usize>, children: Vec<usize>) -> usize {
        pivots.sort_unstable();
        let p0 = self.order.len();
        self.order.extend_from_slice(&pivots);
        self.tree.push((p0, self.order.len(), children));
        self.tree.len() - 1
    }
}

/// Nested dissection on a lattice of the given shape (axis 0 fastest),
/// separating by the matrix graph itself so periodic and twisted wraps need no
/// special casing. Without a lattice the index itself is the coordinate.
pub fn analyse(pattern: &CsrMatrix, shape: Option<&[usize]>, leaf: usize) -> Symbolic {
    let n = pattern.nrows();
    let shape: Vec<usize> = match shape {
        Some(s) if s.iter().product::<usize>() == n => s.to_vec(),
        _ => vec![n.max(1)],
    };
    let mut d = Dissector {
        adj: pattern,
        shape,
        leaf: leaf.max(1),
        stamp: vec![0; n],
        tick: 0,
        order: Vec::with_capacity(n),
        tree: Vec::new(),
    };
    if n > 0 {
        d.dissect((0..n).collect());
    }
    let perm = d.order;
    let mut inv = vec![0; n];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let mut nodes: Vec<Supernode> = d
        .tree
        .into_iter()
        .map(|(p0, p1, children)| Supernode {
            p0,
            p1,
            rows: Vec::new(),
            children,
        })
        .collect();
    // Row structure: own off-block adjacency plus children's update rows.
    let mut mark = vec![usize::MAX; n];
    for s in 0..nodes.len() {
        let (p0, p1) = (nodes[s].p0, nodes[s].p1);
        let mut rows = Vec::new();
        for i in p0..p1 {
            for &oj in pattern.row(perm[i]).0 {
                let j = inv[oj];
                if j >= p1 && mark[j] != s {
                    mark[j] = s;
                    rows.push(j);
                }
            }
        }
        for c in nodes[s].children.clone() {
            for &j in &nodes[c].rows {
                if j >= p1 && mark[j] != s {
                    mark[j] = s;
                    rows.push(j);
                }
            }
        }
        rows.sort_unstable();
        nodes[s].rows = rows;
    }
    Symbolic {
        n,
        perm,
        inv,
        nodes,
    }
}

impl Symbolic {
    /// Entries in the factor (lower trapezoids of all fronts).
    pub fn factor_nnz(&self) -> usize {
        self.nodes
            .iter()
            .map(|s| {
                let p = s.npiv();
                p * (p + 1) / 2 + p * s.rows.len()
            })
            .sum()
    }

    /// Approximate flops of one numeric factorization.
    pub fn flops(&self) -> f64 {
        self.nodes
            .iter()
            .map(|s| {
                let (p, f) = (s.npiv() as f64, s.front() as f64);
                // sum over pivots k of (f-k)^2
                (f * f * p - f * p * p + p * p * p / 3.0).max(0.0)
            })
            .sum()
    }

    pub fn max_front(&self) -> usize {
        self.nodes.iter().map(|s| s.front()).max().unwrap_or(0)
    }
}
