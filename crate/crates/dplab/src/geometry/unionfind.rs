//! Union-find structures for lattice cluster labeling.

/// Plain disjoint-set forest with path compression and union by rank.
#[derive(Debug)]
pub struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(size: usize) -> UnionFind {
        UnionFind { parent: (0..size as u32).collect(), rank: vec![0; size] }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] as usize != root {
            root = self.parent[root] as usize;
        }
        let mut cur = x;
        while self.parent[cur] as usize != cur {
            let next = self.parent[cur] as usize;
            self.parent[cur] = root as u32;
            cur = next;
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb as u32,
            std::cmp::Ordering::Greater => self.parent[rb] = ra as u32,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra as u32;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Union-find that tracks each element's integer displacement to its root,
/// so that merging two elements already in one set can detect a periodic
/// wrap (inconsistent displacement).
#[derive(Debug)]
pub struct OffsetUnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
    /// displacement of the element relative to its parent
    offset: Vec<[i32; 2]>,
    wraps: Vec<bool>,
}

impl OffsetUnionFind {
    pub fn new(size: usize) -> OffsetUnionFind {
        OffsetUnionFind {
            parent: (0..size as u32).collect(),
            rank: vec![0; size],
            offset: vec![[0, 0]; size],
            wraps: vec![false; size],
        }
    }

    /// Root of `x` and the displacement of `x` relative to that root.
    pub fn find(&mut self, x: usize) -> (usize, [i32; 2]) {
        if self.parent[x] as usize == x {
            return (x, [0, 0]);
        }
        let p = self.parent[x] as usize;
        let (root, off_p) = self.find(p);
        let combined = [self.offset[x][0] + off_p[0], self.offset[x][1] + off_p[1]];
        self.parent[x] = root as u32;
        self.offset[x] = combined;
        (root, combined)
    }

    /// Merge with the constraint `pos(b) - pos(a) = delta`. Detecting a
    /// conflicting constraint marks the set as wrapping.
    pub fn union(&mut self, a: usize, b: usize, delta: [i32; 2]) {
        let (ra, off_a) = self.find(a);
        let (rb, off_b) = self.find(b);
        if ra == rb {
            let implied = [off_b[0] - off_a[0], off_b[1] - off_a[1]];
            if implied != delta {
                self.wraps[ra] = true;
            }
            return;
        }
        // displacement of rb relative to ra satisfying the constraint
        let rb_rel = [off_a[0] + delta[0] - off_b[0], off_a[1] + delta[1] - off_b[1]];
        let wrap = self.wraps[ra] || self.wraps[rb];
        if self.rank[ra] < self.rank[rb] {
            self.parent[ra] = rb as u32;
            self.offset[ra] = [-rb_rel[0], -rb_rel[1]];
            self.wraps[rb] = wrap;
        } else {
            self.parent[rb] = ra as u32;
            self.offset[rb] = rb_rel;
            if self.rank[ra] == self.rank[rb] {
                self.rank[ra] += 1;
            }
            self.wraps[ra] = wrap;
        }
    }

    pub fn wraps(&mut self, x: usize) -> bool {
        let (root, _) = self.find(x);
        self.wraps[root]
    }
}
