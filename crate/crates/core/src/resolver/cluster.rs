//! Clusters of similar items: connected components of the similarity graph.
//!
//! Items are addressed by index into a canonically ordered slice, so the
//! output never depends on the order in which pairs were scored.

/// Disjoint sets with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn size_of(&mut self, x: usize) -> usize {
        let root = self.find(x);
        self.size[root]
    }

    /// Returns false when `a` and `b` were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }

    /// Components with members ascending, ordered by smallest member.
    pub fn components(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); n];
        for x in 0..n {
            let r = self.find(x);
            by_root[r].push(x);
        }
        let mut out: Vec<Vec<usize>> = by_root.into_iter().filter(|c| !c.is_empty()).collect();
        out.sort_by_key(|c| c[0]);
        out
    }
}

/// An admitted pair `(i, j)` with `i < j` and its similarity score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub score: f64,
}

/// Connected components over `n` items for the given admitted edges.
/// Singletons are included.
pub fn build_clusters(n: usize, edges: &[Edge]) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(n);
    for e in edges {
        uf.union(e.i, e.j);
    }
    uf.components()
}

/// Splits any cluster larger than `cap` by re-adding its internal edges in
/// descending score order and refusing merges that would exceed `cap`.
/// Ties are broken by index so the result is deterministic.
pub fn split_oversized(clusters: Vec<Vec<usize>>, edges: &[Edge], cap: usize) -> Vec<Vec<usize>> {
    let cap = cap.max(1);
    let n = clusters.iter().flatten().copied().max().map_or(0, |m| m + 1);
    let mut owner = vec![usize::MAX; n];
    for (c, members) in clusters.iter().enumerate() {
        for &m in members {
            owner[m] = c;
        }
    }
    let mut out = Vec::new();
    let mut uf = UnionFind::new(n);
    let mut internal: Vec<Edge> = Vec::new();
    for (c, members) in clusters.iter().enumerate() {
        if members.len() <= cap {
            out.push(members.clone());
            continue;
        }
        internal.clear();
        internal.extend(edges.iter().filter(|e| owner[e.i] == c && owner[e.j] == c));
        internal.sort_by(|a, b| b.score.total_cmp(&a.score).then((a.i, a.j).cmp(&(b.i, b.j))));
        for e in &internal {
            if uf.find(e.i) != uf.find(e.j) && uf.size_of(e.i) + uf.size_of(e.j) <= cap {
                uf.union(e.i, e.j);
            }
        }
        let mut parts: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for &m in members {
            parts.entry(uf.find(m)).or_default().push(m);
        }
        out.extend(parts.into_values().map(|mut p| {
            p.sort_unstable();
            p
        }));
    }
    out.sort_by_key(|c| c[0]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(i: usize, j: usize, score: f64) -> Edge {
        Edge { i, j, score }
    }

    #[test]
    fn transitive_chain_forms_one_cluster() {
        let clusters = build_clusters(4, &[edge(0, 1, 0.95), edge(1, 2, 0.95)]);
        assert_eq!(clusters, vec![vec![0, 1, 2], vec![3]]);
    }

    #[test]
    fn no_edges_means_singletons() {
        assert_eq!(build_clusters(3, &[]), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn oversized_clusters_are_split_under_the_cap() {
        let edges: Vec<Edge> = (0..9).map(|i| edge(i, i + 1, 1.0 - i as f64 * 0.01)).collect();
        let clusters = build_clusters(10, &edges);
        assert_eq!(clusters.len(), 1);
        let split = split_oversized(clusters, &edges, 4);
        assert!(split.iter().all(|c| c.len() <= 4));
        assert_eq!(split.iter().map(Vec::len).sum::<usize>(), 10);
        assert_eq!(split[0], vec![0, 1, 2, 3]);
    }
}
