//! Density clustering over mutual-reachability distances: minimum spanning
//! tree, single-linkage hierarchy, condensed tree and excess-of-mass
//! selection.

use std::cmp::Ordering;

/// Density level used when two points merge at distance zero.
const LAMBDA_CAP: f64 = 1e12;

/// Cluster index per point; `None` marks an outlier.
pub type Assignment = Vec<Option<usize>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DensityParams {
    pub min_cluster_size: usize,
    /// Neighbor count for core distances; defaults to `min_cluster_size`.
    pub min_samples: Option<usize>,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Distance to the `k`-th nearest point, the point itself counting as the
/// first.
fn core_distances(points: &[Vec<f64>], k: usize) -> Vec<f64> {
    let n = points.len();
    let k = k.clamp(1, n);
    (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n).map(|j| euclidean(&points[i], &points[j])).collect();
            d.sort_by(f64::total_cmp);
            d[k - 1]
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
struct Edge {
    a: usize,
    b: usize,
    mr: f64,
    raw: f64,
}

fn edge_order(x: &Edge, y: &Edge) -> Ordering {
    x.mr.total_cmp(&y.mr)
        .then(x.raw.total_cmp(&y.raw))
        .then(x.a.min(x.b).cmp(&y.a.min(y.b)))
        .then(x.a.max(x.b).cmp(&y.a.max(y.b)))
}

/// Prim's algorithm on the dense mutual-reachability graph. Ties on the
/// reachability distance are broken by raw distance so coincident points
/// join each other first.
fn minimum_spanning_tree(points: &[Vec<f64>], core: &[f64]) -> Vec<Edge> {
    let n = points.len();
    let mut in_tree = vec![false; n];
    let mut best: Vec<Option<Edge>> = vec![None; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let raw = euclidean(&points[current], &points[j]);
            let cand = Edge {
                a: current,
                b: j,
                mr: raw.max(core[current]).max(core[j]),
                raw,
            };
            if best[j].is_none_or(|e| edge_order(&cand, &e) == Ordering::Less) {
                best[j] = Some(cand);
            }
        }
        let next = (0..n)
            .filter(|&j| !in_tree[j])
            .min_by(|&x, &y| edge_order(&best[x].unwrap(), &best[y].unwrap()).then(x.cmp(&y)))
            .expect("a vertex remains outside the tree");
        in_tree[next] = true;
        edges.push(best[next].unwrap());
        current = next;
    }
    edges.sort_by(edge_order);
    edges
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// Single-linkage merge: children, merge distance and size. Node ids below
/// `n` are points; merge `i` creates node `n + i`.
#[derive(Clone, Copy, Debug)]
struct Merge {
    left: usize,
    right: usize,
    distance: f64,
    size: usize,
}

fn single_linkage(n: usize, mst: &[Edge]) -> Vec<Merge> {
    // Union-find over points; `node_of[root]` is the hierarchy node that
    // currently represents the component.
    let mut uf = UnionFind::new(n);
    let mut node_of: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(mst.len());
    for e in mst {
        let (ra, rb) = (uf.find(e.a), uf.find(e.b));
        let size = uf.size[ra] + uf.size[rb];
        merges.push(Merge {
            left: node_of[ra],
            right: node_of[rb],
            distance: e.mr,
            size,
        });
        uf.parent[rb] = ra;
        uf.size[ra] = size;
        node_of[ra] = n + merges.len() - 1;
    }
    merges
}

fn lambda_of(distance: f64) -> f64 {
    if distance > 0.0 {
        (1.0 / distance).min(LAMBDA_CAP)
    } else {
        LAMBDA_CAP
    }
}

/// Condensed cluster tree.
struct Condensed {
    /// Parent cluster per cluster (root has none).
    parent: Vec<Option<usize>>,
    birth: Vec<f64>,
    /// Sum over members of `(lambda_leave − birth)`.
    stability: Vec<f64>,
    /// Cluster each point finally falls out of.
    point_cluster: Vec<usize>,
}

fn condense(n: usize, merges: &[Merge], min_size: usize) -> Condensed {
    let size_of = |node: usize| if node < n { 1 } else { merges[node - n].size };
    let mut tree = Condensed {
        parent: vec![None],
        birth: vec![0.0],
        stability: vec![0.0],
        point_cluster: vec![0; n],
    };
    if merges.is_empty() {
        return tree;
    }
    // Explicit stack of (hierarchy node, cluster it belongs to).
    let mut stack = vec![(n + merges.len() - 1, 0usize)];
    let leave = |tree: &mut Condensed, node: usize, cluster: usize, lambda: f64| {
        let mut pending = vec![node];
        while let Some(x) = pending.pop() {
            if x < n {
                tree.point_cluster[x] = cluster;
                tree.stability[cluster] += lambda - tree.birth[cluster];
            } else {
                let m = merges[x - n];
                pending.push(m.left);
                pending.push(m.right);
            }
        }
    };
    while let Some((node, cluster)) = stack.pop() {
        if node < n {
            // A lone point reached as a continuing branch.
            leave(&mut tree, node, cluster, LAMBDA_CAP);
            continue;
        }
        let m = merges[node - n];
        let lambda = lambda_of(m.distance);
        let (ls, rs) = (size_of(m.left), size_of(m.right));
        match (ls >= min_size, rs >= min_size) {
            (true, true) => {
                for child in [m.left, m.right] {
                    let id = tree.parent.len();
                    tree.parent.push(Some(cluster));
                    tree.birth.push(lambda);
                    tree.stability.push(0.0);
                    tree.stability[cluster] += (lambda - tree.birth[cluster]) * size_of(child) as f64;
                    stack.push((child, id));
                }
            }
            (true, false) => {
                leave(&mut tree, m.right, cluster, lambda);
                stack.push((m.left, cluster));
            }
            (false, true) => {
                leave(&mut tree, m.left, cluster, lambda);
                stack.push((m.right, cluster));
            }
            (false, false) => {
                leave(&mut tree, m.left, cluster, lambda);
                leave(&mut tree, m.right, cluster, lambda);
            }
        }
    }
    tree
}

/// Excess-of-mass selection; the root is never selected.
fn select_clusters(tree: &Condensed) -> Vec<bool> {
    let k = tree.parent.len();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); k];
    for c in 1..k {
        if let Some(p) = tree.parent[c] {
            children[p].push(c);
        }
    }
    let mut selected = vec![false; k];
    let mut score = tree.stability.clone();
    // Children always carry larger ids than their parent.
    for c in (1..k).rev() {
        let child_total: f64 = children[c].iter().map(|&x| score[x]).sum();
        if children[c].is_empty() || tree.stability[c] >= child_total {
            selected[c] = true;
            let mut pending = children[c].clone();
            while let Some(x) = pending.pop() {
                selected[x] = false;
                pending.extend(children[x].iter().copied());
            }
        } else {
            score[c] = child_total;
        }
    }
    selected
}

/// Clusters `points` (rows of equal length). Every returned cluster has at
/// least `min_cluster_size` members and labels are numbered in order of each
/// cluster's smallest member index.
pub fn cluster_documents(points: &[Vec<f64>], params: DensityParams) -> Assignment {
    let n = points.len();
    let min_size = params.min_cluster_size.max(2);
    if n < min_size {
        return vec![None; n];
    }
    let core = core_distances(points, params.min_samples.unwrap_or(min_size));
    let mst = minimum_spanning_tree(points, &core);
    let merges = single_linkage(n, &mst);
    let tree = condense(n, &merges, min_size);
    let selected = select_clusters(&tree);
    let raw: Vec<Option<usize>> = tree
        .point_cluster
        .iter()
        .map(|&c| {
            let mut cur = Some(c);
            while let Some(x) = cur {
                if selected[x] {
                    return Some(x);
                }
                cur = tree.parent[x];
            }
            None
        })
        .collect();
    let mut relabel = std::collections::HashMap::new();
    raw.into_iter()
        .map(|c| {
            c.map(|c| {
                let next = relabel.len();
                *relabel.entry(c).or_insert(next)
            })
        })
        .collect()
}

/// Adjusted Rand index between two labelings; outliers form one extra label
/// in each.
pub fn adjusted_rand_index(a: &[Option<usize>], b: &[Option<usize>]) -> f64 {
    use std::collections::HashMap;
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len() as f64;
    let pairs = |x: f64| x * (x - 1.0) / 2.0;
    let mut table: HashMap<(Option<usize>, Option<usize>), f64> = HashMap::new();
    let mut rows: HashMap<Option<usize>, f64> = HashMap::new();
    let mut cols: HashMap<Option<usize>, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&v| pairs(v)).sum();
    let sa: f64 = rows.values().map(|&v| pairs(v)).sum();
    let sb: f64 = cols.values().map(|&v| pairs(v)).sum();
    let expected = sa * sb / pairs(n);
    let max = (sa + sb) / 2.0;
    if (max - expected).abs() < 1e-12 {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use rand_distr::{Distribution, Normal};

    fn blob(center: &[f64], sigma: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_for(seed, "blob");
        let normal = Normal::new(0.0, sigma).unwrap();
        (0..n)
            .map(|_| center.iter().map(|c| c + normal.sample(&mut rng)).collect())
            .collect()
    }

    fn params(m: usize) -> DensityParams {
        DensityParams {
            min_cluster_size: m,
            min_samples: None,
        }
    }

    #[test]
    fn two_separated_blobs() {
        let mut pts = blob(&[0.0, 0.0], 0.1, 50, 1);
        pts.extend(blob(&[10.0, 0.0], 0.1, 50, 2));
        let truth: Vec<Option<usize>> = (0..100).map(|i| Some(i / 50)).collect();
        let got = cluster_documents(&pts, params(10));
        assert_eq!(got, truth);
    }

    #[test]
    fn small_blob_is_noise() {
        let mut pts = blob(&[0.0, 0.0], 0.1, 40, 1);
        pts.extend(blob(&[10.0, 0.0], 0.1, 40, 2));
        pts.extend(blob(&[-20.0, 30.0], 0.1, 5, 3));
        let got = cluster_documents(&pts, params(10));
        assert!(got[80..].iter().all(Option::is_none));
        assert_eq!(got.iter().flatten().max(), Some(&1));
        let alone = cluster_documents(&pts[80..], params(10));
        assert!(alone.iter().all(Option::is_none));
    }

    #[test]
    fn coincident_points_share_a_label() {
        let mut pts = blob(&[0.0, 0.0], 1.0, 60, 9);
        for i in 0..10 {
            pts.push(pts[i * 3].clone());
        }
        let got = cluster_documents(&pts, params(5));
        for i in 0..10 {
            assert_eq!(got[60 + i], got[i * 3]);
        }
    }

    #[test]
    fn clusters_respect_minimum_size() {
        let mut pts = blob(&[0.0, 0.0], 1.0, 80, 4);
        pts.extend(blob(&[3.0, 3.0], 0.5, 30, 5));
        let got = cluster_documents(&pts, params(12));
        let mut counts = std::collections::HashMap::new();
        for c in got.iter().flatten() {
            *counts.entry(*c).or_insert(0) += 1;
        }
        assert!(counts.values().all(|&c| c >= 12));
    }

    #[test]
    fn ari_examples() {
        let a = [Some(0), Some(0), Some(1), Some(1)];
        let b = [Some(1), Some(1), Some(0), Some(0)];
        assert_eq!(adjusted_rand_index(&a, &b), 1.0);
        let c = [Some(0), Some(1), Some(0), Some(1)];
        assert!(adjusted_rand_index(&a, &c) < 0.0);
    }
}
