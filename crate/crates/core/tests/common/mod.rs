//! Brute-force reference implementations used by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use netsel::agnes::Linkage;
use netsel::netstats::Graph;
use rand::Rng;

pub fn random_graph(rng: &mut impl Rng, p: usize, density: f64) -> Graph {
    let mut edges = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            if rng.random::<f64>() < density {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(p, edges).unwrap()
}

/// All-pairs shortest paths by Floyd–Warshall; `None` means unreachable.
pub fn floyd_warshall(g: &Graph) -> Vec<Vec<Option<u32>>> {
    let p = g.node_count();
    let mut d = vec![vec![None; p]; p];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some(0);
        for &j in g.neighbors(i) {
            row[j] = Some(1);
        }
    }
    for k in 0..p {
        for i in 0..p {
            for j in 0..p {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}

/// `sum_k tr(A^k) / k!`, truncated once the terms are negligible.
pub fn estrada_series(g: &Graph) -> f64 {
    let a = g.adjacency_matrix();
    let p = a.nrows();
    let mut power = DMatrix::<f64>::identity(p, p);
    let mut total = p as f64;
    let mut fact = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        power = &power * &a;
        fact *= k as f64;
        let term = power.trace() / fact;
        total += term;
        // odd traces vanish on bipartite graphs, so look at two terms
        if prev + term < 1e-17 * total {
            break;
        }
        prev = term;
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteMerge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
}

enum Node {
    Leaf(usize),
    /// Children and the step at which the cluster was formed (1-based).
    Join(Box<Node>, Box<Node>, usize),
}

impl Node {
    fn members(&self, out: &mut Vec<usize>) {
        match self {
            Node::Leaf(i) => out.push(*i),
            Node::Join(a, b, _) => {
                a.members(out);
                b.members(out);
            }
        }
    }

    fn birth(&self) -> usize {
        match self {
            Node::Leaf(_) => 0,
            Node::Join(_, _, t) => *t,
        }
    }
}

/// WPGMA distance from the definition: the cluster formed later was made
/// by joining two clusters that both coexisted with the other side, and
/// its distance is the plain mean of theirs.
fn wpgma(x: &Node, y: &Node, d: &DMatrix<f64>) -> f64 {
    match (x, y) {
        (Node::Leaf(i), Node::Leaf(j)) => d[(*i, *j)],
        (Node::Join(a, b, _), _) if x.birth() > y.birth() => 0.5 * (wpgma(a, y, d) + wpgma(b, y, d)),
        (_, Node::Join(a, b, _)) => 0.5 * (wpgma(x, a, d) + wpgma(x, b, d)),
        _ => unreachable!(),
    }
}

/// Agglomerative clustering that recomputes every cluster distance from
/// scratch at each step. Ties go to the lexicographically first slot pair
/// and the merged cluster takes the higher slot.
pub fn brute_agnes(d: &DMatrix<f64>, linkage: Linkage) -> Vec<BruteMerge> {
    let p = d.nrows();
    let mut slots: Vec<Option<(Node, usize)>> = (0..p).map(|i| Some((Node::Leaf(i), i))).collect();
    let mut merges = Vec::new();
    for t in 0..p.saturating_sub(1) {
        let mut vals = Vec::new();
        for h in 0..p {
            for k in h + 1..p {
                let (Some(x), Some(y)) = (&slots[h], &slots[k]) else { continue };
                let v = match linkage {
                    Linkage::Upgma => {
                        let (mut mx, mut my) = (Vec::new(), Vec::new());
                        x.0.members(&mut mx);
                        y.0.members(&mut my);
                        let s: f64 = mx.iter().flat_map(|&i| my.iter().map(move |&j| d[(i, j)])).sum();
                        s / (mx.len() * my.len()) as f64
                    }
                    Linkage::Wpgma => wpgma(&x.0, &y.0, d),
                };
                vals.push((h, k, v));
            }
        }
        let min = vals.iter().map(|v| v.2).fold(f64::INFINITY, f64::min);
        let &(h, k, v) = vals.iter().find(|v| v.2 <= min + 1e-12).unwrap();
        let (xh, idh) = slots[h].take().unwrap();
        let (xk, idk) = slots[k].take().unwrap();
        merges.push(BruteMerge { a: idh, b: idk, height: v });
        slots[k] = Some((Node::Join(Box::new(xh), Box::new(xk), t + 1), p + t));
    }
    merges
}

/// AC from merge heights: mean over nodes of `1 - first_height / max_height`.
pub fn brute_ac(merges: &[BruteMerge], p: usize) -> Option<f64> {
    let max = merges.last()?.height;
    if max <= 0.0 {
        return None;
    }
    let mut first = vec![f64::NAN; p];
    for m in merges {
        for id in [m.a, m.b] {
            if id < p && first[id].is_nan() {
                first[id] = m.height;
            }
        }
    }
    Some(first.iter().map(|h| 1.0 - h / max).sum::<f64>() / p as f64)
}

/// Data with columns `X = Z L'` for a random lower-triangular `L`, so
/// the population covariance is a random SPD matrix.
pub fn random_data(rng: &mut impl Rng, n: usize, p: usize) -> DMatrix<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let l = DMatrix::<f64>::from_fn(p, p, |i, j| if j <= i { StandardNormal.sample(rng) } else { 0.0 });
    let z = DMatrix::<f64>::from_fn(n, p, |_, _| StandardNormal.sample(rng));
    z * l.transpose()
}
