//! Assignment and transportation solvers on dense real cost matrices.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use itertools::Itertools;

/// Sizes up to this use exhaustive search in [`min_cost_assignment`].
pub const EXHAUSTIVE_MAX: usize = 6;

/// Optimal square assignment by enumerating all permutations.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = cost.len();
    let mut best = (f64::INFINITY, (0..n).collect::<Vec<_>>());
    for perm in (0..n).permutations(n) {
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        if total < best.0 {
            best = (total, perm);
        }
    }
    if n == 0 {
        best.0 = 0.0;
    }
    best
}

/// Hungarian algorithm with row/column potentials, `O(n³)`.
/// Returns the optimal cost and the column assigned to each row.
pub fn hungarian(cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = cost.len();
    if n == 0 {
        return (0.0, Vec::new());
    }
    let m = cost[0].len();
    assert!(n <= m, "hungarian needs rows <= columns");
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    let total = assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    (total, assignment)
}

/// Exhaustive search for small sizes, Hungarian above [`EXHAUSTIVE_MAX`].
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    if cost.len() <= EXHAUSTIVE_MAX {
        brute_force_assignment(cost)
    } else {
        hungarian(cost)
    }
}

struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
    rev: usize,
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimum cost of moving `supply` onto `demand` (equal totals, nonnegative
/// costs) by successive shortest paths with reduced costs.
pub fn transport_cost(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> f64 {
    let (n, m) = (supply.len(), demand.len());
    let source = n + m;
    let sink = source + 1;
    let mut graph: Vec<Vec<Edge>> = (0..n + m + 2).map(|_| Vec::new()).collect();
    let add = |g: &mut Vec<Vec<Edge>>, a: usize, b: usize, cap: f64, c: f64| {
        let (ra, rb) = (g[b].len(), g[a].len());
        g[a].push(Edge { to: b, cap, cost: c, rev: ra });
        g[b].push(Edge { to: a, cap: 0.0, cost: -c, rev: rb });
    };
    for (i, &s) in supply.iter().enumerate() {
        add(&mut graph, source, i, s, 0.0);
    }
    for (j, &d) in demand.iter().enumerate() {
        add(&mut graph, n + j, sink, d, 0.0);
    }
    for i in 0..n {
        for j in 0..m {
            add(&mut graph, i, n + j, f64::INFINITY, cost[i][j]);
        }
    }

    let total: f64 = supply.iter().sum::<f64>().min(demand.iter().sum());
    let negligible = 1e-15 * total.max(f64::MIN_POSITIVE);
    let nodes = graph.len();
    let mut potential = vec![0.0; nodes];
    let mut sent = 0.0;
    let mut result = 0.0;
    while total - sent > negligible {
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; nodes];
        dist[source] = 0.0;
        let mut heap = BinaryHeap::from([HeapItem(0.0, source)]);
        while let Some(HeapItem(d, a)) = heap.pop() {
            if d > dist[a] {
                continue;
            }
            for (k, e) in graph[a].iter().enumerate() {
                if e.cap <= negligible {
                    continue;
                }
                let reduced = (e.cost + potential[a] - potential[e.to]).max(0.0);
                let nd = d + reduced;
                if nd < dist[e.to] {
                    dist[e.to] = nd;
                    prev[e.to] = Some((a, k));
                    heap.push(HeapItem(nd, e.to));
                }
            }
        }
        if !dist[sink].is_finite() {
            break;
        }
        for v in 0..nodes {
            if dist[v].is_finite() {
                potential[v] += dist[v];
            }
        }
        let mut push = total - sent;
        let mut v = sink;
        while let Some((a, k)) = prev[v] {
            push = push.min(graph[a][k].cap);
            v = a;
        }
        let mut v = sink;
        while let Some((a, k)) = prev[v] {
            let e = &mut graph[a][k];
            e.cap -= push;
            result += push * e.cost;
            let (to, rev) = (e.to, e.rev);
            graph[to][rev].cap += push;
            v = a;
        }
        sent += push;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cost(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..m).map(|_| rng.gen_range(0.0..10.0)).collect()).collect()
    }

    #[test]
    fn hungarian_agrees_with_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=6 {
            for _ in 0..40 {
                let c = random_cost(&mut rng, n, n);
                let (a, _) = hungarian(&c);
                let (b, _) = brute_force_assignment(&c);
                assert!((a - b).abs() < 1e-10, "n={n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn hungarian_known_instance() {
        let c = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let (total, perm) = hungarian(&c);
        assert_eq!(total, 5.0);
        assert_eq!(perm, vec![1, 0, 2]);
    }

    #[test]
    fn transport_with_unit_masses_is_assignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=6 {
            let c = random_cost(&mut rng, n, n);
            let ones = vec![1.0; n];
            let t = transport_cost(&ones, &ones, &c);
            let (b, _) = brute_force_assignment(&c);
            assert!((t - b).abs() < 1e-10, "{t} vs {b}");
        }
    }

    #[test]
    fn transport_splits_mass() {
        // One unit at cost 1 and 2 from two half-unit targets.
        let c = vec![vec![1.0, 2.0]];
        assert!((transport_cost(&[1.0], &[0.5, 0.5], &c) - 1.5).abs() < 1e-15);
        // Cheap route has limited capacity.
        let c = vec![vec![0.0, 5.0], vec![1.0, 1.0]];
        let t = transport_cost(&[0.5, 0.5], &[0.2, 0.8], &c);
        // 0.2 row0->col0 (0), 0.3 row0->col1 (1.5), 0.5 row1->col1 (0.5).
        assert!((t - 2.0).abs() < 1e-12, "{t}");
    }
}
