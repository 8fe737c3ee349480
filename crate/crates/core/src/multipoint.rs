//! Unordered Q-points, the matching metric `G`, and maximal decompositions.

use std::cmp::Ordering;
use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::assignment::min_cost_assignment;
use crate::error::{Error, Result};
use crate::exterior::Matrix22;

/// Default clustering radius for [`maximal_decomposition`].
pub const CLUSTER_TOL: f64 = 1e-9;

/// A point type usable inside a [`QPoint`].
pub trait Point: Copy + Debug + PartialEq {
    fn coords(&self) -> Vec<f64>;
    fn from_coords(c: &[f64]) -> Self;

    fn dist_sq(&self, other: &Self) -> f64 {
        self.coords().iter().zip(other.coords()).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    fn lex_cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.coords().iter().zip(other.coords()) {
            match a.total_cmp(&b) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        Ordering::Equal
    }
}

impl Point for [f64; 2] {
    fn coords(&self) -> Vec<f64> {
        self.to_vec()
    }
    fn from_coords(c: &[f64]) -> Self {
        [c[0], c[1]]
    }
    fn dist_sq(&self, o: &Self) -> f64 {
        (self[0] - o[0]).powi(2) + (self[1] - o[1]).powi(2)
    }
}

/// A value together with a gradient: one sheet of a first-order jet.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jet {
    pub a: [f64; 2],
    pub x: Matrix22,
}

impl Point for Jet {
    fn coords(&self) -> Vec<f64> {
        let e = self.x.entries();
        vec![self.a[0], self.a[1], e[0], e[1], e[2], e[3]]
    }
    fn from_coords(c: &[f64]) -> Self {
        Jet { a: [c[0], c[1]], x: Matrix22::new(c[2], c[3], c[4], c[5]) }
    }
}

/// An unordered multiset of `Q` points, stored sorted so that equality and
/// serialization do not depend on input order.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QPoint<P: Point> {
    points: Vec<P>,
}

pub type QPoint2 = QPoint<[f64; 2]>;
pub type QJet = QPoint<Jet>;

impl<P: Point> QPoint<P> {
    pub fn new(mut points: Vec<P>) -> Self {
        points.sort_by(|a, b| a.lex_cmp(b));
        Self { points }
    }

    /// `Q` copies of one point.
    pub fn repeated(p: P, q: usize) -> Self {
        Self { points: vec![p; q] }
    }

    pub fn q(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[P] {
        &self.points
    }
}

impl<P: Point> PartialEq for QPoint<P> {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points
    }
}

impl QPoint2 {
    /// `Σ [p_i + v]`.
    pub fn translated(&self, v: [f64; 2]) -> Self {
        Self::new(self.points.iter().map(|p| [p[0] + v[0], p[1] + v[1]]).collect())
    }
}

/// `G(p, q)`: square root of the least total squared distance over matchings.
pub fn g_metric<P: Point>(p: &QPoint<P>, q: &QPoint<P>) -> Result<f64> {
    if p.q() != q.q() {
        return Err(Error::CardinalityMismatch { left: p.q(), right: q.q() });
    }
    let cost: Vec<Vec<f64>> = p.points.iter().map(|a| q.points.iter().map(|b| a.dist_sq(b)).collect()).collect();
    Ok(min_cost_assignment(&cost).0.max(0.0).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub q: usize,
    pub a: [f64; 2],
    pub x: Matrix22,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximalDecomposition {
    pub parts: Vec<Part>,
    pub tol: f64,
    /// Set when some pairwise distance lies in `[tol/4, 4·tol]`.
    pub ambiguous: bool,
}

impl MaximalDecomposition {
    /// `Q[(a, X)]` as a single part.
    pub fn single(q: usize, a: [f64; 2], x: Matrix22) -> Self {
        Self { parts: vec![Part { q, a, x }], tol: CLUSTER_TOL, ambiguous: false }
    }

    pub fn q(&self) -> usize {
        self.parts.iter().map(|p| p.q).sum()
    }

    pub fn multiplicities(&self) -> Vec<usize> {
        let mut m: Vec<usize> = self.parts.iter().map(|p| p.q).collect();
        m.sort_unstable();
        m
    }

    pub fn reconstruct(&self) -> QJet {
        QPoint::new(self.parts.iter().flat_map(|p| std::iter::repeat_n(Jet { a: p.a, x: p.x }, p.q)).collect())
    }
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut k = i;
    while parent[k] != r {
        let next = parent[k];
        parent[k] = r;
        k = next;
    }
    r
}

/// Single-linkage clustering of the sheets at radius `tol`; each cluster
/// becomes one part at the mean of its members.
pub fn maximal_decomposition(p: &QJet, tol: f64) -> MaximalDecomposition {
    let pts = p.points();
    let n = pts.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut ambiguous = false;
    for i in 0..n {
        for j in i + 1..n {
            let d = pts[i].dist_sq(&pts[j]).sqrt();
            if d >= tol / 4.0 && d <= 4.0 * tol {
                ambiguous = true;
            }
            if d < tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut parts: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut root_of_part: Vec<usize> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        let idx = match root_of_part.iter().position(|&x| x == r) {
            Some(k) => k,
            None => {
                root_of_part.push(r);
                parts.push((0, vec![0.0; 6]));
                parts.len() - 1
            }
        };
        parts[idx].0 += 1;
        for (s, c) in parts[idx].1.iter_mut().zip(pts[i].coords()) {
            *s += c;
        }
    }
    // Points are sorted, so the part order is already canonical.
    let parts = parts
        .into_iter()
        .map(|(q, sum)| {
            let mean: Vec<f64> = sum.iter().map(|s| s / q as f64).collect();
            let jet = Jet::from_coords(&mean);
            Part { q, a: jet.a, x: jet.x }
        })
        .collect();
    MaximalDecomposition { parts, tol, ambiguous }
}

pub fn same_maximal_multiplicities(a: &MaximalDecomposition, b: &MaximalDecomposition) -> bool {
    a.multiplicities() == b.multiplicities()
}

/// The competitor class of maps on the square `D(center, side)` whose
/// `j`-th part has boundary values `q_j [a_j + X_j (x − center)]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompetitorClassDescriptor {
    pub target: MaximalDecomposition,
    pub center: [f64; 2],
    pub side: f64,
}

impl CompetitorClassDescriptor {
    pub fn new(target: MaximalDecomposition, center: [f64; 2], side: f64) -> Self {
        Self { target, center, side }
    }

    pub fn boundary_value(&self, x: [f64; 2]) -> QPoint2 {
        let rel = [x[0] - self.center[0], x[1] - self.center[1]];
        QPoint::new(
            self.target
                .parts
                .iter()
                .flat_map(|p| {
                    let d = p.x.apply(rel);
                    std::iter::repeat_n([p.a[0] + d[0], p.a[1] + d[1]], p.q)
                })
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::{brute_force_assignment, hungarian};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn translation_distance() {
        let p = QPoint::repeated([0.5, -1.0], 3);
        let q = QPoint::repeated([1.5, 1.0], 3);
        let d = g_metric(&p, &q).unwrap();
        assert!((d - 3f64.sqrt() * 5f64.sqrt()).abs() < 1e-14);
        assert_eq!(g_metric(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn three_point_example() {
        let p = QPoint::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let q = QPoint::repeated([0.0, 0.0], 3);
        let cost: Vec<Vec<f64>> =
            p.points().iter().map(|a| q.points().iter().map(|b| a.dist_sq(b)).collect()).collect();
        let brute = brute_force_assignment(&cost).0.sqrt();
        assert!((brute - 2f64.sqrt()).abs() < 1e-15);
        assert!((g_metric(&p, &q).unwrap() - brute).abs() < 1e-15);
    }

    #[test]
    fn mismatched_cardinality() {
        let p = QPoint::repeated([0.0, 0.0], 2);
        let q = QPoint::repeated([0.0, 0.0], 3);
        assert!(matches!(g_metric(&p, &q), Err(Error::CardinalityMismatch { left: 2, right: 3 })));
    }

    #[test]
    fn order_independence() {
        let a = QPoint::new(vec![[1.0, 2.0], [0.0, 5.0], [1.0, -1.0]]);
        let b = QPoint::new(vec![[1.0, -1.0], [1.0, 2.0], [0.0, 5.0]]);
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a).unwrap(), "[[0.0,5.0],[1.0,-1.0],[1.0,2.0]]");
    }

    #[test]
    fn hungarian_on_larger_qpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = |rng: &mut ChaCha8Rng| -> Vec<[f64; 2]> {
            (0..9).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect()
        };
        let p = QPoint::new(pts(&mut rng));
        let q = QPoint::new(pts(&mut rng));
        let cost: Vec<Vec<f64>> =
            p.points().iter().map(|a| q.points().iter().map(|b| a.dist_sq(b)).collect()).collect();
        let via_hungarian = hungarian(&cost).0.sqrt();
        assert!((g_metric(&p, &q).unwrap() - via_hungarian).abs() < 1e-14);
    }

    #[test]
    fn decomposition_cases() {
        let x = Matrix22::new(1.0, 2.0, 3.0, 4.0);
        let single = maximal_decomposition(&QPoint::repeated(Jet { a: [0.3, 0.1], x }, 4), 1e-9);
        assert_eq!(single.parts, vec![Part { q: 4, a: [0.3, 0.1], x }]);
        assert!(!single.ambiguous);

        let two = QPoint::new(vec![Jet { a: [0.0, 0.0], x: Matrix22::ZERO }, Jet { a: [1.0, 0.0], x: Matrix22::ZERO }]);
        assert_eq!(maximal_decomposition(&two, 1e-6).multiplicities(), vec![1, 1]);
    }

    #[test]
    fn distinct_values_versus_full_multiplicity() {
        let q = 3;
        let distinct = QPoint::new((0..q).map(|k| Jet { a: [k as f64, 0.0], x: Matrix22::ZERO }).collect());
        let md = maximal_decomposition(&distinct, CLUSTER_TOL);
        assert_eq!(md.parts.len(), q);
        let full = MaximalDecomposition::single(q, [0.0, 0.0], Matrix22::ZERO);
        assert!(!same_maximal_multiplicities(&md, &full));
    }

    #[test]
    fn ambiguity_flag() {
        let p = QPoint::new(vec![Jet { a: [0.0, 0.0], x: Matrix22::ZERO }, Jet { a: [2e-9, 0.0], x: Matrix22::ZERO }]);
        assert!(maximal_decomposition(&p, 1e-9).ambiguous);
    }

    #[test]
    fn competitor_boundary_values() {
        let md = MaximalDecomposition::single(2, [1.0, 0.0], Matrix22::IDENTITY);
        let desc = CompetitorClassDescriptor::new(md, [0.5, 0.5], 1.0);
        let v = desc.boundary_value([1.0, 0.5]);
        assert_eq!(v, QPoint::repeated([1.5, 0.0], 2));
    }
}
