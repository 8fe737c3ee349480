//! Exterior algebra on `Λ²R⁴`.
//!
//! Coordinates are always taken in the ordered basis
//!
//! ```text
//! (e12, e13, e14, e23, e24, e34)
//! ```
//!
//! with `(u ∧ v)_ij = u_i v_j - u_j v_i`. The graph lift of a 2×2 matrix `X`
//! (the wedge of the columns of `(I; X)`) then reads
//!
//! ```text
//! lambda_m(X) = e12 + X12·e13 + X22·e14 - X11·e23 - X21·e24 + det X·e34
//! ```
//!
//! while [`ad`] lists the minors as `(X11, X12, X21, X22, det X)`. The two
//! are related coordinate-by-coordinate through [`minors_from_lift`].

use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec4 = [f64; 4];

/// Default relative tolerance of [`is_simple`].
pub const SIMPLE_TOL: f64 = 1e-10;

/// Orthonormality tolerance for plane bases.
pub const BASIS_TOL: f64 = 1e-12;

/// An element of `Λ²R⁴`, serialized as a JSON array of 6 numbers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiVector2(pub [f64; 6]);

/// Index pairs of the basis, in storage order.
pub const BASIS_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

impl MultiVector2 {
    pub const ZERO: Self = Self([0.0; 6]);
    pub const E12: Self = Self([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    pub const E13: Self = Self([0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    pub const E14: Self = Self([0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    pub const E23: Self = Self([0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    pub const E24: Self = Self([0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    pub const E34: Self = Self([0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);

    pub fn coeffs(&self) -> &[f64; 6] {
        &self.0
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        (*self - *other).norm()
    }

    /// `p12 p34 - p13 p24 + p14 p23`; vanishes exactly on simple 2-vectors.
    pub fn plucker(&self) -> f64 {
        let p = &self.0;
        p[0] * p[5] - p[1] * p[4] + p[2] * p[3]
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| *self * (1.0 / n))
    }

    /// Angle in `[0, π]` between the two directions, stable for small angles.
    pub fn angle_to(&self, other: &Self) -> f64 {
        match (self.normalized(), other.normalized()) {
            (Some(a), Some(b)) => {
                let chord = a.distance(&b);
                2.0 * (0.5 * chord).min(1.0).asin()
            }
            _ => std::f64::consts::FRAC_PI_2,
        }
    }

    /// Entry of the antisymmetric 4×4 matrix with `A_ij = p_ij`.
    fn antisym(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b, sign) = if i < j { (i, j, 1.0) } else { (j, i, -1.0) };
        let k = BASIS_PAIRS.iter().position(|&pair| pair == (a, b)).unwrap();
        sign * self.0[k]
    }
}

impl Add for MultiVector2 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self(std::array::from_fn(|k| self.0[k] + rhs.0[k]))
    }
}

impl AddAssign for MultiVector2 {
    fn add_assign(&mut self, rhs: Self) {
        for k in 0..6 {
            self.0[k] += rhs.0[k];
        }
    }
}

impl Sub for MultiVector2 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self(std::array::from_fn(|k| self.0[k] - rhs.0[k]))
    }
}

impl Neg for MultiVector2 {
    type Output = Self;
    fn neg(self) -> Self {
        Self(self.0.map(|c| -c))
    }
}

impl Mul<f64> for MultiVector2 {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self(self.0.map(|c| c * s))
    }
}

impl Index<usize> for MultiVector2 {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

impl std::iter::Sum for MultiVector2 {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |acc, v| acc + v)
    }
}

pub fn wedge(u: &Vec4, v: &Vec4) -> MultiVector2 {
    MultiVector2(BASIS_PAIRS.map(|(i, j)| u[i] * v[j] - u[j] * v[i]))
}

pub fn dot4(u: &Vec4, v: &Vec4) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm4(u: &Vec4) -> f64 {
    dot4(u, u).sqrt()
}

/// True iff `|Pl(v)| <= tol·(1 + |v|²)`.
pub fn is_simple(v: &MultiVector2, tol: f64) -> bool {
    v.plucker().abs() <= tol * (1.0 + v.norm_sq())
}

/// A real 2×2 matrix, stored row-major: `m[row][col]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Matrix22(pub [[f64; 2]; 2]);

impl Matrix22 {
    pub const ZERO: Self = Self([[0.0; 2]; 2]);
    pub const IDENTITY: Self = Self([[1.0, 0.0], [0.0, 1.0]]);

    pub fn new(x11: f64, x12: f64, x21: f64, x22: f64) -> Self {
        Self([[x11, x12], [x21, x22]])
    }

    pub fn diag(a: f64, b: f64) -> Self {
        Self::new(a, 0.0, 0.0, b)
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.0.iter().flatten().map(|x| x * x).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    pub fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        let m = &self.0;
        [m[0][0] * x[0] + m[0][1] * x[1], m[1][0] * x[0] + m[1][1] * x[1]]
    }

    pub fn entries(&self) -> [f64; 4] {
        let m = &self.0;
        [m[0][0], m[0][1], m[1][0], m[1][1]]
    }

    pub fn from_entries(e: [f64; 4]) -> Self {
        Self::new(e[0], e[1], e[2], e[3])
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|row| row.map(|x| x * s)))
    }

    /// Largest and smallest singular value.
    pub fn singular_values(&self) -> (f64, f64) {
        singular_values_2x2(&self.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }
}

impl Add for Matrix22 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::from_entries(std::array::from_fn(|k| self.entries()[k] + rhs.entries()[k]))
    }
}

impl Sub for Matrix22 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::from_entries(std::array::from_fn(|k| self.entries()[k] - rhs.entries()[k]))
    }
}

/// Wedge of the columns of `(I; X)`: the unit-`e12` tangent of the graph of `x ↦ Xx`.
pub fn lambda_m(x: &Matrix22) -> MultiVector2 {
    let m = &x.0;
    MultiVector2([1.0, m[0][1], m[1][1], -m[0][0], -m[1][0], x.det()])
}

/// Minors `(X11, X12, X21, X22, det X)`.
pub fn ad(x: &Matrix22) -> [f64; 5] {
    let m = &x.0;
    [m[0][0], m[0][1], m[1][0], m[1][1], x.det()]
}

/// Reads `ad(X)` off the non-`e12` coordinates of `lambda_m(X)`:
/// `(−p23, p13, −p24, p14, p34)`.
pub fn minors_from_lift(v: &MultiVector2) -> [f64; 5] {
    let p = &v.0;
    [-p[3], p[1], -p[4], p[2], p[5]]
}

/// Solves `lambda_m(X) ∥ v` for a 2-vector with nonzero `e12` coordinate.
/// Returns `(X, c)` with `v = c·lambda_m(X)`; the `e34` consistency is not
/// checked here.
pub fn lift_matrix(v: &MultiVector2) -> Result<(Matrix22, f64)> {
    let c = v.0[0];
    if c.abs() <= f64::EPSILON * v.norm() || !c.is_finite() {
        return Err(Error::Degenerate("2-vector has no e12 component".into()));
    }
    let m = minors_from_lift(&(*v * (1.0 / c)));
    Ok((Matrix22::new(m[0], m[1], m[2], m[3]), c))
}

/// Action of `Λ²L` on a 2-vector, `L` given row-major.
pub fn push_bivector(l: &[[f64; 4]; 4], v: &MultiVector2) -> MultiVector2 {
    let col = |k: usize| -> Vec4 { std::array::from_fn(|i| l[i][k]) };
    BASIS_PAIRS.iter().zip(v.0.iter()).map(|(&(i, j), &p)| wedge(&col(i), &col(j)) * p).sum()
}

/// Singular values `(σmax, σmin)` of a 2×2 matrix.
pub fn singular_values_2x2(m: &[[f64; 2]; 2]) -> (f64, f64) {
    let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
    let s = (a + d).hypot(b - c);
    let t = (a - d).hypot(b + c);
    (0.5 * (s + t), 0.5 * (s - t).abs())
}

/// An oriented 2-plane through the origin of `R⁴`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedPlane {
    basis: [Vec4; 2],
    vector: MultiVector2,
}

fn orthonormality_defect(b: &[Vec4; 2]) -> f64 {
    let d11 = (dot4(&b[0], &b[0]) - 1.0).abs();
    let d22 = (dot4(&b[1], &b[1]) - 1.0).abs();
    let d12 = dot4(&b[0], &b[1]).abs();
    d11.max(d22).max(d12)
}

impl OrientedPlane {
    /// Accepts a basis that is already orthonormal to [`BASIS_TOL`].
    pub fn from_orthonormal(b1: Vec4, b2: Vec4) -> Result<Self> {
        let basis = [b1, b2];
        let defect = orthonormality_defect(&basis);
        if !(defect <= BASIS_TOL) {
            return Err(Error::NonOrthonormalBasis { defect });
        }
        Ok(Self { basis, vector: wedge(&b1, &b2) })
    }

    /// Oriented span of two independent vectors (Gram–Schmidt).
    pub fn span(u: &Vec4, v: &Vec4) -> Result<Self> {
        let nu = norm4(u);
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::Degenerate("zero spanning vector".into()));
        }
        let b1 = u.map(|x| x / nu);
        let proj = dot4(&b1, v);
        let w: Vec4 = std::array::from_fn(|i| v[i] - proj * b1[i]);
        let nw = norm4(&w);
        if !(nw > 1e-14 * norm4(v).max(1.0)) {
            return Err(Error::Degenerate("spanning vectors are parallel".into()));
        }
        Self::from_orthonormal(b1, w.map(|x| x / nw))
    }

    /// Plane of a nonzero simple 2-vector, oriented so that its unit vector
    /// is a positive multiple of `v`.
    pub fn from_simple(v: &MultiVector2) -> Result<Self> {
        if !is_simple(v, SIMPLE_TOL) {
            return Err(Error::NotSimple { defect: v.plucker().abs() });
        }
        let s = v.norm();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Degenerate("zero 2-vector".into()));
        }
        // Columns of the antisymmetric matrix span the plane, and
        // `-A b / |v|` rotates a unit `b` in the plane by a positive quarter turn.
        let column = |k: usize| -> Vec4 { std::array::from_fn(|i| v.antisym(i, k)) };
        let k = (0..4).max_by(|&a, &b| norm4(&column(a)).total_cmp(&norm4(&column(b)))).unwrap();
        let c = column(k);
        let b1 = c.map(|x| x / norm4(&c));
        let turned: Vec4 = std::array::from_fn(|i| -(0..4).map(|j| v.antisym(i, j) * b1[j]).sum::<f64>() / s);
        let plane = Self::span(&b1, &turned)?;
        debug_assert!(plane.vector.dot(v) > 0.0);
        Ok(plane)
    }

    pub fn basis(&self) -> &[Vec4; 2] {
        &self.basis
    }

    /// The unit simple 2-vector `b1 ∧ b2`.
    pub fn vector(&self) -> MultiVector2 {
        self.vector
    }

    /// Same oriented plane with the basis rotated by `theta` inside it.
    pub fn rotated(&self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let [b1, b2] = self.basis;
        let n1: Vec4 = std::array::from_fn(|i| c * b1[i] + s * b2[i]);
        let n2: Vec4 = std::array::from_fn(|i| -s * b1[i] + c * b2[i]);
        Self { basis: [n1, n2], vector: wedge(&n1, &n2) }
    }
}

/// Principal angles `0 <= θ1 <= θ2 <= π/2` between the spans of two bases.
pub fn principal_angles_of_bases(a: &[Vec4; 2], b: &[Vec4; 2]) -> Result<(f64, f64)> {
    for basis in [a, b] {
        let defect = orthonormality_defect(basis);
        if !(defect <= BASIS_TOL) {
            return Err(Error::NonOrthonormalBasis { defect });
        }
    }
    let m = [[dot4(&a[0], &b[0]), dot4(&a[0], &b[1])], [dot4(&a[1], &b[0]), dot4(&a[1], &b[1])]];
    let (smax, smin) = singular_values_2x2(&m);
    Ok((smax.min(1.0).acos(), smin.min(1.0).acos()))
}

pub fn principal_angles(v: &OrientedPlane, w: &OrientedPlane) -> Result<(f64, f64)> {
    principal_angles_of_bases(&v.basis, &w.basis)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlaneClass {
    Horizontal,
    Vertical,
    Mixed,
}

/// Whether the singular-value thresholds are closed (`>=`) or open (`>`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Closure {
    Closed,
    Open,
}

/// Orientation sign and smallest singular value of the projections of the
/// plane onto the `e12`-plane and onto the `e43`-plane.
fn projection_data(p: &OrientedPlane) -> [(f64, f64); 2] {
    let [b1, b2] = p.basis;
    let h = [[b1[0], b2[0]], [b1[1], b2[1]]];
    let v = [[b1[3], b2[3]], [b1[2], b2[2]]];
    [h, v].map(|m| {
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        (det, singular_values_2x2(&m).1)
    })
}

/// Closed classification. Horizontal is tested before vertical; both can only
/// hold simultaneously when `ε >= √2 − 1`.
pub fn classify_plane(p: &OrientedPlane, eps: f64) -> PlaneClass {
    classify_plane_with(p, eps, Closure::Closed)
}

pub fn classify_plane_with(p: &OrientedPlane, eps: f64, closure: Closure) -> PlaneClass {
    let threshold = 1.0 / (1.0 + eps);
    let passes = |(det, smin): (f64, f64)| {
        det > 0.0
            && match closure {
                Closure::Closed => smin >= threshold,
                Closure::Open => smin > threshold,
            }
    };
    let [h, v] = projection_data(p);
    if passes(h) {
        PlaneClass::Horizontal
    } else if passes(v) {
        PlaneClass::Vertical
    } else {
        PlaneClass::Mixed
    }
}

pub fn classify_bivector(v: &MultiVector2, eps: f64) -> Result<PlaneClass> {
    Ok(classify_plane(&OrientedPlane::from_simple(v)?, eps))
}

/// Sufficient scalar test for horizontality: `<v, e12> >= |v|/(1+ε)`.
pub fn scalar_horizontal_test(v: &MultiVector2, eps: f64) -> bool {
    v.0[0] >= v.norm() / (1.0 + eps)
}

/// Sufficient scalar test for verticality: `<v, e43> >= |v|/(1+ε)`.
pub fn scalar_vertical_test(v: &MultiVector2, eps: f64) -> bool {
    -v.0[5] >= v.norm() / (1.0 + eps)
}
