//! Triangulated integral 2-currents in `R⁴` and piecewise-affine Q-graphs.

mod chain;
mod generators;
mod graph;
mod sphere;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::{classify_plane, dot4, push_bivector, wedge, MultiVector2, OrientedPlane, PlaneClass, Vec4};
use crate::measures::GrassmannMeasure;

pub use chain::{exact_atom_masses, lower_bound_ratio, ChainCheck};
pub use generators::{
    affine_graph, branched_graph, patch_graph, random_lipschitz_graph, BranchedCurrent, BranchedSpec, Patch, PatchSpec,
};
pub use graph::{Cell, FunctionalQGraph, MeshSpec, Sheet};

/// Triangles with smaller area are rejected.
pub const MIN_AREA: f64 = 1e-14;

/// Vertex indices in orientation order, and the integer multiplicity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triangle(pub [usize; 3], pub u32);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriangulatedCurrent {
    vertices: Vec<Vec4>,
    triangles: Vec<Triangle>,
}

/// Signed edge counts keyed by `(min index, max index)`; the sign refers to
/// the orientation `min → max`.
pub type EdgeChain = BTreeMap<(usize, usize), i64>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PartitionMasses {
    pub m_h: f64,
    pub m_v: f64,
    pub m_m: f64,
    pub eps: f64,
}

impl PartitionMasses {
    pub fn total(&self) -> f64 {
        self.m_h + self.m_v + self.m_m
    }

    /// `m_M / m_V`, infinite when there is no vertical mass.
    pub fn ratio(&self) -> f64 {
        if self.m_v > 0.0 {
            self.m_m / self.m_v
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Clone, Debug)]
pub struct Partition {
    pub masses: PartitionMasses,
    pub horizontal: TriangulatedCurrent,
    pub vertical: TriangulatedCurrent,
    pub mixed: TriangulatedCurrent,
}

fn sub(a: &Vec4, b: &Vec4) -> Vec4 {
    std::array::from_fn(|i| a[i] - b[i])
}

impl TriangulatedCurrent {
    pub fn new(vertices: Vec<Vec4>, triangles: Vec<Triangle>) -> Result<Self> {
        let mut problems = Vec::new();
        for (k, t) in triangles.iter().enumerate() {
            if t.0.iter().any(|&i| i >= vertices.len()) {
                problems.push(format!("triangle {k} references a missing vertex"));
            } else if t.1 == 0 {
                problems.push(format!("triangle {k} has multiplicity 0"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::InvalidGraph(problems));
        }
        let current = Self { vertices, triangles };
        for k in 0..current.triangles.len() {
            let area = current.area(k);
            if !(area > MIN_AREA) {
                problems.push(format!("triangle {k} is degenerate (area {area:.3e})"));
            }
        }
        if problems.is_empty() {
            Ok(current)
        } else {
            Err(Error::InvalidGraph(problems))
        }
    }

    pub fn empty() -> Self {
        Self { vertices: Vec::new(), triangles: Vec::new() }
    }

    pub fn vertices(&self) -> &[Vec4] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn corners(&self, k: usize) -> [Vec4; 3] {
        self.triangles[k].0.map(|i| self.vertices[i])
    }

    /// `½ (b − a) ∧ (c − a)`, whose norm is the area.
    pub fn area_vector(&self, k: usize) -> MultiVector2 {
        let [a, b, c] = self.corners(k);
        wedge(&sub(&b, &a), &sub(&c, &a)) * 0.5
    }

    pub fn area(&self, k: usize) -> f64 {
        self.area_vector(k).norm()
    }

    /// Unit simple tangent 2-vector of triangle `k`.
    pub fn tangent(&self, k: usize) -> MultiVector2 {
        self.area_vector(k).normalized().expect("non-degenerate triangle")
    }

    pub fn mass(&self) -> f64 {
        (0..self.triangles.len()).map(|k| self.triangles[k].1 as f64 * self.area(k)).sum()
    }

    /// `Σ θ·area·Φ(ω)` for an integrand `Φ` on unit 2-vectors.
    pub fn anisotropic_mass(&self, integrand: impl Fn(&MultiVector2) -> f64) -> f64 {
        (0..self.triangles.len())
            .map(|k| {
                let a = self.area_vector(k);
                let area = a.norm();
                self.triangles[k].1 as f64 * area * integrand(&(a * (1.0 / area)))
            })
            .sum()
    }

    pub fn boundary(&self) -> EdgeChain {
        let mut chain = EdgeChain::new();
        for Triangle(v, m) in &self.triangles {
            for (a, b) in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])] {
                let (key, sign) = if a < b { ((a, b), 1) } else { ((b, a), -1) };
                *chain.entry(key).or_insert(0) += sign * *m as i64;
            }
        }
        chain.retain(|_, c| *c != 0);
        chain
    }

    /// Index of a vertex within `tol` of `p`, if any.
    pub fn find_vertex(&self, p: &Vec4, tol: f64) -> Option<usize> {
        self.vertices.iter().position(|v| {
            let d = sub(v, p);
            dot4(&d, &d).sqrt() <= tol
        })
    }

    /// Whether the boundary equals `q` times the closed polygon (listed
    /// counterclockwise) lying in the `e12`-plane at height 0.
    pub fn has_flat_polygon_boundary(&self, polygon: &[[f64; 2]], q: u32) -> bool {
        let mut expected = EdgeChain::new();
        let mut ids = Vec::with_capacity(polygon.len());
        for p in polygon {
            match self.find_vertex(&[p[0], p[1], 0.0, 0.0], 1e-12) {
                Some(i) => ids.push(i),
                None => return false,
            }
        }
        for k in 0..ids.len() {
            let (a, b) = (ids[k], ids[(k + 1) % ids.len()]);
            let (key, sign) = if a < b { ((a, b), 1) } else { ((b, a), -1) };
            *expected.entry(key).or_insert(0) += sign * q as i64;
        }
        expected.retain(|_, c| *c != 0);
        self.boundary() == expected
    }

    /// One atom per triangle at its unit tangent with weight `θ·area`;
    /// coinciding tangents are merged.
    pub fn gaussian_image(&self) -> GrassmannMeasure {
        let atoms = (0..self.triangles.len())
            .map(|k| {
                let a = self.area_vector(k);
                let area = a.norm();
                (a * (1.0 / area), self.triangles[k].1 as f64 * area)
            })
            .collect::<Vec<_>>();
        GrassmannMeasure::merged_from_atoms(atoms)
    }

    pub fn classify(&self, k: usize, eps: f64) -> PlaneClass {
        let plane = OrientedPlane::from_simple(&self.area_vector(k)).expect("triangle tangent");
        classify_plane(&plane, eps)
    }

    fn select(&self, keep: impl Fn(usize) -> bool) -> Self {
        let triangles = (0..self.triangles.len()).filter(|&k| keep(k)).map(|k| self.triangles[k]).collect();
        Self { vertices: self.vertices.clone(), triangles }
    }

    pub fn partition(&self, eps: f64) -> Partition {
        let classes: Vec<PlaneClass> = (0..self.triangles.len()).map(|k| self.classify(k, eps)).collect();
        let mut masses = PartitionMasses { eps, ..Default::default() };
        for (k, class) in classes.iter().enumerate() {
            let m = self.triangles[k].1 as f64 * self.area(k);
            match class {
                PlaneClass::Horizontal => masses.m_h += m,
                PlaneClass::Vertical => masses.m_v += m,
                PlaneClass::Mixed => masses.m_m += m,
            }
        }
        Partition {
            masses,
            horizontal: self.select(|k| classes[k] == PlaneClass::Horizontal),
            vertical: self.select(|k| classes[k] == PlaneClass::Vertical),
            mixed: self.select(|k| classes[k] == PlaneClass::Mixed),
        }
    }

    /// Mass of the projection onto the `e12`-plane, counted without
    /// cancellation: `Σ θ·|<area vector, e12>|`. For a current whose tangents
    /// all have positive `e12` component this is the mass of `(P_H)♯T`.
    pub fn horizontal_projection_mass(&self) -> f64 {
        (0..self.triangles.len()).map(|k| self.triangles[k].1 as f64 * self.area_vector(k)[0].abs()).sum()
    }

    pub fn pushforward_linear(&self, l: &[[f64; 4]; 4]) -> Result<Self> {
        let m = nalgebra::Matrix4::from_fn(|i, j| l[i][j]);
        let det = m.determinant();
        let scale = m.norm().powi(4).max(f64::MIN_POSITIVE);
        if !(det.abs() > 1e-14 * scale) {
            return Err(Error::SingularMap { det });
        }
        let vertices = self.vertices.iter().map(|v| std::array::from_fn(|i| dot4(&l[i], v))).collect();
        Self::new(vertices, self.triangles.clone())
    }

    /// Sum over triangles of `θ·length(triangle ∩ ∂B_ρ(p))`.
    pub fn slice_mass(&self, p: &Vec4, rho: f64) -> f64 {
        (0..self.triangles.len())
            .map(|k| self.triangles[k].1 as f64 * sphere::arc_length_in_triangle(&self.corners(k), p, rho))
            .sum()
    }

    /// Mass of `T ⌞ B_ρ(p)`, exact per triangle.
    pub fn mass_in_ball(&self, p: &Vec4, rho: f64) -> f64 {
        (0..self.triangles.len())
            .map(|k| self.triangles[k].1 as f64 * sphere::area_in_ball(&self.corners(k), p, rho))
            .sum()
    }

    /// Same current with the vertices glued to those of `other` appended.
    pub fn union(&self, other: &Self) -> Self {
        let offset = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut triangles = self.triangles.clone();
        triangles.extend(other.triangles.iter().map(|Triangle(v, m)| Triangle(v.map(|i| i + offset), *m)));
        Self { vertices, triangles }
    }
}

/// `|Λ²L ω|` for a unit simple `ω`: the area factor of `L` on the plane of `ω`.
pub fn tangential_jacobian(l: &[[f64; 4]; 4], omega: &MultiVector2) -> f64 {
    push_bivector(l, omega).norm() / omega.norm()
}

#[cfg(test)]
mod tests;
