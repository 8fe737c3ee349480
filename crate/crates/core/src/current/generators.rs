//! Families of Q-graphs used by the test harnesses.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exterior::{Matrix22, Vec4};

use super::{Cell, FunctionalQGraph, MeshSpec, Sheet, Triangle, TriangulatedCurrent};

/// `Σ_j q_j [a_j + X_j (x − center)]` on the mesh.
pub fn affine_graph(mesh: MeshSpec, parts: &[(u32, [f64; 2], Matrix22)]) -> Result<FunctionalQGraph> {
    let q = parts.iter().map(|p| p.0 as usize).sum();
    let sheets_at = |c: [f64; 2]| -> Vec<Sheet> {
        parts
            .iter()
            .map(|&(multiplicity, a, x)| {
                let d = x.apply([c[0] - mesh.center[0], c[1] - mesh.center[1]]);
                Sheet { multiplicity, a: [a[0] + d[0], a[1] + d[1]], x }
            })
            .collect()
    };
    let cells = (0..mesh.n * mesh.n)
        .map(|k| {
            let s = sheets_at(mesh.cell_center(k % mesh.n, k / mesh.n));
            Cell { lower: s.clone(), upper: s }
        })
        .collect();
    FunctionalQGraph::new(mesh, q, cells)
}

fn node_grid(mesh: &MeshSpec, f: impl Fn(usize, usize) -> [f64; 2]) -> Vec<[f64; 2]> {
    let n = mesh.n;
    (0..(n + 1) * (n + 1))
        .map(|k| {
            let (i, j) = (k % (n + 1), k / (n + 1));
            if mesh.is_boundary_node(i, j) {
                [0.0, 0.0]
            } else {
                f(i, j)
            }
        })
        .collect()
}

/// `Q` superposed sheets, each a random sine series vanishing on the
/// boundary of the unit square, interpolated on an `n × n` mesh and scaled
/// so that the largest sheet gradient has operator norm `lipschitz`.
pub fn random_lipschitz_graph(seed: u64, lipschitz: f64, q: usize, n: usize) -> Result<FunctionalQGraph> {
    let mesh = MeshSpec::unit(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const MODES: usize = 3;
    let mut sheets: Vec<(u32, Vec<[f64; 2]>)> = Vec::with_capacity(q);
    for _ in 0..q {
        let coeffs: Vec<[f64; 2]> = (0..MODES * MODES)
            .map(|m| {
                let (m1, m2) = ((m % MODES + 1) as f64, (m / MODES + 1) as f64);
                let decay = 1.0 / (m1 * m1 + m2 * m2);
                [rng.gen_range(-1.0..1.0) * decay, rng.gen_range(-1.0..1.0) * decay]
            })
            .collect();
        let values = node_grid(&mesh, |i, j| {
            let x = mesh.node(i, j);
            let (u, v) = (x[0] + 0.5, x[1] + 0.5);
            let mut out = [0.0, 0.0];
            for (m, c) in coeffs.iter().enumerate() {
                let (m1, m2) = ((m % MODES + 1) as f64, (m / MODES + 1) as f64);
                let s = (PI * m1 * u).sin() * (PI * m2 * v).sin();
                out[0] += c[0] * s;
                out[1] += c[1] * s;
            }
            out
        });
        sheets.push((1, values));
    }
    let raw = FunctionalQGraph::from_node_values(mesh, &sheets)?;
    let current = raw.max_gradient_norm();
    if current == 0.0 {
        return Ok(raw);
    }
    let s = lipschitz / current;
    for (_, values) in sheets.iter_mut() {
        for v in values.iter_mut() {
            *v = [v[0] * s, v[1] * s];
        }
    }
    FunctionalQGraph::from_node_values(mesh, &sheets)
}

/// A region where a sheet is exactly affine with a prescribed gradient:
/// `Y (x − center)` on the square of half-width `inner`, cut off linearly
/// (in the max-norm) to zero at half-width `outer`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub gradient: Matrix22,
    pub center: [f64; 2],
    pub inner: f64,
    pub outer: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub n: usize,
    /// Patches of each sheet (one sheet per entry, multiplicity 1).
    pub sheets: Vec<Vec<Patch>>,
}

/// Zero-boundary superposition of sheets made of exact affine patches.
pub fn patch_graph(spec: &PatchSpec) -> Result<FunctionalQGraph> {
    let mesh = MeshSpec::unit(spec.n);
    let sheets: Vec<(u32, Vec<[f64; 2]>)> = spec
        .sheets
        .iter()
        .map(|patches| {
            let values = node_grid(&mesh, |i, j| {
                let x = mesh.node(i, j);
                let mut out = [0.0, 0.0];
                for p in patches {
                    let d = [x[0] - p.center[0], x[1] - p.center[1]];
                    let r = d[0].abs().max(d[1].abs());
                    let cut = ((p.outer - r) / (p.outer - p.inner)).clamp(0.0, 1.0);
                    if cut > 0.0 {
                        let y = p.gradient.apply(d);
                        out[0] += cut * y[0];
                        out[1] += cut * y[1];
                    }
                }
                out
            });
            (1, values)
        })
        .collect();
    FunctionalQGraph::from_node_values(mesh, &sheets)
}

/// Parameters of the `q`-valued map
/// `z ↦ Σ_{w^q = z} [α (1 − |z|/R) w^p]` on the disk of radius `R`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchedSpec {
    pub q: usize,
    pub p: usize,
    pub amplitude: f64,
    pub radius: f64,
    pub rings: usize,
    pub sectors: usize,
}

impl BranchedSpec {
    pub fn new(q: usize, amplitude: f64, radius: f64) -> Self {
        Self { q, p: q + 1, amplitude, radius, rings: 16, sectors: 48 }
    }

    /// Value on the `q`-fold cover at radius `rho` and cover angle `phi ∈ [0, 2πq)`.
    pub fn value(&self, rho: f64, phi: f64) -> [f64; 2] {
        let qf = self.q as f64;
        let modulus = self.amplitude * (1.0 - rho / self.radius) * rho.powf(self.p as f64 / qf);
        let arg = self.p as f64 * phi / qf;
        [modulus * arg.cos(), modulus * arg.sin()]
    }
}

#[derive(Clone, Debug)]
pub struct BranchedCurrent {
    pub current: TriangulatedCurrent,
    /// Boundary polygon, counterclockwise.
    pub polygon: Vec<[f64; 2]>,
    pub spec: BranchedSpec,
}

impl BranchedCurrent {
    /// Area of the polygonal base domain.
    pub fn domain_area(&self) -> f64 {
        let n = self.polygon.len();
        0.5 * (0..n)
            .map(|k| {
                let (a, b) = (self.polygon[k], self.polygon[(k + 1) % n]);
                a[0] * b[1] - a[1] * b[0]
            })
            .sum::<f64>()
    }
}

/// Polar triangulation of the branched graph over the `q`-fold cover of the disk.
pub fn branched_graph(spec: BranchedSpec) -> Result<BranchedCurrent> {
    let (rings, sectors, q) = (spec.rings, spec.sectors, spec.q);
    let cover = q * sectors;
    let dphi = TAU / sectors as f64;
    let mut vertices: Vec<Vec4> = vec![[0.0; 4]];
    // index[i][k] for ring i = 1..=rings and cover index k.
    let mut index = vec![vec![0usize; cover]; rings + 1];
    for i in 1..=rings {
        let rho = spec.radius * i as f64 / rings as f64;
        for k in 0..cover {
            if i == rings && k >= sectors {
                index[i][k] = index[i][k % sectors];
                continue;
            }
            let phi = k as f64 * dphi;
            let y = if i == rings { [0.0, 0.0] } else { spec.value(rho, phi) };
            vertices.push([rho * phi.cos(), rho * phi.sin(), y[0], y[1]]);
            index[i][k] = vertices.len() - 1;
        }
    }
    let mut triangles = Vec::with_capacity(cover * (2 * rings - 1));
    for k in 0..cover {
        let k1 = (k + 1) % cover;
        triangles.push(Triangle([0, index[1][k], index[1][k1]], 1));
        for i in 1..rings {
            triangles.push(Triangle([index[i][k], index[i + 1][k], index[i + 1][k1]], 1));
            triangles.push(Triangle([index[i][k], index[i + 1][k1], index[i][k1]], 1));
        }
    }
    let polygon = (0..sectors)
        .map(|k| {
            let phi = k as f64 * dphi;
            [spec.radius * phi.cos(), spec.radius * phi.sin()]
        })
        .collect();
    Ok(BranchedCurrent { current: TriangulatedCurrent::new(vertices, triangles)?, polygon, spec })
}
