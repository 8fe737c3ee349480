//! Piecewise-affine Q-valued maps on a uniformly triangulated square.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::{Matrix22, Vec4};
use crate::multipoint::{g_metric, QPoint, QPoint2};

use super::{Triangle, TriangulatedCurrent};

/// Tolerance for continuity across edges and for vertex welding.
pub const CONTINUITY_TOL: f64 = 1e-9;

/// The square `D(center, side)` cut into `n × n` cells; each cell is split
/// along the diagonal from its lower-left to its upper-right corner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub center: [f64; 2],
    pub side: f64,
    pub n: usize,
}

impl MeshSpec {
    /// The unit square centered at the origin.
    pub fn unit(n: usize) -> Self {
        Self { center: [0.0, 0.0], side: 1.0, n }
    }

    pub fn h(&self) -> f64 {
        self.side / self.n as f64
    }

    pub fn area(&self) -> f64 {
        self.side * self.side
    }

    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.h();
        let o = 0.5 * self.side;
        [self.center[0] - o + i as f64 * h, self.center[1] - o + j as f64 * h]
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        let p = self.node(i, j);
        let h = self.h();
        [p[0] + 0.5 * h, p[1] + 0.5 * h]
    }

    /// Node indices of the lower (`upper = false`) or upper half of cell `(i, j)`,
    /// counterclockwise.
    pub fn half_nodes(&self, i: usize, j: usize, upper: bool) -> [(usize, usize); 3] {
        if upper {
            [(i, j), (i + 1, j + 1), (i, j + 1)]
        } else {
            [(i, j), (i + 1, j), (i + 1, j + 1)]
        }
    }

    /// Boundary nodes, counterclockwise from the lower-left corner.
    pub fn boundary_nodes(&self) -> Vec<(usize, usize)> {
        let n = self.n;
        let mut out = Vec::with_capacity(4 * n);
        out.extend((0..n).map(|i| (i, 0)));
        out.extend((0..n).map(|j| (n, j)));
        out.extend((1..=n).rev().map(|i| (i, n)));
        out.extend((1..=n).rev().map(|j| (0, j)));
        out
    }

    pub fn is_boundary_node(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.n || j == self.n
    }

    /// Cell and half containing `x` (points outside are clamped to the square).
    pub fn locate(&self, x: [f64; 2]) -> (usize, usize, bool) {
        let o = self.node(0, 0);
        let h = self.h();
        let fx = ((x[0] - o[0]) / h).clamp(0.0, self.n as f64);
        let fy = ((x[1] - o[1]) / h).clamp(0.0, self.n as f64);
        let i = (fx.floor() as usize).min(self.n - 1);
        let j = (fy.floor() as usize).min(self.n - 1);
        let upper = fy - j as f64 > fx - i as f64;
        (i, j, upper)
    }
}

/// `multiplicity` copies of `x ↦ a + X (x − cell center)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sheet {
    pub multiplicity: u32,
    pub a: [f64; 2],
    pub x: Matrix22,
}

impl Sheet {
    pub fn value(&self, x: [f64; 2], cell_center: [f64; 2]) -> [f64; 2] {
        let d = self.x.apply([x[0] - cell_center[0], x[1] - cell_center[1]]);
        [self.a[0] + d[0], self.a[1] + d[1]]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub lower: Vec<Sheet>,
    pub upper: Vec<Sheet>,
}

impl Cell {
    pub fn half(&self, upper: bool) -> &[Sheet] {
        if upper {
            &self.upper
        } else {
            &self.lower
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct FunctionalQGraph {
    mesh: MeshSpec,
    q: usize,
    /// Row-major: cell `(i, j)` at index `j·n + i`.
    cells: Vec<Cell>,
}

#[derive(Clone, Serialize, Deserialize)]
struct RawGraph {
    mesh: MeshSpec,
    q: usize,
    cells: Vec<Cell>,
}

impl TryFrom<RawGraph> for FunctionalQGraph {
    type Error = Error;
    fn try_from(raw: RawGraph) -> Result<Self> {
        FunctionalQGraph::new(raw.mesh, raw.q, raw.cells)
    }
}

impl From<FunctionalQGraph> for RawGraph {
    fn from(g: FunctionalQGraph) -> Self {
        RawGraph { mesh: g.mesh, q: g.q, cells: g.cells }
    }
}

impl FunctionalQGraph {
    pub fn new(mesh: MeshSpec, q: usize, cells: Vec<Cell>) -> Result<Self> {
        if mesh.n == 0 || !(mesh.side > 0.0) {
            return Err(Error::InvalidGraph(vec!["empty mesh".into()]));
        }
        if cells.len() != mesh.n * mesh.n {
            return Err(Error::InvalidGraph(vec![format!(
                "expected {} cells, found {}",
                mesh.n * mesh.n,
                cells.len()
            )]));
        }
        let g = Self { mesh, q, cells };
        let problems = g.violations();
        if problems.is_empty() {
            Ok(g)
        } else {
            Err(Error::InvalidGraph(problems))
        }
    }

    pub fn mesh(&self) -> &MeshSpec {
        &self.mesh
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn cell(&self, i: usize, j: usize) -> &Cell {
        &self.cells[j * self.mesh.n + i]
    }

    /// Every half-cell as `(i, j, upper, sheets)`.
    pub fn halves(&self) -> impl Iterator<Item = (usize, usize, bool, &[Sheet])> + '_ {
        let n = self.mesh.n;
        (0..n * n).flat_map(move |k| {
            let (i, j) = (k % n, k / n);
            let cell = &self.cells[k];
            [(i, j, false, cell.lower.as_slice()), (i, j, true, cell.upper.as_slice())]
        })
    }

    pub fn half_area(&self) -> f64 {
        0.5 * self.mesh.h() * self.mesh.h()
    }

    fn half_values(&self, i: usize, j: usize, upper: bool, x: [f64; 2]) -> QPoint2 {
        let c = self.mesh.cell_center(i, j);
        QPoint::new(
            self.cell(i, j)
                .half(upper)
                .iter()
                .flat_map(|s| std::iter::repeat_n(s.value(x, c), s.multiplicity as usize))
                .collect(),
        )
    }

    pub fn eval(&self, x: [f64; 2]) -> QPoint2 {
        let (i, j, upper) = self.mesh.locate(x);
        self.half_values(i, j, upper, x)
    }

    fn violations(&self) -> Vec<String> {
        let n = self.mesh.n;
        let mut problems = Vec::new();
        for (i, j, upper, sheets) in self.halves() {
            let total: usize = sheets.iter().map(|s| s.multiplicity as usize).sum();
            if total != self.q || sheets.iter().any(|s| s.multiplicity == 0) {
                problems.push(format!(
                    "cell ({i},{j}) {} half has multiplicity {total}, expected {}",
                    if upper { "upper" } else { "lower" },
                    self.q
                ));
            }
            if sheets.iter().any(|s| !s.x.is_finite() || !s.a.iter().all(|v| v.is_finite())) {
                problems.push(format!("cell ({i},{j}) has non-finite sheet data"));
            }
        }
        if !problems.is_empty() {
            return problems;
        }
        let mut check = |a: (usize, usize, bool), b: (usize, usize, bool), p: [f64; 2], q: [f64; 2], label: String| {
            let worst = [0.0, 0.5, 1.0]
                .iter()
                .map(|&t| {
                    let x = [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])];
                    let va = self.half_values(a.0, a.1, a.2, x);
                    let vb = self.half_values(b.0, b.1, b.2, x);
                    g_metric(&va, &vb).unwrap_or(f64::INFINITY)
                })
                .fold(0.0, f64::max);
            if !(worst <= CONTINUITY_TOL) {
                problems.push(format!("{label}: trace mismatch {worst:.3e}"));
            }
        };
        let m = &self.mesh;
        for j in 0..n {
            for i in 0..n {
                check(
                    (i, j, false),
                    (i, j, true),
                    m.node(i, j),
                    m.node(i + 1, j + 1),
                    format!("cell ({i},{j}) diagonal"),
                );
                if i + 1 < n {
                    check(
                        (i, j, false),
                        (i + 1, j, true),
                        m.node(i + 1, j),
                        m.node(i + 1, j + 1),
                        format!("edge between cells ({i},{j}) and ({},{j})", i + 1),
                    );
                }
                if j + 1 < n {
                    check(
                        (i, j, true),
                        (i, j + 1, false),
                        m.node(i, j + 1),
                        m.node(i + 1, j + 1),
                        format!("edge between cells ({i},{j}) and ({i},{})", j + 1),
                    );
                }
            }
        }
        problems
    }

    /// Trace at the boundary nodes, read from the outermost cells.
    pub fn boundary_trace(&self) -> Vec<([f64; 2], QPoint2)> {
        self.mesh
            .boundary_nodes()
            .into_iter()
            .map(|(i, j)| {
                let x = self.mesh.node(i, j);
                let (ci, cj) = (i.min(self.mesh.n - 1), j.min(self.mesh.n - 1));
                let upper = !self.mesh.half_nodes(ci, cj, false).contains(&(i, j));
                (x, self.half_values(ci, cj, upper, x))
            })
            .collect()
    }

    /// Graph of `s·f`.
    pub fn scaled_values(&self, s: f64) -> Self {
        let scale = |v: &Vec<Sheet>| -> Vec<Sheet> {
            v.iter()
                .map(|sh| Sheet { multiplicity: sh.multiplicity, a: sh.a.map(|c| c * s), x: sh.x.scale(s) })
                .collect()
        };
        let cells = self.cells.iter().map(|c| Cell { lower: scale(&c.lower), upper: scale(&c.upper) }).collect();
        Self { mesh: self.mesh, q: self.q, cells }
    }

    /// Superposition of `Q` single-valued piecewise-linear maps given by their
    /// values at the `(n+1)²` nodes (row-major, `j·(n+1) + i`).
    pub fn from_node_values(mesh: MeshSpec, sheets: &[(u32, Vec<[f64; 2]>)]) -> Result<Self> {
        let n = mesh.n;
        let q = sheets.iter().map(|s| s.0 as usize).sum();
        for (_, values) in sheets {
            if values.len() != (n + 1) * (n + 1) {
                return Err(Error::InvalidGraph(vec![format!(
                    "expected {} node values, found {}",
                    (n + 1) * (n + 1),
                    values.len()
                )]));
            }
        }
        let h = mesh.h();
        let mut cells = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let c = mesh.cell_center(i, j);
                let mut cell = Cell::default();
                for upper in [false, true] {
                    let half: Vec<Sheet> = sheets
                        .iter()
                        .map(|(mult, values)| {
                            let val = |a: usize, b: usize| values[b * (n + 1) + a];
                            let (x, base) = if upper {
                                // (i,j), (i+1,j+1), (i,j+1)
                                let (p0, p1, p2) = (val(i, j), val(i + 1, j + 1), val(i, j + 1));
                                let dy = [(p2[0] - p0[0]) / h, (p2[1] - p0[1]) / h];
                                let dx = [(p1[0] - p2[0]) / h, (p1[1] - p2[1]) / h];
                                (Matrix22::new(dx[0], dy[0], dx[1], dy[1]), p0)
                            } else {
                                let (p0, p1, p2) = (val(i, j), val(i + 1, j), val(i + 1, j + 1));
                                let dx = [(p1[0] - p0[0]) / h, (p1[1] - p0[1]) / h];
                                let dy = [(p2[0] - p1[0]) / h, (p2[1] - p1[1]) / h];
                                (Matrix22::new(dx[0], dy[0], dx[1], dy[1]), p0)
                            };
                            let origin = mesh.node(i, j);
                            let d = x.apply([c[0] - origin[0], c[1] - origin[1]]);
                            Sheet { multiplicity: *mult, a: [base[0] + d[0], base[1] + d[1]], x }
                        })
                        .collect();
                    if upper {
                        cell.upper = half;
                    } else {
                        cell.lower = half;
                    }
                }
                cells.push(cell);
            }
        }
        Self::new(mesh, q, cells)
    }

    pub fn triangulate(&self) -> TriangulatedCurrent {
        let n = self.mesh.n;
        let stride = n + 1;
        let mut clusters: Vec<Vec<[f64; 2]>> = vec![Vec::new(); stride * stride];
        let mut node_vertex: Vec<Vec<usize>> = vec![Vec::new(); stride * stride];
        let mut vertices: Vec<Vec4> = Vec::new();
        let mut triangles = Vec::new();
        for (i, j, upper, sheets) in self.halves() {
            let c = self.mesh.cell_center(i, j);
            let nodes = self.mesh.half_nodes(i, j, upper);
            for s in sheets {
                let ids = nodes.map(|(a, b)| {
                    let x = self.mesh.node(a, b);
                    let y = s.value(x, c);
                    let k = b * stride + a;
                    let found = clusters[k].iter().position(|z| (z[0] - y[0]).hypot(z[1] - y[1]) <= CONTINUITY_TOL);
                    match found {
                        Some(p) => node_vertex[k][p],
                        None => {
                            clusters[k].push(y);
                            vertices.push([x[0], x[1], y[0], y[1]]);
                            node_vertex[k].push(vertices.len() - 1);
                            vertices.len() - 1
                        }
                    }
                });
                triangles.push(Triangle(ids, s.multiplicity));
            }
        }
        TriangulatedCurrent::new(vertices, triangles).expect("graph triangles are non-degenerate")
    }

    pub fn boundary_polygon(&self) -> Vec<[f64; 2]> {
        self.mesh.boundary_nodes().into_iter().map(|(i, j)| self.mesh.node(i, j)).collect()
    }

    /// Whether the graph current has boundary `q` times the square boundary at height 0.
    pub fn is_zero_boundary_graph(&self, q: usize) -> bool {
        self.q == q && self.triangulate().has_flat_polygon_boundary(&self.boundary_polygon(), q as u32)
    }

    /// Largest operator norm of a sheet gradient.
    pub fn max_gradient_norm(&self) -> f64 {
        self.halves().flat_map(|(_, _, _, s)| s.iter().map(|sh| sh.x.singular_values().0)).fold(0.0, f64::max)
    }
}
