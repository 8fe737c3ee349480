//! The degenerate integrand ψ, its Q-valued sum ψ̄, and numerical brackets
//! for the envelope `A(a, X) = inf ⨍ ψ̄(∇φ)` over competitors with affine
//! boundary data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construction::{self, ConstructionBundle};
use crate::current::{branched_graph, BranchedSpec, FunctionalQGraph, MeshSpec, Triangle, TriangulatedCurrent};
use crate::error::{Error, Result};
use crate::exterior::{lambda_m, Matrix22, MultiVector2};
use crate::multipoint::{maximal_decomposition, Jet, MaximalDecomposition, QPoint, CLUSTER_TOL};

pub const DEFAULT_RAY_TOL: f64 = 1e-9;

/// Constant of the mixed-versus-vertical inequality used by the lower bound.
pub const LOWER_BOUND_C: f64 = 1.0 / 200.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiConfig {
    pub eps: f64,
    /// Unit directions of `lambda_m(X_i)`.
    pub rays: [MultiVector2; 3],
    pub ray_tol: f64,
    /// Smoothing width; 0 selects the exact integrand.
    pub eta: f64,
}

impl PsiConfig {
    pub fn new(eps: f64) -> Result<Self> {
        Ok(Self::from_bundle(&construction::build(eps)?))
    }

    pub fn from_bundle(b: &ConstructionBundle) -> Self {
        Self { eps: b.eps, rays: b.rays(), ray_tol: DEFAULT_RAY_TOL, eta: 0.0 }
    }

    pub fn with_eta(&self, eta: f64) -> Self {
        Self { eta, ..self.clone() }
    }

    /// Smallest angle between the unit 2-vector `omega` and a ray.
    pub fn ray_angle(&self, omega: &MultiVector2) -> f64 {
        self.rays.iter().map(|r| 2.0 * (0.5 * omega.distance(r)).min(1.0).asin()).fold(f64::INFINITY, f64::min)
    }

    /// `Ψ(ω)` on unit simple 2-vectors: 0 on the rays, 1 elsewhere (or the
    /// linear ramp `min(1, angle/η)` when smoothing).
    pub fn integrand(&self, omega: &MultiVector2) -> f64 {
        let angle = self.ray_angle(omega);
        if angle <= self.ray_tol {
            0.0
        } else if self.eta > 0.0 {
            (angle / self.eta).min(1.0)
        } else {
            1.0
        }
    }
}

pub fn psi(x: &Matrix22, cfg: &PsiConfig) -> f64 {
    let l = lambda_m(x);
    let n = l.norm();
    n * cfg.integrand(&(l * (1.0 / n)))
}

/// `Σ_cells Σ_sheets θ·ψ(X_sheet)·area`.
pub fn psi_bar_energy(g: &FunctionalQGraph, cfg: &PsiConfig) -> f64 {
    let a = g.half_area();
    g.halves()
        .map(|(_, _, _, sheets)| sheets.iter().map(|s| s.multiplicity as f64 * psi(&s.x, cfg)).sum::<f64>() * a)
        .sum()
}

/// The same energy computed on the graph current as `∫ Ψ(ω) d‖T‖`.
pub fn anisotropic_energy(t: &TriangulatedCurrent, cfg: &PsiConfig) -> f64 {
    t.anisotropic_mass(|omega| cfg.integrand(omega))
}

/// `‖ΛM(X)‖ ≤ 1 + |X|²/2`, since `det(X)² ≤ |X|⁴/4`.
pub fn affine_bound(x: &Matrix22) -> f64 {
    1.0 + 0.5 * x.frobenius_sq()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub mesh_n: usize,
    pub starts: usize,
    pub seed: u64,
    /// Smoothing widths used in turn before the exact stage.
    pub eta_schedule: Vec<f64>,
    /// Initial and final pattern steps, relative to the side of the domain.
    pub initial_step: f64,
    pub min_step: f64,
    pub max_sweeps: usize,
    /// Gradients this close (Frobenius) to a ray matrix are snapped onto it.
    pub snap_tol: f64,
    pub library: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            mesh_n: 8,
            starts: 8,
            seed: 0,
            eta_schedule: vec![0.3, 0.1, 0.03],
            initial_step: 0.02,
            min_step: 1e-4,
            max_sweeps: 60,
            snap_tol: 0.05,
            library: true,
        }
    }
}

/// Where the best competitor of a part came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Source {
    Affine,
    Optimized { start: usize },
    Library { name: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartResult {
    pub q: usize,
    pub x: Matrix22,
    /// Mean ψ-energy of one sheet of the part.
    pub value: f64,
    pub affine_value: f64,
    pub source: Source,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibraryValue {
    pub part: usize,
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeUpper {
    pub value: f64,
    pub affine_value: f64,
    pub parts: Vec<PartResult>,
    /// The graph competitor, when every part is realized by one.
    pub competitor: Option<FunctionalQGraph>,
    pub library: Vec<LibraryValue>,
    pub optimizer: OptimizerConfig,
}

/// Piecewise-linear perturbation of a single sheet on the mesh, zero on the boundary.
#[derive(Clone)]
struct Field {
    mesh: MeshSpec,
    base: Matrix22,
    u: Vec<[f64; 2]>,
}

impl Field {
    fn zero(mesh: MeshSpec, base: Matrix22) -> Self {
        Self { mesh, base, u: vec![[0.0; 2]; (mesh.n + 1) * (mesh.n + 1)] }
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        j * (self.mesh.n + 1) + i
    }

    fn gradient(&self, i: usize, j: usize, upper: bool) -> Matrix22 {
        let h = self.mesh.h();
        let v = |a: usize, b: usize| self.u[self.idx(a, b)];
        let (dx, dy) = if upper {
            let (p0, p1, p2) = (v(i, j), v(i + 1, j + 1), v(i, j + 1));
            ([p1[0] - p2[0], p1[1] - p2[1]], [p2[0] - p0[0], p2[1] - p0[1]])
        } else {
            let (p0, p1, p2) = (v(i, j), v(i + 1, j), v(i + 1, j + 1));
            ([p1[0] - p0[0], p1[1] - p0[1]], [p2[0] - p1[0], p2[1] - p1[1]])
        };
        self.base + Matrix22::new(dx[0] / h, dy[0] / h, dx[1] / h, dy[1] / h)
    }

    /// Half-cells containing node `(a, b)`.
    fn incident(&self, a: usize, b: usize) -> Vec<(usize, usize, bool)> {
        let n = self.mesh.n;
        let mut out = Vec::with_capacity(6);
        if a < n && b < n {
            out.push((a, b, false));
            out.push((a, b, true));
        }
        if a > 0 && b < n {
            out.push((a - 1, b, false));
        }
        if a > 0 && b > 0 {
            out.push((a - 1, b - 1, false));
            out.push((a - 1, b - 1, true));
        }
        if a < n && b > 0 {
            out.push((a, b - 1, true));
        }
        out
    }

    fn local(&self, a: usize, b: usize, cfg: &PsiConfig) -> f64 {
        self.incident(a, b).iter().map(|&(i, j, up)| psi(&self.gradient(i, j, up), cfg)).sum()
    }

    /// Mean ψ-energy over the square.
    fn energy(&self, cfg: &PsiConfig) -> f64 {
        let n = self.mesh.n;
        let mut total = 0.0;
        for j in 0..n {
            for i in 0..n {
                total += psi(&self.gradient(i, j, false), cfg) + psi(&self.gradient(i, j, true), cfg);
            }
        }
        total / (2 * n * n) as f64
    }

    fn interior(&self) -> impl Iterator<Item = (usize, usize)> {
        let n = self.mesh.n;
        (1..n).flat_map(move |j| (1..n).map(move |i| (i, j)))
    }

    /// Coordinate pattern search; returns the final step.
    fn pattern_search(&mut self, cfg: &PsiConfig, opt: &OptimizerConfig) {
        let mut step = opt.initial_step * self.mesh.side;
        let min_step = opt.min_step * self.mesh.side;
        let mut sweeps = 0;
        while step >= min_step && sweeps < opt.max_sweeps {
            sweeps += 1;
            let mut improved = false;
            let nodes: Vec<_> = self.interior().collect();
            for (a, b) in nodes {
                let k = self.idx(a, b);
                for c in 0..2 {
                    let before = self.local(a, b, cfg);
                    let original = self.u[k][c];
                    let mut best = (before, original);
                    for s in [step, -step] {
                        self.u[k][c] = original + s;
                        let e = self.local(a, b, cfg);
                        if e < best.0 - 1e-15 {
                            best = (e, original + s);
                        }
                    }
                    self.u[k][c] = best.1;
                    improved |= best.1 != original;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
    }

    /// Replaces clusters of nodes whose incident gradients are all close to a
    /// ray matrix by the exact affine map with that gradient.
    fn snap(&mut self, rays: &[Matrix22; 3], tol: f64) {
        let n = self.mesh.n;
        for target in rays {
            let near: Vec<bool> = (0..(n + 1) * (n + 1))
                .map(|k| {
                    let (a, b) = (k % (n + 1), k / (n + 1));
                    !self.mesh.is_boundary_node(a, b)
                        && self
                            .incident(a, b)
                            .iter()
                            .all(|&(i, j, up)| (self.gradient(i, j, up) - *target).frobenius() <= tol)
                })
                .collect();
            let mut seen = vec![false; near.len()];
            let slope = *target - self.base;
            for start in 0..near.len() {
                if !near[start] || seen[start] {
                    continue;
                }
                let mut cluster = vec![start];
                seen[start] = true;
                let mut head = 0;
                while head < cluster.len() {
                    let k = cluster[head];
                    head += 1;
                    let (a, b) = ((k % (n + 1)) as i64, (k / (n + 1)) as i64);
                    for (da, db) in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1)] {
                        let (x, y) = (a + da, b + db);
                        if x < 0 || y < 0 || x > n as i64 || y > n as i64 {
                            continue;
                        }
                        let m = y as usize * (n + 1) + x as usize;
                        if near[m] && !seen[m] {
                            seen[m] = true;
                            cluster.push(m);
                        }
                    }
                }
                let pos = |k: usize| self.mesh.node(k % (n + 1), k / (n + 1));
                let mut offset = [0.0; 2];
                for &k in &cluster {
                    let l = slope.apply(pos(k));
                    offset[0] += self.u[k][0] - l[0];
                    offset[1] += self.u[k][1] - l[1];
                }
                let c = offset.map(|o| o / cluster.len() as f64);
                for &k in &cluster {
                    let l = slope.apply(pos(k));
                    self.u[k] = [l[0] + c[0], l[1] + c[1]];
                }
            }
        }
    }
}

/// Patch starts whose gradient differs more than this from the boundary
/// gradient only produce huge energies.
const MAX_PATCH_JUMP: f64 = 4.0;

/// Mesh on the target's domain.
fn mesh_for(center: [f64; 2], side: f64, n: usize) -> MeshSpec {
    MeshSpec { center, side, n }
}

/// Initial perturbation for start `s` of a part with base gradient `base`:
/// start 0 is the affine map, the next three carry an exact patch with each
/// ray gradient (when that gradient is within reach), the rest are random.
fn initial_field(mesh: MeshSpec, base: Matrix22, rays: &[Matrix22; 3], seed: u64, part: usize, s: usize) -> Field {
    let mut f = Field::zero(mesh, base);
    let n = mesh.n;
    if s == 0 {
        return f;
    }
    if s <= 3 && (rays[s - 1] - base).frobenius() <= MAX_PATCH_JUMP {
        let slope = rays[s - 1] - base;
        let (inner, outer) = (0.25 * mesh.side, 0.5 * mesh.side);
        for j in 1..n {
            for i in 1..n {
                let x = mesh.node(i, j);
                let d = [x[0] - mesh.center[0], x[1] - mesh.center[1]];
                let r = d[0].abs().max(d[1].abs());
                let cut = ((outer - r) / (outer - inner)).clamp(0.0, 1.0);
                let y = slope.apply(d);
                let k = f.idx(i, j);
                f.u[k] = [cut * y[0], cut * y[1]];
            }
        }
        return f;
    }
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ ((part as u64) << 32) ^ (s as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let amp = 0.1 * mesh.side;
    for j in 1..n {
        for i in 1..n {
            let k = f.idx(i, j);
            f.u[k] = [rng.gen_range(-amp..amp), rng.gen_range(-amp..amp)];
        }
    }
    f
}

/// Best mean energy of one sheet with affine boundary data `base`, with the
/// start that achieved it.
fn optimize_part(
    mesh: MeshSpec,
    base: Matrix22,
    cfg: &PsiConfig,
    rays: &[Matrix22; 3],
    opt: &OptimizerConfig,
    part: usize,
) -> (f64, usize, Field) {
    let exact = cfg.with_eta(0.0);
    let runs: Vec<(f64, usize, Field)> = (0..opt.starts.max(1))
        .into_par_iter()
        .map(|s| {
            let mut f = initial_field(mesh, base, rays, opt.seed, part, s);
            let mut best = (f.energy(&exact), f.clone());
            for &eta in &opt.eta_schedule {
                f.pattern_search(&cfg.with_eta(eta), opt);
                let mut snapped = f.clone();
                snapped.snap(rays, opt.snap_tol);
                for cand in [f.clone(), snapped] {
                    let e = cand.energy(&exact);
                    if e < best.0 {
                        best = (e, cand);
                    }
                }
            }
            let mut f = best.1.clone();
            f.pattern_search(&exact, opt);
            let e = f.energy(&exact);
            if e < best.0 {
                best = (e, f);
            }
            (best.0, s, best.1)
        })
        .collect();
    runs.into_iter().min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))).expect("at least one start")
}

/// Mean energy of the library competitor for a part of multiplicity `q`
/// with gradient `x`: the branched map on the inscribed disk composed with
/// the affine frame, and the affine map outside.
fn branched_library_value(q: usize, x: &Matrix22, side: f64, cfg: &PsiConfig) -> Result<f64> {
    let spec = BranchedSpec::new(q, 0.5 * side, 0.5 * side);
    let b = branched_graph(spec)?;
    let vertices = b
        .current
        .vertices()
        .iter()
        .map(|v| {
            let y = x.apply([v[0], v[1]]);
            [v[0], v[1], v[2] + y[0], v[3] + y[1]]
        })
        .collect();
    let triangles: Vec<Triangle> = b.current.triangles().to_vec();
    let framed = TriangulatedCurrent::new(vertices, triangles)?;
    let outside = side * side - b.domain_area();
    Ok((anisotropic_energy(&framed, cfg) + q as f64 * psi(x, cfg) * outside) / (q as f64 * side * side))
}

/// Upper bound for `A` at `target` on the square `D(center, side)`.
pub fn envelope_upper_on(
    target: &MaximalDecomposition,
    center: [f64; 2],
    side: f64,
    cfg: &PsiConfig,
    opt: &OptimizerConfig,
) -> Result<EnvelopeUpper> {
    if opt.mesh_n < 2 {
        return Err(Error::Domain { name: "mesh_n", value: opt.mesh_n as f64, domain: "integers >= 2" });
    }
    if !(side > 0.0) {
        return Err(Error::Domain { name: "side", value: side, domain: "(0, ∞)" });
    }
    let exact = cfg.with_eta(0.0);
    let b = construction::build(cfg.eps)?;
    let rays = b.x;
    let mesh = mesh_for(center, side, opt.mesh_n);
    let affine_value: f64 = target.parts.iter().map(|p| p.q as f64 * psi(&p.x, &exact)).sum();
    let mut parts = Vec::with_capacity(target.parts.len());
    let mut fields: Vec<Field> = Vec::with_capacity(target.parts.len());
    let mut library = Vec::new();
    for (j, p) in target.parts.iter().enumerate() {
        let affine = psi(&p.x, &exact);
        let mut result = PartResult { q: p.q, x: p.x, value: affine, affine_value: affine, source: Source::Affine };
        let mut field = Field::zero(mesh, p.x);
        if affine > 0.0 && opt.starts > 0 {
            // Parts with the same gradient share the optimization.
            let previous = target.parts[..j].iter().position(|o| o.x == p.x);
            let (value, start, f) = match previous {
                Some(k) => match &parts[k] {
                    PartResult { value, source: Source::Optimized { start }, .. } => {
                        (*value, *start, fields[k].clone())
                    }
                    _ => (affine, 0, Field::zero(mesh, p.x)),
                },
                None => optimize_part(mesh, p.x, cfg, &rays, opt, j),
            };
            if value < result.value {
                result.value = value;
                result.source = Source::Optimized { start };
                field = f;
            }
        }
        if opt.library && affine > 0.0 && p.q >= 2 {
            let value = branched_library_value(p.q, &p.x, side, &exact)?;
            let name = format!("branched q={} p={}", p.q, p.q + 1);
            library.push(LibraryValue { part: j, name: name.clone(), value });
            if value < result.value {
                result.value = value;
                result.source = Source::Library { name };
            }
        }
        parts.push(result);
        fields.push(field);
    }
    let graph_parts = parts.iter().all(|p| !matches!(p.source, Source::Library { .. }));
    let competitor = if graph_parts {
        let sheets: Vec<(u32, Vec<[f64; 2]>)> = target
            .parts
            .iter()
            .zip(&fields)
            .map(|(p, f)| {
                let n = mesh.n;
                let values = (0..(n + 1) * (n + 1))
                    .map(|k| {
                        let x = mesh.node(k % (n + 1), k / (n + 1));
                        let y = p.x.apply([x[0] - center[0], x[1] - center[1]]);
                        [p.a[0] + y[0] + f.u[k][0], p.a[1] + y[1] + f.u[k][1]]
                    })
                    .collect();
                (p.q as u32, values)
            })
            .collect();
        Some(FunctionalQGraph::from_node_values(mesh, &sheets)?)
    } else {
        None
    };
    // Report the energy of the concrete competitor.
    let value = match &competitor {
        Some(g) => psi_bar_energy(g, &exact) / mesh.area(),
        None => parts.iter().map(|p| p.q as f64 * p.value).sum(),
    };
    Ok(EnvelopeUpper { value, affine_value, parts, competitor, library, optimizer: opt.clone() })
}

/// Upper bound on the unit square centered at the origin.
pub fn envelope_upper(target: &MaximalDecomposition, cfg: &PsiConfig, opt: &OptimizerConfig) -> Result<EnvelopeUpper> {
    envelope_upper_on(target, [0.0, 0.0], 1.0, cfg, opt)
}

/// One inequality of the lower-bound chain, with its numeric coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainStep {
    pub name: String,
    pub statement: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub eps: f64,
    pub q: usize,
    pub value: f64,
    pub w1_norm: f64,
    pub w3_norm: f64,
    /// Largest disagreement between the bundle norms and the closed forms.
    pub norm_agreement: f64,
    pub trace: Vec<ChainStep>,
}

/// `L(ε, Q) = Q ε² / [(1/C)(1 + 2|w1|/|w3|) + 1 + 4|w1|/ε²]`, a lower bound
/// for `A(Q[(a, 0)])` on a unit-area square.
pub fn envelope_lower_at_zero(eps: f64, q: usize) -> Result<LowerBound> {
    let b = construction::build(eps)?;
    let (w1, w3) = (b.w[0].norm(), b.w[2].norm());
    let w1_closed = construction::w1_norm_sq_closed_form(eps, b.delta).sqrt();
    let w3_closed = construction::w3_norm_sq_closed_form(eps, b.delta).sqrt();
    let norm_agreement = (w1 - w1_closed).abs().max((w3 - w3_closed).abs()).max((b.w[1].norm() - w1).abs());
    if !(norm_agreement <= 1e-12) {
        return Err(Error::InvalidEnvelope(format!("|w_i| evaluations disagree by {norm_agreement:.3e}")));
    }
    let e2 = eps * eps;
    let bar0_vertical = 2.0 * w1 / w3;
    let bar0_rest = 4.0 * w1 / e2;
    let factor = (1.0 / LOWER_BOUND_C) * (1.0 + bar0_vertical) + 1.0 + bar0_rest;
    let value = q as f64 * e2 / factor;
    let step =
        |name: &str, statement: &str, value: f64| ChainStep { name: name.into(), statement: statement.into(), value };
    let trace = vec![
        step("energy_vs_nonspecial", "⨍ψ̄(∇f) >= M(T off the planes P_{v_i})", 1.0),
        step("jacobian", "M(G^NS) <= ε^-2 M(T off the planes P_{v_i}), G = (R⁻¹)♯T", 1.0 / e2),
        step("barycenter_vertical", "coefficient of M(G³): 2|w1|/|w3|", bar0_vertical),
        step("barycenter_rest", "coefficient of M(G^NS): 4|w1|/ε²", bar0_rest),
        step("multiplicity", "Q|D| <= M(G) = Σ M(G^i) + M(G^NS)", q as f64),
        step("summed_vertical", "coefficient of M(G³) after summing: 1 + 2|w1|/|w3|", 1.0 + bar0_vertical),
        step("summed_rest", "coefficient of M(G^NS) after summing: 1 + 4|w1|/ε²", 1.0 + bar0_rest),
        step("mixed_vertical", "M(G³) <= M(G^V) <= (1/C) M(G^M) <= (1/C) M(G^NS)", 1.0 / LOWER_BOUND_C),
        step("assembled", "Q|D| <= K·M(G^NS)", factor),
        step("lower_bound", "⨍ψ̄ >= ε² M(G^NS) >= Q ε²/K", value),
    ];
    Ok(LowerBound { eps, q, value, w1_norm: w1, w3_norm: w3, norm_agreement, trace })
}

/// Which envelope target a bracket is computed for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    Zero,
    Ray(usize),
}

impl Target {
    pub fn decomposition(&self, q: usize, b: &ConstructionBundle) -> MaximalDecomposition {
        let x = match self {
            Target::Zero => Matrix22::ZERO,
            Target::Ray(i) => b.x[*i],
        };
        MaximalDecomposition::single(q, [0.0, 0.0], x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeBracket {
    pub target: MaximalDecomposition,
    pub eps: f64,
    pub q: usize,
    pub upper: EnvelopeUpper,
    /// Present only for the target `Q[(a, 0)]`.
    pub lower: Option<LowerBound>,
    pub gap: Option<f64>,
}

impl EnvelopeBracket {
    pub fn is_ordered(&self) -> bool {
        self.lower.as_ref().is_none_or(|l| l.value <= self.upper.value + 1e-9)
    }
}

pub fn envelope_bracket(eps: f64, q: usize, target: Target, opt: &OptimizerConfig) -> Result<EnvelopeBracket> {
    let b = construction::build(eps)?;
    if let Target::Ray(i) = target {
        if i > 2 {
            return Err(Error::Domain { name: "ray", value: i as f64, domain: "{0, 1, 2}" });
        }
    }
    let cfg = PsiConfig::from_bundle(&b);
    let decomposition = target.decomposition(q, &b);
    let upper = envelope_upper(&decomposition, &cfg, opt)?;
    let lower = match target {
        Target::Zero => Some(envelope_lower_at_zero(eps, q)?),
        Target::Ray(_) => None,
    };
    let gap = lower.as_ref().map(|l| upper.value - l.value);
    Ok(EnvelopeBracket { target: decomposition, eps, q, upper, lower, gap })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyBSample {
    pub sample: usize,
    /// Mean over half-cells of the per-point upper bound at `(f(x), ∇f(x))`.
    pub right: f64,
    pub margin: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyBReport {
    pub q: usize,
    pub x: Matrix22,
    pub left: f64,
    pub slack: f64,
    pub samples: Vec<PropertyBSample>,
}

/// Per-point upper bound without optimization: each part of the maximal
/// decomposition contributes `q_j ψ(X_j)`.
fn pointwise_upper(jets: &QPoint<Jet>, cfg: &PsiConfig) -> f64 {
    maximal_decomposition(jets, CLUSTER_TOL).parts.iter().map(|p| p.q as f64 * psi(&p.x, cfg)).sum()
}

/// Compares the upper bound for `A^q(q[(a, X)])` with the mean of pointwise
/// upper bounds along sampled competitors. Sample 0 is the affine map itself;
/// the others add independent zero-boundary perturbations to each sheet.
/// Margins below `-slack` are flagged for inspection.
pub fn property_b_spotcheck(
    q: usize,
    a: [f64; 2],
    x: Matrix22,
    samples: usize,
    seed: u64,
    cfg: &PsiConfig,
    opt: &OptimizerConfig,
) -> Result<PropertyBReport> {
    let exact = cfg.with_eta(0.0);
    let target = MaximalDecomposition::single(q, a, x);
    let left = envelope_upper(&target, &exact, opt)?.value;
    let slack = 1e-9;
    let mesh = MeshSpec::unit(opt.mesh_n);
    let n = mesh.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(samples);
    for s in 0..samples {
        let amp = if s == 0 { 0.0 } else { rng.gen_range(0.01..0.2) };
        let sheets: Vec<(u32, Vec<[f64; 2]>)> = (0..q)
            .map(|_| {
                let values = (0..(n + 1) * (n + 1))
                    .map(|k| {
                        let (i, j) = (k % (n + 1), k / (n + 1));
                        let p = mesh.node(i, j);
                        let y = x.apply(p);
                        let bump = if mesh.is_boundary_node(i, j) {
                            [0.0, 0.0]
                        } else {
                            [rng.gen_range(-amp..=amp), rng.gen_range(-amp..=amp)]
                        };
                        [a[0] + y[0] + bump[0], a[1] + y[1] + bump[1]]
                    })
                    .collect();
                (1u32, values)
            })
            .collect();
        let g = FunctionalQGraph::from_node_values(mesh, &sheets)?;
        let mut total = 0.0;
        for (i, j, upper, half) in g.halves() {
            let c = mesh.cell_center(i, j);
            let nodes = mesh.half_nodes(i, j, upper);
            let centroid = [0, 1].map(|d| nodes.iter().map(|&(u, v)| mesh.node(u, v)[d]).sum::<f64>() / 3.0);
            let jets = QPoint::new(
                half.iter()
                    .flat_map(|sh| {
                        std::iter::repeat_n(Jet { a: sh.value(centroid, c), x: sh.x }, sh.multiplicity as usize)
                    })
                    .collect(),
            );
            total += pointwise_upper(&jets, &exact) * g.half_area();
        }
        let right = total / mesh.area();
        let margin = right - left;
        out.push(PropertyBSample { sample: s, right, margin, flagged: margin < -slack });
    }
    Ok(PropertyBReport { q, x, left, slack, samples: out })
}
