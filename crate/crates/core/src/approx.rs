//! Piecewise-affine approximation of Lipschitz Q-valued maps on a square.
//!
//! Three layers: an interpolation between two sheetwise maps across a square
//! annulus, a cubic subdivision whose cells carry validated first-order
//! Taylor models, and the approximating sequence `g^k` that is affine on
//! shrunk cells, interpolates on their collars and equals `f` elsewhere.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::min_cost_assignment;
use crate::energy::{psi, PsiConfig};
use crate::error::{Error, Result};
use crate::exterior::Matrix22;
use crate::multipoint::{g_metric, maximal_decomposition, Jet, MaximalDecomposition, QPoint, QPoint2};

/// Relative step of the central differences used for gradients.
pub const FD_STEP: f64 = 1e-6;

/// Jets closer than this are merged into one part of a Taylor model.
pub const MODEL_TOL: f64 = 1e-7;

/// A Q-valued map on (a neighbourhood of) a square.
pub trait QMap: Sync {
    fn q(&self) -> usize;
    fn eval(&self, x: [f64; 2]) -> QPoint2;
    /// Declared Lipschitz constant with respect to `G`.
    fn lipschitz(&self) -> f64;
}

/// A Q-valued map given as a sum of single-valued sheets, sheet `j` counted
/// with multiplicity `multiplicities()[j]`.
pub trait SheetwiseMap: Sync {
    fn multiplicities(&self) -> Vec<usize>;
    fn sheet(&self, j: usize, x: [f64; 2]) -> [f64; 2];
    fn lipschitz(&self) -> f64;

    fn sheet_gradient(&self, j: usize, x: [f64; 2]) -> Matrix22 {
        let h = FD_STEP;
        let mut cols = [[0.0; 2]; 2];
        for (k, col) in cols.iter_mut().enumerate() {
            let mut p = x;
            let mut m = x;
            p[k] += h;
            m[k] -= h;
            let (a, b) = (self.sheet(j, p), self.sheet(j, m));
            *col = [(a[0] - b[0]) / (2.0 * h), (a[1] - b[1]) / (2.0 * h)];
        }
        Matrix22::new(cols[0][0], cols[1][0], cols[0][1], cols[1][1])
    }
}

fn sheet_values(m: &[usize], value: impl Fn(usize) -> [f64; 2]) -> QPoint2 {
    QPoint::new(m.iter().enumerate().flat_map(|(j, &q)| std::iter::repeat_n(value(j), q)).collect())
}

/// Views a sheetwise map as a plain Q-valued map.
pub struct Sheetwise<'a, S: ?Sized>(pub &'a S);

impl<S: SheetwiseMap + ?Sized> QMap for Sheetwise<'_, S> {
    fn q(&self) -> usize {
        self.0.multiplicities().iter().sum()
    }
    fn eval(&self, x: [f64; 2]) -> QPoint2 {
        sheet_values(&self.0.multiplicities(), |j| self.0.sheet(j, x))
    }
    fn lipschitz(&self) -> f64 {
        self.0.lipschitz()
    }
}

/// The open square `center + (−side/2, side/2)²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Square {
    pub center: [f64; 2],
    pub side: f64,
}

impl Square {
    pub fn unit() -> Self {
        Self { center: [0.5, 0.5], side: 1.0 }
    }

    pub fn area(&self) -> f64 {
        self.side * self.side
    }

    pub fn origin(&self) -> [f64; 2] {
        [self.center[0] - 0.5 * self.side, self.center[1] - 0.5 * self.side]
    }

    /// `n` equally spaced nodes per side, counterclockwise from the lower-left corner.
    pub fn boundary_nodes(&self, n: usize) -> Vec<[f64; 2]> {
        let o = self.origin();
        let s = self.side;
        let mut out = Vec::with_capacity(4 * n);
        for k in 0..n {
            let t = s * k as f64 / n as f64;
            out.push([o[0] + t, o[1]]);
            out.push([o[0] + s, o[1] + t]);
            out.push([o[0] + s - t, o[1] + s]);
            out.push([o[0], o[1] + s - t]);
        }
        out
    }
}

fn sup_norm(v: [f64; 2]) -> f64 {
    v[0].abs().max(v[1].abs())
}

fn sub2(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

// ---------------------------------------------------------------------------
// Test families

/// One sheet `a + X(x − c) + α·b(x)·d`, where the bump
/// `b = cos(π u₁) cos(π u₂)`, `u = (x − c)/side`, vanishes on the boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothSheet {
    pub q: usize,
    pub a: [f64; 2],
    pub x: Matrix22,
    pub amplitude: f64,
    pub direction: [f64; 2],
}

/// Smooth sheetwise profile whose trace on the boundary of `domain` is the
/// affine data `Σ q_j [a_j + X_j (x − c)]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothProfile {
    pub domain: Square,
    pub sheets: Vec<SmoothSheet>,
}

impl SmoothProfile {
    /// Single-valued profile used by the convergence tables.
    pub fn smooth() -> Self {
        Self {
            domain: Square::unit(),
            sheets: vec![SmoothSheet {
                q: 1,
                a: [0.0, 0.0],
                x: Matrix22::new(0.6, 0.2, -0.1, 0.4),
                amplitude: 0.1,
                direction: [1.0, 0.5],
            }],
        }
    }

    /// Two sheets whose values stay at distance at least 2.
    pub fn two_sheet() -> Self {
        Self {
            domain: Square::unit(),
            sheets: vec![
                SmoothSheet {
                    q: 1,
                    a: [-1.5, 0.0],
                    x: Matrix22::new(0.5, 0.0, 0.1, 0.3),
                    amplitude: 0.1,
                    direction: [1.0, 0.5],
                },
                SmoothSheet {
                    q: 1,
                    a: [1.5, 0.0],
                    x: Matrix22::new(-0.2, 0.3, 0.0, 0.6),
                    amplitude: 0.08,
                    direction: [-0.5, 1.0],
                },
            ],
        }
    }

    /// `q` coinciding copies of [`SmoothProfile::smooth`].
    pub fn repeated(q: usize) -> Self {
        let mut p = Self::smooth();
        p.sheets[0].q = q;
        p
    }

    pub fn affine(domain: Square, parts: &[(usize, [f64; 2], Matrix22)]) -> Self {
        Self {
            domain,
            sheets: parts
                .iter()
                .map(|&(q, a, x)| SmoothSheet { q, a, x, amplitude: 0.0, direction: [0.0, 0.0] })
                .collect(),
        }
    }

    fn bump(&self, x: [f64; 2]) -> (f64, [f64; 2]) {
        let s = self.domain.side;
        let u = [(x[0] - self.domain.center[0]) / s, (x[1] - self.domain.center[1]) / s];
        let (c1, c2) = ((std::f64::consts::PI * u[0]).cos(), (std::f64::consts::PI * u[1]).cos());
        let (s1, s2) = ((std::f64::consts::PI * u[0]).sin(), (std::f64::consts::PI * u[1]).sin());
        let k = std::f64::consts::PI / s;
        (c1 * c2, [-k * s1 * c2, -k * c1 * s2])
    }

    /// Exact gradient of sheet `j`.
    pub fn exact_gradient(&self, j: usize, x: [f64; 2]) -> Matrix22 {
        let sh = &self.sheets[j];
        let (_, db) = self.bump(x);
        let (al, d) = (sh.amplitude, sh.direction);
        sh.x + Matrix22::new(al * d[0] * db[0], al * d[0] * db[1], al * d[1] * db[0], al * d[1] * db[1])
    }

    /// Bound on the operator norm of the Hessian of each sheet: `|α d| π²/side²`.
    pub fn hessian_bound(&self) -> f64 {
        let k = std::f64::consts::PI / self.domain.side;
        self.sheets.iter().map(|s| s.amplitude.abs() * s.direction[0].hypot(s.direction[1]) * k * k).fold(0.0, f64::max)
    }
}

impl SheetwiseMap for SmoothProfile {
    fn multiplicities(&self) -> Vec<usize> {
        self.sheets.iter().map(|s| s.q).collect()
    }

    fn sheet(&self, j: usize, x: [f64; 2]) -> [f64; 2] {
        let sh = &self.sheets[j];
        let (b, _) = self.bump(x);
        let l = sh.x.apply(sub2(x, self.domain.center));
        [sh.a[0] + l[0] + sh.amplitude * b * sh.direction[0], sh.a[1] + l[1] + sh.amplitude * b * sh.direction[1]]
    }

    fn lipschitz(&self) -> f64 {
        let k = std::f64::consts::PI / self.domain.side;
        self.sheets
            .iter()
            .map(|s| {
                let l = s.x.singular_values().0 + s.amplitude.abs() * s.direction[0].hypot(s.direction[1]) * k;
                s.q as f64 * l * l
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Affine sheets `a_j + X_j (x − base)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineSheets {
    pub base: [f64; 2],
    pub parts: Vec<(usize, [f64; 2], Matrix22)>,
}

impl SheetwiseMap for AffineSheets {
    fn multiplicities(&self) -> Vec<usize> {
        self.parts.iter().map(|p| p.0).collect()
    }

    fn sheet(&self, j: usize, x: [f64; 2]) -> [f64; 2] {
        let (_, a, m) = &self.parts[j];
        let l = m.apply(sub2(x, self.base));
        [a[0] + l[0], a[1] + l[1]]
    }

    fn sheet_gradient(&self, j: usize, _x: [f64; 2]) -> Matrix22 {
        self.parts[j].2
    }

    fn lipschitz(&self) -> f64 {
        self.parts.iter().map(|(q, _, m)| *q as f64 * m.singular_values().0.powi(2)).sum::<f64>().sqrt()
    }
}

/// Two-valued branched map `x ↦ {±w}`, `w = s·min(ρ, clip)·e^{iθ/2}` in polar
/// coordinates `(ρ, θ)` around `center`. Not sheetwise-decomposable near the
/// branch point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchedProfile {
    pub center: [f64; 2],
    pub scale: f64,
    pub clip: f64,
}

impl Default for BranchedProfile {
    fn default() -> Self {
        Self { center: [0.5, 0.5], scale: 0.5, clip: 0.4 }
    }
}

impl QMap for BranchedProfile {
    fn q(&self) -> usize {
        2
    }

    fn eval(&self, x: [f64; 2]) -> QPoint2 {
        let z = sub2(x, self.center);
        let rho = z[0].hypot(z[1]).min(self.clip);
        let half = 0.5 * z[1].atan2(z[0]);
        let w = [self.scale * rho * half.cos(), self.scale * rho * half.sin()];
        QPoint::new(vec![w, [-w[0], -w[1]]])
    }

    /// Each sheet moves at speed at most `s`, so `G` grows at most like `√2·s`.
    fn lipschitz(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.scale
    }
}

// ---------------------------------------------------------------------------
// Annulus interpolation

/// The square annulus `D_{(1+σ)ρ}(c) \ D_ρ(c)`, with `ρ` the half-width of the
/// inner square.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annulus {
    pub center: [f64; 2],
    pub inner_half: f64,
    pub sigma: f64,
}

impl Annulus {
    pub fn outer_half(&self) -> f64 {
        (1.0 + self.sigma) * self.inner_half
    }

    /// `‖x − c‖_∞ / ρ`: 1 on the inner boundary, `1 + σ` on the outer one.
    pub fn level(&self, x: [f64; 2]) -> f64 {
        sup_norm(sub2(x, self.center)) / self.inner_half
    }

    /// Weight of the outer data: `(level − 1)/σ` clamped to `[0, 1]`.
    pub fn weight(&self, x: [f64; 2]) -> f64 {
        ((self.level(x) - 1.0) / self.sigma).clamp(0.0, 1.0)
    }

    pub fn inner_square(&self) -> Square {
        Square { center: self.center, side: 2.0 * self.inner_half }
    }

    pub fn outer_square(&self) -> Square {
        Square { center: self.center, side: 2.0 * self.outer_half() }
    }
}

/// Sheet by sheet, `t·outer + (1 − t)·inner` with `t` the annulus weight.
/// Each data map serves as its own Lipschitz extension into the annulus, so
/// the traces on both boundaries are reproduced exactly.
pub struct AnnulusInterpolant<'a> {
    pub annulus: Annulus,
    inner: &'a dyn SheetwiseMap,
    outer: &'a dyn SheetwiseMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusReport {
    pub sigma: f64,
    pub inner_half: f64,
    /// Finite-difference Lipschitz estimate on the annulus.
    pub lip: f64,
    pub lip_inner: f64,
    pub lip_outer: f64,
    /// `sup_{x ∈ ∂D_ρ} G(inner(x), outer(c + (1+σ)(x − c)))`.
    pub gap: f64,
    /// `lip_inner + lip_outer + gap/(σρ)`.
    pub bound: f64,
    /// `lip / bound`.
    pub constant: f64,
    /// Largest trace mismatch at boundary nodes of both squares.
    pub trace_error: f64,
}

pub fn interpolate_annulus<'a>(
    inner: &'a dyn SheetwiseMap,
    outer: &'a dyn SheetwiseMap,
    annulus: Annulus,
) -> Result<AnnulusInterpolant<'a>> {
    if !(annulus.sigma > 0.0 && annulus.sigma < 1.0) {
        return Err(Error::Domain { name: "sigma", value: annulus.sigma, domain: "(0, 1)" });
    }
    if !(annulus.inner_half > 0.0) {
        return Err(Error::Domain { name: "inner_half", value: annulus.inner_half, domain: "(0, inf)" });
    }
    let (mi, mo) = (inner.multiplicities(), outer.multiplicities());
    if mi != mo {
        return Err(Error::NotSheetwise(format!("sheet multiplicities {mi:?} and {mo:?} differ")));
    }
    Ok(AnnulusInterpolant { annulus, inner, outer })
}

fn blend(t: f64, outer: [f64; 2], inner: [f64; 2]) -> [f64; 2] {
    [t * outer[0] + (1.0 - t) * inner[0], t * outer[1] + (1.0 - t) * inner[1]]
}

impl AnnulusInterpolant<'_> {
    pub fn multiplicities(&self) -> Vec<usize> {
        self.inner.multiplicities()
    }

    pub fn sheet(&self, j: usize, x: [f64; 2]) -> [f64; 2] {
        let t = self.annulus.weight(x);
        blend(t, self.outer.sheet(j, x), self.inner.sheet(j, x))
    }

    pub fn eval(&self, x: [f64; 2]) -> QPoint2 {
        sheet_values(&self.multiplicities(), |j| self.sheet(j, x))
    }

    /// Measures the Lipschitz constant on a `grid × grid` lattice over the
    /// outer square (neighbouring pairs inside the annulus) and the trace
    /// errors at `nodes` points per side of each boundary square.
    pub fn report(&self, grid: usize, nodes: usize) -> Result<AnnulusReport> {
        let an = self.annulus;
        let m = self.multiplicities();
        let inner_q = |x| sheet_values(&m, |j| self.inner.sheet(j, x));
        let outer_q = |x| sheet_values(&m, |j| self.outer.sheet(j, x));

        let mut gap: f64 = 0.0;
        let mut trace_error: f64 = 0.0;
        for x in an.inner_square().boundary_nodes(nodes) {
            let scaled = [
                an.center[0] + (1.0 + an.sigma) * (x[0] - an.center[0]),
                an.center[1] + (1.0 + an.sigma) * (x[1] - an.center[1]),
            ];
            gap = gap.max(g_metric(&inner_q(x), &outer_q(scaled))?);
            trace_error = trace_error.max(g_metric(&self.eval(x), &inner_q(x))?);
        }
        for x in an.outer_square().boundary_nodes(nodes) {
            trace_error = trace_error.max(g_metric(&self.eval(x), &outer_q(x))?);
        }

        let o = an.outer_square().origin();
        let h = 2.0 * an.outer_half() / grid as f64;
        let inside = |x: [f64; 2]| {
            let s = an.level(x);
            (1.0 - 1e-12..=1.0 + an.sigma + 1e-12).contains(&s)
        };
        let lip = (0..=grid)
            .into_par_iter()
            .map(|i| {
                let mut best: f64 = 0.0;
                for j in 0..=grid {
                    let x = [o[0] + i as f64 * h, o[1] + j as f64 * h];
                    if !inside(x) {
                        continue;
                    }
                    let fx = self.eval(x);
                    for d in [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, -1.0]] {
                        let y = [x[0] + d[0] * h, x[1] + d[1] * h];
                        if !inside(y) {
                            continue;
                        }
                        let dist = h * d[0].hypot(d[1]);
                        best = best.max(g_metric(&fx, &self.eval(y)).unwrap_or(0.0) / dist);
                    }
                }
                best
            })
            .collect::<Vec<f64>>()
            .into_iter()
            .fold(0.0, f64::max);

        let (lip_inner, lip_outer) = (self.inner.lipschitz(), self.outer.lipschitz());
        let bound = lip_inner + lip_outer + gap / (an.sigma * an.inner_half);
        let constant = if bound > 0.0 {
            lip / bound
        } else if lip <= 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        Ok(AnnulusReport {
            sigma: an.sigma,
            inner_half: an.inner_half,
            lip,
            lip_inner,
            lip_outer,
            gap,
            bound,
            constant,
            trace_error,
        })
    }
}

// ---------------------------------------------------------------------------
// Cubic subdivision

/// Sheets of `f` near `x` with gradients from central differences, each
/// displaced sheet matched to the central ones by a least-cost assignment.
pub fn local_jets(f: &dyn QMap, x: [f64; 2], h: f64) -> Vec<Jet> {
    let center = f.eval(x);
    let c = center.points();
    let matched = |y: [f64; 2]| -> Vec<[f64; 2]> {
        let v = f.eval(y);
        let v = v.points();
        let cost: Vec<Vec<f64>> =
            c.iter().map(|p| v.iter().map(|w| (p[0] - w[0]).powi(2) + (p[1] - w[1]).powi(2)).collect()).collect();
        let (_, assign) = min_cost_assignment(&cost);
        assign.iter().map(|&k| v[k]).collect()
    };
    let dx = [matched([x[0] + h, x[1]]), matched([x[0] - h, x[1]])];
    let dy = [matched([x[0], x[1] + h]), matched([x[0], x[1] - h])];
    (0..c.len())
        .map(|i| {
            let gx = [(dx[0][i][0] - dx[1][i][0]) / (2.0 * h), (dx[0][i][1] - dx[1][i][1]) / (2.0 * h)];
            let gy = [(dy[0][i][0] - dy[1][i][0]) / (2.0 * h), (dy[0][i][1] - dy[1][i][1]) / (2.0 * h)];
            Jet { a: c[i], x: Matrix22::new(gx[0], gy[0], gx[1], gy[1]) }
        })
        .collect()
}

fn model_value(model: &MaximalDecomposition, z: [f64; 2], x: [f64; 2]) -> QPoint2 {
    let rel = sub2(x, z);
    QPoint::new(
        model
            .parts
            .iter()
            .flat_map(|p| {
                let l = p.x.apply(rel);
                std::iter::repeat_n([p.a[0] + l[0], p.a[1] + l[1]], p.q)
            })
            .collect(),
    )
}

fn gradient_point(jets: impl Iterator<Item = Matrix22>) -> QPoint<Jet> {
    QPoint::new(jets.map(|x| Jet { a: [0.0, 0.0], x }).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubdivisionConfig {
    /// Validation samples per cube side.
    pub samples: usize,
    /// Smallest admissible cell size relative to the domain side.
    pub min_relative_r: f64,
}

impl Default for SubdivisionConfig {
    fn default() -> Self {
        Self { samples: 4, min_relative_r: 1.0 / 1024.0 }
    }
}

/// Gradient thresholds `α ∈ {δ, 2δ, 4δ}` are stored as these multiples of δ.
pub const ALPHA_MULTIPLES: [f64; 3] = [1.0, 2.0, 4.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubdivisionCube {
    pub index: [usize; 2],
    pub center: [f64; 2],
    /// Base point of the Taylor model (the cube center).
    pub taylor_point: [f64; 2],
    pub model: MaximalDecomposition,
    /// Largest `G(f, g)` at the validation nodes.
    pub sup_gap: f64,
    /// Fraction of samples with `G(∇f, ∇g) > α` for each α multiple.
    pub gradient_fractions: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchAttempt {
    pub r: f64,
    pub candidates: usize,
    pub accepted: usize,
    pub uncovered: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubicSubdivision {
    pub domain: Square,
    pub delta: f64,
    pub r: f64,
    /// Cells per side of the underlying lattice.
    pub cells_per_side: usize,
    pub cubes: Vec<SubdivisionCube>,
    pub covered: f64,
    pub uncovered: f64,
    /// Measure of candidate cubes rejected by validation.
    pub dropped: f64,
    pub attempts: Vec<SearchAttempt>,
}

impl CubicSubdivision {
    /// Cubes `D(z, 3r)` fit inside the domain (closure touching its boundary at most).
    pub fn margins_hold(&self) -> bool {
        let o = self.domain.origin();
        let s = self.domain.side;
        self.cubes.iter().all(|c| {
            (0..2).all(|k| c.center[k] - 1.5 * self.r >= o[k] - 1e-12 && c.center[k] + 1.5 * self.r <= o[k] + s + 1e-12)
        })
    }

    pub fn pairwise_disjoint(&self) -> bool {
        let mut seen = std::collections::BTreeSet::new();
        self.cubes.iter().all(|c| seen.insert(c.index))
    }
}

fn validate_cube(
    f: &dyn QMap,
    domain: &Square,
    r: f64,
    index: [usize; 2],
    delta: f64,
    samples: usize,
) -> Result<Option<SubdivisionCube>> {
    let o = domain.origin();
    let center = [o[0] + (index[0] as f64 + 0.5) * r, o[1] + (index[1] as f64 + 0.5) * r];
    let h = FD_STEP * domain.side;
    let jets = local_jets(f, center, h);
    let model = maximal_decomposition(&QPoint::new(jets), MODEL_TOL);
    let model_grad = gradient_point(model.parts.iter().flat_map(|p| std::iter::repeat_n(p.x, p.q)));

    let lo = [center[0] - 0.5 * r, center[1] - 0.5 * r];
    let step = r / samples as f64;
    let mut sup_gap: f64 = 0.0;
    for i in 0..=samples {
        for j in 0..=samples {
            let x = [lo[0] + i as f64 * step, lo[1] + j as f64 * step];
            sup_gap = sup_gap.max(g_metric(&f.eval(x), &model_value(&model, center, x))?);
        }
    }
    let mut counts = [0usize; 3];
    for i in 0..samples {
        for j in 0..samples {
            let x = [lo[0] + (i as f64 + 0.5) * step, lo[1] + (j as f64 + 0.5) * step];
            let grad = gradient_point(local_jets(f, x, h).into_iter().map(|jet| jet.x));
            let d = g_metric(&grad, &model_grad)?;
            for (c, a) in counts.iter_mut().zip(ALPHA_MULTIPLES) {
                if d > a * delta {
                    *c += 1;
                }
            }
        }
    }
    let n = (samples * samples) as f64;
    let gradient_fractions = counts.map(|c| c as f64 / n);
    let fractions_ok = gradient_fractions.iter().zip(ALPHA_MULTIPLES).all(|(fr, a)| *fr <= 1.0 / a);
    if sup_gap <= delta * r && fractions_ok {
        Ok(Some(SubdivisionCube { index, center, taylor_point: center, model, sup_gap, gradient_fractions }))
    } else {
        Ok(None)
    }
}

/// Halving search over `r = side/m` for a cubic subdivision whose cubes carry
/// validated Taylor models: `sup G(f, g) ≤ δr` on each cube and the fraction
/// of samples with `G(∇f, ∇g) > α` at most `δ/α` for `α ∈ {δ, 2δ, 4δ}`.
/// Only cells whose tripled cube stays inside the domain are candidates.
pub fn cubic_subdivision(
    f: &dyn QMap,
    domain: &Square,
    delta: f64,
    cfg: &SubdivisionConfig,
) -> Result<CubicSubdivision> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain { name: "delta", value: delta, domain: "(0, 1)" });
    }
    if cfg.samples == 0 {
        return Err(Error::Domain { name: "samples", value: 0.0, domain: "[1, inf)" });
    }
    let area = domain.area();
    let mut attempts = Vec::new();
    let mut m = 4usize;
    loop {
        let r = domain.side / m as f64;
        if r < cfg.min_relative_r * domain.side {
            let diagnostics = attempts
                .iter()
                .map(|a: &SearchAttempt| {
                    format!("r={:.3e}: {}/{} cubes, uncovered {:.4}", a.r, a.accepted, a.candidates, a.uncovered)
                })
                .collect::<Vec<_>>()
                .join("; ");
            return Err(Error::SearchExhausted { r, diagnostics });
        }
        // Cells too large for r < δ, or whose margin ring alone exceeds δ|U|.
        let ring = 1.0 - ((m - 2) as f64 / m as f64).powi(2);
        if r >= delta || ring > delta {
            m *= 2;
            continue;
        }
        let candidates: Vec<[usize; 2]> = (1..m - 1).flat_map(|i| (1..m - 1).map(move |j| [i, j])).collect();
        let checked: Vec<Option<SubdivisionCube>> = candidates
            .par_iter()
            .map(|&idx| validate_cube(f, domain, r, idx, delta, cfg.samples))
            .collect::<Result<_>>()?;
        let cubes: Vec<SubdivisionCube> = checked.into_iter().flatten().collect();
        let covered = cubes.len() as f64 * r * r;
        let uncovered = area - covered;
        attempts.push(SearchAttempt { r, candidates: candidates.len(), accepted: cubes.len(), uncovered });
        if uncovered <= delta * area {
            let dropped = (candidates.len() - cubes.len()) as f64 * r * r;
            return Ok(CubicSubdivision {
                domain: *domain,
                delta,
                r,
                cells_per_side: m,
                cubes,
                covered,
                uncovered,
                dropped,
                attempts,
            });
        }
        m *= 2;
    }
}

// ---------------------------------------------------------------------------
// Approximating sequence

const GAUSS_NODES: [f64; 4] =
    [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
const GAUSS_WEIGHTS: [f64; 4] =
    [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];

/// Tensor Gauss rule on `[0,1]²`: `(u, v, weight)`.
fn gauss_unit_square() -> impl Iterator<Item = (f64, f64, f64)> {
    (0..4).flat_map(|i| {
        (0..4).map(move |j| {
            (0.5 * (1.0 + GAUSS_NODES[i]), 0.5 * (1.0 + GAUSS_NODES[j]), 0.25 * GAUSS_WEIGHTS[i] * GAUSS_WEIGHTS[j])
        })
    })
}

/// `Σ_j q_j ψ(X_j)`.
fn density(m: &[usize], grads: impl Iterator<Item = Matrix22>, cfg: &PsiConfig) -> f64 {
    m.iter().zip(grads).map(|(&q, x)| q as f64 * psi(&x, cfg)).sum()
}

/// `∫ Σ_j q_j ψ(∇f_j)` over a square by composite Gauss quadrature with
/// `panels × panels` cells.
pub fn psi_bar_energy_of(f: &dyn SheetwiseMap, square: &Square, panels: usize, cfg: &PsiConfig) -> f64 {
    let m = f.multiplicities();
    let o = square.origin();
    let h = square.side / panels as f64;
    (0..panels)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..panels {
                for (u, v, w) in gauss_unit_square() {
                    let x = [o[0] + (i as f64 + u) * h, o[1] + (j as f64 + v) * h];
                    acc += w * h * h * density(&m, (0..m.len()).map(|k| f.sheet_gradient(k, x)), cfg);
                }
            }
            acc
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

/// The map `g^k`: Taylor models on shrunk cells, annulus interpolation on
/// their collars, `f` elsewhere.
pub struct Approximant<'a> {
    f: &'a dyn SheetwiseMap,
    domain: Square,
    r: f64,
    cells_per_side: usize,
    /// Cell lattice index → position in `models`.
    active: Vec<Option<usize>>,
    models: Vec<AffineSheets>,
    inner_half: f64,
    sigma: f64,
}

impl Approximant<'_> {
    fn cell_of(&self, x: [f64; 2]) -> Option<usize> {
        let o = self.domain.origin();
        let n = self.cells_per_side;
        let idx = |k: usize| (((x[k] - o[k]) / self.r).floor().max(0.0) as usize).min(n - 1);
        self.active[idx(0) * n + idx(1)]
    }

    fn annulus(&self, cell: usize) -> Annulus {
        Annulus { center: self.models[cell].base, inner_half: self.inner_half, sigma: self.sigma }
    }

    pub fn multiplicities(&self) -> Vec<usize> {
        self.f.multiplicities()
    }

    pub fn models(&self) -> &[AffineSheets] {
        &self.models
    }

    pub fn sheet(&self, j: usize, x: [f64; 2]) -> [f64; 2] {
        match self.cell_of(x) {
            Some(c) => {
                let model = &self.models[c];
                let t = self.annulus(c).weight(x);
                if t == 0.0 {
                    model.sheet(j, x)
                } else {
                    blend(t, self.f.sheet(j, x), model.sheet(j, x))
                }
            }
            None => self.f.sheet(j, x),
        }
    }

    pub fn eval(&self, x: [f64; 2]) -> QPoint2 {
        sheet_values(&self.multiplicities(), |j| self.sheet(j, x))
    }

    /// Collar of cell `c` as four trapezoids, each mapped from `[0,1]²`; for
    /// every Gauss point yields `(x, weight, ∇t)`.
    fn collar_points(&self, c: usize) -> Vec<([f64; 2], f64, [f64; 2])> {
        let an = self.annulus(c);
        let (rho, big) = (an.inner_half, an.outer_half());
        let mut out = Vec::with_capacity(64);
        for (axis, sign) in [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0)] {
            for (u, v, w) in gauss_unit_square() {
                let xi = rho + u * (big - rho);
                let eta = (2.0 * v - 1.0) * xi;
                let jac = (big - rho) * 2.0 * xi;
                let mut rel = [0.0; 2];
                rel[axis] = sign * xi;
                rel[1 - axis] = eta;
                let mut dt = [0.0; 2];
                dt[axis] = sign / (self.sigma * rho);
                out.push(([an.center[0] + rel[0], an.center[1] + rel[1]], w * jac, dt));
            }
        }
        out
    }

    /// Gradients of the interpolated sheets at a collar point.
    fn collar_gradients(&self, c: usize, x: [f64; 2], dt: [f64; 2]) -> Vec<Matrix22> {
        let model = &self.models[c];
        let t = self.annulus(c).weight(x);
        (0..model.parts.len())
            .map(|j| {
                let (fv, gv) = (self.f.sheet(j, x), model.sheet(j, x));
                let d = sub2(fv, gv);
                let df = self.f.sheet_gradient(j, x);
                df.scale(t)
                    + model.parts[j].2.scale(1.0 - t)
                    + Matrix22::new(d[0] * dt[0], d[0] * dt[1], d[1] * dt[0], d[1] * dt[1])
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproximationReport {
    pub k: usize,
    pub delta: f64,
    pub r: f64,
    /// Relative collar width: shrunk cells are `D(z, (1 − shrink) r)`.
    pub shrink: f64,
    pub sigma: f64,
    pub cubes: usize,
    /// Measure where `g^k` is affine.
    pub covered: f64,
    /// Measure outside the subdivision.
    pub uncovered: f64,
    pub collar: f64,
    /// Measure outside the shrunk cells: `uncovered + collar`.
    pub bad_set: f64,
    /// `sqrt(Σ_j q_j L_j²)` with `L_j` the largest sampled gradient norm of sheet `j`.
    pub lip: f64,
    pub lip_f: f64,
    pub energy: f64,
    pub energy_f: f64,
    pub energy_error: f64,
    /// Trace mismatch on the domain boundary and on the cell boundaries.
    pub trace_error: f64,
}

/// Row of the convergence table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproximationRow {
    pub k: usize,
    pub r_k: f64,
    pub covered: f64,
    pub lip: f64,
    pub energy_psi_bar: f64,
}

impl ApproximationReport {
    pub fn row(&self) -> ApproximationRow {
        ApproximationRow { k: self.k, r_k: self.r, covered: self.covered, lip: self.lip, energy_psi_bar: self.energy }
    }
}

pub struct Approximation<'a> {
    pub map: Approximant<'a>,
    pub subdivision: CubicSubdivision,
    pub report: ApproximationReport,
}

/// Panels per side for the reference energy of `f`.
pub const REFERENCE_PANELS: usize = 64;

/// Builds `g^k` from the subdivision at `δ = 1/k`. The collars have relative
/// width `1/(2k)`, which keeps the measure outside the shrunk cells below
/// `2/k` (the subdivision leaves at most `1/k` uncovered).
pub fn piecewise_affine_sequence<'a>(
    f: &'a dyn SheetwiseMap,
    domain: &Square,
    k: usize,
    cfg: &PsiConfig,
) -> Result<Approximation<'a>> {
    if k < 2 {
        return Err(Error::Domain { name: "k", value: k as f64, domain: "[2, inf)" });
    }
    let delta = 1.0 / k as f64;
    let subdivision = cubic_subdivision(&Sheetwise(f), domain, delta, &SubdivisionConfig::default())?;
    let r = subdivision.r;
    let shrink = 0.5 / k as f64;
    let sigma = shrink / (1.0 - shrink);
    let n = subdivision.cells_per_side;
    let mult = f.multiplicities();

    let mut active = vec![None; n * n];
    let models: Vec<AffineSheets> = subdivision
        .cubes
        .iter()
        .enumerate()
        .map(|(c, cube)| {
            active[cube.index[0] * n + cube.index[1]] = Some(c);
            let z = cube.taylor_point;
            let parts = (0..mult.len()).map(|j| (mult[j], f.sheet(j, z), f.sheet_gradient(j, z))).collect();
            AffineSheets { base: z, parts }
        })
        .collect();
    for (cube, model) in subdivision.cubes.iter().zip(&models) {
        let mut got = cube.model.multiplicities();
        let mut want: Vec<usize> = Vec::new();
        // Sheets of f with equal jets at z form one part of the fitted model.
        let jets: Vec<Jet> =
            model.parts.iter().flat_map(|(q, a, x)| std::iter::repeat_n(Jet { a: *a, x: *x }, *q)).collect();
        want.extend(maximal_decomposition(&QPoint::new(jets), MODEL_TOL).multiplicities());
        got.sort_unstable();
        if got != want {
            return Err(Error::NotSheetwise(format!(
                "cell {:?}: fitted parts {got:?}, sheet parts {want:?}",
                cube.index
            )));
        }
    }

    let map = Approximant {
        f,
        domain: *domain,
        r,
        cells_per_side: n,
        active,
        models,
        inner_half: 0.5 * (1.0 - shrink) * r,
        sigma,
    };

    // Per cell: energy of g and of f on the same pieces, and sampled gradient norms.
    let per_cell: Vec<(f64, f64, Vec<f64>, f64)> = (0..map.models.len())
        .into_par_iter()
        .map(|c| {
            let model = &map.models[c];
            let inner = map.annulus(c).inner_square();
            let mut lips: Vec<f64> = model.parts.iter().map(|p| p.2.singular_values().0).collect();
            let mut e_g = inner.area() * density(&mult, model.parts.iter().map(|p| p.2), cfg);
            let mut e_f = 0.0;
            let o = inner.origin();
            for (u, v, w) in gauss_unit_square() {
                let x = [o[0] + u * inner.side, o[1] + v * inner.side];
                e_f += w * inner.area() * density(&mult, (0..mult.len()).map(|j| f.sheet_gradient(j, x)), cfg);
            }
            let mut trace: f64 = 0.0;
            for (x, w, dt) in map.collar_points(c) {
                let grads = map.collar_gradients(c, x, dt);
                for (l, g) in lips.iter_mut().zip(&grads) {
                    *l = l.max(g.singular_values().0);
                }
                e_g += w * density(&mult, grads.into_iter(), cfg);
                e_f += w * density(&mult, (0..mult.len()).map(|j| f.sheet_gradient(j, x)), cfg);
            }
            let an = map.annulus(c);
            for x in an.outer_square().boundary_nodes(2) {
                for j in 0..mult.len() {
                    let t = an.weight(x);
                    let v = blend(t, f.sheet(j, x), model.sheet(j, x));
                    let d = sub2(v, f.sheet(j, x));
                    trace = trace.max(d[0].hypot(d[1]));
                }
            }
            (e_g, e_f, lips, trace)
        })
        .collect();

    let energy_f = psi_bar_energy_of(f, domain, REFERENCE_PANELS, cfg);
    let diff: f64 = per_cell.iter().map(|(g, f, _, _)| g - f).sum();
    let energy = energy_f + diff;

    // Gradient norms of f itself over the region where g^k = f.
    let grid = 128;
    let o = domain.origin();
    let mut lips = vec![0.0f64; mult.len()];
    for i in 0..=grid {
        for j in 0..=grid {
            let x = [o[0] + domain.side * i as f64 / grid as f64, o[1] + domain.side * j as f64 / grid as f64];
            for (s, l) in lips.iter_mut().enumerate() {
                *l = l.max(f.sheet_gradient(s, x).singular_values().0);
            }
        }
    }
    let lip_f_sampled = mult.iter().zip(&lips).map(|(&q, l)| q as f64 * l * l).sum::<f64>().sqrt();
    let mut trace_error: f64 = 0.0;
    for (_, _, cell_lips, t) in &per_cell {
        for (l, cl) in lips.iter_mut().zip(cell_lips) {
            *l = l.max(*cl);
        }
        trace_error = trace_error.max(*t);
    }
    let sheetwise_f = Sheetwise(f);
    for x in domain.boundary_nodes(64) {
        trace_error = trace_error.max(g_metric(&map.eval(x), &sheetwise_f.eval(x))?);
    }
    let lip = mult.iter().zip(&lips).map(|(&q, l)| q as f64 * l * l).sum::<f64>().sqrt();

    let cell = r * r;
    let shrunk = (1.0 - shrink) * (1.0 - shrink) * cell;
    let cubes = map.models.len();
    let covered = cubes as f64 * shrunk;
    let collar = cubes as f64 * (cell - shrunk);
    let report = ApproximationReport {
        k,
        delta,
        r,
        shrink,
        sigma,
        cubes,
        covered,
        uncovered: subdivision.uncovered,
        collar,
        bad_set: subdivision.uncovered + collar,
        lip,
        lip_f: lip_f_sampled,
        energy,
        energy_f,
        energy_error: (energy - energy_f).abs(),
        trace_error,
    };
    Ok(Approximation { map, subdivision, report })
}

/// Reports for each `k`, in order.
pub fn convergence_table(
    f: &dyn SheetwiseMap,
    domain: &Square,
    ks: &[usize],
    cfg: &PsiConfig,
) -> Result<Vec<ApproximationReport>> {
    ks.iter().map(|&k| piecewise_affine_sequence(f, domain, k, cfg).map(|a| a.report)).collect()
}
