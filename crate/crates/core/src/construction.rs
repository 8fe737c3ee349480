//! The explicit three-plane configuration.
//!
//! For `0 < ε` small, `δ = δ(ε)` is fixed by requiring the three simple
//! 2-vectors
//!
//! ```text
//! v1 = (δe1 + ½(e3 + ε²δe2)) ∧ (δe2 + ½(e4 + ε²δe1))
//! v2 = (δe1 − ½(e3 + ε²δe2)) ∧ (δe2 − ½(e4 + ε²δe1))
//! v3 = ½(e4 + ε²δe1) ∧ (e3 + ε²δe2)
//! ```
//!
//! to have equal norms. Their sum is `2δ²·e12`, and `wi` is the image of `vi`
//! under `R = diag(1, 1, ε, ε)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::{
    ad, classify_bivector, lambda_m, lift_matrix, push_bivector, wedge, Matrix22, MultiVector2, PlaneClass, Vec4,
};
use crate::measures::GrassmannMeasure;

/// Largest ε considered by [`build`]; classification results are asserted below it.
pub const BUILD_EPS_MAX: f64 = 0.2;

/// Upper end of the open ε-interval on which `δ(ε)` exists: `(4/3)^{1/4}`.
pub fn eps_upper_limit() -> f64 {
    (4.0f64 / 3.0).powf(0.25)
}

fn quadratic_coefficients(eps: f64) -> (f64, f64, f64) {
    let e4 = eps.powi(4);
    (16.0 - 8.0 * e4 - 3.0 * e4 * e4, 8.0 - 6.0 * e4, -3.0)
}

/// `(16 − 8ε⁴ − 3ε⁸)t² + (8 − 6ε⁴)t − 3`.
pub fn quadratic_residual(eps: f64, t: f64) -> f64 {
    let (a, b, c) = quadratic_coefficients(eps);
    (a * t + b) * t + c
}

/// Square root of the positive root of [`quadratic_residual`] in `t`.
pub fn delta_of_eps(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < eps_upper_limit()) {
        return Err(Error::Domain { name: "eps", value: eps, domain: "(0, (4/3)^(1/4))" });
    }
    let (a, b, c) = quadratic_coefficients(eps);
    let disc = b * b - 4.0 * a * c;
    // Cancellation-free form of (−b + √disc)/(2a).
    let t = -2.0 * c / (b + disc.sqrt());
    Ok(t.sqrt())
}

/// Factor `c1 = c2` in `v1 = c1·lambda_m(X1)`: `δ²(4 − ε⁴)/4`.
pub fn c1_closed_form(eps: f64, delta: f64) -> f64 {
    delta * delta * (4.0 - eps.powi(4)) / 4.0
}

/// Factor `c3` in `v3 = c3·lambda_m(X3)`: the `e12` coefficient `ε⁴δ²/2`.
pub fn c3_closed_form(eps: f64, delta: f64) -> f64 {
    eps.powi(4) * delta * delta / 2.0
}

/// `X1 = (δ(4 − ε⁴))⁻¹ [[2, −ε²], [−ε², 2]]`.
pub fn x1_closed_form(eps: f64, delta: f64) -> Matrix22 {
    let k = 1.0 / (delta * (4.0 - eps.powi(4)));
    let e2 = eps * eps;
    Matrix22::new(2.0 * k, -e2 * k, -e2 * k, 2.0 * k)
}

/// `|v1|² = (1 − ε⁴/4)²δ⁴ + (1/2 + ε⁴/8)δ² + 1/16`.
pub fn norm1_sq_closed_form(eps: f64, delta: f64) -> f64 {
    let e4 = eps.powi(4);
    let d2 = delta * delta;
    (1.0 - e4 / 4.0).powi(2) * d2 * d2 + (0.5 + e4 / 8.0) * d2 + 1.0 / 16.0
}

/// `|v3|² = (ε⁸δ⁴ + 2ε⁴δ² + 1)/4`.
pub fn norm3_sq_closed_form(eps: f64, delta: f64) -> f64 {
    let e4 = eps.powi(4);
    let d2 = delta * delta;
    0.25 * (e4 * e4 * d2 * d2 + 2.0 * e4 * d2 + 1.0)
}

/// `<w1, e12> = δ²(1 − ε⁴/4)`.
pub fn w1_e12_closed_form(eps: f64, delta: f64) -> f64 {
    delta * delta * (1.0 - eps.powi(4) / 4.0)
}

/// `|w1|² = (1 − ε⁴/4)²δ⁴ + (ε²/2 + ε⁶/8)δ² + ε⁴/16`.
pub fn w1_norm_sq_closed_form(eps: f64, delta: f64) -> f64 {
    let e2 = eps * eps;
    let d2 = delta * delta;
    (1.0 - e2 * e2 / 4.0).powi(2) * d2 * d2 + (e2 / 2.0 + e2.powi(3) / 8.0) * d2 + e2 * e2 / 16.0
}

/// `<w3, e34> = −ε²/2`.
pub fn w3_e34_closed_form(eps: f64) -> f64 {
    -eps * eps / 2.0
}

/// `|w3|² = (ε² + ε⁴δ²)²/4`.
pub fn w3_norm_sq_closed_form(eps: f64, delta: f64) -> f64 {
    0.25 * (eps * eps + eps.powi(4) * delta * delta).powi(2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionBundle {
    pub eps: f64,
    pub delta: f64,
    /// Spanning pairs `(u_i¹, u_i²)` with `v_i = u_i¹ ∧ u_i²`.
    pub pairs: [[Vec4; 2]; 3],
    pub v: [MultiVector2; 3],
    pub w: [MultiVector2; 3],
    pub x: [Matrix22; 3],
    pub c: [f64; 3],
    /// Diagonal of `R`.
    pub r: [f64; 4],
}

pub fn spanning_pairs(eps: f64, delta: f64) -> [[Vec4; 2]; 3] {
    let s = eps * eps * delta;
    [
        [[delta, 0.5 * s, 0.5, 0.0], [0.5 * s, delta, 0.0, 0.5]],
        [[delta, -0.5 * s, -0.5, 0.0], [-0.5 * s, delta, 0.0, -0.5]],
        [[0.5 * s, 0.0, 0.0, 0.5], [0.0, s, 1.0, 0.0]],
    ]
}

pub fn build(eps: f64) -> Result<ConstructionBundle> {
    let delta = delta_of_eps(eps)?;
    if eps > BUILD_EPS_MAX {
        return Err(Error::Domain { name: "eps", value: eps, domain: "(0, 0.2]" });
    }
    let pairs = spanning_pairs(eps, delta);
    let v = pairs.map(|[a, b]| wedge(&a, &b));
    let r = [1.0, 1.0, eps, eps];
    let rm = diag4(r);
    let w = v.map(|vi| push_bivector(&rm, &vi));
    let mut x = [Matrix22::ZERO; 3];
    let mut c = [0.0; 3];
    for i in 0..3 {
        let (xi, ci) = lift_matrix(&v[i])?;
        x[i] = xi;
        c[i] = ci;
    }
    Ok(ConstructionBundle { eps, delta, pairs, v, w, x, c, r })
}

pub fn diag4(d: [f64; 4]) -> [[f64; 4]; 4] {
    std::array::from_fn(|i| std::array::from_fn(|j| if i == j { d[i] } else { 0.0 }))
}

impl ConstructionBundle {
    pub fn r_matrix(&self) -> [[f64; 4]; 4] {
        diag4(self.r)
    }

    /// Unit directions `v_i/|v_i|`, which are also `lambda_m(X_i)/|lambda_m(X_i)|`.
    pub fn rays(&self) -> [MultiVector2; 3] {
        self.v.map(|vi| vi.normalized().expect("nonzero construction vector"))
    }

    /// Barycentric weights `λ_i = c_i/(2δ²)`.
    pub fn weights(&self) -> [f64; 3] {
        self.c.map(|ci| ci / (2.0 * self.delta * self.delta))
    }

    pub fn mu(&self) -> GrassmannMeasure {
        GrassmannMeasure::from_vectors(&self.v)
    }

    pub fn mu0(&self) -> GrassmannMeasure {
        GrassmannMeasure::from_vectors(&self.w)
    }
}

/// `μ = Σ |v_i|·[P_{v_i}]`.
pub fn make_mu(eps: f64) -> Result<GrassmannMeasure> {
    Ok(build(eps)?.mu())
}

/// `μ₀ = Σ |w_i|·[P_{w_i}]`.
pub fn make_mu0(eps: f64) -> Result<GrassmannMeasure> {
    Ok(build(eps)?.mu0())
}

/// One verified identity with the tolerance it was checked against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    pub fn new(name: &str, residual: f64, tolerance: f64) -> Self {
        Self { name: name.into(), residual, tolerance, pass: residual <= tolerance, note: None }
    }

    pub fn with_note(mut self, note: String) -> Self {
        self.note = Some(note);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub eps: f64,
    pub bundle: ConstructionBundle,
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

impl VerificationReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Builds the configuration and checks every identity it is expected to satisfy.
pub fn verify(eps: f64) -> Result<VerificationReport> {
    let b = build(eps)?;
    let (e, d) = (b.eps, b.delta);
    let e12 = MultiVector2::E12;
    let mut checks = Vec::new();

    checks.push(Check::new("quadratic_residual", quadratic_residual(e, d * d).abs(), 1e-12));

    let norms = b.v.map(|v| v.norm());
    checks.push(Check::new("equal_norms_v1_v2", (norms[0] - norms[1]).abs(), 1e-12));
    checks.push(Check::new("equal_norms_v1_v3", (norms[0] - norms[2]).abs(), 1e-12));

    let sum: MultiVector2 = b.v.iter().copied().sum();
    let bary = (sum - e12 * (2.0 * d * d)).norm();
    let alt = (sum - e12 * (2.0 * d)).norm();
    checks.push(
        Check::new("barycenter_2delta2_e12", bary, 1e-12)
            .with_note(format!("v1+v2+v3 = 2δ²·e12; the variant 2δ·e12 has residual {alt:.6e} and does not hold")),
    );

    for (i, v) in b.v.iter().enumerate() {
        checks.push(Check::new(&format!("simple_v{}", i + 1), v.plucker().abs(), 1e-12));
    }
    for (i, (w, [u1, u2])) in b.w.iter().zip(b.pairs.iter()).enumerate() {
        let ru = |u: &Vec4| -> Vec4 { std::array::from_fn(|k| b.r[k] * u[k]) };
        let direct = wedge(&ru(u1), &ru(u2));
        checks.push(Check::new(&format!("w{}_is_R_image", i + 1), w.distance(&direct), 1e-12));
    }
    for i in 0..3 {
        let res = b.v[i].distance(&(lambda_m(&b.x[i]) * b.c[i]));
        checks.push(Check::new(&format!("lift_v{}", i + 1), res, 1e-10));
        checks.push(Check::new(&format!("c{}_positive", i + 1), if b.c[i] > 0.0 { 0.0 } else { 1.0 }, 0.0));
    }

    let c1 = c1_closed_form(e, d);
    let kappa = 4.0 / (d * d * (4.0 - e.powi(4)));
    let display = lambda_m(&b.x[0]).distance(&(b.v[0] * kappa));
    let variant = 4.0 / (d * d * (4.0 - e * e));
    checks.push(Check::new("c1_closed_form", (b.c[0] - c1).abs(), 1e-12).with_note(format!(
        "c1 = c2 = δ²(4−ε⁴)/4; its reciprocal 4/(δ²(4−ε⁴)) is the factor in \
         lambda_m(X1) = κ·v1 (residual {display:.3e}); the variant 4/(δ²(4−ε²)) differs from c1 by {:.6e}",
        (variant - c1).abs()
    )));
    checks.push(Check::new("lambda_m_x1_display", display, 1e-10));
    checks.push(Check::new("c2_equals_c1", (b.c[1] - b.c[0]).abs(), 1e-12));
    let c3 = c3_closed_form(e, d);
    checks.push(Check::new("c3_closed_form", (b.c[2] - c3).abs(), 1e-12).with_note(format!(
        "c3 = ε⁴δ²/2 is the e12 coefficient of v3; the variant ε²δ²/2 differs by {:.6e}",
        (e * e * d * d / 2.0 - c3).abs()
    )));
    checks.push(Check::new("x1_closed_form", (b.x[0] - x1_closed_form(e, d)).frobenius(), 1e-10));

    checks.push(Check::new("norm1_closed_form", (b.v[0].norm_sq() - norm1_sq_closed_form(e, d)).abs(), 1e-12));
    checks.push(Check::new("norm3_closed_form", (b.v[2].norm_sq() - norm3_sq_closed_form(e, d)).abs(), 1e-12));
    checks.push(Check::new("w1_e12_closed_form", (b.w[0][0] - w1_e12_closed_form(e, d)).abs(), 1e-12));
    checks.push(Check::new("w1_norm_closed_form", (b.w[0].norm_sq() - w1_norm_sq_closed_form(e, d)).abs(), 1e-12));
    checks.push(Check::new("w3_e34_closed_form", (b.w[2][5] - w3_e34_closed_form(e)).abs(), 1e-12));
    checks.push(Check::new("w3_norm_closed_form", (b.w[2].norm_sq() - w3_norm_sq_closed_form(e, d)).abs(), 1e-12));
    for (i, k) in [(0, "w1"), (1, "w2")] {
        checks.push(Check::new(&format!("{k}_e34_closed_form"), (b.w[i][5] - e * e / 4.0).abs(), 1e-12));
    }

    let expected = [PlaneClass::Horizontal, PlaneClass::Horizontal, PlaneClass::Vertical];
    for i in 0..3 {
        let class = classify_bivector(&b.w[i], e)?;
        checks.push(
            Check::new(&format!("class_w{}", i + 1), if class == expected[i] { 0.0 } else { 1.0 }, 0.0)
                .with_note(format!("{class:?}")),
        );
    }

    let lambda = b.weights();
    checks.push(Check::new("weights_sum", (lambda.iter().sum::<f64>() - 1.0).abs(), 1e-12));
    checks.push(Check::new("weights_affine_minors", affine_residual(&lambda, &b.x), 1e-10));

    let all_pass = checks.iter().all(|c| c.pass);
    Ok(VerificationReport { eps, bundle: b, checks, all_pass })
}

fn affine_residual(lambda: &[f64; 3], x: &[Matrix22; 3]) -> f64 {
    let mut acc = [0.0; 5];
    for (l, xi) in lambda.iter().zip(x) {
        for (a, m) in acc.iter_mut().zip(ad(xi)) {
            *a += l * m;
        }
    }
    acc.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Envelope values consumed by [`certificate`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeInputs {
    /// Upper bounds for the envelope at `Q[(a, X_i)]`.
    pub upper_at_rays: [f64; 3],
    /// Lower bound for the envelope at `Q[(a, 0)]`.
    pub lower_at_zero: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyconvexityCertificate {
    pub eps: f64,
    pub q: usize,
    pub lambda: [f64; 3],
    pub residual_affine: f64,
    pub residual_sum: f64,
    pub envelope_values: [f64; 3],
    pub envelope_lower_at_zero: f64,
    /// `lower_at_zero − Σ λ_i·upper_i`.
    pub gap: f64,
    pub residual_tolerance: f64,
    pub envelope_tolerance: f64,
    pub valid: bool,
}

/// Convexity in the minors fails at 0 when the weights reproduce `ad(0)` and
/// the lower bound at 0 exceeds the weighted upper bounds at the `X_i`.
pub fn certificate(eps: f64, q: usize, env: &EnvelopeInputs) -> Result<PolyconvexityCertificate> {
    if !(env.lower_at_zero >= 0.0) {
        return Err(Error::InvalidEnvelope(format!("lower bound {} is negative", env.lower_at_zero)));
    }
    if env.upper_at_rays.iter().any(|u| !(*u >= 0.0) || !u.is_finite()) {
        return Err(Error::InvalidEnvelope(format!("upper bounds {:?}", env.upper_at_rays)));
    }
    if q == 0 {
        return Err(Error::Domain { name: "Q", value: 0.0, domain: "Q >= 1" });
    }
    let b = build(eps)?;
    let lambda = b.weights();
    let residual_sum = (lambda.iter().sum::<f64>() - 1.0).abs();
    let residual_affine = affine_residual(&lambda, &b.x);
    let weighted: f64 = lambda.iter().zip(env.upper_at_rays).map(|(l, u)| l * u).sum();
    let gap = env.lower_at_zero - weighted;
    let (residual_tolerance, envelope_tolerance) = (1e-10, 1e-12);
    let valid = lambda.iter().all(|&l| l > 0.0)
        && residual_sum <= residual_tolerance
        && residual_affine <= residual_tolerance
        && env.upper_at_rays.iter().all(|&u| u <= envelope_tolerance)
        && env.lower_at_zero > 0.0
        && gap > 0.0;
    Ok(PolyconvexityCertificate {
        eps,
        q,
        lambda,
        residual_affine,
        residual_sum,
        envelope_values: env.upper_at_rays,
        envelope_lower_at_zero: env.lower_at_zero,
        gap,
        residual_tolerance,
        envelope_tolerance,
        valid,
    })
}
