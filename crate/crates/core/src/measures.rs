//! Atomic measures on the oriented Grassmannian of 2-planes in `R⁴`, stored
//! as weighted unit simple 2-vectors.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::transport_cost;
use crate::construction::ConstructionBundle;
use crate::current::{FunctionalQGraph, MeshSpec, PartitionMasses, TriangulatedCurrent};
use crate::error::{Error, Result};
use crate::exterior::{classify_plane_with, Closure, MultiVector2, OrientedPlane, PlaneClass, SIMPLE_TOL};

/// Atoms closer than this (coordinatewise, after quantization) are merged.
const MERGE_QUANTUM: f64 = 1e-11;

/// Relative tolerance under which two total masses count as equal.
pub const EQUAL_MASS_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(MultiVector2, f64)>", into = "Vec<(MultiVector2, f64)>")]
pub struct GrassmannMeasure {
    atoms: Vec<(MultiVector2, f64)>,
}

impl TryFrom<Vec<(MultiVector2, f64)>> for GrassmannMeasure {
    type Error = Error;

    fn try_from(atoms: Vec<(MultiVector2, f64)>) -> Result<Self> {
        Self::new(atoms)
    }
}

impl From<GrassmannMeasure> for Vec<(MultiVector2, f64)> {
    fn from(m: GrassmannMeasure) -> Self {
        m.atoms
    }
}

impl GrassmannMeasure {
    /// Validates that every support point is a unit simple 2-vector and every
    /// weight is positive.
    pub fn new(atoms: Vec<(MultiVector2, f64)>) -> Result<Self> {
        for (v, w) in &atoms {
            let defect = v.plucker().abs().max((v.norm() - 1.0).abs());
            if !(defect <= SIMPLE_TOL) {
                return Err(Error::NotSimple { defect });
            }
            if !(*w > 0.0 && w.is_finite()) {
                return Err(Error::Domain { name: "weight", value: *w, domain: "(0, ∞)" });
            }
        }
        Ok(Self { atoms })
    }

    /// `Σ |v_i|·[v_i/|v_i|]` for nonzero simple `v_i`.
    pub fn from_vectors(vectors: &[MultiVector2]) -> Self {
        let atoms = vectors.iter().map(|v| (v.normalized().expect("nonzero 2-vector"), v.norm())).collect();
        Self { atoms }
    }

    /// Builds the measure from trusted atoms, merging coinciding support points.
    /// The result is ordered by support point.
    pub fn merged_from_atoms(atoms: Vec<(MultiVector2, f64)>) -> Self {
        let mut merged: BTreeMap<[i64; 6], (MultiVector2, f64)> = BTreeMap::new();
        for (v, w) in atoms {
            let key = v.0.map(|c| (c / MERGE_QUANTUM).round() as i64);
            merged.entry(key).and_modify(|e| e.1 += w).or_insert((v, w));
        }
        Self { atoms: merged.into_values().collect() }
    }

    pub fn atoms(&self) -> &[(MultiVector2, f64)] {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    /// `∫ ω dμ(ω)`.
    pub fn barycenter(&self) -> MultiVector2 {
        self.atoms.iter().map(|(v, w)| *v * *w).sum()
    }

    pub fn mass_where(&self, pred: impl Fn(&MultiVector2) -> bool) -> f64 {
        self.atoms.iter().filter(|(v, _)| pred(v)).map(|a| a.1).sum()
    }

    pub fn mass_by_class(&self, eps: f64, closure: Closure) -> PartitionMasses {
        let mut masses = PartitionMasses { eps, ..Default::default() };
        for (v, w) in &self.atoms {
            let plane = OrientedPlane::from_simple(v).expect("validated atom");
            match classify_plane_with(&plane, eps, closure) {
                PlaneClass::Horizontal => masses.m_h += w,
                PlaneClass::Vertical => masses.m_v += w,
                PlaneClass::Mixed => masses.m_m += w,
            }
        }
        masses
    }

    /// Probability measure with the same support; `None` for the zero measure.
    pub fn normalized(&self) -> Option<Self> {
        let m = self.total_mass();
        (m > 0.0).then(|| Self { atoms: self.atoms.iter().map(|&(v, w)| (v, w / m)).collect() })
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { atoms: self.atoms.iter().map(|&(v, w)| (v, w * s)).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        Self::merged_from_atoms(atoms)
    }
}

/// How [`transport_distance`] compared its inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransportMode {
    /// Equal total masses: plain 1-Wasserstein distance.
    Raw,
    /// Unequal masses: distance between the normalized measures plus the
    /// absolute mass difference.
    NormalizedWithPenalty,
}

fn wasserstein(mu: &GrassmannMeasure, nu: &GrassmannMeasure) -> f64 {
    let cost: Vec<Vec<f64>> =
        mu.atoms.iter().map(|(a, _)| nu.atoms.iter().map(|(b, _)| a.distance(b)).collect()).collect();
    let supply: Vec<f64> = mu.atoms.iter().map(|a| a.1).collect();
    // Rescale the demand so both sides carry exactly the same mass.
    let s = mu.total_mass() / nu.total_mass();
    let demand: Vec<f64> = nu.atoms.iter().map(|a| a.1 * s).collect();
    transport_cost(&supply, &demand, &cost)
}

/// 1-Wasserstein distance for the Euclidean metric of `Λ²R⁴`, with the mode used.
pub fn transport_distance_with_mode(mu: &GrassmannMeasure, nu: &GrassmannMeasure) -> Result<(f64, TransportMode)> {
    if mu.is_empty() || nu.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    let (a, b) = (mu.total_mass(), nu.total_mass());
    if (a - b).abs() <= EQUAL_MASS_TOL * a.max(b).max(1.0) {
        return Ok((wasserstein(mu, nu), TransportMode::Raw));
    }
    let (mu1, nu1) = (mu.normalized().expect("nonempty"), nu.normalized().expect("nonempty"));
    Ok((wasserstein(&mu1, &nu1) + (a - b).abs(), TransportMode::NormalizedWithPenalty))
}

pub fn transport_distance(mu: &GrassmannMeasure, nu: &GrassmannMeasure) -> Result<f64> {
    Ok(transport_distance_with_mode(mu, nu)?.0)
}

/// Which version of the Gaussian image is compared with `μ₀`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    /// Both measures normalized to probability measures.
    #[default]
    Normalized,
    /// Measures as they are (mass penalty applies when the masses differ).
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstructionReport {
    pub q: usize,
    pub eps: f64,
    /// Masses on the open horizontal and vertical sets and their complement.
    pub masses: PartitionMasses,
    pub ratio: f64,
    pub distance_to_mu0: f64,
    pub mode: TransportMode,
}

/// One CSV line of an obstruction sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstructionRow {
    pub graph_id: String,
    pub seed: u64,
    #[serde(rename = "Q")]
    pub q: usize,
    pub eps: f64,
    #[serde(rename = "mH")]
    pub m_h: f64,
    #[serde(rename = "mV")]
    pub m_v: f64,
    #[serde(rename = "mM")]
    pub m_m: f64,
    pub ratio: f64,
    pub w1_dist_mu0: f64,
}

impl ObstructionReport {
    pub fn row(&self, graph_id: &str, seed: u64) -> ObstructionRow {
        ObstructionRow {
            graph_id: graph_id.to_string(),
            seed,
            q: self.q,
            eps: self.eps,
            m_h: self.masses.m_h,
            m_v: self.masses.m_v,
            m_m: self.masses.m_m,
            ratio: self.ratio,
            w1_dist_mu0: self.distance_to_mu0,
        }
    }
}

/// Masses of the Gaussian image of a zero-boundary current on the classifier
/// sets and its distance to `μ₀`. Plane classes use the open thresholds, so
/// planes on the threshold count as mixed.
pub fn obstruction_report_current(
    t: &TriangulatedCurrent,
    q: usize,
    bundle: &ConstructionBundle,
    comparison: Comparison,
) -> Result<ObstructionReport> {
    let gamma = t.gaussian_image();
    let masses = gamma.mass_by_class(bundle.eps, Closure::Open);
    let mu0 = bundle.mu0();
    let (distance_to_mu0, mode) = match comparison {
        Comparison::Normalized => {
            let g = gamma.normalized().ok_or(Error::EmptyMeasure)?;
            transport_distance_with_mode(&g, &mu0.normalized().expect("nonzero μ₀"))?
        }
        Comparison::Raw => transport_distance_with_mode(&gamma, &mu0)?,
    };
    Ok(ObstructionReport { q, eps: bundle.eps, masses, ratio: masses.ratio(), distance_to_mu0, mode })
}

pub fn obstruction_report(
    g: &FunctionalQGraph,
    bundle: &ConstructionBundle,
    comparison: Comparison,
) -> Result<ObstructionReport> {
    if !g.is_zero_boundary_graph(g.q()) {
        return Err(Error::NotZeroBoundary);
    }
    obstruction_report_current(&g.triangulate(), g.q(), bundle, comparison)
}

/// An accepted step of [`adversarial_search`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub iteration: usize,
    pub report: ObstructionReport,
}

/// Random local search over zero-boundary Q-graphs on an `n × n` mesh that
/// tries to bring the normalized Gaussian image close to `μ₀`. Each
/// iteration moves one interior node of one sheet; moves that lower the
/// transport distance are kept. Returns the starting point and every
/// accepted improvement, in order.
pub fn adversarial_search(
    bundle: &ConstructionBundle,
    q: usize,
    n: usize,
    iterations: usize,
    seed: u64,
) -> Result<Vec<FrontierPoint>> {
    if q == 0 || n < 2 {
        return Err(Error::Degenerate(format!("adversarial search needs Q >= 1 and n >= 2 (got Q = {q}, n = {n})")));
    }
    let mesh = MeshSpec::unit(n);
    let side = n + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sheets: Vec<Vec<[f64; 2]>> = (0..q)
        .map(|_| {
            (0..side * side)
                .map(|k| {
                    if mesh.is_boundary_node(k % side, k / side) {
                        [0.0, 0.0]
                    } else {
                        [rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)]
                    }
                })
                .collect()
        })
        .collect();
    let evaluate = |sheets: &[Vec<[f64; 2]>]| -> Result<ObstructionReport> {
        let spec: Vec<(u32, Vec<[f64; 2]>)> = sheets.iter().map(|v| (1, v.clone())).collect();
        let g = FunctionalQGraph::from_node_values(mesh, &spec)?;
        obstruction_report(&g, bundle, Comparison::Normalized)
    };
    let mut best = evaluate(&sheets)?;
    let mut frontier = vec![FrontierPoint { iteration: 0, report: best.clone() }];
    let interior: Vec<usize> = (0..side * side).filter(|&k| !mesh.is_boundary_node(k % side, k / side)).collect();
    let (mut step, mut failures) = (0.2, 0usize);
    for iteration in 1..=iterations {
        let s = rng.gen_range(0..q);
        let k = interior[rng.gen_range(0..interior.len())];
        let old = sheets[s][k];
        sheets[s][k] = [old[0] + rng.gen_range(-step..=step), old[1] + rng.gen_range(-step..=step)];
        let report = evaluate(&sheets)?;
        if report.distance_to_mu0 < best.distance_to_mu0 {
            best = report.clone();
            frontier.push(FrontierPoint { iteration, report });
            failures = 0;
        } else {
            sheets[s][k] = old;
            failures += 1;
            if failures >= 50 {
                step = (step * 0.7).max(1e-3);
                failures = 0;
            }
        }
    }
    Ok(frontier)
}
