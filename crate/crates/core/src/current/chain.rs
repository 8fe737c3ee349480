//! Mass inequalities for zero-boundary graph currents against the three
//! special planes `P_{w_i}`.

use serde::{Deserialize, Serialize};

use crate::construction::ConstructionBundle;

use super::{PartitionMasses, TriangulatedCurrent};

/// Constant in the mixed-versus-vertical mass inequality.
pub const MIXED_VERTICAL_CONSTANT: f64 = 1.0 / 200.0;

/// Masses of the triangles whose unit tangent lies within `tol` of
/// `w_i/|w_i|`, and the mass of the remaining triangles.
pub fn exact_atom_masses(g: &TriangulatedCurrent, bundle: &ConstructionBundle, tol: f64) -> ([f64; 3], f64) {
    let targets = bundle.w.map(|w| w.normalized().expect("nonzero w"));
    let mut special = [0.0; 3];
    let mut rest = 0.0;
    for k in 0..g.triangles().len() {
        let tangent = g.tangent(k);
        let m = g.triangles()[k].1 as f64 * g.area(k);
        match targets.iter().position(|t| t.distance(&tangent) <= tol) {
            Some(i) => special[i] += m,
            None => rest += m,
        }
    }
    (special, rest)
}

/// Partition masses used for the mixed-versus-vertical ratio.
pub fn lower_bound_ratio(t: &TriangulatedCurrent, eps: f64) -> PartitionMasses {
    t.partition(eps).masses
}

/// The chain of inequalities evaluated on one zero-boundary graph current `G`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainCheck {
    pub eps: f64,
    pub q: usize,
    pub domain_area: f64,
    pub mass: f64,
    /// `m(G^i)` for the exact planes `P_{w_i}`.
    pub m_special: [f64; 3],
    /// Mass off the three exact planes.
    pub m_rest: f64,
    pub partition: PartitionMasses,
    /// `(2|w1|/|w3|) m(G³) − (m(G¹) + m(G²)) + (4|w1|/ε²) m(G^NS)`.
    pub barycenter_slack: f64,
    /// `m(G) − Q|D|`.
    pub multiplicity_slack: f64,
    /// `(1 + 2|w1|/|w3|) m(G³) + (1 + 4|w1|/ε²) m(G^NS) − Q|D|`, the sum of the two above.
    pub summed_slack: f64,
    /// `[(1/C)(1 + 2|w1|/|w3|) + 1 + 4|w1|/ε²]·m(G^NS) − Q|D|`.
    pub assembled_slack: f64,
}

impl ChainCheck {
    pub fn evaluate(g: &TriangulatedCurrent, q: usize, domain_area: f64, bundle: &ConstructionBundle) -> Self {
        let eps = bundle.eps;
        let (w1, w3) = (bundle.w[0].norm(), bundle.w[2].norm());
        let (m_special, m_rest) = exact_atom_masses(g, bundle, 1e-9);
        let mass = g.mass();
        let qd = q as f64 * domain_area;
        let barycenter_slack =
            2.0 * w1 / w3 * m_special[2] - (m_special[0] + m_special[1]) + 4.0 * w1 / (eps * eps) * m_rest;
        let summed_slack = (1.0 + 2.0 * w1 / w3) * m_special[2] + (1.0 + 4.0 * w1 / (eps * eps)) * m_rest - qd;
        let factor = (1.0 / MIXED_VERTICAL_CONSTANT) * (1.0 + 2.0 * w1 / w3) + 1.0 + 4.0 * w1 / (eps * eps);
        Self {
            eps,
            q,
            domain_area,
            mass,
            m_special,
            m_rest,
            partition: g.partition(eps).masses,
            barycenter_slack,
            multiplicity_slack: mass - qd,
            summed_slack,
            assembled_slack: factor * m_rest - qd,
        }
    }

    /// Slack of `m(T^M) >= C·m(T^V)`.
    pub fn mixed_vertical_slack(&self) -> f64 {
        self.partition.m_m - MIXED_VERTICAL_CONSTANT * self.partition.m_v
    }
}
