//! End-to-end runs through the public API.

use qgraph::approx::{piecewise_affine_sequence, SheetwiseMap, SmoothProfile, Square};
use qgraph::construction::{build, certificate, EnvelopeInputs};
use qgraph::current::{affine_graph, random_lipschitz_graph, MeshSpec};
use qgraph::energy::{envelope_bracket, OptimizerConfig, PsiConfig, Target};
use qgraph::measures::{obstruction_report, Comparison};
use qgraph::{Error, Matrix22};

#[test]
fn bracket_feeds_certificate() {
    let opt = OptimizerConfig { mesh_n: 4, starts: 2, ..Default::default() };
    let zero = envelope_bracket(0.1, 1, Target::Zero, &opt).unwrap();
    let mut upper = [0.0; 3];
    for (i, u) in upper.iter_mut().enumerate() {
        *u = envelope_bracket(0.1, 1, Target::Ray(i), &opt).unwrap().upper.value;
    }
    let lower = zero.lower.unwrap().value;
    let cert = certificate(0.1, 1, &EnvelopeInputs { upper_at_rays: upper, lower_at_zero: lower }).unwrap();
    assert!(cert.valid);
    assert_eq!(cert.gap, lower);
}

#[test]
fn obstruction_of_flat_and_random_graphs() {
    let bundle = build(0.1).unwrap();
    let flat = affine_graph(MeshSpec::unit(3), &[(2, [0.0, 0.0], Matrix22::ZERO)]).unwrap();
    let r = obstruction_report(&flat, &bundle, Comparison::Normalized).unwrap();
    assert_eq!((r.masses.m_v, r.masses.m_m), (0.0, 0.0));
    assert!((r.masses.m_h - 2.0).abs() < 1e-12);

    let g = random_lipschitz_graph(1, 3.0, 2, 6).unwrap();
    let r = obstruction_report(&g, &bundle, Comparison::Normalized).unwrap();
    assert!(r.distance_to_mu0 > 0.0);
    assert!(r.masses.m_v == 0.0 || r.ratio >= 1.0 / 200.0 - 1e-8);
}

#[test]
fn tilted_graph_is_not_zero_boundary() {
    let bundle = build(0.1).unwrap();
    let g = affine_graph(MeshSpec::unit(2), &[(1, [0.0, 0.0], Matrix22::diag(1.0, 1.0))]).unwrap();
    assert!(matches!(obstruction_report(&g, &bundle, Comparison::Normalized), Err(Error::NotZeroBoundary)));
}

#[test]
fn approximation_keeps_boundary_and_multiplicities() {
    let f = SmoothProfile::two_sheet();
    let cfg = PsiConfig::new(0.1).unwrap();
    let a = piecewise_affine_sequence(&f, &f.domain, 8, &cfg).unwrap();
    assert_eq!(a.map.multiplicities(), f.multiplicities());
    assert!(a.report.trace_error <= 1e-9);
    assert!(a.report.bad_set <= 2.0 / 8.0);
    assert!(piecewise_affine_sequence(&f, &Square::unit(), 1, &cfg).is_err());
}
