use super::*;
use crate::construction::build;
use crate::exterior::{lambda_m, Matrix22};
use std::f64::consts::{PI, TAU};

fn flat(q: u32, n: usize) -> FunctionalQGraph {
    affine_graph(MeshSpec::unit(n), &[(q, [0.0, 0.0], Matrix22::ZERO)]).unwrap()
}

fn inverse_r(eps: f64) -> [[f64; 4]; 4] {
    crate::construction::diag4([1.0, 1.0, 1.0 / eps, 1.0 / eps])
}

/// Zero-boundary graphs of every generated family.
fn suite() -> Vec<(String, FunctionalQGraph)> {
    let mut out = Vec::new();
    for seed in 0..6u64 {
        for q in 1..=3 {
            let l = [0.3, 1.0, 3.0][seed as usize % 3];
            out.push((format!("random-{seed}-{q}"), random_lipschitz_graph(seed, l, q, 8).unwrap()));
        }
    }
    let b = build(0.1).unwrap();
    let patch = |x: Matrix22, c: [f64; 2]| Patch { gradient: x, center: c, inner: 0.125, outer: 0.25 };
    out.push((
        "patch-rays".into(),
        patch_graph(&PatchSpec {
            n: 8,
            sheets: vec![vec![patch(b.x[0], [-0.2, -0.2]), patch(b.x[2], [0.2, 0.2])], vec![patch(b.x[1], [0.0, 0.0])]],
        })
        .unwrap(),
    ));
    out
}

#[test]
fn flat_graph_mass_and_tangent() {
    let t = flat(1, 4).triangulate();
    assert!((t.mass() - 1.0).abs() < 1e-12);
    for k in 0..t.triangles().len() {
        assert!((t.tangent(k) - MultiVector2::E12).norm() < 1e-12);
    }
    let gamma = t.gaussian_image();
    assert_eq!(gamma.atoms().len(), 1);
    assert!((gamma.atoms()[0].1 - 1.0).abs() < 1e-12);
}

#[test]
fn affine_graph_mass_is_area_formula() {
    let x = Matrix22::new(0.3, -1.2, 0.7, 2.0);
    let g = affine_graph(MeshSpec::unit(5), &[(1, [0.4, -0.1], x)]).unwrap();
    let t = g.triangulate();
    let expected = lambda_m(&x).norm();
    assert!((t.mass() - expected).abs() < 1e-10);
    let gamma = t.gaussian_image();
    assert_eq!(gamma.atoms().len(), 1);
    assert!((gamma.atoms()[0].0 - lambda_m(&x) * (1.0 / expected)).norm() < 1e-12);
}

#[test]
fn two_parallel_sheets() {
    let mesh = MeshSpec::unit(3);
    let g = affine_graph(mesh, &[(1, [0.0, 1.0], Matrix22::ZERO), (1, [2.0, -1.0], Matrix22::ZERO)]).unwrap();
    let t = g.triangulate();
    assert!((t.mass() - 2.0).abs() < 1e-12);
    let chain = t.boundary();
    assert_eq!(chain.len(), 2 * 4 * 3);
    assert!(chain.values().all(|c| c.abs() == 1));
    let mut heights: Vec<[f64; 2]> =
        chain.keys().flat_map(|&(a, b)| [a, b]).map(|i| [t.vertices()[i][2], t.vertices()[i][3]]).collect();
    heights.sort_by(|a, b| a[0].total_cmp(&b[0]));
    heights.dedup();
    assert_eq!(heights, vec![[0.0, 1.0], [2.0, -1.0]]);
    assert!(!g.is_zero_boundary_graph(2));
}

#[test]
fn closed_torus_has_no_boundary() {
    let (m, n) = (7, 9);
    let vertices: Vec<Vec4> = (0..m * n)
        .map(|k| {
            let (u, v) = (TAU * (k % m) as f64 / m as f64, TAU * (k / m) as f64 / n as f64);
            [u.cos(), u.sin(), v.cos(), v.sin()]
        })
        .collect();
    let id = |i: usize, j: usize| (j % n) * m + i % m;
    let mut triangles = Vec::new();
    for j in 0..n {
        for i in 0..m {
            triangles.push(Triangle([id(i, j), id(i + 1, j), id(i + 1, j + 1)], 1));
            triangles.push(Triangle([id(i, j), id(i + 1, j + 1), id(i, j + 1)], 1));
        }
    }
    let t = TriangulatedCurrent::new(vertices, triangles).unwrap();
    assert!(t.boundary().is_empty());
}

#[test]
fn flat_q_graph_boundary_is_q_square() {
    for q in 1..=3 {
        let g = flat(q, 4);
        assert!(g.is_zero_boundary_graph(q as usize));
        assert!(!g.is_zero_boundary_graph(q as usize + 1));
    }
}

#[test]
fn branched_boundary_is_multiple_circle_polygon() {
    for q in [2, 3] {
        let b = branched_graph(BranchedSpec::new(q, 0.8, 1.0)).unwrap();
        assert!(b.current.has_flat_polygon_boundary(&b.polygon, q as u32));
        assert!(!b.current.has_flat_polygon_boundary(&b.polygon, 1));
        // Edge-cancellation oracle: every interior edge is shared by two
        // triangles with opposite orientation.
        let mut counts: BTreeMap<(usize, usize), (i64, i64)> = BTreeMap::new();
        for Triangle(v, _) in b.current.triangles() {
            for (a, c) in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])] {
                let e = counts.entry((a.min(c), a.max(c))).or_default();
                if a < c {
                    e.0 += 1
                } else {
                    e.1 += 1
                }
            }
        }
        let boundary_edges = counts.values().filter(|(f, r)| f != r).count();
        assert_eq!(boundary_edges, b.spec.sectors);
    }
}

#[test]
fn branched_sheets_are_continuous_across_the_cut() {
    let spec = BranchedSpec::new(2, 1.0, 1.0);
    let (rho, phi) = (0.5, 0.3);
    let a = spec.value(rho, phi);
    let b = spec.value(rho, phi + TAU * 2.0);
    assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
}

#[test]
fn stokes_barycenter_on_random_graphs() {
    for seed in 0..10u64 {
        let q = 1 + seed as usize % 3;
        let g = random_lipschitz_graph(seed, 2.0, q, 6).unwrap();
        assert!(g.is_zero_boundary_graph(q));
        let bary = g.triangulate().gaussian_image().barycenter();
        assert!((bary - MultiVector2::E12 * q as f64).norm() < 1e-8, "seed {seed}: {bary:?}");
    }
    let b = branched_graph(BranchedSpec::new(2, 0.8, 1.0)).unwrap();
    let bary = b.current.gaussian_image().barycenter();
    assert!((bary - MultiVector2::E12 * (2.0 * b.domain_area())).norm() < 1e-8);
}

#[test]
fn partition_is_additive() {
    for (name, g) in suite() {
        let t = g.triangulate();
        let p = t.partition(0.1);
        assert!((p.masses.total() - t.mass()).abs() < 1e-10, "{name}");
        assert!((p.horizontal.mass() - p.masses.m_h).abs() < 1e-10);
        assert!((p.vertical.mass() - p.masses.m_v).abs() < 1e-10);
        assert!((p.mixed.mass() - p.masses.m_m).abs() < 1e-10);
    }
}

#[test]
fn flat_graph_is_horizontal() {
    let p = flat(2, 3).triangulate().partition(0.1);
    assert!((p.masses.m_h - 2.0).abs() < 1e-12);
    assert_eq!(p.masses.m_v + p.masses.m_m, 0.0);
}

/// Smallest singular value of the horizontal projection restricted to the
/// graph plane of `x`, from an orthonormal basis produced by QR.
fn horizontal_smin(x: &Matrix22) -> (f64, f64) {
    let m = nalgebra::Matrix4x2::new(1.0, 0.0, 0.0, 1.0, x.0[0][0], x.0[0][1], x.0[1][0], x.0[1][1]);
    let qr = m.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Keep the orientation of (e1 + X e1, e2 + X e2).
    if r[(0, 0)] * r[(1, 1)] < 0.0 {
        q.set_column(1, &(-q.column(1)));
    }
    let proj = q.fixed_rows::<2>(0).into_owned();
    let sv = proj.singular_values();
    (proj.determinant(), sv.min())
}

#[test]
fn classification_of_x1_graph_matches_svd() {
    let b = build(0.1).unwrap();
    let g = affine_graph(MeshSpec::unit(2), &[(1, [0.0, 0.0], b.x[0])]).unwrap();
    let t = g.triangulate();
    let (det, smin) = horizontal_smin(&b.x[0]);
    let expected = if det > 0.0 && smin >= 1.0 / 1.1 { PlaneClass::Horizontal } else { PlaneClass::Mixed };
    for k in 0..t.triangles().len() {
        assert_eq!(t.classify(k, 0.1), expected);
    }
}

#[test]
fn pushed_rays_are_classified() {
    let b = build(0.1).unwrap();
    let r = b.r_matrix();
    let g = affine_graph(MeshSpec::unit(2), &[(1, [0.0, 0.0], b.x[2])]).unwrap();
    let pushed = g.triangulate().pushforward_linear(&r).unwrap();
    let p = pushed.partition(0.1);
    assert!((p.masses.m_v - pushed.mass()).abs() < 1e-12);
}

#[test]
fn multiplicity_bound_on_horizontal_part() {
    for (name, g) in suite() {
        let t = g.triangulate();
        let h = t.partition(0.1).horizontal;
        let bound = g.q() as f64 * g.mesh().area();
        assert!(h.horizontal_projection_mass() <= bound + 1e-8, "{name}");
    }
}

#[test]
fn identity_pushforward() {
    let g = random_lipschitz_graph(3, 1.0, 2, 4).unwrap();
    let t = g.triangulate();
    let id = crate::construction::diag4([1.0; 4]);
    assert_eq!(t.pushforward_linear(&id).unwrap(), t);
    let singular = crate::construction::diag4([1.0, 1.0, 0.0, 1.0]);
    assert!(matches!(t.pushforward_linear(&singular), Err(Error::SingularMap { .. })));
}

#[test]
fn tangential_jacobian_of_r() {
    for eps in [0.02, 0.1, 0.2] {
        let b = build(eps).unwrap();
        for i in 0..3 {
            let j = tangential_jacobian(&b.r_matrix(), &b.rays()[i]);
            assert!((j - b.w[i].norm() / b.v[i].norm()).abs() < 1e-12);
        }
    }
}

#[test]
fn pushforward_scales_masses_and_gaussian_image() {
    let b = build(0.1).unwrap();
    let r = b.r_matrix();
    let t = random_lipschitz_graph(8, 1.5, 2, 5).unwrap().triangulate();
    let pushed = t.pushforward_linear(&r).unwrap();
    for k in 0..t.triangles().len() {
        let jac = tangential_jacobian(&r, &t.tangent(k));
        assert!((pushed.area(k) - jac * t.area(k)).abs() < 1e-12);
        let image = push_bivector(&r, &t.tangent(k)).normalized().unwrap();
        assert!((pushed.tangent(k) - image).norm() < 1e-10);
    }
}

#[test]
fn r_maps_graph_of_f_to_graph_of_eps_f() {
    let eps = 0.1;
    let g = random_lipschitz_graph(4, 2.0, 3, 6).unwrap();
    let pushed = g.triangulate().pushforward_linear(&build(eps).unwrap().r_matrix()).unwrap();
    let direct = g.scaled_values(eps).triangulate();
    assert!((pushed.mass() - direct.mass()).abs() < 1e-10);
    assert_eq!(pushed.triangles().len(), direct.triangles().len());
    for (a, b) in pushed.vertices().iter().zip(direct.vertices()) {
        assert!((0..4).all(|i| (a[i] - b[i]).abs() < 1e-12));
    }
}

#[test]
fn slicing_flat_domains() {
    let origin = [0.0; 4];
    let disk = BranchedSpec { rings: 15, ..BranchedSpec::new(1, 0.0, 1.0) };
    let disk = branched_graph(disk).unwrap().current;
    assert!((disk.slice_mass(&origin, 0.5) - PI).abs() < 1e-12);
    assert_eq!(disk.slice_mass(&origin, 2.5), 0.0);
    let t = flat(1, 8).triangulate();
    assert!((t.slice_mass(&origin, 0.3) - 0.6 * PI).abs() < 1e-12);
    assert_eq!(t.slice_mass(&origin, 2.0), 0.0);
    assert!((t.mass_in_ball(&origin, 0.5) - PI / 4.0).abs() < 1e-12);
}

fn coarea_ratio(t: &TriangulatedCurrent, p: &Vec4, r: f64) -> f64 {
    let steps = 400;
    let h = r / steps as f64;
    let integral: f64 = (0..=steps)
        .map(|k| {
            let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
            w * t.slice_mass(p, r + k as f64 * h)
        })
        .sum::<f64>()
        * h;
    integral / t.mass_in_ball(p, 2.0 * r)
}

#[test]
fn coarea_inequality_with_slack() {
    let t = flat(1, 8).triangulate();
    assert!(coarea_ratio(&t, &[0.0; 4], 0.2) <= 1.02);
    let b = branched_graph(BranchedSpec::new(2, 0.8, 1.0)).unwrap();
    assert!(coarea_ratio(&b.current, &[0.0; 4], 0.2) <= 1.02);
    assert!(coarea_ratio(&b.current, &[0.3, 0.1, 0.0, 0.0], 0.15) <= 1.02);
}

#[test]
fn generators_are_deterministic() {
    let a = random_lipschitz_graph(42, 1.0, 2, 6).unwrap();
    let b = random_lipschitz_graph(42, 1.0, 2, 6).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, random_lipschitz_graph(43, 1.0, 2, 6).unwrap());
    assert!((a.max_gradient_norm() - 1.0).abs() < 1e-12);
}

#[test]
fn flat_affine_generator() {
    let g = affine_graph(MeshSpec::unit(2), &[(1, [0.0, 0.0], Matrix22::ZERO)]).unwrap();
    assert_eq!(g, flat(1, 2));
}

#[test]
fn discontinuous_graph_lists_offending_edges() {
    let mesh = MeshSpec::unit(2);
    let mut cells = vec![Cell::default(); 4];
    for (k, c) in cells.iter_mut().enumerate() {
        let s = Sheet { multiplicity: 1, a: [if k == 3 { 1.0 } else { 0.0 }, 0.0], x: Matrix22::ZERO };
        c.lower = vec![s];
        c.upper = vec![s];
    }
    let Err(Error::InvalidGraph(problems)) = FunctionalQGraph::new(mesh, 1, cells.clone()) else {
        panic!("discontinuity not detected");
    };
    assert_eq!(problems.len(), 2, "{problems:?}");
    assert!(problems.iter().all(|p| p.contains("(1,1)")));
    cells[0].lower[0].multiplicity = 2;
    assert!(FunctionalQGraph::new(mesh, 1, cells).is_err());
}

#[test]
fn graph_json_round_trip() {
    let g = random_lipschitz_graph(1, 1.0, 2, 3).unwrap();
    let s = serde_json::to_string(&g).unwrap();
    assert_eq!(serde_json::from_str::<FunctionalQGraph>(&s).unwrap(), g);
    let t = g.triangulate();
    let s = serde_json::to_string(&t).unwrap();
    assert_eq!(serde_json::from_str::<TriangulatedCurrent>(&s).unwrap(), t);
}

#[test]
fn chain_inequalities_after_inverse_r() {
    let eps = 0.1;
    let bundle = build(eps).unwrap();
    for (name, g) in suite() {
        let big_g = g.triangulate().pushforward_linear(&inverse_r(eps)).unwrap();
        let c = ChainCheck::evaluate(&big_g, g.q(), g.mesh().area(), &bundle);
        assert!(c.barycenter_slack >= -1e-8, "{name}: {c:?}");
        assert!(c.multiplicity_slack >= -1e-8, "{name}: {c:?}");
        assert!(c.summed_slack >= -1e-8, "{name}: {c:?}");
        assert!(c.mixed_vertical_slack() >= -1e-8, "{name}: {c:?}");
        assert!(c.assembled_slack >= -1e-8, "{name}: {c:?}");
    }
}

#[test]
fn exact_atoms_are_found() {
    let eps = 0.1;
    let bundle = build(eps).unwrap();
    // The graph of X_3 has tangent P_{v_3}, so its image under R has tangent P_{w_3}.
    let g = affine_graph(MeshSpec::unit(2), &[(1, [0.0, 0.0], bundle.x[2])]).unwrap();
    let t = g.triangulate().pushforward_linear(&bundle.r_matrix()).unwrap();
    let (special, rest) = exact_atom_masses(&t, &bundle, 1e-9);
    assert!((special[2] - t.mass()).abs() < 1e-12);
    assert_eq!(rest, 0.0);
}

#[test]
fn lower_bound_ratio_on_suite() {
    for (name, g) in suite() {
        let m = lower_bound_ratio(&g.triangulate(), 0.1);
        assert!(m.m_m >= m.m_v / 200.0 - 1e-8, "{name}: {m:?}");
    }
}
