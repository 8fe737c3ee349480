//! Exact intersections of a flat triangle in `R⁴` with a round ball.

use std::f64::consts::TAU;

use crate::exterior::{dot4, Vec4};

type P2 = [f64; 2];

fn cross(a: P2, b: P2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn dot(a: P2, b: P2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn minus(a: P2, b: P2) -> P2 {
    [a[0] - b[0], a[1] - b[1]]
}

/// The triangle in in-plane coordinates centered at the projection of `p`,
/// and the radius of the circle `plane ∩ ∂B_ρ(p)` (`None` if empty).
fn planar_section(tri: &[Vec4; 3], p: &Vec4, rho: f64) -> Option<([P2; 3], f64)> {
    let [a, b, c] = tri;
    let ab: Vec4 = std::array::from_fn(|i| b[i] - a[i]);
    let ac: Vec4 = std::array::from_fn(|i| c[i] - a[i]);
    let ap: Vec4 = std::array::from_fn(|i| p[i] - a[i]);
    let lab = dot4(&ab, &ab).sqrt();
    let e1 = ab.map(|x| x / lab);
    let proj = dot4(&ac, &e1);
    let w: Vec4 = std::array::from_fn(|i| ac[i] - proj * e1[i]);
    let lw = dot4(&w, &w).sqrt();
    let e2 = w.map(|x| x / lw);
    let (px, py) = (dot4(&ap, &e1), dot4(&ap, &e2));
    let dist_sq = (dot4(&ap, &ap) - px * px - py * py).max(0.0);
    let r_sq = rho * rho - dist_sq;
    if !(r_sq > 0.0) {
        return None;
    }
    let center = [px, py];
    let tri2 = [minus([0.0, 0.0], center), minus([lab, 0.0], center), minus([proj, lw], center)];
    Some((tri2, r_sq.sqrt()))
}

/// Parameters `t ∈ [0, 1]` where the segment `a + t(b − a)` meets the circle of radius `r`.
fn segment_circle(a: P2, b: P2, r: f64) -> Vec<f64> {
    let d = minus(b, a);
    let qa = dot(d, d);
    let qb = 2.0 * dot(a, d);
    let qc = dot(a, a) - r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 || qa == 0.0 {
        return Vec::new();
    }
    let s = disc.sqrt();
    [(-qb - s) / (2.0 * qa), (-qb + s) / (2.0 * qa)]
        .into_iter()
        .filter(|t| (-1e-12..=1.0 + 1e-12).contains(t))
        .map(|t| t.clamp(0.0, 1.0))
        .collect()
}

fn inside(tri: &[P2; 3], x: P2) -> bool {
    let scale = dot(minus(tri[1], tri[0]), minus(tri[1], tri[0])).max(1e-300);
    (0..3).all(|k| cross(minus(tri[(k + 1) % 3], tri[k]), minus(x, tri[k])) >= -1e-13 * scale)
}

pub(super) fn arc_length_in_triangle(tri: &[Vec4; 3], p: &Vec4, rho: f64) -> f64 {
    let Some((t, r)) = planar_section(tri, p, rho) else {
        return 0.0;
    };
    let mut angles: Vec<f64> = Vec::new();
    for k in 0..3 {
        let (a, b) = (t[k], t[(k + 1) % 3]);
        for s in segment_circle(a, b, r) {
            let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            angles.push(x[1].atan2(x[0]).rem_euclid(TAU));
        }
    }
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    let on_circle = |theta: f64| [r * theta.cos(), r * theta.sin()];
    match angles.len() {
        0 => {
            if inside(&t, on_circle(0.0)) {
                TAU * r
            } else {
                0.0
            }
        }
        1 => {
            if inside(&t, on_circle(angles[0] + 0.5 * TAU)) {
                TAU * r
            } else {
                0.0
            }
        }
        n => (0..n)
            .map(|k| {
                let start = angles[k];
                let end = if k + 1 < n { angles[k + 1] } else { angles[0] + TAU };
                if inside(&t, on_circle(0.5 * (start + end))) {
                    r * (end - start)
                } else {
                    0.0
                }
            })
            .sum(),
    }
}

/// Signed area of the disk of radius `r` intersected with the triangle `(0, a, b)`.
fn disk_wedge_area(a: P2, b: P2, r: f64) -> f64 {
    let mut pts = vec![a];
    let d = minus(b, a);
    for s in segment_circle(a, b, r) {
        if s > 0.0 && s < 1.0 {
            pts.push([a[0] + s * d[0], a[1] + s * d[1]]);
        }
    }
    pts.push(b);
    pts.windows(2)
        .map(|w| {
            let (p, q) = (w[0], w[1]);
            let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            if dot(mid, mid) <= r * r {
                0.5 * cross(p, q)
            } else {
                0.5 * r * r * cross(p, q).atan2(dot(p, q))
            }
        })
        .sum()
}

pub(super) fn area_in_ball(tri: &[Vec4; 3], p: &Vec4, rho: f64) -> f64 {
    let Some((t, r)) = planar_section(tri, p, rho) else {
        return 0.0;
    };
    (0..3).map(|k| disk_wedge_area(t[k], t[(k + 1) % 3], r)).sum::<f64>().abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn flat(a: P2, b: P2, c: P2) -> [Vec4; 3] {
        [[a[0], a[1], 0.0, 0.0], [b[0], b[1], 0.0, 0.0], [c[0], c[1], 0.0, 0.0]]
    }

    #[test]
    fn circle_inside_triangle() {
        let tri = flat([-10.0, -10.0], [10.0, -10.0], [0.0, 10.0]);
        let p = [0.0, -1.0, 0.0, 0.0];
        assert!((arc_length_in_triangle(&tri, &p, 1.0) - TAU).abs() < 1e-12);
        assert!((area_in_ball(&tri, &p, 1.0) - PI).abs() < 1e-12);
    }

    #[test]
    fn offset_sphere_cuts_smaller_circle() {
        let tri = flat([-10.0, -10.0], [10.0, -10.0], [0.0, 10.0]);
        let p = [0.0, -1.0, 0.6, 0.0];
        let r = (1.0f64 - 0.36).sqrt();
        assert!((arc_length_in_triangle(&tri, &p, 1.0) - TAU * r).abs() < 1e-12);
        assert_eq!(arc_length_in_triangle(&tri, &p, 0.5), 0.0);
    }

    #[test]
    fn quarter_circle_at_right_corner() {
        let tri = flat([0.0, 0.0], [2.0, 0.0], [0.0, 2.0]);
        let p = [0.0, 0.0, 0.0, 0.0];
        assert!((arc_length_in_triangle(&tri, &p, 1.0) - PI / 2.0).abs() < 1e-12);
        assert!((area_in_ball(&tri, &p, 1.0) - PI / 4.0).abs() < 1e-12);
        assert!((area_in_ball(&tri, &p, 10.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn area_matches_grid_count() {
        let tri = flat([0.1, -0.4], [1.3, 0.2], [-0.2, 0.9]);
        let p = [0.3, 0.2, 0.0, 0.0];
        let rho = 0.55;
        let exact = area_in_ball(&tri, &p, rho);
        let t: [P2; 3] = [[0.1, -0.4], [1.3, 0.2], [-0.2, 0.9]];
        let n = 1500;
        let mut count = 0usize;
        for i in 0..n {
            for j in 0..n {
                let x = [-0.5 + 2.0 * (i as f64 + 0.5) / n as f64, -0.5 + 2.0 * (j as f64 + 0.5) / n as f64];
                if inside(&t, x) && (x[0] - 0.3).hypot(x[1] - 0.2) <= rho {
                    count += 1;
                }
            }
        }
        let estimate = count as f64 * 4.0 / (n * n) as f64;
        assert!((exact - estimate).abs() < 2e-3, "{exact} vs {estimate}");
    }
}
