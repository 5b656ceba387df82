//! Planar convex hulls and distances between convex polygons.

use nalgebra::DVector;

type Pt = [f64; 2];

fn cross(o: Pt, a: Pt, b: Pt) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn pt(v: &DVector<f64>) -> Pt {
    [v[0], v[1]]
}

/// Vertices of the convex hull in counter-clockwise order (monotone chain).
///
/// Collinear boundary points are dropped. Degenerate inputs return one or
/// two points.
pub fn convex_hull_2d(points: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut p: Vec<Pt> = points.iter().map(pt).collect();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() <= 2 {
        return p.into_iter().map(|q| DVector::from_row_slice(&q)).collect();
    }
    let mut hull: Vec<Pt> = Vec::with_capacity(2 * p.len());
    for &q in &p {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
            hull.pop();
        }
        hull.push(q);
    }
    let lower_len = hull.len() + 1;
    for &q in p.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
            hull.pop();
        }
        hull.push(q);
    }
    hull.pop();
    hull.into_iter().map(|q| DVector::from_row_slice(&q)).collect()
}

fn segment_distance(x: Pt, a: Pt, b: Pt) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ax = [x[0] - a[0], x[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ax[0] * ab[0] + ax[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d = [ax[0] - t * ab[0], ax[1] - t * ab[1]];
    (d[0] * d[0] + d[1] * d[1]).sqrt()
}

/// Whether `x` lies in the counter-clockwise convex polygon `hull`, with
/// boundary tolerance `tol`.
pub fn polygon_contains(hull: &[DVector<f64>], x: &DVector<f64>, tol: f64) -> bool {
    distance_to_polygon(hull, x) <= tol
}

/// Euclidean distance from `x` to the convex polygon (zero inside).
pub fn distance_to_polygon(hull: &[DVector<f64>], x: &DVector<f64>) -> f64 {
    let q = pt(x);
    match hull.len() {
        0 => f64::INFINITY,
        1 => segment_distance(q, pt(&hull[0]), pt(&hull[0])),
        2 => segment_distance(q, pt(&hull[0]), pt(&hull[1])),
        k => {
            let inside = (0..k).all(|i| cross(pt(&hull[i]), pt(&hull[(i + 1) % k]), q) >= 0.0);
            if inside {
                return 0.0;
            }
            (0..k)
                .map(|i| segment_distance(q, pt(&hull[i]), pt(&hull[(i + 1) % k])))
                .fold(f64::INFINITY, f64::min)
        }
    }
}

/// Hausdorff distance between two convex polygons given by their vertices.
///
/// The distance to a convex set is convex, so both one-sided maxima are
/// attained at vertices.
pub fn hausdorff_convex_2d(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    let one_sided = |x: &[DVector<f64>], y: &[DVector<f64>]| {
        x.iter().map(|v| distance_to_polygon(y, v)).fold(0.0, f64::max)
    };
    one_sided(a, b).max(one_sided(b, a))
}

/// Hausdorff distance between finite point sets.
pub fn hausdorff_points(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    let one_sided = |x: &[DVector<f64>], y: &[DVector<f64>]| {
        x.iter()
            .map(|v| y.iter().map(|w| (v - w).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one_sided(a, b).max(one_sided(b, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn v(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    #[test]
    fn square_with_interior_and_edge_points() {
        let pts = vec![v(0.0, 0.0), v(1.0, 0.0), v(1.0, 1.0), v(0.0, 1.0), v(0.5, 0.5), v(0.5, 0.0)];
        let h = convex_hull_2d(&pts);
        assert_eq!(h.len(), 4);
        assert!(polygon_contains(&h, &v(0.2, 0.9), 0.0));
        assert!(!polygon_contains(&h, &v(1.2, 0.5), 1e-9));
        assert!((distance_to_polygon(&h, &v(2.0, 0.5)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(convex_hull_2d(&[v(1.0, 1.0), v(1.0, 1.0)]).len(), 1);
        let line = convex_hull_2d(&[v(0.0, 0.0), v(1.0, 1.0), v(2.0, 2.0)]);
        assert_eq!(line.len(), 2);
        assert!(polygon_contains(&line, &v(0.5, 0.5), 1e-12));
    }

    #[test]
    fn hausdorff_of_nested_squares() {
        let a = convex_hull_2d(&[v(0.0, 0.0), v(2.0, 0.0), v(2.0, 2.0), v(0.0, 2.0)]);
        let b = convex_hull_2d(&[v(0.0, 0.0), v(1.0, 0.0), v(1.0, 1.0), v(0.0, 1.0)]);
        assert!((hausdorff_convex_2d(&a, &b) - 2f64.sqrt()).abs() < 1e-12);
        assert!((hausdorff_points(&a, &b) - 2f64.sqrt()).abs() < 1e-12);
    }

    fn arb_point() -> impl Strategy<Value = DVector<f64>> {
        (-5.0f64..5.0, -5.0f64..5.0).prop_map(|(x, y)| v(x, y))
    }

    proptest! {
        /// An affine image of a convex combination lies in the hull of the
        /// images of the points.
        #[test]
        fn affine_image_of_hull_is_hull_of_images(
            pts in prop::collection::vec(arb_point(), 3..12),
            weights in prop::collection::vec(0.0f64..1.0, 12),
            a in prop::array::uniform4(-2.0f64..2.0),
            b in prop::array::uniform2(-3.0f64..3.0),
        ) {
            let am = DMatrix::from_row_slice(2, 2, &a);
            let bv = DVector::from_row_slice(&b);
            let w = &weights[..pts.len()];
            let total: f64 = w.iter().sum::<f64>() + 1e-12;
            let mut z = DVector::zeros(2);
            for (p, wi) in pts.iter().zip(w) {
                z += p * (*wi / total);
            }
            // Rescale the weights to sum to one exactly enough.
            let s: f64 = w.iter().map(|wi| wi / total).sum();
            let z = z / s;
            let images: Vec<DVector<f64>> = pts.iter().map(|p| &am * p + &bv).collect();
            let hull = convex_hull_2d(&images);
            let fz = &am * &z + &bv;
            prop_assert!(polygon_contains(&hull, &fz, 1e-9), "distance {}", distance_to_polygon(&hull, &fz));
        }

        #[test]
        fn hull_contains_all_inputs(pts in prop::collection::vec(arb_point(), 1..40)) {
            let h = convex_hull_2d(&pts);
            for p in &pts {
                prop_assert!(polygon_contains(&h, p, 1e-9));
            }
        }
    }
}
