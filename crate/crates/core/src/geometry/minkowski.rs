//! Minkowski sums of PQ-polygons.

use super::decompose::convex_decomposition;
use super::union::union_convex;
use super::{GeometryError, Pq, PqPolygon};

fn lowest_first(v: &[Pq]) -> Vec<Pq> {
    let start = (0..v.len())
        .min_by(|&i, &j| {
            v[i].q
                .partial_cmp(&v[j].q)
                .unwrap()
                .then(v[i].p.partial_cmp(&v[j].p).unwrap())
        })
        .unwrap_or(0);
    let mut out = Vec::with_capacity(v.len());
    out.extend_from_slice(&v[start..]);
    out.extend_from_slice(&v[..start]);
    out
}

/// Sum of two convex counter-clockwise vertex rings by merging edges in
/// angular order. Either input may be a single point. The output may contain
/// collinear vertices.
pub fn minkowski_convex_points(a: &[Pq], b: &[Pq]) -> Vec<Pq> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    if a.len() == 1 {
        return b.iter().map(|&v| v + a[0]).collect();
    }
    if b.len() == 1 {
        return a.iter().map(|&v| v + b[0]).collect();
    }
    let a = lowest_first(a);
    let b = lowest_first(b);
    let (na, nb) = (a.len(), b.len());
    let mut out = Vec::with_capacity(na + nb);
    let (mut i, mut j) = (0usize, 0usize);
    while i < na || j < nb {
        out.push(a[i % na] + b[j % nb]);
        let c = if i == na {
            -1.0
        } else if j == nb {
            1.0
        } else {
            let ea = a[(i + 1) % na] - a[i];
            let eb = b[(j + 1) % nb] - b[j];
            ea.cross(eb)
        };
        if c >= 0.0 && i < na {
            i += 1;
        }
        if c <= 0.0 && j < nb {
            j += 1;
        }
    }
    out
}

/// Minkowski sum of two convex polygons.
pub fn minkowski_convex(a: &PqPolygon, b: &PqPolygon) -> Result<PqPolygon, GeometryError> {
    if !a.is_convex() || !b.is_convex() {
        return Err(GeometryError::NotConvex);
    }
    PqPolygon::new(minkowski_convex_points(a.vertices(), b.vertices()))
}

/// Minkowski sum of two simple polygons.
///
/// Both operands are split into convex pieces, all pairwise convex sums are
/// formed and their union is traced. Convex operands skip the union step.
pub fn minkowski(a: &PqPolygon, b: &PqPolygon) -> Result<PqPolygon, GeometryError> {
    if a.is_convex() && b.is_convex() {
        return minkowski_convex(a, b);
    }
    let da = convex_decomposition(a)?;
    let db = convex_decomposition(b)?;
    let mut sums = Vec::with_capacity(da.len() * db.len());
    for pa in &da.pieces {
        for pb in &db.pieces {
            sums.push(minkowski_convex(pa, pb)?);
        }
    }
    union_convex(&sums)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangles_sum_exactly() {
        let a = PqPolygon::rectangle(-1.0, 2.0, -0.5, 0.5).unwrap();
        let b = PqPolygon::rectangle(0.0, 3.0, -2.0, 1.0).unwrap();
        let s = minkowski_convex(&a, &b).unwrap();
        assert_eq!(s, PqPolygon::rectangle(-1.0, 5.0, -2.5, 1.5).unwrap());
    }

    #[test]
    fn point_sum_translates() {
        let a = PqPolygon::rectangle(0.0, 1.0, 0.0, 2.0).unwrap();
        let v = minkowski_convex_points(a.vertices(), &[Pq::new(3.0, -1.0)]);
        let s = PqPolygon::new(v).unwrap();
        assert_eq!(s, a.translate(Pq::new(3.0, -1.0)));
        let v = minkowski_convex_points(&[Pq::new(3.0, -1.0)], a.vertices());
        assert_eq!(PqPolygon::new(v).unwrap(), a.translate(Pq::new(3.0, -1.0)));
    }

    #[test]
    fn triangle_plus_square_is_pentagon_with_mixed_area() {
        let t = PqPolygon::new(vec![Pq::new(0.0, 0.0), Pq::new(1.0, 0.0), Pq::new(0.0, 1.0)]).unwrap();
        let s = PqPolygon::rectangle(0.0, 1.0, 0.0, 1.0).unwrap();
        let m = minkowski_convex(&t, &s).unwrap();
        // area(A ⊕ B) = area A + area B + mixed term (2 for this pair)
        assert!((m.area() - 3.5).abs() < 1e-12);
        assert_eq!(m.len(), 5);
    }

    #[test]
    fn nonconvex_sum_contains_pairwise_points() {
        let l = PqPolygon::new(vec![
            Pq::new(0.0, 0.0),
            Pq::new(2.0, 0.0),
            Pq::new(2.0, 1.0),
            Pq::new(1.0, 1.0),
            Pq::new(1.0, 2.0),
            Pq::new(0.0, 2.0),
        ])
        .unwrap();
        let sq = PqPolygon::rectangle(0.0, 0.5, 0.0, 0.5).unwrap();
        let m = minkowski(&l, &sq).unwrap();
        // L-shape grown by the square keeps a notch
        let expected = PqPolygon::new(vec![
            Pq::new(0.0, 0.0),
            Pq::new(2.5, 0.0),
            Pq::new(2.5, 1.5),
            Pq::new(1.5, 1.5),
            Pq::new(1.5, 2.5),
            Pq::new(0.0, 2.5),
        ])
        .unwrap();
        assert!((m.area() - expected.area()).abs() < 1e-9);
        for &v in l.vertices() {
            for &w in sq.vertices() {
                assert!(m.contains(v + w));
            }
        }
    }
}
