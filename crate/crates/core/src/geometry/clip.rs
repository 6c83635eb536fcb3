//! Polygon clipping used for area comparisons.

use super::triangulate::triangulate;
use super::{orient, signed_area, GeometryError, Pq, PqPolygon};

/// Intersection of two convex counter-clockwise rings (Sutherland–Hodgman).
/// Returns the clipped vertex ring, possibly empty.
pub fn convex_intersection(subject: &[Pq], clip: &[Pq]) -> Vec<Pq> {
    let mut out: Vec<Pq> = subject.to_vec();
    let m = clip.len();
    for i in 0..m {
        if out.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % m];
        let input = std::mem::take(&mut out);
        let n = input.len();
        for k in 0..n {
            let cur = input[k];
            let prev = input[(k + n - 1) % n];
            let cur_in = orient(a, b, cur) >= 0.0;
            let prev_in = orient(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    out.push(line_cross(prev, cur, a, b));
                }
                out.push(cur);
            } else if prev_in {
                out.push(line_cross(prev, cur, a, b));
            }
        }
    }
    out
}

fn line_cross(p: Pq, q: Pq, a: Pq, b: Pq) -> Pq {
    let r = q - p;
    let s = b - a;
    let denom = r.cross(s);
    if denom == 0.0 {
        return p;
    }
    let t = (a - p).cross(s) / denom;
    p + r * t
}

/// Area of `a ∩ b` for simple polygons, summed over triangle pairs.
pub fn intersection_area(a: &PqPolygon, b: &PqPolygon) -> Result<f64, GeometryError> {
    let ta = triangulate(a)?;
    let tb = triangulate(b)?;
    let mut acc = 0.0;
    for x in &ta.triangles {
        for y in &tb.triangles {
            let c = convex_intersection(x, y);
            if c.len() >= 3 {
                acc += signed_area(&c).abs();
            }
        }
    }
    Ok(acc)
}

/// Area of the symmetric difference `(a \ b) ∪ (b \ a)`.
pub fn symmetric_difference_area(a: &PqPolygon, b: &PqPolygon) -> Result<f64, GeometryError> {
    let i = intersection_area(a, b)?;
    Ok((a.area() + b.area() - 2.0 * i).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlapping_squares() {
        let a = PqPolygon::rectangle(0.0, 2.0, 0.0, 2.0).unwrap();
        let b = PqPolygon::rectangle(1.0, 3.0, 1.0, 3.0).unwrap();
        assert!((intersection_area(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert!((symmetric_difference_area(&a, &b).unwrap() - 6.0).abs() < 1e-12);
        assert!(symmetric_difference_area(&a, &a).unwrap() < 1e-12);
    }

    #[test]
    fn disjoint_intersection_is_empty() {
        let a = PqPolygon::rectangle(0.0, 1.0, 0.0, 1.0).unwrap();
        let b = PqPolygon::rectangle(5.0, 6.0, 0.0, 1.0).unwrap();
        assert_eq!(intersection_area(&a, &b).unwrap(), 0.0);
    }
}
