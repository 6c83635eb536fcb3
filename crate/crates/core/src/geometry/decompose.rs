//! Convex decomposition of simple polygons.

use super::triangulate::triangulate;
use super::{orient, GeometryError, Pq, PqPolygon};

/// A polygon split into convex pieces with pairwise disjoint interiors.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexDecomposition {
    pub pieces: Vec<PqPolygon>,
}

impl ConvexDecomposition {
    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn total_area(&self) -> f64 {
        self.pieces.iter().map(|p| p.area()).sum()
    }

    /// Index of the first piece containing `x`.
    pub fn locate(&self, x: Pq) -> Option<usize> {
        self.pieces.iter().position(|p| p.contains(x))
    }
}

/// Splits `poly` into convex pieces.
///
/// Convex input yields a single piece. Otherwise the polygon is triangulated
/// and adjacent pieces are merged greedily across shared diagonals whenever the
/// merged ring stays convex. The result has at most four times the optimal
/// number of pieces.
pub fn convex_decomposition(poly: &PqPolygon) -> Result<ConvexDecomposition, GeometryError> {
    if poly.is_convex() {
        return Ok(ConvexDecomposition {
            pieces: vec![poly.clone()],
        });
    }
    let v = poly.vertices();
    let tri = triangulate(poly)?;
    // recover vertex indices of each triangle
    let index_of = |x: Pq| v.iter().position(|&w| w == x).expect("triangle vertex on polygon");
    let mut pieces: Vec<Vec<usize>> = tri
        .triangles
        .iter()
        .map(|t| vec![index_of(t[0]), index_of(t[1]), index_of(t[2])])
        .collect();

    let scale = poly.bbox().span();
    let tol = 1e-12 * scale * scale;
    loop {
        let mut merged_any = false;
        'search: for a in 0..pieces.len() {
            for b in (a + 1)..pieces.len() {
                if let Some(m) = try_merge(v, &pieces[a], &pieces[b], tol) {
                    pieces[a] = m;
                    pieces.swap_remove(b);
                    merged_any = true;
                    break 'search;
                }
            }
        }
        if !merged_any {
            break;
        }
    }

    let pieces = pieces
        .into_iter()
        .map(|ring| PqPolygon::new(ring.into_iter().map(|i| v[i]).collect()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ConvexDecomposition { pieces })
}

fn try_merge(v: &[Pq], a: &[usize], b: &[usize], tol: f64) -> Option<Vec<usize>> {
    let na = a.len();
    let nb = b.len();
    for i in 0..na {
        let x = a[i];
        let y = a[(i + 1) % na];
        for j in 0..nb {
            if b[j] == y && b[(j + 1) % nb] == x {
                // a walked from y around to x, then b's interior from x to y
                let mut ring = Vec::with_capacity(na + nb - 2);
                for k in 0..na {
                    ring.push(a[(i + 1 + k) % na]);
                }
                for k in 1..(nb - 1) {
                    ring.push(b[(j + 1 + k) % nb]);
                }
                let n = ring.len();
                let convex = (0..n).all(|k| {
                    orient(v[ring[k]], v[ring[(k + 1) % n]], v[ring[(k + 2) % n]]) >= -tol
                });
                return convex.then_some(ring);
            }
        }
    }
    None
}
