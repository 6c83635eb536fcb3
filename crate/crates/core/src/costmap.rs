//! Minimum-cost scatter over the feasible operation region.
//!
//! Every feasible swarm record is assigned to its nearest scatter point,
//! which keeps the lowest total cost seen.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{BoundingBox, Pq, PqPolygon};

#[derive(Debug, Error)]
pub enum CostmapError {
    #[error("scatter resolution must be at least 2, got {0}")]
    Resolution(usize),
    #[error("scatter has no points")]
    EmptyScatter,
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Scatter points with their minimum observed cost and hit counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CostScatter {
    pub points: Vec<Pq>,
    /// Lowest assigned cost, `+inf` where nothing was assigned.
    pub costs: Vec<f64>,
    pub hits: Vec<u64>,
}

/// One feasible record to be mapped: interconnection flow and total cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSample {
    pub ipf: Pq,
    pub cost: f64,
}

/// Regular `resolution × resolution` grid over the bounding box, keeping the
/// points inside the polygon.
pub fn build_scatter(polygon: &PqPolygon, resolution: usize) -> Result<CostScatter, CostmapError> {
    if resolution < 2 {
        return Err(CostmapError::Resolution(resolution));
    }
    let bb = polygon.bbox();
    let n = (resolution - 1) as f64;
    let mut points = Vec::new();
    for j in 0..resolution {
        for i in 0..resolution {
            let x = Pq::new(
                bb.min.p + bb.width() * i as f64 / n,
                bb.min.q + bb.height() * j as f64 / n,
            );
            if polygon.contains(x) {
                points.push(x);
            }
        }
    }
    if points.is_empty() {
        return Err(CostmapError::EmptyScatter);
    }
    Ok(CostScatter::from_points(points))
}

#[inline]
fn dist2(a: Pq, b: Pq) -> f64 {
    let dp = a.p - b.p;
    let dq = a.q - b.q;
    dp * dp + dq * dq
}

/// Nearest scatter point by plain scan; ties go to the lowest index.
pub fn nearest_brute(points: &[Pq], x: Pq) -> usize {
    let mut best = 0;
    let mut bd = f64::INFINITY;
    for (k, &y) in points.iter().enumerate() {
        let d = dist2(x, y);
        if d < bd {
            bd = d;
            best = k;
        }
    }
    best
}

/// Uniform-cell index over the scatter points.
#[derive(Debug, Clone)]
pub struct NearestIndex {
    origin: Pq,
    cell: f64,
    /// Cell range `[0, nx) × [0, ny)`.
    nx: i64,
    ny: i64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl NearestIndex {
    pub fn new(points: &[Pq]) -> Self {
        let bb = BoundingBox::of(points).expect("non-empty point set");
        let n = points.len().max(1) as f64;
        let area = (bb.width() * bb.height()).max(0.0);
        let mut cell = (area / n).sqrt();
        if !(cell > 0.0) {
            cell = (bb.span() / n).max(1e-12);
        }
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        let (mut nx, mut ny) = (1, 1);
        for (k, &y) in points.iter().enumerate() {
            let c = (
                ((y.p - bb.min.p) / cell).floor() as i64,
                ((y.q - bb.min.q) / cell).floor() as i64,
            );
            nx = nx.max(c.0 + 1);
            ny = ny.max(c.1 + 1);
            cells.entry(c).or_default().push(k);
        }
        NearestIndex {
            origin: bb.min,
            cell,
            nx,
            ny,
            cells,
        }
    }

    /// Same result as [`nearest_brute`], including ties.
    pub fn nearest(&self, points: &[Pq], x: Pq) -> usize {
        let cx = ((x.p - self.origin.p) / self.cell).floor();
        let cy = ((x.q - self.origin.q) / self.cell).floor();
        // keep far-away queries in a sane integer range
        let cx = cx.clamp(-(1i64 << 40) as f64, (1i64 << 40) as f64) as i64;
        let cy = cy.clamp(-(1i64 << 40) as f64, (1i64 << 40) as f64) as i64;
        let outside = |c: i64, n: i64| if c < 0 { -c } else if c >= n { c - n + 1 } else { 0 };
        let r0 = outside(cx, self.nx).max(outside(cy, self.ny));
        let r_max = r0 + self.nx.max(self.ny) + 1;
        let mut best = usize::MAX;
        let mut bd = f64::INFINITY;
        let visit = |i: i64, j: i64, best: &mut usize, bd: &mut f64| {
            if let Some(list) = self.cells.get(&(i, j)) {
                for &k in list {
                    let d = dist2(x, points[k]);
                    if d < *bd || (d == *bd && k < *best) {
                        *bd = d;
                        *best = k;
                    }
                }
            }
        };
        for r in r0..=r_max {
            if r >= 1 {
                // every point in ring r is at least (r - 1) cells away
                let lb = (r - 1) as f64 * self.cell * (1.0 - 1e-9);
                if lb * lb > bd {
                    break;
                }
            }
            if r == 0 {
                visit(cx, cy, &mut best, &mut bd);
                continue;
            }
            for i in (cx - r)..=(cx + r) {
                if i < 0 || i >= self.nx {
                    continue;
                }
                for j in [cy - r, cy + r] {
                    if j >= 0 && j < self.ny {
                        visit(i, j, &mut best, &mut bd);
                    }
                }
            }
            for j in (cy - r + 1)..=(cy + r - 1) {
                if j < 0 || j >= self.ny {
                    continue;
                }
                for i in [cx - r, cx + r] {
                    if i >= 0 && i < self.nx {
                        visit(i, j, &mut best, &mut bd);
                    }
                }
            }
        }
        best
    }
}

impl CostScatter {
    pub fn from_points(points: Vec<Pq>) -> Self {
        let h = points.len();
        CostScatter {
            points,
            costs: vec![f64::INFINITY; h],
            hits: vec![0; h],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Reference assignment: nearest point by full scan, in sample order.
    pub fn assign_brute(&mut self, samples: &[CostSample]) -> Result<(), CostmapError> {
        if self.points.is_empty() {
            return Err(CostmapError::EmptyScatter);
        }
        for s in samples {
            let y = nearest_brute(&self.points, s.ipf);
            self.hits[y] += 1;
            if self.costs[y] > s.cost {
                self.costs[y] = s.cost;
            }
        }
        Ok(())
    }

    /// Indexed parallel assignment; identical to [`CostScatter::assign_brute`].
    pub fn assign(&mut self, samples: &[CostSample]) -> Result<(), CostmapError> {
        if self.points.is_empty() {
            return Err(CostmapError::EmptyScatter);
        }
        let index = NearestIndex::new(&self.points);
        let h = self.points.len();
        let points = &self.points;
        let (costs, hits) = samples
            .par_chunks(4096)
            .fold(
                || (vec![f64::INFINITY; h], vec![0u64; h]),
                |(mut c, mut n), chunk| {
                    for s in chunk {
                        let y = index.nearest(points, s.ipf);
                        n[y] += 1;
                        if c[y] > s.cost {
                            c[y] = s.cost;
                        }
                    }
                    (c, n)
                },
            )
            .reduce(
                || (vec![f64::INFINITY; h], vec![0u64; h]),
                |(mut c, mut n), (c2, n2)| {
                    for k in 0..h {
                        if c[k] > c2[k] {
                            c[k] = c2[k];
                        }
                        n[k] += n2[k];
                    }
                    (c, n)
                },
            );
        for k in 0..h {
            if self.costs[k] > costs[k] {
                self.costs[k] = costs[k];
            }
            self.hits[k] += hits[k];
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("p_sc_mw,q_sc_mvar,c_sc_eur,hit_count\n");
        for ((x, c), n) in self.points.iter().zip(&self.costs).zip(&self.hits) {
            if c.is_finite() {
                let _ = writeln!(out, "{:.16e},{:.16e},{:.16e},{n}", x.p, x.q, c);
            } else {
                let _ = writeln!(out, "{:.16e},{:.16e},inf,{n}", x.p, x.q);
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, CostmapError> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut s = CostScatter::from_points(Vec::new());
        for (k, rec) in rdr.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| CostmapError::Parse {
                line,
                message: e.to_string(),
            })?;
            let field = |i: usize| -> Result<&str, CostmapError> {
                rec.get(i).ok_or(CostmapError::Parse {
                    line,
                    message: format!("missing column {i}"),
                })
            };
            let num = |i: usize| -> Result<f64, CostmapError> {
                let f = field(i)?;
                f.parse::<f64>().map_err(|e| CostmapError::Parse {
                    line,
                    message: format!("{f:?}: {e}"),
                })
            };
            s.points.push(Pq::new(num(0)?, num(1)?));
            s.costs.push(num(2)?);
            let n = field(3)?;
            s.hits.push(n.parse().map_err(|e| CostmapError::Parse {
                line,
                message: format!("{n:?}: {e}"),
            })?);
        }
        Ok(s)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), CostmapError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|source| CostmapError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, CostmapError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CostmapError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv(&text)
    }
}
