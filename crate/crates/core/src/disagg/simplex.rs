//! Dense two-phase primal simplex for `min cᵀx  s.t.  Ax = b, x ≥ 0`.

const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// `rows` constraint rows then the objective row; last column is the rhs.
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    #[inline]
    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let w = self.cols + 1;
        &mut self.data[r * w..(r + 1) * w]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let p = self.at(pr, pc);
        for v in self.row_mut(pr) {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.data[pr * w..(pr + 1) * w].to_vec();
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let f = self.at(r, pc);
            if f != 0.0 {
                let row = self.row_mut(r);
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[pc] = 0.0;
            }
        }
        self.basis[pr] = pc;
    }

    /// Rebuilds the objective row for column costs `cost`.
    fn set_objective(&mut self, cost: &[f64]) {
        let w = self.cols + 1;
        let obj = self.rows;
        for c in 0..w {
            self.data[obj * w + c] = if c < self.cols { cost[c] } else { 0.0 };
        }
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for c in 0..w {
                    let v = self.data[r * w + c];
                    self.data[obj * w + c] -= cb * v;
                }
            }
        }
    }

    /// Runs primal simplex iterations on the current objective row.
    /// Columns with `allowed[c] == false` never enter.
    fn optimize(&mut self, allowed: &[bool], max_iter: usize) -> LpStatus {
        let bland_after = max_iter / 4;
        for it in 0..max_iter {
            let obj = self.rows;
            let mut enter = None;
            let mut best = -PIVOT_TOL;
            for c in 0..self.cols {
                if !allowed[c] {
                    continue;
                }
                let d = self.at(obj, c);
                if it >= bland_after {
                    if d < -PIVOT_TOL {
                        enter = Some(c);
                        break;
                    }
                } else if d < best {
                    best = d;
                    enter = Some(c);
                }
            }
            let Some(pc) = enter else {
                return LpStatus::Optimal;
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r) / a;
                    match leave {
                        None => leave = Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12
                                || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                            {
                                leave = Some((r, ratio));
                            }
                        }
                    }
                }
            }
            let Some((pr, _)) = leave else {
                return LpStatus::Unbounded;
            };
            self.pivot(pr, pc);
        }
        LpStatus::IterationLimit
    }
}

/// Solves the equality-form LP. `a` is row-major with one entry per row.
pub fn solve_lp(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> LpSolution {
    let m = a.len();
    let n = c.len();
    assert_eq!(b.len(), m, "rhs length");
    assert!(a.iter().all(|row| row.len() == n), "row length");
    let cols = n + m;
    let w = cols + 1;
    let mut data = vec![0.0; (m + 1) * w];
    for r in 0..m {
        let sign = if b[r] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            data[r * w + j] = sign * a[r][j];
        }
        data[r * w + n + r] = 1.0;
        data[r * w + cols] = sign * b[r];
    }
    let mut t = Tableau {
        rows: m,
        cols,
        data,
        basis: (n..n + m).collect(),
    };
    let max_iter = 50 * (m + cols) + 100;

    let mut phase1 = vec![0.0; cols];
    for v in &mut phase1[n..] {
        *v = 1.0;
    }
    t.set_objective(&phase1);
    let all = vec![true; cols];
    let st = t.optimize(&all, max_iter);
    if st == LpStatus::IterationLimit {
        return LpSolution {
            status: st,
            x: vec![0.0; n],
            objective: f64::NAN,
        };
    }
    let infeas: f64 = (0..m).filter(|&r| t.basis[r] >= n).map(|r| t.rhs(r)).sum();
    let b_scale = 1.0 + b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if infeas > 1e-9 * b_scale {
        return LpSolution {
            status: LpStatus::Infeasible,
            x: vec![0.0; n],
            objective: f64::NAN,
        };
    }
    // drive remaining artificials out of the basis where possible
    for r in 0..m {
        if t.basis[r] >= n {
            if let Some(j) = (0..n).find(|&j| t.at(r, j).abs() > PIVOT_TOL) {
                t.pivot(r, j);
            }
        }
    }

    let mut phase2 = vec![0.0; cols];
    phase2[..n].copy_from_slice(c);
    t.set_objective(&phase2);
    let mut allowed = vec![true; cols];
    for v in &mut allowed[n..] {
        *v = false;
    }
    let st = t.optimize(&allowed, max_iter);
    let mut x = vec![0.0; n];
    for r in 0..m {
        if t.basis[r] < n {
            x[t.basis[r]] = t.rhs(r).max(0.0);
        }
    }
    let objective = x.iter().zip(c).map(|(xi, ci)| xi * ci).sum();
    LpSolution {
        status: st,
        x,
        objective,
    }
}
