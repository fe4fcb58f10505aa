//! Dense two-phase simplex for the small linear programs the polytope
//! machinery needs: feasibility of candidate regions, support functions,
//! interior-point (Chebyshev) tests. Problems here have tens of variables
//! at most, so a plain tableau with Bland's anti-cycling rule is simpler
//! and more predictable than pulling in a solver dependency.
//!
//! Problem form: minimize c'x subject to A x <= b with x free. Free
//! variables are split x = u - v internally.

const TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpResult {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: Vec<Vec<f64>>, // m constraint rows, then phase-2 cost row, then phase-1 cost row
    rhs: Vec<f64>,       // m entries + 2 objective constants
    basis: Vec<usize>,
    m: usize,
    width: usize, // total columns including artificials
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let scale = self.rows[row][col];
        for x in self.rows[row].iter_mut() {
            *x /= scale;
        }
        self.rhs[row] /= scale;
        for i in 0..self.rows.len() {
            if i == row {
                continue;
            }
            let factor = self.rows[i][col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..self.width {
                let delta = factor * self.rows[row][j];
                self.rows[i][j] -= delta;
            }
            self.rhs[i] -= factor * self.rhs[row];
        }
        self.basis[row] = col;
    }

    /// Bland's rule: enter the lowest-index improving column, leave by the
    /// minimum ratio breaking ties on the lowest basic index. Terminates on
    /// every input, degenerate or not.
    fn simplex(&mut self, cost_row: usize, max_col: usize) -> Result<(), LpResult> {
        loop {
            let mut entering = None;
            for j in 0..max_col {
                if self.rows[cost_row][j] < -TOL {
                    entering = Some(j);
                    break;
                }
            }
            let Some(col) = entering else { return Ok(()) };
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..self.m {
                if self.rows[i][col] > TOL {
                    let ratio = self.rhs[i] / self.rows[i][col];
                    let better = match leaving {
                        None => true,
                        Some((prev, best)) => {
                            ratio < best - TOL
                                || (ratio < best + TOL && self.basis[i] < self.basis[prev])
                        }
                    };
                    if better {
                        leaving = Some((i, ratio));
                    }
                }
            }
            let Some((row, _)) = leaving else {
                return Err(LpResult::Unbounded);
            };
            self.pivot(row, col);
        }
    }
}

/// Minimize c'x over {x : a x <= b}, x free. Row lengths must equal c.len().
pub(crate) fn minimize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> LpResult {
    let n = c.len();
    let m = a.len();
    assert_eq!(m, b.len(), "constraint row count mismatch");
    for row in a {
        assert_eq!(row.len(), n, "constraint width mismatch");
    }

    let neg_rows: Vec<usize> = (0..m).filter(|&i| b[i] < 0.0).collect();
    let art_start = 2 * n + m;
    let width = art_start + neg_rows.len();

    let mut t = Tableau {
        rows: Vec::with_capacity(m + 2),
        rhs: Vec::with_capacity(m + 2),
        basis: Vec::with_capacity(m),
        m,
        width,
    };

    let mut art_idx = 0;
    for i in 0..m {
        let flip = if b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut row = vec![0.0; width];
        for j in 0..n {
            row[j] = flip * a[i][j];
            row[n + j] = -flip * a[i][j];
        }
        row[2 * n + i] = flip;
        if flip < 0.0 {
            row[art_start + art_idx] = 1.0;
            t.basis.push(art_start + art_idx);
            art_idx += 1;
        } else {
            t.basis.push(2 * n + i);
        }
        t.rhs.push(flip * b[i]);
        t.rows.push(row);
    }

    // phase-2 cost row: reduced costs for min c'(u - v)
    let mut cost2 = vec![0.0; width];
    for j in 0..n {
        cost2[j] = c[j];
        cost2[n + j] = -c[j];
    }
    t.rows.push(cost2);
    t.rhs.push(0.0);

    // phase-1 cost row: min sum of artificials, expressed in the initial
    // basis by subtracting every artificial-basic row
    let mut cost1 = vec![0.0; width];
    for j in art_start..width {
        cost1[j] = 1.0;
    }
    let mut rhs1 = 0.0;
    for i in 0..m {
        if t.basis[i] >= art_start {
            for j in 0..width {
                cost1[j] -= t.rows[i][j];
            }
            rhs1 -= t.rhs[i];
        }
    }
    t.rows.push(cost1);
    t.rhs.push(rhs1);

    let phase1 = m + 1;
    let phase2 = m;

    if width > art_start {
        if let Err(r) = t.simplex(phase1, width) {
            return r; // phase 1 is bounded below by 0; unbounded cannot happen
        }
        if -t.rhs[phase1] > 1e-7 {
            return LpResult::Infeasible;
        }
        // drive leftover zero-level artificials out where possible
        for i in 0..m {
            if t.basis[i] >= art_start {
                if let Some(col) = (0..art_start).find(|&j| t.rows[i][j].abs() > TOL) {
                    t.pivot(i, col);
                }
            }
        }
    }

    if let Err(r) = t.simplex(phase2, art_start) {
        return r;
    }

    let mut x = vec![0.0; n];
    for i in 0..m {
        let j = t.basis[i];
        if j < n {
            x[j] += t.rhs[i];
        } else if j < 2 * n {
            x[j - n] -= t.rhs[i];
        }
    }
    let objective = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    LpResult::Optimal { x, objective }
}

/// Support function h(d) = max d'x over {x : a x <= b}.
pub(crate) fn support(direction: &[f64], a: &[Vec<f64>], b: &[f64]) -> LpResult {
    let neg: Vec<f64> = direction.iter().map(|v| -v).collect();
    match minimize(&neg, a, b) {
        LpResult::Optimal { x, objective } => LpResult::Optimal {
            x,
            objective: -objective,
        },
        other => other,
    }
}

/// Chebyshev test for {x : a x <= b}: maximize t with a_i'x + ||a_i|| t <= b_i.
/// Returns None when the polytope is empty, otherwise (center, radius);
/// radius above a small threshold certifies a full-dimensional region. An
/// unbounded radius (no constraints at all, or a cone) reports f64::INFINITY.
pub(crate) fn chebyshev(a: &[Vec<f64>], b: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = a.first().map_or(0, |r| r.len());
    if a.is_empty() {
        return Some((vec![0.0; n], f64::INFINITY));
    }
    let mut aug: Vec<Vec<f64>> = Vec::with_capacity(a.len());
    for row in a {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut r = row.clone();
        r.push(norm);
        aug.push(r);
    }
    let mut c = vec![0.0; n + 1];
    c[n] = -1.0; // maximize t
    match minimize(&c, &aug, b) {
        LpResult::Optimal { x, .. } => {
            let radius = x[n];
            if radius < -TOL {
                None
            } else {
                Some((x[..n].to_vec(), radius.max(0.0)))
            }
        }
        LpResult::Unbounded => Some((vec![0.0; n], f64::INFINITY)),
        LpResult::Infeasible => None,
    }
}
