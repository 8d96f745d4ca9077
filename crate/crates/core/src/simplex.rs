//! Small dense tableau simplex for `max c^T x  s.t.  A x <= b, x >= 0` with
//! `b >= 0`, so the slack basis is feasible from the start. Pivot selection
//! follows Bland's rule (lowest eligible index both entering and leaving),
//! which cannot cycle.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimplexError {
    #[error("right-hand side must be non-negative and finite")]
    InfeasibleStart,
    #[error("objective is unbounded")]
    Unbounded,
    #[error("no optimum after {0} pivots")]
    IterationLimit(usize),
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
}

const PIVOT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    /// Optimal primal point.
    pub x: Vec<f64>,
    /// Optimal multipliers of the `A x <= b` rows (the dual solution).
    pub duals: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

pub fn maximize(
    c: &[f64],
    a: &[Vec<f64>],
    b: &[f64],
    max_pivots: usize,
) -> Result<LpSolution, SimplexError> {
    let m = a.len();
    let n = c.len();
    if b.len() != m {
        return Err(SimplexError::Dimensions(format!(
            "{m} constraint rows but {} right-hand sides",
            b.len()
        )));
    }
    if let Some(row) = a.iter().find(|row| row.len() != n) {
        return Err(SimplexError::Dimensions(format!(
            "row of length {} for {n} variables",
            row.len()
        )));
    }
    if b.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
        return Err(SimplexError::InfeasibleStart);
    }

    // Columns: n structural, m slack, then the right-hand side.
    let width = n + m + 1;
    let mut tab = vec![0.0; (m + 1) * width];
    for i in 0..m {
        let row = &mut tab[i * width..(i + 1) * width];
        row[..n].copy_from_slice(&a[i]);
        row[n + i] = 1.0;
        row[width - 1] = b[i];
    }
    // Objective row holds reduced costs; negative entries may enter.
    let obj = m * width;
    for j in 0..n {
        tab[obj + j] = -c[j];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let mut pivots = 0;
    while let Some(enter) = (0..n + m).find(|&j| tab[obj + j] < -PIVOT_EPS) {
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let coef = tab[i * width + enter];
            if coef > PIVOT_EPS {
                let ratio = tab[i * width + width - 1] / coef;
                let better = match leave {
                    None => true,
                    Some((l, r)) => {
                        ratio < r - PIVOT_EPS || (ratio <= r + PIVOT_EPS && basis[i] < basis[l])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((row, _)) = leave else {
            return Err(SimplexError::Unbounded);
        };
        if pivots == max_pivots {
            return Err(SimplexError::IterationLimit(max_pivots));
        }
        pivot(&mut tab, width, m + 1, row, enter);
        basis[row] = enter;
        pivots += 1;
    }

    let mut x = vec![0.0; n];
    for (i, &var) in basis.iter().enumerate() {
        if var < n {
            x[var] = tab[i * width + width - 1];
        }
    }
    let duals = (0..m).map(|i| tab[obj + n + i]).collect();
    Ok(LpSolution {
        x,
        duals,
        objective: tab[obj + width - 1],
        pivots,
    })
}

fn pivot(tab: &mut [f64], width: usize, rows: usize, row: usize, col: usize) {
    let p = tab[row * width + col];
    for v in &mut tab[row * width..(row + 1) * width] {
        *v /= p;
    }
    let pivot_row: Vec<f64> = tab[row * width..(row + 1) * width].to_vec();
    for r in (0..rows).filter(|&r| r != row) {
        let factor = tab[r * width + col];
        if factor != 0.0 {
            for (v, &pv) in tab[r * width..(r + 1) * width].iter_mut().zip(&pivot_row) {
                *v -= factor * pv;
            }
            tab[r * width + col] = 0.0;
        }
    }
}
