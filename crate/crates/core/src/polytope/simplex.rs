//! Phase-one simplex for certifying feasibility of {x >= 0 : A x = b}.
//!
//! Dense tableau with Bland's rule; the systems here are small (at most a
//! few dozen rows), so simplicity wins over sparse machinery.

use nalgebra::{DMatrix, DVector};

#[derive(Debug)]
pub(crate) enum PhaseOne {
    Feasible(DVector<f64>),
    /// Minimum attainable total artificial mass; strictly positive.
    Infeasible { residual: f64 },
}

const PIVOT_TOL: f64 = 1e-9;

/// Solve min 1's over A x + s = b', x, s >= 0 (rows sign-flipped so b' >= 0).
/// Returns the feasible x when the optimum is (numerically) zero.
pub(crate) fn phase_one(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<PhaseOne, &'static str> {
    let (m, n) = a.shape();
    assert_eq!(b.len(), m);
    let total = n + m; // structural + artificial columns
    let scale = b.amax().max(1.0);

    // tableau[i] = [row of A | e_i | rhs]; artificials start basic.
    let mut t = vec![vec![0.0f64; total + 1]; m];
    for i in 0..m {
        let flip = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = flip * a[(i, j)];
        }
        t[i][n + i] = 1.0;
        t[i][total] = flip * b[i];
    }
    let mut basis: Vec<usize> = (n..total).collect();

    // Objective row for min sum(artificials): z_j - c_j = -sum_i t[i][j] on
    // structural columns, kept in sync by the same pivots.
    let mut obj = vec![0.0f64; total + 1];
    for j in 0..=total {
        let mut s = 0.0;
        for row in t.iter() {
            s += row[j];
        }
        obj[j] = -s;
    }
    for j in n..total {
        obj[j] += 1.0; // c_j = 1 for artificials
    }

    let max_iters = 50 * (total + 4);
    for _ in 0..max_iters {
        // Bland: entering = lowest-index column with negative reduced cost.
        let entering = (0..total).find(|&j| obj[j] < -PIVOT_TOL);
        let Some(col) = entering else {
            break;
        };
        // Ratio test, Bland tie-break on basis index.
        let mut leave: Option<(usize, f64)> = None;
        for (i, row) in t.iter().enumerate() {
            if row[col] > PIVOT_TOL {
                let ratio = row[total] / row[col];
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - 1e-12
                            || ((ratio - lr).abs() <= 1e-12 && basis[i] < basis[li])
                        {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((row_i, _)) = leave else {
            // Unbounded phase-one cannot happen (objective bounded below by 0);
            // treat as a numerical failure.
            return Err("phase-one ratio test found no pivot");
        };
        pivot(&mut t, &mut obj, row_i, col, total);
        basis[row_i] = col;
    }

    let objective = -obj[total];
    if objective > 1e-8 * scale {
        return Ok(PhaseOne::Infeasible { residual: objective });
    }

    let mut x = DVector::zeros(n);
    for (i, &bv) in basis.iter().enumerate() {
        if bv < n {
            x[bv] = t[i][total].max(0.0);
        }
    }
    Ok(PhaseOne::Feasible(x))
}

fn pivot(t: &mut [Vec<f64>], obj: &mut [f64], row: usize, col: usize, total: usize) {
    let p = t[row][col];
    for v in t[row].iter_mut() {
        *v /= p;
    }
    for i in 0..t.len() {
        if i != row {
            let f = t[i][col];
            if f != 0.0 {
                for j in 0..=total {
                    t[i][j] -= f * t[row][j];
                }
            }
        }
    }
    let f = obj[col];
    if f != 0.0 {
        for j in 0..=total {
            obj[j] -= f * t[row][j];
        }
    }
}
