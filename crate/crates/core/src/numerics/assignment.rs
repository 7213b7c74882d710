//! Rectangular minimum-cost assignment.
//!
//! Shortest augmenting path with row/column potentials (the Kuhn-Munkres
//! scheme in its Jonker-Volgenant form). O(rows² · cols) after orienting the
//! matrix so that rows ≤ cols.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub total: f64,
}

/// Assign every row (or every column, whichever is fewer) to a distinct
/// partner so that the summed cost is minimal.
pub fn assign_min_cost(cost: &DMatrix<f64>) -> Result<Assignment> {
    if cost.nrows() == 0 || cost.ncols() == 0 {
        return Ok(Assignment {
            pairs: Vec::new(),
            total: 0.0,
        });
    }
    if let Some(bad) = cost.iter().find(|c| !c.is_finite()) {
        return Err(Error::Domain(format!("assignment cost {bad} is not finite")));
    }

    let transposed = cost.nrows() > cost.ncols();
    let oriented = if transposed {
        cost.transpose()
    } else {
        cost.clone()
    };
    let row_to_col = solve_oriented(&oriented);

    let mut pairs: Vec<(usize, usize)> = row_to_col
        .iter()
        .enumerate()
        .map(|(r, &c)| if transposed { (c, r) } else { (r, c) })
        .collect();
    pairs.sort_unstable();
    let total = pairs.iter().map(|&(r, c)| cost[(r, c)]).sum();
    Ok(Assignment { pairs, total })
}

/// Requires `rows <= cols`. Returns the column assigned to each row.
fn solve_oriented(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    let m = cost.ncols();
    // 1-based bookkeeping; index 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut matched_row = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for row in 1..=n {
        matched_row[0] = row;
        let mut col0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[col0] = true;
            let r0 = matched_row[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            for c in 1..=m {
                if used[c] {
                    continue;
                }
                let reduced = cost[(r0 - 1, c - 1)] - u[r0] - v[c];
                if reduced < min_slack[c] {
                    min_slack[c] = reduced;
                    way[c] = col0;
                }
                if min_slack[c] < delta {
                    delta = min_slack[c];
                    col1 = c;
                }
            }
            for c in 0..=m {
                if used[c] {
                    u[matched_row[c]] += delta;
                    v[c] -= delta;
                } else {
                    min_slack[c] -= delta;
                }
            }
            col0 = col1;
            if matched_row[col0] == 0 {
                break;
            }
        }
        // Flip the augmenting path.
        loop {
            let prev = way[col0];
            matched_row[col0] = matched_row[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    for c in 1..=m {
        if matched_row[c] != 0 {
            row_to_col[matched_row[c] - 1] = c - 1;
        }
    }
    row_to_col
}
