//! Maximum-weight one-to-one assignment (Hungarian algorithm, O(n³)).

/// Result of [`optimal_assignment`].
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// For each row, the column it is assigned to, if any.
    pub row_to_col: Vec<Option<usize>>,
    pub total: f64,
}

/// Assigns rows to columns so the summed weight is maximal.
///
/// `weights` is a rectangular, non-negative matrix; every row must have the
/// same length. With more rows than columns some rows stay unassigned (and
/// vice versa).
pub fn optimal_assignment(weights: &[Vec<f64>]) -> Assignment {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    assert!(
        weights.iter().all(|r| r.len() == cols),
        "weight matrix must be rectangular"
    );
    if rows == 0 || cols == 0 {
        return Assignment {
            row_to_col: vec![None; rows],
            total: 0.0,
        };
    }

    let n = rows.max(cols);
    let max = weights.iter().flatten().copied().fold(0.0_f64, f64::max);
    // Square cost matrix; padding cells cost as much as a zero weight.
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            max - weights[i][j]
        } else {
            max
        }
    };

    // 1-based potentials and matching, column 0 is a sentinel.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![None; rows];
    let mut total = 0.0;
    for j in 1..=n {
        let i = matched_row[j];
        if i > 0 && i <= rows && j <= cols {
            row_to_col[i - 1] = Some(j - 1);
            total += weights[i - 1][j - 1];
        }
    }
    Assignment { row_to_col, total }
}
