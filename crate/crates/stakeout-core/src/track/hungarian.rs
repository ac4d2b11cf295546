//! Minimum-cost assignment (Hungarian algorithm, potentials formulation,
//! O(n³)). Rectangular inputs are padded to square with zero-cost dummy
//! cells; `INFINITY` marks forbidden pairs. Because every forbidden pair is
//! replaced by a sentinel larger than the sum of all finite costs, the solver
//! first maximizes the number of allowed matches and then minimizes their
//! total cost. Only real, allowed pairs are returned.

/// `cost[row][col]`; rows and columns may differ in count. Returns matched
/// `(row, col)` pairs sorted by row.
pub fn assign(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let n = rows.max(cols);
    let mut big = 1.0;
    for row in cost {
        debug_assert_eq!(row.len(), cols);
        for &c in row {
            if c.is_finite() {
                big += c.abs();
            }
        }
    }
    let big = big * 2.0;
    let at = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            let c = cost[i][j];
            if c.is_finite() {
                c
            } else {
                big
            }
        } else {
            0.0
        }
    };

    // Potentials u (rows), v (cols); p[j] = row matched to column j; 1-based
    // with column 0 as the scratch slot.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut out = Vec::new();
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i - 1 < rows && j - 1 < cols && cost[i - 1][j - 1].is_finite() {
            out.push((i - 1, j - 1));
        }
    }
    out.sort_unstable();
    out
}
