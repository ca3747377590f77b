//! Dense two-phase simplex for the tiny master problems of the cutting-plane
//! feasibility solver: maximize `c · x` subject to `A x <= b` with free
//! variables. Problems here have at most a few dozen variables and a few
//! hundred rows, so a full tableau with Bland's rule is adequate and
//! deterministic.

const EPS: f64 = 1e-11;
const MAX_PIVOTS_FACTOR: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    /// Optimal solution and objective value.
    Optimal(Vec<f64>, f64),
    Infeasible,
    Unbounded,
    /// Pivot budget exhausted; callers treat this as a solver failure.
    Stalled,
}

/// Maximizes `c · x` over `{x : rows[r].0 · x <= rows[r].1}` with `x` free.
pub fn solve_lp(c: &[f64], rows: &[(Vec<f64>, f64)]) -> LpOutcome {
    let n = c.len();
    let m = rows.len();
    assert!(rows.iter().all(|(a, _)| a.len() == n));

    // Split free variables into positive parts and add one slack per row:
    // columns [u(n) | v(n) | s(m) | artificials]. Rows with negative rhs are
    // negated so the rhs is nonnegative; their slack enters with -1 and an
    // artificial column provides the starting basis.
    let mut art_rows: Vec<usize> = Vec::new();
    for (r, (_, b)) in rows.iter().enumerate() {
        if *b < 0.0 {
            art_rows.push(r);
        }
    }
    let k = art_rows.len();
    let ncols = 2 * n + m + k;
    let mut t = vec![vec![0.0f64; ncols + 1]; m];
    let mut basis = vec![0usize; m];
    let mut art_of_row = vec![usize::MAX; m];
    {
        let mut next_art = 0usize;
        for (r, (a, b)) in rows.iter().enumerate() {
            let sign = if *b < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                t[r][j] = sign * a[j];
                t[r][n + j] = -sign * a[j];
            }
            t[r][2 * n + r] = sign;
            t[r][ncols] = sign * *b;
            if *b < 0.0 {
                let ac = 2 * n + m + next_art;
                t[r][ac] = 1.0;
                basis[r] = ac;
                art_of_row[r] = ac;
                next_art += 1;
            } else {
                basis[r] = 2 * n + r;
            }
        }
    }

    let max_pivots = MAX_PIVOTS_FACTOR * (m + ncols) + 1000;

    // Phase 1: maximize W = -sum of artificials; feasible iff W reaches 0.
    if k > 0 {
        let mut obj = vec![0.0f64; ncols + 1];
        // Reduced costs z_j - c_j for cost -1 on the artificial columns,
        // priced out over the starting basis.
        for r in 0..m {
            if art_of_row[r] != usize::MAX {
                for j in 0..=ncols {
                    obj[j] -= t[r][j];
                }
            }
        }
        for ac in 0..k {
            obj[2 * n + m + ac] = 0.0;
        }
        if !iterate(&mut t, &mut obj, &mut basis, ncols, usize::MAX, max_pivots) {
            return LpOutcome::Stalled;
        }
        if obj[ncols] < -1e-9 {
            return LpOutcome::Infeasible;
        }
        // Drive leftover zero-level artificials out of the basis where a
        // nonzero pivot exists; rows without one are redundant.
        let mut scratch = vec![0.0f64; ncols + 1];
        for r in 0..m {
            if basis[r] >= 2 * n + m {
                for j in 0..(2 * n + m) {
                    if t[r][j].abs() > EPS {
                        pivot_full(&mut t, &mut scratch, &mut basis, r, j, ncols);
                        break;
                    }
                }
            }
        }
    }

    // Phase 2: maximize the real objective with artificial columns banned.
    let banned_from = 2 * n + m;
    let mut obj = vec![0.0f64; ncols + 1];
    for j in 0..n {
        obj[j] = -c[j];
        obj[n + j] = c[j];
    }
    // Price out the current basis.
    for r in 0..m {
        let bj = basis[r];
        if obj[bj].abs() > 0.0 {
            let f = obj[bj];
            for j in 0..=ncols {
                obj[j] -= f * t[r][j];
            }
        }
    }
    if !iterate(&mut t, &mut obj, &mut basis, ncols, banned_from, max_pivots) {
        return LpOutcome::Stalled;
    }
    if obj[ncols].is_nan() {
        return LpOutcome::Unbounded;
    }

    let mut x = vec![0.0f64; n];
    for r in 0..m {
        let b = basis[r];
        if b < n {
            x[b] += t[r][ncols];
        } else if b < 2 * n {
            x[b - n] -= t[r][ncols];
        }
    }
    let val = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    LpOutcome::Optimal(x, val)
}

/// Bland-rule simplex iterations on the tableau. Columns at or beyond
/// `banned_from` never enter. Returns false when the pivot budget is
/// exhausted; signals unboundedness by setting the objective value to NaN.
fn iterate(
    t: &mut [Vec<f64>],
    obj: &mut [f64],
    basis: &mut [usize],
    ncols: usize,
    banned_from: usize,
    max_pivots: usize,
) -> bool {
    let m = t.len();
    for _ in 0..max_pivots {
        // Entering column: smallest index with negative reduced cost.
        let mut enter = usize::MAX;
        for j in 0..ncols {
            if j >= banned_from {
                break;
            }
            if obj[j] < -EPS {
                enter = j;
                break;
            }
        }
        if enter == usize::MAX {
            return true;
        }
        // Ratio test with Bland tie-breaking on the basis index.
        let mut leave = usize::MAX;
        let mut best = f64::INFINITY;
        for r in 0..m {
            if t[r][enter] > EPS {
                let ratio = t[r][ncols] / t[r][enter];
                if ratio < best - 1e-15
                    || (ratio <= best + 1e-15 && leave != usize::MAX && basis[r] < basis[leave])
                {
                    best = ratio;
                    leave = r;
                }
            }
        }
        if leave == usize::MAX {
            obj[ncols] = f64::NAN;
            return true;
        }
        pivot_full(t, obj, basis, leave, enter, ncols);
    }
    false
}

fn pivot_full(
    t: &mut [Vec<f64>],
    obj: &mut [f64],
    basis: &mut [usize],
    r: usize,
    c: usize,
    ncols: usize,
) {
    let piv = t[r][c];
    for j in 0..=ncols {
        t[r][j] /= piv;
    }
    t[r][c] = 1.0;
    for rr in 0..t.len() {
        if rr != r {
            let f = t[rr][c];
            if f != 0.0 {
                for j in 0..=ncols {
                    t[rr][j] -= f * t[r][j];
                }
                t[rr][c] = 0.0;
            }
        }
    }
    let f = obj[c];
    if f != 0.0 {
        for j in 0..=ncols {
            obj[j] -= f * t[r][j];
        }
        obj[c] = 0.0;
    }
    basis[r] = c;
}
