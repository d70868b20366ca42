//! Rectangular linear assignment (shortest augmenting path with potentials).

use crate::scalar::Real;

/// One-to-one matching between rows (previous side) and columns (current side).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AssignmentResult {
    /// `(row, col)` pairs, sorted by row.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_prev: Vec<usize>,
    pub unmatched_curr: Vec<usize>,
}

impl AssignmentResult {
    /// Total cost of the matched pairs, summed in row order.
    pub fn total_cost<T: Real>(&self, cost: &[Vec<T>]) -> T {
        self.matches.iter().fold(T::zero(), |acc, &(r, c)| acc + cost[r][c])
    }
}

/// Minimum-cost assignment on an `n x m` cost matrix given as rows.
///
/// Every row is matched when `n <= m`, every column otherwise. With
/// `forbid_nonnegative`, pairs whose cost is `>= 0` are inadmissible and the
/// result is the cheapest partial matching over strictly negative pairs.
pub fn hungarian<T: Real>(cost: &[Vec<T>], forbid_nonnegative: bool) -> AssignmentResult {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    debug_assert!(cost.iter().all(|r| r.len() == cols));

    let entry = |r: usize, c: usize| {
        let v = cost[r][c];
        if forbid_nonnegative && v > T::zero() {
            T::zero()
        } else {
            v
        }
    };

    let pairs: Vec<(usize, usize)> = if rows == 0 || cols == 0 {
        Vec::new()
    } else if rows <= cols {
        solve(rows, cols, |r, c| entry(r, c))
    } else {
        let mut p: Vec<_> = solve(cols, rows, |r, c| entry(c, r)).into_iter().map(|(c, r)| (r, c)).collect();
        p.sort_unstable();
        p
    };

    let matches: Vec<(usize, usize)> = pairs
        .into_iter()
        .filter(|&(r, c)| !(forbid_nonnegative && cost[r][c] >= T::zero()))
        .collect();
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    for &(r, c) in &matches {
        row_used[r] = true;
        col_used[c] = true;
    }
    AssignmentResult {
        matches,
        unmatched_prev: (0..rows).filter(|&r| !row_used[r]).collect(),
        unmatched_curr: (0..cols).filter(|&c| !col_used[c]).collect(),
    }
}

/// Core solver for `n <= m`; returns `(row, col)` for every row, sorted by row.
fn solve<T: Real>(n: usize, m: usize, a: impl Fn(usize, usize) -> T) -> Vec<(usize, usize)> {
    let inf = T::max_value().unwrap();
    // 1-based potentials; column 0 is the virtual start.
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut out: Vec<(usize, usize)> =
        (1..=m).filter(|&j| owner[j] != 0).map(|j| (owner[j] - 1, j - 1)).collect();
    out.sort_unstable();
    out
}
