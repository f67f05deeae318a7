//! Gated minimum-cost bipartite matching.

/// Result of matching rows against columns.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    /// `(row, column)` pairs, sorted by row.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    /// Sum of matched entries of `cost`.
    pub fn total_cost(&self, cost: &[Vec<f64>]) -> f64 {
        self.matches.iter().map(|&(r, c)| cost[r][c]).sum()
    }
}

/// Optimal matching where pairs with `cost > gate` (or non-finite cost)
/// are forbidden.
///
/// Each accepted pair is worth `gate - cost`, so the result maximizes total
/// slack; equivalently it minimizes matched cost plus `gate` per row left
/// unmatched. With an infinite gate this becomes the cheapest matching of
/// maximum cardinality.
pub fn min_cost_match(cost: &[Vec<f64>], gate: f64) -> Assignment {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    debug_assert!(cost.iter().all(|r| r.len() == cols), "ragged cost matrix");
    if rows == 0 || cols == 0 {
        return Assignment {
            matches: Vec::new(),
            unmatched_rows: (0..rows).collect(),
            unmatched_cols: (0..cols).collect(),
        };
    }

    let allowed = |c: f64| c.is_finite() && c <= gate;
    let gate = if gate.is_finite() {
        gate
    } else {
        // Large enough that one more pair always outweighs any cost gap.
        let max_abs = cost
            .iter()
            .flatten()
            .filter(|c| c.is_finite())
            .fold(0.0f64, |m, c| m.max(c.abs()));
        2.0 * (rows.min(cols) as f64 + 1.0) * max_abs + 1.0
    };

    // Reduced costs are <= 0 on allowed pairs and 0 on forbidden ones, so a
    // full assignment of the smaller side never does worse than any partial
    // gated matching it extends.
    let transpose = rows > cols;
    let (n, m) = if transpose { (cols, rows) } else { (rows, cols) };
    let mut reduced = vec![0.0f64; n * m];
    for i in 0..n {
        for j in 0..m {
            let c = if transpose { cost[j][i] } else { cost[i][j] };
            if allowed(c) {
                reduced[i * m + j] = c - gate;
            }
        }
    }

    let row_to_col = hungarian(&reduced, n, m);
    let mut matches = Vec::new();
    for (i, &j) in row_to_col.iter().enumerate() {
        let (r, c) = if transpose { (j, i) } else { (i, j) };
        if allowed(cost[r][c]) {
            matches.push((r, c));
        }
    }
    matches.sort_unstable();

    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    for &(r, c) in &matches {
        row_used[r] = true;
        col_used[c] = true;
    }
    Assignment {
        matches,
        unmatched_rows: (0..rows).filter(|&r| !row_used[r]).collect(),
        unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
    }
}

/// Shortest augmenting path Hungarian method for an `n x m` matrix with
/// `n <= m`. Returns the column assigned to each row.
fn hungarian(a: &[f64], n: usize, m: usize) -> Vec<usize> {
    debug_assert!(n <= m);
    let inf = f64::INFINITY;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    // p[j]: row (1-based) matched to column j; p[0] is the row being inserted.
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![inf; m + 1];
    let mut used = vec![false; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.fill(inf);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
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

    let mut row_to_col = vec![0usize; n];
    for j in 1..=m {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive search over all gated matchings. Returns
    /// `(pairs, sum of matched costs)` of an optimum under the same
    /// objective as [`min_cost_match`].
    pub(crate) fn brute_force(cost: &[Vec<f64>], gate: f64) -> (usize, f64) {
        fn go(
            cost: &[Vec<f64>],
            gate: f64,
            row: usize,
            used: &mut Vec<bool>,
            count: usize,
            sum: f64,
            best: &mut Option<(usize, f64)>,
        ) {
            if row == cost.len() {
                let better = match *best {
                    None => true,
                    Some((bc, bs)) if gate.is_finite() => {
                        (sum - gate * count as f64) < (bs - gate * bc as f64)
                    }
                    Some((bc, bs)) => count > bc || (count == bc && sum < bs),
                };
                if better {
                    *best = Some((count, sum));
                }
                return;
            }
            go(cost, gate, row + 1, used, count, sum, best);
            for c in 0..used.len() {
                let v = cost[row][c];
                if !used[c] && v.is_finite() && v <= gate {
                    used[c] = true;
                    go(cost, gate, row + 1, used, count + 1, sum + v, best);
                    used[c] = false;
                }
            }
        }
        let cols = cost.first().map_or(0, Vec::len);
        let mut best = None;
        go(cost, gate, 0, &mut vec![false; cols], 0, 0.0, &mut best);
        best.unwrap_or((0, 0.0))
    }

    #[test]
    fn two_by_two() {
        let cost = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        let a = min_cost_match(&cost, f64::INFINITY);
        assert_eq!(a.matches, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total_cost(&cost), 2.0);
        assert_eq!(brute_force(&cost, f64::INFINITY), (2, 2.0));
    }

    #[test]
    fn gated_out() {
        let a = min_cost_match(&[vec![0.9]], 0.4);
        assert!(a.matches.is_empty());
        assert_eq!(a.unmatched_rows, vec![0]);
        assert_eq!(a.unmatched_cols, vec![0]);
    }

    #[test]
    fn empty() {
        assert_eq!(min_cost_match(&[], 1.0), Assignment::default());
        let a = min_cost_match(&[vec![], vec![]], 1.0);
        assert_eq!(a.unmatched_rows, vec![0, 1]);
    }

    #[test]
    fn rectangular_and_forbidden() {
        let inf = f64::INFINITY;
        let cost = vec![vec![inf, 0.2], vec![0.1, inf], vec![0.3, 0.05]];
        let a = min_cost_match(&cost, 0.5);
        assert_eq!(a.matches, vec![(1, 0), (2, 1)]);
        assert_eq!(a.unmatched_rows, vec![0]);
        assert!(a.unmatched_cols.is_empty());
    }

    #[test]
    fn prefers_slack_over_cardinality() {
        // one cheap pair beats two pairs that are barely inside the gate
        let cost = vec![vec![0.0, 0.39], vec![0.39, 10.0]];
        let a = min_cost_match(&cost, 0.4);
        assert_eq!(a.matches, vec![(0, 0)]);
        assert_eq!(brute_force(&cost, 0.4), (1, 0.0));
    }

    fn arb_matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (0usize..=7, 0usize..=7).prop_flat_map(|(r, c)| {
            prop::collection::vec(prop::collection::vec(0u32..100, c), r)
                .prop_map(|m| m.into_iter().map(|row| row.into_iter().map(f64::from).collect()).collect())
        })
    }

    proptest! {
        #[test]
        fn matches_exhaustive_search(cost in arb_matrix(), gate_int in 0u32..110, infinite in any::<bool>()) {
            let gate = if infinite { f64::INFINITY } else { gate_int as f64 + 1.0 / 1024.0 };
            let a = min_cost_match(&cost, gate);
            let (count, sum) = brute_force(&cost, gate);
            prop_assert_eq!(a.matches.len(), count);
            prop_assert_eq!(a.total_cost(&cost), sum);
            // integrity
            let rows = cost.len();
            let cols = cost.first().map_or(0, Vec::len);
            let mut seen_r = vec![0; rows];
            let mut seen_c = vec![0; cols];
            for &(r, c) in &a.matches { seen_r[r] += 1; seen_c[c] += 1; prop_assert!(cost[r][c] <= gate); }
            for &r in &a.unmatched_rows { seen_r[r] += 1; }
            for &c in &a.unmatched_cols { seen_c[c] += 1; }
            prop_assert!(seen_r.iter().all(|&s| s == 1));
            prop_assert!(seen_c.iter().all(|&s| s == 1));
        }
    }
}
