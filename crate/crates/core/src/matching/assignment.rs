//! Rank-filtered neighbourhood assignment.
//!
//! The energy of matching two neighbourhoods is the minimum, over injective
//! mappings of source neighbours onto target neighbours, of the sum of the `n`
//! cheapest pair costs. Any injective mapping contains a matching of size `n`
//! whose cost bounds its `n` cheapest pairs from above, and any matching of
//! size `n` extends to an injective mapping. The minimum is therefore the
//! minimum-cost matching of cardinality exactly `n`, which successive shortest
//! augmenting paths compute exactly.

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::matching::energy::{neighbor_energy, neighbor_energy_lenient};

/// Minimum-cost matching with exactly `k` pairs in a dense bipartite cost matrix.
///
/// Returns the chosen `(row, col)` pairs sorted by row. `k` is clamped to the
/// smaller side. Costs must be finite.
pub fn min_cost_k_matching(cost: &[Vec<f64>], k: usize) -> Vec<(usize, usize)> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    let k = k.min(rows).min(cols);
    let mut row_match: Vec<Option<usize>> = vec![None; rows];
    let mut col_match: Vec<Option<usize>> = vec![None; cols];

    // Node layout: rows are 0..rows, columns are rows..rows+cols.
    let n_nodes = rows + cols;
    for _ in 0..k {
        // Bellman-Ford from a virtual source attached to every free row.
        let mut dist = vec![f64::INFINITY; n_nodes];
        let mut prev = vec![usize::MAX; n_nodes];
        for r in 0..rows {
            if row_match[r].is_none() {
                dist[r] = 0.0;
            }
        }
        for _ in 0..n_nodes {
            let mut changed = false;
            for r in 0..rows {
                if !dist[r].is_finite() {
                    continue;
                }
                for c in 0..cols {
                    if row_match[r] == Some(c) {
                        continue;
                    }
                    let nd = dist[r] + cost[r][c];
                    if nd < dist[rows + c] {
                        dist[rows + c] = nd;
                        prev[rows + c] = r;
                        changed = true;
                    }
                }
            }
            for c in 0..cols {
                if let Some(r) = col_match[c] {
                    let nd = dist[rows + c] - cost[r][c];
                    if nd < dist[r] {
                        dist[r] = nd;
                        prev[r] = rows + c;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let Some(target) = (0..cols)
            .filter(|&c| col_match[c].is_none() && dist[rows + c].is_finite())
            .min_by(|&a, &b| dist[rows + a].total_cmp(&dist[rows + b]).then(a.cmp(&b)))
        else {
            break;
        };
        // Flip the augmenting path.
        let mut c = target;
        loop {
            let r = prev[rows + c];
            let previous_col = row_match[r];
            row_match[r] = Some(c);
            col_match[c] = Some(r);
            match previous_col {
                Some(pc) if prev[r] == rows + pc => c = pc,
                _ => break,
            }
        }
    }

    row_match.iter().enumerate().filter_map(|(r, c)| c.map(|c| (r, c))).collect()
}

/// Sum of `values` in ascending order, so that equal multisets give equal sums.
pub(crate) fn canonical_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.into_iter().sum()
}

fn energy_matrix(
    g_i: Point,
    g_neighbors: &[Point],
    h_j: Point,
    h_neighbors: &[Point],
    lenient: bool,
) -> Result<Vec<Vec<f64>>> {
    g_neighbors
        .iter()
        .map(|&g| {
            h_neighbors
                .iter()
                .map(|&h| {
                    if lenient {
                        Ok(neighbor_energy_lenient(g_i, g, h_j, h))
                    } else {
                        neighbor_energy(g_i, g, h_j, h)
                    }
                })
                .collect()
        })
        .collect()
}

fn solve(matrix: &[Vec<f64>], n: usize) -> f64 {
    let k = n.min(matrix.len()).min(matrix[0].len());
    let chosen = min_cost_k_matching(matrix, k);
    canonical_sum(chosen.into_iter().map(|(r, c)| matrix[r][c]).collect())
}

/// Energy of matching the neighbourhood of `g_i` onto that of `h_j`.
///
/// Uses `n = min(max_pairs, |g_neighbors|, |h_neighbors|)` pair costs.
pub fn assignment_energy(
    g_neighbors: &[Point],
    h_neighbors: &[Point],
    g_i: Point,
    h_j: Point,
    max_pairs: usize,
) -> Result<f64> {
    if g_neighbors.is_empty() || h_neighbors.is_empty() {
        return Err(Error::InsufficientData("assignment needs at least one neighbour on each side".into()));
    }
    if max_pairs == 0 {
        return Err(Error::InvalidParameter("number of neighbour pairs must be at least 1".into()));
    }
    let m = energy_matrix(g_i, g_neighbors, h_j, h_neighbors, false)?;
    Ok(solve(&m, max_pairs))
}

/// As [`assignment_energy`] but tolerant of a source neighbour sitting on `h_j`.
pub(crate) fn assignment_energy_lenient(
    g_neighbors: &[Point],
    h_neighbors: &[Point],
    g_i: Point,
    h_j: Point,
    max_pairs: usize,
) -> f64 {
    let m = energy_matrix(g_i, g_neighbors, h_j, h_neighbors, true).expect("lenient energies never fail");
    solve(&m, max_pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive search over all injective partial assignments of size k.
    fn brute(cost: &[Vec<f64>], k: usize) -> f64 {
        fn rec(cost: &[Vec<f64>], row: usize, left: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if left == 0 {
                *best = best.min(acc);
                return;
            }
            if cost.len() - row < left {
                return;
            }
            rec(cost, row + 1, left, used, acc, best);
            for c in 0..used.len() {
                if !used[c] {
                    used[c] = true;
                    rec(cost, row + 1, left - 1, used, acc + cost[row][c], best);
                    used[c] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, 0, k, &mut vec![false; cost[0].len()], 0.0, &mut best);
        best
    }

    #[test]
    fn k_matching_matches_brute_force() {
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64)
        };
        for trial in 0..300 {
            let rows = 1 + trial % 6;
            let cols = 1 + (trial / 6) % 6;
            let cost: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| next() * 4.0).collect()).collect();
            for k in 1..=rows.min(cols) {
                let pairs = min_cost_k_matching(&cost, k);
                assert_eq!(pairs.len(), k);
                let total: f64 = pairs.iter().map(|&(r, c)| cost[r][c]).sum();
                assert!((total - brute(&cost, k)).abs() < 1e-12, "trial {trial} k {k}");
            }
        }
    }

    #[test]
    fn worked_examples() {
        let o = Point::new(0.0, 0.0);
        let a = Point::new(100.0, 0.0);
        let b = Point::new(0.0, 100.0);
        assert_eq!(assignment_energy(&[a], &[a], o, o, 1).unwrap(), 0.0);
        assert!((assignment_energy(&[a], &[b], o, o, 1).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(assignment_energy(&[a, b], &[a, b], o, o, 2).unwrap(), 0.0);
        // The crossed mapping pays a right angle on both pairs.
        let crossed = neighbor_energy(o, a, o, b).unwrap() + neighbor_energy(o, b, o, a).unwrap();
        assert!((crossed - 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_neighbourhood_is_error() {
        let o = Point::new(0.0, 0.0);
        assert!(assignment_energy(&[], &[Point::new(1.0, 0.0)], o, o, 1).is_err());
        assert!(assignment_energy(&[Point::new(1.0, 0.0)], &[], o, o, 1).is_err());
    }
}
