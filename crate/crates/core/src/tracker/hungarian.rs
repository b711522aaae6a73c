//! Minimum-cost bipartite assignment (shortest augmenting paths with potentials).

use crate::error::{Error, Result};

/// Marks a disallowed pairing.
pub const FORBIDDEN: f64 = f64::INFINITY;

#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Dimension {
                context: "cost matrix",
                left: vec![rows, cols],
                right: vec![values.len()],
            });
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::validation(format!("cost entries must be non-negative, got {v}")));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::validation("ragged cost matrix"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn is_allowed(&self, r: usize, c: usize) -> bool {
        self.get(r, c).is_finite()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// Matched `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    /// Rows left without an allowed partner.
    pub unmatched_rows: Vec<usize>,
    /// Sum of matched costs, accumulated in row order.
    pub total_cost: f64,
}

/// Solves the rectangular assignment problem.
///
/// Returns a matching that uses the largest possible number of allowed pairs and,
/// among those, has minimal total cost. Rows and columns are scanned in index
/// order and ties go to the lowest column index, so the result is deterministic.
pub fn hungarian(costs: &CostMatrix) -> Assignment {
    let (rows, cols) = (costs.rows, costs.cols);
    if rows == 0 || cols == 0 {
        return Assignment {
            pairs: Vec::new(),
            unmatched_rows: (0..rows).collect(),
            total_cost: 0.0,
        };
    }

    // Forbidden pairs become a penalty larger than any all-allowed matching.
    let finite_sum: f64 = costs.values.iter().filter(|v| v.is_finite()).sum();
    let penalty = (finite_sum + 1.0) * (rows.min(cols) as f64 + 1.0);
    let transposed = rows > cols;
    let (n, m) = if transposed { (cols, rows) } else { (rows, cols) };
    let at = |i: usize, j: usize| {
        let v = if transposed { costs.get(j, i) } else { costs.get(i, j) };
        if v.is_finite() {
            v
        } else {
            penalty
        }
    };

    // 1-based potentials; column 0 is the virtual source.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
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

    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| owner[j] != 0)
        .map(|j| {
            let (i, j) = (owner[j] - 1, j - 1);
            if transposed {
                (j, i)
            } else {
                (i, j)
            }
        })
        .filter(|&(r, c)| costs.is_allowed(r, c))
        .collect();
    pairs.sort_unstable();
    let mut matched = vec![false; rows];
    for &(r, _) in &pairs {
        matched[r] = true;
    }
    let total_cost = pairs.iter().map(|&(r, c)| costs.get(r, c)).sum();
    Assignment {
        pairs,
        unmatched_rows: (0..rows).filter(|&r| !matched[r]).collect(),
        total_cost,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive oracle: best total over every injective map of the smaller side.
    /// Returns (number of allowed pairs, cost) maximizing the first then minimizing the second.
    pub(crate) fn brute_force(costs: &CostMatrix) -> (usize, f64) {
        fn rec(
            c: &CostMatrix,
            row: usize,
            used: &mut Vec<bool>,
            picked: &mut Vec<(usize, usize)>,
            best: &mut (usize, f64),
        ) {
            if row == c.rows() {
                let mut p = picked.clone();
                p.sort_unstable();
                let count = p.len();
                let cost: f64 = p.iter().map(|&(r, col)| c.get(r, col)).sum();
                if count > best.0 || (count == best.0 && cost < best.1) {
                    *best = (count, cost);
                }
                return;
            }
            // leaving a row unmatched is only useful when rows outnumber columns
            // or every option is forbidden
            rec(c, row + 1, used, picked, best);
            for col in 0..c.cols() {
                if !used[col] && c.is_allowed(row, col) {
                    used[col] = true;
                    picked.push((row, col));
                    rec(c, row + 1, used, picked, best);
                    picked.pop();
                    used[col] = false;
                }
            }
        }
        let mut best = (0usize, f64::INFINITY);
        rec(costs, 0, &mut vec![false; costs.cols()], &mut Vec::new(), &mut best);
        if best.0 == 0 {
            best.1 = 0.0;
        }
        best
    }

    fn is_matching(a: &Assignment) -> bool {
        let mut rows: Vec<_> = a.pairs.iter().map(|p| p.0).collect();
        let mut cols: Vec<_> = a.pairs.iter().map(|p| p.1).collect();
        rows.dedup();
        cols.sort_unstable();
        cols.dedup();
        rows.len() == a.pairs.len() && cols.len() == a.pairs.len()
    }

    #[test]
    fn diagonal_zero() {
        let c = CostMatrix::from_rows(&[vec![0.0, 9.0, 9.0], vec![9.0, 0.0, 9.0], vec![9.0, 9.0, 0.0]]).unwrap();
        let a = hungarian(&c);
        assert_eq!(a.pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(a.total_cost, 0.0);
    }

    #[test]
    fn two_by_two_hand_case() {
        let c = CostMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let a = hungarian(&c);
        assert_eq!(a.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(a.total_cost, 4.0);
    }

    #[test]
    fn random_five_by_five_matches_permutations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let vals: Vec<f64> = (0..25).map(|_| rng.random_range(0.0..10.0)).collect();
            let c = CostMatrix::new(5, 5, vals).unwrap();
            let a = hungarian(&c);
            assert_eq!(a.pairs.len(), 5);
            assert_eq!(a.total_cost, brute_force(&c).1);
        }
    }

    #[test]
    fn forbidden_row_left_unmatched() {
        let c = CostMatrix::from_rows(&[vec![1.0, 2.0], vec![FORBIDDEN, FORBIDDEN]]).unwrap();
        let a = hungarian(&c);
        assert_eq!(a.pairs, vec![(0, 0)]);
        assert_eq!(a.unmatched_rows, vec![1]);
    }

    #[test]
    fn forbidden_forces_expensive_pair() {
        // The cheap (0,0) would strand row 1, which may only use column 0.
        let c = CostMatrix::from_rows(&[vec![0.0, 5.0], vec![1.0, FORBIDDEN]]).unwrap();
        let a = hungarian(&c);
        assert_eq!(a.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(a.total_cost, 6.0);
    }

    #[test]
    fn empty_shapes() {
        let a = hungarian(&CostMatrix::new(0, 3, vec![]).unwrap());
        assert!(a.pairs.is_empty());
        let a = hungarian(&CostMatrix::new(2, 0, vec![]).unwrap());
        assert_eq!(a.unmatched_rows, vec![0, 1]);
    }

    #[test]
    fn rejects_negative_costs() {
        assert!(CostMatrix::new(1, 1, vec![-1.0]).is_err());
        assert!(CostMatrix::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn random_rectangular_with_forbidden() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let r = rng.random_range(1..=5);
            let c = rng.random_range(1..=5);
            let vals: Vec<f64> = (0..r * c)
                .map(|_| {
                    if rng.random_bool(0.2) {
                        FORBIDDEN
                    } else {
                        rng.random_range(0.0..10.0)
                    }
                })
                .collect();
            let m = CostMatrix::new(r, c, vals).unwrap();
            let a = hungarian(&m);
            assert!(is_matching(&a));
            let (count, cost) = brute_force(&m);
            assert_eq!(a.pairs.len(), count);
            assert!((a.total_cost - cost).abs() < 1e-9, "{} vs {}", a.total_cost, cost);
        }
    }
}
