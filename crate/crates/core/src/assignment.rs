//! Linear assignment: permutation types, an O(n³) Hungarian solver with a
//! lexicographic tie-break, and Sinkhorn normalization.

use crate::error::{Error, Result};

/// Square 0/1 matrix with exactly one 1 per row and per column, stored as
/// the column index of each row's 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PermutationMatrix {
    row_to_col: Vec<usize>,
}

impl PermutationMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            row_to_col: (0..n).collect(),
        }
    }

    pub fn from_row_to_col(row_to_col: Vec<usize>) -> Result<Self> {
        let n = row_to_col.len();
        let mut seen = vec![false; n];
        for &c in &row_to_col {
            if c >= n || std::mem::replace(&mut seen[c], true) {
                return Err(Error::Domain(format!("{row_to_col:?} is not a permutation")));
            }
        }
        Ok(Self { row_to_col })
    }

    /// Builds from a dense 0/1 matrix, rejecting anything that is not a permutation.
    pub fn from_dense(m: &[Vec<f64>]) -> Result<Self> {
        let n = m.len();
        let mut r2c = Vec::with_capacity(n);
        for row in m {
            if row.len() != n {
                return Err(Error::Domain("permutation matrix must be square".into()));
            }
            let ones: Vec<usize> = (0..n).filter(|&j| row[j] == 1.0).collect();
            if ones.len() != 1 || row.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Domain("row does not contain exactly one 1".into()));
            }
            r2c.push(ones[0]);
        }
        Self::from_row_to_col(r2c)
    }

    pub fn len(&self) -> usize {
        self.row_to_col.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_to_col.is_empty()
    }

    pub fn row_to_col(&self) -> &[usize] {
        &self.row_to_col
    }

    pub fn col_to_row(&self) -> Vec<usize> {
        let mut inv = vec![0; self.len()];
        for (r, &c) in self.row_to_col.iter().enumerate() {
            inv[c] = r;
        }
        inv
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.row_to_col[i] == j {
            1.0
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        (0..n).map(|i| (0..n).map(|j| self.get(i, j)).collect()).collect()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.to_dense().concat()
    }

    /// Σ cost[i][P(i)], summed in row order.
    pub fn cost(&self, cost: &[Vec<f64>]) -> f64 {
        self.row_to_col.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()
    }

    /// Column-wise argmax: step j gets the part in row `P⁻¹(j)`.
    pub fn to_order(&self) -> Order {
        Order {
            sigma: self.col_to_row(),
        }
    }
}

/// `sigma[j]` is the part placed at step `j` (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Order {
    pub sigma: Vec<usize>,
}

impl Order {
    pub fn new(sigma: Vec<usize>) -> Result<Self> {
        PermutationMatrix::from_row_to_col(sigma.clone())?;
        Ok(Self { sigma })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            sigma: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// `step_of[i]`: the step at which part `i` appears.
    pub fn step_of(&self) -> Vec<usize> {
        let mut inv = vec![0; self.len()];
        for (j, &i) in self.sigma.iter().enumerate() {
            inv[i] = j;
        }
        inv
    }

    /// The part-by-step matrix with `P[sigma[j]][j] = 1`.
    pub fn to_permutation(&self) -> PermutationMatrix {
        PermutationMatrix {
            row_to_col: self.step_of(),
        }
    }
}

fn check_square(cost: &[Vec<f64>]) -> Result<usize> {
    let n = cost.len();
    for row in cost {
        if row.len() != n {
            return Err(Error::Domain("cost matrix must be square".into()));
        }
        if row.iter().any(|v| v.is_nan()) {
            return Err(Error::Domain("NaN in cost matrix".into()));
        }
        if row.iter().any(|v| v.is_infinite()) {
            return Err(Error::Domain("infinite entry in cost matrix".into()));
        }
    }
    Ok(n)
}

/// Shortest augmenting path with row/column potentials. Returns the column
/// of each row and the potentials `(u, v)` so that `cost[i][j] - u[i] - v[j] >= 0`
/// with equality on the assignment.
fn solve_potentials(cost: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = cost.len();
    // 1-based internals; index 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
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
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
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
    let mut r2c = vec![0usize; n];
    for j in 1..=n {
        r2c[p[j] - 1] = j - 1;
    }
    (r2c, u[1..].to_vec(), v[1..].to_vec())
}

/// Kuhn's augmenting-path search restricted to `allowed` edges.
fn try_kuhn(r: usize, allowed: &[Vec<bool>], seen: &mut [bool], col_owner: &mut [Option<usize>]) -> bool {
    for c in 0..allowed.len() {
        if allowed[r][c] && !seen[c] {
            seen[c] = true;
            if col_owner[c].is_none_or(|o| try_kuhn(o, allowed, seen, col_owner)) {
                col_owner[c] = Some(r);
                return true;
            }
        }
    }
    false
}

fn has_perfect_matching(rows: &[usize], allowed: &[Vec<bool>]) -> bool {
    let n = allowed.len();
    let mut owner = vec![None; n];
    rows.iter().all(|&r| {
        let mut seen = vec![false; n];
        try_kuhn(r, allowed, &mut seen, &mut owner)
    })
}

/// Minimum-cost perfect assignment. Among optimal assignments (within
/// floating-point rounding of the dual) the lexicographically smallest
/// row→column vector is returned.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<PermutationMatrix> {
    let n = check_square(cost)?;
    if n == 0 {
        return Ok(PermutationMatrix::identity(0));
    }
    let (base, u, v) = solve_potentials(cost);
    let scale = cost
        .iter()
        .flatten()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(1.0);
    let tol = 1e-12 * scale * n as f64;
    // Edges with zero reduced cost; every perfect matching on them is optimal.
    let mut tight: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| cost[i][j] - u[i] - v[j] <= tol).collect())
        .collect();
    for (i, &j) in base.iter().enumerate() {
        tight[i][j] = true;
    }
    let mut chosen = Vec::with_capacity(n);
    for i in 0..n {
        let rest: Vec<usize> = (i + 1..n).collect();
        let mut picked = None;
        for j in 0..n {
            if !tight[i][j] {
                continue;
            }
            let mut trial = tight.clone();
            for (c, t) in trial[i].iter_mut().enumerate() {
                *t = c == j;
            }
            for row in trial.iter_mut().skip(i + 1) {
                row[j] = false;
            }
            if has_perfect_matching(&rest, &trial) {
                picked = Some((j, trial));
                break;
            }
        }
        let (j, trial) = picked.expect("the base assignment is always feasible");
        tight = trial;
        chosen.push(j);
    }
    let refined = PermutationMatrix { row_to_col: chosen };
    let base = PermutationMatrix { row_to_col: base };
    if refined.cost(cost) <= base.cost(cost) {
        Ok(refined)
    } else {
        Ok(base)
    }
}

/// `exp(S/temp)` alternately row- and column-normalized `iters` times, in the
/// log domain with per-row max subtraction.
pub fn sinkhorn_normalize(s: &[Vec<f64>], iters: usize, temp: f64) -> Result<Vec<Vec<f64>>> {
    check_square(s)?;
    if iters == 0 {
        return Err(Error::Domain("sinkhorn needs at least one iteration".into()));
    }
    if !(temp > 0.0) {
        return Err(Error::Domain(format!("sinkhorn temperature must be positive, got {temp}")));
    }
    let n = s.len();
    let mut l: Vec<Vec<f64>> = s.iter().map(|r| r.iter().map(|x| x / temp).collect()).collect();
    let lse = |xs: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = xs.collect();
        let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
    };
    for _ in 0..iters {
        for row in l.iter_mut() {
            let z = lse(&mut row.iter().copied());
            row.iter_mut().for_each(|x| *x -= z);
        }
        for j in 0..n {
            let z = lse(&mut l.iter().map(|r| r[j]));
            l.iter_mut().for_each(|r| r[j] -= z);
        }
    }
    Ok(l.into_iter().map(|r| r.into_iter().map(f64::exp).collect()).collect())
}
