use serde::{Deserialize, Serialize};

use super::{aabb, pca_frame, PointCloud};
use crate::error::{Error, Result};

pub const DEFAULT_GROUP_REL_TOL: f64 = 0.02;

/// Partition of part indices into geometric-equivalence groups. Groups are
/// sorted by their smallest member and members are ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceGroups {
    groups: Vec<Vec<usize>>,
}

impl EquivalenceGroups {
    pub fn new(mut groups: Vec<Vec<usize>>) -> Result<Self> {
        let n: usize = groups.iter().map(Vec::len).sum();
        let mut seen = vec![false; n];
        for g in &mut groups {
            if g.is_empty() {
                return Err(Error::Domain("empty equivalence group".into()));
            }
            g.sort_unstable();
            for &i in g.iter() {
                if i >= n || seen[i] {
                    return Err(Error::Domain(format!(
                        "index {i} is out of range or appears twice in the partition"
                    )));
                }
                seen[i] = true;
            }
        }
        groups.sort_by_key(|g| g[0]);
        Ok(Self { groups })
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            groups: (0..n).map(|i| vec![i]).collect(),
        }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn num_parts(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Group index of every part.
    pub fn membership(&self) -> Vec<usize> {
        let mut m = vec![0; self.num_parts()];
        for (g, members) in self.groups.iter().enumerate() {
            for &i in members {
                m[i] = g;
            }
        }
        m
    }
}

/// Single-linkage grouping on AABB diagonal length, measured after rigid PCA
/// canonicalization. Two parts link when their diagonals differ by at most
/// `rel_tol` times the larger one.
pub fn group_equivalent_parts(parts: &[PointCloud], rel_tol: f64) -> Result<EquivalenceGroups> {
    if !(rel_tol >= 0.0) {
        return Err(Error::Domain(format!("rel_tol must be non-negative, got {rel_tol}")));
    }
    let diags = parts
        .iter()
        .map(|p| Ok(aabb(&pca_frame(p)?.cloud).diagonal()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(group_by_diagonal(&diags, rel_tol))
}

pub(crate) fn group_by_diagonal(diags: &[f64], rel_tol: f64) -> EquivalenceGroups {
    let n = diags.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let tol = rel_tol * diags[i].max(diags[j]);
            if (diags[i] - diags[j]).abs() <= tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    EquivalenceGroups { groups }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_rule() {
        let g = group_by_diagonal(&[1.0, 1.01, 2.0], 0.02);
        assert_eq!(g.groups(), &[vec![0, 1], vec![2]]);
    }

    #[test]
    fn distinct_diagonals_zero_tolerance() {
        let g = group_by_diagonal(&[1.0, 1.5, 2.0, 0.5], 0.0);
        assert_eq!(g.groups().len(), 4);
    }

    #[test]
    fn single_linkage_chains() {
        let g = group_by_diagonal(&[1.0, 1.015, 1.03], 0.02);
        assert_eq!(g.groups(), &[vec![0, 1, 2]]);
    }

    #[test]
    fn rejects_invalid_partition() {
        assert!(EquivalenceGroups::new(vec![vec![0, 1], vec![1]]).is_err());
        assert!(EquivalenceGroups::new(vec![vec![0], vec![]]).is_err());
        assert!(EquivalenceGroups::new(vec![vec![2], vec![0]]).is_err());
    }
}
