use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Exponent vector of a multivariate basis function.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    /// Unit index `e_i` in dimension `n`.
    pub fn unit(n: usize, i: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 1;
        MultiIndex(e)
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.0 {
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        MultiIndex(v)
    }
}

/// Binomial coefficient `C(n, k)`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

/// Number of basis functions of total degree at most `k` in `n` variables.
pub fn dictionary_size(n: usize, k: u32) -> usize {
    binomial(n + k as usize, k as usize)
}

/// All exponents of total degree `<= k` in `n` variables, graded and, within a
/// degree, in descending lexicographic order: `(2,0), (1,1), (0,2)`.
pub fn index_set(n: usize, k: u32) -> Vec<MultiIndex> {
    assert!(n >= 1, "dimension must be positive");
    let mut out = Vec::with_capacity(dictionary_size(n, k));
    let mut prefix = Vec::with_capacity(n);
    for d in 0..=k {
        push_degree(n, d, &mut prefix, &mut out);
    }
    out
}

fn push_degree(n: usize, d: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if n == 1 {
        prefix.push(d);
        out.push(MultiIndex(prefix.clone()));
        prefix.pop();
        return;
    }
    for first in (0..=d).rev() {
        prefix.push(first);
        push_degree(n - 1, d - first, prefix, out);
        prefix.pop();
    }
}

/// An ordered index set with constant-time position lookup.
#[derive(Clone, Debug)]
pub struct IndexSet {
    n: usize,
    degree: u32,
    indices: Vec<MultiIndex>,
    lookup: HashMap<MultiIndex, usize>,
}

impl IndexSet {
    pub fn new(n: usize, degree: u32) -> Self {
        let indices = index_set(n, degree);
        let lookup = indices
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        IndexSet {
            n,
            degree,
            indices,
            lookup,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn get(&self, i: usize) -> &MultiIndex {
        &self.indices[i]
    }

    pub fn position(&self, alpha: &MultiIndex) -> Option<usize> {
        self.lookup.get(alpha).copied()
    }

    /// Position of `alpha` given as a raw exponent slice.
    pub fn position_of(&self, alpha: &[u32]) -> Option<usize> {
        self.lookup.get(&MultiIndex(alpha.to_vec())).copied()
    }

    /// Number of leading entries with degree `<= d`.
    pub fn prefix_len(&self, d: u32) -> usize {
        dictionary_size(self.n, d.min(self.degree))
    }

    pub fn iter(&self) -> std::slice::Iter<'_, MultiIndex> {
        self.indices.iter()
    }

    pub fn as_slice(&self) -> &[MultiIndex] {
        &self.indices
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex(v.to_vec())
    }

    #[test]
    fn one_dimensional_order() {
        assert_eq!(index_set(1, 2), vec![mi(&[0]), mi(&[1]), mi(&[2])]);
    }

    #[test]
    fn two_dimensional_graded_lex() {
        assert_eq!(
            index_set(2, 2),
            vec![
                mi(&[0, 0]),
                mi(&[1, 0]),
                mi(&[0, 1]),
                mi(&[2, 0]),
                mi(&[1, 1]),
                mi(&[0, 2])
            ]
        );
    }

    #[test]
    fn sizes_match_binomial() {
        assert_eq!(index_set(3, 14).len(), 680);
        for n in 1..=4 {
            for k in 0..=20 {
                assert_eq!(index_set(n, k).len(), binomial(n + k as usize, k as usize));
            }
        }
    }

    #[test]
    fn lower_degree_sets_are_prefixes() {
        let big = index_set(3, 6);
        for k in 0..6 {
            let small = index_set(3, k);
            assert_eq!(&big[..small.len()], &small[..]);
        }
    }

    #[test]
    fn lookup_round_trips() {
        let set = IndexSet::new(3, 5);
        for (i, a) in set.iter().enumerate() {
            assert_eq!(set.position(a), Some(i));
        }
        assert_eq!(set.position(&mi(&[6, 0, 0])), None);
        assert_eq!(set.prefix_len(2), 10);
    }
}
