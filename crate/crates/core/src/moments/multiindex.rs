use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

/// A vector `k` in `N_0^n` naming the mixed moment `E[prod_l U_l^{k_l}]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        MultiIndex(entries)
    }

    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    pub fn unit(n: usize, l: usize) -> Self {
        let mut v = vec![0; n];
        v[l] = 1;
        MultiIndex(v)
    }

    /// Parses `"1,0,2"`.
    pub fn parse(src: &str) -> Result<Self> {
        src.split(',')
            .map(|p| {
                p.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::invalid(format!("bad multi-index entry `{p}` in `{src}`")))
            })
            .collect::<Result<Vec<_>>>()
            .map(MultiIndex)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, u32> {
        self.0.iter()
    }

    /// `k-bar`, the total order.
    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `|k| = prod (k_l + 1) - 1`, the size of `S(k)`.
    pub fn card(&self) -> usize {
        self.0.iter().map(|&k| k as usize + 1).product::<usize>() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&k| k == 0)
    }

    /// `Some(l)` when this is the unit vector `e_l`.
    pub fn unit_index(&self) -> Option<usize> {
        let mut found = None;
        for (l, &k) in self.0.iter().enumerate() {
            match k {
                0 => {}
                1 if found.is_none() => found = Some(l),
                _ => return None,
            }
        }
        found
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// `self - other` when `other <= self`.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<Vec<_>>>()
            .map(MultiIndex)
    }

    /// `prod_l binom(k_l, y_l)`.
    pub fn binomial(&self, y: &MultiIndex) -> u64 {
        self.0
            .iter()
            .zip(&y.0)
            .map(|(&k, &j)| binomial(k, j))
            .product()
    }

    /// Lexicographic comparison: decided by the first differing entry.
    pub fn lex_cmp(&self, other: &MultiIndex) -> Ordering {
        self.0.cmp(&other.0)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}")?;
        }
        f.write_str(")")
    }
}

impl std::ops::Index<usize> for MultiIndex {
    type Output = u32;

    fn index(&self, i: usize) -> &u32 {
        &self.0[i]
    }
}

/// Exact binomial coefficient.
pub fn binomial(n: u32, k: u32) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k) as u64;
    let n = n as u64;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    u64::try_from(acc).expect("binomial coefficient overflows u64")
}

/// `S(k)` in lexicographic order, i.e. odometer order with the last entry
/// varying fastest. Empty for `k = 0`.
pub fn lex_enumerate(k: &MultiIndex) -> Vec<MultiIndex> {
    let n = k.len();
    let mut out = Vec::with_capacity(k.card());
    let mut cur = vec![0u32; n];
    loop {
        // Increment the odometer.
        let mut pos = n;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            if cur[pos] < k[pos] {
                cur[pos] += 1;
                break;
            }
            cur[pos] = 0;
        }
        out.push(MultiIndex(cur.clone()));
    }
}

/// `S~(k) = {0} u S(k)`, with zero first.
pub fn lex_enumerate_with_zero(k: &MultiIndex) -> Vec<MultiIndex> {
    let mut out = vec![MultiIndex::zero(k.len())];
    out.extend(lex_enumerate(k));
    out
}

/// Checks the closure property that the block recursion relies on: for every
/// `i` and every `m < i` with `y^i >= y^m`, every element of `S(y^i - y^m)`
/// equals `y^i - y^j` for some `m <= j < i` (with `y^0 = 0`).
pub fn check_lex_closure(k: &MultiIndex) -> bool {
    let ys = lex_enumerate_with_zero(k);
    for i in 1..ys.len() {
        for m in 0..i {
            let Some(diff) = ys[i].checked_sub(&ys[m]) else {
                continue;
            };
            let reachable: Vec<MultiIndex> =
                (m..i).filter_map(|j| ys[i].checked_sub(&ys[j])).collect();
            if !lex_enumerate(&diff).iter().all(|xi| reachable.contains(xi)) {
                return false;
            }
        }
    }
    true
}
