//! Integer combinatorics behind the moment expansion.
//!
//! `E(S_n^r)` expands over partitions of `r` into parts of size at least two;
//! each partition contributes `multinomial(r; parts) / prod(d_k!) * (n)_m`,
//! where `d_k` are the multiplicities of the distinct parts and `m` is the
//! number of parts.

use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A partition of `r` into parts `>= 2`, stored nondecreasing.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    parts: Vec<u32>,
}

impl Partition {
    pub fn new(mut parts: Vec<u32>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::domain("a partition needs at least one part"));
        }
        if let Some(&bad) = parts.iter().find(|&&p| p < 2) {
            return Err(Error::domain(format!("part {bad} is smaller than 2")));
        }
        parts.sort_unstable();
        Ok(Partition { parts })
    }

    pub fn parts(&self) -> &[u32] {
        &self.parts
    }

    /// Sum of the parts.
    pub fn r(&self) -> u32 {
        self.parts.iter().sum()
    }

    /// Number of parts.
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Distinct parts in increasing order with their multiplicities.
    pub fn multiplicities(&self) -> Vec<(u32, u32)> {
        let mut out: Vec<(u32, u32)> = Vec::new();
        for &p in &self.parts {
            match out.last_mut() {
                Some((q, d)) if *q == p => *d += 1,
                _ => out.push((p, 1)),
            }
        }
        out
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.parts.iter().map(u32::to_string).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// All partitions of `r` into parts `>= 2`.
///
/// Ordered lexicographically on the parts read largest first, so `7` yields
/// `(2,2,3), (3,4), (2,5), (7)`.
pub fn partitions_min2(r: u32) -> Result<Vec<Partition>> {
    if r < 2 {
        return Err(Error::domain(format!(
            "partitions into parts >= 2 need r >= 2, got {r}"
        )));
    }
    let mut out = Vec::new();
    let mut current = Vec::new();
    grow(r, 2, &mut current, &mut out);
    out.sort_by(|a, b| a.iter().rev().cmp(b.iter().rev()));
    Ok(out.into_iter().map(|parts| Partition { parts }).collect())
}

fn grow(remaining: u32, min_part: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if remaining == 0 {
        out.push(current.clone());
        return;
    }
    for part in min_part..=remaining {
        // a leftover of exactly 1 can never be completed
        if remaining - part == 1 {
            continue;
        }
        current.push(part);
        grow(remaining - part, part, current, out);
        current.pop();
    }
}

pub fn factorial(n: u32) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, k| acc * k)
}

/// `r! / (parts[0]! * parts[1]! * ...)`.
pub fn multinomial(r: u32, parts: &[u32]) -> Result<BigUint> {
    let total: u64 = parts.iter().map(|&p| u64::from(p)).sum();
    if total != u64::from(r) {
        return Err(Error::domain(format!(
            "multinomial parts sum to {total}, expected {r}"
        )));
    }
    let den = parts
        .iter()
        .fold(BigUint::one(), |acc, &p| acc * factorial(p));
    Ok(factorial(r) / den)
}

/// `n (n-1) ... (n-m+1)`; 1 for `m = 0` and 0 when `m > n`.
pub fn falling_factorial(n: u64, m: u64) -> BigUint {
    if m > n {
        return BigUint::zero();
    }
    (0..m).fold(BigUint::one(), |acc, i| acc * (n - i))
}

/// `(2k-1)!! = 1 * 3 * ... * (2k-1)`, 1 for `k = 0`.
pub fn double_factorial_odd(k: u32) -> BigUint {
    (1..=k).fold(BigUint::one(), |acc, i| acc * (2 * i - 1))
}

pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    falling_factorial(n, k) / factorial(k as u32)
}

/// The `n`-free part of the expansion coefficient,
/// `multinomial(r; parts) / prod(d_k!)`.
///
/// This is also the coefficient of `n^m` in `expansion_coefficient(p, n)`.
pub fn partition_weight(p: &Partition) -> BigUint {
    let multi = multinomial(p.r(), &p.parts).expect("parts sum to r by construction");
    let den = p
        .multiplicities()
        .iter()
        .fold(BigUint::one(), |acc, &(_, d)| acc * factorial(d));
    let (q, rem) = multi.div_rem(&den);
    assert!(
        rem.is_zero(),
        "multinomial of {p} not divisible by the multiplicity factorials"
    );
    q
}

/// Number of terms `E(W_{i_1}^{j_1}) ... E(W_{i_m}^{j_m})` sharing the shape
/// `p` in the expansion of `E(S_n^r)`, weighted by their multinomial.
pub fn expansion_coefficient(p: &Partition, n: u64) -> BigUint {
    partition_weight(p) * falling_factorial(n, p.len() as u64)
}

/// All set partitions of `{0, .., m-1}`, blocks listed by first element.
pub fn set_partitions(m: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    let mut labels = vec![0usize; m];
    fill_labels(0, 0, &mut labels, &mut out);
    out
}

fn fill_labels(i: usize, blocks: usize, labels: &mut [usize], out: &mut Vec<Vec<Vec<usize>>>) {
    if i == labels.len() {
        let mut partition = vec![Vec::new(); blocks];
        for (elem, &b) in labels.iter().enumerate() {
            partition[b].push(elem);
        }
        out.push(partition);
        return;
    }
    for b in 0..=blocks {
        labels[i] = b;
        fill_labels(i + 1, blocks.max(b + 1), labels, out);
    }
}

/// Renders `weight * (n)_m` symbolically, e.g. `3n(n-1)`.
pub fn symbolic_coefficient(p: &Partition) -> String {
    let weight = partition_weight(p);
    let factors: String = (0..p.len())
        .map(|i| if i == 0 { "n".to_string() } else { format!("(n-{i})") })
        .collect();
    if weight.is_one() {
        factors
    } else {
        format!("{weight}{factors}")
    }
}
