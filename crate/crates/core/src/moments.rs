//! Exact moments of standardized sums via the partition expansion, the
//! weighted generalization for linear forms, and the large-`n` limit
//! constants of the standardized moments.

use std::ops::{Add, Mul, Sub};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::combinat::{
    double_factorial_odd, expansion_coefficient, factorial, partition_weight, partitions_min2,
    set_partitions, Partition,
};
use crate::error::{Error, Result};
use crate::exact::{compensated_sum, from_biguint, half_power, int, rational, ExactRational, Radical};
use crate::profile::MomentProfile;

/// `sum_j c_j(r) prod_i mu_{j_i}`: the r-th moment of an unstandardized sum
/// of `n` iid centered variables.
pub fn raw_sum_moment(r: u32, n: u64, profile: &MomentProfile) -> Result<ExactRational> {
    profile.require(r as usize)?;
    match r {
        0 => return Ok(ExactRational::one()),
        1 => return Ok(<ExactRational as Zero>::zero()),
        _ => {}
    }
    let mut total = <ExactRational as Zero>::zero();
    for p in partitions_min2(r)? {
        let coeff = expansion_coefficient(&p, n);
        if coeff.is_zero() {
            continue;
        }
        let term = product_of_central(&p, profile)?;
        total += from_biguint(&coeff) * term;
    }
    Ok(total)
}

fn product_of_central(p: &Partition, profile: &MomentProfile) -> Result<ExactRational> {
    p.parts().iter().try_fold(ExactRational::one(), |acc, &j| {
        Ok(acc * profile.central(j as usize)?)
    })
}

/// `E(S_n^r)` with `S_n` the sum of `n` standardized iid copies.
pub fn moment_s(r: u32, n: u64, profile: &MomentProfile) -> Result<Radical> {
    check_n(n)?;
    let raw = raw_sum_moment(r, n, profile)?;
    Ok(half_power(profile.sigma2(), -(r as i64)).mul_rational(&raw))
}

/// `E(Z_n^r) = n^{-r/2} E(S_n^r)`, exact. Odd orders carry a square root of
/// `n sigma^2`.
pub fn moment_z(r: u32, n: u64, profile: &MomentProfile) -> Result<Radical> {
    check_n(n)?;
    let raw = raw_sum_moment(r, n, profile)?;
    let scale = int(n) * profile.sigma2();
    Ok(half_power(&scale, -(r as i64)).mul_rational(&raw))
}

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("sample size n must be at least 1"));
    }
    Ok(())
}

/// Largest number of compositions the brute-force oracle will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

/// `E(S_n^r)` by summing over every multi-index `(j_1..j_n)` with sum `r`.
///
/// Independent of the partition expansion; used as its oracle.
pub fn brute_force_moment_s(r: u32, n: u64, profile: &MomentProfile) -> Result<Radical> {
    check_n(n)?;
    profile.require(r as usize)?;
    let size = composition_count(r as u64, n);
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::GuardExceeded {
            what: "compositions of r into n parts",
            size,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mu: Vec<ExactRational> = (0..=r as usize)
        .map(|v| profile.central(v).cloned())
        .collect::<Result<_>>()?;
    let fact: Vec<BigUint> = (0..=r).map(factorial).collect();
    let mut total = <ExactRational as Zero>::zero();
    let mut parts = vec![0u32; n as usize];
    enumerate_compositions(r, 0, &mut parts, &mut |js| {
        let mut prod = ExactRational::one();
        let mut den = BigUint::one();
        for &j in js {
            if j == 1 {
                return;
            }
            prod *= &mu[j as usize];
            den *= &fact[j as usize];
        }
        total += from_biguint(&(&fact[r as usize] / den)) * prod;
    });
    Ok(half_power(profile.sigma2(), -(r as i64)).mul_rational(&total))
}

fn composition_count(r: u64, n: u64) -> u128 {
    // C(n + r - 1, r), saturating
    let mut c: u128 = 1;
    for i in 0..r.min(n.saturating_sub(1)) {
        let top = (n + r - 1 - i) as u128;
        c = c.saturating_mul(top) / (i as u128 + 1);
        if c > BRUTE_FORCE_LIMIT * 1000 {
            return c;
        }
    }
    c
}

fn enumerate_compositions(remaining: u32, pos: usize, parts: &mut [u32], visit: &mut impl FnMut(&[u32])) {
    if pos + 1 == parts.len() {
        parts[pos] = remaining;
        visit(parts);
        return;
    }
    for j in 0..=remaining {
        parts[pos] = j;
        enumerate_compositions(remaining - j, pos + 1, parts, visit);
    }
}

/// `(r-1)!!` for even `r`, 0 for odd `r`: the moments of a standard normal.
pub fn gaussian_moment(r: u32) -> BigUint {
    if r % 2 == 1 {
        BigUint::zero()
    } else {
        double_factorial_odd(r / 2)
    }
}

/// Field operations needed by the weighted expansion; implemented for exact
/// rationals and for `f64`.
pub trait Scalar: Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> {
    fn zero() -> Self;
    fn from_biguint(v: &BigUint) -> Self;
    fn from_i64(v: i64) -> Self;
    fn pow(&self, e: u32) -> Self;
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_biguint(v: &BigUint) -> Self {
        v.to_f64().unwrap_or(f64::INFINITY)
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn pow(&self, e: u32) -> Self {
        self.powi(e as i32)
    }
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        compensated_sum(iter)
    }
}

impl Scalar for ExactRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn from_biguint(v: &BigUint) -> Self {
        from_biguint(v)
    }
    fn from_i64(v: i64) -> Self {
        int(v)
    }
    fn pow(&self, e: u32) -> Self {
        num_traits::pow(self.clone(), e as usize)
    }
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Zero::zero(), |a, b| a + b)
    }
}

/// `E(sum_i b_i eps_i)^r` for iid centered `eps` with central moments
/// `central[v]` (`central[0] = 1`, `central[1] = 0`).
///
/// Each partition `j` of `r` contributes
/// `multinomial / prod(d_k!) * prod(mu_{j_i}) * M_j(b)`, where `M_j(b)` sums
/// `prod_l b_{i_l}^{j_l}` over tuples of distinct indices. `M_j` is recovered
/// from power sums by Moebius inversion over set partitions of the parts.
pub fn weighted_moment_with<T: Scalar>(r: u32, weights: &[T], central: &[T]) -> Result<T> {
    if weights.is_empty() {
        return Err(Error::domain("weighted moment needs at least one weight"));
    }
    if central.len() <= r as usize {
        return Err(Error::InsufficientMoments {
            requested: r as usize,
            available: central.len().saturating_sub(1),
        });
    }
    match r {
        0 => return Ok(T::from_i64(1)),
        1 => return Ok(T::zero()),
        _ => {}
    }
    let power_sums: Vec<T> = (0..=r)
        .map(|q| T::sum(weights.iter().map(|b| b.pow(q))))
        .collect();
    let mut terms = Vec::new();
    for p in partitions_min2(r)? {
        if p.len() > weights.len() {
            continue;
        }
        let mu = p
            .parts()
            .iter()
            .fold(T::from_i64(1), |acc, &j| acc * central[j as usize].clone());
        let distinct = distinct_index_sum(p.parts(), &power_sums);
        terms.push(T::from_biguint(&partition_weight(&p)) * mu * distinct);
    }
    Ok(T::sum(terms.into_iter()))
}

/// `sum over distinct (i_1..i_m) of prod_l b_{i_l}^{parts[l]}`, from power
/// sums. The Moebius function of the set-partition lattice gives the sign
/// and weight `prod_B (-1)^{|B|-1} (|B|-1)!`.
fn distinct_index_sum<T: Scalar>(parts: &[u32], power_sums: &[T]) -> T {
    let terms = set_partitions(parts.len()).into_iter().map(|blocks| {
        let mut coeff: i64 = 1;
        let mut prod = T::from_i64(1);
        for block in &blocks {
            let size = block.len() as i64;
            let sign = if size % 2 == 0 { -1 } else { 1 };
            coeff *= sign * (1..size).product::<i64>();
            let q: u32 = block.iter().map(|&l| parts[l]).sum();
            prod = prod * power_sums[q as usize].clone();
        }
        T::from_i64(coeff) * prod
    });
    T::sum(terms)
}

/// Exact weighted moment over the profile's central moments.
pub fn weighted_moment_exact(r: u32, weights: &[ExactRational], profile: &MomentProfile) -> Result<ExactRational> {
    profile.require(r as usize)?;
    let central: Vec<ExactRational> = (0..=r as usize)
        .map(|v| profile.central(v).cloned())
        .collect::<Result<_>>()?;
    weighted_moment_with(r, weights, &central)
}

/// Floating point weighted moment with compensated power sums.
pub fn weighted_moment_f64(r: u32, weights: &[f64], central: &[f64]) -> Result<f64> {
    weighted_moment_with(r, weights, central)
}

/// Coefficient of `n^{k-1}` in `(n)_k`, i.e. `-k(k-1)/2`.
fn falling_factorial_subleading(k: u32) -> ExactRational {
    -int((0..k as i64).sum::<i64>())
}

/// `lim n (E(Z_n^{2k}) - (2k-1)!!)`, assembled from the order-`n^{k-1}` terms
/// of the expansion: the subleading term of `(2k-1)!! (n)_k` plus the
/// partitions `(2,..,2,4)` and `(2,..,2,3,3)`.
pub fn limit_even(k: u32, profile: &MomentProfile) -> Result<ExactRational> {
    if k == 0 {
        return Err(Error::domain("limit_even needs k >= 1"));
    }
    profile.require(4)?;
    let df = from_biguint(&double_factorial_odd(k));
    let mut limit = df * falling_factorial_subleading(k);
    if k >= 2 {
        let mut parts = vec![2; k as usize - 2];
        parts.push(4);
        let c1 = from_biguint(&partition_weight(&Partition::new(parts)?));
        limit += c1 * profile.kurtosis()?;
    }
    if k >= 3 {
        let mut parts = vec![2; k as usize - 3];
        parts.extend([3, 3]);
        let c2 = from_biguint(&partition_weight(&Partition::new(parts)?));
        limit += c2 * profile.skewness_squared()?;
    }
    Ok(limit)
}

/// Alternative closed form
/// `k(k-1)(2k-1)!! (kappa/3 + (k-2) gamma^2 / 9 - 1/2)`, reported next to
/// [`limit_even`] for comparison.
pub fn limit_even_printed(k: u32, profile: &MomentProfile) -> Result<ExactRational> {
    if k == 0 {
        return Err(Error::domain("limit_even needs k >= 1"));
    }
    let kk = int(k as i64);
    let df = from_biguint(&double_factorial_odd(k));
    let bracket = profile.kurtosis()? / int(3)
        + (kk.clone() - int(2)) * profile.skewness_squared()? / int(9)
        - rational(1, 2);
    Ok(kk.clone() * (kk - int(1)) * df * bracket)
}

/// `lim sqrt(n) E(Z_n^{2k+1}) = k(2k+1)(2k-1)!! gamma / 3`.
pub fn limit_odd(k: u32, profile: &MomentProfile) -> Result<Radical> {
    if k == 0 {
        return Err(Error::domain("limit_odd needs k >= 1"));
    }
    let coeff = odd_leading_weight(k);
    Ok(profile.skewness()?.mul_rational(&coeff))
}

/// `k(2k+1)(2k-1)!!/3`.
fn odd_leading_weight(k: u32) -> ExactRational {
    let kk = int(k as i64);
    kk.clone() * (int(2) * kk + int(1)) * from_biguint(&double_factorial_odd(k)) / int(3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{self, exp1, normal};

    fn rat(r: &Radical) -> ExactRational {
        r.to_rational().expect("rational value")
    }

    #[test]
    fn moment_s_examples() {
        assert_eq!(rat(&moment_s(2, 5, &exp1()).unwrap()), int(5));
        assert_eq!(rat(&moment_s(4, 3, &exp1()).unwrap()), int(45));
        assert_eq!(rat(&moment_s(5, 2, &exp1()).unwrap()), int(128));
        assert_eq!(rat(&moment_s(0, 4, &exp1()).unwrap()), int(1));
        assert_eq!(rat(&moment_s(1, 4, &exp1()).unwrap()), int(0));
    }

    #[test]
    fn moment_z_examples() {
        for n in [1, 2, 17, 1000] {
            assert_eq!(moment_z(2, n, &profile::uniform()).unwrap(), int(1));
        }
        assert_eq!(rat(&moment_z(4, 10, &exp1()).unwrap()), rational(18, 5));
        assert_eq!(moment_z(3, 4, &exp1()).unwrap(), int(1));
        // odd order at non-square n stays exact: 2 / sqrt(2)
        assert_eq!(moment_z(3, 2, &exp1()).unwrap(), Radical::new(int(1), int(2)));
    }

    #[test]
    fn insufficient_moments_are_reported() {
        let err = moment_s(9, 3, &profile::rademacher()).unwrap_err();
        assert!(matches!(err, Error::InsufficientMoments { .. }));
    }

    #[test]
    fn brute_force_examples_and_guard() {
        assert_eq!(rat(&brute_force_moment_s(2, 3, &exp1()).unwrap()), int(3));
        assert_eq!(rat(&brute_force_moment_s(4, 3, &exp1()).unwrap()), int(45));
        assert_eq!(
            brute_force_moment_s(6, 2, &normal()).unwrap(),
            moment_s(6, 2, &normal()).unwrap()
        );
        let err = brute_force_moment_s(8, 1000, &exp1()).unwrap_err();
        assert!(matches!(err, Error::GuardExceeded { .. }));
    }

    #[test]
    fn expansion_matches_brute_force() {
        let profiles = [normal(), exp1(), profile::uniform(), profile::named("bern(0.3)").unwrap()];
        for p in &profiles {
            for r in 0..=6 {
                for n in 1..=8 {
                    assert_eq!(
                        moment_s(r, n, p).unwrap(),
                        brute_force_moment_s(r, n, p).unwrap(),
                        "{} r={r} n={n}",
                        p.name()
                    );
                }
            }
        }
    }

    #[test]
    fn gaussian_moments() {
        assert_eq!(gaussian_moment(0), BigUint::one());
        assert_eq!(gaussian_moment(2), BigUint::one());
        assert_eq!(gaussian_moment(5), BigUint::zero());
        assert_eq!(gaussian_moment(6), BigUint::from(15u32));
    }

    #[test]
    fn weighted_examples() {
        let ones = vec![int(1); 6];
        assert_eq!(weighted_moment_exact(2, &ones, &exp1()).unwrap(), int(6));
        let b = [int(1), int(2)];
        assert_eq!(weighted_moment_exact(2, &b, &exp1()).unwrap(), int(5));
        assert_eq!(weighted_moment_exact(3, &b, &exp1()).unwrap(), int(18));
    }

    #[test]
    fn weighted_ones_reduce_to_moment_s() {
        for r in 0..=8 {
            for n in [1usize, 2, 5, 13, 100] {
                let ones = vec![int(1); n];
                let w = weighted_moment_exact(r, &ones, &exp1()).unwrap();
                assert_eq!(moment_s(r, n as u64, &exp1()).unwrap(), w, "r={r} n={n}");
            }
        }
    }

    /// Direct expectation of (sum b_i eps_i)^r by enumerating compositions.
    fn weighted_brute(r: u32, b: &[ExactRational], p: &MomentProfile) -> ExactRational {
        let mut total = <ExactRational as Zero>::zero();
        let mut parts = vec![0u32; b.len()];
        enumerate_compositions(r, 0, &mut parts, &mut |js| {
            let mut term = from_biguint(&crate::combinat::multinomial(r, js).unwrap());
            for (j, bi) in js.iter().zip(b) {
                term *= num_traits::pow(bi.clone(), *j as usize) * p.central(*j as usize).unwrap();
            }
            total += term;
        });
        total
    }

    #[test]
    fn weighted_matches_enumeration() {
        let b = [rational(1, 2), int(-3), rational(2, 7), int(1)];
        for p in [exp1(), profile::named("bern(1/3)").unwrap()] {
            for r in 0..=8 {
                assert_eq!(
                    weighted_moment_exact(r, &b, &p).unwrap(),
                    weighted_brute(r, &b, &p),
                    "r={r}"
                );
            }
        }
    }

    #[test]
    fn weighted_f64_agrees_with_exact() {
        let b = [0.5, -3.0, 0.25, 1.0];
        let exact_b: Vec<ExactRational> = [rational(1, 2), int(-3), rational(1, 4), int(1)].to_vec();
        let central = exp1().central_f64();
        for r in 2..=8 {
            let f = weighted_moment_f64(r, &b, &central).unwrap();
            let e = crate::exact::to_f64(&weighted_moment_exact(r, &exact_b, &exp1()).unwrap());
            assert!((f - e).abs() <= 1e-12 * e.abs().max(1.0), "r={r}: {f} vs {e}");
        }
    }

    #[test]
    fn limit_even_examples() {
        let e = exp1();
        for k in 1..=4 {
            assert_eq!(limit_even(k, &normal()).unwrap(), int(0));
        }
        assert_eq!(limit_even(1, &e).unwrap(), int(0));
        assert_eq!(limit_even(2, &e).unwrap(), e.kurtosis().unwrap() - int(3));
        let want3 = int(15) * (e.kurtosis().unwrap() - int(3)) + int(10) * e.skewness_squared().unwrap();
        assert_eq!(limit_even(3, &e).unwrap(), want3);
        assert_eq!(want3, int(130));
        // printed form: 2 kappa - 3 at k = 2
        assert_eq!(limit_even_printed(2, &e).unwrap(), int(15));
        assert_ne!(limit_even_printed(2, &normal()).unwrap(), int(0));
    }

    #[test]
    fn limit_even_matches_subleading_coefficient() {
        // n^{k-1} coefficient of E(S_n^{2k}) from two large-n evaluations of
        // the exact polynomial: leading coefficient is (2k-1)!!.
        let b = profile::named("bern(0.3)").unwrap();
        for k in 2..=4u32 {
            let n1 = 1_000_000u64;
            let raw = raw_sum_moment(2 * k, n1, &b).unwrap() / crate::exact::pow_int(b.sigma2(), k as i64);
            let lead = from_biguint(&double_factorial_odd(k)) * crate::exact::pow_int(&int(n1), k as i64);
            let approx = (raw - lead) / crate::exact::pow_int(&int(n1), k as i64 - 1);
            let lim = limit_even(k, &b).unwrap();
            let diff = crate::exact::to_f64(&(approx - &lim)).abs();
            assert!(diff < 1e-3 * crate::exact::to_f64(&lim).abs().max(1.0), "k={k}");
        }
    }

    #[test]
    fn limit_odd_examples() {
        let e = exp1();
        assert_eq!(limit_odd(1, &e).unwrap(), int(2));
        assert_eq!(limit_odd(2, &e).unwrap(), int(20));
        for k in 1..=3 {
            assert!(limit_odd(k, &profile::uniform()).unwrap().is_zero());
        }
        // weight of (2,..,2,3) equals k(2k+1)(2k-1)!!/3
        for k in 1..=6u32 {
            let mut parts = vec![2; k as usize - 1];
            parts.push(3);
            let w = from_biguint(&partition_weight(&Partition::new(parts).unwrap()));
            assert_eq!(w, odd_leading_weight(k));
        }
    }
}
