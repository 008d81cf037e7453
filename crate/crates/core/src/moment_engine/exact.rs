//! Exact rational evaluation of the ladders and shortcuts.
//!
//! Only meaningful when the `p_n` themselves are rational: Fock states and
//! user-supplied rational distributions. Coherent and thermal pmfs are
//! transcendental, so their float truncations are not covered here.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::{reorder_coefficients, Ordering};
use crate::error::{Error, Result};
use crate::fock_states::NumberDistribution;

#[derive(Debug, Clone, PartialEq)]
pub struct RationalDistribution {
    probs: Vec<BigRational>,
}

impl RationalDistribution {
    pub fn new(probs: Vec<BigRational>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| p.is_negative()) {
            return Err(Error::InvalidArgument(
                "rational distribution must be nonempty with nonnegative entries".into(),
            ));
        }
        if probs.iter().all(Zero::is_zero) {
            return Err(Error::InvalidArgument("distribution has zero mass".into()));
        }
        Ok(Self { probs })
    }

    /// From `(numerator, denominator)` pairs.
    pub fn from_ratios(ratios: &[(i64, i64)]) -> Result<Self> {
        let probs = ratios
            .iter()
            .map(|&(num, den)| {
                if den == 0 {
                    Err(Error::InvalidArgument("zero denominator".into()))
                } else {
                    Ok(BigRational::new(num.into(), den.into()))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(probs)
    }

    pub fn fock(n: usize) -> Self {
        let mut probs = vec![BigRational::zero(); n + 1];
        probs[n] = BigRational::one();
        Self { probs }
    }

    pub fn probs(&self) -> &[BigRational] {
        &self.probs
    }

    pub fn to_float(&self) -> NumberDistribution {
        let probs = self
            .probs
            .iter()
            .map(|p| p.to_f64().unwrap_or(f64::NAN))
            .collect();
        NumberDistribution::new(probs, 0.0).expect("entries are nonnegative rationals")
    }
}

/// Exact `N_0..=N_{k_max}`, divided by the total mass.
pub fn ladder(dist: &RationalDistribution, k_max: usize, ordering: Ordering) -> Vec<BigRational> {
    let mut sums = vec![BigRational::zero(); k_max + 1];
    for (n, p) in dist.probs.iter().enumerate() {
        if p.is_zero() {
            continue;
        }
        let mut weight = BigInt::one();
        for (k, acc) in sums.iter_mut().enumerate() {
            if ordering == Ordering::Normal && k > n {
                break;
            }
            *acc += p * BigRational::from_integer(weight.clone());
            weight *= match ordering {
                Ordering::Normal => n - k,
                Ordering::AntiNormal => n + k + 1,
            };
        }
    }
    let mass = sums[0].clone();
    sums.into_iter().map(|s| s / &mass).collect()
}

pub fn normal_ladder(dist: &RationalDistribution, k_max: usize) -> Vec<BigRational> {
    ladder(dist, k_max, Ordering::Normal)
}

pub fn antinormal_ladder(dist: &RationalDistribution, k_max: usize) -> Vec<BigRational> {
    ladder(dist, k_max, Ordering::AntiNormal)
}

/// `N_{n+x} / N_n` on an exact normal ladder.
pub fn subtracted_factorial_moment(ladder: &[BigRational], n: usize, x: usize) -> Result<BigRational> {
    check_len(ladder, n + x)?;
    if ladder[n].is_zero() {
        return Err(Error::UndefinedState { index: n });
    }
    Ok(&ladder[n + x] / &ladder[n])
}

/// The reordering sum on an exact anti-normal ladder.
pub fn added_factorial_moment(ladder: &[BigRational], m: usize, x: usize) -> Result<BigRational> {
    check_len(ladder, m + x)?;
    if ladder[m].is_zero() {
        return Err(Error::UndefinedState { index: m });
    }
    let sum = reorder_coefficients(x)
        .into_iter()
        .enumerate()
        .fold(BigRational::zero(), |acc, (k, c)| {
            acc + BigRational::from_integer(c) * &ladder[m + x - k]
        });
    Ok(sum / &ladder[m])
}

fn check_len(ladder: &[BigRational], needed: usize) -> Result<()> {
    if ladder.len() > needed {
        Ok(())
    } else {
        Err(Error::LadderTooShort {
            needed,
            available: ladder.len().saturating_sub(1),
        })
    }
}
