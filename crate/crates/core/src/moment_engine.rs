//! Normalization-constant ladders and the factorial moments they determine.
//!
//! For `|psi_n> ∝ a^n |psi>` the normal-ordered ladder `N_k = <a†^k a^k>`
//! gives `<a†^x a^x> = N_{n+x} / N_n` directly. For `|psi_m> ∝ a†^m |psi>`
//! the anti-normal ladder `N_k = <a^k a†^k>` gives the factorial moment
//! through the reordering
//!
//! ```text
//! a†^x a^x = sum_{k=0}^{x} (-1)^k k! C(x,k)^2 a^{x-k} a†^{x-k}
//! ```
//!
//! so `<a†^x a^x> = (1/N_m) sum_k (-1)^k k! C(x,k)^2 N_{m+x-k}`.

use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock_states::NumberDistribution;
use crate::numeric::{two_prod, NeumaierSum};

pub mod exact;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    /// `<a†^k a^k>`
    Normal,
    /// `<a^k a†^k>`
    AntiNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModificationKind {
    Subtract,
    Add,
}

/// Subtract or add `count` photons. `count == 0` leaves the base state alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateModification {
    pub kind: ModificationKind,
    pub count: usize,
}

impl StateModification {
    pub const IDENTITY: Self = Self {
        kind: ModificationKind::Subtract,
        count: 0,
    };

    pub fn subtract(count: usize) -> Self {
        Self {
            kind: ModificationKind::Subtract,
            count,
        }
    }

    pub fn add(count: usize) -> Self {
        Self {
            kind: ModificationKind::Add,
            count,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.count == 0
    }

    /// Ladder ordering that carries this modification's moments.
    pub fn ordering(&self) -> Ordering {
        match self.kind {
            ModificationKind::Subtract => Ordering::Normal,
            ModificationKind::Add => Ordering::AntiNormal,
        }
    }
}

impl Default for StateModification {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl fmt::Display for StateModification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.count, self.kind) {
            (0, _) => f.write_str("none"),
            (c, ModificationKind::Subtract) => write!(f, "subtract({c})"),
            (c, ModificationKind::Add) => write!(f, "add({c})"),
        }
    }
}

/// `N_0..=N_K` of one ordering, tied to the distribution it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentLadder {
    values: Vec<f64>,
    ordering: Ordering,
    base: NumberDistribution,
}

impl MomentLadder {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn ordering(&self) -> Ordering {
        self.ordering
    }

    pub fn base(&self) -> &NumberDistribution {
        &self.base
    }

    /// Highest index covered.
    pub fn max_index(&self) -> usize {
        self.values.len() - 1
    }

    pub fn get(&self, k: usize) -> Result<f64> {
        self.values.get(k).copied().ok_or(Error::LadderTooShort {
            needed: k,
            available: self.max_index(),
        })
    }

    fn expect_ordering(&self, expected: Ordering) -> Result<()> {
        if self.ordering == expected {
            Ok(())
        } else {
            Err(Error::WrongOrdering {
                expected,
                found: self.ordering,
            })
        }
    }
}

/// `N_k = sum_n p_n n!/(n-k)!` for `k = 0..=k_max`.
pub fn normal_ladder(dist: &NumberDistribution, k_max: usize) -> Result<MomentLadder> {
    build_ladder(dist, k_max, Ordering::Normal)
}

/// `N_k = sum_n p_n (n+k)!/n!` for `k = 0..=k_max`.
pub fn antinormal_ladder(dist: &NumberDistribution, k_max: usize) -> Result<MomentLadder> {
    build_ladder(dist, k_max, Ordering::AntiNormal)
}

fn build_ladder(dist: &NumberDistribution, k_max: usize, ordering: Ordering) -> Result<MomentLadder> {
    let mut sums = vec![NeumaierSum::new(); k_max + 1];
    for (n, &p) in dist.probs().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let mut weight = 1.0;
        for (k, acc) in sums.iter_mut().enumerate() {
            acc.add(p * weight);
            weight *= match ordering {
                Ordering::Normal if n <= k => break,
                Ordering::Normal => (n - k) as f64,
                Ordering::AntiNormal => (n + k + 1) as f64,
            };
        }
    }
    // dividing by N_0 makes values[0] exactly 1 and absorbs truncation mass loss
    let mass = sums[0].value();
    let mut values = Vec::with_capacity(k_max + 1);
    for (k, acc) in sums.iter().enumerate() {
        let v = acc.value() / mass;
        if !v.is_finite() {
            return Err(Error::Overflow { order: k });
        }
        values.push(v);
    }
    Ok(MomentLadder {
        values,
        ordering,
        base: dist.clone(),
    })
}

/// `<a†^x a^x>` on the `n`-photon-subtracted state: `N_{n+x} / N_n`.
pub fn subtracted_factorial_moment(ladder: &MomentLadder, n: usize, x: usize) -> Result<f64> {
    ladder.expect_ordering(Ordering::Normal)?;
    let norm = ladder.get(n)?;
    let shifted = ladder.get(n + x)?;
    if norm == 0.0 {
        return Err(Error::UndefinedState { index: n });
    }
    Ok(shifted / norm)
}

/// `(-1)^k k! C(x,k)^2` for `k = 0..=x`.
pub fn reorder_coefficients(x: usize) -> Vec<BigInt> {
    let mut coeffs = Vec::with_capacity(x + 1);
    let mut binom = BigInt::one();
    let mut fact = BigInt::one();
    for k in 0..=x {
        if k > 0 {
            binom = binom * (x - k + 1) / k;
            fact *= k;
        }
        let magnitude = &fact * &binom * &binom;
        coeffs.push(if k % 2 == 0 { magnitude } else { -magnitude });
    }
    coeffs
}

/// Moment of a photon-added state together with the cancellation diagnostics
/// of its alternating sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AddedMoment {
    pub value: f64,
    /// Largest `|k! C(x,k)^2 N_{m+x-k}| / N_m` in the sum.
    pub largest_term: f64,
    /// The sum lost more than eight digits to cancellation.
    pub cancellation: bool,
}

/// Sums below this fraction of the largest term are flagged.
pub const CANCELLATION_RATIO: f64 = 1e-8;

/// `<a†^x a^x>` on the `m`-photon-added state, with diagnostics.
pub fn added_factorial_moment_detailed(ladder: &MomentLadder, m: usize, x: usize) -> Result<AddedMoment> {
    ladder.expect_ordering(Ordering::AntiNormal)?;
    let norm = ladder.get(m)?;
    ladder.get(m + x)?;
    if norm <= 0.0 {
        return Err(Error::UndefinedState { index: m });
    }

    let mut acc = NeumaierSum::new();
    let mut largest: f64 = 0.0;
    let mut exact = true;
    for (k, coeff) in reorder_coefficients(x).iter().enumerate() {
        let c = coeff.to_f64().unwrap_or(f64::INFINITY);
        let n_k = ladder.values[m + x - k];
        let (p, e) = two_prod(c, n_k);
        if !p.is_finite() {
            return Err(Error::Overflow { order: x });
        }
        acc.add(p);
        acc.add(e);
        largest = largest.max(p.abs());
        exact &= e == 0.0 && p.fract() == 0.0 && p.abs() < 2f64.powi(53);
    }
    let sum = acc.value();
    let threshold = CANCELLATION_RATIO * largest;
    // integer-valued terms below 2^53 sum exactly; nothing was lost
    let cancellation = !exact && sum.abs() < threshold;
    let value = if sum < 0.0 {
        if -sum > threshold {
            return Err(Error::Cancellation {
                order: x,
                value: sum / norm,
                largest_term: largest / norm,
            });
        }
        0.0
    } else {
        sum / norm
    };
    Ok(AddedMoment {
        value,
        largest_term: largest / norm,
        cancellation,
    })
}

/// `<a†^x a^x>` on the `m`-photon-added state.
pub fn added_factorial_moment(ladder: &MomentLadder, m: usize, x: usize) -> Result<f64> {
    added_factorial_moment_detailed(ladder, m, x).map(|r| r.value)
}

/// Factorial moments `m_0..=m_{x_max}` of a modified state plus the orders
/// whose anti-normal sums were flagged for cancellation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedMoments {
    pub values: Vec<f64>,
    pub cancellation_orders: Vec<usize>,
}

/// All factorial moments up to `x_max` from a single ladder of length
/// `count + x_max`.
pub fn modified_moments(
    dist: &NumberDistribution,
    modification: StateModification,
    x_max: usize,
) -> Result<ModifiedMoments> {
    let count = modification.count;
    let mut values = Vec::with_capacity(x_max + 1);
    let mut cancellation_orders = Vec::new();
    match modification.ordering() {
        Ordering::Normal => {
            let ladder = normal_ladder(dist, count + x_max)?;
            for x in 0..=x_max {
                values.push(subtracted_factorial_moment(&ladder, count, x)?);
            }
        }
        Ordering::AntiNormal => {
            let ladder = antinormal_ladder(dist, count + x_max)?;
            for x in 0..=x_max {
                let r = added_factorial_moment_detailed(&ladder, count, x)?;
                if r.cancellation {
                    cancellation_orders.push(x);
                }
                values.push(r.value);
            }
        }
    }
    Ok(ModifiedMoments {
        values,
        cancellation_orders,
    })
}

/// `<a†^x a^x>` on the modified state.
pub fn modified_moment(dist: &NumberDistribution, modification: StateModification, x: usize) -> Result<f64> {
    let count = modification.count;
    match modification.ordering() {
        Ordering::Normal => subtracted_factorial_moment(&normal_ladder(dist, count + x)?, count, x),
        Ordering::AntiNormal => added_factorial_moment(&antinormal_ladder(dist, count + x)?, count, x),
    }
}

/// Exact `k!` as a `BigInt`.
#[cfg(test)]
pub(crate) fn big_factorial(k: usize) -> BigInt {
    (1..=k).fold(BigInt::one(), |acc, j| acc * j)
}

pub(crate) fn big_binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    (0..k).fold(BigInt::one(), |acc, j| acc * (n - j) / (j + 1))
}
