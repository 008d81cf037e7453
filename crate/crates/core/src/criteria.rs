//! Nonclassicality criteria evaluated from factorial moments.
//!
//! All inputs are factorial moments `m_x = <a†^x a^x>`; raw moments
//! `mu_z = <(a†a)^z>` are derived from them with Stirling numbers of the
//! second kind, never recomputed from a distribution. A modified state's
//! criteria therefore depend on nothing but its normalization ladder.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fock_states::{CutoffPolicy, NumberDistribution, StateFamily};
use crate::moment_engine::{
    antinormal_ladder, big_binomial, modified_moments, normal_ladder, MomentLadder, Ordering,
    StateModification,
};
use crate::numeric::{compensated_sum, DoubleDouble, NeumaierSum};

/// Relative threshold below which the A3 denominator counts as zero.
pub const A3_DEGENERACY_TOL: f64 = 1e-10;

pub const DEFAULT_ELL_MAX: usize = 3;

/// Stirling numbers of the second kind `S(z, k)` for `z <= z_max`, by
/// `S(z,k) = k S(z-1,k) + S(z-1,k-1)`.
pub fn stirling2_table(z_max: usize) -> Vec<Vec<BigUint>> {
    let mut table: Vec<Vec<BigUint>> = Vec::with_capacity(z_max + 1);
    table.push(vec![BigUint::one()]);
    for z in 1..=z_max {
        let prev = &table[z - 1];
        let row = (0..=z)
            .map(|k| {
                let stay = prev.get(k).map(|s| s * k).unwrap_or_default();
                let join = if k > 0 { prev[k - 1].clone() } else { BigUint::zero() };
                stay + join
            })
            .collect();
        table.push(row);
    }
    table
}

pub fn stirling2(z: usize, k: usize) -> BigUint {
    if k > z {
        return BigUint::zero();
    }
    stirling2_table(z).swap_remove(z).swap_remove(k)
}

/// Factorial and raw photon-number moments side by side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentPair {
    pub m: Vec<f64>,
    pub mu: Vec<f64>,
}

impl MomentPair {
    pub fn from_factorial(m: Vec<f64>) -> Self {
        let z_max = m.len() - 1;
        let mu = mu_from_m(&m, z_max).expect("length checked");
        Self { m, mu }
    }
}

/// `mu_z = sum_{k=1}^{z} S(z,k) m_k` for `z = 0..=z_max` (with `mu_0 = m_0`).
pub fn mu_from_m(m: &[f64], z_max: usize) -> Result<Vec<f64>> {
    if m.len() <= z_max {
        return Err(Error::LadderTooShort {
            needed: z_max,
            available: m.len().saturating_sub(1),
        });
    }
    let table = stirling2_table(z_max);
    Ok(table
        .iter()
        .map(|row| {
            compensated_sum(
                row.iter()
                    .zip(m)
                    .filter(|(s, _)| !s.is_zero())
                    .map(|(s, mk)| s.to_f64().unwrap_or(f64::INFINITY) * mk),
            )
        })
        .collect())
}

/// `(m_2 - m_1^2) / m_1`; `None` when the mean vanishes.
pub fn mandel_q(m1: f64, m2: f64) -> Option<f64> {
    if !(m1 > 0.0) {
        return None;
    }
    let variance_excess = DoubleDouble::from_f64(m2).add(DoubleDouble::from_f64(m1).mul_f64(m1).neg());
    Some(variance_excess.to_f64() / m1)
}

/// Q of the `n`-photon-subtracted state straight from the normal ladder:
/// `N_{n+2}/N_{n+1} - N_{n+1}/N_n`.
pub fn mandel_q_subtracted(ladder: &MomentLadder, n: usize) -> Result<f64> {
    expect(ladder, Ordering::Normal)?;
    let (n0, n1, n2) = (ladder.get(n)?, ladder.get(n + 1)?, ladder.get(n + 2)?);
    if n0 == 0.0 {
        return Err(Error::UndefinedState { index: n });
    }
    if n1 == 0.0 {
        return Err(Error::UndefinedState { index: n + 1 });
    }
    Ok(n2 / n1 - n1 / n0)
}

/// Q of the `m`-photon-added state straight from the anti-normal ladder:
/// `(N_{m+2} - 4 N_{m+1} + 2 N_m)/(N_{m+1} - N_m) - (N_{m+1} - N_m)/N_m`.
pub fn mandel_q_added(ladder: &MomentLadder, m: usize) -> Result<f64> {
    expect(ladder, Ordering::AntiNormal)?;
    let (n0, n1, n2) = (ladder.get(m)?, ladder.get(m + 1)?, ladder.get(m + 2)?);
    let gap = n1 - n0;
    if !(gap > 0.0) {
        return Err(Error::DegenerateLadder { index: m });
    }
    let second: NeumaierSum = [n2, -4.0 * n1, 2.0 * n0].into_iter().collect();
    Ok(second.value() / gap - gap / n0)
}

fn expect(ladder: &MomentLadder, ordering: Ordering) -> Result<()> {
    if ladder.ordering() == ordering {
        Ok(())
    } else {
        Err(Error::WrongOrdering {
            expected: ordering,
            found: ladder.ordering(),
        })
    }
}

fn require_order(m: &[f64], order: usize) -> Result<()> {
    if m.len() > order {
        Ok(())
    } else {
        Err(Error::LadderTooShort {
            needed: order,
            available: m.len().saturating_sub(1),
        })
    }
}

fn dd_pow(x: f64, e: usize) -> DoubleDouble {
    (0..e).fold(DoubleDouble::from_f64(1.0), |acc, _| acc.mul_f64(x))
}

/// Lee's `d_h^(ell-1) = m_ell - m_1^ell`, for `ell >= 2`.
pub fn lee_dh(m: &[f64], ell: usize) -> Result<f64> {
    if ell < 2 {
        return Err(Error::InvalidArgument(format!("Lee d_h needs ell >= 2, got {ell}")));
    }
    require_order(m, ell)?;
    Ok(DoubleDouble::from_f64(m[ell]).add(dd_pow(m[1], ell).neg()).to_f64())
}

/// `d_h^(x-1)` of the `n`-photon-subtracted state from the normal ladder:
/// `N_{n+x}/N_n - (N_{n+1}/N_n)^x`.
pub fn lee_dh_subtracted(ladder: &MomentLadder, n: usize, x: usize) -> Result<f64> {
    expect(ladder, Ordering::Normal)?;
    if x < 2 {
        return Err(Error::InvalidArgument(format!("Lee d_h needs order >= 2, got {x}")));
    }
    let norm = ladder.get(n)?;
    if norm == 0.0 {
        return Err(Error::UndefinedState { index: n });
    }
    let mean = ladder.get(n + 1)? / norm;
    Ok(DoubleDouble::from_f64(ladder.get(n + x)? / norm)
        .add(dd_pow(mean, x).neg())
        .to_f64())
}

/// Integer coefficients `c_k` of the Poisson central moment
/// `E[(n - lambda)^order] = sum_k c_k lambda^k`.
///
/// Built from the raw moments `E[n^j] = sum_i S(j,i) lambda^i` and the
/// binomial expansion; the cancellation happens here in exact arithmetic.
pub fn poisson_central_moment_coefficients(order: usize) -> Vec<BigInt> {
    let stirling = stirling2_table(order);
    let mut coeffs = vec![BigInt::zero(); order + 1];
    for (j, row) in stirling.iter().enumerate() {
        let binom = big_binomial(order, j);
        let sign = if (order - j) % 2 == 0 { BigInt::one() } else { -BigInt::one() };
        for (i, s) in row.iter().enumerate() {
            if i + order - j <= order && !s.is_zero() {
                coeffs[i + order - j] += &sign * &binom * BigInt::from(s.clone());
            }
        }
    }
    coeffs
}

/// `O_order(lambda)`: the `order`-th central moment of a Poisson
/// distribution with mean `lambda`. `order` must be even and at least 2.
pub fn poisson_central_moment(lambda: f64, order: usize) -> Result<f64> {
    if order < 2 || order % 2 == 1 {
        return Err(Error::InvalidArgument(format!(
            "Poisson central moment order must be even and >= 2, got {order}"
        )));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("Poisson mean must be nonnegative, got {lambda}")));
    }
    let coeffs = poisson_central_moment_coefficients(order);
    debug_assert!(coeffs.iter().all(|c| !c.is_negative()));
    // Horner with all-nonnegative coefficients: no cancellation
    Ok(coeffs
        .iter()
        .rev()
        .fold(0.0, |acc, c| acc * lambda + c.to_f64().unwrap_or(f64::INFINITY)))
}

/// `sum_{j=0}^{order} C(order,j) (-shift)^{order-j} moments[j]` in double-double.
fn shifted_power_expectation(moments: &[f64], shift: f64, order: usize) -> f64 {
    let mut acc = DoubleDouble::default();
    for (j, &mj) in moments.iter().enumerate().take(order + 1) {
        let binom = big_binomial(order, j).to_f64().unwrap_or(f64::INFINITY);
        let mut term = dd_pow(-shift, order - j).mul_f64(binom).mul_f64(mj);
        if !term.hi.is_finite() {
            term = DoubleDouble::from_f64(term.hi);
        }
        acc = acc.add(term);
    }
    acc.to_f64()
}

/// Generalized Mandel parameter in normal-ordered form:
/// `<:(Δn)^{2ell}:> / O_{2ell}(<n>)`, where `<:n^j:> = m_j`.
///
/// `None` when the mean vanishes.
pub fn q_ell_normal(m: &[f64], ell: usize) -> Result<Option<f64>> {
    check_ell(ell)?;
    require_order(m, 2 * ell)?;
    let mean = m[1];
    if !(mean > 0.0) {
        return Ok(None);
    }
    let numerator = shifted_power_expectation(m, mean, 2 * ell);
    Ok(Some(numerator / poisson_central_moment(mean, 2 * ell)?))
}

/// Generalized Mandel parameter in central-moment form:
/// `(<(Δn)^{2ell}> - O_{2ell}(<n>)) / O_{2ell}(<n>)` from raw moments `mu`.
///
/// Differs from [`q_ell_normal`] for `ell >= 2` on non-Poissonian states.
pub fn q_ell_central(mu: &[f64], ell: usize) -> Result<Option<f64>> {
    check_ell(ell)?;
    require_order(mu, 2 * ell)?;
    let mean = mu[1];
    if !(mean > 0.0) {
        return Ok(None);
    }
    let central = shifted_power_expectation(mu, mean, 2 * ell);
    let poisson = poisson_central_moment(mean, 2 * ell)?;
    Ok(Some((central - poisson) / poisson))
}

fn check_ell(ell: usize) -> Result<()> {
    if ell == 0 {
        Err(Error::InvalidArgument("ell must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// Outcome of the Agarwal–Tara criterion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgarwalTara {
    Value(f64),
    /// `det mu^(3) - det m^(3)` vanished relative to the matrix scale.
    Degenerate { det_m: f64, det_mu: f64 },
}

impl AgarwalTara {
    pub fn value(&self) -> Option<f64> {
        match *self {
            AgarwalTara::Value(v) => Some(v),
            AgarwalTara::Degenerate { .. } => None,
        }
    }
}

/// 3×3 Hankel matrix `[[s0,s1,s2],[s1,s2,s3],[s2,s3,s4]]`.
pub fn hankel3(s: &[f64]) -> [[f64; 3]; 3] {
    [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]]
}

/// Determinant by cofactor expansion in double-double arithmetic, plus the
/// largest magnitude among its six triple products.
pub fn det3_compensated(a: &[[f64; 3]; 3]) -> (DoubleDouble, f64) {
    const TERMS: [([usize; 3], bool); 6] = [
        ([0, 1, 2], true),
        ([1, 2, 0], true),
        ([2, 0, 1], true),
        ([0, 2, 1], false),
        ([1, 0, 2], false),
        ([2, 1, 0], false),
    ];
    let mut det = DoubleDouble::default();
    let mut scale: f64 = 0.0;
    for (cols, positive) in TERMS {
        let product = DoubleDouble::from_f64(a[0][cols[0]])
            .mul_f64(a[1][cols[1]])
            .mul_f64(a[2][cols[2]]);
        scale = scale.max(product.hi.abs());
        det = det.add(if positive { product } else { product.neg() });
    }
    (det, scale)
}

/// `A3 = det m^(3) / (det mu^(3) - det m^(3))` with the default degeneracy tolerance.
pub fn agarwal_tara(m: &[f64]) -> Result<AgarwalTara> {
    agarwal_tara_with_tol(m, A3_DEGENERACY_TOL)
}

/// As [`agarwal_tara`]; the denominator is degenerate when it is at most
/// `tol_det` times the largest triple product in either determinant.
pub fn agarwal_tara_with_tol(m: &[f64], tol_det: f64) -> Result<AgarwalTara> {
    require_order(m, 4)?;
    let mu = mu_from_m(m, 4)?;
    let (det_m, scale_m) = det3_compensated(&hankel3(m));
    let (det_mu, scale_mu) = det3_compensated(&hankel3(&mu));
    let denominator = det_mu.add(det_m.neg()).to_f64();
    let scale = scale_m.max(scale_mu);
    if denominator.abs() <= tol_det * scale || scale == 0.0 {
        return Ok(AgarwalTara::Degenerate {
            det_m: det_m.to_f64(),
            det_mu: det_mu.to_f64(),
        });
    }
    Ok(AgarwalTara::Value(det_m.to_f64() / denominator))
}

/// A criterion entry in a report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriterionValue {
    Value(f64),
    Undefined,
    Degenerate,
}

impl CriterionValue {
    pub fn value(&self) -> Option<f64> {
        match *self {
            CriterionValue::Value(v) => Some(v),
            _ => None,
        }
    }

    pub fn from_option(v: Option<f64>) -> Self {
        v.map_or(CriterionValue::Undefined, CriterionValue::Value)
    }
}

impl From<AgarwalTara> for CriterionValue {
    fn from(a: AgarwalTara) -> Self {
        match a {
            AgarwalTara::Value(v) => CriterionValue::Value(v),
            AgarwalTara::Degenerate { .. } => CriterionValue::Degenerate,
        }
    }
}

impl fmt::Display for CriterionValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            // -0 and 0 print the same
            CriterionValue::Value(v) if v == 0.0 => f.write_str("0"),
            CriterionValue::Value(v) if v.abs() < 1e-4 || v.abs() >= 1e15 => write!(f, "{v:e}"),
            CriterionValue::Value(v) => write!(f, "{v}"),
            CriterionValue::Undefined => f.write_str("UNDEF"),
            CriterionValue::Degenerate => f.write_str("DEGENERATE"),
        }
    }
}

impl Serialize for CriterionValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            CriterionValue::Value(v) if v.is_finite() => serializer.serialize_f64(if v == 0.0 { 0.0 } else { v }),
            other => serializer.collect_str(&other),
        }
    }
}

/// Diagnostics attached to a report.
#[derive(Debug, Clone, PartialEq)]
pub enum Flag {
    /// The modification annihilates the state (`N_index = 0`).
    UndefinedState { index: usize },
    /// The modified state has zero mean; Q-type criteria are undefined.
    ZeroMean,
    /// A3 denominator vanished.
    DegenerateA3 { det_m: f64, det_mu: f64 },
    /// The anti-normal sum for this factorial-moment order lost more than eight digits.
    Cancellation { order: usize },
    /// The cutoff policy could not be met.
    AccuracyFailure,
}

impl Flag {
    /// Short token used in tables.
    pub fn token(&self) -> String {
        match self {
            Flag::UndefinedState { .. } => "undefined_state".into(),
            Flag::ZeroMean => "zero_mean".into(),
            Flag::DegenerateA3 { .. } => "a3_degenerate".into(),
            Flag::Cancellation { order } => format!("cancellation_m{order}"),
            Flag::AccuracyFailure => "accuracy_failure".into(),
        }
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Flag::UndefinedState { index } => write!(f, "state annihilated (N_{index} = 0)"),
            Flag::ZeroMean => f.write_str("zero mean photon number"),
            Flag::DegenerateA3 { det_m, det_mu } => {
                write!(f, "A3 degenerate (det m = {det_m:e}, det mu = {det_mu:e})")
            }
            Flag::Cancellation { order } => write!(f, "cancellation in m_{order}"),
            Flag::AccuracyFailure => f.write_str("cutoff accuracy not reached"),
        }
    }
}

impl Serialize for Flag {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.token())
    }
}

/// Every criterion for one (state, modification) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriteriaReport {
    pub modification: StateModification,
    pub ell_max: usize,
    /// `m_1`
    pub mean: CriterionValue,
    /// From the generic factorial-moment route.
    pub mandel_q: CriterionValue,
    /// From the closed-form ladder expression for the modification.
    pub mandel_q_closed_form: CriterionValue,
    pub q_ell_normal: BTreeMap<usize, CriterionValue>,
    pub q_ell_central: BTreeMap<usize, CriterionValue>,
    /// Keyed by `ell - 1`, i.e. `lee_dh[1] = m_2 - m_1^2`.
    pub lee_dh: BTreeMap<usize, CriterionValue>,
    pub a3: CriterionValue,
    pub moments: Option<MomentPair>,
    pub flags: Vec<Flag>,
}

impl CriteriaReport {
    fn undefined(modification: StateModification, ell_max: usize, flag: Flag) -> Self {
        let each = |keys: std::ops::RangeInclusive<usize>| keys.map(|k| (k, CriterionValue::Undefined)).collect();
        Self {
            modification,
            ell_max,
            mean: CriterionValue::Undefined,
            mandel_q: CriterionValue::Undefined,
            mandel_q_closed_form: CriterionValue::Undefined,
            q_ell_normal: each(1..=ell_max),
            q_ell_central: each(1..=ell_max),
            lee_dh: each(1..=ell_max),
            a3: CriterionValue::Undefined,
            moments: None,
            flags: vec![flag],
        }
    }

    pub fn is_undefined_state(&self) -> bool {
        self.flags.iter().any(|f| matches!(f, Flag::UndefinedState { .. }))
    }
}

/// Highest factorial-moment order the report needs.
pub fn required_moment_order(ell_max: usize) -> usize {
    (2 * ell_max).max(ell_max + 1).max(4)
}

/// Fills a [`CriteriaReport`] from the modification's normalization ladder.
///
/// An annihilated state is reported through [`Flag::UndefinedState`] rather
/// than as an error.
pub fn evaluate_all(
    dist: &NumberDistribution,
    modification: StateModification,
    ell_max: usize,
) -> Result<CriteriaReport> {
    if ell_max == 0 {
        return Err(Error::InvalidArgument("ell_max must be at least 1".into()));
    }
    let order = required_moment_order(ell_max);
    let moments = match modified_moments(dist, modification, order) {
        Ok(m) => m,
        Err(Error::UndefinedState { index }) => {
            return Ok(CriteriaReport::undefined(
                modification,
                ell_max,
                Flag::UndefinedState { index },
            ))
        }
        Err(e) => return Err(e),
    };
    let mut flags: Vec<Flag> = moments
        .cancellation_orders
        .iter()
        .map(|&order| Flag::Cancellation { order })
        .collect();

    let m = moments.values;
    let mu = mu_from_m(&m, order)?;

    let count = modification.count;
    let closed_form = match modification.ordering() {
        Ordering::Normal => mandel_q_subtracted(&normal_ladder(dist, count + 2)?, count),
        Ordering::AntiNormal => mandel_q_added(&antinormal_ladder(dist, count + 2)?, count),
    };
    let mandel_q_closed_form = match closed_form {
        Ok(q) => CriterionValue::Value(q),
        Err(Error::UndefinedState { .. }) | Err(Error::DegenerateLadder { .. }) => CriterionValue::Undefined,
        Err(e) => return Err(e),
    };

    let q = mandel_q(m[1], m[2]);
    if q.is_none() {
        flags.push(Flag::ZeroMean);
    }
    let mut q_ell_normal = BTreeMap::new();
    let mut q_ell_central = BTreeMap::new();
    let mut lee = BTreeMap::new();
    for ell in 1..=ell_max {
        q_ell_normal.insert(ell, CriterionValue::from_option(self::q_ell_normal(&m, ell)?));
        q_ell_central.insert(ell, CriterionValue::from_option(self::q_ell_central(&mu, ell)?));
        lee.insert(ell, CriterionValue::Value(lee_dh(&m, ell + 1)?));
    }
    let a3 = agarwal_tara(&m)?;
    if let AgarwalTara::Degenerate { det_m, det_mu } = a3 {
        flags.push(Flag::DegenerateA3 { det_m, det_mu });
    }

    Ok(CriteriaReport {
        modification,
        ell_max,
        mean: CriterionValue::Value(m[1]),
        mandel_q: CriterionValue::from_option(q),
        mandel_q_closed_form,
        q_ell_normal,
        q_ell_central,
        lee_dh: lee,
        a3: a3.into(),
        moments: Some(MomentPair { m, mu }),
        flags,
    })
}

/// Builds the base state with a cutoff converged for every ladder entry the
/// report touches, then evaluates it.
pub fn evaluate_family(
    family: &StateFamily,
    modification: StateModification,
    ell_max: usize,
    policy: &CutoffPolicy,
) -> Result<CriteriaReport> {
    let policy = policy.covering_order(modification.count + required_moment_order(ell_max));
    let dist = family.build(&policy)?;
    evaluate_all(&dist, modification, ell_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock_states::{build_coherent, build_fock, build_thermal};

    fn u(x: u64) -> BigUint {
        BigUint::from(x)
    }

    /// Counts set partitions of `0..n` into exactly `k` nonempty blocks by
    /// enumerating restricted growth strings.
    fn count_partitions(n: usize, k: usize) -> u64 {
        fn rec(i: usize, n: usize, k: usize, used: usize) -> u64 {
            if i == n {
                return (used == k) as u64;
            }
            // element i joins an existing block or opens block `used`
            let mut total = used as u64 * rec(i + 1, n, k, used);
            if used < k {
                total += rec(i + 1, n, k, used + 1);
            }
            total
        }
        rec(0, n, k, 0)
    }

    #[test]
    fn stirling_examples() {
        assert_eq!(stirling2(0, 0), u(1));
        assert_eq!(stirling2(4, 2), u(7));
        assert_eq!(count_partitions(5, 3), 25);
        assert_eq!(stirling2(5, 3), u(25));
        for z in 0..9 {
            for k in 0..=z {
                assert_eq!(stirling2(z, k), u(count_partitions(z, k)), "S({z},{k})");
            }
        }
    }

    #[test]
    fn mu_from_m_examples() {
        let mu = mu_from_m(&[1.0; 5], 2).unwrap();
        assert_eq!(mu[2], 2.0);

        let mu = mu_from_m(&[1.0, 2.0, 2.0, 0.0, 0.0], 4).unwrap();
        assert_eq!(mu, vec![1.0, 2.0, 4.0, 8.0, 16.0]);

        let mu = mu_from_m(&[1.0, 1.0, 2.0, 6.0, 24.0], 4).unwrap();
        assert_eq!(&mu[3..], &[13.0, 75.0]);
    }

    #[test]
    fn thermal_raw_moments_by_brute_force() {
        // geometric pmf with nbar = 1: p_n = 2^{-(n+1)}
        let raw = |z: i32| -> f64 { (0..400).map(|n| f64::powi(n as f64, z) * 0.5f64.powi(n + 1)).sum() };
        assert!((raw(3) - 13.0).abs() < 1e-10);
        assert!((raw(4) - 75.0).abs() < 1e-10);
    }

    #[test]
    fn mandel_q_examples() {
        assert_eq!(mandel_q(2.5, 6.25), Some(0.0));
        assert_eq!(mandel_q(3.0, 6.0), Some(-1.0));
        assert!((mandel_q(0.7, 2.0 * 0.7 * 0.7).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(mandel_q(0.0, 0.0), None);
    }

    #[test]
    fn closed_form_q_subtracted() {
        let p = CutoffPolicy::default();
        for nbar in [0.3, 1.0, 2.0] {
            let l = normal_ladder(&build_thermal(nbar, &p).unwrap(), 6).unwrap();
            for n in 0..4 {
                let q = mandel_q_subtracted(&l, n).unwrap();
                assert!((q - nbar).abs() < 1e-9, "nbar {nbar} n {n}: {q}");
            }
        }
        let l = normal_ladder(&build_coherent(1.5, &p).unwrap(), 6).unwrap();
        assert!(mandel_q_subtracted(&l, 2).unwrap().abs() < 1e-9);

        let l = normal_ladder(&build_fock(3), 5).unwrap();
        assert_eq!(mandel_q_subtracted(&l, 1).unwrap(), -1.0);
        assert_eq!(mandel_q_subtracted(&l, 3), Err(Error::UndefinedState { index: 4 }));
    }

    #[test]
    fn closed_form_q_added() {
        let l = antinormal_ladder(&NumberDistribution::vacuum(), 3).unwrap();
        assert_eq!(mandel_q_added(&l, 1).unwrap(), -1.0);
        let l = antinormal_ladder(&build_fock(1), 3).unwrap();
        assert_eq!(mandel_q_added(&l, 1).unwrap(), -1.0);
        let l = antinormal_ladder(&build_thermal(1.0, &CutoffPolicy::default()).unwrap(), 3).unwrap();
        assert!((mandel_q_added(&l, 1).unwrap() - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn lee_examples() {
        assert!(lee_dh(&[1.0, 1.5, 2.25, 3.375], 3).unwrap().abs() < 1e-15);
        assert_eq!(lee_dh(&[1.0, 2.0, 2.0], 2).unwrap(), -2.0);
        assert_eq!(lee_dh(&[1.0, 1.0, 2.0, 6.0], 3).unwrap(), 5.0);
        assert!(lee_dh(&[1.0, 1.0], 1).is_err());

        let l = normal_ladder(&build_fock(4), 7).unwrap();
        // |4> minus one photon is |3>: m_3 = 6, m_1 = 3
        assert_eq!(lee_dh_subtracted(&l, 1, 3).unwrap(), 6.0 - 27.0);
    }

    #[test]
    fn poisson_central_moment_examples() {
        for lambda in [0.0, 0.3, 1.0, 7.5] {
            assert!((poisson_central_moment(lambda, 2).unwrap() - lambda).abs() < 1e-14);
            let o4 = poisson_central_moment(lambda, 4).unwrap();
            assert!((o4 - (lambda + 3.0 * lambda * lambda)).abs() <= 1e-13 * o4.max(1.0));
        }
        assert_eq!(poisson_central_moment(0.0, 6).unwrap(), 0.0);
        assert!(poisson_central_moment(1.0, 3).is_err());
        assert!(poisson_central_moment(1.0, 0).is_err());
    }

    #[test]
    fn poisson_fourth_central_moment_brute_force() {
        // sum (n-1)^4 e^{-1}/n! to convergence
        let mut p = (-1.0f64).exp();
        let mut total = 0.0;
        for n in 0..60 {
            if n > 0 {
                p /= n as f64;
            }
            total += (n as f64 - 1.0).powi(4) * p;
        }
        assert!((total - 4.0).abs() < 1e-12);
        assert!((poisson_central_moment(1.0, 4).unwrap() - total).abs() < 1e-12);
    }

    #[test]
    fn poisson_coefficients_are_associated_stirling_numbers() {
        // associated Stirling numbers (no singleton blocks): b(n,k) = k b(n-1,k) + (n-1) b(n-2,k-1)
        let n_max = 12;
        let mut b = vec![vec![0i64; n_max + 1]; n_max + 1];
        b[0][0] = 1;
        for n in 1..=n_max {
            for k in 1..=n {
                b[n][k] = k as i64 * b[n - 1][k] + if n >= 2 { (n as i64 - 1) * b[n - 2][k - 1] } else { 0 };
            }
        }
        for order in (2..=n_max).step_by(2) {
            let c = poisson_central_moment_coefficients(order);
            for k in 0..=order {
                assert_eq!(c[k], BigInt::from(b[order][k]), "order {order} k {k}");
            }
        }
    }

    #[test]
    fn q_ell_examples() {
        let fock1 = [1.0, 1.0, 0.0, 0.0, 0.0];
        assert_eq!(q_ell_normal(&fock1, 2).unwrap(), Some(-0.75));
        let mu = mu_from_m(&fock1, 4).unwrap();
        assert_eq!(q_ell_central(&mu, 2).unwrap(), Some(-1.0));

        let coherent: Vec<f64> = (0..7).map(|j| f64::powi(1.7, j)).collect();
        for ell in 1..=3 {
            assert!(q_ell_normal(&coherent, ell).unwrap().unwrap().abs() < 1e-9);
            let mu = mu_from_m(&coherent, 6).unwrap();
            assert!(q_ell_central(&mu, ell).unwrap().unwrap().abs() < 1e-9);
        }

        let thermal = [1.0, 0.4, 0.32, 0.384, 0.6144];
        let q = mandel_q(0.4, 0.32).unwrap();
        assert!((q_ell_normal(&thermal, 1).unwrap().unwrap() - q).abs() < 1e-15);
        let mu = mu_from_m(&thermal, 2).unwrap();
        assert!((q_ell_central(&mu, 1).unwrap().unwrap() - q).abs() < 1e-15);

        assert_eq!(q_ell_normal(&[1.0, 0.0, 0.0], 1).unwrap(), None);
        assert!(q_ell_normal(&fock1, 3).is_err());
    }

    #[test]
    fn agarwal_tara_examples() {
        for lambda in [0.25, 1.0, 4.0] {
            let m: Vec<f64> = (0..5).map(|j| f64::powi(lambda, j)).collect();
            let a3 = agarwal_tara(&m).unwrap().value().unwrap();
            assert!(a3.abs() < 1e-12, "{lambda}: {a3}");
        }

        let (det_m, _) = det3_compensated(&hankel3(&[1.0, 2.0, 2.0, 0.0, 0.0]));
        assert_eq!(det_m.to_f64(), -8.0);
        let (det_mu, _) = det3_compensated(&hankel3(&[1.0, 2.0, 4.0, 8.0, 16.0]));
        assert_eq!(det_mu.to_f64(), 0.0);
        assert_eq!(agarwal_tara(&[1.0, 2.0, 2.0, 0.0, 0.0]).unwrap(), AgarwalTara::Value(-1.0));

        assert_eq!(
            agarwal_tara(&[1.0, 1.0, 0.0, 0.0, 0.0]).unwrap(),
            AgarwalTara::Degenerate { det_m: 0.0, det_mu: 0.0 }
        );
    }

    #[test]
    fn evaluate_all_coherent_subtracted() {
        let d = build_coherent(1.0, &CutoffPolicy::default().covering_order(10)).unwrap();
        let r = evaluate_all(&d, StateModification::subtract(1), 2).unwrap();
        let q = r.mandel_q.value().unwrap();
        assert!(q.abs() < 1e-9);
        assert!(r.lee_dh.values().all(|v| v.value().unwrap().abs() < 1e-9));
        assert!(r.q_ell_normal.values().all(|v| v.value().unwrap().abs() < 1e-9));
        assert!(r.q_ell_central.values().all(|v| v.value().unwrap().abs() < 1e-9));
        assert!(r.a3.value().unwrap().abs() < 1e-9);
        assert!(r.flags.is_empty(), "{:?}", r.flags);
    }

    #[test]
    fn evaluate_all_flags_annihilated_state() {
        let r = evaluate_all(&build_fock(2), StateModification::subtract(3), 3).unwrap();
        assert!(r.is_undefined_state());
        assert_eq!(r.mandel_q, CriterionValue::Undefined);
        assert_eq!(r.flags[0].token(), "undefined_state");
    }

    #[test]
    fn evaluate_all_thermal_added() {
        let d = build_thermal(1.0, &CutoffPolicy::default().covering_order(10)).unwrap();
        let r = evaluate_all(&d, StateModification::add(1), 1).unwrap();
        assert!((r.mandel_q.value().unwrap() - 1.0 / 3.0).abs() < 1e-10);
        assert!((r.mandel_q_closed_form.value().unwrap() - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn evaluate_all_vacuum_base() {
        let r = evaluate_all(&NumberDistribution::vacuum(), StateModification::IDENTITY, 2).unwrap();
        assert_eq!(r.mandel_q, CriterionValue::Undefined);
        assert_eq!(r.a3, CriterionValue::Degenerate);
        let tokens: Vec<_> = r.flags.iter().map(Flag::token).collect();
        assert_eq!(tokens, vec!["zero_mean", "a3_degenerate"]);
    }

    #[test]
    fn criterion_value_rendering() {
        assert_eq!(CriterionValue::Value(-0.0).to_string(), "0");
        assert_eq!(CriterionValue::Value(0.1 + 0.2).to_string(), "0.30000000000000004");
        assert_eq!(CriterionValue::Degenerate.to_string(), "DEGENERATE");
        assert_eq!(serde_json::to_string(&CriterionValue::Undefined).unwrap(), "\"UNDEF\"");
        assert_eq!(serde_json::to_string(&CriterionValue::Value(-1.0)).unwrap(), "-1.0");
    }
}
