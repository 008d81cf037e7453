//! Truncated photon-number distributions for the standard base states.
//!
//! Every quantity this crate evaluates is diagonal in the number basis, so a
//! state is fully described by its distribution `p_n = |<n|psi>|^2`. Mixed
//! states such as the thermal state need no special treatment.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, NeumaierSum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CutoffPolicy {
    /// Upper bound on the probability mass allowed beyond the cutoff.
    pub eps_tail: f64,
    /// Order of the factorial moment that must be converged at the cutoff.
    pub max_moment_order: usize,
    /// Hard cap on the cutoff.
    pub max_cutoff: usize,
    /// Relative change of the checked moment tolerated when the cutoff doubles.
    pub rel_tol: f64,
}

impl Default for CutoffPolicy {
    fn default() -> Self {
        Self {
            eps_tail: 1e-12,
            max_moment_order: 8,
            max_cutoff: 4096,
            rel_tol: 1e-10,
        }
    }
}

impl CutoffPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_tail > 0.0) || !self.eps_tail.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "eps_tail must be positive, got {}",
                self.eps_tail
            )));
        }
        if !(self.rel_tol > 0.0) || !self.rel_tol.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        if self.max_cutoff < 1 {
            return Err(Error::InvalidArgument("max_cutoff must be at least 1".into()));
        }
        Ok(())
    }

    /// Same policy, but converging moments of at least order `order`.
    pub fn covering_order(mut self, order: usize) -> Self {
        self.max_moment_order = self.max_moment_order.max(order);
        self
    }
}

/// Photon-number distribution `p_0..=p_D` with a bound on the omitted tail.
///
/// Immutable once built; clones share the probability buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct NumberDistribution {
    probs: Arc<[f64]>,
    tail_bound: f64,
}

impl NumberDistribution {
    /// Wraps a user-supplied distribution. Entries must be finite and nonnegative.
    pub fn new(probs: Vec<f64>, tail_bound: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("distribution needs at least p_0".into()));
        }
        if let Some((n, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::InvalidArgument(format!("p_{n} = {p} is not a probability")));
        }
        if !(tail_bound >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tail bound must be nonnegative, got {tail_bound}"
            )));
        }
        if compensated_sum(probs.iter().copied()) == 0.0 {
            return Err(Error::InvalidArgument("distribution has zero mass".into()));
        }
        Ok(Self {
            probs: probs.into(),
            tail_bound,
        })
    }

    pub fn vacuum() -> Self {
        Self {
            probs: vec![1.0].into(),
            tail_bound: 0.0,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Largest photon number kept.
    pub fn cutoff(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// `p_n`, zero beyond the cutoff.
    pub fn prob(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        compensated_sum(self.probs.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(self.probs.iter().enumerate().map(|(n, p)| n as f64 * p)) / self.total_mass()
    }

    /// Rescales the kept entries to unit mass. The tail bound is left as is:
    /// it still describes what the truncation dropped.
    pub fn renormalized(&self) -> Self {
        let mass = self.total_mass();
        Self {
            probs: self.probs.iter().map(|p| p / mass).collect(),
            tail_bound: self.tail_bound,
        }
    }
}

/// The base-state families with closed-form number distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum StateFamily {
    Coherent { alpha_sq: f64 },
    Thermal { nbar: f64 },
    Fock { n: usize },
    SqueezedVacuum { r: f64 },
}

impl StateFamily {
    pub fn validate(&self) -> Result<()> {
        let (name, value) = match *self {
            StateFamily::Coherent { alpha_sq } => ("|alpha|^2", alpha_sq),
            StateFamily::Thermal { nbar } => ("nbar", nbar),
            StateFamily::SqueezedVacuum { r } => ("r", r),
            StateFamily::Fock { .. } => return Ok(()),
        };
        if value >= 0.0 && value.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "{name} must be a nonnegative finite number, got {value}"
            )))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StateFamily::Coherent { .. } => "coherent",
            StateFamily::Thermal { .. } => "thermal",
            StateFamily::Fock { .. } => "fock",
            StateFamily::SqueezedVacuum { .. } => "squeezed",
        }
    }

    pub fn parameter(&self) -> f64 {
        match *self {
            StateFamily::Coherent { alpha_sq } => alpha_sq,
            StateFamily::Thermal { nbar } => nbar,
            StateFamily::Fock { n } => n as f64,
            StateFamily::SqueezedVacuum { r } => r,
        }
    }

    pub fn analytic_mean(&self) -> f64 {
        match *self {
            StateFamily::Coherent { alpha_sq } => alpha_sq,
            StateFamily::Thermal { nbar } => nbar,
            StateFamily::Fock { n } => n as f64,
            StateFamily::SqueezedVacuum { r } => r.sinh().powi(2),
        }
    }

    /// Builds the distribution with the smallest cutoff satisfying `policy`,
    /// renormalized to unit mass.
    pub fn build(&self, policy: &CutoffPolicy) -> Result<NumberDistribution> {
        if let StateFamily::Fock { n } = *self {
            return Ok(build_fock(n));
        }
        let cutoff = choose_cutoff(self, policy)?;
        Ok(self.truncated(cutoff).renormalized())
    }

    /// Raw truncation at `cutoff`, not renormalized.
    pub fn truncated(&self, cutoff: usize) -> NumberDistribution {
        let mut series = PmfSeries::new(*self);
        series.extend_to(cutoff + 1);
        NumberDistribution {
            probs: series.probs[..=cutoff].into(),
            tail_bound: series.tail_bound(cutoff),
        }
    }
}

impl fmt::Display for StateFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            StateFamily::Fock { n } => write!(f, "fock({n})"),
            _ => write!(f, "{}({})", self.name(), self.parameter()),
        }
    }
}

pub fn build_coherent(alpha_sq: f64, policy: &CutoffPolicy) -> Result<NumberDistribution> {
    StateFamily::Coherent { alpha_sq }.build(policy)
}

pub fn build_thermal(nbar: f64, policy: &CutoffPolicy) -> Result<NumberDistribution> {
    StateFamily::Thermal { nbar }.build(policy)
}

pub fn build_fock(n: usize) -> NumberDistribution {
    let mut probs = vec![0.0; n + 1];
    probs[n] = 1.0;
    NumberDistribution {
        probs: probs.into(),
        tail_bound: 0.0,
    }
}

pub fn build_squeezed_vacuum(r: f64, policy: &CutoffPolicy) -> Result<NumberDistribution> {
    StateFamily::SqueezedVacuum { r }.build(policy)
}

/// Smallest cutoff `D <= max_cutoff` whose tail bound is at most `eps_tail`
/// and for which the factorial moment of order `max_moment_order` moves by
/// less than `rel_tol` (relative) when the cutoff is doubled.
pub fn choose_cutoff(family: &StateFamily, policy: &CutoffPolicy) -> Result<usize> {
    family.validate()?;
    policy.validate()?;
    let order = policy.max_moment_order;
    let mut series = PmfSeries::new(*family);
    let mut last_tail = 1.0;
    let mut last_change = f64::INFINITY;
    for cutoff in 0..=policy.max_cutoff {
        series.extend_to(2 * cutoff + 1);
        last_tail = series.tail_bound(cutoff);
        if last_tail > policy.eps_tail {
            continue;
        }
        let here = series.factorial_moment(order, cutoff);
        let doubled = series.factorial_moment(order, 2 * cutoff);
        last_change = crate::numeric::relative_deviation(here, doubled);
        if last_change < policy.rel_tol {
            return Ok(cutoff);
        }
    }
    Err(Error::Accuracy {
        family: family.to_string(),
        max_cutoff: policy.max_cutoff,
        tail_bound: last_tail,
        moment_change: last_change,
    })
}

/// Lazily extended pmf of a family, with running prefix sums for the
/// cutoff search.
struct PmfSeries {
    family: StateFamily,
    probs: Vec<f64>,
    /// Coherent `p_n` as `mantissa * 2^exponent`.
    scaled: (f64, i32),
    prefix_mass: Vec<NeumaierSum>,
    // tail bounds are kept monotone: a bound for D is also a bound for D + 1
    tails: Vec<f64>,
    moment_prefix: Option<(usize, Vec<NeumaierSum>)>,
}

impl PmfSeries {
    fn new(family: StateFamily) -> Self {
        Self {
            family,
            probs: Vec::new(),
            scaled: (0.0, 0),
            prefix_mass: Vec::new(),
            tails: Vec::new(),
            moment_prefix: None,
        }
    }

    fn next_prob(&mut self) -> f64 {
        let n = self.probs.len();
        match self.family {
            StateFamily::Coherent { alpha_sq } => {
                if alpha_sq == 0.0 {
                    return if n == 0 { 1.0 } else { 0.0 };
                }
                // p_n = p_{n-1} * lambda / n, with the binary exponent kept
                // apart so e^{-lambda} cannot underflow
                const SHIFT: i32 = 500;
                let (mut mant, mut exp) = if n == 0 {
                    let k = (-alpha_sq / std::f64::consts::LN_2).floor();
                    ((-alpha_sq - k * std::f64::consts::LN_2).exp(), k as i32)
                } else {
                    let (m, e) = self.scaled;
                    (m * (alpha_sq / n as f64), e)
                };
                if mant > 2f64.powi(SHIFT) {
                    mant *= 2f64.powi(-SHIFT);
                    exp += SHIFT;
                } else if mant < 2f64.powi(-SHIFT) {
                    mant *= 2f64.powi(SHIFT);
                    exp -= SHIFT;
                }
                self.scaled = (mant, exp);
                mant * 2f64.powi(exp / 2) * 2f64.powi(exp - exp / 2)
            }
            StateFamily::Thermal { nbar } => {
                if n == 0 {
                    1.0 / (1.0 + nbar)
                } else {
                    self.probs[n - 1] * (nbar / (1.0 + nbar))
                }
            }
            StateFamily::Fock { n: photons } => {
                if n == photons {
                    1.0
                } else {
                    0.0
                }
            }
            StateFamily::SqueezedVacuum { r } => {
                if n == 0 {
                    1.0 / r.cosh()
                } else if n % 2 == 1 {
                    0.0
                } else {
                    let t = r.tanh();
                    self.probs[n - 2] * t * t * (n - 1) as f64 / n as f64
                }
            }
        }
    }

    fn extend_to(&mut self, len: usize) {
        while self.probs.len() < len {
            let p = self.next_prob();
            let mut mass = self.prefix_mass.last().copied().unwrap_or_default();
            mass.add(p);
            self.probs.push(p);
            self.prefix_mass.push(mass);
        }
    }

    /// Upper bound on `sum_{n > cutoff} p_n`. Needs `probs` through `cutoff + 2`.
    fn tail_bound(&mut self, cutoff: usize) -> f64 {
        self.extend_to(cutoff + 3);
        while self.tails.len() <= cutoff {
            let d = self.tails.len();
            let bound = self.raw_tail_bound(d);
            let previous = self.tails.last().copied().unwrap_or(1.0);
            self.tails.push(bound.min(previous).min(1.0));
        }
        self.tails[cutoff]
    }

    fn raw_tail_bound(&self, d: usize) -> f64 {
        match self.family {
            StateFamily::Coherent { alpha_sq } => {
                // p_{n+1}/p_n = lambda/(n+1) is decreasing, so the tail is
                // dominated by a geometric series once the ratio drops below 1
                let ratio = alpha_sq / (d + 2) as f64;
                if ratio < 1.0 {
                    self.probs[d + 1] / (1.0 - ratio)
                } else {
                    1.0
                }
            }
            StateFamily::Thermal { nbar } => {
                // exact: sum_{n > d} p_n = q^{d+1} = (1 + nbar) p_{d+1}
                self.probs[d + 1] * (1.0 + nbar)
            }
            StateFamily::Fock { n } => {
                if d >= n {
                    0.0
                } else {
                    1.0
                }
            }
            StateFamily::SqueezedVacuum { r } => {
                // even-index ratios (2k+1)/(2k+2) tanh^2 r stay below tanh^2 r
                let next_even = if (d + 1) % 2 == 0 { d + 1 } else { d + 2 };
                self.probs[next_even] * r.cosh().powi(2)
            }
        }
    }

    /// Factorial moment of order `order` of the renormalized truncation at `cutoff`.
    fn factorial_moment(&mut self, order: usize, cutoff: usize) -> f64 {
        self.extend_to(cutoff + 1);
        let stale = !matches!(&self.moment_prefix, Some((k, _)) if *k == order);
        if stale {
            self.moment_prefix = Some((order, Vec::new()));
        }
        let (_, prefix) = self.moment_prefix.as_mut().expect("initialized above");
        while prefix.len() <= cutoff {
            let n = prefix.len();
            let weight: f64 = (0..order).map(|j| n as f64 - j as f64).product();
            let weight = if n < order { 0.0 } else { weight };
            let mut acc = prefix.last().copied().unwrap_or_default();
            acc.add(self.probs[n] * weight);
            prefix.push(acc);
        }
        prefix[cutoff].value() / self.prefix_mass[cutoff].value()
    }
}
