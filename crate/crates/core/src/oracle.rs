//! Brute-force reference path.
//!
//! Photon subtraction and addition are applied directly to the number
//! distribution (`a^n` maps weight `p_{j+n}` to `(j+n)!/j! p_{j+n}` on `|j>`,
//! `a†^m` maps `p_{j-m}` to `j!/(j-m)! p_{j-m}`), the result is renormalized,
//! and every moment and criterion is recomputed by summation over that
//! distribution. Nothing here touches a normalization ladder.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::criteria::{
    evaluate_all, poisson_central_moment, required_moment_order, CriteriaReport, CriterionValue,
    DEFAULT_ELL_MAX,
};
use crate::error::{Error, Result};
use crate::fock_states::{CutoffPolicy, NumberDistribution, StateFamily};
use crate::moment_engine::{modified_moments, ModificationKind, StateModification};
use crate::numeric::{relative_deviation, unit_floored_deviation, NeumaierSum};

pub const DEFAULT_TOL_SUBTRACT: f64 = 1e-9;
pub const DEFAULT_TOL_ADD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// The modified state, renormalized.
    pub dist: NumberDistribution,
    /// `m_0..=m_{x_max}` of `dist` by direct summation.
    pub moments: Vec<f64>,
    /// Norm of the unnormalized modified state relative to the base mass.
    pub norm_constant: f64,
}

/// `a^n` applied to the distribution.
pub fn oracle_subtract(dist: &NumberDistribution, n: usize, x_max: usize) -> Result<OracleResult> {
    let probs = dist.probs();
    let weights: Vec<f64> = (0..probs.len().saturating_sub(n))
        .map(|j| probs[j + n] * falling(j + n, n))
        .collect();
    finish(dist, weights, n, x_max)
}

/// `a†^m` applied to the distribution; the support shifts up by `m`.
pub fn oracle_add(dist: &NumberDistribution, m: usize, x_max: usize) -> Result<OracleResult> {
    let probs = dist.probs();
    let weights: Vec<f64> = (0..probs.len() + m)
        .map(|j| if j < m { 0.0 } else { probs[j - m] * falling(j, m) })
        .collect();
    finish(dist, weights, m, x_max)
}

fn finish(base: &NumberDistribution, weights: Vec<f64>, index: usize, x_max: usize) -> Result<OracleResult> {
    let norm: NeumaierSum = weights.iter().copied().collect();
    let norm = norm.value();
    if weights.is_empty() || norm == 0.0 {
        return Err(Error::UndefinedState { index });
    }
    if !norm.is_finite() {
        return Err(Error::Overflow { order: index });
    }
    let probs: Vec<f64> = weights.iter().map(|w| w / norm).collect();
    let dist = NumberDistribution::new(probs, base.tail_bound())?;
    let moments = direct_moments(&dist, x_max);
    Ok(OracleResult {
        dist,
        moments,
        norm_constant: norm / base.total_mass(),
    })
}

/// `n (n-1) ... (n-k+1)` as a plain product.
fn falling(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (n - k + 1..=n).map(|v| v as f64).product()
}

/// `m_x = sum_n p_n n!/(n-x)!` for `x = 0..=x_max`, each term formed
/// independently and accumulated with compensation.
pub fn direct_moments(dist: &NumberDistribution, x_max: usize) -> Vec<f64> {
    let mass = dist.total_mass();
    (0..=x_max)
        .map(|x| {
            let mut acc = NeumaierSum::new();
            for (n, &p) in dist.probs().iter().enumerate() {
                if p == 0.0 || n < x {
                    continue;
                }
                let mut term = p * falling(n, x);
                if !term.is_finite() {
                    // log-space fallback when n!/(n-x)! alone overflows
                    let log_weight: f64 = (n - x + 1..=n).map(|v| (v as f64).ln()).sum();
                    term = (p.ln() + log_weight).exp();
                }
                acc.add(term);
            }
            acc.value() / mass
        })
        .collect()
}

/// `mu_z = sum_n n^z p_n` for `z = 0..=z_max`.
pub fn direct_raw_moments(dist: &NumberDistribution, z_max: usize) -> Vec<f64> {
    let mass = dist.total_mass();
    (0..=z_max)
        .map(|z| {
            let acc: NeumaierSum = dist
                .probs()
                .iter()
                .enumerate()
                .map(|(n, &p)| p * (n as f64).powi(z as i32))
                .collect();
            acc.value() / mass
        })
        .collect()
}

/// `E[(n - mean)^order]` summed over the distribution.
pub fn direct_central_moment(dist: &NumberDistribution, order: usize) -> f64 {
    let mean = dist.mean();
    let acc: NeumaierSum = dist
        .probs()
        .iter()
        .enumerate()
        .map(|(n, &p)| p * (n as f64 - mean).powi(order as i32))
        .collect();
    acc.value() / dist.total_mass()
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn det_by_elimination(mut a: [[f64; 3]; 3]) -> f64 {
    let mut det = 1.0;
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty range");
        if a[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det *= a[col][col];
        for row in col + 1..3 {
            let factor = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= factor * a[col][k];
            }
        }
    }
    det
}

/// Criteria computed from a modified distribution without any ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCriteria {
    pub mean: CriterionValue,
    pub mandel_q: CriterionValue,
    pub q_ell_normal: Vec<CriterionValue>,
    pub q_ell_central: Vec<CriterionValue>,
    pub lee_dh: Vec<CriterionValue>,
    pub a3: CriterionValue,
}

/// Reference criteria for `dist`. Uses direct central and raw moments and an
/// elimination determinant; the normal-ordered Q^(ell) uses the direct
/// factorial moments.
pub fn oracle_criteria(dist: &NumberDistribution, ell_max: usize, tol_det: f64) -> Result<OracleCriteria> {
    let order = required_moment_order(ell_max);
    let m = direct_moments(dist, order);
    let mu = direct_raw_moments(dist, 4);
    let mean = m[1];
    let defined = mean > 0.0;

    let mandel_q = if defined {
        CriterionValue::Value((direct_central_moment(dist, 2) - mean) / mean)
    } else {
        CriterionValue::Undefined
    };
    let mut q_ell_normal = Vec::with_capacity(ell_max);
    let mut q_ell_central = Vec::with_capacity(ell_max);
    let mut lee_dh = Vec::with_capacity(ell_max);
    for ell in 1..=ell_max {
        if defined {
            let poisson = poisson_central_moment(mean, 2 * ell)?;
            let mut normal = NeumaierSum::new();
            let mut binom = 1.0;
            for j in 0..=2 * ell {
                if j > 0 {
                    binom = binom * (2 * ell - j + 1) as f64 / j as f64;
                }
                normal.add(binom * (-mean).powi((2 * ell - j) as i32) * m[j]);
            }
            q_ell_normal.push(CriterionValue::Value(normal.value() / poisson));
            let central = direct_central_moment(dist, 2 * ell);
            q_ell_central.push(CriterionValue::Value((central - poisson) / poisson));
        } else {
            q_ell_normal.push(CriterionValue::Undefined);
            q_ell_central.push(CriterionValue::Undefined);
        }
        lee_dh.push(CriterionValue::Value(m[ell + 1] - mean.powi(ell as i32 + 1)));
    }

    let hankel = |s: &[f64]| [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
    let det_m = det_by_elimination(hankel(&m));
    let det_mu = det_by_elimination(hankel(&mu));
    let scale = hadamard_bound(&hankel(&m)).max(hadamard_bound(&hankel(&mu)));
    let denominator = det_mu - det_m;
    let a3 = if denominator.abs() <= tol_det * scale || scale == 0.0 {
        CriterionValue::Degenerate
    } else {
        CriterionValue::Value(det_m / denominator)
    };

    Ok(OracleCriteria {
        mean: CriterionValue::from_option(Some(mean)),
        mandel_q,
        q_ell_normal,
        q_ell_central,
        lee_dh,
        a3,
    })
}

/// Product of the row norms, an upper bound on `|det a|`.
fn hadamard_bound(a: &[[f64; 3]; 3]) -> f64 {
    a.iter().map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt()).product()
}

/// Parameters of an equivalence run.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceConfig {
    pub families: Vec<StateFamily>,
    /// Subtractions `0..=n_max` (0 is the base state itself).
    pub n_max: usize,
    /// Additions `1..=m_max`.
    pub m_max: usize,
    /// Highest factorial-moment order compared directly.
    pub x_max: usize,
    pub ell_max: usize,
    pub tol_subtract: f64,
    pub tol_add: f64,
    pub policy: CutoffPolicy,
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        Self {
            families: default_families(),
            n_max: 3,
            m_max: 4,
            x_max: 4,
            ell_max: DEFAULT_ELL_MAX,
            tol_subtract: DEFAULT_TOL_SUBTRACT,
            tol_add: DEFAULT_TOL_ADD,
            policy: CutoffPolicy::default(),
        }
    }
}

/// coherent |alpha|^2 in {0.5, 1, 2}, thermal nbar in {0.5, 1, 2},
/// squeezed r in {0.3, 0.8}, Fock 0..=4.
pub fn default_families() -> Vec<StateFamily> {
    let mut families = Vec::new();
    families.extend([0.5, 1.0, 2.0].map(|alpha_sq| StateFamily::Coherent { alpha_sq }));
    families.extend([0.5, 1.0, 2.0].map(|nbar| StateFamily::Thermal { nbar }));
    families.extend([0.3, 0.8].map(|r| StateFamily::SqueezedVacuum { r }));
    families.extend((0..=4).map(|n| StateFamily::Fock { n }));
    families
}

/// One compared quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceCell {
    pub family: &'static str,
    pub param: f64,
    pub modification: String,
    /// `m_x`, `Q`, `Q_normal_l`, `Q_central_l`, `d_h_l`, `A3` or `state`.
    pub quantity: String,
    pub x: Option<usize>,
    pub shortcut: CriterionValue,
    pub oracle: CriterionValue,
    pub deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub cells: Vec<EquivalenceCell>,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.cells.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &EquivalenceCell> {
        self.cells.iter().filter(|c| !c.passed)
    }

    /// Cell with the largest deviation relative to its tolerance.
    pub fn worst(&self) -> Option<&EquivalenceCell> {
        self.cells
            .iter()
            .max_by(|a, b| (a.deviation / a.tolerance).total_cmp(&(b.deviation / b.tolerance)))
    }

    pub fn max_deviation(&self) -> f64 {
        self.cells.iter().map(|c| c.deviation).fold(0.0, f64::max)
    }

    pub fn exact_agreement(&self) -> bool {
        self.cells.iter().all(|c| c.deviation == 0.0)
    }

    /// One comma-separated record per cell, header first.
    pub fn to_text(&self) -> String {
        let mut out = String::from("family,param,modification,quantity,x,shortcut,oracle,deviation,tolerance,status\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{:e},{:e},{}",
                c.family,
                c.param,
                c.modification,
                c.quantity,
                c.x.map(|x| x.to_string()).unwrap_or_default(),
                c.shortcut,
                c.oracle,
                c.deviation,
                c.tolerance,
                if c.passed { "pass" } else { "FAIL" }
            );
        }
        out
    }
}

/// Compares the ladder shortcuts against the brute-force path for every
/// family and modification in `config`.
pub fn equivalence_suite(config: &EquivalenceConfig) -> Result<EquivalenceReport> {
    if !(config.tol_subtract > 0.0) || !(config.tol_add > 0.0) {
        return Err(Error::InvalidArgument("tolerances must be positive".into()));
    }
    if config.ell_max == 0 {
        return Err(Error::InvalidArgument("ell_max must be at least 1".into()));
    }
    let order = required_moment_order(config.ell_max).max(config.x_max);
    let policy = config
        .policy
        .covering_order(config.n_max.max(config.m_max) + order);

    let mut jobs = Vec::new();
    for family in &config.families {
        for n in 0..=config.n_max {
            jobs.push((*family, StateModification::subtract(n)));
        }
        for m in 1..=config.m_max {
            jobs.push((*family, StateModification::add(m)));
        }
    }

    let per_job: Vec<Result<Vec<EquivalenceCell>>> = jobs
        .par_iter()
        .map(|(family, modification)| {
            let dist = family.build(&policy)?;
            compare(family, &dist, *modification, config)
        })
        .collect();
    let mut cells = Vec::new();
    for job in per_job {
        cells.extend(job?);
    }
    Ok(EquivalenceReport { cells })
}

fn compare(
    family: &StateFamily,
    dist: &NumberDistribution,
    modification: StateModification,
    config: &EquivalenceConfig,
) -> Result<Vec<EquivalenceCell>> {
    let tolerance = match modification.kind {
        ModificationKind::Add if modification.count > 0 => config.tol_add,
        _ => config.tol_subtract,
    };
    let order = required_moment_order(config.ell_max).max(config.x_max);
    let cell = |quantity: String, x: Option<usize>, shortcut: CriterionValue, oracle: CriterionValue, moment: bool| {
        let deviation = match (shortcut, oracle) {
            (CriterionValue::Value(a), CriterionValue::Value(b)) => {
                if moment {
                    relative_deviation(a, b)
                } else {
                    unit_floored_deviation(a, b)
                }
            }
            (a, b) if a == b => 0.0,
            _ => f64::INFINITY,
        };
        EquivalenceCell {
            family: family.name(),
            param: family.parameter(),
            modification: modification.to_string(),
            quantity,
            x,
            shortcut,
            oracle,
            deviation,
            tolerance,
            passed: deviation <= tolerance,
        }
    };

    let reference = match modification.kind {
        ModificationKind::Subtract => oracle_subtract(dist, modification.count, order),
        ModificationKind::Add => oracle_add(dist, modification.count, order),
    };
    let shortcut = modified_moments(dist, modification, order);
    let (reference, shortcut) = match (reference, shortcut) {
        (Err(Error::UndefinedState { .. }), Err(Error::UndefinedState { .. })) => {
            return Ok(vec![cell(
                "state".into(),
                None,
                CriterionValue::Undefined,
                CriterionValue::Undefined,
                false,
            )]);
        }
        (Err(Error::UndefinedState { .. }), Ok(_)) => {
            return Ok(vec![cell("state".into(), None, CriterionValue::Value(1.0), CriterionValue::Undefined, false)]);
        }
        (Ok(_), Err(Error::UndefinedState { .. })) => {
            return Ok(vec![cell("state".into(), None, CriterionValue::Undefined, CriterionValue::Value(1.0), false)]);
        }
        (r, s) => (r?, s?),
    };

    let mut cells = Vec::new();
    for x in 0..=config.x_max {
        cells.push(cell(
            format!("m_{x}"),
            Some(x),
            CriterionValue::Value(shortcut.values[x]),
            CriterionValue::Value(reference.moments[x]),
            true,
        ));
    }

    let report: CriteriaReport = evaluate_all(dist, modification, config.ell_max)?;
    let truth = oracle_criteria(&reference.dist, config.ell_max, crate::criteria::A3_DEGENERACY_TOL)?;
    cells.push(cell("Q".into(), None, report.mandel_q_closed_form, truth.mandel_q, false));
    cells.push(cell("Q_generic".into(), None, report.mandel_q, truth.mandel_q, false));
    for ell in 1..=config.ell_max {
        cells.push(cell(
            format!("Q_normal_{ell}"),
            None,
            report.q_ell_normal[&ell],
            truth.q_ell_normal[ell - 1],
            false,
        ));
        cells.push(cell(
            format!("Q_central_{ell}"),
            None,
            report.q_ell_central[&ell],
            truth.q_ell_central[ell - 1],
            false,
        ));
        cells.push(cell(format!("d_h_{ell}"), None, report.lee_dh[&ell], truth.lee_dh[ell - 1], false));
    }
    cells.push(cell("A3".into(), None, report.a3, truth.a3, false));
    Ok(cells)
}
