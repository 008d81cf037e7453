//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::process::Command;
use std::time::{Duration, Instant};

use nclass::criteria::{
    evaluate_family, lee_dh, mandel_q_added, mu_from_m, q_ell_central, q_ell_normal, CriteriaReport,
    CriterionValue,
};
use nclass::moment_engine::modified_moments;
use nclass::numeric::unit_floored_deviation;
use nclass::oracle::{
    default_families, direct_raw_moments, equivalence_suite, oracle_add, oracle_criteria, oracle_subtract,
    EquivalenceConfig,
};
use nclass::{
    antinormal_ladder, build_fock, evaluate_all, reorder_coefficients, CutoffPolicy, Error, NumberDistribution,
    StateFamily, StateModification,
};

const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden");

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

/// Every finite criterion value in a report, labelled.
fn criterion_values(r: &CriteriaReport) -> Vec<(String, CriterionValue)> {
    let mut out = vec![
        ("Q".to_string(), r.mandel_q),
        ("Q_closed".to_string(), r.mandel_q_closed_form),
        ("A3".to_string(), r.a3),
    ];
    for (l, v) in &r.q_ell_normal {
        out.push((format!("Q_normal_{l}"), *v));
    }
    for (l, v) in &r.q_ell_central {
        out.push((format!("Q_central_{l}"), *v));
    }
    for (k, v) in &r.lee_dh {
        out.push((format!("d_h_{k}"), *v));
    }
    out
}

/// Base states and modifications of the equivalence suite.
fn suite_states() -> Vec<(StateFamily, StateModification)> {
    let mut out = Vec::new();
    for family in default_families() {
        for n in 0..=3 {
            out.push((family, StateModification::subtract(n)));
        }
        for m in 1..=4 {
            out.push((family, StateModification::add(m)));
        }
    }
    out
}

fn suite_base(family: &StateFamily, modification: StateModification, order: usize) -> NumberDistribution {
    family
        .build(&CutoffPolicy::default().covering_order(modification.count + order))
        .expect("suite state builds")
}

fn coherent_nullity() -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0f64, String::new());
    for alpha_sq in [0.25, 0.5, 1.0, 2.0, 4.0] {
        for n in 0..=3 {
            let report = match evaluate_family(
                &StateFamily::Coherent { alpha_sq },
                StateModification::subtract(n),
                3,
                &CutoffPolicy::default(),
            ) {
                Ok(r) => r,
                Err(e) => return outcome(false, format!("|alpha|^2={alpha_sq} n={n}: {e}")),
            };
            for (name, v) in criterion_values(&report) {
                let Some(v) = v.value() else {
                    return outcome(false, format!("|alpha|^2={alpha_sq} n={n} {name} is {v}"));
                };
                if v.abs() > worst.0 {
                    worst = (v.abs(), format!("|alpha|^2={alpha_sq} n={n} {name}"));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst.0 <= 1e-9 && elapsed < Duration::from_secs(5),
        format!("max |value| {:.3e} at {}; {:.2?}", worst.0, worst.1, elapsed),
    )
}

fn thermal_fixed_points() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 1..=20 {
        let nbar = i as f64 / 10.0;
        let family = StateFamily::Thermal { nbar };
        for n in 0..=3 {
            let modification = StateModification::subtract(n);
            let report = match evaluate_family(&family, modification, 1, &CutoffPolicy::default()) {
                Ok(r) => r,
                Err(e) => return outcome(false, format!("nbar={nbar} n={n}: {e}")),
            };
            let base = suite_base(&family, modification, 4);
            let oracle = match oracle_subtract(&base, n, 4).and_then(|o| oracle_criteria(&o.dist, 1, 1e-10)) {
                Ok(o) => o,
                Err(e) => return outcome(false, format!("oracle nbar={nbar} n={n}: {e}")),
            };
            for q in [report.mandel_q, report.mandel_q_closed_form, oracle.mandel_q] {
                match q.value() {
                    Some(q) => worst = worst.max((q - nbar).abs()),
                    None => return outcome(false, format!("nbar={nbar} n={n}: Q undefined")),
                }
            }
        }
    }
    outcome(worst <= 1e-9, format!("max |Q - nbar| {worst:.3e} over nbar 0.1..2.0, n 0..3"))
}

fn fock_fixed_points() -> Outcome {
    let policy = CutoffPolicy::default();
    let mut worst_q: f64 = 0.0;
    for n in 1..=6 {
        match evaluate_all(&build_fock(n), StateModification::IDENTITY, 2) {
            Ok(r) => match r.mandel_q.value() {
                Some(q) => worst_q = worst_q.max((q + 1.0).abs()),
                None => return outcome(false, format!("Q(|{n}>) undefined")),
            },
            Err(e) => return outcome(false, format!("|{n}>: {e}")),
        }
    }
    let a3_two = evaluate_all(&build_fock(2), StateModification::IDENTITY, 2).map(|r| r.a3);
    let a3_one = evaluate_all(&build_fock(1), StateModification::IDENTITY, 2).map(|r| r.a3);
    let a3_two_ok = matches!(a3_two, Ok(CriterionValue::Value(v)) if (v + 1.0).abs() <= 1e-10);
    let a3_one_ok = a3_one == Ok(CriterionValue::Degenerate);

    let mut annihilated = true;
    for n in 0..=6 {
        let family = StateFamily::Fock { n };
        let modification = StateModification::subtract(n + 1);
        let flagged = evaluate_family(&family, modification, 2, &policy).is_ok_and(|r| r.is_undefined_state());
        let errs = matches!(
            nclass::modified_moment(&build_fock(n), modification, 1),
            Err(Error::UndefinedState { .. })
        );
        annihilated &= flagged && errs;
    }
    outcome(
        worst_q <= 1e-12 && a3_two_ok && a3_one_ok && annihilated,
        format!(
            "max |Q+1| {worst_q:.1e}; A3(|2>) {:?}; A3(|1>) {:?}; N+1 subtraction undefined: {annihilated}",
            a3_two.map(|v| v.to_string()),
            a3_one.map(|v| v.to_string())
        ),
    )
}

fn added_exactness() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for n in 0..=1 {
        let q = antinormal_ladder(&build_fock(n), 3).and_then(|l| mandel_q_added(&l, 1));
        ok &= matches!(q, Ok(q) if (q + 1.0).abs() <= 1e-12);
        details.push(format!("a†|{n}> Q = {q:?}"));
    }
    outcome(ok, details.join("; "))
}

fn suite_equivalence() -> Outcome {
    let start = Instant::now();
    let report = match equivalence_suite(&EquivalenceConfig::default()) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let elapsed = start.elapsed();
    let worst = report
        .worst()
        .map(|c| format!("{}({}) {} {} {:.3e}", c.family, c.param, c.modification, c.quantity, c.deviation))
        .unwrap_or_default();
    outcome(
        report.passed() && elapsed < Duration::from_secs(60),
        format!(
            "{} cells, {} failed; worst {worst}; {:.2?}",
            report.cells.len(),
            report.failures().count(),
            elapsed
        ),
    )
}

fn specialization_consistency() -> Outcome {
    let mut worst = (0.0f64, String::new());
    let mut undefined_pairs = 0;
    for (family, modification) in suite_states() {
        let report = match evaluate_family(&family, modification, 1, &CutoffPolicy::default()) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("{family} {modification}: {e}")),
        };
        match (report.mandel_q_closed_form.value(), report.mandel_q.value()) {
            (Some(closed), Some(generic)) => {
                let d = unit_floored_deviation(closed, generic);
                if d > worst.0 {
                    worst = (d, format!("{family} {modification}"));
                }
            }
            (None, None) => undefined_pairs += 1,
            (a, b) => return outcome(false, format!("{family} {modification}: {a:?} vs {b:?}")),
        }
    }
    outcome(
        worst.0 <= 1e-10,
        format!("max deviation {:.3e} at {}; {undefined_pairs} undefined on both", worst.0, worst.1),
    )
}

/// Square integer matrix product.
fn matmul(a: &[Vec<i128>], b: &[Vec<i128>]) -> Vec<Vec<i128>> {
    let d = a.len();
    let mut c = vec![vec![0i128; d]; d];
    for i in 0..d {
        for k in 0..d {
            if a[i][k] == 0 {
                continue;
            }
            for j in 0..d {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

fn matpow(a: &[Vec<i128>], p: usize) -> Vec<Vec<i128>> {
    let d = a.len();
    let mut out: Vec<Vec<i128>> = (0..d).map(|i| (0..d).map(|j| i128::from(i == j)).collect()).collect();
    for _ in 0..p {
        out = matmul(&out, a);
    }
    out
}

fn reordering_identity() -> Outcome {
    // In the unnormalized basis |n) = sqrt(n!)|n> the ladder operators have
    // integer matrices: a|n) = n|n-1), a†|n) = |n+1).
    const D: usize = 24;
    let mut lower = vec![vec![0i128; D]; D];
    let mut raise = vec![vec![0i128; D]; D];
    for n in 1..D {
        lower[n - 1][n] = n as i128;
        raise[n][n - 1] = 1;
    }
    let mut checked = 0;
    for x in 0..=6 {
        let lhs = matmul(&matpow(&raise, x), &matpow(&lower, x));
        let mut rhs = vec![vec![0i128; D]; D];
        for (k, c) in reorder_coefficients(x).iter().enumerate() {
            let c: i128 = c.try_into().expect("coefficient fits");
            let term = matmul(&matpow(&lower, x - k), &matpow(&raise, x - k));
            for (r, t) in rhs.iter_mut().zip(&term) {
                for (v, tv) in r.iter_mut().zip(t) {
                    *v += c * tv;
                }
            }
        }
        // truncation corrupts a^j a†^j on the top j columns
        for col in 0..D - x {
            for row in 0..D {
                if lhs[row][col] != rhs[row][col] {
                    return outcome(false, format!("x={x} entry ({row},{col}): {} vs {}", lhs[row][col], rhs[row][col]));
                }
                checked += 1;
            }
        }
    }
    outcome(true, format!("x = 0..6 on a {D}-dimensional basis, {checked} entries equal"))
}

fn ell_one_and_lee_identity() -> Outcome {
    let mut worst = (0.0f64, String::new());
    for (family, modification) in suite_states() {
        let report = match evaluate_family(&family, modification, 2, &CutoffPolicy::default()) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("{family} {modification}: {e}")),
        };
        let Some(q) = report.mandel_q.value() else {
            continue;
        };
        let moments = report.moments.as_ref().expect("defined state has moments");
        let normal = report.q_ell_normal[&1].value().unwrap_or(f64::NAN);
        let central = report.q_ell_central[&1].value().unwrap_or(f64::NAN);
        let dh = report.lee_dh[&1].value().unwrap_or(f64::NAN);
        for (name, a, b) in [
            ("Q_normal_1", normal, q),
            ("Q_central_1", central, q),
            ("d_h_1", dh, moments.m[1] * q),
        ] {
            let d = unit_floored_deviation(a, b);
            if !(d <= worst.0) {
                worst = (d, format!("{family} {modification} {name}"));
            }
        }
    }
    let fock1 = [1.0, 1.0, 0.0, 0.0, 0.0];
    let normal = q_ell_normal(&fock1, 2).ok().flatten();
    let central = mu_from_m(&fock1, 4).ok().and_then(|mu| q_ell_central(&mu, 2).ok().flatten());
    let lee_ok = lee_dh(&fock1, 2) == Ok(-1.0);
    let divergence = matches!((normal, central), (Some(n), Some(c))
        if (n + 0.75).abs() <= 1e-10 && (c + 1.0).abs() <= 1e-10);
    outcome(
        worst.0 <= 1e-12 && divergence && lee_ok,
        format!(
            "max deviation {:.3e} at {}; |1> at ell=2: normal {normal:?}, central {central:?}",
            worst.0, worst.1
        ),
    )
}

fn stirling_conversion() -> Outcome {
    let mut worst = (0.0f64, String::new());
    for (family, modification) in suite_states() {
        let base = suite_base(&family, modification, 6);
        let shortcut = match modified_moments(&base, modification, 6) {
            Ok(m) => m.values,
            Err(Error::UndefinedState { .. }) => continue,
            Err(e) => return outcome(false, format!("{family} {modification}: {e}")),
        };
        let oracle = match modification.kind {
            nclass::ModificationKind::Subtract => oracle_subtract(&base, modification.count, 6),
            nclass::ModificationKind::Add => oracle_add(&base, modification.count, 6),
        };
        let oracle = match oracle {
            Ok(o) => o,
            Err(e) => return outcome(false, format!("oracle {family} {modification}: {e}")),
        };
        let mu = match mu_from_m(&shortcut, 6) {
            Ok(mu) => mu,
            Err(e) => return outcome(false, e.to_string()),
        };
        let direct = direct_raw_moments(&oracle.dist, 6);
        for z in 0..=6 {
            let d = nclass::numeric::relative_deviation(mu[z], direct[z]);
            if !(d <= worst.0) {
                worst = (d, format!("{family} {modification} z={z}"));
            }
        }
    }
    outcome(worst.0 <= 1e-10, format!("max relative deviation {:.3e} at {}", worst.0, worst.1))
}

fn nclass(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_nclass"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Equal line by line; numeric fields may differ in the last few ulps.
fn matches_golden(actual: &str, golden: &str) -> bool {
    let (a, g): (Vec<_>, Vec<_>) = (actual.lines().collect(), golden.lines().collect());
    a.len() == g.len()
        && a.iter().zip(&g).all(|(a, g)| {
            let (fa, fg): (Vec<_>, Vec<_>) = (a.split(',').collect(), g.split(',').collect());
            fa.len() == fg.len()
                && fa.iter().zip(&fg).all(|(x, y)| {
                    x == y
                        || matches!((x.parse::<f64>(), y.parse::<f64>()),
                            (Ok(x), Ok(y)) if unit_floored_deviation(x, y) <= 1e-13)
                })
        })
}

fn cli_contract() -> Outcome {
    let mut problems = Vec::new();
    let golden_runs: [(&[&str], &str, i32); 3] = [
        (
            &["criteria", "--family", "fock", "--param", "3", "--subtract", "1"],
            "criteria_fock3_subtract1.csv",
            0,
        ),
        (
            &[
                "sweep", "--family", "thermal", "--param-range", "0.5:2:0.5", "--subtract", "2", "--criteria",
                "Q,d_h", "--ell-max", "2",
            ],
            "sweep_thermal_subtract2.csv",
            0,
        ),
        (&["selfcheck", "--families", "fock"], "selfcheck_fock.txt", 0),
    ];
    for (args, file, code) in golden_runs {
        let first = nclass(args);
        let second = nclass(args);
        let golden = std::fs::read_to_string(format!("{GOLDEN}/{file}")).expect("golden file present");
        let text = String::from_utf8_lossy(&first.stdout);
        if first.status.code() != Some(code) {
            problems.push(format!("{file}: exit {:?}", first.status.code()));
        }
        if first.stdout != second.stdout {
            problems.push(format!("{file}: repeat run differs"));
        }
        if !matches_golden(&text, &golden) {
            problems.push(format!("{file}: differs from golden"));
        }
    }
    let exit_checks: [(&[&str], i32); 4] = [
        (&["criteria", "--family", "thermal", "--param", "1", "--add", "1"], 0),
        (&["criteria", "--family", "thermal"], 1),
        (&["criteria", "--family", "fock", "--param", "1", "--subtract", "2"], 2),
        (&["selfcheck", "--families", "coherent", "--tol", "1e-18"], 4),
    ];
    for (args, code) in exit_checks {
        let o = nclass(args);
        if o.status.code() != Some(code) {
            problems.push(format!("{args:?}: exit {:?}, expected {code}", o.status.code()));
        }
    }
    let annihilated = nclass(&["criteria", "--family", "fock", "--param", "1", "--subtract", "2"]);
    if !String::from_utf8_lossy(&annihilated.stderr).contains("state annihilated") {
        problems.push("undefined state message missing".into());
    }
    if problems.is_empty() {
        outcome(true, "golden outputs, repeat runs and exit codes 0/1/2/4 as expected")
    } else {
        outcome(false, problems.join("; "))
    }
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 10] = [
        ("coherent nullity", coherent_nullity),
        ("thermal fixed points", thermal_fixed_points),
        ("fock fixed points", fock_fixed_points),
        ("photon-added exactness", added_exactness),
        ("shortcut-oracle equivalence", suite_equivalence),
        ("specialization consistency", specialization_consistency),
        ("reordering identity", reordering_identity),
        ("ell=1 coincidence and d_h identity", ell_one_and_lee_identity),
        ("stirling conversion", stirling_conversion),
        ("cli contract", cli_contract),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let result = check();
        println!("{} {name}: {}", if result.passed { "PASS" } else { "FAIL" }, result.detail);
        failed += usize::from(!result.passed);
    }
    println!("acceptance: {} of {} passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
