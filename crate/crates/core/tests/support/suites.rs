//! Randomized comparison and invariance runs shared by the test targets.
//!
//! Needs `mod oracle;` declared next to it.

#![allow(dead_code)]

use fmeca_core::agreement::{
    cohen_kappa, fleiss_kappa, gwet_ac1, icc_2_1, krippendorff_alpha, pearson_r, spearman_rho,
    tolerance_agreement, tolerance_agreement_multi, unanimity_rate, AgreementEstimate,
};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use super::oracle;

pub const TOL: f64 = 1e-12;

#[derive(Debug, Default)]
pub struct Outcome {
    pub cases: usize,
    pub checks: usize,
    /// Checks where both sides produced a number.
    pub defined: usize,
    pub max_delta: f64,
    pub failures: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn compare(&mut self, what: &str, got: Option<f64>, want: Option<f64>, tol: f64) {
        self.checks += 1;
        match (got, want) {
            (Some(g), Some(w)) => {
                self.defined += 1;
                let d = (g - w).abs();
                self.max_delta = self.max_delta.max(d);
                if d.is_nan() || d > tol {
                    self.failures.push(format!("{what}: got {g}, want {w} (|Δ| = {d:e})"));
                }
            }
            (None, None) => {}
            (g, w) => self.failures.push(format!("{what}: got {g:?}, want {w:?}")),
        }
    }
}

fn val(r: Result<AgreementEstimate, impl std::fmt::Debug>) -> Option<f64> {
    r.expect("well-formed input").value()
}

/// Draws from `0..cats` with the first category dominating by a random margin.
fn skewed(rng: &mut StdRng, cats: u8, p_major: f64) -> u8 {
    if rng.gen_bool(p_major) {
        0
    } else {
        rng.gen_range(0..cats)
    }
}

pub struct Nominal {
    pub rows: Vec<Vec<u8>>,
    pub cats: u8,
}

pub fn nominal_matrix(rng: &mut StdRng, raters: usize) -> Nominal {
    let n = rng.gen_range(2..=10);
    let cats = rng.gen_range(2..=4);
    let p = rng.gen_range(0.0..0.95);
    let rows = (0..n)
        .map(|_| (0..raters).map(|_| skewed(rng, cats, p)).collect())
        .collect();
    Nominal { rows, cats }
}

/// Scores 1-5 clustered around a per-unit level, so ties are common.
pub fn ordinal_matrix(rng: &mut StdRng, raters: usize) -> Vec<Vec<u8>> {
    let n = rng.gen_range(2..=10);
    let spread = rng.gen_range(0..=2i32);
    (0..n)
        .map(|_| {
            let level: i32 = rng.gen_range(1..=5);
            (0..raters)
                .map(|_| (level + rng.gen_range(-spread..=spread)).clamp(1, 5) as u8)
                .collect()
        })
        .collect()
}

fn some_rows(rows: &[Vec<u8>]) -> Vec<Vec<Option<u8>>> {
    rows.iter().map(|r| r.iter().map(|&v| Some(v)).collect()).collect()
}

/// Drops at most one rating per unit, keeping every unit pairable.
fn with_gaps(rng: &mut StdRng, rows: &[Vec<u8>]) -> Vec<Vec<Option<u8>>> {
    rows.iter()
        .map(|r| {
            let drop = if rng.gen_bool(0.3) { Some(rng.gen_range(0..r.len())) } else { None };
            r.iter()
                .enumerate()
                .map(|(i, &v)| if Some(i) == drop { None } else { Some(v) })
                .collect()
        })
        .collect()
}

fn col(rows: &[Vec<u8>], j: usize) -> Vec<u8> {
    rows.iter().map(|r| r[j]).collect()
}

fn f(xs: &[u8]) -> Vec<f64> {
    xs.iter().map(|&v| f64::from(v)).collect()
}

fn frows(rows: &[Vec<u8>]) -> Vec<Vec<Option<f64>>> {
    rows.iter().map(|r| r.iter().map(|&v| Some(f64::from(v))).collect()).collect()
}

/// Every coefficient against its exact oracle on `cases` random 3-rater matrices.
pub fn oracle_suite(seed: u64, cases: usize) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Outcome { cases, ..Outcome::default() };
    let pairs = [(0, 1), (0, 2), (1, 2)];
    for case in 0..cases {
        let nom = nominal_matrix(&mut rng, 3);
        let rows = &nom.rows;
        let opt = some_rows(rows);
        let gappy = with_gaps(&mut rng, rows);
        let tag = |m: &str| format!("case {case} {m} on {rows:?}");
        for &(i, j) in &pairs {
            let (a, b) = (col(rows, i), col(rows, j));
            out.compare(&tag("cohen_kappa"), val(cohen_kappa(&a, &b)), oracle::cohen(&a, &b).map(oracle::to_f64), TOL);
        }
        out.compare(&tag("gwet_ac1"), val(gwet_ac1(&opt)), oracle::ac1(&opt, &[]).map(oracle::to_f64), TOL);
        out.compare(
            &tag("gwet_ac1 with gaps"),
            val(gwet_ac1(&gappy)),
            oracle::ac1(&gappy, &[]).map(oracle::to_f64),
            TOL,
        );
        out.compare(&tag("fleiss_kappa"), val(fleiss_kappa(&opt)), oracle::fleiss(rows).map(oracle::to_f64), TOL);
        out.compare(
            &tag("krippendorff_alpha"),
            val(krippendorff_alpha(&opt)),
            oracle::krippendorff(&opt).map(oracle::to_f64),
            TOL,
        );
        out.compare(
            &tag("krippendorff_alpha with gaps"),
            val(krippendorff_alpha(&gappy)),
            oracle::krippendorff(&gappy).map(oracle::to_f64),
            TOL,
        );
        out.compare(
            &tag("unanimity"),
            val(unanimity_rate(&opt)),
            Some(oracle::to_f64(oracle::unanimity(rows))),
            TOL,
        );

        let ord = ordinal_matrix(&mut rng, 3);
        let tag = |m: &str| format!("case {case} {m} on {ord:?}");
        for &(i, j) in &pairs {
            let (x, y) = (col(&ord, i), col(&ord, j));
            out.compare(&tag("pearson_r"), val(pearson_r(&f(&x), &f(&y))), oracle::pearson(&x, &y), TOL);
            out.compare(&tag("spearman_rho"), val(spearman_rho(&f(&x), &f(&y))), oracle::spearman(&x, &y), TOL);
            for t in 0..=2u8 {
                out.compare(
                    &tag(&format!("tolerance t={t}")),
                    val(tolerance_agreement(&x, &y, t.into())),
                    Some(oracle::to_f64(oracle::tolerance(&x, &y, t))),
                    TOL,
                );
            }
        }
        out.compare(&tag("icc_2_1"), val(icc_2_1(&frows(&ord))), oracle::icc21(&ord).map(oracle::to_f64), TOL);
    }
    out
}

fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        (None, None) => true,
        _ => false,
    }
}

fn check(out: &mut Outcome, what: &str, a: Option<f64>, b: Option<f64>, tol: f64) {
    out.checks += 1;
    if let (Some(x), Some(y)) = (a, b) {
        out.max_delta = out.max_delta.max((x - y).abs());
    }
    if !close(a, b, tol) {
        out.failures.push(format!("{what}: {a:?} vs {b:?}"));
    }
}

/// Nominal coefficients do not depend on the names of the categories.
pub fn relabel_invariance(seed: u64, cases: usize) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Outcome { cases, ..Outcome::default() };
    for case in 0..cases {
        let nom = nominal_matrix(&mut rng, 3);
        let mut perm: Vec<u8> = (0..nom.cats).map(|c| 10 + 7 * c).collect();
        perm.shuffle(&mut rng);
        let relabeled: Vec<Vec<u8>> = nom.rows.iter().map(|r| r.iter().map(|&v| perm[v as usize]).collect()).collect();
        let (a, b) = (some_rows(&nom.rows), some_rows(&relabeled));
        let tag = format!("case {case} {:?}", nom.rows);
        check(&mut out, &format!("{tag} kappa"), val(cohen_kappa(&col(&nom.rows, 0), &col(&nom.rows, 1))), val(cohen_kappa(&col(&relabeled, 0), &col(&relabeled, 1))), TOL);
        check(&mut out, &format!("{tag} ac1"), val(gwet_ac1(&a)), val(gwet_ac1(&b)), TOL);
        check(&mut out, &format!("{tag} fleiss"), val(fleiss_kappa(&a)), val(fleiss_kappa(&b)), TOL);
        check(&mut out, &format!("{tag} alpha"), val(krippendorff_alpha(&a)), val(krippendorff_alpha(&b)), TOL);
        check(&mut out, &format!("{tag} unanimity"), val(unanimity_rate(&a)), val(unanimity_rate(&b)), TOL);
    }
    out
}

/// ICC and Pearson are unchanged by x -> a·x + b with a > 0.
pub fn affine_invariance(seed: u64, cases: usize) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Outcome { cases, ..Outcome::default() };
    for case in 0..cases {
        let ord = ordinal_matrix(&mut rng, 3);
        let a = rng.gen_range(0.1..10.0);
        let b = rng.gen_range(-10.0..10.0);
        let g = |v: f64| a * v + b;
        let x = f(&col(&ord, 0));
        let y = f(&col(&ord, 1));
        let tx: Vec<f64> = x.iter().map(|&v| g(v)).collect();
        let ty: Vec<f64> = y.iter().map(|&v| g(v)).collect();
        let tag = format!("case {case} a={a} b={b} {ord:?}");
        // the transformed inputs are inexact, so allow rounding slack
        check(&mut out, &format!("{tag} pearson"), val(pearson_r(&x, &y)), val(pearson_r(&tx, &ty)), 1e-9);
        let rows = frows(&ord);
        let trows: Vec<Vec<Option<f64>>> =
            rows.iter().map(|r| r.iter().map(|v| v.map(g)).collect()).collect();
        check(&mut out, &format!("{tag} icc"), val(icc_2_1(&rows)), val(icc_2_1(&trows)), 1e-9);
    }
    out
}

/// Spearman's rho only sees the order of the values.
pub fn monotone_invariance(seed: u64, cases: usize) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Outcome { cases, ..Outcome::default() };
    let transforms: [fn(f64) -> f64; 3] = [|v| v.exp(), |v| v * v * v + v, |v| (v + 1.0).ln()];
    for case in 0..cases {
        let ord = ordinal_matrix(&mut rng, 2);
        let x = f(&col(&ord, 0));
        let y = f(&col(&ord, 1));
        let t = transforms[case % transforms.len()];
        let tx: Vec<f64> = x.iter().map(|&v| t(v)).collect();
        check(&mut out, &format!("case {case} {ord:?}"), val(spearman_rho(&x, &y)), val(spearman_rho(&tx, &y)), TOL);
    }
    out
}

/// Reordering the rater columns changes nothing.
pub fn rater_permutation_invariance(seed: u64, cases: usize) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Outcome { cases, ..Outcome::default() };
    for case in 0..cases {
        let mut order = vec![0, 1, 2];
        order.shuffle(&mut rng);
        let perm = |rows: &[Vec<u8>]| -> Vec<Vec<u8>> { rows.iter().map(|r| order.iter().map(|&j| r[j]).collect()).collect() };
        let nom = nominal_matrix(&mut rng, 3);
        let (a, b) = (some_rows(&nom.rows), some_rows(&perm(&nom.rows)));
        let tag = format!("case {case} order {order:?} {:?}", nom.rows);
        let (c0, c1) = (col(&nom.rows, 0), col(&nom.rows, 1));
        check(&mut out, &format!("{tag} kappa swap"), val(cohen_kappa(&c0, &c1)), val(cohen_kappa(&c1, &c0)), TOL);
        check(&mut out, &format!("{tag} ac1"), val(gwet_ac1(&a)), val(gwet_ac1(&b)), TOL);
        check(&mut out, &format!("{tag} fleiss"), val(fleiss_kappa(&a)), val(fleiss_kappa(&b)), TOL);
        check(&mut out, &format!("{tag} alpha"), val(krippendorff_alpha(&a)), val(krippendorff_alpha(&b)), TOL);
        check(&mut out, &format!("{tag} unanimity"), val(unanimity_rate(&a)), val(unanimity_rate(&b)), TOL);
        let ord = ordinal_matrix(&mut rng, 3);
        check(&mut out, &format!("{tag} icc {ord:?}"), val(icc_2_1(&frows(&ord))), val(icc_2_1(&frows(&perm(&ord)))), TOL);
        check(
            &mut out,
            &format!("{tag} tolerance {ord:?}"),
            val(tolerance_agreement_multi(&some_rows(&ord), 1)),
            val(tolerance_agreement_multi(&some_rows(&perm(&ord)), 1)),
            TOL,
        );
    }
    out
}

/// Widening the tolerance never lowers agreement; t = 4 covers the whole scale.
pub fn tolerance_monotonicity(seed: u64, cases: usize) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Outcome { cases, ..Outcome::default() };
    for case in 0..cases {
        let ord = ordinal_matrix(&mut rng, 3);
        let rows = some_rows(&ord);
        let shares: Vec<f64> = (0..=4)
            .map(|t| val(tolerance_agreement_multi(&rows, t)).expect("complete matrix"))
            .collect();
        out.checks += 1;
        if shares.windows(2).any(|w| w[1] < w[0]) || shares[4] != 1.0 {
            out.failures.push(format!("case {case} {ord:?}: {shares:?}"));
        }
    }
    out
}
