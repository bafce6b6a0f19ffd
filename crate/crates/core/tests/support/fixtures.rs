//! Small hand-checkable datasets with their expected coefficients.

#![allow(dead_code)]

use fmeca_core::agreement::{cohen_kappa, fleiss_kappa, gwet_ac1, icc_2_1, krippendorff_alpha, spearman_rho};

/// Expands a 2×2 yes/no contingency table into two rating vectors (1 = yes).
pub fn from_table(both_yes: usize, a_only: usize, b_only: usize, both_no: usize) -> (Vec<u8>, Vec<u8>) {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (n, x, y) in [(both_yes, 1, 1), (a_only, 1, 0), (b_only, 0, 1), (both_no, 0, 0)] {
        a.extend(std::iter::repeat_n(x, n));
        b.extend(std::iter::repeat_n(y, n));
    }
    (a, b)
}

pub fn rows(data: &[&[u8]]) -> Vec<Vec<Option<u8>>> {
    data.iter().map(|r| r.iter().map(|&v| Some(v)).collect()).collect()
}

pub struct Worked {
    pub name: &'static str,
    pub got: f64,
    pub want: f64,
    pub tol: f64,
}

/// Library values on the five worked fixtures.
///
/// Expected values by hand: κ from pₒ = 0.7, pₑ = 0.5; Fleiss from
/// P̄ = 2/3, P̄ₑ = 1/2; α from D_o = 0.25, D_e = 30/56; ICC from
/// MS_R = 13/6, MS_C = 0, MS_E = 1/2; ρ from Σd² = 2 with n = 4.
pub fn worked_values() -> Vec<Worked> {
    let (a, b) = from_table(20, 5, 10, 15);
    let kappa = cohen_kappa(&a, &b).unwrap().value().unwrap();
    let fleiss = fleiss_kappa(&rows(&[&[1, 1, 1], &[0, 0, 0], &[1, 1, 0], &[1, 0, 0]]))
        .unwrap()
        .value()
        .unwrap();
    let alpha = krippendorff_alpha(&rows(&[&[1, 1], &[0, 0], &[1, 0], &[0, 0]]))
        .unwrap()
        .value()
        .unwrap();
    let grid: Vec<Vec<Option<f64>>> = [[2.0, 3.0], [4.0, 4.0], [5.0, 4.0]]
        .iter()
        .map(|r| r.iter().map(|&v| Some(v)).collect())
        .collect();
    let icc = icc_2_1(&grid).unwrap().value().unwrap();
    let rho = spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap().value().unwrap();
    let icc_hand = (13.0 / 6.0 - 0.5) / (13.0 / 6.0 + 0.5 + 2.0 * (0.0 - 0.5) / 3.0);
    vec![
        Worked { name: "cohen_kappa 50-item table", got: kappa, want: (0.7 - 0.5) / (1.0 - 0.5), tol: 1e-12 },
        Worked { name: "fleiss_kappa 4x3", got: fleiss, want: (2.0 / 3.0 - 0.5) / (1.0 - 0.5), tol: 1e-12 },
        Worked { name: "krippendorff_alpha 4-unit", got: alpha, want: 0.5333, tol: 5e-5 },
        Worked { name: "icc_2_1 3x2", got: icc, want: 0.7143, tol: 5e-5 },
        Worked { name: "icc_2_1 3x2 exact", got: icc, want: icc_hand, tol: 1e-12 },
        Worked { name: "spearman_rho ranks", got: rho, want: 1.0 - 6.0 * 2.0 / (4.0 * 15.0), tol: 1e-12 },
    ]
}

/// 100 units, both raters say "yes" on 2, disagree on 2, "no" on 96.
pub fn paradox_dataset() -> (Vec<u8>, Vec<u8>) {
    from_table(2, 1, 1, 96)
}

/// (κ, AC1) on [`paradox_dataset`].
pub fn paradox() -> (f64, f64) {
    let (a, b) = paradox_dataset();
    let k = cohen_kappa(&a, &b).unwrap().value().unwrap();
    let m: Vec<Vec<Option<u8>>> = a.iter().zip(&b).map(|(&x, &y)| vec![Some(x), Some(y)]).collect();
    let ac1 = gwet_ac1(&m).unwrap().value().unwrap();
    (k, ac1)
}

/// Three questionnaires scoring 87.5, 77.5 and 72.5.
pub const SUS_CSV: &str = "\
evaluator_id,q1,q2,q3,q4,q5,q6,q7,q8,q9,q10
# contributions 35, 31 and 29 out of 40
e1,5,1,5,1,5,1,5,3,5,4
e2,5,2,5,2,5,2,4,3,4,3
e3,4,2,4,2,4,2,4,3,5,3
";
