//! Textbook definitions in exact rational arithmetic.
//!
//! Written independently of the library: nominal statistics go through
//! proportions and coincidence matrices, ICC through sums of squares.
//! `None` means the statistic is undefined on that input.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;

pub type Q = Ratio<i128>;

fn q(n: i128) -> Q {
    Q::from_integer(n)
}

fn frac(n: usize, d: usize) -> Q {
    Q::new(n as i128, d as i128)
}

pub fn to_f64(x: Q) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

/// (p_o - p_e) / (1 - p_e), undefined when p_e = 1.
fn chance_corrected(po: Q, pe: Q) -> Option<Q> {
    if pe == q(1) {
        None
    } else {
        Some((po - pe) / (q(1) - pe))
    }
}

pub fn cohen(a: &[u8], b: &[u8]) -> Option<Q> {
    let n = a.len();
    let po = frac(a.iter().zip(b).filter(|(x, y)| x == y).count(), n);
    let cats: BTreeSet<u8> = a.iter().chain(b).copied().collect();
    let pe = cats
        .iter()
        .map(|c| frac(a.iter().filter(|x| *x == c).count(), n) * frac(b.iter().filter(|x| *x == c).count(), n))
        .fold(q(0), |s, x| s + x);
    chance_corrected(po, pe)
}

/// Multi-rater AC1 with missing ratings; every unit has at least 2 ratings.
pub fn ac1(rows: &[Vec<Option<u8>>], categories: &[u8]) -> Option<Q> {
    let mut cats: BTreeSet<u8> = categories.iter().copied().collect();
    cats.extend(rows.iter().flatten().flatten().copied());
    let k = cats.len();
    if k < 2 {
        return None;
    }
    let n = rows.len();
    let mut po = q(0);
    let mut pi: BTreeMap<u8, Q> = BTreeMap::new();
    for row in rows {
        let vals: Vec<u8> = row.iter().flatten().copied().collect();
        let r = vals.len();
        for &c in &cats {
            let rc = vals.iter().filter(|&&v| v == c).count();
            po += frac(rc * rc.saturating_sub(1), r * (r - 1));
            *pi.entry(c).or_insert(q(0)) += frac(rc, r);
        }
    }
    po /= q(n as i128);
    let pe = pi
        .values()
        .map(|&s| {
            let p = s / q(n as i128);
            p * (q(1) - p)
        })
        .fold(q(0), |s, x| s + x)
        / q(k as i128 - 1);
    chance_corrected(po, pe)
}

/// Fleiss' kappa on a complete matrix.
pub fn fleiss(rows: &[Vec<u8>]) -> Option<Q> {
    let n = rows.len();
    let m = rows[0].len();
    let cats: BTreeSet<u8> = rows.iter().flatten().copied().collect();
    let mut pbar = q(0);
    for row in rows {
        let s: usize = cats
            .iter()
            .map(|c| {
                let nc = row.iter().filter(|v| *v == c).count();
                nc * nc.saturating_sub(1)
            })
            .sum();
        pbar += frac(s, m * (m - 1));
    }
    pbar /= q(n as i128);
    let pe = cats
        .iter()
        .map(|c| {
            let p = frac(rows.iter().flatten().filter(|v| *v == c).count(), n * m);
            p * p
        })
        .fold(q(0), |s, x| s + x);
    chance_corrected(pbar, pe)
}

/// Nominal Krippendorff's alpha through the coincidence matrix.
pub fn krippendorff(rows: &[Vec<Option<u8>>]) -> Option<Q> {
    let mut o: BTreeMap<(u8, u8), Q> = BTreeMap::new();
    for row in rows {
        let vals: Vec<u8> = row.iter().flatten().copied().collect();
        let m = vals.len();
        if m < 2 {
            continue;
        }
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    *o.entry((vals[i], vals[j])).or_insert(q(0)) += Q::new(1, m as i128 - 1);
                }
            }
        }
    }
    let mut nc: BTreeMap<u8, Q> = BTreeMap::new();
    for (&(c, _), &v) in &o {
        *nc.entry(c).or_insert(q(0)) += v;
    }
    let n: Q = nc.values().fold(q(0), |s, &x| s + x);
    let d_o: Q = o.iter().filter(|((c, k), _)| c != k).fold(q(0), |s, (_, &v)| s + v) / n;
    let mut d_e = q(0);
    for (&c, &a) in &nc {
        for (&k, &b) in &nc {
            if c != k {
                d_e += a * b;
            }
        }
    }
    if n <= q(1) {
        return None;
    }
    d_e /= n * (n - q(1));
    if d_e == q(0) {
        None
    } else {
        Some(q(1) - d_o / d_e)
    }
}

pub fn unanimity(rows: &[Vec<u8>]) -> Q {
    frac(rows.iter().filter(|r| r.iter().all(|v| *v == r[0])).count(), rows.len())
}

/// Exact (cov, var_x, var_y) up to a common factor.
fn moments(x: &[Q], y: &[Q]) -> (Q, Q, Q) {
    let n = q(x.len() as i128);
    let mx = x.iter().fold(q(0), |s, &v| s + v) / n;
    let my = y.iter().fold(q(0), |s, &v| s + v) / n;
    let mut sxy = q(0);
    let mut sxx = q(0);
    let mut syy = q(0);
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxy, sxx, syy)
}

fn correlation(x: &[Q], y: &[Q]) -> Option<f64> {
    let (sxy, sxx, syy) = moments(x, y);
    if sxx == q(0) || syy == q(0) {
        return None;
    }
    // r² is exact; only the final square root is inexact
    let r2 = sxy * sxy / (sxx * syy);
    Some(to_f64(r2).sqrt().copysign(to_f64(sxy)))
}

pub fn pearson(x: &[u8], y: &[u8]) -> Option<f64> {
    let xq: Vec<Q> = x.iter().map(|&v| q(v.into())).collect();
    let yq: Vec<Q> = y.iter().map(|&v| q(v.into())).collect();
    correlation(&xq, &yq)
}

/// Rank of each value: 1 + number of smaller values + half the other ties.
pub fn ranks(x: &[u8]) -> Vec<Q> {
    x.iter()
        .map(|v| {
            let below = x.iter().filter(|w| *w < v).count() as i128;
            let ties = x.iter().filter(|w| *w == v).count() as i128;
            q(below) + Q::new(ties + 1, 2)
        })
        .collect()
}

pub fn spearman(x: &[u8], y: &[u8]) -> Option<f64> {
    correlation(&ranks(x), &ranks(y))
}

/// ICC(2,1) from two-way ANOVA sums of squares.
pub fn icc21(rows: &[Vec<u8>]) -> Option<Q> {
    let n = rows.len() as i128;
    let k = rows[0].len() as i128;
    let x = |i: usize, j: usize| q(rows[i][j].into());
    let total = rows.iter().flatten().fold(q(0), |s, &v| s + q(v.into()));
    let gm = total / q(n * k);
    let row_mean = |i: usize| (0..k as usize).fold(q(0), |s, j| s + x(i, j)) / q(k);
    let col_mean = |j: usize| (0..n as usize).fold(q(0), |s, i| s + x(i, j)) / q(n);
    let ssr = (0..n as usize).fold(q(0), |s, i| s + (row_mean(i) - gm) * (row_mean(i) - gm)) * q(k);
    let ssc = (0..k as usize).fold(q(0), |s, j| s + (col_mean(j) - gm) * (col_mean(j) - gm)) * q(n);
    let sst = rows.iter().flatten().fold(q(0), |s, &v| s + (q(v.into()) - gm) * (q(v.into()) - gm));
    if sst == q(0) {
        return None;
    }
    let sse = sst - ssr - ssc;
    let msr = ssr / q(n - 1);
    let msc = ssc / q(k - 1);
    let mse = sse / q((n - 1) * (k - 1));
    let denom = msr + q(k - 1) * mse + q(k) * (msc - mse) / q(n);
    if denom == q(0) {
        None
    } else {
        Some((msr - mse) / denom)
    }
}

pub fn tolerance(x: &[u8], y: &[u8], t: u8) -> Q {
    frac(x.iter().zip(y).filter(|(a, b)| a.abs_diff(**b) <= t).count(), x.len())
}
