//! Correlation, intraclass correlation and tolerance agreement for scores.

use super::{clamp_unit, AgreementError, AgreementEstimate, Metric, Value};

fn check_pair<T>(x: &[T], y: &[T], min: usize) -> Result<(), AgreementError> {
    if x.len() != y.len() {
        return Err(AgreementError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.is_empty() {
        return Err(AgreementError::Empty);
    }
    if x.len() < min {
        return Err(AgreementError::TooFewUnits {
            needed: min,
            found: x.len(),
        });
    }
    Ok(())
}

fn is_constant(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[0] == w[1])
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Product-moment correlation of inputs already known to be non-constant.
fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    clamp_unit(sxy / (sxx * syy).sqrt())
}

fn correlation_estimate(metric: Metric, x: &[f64], y: &[f64]) -> AgreementEstimate {
    let value = if is_constant(x) || is_constant(y) {
        Value::undefined("zero variance")
    } else {
        Value::Defined {
            value: correlation(x, y),
        }
    };
    AgreementEstimate::new(metric, value, x.len())
}

/// Pearson's product-moment correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<AgreementEstimate, AgreementError> {
    check_pair(x, y, 2)?;
    Ok(correlation_estimate(Metric::PearsonR, x, y))
}

/// 1-based ranks, tied values sharing the mean of the ranks they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman's rank correlation: Pearson's r on average ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<AgreementEstimate, AgreementError> {
    check_pair(x, y, 2)?;
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    Ok(correlation_estimate(Metric::SpearmanRho, &rx, &ry))
}

/// ICC(2,1): two-way random effects, absolute agreement, single rater.
///
/// `ratings` is subjects × raters and must be complete; filter to complete
/// cases before calling.
pub fn icc_2_1(ratings: &[Vec<Option<f64>>]) -> Result<AgreementEstimate, AgreementError> {
    let n = ratings.len();
    if n == 0 {
        return Err(AgreementError::Empty);
    }
    let k = ratings[0].len();
    let mut grid = Vec::with_capacity(n);
    for (u, row) in ratings.iter().enumerate() {
        if row.len() != k {
            return Err(AgreementError::RaggedRaters {
                unit: u,
                expected: k,
                found: row.len(),
            });
        }
        let mut vals = Vec::with_capacity(k);
        for (r, cell) in row.iter().enumerate() {
            vals.push(cell.ok_or(AgreementError::MissingCell { unit: u, rater: r })?);
        }
        grid.push(vals);
    }
    if k < 2 {
        return Err(AgreementError::TooFewRaters { unit: 0, count: k });
    }
    if n < 2 {
        return Err(AgreementError::TooFewUnits { needed: 2, found: n });
    }

    let (nf, kf) = (n as f64, k as f64);
    let row_means: Vec<f64> = grid.iter().map(|r| mean(r)).collect();
    let col_means: Vec<f64> = (0..k)
        .map(|j| grid.iter().map(|r| r[j]).sum::<f64>() / nf)
        .collect();
    let gm = row_means.iter().sum::<f64>() / nf;

    let ss_rows = kf * row_means.iter().map(|m| (m - gm).powi(2)).sum::<f64>();
    let ss_cols = nf * col_means.iter().map(|m| (m - gm).powi(2)).sum::<f64>();
    let mut ss_err = 0.0;
    for (i, row) in grid.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            ss_err += (x - row_means[i] - col_means[j] + gm).powi(2);
        }
    }
    let ms_r = ss_rows / (nf - 1.0);
    let ms_c = ss_cols / (kf - 1.0);
    let ms_e = ss_err / ((nf - 1.0) * (kf - 1.0));

    let denom = ms_r + (kf - 1.0) * ms_e + kf * (ms_c - ms_e) / nf;
    let scale = ms_r + (kf - 1.0) * ms_e + kf * ms_c / nf;
    let all_equal = grid.iter().flatten().all(|&x| x == grid[0][0]);
    let value = if all_equal {
        Value::undefined("zero variance")
    } else if denom <= 1e-12 * scale {
        Value::undefined("zero denominator")
    } else {
        Value::Defined {
            value: (ms_r - ms_e) / denom,
        }
    };
    let mut est = AgreementEstimate::new(Metric::Icc21, value, n);
    let c = &mut est.diagnostics.components;
    c.insert("ms_rows".to_owned(), ms_r);
    c.insert("ms_cols".to_owned(), ms_c);
    c.insert("ms_error".to_owned(), ms_e);
    Ok(est)
}

fn check_scale(v: u8) -> Result<i16, AgreementError> {
    if (1..=5).contains(&v) {
        Ok(i16::from(v))
    } else {
        Err(AgreementError::OutOfScale { value: i64::from(v) })
    }
}

/// Share of positions where the two scores differ by at most `t` points.
pub fn tolerance_agreement(x: &[u8], y: &[u8], t: u32) -> Result<AgreementEstimate, AgreementError> {
    check_pair(x, y, 1)?;
    let mut within = 0usize;
    for (&a, &b) in x.iter().zip(y) {
        let d = (check_scale(a)? - check_scale(b)?).unsigned_abs();
        within += usize::from(u32::from(d) <= t);
    }
    let mut est = AgreementEstimate::new(
        Metric::Tolerance,
        Value::Defined {
            value: within as f64 / x.len() as f64,
        },
        x.len(),
    );
    est.diagnostics.tolerance = Some(t);
    Ok(est)
}

/// Tolerance agreement for any number of raters, missing scores allowed.
///
/// Each unordered rater pair contributes its within-`t` share over the units
/// both scored; the result is the mean over pairs sharing at least one unit.
pub fn tolerance_agreement_multi(
    ratings: &[Vec<Option<u8>>],
    t: u32,
) -> Result<AgreementEstimate, AgreementError> {
    if ratings.is_empty() {
        return Err(AgreementError::Empty);
    }
    let k = ratings[0].len();
    for (u, row) in ratings.iter().enumerate() {
        if row.len() != k {
            return Err(AgreementError::RaggedRaters {
                unit: u,
                expected: k,
                found: row.len(),
            });
        }
        for v in row.iter().flatten() {
            check_scale(*v)?;
        }
    }
    if k < 2 {
        return Err(AgreementError::TooFewRaters { unit: 0, count: k });
    }
    let mut shares = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let mut common = 0usize;
            let mut within = 0usize;
            for row in ratings {
                if let (Some(a), Some(b)) = (row[i], row[j]) {
                    common += 1;
                    within += usize::from(u32::from(a.abs_diff(b)) <= t);
                }
            }
            if common > 0 {
                shares.push(within as f64 / common as f64);
            }
        }
    }
    let units = ratings
        .iter()
        .filter(|r| r.iter().flatten().count() >= 2)
        .count();
    let value = if shares.is_empty() {
        Value::undefined("no rater pair shares a unit")
    } else {
        Value::Defined {
            value: mean(&shares),
        }
    };
    let mut est = AgreementEstimate::new(Metric::Tolerance, value, units);
    est.diagnostics.tolerance = Some(t);
    Ok(est)
}
