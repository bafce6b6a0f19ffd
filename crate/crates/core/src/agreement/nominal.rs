//! Chance-corrected agreement for categorical ratings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;

use super::{AgreementError, AgreementEstimate, Metric, Value};

/// Per-category counts of one unit, skipping missing ratings.
fn unit_counts<C: Ord>(row: &[Option<C>]) -> BTreeMap<&C, u64> {
    let mut counts = BTreeMap::new();
    for c in row.iter().flatten() {
        *counts.entry(c).or_insert(0) += 1;
    }
    counts
}

fn prevalence_map<C: Display>(totals: &BTreeMap<&C, u64>, n: u64) -> BTreeMap<String, f64> {
    totals
        .iter()
        .map(|(c, &k)| (c.to_string(), k as f64 / n as f64))
        .collect()
}

/// Cohen's kappa for two raters.
///
/// `κ = (pₒ − pₑ) / (1 − pₑ)` with `pₑ` the sum over categories of the product
/// of both raters' marginal proportions. Undefined when `pₑ = 1`, i.e. both
/// raters used the same single category throughout.
pub fn cohen_kappa<C: Ord + Display>(a: &[C], b: &[C]) -> Result<AgreementEstimate, AgreementError> {
    if a.len() != b.len() {
        return Err(AgreementError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(AgreementError::Empty);
    }
    let n = a.len() as u64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as u64;

    let mut marginals: BTreeMap<&C, (u64, u64)> = BTreeMap::new();
    for c in a {
        marginals.entry(c).or_default().0 += 1;
    }
    for c in b {
        marginals.entry(c).or_default().1 += 1;
    }
    // n² · pₑ, exact
    let chance: u64 = marginals.values().map(|(x, y)| x * y).sum();
    let n2 = n * n;

    let po = agree as f64 / n as f64;
    let pe = chance as f64 / n2 as f64;
    let value = if chance == n2 {
        Value::undefined("pₑ = 1")
    } else {
        let num = i128::from(agree * n) - i128::from(chance);
        let den = i128::from(n2) - i128::from(chance);
        Value::Defined {
            value: num as f64 / den as f64,
        }
    };

    let mut est = AgreementEstimate::new(Metric::CohenKappa, value, a.len());
    est.diagnostics.observed_agreement = Some(po);
    est.diagnostics.expected_agreement = Some(pe);
    est.diagnostics.prevalence = marginals
        .iter()
        .map(|(c, (x, y))| (c.to_string(), (x + y) as f64 / (2 * n) as f64))
        .collect();
    Ok(est)
}

/// Gwet's AC1 over the categories observed in `ratings`.
///
/// See [`gwet_ac1_with_categories`].
pub fn gwet_ac1<C: Ord + Clone + Display>(
    ratings: &[Vec<Option<C>>],
) -> Result<AgreementEstimate, AgreementError> {
    gwet_ac1_with_categories(ratings, &[])
}

/// Gwet's AC1 for any number of raters, missing ratings allowed.
///
/// `pₒ` is the mean over units of the share of agreeing rater pairs;
/// `pₑ = Σₖ πₖ(1 − πₖ) / (q − 1)` where `πₖ` is the mean share of a unit's
/// ratings in category `k` and `q` counts the categories in `categories`
/// together with any observed ones. Passing the full category set matters for
/// binary data where one category may never be used. Every unit needs at
/// least two ratings.
pub fn gwet_ac1_with_categories<C: Ord + Clone + Display>(
    ratings: &[Vec<Option<C>>],
    categories: &[C],
) -> Result<AgreementEstimate, AgreementError> {
    if ratings.is_empty() {
        return Err(AgreementError::Empty);
    }
    let mut universe: BTreeSet<&C> = categories.iter().collect();
    let mut pi: BTreeMap<&C, f64> = BTreeMap::new();
    let mut po_sum = 0.0;
    for (u, row) in ratings.iter().enumerate() {
        let counts = unit_counts(row);
        let r: u64 = counts.values().sum();
        if r < 2 {
            return Err(AgreementError::TooFewRaters {
                unit: u,
                count: r as usize,
            });
        }
        let pairs: u64 = counts.values().map(|k| k * (k - 1)).sum();
        po_sum += pairs as f64 / (r * (r - 1)) as f64;
        for (c, k) in counts {
            universe.insert(c);
            *pi.entry(c).or_insert(0.0) += k as f64 / r as f64;
        }
    }
    let n = ratings.len() as f64;
    let po = po_sum / n;
    for p in pi.values_mut() {
        *p /= n;
    }
    let q = universe.len();

    let mut est;
    if q < 2 {
        est = AgreementEstimate::new(
            Metric::GwetAc1,
            Value::undefined("fewer than 2 categories"),
            ratings.len(),
        );
    } else {
        let pe = pi.values().map(|p| p * (1.0 - p)).sum::<f64>() / (q - 1) as f64;
        est = AgreementEstimate::new(
            Metric::GwetAc1,
            Value::Defined {
                value: (po - pe) / (1.0 - pe),
            },
            ratings.len(),
        );
        est.diagnostics.expected_agreement = Some(pe);
    }
    est.diagnostics.observed_agreement = Some(po);
    est.diagnostics.prevalence = universe
        .iter()
        .map(|c| (c.to_string(), pi.get(c).copied().unwrap_or(0.0)))
        .collect();
    Ok(est)
}

/// Fleiss' kappa; every unit must carry the same number `n ≥ 2` of ratings.
pub fn fleiss_kappa<C: Ord + Display>(
    ratings: &[Vec<Option<C>>],
) -> Result<AgreementEstimate, AgreementError> {
    if ratings.is_empty() {
        return Err(AgreementError::Empty);
    }
    let mut totals: BTreeMap<&C, u64> = BTreeMap::new();
    let mut agreeing_pairs: u64 = 0;
    let mut raters = None;
    for (u, row) in ratings.iter().enumerate() {
        let counts = unit_counts(row);
        let r: u64 = counts.values().sum();
        match raters {
            None => {
                if r < 2 {
                    return Err(AgreementError::TooFewRaters {
                        unit: u,
                        count: r as usize,
                    });
                }
                raters = Some(r);
            }
            Some(expected) if expected != r => {
                return Err(AgreementError::RaggedRaters {
                    unit: u,
                    expected: expected as usize,
                    found: r as usize,
                })
            }
            Some(_) => {}
        }
        agreeing_pairs += counts.values().map(|k| k * (k - 1)).sum::<u64>();
        for (c, k) in counts {
            *totals.entry(c).or_insert(0) += k;
        }
    }
    let n = raters.expect("at least one unit");
    let units = ratings.len() as u64;
    let total = units * n;

    // P̄ = pairs / (N n (n−1)),  P̄ₑ = Σ totₖ² / (N n)²
    let pairs_den = units * n * (n - 1);
    let sq_sum: u64 = totals.values().map(|t| t * t).sum();
    let total_sq = total * total;
    let p_bar = agreeing_pairs as f64 / pairs_den as f64;
    let p_e = sq_sum as f64 / total_sq as f64;

    let value = if sq_sum == total_sq {
        Value::undefined("P̄ₑ = 1")
    } else {
        let num = i128::from(agreeing_pairs) * i128::from(total_sq)
            - i128::from(sq_sum) * i128::from(pairs_den);
        let den = i128::from(pairs_den) * (i128::from(total_sq) - i128::from(sq_sum));
        Value::Defined {
            value: num as f64 / den as f64,
        }
    };
    let mut est = AgreementEstimate::new(Metric::FleissKappa, value, ratings.len());
    est.diagnostics.observed_agreement = Some(p_bar);
    est.diagnostics.expected_agreement = Some(p_e);
    est.diagnostics.prevalence = prevalence_map(&totals, total);
    if units == 1 {
        est.diagnostics.notes.push("n_units = 1".to_owned());
    }
    Ok(est)
}

/// Krippendorff's alpha, nominal metric, missing ratings allowed.
///
/// Units with fewer than two ratings are not pairable and are left out.
pub fn krippendorff_alpha<C: Ord + Display>(
    ratings: &[Vec<Option<C>>],
) -> Result<AgreementEstimate, AgreementError> {
    let mut totals: BTreeMap<&C, u64> = BTreeMap::new();
    let mut disagreement = 0.0;
    let mut pairable = 0usize;
    for row in ratings {
        let counts = unit_counts(row);
        let m: u64 = counts.values().sum();
        if m < 2 {
            continue;
        }
        pairable += 1;
        // Σ_{c≠k} n_uc n_uk = m² − Σ_c n_uc²
        let same: u64 = counts.values().map(|k| k * k).sum();
        disagreement += (m * m - same) as f64 / (m - 1) as f64;
        for (c, k) in counts {
            *totals.entry(c).or_insert(0) += k;
        }
    }
    if pairable == 0 {
        return Err(AgreementError::NoPairableUnits);
    }
    let n: u64 = totals.values().sum();
    let expected_pairs = n * n - totals.values().map(|t| t * t).sum::<u64>();
    let d_o = disagreement / n as f64;

    let mut est;
    if expected_pairs == 0 {
        est = AgreementEstimate::new(
            Metric::KrippendorffAlpha,
            Value::undefined("expected disagreement is 0"),
            pairable,
        );
    } else {
        let d_e = expected_pairs as f64 / (n * (n - 1)) as f64;
        let alpha = 1.0 - disagreement * (n - 1) as f64 / expected_pairs as f64;
        est = AgreementEstimate::new(
            Metric::KrippendorffAlpha,
            Value::Defined { value: alpha },
            pairable,
        );
        est.diagnostics.expected_agreement = Some(1.0 - d_e);
        est.diagnostics
            .components
            .insert("expected_disagreement".to_owned(), d_e);
    }
    est.diagnostics.observed_agreement = Some(1.0 - d_o);
    est.diagnostics
        .components
        .insert("observed_disagreement".to_owned(), d_o);
    est.diagnostics.prevalence = prevalence_map(&totals, n);
    let excluded = ratings.len() - pairable;
    if excluded > 0 {
        est.diagnostics
            .notes
            .push(format!("{excluded} unit(s) with fewer than 2 ratings excluded"));
    }
    Ok(est)
}

/// Share of units on which every rater gave the same category.
pub fn unanimity_rate<C: Ord>(ratings: &[Vec<Option<C>>]) -> Result<AgreementEstimate, AgreementError> {
    if ratings.is_empty() {
        return Err(AgreementError::Empty);
    }
    let mut unanimous = 0usize;
    for (u, row) in ratings.iter().enumerate() {
        if row.len() < 2 {
            return Err(AgreementError::TooFewRaters {
                unit: u,
                count: row.len(),
            });
        }
        let mut first = None;
        let mut same = true;
        for (r, cell) in row.iter().enumerate() {
            let c = cell
                .as_ref()
                .ok_or(AgreementError::MissingCell { unit: u, rater: r })?;
            match first {
                None => first = Some(c),
                Some(f) => same &= f == c,
            }
        }
        unanimous += usize::from(same);
    }
    let value = unanimous as f64 / ratings.len() as f64;
    let mut est = AgreementEstimate::new(Metric::Unanimity, Value::Defined { value }, ratings.len());
    est.diagnostics.observed_agreement = Some(value);
    Ok(est)
}
