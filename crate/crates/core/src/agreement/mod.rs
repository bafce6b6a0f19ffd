//! Inter-rater reliability statistics.
//!
//! Nominal coefficients ([`cohen_kappa`], [`gwet_ac1`], [`fleiss_kappa`],
//! [`krippendorff_alpha`], [`unanimity_rate`]) take ratings as a units × raters
//! table of categories; any `Ord + Display` type works as a category.
//! Ordinal and interval statistics ([`pearson_r`], [`spearman_rho`],
//! [`icc_2_1`], [`tolerance_agreement`]) take numeric scores.
//!
//! Degenerate inputs (a constant rater, a single observed category, an empty
//! Stage-3 matrix) do not fail: the estimate carries [`Value::Undefined`] with a
//! reason. Errors are reserved for inputs outside a statistic's domain, such as
//! sequences of different lengths.
//!
//! [`agreement_report`] assembles every statistic for a closed round in the
//! three-stage layout (subcategory, failure mode, scores).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod nominal;
mod ordinal;
mod report;

pub use nominal::{
    cohen_kappa, fleiss_kappa, gwet_ac1, gwet_ac1_with_categories, krippendorff_alpha,
    unanimity_rate,
};
pub use ordinal::{
    average_ranks, icc_2_1, pearson_r, spearman_rho, tolerance_agreement,
    tolerance_agreement_multi,
};
pub use report::{
    agreement_report, binary_stage, render_stage_csv, render_text, score_stage, AgreementReport,
    BinaryStage, PairwiseBinary, PairwiseScore, RaterSummary, ReportOptions, ScoreStage,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgreementError {
    #[error("no ratings")]
    Empty,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("unit {unit} has {count} rating(s), at least 2 are required")]
    TooFewRaters { unit: usize, count: usize },
    #[error("unit {unit} has {found} rating(s), expected {expected} like the first unit")]
    RaggedRaters {
        unit: usize,
        expected: usize,
        found: usize,
    },
    #[error("missing rating at unit {unit}, rater {rater}; filter to complete cases first")]
    MissingCell { unit: usize, rater: usize },
    #[error("no unit carries at least 2 ratings")]
    NoPairableUnits,
    #[error("at least {needed} units are required, got {found}")]
    TooFewUnits { needed: usize, found: usize },
    #[error("value {value} is outside the 1-5 scale")]
    OutOfScale { value: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    CohenKappa,
    GwetAc1,
    FleissKappa,
    KrippendorffAlpha,
    PearsonR,
    SpearmanRho,
    #[serde(rename = "icc_2_1")]
    Icc21,
    Tolerance,
    Unanimity,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::CohenKappa => "cohen_kappa",
            Metric::GwetAc1 => "gwet_ac1",
            Metric::FleissKappa => "fleiss_kappa",
            Metric::KrippendorffAlpha => "krippendorff_alpha",
            Metric::PearsonR => "pearson_r",
            Metric::SpearmanRho => "spearman_rho",
            Metric::Icc21 => "icc_2_1",
            Metric::Tolerance => "tolerance",
            Metric::Unanimity => "unanimity",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Metric::CohenKappa => "Cohen's kappa",
            Metric::GwetAc1 => "Gwet's AC1",
            Metric::FleissKappa => "Fleiss' kappa",
            Metric::KrippendorffAlpha => "Krippendorff's alpha",
            Metric::PearsonR => "Pearson's r",
            Metric::SpearmanRho => "Spearman's rho",
            Metric::Icc21 => "ICC(2,1)",
            Metric::Tolerance => "Tolerance agreement",
            Metric::Unanimity => "Unanimity rate",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Value {
    Defined { value: f64 },
    Undefined { reason: String },
}

impl Value {
    pub fn undefined(reason: impl Into<String>) -> Self {
        Value::Undefined {
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed_agreement: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_agreement: Option<f64>,
    /// Share of ratings falling in each category.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub prevalence: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<u32>,
    /// Metric-specific intermediate quantities (mean squares and the like).
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub components: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementEstimate {
    pub metric: Metric,
    #[serde(flatten)]
    pub value: Value,
    pub n_units: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rater_ids: Vec<String>,
    #[serde(default)]
    pub diagnostics: Diagnostics,
}

impl AgreementEstimate {
    pub(crate) fn new(metric: Metric, value: Value, n_units: usize) -> Self {
        AgreementEstimate {
            metric,
            value,
            n_units,
            rater_ids: Vec::new(),
            diagnostics: Diagnostics::default(),
        }
    }

    /// The coefficient, if defined.
    pub fn value(&self) -> Option<f64> {
        match self.value {
            Value::Defined { value } => Some(value),
            Value::Undefined { .. } => None,
        }
    }

    pub fn undefined_reason(&self) -> Option<&str> {
        match &self.value {
            Value::Defined { .. } => None,
            Value::Undefined { reason } => Some(reason),
        }
    }

    pub fn with_raters<I, S>(mut self, ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.rater_ids = ids.into_iter().map(Into::into).collect();
        self
    }

    /// An undefined estimate standing in for a statistic whose input was out of domain.
    pub fn from_error(metric: Metric, err: &AgreementError, n_units: usize) -> Self {
        AgreementEstimate::new(metric, Value::undefined(err.to_string()), n_units)
    }
}

pub(crate) fn clamp_unit(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}
