//! System Usability Scale scoring, grading and aggregation.
//!
//! Odd items contribute `response - 1`, even items `5 - response`; the sum
//! of contributions times 2.5 gives a score in `[0, 100]`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::fixed3;

pub const ITEMS: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SusError {
    #[error("expected {ITEMS} items, got {found}")]
    WrongLength { found: usize },
    #[error("item {index} is {value}, expected 1-5")]
    ItemOutOfRange { index: usize, value: i64 },
    #[error("score {0} is outside 0-100")]
    ScoreOutOfRange(f64),
    #[error("no results to aggregate")]
    Empty,
    #[error("invalid grade bands: {0}")]
    InvalidBands(String),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SusResponse {
    pub evaluator_id: String,
    /// Responses in questionnaire order, each 1-5.
    pub items: Vec<u8>,
}

impl SusResponse {
    pub fn new(evaluator_id: impl Into<String>, items: &[i64]) -> Result<Self, SusError> {
        if items.len() != ITEMS {
            return Err(SusError::WrongLength { found: items.len() });
        }
        for (i, &v) in items.iter().enumerate() {
            if !(1..=5).contains(&v) {
                return Err(SusError::ItemOutOfRange { index: i + 1, value: v });
            }
        }
        Ok(SusResponse {
            evaluator_id: evaluator_id.into(),
            items: items.iter().map(|&v| v as u8).collect(),
        })
    }

    fn validate(&self) -> Result<(), SusError> {
        if self.items.len() != ITEMS {
            return Err(SusError::WrongLength { found: self.items.len() });
        }
        for (i, &v) in self.items.iter().enumerate() {
            if !(1..=5).contains(&v) {
                return Err(SusError::ItemOutOfRange {
                    index: i + 1,
                    value: i64::from(v),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grade {
    pub grade: String,
    pub label: String,
}

/// A grade band starting at `min`; bands are ordered by `min` ascending and
/// each extends up to the next band's start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub min: f64,
    /// Whether a score equal to `min` falls in this band rather than the one below.
    pub min_inclusive: bool,
    pub grade: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GradeBands(Vec<Band>);

impl Default for GradeBands {
    fn default() -> Self {
        let band = |min, min_inclusive, grade: &str, label: &str| Band {
            min,
            min_inclusive,
            grade: grade.to_owned(),
            label: label.to_owned(),
        };
        GradeBands(vec![
            band(0.0, true, "F", "Poor"),
            band(51.0, true, "C", "Average"),
            band(68.0, false, "B", "Good"),
            band(74.0, true, "B+", "Good"),
            band(80.3, true, "A", "Excellent"),
        ])
    }
}

impl GradeBands {
    /// Checks that the first band starts at 0 (inclusive) and starts increase strictly.
    pub fn new(bands: Vec<Band>) -> Result<Self, SusError> {
        let first = bands
            .first()
            .ok_or_else(|| SusError::InvalidBands("no bands".to_owned()))?;
        if first.min != 0.0 || !first.min_inclusive {
            return Err(SusError::InvalidBands("the first band must start at 0 inclusive".to_owned()));
        }
        for w in bands.windows(2) {
            if !(w[0].min < w[1].min) || w[1].min > 100.0 {
                return Err(SusError::InvalidBands(format!(
                    "band `{}` starts at {}, not above {} and within 100",
                    w[1].grade, w[1].min, w[0].min
                )));
            }
        }
        Ok(GradeBands(bands))
    }

    pub fn from_json(text: &str) -> Result<Self, SusError> {
        let bands: Vec<Band> =
            serde_json::from_str(text).map_err(|e| SusError::InvalidBands(e.to_string()))?;
        GradeBands::new(bands)
    }

    pub fn bands(&self) -> &[Band] {
        &self.0
    }

    pub fn grade(&self, score: f64) -> Result<Grade, SusError> {
        if !(0.0..=100.0).contains(&score) {
            return Err(SusError::ScoreOutOfRange(score));
        }
        let band = self
            .0
            .iter()
            .rev()
            .find(|b| score > b.min || (b.min_inclusive && score == b.min))
            .expect("first band starts at 0 inclusive");
        Ok(Grade {
            grade: band.grade.clone(),
            label: band.label.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SusResult {
    pub evaluator_id: String,
    pub score: f64,
    pub grade: String,
    pub label: String,
}

/// Sum of item contributions, 0-40.
fn contribution_sum(items: &[u8]) -> u32 {
    items
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            // index 0 is item 1 (odd)
            if i % 2 == 0 {
                u32::from(v) - 1
            } else {
                5 - u32::from(v)
            }
        })
        .sum()
}

pub fn sus_score(response: &SusResponse) -> Result<SusResult, SusError> {
    sus_score_with(response, &GradeBands::default())
}

pub fn sus_score_with(response: &SusResponse, bands: &GradeBands) -> Result<SusResult, SusError> {
    response.validate()?;
    let score = f64::from(contribution_sum(&response.items)) * 2.5;
    let g = bands.grade(score)?;
    Ok(SusResult {
        evaluator_id: response.evaluator_id.clone(),
        score,
        grade: g.grade,
        label: g.label,
    })
}

/// Grade of `score` under the default bands.
pub fn sus_grade(score: f64) -> Result<Grade, SusError> {
    GradeBands::default().grade(score)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdKind {
    /// Divide by n.
    #[default]
    Population,
    /// Divide by n - 1.
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SusAggregate {
    pub n: usize,
    pub mean: f64,
    /// `None` for a sample SD of a single score.
    pub sd: Option<f64>,
    pub sd_kind: SdKind,
    pub mean_grade: Grade,
    pub grade_counts: BTreeMap<String, usize>,
}

pub fn sus_aggregate(results: &[SusResult]) -> Result<SusAggregate, SusError> {
    sus_aggregate_with(results, SdKind::Population, &GradeBands::default())
}

pub fn sus_aggregate_with(
    results: &[SusResult],
    sd_kind: SdKind,
    bands: &GradeBands,
) -> Result<SusAggregate, SusError> {
    if results.is_empty() {
        return Err(SusError::Empty);
    }
    let n = results.len();
    let mean = results.iter().map(|r| r.score).sum::<f64>() / n as f64;
    let ss: f64 = results.iter().map(|r| (r.score - mean).powi(2)).sum();
    let sd = match sd_kind {
        SdKind::Population => Some((ss / n as f64).sqrt()),
        SdKind::Sample if n > 1 => Some((ss / (n - 1) as f64).sqrt()),
        SdKind::Sample => None,
    };
    let mut grade_counts = BTreeMap::new();
    for r in results {
        *grade_counts.entry(r.grade.clone()).or_insert(0) += 1;
    }
    Ok(SusAggregate {
        n,
        mean,
        sd,
        sd_kind,
        mean_grade: bands.grade(mean)?,
        grade_counts,
    })
}

/// Reads `evaluator_id,item1,...,item10` rows; a first row starting with
/// `evaluator_id` is treated as a header.
pub fn parse_responses<R: Read>(reader: R) -> Result<Vec<SusResponse>, SusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| SusError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(i as u64 + 1, |p| p.line());
        if i == 0 && row.get(0) == Some("evaluator_id") {
            continue;
        }
        let parse_err = |message: String| SusError::Parse { line, message };
        if row.len() != ITEMS + 1 {
            return Err(parse_err(format!("expected {} fields, got {}", ITEMS + 1, row.len())));
        }
        let items = row
            .iter()
            .skip(1)
            .map(|f| f.parse::<i64>().map_err(|_| parse_err(format!("`{f}` is not an integer"))))
            .collect::<Result<Vec<_>, _>>()?;
        let response = SusResponse::new(&row[0], &items).map_err(|e| parse_err(e.to_string()))?;
        out.push(response);
    }
    Ok(out)
}

/// Per-evaluator results, then the aggregate block and grade counts.
pub fn render_sus_report(results: &[SusResult], agg: &SusAggregate) -> String {
    let mut out = String::from("evaluator_id,score,grade,label\n");
    for r in results {
        let _ = writeln!(out, "{},{},{},{}", r.evaluator_id, fixed3(r.score), r.grade, r.label);
    }
    out.push('\n');
    let sd_kind = match agg.sd_kind {
        SdKind::Population => "population",
        SdKind::Sample => "sample",
    };
    let _ = writeln!(out, "n,mean,sd,sd_kind,grade,label");
    let _ = writeln!(
        out,
        "{},{},{},{},{},{}",
        agg.n,
        fixed3(agg.mean),
        agg.sd.map_or_else(|| "undefined".to_owned(), fixed3),
        sd_kind,
        agg.mean_grade.grade,
        agg.mean_grade.label
    );
    out.push('\n');
    let _ = writeln!(out, "grade,count");
    for (g, c) in &agg.grade_counts {
        let _ = writeln!(out, "{g},{c}");
    }
    out
}
