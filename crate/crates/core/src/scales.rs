//! Five-point ordinal scales for severity, detectability and occurrence.
//!
//! Anchor definitions are kept verbatim; reviewers are trained against them and
//! the annotation interface shows them as tooltips.
//!
//! Occurrence is not rated directly. It is derived from the share of summaries
//! that exhibit a failure mode, bucketed with half-open-left intervals so that
//! each threshold belongs to the upper score:
//!
//! | ratio          | score |
//! |----------------|-------|
//! | `[0, 0.01)`    | 1     |
//! | `[0.01, 0.10)` | 2     |
//! | `[0.10, 0.60)` | 3     |
//! | `[0.60, 0.90)` | 4     |
//! | `[0.90, 1]`    | 5     |
//!
//! Ratios are exact fractions of counts, so comparisons against the thresholds
//! never depend on floating-point rounding.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Severity,
    Detectability,
    Occurrence,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [
        Dimension::Severity,
        Dimension::Detectability,
        Dimension::Occurrence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Severity => "severity",
            Dimension::Detectability => "detectability",
            Dimension::Occurrence => "occurrence",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Dimension {
    type Err = ScaleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "severity" => Ok(Dimension::Severity),
            "detectability" => Ok(Dimension::Detectability),
            "occurrence" => Ok(Dimension::Occurrence),
            other => Err(ScaleError::UnknownDimension(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScaleError {
    #[error("{dimension} score {value} is outside 1-5")]
    OutOfRange { dimension: Dimension, value: i64 },
    #[error("ratio {numerator}/{denominator} is outside [0, 1]")]
    RatioOutOfRange { numerator: u64, denominator: u64 },
    #[error("unknown scale dimension `{0}`")]
    UnknownDimension(String),
}

macro_rules! score_type {
    ($(#[$doc:meta])* $name:ident, $dim:expr) => {
        $(#[$doc])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(try_from = "u8", into = "u8")]
        pub struct $name(u8);

        impl $name {
            pub const MIN: $name = $name(1);
            pub const MAX: $name = $name(5);

            pub fn new(value: i64) -> Result<Self, ScaleError> {
                if (1..=5).contains(&value) {
                    Ok($name(value as u8))
                } else {
                    Err(ScaleError::OutOfRange { dimension: $dim, value })
                }
            }

            pub fn value(self) -> u8 {
                self.0
            }

            pub fn anchor(self) -> &'static ScaleAnchor {
                anchor_for($dim, self.0)
            }
        }

        impl TryFrom<u8> for $name {
            type Error = ScaleError;

            fn try_from(value: u8) -> Result<Self, Self::Error> {
                Self::new(i64::from(value))
            }
        }

        impl From<$name> for u8 {
            fn from(s: $name) -> u8 {
                s.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

score_type!(
    /// Potential clinical harm of an undetected failure.
    SeverityScore,
    Dimension::Severity
);
score_type!(
    /// How hard the failure is for a clinician to notice; higher is harder.
    DetectabilityScore,
    Dimension::Detectability
);
score_type!(
    /// Frequency bucket derived from [`occurrence_score`].
    OccurrenceScore,
    Dimension::Occurrence
);

/// A validated score of any dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Score {
    Severity(SeverityScore),
    Detectability(DetectabilityScore),
    Occurrence(OccurrenceScore),
}

impl Score {
    pub fn value(self) -> u8 {
        match self {
            Score::Severity(s) => s.value(),
            Score::Detectability(s) => s.value(),
            Score::Occurrence(s) => s.value(),
        }
    }
}

pub fn validate_score(dimension: Dimension, raw: i64) -> Result<Score, ScaleError> {
    Ok(match dimension {
        Dimension::Severity => Score::Severity(SeverityScore::new(raw)?),
        Dimension::Detectability => Score::Detectability(DetectabilityScore::new(raw)?),
        Dimension::Occurrence => Score::Occurrence(OccurrenceScore::new(raw)?),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleAnchor {
    pub dimension: Dimension,
    pub score: u8,
    pub label: String,
    pub definition: String,
}

struct RawAnchor {
    dimension: Dimension,
    score: u8,
    label: &'static str,
    definition: &'static str,
}

const RAW_ANCHORS: [RawAnchor; 15] = [
    RawAnchor {
        dimension: Dimension::Severity,
        score: 1,
        label: "None",
        definition: "The failure mode has no plausible clinical impact on the patient or the care process, even if used in practice.",
    },
    RawAnchor {
        dimension: Dimension::Severity,
        score: 2,
        label: "Minor",
        definition: "The failure mode could affect the patient but would not cause physical or psychological harm and would not require any medical intervention.",
    },
    RawAnchor {
        dimension: Dimension::Severity,
        score: 3,
        label: "Considerable",
        definition: "The failure mode could cause reversible physical or psychological harm, requiring additional care or treatment, without major medical intervention.",
    },
    RawAnchor {
        dimension: Dimension::Severity,
        score: 4,
        label: "Major",
        definition: "The failure mode could cause irreversible harm (permanent injury) or reversible harm requiring a major medical intervention (e.g., surgery, transfer to intensive care), without being immediately life-threatening.",
    },
    RawAnchor {
        dimension: Dimension::Severity,
        score: 5,
        label: "Catastrophic",
        definition: "The failure mode could directly or indirectly contribute to the patient's death, whether immediate or delayed.",
    },
    RawAnchor {
        dimension: Dimension::Detectability,
        score: 1,
        label: "Very easily detectable",
        definition: "The error is immediately and universally obvious upon reading the summary (<10 seconds), without requiring clinical expertise.",
    },
    RawAnchor {
        dimension: Dimension::Detectability,
        score: 2,
        label: "Easily detectable",
        definition: "The error is detectable from the summary alone after brief attention or reflection (≤ 1 minute), without consulting the source document or performing in-depth analysis.",
    },
    RawAnchor {
        dimension: Dimension::Detectability,
        score: 3,
        label: "Detectable but not immediate",
        definition: "The error is detectable from the summary alone, but only after careful reading, contextual reasoning, or prolonged examination (>1 minute); detection is not systematic and does not require consulting the source document.",
    },
    RawAnchor {
        dimension: Dimension::Detectability,
        score: 4,
        label: "Poorly detectable",
        definition: "The error is unlikely to be detected from the summary alone and can only be identified through a systematic review of the source document(s).",
    },
    RawAnchor {
        dimension: Dimension::Detectability,
        score: 5,
        label: "Very poorly detectable",
        definition: "The error is very unlikely to be detected before influencing clinical reasoning or patient care, even if the source document is available.",
    },
    RawAnchor {
        dimension: Dimension::Occurrence,
        score: 1,
        label: "Very low",
        definition: "< 1%",
    },
    RawAnchor {
        dimension: Dimension::Occurrence,
        score: 2,
        label: "Low",
        definition: "1-10 %",
    },
    RawAnchor {
        dimension: Dimension::Occurrence,
        score: 3,
        label: "Medium",
        definition: "10 - 60 %",
    },
    RawAnchor {
        dimension: Dimension::Occurrence,
        score: 4,
        label: "High",
        definition: "60 - 90 %",
    },
    RawAnchor {
        dimension: Dimension::Occurrence,
        score: 5,
        label: "Very high",
        definition: "> 90 %",
    },
];

static ANCHORS: std::sync::LazyLock<Vec<ScaleAnchor>> = std::sync::LazyLock::new(|| {
    RAW_ANCHORS
        .iter()
        .map(|a| ScaleAnchor {
            dimension: a.dimension,
            score: a.score,
            label: a.label.to_owned(),
            definition: a.definition.to_owned(),
        })
        .collect()
});

fn anchor_for(dimension: Dimension, score: u8) -> &'static ScaleAnchor {
    ANCHORS
        .iter()
        .find(|a| a.dimension == dimension && a.score == score)
        .expect("anchor table covers every dimension and score")
}

/// All 15 anchors, grouped by dimension and ordered by score.
pub fn anchors() -> &'static [ScaleAnchor] {
    &ANCHORS
}

pub fn scale_anchor(dimension: Dimension, score: i64) -> Result<&'static ScaleAnchor, ScaleError> {
    let s = validate_score(dimension, score)?;
    Ok(anchor_for(dimension, s.value()))
}

/// An exact fraction `numerator / denominator` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ratio {
    pub numerator: u64,
    pub denominator: u64,
}

impl Ratio {
    pub fn new(numerator: u64, denominator: u64) -> Result<Self, ScaleError> {
        if denominator == 0 || numerator > denominator {
            return Err(ScaleError::RatioOutOfRange {
                numerator,
                denominator,
            });
        }
        Ok(Ratio {
            numerator,
            denominator,
        })
    }

    pub fn zero() -> Self {
        Ratio {
            numerator: 0,
            denominator: 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }

    /// `self < percent / 100`, compared exactly.
    fn below_percent(self, percent: u64) -> bool {
        u128::from(self.numerator) * 100 < u128::from(percent) * u128::from(self.denominator)
    }
}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ratio {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let lhs = u128::from(self.numerator) * u128::from(other.denominator);
        let rhs = u128::from(other.numerator) * u128::from(self.denominator);
        lhs.cmp(&rhs)
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

/// Upper bounds (exclusive, in percent) of occurrence scores 1 to 4.
const OCCURRENCE_THRESHOLDS_PERCENT: [u64; 4] = [1, 10, 60, 90];

pub fn occurrence_score(ratio: Ratio) -> OccurrenceScore {
    let bucket = OCCURRENCE_THRESHOLDS_PERCENT
        .iter()
        .position(|&p| ratio.below_percent(p))
        .unwrap_or(OCCURRENCE_THRESHOLDS_PERCENT.len());
    OccurrenceScore(bucket as u8 + 1)
}

/// Renders the anchor table as a plain-text reference sheet.
pub fn render_anchor_reference() -> String {
    let mut out = String::new();
    for dim in Dimension::ALL {
        let title = match dim {
            Dimension::Severity => "SEVERITY",
            Dimension::Detectability => "DETECTABILITY",
            Dimension::Occurrence => "OCCURRENCE (share of summaries exhibiting the failure mode)",
        };
        out.push_str(title);
        out.push('\n');
        for a in anchors().iter().filter(|a| a.dimension == dim) {
            out.push_str(&format!("  {}  {:<30} {}\n", a.score, a.label, a.definition));
        }
        out.push('\n');
    }
    out
}
