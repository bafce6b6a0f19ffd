//! Reviewers, rounds, summaries and annotation records.
//!
//! A [`Campaign`] is the in-memory state of one evaluation campaign. Records
//! are written with compare-and-swap on `record_version`; every accepted write
//! is appended to a per-(round, reviewer) log, and the latest log entry is the
//! record served to readers.
//!
//! Once a round is closed its records are frozen and the Stage 1/2/3 matrices
//! consumed by [`crate::agreement`] and [`crate::risk`] can be derived.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scales::{DetectabilityScore, SeverityScore};
use crate::taxonomy::{
    default_merge_map, default_taxonomy, validate_taxonomy, MergeMap, Taxonomy, TaxonomyError,
};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("{kind} `{id}` not found")]
    NotFound { kind: &'static str, id: String },
    #[error("{kind} `{id}` already exists")]
    Duplicate { kind: &'static str, id: String },
    #[error("{0}")]
    Workflow(String),
    #[error("version conflict: expected {expected}, stored {actual}")]
    Conflict { expected: u64, actual: u64 },
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
    #[error("round incomplete, missing {} record(s): {}", missing.len(), format_pairs(missing))]
    Incomplete { missing: Vec<(String, String)> },
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

fn format_pairs(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(r, s)| format!("{r}/{s}"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl CampaignError {
    /// Stable machine-readable class name.
    pub fn class(&self) -> &'static str {
        match self {
            CampaignError::NotFound { .. } => "not_found",
            CampaignError::Duplicate { .. } => "duplicate",
            CampaignError::Workflow(_) => "workflow",
            CampaignError::Conflict { .. } => "conflict",
            CampaignError::Validation { .. } => "validation",
            CampaignError::Incomplete { .. } => "incomplete",
            CampaignError::Taxonomy(TaxonomyError::VersionNotFound { .. })
            | CampaignError::Taxonomy(TaxonomyError::FailureModeNotFound(_))
            | CampaignError::Taxonomy(TaxonomyError::MergeMapNotFound { .. }) => "not_found",
            CampaignError::Taxonomy(_) => "validation",
        }
    }

    fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        CampaignError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    fn not_found(kind: &'static str, id: &str) -> Self {
        CampaignError::NotFound {
            kind,
            id: id.to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryDocument {
    pub id: String,
    pub source_text: String,
    pub generated_summary: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reviewer {
    pub id: String,
    pub display_name: String,
    #[serde(default)]
    pub role: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Round {
    pub id: String,
    pub taxonomy_version: u32,
    /// Rater axis order of every matrix derived from this round.
    pub reviewer_ids: Vec<String>,
    pub summary_ids: Vec<String>,
    pub status: RoundStatus,
}

impl Round {
    pub fn is_open(&self) -> bool {
        self.status == RoundStatus::Open
    }

    pub fn has_reviewer(&self, reviewer_id: &str) -> bool {
        self.reviewer_ids.iter().any(|r| r == reviewer_id)
    }

    pub fn has_summary(&self, summary_id: &str) -> bool {
        self.summary_ids.iter().any(|s| s == summary_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureInstance {
    pub failure_mode_id: String,
    #[serde(default)]
    pub comment: String,
    pub severity: SeverityScore,
    pub detectability: DetectabilityScore,
}

/// One reviewer's judgement of one summary in one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub round_id: String,
    pub reviewer_id: String,
    pub summary_id: String,
    /// Exactly one entry per failure mode of the round's taxonomy.
    pub flags: BTreeMap<String, bool>,
    #[serde(default)]
    pub instances: Vec<FailureInstance>,
    #[serde(default)]
    pub record_version: u64,
    #[serde(default)]
    pub submitted: bool,
}

impl AnnotationRecord {
    /// A record with every flag cleared.
    pub fn blank(round: &Round, taxonomy: &Taxonomy, reviewer_id: &str, summary_id: &str) -> Self {
        AnnotationRecord {
            round_id: round.id.clone(),
            reviewer_id: reviewer_id.to_owned(),
            summary_id: summary_id.to_owned(),
            flags: taxonomy
                .failure_mode_ids()
                .map(|id| (id.to_owned(), false))
                .collect(),
            instances: Vec::new(),
            record_version: 0,
            submitted: false,
        }
    }

    pub fn is_flagged(&self, mode_id: &str) -> bool {
        self.flags.get(mode_id).copied().unwrap_or(false)
    }

    pub fn instances_of<'a>(&'a self, mode_id: &'a str) -> impl Iterator<Item = &'a FailureInstance> {
        self.instances
            .iter()
            .filter(move |i| i.failure_mode_id == mode_id)
    }

    /// Adds an instance and sets the mode's flag.
    pub fn add_instance(
        &mut self,
        mode_id: &str,
        comment: &str,
        severity: SeverityScore,
        detectability: DetectabilityScore,
    ) {
        self.flags.insert(mode_id.to_owned(), true);
        self.instances.push(FailureInstance {
            failure_mode_id: mode_id.to_owned(),
            comment: comment.to_owned(),
            severity,
            detectability,
        });
    }
}

/// An accepted write, as stored in the append-only annotation log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogEntry {
    pub seq: u64,
    pub recorded_at: DateTime<Utc>,
    pub record: AnnotationRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Stage {
    /// Binary presence per subcategory (OR over member modes).
    Subcategory = 1,
    /// Binary presence per failure mode.
    FailureMode = 2,
    /// Ordinal severity or detectability scores.
    Scores = 3,
}

impl Stage {
    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Option<Stage> {
        match n {
            1 => Some(Stage::Subcategory),
            2 => Some(Stage::FailureMode),
            3 => Some(Stage::Scores),
            _ => None,
        }
    }
}

impl From<Stage> for u8 {
    fn from(s: Stage) -> u8 {
        s.number()
    }
}

impl TryFrom<u8> for Stage {
    type Error = String;

    fn try_from(n: u8) -> Result<Self, Self::Error> {
        Stage::from_number(n).ok_or_else(|| format!("stage must be 1, 2 or 3, got {n}"))
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreDimension {
    Severity,
    Detectability,
}

impl ScoreDimension {
    pub const ALL: [ScoreDimension; 2] = [ScoreDimension::Severity, ScoreDimension::Detectability];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreDimension::Severity => "severity",
            ScoreDimension::Detectability => "detectability",
        }
    }

    fn of(self, i: &FailureInstance) -> u8 {
        match self {
            ScoreDimension::Severity => i.severity.value(),
            ScoreDimension::Detectability => i.detectability.value(),
        }
    }
}

impl fmt::Display for ScoreDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ScoreDimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "severity" => Ok(ScoreDimension::Severity),
            "detectability" => Ok(ScoreDimension::Detectability),
            other => Err(format!("unknown score dimension `{other}`")),
        }
    }
}

/// How several ordinal scores collapse into one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreAggregation {
    /// Median; an even count averages the two middle values and rounds half up.
    #[default]
    Median,
    Max,
}

impl ScoreAggregation {
    pub fn apply(self, values: &[u8]) -> Option<u8> {
        if values.is_empty() {
            return None;
        }
        match self {
            ScoreAggregation::Max => values.iter().copied().max(),
            ScoreAggregation::Median => {
                let mut v = values.to_vec();
                v.sort_unstable();
                let n = v.len();
                if n % 2 == 1 {
                    Some(v[n / 2])
                } else {
                    let sum = u16::from(v[n / 2 - 1]) + u16::from(v[n / 2]);
                    Some(sum.div_ceil(2) as u8)
                }
            }
        }
    }
}

impl std::str::FromStr for ScoreAggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "median" => Ok(ScoreAggregation::Median),
            "max" => Ok(ScoreAggregation::Max),
            other => Err(format!("unknown aggregation `{other}` (expected median or max)")),
        }
    }
}

/// Stage-3 unit inclusion and instance collapse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellPolicy {
    /// Minimum number of reviewers that flagged a cell; `None` requires all of them.
    pub min_raters: Option<usize>,
    /// Collapse of one reviewer's instances of a mode within a summary.
    pub instance_aggregation: ScoreAggregation,
}

impl Default for CellPolicy {
    fn default() -> Self {
        CellPolicy {
            min_raters: None,
            instance_aggregation: ScoreAggregation::Max,
        }
    }
}

impl CellPolicy {
    pub fn describe(&self) -> String {
        let inclusion = match self.min_raters {
            None => "complete-case (flagged by all raters)".to_owned(),
            Some(n) => format!("flagged by at least {n} rater(s)"),
        };
        let agg = match self.instance_aggregation {
            ScoreAggregation::Max => "max",
            ScoreAggregation::Median => "median",
        };
        format!("{inclusion}; instances collapsed by {agg}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UnitKey {
    pub summary_id: String,
    pub unit_id: String,
}

/// A units × raters table of binary or ordinal values.
///
/// Stage-3 unit ids have the form `<failure_mode_id>/<dimension>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationMatrix {
    pub stage: Stage,
    pub units: Vec<UnitKey>,
    pub raters: Vec<String>,
    /// `cells[unit][rater]`; `None` is a missing rating.
    pub cells: Vec<Vec<Option<u8>>>,
}

impl AnnotationMatrix {
    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_raters(&self) -> usize {
        self.raters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn has_missing(&self) -> bool {
        self.cells.iter().flatten().any(Option::is_none)
    }

    pub fn column(&self, rater: usize) -> Vec<Option<u8>> {
        self.cells.iter().map(|row| row[rater]).collect()
    }

    pub fn rater_index(&self, rater_id: &str) -> Option<usize> {
        self.raters.iter().position(|r| r == rater_id)
    }

    pub fn unit_index(&self, summary_id: &str, unit_id: &str) -> Option<usize> {
        self.units
            .iter()
            .position(|u| u.summary_id == summary_id && u.unit_id == unit_id)
    }

    /// Rows with no missing cell.
    pub fn complete_rows(&self) -> Vec<Vec<u8>> {
        self.cells
            .iter()
            .filter_map(|row| row.iter().copied().collect::<Option<Vec<u8>>>())
            .collect()
    }

    /// Pairs `(a, b)` of columns `i` and `j` over units where both are present.
    pub fn paired(&self, i: usize, j: usize) -> (Vec<u8>, Vec<u8>) {
        self.cells
            .iter()
            .filter_map(|row| Some((row[i]?, row[j]?)))
            .unzip()
    }
}

/// Missing records and per-reviewer progress of a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub round_id: String,
    pub expected_per_reviewer: usize,
    /// `(reviewer_id, summary_id)` pairs without a submitted record.
    pub missing: Vec<(String, String)>,
    pub submitted: BTreeMap<String, usize>,
    pub progress: BTreeMap<String, f64>,
}

impl CompletenessReport {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty()
    }
}

type RecordKey = (String, String, String);

fn key(round: &str, reviewer: &str, summary: &str) -> RecordKey {
    (round.to_owned(), reviewer.to_owned(), summary.to_owned())
}

/// A validated write that has not yet been applied; see [`Campaign::prepare_annotation`].
#[derive(Debug, Clone)]
pub struct PreparedAnnotation {
    pub entry: LogEntry,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Campaign {
    pub(crate) id: String,
    pub(crate) created_at: Option<DateTime<Utc>>,
    pub(crate) taxonomies: BTreeMap<u32, Taxonomy>,
    pub(crate) merge_maps: Vec<MergeMap>,
    pub(crate) summaries: BTreeMap<String, SummaryDocument>,
    pub(crate) reviewers: BTreeMap<String, Reviewer>,
    pub(crate) rounds: BTreeMap<String, Round>,
    /// Append-only logs keyed by `(round_id, reviewer_id)`.
    pub(crate) logs: BTreeMap<(String, String), Vec<LogEntry>>,
    pub(crate) records: BTreeMap<RecordKey, AnnotationRecord>,
}

impl Campaign {
    /// A campaign preloaded with the shipped taxonomies and merge map.
    pub fn new(id: impl Into<String>) -> Self {
        let mut c = Campaign {
            id: id.into(),
            created_at: Some(Utc::now()),
            ..Default::default()
        };
        for v in crate::taxonomy::SHIPPED_VERSIONS {
            let t = default_taxonomy(v).expect("shipped version");
            c.taxonomies.insert(v, t);
        }
        c.merge_maps
            .push(default_merge_map(1, 3).expect("shipped merge map"));
        c
    }

    /// An empty campaign without any taxonomy.
    pub fn empty(id: impl Into<String>) -> Self {
        Campaign {
            id: id.into(),
            ..Default::default()
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn created_at(&self) -> Option<DateTime<Utc>> {
        self.created_at
    }

    pub fn taxonomy(&self, version: u32) -> Result<&Taxonomy, CampaignError> {
        self.taxonomies.get(&version).ok_or_else(|| {
            TaxonomyError::VersionNotFound {
                requested: version,
                available: self.taxonomies.keys().copied().collect(),
            }
            .into()
        })
    }

    pub fn taxonomies(&self) -> impl Iterator<Item = &Taxonomy> {
        self.taxonomies.values()
    }

    pub fn merge_maps(&self) -> &[MergeMap] {
        &self.merge_maps
    }

    pub fn reviewers(&self) -> impl Iterator<Item = &Reviewer> {
        self.reviewers.values()
    }

    pub fn reviewer(&self, id: &str) -> Option<&Reviewer> {
        self.reviewers.get(id)
    }

    pub fn summaries(&self) -> impl Iterator<Item = &SummaryDocument> {
        self.summaries.values()
    }

    pub fn summary(&self, id: &str) -> Option<&SummaryDocument> {
        self.summaries.get(id)
    }

    pub fn rounds(&self) -> impl Iterator<Item = &Round> {
        self.rounds.values()
    }

    pub fn round(&self, id: &str) -> Result<&Round, CampaignError> {
        self.rounds
            .get(id)
            .ok_or_else(|| CampaignError::not_found("round", id))
    }

    pub fn record(&self, round: &str, reviewer: &str, summary: &str) -> Option<&AnnotationRecord> {
        self.records.get(&key(round, reviewer, summary))
    }

    pub fn log(&self, round: &str, reviewer: &str) -> &[LogEntry] {
        self.logs
            .get(&(round.to_owned(), reviewer.to_owned()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn logs(&self) -> impl Iterator<Item = (&(String, String), &Vec<LogEntry>)> {
        self.logs.iter()
    }

    pub fn add_taxonomy(&mut self, t: Taxonomy) -> Result<(), CampaignError> {
        if let Some(v) = validate_taxonomy(&t).first() {
            return Err(CampaignError::validation("taxonomy", v.to_string()));
        }
        if self.taxonomies.contains_key(&t.version) {
            return Err(CampaignError::Duplicate {
                kind: "taxonomy version",
                id: t.version.to_string(),
            });
        }
        self.taxonomies.insert(t.version, t);
        Ok(())
    }

    pub fn add_merge_map(&mut self, m: MergeMap) -> Result<(), CampaignError> {
        let from = self.taxonomy(m.from_version)?;
        let to = self.taxonomy(m.to_version)?;
        m.validate(from, to)?;
        self.merge_maps
            .retain(|x| (x.from_version, x.to_version) != (m.from_version, m.to_version));
        self.merge_maps.push(m);
        Ok(())
    }

    pub fn add_reviewer(&mut self, r: Reviewer) -> Result<(), CampaignError> {
        if !is_slug(&r.id) {
            return Err(CampaignError::validation("reviewer.id", format!("`{}` is not a slug", r.id)));
        }
        if self.reviewers.contains_key(&r.id) {
            return Err(CampaignError::Duplicate {
                kind: "reviewer",
                id: r.id,
            });
        }
        self.reviewers.insert(r.id.clone(), r);
        Ok(())
    }

    pub fn add_summary(&mut self, s: SummaryDocument) -> Result<(), CampaignError> {
        if !is_slug(&s.id) {
            return Err(CampaignError::validation("summary.id", format!("`{}` is not a slug", s.id)));
        }
        if s.source_text.is_empty() {
            return Err(CampaignError::validation("summary.source_text", "empty"));
        }
        if s.generated_summary.is_empty() {
            return Err(CampaignError::validation("summary.generated_summary", "empty"));
        }
        if self.summaries.contains_key(&s.id) {
            return Err(CampaignError::Duplicate {
                kind: "summary",
                id: s.id,
            });
        }
        self.summaries.insert(s.id.clone(), s);
        Ok(())
    }

    pub fn open_round(
        &mut self,
        id: &str,
        taxonomy_version: u32,
        reviewer_ids: Vec<String>,
        summary_ids: Vec<String>,
    ) -> Result<&Round, CampaignError> {
        if !is_slug(id) {
            return Err(CampaignError::validation("round.id", format!("`{id}` is not a slug")));
        }
        if self.rounds.contains_key(id) {
            return Err(CampaignError::Duplicate {
                kind: "round",
                id: id.to_owned(),
            });
        }
        self.taxonomy(taxonomy_version)?;
        if reviewer_ids.iter().collect::<BTreeSet<_>>().len() != reviewer_ids.len() {
            return Err(CampaignError::validation("round.reviewer_ids", "duplicate reviewer"));
        }
        if reviewer_ids.len() < 2 {
            return Err(CampaignError::validation(
                "round.reviewer_ids",
                "a round needs at least 2 reviewers",
            ));
        }
        for r in &reviewer_ids {
            if !self.reviewers.contains_key(r) {
                return Err(CampaignError::not_found("reviewer", r));
            }
        }
        if summary_ids.is_empty() {
            return Err(CampaignError::validation("round.summary_ids", "no summaries"));
        }
        if summary_ids.iter().collect::<BTreeSet<_>>().len() != summary_ids.len() {
            return Err(CampaignError::validation("round.summary_ids", "duplicate summary"));
        }
        for s in &summary_ids {
            if !self.summaries.contains_key(s) {
                return Err(CampaignError::not_found("summary", s));
            }
        }
        let round = Round {
            id: id.to_owned(),
            taxonomy_version,
            reviewer_ids,
            summary_ids,
            status: RoundStatus::Open,
        };
        Ok(self.rounds.entry(id.to_owned()).or_insert(round))
    }

    fn check_record(&self, record: &AnnotationRecord) -> Result<&Round, CampaignError> {
        let round = self.round(&record.round_id)?;
        if !round.is_open() {
            return Err(CampaignError::Workflow(format!("round `{}` is closed", round.id)));
        }
        if !round.has_reviewer(&record.reviewer_id) {
            return Err(CampaignError::Workflow(format!(
                "reviewer `{}` is not assigned to round `{}`",
                record.reviewer_id, round.id
            )));
        }
        if !round.has_summary(&record.summary_id) {
            return Err(CampaignError::not_found("summary", &record.summary_id));
        }
        let taxonomy = self.taxonomy(round.taxonomy_version)?;
        for id in taxonomy.failure_mode_ids() {
            if !record.flags.contains_key(id) {
                return Err(CampaignError::validation("flags", format!("missing flag for `{id}`")));
            }
        }
        for id in record.flags.keys() {
            if !taxonomy.contains_mode(id) {
                return Err(CampaignError::validation(
                    "flags",
                    format!("unknown failure mode `{id}`"),
                ));
            }
        }
        for (i, inst) in record.instances.iter().enumerate() {
            match record.flags.get(&inst.failure_mode_id) {
                None => {
                    return Err(CampaignError::validation(
                        format!("instances[{i}].failure_mode_id"),
                        format!("unknown failure mode `{}`", inst.failure_mode_id),
                    ))
                }
                Some(false) => {
                    return Err(CampaignError::validation(
                        format!("instances[{i}]"),
                        "instance without flag",
                    ))
                }
                Some(true) => {}
            }
        }
        for (id, &flag) in &record.flags {
            if flag && record.instances_of(id).next().is_none() {
                return Err(CampaignError::validation(
                    format!("flags.{id}"),
                    "flagged mode without instance",
                ));
            }
        }
        Ok(round)
    }

    /// Validates a write and assigns its version without changing state.
    pub fn prepare_annotation(
        &self,
        record: AnnotationRecord,
        expected_version: u64,
        at: DateTime<Utc>,
    ) -> Result<PreparedAnnotation, CampaignError> {
        self.check_record(&record)?;
        let stored = self
            .record(&record.round_id, &record.reviewer_id, &record.summary_id)
            .map_or(0, |r| r.record_version);
        if stored != expected_version {
            return Err(CampaignError::Conflict {
                expected: expected_version,
                actual: stored,
            });
        }
        let seq = self.log(&record.round_id, &record.reviewer_id).len() as u64;
        let mut record = record;
        record.record_version = stored + 1;
        Ok(PreparedAnnotation {
            entry: LogEntry {
                seq,
                recorded_at: at,
                record,
            },
        })
    }

    /// Applies a write produced by [`Campaign::prepare_annotation`] on this state.
    pub fn commit_annotation(&mut self, prepared: PreparedAnnotation) -> u64 {
        let entry = prepared.entry;
        self.apply_log_entry(entry)
    }

    pub(crate) fn apply_log_entry(&mut self, entry: LogEntry) -> u64 {
        let r = &entry.record;
        let version = r.record_version;
        self.records.insert(
            key(&r.round_id, &r.reviewer_id, &r.summary_id),
            r.clone(),
        );
        self.logs
            .entry((r.round_id.clone(), r.reviewer_id.clone()))
            .or_default()
            .push(entry);
        version
    }

    pub fn record_annotation(
        &mut self,
        record: AnnotationRecord,
        expected_version: u64,
    ) -> Result<u64, CampaignError> {
        let prepared = self.prepare_annotation(record, expected_version, Utc::now())?;
        Ok(self.commit_annotation(prepared))
    }

    pub fn completeness(&self, round_id: &str) -> Result<CompletenessReport, CampaignError> {
        let round = self.round(round_id)?;
        let mut missing = Vec::new();
        let mut submitted = BTreeMap::new();
        let mut progress = BTreeMap::new();
        let expected = round.summary_ids.len();
        for reviewer in &round.reviewer_ids {
            let mut done = 0;
            for summary in &round.summary_ids {
                match self.record(round_id, reviewer, summary) {
                    Some(r) if r.submitted => done += 1,
                    _ => missing.push((reviewer.clone(), summary.clone())),
                }
            }
            submitted.insert(reviewer.clone(), done);
            progress.insert(reviewer.clone(), done as f64 / expected as f64);
        }
        Ok(CompletenessReport {
            round_id: round_id.to_owned(),
            expected_per_reviewer: expected,
            missing,
            submitted,
            progress,
        })
    }

    pub fn close_round(&mut self, round_id: &str, force: bool) -> Result<&Round, CampaignError> {
        let round = self.round(round_id)?;
        if !round.is_open() {
            return Err(CampaignError::Workflow(format!("round `{round_id}` is already closed")));
        }
        let report = self.completeness(round_id)?;
        if !force && !report.is_complete() {
            return Err(CampaignError::Incomplete {
                missing: report.missing,
            });
        }
        let round = self.rounds.get_mut(round_id).expect("checked above");
        round.status = RoundStatus::Closed;
        Ok(round)
    }

    fn closed_round(&self, round_id: &str) -> Result<(&Round, &Taxonomy), CampaignError> {
        let round = self.round(round_id)?;
        if round.is_open() {
            return Err(CampaignError::Workflow(format!("round `{round_id}` is still open")));
        }
        Ok((round, self.taxonomy(round.taxonomy_version)?))
    }

    fn submitted(&self, round: &Round, reviewer: &str, summary: &str) -> Option<&AnnotationRecord> {
        self.record(&round.id, reviewer, summary).filter(|r| r.submitted)
    }

    /// Binary subcategory presence: a cell is set when any member mode is flagged.
    pub fn stage1_matrix(&self, round_id: &str) -> Result<AnnotationMatrix, CampaignError> {
        let (round, taxonomy) = self.closed_round(round_id)?;
        let mut units = Vec::new();
        let mut cells = Vec::new();
        for summary in &round.summary_ids {
            for sub in &taxonomy.subcategories {
                units.push(UnitKey {
                    summary_id: summary.clone(),
                    unit_id: sub.id.clone(),
                });
                let row = round
                    .reviewer_ids
                    .iter()
                    .map(|reviewer| {
                        self.submitted(round, reviewer, summary).map(|rec| {
                            u8::from(taxonomy.modes_of_subcategory(&sub.id).any(|m| rec.is_flagged(&m.id)))
                        })
                    })
                    .collect();
                cells.push(row);
            }
        }
        Ok(AnnotationMatrix {
            stage: Stage::Subcategory,
            units,
            raters: round.reviewer_ids.clone(),
            cells,
        })
    }

    /// Binary failure-mode presence, the reviewer's flag verbatim.
    pub fn stage2_matrix(&self, round_id: &str) -> Result<AnnotationMatrix, CampaignError> {
        let (round, taxonomy) = self.closed_round(round_id)?;
        let mut units = Vec::new();
        let mut cells = Vec::new();
        for summary in &round.summary_ids {
            for mode in &taxonomy.failure_modes {
                units.push(UnitKey {
                    summary_id: summary.clone(),
                    unit_id: mode.id.clone(),
                });
                let row = round
                    .reviewer_ids
                    .iter()
                    .map(|reviewer| {
                        self.submitted(round, reviewer, summary)
                            .map(|rec| u8::from(rec.is_flagged(&mode.id)))
                    })
                    .collect();
                cells.push(row);
            }
        }
        Ok(AnnotationMatrix {
            stage: Stage::FailureMode,
            units,
            raters: round.reviewer_ids.clone(),
            cells,
        })
    }

    /// One reviewer's collapsed score for a mode in a summary, if flagged.
    pub fn cell_score(
        &self,
        round_id: &str,
        reviewer: &str,
        summary: &str,
        mode_id: &str,
        dimension: ScoreDimension,
        aggregation: ScoreAggregation,
    ) -> Option<u8> {
        let rec = self
            .record(round_id, reviewer, summary)
            .filter(|r| r.submitted && r.is_flagged(mode_id))?;
        let values: Vec<u8> = rec.instances_of(mode_id).map(|i| dimension.of(i)).collect();
        aggregation.apply(&values)
    }

    /// Ordinal scores on cells flagged by enough reviewers.
    pub fn stage3_matrix(
        &self,
        round_id: &str,
        dimension: ScoreDimension,
        policy: CellPolicy,
    ) -> Result<AnnotationMatrix, CampaignError> {
        let (round, taxonomy) = self.closed_round(round_id)?;
        let needed = policy
            .min_raters
            .unwrap_or(round.reviewer_ids.len())
            .max(1);
        let mut units = Vec::new();
        let mut cells = Vec::new();
        for summary in &round.summary_ids {
            for mode in &taxonomy.failure_modes {
                let row: Vec<Option<u8>> = round
                    .reviewer_ids
                    .iter()
                    .map(|reviewer| {
                        self.cell_score(
                            round_id,
                            reviewer,
                            summary,
                            &mode.id,
                            dimension,
                            policy.instance_aggregation,
                        )
                    })
                    .collect();
                if row.iter().flatten().count() >= needed {
                    units.push(UnitKey {
                        summary_id: summary.clone(),
                        unit_id: format!("{}/{}", mode.id, dimension),
                    });
                    cells.push(row);
                }
            }
        }
        Ok(AnnotationMatrix {
            stage: Stage::Scores,
            units,
            raters: round.reviewer_ids.clone(),
            cells,
        })
    }
}

/// Lowercase ASCII letters, digits, `_` and `-`; non-empty.
pub fn is_slug(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
}
