//! Criticality of failure modes: occurrence, aggregated scores and RPN.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::campaign::{Campaign, CampaignError, Round, ScoreAggregation, ScoreDimension};
use crate::scales::{
    occurrence_score, DetectabilityScore, OccurrenceScore, Ratio, SeverityScore,
};
use crate::taxonomy::{Taxonomy, TaxonomyError};

/// Footnote attached to every register export.
pub const RPN_CAVEAT: &str = "RPN = O x S x D treats the three scores as equally weighted and \
independent. Use the ranking to prioritize review, not as a measured risk.";

/// How many reviewers must flag a mode in a summary for it to count as present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "n")]
pub enum Consensus {
    /// More than half of the round's reviewers.
    #[default]
    Majority,
    All,
    AtLeast(usize),
}

impl Consensus {
    /// Minimum reviewer count for a round of `reviewers` reviewers (never below 1).
    pub fn threshold(self, reviewers: usize) -> usize {
        match self {
            Consensus::Majority => reviewers / 2 + 1,
            Consensus::All => reviewers,
            Consensus::AtLeast(n) => n,
        }
        .max(1)
    }
}

impl std::str::FromStr for Consensus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "majority" => Ok(Consensus::Majority),
            "all" => Ok(Consensus::All),
            n => n
                .parse()
                .map(Consensus::AtLeast)
                .map_err(|_| format!("consensus must be majority, all or a count, got `{s}`")),
        }
    }
}

pub fn rpn(o: OccurrenceScore, s: SeverityScore, d: DetectabilityScore) -> u32 {
    u32::from(o.value()) * u32::from(s.value()) * u32::from(d.value())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Support {
    /// Summaries where the mode met the consensus threshold.
    pub summaries_flagged: usize,
    /// Instances recorded on those summaries, over all reviewers.
    pub instances: usize,
    /// Reviewers who flagged the mode on at least one of those summaries.
    pub reviewers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskEntry {
    pub failure_mode_id: String,
    pub occurrence_ratio: Ratio,
    pub occurrence: OccurrenceScore,
    /// `None` when no summary met the consensus threshold.
    pub severity: Option<SeverityScore>,
    pub detectability: Option<DetectabilityScore>,
    /// `None` means "not assessable".
    pub rpn: Option<u32>,
    pub support: Support,
}

impl RiskEntry {
    /// Register order: RPN, severity, detectability and occurrence descending
    /// (unassessable last), then failure-mode id ascending.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        fn desc<T: Ord>(a: Option<T>, b: Option<T>) -> Ordering {
            // Some beats None; larger beats smaller
            b.cmp(&a)
        }
        desc(self.rpn, other.rpn)
            .then_with(|| desc(self.severity, other.severity))
            .then_with(|| desc(self.detectability, other.detectability))
            .then_with(|| other.occurrence.cmp(&self.occurrence))
            .then_with(|| self.failure_mode_id.cmp(&other.failure_mode_id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskOptions {
    /// Collapse of all reviewer scores on consensus-flagged cells.
    pub aggregation: ScoreAggregation,
    pub consensus: Consensus,
    /// Collapse of one reviewer's instances of a mode within a summary.
    pub instance_aggregation: ScoreAggregation,
}

impl Default for RiskOptions {
    fn default() -> Self {
        RiskOptions {
            aggregation: ScoreAggregation::Median,
            consensus: Consensus::Majority,
            instance_aggregation: ScoreAggregation::Max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskRegister {
    pub round_id: String,
    pub taxonomy_version: u32,
    pub options: RiskOptions,
    /// One entry per failure mode, in register order.
    pub entries: Vec<RiskEntry>,
}

fn closed<'a>(campaign: &'a Campaign, round_id: &str) -> Result<(&'a Round, &'a Taxonomy), CampaignError> {
    let round = campaign.round(round_id)?;
    if round.is_open() {
        return Err(CampaignError::Workflow(format!("round `{round_id}` is still open")));
    }
    Ok((round, campaign.taxonomy(round.taxonomy_version)?))
}

/// Reviewers whose submitted record flags `mode_id` in `summary`.
fn flaggers<'a>(campaign: &'a Campaign, round: &'a Round, summary: &'a str, mode_id: &'a str) -> impl Iterator<Item = &'a str> {
    round.reviewer_ids.iter().map(String::as_str).filter(move |r| {
        campaign
            .record(&round.id, r, summary)
            .is_some_and(|rec| rec.submitted && rec.is_flagged(mode_id))
    })
}

fn qualifying<'a>(campaign: &'a Campaign, round: &'a Round, mode_id: &'a str, consensus: Consensus) -> Vec<&'a str> {
    let needed = consensus.threshold(round.reviewer_ids.len());
    round
        .summary_ids
        .iter()
        .map(String::as_str)
        .filter(|s| flaggers(campaign, round, s, mode_id).count() >= needed)
        .collect()
}

/// Share of the round's summaries in which the mode met the consensus threshold.
pub fn occurrence_ratio(
    campaign: &Campaign,
    round_id: &str,
    failure_mode_id: &str,
    consensus: Consensus,
) -> Result<Ratio, CampaignError> {
    let (round, taxonomy) = closed(campaign, round_id)?;
    if !taxonomy.contains_mode(failure_mode_id) {
        return Err(TaxonomyError::FailureModeNotFound(failure_mode_id.to_owned()).into());
    }
    let hits = qualifying(campaign, round, failure_mode_id, consensus).len();
    Ok(Ratio::new(hits as u64, round.summary_ids.len() as u64).expect("hits never exceed summaries"))
}

/// Per-mode occurrence, severity, detectability and RPN, ranked.
pub fn risk_register(
    campaign: &Campaign,
    round_id: &str,
    options: &RiskOptions,
) -> Result<RiskRegister, CampaignError> {
    let (round, taxonomy) = closed(campaign, round_id)?;
    let mut entries = Vec::with_capacity(taxonomy.failure_modes.len());
    for mode in &taxonomy.failure_modes {
        let summaries = qualifying(campaign, round, &mode.id, options.consensus);
        let ratio = Ratio::new(summaries.len() as u64, round.summary_ids.len() as u64)
            .expect("hits never exceed summaries");
        let occurrence = occurrence_score(ratio);

        let mut sev = Vec::new();
        let mut det = Vec::new();
        let mut instances = 0;
        let mut reviewers = BTreeSet::new();
        for &summary in &summaries {
            for reviewer in flaggers(campaign, round, summary, &mode.id) {
                reviewers.insert(reviewer);
                let rec = campaign.record(round_id, reviewer, summary).expect("flagger has a record");
                instances += rec.instances_of(&mode.id).count();
                let score = |dim| {
                    campaign.cell_score(round_id, reviewer, summary, &mode.id, dim, options.instance_aggregation)
                };
                sev.extend(score(ScoreDimension::Severity));
                det.extend(score(ScoreDimension::Detectability));
            }
        }
        let severity = options
            .aggregation
            .apply(&sev)
            .map(|v| SeverityScore::new(i64::from(v)).expect("aggregate of valid scores"));
        let detectability = options
            .aggregation
            .apply(&det)
            .map(|v| DetectabilityScore::new(i64::from(v)).expect("aggregate of valid scores"));
        let rpn = match (severity, detectability) {
            (Some(s), Some(d)) => Some(rpn(occurrence, s, d)),
            _ => None,
        };
        entries.push(RiskEntry {
            failure_mode_id: mode.id.clone(),
            occurrence_ratio: ratio,
            occurrence,
            severity,
            detectability,
            rpn,
            support: Support {
                summaries_flagged: summaries.len(),
                instances,
                reviewers: reviewers.len(),
            },
        });
    }
    entries.sort_by(RiskEntry::rank_cmp);
    Ok(RiskRegister {
        round_id: round_id.to_owned(),
        taxonomy_version: round.taxonomy_version,
        options: *options,
        entries,
    })
}

fn caveat_lines(out: &mut String) {
    let _ = writeln!(out, "# {RPN_CAVEAT}");
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// The register as a comma-separated table followed by `#` footnote lines.
///
/// Columns: `rank,failure_mode_id,occurrence_ratio,occurrence,severity,
/// detectability,rpn,summaries_flagged,instances,reviewers`. Unassessable
/// modes leave severity and detectability empty and carry `not assessable`
/// in the rpn column.
pub fn render_register_csv(register: &RiskRegister) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record([
        "rank",
        "failure_mode_id",
        "occurrence_ratio",
        "occurrence",
        "severity",
        "detectability",
        "rpn",
        "summaries_flagged",
        "instances",
        "reviewers",
    ])
    .expect("in-memory write");
    for (i, e) in register.entries.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            e.failure_mode_id.clone(),
            e.occurrence_ratio.to_string(),
            e.occurrence.to_string(),
            opt(e.severity),
            opt(e.detectability),
            e.rpn.map_or_else(|| "not assessable".to_owned(), |r| r.to_string()),
            e.support.summaries_flagged.to_string(),
            e.support.instances.to_string(),
            e.support.reviewers.to_string(),
        ])
        .expect("in-memory write");
    }
    let mut out = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8");
    caveat_lines(&mut out);
    out
}

/// A 5 × 5 occurrence × severity grid counting assessable modes per cell,
/// followed by the modes in each occupied cell.
pub fn render_risk_matrix(register: &RiskRegister) -> String {
    let mut grid = [[0usize; 5]; 5];
    let mut members: Vec<((u8, u8), &str)> = Vec::new();
    let mut unassessable = Vec::new();
    for e in &register.entries {
        match e.severity {
            Some(s) => {
                let (o, s) = (e.occurrence.value(), s.value());
                grid[usize::from(s - 1)][usize::from(o - 1)] += 1;
                members.push(((s, o), &e.failure_mode_id));
            }
            None => unassessable.push(e.failure_mode_id.as_str()),
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "Risk matrix: round {} (modes per cell)", register.round_id);
    let _ = writeln!(out, "        O=1  O=2  O=3  O=4  O=5");
    for s in (1..=5u8).rev() {
        let _ = write!(out, "S={s}   ");
        for o in 0..5 {
            let _ = write!(out, "{:>5}", grid[usize::from(s - 1)][o]);
        }
        out.push('\n');
    }
    out.push('\n');
    members.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
    for ((s, o), id) in members {
        let _ = writeln!(out, "S={s} O={o}: {id}");
    }
    if !unassessable.is_empty() {
        unassessable.sort_unstable();
        let _ = writeln!(out, "not assessable: {}", unassessable.join(", "));
    }
    out.push('\n');
    caveat_lines(&mut out);
    out
}
