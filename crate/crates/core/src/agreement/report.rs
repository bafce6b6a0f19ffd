//! The three-stage agreement report of a closed round.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    cohen_kappa, fleiss_kappa, gwet_ac1_with_categories, icc_2_1, krippendorff_alpha, pearson_r,
    spearman_rho, tolerance_agreement_multi, unanimity_rate, AgreementError, AgreementEstimate,
    Metric,
};
use crate::campaign::{AnnotationMatrix, Campaign, CampaignError, CellPolicy, ScoreDimension, Stage};
use crate::format::fixed3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub cell_policy: CellPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseBinary {
    pub rater_a: String,
    pub rater_b: String,
    pub cohen_kappa: AgreementEstimate,
    pub gwet_ac1: AgreementEstimate,
}

/// Stage 1 or Stage 2 statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryStage {
    pub stage: Stage,
    pub n_units: usize,
    pub raters: Vec<String>,
    pub pairwise: Vec<PairwiseBinary>,
    pub fleiss_kappa: AgreementEstimate,
    pub gwet_ac1: AgreementEstimate,
    pub krippendorff_alpha: AgreementEstimate,
    pub unanimity: AgreementEstimate,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseScore {
    pub rater_a: String,
    pub rater_b: String,
    pub pearson_r: AgreementEstimate,
    pub spearman_rho: AgreementEstimate,
}

/// Mean and sample standard deviation of one rater's scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterSummary {
    pub rater: String,
    pub n: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

/// Stage-3 statistics for one score dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreStage {
    pub dimension: ScoreDimension,
    /// Unit inclusion and instance collapse used to build the matrix.
    pub policy: String,
    pub n_units: usize,
    pub raters: Vec<String>,
    pub pairwise: Vec<PairwiseScore>,
    pub icc_2_1: AgreementEstimate,
    pub exact: AgreementEstimate,
    pub within_1: AgreementEstimate,
    pub within_2: AgreementEstimate,
    pub rater_summaries: Vec<RaterSummary>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub round_id: String,
    pub taxonomy_version: u32,
    pub raters: Vec<String>,
    pub stage1: BinaryStage,
    pub stage2: BinaryStage,
    pub stage3: Vec<ScoreStage>,
}

fn or_undefined(
    metric: Metric,
    n_units: usize,
    r: Result<AgreementEstimate, AgreementError>,
) -> AgreementEstimate {
    r.unwrap_or_else(|e| AgreementEstimate::from_error(metric, &e, n_units))
}

fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// Binary-stage statistics for any units × raters 0/1 matrix.
pub fn binary_stage(m: &AnnotationMatrix) -> BinaryStage {
    let mut pairwise = Vec::new();
    for (i, j) in pairs(m.n_raters()) {
        let ids = [m.raters[i].clone(), m.raters[j].clone()];
        let (a, b) = m.paired(i, j);
        let kappa = or_undefined(Metric::CohenKappa, a.len(), cohen_kappa(&a, &b));
        let rows: Vec<Vec<Option<u8>>> = a.iter().zip(&b).map(|(&x, &y)| vec![Some(x), Some(y)]).collect();
        let ac1 = or_undefined(Metric::GwetAc1, rows.len(), gwet_ac1_with_categories(&rows, &[0, 1]));
        pairwise.push(PairwiseBinary {
            rater_a: ids[0].clone(),
            rater_b: ids[1].clone(),
            cohen_kappa: kappa.with_raters(ids.clone()),
            gwet_ac1: ac1.with_raters(ids),
        });
    }

    let complete: Vec<Vec<Option<u8>>> = m
        .complete_rows()
        .into_iter()
        .map(|r| r.into_iter().map(Some).collect())
        .collect();
    let mut notes = Vec::new();
    if m.has_missing() {
        notes.push(format!(
            "fleiss_kappa, gwet_ac1 and unanimity use complete cases only ({} of {} units)",
            complete.len(),
            m.n_units()
        ));
    }
    let n = complete.len();
    let raters = m.raters.clone();
    BinaryStage {
        stage: m.stage,
        n_units: m.n_units(),
        raters: raters.clone(),
        pairwise,
        fleiss_kappa: or_undefined(Metric::FleissKappa, n, fleiss_kappa(&complete)).with_raters(raters.clone()),
        gwet_ac1: or_undefined(Metric::GwetAc1, n, gwet_ac1_with_categories(&complete, &[0, 1]))
            .with_raters(raters.clone()),
        krippendorff_alpha: or_undefined(Metric::KrippendorffAlpha, m.n_units(), krippendorff_alpha(&m.cells))
            .with_raters(raters.clone()),
        unanimity: or_undefined(Metric::Unanimity, n, unanimity_rate(&complete)).with_raters(raters),
        notes,
    }
}

fn summarize(rater: &str, values: &[f64]) -> RaterSummary {
    let n = values.len();
    let mean = (n > 0).then(|| values.iter().sum::<f64>() / n as f64);
    let sd = mean.filter(|_| n > 1).map(|m| {
        let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    });
    RaterSummary {
        rater: rater.to_owned(),
        n,
        mean,
        sd,
    }
}

/// Stage-3 statistics for one dimension's score matrix.
pub fn score_stage(m: &AnnotationMatrix, dimension: ScoreDimension, policy: &str) -> ScoreStage {
    let mut pairwise = Vec::new();
    for (i, j) in pairs(m.n_raters()) {
        let ids = [m.raters[i].clone(), m.raters[j].clone()];
        let (a, b) = m.paired(i, j);
        let x: Vec<f64> = a.iter().map(|&v| f64::from(v)).collect();
        let y: Vec<f64> = b.iter().map(|&v| f64::from(v)).collect();
        pairwise.push(PairwiseScore {
            rater_a: ids[0].clone(),
            rater_b: ids[1].clone(),
            pearson_r: or_undefined(Metric::PearsonR, x.len(), pearson_r(&x, &y)).with_raters(ids.clone()),
            spearman_rho: or_undefined(Metric::SpearmanRho, x.len(), spearman_rho(&x, &y)).with_raters(ids),
        });
    }
    let complete: Vec<Vec<Option<f64>>> = m
        .complete_rows()
        .into_iter()
        .map(|r| r.into_iter().map(|v| Some(f64::from(v))).collect())
        .collect();
    let mut notes = Vec::new();
    if m.is_empty() {
        notes.push("no cell met the inclusion policy".to_owned());
    } else if m.has_missing() {
        notes.push(format!(
            "icc_2_1 uses complete cases only ({} of {} units)",
            complete.len(),
            m.n_units()
        ));
    }
    let raters = m.raters.clone();
    let tol = |t| {
        or_undefined(Metric::Tolerance, m.n_units(), tolerance_agreement_multi(&m.cells, t))
            .with_raters(raters.clone())
    };
    let rater_summaries = (0..m.n_raters())
        .map(|r| {
            let values: Vec<f64> = m.column(r).into_iter().flatten().map(f64::from).collect();
            summarize(&m.raters[r], &values)
        })
        .collect();
    ScoreStage {
        dimension,
        policy: policy.to_owned(),
        n_units: m.n_units(),
        raters: raters.clone(),
        pairwise,
        icc_2_1: or_undefined(Metric::Icc21, complete.len(), icc_2_1(&complete)).with_raters(raters.clone()),
        exact: tol(0),
        within_1: tol(1),
        within_2: tol(2),
        rater_summaries,
        notes,
    }
}

/// Every agreement statistic for a closed round.
pub fn agreement_report(
    campaign: &Campaign,
    round_id: &str,
    options: &ReportOptions,
) -> Result<AgreementReport, CampaignError> {
    let round = campaign.round(round_id)?;
    let m1 = campaign.stage1_matrix(round_id)?;
    let m2 = campaign.stage2_matrix(round_id)?;
    let policy = options.cell_policy;
    let dims = [ScoreDimension::Severity, ScoreDimension::Detectability];
    let m3 = dims
        .iter()
        .map(|&d| campaign.stage3_matrix(round_id, d, policy))
        .collect::<Result<Vec<_>, _>>()?;
    let described = policy.describe();

    let (stage1, stage2, stage3) = std::thread::scope(|s| {
        let h1 = s.spawn(|| binary_stage(&m1));
        let h2 = s.spawn(|| binary_stage(&m2));
        let h3: Vec<_> = dims
            .iter()
            .zip(&m3)
            .map(|(&d, m)| {
                let described = &described;
                s.spawn(move || score_stage(m, d, described))
            })
            .collect();
        (
            h1.join().expect("stage 1 worker"),
            h2.join().expect("stage 2 worker"),
            h3.into_iter().map(|h| h.join().expect("stage 3 worker")).collect(),
        )
    });
    Ok(AgreementReport {
        round_id: round_id.to_owned(),
        taxonomy_version: round.taxonomy_version,
        raters: round.reviewer_ids.clone(),
        stage1,
        stage2,
        stage3,
    })
}

fn value_cell(e: &AgreementEstimate) -> String {
    e.value().map_or_else(|| "undefined".to_owned(), fixed3)
}

fn detail_cell(e: &AgreementEstimate) -> String {
    match e.undefined_reason() {
        Some(r) => r.to_owned(),
        None => e.diagnostics.notes.join("; "),
    }
}

struct Row<'a> {
    dimension: &'a str,
    scope: &'a str,
    metric: &'a str,
    rater_a: &'a str,
    rater_b: &'a str,
    value: String,
    n_units: usize,
    detail: String,
}

fn estimate_row<'a>(dimension: &'a str, scope: &'a str, metric: &'a str, pair: (&'a str, &'a str), e: &AgreementEstimate) -> Row<'a> {
    Row {
        dimension,
        scope,
        metric,
        rater_a: pair.0,
        rater_b: pair.1,
        value: value_cell(e),
        n_units: e.n_units,
        detail: detail_cell(e),
    }
}

fn binary_rows(s: &BinaryStage) -> Vec<Row<'_>> {
    let mut rows = Vec::new();
    for p in &s.pairwise {
        let pair = (p.rater_a.as_str(), p.rater_b.as_str());
        rows.push(estimate_row("", "pairwise", "cohen_kappa", pair, &p.cohen_kappa));
        rows.push(estimate_row("", "pairwise", "gwet_ac1", pair, &p.gwet_ac1));
    }
    for (name, e) in [
        ("fleiss_kappa", &s.fleiss_kappa),
        ("gwet_ac1", &s.gwet_ac1),
        ("krippendorff_alpha", &s.krippendorff_alpha),
        ("unanimity", &s.unanimity),
    ] {
        rows.push(estimate_row("", "multi", name, ("", ""), e));
    }
    rows
}

fn score_rows(s: &ScoreStage) -> Vec<Row<'_>> {
    let dim = s.dimension.as_str();
    let mut rows = Vec::new();
    for p in &s.pairwise {
        let pair = (p.rater_a.as_str(), p.rater_b.as_str());
        rows.push(estimate_row(dim, "pairwise", "pearson_r", pair, &p.pearson_r));
        rows.push(estimate_row(dim, "pairwise", "spearman_rho", pair, &p.spearman_rho));
    }
    for (name, e) in [
        ("icc_2_1", &s.icc_2_1),
        ("exact", &s.exact),
        ("within_1", &s.within_1),
        ("within_2", &s.within_2),
    ] {
        rows.push(estimate_row(dim, "multi", name, ("", ""), e));
    }
    for r in &s.rater_summaries {
        for (name, v) in [("mean", r.mean), ("sd", r.sd)] {
            rows.push(Row {
                dimension: dim,
                scope: "rater",
                metric: name,
                rater_a: &r.rater,
                rater_b: "",
                value: v.map_or_else(|| "undefined".to_owned(), fixed3),
                n_units: r.n,
                detail: String::new(),
            });
        }
    }
    rows
}

/// One stage of the report as a comma-separated table with a header row.
///
/// Columns: `stage,dimension,scope,metric,rater_a,rater_b,value,n_units,detail`.
pub fn render_stage_csv(report: &AgreementReport, stage: Stage) -> String {
    let rows: Vec<Row<'_>> = match stage {
        Stage::Subcategory => binary_rows(&report.stage1),
        Stage::FailureMode => binary_rows(&report.stage2),
        Stage::Scores => report.stage3.iter().flat_map(score_rows).collect(),
    };
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(["stage", "dimension", "scope", "metric", "rater_a", "rater_b", "value", "n_units", "detail"])
        .expect("in-memory write");
    let stage_no = stage.number().to_string();
    for r in rows {
        w.write_record([
            stage_no.as_str(),
            r.dimension,
            r.scope,
            r.metric,
            r.rater_a,
            r.rater_b,
            &r.value,
            &r.n_units.to_string(),
            &r.detail,
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

fn text_value(e: &AgreementEstimate) -> String {
    match (e.value(), e.undefined_reason()) {
        (Some(v), _) => fixed3(v),
        (None, Some(r)) => format!("undefined ({r})"),
        (None, None) => "undefined".to_owned(),
    }
}

fn text_binary(out: &mut String, title: &str, s: &BinaryStage) {
    let _ = writeln!(out, "== {title} ({} units, {} raters) ==", s.n_units, s.raters.len());
    let _ = writeln!(out, "Pairwise");
    for p in &s.pairwise {
        let _ = writeln!(
            out,
            "  {} vs {}: kappa {}  AC1 {}  (n={})",
            p.rater_a,
            p.rater_b,
            text_value(&p.cohen_kappa),
            text_value(&p.gwet_ac1),
            p.cohen_kappa.n_units
        );
    }
    let _ = writeln!(out, "Multi-rater");
    for e in [&s.fleiss_kappa, &s.gwet_ac1, &s.krippendorff_alpha, &s.unanimity] {
        let _ = writeln!(out, "  {:<22}{}", e.metric.display_name(), text_value(e));
    }
    for n in &s.notes {
        let _ = writeln!(out, "  note: {n}");
    }
    out.push('\n');
}

fn text_scores(out: &mut String, s: &ScoreStage) {
    let _ = writeln!(out, "== Stage 3: {} ({} units) ==", s.dimension, s.n_units);
    let _ = writeln!(out, "Inclusion: {}", s.policy);
    let _ = writeln!(out, "Pairwise");
    for p in &s.pairwise {
        let _ = writeln!(
            out,
            "  {} vs {}: r {}  rho {}  (n={})",
            p.rater_a,
            p.rater_b,
            text_value(&p.pearson_r),
            text_value(&p.spearman_rho),
            p.pearson_r.n_units
        );
    }
    let _ = writeln!(out, "Multi-rater");
    let _ = writeln!(out, "  {:<22}{}", "ICC(2,1)", text_value(&s.icc_2_1));
    let _ = writeln!(out, "Tolerance");
    for (label, e) in [("exact", &s.exact), ("within 1", &s.within_1), ("within 2", &s.within_2)] {
        let _ = writeln!(out, "  {label:<22}{}", text_value(e));
    }
    let _ = writeln!(out, "Per rater (mean ± SD)");
    for r in &s.rater_summaries {
        let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_owned(), fixed3);
        let _ = writeln!(out, "  {:<22}{} ± {}  (n={})", r.rater, fmt(r.mean), fmt(r.sd), r.n);
    }
    for n in &s.notes {
        let _ = writeln!(out, "  note: {n}");
    }
    out.push('\n');
}

/// The whole report as plain text, one panel per stage.
pub fn render_text(report: &AgreementReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Agreement report: round {} (taxonomy v{}, raters: {})\n",
        report.round_id,
        report.taxonomy_version,
        report.raters.join(", ")
    );
    text_binary(&mut out, "Stage 1: subcategory presence", &report.stage1);
    text_binary(&mut out, "Stage 2: failure-mode presence", &report.stage2);
    for s in &report.stage3 {
        text_scores(&mut out, s);
    }
    out
}
