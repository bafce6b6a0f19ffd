//! Randomized but reproducible campaigns.

#![allow(dead_code)]

use fmeca_core::campaign::{AnnotationRecord, Campaign, Reviewer, SummaryDocument};
use fmeca_core::scales::{DetectabilityScore, SeverityScore};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn reviewer(id: &str) -> Reviewer {
    Reviewer {
        id: id.into(),
        display_name: id.to_uppercase(),
        role: "clinician".into(),
    }
}

pub fn summary(id: &str) -> SummaryDocument {
    SummaryDocument {
        id: id.into(),
        source_text: format!("Discharge letter {id}.\nLine two.\n"),
        generated_summary: format!("Summary of {id}."),
        metadata: [("service".to_owned(), "obstetrics".to_owned())].into(),
    }
}

pub fn summary_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i:02}")).collect()
}

/// A campaign with one open round `r1` on taxonomy v3 and no records.
pub fn open_campaign(n_summaries: usize, reviewers: &[&str]) -> Campaign {
    let mut c = Campaign::new("synthetic");
    for r in reviewers {
        c.add_reviewer(reviewer(r)).unwrap();
    }
    for s in summary_ids(n_summaries) {
        c.add_summary(summary(&s)).unwrap();
    }
    c.open_round(
        "r1",
        3,
        reviewers.iter().map(|r| r.to_string()).collect(),
        summary_ids(n_summaries),
    )
    .unwrap();
    c
}

/// A random submitted record: a summary-level truth per mode with
/// probability `p`, which each reviewer reproduces 85% of the time.
pub fn random_record(c: &Campaign, rng: &mut StdRng, truth: &[bool], reviewer: &str, summary: &str) -> AnnotationRecord {
    let round = c.round("r1").unwrap();
    let t = c.taxonomy(round.taxonomy_version).unwrap();
    let mut rec = AnnotationRecord::blank(round, t, reviewer, summary);
    for (i, mode) in t.failure_modes.iter().enumerate() {
        let flagged = if rng.gen_bool(0.85) { truth[i] } else { !truth[i] };
        if flagged {
            for _ in 0..rng.gen_range(1..=2) {
                rec.add_instance(
                    &mode.id,
                    "seen",
                    SeverityScore::new(rng.gen_range(1..=5)).unwrap(),
                    DetectabilityScore::new(rng.gen_range(1..=5)).unwrap(),
                );
            }
        }
    }
    rec.submitted = true;
    rec
}

/// Per-summary ground truth flags, `p` chance each.
pub fn truths(rng: &mut StdRng, n_summaries: usize, n_modes: usize, p: f64) -> Vec<Vec<bool>> {
    (0..n_summaries)
        .map(|_| (0..n_modes).map(|_| rng.gen_bool(p)).collect())
        .collect()
}

/// Every reviewer submits every summary (some twice); the round is left open.
pub fn filled_campaign(seed: u64, n_summaries: usize, reviewers: &[&str], p: f64) -> Campaign {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut c = open_campaign(n_summaries, reviewers);
    let truth = truths(&mut rng, n_summaries, 14, p);
    for (si, s) in summary_ids(n_summaries).iter().enumerate() {
        for r in reviewers {
            let rec = random_record(&c, &mut rng, &truth[si], r, s);
            let v = c.record_annotation(rec, 0).unwrap();
            if rng.gen_bool(0.2) {
                let rec = random_record(&c, &mut rng, &truth[si], r, s);
                c.record_annotation(rec, v).unwrap();
            }
        }
    }
    c
}

/// [`filled_campaign`] with `r1` closed.
pub fn closed_campaign(seed: u64, n_summaries: usize, reviewers: &[&str], p: f64) -> Campaign {
    let mut c = filled_campaign(seed, n_summaries, reviewers, p);
    c.close_round("r1", false).unwrap();
    c
}

/// Every report rendering of round `r1`, keyed by a file name.
pub fn exports(c: &Campaign) -> Vec<(String, String)> {
    use fmeca_core::agreement::{agreement_report, render_stage_csv, render_text, ReportOptions};
    use fmeca_core::campaign::Stage;
    use fmeca_core::risk::{render_register_csv, render_risk_matrix, risk_register, RiskOptions};

    let report = agreement_report(c, "r1", &ReportOptions::default()).unwrap();
    let register = risk_register(c, "r1", &RiskOptions::default()).unwrap();
    let mut out = vec![
        ("agreement.json".to_owned(), serde_json::to_string_pretty(&report).unwrap()),
        ("agreement.txt".to_owned(), render_text(&report)),
        ("risk.csv".to_owned(), render_register_csv(&register)),
        ("risk_matrix.txt".to_owned(), render_risk_matrix(&register)),
        ("risk.json".to_owned(), serde_json::to_string_pretty(&register).unwrap()),
    ];
    for s in [Stage::Subcategory, Stage::FailureMode, Stage::Scores] {
        out.push((format!("agreement_stage{}.csv", s.number()), render_stage_csv(&report, s)));
    }
    out
}
