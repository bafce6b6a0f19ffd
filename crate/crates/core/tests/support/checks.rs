//! Whole-criterion checks that report instead of panicking, for the
//! acceptance run. Each returns a one-line summary on success.

#![allow(dead_code)]

use std::collections::BTreeMap;

use fmeca_core::persistence::{load_campaign, save_campaign};
use fmeca_core::risk::rpn;
use fmeca_core::scales::{occurrence_score, scale_anchor, DetectabilityScore, Dimension, OccurrenceScore, Ratio, SeverityScore};
use fmeca_core::sus::{parse_responses, sus_aggregate, sus_grade, sus_score};
use fmeca_core::taxonomy::{default_merge_map, default_taxonomy, migrate_flags, subcategory_of, validate_taxonomy};

use super::fixtures::SUS_CSV;
use super::round::{closed_campaign, exports};
use super::tables::{FINAL_TABLE, FIRST_VERSION_MODES};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn sus() -> Check {
    let responses = parse_responses(SUS_CSV.as_bytes()).map_err(|e| e.to_string())?;
    let results: Vec<_> = responses.iter().map(|r| sus_score(r).unwrap()).collect();
    let scores: Vec<f64> = results.iter().map(|r| r.score).collect();
    ensure(scores == [87.5, 77.5, 72.5], || format!("scores {scores:?}"))?;
    let agg = sus_aggregate(&results).map_err(|e| e.to_string())?;
    ensure((agg.mean - 79.2).abs() <= 0.05, || format!("mean {}", agg.mean))?;
    let g = &agg.mean_grade;
    ensure(g.grade == "B+" && g.label == "Good", || format!("grade {}/{}", g.grade, g.label))?;
    for (score, want) in [(68.0, "C"), (50.9, "F"), (0.0, "F"), (80.3, "A"), (100.0, "A")] {
        let got = sus_grade(score).unwrap().grade;
        ensure(got == want, || format!("{score} graded {got}, want {want}"))?;
    }
    Ok(format!("mean {:.3} {}/{}", agg.mean, g.grade, g.label))
}

pub fn taxonomy() -> Check {
    let v3 = default_taxonomy(3).map_err(|e| e.to_string())?;
    ensure(validate_taxonomy(&v3).is_empty(), || "v3 has violations".into())?;
    ensure(v3.failure_modes.len() == 14 && v3.categories.len() == 6, || {
        format!("v3 has {} modes, {} categories", v3.failure_modes.len(), v3.categories.len())
    })?;
    for (fm, (cat, sub, label)) in v3.failure_modes.iter().zip(FINAL_TABLE) {
        let sc = subcategory_of(&fm.id, &v3).map_err(|e| e.to_string())?;
        let c = v3.category(&sc.category_id).ok_or("dangling category")?;
        ensure(fm.label == label && c.label == cat && (sub.is_empty() || sc.label == sub), || {
            format!("{} does not match {label:?}", fm.id)
        })?;
    }
    let v1 = default_taxonomy(1).map_err(|e| e.to_string())?;
    let labels: Vec<&str> = v1.failure_modes.iter().map(|m| m.label.as_str()).collect();
    ensure(labels == FIRST_VERSION_MODES, || format!("v1 labels {labels:?}"))?;

    let m = default_merge_map(1, 3).map_err(|e| e.to_string())?;
    m.validate(&v1, &v3).map_err(|e| e.to_string())?;
    let ids: Vec<&str> = v1.failure_mode_ids().collect();
    for mask in 0u32..(1 << ids.len()) {
        let flags: BTreeMap<String, bool> =
            ids.iter().enumerate().map(|(i, id)| (id.to_string(), mask & (1 << i) != 0)).collect();
        let mut want: BTreeMap<String, bool> = BTreeMap::new();
        for (i, id) in ids.iter().enumerate() {
            *want.entry(m.mapping[*id].clone()).or_insert(false) |= mask & (1 << i) != 0;
        }
        let got = migrate_flags(&flags, &m).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("migration differs at mask {mask:#x}"))?;
    }
    Ok(format!("v3 14/6, v1 20, {} flag combinations", 1u32 << ids.len()))
}

fn o(n: u64, d: u64) -> u8 {
    occurrence_score(Ratio::new(n, d).unwrap()).value()
}

/// Bucket by interval membership, independent of the library's search.
fn bucket(n: u64, d: u64) -> Vec<u8> {
    let edges = [(0, 1), (1, 100), (10, 100), (60, 100), (90, 100)];
    let ge = |(a, b): (u64, u64)| n * b >= a * d;
    (0..5).filter(|&i| ge(edges[i]) && (i == 4 || !ge(edges[i + 1]))).map(|i| i as u8 + 1).collect()
}

pub fn occurrence_and_rpn() -> Check {
    let rows = [("Very low", "< 1%"), ("Low", "1-10 %"), ("Medium", "10 - 60 %"), ("High", "60 - 90 %"), ("Very high", "> 90 %")];
    for (i, (label, definition)) in rows.iter().enumerate() {
        let a = scale_anchor(Dimension::Occurrence, i as i64 + 1).map_err(|e| e.to_string())?;
        ensure(a.label == *label && a.definition == *definition, || format!("anchor {}", i + 1))?;
    }
    for ((n, d), want) in [((5, 1000), 1), ((1, 100), 2), ((1, 10), 3), ((9, 36), 3), ((6, 10), 4), ((9, 10), 5), ((1, 1), 5)] {
        ensure(o(n, d) == want, || format!("{n}/{d} -> {}", o(n, d)))?;
    }
    let mut sweep = 0;
    for d in (1..=60).chain([10_000]) {
        for n in 0..=d {
            let hits = bucket(n, d);
            ensure(hits.len() == 1 && hits[0] == o(n, d), || format!("{n}/{d}: {hits:?} vs {}", o(n, d)))?;
            sweep += 1;
        }
    }
    let r = |a: i64, b: i64, c: i64| {
        i64::from(rpn(OccurrenceScore::new(a).unwrap(), SeverityScore::new(b).unwrap(), DetectabilityScore::new(c).unwrap()))
    };
    for a in 1..=5 {
        for b in 1..=5 {
            for c in 1..=5 {
                let v = r(a, b, c);
                ensure(v == a * b * c && (1..=125).contains(&v), || format!("rpn({a},{b},{c}) = {v}"))?;
                ensure((a == 5 || r(a + 1, b, c) > v) && (b == 5 || r(a, b + 1, c) > v) && (c == 5 || r(a, b, c + 1) > v), || {
                    format!("rpn not monotone at ({a},{b},{c})")
                })?;
            }
        }
    }
    Ok(format!("{sweep} ratios swept, 125 triples"))
}

pub fn stage1_derivation(seed: u64) -> Check {
    let c = closed_campaign(seed, 36, &["ana", "ben", "chloe"], 0.15);
    let t = c.taxonomy(3).map_err(|e| e.to_string())?;
    let m1 = c.stage1_matrix("r1").map_err(|e| e.to_string())?;
    let m2 = c.stage2_matrix("r1").map_err(|e| e.to_string())?;
    ensure(m1.n_units() == 360 && m2.n_units() == 504, || "unexpected matrix shape".into())?;
    let owner: BTreeMap<&str, &str> = t.failure_modes.iter().map(|m| (m.id.as_str(), m.subcategory_id.as_str())).collect();
    let mut derived: BTreeMap<(&str, &str, usize), u8> = BTreeMap::new();
    for (u, key) in m2.units.iter().enumerate() {
        for r in 0..3 {
            *derived.entry((&key.summary_id, owner[key.unit_id.as_str()], r)).or_insert(0) |= m2.cells[u][r].unwrap_or(0);
        }
    }
    let mut set = 0;
    for (u, key) in m1.units.iter().enumerate() {
        for r in 0..3 {
            let want = derived[&(key.summary_id.as_str(), key.unit_id.as_str(), r)];
            ensure(m1.cells[u][r] == Some(want), || format!("{key:?} rater {r}"))?;
            set += usize::from(want);
        }
    }
    ensure(set > 0 && set < 1080, || format!("degenerate round ({set} set)"))?;
    Ok(format!("1080 cells, {set} set"))
}

pub fn persistence_roundtrip(seed: u64) -> Check {
    let c = closed_campaign(seed, 12, &["ana", "ben", "chloe"], 0.2);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    save_campaign(&c, dir.path()).map_err(|e| e.to_string())?;
    let back = load_campaign(dir.path()).map_err(|e| e.to_string())?;
    let (a, b) = (exports(&c), exports(&back));
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        ensure(x.as_bytes() == y.as_bytes(), || format!("{name} differs after reload"))?;
    }
    Ok(format!("{} exports identical", a.len()))
}
