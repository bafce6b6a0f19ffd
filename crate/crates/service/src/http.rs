//! HTTP API over a locked campaign bundle.
//!
//! Every handler takes the store mutex for its whole (synchronous) body, so
//! requests are serialized against the single writer. Writes return only
//! after the store has synced them to disk.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use fmeca_core::agreement::{agreement_report, render_stage_csv, render_text, ReportOptions};
use fmeca_core::campaign::{
    AnnotationRecord, CampaignError, CellPolicy, FailureInstance, ScoreAggregation, Stage,
};
use fmeca_core::persistence::Store;
use fmeca_core::risk::{render_register_csv, render_risk_matrix, risk_register, Consensus, RiskOptions};
use fmeca_core::scales::anchors;
use fmeca_core::sus::{sus_aggregate_with, sus_score, SdKind, SusResponse};
use serde::Deserialize;
use serde_json::json;

use crate::auth::{authorize, Action, Decision, Session};
use crate::error::ServiceError;

pub type SharedStore = Arc<Mutex<Store>>;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.to_json())).into_response()
    }
}

type ApiResult = Result<Response, ServiceError>;

pub fn router(store: SharedStore) -> Router {
    Router::new()
        .route("/api/taxonomy/{version}", get(taxonomy))
        .route("/api/scales", get(scales))
        .route("/api/rounds", get(rounds))
        .route("/api/rounds/{round}/assignments", get(assignments))
        .route("/api/rounds/{round}/completeness", get(completeness))
        .route("/api/summaries/{id}", get(summary))
        .route(
            "/api/rounds/{round}/annotations/{reviewer}/{summary}",
            get(read_record).put(write_record),
        )
        .route("/api/rounds/{round}/close", post(close_round))
        .route("/api/rounds/{round}/reports/agreement", get(agreement))
        .route("/api/rounds/{round}/reports/risk", get(risk))
        .route("/api/sus", post(sus))
        .fallback(|| async { ServiceError::Campaign(CampaignError::NotFound { kind: "route", id: String::new() }) })
        .with_state(store)
}

/// Serves until the process is stopped.
pub async fn serve(store: Store, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(Arc::new(Mutex::new(store)))).await
}

fn lock(store: &SharedStore) -> MutexGuard<'_, Store> {
    // a panicking handler cannot leave the store half-written: mutations are
    // applied to a clone and swapped in only after they are on disk
    store.lock().unwrap_or_else(|p| p.into_inner())
}

fn session(store: &Store, headers: &HeaderMap) -> Option<Session> {
    let value = headers.get(header::AUTHORIZATION)?.to_str().ok()?;
    let token = value.strip_prefix("Bearer ")?.trim();
    store.token(token).map(Session::from)
}

fn check(store: &Store, headers: &HeaderMap, action: Action<'_>) -> Result<Session, ServiceError> {
    let s = session(store, headers);
    match authorize(s.as_ref(), Utc::now(), &action, store.campaign()) {
        Decision::Allow => Ok(s.expect("allowed sessions exist")),
        Decision::Deny(reason) => Err(ServiceError::Denied(reason)),
    }
}

fn body<T>(r: Result<Json<T>, JsonRejection>) -> Result<T, ServiceError> {
    r.map(|Json(v)| v).map_err(|e| ServiceError::BadRequest(e.body_text()))
}

fn query<T>(r: Result<Query<T>, QueryRejection>) -> Result<T, ServiceError> {
    r.map(|Query(v)| v).map_err(|e| ServiceError::BadRequest(e.body_text()))
}

fn typed(content_type: &'static str, text: String) -> Response {
    ([(header::CONTENT_TYPE, content_type)], text).into_response()
}

async fn taxonomy(State(st): State<SharedStore>, headers: HeaderMap, Path(version): Path<String>) -> ApiResult {
    let store = lock(&st);
    check(&store, &headers, Action::ReadTaxonomy)?;
    let v: u32 = version
        .trim_start_matches('v')
        .parse()
        .map_err(|_| ServiceError::BadRequest(format!("invalid taxonomy version `{version}`")))?;
    Ok(Json(store.campaign().taxonomy(v)?).into_response())
}

async fn scales(State(st): State<SharedStore>, headers: HeaderMap) -> ApiResult {
    let store = lock(&st);
    check(&store, &headers, Action::ReadScales)?;
    Ok(Json(json!({ "anchors": anchors() })).into_response())
}

async fn rounds(State(st): State<SharedStore>, headers: HeaderMap) -> ApiResult {
    let store = lock(&st);
    let s = check(&store, &headers, Action::ListRounds)?;
    let list: Vec<_> = store
        .campaign()
        .rounds()
        .filter(|r| match &s.principal {
            crate::auth::Principal::Operator => true,
            crate::auth::Principal::Reviewer(id) => r.has_reviewer(id),
        })
        .collect();
    Ok(Json(json!({ "rounds": list })).into_response())
}

async fn assignments(
    State(st): State<SharedStore>,
    headers: HeaderMap,
    Path(round_id): Path<String>,
) -> ApiResult {
    let store = lock(&st);
    let s = check(&store, &headers, Action::ReadAssignments { round: &round_id })?;
    let c = store.campaign();
    let round = c.round(&round_id)?;
    let reviewers: Vec<&String> = match &s.principal {
        crate::auth::Principal::Operator => round.reviewer_ids.iter().collect(),
        crate::auth::Principal::Reviewer(id) => round.reviewer_ids.iter().filter(|r| *r == id).collect(),
    };
    let list: Vec<_> = reviewers
        .into_iter()
        .map(|reviewer| {
            let summaries: Vec<_> = round
                .summary_ids
                .iter()
                .map(|sid| {
                    let rec = c.record(&round_id, reviewer, sid);
                    json!({
                        "summary_id": sid,
                        "record_version": rec.map_or(0, |r| r.record_version),
                        "submitted": rec.is_some_and(|r| r.submitted),
                    })
                })
                .collect();
            json!({ "reviewer_id": reviewer, "summaries": summaries })
        })
        .collect();
    Ok(Json(json!({
        "round_id": round.id,
        "status": round.status,
        "taxonomy_version": round.taxonomy_version,
        "assignments": list,
    }))
    .into_response())
}

async fn completeness(
    State(st): State<SharedStore>,
    headers: HeaderMap,
    Path(round_id): Path<String>,
) -> ApiResult {
    let store = lock(&st);
    let s = check(&store, &headers, Action::ReadAssignments { round: &round_id })?;
    let mut report = store.campaign().completeness(&round_id)?;
    if let crate::auth::Principal::Reviewer(me) = &s.principal {
        report.missing.retain(|(r, _)| r == me);
        report.submitted.retain(|r, _| r == me);
        report.progress.retain(|r, _| r == me);
    }
    Ok(Json(report).into_response())
}

async fn summary(State(st): State<SharedStore>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    let store = lock(&st);
    check(&store, &headers, Action::ReadSummary { summary: &id })?;
    let doc = store.campaign().summary(&id).ok_or(CampaignError::NotFound {
        kind: "summary",
        id: id.clone(),
    })?;
    Ok(Json(doc).into_response())
}

async fn read_record(
    State(st): State<SharedStore>,
    headers: HeaderMap,
    Path((round_id, reviewer, summary_id)): Path<(String, String, String)>,
) -> ApiResult {
    let store = lock(&st);
    check(&store, &headers, Action::ReadRecord { round: &round_id, reviewer: &reviewer })?;
    let c = store.campaign();
    if let Some(rec) = c.record(&round_id, &reviewer, &summary_id) {
        return Ok(Json(rec).into_response());
    }
    let round = c.round(&round_id)?;
    if !round.has_reviewer(&reviewer) {
        return Err(CampaignError::NotFound { kind: "reviewer", id: reviewer }.into());
    }
    if !round.has_summary(&summary_id) {
        return Err(CampaignError::NotFound { kind: "summary", id: summary_id }.into());
    }
    let t = c.taxonomy(round.taxonomy_version)?;
    Ok(Json(AnnotationRecord::blank(round, t, &reviewer, &summary_id)).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PutRecord {
    expected_version: u64,
    flags: BTreeMap<String, bool>,
    #[serde(default)]
    instances: Vec<FailureInstance>,
    #[serde(default)]
    submitted: bool,
}

async fn write_record(
    State(st): State<SharedStore>,
    headers: HeaderMap,
    Path((round_id, reviewer, summary_id)): Path<(String, String, String)>,
    payload: Result<Json<PutRecord>, JsonRejection>,
) -> ApiResult {
    let mut store = lock(&st);
    check(&store, &headers, Action::WriteRecord { round: &round_id, reviewer: &reviewer })?;
    let put = body(payload)?;
    let record = AnnotationRecord {
        round_id,
        reviewer_id: reviewer,
        summary_id,
        flags: put.flags,
        instances: put.instances,
        record_version: 0,
        submitted: put.submitted,
    };
    let version = store.record_annotation(record, put.expected_version)?;
    Ok(Json(json!({ "record_version": version })).into_response())
}

#[derive(Debug, Deserialize)]
struct CloseQuery {
    #[serde(default)]
    force: bool,
}

async fn close_round(
    State(st): State<SharedStore>,
    headers: HeaderMap,
    Path(round_id): Path<String>,
    q: Result<Query<CloseQuery>, QueryRejection>,
) -> ApiResult {
    let mut store = lock(&st);
    check(&store, &headers, Action::CloseRound { round: &round_id })?;
    let q = query(q)?;
    let round = store.close_round(&round_id, q.force)?;
    Ok(Json(round).into_response())
}

#[derive(Debug, Deserialize)]
struct AgreementQuery {
    stage: Option<u8>,
    format: Option<String>,
    min_raters: Option<usize>,
    instance_aggregation: Option<String>,
}

fn aggregation(s: Option<&str>, default: ScoreAggregation) -> Result<ScoreAggregation, ServiceError> {
    s.map_or(Ok(default), |s| s.parse().map_err(ServiceError::BadRequest))
}

async fn agreement(
    State(st): State<SharedStore>,
    headers: HeaderMap,
    Path(round_id): Path<String>,
    q: Result<Query<AgreementQuery>, QueryRejection>,
) -> ApiResult {
    let store = lock(&st);
    check(&store, &headers, Action::ReadReport { round: &round_id })?;
    let q = query(q)?;
    let stage = q
        .stage
        .map(|n| Stage::from_number(n).ok_or_else(|| ServiceError::BadRequest(format!("stage must be 1, 2 or 3, got {n}"))))
        .transpose()?;
    let options = ReportOptions {
        cell_policy: CellPolicy {
            min_raters: q.min_raters,
            instance_aggregation: aggregation(q.instance_aggregation.as_deref(), ScoreAggregation::Max)?,
        },
    };
    let report = agreement_report(store.campaign(), &round_id, &options)?;
    match (q.format.as_deref().unwrap_or("json"), stage) {
        ("json", None) => Ok(Json(report).into_response()),
        ("json", Some(Stage::Subcategory)) => Ok(Json(report.stage1).into_response()),
        ("json", Some(Stage::FailureMode)) => Ok(Json(report.stage2).into_response()),
        ("json", Some(Stage::Scores)) => Ok(Json(report.stage3).into_response()),
        ("csv", Some(stage)) => Ok(typed("text/csv; charset=utf-8", render_stage_csv(&report, stage))),
        ("csv", None) => Err(ServiceError::BadRequest("format=csv needs a stage".into())),
        ("text", _) => Ok(typed("text/plain; charset=utf-8", render_text(&report))),
        (other, _) => Err(ServiceError::BadRequest(format!("unknown format `{other}` (json, csv or text)"))),
    }
}

#[derive(Debug, Deserialize)]
struct RiskQuery {
    format: Option<String>,
    consensus: Option<String>,
    aggregation: Option<String>,
    instance_aggregation: Option<String>,
}

async fn risk(
    State(st): State<SharedStore>,
    headers: HeaderMap,
    Path(round_id): Path<String>,
    q: Result<Query<RiskQuery>, QueryRejection>,
) -> ApiResult {
    let store = lock(&st);
    check(&store, &headers, Action::ReadReport { round: &round_id })?;
    let q = query(q)?;
    let defaults = RiskOptions::default();
    let options = RiskOptions {
        aggregation: aggregation(q.aggregation.as_deref(), defaults.aggregation)?,
        consensus: match q.consensus.as_deref() {
            None => defaults.consensus,
            Some(s) => s.parse::<Consensus>().map_err(ServiceError::BadRequest)?,
        },
        instance_aggregation: aggregation(q.instance_aggregation.as_deref(), defaults.instance_aggregation)?,
    };
    let register = risk_register(store.campaign(), &round_id, &options)?;
    match q.format.as_deref().unwrap_or("json") {
        "json" => Ok(Json(register).into_response()),
        "csv" => Ok(typed("text/csv; charset=utf-8", render_register_csv(&register))),
        "matrix" => Ok(typed("text/plain; charset=utf-8", render_risk_matrix(&register))),
        other => Err(ServiceError::BadRequest(format!("unknown format `{other}` (json, csv or matrix)"))),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SusRequest {
    responses: Vec<SusResponse>,
    #[serde(default)]
    sd: SdKind,
}

async fn sus(
    State(st): State<SharedStore>,
    headers: HeaderMap,
    payload: Result<Json<SusRequest>, JsonRejection>,
) -> ApiResult {
    {
        let store = lock(&st);
        check(&store, &headers, Action::ScoreSus)?;
    }
    let req = body(payload)?;
    let results = req.responses.iter().map(sus_score).collect::<Result<Vec<_>, _>>()?;
    let agg = sus_aggregate_with(&results, req.sd, &Default::default())?;
    Ok(Json(json!({ "results": results, "aggregate": agg })).into_response())
}
