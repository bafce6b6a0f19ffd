#![allow(dead_code)]

#[path = "../../../core/tests/support/mod.rs"]
pub mod support;


use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::{Duration, Utc};
use fmeca_core::campaign::AnnotationRecord;
use fmeca_core::persistence::{hash_token, Store, StoredPrincipal, StoredToken};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

pub const OPERATOR: &str = "tok-operator";
pub const STALE: &str = "tok-stale";

pub fn token_of(reviewer: &str) -> String {
    format!("tok-{reviewer}")
}

/// A bundle holding [`support::round::open_campaign`] plus one token per
/// reviewer, an operator token and an expired operator token.
pub fn fixture_store(root: &Path, n_summaries: usize, reviewers: &[&str]) -> Store {
    let mut store = Store::create(root, support::round::open_campaign(n_summaries, reviewers)).unwrap();
    let mut add = |tok: &str, principal, expires_at| {
        store
            .add_token(StoredToken {
                token_sha256: hash_token(tok),
                principal,
                expires_at,
            })
            .unwrap()
    };
    add(OPERATOR, StoredPrincipal::Operator, None);
    add(STALE, StoredPrincipal::Operator, Some(Utc::now() - Duration::hours(1)));
    for r in reviewers {
        add(&token_of(r), StoredPrincipal::Reviewer { reviewer_id: r.to_string() }, None);
    }
    store
}

pub struct App {
    pub dir: tempfile::TempDir,
    pub root: PathBuf,
    pub router: Router,
}

pub fn app(n_summaries: usize, reviewers: &[&str]) -> App {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("bundle");
    let store = fixture_store(&root, n_summaries, reviewers);
    let router = fmeca_service::http::router(Arc::new(Mutex::new(store)));
    App { dir, root, router }
}

#[derive(Debug, Clone)]
pub struct Reply {
    pub status: u16,
    pub content_type: String,
    pub body: String,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.body).unwrap_or_else(|e| panic!("not JSON ({e}): {}", self.body))
    }

    pub fn error_class(&self) -> String {
        self.json()["error"]["class"].as_str().unwrap_or_default().to_owned()
    }

    pub fn reason(&self) -> String {
        self.json()["error"]["reason"].as_str().unwrap_or_default().to_owned()
    }
}

pub async fn call(router: &Router, method: &str, uri: &str, token: Option<&str>, body: Option<&Value>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = router.clone().oneshot(req).await.unwrap();
    let status = resp.status().as_u16();
    let content_type = resp
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_owned())
        .unwrap_or_default();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    Reply {
        status,
        content_type,
        body: String::from_utf8(bytes.to_vec()).unwrap(),
    }
}

pub fn record_uri(round: &str, reviewer: &str, summary: &str) -> String {
    format!("/api/rounds/{round}/annotations/{reviewer}/{summary}")
}

/// PUT body carrying `rec`'s content.
pub fn put_body(rec: &AnnotationRecord, expected_version: u64) -> Value {
    json!({
        "expected_version": expected_version,
        "flags": rec.flags,
        "instances": rec.instances,
        "submitted": rec.submitted,
    })
}

/// A blank-but-submitted record body for a v3 round.
pub fn blank_body(expected_version: u64) -> Value {
    let t = fmeca_core::taxonomy::default_taxonomy(3).unwrap();
    let flags: BTreeMap<&str, bool> = t.failure_mode_ids().map(|id| (id, false)).collect();
    json!({ "expected_version": expected_version, "flags": flags, "instances": [], "submitted": true })
}

pub fn ok(status: u16) -> bool {
    status == StatusCode::OK.as_u16()
}

/// Minimal HTTP/1.1 exchange over a fresh connection.
pub fn http(addr: &str, method: &str, path: &str, token: Option<&str>, body: Option<&Value>) -> std::io::Result<Reply> {
    let mut s = TcpStream::connect(addr)?;
    s.set_read_timeout(Some(std::time::Duration::from_secs(20)))?;
    let payload = body.map(|b| b.to_string()).unwrap_or_default();
    let mut req = format!("{method} {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\nContent-Length: {}\r\n", payload.len());
    if body.is_some() {
        req.push_str("Content-Type: application/json\r\n");
    }
    if let Some(t) = token {
        req.push_str(&format!("Authorization: Bearer {t}\r\n"));
    }
    req.push_str("\r\n");
    req.push_str(&payload);
    s.write_all(req.as_bytes())?;
    let mut raw = String::new();
    s.read_to_string(&mut raw)?;
    let (head, body) = raw
        .split_once("\r\n\r\n")
        .ok_or_else(|| std::io::Error::other(format!("truncated response: {raw:?}")))?;
    let status = head
        .split_whitespace()
        .nth(1)
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| std::io::Error::other("bad status line"))?;
    let content_type = head
        .lines()
        .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-type:").map(|v| v.trim().to_owned()))
        .unwrap_or_default();
    Ok(Reply { status, content_type, body: body.to_owned() })
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fmeca")
}

/// `fmeca serve` on an ephemeral port; returns the child and its address.
pub fn spawn_server(bundle: &Path) -> (Child, String) {
    let mut child = Command::new(bin())
        .args(["serve", bundle.to_str().unwrap(), "--bind", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let v: Value = serde_json::from_str(&line).unwrap_or_else(|_| {
        let mut err = String::new();
        child.stderr.take().unwrap().read_to_string(&mut err).unwrap();
        panic!("server did not start: {line:?} {err}")
    });
    (child, v["listening"].as_str().unwrap().to_owned())
}

/// Every file under `root` with its bytes, sorted by path.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}
