//! Campaign bundles on disk and the tabular matrix interchange format.
//!
//! A bundle is a directory:
//!
//! ```text
//! manifest.json                  format version, campaign id, per-file digests
//! taxonomies/v<N>.json
//! merge_maps/v<A>_to_v<B>.json
//! reviewers.json
//! rounds.json
//! summaries/<id>/source.txt      verbatim bytes
//! summaries/<id>/summary.txt     verbatim bytes
//! summaries/<id>/metadata.json
//! logs/<round>/<reviewer>.jsonl  append-only, one accepted write per line
//! tokens.json                    sha256 of each access token and its principal
//! exports/                       generated reports, not covered by the manifest
//! .lock                          held by the single writer
//! ```
//!
//! The manifest records a sha256 and byte length per file. For logs the
//! digest covers the prefix written when the manifest was last updated; whole
//! lines appended after it are accepted on load and a torn final line is
//! ignored, which is what a crash between a log append and the manifest
//! update leaves behind. See `docs/formats.md` for field-level schemas.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::campaign::{
    AnnotationMatrix, AnnotationRecord, Campaign, CampaignError, LogEntry, Reviewer,
    Round, Stage, SummaryDocument, UnitKey,
};
use crate::taxonomy::{MergeMap, Taxonomy};

pub const FORMAT_VERSION: u32 = 1;
pub const SUPPORTED_FORMAT_VERSIONS: RangeInclusive<u32> = 1..=1;

const MANIFEST: &str = "manifest.json";
const REVIEWERS: &str = "reviewers.json";
const ROUNDS: &str = "rounds.json";
const TOKENS: &str = "tokens.json";
const LOCK: &str = ".lock";
const EXPORTS: &str = "exports";

#[derive(Debug, Error)]
pub enum PersistenceError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{file}: at `{field}`: {message}")]
    Schema {
        file: String,
        field: String,
        message: String,
    },
    #[error("{file}: format version {found} is not supported (supported: {}..={})", supported.start(), supported.end())]
    Version {
        file: String,
        found: u64,
        supported: RangeInclusive<u32>,
    },
    #[error("{file}: {message}")]
    Referential { file: String, message: String },
    #[error("{file}: {message}")]
    Integrity { file: String, message: String },
    #[error("bundle {path} is locked by another writer")]
    Locked { path: String },
    #[error("{path}: already exists and is not an empty directory")]
    Exists { path: String },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: expected {expected} columns, found {found}")]
    Columns {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Campaign(#[from] CampaignError),
}

impl PersistenceError {
    pub fn class(&self) -> &'static str {
        match self {
            PersistenceError::Io { .. } => "io",
            PersistenceError::Schema { .. } => "schema",
            PersistenceError::Version { .. } => "version",
            PersistenceError::Referential { .. } => "referential",
            PersistenceError::Integrity { .. } => "integrity",
            PersistenceError::Locked { .. } => "locked",
            PersistenceError::Exists { .. } => "exists",
            PersistenceError::Parse { .. } => "parse",
            PersistenceError::Columns { .. } => "schema",
            PersistenceError::Campaign(e) => e.class(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PersistenceError + '_ {
    move |source| PersistenceError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileDigest {
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    fn of(data: &[u8]) -> Self {
        FileDigest {
            sha256: hex::encode(Sha256::digest(data)),
            bytes: data.len() as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub campaign_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<DateTime<Utc>>,
    /// Bundle-relative path (with `/`) to digest.
    pub files: BTreeMap<String, FileDigest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StoredPrincipal {
    Operator,
    Reviewer { reviewer_id: String },
}

/// An access token as kept on disk: only its sha256 is stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredToken {
    pub token_sha256: String,
    pub principal: StoredPrincipal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expires_at: Option<DateTime<Utc>>,
}

pub fn hash_token(token: &str) -> String {
    hex::encode(Sha256::digest(token.as_bytes()))
}

fn taxonomy_path(version: u32) -> String {
    format!("taxonomies/v{version}.json")
}

fn merge_map_path(m: &MergeMap) -> String {
    format!("merge_maps/v{}_to_v{}.json", m.from_version, m.to_version)
}

fn log_path(round: &str, reviewer: &str) -> String {
    format!("logs/{round}/{reviewer}.jsonl")
}

fn is_log_path(rel: &str) -> bool {
    rel.starts_with("logs/")
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("entity types serialize");
    out.push(b'\n');
    out
}

fn log_line(entry: &LogEntry) -> Vec<u8> {
    let mut line = serde_json::to_vec(entry).expect("log entries serialize");
    line.push(b'\n');
    line
}

/// Every non-log file of a bundle, keyed by relative path.
fn entity_files(c: &Campaign, tokens: &[StoredToken]) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for t in c.taxonomies.values() {
        files.insert(taxonomy_path(t.version), pretty(t));
    }
    for m in &c.merge_maps {
        files.insert(merge_map_path(m), pretty(m));
    }
    files.insert(REVIEWERS.to_owned(), pretty(&c.reviewers.values().collect::<Vec<_>>()));
    files.insert(ROUNDS.to_owned(), pretty(&c.rounds.values().collect::<Vec<_>>()));
    for s in c.summaries.values() {
        let dir = format!("summaries/{}", s.id);
        files.insert(format!("{dir}/source.txt"), s.source_text.as_bytes().to_vec());
        files.insert(format!("{dir}/summary.txt"), s.generated_summary.as_bytes().to_vec());
        files.insert(format!("{dir}/metadata.json"), pretty(&s.metadata));
    }
    files.insert(TOKENS.to_owned(), pretty(&tokens));
    files
}

fn log_files(c: &Campaign) -> BTreeMap<String, Vec<u8>> {
    c.logs
        .iter()
        .map(|((round, reviewer), entries)| {
            (log_path(round, reviewer), entries.iter().flat_map(log_line).collect())
        })
        .collect()
}

fn sync_dir(dir: &Path) -> Result<(), PersistenceError> {
    File::open(dir).and_then(|d| d.sync_all()).map_err(io_err(dir))
}

/// Replaces `path` with `data` via a synced temporary file and a rename.
fn write_atomic(path: &Path, data: &[u8]) -> Result<(), PersistenceError> {
    let dir = path.parent().expect("bundle files live in a directory");
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let name = path.file_name().expect("file name").to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(data).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))?;
    sync_dir(dir)
}

fn read(path: &Path) -> Result<Vec<u8>, PersistenceError> {
    fs::read(path).map_err(io_err(path))
}

fn parse_json<T: DeserializeOwned>(file: &str, data: &[u8]) -> Result<T, PersistenceError> {
    let de = &mut serde_json::Deserializer::from_slice(data);
    serde_path_to_error::deserialize(de).map_err(|e| PersistenceError::Schema {
        file: file.to_owned(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

fn utf8(file: &str, data: Vec<u8>) -> Result<String, PersistenceError> {
    String::from_utf8(data).map_err(|_| PersistenceError::Schema {
        file: file.to_owned(),
        field: ".".to_owned(),
        message: "not valid UTF-8".to_owned(),
    })
}

/// Sorted names of the entries of `dir`; empty if it does not exist.
fn list_dir(dir: &Path) -> Result<Vec<String>, PersistenceError> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(dir)(e)),
    };
    let mut names = Vec::new();
    for e in entries {
        let e = e.map_err(io_err(dir))?;
        let name = e.file_name().to_string_lossy().into_owned();
        if !name.starts_with('.') {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

/// Every file under `root` except the manifest, the lock, temporaries and exports.
fn walk(root: &Path, rel: &str, out: &mut Vec<String>) -> Result<(), PersistenceError> {
    for name in list_dir(&root.join(rel))? {
        let child = if rel.is_empty() { name.clone() } else { format!("{rel}/{name}") };
        if child == MANIFEST || child == EXPORTS {
            continue;
        }
        if root.join(&child).is_dir() {
            walk(root, &child, out)?;
        } else {
            out.push(child);
        }
    }
    Ok(())
}

/// Reads and checks the manifest; the format version is checked before the schema.
pub fn read_manifest(root: &Path) -> Result<Manifest, PersistenceError> {
    let data = read(&root.join(MANIFEST))?;
    let raw: serde_json::Value = parse_json(MANIFEST, &data)?;
    let version = raw.get("format_version").and_then(serde_json::Value::as_u64);
    match version {
        None => {
            return Err(PersistenceError::Schema {
                file: MANIFEST.to_owned(),
                field: "format_version".to_owned(),
                message: "missing or not an integer".to_owned(),
            })
        }
        Some(v) if !SUPPORTED_FORMAT_VERSIONS.contains(&(v as u32)) || v > u64::from(u32::MAX) => {
            return Err(PersistenceError::Version {
                file: MANIFEST.to_owned(),
                found: v,
                supported: SUPPORTED_FORMAT_VERSIONS,
            })
        }
        Some(_) => {}
    }
    parse_json(MANIFEST, &data)
}

/// Complete lines of a log file and the length of the bytes they span.
fn complete_lines(data: &[u8]) -> (Vec<&[u8]>, usize) {
    let end = data.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let lines = data[..end]
        .split(|&b| b == b'\n')
        .filter(|l| !l.is_empty())
        .collect();
    (lines, end)
}

fn referential(file: &str, err: CampaignError) -> PersistenceError {
    match err {
        CampaignError::NotFound { .. } => PersistenceError::Referential {
            file: file.to_owned(),
            message: err.to_string(),
        },
        CampaignError::Taxonomy(ref t) if err.class() == "not_found" => PersistenceError::Referential {
            file: file.to_owned(),
            message: t.to_string(),
        },
        other => PersistenceError::Schema {
            file: file.to_owned(),
            field: ".".to_owned(),
            message: other.to_string(),
        },
    }
}

/// A fully loaded bundle.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub manifest: Manifest,
    pub campaign: Campaign,
    pub tokens: Vec<StoredToken>,
}

/// Loads and verifies a bundle without taking the writer lock.
pub fn load_bundle(root: &Path) -> Result<Bundle, PersistenceError> {
    let manifest = read_manifest(root)?;
    let mut c = Campaign::empty(manifest.campaign_id.clone());
    c.created_at = manifest.created_at;
    let mut seen: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    let mut load = |rel: String| -> Result<(String, Vec<u8>), PersistenceError> {
        let data = read(&root.join(&rel))?;
        seen.insert(rel.clone(), data.clone());
        Ok((rel, data))
    };

    for name in list_dir(&root.join("taxonomies"))? {
        let (rel, data) = load(format!("taxonomies/{name}"))?;
        let t: Taxonomy = parse_json(&rel, &data)?;
        if rel != taxonomy_path(t.version) {
            return Err(PersistenceError::Schema {
                file: rel,
                field: "version".to_owned(),
                message: format!("file name does not match version {}", t.version),
            });
        }
        c.add_taxonomy(t).map_err(|e| referential(&rel, e))?;
    }
    for name in list_dir(&root.join("merge_maps"))? {
        let (rel, data) = load(format!("merge_maps/{name}"))?;
        let m: MergeMap = parse_json(&rel, &data)?;
        c.add_merge_map(m).map_err(|e| referential(&rel, e))?;
    }
    let (rel, data) = load(REVIEWERS.to_owned())?;
    for r in parse_json::<Vec<Reviewer>>(&rel, &data)? {
        c.add_reviewer(r).map_err(|e| referential(&rel, e))?;
    }
    for id in list_dir(&root.join("summaries"))? {
        let dir = format!("summaries/{id}");
        let (src_rel, src) = load(format!("{dir}/source.txt"))?;
        let (sum_rel, sum) = load(format!("{dir}/summary.txt"))?;
        let (meta_rel, meta) = load(format!("{dir}/metadata.json"))?;
        let doc = SummaryDocument {
            id: id.clone(),
            source_text: utf8(&src_rel, src)?,
            generated_summary: utf8(&sum_rel, sum)?,
            metadata: parse_json(&meta_rel, &meta)?,
        };
        c.add_summary(doc).map_err(|e| referential(&dir, e))?;
    }

    // Rounds replay as open so logged writes pass the same checks as live ones.
    let (rel, data) = load(ROUNDS.to_owned())?;
    let rounds: Vec<Round> = parse_json(&rel, &data)?;
    for r in &rounds {
        c.open_round(&r.id, r.taxonomy_version, r.reviewer_ids.clone(), r.summary_ids.clone())
            .map_err(|e| referential(&rel, e))?;
    }

    let mut log_data = BTreeMap::new();
    for round in list_dir(&root.join("logs"))? {
        for file in list_dir(&root.join("logs").join(&round))? {
            let rel = format!("logs/{round}/{file}");
            let reviewer = file.strip_suffix(".jsonl").unwrap_or(&file).to_owned();
            let r = c.round(&round).map_err(|e| referential(&rel, e))?;
            if !r.has_reviewer(&reviewer) {
                return Err(PersistenceError::Referential {
                    file: rel,
                    message: format!("reviewer `{reviewer}` is not assigned to round `{round}`"),
                });
            }
            let data = read(&root.join(&rel))?;
            log_data.insert(rel, (round.clone(), reviewer, data));
        }
    }
    for (rel, (round, reviewer, data)) in &log_data {
        let (lines, _) = complete_lines(data);
        for (i, line) in lines.into_iter().enumerate() {
            let entry: LogEntry = parse_json(&format!("{rel}:{}", i + 1), line)?;
            replay(&mut c, rel, round, reviewer, i, entry)?;
        }
    }
    for r in rounds {
        c.rounds.insert(r.id.clone(), r);
    }

    let (rel, data) = load(TOKENS.to_owned())?;
    let tokens: Vec<StoredToken> = parse_json(&rel, &data)?;
    for t in &tokens {
        if let StoredPrincipal::Reviewer { reviewer_id } = &t.principal {
            if c.reviewer(reviewer_id).is_none() {
                return Err(PersistenceError::Referential {
                    file: rel,
                    message: format!("token for unknown reviewer `{reviewer_id}`"),
                });
            }
        }
    }

    verify_digests(&manifest, root, &seen, &log_data)?;
    Ok(Bundle {
        manifest,
        campaign: c,
        tokens,
    })
}

fn replay(
    c: &mut Campaign,
    rel: &str,
    round: &str,
    reviewer: &str,
    index: usize,
    entry: LogEntry,
) -> Result<(), PersistenceError> {
    let at = format!("{rel}:{}", index + 1);
    let rec = &entry.record;
    if rec.round_id != round || rec.reviewer_id != reviewer {
        return Err(PersistenceError::Referential {
            file: at,
            message: format!("entry belongs to {}/{}", rec.round_id, rec.reviewer_id),
        });
    }
    if entry.seq != index as u64 || rec.record_version == 0 {
        return Err(PersistenceError::Integrity {
            file: at,
            message: format!("seq {} / record_version {} out of order", entry.seq, rec.record_version),
        });
    }
    let prepared = c
        .prepare_annotation(rec.clone(), rec.record_version - 1, entry.recorded_at)
        .map_err(|e| match e {
            CampaignError::Conflict { .. } => PersistenceError::Integrity {
                file: at.clone(),
                message: e.to_string(),
            },
            other => referential(&at, other),
        })?;
    if prepared.entry != entry {
        return Err(PersistenceError::Integrity {
            file: at,
            message: "entry does not replay to itself".to_owned(),
        });
    }
    c.commit_annotation(prepared);
    Ok(())
}

fn verify_digests(
    manifest: &Manifest,
    root: &Path,
    seen: &BTreeMap<String, Vec<u8>>,
    logs: &BTreeMap<String, (String, String, Vec<u8>)>,
) -> Result<(), PersistenceError> {
    let mismatch = |file: &str, message: &str| PersistenceError::Integrity {
        file: file.to_owned(),
        message: message.to_owned(),
    };
    for (rel, digest) in &manifest.files {
        if is_log_path(rel) {
            let Some((_, _, data)) = logs.get(rel) else {
                return Err(mismatch(rel, "listed in the manifest but missing"));
            };
            let n = digest.bytes as usize;
            if data.len() < n || FileDigest::of(&data[..n]) != *digest {
                return Err(mismatch(rel, "content digest mismatch"));
            }
        } else {
            let data = match seen.get(rel) {
                Some(d) => d.clone(),
                None => {
                    let p = root.join(rel);
                    if !p.exists() {
                        return Err(mismatch(rel, "listed in the manifest but missing"));
                    }
                    read(&p)?
                }
            };
            if FileDigest::of(&data) != *digest {
                return Err(mismatch(rel, "content digest mismatch"));
            }
        }
    }
    let mut present = Vec::new();
    walk(root, "", &mut present)?;
    for rel in present {
        if rel == LOCK || is_log_path(&rel) {
            continue;
        }
        if !manifest.files.contains_key(&rel) {
            return Err(mismatch(&rel, "not recorded in the manifest"));
        }
    }
    Ok(())
}

pub fn load_campaign(root: &Path) -> Result<Campaign, PersistenceError> {
    Ok(load_bundle(root)?.campaign)
}

fn lock(root: &Path) -> Result<File, PersistenceError> {
    let path = root.join(LOCK);
    let f = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(&path)
        .map_err(io_err(&path))?;
    match f.try_lock() {
        Ok(()) => Ok(f),
        Err(fs::TryLockError::WouldBlock) => Err(PersistenceError::Locked {
            path: root.display().to_string(),
        }),
        Err(fs::TryLockError::Error(e)) => Err(io_err(&path)(e)),
    }
}

fn ensure_empty(root: &Path) -> Result<(), PersistenceError> {
    if root.exists() {
        let empty = fs::read_dir(root).map_err(io_err(root))?.next().is_none();
        if !empty {
            return Err(PersistenceError::Exists {
                path: root.display().to_string(),
            });
        }
    }
    fs::create_dir_all(root).map_err(io_err(root))
}

fn write_bundle(root: &Path, c: &Campaign, tokens: &[StoredToken]) -> Result<Manifest, PersistenceError> {
    let mut files = BTreeMap::new();
    for (rel, data) in entity_files(c, tokens).into_iter().chain(log_files(c)) {
        write_atomic(&root.join(&rel), &data)?;
        files.insert(rel, FileDigest::of(&data));
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        campaign_id: c.id.clone(),
        created_at: c.created_at,
        files,
    };
    write_atomic(&root.join(MANIFEST), &pretty(&manifest))?;
    Ok(manifest)
}

/// Writes `campaign` as a new bundle at `root`, which must be absent or empty.
pub fn save_campaign(campaign: &Campaign, root: &Path) -> Result<(), PersistenceError> {
    ensure_empty(root)?;
    let _lock = lock(root)?;
    write_bundle(root, campaign, &[])?;
    Ok(())
}

/// The single writer of a bundle.
///
/// Every mutation is on disk (and synced) before the method returns. The
/// bundle's lock file stays locked for the lifetime of the store.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    _lock: File,
    manifest: Manifest,
    campaign: Campaign,
    tokens: Vec<StoredToken>,
}

impl Store {
    /// Creates a bundle for `campaign` at `root` (absent or empty) and opens it.
    pub fn create(root: &Path, campaign: Campaign) -> Result<Store, PersistenceError> {
        ensure_empty(root)?;
        let lock = lock(root)?;
        let manifest = write_bundle(root, &campaign, &[])?;
        Ok(Store {
            root: root.to_owned(),
            _lock: lock,
            manifest,
            campaign,
            tokens: Vec::new(),
        })
    }

    /// Locks and loads an existing bundle, dropping any torn final log line.
    pub fn open(root: &Path) -> Result<Store, PersistenceError> {
        let lock = lock(root)?;
        let manifest = read_manifest(root)?;
        for round in list_dir(&root.join("logs"))? {
            for file in list_dir(&root.join("logs").join(&round))? {
                let rel = format!("logs/{round}/{file}");
                let path = root.join(&rel);
                let data = read(&path)?;
                let (_, end) = complete_lines(&data);
                let recorded = manifest.files.get(&rel).map_or(0, |d| d.bytes as usize);
                if end < data.len() && end >= recorded {
                    let f = OpenOptions::new().write(true).open(&path).map_err(io_err(&path))?;
                    f.set_len(end as u64).map_err(io_err(&path))?;
                    f.sync_all().map_err(io_err(&path))?;
                }
            }
        }
        let bundle = load_bundle(root)?;
        let mut store = Store {
            root: root.to_owned(),
            _lock: lock,
            manifest: bundle.manifest,
            campaign: bundle.campaign,
            tokens: bundle.tokens,
        };
        store.sync_manifest()?;
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn campaign(&self) -> &Campaign {
        &self.campaign
    }

    pub fn tokens(&self) -> &[StoredToken] {
        &self.tokens
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Looks up a presented token by its hash.
    pub fn token(&self, token: &str) -> Option<&StoredToken> {
        let h = hash_token(token);
        self.tokens.iter().find(|t| t.token_sha256 == h)
    }

    /// Rewrites changed entity files, then the manifest.
    fn persist(&mut self, c: &Campaign, tokens: &[StoredToken]) -> Result<(), PersistenceError> {
        let mut files = self.manifest.files.clone();
        for (rel, data) in entity_files(c, tokens) {
            let digest = FileDigest::of(&data);
            if files.get(&rel) != Some(&digest) {
                write_atomic(&self.root.join(&rel), &data)?;
                files.insert(rel, digest);
            }
        }
        self.write_manifest(files)
    }

    fn write_manifest(&mut self, files: BTreeMap<String, FileDigest>) -> Result<(), PersistenceError> {
        let manifest = Manifest {
            files,
            ..self.manifest.clone()
        };
        if manifest != self.manifest {
            write_atomic(&self.root.join(MANIFEST), &pretty(&manifest))?;
            self.manifest = manifest;
        }
        Ok(())
    }

    /// Brings log digests in the manifest up to the current log contents.
    fn sync_manifest(&mut self) -> Result<(), PersistenceError> {
        let mut files = self.manifest.files.clone();
        for (round, reviewer) in self.campaign.logs.keys() {
            let rel = log_path(round, reviewer);
            let data = read(&self.root.join(&rel))?;
            files.insert(rel, FileDigest::of(&data));
        }
        self.write_manifest(files)
    }

    fn mutate<T>(
        &mut self,
        f: impl FnOnce(&mut Campaign) -> Result<T, CampaignError>,
    ) -> Result<T, PersistenceError> {
        let mut next = self.campaign.clone();
        let out = f(&mut next)?;
        let tokens = self.tokens.clone();
        self.persist(&next, &tokens)?;
        self.campaign = next;
        Ok(out)
    }

    pub fn add_taxonomy(&mut self, t: Taxonomy) -> Result<(), PersistenceError> {
        self.mutate(|c| c.add_taxonomy(t))
    }

    pub fn add_merge_map(&mut self, m: MergeMap) -> Result<(), PersistenceError> {
        self.mutate(|c| c.add_merge_map(m))
    }

    pub fn add_reviewer(&mut self, r: Reviewer) -> Result<(), PersistenceError> {
        self.mutate(|c| c.add_reviewer(r))
    }

    pub fn add_summary(&mut self, s: SummaryDocument) -> Result<(), PersistenceError> {
        self.mutate(|c| c.add_summary(s))
    }

    pub fn open_round(
        &mut self,
        id: &str,
        taxonomy_version: u32,
        reviewer_ids: Vec<String>,
        summary_ids: Vec<String>,
    ) -> Result<Round, PersistenceError> {
        self.mutate(|c| c.open_round(id, taxonomy_version, reviewer_ids, summary_ids).cloned())
    }

    pub fn close_round(&mut self, round_id: &str, force: bool) -> Result<Round, PersistenceError> {
        self.mutate(|c| c.close_round(round_id, force).cloned())
    }

    pub fn add_token(&mut self, token: StoredToken) -> Result<(), PersistenceError> {
        if let StoredPrincipal::Reviewer { reviewer_id } = &token.principal {
            if self.campaign.reviewer(reviewer_id).is_none() {
                return Err(CampaignError::NotFound {
                    kind: "reviewer",
                    id: reviewer_id.clone(),
                }
                .into());
            }
        }
        let mut tokens = self.tokens.clone();
        tokens.retain(|t| t.token_sha256 != token.token_sha256);
        tokens.push(token);
        let c = self.campaign.clone();
        self.persist(&c, &tokens)?;
        self.tokens = tokens;
        Ok(())
    }

    /// Compare-and-swap write of one record; returns the new record version.
    ///
    /// The log line is appended and synced before the in-memory state moves.
    pub fn record_annotation(
        &mut self,
        record: AnnotationRecord,
        expected_version: u64,
    ) -> Result<u64, PersistenceError> {
        let prepared = self
            .campaign
            .prepare_annotation(record, expected_version, Utc::now())?;
        let rec = &prepared.entry.record;
        let rel = log_path(&rec.round_id, &rec.reviewer_id);
        let path = self.root.join(&rel);
        let dir = path.parent().expect("log directory");
        let fresh = !path.exists();
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        {
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(io_err(&path))?;
            f.write_all(&log_line(&prepared.entry)).map_err(io_err(&path))?;
            f.sync_all().map_err(io_err(&path))?;
        }
        if fresh {
            sync_dir(dir)?;
            sync_dir(&self.root.join("logs"))?;
        }
        let version = self.campaign.commit_annotation(prepared);
        // The log line alone is enough to recover the write, so a failed
        // manifest update is retried on the next mutation instead of failing this one.
        let _ = self.sync_manifest();
        Ok(version)
    }

    /// Writes a generated report under `exports/`.
    pub fn write_export(&self, name: &str, data: &[u8]) -> Result<PathBuf, PersistenceError> {
        write_export(&self.root, name, data)
    }
}

/// Writes a generated report under the bundle's `exports/` directory.
pub fn write_export(root: &Path, name: &str, data: &[u8]) -> Result<PathBuf, PersistenceError> {
    let path = root.join(EXPORTS).join(name);
    write_atomic(&path, data)?;
    Ok(path)
}

/// A matrix as comma-separated text: header `summary_id,unit_id,<rater>...`,
/// one row per unit, empty cells for missing ratings, LF line endings.
pub fn render_matrix_csv(m: &AnnotationMatrix) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header = vec!["summary_id", "unit_id"];
    header.extend(m.raters.iter().map(String::as_str));
    w.write_record(&header).expect("in-memory write");
    for (unit, row) in m.units.iter().zip(&m.cells) {
        let mut rec = vec![unit.summary_id.clone(), unit.unit_id.clone()];
        rec.extend(row.iter().map(|c| c.map_or_else(String::new, |v| v.to_string())));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8")
}

pub fn export_matrix(m: &AnnotationMatrix, path: &Path) -> Result<(), PersistenceError> {
    write_atomic(path, render_matrix_csv(m).as_bytes())
}

/// Parses the format written by [`render_matrix_csv`].
pub fn parse_matrix_csv<R: Read>(reader: R, stage: Stage) -> Result<AnnotationMatrix, PersistenceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut rows = rdr.records();
    let header = match rows.next() {
        None => {
            return Err(PersistenceError::Parse {
                line: 1,
                message: "missing header row".to_owned(),
            })
        }
        Some(h) => h.map_err(csv_err)?,
    };
    if header.len() < 3 || &header[0] != "summary_id" || &header[1] != "unit_id" {
        return Err(PersistenceError::Parse {
            line: 1,
            message: "header must be summary_id,unit_id followed by one column per rater".to_owned(),
        });
    }
    let raters: Vec<String> = header.iter().skip(2).map(str::to_owned).collect();
    if raters.iter().collect::<BTreeSet<_>>().len() != raters.len() {
        return Err(PersistenceError::Parse {
            line: 1,
            message: "duplicate rater column".to_owned(),
        });
    }
    let range = if stage == Stage::Scores { 1..=5 } else { 0..=1 };
    let mut units = Vec::new();
    let mut cells = Vec::new();
    let mut seen = BTreeSet::new();
    for row in rows {
        let row = row.map_err(csv_err)?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != header.len() {
            return Err(PersistenceError::Columns {
                line,
                expected: header.len(),
                found: row.len(),
            });
        }
        let unit = UnitKey {
            summary_id: row[0].to_owned(),
            unit_id: row[1].to_owned(),
        };
        if unit.summary_id.is_empty() || unit.unit_id.is_empty() {
            return Err(PersistenceError::Parse {
                line,
                message: "empty summary_id or unit_id".to_owned(),
            });
        }
        if !seen.insert(unit.clone()) {
            return Err(PersistenceError::Parse {
                line,
                message: format!("duplicate unit {}/{}", unit.summary_id, unit.unit_id),
            });
        }
        let mut values = Vec::with_capacity(raters.len());
        for field in row.iter().skip(2) {
            if field.is_empty() {
                values.push(None);
                continue;
            }
            match field.parse::<u8>() {
                Ok(v) if range.contains(&v) => values.push(Some(v)),
                _ => {
                    return Err(PersistenceError::Parse {
                        line,
                        message: format!(
                            "`{field}` is not a stage-{stage} value ({}-{} or empty)",
                            range.start(),
                            range.end()
                        ),
                    })
                }
            }
        }
        units.push(unit);
        cells.push(values);
    }
    Ok(AnnotationMatrix {
        stage,
        units,
        raters,
        cells,
    })
}

fn csv_err(e: csv::Error) -> PersistenceError {
    PersistenceError::Parse {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

pub fn import_ratings(path: &Path, stage: Stage) -> Result<AnnotationMatrix, PersistenceError> {
    let f = File::open(path).map_err(io_err(path))?;
    parse_matrix_csv(f, stage)
}
