//! Versioned failure-mode taxonomies and the merge maps between them.
//!
//! A taxonomy is a strict three-level hierarchy: categories own subcategories,
//! subcategories own failure modes. Two versions ship with the crate:
//!
//! * version 1, the preliminary 20-mode catalog used in the first round;
//! * version 3, the final 14-mode catalog.
//!
//! The intermediate 15-mode catalog has no surviving mode list, so there is no
//! version 2. Annotations made against version 1 are re-expressed in version 3
//! through [`MergeMap`], which ORs the flags of every source mode that was
//! consolidated into a target mode.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const TAXONOMY_V1: &str = include_str!("../data/taxonomy_v1.json");
const TAXONOMY_V3: &str = include_str!("../data/taxonomy_v3.json");
const MERGE_V1_V3: &str = include_str!("../data/merge_v1_v3.json");

/// Versions embedded in the crate.
pub const SHIPPED_VERSIONS: [u32; 2] = [1, 3];

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("taxonomy version {requested} not found (available: {available:?})")]
    VersionNotFound { requested: u32, available: Vec<u32> },
    #[error("no merge map from version {from} to version {to}")]
    MergeMapNotFound { from: u32, to: u32 },
    #[error("failure mode `{0}` not found")]
    FailureModeNotFound(String),
    #[error("failure mode `{id}` is not part of taxonomy version {version}")]
    UnknownSourceMode { id: String, version: u32 },
    #[error("invalid merge map: {0}")]
    InvalidMergeMap(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Category {
    pub id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subcategory {
    pub id: String,
    pub label: String,
    pub category_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureMode {
    pub id: String,
    pub label: String,
    pub description: String,
    #[serde(default)]
    pub illustrative_examples: Vec<String>,
    pub subcategory_id: String,
}

/// One frozen version of the failure-mode catalog.
///
/// Collections keep the order of the dataset file; that order drives the unit
/// axis of every derived matrix and export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Taxonomy {
    pub version: u32,
    #[serde(default)]
    pub provenance: String,
    pub categories: Vec<Category>,
    pub subcategories: Vec<Subcategory>,
    pub failure_modes: Vec<FailureMode>,
}

/// A single invariant violation found by [`validate_taxonomy`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub node_id: String,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    InvalidVersion,
    NoFailureModes,
    DuplicateId,
    EmptyLabel,
    OrphanSubcategory,
    OrphanFailureMode,
    CategoryWithoutSubcategory,
    SubcategoryWithoutFailureMode,
}

impl ViolationKind {
    pub fn describe(self) -> &'static str {
        match self {
            ViolationKind::InvalidVersion => "version must be at least 1",
            ViolationKind::NoFailureModes => "no failure modes",
            ViolationKind::DuplicateId => "duplicate id",
            ViolationKind::EmptyLabel => "empty label",
            ViolationKind::OrphanSubcategory => "orphan subcategory",
            ViolationKind::OrphanFailureMode => "orphan failure mode",
            ViolationKind::CategoryWithoutSubcategory => "category without subcategory",
            ViolationKind::SubcategoryWithoutFailureMode => "subcategory without failure mode",
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.node_id, self.kind.describe())
    }
}

/// Lists every invariant violation in `t`. An empty list means the taxonomy is valid.
pub fn validate_taxonomy(t: &Taxonomy) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |node_id: &str, kind| {
        out.push(Violation {
            node_id: node_id.to_owned(),
            kind,
        })
    };

    if t.version < 1 {
        push(&format!("v{}", t.version), ViolationKind::InvalidVersion);
    }
    if t.failure_modes.is_empty() {
        push(&format!("v{}", t.version), ViolationKind::NoFailureModes);
    }

    let mut category_ids = BTreeSet::new();
    for c in &t.categories {
        if !category_ids.insert(c.id.as_str()) {
            push(&c.id, ViolationKind::DuplicateId);
        }
        if c.label.trim().is_empty() {
            push(&c.id, ViolationKind::EmptyLabel);
        }
    }

    let mut subcategory_ids = BTreeSet::new();
    for s in &t.subcategories {
        if !subcategory_ids.insert(s.id.as_str()) {
            push(&s.id, ViolationKind::DuplicateId);
        }
        if s.label.trim().is_empty() {
            push(&s.id, ViolationKind::EmptyLabel);
        }
        if !category_ids.contains(s.category_id.as_str()) {
            push(&s.id, ViolationKind::OrphanSubcategory);
        }
    }

    let mut mode_ids = BTreeSet::new();
    for m in &t.failure_modes {
        if !mode_ids.insert(m.id.as_str()) {
            push(&m.id, ViolationKind::DuplicateId);
        }
        if m.label.trim().is_empty() {
            push(&m.id, ViolationKind::EmptyLabel);
        }
        if !subcategory_ids.contains(m.subcategory_id.as_str()) {
            push(&m.id, ViolationKind::OrphanFailureMode);
        }
    }

    for c in &t.categories {
        if !t.subcategories.iter().any(|s| s.category_id == c.id) {
            push(&c.id, ViolationKind::CategoryWithoutSubcategory);
        }
    }
    for s in &t.subcategories {
        if !t.failure_modes.iter().any(|m| m.subcategory_id == s.id) {
            push(&s.id, ViolationKind::SubcategoryWithoutFailureMode);
        }
    }
    out
}

impl Taxonomy {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TaxonomyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TaxonomyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text).map_err(|source| TaxonomyError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn failure_mode(&self, id: &str) -> Option<&FailureMode> {
        self.failure_modes.iter().find(|m| m.id == id)
    }

    pub fn subcategory(&self, id: &str) -> Option<&Subcategory> {
        self.subcategories.iter().find(|s| s.id == id)
    }

    pub fn category(&self, id: &str) -> Option<&Category> {
        self.categories.iter().find(|c| c.id == id)
    }

    pub fn contains_mode(&self, id: &str) -> bool {
        self.failure_mode(id).is_some()
    }

    pub fn failure_mode_ids(&self) -> impl Iterator<Item = &str> {
        self.failure_modes.iter().map(|m| m.id.as_str())
    }

    /// Failure modes of one subcategory, in dataset order.
    pub fn modes_of_subcategory<'a>(
        &'a self,
        subcategory_id: &'a str,
    ) -> impl Iterator<Item = &'a FailureMode> + 'a {
        self.failure_modes
            .iter()
            .filter(move |m| m.subcategory_id == subcategory_id)
    }
}

/// Returns one of the embedded datasets.
pub fn default_taxonomy(version: u32) -> Result<Taxonomy, TaxonomyError> {
    let text = match version {
        1 => TAXONOMY_V1,
        3 => TAXONOMY_V3,
        _ => {
            return Err(TaxonomyError::VersionNotFound {
                requested: version,
                available: SHIPPED_VERSIONS.to_vec(),
            })
        }
    };
    Ok(Taxonomy::from_json(text).expect("embedded taxonomy dataset is valid JSON"))
}

/// The subcategory that owns `fm_id`.
pub fn subcategory_of<'a>(fm_id: &str, t: &'a Taxonomy) -> Result<&'a Subcategory, TaxonomyError> {
    let mode = t
        .failure_mode(fm_id)
        .ok_or_else(|| TaxonomyError::FailureModeNotFound(fm_id.to_owned()))?;
    t.subcategory(&mode.subcategory_id)
        .ok_or_else(|| TaxonomyError::FailureModeNotFound(fm_id.to_owned()))
}

/// Re-expresses failure-mode ids of one taxonomy version in another.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeMap {
    pub from_version: u32,
    pub to_version: u32,
    #[serde(default)]
    pub notes: String,
    pub mapping: BTreeMap<String, String>,
    /// Source ids whose target was chosen by inference rather than stated outright.
    #[serde(default)]
    pub inferred: Vec<String>,
}

impl MergeMap {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TaxonomyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TaxonomyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text).map_err(|source| TaxonomyError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    /// Maps every mode of `t` onto itself.
    pub fn identity(t: &Taxonomy) -> Self {
        MergeMap {
            from_version: t.version,
            to_version: t.version,
            notes: String::new(),
            mapping: t
                .failure_modes
                .iter()
                .map(|m| (m.id.clone(), m.id.clone()))
                .collect(),
            inferred: Vec::new(),
        }
    }

    /// `self` followed by `next`.
    pub fn compose(&self, next: &MergeMap) -> Result<MergeMap, TaxonomyError> {
        if self.to_version != next.from_version {
            return Err(TaxonomyError::InvalidMergeMap(format!(
                "cannot chain v{}->v{} with v{}->v{}",
                self.from_version, self.to_version, next.from_version, next.to_version
            )));
        }
        let mut mapping = BTreeMap::new();
        for (src, mid) in &self.mapping {
            let dst = next.mapping.get(mid).ok_or_else(|| {
                TaxonomyError::InvalidMergeMap(format!("`{mid}` has no image in the next map"))
            })?;
            mapping.insert(src.clone(), dst.clone());
        }
        Ok(MergeMap {
            from_version: self.from_version,
            to_version: next.to_version,
            notes: String::new(),
            mapping,
            inferred: self.inferred.clone(),
        })
    }

    /// Source ids mapped onto `target`.
    pub fn sources_of<'a>(&'a self, target: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.mapping
            .iter()
            .filter(move |(_, t)| t.as_str() == target)
            .map(|(s, _)| s.as_str())
    }

    /// Checks totality over `from` and that every image exists in `to`.
    pub fn validate(&self, from: &Taxonomy, to: &Taxonomy) -> Result<(), TaxonomyError> {
        if from.version != self.from_version || to.version != self.to_version {
            return Err(TaxonomyError::InvalidMergeMap(format!(
                "map is v{}->v{} but taxonomies are v{}->v{}",
                self.from_version, self.to_version, from.version, to.version
            )));
        }
        for m in &from.failure_modes {
            if !self.mapping.contains_key(&m.id) {
                return Err(TaxonomyError::InvalidMergeMap(format!(
                    "source mode `{}` is not mapped",
                    m.id
                )));
            }
        }
        for (src, dst) in &self.mapping {
            if !from.contains_mode(src) {
                return Err(TaxonomyError::InvalidMergeMap(format!(
                    "`{src}` is not a mode of v{}",
                    from.version
                )));
            }
            if !to.contains_mode(dst) {
                return Err(TaxonomyError::InvalidMergeMap(format!(
                    "`{dst}` is not a mode of v{}",
                    to.version
                )));
            }
        }
        Ok(())
    }
}

/// The embedded merge map between two shipped versions.
pub fn default_merge_map(from: u32, to: u32) -> Result<MergeMap, TaxonomyError> {
    match (from, to) {
        (1, 3) => Ok(MergeMap::from_json(MERGE_V1_V3).expect("embedded merge map is valid JSON")),
        (v, w) if v == w && SHIPPED_VERSIONS.contains(&v) => {
            Ok(MergeMap::identity(&default_taxonomy(v)?))
        }
        _ => Err(TaxonomyError::MergeMapNotFound { from, to }),
    }
}

/// Translates a flag map into the target version. A target flag is set when
/// any of its source flags is set.
pub fn migrate_flags(
    flags: &BTreeMap<String, bool>,
    m: &MergeMap,
) -> Result<BTreeMap<String, bool>, TaxonomyError> {
    let mut out = BTreeMap::new();
    for (src, &flag) in flags {
        let dst = m
            .mapping
            .get(src)
            .ok_or_else(|| TaxonomyError::UnknownSourceMode {
                id: src.clone(),
                version: m.from_version,
            })?;
        *out.entry(dst.clone()).or_insert(false) |= flag;
    }
    Ok(out)
}
