use fmeca_core::campaign::CampaignError;
use fmeca_core::persistence::PersistenceError;
use fmeca_core::sus::SusError;
use fmeca_core::taxonomy::TaxonomyError;
use serde_json::json;
use thiserror::Error;

use crate::auth::DenyReason;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("denied: {}", .0.as_str())]
    Denied(DenyReason),
    #[error(transparent)]
    Campaign(#[from] CampaignError),
    #[error(transparent)]
    Persistence(#[from] PersistenceError),
    #[error(transparent)]
    Sus(#[from] SusError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    /// Stable machine-readable error class.
    pub fn class(&self) -> &'static str {
        match self {
            ServiceError::Denied(_) => "denied",
            ServiceError::Campaign(e) => e.class(),
            ServiceError::Persistence(e) => e.class(),
            ServiceError::Sus(_) => "validation",
            ServiceError::Taxonomy(TaxonomyError::VersionNotFound { .. })
            | ServiceError::Taxonomy(TaxonomyError::FailureModeNotFound(_))
            | ServiceError::Taxonomy(TaxonomyError::MergeMapNotFound { .. }) => "not_found",
            ServiceError::Taxonomy(_) => "validation",
            ServiceError::Validation(_) => "validation",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Io(_) => "io",
        }
    }

    pub fn http_status(&self) -> u16 {
        match self {
            ServiceError::Denied(r) => r.http_status(),
            _ => match self.class() {
                "not_found" | "referential" => 404,
                "conflict" | "duplicate" | "workflow" | "incomplete" => 409,
                "validation" | "schema" | "parse" => 422,
                "bad_request" => 400,
                "locked" => 503,
                _ => 500,
            },
        }
    }

    /// Process exit code of the CLI; clap's own usage errors exit with 2.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            "validation" | "schema" | "parse" | "bad_request" => 3,
            "not_found" | "referential" => 4,
            "conflict" | "duplicate" | "workflow" | "incomplete" => 5,
            "integrity" | "version" | "locked" | "exists" => 6,
            "denied" => 7,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut body = json!({ "class": self.class(), "message": self.to_string() });
        match self {
            ServiceError::Campaign(CampaignError::Conflict { expected, actual })
            | ServiceError::Persistence(PersistenceError::Campaign(CampaignError::Conflict {
                expected,
                actual,
            })) => {
                body["expected_version"] = json!(expected);
                body["stored_version"] = json!(actual);
            }
            ServiceError::Campaign(CampaignError::Incomplete { missing })
            | ServiceError::Persistence(PersistenceError::Campaign(CampaignError::Incomplete {
                missing,
            })) => {
                body["missing"] = json!(missing);
            }
            ServiceError::Denied(r) => body["reason"] = json!(r.as_str()),
            _ => {}
        }
        json!({ "error": body })
    }
}
