//! Who may do what, and when.
//!
//! Operators can do everything except read reports of an open round.
//! Reviewers read shared reference data, their own records at any time and
//! other reviewers' records only once the round is closed.

use chrono::{DateTime, Utc};
use fmeca_core::campaign::Campaign;
use fmeca_core::persistence::{StoredPrincipal, StoredToken};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Principal {
    Operator,
    Reviewer(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub principal: Principal,
    pub expires_at: Option<DateTime<Utc>>,
}

impl Session {
    pub fn is_expired(&self, now: DateTime<Utc>) -> bool {
        self.expires_at.is_some_and(|t| now >= t)
    }
}

impl From<&StoredToken> for Session {
    fn from(t: &StoredToken) -> Self {
        let principal = match &t.principal {
            StoredPrincipal::Operator => Principal::Operator,
            StoredPrincipal::Reviewer { reviewer_id } => Principal::Reviewer(reviewer_id.clone()),
        };
        Session {
            principal,
            expires_at: t.expires_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action<'a> {
    ReadTaxonomy,
    ReadScales,
    ListRounds,
    ReadAssignments { round: &'a str },
    ReadSummary { summary: &'a str },
    ReadRecord { round: &'a str, reviewer: &'a str },
    WriteRecord { round: &'a str, reviewer: &'a str },
    CloseRound { round: &'a str },
    ReadReport { round: &'a str },
    ScoreSus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DenyReason {
    Unauthenticated,
    Expired,
    BlindedRound,
    RoundOpen,
    NotOwner,
    OperatorOnly,
}

impl DenyReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DenyReason::Unauthenticated => "unauthenticated",
            DenyReason::Expired => "token expired",
            DenyReason::BlindedRound => "blinded round",
            DenyReason::RoundOpen => "round open",
            DenyReason::NotOwner => "not your record",
            DenyReason::OperatorOnly => "operator only",
        }
    }

    /// 401 for credential problems, 403 for policy refusals.
    pub fn http_status(self) -> u16 {
        match self {
            DenyReason::Unauthenticated | DenyReason::Expired => 401,
            _ => 403,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny(DenyReason),
}

fn round_open(campaign: &Campaign, round: &str) -> bool {
    // unknown rounds are left to the handler's not-found error
    campaign.round(round).is_ok_and(|r| r.is_open())
}

pub fn authorize(
    session: Option<&Session>,
    now: DateTime<Utc>,
    action: &Action<'_>,
    campaign: &Campaign,
) -> Decision {
    let Some(session) = session else {
        return Decision::Deny(DenyReason::Unauthenticated);
    };
    if session.is_expired(now) {
        return Decision::Deny(DenyReason::Expired);
    }
    if let Action::ReadReport { round } = action {
        return if round_open(campaign, round) {
            Decision::Deny(DenyReason::RoundOpen)
        } else {
            Decision::Allow
        };
    }
    let me = match &session.principal {
        Principal::Operator => return Decision::Allow,
        Principal::Reviewer(id) => id.as_str(),
    };
    match action {
        Action::ReadTaxonomy
        | Action::ReadScales
        | Action::ListRounds
        | Action::ReadAssignments { .. }
        | Action::ReadSummary { .. }
        | Action::ScoreSus => Decision::Allow,
        Action::ReadRecord { round, reviewer } => {
            if *reviewer == me || !round_open(campaign, round) {
                Decision::Allow
            } else {
                Decision::Deny(DenyReason::BlindedRound)
            }
        }
        Action::WriteRecord { reviewer, .. } => {
            if *reviewer == me {
                Decision::Allow
            } else {
                Decision::Deny(DenyReason::NotOwner)
            }
        }
        Action::CloseRound { .. } => Decision::Deny(DenyReason::OperatorOnly),
        Action::ReadReport { .. } => unreachable!("handled above"),
    }
}
