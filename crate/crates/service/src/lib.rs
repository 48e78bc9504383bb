//! Annotation service for pairwise-comparison emotion campaigns.
//!
//! Annotators open a session, take a short quiz of gold comparisons, and then
//! receive leased comparisons from the campaign's ranking, with a gold check
//! mixed in at a fixed interval. Every state change is written to an
//! append-only log before it is acknowledged; reopening the log directory
//! restores the exact state.
//!
//! HTTP routes (JSON bodies unless noted):
//!
//! | route | body / reply |
//! |---|---|
//! | `POST /campaigns` | [`http::CreateCampaign`] → [`Progress`] |
//! | `POST /campaigns/{id}/sessions` | `{"annotator"}` → [`SessionInfo`] |
//! | `GET /sessions/{id}/next` | [`TaskResponse`] |
//! | `POST /sessions/{id}/submit` | `{"task_id","winner"}` → [`SubmitResponse`] |
//! | `GET /clips/{id}/audio` | WAV bytes; honours `Range: bytes=…` |
//! | `GET /campaigns/{id}/export/{kind}` | CSV, JSON or JSON lines, see [`ExportKind`] |
//! | `GET /campaigns/{id}/progress` | [`Progress`] |
//!
//! Errors reply `{"error": "..."}` with 400, 404, 409 (conflict, blocked
//! session, expired lease) or 416 (bad range).

pub mod clock;
pub mod export;
pub mod http;
mod service;
pub mod simulate;
pub mod state;
pub mod store;

use std::path::PathBuf;

use thiserror::Error;

pub use clock::{Clock, ManualClock, SystemClock};
pub use export::{ExportKind, Progress};
pub use service::{
    campaign_spec, ClipRef, GoldInput, Service, ServiceOptions, SessionInfo, SubmitResponse,
    TaskResponse,
};
pub use state::{CampaignConfig, CampaignSpec, Phase, SubmitOutcome};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("session {0:?} is blocked")]
    Blocked(String),
    #[error("lease on task {0:?} has expired")]
    LeaseExpired(String),
    #[error("requested range not satisfiable")]
    BadRange,
    #[error(transparent)]
    Ranking(#[from] mer_core::ranking::RankingError),
    #[error(transparent)]
    Corpus(#[from] mer_core::corpus::CorpusError),
    #[error("log replay failed: {0}")]
    Replay(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, ServiceError>;
