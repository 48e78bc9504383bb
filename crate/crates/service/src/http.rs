use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mer_core::corpus;
use mer_core::ranking::Dimension;
use serde::Deserialize;

use crate::service::{campaign_spec, GoldInput, Service};
use crate::state::CampaignConfig;
use crate::{ExportKind, ServiceError};

/// Body of `POST /campaigns`. `manifest` is a manifest CSV on the server.
#[derive(Debug, Clone, Deserialize)]
pub struct CreateCampaign {
    pub id: String,
    pub manifest: PathBuf,
    pub dimension: Dimension,
    pub gold: Vec<GoldInput>,
    pub seed: u64,
    #[serde(default)]
    pub config: CampaignConfig,
}

#[derive(Debug, Deserialize)]
struct OpenSession {
    annotator: String,
}

#[derive(Debug, Deserialize)]
struct Submit {
    task_id: String,
    winner: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::Invalid(_) | ServiceError::Ranking(_) | ServiceError::Corpus(_) => {
                StatusCode::BAD_REQUEST
            }
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_)
            | ServiceError::Blocked(_)
            | ServiceError::LeaseExpired(_) => StatusCode::CONFLICT,
            ServiceError::BadRange => StatusCode::RANGE_NOT_SATISFIABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{self}");
        }
        (
            status,
            Json(serde_json::json!({ "error": self.to_string() })),
        )
            .into_response()
    }
}

type Shared = Arc<Service>;

/// Runs a service call off the async workers; calls may sync the log.
async fn blocking<T, F>(svc: Shared, f: F) -> Result<T, ServiceError>
where
    T: Send + 'static,
    F: FnOnce(&Service) -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/campaigns", post(create_campaign))
        .route("/campaigns/{id}/sessions", post(open_session))
        .route("/campaigns/{id}/progress", get(progress))
        .route("/campaigns/{id}/export/{kind}", get(export))
        .route("/sessions/{id}/next", get(next_task))
        .route("/sessions/{id}/submit", post(submit))
        .route("/clips/{id}/audio", get(audio))
        .with_state(service)
}

async fn create_campaign(
    State(svc): State<Shared>,
    Json(req): Json<CreateCampaign>,
) -> Result<Response, ServiceError> {
    let progress = blocking(svc, move |svc| {
        let manifest = corpus::read_manifest(&req.manifest)?;
        let base = req.manifest.parent().map(PathBuf::from).unwrap_or_default();
        let spec = campaign_spec(
            &req.id,
            &manifest,
            &base,
            req.dimension,
            &req.gold,
            req.seed,
            req.config,
        )?;
        svc.create_campaign(spec)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(progress)).into_response())
}

async fn open_session(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<OpenSession>,
) -> Result<Response, ServiceError> {
    let info = blocking(svc, move |svc| svc.open_session(&id, &req.annotator)).await?;
    Ok((StatusCode::CREATED, Json(info)).into_response())
}

async fn progress(
    State(svc): State<Shared>,
    Path(id): Path<String>,
) -> Result<Response, ServiceError> {
    Ok(Json(svc.progress(&id)?).into_response())
}

async fn export(
    State(svc): State<Shared>,
    Path((id, kind)): Path<(String, String)>,
) -> Result<Response, ServiceError> {
    let kind: ExportKind = kind.parse()?;
    let body = svc.export(&id, kind)?;
    Ok(([(header::CONTENT_TYPE, kind.content_type())], body).into_response())
}

async fn next_task(
    State(svc): State<Shared>,
    Path(id): Path<String>,
) -> Result<Response, ServiceError> {
    Ok(Json(blocking(svc, move |svc| svc.next_task(&id)).await?).into_response())
}

async fn submit(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<Submit>,
) -> Result<Response, ServiceError> {
    Ok(
        Json(blocking(svc, move |svc| svc.submit(&id, &req.task_id, &req.winner)).await?)
            .into_response(),
    )
}

/// Parses a single `bytes=` range into an inclusive byte span.
pub fn parse_range(value: &str, len: u64) -> Result<(u64, u64), ServiceError> {
    let spec = value
        .trim()
        .strip_prefix("bytes=")
        .ok_or(ServiceError::BadRange)?;
    if spec.contains(',') {
        return Err(ServiceError::BadRange);
    }
    let (start, end) = spec.split_once('-').ok_or(ServiceError::BadRange)?;
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| ServiceError::BadRange);
    let (first, last) = match (start.trim().is_empty(), end.trim().is_empty()) {
        (true, true) => return Err(ServiceError::BadRange),
        // suffix: the final n bytes
        (true, false) => {
            let n = num(end)?;
            if n == 0 || len == 0 {
                return Err(ServiceError::BadRange);
            }
            (len.saturating_sub(n), len - 1)
        }
        (false, true) => (num(start)?, len.saturating_sub(1)),
        (false, false) => (num(start)?, num(end)?.min(len.saturating_sub(1))),
    };
    if first >= len || first > last {
        return Err(ServiceError::BadRange);
    }
    Ok((first, last))
}

async fn audio(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Response, ServiceError> {
    let path = svc.clip_path(&id)?;
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|source| ServiceError::Io {
            path: path.clone(),
            source,
        })?;
    let len = bytes.len() as u64;
    let accept = (header::ACCEPT_RANGES, HeaderValue::from_static("bytes"));
    let wav = (header::CONTENT_TYPE, HeaderValue::from_static("audio/wav"));
    let Some(range) = headers.get(header::RANGE) else {
        return Ok((StatusCode::OK, [accept, wav], bytes).into_response());
    };
    let parsed = range
        .to_str()
        .map_err(|_| ServiceError::BadRange)
        .and_then(|r| parse_range(r, len));
    match parsed {
        Ok((first, last)) => {
            let content_range = HeaderValue::from_str(&format!("bytes {first}-{last}/{len}"))
                .expect("ascii header");
            let body = Body::from(bytes[first as usize..=last as usize].to_vec());
            Ok((
                StatusCode::PARTIAL_CONTENT,
                [accept, wav, (header::CONTENT_RANGE, content_range)],
                body,
            )
                .into_response())
        }
        Err(e) => {
            let mut resp = e.into_response();
            let unsatisfied =
                HeaderValue::from_str(&format!("bytes */{len}")).expect("ascii header");
            resp.headers_mut()
                .insert(header::CONTENT_RANGE, unsatisfied);
            Ok(resp)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_forms() {
        assert_eq!(parse_range("bytes=0-43", 1000).unwrap(), (0, 43));
        assert_eq!(parse_range("bytes=990-", 1000).unwrap(), (990, 999));
        assert_eq!(parse_range("bytes=-10", 1000).unwrap(), (990, 999));
        assert_eq!(parse_range("bytes=-5000", 1000).unwrap(), (0, 999));
        assert_eq!(parse_range("bytes=10-99999", 1000).unwrap(), (10, 999));
        for bad in [
            "bytes=1000-",
            "bytes=5-4",
            "bytes=-0",
            "bytes=-",
            "items=0-1",
            "bytes=0-1,4-5",
            "bytes=a-b",
        ] {
            assert!(
                matches!(parse_range(bad, 1000), Err(ServiceError::BadRange)),
                "{bad}"
            );
        }
    }
}
