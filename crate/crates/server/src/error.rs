use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use thiserror::Error;

use ade_core::search::{ParamError, SearchError};

#[derive(Debug, Error)]
pub enum ApiError {
    #[error(transparent)]
    BadParam(#[from] ParamError),
    #[error("{0}")]
    NotFound(String),
    #[error("internal error")]
    Internal(String),
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    status: u16,
    #[serde(skip_serializing_if = "Option::is_none")]
    param: Option<&'a str>,
    message: String,
}

impl From<SearchError> for ApiError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::Param(p) => ApiError::BadParam(p),
            SearchError::Query(q) => ApiError::BadParam(ParamError { param: "query".into(), message: q.to_string() }),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, param, message) = match &self {
            ApiError::BadParam(p) => (StatusCode::BAD_REQUEST, Some(p.param.as_str()), p.message.clone()),
            ApiError::NotFound(what) => (StatusCode::NOT_FOUND, None, what.clone()),
            ApiError::Internal(detail) => {
                tracing::error!(%detail, "request failed");
                (StatusCode::INTERNAL_SERVER_ERROR, None, "internal error".to_string())
            }
        };
        let body = ErrorBody { status: status.as_u16(), param, message };
        (status, Json(body)).into_response()
    }
}
