use std::sync::Arc;

use axum::extract::{Path, Query, RawQuery, State};
use axum::http::header;
use axum::response::IntoResponse;
use axum::Json;
use serde::{Deserialize, Serialize};

use ade_core::search::{self, ParamError, SearchParams, SearchResponse, TrialDetail};
use ade_core::taxonomy::{Lang, NodeKind, Suggestion};
use ade_core::DatasetSummary;

use crate::error::ApiError;
use crate::AppState;

fn bad(param: &str, message: impl Into<String>) -> ApiError {
    ApiError::BadParam(ParamError { param: param.into(), message: message.into() })
}

fn lang_param(lang: Option<&str>) -> Result<Lang, ApiError> {
    lang.map_or(Ok(Lang::En), |l| l.parse().map_err(|e: String| bad("lang", e)))
}

fn kind_param(kind: Option<&str>) -> Result<Option<NodeKind>, ApiError> {
    match kind.map(str::trim).filter(|k| !k.is_empty()) {
        None => Ok(None),
        Some(k) => k.parse().map(Some).map_err(|e: String| bad("kind", e)),
    }
}

fn parse(state: &AppState, raw: Option<&str>) -> Result<(Arc<ade_core::Dataset>, SearchParams), ApiError> {
    let ds = state.snapshot();
    let params = search::parse_search_params(raw.unwrap_or(""), ds.taxonomy())?;
    Ok((ds, params))
}

pub async fn healthz() -> &'static str {
    "ok"
}

pub async fn summary(State(state): State<Arc<AppState>>) -> Json<DatasetSummary> {
    Json(state.snapshot().summary())
}

pub async fn search(
    State(state): State<Arc<AppState>>,
    RawQuery(raw): RawQuery,
) -> Result<Json<SearchResponse>, ApiError> {
    let (ds, params) = parse(&state, raw.as_deref())?;
    Ok(Json(search::search(&ds, &params, &state.styles)?))
}

#[derive(Deserialize)]
pub struct OverlayParams {
    selected: Option<String>,
    target: Option<String>,
}

pub async fn overlay(
    State(state): State<Arc<AppState>>,
    Query(which): Query<OverlayParams>,
    RawQuery(raw): RawQuery,
) -> Result<impl IntoResponse, ApiError> {
    let index = |name: &str, v: Option<&String>| -> Result<usize, ApiError> {
        let v = v.ok_or_else(|| bad(name, "required"))?;
        v.trim().parse().map_err(|_| bad(name, format!("expected a group index, got `{v}`")))
    };
    let selected = index("selected", which.selected.as_ref())?;
    let target = index("target", which.target.as_ref())?;
    let (ds, params) = parse(&state, raw.as_deref())?;
    let svg = search::overlay_svg(&ds, &params, selected, target, &state.styles)?;
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], svg))
}

pub async fn explain(
    State(state): State<Arc<AppState>>,
    RawQuery(raw): RawQuery,
) -> Result<impl IntoResponse, ApiError> {
    let (ds, params) = parse(&state, raw.as_deref())?;
    let csv = search::explain_csv(&ds, &params)?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv))
}

#[derive(Deserialize)]
pub struct AutocompleteParams {
    kind: Option<String>,
    #[serde(default)]
    q: String,
    lang: Option<String>,
    limit: Option<String>,
}

const MAX_SUGGESTIONS: usize = 100;

pub async fn autocomplete(
    State(state): State<Arc<AppState>>,
    Query(p): Query<AutocompleteParams>,
) -> Result<Json<Vec<Suggestion>>, ApiError> {
    let kind = kind_param(p.kind.as_deref())?;
    let lang = lang_param(p.lang.as_deref())?;
    let limit = match p.limit.as_deref() {
        None | Some("") => 10,
        Some(l) => l.trim().parse::<usize>().map_err(|_| bad("limit", format!("expected a count, got `{l}`")))?,
    };
    let ds = state.snapshot();
    Ok(Json(ds.taxonomy().autocomplete(&p.q, kind, lang, limit.min(MAX_SUGGESTIONS))))
}

#[derive(Deserialize)]
pub struct TaxonomyParams {
    kind: Option<String>,
    lang: Option<String>,
}

#[derive(Serialize)]
pub struct TaxonomyEntry {
    id: String,
    kind: NodeKind,
    label: String,
    parents: Vec<String>,
    children: Vec<String>,
}

pub async fn taxonomy(
    State(state): State<Arc<AppState>>,
    Query(p): Query<TaxonomyParams>,
) -> Result<Json<Vec<TaxonomyEntry>>, ApiError> {
    let kind = kind_param(p.kind.as_deref())?;
    let lang = lang_param(p.lang.as_deref())?;
    let ds = state.snapshot();
    let t = ds.taxonomy();
    let entries = t
        .iter()
        .filter(|n| kind.is_none_or(|k| n.kind == k))
        .map(|n| TaxonomyEntry {
            id: n.id.clone(),
            kind: n.kind,
            label: n.label(lang).to_string(),
            parents: n.parents.iter().cloned().collect(),
            children: t.children(&n.id).map(String::from).collect(),
        })
        .collect();
    Ok(Json(entries))
}

#[derive(Deserialize)]
pub struct LangParam {
    lang: Option<String>,
}

pub async fn trial(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(p): Query<LangParam>,
) -> Result<Json<TrialDetail>, ApiError> {
    let lang = lang_param(p.lang.as_deref())?;
    let ds = state.snapshot();
    search::trial_detail(&ds, &id, lang).map(Json).ok_or_else(|| ApiError::NotFound(format!("no trial `{id}`")))
}
