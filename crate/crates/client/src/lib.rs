//! Thin async client for the ADE service.

use serde::de::DeserializeOwned;
use serde::Deserialize;
use thiserror::Error;
use url::Url;

use ade_core::search::{SearchResponse, TrialDetail};
use ade_core::taxonomy::{Lang, NodeKind, Suggestion};
use ade_core::DatasetSummary;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid service URL: {0}")]
    Url(#[from] url::ParseError),
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("service answered {status}{}: {message}", param.as_deref().map(|p| format!(" on `{p}`")).unwrap_or_default())]
    Api { status: u16, param: Option<String>, message: String },
}

#[derive(Deserialize)]
struct ErrorBody {
    param: Option<String>,
    message: String,
}

#[derive(Debug, Clone)]
pub struct Client {
    base: Url,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base: &str) -> Result<Client, ClientError> {
        let mut base = Url::parse(base)?;
        if !base.path().ends_with('/') {
            base.set_path(&format!("{}/", base.path()));
        }
        Ok(Client { base, http: reqwest::Client::new() })
    }

    fn url(&self, path: &str, query: Option<&str>) -> Result<Url, ClientError> {
        let mut url = self.base.join(path)?;
        url.set_query(query.map(|q| q.strip_prefix('?').unwrap_or(q)).filter(|q| !q.is_empty()));
        Ok(url)
    }

    async fn send(&self, url: Url) -> Result<reqwest::Response, ClientError> {
        let response = self.http.get(url).send().await?;
        let status = response.status();
        if status.is_success() {
            return Ok(response);
        }
        let text = response.text().await.unwrap_or_default();
        let (param, message) = match serde_json::from_str::<ErrorBody>(&text) {
            Ok(body) => (body.param, body.message),
            Err(_) => (None, text),
        };
        Err(ClientError::Api { status: status.as_u16(), param, message })
    }

    async fn json<T: DeserializeOwned>(&self, url: Url) -> Result<T, ClientError> {
        Ok(self.send(url).await?.json().await?)
    }

    async fn text(&self, url: Url) -> Result<String, ClientError> {
        Ok(self.send(url).await?.text().await?)
    }

    pub async fn health(&self) -> Result<String, ClientError> {
        self.text(self.url("healthz", None)?).await
    }

    pub async fn summary(&self) -> Result<DatasetSummary, ClientError> {
        self.json(self.url("api/summary", None)?).await
    }

    /// Run a search given its query string (`group_1_ap=...&set=mixed`).
    pub async fn search(&self, query: &str) -> Result<SearchResponse, ClientError> {
        self.json(self.url("api/search", Some(query))?).await
    }

    pub async fn explain(&self, query: &str) -> Result<String, ClientError> {
        self.text(self.url("api/explain", Some(query))?).await
    }

    pub async fn overlay(&self, query: &str, selected: usize, target: usize) -> Result<String, ClientError> {
        let query = format!("{query}&selected={selected}&target={target}");
        self.text(self.url("api/search/overlay", Some(&query))?).await
    }

    pub async fn autocomplete(
        &self,
        fragment: &str,
        kind: Option<NodeKind>,
        lang: Lang,
        limit: usize,
    ) -> Result<Vec<Suggestion>, ClientError> {
        let mut url = self.url("api/autocomplete", None)?;
        {
            let mut q = url.query_pairs_mut();
            q.append_pair("q", fragment).append_pair("lang", lang.as_str()).append_pair("limit", &limit.to_string());
            if let Some(kind) = kind {
                q.append_pair("kind", kind.as_str());
            }
        }
        self.json(url).await
    }

    /// Trial detail, `None` when the service does not know the trial.
    pub async fn trial(&self, id: &str, lang: Lang) -> Result<Option<TrialDetail>, ClientError> {
        let mut url = self.url("api/trials/", None)?;
        url.path_segments_mut().map_err(|_| url::ParseError::RelativeUrlWithCannotBeABaseBase)?.pop_if_empty().push(id);
        url.query_pairs_mut().append_pair("lang", lang.as_str());
        match self.json(url).await {
            Ok(detail) => Ok(Some(detail)),
            Err(ClientError::Api { status: 404, .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }
}
