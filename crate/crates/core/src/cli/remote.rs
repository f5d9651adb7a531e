//! Blocking client for the `/v1` HTTP API, used by `--remote`.

use reqwest::blocking::{multipart, Client, Response};
use reqwest::Url;
use serde::de::DeserializeOwned;

use super::CliError;
use crate::api::{DeleteResponse, ErrorBody, ModelResponse, RelatedResponse, SearchResponse};
use crate::catalog::{CatalogStats, IngestOutcome, SourceMeta};
use crate::search::{Filters, SearchMode};

pub struct RemoteClient {
    base: Url,
    http: Client,
}

fn filter_pairs(filters: &Filters) -> Vec<(&'static str, String)> {
    let mut out = Vec::new();
    if let Some(w) = filters.watertight {
        out.push(("watertight", w.to_string()));
    }
    if let Some(n) = filters.consistent_normals {
        out.push(("normals", n.to_string()));
    }
    if let Some(f) = &filters.filetype {
        out.push(("filetype", f.clone()));
    }
    if let Some(s) = &filters.source {
        out.push(("source", s.clone()));
    }
    out
}

impl RemoteClient {
    pub fn new(base: &str) -> Result<RemoteClient, CliError> {
        let mut base =
            Url::parse(base).map_err(|e| CliError::User(format!("invalid --remote url: {e}")))?;
        if !base.path().ends_with('/') {
            base.set_path(&format!("{}/", base.path()));
        }
        Ok(RemoteClient {
            base,
            http: Client::new(),
        })
    }

    fn url(&self, path: &str) -> Result<Url, CliError> {
        self.base
            .join(&format!("v1/{path}"))
            .map_err(|e| CliError::User(e.to_string()))
    }

    fn decode<T: DeserializeOwned>(resp: reqwest::Result<Response>) -> Result<T, CliError> {
        let resp = resp.map_err(|e| CliError::Internal(format!("request failed: {e}")))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| CliError::Internal(format!("reading response: {e}")))?;
        if status.is_success() {
            return serde_json::from_str(&text)
                .map_err(|e| CliError::Internal(format!("bad response: {e}")));
        }
        let message = match serde_json::from_str::<ErrorBody>(&text) {
            Ok(b) => format!(
                "{} ({}): {}",
                b.error.code,
                status.as_u16(),
                b.error.message
            ),
            Err(_) => format!("HTTP {status}: {text}"),
        };
        if status.is_client_error() {
            Err(CliError::User(message))
        } else {
            Err(CliError::Internal(message))
        }
    }

    pub fn ingest(
        &self,
        bytes: Vec<u8>,
        file_name: &str,
        meta: &SourceMeta,
    ) -> Result<IngestOutcome, CliError> {
        let mut form = multipart::Form::new()
            .part(
                "file",
                multipart::Part::bytes(bytes).file_name(file_name.to_string()),
            )
            .text("domain", meta.domain.clone())
            .text("tags", meta.tags.join(","));
        for (k, v) in [("url", &meta.url), ("name", &Some(meta.name.clone()))] {
            if let Some(v) = v.as_ref().filter(|v| !v.is_empty()) {
                form = form.text(k, v.clone());
            }
        }
        if !meta.description.is_empty() {
            form = form.text("description", meta.description.clone());
        }
        Self::decode(self.http.post(self.url("models")?).multipart(form).send())
    }

    pub fn search(
        &self,
        mode: SearchMode,
        bytes: Vec<u8>,
        file_name: &str,
        k: usize,
        filters: &Filters,
    ) -> Result<SearchResponse, CliError> {
        let mut form = multipart::Form::new()
            .part(
                "file",
                multipart::Part::bytes(bytes).file_name(file_name.to_string()),
            )
            .text("k", k.to_string());
        for (key, v) in filter_pairs(filters) {
            form = form.text(key, v);
        }
        Self::decode(
            self.http
                .post(self.url(&format!("search/{mode}"))?)
                .multipart(form)
                .send(),
        )
    }

    pub fn text(&self, q: &str, k: usize, filters: &Filters) -> Result<SearchResponse, CliError> {
        let mut url = self.url("search/text")?;
        {
            let mut pairs = url.query_pairs_mut();
            pairs.append_pair("q", q).append_pair("k", &k.to_string());
            for (key, v) in filter_pairs(filters) {
                pairs.append_pair(key, &v);
            }
        }
        Self::decode(self.http.get(url).send())
    }

    pub fn delete(&self, id: &str) -> Result<DeleteResponse, CliError> {
        Self::decode(self.http.delete(self.url(&format!("models/{id}"))?).send())
    }

    pub fn show(&self, id: &str) -> Result<ModelResponse, CliError> {
        Self::decode(self.http.get(self.url(&format!("models/{id}"))?).send())
    }

    pub fn related(&self, id: &str) -> Result<RelatedResponse, CliError> {
        Self::decode(
            self.http
                .get(self.url(&format!("models/{id}/related"))?)
                .send(),
        )
    }

    pub fn stats(&self) -> Result<CatalogStats, CliError> {
        Self::decode(self.http.get(self.url("stats")?).send())
    }
}
