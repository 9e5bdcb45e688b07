//! Recommendation provider: an optional remote endpoint with the local
//! knowledge base as fallback.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::kb::{self, Recommendation, Sections, Source};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone)]
pub struct RecoProvider {
    endpoint: Option<String>,
    key: Option<String>,
    client: reqwest::Client,
}

#[derive(Deserialize)]
struct RemoteReply {
    sections: Sections,
}

impl Default for RecoProvider {
    fn default() -> Self {
        Self::local()
    }
}

impl RecoProvider {
    pub fn local() -> Self {
        Self::new(None, None, DEFAULT_TIMEOUT)
    }

    pub fn new(endpoint: Option<String>, key: Option<String>, timeout: Duration) -> Self {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .expect("http client with default TLS settings");
        Self {
            endpoint: endpoint.filter(|e| !e.trim().is_empty()),
            key: key.filter(|k| !k.is_empty()),
            client,
        }
    }

    pub fn endpoint(&self) -> Option<&str> {
        self.endpoint.as_deref()
    }

    /// `None` for a disease outside the class list. A configured endpoint is
    /// tried first; any failure or incomplete answer falls back to the local entry.
    pub async fn recommend(&self, disease: &str) -> Option<Recommendation> {
        let local = kb::lookup(disease)?;
        let Some(endpoint) = &self.endpoint else {
            return Some(local);
        };
        match self.remote(endpoint, &local.disease).await {
            Ok(sections) if sections.is_complete() => Some(Recommendation {
                disease: local.disease,
                sections,
                source: Source::Remote,
            }),
            Ok(_) => {
                tracing::warn!(%endpoint, "remote recommendation incomplete, using local entry");
                Some(local)
            }
            Err(e) => {
                tracing::warn!(%endpoint, error = %e, "remote recommendation failed, using local entry");
                Some(local)
            }
        }
    }

    async fn remote(&self, endpoint: &str, disease: &str) -> reqwest::Result<Sections> {
        let mut req = self.client.post(endpoint).json(&json!({ "disease": disease }));
        if let Some(key) = &self.key {
            req = req.bearer_auth(key);
        }
        let reply: RemoteReply = req.send().await?.error_for_status()?.json().await?;
        Ok(reply.sections)
    }
}
