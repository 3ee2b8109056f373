//! Upstream retrieval with a size cap and a total timeout.
//!
//! Bodies are buffered completely before anything is returned; a response
//! that exceeds the cap is abandoned mid-stream and never surfaces partially.

use std::time::{Duration, SystemTime};

use bytes::{Bytes, BytesMut};
use reqwest::header::{ACCEPT_ENCODING, CONTENT_TYPE};
use reqwest::redirect::Policy;
use thiserror::Error;
use url::Url;

pub const MAX_REDIRECTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FetchLimits {
    pub timeout: Duration,
    pub max_size: u64,
}

impl Default for FetchLimits {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(crate::config::DEFAULT_FETCH_TIMEOUT_SECONDS),
            max_size: crate::config::DEFAULT_MAX_BODY_BYTES,
        }
    }
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("upstream timed out")]
    FetchTimeout,
    #[error("upstream body exceeds {limit} bytes")]
    TooLarge { limit: u64 },
    #[error("upstream returned status {0}")]
    UpstreamStatus(u16),
    #[error("scheme {0:?} is not fetchable (http and https only)")]
    SchemeRejected(String),
    #[error("more than {MAX_REDIRECTS} redirects")]
    TooManyRedirects,
    #[error("upstream request failed: {0}")]
    Transport(String),
}

impl FetchError {
    /// Short machine-readable tag used in gateway error bodies.
    pub fn kind(&self) -> &'static str {
        match self {
            FetchError::FetchTimeout => "timeout",
            FetchError::TooLarge { .. } => "too_large",
            FetchError::UpstreamStatus(_) => "upstream_status",
            FetchError::SchemeRejected(_) => "scheme_rejected",
            FetchError::TooManyRedirects => "too_many_redirects",
            FetchError::Transport(_) => "transport",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FetchedResource {
    /// Final URL after redirects.
    pub url: Url,
    pub bytes: Bytes,
    pub content_type: Option<String>,
    pub fetched_at: SystemTime,
}

#[derive(Debug, Clone)]
pub struct Fetcher {
    client: reqwest::Client,
    limits: FetchLimits,
}

impl Fetcher {
    pub fn new(limits: FetchLimits) -> Result<Self, FetchError> {
        let client = reqwest::Client::builder()
            .redirect(Policy::limited(MAX_REDIRECTS))
            .timeout(limits.timeout)
            .build()
            .map_err(|e| FetchError::Transport(e.to_string()))?;
        Ok(Self { client, limits })
    }

    pub fn limits(&self) -> FetchLimits {
        self.limits
    }

    pub async fn fetch(&self, url: &Url) -> Result<FetchedResource, FetchError> {
        if !matches!(url.scheme(), "http" | "https") {
            return Err(FetchError::SchemeRejected(url.scheme().to_owned()));
        }

        // identity keeps the signed bytes exactly as the provider published them.
        let mut response = self
            .client
            .get(url.clone())
            .header(ACCEPT_ENCODING, "identity")
            .send()
            .await
            .map_err(map_reqwest_error)?;

        let status = response.status();
        if !status.is_success() {
            return Err(FetchError::UpstreamStatus(status.as_u16()));
        }
        let limit = self.limits.max_size;
        if response.content_length().is_some_and(|len| len > limit) {
            return Err(FetchError::TooLarge { limit });
        }

        let final_url = response.url().clone();
        let content_type = response
            .headers()
            .get(CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .map(str::to_owned);

        let mut body = BytesMut::new();
        while let Some(chunk) = response.chunk().await.map_err(map_reqwest_error)? {
            if body.len() as u64 + chunk.len() as u64 > limit {
                return Err(FetchError::TooLarge { limit });
            }
            body.extend_from_slice(&chunk);
        }

        Ok(FetchedResource {
            url: final_url,
            bytes: body.freeze(),
            content_type,
            fetched_at: SystemTime::now(),
        })
    }
}

fn map_reqwest_error(e: reqwest::Error) -> FetchError {
    if e.is_timeout() {
        FetchError::FetchTimeout
    } else if e.is_redirect() {
        FetchError::TooManyRedirects
    } else {
        FetchError::Transport(e.to_string())
    }
}
