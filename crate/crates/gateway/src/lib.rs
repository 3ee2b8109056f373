//! Verifying gateway for third-party scripts.
//!
//! `GET /v1/resource?url=<absolute url>` fetches a governed resource,
//! verifies it against the trust policy, and returns only bytes that pass,
//! with `Access-Control-Allow-Origin: *` so pages can consume them
//! cross-origin. Ungoverned URLs are refused outright; failed verifications
//! get the rule's local fallback copy when one is configured, otherwise 403.

pub mod cache;
pub mod config;
pub mod fetch;
pub mod server;

use thiserror::Error;

pub use cache::{CacheEntry, CacheKey, VerifiedCache};
pub use config::{GatewayConfig, CONFIG_ENV};
pub use fetch::{FetchError, FetchLimits, FetchedResource, Fetcher};
pub use server::{router, serve, serve_on, Gateway, VERDICT_HEADER};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("config {path}: {reason}")]
    Config { path: String, reason: String },
    #[error(transparent)]
    Policy(#[from] sigscript_core::PolicyError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("http client: {0}")]
    Client(#[from] FetchError),
    #[error(transparent)]
    Io(std::io::Error),
}
