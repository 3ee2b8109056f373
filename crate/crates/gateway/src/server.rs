use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Body;
use axum::extract::{RawQuery, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bytes::Bytes;
use serde_json::json;
use sigscript_core::{verify_resource, FailReason, TrustPolicy, TrustRule, VerificationVerdict};
use tokio::net::TcpListener;
use tracing::{info, warn};
use url::Url;

use crate::cache::VerifiedCache;
use crate::config::GatewayConfig;
use crate::fetch::{FetchLimits, Fetcher};
use crate::GatewayError;

pub const VERDICT_HEADER: &str = "x-sig-verdict";
const DEFAULT_CONTENT_TYPE: &str = "text/javascript";

/// Shared gateway state: config, the current policy snapshot, the verified
/// cache, and the upstream client.
#[derive(Debug)]
pub struct Gateway {
    config: GatewayConfig,
    policy: RwLock<Option<Arc<TrustPolicy>>>,
    cache: VerifiedCache,
    fetcher: Fetcher,
}

impl Gateway {
    /// Builds a gateway and loads its policy. Fails if the policy does not
    /// load; a gateway never starts without one.
    pub fn start(config: GatewayConfig) -> Result<Arc<Self>, GatewayError> {
        let policy = TrustPolicy::load(&config.policy_path)?;
        let gateway = Self::unloaded(config)?;
        gateway.swap_policy(policy);
        Ok(gateway)
    }

    /// A gateway with no policy snapshot yet. Health reports 503 and every
    /// resource request is refused until a reload succeeds.
    pub fn unloaded(config: GatewayConfig) -> Result<Arc<Self>, GatewayError> {
        let fetcher = Fetcher::new(FetchLimits {
            timeout: config.fetch_timeout(),
            max_size: config.max_body_bytes,
        })?;
        Ok(Arc::new(Self {
            cache: VerifiedCache::new(config.cache_ttl()),
            config,
            policy: RwLock::new(None),
            fetcher,
        }))
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn cache(&self) -> &VerifiedCache {
        &self.cache
    }

    pub fn policy(&self) -> Option<Arc<TrustPolicy>> {
        self.policy.read().expect("policy lock poisoned").clone()
    }

    fn swap_policy(&self, policy: TrustPolicy) {
        *self.policy.write().expect("policy lock poisoned") = Some(Arc::new(policy));
        // Cached bodies were admitted under the old rules.
        self.cache.clear();
    }

    /// Re-reads the policy file. On failure the current snapshot stays in
    /// force and the error is returned.
    pub fn reload_policy(&self) -> Result<usize, GatewayError> {
        match TrustPolicy::load(&self.config.policy_path) {
            Ok(policy) => {
                let rules = policy.rules().len();
                self.swap_policy(policy);
                info!(rules, "policy reloaded");
                Ok(rules)
            }
            Err(e) => {
                warn!(error = %e, "policy reload failed; keeping previous snapshot");
                Err(e.into())
            }
        }
    }
}

pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/v1/resource", get(handle_resource))
        .route("/healthz", get(handle_health))
        .route("/v1/admin/reload", post(handle_reload))
        .with_state(gateway)
}

/// Serves until the returned future is dropped or the listener fails.
pub async fn serve_on(listener: TcpListener, gateway: Arc<Gateway>) -> std::io::Result<()> {
    axum::serve(listener, router(gateway)).await
}

/// Binds `listen_addr`, reloads on SIGHUP, and serves until Ctrl-C.
pub async fn serve(config: GatewayConfig) -> Result<(), GatewayError> {
    let gateway = Gateway::start(config)?;
    let listener = TcpListener::bind(&gateway.config.listen_addr)
        .await
        .map_err(|e| GatewayError::Bind {
            addr: gateway.config.listen_addr.clone(),
            source: e,
        })?;
    info!(addr = %listener.local_addr().map_err(GatewayError::Io)?, "gateway listening");

    #[cfg(unix)]
    {
        let gw = gateway.clone();
        tokio::spawn(async move {
            use tokio::signal::unix::{signal, SignalKind};
            let Ok(mut hup) = signal(SignalKind::hangup()) else { return };
            while hup.recv().await.is_some() {
                let _ = gw.reload_policy();
            }
        });
    }

    axum::serve(listener, router(gateway))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(GatewayError::Io)
}

fn json_error(status: StatusCode, body: serde_json::Value) -> Response {
    (status, [(header::ACCESS_CONTROL_ALLOW_ORIGIN, "*")], Json(body)).into_response()
}

fn verdict_header(verdict: &VerificationVerdict) -> String {
    format!(
        "pass; keys={}; mode={}",
        verdict.satisfied_key_ids.join(","),
        verdict.mode.as_str()
    )
}

fn target_url(query: Option<&str>) -> Result<Url, String> {
    let query = query.ok_or("missing url parameter")?;
    let raw = url::form_urlencoded::parse(query.as_bytes())
        .find(|(k, _)| k == "url")
        .map(|(_, v)| v.into_owned())
        .ok_or("missing url parameter")?;
    let url = Url::parse(&raw).map_err(|e| format!("invalid url: {e}"))?;
    if !matches!(url.scheme(), "http" | "https") {
        return Err(format!("scheme {:?} not allowed", url.scheme()));
    }
    Ok(url)
}

async fn handle_resource(State(gw): State<Arc<Gateway>>, RawQuery(query): RawQuery) -> Response {
    let url = match target_url(query.as_deref()) {
        Ok(url) => url,
        Err(detail) => {
            return json_error(StatusCode::BAD_REQUEST, json!({"error": "bad_request", "detail": detail}))
        }
    };
    let Some(policy) = gw.policy() else {
        return json_error(StatusCode::SERVICE_UNAVAILABLE, json!({"error": "policy_not_loaded"}));
    };
    let rule_index = match policy.match_rule(&url) {
        Ok(rule) => policy
            .rules()
            .iter()
            .position(|r| std::ptr::eq(r, rule))
            .expect("matched rule belongs to the policy"),
        Err(_) => {
            return json_error(
                StatusCode::NOT_FOUND,
                json!({"error": "no_matching_rule", "url": url.as_str()}),
            )
        }
    };

    if let Some(entry) = gw.cache.latest(url.as_str()) {
        return verified_response(&gw, entry.bytes, entry.content_type, &entry.verdict);
    }

    let fetched = match gw.fetcher.fetch(&url).await {
        Ok(f) => f,
        Err(e) => {
            warn!(url = %url, error = %e, "upstream fetch failed");
            return json_error(
                StatusCode::BAD_GATEWAY,
                json!({"error": "fetch_failed", "kind": e.kind(), "detail": e.to_string()}),
            );
        }
    };

    let bytes = fetched.bytes.clone();
    let policy_for_verify = policy.clone();
    let verdict = tokio::task::spawn_blocking(move || {
        verify_resource(&policy_for_verify.rules()[rule_index], &bytes)
    })
    .await
    .expect("verification task panicked");

    if verdict.is_pass() {
        gw.cache.put(
            url.as_str(),
            fetched.bytes.clone(),
            fetched.content_type.clone(),
            verdict.clone(),
        );
        return verified_response(&gw, fetched.bytes, fetched.content_type, &verdict);
    }

    let reason = verdict.reason.unwrap_or(FailReason::SignatureInvalid);
    warn!(url = %url, %reason, "verification failed");
    let rule = &policy.rules()[rule_index];
    match serve_fallback(&gw, rule).await {
        FallbackOutcome::Served(bytes) => fallback_response(bytes, reason),
        FallbackOutcome::NotConfigured => json_error(
            StatusCode::FORBIDDEN,
            json!({"error": "verification_failed", "reason": reason.as_str()}),
        ),
        FallbackOutcome::Unavailable(detail) => json_error(
            StatusCode::FORBIDDEN,
            json!({"error": "verification_failed", "reason": reason.as_str(), "fallback": detail}),
        ),
    }
}

fn verified_response(
    gw: &Gateway,
    bytes: Bytes,
    content_type: Option<String>,
    verdict: &VerificationVerdict,
) -> Response {
    let content_type = content_type
        .and_then(|ct| HeaderValue::from_str(&ct).ok())
        .unwrap_or(HeaderValue::from_static(DEFAULT_CONTENT_TYPE));
    let mut response = Response::new(Body::from(bytes));
    let headers = response.headers_mut();
    headers.insert(header::CONTENT_TYPE, content_type);
    headers.insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, HeaderValue::from_static("*"));
    headers.insert(header::ACCESS_CONTROL_EXPOSE_HEADERS, HeaderValue::from_static(VERDICT_HEADER));
    headers.insert(
        header::CACHE_CONTROL,
        HeaderValue::from_str(&format!("max-age={}", gw.config.cache_ttl_seconds)).expect("ascii"),
    );
    headers.insert(
        VERDICT_HEADER,
        HeaderValue::from_str(&verdict_header(verdict)).expect("key ids are ascii"),
    );
    response
}

fn fallback_response(bytes: Vec<u8>, reason: FailReason) -> Response {
    let mut response = Response::new(Body::from(bytes));
    let headers = response.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static(DEFAULT_CONTENT_TYPE));
    headers.insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, HeaderValue::from_static("*"));
    headers.insert(header::ACCESS_CONTROL_EXPOSE_HEADERS, HeaderValue::from_static(VERDICT_HEADER));
    headers.insert(header::CACHE_CONTROL, HeaderValue::from_static("no-store"));
    headers.insert(
        VERDICT_HEADER,
        HeaderValue::from_str(&format!("fallback; reason={reason}")).expect("ascii"),
    );
    response
}

enum FallbackOutcome {
    Served(Vec<u8>),
    NotConfigured,
    Unavailable(String),
}

/// Reads the rule's fallback copy from the local fallback root. Never touches
/// the network. A fallback that carries signature lines, or any fallback
/// under a rule with a pinned digest, must itself pass the rule; an unsigned
/// fallback under a key-only rule is trusted as operator content.
async fn serve_fallback(gw: &Gateway, rule: &TrustRule) -> FallbackOutcome {
    let (Some(fallback_url), Some(root)) = (rule.fallback_url(), gw.config.fallback_root.as_ref())
    else {
        return FallbackOutcome::NotConfigured;
    };
    let Some(path) = local_fallback_path(root, fallback_url) else {
        return FallbackOutcome::Unavailable("fallback path escapes the fallback root".into());
    };
    let bytes = match tokio::fs::read(&path).await {
        Ok(bytes) => bytes,
        Err(e) => {
            warn!(path = %path.display(), error = %e, "fallback unreadable");
            return FallbackOutcome::Unavailable("fallback file unreadable".into());
        }
    };

    let signed = sigscript_core::EnvelopeView::parse(&bytes).map_or(true, |v| !v.is_empty());
    if signed || rule.legacy_digest().is_some() {
        let verdict = verify_resource(rule, &bytes);
        if !verdict.is_pass() {
            warn!(path = %path.display(), ?verdict.reason, "fallback failed verification");
            return FallbackOutcome::Unavailable("fallback failed verification".into());
        }
    }
    FallbackOutcome::Served(bytes)
}

/// Maps the fallback URL's path onto `root`, refusing any segment that could
/// climb out of it.
fn local_fallback_path(root: &Path, url: &Url) -> Option<PathBuf> {
    let mut path = root.to_path_buf();
    let mut pushed = false;
    for segment in url.path_segments()? {
        let decoded = percent_decode(segment)?;
        if decoded.is_empty() {
            continue;
        }
        if decoded == "." || decoded == ".." || decoded.contains(['/', '\\', '\0']) {
            return None;
        }
        path.push(decoded);
        pushed = true;
    }
    pushed.then_some(path)
}

fn percent_decode(segment: &str) -> Option<String> {
    percent_encoding::percent_decode_str(segment)
        .decode_utf8()
        .ok()
        .map(|s| s.into_owned())
}

async fn handle_health(State(gw): State<Arc<Gateway>>) -> Response {
    if gw.policy().is_some() {
        (StatusCode::OK, "ok").into_response()
    } else {
        (StatusCode::SERVICE_UNAVAILABLE, "policy not loaded").into_response()
    }
}

async fn handle_reload(State(gw): State<Arc<Gateway>>) -> Response {
    let result = tokio::task::spawn_blocking({
        let gw = gw.clone();
        move || gw.reload_policy()
    })
    .await
    .expect("reload task panicked");
    match result {
        Ok(rules) => (StatusCode::OK, Json(json!({"status": "reloaded", "rules": rules}))).into_response(),
        Err(e) => (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(json!({"error": "policy_parse_error", "detail": e.to_string()})),
        )
            .into_response(),
    }
}
