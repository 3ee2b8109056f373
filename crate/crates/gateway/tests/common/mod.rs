#![allow(dead_code)]

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Body;
use axum::extract::{Path as AxPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Redirect, Response};
use axum::routing::get;
use axum::Router;
use sigscript_core::{attach_signature, sign_payload, PrivateKey};
use tokio::net::TcpListener;

pub fn key_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/keys")
}

pub fn private_key(name: &str) -> PrivateKey {
    PrivateKey::read_pem_file(&key_dir().join(format!("{name}.pem")))
        .unwrap()
        .with_key_id(Some(name.parse().unwrap()))
}

pub fn sign(key: &PrivateKey, file: &[u8]) -> Vec<u8> {
    attach_signature(file, &sign_payload(key, file).unwrap())
}

/// Named bodies served at `/files/<name>`, swappable while running.
#[derive(Clone, Default)]
pub struct Upstream {
    pub files: Arc<Mutex<HashMap<String, Vec<u8>>>>,
    pub hits: Arc<Mutex<HashMap<String, usize>>>,
}

impl Upstream {
    pub fn set(&self, name: &str, body: Vec<u8>) {
        self.files.lock().unwrap().insert(name.to_owned(), body);
    }

    pub fn hits(&self, name: &str) -> usize {
        self.hits.lock().unwrap().get(name).copied().unwrap_or(0)
    }
}

async fn serve_file(State(up): State<Upstream>, AxPath(name): AxPath<String>) -> Response {
    *up.hits.lock().unwrap().entry(name.clone()).or_default() += 1;
    match up.files.lock().unwrap().get(&name) {
        Some(body) => (
            [(header::CONTENT_TYPE, "application/javascript; charset=utf-8")],
            body.clone(),
        )
            .into_response(),
        None => StatusCode::NOT_FOUND.into_response(),
    }
}

/// Chunked body of `n` bytes with no Content-Length.
async fn stream(AxPath(n): AxPath<usize>) -> Response {
    let chunks = (0..n).step_by(100).map(move |start| {
        Ok::<_, std::io::Error>(vec![b's'; (n - start).min(100)])
    });
    Body::from_stream(futures_util::stream::iter(chunks)).into_response()
}

async fn slow() -> &'static str {
    tokio::time::sleep(Duration::from_secs(5)).await;
    "too late"
}

pub async fn spawn_upstream(up: Upstream) -> SocketAddr {
    let app = Router::new()
        .route("/files/{name}", get(serve_file))
        .route("/redirect/{name}", get(|AxPath(name): AxPath<String>| async move {
            Redirect::temporary(&format!("/files/{name}"))
        }))
        .route("/loop", get(|| async { Redirect::temporary("/loop") }))
        .route("/slow.js", get(slow))
        .route("/stream/{n}", get(stream))
        .with_state(up);
    spawn(app).await
}

pub async fn spawn(app: Router) -> SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    addr
}

pub fn copy_keys(dir: &Path, names: &[&str]) {
    for name in names {
        std::fs::copy(key_dir().join(format!("{name}.pub.pem")), dir.join(format!("{name}.pub.pem"))).unwrap();
    }
}

pub fn encode(url: &str) -> String {
    url::form_urlencoded::byte_serialize(url.as_bytes()).collect()
}
