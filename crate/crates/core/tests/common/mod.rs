#![allow(dead_code)]

pub mod sha256_oracle;

use std::path::PathBuf;

use sigscript_core::{KeyId, PrivateKey, PublicKey};

pub fn fixture_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

/// Loads `keys/<name>.pem` and `keys/<name>.pub.pem`, tagging both with
/// `name` as the key id.
pub fn fixture_keys(name: &str) -> (PrivateKey, PublicKey) {
    let id = Some(KeyId::new(name).unwrap());
    let private = PrivateKey::read_pem_file(&fixture_path(&format!("keys/{name}.pem")))
        .unwrap()
        .with_key_id(id.clone());
    let public = PublicKey::read_pem_file(&fixture_path(&format!("keys/{name}.pub.pem")))
        .unwrap()
        .with_key_id(id);
    (private, public)
}

/// Same key material, no key id: signatures carry bare lines.
pub fn fixture_keys_bare(name: &str) -> (PrivateKey, PublicKey) {
    let (private, public) = fixture_keys(name);
    (private.with_key_id(None), public.with_key_id(None))
}
