//! Shared conformance corpus for other verifier implementations.
//!
//! Each vector is a UTF-8 file plus the verification inputs to use with it
//! (one public key or one legacy digest, threshold 1). The expected verdict is
//! whatever `sigscript verify --json` prints for that vector, so the corpus
//! always reflects this CLI's behaviour.
//!
//! Layout written by [`write_corpus`]:
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/keys/<name>.pub.pem
//! <dir>/vectors/<vector>.js
//! ```

use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use sigscript_core::{attach_signature, sha256_digest, sign_payload, KeyId, PrivateKey, SignatureLine};

/// Signing keys for the corpus. `primary` is the key verifiers pin;
/// the others sign vectors that must not verify under it.
pub struct CorpusKeys {
    pub primary: PrivateKey,
    pub secondary: PrivateKey,
    pub other: PrivateKey,
}

#[derive(Debug, Clone, Serialize)]
pub struct Vector {
    pub name: String,
    /// Relative to the corpus directory.
    pub file: String,
    /// Relative to the corpus directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub public_key: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub legacy_digest_sha256: Option<String>,
    pub expected: serde_json::Value,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    version: u32,
    vectors: &'a [Vector],
}

enum Basis {
    Key(&'static str),
    Digest(String),
}

const PAYLOAD: &str = "/*! widget 2.1.0 */\n!function(w){\"use strict\";w.widget={v:\"2.1.0\",t:\"caf\u{e9} \u{2713}\"}}(window);\n";

fn signed(key: &PrivateKey, file: &[u8]) -> Vec<u8> {
    attach_signature(file, &sign_payload(key, file).expect("corpus key signs"))
}

fn flip_last_payload_byte(mut file: Vec<u8>) -> Vec<u8> {
    let i = file.len() - 3;
    file[i] ^= 0x01;
    file
}

/// Writes the corpus into `dir` (created if needed) and returns its vectors.
pub fn write_corpus(dir: &Path, keys: &CorpusKeys) -> io::Result<Vec<Vector>> {
    let key_dir = dir.join("keys");
    let vector_dir = dir.join("vectors");
    fs::create_dir_all(&key_dir)?;
    fs::create_dir_all(&vector_dir)?;
    for (name, key) in [("primary", &keys.primary), ("secondary", &keys.secondary)] {
        let pem = key.public_key().to_pem().map_err(io::Error::other)?;
        fs::write(key_dir.join(format!("{name}.pub.pem")), pem)?;
    }

    let payload = PAYLOAD.as_bytes();
    let primary_named = keys.primary.clone().with_key_id(Some(KeyId::new("primary").expect("valid id")));
    let one = signed(&keys.primary, payload);
    let two = signed(&keys.secondary, &one);

    let mut crlf = Vec::new();
    let line = sign_payload(&keys.primary, payload).expect("corpus key signs");
    crlf.extend_from_slice(line.to_string().as_bytes());
    crlf.extend_from_slice(b"\r\n");
    crlf.extend_from_slice(payload);

    let mut bad_signature = one.clone();
    bad_signature[20] = if bad_signature[20] == b'A' { b'B' } else { b'A' };

    let digest = sha256_digest(payload).to_hex();
    let mut wrong_digest = digest.clone().into_bytes();
    wrong_digest[0] = if wrong_digest[0] == b'0' { b'1' } else { b'0' };
    let wrong_digest = String::from_utf8(wrong_digest).expect("hex is ascii");

    let short = SignatureLine::new(None, vec![0u8; 16]);
    let cases: Vec<(&str, Vec<u8>, Basis)> = vec![
        ("signed", one.clone(), Basis::Key("primary")),
        ("signed-key-id", signed(&primary_named, payload), Basis::Key("primary")),
        ("signed-empty-payload", signed(&keys.primary, b""), Basis::Key("primary")),
        ("signed-crlf", crlf, Basis::Key("primary")),
        ("two-layers-inner-key", two.clone(), Basis::Key("primary")),
        ("two-layers-outer-key", two.clone(), Basis::Key("secondary")),
        ("tampered-payload", flip_last_payload_byte(one.clone()), Basis::Key("primary")),
        ("tampered-signature", bad_signature, Basis::Key("primary")),
        ("tampered-two-layers", flip_last_payload_byte(two), Basis::Key("primary")),
        ("other-key", signed(&keys.other, payload), Basis::Key("primary")),
        ("short-signature", attach_signature(payload, &short), Basis::Key("primary")),
        ("unsigned-with-key", payload.to_vec(), Basis::Key("primary")),
        ("legacy", payload.to_vec(), Basis::Digest(digest.clone())),
        ("legacy-mismatch", payload.to_vec(), Basis::Digest(wrong_digest)),
        ("legacy-but-signed", one, Basis::Digest(digest.clone())),
        ("malformed-base64", [b"//JSSignature:not*base64\n".as_slice(), payload].concat(), Basis::Key("primary")),
        ("malformed-no-newline", b"//JSSignature:AAAA".to_vec(), Basis::Key("primary")),
        ("empty", Vec::new(), Basis::Key("primary")),
    ];

    let mut vectors = Vec::with_capacity(cases.len());
    for (name, bytes, basis) in cases {
        let file = format!("vectors/{name}.js");
        fs::write(dir.join(&file), &bytes)?;
        let (public_key, legacy) = match basis {
            Basis::Key(k) => (Some(format!("keys/{k}.pub.pem")), None),
            Basis::Digest(d) => (None, Some(d)),
        };
        let expected = expected_verdict(dir, &file, public_key.as_deref(), legacy.as_deref())?;
        vectors.push(Vector {
            name: name.to_owned(),
            file,
            public_key,
            legacy_digest_sha256: legacy,
            expected,
        });
    }

    let manifest = serde_json::to_vec_pretty(&Manifest { version: 1, vectors: &vectors })?;
    fs::write(dir.join("manifest.json"), manifest)?;
    Ok(vectors)
}

fn expected_verdict(
    dir: &Path,
    file: &str,
    public_key: Option<&str>,
    legacy: Option<&str>,
) -> io::Result<serde_json::Value> {
    let mut args = vec!["sigscript".to_owned(), "verify".to_owned(), "--json".to_owned()];
    if let Some(key) = public_key {
        args.extend(["--pub".to_owned(), dir.join(key).display().to_string()]);
    }
    if let Some(digest) = legacy {
        args.extend(["--legacy-digest".to_owned(), digest.to_owned()]);
    }
    args.push(dir.join(file).display().to_string());

    let mut stdout = Vec::new();
    let code = crate::run(args, &mut io::empty(), &mut stdout, &mut io::sink());
    if code > crate::EXIT_FAIL {
        return Err(io::Error::other(format!("verify exited {code} on {file}")));
    }
    serde_json::from_slice(&stdout).map_err(io::Error::other)
}
