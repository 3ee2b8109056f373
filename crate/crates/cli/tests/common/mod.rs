#![allow(dead_code)]

pub mod sha256_oracle;

use std::path::PathBuf;

use rand::Rng;
use sigscript_core::{attach_signature, sign_payload, KeyId, PrivateKey, PublicKey};

pub fn fixture_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(rel)
}

pub fn key_path(name: &str) -> String {
    fixture_path(&format!("keys/{name}.pem")).display().to_string()
}

pub fn pub_path(name: &str) -> String {
    fixture_path(&format!("keys/{name}.pub.pem")).display().to_string()
}

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

pub fn lib_fixture() -> Vec<u8> {
    std::fs::read(fixture_path("lib-82k.min.js")).unwrap()
}

pub fn sign(key: &PrivateKey, file: &[u8]) -> Vec<u8> {
    attach_signature(file, &sign_payload(key, file).unwrap())
}

pub struct Output {
    pub code: u8,
    pub stdout: Vec<u8>,
    pub stderr: String,
}

/// Runs the CLI in-process.
pub fn cli(args: &[&str], stdin: &[u8]) -> Output {
    let mut stdout = Vec::new();
    let mut stderr = Vec::new();
    let argv = std::iter::once("sigscript").chain(args.iter().copied());
    let code = sigscript_cli::run(argv, &mut &stdin[..], &mut stdout, &mut stderr);
    Output { code, stdout, stderr: String::from_utf8_lossy(&stderr).into_owned() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    BitFlip { at: usize, bit: u8 },
    Substitute { at: usize, byte: u8 },
}

/// Picks a single-bit flip or single-byte substitution, landing in the
/// signature line (including its newline) or the payload with equal odds.
pub fn random_mutation<R: Rng>(rng: &mut R, file: &[u8]) -> Mutation {
    let line_end = file.iter().position(|&b| b == b'\n').expect("signed file") + 1;
    let at = if line_end == file.len() || rng.gen_bool(0.5) {
        rng.gen_range(0..line_end)
    } else {
        rng.gen_range(line_end..file.len())
    };
    if rng.gen_bool(0.5) {
        Mutation::BitFlip { at, bit: rng.gen_range(0..8) }
    } else {
        let mut byte = rng.gen::<u8>();
        while byte == file[at] {
            byte = rng.gen();
        }
        Mutation::Substitute { at, byte }
    }
}

pub fn apply(file: &[u8], m: Mutation) -> Vec<u8> {
    let mut out = file.to_vec();
    match m {
        Mutation::BitFlip { at, bit } => out[at] ^= 1 << bit,
        Mutation::Substitute { at, byte } => out[at] = byte,
    }
    out
}
