//! Signed third-party scripts.
//!
//! Providers prepend `//JSSignature:` comment lines carrying RSA/SHA-256
//! signatures to a script; consumers pin public keys (or, for unsigned
//! scripts, a SHA-256 digest) per URL and refuse anything that does not
//! verify.
//!
//! - [`sigformat`] parses and renders the signature envelope.
//! - [`crypto`] holds digests, keys, and the sign/verify primitives.
//! - [`trust`] evaluates a file against a pinned-key or digest rule.
//! - [`batch`] runs many verifications, on rayon when the `parallel`
//!   feature is enabled.

pub mod batch;
pub mod crypto;
pub mod exec;
pub mod sigformat;
pub mod trust;

pub use batch::verify_batch;
pub use crypto::{
    generate_keypair, sha256_digest, sign_payload, verify_payload, CryptoError, Digest, KeyPair,
    KeySize, PrivateKey, PublicKey,
};
pub use exec::Execution;
pub use sigformat::{
    attach_signature, covered_bytes, parse_envelope, strip_signatures, EnvelopeView, FormatError,
    KeyId, SignatureEnvelope, SignatureLine,
};
pub use trust::{
    load_policy, match_rule, verify_resource, FailReason, Mode, NoMatchingRule, Outcome,
    PolicyError, TrustPolicy, TrustRule, UrlPattern, VerificationVerdict,
};
