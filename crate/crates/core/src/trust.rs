//! Trust policy: which keys or digests govern which URLs, and the
//! pass/fail verdict for a fetched resource.
//!
//! Two verification modes exist. Signed mode applies whenever the file carries
//! at least one signature line: every layer is checked against the pinned keys
//! it addresses and the rule passes once enough distinct keys are satisfied.
//! Legacy mode applies only to unsigned files and compares the SHA-256 of the
//! whole file against a pinned digest.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::crypto::{sha256_digest, verify_digest, CryptoError, Digest, PublicKey};
use crate::exec::{self, Execution};
use crate::sigformat::{EnvelopeView, KeyId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("invalid url pattern {pattern:?}: {reason}")]
    Pattern { pattern: String, reason: String },
    #[error("required_signatures ({required}) exceeds the number of pinned keys ({pinned})")]
    ThresholdTooHigh { required: usize, pinned: usize },
    #[error("required_signatures must be at least 1 when keys are pinned")]
    ThresholdZero,
    #[error("rule has neither pinned keys nor a legacy digest")]
    NoVerificationBasis,
    #[error("pinned key {0} appears more than once")]
    DuplicateKey(String),
    #[error("fallback url {0:?} must be an absolute http(s) url")]
    FallbackUrl(String),
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("policy parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("{location}: {source}")]
    KeyLoad {
        location: String,
        #[source]
        source: CryptoError,
    },
    #[error("cannot read policy file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no trust rule governs {0}")]
pub struct NoMatchingRule(pub String);

/// Exact URL, or a prefix ending in `*`. Prefixes must include the full
/// scheme and host plus the `/` that starts the path, so a pattern can never
/// reach into another host.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UrlPattern {
    raw: String,
    literal: String,
    prefix: bool,
}

impl UrlPattern {
    pub fn parse(raw: &str) -> Result<Self, RuleError> {
        let err = |reason: &str| RuleError::Pattern {
            pattern: raw.to_owned(),
            reason: reason.to_owned(),
        };
        let (literal, prefix) = match raw.strip_suffix('*') {
            Some(lit) => (lit, true),
            None => (raw, false),
        };
        if literal.contains('*') {
            return Err(err("'*' is only allowed as the final character"));
        }
        let url = Url::parse(literal).map_err(|e| err(&e.to_string()))?;
        if !matches!(url.scheme(), "http" | "https") {
            return Err(err("scheme must be http or https"));
        }
        if url.host_str().is_none_or(str::is_empty) {
            return Err(err("missing host"));
        }
        if url.fragment().is_some() {
            return Err(err("fragments are not allowed"));
        }
        if prefix {
            let after_scheme = literal.split_once("://").map_or("", |(_, rest)| rest);
            if !after_scheme.contains('/') {
                return Err(err("prefix must include the host and the '/' that follows it"));
            }
        }
        Ok(Self {
            raw: raw.to_owned(),
            literal: url.as_str().to_owned(),
            prefix,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    pub fn is_prefix(&self) -> bool {
        self.prefix
    }

    pub fn matches(&self, url: &Url) -> bool {
        let candidate = normalize(url);
        if self.prefix {
            candidate.starts_with(&self.literal)
        } else {
            candidate == self.literal
        }
    }

    /// Longer literals are more specific; an exact pattern beats a prefix of
    /// the same literal length.
    fn specificity(&self) -> (usize, bool) {
        (self.literal.len(), !self.prefix)
    }
}

impl fmt::Display for UrlPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

fn normalize(url: &Url) -> String {
    let mut url = url.clone();
    url.set_fragment(None);
    url.into()
}

#[derive(Debug, Clone)]
pub struct TrustRule {
    url_pattern: Option<UrlPattern>,
    pinned_keys: Vec<PublicKey>,
    required_signatures: usize,
    legacy_digest: Option<Digest>,
    fallback_url: Option<Url>,
}

impl TrustRule {
    pub fn new(
        url_pattern: Option<UrlPattern>,
        pinned_keys: Vec<PublicKey>,
        required_signatures: usize,
        legacy_digest: Option<Digest>,
        fallback_url: Option<Url>,
    ) -> Result<Self, RuleError> {
        if pinned_keys.is_empty() {
            if legacy_digest.is_none() {
                return Err(RuleError::NoVerificationBasis);
            }
        } else if required_signatures == 0 {
            return Err(RuleError::ThresholdZero);
        }
        if required_signatures > pinned_keys.len() {
            return Err(RuleError::ThresholdTooHigh {
                required: required_signatures,
                pinned: pinned_keys.len(),
            });
        }
        for (i, key) in pinned_keys.iter().enumerate() {
            let dup = pinned_keys[..i]
                .iter()
                .any(|k| k.same_material(key) || k.label() == key.label());
            if dup {
                return Err(RuleError::DuplicateKey(key.label().to_string()));
            }
        }
        if let Some(url) = &fallback_url {
            if !matches!(url.scheme(), "http" | "https") || url.host_str().is_none() {
                return Err(RuleError::FallbackUrl(url.to_string()));
            }
        }
        Ok(Self {
            url_pattern,
            pinned_keys,
            required_signatures,
            legacy_digest,
            fallback_url,
        })
    }

    /// Rule for a one-off local check that is not bound to any URL.
    pub fn ad_hoc(
        pinned_keys: Vec<PublicKey>,
        required_signatures: usize,
        legacy_digest: Option<Digest>,
    ) -> Result<Self, RuleError> {
        Self::new(None, pinned_keys, required_signatures, legacy_digest, None)
    }

    pub fn url_pattern(&self) -> Option<&UrlPattern> {
        self.url_pattern.as_ref()
    }

    pub fn pinned_keys(&self) -> &[PublicKey] {
        &self.pinned_keys
    }

    pub fn required_signatures(&self) -> usize {
        self.required_signatures
    }

    pub fn legacy_digest(&self) -> Option<&Digest> {
        self.legacy_digest.as_ref()
    }

    pub fn fallback_url(&self) -> Option<&Url> {
        self.fallback_url.as_ref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "signed")]
    Signed,
    #[serde(rename = "legacy")]
    LegacyDigest,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Signed => "signed",
            Mode::LegacyDigest => "legacy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailReason {
    NoMatchingRule,
    SignatureMissing,
    SignatureInvalid,
    ThresholdNotMet,
    DigestMismatch,
    Malformed,
}

impl FailReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FailReason::NoMatchingRule => "NoMatchingRule",
            FailReason::SignatureMissing => "SignatureMissing",
            FailReason::SignatureInvalid => "SignatureInvalid",
            FailReason::ThresholdNotMet => "ThresholdNotMet",
            FailReason::DigestMismatch => "DigestMismatch",
            FailReason::Malformed => "Malformed",
        }
    }
}

impl fmt::Display for FailReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Result of checking one resource. On failure `satisfied_key_ids` still lists
/// the keys that did verify, which is useful when a threshold is missed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationVerdict {
    pub outcome: Outcome,
    pub mode: Mode,
    pub satisfied_key_ids: Vec<String>,
    pub reason: Option<FailReason>,
}

impl VerificationVerdict {
    fn pass(mode: Mode, satisfied_key_ids: Vec<String>) -> Self {
        Self {
            outcome: Outcome::Pass,
            mode,
            satisfied_key_ids,
            reason: None,
        }
    }

    fn fail(mode: Mode, reason: FailReason, satisfied_key_ids: Vec<String>) -> Self {
        Self {
            outcome: Outcome::Fail,
            mode,
            satisfied_key_ids,
            reason: Some(reason),
        }
    }

    pub fn is_pass(&self) -> bool {
        self.outcome == Outcome::Pass
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("verdict serializes")
    }
}

impl fmt::Display for VerificationVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.outcome {
            Outcome::Pass => write!(f, "PASS mode={}", self.mode.as_str())?,
            Outcome::Fail => write!(
                f,
                "FAIL mode={} reason={}",
                self.mode.as_str(),
                self.reason.map_or("unknown", FailReason::as_str)
            )?,
        }
        if !self.satisfied_key_ids.is_empty() {
            write!(f, " keys={}", self.satisfied_key_ids.join(","))?;
        }
        Ok(())
    }
}

/// Checks `file` against `rule` using the default execution mode.
pub fn verify_resource(rule: &TrustRule, file: &[u8]) -> VerificationVerdict {
    verify_resource_with(rule, file, Execution::default())
}

pub fn verify_resource_with(rule: &TrustRule, file: &[u8], exec: Execution) -> VerificationVerdict {
    let view = match EnvelopeView::parse(file) {
        Ok(view) => view,
        Err(_) => return VerificationVerdict::fail(Mode::Signed, FailReason::Malformed, vec![]),
    };

    if view.is_empty() {
        return match &rule.legacy_digest {
            Some(pinned) if sha256_digest(file) == *pinned => {
                VerificationVerdict::pass(Mode::LegacyDigest, vec![])
            }
            Some(_) => {
                VerificationVerdict::fail(Mode::LegacyDigest, FailReason::DigestMismatch, vec![])
            }
            None => VerificationVerdict::fail(Mode::Signed, FailReason::SignatureMissing, vec![]),
        };
    }

    verify_signed(rule, &view, exec)
}

fn verify_signed(rule: &TrustRule, view: &EnvelopeView<'_>, exec: Execution) -> VerificationVerdict {
    let keys = &rule.pinned_keys;
    let labels: Vec<KeyId> = keys.iter().map(PublicKey::label).collect();
    let layers = view.layers();

    // A line naming a key id is only tried against keys pinned under that id
    // or pinned without one; a bare line is tried against every pinned key.
    let pairs: Vec<(usize, usize)> = layers
        .iter()
        .enumerate()
        .flat_map(|(li, layer)| {
            (0..keys.len())
                .filter(move |&ki| match (&layer.line.key_id, keys[ki].key_id()) {
                    (Some(line_id), Some(key_id)) => line_id == key_id,
                    _ => true,
                })
                .map(move |ki| (li, ki))
        })
        .collect();

    let mut needed = vec![false; layers.len()];
    for &(li, _) in &pairs {
        needed[li] = true;
    }
    let layer_ids: Vec<usize> = (0..layers.len()).filter(|&i| needed[i]).collect();
    let digests = exec::map(exec, &layer_ids, |&li| {
        (li, sha256_digest(&view.source()[layers[li].covered_from..]))
    });
    let mut digest_of = vec![None; layers.len()];
    for (li, d) in digests {
        digest_of[li] = Some(d);
    }

    let valid = exec::map(exec, &pairs, |&(li, ki)| {
        let digest = digest_of[li].as_ref().expect("digest computed for every candidate layer");
        verify_digest(&keys[ki], digest, &layers[li].line.signature)
    });
    let edges: Vec<(usize, usize)> = pairs
        .into_iter()
        .zip(valid)
        .filter_map(|(pair, ok)| ok.then_some(pair))
        .collect();

    let matched = max_matching(layers.len(), keys.len(), &edges);
    let satisfied: Vec<String> = (0..keys.len())
        .filter(|&ki| matched[ki])
        .map(|ki| labels[ki].to_string())
        .collect();

    let required = rule.required_signatures.max(1);
    if satisfied.len() >= required {
        VerificationVerdict::pass(Mode::Signed, satisfied)
    } else if !satisfied.is_empty() || layers.len() < required {
        VerificationVerdict::fail(Mode::Signed, FailReason::ThresholdNotMet, satisfied)
    } else {
        VerificationVerdict::fail(Mode::Signed, FailReason::SignatureInvalid, satisfied)
    }
}

/// Maximum bipartite matching between layers and keys, so that one layer can
/// vouch for at most one key and one key counts at most once. Returns which
/// keys ended up matched.
fn max_matching(layer_count: usize, key_count: usize, edges: &[(usize, usize)]) -> Vec<bool> {
    let mut adj = vec![Vec::new(); key_count];
    for &(li, ki) in edges {
        adj[ki].push(li);
    }
    let mut layer_owner: Vec<Option<usize>> = vec![None; layer_count];

    fn augment(
        key: usize,
        adj: &[Vec<usize>],
        seen: &mut [bool],
        layer_owner: &mut [Option<usize>],
    ) -> bool {
        for &layer in &adj[key] {
            if seen[layer] {
                continue;
            }
            seen[layer] = true;
            let free = match layer_owner[layer] {
                None => true,
                Some(other) => augment(other, adj, seen, layer_owner),
            };
            if free {
                layer_owner[layer] = Some(key);
                return true;
            }
        }
        false
    }

    for key in 0..key_count {
        let mut seen = vec![false; layer_count];
        augment(key, &adj, &mut seen, &mut layer_owner);
    }
    // Augmenting paths re-route earlier keys but never unmatch them, so the
    // final assignment is authoritative.
    let mut matched = vec![false; key_count];
    for key in layer_owner.into_iter().flatten() {
        matched[key] = true;
    }
    matched
}

/// Immutable set of rules. Reloading builds a new policy.
#[derive(Debug, Clone, Default)]
pub struct TrustPolicy {
    rules: Vec<TrustRule>,
}

impl TrustPolicy {
    pub fn new(rules: Vec<TrustRule>) -> Self {
        Self { rules }
    }

    pub fn rules(&self) -> &[TrustRule] {
        &self.rules
    }

    /// Most specific rule governing `url`; equal specificity goes to the rule
    /// declared first.
    pub fn match_rule(&self, url: &Url) -> Result<&TrustRule, NoMatchingRule> {
        let mut best: Option<&TrustRule> = None;
        for rule in &self.rules {
            let Some(pattern) = &rule.url_pattern else { continue };
            if !pattern.matches(url) {
                continue;
            }
            let better = match best.and_then(|b| b.url_pattern.as_ref()) {
                None => true,
                Some(current) => pattern.specificity() > current.specificity(),
            };
            if better {
                best = Some(rule);
            }
        }
        best.ok_or_else(|| NoMatchingRule(url.to_string()))
    }

    /// Reads and validates a policy file. Key paths resolve relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        let document = std::fs::read(path).map_err(|source| PolicyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        load_policy(&document, base)
    }
}

pub fn match_rule<'p>(policy: &'p TrustPolicy, url: &Url) -> Result<&'p TrustRule, NoMatchingRule> {
    policy.match_rule(url)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyDocument {
    rules: Vec<RuleDocument>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleDocument {
    url_pattern: String,
    #[serde(default)]
    pinned_keys: Vec<String>,
    #[serde(default)]
    key_ids: Option<Vec<String>>,
    #[serde(default)]
    required_signatures: Option<usize>,
    #[serde(default)]
    legacy_digest_sha256: Option<String>,
    #[serde(default)]
    fallback_url: Option<String>,
}

/// Parses a JSON policy document. `base_dir` anchors relative key paths.
pub fn load_policy(document: &[u8], base_dir: &Path) -> Result<TrustPolicy, PolicyError> {
    let doc: PolicyDocument = serde_json::from_slice(document).map_err(|e| PolicyError::Parse {
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;

    let mut rules = Vec::with_capacity(doc.rules.len());
    for (index, rd) in doc.rules.into_iter().enumerate() {
        rules.push(build_rule(index, rd, base_dir)?);
    }
    Ok(TrustPolicy { rules })
}

fn build_rule(index: usize, rd: RuleDocument, base_dir: &Path) -> Result<TrustRule, PolicyError> {
    let parse_err = |field: &str, message: String| PolicyError::Parse {
        location: format!("rules[{index}].{field}"),
        message,
    };

    let pattern = UrlPattern::parse(&rd.url_pattern).map_err(|e| parse_err("url_pattern", e.to_string()))?;

    let key_ids = match rd.key_ids {
        Some(ids) if ids.len() != rd.pinned_keys.len() => {
            return Err(parse_err(
                "key_ids",
                format!(
                    "expected {} entries to match pinned_keys, found {}",
                    rd.pinned_keys.len(),
                    ids.len()
                ),
            ));
        }
        Some(ids) => ids
            .into_iter()
            .enumerate()
            .map(|(i, id)| {
                KeyId::new(id)
                    .map(Some)
                    .map_err(|e| parse_err(&format!("key_ids[{i}]"), e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => vec![None; rd.pinned_keys.len()],
    };

    let mut keys = Vec::with_capacity(rd.pinned_keys.len());
    for (i, (path, id)) in rd.pinned_keys.iter().zip(key_ids).enumerate() {
        let key = PublicKey::read_pem_file(&base_dir.join(path)).map_err(|source| {
            PolicyError::KeyLoad {
                location: format!("rules[{index}].pinned_keys[{i}]"),
                source,
            }
        })?;
        keys.push(key.with_key_id(id));
    }

    let legacy = rd
        .legacy_digest_sha256
        .map(|hex| {
            Digest::from_hex(&hex).ok_or_else(|| {
                parse_err("legacy_digest_sha256", "expected 64 lowercase hex characters".into())
            })
        })
        .transpose()?;

    let fallback = rd
        .fallback_url
        .map(|u| Url::parse(&u).map_err(|e| parse_err("fallback_url", e.to_string())))
        .transpose()?;

    let required = rd
        .required_signatures
        .unwrap_or(if keys.is_empty() { 0 } else { 1 });

    TrustRule::new(Some(pattern), keys, required, legacy, fallback).map_err(|e| {
        let field = match e {
            RuleError::Pattern { .. } => "url_pattern",
            RuleError::ThresholdTooHigh { .. } | RuleError::ThresholdZero => "required_signatures",
            RuleError::NoVerificationBasis => "pinned_keys",
            RuleError::DuplicateKey(_) => "pinned_keys",
            RuleError::FallbackUrl(_) => "fallback_url",
        };
        parse_err(field, e.to_string())
    })
}
