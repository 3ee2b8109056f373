//! The signature envelope.
//!
//! A signed script is zero or more leading comment lines of the form
//!
//! ```text
//! //JSSignature:[key-id:]<base64>\n
//! ```
//!
//! followed by the payload, which is carried as opaque bytes. Signature lines
//! nest like an onion: the line at index `i` signs every byte that follows its
//! own terminator, so outer signers cover the inner signature lines too.

use std::fmt;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use thiserror::Error;

/// Literal prefix that marks a signature line.
pub const SIGNATURE_PREFIX: &[u8] = b"//JSSignature:";

/// Maximum length of a [`KeyId`].
pub const MAX_KEY_ID_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("malformed signature line {line}: {reason}")]
    MalformedSignatureLine { line: usize, reason: String },
    #[error("signature index {index} out of range ({count} signature lines)")]
    IndexOutOfRange { index: usize, count: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid key id {0:?}: expected 1-32 characters of [A-Za-z0-9_-]")]
pub struct InvalidKeyId(pub String);

/// Short signer label carried on a signature line and in trust policies.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyId(String);

impl KeyId {
    pub fn new(id: impl Into<String>) -> Result<Self, InvalidKeyId> {
        let id = id.into();
        if is_valid_key_id(id.as_bytes()) {
            Ok(Self(id))
        } else {
            Err(InvalidKeyId(id))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for KeyId {
    type Err = InvalidKeyId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

fn is_valid_key_id(id: &[u8]) -> bool {
    (1..=MAX_KEY_ID_LEN).contains(&id.len())
        && id
            .iter()
            .all(|b| b.is_ascii_alphanumeric() || *b == b'-' || *b == b'_')
}

/// Signature algorithm tag. Only one scheme exists in this version.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Algorithm {
    #[default]
    RsaSha256,
}

/// One `//JSSignature:` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureLine {
    pub key_id: Option<KeyId>,
    pub signature: Vec<u8>,
    pub algorithm: Algorithm,
}

impl SignatureLine {
    pub fn new(key_id: Option<KeyId>, signature: Vec<u8>) -> Self {
        Self {
            key_id,
            signature,
            algorithm: Algorithm::RsaSha256,
        }
    }

    pub fn signature_b64(&self) -> String {
        STANDARD.encode(&self.signature)
    }

    /// Renders the line including its trailing LF.
    pub fn render(&self) -> Vec<u8> {
        let b64 = self.signature_b64();
        let key_len = self.key_id.as_ref().map_or(0, |k| k.0.len() + 1);
        let mut out = Vec::with_capacity(SIGNATURE_PREFIX.len() + key_len + b64.len() + 1);
        out.extend_from_slice(SIGNATURE_PREFIX);
        if let Some(id) = &self.key_id {
            out.extend_from_slice(id.0.as_bytes());
            out.push(b':');
        }
        out.extend_from_slice(b64.as_bytes());
        out.push(b'\n');
        out
    }

    /// Parses the body of a line, i.e. the bytes after the prefix with the
    /// terminator (and optional CR) removed.
    fn parse_body(body: &[u8], line: usize) -> Result<Self, FormatError> {
        let malformed = |reason: &str| FormatError::MalformedSignatureLine {
            line,
            reason: reason.to_owned(),
        };

        let (key_id, b64) = match body.iter().position(|b| *b == b':') {
            Some(colon) => {
                let id = &body[..colon];
                if !is_valid_key_id(id) {
                    return Err(malformed("key id must be 1-32 characters of [A-Za-z0-9_-]"));
                }
                // Validated as ASCII above.
                let id = KeyId(String::from_utf8_lossy(id).into_owned());
                (Some(id), &body[colon + 1..])
            }
            None => (None, body),
        };

        if b64.is_empty() {
            return Err(malformed("empty signature"));
        }
        let signature = STANDARD
            .decode(b64)
            .map_err(|e| malformed(&format!("invalid base64: {e}")))?;
        if signature.is_empty() {
            return Err(malformed("empty signature"));
        }
        Ok(Self::new(key_id, signature))
    }
}

impl fmt::Display for SignatureLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("//JSSignature:")?;
        if let Some(id) = &self.key_id {
            write!(f, "{id}:")?;
        }
        f.write_str(&self.signature_b64())
    }
}

/// Owned, parsed form of a signed resource.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SignatureEnvelope {
    /// Outermost first.
    pub signatures: Vec<SignatureLine>,
    pub payload: Vec<u8>,
}

impl SignatureEnvelope {
    pub fn unsigned(payload: impl Into<Vec<u8>>) -> Self {
        Self {
            signatures: Vec::new(),
            payload: payload.into(),
        }
    }

    /// Serializes with LF terminators. Payload bytes are written verbatim.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for line in &self.signatures {
            out.extend_from_slice(&line.render());
        }
        out.extend_from_slice(&self.payload);
        out
    }
}

/// A parsed signature layer that still points into the source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    pub line: SignatureLine,
    /// Offset of the first byte after this line's terminator.
    pub covered_from: usize,
}

/// Zero-copy view of a signed file. Covered bytes are always taken from the
/// original input so a tolerated CR on an inner line stays inside the outer
/// signature's scope exactly as the signer saw it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvelopeView<'a> {
    source: &'a [u8],
    layers: Vec<Layer>,
}

impl<'a> EnvelopeView<'a> {
    pub fn parse(source: &'a [u8]) -> Result<Self, FormatError> {
        let mut layers = Vec::new();
        let mut offset = 0;

        while source[offset..].starts_with(SIGNATURE_PREFIX) {
            let line_no = layers.len() + 1;
            let rest = &source[offset..];
            let Some(lf) = rest.iter().position(|b| *b == b'\n') else {
                return Err(FormatError::MalformedSignatureLine {
                    line: line_no,
                    reason: "missing line terminator".to_owned(),
                });
            };
            let mut body = &rest[SIGNATURE_PREFIX.len()..lf];
            if let Some(stripped) = body.strip_suffix(b"\r") {
                body = stripped;
            }
            let line = SignatureLine::parse_body(body, line_no)?;
            offset += lf + 1;
            layers.push(Layer {
                line,
                covered_from: offset,
            });
        }

        Ok(Self { source, layers })
    }

    pub fn source(&self) -> &'a [u8] {
        self.source
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn payload(&self) -> &'a [u8] {
        let start = self.layers.last().map_or(0, |l| l.covered_from);
        &self.source[start..]
    }

    pub fn covered(&self, index: usize) -> Result<&'a [u8], FormatError> {
        self.layers
            .get(index)
            .map(|l| &self.source[l.covered_from..])
            .ok_or(FormatError::IndexOutOfRange {
                index,
                count: self.layers.len(),
            })
    }

    pub fn to_envelope(&self) -> SignatureEnvelope {
        SignatureEnvelope {
            signatures: self.layers.iter().map(|l| l.line.clone()).collect(),
            payload: self.payload().to_vec(),
        }
    }
}

/// Parses the maximal run of leading signature lines. A file with no
/// signature lines is a valid, unsigned envelope.
pub fn parse_envelope(file: &[u8]) -> Result<SignatureEnvelope, FormatError> {
    EnvelopeView::parse(file).map(|v| v.to_envelope())
}

/// Prepends `line`, making it the new outermost layer.
pub fn attach_signature(file: &[u8], line: &SignatureLine) -> Vec<u8> {
    let mut out = line.render();
    out.extend_from_slice(file);
    out
}

pub fn strip_signatures(file: &[u8]) -> Result<Vec<u8>, FormatError> {
    EnvelopeView::parse(file).map(|v| v.payload().to_vec())
}

/// Bytes signed by the layer at `index` (0 is outermost).
pub fn covered_bytes(file: &[u8], index: usize) -> Result<&[u8], FormatError> {
    EnvelopeView::parse(file)?.covered(index)
}
