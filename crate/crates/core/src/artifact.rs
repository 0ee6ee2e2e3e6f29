//! Binary model artifact.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes   "TRIAGEMD"
//! version      u32
//! header_len   u64
//! header       header_len bytes of UTF-8 JSON (see `ArtifactHeader`)
//! arrays       for each entry of header.arrays, in order: rows*cols f64
//! checksum     32 bytes  SHA-256 of every preceding byte
//! ```
//!
//! Array order: `feature_tokens`, `w_query`, `w_key`, `w_value`, `head`,
//! `bias`, then `embedding` when the model uses the hashed encoder. Weights
//! are always stored as f64, so f32 models round-trip exactly as well.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::features::{FeatureVector, Lexicons, Standardizer, FEATURE_COUNT};
use crate::fusion::{AttentionConfig, FusionParams, TrainingHistory, Variant};
use crate::linalg::Matrix;
use crate::pipeline::TriageModel;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"TRIAGEMD";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub format_version: u32,
    pub variant: Variant,
    pub text_dim: usize,
    pub attention: AttentionConfig,
    pub encoder: EncoderConfig,
    pub hashed_text: bool,
    pub standardizer: Standardizer,
    pub reference: FeatureVector,
    pub lexicons: Lexicons,
    pub history: TrainingHistory,
    pub arrays: Vec<ArrayShape>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn shape(name: &str, rows: usize, cols: usize) -> ArrayShape {
    ArrayShape { name: name.into(), rows, cols }
}

fn expected_shapes(text_dim: usize, a: AttentionConfig, buckets: Option<usize>) -> Vec<ArrayShape> {
    let mut v = vec![
        shape("feature_tokens", FEATURE_COUNT, a.feature_dim),
        shape("w_query", text_dim, a.key_dim),
        shape("w_key", a.feature_dim, a.key_dim),
        shape("w_value", a.feature_dim, a.value_dim),
        shape("head", 1, text_dim + a.value_dim),
        shape("bias", 1, 1),
    ];
    if let Some(b) = buckets {
        v.push(shape("embedding", b, text_dim));
    }
    v
}

/// Serializes a model to the artifact byte layout.
pub fn to_bytes<T: Scalar>(model: &TriageModel<T>) -> Result<Vec<u8>> {
    let p = &model.params;
    p.validate()?;
    let header = ArtifactHeader {
        format_version: FORMAT_VERSION,
        variant: p.variant,
        text_dim: p.text_dim,
        attention: p.attention,
        encoder: model.encoder.clone(),
        hashed_text: p.embedding.is_some(),
        standardizer: model.standardizer.clone(),
        reference: model.reference,
        lexicons: model.lexicons.clone(),
        history: model.history.clone(),
        arrays: expected_shapes(p.text_dim, p.attention, p.embedding.as_ref().map(Matrix::rows)),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    let bias = [p.bias];
    let mut arrays: Vec<&[T]> = vec![
        p.feature_tokens.as_slice(),
        p.w_query.as_slice(),
        p.w_key.as_slice(),
        p.w_value.as_slice(),
        &p.head,
        &bias,
    ];
    if let Some(e) = &p.embedding {
        arrays.push(e.as_slice());
    }
    for a in arrays {
        for v in a {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Artifact("unexpected end of data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>> {
        let len = n.checked_mul(8).ok_or_else(|| Error::Artifact("array too large".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect())
    }
}

/// Parses and verifies artifact bytes. The checksum is checked before
/// anything else is interpreted, then the version gate.
pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<TriageModel<T>> {
    if bytes.len() < MAGIC.len() + 12 + CHECKSUM_LEN || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Artifact("not a model artifact".into()));
    }
    let (body, stored) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    let computed = Sha256::digest(body);
    if computed.as_slice() != stored {
        return Err(Error::Checksum { stored: hex(stored), computed: hex(&computed) });
    }
    let mut r = Reader { bytes: body, pos: MAGIC.len() };
    let version = r.u32()?;
    if version > FORMAT_VERSION || version == 0 {
        return Err(Error::Version { found: version, supported: FORMAT_VERSION });
    }
    let header_len = usize::try_from(r.u64()?).map_err(|_| Error::Artifact("header too large".into()))?;
    let header: ArtifactHeader = serde_json::from_slice(r.take(header_len)?)?;
    if header.format_version != version {
        return Err(Error::Artifact(format!(
            "header version {} disagrees with preamble version {version}",
            header.format_version
        )));
    }
    let buckets = header.hashed_text.then_some(header.encoder.hash_buckets);
    let shapes = expected_shapes(header.text_dim, header.attention, buckets);
    if header.arrays != shapes {
        return Err(Error::Artifact("array table does not match the declared dimensions".into()));
    }
    let mut mats = Vec::with_capacity(shapes.len());
    for s in &header.arrays {
        let data = r.f64s::<T>(s.rows * s.cols)?;
        mats.push(Matrix::from_vec(s.rows, s.cols, data)?);
    }
    if r.pos != body.len() {
        return Err(Error::Artifact(format!("{} trailing bytes", body.len() - r.pos)));
    }
    let mut it = mats.into_iter();
    let mut next = || it.next().expect("array count checked");
    let feature_tokens = next();
    let w_query = next();
    let w_key = next();
    let w_value = next();
    let head = next().as_slice().to_vec();
    let bias = next().as_slice()[0];
    let embedding = header.hashed_text.then(next);
    let params = FusionParams {
        variant: header.variant,
        text_dim: header.text_dim,
        attention: header.attention,
        feature_tokens,
        w_query,
        w_key,
        w_value,
        head,
        bias,
        embedding,
    };
    params.validate()?;
    Ok(TriageModel {
        lexicons: header.lexicons,
        standardizer: header.standardizer,
        reference: header.reference,
        encoder: header.encoder,
        params,
        history: header.history,
    })
}

/// Writes to a temporary sibling and renames it into place.
pub fn save_model<T: Scalar>(model: &TriageModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_bytes(model)?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<TriageModel<T>> {
    from_bytes(&fs::read(path)?)
}

/// Hex SHA-256 of the serialized model; equal digests mean equal weights and
/// preprocessing.
pub fn model_digest<T: Scalar>(model: &TriageModel<T>) -> Result<String> {
    let bytes = to_bytes(model)?;
    Ok(hex(&bytes[bytes.len() - CHECKSUM_LEN..]))
}
