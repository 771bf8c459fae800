//! JSON-lines provenance manifest, one record per synthetic sample.
//!
//! Paths are stored relative to the output directory with `/` separators so
//! the manifest bytes do not depend on where or on which platform it was
//! generated.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Method;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// 1-based sample index.
    pub t: usize,
    pub method: Method,
    pub donor_id: String,
    pub host_id: String,
    /// CarveMix threshold, Mixup weight or CutMix effective fraction.
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cube_origin: Option<[usize; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cube_extent: Option<[usize; 3]>,
    pub seed: u64,
    pub image: String,
    pub label: String,
    pub image_sha256: String,
    pub label_sha256: String,
    /// Lesion volume of the output label in voxels (sum of soft values for
    /// the baselines).
    pub lesion_voxels: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationManifest {
    pub records: Vec<SampleRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigestMismatch {
    pub t: usize,
    pub path: String,
    pub expected: String,
    pub actual: Option<String>,
}

impl GenerationManifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records always serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|source| Error::Json {
                path: path.to_path_buf(),
                source,
            })?);
        }
        Ok(GenerationManifest { records })
    }

    /// Recomputes every output digest from disk. Returns the mismatches.
    pub fn verify(&self, output_dir: &Path) -> Vec<DigestMismatch> {
        let mut bad = Vec::new();
        for r in &self.records {
            for (rel, expected) in [(&r.image, &r.image_sha256), (&r.label, &r.label_sha256)] {
                let actual = fs::read(output_dir.join(rel)).ok().map(|b| sha256_hex(&b));
                if actual.as_ref() != Some(expected) {
                    bad.push(DigestMismatch {
                        t: r.t,
                        path: rel.clone(),
                        expected: expected.clone(),
                        actual,
                    });
                }
            }
        }
        bad
    }
}
