//! Parameter snapshots: a JSON document of named arrays with the corpus
//! header echoed for shape validation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::CorpusHeader;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const SNAPSHOT_FORMAT: &str = "augqa-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedArray {
    pub name: String,
    /// Empty for scalars.
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub header: CorpusHeader,
    pub arrays: Vec<NamedArray>,
}

impl Snapshot {
    pub fn new(kind: &str, header: CorpusHeader, arrays: Vec<NamedArray>) -> Self {
        Self {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            kind: kind.into(),
            header,
            arrays,
        }
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.format != SNAPSHOT_FORMAT || self.version != SNAPSHOT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported snapshot format {} v{}",
                self.format, self.version
            )));
        }
        if self.kind != kind {
            return Err(Error::invalid(format!(
                "expected a {kind} snapshot, found {}",
                self.kind
            )));
        }
        Ok(())
    }

    fn array(&self, name: &str) -> Result<&NamedArray> {
        let a = self
            .arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::invalid(format!("snapshot is missing array {name}")))?;
        if a.shape.iter().product::<usize>() != a.data.len() {
            return Err(Error::Shape(format!("snapshot array {name}: shape/data mismatch")));
        }
        if !crate::numerics::all_finite(&a.data) {
            return Err(Error::invalid(format!("snapshot array {name} is not finite")));
        }
        Ok(a)
    }

    pub fn matrix(&self, name: &str) -> Result<Matrix> {
        let a = self.array(name)?;
        match a.shape[..] {
            [r, c] => Matrix::from_vec(r, c, a.data.clone()),
            _ => Err(Error::Shape(format!("snapshot array {name} is not a matrix"))),
        }
    }

    pub fn vector(&self, name: &str, len: usize) -> Result<Vec<f64>> {
        let a = self.array(name)?;
        if a.shape != [len] {
            return Err(Error::Shape(format!(
                "snapshot array {name}: expected length {len}, shape {:?}",
                a.shape
            )));
        }
        Ok(a.data.clone())
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let a = self.array(name)?;
        if !a.shape.is_empty() {
            return Err(Error::Shape(format!("snapshot array {name} is not a scalar")));
        }
        Ok(a.data[0])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(self).expect("snapshot serializes");
        out.push(b'\n');
        out
    }

    pub fn checksum(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })
    }
}
