//! Versioned JSON checkpoints for trained coupling sets.
//!
//! The document is plain JSON with the weight matrix flattened
//! upper-triangular row-major; floats are printed in the shortest decimal
//! form that round-trips bit-exactly.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{n_pairs, CouplingSet};

pub const FORMAT_VERSION: u32 = 1;

/// On-disk document: couplings plus the ticker order they were trained over
/// and free-form training metadata (sorted keys keep output deterministic).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Checkpoint {
    pub format_version: u32,
    pub tickers: Vec<String>,
    #[serde(rename = "V")]
    pub volume: usize,
    pub w: Vec<f64>,
    pub mu: Vec<f64>,
    pub lambda: Vec<f64>,
    pub a: Vec<f64>,
    pub training_metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn from_couplings(
        theta: &CouplingSet,
        tickers: Vec<String>,
        training_metadata: BTreeMap<String, String>,
    ) -> Result<Self> {
        if !tickers.is_empty() && tickers.len() != theta.volume() {
            return Err(Error::DimensionMismatch {
                expected: theta.volume(),
                got: tickers.len(),
            });
        }
        Ok(Self {
            format_version: FORMAT_VERSION,
            tickers,
            volume: theta.volume(),
            w: theta.weights().to_vec(),
            mu: theta.mass_sq().to_vec(),
            lambda: theta.quartic().to_vec(),
            a: theta.bias().to_vec(),
            training_metadata,
        })
    }

    pub fn to_couplings(&self) -> Result<CouplingSet> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::CheckpointFormat(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.w.len() != n_pairs(self.volume) {
            return Err(Error::CheckpointFormat(format!(
                "w has {} entries, expected {} for V={}",
                self.w.len(),
                n_pairs(self.volume),
                self.volume
            )));
        }
        CouplingSet::new(
            self.volume,
            self.w.clone(),
            self.mu.clone(),
            self.lambda.clone(),
            self.a.clone(),
        )
    }

    pub fn write(&self, mut writer: impl Write) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        writer.write_all(json.as_bytes())?;
        writer.write_all(b"\n")?;
        Ok(())
    }

    pub fn read(reader: impl Read) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::fs::File::open(path)?)
    }
}
