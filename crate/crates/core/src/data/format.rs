//! On-disk dataset layout: `manifest.json` plus one shard per month.
//!
//! A shard is either CSV with header `id,label,f0,...,f{d-1}` or the compact
//! binary layout below (all integers little-endian):
//!
//! ```text
//! magic   b"SSAL"
//! u32     version (1)
//! u32     feature dimension d
//! u32     row count
//! rows:   u8 label, u16 id length, id bytes (UTF-8),
//!         u16 family length (0 = none), family bytes,
//!         ceil(d / 8) bytes of features, LSB-first within each byte
//! ```
//!
//! The manifest stores per-month class counts and the SHA-256 of each shard.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Dataset, FeatureRecord, Month, MALWARE};
use crate::error::{Error, Result};
use crate::feature::FeatureVector;

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"SSAL";
const SHARD_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ShardEncoding {
    #[default]
    Binary,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthEntry {
    pub month: Month,
    pub benign: usize,
    pub malware: usize,
    pub shard: String,
    pub encoding: ShardEncoding,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub name: String,
    pub feature_dim: usize,
    pub months: Vec<MonthEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn encode_binary(records: &[FeatureRecord], dim: usize) -> Vec<u8> {
    let row_bytes = dim.div_ceil(8);
    let mut out = Vec::with_capacity(16 + records.len() * (row_bytes + 24));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&SHARD_VERSION.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        out.push(r.label);
        let id = r.id.as_bytes();
        out.extend_from_slice(&(id.len() as u16).to_le_bytes());
        out.extend_from_slice(id);
        let family = r.family.as_deref().unwrap_or("").as_bytes();
        out.extend_from_slice(&(family.len() as u16).to_le_bytes());
        out.extend_from_slice(family);
        let mut packed = vec![0u8; row_bytes];
        for (i, &b) in r.features.bits().iter().enumerate() {
            packed[i / 8] |= b << (i % 8);
        }
        out.extend_from_slice(&packed);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    shard: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::data(self.shard, "truncated binary shard"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::data(self.shard, "non UTF-8 string"))
    }
}

fn decode_binary(bytes: &[u8], shard: &str, month: Month, expected_dim: usize) -> Result<Vec<FeatureRecord>> {
    let mut rd = Reader { bytes, pos: 0, shard };
    if rd.take(4)? != MAGIC {
        return Err(Error::data(shard, "bad magic bytes"));
    }
    let version = rd.u32()?;
    if version != SHARD_VERSION {
        return Err(Error::data(shard, format!("unsupported shard version {version}")));
    }
    let dim = rd.u32()? as usize;
    if dim != expected_dim {
        return Err(Error::data(
            shard,
            format!("feature dimension {dim} does not match expected {expected_dim}"),
        ));
    }
    let rows = rd.u32()? as usize;
    let row_bytes = dim.div_ceil(8);
    let mut records = Vec::with_capacity(rows);
    for _ in 0..rows {
        let label = rd.take(1)?[0];
        if label > 1 {
            return Err(Error::data(shard, format!("label {label} is not 0/1")));
        }
        let id = rd.string()?;
        let family = rd.string()?;
        let packed = rd.take(row_bytes)?;
        let bits = (0..dim).map(|i| (packed[i / 8] >> (i % 8)) & 1).collect();
        records.push(FeatureRecord {
            id,
            month,
            label,
            features: FeatureVector::from_bits(bits)?,
            family: (!family.is_empty()).then_some(family),
        });
    }
    if rd.pos != bytes.len() {
        return Err(Error::data(shard, "trailing bytes after last row"));
    }
    Ok(records)
}

fn encode_csv(records: &[FeatureRecord], dim: usize) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_owned(), "label".to_owned()];
    header.extend((0..dim).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.id.clone(), r.label.to_string()];
        row.extend(r.features.bits().iter().map(|b| b.to_string()));
        w.write_record(&row)?;
    }
    w.into_inner()
        .map_err(|e| Error::data("csv shard", e.to_string()))
}

fn decode_csv(bytes: &[u8], shard: &str, month: Month, expected_dim: usize) -> Result<Vec<FeatureRecord>> {
    let mut rd = csv::Reader::from_reader(bytes);
    let header = rd.headers()?.clone();
    let dim = header.len().saturating_sub(2);
    if header.get(0) != Some("id") || header.get(1) != Some("label") {
        return Err(Error::data(shard, "header must start with id,label"));
    }
    if dim != expected_dim {
        return Err(Error::data(
            shard,
            format!("feature dimension {dim} does not match expected {expected_dim}"),
        ));
    }
    let mut records = Vec::new();
    for row in rd.records() {
        let row = row?;
        let parse_bit = |s: &str| -> Result<u8> {
            match s {
                "0" => Ok(0),
                "1" => Ok(1),
                _ => Err(Error::data(shard, format!("value `{s}` is not 0/1"))),
            }
        };
        let label = parse_bit(&row[1])?;
        let bits = (0..dim).map(|i| parse_bit(&row[i + 2])).collect::<Result<Vec<u8>>>()?;
        records.push(FeatureRecord {
            id: row[0].to_owned(),
            month,
            label,
            features: FeatureVector::from_bits(bits)?,
            family: None,
        });
    }
    Ok(records)
}

/// Writes `dataset` under `dir` (created if needed) and returns the manifest.
pub fn write_dataset(dir: &Path, dataset: &Dataset, encoding: ShardEncoding) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut months = Vec::new();
    for (month, part) in dataset.split_by_month() {
        let (bytes, ext) = match encoding {
            ShardEncoding::Binary => (encode_binary(&part.records, dataset.feature_dim), "bin"),
            ShardEncoding::Csv => (encode_csv(&part.records, dataset.feature_dim)?, "csv"),
        };
        let shard = format!("{month}.{ext}");
        let path = dir.join(&shard);
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        let (benign, malware) = part.class_counts();
        months.push(MonthEntry {
            month,
            benign,
            malware,
            shard,
            encoding,
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        name: dataset.name.clone(),
        feature_dim: dataset.feature_dim,
        months,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(serde_json::to_string_pretty(&manifest)?.as_bytes())
        .map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Reads and verifies a dataset directory.
pub fn load_dataset(dir: &Path) -> Result<(DatasetManifest, Dataset)> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| Error::data(MANIFEST_FILE, e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::data(
            MANIFEST_FILE,
            format!("unsupported format version {}", manifest.format_version),
        ));
    }
    let mut records = Vec::new();
    let mut previous: Option<Month> = None;
    for entry in &manifest.months {
        if previous.is_some_and(|p| p >= entry.month) {
            return Err(Error::data(MANIFEST_FILE, format!("month {} out of order", entry.month)));
        }
        previous = Some(entry.month);
        let shard_path = dir.join(&entry.shard);
        let bytes = fs::read(&shard_path).map_err(|e| Error::io(&shard_path, e))?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(Error::data(&entry.shard, "checksum mismatch"));
        }
        let part = match entry.encoding {
            ShardEncoding::Binary => decode_binary(&bytes, &entry.shard, entry.month, manifest.feature_dim)?,
            ShardEncoding::Csv => decode_csv(&bytes, &entry.shard, entry.month, manifest.feature_dim)?,
        };
        let malware = part.iter().filter(|r| r.label == MALWARE).count();
        let benign = part.len() - malware;
        if (benign, malware) != (entry.benign, entry.malware) {
            return Err(Error::data(
                &entry.shard,
                format!(
                    "counts ({benign} benign, {malware} malware) differ from manifest ({}, {})",
                    entry.benign, entry.malware
                ),
            ));
        }
        records.extend(part);
    }
    let dataset = Dataset::new(manifest.name.clone(), manifest.feature_dim, records)?;
    Ok((manifest, dataset))
}
