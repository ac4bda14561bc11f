//! Output directory, CSV/JSON writers and the run manifest.
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use zollab_core::capacities::{CapacityTable, Exact};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "ZOLLAB_OUT";

pub fn resolve_out_dir(explicit: Option<&str>) -> PathBuf {
    match explicit {
        Some(p) => PathBuf::from(p),
        None => std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("zollab-out")),
    }
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub status: &'a str,
    pub inputs: &'a BTreeMap<String, String>,
    pub timings_ms: &'a BTreeMap<String, u128>,
    pub files: &'a [FileRecord],
}

/// Collects the files written by one run; writes are sequential.
pub struct Output {
    pub dir: PathBuf,
    pub files: Vec<FileRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Output {
    pub fn create(dir: &Path) -> Result<Output> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Output { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileRecord { path: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() });
        Ok(path)
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write_bytes(name, s.as_bytes())
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
        self.write_bytes(name, &bytes)
    }

    /// `k, value_numerator, value_denominator, pi_power`.
    pub fn write_table(&mut self, name: &str, table: &CapacityTable) -> Result<PathBuf> {
        let rows: Vec<Vec<String>> = table.values.iter().map(|(k, v)| exact_row(*k, v)).collect();
        self.write_csv(name, &["k", "value_numerator", "value_denominator", "pi_power"], &rows)
    }

    pub fn write_manifest(
        &mut self,
        command: &str,
        status: &str,
        inputs: &BTreeMap<String, String>,
        timings_ms: &BTreeMap<String, u128>,
    ) -> Result<PathBuf> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let m = Manifest { command, version: env!("CARGO_PKG_VERSION"), status, inputs, timings_ms, files: &self.files };
        let mut s = serde_json::to_string_pretty(&m)?;
        s.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, s)?;
        Ok(path)
    }
}

pub fn exact_row(k: usize, v: &Exact) -> Vec<String> {
    vec![k.to_string(), v.value.numer().to_string(), v.value.denom().to_string(), v.pi_power.to_string()]
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use zollab_core::capacities::ehgh_table;
    use zollab_core::domains::Ellipsoid;

    #[test]
    fn table_csv_and_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Output::create(dir.path()).unwrap();
        let e = Ellipsoid::new(vec![Exact::int(1), Exact::int(2)]).unwrap();
        out.write_table("t.csv", &ehgh_table(&e, 3).unwrap()).unwrap();
        let text = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(text, "k,value_numerator,value_denominator,pi_power\n1,1,1,0\n2,2,1,0\n3,2,1,0\n");
        assert_eq!(out.files[0].sha256, sha256_hex(text.as_bytes()));
        out.write_manifest("capacities", "ok", &BTreeMap::new(), &BTreeMap::new()).unwrap();
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["files"][0]["path"], "t.csv");
    }

    #[test]
    fn explicit_dir_wins() {
        assert_eq!(resolve_out_dir(Some("x")), PathBuf::from("x"));
    }
}
