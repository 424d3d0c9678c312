//! Report bundle: headed CSV/JSON data files, SVG figures and a manifest
//! of content digests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::config::RunConfig;

/// Version tag written into every emitted file.
pub const SCHEMA: &str = "revlab/1";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub kind: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    pub schema: String,
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub version: String,
    pub config: serde_json::Value,
    pub defaults: Vec<String>,
    pub files: Vec<FileEntry>,
    /// Wall-clock timings live outside the JSON payloads.
    pub timings_file: String,
}

pub struct ReportBundle {
    dir: PathBuf,
    command: String,
    seed: u64,
    files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Shortest round-trip form; exponent notation outside `[1e-4, 1e16)`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

impl ReportBundle {
    pub fn create(dir: &Path, cfg: &RunConfig) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(ReportBundle { dir: dir.to_path_buf(), command: cfg.command.name().into(), seed: cfg.seed, files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    fn write(&mut self, name: &str, kind: &str, bytes: Vec<u8>) -> std::io::Result<()> {
        fs::write(self.dir.join(name), &bytes)?;
        self.files.push(FileEntry { name: name.into(), kind: kind.into(), bytes: bytes.len(), sha256: sha256_hex(&bytes) });
        Ok(())
    }

    /// `{"schema", "command", "seed", "data"}` with sorted keys.
    pub fn json<T: Serialize>(&mut self, name: &str, data: &T) -> std::io::Result<()> {
        let doc = json!({
            "schema": SCHEMA,
            "command": self.command,
            "seed": self.seed,
            "data": serde_json::to_value(data).map_err(std::io::Error::other)?,
        });
        let mut bytes = serde_json::to_vec_pretty(&doc).map_err(std::io::Error::other)?;
        bytes.push(b'\n');
        self.write(name, "json", bytes)
    }

    /// A `# schema=… command=… seed=…` line followed by an RFC-4180 table.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<()> {
        let mut bytes = format!("# schema={SCHEMA} command={} seed={}\n", self.command, self.seed).into_bytes();
        {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut bytes);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        self.write(name, "csv", bytes)
    }

    pub fn svg(&mut self, name: &str, content: String) -> std::io::Result<()> {
        self.write(name, "svg", content.into_bytes())
    }

    pub fn finish(self, cfg: &RunConfig, elapsed_ms: f64) -> std::io::Result<Manifest> {
        let timings_file = "timings.txt".to_string();
        fs::write(self.dir.join(&timings_file), format!("total_ms {elapsed_ms:.3}\n"))?;
        let manifest = Manifest {
            schema: SCHEMA.into(),
            command: self.command,
            seed: self.seed,
            threads: cfg.threads,
            version: env!("CARGO_PKG_VERSION").into(),
            config: serde_json::to_value(cfg).map_err(std::io::Error::other)?,
            defaults: cfg.defaults.clone(),
            files: self.files,
            timings_file,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(std::io::Error::other)?;
        bytes.push(b'\n');
        fs::write(self.dir.join("manifest.json"), bytes)?;
        Ok(manifest)
    }
}

/// Recompute every digest listed in a manifest.
pub fn verify_manifest(dir: &Path) -> std::io::Result<Vec<(String, bool)>> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(std::io::Error::other)?;
    let mut out = Vec::new();
    for f in v["files"].as_array().into_iter().flatten() {
        let name = f["name"].as_str().unwrap_or_default().to_string();
        let bytes = fs::read(dir.join(&name))?;
        out.push((name, f["sha256"].as_str() == Some(sha256_hex(&bytes).as_str())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn num_round_trips() {
        for v in [0.0, -0.0, 1.0, 0.1, 1e-5, -3.999999999999e-12, 1e16, 123456.789, f64::MIN_POSITIVE] {
            assert_eq!(num(v).parse::<f64>().unwrap().to_bits(), v.to_bits(), "{v}");
        }
        assert_eq!(num(4e-12), "4e-12");
        assert_eq!(num(0.25), "0.25");
    }
}
