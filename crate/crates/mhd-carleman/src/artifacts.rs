//! Run artifacts: flat binary field export with JSON sidecars, CSV tables,
//! and the per-run manifest with checksums.
//!
//! Binary layout is little-endian f64 in C order; boolean masks are one byte
//! per cell. Every output is registered with the `ArtifactWriter`, which
//! records size and checksum and writes the manifest atomically at the end.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::carleman::sweeps::SweepResult;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{SpaceMask, SpaceTimeMask};

/// FNV-1a 64-bit checksum.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputRecord {
    pub path: String,
    pub bytes: u64,
    pub fnv64: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub outputs: Vec<OutputRecord>,
    pub timings_ms: BTreeMap<String, u128>,
}

/// Collects outputs and timings for one run directory.
pub struct ArtifactWriter {
    dir: PathBuf,
    outputs: Vec<OutputRecord>,
    timings: BTreeMap<String, u128>,
    started: Instant,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<ArtifactWriter> {
        std::fs::create_dir_all(dir)?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
            started: Instant::now(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn record_timing(&mut self, label: &str, ms: u128) {
        self.timings.insert(label.to_string(), ms);
    }

    fn register(&mut self, path: &Path, bytes: &[u8]) {
        self.outputs.push(OutputRecord {
            path: path
                .strip_prefix(&self.dir)
                .unwrap_or(path)
                .to_string_lossy()
                .into_owned(),
            bytes: bytes.len() as u64,
            fnv64: format!("{:016x}", fnv1a(bytes)),
        });
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)?;
        self.register(&path, bytes);
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Config(format!("serialize {name}: {e}")))?;
        self.write_bytes(name, text.as_bytes())
    }

    /// Flat little-endian f64 array with a JSON sidecar describing the layout.
    pub fn write_field(
        &mut self,
        name: &str,
        data: &[f64],
        shape: &[usize],
        mut meta: serde_json::Value,
    ) -> Result<()> {
        let mut bytes = Vec::with_capacity(data.len() * 8);
        for v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        self.write_bytes(&format!("{name}.bin"), &bytes)?;
        let side = meta.as_object_mut().ok_or_else(|| {
            Error::Config("field metadata must be a JSON object".into())
        })?;
        side.insert("shape".into(), serde_json::json!(shape));
        side.insert("dtype".into(), serde_json::json!("f64"));
        side.insert("order".into(), serde_json::json!("C"));
        side.insert("endianness".into(), serde_json::json!("little"));
        self.write_json(&format!("{name}.json"), &meta)?;
        Ok(())
    }

    pub fn write_scalar_field(
        &mut self,
        name: &str,
        field: &ScalarField,
        meta: serde_json::Value,
    ) -> Result<()> {
        self.write_field(name, &field.data, &field.n, meta)
    }

    pub fn write_space_mask(
        &mut self,
        name: &str,
        mask: &SpaceMask,
        mut meta: serde_json::Value,
    ) -> Result<()> {
        let bytes: Vec<u8> = mask.cells.iter().map(|&b| b as u8).collect();
        self.write_bytes(&format!("{name}.bin"), &bytes)?;
        let side = meta
            .as_object_mut()
            .ok_or_else(|| Error::Config("mask metadata must be a JSON object".into()))?;
        side.insert("shape".into(), serde_json::json!(mask.n));
        side.insert("dtype".into(), serde_json::json!("u8"));
        side.insert("eps".into(), serde_json::json!(mask.eps));
        side.insert("measure".into(), serde_json::json!(mask.measure));
        self.write_json(&format!("{name}.json"), &meta)?;
        Ok(())
    }

    pub fn write_spacetime_mask(
        &mut self,
        name: &str,
        mask: &SpaceTimeMask,
        mut meta: serde_json::Value,
    ) -> Result<()> {
        let bytes: Vec<u8> = mask.vals.iter().map(|&b| b as u8).collect();
        self.write_bytes(&format!("{name}.bin"), &bytes)?;
        let side = meta
            .as_object_mut()
            .ok_or_else(|| Error::Config("mask metadata must be a JSON object".into()))?;
        side.insert("shape".into(), serde_json::json!([mask.nt + 1, mask.n[0], mask.n[1], mask.n[2]]));
        side.insert("dtype".into(), serde_json::json!("u8"));
        side.insert("eps".into(), serde_json::json!(mask.eps));
        side.insert("measure".into(), serde_json::json!(mask.measure));
        self.write_json(&format!("{name}.json"), &meta)?;
        Ok(())
    }

    /// CSV with full-precision floats (round-trip exact).
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let mut text = String::new();
        text.push_str(&header.join(","));
        text.push('\n');
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        self.write_bytes(name, text.as_bytes())?;
        Ok(())
    }

    /// One sweep as a tidy CSV: s, lhs total, per-term LHS, interior RHS,
    /// trace norms, both ratios and the log scale.
    pub fn write_sweep_csv(&mut self, name: &str, sweep: &SweepResult) -> Result<()> {
        let mut header: Vec<String> = vec!["s".into(), "lhs_total".into()];
        for l in &sweep.term_labels {
            header.push(format!("lhs_{l}"));
        }
        header.extend([
            "interior_rhs".to_string(),
            "trace_norms".to_string(),
            "ratio".to_string(),
            "ratio_interior".to_string(),
            "log_scale".to_string(),
        ]);
        let hdr: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        let mut rows = Vec::with_capacity(sweep.s_values.len());
        for i in 0..sweep.s_values.len() {
            let mut row = vec![sweep.s_values[i], sweep.lhs_total[i]];
            row.extend(sweep.lhs_terms[i].iter());
            row.extend([
                sweep.interior_rhs[i],
                sweep.trace_norms,
                sweep.ratio[i],
                sweep.ratio_interior[i],
                sweep.log_scales[i],
            ]);
            rows.push(row);
        }
        self.write_csv(name, &hdr, &rows)
    }

    /// Write the manifest atomically (temp file + rename) and finish the run.
    pub fn finalize(mut self, config_canonical: &str, seed: u64) -> Result<RunManifest> {
        let total = self.started.elapsed().as_millis();
        self.timings.insert("total".into(), total);
        let manifest = RunManifest {
            config_hash: format!("{:016x}", fnv1a(config_canonical.as_bytes())),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: std::mem::take(&mut self.outputs),
            timings_ms: std::mem::take(&mut self.timings),
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Config(format!("serialize manifest: {e}")))?;
        let tmp = self.dir.join("manifest.json.tmp");
        {
            let mut fh = std::fs::File::create(&tmp)?;
            fh.write_all(text.as_bytes())?;
            fh.sync_all()?;
        }
        std::fs::rename(&tmp, self.dir.join("manifest.json"))?;
        Ok(manifest)
    }
}

/// Read back a flat f64 field (testing and the plot reshaper).
pub fn read_field(path: &Path) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Config(format!("{} is not a f64 array", path.display())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
