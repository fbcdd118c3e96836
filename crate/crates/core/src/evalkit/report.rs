//! Per-image detection records, thresholded aggregates and their CSV/JSON
//! serializations.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Bumped whenever a CSV column is added, removed or reordered.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const NO_ATTACK: &str = "none";

/// SHA-256 of the compact JSON form of `value`, hex encoded.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub image: String,
    pub watermarked: bool,
    /// Watermarker configuration label.
    pub config: String,
    pub attack: String,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub perceptual: Option<f64>,
    /// `1 − p`.
    pub score: f64,
    pub p_value: f64,
    pub degenerate: bool,
    pub rotation_angle: Option<f64>,
}

impl Record {
    /// Strict: a score equal to the threshold is not a detection.
    pub fn detected(&self, threshold: f64) -> bool {
        self.score > threshold
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub config: String,
    pub attack: String,
    pub threshold: f64,
    pub watermarked: usize,
    pub unwatermarked: usize,
    pub wdr: Option<f64>,
    pub fpr: Option<f64>,
    pub mean_psnr: Option<f64>,
    pub mean_ssim: Option<f64>,
    pub mean_perceptual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub version: String,
    pub backend: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub thresholds: Vec<f64>,
    pub records: Vec<Record>,
    pub cells: Vec<Cell>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.collect::<Option<Vec<_>>>()?;
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Groups records by `(config, attack)` in first-seen order and thresholds
/// each group at every `p*`. Quality means are over watermarked records and
/// are omitted when any record lacks the column.
pub fn aggregate(records: &[Record], thresholds: &[f64], provenance: Provenance) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    if thresholds.is_empty() {
        return Err(Error::InvalidParameter("no detection thresholds".into()));
    }
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<&Record>> = BTreeMap::new();
    for r in records {
        let k = (r.config.clone(), r.attack.clone());
        if !groups.contains_key(&k) {
            order.push(k.clone());
        }
        groups.entry(k).or_default().push(r);
    }
    let mut cells = Vec::new();
    for k in &order {
        let g = &groups[k];
        let wm: Vec<&Record> = g.iter().copied().filter(|r| r.watermarked).collect();
        let un: Vec<&Record> = g.iter().copied().filter(|r| !r.watermarked).collect();
        for &t in thresholds {
            let rate = |rs: &[&Record]| {
                (!rs.is_empty()).then(|| rs.iter().filter(|r| r.detected(t)).count() as f64 / rs.len() as f64)
            };
            cells.push(Cell {
                config: k.0.clone(),
                attack: k.1.clone(),
                threshold: t,
                watermarked: wm.len(),
                unwatermarked: un.len(),
                wdr: rate(&wm),
                fpr: rate(&un),
                mean_psnr: mean(wm.iter().map(|r| r.psnr)),
                mean_ssim: mean(wm.iter().map(|r| r.ssim)),
                mean_perceptual: mean(wm.iter().map(|r| r.perceptual)),
            });
        }
    }
    Ok(EvalReport {
        schema_version: CSV_SCHEMA_VERSION,
        provenance,
        thresholds: thresholds.to_vec(),
        records: records.to_vec(),
        cells,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl EvalReport {
    pub fn cell(&self, config: &str, attack: &str, threshold: f64) -> Option<&Cell> {
        self.cells.iter().find(|c| c.config == config && c.attack == attack && c.threshold == threshold)
    }

    fn has_perceptual(&self) -> bool {
        self.records.iter().any(|r| r.perceptual.is_some())
    }

    /// Per-image rows. The perceptual column is present only when a
    /// provider filled it.
    pub fn records_csv(&self) -> Result<String> {
        let perceptual = self.has_perceptual();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![
            "schema_version", "config_hash", "image", "watermarked", "config", "attack", "psnr", "ssim",
        ];
        if perceptual {
            header.push("perceptual");
        }
        header.extend(["score", "p_value", "degenerate", "rotation_angle"]);
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.records {
            let mut row = vec![
                CSV_SCHEMA_VERSION.to_string(),
                self.provenance.config_hash.clone(),
                r.image.clone(),
                r.watermarked.to_string(),
                r.config.clone(),
                r.attack.clone(),
                opt(r.psnr),
                opt(r.ssim),
            ];
            if perceptual {
                row.push(opt(r.perceptual));
            }
            row.extend([r.score.to_string(), r.p_value.to_string(), r.degenerate.to_string(), opt(r.rotation_angle)]);
            w.write_record(&row).map_err(csv_err)?;
        }
        finish(w)
    }

    /// One row per `(config, attack, p*)`.
    pub fn cells_csv(&self) -> Result<String> {
        let perceptual = self.has_perceptual();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![
            "schema_version", "config_hash", "config", "attack", "threshold", "watermarked", "unwatermarked", "wdr",
            "fpr", "mean_psnr", "mean_ssim",
        ];
        if perceptual {
            header.push("mean_perceptual");
        }
        w.write_record(&header).map_err(csv_err)?;
        for c in &self.cells {
            let mut row = vec![
                CSV_SCHEMA_VERSION.to_string(),
                self.provenance.config_hash.clone(),
                c.config.clone(),
                c.attack.clone(),
                c.threshold.to_string(),
                c.watermarked.to_string(),
                c.unwatermarked.to_string(),
                opt(c.wdr),
                opt(c.fpr),
                opt(c.mean_psnr),
                opt(c.mean_ssim),
            ];
            if perceptual {
                row.push(opt(c.mean_perceptual));
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        finish(w)
    }

    /// WDR per attack column with one row per `(config, p*)`, pre-attack
    /// first, plus the matching FPR.
    pub fn wdr_table_csv(&self) -> Result<String> {
        let mut attacks: Vec<&str> = Vec::new();
        let mut rows: Vec<(&str, f64)> = Vec::new();
        for c in &self.cells {
            if !attacks.contains(&c.attack.as_str()) {
                attacks.push(&c.attack);
            }
            if !rows.iter().any(|(k, t)| *k == c.config && *t == c.threshold) {
                rows.push((&c.config, c.threshold));
            }
        }
        attacks.sort_by_key(|a| *a != NO_ATTACK);
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["schema_version".to_string(), "config_hash".into(), "config".into(), "threshold".into()];
        header.push("fpr".into());
        header.extend(attacks.iter().map(|a| format!("wdr_{a}")));
        w.write_record(&header).map_err(csv_err)?;
        for (config, t) in rows {
            let fpr = self.cell(config, NO_ATTACK, t).and_then(|c| c.fpr);
            let mut row = vec![
                CSV_SCHEMA_VERSION.to_string(),
                self.provenance.config_hash.clone(),
                config.to_string(),
                t.to_string(),
                opt(fpr),
            ];
            row.extend(attacks.iter().map(|a| opt(self.cell(config, a, t).and_then(|c| c.wdr))));
            w.write_record(&row).map_err(csv_err)?;
        }
        finish(w)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `<stem>.json`, `<stem>_records.csv`, `<stem>_cells.csv` and
    /// `<stem>_table.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.json")), self.to_json()?)?;
        std::fs::write(dir.join(format!("{stem}_records.csv")), self.records_csv()?)?;
        std::fs::write(dir.join(format!("{stem}_cells.csv")), self.cells_csv()?)?;
        std::fs::write(dir.join(format!("{stem}_table.csv")), self.wdr_table_csv()?)?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(std::io::Error::other(e)))
}
