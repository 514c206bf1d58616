//! File formats owned by the experiment pipeline.
//!
//! Basis file layout:
//!
//! ```text
//! "ROMPOD1"                          7 bytes
//! state dimension n, order r         u32 LE each
//! x_min, x_max                       f64 LE, n values each
//! singular values                    f64 LE, r values
//! total energy                       f64 LE
//! modes U_r (row-major, n x r)       f64 LE
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::Seeds;
use crate::error::{Result, RomError};
use crate::pod::{NormalizationParams, ReducedBasis};

pub const BASIS_MAGIC: &[u8; 7] = b"ROMPOD1";

fn format_error(path: &Path, reason: impl Into<String>) -> RomError {
    RomError::Format { path: path.to_path_buf(), reason: reason.into() }
}

/// Fails with an actionable error if an upstream artifact is absent.
pub fn require(path: &Path, command: &'static str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(RomError::MissingArtifact { path: path.to_path_buf(), command })
    }
}

/// Writes a header line and one row per entry of `rows`.
pub fn write_rows<I, R>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let fields: Vec<String> = row.into_iter().collect();
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// A numeric table: header names and rows of floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| format_error(path, format!("row {k}: `{s}` is not a number"))))
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != header.len() {
            return Err(format_error(path, format!("row {k} has {} fields, header has {}", row.len(), header.len())));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Snapshot matrix with one column per sample, rows in state order, header
/// `k0,k1,...`.
pub fn write_snapshots(path: &Path, chi: &DMatrix<f64>) -> Result<()> {
    let header: Vec<String> = (0..chi.ncols()).map(|k| format!("k{k}")).collect();
    write_rows(path, &header, chi.row_iter().map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>()))
}

pub fn read_snapshots(path: &Path) -> Result<DMatrix<f64>> {
    let t = read_table(path)?;
    if t.rows.is_empty() {
        return Err(format_error(path, "no state rows"));
    }
    Ok(DMatrix::from_fn(t.rows.len(), t.header.len(), |i, j| t.rows[i][j]))
}

/// State trajectory, one row per sample: `sample_index,<prefix>1..<prefix>n`.
pub fn write_trajectory(path: &Path, prefix: &str, first_index: usize, states: &[DVector<f64>]) -> Result<()> {
    let n = states.first().map_or(0, |x| x.len());
    let mut header = vec!["sample_index".to_string()];
    header.extend((1..=n).map(|i| format!("{prefix}{i}")));
    write_rows(
        path,
        &header,
        states.iter().enumerate().map(|(k, x)| std::iter::once((first_index + k).to_string()).chain(x.iter().map(|v| v.to_string()))),
    )
}

/// Inverse of [`write_trajectory`]; drops the index column.
pub fn read_trajectory(path: &Path) -> Result<Vec<DVector<f64>>> {
    let t = read_table(path)?;
    if t.header.first().map(String::as_str) != Some("sample_index") {
        return Err(format_error(path, "first column must be sample_index"));
    }
    Ok(t.rows.iter().map(|r| DVector::from_column_slice(&r[1..])).collect())
}

pub fn write_basis<W: Write>(mut w: W, basis: &ReducedBasis, params: &NormalizationParams) -> Result<()> {
    let (n, r) = basis.modes.shape();
    if params.dim() != n {
        return Err(RomError::contract(format!("normalization has {} states, basis {n}", params.dim())));
    }
    w.write_all(BASIS_MAGIC)?;
    w.write_u32::<LittleEndian>(n as u32)?;
    w.write_u32::<LittleEndian>(r as u32)?;
    let vectors = [&params.x_min, &params.x_max, &basis.singular_values];
    for &v in vectors.iter().flat_map(|v| v.iter()) {
        w.write_f64::<LittleEndian>(v)?;
    }
    w.write_f64::<LittleEndian>(basis.total_energy)?;
    for i in 0..n {
        for j in 0..r {
            w.write_f64::<LittleEndian>(basis.modes[(i, j)])?;
        }
    }
    Ok(())
}

pub fn read_basis<R: Read>(mut r: R) -> Result<(ReducedBasis, NormalizationParams)> {
    let bad = |reason: String| RomError::contract(format!("basis file: {reason}"));
    let mut magic = [0u8; 7];
    r.read_exact(&mut magic)?;
    if &magic != BASIS_MAGIC {
        return Err(bad(format!("bad magic {magic:?}")));
    }
    let n = r.read_u32::<LittleEndian>()? as usize;
    let order = r.read_u32::<LittleEndian>()? as usize;
    if n == 0 || order == 0 || order > n || n > 1 << 20 {
        return Err(bad(format!("implausible shape {n} x {order}")));
    }
    let mut read_vec = |len: usize| -> Result<Vec<f64>> {
        let mut v = vec![0.0; len];
        r.read_f64_into::<LittleEndian>(&mut v)?;
        Ok(v)
    };
    let x_min = DVector::from_vec(read_vec(n)?);
    let x_max = DVector::from_vec(read_vec(n)?);
    let singular_values = DVector::from_vec(read_vec(order)?);
    let total_energy = read_vec(1)?[0];
    let modes = DMatrix::from_row_slice(n, order, &read_vec(n * order)?);
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(bad("trailing bytes".into()));
    }
    Ok((ReducedBasis { modes, singular_values, total_energy }, NormalizationParams::new(x_min, x_max)?))
}

pub fn save_basis(path: &Path, basis: &ReducedBasis, params: &NormalizationParams) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_basis(&mut w, basis, params)?;
    w.flush()?;
    Ok(())
}

pub fn load_basis(path: &Path) -> Result<(ReducedBasis, NormalizationParams)> {
    read_basis(std::io::BufReader::new(fs::File::open(path)?)).map_err(|e| match e {
        RomError::Contract(reason) => format_error(path, reason),
        other => other,
    })
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
    pub command: String,
    /// Wall-clock measurements; excluded from reproducibility comparisons.
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub started_unix_s: u64,
    pub elapsed_s: f64,
}

/// Inventory of an output directory, rewritten by every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seeds: Seeds,
    pub commands: BTreeMap<String, CommandRecord>,
    pub files: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.toml";

impl RunManifest {
    pub fn new(config_hash: String, seeds: Seeds) -> Self {
        Self { config_hash, seeds, commands: BTreeMap::new(), files: Vec::new() }
    }

    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path)?;
        toml::from_str(&text).map(Some).map_err(|e| format_error(&path, e.message()))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| format_error(&dir.join(MANIFEST_FILE), e.to_string()))?;
        fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }

    /// Replaces the entries of `command` with digests of `files`.
    pub fn record(&mut self, dir: &Path, command: &str, files: &[(PathBuf, bool)], record: CommandRecord) -> Result<()> {
        self.files.retain(|e| e.command != command && !files.iter().any(|(p, _)| relative(dir, p) == e.path));
        for (path, timing) in files {
            self.files.push(ManifestEntry {
                path: relative(dir, path),
                sha256: sha256_file(path)?,
                bytes: fs::metadata(path)?.len(),
                command: command.to_string(),
                timing: *timing,
            });
        }
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        self.commands.insert(command.to_string(), record);
        Ok(())
    }

    pub fn entry(&self, path: &str) -> Option<&ManifestEntry> {
        self.files.iter().find(|e| e.path == path)
    }

    /// `path -> digest` for every file not flagged as timing.
    pub fn reproducible_digests(&self) -> BTreeMap<String, String> {
        self.files.iter().filter(|e| !e.timing).map(|e| (e.path.clone(), e.sha256.clone())).collect()
    }
}

fn relative(dir: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(dir).unwrap_or(path);
    rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect::<Vec<_>>().join("/")
}
