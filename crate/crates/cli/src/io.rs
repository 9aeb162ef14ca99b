//! File formats: JSON configs, event/chain/band CSVs and run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use marginal_cox::inference::{BandPoint, Chain, FitConfig};
use marginal_cox::{CountPath, ModelParams, PolyIntensity};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum GammaSpec {
    Poly { coeffs: Vec<f64> },
}

/// `{"T": .., "beta0": .., "w": .., "gamma": {"type": "poly", "coeffs": [..]}}`
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub beta0: f64,
    pub w: f64,
    pub gamma: GammaSpec,
}

impl ModelConfig {
    pub fn params(&self, path: &Path) -> Result<ModelParams, CliError> {
        let GammaSpec::Poly { coeffs } = &self.gamma;
        let gamma = PolyIntensity::new(coeffs.clone()).map_err(|e| CliError::config(path, e))?;
        ModelParams::new(self.beta0, self.w, gamma, self.horizon).map_err(|e| CliError::config(path, e))
    }
}

/// Fit settings: `T`, `beta0`, `w` plus every [`FitConfig`] field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitFile {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub beta0: f64,
    pub w: f64,
    #[serde(flatten)]
    pub fit: FitConfig,
}

/// Raw bytes plus their SHA-256, so the manifest hashes exactly what was read.
pub struct Loaded<T> {
    pub value: T,
    pub sha256: String,
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Loaded<T>, CliError> {
    let bytes = read_bytes(path)?;
    let value = serde_json::from_slice(&bytes).map_err(|e| CliError::config(path, e))?;
    Ok(Loaded {
        value,
        sha256: sha256_hex(&bytes),
    })
}

fn csv_reader(bytes: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(bytes)
}

fn parse_f64(field: &str, path: &Path, line: u64) -> Result<f64, CliError> {
    field
        .parse()
        .map_err(|_| CliError::config(path, format!("line {line}: cannot parse {field:?} as a number")))
}

/// One event time per row in the first column; an optional `time` header
/// and `#` comments are skipped.
pub fn read_events(path: &Path, horizon: f64) -> Result<CountPath, CliError> {
    let bytes = read_bytes(path)?;
    let mut times = Vec::new();
    for (idx, record) in csv_reader(&bytes).records().enumerate() {
        let record = record.map_err(|e| CliError::config(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let Some(field) = record.get(0).filter(|f| !f.is_empty()) else {
            continue;
        };
        if idx == 0 && field.eq_ignore_ascii_case("time") {
            continue;
        }
        times.push(parse_f64(field, path, line)?);
    }
    Ok(CountPath::new(times, horizon)?)
}

/// Writes `contents` to a temporary file beside `path`, then renames it.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// Event CSV with `# key=value` header comments.
pub fn format_events(times: &[f64], comments: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in comments {
        out.push_str(&format!("# {k}={v}\n"));
    }
    out.push_str("time\n");
    for t in times {
        out.push_str(&format!("{t}\n"));
    }
    out
}

pub fn format_chain(chain: &Chain) -> String {
    let width = chain.draws.first().map_or(0, Vec::len);
    let mut out = String::from("iter");
    for k in 0..width {
        out.push_str(&format!(",c{k}"));
    }
    out.push_str(",loglik,accepted\n");
    for i in 0..chain.len() {
        out.push_str(&chain.iters[i].to_string());
        for v in &chain.draws[i] {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(",{},{}\n", chain.logliks[i], chain.accepted[i] as u8));
    }
    out
}

/// Reads the `c0..cd` columns of a chain CSV.
pub fn read_chain(path: &Path) -> Result<Chain, CliError> {
    let bytes = read_bytes(path)?;
    let mut reader = csv_reader(&bytes);
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| CliError::config(path, e))?,
        None => return Ok(Chain::from_draws(Vec::new())),
    };
    let columns: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, name)| name.starts_with('c') && name[1..].parse::<usize>().is_ok())
        .map(|(i, _)| i)
        .collect();
    if columns.is_empty() {
        return Err(CliError::config(path, "no coefficient columns (c0, c1, ...) in header"));
    }
    let mut draws = Vec::new();
    for record in records {
        let record = record.map_err(|e| CliError::config(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let draw = columns
            .iter()
            .map(|&i| parse_f64(record.get(i).unwrap_or(""), path, line))
            .collect::<Result<Vec<_>, _>>()?;
        draws.push(draw);
    }
    Ok(Chain::from_draws(draws))
}

pub fn format_band(band: &[BandPoint]) -> String {
    let mut out = String::from("t,mean,lo,hi,cum_mean,cum_lo,cum_hi\n");
    for p in band {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.t, p.mean, p.lo, p.hi, p.cum_mean, p.cum_lo, p.cum_hi
        ));
    }
    out
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_sha256: Option<String>,
    pub inputs: Vec<(String, String)>,
    pub seed: Option<u64>,
    pub version: &'static str,
    pub started_at: String,
    pub finished_at: String,
    pub extras: serde_json::Value,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn write_manifest(out: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    write_atomic(&manifest_path(out), text.as_bytes())
}
