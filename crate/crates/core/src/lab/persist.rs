//! Output directory layout: replicate CSVs, tables, statistics JSON and a
//! versioned manifest carrying SHA-256 digests of every file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::engine::{Batch, Class};
use crate::error::Result;
use crate::offspring::OffspringKind;
use crate::steplaw::{Constants, StepLaw};

use super::config::ExperimentConfig;
use super::scenario::{execute, ScenarioOutput, Setup};

pub const SCHEMA_VERSION: &str = "1.0";
pub const MANIFEST: &str = "manifest.json";
pub const REPLICATES_CSV: &str = "replicates.csv";
pub const CHECKPOINTS_CSV: &str = "checkpoints.csv";
pub const W_POOL_CSV: &str = "w_pool.csv";
pub const STATS_JSON: &str = "stats.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffspringManifest {
    #[serde(flatten)]
    pub kind: OffspringKind,
    pub m: f64,
    pub q: f64,
    pub population_cap: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierManifest {
    pub delta: f64,
    pub t: f64,
    pub horizon: u32,
    pub big_jump_threshold: f64,
    pub s_n: f64,
    /// Thresholds use the horizon for every generation.
    pub convention: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WPoolManifest {
    pub n_w: u32,
    pub count: usize,
    pub attempts: u64,
    pub discarded: usize,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub crate_version: String,
    pub scenario: String,
    pub config: ExperimentConfig,
    pub config_digest: String,
    pub step: StepLaw,
    pub offspring: OffspringManifest,
    pub constants: Constants,
    pub classifier: ClassifierManifest,
    pub w_pool: Option<WPoolManifest>,
    pub accepted_replicates: usize,
    pub discarded_replicates: Vec<u64>,
    pub acceptance_rate: Option<f64>,
    pub checkpoints: Vec<u32>,
    /// File name to SHA-256 digest.
    pub files: BTreeMap<String, String>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per replicate index, accepted or discarded.
pub fn replicates_csv(batch: &Batch, top_k: usize) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["replicate_index", "n", "Z_n", "W_n", "M_n", "N_n", "M_A", "M_B", "M_C", "M_D"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(["count_A", "count_B", "count_C", "count_D"].iter().map(|s| s.to_string()));
    header.extend((1..=top_k).map(|i| format!("top_{i}")));
    header.extend(["indep_max".to_string(), "discarded_flag".to_string()]);
    w.write_record(&header).map_err(io_err)?;

    let mut rows: Vec<(u64, Vec<String>)> = Vec::new();
    for (i, s) in &batch.replicates {
        let mut row = vec![
            i.to_string(),
            s.n.to_string(),
            s.gw.z_n().to_string(),
            s.gw.w_n.to_string(),
            opt(s.m_n()),
            opt(s.n_max),
        ];
        row.extend(Class::ALL.iter().map(|&c| opt(s.classes.get(c).0)));
        row.extend(Class::ALL.iter().map(|&c| s.classes.get(c).1.to_string()));
        row.extend((0..top_k).map(|j| opt(s.top_k.get(j).copied())));
        row.push(opt(s.indep_max));
        row.push("0".into());
        rows.push((*i, row));
    }
    for &i in &batch.discarded {
        let mut row = vec![String::new(); header.len()];
        row[0] = i.to_string();
        row[header.len() - 1] = "1".into();
        rows.push((i, row));
    }
    rows.sort_by_key(|r| r.0);
    for (_, row) in rows {
        w.write_record(&row).map_err(io_err)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| io_err(e.into_error()))?).expect("csv is utf-8"))
}

/// `replicate_index,k,M_k,N_k`.
pub fn checkpoints_csv(batch: &Batch) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["replicate_index", "k", "M_k", "N_k"]).map_err(io_err)?;
    for (i, s) in &batch.replicates {
        for (k, m) in &s.m_at {
            let nk = s.n_at.get(k).copied().flatten();
            w.write_record([i.to_string(), k.to_string(), opt(*m), opt(nk)]).map_err(io_err)?;
        }
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| io_err(e.into_error()))?).expect("csv is utf-8"))
}

fn io_err(e: impl Into<std::io::Error>) -> crate::Error {
    crate::Error::Io(e.into())
}

fn config_digest(cfg: &ExperimentConfig) -> String {
    // the output directory does not change the data
    let mut c = cfg.clone();
    c.output_dir = PathBuf::new();
    sha256_hex(c.to_toml().as_bytes())
}

/// Everything a run writes, keyed by file name.
pub fn render_files(cfg: &ExperimentConfig, out: &ScenarioOutput) -> Result<(BTreeMap<String, Vec<u8>>, Manifest)> {
    let setup = Setup::new(cfg)?;
    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    if let Some(batch) = &out.batch {
        files.insert(REPLICATES_CSV.into(), replicates_csv(batch, cfg.top_k)?.into_bytes());
        files.insert(CHECKPOINTS_CSV.into(), checkpoints_csv(batch)?.into_bytes());
    }
    if let Some(pool) = &out.pool {
        files.insert(W_POOL_CSV.into(), pool.to_csv().into_bytes());
    }
    for (name, text) in &out.tables {
        files.insert(name.clone(), text.clone().into_bytes());
    }
    files.insert(STATS_JSON.into(), serde_json::to_vec_pretty(&out.stats)?);

    let c = setup.classifier;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION.into(),
        crate_version: env!("CARGO_PKG_VERSION").into(),
        scenario: cfg.scenario.to_string(),
        config: cfg.clone(),
        config_digest: config_digest(cfg),
        step: setup.step,
        offspring: OffspringManifest {
            kind: cfg.offspring.clone(),
            m: setup.law.mean(),
            q: setup.law.q(),
            population_cap: cfg.population_cap,
        },
        constants: setup.constants,
        classifier: ClassifierManifest {
            delta: c.delta,
            t: c.t,
            horizon: c.n,
            big_jump_threshold: c.big_jump_threshold,
            s_n: c.s_n,
            convention: "horizon".into(),
        },
        w_pool: out.pool.as_ref().map(|p| WPoolManifest {
            n_w: p.n_w,
            count: p.len(),
            attempts: p.attempts,
            discarded: p.discarded.len(),
            degenerate: p.n_w == 0,
        }),
        accepted_replicates: out.batch.as_ref().map_or(0, |b| b.replicates.len()),
        discarded_replicates: out.batch.as_ref().map_or_else(Vec::new, |b| b.discarded.clone()),
        acceptance_rate: out.batch.as_ref().map(|b| b.acceptance_rate()),
        checkpoints: out.checkpoints.clone(),
        files: files.iter().map(|(k, v)| (k.clone(), sha256_hex(v))).collect(),
    };
    Ok((files, manifest))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    Ok(serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?)
}

/// A finished run for the same config whose files are all intact.
fn completed_run(dir: &Path, cfg: &ExperimentConfig) -> Option<Manifest> {
    let m = read_manifest(dir).ok()?;
    if m.schema_version != SCHEMA_VERSION || m.config_digest != config_digest(cfg) {
        return None;
    }
    m.files
        .iter()
        .all(|(name, digest)| fs::read(dir.join(name)).is_ok_and(|b| &sha256_hex(&b) == digest))
        .then_some(m)
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub stats: Value,
    /// True when an intact earlier run was found and nothing was recomputed.
    pub resumed: bool,
}

/// Runs the scenario into `cfg.output_dir`. A directory already holding a
/// complete run of the same config is left untouched.
pub fn run_scenario(cfg: &ExperimentConfig) -> Result<RunResult> {
    let dir = cfg.output_dir.clone();
    if let Some(manifest) = completed_run(&dir, cfg) {
        let stats = serde_json::from_slice(&fs::read(dir.join(STATS_JSON))?)?;
        return Ok(RunResult { dir, manifest, stats, resumed: true });
    }
    let out = execute(cfg)?;
    write_run(&dir, cfg, &out)?;
    let manifest = read_manifest(&dir)?;
    Ok(RunResult { dir, manifest, stats: out.stats, resumed: false })
}

pub fn write_run(dir: &Path, cfg: &ExperimentConfig, out: &ScenarioOutput) -> Result<()> {
    let (files, manifest) = render_files(cfg, out)?;
    fs::create_dir_all(dir)?;
    for (name, bytes) in &files {
        fs::write(dir.join(name), bytes)?;
    }
    // the manifest goes last so an interrupted run is never mistaken for a complete one
    fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}
