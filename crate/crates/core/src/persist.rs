//! Suite directories: `manifest.json` plus one JSON file per domain.
//!
//! Weights are written as f64 with shortest round-trip formatting, so a
//! reload is bit-identical for both f32 and f64 suites. Loading validates
//! every file before returning anything.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::RiskDomain;
use crate::neuralnet::{Hyperparams, MlpParams};
use crate::num::Scalar;
use crate::suite::{DomainModel, ModelSuite, Thresholds};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{path}: format_version {found} is not supported (expected {expected})")]
    VersionMismatch { path: PathBuf, found: u32, expected: u32 },
    #[error("model file for domain {domain} is missing ({path})")]
    MissingDomain { domain: RiskDomain, path: PathBuf },
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub format_version: u32,
    pub dim: usize,
    pub seed: u64,
    pub domains: BTreeMap<RiskDomain, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    domain: RiskDomain,
    dim: usize,
    seed: u64,
    hyperparams: Hyperparams,
    thresholds: Thresholds,
    weights: MlpParams<f64>,
}

/// Only the version field, so a future layout still reports its version.
#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PersistError + '_ {
    move |source| PersistError::Io { path: path.to_path_buf(), source }
}

fn write_file(path: &Path, contents: &str) -> Result<(), PersistError> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn save_suite<T: Scalar>(suite: &ModelSuite<T>, dir: &Path) -> Result<(), PersistError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut domains = BTreeMap::new();
    for m in suite.models() {
        let file = format!("{}.json", m.domain.as_str());
        let body = ModelFile {
            format_version: FORMAT_VERSION,
            domain: m.domain,
            dim: m.dim(),
            seed: m.seed,
            hyperparams: m.hyper.clone(),
            thresholds: m.thresholds,
            weights: m.params.cast::<f64>(),
        };
        let json = serde_json::to_string(&body).expect("model serializes");
        write_file(&dir.join(&file), &json)?;
        domains.insert(m.domain, file);
    }
    let manifest = SuiteManifest { format_version: FORMAT_VERSION, dim: suite.dim(), seed: suite.seed(), domains };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&dir.join(MANIFEST_FILE), &json)
}

fn read_versioned<D: serde::de::DeserializeOwned>(path: &Path) -> Result<D, PersistError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let corrupt = |e: serde_json::Error| PersistError::Corrupt { path: path.to_path_buf(), message: e.to_string() };
    let probe: VersionProbe = serde_json::from_str(&text).map_err(corrupt)?;
    if probe.format_version != FORMAT_VERSION {
        return Err(PersistError::VersionMismatch {
            path: path.to_path_buf(),
            found: probe.format_version,
            expected: FORMAT_VERSION,
        });
    }
    serde_json::from_str(&text).map_err(corrupt)
}

pub fn load_manifest(dir: &Path) -> Result<SuiteManifest, PersistError> {
    read_versioned(&dir.join(MANIFEST_FILE))
}

pub fn load_suite<T: Scalar>(dir: &Path) -> Result<ModelSuite<T>, PersistError> {
    let manifest = load_manifest(dir)?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut models = Vec::with_capacity(RiskDomain::ALL.len());
    for domain in RiskDomain::ALL {
        let name = manifest.domains.get(&domain).ok_or_else(|| PersistError::Corrupt {
            path: manifest_path.clone(),
            message: format!("manifest lists no file for domain {domain}"),
        })?;
        let path = dir.join(name);
        if !path.is_file() {
            return Err(PersistError::MissingDomain { domain, path });
        }
        let file: ModelFile = read_versioned(&path)?;
        let corrupt = |message: String| PersistError::Corrupt { path: path.clone(), message };
        if file.domain != domain {
            return Err(corrupt(format!("file holds domain {}, manifest says {domain}", file.domain)));
        }
        if !file.weights.is_consistent() || file.weights.dim() != file.dim || file.dim != manifest.dim {
            return Err(corrupt("weight shapes or values are inconsistent".into()));
        }
        if !(file.thresholds.pos_min.is_finite() && file.thresholds.neg_min.is_finite()) {
            return Err(corrupt("thresholds must be finite".into()));
        }
        file.hyperparams.validate().map_err(|e| corrupt(e.to_string()))?;
        models.push(DomainModel {
            domain,
            params: file.weights.cast::<T>(),
            thresholds: file.thresholds,
            hyper: file.hyperparams,
            seed: file.seed,
        });
    }
    ModelSuite::new(models, manifest.seed).map_err(|e| PersistError::Corrupt { path: manifest_path, message: e.to_string() })
}
