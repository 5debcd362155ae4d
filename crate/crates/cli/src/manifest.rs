use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::CliError;

pub const MANIFEST_NAME: &str = "run_manifest.json";

/// Everything needed to replay a run: resolved configuration, input digests,
/// tool versions, and the seeds actually used.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config_file: Option<PathBuf>,
    pub config: PipelineConfig,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub versions: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub started_unix_secs: u64,
    pub wall_clock_secs: f64,
    pub exit_status: String,
}

pub struct Recorder {
    manifest: RunManifest,
    start: Instant,
}

impl Recorder {
    pub fn new(command: &str, argv: Vec<String>, config: PipelineConfig, config_file: Option<PathBuf>) -> Self {
        let versions = BTreeMap::from([
            ("clinsent".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("model_format".to_string(), clinsent::persist::FORMAT_VERSION.to_string()),
        ]);
        let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Recorder {
            manifest: RunManifest {
                command: command.to_string(),
                argv,
                config_file,
                config,
                inputs: BTreeMap::new(),
                outputs: Vec::new(),
                versions,
                seeds: BTreeMap::new(),
                started_unix_secs: started,
                wall_clock_secs: 0.0,
                exit_status: String::new(),
            },
            start: Instant::now(),
        }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.manifest.config
    }

    /// Records the SHA-256 of an input file, or of every file in a directory.
    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        if path.is_dir() {
            let mut entries: Vec<_> = fs::read_dir(path)
                .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?
                .filter_map(Result::ok)
                .map(|e| e.path())
                .filter(|p| p.is_file())
                .collect();
            entries.sort();
            for p in entries {
                self.input(&p)?;
            }
            return Ok(());
        }
        let digest = sha256_file(path)?;
        self.manifest.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.manifest.outputs.push(path.display().to_string());
    }

    pub fn seed(&mut self, name: impl Into<String>, seed: u64) {
        self.manifest.seeds.insert(name.into(), seed);
    }

    /// Writes the manifest into the output directory, via a temporary file
    /// and a rename so readers never see a partial manifest.
    pub fn finish(mut self, outcome: &Result<(), CliError>) -> Result<PathBuf, CliError> {
        self.manifest.wall_clock_secs = self.start.elapsed().as_secs_f64();
        self.manifest.exit_status = match outcome {
            Ok(()) => "ok".into(),
            Err(e) => format!("error (exit {}): {e}", e.exit_code()),
        };
        let dir = &self.manifest.config.out;
        fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
        let path = dir.join(MANIFEST_NAME);
        let json = serde_json::to_string_pretty(&self.manifest).map_err(CliError::runtime)?;
        write_atomic(&path, json.as_bytes())?;
        Ok(path)
    }
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut f = fs::File::open(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| CliError::runtime(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}
