//! Batch experiment runner for clustering-based PSS detection.
//!
//! Every subcommand resolves a [`RunConfig`], validates it before doing any
//! work, writes its outputs atomically into `output_dir` and finishes with a
//! `manifest-<command>.json` listing the config, its hash and the SHA-256 of
//! every file. [`replay`] reruns a manifest and checks the hashes.

pub mod commands;
pub mod config;
pub mod manifest;

pub use config::{EngineName, EngineSpec, Overrides, RunConfig};
pub use manifest::{replay, Manifest, Outputs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments or config; exit code 1.
    #[error("invalid configuration:\n{0}")]
    Validation(String),
    /// Failure while running; exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<lte_pss::Error> for CliError {
    fn from(e: lte_pss::Error) -> Self {
        match e {
            lte_pss::Error::InvalidParameter { .. } => CliError::Validation(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    GenPss,
    Cluster,
    Calibrate,
    Detect,
    Pmd,
    Acq,
    BenchOps,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GenPss => "gen-pss",
            Command::Cluster => "cluster",
            Command::Calibrate => "calibrate",
            Command::Detect => "detect",
            Command::Pmd => "pmd",
            Command::Acq => "acq",
            Command::BenchOps => "bench-ops",
        }
    }
}

/// Validates `config`, runs `command` on a pool of `config.jobs` workers
/// and writes the manifest.
pub fn run(command: Command, config: &RunConfig) -> Result<Manifest, CliError> {
    config.validate()?;
    if command == Command::Detect && config.input.is_none() {
        return Err(CliError::Validation("input: required by detect".into()));
    }
    if command == Command::Cluster && config.engine != EngineName::Cluster {
        return Err(CliError::Validation("engine: cluster requires engine = cluster and K".into()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = config.jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut out = Outputs::new(&config.output_dir)?;
    pool.install(|| commands::dispatch(command, config, &mut out))?;
    out.finish(command, config)
}
