//! JSON run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use lte_pss::channel::{doppler_hz, ChannelScenario, Fading, DEFAULT_CARRIER_HZ, DEFAULT_SAMPLE_RATE_HZ};
use lte_pss::detector::{AcqConfig, EngineConfig, EngineKind, OversampleSource, PmdConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum EngineName {
    MfBrute,
    MfOpt,
    Cluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelModel {
    Awgn,
    Tu6,
}

/// One correlator engine as written in the config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSpec {
    pub engine: EngineName,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub oversample: u8,
    /// Build the 2x stream with the interpolating upsampler instead of
    /// using native 1.92 MHz samples.
    #[serde(default)]
    pub upsample: bool,
}

impl EngineSpec {
    pub fn to_engine_config(self) -> EngineConfig {
        let kind = match self.engine {
            EngineName::MfBrute => EngineKind::MfBrute,
            EngineName::MfOpt => EngineKind::MfOpt,
            EngineName::Cluster => EngineKind::Cluster { k: self.k.unwrap_or(0) },
        };
        let cfg = EngineConfig::new(kind, self.oversample);
        if self.upsample {
            cfg.upsampled()
        } else {
            cfg
        }
    }

    fn check(&self, field: &str, errors: &mut Vec<String>) {
        match (self.engine, self.k) {
            (EngineName::Cluster, None) => errors.push(format!("{field}.K: required when engine = cluster")),
            (EngineName::Cluster, Some(k)) if k == 0 || k > 64 * self.oversample as usize => errors.push(format!(
                "{field}.K: {k} outside 1..={}",
                64 * self.oversample as usize
            )),
            (EngineName::MfBrute | EngineName::MfOpt, Some(_)) => {
                errors.push(format!("{field}.K: only valid with engine = cluster"))
            }
            _ => {}
        }
        if !matches!(self.oversample, 1 | 2) {
            errors.push(format!("{field}.oversample: {} is not 1 or 2", self.oversample));
        }
        if self.upsample && self.oversample != 2 {
            errors.push(format!("{field}.upsample: requires oversample = 2"));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    /// Pmd and detect runs; acquisition always uses TU6.
    pub model: ChannelModel,
    pub fading: Fading,
    pub snr_db: f64,
    pub cfo_ppm: f64,
    pub carrier_hz: f64,
    pub sample_rate_hz: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            model: ChannelModel::Awgn,
            fading: Fading::RayleighJakes {
                doppler_hz: doppler_hz(3.0, DEFAULT_CARRIER_HZ),
            },
            snr_db: -5.0,
            cfo_ppm: 0.0,
            carrier_hz: DEFAULT_CARRIER_HZ,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
        }
    }
}

impl ChannelConfig {
    /// `awgn` is a single static path; `fading` applies to `tu6` only.
    pub fn scenario(&self) -> ChannelScenario {
        let base = match self.model {
            ChannelModel::Awgn => ChannelScenario::awgn(self.snr_db),
            ChannelModel::Tu6 => ChannelScenario::tu6(self.snr_db, self.fading),
        };
        ChannelScenario {
            cfo_ppm: self.cfo_ppm,
            carrier_hz: self.carrier_hz,
            sample_rate_hz: self.sample_rate_hz,
            ..base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub engine: EngineName,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub oversample: u8,
    #[serde(rename = "N")]
    pub n: usize,
    pub upsample: bool,
    /// Further engines run alongside the primary one by pmd, acq and
    /// bench-ops.
    pub extra_engines: Vec<EngineSpec>,
    pub channel: ChannelConfig,
    pub pfa_target: f64,
    pub snr_grid: Vec<f64>,
    pub trials: usize,
    pub calibration_trials: usize,
    pub seed: u64,
    pub max_half_frames: usize,
    /// Stream to search (`detect`).
    pub input: Option<PathBuf>,
    /// Directory of cluster tables from `cluster`; tables are rebuilt when
    /// absent.
    pub tables_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            engine: EngineName::MfOpt,
            k: None,
            oversample: 2,
            n: 128,
            upsample: false,
            extra_engines: Vec::new(),
            channel: ChannelConfig::default(),
            pfa_target: 0.1,
            snr_grid: vec![-14.0, -12.0, -10.0, -8.0, -6.0, -4.0],
            trials: 1000,
            calibration_trials: 10_000,
            seed: 1,
            max_half_frames: 200,
            input: None,
            tables_dir: None,
            output_dir: PathBuf::from("out"),
            jobs: None,
        }
    }
}

/// Flag values that override config file fields.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// JSON config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub engine: Option<EngineName>,
    /// Cluster count K.
    #[arg(long, global = true)]
    pub clusters: Option<usize>,
    #[arg(long, global = true)]
    pub oversample: Option<u8>,
    /// Carrier frequency offset in ppm.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub ppm: Option<f64>,
    /// SNR in dB; a comma-separated list sets the whole grid.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub snr: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }

    /// Config file (if any) with flag overrides applied.
    pub fn resolve(o: &Overrides) -> Result<Self, CliError> {
        let mut c = match &o.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(v) = o.seed {
            c.seed = v;
        }
        if let Some(v) = o.jobs {
            c.jobs = Some(v);
        }
        if let Some(v) = &o.output_dir {
            c.output_dir = v.clone();
        }
        if let Some(v) = o.engine {
            c.engine = v;
            if v != EngineName::Cluster && o.clusters.is_none() {
                c.k = None;
            }
        }
        if let Some(v) = o.clusters {
            c.k = Some(v);
        }
        if let Some(v) = o.oversample {
            c.oversample = v;
            c.n = 64 * v as usize;
        }
        if let Some(v) = o.ppm {
            c.channel.cfo_ppm = v;
        }
        if let Some(v) = &o.snr {
            c.snr_grid = v.clone();
            if let [single] = v.as_slice() {
                c.channel.snr_db = *single;
            }
        }
        if let Some(v) = o.trials {
            c.trials = v;
        }
        Ok(c)
    }

    pub fn primary(&self) -> EngineSpec {
        EngineSpec {
            engine: self.engine,
            k: self.k,
            oversample: self.oversample,
            upsample: self.upsample,
        }
    }

    pub fn engines(&self) -> Vec<EngineConfig> {
        std::iter::once(self.primary())
            .chain(self.extra_engines.iter().copied())
            .map(EngineSpec::to_engine_config)
            .collect()
    }

    /// Every field-level problem, empty when the config is usable.
    pub fn problems(&self) -> Vec<String> {
        let mut e = Vec::new();
        self.primary().check("engine", &mut e);
        for (i, spec) in self.extra_engines.iter().enumerate() {
            spec.check(&format!("extra_engines[{i}]"), &mut e);
        }
        if self.n != 64 * self.oversample as usize {
            e.push(format!(
                "N: {} inconsistent with oversample = {} (expected {})",
                self.n,
                self.oversample,
                64 * self.oversample as usize
            ));
        }
        if !(self.pfa_target > 0.0 && self.pfa_target < 1.0) {
            e.push(format!("pfa_target: {} outside (0, 1)", self.pfa_target));
        }
        if self.snr_grid.is_empty() {
            e.push("snr_grid: must not be empty".into());
        }
        if self.snr_grid.iter().any(|s| s.is_nan()) {
            e.push("snr_grid: NaN entry".into());
        }
        if self.snr_grid.windows(2).any(|w| w[1] <= w[0]) {
            e.push("snr_grid: must be strictly increasing".into());
        }
        if self.trials == 0 {
            e.push("trials: must be positive".into());
        }
        if self.calibration_trials < 1000 {
            e.push(format!("calibration_trials: {} < 1000", self.calibration_trials));
        } else if self.calibration_trials as f64 * self.pfa_target.min(1.0 - self.pfa_target) < 10.0 {
            e.push("calibration_trials: too few to resolve the pfa_target quantile".into());
        }
        if self.max_half_frames == 0 {
            e.push("max_half_frames: must be positive".into());
        }
        if self.jobs == Some(0) {
            e.push("jobs: must be positive".into());
        }
        if self.channel.sample_rate_hz != DEFAULT_SAMPLE_RATE_HZ {
            e.push(format!(
                "channel.sample_rate_hz: only {DEFAULT_SAMPLE_RATE_HZ} is supported by the stream model"
            ));
        }
        if !(self.channel.carrier_hz > 0.0) {
            e.push("channel.carrier_hz: must be positive".into());
        }
        if !self.channel.cfo_ppm.is_finite() {
            e.push("channel.cfo_ppm: must be finite".into());
        }
        if self.channel.snr_db.is_nan() {
            e.push("channel.snr_db: NaN".into());
        }
        if let Fading::RayleighJakes { doppler_hz } = self.channel.fading {
            if !(doppler_hz >= 0.0) {
                e.push("channel.fading.doppler_hz: must be non-negative".into());
            }
        }
        e
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(p.join("\n")))
        }
    }

    pub fn pmd_config(&self) -> PmdConfig {
        PmdConfig {
            channel: self.channel.scenario(),
            ..PmdConfig::default()
        }
    }

    pub fn acq_config(&self) -> AcqConfig {
        AcqConfig {
            snr_db: self.channel.snr_db,
            cfo_ppm: self.channel.cfo_ppm,
            carrier_hz: self.channel.carrier_hz,
            fading: self.channel.fading,
            max_half_frames: self.max_half_frames,
            ..AcqConfig::default()
        }
    }

    /// The JSON value hashed into manifests: everything but `output_dir`
    /// and `jobs`, which do not affect results.
    pub fn hashed_value(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("output_dir");
            map.remove("jobs");
        }
        v
    }
}

pub fn source_name(cfg: &EngineConfig) -> &'static str {
    match cfg.source {
        OversampleSource::Native => "native",
        OversampleSource::Upsampled => "upsampled",
    }
}
