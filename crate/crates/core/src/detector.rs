//! CFAR threshold calibration, peak detection and the Monte Carlo
//! harnesses for miss-detection probability and acquisition time.
//!
//! Streams are synthesised on the native 1.92 MHz grid, where the 128-point
//! PSS is the 2x-oversampled version of the 64-point one. A 1x engine keeps
//! every other sample; a 2x engine either uses the native samples or, with
//! [`OversampleSource::Upsampled`], rebuilds them from the 1x samples with
//! the linear-interpolation upsampler. Lags are always reported in the
//! engine's own sample units.
//!
//! Trial `i` of every harness draws all of its randomness from a generator
//! seeded with `base_seed + i`, so results are independent of thread count
//! and identical across engines and SNR points for a given seed.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{add_awgn, half_frame_len, upsample_by_2, BurstSource, ChannelScenario, Fading, HALF_FRAME_SECONDS};
use crate::clustering::{cluster_waveform, ClusterTable, KMeansOptions};
use crate::correlator::{
    cluster_correlate_bank, mf_correlate, mf_correlate_optimized, Architecture, ClusterBank, LagMode, MetricTrace,
    OpCount, PssBank,
};
use crate::pss::{add_cyclic_prefix, pss_time_domain, LTE_ROOTS, NORMAL_CP_1X92};
use crate::stats::{lower_median, median_ci_ranks, upper_tail_threshold, wilson_interval, Z_95};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "snake_case")]
pub enum EngineKind {
    MfBrute,
    MfOpt,
    Cluster { k: usize },
}

impl EngineKind {
    pub fn name(&self) -> &'static str {
        match self {
            EngineKind::MfBrute => "mf_brute",
            EngineKind::MfOpt => "mf_opt",
            EngineKind::Cluster { .. } => "cluster",
        }
    }

    pub fn clusters(&self) -> Option<usize> {
        match self {
            EngineKind::Cluster { k } => Some(*k),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OversampleSource {
    #[default]
    Native,
    Upsampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EngineConfig {
    #[serde(flatten)]
    pub kind: EngineKind,
    /// 1 (64-point template) or 2 (128-point template).
    pub oversample: u8,
    #[serde(default)]
    pub source: OversampleSource,
}

impl EngineConfig {
    pub fn new(kind: EngineKind, oversample: u8) -> Self {
        Self {
            kind,
            oversample,
            source: OversampleSource::Native,
        }
    }

    pub fn upsampled(mut self) -> Self {
        self.source = OversampleSource::Upsampled;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.oversample, 1 | 2) {
            return Err(Error::param("oversample", format!("{} is not 1 or 2", self.oversample)));
        }
        if self.oversample == 1 && self.source == OversampleSource::Upsampled {
            return Err(Error::param("source", "upsampling needs oversample = 2"));
        }
        if let EngineKind::Cluster { k } = self.kind {
            if k == 0 || k > self.size() {
                return Err(Error::param("K", format!("{k} outside 1..={}", self.size())));
            }
        }
        Ok(())
    }

    /// Template length `N`.
    pub fn size(&self) -> usize {
        64 * self.oversample as usize
    }

    /// Correct-detection window in engine samples.
    pub fn tolerance(&self) -> usize {
        if self.oversample == 1 {
            4
        } else {
            9
        }
    }

    /// Stable identifier, e.g. `cluster-K8-os2-N128`.
    pub fn key(&self) -> String {
        let mut key = self.kind.name().to_string();
        if let Some(k) = self.kind.clusters() {
            key.push_str(&format!("-K{k}"));
        }
        key.push_str(&format!("-os{}-N{}", self.oversample, self.size()));
        if self.source == OversampleSource::Upsampled {
            key.push_str("-up");
        }
        key
    }

    /// Engine samples produced from `native` input samples.
    pub fn prepared_len(&self, native: usize) -> usize {
        match (self.oversample, self.source) {
            (1, _) => native.div_ceil(2),
            (_, OversampleSource::Native) => native,
            (_, OversampleSource::Upsampled) => 2 * native.div_ceil(2),
        }
    }
}

#[derive(Debug, Clone)]
enum Correlators {
    Brute(Box<PssBank>),
    Opt(Box<PssBank>),
    Cluster(Box<ClusterBank>),
}

/// A configured correlator bank for the three roots.
#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    correlators: Correlators,
}

/// Strongest (root, lag) over a search window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub root: u32,
    pub lag: usize,
    pub metric: f64,
}

impl Engine {
    /// Builds the engine; cluster tables for roots 25 and 29 are computed
    /// with default K-means options.
    pub fn new(config: EngineConfig) -> Result<Self> {
        config.validate()?;
        let n = config.size();
        let correlators = match config.kind {
            EngineKind::MfBrute => Correlators::Brute(Box::new(PssBank::new(n)?)),
            EngineKind::MfOpt => Correlators::Opt(Box::new(PssBank::new(n)?)),
            EngineKind::Cluster { k } => {
                let opts = KMeansOptions::default();
                let t25 = cluster_waveform(&pss_time_domain(LTE_ROOTS[0], n)?, k, &opts)?;
                let t29 = cluster_waveform(&pss_time_domain(LTE_ROOTS[1], n)?, k, &opts)?;
                Correlators::Cluster(Box::new(ClusterBank::new(t25, t29)?))
            }
        };
        Ok(Self { config, correlators })
    }

    /// Cluster engine from precomputed tables for roots 25 and 29.
    pub fn with_tables(config: EngineConfig, t25: ClusterTable, t29: ClusterTable) -> Result<Self> {
        config.validate()?;
        let k = match config.kind {
            EngineKind::Cluster { k } => k,
            _ => return Err(Error::param("engine", "tables need a cluster engine")),
        };
        let bank = ClusterBank::new(t25, t29)?;
        if bank.size() != config.size() || bank.tables().iter().any(|t| t.num_clusters() != k) {
            return Err(Error::param(
                "tables",
                format!("tables do not match K = {k}, N = {}", config.size()),
            ));
        }
        Ok(Self {
            config,
            correlators: Correlators::Cluster(Box::new(bank)),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn key(&self) -> String {
        self.config.key()
    }

    /// Converts native-rate samples to the engine's sample grid.
    pub fn prepare(&self, native: &[C64]) -> Result<Vec<C64>> {
        match (self.config.oversample, self.config.source) {
            (1, _) => Ok(crate::channel::decimate_by_2(native)),
            (_, OversampleSource::Native) => Ok(native.to_vec()),
            (_, OversampleSource::Upsampled) => upsample_by_2(&crate::channel::decimate_by_2(native)),
        }
    }

    /// Metric traces for roots 25, 29, 34 over prepared samples.
    pub fn metrics(&self, r: &[C64], mode: LagMode) -> Result<([MetricTrace; 3], OpCount)> {
        match &self.correlators {
            Correlators::Brute(bank) => {
                let mut ops = OpCount::default();
                let mut traces = Vec::with_capacity(3);
                for w in bank.waves() {
                    let (t, o) = mf_correlate(r, w, mode)?;
                    ops += o;
                    traces.push(t);
                }
                ops.lags /= 3;
                Ok((traces.try_into().expect("three roots"), ops))
            }
            Correlators::Opt(bank) => mf_correlate_optimized(r, bank, mode),
            Correlators::Cluster(bank) => cluster_correlate_bank(r, bank, mode, Architecture::LutSteering),
        }
    }

    /// Lags available in a buffer of `native` input samples.
    pub fn lags_for(&self, native: usize) -> Result<usize> {
        let len = self.config.prepared_len(native);
        let n = self.config.size();
        if len < n {
            return Err(Error::BufferTooShort {
                needed: n,
                got: len,
            });
        }
        Ok(len - n + 1)
    }

    /// Global maximum over every root and every lag of the buffer; ties go
    /// to the earlier root, then the lower lag.
    pub fn search(&self, native: &[C64]) -> Result<Peak> {
        let lags = self.lags_for(native.len())?;
        let r = self.prepare(native)?;
        let (traces, _) = self.metrics(&r, LagMode::Sliding { lags })?;
        let mut best = Peak {
            root: traces[0].root,
            lag: 0,
            metric: f64::NEG_INFINITY,
        };
        for t in &traces {
            let (lag, metric) = t.peak();
            if metric > best.metric {
                best = Peak {
                    root: t.root,
                    lag,
                    metric,
                };
            }
        }
        Ok(best)
    }
}

/// Per-incoming-sample cost of an engine, from one circular pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Complexity {
    /// Physical correlators: three for the brute-force bank, two when the
    /// conjugate pair shares one.
    pub correlators: usize,
    /// Correlation CM per lag per correlator, magnitude excluded.
    pub cm_per_sample: u64,
    pub ca_per_sample: f64,
    pub data_moves_per_sample: f64,
    /// Totals over the `N` evaluated lags.
    pub ops: OpCount,
}

impl Engine {
    pub fn correlators(&self) -> usize {
        match self.correlators {
            Correlators::Brute(_) => 3,
            _ => 2,
        }
    }

    /// Counts one circular pass over a template-length buffer with the
    /// given correlator architecture.
    pub fn complexity(&self, arch: Architecture) -> Result<Complexity> {
        let n = self.config.size();
        let r: Vec<C64> = (0..n).map(|i| C64::from_polar(1.0, i as f64)).collect();
        let (_, ops) = match &self.correlators {
            Correlators::Cluster(bank) => cluster_correlate_bank(&r, bank, LagMode::Circular, arch)?,
            _ => self.metrics(&r, LagMode::Circular)?,
        };
        let per = (ops.lags as usize * self.correlators()) as u64;
        let cm = ops.correlation_mults();
        if cm % per != 0 {
            return Err(Error::param("engine", format!("{cm} CM do not split evenly over {per} lag-correlators")));
        }
        Ok(Complexity {
            correlators: self.correlators(),
            cm_per_sample: cm / per,
            ca_per_sample: ops.complex_adds as f64 / per as f64,
            data_moves_per_sample: ops.data_moves as f64 / ops.lags as f64,
            ops,
        })
    }
}

/// CFAR threshold for one engine configuration and search window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub engine_key: String,
    /// Search buffer length in native samples.
    pub window: usize,
    pub pfa_target: f64,
    pub lambda: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Threshold {
    fn check(&self, engine: &Engine, window: usize) -> Result<()> {
        if self.engine_key != engine.key() || self.window != window {
            return Err(Error::ThresholdMismatch {
                threshold: format!("{} window {}", self.engine_key, self.window),
                engine: format!("{} window {window}", engine.key()),
            });
        }
        Ok(())
    }
}

fn noise_buffer(len: usize, rng: &mut impl Rng) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); len];
    add_awgn(&mut v, 1.0, rng);
    v
}

/// Peak metric of every noise-only trial, in trial order.
pub fn noise_maxima(engine: &Engine, window: usize, trials: usize, seed: u64) -> Result<Vec<f64>> {
    engine.lags_for(window)?;
    (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
            engine.search(&noise_buffer(window, &mut rng)).map(|p| p.metric)
        })
        .collect()
}

/// Empirical `(1 - pfa)` quantile of the noise-only peak metric.
pub fn calibrate_threshold(engine: &Engine, window: usize, pfa: f64, trials: usize, seed: u64) -> Result<Threshold> {
    if !(pfa > 0.0 && pfa < 1.0) {
        return Err(Error::param("pfa_target", format!("{pfa} outside (0, 1)")));
    }
    if trials < 1000 {
        return Err(Error::param("trials", format!("{trials} < 1000")));
    }
    if (trials as f64) * pfa.min(1.0 - pfa) < 10.0 {
        return Err(Error::param(
            "trials",
            format!("{trials} trials resolve fewer than 10 samples in the tail at pfa = {pfa}"),
        ));
    }
    let mut maxima = noise_maxima(engine, window, trials, seed)?;
    maxima.sort_by(f64::total_cmp);
    Ok(Threshold {
        engine_key: engine.key(),
        window,
        pfa_target: pfa,
        lambda: upper_tail_threshold(&maxima, pfa),
        trials,
        seed,
    })
}

/// False alarms over `trials` fresh noise-only windows.
pub fn measure_pfa(engine: &Engine, threshold: &Threshold, trials: usize, seed: u64) -> Result<usize> {
    threshold.check(engine, threshold.window)?;
    let maxima = noise_maxima(engine, threshold.window, trials, seed)?;
    Ok(maxima.iter().filter(|&&m| m > threshold.lambda).count())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub detected: bool,
    pub root_hat: Option<u32>,
    pub lag_hat: Option<usize>,
    pub peak_metric: f64,
    pub threshold_lambda: f64,
}

impl DetectionResult {
    /// Detected with the right root and the lag within `tolerance` of `lag`.
    pub fn is_correct(&self, root: u32, lag: usize, tolerance: usize) -> bool {
        match (self.detected, self.root_hat, self.lag_hat) {
            (true, Some(u), Some(m)) => u == root && m.abs_diff(lag) <= tolerance,
            _ => false,
        }
    }
}

/// Searches a native-rate buffer whose length must match the threshold's
/// calibration window.
pub fn detect(engine: &Engine, native: &[C64], threshold: &Threshold) -> Result<DetectionResult> {
    threshold.check(engine, native.len())?;
    let peak = engine.search(native)?;
    let detected = peak.metric > threshold.lambda;
    Ok(DetectionResult {
        detected,
        root_hat: detected.then_some(peak.root),
        lag_hat: detected.then_some(peak.lag),
        peak_metric: peak.metric,
        threshold_lambda: threshold.lambda,
    })
}

/// Truth start of a native-rate burst expressed in engine samples.
pub fn engine_lag(config: &EngineConfig, native_start: usize) -> usize {
    native_start / (3 - config.oversample as usize)
}

/// Single-burst trial geometry for the miss-detection harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmdConfig {
    /// Buffer length in native samples; the whole buffer is searched.
    pub window: usize,
    /// Body start `θ` is drawn uniformly from multiples of `timing_grid`
    /// in `[cp_len, theta_max)`.
    pub theta_max: usize,
    pub timing_grid: usize,
    pub cp_len: usize,
    /// Channel template; its SNR, timing offset and seed are overwritten per
    /// trial.
    pub channel: ChannelScenario,
}

impl Default for PmdConfig {
    fn default() -> Self {
        Self {
            window: 256,
            theta_max: 128,
            timing_grid: 2,
            cp_len: NORMAL_CP_1X92,
            channel: ChannelScenario::awgn(0.0),
        }
    }
}

impl PmdConfig {
    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        if self.timing_grid == 0 {
            return Err(Error::param("timing_grid", "must be positive"));
        }
        let first = self.cp_len.div_ceil(self.timing_grid) * self.timing_grid;
        if first >= self.theta_max {
            return Err(Error::param("theta_max", "no admissible timing offset"));
        }
        let last = (self.theta_max - 1) / self.timing_grid * self.timing_grid;
        if last + 128 + self.channel.max_delay() > self.window {
            return Err(Error::param("window", "bursts at the largest offset do not fit"));
        }
        Ok(())
    }

    fn draw_theta(&self, rng: &mut impl Rng) -> usize {
        let first = self.cp_len.div_ceil(self.timing_grid);
        let last = (self.theta_max - 1) / self.timing_grid;
        rng.random_range(first..=last) * self.timing_grid
    }
}

/// Root, timing and channel seed of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialDraw {
    pub root: u32,
    pub theta: usize,
    pub channel_seed: u64,
}

fn draw_trial(seed: u64, trial: u64, theta: impl FnOnce(&mut ChaCha8Rng) -> usize) -> TrialDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial));
    let root = LTE_ROOTS[rng.random_range(0..3)];
    let theta = theta(&mut rng);
    TrialDraw {
        root,
        theta,
        channel_seed: rng.next_u64(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmdPoint {
    pub snr_db: f64,
    pub trials: usize,
    pub misses: usize,
    pub pmd: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl PmdPoint {
    pub fn new(snr_db: f64, trials: usize, misses: usize) -> Self {
        let (ci_lo, ci_hi) = wilson_interval(misses as u64, trials as u64, Z_95);
        Self {
            snr_db,
            trials,
            misses,
            pmd: misses as f64 / trials as f64,
            ci_lo,
            ci_hi,
        }
    }
}

/// Whether trial `trial` is correctly detected at `snr_db`.
pub fn pmd_trial(engine: &Engine, threshold: &Threshold, cfg: &PmdConfig, snr_db: f64, seed: u64, trial: u64) -> Result<bool> {
    let draw = draw_trial(seed, trial, |rng| cfg.draw_theta(rng));
    let w = add_cyclic_prefix(&pss_time_domain(draw.root, 128)?, cfg.cp_len)?;
    let mut sc = cfg.channel.clone();
    sc.snr_db = snr_db;
    sc.timing_offset = draw.theta;
    sc.seed = draw.channel_seed;
    let rx = crate::channel::embed_pss(&w, &sc, cfg.window)?;
    let result = detect(engine, &rx.samples, threshold)?;
    let config = engine.config();
    Ok(result.is_correct(draw.root, engine_lag(config, draw.theta), config.tolerance()))
}

/// Miss-detection probability per SNR; a miss is any trial without a
/// correct detection.
pub fn pmd_experiment(
    engine: &Engine,
    threshold: &Threshold,
    cfg: &PmdConfig,
    snr_list: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<PmdPoint>> {
    cfg.validate()?;
    threshold.check(engine, cfg.window)?;
    if trials == 0 {
        return Err(Error::param("trials", "must be positive"));
    }
    snr_list
        .iter()
        .map(|&snr| {
            let hits: Vec<bool> = (0..trials as u64)
                .into_par_iter()
                .map(|i| pmd_trial(engine, threshold, cfg, snr, seed, i))
                .collect::<Result<_>>()?;
            Ok(PmdPoint::new(snr, trials, hits.iter().filter(|&&h| !h).count()))
        })
        .collect()
}

/// SNR at which the Pmd curve first falls below `target`, interpolating
/// linearly in `log10(Pmd)` between grid points. Zero counts are floored at
/// half a miss. `None` if the curve never crosses within the grid.
pub fn crossing_snr(points: &[PmdPoint], target: f64) -> Option<f64> {
    let log = |p: &PmdPoint| p.pmd.max(0.5 / p.trials as f64).log10();
    let lt = target.log10();
    points.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        if a.pmd >= target && b.pmd < target {
            let (la, lb) = (log(a), log(b));
            let f = if la == lb { 0.0 } else { (la - lt) / (la - lb) };
            Some(a.snr_db + f * (b.snr_db - a.snr_db))
        } else {
            None
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcqConfig {
    pub snr_db: f64,
    pub cfo_ppm: f64,
    pub carrier_hz: f64,
    pub fading: Fading,
    /// Attempts before a trial is censored.
    pub max_half_frames: usize,
    pub timing_grid: usize,
    pub cp_len: usize,
}

impl Default for AcqConfig {
    fn default() -> Self {
        Self {
            snr_db: -5.0,
            cfo_ppm: 0.1,
            carrier_hz: crate::channel::DEFAULT_CARRIER_HZ,
            fading: Fading::RayleighJakes {
                doppler_hz: crate::channel::doppler_hz(3.0, crate::channel::DEFAULT_CARRIER_HZ),
            },
            max_half_frames: 200,
            timing_grid: 2,
            cp_len: NORMAL_CP_1X92,
        }
    }
}

impl AcqConfig {
    pub fn scenario(&self) -> ChannelScenario {
        ChannelScenario {
            carrier_hz: self.carrier_hz,
            ..ChannelScenario::tu6(self.snr_db, self.fading).with_cfo_ppm(self.cfo_ppm)
        }
    }

    /// Native samples searched per attempt: one half-frame.
    pub fn window(&self) -> usize {
        half_frame_len(crate::channel::DEFAULT_SAMPLE_RATE_HZ)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario().validate()?;
        if self.max_half_frames == 0 {
            return Err(Error::param("max_half_frames", "must be positive"));
        }
        if self.timing_grid == 0 {
            return Err(Error::param("timing_grid", "must be positive"));
        }
        Ok(())
    }

    fn draw_theta(&self, rng: &mut impl Rng) -> usize {
        let end = self.window() - 128 - self.scenario().max_delay();
        let first = self.cp_len.div_ceil(self.timing_grid);
        let last = end / self.timing_grid;
        rng.random_range(first..=last) * self.timing_grid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcqSample {
    /// Attempts times 5 ms; for censored trials, the cap.
    pub acquisition_ms: f64,
    pub attempts: usize,
    pub censored: bool,
}

/// Half-frames until the first correct detection for trial `trial`.
pub fn acquisition_trial(engine: &Engine, threshold: &Threshold, cfg: &AcqConfig, seed: u64, trial: u64) -> Result<AcqSample> {
    let draw = draw_trial(seed, trial, |rng| cfg.draw_theta(rng));
    let w = add_cyclic_prefix(&pss_time_domain(draw.root, 128)?, cfg.cp_len)?;
    let sc = cfg.scenario().with_timing_offset(draw.theta).with_seed(draw.channel_seed);
    let mut src = BurstSource::new(&w, &sc, cfg.window())?;
    let config = engine.config();
    let lag = engine_lag(config, draw.theta);
    for attempt in 1..=cfg.max_half_frames {
        let result = detect(engine, &src.next_period(), threshold)?;
        if result.is_correct(draw.root, lag, config.tolerance()) {
            return Ok(AcqSample {
                acquisition_ms: attempt as f64 * (HALF_FRAME_SECONDS * 1e3),
                attempts: attempt,
                censored: false,
            });
        }
    }
    Ok(AcqSample {
        acquisition_ms: cfg.max_half_frames as f64 * (HALF_FRAME_SECONDS * 1e3),
        attempts: cfg.max_half_frames,
        censored: true,
    })
}

/// One detection attempt per half-frame, full half-frame search, no
/// false-alarm penalty.
pub fn acquisition_experiment(
    engine: &Engine,
    threshold: &Threshold,
    cfg: &AcqConfig,
    trials: usize,
    seed: u64,
) -> Result<Vec<AcqSample>> {
    cfg.validate()?;
    threshold.check(engine, cfg.window())?;
    (0..trials as u64)
        .into_par_iter()
        .map(|i| acquisition_trial(engine, threshold, cfg, seed, i))
        .collect()
}

/// Empirical CDF at each distinct uncensored acquisition time. Censored
/// trials count in the denominator only, so the curve may stop below 1.
pub fn acquisition_cdf(samples: &[AcqSample]) -> Vec<(f64, f64)> {
    let mut times: Vec<f64> = samples.iter().filter(|s| !s.censored).map(|s| s.acquisition_ms).collect();
    times.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        let cdf = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == t => last.1 = cdf,
            _ => out.push((t, cdf)),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianEstimate {
    /// Censored trials sort as `+inf`, so any of these may be infinite.
    pub median: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Lower median and its 95% order-statistic interval.
pub fn median_acquisition(samples: &[AcqSample]) -> Option<MedianEstimate> {
    if samples.is_empty() {
        return None;
    }
    let mut t: Vec<f64> = samples
        .iter()
        .map(|s| if s.censored { f64::INFINITY } else { s.acquisition_ms })
        .collect();
    t.sort_by(f64::total_cmp);
    let (lo, hi) = median_ci_ranks(t.len());
    Some(MedianEstimate {
        median: lower_median(&t),
        ci_lo: t[lo],
        ci_hi: t[hi],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mf(os: u8) -> Engine {
        Engine::new(EngineConfig::new(EngineKind::MfOpt, os)).unwrap()
    }

    #[test]
    fn per_sample_multiplications() {
        let cm = |kind, os| {
            Engine::new(EngineConfig::new(kind, os))
                .unwrap()
                .complexity(Architecture::LutSteering)
                .unwrap()
                .cm_per_sample
        };
        assert_eq!(cm(EngineKind::MfBrute, 1), 64);
        assert_eq!(cm(EngineKind::MfBrute, 2), 128);
        assert_eq!(cm(EngineKind::MfOpt, 1), 33);
        assert_eq!(cm(EngineKind::MfOpt, 2), 65);
        for k in [6, 8, 16] {
            assert_eq!(cm(EngineKind::Cluster { k }, 2), k as u64);
        }
        let shift = Engine::new(EngineConfig::new(EngineKind::Cluster { k: 8 }, 2))
            .unwrap()
            .complexity(Architecture::ShiftRegister)
            .unwrap();
        assert_eq!(shift.cm_per_sample, 8);
        assert!(shift.data_moves_per_sample > 0.0);
    }

    #[test]
    fn config_validation_and_keys() {
        assert!(EngineConfig::new(EngineKind::MfBrute, 3).validate().is_err());
        assert!(EngineConfig::new(EngineKind::Cluster { k: 0 }, 2).validate().is_err());
        assert!(EngineConfig::new(EngineKind::Cluster { k: 65 }, 1).validate().is_err());
        assert!(EngineConfig::new(EngineKind::MfOpt, 1).upsampled().validate().is_err());
        assert_eq!(EngineConfig::new(EngineKind::Cluster { k: 8 }, 2).key(), "cluster-K8-os2-N128");
        assert_eq!(EngineConfig::new(EngineKind::MfBrute, 2).upsampled().key(), "mf_brute-os2-N128-up");
        let json = serde_json::to_string(&EngineConfig::new(EngineKind::Cluster { k: 8 }, 2)).unwrap();
        assert_eq!(json, r#"{"engine":"cluster","k":8,"oversample":2,"source":"native"}"#);
    }

    #[test]
    fn prepare_lengths() {
        let x: Vec<C64> = (0..256).map(|i| C64::new(i as f64, 0.0)).collect();
        for cfg in [
            EngineConfig::new(EngineKind::MfOpt, 1),
            EngineConfig::new(EngineKind::MfOpt, 2),
            EngineConfig::new(EngineKind::MfOpt, 2).upsampled(),
        ] {
            let e = Engine::new(cfg).unwrap();
            assert_eq!(e.prepare(&x).unwrap().len(), cfg.prepared_len(256));
        }
        assert_eq!(mf(1).lags_for(256).unwrap(), 65);
        assert_eq!(mf(2).lags_for(256).unwrap(), 129);
    }

    #[test]
    fn clean_burst_is_found() {
        for cfg in [
            EngineConfig::new(EngineKind::MfBrute, 1),
            EngineConfig::new(EngineKind::MfOpt, 2),
            EngineConfig::new(EngineKind::Cluster { k: 8 }, 2),
            EngineConfig::new(EngineKind::Cluster { k: 16 }, 2).upsampled(),
        ] {
            let engine = Engine::new(cfg).unwrap();
            for root in LTE_ROOTS {
                let w = add_cyclic_prefix(&pss_time_domain(root, 128).unwrap(), 9).unwrap();
                let sc = ChannelScenario::awgn(f64::INFINITY).with_timing_offset(40);
                let rx = crate::channel::embed_pss(&w, &sc, 256).unwrap();
                let p = engine.search(&rx.samples).unwrap();
                assert_eq!(p.root, root, "{}", cfg.key());
                assert!(p.lag.abs_diff(engine_lag(&cfg, 40)) <= cfg.tolerance(), "{} {p:?}", cfg.key());
            }
        }
    }

    #[test]
    fn threshold_guards() {
        let e = mf(1);
        assert!(calibrate_threshold(&e, 256, 0.1, 999, 0).is_err());
        assert!(calibrate_threshold(&e, 256, 0.0, 2000, 0).is_err());
        assert!(calibrate_threshold(&e, 256, 0.001, 2000, 0).is_err());
        let t = calibrate_threshold(&e, 256, 0.1, 1000, 0).unwrap();
        assert!(detect(&mf(2), &vec![C64::new(0.0, 0.0); 256], &t).is_err());
        assert!(detect(&e, &vec![C64::new(0.0, 0.0); 300], &t).is_err());
    }

    #[test]
    fn threshold_decreases_with_pfa() {
        let e = mf(1);
        let l = |p| calibrate_threshold(&e, 256, p, 2000, 5).unwrap().lambda;
        let (a, b, c) = (l(0.1), l(0.5), l(0.99));
        assert!(a > b && b > c && c > 0.0);
        let t = calibrate_threshold(&e, 256, 0.99, 2000, 5).unwrap();
        let alarms = measure_pfa(&e, &t, 2000, 5).unwrap();
        assert!(alarms >= 1980);
    }

    #[test]
    fn threshold_scales_with_noise_power() {
        let e = mf(1);
        let alpha = 3.0;
        let mut plain = noise_maxima(&e, 256, 50, 9).unwrap();
        let mut scaled: Vec<f64> = (0..50u64)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(9 + i);
                let v: Vec<C64> = noise_buffer(256, &mut rng).iter().map(|x| x * alpha).collect();
                e.search(&v).unwrap().metric
            })
            .collect();
        plain.sort_by(f64::total_cmp);
        scaled.sort_by(f64::total_cmp);
        for (a, b) in plain.iter().zip(&scaled) {
            assert!((b / a - alpha * alpha).abs() < 1e-9);
        }
    }

    #[test]
    fn detections_are_deterministic() {
        let e = mf(2);
        let t = calibrate_threshold(&e, 256, 0.1, 1000, 1).unwrap();
        let cfg = PmdConfig::default();
        let a = pmd_experiment(&e, &t, &cfg, &[-8.0, -4.0], 300, 42).unwrap();
        let b = pmd_experiment(&e, &t, &cfg, &[-8.0, -4.0], 300, 42).unwrap();
        assert_eq!(a, b);
        assert!(a[0].pmd >= a[1].pmd);
    }

    #[test]
    fn root_29_at_10_db() {
        let e = Engine::new(EngineConfig::new(EngineKind::MfBrute, 2)).unwrap();
        let t = calibrate_threshold(&e, 256, 0.1, 1000, 3).unwrap();
        let w = add_cyclic_prefix(&pss_time_domain(29, 128).unwrap(), 9).unwrap();
        let hits: usize = (0..1000u64)
            .into_par_iter()
            .map(|i| {
                let theta = 10 + 2 * (i as usize % 50);
                let sc = ChannelScenario::awgn(10.0).with_timing_offset(theta).with_seed(i);
                let rx = crate::channel::embed_pss(&w, &sc, 256).unwrap();
                let r = detect(&e, &rx.samples, &t).unwrap();
                (r.root_hat == Some(29)) as usize
            })
            .sum();
        assert!(hits >= 990, "{hits}");
    }

    #[test]
    fn pmd_asymptote() {
        let e = mf(1);
        let t = calibrate_threshold(&e, 256, 0.1, 1000, 2).unwrap();
        let p = pmd_experiment(&e, &t, &PmdConfig::default(), &[20.0], 200, 7).unwrap();
        assert_eq!(p[0].misses, 0);
    }

    #[test]
    fn crossing_interpolation() {
        let pts = [
            PmdPoint::new(-10.0, 1000, 900),
            PmdPoint::new(-8.0, 1000, 400),
            PmdPoint::new(-6.0, 1000, 40),
            PmdPoint::new(-4.0, 1000, 0),
        ];
        let x = crossing_snr(&pts, 0.1).unwrap();
        let expect = -8.0 + 2.0 * (0.4f64.log10() - 0.1f64.log10()) / (0.4f64.log10() - 0.04f64.log10());
        assert!((x - expect).abs() < 1e-12);
        assert_eq!(crossing_snr(&pts[..2], 0.1), None);
    }

    #[test]
    fn cdf_and_median() {
        let s = |ms: f64, censored| AcqSample {
            acquisition_ms: ms,
            attempts: (ms / 5.0) as usize,
            censored,
        };
        let samples = [s(10.0, false), s(5.0, false), s(10.0, false), s(1000.0, true)];
        let cdf = acquisition_cdf(&samples);
        assert_eq!(cdf, vec![(5.0, 0.25), (10.0, 0.75)]);
        let m = median_acquisition(&samples).unwrap();
        assert_eq!(m.median, 10.0);
        assert!(m.ci_hi.is_infinite());
    }

    #[test]
    fn noiseless_acquisition_takes_one_half_frame() {
        let e = mf(2);
        let cfg = AcqConfig {
            snr_db: f64::INFINITY,
            fading: Fading::Static,
            ..AcqConfig::default()
        };
        let t = Threshold {
            engine_key: e.key(),
            window: cfg.window(),
            pfa_target: 0.1,
            lambda: 0.0,
            trials: 0,
            seed: 0,
        };
        let s = acquisition_experiment(&e, &t, &cfg, 3, 0).unwrap();
        assert!(s.iter().all(|x| x.attempts == 1 && x.acquisition_ms == 5.0 && !x.censored));
    }
}
