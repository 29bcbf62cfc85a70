//! Subcommand bodies. Each writes only through [`Outputs`].
//!
//! Seeds: trial `i` uses `seed + i`; threshold calibration uses
//! `seed + CALIBRATION_SEED_OFFSET` and fresh Pfa checks
//! `seed + PFA_CHECK_SEED_OFFSET`, so noise-only and signal trials never
//! share a stream.

use std::fmt::Write as _;
use std::path::Path;

use lte_pss::channel::RxStream;
use lte_pss::clustering::{cluster_waveform, conjugate_table, ClusterTable, KMeansOptions};
use lte_pss::correlator::Architecture;
use lte_pss::detector::{
    acquisition_cdf, acquisition_experiment, calibrate_threshold, crossing_snr, detect, measure_pfa,
    median_acquisition, pmd_experiment, AcqSample, DetectionResult, Engine, EngineConfig, EngineKind,
    MedianEstimate, PmdPoint, Threshold,
};
use lte_pss::io::{encode_iq, waveform_to_csv};
use lte_pss::pss::{pss_time_domain, LTE_ROOTS};
use serde::Serialize;

use crate::config::source_name;
use crate::{CliError, Command, Outputs, RunConfig};

pub const CALIBRATION_SEED_OFFSET: u64 = 1 << 40;
pub const PFA_CHECK_SEED_OFFSET: u64 = 2 << 40;

/// Pmd level at which crossing SNRs are reported.
pub const PMD_CROSSING_TARGET: f64 = 0.1;

pub fn dispatch(command: Command, c: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    match command {
        Command::GenPss => gen_pss(c, out),
        Command::Cluster => cluster(c, out),
        Command::Calibrate => calibrate(c, out),
        Command::Detect => detect_stream(c, out),
        Command::Pmd => pmd(c, out),
        Command::Acq => acq(c, out),
        Command::BenchOps => bench_ops(c, out),
    }
}

pub fn pss_file_stem(root: u32, n: usize) -> String {
    format!("pss_u{root}_N{n}")
}

pub fn table_file_name(root: u32, n: usize, k: usize) -> String {
    format!("table_u{root}_N{n}_K{k}.json")
}

fn gen_pss(c: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    for root in LTE_ROOTS {
        let w = pss_time_domain(root, c.n)?;
        let stem = pss_file_stem(root, c.n);
        out.write(&format!("{stem}.csv"), waveform_to_csv(w.body()).as_bytes())?;
        out.write(&format!("{stem}.iq"), &encode_iq(w.body()))?;
    }
    Ok(())
}

fn cluster(c: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let k = c.k.expect("validated");
    let opts = KMeansOptions::default();
    let t25 = cluster_waveform(&pss_time_domain(25, c.n)?, k, &opts)?;
    let t29 = cluster_waveform(&pss_time_domain(29, c.n)?, k, &opts)?;
    let t34 = conjugate_table(&t29)?;
    for t in [&t25, &t29, &t34] {
        let mut json = t.to_json()?;
        json.push('\n');
        out.write(&table_file_name(t.root(), c.n, k), json.as_bytes())?;
    }
    Ok(())
}

fn load_tables(dir: &Path, n: usize, k: usize) -> Result<(ClusterTable, ClusterTable), CliError> {
    let t25 = ClusterTable::load(dir.join(table_file_name(25, n, k)))?;
    let t29 = ClusterTable::load(dir.join(table_file_name(29, n, k)))?;
    Ok((t25, t29))
}

pub fn build_engine(cfg: EngineConfig, c: &RunConfig) -> Result<Engine, CliError> {
    match (cfg.kind, &c.tables_dir) {
        (EngineKind::Cluster { k }, Some(dir)) => {
            let (t25, t29) = load_tables(dir, cfg.size(), k)?;
            Ok(Engine::with_tables(cfg, t25, t29)?)
        }
        _ => Ok(Engine::new(cfg)?),
    }
}

fn engines(c: &RunConfig) -> Result<Vec<Engine>, CliError> {
    c.engines().into_iter().map(|e| build_engine(e, c)).collect()
}

fn threshold_name(t: &Threshold) -> String {
    format!("threshold_{}_w{}.json", t.engine_key, t.window)
}

fn k_field(cfg: &EngineConfig) -> String {
    cfg.kind.clusters().map(|k| k.to_string()).unwrap_or_default()
}

fn calibrated(engine: &Engine, window: usize, c: &RunConfig, out: &mut Outputs) -> Result<Threshold, CliError> {
    let t = calibrate_threshold(
        engine,
        window,
        c.pfa_target,
        c.calibration_trials,
        c.seed.wrapping_add(CALIBRATION_SEED_OFFSET),
    )?;
    out.write_json(&threshold_name(&t), &t)?;
    Ok(t)
}

fn calibrate(c: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let window = c.pmd_config().window;
    let mut csv = String::from("engine,K,oversample,N,source,window,pfa_target,lambda,trials,pfa_measured\n");
    for engine in engines(c)? {
        let t = calibrated(&engine, window, c, out)?;
        let alarms = measure_pfa(&engine, &t, c.calibration_trials, c.seed.wrapping_add(PFA_CHECK_SEED_OFFSET))?;
        let cfg = engine.config();
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            cfg.kind.name(),
            k_field(cfg),
            cfg.oversample,
            cfg.size(),
            source_name(cfg),
            window,
            t.pfa_target,
            t.lambda,
            t.trials,
            alarms as f64 / c.calibration_trials as f64
        )
        .unwrap();
    }
    out.write("thresholds.csv", csv.as_bytes())?;
    Ok(())
}

#[derive(Serialize)]
struct DetectReport {
    engine: String,
    input: String,
    samples: usize,
    result: DetectionResult,
    correct: Option<bool>,
}

fn detect_stream(c: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let input = c.input.as_ref().expect("validated");
    let stream = RxStream::load(input)?;
    let mut reports = Vec::new();
    for engine in engines(c)? {
        let t = calibrated(&engine, stream.samples.len(), c, out)?;
        let result = detect(&engine, &stream.samples, &t)?;
        let cfg = engine.config();
        let correct = stream.truth.map(|truth| {
            let lag = lte_pss::detector::engine_lag(cfg, truth.pss_start);
            result.is_correct(truth.root, lag, cfg.tolerance())
        });
        reports.push(DetectReport {
            engine: engine.key(),
            input: input.display().to_string(),
            samples: stream.samples.len(),
            result,
            correct,
        });
    }
    out.write_json("detection.json", &reports)?;
    Ok(())
}

#[derive(Serialize)]
struct PmdSummary {
    engine: String,
    threshold_lambda: f64,
    pmd_target: f64,
    crossing_snr_db: Option<f64>,
    points: Vec<PmdPoint>,
}

fn pmd(c: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let pcfg = c.pmd_config();
    let mut csv = String::from("snr_db,engine,K,oversample,trials,misses,pmd,ci_lo,ci_hi\n");
    let mut summary = Vec::new();
    for engine in engines(c)? {
        let t = calibrated(&engine, pcfg.window, c, out)?;
        let points = pmd_experiment(&engine, &t, &pcfg, &c.snr_grid, c.trials, c.seed)?;
        let cfg = engine.config();
        for p in &points {
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{}",
                p.snr_db,
                engine.key(),
                k_field(cfg),
                cfg.oversample,
                p.trials,
                p.misses,
                p.pmd,
                p.ci_lo,
                p.ci_hi
            )
            .unwrap();
        }
        summary.push(PmdSummary {
            engine: engine.key(),
            threshold_lambda: t.lambda,
            pmd_target: PMD_CROSSING_TARGET,
            crossing_snr_db: crossing_snr(&points, PMD_CROSSING_TARGET),
            points,
        });
    }
    out.write("pmd.csv", csv.as_bytes())?;
    out.write_json("pmd_summary.json", &summary)?;
    Ok(())
}

#[derive(Serialize)]
struct AcqSummary {
    engine: String,
    ppm: f64,
    snr_db: f64,
    trials: usize,
    censored: usize,
    threshold_lambda: f64,
    median_ms: Option<MedianEstimate>,
}

fn acq(c: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let acfg = c.acq_config();
    let ppm = acfg.cfo_ppm;
    let mut cdf_csv = String::from("engine,K,oversample,ppm,time_ms,cdf\n");
    let mut samples_csv = String::from("engine,K,oversample,ppm,trial,attempts,acquisition_ms,censored\n");
    let mut summary = Vec::new();
    for engine in engines(c)? {
        let t = calibrated(&engine, acfg.window(), c, out)?;
        let samples: Vec<AcqSample> = acquisition_experiment(&engine, &t, &acfg, c.trials, c.seed)?;
        let cfg = engine.config();
        let (key, k) = (engine.key(), k_field(cfg));
        for (time, cdf) in acquisition_cdf(&samples) {
            writeln!(cdf_csv, "{key},{k},{},{ppm},{time},{cdf}", cfg.oversample).unwrap();
        }
        for (i, s) in samples.iter().enumerate() {
            writeln!(
                samples_csv,
                "{key},{k},{},{ppm},{i},{},{},{}",
                cfg.oversample, s.attempts, s.acquisition_ms, s.censored
            )
            .unwrap();
        }
        summary.push(AcqSummary {
            engine: key,
            ppm,
            snr_db: acfg.snr_db,
            trials: samples.len(),
            censored: samples.iter().filter(|s| s.censored).count(),
            threshold_lambda: t.lambda,
            median_ms: median_acquisition(&samples),
        });
    }
    out.write("acq_cdf.csv", cdf_csv.as_bytes())?;
    out.write("acq_samples.csv", samples_csv.as_bytes())?;
    out.write_json("acq_summary.json", &summary)?;
    Ok(())
}

fn bench_ops(c: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let mut csv = String::from(
        "engine,N,K,oversampling,architecture,correlators,cm_per_sample,ca_per_sample,data_moves,total_cm,total_ca,magnitude_squares,real_ops,lags\n",
    );
    for engine in engines(c)? {
        let cfg = engine.config();
        let archs: &[(Architecture, &str)] = match cfg.kind {
            EngineKind::Cluster { .. } => &[
                (Architecture::LutSteering, "lut_steering"),
                (Architecture::ShiftRegister, "shift_register"),
            ],
            _ => &[(Architecture::LutSteering, "direct")],
        };
        for &(arch, arch_name) in archs {
            let cx = engine.complexity(arch)?;
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                cfg.kind.name(),
                cfg.size(),
                k_field(cfg),
                cfg.oversample,
                arch_name,
                cx.correlators,
                cx.cm_per_sample,
                cx.ca_per_sample,
                cx.data_moves_per_sample,
                cx.ops.complex_mults,
                cx.ops.complex_adds,
                cx.ops.magnitude_squares,
                cx.ops.real_ops,
                cx.ops.lags
            )
            .unwrap();
        }
    }
    out.write("ops.csv", csv.as_bytes())?;
    Ok(())
}
