//! Received-stream synthesis: tapped-delay-line fading, timing offset,
//! carrier frequency offset and AWGN, plus the 2x upsampler.
//!
//! The received signal is
//! `r(n) = exp(j2πnε/N) · Σ_m h(m)·s(n - θ - m) + z(n)` with normalised CFO
//! `ε = N·T_s·f_CFO`, so the per-sample phase step is `2π·f_CFO·T_s`
//! regardless of `N`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::pss::PssWaveform;
use crate::{Error, Result, C64};

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 1.92e6;
pub const DEFAULT_CARRIER_HZ: f64 = 2.0e9;
pub const HALF_FRAME_SECONDS: f64 = 5e-3;

/// Samples in one 5 ms half-frame.
pub fn half_frame_len(sample_rate_hz: f64) -> usize {
    (HALF_FRAME_SECONDS * sample_rate_hz).round() as usize
}

/// Maximum Doppler shift for a terminal moving at `speed_kmh`.
pub fn doppler_hz(speed_kmh: f64, carrier_hz: f64) -> f64 {
    speed_kmh / 3.6 * carrier_hz / 299_792_458.0
}

/// One resolvable path on the sample grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub delay: usize,
    pub power_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileTap {
    pub delay_us: f64,
    pub power_db: f64,
}

/// A continuous-delay power-delay profile.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerDelayProfile {
    pub taps: Vec<ProfileTap>,
}

impl PowerDelayProfile {
    /// Rounds delays to the sample grid, merges paths that land in the same
    /// bin (adding linear power) and normalises to unit total power.
    pub fn quantize(&self, sample_rate_hz: f64) -> Vec<Tap> {
        let mut bins: Vec<(usize, f64)> = Vec::new();
        for t in &self.taps {
            let delay = (t.delay_us * 1e-6 * sample_rate_hz).round() as usize;
            let p = db_to_linear(t.power_db);
            match bins.iter_mut().find(|(d, _)| *d == delay) {
                Some((_, acc)) => *acc += p,
                None => bins.push((delay, p)),
            }
        }
        bins.sort_by_key(|(d, _)| *d);
        normalize(
            bins.into_iter()
                .map(|(delay, p)| Tap {
                    delay,
                    power_db: linear_to_db(p),
                })
                .collect(),
        )
    }
}

/// COST 207 Typical Urban 6-path profile.
pub fn tu6_profile() -> PowerDelayProfile {
    const TAPS: [(f64, f64); 6] = [
        (0.0, -3.0),
        (0.2, 0.0),
        (0.5, -2.0),
        (1.6, -6.0),
        (2.3, -8.0),
        (5.0, -10.0),
    ];
    PowerDelayProfile {
        taps: TAPS
            .iter()
            .map(|&(delay_us, power_db)| ProfileTap { delay_us, power_db })
            .collect(),
    }
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn linear_to_db(p: f64) -> f64 {
    10.0 * p.log10()
}

fn normalize(taps: Vec<Tap>) -> Vec<Tap> {
    let total: f64 = taps.iter().map(|t| db_to_linear(t.power_db)).sum();
    taps.into_iter()
        .map(|t| Tap {
            delay: t.delay,
            power_db: linear_to_db(db_to_linear(t.power_db) / total),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Fading {
    /// Fixed real tap amplitudes `sqrt(p)`.
    Static,
    /// Independent complex Gaussian taps per block (half-frame).
    RayleighBlock,
    /// Sum-of-sinusoids Rayleigh process evaluated once per block.
    RayleighJakes { doppler_hz: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelScenario {
    pub taps: Vec<Tap>,
    pub fading: Fading,
    /// Per-sample SNR over the PSS symbol; `+inf` disables noise.
    pub snr_db: f64,
    pub cfo_ppm: f64,
    pub carrier_hz: f64,
    pub sample_rate_hz: f64,
    /// Transform size used to express the CFO as `ε`.
    pub fft_size: usize,
    /// Start of the PSS body (after its CP), in samples.
    pub timing_offset: usize,
    pub seed: u64,
}

impl ChannelScenario {
    /// Single static path.
    pub fn awgn(snr_db: f64) -> Self {
        Self {
            taps: vec![Tap {
                delay: 0,
                power_db: 0.0,
            }],
            fading: Fading::Static,
            snr_db,
            cfo_ppm: 0.0,
            carrier_hz: DEFAULT_CARRIER_HZ,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            fft_size: 128,
            timing_offset: 0,
            seed: 0,
        }
    }

    /// TU6 on the 1.92 MHz grid with the given fading model.
    pub fn tu6(snr_db: f64, fading: Fading) -> Self {
        Self {
            taps: tu6_profile().quantize(DEFAULT_SAMPLE_RATE_HZ),
            fading,
            ..Self::awgn(snr_db)
        }
    }

    pub fn with_cfo_ppm(mut self, ppm: f64) -> Self {
        self.cfo_ppm = ppm;
        self
    }

    pub fn with_timing_offset(mut self, theta: usize) -> Self {
        self.timing_offset = theta;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.taps.is_empty() {
            return Err(Error::param("taps", "at least one tap required"));
        }
        if self.taps.windows(2).any(|w| w[1].delay <= w[0].delay) {
            return Err(Error::param("taps", "delays must be strictly increasing"));
        }
        let total: f64 = self.taps.iter().map(|t| db_to_linear(t.power_db)).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::param(
                "taps",
                format!("linear powers sum to {total}, expected 1"),
            ));
        }
        if self.snr_db.is_nan() {
            return Err(Error::param("snr_db", "NaN"));
        }
        if !(self.sample_rate_hz > 0.0) || !self.carrier_hz.is_finite() || !self.cfo_ppm.is_finite() {
            return Err(Error::param("sample_rate_hz", "rates must be finite and positive"));
        }
        if self.fft_size == 0 {
            return Err(Error::param("fft_size", "must be positive"));
        }
        if let Fading::RayleighJakes { doppler_hz } = self.fading {
            if !(doppler_hz >= 0.0) {
                return Err(Error::param("doppler_hz", "must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn cfo_hz(&self) -> f64 {
        self.cfo_ppm * 1e-6 * self.carrier_hz
    }

    /// Normalised CFO `ε = N·T_s·f_CFO` in subcarrier spacings.
    pub fn epsilon(&self) -> f64 {
        self.fft_size as f64 * self.cfo_hz() / self.sample_rate_hz
    }

    /// CFO phase advance per sample in cycles (`ε / N`).
    pub fn cfo_cycles_per_sample(&self) -> f64 {
        self.cfo_hz() / self.sample_rate_hz
    }

    pub fn snr_linear(&self) -> f64 {
        db_to_linear(self.snr_db)
    }

    pub fn max_delay(&self) -> usize {
        self.taps.last().map_or(0, |t| t.delay)
    }

    pub fn tap_powers(&self) -> Vec<f64> {
        self.taps.iter().map(|t| db_to_linear(t.power_db)).collect()
    }
}

/// Ground truth attached to synthetic streams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamTruth {
    pub root: u32,
    /// First sample of the first PSS body.
    pub pss_start: usize,
    /// Distance between consecutive PSS bodies (0 for a single burst).
    pub period: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RxStream {
    pub samples: Vec<C64>,
    pub sample_rate_hz: f64,
    pub truth: Option<StreamTruth>,
}

impl RxStream {
    /// Body start of every PSS fully or partly inside the stream.
    pub fn pss_starts(&self) -> Vec<usize> {
        match self.truth {
            Some(t) if t.period > 0 => (t.pss_start..self.samples.len()).step_by(t.period).collect(),
            Some(t) => vec![t.pss_start],
            None => Vec::new(),
        }
    }
}

/// Tap-gain generator for one channel realisation.
#[derive(Debug, Clone)]
pub struct FadingProcess {
    powers: Vec<f64>,
    fading: Fading,
    /// Per tap: (Doppler frequency, phase) of each sinusoid.
    oscillators: Vec<Vec<(f64, f64)>>,
}

const JAKES_OSCILLATORS: usize = 16;

impl FadingProcess {
    pub fn new(sc: &ChannelScenario, rng: &mut impl Rng) -> Self {
        let powers = sc.tap_powers();
        let oscillators = match sc.fading {
            Fading::RayleighJakes { doppler_hz } => powers
                .iter()
                .map(|_| {
                    (0..JAKES_OSCILLATORS)
                        .map(|_| {
                            let angle: f64 = rng.random_range(0.0..2.0 * PI);
                            let phase: f64 = rng.random_range(0.0..2.0 * PI);
                            (doppler_hz * angle.cos(), phase)
                        })
                        .collect()
                })
                .collect(),
            _ => Vec::new(),
        };
        Self {
            powers,
            fading: sc.fading,
            oscillators,
        }
    }

    /// Tap gains for a block starting at time `t_seconds`.
    pub fn gains(&self, t_seconds: f64, rng: &mut impl Rng) -> Vec<C64> {
        match self.fading {
            Fading::Static => self.powers.iter().map(|p| C64::new(p.sqrt(), 0.0)).collect(),
            Fading::RayleighBlock => self
                .powers
                .iter()
                .map(|&p| complex_gaussian(rng, p))
                .collect(),
            Fading::RayleighJakes { .. } => self
                .powers
                .iter()
                .zip(&self.oscillators)
                .map(|(&p, osc)| {
                    let sum: C64 = osc
                        .iter()
                        .map(|&(f, phi)| C64::from_polar(1.0, 2.0 * PI * f * t_seconds + phi))
                        .sum();
                    sum * (p / osc.len() as f64).sqrt()
                })
                .collect(),
        }
    }
}

/// Circularly symmetric complex Gaussian with variance `var`.
pub fn complex_gaussian(rng: &mut impl Rng, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * s, im * s)
}

pub fn add_awgn(samples: &mut [C64], var: f64, rng: &mut impl Rng) {
    if var == 0.0 {
        return;
    }
    for x in samples {
        *x += complex_gaussian(rng, var);
    }
}

/// Multiplies `samples[i]` by `exp(j2π·cycles·(first_index + i))`.
pub fn apply_cfo(samples: &mut [C64], cycles_per_sample: f64, first_index: u64) {
    if cycles_per_sample == 0.0 {
        return;
    }
    for (i, x) in samples.iter_mut().enumerate() {
        let turns = cycles_per_sample * (first_index + i as u64) as f64;
        *x *= C64::from_polar(1.0, 2.0 * PI * turns.fract());
    }
}

/// Adds `amplitude · Σ_t gain_t · symbol(i - start - delay_t)` into `out`.
///
/// `start` may be negative or run past the end; the symbol is clipped.
pub fn render_burst(out: &mut [C64], symbol: &[C64], start: isize, taps: &[Tap], gains: &[C64], amplitude: f64) {
    for (tap, &g) in taps.iter().zip(gains) {
        let g = g * amplitude;
        let offset = start + tap.delay as isize;
        for (j, &s) in symbol.iter().enumerate() {
            let i = offset + j as isize;
            if i >= 0 && (i as usize) < out.len() {
                out[i as usize] += g * s;
            }
        }
    }
}

fn mean_power(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64
}

/// Passes `tx` through the scenario: delay `θ`, multipath, CFO, AWGN.
///
/// Noise variance is `P_tx / SNR`, with `P_tx` the mean power of `tx`. The
/// output keeps the delayed tail, so it holds `len(tx) + θ + max_delay`
/// samples.
pub fn apply_channel(tx: &[C64], sc: &ChannelScenario) -> Result<RxStream> {
    if tx.is_empty() {
        return Err(Error::param("tx", "empty"));
    }
    sc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let process = FadingProcess::new(sc, &mut rng);
    let gains = process.gains(0.0, &mut rng);
    let mut out = vec![C64::new(0.0, 0.0); tx.len() + sc.timing_offset + sc.max_delay()];
    render_burst(&mut out, tx, sc.timing_offset as isize, &sc.taps, &gains, 1.0);
    apply_cfo(&mut out, sc.cfo_cycles_per_sample(), 0);
    add_awgn(&mut out, mean_power(tx) / sc.snr_linear(), &mut rng);
    Ok(RxStream {
        samples: out,
        sample_rate_hz: sc.sample_rate_hz,
        truth: None,
    })
}

/// Amplitude that puts a symbol of mean power `symbol_power` at `snr_db`
/// over unit-variance noise; 1 when the SNR is infinite.
pub fn amplitude_for_snr(symbol_power: f64, snr_db: f64) -> f64 {
    if snr_db.is_infinite() {
        1.0
    } else {
        (db_to_linear(snr_db) / symbol_power).sqrt()
    }
}

/// Noise variance of streams built by [`embed_pss_in_halfframe`].
pub fn noise_floor(snr_db: f64) -> f64 {
    if snr_db.is_infinite() {
        0.0
    } else {
        1.0
    }
}

/// Generates a periodic PSS stream one period at a time.
///
/// Each period holds one CP-extended PSS whose body starts `θ` samples in.
/// Noise has unit variance and the PSS is scaled so its symbol power sits at
/// the scenario SNR; with infinite SNR the stream is noise-free and
/// unscaled. Tap gains are redrawn (block fading) or re-evaluated (Jakes)
/// at every period boundary, and the CFO ramp runs on the absolute sample
/// index so it stays continuous across periods.
#[derive(Debug, Clone)]
pub struct BurstSource {
    symbol: Vec<C64>,
    cp_len: usize,
    root: u32,
    period: usize,
    sc: ChannelScenario,
    amplitude: f64,
    process: FadingProcess,
    rng: ChaCha8Rng,
    next: u64,
}

impl BurstSource {
    /// The whole burst, multipath tail included, must fit in one period.
    pub fn new(w: &PssWaveform, sc: &ChannelScenario, period: usize) -> Result<Self> {
        sc.validate()?;
        let cp = w.cp_len();
        if sc.timing_offset < cp {
            return Err(Error::param(
                "timing_offset",
                format!("{} leaves no room for the {cp}-sample CP", sc.timing_offset),
            ));
        }
        let end = sc.timing_offset + w.size() + sc.max_delay();
        if end > period {
            return Err(Error::param(
                "timing_offset",
                format!("burst ends at {end}, past the {period}-sample period"),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
        let process = FadingProcess::new(sc, &mut rng);
        let symbol = w.samples().to_vec();
        Ok(Self {
            amplitude: amplitude_for_snr(mean_power(&symbol), sc.snr_db),
            symbol,
            cp_len: cp,
            root: w.root(),
            period,
            sc: sc.clone(),
            process,
            rng,
            next: 0,
        })
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn truth(&self) -> StreamTruth {
        StreamTruth {
            root: self.root,
            pss_start: self.sc.timing_offset,
            period: self.period,
        }
    }

    /// Samples of the next period.
    pub fn next_period(&mut self) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.period];
        let t = self.next as f64 * self.period as f64 / self.sc.sample_rate_hz;
        let gains = self.process.gains(t, &mut self.rng);
        let start = (self.sc.timing_offset - self.cp_len) as isize;
        render_burst(&mut out, &self.symbol, start, &self.sc.taps, &gains, self.amplitude);
        apply_cfo(&mut out, self.sc.cfo_cycles_per_sample(), self.next * self.period as u64);
        add_awgn(&mut out, noise_floor(self.sc.snr_db), &mut self.rng);
        self.next += 1;
        out
    }
}

/// One CP-extended PSS in a buffer of `len` samples; see [`BurstSource`].
pub fn embed_pss(w: &PssWaveform, sc: &ChannelScenario, len: usize) -> Result<RxStream> {
    let mut src = BurstSource::new(w, sc, len)?;
    let truth = StreamTruth {
        period: 0,
        ..src.truth()
    };
    Ok(RxStream {
        samples: src.next_period(),
        sample_rate_hz: sc.sample_rate_hz,
        truth: Some(truth),
    })
}

/// A stream of `frame_count` half-frames with one CP-extended PSS each,
/// the body starting at `θ + h·half_frame` for half-frame `h`.
pub fn embed_pss_in_halfframe(w: &PssWaveform, sc: &ChannelScenario, frame_count: usize) -> Result<RxStream> {
    if frame_count == 0 {
        return Err(Error::param("frame_count", "must be at least 1"));
    }
    let mut src = BurstSource::new(w, sc, half_frame_len(sc.sample_rate_hz))?;
    let mut samples = Vec::with_capacity(frame_count * src.period());
    for _ in 0..frame_count {
        samples.extend(src.next_period());
    }
    Ok(RxStream {
        samples,
        sample_rate_hz: sc.sample_rate_hz,
        truth: Some(src.truth()),
    })
}

/// 2x linear-interpolation upsampler: `r'(2n) = r(n)`,
/// `r'(2n+1) = (r(n) + r(n+1)) / 2`, with the last odd sample repeating
/// `r(len-1)`.
pub fn upsample_by_2(r: &[C64]) -> Result<Vec<C64>> {
    if r.is_empty() {
        return Err(Error::param("r", "empty"));
    }
    let mut out = Vec::with_capacity(2 * r.len());
    for (i, &x) in r.iter().enumerate() {
        out.push(x);
        out.push(match r.get(i + 1) {
            Some(&next) => (x + next) * 0.5,
            None => x,
        });
    }
    Ok(out)
}

/// Keeps every even-indexed sample.
pub fn decimate_by_2(r: &[C64]) -> Vec<C64> {
    r.iter().step_by(2).copied().collect()
}
