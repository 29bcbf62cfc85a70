//! Detection metrics `y_u(m)` and exact operation accounting.
//!
//! Three engines compute `y_u(m) = |Σ_n r(n+m)·conj(t_u(n))|²`:
//!
//! - [`mf_correlate`]: the brute-force matched filter, one root at a time.
//! - [`mf_correlate_optimized`]: all three roots at once, folding
//!   `r(n+m) + r(N-n+m)` before multiplying (central symmetry) and sharing
//!   the four real partial products between the conjugate roots 29 and 34.
//! - [`cluster_correlate`] / [`cluster_correlate_bank`]: the template is
//!   replaced by cluster leaders, so received samples of a cluster are summed
//!   first and multiplied once.
//!
//! # Operation counting
//!
//! Counters are incremented where the arithmetic happens. A complex
//! multiplication (CM) is one product of two complex values; a complex add
//! (CA) one complex addition. The magnitude-squared of each correlation
//! output is counted as one CM as well, and tallied separately in
//! `magnitude_squares` (and as three real operations in `real_ops`), so the
//! brute-force total is `N + 1` CM per lag per root.
//!
//! For the folded matched filter, pairing `n` with `N - n` leaves `n = 0`
//! and `n = N/2` unpaired, giving `N/2 + 1` distinct template values per
//! root. Root 25 costs `N/2 + 1` CM per lag; roots 29 and 34 share the real
//! products `ac, bd, bc, ad`, so the pair costs another `N/2 + 1` CM. That is
//! `N + 2` correlation CM per lag for all three roots, or `N/2 + 1` per
//! physical correlator. The measured CA count is `N/2 - 1` folding adds
//! plus `N/2` accumulating adds per root, which is lower than the `3(N-1)`
//! quoted for the unfolded filter.

use crate::clustering::ClusterTable;
use crate::pss::{conjugate_root, pss_time_domain, PssWaveform, LTE_ROOTS};
use crate::{Error, Result, C64};

/// How lags are formed from the received buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagMode {
    /// `r((n + m) mod N)` over the first `N` samples, `m = 0..N`.
    Circular,
    /// `r(n + m)` for `m = 0..lags`; needs `N + lags - 1` samples.
    Sliding { lags: usize },
}

impl LagMode {
    fn lags(self, n: usize) -> usize {
        match self {
            LagMode::Circular => n,
            LagMode::Sliding { lags } => lags,
        }
    }

    fn required(self, n: usize) -> usize {
        match self {
            LagMode::Circular => n,
            LagMode::Sliding { lags } => n + lags.saturating_sub(1),
        }
    }

    fn check(self, r: &[C64], n: usize) -> Result<()> {
        if let LagMode::Sliding { lags: 0 } = self {
            return Err(Error::param("lags", "must be at least 1"));
        }
        let needed = self.required(n);
        if r.len() < needed {
            return Err(Error::BufferTooShort {
                needed,
                got: r.len(),
            });
        }
        Ok(())
    }

    #[inline]
    fn index(self, pos: usize, m: usize, n: usize) -> usize {
        match self {
            LagMode::Circular => (pos + m) % n,
            LagMode::Sliding { .. } => pos + m,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricTrace {
    pub root: u32,
    pub values: Vec<f64>,
    pub lag_mode: LagMode,
}

impl MetricTrace {
    /// Largest value and its lag; ties resolve to the lowest lag.
    pub fn peak(&self) -> (usize, f64) {
        self.values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            })
    }
}

/// Exact arithmetic tally of a correlator run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct OpCount {
    /// Complex multiplications, magnitude-squared included.
    pub complex_mults: u64,
    pub complex_adds: u64,
    /// Magnitude-squared evaluations (each also counted as one CM).
    pub magnitude_squares: u64,
    /// Real multiplies and adds outside complex arithmetic.
    pub real_ops: u64,
    /// Elements moved by a shift register.
    pub data_moves: u64,
    /// Lags evaluated.
    pub lags: u64,
}

impl OpCount {
    /// CM spent in the correlation sums, magnitude excluded.
    pub fn correlation_mults(&self) -> u64 {
        self.complex_mults - self.magnitude_squares
    }

    #[inline]
    fn magnitude(&mut self) {
        self.complex_mults += 1;
        self.magnitude_squares += 1;
        self.real_ops += 3;
    }
}

impl std::ops::AddAssign for OpCount {
    fn add_assign(&mut self, o: Self) {
        self.complex_mults += o.complex_mults;
        self.complex_adds += o.complex_adds;
        self.magnitude_squares += o.magnitude_squares;
        self.real_ops += o.real_ops;
        self.data_moves += o.data_moves;
        self.lags += o.lags;
    }
}

impl std::ops::Add for OpCount {
    type Output = Self;

    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl std::iter::Sum for OpCount {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

/// Brute-force matched filter of `r` against the body of `s`.
pub fn mf_correlate(r: &[C64], s: &PssWaveform, mode: LagMode) -> Result<(MetricTrace, OpCount)> {
    let (values, ops) = mf_raw(r, s.body(), mode)?;
    Ok((
        MetricTrace {
            root: s.root(),
            values,
            lag_mode: mode,
        },
        ops,
    ))
}

fn mf_raw(r: &[C64], template: &[C64], mode: LagMode) -> Result<(Vec<f64>, OpCount)> {
    let n = template.len();
    mode.check(r, n)?;
    let conj: Vec<C64> = template.iter().map(|t| t.conj()).collect();
    let lags = mode.lags(n);
    let mut ops = OpCount::default();
    let values = (0..lags)
        .map(|m| {
            let mut acc = r[mode.index(0, m, n)] * conj[0];
            for (i, c) in conj.iter().enumerate().skip(1) {
                acc += r[mode.index(i, m, n)] * c;
            }
            acc.norm_sqr()
        })
        .collect();
    let (n64, l64) = (n as u64, lags as u64);
    ops.complex_mults = n64 * l64;
    ops.complex_adds = (n64 - 1) * l64;
    ops.lags = l64;
    for _ in 0..lags {
        ops.magnitude();
    }
    Ok((values, ops))
}

/// The three LTE PSS templates at one transform size.
#[derive(Debug, Clone)]
pub struct PssBank {
    size: usize,
    waves: [PssWaveform; 3],
}

impl PssBank {
    pub fn new(size: usize) -> Result<Self> {
        let waves = [
            pss_time_domain(LTE_ROOTS[0], size)?,
            pss_time_domain(LTE_ROOTS[1], size)?,
            pss_time_domain(LTE_ROOTS[2], size)?,
        ];
        Ok(Self { size, waves })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Waveforms in [`LTE_ROOTS`] order.
    pub fn waves(&self) -> &[PssWaveform; 3] {
        &self.waves
    }
}

/// Folded, conjugate-shared matched filter for all three roots.
///
/// Traces are returned in [`LTE_ROOTS`] order. The template of root 34 is
/// taken as `conj(s_29)`.
pub fn mf_correlate_optimized(
    r: &[C64],
    bank: &PssBank,
    mode: LagMode,
) -> Result<([MetricTrace; 3], OpCount)> {
    let n = bank.size;
    mode.check(r, n)?;
    let half = n / 2;
    let s25 = &bank.waves[0].body()[..=half];
    let s29 = &bank.waves[1].body()[..=half];
    let lags = mode.lags(n);
    let mut out = [
        Vec::with_capacity(lags),
        Vec::with_capacity(lags),
        Vec::with_capacity(lags),
    ];
    let mut folded = vec![C64::new(0.0, 0.0); half + 1];
    for m in 0..lags {
        folded[0] = r[mode.index(0, m, n)];
        folded[half] = r[mode.index(half, m, n)];
        for i in 1..half {
            folded[i] = r[mode.index(i, m, n)] + r[mode.index(n - i, m, n)];
        }
        let mut y25 = C64::new(0.0, 0.0);
        let mut y29 = C64::new(0.0, 0.0);
        let mut y34 = C64::new(0.0, 0.0);
        for i in 0..=half {
            y25 += folded[i] * s25[i].conj();
            let (a, b) = (folded[i].re, folded[i].im);
            let (c, d) = (s29[i].re, s29[i].im);
            let (ac, bd, bc, ad) = (a * c, b * d, b * c, a * d);
            y29 += C64::new(ac + bd, bc - ad);
            y34 += C64::new(ac - bd, bc + ad);
        }
        out[0].push(y25.norm_sqr());
        out[1].push(y29.norm_sqr());
        out[2].push(y34.norm_sqr());
    }

    let (h, l) = (half as u64, lags as u64);
    let mut ops = OpCount {
        // Root 25 plus the shared 29/34 products.
        complex_mults: 2 * (h + 1) * l,
        // Folding, then N/2 accumulating adds for each of the three roots.
        complex_adds: ((h - 1) + 3 * h) * l,
        // Two extra real adds per shared product to form both outputs.
        real_ops: 2 * (h + 1) * l,
        lags: l,
        ..Default::default()
    };
    for _ in 0..3 * lags {
        ops.magnitude();
    }
    let [v25, v29, v34] = out;
    let trace = |root, values| MetricTrace {
        root,
        values,
        lag_mode: mode,
    };
    Ok((
        [
            trace(LTE_ROOTS[0], v25),
            trace(LTE_ROOTS[1], v29),
            trace(LTE_ROOTS[2], v34),
        ],
        ops,
    ))
}

/// Data movement strategy of the cluster correlator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Received samples stay in place; the LUT steers `r(π[i] + m)` to the
    /// accumulators.
    LutSteering,
    /// A shift register moves the `N`-sample window for every lag and the
    /// accumulators are hard-wired to register taps `π[i]`.
    ShiftRegister,
}

fn check_table(t: &ClusterTable, n: usize) -> Result<()> {
    if t.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: t.len(),
        });
    }
    Ok(())
}

/// Per-cluster accumulators for every lag, fed through either architecture.
///
/// The summation order is fixed (ascending LUT position within a cluster),
/// so both architectures yield bit-identical sums.
fn accumulate_lags(
    r: &[C64],
    t: &ClusterTable,
    mode: LagMode,
    arch: Architecture,
    mut per_lag: impl FnMut(&[C64]),
    ops: &mut OpCount,
) {
    let n = t.len();
    let lags = mode.lags(n);
    let k = t.num_clusters();
    let offsets = t.offsets();
    let lut = t.lut();
    let mut acc = vec![C64::new(0.0, 0.0); k];
    let fill = |acc: &mut [C64], tap: &dyn Fn(usize) -> C64| {
        for (c, (&start, &size)) in offsets.iter().zip(t.sizes()).enumerate() {
            let members = &lut[start..start + size];
            let mut sum = tap(members[0]);
            for &p in &members[1..] {
                sum += tap(p);
            }
            acc[c] = sum;
        }
    };
    match arch {
        Architecture::LutSteering => {
            for m in 0..lags {
                fill(&mut acc, &|p| r[mode.index(p, m, n)]);
                per_lag(&acc);
            }
        }
        Architecture::ShiftRegister => {
            let mut reg: Vec<C64> = r[..n].to_vec();
            for m in 0..lags {
                if m > 0 {
                    match mode {
                        LagMode::Circular => reg.rotate_left(1),
                        LagMode::Sliding { .. } => {
                            reg.copy_within(1.., 0);
                            reg[n - 1] = r[m + n - 1];
                        }
                    }
                }
                fill(&mut acc, &|p| reg[p]);
                per_lag(&acc);
            }
            // Loading the register for lag 0 and every later shift each
            // touch all N cells.
            ops.data_moves += (n * lags) as u64;
        }
    }
    ops.complex_adds += ((n - k) * lags) as u64;
}

/// Cluster-based correlator for one table.
pub fn cluster_correlate(
    r: &[C64],
    t: &ClusterTable,
    mode: LagMode,
    arch: Architecture,
) -> Result<(MetricTrace, OpCount)> {
    let n = t.len();
    mode.check(r, n)?;
    let lags = mode.lags(n);
    let k = t.num_clusters();
    let leaders: Vec<C64> = t.means().iter().map(|m| m.conj()).collect();
    let mut ops = OpCount::default();
    let mut values = Vec::with_capacity(lags);
    accumulate_lags(
        r,
        t,
        mode,
        arch,
        |acc| {
            let mut y = leaders[0] * acc[0];
            for c in 1..k {
                y += leaders[c] * acc[c];
            }
            values.push(y.norm_sqr());
        },
        &mut ops,
    );
    let (k64, l64) = (k as u64, lags as u64);
    ops.complex_mults += k64 * l64;
    ops.complex_adds += (k64 - 1) * l64;
    ops.lags = l64;
    for _ in 0..lags {
        ops.magnitude();
    }
    Ok((
        MetricTrace {
            root: t.root(),
            values,
            lag_mode: mode,
        },
        ops,
    ))
}

/// Cluster tables for the three roots, with root 34 derived from 29.
#[derive(Debug, Clone)]
pub struct ClusterBank {
    tables: [ClusterTable; 3],
}

impl ClusterBank {
    /// `t25` and `t29` are clustered offline; the 34 table is their
    /// conjugate partner's.
    pub fn new(t25: ClusterTable, t29: ClusterTable) -> Result<Self> {
        if t25.root() != LTE_ROOTS[0] || t29.root() != LTE_ROOTS[1] {
            return Err(Error::param("tables", "expected tables for roots 25 and 29"));
        }
        if t25.len() != t29.len() {
            return Err(Error::LengthMismatch {
                expected: t25.len(),
                got: t29.len(),
            });
        }
        let t34 = crate::clustering::conjugate_table(&t29)?;
        Ok(Self {
            tables: [t25, t29, t34],
        })
    }

    pub fn from_tables(tables: [ClusterTable; 3]) -> Result<Self> {
        let [t25, t29, t34] = tables;
        let bank = Self::new(t25, t29)?;
        if bank.tables[2] != t34 {
            return Err(Error::param("tables", "root 34 table is not the conjugate of root 29"));
        }
        Ok(bank)
    }

    pub fn tables(&self) -> &[ClusterTable; 3] {
        &self.tables
    }

    pub fn size(&self) -> usize {
        self.tables[0].len()
    }
}

/// Cluster correlator for all three roots; 29 and 34 share accumulators and
/// the real partial products of each leader multiplication.
pub fn cluster_correlate_bank(
    r: &[C64],
    bank: &ClusterBank,
    mode: LagMode,
    arch: Architecture,
) -> Result<([MetricTrace; 3], OpCount)> {
    let [t25, t29, _] = &bank.tables;
    debug_assert_eq!(conjugate_root(t29.root()), Some(bank.tables[2].root()));
    let n = t25.len();
    mode.check(r, n)?;
    let lags = mode.lags(n);

    let (first, mut ops) = cluster_correlate(r, t25, mode, arch)?;

    let k = t29.num_clusters();
    let means = t29.means();
    let mut v29 = Vec::with_capacity(lags);
    let mut v34 = Vec::with_capacity(lags);
    let mut pair = OpCount::default();
    accumulate_lags(
        r,
        t29,
        mode,
        arch,
        |acc| {
            let mut y29 = C64::new(0.0, 0.0);
            let mut y34 = C64::new(0.0, 0.0);
            for c in 0..k {
                let (a, b) = (acc[c].re, acc[c].im);
                let (cr, ci) = (means[c].re, means[c].im);
                let (ac, bd, bc, ad) = (a * cr, b * ci, b * cr, a * ci);
                // conj(μ)·acc for 29, μ·acc for 34.
                let p29 = C64::new(ac + bd, bc - ad);
                let p34 = C64::new(ac - bd, bc + ad);
                if c == 0 {
                    (y29, y34) = (p29, p34);
                } else {
                    y29 += p29;
                    y34 += p34;
                }
            }
            v29.push(y29.norm_sqr());
            v34.push(y34.norm_sqr());
        },
        &mut pair,
    );
    let (k64, l64) = (k as u64, lags as u64);
    pair.complex_mults += k64 * l64;
    pair.complex_adds += 2 * (k64 - 1) * l64;
    pair.real_ops += 2 * k64 * l64;
    for _ in 0..2 * lags {
        pair.magnitude();
    }
    ops += pair;
    ops.lags = l64;

    let trace = |root, values| MetricTrace {
        root,
        values,
        lag_mode: mode,
    };
    Ok((
        [first, trace(LTE_ROOTS[1], v29), trace(LTE_ROOTS[2], v34)],
        ops,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceTrace {
    pub values: Vec<f64>,
    /// `max_m |y_cluster - y_mf - I| / max_m max(y_cluster, y_mf)`.
    pub reconstruction_error: f64,
}

/// Relative tolerance for `y_cluster = y_mf + I`.
pub const RECONSTRUCTION_TOLERANCE: f64 = 1e-9;

/// Extra metric `I_u(m)` introduced by replacing `s_u(n)` with `μ_{k(n)}`.
///
/// With `A = Σ r(n+m)·conj(s(n))` and `E = Σ r(n+m)·(conj(μ_{k(n)}) -
/// conj(s(n)))`, the clustered output is `|A + E|²`, so
/// `I = |E|² + 2·Re(A·conj(E))`.
pub fn interference_term(
    r: &[C64],
    t: &ClusterTable,
    s: &PssWaveform,
    mode: LagMode,
) -> Result<InterferenceTrace> {
    let n = s.size();
    check_table(t, n)?;
    mode.check(r, n)?;
    let template = s.body();
    let quantized = t.quantized_template();
    let lags = mode.lags(n);
    let values: Vec<f64> = (0..lags)
        .map(|m| {
            let mut a = C64::new(0.0, 0.0);
            let mut e = C64::new(0.0, 0.0);
            for i in 0..n {
                let x = r[mode.index(i, m, n)];
                a += x * template[i].conj();
                e += x * (quantized[i].conj() - template[i].conj());
            }
            e.norm_sqr() + 2.0 * (a * e.conj()).re
        })
        .collect();

    let (mf, _) = mf_correlate(r, s, mode)?;
    let (cl, _) = cluster_correlate(r, t, mode, Architecture::LutSteering)?;
    let scale = mf
        .values
        .iter()
        .chain(&cl.values)
        .fold(f64::MIN_POSITIVE, |a, &b| a.max(b));
    let reconstruction_error = (0..lags)
        .map(|m| (cl.values[m] - mf.values[m] - values[m]).abs() / scale)
        .fold(0.0, f64::max);
    if reconstruction_error > RECONSTRUCTION_TOLERANCE {
        return Err(Error::param(
            "table",
            format!("interference reconstruction off by {reconstruction_error:e}"),
        ));
    }
    Ok(InterferenceTrace {
        values,
        reconstruction_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{cluster_waveform, KMeansOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_buffer(rng: &mut ChaCha8Rng, len: usize) -> Vec<C64> {
        (0..len)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().fold(0.0f64, |x, &y| x.max(y.abs()));
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
    }

    fn bank(n: usize, k: usize) -> ClusterBank {
        let b = PssBank::new(n).unwrap();
        let o = KMeansOptions::default();
        ClusterBank::new(
            cluster_waveform(&b.waves()[0], k, &o).unwrap(),
            cluster_waveform(&b.waves()[1], k, &o).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn aligned_clean_input_peaks_at_zero() {
        let s = pss_time_domain(25, 128).unwrap();
        let (trace, ops) = mf_correlate(s.body(), &s, LagMode::Circular).unwrap();
        let e = s.energy();
        assert!((trace.values[0] - e * e).abs() < 1e-15);
        assert_eq!(trace.peak().0, 0);
        // Lags 1 and 127 sit inside the band-limited mainlobe.
        let sidelobe = trace.values[3..126].iter().cloned().fold(0.0, f64::max);
        assert!(trace.values[0] / sidelobe >= 4.0);
        assert_eq!(ops.complex_mults, 128 * 129);
        assert_eq!(ops.complex_adds, 128 * 127);
    }

    #[test]
    fn buffer_length_checks() {
        let s = pss_time_domain(25, 64).unwrap();
        assert!(matches!(
            mf_correlate(&vec![C64::new(0.0, 0.0); 63], &s, LagMode::Circular),
            Err(Error::BufferTooShort { needed: 64, got: 63 })
        ));
        assert!(mf_correlate(&vec![C64::new(0.0, 0.0); 70], &s, LagMode::Sliding { lags: 8 }).is_err());
        assert!(mf_correlate(&vec![C64::new(0.0, 0.0); 71], &s, LagMode::Sliding { lags: 8 }).is_ok());
        let b = bank(128, 8);
        assert!(matches!(
            cluster_correlate(&vec![C64::new(0.0, 0.0); 200], &b.tables()[0], LagMode::Sliding { lags: 100 }, Architecture::LutSteering),
            Err(Error::BufferTooShort { .. })
        ));
        assert!(interference_term(&vec![C64::new(0.0, 0.0); 64], &b.tables()[0], &s, LagMode::Circular).is_err());
    }

    #[test]
    fn optimized_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &n in &[64usize, 128] {
            let pb = PssBank::new(n).unwrap();
            for mode in [LagMode::Circular, LagMode::Sliding { lags: 40 }] {
                let r = random_buffer(&mut rng, 2 * n);
                let (traces, _) = mf_correlate_optimized(&r, &pb, mode).unwrap();
                for (t, w) in traces.iter().zip(pb.waves()) {
                    let (brute, _) = mf_correlate(&r, w, mode).unwrap();
                    assert_eq!(t.root, w.root());
                    assert!(rel_err(&t.values, &brute.values) <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn optimized_op_counts() {
        for &(n, per_sample) in &[(64usize, 33u64), (128, 65)] {
            let pb = PssBank::new(n).unwrap();
            let r = vec![C64::new(1.0, 0.0); n];
            let (_, ops) = mf_correlate_optimized(&r, &pb, LagMode::Circular).unwrap();
            let l = n as u64;
            assert_eq!(ops.correlation_mults(), l * (l + 2));
            assert_eq!(ops.correlation_mults() / l / 2, per_sample);
            assert_eq!(ops.magnitude_squares, 3 * l);
        }
    }

    #[test]
    fn singleton_clusters_reproduce_matched_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = bank(128, 128);
        let pb = PssBank::new(128).unwrap();
        let r = random_buffer(&mut rng, 128);
        for (t, w) in b.tables().iter().zip(pb.waves()) {
            let (cl, _) = cluster_correlate(&r, t, LagMode::Circular, Architecture::LutSteering).unwrap();
            let (mf, _) = mf_correlate(&r, w, LagMode::Circular).unwrap();
            assert!(rel_err(&cl.values, &mf.values) <= 1e-10);
        }
    }

    #[test]
    fn architectures_are_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = bank(128, 8);
        for mode in [LagMode::Circular, LagMode::Sliding { lags: 77 }] {
            let r = random_buffer(&mut rng, 300);
            let t = &b.tables()[0];
            let (a, oa) = cluster_correlate(&r, t, mode, Architecture::LutSteering).unwrap();
            let (s, os) = cluster_correlate(&r, t, mode, Architecture::ShiftRegister).unwrap();
            assert_eq!(a.values, s.values);
            assert_eq!(oa.data_moves, 0);
            assert_eq!(os.data_moves, 128 * a.values.len() as u64);
            assert_eq!(oa.complex_mults, os.complex_mults);
        }
    }

    #[test]
    fn bank_matches_single_table_runs_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let b = bank(128, 16);
        let r = random_buffer(&mut rng, 256);
        let mode = LagMode::Sliding { lags: 129 };
        let (traces, ops) = cluster_correlate_bank(&r, &b, mode, Architecture::LutSteering).unwrap();
        for (trace, t) in traces.iter().zip(b.tables()) {
            let (single, _) = cluster_correlate(&r, t, mode, Architecture::LutSteering).unwrap();
            assert_eq!(trace.values, single.values, "root {}", t.root());
        }
        // K CM per lag for 25 and K for the shared 29/34 pair.
        assert_eq!(ops.correlation_mults(), 2 * 16 * 129);
        assert_eq!(ops.magnitude_squares, 3 * 129);
    }

    #[test]
    fn cluster_op_counts() {
        let b = bank(128, 8);
        let r = vec![C64::new(0.5, 0.5); 128];
        let (_, ops) = cluster_correlate(&r, &b.tables()[0], LagMode::Circular, Architecture::LutSteering).unwrap();
        assert_eq!(ops.correlation_mults(), 8 * 128);
        assert_eq!(ops.complex_adds, (128 - 8 + 7) * 128);
    }

    #[test]
    fn interference_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = pss_time_domain(25, 128).unwrap();
        for &k in &[6usize, 8, 16, 128] {
            let t = cluster_waveform(&s, k, &KMeansOptions::default()).unwrap();
            let r = random_buffer(&mut rng, 128);
            let it = interference_term(&r, &t, &s, LagMode::Circular).unwrap();
            assert!(it.reconstruction_error <= 1e-9);
            if k == 128 {
                assert!(it.values.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn interference_shrinks_with_more_clusters() {
        // Evaluated on a clean PSS circularly shifted by 17 samples.
        let s = pss_time_domain(25, 128).unwrap();
        let r: Vec<C64> = (0..128).map(|i| s.body()[(i + 128 - 17) % 128]).collect();
        let mean_abs: Vec<f64> = [6usize, 8, 16]
            .iter()
            .map(|&k| {
                let t = cluster_waveform(&s, k, &KMeansOptions::default()).unwrap();
                let it = interference_term(&r, &t, &s, LagMode::Circular).unwrap();
                it.values.iter().map(|v| v.abs()).sum::<f64>() / 128.0
            })
            .collect();
        assert!(mean_abs[0] > mean_abs[1] && mean_abs[1] > mean_abs[2], "{mean_abs:?}");
    }

    #[test]
    fn op_count_merge_is_associative() {
        let a = OpCount { complex_mults: 3, complex_adds: 1, ..Default::default() };
        let b = OpCount { complex_mults: 5, data_moves: 2, ..Default::default() };
        let c = OpCount { real_ops: 7, lags: 1, ..Default::default() };
        assert_eq!((a + b) + c, a + (b + c));
        assert_eq!([a, b, c].into_iter().sum::<OpCount>(), a + b + c);
    }
}
