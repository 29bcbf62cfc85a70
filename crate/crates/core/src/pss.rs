//! Zadoff-Chu sequences and the time-domain primary synchronization signal.
//!
//! The PSS for root `u` is built in three steps:
//!
//! 1. the length-63 Zadoff-Chu sequence `d_u(n) = exp(-jπ·u·n(n+1)/63)`;
//! 2. the centre element `d_u(31)` is punctured and the remaining 62 elements
//!    are mapped symmetrically around the (unused) DC subcarrier;
//! 3. an `N`-point transform `s_u(n) = 1/N · Σ_k D_u(k)·exp(-j2πnk/N)`.
//!
//! Two structural facts are used all over the receiver: `s_u(n) = s_u(N-n)`
//! (central symmetry) and `s_u = conj(s_{63-u})` (conjugate roots). Among the
//! LTE roots {25, 29, 34} only 29 and 34 form a conjugate pair.

use std::f64::consts::PI;

use crate::{Error, Result, C64};

/// Zadoff-Chu length used by the LTE PSS.
pub const ZC_LENGTH: usize = 63;

/// The three PSS root indices, ordered by `N_ID^(2)` = 0, 1, 2.
pub const LTE_ROOTS: [u32; 3] = [25, 29, 34];

/// Normal cyclic prefix for the last OFDM symbol of a slot at 1.92 MHz.
pub const NORMAL_CP_1X92: usize = 9;

/// Conjugate partner `L - u` of an LTE root, when that partner is itself an
/// LTE root.
pub fn conjugate_root(root: u32) -> Option<u32> {
    let partner = ZC_LENGTH as u32 - root % ZC_LENGTH as u32;
    LTE_ROOTS
        .contains(&root)
        .then_some(partner)
        .filter(|p| LTE_ROOTS.contains(p))
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZcSequence {
    root: u32,
    values: Vec<C64>,
}

impl ZcSequence {
    pub fn root(&self) -> u32 {
        self.root
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `L' = (L-1)/2`, the index of the centre element.
    pub fn half_len(&self) -> usize {
        (self.values.len() - 1) / 2
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }
}

/// Generates the odd-length Zadoff-Chu sequence of root `root`.
///
/// The exponent `u·n(n+1)` is reduced modulo `2L` in integer arithmetic, so
/// the centre symmetry `d(n) = d(L-1-n)` holds bit for bit.
pub fn zc_sequence(root: u32, length: usize) -> Result<ZcSequence> {
    if length == 0 || length % 2 == 0 {
        return Err(Error::param("length", format!("{length} is not odd")));
    }
    if gcd(root as u64, length as u64) != 1 {
        return Err(Error::param(
            "root",
            format!("{root} is not coprime with {length}"),
        ));
    }
    let modulus = 2 * length as u64;
    let values = (0..length as u64)
        .map(|n| {
            let q = (root as u64 % modulus) * ((n * (n + 1)) % modulus) % modulus;
            C64::from_polar(1.0, -PI * q as f64 / length as f64)
        })
        .collect();
    Ok(ZcSequence { root, values })
}

/// Frequency-domain PSS on an `N`-bin grid.
///
/// Bins are stored in DFT-natural order: index 0 is DC, indices `1..N/2`
/// hold `k = 1..N/2-1` and indices `N/2..N` hold the negative frequencies
/// `k = -N/2..-1` (index `N + k`).
#[derive(Debug, Clone, PartialEq)]
pub struct FreqGrid {
    bins: Vec<C64>,
}

impl FreqGrid {
    pub fn size(&self) -> usize {
        self.bins.len()
    }

    /// Bins in DFT-natural order.
    pub fn bins(&self) -> &[C64] {
        &self.bins
    }

    /// Bin for signed subcarrier index `k` in `-N/2..N/2`.
    pub fn bin(&self, k: i64) -> C64 {
        let n = self.bins.len() as i64;
        self.bins[k.rem_euclid(n) as usize]
    }

    pub fn dc_is_zero(&self) -> bool {
        self.bins[0] == C64::new(0.0, 0.0)
    }
}

/// Maps a length-63 ZC sequence onto 62 subcarriers around DC.
///
/// `k = -31..-1` carries `d(0..=30)` and `k = 1..=31` carries `d(32..=62)`;
/// the centre element `d(31)` is punctured onto the unused DC bin. Written
/// with the punctured 62-element indexing `d'(n) = d(n)` for `n < 31`,
/// `d'(n) = d(n+1)` otherwise, this is `D(k) = d'(k+31)` for negative `k`
/// and `D(k) = d'(k+30)` for positive `k`.
pub fn map_to_subcarriers(zc: &ZcSequence, size: usize) -> Result<FreqGrid> {
    if zc.len() != ZC_LENGTH {
        return Err(Error::LengthMismatch {
            expected: ZC_LENGTH,
            got: zc.len(),
        });
    }
    if size < 64 || size % 2 != 0 {
        return Err(Error::param(
            "size",
            format!("{size}-point grid cannot hold 62 occupied bins plus DC"),
        ));
    }
    let half = zc.half_len() as i64;
    let mut bins = vec![C64::new(0.0, 0.0); size];
    for k in (-half..0).chain(1..=half) {
        bins[k.rem_euclid(size as i64) as usize] = zc.values[(k + half) as usize];
    }
    Ok(FreqGrid { bins })
}

/// Evaluates `s(n) = 1/N · Σ_{k=-N/2}^{N/2-1} D(k)·exp(-j2πnk/N)` directly.
///
/// The phase index `n·k mod N` is reduced in integers and looked up in a
/// twiddle table, which keeps the result within a few ulps of the exact sum.
pub fn synthesize(grid: &FreqGrid) -> Vec<C64> {
    let n_fft = grid.size();
    let twiddle: Vec<C64> = (0..n_fft)
        .map(|j| C64::from_polar(1.0, -2.0 * PI * j as f64 / n_fft as f64))
        .collect();
    let half = (n_fft / 2) as i64;
    let scale = 1.0 / n_fft as f64;
    (0..n_fft as i64)
        .map(|n| {
            let acc: C64 = (-half..half)
                .map(|k| grid.bin(k) * twiddle[(n * k).rem_euclid(n_fft as i64) as usize])
                .sum();
            acc * scale
        })
        .collect()
}

/// A time-domain PSS symbol, optionally preceded by a cyclic prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct PssWaveform {
    root: u32,
    size: usize,
    cp_len: usize,
    samples: Vec<C64>,
}

impl PssWaveform {
    pub fn root(&self) -> u32 {
        self.root
    }

    /// Transform size `N` (length of the symbol body).
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn cp_len(&self) -> usize {
        self.cp_len
    }

    /// Full transmitted symbol: `cp_len` prefix samples followed by the body.
    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    /// The `N` body samples `s_u(0..N)`, without the prefix.
    pub fn body(&self) -> &[C64] {
        &self.samples[self.cp_len..]
    }

    pub fn energy(&self) -> f64 {
        self.body().iter().map(|s| s.norm_sqr()).sum()
    }

    pub fn conj(&self) -> PssWaveform {
        PssWaveform {
            root: ZC_LENGTH as u32 - self.root,
            size: self.size,
            cp_len: self.cp_len,
            samples: self.samples.iter().map(|s| s.conj()).collect(),
        }
    }
}

/// Time-domain PSS of root `root` on an `N`-point grid, `N ∈ {64, 128}`.
pub fn pss_time_domain(root: u32, size: usize) -> Result<PssWaveform> {
    if size != 64 && size != 128 {
        return Err(Error::param(
            "size",
            format!("{size} (supported: 64, 128)"),
        ));
    }
    let zc = zc_sequence(root, ZC_LENGTH)?;
    let grid = map_to_subcarriers(&zc, size)?;
    Ok(PssWaveform {
        root,
        size,
        cp_len: 0,
        samples: synthesize(&grid),
    })
}

/// Prepends a cyclic prefix of `cp_len` samples, replacing any existing one.
pub fn add_cyclic_prefix(w: &PssWaveform, cp_len: usize) -> Result<PssWaveform> {
    let body = w.body();
    if cp_len > body.len() {
        return Err(Error::param(
            "cp_len",
            format!("{cp_len} exceeds symbol length {}", body.len()),
        ));
    }
    let mut samples = Vec::with_capacity(cp_len + body.len());
    samples.extend_from_slice(&body[body.len() - cp_len..]);
    samples.extend_from_slice(body);
    Ok(PssWaveform {
        root: w.root,
        size: w.size,
        cp_len,
        samples,
    })
}
