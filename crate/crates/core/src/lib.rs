//! Clustering-based low-complexity detection of the LTE primary
//! synchronization signal (PSS).
//!
//! The crate is organised along the receive chain:
//!
//! - [`pss`]: Zadoff-Chu sequences, subcarrier mapping and the time-domain PSS.
//! - [`clustering`]: offline Lloyd K-means compression of the PSS template
//!   into a [`ClusterTable`] (cluster leaders plus the permutation LUT).
//! - [`correlator`]: brute-force and symmetry-folded matched filters, the
//!   cluster-based correlator, and exact operation counting.
//! - [`channel`]: multipath, CFO, timing offset and AWGN stream synthesis.
//! - [`detector`]: CFAR threshold calibration, peak detection and the Monte
//!   Carlo harnesses for miss-detection probability and acquisition time.
//! - [`io`]: CSV and raw IQ import/export.

pub mod channel;
pub mod clustering;
pub mod correlator;
pub mod detector;
pub mod io;
pub mod pss;

mod error;
pub mod stats;

pub use error::{Error, Result};

pub use channel::{ChannelScenario, Fading, RxStream};
pub use clustering::{ClusterTable, KMeansOptions};
pub use correlator::{LagMode, MetricTrace, OpCount};
pub use detector::{DetectionResult, Engine, EngineConfig, EngineKind, Threshold};
pub use pss::{PssWaveform, ZcSequence};

/// Complex baseband sample type used throughout the crate.
pub type C64 = num_complex::Complex64;
