//! iQSync: clock-offset recovery for single-photon links.
//!
//! The synchronization pattern interleaves per-bit sub-patterns ("levels") so
//! that the receiver can reconstruct the clock offset bit by bit, starting from
//! the least significant bit, using only integer additions and bit-shifts.
//!
//! The crate is organized around four building blocks:
//!
//! - [`pattern`] — deterministic, streaming generation of the synchronization
//!   pattern from a compact configuration.
//! - [`channel`] — stochastic simulation of the optical link and single-photon
//!   detector, producing the receiver's detection record.
//! - [`recovery`] — the integer-only dichotomic offset recovery algorithm.
//! - [`analytics`] — closed-form success probability, expected time
//!   complexity, tolerable-attenuation solver, and poly-log fitting.
//!
//! # Example
//!
//! ```
//! use iqsync::channel::{simulate_detections, LinkParams};
//! use iqsync::pattern::SyncConfig;
//! use iqsync::recovery::recover_offset;
//!
//! let config = SyncConfig::new(8, 1, 7, 1600).unwrap();
//! let link = LinkParams {
//!     p_sig: 0.2,
//!     p_noise: 1e-5,
//!     offset_timebins: -37,
//!     frac_offset: 0.0,
//!     jitter_sigma: 0.0,
//!     rng_seed: 99,
//! };
//! let detections = simulate_detections(&config, &link).unwrap();
//! let result = recover_offset(8, 1, &detections).unwrap();
//! assert_eq!(result.delta_timebins, -37);
//! ```

pub mod analytics;
pub mod channel;
pub mod pattern;
pub mod recovery;

pub use analytics::{ComplexityPoint, ModelResult, PolyLogFit};
pub use channel::{DetectionSet, LinkParams};
pub use pattern::{LevelSelector, SyncConfig};
pub use recovery::RecoveryResult;
