//! Deterministic island-feeder stability simulator.
//!
//! A radial MV feeder in per-unit ([`netmodel`]) is driven by an aggregate
//! synchronous machine ([`dynamics`]) and a grid-following PV inverter with
//! low-voltage ride-through ([`pvplant`]). Local frequency and RoCoF are
//! measured at the start, middle and end of the feeder and fed to grid-code
//! RoCoF relays ([`protection`]). The inverter controller can run in-process
//! or as a separate process over a lockstep wire protocol ([`hilink`]);
//! both paths produce bit-identical trajectories. [`scenario`] ties it all
//! together into case studies, sweeps, metrics and CSV/JSON output.

pub mod dynamics;
pub mod error;
pub mod hilink;
pub mod netmodel;
pub mod protection;
pub mod pvplant;
pub mod scenario;

pub use error::{Error, Result};

pub use num_complex::Complex64;
