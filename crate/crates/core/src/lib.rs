//! Two-phase (unimodal to bimodal) behaviour of conditional return
//! distributions in index time series.
//!
//! The pipeline runs from raw minute data to a per-scale verdict:
//!
//! - [`series`] loads and validates `timestamp,value` data against a
//!   [`calendar::Calendar`], splits it into segments and produces one-step
//!   increments, flagging those that cross a session gap.
//! - [`windows`] turns increments into per-window returns `Z` and
//!   fluctuations `r` (mean absolute deviation of the window's increments).
//! - [`conddist`] bins windows by `r`, histograms `Z` per bin, counts modes and
//!   scans time scales for the transition.
//! - [`tailfit`] fits the power-law tail of absolute increments and measures
//!   how well return distributions at different scales collapse.
//! - [`surrogate`] builds i.i.d. power-law increment series with random signs
//!   and runs exponent sweeps on them.

pub mod calendar;
pub mod conddist;
pub mod error;
pub mod series;
pub mod surrogate;
pub mod tailfit;
pub mod windows;

pub use calendar::{Calendar, Session};
pub use conddist::{
    classify, condition, count_modes, scan, BinningParams, ConditionalDistribution,
    DetectorParams, Modality, ModalityReport, PhaseScan, RBinning, ScanParams,
};
pub use error::{Error, Result};
pub use series::{IncrementSeries, Segment, TickPoint, TickSeries};
pub use surrogate::{SurrogateSpec, SweepResult};
pub use tailfit::{CollapseReport, TailFit, TailFitConfig};
pub use windows::{scale_grid, window_stats, WindowStats};
