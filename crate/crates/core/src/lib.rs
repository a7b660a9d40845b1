//! Spatial correlation statistics and error-bounded lossy compression of 2D
//! scientific fields.
//!
//! The crate is organised around [`Field2D`], a row-major grid of `f64`
//! values. Fields are synthesised as Gaussian random fields with
//! squared-exponential covariance ([`fields::generate_grf`]) or sliced out of
//! raw binary volumes ([`fields::load_raw_field`]). From a field one can
//! compute
//!
//! * the empirical semi-variogram and its fitted correlation range
//!   ([`variogram`]),
//! * windowed statistics: local variogram ranges and local SVD truncation
//!   levels ([`variogram::local_variogram_stats`], [`svdstats`]),
//! * compression ratios under three built-in absolute-error-bounded codecs or
//!   an external compressor ([`codecs`]),
//!
//! and relate the two with the logarithmic model `CR = alpha + beta * ln(x)`
//! ([`regression`]). The [`experiment`] module ties everything together into
//! reproducible sweeps that emit CSV tables.

pub mod codecs;
pub mod experiment;
pub mod fields;
pub mod regression;
pub mod stats;
pub mod svdstats;
pub mod variogram;

pub use fields::{Field2D, GrfSpec, RangeComponent};
pub use stats::LocalStats;
