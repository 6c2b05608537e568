//! Co-simulation and optimization of linear EM systems with nonlinear circuit feeds.
//!
//! The linear EM side is represented by a second-order surrogate system whose
//! transient port response is extracted once and re-coupled to lumped circuits
//! by discrete convolution. Tunable circuit parameters are then optimized with
//! a genetic algorithm against reflection, spectral-distortion, or SINR costs.
//!
//! Module map:
//! - [`signals`]: waveforms, sources, spectra, error norms
//! - [`circuit`]: netlists and the MNA transient solver
//! - [`emport`]: surrogate systems, port extraction, convolution coupling,
//!   and the monolithic self-consistent reference solver
//! - [`array`]: steering vectors, covariance, SINR, tapers
//! - [`optimize`]: the genetic algorithm over mixed design vectors
//! - [`scenarios`]: config-driven end-to-end pipelines and result emission

pub mod array;
pub mod circuit;
pub mod emport;
pub mod optimize;
pub mod scenarios;
pub mod signals;
