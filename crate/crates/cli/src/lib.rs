//! Harness library: synthetic datasets with analytic ground truth,
//! desk-scale training, equivariance/stability audits, the ablation grid
//! and the data-efficiency sweep.

pub mod ablate;
pub mod audits;
pub mod datasets;
pub mod taskspec;
pub mod train;
