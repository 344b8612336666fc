pub mod cli;
pub mod conditionals;
pub mod diagnostics;
pub mod error;
pub mod flops;
pub mod gibbs;
pub mod io;
pub mod model;
pub mod polya_gamma;
pub mod scalar;
pub mod spectral;
pub mod tau;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Dataset64 = model::Dataset<f64>;
pub type Dataset32 = model::Dataset<f32>;
pub type PriorConfig64 = model::PriorConfig<f64>;
pub type SpectralCache64 = spectral::SpectralCache<f64>;
pub type SpectralCache32 = spectral::SpectralCache<f32>;
pub type IntegratorConfig64 = tau::IntegratorConfig<f64>;
pub type CdfGrid64 = tau::CdfGrid<f64>;
pub type CdfGrid32 = tau::CdfGrid<f32>;
pub type ChainSet64 = diagnostics::ChainSet<f64>;
