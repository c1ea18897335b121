pub mod exec;
pub mod spectral;
pub mod info;
pub mod coverage;
pub mod harness;
pub mod store;
pub mod analysis;
