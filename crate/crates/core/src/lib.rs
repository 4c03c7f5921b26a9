pub mod cli;
pub mod coeffs;
pub mod error;
pub mod inference;
pub mod innovations;
pub mod likelihood;
pub mod mc;
pub mod model;
pub mod optimize;
pub mod rng;
pub mod simulate;
pub mod stationarity;
