pub mod domain;
pub mod dualwrite;
pub mod duration;
pub mod healing;
pub mod metrics;
pub mod ramp;
pub mod rng;
pub mod schemas;
pub mod sim;
pub mod stores;
pub mod verifiers;
