//! Discrete-event simulator of LTE-LAA and Wi-Fi sharing one unlicensed
//! channel.

pub mod analytic;
pub mod enb;
pub mod engine;
pub mod lbt;
pub mod medium;
pub mod metrics;
pub mod runner;
pub mod sim;
pub mod wifi;
