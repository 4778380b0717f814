//! Core library for the wrench pub/sub benchmarking harness: workload
//! generation, wire codec, pacing, transports, the publish/subscribe engine,
//! latency logs and delivery verification.

pub mod clock;
pub mod codec;
pub mod config;
pub mod engine;
pub mod kv;
pub mod latlog;
pub mod manifest;
pub mod pacing;
pub mod scenario;
pub mod transport;
pub mod verify;
pub mod workload;
