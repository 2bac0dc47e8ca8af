pub mod config;
pub mod correction;
pub mod engine;
pub mod integrators;
pub mod numerics;
pub mod report;
pub mod rng;
pub mod systems;
