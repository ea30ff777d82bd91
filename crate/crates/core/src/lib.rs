//! Quantum adversarial machine-learning laboratory.
//!
//! This crate trains variational quantum-circuit classifiers on classical and
//! quantum data via exact state-vector simulation, generates adversarial
//! examples against them (white-box and black-box), and hardens them by
//! adversarial training. Dataset generators for handwritten-digit images,
//! quantum-anomalous-Hall time-of-flight images, and transverse-field Ising
//! ground states are included, along with a depolarizing-noise benchmark that
//! contrasts random noise with adversarial perturbations.
//!
//! Everything is deterministic under a fixed seed: parallel reductions use a
//! fixed order and all stochastic components draw from per-task derived
//! streams, so results are independent of thread count.

// pub mod attacks;
pub mod classifier;
// pub mod data;
// pub mod defense;
pub mod error;
// pub mod mlp;
// pub mod noise;
mod optim;
// pub mod report;
pub mod rng;
pub mod simulator;

pub use optim::Adam;

pub use error::{Error, Result};
