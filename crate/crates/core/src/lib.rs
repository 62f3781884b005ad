//! Concurrent evolutionary neural boids.
//!
//! Agents move through a 3D periodic box, each steered by its own recurrent
//! neural controller. Controllers are encoded as flat weight vectors that
//! replicate with mutation whenever an agent's energy crosses a threshold,
//! so evolution runs continuously inside the simulation rather than in
//! discrete generations. Agents exchange two-channel signals attenuated by
//! inverse-square distance and binned into six egocentric directions;
//! signal delivery is computed either by exact pairwise summation or by a
//! Barnes-Hut style octree.
//!
//! The crate ships four environments (signal-driven foraging, a spatial
//! N-player Prisoner's Dilemma, noisy-vision foraging, and a stateless
//! three-rule boids baseline), an offline analysis suite (neighbor series,
//! genotype PCA, Newick phylogeny export, cooperation assortment), and a
//! CLI that runs, resumes, benchmarks, and analyzes simulations.

pub mod analysis;
pub mod bench;
pub mod boids;
pub mod config;
pub mod controller;
pub mod engine;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod logs;
pub mod rng;
pub mod runner;
pub mod signals;
pub mod snapshot;
pub mod tasks;
pub mod treecode;
pub mod vec3;
pub mod world;

pub use error::{ConfigError, IntegrityError, SimFault};
pub use vec3::Vec3;

/// Format version stamped into every artifact this crate writes.
pub const FORMAT_VERSION: u32 = 1;
