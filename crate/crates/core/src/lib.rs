//! Coverage path planning for a grid cleaning robot.
//!
//! The crate bundles a deterministic grid simulator, fixed-size observation
//! encoders, stacked-value reward shaping, PPO and DQN learners on a small
//! hand-differentiated network, scripted Random/Zigzag baselines, and an
//! experiment harness that writes CSV and SVG results.

pub mod bench;
pub mod config;
pub mod mapfile;
pub mod neural;
pub mod percept;
pub mod planners;
pub mod policy_file;
pub mod ppo;
pub mod qlearn;
pub mod seeding;
pub mod shaping;
pub mod train;
pub mod world;

pub use world::{CellKind, GridMap, Heading, StepOutcome, World};
