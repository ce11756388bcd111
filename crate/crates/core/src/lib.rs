//! Compile Turing machines into polynomial dynamics and verify every stage
//! against the exact discrete simulator.
//!
//! The pipeline: a machine is arithmetized on ℕ³ (`tm`), extended to a robust
//! analytic step map (`analytic`), compiled to an autonomous polynomial vector
//! field with a halting region (`pivp`), lifted to the sphere (`sphere`), and
//! integrated with event detection (`flow`). `euler` reproduces the dimension
//! accounting for the Euler-embedding target manifold, and `poly` provides the
//! exact symbolic substrate shared by all of it.

pub mod analytic;
pub mod config;
pub mod corpus;
pub mod euler;
pub mod flow;
pub mod pivp;
pub mod poly;
pub mod scalar;
pub mod sphere;
pub mod tm;
