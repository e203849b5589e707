//! Two-level resonance dynamics, weak-value extraction, and counting-statistics
//! simulation for precession experiments.
//!
//! The crate is layered bottom-up:
//!
//! - [`pauli`]: complex 2x2 operator algebra over the Pauli basis, including the
//!   closed-form exponential for non-Hermitian generators.
//! - [`dynamics`]: exact pulse propagation, the separated-pulse interferometry
//!   sequence, and a fixed-step RK4 integrator used as an independent oracle.
//! - [`weak`]: weak values of a perturbation between pre- and post-selected
//!   states, first-order probability formulas, and finite-difference extraction.
//! - [`scan`]: frequency sweeps, line-width estimation, and first-order error maps.
//! - [`edm`]: synthetic counting cycles with imperfect selection, fringe fitting,
//!   per-cycle phase extraction, and uncertainty formulas.
//! - [`verify`]: the self-check suite used by both the acceptance tests and the
//!   `qres verify` subcommand.
//!
//! All randomness flows through explicitly seeded ChaCha streams, so every
//! simulation is reproducible byte for byte. The `QRES_THREADS` environment
//! variable caps internal parallelism (default 1); results are index-ordered
//! and independent of the worker count.

pub use num_complex::Complex64 as C64;

pub mod constants;
pub mod dynamics;
pub mod edm;
pub mod pauli;
pub mod scan;
pub mod verify;
pub mod weak;

mod pool;
