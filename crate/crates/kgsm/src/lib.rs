//! Randomized Kaczmarz solvers with geometrically smoothed momentum.
//!
//! The crate centers on one iteration family for consistent linear systems
//! `Ax = b`: at each step a row is sampled (by squared norm or uniformly),
//! the iterate is projected toward that row's hyperplane, and an optional
//! momentum term is added. The smoothed variant keeps a geometrically
//! weighted average of past increments,
//!
//! ```text
//! x_{k+1} = x_k + (b_i - <a_i, x_k>) / ||a_i||^2 * a_i + M * y_k
//! y_{k+1} = beta * y_k + (1 - beta) * (x_{k+1} - x_k)
//! ```
//!
//! with `M` in `[0, 1]` and `beta` in `[0, 1)`. Setting `beta = 0` recovers
//! batch-size-1 heavy ball; setting `M = 0` recovers plain Kaczmarz.
//!
//! Alongside the solvers, [`theory`] evaluates the exact expected error
//! along each right singular direction of `A` through a 2x2 companion
//! recurrence: its eigenvalues classify the decay as monotone, critically
//! damped, or oscillatory, and closed forms cover the repeated-eigenvalue
//! and complex-pair regimes. [`experiments`] turns both machinery layers
//! into seeded, byte-reproducible CSV/SVG artifacts, and the `kgsm` binary
//! exposes the whole of it on the command line.
//!
//! Modules:
//! - [`stochastics`]: splittable deterministic RNG, normal draws, weighted row sampling
//! - [`linalg`]: dense kernels, Gram-Schmidt, one-sided Jacobi SVD, 2x2 eigen helpers
//! - [`systems`]: spectrum presets and synthesized test systems with recorded SVDs
//! - [`solvers`]: single steps and instrumented runs for all iteration variants
//! - [`theory`]: companion-matrix analysis and expectation trajectories
//! - [`experiments`]: figure drivers, parameter sweeps, quartile aggregation
//! - [`plot`]: minimal self-contained SVG line charts on a log axis
//! - [`config`]: serializable experiment configuration
//! - [`cli`]: command implementations behind the `kgsm` binary

pub mod cli;
pub mod config;
pub mod experiments;
pub mod linalg;
pub mod plot;
pub mod solvers;
pub mod stochastics;
pub mod systems;
pub mod theory;

pub use solvers::{IterationTrace, Method, MomentumParams};
pub use stochastics::RngStream;
pub use systems::LinearSystem;
pub use theory::CompanionAnalysis;
