//! Long-run functionals of controlled Markov processes.
//!
//! This crate evaluates two limit functionals of a controlled diffusion under
//! a fixed Markov control, through piecewise-constant-control discretizations
//! at dyadic step `2^-m`:
//!
//! * the average reward per unit time, and
//! * the risk-sensitive value `(1/(alpha t)) ln E exp(alpha * reward)`.
//!
//! The pipeline is: discretize the model on a grid ([`sde`]), certify that
//! the resulting kernel family mixes uniformly ([`audit`]), then evaluate the
//! functionals exactly on the finite chain ([`avg`], [`risk`]) or by Monte
//! Carlo on the continuous model. Exact and sampled routes are kept as
//! independent implementations so each can check the other.

pub mod audit;
pub mod avg;
pub mod csv_io;
pub mod dyadic;
pub mod error;
pub mod family;
pub mod invariant;
pub mod kernel;
pub mod reward;
pub mod risk;
pub mod rng;
pub mod sde;
pub mod space;
pub mod weight;

pub use audit::{audit, ErgodicityCertificate, KernelFamily};
pub use avg::{average_reward_exact, average_reward_exact_chain, ExactAverage};
pub use dyadic::Dyadic;
pub use error::{CoreError, Result};
pub use invariant::{invariant_measure, InvariantMeasure};
pub use kernel::TransitionKernel;
pub use risk::{
    build_tilted_kernel, perron_oracle, solve_poisson, PoissonSolution, RiskParams, TiltedKernel,
};
pub use space::StateSpace;
pub use weight::{span_seminorm, v_norm_fn, v_norm_measure_diff, LyapunovWeight, WeightedFn};
