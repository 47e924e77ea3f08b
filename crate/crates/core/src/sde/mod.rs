//! Discretization of controlled diffusions: models, simulation, and
//! finite-chain extraction.

pub mod extract;
pub mod model;
pub mod simulate;

pub use extract::{
    aggregate_on_grid, empirical_unit_kernel, unit_reward_aggregate, AggregateEstimate,
};
pub use model::{
    by_name, DiscretizationLevel, Domain, MarkovControl, SdeModel, DEFAULT_INNER_SUBSTEPS,
};
pub use simulate::{simulate, simulate_path, simulate_reflected_path, SamplePath};
