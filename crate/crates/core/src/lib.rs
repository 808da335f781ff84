//! Generation, storage and transmission planning under peer-to-peer, pool
//! and mixed bilateral/pool electricity markets.
//!
//! Each design can be solved as one centralized LP ([`central`]) or by
//! distributed price coordination between prosumers, the TSO and the
//! market operators ([`admm`]). [`settlement`] splits a solution into
//! per-agent costs and [`reportio`] handles files.
//!
//! Prices are the multipliers of the coupling rows in the orientation
//! written by the builders, with Lagrangian `objective + λ·(row)`. A
//! prosumer producing at an interior point therefore sees a price of
//! `-vom` on its balance-coupling rows.

pub mod admm;
pub mod agents;
pub mod central;
pub mod model;
pub mod network;
pub mod reportio;
pub mod settlement;

pub use model::{CarbonCapMode, MarketDesign, PlanningSolution, PriceSet, Scenario};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid scenario: {}", format_violations(.0))]
    Invalid(Vec<model::Violation>),
    #[error("unknown prosumer {0}")]
    UnknownProsumer(usize),
    #[error("network: {0}")]
    Network(String),
    #[error("scenario market is {found}, expected {expected}")]
    WrongMarket { expected: MarketDesign, found: MarketDesign },
    #[error("solver: {0}")]
    Solver(#[from] qpcore::QpError),
    #[error("problem is infeasible")]
    Infeasible,
    #[error("problem is unbounded")]
    Unbounded,
    #[error("solver stopped without converging ({0})")]
    NotConverged(String),
    #[error("{agent} subproblem failed at iteration {iteration}: {reason}")]
    Subproblem { agent: String, iteration: usize, reason: String },
    #[error("ADMM diverged at iteration {0}")]
    Diverged(usize),
    #[error("inconsistent agent view: {0}")]
    View(String),
    #[error("missing prices: {0}")]
    MissingPrices(String),
    #[error("{file}: {message}")]
    Data { file: String, message: String },
    #[error("{file}: {source}")]
    Io { file: String, source: std::io::Error },
}

fn format_violations(v: &[model::Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
