//! Stochastic day-ahead dispatch of prosumer resources by a distribution
//! system operator, with peer-to-peer contracts treated as fixed data.

pub mod analysis;
pub mod case;
pub mod der;
pub mod fixtures;
pub mod grid;
pub mod p2p;
pub mod program;
pub mod run;
pub mod scenario;
pub mod solve;

mod scalar;

pub use scalar::Scalar;

pub type Network = grid::Network<f64>;
pub type ProsumerParams = der::ProsumerParams<f64>;
pub type Forecast = scenario::Forecast<f64>;
pub type ScenarioSet = scenario::ScenarioSet<f64>;
pub type Prices = program::Prices<f64>;
pub type CaseFile = case::CaseFile<f64>;
pub type DispatchResult = solve::DispatchResult<f64>;
pub type SolveReport = solve::SolveReport<f64>;
pub type Instance<'a> = analysis::Instance<'a, f64>;
