//! Economic indices, the contract-invariance check and ratio sweeps.

mod indices;
mod sweep;
mod theorem;

pub use indices::*;
pub use sweep::*;
pub use theorem::*;

use serde::Serialize;

use crate::case::CaseFile;
use crate::der::ProsumerParams;
use crate::grid::Network;
use crate::p2p::{NetTradePlan, P2pError};
use crate::program::{assemble_p1, extract, AssemblyError, Assembled, P1Input, Prices};
use crate::scenario::ScenarioSet;
use crate::solve::{
    complementarity_gap, kkt_audit, relaxation_gap, solve, DispatchResult, GapReport, KktAudit,
    SolveError, SolveOptions, SolveReport, SolveStatus,
};
use crate::Scalar;

/// Largest SOC slack `ℓ − (p²+q²)/v` (pu) accepted as an exact relaxation.
pub const RELAXATION_TOL: f64 = 5e-4;
/// Largest `P^c·P^dis` (MW²) accepted as non-simultaneous storage use.
pub const COMPLEMENTARITY_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    P2p(#[from] P2pError),
    #[error("zero-trade instance did not solve to optimality: {0:?}")]
    BaseNotOptimal(SolveStatus),
    #[error("the case has no sweep section")]
    NoSweepSpec,
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for AnalysisError {
    fn from(e: csv::Error) -> Self {
        AnalysisError::Csv(e.to_string())
    }
}

/// Data shared by every solve of one study; only the trade plan varies.
#[derive(Clone, Debug)]
pub struct Instance<'a, T> {
    pub net: &'a Network<T>,
    pub prosumers: &'a [ProsumerParams<T>],
    pub scenarios: &'a ScenarioSet<T>,
    pub prices: &'a Prices<T>,
    pub options: SolveOptions,
}

impl<'a, T: Scalar> Instance<'a, T> {
    pub fn from_case(case: &'a CaseFile<T>, scenarios: &'a ScenarioSet<T>) -> Self {
        Instance {
            net: &case.network,
            prosumers: &case.prosumers,
            scenarios,
            prices: &case.prices,
            options: case.options.solve,
        }
    }

    pub fn n_p(&self) -> usize {
        self.prosumers.len()
    }

    pub fn horizon(&self) -> usize {
        self.scenarios.horizon
    }

    pub fn zero_plan(&self) -> NetTradePlan {
        NetTradePlan::zero(self.n_p(), self.horizon())
    }

    pub fn input<'b>(&'b self, plan: &'b NetTradePlan) -> P1Input<'b, T> {
        P1Input {
            net: self.net,
            prosumers: self.prosumers,
            scenarios: self.scenarios,
            plan,
            prices: self.prices,
        }
    }

    pub fn solve(&self, plan: &NetTradePlan) -> Result<Solved<T>, AnalysisError> {
        let inp = self.input(plan);
        let assembled = assemble_p1(&inp)?;
        let report = solve(&assembled.program, &self.options)?;
        let result = if report.is_optimal() {
            Some(extract(&assembled, &inp, &report).map_err(AssemblyError::from)?)
        } else {
            None
        };
        Ok(Solved {
            assembled,
            report,
            result,
        })
    }
}

/// One solved instance.
#[derive(Clone, Debug)]
pub struct Solved<T> {
    pub assembled: Assembled<T>,
    pub report: SolveReport<T>,
    /// Present when the solve is optimal.
    pub result: Option<DispatchResult<T>>,
}

/// Post-solve quality checks of an optimal dispatch.
#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    pub relaxation_gap: GapReport<f64>,
    pub complementarity: GapReport<f64>,
    pub kkt: Option<KktAudit>,
    /// Both gaps within [`RELAXATION_TOL`] and [`COMPLEMENTARITY_TOL`].
    pub relaxation_exact: bool,
}

impl<T: Scalar> Solved<T> {
    pub fn is_optimal(&self) -> bool {
        self.result.is_some()
    }

    pub fn diagnostics(&self) -> Option<Diagnostics> {
        let r = self.result.as_ref()?;
        let f = |g: GapReport<T>| GapReport {
            value: g.value.as_f64(),
            site: g.site,
        };
        let gap = f(relaxation_gap(r, &self.assembled.topology));
        let comp = f(complementarity_gap(r));
        Some(Diagnostics {
            relaxation_exact: gap.value <= RELAXATION_TOL && comp.value <= COMPLEMENTARITY_TOL,
            relaxation_gap: gap,
            complementarity: comp,
            kkt: kkt_audit(&self.assembled.program, &self.report),
        })
    }
}
