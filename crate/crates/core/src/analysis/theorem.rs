//! Invariance of the dispatch under fixed peer-to-peer trades.
//!
//! From the no-trade optimum, the point with `P^E* = P^E⁰ − P^B` and
//! `E* = E⁰ − Σ_i P^B` (everything else copied) is built and checked for
//! feasibility and optimality in the traded instance. Solved dispatches
//! are not compared variable by variable since optima need not be unique.

use serde::Serialize;

use super::{AnalysisError, Instance, Solved};
use crate::p2p::NetTradePlan;
use crate::program::Symbol;
use crate::solve::{kkt_audit, DispatchResult, KktAudit};
use crate::Scalar;

/// Largest row or cone violation accepted for the constructed point.
pub const CONSTRUCTED_FEAS_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PlanKind {
    Zero,
    /// Net trades cancel in every period.
    Power,
    /// Some period carries a non-zero imbalance.
    Energy,
}

impl PlanKind {
    pub fn of(plan: &NetTradePlan) -> PlanKind {
        if plan.is_zero() {
            PlanKind::Zero
        } else if plan.is_balanced() {
            PlanKind::Power
        } else {
            PlanKind::Energy
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Verdict {
    InvarianceHolds,
    Violated(Vec<String>),
}

#[derive(Clone, Debug, Serialize)]
pub struct TheoremReport {
    pub plan_kind: PlanKind,
    pub tolerance: f64,
    /// Surplus of the no-trade optimum ($).
    pub base_objective: f64,
    /// Surplus of the independently solved traded instance ($).
    pub p2p_objective: f64,
    pub constructed_feasible: bool,
    pub constructed_violation: f64,
    pub constructed_objective: f64,
    /// `max_t |E_t − (E⁰_t − Σ_i P^B_{i,t})|` over the solved traded instance (MW).
    pub e_shift_residual: f64,
    /// `max_t |E_t − E⁰_t|` (MW); checked for power trades only.
    pub e_invariance_residual: f64,
    /// Largest difference in internal dispatch between the two solves (MW);
    /// informational.
    pub dispatch_residual: f64,
    /// Optimality audit of the traded solve.
    pub kkt: Option<KktAudit>,
    pub verdict: Verdict,
}

impl TheoremReport {
    pub fn holds(&self) -> bool {
        self.verdict == Verdict::InvarianceHolds
    }
}

const INTERNAL: [Symbol; 6] = [
    Symbol::Thermal,
    Symbol::ReserveOutput,
    Symbol::Charge,
    Symbol::Discharge,
    Symbol::Curtail,
    Symbol::StoredEnergy,
];

/// The shifted point: market outputs and offered energy move by the trade,
/// all internal dispatch and network quantities stay.
pub fn construct_shifted<T: Scalar>(base: &DispatchResult<T>, plan: &NetTradePlan) -> DispatchResult<T> {
    let mut out = base.clone();
    let d = base.dims;
    for s in 0..d.n_s {
        for i in 0..d.n_p {
            for t in 0..d.horizon {
                let pe = base.market_output(s, i, t) - plan.pb_mw::<T>(i, t);
                out.set(Symbol::MarketOutput, s, i, t, pe);
            }
        }
    }
    for t in 0..d.horizon {
        out.energy[t] = base.energy[t] - plan.imbalance_mw::<T>(t);
    }
    out
}

fn max_abs(it: impl Iterator<Item = f64>) -> f64 {
    it.map(f64::abs).fold(0.0, f64::max)
}

/// Solves the no-trade instance and checks `plan` against it.
pub fn verify_theorem1<T: Scalar>(
    inst: &Instance<'_, T>,
    plan: &NetTradePlan,
    tol: f64,
) -> Result<TheoremReport, AnalysisError> {
    let base = inst.solve(&inst.zero_plan())?;
    verify_against(inst, &base, plan, tol)
}

/// Checks `plan` against an already solved no-trade instance.
pub fn verify_against<T: Scalar>(
    inst: &Instance<'_, T>,
    base: &Solved<T>,
    plan: &NetTradePlan,
    tol: f64,
) -> Result<TheoremReport, AnalysisError> {
    let r0 = base
        .result
        .as_ref()
        .ok_or(AnalysisError::BaseNotOptimal(base.report.status))?;
    let kind = PlanKind::of(plan);
    let traded = inst.solve(plan)?;
    let prog = &traded.assembled.program;

    let shifted = construct_shifted(r0, plan);
    let x = shifted
        .to_primal(traded.assembled.vars())
        .map_err(crate::program::AssemblyError::from)?;
    let violation = prog.max_violation(&x).value.as_f64();
    let constructed_objective = -prog.objective(&x).as_f64();
    let base_objective = base.report.surplus().as_f64();

    let mut problems = Vec::new();
    let feasible = violation <= CONSTRUCTED_FEAS_TOL;
    if !feasible {
        problems.push(format!("constructed point violates the traded instance by {violation:e}"));
    }
    let (p2p_objective, e_shift, e_inv, dispatch) = match &traded.result {
        None => {
            problems.push(format!("traded instance ended {:?}", traded.report.status));
            (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
        }
        Some(r) => {
            let h = r.dims.horizon;
            let e_shift = max_abs((0..h).map(|t| {
                (r.energy[t] - (r0.energy[t] - plan.imbalance_mw::<T>(t))).as_f64()
            }));
            let e_inv = max_abs((0..h).map(|t| (r.energy[t] - r0.energy[t]).as_f64()));
            let dispatch = max_abs(INTERNAL.iter().flat_map(|&sym| {
                r.series(sym)
                    .iter()
                    .zip(r0.series(sym))
                    .map(|(a, b)| (*a - *b).as_f64())
            }));
            (traded.report.surplus().as_f64(), e_shift, e_inv, dispatch)
        }
    };
    if traded.result.is_some() {
        let scale = 1.0 + p2p_objective.abs();
        if (constructed_objective - p2p_objective).abs() > tol * scale {
            problems.push(format!(
                "constructed surplus {constructed_objective} differs from solved {p2p_objective}"
            ));
        }
        if e_shift > tol {
            problems.push(format!("offered energy moved {e_shift:e} MW off the trade imbalance"));
        }
        if kind != PlanKind::Energy {
            if e_inv > tol {
                problems.push(format!("offered energy changed by {e_inv:e} MW"));
            }
            if (p2p_objective - base_objective).abs() > tol * (1.0 + base_objective.abs()) {
                problems.push(format!("surplus changed from {base_objective} to {p2p_objective}"));
            }
        }
    }
    Ok(TheoremReport {
        plan_kind: kind,
        tolerance: tol,
        base_objective,
        p2p_objective,
        constructed_feasible: feasible,
        constructed_violation: violation,
        constructed_objective,
        e_shift_residual: e_shift,
        e_invariance_residual: e_inv,
        dispatch_residual: dispatch,
        kkt: kkt_audit(prog, &traded.report),
        verdict: if problems.is_empty() {
            Verdict::InvarianceHolds
        } else {
            Verdict::Violated(problems)
        },
    })
}
