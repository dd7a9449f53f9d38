//! Interior-point backend, solution extraction and ex-post diagnostics.
//!
//! The sealed program is handed to Clarabel in its native form
//! `min ½xᵀPx + cᵀx  s.t.  Ax + s = b, s ∈ K` with `K` the product of the
//! zero cone (equality rows), the nonnegative orthant (`≤` rows) and one
//! second-order cone per cone membership.

use std::collections::BTreeMap;
use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};

use crate::program::{
    ConicProgram, Dims, MissingVariable, RowKind, Site, Symbol, VarKey, VariableMap,
};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub max_iter: u32,
    #[serde(default)]
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            feas_tol: 1e-8,
            opt_tol: 1e-8,
            max_iter: 200,
            verbose: false,
        }
    }
}

/// Multipliers in the Lagrangian `f + Σλ·(aᵀx − b) + Σμ·(aᵀx − b) − Σ zᵀe(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Duals<T> {
    /// One per equality row, in program order.
    pub eq: Vec<T>,
    /// One per `≤` row, nonnegative.
    pub ineq: Vec<T>,
    /// One vector per cone, in the dual (self-dual) cone.
    pub cones: Vec<Vec<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport<T> {
    pub status: SolveStatus,
    /// Backend status name, kept for logs.
    pub backend_status: String,
    /// Minimized objective including the constant term.
    pub objective: T,
    pub primal: Vec<T>,
    pub duals: Option<Duals<T>>,
    pub iterations: u32,
    pub runtime_s: f64,
    /// Worst row or cone violation of `primal`.
    pub max_violation: T,
}

impl<T: Scalar> SolveReport<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Maximized surplus, the negated objective.
    pub fn surplus(&self) -> T {
        -self.objective
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("backend rejected the problem data: {0}")]
    Backend(String),
}

/// Solves a sealed program. Deterministic for identical inputs and options.
///
/// A reduced-accuracy result counts as optimal only when the returned point
/// passes the feasibility check at 100× `feas_tol`.
pub fn solve<T: Scalar>(
    prog: &ConicProgram<T>,
    opts: &SolveOptions,
) -> Result<SolveReport<T>, SolveError> {
    let n = prog.n_vars();
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut b = Vec::new();
    let mut m = 0usize;
    for row in prog.eq_rows().iter().chain(prog.ineq_rows()) {
        for &(j, a) in &row.terms {
            rows.push(m);
            cols.push(j);
            vals.push(a);
        }
        b.push(row.rhs);
        m += 1;
    }
    let mut cones = Vec::new();
    if !prog.eq_rows().is_empty() {
        cones.push(SupportedConeT::ZeroConeT(prog.eq_rows().len()));
    }
    if !prog.ineq_rows().is_empty() {
        cones.push(SupportedConeT::NonnegativeConeT(prog.ineq_rows().len()));
    }
    // s = e(x) = g + Gx  ⇒  −Gx + s = g
    for cone in prog.cones() {
        let entries = cone.standard_entries();
        for e in &entries {
            for &(j, a) in &e.terms {
                rows.push(m);
                cols.push(j);
                vals.push(-a);
            }
            b.push(e.constant);
            m += 1;
        }
        cones.push(SupportedConeT::SecondOrderConeT(entries.len()));
    }
    let a_mat = CscMatrix::new_from_triplets(m, n, rows, cols, vals);

    let (pi, pv): (Vec<usize>, Vec<T>) = prog
        .quadratic()
        .iter()
        .map(|&(j, q)| (j, T::two() * q))
        .unzip();
    let p_mat = CscMatrix::new_from_triplets(n, n, pi.clone(), pi, pv);

    let settings = DefaultSettingsBuilder::default()
        .max_iter(opts.max_iter)
        .tol_feas(T::of(opts.feas_tol))
        .tol_gap_abs(T::of(opts.opt_tol))
        .tol_gap_rel(T::of(opts.opt_tol))
        .verbose(opts.verbose)
        .max_threads(1)
        .equilibrate_max_iter(50)
        .build()
        .map_err(|e| SolveError::Backend(e.to_string()))?;

    let started = Instant::now();
    let mut solver = DefaultSolver::new(&p_mat, prog.linear(), &a_mat, &b, &cones, settings)
        .map_err(|e| SolveError::Backend(e.to_string()))?;
    solver.solve();
    let runtime_s = started.elapsed().as_secs_f64();
    let sol = &solver.solution;

    let primal = sol.x.clone();
    let violation = prog.max_violation(&primal).value;
    let status = match sol.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved if violation.as_f64() <= 100.0 * opts.feas_tol => {
            SolveStatus::Optimal
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            SolveStatus::Unbounded
        }
        _ => SolveStatus::NumericalFailure,
    };
    let duals = (status == SolveStatus::Optimal).then(|| {
        let n_eq = prog.eq_rows().len();
        let n_in = prog.ineq_rows().len();
        let mut at = n_eq + n_in;
        let cone_duals = prog
            .cones()
            .iter()
            .map(|c| {
                let d = sol.z[at..at + c.dim()].to_vec();
                at += c.dim();
                d
            })
            .collect();
        Duals {
            eq: sol.z[..n_eq].to_vec(),
            ineq: sol.z[n_eq..n_eq + n_in].to_vec(),
            cones: cone_duals,
        }
    });
    log::debug!(
        "solve: {:?} after {} iterations in {:.3}s",
        sol.status,
        sol.iterations,
        runtime_s
    );
    Ok(SolveReport {
        status,
        backend_status: format!("{:?}", sol.status),
        objective: prog.objective(&primal),
        primal,
        duals,
        iterations: sol.iterations,
        runtime_s,
        max_violation: violation,
    })
}

/// Residuals of the first-order optimality conditions at a solved point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktAudit {
    /// `‖∇f + Aᵀλ + Aᵀμ − Jᵀz‖∞ / (1 + max(‖∇f‖∞, ‖Aᵀy‖∞))`.
    pub stationarity: f64,
    /// Largest `μₙ·|fₙ(x)|` over `≤` rows and `zᵀe(x)` over cones.
    pub complementary_slackness: f64,
    pub primal_feasibility: f64,
    /// Most negative multiplier of a `≤` row, or cone-dual violation.
    pub dual_feasibility: f64,
}

/// Audits a report against the program it came from. `None` without duals.
pub fn kkt_audit<T: Scalar>(prog: &ConicProgram<T>, report: &SolveReport<T>) -> Option<KktAudit> {
    let duals = report.duals.as_ref()?;
    let x = &report.primal;
    let grad = prog.objective_gradient(x);
    let mut aty = vec![0.0f64; prog.n_vars()];
    for (row, &y) in prog.eq_rows().iter().zip(&duals.eq) {
        for &(j, a) in &row.terms {
            aty[j] += a.as_f64() * y.as_f64();
        }
    }
    let mut slack = 0.0f64;
    let mut dual_neg = 0.0f64;
    for (row, &mu) in prog.ineq_rows().iter().zip(&duals.ineq) {
        for &(j, a) in &row.terms {
            aty[j] += a.as_f64() * mu.as_f64();
        }
        slack = slack.max((mu.as_f64() * row.residual(x).as_f64()).abs());
        dual_neg = dual_neg.max(-mu.as_f64());
    }
    for (cone, z) in prog.cones().iter().zip(&duals.cones) {
        let entries = cone.standard_entries();
        let mut zs = 0.0;
        for (e, &zk) in entries.iter().zip(z) {
            for &(j, a) in &e.terms {
                aty[j] -= a.as_f64() * zk.as_f64();
            }
            zs += zk.as_f64() * e.eval(x).as_f64();
        }
        slack = slack.max(zs.abs());
        let tail = z[1..].iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
        dual_neg = dual_neg.max(tail - z[0].as_f64());
    }
    let g_norm = grad.iter().map(|g| g.as_f64().abs()).fold(0.0, f64::max);
    let aty_norm = aty.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let resid = grad
        .iter()
        .zip(&aty)
        .map(|(g, a)| (g.as_f64() + a).abs())
        .fold(0.0, f64::max);
    Some(KktAudit {
        stationarity: resid / (1.0 + g_norm.max(aty_norm)),
        complementary_slackness: slack,
        primal_feasibility: report.max_violation.as_f64(),
        dual_feasibility: dual_neg.max(0.0),
    })
}

/// Surplus decomposition of a dispatch ($).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SurplusBreakdown<T> {
    pub energy_revenue: T,
    pub reserve_revenue: T,
    /// Expected prosumer utility.
    pub utility: T,
    /// Expected generation and degradation cost.
    pub cost: T,
    pub total: T,
}

/// Market quantities and dispatch read back from a primal vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult<T> {
    pub dims: Dims,
    /// `E_t` (MW).
    pub energy: Vec<T>,
    /// `R_t` (MW).
    pub reserve: Vec<T>,
    /// Per-symbol values laid out `[s][entity][t]`.
    series: BTreeMap<Symbol, Vec<T>>,
    pub objective: SurplusBreakdown<T>,
}

fn entity_count(dims: &Dims, sym: Symbol) -> usize {
    if Symbol::PROSUMER.contains(&sym) {
        dims.n_p
    } else if Symbol::BUS.contains(&sym) {
        dims.n_bus
    } else if Symbol::BRANCH.contains(&sym) {
        dims.n_branch
    } else {
        1
    }
}

const SERIES: [Symbol; 16] = [
    Symbol::MarketOutput,
    Symbol::ReserveOutput,
    Symbol::Thermal,
    Symbol::Charge,
    Symbol::Discharge,
    Symbol::Curtail,
    Symbol::StoredEnergy,
    Symbol::Degradation,
    Symbol::NodeP,
    Symbol::NodeQ,
    Symbol::VoltageSq,
    Symbol::FlowP,
    Symbol::FlowQ,
    Symbol::CurrentSq,
    Symbol::FeederP,
    Symbol::FeederQ,
];

impl<T: Scalar> DispatchResult<T> {
    pub fn zeros(dims: Dims) -> Self {
        let series = SERIES
            .iter()
            .map(|&sym| {
                let len = dims.n_s * entity_count(&dims, sym) * dims.horizon;
                (sym, vec![T::zero(); len])
            })
            .collect();
        DispatchResult {
            dims,
            energy: vec![T::zero(); dims.horizon],
            reserve: vec![T::zero(); dims.horizon],
            series,
            objective: SurplusBreakdown::default(),
        }
    }

    /// Reads every model column from `x`.
    pub fn from_primal(vars: &VariableMap, dims: Dims, x: &[T]) -> Result<Self, MissingVariable> {
        let mut out = Self::zeros(dims);
        for t in 0..dims.horizon {
            out.energy[t] = x[vars.require(VarKey::ex_ante(Symbol::Energy, t))?];
            out.reserve[t] = x[vars.require(VarKey::ex_ante(Symbol::Reserve, t))?];
        }
        for sym in SERIES {
            for s in 0..dims.n_s {
                for e in 0..entity_count(&dims, sym) {
                    for t in 0..dims.horizon {
                        let v = x[vars.require(VarKey::at(sym, s, e, t))?];
                        out.set(sym, s, e, t, v);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Writes the result back into a primal vector laid out by `vars`.
    pub fn to_primal(&self, vars: &VariableMap) -> Result<Vec<T>, MissingVariable> {
        let mut x = vec![T::zero(); vars.len()];
        for t in 0..self.dims.horizon {
            x[vars.require(VarKey::ex_ante(Symbol::Energy, t))?] = self.energy[t];
            x[vars.require(VarKey::ex_ante(Symbol::Reserve, t))?] = self.reserve[t];
        }
        for sym in SERIES {
            for s in 0..self.dims.n_s {
                for e in 0..entity_count(&self.dims, sym) {
                    for t in 0..self.dims.horizon {
                        x[vars.require(VarKey::at(sym, s, e, t))?] = self.value(sym, s, e, t);
                    }
                }
            }
        }
        Ok(x)
    }

    fn offset(&self, sym: Symbol, s: usize, e: usize, t: usize) -> usize {
        let d = &self.dims;
        (s * entity_count(d, sym) + e) * d.horizon + t
    }

    /// Value of a scenario-indexed symbol.
    ///
    /// # Panics
    /// On `Energy`, `Reserve` or `QuadEpigraph`, or out-of-range indices.
    pub fn value(&self, sym: Symbol, s: usize, e: usize, t: usize) -> T {
        self.series[&sym][self.offset(sym, s, e, t)]
    }

    pub fn set(&mut self, sym: Symbol, s: usize, e: usize, t: usize, v: T) {
        let at = self.offset(sym, s, e, t);
        self.series.get_mut(&sym).expect("scenario-indexed symbol")[at] = v;
    }

    pub fn series(&self, sym: Symbol) -> &[T] {
        &self.series[&sym]
    }

    pub fn ell(&self, s: usize, b: usize, t: usize) -> T {
        self.value(Symbol::CurrentSq, s, b, t)
    }

    pub fn market_output(&self, s: usize, i: usize, t: usize) -> T {
        self.value(Symbol::MarketOutput, s, i, t)
    }

    pub fn has_nan(&self) -> bool {
        self.energy
            .iter()
            .chain(&self.reserve)
            .chain(self.series.values().flatten())
            .any(|v| v.is_nan())
    }
}

/// Location of an extreme diagnostic value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport<T> {
    pub value: T,
    pub site: Site,
}

/// Largest `ℓ − (p² + q²)/v_down` over scenarios, branches and periods.
pub fn relaxation_gap<T: Scalar>(
    result: &DispatchResult<T>,
    topo: &crate::grid::Topology,
) -> GapReport<T> {
    let d = result.dims;
    let mut worst = GapReport {
        value: T::zero(),
        site: Site::default(),
    };
    for s in 0..d.n_s {
        for b in 0..d.n_branch {
            let j = topo.downstream(b);
            for t in 0..d.horizon {
                let p = result.value(Symbol::FlowP, s, b, t);
                let q = result.value(Symbol::FlowQ, s, b, t);
                let v = result.value(Symbol::VoltageSq, s, j, t);
                let gap = result.ell(s, b, t) - (p * p + q * q) / v;
                if gap > worst.value {
                    worst = GapReport {
                        value: gap,
                        site: Site::new(s, b, t),
                    };
                }
            }
        }
    }
    worst
}

/// Largest simultaneous `P^c·P^dis` over scenarios, prosumers and periods.
pub fn complementarity_gap<T: Scalar>(result: &DispatchResult<T>) -> GapReport<T> {
    let d = result.dims;
    let mut worst = GapReport {
        value: T::zero(),
        site: Site::default(),
    };
    for s in 0..d.n_s {
        for i in 0..d.n_p {
            for t in 0..d.horizon {
                let c = result.value(Symbol::Charge, s, i, t).max(T::zero());
                let dis = result.value(Symbol::Discharge, s, i, t).max(T::zero());
                if c * dis > worst.value {
                    worst = GapReport {
                        value: c * dis,
                        site: Site::new(s, i, t),
                    };
                }
            }
        }
    }
    worst
}

/// Rows of `kind` that are violated by more than `tol` at `x`.
pub fn violated_rows<T: Scalar>(
    prog: &ConicProgram<T>,
    x: &[T],
    kind: RowKind,
    tol: T,
) -> Vec<Site> {
    prog.rows()
        .filter(|r| r.kind == kind && r.violation(x) > tol)
        .map(|r| r.site)
        .collect()
}
