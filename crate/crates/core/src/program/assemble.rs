//! Assembly of the stochastic dispatch program and the independent
//! recomputation of its surplus from a dispatch.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    ConicProgram, ConstraintBlock, Dims, MissingVariable, ObjTerm, ProgramBuilder, Row, RowKind,
    SealError, Site, Symbol, VarKey, VariableMap,
};
use crate::der::{prosumer_blocks, ProsumerParams};
use crate::grid::{build_distflow_block, reactive_demand, BusInjection, GridError, Network, Topology};
use crate::p2p::NetTradePlan;
use crate::scenario::ScenarioSet;
use crate::solve::{DispatchResult, SolveReport, SurplusBreakdown};
use crate::Scalar;

/// Day-ahead energy and reserve prices ($/MWh).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prices<T> {
    pub energy: Vec<T>,
    pub reserve: Vec<T>,
}

/// Everything the dispatch program is built from.
#[derive(Clone, Copy, Debug)]
pub struct P1Input<'a, T> {
    pub net: &'a Network<T>,
    pub prosumers: &'a [ProsumerParams<T>],
    pub scenarios: &'a ScenarioSet<T>,
    pub plan: &'a NetTradePlan,
    pub prices: &'a Prices<T>,
}

#[derive(Debug, thiserror::Error)]
pub enum AssemblyError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("prosumer {0} is not placed on any bus")]
    UnplacedProsumer(usize),
    #[error("bus {bus} hosts prosumer {prosumer}, which does not exist")]
    UnknownProsumer { bus: usize, prosumer: usize },
    #[error("invalid prosumer data: {}", .0.join("; "))]
    Prosumer(Vec<String>),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Missing(#[from] MissingVariable),
    #[error(transparent)]
    Seal(#[from] SealError),
}

/// Sealed program with the layout facts needed to read results back.
#[derive(Clone, Debug)]
pub struct Assembled<T> {
    pub program: ConicProgram<T>,
    pub dims: Dims,
    pub topology: Topology,
}

impl<T: Scalar> Assembled<T> {
    pub fn vars(&self) -> &VariableMap {
        self.program.vars()
    }
}

fn check_dims<T: Scalar>(inp: &P1Input<'_, T>) -> Result<Dims, AssemblyError> {
    let sc = inp.scenarios;
    let horizon = sc.horizon;
    let n_p = inp.prosumers.len();
    let dim = |msg: String| Err(AssemblyError::Dimension(msg));
    if horizon == 0 {
        return dim("empty horizon".into());
    }
    if sc.n_p != n_p {
        return dim(format!("scenarios cover {} prosumers, case has {n_p}", sc.n_p));
    }
    if inp.plan.n_p != n_p || inp.plan.horizon != horizon {
        return dim(format!(
            "trade plan is {}x{}, expected {n_p}x{horizon}",
            inp.plan.n_p, inp.plan.horizon
        ));
    }
    if inp.prices.energy.len() != horizon || inp.prices.reserve.len() != horizon {
        return dim(format!("price vectors must have {horizon} entries"));
    }
    sc.check()
        .map_err(|e| AssemblyError::Dimension(e.to_string()))?;
    for (k, p) in inp.prosumers.iter().enumerate() {
        if p.i != k {
            return dim(format!("prosumer at position {k} carries index {}", p.i));
        }
    }
    let problems: Vec<String> = inp
        .prosumers
        .iter()
        .flat_map(|p| p.validate(horizon))
        .collect();
    if !problems.is_empty() {
        return Err(AssemblyError::Prosumer(problems));
    }
    for (b, bus) in inp.net.buses.iter().enumerate() {
        if let Some(i) = bus.prosumer {
            if i >= n_p {
                return Err(AssemblyError::UnknownProsumer { bus: b, prosumer: i });
            }
        }
    }
    for i in 0..n_p {
        if inp.net.bus_of(i).is_none() {
            return Err(AssemblyError::UnplacedProsumer(i));
        }
    }
    Ok(Dims {
        n_s: sc.n_s,
        n_p,
        n_bus: inp.net.n_bus(),
        n_branch: inp.net.n_branch(),
        horizon,
    })
}

/// Expected load of prosumer `i` in period `t` over the scenario weights.
fn expected_load<T: Scalar>(sc: &ScenarioSet<T>, i: usize, t: usize) -> T {
    (0..sc.n_s).fold(T::zero(), |acc, s| acc + sc.omega[s] * sc.load(s, i, t))
}

/// Market coupling for one scenario and period: the offered energy equals
/// the prosumers' market output net of network losses, and the offered
/// reserve equals the prosumers' reserve.
fn coupling_rows<T: Scalar>(
    net: &Network<T>,
    n_p: usize,
    s: usize,
    t: usize,
    vars: &VariableMap,
) -> Result<ConstraintBlock<T>, MissingVariable> {
    let site = Site::new(s, 0, t);
    let one = T::one();
    let mut energy = vec![(vars.require(VarKey::ex_ante(Symbol::Energy, t))?, one)];
    let mut reserve = vec![(vars.require(VarKey::ex_ante(Symbol::Reserve, t))?, one)];
    for i in 0..n_p {
        energy.push((vars.require(VarKey::at(Symbol::MarketOutput, s, i, t))?, -one));
        reserve.push((vars.require(VarKey::at(Symbol::ReserveOutput, s, i, t))?, -one));
    }
    for (b, br) in net.branches.iter().enumerate() {
        energy.push((
            vars.require(VarKey::at(Symbol::CurrentSq, s, b, t))?,
            br.r * net.s_base,
        ));
    }
    let mut block = ConstraintBlock::new();
    block
        .rows
        .push(Row::eq(RowKind::EnergyCoupling, site, energy, T::zero()));
    block
        .rows
        .push(Row::eq(RowKind::ReserveCoupling, site, reserve, T::zero()));
    Ok(block)
}

fn scenario_block<T: Scalar>(
    inp: &P1Input<'_, T>,
    topo: &Topology,
    qd: &[Vec<T>],
    s: usize,
    vars: &VariableMap,
) -> Result<ConstraintBlock<T>, AssemblyError> {
    let sc = inp.scenarios;
    let mut block = ConstraintBlock::new();
    for t in 0..sc.horizon {
        for p in inp.prosumers {
            let i = p.i;
            block.extend(prosumer_blocks(
                p,
                inp.plan.pb_mw(i, t),
                sc.pv(s, i, t),
                sc.load(s, i, t),
                s,
                t,
                vars,
            )?);
        }
        let injections: Vec<BusInjection<T>> = inp
            .net
            .buses
            .iter()
            .map(|bus| match bus.prosumer {
                Some(i) => BusInjection {
                    p2p: inp.plan.pb_mw(i, t),
                    qd: qd[i][t],
                },
                None => BusInjection::default(),
            })
            .collect();
        block.extend(build_distflow_block(inp.net, topo, s, t, vars, &injections)?);
        block.extend(coupling_rows(inp.net, inp.prosumers.len(), s, t, vars)?);
    }
    Ok(block)
}

/// Builds and seals the stochastic dispatch program.
///
/// Scenario blocks are assembled in parallel and merged in scenario order,
/// so the row order is reproducible. Reactive demand uses the expected load.
pub fn assemble_p1<T: Scalar>(inp: &P1Input<'_, T>) -> Result<Assembled<T>, AssemblyError> {
    let dims = check_dims(inp)?;
    let topology = inp.net.topology()?;
    let vars = VariableMap::for_dims(&dims);

    let qd: Vec<Vec<T>> = (0..dims.n_p)
        .map(|i| {
            let pf = inp.net.buses[inp.net.bus_of(i).expect("checked")].reactive_pf;
            (0..dims.horizon)
                .map(|t| reactive_demand(expected_load(inp.scenarios, i, t), pf))
                .collect()
        })
        .collect();

    let blocks: Vec<ConstraintBlock<T>> = (0..dims.n_s)
        .into_par_iter()
        .map(|s| scenario_block(inp, &topology, &qd, s, &vars))
        .collect::<Result<_, _>>()?;

    let mut builder = ProgramBuilder::new(vars);
    for (s, block) in blocks.into_iter().enumerate() {
        builder.add_block(block, inp.scenarios.omega[s]);
    }
    let e_max = inp.net.e_ex_max;
    let one = T::one();
    for t in 0..dims.horizon {
        let site = Site::new(0, 0, t);
        let e = builder.vars().require(VarKey::ex_ante(Symbol::Energy, t))?;
        let r = builder.vars().require(VarKey::ex_ante(Symbol::Reserve, t))?;
        builder.add_row(Row::le(RowKind::ExchangeUpper, site, vec![(e, one)], e_max));
        builder.add_row(Row::ge(RowKind::ExchangeLower, site, vec![(e, one)], -e_max));
        builder.add_row(Row::le(
            RowKind::ExchangeReserveUpper,
            site,
            vec![(e, one), (r, one)],
            e_max,
        ));
        builder.add_row(Row::ge(
            RowKind::ExchangeReserveLower,
            site,
            vec![(e, one), (r, one)],
            -e_max,
        ));
        builder.add_surplus(ObjTerm::Linear(e, inp.prices.energy[t]), one);
        builder.add_surplus(ObjTerm::Linear(r, inp.prices.reserve[t]), one);
    }
    Ok(Assembled {
        program: builder.seal()?,
        dims,
        topology,
    })
}

/// Recomputes the surplus of a dispatch from its values alone.
///
/// Degradation is charged on the epigraph variable, as in the program.
pub fn objective_value<T: Scalar>(
    result: &DispatchResult<T>,
    inp: &P1Input<'_, T>,
) -> SurplusBreakdown<T> {
    let d = result.dims;
    let sc = inp.scenarios;
    let mut out = SurplusBreakdown::default();
    for t in 0..d.horizon {
        out.energy_revenue += inp.prices.energy[t] * result.energy[t];
        out.reserve_revenue += inp.prices.reserve[t] * result.reserve[t];
    }
    for s in 0..d.n_s {
        let w = sc.omega[s];
        let mut utility = T::zero();
        let mut cost = T::zero();
        for p in inp.prosumers {
            let i = p.i;
            for t in 0..d.horizon {
                utility += p.utility(sc.load(s, i, t), result.value(Symbol::Curtail, s, i, t));
                cost = cost
                    + p.thermal_cost(result.value(Symbol::Thermal, s, i, t))
                    + p.alpha_s * result.value(Symbol::Degradation, s, i, t);
                if p.has_storage() {
                    cost += p.beta_s;
                }
            }
        }
        out.utility += w * utility;
        out.cost += w * cost;
    }
    out.total = out.energy_revenue + out.reserve_revenue + out.utility - out.cost;
    out
}

/// Reads the dispatch out of a solve and fills in its surplus breakdown.
pub fn extract<T: Scalar>(
    asm: &Assembled<T>,
    inp: &P1Input<'_, T>,
    report: &SolveReport<T>,
) -> Result<DispatchResult<T>, MissingVariable> {
    let mut r = DispatchResult::from_primal(asm.vars(), asm.dims, &report.primal)?;
    r.objective = objective_value(&r, inp);
    Ok(r)
}
