//! Prosumer DER parameters and the per-(scenario, prosumer, period) blocks:
//! thermal limits with reserve and ramping, storage, flexible demand and
//! the prosumer power balance.
//!
//! A zero capacity encodes the absence of a resource. The storage binaries
//! that forbid simultaneous charge and discharge are dropped; throughput
//! cost uses the epigraph `d ≥ P^c + P^dis`, which equals `|P^dis − P^c|`
//! whenever one of the two is zero.

use serde::{Deserialize, Serialize};

use crate::program::{ConstraintBlock, MissingVariable, ObjTerm, Row, RowKind, Site, Symbol, VarKey, VariableMap};
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct ProsumerParams<T> {
    pub i: usize,
    #[serde(default)]
    pub pg_min: T,
    #[serde(default)]
    pub pg_max: T,
    /// Reserve ramp rate (MW/min); the reserve cap is ten minutes of it.
    #[serde(default)]
    pub msr: T,
    #[serde(default)]
    pub ru: T,
    #[serde(default)]
    pub rd: T,
    /// Output before the first period; defaults to `pg_min`.
    #[serde(default)]
    pub pg_init: Option<T>,
    /// Curtailment cap per period (MW).
    #[serde(default)]
    pub pd_flex_max: Vec<T>,
    #[serde(default)]
    pub ps_max: T,
    #[serde(default = "unit")]
    pub eta: T,
    #[serde(default)]
    pub q_cap: T,
    #[serde(default)]
    pub q_min: T,
    /// Stored energy before the first period; defaults to `q_min`.
    #[serde(default)]
    pub q_init: Option<T>,
    #[serde(default)]
    pub alpha_g: T,
    #[serde(default)]
    pub beta_g: T,
    #[serde(default)]
    pub alpha_s: T,
    #[serde(default)]
    pub beta_s: T,
    #[serde(default)]
    pub alpha_u: T,
    #[serde(default)]
    pub beta_u: T,
}

fn unit<T: Scalar>() -> T {
    T::one()
}

/// Minutes of reserve ramp counted towards the reserve cap.
const RESERVE_MINUTES: f64 = 10.0;

impl<T: Scalar> ProsumerParams<T> {
    /// All-zero prosumer: no resources, unit efficiency.
    pub fn empty(i: usize, horizon: usize) -> Self {
        ProsumerParams {
            i,
            pg_min: T::zero(),
            pg_max: T::zero(),
            msr: T::zero(),
            ru: T::zero(),
            rd: T::zero(),
            pg_init: None,
            pd_flex_max: vec![T::zero(); horizon],
            ps_max: T::zero(),
            eta: T::one(),
            q_cap: T::zero(),
            q_min: T::zero(),
            q_init: None,
            alpha_g: T::zero(),
            beta_g: T::zero(),
            alpha_s: T::zero(),
            beta_s: T::zero(),
            alpha_u: T::zero(),
            beta_u: T::zero(),
        }
    }

    pub fn pg_start(&self) -> T {
        self.pg_init.unwrap_or(self.pg_min)
    }

    pub fn q_start(&self) -> T {
        self.q_init.unwrap_or(self.q_min)
    }

    pub fn reserve_cap(&self) -> T {
        T::of(RESERVE_MINUTES) * self.msr
    }

    pub fn has_storage(&self) -> bool {
        self.q_cap > T::zero()
    }

    pub fn flex_cap(&self, t: usize) -> T {
        self.pd_flex_max.get(t).copied().unwrap_or_else(T::zero)
    }

    /// Problems with the parameter record; empty when valid.
    pub fn validate(&self, horizon: usize) -> Vec<String> {
        let z = T::zero();
        let mut out = Vec::new();
        let mut need = |ok: bool, msg: &str| {
            if !ok {
                out.push(format!("prosumer {}: {msg}", self.i));
            }
        };
        need(z <= self.pg_min && self.pg_min <= self.pg_max, "need 0 <= pg_min <= pg_max");
        need(self.ru >= z && self.rd >= z && self.msr >= z, "ramp rates must be >= 0");
        need(self.eta > z && self.eta <= T::one(), "eta must lie in (0, 1]");
        need(self.ps_max >= z, "ps_max must be >= 0");
        need(
            z <= self.q_min && self.q_min <= self.q_start() && self.q_start() <= self.q_cap
                || !self.has_storage() && self.q_min == z && self.q_start() == z,
            "need 0 <= q_min <= q_init <= q_cap",
        );
        need(
            self.alpha_g >= z && self.alpha_s >= z && self.alpha_u >= z && self.beta_u >= z,
            "cost and utility coefficients must be >= 0",
        );
        need(
            self.pd_flex_max.len() == horizon,
            "pd_flex_max length differs from the horizon",
        );
        need(
            self.pd_flex_max.iter().all(|&c| c >= z),
            "pd_flex_max must be >= 0",
        );
        if let Some(p) = self.pg_init {
            need(p >= z, "pg_init must be >= 0");
        }
        for v in [self.alpha_g, self.beta_g, self.alpha_s, self.beta_s, self.alpha_u, self.beta_u] {
            need(v.is_finite(), "non-finite coefficient");
        }
        out
    }

    /// `α^U (P^d − P^D)² ...`: utility of consuming `load − curtail`.
    pub fn utility(&self, load: T, curtail: T) -> T {
        let served = load - curtail;
        -self.alpha_u * served * served + self.beta_u * served
    }

    pub fn thermal_cost(&self, pg: T) -> T {
        self.alpha_g * pg * pg + self.beta_g * pg
    }

    /// Degradation cost with the absolute value, plus the fixed term when
    /// the prosumer owns storage.
    pub fn storage_cost(&self, charge: T, discharge: T) -> T {
        let fixed = if self.has_storage() {
            self.beta_s
        } else {
            T::zero()
        };
        self.alpha_s * (discharge - charge).abs() + fixed
    }
}

fn key(sym: Symbol, s: usize, i: usize, t: usize) -> VarKey {
    VarKey::at(sym, s, i, t)
}

/// Output bounds, the reserve cap `P^R ≤ min(10·MSR, P̄^g − P^g)` as two
/// rows, and ramp limits against the previous period (or `pg_init`).
pub fn thermal_block<T: Scalar>(
    p: &ProsumerParams<T>,
    s: usize,
    t: usize,
    vars: &VariableMap,
) -> Result<ConstraintBlock<T>, MissingVariable> {
    let i = p.i;
    let site = Site::new(s, i, t);
    let one = T::one();
    let pg = vars.require(key(Symbol::Thermal, s, i, t))?;
    let pr = vars.require(key(Symbol::ReserveOutput, s, i, t))?;
    let mut b = ConstraintBlock::new();
    b.rows.push(Row::ge(RowKind::ThermalLower, site, vec![(pg, one)], p.pg_min));
    b.rows.push(Row::le(RowKind::ThermalUpper, site, vec![(pg, one)], p.pg_max));
    b.rows.push(Row::ge(RowKind::ReserveNonneg, site, vec![(pr, one)], T::zero()));
    b.rows.push(Row::le(RowKind::ReserveRate, site, vec![(pr, one)], p.reserve_cap()));
    b.rows.push(Row::le(
        RowKind::ReserveHeadroom,
        site,
        vec![(pr, one), (pg, one)],
        p.pg_max,
    ));
    if t == 0 {
        b.rows.push(Row::le(
            RowKind::RampUp,
            site,
            vec![(pg, one), (pr, one)],
            p.ru + p.pg_start(),
        ));
        b.rows.push(Row::le(
            RowKind::RampDown,
            site,
            vec![(pg, -one)],
            p.rd - p.pg_start(),
        ));
    } else {
        let pg_prev = vars.require(key(Symbol::Thermal, s, i, t - 1))?;
        let pr_prev = vars.require(key(Symbol::ReserveOutput, s, i, t - 1))?;
        b.rows.push(Row::le(
            RowKind::RampUp,
            site,
            vec![(pg, one), (pg_prev, -one), (pr, one)],
            p.ru,
        ));
        b.rows.push(Row::le(
            RowKind::RampDown,
            site,
            vec![(pg_prev, one), (pg, -one), (pr_prev, one)],
            p.rd,
        ));
    }
    b.objective.push(ObjTerm::Square(pg, -p.alpha_g));
    b.objective.push(ObjTerm::Linear(pg, -p.beta_g));
    Ok(b)
}

/// Rate boxes, the energy recursion (hourly periods, `Q^S` is the state at
/// the end of the period), the capacity box and the degradation epigraph.
pub fn storage_block<T: Scalar>(
    p: &ProsumerParams<T>,
    s: usize,
    t: usize,
    vars: &VariableMap,
) -> Result<ConstraintBlock<T>, MissingVariable> {
    let i = p.i;
    let site = Site::new(s, i, t);
    let one = T::one();
    let c = vars.require(key(Symbol::Charge, s, i, t))?;
    let dis = vars.require(key(Symbol::Discharge, s, i, t))?;
    let qs = vars.require(key(Symbol::StoredEnergy, s, i, t))?;
    let d = vars.require(key(Symbol::Degradation, s, i, t))?;
    let mut b = ConstraintBlock::new();
    b.rows.push(Row::ge(RowKind::ChargeLower, site, vec![(c, one)], T::zero()));
    b.rows.push(Row::le(RowKind::ChargeUpper, site, vec![(c, one)], p.ps_max));
    b.rows.push(Row::ge(RowKind::DischargeLower, site, vec![(dis, one)], T::zero()));
    b.rows.push(Row::le(RowKind::DischargeUpper, site, vec![(dis, one)], p.ps_max));
    if t == 0 {
        b.rows.push(Row::eq(
            RowKind::EnergyRecursion,
            site,
            vec![(qs, one), (c, -one), (dis, one)],
            p.q_start(),
        ));
    } else {
        let prev = vars.require(key(Symbol::StoredEnergy, s, i, t - 1))?;
        b.rows.push(Row::eq(
            RowKind::EnergyRecursion,
            site,
            vec![(qs, one), (prev, -one), (c, -one), (dis, one)],
            T::zero(),
        ));
    }
    b.rows.push(Row::ge(RowKind::EnergyLower, site, vec![(qs, one)], p.q_min));
    b.rows.push(Row::le(RowKind::EnergyUpper, site, vec![(qs, one)], p.q_cap));
    b.rows.push(Row::ge(
        RowKind::DegradationEpigraph,
        site,
        vec![(d, one), (c, -one), (dis, -one)],
        T::zero(),
    ));
    b.rows.push(Row::le(
        RowKind::DegradationUpper,
        site,
        vec![(d, one)],
        T::two() * p.ps_max,
    ));
    b.objective.push(ObjTerm::Linear(d, -p.alpha_s));
    if p.has_storage() {
        b.objective.push(ObjTerm::Constant(-p.beta_s));
    }
    Ok(b)
}

/// Curtailment box and the concave utility of the served load `load − P^D`.
pub fn flexdemand_block<T: Scalar>(
    p: &ProsumerParams<T>,
    load: T,
    s: usize,
    t: usize,
    vars: &VariableMap,
) -> Result<ConstraintBlock<T>, MissingVariable> {
    let site = Site::new(s, p.i, t);
    let pd = vars.require(key(Symbol::Curtail, s, p.i, t))?;
    let mut b = ConstraintBlock::new();
    b.rows.push(Row::ge(RowKind::CurtailLower, site, vec![(pd, T::one())], T::zero()));
    b.rows.push(Row::le(RowKind::CurtailUpper, site, vec![(pd, T::one())], p.flex_cap(t)));
    // −α(L − D)² + β(L − D) expanded in D
    let (a, beta) = (p.alpha_u, p.beta_u);
    if a != T::zero() {
        b.objective.push(ObjTerm::Square(pd, -a));
    }
    let lin = T::two() * a * load - beta;
    if lin != T::zero() {
        b.objective.push(ObjTerm::Linear(pd, lin));
    }
    let constant = -a * load * load + beta * load;
    if constant != T::zero() {
        b.objective.push(ObjTerm::Constant(constant));
    }
    Ok(b)
}

/// `P^g + P^PV + η·P^dis − P^c/η − P^d + P^D = P^E + P^B`.
pub fn balance_block<T: Scalar>(
    p: &ProsumerParams<T>,
    p2p: T,
    pv: T,
    load: T,
    s: usize,
    t: usize,
    vars: &VariableMap,
) -> Result<ConstraintBlock<T>, MissingVariable> {
    let i = p.i;
    let site = Site::new(s, i, t);
    let one = T::one();
    let terms = vec![
        (vars.require(key(Symbol::Thermal, s, i, t))?, one),
        (vars.require(key(Symbol::Discharge, s, i, t))?, p.eta),
        (vars.require(key(Symbol::Charge, s, i, t))?, -one / p.eta),
        (vars.require(key(Symbol::Curtail, s, i, t))?, one),
        (vars.require(key(Symbol::MarketOutput, s, i, t))?, -one),
    ];
    let mut b = ConstraintBlock::new();
    b.rows
        .push(Row::eq(RowKind::Balance, site, terms, p2p - pv + load));
    Ok(b)
}

/// All four DER blocks of one prosumer for one scenario and period.
#[allow(clippy::too_many_arguments)]
pub fn prosumer_blocks<T: Scalar>(
    p: &ProsumerParams<T>,
    p2p: T,
    pv: T,
    load: T,
    s: usize,
    t: usize,
    vars: &VariableMap,
) -> Result<ConstraintBlock<T>, MissingVariable> {
    let mut b = thermal_block(p, s, t, vars)?;
    b.extend(storage_block(p, s, t, vars)?);
    b.extend(flexdemand_block(p, load, s, t, vars)?);
    b.extend(balance_block(p, p2p, pv, load, s, t, vars)?);
    Ok(b)
}
