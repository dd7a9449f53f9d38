//! Radial distribution network: data model, structural validation and the
//! relaxed DistFlow constraint block for one scenario and period.
//!
//! All network quantities inside the program are per-unit on `s_base`.
//! Prosumer quantities stay in MW and are divided by `s_base` where they
//! enter the nodal rows. Branch flows are measured at the upstream end,
//! whatever orientation the branch was entered with.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::program::{
    Cone, ConeKind, ConstraintBlock, LinExpr, MissingVariable, Row, RowKind, Site, Symbol, VarKey,
    VariableMap,
};
use crate::solve::DispatchResult;
use crate::Scalar;

fn one<T: Scalar>() -> T {
    T::one()
}

fn zero<T: Scalar>() -> T {
    T::zero()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Bus<T> {
    pub id: usize,
    pub vmin: T,
    pub vmax: T,
    #[serde(default)]
    pub is_substation: bool,
    #[serde(default)]
    pub prosumer: Option<usize>,
    /// Power factor used to derive the reactive demand of the bus prosumer.
    #[serde(default = "one")]
    pub reactive_pf: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Branch<T> {
    pub from: usize,
    pub to: usize,
    pub r: T,
    pub x: T,
    #[serde(default = "zero")]
    pub gs: T,
    #[serde(default = "zero")]
    pub bs: T,
    /// Apparent-power rating (MVA).
    pub smax: T,
    /// Voltage-transform coefficient of the drop equation; 1 for a plain line.
    #[serde(default = "one")]
    pub gamma: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Network<T> {
    pub buses: Vec<Bus<T>>,
    pub branches: Vec<Branch<T>>,
    /// Substation exchange limit (MW).
    pub e_ex_max: T,
    /// Base voltage (kV); informational.
    pub v_base: T,
    /// Base power (MVA).
    pub s_base: T,
    /// Substation voltage magnitude (pu).
    #[serde(default = "one")]
    pub v_ref: T,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum NetworkViolation {
    NoSubstation,
    MultipleSubstations(Vec<usize>),
    BusIdMismatch { position: usize, id: usize },
    BadVoltageBounds { bus: usize },
    BadPowerFactor { bus: usize },
    SharedProsumer { prosumer: usize, buses: Vec<usize> },
    UnknownBus { branch: usize, bus: usize },
    SelfLoop { branch: usize },
    BadBranchParameter { branch: usize, field: &'static str },
    Cycle { branch: usize },
    Disconnected { unreachable: Vec<usize> },
    NegativeExchangeLimit,
    BadBase,
    BadReferenceVoltage,
}

impl fmt::Display for NetworkViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use NetworkViolation::*;
        match self {
            NoSubstation => write!(f, "missing substation bus"),
            MultipleSubstations(b) => write!(f, "more than one substation bus: {b:?}"),
            BusIdMismatch { position, id } => {
                write!(f, "bus at position {position} has id {id}")
            }
            BadVoltageBounds { bus } => write!(f, "bus {bus}: need 0 < vmin <= vmax"),
            BadPowerFactor { bus } => write!(f, "bus {bus}: power factor outside (0, 1]"),
            SharedProsumer { prosumer, buses } => {
                write!(f, "prosumer {prosumer} placed on several buses {buses:?}")
            }
            UnknownBus { branch, bus } => write!(f, "branch {branch} references unknown bus {bus}"),
            SelfLoop { branch } => write!(f, "branch {branch} connects a bus to itself"),
            BadBranchParameter { branch, field } => {
                write!(f, "branch {branch}: invalid {field}")
            }
            Cycle { branch } => write!(f, "non-radial (cycle) closed by branch {branch}"),
            Disconnected { unreachable } => {
                write!(f, "disconnected: buses {unreachable:?} unreachable from the substation")
            }
            NegativeExchangeLimit => write!(f, "e_ex_max must be non-negative"),
            BadBase => write!(f, "v_base and s_base must be positive"),
            BadReferenceVoltage => write!(f, "v_ref must lie within the substation voltage box"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<NetworkViolation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Orientation of a validated radial network away from the substation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    pub root: usize,
    /// Branch feeding each bus; `None` for the root.
    pub parent_branch: Vec<Option<usize>>,
    /// Branches leaving each bus towards the leaves.
    pub children: Vec<Vec<usize>>,
    /// `(upstream, downstream)` bus of every branch.
    pub ends: Vec<(usize, usize)>,
}

impl Topology {
    pub fn upstream(&self, branch: usize) -> usize {
        self.ends[branch].0
    }

    pub fn downstream(&self, branch: usize) -> usize {
        self.ends[branch].1
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("invalid network: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<NetworkViolation>),
    #[error(transparent)]
    MissingVariable(#[from] MissingVariable),
    #[error("bus data has {got} entries, network has {expected} buses")]
    BusDataLength { expected: usize, got: usize },
}

/// Collects every structural problem instead of stopping at the first.
pub fn validate_network<T: Scalar>(net: &Network<T>) -> ValidationReport {
    let mut v = Vec::new();
    let n = net.buses.len();

    let subs: Vec<usize> = net
        .buses
        .iter()
        .filter(|b| b.is_substation)
        .map(|b| b.id)
        .collect();
    match subs.len() {
        0 => v.push(NetworkViolation::NoSubstation),
        1 => {}
        _ => v.push(NetworkViolation::MultipleSubstations(subs.clone())),
    }

    let mut prosumer_buses: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (pos, bus) in net.buses.iter().enumerate() {
        if bus.id != pos {
            v.push(NetworkViolation::BusIdMismatch {
                position: pos,
                id: bus.id,
            });
        }
        if !(bus.vmin > T::zero() && bus.vmin <= bus.vmax) {
            v.push(NetworkViolation::BadVoltageBounds { bus: pos });
        }
        if !(bus.reactive_pf > T::zero() && bus.reactive_pf <= T::one()) {
            v.push(NetworkViolation::BadPowerFactor { bus: pos });
        }
        if let Some(p) = bus.prosumer {
            prosumer_buses.entry(p).or_default().push(pos);
        }
    }
    for (prosumer, buses) in prosumer_buses {
        if buses.len() > 1 {
            v.push(NetworkViolation::SharedProsumer { prosumer, buses });
        }
    }

    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut dsu = DisjointSets::new(n);
    for (k, br) in net.branches.iter().enumerate() {
        let mut ok = true;
        for bus in [br.from, br.to] {
            if bus >= n {
                v.push(NetworkViolation::UnknownBus { branch: k, bus });
                ok = false;
            }
        }
        if br.from == br.to {
            v.push(NetworkViolation::SelfLoop { branch: k });
            ok = false;
        }
        let checks: [(&'static str, bool); 4] = [
            ("r", br.r >= T::zero()),
            ("x", br.x >= T::zero()),
            ("smax", br.smax > T::zero()),
            ("gamma", br.gamma > T::zero()),
        ];
        for (field, good) in checks {
            if !good {
                v.push(NetworkViolation::BadBranchParameter { branch: k, field });
            }
        }
        if ok {
            if !dsu.union(br.from, br.to) {
                v.push(NetworkViolation::Cycle { branch: k });
            }
            adjacency[br.from].push((br.to, k));
            adjacency[br.to].push((br.from, k));
        }
    }

    if n > 0 {
        let root = subs.first().copied().filter(|&r| r < n).unwrap_or(0);
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(b) = queue.pop_front() {
            for &(nb, _) in &adjacency[b] {
                if !seen[nb] {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
        let unreachable: Vec<usize> = (0..n).filter(|&b| !seen[b]).collect();
        if !unreachable.is_empty() {
            v.push(NetworkViolation::Disconnected { unreachable });
        }
        if let Some(&r) = subs.first() {
            if r < n {
                let b = &net.buses[r];
                if !(net.v_ref >= b.vmin && net.v_ref <= b.vmax) {
                    v.push(NetworkViolation::BadReferenceVoltage);
                }
            }
        }
    }

    if net.e_ex_max < T::zero() || !net.e_ex_max.is_finite() {
        v.push(NetworkViolation::NegativeExchangeLimit);
    }
    if !(net.v_base > T::zero() && net.s_base > T::zero()) {
        v.push(NetworkViolation::BadBase);
    }
    ValidationReport { violations: v }
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    /// Returns false when `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

impl<T: Scalar> Network<T> {
    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branch(&self) -> usize {
        self.branches.len()
    }

    pub fn substation(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.is_substation)
    }

    /// Bus hosting prosumer `i`, if any.
    pub fn bus_of(&self, prosumer: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.prosumer == Some(prosumer))
    }

    /// Validates and orients the tree away from the substation.
    pub fn topology(&self) -> Result<Topology, GridError> {
        let report = validate_network(self);
        if !report.is_valid() {
            return Err(GridError::Invalid(report.violations));
        }
        let n = self.n_bus();
        let root = self.substation().expect("validated");
        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (k, br) in self.branches.iter().enumerate() {
            adjacency[br.from].push((br.to, k));
            adjacency[br.to].push((br.from, k));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(_, k)| k);
        }
        let mut parent_branch = vec![None; n];
        let mut children = vec![Vec::new(); n];
        let mut ends = vec![(0, 0); self.n_branch()];
        let mut seen = vec![false; n];
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(b) = queue.pop_front() {
            for &(nb, k) in &adjacency[b] {
                if !seen[nb] {
                    seen[nb] = true;
                    parent_branch[nb] = Some(k);
                    children[b].push(k);
                    ends[k] = (b, nb);
                    queue.push_back(nb);
                }
            }
        }
        for c in &mut children {
            c.sort_unstable();
        }
        Ok(Topology {
            root,
            parent_branch,
            children,
            ends,
        })
    }
}

/// Per-bus data that enters the nodal rows for one scenario and period.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BusInjection<T> {
    /// Net P2P quantity of the bus prosumer (MW, export positive).
    pub p2p: T,
    /// Reactive demand (MVAr).
    pub qd: T,
}

/// Reactive demand from active demand and power factor.
pub fn reactive_demand<T: Scalar>(pd: T, pf: T) -> T {
    pd * pf.acos().tan()
}

/// DistFlow rows and cones for scenario `s`, period `t`.
///
/// Per bus: active and reactive injection, the nodal extraction linking the
/// bus to its prosumer, and the squared-voltage box. Per branch: the loss
/// cone `ℓ·v_down ≥ p² + q²`, the voltage drop and the rating cone. The
/// substation bus is fed by a virtual feeder with zero current whose flow
/// is the physical exchange with the upstream grid, and its voltage is
/// pinned to `v_ref²`.
pub fn build_distflow_block<T: Scalar>(
    net: &Network<T>,
    topo: &Topology,
    s: usize,
    t: usize,
    vars: &VariableMap,
    injections: &[BusInjection<T>],
) -> Result<ConstraintBlock<T>, GridError> {
    if injections.len() != net.n_bus() {
        return Err(GridError::BusDataLength {
            expected: net.n_bus(),
            got: injections.len(),
        });
    }
    let half = T::one() / T::two();
    let base = net.s_base;
    let var = |sym: Symbol, e: usize| vars.require(VarKey::at(sym, s, e, t));
    let mut block = ConstraintBlock::new();

    for (j, bus) in net.buses.iter().enumerate() {
        let site = Site::new(s, j, t);
        let node_p = var(Symbol::NodeP, j)?;
        let node_q = var(Symbol::NodeQ, j)?;
        let v_j = var(Symbol::VoltageSq, j)?;

        let mut act = vec![(node_p, T::one())];
        let mut react = vec![(node_q, T::one())];
        match topo.parent_branch[j] {
            Some(b) => {
                let br = &net.branches[b];
                let v_k = var(Symbol::VoltageSq, topo.upstream(b))?;
                let ell = var(Symbol::CurrentSq, b)?;
                act.push((var(Symbol::FlowP, b)?, -T::one()));
                act.push((v_j, -br.gs * half));
                act.push((v_k, -br.gs * half));
                act.push((ell, br.r));
                react.push((var(Symbol::FlowQ, b)?, -T::one()));
                react.push((v_j, br.bs * half));
                react.push((v_k, br.bs * half));
                react.push((ell, br.x));
            }
            None => {
                act.push((var(Symbol::FeederP, 0)?, -T::one()));
                react.push((var(Symbol::FeederQ, 0)?, -T::one()));
            }
        }
        for &c in &topo.children[j] {
            act.push((var(Symbol::FlowP, c)?, T::one()));
            react.push((var(Symbol::FlowQ, c)?, T::one()));
        }
        block
            .rows
            .push(Row::eq(RowKind::ActiveInjection, site, act, T::zero()));
        block
            .rows
            .push(Row::eq(RowKind::ReactiveInjection, site, react, T::zero()));

        let inj = injections[j];
        let mut ext = vec![(node_p, T::one())];
        if let Some(i) = bus.prosumer {
            let pe = vars.require(VarKey::at(Symbol::MarketOutput, s, i, t))?;
            ext.push((pe, T::one() / base));
        }
        block.rows.push(Row::eq(
            RowKind::NodalExtraction,
            site,
            ext,
            -inj.p2p / base,
        ));
        block.rows.push(Row::eq(
            RowKind::ReactiveExtraction,
            site,
            vec![(node_q, T::one())],
            -inj.qd / base,
        ));

        block.rows.push(Row::ge(
            RowKind::VoltageLower,
            site,
            vec![(v_j, T::one())],
            bus.vmin * bus.vmin,
        ));
        block.rows.push(Row::le(
            RowKind::VoltageUpper,
            site,
            vec![(v_j, T::one())],
            bus.vmax * bus.vmax,
        ));
        if j == topo.root {
            block.rows.push(Row::eq(
                RowKind::SubstationVoltage,
                site,
                vec![(v_j, T::one())],
                net.v_ref * net.v_ref,
            ));
        }
    }

    for (b, br) in net.branches.iter().enumerate() {
        let site = Site::new(s, b, t);
        let (k, j) = topo.ends[b];
        let p = var(Symbol::FlowP, b)?;
        let q = var(Symbol::FlowQ, b)?;
        let ell = var(Symbol::CurrentSq, b)?;
        let v_k = var(Symbol::VoltageSq, k)?;
        let v_j = var(Symbol::VoltageSq, j)?;
        block.cones.push(Cone::Rotated {
            kind: ConeKind::Loss,
            site,
            u: LinExpr::var(ell),
            w: LinExpr::var(v_j),
            tail: vec![LinExpr::var(p), LinExpr::var(q)],
        });
        let z2 = br.r * br.r + br.x * br.x;
        block.rows.push(Row::eq(
            RowKind::VoltageDrop,
            site,
            vec![
                (v_j, T::one()),
                (v_k, -br.gamma),
                (p, T::two() * br.r),
                (q, T::two() * br.x),
                (ell, -z2),
            ],
            T::zero(),
        ));
        block.cones.push(Cone::Soc {
            kind: ConeKind::FlowLimit,
            site,
            head: LinExpr::constant(br.smax / base),
            tail: vec![LinExpr::var(p), LinExpr::var(q)],
        });
    }
    Ok(block)
}

/// `Σ r·ℓ` over all branches for scenario `s`, period `t`, in MW.
pub fn total_loss<T: Scalar>(result: &DispatchResult<T>, net: &Network<T>, s: usize, t: usize) -> T {
    branch_loss(net, |b| result.ell(s, b, t))
}

pub(crate) fn branch_loss<T: Scalar>(net: &Network<T>, ell: impl Fn(usize) -> T) -> T {
    net.branches
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (b, br)| acc + br.r * ell(b))
        * net.s_base
}
