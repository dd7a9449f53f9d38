//! Bidirectional index between model symbols and flat solver columns.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub type VarId = usize;

/// Decision-variable families of the dispatch model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Symbol {
    /// `E_t`, energy offered to the wholesale market (MW, ex-ante).
    Energy,
    /// `R_t`, upward reserve offered (MW, ex-ante).
    Reserve,
    /// `P^E`, prosumer output routed to the energy market (MW).
    MarketOutput,
    /// `P^R`, prosumer upward reserve (MW).
    ReserveOutput,
    /// `P^g`, thermal output (MW).
    Thermal,
    /// `P^c` (MW).
    Charge,
    /// `P^dis` (MW).
    Discharge,
    /// `P^D`, load curtailment (MW).
    Curtail,
    /// `Q^S`, stored energy at the end of the period (MWh).
    StoredEnergy,
    /// `d`, epigraph of the storage throughput in the degradation cost (MW).
    Degradation,
    /// `p_j`, nodal active extraction (pu).
    NodeP,
    /// `q_j`, nodal reactive extraction (pu).
    NodeQ,
    /// `p_kj`, sending-end active branch flow (pu).
    FlowP,
    /// `q_kj` (pu).
    FlowQ,
    /// `ℓ_kj`, squared current magnitude (pu).
    CurrentSq,
    /// `v_j`, squared voltage magnitude (pu).
    VoltageSq,
    /// Active flow on the virtual feeder into the substation bus (pu).
    FeederP,
    /// Reactive flow on the virtual feeder (pu).
    FeederQ,
    /// Epigraph of a quadratic objective term; `entity` holds the squared column.
    QuadEpigraph,
}

impl Symbol {
    pub const ALL: [Symbol; 19] = [
        Symbol::Energy,
        Symbol::Reserve,
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
        Symbol::FlowP,
        Symbol::FlowQ,
        Symbol::CurrentSq,
        Symbol::VoltageSq,
        Symbol::FeederP,
        Symbol::FeederQ,
        Symbol::QuadEpigraph,
    ];

    pub const PROSUMER: [Symbol; 8] = [
        Symbol::MarketOutput,
        Symbol::ReserveOutput,
        Symbol::Thermal,
        Symbol::Charge,
        Symbol::Discharge,
        Symbol::Curtail,
        Symbol::StoredEnergy,
        Symbol::Degradation,
    ];

    pub const BUS: [Symbol; 3] = [Symbol::NodeP, Symbol::NodeQ, Symbol::VoltageSq];

    pub const BRANCH: [Symbol; 3] = [Symbol::FlowP, Symbol::FlowQ, Symbol::CurrentSq];

    pub const FEEDER: [Symbol; 2] = [Symbol::FeederP, Symbol::FeederQ];

    pub fn name(self) -> &'static str {
        match self {
            Symbol::Energy => "E",
            Symbol::Reserve => "R",
            Symbol::MarketOutput => "PE",
            Symbol::ReserveOutput => "PR",
            Symbol::Thermal => "Pg",
            Symbol::Charge => "Pc",
            Symbol::Discharge => "Pdis",
            Symbol::Curtail => "PD",
            Symbol::StoredEnergy => "QS",
            Symbol::Degradation => "d",
            Symbol::NodeP => "p",
            Symbol::NodeQ => "q",
            Symbol::FlowP => "p_kj",
            Symbol::FlowQ => "q_kj",
            Symbol::CurrentSq => "l",
            Symbol::VoltageSq => "v",
            Symbol::FeederP => "p_feed",
            Symbol::FeederQ => "q_feed",
            Symbol::QuadEpigraph => "tau",
        }
    }
}

/// Column key. `s` and `entity` are 0 for symbols that do not carry them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarKey {
    pub symbol: Symbol,
    pub s: u32,
    pub entity: u32,
    pub t: u32,
}

impl VarKey {
    pub fn ex_ante(symbol: Symbol, t: usize) -> Self {
        VarKey {
            symbol,
            s: 0,
            entity: 0,
            t: t as u32,
        }
    }

    pub fn at(symbol: Symbol, s: usize, entity: usize, t: usize) -> Self {
        VarKey {
            symbol,
            s: s as u32,
            entity: entity as u32,
            t: t as u32,
        }
    }
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.symbol {
            Symbol::Energy | Symbol::Reserve => write!(f, "{}[t={}]", self.symbol.name(), self.t),
            Symbol::FeederP | Symbol::FeederQ => {
                write!(f, "{}[s={},t={}]", self.symbol.name(), self.s, self.t)
            }
            _ => write!(
                f,
                "{}[s={},{},t={}]",
                self.symbol.name(),
                self.s,
                self.entity,
                self.t
            ),
        }
    }
}

/// Problem dimensions that fix the column layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_s: usize,
    pub n_p: usize,
    pub n_bus: usize,
    pub n_branch: usize,
    pub horizon: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("no variable registered for {0}")]
pub struct MissingVariable(pub VarKey);

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VariableMap {
    keys: Vec<VarKey>,
    index: HashMap<VarKey, VarId>,
}

impl VariableMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Full layout of the dispatch model: symbol-major, then `s`, entity, `t`.
    pub fn for_dims(d: &Dims) -> Self {
        let mut m = VariableMap::new();
        for sym in [Symbol::Energy, Symbol::Reserve] {
            for t in 0..d.horizon {
                m.register(VarKey::ex_ante(sym, t));
            }
        }
        let families: [(&[Symbol], usize); 4] = [
            (&Symbol::PROSUMER, d.n_p),
            (&Symbol::BUS, d.n_bus),
            (&Symbol::BRANCH, d.n_branch),
            (&Symbol::FEEDER, 1),
        ];
        for (symbols, n_entity) in families {
            for &sym in symbols {
                for s in 0..d.n_s {
                    for e in 0..n_entity {
                        for t in 0..d.horizon {
                            m.register(VarKey::at(sym, s, e, t));
                        }
                    }
                }
            }
        }
        m
    }

    /// Registers `key` if absent and returns its column.
    pub fn register(&mut self, key: VarKey) -> VarId {
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = self.keys.len();
        self.keys.push(key);
        self.index.insert(key, id);
        id
    }

    pub(crate) fn register_epigraph(&mut self, column: VarId) -> VarId {
        self.register(VarKey::at(Symbol::QuadEpigraph, 0, column, 0))
    }

    pub fn get(&self, key: &VarKey) -> Option<VarId> {
        self.index.get(key).copied()
    }

    pub fn require(&self, key: VarKey) -> Result<VarId, MissingVariable> {
        self.get(&key).ok_or(MissingVariable(key))
    }

    pub fn key(&self, id: VarId) -> Option<&VarKey> {
        self.keys.get(id)
    }

    pub fn keys(&self) -> &[VarKey] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn count(&self, symbol: Symbol) -> usize {
        self.keys.iter().filter(|k| k.symbol == symbol).count()
    }
}
