//! Solver-agnostic conic program: sparse linear rows, second-order cones and
//! a separable convex quadratic objective, always in minimization form.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::vars::{VarId, VariableMap};
use crate::Scalar;

/// Where a row or cone came from: scenario, entity (prosumer, bus or
/// branch, depending on the kind) and period. Unused coordinates are 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Site {
    pub s: u32,
    pub entity: u32,
    pub t: u32,
}

impl Site {
    pub fn new(s: usize, entity: usize, t: usize) -> Self {
        Site {
            s: s as u32,
            entity: entity as u32,
            t: t as u32,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RowKind {
    // network
    ActiveInjection,
    NodalExtraction,
    ReactiveInjection,
    ReactiveExtraction,
    VoltageDrop,
    VoltageLower,
    VoltageUpper,
    SubstationVoltage,
    // thermal units
    ThermalLower,
    ThermalUpper,
    ReserveNonneg,
    ReserveRate,
    ReserveHeadroom,
    RampUp,
    RampDown,
    // storage
    ChargeLower,
    ChargeUpper,
    DischargeLower,
    DischargeUpper,
    EnergyRecursion,
    EnergyLower,
    EnergyUpper,
    DegradationEpigraph,
    DegradationUpper,
    // flexible demand
    CurtailLower,
    CurtailUpper,
    // prosumer balance and market coupling
    Balance,
    EnergyCoupling,
    ReserveCoupling,
    ExchangeUpper,
    ExchangeLower,
    ExchangeReserveUpper,
    ExchangeReserveLower,
    // test and auxiliary rows
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConeKind {
    /// `ℓ·v ≥ p² + q²` on a branch.
    Loss,
    /// `p² + q² ≤ s̄²` on a branch.
    FlowLimit,
    /// Epigraph of a quadratic objective term (conic-linear rewrite).
    QuadEpigraph,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    /// `Σ a·x = rhs`
    Eq,
    /// `Σ a·x ≤ rhs`
    Le,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinExpr<T> {
    pub terms: Vec<(VarId, T)>,
    pub constant: T,
}

impl<T: Scalar> LinExpr<T> {
    pub fn var(id: VarId) -> Self {
        LinExpr {
            terms: vec![(id, T::one())],
            constant: T::zero(),
        }
    }

    pub fn constant(c: T) -> Self {
        LinExpr {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn scaled(mut self, k: T) -> Self {
        for (_, a) in &mut self.terms {
            *a *= k;
        }
        self.constant *= k;
        self
    }

    pub fn plus(mut self, other: &LinExpr<T>) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
        self
    }

    pub fn eval(&self, x: &[T]) -> T {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(j, a)| acc + a * x[j])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row<T> {
    pub kind: RowKind,
    pub site: Site,
    pub sense: Sense,
    pub terms: Vec<(VarId, T)>,
    pub rhs: T,
}

impl<T: Scalar> Row<T> {
    pub fn eq(kind: RowKind, site: Site, terms: Vec<(VarId, T)>, rhs: T) -> Self {
        Row {
            kind,
            site,
            sense: Sense::Eq,
            terms,
            rhs,
        }
    }

    pub fn le(kind: RowKind, site: Site, terms: Vec<(VarId, T)>, rhs: T) -> Self {
        Row {
            kind,
            site,
            sense: Sense::Le,
            terms,
            rhs,
        }
    }

    /// `Σ a·x ≥ rhs`, stored negated.
    pub fn ge(kind: RowKind, site: Site, terms: Vec<(VarId, T)>, rhs: T) -> Self {
        let terms = terms.into_iter().map(|(j, a)| (j, -a)).collect();
        Row::le(kind, site, terms, -rhs)
    }

    pub fn lhs(&self, x: &[T]) -> T {
        self.terms.iter().fold(T::zero(), |acc, &(j, a)| acc + a * x[j])
    }

    /// Signed residual `Σ a·x − rhs`.
    pub fn residual(&self, x: &[T]) -> T {
        self.lhs(x) - self.rhs
    }

    /// Amount by which the row is violated (0 when satisfied).
    pub fn violation(&self, x: &[T]) -> T {
        let r = self.residual(x);
        match self.sense {
            Sense::Eq => r.abs(),
            Sense::Le => r.max(T::zero()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cone<T> {
    /// `head ≥ ‖tail‖₂`
    Soc {
        kind: ConeKind,
        site: Site,
        head: LinExpr<T>,
        tail: Vec<LinExpr<T>>,
    },
    /// `u·w ≥ ‖tail‖₂²` with `u, w ≥ 0`
    Rotated {
        kind: ConeKind,
        site: Site,
        u: LinExpr<T>,
        w: LinExpr<T>,
        tail: Vec<LinExpr<T>>,
    },
}

impl<T: Scalar> Cone<T> {
    pub fn kind(&self) -> ConeKind {
        match self {
            Cone::Soc { kind, .. } | Cone::Rotated { kind, .. } => *kind,
        }
    }

    pub fn site(&self) -> Site {
        match self {
            Cone::Soc { site, .. } | Cone::Rotated { site, .. } => *site,
        }
    }

    /// Entries of the equivalent standard cone `e₀ ≥ ‖(e₁,…)‖`. A rotated
    /// cone becomes `(u + w, u − w, 2·tail)`.
    pub fn standard_entries(&self) -> Vec<LinExpr<T>> {
        match self {
            Cone::Soc { head, tail, .. } => {
                let mut out = Vec::with_capacity(tail.len() + 1);
                out.push(head.clone());
                out.extend(tail.iter().cloned());
                out
            }
            Cone::Rotated { u, w, tail, .. } => {
                let mut out = Vec::with_capacity(tail.len() + 2);
                out.push(u.clone().plus(w));
                out.push(u.clone().plus(&w.clone().scaled(-T::one())));
                out.extend(tail.iter().map(|e| e.clone().scaled(T::two())));
                out
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Cone::Soc { tail, .. } => tail.len() + 1,
            Cone::Rotated { tail, .. } => tail.len() + 2,
        }
    }

    /// `‖tail‖ − head` of the standard form, clamped at 0.
    pub fn violation(&self, x: &[T]) -> T {
        let e: Vec<T> = self.standard_entries().iter().map(|e| e.eval(x)).collect();
        let norm = e[1..].iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt();
        (norm - e[0]).max(T::zero())
    }
}

/// Surplus contribution registered by a block builder, in maximization
/// sense and before scenario weighting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ObjTerm<T> {
    Linear(VarId, T),
    /// `coef · x²`
    Square(VarId, T),
    Constant(T),
}

/// Rows, cones and objective pieces emitted by one builder call.
#[derive(Clone, Debug, Default)]
pub struct ConstraintBlock<T> {
    pub rows: Vec<Row<T>>,
    pub cones: Vec<Cone<T>>,
    pub objective: Vec<ObjTerm<T>>,
}

impl<T: Scalar> ConstraintBlock<T> {
    pub fn new() -> Self {
        ConstraintBlock {
            rows: Vec::new(),
            cones: Vec::new(),
            objective: Vec::new(),
        }
    }

    pub fn count_rows(&self, kind: RowKind) -> usize {
        self.rows.iter().filter(|r| r.kind == kind).count()
    }

    pub fn count_cones(&self, kind: ConeKind) -> usize {
        self.cones.iter().filter(|c| c.kind() == kind).count()
    }

    pub fn extend(&mut self, other: ConstraintBlock<T>) {
        self.rows.extend(other.rows);
        self.cones.extend(other.cones);
        self.objective.extend(other.objective);
    }
}

/// Worst violation found when checking a point against a program.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation<T> {
    pub value: T,
    pub row: Option<(RowKind, Site)>,
    pub cone: Option<(ConeKind, Site)>,
}

/// Sealed conic program:
/// minimize `Σ qᵢ·xᵢ² + cᵀx + k` subject to equality rows, `≤` rows and
/// cone memberships.
#[derive(Clone, Debug)]
pub struct ConicProgram<T> {
    vars: VariableMap,
    eq_rows: Vec<Row<T>>,
    ineq_rows: Vec<Row<T>>,
    cones: Vec<Cone<T>>,
    quadratic: Vec<(VarId, T)>,
    linear: Vec<T>,
    constant: T,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SealError {
    #[error("row {kind:?} at {site:?} references variable {var} beyond {n_vars}")]
    DanglingVariable {
        kind: RowKind,
        site: Site,
        var: usize,
        n_vars: usize,
    },
    #[error("quadratic coefficient {coef} on variable {var} is negative")]
    NonConvex { var: usize, coef: f64 },
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
}

/// Mutable builder; [`ProgramBuilder::seal`] validates and freezes it.
#[derive(Clone, Debug)]
pub struct ProgramBuilder<T> {
    vars: VariableMap,
    eq_rows: Vec<Row<T>>,
    ineq_rows: Vec<Row<T>>,
    cones: Vec<Cone<T>>,
    quadratic: BTreeMap<VarId, T>,
    linear: Vec<T>,
    constant: T,
}

impl<T: Scalar> ProgramBuilder<T> {
    pub fn new(vars: VariableMap) -> Self {
        let n = vars.len();
        ProgramBuilder {
            vars,
            eq_rows: Vec::new(),
            ineq_rows: Vec::new(),
            cones: Vec::new(),
            quadratic: BTreeMap::new(),
            linear: vec![T::zero(); n],
            constant: T::zero(),
        }
    }

    pub fn vars(&self) -> &VariableMap {
        &self.vars
    }

    pub fn add_row(&mut self, row: Row<T>) {
        match row.sense {
            Sense::Eq => self.eq_rows.push(row),
            Sense::Le => self.ineq_rows.push(row),
        }
    }

    pub fn add_cone(&mut self, cone: Cone<T>) {
        self.cones.push(cone);
    }

    /// Adds `weight · term` to the maximized surplus, i.e. `−weight · term`
    /// to the minimized objective.
    pub fn add_surplus(&mut self, term: ObjTerm<T>, weight: T) {
        match term {
            ObjTerm::Linear(j, a) => self.linear[j] -= weight * a,
            ObjTerm::Square(j, a) => {
                let e = self.quadratic.entry(j).or_insert_with(T::zero);
                *e -= weight * a;
            }
            ObjTerm::Constant(c) => self.constant -= weight * c,
        }
    }

    /// Adds `coef · x_j` to the minimized objective.
    pub fn add_cost_linear(&mut self, j: VarId, coef: T) {
        self.linear[j] += coef;
    }

    /// Adds `coef · x_j²` to the minimized objective.
    pub fn add_cost_square(&mut self, j: VarId, coef: T) {
        let e = self.quadratic.entry(j).or_insert_with(T::zero);
        *e += coef;
    }

    pub fn add_block(&mut self, block: ConstraintBlock<T>, weight: T) {
        for r in block.rows {
            self.add_row(r);
        }
        self.cones.extend(block.cones);
        for term in block.objective {
            self.add_surplus(term, weight);
        }
    }

    pub fn seal(self) -> Result<ConicProgram<T>, SealError> {
        let n = self.vars.len();
        for row in self.eq_rows.iter().chain(&self.ineq_rows) {
            if !row.rhs.is_finite() {
                return Err(SealError::NonFinite("row right-hand side"));
            }
            for &(j, a) in &row.terms {
                if j >= n {
                    return Err(SealError::DanglingVariable {
                        kind: row.kind,
                        site: row.site,
                        var: j,
                        n_vars: n,
                    });
                }
                if !a.is_finite() {
                    return Err(SealError::NonFinite("row coefficient"));
                }
            }
        }
        for cone in &self.cones {
            for e in cone.standard_entries() {
                if let Some(&(j, _)) = e.terms.iter().find(|(j, _)| *j >= n) {
                    return Err(SealError::DanglingVariable {
                        kind: RowKind::Custom,
                        site: cone.site(),
                        var: j,
                        n_vars: n,
                    });
                }
            }
        }
        let mut quadratic = Vec::with_capacity(self.quadratic.len());
        for (j, q) in self.quadratic {
            if !q.is_finite() {
                return Err(SealError::NonFinite("quadratic objective"));
            }
            if q < T::zero() {
                return Err(SealError::NonConvex {
                    var: j,
                    coef: q.as_f64(),
                });
            }
            if q > T::zero() {
                quadratic.push((j, q));
            }
        }
        if self.linear.iter().any(|c| !c.is_finite()) {
            return Err(SealError::NonFinite("linear objective"));
        }
        Ok(ConicProgram {
            vars: self.vars,
            eq_rows: self.eq_rows,
            ineq_rows: self.ineq_rows,
            cones: self.cones,
            quadratic,
            linear: self.linear,
            constant: self.constant,
        })
    }
}

impl<T: Scalar> ConicProgram<T> {
    pub fn vars(&self) -> &VariableMap {
        &self.vars
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn eq_rows(&self) -> &[Row<T>] {
        &self.eq_rows
    }

    pub fn ineq_rows(&self) -> &[Row<T>] {
        &self.ineq_rows
    }

    pub fn cones(&self) -> &[Cone<T>] {
        &self.cones
    }

    /// Diagonal quadratic objective entries `(j, qⱼ)` meaning `qⱼ·xⱼ²`.
    pub fn quadratic(&self) -> &[(VarId, T)] {
        &self.quadratic
    }

    pub fn linear(&self) -> &[T] {
        &self.linear
    }

    pub fn constant(&self) -> T {
        self.constant
    }

    pub fn rows(&self) -> impl Iterator<Item = &Row<T>> {
        self.eq_rows.iter().chain(self.ineq_rows.iter())
    }

    /// Minimized objective at `x`.
    pub fn objective(&self, x: &[T]) -> T {
        let lin = self
            .linear
            .iter()
            .zip(x)
            .fold(T::zero(), |acc, (&c, &v)| acc + c * v);
        let quad = self
            .quadratic
            .iter()
            .fold(T::zero(), |acc, &(j, q)| acc + q * x[j] * x[j]);
        self.constant + lin + quad
    }

    /// Objective gradient `2qᵢxᵢ + cᵢ`.
    pub fn objective_gradient(&self, x: &[T]) -> Vec<T> {
        let mut g = self.linear.clone();
        for &(j, q) in &self.quadratic {
            g[j] += T::two() * q * x[j];
        }
        g
    }

    /// Largest violation over every row and cone.
    pub fn max_violation(&self, x: &[T]) -> Violation<T> {
        let mut worst = Violation {
            value: T::zero(),
            row: None,
            cone: None,
        };
        for row in self.rows() {
            let v = row.violation(x);
            if v > worst.value {
                worst = Violation {
                    value: v,
                    row: Some((row.kind, row.site)),
                    cone: None,
                };
            }
        }
        for cone in &self.cones {
            let v = cone.violation(x);
            if v > worst.value {
                worst = Violation {
                    value: v,
                    row: None,
                    cone: Some((cone.kind(), cone.site())),
                };
            }
        }
        worst
    }

    /// Conic-linear rewrite: every `qⱼ·xⱼ²` becomes `qⱼ·τⱼ` with a new
    /// epigraph variable and the rotated cone `τⱼ·1 ≥ xⱼ²`.
    pub fn to_conic_linear(&self) -> ConicProgram<T> {
        let mut vars = self.vars.clone();
        let mut linear = self.linear.clone();
        let mut cones = self.cones.clone();
        for &(j, q) in &self.quadratic {
            let tau = vars.register_epigraph(j);
            linear.push(q);
            cones.push(Cone::Rotated {
                kind: ConeKind::QuadEpigraph,
                site: Site::new(0, j, 0),
                u: LinExpr::var(tau),
                w: LinExpr::constant(T::one()),
                tail: vec![LinExpr::var(j)],
            });
        }
        ConicProgram {
            vars,
            eq_rows: self.eq_rows.clone(),
            ineq_rows: self.ineq_rows.clone(),
            cones,
            quadratic: Vec::new(),
            linear,
            constant: self.constant,
        }
    }

    pub fn count_rows(&self, kind: RowKind) -> usize {
        self.rows().filter(|r| r.kind == kind).count()
    }

    pub fn count_cones(&self, kind: ConeKind) -> usize {
        self.cones.iter().filter(|c| c.kind() == kind).count()
    }
}
