//! Solver-independent MILP container.
//!
//! A [`MilpProblem`] collects bounded continuous and binary variables, linear
//! rows, SOS groups and a linear objective that is always maximised. Once
//! frozen it can be handed to any [`MilpBackend`]. Backends without native SOS
//! support receive the output of [`sos_fallback`].

mod backend;
mod expr;
mod lp_format;
mod sos;

use std::time::Duration;

use thiserror::Error;

pub use backend::{
    backend_by_name, backend_from_env, solve, HighsBackend, MicrolpBackend, MilpBackend, SOLVER_ENV,
};
pub use expr::{LinExpr, LinearConstraint, Sense};
pub use lp_format::write_lp;
pub use sos::sos_fallback;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RowId(pub(crate) usize);

impl RowId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SosId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    /// Merged, sorted by variable, zero coefficients removed.
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * values[v.0]).sum()
    }

    /// Amount by which `values` violate the row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SosKind {
    /// At most one member nonzero.
    One,
    /// At most two members nonzero, and they must be adjacent.
    Two,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SosGroup {
    pub name: String,
    pub kind: SosKind,
    /// Members with strictly increasing weights.
    pub members: Vec<(VarId, f64)>,
}

#[derive(Debug, Error, PartialEq)]
pub enum MilpError {
    #[error("problem is frozen; no further mutation allowed")]
    Frozen,
    #[error("problem must be frozen before solving")]
    NotFrozen,
    #[error("unknown variable index {0}")]
    UnknownVariable(usize),
    #[error("invalid bounds [{lower}, {upper}] for variable {name}")]
    InvalidBounds {
        name: String,
        lower: f64,
        upper: f64,
    },
    #[error("SOS group {group} needs weights strictly increasing and at least one member")]
    InvalidSos { group: String },
    #[error("SOS group {group} member {var} has an infinite bound; no big-M is available")]
    UnboundedSosMember { group: String, var: String },
    #[error("solver backend '{0}' is not available")]
    BackendUnavailable(String),
    #[error("solver backend failure: {0}")]
    Backend(String),
}

/// Container for one mixed-integer linear program (maximisation).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MilpProblem {
    vars: Vec<Variable>,
    rows: Vec<Row>,
    sos: Vec<SosGroup>,
    objective: LinExpr,
    frozen: bool,
}

impl MilpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    fn ensure_mutable(&self) -> Result<(), MilpError> {
        if self.frozen {
            Err(MilpError::Frozen)
        } else {
            Ok(())
        }
    }

    pub fn add_variable(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        kind: VarKind,
    ) -> Result<VarId, MilpError> {
        self.ensure_mutable()?;
        let name = name.into();
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(MilpError::InvalidBounds { name, lower, upper });
        }
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            VarKind::Continuous => (lower, upper),
        };
        self.vars.push(Variable {
            name,
            lower,
            upper,
            kind,
        });
        Ok(VarId(self.vars.len() - 1))
    }

    pub fn add_continuous(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
    ) -> Result<VarId, MilpError> {
        self.add_variable(name, lower, upper, VarKind::Continuous)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> Result<VarId, MilpError> {
        self.add_variable(name, 0.0, 1.0, VarKind::Binary)
    }

    fn check_vars(&self, expr: &LinExpr) -> Result<(), MilpError> {
        for &(v, _) in expr.terms() {
            if v.0 >= self.vars.len() {
                return Err(MilpError::UnknownVariable(v.0));
            }
        }
        Ok(())
    }

    /// Adds `expr (sense) rhs`; any constant in `expr` moves to the right-hand side.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        constraint: LinearConstraint,
    ) -> Result<RowId, MilpError> {
        self.ensure_mutable()?;
        self.check_vars(&constraint.expr)?;
        let expr = constraint.expr.normalized();
        let rhs = constraint.rhs - expr.constant();
        self.rows.push(Row {
            name: name.into(),
            terms: expr.terms().to_vec(),
            sense: constraint.sense,
            rhs,
        });
        Ok(RowId(self.rows.len() - 1))
    }

    pub fn add_sos(
        &mut self,
        name: impl Into<String>,
        kind: SosKind,
        members: Vec<(VarId, f64)>,
    ) -> Result<SosId, MilpError> {
        self.ensure_mutable()?;
        let name = name.into();
        if members.is_empty() || members.windows(2).any(|w| w[1].1 <= w[0].1) {
            return Err(MilpError::InvalidSos { group: name });
        }
        for &(v, _) in &members {
            if v.0 >= self.vars.len() {
                return Err(MilpError::UnknownVariable(v.0));
            }
        }
        self.sos.push(SosGroup {
            name,
            kind,
            members,
        });
        Ok(SosId(self.sos.len() - 1))
    }

    pub fn set_objective(&mut self, objective: LinExpr) -> Result<(), MilpError> {
        self.ensure_mutable()?;
        self.check_vars(&objective)?;
        self.objective = objective.normalized();
        Ok(())
    }

    /// Fixes a variable to a value by collapsing its bounds.
    pub fn fix(&mut self, var: VarId, value: f64) -> Result<(), MilpError> {
        self.ensure_mutable()?;
        let v = self
            .vars
            .get_mut(var.0)
            .ok_or(MilpError::UnknownVariable(var.0))?;
        v.lower = value;
        v.upper = value;
        Ok(())
    }

    /// Copy of the problem with a different objective; keeps the frozen flag.
    pub fn with_objective(&self, objective: LinExpr) -> Result<MilpProblem, MilpError> {
        self.check_vars(&objective)?;
        let mut out = self.clone();
        out.objective = objective.normalized();
        Ok(out)
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn variable(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn sos_groups(&self) -> &[SosGroup] {
        &self.sos
    }

    pub fn objective(&self) -> &LinExpr {
        &self.objective
    }

    pub fn num_binaries(&self) -> usize {
        self.vars
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .count()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.evaluate(values)
    }

    /// Evaluates every bound, row, integrality and SOS condition against an
    /// assignment and returns the ones violated by more than `tol`.
    pub fn check(&self, values: &[f64], tol: f64) -> Vec<CheckViolation> {
        let mut out = Vec::new();
        if values.len() != self.vars.len() {
            out.push(CheckViolation {
                what: "assignment".into(),
                amount: f64::INFINITY,
            });
            return out;
        }
        for (v, &x) in self.vars.iter().zip(values) {
            let amount = (v.lower - x).max(x - v.upper).max(0.0);
            if amount > tol {
                out.push(CheckViolation {
                    what: format!("bound {}", v.name),
                    amount,
                });
            }
            if v.kind == VarKind::Binary {
                let frac = (x - x.round()).abs();
                if frac > tol {
                    out.push(CheckViolation {
                        what: format!("integrality {}", v.name),
                        amount: frac,
                    });
                }
            }
        }
        for row in &self.rows {
            let amount = row.violation(values);
            if amount > tol {
                out.push(CheckViolation {
                    what: format!("row {}", row.name),
                    amount,
                });
            }
        }
        for g in &self.sos {
            let nonzero: Vec<usize> = g
                .members
                .iter()
                .enumerate()
                .filter(|(_, (v, _))| values[v.0].abs() > tol)
                .map(|(i, _)| i)
                .collect();
            let ok = match g.kind {
                SosKind::One => nonzero.len() <= 1,
                SosKind::Two => {
                    nonzero.len() <= 1 || (nonzero.len() == 2 && nonzero[1] == nonzero[0] + 1)
                }
            };
            if !ok {
                out.push(CheckViolation {
                    what: format!("sos {}", g.name),
                    amount: nonzero.len() as f64,
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckViolation {
    pub what: String,
    pub amount: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Time limit reached; an incumbent may or may not be present.
    Limit,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Relative MIP gap at which the search stops.
    pub mip_gap: f64,
    pub time_limit: Duration,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            mip_gap: 1e-6,
            time_limit: Duration::from_secs(300),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MilpSolution {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    /// Present iff `status` is optimal or a limit was hit with an incumbent.
    pub values: Option<Vec<f64>>,
    pub wall_time: Duration,
}

impl MilpSolution {
    pub fn value(&self, v: VarId) -> Option<f64> {
        self.values.as_ref().map(|x| x[v.0])
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}
