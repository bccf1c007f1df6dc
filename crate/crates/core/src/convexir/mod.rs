//! Solver-agnostic intermediate representation for convex programs.
//!
//! A [`ConvexProgram`] holds bounded variables, sparse linear rows, second-order
//! cone rows (plain and rotated) and a convex objective with a diagonal quadratic
//! part. Backends consume the IR through [`solve`]; the only backend shipped is
//! the interior-point adapter in [`clarabel_backend`].

mod clarabel_backend;
mod dump;
mod expr;

pub use clarabel_backend::{ClarabelSession, CompiledProgram};
pub use dump::write_lp_text;
pub use expr::AffineExpr;

use crate::interval::Interval;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Duration;

/// Handle to a variable of one [`ConvexProgram`]. Ids are dense, starting at 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RowId(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConeId(pub(crate) usize);

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub bounds: Interval,
    /// Bound sides already enforced by rows or cones. They stay in `bounds`
    /// (envelope boxes, feasibility checks) but the backend does not emit them.
    #[serde(default, skip_serializing_if = "is_false")]
    pub implied_lo: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub implied_hi: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

/// `expr (sense) rhs`; any constant inside `expr` is moved to the right-hand side.
#[derive(Clone, Debug)]
pub struct LinearRow {
    pub expr: AffineExpr,
    pub sense: RowSense,
    pub rhs: f64,
    pub family: &'static str,
}

impl LinearRow {
    /// Amount by which the row is violated at `x` (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.expr.eval(x);
        match self.sense {
            RowSense::Le => (lhs - self.rhs).max(0.0),
            RowSense::Ge => (self.rhs - lhs).max(0.0),
            RowSense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Cone {
    /// `‖members‖₂ ≤ bound`.
    SecondOrder { bound: AffineExpr, members: Vec<AffineExpr> },
    /// `u · w ≥ ‖members‖²` with `u, w ≥ 0`.
    Rotated { u: AffineExpr, w: AffineExpr, members: Vec<AffineExpr> },
}

#[derive(Clone, Debug)]
pub struct ConeRow {
    pub cone: Cone,
    pub family: &'static str,
}

impl ConeRow {
    pub fn violation(&self, x: &[f64]) -> f64 {
        match &self.cone {
            Cone::SecondOrder { bound, members } => {
                let norm = members.iter().map(|m| m.eval(x).powi(2)).sum::<f64>().sqrt();
                (norm - bound.eval(x)).max(0.0)
            }
            Cone::Rotated { u, w, members } => {
                let (u, w) = (u.eval(x), w.eval(x));
                let sq = members.iter().map(|m| m.eval(x).powi(2)).sum::<f64>();
                // Compare in the equivalent SOC form so the violation scales linearly.
                let lhs = (4.0 * sq + (u - w).powi(2)).sqrt();
                (lhs - (u + w)).max(0.0)
            }
        }
    }

    /// Number of scalar entries in the cone once written as a standard SOC.
    pub fn dim(&self) -> usize {
        match &self.cone {
            Cone::SecondOrder { members, .. } => members.len() + 1,
            Cone::Rotated { members, .. } => members.len() + 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveSense {
    Minimize,
    Maximize,
}

/// `Σ qᵢ xᵢ² + linear`; convex when every `qᵢ ≥ 0` under minimization
/// (`≤ 0` under maximization).
#[derive(Clone, Debug)]
pub struct Objective {
    pub sense: ObjectiveSense,
    pub quadratic: Vec<(VarId, f64)>,
    pub linear: AffineExpr,
}

impl Default for Objective {
    fn default() -> Self {
        Self { sense: ObjectiveSense::Minimize, quadratic: Vec::new(), linear: AffineExpr::default() }
    }
}

impl Objective {
    pub fn minimize(linear: AffineExpr) -> Self {
        Self { sense: ObjectiveSense::Minimize, quadratic: Vec::new(), linear }
    }

    pub fn maximize(linear: AffineExpr) -> Self {
        Self { sense: ObjectiveSense::Maximize, quadratic: Vec::new(), linear }
    }

    pub fn of_variable(var: VarId, sense: ObjectiveSense) -> Self {
        Self { sense, quadratic: Vec::new(), linear: AffineExpr::from(var) }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.linear.eval(x) + self.quadratic.iter().map(|&(v, q)| q * x[v.0] * x[v.0]).sum::<f64>()
    }

    pub fn is_linear(&self) -> bool {
        self.quadratic.iter().all(|&(_, q)| q == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProgramError {
    #[error("unknown variable handle {0} (program has {1} variables)")]
    UnknownVariable(usize, usize),
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("objective is not convex: quadratic coefficient {coef} on `{name}` under {sense:?}")]
    NonConvexObjective { name: String, coef: f64, sense: ObjectiveSense },
    #[error("invalid bounds for `{name}`: [{lo}, {hi}]")]
    InvalidBounds { name: String, lo: f64, hi: f64 },
}

/// A convex program in building state. Once handed to a solver it is only
/// borrowed immutably, so distinct programs may be solved concurrently.
#[derive(Clone, Debug, Default)]
pub struct ConvexProgram {
    variables: Vec<Variable>,
    rows: Vec<LinearRow>,
    cones: Vec<ConeRow>,
    objective: Objective,
}

impl ConvexProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, name: impl Into<String>, bounds: Interval) -> VarId {
        let name = name.into();
        debug_assert!(bounds.lo <= bounds.hi, "bad bounds for {name}: {bounds}");
        self.variables.push(Variable { name, bounds, implied_lo: false, implied_hi: false });
        VarId(self.variables.len() - 1)
    }

    pub fn try_add_variable(&mut self, name: impl Into<String>, bounds: Interval) -> Result<VarId, ProgramError> {
        let name = name.into();
        if bounds.lo.is_nan() || bounds.hi.is_nan() || bounds.lo > bounds.hi {
            return Err(ProgramError::InvalidBounds { name, lo: bounds.lo, hi: bounds.hi });
        }
        Ok(self.add_variable(name, bounds))
    }

    pub fn free_variable(&mut self, name: impl Into<String>) -> VarId {
        self.add_variable(name, Interval::unbounded())
    }

    fn check_expr(&self, e: &AffineExpr, what: &'static str) -> Result<(), ProgramError> {
        let n = self.variables.len();
        for &(v, c) in &e.terms {
            if v.0 >= n {
                return Err(ProgramError::UnknownVariable(v.0, n));
            }
            if !c.is_finite() {
                return Err(ProgramError::NonFinite(what));
            }
        }
        if !e.constant.is_finite() {
            return Err(ProgramError::NonFinite(what));
        }
        Ok(())
    }

    pub fn add_linear(
        &mut self,
        expr: AffineExpr,
        sense: RowSense,
        rhs: f64,
        family: &'static str,
    ) -> Result<RowId, ProgramError> {
        self.check_expr(&expr, family)?;
        if !rhs.is_finite() {
            return Err(ProgramError::NonFinite(family));
        }
        let rhs = rhs - expr.constant;
        let expr = AffineExpr { constant: 0.0, ..expr }.compacted();
        self.rows.push(LinearRow { expr, sense, rhs, family });
        Ok(RowId(self.rows.len() - 1))
    }

    pub fn add_soc(
        &mut self,
        bound: AffineExpr,
        members: Vec<AffineExpr>,
        family: &'static str,
    ) -> Result<ConeId, ProgramError> {
        self.check_expr(&bound, family)?;
        for m in &members {
            self.check_expr(m, family)?;
        }
        self.cones.push(ConeRow { cone: Cone::SecondOrder { bound, members }, family });
        Ok(ConeId(self.cones.len() - 1))
    }

    pub fn add_rotated_soc(
        &mut self,
        u: AffineExpr,
        w: AffineExpr,
        members: Vec<AffineExpr>,
        family: &'static str,
    ) -> Result<ConeId, ProgramError> {
        self.check_expr(&u, family)?;
        self.check_expr(&w, family)?;
        for m in &members {
            self.check_expr(m, family)?;
        }
        self.cones.push(ConeRow { cone: Cone::Rotated { u, w, members }, family });
        Ok(ConeId(self.cones.len() - 1))
    }

    pub fn set_objective(&mut self, objective: Objective) -> Result<(), ProgramError> {
        self.check_objective(&objective)?;
        self.objective = objective;
        Ok(())
    }

    pub(crate) fn check_objective(&self, objective: &Objective) -> Result<(), ProgramError> {
        self.check_expr(&objective.linear, "objective")?;
        for &(v, q) in &objective.quadratic {
            if v.0 >= self.variables.len() {
                return Err(ProgramError::UnknownVariable(v.0, self.variables.len()));
            }
            if !q.is_finite() {
                return Err(ProgramError::NonFinite("objective"));
            }
            let convex = match objective.sense {
                ObjectiveSense::Minimize => q >= 0.0,
                ObjectiveSense::Maximize => q <= 0.0,
            };
            if !convex {
                return Err(ProgramError::NonConvexObjective {
                    name: self.variables[v.0].name.clone(),
                    coef: q,
                    sense: objective.sense,
                });
            }
        }
        Ok(())
    }

    /// Tightens (never loosens) the bounds of `v`.
    pub fn tighten_bounds(&mut self, v: VarId, bounds: Interval) {
        let b = &mut self.variables[v.0].bounds;
        b.lo = b.lo.max(bounds.lo);
        b.hi = b.hi.min(bounds.hi);
    }

    /// Declares sides of `v`'s box redundant given the constraints already added.
    pub fn mark_implied(&mut self, v: VarId, lo: bool, hi: bool) {
        let var = &mut self.variables[v.0];
        var.implied_lo |= lo;
        var.implied_hi |= hi;
    }

    pub fn set_bounds(&mut self, v: VarId, bounds: Interval) {
        self.variables[v.0].bounds = bounds;
    }

    pub fn variable(&self, v: VarId) -> &Variable {
        &self.variables[v.0]
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn rows(&self) -> &[LinearRow] {
        &self.rows
    }

    pub fn cones(&self) -> &[ConeRow] {
        &self.cones
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    /// View of this program whose objective is `±v`; constraints are shared.
    pub fn change_objective_to_variable(&self, v: VarId, sense: ObjectiveSense) -> ProgramView<'_> {
        ProgramView { program: self, objective: Objective::of_variable(v, sense) }
    }

    pub fn with_objective(&self, objective: Objective) -> ProgramView<'_> {
        ProgramView { program: self, objective }
    }

    /// Independent row-by-row feasibility check: the largest violation over
    /// variable bounds, linear rows and cones at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let bounds = self
            .variables
            .iter()
            .zip(x)
            .map(|(v, &xi)| (v.bounds.lo - xi).max(xi - v.bounds.hi).max(0.0))
            .fold(0.0, f64::max);
        let rows = self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
        let cones = self.cones.iter().map(|c| c.violation(x)).fold(0.0, f64::max);
        bounds.max(rows).max(cones)
    }

    /// Per-family row/cone counts, used for regression dumps.
    pub fn stats(&self) -> ProgramStats {
        let mut families: BTreeMap<String, FamilyStats> = BTreeMap::new();
        for r in &self.rows {
            let f = families.entry(r.family.to_string()).or_default();
            f.linear_rows += 1;
        }
        for c in &self.cones {
            let f = families.entry(c.family.to_string()).or_default();
            f.cones += 1;
        }
        ProgramStats {
            variables: self.variables.len(),
            linear_rows: self.rows.len(),
            cones: self.cones.len(),
            families,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyStats {
    pub linear_rows: usize,
    pub cones: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramStats {
    pub variables: usize,
    pub linear_rows: usize,
    pub cones: usize,
    pub families: BTreeMap<String, FamilyStats>,
}

/// A program with its objective swapped out.
#[derive(Clone, Debug)]
pub struct ProgramView<'a> {
    pub program: &'a ConvexProgram,
    pub objective: Objective,
}

impl ProgramView<'_> {
    pub fn solve(&self, opts: &SolveOptions) -> Solution {
        solve_with_objective(self.program, &self.objective, opts)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericLimit,
    TimeLimit,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Feasibility and optimality tolerance the caller relies on.
    pub tol: f64,
    pub time_limit: Duration,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-6, time_limit: Duration::from_secs(600) }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Solution {
    pub status: SolveStatus,
    /// Present iff `status == Optimal`.
    pub primal: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub diagnostics: String,
    pub solve_time: f64,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn value(&self, v: VarId) -> Option<f64> {
        self.primal.as_ref().map(|x| x[v.0])
    }

    pub(crate) fn failed(status: SolveStatus, diagnostics: impl Into<String>) -> Self {
        Self { status, primal: None, objective: None, diagnostics: diagnostics.into(), solve_time: 0.0 }
    }
}

/// Solves `program` with its own objective.
pub fn solve(program: &ConvexProgram, opts: &SolveOptions) -> Solution {
    solve_with_objective(program, &program.objective, opts)
}

pub fn solve_with_objective(program: &ConvexProgram, objective: &Objective, opts: &SolveOptions) -> Solution {
    if let Err(e) = program.check_objective(objective) {
        return Solution::failed(SolveStatus::NumericLimit, e.to_string());
    }
    match ClarabelSession::new(program, objective, opts) {
        Ok(mut session) => session.solve(),
        Err(e) => Solution::failed(SolveStatus::NumericLimit, e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn empty_program_is_optimal_with_zero_objective() {
        let p = ConvexProgram::new();
        let s = solve(&p, &SolveOptions::default());
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_eq!(s.objective, Some(0.0));
    }

    #[test]
    fn minimize_box_variable() {
        let mut p = ConvexProgram::new();
        let x = p.add_variable("x", iv(0.0, 1.0));
        p.set_objective(Objective::minimize(x.into())).unwrap();
        let s = solve(&p, &SolveOptions::default());
        assert!(s.is_optimal());
        assert!(s.value(x).unwrap().abs() < 1e-6);
    }

    #[test]
    fn rotated_cone_maximize_p() {
        // p² + q² ≤ w·l with w, l ∈ [0, 1]: the max of p is 1 at w = l = 1.
        let mut p = ConvexProgram::new();
        let pv = p.free_variable("p");
        let qv = p.free_variable("q");
        let w = p.add_variable("w", iv(0.0, 1.0));
        let l = p.add_variable("l", iv(0.0, 1.0));
        p.add_rotated_soc(w.into(), l.into(), vec![pv.into(), qv.into()], "cone").unwrap();
        let s = p.change_objective_to_variable(pv, ObjectiveSense::Maximize).solve(&SolveOptions::default());
        assert!(s.is_optimal());
        assert!((s.objective.unwrap() - 1.0).abs() < 1e-6);
        assert!((s.value(w).unwrap() - 1.0).abs() < 1e-5);
        assert!((s.value(l).unwrap() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn infeasible_pair_reports_infeasible() {
        let mut p = ConvexProgram::new();
        let x = p.free_variable("x");
        p.add_linear(x.into(), RowSense::Ge, 1.0, "a").unwrap();
        p.add_linear(x.into(), RowSense::Le, 0.0, "b").unwrap();
        p.set_objective(Objective::minimize(x.into())).unwrap();
        let s = solve(&p, &SolveOptions::default());
        assert_eq!(s.status, SolveStatus::Infeasible);
        assert!(s.primal.is_none());
    }

    #[test]
    fn unbounded_is_detected() {
        let mut p = ConvexProgram::new();
        let x = p.free_variable("x");
        p.add_linear(x.into(), RowSense::Le, 3.0, "a").unwrap();
        p.set_objective(Objective::minimize(x.into())).unwrap();
        let s = solve(&p, &SolveOptions::default());
        assert_eq!(s.status, SolveStatus::Unbounded);
    }

    #[test]
    fn unknown_handle_is_rejected() {
        let mut p = ConvexProgram::new();
        let err = p.add_linear(AffineExpr::from(VarId(3)), RowSense::Le, 0.0, "x").unwrap_err();
        assert_eq!(err, ProgramError::UnknownVariable(3, 0));
    }

    #[test]
    fn maximize_reports_unnegated_objective() {
        let mut p = ConvexProgram::new();
        let v = p.add_variable("v", iv(0.9, 1.1));
        let s = p.change_objective_to_variable(v, ObjectiveSense::Maximize).solve(&SolveOptions::default());
        assert!((s.objective.unwrap() - 1.1).abs() < 1e-7);
        // the base program keeps its own (empty) objective
        let s0 = solve(&p, &SolveOptions::default());
        assert_eq!(s0.objective, Some(0.0));
    }

    #[test]
    fn quadratic_objective_with_constant() {
        // min (x - 2)² = x² - 4x + 4 over x ∈ [0, 1] → x = 1, value 1.
        let mut p = ConvexProgram::new();
        let x = p.add_variable("x", iv(0.0, 1.0));
        let mut lin = AffineExpr::term(x, -4.0);
        lin.constant = 4.0;
        p.set_objective(Objective { sense: ObjectiveSense::Minimize, quadratic: vec![(x, 1.0)], linear: lin })
            .unwrap();
        let s = solve(&p, &SolveOptions::default());
        assert!((s.objective.unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn nonconvex_objective_rejected() {
        let mut p = ConvexProgram::new();
        let x = p.add_variable("x", iv(0.0, 1.0));
        let obj = Objective { sense: ObjectiveSense::Minimize, quadratic: vec![(x, -1.0)], linear: AffineExpr::default() };
        assert!(matches!(p.set_objective(obj), Err(ProgramError::NonConvexObjective { .. })));
    }

    #[test]
    fn optimal_points_pass_recheck() {
        let mut p = ConvexProgram::new();
        let x = p.add_variable("x", iv(-2.0, 2.0));
        let y = p.add_variable("y", iv(-2.0, 2.0));
        let t = p.add_variable("t", iv(0.0, 1.0));
        p.add_soc(t.into(), vec![x.into(), y.into()], "disk").unwrap();
        p.add_linear(AffineExpr::from_terms([(x, 1.0), (y, 1.0)]), RowSense::Ge, 0.5, "cut").unwrap();
        p.set_objective(Objective::minimize(AffineExpr::from_terms([(x, 1.0), (y, -2.0)]))).unwrap();
        let opts = SolveOptions::default();
        let s = solve(&p, &opts);
        assert!(s.is_optimal());
        assert!(p.max_violation(s.primal.as_ref().unwrap()) <= 10.0 * opts.tol);
        let again = solve(&p, &opts);
        assert!((again.objective.unwrap() - s.objective.unwrap()).abs() <= 10.0 * opts.tol);
    }
}
