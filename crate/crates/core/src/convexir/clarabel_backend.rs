use super::{
    Cone, ConvexProgram, Objective, ObjectiveSense, RowSense, Solution, SolveOptions, SolveStatus,
};
use super::expr::AffineExpr;
use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

/// Row-major triplet accumulator for the `A x + s = b` system.
#[derive(Default)]
struct Block {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
}

impl Block {
    fn len(&self) -> usize {
        self.b.len()
    }

    /// Appends the slack row `s = e(x)`, i.e. `A = -a`, `b = c`.
    fn push_slack(&mut self, e: &AffineExpr) {
        let r = self.b.len();
        for &(v, c) in &e.terms {
            if c != 0.0 {
                self.rows.push(r);
                self.cols.push(v.0);
                self.vals.push(-c);
            }
        }
        self.b.push(e.constant);
    }
}

/// The IR lowered to clarabel's standard form, minus the objective.
///
/// Compiling once and re-solving with different linear objectives is how OBBT
/// amortizes the conversion across its `min/max x` subproblems.
#[derive(Clone)]
pub struct CompiledProgram {
    n: usize,
    a: CscMatrix<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

impl CompiledProgram {
    pub fn new(program: &ConvexProgram) -> Self {
        let n = program.num_variables();
        let mut zero = Block::default();
        let mut nonneg = Block::default();
        let mut soc_blocks: Vec<(Block, usize)> = Vec::new();

        for (i, var) in program.variables().iter().enumerate() {
            let v = super::VarId(i);
            let (lo, hi) = (var.bounds.lo, var.bounds.hi);
            if lo == hi {
                zero.push_slack(&AffineExpr::from(v).with_constant(-lo));
                continue;
            }
            if lo.is_finite() && !var.implied_lo {
                nonneg.push_slack(&AffineExpr::from(v).with_constant(-lo));
            }
            if hi.is_finite() && !var.implied_hi {
                nonneg.push_slack(&AffineExpr::term(v, -1.0).with_constant(hi));
            }
        }
        for row in program.rows() {
            let e = row.expr.clone().with_constant(-row.rhs);
            match row.sense {
                RowSense::Eq => zero.push_slack(&e),
                RowSense::Ge => nonneg.push_slack(&e),
                RowSense::Le => nonneg.push_slack(&e.scaled(-1.0)),
            }
        }
        for cone in program.cones() {
            let mut blk = Block::default();
            match &cone.cone {
                Cone::SecondOrder { bound, members } => {
                    blk.push_slack(bound);
                    for m in members {
                        blk.push_slack(m);
                    }
                }
                Cone::Rotated { u, w, members } => {
                    blk.push_slack(&(u.clone() + w.clone()));
                    blk.push_slack(&(u.clone() - w.clone()));
                    for m in members {
                        blk.push_slack(&m.scaled(2.0));
                    }
                }
            }
            let dim = blk.len();
            soc_blocks.push((blk, dim));
        }

        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut b = Vec::new();
        let mut cones = Vec::new();
        let mut offset = 0usize;
        let mut append = |blk: &Block, rows: &mut Vec<usize>, b: &mut Vec<f64>| {
            rows.extend(blk.rows.iter().map(|r| r + offset));
            cols.extend_from_slice(&blk.cols);
            vals.extend_from_slice(&blk.vals);
            b.extend_from_slice(&blk.b);
            offset += blk.len();
        };
        if zero.len() > 0 {
            append(&zero, &mut rows, &mut b);
            cones.push(SupportedConeT::ZeroConeT(zero.len()));
        }
        if nonneg.len() > 0 {
            append(&nonneg, &mut rows, &mut b);
            cones.push(SupportedConeT::NonnegativeConeT(nonneg.len()));
        }
        for (blk, dim) in &soc_blocks {
            append(blk, &mut rows, &mut b);
            cones.push(SupportedConeT::SecondOrderConeT(*dim));
        }
        let m = b.len();
        let a = CscMatrix::new_from_triplets(m, n, rows, cols, vals);
        Self { n, a, b, cones }
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    fn objective_data(&self, objective: &Objective) -> (CscMatrix<f64>, Vec<f64>) {
        let sign = match objective.sense {
            ObjectiveSense::Minimize => 1.0,
            ObjectiveSense::Maximize => -1.0,
        };
        let mut q = vec![0.0; self.n];
        for &(v, c) in &objective.linear.terms {
            q[v.0] += sign * c;
        }
        let mut diag = vec![0.0; self.n];
        for &(v, c) in &objective.quadratic {
            // clarabel minimizes ½ xᵀPx
            diag[v.0] += 2.0 * sign * c;
        }
        let idx: Vec<usize> = (0..self.n).filter(|&i| diag[i] != 0.0).collect();
        let p = CscMatrix::new_from_triplets(
            self.n,
            self.n,
            idx.clone(),
            idx.clone(),
            idx.iter().map(|&i| diag[i]).collect(),
        );
        (p, q)
    }
}

fn settings(opts: &SolveOptions) -> DefaultSettings<f64> {
    // Solve tighter than the caller's contract so that optimal points pass the
    // independent re-check with margin.
    let inner = (opts.tol * 1e-2).clamp(1e-12, 1e-6);
    DefaultSettings {
        verbose: false,
        time_limit: opts.time_limit.as_secs_f64(),
        tol_gap_abs: inner,
        tol_gap_rel: inner,
        tol_feas: inner,
        tol_infeas_abs: inner,
        tol_infeas_rel: inner,
        tol_ktratio: 1e-7,
        presolve_enable: false,
        max_iter: 400,
        ..DefaultSettings::default()
    }
}

/// One backend solver instance. Not shared between threads; each OBBT worker
/// owns its own session.
pub struct ClarabelSession<'a> {
    program: &'a ConvexProgram,
    objective: Objective,
    solver: DefaultSolver<f64>,
    linear_only: bool,
}

impl<'a> ClarabelSession<'a> {
    pub fn new(program: &'a ConvexProgram, objective: &Objective, opts: &SolveOptions) -> Result<Self, String> {
        let compiled = CompiledProgram::new(program);
        Self::from_compiled(program, &compiled, objective, opts)
    }

    pub fn from_compiled(
        program: &'a ConvexProgram,
        compiled: &CompiledProgram,
        objective: &Objective,
        opts: &SolveOptions,
    ) -> Result<Self, String> {
        let (p, q) = compiled.objective_data(objective);
        let solver = DefaultSolver::new(&p, &q, &compiled.a, &compiled.b, &compiled.cones, settings(opts))
            .map_err(|e| format!("solver setup failed: {e}"))?;
        Ok(Self { program, objective: objective.clone(), solver, linear_only: objective.is_linear() })
    }

    /// Replaces a linear objective in place, reusing the factorization structure.
    /// Only valid when the session was created with a linear objective.
    pub fn set_linear_objective(&mut self, objective: &Objective) -> Result<(), String> {
        if !self.linear_only || !objective.is_linear() {
            return Err("in-place objective update requires linear objectives".into());
        }
        let sign = match objective.sense {
            ObjectiveSense::Minimize => 1.0,
            ObjectiveSense::Maximize => -1.0,
        };
        let mut q = vec![0.0; self.program.num_variables()];
        for &(v, c) in &objective.linear.terms {
            q[v.0] += sign * c;
        }
        self.solver.update_q(&q).map_err(|e| format!("objective update failed: {e:?}"))?;
        self.objective = objective.clone();
        Ok(())
    }

    pub fn solve(&mut self) -> Solution {
        if self.program.num_variables() == 0 {
            // the factorization of an empty KKT system is not supported by the backend
            return if self.program.max_violation(&[]) == 0.0 {
                Solution {
                    status: SolveStatus::Optimal,
                    primal: Some(Vec::new()),
                    objective: Some(self.objective.eval(&[])),
                    diagnostics: "empty program".into(),
                    solve_time: 0.0,
                }
            } else {
                Solution::failed(SolveStatus::Infeasible, "constant row violated")
            };
        }
        let start = std::time::Instant::now();
        self.solver.solve();
        let elapsed = start.elapsed().as_secs_f64();
        let sol = &self.solver.solution;
        let diag = format!(
            "clarabel {:?} iters={} r_prim={:.2e} r_dual={:.2e}",
            sol.status, sol.iterations, sol.r_prim, sol.r_dual
        );
        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
            SolverStatus::MaxTime => SolveStatus::TimeLimit,
            _ => SolveStatus::NumericLimit,
        };
        if status != SolveStatus::Optimal || sol.x.iter().any(|v| !v.is_finite()) {
            let status = if status == SolveStatus::Optimal { SolveStatus::NumericLimit } else { status };
            return Solution { solve_time: elapsed, ..Solution::failed(status, diag) };
        }
        let x = sol.x.clone();
        let objective = self.objective.eval(&x);
        Solution { status, primal: Some(x), objective: Some(objective), diagnostics: diag, solve_time: elapsed }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convexir::{ConvexProgram, ObjectiveSense};
    use crate::interval::Interval;

    #[test]
    fn session_reuse_matches_fresh_solves() {
        let mut p = ConvexProgram::new();
        let x = p.add_variable("x", Interval::new(-1.0, 2.0).unwrap());
        let y = p.add_variable("y", Interval::new(-1.0, 2.0).unwrap());
        p.add_linear(AffineExpr::from_terms([(x, 1.0), (y, 1.0)]), RowSense::Le, 1.5, "sum").unwrap();
        let opts = SolveOptions::default();
        let first = Objective::of_variable(x, ObjectiveSense::Maximize);
        let mut s = ClarabelSession::new(&p, &first, &opts).unwrap();
        let a = s.solve();
        assert!((a.objective.unwrap() - 2.0).abs() < 1e-6);
        s.set_linear_objective(&Objective::of_variable(y, ObjectiveSense::Minimize)).unwrap();
        let b = s.solve();
        assert!((b.objective.unwrap() + 1.0).abs() < 1e-6);
        s.set_linear_objective(&Objective::of_variable(y, ObjectiveSense::Maximize)).unwrap();
        assert!((s.solve().objective.unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn fixed_variables_become_equalities() {
        let mut p = ConvexProgram::new();
        let x = p.add_variable("x", Interval::point(0.25));
        let c = CompiledProgram::new(&p);
        assert!(matches!(c.cones[0], SupportedConeT::ZeroConeT(1)));
        let s = p.change_objective_to_variable(x, ObjectiveSense::Maximize).solve(&SolveOptions::default());
        assert!((s.objective.unwrap() - 0.25).abs() < 1e-9);
    }
}
