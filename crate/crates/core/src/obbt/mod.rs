//! Optimization-based bound tightening over the QC relaxations.
//!
//! Each pass builds the relaxation at the current bounds, then minimizes and
//! maximizes every voltage magnitude and every bus-pair angle difference over
//! it. All subproblems of a pass see the same bounds, so the pass is a batch
//! of independent solves; results are merged once the batch completes.

mod tables;

pub use tables::{bound_table_csv, gap_table_csv, BoundRow, GapRow};

use crate::convexir::{
    AffineExpr, ClarabelSession, CompiledProgram, Objective, ObjectiveSense, SolveOptions, SolveStatus, VarId,
};
use crate::interval::Interval;
use crate::netdata::Network;
use crate::par;
use crate::relax::{build_with, BoundState, RelaxError, RelaxOptions, RelaxationKind, RelaxationModel};
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

const DIGITS: f64 = 1e4;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObbtConfig {
    pub kind: RelaxationKind,
    pub min_bound_width: f64,
    /// Stop once the average range reduction of a pass drops below this.
    pub improvement_tol: f64,
    pub solve_tol: f64,
    pub max_iterations: usize,
    /// Objective of a known AC-feasible point; enables the cost cut.
    pub upper_bound: Option<f64>,
    pub workers: usize,
    pub time_limit: Duration,
    pub relax: RelaxOptions,
}

impl Default for ObbtConfig {
    fn default() -> Self {
        Self {
            kind: RelaxationKind::Tlm,
            min_bound_width: 1e-3,
            improvement_tol: 1e-4,
            solve_tol: 1e-6,
            max_iterations: 100,
            upper_bound: None,
            workers: 1,
            time_limit: SolveOptions::default().time_limit,
            relax: RelaxOptions::default(),
        }
    }
}

impl ObbtConfig {
    pub fn validate(&self) -> Result<(), ObbtError> {
        let positive = [self.min_bound_width, self.improvement_tol, self.solve_tol];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(ObbtError::Config("widths and tolerances must be positive".into()));
        }
        if self.max_iterations == 0 || self.workers == 0 {
            return Err(ObbtError::Config("max_iterations and workers must be at least 1".into()));
        }
        if matches!(self.upper_bound, Some(f) if !f.is_finite()) {
            return Err(ObbtError::Config("upper bound must be finite".into()));
        }
        Ok(())
    }

    fn solve_options(&self) -> SolveOptions {
        SolveOptions { tol: self.solve_tol, time_limit: self.time_limit }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ObbtError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Relax(#[from] RelaxError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundMetrics {
    pub avg_vm_range: f64,
    pub avg_td_range: f64,
    /// Bus pairs whose angle difference has a fixed sign.
    pub td_sign_fixed: usize,
}

pub fn metrics(bounds: &BoundState) -> BoundMetrics {
    let avg = |v: &[Interval]| if v.is_empty() { 0.0 } else { v.iter().map(Interval::width).sum::<f64>() / v.len() as f64 };
    BoundMetrics {
        avg_vm_range: avg(&bounds.vm),
        avg_td_range: avg(&bounds.td),
        td_sign_fixed: bounds.td.iter().filter(|b| b.hi <= 0.0 || b.lo >= 0.0).count(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Average reduction of the last pass fell below the tolerance.
    Converged,
    /// No bound changed.
    FixedPoint,
    IterationLimit,
    /// Every subproblem was infeasible under the cost cut.
    CutInfeasible,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationSnapshot {
    pub iteration: usize,
    pub bounds: BoundState,
    pub metrics: BoundMetrics,
    pub avg_vm_reduction: f64,
    pub avg_td_reduction: f64,
    pub subproblems: usize,
    pub skipped: usize,
    pub failed: usize,
    pub cpu_time: f64,
    /// Longest single subproblem of the pass.
    pub parallel_time: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObbtReport {
    pub kind: RelaxationKind,
    pub upper_bound: Option<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub initial_metrics: BoundMetrics,
    pub metrics: BoundMetrics,
    pub final_bounds: BoundState,
    pub snapshots: Vec<IterationSnapshot>,
    pub subproblems: usize,
    pub wall_time: f64,
    /// Sum of all subproblem solve times.
    pub cpu_time: f64,
    /// Sum over passes of the longest subproblem: the runtime with one worker per subproblem.
    pub ideal_parallel_time: f64,
    pub diagnostics: Vec<String>,
}

/// Lower/upper bound rounded outward to four decimals.
fn round_down(x: f64) -> f64 {
    (x * DIGITS).floor() / DIGITS
}

fn round_up(x: f64) -> f64 {
    (x * DIGITS).ceil() / DIGITS
}

/// Turns a solver optimum into a bound on one side of `old`: outward-rounded,
/// never looser than `old`, never past the opposite bound.
pub fn tightened_side(old: Interval, value: f64, sense: ObjectiveSense) -> f64 {
    match sense {
        ObjectiveSense::Minimize => round_down(value).max(old.lo).min(old.hi),
        ObjectiveSense::Maximize => round_up(value).min(old.hi).max(old.lo),
    }
}

/// Combines the two tightened sides. An interval narrower than `min_width`
/// is widened to exactly `min_width` about its center, shifted to stay inside `old`.
pub fn merge_bounds(old: Interval, lo: f64, hi: f64, min_width: f64) -> Interval {
    let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    if hi - lo >= min_width || old.width() <= min_width {
        return Interval { lo, hi };
    }
    let c = 0.5 * (lo + hi);
    let mut b = Interval { lo: c - 0.5 * min_width, hi: c + 0.5 * min_width };
    if b.lo < old.lo {
        b = Interval { lo: old.lo, hi: old.lo + min_width };
    } else if b.hi > old.hi {
        b = Interval { lo: old.hi - min_width, hi: old.hi };
    }
    b
}

/// Builds the relaxation used by one pass (with the cost cut when configured).
pub fn pass_model(net: &Network, bounds: &BoundState, cfg: &ObbtConfig) -> Result<RelaxationModel, ObbtError> {
    let mut model = build_with(net, bounds, cfg.kind, cfg.relax)?;
    if let Some(f) = cfg.upper_bound {
        model.add_objective_cut(f)?;
    }
    Ok(model)
}

/// Solves `min` or `max` of `target` over `model` and returns the tightened
/// bound on that side, or the old bound when the solve is not optimal.
pub fn tighten_one(model: &RelaxationModel, target: VarId, sense: ObjectiveSense, cfg: &ObbtConfig) -> f64 {
    let old = model.program.variable(target).bounds;
    let s = model.program.change_objective_to_variable(target, sense).solve(&cfg.solve_options());
    match (s.status, s.objective) {
        (SolveStatus::Optimal, Some(v)) => tightened_side(old, v, sense),
        _ => match sense {
            ObjectiveSense::Minimize => old.lo,
            ObjectiveSense::Maximize => old.hi,
        },
    }
}

struct SubResult {
    status: Option<SolveStatus>,
    value: Option<f64>,
    time: f64,
    diagnostics: String,
}

pub fn run(net: &Network, init: &BoundState, cfg: &ObbtConfig) -> Result<ObbtReport, ObbtError> {
    cfg.validate()?;
    let start = Instant::now();
    let opts = cfg.solve_options();
    let mut bounds = init.clone();
    let mut snapshots = Vec::new();
    let mut diagnostics = Vec::new();
    let (mut cpu, mut ideal, mut total_sub) = (0.0, 0.0, 0usize);
    let mut termination = Termination::IterationLimit;

    for iteration in 1..=cfg.max_iterations {
        let model = pass_model(net, &bounds, cfg)?;
        let compiled = CompiledProgram::new(&model.program);
        let targets = model.tightening_targets();
        let nb = model.vm.len();
        // tasks: (target index, sense), buses ascending then pairs, min before max
        let tasks: Vec<(usize, ObjectiveSense)> = (0..targets.len())
            .flat_map(|t| [(t, ObjectiveSense::Minimize), (t, ObjectiveSense::Maximize)])
            .collect();
        let width = |t: usize| if t < nb { bounds.vm[t].width() } else { bounds.td[t - nb].width() };

        let results: Vec<SubResult> = par::map_init(
            tasks.len(),
            cfg.workers,
            || None::<ClarabelSession<'_>>,
            |session, k| {
                let (t, sense) = tasks[k];
                if width(t) <= cfg.min_bound_width {
                    return SubResult { status: None, value: None, time: 0.0, diagnostics: String::new() };
                }
                let obj = Objective { sense, quadratic: Vec::new(), linear: AffineExpr::term(targets[t], 1.0) };
                let t0 = Instant::now();
                let ready = match session {
                    Some(s) => s.set_linear_objective(&obj),
                    None => ClarabelSession::from_compiled(&model.program, &compiled, &obj, &opts).map(|s| {
                        *session = Some(s);
                    }),
                };
                let sol = match (ready, session.as_mut()) {
                    (Ok(()), Some(s)) => s.solve(),
                    (Err(e), _) => {
                        *session = None;
                        return SubResult {
                            status: Some(SolveStatus::NumericLimit),
                            value: None,
                            time: t0.elapsed().as_secs_f64(),
                            diagnostics: e,
                        };
                    }
                    (Ok(()), None) => unreachable!("session initialized above"),
                };
                SubResult {
                    status: Some(sol.status),
                    value: sol.objective.filter(|_| sol.is_optimal()),
                    time: t0.elapsed().as_secs_f64(),
                    diagnostics: sol.diagnostics,
                }
            },
        );

        let solved: Vec<&SubResult> = results.iter().filter(|r| r.status.is_some()).collect();
        let skipped = results.len() - solved.len();
        let failed = solved.iter().filter(|r| r.value.is_none()).count();
        let pass_cpu: f64 = results.iter().map(|r| r.time).sum();
        let pass_par = results.iter().map(|r| r.time).fold(0.0, f64::max);
        cpu += pass_cpu;
        ideal += pass_par;
        total_sub += solved.len();

        if cfg.upper_bound.is_some()
            && !solved.is_empty()
            && solved.iter().all(|r| r.status == Some(SolveStatus::Infeasible))
        {
            diagnostics.push(format!(
                "iteration {iteration}: relaxation certifies f* infeasible (every subproblem infeasible under the cost cut)"
            ));
            termination = Termination::CutInfeasible;
            break;
        }
        for (k, r) in results.iter().enumerate() {
            if let Some(st) = r.status.filter(|_| r.value.is_none()) {
                let (t, sense) = tasks[k];
                let name = &model.program.variable(targets[t]).name;
                let msg = if st == SolveStatus::Infeasible && cfg.upper_bound.is_some() {
                    format!("iteration {iteration}: {sense:?} {name}: relaxation certifies f* infeasible; bound kept")
                } else {
                    format!("iteration {iteration}: {sense:?} {name}: {st:?} ({}); bound kept", r.diagnostics)
                };
                log::warn!("{msg}");
                diagnostics.push(msg);
            }
        }

        let mut next = bounds.clone();
        for t in 0..targets.len() {
            let old = if t < nb { bounds.vm[t] } else { bounds.td[t - nb] };
            let side = |r: &SubResult, sense| match r.value {
                Some(v) => tightened_side(old, v, sense),
                None if sense == ObjectiveSense::Minimize => old.lo,
                None => old.hi,
            };
            let (rmin, rmax) = (&results[2 * t], &results[2 * t + 1]);
            if rmin.status.is_none() {
                continue;
            }
            let new = merge_bounds(
                old,
                side(rmin, ObjectiveSense::Minimize),
                side(rmax, ObjectiveSense::Maximize),
                cfg.min_bound_width,
            );
            debug_assert!(new.is_subset_of(&old), "bound loosened: {old} -> {new}");
            if t < nb {
                next.vm[t] = new;
            } else {
                next.td[t - nb] = new;
            }
        }

        let red = |a: &[Interval], b: &[Interval]| {
            if a.is_empty() {
                0.0
            } else {
                a.iter().zip(b).map(|(o, n)| o.width() - n.width()).sum::<f64>() / a.len() as f64
            }
        };
        let avg_vm_reduction = red(&bounds.vm, &next.vm);
        let avg_td_reduction = red(&bounds.td, &next.td);
        let changed = next != bounds;
        bounds = next;
        snapshots.push(IterationSnapshot {
            iteration,
            bounds: bounds.clone(),
            metrics: metrics(&bounds),
            avg_vm_reduction,
            avg_td_reduction,
            subproblems: solved.len(),
            skipped,
            failed,
            cpu_time: pass_cpu,
            parallel_time: pass_par,
        });
        log::info!(
            "obbt {} pass {iteration}: vm {:.4} td {:.4} sign {} ({} solves, {failed} failed)",
            cfg.kind,
            snapshots.last().map_or(0.0, |s| s.metrics.avg_vm_range),
            snapshots.last().map_or(0.0, |s| s.metrics.avg_td_range),
            snapshots.last().map_or(0, |s| s.metrics.td_sign_fixed),
            solved.len()
        );
        if !changed {
            termination = Termination::FixedPoint;
            break;
        }
        if avg_vm_reduction < cfg.improvement_tol && avg_td_reduction < cfg.improvement_tol {
            termination = Termination::Converged;
            break;
        }
    }

    Ok(ObbtReport {
        kind: cfg.kind,
        upper_bound: cfg.upper_bound,
        iterations: snapshots.len(),
        termination,
        initial_metrics: metrics(init),
        metrics: metrics(&bounds),
        final_bounds: bounds,
        snapshots,
        subproblems: total_sub,
        wall_time: start.elapsed().as_secs_f64(),
        cpu_time: cpu,
        ideal_parallel_time: ideal,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn metrics_of_symmetric_angles() {
        let b = BoundState { vm: vec![iv(0.9, 1.1)], td: vec![iv(-0.1, 0.1); 4] };
        let m = metrics(&b);
        assert!((m.avg_td_range - 0.2).abs() < 1e-15);
        assert_eq!(m.td_sign_fixed, 0);
        let b = BoundState { vm: vec![], td: vec![iv(0.0, 0.1), iv(-0.2, 0.0), iv(-0.1, 0.1)] };
        assert_eq!(metrics(&b).td_sign_fixed, 2);
    }

    #[test]
    fn noise_below_the_bound_never_loosens() {
        let old = iv(0.9, 1.1);
        assert_eq!(tightened_side(old, 0.8999999, ObjectiveSense::Minimize), 0.9);
        assert_eq!(tightened_side(old, 1.1000001, ObjectiveSense::Maximize), 1.1);
        assert_eq!(tightened_side(old, 0.95432, ObjectiveSense::Minimize), 0.9543);
        assert_eq!(tightened_side(old, 1.04321, ObjectiveSense::Maximize), 1.0433);
    }

    #[test]
    fn narrow_results_are_widened_about_the_center() {
        let b = merge_bounds(iv(0.9, 1.1), 1.0, 1.0002, 1e-3);
        assert!((b.width() - 1e-3).abs() < 1e-12);
        assert!((b.mid() - 1.0001).abs() < 1e-12);
        let b = merge_bounds(iv(0.9, 1.1), 0.9, 0.9002, 1e-3);
        assert_eq!(b.lo, 0.9);
        assert!((b.hi - 0.901).abs() < 1e-12);
    }
}
