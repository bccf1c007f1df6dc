use proptest::prelude::*;
use qcopf::convexir::*;
use qcopf::interval::Interval;

fn iv(lo: f64, hi: f64) -> Interval {
    Interval::new(lo, hi).unwrap()
}

fn opts() -> SolveOptions {
    SolveOptions::with_tol(1e-8)
}

#[test]
fn small_lp() {
    // max x + y  s.t.  x + 2y ≤ 4, 3x + y ≤ 6, x, y ≥ 0  →  (8/5, 6/5)
    let mut p = ConvexProgram::new();
    let x = p.add_variable("x", iv(0.0, f64::INFINITY));
    let y = p.add_variable("y", iv(0.0, f64::INFINITY));
    p.add_linear(AffineExpr::from_terms([(x, 1.0), (y, 2.0)]), RowSense::Le, 4.0, "a").unwrap();
    p.add_linear(AffineExpr::from_terms([(x, 3.0), (y, 1.0)]), RowSense::Le, 6.0, "a").unwrap();
    p.set_objective(Objective::maximize(AffineExpr::from_terms([(x, 1.0), (y, 1.0)]))).unwrap();
    let s = solve(&p, &opts());
    assert!(s.is_optimal());
    assert!((s.objective.unwrap() - 2.8).abs() < 1e-7);
    let xs = s.primal.unwrap();
    assert!((xs[0] - 1.6).abs() < 1e-6 && (xs[1] - 1.2).abs() < 1e-6);
    assert!(p.max_violation(&xs) < 1e-7);
}

#[test]
fn second_order_and_rotated_cones() {
    // min t  s.t.  ‖(x − 3, y − 4)‖ ≤ t  with x, y ∈ [0, 1]  →  t = √(4 + 9)
    let mut p = ConvexProgram::new();
    let t = p.free_variable("t");
    let x = p.add_variable("x", iv(0.0, 1.0));
    let y = p.add_variable("y", iv(0.0, 1.0));
    p.add_soc(t.into(), vec![AffineExpr::term(x, 1.0).with_constant(-3.0), AffineExpr::term(y, 1.0).with_constant(-4.0)], "c")
        .unwrap();
    p.set_objective(Objective::minimize(t.into())).unwrap();
    let s = solve(&p, &opts());
    assert!((s.objective.unwrap() - 13f64.sqrt()).abs() < 1e-7);

    // min u  s.t.  u · 2 ≥ x²,  x ≥ 3  →  u = 4.5
    let mut p = ConvexProgram::new();
    let u = p.free_variable("u");
    let x = p.add_variable("x", iv(3.0, 10.0));
    p.add_rotated_soc(u.into(), AffineExpr::constant(2.0), vec![x.into()], "r").unwrap();
    p.set_objective(Objective::minimize(u.into())).unwrap();
    let s = solve(&p, &opts());
    assert!((s.objective.unwrap() - 4.5).abs() < 1e-7);
}

#[test]
fn diagonal_quadratic_objective() {
    // min 2x² + x  over [−1, 1]  →  x = −1/4, value −1/8
    let mut p = ConvexProgram::new();
    let x = p.add_variable("x", iv(-1.0, 1.0));
    p.set_objective(Objective { sense: ObjectiveSense::Minimize, quadratic: vec![(x, 2.0)], linear: x.into() }).unwrap();
    let s = solve(&p, &opts());
    assert!((s.objective.unwrap() + 0.125).abs() < 1e-8);
}

#[test]
fn infeasible_and_unbounded_are_reported() {
    let mut p = ConvexProgram::new();
    let x = p.add_variable("x", iv(0.0, 1.0));
    p.add_linear(x.into(), RowSense::Ge, 2.0, "a").unwrap();
    p.set_objective(Objective::minimize(x.into())).unwrap();
    let s = solve(&p, &opts());
    assert_eq!(s.status, SolveStatus::Infeasible);
    assert!(s.primal.is_none() && s.objective.is_none());

    let mut p = ConvexProgram::new();
    let x = p.free_variable("x");
    p.set_objective(Objective::maximize(x.into())).unwrap();
    assert_eq!(solve(&p, &opts()).status, SolveStatus::Unbounded);
}

#[test]
fn bad_input_is_rejected() {
    let mut p = ConvexProgram::new();
    let x = p.add_variable("x", iv(0.0, 1.0));
    assert!(p.try_add_variable("y", Interval { lo: 1.0, hi: 0.0 }).is_err());
    assert!(p.add_linear(x.into(), RowSense::Le, f64::NAN, "a").is_err());
    let mut q = ConvexProgram::new();
    q.add_variable("a", iv(0.0, 1.0));
    q.add_variable("b", iv(0.0, 1.0));
    let foreign = q.add_variable("c", iv(0.0, 1.0));
    assert!(p.add_linear(foreign.into(), RowSense::Le, 1.0, "a").is_err());
}

#[test]
fn session_reuse_matches_fresh_solves() {
    let mut p = ConvexProgram::new();
    let x = p.add_variable("x", iv(-2.0, 2.0));
    let y = p.add_variable("y", iv(-2.0, 2.0));
    p.add_soc(AffineExpr::constant(1.0), vec![x.into(), y.into()], "disk").unwrap();
    let objs: Vec<Objective> = [(1.0, 0.0), (0.0, -1.0), (0.6, 0.8), (-1.0, 1.0)]
        .iter()
        .map(|&(a, b)| Objective::maximize(AffineExpr::from_terms([(x, a), (y, b)])))
        .collect();
    let mut session = ClarabelSession::new(&p, &objs[0], &opts()).unwrap();
    for o in &objs {
        session.set_linear_objective(o).unwrap();
        let reused = session.solve().objective.unwrap();
        let fresh = p.with_objective(o.clone()).solve(&opts()).objective.unwrap();
        let exact = o.linear.terms.iter().map(|(_, c)| c * c).sum::<f64>().sqrt();
        assert!((reused - fresh).abs() < 1e-7 && (reused - exact).abs() < 1e-7);
    }
}

#[test]
fn implied_bounds_are_dropped_but_still_checked() {
    let build = |implied: bool| {
        let mut p = ConvexProgram::new();
        let x = p.add_variable("x", iv(0.0, 1.0));
        let z = p.add_variable("z", iv(0.0, 1.0));
        p.add_linear(AffineExpr::from_terms([(z, 1.0), (x, -1.0)]), RowSense::Eq, 0.0, "a").unwrap();
        if implied {
            p.mark_implied(z, true, true);
        }
        p.set_objective(Objective::maximize(z.into())).unwrap();
        p
    };
    let (plain, lean) = (build(false), build(true));
    assert_eq!(CompiledProgram::new(&plain).num_rows(), CompiledProgram::new(&lean).num_rows() + 2);
    let (a, b) = (solve(&plain, &opts()), solve(&lean, &opts()));
    assert!((a.objective.unwrap() - b.objective.unwrap()).abs() < 1e-8);
    assert!(lean.max_violation(&[1.5, 1.5]) >= 0.5);
}

#[test]
fn lp_dump_lists_every_row_and_bound() {
    let mut p = ConvexProgram::new();
    let x = p.add_variable("x", iv(0.0, 1.0));
    let y = p.add_variable("y", Interval::point(2.0));
    p.add_linear(AffineExpr::from_terms([(x, 1.0), (y, 1.0)]), RowSense::Le, 3.0, "sum").unwrap();
    p.set_objective(Objective::minimize(x.into())).unwrap();
    let text = write_lp_text(&p);
    assert!(text.contains("Bounds"));
    assert!(text.contains("<="));
    assert!(text.lines().any(|l| l.contains(" = 2.0")));
}

#[test]
fn stats_count_families() {
    let mut p = ConvexProgram::new();
    let x = p.add_variable("x", iv(0.0, 1.0));
    p.add_linear(x.into(), RowSense::Le, 1.0, "a").unwrap();
    p.add_linear(x.into(), RowSense::Ge, 0.0, "a").unwrap();
    p.add_rotated_soc(x.into(), AffineExpr::constant(1.0), vec![x.into()], "b").unwrap();
    let s = p.stats();
    assert_eq!((s.linear_rows, s.cones), (2, 1));
    assert_eq!(s.families["a"].linear_rows, 2);
    assert_eq!(s.families["b"].cones, 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Optimal points of random feasible boxes-with-a-row LPs pass the
    /// independent row-by-row re-check and beat a grid of feasible points.
    #[test]
    fn optimal_points_recheck(c in prop::array::uniform3(-1.0..1.0f64), a in prop::array::uniform3(0.1..1.0f64), rhs in 0.5..2.0f64) {
        let mut p = ConvexProgram::new();
        let v: Vec<VarId> = (0..3).map(|i| p.add_variable(format!("x{i}"), iv(0.0, 1.0))).collect();
        p.add_linear(AffineExpr::from_terms(v.iter().copied().zip(a)), RowSense::Le, rhs, "cap").unwrap();
        p.set_objective(Objective::maximize(AffineExpr::from_terms(v.iter().copied().zip(c)))).unwrap();
        let s = solve(&p, &opts());
        prop_assert!(s.is_optimal());
        let xs = s.primal.unwrap();
        prop_assert!(p.max_violation(&xs) <= 1e-7);
        let best = s.objective.unwrap();
        for k in 0..125 {
            let g = [(k % 5) as f64 / 4.0, (k / 5 % 5) as f64 / 4.0, (k / 25) as f64 / 4.0];
            if g.iter().zip(a).map(|(x, w)| x * w).sum::<f64>() <= rhs {
                prop_assert!(g.iter().zip(c).map(|(x, w)| x * w).sum::<f64>() <= best + 1e-7);
            }
        }
    }
}
