use qcopf::convexir::ObjectiveSense;
use qcopf::interval::Interval;
use qcopf::netdata::{evaluate_ac_point, parse_case, AcPoint, Network};
use qcopf::obbt::*;
use qcopf::relax::*;
use std::path::PathBuf;

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(rel)
}

fn load(case: &str) -> Network {
    parse_case(&std::fs::read_to_string(data(&format!("pglib/pglib_opf_{case}.m"))).unwrap()).unwrap()
}

fn case14_point() -> AcPoint {
    serde_json::from_str(&std::fs::read_to_string(data("points/case14_ieee.json")).unwrap()).unwrap()
}

const TWO_BUS: &str = "
function mpc = two_bus
mpc.version = '2';
mpc.baseMVA = 100.0;
mpc.bus = [
	1	 3	 0.0	 0.0	 0.0	 0.0	 1	 1.0	 0.0	 230.0	 1	 1.05	 0.95;
	2	 1	 80.0	 20.0	 0.0	 0.0	 1	 1.0	 0.0	 230.0	 1	 1.05	 0.95;
];
mpc.gen = [
	1	 0.0	 0.0	 100.0	 -100.0	 1.0	 100.0	 1	 200.0	 0.0;
];
mpc.gencost = [
	2	 0.0	 0.0	 3	 0.01	 10.0	 0.0;
];
mpc.branch = [
	1	 2	 0.01	 0.1	 0.02	 250.0	 250.0	 250.0	 0.0	 0.0	 1	 -30.0	 30.0;
];
";

fn contains(outer: &BoundState, inner: &BoundState) -> bool {
    outer.vm.iter().zip(&inner.vm).chain(outer.td.iter().zip(&inner.td)).all(|(o, i)| i.is_subset_of(o))
}

fn cfg(kind: RelaxationKind) -> ObbtConfig {
    ObbtConfig { kind, ..Default::default() }
}

#[test]
fn bounds_contract_monotonically() {
    for case in ["case3_lmbd", "case5_pjm", "case14_ieee"] {
        let net = load(case);
        let init = BoundState::from_network(&net);
        for kind in RelaxationKind::ALL {
            let r = run(&net, &init, &cfg(kind)).unwrap();
            let mut prev = &init;
            for s in &r.snapshots {
                assert!(contains(prev, &s.bounds), "{case} {kind}: pass {} loosened a bound", s.iteration);
                assert!(s.avg_vm_reduction >= 0.0 && s.avg_td_reduction >= 0.0);
                prev = &s.bounds;
            }
            assert_eq!(&r.final_bounds, prev);
            assert_eq!(r.iterations, r.snapshots.len());
        }
    }
}

#[test]
fn known_ac_point_survives_tightening() {
    let net = load("case14_ieee");
    let point = case14_point();
    let res = evaluate_ac_point(&net, &point);
    assert!(res.max_violation() <= 1e-6);
    let pairs = net.bus_pairs();
    let inside = |b: &BoundState| {
        let vm_ok = b.vm.iter().zip(&point.v).all(|(iv, v)| iv.lo - 1e-9 <= *v && *v <= iv.hi + 1e-9);
        let td_ok = b.td.iter().zip(&pairs).all(|(iv, p)| {
            let d = point.theta[p.from] - point.theta[p.to];
            iv.lo - 1e-9 <= d && d <= iv.hi + 1e-9
        });
        vm_ok && td_ok
    };
    let init = BoundState::from_network(&net);
    assert!(inside(&init));
    for kind in RelaxationKind::ALL {
        let plain = run(&net, &init, &cfg(kind)).unwrap();
        assert!(plain.snapshots.iter().all(|s| inside(&s.bounds)), "{kind}: OBBT cut off a feasible point");
        // with the cost cut at the point's own cost the point stays feasible too
        let go = ObbtConfig { upper_bound: Some(res.objective * (1.0 + 1e-7)), ..cfg(kind) };
        let go = run(&net, &init, &go).unwrap();
        assert!(go.snapshots.iter().all(|s| inside(&s.bounds)), "{kind}: GO-OBBT cut off a feasible point");
        let m = build(&net, &go.final_bounds, kind).unwrap();
        let x = lift_ac_point(&m, &net, &point).unwrap();
        assert!(m.program.max_violation(&x) <= 1e-6);
    }
}

#[test]
fn repeated_runs_are_identical() {
    let net = load("case5_pjm");
    let init = BoundState::from_network(&net);
    let a = run(&net, &init, &cfg(RelaxationKind::Tlm)).unwrap();
    let b = run(&net, &init, &cfg(RelaxationKind::Tlm)).unwrap();
    let c = run(&net, &init, &ObbtConfig { workers: 2, ..cfg(RelaxationKind::Tlm) }).unwrap();
    assert_eq!(a.final_bounds, b.final_bounds);
    assert_eq!(a.final_bounds, c.final_bounds);
    assert_eq!(a.iterations, c.iterations);
    assert_eq!(a.termination, b.termination);
}

#[test]
fn tlm_ranges_dominate() {
    for case in ["case3_lmbd", "case5_pjm", "case14_ieee"] {
        let net = load(case);
        let init = BoundState::from_network(&net);
        let m = |k| run(&net, &init, &cfg(k)).unwrap().metrics;
        let (rm, lm, tlm) = (m(RelaxationKind::Rm), m(RelaxationKind::Lm), m(RelaxationKind::Tlm));
        for other in [rm, lm] {
            assert!(tlm.avg_vm_range <= other.avg_vm_range + 1e-6, "{case}: vm {tlm:?} vs {other:?}");
            assert!(tlm.avg_td_range <= other.avg_td_range + 1e-6, "{case}: td {tlm:?} vs {other:?}");
        }
    }
}

#[test]
fn go_obbt_never_lowers_the_bound() {
    let net = load("case5_pjm");
    let init = BoundState::from_network(&net);
    let f = 17551.8909;
    for kind in RelaxationKind::ALL {
        let before = build(&net, &init, kind).unwrap().solve(&Default::default()).objective.unwrap();
        let r = run(&net, &init, &ObbtConfig { upper_bound: Some(f), ..cfg(kind) }).unwrap();
        let after = build(&net, &r.final_bounds, kind).unwrap().solve(&Default::default()).objective.unwrap();
        assert!(after >= before - 10.0 * 1e-6 * before, "{kind}: {after} < {before}");
        assert!(after <= f * (1.0 + 1e-6));
    }
}

#[test]
fn cost_cut_only_shrinks_angle_ranges() {
    let net = load("case5_pjm");
    let init = BoundState::from_network(&net);
    let plain = cfg(RelaxationKind::Tlm);
    let cut = ObbtConfig { upper_bound: Some(17551.8909), ..plain.clone() };
    let (m0, m1) = (pass_model(&net, &init, &plain).unwrap(), pass_model(&net, &init, &cut).unwrap());
    for (p0, p1) in m0.pair_vars.iter().zip(&m1.pair_vars) {
        let hi0 = tighten_one(&m0, p0.td, ObjectiveSense::Maximize, &plain);
        let hi1 = tighten_one(&m1, p1.td, ObjectiveSense::Maximize, &cut);
        assert!(hi1 <= hi0);
        let lo0 = tighten_one(&m0, p0.td, ObjectiveSense::Minimize, &plain);
        let lo1 = tighten_one(&m1, p1.td, ObjectiveSense::Minimize, &cut);
        assert!(lo1 >= lo0);
    }
}

#[test]
fn tightened_toy_is_a_fixed_point() {
    let net = parse_case(TWO_BUS).unwrap();
    let init = BoundState::from_network(&net);
    let to_fixed = ObbtConfig { improvement_tol: 1e-12, ..cfg(RelaxationKind::Tlm) };
    let first = run(&net, &init, &to_fixed).unwrap();
    assert_eq!(first.termination, Termination::FixedPoint);
    let again = run(&net, &first.final_bounds, &to_fixed).unwrap();
    assert_eq!(again.iterations, 1);
    assert_eq!(again.termination, Termination::FixedPoint);
    assert_eq!(again.final_bounds, first.final_bounds);
}

#[test]
fn infeasible_cut_is_reported_not_fatal() {
    let net = load("case5_pjm");
    let init = BoundState::from_network(&net);
    // far below the relaxation bound: every subproblem is infeasible
    let r = run(&net, &init, &ObbtConfig { upper_bound: Some(1000.0), ..cfg(RelaxationKind::Rm) }).unwrap();
    assert_eq!(r.termination, Termination::CutInfeasible);
    assert_eq!(r.final_bounds, init);
    assert!(r.diagnostics.iter().any(|d| d.contains("certifies f* infeasible")));
}

#[test]
fn config_is_validated() {
    let net = load("case3_lmbd");
    let init = BoundState::from_network(&net);
    for bad in [
        ObbtConfig { min_bound_width: 0.0, ..Default::default() },
        ObbtConfig { improvement_tol: -1.0, ..Default::default() },
        ObbtConfig { workers: 0, ..Default::default() },
        ObbtConfig { upper_bound: Some(f64::NAN), ..Default::default() },
    ] {
        assert!(matches!(run(&net, &init, &bad), Err(ObbtError::Config(_))));
    }
}

#[test]
fn case14_table_row() {
    let net = load("case14_ieee");
    let r = run(&net, &BoundState::from_network(&net), &cfg(RelaxationKind::Tlm)).unwrap();
    assert!((r.metrics.avg_vm_range - 0.0883).abs() <= 2e-3);
    assert!((r.metrics.avg_td_range - 0.0164).abs() <= 2e-3);
    assert!(r.metrics.td_sign_fixed.abs_diff(18) <= 1);
    assert_eq!(r.subproblems, r.snapshots.iter().map(|s| s.subproblems).sum::<usize>());
    assert!(r.snapshots.iter().all(|s| s.subproblems + s.skipped == 2 * (net.buses.len() + net.bus_pairs().len())));
}

#[test]
fn min_width_clamp_keeps_the_point() {
    let b = merge_bounds(Interval { lo: 0.9, hi: 1.1 }, 1.05, 1.0502, 1e-3);
    assert!((b.width() - 1e-3).abs() < 1e-12);
    assert!(b.lo <= 1.05 && b.hi >= 1.0502);
}
