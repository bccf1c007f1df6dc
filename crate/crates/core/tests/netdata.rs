use num_complex::Complex64;
use qcopf::netdata::{branch_admittance, evaluate_ac_point, parse_case, AcPoint, Branch, Network};
use std::path::PathBuf;

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(rel)
}

fn load(case: &str) -> Network {
    let text = std::fs::read_to_string(data(&format!("pglib/pglib_opf_{case}.m"))).unwrap();
    parse_case(&text).unwrap()
}

fn point(case: &str) -> AcPoint {
    serde_json::from_str(&std::fs::read_to_string(data(&format!("points/{case}.json"))).unwrap()).unwrap()
}

#[test]
fn pglib_sizes() {
    let n = load("case3_lmbd");
    assert_eq!((n.buses.len(), n.branches.len()), (3, 3));
    let n = load("case5_pjm");
    assert_eq!((n.buses.len(), n.branches.len()), (5, 6));
    let n = load("case14_ieee");
    assert_eq!((n.buses.len(), n.branches.len()), (14, 20));
    let n = load("case118_ieee__api");
    assert_eq!(n.buses.len(), 118);
}

#[test]
fn every_shipped_case_parses() {
    for entry in std::fs::read_dir(data("pglib")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "m") {
            let net = parse_case(&std::fs::read_to_string(&path).unwrap())
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(net.is_connected(), "{}", path.display());
        }
    }
}

#[test]
fn json_round_trip_is_identical() {
    for case in ["case3_lmbd", "case24_ieee_rts__api", "case89_pegase__api"] {
        let net = load(case);
        let back = Network::from_json(&net.to_json()).unwrap();
        assert_eq!(net, back);
    }
}

#[test]
fn doubling_base_halves_per_unit_demand() {
    let text = std::fs::read_to_string(data("pglib/pglib_opf_case5_pjm.m")).unwrap();
    let a = parse_case(&text).unwrap();
    let b = parse_case(&text.replace("mpc.baseMVA = 100.0;", "mpc.baseMVA = 200.0;")).unwrap();
    for (x, y) in a.buses.iter().zip(&b.buses) {
        assert!((x.pd - 2.0 * y.pd).abs() < 1e-12);
        assert!((x.qd - 2.0 * y.qd).abs() < 1e-12);
    }
}

/// Textbook two-bus Ybus for a Π branch with an ideal transformer at the
/// from end, then `S = V ∘ conj(Y V)`.
fn ybus_flows(br: &Branch, vf: Complex64, vt: Complex64) -> (Complex64, Complex64) {
    let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.series_impedance().re, br.series_impedance().im);
    let bc = Complex64::new(0.0, br.b_charge / 2.0);
    let t = Complex64::from_polar(br.tap, br.shift);
    let y11 = (ys + bc) / (t * t.conj());
    let y12 = -ys / t.conj();
    let y21 = -ys / t;
    let y22 = ys + bc;
    let i_f = y11 * vf + y12 * vt;
    let i_t = y21 * vf + y22 * vt;
    (vf * i_f.conj(), vt * i_t.conj())
}

#[test]
fn admittance_matches_ybus_oracle() {
    let cases = [(1.0, 0.0, 0.0), (1.0, 0.0, 0.2), (1.05, 0.0, 0.0), (0.97, 0.1, 0.35), (1.1, -0.2, 0.05)];
    for (tap, shift, b_charge) in cases {
        let br = Branch {
            from: 1,
            to: 2,
            g: 2.0,
            b: -9.0,
            b_charge,
            tap,
            shift,
            su: 1.0,
            theta_l: -0.5,
            theta_u: 0.5,
        };
        let y = branch_admittance(&br).unwrap();
        let (vf, vt) = (Complex64::from_polar(1.03, 0.12), Complex64::from_polar(0.96, -0.07));
        let wij = vf * vt.conj();
        let sij = y.yff.conj() * vf.norm_sqr() - y.yft.conj() * wij;
        let sji = y.ytt.conj() * vt.norm_sqr() - y.ytf.conj() * wij.conj();
        let (of, ot) = ybus_flows(&br, vf, vt);
        assert!((sij - of).norm() < 1e-12, "{tap} {shift} {b_charge}");
        assert!((sji - ot).norm() < 1e-12, "{tap} {shift} {b_charge}");
    }
    let scaled = branch_admittance(&Branch { tap: 1.05, b_charge: 0.0, shift: 0.0, ..base_branch() }).unwrap();
    let ys = Complex64::new(2.0, -9.0);
    assert!((scaled.yff - ys / (1.05 * 1.05)).norm() < 1e-14);
    assert!((scaled.yft - ys / 1.05).norm() < 1e-14);
    assert!((scaled.ytf - ys / 1.05).norm() < 1e-14);
}

fn base_branch() -> Branch {
    Branch { from: 1, to: 2, g: 2.0, b: -9.0, b_charge: 0.0, tap: 1.0, shift: 0.0, su: 1.0, theta_l: -0.5, theta_u: 0.5 }
}

#[test]
fn shipped_ac_points_are_feasible_with_recorded_costs() {
    for case in ["case3_lmbd", "case5_pjm", "case14_ieee", "case24_ieee_rts", "case30_ieee"] {
        let net = load(case);
        let p = point(case);
        let r = evaluate_ac_point(&net, &p);
        assert!(r.max_violation() < 1e-6, "{case}: {r:?}");
        let rec = p.objective.unwrap();
        assert!((r.objective - rec).abs() <= 1e-6 * rec, "{case}: {} vs {rec}", r.objective);
    }
    let r = evaluate_ac_point(&load("case5_pjm"), &point("case5_pjm"));
    assert!((r.objective - 1.7552e4).abs() < 1.0);
}

#[test]
fn perturbed_voltage_breaks_balance() {
    let net = load("case5_pjm");
    let mut p = point("case5_pjm");
    p.v[2] += 0.1;
    assert!(evaluate_ac_point(&net, &p).balance_q > 1e-3);
}
