use super::{Cone, ConvexProgram, ObjectiveSense, RowSense};
use super::expr::AffineExpr;
use std::fmt::Write as _;

fn fmt_expr(out: &mut String, e: &AffineExpr, names: &[String]) {
    let mut first = true;
    for &(v, c) in &e.terms {
        let sign = if c < 0.0 { "-" } else if first { "" } else { "+" };
        let _ = write!(out, "{}{} {:.17e} {}", if first { "" } else { " " }, sign, c.abs(), names[v.0]);
        first = false;
    }
    if e.constant != 0.0 || first {
        let sign = if e.constant < 0.0 { "-" } else if first { "" } else { "+" };
        let _ = write!(out, "{}{} {:.17e}", if first { "" } else { " " }, sign, e.constant.abs());
    }
}

/// Writes the program in a CPLEX-LP-like text form.
///
/// Cones are listed in a trailing `Cones` section as
/// `name: soc bound | m1 | m2 ...` or `name: rsoc u | w | m1 ...`, one per line,
/// since LP format has no cone syntax. Names are sanitized so each token is
/// whitespace-free.
pub fn write_lp_text(program: &ConvexProgram) -> String {
    let names: Vec<String> = program
        .variables()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let clean: String = v.name.chars().map(|c| if c.is_alphanumeric() || c == '_' { c } else { '_' }).collect();
            format!("x{i}_{clean}")
        })
        .collect();
    let mut out = String::new();
    let obj = program.objective();
    out.push_str(match obj.sense {
        ObjectiveSense::Minimize => "Minimize\n obj: ",
        ObjectiveSense::Maximize => "Maximize\n obj: ",
    });
    fmt_expr(&mut out, &obj.linear, &names);
    if !obj.quadratic.is_empty() {
        out.push_str(" + [");
        for (k, &(v, q)) in obj.quadratic.iter().enumerate() {
            let _ = write!(out, "{}{:.17e} {}^2", if k == 0 { " " } else { " + " }, 2.0 * q, names[v.0]);
        }
        out.push_str(" ] / 2");
    }
    out.push_str("\nSubject To\n");
    for (i, r) in program.rows().iter().enumerate() {
        let _ = write!(out, " r{i}_{}: ", r.family);
        fmt_expr(&mut out, &r.expr, &names);
        let op = match r.sense {
            RowSense::Le => "<=",
            RowSense::Eq => "=",
            RowSense::Ge => ">=",
        };
        let _ = writeln!(out, " {op} {:.17e}", r.rhs);
    }
    out.push_str("Bounds\n");
    for (i, v) in program.variables().iter().enumerate() {
        let b = v.bounds;
        match (b.lo.is_finite(), b.hi.is_finite()) {
            (true, true) if b.lo == b.hi => {
                let _ = writeln!(out, " {} = {:.17e}", names[i], b.lo);
            }
            (true, true) => {
                let _ = writeln!(out, " {:.17e} <= {} <= {:.17e}", b.lo, names[i], b.hi);
            }
            (true, false) => {
                let _ = writeln!(out, " {} >= {:.17e}", names[i], b.lo);
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {} <= {:.17e}", names[i], b.hi);
            }
            (false, false) => {
                let _ = writeln!(out, " {} free", names[i]);
            }
        }
    }
    if !program.cones().is_empty() {
        out.push_str("Cones\n");
        for (i, c) in program.cones().iter().enumerate() {
            let _ = write!(out, " c{i}_{}: ", c.family);
            let (kind, parts): (&str, Vec<&AffineExpr>) = match &c.cone {
                Cone::SecondOrder { bound, members } => ("soc", std::iter::once(bound).chain(members).collect()),
                Cone::Rotated { u, w, members } => ("rsoc", [u, w].into_iter().chain(members).collect()),
            };
            out.push_str(kind);
            for p in parts {
                out.push_str(" | ");
                fmt_expr(&mut out, p, &names);
            }
            out.push('\n');
        }
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convexir::Objective;
    use crate::interval::Interval;

    #[test]
    fn dump_lists_every_section() {
        let mut p = ConvexProgram::new();
        let x = p.add_variable("v[1]", Interval::new(0.9, 1.1).unwrap());
        let y = p.free_variable("y");
        p.add_linear(AffineExpr::from_terms([(x, 1.0), (y, -2.0)]), RowSense::Le, 3.0, "demo").unwrap();
        p.add_rotated_soc(x.into(), y.into(), vec![x.into()], "cone").unwrap();
        p.set_objective(Objective::minimize(x.into())).unwrap();
        let s = write_lp_text(&p);
        assert!(s.starts_with("Minimize"));
        assert!(s.contains("x0_v_1_"));
        assert!(s.contains("r0_demo:"));
        assert!(s.contains("x1_y free"));
        assert!(s.contains("c0_cone: rsoc"));
        assert!(s.trim_end().ends_with("End"));
    }
}
