use super::{Branch, Bus, Generator, NetError, Network};
use num_complex::Complex64;
use std::collections::{HashMap, HashSet};

const MAX_ANGLE_DEG: f64 = 89.9;

struct Table {
    rows: Vec<(usize, Vec<f64>)>,
}

fn perr(line: usize, msg: impl Into<String>) -> NetError {
    NetError::Parse { line, msg: msg.into() }
}

fn strip_comment(line: &str) -> &str {
    let mut in_quote = false;
    for (i, c) in line.char_indices() {
        match c {
            '\'' => in_quote = !in_quote,
            '%' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}

struct Raw {
    name: String,
    base_mva: Option<f64>,
    tables: HashMap<String, Table>,
    last_line: usize,
}

fn scan(text: &str) -> Result<Raw, NetError> {
    let mut raw = Raw { name: String::new(), base_mva: None, tables: HashMap::new(), last_line: 0 };
    let mut current: Option<(String, Table, Vec<f64>, usize)> = None;
    let mut skipping_cell = false;

    for (i, full) in text.lines().enumerate() {
        let lineno = i + 1;
        raw.last_line = lineno;
        let mut rest = strip_comment(full).trim();

        if skipping_cell {
            if rest.contains('}') {
                skipping_cell = false;
            }
            continue;
        }

        if current.is_none() {
            if rest.is_empty() {
                continue;
            }
            if let Some(f) = rest.strip_prefix("function") {
                if let Some((_, name)) = f.split_once('=') {
                    raw.name = name.trim().to_string();
                }
                continue;
            }
            let Some(assign) = rest.strip_prefix("mpc.") else { continue };
            let Some((key, value)) = assign.split_once('=') else {
                return Err(perr(lineno, format!("expected assignment, found `{rest}`")));
            };
            let key = key.trim().to_string();
            let value = value.trim();
            if let Some(after) = value.strip_prefix('[') {
                current = Some((key, Table { rows: Vec::new() }, Vec::new(), lineno));
                rest = after.trim();
            } else if value.starts_with('{') {
                skipping_cell = !value.contains('}');
                continue;
            } else {
                let v = value.trim_end_matches(';').trim();
                match key.as_str() {
                    "baseMVA" => {
                        let b: f64 = v.parse().map_err(|_| perr(lineno, format!("bad baseMVA `{v}`")))?;
                        raw.base_mva = Some(b);
                    }
                    "version" => {
                        if v.trim_matches('\'') != "2" {
                            return Err(perr(lineno, format!("unsupported case version {v}")));
                        }
                    }
                    _ => {}
                }
                continue;
            }
        }

        let (_, table, row, start) = current.as_mut().expect("inside a matrix");
        let mut closed = false;
        let mut body = rest;
        if let Some(pos) = body.find(']') {
            closed = true;
            body = &body[..pos];
        }
        for (k, chunk) in body.split(';').enumerate() {
            if k > 0 && !row.is_empty() {
                table.rows.push((*start, std::mem::take(row)));
            }
            for tok in chunk.split(|c: char| c.is_whitespace() || c == ',') {
                if tok.is_empty() {
                    continue;
                }
                if row.is_empty() {
                    *start = lineno;
                }
                let v: f64 = tok.parse().map_err(|_| perr(lineno, format!("bad number `{tok}`")))?;
                row.push(v);
            }
        }
        // a newline also ends a row
        if !row.is_empty() {
            table.rows.push((*start, std::mem::take(row)));
        }
        if closed {
            let (key, table, _, _) = current.take().expect("inside a matrix");
            raw.tables.insert(key, table);
        }
    }
    if let Some((key, _, _, start)) = current {
        return Err(perr(start, format!("matrix mpc.{key} is never closed")));
    }
    Ok(raw)
}

fn need_cols(line: usize, row: &[f64], n: usize, what: &str) -> Result<(), NetError> {
    if row.len() < n {
        return Err(perr(line, format!("{what} row has {} columns, need at least {n}", row.len())));
    }
    Ok(())
}

fn as_id(line: usize, v: f64, what: &str) -> Result<usize, NetError> {
    if v < 0.0 || v.fract() != 0.0 {
        return Err(perr(line, format!("{what} `{v}` is not a bus number")));
    }
    Ok(v as usize)
}

fn clamp_angle(line: usize, deg: f64, lower: bool) -> f64 {
    let lim = if lower { -MAX_ANGLE_DEG } else { MAX_ANGLE_DEG };
    let out = if lower { deg < lim } else { deg > lim };
    if out {
        log::warn!("line {line}: angle bound {deg} deg clamped to {lim} deg");
        lim
    } else {
        deg
    }
}

/// Parses a MATPOWER v2 case into a validated per-unit [`Network`].
///
/// Out-of-service generators and branches and isolated (type 4) buses are dropped.
pub fn parse_case(text: &str) -> Result<Network, NetError> {
    let raw = scan(text)?;
    let eof = raw.last_line;
    let base = raw.base_mva.ok_or_else(|| perr(eof, "missing mpc.baseMVA"))?;
    if !(base > 0.0) {
        return Err(perr(eof, format!("baseMVA {base} must be positive")));
    }
    let table = |k: &str| raw.tables.get(k).ok_or_else(|| perr(eof, format!("missing mpc.{k}")));
    let bus_t = table("bus")?;
    let gen_t = table("gen")?;
    let branch_t = table("branch")?;
    let cost_t = table("gencost")?;

    let mut buses = Vec::new();
    let mut isolated = HashSet::new();
    for (line, r) in &bus_t.rows {
        need_cols(*line, r, 13, "bus")?;
        let id = as_id(*line, r[0], "bus id")?;
        if r[1] == 4.0 {
            isolated.insert(id);
            continue;
        }
        buses.push(Bus {
            id,
            reference: r[1] == 3.0,
            vl: r[12],
            vu: r[11],
            pd: r[2] / base,
            qd: r[3] / base,
            gs: r[4] / base,
            bs: r[5] / base,
        });
    }

    let mut generators = Vec::new();
    for (k, (line, r)) in gen_t.rows.iter().enumerate() {
        need_cols(*line, r, 10, "gen")?;
        let bus = as_id(*line, r[0], "generator bus")?;
        if r[7] <= 0.0 || isolated.contains(&bus) {
            continue;
        }
        let (cline, c) = cost_t
            .rows
            .get(k)
            .ok_or_else(|| perr(*line, format!("generator {} has no gencost row", k + 1)))?;
        need_cols(*cline, c, 4, "gencost")?;
        if c[0] != 2.0 {
            return Err(perr(*cline, format!("cost model {} unsupported (only polynomial)", c[0])));
        }
        let n = c[3] as usize;
        need_cols(*cline, c, 4 + n, "gencost")?;
        let coeffs = &c[4..4 + n];
        // highest degree first; anything beyond quadratic must vanish
        if n > 3 && coeffs[..n - 3].iter().any(|&x| x != 0.0) {
            return Err(perr(*cline, format!("polynomial cost of degree {} unsupported", n - 1)));
        }
        let coef = |deg: usize| if deg < n { coeffs[n - 1 - deg] } else { 0.0 };
        generators.push(Generator {
            bus,
            pgl: r[9] / base,
            pgu: r[8] / base,
            qgl: r[4] / base,
            qgu: r[3] / base,
            c2: coef(2) * base * base,
            c1: coef(1) * base,
            c0: coef(0),
        });
    }

    let mut branches = Vec::new();
    for (line, r) in &branch_t.rows {
        need_cols(*line, r, 11, "branch")?;
        if r[10] <= 0.0 {
            continue;
        }
        let from = as_id(*line, r[0], "branch from bus")?;
        let to = as_id(*line, r[1], "branch to bus")?;
        if isolated.contains(&from) || isolated.contains(&to) {
            continue;
        }
        let z = Complex64::new(r[2], r[3]);
        if z.norm() == 0.0 {
            return Err(perr(*line, "zero series impedance"));
        }
        let y = 1.0 / z;
        let tap = if r[8] == 0.0 { 1.0 } else { r[8] };
        let (amin, amax) = if r.len() >= 13 {
            (clamp_angle(*line, r[11], true), clamp_angle(*line, r[12], false))
        } else {
            log::warn!("line {line}: no angle bounds, using ±{MAX_ANGLE_DEG} deg");
            (-MAX_ANGLE_DEG, MAX_ANGLE_DEG)
        };
        if r[5] <= 0.0 {
            return Err(perr(*line, "branch has no thermal limit (rateA = 0)"));
        }
        branches.push(Branch {
            from,
            to,
            g: y.re,
            b: y.im,
            b_charge: r[4],
            tap,
            shift: r[9].to_radians(),
            su: r[5] / base,
            theta_l: amin.to_radians(),
            theta_u: amax.to_radians(),
        });
    }

    let net = Network { name: raw.name, base_mva: base, buses, generators, branches };
    net.validate()?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = "function mpc = two
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
  1 3 10 5 0 0 1 1 0 230 1 1.1 0.9;
  2 1 20 0 1 2 1 1 0 230 1 1.05 0.95;
];
mpc.gen = [ 1 0 0 50 -50 1 100 1 80 0 ];
mpc.gencost = [
  2 0 0 3 0.01 20 5;
];
mpc.branch = [
  1 2 0.01 0.1 0.02 100 100 100 0 0 1 -90 45;
];
";

    #[test]
    fn per_unit_conversion() {
        let n = parse_case(TWO_BUS).unwrap();
        assert_eq!(n.name, "two");
        assert_eq!(n.buses[1].pd, 0.2);
        assert_eq!(n.buses[1].gs, 0.01);
        assert_eq!(n.generators[0].pgu, 0.8);
        assert_eq!(n.generators[0].c2, 100.0);
        assert_eq!(n.generators[0].c1, 2000.0);
        assert_eq!(n.generators[0].c0, 5.0);
        assert_eq!(n.branches[0].tap, 1.0);
        assert_eq!(n.branches[0].su, 1.0);
    }

    #[test]
    fn right_angle_bound_is_clamped() {
        let n = parse_case(TWO_BUS).unwrap();
        assert_eq!(n.branches[0].theta_l, (-89.9f64).to_radians());
        assert_eq!(n.branches[0].theta_u, 45f64.to_radians());
    }

    #[test]
    fn bad_number_reports_line() {
        let text = TWO_BUS.replace("0.01 0.1", "0.01 x0.1");
        match parse_case(&text) {
            Err(NetError::Parse { line, .. }) => assert_eq!(line, 13),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cubic_cost_rejected() {
        let text = TWO_BUS.replace("2 0 0 3 0.01 20 5", "2 0 0 4 1 0.01 20 5");
        assert!(matches!(parse_case(&text), Err(NetError::Parse { line: 10, .. })));
        let text = TWO_BUS.replace("2 0 0 3 0.01 20 5", "2 0 0 4 0 0.01 20 5");
        assert_eq!(parse_case(&text).unwrap().generators[0].c2, 100.0);
    }

    #[test]
    fn piecewise_cost_rejected() {
        let text = TWO_BUS.replace("2 0 0 3 0.01 20 5", "1 0 0 2 0 0 80 1600");
        assert!(parse_case(&text).is_err());
    }

    #[test]
    fn unknown_bus_is_a_validation_error() {
        let text = TWO_BUS.replace("1 2 0.01", "1 7 0.01");
        assert!(matches!(parse_case(&text), Err(NetError::Validation { .. })));
    }

    #[test]
    fn unclosed_matrix() {
        let text = TWO_BUS.replace("  1 2 0.01 0.1 0.02 100 100 100 0 0 1 -90 45;\n];", "");
        assert!(matches!(parse_case(&text), Err(NetError::Parse { .. })));
    }
}
