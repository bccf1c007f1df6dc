//! QC relaxations of AC-OPF in the lifted `(w, wr, wi)` space.
//!
//! Three variants share everything except the envelope of the voltage-product
//! trilinear terms `vᵢvⱼ cos θᵢⱼ` and `vᵢvⱼ sin θᵢⱼ`:
//! recursive McCormick through a shared `vᵢvⱼ` ([`RelaxationKind::Rm`]), two
//! independent extreme-point systems ([`RelaxationKind::Lm`]), and the same with
//! the linking row ([`RelaxationKind::Tlm`]).

mod lift;
mod lnc;

pub use lift::lift_ac_point;
pub use lnc::{lnc_rows, LncRow};

use crate::convexir::{
    self, AffineExpr, ConvexProgram, Objective, ObjectiveSense, ProgramError, ProgramStats, RowSense, Solution,
    SolveOptions, SolveStatus, VarId,
};
use crate::envelopes::{
    cosine_envelope, link_lambdas, mccormick, sine_envelope, square_envelope, trilinear_lambda, EnvelopeError,
};
use crate::interval::Interval;
use crate::netdata::{branch_admittance, BusPair, Network};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelaxationKind {
    Rm,
    Lm,
    Tlm,
}

impl RelaxationKind {
    pub const ALL: [RelaxationKind; 3] = [RelaxationKind::Rm, RelaxationKind::Lm, RelaxationKind::Tlm];

    pub fn as_str(self) -> &'static str {
        match self {
            RelaxationKind::Rm => "rm",
            RelaxationKind::Lm => "lm",
            RelaxationKind::Tlm => "tlm",
        }
    }
}

impl fmt::Display for RelaxationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelaxationKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "rm" | "qc-rm" => Ok(RelaxationKind::Rm),
            "lm" | "qc-lm" => Ok(RelaxationKind::Lm),
            "tlm" | "qc-tlm" => Ok(RelaxationKind::Tlm),
            other => Err(format!("unknown relaxation `{other}` (expected rm, lm or tlm)")),
        }
    }
}

/// Voltage-magnitude bounds per bus and angle-difference bounds per bus pair
/// (in the order of [`Network::bus_pairs`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundState {
    pub vm: Vec<Interval>,
    pub td: Vec<Interval>,
}

#[derive(Debug, thiserror::Error)]
pub enum RelaxError {
    #[error("bound state has {got} {what} entries, network needs {want}")]
    Shape { what: &'static str, got: usize, want: usize },
    #[error("invalid bound for {what} {index}: {bound}")]
    Bound { what: &'static str, index: usize, bound: Interval },
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error("{0}")]
    Network(String),
}

impl BoundState {
    pub fn from_network(net: &Network) -> Self {
        Self {
            vm: net.buses.iter().map(|b| Interval { lo: b.vl, hi: b.vu }).collect(),
            td: net.bus_pairs().iter().map(|p| Interval { lo: p.theta_l, hi: p.theta_u }).collect(),
        }
    }

    pub fn validate(&self, net: &Network, pairs: &[BusPair]) -> Result<(), RelaxError> {
        if self.vm.len() != net.buses.len() {
            return Err(RelaxError::Shape { what: "vm", got: self.vm.len(), want: net.buses.len() });
        }
        if self.td.len() != pairs.len() {
            return Err(RelaxError::Shape { what: "td", got: self.td.len(), want: pairs.len() });
        }
        for (i, b) in self.vm.iter().enumerate() {
            if !(b.lo > 0.0 && b.lo <= b.hi && b.hi.is_finite()) {
                return Err(RelaxError::Bound { what: "vm", index: i, bound: *b });
            }
        }
        for (i, b) in self.td.iter().enumerate() {
            if !(-FRAC_PI_2 < b.lo && b.lo <= b.hi && b.hi < FRAC_PI_2) {
                return Err(RelaxError::Bound { what: "td", index: i, bound: *b });
            }
        }
        Ok(())
    }
}

/// Optional strengthening rows beyond the core model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelaxOptions {
    /// Lifted nonlinear cuts.
    pub lnc: bool,
    /// `tan(θl)·wr ≤ wi ≤ tan(θu)·wr`.
    pub angle_tangent_cuts: bool,
    /// `wr² + wi² ≤ wᵢ wⱼ`.
    pub w_soc: bool,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        Self { lnc: true, angle_tangent_cuts: true, w_soc: false }
    }
}

#[derive(Clone, Debug)]
pub struct PairVars {
    pub td: VarId,
    pub cs: VarId,
    pub sn: VarId,
    pub wr: VarId,
    pub wi: VarId,
    /// Shared `vᵢvⱼ` McCormick output (RM only).
    pub vv: Option<VarId>,
    /// Multipliers of the cosine and sine trilinear systems (LM/TLM only).
    pub lambda_c: Option<[VarId; 8]>,
    pub lambda_s: Option<[VarId; 8]>,
}

#[derive(Clone, Debug)]
pub struct BranchVars {
    pub p_fr: VarId,
    pub q_fr: VarId,
    pub p_to: VarId,
    pub q_to: VarId,
    /// Squared series current.
    pub l: VarId,
}

/// A relaxation as a convex program plus handles for every network quantity.
#[derive(Clone, Debug)]
pub struct RelaxationModel {
    pub program: ConvexProgram,
    pub kind: RelaxationKind,
    pub options: RelaxOptions,
    pub bounds: BoundState,
    pub pairs: Vec<BusPair>,
    pub vm: Vec<VarId>,
    pub va: Vec<VarId>,
    pub w: Vec<VarId>,
    pub pair_vars: Vec<PairVars>,
    pub branch_vars: Vec<BranchVars>,
    pub pg: Vec<VarId>,
    pub qg: Vec<VarId>,
    /// Epigraph variables `t ≥ pg²` created by [`RelaxationModel::add_objective_cut`].
    pub cost_epigraph: Vec<Option<VarId>>,
}

pub fn build(net: &Network, bounds: &BoundState, kind: RelaxationKind) -> Result<RelaxationModel, RelaxError> {
    build_with(net, bounds, kind, RelaxOptions::default())
}

pub fn build_with(
    net: &Network,
    bounds: &BoundState,
    kind: RelaxationKind,
    options: RelaxOptions,
) -> Result<RelaxationModel, RelaxError> {
    let pairs = net.bus_pairs();
    bounds.validate(net, &pairs)?;
    let idx = net.index_map();
    let mut p = ConvexProgram::new();

    let mut vm = Vec::new();
    let mut va = Vec::new();
    let mut w = Vec::new();
    let reference = net.reference_bus();
    for (i, bus) in net.buses.iter().enumerate() {
        let v = p.add_variable(format!("vm[{}]", bus.id), bounds.vm[i]);
        let a = if i == reference {
            p.add_variable(format!("va[{}]", bus.id), Interval::point(0.0))
        } else {
            p.free_variable(format!("va[{}]", bus.id))
        };
        w.push(square_envelope(&mut p, v, bounds.vm[i])?.output);
        vm.push(v);
        va.push(a);
    }

    let mut pair_vars = Vec::with_capacity(pairs.len());
    for (k, pair) in pairs.iter().enumerate() {
        let (i, j) = (pair.from, pair.to);
        let (bi, bj, bt) = (bounds.vm[i], bounds.vm[j], bounds.td[k]);
        let tag = format!("{},{}", net.buses[i].id, net.buses[j].id);
        let td = p.add_variable(format!("td[{tag}]"), bt);
        p.add_linear(AffineExpr::from_terms([(td, 1.0), (va[i], -1.0), (va[j], 1.0)]), RowSense::Eq, 0.0, "angle_diff")?;
        let cs_sys = cosine_envelope(&mut p, td, bt)?;
        let sn_sys = sine_envelope(&mut p, td, bt)?;
        let (cs, sn) = (cs_sys.output, sn_sys.output);
        let bcs = p.variable(cs).bounds;
        let bsn = p.variable(sn).bounds;
        let vars = match kind {
            RelaxationKind::Rm => {
                let vv = mccormick(&mut p, vm[i], vm[j], bi, bj)?.output;
                let bvv = bi.mul(&bj);
                let wr = mccormick(&mut p, vv, cs, bvv, bcs)?.output;
                let wi = mccormick(&mut p, vv, sn, bvv, bsn)?.output;
                PairVars { td, cs, sn, wr, wi, vv: Some(vv), lambda_c: None, lambda_s: None }
            }
            RelaxationKind::Lm | RelaxationKind::Tlm => {
                let lc = trilinear_lambda(&mut p, [vm[i], vm[j], cs], [bi, bj, bcs])?;
                let ls = trilinear_lambda(&mut p, [vm[i], vm[j], sn], [bi, bj, bsn])?;
                if kind == RelaxationKind::Tlm {
                    link_lambdas(&mut p, &lc, &ls)?;
                }
                PairVars {
                    td,
                    cs,
                    sn,
                    wr: lc.envelope.output,
                    wi: ls.envelope.output,
                    vv: None,
                    lambda_c: Some(lc.lambda),
                    lambda_s: Some(ls.lambda),
                }
            }
        };
        let (wr, wi) = (vars.wr, vars.wi);
        if options.angle_tangent_cuts {
            p.add_linear(AffineExpr::from_terms([(wi, 1.0), (wr, -bt.hi.tan())]), RowSense::Le, 0.0, "angle_tan")?;
            p.add_linear(AffineExpr::from_terms([(wi, 1.0), (wr, -bt.lo.tan())]), RowSense::Ge, 0.0, "angle_tan")?;
        }
        if options.lnc {
            for row in lnc_rows(bi, bj, bt) {
                p.add_linear(
                    AffineExpr::from_terms([(w[i], row.w_i), (w[j], row.w_j), (wr, row.wr), (wi, row.wi)]),
                    RowSense::Ge,
                    row.rhs,
                    "lnc",
                )?;
            }
        }
        if options.w_soc {
            p.add_rotated_soc(w[i].into(), w[j].into(), vec![wr.into(), wi.into()], "w_soc")?;
        }
        pair_vars.push(vars);
    }

    // Orientation of each branch relative to its pair.
    let mut branch_pair = vec![(0usize, false); net.branches.len()];
    for (k, pair) in pairs.iter().enumerate() {
        for &(b, rev) in &pair.branches {
            branch_pair[b] = (k, rev);
        }
    }

    let nb = net.buses.len();
    let mut p_inj: Vec<AffineExpr> = vec![AffineExpr::default(); nb];
    let mut q_inj: Vec<AffineExpr> = vec![AffineExpr::default(); nb];
    let mut branch_vars = Vec::with_capacity(net.branches.len());
    for (k, br) in net.branches.iter().enumerate() {
        let (f, t) = (idx[&br.from], idx[&br.to]);
        let y = branch_admittance(br).map_err(|e| RelaxError::Network(e.to_string()))?;
        let (pk, rev) = branch_pair[k];
        let wr = pair_vars[pk].wr;
        // W_ft = wr + i·s·wi with s = −1 when the branch runs against its pair
        let s = if rev { -1.0 } else { 1.0 };
        let wi = pair_vars[pk].wi;
        let su = Interval { lo: -br.su, hi: br.su };
        let tag = format!("{},{},{}", k + 1, br.from, br.to);
        let p_fr = p.add_variable(format!("p[{tag}]"), su);
        let q_fr = p.add_variable(format!("q[{tag}]"), su);
        let p_to = p.add_variable(format!("p[{}r]", tag), su);
        let q_to = p.add_variable(format!("q[{}r]", tag), su);

        let (a, bp) = (y.yft.re, y.yft.im);
        let (c, d) = (y.ytf.re, y.ytf.im);
        // p_fr = Re(Yff) w_f − a wr − b' (s wi)
        p.add_linear(
            AffineExpr::from_terms([(p_fr, 1.0), (w[f], -y.yff.re), (wr, a), (wi, bp * s)]),
            RowSense::Eq,
            0.0,
            "flow",
        )?;
        // q_fr = −Im(Yff) w_f − a (s wi) + b' wr
        p.add_linear(
            AffineExpr::from_terms([(q_fr, 1.0), (w[f], y.yff.im), (wi, a * s), (wr, -bp)]),
            RowSense::Eq,
            0.0,
            "flow",
        )?;
        // p_to = Re(Ytt) w_t − c wr + d (s wi)
        p.add_linear(
            AffineExpr::from_terms([(p_to, 1.0), (w[t], -y.ytt.re), (wr, c), (wi, -d * s)]),
            RowSense::Eq,
            0.0,
            "flow",
        )?;
        // q_to = −Im(Ytt) w_t + c (s wi) + d wr
        p.add_linear(
            AffineExpr::from_terms([(q_to, 1.0), (w[t], y.ytt.im), (wi, -c * s), (wr, -d)]),
            RowSense::Eq,
            0.0,
            "flow",
        )?;

        p.add_soc(AffineExpr::constant(br.su), vec![p_fr.into(), q_fr.into()], "thermal")?;
        p.add_soc(AffineExpr::constant(br.su), vec![p_to.into(), q_to.into()], "thermal")?;

        // Series-element current: loss identity and the current cone.
        let tm2 = br.tap * br.tap;
        let b_half = 0.5 * br.b_charge;
        let z = br.series_impedance();
        let vl2 = bounds.vm[f].lo * bounds.vm[f].lo;
        let s_series = br.su + b_half.abs() * bounds.vm[f].hi * bounds.vm[f].hi / tm2;
        let l = p.add_variable(format!("l[{tag}]"), Interval { lo: 0.0, hi: s_series * s_series * tm2 / vl2 });
        p.add_linear(AffineExpr::from_terms([(p_fr, 1.0), (p_to, 1.0), (l, -z.re)]), RowSense::Eq, 0.0, "loss")?;
        p.add_linear(
            AffineExpr::from_terms([(q_fr, 1.0), (q_to, 1.0), (w[f], b_half / tm2), (w[t], b_half), (l, -z.im)]),
            RowSense::Eq,
            0.0,
            "loss",
        )?;
        p.add_rotated_soc(
            AffineExpr::term(w[f], 1.0 / tm2),
            l.into(),
            vec![p_fr.into(), AffineExpr::from_terms([(q_fr, 1.0), (w[f], b_half / tm2)])],
            "current",
        )?;

        p_inj[f].add_term(p_fr, 1.0);
        q_inj[f].add_term(q_fr, 1.0);
        p_inj[t].add_term(p_to, 1.0);
        q_inj[t].add_term(q_to, 1.0);
        branch_vars.push(BranchVars { p_fr, q_fr, p_to, q_to, l });
    }

    let mut pg = Vec::new();
    let mut qg = Vec::new();
    let mut objective = Objective { sense: ObjectiveSense::Minimize, ..Default::default() };
    for (g, gen) in net.generators.iter().enumerate() {
        let b = idx[&gen.bus];
        let pv = p.add_variable(format!("pg[{}]", g + 1), Interval { lo: gen.pgl, hi: gen.pgu });
        let qv = p.add_variable(format!("qg[{}]", g + 1), Interval { lo: gen.qgl, hi: gen.qgu });
        p_inj[b].add_term(pv, -1.0);
        q_inj[b].add_term(qv, -1.0);
        if gen.c2 != 0.0 {
            objective.quadratic.push((pv, gen.c2));
        }
        objective.linear.add_term(pv, gen.c1);
        objective.linear.constant += gen.c0;
        pg.push(pv);
        qg.push(qv);
    }

    // Σ flows − Σ gen + shunt·w = −demand
    for (i, bus) in net.buses.iter().enumerate() {
        let pe = std::mem::take(&mut p_inj[i]).with_term(w[i], bus.gs);
        p.add_linear(pe, RowSense::Eq, -bus.pd, "balance")?;
        let qe = std::mem::take(&mut q_inj[i]).with_term(w[i], -bus.bs);
        p.add_linear(qe, RowSense::Eq, -bus.qd, "balance")?;
    }
    p.set_objective(objective)?;

    Ok(RelaxationModel {
        program: p,
        kind,
        options,
        bounds: bounds.clone(),
        pairs,
        vm,
        va,
        w,
        pair_vars,
        branch_vars,
        cost_epigraph: vec![None; net.generators.len()],
        pg,
        qg,
    })
}

impl RelaxationModel {
    /// Adds `cost ≤ upper_bound` (quadratic parts through epigraph cones).
    pub fn add_objective_cut(&mut self, upper_bound: f64) -> Result<(), RelaxError> {
        let p = &mut self.program;
        let obj = p.objective().clone();
        let mut row = obj.linear.clone();
        for &(v, c2) in &obj.quadratic {
            let name = format!("cost_sq[{}]", p.variable(v).name);
            let b = p.variable(v).bounds.square();
            let t = p.add_variable(name, b);
            p.add_rotated_soc(t.into(), AffineExpr::constant(1.0), vec![v.into()], "cost_cut")?;
            row.add_term(t, c2);
            if let Some(g) = self.pg.iter().position(|&x| x == v) {
                self.cost_epigraph[g] = Some(t);
            }
        }
        p.add_linear(row, RowSense::Le, upper_bound, "cost_cut")?;
        Ok(())
    }

    pub fn solve(&self, opts: &SolveOptions) -> Solution {
        convexir::solve(&self.program, opts)
    }

    pub fn stats(&self) -> ProgramStats {
        self.program.stats()
    }

    /// Targets of bound tightening: every `vm` then every pair `td`.
    pub fn tightening_targets(&self) -> Vec<VarId> {
        self.vm.iter().copied().chain(self.pair_vars.iter().map(|p| p.td)).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LowerBound {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub gap_percent: Option<f64>,
    pub solve_time: f64,
    pub diagnostics: String,
}

pub fn gap_percent(ac_objective: f64, relaxation: f64) -> f64 {
    100.0 * (ac_objective - relaxation) / ac_objective
}

/// Solves the relaxation and reports the optimality gap against `ac_objective`.
pub fn lower_bound(
    net: &Network,
    bounds: &BoundState,
    kind: RelaxationKind,
    ac_objective: f64,
    opts: &SolveOptions,
) -> Result<LowerBound, RelaxError> {
    let model = build(net, bounds, kind)?;
    Ok(lower_bound_of(&model, ac_objective, opts))
}

pub fn lower_bound_of(model: &RelaxationModel, ac_objective: f64, opts: &SolveOptions) -> LowerBound {
    let s = model.solve(opts);
    let gap = s.objective.filter(|_| ac_objective > 0.0).map(|o| gap_percent(ac_objective, o));
    LowerBound { status: s.status, objective: s.objective, gap_percent: gap, solve_time: s.solve_time, diagnostics: s.diagnostics }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_parsing() {
        assert_eq!("TLM".parse::<RelaxationKind>().unwrap(), RelaxationKind::Tlm);
        assert_eq!("qc-rm".parse::<RelaxationKind>().unwrap(), RelaxationKind::Rm);
        assert!("sdp".parse::<RelaxationKind>().is_err());
        assert_eq!(RelaxationKind::Lm.to_string(), "lm");
    }

    #[test]
    fn gap_formula() {
        assert_eq!(gap_percent(100.0, 100.0), 0.0);
        assert!((gap_percent(1.7552e4, 1.7552e4 * (1.0 - 0.1455)) - 14.55).abs() < 1e-9);
    }
}
