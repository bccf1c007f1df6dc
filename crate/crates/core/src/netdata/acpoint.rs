use super::{branch_admittance, Network};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// A full AC operating point: voltage magnitude and angle per bus (file order),
/// complex generation per generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcPoint {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    /// Objective recorded by whoever produced the point, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
}

/// Max absolute violation per constraint family, plus the cost of the point.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AcResiduals {
    pub dimension_mismatch: bool,
    pub balance_p: f64,
    pub balance_q: f64,
    pub voltage_bounds: f64,
    pub angle_difference: f64,
    pub generation_bounds: f64,
    pub thermal: f64,
    pub objective: f64,
}

impl AcResiduals {
    pub fn max_violation(&self) -> f64 {
        if self.dimension_mismatch {
            return f64::INFINITY;
        }
        [
            self.balance_p,
            self.balance_q,
            self.voltage_bounds,
            self.angle_difference,
            self.generation_bounds,
            self.thermal,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn outside(x: f64, lo: f64, hi: f64) -> f64 {
    (lo - x).max(x - hi).max(0.0)
}

/// Branch flows `(S_ij, S_ji)` at the given voltages.
pub fn branch_flows(net: &Network, v: &[f64], theta: &[f64]) -> Vec<(Complex64, Complex64)> {
    let idx = net.index_map();
    net.branches
        .iter()
        .map(|br| {
            let (i, j) = (idx[&br.from], idx[&br.to]);
            let y = branch_admittance(br).expect("validated branch");
            let wij = Complex64::from_polar(v[i] * v[j], theta[i] - theta[j]);
            let sij = y.yff.conj() * v[i] * v[i] - y.yft.conj() * wij;
            let sji = y.ytt.conj() * v[j] * v[j] - y.ytf.conj() * wij.conj();
            (sij, sji)
        })
        .collect()
}

/// Evaluates every constraint family of the AC-OPF model at `point`. Never
/// rejects; mismatched dimensions are flagged in the report.
pub fn evaluate_ac_point(net: &Network, point: &AcPoint) -> AcResiduals {
    let nb = net.buses.len();
    if point.v.len() != nb || point.theta.len() != nb || point.pg.len() != net.generators.len()
        || point.qg.len() != net.generators.len()
    {
        return AcResiduals { dimension_mismatch: true, ..Default::default() };
    }
    let idx = net.index_map();
    let (v, th) = (&point.v, &point.theta);
    let mut r = AcResiduals::default();

    let mut inj = vec![Complex64::new(0.0, 0.0); nb];
    for (i, b) in net.buses.iter().enumerate() {
        inj[i] -= Complex64::new(b.pd, b.qd);
        // shunt consumption (gs + i·(−bs))·v²
        inj[i] -= Complex64::new(b.gs, -b.bs) * v[i] * v[i];
        r.voltage_bounds = r.voltage_bounds.max(outside(v[i], b.vl, b.vu));
    }
    for (k, g) in net.generators.iter().enumerate() {
        inj[idx[&g.bus]] += Complex64::new(point.pg[k], point.qg[k]);
        r.generation_bounds = r
            .generation_bounds
            .max(outside(point.pg[k], g.pgl, g.pgu))
            .max(outside(point.qg[k], g.qgl, g.qgu));
        r.objective += g.c2 * point.pg[k] * point.pg[k] + g.c1 * point.pg[k] + g.c0;
    }
    for (br, (sij, sji)) in net.branches.iter().zip(branch_flows(net, v, th)) {
        let (i, j) = (idx[&br.from], idx[&br.to]);
        inj[i] -= sij;
        inj[j] -= sji;
        r.angle_difference = r.angle_difference.max(outside(th[i] - th[j], br.theta_l, br.theta_u));
        r.thermal = r.thermal.max((sij.norm() - br.su).max(0.0)).max((sji.norm() - br.su).max(0.0));
    }
    for s in inj {
        r.balance_p = r.balance_p.max(s.re.abs());
        r.balance_q = r.balance_q.max(s.im.abs());
    }
    r
}
