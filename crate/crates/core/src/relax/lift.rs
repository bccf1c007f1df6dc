use super::RelaxationModel;
use crate::interval::Interval;
use crate::netdata::{branch_flows, AcPoint, Network};

/// Position of `x` inside `b` in `[0, 1]` (0 on a degenerate box).
fn unit_coord(x: f64, b: Interval) -> f64 {
    if b.width() > 0.0 {
        ((x - b.lo) / b.width()).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Multilinear weights of `x` over the eight corners of a 3-box, in
/// extreme-point order. They reproduce `x` and `x1·x2·x3` exactly.
pub(crate) fn corner_weights(x: [f64; 3], b: [Interval; 3]) -> [f64; 8] {
    let t: [f64; 3] = std::array::from_fn(|i| unit_coord(x[i], b[i]));
    std::array::from_fn(|k| {
        (0..3)
            .map(|i| if k >> (2 - i) & 1 == 1 { t[i] } else { 1.0 - t[i] })
            .product()
    })
}

/// Maps an AC operating point to a full assignment of the model's variables.
/// Fails only if some variable has no lifted value, which would mean the
/// model has grown a variable this function does not know about.
pub fn lift_ac_point(model: &RelaxationModel, net: &Network, point: &AcPoint) -> Result<Vec<f64>, String> {
    let mut x = vec![f64::NAN; model.program.num_variables()];
    let (v, th) = (&point.v, &point.theta);
    if v.len() != net.buses.len() || point.pg.len() != net.generators.len() {
        return Err("point does not match the network".into());
    }
    let th_ref = th[net.reference_bus()];
    for i in 0..net.buses.len() {
        x[model.vm[i].index()] = v[i];
        x[model.va[i].index()] = th[i] - th_ref;
        x[model.w[i].index()] = v[i] * v[i];
    }
    for (pair, pv) in model.pairs.iter().zip(&model.pair_vars) {
        let (i, j) = (pair.from, pair.to);
        let d = th[i] - th[j];
        let vv = v[i] * v[j];
        x[pv.td.index()] = d;
        x[pv.cs.index()] = d.cos();
        x[pv.sn.index()] = d.sin();
        x[pv.wr.index()] = vv * d.cos();
        x[pv.wi.index()] = vv * d.sin();
        if let Some(id) = pv.vv {
            x[id.index()] = vv;
        }
        for (lam, third, out) in [(pv.lambda_c, d.cos(), pv.cs), (pv.lambda_s, d.sin(), pv.sn)] {
            if let Some(lam) = lam {
                let b = [model.bounds.vm[i], model.bounds.vm[j], model.program.variable(out).bounds];
                for (id, wk) in lam.iter().zip(corner_weights([v[i], v[j], third], b)) {
                    x[id.index()] = wk;
                }
            }
        }
    }
    let idx = net.index_map();
    for ((br, bv), (sf, st)) in net.branches.iter().zip(&model.branch_vars).zip(branch_flows(net, v, th)) {
        x[bv.p_fr.index()] = sf.re;
        x[bv.q_fr.index()] = sf.im;
        x[bv.p_to.index()] = st.re;
        x[bv.q_to.index()] = st.im;
        let f = idx[&br.from];
        let wf = v[f] * v[f] / (br.tap * br.tap);
        let qs = sf.im + 0.5 * br.b_charge * wf;
        x[bv.l.index()] = (sf.re * sf.re + qs * qs) / wf;
    }
    for (g, (&p, &q)) in point.pg.iter().zip(&point.qg).enumerate() {
        x[model.pg[g].index()] = p;
        x[model.qg[g].index()] = q;
        if let Some(t) = model.cost_epigraph[g] {
            x[t.index()] = p * p;
        }
    }
    match x.iter().position(|xi| xi.is_nan()) {
        Some(k) => Err(format!("no lifted value for `{}`", model.program.variables()[k].name)),
        None => Ok(x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corner_weights_reproduce_point_and_product() {
        let b = [Interval { lo: 0.9, hi: 1.1 }, Interval { lo: 0.95, hi: 1.05 }, Interval { lo: -0.2, hi: 0.4 }];
        let x = [1.02, 0.97, 0.1];
        let w = corner_weights(x, b);
        let xi = crate::envelopes::tri_extreme_points(b[0], b[1], b[2]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for i in 0..3 {
            let r: f64 = (0..8).map(|k| w[k] * xi.0[k][i]).sum();
            assert!((r - x[i]).abs() < 1e-14);
        }
        let prod: f64 = (0..8).map(|k| w[k] * xi.product(k)).sum();
        assert!((prod - x[0] * x[1] * x[2]).abs() < 1e-14);
    }
}
