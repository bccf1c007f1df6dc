//! Per-unit network data model, MATPOWER case parsing, and an AC operating-point
//! residual evaluator.

mod acpoint;
mod matpower;

pub use acpoint::{branch_flows, evaluate_ac_point, AcPoint, AcResiduals};
pub use matpower::parse_case;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::f64::consts::FRAC_PI_2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    /// MATPOWER type 3.
    pub reference: bool,
    pub vl: f64,
    pub vu: f64,
    pub pd: f64,
    pub qd: f64,
    pub gs: f64,
    pub bs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub pgl: f64,
    pub pgu: f64,
    pub qgl: f64,
    pub qgu: f64,
    /// Cost coefficients in per-unit: `c2 pg² + c1 pg + c0`.
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    /// Series admittance `g + ib`.
    pub g: f64,
    pub b: f64,
    /// Total line-charging susceptance.
    pub b_charge: f64,
    pub tap: f64,
    /// Phase shift in radians.
    pub shift: f64,
    /// Apparent-power limit.
    pub su: f64,
    pub theta_l: f64,
    pub theta_u: f64,
}

impl Branch {
    pub fn series_admittance(&self) -> Complex64 {
        Complex64::new(self.g, self.b)
    }

    /// Series impedance `r + ix = 1 / (g + ib)`.
    pub fn series_impedance(&self) -> Complex64 {
        1.0 / self.series_admittance()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
}

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid {element}: {msg}")]
    Validation { element: String, msg: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn invalid(element: impl Into<String>, msg: impl Into<String>) -> NetError {
    NetError::Validation { element: element.into(), msg: msg.into() }
}

/// Π-model parameters with `S_ij = Yff* Wii − Yft* Wij` and
/// `S_ji = Ytt* Wjj − Ytf* Wij*`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchAdmittance {
    pub yff: Complex64,
    pub yft: Complex64,
    pub ytf: Complex64,
    pub ytt: Complex64,
}

pub fn branch_admittance(br: &Branch) -> Result<BranchAdmittance, NetError> {
    if !(br.tap > 0.0) {
        return Err(invalid(format!("branch {}-{}", br.from, br.to), format!("tap {} must be positive", br.tap)));
    }
    let ys = br.series_admittance();
    let n = Complex64::from_polar(br.tap, br.shift);
    let half = Complex64::new(0.0, 0.5 * br.b_charge);
    Ok(BranchAdmittance {
        yff: (ys + half) / (br.tap * br.tap),
        yft: ys / n.conj(),
        ytf: ys / n,
        ytt: ys + half,
    })
}

/// An unordered-by-construction bus pair: all branches between the same two
/// buses share one pair, oriented like the first branch seen.
#[derive(Clone, Debug, PartialEq)]
pub struct BusPair {
    /// Bus indices (positions in `Network::buses`).
    pub from: usize,
    pub to: usize,
    /// Branch indices with their orientation relative to the pair (`true` when reversed).
    pub branches: Vec<(usize, bool)>,
    /// Intersection of the member branches' angle-difference bounds, in pair orientation.
    pub theta_l: f64,
    pub theta_u: f64,
}

impl Network {
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Map from bus id to bus position.
    pub fn index_map(&self) -> HashMap<usize, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn reference_bus(&self) -> usize {
        self.buses.iter().position(|b| b.reference).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if !(self.base_mva > 0.0) {
            return Err(invalid("network", format!("baseMVA {} must be positive", self.base_mva)));
        }
        if self.buses.is_empty() {
            return Err(invalid("network", "no buses"));
        }
        let mut seen = HashMap::new();
        for (k, b) in self.buses.iter().enumerate() {
            let el = format!("bus {}", b.id);
            if seen.insert(b.id, k).is_some() {
                return Err(invalid(el, "duplicate id"));
            }
            if !(b.vl > 0.0 && b.vl <= b.vu) {
                return Err(invalid(el, format!("voltage bounds [{}, {}]", b.vl, b.vu)));
            }
            if ![b.pd, b.qd, b.gs, b.bs, b.vu].iter().all(|x| x.is_finite()) {
                return Err(invalid(el, "non-finite value"));
            }
        }
        for (k, g) in self.generators.iter().enumerate() {
            let el = format!("generator {} (bus {})", k + 1, g.bus);
            if !seen.contains_key(&g.bus) {
                return Err(invalid(el, "unknown bus"));
            }
            if !(g.pgl <= g.pgu) || !(g.qgl <= g.qgu) {
                return Err(invalid(el, "inverted generation bounds"));
            }
            if !(g.c2 >= 0.0) {
                return Err(invalid(el, format!("negative quadratic cost {}", g.c2)));
            }
            if ![g.pgl, g.pgu, g.qgl, g.qgu, g.c1, g.c0].iter().all(|x| x.is_finite()) {
                return Err(invalid(el, "non-finite value"));
            }
        }
        for (k, br) in self.branches.iter().enumerate() {
            let el = format!("branch {} ({}-{})", k + 1, br.from, br.to);
            if !seen.contains_key(&br.from) || !seen.contains_key(&br.to) {
                return Err(invalid(el, "unknown bus"));
            }
            if br.from == br.to {
                return Err(invalid(el, "self loop"));
            }
            if !(br.su > 0.0) || !br.su.is_finite() {
                return Err(invalid(el, format!("thermal limit {} must be positive", br.su)));
            }
            if !(br.tap > 0.0) {
                return Err(invalid(el, format!("tap {} must be positive", br.tap)));
            }
            if !(-FRAC_PI_2 < br.theta_l && br.theta_l <= br.theta_u && br.theta_u < FRAC_PI_2) {
                return Err(invalid(el, format!("angle bounds [{}, {}]", br.theta_l, br.theta_u)));
            }
            if br.g == 0.0 && br.b == 0.0 {
                return Err(invalid(el, "zero series admittance"));
            }
            if ![br.g, br.b, br.b_charge, br.shift].iter().all(|x| x.is_finite()) {
                return Err(invalid(el, "non-finite value"));
            }
        }
        if !self.is_connected() {
            log::warn!("network {} is not connected", self.name);
        }
        Ok(())
    }

    pub fn is_connected(&self) -> bool {
        let idx = self.index_map();
        let mut adj = vec![Vec::new(); self.buses.len()];
        for br in &self.branches {
            let (f, t) = (idx[&br.from], idx[&br.to]);
            adj[f].push(t);
            adj[t].push(f);
        }
        let mut seen = vec![false; self.buses.len()];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Bus pairs in order of first appearance among the branches.
    pub fn bus_pairs(&self) -> Vec<BusPair> {
        let idx = self.index_map();
        let mut pairs: Vec<BusPair> = Vec::new();
        let mut lookup: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (k, br) in self.branches.iter().enumerate() {
            let (f, t) = (idx[&br.from], idx[&br.to]);
            if let Some(&p) = lookup.get(&(f, t)) {
                let pair = &mut pairs[p];
                pair.branches.push((k, false));
                pair.theta_l = pair.theta_l.max(br.theta_l);
                pair.theta_u = pair.theta_u.min(br.theta_u);
            } else if let Some(&p) = lookup.get(&(t, f)) {
                let pair = &mut pairs[p];
                pair.branches.push((k, true));
                pair.theta_l = pair.theta_l.max(-br.theta_u);
                pair.theta_u = pair.theta_u.min(-br.theta_l);
            } else {
                lookup.insert((f, t), pairs.len());
                pairs.push(BusPair {
                    from: f,
                    to: t,
                    branches: vec![(k, false)],
                    theta_l: br.theta_l,
                    theta_u: br.theta_u,
                });
            }
        }
        pairs
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NetError> {
        let net: Network = serde_json::from_str(text)?;
        net.validate()?;
        Ok(net)
    }
}

/// Case name used in reports: the file stem without the `pglib_opf_` prefix and
/// with the `__api` / `__sad` suffix separator collapsed to one underscore.
pub fn case_name(path: &std::path::Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("case");
    stem.trim_start_matches("pglib_opf_").replace("__", "_")
}
