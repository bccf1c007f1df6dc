use super::BoundMetrics;
use crate::relax::RelaxationKind;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// One bound-quality row: OBBT metrics per relaxation kind (`None` = failed).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundRow {
    pub case: String,
    pub buses: usize,
    pub branches: usize,
    pub metrics: Vec<(RelaxationKind, Option<BoundMetrics>)>,
}

/// One optimality-gap row: base and post-OBBT gaps per kind, in percent.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapRow {
    pub case: String,
    pub buses: usize,
    pub branches: usize,
    pub ac_objective: Option<f64>,
    pub base: Vec<(RelaxationKind, Option<f64>)>,
    pub obbt: Vec<(RelaxationKind, Option<f64>)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "failed".to_string(), |x| format!("{x:.4}"))
}

pub fn bound_table_csv(kinds: &[RelaxationKind], rows: &[BoundRow]) -> String {
    let mut out = String::from("case,buses,branches");
    for field in ["vm", "td", "sign"] {
        for k in kinds {
            let _ = write!(out, ",{field}_{k}");
        }
    }
    out.push('\n');
    for r in rows {
        let get = |k: &RelaxationKind| r.metrics.iter().find(|(kk, _)| kk == k).and_then(|(_, m)| *m);
        let _ = write!(out, "{},{},{}", r.case, r.buses, r.branches);
        for k in kinds {
            let _ = write!(out, ",{}", cell(get(k).map(|m| m.avg_vm_range)));
        }
        for k in kinds {
            let _ = write!(out, ",{}", cell(get(k).map(|m| m.avg_td_range)));
        }
        for k in kinds {
            let _ = write!(out, ",{}", get(k).map_or_else(|| "failed".into(), |m| m.td_sign_fixed.to_string()));
        }
        out.push('\n');
    }
    out
}

pub fn gap_table_csv(kinds: &[RelaxationKind], with_obbt: bool, rows: &[GapRow]) -> String {
    let mut out = String::from("case,buses,branches,ac_objective");
    for k in kinds {
        let _ = write!(out, ",base_{k}");
    }
    if with_obbt {
        for k in kinds {
            let _ = write!(out, ",obbt_{k}");
        }
    }
    out.push_str(",note\n");
    for r in rows {
        let _ = write!(
            out,
            "{},{},{},{}",
            r.case,
            r.buses,
            r.branches,
            r.ac_objective.map_or_else(String::new, |v| format!("{v:.4e}"))
        );
        let get = |v: &[(RelaxationKind, Option<f64>)], k: &RelaxationKind| v.iter().find(|(kk, _)| kk == k).and_then(|(_, g)| *g);
        for k in kinds {
            let _ = write!(out, ",{}", cell(get(&r.base, k)));
        }
        if with_obbt {
            for k in kinds {
                let _ = write!(out, ",{}", cell(get(&r.obbt, k)));
            }
        }
        let _ = writeln!(out, ",{}", r.note.as_deref().unwrap_or("").replace(',', ";"));
    }
    out
}
