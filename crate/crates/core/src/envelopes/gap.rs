use super::{link_lambdas, mccormick, trilinear_lambda, EnvelopeError, LambdaSystem};
use crate::convexir::{
    AffineExpr, ClarabelSession, ConvexProgram, Objective, ObjectiveSense, RowSense, SolveOptions, VarId,
};
use crate::interval::Interval;
use crate::par;
use crate::relax::RelaxationKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Relaxation of `z = αc·x1x2x3 + αs·x1x2x4` over a 4-box.
#[derive(Clone, Debug)]
pub struct SumRelaxation {
    pub x: [VarId; 4],
    pub z: VarId,
    /// The two λ systems (LM and TLM only).
    pub lambdas: Option<(LambdaSystem, LambdaSystem)>,
}

impl SumRelaxation {
    pub fn build(
        p: &mut ConvexProgram,
        boxes: [Interval; 4],
        alpha: (f64, f64),
        kind: RelaxationKind,
    ) -> Result<Self, EnvelopeError> {
        let x: [VarId; 4] = std::array::from_fn(|i| p.add_variable(format!("x{}", i + 1), boxes[i]));
        let (terms, lambdas) = match kind {
            RelaxationKind::Rm => {
                let vv = mccormick(p, x[0], x[1], boxes[0], boxes[1])?.output;
                let b12 = boxes[0].mul(&boxes[1]);
                let t1 = mccormick(p, vv, x[2], b12, boxes[2])?.output;
                let t2 = mccormick(p, vv, x[3], b12, boxes[3])?.output;
                ((t1, t2), None)
            }
            RelaxationKind::Lm | RelaxationKind::Tlm => {
                let c = trilinear_lambda(p, [x[0], x[1], x[2]], [boxes[0], boxes[1], boxes[2]])?;
                let s = trilinear_lambda(p, [x[0], x[1], x[3]], [boxes[0], boxes[1], boxes[3]])?;
                if kind == RelaxationKind::Tlm {
                    link_lambdas(p, &c, &s)?;
                }
                ((c.envelope.output, s.envelope.output), Some((c, s)))
            }
        };
        let z = p.free_variable("z");
        p.add_linear(
            AffineExpr::from_terms([(z, 1.0), (terms.0, -alpha.0), (terms.1, -alpha.1)]),
            RowSense::Eq,
            0.0,
            "sum",
        )?;
        Ok(Self { x, z, lambdas })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSample {
    pub sample_id: usize,
    pub x: [f64; 4],
    pub rm_gap: f64,
    pub lm_gap: f64,
    pub tlm_gap: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapFailure {
    pub sample_id: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapTable {
    pub seed: u64,
    /// Box each coordinate is drawn from and the envelopes are built on.
    pub domain: Interval,
    pub samples: Vec<GapSample>,
    pub failures: Vec<GapFailure>,
}

impl GapTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# seed={} domain=[{},{}]\nsample_id,x1,x2,x3,x4,rm_gap,lm_gap,tlm_gap\n",
            self.seed, self.domain.lo, self.domain.hi
        );
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                s.sample_id, s.x[0], s.x[1], s.x[2], s.x[3], s.rm_gap, s.lm_gap, s.tlm_gap
            );
        }
        out
    }
}

/// `max z − min z` for `x` fixed at `point`, with envelopes built on `domain⁴`.
pub fn relaxation_gap(
    point: [f64; 4],
    domain: Interval,
    kind: RelaxationKind,
    opts: &SolveOptions,
) -> Result<f64, String> {
    let mut p = ConvexProgram::new();
    let sys = SumRelaxation::build(&mut p, [domain; 4], (1.0, 1.0), kind).map_err(|e| e.to_string())?;
    for (v, &xv) in sys.x.iter().zip(&point) {
        p.set_bounds(*v, Interval::point(xv));
    }
    let mut session = ClarabelSession::new(&p, &Objective::of_variable(sys.z, ObjectiveSense::Minimize), opts)?;
    let lo = session.solve();
    session.set_linear_objective(&Objective::of_variable(sys.z, ObjectiveSense::Maximize))?;
    let hi = session.solve();
    match (lo.objective, hi.objective) {
        (Some(a), Some(b)) => Ok((b - a).max(0.0)),
        _ => Err(format!("{kind:?}: min {:?} / max {:?}: {} | {}", lo.status, hi.status, lo.diagnostics, hi.diagnostics)),
    }
}

/// Samples `n_samples` points uniformly in `[0,1]⁴` and records the width of
/// the relaxed range of `x1x2x3 + x1x2x4` under each relaxation.
pub fn envelope_gap_experiment(n_samples: usize, seed: u64, workers: usize) -> GapTable {
    envelope_gap_experiment_on(Interval { lo: 0.0, hi: 1.0 }, n_samples, seed, workers)
}

/// As [`envelope_gap_experiment`] on `domain⁴`.
pub fn envelope_gap_experiment_on(domain: Interval, n_samples: usize, seed: u64, workers: usize) -> GapTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<[f64; 4]> = (0..n_samples)
        .map(|_| std::array::from_fn(|_| domain.lo + domain.width() * rng.random::<f64>()))
        .collect();
    let opts = SolveOptions::with_tol(1e-10);
    let results = par::map(n_samples, workers, |i| {
        let x = points[i];
        let gap = |k| relaxation_gap(x, domain, k, &opts);
        Ok::<_, String>(GapSample {
            sample_id: i,
            x,
            rm_gap: gap(RelaxationKind::Rm)?,
            lm_gap: gap(RelaxationKind::Lm)?,
            tlm_gap: gap(RelaxationKind::Tlm)?,
        })
    });
    let mut table = GapTable { seed, domain, samples: Vec::new(), failures: Vec::new() };
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => table.samples.push(s),
            Err(reason) => {
                log::warn!("gap sample {i} skipped: {reason}");
                table.failures.push(GapFailure { sample_id: i, reason });
            }
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corner_has_zero_gap() {
        let opts = SolveOptions::with_tol(1e-10);
        let unit = Interval { lo: 0.0, hi: 1.0 };
        for k in [RelaxationKind::Rm, RelaxationKind::Lm, RelaxationKind::Tlm] {
            assert!(relaxation_gap([1.0; 4], unit, k, &opts).unwrap() < 1e-8);
            assert!(relaxation_gap([0.0, 1.0, 1.0, 0.0], unit, k, &opts).unwrap() < 1e-8);
        }
    }

    #[test]
    fn csv_carries_seed_and_header() {
        let t = envelope_gap_experiment(3, 7, 1);
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("# seed=7 domain=[0,1]"));
        assert_eq!(lines.next(), Some("sample_id,x1,x2,x3,x4,rm_gap,lm_gap,tlm_gap"));
        assert_eq!(lines.count(), 3);
    }
}
