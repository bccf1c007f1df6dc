//! Executable checks of the convex-hull results for
//! `φ = αc·x1x2x3 + αs·x1x2x4`: support functions of the 16-corner hull `S`
//! against the linked two-λ system `S_QC`, and the explicit multiplier maps
//! between them.
//!
//! Corner `k` (0-based) of the 4-box is `k = 8a + 4b + 2c + d` with each bit
//! picking the upper bound of `x1..x4`, i.e. dictionary order with `x4`
//! fastest. The 8-corner systems use `4a + 2b + c` (cosine side, third
//! coordinate `x3`) and `4a + 2b + d` (sine side, third coordinate `x4`).

use crate::convexir::{ClarabelSession, ConvexProgram, Objective, ObjectiveSense, AffineExpr, SolveOptions};
use crate::envelopes::SumRelaxation;
use crate::interval::Interval;
use crate::par;
use crate::relax::RelaxationKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const SIMPLEX_TOL: f64 = 1e-9;

/// Boxes narrower than this make the pair-sum system rank-deficient.
pub const DEGENERATE_WIDTH: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SumTriInstance {
    pub alpha_c: f64,
    pub alpha_s: f64,
    pub boxes: [Interval; 4],
}

#[derive(Debug, thiserror::Error)]
pub enum HullError {
    #[error("multipliers are not on the simplex (min {min:e}, sum {sum})")]
    OffSimplex { min: f64, sum: f64 },
    #[error("multiplier pair is not linked: pair-sum identity off by {0:e}")]
    NotLinked(f64),
    #[error("invalid instance: {0}")]
    Instance(String),
    #[error("LP failed: {0}")]
    Solve(String),
}

impl SumTriInstance {
    pub fn new(alpha_c: f64, alpha_s: f64, boxes: [Interval; 4]) -> Result<Self, HullError> {
        if alpha_c == 0.0 && alpha_s == 0.0 {
            return Err(HullError::Instance("both coefficients are zero".into()));
        }
        if boxes.iter().any(|b| !(b.is_finite() && b.lo <= b.hi)) {
            return Err(HullError::Instance(format!("bad boxes {boxes:?}")));
        }
        Ok(Self { alpha_c, alpha_s, boxes })
    }

    pub fn phi(&self, x: [f64; 4]) -> f64 {
        x[0] * x[1] * (self.alpha_c * x[2] + self.alpha_s * x[3])
    }

    /// The 16 corners of the 4-box in dictionary order.
    pub fn corners(&self) -> [[f64; 4]; 16] {
        std::array::from_fn(|k| std::array::from_fn(|i| {
            let b = self.boxes[i];
            if k >> (3 - i) & 1 == 1 { b.hi } else { b.lo }
        }))
    }

    pub fn is_degenerate(&self) -> bool {
        self.boxes.iter().any(|b| b.width() < DEGENERATE_WIDTH)
    }

    /// Boxes with `lo ∈ [−1, 1]`, width in `[0.1, 2]`, coefficients in `[−2, 2]`.
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let boxes = std::array::from_fn(|_| {
            let lo = rng.random_range(-1.0..=1.0);
            Interval { lo, hi: lo + rng.random_range(0.1..=2.0) }
        });
        let alpha_c = rng.random_range(-2.0..=2.0);
        let alpha_s = rng.random_range(-2.0..=2.0);
        Self { alpha_c, alpha_s, boxes }
    }
}

fn check_simplex(l: &[f64]) -> Result<(), HullError> {
    let min = l.iter().copied().fold(f64::INFINITY, f64::min);
    let sum: f64 = l.iter().sum();
    if min < -SIMPLEX_TOL || (sum - 1.0).abs() > SIMPLEX_TOL || l.iter().any(|v| !v.is_finite()) {
        return Err(HullError::OffSimplex { min, sum });
    }
    Ok(())
}

/// 16-corner multipliers to the two 8-corner systems.
pub fn lambda_forward(l: &[f64; 16]) -> Result<([f64; 8], [f64; 8]), HullError> {
    check_simplex(l)?;
    let lc = std::array::from_fn(|j| l[2 * j] + l[2 * j + 1]);
    let ls = std::array::from_fn(|j| {
        let (ab, d) = (j >> 1, j & 1);
        l[4 * ab + d] + l[4 * ab + 2 + d]
    });
    Ok((lc, ls))
}

/// Per `(x1, x2)` corner group `g`: `(λc[c=0], λc[c=1], λs[d=0], λs[d=1])`.
/// In 1-based naming these are the odd and even entries of each system.
fn groups(lc: &[f64; 8], ls: &[f64; 8]) -> [[f64; 4]; 4] {
    std::array::from_fn(|g| [lc[2 * g], lc[2 * g + 1], ls[2 * g], ls[2 * g + 1]])
}

/// Largest violation of `λc_odd + λc_even = λs_odd + λs_even` over the four groups.
pub fn pair_sum_residual(lc: &[f64; 8], ls: &[f64; 8]) -> f64 {
    groups(lc, ls).iter().map(|[co, ce, so, se]| (co + ce - so - se).abs()).fold(0.0, f64::max)
}

/// Inverse of [`lambda_forward`] for a linked pair. Within each group the
/// four 16-corner weights `(λ_{00}, λ_{01}, λ_{10}, λ_{11})` over `(c, d)` are
///
/// ```text
/// m = max(λc_even − λs_odd, 0)
/// λ00 = λs_odd − λc_even + m,  λ01 = λs_even − m,  λ10 = λc_even − m,  λ11 = m
/// ```
pub fn lambda_backward(lc: &[f64; 8], ls: &[f64; 8]) -> Result<[f64; 16], HullError> {
    check_simplex(lc)?;
    check_simplex(ls)?;
    let r = pair_sum_residual(lc, ls);
    if r > SIMPLEX_TOL {
        return Err(HullError::NotLinked(r));
    }
    let mut l = [0.0; 16];
    for (g, [_, ce, so, se]) in groups(lc, ls).into_iter().enumerate() {
        let m = (ce - so).max(0.0);
        l[4 * g] = so - ce + m;
        l[4 * g + 1] = se - m;
        l[4 * g + 2] = ce - m;
        l[4 * g + 3] = m;
    }
    Ok(l)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lemma1Outcome {
    Holds,
    Violated,
    /// A box is a point, so the 4×3 corner matrix loses rank and the
    /// linking row no longer forces the pair-sum identity.
    RankDeficient,
}

pub fn lemma1_check(lc: &[f64; 8], ls: &[f64; 8], bv1: Interval, bv2: Interval) -> Lemma1Outcome {
    if bv1.width() < DEGENERATE_WIDTH || bv2.width() < DEGENERATE_WIDTH {
        return Lemma1Outcome::RankDeficient;
    }
    if pair_sum_residual(lc, ls) <= SIMPLEX_TOL {
        Lemma1Outcome::Holds
    } else {
        Lemma1Outcome::Violated
    }
}

/// Forward∘backward residual (max abs) and the smallest reconstructed weight.
pub fn round_trip(lc: &[f64; 8], ls: &[f64; 8]) -> Result<(f64, f64), HullError> {
    let l = lambda_backward(lc, ls)?;
    let min = l.iter().copied().fold(f64::INFINITY, f64::min);
    // Tiny negative weights are within the simplex tolerance of forward.
    let (fc, fs) = lambda_forward(&l)?;
    let res = fc.iter().zip(lc).chain(fs.iter().zip(ls)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok((res, min))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HullSet {
    /// The 16-corner hull.
    S,
    /// Two λ systems plus the linking row.
    SQc,
    /// Two λ systems without the linking row.
    SQcUnlinked,
}

/// `max d·(z, x1, x2, x3, x4)` over the 16-corner hull, by enumeration.
pub fn support_hull(inst: &SumTriInstance, d: [f64; 5]) -> f64 {
    inst.corners()
        .iter()
        .map(|g| d[0] * inst.phi(*g) + (0..4).map(|i| d[i + 1] * g[i]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// The λ-system LP for one instance, reusable across directions.
pub struct QcSupport {
    program: ConvexProgram,
    sys: SumRelaxation,
    opts: SolveOptions,
}

impl QcSupport {
    pub fn new(inst: &SumTriInstance, linked: bool) -> Result<Self, HullError> {
        let mut program = ConvexProgram::new();
        let kind = if linked { RelaxationKind::Tlm } else { RelaxationKind::Lm };
        let sys = SumRelaxation::build(&mut program, inst.boxes, (inst.alpha_c, inst.alpha_s), kind)
            .map_err(|e| HullError::Instance(e.to_string()))?;
        Ok(Self { program, sys, opts: SolveOptions::with_tol(1e-9) })
    }

    fn objective(&self, d: [f64; 5]) -> Objective {
        let mut e = AffineExpr::term(self.sys.z, d[0]);
        for i in 0..4 {
            e.add_term(self.sys.x[i], d[i + 1]);
        }
        Objective { sense: ObjectiveSense::Maximize, quadratic: Vec::new(), linear: e }
    }

    /// Support values for every direction, plus the λ pair at each optimum.
    pub fn evaluate(&self, dirs: &[[f64; 5]]) -> Result<Vec<(f64, Option<([f64; 8], [f64; 8])>)>, HullError> {
        let Some(first) = dirs.first() else { return Ok(Vec::new()) };
        let mut session =
            ClarabelSession::new(&self.program, &self.objective(*first), &self.opts).map_err(HullError::Solve)?;
        let mut out = Vec::with_capacity(dirs.len());
        for (k, d) in dirs.iter().enumerate() {
            if k > 0 {
                session.set_linear_objective(&self.objective(*d)).map_err(HullError::Solve)?;
            }
            let s = session.solve();
            let (Some(v), Some(x)) = (s.objective, s.primal.as_ref()) else {
                return Err(HullError::Solve(format!("{:?}: {}", s.status, s.diagnostics)));
            };
            let lambdas = self.sys.lambdas.as_ref().map(|(c, s)| {
                (c.lambda.map(|id| x[id.index()]), s.lambda.map(|id| x[id.index()]))
            });
            out.push((v, lambdas));
        }
        Ok(out)
    }
}

pub fn support_function(set: HullSet, inst: &SumTriInstance, d: [f64; 5]) -> Result<f64, HullError> {
    match set {
        HullSet::S => Ok(support_hull(inst, d)),
        HullSet::SQc | HullSet::SQcUnlinked => {
            let qc = QcSupport::new(inst, set == HullSet::SQc)?;
            Ok(qc.evaluate(&[d])?[0].0)
        }
    }
}

/// Unit direction, uniform on the sphere.
pub fn random_direction<R: Rng>(rng: &mut R) -> [f64; 5] {
    loop {
        let d: [f64; 5] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return d.map(|v| v / n);
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceReport {
    pub id: usize,
    pub instance: SumTriInstance,
    /// `max |supp(S) − supp(S_QC)|` over the directions.
    pub max_discrepancy: f64,
    /// `max supp(S_QC without link) − supp(S)`.
    pub max_unlinked_widening: f64,
    /// Round trip of the λ pairs at the linked optima.
    pub max_round_trip: f64,
    pub min_backward_lambda: f64,
    pub lemma1: Vec<Lemma1Outcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HullReport {
    pub seed: u64,
    pub n_directions: usize,
    pub tolerance: f64,
    pub instances: Vec<InstanceReport>,
    pub max_discrepancy: f64,
    pub max_unlinked_widening: f64,
    pub violations: Vec<String>,
}

impl HullReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn check_instance(id: usize, inst: SumTriInstance, dirs: &[[f64; 5]]) -> Result<InstanceReport, HullError> {
    let linked = QcSupport::new(&inst, true)?.evaluate(dirs)?;
    let unlinked = QcSupport::new(&inst, false)?.evaluate(dirs)?;
    let mut rep = InstanceReport {
        id,
        instance: inst,
        max_discrepancy: 0.0,
        max_unlinked_widening: f64::NEG_INFINITY,
        max_round_trip: 0.0,
        min_backward_lambda: f64::INFINITY,
        lemma1: Vec::new(),
        error: None,
    };
    for ((d, (vl, lam)), (vu, _)) in dirs.iter().zip(&linked).zip(&unlinked) {
        let h = support_hull(&inst, *d);
        rep.max_discrepancy = rep.max_discrepancy.max((h - vl).abs());
        rep.max_unlinked_widening = rep.max_unlinked_widening.max(vu - h);
        if let Some((lc, ls)) = lam {
            // Interior-point multipliers sit within solver tolerance of the simplex.
            let (lc, ls) = (renormalize(lc), renormalize(ls));
            rep.lemma1.push(lemma1_check(&lc, &ls, inst.boxes[0], inst.boxes[1]));
            if !inst.is_degenerate() {
                let (res, min) = round_trip(&lc, &ls)?;
                rep.max_round_trip = rep.max_round_trip.max(res);
                rep.min_backward_lambda = rep.min_backward_lambda.min(min);
            }
        }
    }
    Ok(rep)
}

fn renormalize(l: &[f64; 8]) -> [f64; 8] {
    let c = l.map(|v| v.max(0.0));
    let s: f64 = c.iter().sum();
    c.map(|v| v / s)
}

/// Runs the support-function comparison on `n_instances` random instances,
/// `n_directions` random directions each.
pub fn run_hull_check(n_instances: usize, n_directions: usize, seed: u64, workers: usize) -> HullReport {
    let tolerance = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cases: Vec<(SumTriInstance, Vec<[f64; 5]>)> = (0..n_instances)
        .map(|_| {
            let inst = SumTriInstance::random(&mut rng);
            let dirs = (0..n_directions).map(|_| random_direction(&mut rng)).collect();
            (inst, dirs)
        })
        .collect();
    let instances: Vec<InstanceReport> = par::map(n_instances, workers, |i| {
        let (inst, dirs) = &cases[i];
        check_instance(i, *inst, dirs).unwrap_or_else(|e| InstanceReport {
            id: i,
            instance: *inst,
            max_discrepancy: f64::NAN,
            max_unlinked_widening: f64::NAN,
            max_round_trip: f64::NAN,
            min_backward_lambda: f64::NAN,
            lemma1: Vec::new(),
            error: Some(e.to_string()),
        })
    });
    let mut violations = Vec::new();
    for r in &instances {
        if let Some(e) = &r.error {
            violations.push(format!("instance {}: {e}", r.id));
            continue;
        }
        if !(r.max_discrepancy <= tolerance) {
            violations.push(format!("instance {}: support discrepancy {:e}", r.id, r.max_discrepancy));
        }
        if r.lemma1.contains(&Lemma1Outcome::Violated) {
            violations.push(format!("instance {}: pair-sum identity fails at a linked optimum", r.id));
        }
        if r.max_round_trip > 1e-6 || r.min_backward_lambda < -1e-6 {
            violations.push(format!(
                "instance {}: round trip {:e}, min weight {:e}",
                r.id, r.max_round_trip, r.min_backward_lambda
            ));
        }
    }
    let max_discrepancy = instances.iter().map(|r| r.max_discrepancy).fold(0.0, f64::max);
    let max_unlinked_widening = instances.iter().map(|r| r.max_unlinked_widening).fold(0.0, f64::max);
    if n_instances > 0 && n_directions > 0 && max_unlinked_widening <= 1e-4 {
        violations.push(format!("dropping the linking row never widened the support (max {max_unlinked_widening:e})"));
    }
    HullReport { seed, n_directions, tolerance, instances, max_discrepancy, max_unlinked_widening, violations }
}
