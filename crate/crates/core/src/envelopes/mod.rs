//! Convex envelopes of the non-convex pieces of the polar power-flow
//! equations, each written as lifted variables plus rows in a [`ConvexProgram`].

mod gap;

pub use gap::{envelope_gap_experiment, envelope_gap_experiment_on, relaxation_gap, GapFailure, GapSample, GapTable, SumRelaxation};

use crate::convexir::{AffineExpr, ConeId, ConvexProgram, ProgramError, RowId, RowSense, VarId};
use crate::interval::Interval;
use std::f64::consts::FRAC_PI_2;

#[derive(Debug, thiserror::Error)]
pub enum EnvelopeError {
    #[error("angle interval {0} leaves [-pi/2, pi/2]")]
    AngleDomain(Interval),
    #[error("interval {0} is not finite")]
    Unbounded(Interval),
    #[error("lambda systems disagree on the shared boxes: {0:?} vs {1:?}")]
    MismatchedBoxes([Interval; 2], [Interval; 2]),
    #[error(transparent)]
    Program(#[from] ProgramError),
}

/// Lifted variables and rows of one envelope. `output` is the variable standing
/// for the relaxed expression.
#[derive(Clone, Debug)]
pub struct EnvelopeSystem {
    pub lifted: Vec<VarId>,
    pub rows: Vec<RowId>,
    pub cones: Vec<ConeId>,
    pub output: VarId,
}

impl EnvelopeSystem {
    fn new(output: VarId) -> Self {
        Self { lifted: vec![output], rows: Vec::new(), cones: Vec::new(), output }
    }
}

fn finite(b: Interval) -> Result<Interval, EnvelopeError> {
    if b.is_finite() {
        Ok(b)
    } else {
        Err(EnvelopeError::Unbounded(b))
    }
}

fn angle_domain(b: Interval) -> Result<Interval, EnvelopeError> {
    if b.lo < -FRAC_PI_2 || b.hi > FRAC_PI_2 || !b.is_finite() {
        return Err(EnvelopeError::AngleDomain(b));
    }
    Ok(b)
}

fn name_of(p: &ConvexProgram, v: VarId) -> &str {
    &p.variable(v).name
}

/// Range of `cos` over an angle interval inside `[-pi/2, pi/2]`.
pub fn cos_range(b: Interval) -> Interval {
    let (cl, cu) = (b.lo.cos(), b.hi.cos());
    if b.contains(0.0) {
        Interval { lo: cl.min(cu), hi: 1.0 }
    } else {
        Interval { lo: cl.min(cu), hi: cl.max(cu) }
    }
}

/// Range of `sin` over an angle interval inside `[-pi/2, pi/2]`.
pub fn sin_range(b: Interval) -> Interval {
    Interval { lo: b.lo.sin(), hi: b.hi.sin() }
}

/// `x̌ ≥ x²` (rotated cone with unit second side) and the secant `x̌ ≤ (xu + xl) x − xu xl`.
pub fn square_envelope(p: &mut ConvexProgram, x: VarId, b: Interval) -> Result<EnvelopeSystem, EnvelopeError> {
    let b = finite(b)?;
    let name = format!("sq({})", name_of(p, x));
    let out = p.add_variable(name, b.square());
    let mut sys = EnvelopeSystem::new(out);
    sys.cones.push(p.add_rotated_soc(out.into(), AffineExpr::constant(1.0), vec![x.into()], "t_conv")?);
    sys.rows.push(p.add_linear(
        AffineExpr::from_terms([(out, 1.0), (x, -(b.hi + b.lo))]),
        RowSense::Le,
        -b.hi * b.lo,
        "t_conv",
    )?);
    p.mark_implied(out, true, true);
    Ok(sys)
}

/// The four McCormick rows of `x·y` over `bx × by`.
pub fn mccormick(p: &mut ConvexProgram, x: VarId, y: VarId, bx: Interval, by: Interval) -> Result<EnvelopeSystem, EnvelopeError> {
    let (bx, by) = (finite(bx)?, finite(by)?);
    let name = format!("{}*{}", name_of(p, x), name_of(p, y));
    let out = p.add_variable(name, bx.mul(&by));
    let mut sys = EnvelopeSystem::new(out);
    // z − a y − c x (sense) −a c
    let rows = [
        (bx.lo, by.lo, RowSense::Ge),
        (bx.hi, by.hi, RowSense::Ge),
        (bx.lo, by.hi, RowSense::Le),
        (bx.hi, by.lo, RowSense::Le),
    ];
    for (a, c, sense) in rows {
        sys.rows.push(p.add_linear(
            AffineExpr::from_terms([(out, 1.0), (y, -a), (x, -c)]),
            sense,
            -a * c,
            "m_conv",
        )?);
    }
    p.mark_implied(out, true, true);
    Ok(sys)
}

/// `(1 − cos m) / m²`, evaluated without cancellation.
fn cos_curvature(m: f64) -> f64 {
    let s = (0.5 * m).sin();
    2.0 * s * s / (m * m)
}

/// Secant slopes of cos and sin between `l < u`, evaluated without cancellation.
fn cos_secant_slope(l: f64, u: f64) -> f64 {
    -2.0 * (0.5 * (u + l)).sin() * (0.5 * (u - l)).sin() / (u - l)
}

fn sin_secant_slope(l: f64, u: f64) -> f64 {
    2.0 * (0.5 * (u + l)).cos() * (0.5 * (u - l)).sin() / (u - l)
}

/// C-CONV: the quadratic upper row (as a rotated cone) and the secant lower row.
pub fn cosine_envelope(p: &mut ConvexProgram, theta: VarId, b: Interval) -> Result<EnvelopeSystem, EnvelopeError> {
    let b = angle_domain(b)?;
    let name = format!("cos({})", name_of(p, theta));
    let out = p.add_variable(name, cos_range(b));
    let mut sys = EnvelopeSystem::new(out);
    if b.is_degenerate() {
        sys.rows.push(p.add_linear(out.into(), RowSense::Eq, b.lo.cos(), "c_conv")?);
        return Ok(sys);
    }
    let k = cos_curvature(b.abs_max());
    // (1 − cs) / k ≥ θ²
    let u = AffineExpr::term(out, -1.0 / k).with_constant(1.0 / k);
    sys.cones.push(p.add_rotated_soc(u, AffineExpr::constant(1.0), vec![theta.into()], "c_conv")?);
    let slope = cos_secant_slope(b.lo, b.hi);
    sys.rows.push(p.add_linear(
        AffineExpr::from_terms([(out, 1.0), (theta, -slope)]),
        RowSense::Ge,
        b.lo.cos() - slope * b.lo,
        "c_conv",
    )?);
    Ok(sys)
}

/// S-CONV: tangent rows at `±m/2` and, on one-signed intervals, the secant row.
pub fn sine_envelope(p: &mut ConvexProgram, theta: VarId, b: Interval) -> Result<EnvelopeSystem, EnvelopeError> {
    let b = angle_domain(b)?;
    let name = format!("sin({})", name_of(p, theta));
    let out = p.add_variable(name, sin_range(b));
    let mut sys = EnvelopeSystem::new(out);
    if b.is_degenerate() {
        sys.rows.push(p.add_linear(out.into(), RowSense::Eq, b.lo.sin(), "s_conv")?);
        return Ok(sys);
    }
    let h = 0.5 * b.abs_max();
    let (c, s) = (h.cos(), h.sin());
    // sn ≤ c (θ − h) + s ;  sn ≥ c (θ + h) − s
    sys.rows.push(p.add_linear(AffineExpr::from_terms([(out, 1.0), (theta, -c)]), RowSense::Le, s - c * h, "s_conv")?);
    sys.rows.push(p.add_linear(AffineExpr::from_terms([(out, 1.0), (theta, -c)]), RowSense::Ge, c * h - s, "s_conv")?);
    let secant = if b.lo >= 0.0 {
        Some(RowSense::Ge)
    } else if b.hi <= 0.0 {
        Some(RowSense::Le)
    } else {
        None
    };
    if let Some(sense) = secant {
        let slope = sin_secant_slope(b.lo, b.hi);
        sys.rows.push(p.add_linear(
            AffineExpr::from_terms([(out, 1.0), (theta, -slope)]),
            sense,
            b.lo.sin() - slope * b.lo,
            "s_conv",
        )?);
    }
    Ok(sys)
}

/// The eight corners of a 3-box, third coordinate varying fastest.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriExtremePoints(pub [[f64; 3]; 8]);

impl TriExtremePoints {
    pub fn product(&self, k: usize) -> f64 {
        let [a, b, c] = self.0[k];
        a * b * c
    }
}

pub fn tri_extreme_points(b1: Interval, b2: Interval, b3: Interval) -> TriExtremePoints {
    let mut xi = [[0.0; 3]; 8];
    for (k, corner) in xi.iter_mut().enumerate() {
        let pick = |b: Interval, bit: usize| if k >> bit & 1 == 0 { b.lo } else { b.hi };
        *corner = [pick(b1, 2), pick(b2, 1), pick(b3, 0)];
    }
    TriExtremePoints(xi)
}

/// A TRI-CONV system together with its multipliers and the boxes it was built on.
#[derive(Clone, Debug)]
pub struct LambdaSystem {
    pub envelope: EnvelopeSystem,
    pub lambda: [VarId; 8],
    pub boxes: [Interval; 3],
}

/// Extreme-point envelope of `x1·x2·x3`.
pub fn trilinear_lambda(
    p: &mut ConvexProgram,
    x: [VarId; 3],
    b: [Interval; 3],
) -> Result<LambdaSystem, EnvelopeError> {
    for bi in b {
        finite(bi)?;
    }
    let xi = tri_extreme_points(b[0], b[1], b[2]);
    let values: Vec<f64> = (0..8).map(|k| xi.product(k)).collect();
    let range = Interval {
        lo: values.iter().copied().fold(f64::INFINITY, f64::min),
        hi: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    let name = format!("{}*{}*{}", name_of(p, x[0]), name_of(p, x[1]), name_of(p, x[2]));
    let lambda: [VarId; 8] =
        std::array::from_fn(|k| p.add_variable(format!("lambda[{name}][{}]", k + 1), Interval { lo: 0.0, hi: 1.0 }));
    let out = p.add_variable(name, range);
    let mut sys = EnvelopeSystem::new(out);
    sys.lifted.extend(lambda);

    let mut conv = AffineExpr::term(out, -1.0);
    for k in 0..8 {
        conv.add_term(lambda[k], values[k]);
    }
    sys.rows.push(p.add_linear(conv, RowSense::Eq, 0.0, "tri_conv")?);
    for i in 0..3 {
        let mut e = AffineExpr::term(x[i], -1.0);
        for k in 0..8 {
            e.add_term(lambda[k], xi.0[k][i]);
        }
        sys.rows.push(p.add_linear(e, RowSense::Eq, 0.0, "tri_conv")?);
    }
    sys.rows.push(p.add_linear(AffineExpr::from_terms(lambda.map(|l| (l, 1.0))), RowSense::Eq, 1.0, "tri_conv")?);
    p.mark_implied(out, true, true);
    for l in lambda {
        p.mark_implied(l, false, true);
    }
    Ok(LambdaSystem { envelope: sys, lambda, boxes: b })
}

/// Weights of the linking row: products of the first two coordinates over the
/// four (x1, x2) corner pairs.
pub fn link_weights(bv1: Interval, bv2: Interval) -> [f64; 4] {
    [bv1.lo * bv2.lo, bv1.lo * bv2.hi, bv1.hi * bv2.lo, bv1.hi * bv2.hi]
}

/// The single equality forcing two λ systems that share their first two
/// variables to agree on the value of `x1·x2`.
pub fn link_lambdas(p: &mut ConvexProgram, c: &LambdaSystem, s: &LambdaSystem) -> Result<RowId, EnvelopeError> {
    let (bc, bs) = ([c.boxes[0], c.boxes[1]], [s.boxes[0], s.boxes[1]]);
    if bc != bs {
        return Err(EnvelopeError::MismatchedBoxes(bc, bs));
    }
    let w = link_weights(bc[0], bc[1]);
    let mut e = AffineExpr::default();
    for (pair, &wk) in w.iter().enumerate() {
        for k in [2 * pair, 2 * pair + 1] {
            e.add_term(c.lambda[k], wk);
            e.add_term(s.lambda[k], -wk);
        }
    }
    Ok(p.add_linear(e, RowSense::Eq, 0.0, "link")?)
}
