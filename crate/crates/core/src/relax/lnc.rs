use crate::interval::Interval;

/// One lifted nonlinear cut `cw_i·w_i + cw_j·w_j + c_wr·wr + c_wi·wi ≥ rhs`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LncRow {
    pub w_i: f64,
    pub w_j: f64,
    pub wr: f64,
    pub wi: f64,
    pub rhs: f64,
}

impl LncRow {
    pub fn eval(&self, w_i: f64, w_j: f64, wr: f64, wi: f64) -> f64 {
        self.w_i * w_i + self.w_j * w_j + self.wr * wr + self.wi * wi - self.rhs
    }
}

/// The two cuts for a bus pair with voltage boxes `vi`, `vj` and angle box `td`.
pub fn lnc_rows(vi: Interval, vj: Interval, td: Interval) -> [LncRow; 2] {
    let (si, sj) = (vi.lo + vi.hi, vj.lo + vj.hi);
    let phi = 0.5 * (td.hi + td.lo);
    let cd = (0.5 * (td.hi - td.lo)).cos();
    let wr = si * sj * phi.cos();
    let wi = si * sj * phi.sin();
    [
        LncRow {
            w_i: -vj.hi * cd * sj,
            w_j: -vi.hi * cd * si,
            wr,
            wi,
            rhs: vi.hi * vj.hi * cd * (vi.lo * vj.lo - vi.hi * vj.hi),
        },
        LncRow {
            w_i: -vj.lo * cd * sj,
            w_j: -vi.lo * cd * si,
            wr,
            wi,
            rhs: vi.lo * vj.lo * cd * (vi.hi * vj.hi - vi.lo * vj.lo),
        },
    ]
}
