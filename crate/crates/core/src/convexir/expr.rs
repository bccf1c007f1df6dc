use super::VarId;
use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

/// Sparse affine expression `Σ cᵢ xᵢ + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn term(v: VarId, c: f64) -> Self {
        Self { terms: vec![(v, c)], constant: 0.0 }
    }

    pub fn from_terms<I: IntoIterator<Item = (VarId, f64)>>(terms: I) -> Self {
        Self { terms: terms.into_iter().collect(), constant: 0.0 }
    }

    pub fn add_term(&mut self, v: VarId, c: f64) -> &mut Self {
        self.terms.push((v, c));
        self
    }

    pub fn with_term(mut self, v: VarId, c: f64) -> Self {
        self.terms.push((v, c));
        self
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>()
    }

    /// Merges duplicate handles and drops exact zeros; order by handle.
    pub fn compacted(&self) -> Self {
        let mut acc: BTreeMap<VarId, f64> = BTreeMap::new();
        for &(v, c) in &self.terms {
            *acc.entry(v).or_insert(0.0) += c;
        }
        Self { terms: acc.into_iter().filter(|&(_, c)| c != 0.0).collect(), constant: self.constant }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { terms: self.terms.iter().map(|&(v, c)| (v, k * c)).collect(), constant: k * self.constant }
    }
}

impl From<VarId> for AffineExpr {
    fn from(v: VarId) -> Self {
        Self::term(v, 1.0)
    }
}

impl Add for AffineExpr {
    type Output = AffineExpr;
    fn add(mut self, rhs: AffineExpr) -> AffineExpr {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
        self
    }
}

impl Sub for AffineExpr {
    type Output = AffineExpr;
    fn sub(self, rhs: AffineExpr) -> AffineExpr {
        self + rhs.scaled(-1.0)
    }
}

impl Neg for AffineExpr {
    type Output = AffineExpr;
    fn neg(self) -> AffineExpr {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for AffineExpr {
    type Output = AffineExpr;
    fn mul(self, k: f64) -> AffineExpr {
        self.scaled(k)
    }
}
