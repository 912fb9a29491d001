//! Sparse multivariate polynomials with exact differentiation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(Vec<u32>, f64)>", into = "Vec<(Vec<u32>, f64)>")]
pub struct Polynomial {
    nvars: usize,
    terms: Vec<(Vec<u32>, f64)>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: Vec::new(),
        }
    }

    /// Builds a polynomial from `(exponents, coefficient)` pairs, merging
    /// like terms.
    pub fn from_pairs(nvars: usize, pairs: Vec<(Vec<u32>, f64)>) -> Result<Self> {
        for (e, c) in &pairs {
            if e.len() != nvars {
                return Err(Error::DimensionMismatch {
                    expected: nvars,
                    got: e.len(),
                });
            }
            if !c.is_finite() {
                return Err(Error::Invalid(format!("non-finite coefficient {c}")));
            }
        }
        let mut p = Self {
            nvars,
            terms: pairs,
        };
        p.normalize();
        Ok(p)
    }

    fn normalize(&mut self) {
        self.terms.sort_by(|a, b| a.0.cmp(&b.0));
        let mut merged: Vec<(Vec<u32>, f64)> = Vec::with_capacity(self.terms.len());
        for (e, c) in self.terms.drain(..) {
            match merged.last_mut() {
                Some((le, lc)) if *le == e => *lc += c,
                _ => merged.push((e, c)),
            }
        }
        merged.retain(|(_, c)| *c != 0.0);
        self.terms = merged;
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> &[(Vec<u32>, f64)] {
        &self.terms
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                e.iter().zip(x).fold(
                    *c,
                    |acc, (&k, &xi)| if k == 0 { acc } else { acc * xi.powi(k as i32) },
                )
            })
            .sum()
    }

    pub fn derivative(&self, var: usize) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|(e, _)| e[var] > 0)
            .map(|(e, c)| {
                let mut e2 = e.clone();
                e2[var] -= 1;
                (e2, c * e[var] as f64)
            })
            .collect();
        let mut p = Self {
            nvars: self.nvars,
            terms,
        };
        p.normalize();
        p
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut p = Self {
            nvars: self.nvars,
            terms: self.terms.iter().chain(&other.terms).cloned().collect(),
        };
        p.normalize();
        p
    }

    /// Largest absolute coefficient (0 for the zero polynomial).
    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c.abs()).fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<(Vec<u32>, f64)>> for Polynomial {
    type Error = Error;

    fn try_from(pairs: Vec<(Vec<u32>, f64)>) -> Result<Self> {
        let nvars = pairs.first().map(|(e, _)| e.len()).unwrap_or(0);
        Self::from_pairs(nvars, pairs)
    }
}

impl From<Polynomial> for Vec<(Vec<u32>, f64)> {
    fn from(p: Polynomial) -> Self {
        p.terms
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quartic() -> Polynomial {
        // 1/2 (q1^2 + p1^2 + q2^2 + p2^2) + q1^2 q2^2
        Polynomial::from_pairs(
            4,
            vec![
                (vec![2, 0, 0, 0], 0.5),
                (vec![0, 2, 0, 0], 0.5),
                (vec![0, 0, 2, 0], 0.5),
                (vec![0, 0, 0, 2], 0.5),
                (vec![2, 0, 2, 0], 1.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn evaluates() {
        let h = quartic();
        let x = [1.0, 2.0, 3.0, -1.0];
        assert_eq!(h.eval(&x), 0.5 * (1.0 + 4.0 + 9.0 + 1.0) + 9.0);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let h = quartic();
        let x = [0.3, -0.7, 1.1, 0.2];
        for v in 0..4 {
            let d = h.derivative(v).eval(&x);
            let eps = 1e-6;
            let mut xp = x;
            let mut xm = x;
            xp[v] += eps;
            xm[v] -= eps;
            let fd = (h.eval(&xp) - h.eval(&xm)) / (2.0 * eps);
            assert!((d - fd).abs() < 1e-8, "var {v}: {d} vs {fd}");
        }
    }

    #[test]
    fn like_terms_merge_and_cancel() {
        let p = Polynomial::from_pairs(2, vec![(vec![1, 0], 2.0), (vec![1, 0], -2.0)]).unwrap();
        assert!(p.terms().is_empty());
        assert_eq!(p.max_abs_coefficient(), 0.0);
    }

    #[test]
    fn wrong_arity_rejected() {
        assert!(Polynomial::from_pairs(3, vec![(vec![1, 0], 1.0)]).is_err());
    }

    #[test]
    fn json_pairs_roundtrip() {
        let p: Polynomial = serde_json::from_str("[[[1,0,2],1.5],[[0,0,0],-1.0]]").unwrap();
        assert_eq!(p.nvars(), 3);
        assert_eq!(p.eval(&[2.0, 0.0, 1.0]), 2.0);
        let back: Polynomial = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
