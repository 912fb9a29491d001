//! Built-in example systems.

use std::f64::consts::PI;
use std::sync::Arc;

use super::{Domain, Field, Glue, Polynomial, VectorField};
use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianSystem;

pub const BUILTIN_NAMES: &[&str] = &[
    "zero3",
    "constant3",
    "abc",
    "cat_suspension3",
    "harmonic4",
    "coupled_quartic4",
];

/// The cat map matrix `[[2,1],[1,1]]`.
pub const CAT_MATRIX: [[i64; 2]; 2] = [[2, 1], [1, 1]];

pub fn builtin(name: &str) -> Result<Field> {
    Ok(match name {
        "zero3" => Arc::new(Constant::new("zero3", vec![0.0; 3], Domain::torus(3, 1.0))),
        // time-1 map is a period-4 translation of the unit torus
        "constant3" => Arc::new(Constant::new(
            "constant3",
            vec![1.0, 0.5, 0.25],
            Domain::torus(3, 1.0),
        )),
        "abc" => Arc::new(Abc::new(1.0, 1.0, 1.0)),
        "cat_suspension3" => Arc::new(CatSuspension::new()),
        "harmonic4" | "coupled_quartic4" => HamiltonianSystem::builtin(name)?.field(),
        other => return Err(Error::UnknownSystem(other.to_string())),
    })
}

/// Constant field `X = c`.
#[derive(Debug, Clone)]
pub struct Constant {
    name: String,
    c: Vec<f64>,
    domain: Domain,
}

impl Constant {
    pub fn new(name: &str, c: Vec<f64>, domain: Domain) -> Self {
        assert_eq!(c.len(), domain.dim());
        Self {
            name: name.to_string(),
            c,
            domain,
        }
    }
}

impl VectorField for Constant {
    fn name(&self) -> &str {
        &self.name
    }

    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn eval_into(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.c);
    }

    fn jacobian_into(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn divergence_free(&self) -> bool {
        true
    }
}

/// Arnold–Beltrami–Childress flow on the `2*pi` torus:
///
/// ```text
/// x' = A sin z + C cos y
/// y' = B sin x + A cos z
/// z' = C sin y + B cos x
/// ```
#[derive(Debug, Clone)]
pub struct Abc {
    a: f64,
    b: f64,
    c: f64,
    domain: Domain,
}

impl Abc {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self {
            a,
            b,
            c,
            domain: Domain::torus(3, 2.0 * PI),
        }
    }
}

impl VectorField for Abc {
    fn name(&self) -> &str {
        "abc"
    }

    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let (sx, cx) = x[0].sin_cos();
        let (sy, cy) = x[1].sin_cos();
        let (sz, cz) = x[2].sin_cos();
        out[0] = self.a * sz + self.c * cy;
        out[1] = self.b * sx + self.a * cz;
        out[2] = self.c * sy + self.b * cx;
    }

    fn jacobian_into(&self, x: &[f64], out: &mut [f64]) {
        let (sx, cx) = x[0].sin_cos();
        let (sy, cy) = x[1].sin_cos();
        let (sz, cz) = x[2].sin_cos();
        out.copy_from_slice(&[
            0.0,
            -self.c * sy,
            self.a * cz,
            self.b * cx,
            0.0,
            -self.a * sz,
            -self.b * sx,
            self.c * cy,
            0.0,
        ]);
    }

    fn divergence_free(&self) -> bool {
        true
    }
}

/// Mapping torus of the cat map with unit ceiling: `X = d/dz` on
/// `[0,1)^3` with `(x, y, 1) ~ (cat(x, y), 0)`.
#[derive(Debug, Clone)]
pub struct CatSuspension {
    domain: Domain,
}

impl CatSuspension {
    pub fn new() -> Self {
        Self {
            domain: Domain {
                lower: vec![0.0; 3],
                upper: vec![1.0; 3],
                periodic: vec![true, true, false],
                glue: Some(Glue {
                    axis: 2,
                    fiber: [0, 1],
                    matrix: CAT_MATRIX,
                }),
            },
        }
    }
}

impl Default for CatSuspension {
    fn default() -> Self {
        Self::new()
    }
}

impl VectorField for CatSuspension {
    fn name(&self) -> &str {
        "cat_suspension3"
    }

    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn eval_into(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&[0.0, 0.0, 1.0]);
    }

    fn jacobian_into(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn divergence_free(&self) -> bool {
        true
    }
}

/// Field with polynomial components, divergence checked symbolically.
#[derive(Debug, Clone)]
pub struct PolynomialField {
    name: String,
    components: Vec<Polynomial>,
    jacobian: Vec<Vec<Polynomial>>,
    domain: Domain,
    divergence_free: bool,
}

impl PolynomialField {
    /// Symbolic divergence coefficients below this count as zero.
    pub const DIVERGENCE_TOL: f64 = 1e-12;

    pub fn new(
        name: &str,
        components: Vec<Polynomial>,
        domain: Domain,
        require_divergence_free: bool,
    ) -> Result<Self> {
        let d = domain.dim();
        domain.validate()?;
        if components.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: components.len(),
            });
        }
        if !(3..=4).contains(&d) {
            return Err(Error::Invalid(format!(
                "dimension {d} not supported (3 or 4)"
            )));
        }
        let components: Vec<Polynomial> = components
            .into_iter()
            .map(|p| {
                if p.nvars() == d {
                    Ok(p)
                } else if p.terms().is_empty() {
                    Ok(Polynomial::zero(d))
                } else {
                    Err(Error::DimensionMismatch {
                        expected: d,
                        got: p.nvars(),
                    })
                }
            })
            .collect::<Result<_>>()?;
        let jacobian: Vec<Vec<Polynomial>> = components
            .iter()
            .map(|p| (0..d).map(|j| p.derivative(j)).collect())
            .collect();
        let div = (0..d).fold(Polynomial::zero(d), |acc, i| acc.add(&jacobian[i][i]));
        let residual = div.max_abs_coefficient();
        let divergence_free = residual <= Self::DIVERGENCE_TOL;
        if require_divergence_free && !divergence_free {
            return Err(Error::NotDivergenceFree(residual));
        }
        Ok(Self {
            name: name.to_string(),
            components,
            jacobian,
            domain,
            divergence_free,
        })
    }
}

impl VectorField for PolynomialField {
    fn name(&self) -> &str {
        &self.name
    }

    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.components) {
            *o = p.eval(x);
        }
    }

    fn jacobian_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.components.len();
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = self.jacobian[i][j].eval(x);
            }
        }
    }

    fn divergence_free(&self) -> bool {
        self.divergence_free
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{flow, IntegratorOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn all_builtins_resolve() {
        for name in BUILTIN_NAMES {
            let f = builtin(name).unwrap();
            assert_eq!(f.name(), *name);
        }
        assert_eq!(
            builtin("lorenz").unwrap_err(),
            Error::UnknownSystem("lorenz".into())
        );
    }

    #[test]
    fn zero_field_vanishes() {
        let f = builtin("zero3").unwrap();
        assert_eq!(f.eval(&[0.3, 0.1, 0.9]).norm(), 0.0);
        assert!(f.is_singular(&[0.3, 0.1, 0.9]));
    }

    #[test]
    fn abc_is_divergence_free() {
        // symbolically: d/dx(A sin z + C cos y) + d/dy(B sin x + A cos z)
        // + d/dz(C sin y + B cos x) = 0
        let f = builtin("abc").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let x = f.domain().sample_uniform(&mut rng);
            assert!(f.divergence(&x).abs() <= 1e-12);
        }
    }

    #[test]
    fn abc_jacobian_matches_finite_difference() {
        let f = Abc::new(1.0, 0.7, 0.4);
        let x = [0.4, 1.3, 2.2];
        let j = f.jacobian(&x);
        for k in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += 1e-6;
            xm[k] -= 1e-6;
            let col = (f.eval(&xp) - f.eval(&xm)) / 2e-6;
            for i in 0..3 {
                assert!((j[(i, k)] - col[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn cat_suspension_return_map_is_cat_map() {
        let f = builtin("cat_suspension3").unwrap();
        let opts = IntegratorOptions::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let (x, y): (f64, f64) = (rand::Rng::random(&mut rng), rand::Rng::random(&mut rng));
            let p = flow(f.as_ref(), &[x, y, 0.0], 1.0, &opts).unwrap();
            let cx = (2.0 * x + y).rem_euclid(1.0);
            let cy = (x + y).rem_euclid(1.0);
            assert_eq!(p.position[2], 0.0);
            assert!((p.position[0] - cx).abs() < 1e-12, "{:?}", p.position);
            assert!((p.position[1] - cy).abs() < 1e-12);
        }
    }

    #[test]
    fn polynomial_field_divergence_validation() {
        let d = Domain::torus(3, 1.0);
        // X = (x, 0, 0) has divergence 1
        let comps = vec![
            Polynomial::from_pairs(3, vec![(vec![1, 0, 0], 1.0)]).unwrap(),
            Polynomial::zero(3),
            Polynomial::zero(3),
        ];
        let err = PolynomialField::new("p", comps.clone(), d.clone(), true).unwrap_err();
        assert!(matches!(err, Error::NotDivergenceFree(_)));
        let f = PolynomialField::new("p", comps, d, false).unwrap();
        assert!(!f.divergence_free());
        assert_eq!(f.divergence(&[0.2, 0.2, 0.2]), 1.0);
    }
}
