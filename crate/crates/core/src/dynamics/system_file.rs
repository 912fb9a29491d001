//! JSON system definitions.
//!
//! ```json
//! {"name": "shear", "dim": 3, "kind": "polynomial",
//!  "coefficients": [[[[0,1,0], 1.0]], [], [[[1,0,0], 0.5]]]}
//! ```
//!
//! Each entry of `coefficients` is one component, given as a list of
//! `(exponent-tuple, coefficient)` pairs. A 4-dimensional system may
//! instead give a scalar `"hamiltonian"` in the same pair format; its field
//! is `J grad H`. `"kind": "builtin"` resolves `name` among the built-ins.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::systems::PolynomialField;
use super::{builtin, Domain, Field, Polynomial};
use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Builtin,
    Polynomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub name: String,
    #[serde(default)]
    pub dim: Option<usize>,
    pub kind: SystemKind,
    #[serde(default)]
    pub coefficients: Option<Vec<Vec<(Vec<u32>, f64)>>>,
    #[serde(default)]
    pub hamiltonian: Option<Vec<(Vec<u32>, f64)>>,
    #[serde(default)]
    pub domain: Option<Domain>,
    /// Reject the definition unless its symbolic divergence vanishes.
    #[serde(default = "default_true")]
    pub divergence_free: bool,
}

fn default_true() -> bool {
    true
}

/// A resolved system: the field, plus the Hamiltonian when there is one.
#[derive(Debug, Clone)]
pub struct LoadedSystem {
    pub field: Field,
    pub hamiltonian: Option<Arc<HamiltonianSystem>>,
}

impl LoadedSystem {
    pub fn builtin(name: &str) -> Result<Self> {
        let hamiltonian = match name {
            "harmonic4" | "coupled_quartic4" => Some(Arc::new(HamiltonianSystem::builtin(name)?)),
            _ => None,
        };
        let field = match &hamiltonian {
            Some(h) => h.field(),
            None => builtin(name)?,
        };
        Ok(Self { field, hamiltonian })
    }
}

impl SystemSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Invalid(format!("system file: {e}")))
    }

    pub fn load(&self) -> Result<LoadedSystem> {
        match self.kind {
            SystemKind::Builtin => {
                let sys = LoadedSystem::builtin(&self.name)?;
                if let Some(d) = self.dim {
                    if d != sys.field.dim() {
                        return Err(Error::DimensionMismatch {
                            expected: sys.field.dim(),
                            got: d,
                        });
                    }
                }
                Ok(sys)
            }
            SystemKind::Polynomial => self.load_polynomial(),
        }
    }

    fn load_polynomial(&self) -> Result<LoadedSystem> {
        let dim = self
            .dim
            .ok_or_else(|| Error::Invalid("polynomial systems need `dim`".into()))?;
        let domain = self
            .domain
            .clone()
            .unwrap_or_else(|| Domain::euclidean(dim, 2.0));
        if domain.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: domain.dim(),
            });
        }
        match (&self.coefficients, &self.hamiltonian) {
            (Some(comps), None) => {
                let comps = comps
                    .iter()
                    .map(|pairs| Polynomial::from_pairs(dim, pairs.clone()))
                    .collect::<Result<Vec<_>>>()?;
                let field = PolynomialField::new(&self.name, comps, domain, self.divergence_free)?;
                Ok(LoadedSystem {
                    field: Arc::new(field),
                    hamiltonian: None,
                })
            }
            (None, Some(pairs)) => {
                if dim != 4 {
                    return Err(Error::DimensionMismatch {
                        expected: 4,
                        got: dim,
                    });
                }
                let h = Polynomial::from_pairs(dim, pairs.clone())?;
                let sys = Arc::new(HamiltonianSystem::from_polynomial(&self.name, h, domain)?);
                Ok(LoadedSystem {
                    field: sys.field(),
                    hamiltonian: Some(sys),
                })
            }
            _ => Err(Error::Invalid(
                "give exactly one of `coefficients` or `hamiltonian`".into(),
            )),
        }
    }
}

/// Resolves a name or a path to a JSON system file.
pub fn resolve_system(name_or_path: &str) -> Result<LoadedSystem> {
    if name_or_path.ends_with(".json") || std::path::Path::new(name_or_path).is_file() {
        let text = std::fs::read_to_string(name_or_path)
            .map_err(|e| Error::Invalid(format!("{name_or_path}: {e}")))?;
        SystemSpec::from_json(&text)?.load()
    } else {
        LoadedSystem::builtin(name_or_path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_shear_loads() {
        let spec = SystemSpec::from_json(
            r#"{"name":"shear","dim":3,"kind":"polynomial",
                "coefficients":[[[[0,1,0],1.0]],[],[[[1,0,0],0.5]]],
                "domain":{"lower":[0,0,0],"upper":[1,1,1],"periodic":[true,true,true]}}"#,
        )
        .unwrap();
        let sys = spec.load().unwrap();
        assert!(sys.field.divergence_free());
        assert_eq!(
            sys.field.eval(&[0.2, 0.4, 0.0]).as_slice(),
            &[0.4, 0.0, 0.1]
        );
    }

    #[test]
    fn compressible_polynomial_rejected() {
        let spec = SystemSpec::from_json(
            r#"{"name":"src","dim":3,"kind":"polynomial",
                "coefficients":[[[[1,0,0],1.0]],[],[]]}"#,
        )
        .unwrap();
        assert!(matches!(spec.load(), Err(Error::NotDivergenceFree(_))));
    }

    #[test]
    fn hamiltonian_polynomial_loads() {
        let spec = SystemSpec::from_json(
            r#"{"name":"osc","dim":4,"kind":"polynomial",
                "hamiltonian":[[[2,0,0,0],0.5],[[0,2,0,0],0.5],[[0,0,2,0],0.5],[[0,0,0,2],0.5]]}"#,
        )
        .unwrap();
        let sys = spec.load().unwrap();
        assert!(sys.hamiltonian.is_some());
        // q' = p, p' = -q
        assert_eq!(
            sys.field.eval(&[1.0, 0.0, 0.0, 2.0]).as_slice(),
            &[0.0, -1.0, 2.0, 0.0]
        );
    }

    #[test]
    fn builtin_kind_checks_dimension() {
        let spec = SystemSpec::from_json(r#"{"name":"abc","dim":4,"kind":"builtin"}"#).unwrap();
        assert!(matches!(spec.load(), Err(Error::DimensionMismatch { .. })));
        let spec = SystemSpec::from_json(r#"{"name":"nope","kind":"builtin"}"#).unwrap();
        assert!(matches!(spec.load(), Err(Error::UnknownSystem(_))));
    }
}
