//! System definition files.
//!
//! A definition names the system, fixes `n` and the integer weight matrix,
//! and gives the Hamiltonian either as explicit `(coeff, powers)` terms over
//! `(q1..qn, p1..pn)` or as a reference to a built-in. An optional
//! tolerances block overrides solver defaults field by field.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Tolerances;
use crate::poly::Polynomial;
use crate::releq::{SymmetricSystem, SystemBuildError};
use crate::symmetry::build_action;
use crate::systems;

#[derive(Debug, Error)]
pub enum DefError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed definition: {0}")]
    Json(String),
    #[error("'{0}' is neither a definition file nor a built-in system")]
    NotFound(String),
    #[error("unknown built-in '{0}'")]
    UnknownBuiltin(String),
    #[error("definition disagrees with built-in '{name}' on {field}")]
    BuiltinMismatch { name: String, field: &'static str },
    #[error("term {index} has {found} powers, expected {expected}")]
    BadPowers { index: usize, expected: usize, found: usize },
    #[error("weights must be a nonempty k x n integer matrix")]
    BadWeights,
    #[error("hamiltonian is not invariant under the declared action: {witness}")]
    NotInvariant { witness: String },
    #[error("definition invalid: {0}")]
    Invalid(String),
}

/// One polynomial term record of the definition schema.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TermRecord {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

/// Hamiltonian payload: built-in reference or explicit terms.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum HamiltonianDef {
    #[serde(rename = "builtin")]
    Builtin(String),
    #[serde(rename = "terms")]
    Terms(Vec<TermRecord>),
}

/// The on-disk schema of a system definition.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemDefinition {
    pub name: String,
    pub n: usize,
    pub weights: Vec<Vec<i64>>,
    pub hamiltonian: HamiltonianDef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
}

impl SystemDefinition {
    /// Definition with explicit terms for a registry entry.
    pub fn from_builtin(name: &str) -> Option<Self> {
        let b = systems::builtin::<f64>(name)?;
        let terms = b
            .hamiltonian
            .terms()
            .map(|(e, c)| TermRecord { coeff: c, powers: e.to_vec() })
            .collect();
        Some(Self {
            name: b.name.to_string(),
            n: b.dof,
            weights: b.weights,
            hamiltonian: HamiltonianDef::Terms(terms),
            tolerances: None,
        })
    }

    pub fn parse(text: &str) -> Result<Self, DefError> {
        serde_json::from_str(text).map_err(|e| DefError::Json(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("definition serializes");
        s.push('\n');
        s
    }

    /// Builds the system, validating the schema invariants.
    pub fn build(&self) -> Result<(SymmetricSystem<f64>, Tolerances), DefError> {
        if self.n == 0 {
            return Err(DefError::Invalid("n must be positive".into()));
        }
        if self.weights.is_empty() || self.weights.iter().any(|r| r.len() != self.n) {
            return Err(DefError::BadWeights);
        }
        let tol = self.tolerances.clone().unwrap_or_default();

        let h = match &self.hamiltonian {
            HamiltonianDef::Builtin(name) => {
                let b = systems::builtin::<f64>(name)
                    .ok_or_else(|| DefError::UnknownBuiltin(name.clone()))?;
                if b.dof != self.n {
                    return Err(DefError::BuiltinMismatch { name: name.clone(), field: "n" });
                }
                if b.weights != self.weights {
                    return Err(DefError::BuiltinMismatch {
                        name: name.clone(),
                        field: "weights",
                    });
                }
                b.hamiltonian
            }
            HamiltonianDef::Terms(terms) => {
                let nv = 2 * self.n;
                let mut pairs = Vec::with_capacity(terms.len());
                for (i, t) in terms.iter().enumerate() {
                    if t.powers.len() != nv {
                        return Err(DefError::BadPowers {
                            index: i,
                            expected: nv,
                            found: t.powers.len(),
                        });
                    }
                    pairs.push((t.coeff, t.powers.clone()));
                }
                Polynomial::from_terms(nv, &pairs).map_err(|e| DefError::Invalid(e.to_string()))?
            }
        };

        let (action, moment) =
            build_action(&self.weights).map_err(|e| DefError::Invalid(e.to_string()))?;
        match SymmetricSystem::new(self.name.clone(), action, moment, h, &tol) {
            Ok(sys) => Ok((sys, tol)),
            Err(SystemBuildError::NotInvariant(v)) => {
                Err(DefError::NotInvariant { witness: v.to_string() })
            }
            Err(e) => Err(DefError::Invalid(e.to_string())),
        }
    }

    /// Whether this definition references an experimental registry entry.
    pub fn experimental(&self) -> bool {
        let name = match &self.hamiltonian {
            HamiltonianDef::Builtin(name) => name.as_str(),
            HamiltonianDef::Terms(_) => self.name.as_str(),
        };
        systems::builtin::<f64>(name).map(|b| b.experimental).unwrap_or(false)
    }
}

/// Resolves a CLI system argument: an existing file path is parsed as a
/// definition; otherwise the argument must name a built-in.
pub fn load_system(arg: &str) -> Result<SystemDefinition, DefError> {
    let path = Path::new(arg);
    if path.exists() {
        let text = fs::read_to_string(path)
            .map_err(|source| DefError::Io { path: arg.to_string(), source })?;
        SystemDefinition::parse(&text)
    } else if systems::builtin::<f64>(arg).is_some() {
        Ok(SystemDefinition::from_builtin(arg).expect("registry entry"))
    } else {
        Err(DefError::NotFound(arg.to_string()))
    }
}
