//! Surface specification files.

use std::collections::BTreeMap;
use std::path::Path;

use cr_szego::geometry::{ambient_context, ModelSurface};
use cr_szego::jets::Jet;
use cr_szego::scalars::GaussianRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TRUNCATION: i32 = 6;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed surface specification: {0}")]
    Json(#[from] serde_json::Error),
    #[error("n must be at least 1")]
    Dimension,
    #[error("truncation_degree {0} is below the minimum of 6")]
    Truncation(i32),
    #[error("entry {entry}: {field} has length {found}, expected {expected}")]
    Shape {
        entry: usize,
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("entry {entry}: total degree {degree} outside 4..={max}")]
    Degree { entry: usize, degree: u32, max: i32 },
    #[error("entry {entry}: Hermitian violation: {detail}")]
    Hermitian { entry: usize, detail: String },
    #[error("entry {entry}: duplicates entry {first}")]
    Duplicate { entry: usize, first: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationTerm {
    /// Exponents of `z₁ … z_{n+1}`.
    pub alpha: Vec<u16>,
    /// Exponents of `z̄₁ … z̄_{n+1}`.
    pub beta: Vec<u16>,
    pub coeff: GaussianRational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub n: usize,
    #[serde(default = "default_truncation")]
    pub truncation_degree: i32,
    #[serde(default)]
    pub perturbation: Vec<PerturbationTerm>,
}

fn default_truncation() -> i32 {
    DEFAULT_TRUNCATION
}

impl SurfaceSpec {
    pub fn heisenberg(n: usize) -> Self {
        Self { n, truncation_degree: DEFAULT_TRUNCATION, perturbation: Vec::new() }
    }

    /// Checks shapes and degrees and materializes implied conjugate terms.
    /// Entries come out sorted by `(alpha, beta)`.
    pub fn validated(mut self) -> Result<Self, SpecError> {
        if self.n == 0 {
            return Err(SpecError::Dimension);
        }
        if self.truncation_degree < DEFAULT_TRUNCATION {
            return Err(SpecError::Truncation(self.truncation_degree));
        }
        let m = self.n + 1;
        let mut seen: BTreeMap<(Vec<u16>, Vec<u16>), usize> = BTreeMap::new();
        for (entry, t) in self.perturbation.iter().enumerate() {
            for (field, v) in [("alpha", &t.alpha), ("beta", &t.beta)] {
                if v.len() != m {
                    return Err(SpecError::Shape { entry, field, expected: m, found: v.len() });
                }
            }
            let degree: u32 = t.alpha.iter().chain(&t.beta).map(|&e| u32::from(e)).sum();
            if degree < 4 || degree as i32 > self.truncation_degree {
                return Err(SpecError::Degree { entry, degree, max: self.truncation_degree });
            }
            if t.alpha == t.beta && !t.coeff.is_real() {
                return Err(SpecError::Hermitian {
                    entry,
                    detail: format!("diagonal monomial needs a real coefficient, got {}", t.coeff),
                });
            }
            if let Some(&first) = seen.get(&(t.alpha.clone(), t.beta.clone())) {
                return Err(SpecError::Duplicate { entry, first });
            }
            seen.insert((t.alpha.clone(), t.beta.clone()), entry);
        }
        let mut implied = Vec::new();
        for (entry, t) in self.perturbation.iter().enumerate() {
            if t.alpha == t.beta {
                continue;
            }
            match seen.get(&(t.beta.clone(), t.alpha.clone())) {
                Some(&j) => {
                    let partner = &self.perturbation[j].coeff;
                    if *partner != t.coeff.conj() {
                        return Err(SpecError::Hermitian {
                            entry,
                            detail: format!("partner entry {j} has {partner}, expected {}", t.coeff.conj()),
                        });
                    }
                }
                None => implied.push(PerturbationTerm {
                    alpha: t.beta.clone(),
                    beta: t.alpha.clone(),
                    coeff: t.coeff.conj(),
                }),
            }
        }
        self.perturbation.extend(implied);
        self.perturbation.sort_by(|a, b| (&a.alpha, &a.beta).cmp(&(&b.alpha, &b.beta)));
        Ok(self)
    }

    pub fn perturbation_jet(&self) -> Jet {
        let ctx = ambient_context(self.n);
        self.perturbation.iter().fold(Jet::zero(&ctx, self.truncation_degree), |acc, t| {
            let e: Vec<u16> = t.alpha.iter().chain(&t.beta).copied().collect();
            &acc + &Jet::monomial(&ctx, self.truncation_degree, &e, t.coeff.clone())
        })
    }

    pub fn to_surface(&self) -> cr_szego::Result<ModelSurface> {
        ModelSurface::with_perturbation(self.n, self.truncation_degree, &self.perturbation_jet())
    }

    /// Specification of an existing surface, e.g. a failing random sample.
    pub fn from_surface(surface: &ModelSurface) -> Self {
        let m = surface.n() + 1;
        let perturbation = surface
            .perturbation()
            .terms()
            .map(|(e, c)| PerturbationTerm {
                alpha: e.exponents()[..m].to_vec(),
                beta: e.exponents()[m..].to_vec(),
                coeff: c.clone(),
            })
            .collect();
        Self { n: surface.n(), truncation_degree: surface.cap(), perturbation }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }
}

pub fn parse_str(text: &str) -> Result<SurfaceSpec, SpecError> {
    serde_json::from_str::<SurfaceSpec>(text)?.validated()
}

pub fn parse_surface(path: &Path) -> Result<SurfaceSpec, SpecError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| SpecError::Io { path: path.display().to_string(), source })?;
    parse_str(&text)
}
