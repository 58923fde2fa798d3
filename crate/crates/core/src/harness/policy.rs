//! Policy documents: a versioned JSON object holding either α-vectors or
//! ψ-vectors (grid parameters plus one mass row per state).

use super::{GridReport, HarnessError};
use crate::dist::{CategoricalMeasure, SupportGrid};
use crate::dpbvi::{PsiSet, PsiVector};
use crate::model::Belief;
use crate::pbvi::{AlphaVector, ValueSet};
use serde::{Deserialize, Serialize};
use std::fmt;

pub const POLICY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Alpha,
    Psi,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Alpha => "alpha",
            PolicyKind::Psi => "psi",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Alpha {
        action_names: Vec<String>,
        set: ValueSet,
    },
    Psi {
        action_names: Vec<String>,
        set: PsiSet,
    },
}

/// Result of evaluating a policy at one belief.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub action: usize,
    /// Masses of `Σ_s b_s ψ^s` on the grid, for ψ-policies.
    pub masses: Option<(SupportGrid, Vec<f64>)>,
}

impl Policy {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::Alpha { .. } => PolicyKind::Alpha,
            Policy::Psi { .. } => PolicyKind::Psi,
        }
    }

    pub fn action_names(&self) -> &[String] {
        match self {
            Policy::Alpha { action_names, .. } | Policy::Psi { action_names, .. } => action_names,
        }
    }

    pub fn num_states(&self) -> usize {
        match self {
            Policy::Alpha { set, .. } => set.alphas()[0].values.len(),
            Policy::Psi { set, .. } => set.psis()[0].num_states(),
        }
    }

    pub fn evaluate(&self, b: &Belief) -> Evaluation {
        match self {
            Policy::Alpha { set, .. } => {
                let (value, action) = set.value_at(b);
                Evaluation {
                    value,
                    action,
                    masses: None,
                }
            }
            Policy::Psi { set, .. } => {
                let (i, value) = set.best(b);
                let psi = &set.psis()[i];
                let mix = psi.mixture_on_grid(b);
                Evaluation {
                    value,
                    action: psi.action,
                    masses: Some((*psi.grid(), mix.masses().to_vec())),
                }
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    version: u32,
    kind: PolicyKind,
    actions: Vec<String>,
    num_states: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<GridDoc>,
    vectors: Vec<VectorDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridDoc {
    z_min: f64,
    z_max: f64,
    num_atoms: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VectorDoc {
    action: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    masses: Option<Vec<Vec<f64>>>,
}

pub fn export_policy(policy: &Policy) -> String {
    let (grid, vectors) = match policy {
        Policy::Alpha { set, .. } => (
            None,
            set.alphas()
                .iter()
                .map(|a| VectorDoc {
                    action: a.action,
                    values: Some(a.values.clone()),
                    masses: None,
                })
                .collect(),
        ),
        Policy::Psi { set, .. } => {
            let g = GridReport::from(*set.psis()[0].grid());
            (
                Some(GridDoc {
                    z_min: g.z_min,
                    z_max: g.z_max,
                    num_atoms: g.num_atoms,
                }),
                set.psis()
                    .iter()
                    .map(|p| VectorDoc {
                        action: p.action,
                        values: None,
                        masses: Some(p.dists().iter().map(|d| d.masses().to_vec()).collect()),
                    })
                    .collect(),
            )
        }
    };
    let doc = Document {
        version: POLICY_FORMAT_VERSION,
        kind: policy.kind(),
        actions: policy.action_names().to_vec(),
        num_states: policy.num_states(),
        grid,
        vectors,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("policy serializes");
    text.push('\n');
    text
}

fn format_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Format(msg.into())
}

/// Parses a policy document. With `expected` set, a document of the other
/// kind is a format error.
pub fn import_policy(text: &str, expected: Option<PolicyKind>) -> Result<Policy, HarnessError> {
    let doc: Document =
        serde_json::from_str(text).map_err(|e| format_err(format!("malformed policy: {e}")))?;
    if doc.version != POLICY_FORMAT_VERSION {
        return Err(format_err(format!(
            "unsupported policy version {} (expected {POLICY_FORMAT_VERSION})",
            doc.version
        )));
    }
    if let Some(kind) = expected {
        if kind != doc.kind {
            return Err(format_err(format!(
                "expected a {kind} policy, found {}",
                doc.kind
            )));
        }
    }
    if doc.vectors.is_empty() || doc.num_states == 0 || doc.actions.is_empty() {
        return Err(format_err("policy has no vectors, states or actions"));
    }
    for (i, v) in doc.vectors.iter().enumerate() {
        if v.action >= doc.actions.len() {
            return Err(format_err(format!(
                "vector {i}: action {} out of range",
                v.action
            )));
        }
    }
    let n = doc.num_states;
    match doc.kind {
        PolicyKind::Alpha => {
            if doc.grid.is_some() {
                return Err(format_err("α-policy must not carry a grid"));
            }
            let mut alphas = Vec::with_capacity(doc.vectors.len());
            for (i, v) in doc.vectors.into_iter().enumerate() {
                let values = match (v.values, v.masses) {
                    (Some(values), None) if values.len() == n => values,
                    _ => return Err(format_err(format!("vector {i}: expected {n} values"))),
                };
                if values.iter().any(|x| !x.is_finite()) {
                    return Err(format_err(format!("vector {i}: non-finite value")));
                }
                alphas.push(AlphaVector::new(values, v.action));
            }
            Ok(Policy::Alpha {
                action_names: doc.actions,
                set: ValueSet::from_vectors(alphas),
            })
        }
        PolicyKind::Psi => {
            let g = doc
                .grid
                .ok_or_else(|| format_err("ψ-policy needs a grid"))?;
            let grid = SupportGrid::new(g.z_min, g.z_max, g.num_atoms)
                .map_err(|e| format_err(format!("bad grid: {e}")))?;
            let mut psis = Vec::with_capacity(doc.vectors.len());
            for (i, v) in doc.vectors.into_iter().enumerate() {
                let rows = match (v.values, v.masses) {
                    (None, Some(rows)) if rows.len() == n => rows,
                    _ => return Err(format_err(format!("vector {i}: expected {n} mass rows"))),
                };
                let dists = rows
                    .into_iter()
                    .enumerate()
                    .map(|(s, row)| {
                        CategoricalMeasure::new(grid, row)
                            .map_err(|e| format_err(format!("vector {i}, state {s}: {e}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                psis.push(PsiVector::new(dists, v.action));
            }
            Ok(Policy::Psi {
                action_names: doc.actions,
                set: PsiSet::new(psis),
            })
        }
    }
}
