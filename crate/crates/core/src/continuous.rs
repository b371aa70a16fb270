//! Generators of the continuous symmetry subgroup.

use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pauli::PauliLabel;

/// Largest subsystem for the exhaustive `4^n` label scan.
pub const DEFAULT_SCAN_CAP: usize = 10;

/// Labels `γ` whose one-parameter groups `exp(iθσ_γ)` keep the real span of
/// the term set invariant. Empty means `G_c = {I}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ContinuousGenerators {
    pub n: usize,
    pub labels: Vec<PauliLabel>,
}

impl ContinuousGenerators {
    pub fn is_trivial(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, label: &PauliLabel) -> bool {
        self.labels.contains(label)
    }
}

impl fmt::Display for ContinuousGenerators {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.labels.is_empty() {
            return write!(f, "G_c = {{I}}");
        }
        let names: Vec<String> = self.labels.iter().map(|l| l.to_string()).collect();
        write!(f, "G_c generators: {}", names.join(", "))
    }
}

/// `true` if for every `γ'` in `reference`, `γ ⊕ γ'` is in `reference` or
/// `σ_γ` commutes with `σ_γ'`.
pub fn satisfies_criterion(
    gamma: &PauliLabel,
    reference: &[PauliLabel],
    lookup: &HashSet<PauliLabel>,
) -> bool {
    reference
        .iter()
        .all(|r| !gamma.anticommutes(r) || lookup.contains(&(*gamma ^ *r)))
}

pub fn compute_continuous(terms: &[PauliLabel], n_sub: usize) -> Result<ContinuousGenerators> {
    compute_continuous_capped(terms, n_sub, DEFAULT_SCAN_CAP)
}

pub fn compute_continuous_capped(
    terms: &[PauliLabel],
    n_sub: usize,
    cap: usize,
) -> Result<ContinuousGenerators> {
    if n_sub > cap {
        return Err(Error::Resource {
            what: "qubits for continuous-generator scan",
            size: n_sub,
            cap,
        });
    }
    if let Some(t) = terms.iter().find(|t| t.n() != n_sub) {
        return Err(Error::LengthMismatch {
            left: n_sub,
            right: t.n(),
        });
    }
    let lookup: HashSet<PauliLabel> = terms.iter().copied().collect();
    let labels = PauliLabel::all(n_sub)
        .filter(|g| !g.is_identity() && satisfies_criterion(g, terms, &lookup))
        .collect();
    Ok(ContinuousGenerators { n: n_sub, labels })
}
