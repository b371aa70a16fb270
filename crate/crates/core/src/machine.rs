//! Machine descriptions: the Pauli term set, its visible/hidden/coupling
//! split, and XOR generator sets with their decomposition phases.
//!
//! Document format (UTF-8):
//!
//! ```text
//! # comment
//! name = H_I
//! visible = 2
//! hidden = 0
//! XI
//! ZI
//! ZZ
//! ```
//!
//! Each term line is a Pauli string of length `visible + hidden`; the first
//! `visible` letters act on the visible qubits.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::f2::Echelon;
use crate::pauli::{mul, PauliLabel, PhasedPauli};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MachineSpec {
    pub name: String,
    pub n_visible: usize,
    pub n_hidden: usize,
    pub terms: Vec<PauliLabel>,
}

impl MachineSpec {
    pub fn new(
        name: impl Into<String>,
        n_visible: usize,
        n_hidden: usize,
        terms: Vec<PauliLabel>,
    ) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            n_visible,
            n_hidden,
            terms,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn n(&self) -> usize {
        self.n_visible + self.n_hidden
    }

    fn validate(&self) -> Result<()> {
        if self.n_visible == 0 {
            return Err(Error::Input("at least one visible qubit is required".into()));
        }
        if self.terms.is_empty() {
            return Err(Error::Input("machine has no terms".into()));
        }
        let mut seen = HashSet::new();
        for t in &self.terms {
            if t.n() != self.n() {
                return Err(Error::Input(format!(
                    "term {t} has {} qubits, expected {}",
                    t.n(),
                    self.n()
                )));
            }
            if t.is_identity() {
                return Err(Error::Input("identity term is not traceless".into()));
            }
            if !seen.insert(*t) {
                return Err(Error::Input(format!("duplicate term {t}")));
            }
        }
        Ok(())
    }

    /// Structured echo of the parsed machine.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("machine spec serializes")
    }

    /// Renders the machine in the document format accepted by [`parse_spec`].
    pub fn to_document(&self) -> String {
        let mut out = format!(
            "name = {}\nvisible = {}\nhidden = {}\n",
            self.name, self.n_visible, self.n_hidden
        );
        for t in &self.terms {
            out.push_str(&format!("{t}\n"));
        }
        out
    }
}

/// Parses a machine document. Term order is preserved.
pub fn parse_spec(document: &str) -> Result<MachineSpec> {
    let mut name = None;
    let mut visible: Option<(usize, usize)> = None;
    let mut hidden: Option<(usize, usize)> = None;
    let mut terms: Vec<(usize, PauliLabel)> = Vec::new();

    for (idx, raw) in document.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let perr = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        if let Some((key, value)) = line.split_once('=') {
            let value = value.trim();
            match key.trim() {
                "name" => name = Some(value.to_string()),
                "visible" => {
                    let v = value
                        .parse()
                        .map_err(|_| perr(format!("visible count {value:?} is not an integer")))?;
                    visible = Some((v, line_no));
                }
                "hidden" => {
                    let v = value
                        .parse()
                        .map_err(|_| perr(format!("hidden count {value:?} is not an integer")))?;
                    hidden = Some((v, line_no));
                }
                other => return Err(perr(format!("unknown header key {other:?}"))),
            }
            continue;
        }
        let label: PauliLabel = line
            .parse()
            .map_err(|e: Error| perr(format!("malformed term {line:?}: {e}")))?;
        terms.push((line_no, label));
    }

    let last_line = document.lines().count().max(1);
    let (n_v, v_line) = visible.ok_or(Error::Parse {
        line: last_line,
        message: "missing `visible = <count>` header".into(),
    })?;
    let (n_h, _) = hidden.unwrap_or((0, v_line));
    if n_v == 0 {
        return Err(Error::Parse {
            line: v_line,
            message: "visible count must be at least 1".into(),
        });
    }
    if terms.is_empty() {
        return Err(Error::Parse {
            line: last_line,
            message: "machine has no terms".into(),
        });
    }
    let n = n_v + n_h;
    let mut seen: HashMap<PauliLabel, usize> = HashMap::new();
    for &(line, t) in &terms {
        if t.n() != n {
            return Err(Error::Parse {
                line,
                message: format!(
                    "term {t} has length {} but visible + hidden = {n}",
                    t.n()
                ),
            });
        }
        if t.is_identity() {
            return Err(Error::Parse {
                line,
                message: "identity term has nonzero trace".into(),
            });
        }
        if let Some(first) = seen.insert(t, line) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate term {t} (first on line {first})"),
            });
        }
    }
    MachineSpec::new(
        name.unwrap_or_default(),
        n_v,
        n_h,
        terms.into_iter().map(|(_, t)| t).collect(),
    )
}

/// Terms split by where they act. Visible and hidden labels are restricted
/// to their own factor; coupling labels keep full length.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Partition {
    pub n_visible: usize,
    pub n_hidden: usize,
    pub visible: Vec<PauliLabel>,
    pub hidden: Vec<PauliLabel>,
    pub coupling: Vec<PauliLabel>,
}

pub fn partition(spec: &MachineSpec) -> Partition {
    let (nv, nh) = (spec.n_visible, spec.n_hidden);
    let mut p = Partition {
        n_visible: nv,
        n_hidden: nh,
        visible: Vec::new(),
        hidden: Vec::new(),
        coupling: Vec::new(),
    };
    for t in &spec.terms {
        let v = t.restrict(0, nv);
        let h = t.restrict(nv, nh);
        match (v.is_identity(), h.is_identity()) {
            (false, true) => p.visible.push(v),
            (true, false) => p.hidden.push(h),
            _ => p.coupling.push(*t),
        }
    }
    p
}

/// An XOR-independent subset `D_a` of a label set `D`, with the unique
/// decomposition of every member of `D` and its phase `c_γ`:
/// `σ_γ = i^{c_γ} Π σ_g` over the decomposition in ascending generator order.
#[derive(Clone, Debug)]
pub struct GeneratorSet {
    n: usize,
    labels: Vec<PauliLabel>,
    generators: Vec<PauliLabel>,
    generator_positions: Vec<usize>,
    decompositions: Vec<u128>,
    phases: Vec<u8>,
    index: HashMap<PauliLabel, usize>,
    echelon: Echelon,
}

/// Greedy Gaussian elimination in input order.
pub fn find_generator(labels: &[PauliLabel]) -> Result<GeneratorSet> {
    let n = labels
        .first()
        .map(|l| l.n())
        .ok_or_else(|| Error::Input("generator set of an empty label set".into()))?;
    find_generator_on(n, labels)
}

/// As [`find_generator`] with an explicit qubit count, so that an empty
/// label set yields an empty generator set.
pub fn find_generator_on(n: usize, labels: &[PauliLabel]) -> Result<GeneratorSet> {
    let mut echelon = Echelon::new();
    let mut generators = Vec::new();
    let mut generator_positions = Vec::new();
    let mut index = HashMap::new();
    for (pos, l) in labels.iter().enumerate() {
        if l.n() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: l.n(),
            });
        }
        if index.insert(*l, pos).is_some() {
            return Err(Error::Input(format!("duplicate label {l}")));
        }
        let tag = 1u128 << generators.len().min(127);
        if echelon.insert(l.to_bits(), tag) {
            generators.push(*l);
            generator_positions.push(pos);
        }
    }
    let mut set = GeneratorSet {
        n,
        labels: labels.to_vec(),
        generators,
        generator_positions,
        decompositions: Vec::with_capacity(labels.len()),
        phases: Vec::with_capacity(labels.len()),
        index,
        echelon,
    };
    for l in labels {
        let mask = set
            .decompose_mask(l)
            .expect("every input label lies in the span of the generators");
        set.decompositions.push(mask);
        set.phases.push(set.phase_of_mask(l, mask));
    }
    Ok(set)
}

impl GeneratorSet {
    pub fn n(&self) -> usize {
        self.n
    }

    /// The label set `D` in input order.
    pub fn labels(&self) -> &[PauliLabel] {
        &self.labels
    }

    pub fn generators(&self) -> &[PauliLabel] {
        &self.generators
    }

    /// Positions of the generators inside [`labels`](Self::labels).
    pub fn generator_positions(&self) -> &[usize] {
        &self.generator_positions
    }

    pub fn position(&self, label: &PauliLabel) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn contains(&self, label: &PauliLabel) -> bool {
        self.index.contains_key(label)
    }

    /// Generator indices whose XOR is the `i`-th label of `D`.
    pub fn decomposition(&self, i: usize) -> Vec<usize> {
        mask_to_indices(self.decompositions[i])
    }

    pub(crate) fn decomposition_mask_at(&self, i: usize) -> u128 {
        self.decompositions[i]
    }

    /// Phase exponent `c_γ` of the `i`-th label of `D`.
    pub fn phase(&self, i: usize) -> u8 {
        self.phases[i]
    }

    /// Generator mask of any label in the span of the generators.
    pub(crate) fn decompose_mask(&self, label: &PauliLabel) -> Option<u128> {
        if label.n() != self.n {
            return None;
        }
        let (residual, mask) = self.echelon.reduce(label.to_bits());
        (residual == 0).then_some(mask)
    }

    /// Generator indices of any label in the span, ascending.
    pub fn decompose(&self, label: &PauliLabel) -> Option<Vec<usize>> {
        self.decompose_mask(label).map(mask_to_indices)
    }

    fn phase_of_mask(&self, label: &PauliLabel, mask: u128) -> u8 {
        let product = mask_to_indices(mask).into_iter().fold(
            PhasedPauli::hermitian(PauliLabel::identity(self.n)),
            |acc, g| mul(&acc, &PhasedPauli::hermitian(self.generators[g])),
        );
        debug_assert_eq!(product.label, *label);
        ((4 - product.phase()) % 4) as u8
    }
}

pub(crate) fn mask_to_indices(mut mask: u128) -> Vec<usize> {
    let mut out = Vec::with_capacity(mask.count_ones() as usize);
    while mask != 0 {
        let i = mask.trailing_zeros() as usize;
        out.push(i);
        mask &= mask - 1;
    }
    out
}

/// `c_γ` for a label in the generated set: `σ_γ = i^{c_γ} Π σ_g` with the
/// product over its decomposition in ascending generator order.
pub fn decomposition_phase(label: &PauliLabel, gen: &GeneratorSet) -> Result<u8> {
    let mask = gen
        .decompose_mask(label)
        .ok_or_else(|| Error::Domain(format!("{label} is not generated by the generator set")))?;
    Ok(gen.phase_of_mask(label, mask))
}
