//! Per-subsystem analysis and the connect condition on coupling terms.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::continuous::{compute_continuous, satisfies_criterion, ContinuousGenerators};
use crate::discrete::{
    enumerate_discrete_with, pauli_factor_name, realize_unitary, transvection_closure,
    DiscreteGroupReport, ABSORPTION_CAP, DEFAULT_ORDER_CAP,
};
use crate::error::Result;
use crate::graph::build_graph;
use crate::machine::{find_generator_on, partition, GeneratorSet, MachineSpec};
use crate::pauli::PauliLabel;
use crate::symplectic::Symplectic;

/// Symmetry analysis of one subsystem's own terms.
#[derive(Clone, Debug)]
pub struct SubsystemReport {
    pub n: usize,
    pub offset: usize,
    pub terms: Vec<PauliLabel>,
    pub generators: Arc<GeneratorSet>,
    pub continuous: ContinuousGenerators,
    pub discrete: DiscreteGroupReport,
}

pub fn analyze_subsystem(terms: &[PauliLabel], n: usize, offset: usize) -> Result<SubsystemReport> {
    let gen = find_generator_on(n, terms)?;
    let continuous = compute_continuous(terms, n)?;
    let graph = build_graph(terms);
    let discrete =
        enumerate_discrete_with(terms, &gen, &graph, Some(&continuous), offset, DEFAULT_ORDER_CAP)?;
    Ok(SubsystemReport {
        n,
        offset,
        terms: terms.to_vec(),
        generators: Arc::new(gen),
        continuous,
        discrete,
    })
}

impl SubsystemReport {
    /// Image of `label` under element `i`, through the full symplectic
    /// extension when the label lies outside the generated span. The flag
    /// reports whether the extension was needed.
    fn image(&self, i: usize, label: &PauliLabel, cache: &[Option<Symplectic>]) -> (PauliLabel, bool) {
        if label.is_identity() {
            return (*label, false);
        }
        match self.discrete.elements[i].apply(label) {
            Some(img) => (img, false),
            None => {
                let ext = cache[i].as_ref().expect("extension computed for every element");
                (ext.apply(label), true)
            }
        }
    }

    fn extensions(&self) -> Vec<Option<Symplectic>> {
        self.discrete
            .elements
            .iter()
            .map(|e| {
                if self.generators.generators().is_empty() {
                    Some(Symplectic::identity(self.n))
                } else {
                    e.symplectic().ok()
                }
            })
            .collect()
    }

    /// Dense unitary for element `i`.
    pub fn unitary(&self, i: usize) -> Result<DMatrix<Complex64>> {
        if self.generators.generators().is_empty() {
            let dim = 1usize << self.n;
            return Ok(DMatrix::identity(dim, dim));
        }
        realize_unitary(&self.discrete.elements[i])
    }
}

fn group_name(name: &str) -> String {
    if name.contains('×') {
        format!("({name})")
    } else {
        name.to_string()
    }
}

/// One surviving `(visible, hidden)` element pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairElement {
    pub visible: usize,
    pub hidden: Option<usize>,
    pub name: String,
    pub absorbed_by_continuous: bool,
    /// The coupling check used a symplectic extension beyond the generated
    /// span for at least one label; the verdict then depends on that choice.
    pub extension_used: bool,
}

#[derive(Clone, Debug)]
pub struct SymmetryGroupReport {
    pub name: String,
    pub n_visible: usize,
    pub n_hidden: usize,
    pub visible: SubsystemReport,
    pub hidden: Option<SubsystemReport>,
    pub coupling: Vec<PauliLabel>,
    /// Continuous generators surviving the check against all machine terms.
    pub continuous_v: ContinuousGenerators,
    pub continuous_h: ContinuousGenerators,
    pub discrete_pairs: Vec<PairElement>,
    pub pauli_factor_note: String,
    pub notes: Vec<String>,
}

/// Runs the whole analysis for a machine.
pub fn analyze(spec: &MachineSpec) -> Result<SymmetryGroupReport> {
    let p = partition(spec);
    let visible = analyze_subsystem(&p.visible, p.n_visible, 0)?;
    let hidden = if p.n_hidden > 0 {
        Some(analyze_subsystem(&p.hidden, p.n_hidden, p.n_visible)?)
    } else {
        None
    };
    let mut report = assemble(&visible, hidden.as_ref(), &p.coupling, &spec.terms);
    report.name = spec.name.clone();
    Ok(report)
}

/// Combines subsystem reports through the connect condition.
pub fn assemble(
    vis: &SubsystemReport,
    hid: Option<&SubsystemReport>,
    coupling: &[PauliLabel],
    all_terms: &[PauliLabel],
) -> SymmetryGroupReport {
    let n_v = vis.n;
    let n_h = hid.map_or(0, |h| h.n);
    let mut notes = Vec::new();
    let coupling_set: HashSet<PauliLabel> = coupling.iter().copied().collect();
    let all_set: HashSet<PauliLabel> = all_terms.iter().copied().collect();

    let pad_v = |l: &PauliLabel| l.concat(&PauliLabel::identity(n_h)).expect("within qubit cap");
    let pad_h = |l: &PauliLabel| PauliLabel::identity(n_v).concat(l).expect("within qubit cap");
    let filter = |dc: &ContinuousGenerators, pad: &dyn Fn(&PauliLabel) -> PauliLabel| {
        ContinuousGenerators {
            n: dc.n,
            labels: dc
                .labels
                .iter()
                .filter(|l| satisfies_criterion(&pad(l), all_terms, &all_set))
                .copied()
                .collect(),
        }
    };
    let continuous_v = filter(&vis.continuous, &pad_v);
    let continuous_h = match hid {
        Some(h) => filter(&h.continuous, &pad_h),
        None => ContinuousGenerators { n: 0, labels: Vec::new() },
    };
    if continuous_v.labels.len() < vis.continuous.labels.len()
        || hid.is_some_and(|h| continuous_h.labels.len() < h.continuous.labels.len())
    {
        notes.push("some subsystem continuous generators are broken by coupling terms".into());
    }

    let absorbed_in = |sub: &SubsystemReport, dc: &ContinuousGenerators| -> Vec<bool> {
        if dc.labels.is_empty() {
            return sub.discrete.elements.iter().map(|e| e.is_identity()).collect();
        }
        match transvection_closure(&sub.generators, &dc.labels, ABSORPTION_CAP) {
            Some(group) => sub
                .discrete
                .elements
                .iter()
                .map(|e| group.contains(e.images()))
                .collect(),
            None => sub.discrete.elements.iter().map(|e| e.is_identity()).collect(),
        }
    };
    let abs_v = absorbed_in(vis, &continuous_v);

    let mut pairs = Vec::new();
    match hid {
        None => {
            for (i, name) in vis.discrete.names.iter().enumerate() {
                pairs.push(PairElement {
                    visible: i,
                    hidden: None,
                    name: name.clone(),
                    absorbed_by_continuous: abs_v[i],
                    extension_used: false,
                });
            }
        }
        Some(h) => {
            if h.terms.is_empty() {
                notes.push(
                    "hidden subsystem has no local terms; only its identity element is enumerated"
                        .into(),
                );
            }
            let abs_h = absorbed_in(h, &continuous_h);
            let ext_v = vis.extensions();
            let ext_h = h.extensions();
            for i in 0..vis.discrete.order() {
                for j in 0..h.discrete.order() {
                    let mut extension_used = false;
                    let ok = coupling.iter().all(|c| {
                        let (iv, ev) = vis.image(i, &c.restrict(0, n_v), &ext_v);
                        let (ih, eh) = h.image(j, &c.restrict(n_v, n_h), &ext_h);
                        extension_used |= ev || eh;
                        coupling_set.contains(&iv.concat(&ih).expect("within qubit cap"))
                    });
                    if ok {
                        pairs.push(PairElement {
                            visible: i,
                            hidden: Some(j),
                            name: format!(
                                "{} ⊗ {}",
                                group_name(&vis.discrete.names[i]),
                                group_name(&h.discrete.names[j])
                            ),
                            absorbed_by_continuous: abs_v[i] && abs_h[j],
                            extension_used,
                        });
                    }
                }
            }
            if pairs.iter().any(|p| p.extension_used) {
                notes.push(
                    "coupling labels outside the generated span were mapped through a symplectic extension"
                        .into(),
                );
            }
        }
    }

    let pauli_factor_note = match hid {
        Some(h) => format!(
            "× {} ⊗ {}",
            pauli_factor_name(n_v, 0),
            pauli_factor_name(h.n, n_v)
        ),
        None => format!("× {}", pauli_factor_name(n_v, 0)),
    };
    SymmetryGroupReport {
        name: String::new(),
        n_visible: n_v,
        n_hidden: n_h,
        visible: vis.clone(),
        hidden: hid.cloned(),
        coupling: coupling.to_vec(),
        continuous_v,
        continuous_h,
        discrete_pairs: pairs,
        pauli_factor_note,
        notes,
    }
}

impl SymmetryGroupReport {
    pub fn order(&self) -> usize {
        self.discrete_pairs.len()
    }

    pub fn order_mod_continuous(&self) -> usize {
        let k = self
            .discrete_pairs
            .iter()
            .filter(|p| p.absorbed_by_continuous)
            .count()
            .max(1);
        self.order() / k
    }

    pub fn names(&self) -> Vec<&str> {
        self.discrete_pairs.iter().map(|p| p.name.as_str()).collect()
    }

    /// Dense `U_v ⊗ U_h` for pair `k`.
    pub fn pair_unitary(&self, k: usize) -> Result<DMatrix<Complex64>> {
        let p = &self.discrete_pairs[k];
        let uv = self.visible.unitary(p.visible)?;
        match (&self.hidden, p.hidden) {
            (Some(h), Some(j)) => Ok(uv.kronecker(&h.unitary(j)?)),
            _ => Ok(uv),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let labels = |dc: &ContinuousGenerators| -> Vec<String> {
            dc.labels.iter().map(|l| l.to_string()).collect()
        };
        serde_json::json!({
            "name": self.name,
            "n_visible": self.n_visible,
            "n_hidden": self.n_hidden,
            "continuous_visible": labels(&self.continuous_v),
            "continuous_hidden": labels(&self.continuous_h),
            "visible_discrete": self.visible.discrete.to_json(),
            "hidden_discrete": self.hidden.as_ref().map(|h| h.discrete.to_json()),
            "discrete_pairs": self.discrete_pairs,
            "order": self.order(),
            "order_mod_continuous": self.order_mod_continuous(),
            "pauli_factor": self.pauli_factor_note,
            "notes": self.notes,
        })
    }
}

impl fmt::Display for SymmetryGroupReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "machine {} ({} visible, {} hidden qubits)",
            self.name, self.n_visible, self.n_hidden
        )?;
        writeln!(f, "visible {}", self.continuous_v)?;
        if self.hidden.is_some() {
            writeln!(f, "hidden {}", self.continuous_h)?;
        }
        writeln!(f, "visible {}", self.visible.discrete)?;
        if let Some(h) = &self.hidden {
            writeln!(f, "hidden {}", h.discrete)?;
        }
        writeln!(
            f,
            "symmetry group elements: {} (modulo G_c: {}) {}",
            self.order(),
            self.order_mod_continuous(),
            self.pauli_factor_note
        )?;
        for p in &self.discrete_pairs {
            let tag = if p.absorbed_by_continuous && p.name != "I" && p.name != "I ⊗ I" {
                "  [in G_c]"
            } else {
                ""
            };
            writeln!(f, "  {}{tag}", p.name)?;
        }
        for note in &self.notes {
            writeln!(f, "note: {note}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::parse_spec;
    use crate::pauli::label_matrix;

    fn span_residual(m: &DMatrix<Complex64>, basis: &[PauliLabel]) -> f64 {
        let dim = m.nrows() as f64;
        let mut rest = m.clone();
        for b in basis {
            let p = label_matrix(b).unwrap();
            let c = (p.adjoint() * m).trace() / dim;
            rest -= p * Complex64::new(c.re, 0.0);
        }
        rest.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn visible_only_equals_visible_report() {
        let spec = parse_spec("name = H_I\nvisible = 2\nXI\nZI\nIX\nIZ\nZZ\n").unwrap();
        let r = analyze(&spec).unwrap();
        assert_eq!(r.names(), vec!["I", "S_12"]);
        assert_eq!(r.pauli_factor_note, "× P_{1,2}");
        assert!(r.hidden.is_none());
    }

    #[test]
    fn empty_coupling_gives_full_product() {
        let spec = parse_spec("visible = 2\nhidden = 2\nXIII\nZIII\nIXII\nIZII\nZZII\nIIXI\nIIZI\nIIIX\nIIIZ\nIIZZ\n").unwrap();
        let r = analyze(&spec).unwrap();
        assert_eq!(r.order(), 4);
        assert!(r.names().contains(&"S_12 ⊗ S_34"));
    }

    #[test]
    fn coupling_breaks_swap() {
        // ZZ coupling only to the first visible qubit pins it.
        let spec = parse_spec("visible = 2\nhidden = 1\nXII\nZII\nIXI\nIZI\nZZI\nIIX\nIIZ\nZIZ\n").unwrap();
        let r = analyze(&spec).unwrap();
        assert_eq!(r.visible.discrete.order(), 2);
        assert_eq!(r.order(), 1);
        for k in 0..r.order() {
            let u = r.pair_unitary(k).unwrap();
            for t in &spec.terms {
                let m = &u * label_matrix(t).unwrap() * u.adjoint();
                assert!(span_residual(&m, &spec.terms) <= 1e-10);
            }
        }
    }

    #[test]
    fn empty_hidden_terms() {
        let spec = parse_spec("visible = 1\nhidden = 1\nXI\nZI\nZZ\n").unwrap();
        let r = analyze(&spec).unwrap();
        assert_eq!(r.order(), 1);
        assert!(!r.notes.is_empty());
    }
}
