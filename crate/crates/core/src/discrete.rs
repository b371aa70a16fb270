//! Discrete symmetry subgroup modulo Pauli factors, as label maps on a
//! generator set.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::continuous::ContinuousGenerators;
use crate::error::{Error, Result};
use crate::graph::{generator_images, CommGraph};
use crate::machine::{mask_to_indices, GeneratorSet};
use crate::pauli::{label_matrix, mul, PauliLabel, PhasedPauli};
use crate::symplectic::{Namer, Symplectic};

pub const DEFAULT_ORDER_CAP: usize = 1_000_000;
/// Largest transvection group explored when testing absorption into `G_c`.
pub const ABSORPTION_CAP: usize = 100_000;

/// Generator images of a label-level Clifford action.
#[derive(Clone, Debug)]
pub struct CliffordMap {
    source: Arc<GeneratorSet>,
    images: Vec<PauliLabel>,
}

impl PartialEq for CliffordMap {
    fn eq(&self, other: &Self) -> bool {
        self.source.generators() == other.source.generators() && self.images == other.images
    }
}

impl Eq for CliffordMap {}

impl CliffordMap {
    /// Checks independence and adjacency preservation of the images.
    pub fn new(source: Arc<GeneratorSet>, images: Vec<PauliLabel>) -> Result<Self> {
        let gens = source.generators();
        if images.len() != gens.len() {
            return Err(Error::Input(format!(
                "{} images for {} generators",
                images.len(),
                gens.len()
            )));
        }
        for (i, a) in gens.iter().enumerate() {
            for (j, b) in gens.iter().enumerate() {
                if a.anticommutes(b) != images[i].anticommutes(&images[j]) {
                    return Err(Error::Domain(format!(
                        "images of {a} and {b} do not preserve commutation"
                    )));
                }
            }
        }
        let mut ech = crate::f2::Echelon::new();
        if !images.iter().all(|l| ech.insert(l.to_bits(), 0)) {
            return Err(Error::Domain("generator images are dependent".into()));
        }
        Ok(Self { source, images })
    }

    pub fn identity(source: Arc<GeneratorSet>) -> Self {
        let images = source.generators().to_vec();
        Self { source, images }
    }

    pub fn source(&self) -> &GeneratorSet {
        &self.source
    }

    pub fn images(&self) -> &[PauliLabel] {
        &self.images
    }

    pub fn is_identity(&self) -> bool {
        self.images == self.source.generators()
    }

    /// Image of any label in the span of the generators.
    pub fn apply(&self, label: &PauliLabel) -> Option<PauliLabel> {
        let mask = self.source.decompose_mask(label)?;
        Some(self.apply_mask(mask))
    }

    fn apply_mask(&self, mask: u128) -> PauliLabel {
        mask_to_indices(mask)
            .into_iter()
            .fold(PauliLabel::identity(self.source.n()), |acc, g| acc ^ self.images[g])
    }

    /// Image of every label of `D`, in order.
    pub fn induced(&self) -> Vec<PauliLabel> {
        (0..self.source.labels().len())
            .map(|i| self.apply_mask(self.source.decomposition_mask_at(i)))
            .collect()
    }

    /// Extension to a full label-level Clifford action on the subsystem.
    pub fn symplectic(&self) -> Result<Symplectic> {
        Symplectic::extend(self.source.generators(), &self.images)
    }

    /// `true` when the induced image of every `σ_γ`, with its phase `c_γ`,
    /// is Hermitian.
    pub fn sign_consistent(&self) -> bool {
        let n = self.source.n();
        (0..self.source.labels().len()).all(|i| {
            let chain = mask_to_indices(self.source.decomposition_mask_at(i))
                .into_iter()
                .fold(PhasedPauli::hermitian(PauliLabel::identity(n)), |acc, g| {
                    mul(&acc, &PhasedPauli::hermitian(self.images[g]))
                });
            (chain.phase() + self.source.phase(i)) % 2 == 0
        })
    }

    /// One `γ -> γ'` line per generator.
    pub fn to_text(&self) -> String {
        self.source
            .generators()
            .iter()
            .zip(&self.images)
            .map(|(g, m)| format!("{g} -> {m}"))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// `a ∘ b`: `b` acts first.
pub fn compose(a: &CliffordMap, b: &CliffordMap) -> Result<CliffordMap> {
    if a.source.generators() != b.source.generators() {
        return Err(Error::Domain("maps act on different generator sets".into()));
    }
    let images = b
        .images
        .iter()
        .map(|l| {
            a.apply(l).ok_or_else(|| {
                Error::Domain(format!("{l} leaves the span of the generators"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CliffordMap {
        source: a.source.clone(),
        images,
    })
}

/// A unitary with `U σ_g U† = ± σ_{m(g)}` for every generator `g`.
pub fn realize_unitary(m: &CliffordMap) -> Result<DMatrix<Complex64>> {
    let u = m.symplectic()?.unitary()?;
    for (g, img) in m.source.generators().iter().zip(&m.images) {
        if conjugation_sign(&u, g, img).is_none() {
            return Err(Error::NotRealizable(format!("conjugation of {g} does not give ±{img}")));
        }
    }
    Ok(u)
}

/// `s` with `U σ_from U† = s σ_to`, if it is ±1.
pub fn conjugation_sign(u: &DMatrix<Complex64>, from: &PauliLabel, to: &PauliLabel) -> Option<i8> {
    let a = u * label_matrix(from).ok()? * u.adjoint();
    let b = label_matrix(to).ok()?;
    [1i8, -1].into_iter().find(|&s| {
        a.iter()
            .zip(b.iter())
            .all(|(x, y)| (x - y * f64::from(s)).norm() < 1e-9)
    })
}

/// The discrete subgroup of one subsystem, modulo its Pauli group.
#[derive(Clone, Debug)]
pub struct DiscreteGroupReport {
    pub n: usize,
    /// Qubit numbering offset used in names (hidden qubits follow visible).
    pub offset: usize,
    pub elements: Vec<CliffordMap>,
    /// Adjacency-preserving generator maps before the generation-rule filter.
    pub candidates: usize,
    pub names: Vec<String>,
    /// Elements whose label action lies in the continuous subgroup.
    pub absorbed: Vec<bool>,
    /// `false` when the transvection group exceeded its cap.
    pub absorption_checked: bool,
    pub factor_note: String,
}

impl DiscreteGroupReport {
    pub fn order(&self) -> usize {
        self.elements.len()
    }

    /// Number of classes modulo the elements absorbed by `G_c`.
    pub fn order_mod_continuous(&self) -> usize {
        let k = self.absorbed.iter().filter(|&&a| a).count().max(1);
        self.order() / k
    }

    pub fn index_of(&self, images: &[PauliLabel]) -> Option<usize> {
        self.elements.iter().position(|e| e.images == images)
    }

    /// Representatives of the classes modulo absorbed elements: the first
    /// element of each coset `g K` in list order.
    pub fn class_representatives(&self) -> Vec<usize> {
        let kernel: Vec<&CliffordMap> = self
            .elements
            .iter()
            .zip(&self.absorbed)
            .filter_map(|(e, &a)| a.then_some(e))
            .collect();
        let mut covered = vec![false; self.order()];
        let mut reps = Vec::new();
        for i in 0..self.order() {
            if covered[i] {
                continue;
            }
            reps.push(i);
            covered[i] = true;
            for k in &kernel {
                if let Ok(c) = compose(&self.elements[i], k) {
                    if let Some(j) = self.index_of(&c.images) {
                        covered[j] = true;
                    }
                }
            }
        }
        reps
    }

    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Element<'a> {
            name: &'a str,
            absorbed_by_continuous: bool,
            images: Vec<String>,
        }
        let elements: Vec<Element> = self
            .elements
            .iter()
            .zip(&self.names)
            .zip(&self.absorbed)
            .map(|((e, name), &absorbed)| Element {
                name,
                absorbed_by_continuous: absorbed,
                images: e
                    .source
                    .generators()
                    .iter()
                    .zip(&e.images)
                    .map(|(g, m)| format!("{g} -> {m}"))
                    .collect(),
            })
            .collect();
        serde_json::json!({
            "order": self.order(),
            "order_mod_continuous": self.order_mod_continuous(),
            "candidates": self.candidates,
            "absorption_checked": self.absorption_checked,
            "factor_note": self.factor_note,
            "elements": elements,
        })
    }
}

impl fmt::Display for DiscreteGroupReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "discrete elements: {} (modulo G_c: {})",
            self.order(),
            self.order_mod_continuous()
        )?;
        for ((e, name), &absorbed) in self.elements.iter().zip(&self.names).zip(&self.absorbed) {
            let tag = if absorbed && !e.is_identity() { "  [in G_c]" } else { "" };
            writeln!(f, "  {name}: {}{tag}", e.to_text())?;
        }
        write!(f, "{}", self.factor_note)
    }
}

/// Label groups of the Pauli factor, e.g. `P_{1,2}`.
pub fn pauli_factor_name(n: usize, offset: usize) -> String {
    let qubits: Vec<String> = (offset + 1..=offset + n).map(|q| q.to_string()).collect();
    format!("P_{{{}}}", qubits.join(","))
}

pub fn enumerate_discrete(
    terms: &[PauliLabel],
    gen: &GeneratorSet,
    graph: &CommGraph,
) -> Result<DiscreteGroupReport> {
    enumerate_discrete_with(terms, gen, graph, None, 0, DEFAULT_ORDER_CAP)
}

/// As [`enumerate_discrete`], also naming elements with qubits numbered from
/// `offset + 1` and marking those absorbed by `continuous`.
pub fn enumerate_discrete_with(
    terms: &[PauliLabel],
    gen: &GeneratorSet,
    graph: &CommGraph,
    continuous: Option<&ContinuousGenerators>,
    offset: usize,
    cap: usize,
) -> Result<DiscreteGroupReport> {
    if terms != gen.labels() || graph.vertices() != terms {
        return Err(Error::Precondition(
            "generator set and graph must be built from the same term list".into(),
        ));
    }
    let n = gen.n();
    let source = Arc::new(gen.clone());
    let lookup: HashSet<PauliLabel> = terms.iter().copied().collect();
    let raw = generator_images(graph, gen);
    let candidates = raw.len();
    if candidates > cap {
        return Err(Error::Resource {
            what: "discrete group candidates",
            size: candidates,
            cap,
        });
    }
    let non_generators: Vec<u128> = (0..terms.len())
        .filter(|i| !gen.generator_positions().contains(i))
        .map(|i| gen.decomposition_mask_at(i))
        .collect();
    let mut elements = Vec::new();
    for assignment in raw {
        let map = CliffordMap {
            source: source.clone(),
            images: assignment.iter().map(|&v| graph.vertices()[v]).collect(),
        };
        if non_generators
            .iter()
            .all(|&mask| lookup.contains(&map.apply_mask(mask)))
        {
            elements.push(map);
        }
    }
    verify_group(&elements)?;

    let namer = Namer::new(n, offset, gen.generators());
    let names = elements.iter().map(|e| namer.name(&e.images)).collect();
    let (absorbed, absorption_checked) = match continuous {
        Some(dc) if !dc.is_trivial() => match transvection_closure(gen, &dc.labels, ABSORPTION_CAP) {
            Some(group) => (
                elements.iter().map(|e| group.contains(&e.images)).collect(),
                true,
            ),
            None => (elements.iter().map(|e| e.is_identity()).collect(), false),
        },
        _ => (elements.iter().map(|e| e.is_identity()).collect(), true),
    };
    Ok(DiscreteGroupReport {
        n,
        offset,
        elements,
        candidates,
        names,
        absorbed,
        absorption_checked,
        factor_note: format!("full discrete subgroup = listed elements × {}", pauli_factor_name(n, offset)),
    })
}

/// Closure, identity, and inverses at label level.
fn verify_group(elements: &[CliffordMap]) -> Result<()> {
    let index: HashMap<&[PauliLabel], usize> = elements
        .iter()
        .enumerate()
        .map(|(i, e)| (e.images.as_slice(), i))
        .collect();
    if !elements.iter().any(|e| e.is_identity()) {
        return Err(Error::Domain("identity missing from discrete group".into()));
    }
    for a in elements {
        let mut has_inverse = false;
        for b in elements {
            let c = compose(a, b)?;
            if !index.contains_key(c.images.as_slice()) {
                return Err(Error::Domain(format!(
                    "group not closed: ({}) ∘ ({})",
                    a.to_text(),
                    b.to_text()
                )));
            }
            has_inverse |= c.is_identity();
        }
        if !has_inverse {
            return Err(Error::Domain(format!("no inverse for {}", a.to_text())));
        }
    }
    Ok(())
}

/// Generator-image tuples reachable by the label actions of
/// `exp(iπ/4 σ_γ)`, `γ ∈ D_c`: `g ↦ g ⊕ γ` when `g` and `γ` anticommute.
pub(crate) fn transvection_closure(
    gen: &GeneratorSet,
    continuous: &[PauliLabel],
    cap: usize,
) -> Option<HashSet<Vec<PauliLabel>>> {
    let start = gen.generators().to_vec();
    let mut seen = HashSet::from([start.clone()]);
    let mut queue = VecDeque::from([start]);
    while let Some(cur) = queue.pop_front() {
        for t in continuous {
            let next: Vec<PauliLabel> = cur
                .iter()
                .map(|g| if g.anticommutes(t) { *g ^ *t } else { *g })
                .collect();
            if seen.insert(next.clone()) {
                if seen.len() > cap {
                    return None;
                }
                queue.push_back(next);
            }
        }
    }
    Some(seen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuous::compute_continuous;
    use crate::graph::build_graph;
    use crate::machine::find_generator;

    fn labels(s: &str) -> Vec<PauliLabel> {
        s.split_whitespace().map(|t| t.parse().unwrap()).collect()
    }

    fn report(d: &[PauliLabel]) -> DiscreteGroupReport {
        let gen = find_generator(d).unwrap();
        let dc = compute_continuous(d, gen.n()).unwrap();
        enumerate_discrete_with(d, &gen, &build_graph(d), Some(&dc), 0, DEFAULT_ORDER_CAP).unwrap()
    }

    /// exp(iθσ) for a Pauli σ.
    fn rotation(label: &PauliLabel, theta: f64) -> DMatrix<Complex64> {
        let dim = 1 << label.n();
        DMatrix::identity(dim, dim) * Complex64::new(theta.cos(), 0.0)
            + label_matrix(label).unwrap() * Complex64::new(0.0, theta.sin())
    }

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
    fn h1_has_identity_and_swap() {
        let d = labels("XI ZI IX IZ ZZ");
        let r = report(&d);
        assert_eq!(r.candidates, 8);
        assert_eq!(r.order(), 2);
        assert_eq!(r.names, vec!["I", "S_12"]);
        assert_eq!(r.elements[1].images(), &labels("IX IZ XI ZI")[..]);
        assert_eq!(r.factor_note, "full discrete subgroup = listed elements × P_{1,2}");
        let u = realize_unitary(&r.elements[1]).unwrap();
        let mut swap = DMatrix::<Complex64>::zeros(4, 4);
        for (a, b) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
            swap[(a, b)] = Complex64::new(1.0, 0.0);
        }
        assert!((u - swap).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn h2_n3_is_the_permutation_group() {
        let d = labels("XII ZII IXI IZI IIX IIZ ZZI ZIZ IZZ");
        let r = report(&d);
        assert_eq!(r.candidates, 48);
        assert_eq!(r.order(), 6);
        let mut names = r.names.clone();
        names.sort();
        assert_eq!(names, vec!["I", "S_132", "S_213", "S_231", "S_312", "S_321"]);
    }

    #[test]
    fn h3_n2_has_eight_elements_with_hadamards_absorbed() {
        let d = labels("XI ZI IX IZ ZZ XX XZ ZX");
        let r = report(&d);
        assert_eq!(r.order(), 8);
        let mut names = r.names.clone();
        names.sort();
        let mut expected = vec![
            "I", "S_12", "H_1", "H_2", "H_1H_2", "S_12 × H_1", "S_12 × H_2", "S_12 × H_1H_2",
        ];
        expected.sort();
        assert_eq!(names, expected);
        for (name, &a) in r.names.iter().zip(&r.absorbed) {
            assert_eq!(a, !name.contains('S'), "{name}");
        }
        assert_eq!(r.order_mod_continuous(), 2);
        assert_eq!(r.class_representatives().len(), 2);
    }

    #[test]
    fn quarter_turn_realizes_transvection() {
        // exp(iπ/4 σ_y) sends X to Z and Z to -X on one qubit.
        let y = PauliLabel::single(1, 0, 'Y').unwrap();
        let u = rotation(&y, std::f64::consts::FRAC_PI_4);
        let (x, z) = (PauliLabel::single(1, 0, 'X').unwrap(), PauliLabel::single(1, 0, 'Z').unwrap());
        assert_eq!(conjugation_sign(&u, &x, &z), Some(1));
        assert_eq!(conjugation_sign(&u, &z, &x), Some(-1));
    }

    #[test]
    fn composition_laws() {
        let d = labels("XI ZI IX IZ ZZ XX XZ ZX");
        let r = report(&d);
        let id = CliffordMap::identity(Arc::new(r.elements[0].source().clone()));
        for a in &r.elements {
            assert_eq!(&compose(&id, a).unwrap(), a);
            for b in &r.elements {
                let c = compose(a, b).unwrap();
                assert!(r.index_of(c.images()).is_some());
                // Label-level composition agrees with composing the realized unitaries.
                let u = realize_unitary(a).unwrap() * realize_unitary(b).unwrap();
                for (g, img) in c.source().generators().iter().zip(c.images()) {
                    assert!(conjugation_sign(&u, g, img).is_some());
                }
            }
        }
        let h1 = report(&labels("XI ZI IX IZ ZZ"));
        let swap = &h1.elements[1];
        assert!(compose(swap, swap).unwrap().is_identity());
        let h2 = report(&labels("XII ZII IXI IZI IIX IIZ ZZI ZIZ IZZ"));
        assert!(compose(swap, &h2.elements[0]).is_err());
    }

    #[test]
    fn realized_elements_keep_the_term_span() {
        for d in [
            labels("XI ZI IX IZ ZZ"),
            labels("XI ZI IX IZ ZZ XX XZ ZX"),
            labels("XII ZII IXI IZI IIX IIZ ZZI ZIZ IZZ"),
            labels("XI ZI IX IZ ZZ XX"),
        ] {
            let r = report(&d);
            for e in &r.elements {
                assert!(e.sign_consistent());
                let u = realize_unitary(e).unwrap();
                for t in &d {
                    let m = &u * label_matrix(t).unwrap() * u.adjoint();
                    assert!(span_residual(&m, &d) <= 1e-10);
                }
                for (t, img) in d.iter().zip(e.induced()) {
                    assert!(conjugation_sign(&u, t, &img).is_some());
                }
            }
        }
    }

    #[test]
    fn absorbed_elements_match_quarter_turn_products() {
        // Every element flagged as absorbed is reproduced, up to sign, by a
        // product of exp(iπ/4 σ_γ) over γ ∈ D_c.
        let d = labels("XI ZI IX IZ ZZ XX XZ ZX");
        let r = report(&d);
        let dc = compute_continuous(&d, 2).unwrap();
        let mut products = vec![DMatrix::<Complex64>::identity(4, 4)];
        for g in &dc.labels {
            let q = rotation(g, std::f64::consts::FRAC_PI_4);
            let more: Vec<_> = products.iter().map(|p| &q * p).collect();
            products.extend(more);
        }
        for (e, &a) in r.elements.iter().zip(&r.absorbed) {
            let hit = products.iter().any(|u| {
                e.source()
                    .generators()
                    .iter()
                    .zip(e.images())
                    .all(|(g, img)| conjugation_sign(u, g, img).is_some())
            });
            assert_eq!(hit, a);
        }
    }

    #[test]
    fn h4_visible_group() {
        let d = labels("XI ZI IX IZ ZZ XX");
        let r = report(&d);
        assert_eq!(r.order(), 12);
        assert!(r.names.iter().all(|n| n != "Clifford (unnamed)"), "{:?}", r.names);
        assert!(r.names.contains(&"C_12".to_string()));
        assert!(r.names.contains(&"H_1H_2".to_string()));
    }
}
