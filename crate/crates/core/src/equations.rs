//! Polynomial equations on the coefficients `U[γ, γ']` of a symmetry
//! unitary, `U σ_γ U† = Σ_γ' U[γ, γ'] σ_γ'`, with `γ` ranging over the
//! generators and `γ'` over the term labels.
//!
//! Unknown `U[r, c]` (generator `r`, term column `c`) has flat index
//! `r * cols + c`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::machine::GeneratorSet;
use crate::pauli::{label_matrix, PauliLabel};

/// Which family of constraints an equation belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Tag {
    /// Unit norm of a row.
    E45,
    /// Cross terms of `(U σ_g U†)²` vanish.
    E17,
    /// Commutation between generator images is preserved.
    E46,
    /// Products over a decomposition stay inside the term span.
    E16,
}

impl Tag {
    pub const ALL: [Tag; 4] = [Tag::E45, Tag::E17, Tag::E46, Tag::E16];

    pub fn name(&self) -> &'static str {
        match self {
            Tag::E45 => "E45",
            Tag::E17 => "E17",
            Tag::E46 => "E46",
            Tag::E16 => "E16",
        }
    }
}

/// Real or imaginary component of a complex equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Part {
    Re,
    Im,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Equation {
    pub tag: Tag,
    pub part: Part,
    /// Generator row(s) the equation constrains.
    pub rows: Vec<usize>,
    /// Pauli label whose coefficient the equation collects, if any.
    pub target: Option<PauliLabel>,
    pub constant: f64,
    /// `(coefficient, sorted unknown indices)`.
    pub terms: Vec<(f64, Vec<u32>)>,
}

impl Equation {
    pub fn eval(&self, u: &[f64]) -> f64 {
        self.terms.iter().fold(self.constant, |acc, (c, vars)| {
            acc + c * vars.iter().map(|&v| u[v as usize]).product::<f64>()
        })
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(|(_, v)| v.len()).max().unwrap_or(0)
    }
}

#[derive(Clone, Debug)]
pub struct EquationSystem {
    pub rows: usize,
    pub cols: usize,
    /// Column labels `D` (term order).
    pub columns: Vec<PauliLabel>,
    /// Row labels `D_a`.
    pub generators: Vec<PauliLabel>,
    pub equations: Vec<Equation>,
}

/// Flat storage used by the evaluators.
#[derive(Clone, Debug)]
struct Compiled {
    /// Per equation: constant and the range of its terms.
    eq: Vec<(f64, u32, u32)>,
    /// Per term: coefficient and range of its variables.
    terms: Vec<(f64, u32, u32)>,
    vars: Vec<u32>,
}

type Poly = BTreeMap<Vec<u32>, (i64, i64)>;

fn add(poly: &mut Poly, mut vars: Vec<u32>, coef: (i64, i64)) {
    vars.sort_unstable();
    let e = poly.entry(vars).or_insert((0, 0));
    e.0 += coef.0;
    e.1 += coef.1;
}

/// `i^k` as a Gaussian integer.
fn ipow(k: u8) -> (i64, i64) {
    [(1, 0), (0, 1), (-1, 0), (0, -1)][(k % 4) as usize]
}

fn gmul(a: (i64, i64), b: (i64, i64)) -> (i64, i64) {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

/// Splits a Gaussian-integer polynomial into its nonzero real and
/// imaginary equations.
fn split(out: &mut Vec<Equation>, tag: Tag, rows: Vec<usize>, target: Option<PauliLabel>, poly: &Poly) {
    for part in [Part::Re, Part::Im] {
        let terms: Vec<(f64, Vec<u32>)> = poly
            .iter()
            .filter_map(|(vars, &(re, im))| {
                let c = if part == Part::Re { re } else { im };
                (c != 0).then(|| (c as f64, vars.clone()))
            })
            .collect();
        if !terms.is_empty() {
            out.push(Equation {
                tag,
                part,
                rows: rows.clone(),
                target,
                constant: 0.0,
                terms,
            });
        }
    }
}

/// Published equation totals for the bundled machines.
pub fn reference_total(machine: &str) -> Option<usize> {
    match machine {
        "H_I" => Some(81),
        "H_III_n2" => Some(132),
        "H_II_n3" => Some(393),
        "H_III_n3" => Some(1032),
        "H_II_n4" => Some(1298),
        _ => None,
    }
}

/// How equations of each tag are counted here.
pub fn counting_convention(tag: Tag) -> &'static str {
    match tag {
        Tag::E45 => "one real equation per generator row",
        Tag::E17 => "per generator row and XOR target over ordered column pairs p != q; real and imaginary parts counted separately, identically zero parts dropped",
        Tag::E46 => "per unordered generator pair and XOR target over p != q, plus one identity-component equation per pair whose product is not a two-part term; zero parts dropped",
        Tag::E16 => "per non-generator term with a decomposition of size >= 2 and per target label outside the term set (identity included); zero parts dropped",
    }
}

/// Largest decomposition size expanded into product equations.
pub const MAX_DECOMPOSITION: usize = 6;

pub fn generate_equations(terms: &[PauliLabel], gen: &GeneratorSet) -> Result<EquationSystem> {
    if terms != gen.labels() {
        return Err(Error::Precondition(
            "generator set must be derived from the same term list".into(),
        ));
    }
    let d = terms;
    let m = d.len();
    let k = gen.generators().len();
    let idx = |r: usize, c: usize| (r * m + c) as u32;
    let in_d: HashSet<PauliLabel> = d.iter().copied().collect();
    let mut eqs = Vec::new();

    for r in 0..k {
        eqs.push(Equation {
            tag: Tag::E45,
            part: Part::Re,
            rows: vec![r],
            target: None,
            constant: -1.0,
            terms: (0..m).map(|c| (1.0, vec![idx(r, c), idx(r, c)])).collect(),
        });
    }

    // Ordered pairs p ≠ q grouped by p ⊕ q, with phases i^{ω−ν}.
    let mut by_target: BTreeMap<PauliLabel, Vec<(usize, usize, u8)>> = BTreeMap::new();
    for p in 0..m {
        for q in 0..m {
            if p != q {
                by_target
                    .entry(d[p] ^ d[q])
                    .or_default()
                    .push((p, q, d[p].product_phase(&d[q])));
            }
        }
    }

    for r in 0..k {
        for (t, pairs) in &by_target {
            let mut poly = Poly::new();
            for &(p, q, ph) in pairs {
                add(&mut poly, vec![idx(r, p), idx(r, q)], ipow(ph));
            }
            split(&mut eqs, Tag::E17, vec![r], Some(*t), &poly);
        }
    }

    let gens = gen.generators();
    for r in 0..k {
        for s in r + 1..k {
            let sign: i64 = if gens[r].anticommutes(&gens[s]) { -1 } else { 1 };
            for (t, pairs) in &by_target {
                let mut poly = Poly::new();
                for &(p, q, ph) in pairs {
                    let f = ipow(ph);
                    add(&mut poly, vec![idx(r, p), idx(s, q)], f);
                    add(&mut poly, vec![idx(s, p), idx(r, q)], (-sign * f.0, -sign * f.1));
                }
                split(&mut eqs, Tag::E46, vec![r, s], Some(*t), &poly);
            }
        }
    }

    // Identity component of the product of two generator images. The p ≠ q
    // sums above never see it, and without it two images may collapse onto
    // the same column. Pairs whose product is a two-part term are covered
    // by the zero target of the product equations below.
    let covered: HashSet<Vec<usize>> = (0..m)
        .map(|i| gen.decomposition(i))
        .filter(|parts| parts.len() == 2)
        .collect();
    for r in 0..k {
        for s in r + 1..k {
            if covered.contains(&vec![r, s]) {
                continue;
            }
            let mut poly = Poly::new();
            for p in 0..m {
                add(&mut poly, vec![idx(r, p), idx(s, p)], (1, 0));
            }
            split(&mut eqs, Tag::E46, vec![r, s], Some(PauliLabel::identity(d[0].n())), &poly);
        }
    }

    for (i, gamma) in d.iter().enumerate() {
        let parts = gen.decomposition(i);
        if parts.len() < 2 {
            continue;
        }
        if parts.len() > MAX_DECOMPOSITION {
            return Err(Error::Resource {
                what: "decomposition size for product equations",
                size: parts.len(),
                cap: MAX_DECOMPOSITION,
            });
        }
        let c = ipow(gen.phase(i));
        let mut polys: BTreeMap<PauliLabel, Poly> = BTreeMap::new();
        let mut tuple = vec![0usize; parts.len()];
        let mut done = false;
        while !done {
            let (label, phase) = tuple.iter().fold(
                (PauliLabel::identity(gamma.n()), 0u8),
                |(acc, ph), &col| ((acc ^ d[col]), (ph + acc.product_phase(&d[col])) % 4),
            );
            if !in_d.contains(&label) {
                let vars = parts.iter().zip(&tuple).map(|(&r, &col)| idx(r, col)).collect();
                add(polys.entry(label).or_default(), vars, gmul(c, ipow(phase)));
            }
            // Odometer over D^k.
            let mut pos = parts.len();
            loop {
                if pos == 0 {
                    done = true;
                    break;
                }
                pos -= 1;
                tuple[pos] += 1;
                if tuple[pos] < m {
                    break;
                }
                tuple[pos] = 0;
            }
        }
        for (t, poly) in &polys {
            split(&mut eqs, Tag::E16, parts.clone(), Some(*t), poly);
        }
    }

    Ok(EquationSystem {
        rows: k,
        cols: m,
        columns: d.to_vec(),
        generators: gens.to_vec(),
        equations: eqs,
    })
}

impl EquationSystem {
    pub fn unknowns(&self) -> usize {
        self.rows * self.cols
    }

    pub fn len(&self) -> usize {
        self.equations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equations.is_empty()
    }

    pub fn counts(&self) -> BTreeMap<Tag, usize> {
        let mut out: BTreeMap<Tag, usize> = Tag::ALL.iter().map(|&t| (t, 0)).collect();
        for e in &self.equations {
            *out.entry(e.tag).or_default() += 1;
        }
        out
    }

    pub fn residuals(&self, u: &[f64]) -> Vec<f64> {
        self.equations.iter().map(|e| e.eval(u)).collect()
    }

    /// `F(U) = ½ Σ f_i²`.
    pub fn residual(&self, u: &[f64]) -> f64 {
        0.5 * self.residuals(u).iter().map(|f| f * f).sum::<f64>()
    }

    /// Dense Jacobian `∂f_i/∂U_j`.
    pub fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.len(), self.unknowns());
        for (i, e) in self.equations.iter().enumerate() {
            for (c, vars) in &e.terms {
                for (pos, &v) in vars.iter().enumerate() {
                    let rest: f64 = vars
                        .iter()
                        .enumerate()
                        .filter(|&(p, _)| p != pos)
                        .map(|(_, &w)| u[w as usize])
                        .product();
                    j[(i, v as usize)] += c * rest;
                }
            }
        }
        j
    }

    /// Removes the given unknowns (set to zero), renumbering the rest.
    /// Equations that become identically zero are dropped.
    pub fn substitute_zeros(&self, zeros: &[usize]) -> ReducedSystem {
        let zero: HashSet<usize> = zeros.iter().copied().collect();
        let mut map = vec![u32::MAX; self.unknowns()];
        let mut kept = Vec::new();
        for v in 0..self.unknowns() {
            if !zero.contains(&v) {
                map[v] = kept.len() as u32;
                kept.push(v);
            }
        }
        let mut equations = Vec::new();
        for e in &self.equations {
            let terms: Vec<(f64, Vec<u32>)> = e
                .terms
                .iter()
                .filter(|(_, vars)| vars.iter().all(|&v| map[v as usize] != u32::MAX))
                .map(|(c, vars)| (*c, vars.iter().map(|&v| map[v as usize]).collect()))
                .collect();
            if terms.is_empty() && e.constant == 0.0 {
                continue;
            }
            equations.push(Equation {
                terms,
                ..e.clone()
            });
        }
        ReducedSystem {
            full_unknowns: self.unknowns(),
            kept,
            equations,
        }
    }

    /// Structured dump with per-tag counts.
    pub fn to_json(&self) -> serde_json::Value {
        let equations: Vec<serde_json::Value> = self
            .equations
            .iter()
            .map(|e| {
                serde_json::json!({
                    "tag": e.tag,
                    "part": e.part,
                    "rows": e.rows,
                    "target": e.target.map(|t| t.to_string()),
                    "constant": e.constant,
                    "terms": e.terms,
                })
            })
            .collect();
        let counts: BTreeMap<&str, usize> = self.counts().into_iter().map(|(t, n)| (t.name(), n)).collect();
        serde_json::json!({
            "rows": self.rows,
            "cols": self.cols,
            "generators": self.generators.iter().map(|g| g.to_string()).collect::<Vec<_>>(),
            "columns": self.columns.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
            "counts": counts,
            "total": self.len(),
            "equations": equations,
        })
    }

    /// Text dump: one equation per line plus per-tag counts.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.equations {
            let mut parts: Vec<String> = e
                .terms
                .iter()
                .map(|(c, vars)| {
                    let vs: Vec<String> = vars
                        .iter()
                        .map(|&v| format!("U[{},{}]", v as usize / self.cols, v as usize % self.cols))
                        .collect();
                    format!("{c} * {}", vs.join("*"))
                })
                .collect();
            if e.constant != 0.0 {
                parts.push(format!("{}", e.constant));
            }
            let target = e.target.map(|t| format!(" {t}")).unwrap_or_default();
            let part = if e.part == Part::Im { " im" } else { "" };
            out.push_str(&format!("[{}{target}{part}] {} = 0\n", e.tag.name(), parts.join(" + ")));
        }
        for (tag, n) in self.counts() {
            out.push_str(&format!("# {}: {n}\n", tag.name()));
        }
        out.push_str(&format!("# total: {}\n", self.len()));
        out
    }

    fn compile(&self) -> Compiled {
        compile(&self.equations)
    }

    pub fn evaluator(&self) -> Evaluator {
        Evaluator {
            n: self.unknowns(),
            c: self.compile(),
        }
    }
}

/// A system with some unknowns fixed at zero.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    pub full_unknowns: usize,
    /// Original index of each remaining unknown.
    pub kept: Vec<usize>,
    pub equations: Vec<Equation>,
}

impl ReducedSystem {
    pub fn unknowns(&self) -> usize {
        self.kept.len()
    }

    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.full_unknowns];
        for (&k, &v) in self.kept.iter().zip(reduced) {
            full[k] = v;
        }
        full
    }

    pub fn evaluator(&self) -> Evaluator {
        Evaluator {
            n: self.unknowns(),
            c: compile(&self.equations),
        }
    }
}

fn compile(equations: &[Equation]) -> Compiled {
    let mut c = Compiled {
        eq: Vec::with_capacity(equations.len()),
        terms: Vec::new(),
        vars: Vec::new(),
    };
    for e in equations {
        let start = c.terms.len() as u32;
        for (coef, vars) in &e.terms {
            let vs = c.vars.len() as u32;
            c.vars.extend(vars);
            c.terms.push((*coef, vs, vars.len() as u32));
        }
        c.eq.push((e.constant, start, e.terms.len() as u32));
    }
    c
}

/// Fast residual and sparse-Jacobian evaluation.
#[derive(Clone, Debug)]
pub struct Evaluator {
    n: usize,
    c: Compiled,
}

impl Evaluator {
    pub fn unknowns(&self) -> usize {
        self.n
    }

    pub fn equations(&self) -> usize {
        self.c.eq.len()
    }

    pub fn residuals_into(&self, u: &[f64], f: &mut Vec<f64>) {
        f.clear();
        for &(constant, start, len) in &self.c.eq {
            let mut acc = constant;
            for &(coef, vs, vl) in &self.c.terms[start as usize..(start + len) as usize] {
                let mut prod = coef;
                for &v in &self.c.vars[vs as usize..(vs + vl) as usize] {
                    prod *= u[v as usize];
                }
                acc += prod;
            }
            f.push(acc);
        }
    }

    /// `F = ½ Σ f_i²`.
    pub fn objective(&self, u: &[f64]) -> f64 {
        let mut f = Vec::with_capacity(self.equations());
        self.residuals_into(u, &mut f);
        0.5 * f.iter().map(|x| x * x).sum::<f64>()
    }

    /// Calls `row(i, entries)` with the merged sparse gradient of each
    /// equation.
    pub fn for_each_jacobian_row(&self, u: &[f64], mut row: impl FnMut(usize, &[(u32, f64)])) {
        let mut entries: Vec<(u32, f64)> = Vec::new();
        for (i, &(_, start, len)) in self.c.eq.iter().enumerate() {
            entries.clear();
            for &(coef, vs, vl) in &self.c.terms[start as usize..(start + len) as usize] {
                let vars = &self.c.vars[vs as usize..(vs + vl) as usize];
                for pos in 0..vars.len() {
                    let mut prod = coef;
                    for (p, &w) in vars.iter().enumerate() {
                        if p != pos {
                            prod *= u[w as usize];
                        }
                    }
                    entries.push((vars[pos], prod));
                }
            }
            entries.sort_unstable_by_key(|e| e.0);
            let mut merged = 0;
            for j in 0..entries.len() {
                if merged > 0 && entries[merged - 1].0 == entries[j].0 {
                    entries[merged - 1].1 += entries[j].1;
                } else {
                    entries[merged] = entries[j];
                    merged += 1;
                }
            }
            row(i, &entries[..merged]);
        }
    }
}

/// Pairs of unknowns assumed to have a vanishing product: for every row,
/// the two columns of the only pair of term labels reaching their XOR.
/// Only commuting pairs are kept: an anticommuting pair cancels in the
/// row equation, so nothing forces its product to zero.
pub fn unique_xor_zero_constraints(sys: &EquationSystem) -> Vec<(usize, usize)> {
    let d = &sys.columns;
    let m = d.len();
    let mut reach: HashMap<PauliLabel, Vec<(usize, usize)>> = HashMap::new();
    for p in 0..m {
        for q in p + 1..m {
            reach.entry(d[p] ^ d[q]).or_default().push((p, q));
        }
    }
    let mut unique: Vec<(usize, usize)> = reach
        .values()
        .filter(|pairs| pairs.len() == 1 && !d[pairs[0].0].anticommutes(&d[pairs[0].1]))
        .map(|pairs| pairs[0])
        .collect();
    unique.sort_unstable();
    (0..sys.rows)
        .flat_map(|r| unique.iter().map(move |&(p, q)| (r * m + p, r * m + q)))
        .collect()
}

/// `U[r, c] = 2^{-n} Tr(U σ_{g_r} U† σ_{d_c})` for a dense unitary.
pub fn coefficients_from_unitary(u: &DMatrix<Complex64>, sys: &EquationSystem) -> Result<Vec<f64>> {
    let dim = u.nrows() as f64;
    let mut out = Vec::with_capacity(sys.unknowns());
    for g in &sys.generators {
        let conj = u * label_matrix(g)? * u.adjoint();
        for c in &sys.columns {
            let s = label_matrix(c)?;
            out.push(((&conj * s).trace() / dim).re);
        }
    }
    Ok(out)
}

/// Row and column sums of the squared coefficient matrix (columns only
/// when the matrix is square).
pub fn double_stochastic_error(sys: &EquationSystem, u: &[f64]) -> f64 {
    let (k, m) = (sys.rows, sys.cols);
    let mut worst: f64 = 0.0;
    for r in 0..k {
        let s: f64 = (0..m).map(|c| u[r * m + c].powi(2)).sum();
        worst = worst.max((s - 1.0).abs());
    }
    if k == m {
        for c in 0..m {
            let s: f64 = (0..k).map(|r| u[r * m + c].powi(2)).sum();
            worst = worst.max((s - 1.0).abs());
        }
    }
    worst
}

impl fmt::Display for EquationSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}
