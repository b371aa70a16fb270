//! Label-level Clifford actions: linear maps on `(α | β)` bit vectors that
//! preserve the commutation form, elementary gates, and names for the
//! common ones.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::f2::{self, Echelon};
use crate::pauli::{apply_to_vector, PauliLabel, PhasedPauli};
use nalgebra::DMatrix;

/// Commutation form on packed `(α | β)` vectors of `n` qubits.
#[inline]
pub(crate) fn form(n: usize, a: u128, b: u128) -> bool {
    let mask = (1u128 << n) - 1;
    let swapped = ((b & mask) << n) | (b >> n);
    f2::dot(a, swapped)
}

/// Image of each basis vector `X_1 … X_n, Z_1 … Z_n` (packed bit `j`).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Symplectic {
    n: usize,
    cols: Vec<u128>,
}

impl Symplectic {
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            cols: (0..2 * n).map(|j| 1u128 << j).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn apply_bits(&self, mut v: u128) -> u128 {
        let mut out = 0;
        while v != 0 {
            let j = v.trailing_zeros() as usize;
            out ^= self.cols[j];
            v &= v - 1;
        }
        out
    }

    pub fn apply(&self, label: &PauliLabel) -> PauliLabel {
        PauliLabel::from_bits(self.n, self.apply_bits(label.to_bits()))
    }

    /// `self ∘ other`: `other` acts first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            n: self.n,
            cols: other.cols.iter().map(|&c| self.apply_bits(c)).collect(),
        }
    }

    pub fn is_symplectic(&self) -> bool {
        (0..2 * self.n).all(|i| {
            (0..2 * self.n).all(|j| {
                form(self.n, self.cols[i], self.cols[j]) == form(self.n, 1 << i, 1 << j)
            })
        })
    }

    /// Labels `P_i` (image of `X_i`) and `Q_i` (image of `Z_i`).
    pub fn images(&self) -> (Vec<PauliLabel>, Vec<PauliLabel>) {
        let p = (0..self.n)
            .map(|i| PauliLabel::from_bits(self.n, self.cols[i]))
            .collect();
        let q = (0..self.n)
            .map(|i| PauliLabel::from_bits(self.n, self.cols[self.n + i]))
            .collect();
        (p, q)
    }

    /// Extends an adjacency-preserving map on independent `sources` to a
    /// full symplectic map.
    pub fn extend(sources: &[PauliLabel], images: &[PauliLabel]) -> Result<Self> {
        let n = sources
            .first()
            .map(|s| s.n())
            .ok_or_else(|| Error::Input("empty source set".into()))?;
        if sources.len() != images.len() {
            return Err(Error::Input("sources and images differ in length".into()));
        }
        let mut s: Vec<u128> = sources.iter().map(|l| l.to_bits()).collect();
        let mut t: Vec<u128> = images.iter().map(|l| l.to_bits()).collect();
        for i in 0..s.len() {
            for j in 0..s.len() {
                if form(n, s[i], s[j]) != form(n, t[i], t[j]) {
                    return Err(Error::NotRealizable(format!(
                        "commutation between {} and {} is not preserved",
                        sources[i], sources[j]
                    )));
                }
            }
        }
        let mut src = Echelon::new();
        let mut dst = Echelon::new();
        for (i, (&a, &b)) in s.iter().zip(&t).enumerate() {
            if !src.insert(a, 1u128 << i) || !dst.insert(b, 0) {
                return Err(Error::NotRealizable("sources or images are dependent".into()));
            }
        }
        let swap = |v: u128| {
            let mask = (1u128 << n) - 1;
            ((v & mask) << n) | (v >> n)
        };
        for j in 0..2 * n {
            if s.len() == 2 * n {
                break;
            }
            let v = 1u128 << j;
            if src.reduce(v).0 == 0 {
                continue;
            }
            let rows: Vec<u128> = t.iter().map(|&x| swap(x)).collect();
            let rhs: Vec<bool> = s.iter().map(|&x| form(n, v, x)).collect();
            let w0 = f2::solve(&rows, &rhs, 2 * n)
                .ok_or_else(|| Error::NotRealizable("inconsistent extension".into()))?;
            let w = if dst.reduce(w0).0 != 0 {
                w0
            } else {
                f2::nullspace(&rows, 2 * n)
                    .into_iter()
                    .map(|k| w0 ^ k)
                    .find(|&cand| dst.reduce(cand).0 != 0)
                    .ok_or_else(|| Error::NotRealizable("no independent extension".into()))?
            };
            src.insert(v, 1u128 << s.len());
            dst.insert(w, 0);
            s.push(v);
            t.push(w);
        }
        let cols = (0..2 * n)
            .map(|j| {
                let (_, mask) = src.reduce(1u128 << j);
                crate::machine::mask_to_indices(mask)
                    .into_iter()
                    .fold(0u128, |acc, i| acc ^ t[i])
            })
            .collect();
        let m = Self { n, cols };
        debug_assert!(m.is_symplectic());
        Ok(m)
    }

    /// A unitary `U` with `U X_i U† = σ_{P_i}` and `U Z_i U† = σ_{Q_i}`.
    pub fn unitary(&self) -> Result<DMatrix<Complex64>> {
        let n = self.n;
        if n > crate::pauli::DEFAULT_DENSE_CAP {
            return Err(Error::Resource {
                what: "qubits for dense unitary",
                size: n,
                cap: crate::pauli::DEFAULT_DENSE_CAP,
            });
        }
        if !self.is_symplectic() {
            return Err(Error::NotRealizable("map does not preserve commutation".into()));
        }
        let dim = 1usize << n;
        let (p, q) = self.images();
        let project = |mut v: Vec<Complex64>| {
            for qi in &q {
                let w = apply_to_vector(&PhasedPauli::hermitian(*qi), &v);
                for (a, b) in v.iter_mut().zip(w) {
                    *a = (*a + b) * 0.5;
                }
            }
            v
        };
        let psi0 = (0..dim)
            .map(|j| {
                let mut e = vec![Complex64::new(0.0, 0.0); dim];
                e[j] = Complex64::new(1.0, 0.0);
                project(e)
            })
            .find(|v| v.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-6)
            .expect("a stabilizer state has nonzero overlap with some basis state");
        let norm = psi0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let psi0: Vec<Complex64> = psi0.into_iter().map(|z| z / norm).collect();
        let mut u = DMatrix::zeros(dim, dim);
        for x in 0..dim {
            let mut v = psi0.clone();
            // Apply P_n first so the column reads P_1^{x_1} … P_n^{x_n} ψ0.
            for i in (0..n).rev() {
                if x >> (n - 1 - i) & 1 == 1 {
                    v = apply_to_vector(&PhasedPauli::hermitian(p[i]), &v);
                }
            }
            for (r, z) in v.into_iter().enumerate() {
                u[(r, x)] = z;
            }
        }
        Ok(u)
    }
}

/// Elementary Clifford gates, qubits 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Gate {
    Hadamard(usize),
    Phase(usize),
    Swap(usize, usize),
    Cnot(usize, usize),
}

impl Gate {
    pub fn action(&self, n: usize) -> Symplectic {
        let mut m = Symplectic::identity(n);
        let x = |q: usize| 1u128 << q;
        let z = |q: usize| 1u128 << (n + q);
        match *self {
            Gate::Hadamard(q) => {
                m.cols[q] = z(q);
                m.cols[n + q] = x(q);
            }
            Gate::Phase(q) => m.cols[q] = x(q) | z(q),
            Gate::Swap(a, b) => {
                m.cols.swap(a, b);
                m.cols.swap(n + a, n + b);
            }
            Gate::Cnot(c, t) => {
                m.cols[c] = x(c) | x(t);
                m.cols[n + t] = z(c) | z(t);
            }
        }
        m
    }
}

/// Qubit permutation sending qubit `i` to qubit `perm[i]`.
pub fn permutation(perm: &[usize]) -> Symplectic {
    let n = perm.len();
    let mut m = Symplectic::identity(n);
    for (i, &to) in perm.iter().enumerate() {
        m.cols[i] = 1u128 << to;
        m.cols[n + i] = 1u128 << (n + to);
    }
    m
}

/// Hadamards on every qubit in `mask` (bit `i` = qubit `i`).
pub fn hadamards(n: usize, mask: u64) -> Symplectic {
    (0..n)
        .filter(|q| mask >> q & 1 == 1)
        .fold(Symplectic::identity(n), |acc, q| {
            Gate::Hadamard(q).action(n).compose(&acc)
        })
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Name of a qubit permutation; qubits are numbered from `offset + 1`.
/// Two-qubit subsystems use transposition notation (`S_12`); larger ones
/// use one-line notation (`S_132`).
pub fn permutation_name(perm: &[usize], offset: usize) -> Option<String> {
    if perm.iter().enumerate().all(|(i, &p)| i == p) {
        return None;
    }
    if perm.len() <= 2 {
        return Some(format!("S_{}{}", offset + 1, offset + 2));
    }
    let digits: String = perm.iter().map(|&p| (offset + p + 1).to_string()).collect();
    Some(format!("S_{digits}"))
}

pub fn hadamard_name(mask: u64, offset: usize) -> Option<String> {
    if mask == 0 {
        return None;
    }
    let parts: String = (0..64)
        .filter(|q| mask >> q & 1 == 1)
        .map(|q| format!("H_{}", offset + q + 1))
        .collect();
    Some(parts)
}

/// Operator-product name, rightmost factor applied first.
fn join(parts: &[String]) -> String {
    if parts.is_empty() {
        "I".to_string()
    } else {
        parts.join(" × ")
    }
}

/// Names label maps on a subsystem by matching their action on `probe`
/// labels against products of qubit permutations and Hadamards, then
/// against short words in swaps, Hadamards, and CNOTs.
pub struct Namer {
    n: usize,
    offset: usize,
    probe: Vec<PauliLabel>,
    table: HashMap<Vec<PauliLabel>, String>,
}

/// Bound on label maps explored by the word search.
const WORD_SEARCH_CAP: usize = 50_000;
const PATTERN_QUBIT_CAP: usize = 6;

impl Namer {
    pub fn new(n: usize, offset: usize, probe: &[PauliLabel]) -> Self {
        let mut namer = Self {
            n,
            offset,
            probe: probe.to_vec(),
            table: HashMap::new(),
        };
        let mut patterns: Vec<(usize, String, Symplectic)> = Vec::new();
        let perms = if n <= PATTERN_QUBIT_CAP { permutations(n) } else { Vec::new() };
        for (pi, perm) in perms.into_iter().enumerate() {
            for mask in 0..(1u64 << n) {
                let s = permutation_name(&perm, offset);
                let h = hadamard_name(mask, offset);
                let cost = s.is_some() as usize + h.is_some() as usize;
                let name = join(&[s, h].into_iter().flatten().collect::<Vec<_>>());
                let map = permutation(&perm).compose(&hadamards(n, mask));
                patterns.push((cost * 1_000_000 + mask.count_ones() as usize * 1000 + pi, name, map));
            }
        }
        patterns.sort_by_key(|p| p.0);
        for (_, name, map) in patterns {
            let key = namer.key(&map);
            namer.table.entry(key).or_insert(name);
        }
        namer.word_search();
        namer
    }

    fn key(&self, map: &Symplectic) -> Vec<PauliLabel> {
        self.probe.iter().map(|l| map.apply(l)).collect()
    }

    fn word_search(&mut self) {
        let n = self.n;
        let mut gates: Vec<(String, Symplectic)> = Vec::new();
        for q in 0..n {
            gates.push((format!("H_{}", self.offset + q + 1), Gate::Hadamard(q).action(n)));
        }
        for a in 0..n {
            for b in 0..n {
                if a < b {
                    gates.push((
                        format!("S_{}{}", self.offset + a + 1, self.offset + b + 1),
                        Gate::Swap(a, b).action(n),
                    ));
                }
                if a != b {
                    gates.push((
                        format!("C_{}{}", self.offset + a + 1, self.offset + b + 1),
                        Gate::Cnot(a, b).action(n),
                    ));
                }
            }
        }
        let mut seen: HashMap<Symplectic, ()> = HashMap::new();
        let mut queue: VecDeque<(Symplectic, Vec<usize>)> = VecDeque::new();
        let id = Symplectic::identity(n);
        seen.insert(id.clone(), ());
        queue.push_back((id, Vec::new()));
        while let Some((map, word)) = queue.pop_front() {
            if seen.len() > WORD_SEARCH_CAP {
                break;
            }
            for (gi, (_, g)) in gates.iter().enumerate() {
                // New gate applied after the word: leftmost in the product.
                let next = g.compose(&map);
                if seen.contains_key(&next) {
                    continue;
                }
                seen.insert(next.clone(), ());
                let mut w = vec![gi];
                w.extend(&word);
                let key = self.key(&next);
                if !self.table.contains_key(&key) {
                    let name = self.word_name(&w, &gates);
                    self.table.insert(key, name);
                }
                queue.push_back((next, w));
            }
        }
    }

    fn word_name(&self, word: &[usize], gates: &[(String, Symplectic)]) -> String {
        // Hadamards come first in the gate list, so a run of them sorts by qubit.
        let mut runs: Vec<Vec<usize>> = Vec::new();
        for &g in word {
            match runs.last_mut() {
                Some(last) if g < self.n && last[0] < self.n => last.push(g),
                _ => runs.push(vec![g]),
            }
        }
        let parts: Vec<String> = runs
            .into_iter()
            .map(|mut run| {
                run.sort_unstable();
                run.iter().map(|&g| gates[g].0.as_str()).collect()
            })
            .collect();
        join(&parts)
    }

    /// Name of the map sending `probe[i]` to `images[i]`.
    pub fn name(&self, images: &[PauliLabel]) -> String {
        self.table
            .get(images)
            .cloned()
            .unwrap_or_else(|| "Clifford (unnamed)".to_string())
    }
}

impl fmt::Display for Symplectic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (p, q) = self.images();
        let parts: Vec<String> = (0..self.n)
            .map(|i| {
                let x = PauliLabel::single(self.n, i, 'X').expect("qubit in range");
                let z = PauliLabel::single(self.n, i, 'Z').expect("qubit in range");
                format!("{x}->{} {z}->{}", p[i], q[i])
            })
            .collect();
        write!(f, "{}", parts.join(" "))
    }
}
