//! n-qubit Pauli operators in the bit-pair labeling.
//!
//! A [`PauliLabel`] stores an `(α, β)` bit pair per qubit as two machine words.
//! Qubit `j` (1-based, the `j`-th letter from the left in string form) lives in
//! bit `j - 1` of each word. The operator of a label is the tensor product of
//! `σ_{αβ} = i^{αβ} σ_x^α σ_z^β`, so `(0,0) = I`, `(1,0) = X`, `(0,1) = Z` and
//! `(1,1) = Y`. Multiplication of labels is XOR up to the phase
//! `i^{ω(g,h) - ν(g,h)}`.

use std::fmt;
use std::ops::BitXor;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest qubit count a label can hold.
pub const MAX_QUBITS: usize = 64;

/// Default cap on the qubit count of dense matrix realizations (4096 × 4096).
pub const DEFAULT_DENSE_CAP: usize = 12;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliLabel {
    n: u8,
    alpha: u64,
    beta: u64,
}

fn word_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

impl PauliLabel {
    pub fn identity(n: usize) -> Self {
        assert!(n <= MAX_QUBITS, "at most {MAX_QUBITS} qubits");
        Self {
            n: n as u8,
            alpha: 0,
            beta: 0,
        }
    }

    /// Builds a label from its α-word and β-word.
    pub fn new(n: usize, alpha: u64, beta: u64) -> Result<Self> {
        if n > MAX_QUBITS {
            return Err(Error::Resource {
                what: "qubits per label",
                size: n,
                cap: MAX_QUBITS,
            });
        }
        let mask = word_mask(n);
        if alpha & !mask != 0 || beta & !mask != 0 {
            return Err(Error::Input(format!(
                "label words have bits beyond qubit {n}"
            )));
        }
        Ok(Self {
            n: n as u8,
            alpha,
            beta,
        })
    }

    pub fn from_pairs(pairs: &[(u8, u8)]) -> Result<Self> {
        let mut alpha = 0u64;
        let mut beta = 0u64;
        for (j, &(a, b)) in pairs.iter().enumerate() {
            if a > 1 || b > 1 {
                return Err(Error::Input(format!(
                    "label entry ({a},{b}) is not a bit pair"
                )));
            }
            alpha |= (a as u64) << j;
            beta |= (b as u64) << j;
        }
        Self::new(pairs.len(), alpha, beta)
    }

    /// Single-qubit Pauli `letter` on 0-based qubit `q`, identity elsewhere.
    pub fn single(n: usize, q: usize, letter: char) -> Result<Self> {
        if q >= n {
            return Err(Error::Input(format!("qubit {q} out of range for {n}")));
        }
        let (a, b) = letter_bits(letter)
            .ok_or_else(|| Error::Input(format!("unknown Pauli letter {letter:?}")))?;
        Self::new(n, (a as u64) << q, (b as u64) << q)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n as usize
    }

    #[inline]
    pub fn alpha(&self) -> u64 {
        self.alpha
    }

    #[inline]
    pub fn beta(&self) -> u64 {
        self.beta
    }

    #[inline]
    pub fn is_identity(&self) -> bool {
        self.alpha == 0 && self.beta == 0
    }

    /// Number of qubits on which the label is not the identity.
    pub fn weight(&self) -> u32 {
        (self.alpha | self.beta).count_ones()
    }

    pub fn pairs(&self) -> Vec<(u8, u8)> {
        (0..self.n())
            .map(|j| (((self.alpha >> j) & 1) as u8, ((self.beta >> j) & 1) as u8))
            .collect()
    }

    /// Letter of 0-based qubit `q`.
    pub fn letter(&self, q: usize) -> char {
        match ((self.alpha >> q) & 1, (self.beta >> q) & 1) {
            (0, 0) => 'I',
            (1, 0) => 'X',
            (1, 1) => 'Y',
            _ => 'Z',
        }
    }

    /// Group operation on labels (operator product up to phase).
    #[inline]
    pub fn xor(self, other: Self) -> Self {
        debug_assert_eq!(self.n, other.n);
        Self {
            n: self.n,
            alpha: self.alpha ^ other.alpha,
            beta: self.beta ^ other.beta,
        }
    }

    /// `true` when the two operators anticommute (ν odd).
    #[inline]
    pub fn anticommutes(&self, other: &Self) -> bool {
        ((self.alpha & other.beta).count_ones() + (other.alpha & self.beta).count_ones()) & 1 == 1
    }

    #[inline]
    pub(crate) fn nu_raw(&self, other: &Self) -> i64 {
        (self.alpha & other.beta).count_ones() as i64
            - (other.alpha & self.beta).count_ones() as i64
    }

    #[inline]
    pub(crate) fn omega_raw(&self, other: &Self) -> i64 {
        // Per qubit: (α+α')(β+β') - (α⊕α')(β⊕β'), expanded into popcounts.
        let (a, b, c, d) = (self.alpha, self.beta, other.alpha, other.beta);
        ((a & b).count_ones()
            + (a & d).count_ones()
            + (c & b).count_ones()
            + (c & d).count_ones()) as i64
            - ((a ^ c) & (b ^ d)).count_ones() as i64
    }

    /// Phase exponent `k` with `σ_self σ_other = i^k σ_{self ⊕ other}`.
    #[inline]
    pub(crate) fn product_phase(&self, other: &Self) -> u8 {
        (self.omega_raw(other) - self.nu_raw(other)).rem_euclid(4) as u8
    }

    /// Sub-label on qubits `start .. start + len` (0-based).
    pub fn restrict(&self, start: usize, len: usize) -> Self {
        assert!(start + len <= self.n());
        let mask = word_mask(len);
        Self {
            n: len as u8,
            alpha: (self.alpha >> start) & mask,
            beta: (self.beta >> start) & mask,
        }
    }

    /// Tensor product `self ⊗ other`; `other`'s qubits follow `self`'s.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        let n = self.n() + other.n();
        if n > MAX_QUBITS {
            return Err(Error::Resource {
                what: "qubits per label",
                size: n,
                cap: MAX_QUBITS,
            });
        }
        let shift = |w: u64| if other.n == 0 { 0 } else { w << self.n };
        Ok(Self {
            n: n as u8,
            alpha: self.alpha | shift(other.alpha),
            beta: self.beta | shift(other.beta),
        })
    }

    /// Packs the label into a `2n`-bit vector: α in bits `0..n`, β in `n..2n`.
    #[inline]
    pub fn to_bits(&self) -> u128 {
        self.alpha as u128 | ((self.beta as u128) << self.n)
    }

    #[inline]
    pub fn from_bits(n: usize, bits: u128) -> Self {
        let mask = word_mask(n);
        Self {
            n: n as u8,
            alpha: (bits as u64) & mask,
            beta: ((bits >> n) as u64) & mask,
        }
    }

    /// Iterates all `4^n` labels on `n` qubits in `(α, β)` lexicographic order.
    pub fn all(n: usize) -> impl Iterator<Item = PauliLabel> {
        assert!(n < 32, "exhaustive label iteration is limited to 31 qubits");
        let count = 1u64 << n;
        (0..count).flat_map(move |a| {
            (0..count).map(move |b| PauliLabel {
                n: n as u8,
                alpha: a,
                beta: b,
            })
        })
    }
}

impl BitXor for PauliLabel {
    type Output = PauliLabel;

    fn bitxor(self, rhs: Self) -> Self {
        self.xor(rhs)
    }
}

fn letter_bits(c: char) -> Option<(u8, u8)> {
    match c {
        'I' => Some((0, 0)),
        'X' => Some((1, 0)),
        'Y' => Some((1, 1)),
        'Z' => Some((0, 1)),
        _ => None,
    }
}

impl fmt::Display for PauliLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in 0..self.n() {
            write!(f, "{}", self.letter(q))?;
        }
        Ok(())
    }
}

impl fmt::Debug for PauliLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PauliLabel({self})")
    }
}

impl FromStr for PauliLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.len() > MAX_QUBITS {
            return Err(Error::Resource {
                what: "qubits per label",
                size: s.len(),
                cap: MAX_QUBITS,
            });
        }
        let mut alpha = 0u64;
        let mut beta = 0u64;
        for (j, c) in s.chars().enumerate() {
            let (a, b) = letter_bits(c)
                .ok_or_else(|| Error::Input(format!("invalid Pauli letter {c:?} in {s:?}")))?;
            alpha |= (a as u64) << j;
            beta |= (b as u64) << j;
        }
        Self::new(s.chars().count(), alpha, beta)
    }
}

impl Serialize for PauliLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PauliLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A Pauli operator with an explicit phase: `i^{phase} σ_label`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct PhasedPauli {
    pub label: PauliLabel,
    phase: u8,
}

impl PhasedPauli {
    pub fn new(label: PauliLabel, phase: i64) -> Self {
        Self {
            label,
            phase: phase.rem_euclid(4) as u8,
        }
    }

    pub fn hermitian(label: PauliLabel) -> Self {
        Self { label, phase: 0 }
    }

    /// Phase exponent in `0..4`.
    #[inline]
    pub fn phase(&self) -> u8 {
        self.phase
    }

    /// Hermitian iff the prefactor `i^phase` is real.
    pub fn is_hermitian(&self) -> bool {
        self.phase % 2 == 0
    }
}

impl fmt::Display for PhasedPauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = ["", "+i", "-", "-i"][self.phase as usize];
        write!(f, "{prefix}{}", self.label)
    }
}

impl FromStr for PhasedPauli {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (phase, rest) = if let Some(r) = s.strip_prefix("+i") {
            (1, r)
        } else if let Some(r) = s.strip_prefix("-i") {
            (3, r)
        } else if let Some(r) = s.strip_prefix('i') {
            (1, r)
        } else if let Some(r) = s.strip_prefix('+') {
            (0, r)
        } else if let Some(r) = s.strip_prefix('-') {
            (2, r)
        } else {
            (0, s)
        };
        Ok(Self::new(rest.parse()?, phase))
    }
}

fn check_len(g: &PauliLabel, h: &PauliLabel) -> Result<()> {
    if g.n != h.n {
        return Err(Error::LengthMismatch {
            left: g.n(),
            right: h.n(),
        });
    }
    Ok(())
}

/// `ν(g, h) = Σ_i (α_i β'_i − α'_i β_i)`, antisymmetric.
pub fn nu(g: &PauliLabel, h: &PauliLabel) -> Result<i64> {
    check_len(g, h)?;
    Ok(g.nu_raw(h))
}

/// `ω(g, h) = Σ_i [(α_i+α'_i)(β_i+β'_i) − (α_i⊕α'_i)(β_i⊕β'_i)]`, symmetric.
///
/// Returned unreduced; a `Y·Y` qubit contributes 4.
pub fn omega(g: &PauliLabel, h: &PauliLabel) -> Result<i64> {
    check_len(g, h)?;
    Ok(g.omega_raw(h))
}

pub fn commutes(g: &PauliLabel, h: &PauliLabel) -> Result<bool> {
    check_len(g, h)?;
    Ok(!g.anticommutes(h))
}

/// Operator product of two phased Paulis.
pub fn multiply(a: &PhasedPauli, b: &PhasedPauli) -> Result<PhasedPauli> {
    check_len(&a.label, &b.label)?;
    Ok(mul(a, b))
}

#[inline]
pub(crate) fn mul(a: &PhasedPauli, b: &PhasedPauli) -> PhasedPauli {
    let phase = a.phase as i64 + b.phase as i64 + a.label.omega_raw(&b.label)
        - a.label.nu_raw(&b.label);
    PhasedPauli::new(a.label.xor(b.label), phase)
}

/// `i^k` as a complex number.
pub fn i_pow(k: i64) -> Complex64 {
    match k.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Maps a per-qubit word onto basis-index bits (qubit 1 is the most significant bit).
#[inline]
fn index_mask(word: u64, n: usize) -> usize {
    if n == 0 {
        0
    } else {
        (word.reverse_bits() >> (64 - n)) as usize
    }
}

/// Applies `i^phase σ_label` to a state vector in the computational basis.
pub fn apply_to_vector(p: &PhasedPauli, psi: &[Complex64]) -> Vec<Complex64> {
    let n = p.label.n();
    assert_eq!(psi.len(), 1usize << n);
    let flip = index_mask(p.label.alpha, n);
    let zmask = index_mask(p.label.beta, n);
    let base = i_pow(p.phase as i64 + (p.label.alpha & p.label.beta).count_ones() as i64);
    let mut out = vec![Complex64::new(0.0, 0.0); psi.len()];
    for (x, amp) in psi.iter().enumerate() {
        let sign = if (zmask & x).count_ones() & 1 == 1 { -1.0 } else { 1.0 };
        out[x ^ flip] = base * amp * sign;
    }
    out
}

/// Dense `2^n × 2^n` matrix of `i^phase σ_label` with the default cap.
pub fn to_dense(a: &PhasedPauli) -> Result<DMatrix<Complex64>> {
    to_dense_capped(a, DEFAULT_DENSE_CAP)
}

pub fn to_dense_capped(a: &PhasedPauli, cap: usize) -> Result<DMatrix<Complex64>> {
    let n = a.label.n();
    if n > cap {
        return Err(Error::Resource {
            what: "qubits for dense matrix",
            size: n,
            cap,
        });
    }
    let dim = 1usize << n;
    let flip = index_mask(a.label.alpha, n);
    let zmask = index_mask(a.label.beta, n);
    let base = i_pow(a.phase as i64 + (a.label.alpha & a.label.beta).count_ones() as i64);
    let mut m = DMatrix::zeros(dim, dim);
    for x in 0..dim {
        let sign = if (zmask & x).count_ones() & 1 == 1 { -1.0 } else { 1.0 };
        m[(x ^ flip, x)] = base * sign;
    }
    Ok(m)
}

/// Dense Hermitian Pauli matrix for a label (phase 0).
pub fn label_matrix(label: &PauliLabel) -> Result<DMatrix<Complex64>> {
    to_dense(&PhasedPauli::hermitian(*label))
}
