//! Dense density-matrix checks: Gibbs states of a machine, reduced visible
//! states, relative entropy, its minimization over the machine parameters,
//! and the two consequences of a symmetry (equal optimal values for
//! transformed targets, degenerate optimal parameters).

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::machine::MachineSpec;
use crate::optim::{bfgs, nelder_mead, Minimum};
use crate::pauli::{label_matrix, DEFAULT_DENSE_CAP};

/// Tolerance for the density-matrix invariants.
pub const STATE_TOL: f64 = 1e-12;
/// Eigenvalues of the second argument below this count as outside its support.
const SUPPORT_FLOOR: f64 = 1e-12;
/// Weight of the first argument tolerated outside that support.
const SUPPORT_WEIGHT: f64 = 1e-10;

/// Hermitian, unit-trace, positive semidefinite matrix of dimension `2^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    mat: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn new(mat: DMatrix<Complex64>) -> Result<Self> {
        Self::validated(mat, STATE_TOL)
    }

    fn validated(mat: DMatrix<Complex64>, tol: f64) -> Result<Self> {
        let dim = mat.nrows();
        if dim == 0 || mat.ncols() != dim || !dim.is_power_of_two() {
            return Err(Error::Domain(format!(
                "density matrix must be square with power-of-two dimension, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let asym = max_abs(&(&mat - mat.adjoint()));
        if asym > tol {
            return Err(Error::Domain(format!("matrix is not Hermitian (asymmetry {asym:.3e})")));
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::Domain(format!("trace is {tr}, expected 1")));
        }
        let min = hermitian_eigen(&mat).0.min();
        if min < -tol {
            return Err(Error::Domain(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(DensityMatrix { mat })
    }

    /// Accepts a matrix within `tol` of a density matrix, then symmetrizes
    /// it and rescales the trace to one.
    pub fn from_approximate(mat: DMatrix<Complex64>, tol: f64) -> Result<Self> {
        let checked = Self::validated(mat, tol)?;
        let herm = (&checked.mat + checked.mat.adjoint()) * Complex64::new(0.5, 0.0);
        let tr = herm.trace().re;
        Self::new(herm / Complex64::new(tr, 0.0))
    }

    pub fn maximally_mixed(n: usize) -> Self {
        let dim = 1usize << n;
        DensityMatrix {
            mat: DMatrix::identity(dim, dim) / Complex64::new(dim as f64, 0.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    pub fn purity(&self) -> f64 {
        (&self.mat * &self.mat).trace().re
    }

    /// `U ρ U†`.
    pub fn conjugate(&self, u: &DMatrix<Complex64>) -> Result<Self> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return Err(Error::LengthMismatch {
                left: u.nrows(),
                right: self.dim(),
            });
        }
        let m = u * &self.mat * u.adjoint();
        Ok(DensityMatrix {
            mat: (&m + m.adjoint()) * Complex64::new(0.5, 0.0),
        })
    }

    pub fn distance(&self, other: &DensityMatrix) -> f64 {
        max_abs(&(&self.mat - &other.mat))
    }
}

impl fmt::Display for DensityMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.dim())?;
        for r in 0..self.dim() {
            let row: Vec<String> = (0..self.dim())
                .map(|c| {
                    let z = self.mat[(r, c)];
                    format!("{:.17e}{:+.17e}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

fn parse_complex(tok: &str) -> Option<Complex64> {
    let t = tok.trim();
    let Some(body) = t.strip_suffix('i') else {
        return t.parse::<f64>().ok().map(|re| Complex64::new(re, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (body[..k].parse::<f64>().ok()?, &body[k..]),
        None => (0.0, body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        s => s.parse::<f64>().ok()?,
    };
    Some(Complex64::new(re, im))
}

/// Parses a target state: a dimension line, then one line per row of
/// whitespace-separated entries written `re+im i` (plain reals allowed).
/// `#` starts a comment. Entries within `1e-8` of a density matrix are
/// accepted and renormalized.
pub fn parse_density_matrix(text: &str) -> Result<DensityMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (first, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "missing dimension line".into(),
    })?;
    let dim: usize = header.parse().map_err(|_| Error::Parse {
        line: first,
        message: format!("invalid dimension {header:?}"),
    })?;
    if dim == 0 || !dim.is_power_of_two() || dim > 1 << DEFAULT_DENSE_CAP {
        return Err(Error::Parse {
            line: first,
            message: format!("dimension {dim} is not a power of two within the dense cap"),
        });
    }
    let mut mat = DMatrix::<Complex64>::zeros(dim, dim);
    let mut rows = 0;
    for (line, l) in lines {
        if rows == dim {
            return Err(Error::Parse {
                line,
                message: "more rows than the dimension".into(),
            });
        }
        let entries: Vec<&str> = l.split_whitespace().collect();
        if entries.len() != dim {
            return Err(Error::Parse {
                line,
                message: format!("expected {dim} entries, found {}", entries.len()),
            });
        }
        for (c, tok) in entries.iter().enumerate() {
            mat[(rows, c)] = parse_complex(tok).ok_or_else(|| Error::Parse {
                line,
                message: format!("invalid complex entry {tok:?}"),
            })?;
        }
        rows += 1;
    }
    if rows != dim {
        return Err(Error::Parse {
            line: text.lines().count(),
            message: format!("expected {dim} rows, found {rows}"),
        });
    }
    DensityMatrix::from_approximate(mat, 1e-8)
}

/// Largest entry modulus.
pub fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Eigenvalues and eigenvectors of a Hermitian matrix.
fn hermitian_eigen(m: &DMatrix<Complex64>) -> (DVector<f64>, DMatrix<Complex64>) {
    let eig = m.clone().symmetric_eigen();
    (eig.eigenvalues, eig.eigenvectors)
}

fn check_dense(n: usize) -> Result<()> {
    if n > DEFAULT_DENSE_CAP {
        return Err(Error::Resource {
            what: "qubits for dense matrices",
            size: n,
            cap: DEFAULT_DENSE_CAP,
        });
    }
    Ok(())
}

fn check_parameters(spec: &MachineSpec, a: &[f64]) -> Result<()> {
    if a.len() != spec.terms.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: spec.terms.len(),
        });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input("parameters must be finite".into()));
    }
    Ok(())
}

/// Dense term matrices of a machine, in term order.
pub fn term_matrices(spec: &MachineSpec) -> Result<Vec<DMatrix<Complex64>>> {
    check_dense(spec.n())?;
    spec.terms.iter().map(label_matrix).collect()
}

/// `a · O`.
pub fn hamiltonian(spec: &MachineSpec, a: &[f64]) -> Result<DMatrix<Complex64>> {
    check_parameters(spec, a)?;
    Ok(weighted_sum(&term_matrices(spec)?, a))
}

fn weighted_sum(terms: &[DMatrix<Complex64>], a: &[f64]) -> DMatrix<Complex64> {
    let dim = terms.first().map_or(1, |t| t.nrows());
    let mut h = DMatrix::<Complex64>::zeros(dim, dim);
    for (t, &x) in terms.iter().zip(a) {
        h += t * Complex64::new(x, 0.0);
    }
    h
}

/// `exp(H) / Tr exp(H)` and `ln Tr exp(H)` for Hermitian `H`.
fn gibbs(h: &DMatrix<Complex64>) -> (DMatrix<Complex64>, f64) {
    let (vals, vecs) = hermitian_eigen(h);
    let top = vals.max();
    let w: Vec<f64> = vals.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = w.iter().sum();
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        w.len(),
        w.iter().map(|x| Complex64::new(x / z, 0.0)),
    ));
    let rho = &vecs * d * vecs.adjoint();
    (rho, top + z.ln())
}

/// Gibbs state `exp(a·O) / Tr exp(a·O)` of the whole machine.
pub fn boltzmann_state(spec: &MachineSpec, a: &[f64]) -> Result<DensityMatrix> {
    let h = hamiltonian(spec, a)?;
    let (rho, _) = gibbs(&h);
    Ok(DensityMatrix {
        mat: (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0),
    })
}

/// Partial trace over the last `n_h` qubits.
pub fn reduce_visible(rho: &DensityMatrix, n_v: usize, n_h: usize) -> Result<DensityMatrix> {
    if rho.dim() != 1usize << (n_v + n_h) {
        return Err(Error::Domain(format!(
            "state of dimension {} does not have {} qubits",
            rho.dim(),
            n_v + n_h
        )));
    }
    if n_h == 0 {
        return Ok(rho.clone());
    }
    let (dv, dh) = (1usize << n_v, 1usize << n_h);
    let mut out = DMatrix::<Complex64>::zeros(dv, dv);
    for i in 0..dv {
        for j in 0..dv {
            out[(i, j)] = (0..dh).map(|k| rho.mat[(i * dh + k, j * dh + k)]).sum();
        }
    }
    Ok(DensityMatrix { mat: out })
}

/// `Tr s ln s` with `0 ln 0 = 0`.
fn neg_entropy(s: &DensityMatrix) -> f64 {
    hermitian_eigen(&s.mat)
        .0
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| l * l.ln())
        .sum()
}

/// `S(s‖t) = Tr s (ln s − ln t)`. Fails with `InfiniteDivergence` when `s`
/// has weight outside the support of `t`.
pub fn relative_entropy(s: &DensityMatrix, t: &DensityMatrix) -> Result<f64> {
    if s.dim() != t.dim() {
        return Err(Error::LengthMismatch {
            left: s.dim(),
            right: t.dim(),
        });
    }
    let (mu, v) = hermitian_eigen(&t.mat);
    let mut cross = 0.0;
    for j in 0..mu.len() {
        let vj = v.column(j);
        let w = (vj.adjoint() * &s.mat * vj)[(0, 0)].re;
        if mu[j] < SUPPORT_FLOOR {
            if w > SUPPORT_WEIGHT {
                return Err(Error::InfiniteDivergence);
            }
            continue;
        }
        cross += w * mu[j].max(1e-300).ln();
    }
    Ok((neg_entropy(s) - cross).max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptConfig {
    /// Gradient max-norm stop for the exact-gradient path.
    pub gradient_tol: f64,
    pub max_iterations: usize,
    /// Box `‖a‖∞ ≤ cap`.
    pub parameter_cap: f64,
    /// Starts for the derivative-free path (the first is `a = 0`).
    pub starts: usize,
    pub seed: u64,
    pub simplex_tol: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            gradient_tol: 1e-9,
            max_iterations: 5000,
            parameter_cap: 30.0,
            starts: 8,
            seed: 0,
            simplex_tol: 1e-15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Optimum {
    pub a: Vec<f64>,
    /// `S_m = S(target ‖ Tr_h σ(a))`.
    pub value: f64,
    /// Some parameter sits on the `‖a‖∞` cap; the infimum may lie beyond.
    pub boundary: bool,
    pub converged: bool,
    pub iterations: usize,
}

/// Objective `S(target ‖ Tr_h σ(a))` of a machine.
pub struct Objective<'a> {
    spec: &'a MachineSpec,
    target: &'a DensityMatrix,
    terms: Vec<DMatrix<Complex64>>,
    target_expectations: Vec<f64>,
    target_neg_entropy: f64,
}

impl<'a> Objective<'a> {
    pub fn new(spec: &'a MachineSpec, target: &'a DensityMatrix) -> Result<Self> {
        if target.dim() != 1usize << spec.n_visible {
            return Err(Error::Domain(format!(
                "target has dimension {}, machine has {} visible qubits",
                target.dim(),
                spec.n_visible
            )));
        }
        let terms = term_matrices(spec)?;
        let target_expectations = if spec.n_hidden == 0 {
            terms.iter().map(|o| (&target.mat * o).trace().re).collect()
        } else {
            Vec::new()
        };
        Ok(Objective {
            spec,
            target,
            terms,
            target_expectations,
            target_neg_entropy: neg_entropy(target),
        })
    }

    /// Reduced Gibbs state for `a`.
    pub fn model_state(&self, a: &[f64]) -> DensityMatrix {
        let (rho, _) = gibbs(&weighted_sum(&self.terms, a));
        let full = DensityMatrix {
            mat: (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0),
        };
        reduce_visible(&full, self.spec.n_visible, self.spec.n_hidden).expect("dimensions match the spec")
    }

    /// Generic evaluation through the relative entropy.
    pub fn value(&self, a: &[f64]) -> Result<f64> {
        relative_entropy(self.target, &self.model_state(a))
    }

    /// Closed form `Tr t ln t − a·⟨O⟩_t + ln Z(a)` (visible-only machines)
    /// and its gradient `⟨O⟩_σ − ⟨O⟩_t`.
    fn visible_value_grad(&self, a: &[f64]) -> (f64, Vec<f64>) {
        let (rho, ln_z) = gibbs(&weighted_sum(&self.terms, a));
        let dot: f64 = a.iter().zip(&self.target_expectations).map(|(x, e)| x * e).sum();
        let grad = self
            .terms
            .iter()
            .zip(&self.target_expectations)
            .map(|(o, e)| (&rho * o).trace().re - e)
            .collect();
        (self.target_neg_entropy - dot + ln_z, grad)
    }

    /// Gradient of the objective (visible-only machines).
    pub fn gradient(&self, a: &[f64]) -> Result<Vec<f64>> {
        if self.spec.n_hidden != 0 {
            return Err(Error::Precondition("closed-form gradient needs a machine without hidden qubits".into()));
        }
        Ok(self.visible_value_grad(a).1)
    }
}

/// Minimizes `S(target ‖ Tr_h σ(a))` over `a` in the box `‖a‖∞ ≤ cap`.
pub fn minimize_sm(spec: &MachineSpec, target: &DensityMatrix, cfg: &OptConfig) -> Result<Optimum> {
    let obj = Objective::new(spec, target)?;
    let m = spec.terms.len();
    let cap = cfg.parameter_cap;
    let clamp = |a: &mut [f64]| a.iter_mut().for_each(|x| *x = x.clamp(-cap, cap));
    let at_cap = |a: &[f64]| a.iter().any(|x| x.abs() >= cap - 1e-9);
    if spec.n_hidden == 0 {
        // A rank-deficient target is only approached as ‖a‖ → ∞, so the
        // descent runs on to the cap instead of stopping at a small gradient.
        let rank_deficient = hermitian_eigen(&target.mat).0.min() < SUPPORT_FLOOR;
        let found = bfgs(
            |a| obj.visible_value_grad(a).0,
            |a| obj.visible_value_grad(a).1,
            clamp,
            &vec![0.0; m],
            if rank_deficient { 0.0 } else { cfg.gradient_tol },
            cfg.max_iterations,
        );
        let mut a = found.x;
        let norm = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if rank_deficient && norm > 0.0 && !at_cap(&a) {
            // Round-off stalls the descent long before the cap; follow the
            // same ray out to it when that is no worse.
            let scaled: Vec<f64> = a.iter().map(|x| x * cap / norm).collect();
            if obj.visible_value_grad(&scaled).0 <= obj.visible_value_grad(&a).0 + 1e-12 {
                a = scaled;
            }
        }
        let value = obj.visible_value_grad(&a).0.max(0.0);
        return Ok(Optimum {
            boundary: at_cap(&a),
            a,
            value,
            converged: found.converged,
            iterations: found.iterations,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let starts: Vec<Vec<f64>> = (0..cfg.starts.max(1))
        .map(|s| {
            if s == 0 {
                vec![0.0; m]
            } else {
                (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()
            }
        })
        .collect();
    let boxed = |a: &[f64]| {
        let mut b = a.to_vec();
        clamp(&mut b);
        obj.value(&b).unwrap_or(f64::INFINITY)
    };
    let results: Vec<_> = starts
        .par_iter()
        .map(|s| {
            // Restart the simplex from its best point until it stops moving.
            let mut best = nelder_mead(boxed, s, 0.5, cfg.simplex_tol, cfg.max_iterations);
            for _ in 0..4 {
                let again = nelder_mead(boxed, &best.x, 0.05, cfg.simplex_tol, cfg.max_iterations);
                let done = best.value - again.value <= 1e-14;
                best = Minimum {
                    iterations: best.iterations + again.iterations,
                    ..again
                };
                if done {
                    break;
                }
            }
            best
        })
        .collect();
    let best = results
        .into_iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("at least one start");
    let mut a = best.x;
    clamp(&mut a);
    Ok(Optimum {
        boundary: at_cap(&a),
        value: obj.value(&a)?,
        a,
        converged: best.converged,
        iterations: best.iterations,
    })
}

/// Coefficients of a Hermitian matrix on the machine terms
/// (`2^{-n} Tr(H σ_γ)`) and the max-entry residual of the projection.
pub fn term_coefficients(spec: &MachineSpec, h: &DMatrix<Complex64>) -> Result<(Vec<f64>, f64)> {
    let terms = term_matrices(spec)?;
    let dim = 1usize << spec.n();
    if h.nrows() != dim || h.ncols() != dim {
        return Err(Error::LengthMismatch {
            left: h.nrows(),
            right: dim,
        });
    }
    let coef: Vec<f64> = terms.iter().map(|o| (h * o).trace().re / dim as f64).collect();
    let residual = max_abs(&(h - weighted_sum(&terms, &coef)));
    Ok((coef, residual))
}

/// Parameters `a′` with `H(a′) = U H(a) U†`, and the projection residual.
pub fn transformed_parameters(spec: &MachineSpec, a: &[f64], u: &DMatrix<Complex64>) -> Result<(Vec<f64>, f64)> {
    let h = hamiltonian(spec, a)?;
    let u = lift(spec, u)?;
    term_coefficients(spec, &(&u * h * u.adjoint()))
}

/// Extends a visible-only unitary by the identity on the hidden qubits.
fn lift(spec: &MachineSpec, u: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let full = 1usize << spec.n();
    let vis = 1usize << spec.n_visible;
    if u.nrows() == full && u.ncols() == full {
        return Ok(u.clone());
    }
    if u.nrows() == vis && u.ncols() == vis {
        let dh = 1usize << spec.n_hidden;
        return Ok(u.kronecker(&DMatrix::identity(dh, dh)));
    }
    Err(Error::LengthMismatch {
        left: u.nrows(),
        right: full,
    })
}

fn check_unitary(u: &DMatrix<Complex64>) -> Result<()> {
    let dim = u.nrows();
    if u.ncols() != dim {
        return Err(Error::Domain("unitary must be square".into()));
    }
    let err = max_abs(&(u.adjoint() * u - DMatrix::<Complex64>::identity(dim, dim)));
    if err > 1e-9 {
        return Err(Error::Domain(format!("matrix is not unitary (error {err:.3e})")));
    }
    Ok(())
}

/// Tolerance on optimal-value differences.
pub const VALUE_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub original: Optimum,
    pub transformed: Optimum,
    pub difference: f64,
    pub passed: bool,
}

/// Optimizes the machine against `target` and against `U_v target U_v†`
/// independently and compares the optimal values.
pub fn check_target_equivalence(
    spec: &MachineSpec,
    target: &DensityMatrix,
    u_v: &DMatrix<Complex64>,
    cfg: &OptConfig,
) -> Result<EquivalenceReport> {
    check_unitary(u_v)?;
    let moved = target.conjugate(u_v)?;
    let original = minimize_sm(spec, target, cfg)?;
    let transformed = minimize_sm(spec, &moved, cfg)?;
    let difference = (original.value - transformed.value).abs();
    Ok(EquivalenceReport {
        passed: difference <= VALUE_TOL,
        original,
        transformed,
        difference,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegeneracyReport {
    pub a_star: Vec<f64>,
    pub a_prime: Vec<f64>,
    pub value: f64,
    pub value_prime: f64,
    pub difference: f64,
    /// Max-entry residual of `U H(a*) U†` outside the term span.
    pub span_residual: f64,
    pub passed: bool,
}

/// Checks that `a*′` from conjugating `H(a*)` by `U_v ⊗ U_h` is an equally
/// good fit to a target fixed by `U_v`.
pub fn check_solution_degeneracy(
    spec: &MachineSpec,
    target: &DensityMatrix,
    a_star: &[f64],
    u_v: &DMatrix<Complex64>,
    u_h: Option<&DMatrix<Complex64>>,
) -> Result<DegeneracyReport> {
    check_parameters(spec, a_star)?;
    check_unitary(u_v)?;
    let moved = target.conjugate(u_v)?;
    let drift = moved.distance(target);
    if drift > 1e-8 {
        return Err(Error::Precondition(format!(
            "the element does not fix the target (max entry change {drift:.3e})"
        )));
    }
    let u = match u_h {
        Some(h) => {
            check_unitary(h)?;
            u_v.kronecker(h)
        }
        None => u_v.clone(),
    };
    let (a_prime, span_residual) = transformed_parameters(spec, a_star, &u)?;
    let obj = Objective::new(spec, target)?;
    let value = obj.value(a_star)?;
    let value_prime = obj.value(&a_prime)?;
    let difference = (value - value_prime).abs();
    Ok(DegeneracyReport {
        passed: difference <= VALUE_TOL && span_residual <= 1e-10,
        a_star: a_star.to_vec(),
        a_prime,
        value,
        value_prime,
        difference,
        span_residual,
    })
}

/// Random full-rank density matrix `A A† / Tr` with Gaussian-like entries,
/// mixed with the maximally mixed state by `floor` to bound the spectrum
/// away from zero.
pub fn random_state(n: usize, floor: f64, rng: &mut impl Rng) -> DensityMatrix {
    let dim = 1usize << n;
    let a = DMatrix::<Complex64>::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let m = &a * a.adjoint();
    let tr = m.trace().re;
    let mixed = m / Complex64::new(tr, 0.0) * Complex64::new(1.0 - floor, 0.0)
        + DMatrix::<Complex64>::identity(dim, dim) * Complex64::new(floor / dim as f64, 0.0);
    DensityMatrix {
        mat: (&mixed + mixed.adjoint()) * Complex64::new(0.5, 0.0),
    }
}

/// `(ρ + U ρ U†) / 2`, a state fixed by any involution `U`.
pub fn symmetrize(rho: &DensityMatrix, u: &DMatrix<Complex64>) -> Result<DensityMatrix> {
    let moved = rho.conjugate(u)?;
    let m = (&rho.mat + &moved.mat) * Complex64::new(0.5, 0.0);
    Ok(DensityMatrix { mat: m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::machine::parse_spec;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn single_qubit() -> MachineSpec {
        parse_spec("name = q\nvisible = 1\nhidden = 0\nX\nZ\n").unwrap()
    }

    #[test]
    fn zero_parameters_give_maximally_mixed() {
        let spec = fixtures::load("H_I").unwrap();
        let rho = boltzmann_state(&spec, &[0.0; 5]).unwrap();
        assert!(rho.distance(&DensityMatrix::maximally_mixed(2)) < 1e-15);
    }

    #[test]
    fn single_qubit_closed_form() {
        let t: f64 = 0.7;
        let rho = boltzmann_state(&single_qubit(), &[0.0, t]).unwrap();
        let z = t.exp() + (-t).exp();
        assert!((rho.matrix()[(0, 0)].re - t.exp() / z).abs() < 1e-14);
        assert!((rho.matrix()[(1, 1)].re - (-t).exp() / z).abs() < 1e-14);
        assert!(rho.matrix()[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn purity_grows_along_a_ray() {
        let spec = parse_spec("name = q\nvisible = 1\nhidden = 0\nX\n").unwrap();
        let mut last = 0.0;
        for k in 0..20 {
            let p = boltzmann_state(&spec, &[0.25 * k as f64]).unwrap().purity();
            assert!(p >= last - 1e-15);
            last = p;
        }
        assert!(last > 0.99);
    }

    #[test]
    fn gibbs_states_are_valid() {
        let spec = fixtures::load("H_IV").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..spec.terms.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rho = boltzmann_state(&spec, &a).unwrap();
        DensityMatrix::new(rho.matrix().clone()).unwrap();
        let red = reduce_visible(&rho, spec.n_visible, spec.n_hidden).unwrap();
        DensityMatrix::new(red.matrix().clone()).unwrap();
    }

    #[test]
    fn partial_trace_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_state(1, 0.1, &mut rng);
        let b = random_state(2, 0.1, &mut rng);
        let prod = DensityMatrix::new(a.matrix().kronecker(b.matrix())).unwrap();
        assert!(reduce_visible(&prod, 1, 2).unwrap().distance(&a) < 1e-14);
        assert_eq!(reduce_visible(&b, 2, 0).unwrap(), b);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let psi = DVector::from_vec(vec![c(h), c(0.0), c(0.0), c(h)]);
        let bell = DensityMatrix::new(&psi * psi.adjoint()).unwrap();
        assert!(reduce_visible(&bell, 1, 1).unwrap().distance(&DensityMatrix::maximally_mixed(1)) < 1e-15);
        assert!(reduce_visible(&bell, 2, 1).is_err());
    }

    #[test]
    fn relative_entropy_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_state(2, 0.05, &mut rng);
        assert!(relative_entropy(&s, &s).unwrap().abs() < 1e-10);
        let pure = DensityMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0), c(0.0)]))).unwrap();
        let mixed = DensityMatrix::maximally_mixed(1);
        assert!((relative_entropy(&pure, &mixed).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert_eq!(relative_entropy(&mixed, &pure), Err(Error::InfiniteDivergence));
    }

    #[test]
    fn relative_entropy_nonnegative_and_unitarily_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..100 {
            let n = 1 + trial % 3;
            let s = random_state(n, 0.01, &mut rng);
            let t = random_state(n, 0.01, &mut rng);
            let d = relative_entropy(&s, &t).unwrap();
            assert!(d >= 0.0);
            let h = random_state(n, 0.0, &mut rng).matrix().clone() * c(5.0);
            let (vals, vecs) = hermitian_eigen(&h);
            let u = &vecs
                * DMatrix::from_diagonal(&vals.map(|l| Complex64::new(0.0, l).exp()))
                * vecs.adjoint();
            let d2 = relative_entropy(&s.conjugate(&u).unwrap(), &t.conjugate(&u).unwrap()).unwrap();
            assert!((d - d2).abs() < 1e-10, "{d} vs {d2}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = fixtures::load("H_I").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let target = random_state(2, 0.2, &mut rng);
        let obj = Objective::new(&spec, &target).unwrap();
        for _ in 0..5 {
            let a: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = obj.gradient(&a).unwrap();
            for i in 0..5 {
                let h = 1e-6;
                let mut ap = a.clone();
                let mut am = a.clone();
                ap[i] += h;
                am[i] -= h;
                let fd = (obj.value(&ap).unwrap() - obj.value(&am).unwrap()) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1e-2), "{fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn maximally_mixed_target_is_exact() {
        let spec = fixtures::load("H_I").unwrap();
        let opt = minimize_sm(&spec, &DensityMatrix::maximally_mixed(2), &OptConfig::default()).unwrap();
        assert!(opt.a.iter().all(|x| x.abs() < 1e-12));
        assert!(opt.value.abs() < 1e-15);
    }

    #[test]
    fn single_qubit_optimum_closed_form() {
        let target = DensityMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![c(0.75), c(0.25)]))).unwrap();
        let opt = minimize_sm(&single_qubit(), &target, &OptConfig::default()).unwrap();
        assert!(opt.converged);
        assert!(opt.a[0].abs() < 1e-8);
        assert!((opt.a[1] - 0.5 * 3f64.ln()).abs() < 1e-8);
        assert!(opt.value <= 1e-9);
    }

    #[test]
    fn pure_target_hits_the_boundary() {
        let target = DensityMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0), c(0.0)]))).unwrap();
        let opt = minimize_sm(&single_qubit(), &target, &OptConfig::default()).unwrap();
        assert!(opt.boundary);
        assert!(opt.value < 1e-20);
    }

    #[test]
    fn hidden_machine_optimizes() {
        let spec = parse_spec("name = h\nvisible = 1\nhidden = 1\nZI\nIX\nZX\n").unwrap();
        // Target realizable by the machine: its own reduced Gibbs state.
        let a0 = [0.4, -0.3, 0.8];
        let target = reduce_visible(&boltzmann_state(&spec, &a0).unwrap(), 1, 1).unwrap();
        let opt = minimize_sm(&spec, &target, &OptConfig::default()).unwrap();
        assert!(opt.value < 1e-9, "{}", opt.value);
    }

    #[test]
    fn parse_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = random_state(2, 0.1, &mut rng);
        let back = parse_density_matrix(&s.to_string()).unwrap();
        assert!(back.distance(&s) < 1e-15);
        let text = "# target\n2\n0.5 0.1-0.2i\n0.1+0.2i 0.5\n";
        let t = parse_density_matrix(text).unwrap();
        assert_eq!(t.matrix()[(0, 1)], Complex64::new(0.1, -0.2));
        assert!(matches!(parse_density_matrix("3\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_density_matrix("2\n1 0\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_density_matrix("2\n1 0 0\n0 0\n"), Err(Error::Parse { line: 2, .. })));
        assert!(parse_density_matrix("2\n0.5 0.3\n0.1 0.5\n").is_err());
        assert_eq!(parse_complex("1e-3-2.5e+1i"), Some(Complex64::new(1e-3, -25.0)));
        assert_eq!(parse_complex("-i"), Some(Complex64::new(0.0, -1.0)));
        assert_eq!(parse_complex("x"), None);
    }

    #[test]
    fn conjugated_hamiltonian_stays_in_span() {
        let spec = fixtures::load("H_I").unwrap();
        let report = crate::assembly::analyze(&spec).unwrap();
        let a = [0.3, -0.2, 0.5, 0.1, -0.7];
        for k in 0..report.order() {
            let u = report.pair_unitary(k).unwrap();
            let (ap, res) = transformed_parameters(&spec, &a, &u).unwrap();
            assert!(res < 1e-12);
            let lhs = boltzmann_state(&spec, &a).unwrap().conjugate(&u).unwrap();
            assert!(lhs.distance(&boltzmann_state(&spec, &ap).unwrap()) < 1e-10);
        }
    }

    fn swap_and_zz() -> (MachineSpec, DMatrix<Complex64>, DMatrix<Complex64>) {
        let spec = fixtures::load("H_I").unwrap();
        let report = crate::assembly::analyze(&spec).unwrap();
        let k = report.names().iter().position(|n| *n == "S_12").unwrap();
        let zz = label_matrix(&"ZZ".parse().unwrap()).unwrap();
        (spec, report.pair_unitary(k).unwrap(), zz)
    }

    #[test]
    fn equivalence_checks() {
        let (spec, swap, _) = swap_and_zz();
        let xx = label_matrix(&"XX".parse().unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let target = random_state(2, 0.2, &mut rng);
        let cfg = OptConfig::default();
        let id = check_target_equivalence(&spec, &target, &DMatrix::identity(4, 4), &cfg).unwrap();
        assert_eq!(id.difference, 0.0);
        for u in [&swap, &xx] {
            let r = check_target_equivalence(&spec, &target, u, &cfg).unwrap();
            assert!(r.passed, "{}", r.difference);
        }
    }

    #[test]
    fn swap_degeneracy_exchanges_qubit_parameters() {
        let (spec, swap, _) = swap_and_zz();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let target = symmetrize(&random_state(2, 0.2, &mut rng), &swap).unwrap();
        let opt = minimize_sm(&spec, &target, &OptConfig::default()).unwrap();
        let r = check_solution_degeneracy(&spec, &target, &opt.a, &swap, None).unwrap();
        assert!(r.passed);
        let expect = [opt.a[2], opt.a[3], opt.a[0], opt.a[1], opt.a[4]];
        assert!(r.a_prime.iter().zip(&expect).all(|(x, y)| (x - y).abs() < 1e-12));
        let id = check_solution_degeneracy(&spec, &target, &opt.a, &DMatrix::identity(4, 4), None).unwrap();
        assert!(id.a_prime.iter().zip(&opt.a).all(|(x, y)| (x - y).abs() < 1e-14));
    }

    #[test]
    fn pauli_degeneracy_flips_x_terms() {
        let (spec, _, zz) = swap_and_zz();
        let target = DensityMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![
            c(0.4),
            c(0.3),
            c(0.2),
            c(0.1),
        ])))
        .unwrap();
        let a = [0.3, -0.2, 0.5, 0.1, -0.7];
        let r = check_solution_degeneracy(&spec, &target, &a, &zz, None).unwrap();
        assert!(r.passed);
        let expect = [-0.3, -0.2, -0.5, 0.1, -0.7];
        assert!(r.a_prime.iter().zip(&expect).all(|(x, y)| (x - y).abs() < 1e-14));
    }

    #[test]
    fn degeneracy_needs_a_fixed_target() {
        let (spec, swap, _) = swap_and_zz();
        let target = DensityMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![
            c(0.4),
            c(0.3),
            c(0.2),
            c(0.1),
        ])))
        .unwrap();
        let err = check_solution_degeneracy(&spec, &target, &[0.0; 5], &swap, None).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }
}
