//! Levenberg–Marquardt over the basic equations, random-restart sweeps and
//! classification of the converged coefficient matrices.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::assembly::SubsystemReport;
use crate::equations::{double_stochastic_error, unique_xor_zero_constraints, EquationSystem, Evaluator};
use crate::error::{Error, Result};
use crate::optim::nelder_mead;
use crate::pauli::{label_matrix, PauliLabel};

/// Runs are solved directly up to this many qubits under `Branch::Auto`.
pub const AUTO_DIRECT_MAX_QUBITS: usize = 3;
/// Residual at which a converged run stops refining.
const POLISH_TARGET: f64 = 1e-26;
/// Damping above which a run is declared stuck.
const DAMPING_CAP: f64 = 1e16;
/// Largest per-row constraint graph whose vertex covers are enumerated.
const MAX_COVER_VERTICES: usize = 24;
/// Best grid points refined by the family fit.
const FIT_STARTS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Auto,
    Direct,
    ZeroPattern,
}

impl FromStr for Branch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Branch::Auto),
            "direct" => Ok(Branch::Direct),
            "zero-pattern" => Ok(Branch::ZeroPattern),
            other => Err(Error::Input(format!(
                "unknown branch {other:?} (expected auto, direct or zero-pattern)"
            ))),
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Auto => "auto",
            Branch::Direct => "direct",
            Branch::ZeroPattern => "zero-pattern",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverConfig {
    /// A run is a solution when `F = ½ Σ f² ≤ tolerance`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub damping_init: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    pub restarts: usize,
    pub seed: u64,
    pub init_range: (f64, f64),
    pub gradient_norm_stop: f64,
    pub branch: Branch,
    /// Default restart budget per zero-pattern combination.
    pub restarts_per_combination: usize,
    /// Zero-pattern combinations beyond this count are sampled.
    pub combination_cap: usize,
    /// Dedup radius (max-norm) after sign alignment.
    pub dedup_radius: f64,
    /// Distance to `{−1, 0, 1}` accepted as exact.
    pub snap: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-6,
            max_iterations: 500,
            damping_init: 1e-3,
            damping_up: 10.0,
            damping_down: 0.1,
            restarts: 1000,
            seed: 0,
            init_range: (-1.0, 1.0),
            gradient_norm_stop: 1e-12,
            branch: Branch::Auto,
            restarts_per_combination: 20,
            combination_cap: 4096,
            dedup_radius: 1e-3,
            snap: 1e-4,
        }
    }
}

impl SolverConfig {
    /// Branch actually run on an `n`-qubit subsystem.
    pub fn effective_branch(&self, n: usize) -> Branch {
        match self.branch {
            Branch::Auto if n <= AUTO_DIRECT_MAX_QUBITS => Branch::Direct,
            Branch::Auto => Branch::ZeroPattern,
            b => b,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Input("tolerance must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Input("restarts must be at least 1".into()));
        }
        if !(self.damping_init > 0.0 && self.damping_up > 1.0 && self.damping_down > 0.0 && self.damping_down < 1.0) {
            return Err(Error::Input("damping factors must satisfy init > 0, up > 1, 0 < down < 1".into()));
        }
        if !(self.init_range.0 < self.init_range.1) {
            return Err(Error::Input("empty initialization range".into()));
        }
        if self.combination_cap == 0 || self.restarts_per_combination == 0 {
            return Err(Error::Input("combination cap and restarts per combination must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Solution,
    LocalMinimum,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmOutcome {
    pub u: Vec<f64>,
    pub value: f64,
    pub status: Status,
    pub iterations: usize,
}

fn normal_equations(ev: &Evaluator, u: &[f64], f: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let n = ev.unknowns();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut g = DVector::<f64>::zeros(n);
    ev.for_each_jacobian_row(u, |i, row| {
        for &(p, vp) in row {
            g[p as usize] += vp * f[i];
            for &(q, vq) in row {
                a[(p as usize, q as usize)] += vp * vq;
            }
        }
    });
    (a, g)
}

/// Levenberg–Marquardt from `init`: solves `(JᵀJ + λI)δ = −Jᵀf`, keeps a
/// step only when `F` decreases and rescales `λ` accordingly. Converged
/// runs keep refining past `tolerance` so entries settle well below the
/// classification snap.
pub fn lm_solve(ev: &Evaluator, init: &[f64], cfg: &SolverConfig) -> Result<LmOutcome> {
    if init.len() != ev.unknowns() {
        return Err(Error::LengthMismatch {
            left: init.len(),
            right: ev.unknowns(),
        });
    }
    let n = init.len();
    let mut u = init.to_vec();
    let mut f = Vec::with_capacity(ev.equations());
    ev.residuals_into(&u, &mut f);
    let mut value = 0.5 * f.iter().map(|x| x * x).sum::<f64>();
    let mut lambda = cfg.damping_init;
    let mut iterations = 0;
    let mut trial = vec![0.0; n];
    let mut f_trial = Vec::with_capacity(ev.equations());
    let (mut a, mut g) = normal_equations(ev, &u, &f);
    let finish = |u: Vec<f64>, value: f64, stuck: Status, iterations| LmOutcome {
        u,
        value,
        status: if value <= cfg.tolerance { Status::Solution } else { stuck },
        iterations,
    };
    loop {
        if value <= POLISH_TARGET {
            return Ok(finish(u, value, Status::Solution, iterations));
        }
        if g.amax() <= cfg.gradient_norm_stop {
            return Ok(finish(u, value, Status::LocalMinimum, iterations));
        }
        if iterations >= cfg.max_iterations {
            return Ok(finish(u, value, Status::MaxIterations, iterations));
        }
        iterations += 1;
        let mut damped = a.clone();
        for i in 0..n {
            damped[(i, i)] += lambda;
        }
        let step = damped.cholesky().map(|c| c.solve(&(-&g)));
        let accepted = match step {
            Some(delta) if delta.iter().all(|d| d.is_finite()) => {
                for i in 0..n {
                    trial[i] = u[i] + delta[i];
                }
                ev.residuals_into(&trial, &mut f_trial);
                let v = 0.5 * f_trial.iter().map(|x| x * x).sum::<f64>();
                if v < value {
                    std::mem::swap(&mut u, &mut trial);
                    std::mem::swap(&mut f, &mut f_trial);
                    value = v;
                    true
                } else {
                    false
                }
            }
            _ => false,
        };
        if accepted {
            lambda = (lambda * cfg.damping_down).max(1e-300);
            (a, g) = normal_equations(ev, &u, &f);
        } else {
            lambda *= cfg.damping_up;
            if lambda > DAMPING_CAP {
                return Ok(finish(u, value, Status::LocalMinimum, iterations));
            }
        }
    }
}

/// Flips each row of the `rows × cols` matrix so its largest-magnitude
/// entry is positive.
pub fn sign_align(u: &mut [f64], cols: usize) {
    for row in u.chunks_mut(cols) {
        let pivot = row.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            row.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn max_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SolutionClass {
    /// Entries in `{−1, 0, 1}` matching discrete element `element`.
    SignedPermutation { element: usize, name: String },
    /// `exp(iΣ a_γ σ_γ) · W` with `W` the discrete class representative
    /// `element`.
    ContinuousFamily {
        element: usize,
        name: String,
        angles: Vec<f64>,
        fit_error: f64,
    },
    Unclassified { reason: String },
}

impl SolutionClass {
    /// Column of the frequency table this class is counted under.
    pub fn label(&self) -> String {
        match self {
            SolutionClass::SignedPermutation { name, .. } => name.clone(),
            SolutionClass::ContinuousFamily { name, .. } => {
                if name == "I" {
                    "G_c".to_string()
                } else {
                    format!("G_c × {name}")
                }
            }
            SolutionClass::Unclassified { .. } => "unclassified".to_string(),
        }
    }

    pub fn is_unclassified(&self) -> bool {
        matches!(self, SolutionClass::Unclassified { .. })
    }
}

/// Classifies a sign-aligned coefficient matrix against the discrete and
/// continuous symmetry reports of `sub`.
pub fn classify_solution(
    u: &[f64],
    sys: &EquationSystem,
    sub: &SubsystemReport,
    snap: f64,
) -> Result<SolutionClass> {
    let (k, m) = (sys.rows, sys.cols);
    if u.len() != k * m {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: k * m,
        });
    }
    if let Some(images) = signed_permutation_images(u, sys, snap) {
        return Ok(match sub.discrete.index_of(&images) {
            Some(i) => SolutionClass::SignedPermutation {
                element: i,
                name: sub.discrete.names[i].clone(),
            },
            None => {
                let shown: Vec<String> = images.iter().map(|l| l.to_string()).collect();
                SolutionClass::Unclassified {
                    reason: format!(
                        "signed permutation with images [{}] is not in the discrete report",
                        shown.join(", ")
                    ),
                }
            }
        });
    }
    if sub.continuous.is_trivial() {
        return Ok(SolutionClass::Unclassified {
            reason: "not a signed permutation and the continuous group is trivial".into(),
        });
    }
    let fitter = FamilyFit::new(sys, sub)?;
    for rep in sub.discrete.class_representatives() {
        let w = sub.unitary(rep)?;
        if let Some((angles, err)) = fitter.fit(&w, u, snap) {
            return Ok(SolutionClass::ContinuousFamily {
                element: rep,
                name: sub.discrete.names[rep].clone(),
                angles,
                fit_error: err,
            });
        }
    }
    Ok(SolutionClass::Unclassified {
        reason: "no continuous-family fit within the snap tolerance".into(),
    })
}

fn signed_permutation_images(u: &[f64], sys: &EquationSystem, snap: f64) -> Option<Vec<PauliLabel>> {
    let m = sys.cols;
    let mut used = vec![false; m];
    let mut images = Vec::with_capacity(sys.rows);
    for row in u.chunks(m) {
        let mut hit = None;
        for (c, &x) in row.iter().enumerate() {
            if x.abs() <= snap {
                continue;
            }
            if (x.abs() - 1.0).abs() > snap || hit.is_some() {
                return None;
            }
            hit = Some(c);
        }
        let c = hit?;
        if used[c] {
            return None;
        }
        used[c] = true;
        images.push(sys.columns[c]);
    }
    Some(images)
}

/// Sparse Pauli matrix: column `y` has its single nonzero `value` in row
/// `row`.
struct SparsePauli {
    entries: Vec<(usize, Complex64)>,
}

impl SparsePauli {
    fn new(label: &PauliLabel) -> Result<Self> {
        let dense = label_matrix(label)?;
        let entries = (0..dense.ncols())
            .map(|y| {
                (0..dense.nrows())
                    .find(|&x| dense[(x, y)].norm() > 0.5)
                    .map(|x| (x, dense[(x, y)]))
                    .expect("Pauli matrices have one nonzero per column")
            })
            .collect();
        Ok(SparsePauli { entries })
    }

    /// `Re Tr(M σ) / dim`.
    fn projection(&self, mat: &DMatrix<Complex64>) -> f64 {
        let dim = self.entries.len();
        let tr: Complex64 = self
            .entries
            .iter()
            .enumerate()
            .map(|(y, &(x, v))| mat[(y, x)] * v)
            .sum();
        tr.re / dim as f64
    }
}

struct FamilyFit {
    continuous: Vec<DMatrix<Complex64>>,
    generators: Vec<DMatrix<Complex64>>,
    columns: Vec<SparsePauli>,
}

impl FamilyFit {
    fn new(sys: &EquationSystem, sub: &SubsystemReport) -> Result<Self> {
        Ok(FamilyFit {
            continuous: sub.continuous.labels.iter().map(label_matrix).collect::<Result<_>>()?,
            generators: sys.generators.iter().map(label_matrix).collect::<Result<_>>()?,
            columns: sys.columns.iter().map(SparsePauli::new).collect::<Result<_>>()?,
        })
    }

    fn coefficients(&self, angles: &[f64], w: &DMatrix<Complex64>) -> Vec<f64> {
        let dim = w.nrows();
        let mut h = DMatrix::<Complex64>::zeros(dim, dim);
        for (a, s) in angles.iter().zip(&self.continuous) {
            h += s * Complex64::new(*a, 0.0);
        }
        let t = exp_i_hermitian(&h) * w;
        let td = t.adjoint();
        let mut out = Vec::with_capacity(self.generators.len() * self.columns.len());
        for g in &self.generators {
            let conj = &t * g * &td;
            out.extend(self.columns.iter().map(|c| c.projection(&conj)));
        }
        out
    }

    /// Row-sign-invariant squared distance and max-entry error.
    fn distance(&self, coef: &[f64], u: &[f64]) -> (f64, f64) {
        let m = self.columns.len();
        let mut sq = 0.0;
        let mut worst: f64 = 0.0;
        for (cr, ur) in coef.chunks(m).zip(u.chunks(m)) {
            let dot: f64 = cr.iter().zip(ur).map(|(a, b)| a * b).sum();
            let s = if dot < 0.0 { -1.0 } else { 1.0 };
            for (a, b) in cr.iter().zip(ur) {
                let d = s * a - b;
                sq += d * d;
                worst = worst.max(d.abs());
            }
        }
        (sq, worst)
    }

    fn fit(&self, w: &DMatrix<Complex64>, u: &[f64], snap: f64) -> Option<(Vec<f64>, f64)> {
        let p = self.continuous.len();
        let cost = |a: &[f64]| self.distance(&self.coefficients(a, w), u).0;
        let mut starts: Vec<(f64, Vec<f64>)> = starting_angles(p).into_iter().map(|a| (cost(&a), a)).collect();
        starts.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (_, start) in starts.into_iter().take(FIT_STARTS) {
            let found = nelder_mead(cost, &start, 0.05, 1e-24, 2000);
            let (_, err) = self.distance(&self.coefficients(&found.x, w), u);
            if err <= snap {
                return Some((found.x, err));
            }
        }
        None
    }
}

/// Grid (or pseudo-random) starting angles for the family fit.
fn starting_angles(p: usize) -> Vec<Vec<f64>> {
    let steps: usize = match p {
        0 => return vec![Vec::new()],
        1 => 32,
        2 => 16,
        3 => 8,
        _ => 0,
    };
    if steps > 0 {
        let grid: Vec<f64> = (0..steps)
            .map(|i| -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * i as f64 / steps as f64)
            .collect();
        let mut out = vec![Vec::new()];
        for _ in 0..p {
            out = out
                .into_iter()
                .flat_map(|v| {
                    grid.iter().map(move |&g| {
                        let mut w = v.clone();
                        w.push(g);
                        w
                    })
                })
                .collect();
        }
        out
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(p as u64);
        let mut out = vec![vec![0.0; p]];
        out.extend((0..512).map(|_| (0..p).map(|_| rng.random_range(-1.6..1.6)).collect()));
        out
    }
}

/// `exp(iH)` for Hermitian `H`.
fn exp_i_hermitian(h: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eig = h.clone().symmetric_eigen();
    let q = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| Complex64::new(0.0, l).exp()));
    q * d * q.adjoint()
}

/// Zero-assignment combinations for the zero-pattern branch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZeroBatch {
    /// Each combination lists unknown indices fixed to zero.
    pub combinations: Vec<Vec<usize>>,
    /// Number of combinations before sampling (saturating).
    pub total: u128,
    pub sampled: bool,
}

/// Minimal vertex covers of each row's constraint graph, combined across
/// rows; sampled with the config seed when the product exceeds the cap.
pub fn zero_batch(sys: &EquationSystem, cfg: &SolverConfig) -> Result<ZeroBatch> {
    let constraints = unique_xor_zero_constraints(sys);
    let m = sys.cols;
    let mut per_row: Vec<Vec<Vec<usize>>> = Vec::with_capacity(sys.rows);
    for r in 0..sys.rows {
        let edges: Vec<(usize, usize)> = constraints
            .iter()
            .filter(|&&(a, _)| a / m == r)
            .copied()
            .collect();
        per_row.push(minimal_vertex_covers(&edges)?);
    }
    let total = per_row
        .iter()
        .fold(1u128, |acc, c| acc.saturating_mul(c.len() as u128));
    let pick = |choice: &[usize]| -> Vec<usize> {
        let mut zeros: Vec<usize> = choice
            .iter()
            .zip(&per_row)
            .flat_map(|(&i, covers)| covers[i].iter().copied())
            .collect();
        zeros.sort_unstable();
        zeros
    };
    if total <= cfg.combination_cap as u128 {
        let mut combinations = Vec::with_capacity(total as usize);
        let mut choice = vec![0usize; per_row.len()];
        'outer: loop {
            combinations.push(pick(&choice));
            for r in (0..choice.len()).rev() {
                choice[r] += 1;
                if choice[r] < per_row[r].len() {
                    continue 'outer;
                }
                choice[r] = 0;
            }
            break;
        }
        return Ok(ZeroBatch {
            combinations,
            total,
            sampled: false,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(u64::MAX);
    let combinations = (0..cfg.combination_cap)
        .map(|_| {
            let choice: Vec<usize> = per_row.iter().map(|c| rng.random_range(0..c.len())).collect();
            pick(&choice)
        })
        .collect();
    Ok(ZeroBatch {
        combinations,
        total,
        sampled: true,
    })
}

fn minimal_vertex_covers(edges: &[(usize, usize)]) -> Result<Vec<Vec<usize>>> {
    let mut vertices: Vec<usize> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    vertices.sort_unstable();
    vertices.dedup();
    let t = vertices.len();
    if t > MAX_COVER_VERTICES {
        return Err(Error::Resource {
            what: "zero-pattern constraint vertices per row",
            size: t,
            cap: MAX_COVER_VERTICES,
        });
    }
    let local: Vec<(usize, usize)> = edges
        .iter()
        .map(|(a, b)| {
            (
                vertices.binary_search(a).expect("endpoint listed"),
                vertices.binary_search(b).expect("endpoint listed"),
            )
        })
        .collect();
    let covers = |s: u32| local.iter().all(|&(a, b)| s >> a & 1 == 1 || s >> b & 1 == 1);
    let mut out = Vec::new();
    for s in 0..(1u32 << t) {
        if covers(s) && (0..t).all(|v| s >> v & 1 == 0 || !covers(s & !(1 << v))) {
            out.push((0..t).filter(|&v| s >> v & 1 == 1).map(|v| vertices[v]).collect());
        }
    }
    Ok(out)
}

/// A deduplicated converged solution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Solution {
    /// Sign-aligned coefficients, row-major `generators × terms`.
    pub u: Vec<f64>,
    pub residual: f64,
    pub double_stochastic_error: f64,
    pub class: SolutionClass,
    /// Runs that converged onto this solution.
    pub hits: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolutionSet {
    pub rows: usize,
    pub cols: usize,
    pub generators: Vec<PauliLabel>,
    pub columns: Vec<PauliLabel>,
    pub branch: Branch,
    pub combinations: Option<ZeroBatch>,
    pub solutions: Vec<Solution>,
    /// Converged runs per class label; every discrete element is listed.
    pub frequencies: BTreeMap<String, usize>,
    /// Runs that ended above tolerance (stalled or out of iterations).
    pub local_minima_count: usize,
    pub max_iteration_runs: usize,
    pub runs_total: usize,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl SolutionSet {
    pub fn unclassified(&self) -> impl Iterator<Item = &Solution> {
        self.solutions.iter().filter(|s| s.class.is_unclassified())
    }

    /// Class labels with at least one converged run.
    pub fn found_classes(&self) -> Vec<&str> {
        self.frequencies
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(k, _)| k.as_str())
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("solution sets serialize")
    }
}

impl fmt::Display for SolutionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "branch: {}", self.branch)?;
        if let Some(batch) = &self.combinations {
            writeln!(
                f,
                "zero-pattern combinations: {} of {}{}",
                batch.combinations.len(),
                batch.total,
                if batch.sampled { " (sampled)" } else { "" }
            )?;
        }
        let width = self.frequencies.keys().map(|k| k.chars().count()).max().unwrap_or(0).max(13);
        writeln!(f, "{:<width$}  runs", "class")?;
        for (k, v) in &self.frequencies {
            writeln!(f, "{k:<width$}  {v}")?;
        }
        writeln!(f, "{:<width$}  {}", "local minima", self.local_minima_count)?;
        writeln!(f, "{:<width$}  {}", "total", self.runs_total)?;
        writeln!(f, "distinct solutions: {}", self.solutions.len())?;
        writeln!(f, "wall time: {:.3} s", self.wall_time.as_secs_f64())?;
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        let bad: Vec<&Solution> = self.unclassified().collect();
        if !bad.is_empty() {
            writeln!(f, "RED FLAG: {} unclassified solution(s)", bad.len())?;
            for s in bad {
                if let SolutionClass::Unclassified { reason } = &s.class {
                    writeln!(f, "  {reason}")?;
                }
                for row in s.u.chunks(self.cols) {
                    let cells: Vec<String> = row.iter().map(|x| format!("{x:+.6}")).collect();
                    writeln!(f, "    {}", cells.join(" "))?;
                }
            }
        }
        Ok(())
    }
}

fn run_rng(seed: u64, run: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    rng
}

/// Random-restart sweep over the basic equations of `sub`'s terms.
pub fn sweep(sys: &EquationSystem, sub: &SubsystemReport, cfg: &SolverConfig) -> Result<SolutionSet> {
    cfg.validate()?;
    if sys.columns != sub.terms || sys.generators != sub.generators.generators() {
        return Err(Error::Precondition(
            "equation system and subsystem report describe different term sets".into(),
        ));
    }
    let start = Instant::now();
    let branch = cfg.effective_branch(sub.n);
    let (lo, hi) = cfg.init_range;
    let mut warnings = Vec::new();
    let mut batch = None;
    let outcomes: Vec<LmOutcome> = match branch {
        Branch::ZeroPattern => {
            let zb = zero_batch(sys, cfg)?;
            if zb.sampled {
                warnings.push(format!(
                    "{} zero-pattern combinations exceed the cap; sampled {}",
                    zb.total,
                    zb.combinations.len()
                ));
            }
            let reduced: Vec<_> = zb.combinations.iter().map(|z| sys.substitute_zeros(z)).collect();
            let evaluators: Vec<Evaluator> = reduced.iter().map(|r| r.evaluator()).collect();
            let out = (0..cfg.restarts)
                .into_par_iter()
                .map(|run| {
                    let c = run % reduced.len();
                    let mut rng = run_rng(cfg.seed, run);
                    let init: Vec<f64> = (0..reduced[c].unknowns()).map(|_| rng.random_range(lo..=hi)).collect();
                    lm_solve(&evaluators[c], &init, cfg).map(|o| LmOutcome {
                        u: reduced[c].expand(&o.u),
                        ..o
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            batch = Some(zb);
            out
        }
        _ => {
            let ev = sys.evaluator();
            (0..cfg.restarts)
                .into_par_iter()
                .map(|run| {
                    let mut rng = run_rng(cfg.seed, run);
                    let init: Vec<f64> = (0..ev.unknowns()).map(|_| rng.random_range(lo..=hi)).collect();
                    lm_solve(&ev, &init, cfg)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };

    let mut frequencies: BTreeMap<String, usize> =
        sub.discrete.names.iter().map(|n| (n.clone(), 0)).collect();
    if !sub.continuous.is_trivial() {
        frequencies.insert("G_c".into(), 0);
    }
    let mut unique: Vec<(Vec<f64>, f64, usize)> = Vec::new();
    let mut assignment = Vec::with_capacity(outcomes.len());
    let mut local_minima_count = 0;
    let mut max_iteration_runs = 0;
    for o in outcomes {
        if o.status != Status::Solution {
            local_minima_count += 1;
            if o.status == Status::MaxIterations {
                max_iteration_runs += 1;
            }
            continue;
        }
        let mut u = o.u;
        sign_align(&mut u, sys.cols);
        match unique.iter().position(|(v, _, _)| max_distance(v, &u) < cfg.dedup_radius) {
            Some(i) => {
                unique[i].2 += 1;
                assignment.push(i);
            }
            None => {
                assignment.push(unique.len());
                unique.push((u, o.value, 1));
            }
        }
    }
    let classes: Vec<SolutionClass> = unique
        .par_iter()
        .map(|(u, _, _)| classify_solution(u, sys, sub, cfg.snap))
        .collect::<Result<_>>()?;
    for &i in &assignment {
        *frequencies.entry(classes[i].label()).or_insert(0) += 1;
    }
    let solutions: Vec<Solution> = unique
        .into_iter()
        .zip(classes)
        .map(|((u, residual, hits), class)| Solution {
            double_stochastic_error: double_stochastic_error(sys, &u),
            u,
            residual,
            class,
            hits,
        })
        .collect();
    if solutions.iter().any(|s| s.class.is_unclassified()) {
        warnings.push("unclassified solutions found (outside the predicted symmetry group)".into());
    }
    Ok(SolutionSet {
        rows: sys.rows,
        cols: sys.cols,
        generators: sys.generators.clone(),
        columns: sys.columns.clone(),
        branch,
        combinations: batch,
        solutions,
        frequencies,
        local_minima_count,
        max_iteration_runs,
        runs_total: cfg.restarts,
        warnings,
        wall_time: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::analyze_subsystem;
    use crate::equations::{coefficients_from_unitary, generate_equations, Equation, Part, Tag};
    use crate::fixtures;

    fn setup(name: &str) -> (EquationSystem, SubsystemReport) {
        let spec = fixtures::load(name).unwrap();
        let sub = analyze_subsystem(&spec.terms, spec.n(), 0).unwrap();
        let sys = generate_equations(&sub.terms, &sub.generators).unwrap();
        (sys, sub)
    }

    fn one_unknown() -> EquationSystem {
        let x = PauliLabel::single(1, 0, 'X').unwrap();
        EquationSystem {
            rows: 1,
            cols: 1,
            columns: vec![x],
            generators: vec![x],
            equations: vec![Equation {
                tag: Tag::E45,
                part: Part::Re,
                rows: vec![0],
                target: None,
                constant: -1.0,
                terms: vec![(1.0, vec![0, 0])],
            }],
        }
    }

    #[test]
    fn exact_solution_takes_no_steps() {
        let (sys, sub) = setup("H_I");
        let u = coefficients_from_unitary(&sub.unitary(0).unwrap(), &sys).unwrap();
        let o = lm_solve(&sys.evaluator(), &u, &SolverConfig::default()).unwrap();
        assert_eq!(o.iterations, 0);
        assert_eq!(o.value, 0.0);
        assert_eq!(o.status, Status::Solution);
    }

    #[test]
    fn one_iteration_budget_reports_max_iterations() {
        let (sys, _) = setup("H_II_n3");
        let cfg = SolverConfig {
            max_iterations: 1,
            ..SolverConfig::default()
        };
        let mut rng = run_rng(7, 0);
        let init: Vec<f64> = (0..sys.unknowns()).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let o = lm_solve(&sys.evaluator(), &init, &cfg).unwrap();
        assert_eq!(o.status, Status::MaxIterations);
        assert_eq!(o.iterations, 1);
    }

    #[test]
    fn single_square_equation_has_both_roots() {
        let ev = one_unknown().evaluator();
        let cfg = SolverConfig::default();
        let pos = lm_solve(&ev, &[0.3], &cfg).unwrap();
        let neg = lm_solve(&ev, &[-0.7], &cfg).unwrap();
        assert_eq!(pos.status, Status::Solution);
        assert!((pos.u[0] - 1.0).abs() < 1e-10);
        assert!((neg.u[0] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn stationary_start_is_a_local_minimum() {
        // At 0 the gradient of (x² − 1)² vanishes.
        let o = lm_solve(&one_unknown().evaluator(), &[0.0], &SolverConfig::default()).unwrap();
        assert_eq!(o.status, Status::LocalMinimum);
        assert!((o.value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let ev = one_unknown().evaluator();
        assert!(lm_solve(&ev, &[0.0, 1.0], &SolverConfig::default()).is_err());
    }

    #[test]
    fn sign_alignment_makes_pivots_positive() {
        let mut u = vec![0.1, -0.9, 0.2, 0.5, 0.4, -0.3];
        sign_align(&mut u, 3);
        assert_eq!(u, vec![-0.1, 0.9, -0.2, 0.5, 0.4, -0.3]);
    }

    #[test]
    fn identity_and_swap_classify_as_permutations() {
        let (sys, sub) = setup("H_I");
        for i in 0..sub.discrete.order() {
            let mut u = coefficients_from_unitary(&sub.unitary(i).unwrap(), &sys).unwrap();
            sign_align(&mut u, sys.cols);
            let class = classify_solution(&u, &sys, &sub, 1e-4).unwrap();
            assert_eq!(
                class,
                SolutionClass::SignedPermutation {
                    element: i,
                    name: sub.discrete.names[i].clone()
                }
            );
        }
    }

    #[test]
    fn rotation_classifies_as_continuous_family() {
        let (sys, sub) = setup("H_III_n2");
        let y1 = label_matrix(&"YI".parse().unwrap()).unwrap();
        let v = exp_i_hermitian(&(y1 * Complex64::new(0.37, 0.0)));
        let mut u = coefficients_from_unitary(&v, &sys).unwrap();
        sign_align(&mut u, sys.cols);
        match classify_solution(&u, &sys, &sub, 1e-4).unwrap() {
            SolutionClass::ContinuousFamily { name, fit_error, .. } => {
                assert_eq!(name, "I");
                assert!(fit_error < 1e-6);
            }
            other => panic!("unexpected class {other:?}"),
        }
    }

    #[test]
    fn rotated_swap_is_in_the_swap_coset() {
        let (sys, sub) = setup("H_III_n2");
        let swap = sub.discrete.names.iter().position(|n| n == "S_12").unwrap();
        let y2 = label_matrix(&"IY".parse().unwrap()).unwrap();
        let v = exp_i_hermitian(&(y2 * Complex64::new(-0.2, 0.0))) * sub.unitary(swap).unwrap();
        let u = coefficients_from_unitary(&v, &sys).unwrap();
        let class = classify_solution(&u, &sys, &sub, 1e-4).unwrap();
        assert_eq!(class.label(), "G_c × S_12");
    }

    #[test]
    fn non_symmetry_matrix_is_unclassified() {
        let (sys, sub) = setup("H_I");
        let u = vec![0.6; sys.unknowns()];
        assert!(classify_solution(&u, &sys, &sub, 1e-4).unwrap().is_unclassified());
    }

    #[test]
    fn vertex_covers_of_a_path() {
        // Path 0-1-2: minimal covers {1} and {0, 2}.
        let covers = minimal_vertex_covers(&[(0, 1), (1, 2)]).unwrap();
        assert_eq!(covers, vec![vec![1], vec![0, 2]]);
        assert_eq!(minimal_vertex_covers(&[]).unwrap(), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn h1_sweep_finds_both_classes() {
        let (sys, sub) = setup("H_I");
        let cfg = SolverConfig {
            restarts: 200,
            seed: 11,
            ..SolverConfig::default()
        };
        let set = sweep(&sys, &sub, &cfg).unwrap();
        assert_eq!(set.found_classes(), vec!["I", "S_12"]);
        assert_eq!(set.unclassified().count(), 0);
        let converged: usize = set.frequencies.values().sum();
        assert_eq!(converged + set.local_minima_count, set.runs_total);
        for s in &set.solutions {
            assert!(s.residual <= cfg.tolerance);
            assert!(s.double_stochastic_error <= 1e-5);
        }
    }

    #[test]
    fn sweep_is_deterministic() {
        let (sys, sub) = setup("H_I");
        let cfg = SolverConfig {
            restarts: 50,
            seed: 3,
            ..SolverConfig::default()
        };
        let a = sweep(&sys, &sub, &cfg).unwrap();
        let b = sweep(&sys, &sub, &cfg).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn zero_pattern_branch_runs() {
        let (sys, sub) = setup("H_I");
        let cfg = SolverConfig {
            restarts: 100,
            seed: 5,
            branch: Branch::ZeroPattern,
            ..SolverConfig::default()
        };
        let set = sweep(&sys, &sub, &cfg).unwrap();
        assert_eq!(set.branch, Branch::ZeroPattern);
        assert!(set.combinations.as_ref().unwrap().total >= 1);
        assert_eq!(set.unclassified().count(), 0);
    }
}
