//! Stabilization LMIs: encoding, a barrier-method SDP backend, gain
//! extraction and certification.
//!
//! Every LMI handled here has the form
//!
//! ```text
//!   Z Q symmetric,   Z Q ⪰ I,   −sym(W Q) ⪰ δ I,
//! ```
//!
//! with `Q ∈ ℝ^{N×d}`, `Z, W ∈ ℝ^{d×N}`. The variable is `vec(Q)` in
//! row-major order (`Q[i, j]` is variable `i·d + j`).

use std::time::Instant;

use nalgebra::Cholesky;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::batching::{BaselineBatch, OutputBatch, StateBatch};
use crate::error::{Error, Result};
use crate::lti_sim::StatePlant;
use crate::numkit::{self, Mat, Vector};
use crate::realization::{OutputRealization, StateRealization};

pub const DEFAULT_DELTA: f64 = 1e-3;

/// Symmetry residual allowed relative to `‖ZQ‖`.
pub const SYMMETRY_TOL: f64 = 1e-7;
/// Allowed relative shortfall on `λ_min(ZQ) ≥ 1`.
pub const LOWER_TOL: f64 = 1e-6;
/// Allowed relative shortfall on `λ_max(sym WQ) ≤ −δ`.
pub const UPPER_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    Feasibility,
    /// Minimize `trace(ZQ)` among feasible points.
    MinTrace,
}

/// `coeff · Q_var` placed at `(row, col)` of a block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub var: usize,
    pub row: usize,
    pub col: usize,
    pub coeff: f64,
}

/// `Σ terms − offset · I ⪰ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdBlock {
    pub name: String,
    pub dim: usize,
    pub offset: f64,
    pub terms: Vec<Triplet>,
}

/// Sparse linear functional `Σ coeff · Q_var = 0`.
pub type Equality = Vec<(usize, f64)>;

/// Conic form handed to a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseProgram {
    pub rows: usize,
    pub cols: usize,
    pub equalities: Vec<Equality>,
    pub blocks: Vec<PsdBlock>,
    /// Linear objective to minimize, if any.
    pub objective: Option<Vec<(usize, f64)>>,
}

impl SparseProgram {
    pub fn num_vars(&self) -> usize {
        self.rows * self.cols
    }

    /// Dense `dim² × num_vars` map of a block's linear part.
    pub fn block_map(&self, block: &PsdBlock) -> Mat {
        let mut m = Mat::zeros(block.dim * block.dim, self.num_vars());
        for t in &block.terms {
            m[(t.row * block.dim + t.col, t.var)] += t.coeff;
        }
        m
    }

    pub fn equality_matrix(&self) -> Mat {
        let mut m = Mat::zeros(self.equalities.len(), self.num_vars());
        for (r, eq) in self.equalities.iter().enumerate() {
            for &(v, c) in eq {
                m[(r, v)] += c;
            }
        }
        m
    }
}

/// One of the stabilization LMIs, kept in data-matrix form.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiProblem {
    pub label: String,
    /// `d × N`; `ZQ` must be symmetric and `⪰ I`.
    pub z: Mat,
    /// `d × N`; `sym(WQ) ⪯ −δI`.
    pub w: Mat,
    pub delta: f64,
    pub objective: Objective,
}

impl LmiProblem {
    pub fn new(label: impl Into<String>, z: Mat, w: Mat, delta: f64) -> Result<Self> {
        if z.shape() != w.shape() {
            return Err(Error::dim(format!(
                "Z is {}x{}, W is {}x{}",
                z.nrows(),
                z.ncols(),
                w.nrows(),
                w.ncols()
            )));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "delta must be > 0, got {delta}"
            )));
        }
        numkit::check_finite(&z, "Z")?;
        numkit::check_finite(&w, "W")?;
        Ok(Self {
            label: label.into(),
            z,
            w,
            delta,
            objective: Objective::Feasibility,
        })
    }

    pub fn with_objective(mut self, objective: Objective) -> Self {
        self.objective = objective;
        self
    }

    /// Block size `d`.
    pub fn dim(&self) -> usize {
        self.z.nrows()
    }

    /// Sample count `N`.
    pub fn samples(&self) -> usize {
        self.z.ncols()
    }

    /// `None` when `rank Z = d`, else the reason `ZQ ⪰ I` is impossible.
    pub fn rank_precheck(&self) -> Result<Option<String>> {
        let (d, n) = (self.dim(), self.samples());
        if n < d {
            return Ok(Some(format!("N = {n} < d = {d}: ZQ has rank at most {n}")));
        }
        let r = numkit::numerical_rank(&self.z)?;
        if r.rank < d {
            return Ok(Some(format!(
                "rank Z = {} < d = {d}: ZQ cannot be positive definite",
                r.rank
            )));
        }
        Ok(None)
    }

    pub fn to_sparse(&self) -> SparseProgram {
        let (d, n) = (self.dim(), self.samples());
        let var = |i: usize, j: usize| i * d + j;
        let mut equalities = Vec::new();
        for a in 0..d {
            for b in a + 1..d {
                // (ZQ)_{ab} − (ZQ)_{ba}
                let mut eq = Vec::new();
                for i in 0..n {
                    push_nonzero(&mut eq, var(i, b), self.z[(a, i)]);
                    push_nonzero(&mut eq, var(i, a), -self.z[(b, i)]);
                }
                equalities.push(eq);
            }
        }
        let sym_block = |name: &str, m: &Mat, sign: f64, offset: f64| {
            let mut terms = Vec::new();
            for a in 0..d {
                for b in 0..d {
                    for i in 0..n {
                        for (v, c) in [(var(i, b), m[(a, i)]), (var(i, a), m[(b, i)])] {
                            if c != 0.0 {
                                terms.push(Triplet {
                                    var: v,
                                    row: a,
                                    col: b,
                                    coeff: 0.5 * sign * c,
                                });
                            }
                        }
                    }
                }
            }
            PsdBlock {
                name: name.into(),
                dim: d,
                offset,
                terms,
            }
        };
        let objective = match self.objective {
            Objective::Feasibility => None,
            Objective::MinTrace => {
                let mut c = Vec::new();
                for a in 0..d {
                    for i in 0..n {
                        push_nonzero(&mut c, var(i, a), self.z[(a, i)]);
                    }
                }
                Some(c)
            }
        };
        SparseProgram {
            rows: n,
            cols: d,
            equalities,
            blocks: vec![
                sym_block("ZQ", &self.z, 1.0, 1.0),
                sym_block("-sym(WQ)", &self.w, -1.0, self.delta),
            ],
            objective,
        }
    }

    /// Self-contained JSON dump for offline solving.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Dump<'a> {
            label: &'a str,
            variable_shape: [usize; 2],
            variable_order: &'static str,
            delta: f64,
            #[serde(flatten)]
            program: SparseProgram,
        }
        Ok(serde_json::to_string_pretty(&Dump {
            label: &self.label,
            variable_shape: [self.samples(), self.dim()],
            variable_order: "row-major: Q[i][j] is variable i*d+j",
            delta: self.delta,
            program: self.to_sparse(),
        })?)
    }

    /// Residuals of a candidate `Q`, computed from the data matrices alone.
    pub fn residuals(&self, q: &Mat) -> Result<LmiResiduals> {
        if q.shape() != (self.samples(), self.dim()) {
            return Err(Error::dim(format!(
                "Q must be {}x{}",
                self.samples(),
                self.dim()
            )));
        }
        let zq = &self.z * q;
        let wq = &self.w * q;
        let zq_norm = zq.norm();
        Ok(LmiResiduals {
            symmetry: (&zq - zq.transpose()).norm(),
            zq_norm,
            min_eig_zq: numkit::min_sym_eigenvalue(&numkit::sym(&zq)),
            max_eig_sym_wq: numkit::max_sym_eigenvalue(&numkit::sym(&wq)),
        })
    }
}

fn push_nonzero(v: &mut Vec<(usize, f64)>, var: usize, c: f64) {
    if c != 0.0 {
        v.push((var, c));
    }
}

/// `W = Ż − [γI; 0]E` against `Z`.
pub fn encode_state_lmi(batch: &StateBatch, delta: f64) -> Result<LmiProblem> {
    batch.validate()?;
    LmiProblem::new(
        "state",
        batch.z.clone(),
        batch.compensated_derivative(),
        delta,
    )
}

/// `W = Ż_a` against `Z_a`.
pub fn encode_output_lmi(batch: &OutputBatch, delta: f64) -> Result<LmiProblem> {
    batch.validate()?;
    LmiProblem::new("output", batch.za.clone(), batch.zadot.clone(), delta)
}

/// `W = Ẋ` against `X`.
pub fn encode_baseline_lmi(batch: &BaselineBatch, delta: f64) -> Result<LmiProblem> {
    LmiProblem::new("baseline", batch.x.clone(), batch.xdot.clone(), delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmiResiduals {
    /// `‖ZQ − (ZQ)ᵀ‖_F`.
    pub symmetry: f64,
    pub zq_norm: f64,
    pub min_eig_zq: f64,
    pub max_eig_sym_wq: f64,
}

impl LmiResiduals {
    /// Violations of the solver contract, empty when it holds.
    pub fn violations(&self, delta: f64) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.symmetry <= SYMMETRY_TOL * self.zq_norm) {
            v.push(format!(
                "symmetry residual {:.3e} exceeds {:.1e}·‖ZQ‖ = {:.3e}",
                self.symmetry,
                SYMMETRY_TOL,
                SYMMETRY_TOL * self.zq_norm
            ));
        }
        if !(self.min_eig_zq >= 1.0 - LOWER_TOL) {
            v.push(format!("λmin(ZQ) = {:.6e} < 1", self.min_eig_zq));
        }
        if !(self.max_eig_sym_wq <= -delta * (1.0 - UPPER_TOL)) {
            v.push(format!(
                "λmax(sym WQ) = {:.6e} > −δ = {:.3e}",
                self.max_eig_sym_wq, -delta
            ));
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LmiStatus {
    Solved,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiSolution {
    pub status: LmiStatus,
    #[serde(with = "numkit::opt_mat")]
    pub q: Option<Mat>,
    pub residuals: Option<LmiResiduals>,
    pub backend: String,
    pub detail: String,
    #[serde(skip)]
    pub elapsed_s: f64,
}

impl LmiSolution {
    pub fn solved(&self) -> bool {
        self.status == LmiStatus::Solved
    }
}

/// What a backend reports.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendOutcome {
    Solved { q: Mat, detail: String },
    Infeasible { detail: String },
}

/// Any solver for [`SparseProgram`]s with PSD blocks and linear equalities.
pub trait SdpBackend {
    fn name(&self) -> &str;
    fn solve(&self, program: &SparseProgram) -> Result<BackendOutcome>;
}

/// Solve, then re-verify the answer from the data matrices.
pub fn solve(problem: &LmiProblem, backend: &dyn SdpBackend) -> Result<LmiSolution> {
    let start = Instant::now();
    if let Some(reason) = problem.rank_precheck()? {
        return Ok(LmiSolution {
            status: LmiStatus::Infeasible,
            q: None,
            residuals: None,
            backend: "rank-precheck".into(),
            detail: reason,
            elapsed_s: start.elapsed().as_secs_f64(),
        });
    }
    let outcome = backend.solve(&problem.to_sparse())?;
    let elapsed_s = start.elapsed().as_secs_f64();
    match outcome {
        BackendOutcome::Infeasible { detail } => Ok(LmiSolution {
            status: LmiStatus::Infeasible,
            q: None,
            residuals: None,
            backend: backend.name().into(),
            detail,
            elapsed_s,
        }),
        BackendOutcome::Solved { q, detail } => {
            let residuals = problem.residuals(&q)?;
            let violations = residuals.violations(problem.delta);
            if !violations.is_empty() {
                return Err(Error::SolverInconsistency(violations.join("; ")));
            }
            Ok(LmiSolution {
                status: LmiStatus::Solved,
                q: Some(q),
                residuals: Some(residuals),
                backend: backend.name().into(),
                detail,
                elapsed_s,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Barrier backend.

/// Interior-point backend for programs whose blocks are `L_j(x) ⪰ c_j I`
/// with `c_j ≥ 0`.
///
/// The program is homogeneous, so feasibility is decided by maximizing the
/// common margin `s` in `L_j(x) ⪰ s I` over the slice `Σ tr L_j(x) = Σ d_j`
/// (after eliminating the equalities and the kernel of the block map). A
/// positive optimum is rescaled to meet the offsets.
#[derive(Debug, Clone)]
pub struct BarrierBackend {
    /// Relative cutoff for the null-space and row-space bases.
    pub basis_tol: f64,
    pub max_outer: usize,
    pub max_newton: usize,
    /// Margin below which (relative to the normalization) the program is
    /// declared infeasible.
    pub infeasible_tol: f64,
    /// Multiplier applied to the rescaled solution so the offsets hold with
    /// a little room.
    pub rescale_slack: f64,
}

impl Default for BarrierBackend {
    fn default() -> Self {
        Self {
            basis_tol: 1e-12,
            max_outer: 60,
            max_newton: 80,
            infeasible_tol: 1e-10,
            rescale_slack: 1.0 + 1e-9,
        }
    }
}

/// `B(v) = C + L v` reshaped to `dim × dim`.
struct AffineBlock {
    dim: usize,
    constant: Vector,
    linear: Mat,
}

impl AffineBlock {
    fn eval(&self, v: &Vector) -> Mat {
        let flat = &self.constant + &self.linear * v;
        let m = Mat::from_row_slice(self.dim, self.dim, flat.as_slice());
        numkit::sym(&m)
    }
}

fn log_det_pd(m: &Mat) -> Option<f64> {
    let chol = Cholesky::new(m.clone())?;
    let l = chol.l();
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        let d = l[(i, i)];
        if !(d > 0.0) {
            return None;
        }
        acc += d.ln();
    }
    Some(2.0 * acc)
}

/// `c·v − Σ log det B_j(v)`, `None` outside the domain.
fn barrier_value(blocks: &[AffineBlock], c: &Vector, v: &Vector) -> Option<f64> {
    let mut f = c.dot(v);
    for b in blocks {
        f -= log_det_pd(&b.eval(v))?;
    }
    f.is_finite().then_some(f)
}

/// Damped Newton minimization of [`barrier_value`] from a strictly feasible
/// `v`.
fn center(blocks: &[AffineBlock], c: &Vector, mut v: Vector, max_iter: usize) -> Result<Vector> {
    let k = v.len();
    for _ in 0..max_iter {
        let mut g = c.clone();
        let mut h = Mat::zeros(k, k);
        for b in blocks {
            let m = b.eval(&v);
            let d = b.dim;
            let chol = Cholesky::new(m)
                .ok_or_else(|| Error::Numerical("barrier iterate left the cone".into()))?;
            let l_inv = chol
                .l()
                .solve_lower_triangular(&Mat::identity(d, d))
                .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
            // Columns of T are vec(L⁻¹ C_i L⁻ᵀ).
            let mut t = Mat::zeros(d * d, k);
            for i in 0..k {
                let ci = Mat::from_row_slice(d, d, b.linear.column(i).as_slice());
                let ti = &l_inv * numkit::sym(&ci) * l_inv.transpose();
                g[i] -= ti.trace();
                t.set_column(i, &Vector::from_row_slice(ti.transpose().as_slice()));
            }
            h += t.transpose() * &t;
        }
        let step = match Cholesky::new(h.clone()) {
            Some(ch) => -ch.solve(&g),
            None => {
                let ridge = 1e-12 * h.diagonal().amax().max(1e-300);
                let reg = &h + Mat::identity(k, k) * ridge;
                -reg.lu()
                    .solve(&g)
                    .ok_or_else(|| Error::Numerical("singular barrier Hessian".into()))?
            }
        };
        let decrement = -g.dot(&step);
        if !decrement.is_finite() {
            return Err(Error::Numerical("non-finite Newton decrement".into()));
        }
        if decrement / 2.0 < 1e-10 {
            break;
        }
        let f0 = barrier_value(blocks, c, &v)
            .ok_or_else(|| Error::Numerical("barrier iterate left the cone".into()))?;
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-14 {
            let cand = &v + &step * t;
            if let Some(f) = barrier_value(blocks, c, &cand) {
                if f <= f0 - 0.25 * t * decrement {
                    v = cand;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(v)
}

impl SdpBackend for BarrierBackend {
    fn name(&self) -> &str {
        "barrier"
    }

    fn solve(&self, program: &SparseProgram) -> Result<BackendOutcome> {
        if program.blocks.is_empty() {
            return Err(Error::Backend("program has no PSD blocks".into()));
        }
        if program
            .blocks
            .iter()
            .any(|b| !(b.offset >= 0.0) || b.dim == 0)
        {
            return Err(Error::Backend(
                "barrier backend needs nonnegative offsets and non-empty blocks".into(),
            ));
        }
        let p = program.num_vars();
        let maps: Vec<Mat> = program
            .blocks
            .iter()
            .map(|b| program.block_map(b))
            .collect();
        let n_eq = if program.equalities.is_empty() {
            Mat::identity(p, p)
        } else {
            numkit::null_space(&program.equality_matrix(), self.basis_tol)
        };
        let infeasible = |detail: String| Ok(BackendOutcome::Infeasible { detail });
        if n_eq.ncols() == 0 {
            return infeasible("equalities leave no free variables".into());
        }
        let reduced: Vec<Mat> = maps.iter().map(|m| m * &n_eq).collect();
        let stacked = numkit::vstack(&reduced.iter().collect::<Vec<_>>())?;
        let v_basis = numkit::row_space(&stacked, self.basis_tol);
        let r = v_basis.ncols();
        if r == 0 {
            return infeasible("all blocks vanish on the equality-feasible set".into());
        }
        let bz: Vec<Mat> = reduced.iter().map(|m| m * &v_basis).collect();
        let dims: Vec<usize> = program.blocks.iter().map(|b| b.dim).collect();
        let total: f64 = dims.iter().sum::<usize>() as f64;

        // Trace functional a·z = Σ_j tr B_j(z).
        let mut a = Vector::zeros(r);
        for (m, &d) in bz.iter().zip(&dims) {
            for k in 0..d {
                a += m.row(k * d + k).transpose();
            }
        }
        let a_norm2 = a.norm_squared();
        if a_norm2 <= f64::MIN_POSITIVE {
            return infeasible("every direction has zero total trace".into());
        }
        let z0 = &a * (total / a_norm2);
        let n_a = numkit::null_space(&Mat::from_row_slice(1, r, a.as_slice()), self.basis_tol);
        let q_dim = n_a.ncols();

        // Phase 1 variables v = (w, s): z = z0 + N_a w, blocks B_j(z) − s I.
        let phase1: Vec<AffineBlock> = bz
            .iter()
            .zip(&dims)
            .map(|(m, &d)| {
                let mut linear = Mat::zeros(d * d, q_dim + 1);
                linear
                    .view_mut((0, 0), (d * d, q_dim))
                    .copy_from(&(m * &n_a));
                for k in 0..d {
                    linear[(k * d + k, q_dim)] = -1.0;
                }
                AffineBlock {
                    dim: d,
                    constant: m * &z0,
                    linear,
                }
            })
            .collect();
        let min_eig0 = phase1
            .iter()
            .map(|b| numkit::min_sym_eigenvalue(&b.eval(&Vector::zeros(q_dim + 1))))
            .fold(f64::INFINITY, f64::min);
        let mut v = Vector::zeros(q_dim + 1);
        v[q_dim] = min_eig0 - 1.0;
        let mut mu = 1.0;
        let mut found = false;
        for _ in 0..self.max_outer {
            let mut c = Vector::zeros(q_dim + 1);
            c[q_dim] = -1.0 / mu;
            v = center(&phase1, &c, v, self.max_newton)?;
            let s = v[q_dim];
            let gap = mu * total;
            if s > 0.0 && gap < 0.1 * s {
                found = true;
                break;
            }
            if s + gap <= self.infeasible_tol {
                return infeasible(format!(
                    "maximal common margin bounded by {:.3e} on the normalized slice",
                    s + gap
                ));
            }
            mu *= 0.2;
        }
        let margin = v[q_dim];
        if !found && margin <= 0.0 {
            return infeasible(format!(
                "no positive margin after {} rounds (best {margin:.3e})",
                self.max_outer
            ));
        }
        let mut z = &z0 + &n_a * v.rows(0, q_dim);

        // Rescale so each block clears its offset.
        let scale_for = |z: &Vector| -> f64 {
            bz.iter()
                .zip(&program.blocks)
                .map(|(m, b)| {
                    let lam = numkit::min_sym_eigenvalue(&numkit::sym(&Mat::from_row_slice(
                        b.dim,
                        b.dim,
                        (m * z).as_slice(),
                    )));
                    b.offset / lam
                })
                .fold(0.0, f64::max)
        };
        z *= scale_for(&z).max(f64::MIN_POSITIVE) * self.rescale_slack;
        let mut detail = format!("margin {margin:.4e} on the normalized slice");

        if let Some(obj) = &program.objective {
            let mut c_full = Vector::zeros(p);
            for &(var, coeff) in obj {
                c_full[var] += coeff;
            }
            let c_z = (&n_eq * &v_basis).transpose() * c_full;
            let phase2: Vec<AffineBlock> = bz
                .iter()
                .zip(&program.blocks)
                .map(|(m, b)| {
                    let mut constant = Vector::zeros(b.dim * b.dim);
                    for k in 0..b.dim {
                        constant[k * b.dim + k] = -b.offset;
                    }
                    AffineBlock {
                        dim: b.dim,
                        constant,
                        linear: m.clone(),
                    }
                })
                .collect();
            // Start strictly inside: twice the offsets.
            let mut y = &z * 2.0;
            let mut t = 1.0 / c_z.dot(&y).abs().max(1.0);
            for _ in 0..self.max_outer {
                y = center(&phase2, &(&c_z * t), y, self.max_newton)?;
                if total / t < 1e-7 * c_z.dot(&y).abs().max(1.0) {
                    break;
                }
                t *= 5.0;
            }
            z = &y * (scale_for(&y).max(1.0) * self.rescale_slack);
            detail.push_str(&format!("; objective {:.6e}", c_z.dot(&z)));
        }

        let x = &n_eq * (&v_basis * z);
        let q = Mat::from_row_slice(program.rows, program.cols, x.as_slice());
        Ok(BackendOutcome::Solved { q, detail })
    }
}

// ---------------------------------------------------------------------------
// Gains.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certification {
    Certified,
    Failed,
    /// No ground truth to check against.
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainResult {
    #[serde(with = "numkit::mat_rows")]
    pub k: Mat,
    /// Unprojected `[K_χ K]` (output case only).
    #[serde(with = "numkit::opt_mat")]
    pub k_full: Option<Mat>,
    #[serde(with = "numkit::opt_mat")]
    pub closed_loop: Option<Mat>,
    pub eigenvalues: Option<Vec<Complex64>>,
    pub abscissa: Option<f64>,
    pub certification: Certification,
}

impl GainResult {
    pub fn certified(&self) -> bool {
        self.certification == Certification::Certified
    }

    fn uncertified(k: Mat, k_full: Option<Mat>) -> Self {
        Self {
            k,
            k_full,
            closed_loop: None,
            eigenvalues: None,
            abscissa: None,
            certification: Certification::Unknown,
        }
    }

    fn certify(mut self, closed: Mat, margin: f64) -> Result<Self> {
        let spec = numkit::spectrum(&closed)?;
        let abscissa = spec.abscissa();
        self.certification = if abscissa < -margin {
            Certification::Certified
        } else {
            Certification::Failed
        };
        self.eigenvalues = Some(spec.eigenvalues);
        self.abscissa = Some(abscissa);
        self.closed_loop = Some(closed);
        Ok(self)
    }
}

/// `U Q (Z Q)⁻¹`.
pub fn gain_from_data(u: &Mat, z: &Mat, q: &Mat) -> Result<Mat> {
    let zq = z * q;
    let uq = u * q;
    let kt = numkit::solve_linear(&zq.transpose(), &uq.transpose()).map_err(|e| match e {
        Error::Singular { condition, .. } => Error::Singular {
            condition,
            context: "ZQ in gain extraction (contract requires ZQ ⪰ I)".into(),
        },
        other => other,
    })?;
    Ok(kt.transpose())
}

/// `K = UQ(ZQ)⁻¹`, certified on `F + GK` when a ground-truth realization is
/// given.
pub fn gain_state(
    batch: &StateBatch,
    q: &Mat,
    truth: Option<&StateRealization>,
    margin: f64,
) -> Result<GainResult> {
    let k = gain_from_data(&batch.u, &batch.z, q)?;
    let res = GainResult::uncertified(k, None);
    match truth {
        Some(real) => {
            let closed = &real.f + &real.g * &res.k;
            res.certify(closed, margin)
        }
        None => Ok(res),
    }
}

/// `[K_χ K] = UQ(Z_aQ)⁻¹`, projected onto the last `2n` entries and
/// certified on `F + gK` with the oracle realization when given.
pub fn gain_output(
    batch: &OutputBatch,
    q: &Mat,
    truth: Option<&OutputRealization>,
    margin: f64,
) -> Result<GainResult> {
    let n = batch.n();
    let full = gain_from_data(&batch.u, &batch.za, q)?;
    let k = full.columns(n, 2 * n).into_owned();
    let res = GainResult::uncertified(k, Some(full));
    match truth {
        Some(real) => {
            let closed = &real.f + real.g_mat() * &res.k;
            res.certify(closed, margin)
        }
        None => Ok(res),
    }
}

/// `[[Λ, 0], [DL + gK_χ, F + gK]]`, the virtual closed loop under the
/// unprojected gain.
pub fn output_augmented_closed_loop(
    real: &OutputRealization,
    big_lambda: &Mat,
    k_full: &Mat,
) -> Result<Mat> {
    let n = big_lambda.nrows();
    if k_full.shape() != (1, 3 * n) {
        return Err(Error::dim(format!("[K_chi K] must be 1x{}", 3 * n)));
    }
    let g = real.g_mat();
    let mut m = Mat::zeros(3 * n, 3 * n);
    m.view_mut((0, 0), (n, n)).copy_from(big_lambda);
    m.view_mut((n, 0), (2 * n, n))
        .copy_from(&(&real.d * &real.l + &g * k_full.columns(0, n)));
    m.view_mut((n, n), (2 * n, 2 * n))
        .copy_from(&(&real.f + &g * k_full.columns(n, 2 * n)));
    Ok(m)
}

/// `K = UQ(XQ)⁻¹`, certified on `A + BK`.
pub fn gain_baseline(
    batch: &BaselineBatch,
    q: &Mat,
    truth: Option<&StatePlant>,
    margin: f64,
) -> Result<GainResult> {
    let k = gain_from_data(&batch.u, &batch.x, q)?;
    let res = GainResult::uncertified(k, None);
    match truth {
        Some(plant) => {
            let closed = &plant.a + &plant.b * &res.k;
            res.certify(closed, margin)
        }
        None => Ok(res),
    }
}

/// Least-squares `[F̂ Ĝ] = (Ż − DE) · pinv([Z; U])`.
pub fn identify_fg(batch: &StateBatch) -> Result<(Mat, Mat)> {
    let reg = batch.regressor();
    let required = batch.n() + 2 * batch.m();
    let rank = numkit::numerical_rank(&reg)?;
    if rank.rank < required {
        return Err(Error::Identification {
            achieved: rank.rank,
            required,
        });
    }
    let theta = batch.compensated_derivative() * numkit::pinv(&reg, 1e-13)?;
    let nm = batch.n() + batch.m();
    Ok((
        theta.columns(0, nm).into_owned(),
        theta.columns(nm, batch.m()).into_owned(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_problem() -> LmiProblem {
        // ẋ = x + u sampled exactly: Z = X, W = Ẋ = X + U.
        let x = numkit::mat(1, 3, &[1.0, 0.5, -0.2]);
        let u = numkit::mat(1, 3, &[-3.0, 0.1, 0.4]);
        LmiProblem::new("scalar", x.clone(), &x + &u, DEFAULT_DELTA).unwrap()
    }

    #[test]
    fn scalar_problem_is_feasible_and_certified() {
        let p = scalar_problem();
        let sol = solve(&p, &BarrierBackend::default()).unwrap();
        assert!(sol.solved());
        let q = sol.q.unwrap();
        let k = gain_from_data(&numkit::mat(1, 3, &[-3.0, 0.1, 0.4]), &p.z, &q).unwrap();
        assert!(1.0 + k[(0, 0)] < 0.0, "k = {k}");
    }

    #[test]
    fn zero_z_is_infeasible() {
        let p = LmiProblem::new("zero", Mat::zeros(2, 5), Mat::zeros(2, 5), 1e-3).unwrap();
        let sol = solve(&p, &BarrierBackend::default()).unwrap();
        assert_eq!(sol.status, LmiStatus::Infeasible);
    }

    #[test]
    fn too_few_samples_flagged_before_solving() {
        let p = LmiProblem::new("short", Mat::identity(3, 2), Mat::identity(3, 2), 1e-3).unwrap();
        assert!(p.rank_precheck().unwrap().is_some());
        let sol = solve(&p, &BarrierBackend::default()).unwrap();
        assert_eq!(sol.backend, "rank-precheck");
    }

    #[test]
    fn backend_detects_infeasibility_with_full_rank_z() {
        // ẋ = x with u ≡ 0 is not stabilizable: W = Z forces sym(ZQ) ≺ 0.
        let z = numkit::mat(1, 3, &[1.0, 2.0, 3.0]);
        let p = LmiProblem::new("unstable", z.clone(), z, 1e-3).unwrap();
        assert!(p.rank_precheck().unwrap().is_none());
        let sol = solve(&p, &BarrierBackend::default()).unwrap();
        assert_eq!(sol.status, LmiStatus::Infeasible);
    }

    #[test]
    fn doubled_solution_still_satisfies_constraints() {
        let p = scalar_problem();
        let q = solve(&p, &BarrierBackend::default()).unwrap().q.unwrap();
        let r = p.residuals(&(&q * 2.0)).unwrap();
        assert!(r.violations(p.delta).is_empty());
    }

    #[test]
    fn min_trace_objective_tightens_zq() {
        let p = scalar_problem().with_objective(Objective::MinTrace);
        let sol = solve(&p, &BarrierBackend::default()).unwrap();
        let r = sol.residuals.unwrap();
        // The lower bound is active at the optimum or the δ bound is.
        assert!(r.min_eig_zq < 1.0 + 1e-3 || r.max_eig_sym_wq > -p.delta * 1.01);
    }

    #[test]
    fn sparse_form_reproduces_data_products() {
        let p = LmiProblem::new(
            "t",
            numkit::mat(2, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 3.0]),
            numkit::mat(2, 3, &[0.3, -2.0, 1.0, 4.0, 0.0, -1.0]),
            1e-3,
        )
        .unwrap();
        let sp = p.to_sparse();
        let q = numkit::mat(3, 2, &[0.2, -1.0, 0.7, 0.4, -0.3, 1.1]);
        let x = Vector::from_row_slice(q.transpose().as_slice());
        let zq = numkit::sym(&(&p.z * &q));
        let got = sp.block_map(&sp.blocks[0]) * &x;
        assert!((Mat::from_row_slice(2, 2, got.as_slice()) - zq).norm() < 1e-14);
        let wq = numkit::sym(&(&p.w * &q));
        let got = sp.block_map(&sp.blocks[1]) * &x;
        assert!((Mat::from_row_slice(2, 2, got.as_slice()) + wq).norm() < 1e-14);
        let asym = (&p.z * &q)[(0, 1)] - (&p.z * &q)[(1, 0)];
        assert!(((sp.equality_matrix() * &x)[0] - asym).abs() < 1e-14);
    }

    #[test]
    fn problem_dump_is_valid_json() {
        let v: serde_json::Value =
            serde_json::from_str(&scalar_problem().to_json().unwrap()).unwrap();
        assert_eq!(v["variable_shape"], serde_json::json!([3, 1]));
        assert_eq!(v["blocks"].as_array().unwrap().len(), 2);
    }
}
