//! Dense small-matrix numerics: matrix exponential, eigenvalues, ranks,
//! linear and stacked Sylvester-type solves, stability tests.
//!
//! Everything here is pure. Matrices are nalgebra `DMatrix<f64>`; callers
//! get dimension errors instead of panics for malformed input.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Eigenvalues of a real square matrix together with a verified residual
/// bound: every eigenvalue `λ` has a unit vector `v` with
/// `‖Mv − λv‖ ≤ residual_bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    pub residual_bound: f64,
}

impl Spectrum {
    /// Largest real part.
    pub fn abscissa(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankResult {
    pub rank: usize,
    /// Descending.
    pub singular_values: Vec<f64>,
    pub tolerance_used: f64,
}

impl RankResult {
    /// The `k`-th singular value (1-based), zero when it does not exist.
    pub fn sigma(&self, k: usize) -> f64 {
        if k == 0 {
            return f64::INFINITY;
        }
        self.singular_values.get(k - 1).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurwitzTest {
    pub hurwitz: bool,
    pub abscissa: f64,
}

pub fn check_finite(m: &Mat, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

fn check_square(m: &Mat, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::dim(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Induced 1-norm (max column sum).
pub fn norm1(m: &Mat) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Symmetric part `(M + Mᵀ)/2`.
pub fn sym(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

// Padé(13) coefficients and the scaling threshold theta_13.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant.
pub fn expm(m: &Mat) -> Result<Mat> {
    check_square(m, "expm argument")?;
    check_finite(m, "expm argument")?;
    let n = m.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let norm = norm1(m);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = m / 2f64.powi(squarings);
    let b = &PADE13;
    let ident = Mat::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];

    let denom = &v - &u;
    let numer = &v + &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .ok_or_else(|| Error::Numerical("expm: singular Padé denominator".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    check_finite(&r, "expm result")?;
    Ok(r)
}

/// Eigenvalues via real Schur decomposition, sorted by real part then
/// imaginary part so conjugate pairs sit next to each other.
pub fn spectrum(m: &Mat) -> Result<Spectrum> {
    check_square(m, "spectrum argument")?;
    check_finite(m, "spectrum argument")?;
    let n = m.nrows();
    if n == 0 {
        return Ok(Spectrum {
            eigenvalues: vec![],
            residual_bound: 0.0,
        });
    }
    // Repeated eigenvalues can stall deflation at machine epsilon; loosen it
    // step by step. The residual bound below guards the result either way.
    let schur = [1.0, 16.0, 256.0, 4096.0]
        .iter()
        .find_map(|&k| Schur::try_new(m.clone(), k * f64::EPSILON, 10_000))
        .ok_or_else(|| {
            Error::Numerical(format!(
                "Schur iteration did not converge for {n}x{n} matrix with 1-norm {:.3e}",
                norm1(m)
            ))
        })?;
    let mut eigenvalues: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));

    let mc = m.map(|v| Complex64::new(v, 0.0));
    let mut residual_bound: f64 = 0.0;
    for lam in &eigenvalues {
        let mut shifted = mc.clone();
        for i in 0..n {
            shifted[(i, i)] -= *lam;
        }
        let sv = shifted.singular_values();
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        residual_bound = residual_bound.max(smin);
    }
    Ok(Spectrum {
        eigenvalues,
        residual_bound,
    })
}

/// True iff every eigenvalue has real part below `-margin`.
pub fn is_hurwitz(m: &Mat, margin: f64) -> Result<HurwitzTest> {
    if margin < 0.0 {
        return Err(Error::InvalidParameter(
            "Hurwitz margin must be >= 0".into(),
        ));
    }
    let abscissa = spectrum(m)?.abscissa();
    Ok(HurwitzTest {
        hurwitz: abscissa < -margin,
        abscissa,
    })
}

/// Singular values in descending order.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return vec![];
    }
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Rank with the default tolerance `max(rows, cols) · σ_max · 1e-12`.
pub fn numerical_rank(m: &Mat) -> Result<RankResult> {
    check_finite(m, "rank argument")?;
    let sv = singular_values(m);
    let smax = sv.first().copied().unwrap_or(0.0);
    let tol = m.nrows().max(m.ncols()) as f64 * smax * 1e-12;
    Ok(rank_from(sv, tol))
}

pub fn numerical_rank_with_tol(m: &Mat, tol: f64) -> Result<RankResult> {
    check_finite(m, "rank argument")?;
    Ok(rank_from(singular_values(m), tol))
}

fn rank_from(singular_values: Vec<f64>, tol: f64) -> RankResult {
    let rank = singular_values.iter().filter(|&&s| s > tol).count();
    RankResult {
        rank,
        singular_values,
        tolerance_used: tol,
    }
}

/// Condition number in the 2-norm (infinite for singular matrices).
pub fn condition_number(m: &Mat) -> f64 {
    let sv = singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

const MAX_CONDITION: f64 = 1e13;

/// Solve `A X = B` for square nonsingular `A`.
pub fn solve_linear(a: &Mat, b: &Mat) -> Result<Mat> {
    check_square(a, "coefficient matrix")?;
    if b.nrows() != a.nrows() {
        return Err(Error::dim(format!(
            "right-hand side has {} rows, coefficient matrix {}",
            b.nrows(),
            a.nrows()
        )));
    }
    check_finite(a, "coefficient matrix")?;
    check_finite(b, "right-hand side")?;
    let condition = condition_number(a);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::Singular {
            condition,
            context: "solve_linear".into(),
        });
    }
    a.clone().lu().solve(b).ok_or(Error::Singular {
        condition,
        context: "solve_linear (LU)".into(),
    })
}

/// Minimum-norm least-squares solution of `A X ≈ B`, discarding singular
/// values below `rel_tol · σ_max`.
pub fn solve_least_squares(a: &Mat, b: &Mat, rel_tol: f64) -> Result<Mat> {
    if b.nrows() != a.nrows() {
        return Err(Error::dim(format!(
            "right-hand side has {} rows, coefficient matrix {}",
            b.nrows(),
            a.nrows()
        )));
    }
    check_finite(a, "coefficient matrix")?;
    check_finite(b, "right-hand side")?;
    if a.ncols() == 0 {
        return Ok(Mat::zeros(0, b.ncols()));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    svd.solve(b, rel_tol * smax)
        .map_err(|e| Error::Numerical(format!("least squares: {e}")))
}

/// Moore–Penrose pseudo-inverse with relative cutoff.
pub fn pinv(a: &Mat, rel_tol: f64) -> Result<Mat> {
    solve_least_squares(a, &Mat::identity(a.nrows(), a.nrows()), rel_tol)
}

/// Orthonormal basis (as columns) of the null space of `m`.
pub fn null_space(m: &Mat, rel_tol: f64) -> Mat {
    let cols = m.ncols();
    if cols == 0 {
        return Mat::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return Mat::identity(cols, cols);
    }
    // Pad to at least square so the SVD returns a full right basis.
    let rows = m.nrows().max(cols);
    let mut padded = Mat::zeros(rows, cols);
    padded.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = rel_tol * smax;
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| smax == 0.0 || svd.singular_values[i] <= cutoff)
        .collect();
    let mut basis = Mat::zeros(cols, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        basis.set_column(j, &vt.row(i).transpose());
    }
    basis
}

/// Orthonormal basis of the row space of `m` (right singular vectors with
/// singular value above `rel_tol · σ_max`).
pub fn row_space(m: &Mat, rel_tol: f64) -> Mat {
    let cols = m.ncols();
    if cols == 0 || m.nrows() == 0 {
        return Mat::zeros(cols, 0);
    }
    let rows = m.nrows().max(cols);
    let mut padded = Mat::zeros(rows, cols);
    padded.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return Mat::zeros(cols, 0);
    }
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > rel_tol * smax)
        .collect();
    let mut basis = Mat::zeros(cols, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        basis.set_column(j, &vt.row(i).transpose());
    }
    basis
}

/// One term `L · X · R` of a linear matrix equation in the unknown `X`.
#[derive(Debug, Clone)]
pub struct Term {
    pub left: Mat,
    pub right: Mat,
}

impl Term {
    pub fn new(left: Mat, right: Mat) -> Self {
        Self { left, right }
    }
}

/// `Σ L_i X R_i = rhs`.
#[derive(Debug, Clone)]
pub struct MatrixEquation {
    pub terms: Vec<Term>,
    pub rhs: Mat,
    pub label: String,
}

/// Solve a set of coupled linear matrix equations in one unknown `X`
/// (`rows × cols`) by vectorization, `vec(L X R) = (Rᵀ ⊗ L) vec X`, and a
/// least-squares solve of the stacked system. Each equation must be
/// satisfied to `rel_tol` relative residual, otherwise the system is
/// reported inconsistent.
pub fn solve_sylvester_stacked(
    rows: usize,
    cols: usize,
    equations: &[MatrixEquation],
    rel_tol: f64,
) -> Result<Mat> {
    let unknowns = rows * cols;
    let mut total_rows = 0;
    for eq in equations {
        for t in &eq.terms {
            if t.left.ncols() != rows
                || t.right.nrows() != cols
                || t.left.nrows() != eq.rhs.nrows()
                || t.right.ncols() != eq.rhs.ncols()
            {
                return Err(Error::dim(format!(
                    "term of equation '{}' does not match unknown {rows}x{cols} / rhs {}x{}",
                    eq.label,
                    eq.rhs.nrows(),
                    eq.rhs.ncols()
                )));
            }
        }
        total_rows += eq.rhs.len();
    }
    let mut big = Mat::zeros(total_rows, unknowns);
    let mut rhs = Mat::zeros(total_rows, 1);
    let mut offset = 0;
    for eq in equations {
        let len = eq.rhs.len();
        for t in &eq.terms {
            let block = t.right.transpose().kronecker(&t.left);
            let mut view = big.view_mut((offset, 0), (len, unknowns));
            view += block;
        }
        for (k, v) in eq.rhs.iter().enumerate() {
            rhs[(offset + k, 0)] = *v;
        }
        offset += len;
    }
    let vec_x = solve_least_squares(&big, &rhs, 1e-13)?;
    let x = Mat::from_column_slice(rows, cols, vec_x.as_slice());

    let xnorm = x.norm();
    for eq in equations {
        let mut lhs = Mat::zeros(eq.rhs.nrows(), eq.rhs.ncols());
        let mut scale = eq.rhs.norm();
        for t in &eq.terms {
            lhs += &t.left * &x * &t.right;
            scale = scale.max(t.left.norm() * xnorm * t.right.norm());
        }
        let residual = (lhs - &eq.rhs).norm() / scale.max(1.0);
        if !(residual <= rel_tol) {
            return Err(Error::Inconsistent {
                residual,
                context: eq.label.clone(),
            });
        }
    }
    Ok(x)
}

/// Solve `Aᵀ P + P A = −Q`.
pub fn solve_lyapunov(a: &Mat, q: &Mat) -> Result<Mat> {
    check_square(a, "Lyapunov matrix")?;
    let n = a.nrows();
    if q.shape() != (n, n) {
        return Err(Error::dim("Lyapunov right-hand side shape"));
    }
    let eqs = [MatrixEquation {
        terms: vec![
            Term::new(a.transpose(), Mat::identity(n, n)),
            Term::new(Mat::identity(n, n), a.clone()),
        ],
        rhs: -q,
        label: "Lyapunov".into(),
    }];
    let kron = Mat::identity(n, n).kronecker(&a.transpose())
        + a.transpose().kronecker(&Mat::identity(n, n));
    let condition = condition_number(&kron);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::Singular {
            condition,
            context: "Lyapunov operator".into(),
        });
    }
    solve_sylvester_stacked(n, n, &eqs, 1e-8)
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 {
        return vec![];
    }
    let mut ev: Vec<f64> = sym(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_sym_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

pub fn max_sym_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m)
        .last()
        .copied()
        .unwrap_or(f64::NEG_INFINITY)
}

/// `[B, AB, …, A^{n-1}B]`.
pub fn controllability_matrix(a: &Mat, b: &Mat) -> Result<Mat> {
    check_square(a, "state matrix")?;
    if b.nrows() != a.nrows() {
        return Err(Error::dim("input matrix rows must match state dimension"));
    }
    let n = a.nrows();
    let m = b.ncols();
    let mut out = Mat::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        out.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    Ok(out)
}

pub fn controllability_rank(a: &Mat, b: &Mat) -> Result<usize> {
    Ok(numerical_rank(&controllability_matrix(a, b)?)?.rank)
}

/// Rank of the observability matrix of `(C, A)`.
pub fn observability_rank(c: &Mat, a: &Mat) -> Result<usize> {
    Ok(numerical_rank(&controllability_matrix(&a.transpose(), &c.transpose())?)?.rank)
}

/// Smallest achievable worst-case distance when pairing the two eigenvalue
/// lists one-to-one. Lists of different length never match.
pub fn spectral_match_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    fn search(
        a: &[Complex64],
        b: &[Complex64],
        used: &mut [bool],
        i: usize,
        cur: f64,
        best: &mut f64,
    ) {
        if cur >= *best {
            return;
        }
        if i == a.len() {
            *best = cur;
            return;
        }
        for j in 0..b.len() {
            if !used[j] {
                used[j] = true;
                search(a, b, used, i + 1, cur.max((a[i] - b[j]).norm()), best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    search(a, b, &mut vec![false; b.len()], 0, 0.0, &mut best);
    if a.is_empty() {
        0.0
    } else {
        best
    }
}

/// Row-major constructor used throughout the crate.
pub fn mat(rows: usize, cols: usize, data: &[f64]) -> Mat {
    Mat::from_row_slice(rows, cols, data)
}

/// Rows as nested vectors (JSON friendly).
pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::dim("ragged matrix rows"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let m = Mat::from_row_slice(r, c, &flat);
    check_finite(&m, "matrix literal")?;
    Ok(m)
}

/// Block-diagonal concatenation.
pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Vertical stack; all blocks must share the column count.
pub fn vstack(blocks: &[&Mat]) -> Result<Mat> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    if blocks.iter().any(|b| b.ncols() != cols) {
        return Err(Error::dim("vstack: column counts differ"));
    }
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), b.shape()).copy_from(*b);
        r += b.nrows();
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Serde adapters: matrices as nested row arrays.

pub mod mat_rows {
    use crate::numkit::Mat;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
        crate::numkit::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        if rows.is_empty() {
            return Ok(Mat::zeros(0, 0));
        }
        crate::numkit::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub mod opt_mat {
    use crate::numkit::Mat;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<Mat>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(crate::numkit::to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Mat>, D::Error> {
        match Option::<Vec<Vec<f64>>>::deserialize(d)? {
            None => Ok(None),
            Some(rows) if rows.is_empty() => Ok(Some(Mat::zeros(0, 0))),
            Some(rows) => crate::numkit::from_rows(&rows)
                .map(Some)
                .map_err(serde::de::Error::custom),
        }
    }
}
