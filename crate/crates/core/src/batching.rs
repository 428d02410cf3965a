//! Sampled data batches and excitation diagnostics.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti_sim::{fmt17, sample, Channel, Trajectory};
use crate::numkit::{self, Mat, Vector};
use crate::realization::{
    compensation_matrix, error_batch, OutputFilterParams, OutputRealization, StateFilterParams,
    StateRealization, CHI_BLOCK, FILTER_BLOCK, PLANT_BLOCK,
};

/// `U`, `Z`, `Ż`, `E` sampled from a state-filter run.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBatch {
    pub u: Mat,
    pub z: Mat,
    pub zdot: Mat,
    pub e: Mat,
    pub ts: f64,
    pub params: StateFilterParams,
    pub x0: Vector,
}

impl StateBatch {
    pub fn new(
        u: Mat,
        z: Mat,
        zdot: Mat,
        x0: Vector,
        params: StateFilterParams,
        ts: f64,
    ) -> Result<Self> {
        params.validate()?;
        let cols = u.ncols();
        let e = error_batch(&x0, params.lambda, ts, cols)?;
        let batch = Self {
            u,
            z,
            zdot,
            e,
            ts,
            params,
            x0,
        };
        batch.validate()?;
        Ok(batch)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m, cols) = (self.n(), self.m(), self.len());
        if cols == 0 {
            return Err(Error::dim("batch has no samples"));
        }
        if self.z.shape() != (n + m, cols) || self.zdot.shape() != (n + m, cols) {
            return Err(Error::dim(format!("Z and Zdot must be {}x{cols}", n + m)));
        }
        if self.e.shape() != (n, cols) {
            return Err(Error::dim(format!("E must be {n}x{cols}")));
        }
        for (m, name) in [
            (&self.u, "U"),
            (&self.z, "Z"),
            (&self.zdot, "Zdot"),
            (&self.e, "E"),
        ] {
            numkit::check_finite(m, name)?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.x0.len()
    }

    pub fn m(&self) -> usize {
        self.u.nrows()
    }

    pub fn len(&self) -> usize {
        self.u.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `Ż − [γI; 0] E`, the derivative batch with the filter transient
    /// compensated.
    pub fn compensated_derivative(&self) -> Mat {
        &self.zdot - compensation_matrix(self.n(), self.m(), self.params.gamma) * &self.e
    }

    /// `[Z; U]`.
    pub fn regressor(&self) -> Mat {
        numkit::vstack(&[&self.z, &self.u]).expect("validated shapes")
    }

    /// `‖(Ż − DE) − (FZ + GU)‖ / (1 + ‖Ż‖)` against a ground-truth realization.
    pub fn identity_residual(&self, real: &StateRealization) -> f64 {
        let lhs = self.compensated_derivative();
        let rhs = &real.f * &self.z + &real.g * &self.u;
        (lhs - rhs).norm() / (1.0 + self.zdot.norm())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            u: &self.u * c,
            z: &self.z * c,
            zdot: &self.zdot * c,
            e: &self.e * c,
            x0: &self.x0 * c,
            ..self.clone()
        }
    }
}

/// `U`, `Z_a = [χ; ζ̂]`, `Ż_a` sampled from an output-filter run.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputBatch {
    pub u: Mat,
    pub za: Mat,
    pub zadot: Mat,
    pub ts: f64,
    pub params: OutputFilterParams,
}

impl OutputBatch {
    pub fn new(u: Mat, za: Mat, zadot: Mat, params: OutputFilterParams, ts: f64) -> Result<Self> {
        params.validate()?;
        let b = Self {
            u,
            za,
            zadot,
            ts,
            params,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, cols) = (self.n(), self.len());
        if cols == 0 {
            return Err(Error::dim("batch has no samples"));
        }
        if self.u.nrows() != 1 {
            return Err(Error::dim("output-feedback batches are single-input"));
        }
        if self.za.shape() != (3 * n, cols) || self.zadot.shape() != (3 * n, cols) {
            return Err(Error::dim(format!("Za and Zadot must be {}x{cols}", 3 * n)));
        }
        for (m, name) in [(&self.u, "U"), (&self.za, "Za"), (&self.zadot, "Zadot")] {
            numkit::check_finite(m, name)?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.params.n()
    }

    pub fn len(&self) -> usize {
        self.u.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Top `n` rows: sampled `χ` (a Vandermonde matrix).
    pub fn chi(&self) -> Mat {
        self.za.rows(0, self.n()).into_owned()
    }

    pub fn regressor(&self) -> Mat {
        numkit::vstack(&[&self.za, &self.u]).expect("validated shapes")
    }

    /// Residual of `Ż_a = [[Λ, 0], [DL, F]] Z_a + [0; g] U`, relative to
    /// `1 + ‖Ż_a‖`, with oracle `D`, `L`, `F`, `g`.
    pub fn identity_residual(&self, real: &OutputRealization) -> f64 {
        let n = self.n();
        let mut sys = Mat::zeros(3 * n, 3 * n);
        sys.view_mut((0, 0), (n, n))
            .copy_from(&self.params.big_lambda());
        sys.view_mut((n, 0), (2 * n, n))
            .copy_from(&(&real.d * &real.l));
        sys.view_mut((n, n), (2 * n, 2 * n)).copy_from(&real.f);
        let mut input = Mat::zeros(3 * n, 1);
        input.view_mut((n, 0), (2 * n, 1)).copy_from(&real.g_mat());
        let rhs = sys * &self.za + input * &self.u;
        (&self.zadot - rhs).norm() / (1.0 + self.zadot.norm())
    }
}

/// `U`, `X`, `Ẋ` with exact derivatives (comparison path only).
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineBatch {
    pub u: Mat,
    pub x: Mat,
    pub xdot: Mat,
    pub ts: f64,
}

impl BaselineBatch {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.u.nrows()
    }

    pub fn regressor(&self) -> Mat {
        numkit::vstack(&[&self.x, &self.u]).expect("validated shapes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationReport {
    pub required_rank: usize,
    pub achieved_rank: usize,
    /// `σ_required` of the stacked regressor (zero if it does not exist).
    pub smallest_relevant_singular_value: f64,
    pub rank_tolerance: f64,
    pub samples: usize,
    /// Smallest eigenvalue of the continuous-time data Gramian, when computed.
    pub gramian_mu: Option<f64>,
    /// Sample count suggested by the dimension/frequency count.
    pub recommended_n: Option<usize>,
    /// Rank of the `χ` rows alone (output case).
    pub chi_rank: Option<usize>,
    /// Samples needed for the `χ` block to reach full rank (output case).
    pub chi_min_n: Option<usize>,
}

impl ExcitationReport {
    pub fn exciting(&self) -> bool {
        self.achieved_rank == self.required_rank
    }

    fn from_regressor(regressor: &Mat, required: usize) -> Result<Self> {
        let r = numkit::numerical_rank(regressor)?;
        Ok(Self {
            required_rank: required,
            achieved_rank: r.rank.min(required),
            smallest_relevant_singular_value: r.sigma(required),
            rank_tolerance: r.tolerance_used,
            samples: regressor.ncols(),
            gramian_mu: None,
            recommended_n: None,
            chi_rank: None,
            chi_min_n: None,
        })
    }
}

fn zeta_channels() -> (Channel, Channel) {
    (
        Channel::State(FILTER_BLOCK.into()),
        Channel::Derivative(FILTER_BLOCK.into()),
    )
}

/// Sample `U`, `Z`, `Ż` from a state-filter trajectory at `t = kTs` and
/// attach `E` from the measured initial state.
pub fn build_state_batch(
    filter_traj: &Trajectory,
    x0: &Vector,
    params: &StateFilterParams,
    ts: f64,
    samples: usize,
) -> Result<StateBatch> {
    let (zc, dzc) = zeta_channels();
    let z = sample(filter_traj, ts, samples, &zc)?;
    let zdot = sample(filter_traj, ts, samples, &dzc)?;
    let u = sample(filter_traj, ts, samples, &Channel::Input)?;
    StateBatch::new(u, z, zdot, x0.clone(), *params, ts)
}

/// Sample `U`, `Z_a = [χ; ζ̂]` and `Ż_a`.
pub fn build_output_batch(
    filter_traj: &Trajectory,
    chi_traj: &Trajectory,
    params: &OutputFilterParams,
    ts: f64,
    samples: usize,
) -> Result<OutputBatch> {
    let (zc, dzc) = zeta_channels();
    let z = sample(filter_traj, ts, samples, &zc)?;
    let zdot = sample(filter_traj, ts, samples, &dzc)?;
    let u = sample(filter_traj, ts, samples, &Channel::Input)?;
    let chi = sample(chi_traj, ts, samples, &Channel::State(CHI_BLOCK.into()))?;
    let chidot = sample(
        chi_traj,
        ts,
        samples,
        &Channel::Derivative(CHI_BLOCK.into()),
    )?;
    OutputBatch::new(
        u,
        numkit::vstack(&[&chi, &z])?,
        numkit::vstack(&[&chidot, &zdot])?,
        params.clone(),
        ts,
    )
}

/// `U`, `X`, `Ẋ` from the plant block of a trajectory.
pub fn build_baseline_batch(traj: &Trajectory, ts: f64, samples: usize) -> Result<BaselineBatch> {
    Ok(BaselineBatch {
        u: sample(traj, ts, samples, &Channel::Input)?,
        x: sample(traj, ts, samples, &Channel::State(PLANT_BLOCK.into()))?,
        xdot: sample(traj, ts, samples, &Channel::Derivative(PLANT_BLOCK.into()))?,
        ts,
    })
}

/// Required rank `n + 2m` of `[Z; U]`.
pub fn check_excitation_state(batch: &StateBatch) -> Result<ExcitationReport> {
    let required = batch.n() + 2 * batch.m();
    let mut report = ExcitationReport::from_regressor(&batch.regressor(), required)?;
    report.recommended_n = Some(required);
    Ok(report)
}

/// Required rank `3n + 1` of `[Z_a; U]`. With `p` distinct exploration
/// frequencies the suggested sample count is `n + 2p`; the `χ` block alone
/// needs `N ≥ n`.
pub fn check_excitation_output(
    batch: &OutputBatch,
    distinct_frequencies: Option<usize>,
) -> Result<ExcitationReport> {
    let n = batch.n();
    let mut report = ExcitationReport::from_regressor(&batch.regressor(), 3 * n + 1)?;
    report.recommended_n = distinct_frequencies.map(|p| n + 2 * p);
    report.chi_rank = Some(numkit::numerical_rank(&batch.chi())?.rank);
    report.chi_min_n = Some(n);
    Ok(report)
}

/// Required rank `n + m` of `[X; U]`.
pub fn check_excitation_baseline(batch: &BaselineBatch) -> Result<ExcitationReport> {
    let required = batch.n() + batch.m();
    let mut report = ExcitationReport::from_regressor(&batch.regressor(), required)?;
    report.recommended_n = Some(required);
    Ok(report)
}

/// Smallest eigenvalue of `∫₀ᵀ [ζ̂; u][ζ̂; u]ᵀ dτ`, trapezoidal rule on the
/// trajectory grid.
pub fn gramian_mu(filter_traj: &Trajectory) -> Result<f64> {
    let z = filter_traj.channel(&Channel::State(FILTER_BLOCK.into()))?;
    let signals = numkit::vstack(&[&z, &filter_traj.inputs])?;
    let k = signals.ncols();
    let dim = signals.nrows();
    let mut gram = Mat::zeros(dim, dim);
    if k < 2 {
        return Ok(0.0);
    }
    for j in 0..k {
        let w = if j == 0 || j == k - 1 { 0.5 } else { 1.0 };
        let col = signals.column(j);
        gram.ger(w * filter_traj.step, &col, &col, 1.0);
    }
    Ok(numkit::min_sym_eigenvalue(&gram).max(0.0))
}

// ---------------------------------------------------------------------------
// Batch files: one CSV per matrix plus a JSON sidecar.

pub const SIDECAR: &str = "batch.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sidecar {
    State {
        n: usize,
        m: usize,
        #[serde(rename = "N")]
        samples: usize,
        #[serde(rename = "Ts")]
        ts: f64,
        lambda: f64,
        gamma: f64,
        x0: Vec<f64>,
    },
    Output {
        n: usize,
        m: usize,
        #[serde(rename = "N")]
        samples: usize,
        #[serde(rename = "Ts")]
        ts: f64,
        /// Diagonal of `Λ` (negative entries).
        #[serde(rename = "Lambda")]
        lambda_diag: Vec<f64>,
        ell: Vec<f64>,
    },
}

/// Either kind of design batch, as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Batch {
    State(StateBatch),
    Output(OutputBatch),
}

pub fn write_matrix_csv(path: &Path, m: &Mat) -> Result<()> {
    let mut text = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| fmt17(*v)).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<Mat> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1)))?);
    }
    numkit::from_rows(&rows)
}

fn expect_shape(m: &Mat, shape: (usize, usize), what: &str) -> Result<()> {
    if m.shape() != shape {
        return Err(Error::Format(format!(
            "{what} is {}x{}, sidecar implies {}x{}",
            m.nrows(),
            m.ncols(),
            shape.0,
            shape.1
        )));
    }
    Ok(())
}

impl Batch {
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let sidecar = match self {
            Batch::State(b) => {
                write_matrix_csv(&dir.join("U.csv"), &b.u)?;
                write_matrix_csv(&dir.join("Z.csv"), &b.z)?;
                write_matrix_csv(&dir.join("Zdot.csv"), &b.zdot)?;
                write_matrix_csv(&dir.join("E.csv"), &b.e)?;
                Sidecar::State {
                    n: b.n(),
                    m: b.m(),
                    samples: b.len(),
                    ts: b.ts,
                    lambda: b.params.lambda,
                    gamma: b.params.gamma,
                    x0: b.x0.iter().copied().collect(),
                }
            }
            Batch::Output(b) => {
                write_matrix_csv(&dir.join("U.csv"), &b.u)?;
                write_matrix_csv(&dir.join("Za.csv"), &b.za)?;
                write_matrix_csv(&dir.join("Zadot.csv"), &b.zadot)?;
                Sidecar::Output {
                    n: b.n(),
                    m: 1,
                    samples: b.len(),
                    ts: b.ts,
                    lambda_diag: b.params.lambdas.iter().map(|l| -l).collect(),
                    ell: b.params.gammas.clone(),
                }
            }
        };
        fs::write(dir.join(SIDECAR), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    /// Load a batch directory. `E` is recomputed from the sidecar `x0` and
    /// checked against `E.csv` when that file is present.
    pub fn read_dir(dir: &Path) -> Result<Batch> {
        let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(dir.join(SIDECAR))?)?;
        match sidecar {
            Sidecar::State {
                n,
                m,
                samples,
                ts,
                lambda,
                gamma,
                x0,
            } => {
                if x0.len() != n {
                    return Err(Error::Format("sidecar x0 length differs from n".into()));
                }
                let u = read_matrix_csv(&dir.join("U.csv"))?;
                let z = read_matrix_csv(&dir.join("Z.csv"))?;
                let zdot = read_matrix_csv(&dir.join("Zdot.csv"))?;
                expect_shape(&u, (m, samples), "U")?;
                expect_shape(&z, (n + m, samples), "Z")?;
                expect_shape(&zdot, (n + m, samples), "Zdot")?;
                let params = StateFilterParams::new(lambda, gamma)?;
                let batch = StateBatch::new(u, z, zdot, Vector::from_vec(x0), params, ts)?;
                let e_path = dir.join("E.csv");
                if e_path.exists() {
                    let e = read_matrix_csv(&e_path)?;
                    expect_shape(&e, (n, samples), "E")?;
                    let dev = (&e - &batch.e).norm() / (1.0 + batch.e.norm());
                    if dev > 1e-12 {
                        return Err(Error::Format(format!(
                            "E.csv disagrees with exp(-lambda t) x0 (relative {dev:.3e})"
                        )));
                    }
                }
                Ok(Batch::State(batch))
            }
            Sidecar::Output {
                n,
                m,
                samples,
                ts,
                lambda_diag,
                ell,
            } => {
                if m != 1 {
                    return Err(Error::Format("output batches must have m = 1".into()));
                }
                if lambda_diag.len() != n || ell.len() != n {
                    return Err(Error::Format(
                        "sidecar Lambda/ell length differs from n".into(),
                    ));
                }
                let params =
                    OutputFilterParams::new(lambda_diag.iter().map(|l| -l).collect(), ell)?;
                let u = read_matrix_csv(&dir.join("U.csv"))?;
                let za = read_matrix_csv(&dir.join("Za.csv"))?;
                let zadot = read_matrix_csv(&dir.join("Zadot.csv"))?;
                expect_shape(&u, (1, samples), "U")?;
                expect_shape(&za, (3 * n, samples), "Za")?;
                expect_shape(&zadot, (3 * n, samples), "Zadot")?;
                Ok(Batch::Output(OutputBatch::new(u, za, zadot, params, ts)?))
            }
        }
    }
}
