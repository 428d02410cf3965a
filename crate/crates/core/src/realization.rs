//! Low-pass filters that rebuild non-minimal realizations of the plant,
//! plus the ground-truth oracles (`F`, `G`, `D`, `θ`, `Π`, `H`, `L`) used to
//! verify them. The design path only ever touches the filters; the oracles
//! need the true plant and exist for certification and tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti_sim::{
    build_exosystem, simulate_cascade, Exosystem, Experiment, LtiBlock, OutputPlant, Source,
    StatePlant, Trajectory,
};
use crate::numkit::{self, Mat, MatrixEquation, Term, Vector};

/// Block names used in filter trajectories.
pub const PLANT_BLOCK: &str = "x";
pub const FILTER_BLOCK: &str = "zeta";
pub const CHI_BLOCK: &str = "chi";

/// Tuning of the state-feedback filter `ζ̂̇ = −λζ̂ + γ[x; u]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateFilterParams {
    pub lambda: f64,
    pub gamma: f64,
}

impl StateFilterParams {
    pub fn new(lambda: f64, gamma: f64) -> Result<Self> {
        let p = Self { lambda, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "filter pole lambda must be > 0, got {}",
                self.lambda
            )));
        }
        if self.gamma == 0.0 || !self.gamma.is_finite() {
            return Err(Error::InvalidParameter(
                "filter gain gamma must be nonzero".into(),
            ));
        }
        Ok(())
    }
}

/// Tuning `Λ = diag(−λ₁, …, −λₙ)`, `ℓ = (γ₁, …, γₙ)` of the output filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFilterParams {
    pub lambdas: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl OutputFilterParams {
    pub fn new(lambdas: Vec<f64>, gammas: Vec<f64>) -> Result<Self> {
        let p = Self { lambdas, gammas };
        p.validate()?;
        Ok(p)
    }

    /// Strictly increasing positive poles and nonzero gains make `(Λ, ℓ)`
    /// controllable by the PBH test.
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() || self.lambdas.len() != self.gammas.len() {
            return Err(Error::InvalidParameter(
                "need as many filter poles as gains (at least one)".into(),
            ));
        }
        if !self.lambdas.iter().all(|l| *l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidParameter(
                "filter poles must be positive".into(),
            ));
        }
        if self.lambdas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "filter poles must be strictly increasing".into(),
            ));
        }
        if self.gammas.iter().any(|g| *g == 0.0 || !g.is_finite()) {
            return Err(Error::InvalidParameter(
                "filter gains must be nonzero".into(),
            ));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.lambdas.len()
    }

    /// `Λ` (negative diagonal).
    pub fn big_lambda(&self) -> Mat {
        Mat::from_diagonal(&Vector::from_iterator(
            self.n(),
            self.lambdas.iter().map(|l| -l),
        ))
    }

    pub fn ell(&self) -> Vector {
        Vector::from_column_slice(&self.gammas)
    }

    pub fn ell_mat(&self) -> Mat {
        Mat::from_column_slice(self.n(), 1, &self.gammas)
    }
}

/// `F`, `G`, `D` of the state-feedback open-loop form.
#[derive(Debug, Clone, PartialEq)]
pub struct StateRealization {
    pub f: Mat,
    pub g: Mat,
    pub d: Mat,
}

impl StateRealization {
    /// `F = [[A, B], [0, −λI]]`, `G = [0; γI]`, `D = [γI; 0]`.
    pub fn from_plant(plant: &StatePlant, params: &StateFilterParams) -> Self {
        let (n, m) = (plant.n(), plant.m());
        let mut f = Mat::zeros(n + m, n + m);
        f.view_mut((0, 0), (n, n)).copy_from(&plant.a);
        f.view_mut((0, n), (n, m)).copy_from(&plant.b);
        f.view_mut((n, n), (m, m))
            .copy_from(&(Mat::identity(m, m) * -params.lambda));
        Self {
            f,
            g: compensation_input(n, m, params.gamma),
            d: compensation_matrix(n, m, params.gamma),
        }
    }
}

/// `D = [γI_n; 0]` (known from the tuning alone).
pub fn compensation_matrix(n: usize, m: usize, gamma: f64) -> Mat {
    let mut d = Mat::zeros(n + m, n);
    d.view_mut((0, 0), (n, n))
        .copy_from(&(Mat::identity(n, n) * gamma));
    d
}

/// `G = [0; γI_m]`.
pub fn compensation_input(n: usize, m: usize, gamma: f64) -> Mat {
    let mut g = Mat::zeros(n + m, m);
    g.view_mut((n, 0), (m, m))
        .copy_from(&(Mat::identity(m, m) * gamma));
    g
}

/// Output-feedback realization with its oracle quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputRealization {
    pub f: Mat,
    pub g: Vector,
    pub d: Mat,
    pub theta1: Vector,
    pub theta2: Vector,
    pub pi: Mat,
    pub h: Mat,
    pub l: Mat,
}

impl OutputRealization {
    pub fn from_oracle(
        plant: &OutputPlant,
        params: &OutputFilterParams,
        x0: &Vector,
    ) -> Result<Self> {
        let (theta1, theta2) = oracle_theta(plant, params)?;
        let o = oracle_pi_h_l(plant, params, &theta1, &theta2, x0)?;
        let n = plant.n();
        let mut d = Mat::zeros(2 * n, n);
        d.view_mut((0, 0), (n, n))
            .copy_from(&(params.ell_mat() * plant.c_row()));
        Ok(Self {
            f: output_f(params, &theta1, &theta2),
            g: output_g(params),
            d,
            theta1,
            theta2,
            pi: o.pi,
            h: o.h,
            l: o.l,
        })
    }

    pub fn g_mat(&self) -> Mat {
        Mat::from_column_slice(self.g.len(), 1, self.g.as_slice())
    }
}

/// `F = [[Λ + ℓθ₁ᵀ, ℓθ₂ᵀ], [0, Λ]]`.
pub fn output_f(params: &OutputFilterParams, theta1: &Vector, theta2: &Vector) -> Mat {
    let n = params.n();
    let lam = params.big_lambda();
    let ell = params.ell();
    let mut f = Mat::zeros(2 * n, 2 * n);
    f.view_mut((0, 0), (n, n))
        .copy_from(&(&lam + &ell * theta1.transpose()));
    f.view_mut((0, n), (n, n))
        .copy_from(&(&ell * theta2.transpose()));
    f.view_mut((n, n), (n, n)).copy_from(&lam);
    f
}

/// `g = [0; ℓ]`.
pub fn output_g(params: &OutputFilterParams) -> Vector {
    let n = params.n();
    let mut g = Vector::zeros(2 * n);
    g.rows_mut(n, n).copy_from(&params.ell());
    g
}

fn plant_block(a: &Mat, b: &Mat, x0: &Vector) -> Result<LtiBlock> {
    if x0.len() != a.nrows() {
        return Err(Error::dim(format!(
            "initial state has length {}, plant order is {}",
            x0.len(),
            a.nrows()
        )));
    }
    Ok(LtiBlock::new(PLANT_BLOCK, a.clone(), x0.clone()).driven_by(Source::Input, b.clone()))
}

fn exosystem_for(exp: &Experiment, m: usize) -> Result<Exosystem> {
    exp.signal.validate()?;
    if exp.signal.m() != m {
        return Err(Error::dim(format!(
            "signal has {} channels, plant has {m} inputs",
            exp.signal.m()
        )));
    }
    Ok(build_exosystem(&exp.signal))
}

/// Plant alone under the exploration input (blocks: `x`).
pub fn simulate_state_plant(plant: &StatePlant, exp: &Experiment) -> Result<Trajectory> {
    let exo = exosystem_for(exp, plant.m())?;
    let blocks = [plant_block(&plant.a, &plant.b, &exp.x0)?];
    simulate_cascade(&blocks, &exo, exp.horizon, exp.step)
}

/// Run the state-feedback filter on the measured `(x, u)` of an experiment,
/// starting from `ζ̂(0) = 0`. The trajectory has blocks `x` (the measured
/// state) and `zeta` (the filter), with exact filter derivatives.
pub fn run_state_filter(
    plant: &StatePlant,
    exp: &Experiment,
    params: &StateFilterParams,
) -> Result<Trajectory> {
    params.validate()?;
    let (n, m) = (plant.n(), plant.m());
    let exo = exosystem_for(exp, m)?;
    let filter = LtiBlock::new(
        FILTER_BLOCK,
        Mat::identity(n + m, n + m) * -params.lambda,
        Vector::zeros(n + m),
    )
    .driven_by(
        Source::Block(PLANT_BLOCK.into()),
        compensation_matrix(n, m, params.gamma),
    )
    .driven_by(Source::Input, compensation_input(n, m, params.gamma));
    let blocks = [plant_block(&plant.a, &plant.b, &exp.x0)?, filter];
    simulate_cascade(&blocks, &exo, exp.horizon, exp.step)
}

/// `ε = x − γ⁻¹[A + λI, B]ζ̂` along a state-filter trajectory (oracle).
pub fn state_mismatch(
    plant: &StatePlant,
    params: &StateFilterParams,
    traj: &Trajectory,
) -> Result<Mat> {
    let (n, m) = (plant.n(), plant.m());
    let x = traj.channel(&crate::lti_sim::Channel::State(PLANT_BLOCK.into()))?;
    let z = traj.channel(&crate::lti_sim::Channel::State(FILTER_BLOCK.into()))?;
    let mut map = Mat::zeros(n, n + m);
    map.view_mut((0, 0), (n, n))
        .copy_from(&(&plant.a + Mat::identity(n, n) * params.lambda));
    map.view_mut((0, n), (n, m)).copy_from(&plant.b);
    Ok(x - (map * z) / params.gamma)
}

/// `E[:, k] = e^{−λ k Ts} x0`.
pub fn error_batch(x0: &Vector, lambda: f64, ts: f64, n_samples: usize) -> Result<Mat> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter("lambda must be > 0".into()));
    }
    let mut e = Mat::zeros(x0.len(), n_samples);
    for k in 0..n_samples {
        e.set_column(k, &(x0 * (-lambda * k as f64 * ts).exp()));
    }
    Ok(e)
}

/// Run the output filter `ζ̂̇ = diag(Λ, Λ)ζ̂ + diag(ℓ, ℓ)[y; u]` from
/// `ζ̂(0) = 0`. Blocks: `x` (the plant, unmeasured) and `zeta`.
pub fn run_output_filter(
    plant: &OutputPlant,
    exp: &Experiment,
    params: &OutputFilterParams,
) -> Result<Trajectory> {
    params.validate()?;
    let n = plant.n();
    if params.n() != n {
        return Err(Error::dim(format!(
            "filter order {} differs from plant order {n}",
            params.n()
        )));
    }
    let exo = exosystem_for(exp, 1)?;
    let lam = params.big_lambda();
    let ell = params.ell_mat();
    let mut from_plant = Mat::zeros(2 * n, n);
    from_plant
        .view_mut((0, 0), (n, n))
        .copy_from(&(&ell * plant.c_row()));
    let mut from_input = Mat::zeros(2 * n, 1);
    from_input.view_mut((n, 0), (n, 1)).copy_from(&ell);
    let filter = LtiBlock::new(
        FILTER_BLOCK,
        numkit::block_diag(&[&lam, &lam]),
        Vector::zeros(2 * n),
    )
    .driven_by(Source::Block(PLANT_BLOCK.into()), from_plant)
    .driven_by(Source::Input, from_input);
    let blocks = [plant_block(&plant.a, &plant.b_mat(), &exp.x0)?, filter];
    simulate_cascade(&blocks, &exo, exp.horizon, exp.step)
}

/// `χ̇ = Λχ`, `χ(0) = 1`; block `chi`.
pub fn run_chi(params: &OutputFilterParams, horizon: f64, step: f64) -> Result<Trajectory> {
    params.validate()?;
    let n = params.n();
    let blk = LtiBlock::new(CHI_BLOCK, params.big_lambda(), Vector::from_element(n, 1.0));
    simulate_cascade(&[blk], &Exosystem::none(), horizon, step)
}

/// Characteristic polynomial and adjugate coefficients by Faddeev–LeVerrier:
/// `det(sI − A) = sⁿ + c₁sⁿ⁻¹ + … + cₙ` (returned as `[1, c₁, …, cₙ]`) and
/// `adj(sI − A) = Σₖ Bₖ s^{n−1−k}`.
pub fn faddeev_leverrier(a: &Mat) -> (Vec<f64>, Vec<Mat>) {
    let n = a.nrows();
    let mut coeffs = vec![1.0];
    let mut adj = Vec::with_capacity(n);
    let mut b = Mat::identity(n, n);
    for k in 1..=n {
        let ab = a * &b;
        let c = -ab.trace() / k as f64;
        coeffs.push(c);
        adj.push(b);
        b = ab + Mat::identity(n, n) * c;
    }
    (coeffs, adj)
}

/// Rows: coefficients of `s^{n−1}, …, s⁰` in `θᵀ adj(sI − Λ) ℓ`; columns: θ.
fn matching_matrix(params: &OutputFilterParams) -> Mat {
    let n = params.n();
    let (_, adj) = faddeev_leverrier(&params.big_lambda());
    let ell = params.ell();
    let mut m = Mat::zeros(n, n);
    for (k, bk) in adj.iter().enumerate() {
        m.set_row(k, &(bk * &ell).transpose());
    }
    m
}

/// `θ₁, θ₂` by transfer-function coefficient matching:
/// `det(sI−Λ) − θ₁ᵀadj(sI−Λ)ℓ = det(sI−A)` and
/// `θ₂ᵀadj(sI−Λ)ℓ = cᵀadj(sI−A)b`.
pub fn oracle_theta(plant: &OutputPlant, params: &OutputFilterParams) -> Result<(Vector, Vector)> {
    params.validate()?;
    let n = plant.n();
    if params.n() != n {
        return Err(Error::dim("filter order differs from plant order"));
    }
    let (den_a, adj_a) = faddeev_leverrier(&plant.a);
    let (den_l, _) = faddeev_leverrier(&params.big_lambda());
    let matching = matching_matrix(params);

    let rhs1 = Vector::from_iterator(n, (1..=n).map(|k| den_l[k] - den_a[k]));
    let rhs2 = Vector::from_iterator(n, adj_a.iter().map(|bk| plant.c.dot(&(bk * &plant.b))));
    let mut rhs = Mat::zeros(n, 2);
    rhs.set_column(0, &rhs1);
    rhs.set_column(1, &rhs2);
    let sol = numkit::solve_linear(&matching, &rhs).map_err(|e| match e {
        Error::Singular { condition, .. } => Error::InvalidParameter(format!(
            "coefficient-matching matrix is singular (condition {condition:.3e}); \
             filter poles must be distinct and gains nonzero"
        )),
        other => other,
    })?;
    let theta1 = sol.column(0).into_owned();
    let theta2 = sol.column(1).into_owned();

    let r1 = (&matching * &theta1 - &rhs1).norm() / rhs1.norm().max(1.0);
    let r2 = (&matching * &theta2 - &rhs2).norm() / rhs2.norm().max(1.0);
    if r1 > 1e-9 || r2 > 1e-9 {
        return Err(Error::Inconsistent {
            residual: r1.max(r2),
            context: "transfer-function coefficient matching".into(),
        });
    }
    Ok((theta1, theta2))
}

/// `Π`, `H`, `L` of the output realization.
#[derive(Debug, Clone, PartialEq)]
pub struct PiOracle {
    pub pi: Mat,
    pub h: Mat,
    pub l: Mat,
}

/// Solve `ΠF = AΠ`, `Πg = b`, `cᵀΠ = θᵀ` for `Π`, then diagonalize
/// `A − Π₁ℓcᵀ ~ Λ` with unit-norm eigenvectors `H` ordered like `Λ`, and
/// form `L = H · diag(H⁻¹ x0)` so that `ε(t) = Lχ(t)`.
pub fn oracle_pi_h_l(
    plant: &OutputPlant,
    params: &OutputFilterParams,
    theta1: &Vector,
    theta2: &Vector,
    x0: &Vector,
) -> Result<PiOracle> {
    let n = plant.n();
    if theta1.len() != n || theta2.len() != n || x0.len() != n || params.n() != n {
        return Err(Error::dim("oracle inputs must all have the plant order"));
    }
    let f = output_f(params, theta1, theta2);
    let g = output_g(params);
    let gm = Mat::from_column_slice(2 * n, 1, g.as_slice());
    let mut theta = Mat::zeros(1, 2 * n);
    theta
        .view_mut((0, 0), (1, n))
        .copy_from(&theta1.transpose());
    theta
        .view_mut((0, n), (1, n))
        .copy_from(&theta2.transpose());

    let equations = [
        MatrixEquation {
            terms: vec![
                Term::new(Mat::identity(n, n), f.clone()),
                Term::new(-&plant.a, Mat::identity(2 * n, 2 * n)),
            ],
            rhs: Mat::zeros(n, 2 * n),
            label: "Pi F = A Pi".into(),
        },
        MatrixEquation {
            terms: vec![Term::new(Mat::identity(n, n), gm)],
            rhs: plant.b_mat(),
            label: "Pi g = b".into(),
        },
        MatrixEquation {
            terms: vec![Term::new(plant.c_row(), Mat::identity(2 * n, 2 * n))],
            rhs: theta,
            label: "c' Pi = theta'".into(),
        },
    ];
    let pi = numkit::solve_sylvester_stacked(n, 2 * n, &equations, 1e-8)
        .map_err(|e| Error::Assumption(format!("no realization map Pi: {e}")))?;

    let pi1 = pi.columns(0, n).into_owned();
    let reduced = &plant.a - pi1 * params.ell_mat() * plant.c_row();
    let scale = reduced.norm().max(1.0);
    let mut h = Mat::zeros(n, n);
    for (i, lam) in params.lambdas.iter().enumerate() {
        let shifted = &reduced + Mat::identity(n, n) * *lam;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t.expect("requested v_t");
        let (idx, smin) = svd
            .singular_values
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty");
        if smin > 1e-6 * scale {
            return Err(Error::Assumption(format!(
                "A - Pi1 l c' has no eigenvalue at {} (distance {smin:.3e}); spectra differ",
                -lam
            )));
        }
        let v = vt.row(idx).transpose();
        h.set_column(i, &(&v / v.norm()));
    }
    let coords = numkit::solve_linear(&h, &Mat::from_column_slice(n, 1, x0.as_slice()))?;
    let l = &h * Mat::from_diagonal(&coords.column(0).into_owned());
    Ok(PiOracle { pi, h, l })
}
