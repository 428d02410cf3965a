//! End-to-end design runs, closed-loop checks, seeded sweeps and the
//! reference-example reproduction bundle.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::batching::{
    build_output_batch, build_state_batch, check_excitation_output, check_excitation_state,
    gramian_mu, Batch, ExcitationReport, OutputBatch, StateBatch,
};
use crate::error::{Error, Result, StageExt};
use crate::lmi::{
    encode_output_lmi, encode_state_lmi, gain_output, gain_state, solve, BarrierBackend,
    GainResult, LmiSolution, Objective, DEFAULT_DELTA,
};
use crate::lti_sim::{
    grid_steps, simulate_cascade, Exosystem, LtiBlock, OutputPlant, SignalSpec, StatePlant,
    Trajectory,
};
use crate::numkit::{self, Mat, Vector};
use crate::realization::{
    oracle_theta, output_f, run_chi, run_output_filter, run_state_filter, OutputFilterParams,
    OutputRealization, StateFilterParams, StateRealization,
};

/// Hurwitz margin used for certification.
pub const CERT_MARGIN: f64 = 1e-9;
/// Tolerance on the sampled compensation identity (state batches).
pub const STATE_IDENTITY_TOL: f64 = 1e-9;
/// Tolerance on the sampled virtual-system identity (output batches).
pub const OUTPUT_IDENTITY_TOL: f64 = 1e-8;
/// Closed-loop horizon cap, seconds.
pub const MAX_CLOSED_LOOP_HORIZON: f64 = 200.0;
/// Grid points of a closed-loop simulation.
pub const CLOSED_LOOP_STEPS: usize = 4000;

// ---------------------------------------------------------------------------
// Configuration.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantSpec {
    /// `ẋ = Ax + Bu`, rows of `A` and `B`.
    State { a: Vec<Vec<f64>>, b: Vec<Vec<f64>> },
    /// `ẋ = Ax + bu`, `y = cᵀx`.
    Output {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        c: Vec<f64>,
    },
    /// Strictly proper SISO transfer function, coefficients highest power
    /// first; realized in controllability canonical form.
    TransferFunction { num: Vec<f64>, den: Vec<f64> },
    /// The built-in unstable batch reactor.
    BatchReactor,
    /// The built-in `(s − 1)/(s³ + 4s)` plant.
    NonminimumPhaseExample,
    /// Recorded batch directory (no simulator); `truth` enables
    /// certification.
    Batch {
        dir: PathBuf,
        #[serde(default)]
        truth: Option<Box<PlantSpec>>,
    },
}

pub enum Plant {
    State(StatePlant),
    Output(OutputPlant),
}

impl PlantSpec {
    pub fn resolve(&self) -> Result<Plant> {
        Ok(match self {
            PlantSpec::State { a, b } => Plant::State(StatePlant::new(
                numkit::from_rows(a)?,
                numkit::from_rows(b)?,
            )?),
            PlantSpec::Output { a, b, c } => Plant::Output(OutputPlant::new(
                numkit::from_rows(a)?,
                Vector::from_vec(b.clone()),
                Vector::from_vec(c.clone()),
            )?),
            PlantSpec::TransferFunction { num, den } => {
                Plant::Output(OutputPlant::from_transfer_function(num, den)?)
            }
            PlantSpec::BatchReactor => Plant::State(StatePlant::batch_reactor()),
            PlantSpec::NonminimumPhaseExample => {
                Plant::Output(OutputPlant::nonminimum_phase_example())
            }
            PlantSpec::Batch { .. } => {
                return Err(Error::InvalidParameter(
                    "a batch directory has no simulator plant".into(),
                ))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialState {
    Explicit(Vec<f64>),
    /// Each entry uniform on `[low, high]`, drawn from the config seed.
    Uniform {
        low: f64,
        high: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FilterSpec {
    State { lambda: f64, gamma: f64 },
    Output { lambdas: Vec<f64>, gammas: Vec<f64> },
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: PlantSpec,
    /// Defaults to the unit-sinusoid exploration inputs.
    #[serde(default)]
    pub signal: Option<SignalSpec>,
    /// Defaults to `U(−1, 1)` (state) or `U(−5, 5)` (output).
    #[serde(default)]
    pub x0: Option<InitialState>,
    /// Exploration length `T`; must be a multiple of `ts`.
    pub horizon: f64,
    pub ts: f64,
    /// Simulation grid; defaults to `ts / 100`.
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default)]
    pub filter: Option<FilterSpec>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub objective: Objective,
    /// Controller filter initial state; zero by default.
    #[serde(default)]
    pub controller_init: Option<Vec<f64>>,
}

impl ExperimentConfig {
    /// Batch reactor, `λ = γ = 1`, `T = 1.5`, `Ts = 0.1`.
    pub fn reactor() -> Self {
        Self {
            plant: PlantSpec::BatchReactor,
            signal: None,
            x0: Some(InitialState::Explicit(vec![
                0.311, -0.6576, 0.4121, -0.9363,
            ])),
            horizon: 1.5,
            ts: 0.1,
            h: None,
            filter: Some(FilterSpec::State {
                lambda: 1.0,
                gamma: 1.0,
            }),
            delta: DEFAULT_DELTA,
            seed: 0,
            objective: Objective::Feasibility,
            controller_init: None,
        }
    }

    /// `(s − 1)/(s³ + 4s)`, `Λ = diag(−1, −2, −3)`, `ℓ = (1, 2, 3)`, `T = 2`.
    pub fn siso_example() -> Self {
        Self {
            plant: PlantSpec::NonminimumPhaseExample,
            signal: None,
            x0: Some(InitialState::Explicit(vec![-3.9223, 4.0631, 3.7965])),
            horizon: 2.0,
            ts: 0.1,
            h: None,
            filter: Some(FilterSpec::Output {
                lambdas: vec![1.0, 2.0, 3.0],
                gammas: vec![1.0, 2.0, 3.0],
            }),
            delta: DEFAULT_DELTA,
            seed: 0,
            objective: Objective::Feasibility,
            controller_init: None,
        }
    }

    pub fn with_random_x0(mut self, low: f64, high: f64, seed: u64) -> Self {
        self.x0 = Some(InitialState::Uniform { low, high });
        self.seed = seed;
        self
    }

    pub fn step(&self) -> f64 {
        self.h.unwrap_or(self.ts / 100.0)
    }

    /// `N = T / Ts`.
    pub fn samples(&self) -> Result<usize> {
        let n = grid_steps(self.horizon, self.ts, "exploration horizon")?;
        if n == 0 {
            return Err(Error::InvalidParameter(
                "horizon must cover at least one sample".into(),
            ));
        }
        Ok(n)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    fn resolve_x0(&self, n: usize, default_range: (f64, f64)) -> Result<Vector> {
        let spec = self.x0.clone().unwrap_or(InitialState::Uniform {
            low: default_range.0,
            high: default_range.1,
        });
        match spec {
            InitialState::Explicit(v) => {
                if v.len() != n {
                    return Err(Error::dim(format!(
                        "x0 has length {}, plant order {n}",
                        v.len()
                    )));
                }
                Ok(Vector::from_vec(v))
            }
            InitialState::Uniform { low, high } => {
                if !(low <= high) {
                    return Err(Error::InvalidParameter(
                        "x0 range must have low <= high".into(),
                    ));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                Ok(Vector::from_fn(n, |_, _| rng.random_range(low..=high)))
            }
        }
    }

    fn controller_init(&self, dim: usize) -> Result<Vector> {
        match &self.controller_init {
            None => Ok(Vector::zeros(dim)),
            Some(v) if v.len() == dim => Ok(Vector::from_vec(v.clone())),
            Some(v) => Err(Error::dim(format!(
                "controller_init has length {}, controller order {dim}",
                v.len()
            ))),
        }
    }

    fn state_filter(&self) -> Result<StateFilterParams> {
        match &self.filter {
            None => StateFilterParams::new(1.0, 1.0),
            Some(FilterSpec::State { lambda, gamma }) => StateFilterParams::new(*lambda, *gamma),
            Some(FilterSpec::Output { .. }) => Err(Error::InvalidParameter(
                "state-feedback design needs a scalar (lambda, gamma) filter".into(),
            )),
        }
    }

    fn output_filter(&self, n: usize) -> Result<OutputFilterParams> {
        match &self.filter {
            None => {
                let v: Vec<f64> = (1..=n).map(|i| i as f64).collect();
                OutputFilterParams::new(v.clone(), v)
            }
            Some(FilterSpec::Output { lambdas, gammas }) => {
                OutputFilterParams::new(lambdas.clone(), gammas.clone())
            }
            Some(FilterSpec::State { .. }) => Err(Error::InvalidParameter(
                "output-feedback design needs per-channel (lambdas, gammas)".into(),
            )),
        }
    }
}

/// Four unit sinusoids per channel; channel `j` uses `j+1, j+1+m, …`
/// rad/s, so all `4m` frequencies are distinct.
pub fn default_state_signal(m: usize) -> SignalSpec {
    let freqs: Vec<Vec<f64>> = (0..m)
        .map(|j| (0..4).map(|k| (j + 1 + k * m) as f64).collect())
        .collect();
    let refs: Vec<&[f64]> = freqs.iter().map(|v| v.as_slice()).collect();
    SignalSpec::unit_sines(&refs)
}

/// Four unit sinusoids at 1, 2.5, 4 and 5.5 rad/s.
pub fn default_output_signal() -> SignalSpec {
    SignalSpec::unit_sines(&[&[1.0, 2.5, 4.0, 5.5]])
}

// ---------------------------------------------------------------------------
// Controllers and closed loops.

/// `ζ̂̇_c = −λζ̂_c + γ[x; u]`, `u = Kζ̂_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateController {
    pub lambda: f64,
    pub gamma: f64,
    #[serde(with = "numkit::mat_rows")]
    pub k: Mat,
    pub zeta0: Vec<f64>,
}

/// `ζ̂̇_c = diag(Λ, Λ)ζ̂_c + diag(ℓ, ℓ)[y; u]`, `u = Kζ̂_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputController {
    pub lambdas: Vec<f64>,
    pub gammas: Vec<f64>,
    #[serde(with = "numkit::mat_rows")]
    pub k: Mat,
    pub zeta0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Controller {
    State(StateController),
    Output(OutputController),
}

/// Autonomous matrix of plant plus state controller over `(x, ζ̂_c)`.
pub fn state_interconnection(plant: &StatePlant, c: &StateController) -> Result<Mat> {
    let (n, m) = (plant.n(), plant.m());
    if c.k.shape() != (m, n + m) {
        return Err(Error::dim(format!("K must be {m}x{}", n + m)));
    }
    let mut big = Mat::zeros(2 * n + m, 2 * n + m);
    big.view_mut((0, 0), (n, n)).copy_from(&plant.a);
    big.view_mut((0, n), (n, n + m))
        .copy_from(&(&plant.b * &c.k));
    let mut zeta_rows = Mat::identity(n + m, n + m) * -c.lambda;
    let mut lower = zeta_rows.view_mut((n, 0), (m, n + m));
    lower += &c.k * c.gamma;
    for i in 0..n {
        big[(n + i, i)] = c.gamma;
    }
    big.view_mut((n, n), (n + m, n + m)).copy_from(&zeta_rows);
    Ok(big)
}

/// Autonomous matrix of plant plus output controller over `(x, ζ̂_c)`.
pub fn output_interconnection(plant: &OutputPlant, c: &OutputController) -> Result<Mat> {
    let n = plant.n();
    let params = OutputFilterParams::new(c.lambdas.clone(), c.gammas.clone())?;
    if params.n() != n || c.k.shape() != (1, 2 * n) {
        return Err(Error::dim(format!(
            "output controller must have order {n} and K 1x{}",
            2 * n
        )));
    }
    let lam = params.big_lambda();
    let ell = params.ell_mat();
    let mut big = Mat::zeros(3 * n, 3 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&plant.a);
    big.view_mut((0, n), (n, 2 * n))
        .copy_from(&(plant.b_mat() * &c.k));
    big.view_mut((n, 0), (n, n))
        .copy_from(&(&ell * plant.c_row()));
    let mut zeta = numkit::block_diag(&[&lam, &lam]);
    let mut lower = zeta.view_mut((n, 0), (n, 2 * n));
    lower += &ell * &c.k;
    big.view_mut((n, n), (2 * n, 2 * n)).copy_from(&zeta);
    Ok(big)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayMetrics {
    pub horizon: f64,
    pub step: f64,
    /// Spectral abscissa of the full interconnection.
    pub abscissa: f64,
    pub initial_norm: f64,
    pub final_norm: f64,
    pub norm_ratio: f64,
    /// `−slope` of a least-squares line through `log‖s(t)‖` on the second
    /// half of the horizon.
    pub fitted_rate: f64,
}

/// `10/|abscissa|`, capped.
pub fn default_closed_loop_horizon(abscissa: f64) -> f64 {
    if abscissa < 0.0 {
        (10.0 / abscissa.abs()).min(MAX_CLOSED_LOOP_HORIZON)
    } else {
        MAX_CLOSED_LOOP_HORIZON
    }
}

/// Exact simulation of `ṡ = Ms` from `s0`; `horizon` defaults to
/// [`default_closed_loop_horizon`].
pub fn closed_loop_simulate(
    m: &Mat,
    s0: &Vector,
    horizon: Option<f64>,
) -> Result<(Trajectory, DecayMetrics)> {
    let abscissa = numkit::spectrum(m)?.abscissa();
    let horizon = horizon.unwrap_or_else(|| default_closed_loop_horizon(abscissa));
    let step = horizon / CLOSED_LOOP_STEPS as f64;
    let block = LtiBlock::new("loop", m.clone(), s0.clone());
    let traj = simulate_cascade(
        &[block],
        &Exosystem::none(),
        step * CLOSED_LOOP_STEPS as f64,
        step,
    )?;
    let norms: Vec<f64> = traj.states.column_iter().map(|c| c.norm()).collect();
    let initial_norm = norms[0];
    let final_norm = *norms.last().expect("non-empty trajectory");
    let half = norms.len() / 2;
    let pts: Vec<(f64, f64)> = (half..norms.len())
        .filter(|&k| norms[k] > 0.0)
        .map(|k| (traj.times[k], norms[k].ln()))
        .collect();
    let fitted_rate = if pts.len() >= 2 {
        let nf = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / nf;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        -sxy / sxx
    } else {
        f64::NAN
    };
    let metrics = DecayMetrics {
        horizon: traj.horizon(),
        step,
        abscissa,
        initial_norm,
        final_norm,
        norm_ratio: if initial_norm > 0.0 {
            final_norm / initial_norm
        } else {
            0.0
        },
        fitted_rate,
    };
    Ok((traj, metrics))
}

// ---------------------------------------------------------------------------
// Reports.

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub simulate_s: f64,
    pub solve_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleInfo {
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    /// `state` or `output`.
    pub algorithm: String,
    pub config: ExperimentConfig,
    /// Resolved initial plant state.
    pub x0: Vec<f64>,
    pub samples: usize,
    pub excitation: ExcitationReport,
    /// Sampled compensation / virtual-system identity residual against
    /// ground truth, checked before solving.
    pub identity_residual: Option<f64>,
    pub lmi: LmiSolution,
    pub gain: Option<GainResult>,
    pub controller: Option<Controller>,
    pub oracle: Option<OracleInfo>,
    pub closed_loop: Option<DecayMetrics>,
    pub certified: bool,
    pub notes: Vec<String>,
    pub timings: Timings,
}

impl DesignReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// JSON with timings zeroed, for byte comparisons.
    pub fn to_json_without_timings(&self) -> Result<String> {
        let mut r = self.clone();
        r.timings = Timings::default();
        r.to_json()
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let row = |s: &mut String, k: &str, v: String| {
            let _ = writeln!(s, "{k:<24} {v}");
        };
        row(&mut s, "algorithm", self.algorithm.clone());
        row(&mut s, "samples", self.samples.to_string());
        row(
            &mut s,
            "excitation rank",
            format!(
                "{} / {} (sigma {:.3e})",
                self.excitation.achieved_rank,
                self.excitation.required_rank,
                self.excitation.smallest_relevant_singular_value
            ),
        );
        if let Some(mu) = self.excitation.gramian_mu {
            row(&mut s, "gramian mu", format!("{mu:.4e}"));
        }
        if let Some(r) = self.identity_residual {
            row(&mut s, "identity residual", format!("{r:.3e}"));
        }
        row(
            &mut s,
            "lmi status",
            format!("{:?} ({})", self.lmi.status, self.lmi.detail),
        );
        if let Some(g) = &self.gain {
            for (i, r) in g.k.row_iter().enumerate() {
                let cells: Vec<String> = r.iter().map(|v| format!("{v:>11.4}")).collect();
                row(&mut s, if i == 0 { "K" } else { "" }, cells.join(" "));
            }
            if let Some(a) = g.abscissa {
                row(&mut s, "abscissa", format!("{a:.6}"));
            }
            if let Some(ev) = &g.eigenvalues {
                row(&mut s, "eigenvalues", format_eigenvalues(ev));
            }
            row(&mut s, "certification", format!("{:?}", g.certification));
        }
        if let Some(c) = &self.closed_loop {
            row(
                &mut s,
                "closed loop",
                format!(
                    "ratio {:.3e} over {:.2} s, fitted rate {:.4}",
                    c.norm_ratio, c.horizon, c.fitted_rate
                ),
            );
        }
        for n in &self.notes {
            row(&mut s, "note", n.clone());
        }
        row(&mut s, "certified", self.certified.to_string());
        s
    }

    /// Write `report.json` and `summary.txt`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), self.to_json()?)?;
        fs::write(dir.join("summary.txt"), self.summary())?;
        Ok(())
    }
}

pub fn format_eigenvalues(ev: &[Complex64]) -> String {
    ev.iter()
        .map(|z| {
            if z.im.abs() < 1e-12 {
                format!("{:.4}", z.re)
            } else {
                format!("{:.4}{:+.4}i", z.re, z.im)
            }
        })
        .collect::<Vec<_>>()
        .join(", ")
}

// ---------------------------------------------------------------------------
// Algorithms.

/// Intermediate products of a state-feedback run, kept for tests and
/// exports.
pub struct StateRun {
    pub report: DesignReport,
    pub plant: StatePlant,
    pub batch: StateBatch,
    pub exploration: Trajectory,
}

pub struct OutputRun {
    pub report: DesignReport,
    pub plant: OutputPlant,
    pub batch: OutputBatch,
    pub exploration: Trajectory,
    pub realization: OutputRealization,
}

pub fn run_algorithm1(config: &ExperimentConfig) -> Result<DesignReport> {
    Ok(run_state_design(config)?.report)
}

pub fn run_algorithm2(config: &ExperimentConfig) -> Result<DesignReport> {
    Ok(run_output_design(config)?.report)
}

/// Dispatch on the plant kind.
pub fn run(config: &ExperimentConfig) -> Result<DesignReport> {
    match &config.plant {
        PlantSpec::Batch { dir, truth } => {
            design_from_batch(dir, config.delta, config.objective, truth.as_deref())
        }
        spec => match spec.resolve()? {
            Plant::State(_) => run_algorithm1(config),
            Plant::Output(_) => run_algorithm2(config),
        },
    }
}

pub fn run_state_design(config: &ExperimentConfig) -> Result<StateRun> {
    let t0 = Instant::now();
    let plant = match config.plant.resolve().stage("config")? {
        Plant::State(p) => p,
        Plant::Output(_) => {
            return Err(Error::InvalidParameter(
                "state-feedback design needs a state plant".into(),
            ))
            .stage("config")
        }
    };
    let params = config.state_filter().stage("config")?;
    let x0 = config.resolve_x0(plant.n(), (-1.0, 1.0)).stage("config")?;
    let samples = config.samples().stage("config")?;
    let signal = config
        .signal
        .clone()
        .unwrap_or_else(|| default_state_signal(plant.m()));
    let exp = crate::lti_sim::Experiment {
        signal,
        x0: x0.clone(),
        horizon: config.horizon,
        step: config.step(),
    };
    let traj = run_state_filter(&plant, &exp, &params).stage("simulate")?;
    let batch = build_state_batch(&traj, &x0, &params, config.ts, samples).stage("batch")?;
    let simulate_s = t0.elapsed().as_secs_f64();

    let mut excitation = check_excitation_state(&batch).stage("excitation")?;
    excitation.gramian_mu = Some(gramian_mu(&traj).stage("excitation")?);

    let truth = StateRealization::from_plant(&plant, &params);
    let residual = batch.identity_residual(&truth);
    if !(residual <= STATE_IDENTITY_TOL) {
        return Err(Error::Inconsistent {
            residual,
            context: "sampled compensation identity".into(),
        })
        .stage("batch");
    }

    let problem = encode_state_lmi(&batch, config.delta)
        .stage("lmi")?
        .with_objective(config.objective);
    let lmi = solve(&problem, &BarrierBackend::default()).stage("lmi")?;
    let solve_s = lmi.elapsed_s;

    let mut notes = Vec::new();
    let (gain, controller, closed_loop) = match &lmi.q {
        Some(q) => {
            let gain = gain_state(&batch, q, Some(&truth), CERT_MARGIN).stage("gain")?;
            let zeta0 = config
                .controller_init(plant.n() + plant.m())
                .stage("config")?;
            let controller = StateController {
                lambda: params.lambda,
                gamma: params.gamma,
                k: gain.k.clone(),
                zeta0: zeta0.iter().copied().collect(),
            };
            let closed = if gain.certified() {
                let m = state_interconnection(&plant, &controller).stage("closed-loop")?;
                let s0 = stack(&x0, &zeta0);
                Some(closed_loop_simulate(&m, &s0, None).stage("closed-loop")?.1)
            } else {
                None
            };
            (Some(gain), Some(Controller::State(controller)), closed)
        }
        None => {
            notes.push(infeasibility_note(&excitation));
            (None, None, None)
        }
    };
    let certified = gain.as_ref().is_some_and(|g| g.certified());
    let report = DesignReport {
        algorithm: "state".into(),
        config: config.clone(),
        x0: x0.iter().copied().collect(),
        samples,
        excitation,
        identity_residual: Some(residual),
        lmi,
        gain,
        controller,
        oracle: None,
        closed_loop,
        certified,
        notes,
        timings: Timings {
            simulate_s,
            solve_s,
            total_s: t0.elapsed().as_secs_f64(),
        },
    };
    Ok(StateRun {
        report,
        plant,
        batch,
        exploration: traj,
    })
}

pub fn run_output_design(config: &ExperimentConfig) -> Result<OutputRun> {
    let t0 = Instant::now();
    let plant = match config.plant.resolve().stage("config")? {
        Plant::Output(p) => p,
        Plant::State(_) => {
            return Err(Error::InvalidParameter(
                "output-feedback design needs a SISO output plant".into(),
            ))
            .stage("config")
        }
    };
    let n = plant.n();
    let params = config.output_filter(n).stage("config")?;
    let x0 = config.resolve_x0(n, (-5.0, 5.0)).stage("config")?;
    let samples = config.samples().stage("config")?;
    let signal = config.signal.clone().unwrap_or_else(default_output_signal);
    let p = signal.distinct_frequencies();
    let exp = crate::lti_sim::Experiment {
        signal,
        x0: x0.clone(),
        horizon: config.horizon,
        step: config.step(),
    };
    let traj = run_output_filter(&plant, &exp, &params).stage("simulate")?;
    let chi = run_chi(&params, config.horizon, config.step()).stage("simulate")?;
    let batch = build_output_batch(&traj, &chi, &params, config.ts, samples).stage("batch")?;
    let simulate_s = t0.elapsed().as_secs_f64();

    let mut excitation = check_excitation_output(&batch, Some(p)).stage("excitation")?;
    excitation.gramian_mu = Some(gramian_mu(&traj).stage("excitation")?);

    let truth = OutputRealization::from_oracle(&plant, &params, &x0).stage("oracle")?;
    let residual = batch.identity_residual(&truth);
    if !(residual <= OUTPUT_IDENTITY_TOL) {
        return Err(Error::Inconsistent {
            residual,
            context: "sampled virtual-system identity".into(),
        })
        .stage("batch");
    }

    let problem = encode_output_lmi(&batch, config.delta)
        .stage("lmi")?
        .with_objective(config.objective);
    let lmi = solve(&problem, &BarrierBackend::default()).stage("lmi")?;
    let solve_s = lmi.elapsed_s;

    let mut notes = Vec::new();
    let (gain, controller, closed_loop) = match &lmi.q {
        Some(q) => {
            let gain = gain_output(&batch, q, Some(&truth), CERT_MARGIN).stage("gain")?;
            let zeta0 = config.controller_init(2 * n).stage("config")?;
            let controller = OutputController {
                lambdas: params.lambdas.clone(),
                gammas: params.gammas.clone(),
                k: gain.k.clone(),
                zeta0: zeta0.iter().copied().collect(),
            };
            let closed = if gain.certified() {
                let m = output_interconnection(&plant, &controller).stage("closed-loop")?;
                let s0 = stack(&x0, &zeta0);
                Some(closed_loop_simulate(&m, &s0, None).stage("closed-loop")?.1)
            } else {
                None
            };
            (Some(gain), Some(Controller::Output(controller)), closed)
        }
        None => {
            notes.push(infeasibility_note(&excitation));
            (None, None, None)
        }
    };
    let certified = gain.as_ref().is_some_and(|g| g.certified());
    let report = DesignReport {
        algorithm: "output".into(),
        config: config.clone(),
        x0: x0.iter().copied().collect(),
        samples,
        excitation,
        identity_residual: Some(residual),
        lmi,
        gain,
        controller,
        oracle: Some(OracleInfo {
            theta1: truth.theta1.iter().copied().collect(),
            theta2: truth.theta2.iter().copied().collect(),
        }),
        closed_loop,
        certified,
        notes,
        timings: Timings {
            simulate_s,
            solve_s,
            total_s: t0.elapsed().as_secs_f64(),
        },
    };
    Ok(OutputRun {
        report,
        plant,
        batch,
        exploration: traj,
        realization: truth,
    })
}

fn infeasibility_note(excitation: &ExcitationReport) -> String {
    if excitation.exciting() {
        "LMI infeasible although the batch is exciting".into()
    } else {
        format!(
            "LMI infeasible; batch not exciting (rank {} < {})",
            excitation.achieved_rank, excitation.required_rank
        )
    }
}

fn stack(a: &Vector, b: &Vector) -> Vector {
    let mut v = Vector::zeros(a.len() + b.len());
    v.rows_mut(0, a.len()).copy_from(a);
    v.rows_mut(a.len(), b.len()).copy_from(b);
    v
}

/// Design from a recorded batch directory, without the simulator. With a
/// ground-truth plant the gain is also certified.
pub fn design_from_batch(
    dir: &Path,
    delta: f64,
    objective: Objective,
    truth: Option<&PlantSpec>,
) -> Result<DesignReport> {
    let batch = Batch::read_dir(dir).stage("batch")?;
    design_from_batch_data(batch, dir, delta, objective, truth)
}

/// [`design_from_batch`] on an already loaded batch; `source` is recorded in
/// the report.
pub fn design_from_batch_data(
    batch: Batch,
    source: &Path,
    delta: f64,
    objective: Objective,
    truth: Option<&PlantSpec>,
) -> Result<DesignReport> {
    let t0 = Instant::now();
    let dir = source;
    let truth_spec = truth.cloned().map(Box::new);
    let truth = truth.map(|t| t.resolve()).transpose().stage("config")?;
    let config = ExperimentConfig {
        plant: PlantSpec::Batch {
            dir: dir.to_path_buf(),
            truth: truth_spec,
        },
        signal: None,
        x0: None,
        horizon: 0.0,
        ts: 0.0,
        h: None,
        filter: None,
        delta,
        seed: 0,
        objective,
        controller_init: None,
    };
    let mut notes = Vec::new();
    let report = match batch {
        Batch::State(b) => {
            let excitation = check_excitation_state(&b).stage("excitation")?;
            let real = match &truth {
                Some(Plant::State(p)) => Some(StateRealization::from_plant(p, &b.params)),
                Some(Plant::Output(_)) => {
                    return Err(Error::InvalidParameter(
                        "state batch needs a state ground-truth plant".into(),
                    ))
                    .stage("config")
                }
                None => None,
            };
            let identity_residual = real.as_ref().map(|r| b.identity_residual(r));
            let problem = encode_state_lmi(&b, delta)
                .stage("lmi")?
                .with_objective(objective);
            let lmi = solve(&problem, &BarrierBackend::default()).stage("lmi")?;
            let gain = match &lmi.q {
                Some(q) => Some(gain_state(&b, q, real.as_ref(), CERT_MARGIN).stage("gain")?),
                None => {
                    notes.push(infeasibility_note(&excitation));
                    None
                }
            };
            let controller = gain.as_ref().map(|g| {
                Controller::State(StateController {
                    lambda: b.params.lambda,
                    gamma: b.params.gamma,
                    k: g.k.clone(),
                    zeta0: vec![0.0; b.n() + b.m()],
                })
            });
            DesignReport {
                algorithm: "state".into(),
                config: ExperimentConfig {
                    horizon: b.len() as f64 * b.ts,
                    ts: b.ts,
                    ..config
                },
                x0: b.x0.iter().copied().collect(),
                samples: b.len(),
                excitation,
                identity_residual,
                certified: gain.as_ref().is_some_and(|g| g.certified()),
                lmi,
                gain,
                controller,
                oracle: None,
                closed_loop: None,
                notes,
                timings: Timings::default(),
            }
        }
        Batch::Output(b) => {
            let excitation = check_excitation_output(&b, None).stage("excitation")?;
            let n = b.n();
            let real = match &truth {
                Some(Plant::Output(p)) => Some(
                    OutputRealization::from_oracle(p, &b.params, &Vector::zeros(n))
                        .stage("oracle")?,
                ),
                Some(Plant::State(_)) => {
                    return Err(Error::InvalidParameter(
                        "output batch needs an output ground-truth plant".into(),
                    ))
                    .stage("config")
                }
                None => None,
            };
            let problem = encode_output_lmi(&b, delta)
                .stage("lmi")?
                .with_objective(objective);
            let lmi = solve(&problem, &BarrierBackend::default()).stage("lmi")?;
            let gain = match &lmi.q {
                Some(q) => Some(gain_output(&b, q, real.as_ref(), CERT_MARGIN).stage("gain")?),
                None => {
                    notes.push(infeasibility_note(&excitation));
                    None
                }
            };
            let controller = gain.as_ref().map(|g| {
                Controller::Output(OutputController {
                    lambdas: b.params.lambdas.clone(),
                    gammas: b.params.gammas.clone(),
                    k: g.k.clone(),
                    zeta0: vec![0.0; 2 * n],
                })
            });
            DesignReport {
                algorithm: "output".into(),
                config: ExperimentConfig {
                    horizon: b.len() as f64 * b.ts,
                    ts: b.ts,
                    filter: Some(FilterSpec::Output {
                        lambdas: b.params.lambdas.clone(),
                        gammas: b.params.gammas.clone(),
                    }),
                    ..config
                },
                x0: vec![],
                samples: b.len(),
                excitation,
                identity_residual: None,
                certified: gain.as_ref().is_some_and(|g| g.certified()),
                lmi,
                gain,
                controller,
                oracle: real.as_ref().map(|r| OracleInfo {
                    theta1: r.theta1.iter().copied().collect(),
                    theta2: r.theta2.iter().copied().collect(),
                }),
                closed_loop: None,
                notes,
                timings: Timings::default(),
            }
        }
    };
    Ok(DesignReport {
        timings: Timings {
            simulate_s: 0.0,
            solve_s: report.lmi.elapsed_s,
            total_s: t0.elapsed().as_secs_f64(),
        },
        ..report
    })
}

// ---------------------------------------------------------------------------
// Verification.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    /// Recomputed from the stored gain and the ground-truth plant.
    pub abscissa: f64,
    pub eigenvalues: Vec<Complex64>,
    pub hurwitz: bool,
    /// The stored certificate agrees with the recomputed one.
    pub consistent: bool,
}

/// Re-certify a stored report from its gain and the plant in its config.
pub fn verify(report: &DesignReport) -> Result<Verification> {
    let controller = report
        .controller
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("report carries no controller".into()))?;
    let plant_spec = match &report.config.plant {
        PlantSpec::Batch { truth: Some(t), .. } => t.as_ref(),
        PlantSpec::Batch { truth: None, .. } => {
            return Err(Error::InvalidParameter(
                "report has no ground-truth plant to verify against".into(),
            ))
        }
        other => other,
    };
    let closed = match (plant_spec.resolve()?, controller) {
        (Plant::State(p), Controller::State(c)) => {
            let params = StateFilterParams::new(c.lambda, c.gamma)?;
            let real = StateRealization::from_plant(&p, &params);
            &real.f + &real.g * &c.k
        }
        (Plant::Output(p), Controller::Output(c)) => {
            let params = OutputFilterParams::new(c.lambdas.clone(), c.gammas.clone())?;
            let (t1, t2) = oracle_theta(&p, &params)?;
            let g = params.ell_mat();
            let mut gm = Mat::zeros(2 * p.n(), 1);
            gm.view_mut((p.n(), 0), (p.n(), 1)).copy_from(&g);
            output_f(&params, &t1, &t2) + gm * &c.k
        }
        _ => {
            return Err(Error::InvalidParameter(
                "controller kind differs from plant kind".into(),
            ))
        }
    };
    let spec = numkit::spectrum(&closed)?;
    let abscissa = spec.abscissa();
    let hurwitz = abscissa < -CERT_MARGIN;
    Ok(Verification {
        abscissa,
        eigenvalues: spec.eigenvalues,
        hurwitz,
        consistent: hurwitz == report.certified,
    })
}

// ---------------------------------------------------------------------------
// Sweeps and the reference-example bundle.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub seed: u64,
    pub x0: Vec<f64>,
    pub certified: bool,
    pub abscissa: Option<f64>,
    pub excitation_rank: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub runs: Vec<SweepRun>,
    pub certified: usize,
    pub worst_abscissa: Option<f64>,
}

/// `count` runs of `base` with `x0 ~ U(low, high)` drawn from seeds
/// `base.seed + i`, in parallel.
pub fn sweep(base: &ExperimentConfig, low: f64, high: f64, count: usize) -> SweepSummary {
    let runs: Vec<SweepRun> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let seed = base.seed + i;
            let cfg = base.clone().with_random_x0(low, high, seed);
            match run(&cfg) {
                Ok(r) => SweepRun {
                    seed,
                    x0: r.x0,
                    certified: r.certified,
                    abscissa: r.gain.as_ref().and_then(|g| g.abscissa),
                    excitation_rank: r.excitation.achieved_rank,
                    error: None,
                },
                Err(e) => SweepRun {
                    seed,
                    x0: vec![],
                    certified: false,
                    abscissa: None,
                    excitation_rank: 0,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let certified = runs.iter().filter(|r| r.certified).count();
    let worst_abscissa = runs
        .iter()
        .filter_map(|r| r.abscissa)
        .fold(None, |acc: Option<f64>, a| {
            Some(acc.map_or(a, |b| b.max(a)))
        });
    SweepSummary {
        runs,
        certified,
        worst_abscissa,
    }
}

/// Open-loop eigenvalues of the batch reactor (3 significant digits).
pub const REACTOR_OPEN_LOOP: [f64; 4] = [-8.67, -5.06, 0.0635, 1.99];

/// Reference gain for the reactor at `x0 = (0.311, −0.6576, 0.4121, −0.9363)`.
pub const REFERENCE_STATE_GAIN: [[f64; 6]; 2] = [
    [-1.507, -18.69, 0.155, -0.681, 2.925, 0.79],
    [17.45, 0.224, 44.06, -36.37, 1.09, -3.518],
];

pub fn reference_state_spectrum() -> Vec<Complex64> {
    vec![
        Complex64::new(-5.107, 10.729),
        Complex64::new(-5.107, -10.729),
        Complex64::new(-1.238, 0.0),
        Complex64::new(-1.024, 9.654),
        Complex64::new(-1.024, -9.654),
        Complex64::new(-0.759, 0.0),
    ]
}

/// Reference gain for the SISO example at `x0 = (−3.9223, 4.0631, 3.7965)`.
pub const REFERENCE_OUTPUT_GAIN: [f64; 6] = [-0.508, 3.208, -2.392, 0.001, -0.577, 1.055];

pub fn reference_output_spectrum() -> Vec<Complex64> {
    vec![
        Complex64::new(-2.028, 0.0),
        Complex64::new(-0.723, 0.647),
        Complex64::new(-0.723, -0.647),
        Complex64::new(-0.22, 0.0),
        Complex64::new(-0.147, 2.09),
        Complex64::new(-0.147, -2.09),
    ]
}

/// `F + GK` for the reactor with `λ = γ = 1` and the reference gain.
pub fn reference_state_closed_loop() -> Mat {
    let plant = StatePlant::batch_reactor();
    let params = StateFilterParams::new(1.0, 1.0).expect("valid");
    let real = StateRealization::from_plant(&plant, &params);
    let k = Mat::from_fn(2, 6, |i, j| REFERENCE_STATE_GAIN[i][j]);
    &real.f + &real.g * k
}

/// `F + gK` for the SISO example with oracle `θ` and the reference gain.
pub fn reference_output_closed_loop() -> Result<Mat> {
    let plant = OutputPlant::nonminimum_phase_example();
    let params = OutputFilterParams::new(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0])?;
    let (t1, t2) = oracle_theta(&plant, &params)?;
    let k = Mat::from_row_slice(1, 6, &REFERENCE_OUTPUT_GAIN);
    let mut g = Mat::zeros(6, 1);
    g.view_mut((3, 0), (3, 1)).copy_from(&params.ell_mat());
    Ok(output_f(&params, &t1, &t2) + g * k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    State,
    Output,
    Both,
}

impl Which {
    fn state(self) -> bool {
        matches!(self, Which::State | Which::Both)
    }

    fn output(self) -> bool {
        matches!(self, Which::Output | Which::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub checks: Vec<Check>,
    pub reports: Vec<DesignReport>,
    pub sweeps: Vec<(String, SweepSummary)>,
}

impl Bundle {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{:<4} {:<34} {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            );
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut stable = self.clone();
        for r in &mut stable.reports {
            r.timings = Timings::default();
        }
        fs::write(
            dir.join("bundle.json"),
            serde_json::to_string_pretty(&stable)?,
        )?;
        fs::write(dir.join("summary.txt"), self.summary())?;
        Ok(())
    }
}

fn spectrum_check(name: &str, m: &Mat, expected: &[Complex64], tol: f64) -> Check {
    match numkit::spectrum(m) {
        Ok(spec) => {
            let dist = numkit::spectral_match_distance(&spec.eigenvalues, expected);
            Check {
                name: name.into(),
                passed: dist <= tol,
                detail: format!(
                    "max pairing distance {dist:.3e} (tol {tol:.0e}); {}",
                    format_eigenvalues(&spec.eigenvalues)
                ),
            }
        }
        Err(e) => Check {
            name: name.into(),
            passed: false,
            detail: e.to_string(),
        },
    }
}

fn report_check(name: &str, r: Result<DesignReport>) -> (Check, Option<DesignReport>) {
    match r {
        Ok(rep) => (
            Check {
                name: name.into(),
                passed: rep.certified,
                detail: format!(
                    "rank {}/{}, abscissa {}",
                    rep.excitation.achieved_rank,
                    rep.excitation.required_rank,
                    rep.gain
                        .as_ref()
                        .and_then(|g| g.abscissa)
                        .map_or("n/a".into(), |a| format!("{a:.4}"))
                ),
            },
            Some(rep),
        ),
        Err(e) => (
            Check {
                name: name.into(),
                passed: false,
                detail: e.to_string(),
            },
            None,
        ),
    }
}

fn sweep_check(name: &str, s: &SweepSummary, count: usize) -> Check {
    Check {
        name: name.into(),
        passed: s.certified == count,
        detail: format!(
            "{}/{count} certified, worst abscissa {}",
            s.certified,
            s.worst_abscissa.map_or("n/a".into(), |a| format!("{a:.4}"))
        ),
    }
}

/// Run the two reference examples and their checks.
pub fn reproduce(which: Which, seeds: usize) -> Bundle {
    let mut checks = Vec::new();
    let mut reports = Vec::new();
    let mut sweeps = Vec::new();
    if which.state() {
        let expected: Vec<Complex64> = REACTOR_OPEN_LOOP
            .iter()
            .map(|&r| Complex64::new(r, 0.0))
            .collect();
        checks.push(spectrum_check(
            "state: open-loop spectrum",
            &StatePlant::batch_reactor().a,
            &expected,
            1e-2,
        ));
        checks.push(spectrum_check(
            "state: reference-gain spectrum",
            &reference_state_closed_loop(),
            &reference_state_spectrum(),
            0.05,
        ));
        let (c, r) = report_check(
            "state: canned design",
            run_algorithm1(&ExperimentConfig::reactor()),
        );
        checks.push(c);
        reports.extend(r);
        let s = sweep(&ExperimentConfig::reactor(), -1.0, 1.0, seeds);
        checks.push(sweep_check("state: seeded sweep", &s, seeds));
        sweeps.push(("state".to_string(), s));
    }
    if which.output() {
        let plant = OutputPlant::nonminimum_phase_example();
        let params =
            OutputFilterParams::new(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]).expect("valid");
        checks.push(match oracle_theta(&plant, &params) {
            Ok((t1, t2)) => {
                let e1 = Vector::from_row_slice(&[2.5, -8.0, 6.5]);
                let e2 = Vector::from_row_slice(&[-1.0, 1.5, -2.0 / 3.0]);
                let dev = (&t1 - e1).amax().max((&t2 - e2).amax());
                Check {
                    name: "output: oracle theta".into(),
                    passed: dev <= 1e-9,
                    detail: format!("max deviation {dev:.3e}"),
                }
            }
            Err(e) => Check {
                name: "output: oracle theta".into(),
                passed: false,
                detail: e.to_string(),
            },
        });
        checks.push(match reference_output_closed_loop() {
            Ok(m) => spectrum_check(
                "output: reference-gain spectrum",
                &m,
                &reference_output_spectrum(),
                0.05,
            ),
            Err(e) => Check {
                name: "output: reference-gain spectrum".into(),
                passed: false,
                detail: e.to_string(),
            },
        });
        let (c, r) = report_check(
            "output: canned design",
            run_algorithm2(&ExperimentConfig::siso_example()),
        );
        checks.push(c);
        reports.extend(r);
        let s = sweep(&ExperimentConfig::siso_example(), -5.0, 5.0, seeds);
        checks.push(sweep_check("output: seeded sweep", &s, seeds));
        sweeps.push(("output".to_string(), s));
    }
    Bundle {
        checks,
        reports,
        sweeps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_state_signal_frequencies() {
        let s = default_state_signal(2);
        let f: Vec<Vec<f64>> = s
            .channels
            .iter()
            .map(|c| c.terms.iter().map(|t| t.omega).collect())
            .collect();
        assert_eq!(f, vec![vec![1.0, 3.0, 5.0, 7.0], vec![2.0, 4.0, 6.0, 8.0]]);
        assert_eq!(s.distinct_frequencies(), 8);
    }

    #[test]
    fn seeded_x0_is_deterministic() {
        let c = ExperimentConfig::reactor().with_random_x0(-1.0, 1.0, 7);
        let a = c.resolve_x0(4, (0.0, 0.0)).unwrap();
        let b = c.resolve_x0(4, (0.0, 0.0)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        let other = ExperimentConfig::reactor()
            .with_random_x0(-1.0, 1.0, 8)
            .resolve_x0(4, (0.0, 0.0))
            .unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn misaligned_horizon_is_rejected() {
        let mut c = ExperimentConfig::reactor();
        c.horizon = 1.55;
        let err = run_algorithm1(&c).unwrap_err();
        assert!(matches!(err.root(), Error::Alignment(_)));
    }

    #[test]
    fn closed_loop_of_stable_scalar_decays_at_its_rate() {
        let m = numkit::mat(1, 1, &[-2.0]);
        let (_, d) = closed_loop_simulate(&m, &Vector::from_element(1, 1.0), None).unwrap();
        assert!((d.horizon - 5.0).abs() < 1e-12);
        assert!((d.fitted_rate - 2.0).abs() < 1e-9);
        assert!((d.norm_ratio - (-10.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn horizon_is_capped() {
        assert_eq!(default_closed_loop_horizon(-1e-4), MAX_CLOSED_LOOP_HORIZON);
        assert_eq!(default_closed_loop_horizon(-0.5), 20.0);
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = ExperimentConfig::siso_example();
        let back: ExperimentConfig =
            serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
        let tf: ExperimentConfig = serde_json::from_str(
            r#"{"plant":{"kind":"transfer_function","num":[1,-1],"den":[1,0,4,0]},
                "horizon":2,"ts":0.1,"x0":{"low":-5,"high":5},"seed":3}"#,
        )
        .unwrap();
        assert!(matches!(tf.x0, Some(InitialState::Uniform { .. })));
        assert_eq!(tf.delta, DEFAULT_DELTA);
    }
}
