//! Exact simulation of LTI cascades driven by sum-of-sinusoid inputs.
//!
//! Every input is generated by an autonomous exosystem, so the aggregate
//! `[exo; blocks]` is a constant-matrix autonomous system and one
//! matrix-exponential propagator per step gives the exact solution on the
//! grid. Derivatives are the right-hand side evaluated at the stored state.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{self, expm, Mat, Vector};

/// Ground-truth plant `ẋ = Ax + Bu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePlant {
    pub a: Mat,
    pub b: Mat,
}

impl StatePlant {
    pub fn new(a: Mat, b: Mat) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(Error::dim("state matrix must be square and non-empty"));
        }
        if b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(Error::dim("input matrix must be n x m with m >= 1"));
        }
        numkit::check_finite(&a, "A")?;
        numkit::check_finite(&b, "B")?;
        Ok(Self { a, b })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn is_controllable(&self) -> Result<bool> {
        Ok(numkit::controllability_rank(&self.a, &self.b)? == self.n())
    }

    /// Linearized unstable batch reactor (four states, two inputs).
    pub fn batch_reactor() -> Self {
        let a = numkit::mat(
            4,
            4,
            &[
                1.38, -0.2077, 6.715, -5.676, //
                -0.5814, -4.29, 0.0, 0.675, //
                1.067, 4.273, -6.654, 5.893, //
                0.048, 4.273, 1.343, -2.104,
            ],
        );
        let b = numkit::mat(4, 2, &[0.0, 0.0, 5.679, 0.0, 1.136, -3.146, 1.136, 0.0]);
        Self { a, b }
    }
}

/// Ground-truth SISO plant `ẋ = Ax + bu`, `y = cᵀx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputPlant {
    pub a: Mat,
    pub b: Vector,
    pub c: Vector,
}

impl OutputPlant {
    pub fn new(a: Mat, b: Vector, c: Vector) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || n == 0 {
            return Err(Error::dim("state matrix must be square and non-empty"));
        }
        if b.len() != n || c.len() != n {
            return Err(Error::dim("b and c must have the plant dimension"));
        }
        numkit::check_finite(&a, "A")?;
        Ok(Self { a, b, c })
    }

    /// Controllability canonical form of the strictly proper transfer
    /// function `num(s)/den(s)`. Coefficients are given highest power first;
    /// `den` is normalized to be monic.
    pub fn from_transfer_function(num: &[f64], den: &[f64]) -> Result<Self> {
        let den: Vec<f64> = den.iter().copied().skip_while(|v| *v == 0.0).collect();
        if den.len() < 2 {
            return Err(Error::InvalidParameter(
                "denominator must have degree >= 1".into(),
            ));
        }
        let n = den.len() - 1;
        let lead = den[0];
        let num: Vec<f64> = num.iter().copied().skip_while(|v| *v == 0.0).collect();
        if num.len() > n {
            return Err(Error::InvalidParameter(
                "transfer function must be strictly proper".into(),
            ));
        }
        if num.iter().chain(den.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("transfer function coefficients".into()));
        }
        // den = s^n + a_{n-1}s^{n-1} + ... + a_0 after normalization
        let mut a = Mat::zeros(n, n);
        for i in 0..n - 1 {
            a[(i, i + 1)] = 1.0;
        }
        for j in 0..n {
            a[(n - 1, j)] = -den[n - j] / lead;
        }
        let mut b = Vector::zeros(n);
        b[n - 1] = 1.0;
        let mut c = Vector::zeros(n);
        for (k, coeff) in num.iter().rev().enumerate() {
            c[k] = coeff / lead;
        }
        Self::new(a, b, c)
    }

    /// `(s − 1) / (s (s² + 4))`, non-minimum phase and marginally unstable.
    pub fn nonminimum_phase_example() -> Self {
        Self::from_transfer_function(&[1.0, -1.0], &[1.0, 0.0, 4.0, 0.0])
            .expect("static example is valid")
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn b_mat(&self) -> Mat {
        Mat::from_column_slice(self.n(), 1, self.b.as_slice())
    }

    pub fn c_row(&self) -> Mat {
        Mat::from_row_slice(1, self.n(), self.c.as_slice())
    }

    pub fn is_controllable(&self) -> Result<bool> {
        Ok(numkit::controllability_rank(&self.a, &self.b_mat())? == self.n())
    }

    pub fn is_observable(&self) -> Result<bool> {
        Ok(numkit::observability_rank(&self.c_row(), &self.a)? == self.n())
    }
}

/// `amplitude · sin(omega · t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub omega: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChannelSpec {
    #[serde(default)]
    pub terms: Vec<Sinusoid>,
    #[serde(default)]
    pub offset: f64,
}

/// Sum-of-sinusoids input, one entry per input channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub channels: Vec<ChannelSpec>,
}

impl SignalSpec {
    /// Unit-amplitude, zero-phase sinusoids; one frequency list per channel.
    pub fn unit_sines(freqs: &[&[f64]]) -> Self {
        Self {
            channels: freqs
                .iter()
                .map(|f| ChannelSpec {
                    terms: f
                        .iter()
                        .map(|&omega| Sinusoid {
                            amplitude: 1.0,
                            omega,
                            phase: 0.0,
                        })
                        .collect(),
                    offset: 0.0,
                })
                .collect(),
        }
    }

    pub fn zero(m: usize) -> Self {
        Self {
            channels: vec![ChannelSpec::default(); m],
        }
    }

    pub fn m(&self) -> usize {
        self.channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::InvalidParameter(
                "signal needs at least one channel".into(),
            ));
        }
        for ch in &self.channels {
            if !ch.offset.is_finite() {
                return Err(Error::NonFinite("signal offset".into()));
            }
            for t in &ch.terms {
                if !(t.amplitude.is_finite() && t.omega.is_finite() && t.phase.is_finite()) {
                    return Err(Error::NonFinite("sinusoid parameters".into()));
                }
                if t.omega < 0.0 {
                    return Err(Error::InvalidParameter(
                        "frequencies must be nonnegative".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// True when every channel has at least one nonzero component.
    pub fn is_exploring(&self) -> bool {
        self.channels.iter().all(|ch| {
            ch.offset != 0.0 || ch.terms.iter().any(|t| t.amplitude != 0.0 && t.omega > 0.0)
        })
    }

    /// Number of distinct positive frequencies carrying nonzero amplitude.
    pub fn distinct_frequencies(&self) -> usize {
        let mut freqs: Vec<f64> = self
            .channels
            .iter()
            .flat_map(|ch| ch.terms.iter())
            .filter(|t| t.amplitude != 0.0 && t.omega > 0.0)
            .map(|t| t.omega)
            .collect();
        freqs.sort_by(|a, b| a.total_cmp(b));
        freqs.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
        freqs.len()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for ch in &mut out.channels {
            ch.offset *= factor;
            for t in &mut ch.terms {
                t.amplitude *= factor;
            }
        }
        out
    }

    /// Direct trigonometric evaluation.
    pub fn evaluate(&self, t: f64) -> Vector {
        Vector::from_iterator(
            self.m(),
            self.channels.iter().map(|ch| {
                ch.offset
                    + ch.terms
                        .iter()
                        .map(|s| s.amplitude * (s.omega * t + s.phase).sin())
                        .sum::<f64>()
            }),
        )
    }
}

/// Autonomous realization `ẇ = Sw`, `u = C_u w` of a [`SignalSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exosystem {
    pub s: Mat,
    pub w0: Vector,
    pub c_u: Mat,
}

impl Exosystem {
    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    pub fn m(&self) -> usize {
        self.c_u.nrows()
    }

    /// No input channels at all (autonomous cascades).
    pub fn none() -> Self {
        Self {
            s: Mat::zeros(0, 0),
            w0: Vector::zeros(0),
            c_u: Mat::zeros(0, 0),
        }
    }
}

/// Each sinusoid becomes a 2×2 skew block on `(sin, cos)` of its argument;
/// constants (offsets and zero-frequency terms) become 1×1 zero blocks.
pub fn build_exosystem(spec: &SignalSpec) -> Exosystem {
    // (channel, kind) per exo block
    enum Piece {
        Osc {
            ch: usize,
            amp: f64,
            omega: f64,
            phase: f64,
        },
        Const {
            ch: usize,
            value: f64,
        },
    }
    let mut pieces = Vec::new();
    for (ch, c) in spec.channels.iter().enumerate() {
        for t in &c.terms {
            if t.omega == 0.0 {
                pieces.push(Piece::Const {
                    ch,
                    value: t.amplitude * t.phase.sin(),
                });
            } else {
                pieces.push(Piece::Osc {
                    ch,
                    amp: t.amplitude,
                    omega: t.omega,
                    phase: t.phase,
                });
            }
        }
        if c.offset != 0.0 {
            pieces.push(Piece::Const {
                ch,
                value: c.offset,
            });
        }
    }
    let dim: usize = pieces
        .iter()
        .map(|p| match p {
            Piece::Osc { .. } => 2,
            Piece::Const { .. } => 1,
        })
        .sum();
    let mut s = Mat::zeros(dim, dim);
    let mut w0 = Vector::zeros(dim);
    let mut c_u = Mat::zeros(spec.m(), dim);
    let mut k = 0;
    for p in pieces {
        match p {
            Piece::Osc {
                ch,
                amp,
                omega,
                phase,
            } => {
                s[(k, k + 1)] = omega;
                s[(k + 1, k)] = -omega;
                w0[k] = phase.sin();
                w0[k + 1] = phase.cos();
                c_u[(ch, k)] = amp;
                k += 2;
            }
            Piece::Const { ch, value } => {
                w0[k] = 1.0;
                c_u[(ch, k)] = value;
                k += 1;
            }
        }
    }
    Exosystem { s, w0, c_u }
}

/// One data-collection run: exploration input, initial plant state and the
/// simulation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub signal: SignalSpec,
    pub x0: Vector,
    pub horizon: f64,
    pub step: f64,
}

/// Where a block's forcing term comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    /// The exosystem output `u`.
    Input,
    /// The state of an upstream block, by name.
    Block(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub source: Source,
    pub gain: Mat,
}

/// `ẋ = A x + Σ gain_i · source_i`, no direct feedthrough.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiBlock {
    pub name: String,
    pub a: Mat,
    pub x0: Vector,
    pub couplings: Vec<Coupling>,
}

impl LtiBlock {
    pub fn new(name: impl Into<String>, a: Mat, x0: Vector) -> Self {
        Self {
            name: name.into(),
            a,
            x0,
            couplings: Vec::new(),
        }
    }

    pub fn driven_by(mut self, source: Source, gain: Mat) -> Self {
        self.couplings.push(Coupling { source, gain });
        self
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub offset: usize,
    pub dim: usize,
}

/// Uniform-grid trajectory of a simulated cascade. Columns are grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub step: f64,
    pub times: Vec<f64>,
    pub states: Mat,
    pub inputs: Mat,
    pub derivatives: Mat,
    pub blocks: Vec<BlockInfo>,
}

/// Which rows of a trajectory to sample.
#[derive(Debug, Clone, PartialEq)]
pub enum Channel {
    State(String),
    Derivative(String),
    Input,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn block(&self, name: &str) -> Result<&BlockInfo> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::Structural(format!("trajectory has no block '{name}'")))
    }

    /// All grid values of a channel (rows × grid points).
    pub fn channel(&self, channel: &Channel) -> Result<Mat> {
        Ok(match channel {
            Channel::Input => self.inputs.clone(),
            Channel::State(name) => {
                let b = self.block(name)?;
                self.states.rows(b.offset, b.dim).into_owned()
            }
            Channel::Derivative(name) => {
                let b = self.block(name)?;
                self.derivatives.rows(b.offset, b.dim).into_owned()
            }
        })
    }

    pub fn state_names(&self) -> Vec<String> {
        self.blocks
            .iter()
            .flat_map(|b| (1..=b.dim).map(move |i| format!("{}{}", b.name, i)))
            .collect()
    }

    /// CSV with header `t,<states>,<inputs>,<derivatives>` and 17
    /// significant digits per value.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let states = self.state_names();
        let mut header = vec!["t".to_string()];
        header.extend(states.iter().cloned());
        header.extend((1..=self.inputs.nrows()).map(|i| format!("u{i}")));
        header.extend(states.iter().map(|s| format!("d{s}")));
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.len() {
            let mut row = vec![fmt17(self.times[k])];
            row.extend(self.states.column(k).iter().map(|v| fmt17(*v)));
            row.extend(self.inputs.column(k).iter().map(|v| fmt17(*v)));
            row.extend(self.derivatives.column(k).iter().map(|v| fmt17(*v)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// 17 significant digits, round-trippable.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Number of grid steps covering `span`, which must be an integer multiple
/// of `step` (no interpolation anywhere).
pub fn grid_steps(span: f64, step: f64, what: &str) -> Result<usize> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "{what}: step must be positive"
        )));
    }
    if !(span >= 0.0) || !span.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "{what}: span must be nonnegative"
        )));
    }
    let ratio = span / step;
    let k = ratio.round();
    if (ratio - k).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::Alignment(format!(
            "{what}: {span} is not a multiple of {step}"
        )));
    }
    Ok(k as usize)
}

/// Aggregate autonomous matrix over `[exo; blocks]` plus block layout.
fn assemble(blocks: &[LtiBlock], exo: &Exosystem) -> Result<(Mat, Vector, Vec<BlockInfo>)> {
    let ne = exo.dim();
    let m = exo.m();
    let mut infos = Vec::with_capacity(blocks.len());
    let mut offset = ne;
    for (i, b) in blocks.iter().enumerate() {
        if b.a.nrows() != b.a.ncols() || b.x0.len() != b.a.nrows() {
            return Err(Error::dim(format!(
                "block '{}' has inconsistent shapes",
                b.name
            )));
        }
        if blocks[..i].iter().any(|p| p.name == b.name) {
            return Err(Error::Structural(format!(
                "duplicate block name '{}'",
                b.name
            )));
        }
        infos.push(BlockInfo {
            name: b.name.clone(),
            offset,
            dim: b.dim(),
        });
        offset += b.dim();
    }
    let total = offset;
    let mut agg = Mat::zeros(total, total);
    let mut s0 = Vector::zeros(total);
    agg.view_mut((0, 0), (ne, ne)).copy_from(&exo.s);
    s0.rows_mut(0, ne).copy_from(&exo.w0);

    for (i, b) in blocks.iter().enumerate() {
        let info = &infos[i];
        agg.view_mut((info.offset, info.offset), (info.dim, info.dim))
            .copy_from(&b.a);
        s0.rows_mut(info.offset, info.dim).copy_from(&b.x0);
        for c in &b.couplings {
            match &c.source {
                Source::Input => {
                    if c.gain.shape() != (info.dim, m) {
                        return Err(Error::dim(format!(
                            "input gain of block '{}' must be {}x{m}",
                            b.name, info.dim
                        )));
                    }
                    let forced = &c.gain * &exo.c_u;
                    let mut view = agg.view_mut((info.offset, 0), (info.dim, ne));
                    view += forced;
                }
                Source::Block(src) => {
                    let j = infos.iter().position(|x| &x.name == src).ok_or_else(|| {
                        Error::Structural(format!("block '{}' references unknown '{src}'", b.name))
                    })?;
                    if j >= i {
                        return Err(Error::Structural(format!(
                            "block '{}' is driven by '{src}', which is not upstream (loop)",
                            b.name
                        )));
                    }
                    let up = &infos[j];
                    if c.gain.shape() != (info.dim, up.dim) {
                        return Err(Error::dim(format!(
                            "gain from '{src}' into '{}' must be {}x{}",
                            b.name, info.dim, up.dim
                        )));
                    }
                    let mut view = agg.view_mut((info.offset, up.offset), (info.dim, up.dim));
                    view += &c.gain;
                }
            }
        }
    }
    Ok((agg, s0, infos))
}

/// Exact grid solution of `ṡ = M s`: `steps + 1` states starting at `s0`.
pub fn propagate(m: &Mat, s0: &Vector, step: f64, steps: usize) -> Result<Vec<Vector>> {
    let prop = expm(&(m * step))?;
    let mut out = Vec::with_capacity(steps + 1);
    let mut s = s0.clone();
    out.push(s.clone());
    for _ in 0..steps {
        s = &prop * &s;
        out.push(s.clone());
    }
    Ok(out)
}

/// Simulate a cascade of LTI blocks driven by an exosystem over
/// `[0, horizon]` on the grid `k · step`.
pub fn simulate_cascade(
    blocks: &[LtiBlock],
    exo: &Exosystem,
    horizon: f64,
    step: f64,
) -> Result<Trajectory> {
    let steps = grid_steps(horizon, step, "simulation horizon")?;
    let (agg, s0, blocks_info) = assemble(blocks, exo)?;
    numkit::check_finite(&agg, "aggregate system")?;
    let ne = exo.dim();
    let dim = agg.nrows() - ne;
    let path = propagate(&agg, &s0, step, steps)?;
    let len = path.len();
    let mut states = Mat::zeros(dim, len);
    let mut inputs = Mat::zeros(exo.m(), len);
    let mut derivatives = Mat::zeros(dim, len);
    for (k, s) in path.iter().enumerate() {
        let ds = &agg * s;
        states.set_column(k, &s.rows(ne, dim));
        derivatives.set_column(k, &ds.rows(ne, dim));
        inputs.set_column(k, &(&exo.c_u * s.rows(0, ne)));
    }
    let times = (0..len).map(|k| k as f64 * step).collect();
    let blocks = blocks_info
        .into_iter()
        .map(|b| BlockInfo {
            offset: b.offset - ne,
            ..b
        })
        .collect();
    Ok(Trajectory {
        step,
        times,
        states,
        inputs,
        derivatives,
        blocks,
    })
}

/// Columns of `channel` at `t = 0, Ts, …, (N−1)Ts`.
pub fn sample(traj: &Trajectory, ts: f64, n: usize, channel: &Channel) -> Result<Mat> {
    let stride = grid_steps(ts, traj.step, "sampling time")?;
    if stride == 0 {
        return Err(Error::Alignment("sampling time must be positive".into()));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("sample count must be >= 1".into()));
    }
    let last = (n - 1) * stride;
    if last >= traj.len() {
        return Err(Error::Alignment(format!(
            "{n} samples at Ts = {ts} exceed the trajectory horizon {}",
            traj.horizon()
        )));
    }
    let full = traj.channel(channel)?;
    let mut out = Mat::zeros(full.nrows(), n);
    for k in 0..n {
        out.set_column(k, &full.column(k * stride));
    }
    Ok(out)
}
