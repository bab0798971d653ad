//! Forward simulation under scalar multiplicative noise, with exact
//! (sign-path enumeration) and Monte Carlo expectation engines.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest horizon accepted by `enumerate_expectation` (`2^(N+1)` paths).
pub const MAX_ENUM_HORIZON: usize = 16;

/// One input channel: enters as `B u + (D u) w(k)`.
#[derive(Debug, Clone)]
pub struct Channel {
    pub b: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

/// Step `k` of `x+ = A x + sum B_i u_i + (C x + sum D_i u_i) w`,
/// `z = Cz x + sum F_i u_i`.
#[derive(Debug, Clone)]
pub struct StepModel {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub channels: Vec<Channel>,
    pub out_state: DMatrix<f64>,
    pub out_inputs: Vec<DMatrix<f64>>,
}

/// Matrix form of any of the system families, in orthonormal coordinates.
#[derive(Debug, Clone)]
pub struct MatrixModel {
    pub steps: Vec<StepModel>,
}

impl MatrixModel {
    pub fn horizon(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn state_dim(&self) -> usize {
        self.steps[0].a.nrows()
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.steps[0].channels.iter().map(|c| c.b.ncols()).collect()
    }

    pub fn output_dim(&self) -> usize {
        self.steps[0].out_state.nrows()
    }

    /// Total dimension of the stacked vector `(x, u_1, ..., u_m)`.
    pub fn stacked_dim(&self) -> usize {
        self.state_dim() + self.input_dims().iter().sum::<usize>()
    }

    /// Closes the loop on one channel with `u(k) = K(k) x(k)` and drops that channel.
    pub fn close_loop(&self, channel: usize, gains: &[DMatrix<f64>]) -> MatrixModel {
        let steps = self
            .steps
            .iter()
            .zip(gains)
            .map(|(st, k)| {
                let ch = &st.channels[channel];
                let mut channels = st.channels.clone();
                channels.remove(channel);
                let mut out_inputs = st.out_inputs.clone();
                let f = out_inputs.remove(channel);
                StepModel {
                    a: &st.a + &ch.b * k,
                    c: &st.c + &ch.d * k,
                    channels,
                    out_state: &st.out_state + f * k,
                    out_inputs,
                }
            })
            .collect();
        MatrixModel { steps }
    }
}

/// Input law: may depend on the step, the current state and past noise.
pub trait ControlLaw: Sync {
    fn input(&self, k: usize, channel: usize, x: &DVector<f64>, past_noise: &[f64]) -> DVector<f64>;
}

/// `u_i(k) = K_i(k) x + o_i(k)`.
#[derive(Debug, Clone)]
pub struct AffinePolicy {
    /// `gains[i][k]`
    pub gains: Vec<Vec<DMatrix<f64>>>,
    /// `offsets[i][k]`
    pub offsets: Vec<Vec<DVector<f64>>>,
}

impl AffinePolicy {
    pub fn zero(model: &MatrixModel) -> Self {
        let n = model.state_dim();
        let steps = model.steps.len();
        let dims = model.input_dims();
        AffinePolicy {
            gains: dims.iter().map(|&m| vec![DMatrix::zeros(m, n); steps]).collect(),
            offsets: dims.iter().map(|&m| vec![DVector::zeros(m); steps]).collect(),
        }
    }

    pub fn feedback(model: &MatrixModel, gains: Vec<Vec<DMatrix<f64>>>) -> Self {
        let mut p = Self::zero(model);
        p.gains = gains;
        p
    }

    pub fn with_offsets(mut self, offsets: Vec<Vec<DVector<f64>>>) -> Self {
        self.offsets = offsets;
        self
    }

    pub fn check(&self, model: &MatrixModel) -> Result<()> {
        let dims = model.input_dims();
        let n = model.state_dim();
        let steps = model.steps.len();
        if self.gains.len() != dims.len() || self.offsets.len() != dims.len() {
            return Err(Error::dim("policy channel count differs from the model"));
        }
        for (i, &m) in dims.iter().enumerate() {
            if self.gains[i].len() != steps || self.offsets[i].len() != steps {
                return Err(Error::dim("policy length differs from the horizon"));
            }
            let bad_gain = self.gains[i].iter().any(|g| g.shape() != (m, n));
            let bad_offset = self.offsets[i].iter().any(|o| o.len() != m);
            if bad_gain || bad_offset {
                return Err(Error::dim(format!("policy channel {i} has wrong shapes")));
            }
        }
        Ok(())
    }
}

impl ControlLaw for AffinePolicy {
    fn input(&self, k: usize, channel: usize, x: &DVector<f64>, _: &[f64]) -> DVector<f64> {
        &self.gains[channel][k] * x + &self.offsets[channel][k]
    }
}

/// `sum_k xi(k)' Q(k) xi(k) + x(N+1)' S x(N+1)` with `xi = (x, u_1, ..., u_m)`.
#[derive(Debug, Clone)]
pub struct QuadraticFunctional {
    pub stage: Vec<DMatrix<f64>>,
    pub terminal: DMatrix<f64>,
}

impl QuadraticFunctional {
    /// `sum_k (z_weight ||z||^2 + sum_i w_i ||u_i||^2)`.
    pub fn output_energy(model: &MatrixModel, z_weight: f64, input_weights: &[f64]) -> Self {
        let n = model.state_dim();
        let dims = model.input_dims();
        let total = model.stacked_dim();
        let stage = model
            .steps
            .iter()
            .map(|st| {
                let mut o = DMatrix::zeros(st.out_state.nrows(), total);
                o.view_mut((0, 0), (st.out_state.nrows(), n)).copy_from(&st.out_state);
                let mut q = DMatrix::zeros(total, total);
                let mut off = n;
                for (i, &m) in dims.iter().enumerate() {
                    o.view_mut((0, off), (st.out_state.nrows(), m))
                        .copy_from(&st.out_inputs[i]);
                    for j in 0..m {
                        q[(off + j, off + j)] = input_weights[i];
                    }
                    off += m;
                }
                q + o.transpose() * o * z_weight
            })
            .collect();
        QuadraticFunctional {
            stage,
            terminal: DMatrix::zeros(n, n),
        }
    }

    fn check(&self, model: &MatrixModel) -> Result<()> {
        let t = model.stacked_dim();
        let n = model.state_dim();
        if self.stage.len() != model.steps.len()
            || self.stage.iter().any(|q| q.shape() != (t, t))
            || self.terminal.shape() != (n, n)
        {
            return Err(Error::dim("functional shapes differ from the model"));
        }
        Ok(())
    }
}

fn stacked(x: &DVector<f64>, inputs: &[DVector<f64>]) -> DVector<f64> {
    let total = x.len() + inputs.iter().map(DVector::len).sum::<usize>();
    let mut xi = DVector::zeros(total);
    xi.rows_mut(0, x.len()).copy_from(x);
    let mut off = x.len();
    for u in inputs {
        xi.rows_mut(off, u.len()).copy_from(u);
        off += u.len();
    }
    xi
}

fn quad(q: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    (q * v).dot(v)
}

/// Deterministic step: returns `(A x + sum B u, C x + sum D u)`.
fn split_step(st: &StepModel, x: &DVector<f64>, inputs: &[DVector<f64>]) -> (DVector<f64>, DVector<f64>) {
    let mut drift = &st.a * x;
    let mut diffusion = &st.c * x;
    for (ch, u) in st.channels.iter().zip(inputs) {
        drift += &ch.b * u;
        diffusion += &ch.d * u;
    }
    (drift, diffusion)
}

/// States, inputs, outputs and noise of one simulated path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBundle {
    /// `x(0..=N+1)`
    pub states: Vec<Vec<f64>>,
    /// `inputs[k][i]`
    pub inputs: Vec<Vec<Vec<f64>>>,
    /// `z(0..=N)`; empty vectors when the model has no output.
    pub outputs: Vec<Vec<f64>>,
    pub noise: Vec<f64>,
    pub cost: Option<f64>,
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Simulates one path for the given noise realization (length `N+1`).
pub fn simulate(
    model: &MatrixModel,
    policy: &dyn ControlLaw,
    x0: &DVector<f64>,
    noise: &[f64],
    functional: Option<&QuadraticFunctional>,
) -> Result<TrajectoryBundle> {
    if noise.len() != model.steps.len() {
        return Err(Error::dim(format!(
            "noise path has {} entries, horizon needs {}",
            noise.len(),
            model.steps.len()
        )));
    }
    if x0.len() != model.state_dim() {
        return Err(Error::dim("initial state dimension differs from the model"));
    }
    if let Some(f) = functional {
        f.check(model)?;
    }
    let dims = model.input_dims();
    let mut x = x0.clone();
    let mut out = TrajectoryBundle {
        states: vec![to_vec(&x)],
        inputs: Vec::new(),
        outputs: Vec::new(),
        noise: noise.to_vec(),
        cost: None,
    };
    let mut cost = 0.0;
    for (k, st) in model.steps.iter().enumerate() {
        let inputs: Vec<DVector<f64>> = (0..dims.len()).map(|i| policy.input(k, i, &x, &noise[..k])).collect();
        for (u, &m) in inputs.iter().zip(&dims) {
            if u.len() != m {
                return Err(Error::dim(format!(
                    "policy returned {} inputs, channel needs {m}",
                    u.len()
                )));
            }
        }
        let mut z = &st.out_state * &x;
        for (f, u) in st.out_inputs.iter().zip(&inputs) {
            z += f * u;
        }
        if let Some(f) = functional {
            cost += quad(&f.stage[k], &stacked(&x, &inputs));
        }
        let (drift, diffusion) = split_step(st, &x, &inputs);
        x = drift + diffusion * noise[k];
        out.inputs.push(inputs.iter().map(to_vec).collect());
        out.outputs.push(to_vec(&z));
        out.states.push(to_vec(&x));
    }
    if let Some(f) = functional {
        cost += quad(&f.terminal, &x);
        out.cost = Some(cost);
    }
    Ok(out)
}

struct Enumerator<'a> {
    model: &'a MatrixModel,
    policy: &'a dyn ControlLaw,
    functional: &'a QuadraticFunctional,
    channels: usize,
}

impl Enumerator<'_> {
    /// Expected remaining cost from state `x` at step `k`; the two sign branches
    /// are averaged at every level, which fixes the summation tree.
    fn expect(&self, k: usize, x: &DVector<f64>, noise: &mut Vec<f64>) -> f64 {
        if k == self.model.steps.len() {
            return quad(&self.functional.terminal, x);
        }
        let st = &self.model.steps[k];
        let inputs: Vec<DVector<f64>> = (0..self.channels).map(|i| self.policy.input(k, i, x, noise)).collect();
        let stage = quad(&self.functional.stage[k], &stacked(x, &inputs));
        let (drift, diffusion) = split_step(st, x, &inputs);
        let up = &drift + &diffusion;
        let down = &drift - &diffusion;
        let (a, b) = self.branches(k, up, down, noise);
        stage + 0.5 * (a + b)
    }

    #[cfg(feature = "parallel")]
    fn branches(&self, k: usize, up: DVector<f64>, down: DVector<f64>, noise: &mut Vec<f64>) -> (f64, f64) {
        let remaining = self.model.steps.len() - k;
        if remaining >= 8 && noise.len() < 4 {
            let mut n_up = noise.clone();
            let mut n_down = noise.clone();
            n_up.push(1.0);
            n_down.push(-1.0);
            return rayon::join(
                || self.expect(k + 1, &up, &mut n_up),
                || self.expect(k + 1, &down, &mut n_down),
            );
        }
        self.sequential(k, up, down, noise)
    }

    #[cfg(not(feature = "parallel"))]
    fn branches(&self, k: usize, up: DVector<f64>, down: DVector<f64>, noise: &mut Vec<f64>) -> (f64, f64) {
        self.sequential(k, up, down, noise)
    }

    fn sequential(&self, k: usize, up: DVector<f64>, down: DVector<f64>, noise: &mut Vec<f64>) -> (f64, f64) {
        noise.push(1.0);
        let a = self.expect(k + 1, &up, noise);
        noise.pop();
        noise.push(-1.0);
        let b = self.expect(k + 1, &down, noise);
        noise.pop();
        (a, b)
    }
}

/// Exact expectation under equiprobable sign noise, summing over all
/// `2^(N+1)` paths.
pub fn enumerate_expectation(
    model: &MatrixModel,
    policy: &dyn ControlLaw,
    x0: &DVector<f64>,
    functional: &QuadraticFunctional,
) -> Result<f64> {
    let horizon = model.horizon();
    if horizon > MAX_ENUM_HORIZON {
        return Err(Error::EnumerationLimit {
            paths_log2: horizon + 1,
            limit_log2: MAX_ENUM_HORIZON + 1,
        });
    }
    if x0.len() != model.state_dim() {
        return Err(Error::dim("initial state dimension differs from the model"));
    }
    functional.check(model)?;
    let e = Enumerator {
        model,
        policy,
        functional,
        channels: model.input_dims().len(),
    };
    Ok(e.expect(0, x0, &mut Vec::with_capacity(horizon + 1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Rademacher,
    Gaussian,
}

/// Seeded noise source; replication `r` draws from its own ChaCha stream,
/// so results do not depend on evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, seed: u64) -> Self {
        NoiseModel { kind, seed }
    }

    pub fn path(&self, horizon: usize, replication: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replication);
        (0..=horizon)
            .map(|_| match self.kind {
                NoiseKind::Rademacher => {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
                NoiseKind::Gaussian => rng.sample(StandardNormal),
            })
            .collect()
    }
}

/// Sample mean and 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub half_width: f64,
    pub replications: usize,
}

impl McEstimate {
    pub fn covers(&self, value: f64) -> bool {
        (self.mean - value).abs() <= self.half_width
    }
}

/// Sum with a fixed binary tree so the result does not depend on how the
/// terms were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

pub fn monte_carlo_expectation(
    model: &MatrixModel,
    policy: &dyn ControlLaw,
    x0: &DVector<f64>,
    functional: &QuadraticFunctional,
    noise: NoiseModel,
    replications: usize,
) -> Result<McEstimate> {
    if replications < 2 {
        return Err(Error::Parse("monte carlo needs at least two replications".into()));
    }
    functional.check(model)?;
    let horizon = model.horizon();
    let one = |r: usize| -> Result<f64> {
        let path = noise.path(horizon, r as u64);
        Ok(simulate(model, policy, x0, &path, Some(functional))?
            .cost
            .expect("functional supplied"))
    };
    #[cfg(feature = "parallel")]
    let samples: Vec<f64> = {
        use rayon::prelude::*;
        (0..replications).into_par_iter().map(one).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let samples: Vec<f64> = (0..replications).map(one).collect::<Result<_>>()?;
    let r = replications as f64;
    let mean = pairwise_sum(&samples) / r;
    let dev: Vec<f64> = samples.iter().map(|s| (s - mean) * (s - mean)).collect();
    let var = pairwise_sum(&dev) / (r - 1.0);
    Ok(McEstimate {
        mean,
        half_width: 1.96 * (var / r).sqrt(),
        replications,
    })
}
