//! Disturbance attenuation: the perturbation operator, the bounded real
//! lemma recursion and the induced norm.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{HVector, OperatorExpr, SelfAdjointCert, Space};
use crate::linalg::{self, KAPPA_MAX};
use crate::sim::{self, AffinePolicy, Channel, MatrixModel, StepModel};
use crate::system::{cross_residual, OpSeq};

/// Orthogonality tolerance for output-map conditions.
pub const ORTHO_TOL: f64 = 1e-12;

/// `x(k+1) = A x + B1 v + (C x + D1 v) w(k)`, `z = Cbar x + Dbar v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbedSystemSpec {
    pub horizon: usize,
    pub state_space: Space,
    pub disturbance_space: Space,
    pub output_space: Space,
    pub a: OpSeq,
    pub c: OpSeq,
    pub b1: OpSeq,
    pub d1: OpSeq,
    pub c_bar: OpSeq,
    pub d_bar: OpSeq,
}

impl DisturbedSystemSpec {
    /// Shape checks plus `Dbar(k)* Cbar(k) = 0` at every step.
    pub fn validate(&self) -> Result<()> {
        let (h, v, z, n) = (
            &self.state_space,
            &self.disturbance_space,
            &self.output_space,
            self.horizon,
        );
        h.validate()?;
        v.validate()?;
        z.validate()?;
        self.a.validate(n, h, h, "A")?;
        self.c.validate(n, h, h, "C")?;
        self.b1.validate(n, v, h, "B1")?;
        self.d1.validate(n, v, h, "D1")?;
        self.c_bar.validate(n, h, z, "Cbar")?;
        self.d_bar.validate(n, v, z, "Dbar")?;
        for k in 0..=n {
            let residual = cross_residual(self.d_bar.at(k), self.c_bar.at(k));
            if residual > ORTHO_TOL {
                return Err(Error::Assumption {
                    assumption: "output orthogonality Dbar* Cbar = 0",
                    k,
                    residual,
                });
            }
        }
        Ok(())
    }

    /// True when `C` and `D1` vanish, so the system is deterministic.
    pub fn is_deterministic(&self) -> bool {
        (0..=self.horizon).all(|k| self.c.ortho(k).amax() == 0.0 && self.d1.ortho(k).amax() == 0.0)
    }

    pub fn to_model(&self) -> MatrixModel {
        MatrixModel {
            steps: (0..=self.horizon)
                .map(|k| StepModel {
                    a: self.a.ortho(k),
                    c: self.c.ortho(k),
                    channels: vec![Channel {
                        b: self.b1.ortho(k),
                        d: self.d1.ortho(k),
                    }],
                    out_state: self.c_bar.ortho(k),
                    out_inputs: vec![self.d_bar.ortho(k)],
                })
                .collect(),
        }
    }
}

/// Output sequence `z(0..=N)` of the system started at zero for disturbance
/// `v` along the noise path `omega`.
pub fn eval_perturbation(sys: &DisturbedSystemSpec, v: &[HVector], omega: &[f64]) -> Result<Vec<HVector>> {
    sys.validate()?;
    if v.len() != sys.horizon + 1 {
        return Err(Error::dim(format!(
            "{} disturbances for horizon {}",
            v.len(),
            sys.horizon
        )));
    }
    for vk in v {
        vk.space().ensure_same(&sys.disturbance_space, "disturbance")?;
    }
    let model = sys.to_model();
    let policy = AffinePolicy::zero(&model).with_offsets(vec![v.iter().map(HVector::ortho_coords).collect()]);
    let x0 = DVector::zeros(sys.state_space.dim());
    let tr = sim::simulate(&model, &policy, &x0, omega, None)?;
    tr.outputs
        .into_iter()
        .map(|z| HVector::from_ortho(sys.output_space.clone(), DVector::from_vec(z)))
        .collect()
}

struct BrlStep {
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    b1: DMatrix<f64>,
    d1: DMatrix<f64>,
    cc: DMatrix<f64>,
    dd: DMatrix<f64>,
}

fn brl_steps(sys: &DisturbedSystemSpec) -> Vec<BrlStep> {
    (0..=sys.horizon)
        .map(|k| {
            let cb = sys.c_bar.ortho(k);
            let db = sys.d_bar.ortho(k);
            BrlStep {
                a: sys.a.ortho(k),
                c: sys.c.ortho(k),
                b1: sys.b1.ortho(k),
                d1: sys.d1.ortho(k),
                cc: cb.transpose() * &cb,
                dd: db.transpose() * &db,
            }
        })
        .collect()
}

/// `(pi1, pi2, pi3)` at argument `y`.
fn pis(st: &BrlStep, y: &DMatrix<f64>, gamma: f64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let ya = y * &st.a;
    let yc = y * &st.c;
    let pi1 = st.a.transpose() * &ya + st.c.transpose() * &yc - &st.cc;
    let pi2 = st.b1.transpose() * &ya + st.d1.transpose() * &yc;
    let m = st.b1.ncols();
    let pi3 = DMatrix::identity(m, m) * (gamma * gamma) - &st.dd
        + st.b1.transpose() * y * &st.b1
        + st.d1.transpose() * y * &st.d1;
    (linalg::symmetrize(&pi1), pi2, linalg::symmetrize(&pi3))
}

/// Backward iteration of `Y(k) = T_k(Y(k+1))` for a fixed disturbance
/// feedback schedule `F(k): H -> V`, from `Y(N+1) = 0`.
pub fn backward_f_equation(sys: &DisturbedSystemSpec, f: &[OperatorExpr], gamma: f64) -> Result<Vec<OperatorExpr>> {
    sys.validate()?;
    if f.len() != sys.horizon + 1 {
        return Err(Error::dim(format!(
            "{} feedback operators for horizon {}",
            f.len(),
            sys.horizon
        )));
    }
    for fk in f {
        fk.domain().ensure_same(&sys.state_space, "F domain")?;
        fk.codomain().ensure_same(&sys.disturbance_space, "F codomain")?;
    }
    let h = &sys.state_space;
    let n = h.dim();
    let steps = brl_steps(sys);
    let mut y = DMatrix::zeros(n, n);
    let mut out = vec![OperatorExpr::from_ortho(h.clone(), h.clone(), &y)?];
    for k in (0..=sys.horizon).rev() {
        let (pi1, pi2, pi3) = pis(&steps[k], &y, gamma);
        let fm = f[k].ortho_matrix();
        let cross = pi2.transpose() * &fm;
        y = linalg::symmetrize(&(pi1 + &cross + cross.transpose() + fm.transpose() * pi3 * &fm));
        out.push(OperatorExpr::from_ortho(h.clone(), h.clone(), &y)?);
    }
    out.reverse();
    Ok(out)
}

/// Result of the bounded-real-lemma recursion at one attenuation level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BRLRun {
    pub gamma: f64,
    /// `Y(0..=N+1)`; entries below a singular `pi3` are `None`.
    pub y: Vec<Option<OperatorExpr>>,
    /// Certificate of `pi3(Y(k+1), k)` for each step reached.
    pub pi3: Vec<Option<SelfAdjointCert>>,
    pub feasible: bool,
    /// Largest `k` whose `pi3` is not positive.
    pub failing_step: Option<usize>,
    /// Step where `pi3` was not invertible and the recursion stopped.
    pub stopped_at: Option<usize>,
}

impl BRLRun {
    pub fn min_pi3_eigs(&self) -> Vec<Option<f64>> {
        self.pi3.iter().map(|c| c.map(|c| c.min_eig)).collect()
    }
}

struct BrlCore {
    y: Vec<Option<DMatrix<f64>>>,
    certs: Vec<Option<SelfAdjointCert>>,
    failing: Option<usize>,
    stopped: Option<usize>,
}

/// Runs the recursion through indefinite (but invertible) `pi3` so that every
/// step's certificate is available; feasibility only needs `failing == None`.
fn brl_core(steps: &[BrlStep], n: usize, gamma: f64, stop_early: bool) -> BrlCore {
    let horizon = steps.len() - 1;
    let mut core = BrlCore {
        y: vec![None; horizon + 2],
        certs: vec![None; horizon + 1],
        failing: None,
        stopped: None,
    };
    let mut y = DMatrix::zeros(n, n);
    core.y[horizon + 1] = Some(y.clone());
    for k in (0..=horizon).rev() {
        let (pi1, pi2, pi3) = pis(&steps[k], &y, gamma);
        let spec = linalg::sym_spectrum(&pi3);
        let cert = SelfAdjointCert::from_spectrum(&spec);
        core.certs[k] = Some(cert);
        if !cert.is_positive() && core.failing.is_none() {
            core.failing = Some(k);
            if stop_early {
                return core;
            }
        }
        let Ok((inv, _)) = linalg::sym_inverse(&pi3, KAPPA_MAX) else {
            core.stopped = Some(k);
            return core;
        };
        y = linalg::symmetrize(&(pi1 - pi2.transpose() * inv * &pi2));
        core.y[k] = Some(y.clone());
    }
    core
}

pub fn brl_check(sys: &DisturbedSystemSpec, gamma: f64) -> Result<BRLRun> {
    sys.validate()?;
    if !(gamma > 0.0) {
        return Err(Error::Parse(format!("attenuation level must be positive, got {gamma}")));
    }
    let h = &sys.state_space;
    let core = brl_core(&brl_steps(sys), h.dim(), gamma, false);
    let y = core
        .y
        .iter()
        .map(|m| {
            m.as_ref()
                .map(|m| OperatorExpr::from_ortho(h.clone(), h.clone(), m))
                .transpose()
        })
        .collect::<Result<_>>()?;
    Ok(BRLRun {
        gamma,
        y,
        pi3: core.certs,
        feasible: core.failing.is_none() && core.stopped.is_none(),
        failing_step: core.failing,
        stopped_at: core.stopped,
    })
}

fn feasible(steps: &[BrlStep], n: usize, gamma: f64) -> bool {
    let core = brl_core(steps, n, gamma, true);
    core.failing.is_none() && core.stopped.is_none()
}

/// Largest relative residual `||Y(k) - (pi1 - pi2* pi3^-1 pi2)|| / (1 + ||Y(k+1)||)`
/// over the steps of `run`, rebuilt through the operator algebra.
pub fn brl_residual(sys: &DisturbedSystemSpec, run: &BRLRun) -> Result<f64> {
    let mut worst: f64 = 0.0;
    let v = &sys.disturbance_space;
    for k in 0..=sys.horizon {
        let (Some(yk), Some(next)) = (&run.y[k], &run.y[k + 1]) else {
            continue;
        };
        let compose = |a: &OperatorExpr, b: &OperatorExpr| OperatorExpr::compose(a.clone(), b.clone());
        let sandwich =
            |t: &OperatorExpr, s: &OperatorExpr| -> Result<OperatorExpr> { compose(&t.adjoint(), &compose(next, s)?) };
        let (a, c, b1, d1) = (sys.a.at(k), sys.c.at(k), sys.b1.at(k), sys.d1.at(k));
        let (cb, db) = (sys.c_bar.at(k), sys.d_bar.at(k));
        let pi1 = OperatorExpr::sum(
            OperatorExpr::sum(sandwich(a, a)?, sandwich(c, c)?)?,
            OperatorExpr::scaled(-1.0, compose(&cb.adjoint(), cb)?),
        )?;
        let pi2 = OperatorExpr::sum(sandwich(b1, a)?, sandwich(d1, c)?)?;
        let g2 = run.gamma * run.gamma;
        let pi3 = OperatorExpr::sum(
            OperatorExpr::sum(
                OperatorExpr::scaled(g2, OperatorExpr::identity(v.clone())),
                OperatorExpr::scaled(-1.0, compose(&db.adjoint(), db)?),
            )?,
            OperatorExpr::sum(sandwich(b1, b1)?, sandwich(d1, d1)?)?,
        )?;
        let p2 = pi2.ortho_matrix();
        let solved = pi3.ortho_matrix().lu().solve(&p2).ok_or_else(|| Error::Domain {
            k,
            reason: "singular disturbance block".into(),
        })?;
        let want = pi1.ortho_matrix() - p2.transpose() * solved;
        let diff = linalg::spectral_norm(&(yk.ortho_matrix() - want));
        worst = worst.max(diff / (1.0 + next.norm()));
    }
    Ok(worst)
}

/// Bisection outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HinfNorm {
    pub norm: f64,
    pub iterations: usize,
    /// Final `(infeasible, feasible)` bracket.
    pub bracket: (f64, f64),
}

/// Largest upper end tried when growing the bracket.
pub const GAMMA_CAP: f64 = 1048576.0;

/// Induced norm of the perturbation operator by bisection on feasibility.
/// `gamma_hi = None` picks twice the deterministic oracle value when it
/// applies, otherwise doubles from 1 up to `GAMMA_CAP`.
pub fn hinf_norm(sys: &DisturbedSystemSpec, gamma_lo: f64, gamma_hi: Option<f64>, tol: f64) -> Result<HinfNorm> {
    sys.validate()?;
    if !(tol > 0.0) || !(gamma_lo >= 0.0) {
        return Err(Error::Bracket("need tol > 0 and gamma_lo >= 0".into()));
    }
    let steps = brl_steps(sys);
    let n = sys.state_space.dim();
    let hi = match gamma_hi {
        Some(hi) => {
            if !feasible(&steps, n, hi) {
                return Err(Error::Bracket(format!("upper end {hi} is not feasible")));
            }
            hi
        }
        None => {
            let seed = if sys.is_deterministic() {
                (2.0 * deterministic_norm_oracle(sys)?.norm).max(tol)
            } else {
                1.0
            };
            let mut hi = seed;
            while !feasible(&steps, n, hi) {
                hi *= 2.0;
                if hi > GAMMA_CAP {
                    return Err(Error::Bracket(format!("no feasible level up to {GAMMA_CAP}")));
                }
            }
            hi
        }
    };
    if gamma_lo > 0.0 && feasible(&steps, n, gamma_lo) {
        return Err(Error::Bracket(format!("lower end {gamma_lo} is already feasible")));
    }
    let (mut lo, mut hi) = (gamma_lo.min(hi), hi);
    let mut iterations = 0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if feasible(&steps, n, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    Ok(HinfNorm {
        norm: 0.5 * (lo + hi),
        iterations,
        bracket: (lo, hi),
    })
}

/// Largest singular value of the block lower-triangular input-output map
/// of a deterministic system, with a maximizing disturbance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleNorm {
    pub norm: f64,
    /// Unit-norm disturbance sequence attaining the norm.
    pub witness: Vec<HVector>,
}

/// Input-output matrix of a deterministic system (orthonormal coordinates).
pub(crate) fn io_matrix(sys: &DisturbedSystemSpec) -> DMatrix<f64> {
    let n1 = sys.horizon + 1;
    let mv = sys.disturbance_space.dim();
    let p = sys.output_space.dim();
    let a: Vec<_> = (0..n1).map(|k| sys.a.ortho(k)).collect();
    let b: Vec<_> = (0..n1).map(|k| sys.b1.ortho(k)).collect();
    let cb: Vec<_> = (0..n1).map(|k| sys.c_bar.ortho(k)).collect();
    let mut big = DMatrix::zeros(n1 * p, n1 * mv);
    for (j, bj) in b.iter().enumerate() {
        big.view_mut((j * p, j * mv), (p, mv)).copy_from(&sys.d_bar.ortho(j));
        // x(k) response to v(j) for k > j: A(k-1)...A(j+1) B1(j)
        let mut resp = bj.clone();
        for k in j + 1..n1 {
            big.view_mut((k * p, j * mv), (p, mv)).copy_from(&(&cb[k] * &resp));
            resp = &a[k] * resp;
        }
    }
    big
}

pub fn deterministic_norm_oracle(sys: &DisturbedSystemSpec) -> Result<OracleNorm> {
    sys.validate()?;
    if !sys.is_deterministic() {
        return Err(Error::OracleScope(
            "the norm oracle needs C(k) = 0 and D1(k) = 0 at every step".into(),
        ));
    }
    let big = io_matrix(sys);
    let mv = sys.disturbance_space.dim();
    let svd = big.svd(false, true);
    let (idx, norm) = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |best, (i, s)| if s > best.1 { (i, s) } else { best });
    let vt = svd.v_t.expect("requested");
    let top: DVector<f64> = vt.row(idx).transpose();
    let witness = (0..=sys.horizon)
        .map(|k| HVector::from_ortho(sys.disturbance_space.clone(), top.rows(k * mv, mv).into_owned()))
        .collect::<Result<_>>()?;
    Ok(OracleNorm { norm, witness })
}

/// `||L v|| / ||v||` for a deterministic system.
pub fn disturbance_gain(sys: &DisturbedSystemSpec, v: &[HVector]) -> Result<f64> {
    if !sys.is_deterministic() {
        return Err(Error::OracleScope(
            "gain evaluation needs a deterministic system".into(),
        ));
    }
    let z = eval_perturbation(sys, v, &vec![0.0; sys.horizon + 1])?;
    let num: f64 = z.iter().map(|z| z.norm().powi(2)).sum();
    let den: f64 = v.iter().map(|v| v.norm().powi(2)).sum();
    Ok((num / den).sqrt())
}

/// Whether `gamma^2 I - Dbar(k)* Dbar(k)` is positive at every step, a
/// necessary condition for attenuation below `gamma`.
pub fn check_feedthrough_positivity(sys: &DisturbedSystemSpec, gamma: f64) -> Result<bool> {
    sys.validate()?;
    let m = sys.disturbance_space.dim();
    for k in 0..=sys.horizon {
        let db = sys.d_bar.ortho(k);
        let op = DMatrix::identity(m, m) * (gamma * gamma) - db.transpose() * db;
        if !SelfAdjointCert::of_matrix(&op)?.is_positive() {
            return Ok(false);
        }
    }
    Ok(true)
}
