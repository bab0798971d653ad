//! Backward Riccati operator recursion for the multiplicative-noise LQ problem.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{block_matrix, HVector, OperatorExpr, SelfAdjointCert, Space};
use crate::linalg::{self, KAPPA_MAX};
use crate::system::{ensure_selfadjoint, OpSeq};

/// `x(k+1) = A x + B u + (C x + D u) w(k)` for `k = 0..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlledSystemSpec {
    pub horizon: usize,
    pub state_space: Space,
    pub input_space: Space,
    pub a: OpSeq,
    pub b: OpSeq,
    pub c: OpSeq,
    pub d: OpSeq,
}

/// Quadratic cost with state weight `m`, cross weight `l: H -> U`, input
/// weight `r` and terminal weight `s`. No sign conditions are imposed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub m: OpSeq,
    pub l: OpSeq,
    pub r: OpSeq,
    pub s: OperatorExpr,
}

impl ControlledSystemSpec {
    pub fn validate(&self) -> Result<()> {
        let (h, u, n) = (&self.state_space, &self.input_space, self.horizon);
        h.validate()?;
        u.validate()?;
        self.a.validate(n, h, h, "A")?;
        self.b.validate(n, u, h, "B")?;
        self.c.validate(n, h, h, "C")?;
        self.d.validate(n, u, h, "D")
    }
}

impl CostSpec {
    pub fn validate(&self, sys: &ControlledSystemSpec) -> Result<()> {
        let (h, u, n) = (&sys.state_space, &sys.input_space, sys.horizon);
        self.m.validate_selfadjoint(n, h, "M")?;
        self.l.validate(n, h, u, "L")?;
        self.r.validate_selfadjoint(n, u, "R")?;
        self.s.validate()?;
        self.s.domain().ensure_same(h, "S domain")?;
        self.s.codomain().ensure_same(h, "S codomain")?;
        ensure_selfadjoint(&self.s, "S")
    }

    /// Zero cost with identity input weight.
    pub fn zero(sys: &ControlledSystemSpec) -> Self {
        let (h, u) = (sys.state_space.clone(), sys.input_space.clone());
        CostSpec {
            m: OperatorExpr::zero(h.clone(), h.clone()).into(),
            l: OperatorExpr::zero(h.clone(), u.clone()).into(),
            r: OperatorExpr::identity(u).into(),
            s: OperatorExpr::zero(h.clone(), h),
        }
    }
}

/// Step data in an orthonormal frame.
#[derive(Debug, Clone)]
pub(crate) struct LqStep {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

pub(crate) fn lq_steps(sys: &ControlledSystemSpec, cost: &CostSpec) -> Vec<LqStep> {
    (0..=sys.horizon)
        .map(|k| LqStep {
            a: sys.a.ortho(k),
            b: sys.b.ortho(k),
            c: sys.c.ortho(k),
            d: sys.d.ortho(k),
            m: cost.m.ortho(k),
            l: cost.l.ortho(k),
            r: cost.r.ortho(k),
        })
        .collect()
}

/// `(R + B'XB + D'XD, L + B'XA + D'XC)` for symmetric `x`.
pub(crate) fn rk_gk_mat(st: &LqStep, x: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let xb = x * &st.b;
    let xd = x * &st.d;
    let r = &st.r + st.b.transpose() * &xb + st.d.transpose() * &xd;
    let g = &st.l + xb.transpose() * &st.a + xd.transpose() * &st.c;
    (linalg::symmetrize(&r), g)
}

pub(crate) struct StepOutput {
    pub p: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub cert: SelfAdjointCert,
}

/// One application of the Riccati map; `Err` carries the reason the
/// argument lies outside its domain.
pub(crate) fn pi_mat(st: &LqStep, x: &DMatrix<f64>, kappa_max: f64) -> std::result::Result<StepOutput, String> {
    let (r, g) = rk_gk_mat(st, x);
    let (rinv, spec) = linalg::sym_inverse(&r, kappa_max).map_err(|e| e.to_string())?;
    let gain = -(&rinv * &g);
    let p = st.a.transpose() * x * &st.a + st.c.transpose() * x * &st.c + &st.m + g.transpose() * &gain;
    Ok(StepOutput {
        p: linalg::symmetrize(&p),
        r,
        g,
        gain,
        cert: SelfAdjointCert::from_spectrum(&spec),
    })
}

fn check_step_args(sys: &ControlledSystemSpec, k: usize, x: &OperatorExpr) -> Result<()> {
    if k > sys.horizon {
        return Err(Error::dim(format!("step {k} beyond horizon {}", sys.horizon)));
    }
    x.domain().ensure_same(&sys.state_space, "X domain")?;
    x.codomain().ensure_same(&sys.state_space, "X codomain")?;
    ensure_selfadjoint(x, "X")
}

fn single_step(sys: &ControlledSystemSpec, cost: &CostSpec, k: usize) -> LqStep {
    LqStep {
        a: sys.a.ortho(k),
        b: sys.b.ortho(k),
        c: sys.c.ortho(k),
        d: sys.d.ortho(k),
        m: cost.m.ortho(k),
        l: cost.l.ortho(k),
        r: cost.r.ortho(k),
    }
}

/// The pair `(R(k), G(k))` built from a self-adjoint `x` on the state space.
pub fn rk_gk(
    sys: &ControlledSystemSpec,
    cost: &CostSpec,
    k: usize,
    x: &OperatorExpr,
) -> Result<(OperatorExpr, OperatorExpr)> {
    check_step_args(sys, k, x)?;
    let (r, g) = rk_gk_mat(&single_step(sys, cost, k), &x.ortho_matrix());
    Ok((
        OperatorExpr::from_ortho(sys.input_space.clone(), sys.input_space.clone(), &r)?,
        OperatorExpr::from_ortho(sys.state_space.clone(), sys.input_space.clone(), &g)?,
    ))
}

/// `A'XA + C'XC + M - G' R^{-1} G` at step `k`.
pub fn riccati_step(sys: &ControlledSystemSpec, cost: &CostSpec, k: usize, x: &OperatorExpr) -> Result<OperatorExpr> {
    check_step_args(sys, k, x)?;
    let out = pi_mat(&single_step(sys, cost, k), &x.ortho_matrix(), KAPPA_MAX)
        .map_err(|reason| Error::Domain { k, reason })?;
    OperatorExpr::from_ortho(sys.state_space.clone(), sys.state_space.clone(), &out.p)
}

/// Outcome of a backward run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RiccatiStatus {
    Solved,
    /// `P(k+1)` is outside the domain of the step-`k` map; steps below `k` were not computed.
    DomainFailure {
        k: usize,
        reason: String,
    },
    /// The recursion completed but `R(k)` is not positive (largest such `k` reported).
    NotUniformlyPositive {
        k: usize,
        min_eig: f64,
    },
}

/// Backward solution `P(0..=N+1)` with per-step input weights, cross terms and gains.
/// Entries below a domain failure are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiccatiSolution {
    pub horizon: usize,
    pub status: RiccatiStatus,
    /// Condition-number cap standing in for "bounded inverse" on the truncation.
    pub kappa_max: f64,
    pub p: Vec<Option<OperatorExpr>>,
    pub r: Vec<Option<OperatorExpr>>,
    pub g: Vec<Option<OperatorExpr>>,
    pub gains: Vec<Option<OperatorExpr>>,
    pub r_certs: Vec<Option<SelfAdjointCert>>,
}

impl RiccatiSolution {
    pub fn is_solved(&self) -> bool {
        self.status == RiccatiStatus::Solved
    }

    /// `<P(0) x0, x0>` when `P(0)` exists.
    pub fn value(&self, x0: &HVector) -> Result<Option<f64>> {
        match &self.p[0] {
            None => Ok(None),
            Some(p0) => Ok(Some(crate::hilbert::inner(&p0.apply(x0)?, x0)?)),
        }
    }

    /// Smallest eigenvalue over all computed `R(k)`.
    pub fn min_r_eig(&self) -> f64 {
        self.r_certs
            .iter()
            .flatten()
            .map(|c| c.min_eig)
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest eigenvalue over all computed `P(k)`.
    pub fn min_p_eig(&self) -> Result<f64> {
        let mut lo = f64::INFINITY;
        for p in self.p.iter().flatten() {
            lo = lo.min(SelfAdjointCert::of_matrix(&p.ortho_matrix())?.min_eig);
        }
        Ok(lo)
    }

    pub(crate) fn gain_matrices(&self) -> Option<Vec<DMatrix<f64>>> {
        self.gains
            .iter()
            .map(|g| g.as_ref().map(OperatorExpr::ortho_matrix))
            .collect()
    }
}

/// Runs the recursion from `P(N+1) = S` down to `P(0)` with the default condition cap.
pub fn solve_backward_riccati(sys: &ControlledSystemSpec, cost: &CostSpec) -> Result<RiccatiSolution> {
    solve_backward_riccati_with(sys, cost, KAPPA_MAX)
}

pub fn solve_backward_riccati_with(
    sys: &ControlledSystemSpec,
    cost: &CostSpec,
    kappa_max: f64,
) -> Result<RiccatiSolution> {
    sys.validate()?;
    cost.validate(sys)?;
    let n = sys.horizon;
    let (h, u) = (&sys.state_space, &sys.input_space);
    let mut sol = RiccatiSolution {
        horizon: n,
        status: RiccatiStatus::Solved,
        kappa_max,
        p: vec![None; n + 2],
        r: vec![None; n + 1],
        g: vec![None; n + 1],
        gains: vec![None; n + 1],
        r_certs: vec![None; n + 1],
    };
    let mut x = linalg::symmetrize(&cost.s.ortho_matrix());
    sol.p[n + 1] = Some(OperatorExpr::from_ortho(h.clone(), h.clone(), &x)?);
    let mut not_positive: Option<(usize, f64)> = None;
    for k in (0..=n).rev() {
        let st = single_step(sys, cost, k);
        let out = match pi_mat(&st, &x, kappa_max) {
            Ok(out) => out,
            Err(reason) => {
                sol.status = RiccatiStatus::DomainFailure { k, reason };
                return Ok(sol);
            }
        };
        if !out.cert.is_positive() && not_positive.is_none() {
            not_positive = Some((k, out.cert.min_eig));
        }
        sol.r[k] = Some(OperatorExpr::from_ortho(u.clone(), u.clone(), &out.r)?);
        sol.g[k] = Some(OperatorExpr::from_ortho(h.clone(), u.clone(), &out.g)?);
        sol.gains[k] = Some(OperatorExpr::from_ortho(h.clone(), u.clone(), &out.gain)?);
        sol.r_certs[k] = Some(out.cert);
        sol.p[k] = Some(OperatorExpr::from_ortho(h.clone(), h.clone(), &out.p)?);
        x = out.p;
    }
    if let Some((k, min_eig)) = not_positive {
        sol.status = RiccatiStatus::NotUniformlyPositive { k, min_eig };
    }
    Ok(sol)
}

/// Largest relative recursion residual `||P(k) - Pi_k(P(k+1))|| / (1 + ||P(k+1)||)`,
/// recomputed through the operator algebra (symbolic adjoints and compositions)
/// rather than the matrix path used by the solver.
pub fn recursion_residual(sys: &ControlledSystemSpec, cost: &CostSpec, sol: &RiccatiSolution) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 0..=sys.horizon {
        let (Some(pk), Some(next)) = (&sol.p[k], &sol.p[k + 1]) else {
            continue;
        };
        let compose = |a: &OperatorExpr, b: &OperatorExpr| OperatorExpr::compose(a.clone(), b.clone());
        let sandwich =
            |t: &OperatorExpr, s: &OperatorExpr| -> Result<OperatorExpr> { compose(&t.adjoint(), &compose(next, s)?) };
        let (a, b, c, d) = (sys.a.at(k), sys.b.at(k), sys.c.at(k), sys.d.at(k));
        let q = OperatorExpr::sum(
            OperatorExpr::sum(sandwich(a, a)?, sandwich(c, c)?)?,
            cost.m.at(k).clone(),
        )?;
        let r = OperatorExpr::sum(
            OperatorExpr::sum(sandwich(b, b)?, sandwich(d, d)?)?,
            cost.r.at(k).clone(),
        )?;
        let g = OperatorExpr::sum(
            OperatorExpr::sum(sandwich(b, a)?, sandwich(d, c)?)?,
            cost.l.at(k).clone(),
        )?;
        let gm = g.ortho_matrix();
        let rm = r.ortho_matrix();
        let sol_rg = rm.clone().lu().solve(&gm).ok_or_else(|| Error::Domain {
            k,
            reason: "singular input weight".into(),
        })?;
        let pi = q.ortho_matrix() - gm.transpose() * sol_rg;
        let diff = linalg::spectral_norm(&(pk.ortho_matrix() - pi));
        worst = worst.max(diff / (1.0 + next.norm()));
    }
    Ok(worst)
}

/// Sign checks behind the existence of a nonnegative solution:
/// `S >= 0`, `R(k) > 0` and `[[M, L*], [L, R]] >= 0` at every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub terminal: SelfAdjointCert,
    pub r: Vec<SelfAdjointCert>,
    pub psi: Vec<SelfAdjointCert>,
    pub terminal_nonnegative: bool,
    pub r_positive: bool,
    pub psi_nonnegative: bool,
}

impl HypothesisReport {
    pub fn all_hold(&self) -> bool {
        self.terminal_nonnegative && self.r_positive && self.psi_nonnegative
    }
}

pub fn check_nonnegativity_hypotheses(sys: &ControlledSystemSpec, cost: &CostSpec) -> Result<HypothesisReport> {
    sys.validate()?;
    cost.validate(sys)?;
    let terminal = SelfAdjointCert::of_matrix(&cost.s.ortho_matrix())?;
    let mut r = Vec::with_capacity(sys.horizon + 1);
    let mut psi = Vec::with_capacity(sys.horizon + 1);
    for k in 0..=sys.horizon {
        let rk = cost.r.ortho(k);
        r.push(SelfAdjointCert::of_matrix(&rk)?);
        psi.push(SelfAdjointCert::of_matrix(&block_matrix(
            &cost.m.ortho(k),
            &cost.l.ortho(k),
            &rk,
        ))?);
    }
    Ok(HypothesisReport {
        terminal_nonnegative: terminal.is_nonnegative(),
        r_positive: r.iter().all(SelfAdjointCert::is_positive),
        psi_nonnegative: psi.iter().all(SelfAdjointCert::is_nonnegative),
        terminal,
        r,
        psi,
    })
}
