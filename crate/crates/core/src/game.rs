//! Two-player stochastic games on the disturbed system: the coupled Riccati
//! recursion for Nash strategies, the zero-sum design and the mixed design.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{HVector, OperatorExpr, SelfAdjointCert, Space};
use crate::hinf::{brl_check, BRLRun, DisturbedSystemSpec, ORTHO_TOL};
use crate::linalg::{self, KAPPA_MAX};
use crate::riccati::{solve_backward_riccati, ControlledSystemSpec, CostSpec, RiccatiStatus};
use crate::sim::{self, AffinePolicy, Channel, MatrixModel, QuadraticFunctional, StepModel};
use crate::system::{cross_residual, OpSeq};

/// `x(k+1) = A x + B1 v + B2 u + (C x + D1 v + D2 u) w(k)`, `z = Cbar x + Gbar u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoInputSystemSpec {
    pub horizon: usize,
    pub state_space: Space,
    pub control_space: Space,
    pub disturbance_space: Space,
    pub output_space: Space,
    pub a: OpSeq,
    pub c: OpSeq,
    pub b1: OpSeq,
    pub d1: OpSeq,
    pub b2: OpSeq,
    pub d2: OpSeq,
    pub c_bar: OpSeq,
    pub g_bar: OpSeq,
}

impl TwoInputSystemSpec {
    /// Shape checks plus `Gbar* Cbar = 0` and `Gbar* Gbar = I` at every step.
    pub fn validate(&self) -> Result<()> {
        let (h, u, v, z, n) = (
            &self.state_space,
            &self.control_space,
            &self.disturbance_space,
            &self.output_space,
            self.horizon,
        );
        for s in [h, u, v, z] {
            s.validate()?;
        }
        self.a.validate(n, h, h, "A")?;
        self.c.validate(n, h, h, "C")?;
        self.b1.validate(n, v, h, "B1")?;
        self.d1.validate(n, v, h, "D1")?;
        self.b2.validate(n, u, h, "B2")?;
        self.d2.validate(n, u, h, "D2")?;
        self.c_bar.validate(n, h, z, "Cbar")?;
        self.g_bar.validate(n, u, z, "Gbar")?;
        for k in 0..=n {
            let residual = cross_residual(self.g_bar.at(k), self.c_bar.at(k));
            if residual > ORTHO_TOL {
                return Err(Error::Assumption {
                    assumption: "output orthogonality Gbar* Cbar = 0",
                    k,
                    residual,
                });
            }
            let g = self.g_bar.ortho(k);
            let residual = (g.transpose() * &g - DMatrix::identity(g.ncols(), g.ncols())).amax();
            if residual > ORTHO_TOL {
                return Err(Error::Assumption {
                    assumption: "output normalisation Gbar* Gbar = I",
                    k,
                    residual,
                });
            }
        }
        Ok(())
    }

    pub fn is_deterministic(&self) -> bool {
        (0..=self.horizon)
            .all(|k| self.c.ortho(k).amax() == 0.0 && self.d1.ortho(k).amax() == 0.0 && self.d2.ortho(k).amax() == 0.0)
    }

    /// Matrix model with channels `[v, u]` and output `z`.
    pub fn to_model(&self) -> MatrixModel {
        let p = self.output_space.dim();
        let mv = self.disturbance_space.dim();
        MatrixModel {
            steps: (0..=self.horizon)
                .map(|k| StepModel {
                    a: self.a.ortho(k),
                    c: self.c.ortho(k),
                    channels: vec![
                        Channel {
                            b: self.b1.ortho(k),
                            d: self.d1.ortho(k),
                        },
                        Channel {
                            b: self.b2.ortho(k),
                            d: self.d2.ortho(k),
                        },
                    ],
                    out_state: self.c_bar.ortho(k),
                    out_inputs: vec![DMatrix::zeros(p, mv), self.g_bar.ortho(k)],
                })
                .collect(),
        }
    }

    /// The disturbed system seen by `v` once `u(k) = K(k) x(k)` is applied.
    pub fn close_control(&self, gains: &[OperatorExpr]) -> Result<DisturbedSystemSpec> {
        self.validate()?;
        if gains.len() != self.horizon + 1 {
            return Err(Error::dim(format!(
                "{} gains for horizon {}",
                gains.len(),
                self.horizon
            )));
        }
        let (h, v, z) = (&self.state_space, &self.disturbance_space, &self.output_space);
        let mut a = Vec::new();
        let mut c = Vec::new();
        let mut cb = Vec::new();
        for (k, g) in gains.iter().enumerate() {
            let gm = g.ortho_matrix();
            if gm.shape() != (self.control_space.dim(), h.dim()) {
                return Err(Error::dim(format!("gain {k} has shape {:?}", gm.shape())));
            }
            a.push(OperatorExpr::from_ortho(
                h.clone(),
                h.clone(),
                &(self.a.ortho(k) + self.b2.ortho(k) * &gm),
            )?);
            c.push(OperatorExpr::from_ortho(
                h.clone(),
                h.clone(),
                &(self.c.ortho(k) + self.d2.ortho(k) * &gm),
            )?);
            cb.push(OperatorExpr::from_ortho(
                h.clone(),
                z.clone(),
                &(self.c_bar.ortho(k) + self.g_bar.ortho(k) * &gm),
            )?);
        }
        Ok(DisturbedSystemSpec {
            horizon: self.horizon,
            state_space: h.clone(),
            disturbance_space: v.clone(),
            output_space: z.clone(),
            a: OpSeq::Varying(a),
            c: OpSeq::Varying(c),
            b1: self.b1.clone(),
            d1: self.d1.clone(),
            c_bar: OpSeq::Varying(cb),
            d_bar: OperatorExpr::zero(v.clone(), z.clone()).into(),
        })
    }

    /// Zero-sum problem in the joint input `(v, u)`: state weight `Cbar* Cbar`,
    /// input weight `diag(-gamma^2 I, I)`, no cross or terminal weight.
    pub fn saddle_problem(&self, gamma: f64) -> Result<(ControlledSystemSpec, CostSpec)> {
        self.validate()?;
        let h = &self.state_space;
        let (mv, mu) = (self.disturbance_space.dim(), self.control_space.dim());
        let joint = Space::euclidean(mv + mu);
        let hcat = |x: &DMatrix<f64>, y: &DMatrix<f64>| {
            let mut m = DMatrix::zeros(x.nrows(), mv + mu);
            m.view_mut((0, 0), x.shape()).copy_from(x);
            m.view_mut((0, mv), y.shape()).copy_from(y);
            m
        };
        let mut b = Vec::new();
        let mut d = Vec::new();
        let mut m = Vec::new();
        for k in 0..=self.horizon {
            // Orthonormal joint coordinates; map back through the state weights.
            b.push(OperatorExpr::from_ortho(
                joint.clone(),
                h.clone(),
                &hcat(&self.b1.ortho(k), &self.b2.ortho(k)),
            )?);
            d.push(OperatorExpr::from_ortho(
                joint.clone(),
                h.clone(),
                &hcat(&self.d1.ortho(k), &self.d2.ortho(k)),
            )?);
            let cb = self.c_bar.ortho(k);
            m.push(OperatorExpr::from_ortho(
                h.clone(),
                h.clone(),
                &linalg::symmetrize(&(cb.transpose() * cb)),
            )?);
        }
        let mut r = DMatrix::identity(mv + mu, mv + mu);
        for i in 0..mv {
            r[(i, i)] = -gamma * gamma;
        }
        let sys = ControlledSystemSpec {
            horizon: self.horizon,
            state_space: h.clone(),
            input_space: joint.clone(),
            a: self.a.clone(),
            b: OpSeq::Varying(b),
            c: self.c.clone(),
            d: OpSeq::Varying(d),
        };
        let cost = CostSpec {
            m: OpSeq::Varying(m),
            l: OperatorExpr::zero(h.clone(), joint.clone()).into(),
            r: OperatorExpr::diagonal(joint, r.diagonal().iter().copied().collect())?.into(),
            s: OperatorExpr::zero(h.clone(), h.clone()),
        };
        Ok((sys, cost))
    }
}

/// Attenuation level `gamma` in the disturbance cost and weight `rho` on the
/// disturbance in the control cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    pub gamma: f64,
    pub rho: f64,
}

impl GameParams {
    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !(self.rho >= 0.0) || !self.gamma.is_finite() || !self.rho.is_finite() {
            return Err(Error::Parse(format!(
                "need gamma > 0 and rho >= 0, got gamma = {}, rho = {}",
                self.gamma, self.rho
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GameStatus {
    Solved,
    /// A player's input weight is not positive at step `k`; lower steps were not computed.
    Domain {
        k: usize,
        which: String,
        min_eig: f64,
    },
    /// The gain equations at step `k` have no unique solution.
    CouplingSingular {
        k: usize,
    },
}

/// Iteration cap and tolerance for the best-response fallback.
pub const FIXED_POINT_MAX_ITER: usize = 500;
pub const FIXED_POINT_TOL: f64 = 1e-12;

/// Per-step `K1` and `K2` in orthonormal coordinates.
pub type GainMatrices = (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>);

/// Backward solution of the coupled recursion. `p1, p2` hold `P(0..=N+1)`;
/// `k1: H -> V` and `k2: H -> U` are the feedback gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledSolution {
    pub params: GameParams,
    pub horizon: usize,
    pub status: GameStatus,
    pub p1: Vec<Option<OperatorExpr>>,
    pub p2: Vec<Option<OperatorExpr>>,
    pub k1: Vec<Option<OperatorExpr>>,
    pub k2: Vec<Option<OperatorExpr>>,
    pub r1_certs: Vec<Option<SelfAdjointCert>>,
    pub r2_certs: Vec<Option<SelfAdjointCert>>,
    /// Steps where the stacked gain system was ill-conditioned and the
    /// best-response iteration was used instead.
    pub fixed_point_steps: Vec<usize>,
}

impl CoupledSolution {
    pub fn is_solved(&self) -> bool {
        self.status == GameStatus::Solved
    }

    /// The status as an error when the recursion did not complete.
    pub fn require_solved(&self) -> Result<&Self> {
        match &self.status {
            GameStatus::Solved => Ok(self),
            GameStatus::Domain { k, which, min_eig } => Err(Error::GameDomain {
                k: *k,
                which: if which == "R1" { "R1" } else { "R2" },
                min_eig: *min_eig,
            }),
            GameStatus::CouplingSingular { k } => Err(Error::CouplingSingular { k: *k }),
        }
    }

    /// `(J1, J2) = (<P1(0) x0, x0>, <P2(0) x0, x0>)`.
    pub fn values(&self, x0: &HVector) -> Result<Option<(f64, f64)>> {
        match (&self.p1[0], &self.p2[0]) {
            (Some(p1), Some(p2)) => Ok(Some((
                crate::hilbert::inner(&p1.apply(x0)?, x0)?,
                crate::hilbert::inner(&p2.apply(x0)?, x0)?,
            ))),
            _ => Ok(None),
        }
    }

    /// `[K1(k)], [K2(k)]` in orthonormal coordinates.
    pub fn gain_matrices(&self) -> Option<GainMatrices> {
        let k1 = self
            .k1
            .iter()
            .map(|g| g.as_ref().map(OperatorExpr::ortho_matrix))
            .collect::<Option<_>>()?;
        let k2 = self
            .k2
            .iter()
            .map(|g| g.as_ref().map(OperatorExpr::ortho_matrix))
            .collect::<Option<_>>()?;
        Some((k1, k2))
    }

    pub fn policy(&self, model: &MatrixModel) -> Option<AffinePolicy> {
        let (k1, k2) = self.gain_matrices()?;
        Some(AffinePolicy::feedback(model, vec![k1, k2]))
    }
}

struct GameStep {
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    b1: DMatrix<f64>,
    d1: DMatrix<f64>,
    b2: DMatrix<f64>,
    d2: DMatrix<f64>,
    cc: DMatrix<f64>,
}

fn game_step(sys: &TwoInputSystemSpec, k: usize) -> GameStep {
    let cb = sys.c_bar.ortho(k);
    GameStep {
        a: sys.a.ortho(k),
        c: sys.c.ortho(k),
        b1: sys.b1.ortho(k),
        d1: sys.d1.ortho(k),
        b2: sys.b2.ortho(k),
        d2: sys.d2.ortho(k),
        cc: cb.transpose() * cb,
    }
}

/// Result of one backward step of the coupled recursion.
pub(crate) struct CoupledStep {
    pub p1: DMatrix<f64>,
    pub p2: DMatrix<f64>,
    pub k1: DMatrix<f64>,
    pub k2: DMatrix<f64>,
    pub r1: SelfAdjointCert,
    pub r2: SelfAdjointCert,
    pub fixed_point: bool,
}

fn cross_coupled_step_mat(
    st: &GameStep,
    p1: &DMatrix<f64>,
    p2: &DMatrix<f64>,
    params: GameParams,
    k: usize,
) -> std::result::Result<CoupledStep, GameStatus> {
    let (mv, mu) = (st.b1.ncols(), st.b2.ncols());
    let g2 = params.gamma * params.gamma;
    let r1 = linalg::symmetrize(
        &(DMatrix::identity(mv, mv) * g2 + st.b1.transpose() * p1 * &st.b1 + st.d1.transpose() * p1 * &st.d1),
    );
    let r2 = linalg::symmetrize(
        &(DMatrix::identity(mu, mu) + st.b2.transpose() * p2 * &st.b2 + st.d2.transpose() * p2 * &st.d2),
    );
    let cert1 = SelfAdjointCert::from_spectrum(&linalg::sym_spectrum(&r1));
    let cert2 = SelfAdjointCert::from_spectrum(&linalg::sym_spectrum(&r2));
    for (cert, which) in [(cert1, "R1"), (cert2, "R2")] {
        if !cert.is_positive() || cert.cond > KAPPA_MAX {
            return Err(GameStatus::Domain {
                k,
                which: which.into(),
                min_eig: cert.min_eig,
            });
        }
    }
    let x12 = st.b1.transpose() * p1 * &st.b2 + st.d1.transpose() * p1 * &st.d2;
    let x21 = st.b2.transpose() * p2 * &st.b1 + st.d2.transpose() * p2 * &st.d1;
    let y1 = st.b1.transpose() * p1 * &st.a + st.d1.transpose() * p1 * &st.c;
    let y2 = st.b2.transpose() * p2 * &st.a + st.d2.transpose() * p2 * &st.c;

    let mut big = DMatrix::zeros(mv + mu, mv + mu);
    big.view_mut((0, 0), (mv, mv)).copy_from(&r1);
    big.view_mut((0, mv), (mv, mu)).copy_from(&x12);
    big.view_mut((mv, 0), (mu, mv)).copy_from(&x21);
    big.view_mut((mv, mv), (mu, mu)).copy_from(&r2);
    let n = st.a.ncols();
    let mut rhs = DMatrix::zeros(mv + mu, n);
    rhs.view_mut((0, 0), (mv, n)).copy_from(&(-&y1));
    rhs.view_mut((mv, 0), (mu, n)).copy_from(&(-&y2));

    let sv = big.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let well_conditioned = smin > 0.0 && smax / smin <= KAPPA_MAX;
    let (k1, k2, fixed_point) = if well_conditioned {
        let sol = big.lu().solve(&rhs).ok_or(GameStatus::CouplingSingular { k })?;
        (sol.rows(0, mv).into_owned(), sol.rows(mv, mu).into_owned(), false)
    } else {
        let r1i = linalg::sym_inverse(&r1, KAPPA_MAX)
            .map_err(|_| GameStatus::CouplingSingular { k })?
            .0;
        let r2i = linalg::sym_inverse(&r2, KAPPA_MAX)
            .map_err(|_| GameStatus::CouplingSingular { k })?
            .0;
        let mut k2 = DMatrix::zeros(mu, n);
        let mut k1 = DMatrix::zeros(mv, n);
        let mut converged = false;
        for _ in 0..FIXED_POINT_MAX_ITER {
            let nk1 = -(&r1i * (&y1 + &x12 * &k2));
            let nk2 = -(&r2i * (&y2 + &x21 * &nk1));
            let change = (&nk1 - &k1).amax().max((&nk2 - &k2).amax());
            k1 = nk1;
            k2 = nk2;
            if change <= FIXED_POINT_TOL * (1.0 + k1.amax().max(k2.amax())) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(GameStatus::CouplingSingular { k });
        }
        (k1, k2, true)
    };

    let a2 = &st.a + &st.b2 * &k2;
    let c2 = &st.c + &st.d2 * &k2;
    let gg1 = st.b1.transpose() * p1 * &a2 + st.d1.transpose() * p1 * &c2;
    let r1i = linalg::sym_inverse(&r1, KAPPA_MAX)
        .map_err(|_| GameStatus::CouplingSingular { k })?
        .0;
    let np1 = a2.transpose() * p1 * &a2 + c2.transpose() * p1 * &c2
        - k2.transpose() * &k2
        - &st.cc
        - gg1.transpose() * r1i * &gg1;

    let a1 = &st.a + &st.b1 * &k1;
    let c1m = &st.c + &st.d1 * &k1;
    let gg2 = st.b2.transpose() * p2 * &a1 + st.d2.transpose() * p2 * &c1m;
    let r2i = linalg::sym_inverse(&r2, KAPPA_MAX)
        .map_err(|_| GameStatus::CouplingSingular { k })?
        .0;
    let np2 = a1.transpose() * p2 * &a1 + c1m.transpose() * p2 * &c1m
        - k1.transpose() * &k1 * (params.rho * params.rho)
        + &st.cc
        - gg2.transpose() * r2i * &gg2;

    Ok(CoupledStep {
        p1: linalg::symmetrize(&np1),
        p2: linalg::symmetrize(&np2),
        k1,
        k2,
        r1: cert1,
        r2: cert2,
        fixed_point,
    })
}

/// One backward step: gains and `(P1(k), P2(k))` from `(P1(k+1), P2(k+1))`.
pub fn cross_coupled_step(
    sys: &TwoInputSystemSpec,
    params: GameParams,
    k: usize,
    p1: &OperatorExpr,
    p2: &OperatorExpr,
) -> Result<[OperatorExpr; 4]> {
    sys.validate()?;
    params.validate()?;
    if k > sys.horizon {
        return Err(Error::dim(format!("step {k} beyond horizon {}", sys.horizon)));
    }
    let h = &sys.state_space;
    for (p, what) in [(p1, "P1"), (p2, "P2")] {
        p.domain().ensure_same(h, what)?;
        p.codomain().ensure_same(h, what)?;
        crate::system::ensure_selfadjoint(p, what)?;
    }
    let out = cross_coupled_step_mat(&game_step(sys, k), &p1.ortho_matrix(), &p2.ortho_matrix(), params, k);
    let out = match out {
        Ok(out) => out,
        Err(status) => {
            let sol = CoupledSolution {
                params,
                horizon: sys.horizon,
                status,
                p1: vec![],
                p2: vec![],
                k1: vec![],
                k2: vec![],
                r1_certs: vec![],
                r2_certs: vec![],
                fixed_point_steps: vec![],
            };
            sol.require_solved()?;
            unreachable!("a failed step never reports success")
        }
    };
    Ok([
        OperatorExpr::from_ortho(h.clone(), h.clone(), &out.p1)?,
        OperatorExpr::from_ortho(h.clone(), h.clone(), &out.p2)?,
        OperatorExpr::from_ortho(h.clone(), sys.disturbance_space.clone(), &out.k1)?,
        OperatorExpr::from_ortho(h.clone(), sys.control_space.clone(), &out.k2)?,
    ])
}

/// Runs the coupled recursion from `P1(N+1) = P2(N+1) = 0`.
pub fn solve_coupled_riccati(sys: &TwoInputSystemSpec, params: GameParams) -> Result<CoupledSolution> {
    sys.validate()?;
    params.validate()?;
    let n = sys.horizon;
    let h = &sys.state_space;
    let dim = h.dim();
    let mut sol = CoupledSolution {
        params,
        horizon: n,
        status: GameStatus::Solved,
        p1: vec![None; n + 2],
        p2: vec![None; n + 2],
        k1: vec![None; n + 1],
        k2: vec![None; n + 1],
        r1_certs: vec![None; n + 1],
        r2_certs: vec![None; n + 1],
        fixed_point_steps: Vec::new(),
    };
    let mut p1 = DMatrix::zeros(dim, dim);
    let mut p2 = DMatrix::zeros(dim, dim);
    let zero = OperatorExpr::from_ortho(h.clone(), h.clone(), &p1)?;
    sol.p1[n + 1] = Some(zero.clone());
    sol.p2[n + 1] = Some(zero);
    for k in (0..=n).rev() {
        let out = match cross_coupled_step_mat(&game_step(sys, k), &p1, &p2, params, k) {
            Ok(out) => out,
            Err(status) => {
                sol.status = status;
                return Ok(sol);
            }
        };
        if out.fixed_point {
            sol.fixed_point_steps.push(k);
        }
        sol.r1_certs[k] = Some(out.r1);
        sol.r2_certs[k] = Some(out.r2);
        sol.k1[k] = Some(OperatorExpr::from_ortho(
            h.clone(),
            sys.disturbance_space.clone(),
            &out.k1,
        )?);
        sol.k2[k] = Some(OperatorExpr::from_ortho(h.clone(), sys.control_space.clone(), &out.k2)?);
        sol.p1[k] = Some(OperatorExpr::from_ortho(h.clone(), h.clone(), &out.p1)?);
        sol.p2[k] = Some(OperatorExpr::from_ortho(h.clone(), h.clone(), &out.p2)?);
        p1 = out.p1;
        p2 = out.p2;
    }
    Ok(sol)
}

/// Zero-sum design at level `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HinfDesign {
    pub gamma: f64,
    pub feasible: bool,
    /// First violated side condition in backward order: `(k, which, min_eig)`.
    pub failure: Option<(usize, String, f64)>,
    /// Saddle value operators `P(0..=N+1)`.
    pub p: Vec<Option<OperatorExpr>>,
    /// Worst-case disturbance gains `H -> V`.
    pub disturbance_gains: Vec<Option<OperatorExpr>>,
    /// Controller gains `H -> U`.
    pub control_gains: Vec<Option<OperatorExpr>>,
}

impl HinfDesign {
    pub fn require_feasible(&self) -> Result<&Self> {
        match &self.failure {
            None if self.feasible => Ok(self),
            Some((k, which, min_eig)) => Err(Error::DesignInfeasible {
                k: *k,
                which: if which == "disturbance" {
                    "disturbance"
                } else {
                    "control"
                },
                min_eig: *min_eig,
            }),
            None => Err(Error::DesignInfeasible {
                k: 0,
                which: "control",
                min_eig: f64::NAN,
            }),
        }
    }

    pub fn control_gain_matrices(&self) -> Option<Vec<DMatrix<f64>>> {
        self.control_gains
            .iter()
            .map(|g| g.as_ref().map(OperatorExpr::ortho_matrix))
            .collect()
    }

    pub fn control_gains_owned(&self) -> Option<Vec<OperatorExpr>> {
        self.control_gains.iter().cloned().collect()
    }
}

/// Solves the joint saddle recursion and checks, at every step, that the
/// disturbance block `gamma^2 I - B1* P B1 - D1* P D1` and the control block
/// `I + B2* P B2 + D2* P D2` are positive.
pub fn hinf_design(sys: &TwoInputSystemSpec, gamma: f64) -> Result<HinfDesign> {
    if !(gamma > 0.0) {
        return Err(Error::Parse(format!("attenuation level must be positive, got {gamma}")));
    }
    let (lsys, cost) = sys.saddle_problem(gamma)?;
    let ric = solve_backward_riccati(&lsys, &cost)?;
    let n = sys.horizon;
    let (h, v, u) = (&sys.state_space, &sys.disturbance_space, &sys.control_space);
    let (mv, mu) = (v.dim(), u.dim());
    let mut design = HinfDesign {
        gamma,
        feasible: false,
        failure: None,
        p: ric.p.clone(),
        disturbance_gains: vec![None; n + 1],
        control_gains: vec![None; n + 1],
    };
    for k in (0..=n).rev() {
        let Some(next) = &ric.p[k + 1] else { break };
        let st = game_step(sys, k);
        let pm = next.ortho_matrix();
        let dist = DMatrix::identity(mv, mv) * (gamma * gamma)
            - st.b1.transpose() * &pm * &st.b1
            - st.d1.transpose() * &pm * &st.d1;
        let ctrl = DMatrix::identity(mu, mu) + st.b2.transpose() * &pm * &st.b2 + st.d2.transpose() * &pm * &st.d2;
        for (m, which) in [(dist, "disturbance"), (ctrl, "control")] {
            let cert = SelfAdjointCert::from_spectrum(&linalg::sym_spectrum(&linalg::symmetrize(&m)));
            if !cert.is_positive() {
                design.failure = Some((k, which.into(), cert.min_eig));
                return Ok(design);
            }
        }
        if let Some(g) = &ric.gains[k] {
            let gm = g.ortho_matrix();
            design.disturbance_gains[k] = Some(OperatorExpr::from_ortho(
                h.clone(),
                v.clone(),
                &gm.rows(0, mv).into_owned(),
            )?);
            design.control_gains[k] = Some(OperatorExpr::from_ortho(
                h.clone(),
                u.clone(),
                &gm.rows(mv, mu).into_owned(),
            )?);
        }
    }
    match &ric.status {
        RiccatiStatus::DomainFailure { k, .. } => {
            design.failure = Some((*k, "control".into(), f64::NAN));
        }
        _ => design.feasible = true,
    }
    Ok(design)
}

/// Levels at or above this value are treated as the pure quadratic limit
/// (the disturbance is effectively switched off).
pub const LARGE_GAMMA: f64 = 1e6;

/// Mixed design: Nash gains plus the bounded-real check of the loop closed by `K2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H2HinfDesign {
    pub nash: CoupledSolution,
    /// Bounded-real run of the closed loop at `gamma`.
    pub closed_loop: Option<BRLRun>,
    /// For large `gamma`: largest entry of `K2 - K_lq`, where `K_lq` solves the
    /// control-only problem with state weight `Cbar* Cbar`.
    pub quadratic_limit_gap: Option<f64>,
    /// Set when `gamma >= LARGE_GAMMA`.
    pub diagnostic: Option<String>,
}

impl H2HinfDesign {
    pub fn attenuates(&self) -> bool {
        self.closed_loop.as_ref().is_some_and(|r| r.feasible)
    }
}

pub fn h2hinf_design(sys: &TwoInputSystemSpec, params: GameParams) -> Result<H2HinfDesign> {
    let nash = solve_coupled_riccati(sys, params)?;
    let closed_loop = match nash.k2.iter().cloned().collect::<Option<Vec<_>>>() {
        Some(k2) if nash.is_solved() => Some(brl_check(&sys.close_control(&k2)?, params.gamma)?),
        _ => None,
    };
    let quadratic_limit_gap = if params.gamma >= LARGE_GAMMA && nash.is_solved() {
        let lsys = ControlledSystemSpec {
            horizon: sys.horizon,
            state_space: sys.state_space.clone(),
            input_space: sys.control_space.clone(),
            a: sys.a.clone(),
            b: sys.b2.clone(),
            c: sys.c.clone(),
            d: sys.d2.clone(),
        };
        let h = &sys.state_space;
        let m = (0..=sys.horizon)
            .map(|k| {
                let cb = sys.c_bar.ortho(k);
                OperatorExpr::from_ortho(h.clone(), h.clone(), &linalg::symmetrize(&(cb.transpose() * cb)))
            })
            .collect::<Result<Vec<_>>>()?;
        let cost = CostSpec {
            m: OpSeq::Varying(m),
            ..CostSpec::zero(&lsys)
        };
        let lq = solve_backward_riccati(&lsys, &cost)?;
        match (lq.gain_matrices(), nash.gain_matrices()) {
            (Some(klq), Some((_, k2))) => Some(klq.iter().zip(&k2).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max)),
            _ => None,
        }
    } else {
        None
    };
    let diagnostic = (params.gamma >= LARGE_GAMMA).then(|| {
        format!(
            "gamma = {:e} is at or above {:e}: the disturbance weight dominates and the gains are \
             the large-gamma limit of the game; this is not a separate quadratic-only design \
             (gain gap to that design: {})",
            params.gamma,
            LARGE_GAMMA,
            quadratic_limit_gap.map_or("n/a".to_string(), |g| format!("{g:.3e}"))
        )
    });
    Ok(H2HinfDesign {
        nash,
        closed_loop,
        quadratic_limit_gap,
        diagnostic,
    })
}

/// Residuals of a solved coupled recursion: the largest relative gap between
/// `(P1(k), P2(k))` and a direct closed-loop evaluation of both costs, and the
/// largest gap in the best-response conditions `R_i K_i + G_i = 0`.
pub fn coupled_residual(sys: &TwoInputSystemSpec, sol: &CoupledSolution) -> Result<(f64, f64)> {
    sol.require_solved()?;
    let (g2, r2) = (sol.params.gamma.powi(2), sol.params.rho.powi(2));
    let (mut value_gap, mut gain_gap): (f64, f64) = (0.0, 0.0);
    for k in 0..=sys.horizon {
        let st = game_step(sys, k);
        let get = |v: &Vec<Option<OperatorExpr>>, i: usize| v[i].as_ref().expect("solved").ortho_matrix();
        let (p1, p2) = (get(&sol.p1, k + 1), get(&sol.p2, k + 1));
        let (k1, k2) = (get(&sol.k1, k), get(&sol.k2, k));
        let acl = &st.a + &st.b1 * &k1 + &st.b2 * &k2;
        let ccl = &st.c + &st.d1 * &k1 + &st.d2 * &k2;
        let out = &st.cc + k2.transpose() * &k2;
        let e1 = acl.transpose() * &p1 * &acl + ccl.transpose() * &p1 * &ccl + k1.transpose() * &k1 * g2 - &out;
        let e2 = acl.transpose() * &p2 * &acl + ccl.transpose() * &p2 * &ccl + &out - k1.transpose() * &k1 * r2;
        let scale = 1.0 + p1.amax().max(p2.amax());
        value_gap = value_gap
            .max((get(&sol.p1, k) - e1).amax() / scale)
            .max((get(&sol.p2, k) - e2).amax() / scale);

        let mv = st.b1.ncols();
        let mu = st.b2.ncols();
        let r1m = DMatrix::identity(mv, mv) * g2 + st.b1.transpose() * &p1 * &st.b1 + st.d1.transpose() * &p1 * &st.d1;
        let r2m = DMatrix::identity(mu, mu) + st.b2.transpose() * &p2 * &st.b2 + st.d2.transpose() * &p2 * &st.d2;
        let a2 = &st.a + &st.b2 * &k2;
        let c2 = &st.c + &st.d2 * &k2;
        let a1 = &st.a + &st.b1 * &k1;
        let c1 = &st.c + &st.d1 * &k1;
        let f1 = r1m * &k1 + st.b1.transpose() * &p1 * a2 + st.d1.transpose() * &p1 * c2;
        let f2 = r2m * &k2 + st.b2.transpose() * &p2 * a1 + st.d2.transpose() * &p2 * c1;
        gain_gap = gain_gap.max(f1.amax() / scale).max(f2.amax() / scale);
    }
    Ok((value_gap, gain_gap))
}

/// Largest horizon accepted by the equilibrium check.
pub const MAX_NASH_CHECK_HORIZON: usize = 12;

/// Outcome of probing the Nash inequalities with random deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NashCheck {
    /// Values predicted by the recursion.
    pub j1: f64,
    pub j2: f64,
    /// Values at the equilibrium computed by path enumeration.
    pub j1_enumerated: f64,
    pub j2_enumerated: f64,
    /// Smallest `J1(v, u*) - J1(v*, u*)` over the deviations tried.
    pub worst_margin1: f64,
    /// Smallest `J2(v*, u) - J2(v*, u*)` over the deviations tried.
    pub worst_margin2: f64,
    pub deviations: usize,
}

impl NashCheck {
    /// Whether both inequalities held and enumeration matched the recursion,
    /// up to `tol * (1 + |J|)`.
    pub fn holds(&self, tol: f64) -> bool {
        let s1 = tol * (1.0 + self.j1.abs());
        let s2 = tol * (1.0 + self.j2.abs());
        (self.j1 - self.j1_enumerated).abs() <= s1
            && (self.j2 - self.j2_enumerated).abs() <= s2
            && self.worst_margin1 >= -s1
            && self.worst_margin2 >= -s2
    }
}

fn game_functionals(model: &MatrixModel, params: GameParams) -> (QuadraticFunctional, QuadraticFunctional) {
    let g2 = params.gamma * params.gamma;
    let r2 = params.rho * params.rho;
    (
        QuadraticFunctional::output_energy(model, -1.0, &[g2, 0.0]),
        QuadraticFunctional::output_energy(model, 1.0, &[-r2, 0.0]),
    )
}

/// Exact `(J1, J2)` by path enumeration for arbitrary affine laws on `[v, u]`.
pub fn game_values(
    sys: &TwoInputSystemSpec,
    params: GameParams,
    policy: &AffinePolicy,
    x0: &HVector,
) -> Result<(f64, f64)> {
    sys.validate()?;
    params.validate()?;
    x0.space().ensure_same(&sys.state_space, "initial state")?;
    let model = sys.to_model();
    policy.check(&model)?;
    let (f1, f2) = game_functionals(&model, params);
    let x = x0.ortho_coords();
    Ok((
        sim::enumerate_expectation(&model, policy, &x, &f1)?,
        sim::enumerate_expectation(&model, policy, &x, &f2)?,
    ))
}

/// Evaluates both players' costs by enumeration at the computed equilibrium
/// and at `deviations` random unilateral deviations (perturbed gains plus
/// open-loop offsets) drawn from `seed`.
pub fn verify_nash_equilibrium(
    sys: &TwoInputSystemSpec,
    sol: &CoupledSolution,
    x0: &HVector,
    deviations: usize,
    seed: u64,
) -> Result<NashCheck> {
    if sys.horizon > MAX_NASH_CHECK_HORIZON {
        return Err(Error::EnumerationLimit {
            paths_log2: sys.horizon + 1,
            limit_log2: MAX_NASH_CHECK_HORIZON + 1,
        });
    }
    sol.require_solved()?;
    let params = sol.params;
    let (j1, j2) = sol.values(x0)?.expect("solved");
    let model = sys.to_model();
    let star = sol.policy(&model).expect("solved");
    let (j1e, j2e) = game_values(sys, params, &star, x0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut m1, mut m2) = (f64::INFINITY, f64::INFINITY);
    let scale = 1.0 + x0.norm();
    for _ in 0..deviations {
        for player in 0..2 {
            let mut p = star.clone();
            let amp = rng.random_range(0.01..1.0);
            for k in 0..=sys.horizon {
                let g = &mut p.gains[player][k];
                *g += DMatrix::from_fn(g.nrows(), g.ncols(), |_, _| amp * rng.random_range(-1.0..1.0));
                let o = &mut p.offsets[player][k];
                *o += DVector::from_fn(o.len(), |_, _| amp * scale * rng.random_range(-1.0..1.0));
            }
            let (d1, d2) = game_values(sys, params, &p, x0)?;
            if player == 0 {
                m1 = m1.min(d1 - j1e);
            } else {
                m2 = m2.min(d2 - j2e);
            }
        }
    }
    Ok(NashCheck {
        j1,
        j2,
        j1_enumerated: j1e,
        j2_enumerated: j2e,
        worst_margin1: m1,
        worst_margin2: m2,
        deviations,
    })
}
