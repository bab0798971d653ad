//! Indefinite LQ synthesis on top of the Riccati recursion.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{HVector, OperatorExpr};
use crate::linalg;
use crate::riccati::{
    lq_steps, rk_gk_mat, solve_backward_riccati, ControlledSystemSpec, CostSpec, RiccatiSolution, RiccatiStatus,
};
use crate::sim::{
    self, AffinePolicy, Channel, ControlLaw, MatrixModel, QuadraticFunctional, StepModel, TrajectoryBundle,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LQProblem {
    pub sys: ControlledSystemSpec,
    pub cost: CostSpec,
    pub x0: HVector,
}

impl LQProblem {
    pub fn validate(&self) -> Result<()> {
        self.sys.validate()?;
        self.cost.validate(&self.sys)?;
        self.x0.space().ensure_same(&self.sys.state_space, "initial state")
    }
}

impl ControlledSystemSpec {
    /// Matrix model with a single input channel and no output map.
    pub fn to_model(&self) -> MatrixModel {
        let (n, m) = (self.state_space.dim(), self.input_space.dim());
        MatrixModel {
            steps: (0..=self.horizon)
                .map(|k| StepModel {
                    a: self.a.ortho(k),
                    c: self.c.ortho(k),
                    channels: vec![Channel {
                        b: self.b.ortho(k),
                        d: self.d.ortho(k),
                    }],
                    out_state: DMatrix::zeros(0, n),
                    out_inputs: vec![DMatrix::zeros(0, m)],
                })
                .collect(),
        }
    }
}

/// The LQ cost as a quadratic functional of `(x, u)`.
pub fn lq_functional(sys: &ControlledSystemSpec, cost: &CostSpec) -> QuadraticFunctional {
    let stage = (0..=sys.horizon)
        .map(|k| crate::hilbert::block_matrix(&cost.m.ortho(k), &cost.l.ortho(k), &cost.r.ortho(k)))
        .collect();
    QuadraticFunctional {
        stage,
        terminal: cost.s.ortho_matrix(),
    }
}

fn open_loop(model: &MatrixModel, u: &[HVector], sys: &ControlledSystemSpec) -> Result<AffinePolicy> {
    if u.len() != sys.horizon + 1 {
        return Err(Error::dim(format!(
            "{} controls given for horizon {}",
            u.len(),
            sys.horizon
        )));
    }
    for v in u {
        v.space().ensure_same(&sys.input_space, "control")?;
    }
    Ok(AffinePolicy::zero(model).with_offsets(vec![u.iter().map(HVector::ortho_coords).collect()]))
}

/// Cost along one noise path for an open-loop control sequence, including the terminal term.
pub fn eval_cost_pathwise(prob: &LQProblem, u: &[HVector], omega: &[f64]) -> Result<f64> {
    prob.validate()?;
    let model = prob.sys.to_model();
    let policy = open_loop(&model, u, &prob.sys)?;
    let f = lq_functional(&prob.sys, &prob.cost);
    Ok(
        sim::simulate(&model, &policy, &prob.x0.ortho_coords(), omega, Some(&f))?
            .cost
            .expect("functional supplied"),
    )
}

/// Expected cost (exact, by sign-path enumeration) of an arbitrary control law.
pub fn expected_cost(prob: &LQProblem, policy: &dyn ControlLaw) -> Result<f64> {
    prob.validate()?;
    let model = prob.sys.to_model();
    let f = lq_functional(&prob.sys, &prob.cost);
    sim::enumerate_expectation(&model, policy, &prob.x0.ortho_coords(), &f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LQSolution {
    pub riccati: RiccatiSolution,
    /// `<P(0) x0, x0>` when the recursion is solved with positive input weights.
    pub optimal_value: Option<f64>,
    pub well_posed: bool,
}

impl LQSolution {
    pub fn gains(&self) -> &[Option<OperatorExpr>] {
        &self.riccati.gains
    }

    /// Optimal feedback as a policy on the matrix model.
    pub fn policy(&self, model: &MatrixModel) -> Option<AffinePolicy> {
        let gains = self.riccati.gain_matrices()?;
        Some(AffinePolicy::feedback(model, vec![gains]))
    }
}

pub fn solve_lq(prob: &LQProblem) -> Result<LQSolution> {
    prob.validate()?;
    let riccati = solve_backward_riccati(&prob.sys, &prob.cost)?;
    let well_posed = riccati.is_solved();
    let optimal_value = if well_posed { riccati.value(&prob.x0)? } else { None };
    Ok(LQSolution {
        riccati,
        optimal_value,
        well_posed,
    })
}

/// Noise-free trajectory under the optimal feedback (the realized inputs of a
/// deterministic problem).
pub fn nominal_trajectory(prob: &LQProblem, sol: &LQSolution) -> Result<TrajectoryBundle> {
    let model = prob.sys.to_model();
    let policy = sol.policy(&model).ok_or_else(|| Error::Domain {
        k: 0,
        reason: "no feedback available".into(),
    })?;
    let f = lq_functional(&prob.sys, &prob.cost);
    sim::simulate(
        &model,
        &policy,
        &prob.x0.ortho_coords(),
        &vec![0.0; prob.sys.horizon + 1],
        Some(&f),
    )
}

/// Sufficient well-posedness test: a solved recursion with positive `R(k)`
/// bounds the cost below by `<P(0) x0, x0>`. Anything else is inconclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum WellPosedness {
    Certified { lower_bound: f64 },
    Unknown { status: RiccatiStatus },
}

pub fn well_posedness_certificate(prob: &LQProblem) -> Result<WellPosedness> {
    let sol = solve_lq(prob)?;
    Ok(match sol.optimal_value {
        Some(v) => WellPosedness::Certified { lower_bound: v },
        None => WellPosedness::Unknown {
            status: sol.riccati.status,
        },
    })
}

/// Both sides of the completing-square identity, with expectations computed exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletingSquare {
    /// Expected cost of the control law.
    pub cost: f64,
    /// `<P(0) x0, x0>`
    pub value: f64,
    /// Expected sum of `<R(k)(u + R^{-1} G x), u + R^{-1} G x>`.
    pub remainder: f64,
    /// `|cost - value - remainder|`
    pub residual: f64,
}

/// Requires every step of the recursion to exist (no domain failure).
pub fn completing_square_residual(prob: &LQProblem, policy: &dyn ControlLaw) -> Result<CompletingSquare> {
    prob.validate()?;
    let sol = solve_backward_riccati(&prob.sys, &prob.cost)?;
    if let RiccatiStatus::DomainFailure { k, reason } = &sol.status {
        return Err(Error::Domain {
            k: *k,
            reason: reason.clone(),
        });
    }
    let model = prob.sys.to_model();
    let x0 = prob.x0.ortho_coords();
    let cost = sim::enumerate_expectation(&model, policy, &x0, &lq_functional(&prob.sys, &prob.cost))?;
    let value = sol.value(&prob.x0)?.expect("solved recursion has P(0)");
    let n = prob.sys.state_space.dim();
    let stage = (0..=prob.sys.horizon)
        .map(|k| {
            // (u - K x)' R (u - K x) = xi' [-K I]' R [-K I] xi
            let r = sol.r[k].as_ref().expect("computed").ortho_matrix();
            let gain = sol.gains[k].as_ref().expect("computed").ortho_matrix();
            let m = r.nrows();
            let mut e = DMatrix::zeros(m, n + m);
            e.view_mut((0, 0), (m, n)).copy_from(&(-gain));
            e.view_mut((0, n), (m, m)).fill_with_identity();
            e.transpose() * r * e
        })
        .collect();
    let remainder_f = QuadraticFunctional {
        stage,
        terminal: DMatrix::zeros(n, n),
    };
    let remainder = sim::enumerate_expectation(&model, policy, &x0, &remainder_f)?;
    Ok(CompletingSquare {
        cost,
        value,
        remainder,
        residual: (cost - value - remainder).abs(),
    })
}

/// Control built at the first step (in backward order) where the input weight
/// fails to be invertible or positive: zero before it, a unit eigen-direction
/// of the smallest eigenvalue at it, optimal feedback after it. From `x0 = 0`
/// its expected cost equals that eigenvalue, so it costs nothing (singular
/// case) or drives the cost negative (indefinite case) while being nonzero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NecessityWitness {
    pub k: usize,
    pub min_eig: f64,
    pub direction: HVector,
    /// Exact expected cost from the zero initial state.
    pub cost: f64,
}

pub fn necessity_witness(sys: &ControlledSystemSpec, cost: &CostSpec) -> Result<Option<NecessityWitness>> {
    let sol = solve_backward_riccati(sys, cost)?;
    let k0 = match sol.status {
        RiccatiStatus::Solved => return Ok(None),
        RiccatiStatus::DomainFailure { k, .. } | RiccatiStatus::NotUniformlyPositive { k, .. } => k,
    };
    let steps = lq_steps(sys, cost);
    let next = sol.p[k0 + 1]
        .as_ref()
        .expect("present above the failing step")
        .ortho_matrix();
    let (r, _) = rk_gk_mat(&steps[k0], &next);
    let eig = SymmetricEigen::new(linalg::symmetrize(&r));
    let singular = matches!(sol.status, RiccatiStatus::DomainFailure { .. });
    let key = |v: f64| if singular { v.abs() } else { v };
    let idx = (0..eig.eigenvalues.len())
        .min_by(|&i, &j| key(eig.eigenvalues[i]).total_cmp(&key(eig.eigenvalues[j])))
        .expect("nonempty input space");
    let dir: DVector<f64> = eig.eigenvectors.column(idx).into_owned();

    let model = sys.to_model();
    let n = sys.state_space.dim();
    let m = sys.input_space.dim();
    let mut policy = AffinePolicy::zero(&model);
    policy.offsets[0][k0] = dir.clone();
    for k in k0 + 1..=sys.horizon {
        policy.gains[0][k] = sol.gains[k].as_ref().expect("computed above k0").ortho_matrix();
    }
    debug_assert_eq!(policy.gains[0][0].shape(), (m, n));
    let value = sim::enumerate_expectation(&model, &policy, &DVector::zeros(n), &lq_functional(sys, cost))?;
    Ok(Some(NecessityWitness {
        k: k0,
        min_eig: eig.eigenvalues[idx],
        direction: HVector::from_ortho(sys.input_space.clone(), dir)?,
        cost: value,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::Space;
    use crate::random;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> OperatorExpr {
        OperatorExpr::scaled(v, OperatorExpr::identity(Space::euclidean(1)))
    }

    fn scalar_problem(abcd: [f64; 4], mlrs: [f64; 4], n: usize, x0: f64) -> LQProblem {
        let [a, b, c, d] = abcd;
        let [m, l, r, s] = mlrs;
        let sys = ControlledSystemSpec {
            horizon: n,
            state_space: Space::euclidean(1),
            input_space: Space::euclidean(1),
            a: scalar(a).into(),
            b: scalar(b).into(),
            c: scalar(c).into(),
            d: scalar(d).into(),
        };
        let cost = CostSpec {
            m: scalar(m).into(),
            l: scalar(l).into(),
            r: scalar(r).into(),
            s: scalar(s),
        };
        LQProblem {
            sys,
            cost,
            x0: HVector::from_vec(Space::euclidean(1), vec![x0]).unwrap(),
        }
    }

    fn u1(v: f64) -> HVector {
        HVector::from_vec(Space::euclidean(1), vec![v]).unwrap()
    }

    #[test]
    fn pathwise_cost_examples() {
        let zero = scalar_problem([1.0, 1.0, 0.5, 0.5], [1.0, 0.0, 1.0, 1.0], 2, 0.0);
        assert_eq!(
            eval_cost_pathwise(&zero, &[u1(0.0), u1(0.0), u1(0.0)], &[0.0; 3]).unwrap(),
            0.0
        );
        let p = scalar_problem([1.0, 1.0, 0.0, 0.0], [1.0, 0.0, 1.0, 1.0], 0, 1.0);
        assert!((eval_cost_pathwise(&p, &[u1(-0.5)], &[0.0]).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn zero_cost_problem() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sys = random::controlled_system(&mut rng, 3, 2, 3);
        let cost = CostSpec::zero(&sys);
        let x0 = HVector::from_vec(Space::euclidean(3), vec![1.0, -1.0, 2.0]).unwrap();
        let prob = LQProblem { sys, cost, x0 };
        let sol = solve_lq(&prob).unwrap();
        assert_eq!(sol.optimal_value, Some(0.0));
        assert!(sol.gains().iter().flatten().all(|g| g.to_matrix().amax() == 0.0));
        assert_eq!(
            well_posedness_certificate(&prob).unwrap(),
            WellPosedness::Certified { lower_bound: 0.0 }
        );
    }

    #[test]
    fn optimal_feedback_annihilates_the_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let sys = random::controlled_system(&mut rng, 3, 2, 4);
        let cost = random::nonnegative_cost(&mut rng, &sys);
        let x0 = HVector::from_vec(Space::euclidean(3), vec![0.5, 1.0, -0.3]).unwrap();
        let prob = LQProblem { sys, cost, x0 };
        let sol = solve_lq(&prob).unwrap();
        let model = prob.sys.to_model();
        let cs = completing_square_residual(&prob, &sol.policy(&model).unwrap()).unwrap();
        assert!(cs.remainder.abs() <= 1e-10 * (1.0 + cs.cost.abs()));
        assert!(cs.residual <= 1e-8 * (1.0 + cs.cost.abs()));
        assert!(
            (expected_cost(&prob, &sol.policy(&model).unwrap()).unwrap() - sol.optimal_value.unwrap()).abs() < 1e-10
        );
    }

    #[test]
    fn open_loop_scalar_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let prob = scalar_problem([0.9, 1.1, 0.4, 0.3], [1.0, 0.2, 0.7, 2.0], 3, 1.3);
        let model = prob.sys.to_model();
        let offsets = (0..4)
            .map(|_| DVector::from_element(1, rng.random_range(-1.0..1.0)))
            .collect();
        let policy = AffinePolicy::zero(&model).with_offsets(vec![offsets]);
        let cs = completing_square_residual(&prob, &policy).unwrap();
        assert!(cs.residual <= 1e-10, "{cs:?}");
        assert!(cs.remainder > 0.0);
    }

    #[test]
    fn perturbation_costs_exactly_the_remainder() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let sys = random::controlled_system(&mut rng, 2, 1, 3);
        let cost = random::nonnegative_cost(&mut rng, &sys);
        let x0 = HVector::from_vec(Space::euclidean(2), vec![1.0, 0.4]).unwrap();
        let prob = LQProblem { sys, cost, x0 };
        let sol = solve_lq(&prob).unwrap();
        let model = prob.sys.to_model();
        let offsets = (0..4)
            .map(|_| DVector::from_element(1, rng.random_range(-0.5..0.5)))
            .collect();
        let policy = sol.policy(&model).unwrap().with_offsets(vec![offsets]);
        let cs = completing_square_residual(&prob, &policy).unwrap();
        let increase = cs.cost - sol.optimal_value.unwrap();
        assert!((increase - cs.remainder).abs() <= 1e-10 * (1.0 + cs.cost.abs()));
        assert!(increase > 0.0);
    }

    #[test]
    fn witness_at_singular_step_costs_nothing() {
        // R(1) = r + b^2 s = -1 + 1 = 0 at the last step.
        let sys = scalar_problem([1.0, 1.0, 0.2, 0.0], [1.0, 0.0, -1.0, 1.0], 1, 0.0).sys;
        let cost = scalar_problem([1.0, 1.0, 0.2, 0.0], [1.0, 0.0, -1.0, 1.0], 1, 0.0).cost;
        let w = necessity_witness(&sys, &cost).unwrap().unwrap();
        assert_eq!(w.k, 1);
        assert!(w.cost.abs() < 1e-12);
        assert!((w.direction.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn witness_at_indefinite_step_is_negative() {
        let p = scalar_problem([1.0, 1.0, 0.2, 0.0], [1.0, 0.0, -3.0, 1.0], 2, 0.0);
        let w = necessity_witness(&p.sys, &p.cost).unwrap().unwrap();
        assert!(w.min_eig < 0.0);
        assert!((w.cost - w.min_eig).abs() < 1e-12);
    }

    #[test]
    fn solved_problem_has_no_witness() {
        let p = scalar_problem([1.0, 1.0, 0.2, 0.0], [1.0, 0.0, 1.0, 1.0], 2, 0.0);
        assert!(necessity_witness(&p.sys, &p.cost).unwrap().is_none());
    }
}
