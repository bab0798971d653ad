//! Worked examples built from first principles: a Gaussian-blur audio model,
//! a controlled heat rod, a shift-register disturbance model and a two-player
//! shift game. Each runner compares computed values with reference values.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{hinf_design, solve_coupled_riccati, verify_nash_equilibrium, GameParams, TwoInputSystemSpec};
use crate::hilbert::{HVector, OperatorExpr, Space};
use crate::hinf::{brl_check, hinf_norm, DisturbedSystemSpec};
use crate::io::{CsvTable, RunOutput};
use crate::lq::{nominal_trajectory, solve_lq, LQProblem};
use crate::riccati::{ControlledSystemSpec, CostSpec};
use crate::system::OpSeq;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExampleId {
    #[serde(rename = "ex1")]
    Ex1,
    /// All three heat-rod cases.
    #[serde(rename = "ex2")]
    Ex2,
    #[serde(rename = "ex2-case1")]
    Ex2Case1,
    #[serde(rename = "ex2-case2")]
    Ex2Case2,
    #[serde(rename = "ex2-case3")]
    Ex2Case3,
    #[serde(rename = "ex3")]
    Ex3,
    #[serde(rename = "ex4")]
    Ex4,
}

impl ExampleId {
    pub const ALL: [ExampleId; 7] = [
        ExampleId::Ex1,
        ExampleId::Ex2,
        ExampleId::Ex2Case1,
        ExampleId::Ex2Case2,
        ExampleId::Ex2Case3,
        ExampleId::Ex3,
        ExampleId::Ex4,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExampleId::Ex1 => "ex1",
            ExampleId::Ex2 => "ex2",
            ExampleId::Ex2Case1 => "ex2-case1",
            ExampleId::Ex2Case2 => "ex2-case2",
            ExampleId::Ex2Case3 => "ex2-case3",
            ExampleId::Ex3 => "ex3",
            ExampleId::Ex4 => "ex4",
        }
    }
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExampleId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ExampleId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown example id {s:?}")))
    }
}

/// One computed quantity next to its reference value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub quantity: String,
    pub reference: f64,
    pub computed: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    /// Relative when `relative`, otherwise absolute.
    pub tolerance: f64,
    pub relative: bool,
    pub within_tolerance: bool,
}

impl Comparison {
    pub fn absolute(quantity: impl Into<String>, reference: f64, computed: f64, tolerance: f64) -> Self {
        Self::build(quantity.into(), reference, computed, tolerance, false)
    }

    pub fn relative(quantity: impl Into<String>, reference: f64, computed: f64, tolerance: f64) -> Self {
        Self::build(quantity.into(), reference, computed, tolerance, true)
    }

    fn build(quantity: String, reference: f64, computed: f64, tolerance: f64, relative: bool) -> Self {
        let abs_error = (computed - reference).abs();
        let rel_error = if reference == 0.0 {
            abs_error
        } else {
            abs_error / reference.abs()
        };
        let within_tolerance = if relative {
            rel_error <= tolerance
        } else {
            abs_error <= tolerance
        };
        Comparison {
            quantity,
            reference,
            computed,
            abs_error,
            rel_error,
            tolerance,
            relative,
            within_tolerance,
        }
    }
}

/// Outcome of one example run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleReport {
    pub id: ExampleId,
    pub comparisons: Vec<Comparison>,
    /// Further computed quantities without a reference value.
    pub values: serde_json::Map<String, serde_json::Value>,
    pub files: Vec<String>,
    #[serde(skip)]
    pub tables: Vec<CsvTable>,
}

impl ExampleReport {
    fn new(id: ExampleId) -> Self {
        ExampleReport {
            id,
            comparisons: Vec::new(),
            values: serde_json::Map::new(),
            files: Vec::new(),
            tables: Vec::new(),
        }
    }

    fn value(&mut self, key: &str, v: impl Serialize) {
        self.values
            .insert(key.to_string(), serde_json::to_value(v).expect("plain data serializes"));
    }

    pub fn all_within_tolerance(&self) -> bool {
        self.comparisons.iter().all(|c| c.within_tolerance)
    }

    pub fn comparison(&self, quantity: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.quantity == quantity)
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{}\n", self.id);
        for c in &self.comparisons {
            let _ = writeln!(
                s,
                "  {:<32} computed {:>16.8} reference {:>16.8} {} error {:.3e} (tol {:.1e}) {}",
                c.quantity,
                c.computed,
                c.reference,
                if c.relative { "rel" } else { "abs" },
                if c.relative { c.rel_error } else { c.abs_error },
                c.tolerance,
                if c.within_tolerance { "ok" } else { "MISMATCH" }
            );
        }
        s
    }

    /// Packs the report and its tables for `emit_outputs`.
    pub fn into_output(mut self) -> RunOutput {
        self.files = std::iter::once("report.json".to_string())
            .chain(self.tables.iter().map(|t| format!("{}.csv", t.name)))
            .chain(std::iter::once("summary.txt".to_string()))
            .collect();
        let summary = self.summary();
        let tables = std::mem::take(&mut self.tables);
        RunOutput {
            report: serde_json::to_value(&self).expect("report serializes"),
            tables,
            summary,
        }
    }
}

fn resolution(cond: bool, what: String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Resolution(what))
    }
}

// Audio blur model.

pub const EX1_HALF_WIDTH: f64 = 10.0;
pub const EX1_SPACING: f64 = 0.05;
/// Coarsest grid accepted for the audio model.
pub const EX1_MAX_SPACING: f64 = 0.1;
pub const EX1_MIN_HALF_WIDTH: f64 = 5.0;

/// Input waveform `cos(kappa * d - omega t + phi)` on `[-1, 1]` with
/// `kappa = pi`, `d = 2`, `omega = 0.1 pi`, `phi = 0`.
pub fn ex1_waveform(t: f64) -> f64 {
    let (kappa, d, omega, phi) = (PI, 2.0, 0.1 * PI, 0.0);
    if t.abs() <= 1.0 + 1e-9 {
        (kappa * d - omega * t + phi).cos()
    } else {
        0.0
    }
}

/// Gaussian blur `A`, waveform input `B`, `M = 10 I`, `R = 1`, no terminal
/// weight, `N = 1`, `x0 = exp(-t^2 / 2)`.
pub fn ex1_problem(half_width: f64, spacing: f64) -> Result<LQProblem> {
    resolution(
        spacing <= EX1_MAX_SPACING && half_width >= EX1_MIN_HALF_WIDTH,
        format!(
            "audio grid needs spacing <= {EX1_MAX_SPACING} and half width >= {EX1_MIN_HALF_WIDTH}, \
             got spacing {spacing}, half width {half_width}"
        ),
    )?;
    let h = Space::l2_line(half_width, spacing);
    h.validate()?;
    let u = Space::euclidean(1);
    let b = HVector::sample(h.clone(), ex1_waveform)?;
    let bm = DMatrix::from_column_slice(h.dim(), 1, b.coords().as_slice());
    let sys = ControlledSystemSpec {
        horizon: 1,
        state_space: h.clone(),
        input_space: u.clone(),
        a: OperatorExpr::gaussian_convolution(1.0, h.clone())?.into(),
        b: OperatorExpr::dense(u.clone(), h.clone(), bm)?.into(),
        c: OperatorExpr::zero(h.clone(), h.clone()).into(),
        d: OperatorExpr::zero(u.clone(), h.clone()).into(),
    };
    let cost = CostSpec {
        m: OperatorExpr::scaled(10.0, OperatorExpr::identity(h.clone())).into(),
        l: OperatorExpr::zero(h.clone(), u.clone()).into(),
        r: OperatorExpr::identity(u).into(),
        s: OperatorExpr::zero(h.clone(), h.clone()),
    };
    let x0 = HVector::sample(h, |t| (-0.5 * t * t).exp())?;
    Ok(LQProblem { sys, cost, x0 })
}

fn run_ex1(dim: Option<usize>) -> Result<ExampleReport> {
    let spacing = match dim {
        Some(n) if n >= 2 => 2.0 * EX1_HALF_WIDTH / (n - 1) as f64,
        Some(n) => {
            return Err(Error::Resolution(format!(
                "audio grid needs at least 2 points, got {n}"
            )))
        }
        None => EX1_SPACING,
    };
    let prob = ex1_problem(EX1_HALF_WIDTH, spacing)?;
    let sol = solve_lq(&prob)?;
    let value = sol.optimal_value.ok_or_else(|| Error::Domain {
        k: 0,
        reason: format!("{:?}", sol.riccati.status),
    })?;
    let traj = nominal_trajectory(&prob, &sol)?;
    let u: Vec<f64> = traj.inputs.iter().map(|i| i[0][0]).collect();

    let mut rep = ExampleReport::new(ExampleId::Ex1);
    rep.comparisons
        .push(Comparison::relative("J(x0, u*)", 24.052, value, 0.01));
    rep.comparisons.push(Comparison::absolute("u*(0)", -0.63, u[0], 0.01));
    rep.comparisons.push(Comparison::absolute("u*(1)", 0.0, u[1], 1e-6));
    rep.value("grid_points", prob.sys.state_space.dim());
    rep.value("spacing", spacing);
    rep.value("optimal_inputs", &u);
    // Same run with the state weight also charged at the final time, for comparison.
    let mut with_terminal = prob.clone();
    with_terminal.cost.s = OperatorExpr::scaled(10.0, OperatorExpr::identity(prob.sys.state_space.clone()));
    if let Some(v) = solve_lq(&with_terminal)?.optimal_value {
        rep.value("value_with_terminal_state_weight", v);
    }

    let h = &prob.sys.state_space;
    let grid = h.grid().expect("line space");
    let last = HVector::from_ortho(
        h.clone(),
        DVector::from_vec(traj.states.last().cloned().unwrap_or_default()),
    )?;
    let mut t = CsvTable::new("ex1_signal", &["t", "initial", "final"]);
    for (i, ti) in grid.iter().enumerate() {
        t.rows.push(vec![*ti, prob.x0.coords()[i], last.coords()[i]]);
    }
    rep.tables.push(t);
    Ok(rep)
}

// Heat rod.

pub const EX2_MODES: usize = 64;
pub const EX2_MIN_MODES: usize = 8;
pub const EX2_ALPHA: f64 = 0.1;
pub const EX2_TAU: f64 = 1.0;

/// Reference inputs and values for the three heat-rod cases.
pub const EX2_REFERENCE: [([f64; 3], f64); 3] = [
    ([-33.3, -6.8, -2.5], 22471.0),
    ([-122.4, -0.03, -0.01], 18010.0),
    ([-270.1, 6.2, 20.1], 62243.0),
];

/// `(M = S weight, R)` of each heat-rod case.
pub const EX2_WEIGHTS: [(f64, f64); 3] = [(10.0, 1.0), (10.0, 0.0), (50.0, -1.0)];

/// Sine coefficients of `x (1 - x)` on the unit rod: `4 sqrt(2) / (n pi)^3` for odd `n`.
pub fn ex2_input_profile(modes: usize) -> Vec<f64> {
    (1..=modes)
        .map(|n| {
            if n % 2 == 1 {
                let np = n as f64 * PI;
                4.0 * SQRT_2 / (np * np * np)
            } else {
                0.0
            }
        })
        .collect()
}

/// Heat rod with `N = 2`, `x0 = 60 sin(pi x)`, `case` in `1..=3`.
pub fn ex2_problem(case: usize, modes: usize) -> Result<LQProblem> {
    resolution(
        modes >= EX2_MIN_MODES,
        format!("heat rod needs at least {EX2_MIN_MODES} sine modes, got {modes}"),
    )?;
    let (w, r) = *EX2_WEIGHTS
        .get(case.wrapping_sub(1))
        .ok_or_else(|| Error::Parse(format!("heat rod case must be 1, 2 or 3, got {case}")))?;
    let h = Space::l2_interval(1.0, modes);
    let u = Space::euclidean(1);
    let b = DMatrix::from_column_slice(modes, 1, &ex2_input_profile(modes));
    let sys = ControlledSystemSpec {
        horizon: 2,
        state_space: h.clone(),
        input_space: u.clone(),
        a: OperatorExpr::heat_semigroup(EX2_ALPHA, EX2_TAU, h.clone())?.into(),
        b: OperatorExpr::dense(u.clone(), h.clone(), b)?.into(),
        c: OperatorExpr::zero(h.clone(), h.clone()).into(),
        d: OperatorExpr::zero(u.clone(), h.clone()).into(),
    };
    let weight = OperatorExpr::scaled(w, OperatorExpr::identity(h.clone()));
    let cost = CostSpec {
        m: weight.clone().into(),
        l: OperatorExpr::zero(h.clone(), u.clone()).into(),
        r: OperatorExpr::scaled(r, OperatorExpr::identity(u)).into(),
        s: weight,
    };
    // 60 sin(pi x) = (60 / sqrt 2) phi_1.
    let mut x0 = vec![0.0; modes];
    x0[0] = 60.0 * FRAC_1_SQRT_2;
    Ok(LQProblem {
        sys,
        cost,
        x0: HVector::from_vec(h, x0)?,
    })
}

/// Temperature `sum_n c_n sqrt(2) sin(n pi x)` at `points` nodes of `[0, 1]`.
pub fn ex2_temperature(coeffs: &[f64], points: usize) -> Vec<(f64, f64)> {
    (0..points)
        .map(|i| {
            let x = i as f64 / (points - 1) as f64;
            let t = coeffs
                .iter()
                .enumerate()
                .map(|(n, c)| c * SQRT_2 * ((n + 1) as f64 * PI * x).sin())
                .sum();
            (x, t)
        })
        .collect()
}

fn run_ex2_case(case: usize, modes: usize, rep: &mut ExampleReport) -> Result<()> {
    let prob = ex2_problem(case, modes)?;
    let sol = solve_lq(&prob)?;
    let value = sol.optimal_value.ok_or_else(|| Error::Domain {
        k: 0,
        reason: format!("{:?}", sol.riccati.status),
    })?;
    let traj = nominal_trajectory(&prob, &sol)?;
    let (u_ref, j_ref) = EX2_REFERENCE[case - 1];
    for (k, uk) in traj.inputs.iter().enumerate() {
        rep.comparisons.push(Comparison::relative(
            format!("case{case} u*({k})"),
            u_ref[k],
            uk[0][0],
            0.01,
        ));
    }
    rep.comparisons.push(Comparison::relative(
        format!("case{case} J(x0, u*)"),
        j_ref,
        value,
        0.01,
    ));
    let zero_cost =
        crate::lq::eval_cost_pathwise(&prob, &vec![HVector::zeros(prob.sys.input_space.clone()); 3], &[0.0; 3])?;
    rep.value(&format!("case{case}_cost_without_control"), zero_cost);
    rep.value(&format!("case{case}_min_input_weight"), sol.riccati.min_r_eig());

    let mut t = CsvTable::new(format!("ex2_case{case}_temperature"), &["k", "x", "temperature"]);
    for (k, state) in traj.states.iter().enumerate() {
        for (x, temp) in ex2_temperature(state, 101) {
            t.rows.push(vec![k as f64, x, temp]);
        }
    }
    rep.tables.push(t);
    Ok(())
}

fn run_ex2(id: ExampleId, dim: Option<usize>) -> Result<ExampleReport> {
    let modes = dim.unwrap_or(EX2_MODES);
    let cases: &[usize] = match id {
        ExampleId::Ex2Case1 => &[1],
        ExampleId::Ex2Case2 => &[2],
        ExampleId::Ex2Case3 => &[3],
        _ => &[1, 2, 3],
    };
    let mut rep = ExampleReport::new(id);
    rep.value("modes", modes);
    for &c in cases {
        run_ex2_case(c, modes, &mut rep)?;
    }
    Ok(rep)
}

// Shift-register disturbance model.

pub const EX3_DIM: usize = 64;
pub const EX3_MIN_DIM: usize = 16;
pub const EX3_HORIZON: usize = 5;

fn step_family(horizon: usize, f: impl Fn(usize) -> Result<OperatorExpr>) -> Result<OpSeq> {
    Ok(OpSeq::Varying((0..=horizon).map(f).collect::<Result<_>>()?))
}

/// `H = l2(n)`, `Z = l2(n + 1)`, `V = R^4`, `N = 5`. Odd steps: `A = C` is the
/// right shift scaled by `sqrt(2)/2` and `B1 = D1` the filling of `V` scaled
/// by `sqrt(2)/2`. Even steps: `A = C = (sqrt(2)/4) I`, `B1 = D1 = 0`. The
/// output is `Cbar` = right shift into `Z` and `Dbar v = (v_1, 0, ...)`.
pub fn ex3_system(n: usize) -> Result<DisturbedSystemSpec> {
    resolution(
        n >= EX3_MIN_DIM,
        format!("shift model needs truncation dimension >= {EX3_MIN_DIM}, got {n}"),
    )?;
    let h = Space::ell2(n);
    let z = Space::ell2(n + 1);
    let v = Space::euclidean(4);
    let odd = FRAC_1_SQRT_2;
    let even = SQRT_2 / 4.0;
    let a = step_family(EX3_HORIZON, |k| {
        Ok(if k % 2 == 1 {
            OperatorExpr::scaled(odd, OperatorExpr::right_shift(h.clone(), h.clone())?)
        } else {
            OperatorExpr::scaled(even, OperatorExpr::identity(h.clone()))
        })
    })?;
    let b1 = step_family(EX3_HORIZON, |k| {
        Ok(if k % 2 == 1 {
            OperatorExpr::scaled(odd, OperatorExpr::filling(v.clone(), h.clone())?)
        } else {
            OperatorExpr::zero(v.clone(), h.clone())
        })
    })?;
    let mut first = DMatrix::zeros(n + 1, 4);
    first[(0, 0)] = 1.0;
    Ok(DisturbedSystemSpec {
        horizon: EX3_HORIZON,
        state_space: h.clone(),
        disturbance_space: v.clone(),
        output_space: z.clone(),
        c: a.clone(),
        a,
        d1: b1.clone(),
        b1,
        c_bar: OperatorExpr::right_shift(h, z.clone())?.into(),
        d_bar: OperatorExpr::dense(v, z, first)?.into(),
    })
}

/// The same model with the noise channels removed (`C = D1 = 0`).
pub fn ex3_deterministic(n: usize) -> Result<DisturbedSystemSpec> {
    let mut sys = ex3_system(n)?;
    let (h, v) = (sys.state_space.clone(), sys.disturbance_space.clone());
    sys.c = OperatorExpr::zero(h.clone(), h.clone()).into();
    sys.d1 = OperatorExpr::zero(v, h).into();
    Ok(sys)
}

/// Closed-form smallest eigenvalue of the disturbance block at steps `0..=5`.
pub fn ex3_rho_min(gamma: f64) -> [f64; 6] {
    let g2 = gamma * gamma;
    let base = g2 - 1.0;
    [
        base,
        g2 - 41.0 / 16.0 - 25.0 / (64.0 * (g2 - 1.25)),
        base,
        g2 - 9.0 / 4.0,
        base,
        base,
    ]
}

/// `3 sqrt(5) / 4`.
pub const EX3_NORM: f64 = 1.677_050_983_124_842_3;

/// `gamma` grid of the closed-form comparison.
pub fn ex3_gamma_grid() -> Vec<f64> {
    (0..20).map(|i| 1.3 + 1.2 * i as f64 / 19.0).collect()
}

fn run_ex3(dim: Option<usize>) -> Result<ExampleReport> {
    let n = dim.unwrap_or(EX3_DIM);
    let sys = ex3_system(n)?;
    let mut rep = ExampleReport::new(ExampleId::Ex3);
    let norm = hinf_norm(&sys, 0.0, None, 1e-6)?;
    rep.comparisons
        .push(Comparison::absolute("induced norm", EX3_NORM, norm.norm, 1e-4));
    rep.value("bisection", norm);

    let mut worst = [0.0f64; 6];
    let mut t = CsvTable::new("ex3_rho_min", &["gamma", "k", "computed", "closed_form"]);
    for g in ex3_gamma_grid() {
        let run = brl_check(&sys, g)?;
        let want = ex3_rho_min(g);
        for (k, cert) in run.pi3.iter().enumerate() {
            let got = cert.map_or(f64::NAN, |c| c.min_eig);
            worst[k] = worst[k].max((got - want[k]).abs());
            if got.is_nan() {
                worst[k] = f64::INFINITY;
            }
            t.rows.push(vec![g, k as f64, got, want[k]]);
        }
    }
    for (k, w) in worst.iter().enumerate() {
        rep.comparisons.push(Comparison::absolute(
            format!("max |rho_min error| step {k}"),
            0.0,
            *w,
            1e-10,
        ));
    }
    rep.value("feasible_at_1.7", brl_check(&sys, 1.7)?.feasible);
    rep.value("feasible_at_1.6", brl_check(&sys, 1.6)?.feasible);
    rep.tables.push(t);
    Ok(rep)
}

// Two-player shift game.

pub const EX4_DIM: usize = 64;
pub const EX4_MIN_DIM: usize = 4;

/// `H = l2(n)`, `Z = l2(n + 1)`, `U = V = R^1`, `N = 1`, `A = C = I / 2`,
/// every input map and `Gbar` the filling of `R^1`, `Cbar` the right shift.
pub fn ex4_system(n: usize) -> Result<TwoInputSystemSpec> {
    resolution(
        n >= EX4_MIN_DIM,
        format!("shift game needs truncation dimension >= {EX4_MIN_DIM}, got {n}"),
    )?;
    let h = Space::ell2(n);
    let z = Space::ell2(n + 1);
    let r1 = Space::euclidean(1);
    let half = OpSeq::from(OperatorExpr::scaled(0.5, OperatorExpr::identity(h.clone())));
    let fill = OpSeq::from(OperatorExpr::filling(r1.clone(), h.clone())?);
    Ok(TwoInputSystemSpec {
        horizon: 1,
        state_space: h.clone(),
        control_space: r1.clone(),
        disturbance_space: r1.clone(),
        output_space: z.clone(),
        a: half.clone(),
        c: half,
        b1: fill.clone(),
        d1: fill.clone(),
        b2: fill.clone(),
        d2: fill,
        c_bar: OperatorExpr::right_shift(h, z.clone())?.into(),
        g_bar: OperatorExpr::filling(r1, z)?.into(),
    })
}

/// `x0 = (1, r, r^2, ...)` with `r = sqrt(2)/2`.
pub fn ex4_x0(n: usize) -> Result<HVector> {
    HVector::from_vec(Space::ell2(n), (0..n).map(|i| FRAC_1_SQRT_2.powi(i as i32)).collect())
}

/// Closed-form gain and value constants of the shift game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ex4ClosedForm {
    pub upsilon1: f64,
    pub upsilon2: f64,
    pub omega1: f64,
    pub omega2: f64,
}

impl Ex4ClosedForm {
    pub fn new(gamma: f64, rho: f64) -> Self {
        let g2 = gamma * gamma;
        let u1 = 1.0 / (3.0 * g2 - 2.0);
        let u2 = -g2 / (3.0 * g2 - 2.0);
        Ex4ClosedForm {
            upsilon1: u1,
            upsilon2: u2,
            omega1: -u1 - 2.0 * u2 - 2.0 * u1 * u2 - 3.0 * u2 * u2,
            omega2: 2.0 * u1 + u2 + 2.0 * u1 * u2 + (2.0 - rho * rho) * u1 * u1,
        }
    }

    /// `(P1(0), P2(0), K1(0), K2(0))` on `l2(n)`.
    pub fn matrices(&self, n: usize) -> [DMatrix<f64>; 4] {
        let mut p1 = DMatrix::identity(n, n) * -1.5;
        let mut p2 = DMatrix::identity(n, n) * 1.5;
        p1[(0, 0)] += self.omega1;
        p2[(0, 0)] += self.omega2;
        let mut k1 = DMatrix::zeros(1, n);
        let mut k2 = DMatrix::zeros(1, n);
        k1[(0, 0)] = self.upsilon1;
        k2[(0, 0)] = self.upsilon2;
        [p1, p2, k1, k2]
    }
}

/// `(gamma, rho)` grid over `[2, 3] x [0, 1]`.
pub fn ex4_grid(points: usize) -> Vec<(f64, f64)> {
    let step = |i: usize| i as f64 / (points - 1) as f64;
    (0..points)
        .flat_map(|i| (0..points).map(move |j| (2.0 + step(i), step(j))))
        .collect()
}

fn ex4_values(sys: &TwoInputSystemSpec, x0: &HVector, gamma: f64, rho: f64) -> Result<(f64, f64)> {
    let sol = solve_coupled_riccati(sys, GameParams { gamma, rho })?;
    sol.require_solved()?;
    Ok(sol.values(x0)?.expect("solved"))
}

fn run_ex4(dim: Option<usize>) -> Result<ExampleReport> {
    let n = dim.unwrap_or(EX4_DIM);
    let sys = ex4_system(n)?;
    let x0 = ex4_x0(n)?;
    let mut rep = ExampleReport::new(ExampleId::Ex4);

    let params = GameParams { gamma: 2.0, rho: 0.0 };
    let sol = solve_coupled_riccati(&sys, params)?;
    sol.require_solved()?;
    let cf = Ex4ClosedForm::new(2.0, 0.0);
    let [p1, p2, k1, k2] = cf.matrices(n);
    let get = |v: &Vec<Option<OperatorExpr>>| v[0].as_ref().expect("solved").ortho_matrix();
    rep.comparisons.push(Comparison::absolute(
        "K1(0) first coordinate",
        0.1,
        get(&sol.k1)[(0, 0)],
        1e-10,
    ));
    rep.comparisons.push(Comparison::absolute(
        "K2(0) first coordinate",
        -0.4,
        get(&sol.k2)[(0, 0)],
        1e-10,
    ));
    let off = |m: &DMatrix<f64>| m.iter().skip(1).fold(0.0f64, |a, x| a.max(x.abs()));
    rep.comparisons.push(Comparison::absolute(
        "K1(0), K2(0) other coordinates",
        0.0,
        off(&get(&sol.k1)).max(off(&get(&sol.k2))),
        1e-10,
    ));
    rep.comparisons.push(Comparison::absolute(
        "max |P1(0) - closed form|",
        0.0,
        (get(&sol.p1) - p1).amax(),
        1e-10,
    ));
    rep.comparisons.push(Comparison::absolute(
        "max |P2(0) - closed form|",
        0.0,
        (get(&sol.p2) - p2).amax(),
        1e-10,
    ));
    rep.comparisons.push(Comparison::absolute(
        "max |K gains - closed form|",
        0.0,
        (get(&sol.k1) - k1).amax().max((get(&sol.k2) - k2).amax()),
        1e-10,
    ));
    let (j1, j2) = sol.values(&x0)?.expect("solved");
    let norm2 = x0.norm().powi(2);
    rep.comparisons.push(Comparison::absolute(
        "J1(x0, u*, v*)",
        -1.5 * norm2 + cf.omega1,
        j1,
        1e-10,
    ));
    rep.comparisons
        .push(Comparison::absolute("J2(x0, u*, v*)", 2.74, j2, 1e-10));
    rep.value("closed_form", cf);
    rep.value("x0_norm_squared", norm2);

    let check = verify_nash_equilibrium(&sys, &sol, &x0, 50, 7)?;
    rep.comparisons.push(Comparison::absolute(
        "Nash worst margin (>= -1e-8)",
        0.0,
        check.worst_margin1.min(check.worst_margin2).min(0.0),
        1e-8,
    ));
    rep.value("nash_check", check);

    for g in [2.0, 2.5, 3.0] {
        let zs = solve_coupled_riccati(&sys, GameParams { gamma: g, rho: g })?;
        zs.require_solved()?;
        let gap = zs
            .p1
            .iter()
            .zip(&zs.p2)
            .map(|(a, b)| (a.as_ref().unwrap().ortho_matrix() + b.as_ref().unwrap().ortho_matrix()).amax())
            .fold(0.0, f64::max);
        rep.comparisons.push(Comparison::absolute(
            format!("max |P1 + P2| at gamma = rho = {g}"),
            0.0,
            gap,
            1e-10,
        ));
        let design = hinf_design(&sys, g)?;
        rep.value(&format!("hinf_design_feasible_at_{g}"), design.feasible);
    }

    let grid = ex4_grid(11);
    let one = |&(g, r): &(f64, f64)| ex4_values(&sys, &x0, g, r).map(|(a, b)| vec![g, r, a, b]);
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        grid.par_iter().map(one).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<f64>> = grid.iter().map(one).collect::<Result<_>>()?;
    let mut t = CsvTable::new("ex4_values", &["gamma", "rho", "j1", "j2"]);
    t.rows = rows;
    rep.tables.push(t);
    Ok(rep)
}

/// Runs one example. `dim` overrides the truncation (grid points for the
/// audio model, sine modes for the heat rod, `l2` dimension otherwise).
pub fn run_example(id: ExampleId, dim: Option<usize>) -> Result<ExampleReport> {
    match id {
        ExampleId::Ex1 => run_ex1(dim),
        ExampleId::Ex2 | ExampleId::Ex2Case1 | ExampleId::Ex2Case2 | ExampleId::Ex2Case3 => run_ex2(id, dim),
        ExampleId::Ex3 => run_ex3(dim),
        ExampleId::Ex4 => run_ex4(dim),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hinf::{deterministic_norm_oracle, eval_perturbation};

    #[test]
    fn ids_round_trip() {
        for id in ExampleId::ALL {
            assert_eq!(id.as_str().parse::<ExampleId>().unwrap(), id);
            assert_eq!(serde_json::to_string(&id).unwrap(), format!("\"{id}\""));
        }
        assert!("ex9".parse::<ExampleId>().is_err());
    }

    #[test]
    fn coarse_settings_are_rejected() {
        assert!(matches!(ex1_problem(10.0, 0.5), Err(Error::Resolution(_))));
        assert!(matches!(ex2_problem(1, 4), Err(Error::Resolution(_))));
        assert!(matches!(ex3_system(8), Err(Error::Resolution(_))));
        assert!(matches!(
            run_example(ExampleId::Ex4, Some(2)),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn input_profile_matches_quadrature() {
        let b = ex2_input_profile(5);
        for (n, bn) in b.iter().enumerate() {
            let m = 20_000;
            let q: f64 = (0..m)
                .map(|i| {
                    let x = (i as f64 + 0.5) / m as f64;
                    x * (1.0 - x) * SQRT_2 * ((n + 1) as f64 * PI * x).sin()
                })
                .sum::<f64>()
                / m as f64;
            assert!((q - bn).abs() < 1e-8, "mode {}", n + 1);
        }
    }

    #[test]
    fn shift_model_first_output() {
        let sys = ex3_system(16).unwrap();
        let mut v = vec![HVector::zeros(Space::euclidean(4)); 6];
        v[0] = HVector::from_vec(Space::euclidean(4), vec![0.7, 1.0, 2.0, 3.0]).unwrap();
        let z = eval_perturbation(&sys, &v, &[0.0; 6]).unwrap();
        assert_eq!(z[0].coords()[0], 0.7);
        assert!(z[0].coords().iter().skip(1).all(|x| *x == 0.0));
    }

    #[test]
    fn shift_model_feasibility_threshold() {
        let sys = ex3_system(16).unwrap();
        assert!(brl_check(&sys, 1.7).unwrap().feasible);
        assert!(!brl_check(&sys, 1.6).unwrap().feasible);
        let det = ex3_deterministic(16).unwrap();
        let oracle = deterministic_norm_oracle(&det).unwrap().norm;
        let bis = hinf_norm(&det, 0.0, None, 1e-7).unwrap().norm;
        assert!((oracle - bis).abs() < 1e-6, "{oracle} vs {bis}");
    }

    #[test]
    fn shift_game_closed_form_at_gamma_2() {
        let cf = Ex4ClosedForm::new(2.0, 0.0);
        assert!((cf.upsilon1 - 0.1).abs() < 1e-15 && (cf.upsilon2 + 0.4).abs() < 1e-15);
        assert!((cf.omega2 + 0.26).abs() < 1e-15);
        let rep = run_example(ExampleId::Ex4, Some(16)).unwrap();
        assert!(rep.comparison("K1(0) first coordinate").unwrap().within_tolerance);
    }

    #[test]
    fn report_lists_its_files() {
        let rep = run_example(ExampleId::Ex2, Some(16)).unwrap();
        let out = rep.into_output();
        assert_eq!(out.tables.len(), 3);
        let files = out.report["files"].as_array().unwrap();
        assert_eq!(files.len(), 5);
    }
}
