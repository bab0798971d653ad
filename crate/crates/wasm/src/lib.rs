//! Browser bindings. Every export takes plain numbers and returns a JSON
//! string; failures come back as `{"error": "..."}`.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use hilbert_ctl::game::{solve_coupled_riccati, GameParams};
use hilbert_ctl::hinf::{brl_check, hinf_norm};
use hilbert_ctl::lq::{nominal_trajectory, solve_lq};
use hilbert_ctl::scenarios::{ex2_problem, ex2_temperature, ex3_system, ex4_system, ex4_x0, Ex4ClosedForm};
use hilbert_ctl::Result;

const MAX_DIM: usize = 256;
const MAX_POINTS: usize = 400;

fn respond(r: Result<Value>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

fn bounded(name: &str, v: usize, max: usize) -> Result<usize> {
    if v > max {
        return Err(hilbert_ctl::Error::Resolution(format!(
            "{name} is capped at {max} in the demo, got {v}"
        )));
    }
    Ok(v)
}

fn brl_profile_value(gamma_lo: f64, gamma_hi: f64, points: usize, dim: usize) -> Result<Value> {
    let points = bounded("points", points.max(2), MAX_POINTS)?;
    let sys = ex3_system(bounded("dim", dim, MAX_DIM)?)?;
    let norm = hinf_norm(&sys, 0.0, None, 1e-8)?.norm;
    let mut levels = Vec::with_capacity(points);
    for i in 0..points {
        let gamma = gamma_lo + (gamma_hi - gamma_lo) * i as f64 / (points - 1) as f64;
        let run = brl_check(&sys, gamma)?;
        levels.push(json!({
            "gamma": gamma,
            "feasible": run.feasible,
            "min_pi3": run.min_pi3_eigs(),
        }));
    }
    Ok(json!({ "norm": norm, "levels": levels }))
}

fn nash_values_value(gamma: f64, rho: f64, dim: usize) -> Result<Value> {
    let n = bounded("dim", dim, MAX_DIM)?;
    let sys = ex4_system(n)?;
    let sol = solve_coupled_riccati(&sys, GameParams { gamma, rho })?;
    sol.require_solved()?;
    let (j1, j2) = sol.values(&ex4_x0(n)?)?.expect("solved");
    let first = |v: &[Option<hilbert_ctl::hilbert::OperatorExpr>]| v[0].as_ref().map(|k| k.ortho_matrix()[(0, 0)]);
    Ok(json!({
        "gamma": gamma,
        "rho": rho,
        "j1": j1,
        "j2": j2,
        "k1": first(&sol.k1),
        "k2": first(&sol.k2),
        "closed_form": Ex4ClosedForm::new(gamma, rho),
    }))
}

fn heat_control_value(case: usize, modes: usize, points: usize) -> Result<Value> {
    let prob = ex2_problem(case, bounded("modes", modes, MAX_DIM)?)?;
    let points = bounded("points", points.max(2), MAX_POINTS)?;
    let sol = solve_lq(&prob)?;
    let traj = nominal_trajectory(&prob, &sol)?;
    let fields: Vec<Vec<f64>> = traj
        .states
        .iter()
        .map(|s| ex2_temperature(s, points).into_iter().map(|(_, t)| t).collect())
        .collect();
    let x: Vec<f64> = ex2_temperature(&traj.states[0], points)
        .into_iter()
        .map(|(x, _)| x)
        .collect();
    let inputs: Vec<f64> = traj.inputs.iter().map(|u| u[0][0]).collect();
    Ok(json!({
        "case": case,
        "value": sol.optimal_value,
        "inputs": inputs,
        "x": x,
        "fields": fields,
    }))
}

/// Bounded-real certificates of the shift-register model on a grid of levels.
#[wasm_bindgen]
pub fn brl_profile(gamma_lo: f64, gamma_hi: f64, points: usize, dim: usize) -> String {
    respond(brl_profile_value(gamma_lo, gamma_hi, points, dim))
}

/// Nash values and gains of the shift game at `(gamma, rho)`.
#[wasm_bindgen]
pub fn nash_values(gamma: f64, rho: f64, dim: usize) -> String {
    respond(nash_values_value(gamma, rho, dim))
}

/// Optimal heating inputs and the resulting temperature profiles.
#[wasm_bindgen]
pub fn heat_control(case: usize, modes: usize, points: usize) -> String {
    respond(heat_control_value(case, modes, points))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: String) -> Value {
        serde_json::from_str(&s).unwrap()
    }

    #[test]
    fn profile_switches_at_the_norm() {
        let v = parse(brl_profile(1.5, 1.9, 5, 16));
        let norm = v["norm"].as_f64().unwrap();
        assert!((norm - 3.0 * 5f64.sqrt() / 4.0).abs() < 1e-6);
        for level in v["levels"].as_array().unwrap() {
            let g = level["gamma"].as_f64().unwrap();
            assert_eq!(level["feasible"].as_bool().unwrap(), g > norm);
        }
    }

    #[test]
    fn nash_values_match_closed_form() {
        let v = parse(nash_values(2.0, 0.0, 16));
        assert!((v["j2"].as_f64().unwrap() - 2.74).abs() < 1e-3);
        assert!((v["k1"].as_f64().unwrap() - 0.1).abs() < 1e-10);
        assert!((v["k2"].as_f64().unwrap() + 0.4).abs() < 1e-10);
    }

    #[test]
    fn heat_fields_have_requested_shape() {
        let v = parse(heat_control(1, 16, 51));
        let fields = v["fields"].as_array().unwrap();
        assert_eq!(fields.len(), 4);
        assert!(fields.iter().all(|f| f.as_array().unwrap().len() == 51));
        assert_eq!(v["inputs"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn errors_are_reported_as_json() {
        assert!(parse(heat_control(7, 16, 51))["error"].is_string());
        assert!(parse(brl_profile(1.0, 2.0, 5, 4))["error"].is_string());
        assert!(parse(nash_values(2.0, 0.0, 10_000))["error"].is_string());
    }
}
