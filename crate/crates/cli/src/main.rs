use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use hilbert_ctl::game::{
    coupled_residual, h2hinf_design, hinf_design, solve_coupled_riccati, verify_nash_equilibrium, GameParams,
    TwoInputSystemSpec,
};
use hilbert_ctl::hilbert::HVector;
use hilbert_ctl::hinf::{brl_check, brl_residual, hinf_norm, DisturbedSystemSpec};
use hilbert_ctl::io::{emit_outputs, load_json, load_system, CsvTable, RunOutput, SystemFile};
use hilbert_ctl::lq::{lq_functional, nominal_trajectory, solve_lq, LQProblem};
use hilbert_ctl::riccati::{ControlledSystemSpec, CostSpec};
use hilbert_ctl::scenarios::{run_example, ExampleId};
use hilbert_ctl::sim::{self, AffinePolicy, NoiseKind, NoiseModel};
use hilbert_ctl::{Error, Result};

#[derive(Parser)]
#[command(
    name = "hilbert-ctl",
    version,
    about = "Finite-horizon stochastic LQ, bounded-real and game synthesis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// System description (JSON).
    #[arg(long)]
    system: Option<PathBuf>,
    /// Output directory for report.json, CSV tables and summary.txt.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Indefinite LQ synthesis via the backward Riccati recursion.
    LqSolve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cost: PathBuf,
        #[arg(long)]
        x0: PathBuf,
    },
    /// Bounded-real check at one attenuation level.
    BrlCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gamma: f64,
    },
    /// Induced norm of the disturbance-to-output map by bisection.
    HinfNorm {
        #[command(flatten)]
        common: Common,
        /// Bisection tolerance.
        #[arg(long = "tol-gamma", alias = "tol", default_value_t = 1e-6)]
        tol_gamma: f64,
        /// Upper end of the starting bracket (must be feasible).
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Nash strategies of the two-player game.
    NashSolve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        x0: PathBuf,
        /// Also probe the equilibrium with 50 random deviations drawn from this seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Zero-sum state-feedback design at level gamma.
    HinfDesign {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gamma: f64,
    },
    /// Mixed quadratic / attenuation design (rho = 0).
    H2hinfDesign {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        x0: PathBuf,
    },
    /// Simulates a controlled system under its LQ-optimal feedback (or zero input without a cost).
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cost: Option<PathBuf>,
        #[arg(long)]
        x0: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Noise::Rademacher)]
        noise: Noise,
        /// Monte Carlo replications for the expected cost.
        #[arg(long, default_value_t = 1000)]
        replications: usize,
    },
    /// Runs a worked example: ex1, ex2, ex2-case1..3, ex3, ex4.
    Example {
        id: String,
        /// Truncation override: grid points (ex1), sine modes (ex2), l2 dimension (ex3, ex4).
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Noise {
    Rademacher,
    Gaussian,
}

/// A run that completed but whose verdict is negative (exit code 3).
struct Infeasible;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Resolution(_) | Error::EnumerationLimit { .. } => 4,
        Error::Domain { .. }
        | Error::NotPositive { .. }
        | Error::IllConditioned { .. }
        | Error::GameDomain { .. }
        | Error::CouplingSingular { .. }
        | Error::DesignInfeasible { .. }
        | Error::Bracket(_) => 3,
        _ => 2,
    }
}

fn system_path(c: &Common) -> Result<&Path> {
    c.system
        .as_deref()
        .ok_or_else(|| Error::Parse("--system is required".into()))
}

fn controlled(c: &Common) -> Result<ControlledSystemSpec> {
    match load_system(system_path(c)?)? {
        SystemFile::Controlled(s) => Ok(s),
        other => Err(Error::Parse(format!(
            "expected a controlled system, got {}",
            other.kind()
        ))),
    }
}

fn disturbed(c: &Common) -> Result<DisturbedSystemSpec> {
    match load_system(system_path(c)?)? {
        SystemFile::Disturbed(s) => Ok(s),
        other => Err(Error::Parse(format!(
            "expected a disturbed system, got {}",
            other.kind()
        ))),
    }
}

fn two_input(c: &Common) -> Result<TwoInputSystemSpec> {
    match load_system(system_path(c)?)? {
        SystemFile::TwoInput(s) => Ok(s),
        other => Err(Error::Parse(format!(
            "expected a two_input system, got {}",
            other.kind()
        ))),
    }
}

fn finish(out: RunOutput, dir: Option<&Path>) -> Result<()> {
    println!(
        "{}",
        serde_json::to_string_pretty(&out.report).expect("value serializes")
    );
    if let Some(dir) = dir {
        let m = emit_outputs(&out, dir)?;
        eprintln!("wrote {} file(s) to {}", m.files.len(), m.dir.display());
    }
    Ok(())
}

fn report(report: Value, tables: Vec<CsvTable>, summary: String) -> RunOutput {
    RunOutput {
        report,
        tables,
        summary,
    }
}

fn run(cli: Cli) -> Result<std::result::Result<(), Infeasible>> {
    let mut verdict = Ok(());
    match cli.command {
        Command::LqSolve { common, cost, x0 } => {
            let sys = controlled(&common)?;
            let cost: CostSpec = load_json(&cost)?;
            let x0: HVector = load_json(&x0)?;
            let prob = LQProblem { sys, cost, x0 };
            let sol = solve_lq(&prob)?;
            let mut tables = Vec::new();
            if let Ok(traj) = nominal_trajectory(&prob, &sol) {
                tables.push(CsvTable::long_format("states", &traj.states));
                let inputs: Vec<Vec<f64>> = traj.inputs.iter().map(|i| i[0].clone()).collect();
                tables.push(CsvTable::long_format("inputs", &inputs));
            }
            if !sol.well_posed {
                verdict = Err(Infeasible);
            }
            let summary = format!(
                "status: {:?}\noptimal value: {:?}\nmin input weight eigenvalue: {:.6e}\n",
                sol.riccati.status,
                sol.optimal_value,
                sol.riccati.min_r_eig()
            );
            finish(report(json!(&sol), tables, summary), common.out.as_deref())?;
        }
        Command::BrlCheck { common, gamma } => {
            let sys = disturbed(&common)?;
            let run = brl_check(&sys, gamma)?;
            let residual = if run.feasible {
                Some(brl_residual(&sys, &run)?)
            } else {
                None
            };
            let v = json!({
                "gamma": gamma,
                "feasible": run.feasible,
                "failing_step": run.failing_step,
                "stopped_at": run.stopped_at,
                "min_pi3_eigs": run.min_pi3_eigs(),
                "recursion_residual": residual,
            });
            let summary = format!(
                "gamma {gamma}: {}\n",
                if run.feasible { "feasible" } else { "infeasible" }
            );
            finish(report(v, vec![], summary), common.out.as_deref())?;
        }
        Command::HinfNorm {
            common,
            tol_gamma,
            gamma,
        } => {
            let sys = disturbed(&common)?;
            let n = hinf_norm(&sys, 0.0, gamma, tol_gamma)?;
            let summary = format!("norm {:.9} after {} bisection steps\n", n.norm, n.iterations);
            finish(report(json!(n), vec![], summary), common.out.as_deref())?;
        }
        Command::NashSolve {
            common,
            gamma,
            rho,
            x0,
            seed,
        } => {
            let sys = two_input(&common)?;
            let x0: HVector = load_json(&x0)?;
            let sol = solve_coupled_riccati(&sys, GameParams { gamma, rho })?;
            let mut v = json!({ "solution": json!(&sol) });
            if sol.is_solved() {
                let (j1, j2) = sol.values(&x0)?.expect("solved");
                let (values, gains) = coupled_residual(&sys, &sol)?;
                v["j1"] = json!(j1);
                v["j2"] = json!(j2);
                v["value_residual"] = json!(values);
                v["gain_residual"] = json!(gains);
                if let Some(seed) = seed {
                    v["nash_check"] = json!(verify_nash_equilibrium(&sys, &sol, &x0, 50, seed)?);
                }
            } else {
                verdict = Err(Infeasible);
            }
            let summary = format!("status: {:?}\n", sol.status);
            finish(report(v, vec![], summary), common.out.as_deref())?;
        }
        Command::HinfDesign { common, gamma } => {
            let sys = two_input(&common)?;
            let d = hinf_design(&sys, gamma)?;
            let mut v = json!({ "design": json!(&d) });
            if let Some(gains) = d.control_gains_owned().filter(|_| d.feasible) {
                let cl = brl_check(&sys.close_control(&gains)?, gamma)?;
                v["closed_loop_feasible"] = json!(cl.feasible);
                v["closed_loop_min_pi3_eigs"] = json!(cl.min_pi3_eigs());
            }
            let summary = match &d.failure {
                None => format!("gamma {gamma}: design found\n"),
                Some((k, which, e)) => {
                    format!("gamma {gamma}: infeasible at step {k} ({which} block, min eigenvalue {e:.6e})\n")
                }
            };
            finish(report(v, vec![], summary), common.out.as_deref())?;
            if !d.feasible {
                verdict = Err(Infeasible);
            }
        }
        Command::H2hinfDesign { common, gamma, x0 } => {
            let sys = two_input(&common)?;
            let x0: HVector = load_json(&x0)?;
            let d = h2hinf_design(&sys, GameParams { gamma, rho: 0.0 })?;
            let mut v = json!({ "design": json!(&d), "attenuates": d.attenuates() });
            if let Some((_, j2)) = d.nash.values(&x0)? {
                v["j2"] = json!(j2);
            }
            if !d.nash.is_solved() {
                verdict = Err(Infeasible);
            }
            let mut summary = format!("status: {:?}, attenuates: {}\n", d.nash.status, d.attenuates());
            if let Some(diag) = &d.diagnostic {
                summary.push_str(diag);
                summary.push('\n');
            }
            finish(report(v, vec![], summary), common.out.as_deref())?;
        }
        Command::Simulate {
            common,
            cost,
            x0,
            seed,
            noise,
            replications,
        } => {
            let sys = controlled(&common)?;
            let x0: HVector = load_json(&x0)?;
            let cost = match cost {
                Some(p) => load_json::<CostSpec>(&p)?,
                None => CostSpec::zero(&sys),
            };
            let prob = LQProblem { sys, cost, x0 };
            prob.validate()?;
            let model = prob.sys.to_model();
            let sol = solve_lq(&prob)?;
            let policy = sol.policy(&model).unwrap_or_else(|| AffinePolicy::zero(&model));
            let kind = match noise {
                Noise::Rademacher => NoiseKind::Rademacher,
                Noise::Gaussian => NoiseKind::Gaussian,
            };
            let nm = NoiseModel::new(kind, seed);
            let f = lq_functional(&prob.sys, &prob.cost);
            let x = prob.x0.ortho_coords();
            let path = nm.path(prob.sys.horizon, 0);
            let traj = sim::simulate(&model, &policy, &x, &path, Some(&f))?;
            let mc = sim::monte_carlo_expectation(&model, &policy, &x, &f, nm, replications)?;
            let exact = match sim::enumerate_expectation(&model, &policy, &x, &f) {
                Ok(v) => Some(v),
                Err(Error::EnumerationLimit { .. }) => None,
                Err(e) => return Err(e),
            };
            let mut noise_table = CsvTable::new("noise", &["k", "w"]);
            noise_table.rows = path.iter().enumerate().map(|(k, w)| vec![k as f64, *w]).collect();
            let inputs: Vec<Vec<f64>> = traj.inputs.iter().map(|i| i[0].clone()).collect();
            let v = json!({
                "path_cost": traj.cost,
                "monte_carlo": json!(mc),
                "exact_expectation": exact,
                "optimal_value": sol.optimal_value,
            });
            let summary = format!(
                "path cost {:?}, monte carlo {:.6} +/- {:.6}, exact {:?}\n",
                traj.cost, mc.mean, mc.half_width, exact
            );
            let tables = vec![
                CsvTable::long_format("states", &traj.states),
                CsvTable::long_format("inputs", &inputs),
                noise_table,
            ];
            finish(report(v, tables, summary), common.out.as_deref())?;
        }
        Command::Example { id, dim, out } => {
            let id: ExampleId = id.parse()?;
            let rep = run_example(id, dim)?;
            eprint!("{}", rep.summary());
            finish(rep.into_output(), out.as_deref())?;
        }
    }
    Ok(verdict)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Infeasible)) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
