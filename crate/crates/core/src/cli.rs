//! Command-line surface of the `mfg` binary.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 solver or
//! verification failure, 3 I/O error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{load_config, RunConfig};
use crate::continuation::{
    continue_lambda, seed_constants, seed_v0, sweep_epsilon, sweep_epsilon_cold, ContinuationTrace,
    HolderFit, SweepReport,
};
use crate::diagnostics::{m_lower_bound_certificate, DiagnosticsReport};
use crate::error::{MfgError, Result};
use crate::grid::PeriodicGrid;
use crate::hamiltonian::{audit_assumptions, HamiltonianModel};
use crate::io::{read_solution_csv, write_json, write_solution_csv, write_table};
use crate::mms::{convergence_study, Manufactured};
use crate::potential::PotentialSpec;
use crate::solver::newton;
use crate::system::ProblemParams;

/// Environment variable consulted when neither `--out` nor the config name an
/// output directory.
pub const OUT_DIR_ENV: &str = "MFG_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "mfg-out";

/// Range and resolution of the Hamiltonian growth audit run before solving.
const AUDIT_P_MAX: f64 = 1e3;
const AUDIT_SAMPLES: usize = 2001;

#[derive(Debug, Parser)]
#[command(
    name = "mfg",
    version,
    about = "Continuation solver and diagnostics for a regularized 1D stationary mean-field game"
)]
pub struct Cli {
    /// Output directory (overrides the config and MFG_OUT_DIR).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Worker threads for independent sweep members.
    #[arg(long, global = true, default_value_t = 1, value_name = "N")]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Newton solve at the configured lambda, started from the seed.
    Solve {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
    },
    /// Continuation in lambda from the seed to 1.
    Continue {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
    },
    /// Continuation for every epsilon in `continuation.epsilon_list`.
    SweepEps {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
    },
    /// Diagnostics of a stored solution CSV.
    Verify {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        #[arg(long, value_name = "PATH")]
        solution: PathBuf,
    },
    /// Manufactured-solution convergence study.
    MmsConvergence {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        /// Grid sizes, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "64,128,256,512")]
        ns: Vec<usize>,
    },
    /// Print the constant solution of the potential-free problem.
    Seed {
        #[arg(long, default_value_t = crate::config::DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value_t = crate::config::DEFAULT_GAMMA)]
        gamma: f64,
        #[arg(long, default_value_t = crate::config::DEFAULT_ALPHA)]
        alpha: f64,
    },
}

/// Maps an error to the process exit code.
pub fn exit_code(e: &MfgError) -> i32 {
    if e.is_config_error() {
        1
    } else if e.is_io_error() {
        3
    } else {
        2
    }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Seed {
            epsilon,
            gamma,
            alpha,
        } => run_seed(*epsilon, *gamma, *alpha),
        Command::Solve { config } => {
            let cfg = prepare(config)?;
            run_solve(&cfg, &output_dir(cli, &cfg))
        }
        Command::Continue { config } => {
            let cfg = prepare(config)?;
            run_continue(&cfg, &output_dir(cli, &cfg))
        }
        Command::SweepEps { config } => {
            let cfg = prepare(config)?;
            run_sweep(&cfg, &output_dir(cli, &cfg), cli.jobs)
        }
        Command::Verify { config, solution } => {
            let cfg = load_config(config)?;
            run_verify(&cfg, solution, &output_dir(cli, &cfg))
        }
        Command::MmsConvergence { config, ns } => {
            let cfg = prepare(config)?;
            run_mms(&cfg, ns, &output_dir(cli, &cfg))
        }
    }
}

/// `--out`, then `[output] dir`, then `MFG_OUT_DIR`, then `mfg-out`.
pub fn output_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn prepare(path: &Path) -> Result<RunConfig> {
    let cfg = load_config(path)?;
    audit_assumptions(&cfg.params.hamiltonian, AUDIT_P_MAX, AUDIT_SAMPLES)?.enforce(cfg.audit)?;
    Ok(cfg)
}

fn run_seed(epsilon: f64, gamma: f64, alpha: f64) -> Result<()> {
    let params = ProblemParams::new(
        HamiltonianModel::new(gamma)?,
        alpha,
        epsilon,
        0.0,
        PotentialSpec::zero(),
        PeriodicGrid::new(8)?,
    )?;
    let seed = seed_constants(&params)?;
    println!("m0 = {:.17}", seed.m0);
    println!("u0 = {:.17}", seed.u0);
    println!("|g(m0)| = {:e}", seed.g_residual);
    Ok(())
}

#[derive(Serialize)]
struct StepRecord<'a> {
    index: usize,
    lambda: f64,
    newton_iterations: usize,
    diagnostics: &'a DiagnosticsReport,
}

const TRACE_HEADER: [&str; 16] = [
    "lambda",
    "newton_iterations",
    "system_residual",
    "m_min",
    "certificate",
    "e1",
    "e2",
    "e3",
    "mass",
    "inv_mass",
    "log_grad",
    "eps_smallness",
    "energy_identity_residual",
    "second_order_residual",
    "mass_identity_residual",
    "holder_m",
];

fn write_trace(
    cfg: &RunConfig,
    params: &ProblemParams,
    trace: &ContinuationTrace,
    dir: &Path,
) -> Result<()> {
    if cfg.output.diagnostics_json {
        for (index, step) in trace.steps.iter().enumerate() {
            let record = StepRecord {
                index,
                lambda: step.lambda,
                newton_iterations: step.newton_iterations,
                diagnostics: &step.diagnostics,
            };
            write_json(
                &dir.join("steps").join(format!("step_{index:04}.json")),
                &record,
            )?;
        }
    }
    if cfg.output.fields_csv {
        let p = params.with_lambda(trace.reached_lambda);
        write_solution_csv(trace.final_state(), &p, &dir.join("solution.csv"))?;
    }
    if cfg.output.plot_data {
        let rows: Vec<Vec<f64>> = trace
            .steps
            .iter()
            .map(|s| {
                let d = &s.diagnostics;
                vec![
                    s.lambda,
                    s.newton_iterations as f64,
                    d.system_residual,
                    d.m_min,
                    d.m_lower_bound_certificate,
                    d.energy_terms.e1,
                    d.energy_terms.e2,
                    d.energy_terms.e3,
                    d.mass,
                    d.inv_mass,
                    d.log_grad,
                    d.eps_smallness,
                    d.energy_identity_residual,
                    d.second_order_residual,
                    d.mass_identity_residual,
                    d.holder.m,
                ]
            })
            .collect();
        write_table(&dir.join("trace.csv"), &TRACE_HEADER, &rows)?;
    }
    Ok(())
}

/// Componentwise maxima over the path of the quantities the a-priori bounds
/// control.
fn path_maxima(trace: &ContinuationTrace) -> Value {
    let max = |f: fn(&DiagnosticsReport) -> f64| {
        trace
            .steps
            .iter()
            .map(|s| f(&s.diagnostics))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    json!({
        "e1": max(|d| d.energy_terms.e1),
        "e2": max(|d| d.energy_terms.e2),
        "e3": max(|d| d.energy_terms.e3),
        "inv_mass": max(|d| d.inv_mass),
        "log_grad": max(|d| d.log_grad),
        "eps_smallness": max(|d| d.eps_smallness),
        "sup_u": max(|d| d.sup_norms.u),
        "sup_m": max(|d| d.sup_norms.m),
        "system_residual": max(|d| d.system_residual),
    })
}

fn trace_summary(trace: &ContinuationTrace) -> Value {
    let mut v = json!({
        "reached_lambda": trace.reached_lambda,
        "completed": trace.completed,
        "accepted_steps": trace.steps.len(),
        "smallness_warnings": trace.smallness_warnings,
        "rejected": trace.rejected.iter().map(|(l, m)| json!({"lambda": l, "reason": m})).collect::<Vec<_>>(),
        "path_maxima": path_maxima(trace),
        "final": serde_json::to_value(&trace.final_step().diagnostics).unwrap_or(Value::Null),
    });
    if let Some(med) = trace.median_iterations() {
        v["median_newton_iterations"] = json!(med);
    }
    v
}

fn run_header(cfg: &RunConfig) -> Value {
    json!({
        "params": cfg.params.summary(),
        "newton": cfg.newton,
        "continuation": cfg.schedule,
    })
}

fn run_solve(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let params = &cfg.params;
    let start = seed_v0(&params.with_lambda(0.0))?;
    let report = newton(&start, params, &cfg.newton)?;
    if !report.converged {
        return Err(MfgError::MaxIterExceeded {
            iterations: report.iterations,
            residual: report.final_residual(),
        });
    }
    let diagnostics =
        DiagnosticsReport::compute(&report.final_state, params, cfg.newton.tol_residual)?;
    if cfg.output.diagnostics_json {
        let record = StepRecord {
            index: 0,
            lambda: params.lambda,
            newton_iterations: report.iterations,
            diagnostics: &diagnostics,
        };
        write_json(&dir.join("steps").join("step_0000.json"), &record)?;
    }
    if cfg.output.fields_csv {
        write_solution_csv(&report.final_state, params, &dir.join("solution.csv"))?;
    }
    let mut summary = run_header(cfg);
    summary["newton_iterations"] = json!(report.iterations);
    summary["residual_history"] = json!(report.residual_history);
    summary["final"] = serde_json::to_value(&diagnostics).unwrap_or(Value::Null);
    write_json(&dir.join("summary.json"), &summary)?;
    println!(
        "converged at lambda = {} in {} Newton iterations, residual {:e}, min m {:.6}",
        params.lambda,
        report.iterations,
        report.final_residual(),
        diagnostics.m_min
    );
    Ok(())
}

fn run_continue(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let (trace, failure) = match continue_lambda(&cfg.params, &cfg.schedule, &cfg.newton) {
        Ok(trace) => (trace, None),
        Err(MfgError::ContinuationStalled(trace)) => {
            let msg = format!("continuation stalled at lambda = {}", trace.reached_lambda);
            (*trace, Some(msg))
        }
        Err(e) => return Err(e),
    };
    write_trace(cfg, &cfg.params, &trace, dir)?;
    let mut summary = run_header(cfg);
    summary["trace"] = trace_summary(&trace);
    write_json(&dir.join("summary.json"), &summary)?;
    let last = trace.final_step();
    println!(
        "reached lambda = {} in {} accepted steps; residual {:e}, min m {:.6} (certificate {:.6}), eps smallness {:.4}",
        trace.reached_lambda,
        trace.steps.len(),
        last.diagnostics.system_residual,
        last.diagnostics.m_min,
        last.diagnostics.m_lower_bound_certificate,
        last.diagnostics.eps_smallness
    );
    match failure {
        None => Ok(()),
        Some(_) => Err(MfgError::ContinuationStalled(Box::new(trace))),
    }
}

fn fit_value(fit: &Option<HolderFit>) -> Value {
    match fit {
        Some(f) => json!({"exponent": f.exponent, "bound_constant": f.bound_constant}),
        None => json!({}),
    }
}

fn run_sweep(cfg: &RunConfig, dir: &Path, jobs: usize) -> Result<()> {
    if cfg.schedule.epsilon_list.is_empty() {
        return Err(MfgError::Validation {
            key: "continuation.epsilon_list".into(),
            message: "must be non-empty for sweep-eps".into(),
        });
    }
    let report: SweepReport = if jobs > 1 {
        sweep_epsilon_cold(&cfg.params, &cfg.schedule, &cfg.newton, jobs)?
    } else {
        sweep_epsilon(&cfg.params, &cfg.schedule, &cfg.newton)?
    };
    let mut members = Vec::new();
    let mut failures = 0;
    for (k, member) in report.members.iter().enumerate() {
        let sub = dir.join(format!("eps_{k:02}"));
        let mut v = json!({"epsilon": member.epsilon, "warm_started": member.warm_started});
        match &member.outcome {
            Ok(trace) => {
                write_trace(cfg, &cfg.params.with_epsilon(member.epsilon), trace, &sub)?;
                v["trace"] = trace_summary(trace);
                println!(
                    "eps = {}: reached lambda = {}, min m {:.6}, eps smallness {:.4}",
                    member.epsilon,
                    trace.reached_lambda,
                    trace.final_step().diagnostics.m_min,
                    trace.final_step().diagnostics.eps_smallness
                );
            }
            Err(msg) => {
                failures += 1;
                v["error"] = json!(msg);
                println!("eps = {}: failed: {msg}", member.epsilon);
            }
        }
        members.push(v);
    }
    let t = &report.trends;
    let mut summary = run_header(cfg);
    summary["members"] = json!(members);
    summary["trends"] = json!({
        "points": t.points,
        "holder_fit_u": fit_value(&t.holder_fit_u),
        "holder_fit_m": fit_value(&t.holder_fit_m),
        "holder_fit_u_x": fit_value(&t.holder_fit_u_x),
        "holder_fit_m_x": fit_value(&t.holder_fit_m_x),
    });
    write_json(&dir.join("summary.json"), &summary)?;
    if cfg.output.plot_data {
        let rows: Vec<Vec<f64>> = t
            .points
            .iter()
            .map(|p| {
                vec![
                    p.epsilon,
                    p.eps_smallness,
                    p.m_min,
                    p.certificate,
                    p.holder.u,
                    p.holder.m,
                    p.holder.u_x,
                    p.holder.m_x,
                ]
            })
            .collect();
        write_table(
            &dir.join("sweep.csv"),
            &[
                "epsilon",
                "eps_smallness",
                "m_min",
                "certificate",
                "holder_u",
                "holder_m",
                "holder_u_x",
                "holder_m_x",
            ],
            &rows,
        )?;
    }
    if failures > 0 {
        return Err(MfgError::SweepFailed {
            failed: failures,
            total: report.members.len(),
        });
    }
    Ok(())
}

fn run_verify(cfg: &RunConfig, solution: &Path, dir: &Path) -> Result<()> {
    let state = read_solution_csv(solution)?;
    let params = cfg.params.with_grid(*state.grid());
    params.validate()?;
    let diagnostics = DiagnosticsReport::compute(&state, &params, cfg.newton.tol_residual)?;
    if let Some(field) = diagnostics.first_non_finite() {
        return Err(MfgError::NonFiniteOutput(format!(
            "diagnostics field `{field}`"
        )));
    }
    let mut summary = run_header(cfg);
    summary["params"] = serde_json::to_value(params.summary()).unwrap_or(Value::Null);
    summary["solution"] = json!(solution.display().to_string());
    summary["diagnostics"] = serde_json::to_value(&diagnostics).unwrap_or(Value::Null);
    write_json(&dir.join("verify.json"), &summary)?;
    println!(
        "residual {:e}{}; min m {:.6}, certificate {:.6}; energy/second-order/mass identity residuals {:e} / {:e} / {:e}",
        diagnostics.system_residual,
        if diagnostics.not_converged { " (not converged)" } else { "" },
        diagnostics.m_min,
        diagnostics.m_lower_bound_certificate,
        diagnostics.energy_identity_residual,
        diagnostics.second_order_residual,
        diagnostics.mass_identity_residual
    );
    if !diagnostics.not_converged {
        m_lower_bound_certificate(&state, &params)?;
    }
    Ok(())
}

fn run_mms(cfg: &RunConfig, ns: &[usize], dir: &Path) -> Result<()> {
    if ns.len() < 2 {
        return Err(MfgError::InvalidRange(
            "at least two grid sizes are required".into(),
        ));
    }
    let study = convergence_study(&cfg.params, &Manufactured::default(), ns, &cfg.newton)?;
    let mut summary = run_header(cfg);
    summary["manufactured"] = json!(Manufactured::default());
    summary["study"] = serde_json::to_value(&study).unwrap_or(Value::Null);
    write_json(&dir.join("mms.json"), &summary)?;
    if cfg.output.plot_data {
        let rows: Vec<Vec<f64>> = study
            .rows
            .iter()
            .map(|r| vec![r.n as f64, r.error_u, r.error_m, r.error])
            .collect();
        write_table(
            &dir.join("mms.csv"),
            &["n", "error_u", "error_m", "error"],
            &rows,
        )?;
    }
    println!(
        "{:>6}  {:>12}  {:>12}  {:>6}",
        "n", "error", "order", "iters"
    );
    for (k, r) in study.rows.iter().enumerate() {
        let order = if k == 0 {
            String::from("-")
        } else {
            format!("{:.4}", study.observed_orders[k - 1])
        };
        println!(
            "{:>6}  {:>12.4e}  {:>12}  {:>6}",
            r.n, r.error, order, r.newton_iterations
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&MfgError::UnknownKey("x".into())), 1);
        assert_eq!(
            exit_code(&MfgError::io("a", std::io::Error::other("boom"))),
            3
        );
        assert_eq!(
            exit_code(&MfgError::PositivityLost {
                min_step_scale: 1e-6
            }),
            2
        );
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(cli_main(["mfg", "frobnicate"]), 1);
        assert_eq!(cli_main(["mfg", "continue"]), 1);
        assert_eq!(cli_main(["mfg", "--help"]), 0);
    }

    #[test]
    fn output_dir_precedence() {
        let cfg = crate::config::parse_config("[output]\ndir = \"from-config\"\n").unwrap();
        let cli = Cli::try_parse_from(["mfg", "--out", "from-flag", "seed"]).unwrap();
        assert_eq!(output_dir(&cli, &cfg), PathBuf::from("from-flag"));
        let cli = Cli::try_parse_from(["mfg", "seed"]).unwrap();
        assert_eq!(output_dir(&cli, &cfg), PathBuf::from("from-config"));
    }
}
