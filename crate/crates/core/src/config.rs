//! Run configuration: a TOML document with `[problem]`, `[potential]`,
//! `[newton]`, `[continuation]` and `[output]` sections.
//!
//! ```toml
//! [problem]
//! n = 256
//! gamma = 1.5
//! alpha = 1.0
//! epsilon = 0.1
//!
//! [potential]
//! cos = [0.5]
//! ```

use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::continuation::ContinuationSchedule;
use crate::error::{MfgError, Result};
use crate::grid::PeriodicGrid;
use crate::hamiltonian::{AuditPolicy, HamiltonianModel};
use crate::potential::PotentialSpec;
use crate::solver::NewtonOptions;
use crate::system::ProblemParams;

const PROBLEM_KEYS: &[&str] = &[
    "n",
    "gamma",
    "alpha",
    "epsilon",
    "lambda",
    "potential",
    "assumption_audit",
];
const POTENTIAL_KEYS: &[&str] = &["cos", "sin"];
const NEWTON_KEYS: &[&str] = &[
    "tol_residual",
    "tol_step",
    "max_iters",
    "backtrack_factor",
    "min_step_scale",
];
const CONTINUATION_KEYS: &[&str] = &[
    "lambda_init_step",
    "lambda_min_step",
    "growth_factor",
    "epsilon_list",
];
const OUTPUT_KEYS: &[&str] = &["dir", "fields_csv", "diagnostics_json", "plot_data"];

pub const DEFAULT_N: usize = 256;
pub const DEFAULT_GAMMA: f64 = 1.5;
pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub fields_csv: bool,
    pub diagnostics_json: bool,
    pub plot_data: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            fields_csv: true,
            diagnostics_json: true,
            plot_data: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ProblemParams,
    pub audit: AuditPolicy,
    pub newton: NewtonOptions,
    pub schedule: ContinuationSchedule,
    pub output: OutputConfig,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn invalid(key: &str, message: impl Into<String>) -> MfgError {
    MfgError::Validation {
        key: key.to_string(),
        message: message.into(),
    }
}

struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
}

impl<'a> Section<'a> {
    fn new(root: &'a Table, name: &'static str, allowed: &[&str]) -> Result<Self> {
        let table = match root.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => return Err(invalid(name, "expected a section")),
        };
        if let Some(t) = table {
            if let Some(k) = t.keys().find(|k| !allowed.contains(&k.as_str())) {
                return Err(MfgError::UnknownKey(format!("{name}.{k}")));
            }
        }
        Ok(Self { name, table })
    }

    fn key(&self, k: &str) -> String {
        format!("{}.{}", self.name, k)
    }

    fn get(&self, k: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(k))
    }

    fn f64(&self, k: &str, default: f64) -> Result<f64> {
        match self.get(k) {
            None => Ok(default),
            Some(v) => as_f64(v).ok_or_else(|| invalid(&self.key(k), "expected a number")),
        }
    }

    fn usize(&self, k: &str, default: usize) -> Result<usize> {
        match self.get(k) {
            None => Ok(default),
            Some(Value::Integer(i)) if *i >= 0 => Ok(*i as usize),
            Some(_) => Err(invalid(&self.key(k), "expected a non-negative integer")),
        }
    }

    fn bool(&self, k: &str, default: bool) -> Result<bool> {
        match self.get(k) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(_) => Err(invalid(&self.key(k), "expected true or false")),
        }
    }

    fn string(&self, k: &str) -> Result<Option<&'a str>> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(invalid(&self.key(k), "expected a string")),
        }
    }

    fn f64_list(&self, k: &str) -> Result<Vec<f64>> {
        f64_list(self.get(k), &self.key(k))
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn f64_list(v: Option<&Value>, key: &str) -> Result<Vec<f64>> {
    match v {
        None => Ok(Vec::new()),
        Some(Value::Array(xs)) => xs
            .iter()
            .map(|x| as_f64(x).ok_or_else(|| invalid(key, "expected an array of numbers")))
            .collect(),
        Some(_) => Err(invalid(key, "expected an array of numbers")),
    }
}

fn potential_from(table: &Table, prefix: &str) -> Result<PotentialSpec> {
    if let Some(k) = table.keys().find(|k| !POTENTIAL_KEYS.contains(&k.as_str())) {
        return Err(MfgError::UnknownKey(format!("{prefix}.{k}")));
    }
    let cos = f64_list(table.get("cos"), &format!("{prefix}.cos"))?;
    let sin = f64_list(table.get("sin"), &format!("{prefix}.sin"))?;
    PotentialSpec::new(cos, sin).map_err(|e| invalid(prefix, e.to_string()))
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| MfgError::Parse {
        line: e.span().map_or(1, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    const SECTIONS: &[&str] = &["problem", "potential", "newton", "continuation", "output"];
    if let Some(k) = root.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
        return Err(MfgError::UnknownKey(k.clone()));
    }

    let problem = Section::new(&root, "problem", PROBLEM_KEYS)?;
    let n = problem.usize("n", DEFAULT_N)?;
    let grid = PeriodicGrid::new(n).map_err(|e| invalid("problem.n", e.to_string()))?;
    let gamma = problem.f64("gamma", DEFAULT_GAMMA)?;
    let hamiltonian = HamiltonianModel::new(gamma).map_err(|_| {
        invalid(
            "problem.gamma",
            format!("must satisfy 1 < gamma < 2, got {gamma}"),
        )
    })?;
    let alpha = problem.f64("alpha", DEFAULT_ALPHA)?;
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(invalid(
            "problem.alpha",
            format!("must be positive, got {alpha}"),
        ));
    }
    let epsilon = problem.f64("epsilon", DEFAULT_EPSILON)?;
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(invalid(
            "problem.epsilon",
            format!("must lie in (0, 1], got {epsilon}"),
        ));
    }
    let lambda = problem.f64("lambda", 1.0)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(invalid(
            "problem.lambda",
            format!("must lie in [0, 1], got {lambda}"),
        ));
    }
    let audit = match problem.string("assumption_audit")? {
        None | Some("warn") => AuditPolicy::Warn,
        Some("off") => AuditPolicy::Off,
        Some("fail") => AuditPolicy::Fail,
        Some(other) => {
            return Err(invalid(
                "problem.assumption_audit",
                format!("expected one of off, warn, fail; got {other:?}"),
            ))
        }
    };

    let nested = match problem.get("potential") {
        None => None,
        Some(Value::Table(t)) => Some(potential_from(t, "problem.potential")?),
        Some(_) => return Err(invalid("problem.potential", "expected a table")),
    };
    let top = match root.get("potential") {
        None => None,
        Some(Value::Table(t)) => Some(potential_from(t, "potential")?),
        Some(_) => return Err(invalid("potential", "expected a section")),
    };
    let potential = match (nested, top) {
        (Some(_), Some(_)) => {
            return Err(invalid(
                "potential",
                "given both in [problem] and as a section",
            ))
        }
        (Some(p), None) | (None, Some(p)) => p,
        (None, None) => PotentialSpec::zero(),
    };
    if 2 * potential.modes() >= n {
        return Err(invalid(
            "potential",
            format!(
                "{} modes are not below Nyquist for n = {n}",
                potential.modes()
            ),
        ));
    }

    let newton = Section::new(&root, "newton", NEWTON_KEYS)?;
    let d = NewtonOptions::default();
    let newton = NewtonOptions {
        tol_residual: newton.f64("tol_residual", d.tol_residual)?,
        tol_step: newton.f64("tol_step", d.tol_step)?,
        max_iters: newton.usize("max_iters", d.max_iters)?,
        backtrack_factor: newton.f64("backtrack_factor", d.backtrack_factor)?,
        min_step_scale: newton.f64("min_step_scale", d.min_step_scale)?,
    };
    newton.validate().map_err(|e| rename(e, "newton"))?;

    let cont = Section::new(&root, "continuation", CONTINUATION_KEYS)?;
    let d = ContinuationSchedule::default();
    let schedule = ContinuationSchedule {
        lambda_init_step: cont.f64("lambda_init_step", d.lambda_init_step)?,
        lambda_min_step: cont.f64("lambda_min_step", d.lambda_min_step)?,
        growth_factor: cont.f64("growth_factor", d.growth_factor)?,
        epsilon_list: cont.f64_list("epsilon_list")?,
    };
    schedule.validate().map_err(|e| rename(e, "continuation"))?;

    let out = Section::new(&root, "output", OUTPUT_KEYS)?;
    let d = OutputConfig::default();
    let output = OutputConfig {
        dir: out.string("dir")?.map(PathBuf::from),
        fields_csv: out.bool("fields_csv", d.fields_csv)?,
        diagnostics_json: out.bool("diagnostics_json", d.diagnostics_json)?,
        plot_data: out.bool("plot_data", d.plot_data)?,
    };

    let params = ProblemParams::new(hamiltonian, alpha, epsilon, lambda, potential, grid)
        .map_err(|e| rename(e, "problem"))?;
    Ok(RunConfig {
        params,
        audit,
        newton,
        schedule,
        output,
    })
}

fn rename(e: MfgError, section: &str) -> MfgError {
    match e {
        MfgError::InvalidParameter { name, reason } => {
            invalid(&format!("{section}.{name}"), reason)
        }
        other => other,
    }
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| MfgError::io(path, e))?;
    parse_config(&text)
}
