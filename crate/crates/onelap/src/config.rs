//! Flat `key=value` run configuration with dotted section prefixes.
//! The format is line-oriented and diff-friendly; `dump` emits a canonical
//! serialization that reparses to an identical configuration.

use crate::diagnostics::RegimeThresholds;
use crate::error::{Error, Result};
use crate::mesh::Grading;
use crate::nonlinearity::{DatumSpec, NonlinearitySpec};
use crate::solver::SolverConfig;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    OracleCheck,
    Solve,
    Continuation,
    Sweep,
    Dualnorm,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::OracleCheck => "oracle-check",
            Mode::Solve => "solve",
            Mode::Continuation => "continuation",
            Mode::Sweep => "sweep",
            Mode::Dualnorm => "dualnorm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "oracle-check" => Ok(Mode::OracleCheck),
            "solve" => Ok(Mode::Solve),
            "continuation" => Ok(Mode::Continuation),
            "sweep" => Ok(Mode::Sweep),
            "dualnorm" => Ok(Mode::Dualnorm),
            other => Err(Error::Validation(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleExample {
    Power,
    Flat,
    Nonunique,
}

impl OracleExample {
    pub fn as_str(&self) -> &'static str {
        match self {
            OracleExample::Power => "power",
            OracleExample::Flat => "flat",
            OracleExample::Nonunique => "nonunique",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualnormSource {
    /// h(u) f of the configured oracle example.
    OracleRhs,
    /// The raw datum f.
    Datum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    // geometry
    pub n_dim: u32,
    pub radius: f64,
    pub cells: usize,
    pub grading: Grading,
    // nonlinearity
    pub h_family: String,
    pub h_c: f64,
    pub h_gamma: f64,
    pub h_s1: f64,
    pub h_s_tilde: Option<f64>,
    pub h_m: Option<f64>,
    pub h_decay: f64,
    pub h_table: Option<String>,
    // datum
    pub f_family: String,
    pub f_q: f64,
    pub f_rho: f64,
    pub f_scale: f64,
    pub f_table: Option<String>,
    // solver
    pub solver: SolverConfig,
    /// Single p for `solve` mode.
    pub solve_p: f64,
    // diagnostics
    pub k_list: Vec<f64>,
    pub subdomain: (f64, f64),
    pub defect_k: f64,
    pub thresholds: RegimeThresholds,
    pub certificate_z_tol: f64,
    // oracle / dualnorm
    pub oracle_example: OracleExample,
    pub oracle_k: f64,
    pub dualnorm_source: DualnormSource,
    // sweep
    pub sweep_key: Option<String>,
    pub sweep_values: Vec<String>,
    // output
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Continuation,
            n_dim: 2,
            radius: 1.0,
            cells: 256,
            grading: Grading::Uniform,
            h_family: "power".into(),
            h_c: 1.0,
            h_gamma: 1.0,
            h_s1: 1.0,
            h_s_tilde: None,
            h_m: None,
            h_decay: 0.1,
            h_table: None,
            f_family: "radial-power".into(),
            f_q: 1.25,
            f_rho: 0.5,
            f_scale: 1.0,
            f_table: None,
            solver: SolverConfig::default(),
            solve_p: 1.5,
            k_list: vec![0.5, 1.0, 2.0, 5.0],
            subdomain: (0.0, 0.75),
            defect_k: 1.0,
            thresholds: RegimeThresholds::default(),
            certificate_z_tol: 0.05,
            oracle_example: OracleExample::Power,
            oracle_k: 2.0,
            dualnorm_source: DualnormSource::OracleRhs,
            sweep_key: None,
            sweep_values: Vec::new(),
            output_dir: "out".into(),
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|e| Error::Validation(format!("{key}: expected a number, got '{v}' ({e})")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>()
        .map_err(|e| Error::Validation(format!("{key}: expected an integer, got '{v}' ({e})")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|tok| parse_f64(key, tok.trim()))
        .collect()
}

fn fmt_list(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Apply one `key=value` assignment. Used both by the parser and by
    /// sweep instantiation.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "mode" => self.mode = Mode::parse(value)?,
            "geometry.n" => {
                self.n_dim = value.parse().map_err(|e| {
                    Error::Validation(format!("geometry.n: expected an integer ({e})"))
                })?
            }
            "geometry.r" => self.radius = parse_f64(key, value)?,
            "geometry.m" => self.cells = parse_usize(key, value)?,
            "geometry.grading" => {
                self.grading = match value {
                    "uniform" => Grading::Uniform,
                    "geometric-toward-0" => Grading::GeometricTowardZero,
                    other => {
                        return Err(Error::Validation(format!("unknown grading '{other}'")))
                    }
                }
            }
            "nonlinearity.family" => self.h_family = value.to_string(),
            "nonlinearity.c" => self.h_c = parse_f64(key, value)?,
            "nonlinearity.gamma" => self.h_gamma = parse_f64(key, value)?,
            "nonlinearity.s1" => self.h_s1 = parse_f64(key, value)?,
            "nonlinearity.s_tilde" => self.h_s_tilde = Some(parse_f64(key, value)?),
            "nonlinearity.m" => self.h_m = Some(parse_f64(key, value)?),
            "nonlinearity.decay" => self.h_decay = parse_f64(key, value)?,
            "nonlinearity.table" => self.h_table = Some(value.to_string()),
            "datum.family" => self.f_family = value.to_string(),
            "datum.q" => self.f_q = parse_f64(key, value)?,
            "datum.rho" => self.f_rho = parse_f64(key, value)?,
            "datum.scale" => self.f_scale = parse_f64(key, value)?,
            "datum.table" => self.f_table = Some(value.to_string()),
            "solver.p" => self.solve_p = parse_f64(key, value)?,
            "solver.epsilon" => self.solver.epsilon_reg = parse_f64(key, value)?,
            "solver.theta" => self.solver.theta = parse_f64(key, value)?,
            "solver.tol_outer" => self.solver.tol_outer = parse_f64(key, value)?,
            "solver.tol_inner" => self.solver.tol_inner = parse_f64(key, value)?,
            "solver.maxit_outer" => self.solver.maxit_outer = parse_usize(key, value)?,
            "solver.maxit_inner" => self.solver.maxit_inner = parse_usize(key, value)?,
            "solver.schedule" => self.solver.schedule = parse_list(key, value)?,
            "diagnostics.k_list" => self.k_list = parse_list(key, value)?,
            "diagnostics.subdomain" => {
                let v = parse_list(key, value)?;
                if v.len() != 2 {
                    return Err(Error::Validation(
                        "diagnostics.subdomain expects two comma-separated fractions".into(),
                    ));
                }
                self.subdomain = (v[0], v[1]);
            }
            "diagnostics.defect_k" => self.defect_k = parse_f64(key, value)?,
            "thresholds.growth_factor" => self.thresholds.growth_factor = parse_f64(key, value)?,
            "thresholds.deadcore_eps_rel" => {
                self.thresholds.deadcore_eps_rel = parse_f64(key, value)?
            }
            "thresholds.area_frac" => self.thresholds.area_frac = parse_f64(key, value)?,
            "thresholds.deadcore_stability" => {
                self.thresholds.deadcore_stability = parse_f64(key, value)?
            }
            "thresholds.trend_tol" => self.thresholds.trend_tol = parse_f64(key, value)?,
            "thresholds.trend_k" => self.thresholds.trend_k = parse_f64(key, value)?,
            "certificate.z_tol" => self.certificate_z_tol = parse_f64(key, value)?,
            "oracle.example" => {
                self.oracle_example = match value {
                    "power" => OracleExample::Power,
                    "flat" => OracleExample::Flat,
                    "nonunique" => OracleExample::Nonunique,
                    other => {
                        return Err(Error::Validation(format!("unknown oracle example '{other}'")))
                    }
                }
            }
            "oracle.k" => self.oracle_k = parse_f64(key, value)?,
            "dualnorm.source" => {
                self.dualnorm_source = match value {
                    "oracle-rhs" => DualnormSource::OracleRhs,
                    "datum" => DualnormSource::Datum,
                    other => {
                        return Err(Error::Validation(format!(
                            "unknown dualnorm source '{other}'"
                        )))
                    }
                }
            }
            "sweep.key" => self.sweep_key = Some(value.to_string()),
            "sweep.values" => {
                self.sweep_values = value.split(',').map(|s| s.trim().to_string()).collect()
            }
            "output.dir" => self.output_dir = value.to_string(),
            other => return Err(Error::Validation(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Parse a config text: one `key=value` per line, `#` comments and blank
    /// lines skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Validation(format!(
                    "config line {}: expected key=value, got '{line}'",
                    lineno + 1
                )));
            };
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Canonical serialization; `parse(dump(c)) == c`.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode={}", self.mode.as_str());
        let _ = writeln!(s, "geometry.n={}", self.n_dim);
        let _ = writeln!(s, "geometry.r={}", self.radius);
        let _ = writeln!(s, "geometry.m={}", self.cells);
        let grading = match self.grading {
            Grading::Uniform => "uniform",
            Grading::GeometricTowardZero => "geometric-toward-0",
        };
        let _ = writeln!(s, "geometry.grading={grading}");
        let _ = writeln!(s, "nonlinearity.family={}", self.h_family);
        let _ = writeln!(s, "nonlinearity.c={}", self.h_c);
        let _ = writeln!(s, "nonlinearity.gamma={}", self.h_gamma);
        let _ = writeln!(s, "nonlinearity.s1={}", self.h_s1);
        if let Some(st) = self.h_s_tilde {
            let _ = writeln!(s, "nonlinearity.s_tilde={st}");
        }
        if let Some(m) = self.h_m {
            let _ = writeln!(s, "nonlinearity.m={m}");
        }
        let _ = writeln!(s, "nonlinearity.decay={}", self.h_decay);
        if let Some(t) = &self.h_table {
            let _ = writeln!(s, "nonlinearity.table={t}");
        }
        let _ = writeln!(s, "datum.family={}", self.f_family);
        let _ = writeln!(s, "datum.q={}", self.f_q);
        let _ = writeln!(s, "datum.rho={}", self.f_rho);
        let _ = writeln!(s, "datum.scale={}", self.f_scale);
        if let Some(t) = &self.f_table {
            let _ = writeln!(s, "datum.table={t}");
        }
        let _ = writeln!(s, "solver.p={}", self.solve_p);
        let _ = writeln!(s, "solver.epsilon={}", self.solver.epsilon_reg);
        let _ = writeln!(s, "solver.theta={}", self.solver.theta);
        let _ = writeln!(s, "solver.tol_outer={}", self.solver.tol_outer);
        let _ = writeln!(s, "solver.tol_inner={}", self.solver.tol_inner);
        let _ = writeln!(s, "solver.maxit_outer={}", self.solver.maxit_outer);
        let _ = writeln!(s, "solver.maxit_inner={}", self.solver.maxit_inner);
        let _ = writeln!(s, "solver.schedule={}", fmt_list(&self.solver.schedule));
        let _ = writeln!(s, "diagnostics.k_list={}", fmt_list(&self.k_list));
        let _ = writeln!(s, "diagnostics.subdomain={},{}", self.subdomain.0, self.subdomain.1);
        let _ = writeln!(s, "diagnostics.defect_k={}", self.defect_k);
        let _ = writeln!(s, "thresholds.growth_factor={}", self.thresholds.growth_factor);
        let _ = writeln!(s, "thresholds.deadcore_eps_rel={}", self.thresholds.deadcore_eps_rel);
        let _ = writeln!(s, "thresholds.area_frac={}", self.thresholds.area_frac);
        let _ = writeln!(
            s,
            "thresholds.deadcore_stability={}",
            self.thresholds.deadcore_stability
        );
        let _ = writeln!(s, "thresholds.trend_tol={}", self.thresholds.trend_tol);
        let _ = writeln!(s, "thresholds.trend_k={}", self.thresholds.trend_k);
        let _ = writeln!(s, "certificate.z_tol={}", self.certificate_z_tol);
        let _ = writeln!(s, "oracle.example={}", self.oracle_example.as_str());
        let _ = writeln!(s, "oracle.k={}", self.oracle_k);
        let source = match self.dualnorm_source {
            DualnormSource::OracleRhs => "oracle-rhs",
            DualnormSource::Datum => "datum",
        };
        let _ = writeln!(s, "dualnorm.source={source}");
        if let Some(k) = &self.sweep_key {
            let _ = writeln!(s, "sweep.key={k}");
        }
        if !self.sweep_values.is_empty() {
            let _ = writeln!(s, "sweep.values={}", self.sweep_values.join(","));
        }
        let _ = writeln!(s, "output.dir={}", self.output_dir);
        s
    }

    /// Build the nonlinearity spec this config describes.
    pub fn nonlinearity(&self) -> Result<NonlinearitySpec> {
        match self.h_family.as_str() {
            "power" => NonlinearitySpec::power(self.h_c, self.h_gamma, self.h_s1),
            "bounded" => NonlinearitySpec::bounded(self.h_c, self.h_gamma, self.h_s1),
            "vanishing" => {
                let st = self.h_s_tilde.ok_or_else(|| {
                    Error::Validation("vanishing family requires nonlinearity.s_tilde".into())
                })?;
                NonlinearitySpec::vanishing(self.h_c, st, self.h_s1)
            }
            "floored" => {
                let m = self.h_m.ok_or_else(|| {
                    Error::Validation("floored family requires nonlinearity.m".into())
                })?;
                NonlinearitySpec::floored(m, self.h_decay, self.h_s1)
            }
            "tabulated" => {
                let path = self.h_table.as_ref().ok_or_else(|| {
                    Error::Validation("tabulated family requires nonlinearity.table".into())
                })?;
                let text = std::fs::read_to_string(path)?;
                NonlinearitySpec::tabulated_from_text(&text, self.h_c, self.h_gamma, self.h_s1)
            }
            other => Err(Error::Validation(format!("unknown nonlinearity family '{other}'"))),
        }
    }

    /// Build the datum spec this config describes.
    pub fn datum(&self) -> Result<DatumSpec> {
        match self.f_family.as_str() {
            "radial-power" => DatumSpec::radial_power(self.f_q, self.f_scale),
            "flat-ball" => DatumSpec::flat_ball(self.f_rho, self.f_scale),
            "radial-power-ball" => {
                DatumSpec::radial_power_ball(self.f_q, self.f_rho, self.f_scale)
            }
            "tabulated" => {
                let path = self.f_table.as_ref().ok_or_else(|| {
                    Error::Validation("tabulated datum requires datum.table".into())
                })?;
                let text = std::fs::read_to_string(path)?;
                DatumSpec::tabulated_from_text(&text, self.f_scale)
            }
            other => Err(Error::Validation(format!("unknown datum family '{other}'"))),
        }
    }
}
