//! Config-driven experiment runner: executes one mode, writes CSV outputs
//! (UTF-8, comma separated, header row, LF endings, 17 significant digits),
//! and maps failures to exit statuses plus a machine-readable error record.

use crate::config::{DualnormSource, Mode, OracleExample, RunConfig};
use crate::diagnostics::divergence_residual;
use crate::error::{Error, Result};
use crate::mesh::{RadialMesh, ScalarField};
use crate::oracle::{
    example_flat, example_flat_data, example_nonunique, example_nonunique_data, example_power,
    example_power_data, radial_dual_norm, residual_check, RadialSolution,
};
use crate::solver::{continuation, solve_reaction, ContinuationOptions, ContinuationTrace};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Format one float at full precision (17 significant digits).
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

/// Execute the configured mode. `jobs` bounds sweep parallelism.
pub fn run(cfg: &RunConfig, jobs: usize) -> Result<()> {
    let out = PathBuf::from(&cfg.output_dir);
    fs::create_dir_all(&out)?;
    let result = dispatch(cfg, &out, jobs);
    if let Err(e) = &result {
        let record = format!("code={}\nkind={}\nmessage={}\n", e.exit_code(), e.kind(), e);
        // best effort: the record should not mask the original error
        let _ = fs::write(out.join("error.record"), record);
    }
    result
}

fn dispatch(cfg: &RunConfig, out: &Path, jobs: usize) -> Result<()> {
    match cfg.mode {
        Mode::OracleCheck => run_oracle_check(cfg, out),
        Mode::Dualnorm => run_dualnorm(cfg, out),
        Mode::Solve => run_solve(cfg, out),
        Mode::Continuation => run_continuation(cfg, out),
        Mode::Sweep => run_sweep(cfg, out, jobs),
    }
}

fn build_mesh(cfg: &RunConfig) -> Result<RadialMesh> {
    RadialMesh::assemble(cfg.n_dim, cfg.radius, cfg.cells, cfg.grading)
}

fn oracle_solutions(cfg: &RunConfig, mesh: &RadialMesh) -> Result<Vec<(String, RadialSolution)>> {
    match cfg.oracle_example {
        OracleExample::Power => {
            let sol = example_power(cfg.n_dim, cfg.f_q, cfg.h_gamma, mesh.radius())?;
            Ok(vec![("solution".into(), sol)])
        }
        OracleExample::Flat => {
            let sol = example_flat(cfg.n_dim, cfg.f_rho, mesh.radius())?;
            Ok(vec![("solution".into(), sol)])
        }
        OracleExample::Nonunique => {
            let (u, v) = example_nonunique(cfg.n_dim, cfg.f_q, cfg.f_rho, mesh.radius())?;
            Ok(vec![("solution_u".into(), u), ("solution_v".into(), v)])
        }
    }
}

fn oracle_data(
    cfg: &RunConfig,
) -> Result<(crate::nonlinearity::NonlinearitySpec, crate::nonlinearity::DatumSpec)> {
    match cfg.oracle_example {
        OracleExample::Power => example_power_data(cfg.f_q, cfg.h_gamma),
        OracleExample::Flat => example_flat_data(cfg.f_rho),
        OracleExample::Nonunique => example_nonunique_data(cfg.f_q, cfg.f_rho),
    }
}

fn run_oracle_check(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mesh = build_mesh(cfg)?;
    let (spec, f) = oracle_data(cfg)?;
    f.validate_for(mesh.n_dim(), mesh.radius())?;
    for (name, sol) in oracle_solutions(cfg, &mesh)? {
        let report = residual_check(&sol, &spec, &f, &mesh, cfg.oracle_k)?;
        let z = sol.z_on_faces(&mesh);
        if z.sup_abs() > 1.0 + cfg.certificate_z_tol {
            return Err(Error::Certificate(format!(
                "oracle field violates sup|z| <= 1: {}",
                z.sup_abs()
            )));
        }
        let mut csv = String::from("r,residual\n");
        for &(_, r, res) in &report.residuals {
            csv.push_str(&format!("{},{}\n", num(r), num(res)));
        }
        write_file(&out.join(format!("residual_{name}.csv")), &csv)?;
        let mut sol_csv = Vec::new();
        sol.write_csv(&mesh, &mut sol_csv)?;
        write_file(
            &out.join(format!("{name}.csv")),
            std::str::from_utf8(&sol_csv).expect("csv is utf-8"),
        )?;
        println!(
            "{name}: max relative residual {:.3e}, pairing defect {:.3e}, boundary {} (flux {:.6})",
            report.max_rel_residual,
            report.pairing_defect,
            report.boundary.as_str(),
            report.boundary_flux
        );
    }
    Ok(())
}

fn run_dualnorm(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mesh = build_mesh(cfg)?;
    let g = match cfg.dualnorm_source {
        DualnormSource::OracleRhs => {
            let (spec, f) = oracle_data(cfg)?;
            f.validate_for(mesh.n_dim(), mesh.radius())?;
            let sols = oracle_solutions(cfg, &mesh)?;
            let sol = &sols[0].1;
            ScalarField::from_fn(&mesh, |r| {
                let fv = f.eval(r, mesh.n_dim());
                if fv == 0.0 {
                    0.0
                } else {
                    spec.eval_h_finite(sol.u(r)) * fv
                }
            })
        }
        DualnormSource::Datum => {
            let f = cfg.datum()?;
            f.validate_for(mesh.n_dim(), mesh.radius())?;
            f.eval_on(&mesh)
        }
    };
    let norm = radial_dual_norm(&g, &mesh);
    println!("{norm:.6}");
    write_file(&out.join("dualnorm.csv"), &format!("radial_dual_norm\n{}\n", num(norm)))?;
    Ok(())
}

fn run_solve(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mesh = build_mesh(cfg)?;
    let spec = cfg.nonlinearity()?;
    let f = cfg.datum()?;
    f.validate_for(mesh.n_dim(), mesh.radius())?;
    let sol = solve_reaction(&mesh, cfg.solve_p, &spec, &f, &cfg.solver, None)?;
    let z = crate::diagnostics::vector_field(&mesh, cfg.solve_p, &sol.u, cfg.solver.epsilon_reg);
    write_profile(&out.join("solution.csv"), &mesh, &sol.u, &z)?;
    let rep = divergence_residual(&mesh, &z, &spec, &f, &sol.u, &[], None);
    // single-p solves are exploratory; the flux bound is reported, not gated
    println!(
        "solve: p = {}, {} outer iterations, residual {:.3e}, masked divergence residual \
         {:.3e}, sup|z| = {:.6}",
        cfg.solve_p,
        sol.outer_iters,
        sol.rel_change,
        rep.max_rel_residual,
        z.sup_abs()
    );
    Ok(())
}

fn run_continuation(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mesh = build_mesh(cfg)?;
    let spec = cfg.nonlinearity()?;
    let f = cfg.datum()?;
    let opts = ContinuationOptions {
        k_list: cfg.k_list.clone(),
        subdomains: vec![cfg.subdomain],
        thresholds: cfg.thresholds.clone(),
        defect_k: cfg.defect_k,
    };
    let trace = continuation(&mesh, &spec, &f, &cfg.solver, &opts)?;
    emit_plotdata(&trace, &mesh, out)?;
    // inspection tables for the envelope and the transform, when they exist
    if trace.phi_available {
        if let Ok(phi) = crate::envelope::PhiTriple::for_spec(&spec) {
            let mut buf = Vec::new();
            phi.envelope().write_table(&mut buf)?;
            write_file(&out.join("envelope.txt"), std::str::from_utf8(&buf).expect("utf-8"))?;
            let mut buf = Vec::new();
            phi.write_table(&mut buf)?;
            write_file(&out.join("phi.txt"), std::str::from_utf8(&buf).expect("utf-8"))?;
        }
    }
    let classification =
        trace.classification.map(|c| c.as_str()).unwrap_or("unclassified");
    println!(
        "continuation: {} steps, classification {classification}",
        trace.records.len()
    );
    // The flux bound is a limit statement: the overshoot over 1 shrinks as
    // p drops. The certificate fails when the final overshoot exceeds the
    // tolerance while no longer contracting. A diagnosed blow-up is the
    // expected loss of the bound and is not gated.
    if trace.classification != Some(crate::diagnostics::Regime::Blowup) {
        let n = trace.records.len();
        if n >= 2 {
            let last = &trace.records[n - 1];
            let overshoot = (last.z_sup - 1.0).max(0.0);
            let prev_overshoot = (trace.records[n - 2].z_sup - 1.0).max(0.0);
            if overshoot > cfg.certificate_z_tol && overshoot >= prev_overshoot {
                return Err(Error::Certificate(format!(
                    "flux bound violated at final p = {}: sup|z| = {:.6} and the overshoot \
                     is no longer contracting",
                    last.p, last.z_sup
                )));
            }
        }
    }
    Ok(())
}

fn write_profile(
    path: &Path,
    mesh: &RadialMesh,
    u: &ScalarField,
    z: &crate::mesh::FaceField,
) -> Result<()> {
    let mut csv = String::from("r,u,z\n");
    let m = mesh.cells();
    for i in 0..mesh.node_count() {
        // faces carry z; nodes take the adjacent-face average, one-sided at
        // the ends (extrapolated at R, matching the boundary-flux reader)
        let z_node = if i == 0 {
            z[0]
        } else if i == m {
            crate::diagnostics::boundary_flux(mesh, z)
        } else {
            0.5 * (z[i - 1] + z[i])
        };
        csv.push_str(&format!("{},{},{}\n", num(mesh.nodes()[i]), num(u[i]), num(z_node)));
    }
    write_file(path, &csv)
}

/// Per-p profile files plus the summary table of the estimate suite.
pub fn emit_plotdata(trace: &ContinuationTrace, mesh: &RadialMesh, out: &Path) -> Result<()> {
    for (idx, rec) in trace.records.iter().enumerate() {
        write_profile(&out.join(format!("profile_{idx:02}.csv")), mesh, &rec.u, &rec.z)?;
    }
    let mut csv = String::from(
        "p,outer_iters,residual,sup_u,min_u,gamma_p_norm,tk_sigma_norm,z_sup,pairing_defect,boundary_flux,classification\n",
    );
    let classification = trace
        .classification
        .map(|c| c.as_str())
        .unwrap_or("unclassified");
    for rec in &trace.records {
        let (gamma_norm, tk_norm) = match &rec.estimates {
            Some(est) => {
                let gamma = est.gamma_p_norm.map(num).unwrap_or_else(|| "nan".into());
                // the exported level: the configured k nearest 1
                let tk = est
                    .tk_power_norms
                    .iter()
                    .min_by(|a, b| {
                        (a.0 - 1.0).abs().partial_cmp(&(b.0 - 1.0).abs()).expect("finite k")
                    })
                    .map(|&(_, v)| num(v))
                    .unwrap_or_else(|| "nan".into());
                (gamma, tk)
            }
            None => ("nan".into(), "nan".into()),
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{gamma_norm},{tk_norm},{},{},{},{classification}\n",
            num(rec.p),
            rec.outer_iters,
            num(rec.residual),
            num(rec.sup_u),
            num(rec.min_u),
            num(rec.z_sup),
            num(rec.pairing_defect),
            num(rec.boundary_flux),
        ));
    }
    write_file(&out.join("trace.csv"), &csv)?;
    Ok(())
}

fn run_sweep(cfg: &RunConfig, out: &Path, jobs: usize) -> Result<()> {
    let key = cfg
        .sweep_key
        .as_ref()
        .ok_or_else(|| Error::Validation("sweep mode requires sweep.key".into()))?;
    if cfg.sweep_values.is_empty() {
        return Err(Error::Validation("sweep mode requires sweep.values".into()));
    }
    // validate all instances up front so a typo fails the whole sweep early
    let mut instances = Vec::new();
    for (idx, value) in cfg.sweep_values.iter().enumerate() {
        let mut inst = cfg.clone();
        inst.mode = Mode::Continuation;
        inst.set(key, value)?;
        inst.output_dir = out.join(format!("sweep_{idx:03}")).to_string_lossy().into_owned();
        instances.push(inst);
    }

    let jobs = jobs.max(1).min(instances.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<String>>> = Mutex::new(vec![None; instances.len()]);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= instances.len() {
                    break;
                }
                let inst = &instances[idx];
                let status = match run(inst, 1) {
                    Ok(()) => {
                        // classification is in the instance trace; reread it
                        read_classification(Path::new(&inst.output_dir))
                            .unwrap_or_else(|| "ok".into())
                    }
                    Err(e) => format!("error:{}", e.kind()),
                };
                results.lock().expect("no poisoned lock")[idx] = Some(status);
            });
        }
    });

    let results = results.into_inner().expect("no poisoned lock");
    let mut index = String::from("instance,key,value,status\n");
    for (idx, value) in cfg.sweep_values.iter().enumerate() {
        index.push_str(&format!(
            "{idx},{key},{value},{}\n",
            results[idx].as_deref().unwrap_or("missing")
        ));
    }
    write_file(&out.join("index.csv"), &index)?;
    Ok(())
}

fn read_classification(dir: &Path) -> Option<String> {
    let text = fs::read_to_string(dir.join("trace.csv")).ok()?;
    let last = text.lines().rfind(|l| !l.is_empty())?;
    last.rsplit(',').next().map(|s| s.to_string())
}

/// Write the error record and return `e`'s exit code; the standard main
/// wrapper for a failed run.
pub fn report_failure(e: &Error) -> i32 {
    let mut stderr = std::io::stderr();
    let _ = writeln!(stderr, "error: {e}");
    e.exit_code()
}
