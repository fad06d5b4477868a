use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use cmalab_core::domains::DomainSpec;
use cmalab_core::grid::{GridDomain, RealFn, ScalarField, Site};
use cmalab_core::hermitian::{det_perturb_lower_bound, perturbation_suite, HermitianForm};
use cmalab_core::modulus::{empirical_modulus_records, least_concave_majorant};
use cmalab_core::pairs::{seed_from_env, PairSampler, DEFAULT_BUDGET};
use cmalab_core::psh::{barrier, find_psh_k, psh_report, strict_psh_report, verify_barrier, BarrierReport, PshReport};
use cmalab_core::regularity::{
    axis_translations, compute_cf, defining_function_from_solution, estimate_cf, holder_fit, verify_boundary_modulus,
    verify_global_modulus, verify_step3, BoundaryModulus, GlobalModulus, HolderFit, RegularityConstants, Step3Report,
};
use cmalab_core::report::{all_pass, finite_or_max, Check};
use cmalab_core::solver::{solve, write_sweep_log, Solution};
use cmalab_core::Error;
use serde::Serialize;
use serde_json::json;

use crate::config::Config;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_DIAGNOSTIC: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

/// A command that stopped early, with its exit code.
#[derive(Debug)]
pub struct Exit {
    pub code: i32,
    pub msg: String,
}

pub type CmdResult = std::result::Result<i32, Exit>;

pub fn config_err(e: impl Into<anyhow::Error>) -> Exit {
    Exit {
        code: EXIT_CONFIG,
        msg: format!("{:#}", e.into()),
    }
}

fn core_err(e: Error) -> Exit {
    let code = match e {
        Error::NotConverged { .. } => EXIT_NOT_CONVERGED,
        Error::NoInteriorNodes { .. }
        | Error::InvalidArgument(_)
        | Error::Parse { .. }
        | Error::NegativeDensity { .. }
        | Error::Io(_) => EXIT_CONFIG,
        _ => EXIT_DIAGNOSTIC,
    };
    Exit {
        code,
        msg: e.to_string(),
    }
}

fn exit_code(pass: bool) -> i32 {
    if pass {
        EXIT_PASS
    } else {
        EXIT_DIAGNOSTIC
    }
}

fn create(dir: &Path, name: &str) -> std::result::Result<BufWriter<File>, Exit> {
    std::fs::create_dir_all(dir).map_err(config_err)?;
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| config_err(anyhow::Error::new(e).context(format!("creating {}", path.display()))))
}

fn write_json(dir: &Path, name: &str, v: &impl Serialize) -> std::result::Result<(), Exit> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, v).map_err(config_err)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(config_err)
}

fn write_field(dir: &Path, name: &str, u: &ScalarField) -> std::result::Result<(), Exit> {
    let mut w = create(dir, name)?;
    u.write_csv(&mut w).map_err(core_err)?;
    w.flush().map_err(config_err)
}

fn sampler() -> PairSampler {
    PairSampler::from_env(DEFAULT_BUDGET)
}

fn grid_summary(dom: &GridDomain) -> serde_json::Value {
    json!({
        "h": dom.h(),
        "shape": dom.shape(),
        "active_nodes": dom.active_len(),
        "interior_nodes": dom.interior_slots().len(),
        "boundary_nodes": dom.boundary_slots().len(),
    })
}

/// Domain, grid and a candidate that passes the strict psh test.
struct Problem {
    spec: DomainSpec,
    dom: Arc<GridDomain>,
    rho: ScalarField,
}

fn problem(cfg: &Config) -> std::result::Result<Problem, Exit> {
    let spec = cfg.domain_spec().map_err(config_err)?;
    let Some(rho_fn) = spec.rho.clone() else {
        return Err(config_err(anyhow::anyhow!(
            "domain `{}` has no candidate defining function; the solver needs a uniformly strictly psh rho",
            spec.name
        )));
    };
    let dom = cfg.grid(&spec).map_err(config_err)?;
    let rho = ScalarField::sample(&dom, |p| rho_fn(p));
    let rep = strict_psh_report(&rho, 1e-8);
    if !rep.passes() {
        return Err(config_err(anyhow::anyhow!(
            "candidate rho for `{}` is not uniformly strictly psh ({} of {} nodes fail, worst eigenvalue {:e} at {:?}); supply `rho`",
            spec.name,
            rep.violating_nodes,
            rep.checked_nodes,
            rep.worst_eigenvalue,
            rep.worst_point
        )));
    }
    Ok(Problem { spec, dom, rho })
}

fn run_solve(cfg: &Config, pb: &Problem) -> std::result::Result<Solution, Exit> {
    let data = cfg.data(pb.spec.n).map_err(config_err)?;
    solve(&pb.dom, &data, &pb.rho, &cfg.solve_config()).map_err(core_err)
}

pub fn cmd_solve(cfg: &Config) -> CmdResult {
    let pb = problem(cfg)?;
    let exact = cfg.exact_fn(pb.spec.n).map_err(config_err)?;
    let sol = run_solve(cfg, &pb)?;
    let out = &cfg.outdir;
    write_field(out, "u.csv", &sol.u)?;
    write_field(out, "residual.csv", &sol.residual)?;
    let mut w = create(out, "sweeps.csv")?;
    write_sweep_log(&sol.log, &mut w).map_err(core_err)?;
    w.flush().map_err(config_err)?;

    let exact_error = exact.map(|g| {
        pb.dom
            .interior_slots()
            .iter()
            .map(|&s| (sol.u.values()[s] - g(&pb.dom.slot_point(s))).abs())
            .fold(0.0, f64::max)
    });
    let meta = json!({
        "command": "solve",
        "domain": pb.spec.name,
        "n": pb.spec.n,
        "grid": grid_summary(&pb.dom),
        "config": cfg,
        "seed": seed_from_env(),
        "converged": true,
        "sweeps": sol.sweeps,
        "max_update": sol.max_update,
        "max_residual": sol.max_residual,
        "K_sub": sol.k_sub,
        "K_super": sol.k_super,
        "sandwich_excess": sol.sandwich_excess,
        "exact_error": exact_error,
    });
    write_json(out, "metadata.json", &meta)?;
    eprintln!(
        "solve: {} sweeps, max update {:.3e}, residual {:.3e}{}",
        sol.sweeps,
        sol.max_update,
        sol.max_residual,
        exact_error.map_or(String::new(), |e| format!(", error vs exact {e:.3e}"))
    );
    Ok(exit_code(sol.max_residual <= cfg.tol_res))
}

#[derive(Serialize)]
struct StrictPsh {
    pass: bool,
    expected_to_pass: bool,
    #[serde(flatten)]
    report: PshReport,
    /// Largest `|z_j|` over violating nodes, per coordinate.
    violation_abs_max: Vec<f64>,
}

fn strict_summary(spec: &DomainSpec, rep: PshReport) -> StrictPsh {
    let violation_abs_max = (0..spec.n)
        .map(|j| {
            rep.violations
                .iter()
                .map(|p| p[2 * j].hypot(p[2 * j + 1]))
                .fold(0.0, f64::max)
        })
        .collect();
    StrictPsh {
        pass: rep.passes(),
        expected_to_pass: spec.rho_expected_to_pass,
        report: rep,
        violation_abs_max,
    }
}

#[derive(Serialize)]
struct BarrierCheck {
    candidate: String,
    zeta: Vec<f64>,
    /// Negative away from zeta and vanishing at zeta.
    #[serde(flatten)]
    report: BarrierReport,
    psh: bool,
    worst_eigenvalue: f64,
    pass: bool,
}

fn check_barrier(candidate: &str, v: &ScalarField, zeta: &[f64], delta: f64) -> std::result::Result<BarrierCheck, Exit> {
    let report = verify_barrier(v, zeta, delta).map_err(core_err)?;
    let psh = psh_report(v, 1e-8);
    Ok(BarrierCheck {
        candidate: candidate.into(),
        zeta: zeta.to_vec(),
        pass: report.pass && psh.passes(),
        report,
        psh: psh.passes(),
        worst_eigenvalue: finite_or_max(psh.worst_eigenvalue),
    })
}

/// Evenly spaced boundary anchors, deterministic.
fn spread_anchors(dom: &GridDomain, count: usize) -> Vec<Vec<f64>> {
    let anchors: Vec<&[f64]> = dom
        .closure_sites()
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s, Site::Anchor(_)))
        .map(|(j, _)| dom.closure_point(j))
        .collect();
    if anchors.is_empty() || count == 0 {
        return Vec::new();
    }
    let step = (anchors.len() / count).max(1);
    anchors.iter().step_by(step).take(count).map(|a| a.to_vec()).collect()
}

/// Test candidates for domains that ship none: `max_j |z_j|^2 - 1` through the
/// barrier construction, and the pluriharmonic peak `Re <z, zeta> - 1`.
fn fallback_barriers(dom: &Arc<GridDomain>, zeta: &[f64]) -> std::result::Result<Vec<(String, ScalarField)>, Exit> {
    let n = dom.n();
    let maxsq = ScalarField::sample(dom, |p| (0..n).map(|j| p[2 * j].powi(2) + p[2 * j + 1].powi(2)).fold(0.0, f64::max) - 1.0);
    let z = zeta.to_vec();
    let peak = ScalarField::sample(dom, move |p| p.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() - 1.0);
    Ok(vec![
        ("barrier(max|z_j|^2 - 1)".into(), barrier(&maxsq, zeta).map_err(core_err)?),
        ("Re<z,zeta> - 1".into(), peak),
    ])
}

pub fn cmd_check_domain(cfg: &Config) -> CmdResult {
    let spec = cfg.domain_spec().map_err(config_err)?;
    let dom = cfg.grid(&spec).map_err(config_err)?;
    let delta = cfg.barrier_delta();
    let data = cfg.data(spec.n).map_err(config_err)?;
    let mut checks = Vec::new();

    let rho = spec.rho.as_ref().map(|g| ScalarField::sample(&dom, |p| g(p)));
    let strict = rho.as_ref().map(|r| strict_summary(&spec, strict_psh_report(r, 1e-8)));
    if let Some(s) = &strict {
        checks.push(
            Check::new("uniformly_strictly_psh", s.pass, s.report.worst_eigenvalue, 1e-8).at(s.report.worst_point.clone()),
        );
    }

    let mut zetas = Vec::new();
    if spec.name == "bidisc" {
        let mut z = vec![0.0; dom.dim()];
        z[0] = 1.0;
        zetas.push(z);
    }
    zetas.extend(spread_anchors(&dom, cfg.barrier_points));
    let mut barriers = Vec::new();
    for zeta in &zetas {
        match &rho {
            Some(r) => {
                let v = barrier(r, zeta).map_err(core_err)?;
                barriers.push(check_barrier("barrier(rho)", &v, zeta, delta)?);
            }
            None => {
                // A point passes when any test candidate is a barrier there.
                let mut group: Vec<BarrierCheck> = Vec::new();
                for (name, v) in fallback_barriers(&dom, zeta)? {
                    group.push(check_barrier(&name, &v, zeta, delta)?);
                }
                barriers.extend(group);
            }
        }
    }
    let mut failed_points: Vec<Vec<f64>> = Vec::new();
    for zeta in &zetas {
        let ok = barriers.iter().any(|b| &b.zeta == zeta && b.pass);
        if !ok {
            failed_points.push(zeta.clone());
        }
    }
    checks.push(
        Check::new("barriers", failed_points.is_empty(), failed_points.len() as f64, 0.0)
            .at(failed_points.first().cloned().unwrap_or_default()),
    );

    let psh_k = rho.as_ref().map(|r| {
        let phi = ScalarField::sample(&dom, |p| (data.phi)(p));
        let k = |psi: &ScalarField| match find_psh_k(psi, r, cfg.k_max) {
            Ok(k) => json!({ "K": k }),
            Err(e) => json!({ "K": null, "error": e.to_string() }),
        };
        json!({ "phi": k(&phi), "minus_phi": k(&phi.map(|x| -x)) })
    });
    if let Some(v) = &psh_k {
        let ok = v["phi"]["K"].is_number() && v["minus_phi"]["K"].is_number();
        checks.push(Check::new("psh_constant_found", ok, 0.0, cfg.k_max));
    }

    let pass = all_pass(&checks);
    let report = json!({
        "command": "check-domain",
        "domain": spec.name,
        "n": spec.n,
        "note": spec.note,
        "has_candidate": spec.rho.is_some(),
        "grid": grid_summary(&dom),
        "barrier_delta": delta,
        "uniformly_strictly_psh": strict,
        "barriers": barriers,
        "barrier_failures": failed_points,
        "psh_constant": psh_k,
        "checks": checks,
        "pass": pass,
    });
    write_json(&cfg.outdir, "domain_report.json", &report)?;
    for c in &checks {
        eprintln!("{:<24} {}", c.name, if c.pass { "pass" } else { "FAIL" });
    }
    Ok(exit_code(pass))
}

#[derive(Serialize)]
struct RegularityReport {
    command: &'static str,
    domain: &'static str,
    skipped: bool,
    warning: Option<String>,
    constants: Option<RegularityConstants>,
    sweeps: usize,
    sandwich_excess: f64,
    boundary_modulus: Option<BoundaryModulus>,
    step3: Option<Step3Report>,
    global_modulus: Option<GlobalModulus>,
    holder_fit: Option<HolderFit>,
    holder_error: Option<String>,
    checks: Vec<Check>,
    pass: bool,
}

pub fn cmd_regularity(cfg: &Config) -> CmdResult {
    let pb = problem(cfg)?;
    let data = cfg.data(pb.spec.n).map_err(config_err)?;
    let Some(omega) = data.f_root_modulus.clone() else {
        let msg = "no `f_modulus` in the config; regularity checks skipped".to_string();
        eprintln!("warning: {msg}");
        let report = RegularityReport {
            command: "regularity",
            domain: pb.spec.name,
            skipped: true,
            warning: Some(msg),
            constants: None,
            sweeps: 0,
            sandwich_excess: 0.0,
            boundary_modulus: None,
            step3: None,
            global_modulus: None,
            holder_fit: None,
            holder_error: None,
            checks: Vec::new(),
            pass: true,
        };
        write_json(&cfg.outdir, "regularity_report.json", &report)?;
        return Ok(EXIT_PASS);
    };
    let sol = run_solve(cfg, &pb)?;
    let sampler = sampler();
    let h = pb.dom.h();
    let mut checks = vec![Check::new("sandwich", sol.sandwich_excess <= 10.0 * h, sol.sandwich_excess, 10.0 * h)];

    let bm = verify_boundary_modulus(&sol.u, &sol.subsolution, &sol.supersolution, &omega, &sampler).map_err(core_err)?;
    let c_f = match cfg.c_f {
        Some(c) => c,
        None => estimate_cf(&data.f, &omega, &pb.dom, &sampler).map_err(core_err)?,
    };
    let big_c_f = match cfg.big_c_f {
        Some(c) => c,
        None => compute_cf(pb.spec.n, c_f).map_err(core_err)?,
    };
    let consts =
        RegularityConstants::new(&pb.dom, sol.k_sub.max(sol.k_super), bm.k1, c_f, big_c_f).map_err(config_err)?;
    let step3 = verify_step3(&sol.u, &data, &consts, &omega, &axis_translations(&pb.dom)).map_err(core_err)?;
    for t in &step3.taus {
        for c in &t.checks {
            let mut c = c.clone();
            c.name = format!("{} tau={:?}", c.name, t.tau);
            checks.push(c);
        }
    }
    let global = verify_global_modulus(&sol.u, &consts, &omega, &sampler);
    checks.push(Check::new("global_modulus", global.pass, global.ratio, global.bound));

    let (fit, fit_err) = match holder_fit(&sol.u, &sampler) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let hull = least_concave_majorant(&empirical_modulus_records(&sol.u, &sampler)).map_err(core_err)?;
    let mut w = create(&cfg.outdir, "modulus.csv")?;
    hull.write_csv(&mut w).map_err(core_err)?;
    w.flush().map_err(config_err)?;

    let pass = all_pass(&checks);
    for c in checks.iter().filter(|c| !c.pass) {
        eprintln!("FAIL {}: {:e} (tolerance {:e})", c.name, c.worst_value, c.tolerance);
    }
    if let Some(f) = &fit {
        eprintln!("holder exponent {:.3} (C = {:.3e})", f.epsilon, f.coefficient);
    }
    let report = RegularityReport {
        command: "regularity",
        domain: pb.spec.name,
        skipped: false,
        warning: fit_err.as_ref().map(|e| format!("Hölder fit unavailable: {e}")),
        constants: Some(consts),
        sweeps: sol.sweeps,
        sandwich_excess: sol.sandwich_excess,
        boundary_modulus: Some(bm),
        step3: Some(step3),
        global_modulus: Some(global),
        holder_fit: fit,
        holder_error: fit_err,
        checks,
        pass,
    };
    write_json(&cfg.outdir, "regularity_report.json", &report)?;
    Ok(exit_code(pass))
}

pub fn cmd_extract_rho(cfg: &Config) -> CmdResult {
    let pb = problem(cfg)?;
    let (rho_new, rep) = defining_function_from_solution(&pb.dom, &pb.rho, &cfg.solve_config()).map_err(core_err)?;
    write_field(&cfg.outdir, "rho_new.csv", &rho_new)?;
    let def: &RealFn = &pb.spec.defining_fn;
    let gap = (0..pb.dom.active_len())
        .map(|s| (rho_new.values()[s] - def(&pb.dom.slot_point(s))).abs())
        .fold(0.0, f64::max);
    let report = json!({
        "command": "extract-rho",
        "domain": pb.spec.name,
        "grid": grid_summary(&pb.dom),
        "sweeps": rep.sweeps,
        "sup_diff_defining_fn": gap,
        "checks": rep.checks,
        "pass": rep.pass,
    });
    write_json(&cfg.outdir, "extract_report.json", &report)?;
    eprintln!("extract-rho: {} sweeps, sup |rho_new - defining_fn| = {gap:.3e}", rep.sweeps);
    Ok(exit_code(rep.pass))
}

pub fn cmd_lemmas(samples: usize, seed: u64, out: Option<&Path>) -> CmdResult {
    let suite = perturbation_suite(samples, seed);
    let examples: Vec<(&str, HermitianForm, f64)> = vec![
        ("identity, beta = 1", HermitianForm::identity(2), 1.0),
        ("zero, beta = 2", HermitianForm::zeros(2), 2.0),
        ("diag(1, 4), beta = 0", HermitianForm::diag(&[1.0, 4.0]), 0.0),
    ];
    let mut rows = Vec::new();
    println!("{:<22} {:>12} {:>12}", "example", "det(M+bI)", "lower bound");
    for (name, m, beta) in &examples {
        let lhs = m.add_identity(*beta).det();
        let rhs = det_perturb_lower_bound(m, *beta).map_err(core_err)?;
        println!("{name:<22} {lhs:>12.6} {rhs:>12.6}");
        rows.push(json!({ "example": name, "lhs": lhs, "bound": rhs, "pass": lhs >= rhs - 1e-12 }));
    }
    println!();
    println!("{:>2} {:>8} {:>22} {:>6}", "n", "samples", "worst relative slack", "pass");
    for r in &suite.rows {
        println!("{:>2} {:>8} {:>22.3e} {:>6}", r.n, r.samples, r.worst_relative_slack, r.pass);
    }
    println!("zero-matrix gap {:.3e}", suite.zero_matrix_gap);
    let pass = suite.pass && rows.iter().all(|r| r["pass"] == true);
    println!("{}", if pass { "PASS" } else { "FAIL" });
    if let Some(path) = out {
        let report = json!({
            "command": "lemmas",
            "seed": seed,
            "examples": rows,
            "suite": suite,
            "pass": pass,
        });
        let dir = path.parent().unwrap_or(Path::new("."));
        let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("lemmas_report.json");
        write_json(dir, name, &report)?;
    }
    Ok(exit_code(pass))
}
