use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_cmalab");

fn schema_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name)
}

fn assert_valid(report: &Path, schema: &str) -> Value {
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(schema_path(schema)).unwrap()).unwrap();
    let inst: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).expect("schema compiles");
    if let Err(errors) = compiled.validate(&inst) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("{} does not match its schema:\n{}", report.display(), msgs.join("\n"));
    }
    inst
}

/// Writes `cfg` (with `outdir` set inside `dir`) and runs `cmalab <cmd>`.
fn run(cmd: &str, dir: &Path, mut cfg: Value) -> (i32, PathBuf, String) {
    let out = dir.join(format!("out_{cmd}"));
    cfg["outdir"] = json!(out);
    let path = dir.join(format!("{cmd}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let o = Command::new(BIN).arg(cmd).arg(&path).output().unwrap();
    (o.status.code().unwrap(), out, String::from_utf8_lossy(&o.stderr).into_owned())
}

fn ball_quadratic() -> Value {
    json!({
        "domain": "ball",
        "f": 32,
        "exact": "abs2(z1) + abs2(z2) - 1",
        "h": 0.25,
        "f_modulus": "identity"
    })
}

fn variable_density() -> Value {
    json!({ "domain": "ball", "f": "32 * (1 + abs2(z1))", "h": 0.25, "f_modulus": "identity" })
}

#[test]
fn solve_writes_fields_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = run("solve", dir.path(), ball_quadratic());
    assert_eq!(code, 0, "{err}");
    let meta = assert_valid(&out.join("metadata.json"), "solve_metadata.schema.json");
    assert!(meta["exact_error"].as_f64().unwrap() <= 2.5);
    let u = std::fs::read_to_string(out.join("u.csv")).unwrap();
    assert!(u.starts_with("x1,y1,x2,y2,value\n"));
    assert_eq!(u.lines().count() - 1, meta["grid"]["active_nodes"].as_u64().unwrap() as usize);
    assert!(out.join("residual.csv").exists());
    assert!(std::fs::read_to_string(out.join("sweeps.csv")).unwrap().starts_with("sweep,index,max_update,max_residual"));
}

#[test]
fn solve_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run("solve", dir.path(), json!({ "domain": "bidisc", "h": 0.25 }));
    assert_eq!(code, 3);
    assert!(err.contains("no candidate"), "{err}");
    let (code, _, err) = run("solve", dir.path(), json!({ "domain": "egg", "h": 0.25 }));
    assert_eq!(code, 3);
    assert!(err.contains("not uniformly strictly psh"), "{err}");
    let mut cfg = variable_density();
    cfg["max_sweeps"] = json!(1);
    assert_eq!(run("solve", dir.path(), cfg).0, 2);
    assert_eq!(run("solve", dir.path(), json!({ "domain": "ball", "h": 0.25, "f": -1 })).0, 3);
    assert_eq!(run("solve", dir.path(), json!({ "domain": "ball", "h": 0.25, "phi": "x1 +" })).0, 3);
    assert_eq!(run("solve", dir.path(), json!({ "domain": "ball", "h": 0.25, "colour": "red" })).0, 3);
    assert_eq!(run("solve", dir.path(), json!({ "domain": "ball", "h": -1 })).0, 3);
    let o = Command::new(BIN).arg("solve").arg(dir.path().join("missing.json")).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn threads_switch_to_red_black_with_the_same_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let read = |p: PathBuf| -> Vec<f64> {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect()
    };
    let (c1, o1, _) = run("solve", dir.path(), variable_density());
    let mut cfg = variable_density();
    cfg["threads"] = json!(3);
    let d2 = dir.path().join("t3");
    std::fs::create_dir(&d2).unwrap();
    let (c3, o3, _) = run("solve", &d2, cfg);
    assert_eq!((c1, c3), (0, 0));
    let (a, b) = (read(o1.join("u.csv")), read(o3.join("u.csv")));
    assert_eq!(a.len(), b.len());
    let gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(gap < 1e-6, "lexicographic and red-black differ by {gap}");
}

#[test]
fn check_domain_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = run("check-domain", dir.path(), json!({ "domain": "ball", "h": 0.25 }));
    assert_eq!(code, 0, "{err}");
    let r = assert_valid(&out.join("domain_report.json"), "domain_report.schema.json");
    assert_eq!(r["pass"], true);

    let (code, out, _) = run("check-domain", dir.path(), json!({ "domain": "egg", "h": 0.125 }));
    assert_eq!(code, 1);
    let r = assert_valid(&out.join("domain_report.json"), "domain_report.schema.json");
    let s = &r["uniformly_strictly_psh"];
    assert_eq!(s["pass"], false);
    assert_eq!(s["expected_to_pass"], false);
    assert!(s["violation_abs_max"][1].as_f64().unwrap() < 0.5);

    let (code, out, _) = run("check-domain", dir.path(), json!({ "domain": "bidisc", "h": 0.25 }));
    assert_eq!(code, 1);
    let r = assert_valid(&out.join("domain_report.json"), "domain_report.schema.json");
    assert_eq!(r["barrier_failures"][0], json!([1.0, 0.0, 0.0, 0.0]));
}

#[test]
fn check_domain_accepts_a_rho_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "domain": "egg",
        "rho": "(0.5 * (abs2(z1) + abs2(z2)^2 - 1) + 0.5 * (abs2(z1) + abs2(z2) - 1)) / 0.5",
        "h": 0.125,
        "barrier_points": 0
    });
    let (code, out, _) = run("check-domain", dir.path(), cfg);
    let r = assert_valid(&out.join("domain_report.json"), "domain_report.schema.json");
    assert_eq!(r["uniformly_strictly_psh"]["pass"], true);
    assert_eq!(code, 0);
}

#[test]
fn regularity_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = run("regularity", dir.path(), ball_quadratic());
    assert_eq!(code, 0, "{err}");
    let r = assert_valid(&out.join("regularity_report.json"), "regularity_report.schema.json");
    assert_eq!(r["skipped"], false);
    let m = std::fs::read_to_string(out.join("modulus.csv")).unwrap();
    assert!(m.starts_with("r,omega\n0"));

    let mut cfg = variable_density();
    cfg["C_f"] = json!(0.0);
    let (code, out, _) = run("regularity", dir.path(), cfg);
    assert_eq!(code, 1);
    let r = assert_valid(&out.join("regularity_report.json"), "regularity_report.schema.json");
    let failed: Vec<&str> = r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["pass"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(!failed.is_empty() && failed.iter().all(|n| n.starts_with("density_chain")), "{failed:?}");

    let mut cfg = variable_density();
    cfg.as_object_mut().unwrap().remove("f_modulus");
    let (code, out, err) = run("regularity", dir.path(), cfg);
    assert_eq!(code, 0);
    assert!(err.contains("warning"));
    let r = assert_valid(&out.join("regularity_report.json"), "regularity_report.schema.json");
    assert_eq!(r["skipped"], true);
}

#[test]
fn extract_rho_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = run("extract-rho", dir.path(), json!({ "domain": "ellipsoid", "h": 0.25 }));
    assert_eq!(code, 0, "{err}");
    let r = assert_valid(&out.join("extract_report.json"), "extract_report.schema.json");
    assert_eq!(r["pass"], true);
    // u = 3|z2|^2 - 1 solves the extraction problem on this ellipsoid exactly.
    assert!(r["sup_diff_defining_fn"].as_f64().unwrap() < 1e-10);
    assert!(out.join("rho_new.csv").exists());
    // The ellipsoid solution is quadratic and converges in one sweep; the
    // egg with a blended candidate does not.
    let cfg = json!({
        "domain": "egg",
        "rho": "(0.5 * (abs2(z1) + abs2(z2)^2 - 1) + 0.5 * (abs2(z1) + abs2(z2) - 1)) / 0.5",
        "h": 0.25,
        "max_sweeps": 1
    });
    assert_eq!(run("extract-rho", dir.path(), cfg).0, 2);
}

#[test]
fn lemmas_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lemmas.json");
    let o = Command::new(BIN)
        .args(["lemmas", "--samples", "600", "--seed", "5", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("identity, beta = 1") && stdout.trim_end().ends_with("PASS"));
    let r = assert_valid(&out, "lemmas_report.schema.json");
    assert_eq!(r["suite"]["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert!(v["domain"].is_string() && v["h"].is_number());
        seen += 1;
    }
    assert!(seen >= 5);
}
