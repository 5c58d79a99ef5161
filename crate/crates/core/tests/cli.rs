use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use regulab::fourier::DensityFunction;
use regulab::numeric::{hex_f64, parse_hex_f64};
use regulab::Budget;
use serde_json::Value;

fn regulab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regulab"))
        .args(args)
        .env_remove("REGULAB_BUDGET")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn construct(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["construct", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    regulab(&args)
}

#[test]
fn construct_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let spec = ["--p", "2", "--n", "6", "--weights", "1/4,1/4,1/4", "--seed", "3"];
    assert_eq!(construct(a.path(), &spec).status.code(), Some(0));
    assert_eq!(construct(b.path(), &spec).status.code(), Some(0));
    for name in ["instance.json", "instance.fpfn"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
    let manifest = read_json(&a.path().join("construct.manifest.json"));
    let outputs = manifest["outputs"].as_array().unwrap();
    assert!(outputs.iter().any(|o| o.as_str().unwrap().ends_with("instance.fpfn")));
}

#[test]
fn hlms_preset_instance() {
    let dir = tempfile::tempdir().unwrap();
    let out = construct(
        dir.path(),
        &["--p", "2", "--n", "6", "--preset", "hlms", "--eps", "0.015625", "--seed", "7"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("s = 4"), "{text}");
    assert!(text.contains(", 6]"), "{text}");
}

#[test]
fn single_layer_instance() {
    let dir = tempfile::tempdir().unwrap();
    let out = construct(dir.path(), &["--p", "2", "--n", "3", "--weights", "1"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("s = 1"));
}

#[test]
fn verify_prop24_and_claim_pass() {
    let dir = tempfile::tempdir().unwrap();
    construct(dir.path(), &["--p", "2", "--n", "6", "--weights", "1/4,1/4,1/4"]);
    let inst = dir.path().join("instance.json");
    for which in ["prop24", "claim", "energy-middle"] {
        let out = regulab(&[
            "verify",
            which,
            "--instance",
            inst.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{which}: {}", stdout(&out));
        let report = read_json(&dir.path().join("verify.json"));
        assert_eq!(report["pass"], Value::Bool(true));
    }
}

#[test]
fn tampered_weights_fail_energy_middle() {
    let dir = tempfile::tempdir().unwrap();
    construct(dir.path(), &["--p", "2", "--n", "6", "--weights", "1/4,1/4,1/4"]);
    let inst = dir.path().join("instance.json");
    let mut manifest = read_json(&inst);
    let w = &mut manifest["weights"][1];
    assert_eq!(parse_hex_f64(w.as_str().unwrap()).unwrap(), 0.25);
    *w = Value::String(hex_f64(0.5));
    fs::write(&inst, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    let out = regulab(&[
        "verify",
        "energy-middle",
        "--instance",
        inst.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", stdout(&out));
    let report = read_json(&dir.path().join("verify.json"));
    assert_eq!(report["pass"], Value::Bool(false));
    let witnesses = report["report"]["witnesses"].as_array().unwrap();
    let inconsistent = !report["mismatches"].as_array().unwrap().is_empty();
    assert!(!witnesses.is_empty() || inconsistent);
}

#[test]
fn schedule_reports_tower() {
    let dir = tempfile::tempdir().unwrap();
    let out = regulab(&[
        "schedule",
        "--p",
        "2",
        "--delta",
        "1e-4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("t = 5"), "{text}");
    assert!(text.contains("h_1 = 20"), "{text}");
    assert!(text.contains("Proven"), "{text}");
    let verify = regulab(&[
        "verify",
        "schedule",
        "--p",
        "2",
        "--delta",
        "1e-4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(verify.status.code(), Some(0), "{}", stdout(&verify));
}

fn write_function(dir: &Path, p: u32, n: usize, f: impl Fn(&[u32]) -> f64) -> String {
    let g = DensityFunction::from_fn(p, n, &Budget::default(), |x| f(x.coords())).unwrap();
    let path = dir.join("f.fpfn");
    g.write(&path).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn qarl_on_constant_function() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_function(dir.path(), 3, 3, |_| 0.5);
    let out = regulab(&[
        "qarl",
        "--f",
        &f,
        "--delta",
        "0.3",
        "--check-linear-layer",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("D = 0"));
    let factor = read_json(&dir.path().join("factor.json"));
    assert!(factor["linear"].as_array().unwrap().is_empty());
    assert!(factor["quadratic"].as_array().unwrap().is_empty());
    assert!(dir.path().join("trace.jsonl").exists());
    assert!(dir.path().join("linear_layer.json").exists());
}

#[test]
fn qarl_budget_exhaustion_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_function(dir.path(), 3, 3, |x| if x[0] * x[1] == 1 { 1.0 } else { 0.0 });
    let out = regulab(&[
        "qarl",
        "--f",
        &f,
        "--delta",
        "0.05",
        "--max-quadratic-parts",
        "10",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stdout(&out));
}

#[test]
fn usage_errors_exit_3() {
    assert_eq!(regulab(&["construct", "--p", "2"]).status.code(), Some(3));
    assert_eq!(regulab(&["nonsense"]).status.code(), Some(3));
    let dir = tempfile::tempdir().unwrap();
    let out = construct(dir.path(), &["--p", "4", "--n", "3", "--weights", "1"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn spectrum_and_energy_reports() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_function(dir.path(), 3, 2, |x| if x[0] == 0 { 1.0 } else { 0.0 });
    let d = dir.path().to_str().unwrap();
    assert_eq!(regulab(&["spectrum", "--f", &f, "--out", d]).status.code(), Some(0));
    let spec = read_json(&dir.path().join("spectrum.json"));
    assert_eq!(spec["coefficients"].as_array().unwrap().len(), 9);
    let out = regulab(&["energy", "--f", &f, "--coordinates", "1", "--out", d]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let e = read_json(&dir.path().join("energy.json"));
    let energy = parse_hex_f64(e["energy"].as_str().unwrap()).unwrap();
    assert!((energy - 1.0 / 3.0).abs() < 1e-12, "{energy}");
    let reg = regulab(&["regularity", "--f", &f, "--coordinates", "1", "--eps", "0.1", "--out", d]);
    assert_eq!(reg.status.code(), Some(0), "{}", stdout(&reg));
    let reg = regulab(&["regularity", "--f", &f, "--basis", "1,0;0,1", "--eps", "0.1", "--out", d]);
    assert_eq!(reg.status.code(), Some(1));
}
