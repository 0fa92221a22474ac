use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tamecheck_core::gate_catalog::CatalogRecord;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn tamecheck(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tamecheck"))
        .args(args)
        .current_dir(root())
        .env_remove("TAMECHECK_SEED")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("machine output is JSON")
}

fn assert_schema(schema: &str, doc: &Value) {
    let text = std::fs::read_to_string(root().join("schemas").join(schema)).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{schema:?}: {errors:#?}");
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn analyze_sigmoid_mlp() {
    let out = tamecheck(&["analyze", "--input", "specs/mlp_sigmoid_231.json", "--format", "machine"]);
    assert_eq!(code(&out), 0);
    let r = json(&out);
    assert_schema("report.v1.schema.json", &r);
    assert_eq!(r["param_count"], 13);
    assert_eq!(r["net_format"], serde_json::json!({"q": 3, "D": 2, "d": 1}));
    assert!(r["bounds"]["pdim_bound"].as_u64().unwrap() > 0);
    assert_eq!(r["input_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn every_shipped_spec_matches_the_schemas() {
    for entry in std::fs::read_dir(root().join("specs")).unwrap() {
        let path = entry.unwrap().path();
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_schema("spec.v1.schema.json", &doc);
        let rel = path.strip_prefix(root()).unwrap().to_str().unwrap().to_string();
        let out = tamecheck(&["analyze", "--input", &rel, "--format", "machine"]);
        assert_eq!(code(&out), 0, "{rel}: {}", String::from_utf8_lossy(&out.stderr));
        assert_schema("report.v1.schema.json", &json(&out));
    }
}

#[test]
fn relu_mlp_is_qualitative_only() {
    let out = tamecheck(&["analyze", "--input", "specs/relu_mlp.json", "--format", "machine"]);
    let r = json(&out);
    assert_eq!(r["finite_sample_complexity"], true);
    assert_eq!(r["qualitative_only"], true);
    assert_eq!(r["k_status"], "finite, unquantified");
    assert!(r.get("net_format").is_none());
    let human = tamecheck(&["analyze", "--input", "specs/relu_mlp.json"]);
    assert!(String::from_utf8_lossy(&human.stdout).contains("qualitative-only"));
}

#[test]
fn human_and_machine_carry_the_same_numbers() {
    let m = json(&tamecheck(&["analyze", "--input", "specs/layered_uniform.json", "--format", "machine"]));
    let h = String::from_utf8(tamecheck(&["analyze", "--input", "specs/layered_uniform.json"]).stdout).unwrap();
    let b = &m["bounds"];
    for key in ["B_log2_ceil", "pdim_bound", "khovanskii_m"] {
        assert!(h.contains(&b[key].to_string()), "{key} missing from human output");
    }
    for plan in m["plans"].as_array().unwrap() {
        assert!(h.contains(&format!("N = {}", plan["N"])));
    }
    assert!(h.contains(&format!("parameters: {}", m["param_count"])));
}

#[test]
fn missing_and_malformed_inputs() {
    let out = tamecheck(&["analyze", "--input", "specs/does_not_exist.json"]);
    assert_eq!(code(&out), 66);
    assert!(String::from_utf8_lossy(&out.stderr).contains("does_not_exist.json"));

    let dir = std::env::temp_dir().join(format!("tamecheck-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.json");
    std::fs::write(&bad, "{\n  \"version\": 1,\n  \"d_in\": 1,\n  oops\n}").unwrap();
    let out = tamecheck(&["analyze", "--input", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 65);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json:4:"), "{}", String::from_utf8_lossy(&out.stderr));

    let cyclic = dir.join("cyclic.json");
    std::fs::write(
        &cyclic,
        r#"{"version":1,"name":"c","d_in":1,"d_out":1,
            "nodes":[{"id":"x","kind":"input","dim":1},
                     {"id":"a","gate":"tanh","hyperparams":{"width":1}},
                     {"id":"b","gate":"tanh","hyperparams":{"width":1}}],
            "edges":[["x","a"],["a","b"],["b","a"]],
            "readout":{"d_out":1}}"#,
    )
    .unwrap();
    let out = tamecheck(&["analyze", "--input", cyclic.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cycl"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn usage_errors() {
    assert_eq!(code(&tamecheck(&["frobnicate"])), 64);
    assert_eq!(code(&tamecheck(&["plan"])), 64);
    let out = tamecheck(&["plan", "--k", "22", "--epsilon", "0"]);
    assert_eq!(code(&out), 64);
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon"));
}

#[test]
fn plan_values() {
    let out = tamecheck(&["plan", "--k", "22", "--format", "machine"]);
    assert_eq!(code(&out), 0);
    let p = json(&out);
    assert_schema("plan.v1.schema.json", &p);
    assert_eq!(p["N"], 2500);
    let r = json(&tamecheck(&["plan", "--k", "22", "--mode", "regression", "--format", "machine"]));
    assert_eq!(r["N"], 64301);
    let c = json(&tamecheck(&["plan", "--k", "22", "--constant-C", "2", "--format", "machine"]));
    assert_eq!(c["N"], 5000);
    let from_spec = json(&tamecheck(&["plan", "--input", "specs/mlp_sigmoid_231.json", "--format", "machine"]));
    assert_eq!(from_spec["K"], 2482);
    assert_eq!(code(&tamecheck(&["plan", "--input", "specs/relu_mlp.json"])), 2);
}

#[test]
fn catalog_listing_round_trips() {
    let out = tamecheck(&["catalog", "--format", "machine"]);
    assert_eq!(code(&out), 0);
    let doc = json(&out);
    assert_schema("catalog.v1.schema.json", &doc);
    let gates: Vec<CatalogRecord> = serde_json::from_value(doc["gates"].clone()).unwrap();
    let again = serde_json::to_value(&gates).unwrap();
    assert_eq!(again, doc["gates"]);
    let sigmoid = gates.iter().find(|g| g.name == "sigmoid").unwrap();
    assert_eq!(sigmoid.format.as_ref().map(ToString::to_string).as_deref(), Some("(1,2,1)"));
    assert!(gates.iter().find(|g| g.name == "relu").unwrap().format.is_none());
    let human = String::from_utf8(tamecheck(&["catalog"]).stdout).unwrap();
    assert!(human.lines().any(|l| l.starts_with("relu ") && l.contains("none")));
}

#[test]
fn verify_fault_injected_and_unreadable() {
    let out = tamecheck(&["verify", "--input", "suites/fault_injected.json", "--format", "machine"]);
    assert_eq!(code(&out), 1);
    let s = json(&out);
    assert_schema("suite-summary.v1.schema.json", &s);
    assert_eq!(s["violations"], 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("affine_1d_lowered"), "{stderr}");
    assert!(stderr.contains("exceeds symbolic bound 1"));

    let out = tamecheck(&["verify", "--input", "suites/none_here.json"]);
    assert_ne!(code(&out), 0);
    let out = tamecheck(&["verify", "--input", "specs/relu_mlp.json"]);
    assert_eq!(code(&out), 65);
}

#[test]
fn verify_default_suite_passes_and_matches_schema() {
    let out = tamecheck(&["verify", "--format", "machine", "--seed", "5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(&out);
    assert_schema("suite-summary.v1.schema.json", &s);
    assert_eq!(s["passed"], true);
    assert_eq!(s["seed"], 5);
}

#[test]
fn output_flag_writes_the_document() {
    let path = std::env::temp_dir().join(format!("tamecheck-out-{}.json", std::process::id()));
    let out = tamecheck(&["plan", "--k", "22", "--format", "machine", "--output", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());
    let written: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(written["N"], 2500);
    std::fs::remove_file(&path).ok();
    let out = tamecheck(&["plan", "--k", "22", "--output", Path::new("/nonexistent/dir/x.json").to_str().unwrap()]);
    assert_eq!(code(&out), 74);
}

#[test]
fn empty_suite_passes_with_a_warning() {
    let path = std::env::temp_dir().join(format!("tamecheck-empty-{}.json", std::process::id()));
    std::fs::write(&path, r#"{"version": 1, "name": "empty", "checks": []}"#).unwrap();
    let out = tamecheck(&["verify", "--input", path.to_str().unwrap(), "--format", "machine"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["warnings"].as_array().unwrap().len(), 1);
    std::fs::remove_file(&path).ok();
}
