use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tanbn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tanbn"))
        .args(args)
        .env_remove("TANBN_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn generate(dir: &Path, features: usize, samples: usize, seed: u64) -> String {
    let path = dir.join(format!("data{seed}.csv"));
    ok(&tanbn(&[
        "generate",
        "--out",
        path.to_str().unwrap(),
        "--features",
        &features.to_string(),
        "--samples",
        &samples.to_string(),
        "--seed",
        &seed.to_string(),
    ]));
    path.file_name().unwrap().to_str().unwrap().to_string()
}

fn write_config(dir: &Path, name: &str, data: &str, method: &str, extra: &str) -> String {
    let text = format!(
        "train = \"{data}\"\noutput_dir = \"out-{name}\"\nmethod = \"{method}\"\n{extra}\n[training]\nepochs = 3\nbatch_size = 50\n"
    );
    let path = dir.join(format!("{name}.toml"));
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn feature_edges(dot: &str) -> usize {
    dot.lines().filter(|l| l.contains("->") && !l.trim_start().starts_with("class")).count()
}

#[test]
fn nb_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 5, 300, 1);
    let cfg = write_config(dir.path(), "nb", &data, "nb", "");
    ok(&tanbn(&["train", "--config", &cfg]));
    let out = dir.path().join("out-nb");
    for f in ["config.toml", "report.json", "model.json", "graph.dot", "metrics.csv", "manifest.json", "timing.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let names: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|e| e["path"].as_str().unwrap()).collect();
    assert_eq!(names, ["config.toml", "graph.dot", "metrics.csv", "model.json", "report.json"]);
    assert!(manifest["files"][0]["sha256"].as_str().unwrap().len() == 64);

    let dot = fs::read_to_string(out.join("graph.dot")).unwrap();
    assert_eq!(dot.lines().filter(|l| l.contains("->")).count(), 5);
    assert_eq!(feature_edges(&dot), 0);
}

#[test]
fn chow_liu_graph_is_a_tree() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 6, 400, 2);
    let cfg = write_config(dir.path(), "cl", &data, "chow-liu", "");
    ok(&tanbn(&["train", "--config", &cfg]));
    let dot = fs::read_to_string(dir.path().join("out-cl/graph.dot")).unwrap();
    assert_eq!(feature_edges(&dot), 5);
}

#[test]
fn learned_methods_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 9, 300, 3);
    for (name, method, extra) in [
        ("subset", "tan-subset", "k = 2"),
        ("all", "tan-all", ""),
        ("heur", "tan-heuristic", "k = 2\nordering = \"c\""),
        ("rand", "tan-random", ""),
        ("pseudo", "tan-subset", "k = 3\npseudo = true"),
    ] {
        let cfg = write_config(dir.path(), name, &data, method, extra);
        ok(&tanbn(&["train", "--config", &cfg]));
        let out = dir.path().join(format!("out-{name}"));
        assert!(out.join("model.json").is_file());
        assert_eq!(out.join("structure.json").is_file(), method != "tan-random", "{name}");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 5, 200, 4);
    let cfg = write_config(dir.path(), "det", &data, "tan-subset", "k = 2");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&tanbn(&["train", "--config", &cfg, "--out", a.to_str().unwrap()]));
    ok(&tanbn(&["train", "--config", &cfg, "--out", b.to_str().unwrap()]));
    for f in ["report.json", "model.json", "structure.json", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    ok(&tanbn(&["train", "--config", &cfg, "--out", c.to_str().unwrap(), "--seed", "7"]));
    assert_ne!(fs::read(a.join("report.json")).unwrap(), fs::read(c.join("report.json")).unwrap());
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 3, 50, 5);
    let bad_mode = write_config(dir.path(), "bad", &data, "tan-magic", "");
    assert_eq!(tanbn(&["train", "--config", &bad_mode]).status.code(), Some(2));
    let missing = write_config(dir.path(), "missing", "nope.csv", "nb", "");
    assert_eq!(tanbn(&["train", "--config", &missing]).status.code(), Some(2));
    let no_k = write_config(dir.path(), "nok", &data, "tan-subset", "");
    assert_eq!(tanbn(&["train", "--config", &no_k]).status.code(), Some(2));
    assert_eq!(tanbn(&["train", "--config", "/does/not/exist.toml"]).status.code(), Some(2));
    assert_eq!(tanbn(&["search", "--config", &bad_mode, "--setting", "III"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("model.json");
    fs::write(&garbage, "{").unwrap();
    assert_eq!(tanbn(&["export-dot", "--model", garbage.to_str().unwrap()]).status.code(), Some(1));
    let data = dir.path().join("bad.csv");
    fs::write(&data, "0,1\n1,x\n").unwrap();
    let cfg = write_config(dir.path(), "rt", "bad.csv", "nb", "");
    assert_eq!(tanbn(&["train", "--config", &cfg]).status.code(), Some(1));
}

#[test]
fn search_csv_is_ranked_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 4, 200, 6);
    let cfg = write_config(dir.path(), "search", &data, "nb", "");
    let run = |out: &str, setting: &str| {
        let out = dir.path().join(out);
        ok(&tanbn(&[
            "search", "--config", &cfg, "--setting", setting, "--draws", "3", "--jobs", "2", "--out",
            out.to_str().unwrap(),
        ]));
        fs::read_to_string(out.join("search.csv")).unwrap()
    };
    let a = run("s1", "II");
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], "rank,lambda,gamma,eta,lr,error");
    assert_eq!(lines.len(), 4);
    let errors: Vec<f64> = lines[1..].iter().map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(errors.windows(2).all(|w| w[0] <= w[1]));
    assert!(lines[1..].iter().all(|l| l.split(',').nth(3) == Some("10")));
    assert_eq!(run("s2", "II"), a);
    let one = run("s3", "I");
    assert_eq!(one.lines().count(), 4);
}

#[test]
fn export_dot_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("gen.json");
    ok(&tanbn(&[
        "generate", "--out", dir.path().join("g.csv").to_str().unwrap(), "--features", "4", "--samples", "200",
        "--naive", "--model-out", model.to_str().unwrap(),
    ]));
    let out = tanbn(&["export-dot", "--model", model.to_str().unwrap()]);
    ok(&out);
    let dot = String::from_utf8(out.stdout).unwrap();
    assert_eq!(dot.lines().filter(|l| l.contains("->")).count(), 4);
    assert_eq!(feature_edges(&dot), 0);

    let eval = tanbn(&[
        "evaluate", "--model", model.to_str().unwrap(), "--data", dir.path().join("g.csv").to_str().unwrap(),
    ]);
    ok(&eval);
    assert!(String::from_utf8(eval.stdout).unwrap().starts_with("samples 200, error "));
}

#[test]
fn cyclic_pseudo_model_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let l = (0.5f64).ln();
    let table = format!("[{l}, {l}, {l}, {l}, {l}, {l}, {l}, {l}]");
    let json = format!(
        r#"{{"format":"tanbn-model","version":1,"ordering":[0,1],"parents":[1,0],"pseudo":true,
"arities":[2,2],"num_classes":2,"axis_order":["child","parent","class"],"class_log_prior":[{l},{l}],
"tables":[{{"position":0,"feature":0,"parent_feature":1,"child_arity":2,"parent_arity":2,"log_probs":{table}}},
{{"position":1,"feature":1,"parent_feature":0,"child_arity":2,"parent_arity":2,"log_probs":{table}}}]}}"#
    );
    let path = dir.path().join("cyc.json");
    fs::write(&path, json).unwrap();
    let out = tanbn(&["export-dot", "--model", path.to_str().unwrap()]);
    ok(&out);
    let dot = String::from_utf8(out.stdout).unwrap();
    assert!(dot.contains("WARNING"));
    assert_eq!(feature_edges(&dot), 2);
}

#[test]
fn discretize_and_cmi() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    let mut text = String::from("a,b,label\n");
    for i in 0..40 {
        let v = i as f64 * 0.25;
        text.push_str(&format!("{v},{},{}\n", -v, if i % 2 == 0 { "yes" } else { "no" }));
    }
    fs::write(&raw, text).unwrap();
    let binned = dir.path().join("binned.csv");
    let edges = dir.path().join("edges.json");
    ok(&tanbn(&[
        "discretize", "--input", raw.to_str().unwrap(), "--out", binned.to_str().unwrap(), "--bins", "4",
        "--edges-out", edges.to_str().unwrap(),
    ]));
    let body = fs::read_to_string(&binned).unwrap();
    assert_eq!(body.lines().next().unwrap(), "x0,x1,label");
    assert_eq!(body.lines().count(), 41);
    assert!(body.lines().nth(1).unwrap().ends_with(",1"));

    let cmi = dir.path().join("cmi.csv");
    let tree = dir.path().join("tree.dot");
    ok(&tanbn(&[
        "cmi", "--data", binned.to_str().unwrap(), "--out", cmi.to_str().unwrap(), "--tree-dot",
        tree.to_str().unwrap(),
    ]));
    assert_eq!(fs::read_to_string(&cmi).unwrap().lines().count(), 3);
    assert_eq!(feature_edges(&fs::read_to_string(&tree).unwrap()), 1);
}

#[test]
fn output_root_env_relocates_relative_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let root = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 3, 100, 8);
    let cfg = write_config(dir.path(), "env", &data, "nb", "");
    let out = Command::new(env!("CARGO_BIN_EXE_tanbn"))
        .args(["train", "--config", &cfg])
        .env("TANBN_OUTPUT_ROOT", root.path())
        .output()
        .unwrap();
    ok(&out);
    assert!(root.path().join("out-env/report.json").is_file());
}
