use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};
use std::thread;

use georeason_cli::run_with;

const TINY: &str = r#"{
  "synthetic": {"n_entities": 20, "n_docs": 8, "n_heldout_docs": 4},
  "training": {"d_model": 16, "n_heads": 2, "n_layers": 1, "d_ff": 32, "steps": 3, "batch_size": 6},
  "recognition": {"steps": 3},
  "typing": {"steps": 3}
}"#;

fn bin(args: &[&str], dir: &Path, envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_georeason"));
    cmd.args(args).current_dir(dir).env_remove("GEOREASON_LLM_URL").env_remove("GEOREASON_LLM_KEY");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn ok(args: &[&str], dir: &Path) -> serde_json::Value {
    let out = bin(args, dir, &[]);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.json"), TINY).unwrap();
    dir
}

fn with_common<'a>(cmd: &[&'a str]) -> Vec<&'a str> {
    let mut v = cmd.to_vec();
    v.extend(["--config", "tiny.json", "--out", "out", "--seed", "5"]);
    v
}

#[test]
fn help_exits_zero() {
    let mut out = Vec::new();
    let mut err = Vec::new();
    assert_eq!(run_with(["--help"], &mut out, &mut err), 0);
    let text = String::from_utf8(out).unwrap();
    assert!(text.contains("Usage") && text.contains("build-corpus") && text.contains("demo"));
    assert!(err.is_empty());
}

#[test]
fn usage_errors_exit_two() {
    for argv in [vec!["frobnicate"], vec![], vec!["eval", "--ablate", "nothing"], vec!["link", "--text", "x"]] {
        let mut out = Vec::new();
        let mut err = Vec::new();
        assert_eq!(run_with(argv.clone(), &mut out, &mut err), 2, "{argv:?}");
        assert!(!err.is_empty());
    }
}

#[test]
fn runtime_failure_is_one_json_line() {
    let dir = setup();
    let out = bin(&with_common(&["pretrain"]), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    let stderr = String::from_utf8(out.stderr).unwrap();
    let last = stderr.lines().last().unwrap();
    let v: serde_json::Value = serde_json::from_str(last).unwrap();
    assert_eq!(v["error"], "missing_input");
    assert!(v["message"].as_str().unwrap().contains("paragraphs"));

    std::fs::write(dir.path().join("bad.json"), "{\"training\": {\"steps\": 0}}").unwrap();
    let out = bin(&["demo", "--config", "bad.json", "--out", "out"], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(v["error"], "invalid");
}

#[test]
fn full_pipeline_is_restartable_and_deterministic() {
    let dir = setup();
    let stages: [&[&str]; 6] = [
        &["build-corpus", "--synthetic"],
        &["pretrain"],
        &["finetune-rec"],
        &["finetune-type"],
        &["build-index"],
        &["eval", "--k", "3"],
    ];
    let mut first = Vec::new();
    for s in stages {
        first.push(ok(&with_common(s), dir.path()));
    }
    let n = first[0]["descriptions"].as_u64().unwrap();
    assert!(n >= 2);
    assert_eq!(first[1]["training_pairs"].as_u64(), Some(n));
    assert_eq!(first[1]["steps"].as_u64(), Some(3));
    let report = &first[5];
    for key in ["R@1", "R@3", "R@5", "R@10"] {
        let r = report["linking"][key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&r), "{key} = {r}");
    }
    assert!(report["recognition_train"]["entity"]["f1"].is_number());
    assert!(report["recognition_heldout"]["entity"]["f1"].is_number());
    assert!(report["typing"]["micro_f1"].is_number());

    let out = dir.path().join("out");
    let manifests: Vec<String> = stages
        .iter()
        .map(|s| std::fs::read_to_string(out.join("manifests").join(format!("{}.json", s[0]))).unwrap())
        .collect();
    let m: serde_json::Value = serde_json::from_str(&manifests[1]).unwrap();
    assert_eq!(m["seed"], 5);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert!(m["inputs"]["gazetteer"]["sha256"].as_str().unwrap().len() == 64);
    assert!(m["outputs"]["model"]["sha256"].is_string());

    for (s, (want, manifest)) in stages.iter().zip(first.iter().zip(&manifests)) {
        assert_eq!(&ok(&with_common(s), dir.path()), want, "{s:?} rerun");
        let again = std::fs::read_to_string(out.join("manifests").join(format!("{}.json", s[0]))).unwrap();
        assert_eq!(&again, manifest, "{s:?} manifest");
    }
    let leftovers: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().contains(".tmp"))
        .collect();
    assert!(leftovers.is_empty());

    let linked = ok(
        &with_common(&["link", "--text", "Nothing here but noise.", "--mention", "noise", "--k", "2"]),
        dir.path(),
    );
    assert_eq!(linked["candidates"].as_array().unwrap().len(), 2);
    assert_eq!(linked["span"], serde_json::json!([17, 22]));
    let missing = bin(
        &with_common(&["link", "--text", "abc", "--mention", "zzz"]),
        dir.path(),
        &[],
    );
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn ablation_flags_reach_the_manifest() {
    let dir = setup();
    ok(&with_common(&["build-corpus", "--synthetic", "--ablate", "summarizer"]), dir.path());
    let raw = std::fs::read_to_string(dir.path().join("out/descriptions.jsonl")).unwrap();
    ok(&with_common(&["build-corpus", "--synthetic"]), dir.path());
    let templated = std::fs::read_to_string(dir.path().join("out/descriptions.jsonl")).unwrap();
    assert_ne!(raw, templated);
    ok(
        &with_common(&["pretrain", "--ablate", "mlm", "--ablate", "spatial", "--ablate", "mlm"]),
        dir.path(),
    );
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/manifests/pretrain.json")).unwrap()).unwrap();
    assert_eq!(m["ablation"], serde_json::json!(["mlm", "spatial"]));
    let metrics = std::fs::read_to_string(dir.path().join("out/metrics.jsonl")).unwrap();
    for line in metrics.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["mlm"], 0.0);
    }
}

#[test]
fn demo_prints_report_and_repeats_exactly() {
    let dir = setup();
    let a = ok(&with_common(&["demo"]), dir.path());
    let b = ok(&with_common(&["demo"]), dir.path());
    assert_eq!(a, b);
    assert_eq!(a["seed"], 5);
    assert!(a["linking"]["R@1"].is_number());
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/demo_report.json")).unwrap()).unwrap();
    assert_eq!(saved, a);
}

/// Answers `n` POSTs by echoing the prompt back as the description text.
fn echo_server(n: usize) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/generate", listener.local_addr().unwrap());
    thread::spawn(move || {
        for stream in listener.incoming().take(n) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line.trim().is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
            let reply = serde_json::json!({ "text": req["prompt"] }).to_string();
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
        }
    });
    url
}

#[test]
fn summarize_uses_endpoint_then_cache() {
    let dir = setup();
    let n = ok(&with_common(&["build-corpus", "--synthetic"]), dir.path())["descriptions"].as_u64().unwrap();
    let url = echo_server(n as usize);
    let out = bin(&with_common(&["summarize"]), dir.path(), &[("GEOREASON_LLM_URL", &url)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["sources"], serde_json::json!({ "remote": n }));
    let descriptions = std::fs::read_to_string(dir.path().join("out/descriptions.jsonl")).unwrap();
    assert!(descriptions.contains("Nearby places"));

    // the server is gone; every description now comes from the cache
    let out = bin(&with_common(&["summarize"]), dir.path(), &[("GEOREASON_LLM_URL", &url)]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["sources"], serde_json::json!({ "cache": n }));

    let v = ok(&with_common(&["summarize"]), dir.path());
    assert_eq!(v["sources"], serde_json::json!({ "template": n }));
}
