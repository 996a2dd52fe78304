use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn randlu(args: &[&str], stdin: Option<&[u8]>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_randlu"));
    cmd.args(args).env_remove("RANDLU_SEED").stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped());
    let mut child = cmd.spawn().expect("spawn randlu");
    let input = stdin.unwrap_or_default().to_vec();
    let mut pipe = child.stdin.take().unwrap();
    let writer = std::thread::spawn(move || {
        let _ = pipe.write_all(&input);
    });
    let out = child.wait_with_output().expect("wait for randlu");
    writer.join().unwrap();
    out
}

fn ok(args: &[&str], stdin: Option<&[u8]>) -> Vec<u8> {
    let out = randlu(args, stdin);
    assert!(out.status.success(), "randlu {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).expect("JSON output")
}

fn temp_file(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("randlu-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

#[test]
fn invariants_of_singlet() {
    let v = json(&ok(&["invariants", "singlet"], None));
    for (key, want) in [("I1", -1.0), ("I2", 3.0), ("I3", 3.0), ("I4", 0.0), ("I14", 0.0)] {
        assert!((v[key].as_f64().unwrap() - want).abs() < 1e-12, "{key} = {}", v[key]);
    }
}

#[test]
fn invariants_from_state_file() {
    let path = temp_file(
        "werner.json",
        r#"{"bloch": {"alpha": [0,0,0], "beta": [0,0,0], "t": [[-0.5,0,0],[0,-0.5,0],[0,0,-0.5]]}}"#,
    );
    let v = json(&ok(&["invariants", path.to_str().unwrap()], None));
    assert!((v["I1"].as_f64().unwrap() + 0.125).abs() < 1e-12);
    assert!((v["I2"].as_f64().unwrap() - 0.75).abs() < 1e-12);
}

#[test]
fn replay_reproduces_published_chain() {
    let v = json(&ok(&["replay-paper", "--gamma", "0.9973"], None));
    let chsh = v["chsh"]["value"].as_f64().unwrap();
    let conf = v["chsh"]["combined_confidence"].as_f64().unwrap();
    let f = v["fmax_u"]["value"].as_f64().unwrap();
    let tele = v["f_teleport"]["value"].as_f64().unwrap();
    assert!((chsh - 0.46).abs() <= 0.03, "CHSH {chsh}");
    assert!((conf - 0.991).abs() <= 0.001, "confidence {conf}");
    assert_eq!(tele, (2.0 * f + 1.0) / 3.0);
}

#[test]
fn werner_negativity_end_to_end() {
    let data = ok(&["simulate", "--state", "werner:0.9", "--seed", "7", "--bases", "ZZ,XX,YY,YZ,ZY"], None);
    let v = json(&ok(&["analyze"], Some(&data)));
    let neg = &v["negativity"];
    let mean = neg["mean"].as_f64().unwrap();
    let se = neg["std_error"].as_f64().unwrap();
    // Partial-transpose eigenvalue of Werner(p) is (1 − 3p)/4, so N = (3p − 1)/2.
    let exact = (3.0 * 0.9 - 1.0) / 2.0;
    assert!((mean - exact).abs() <= 3.0 * se, "negativity {mean} ± {se}, exact {exact}");
    assert!(v["chsh"]["value"].as_f64().unwrap() > 0.0);
}

#[test]
fn reports_are_deterministic_and_seed_env_is_honored() {
    let args = ["simulate", "--state", "paper-source", "--runs", "3", "--m", "40", "--k", "200", "--seed", "11"];
    let a = ok(&args, None);
    assert_eq!(a, ok(&args, None));
    let r1 = ok(&["analyze"], Some(&a));
    assert_eq!(r1, ok(&["analyze"], Some(&a)));

    let out = Command::new(env!("CARGO_BIN_EXE_randlu"))
        .args(&args[..args.len() - 2])
        .env("RANDLU_SEED", "11")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(out.stdout, a);
}

#[test]
fn analyze_reads_files_and_report_renders() {
    let data = ok(&["simulate", "--runs", "2", "--m", "30", "--k", "100", "--seed", "3", "--visibility", "0.9"], None);
    let path = temp_file("runs.jsonl", std::str::from_utf8(&data).unwrap());
    let out = temp_file("report.json", "");
    ok(&["analyze", path.to_str().unwrap(), "--grid", "21", "--out", out.to_str().unwrap()], None);
    let text = String::from_utf8(ok(&["report", out.to_str().unwrap()], None)).unwrap();
    assert!(text.contains("CHSH"));
    assert!(text.contains("F_max^U"));
    assert!(text.contains("randomness A t=2"));
}

#[test]
fn certify_randomness_on_octahedron() {
    // The six octahedron vertices form a spherical 3-design.
    let path = temp_file("octa.json", r#"{"stokes": [[1,0,0],[-1,0,0],[0,1,0],[0,-1,0],[0,0,1],[0,0,-1]]}"#);
    let v = json(&ok(&["certify-randomness", path.to_str().unwrap(), "--t", "2,3"], None));
    let verdicts = v.as_array().unwrap();
    assert_eq!(verdicts.len(), 2);
    for verdict in verdicts {
        assert!((verdict["G_t"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn invalid_input_exits_with_2() {
    for args in [
        vec!["invariants", "bogus"],
        vec!["simulate", "--k", "3"],
        vec!["replay-paper", "--gamma", "1.5"],
        vec!["analyze", "--method", "bayes"],
    ] {
        let out = randlu(&args, None);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = randlu(&["analyze"], Some(b"{\"header\": {\"run_id\": 0, \"m\": 1, \"k\": 4}}\nnot json\n"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn non_physical_data_exits_with_3() {
    let mut text = String::new();
    for run in 0..2 {
        text.push_str(&format!("{{\"header\":{{\"run_id\":{run},\"m\":2,\"k\":4}}}}\n"));
        for setting in 0..2 {
            for basis in ["ZZ", "XX", "YY"] {
                text.push_str(&format!("{{\"setting_id\":{setting},\"basis\":\"{basis}\",\"counts\":[4,0,0,0]}}\n"));
            }
        }
    }
    let out = randlu(&["analyze"], Some(text.as_bytes()));
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
