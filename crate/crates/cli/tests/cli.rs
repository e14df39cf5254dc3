use std::path::Path;
use std::process::{Command, Output};

const FLAT: &str = "seed = 42\nn_paths = 1000\ndt = 1e-3\n[instance]\nkey = \"interval-exp\"\na = 0.0\n";

fn rflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rflow")).args(args).env_remove("RFLOW_WORKERS").output().expect("spawn rflow")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn flat_suite_passes_and_ignores_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "flat.toml", FLAT);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let one = rflow(&["verify-suite", "--config", &cfg, "--workers", "1", "--out", a.to_str().unwrap()]);
    assert_eq!(one.status.code(), Some(0), "{}", String::from_utf8_lossy(&one.stderr));
    let two = rflow(&["verify-suite", "--config", &cfg, "--workers", "2", "--out", b.to_str().unwrap()]);
    assert_eq!(two.status.code(), Some(0));
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# schema: rflow verify-suite checks v1\ncheck,instance,"));
    assert!(!text.contains(",FAIL"));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sim.toml", "horizons = [0.05]\nn_steps = 50\n[instance]\nkey = \"scaled-disk\"\nx0 = [0.9, 0.0]\n");
    let run = |seed: &str| {
        let out = rflow(&["simulate", "--config", &cfg, "--seed", seed]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let first = run("3");
    assert_eq!(first, run("3"));
    assert_ne!(first, run("4"));
    let text = String::from_utf8(first).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema: rflow simulate path v1"));
    assert_eq!(lines.next(), Some("step,t,x0,x1,l,dl"));
    assert_eq!(lines.count(), 51);
}

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "seed = 1\nn_pathz = 10\n");
    let out = rflow(&["verify-suite", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_pathz"));
    assert!(out.stdout.is_empty());
}

#[test]
fn invalid_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for (text, key) in [
        ("dt = 0.0\n", "dt"),
        ("[instance]\nkey = \"klein-bottle\"\n", "instance.key"),
        ("[instance]\nkey = \"interval-exp\"\nx0 = [2.0]\n", "instance.x0"),
    ] {
        let cfg = write(dir.path(), "v.toml", text);
        let out = rflow(&["simulate", "--config", &cfg]);
        assert_eq!(out.status.code(), Some(2), "{text}");
        assert!(String::from_utf8_lossy(&out.stderr).contains(key), "{text}");
    }
    let out = Command::new(env!("CARGO_BIN_EXE_rflow")).args(["simulate"]).env("RFLOW_WORKERS", "many").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("RFLOW_WORKERS"));
}

#[test]
fn unsupported_instance_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cap.toml", "n_paths = 100\n[instance]\nkey = \"ricciflow-capband\"\n");
    // oracle comparison only exists on the interval flow
    let out = rflow(&["oracle-compare", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("instance.key"));
}
