use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn zollab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zollab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("ZOLLAB_OUT")
        .output()
        .unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_reader(csv.as_bytes());
    let i = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|x| x.unwrap()[i].to_string()).collect()
}

#[test]
fn capacities_example() {
    let dir = tempfile::tempdir().unwrap();
    let o = zollab(&["capacities", "--ellipsoid", "1,2", "--k-max", "6"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("capacities_ellipsoid.csv")).unwrap();
    assert_eq!(column(&text, "value_numerator"), ["1", "2", "2", "3", "4", "4"]);
    assert!(column(&text, "value_denominator").iter().all(|d| d == "1"));
    let m = manifest(dir.path());
    assert_eq!(m["status"], "ok");
    assert_eq!(m["inputs"]["k_max"], "6");
}

#[test]
fn counterexample_example() {
    let dir = tempfile::tempdir().unwrap();
    let o = zollab(&["counterexample", "--lambda-grid", "0.05:0.25:5"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("counterexample.csv")).unwrap();
    let strict = column(&text, "strict");
    assert_eq!(strict.len(), 5);
    assert!(strict.iter().all(|s| s == "true"));
    let vol: Vec<f64> = column(&text, "volume").iter().map(|v| v.parse().unwrap()).collect();
    assert!(vol.iter().all(|v| *v < std::f64::consts::PI.powi(2) / 2.0));
}

#[test]
fn anosov_katok_example_and_resume() {
    let full = tempfile::tempdir().unwrap();
    let o = zollab(&["anosov-katok", "--stages", "3", "--eps", "0.2"], full.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(full.path().join("anosov_katok.json")).unwrap()).unwrap();
    assert_eq!(report["certificate_passed"], true);
    assert_eq!(report["stages"].as_array().unwrap().len(), 3);

    let first = tempfile::tempdir().unwrap();
    let o = zollab(&["anosov-katok", "--stages", "1", "--eps", "0.2"], first.path());
    assert_ne!(o.status.code(), Some(1));
    let checkpoint = first.path().join("state.json");
    let resumed = tempfile::tempdir().unwrap();
    let o = zollab(&["anosov-katok", "--stages", "3", "--eps", "0.2", "--checkpoint", checkpoint.to_str().unwrap()], resumed.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read(full.path().join("state.json")).unwrap(),
        fs::read(resumed.path().join("state.json")).unwrap()
    );
}

#[test]
fn reruns_reproduce_hashes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["volume", "--bumps", "2", "--grid", "10", "--seed", "11", "--ellipsoid", "1,2"];
    for d in [&a, &b] {
        let o = zollab(&args, d.path());
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ma, mb) = (manifest(a.path()), manifest(b.path()));
    assert_eq!(ma["files"], mb["files"]);
    let files = ma["files"].as_array().unwrap();
    assert_eq!(files.len(), 3);
    for f in files {
        let bytes = fs::read(a.path().join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"], zollab::output::sha256_hex(&bytes));
    }
    let c = tempfile::tempdir().unwrap();
    zollab(&["volume", "--bumps", "2", "--grid", "10", "--seed", "12", "--ellipsoid", "1,2"], c.path());
    assert_ne!(manifest(c.path())["files"], ma["files"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = zollab(&["capacities", "--ellipsoid", "1,x"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("'ellipsoid'"));
    let o = zollab(&["genfun", "--theta", "-1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("'theta'"));
    let o = zollab(&["spectral", "--no-such-key", "1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = zollab(&["anosov-katok", "--stages", "1", "--eps", "0.05", "--centers", "40"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(manifest(dir.path())["status"], "inconclusive");
}

#[test]
fn environment_sets_default_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_zollab"))
        .args(["spectral", "--ellipsoid", "1.05pi,0.95pi"])
        .env("ZOLLAB_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("spectral.csv")).unwrap();
    assert_eq!(text, "k,value_numerator,value_denominator,pi_power\n0,19,20,1\n1,21,20,1\n");
}

#[test]
fn config_files_with_includes() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("shared")).unwrap();
    fs::write(dir.path().join("shared/base.conf"), "# shared\nk-max = 4\nellipsoid = 1,2\n").unwrap();
    fs::write(dir.path().join("run.conf"), "command = capacities\ninclude = shared/base.conf\nellipsoid = 2,3\n").unwrap();
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_zollab"))
        .args(["capacities", "--config"])
        .arg(dir.path().join("run.conf"))
        .args(["--k-max", "3", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("capacities_ellipsoid.csv")).unwrap();
    assert_eq!(column(&text, "value_numerator"), ["2", "3", "4"]);

    fs::write(dir.path().join("wrong.conf"), "command = bm\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_zollab"))
        .args(["capacities", "--config"])
        .arg(dir.path().join("wrong.conf"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("'command'"));
}
