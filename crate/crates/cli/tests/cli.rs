use std::path::Path;
use std::process::{Command, Output};

fn beamcap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamcap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn body(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect()
}

fn rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let b = body(text);
    let mut r = csv::Reader::from_reader(b.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let data = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, data)
}

fn column(text: &str, name: &str) -> Vec<f64> {
    let (h, data) = rows(text);
    let i = h.iter().position(|c| c == name).unwrap_or_else(|| panic!("no column {name}"));
    data.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stat(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key}"))
        .parse()
        .unwrap()
}

#[test]
fn asymptotic_sweep() {
    let args = ["asymptotic", "--y", "1", "--rho-min", "-10", "--rho-max", "20", "--points", "31"];
    let a = stdout(&beamcap(&args));
    assert!(a.starts_with("# command: asymptotic"));
    let (header, data) = rows(&a);
    assert_eq!(header, ["rho_db", "a_opt", "sbar", "pbar_on", "rate_nats_per_dim", "rate_bits_per_dim"]);
    assert_eq!(data.len(), 31);
    let angles = column(&a, "a_opt");
    assert!(angles.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    let b = stdout(&beamcap(&args));
    assert_eq!(body(&a), body(&b));
}

#[test]
fn bad_flags_are_usage_errors() {
    for args in [
        vec!["asymptotic", "--points", "0"],
        vec!["waterfill", "--y", "1.5"],
        vec!["simulate", "--tx", "4", "--rx", "2", "--rho-db", "0", "--strategy", "codebook"],
        vec!["codebook", "--tx", "4", "--rank", "4"],
        vec!["simulate", "--tx", "4"],
        vec!["frobnicate"],
    ] {
        assert_eq!(beamcap(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn waterfill_closed_form_matches_quadrature() {
    let grid = "--rho-grid=-10,-5,0,5,10,15,20";
    let closed = stdout(&beamcap(&["waterfill", "--y", "0.75", grid]));
    let quad = stdout(&beamcap(&["waterfill", "--y", "0.75", grid, "--oracle", "quad"]));
    let c = column(&closed, "capacity_nats_per_dim");
    let q = column(&quad, "capacity_nats_per_dim");
    assert_eq!(c.len(), 7);
    assert!(c.windows(2).all(|w| w[1] > w[0]));
    for (x, y) in c.iter().zip(&q) {
        assert!((x - y).abs() < 1e-8, "{x} vs {y}");
    }
}

#[test]
fn simulate_is_reproducible() {
    let args = ["simulate", "--tx", "4", "--rx", "2", "--rho-db", "0,10", "--strategy", "perfect", "--trials", "1", "--seed", "7"];
    let a = stdout(&beamcap(&args));
    let b = stdout(&beamcap(&args));
    assert_eq!(body(&a), body(&b));
    assert_eq!(rows(&a).1.len(), 2);
}

#[test]
fn simulate_writes_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("csir.csv");
    let out = beamcap(&[
        "simulate", "--tx", "1", "--rx", "1", "--rho-db", "0", "--strategy", "csir", "--trials", "20000",
        "--out", path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let rate = column(&text, "rate_nats")[0];
    let se = column(&text, "std_error_nats")[0];
    assert!((rate - 0.596_347_362_3).abs() < 4.0 * se, "{rate} ± {se}");
}

#[test]
fn infeasible_multirank_exits_with_three() {
    let out = beamcap(&[
        "simulate", "--tx", "4", "--rx", "2", "--rho-db", "0", "--strategy", "multirank", "--rfb", "4",
        "--partition", "1,0,0,0,0", "--trials", "100",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn codebook_stats_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cb.txt");
    let p = path.to_str().unwrap();
    let design = stdout(&beamcap(&["codebook", "--tx", "4", "--rank", "2", "--bits", "4", "--seed", "3", "--out", p, "--mu-trials", "20000"]));
    let mu = stat(&design, "mu_hat");
    assert!(mu >= stat(&design, "mu_lower") - 0.03 && mu <= stat(&design, "mu_upper") + 0.03);
    let loaded = stdout(&beamcap(&["codebook", "--tx", "4", "--rank", "2", "--seed", "3", "--load", p, "--mu-trials", "20000"]));
    assert_eq!(stat(&loaded, "mu_hat"), mu);
    assert_eq!(stat(&loaded, "mean_dc2"), stat(&design, "mean_dc2"));
    assert!(Path::new(p).exists());
}

#[test]
fn small_codebooks_warn() {
    let out = beamcap(&["codebook", "--tx", "4", "--rank", "2", "--bits", "1", "--mu-trials", "1000"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("large codebook"));
}
