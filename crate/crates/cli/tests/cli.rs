use std::path::Path;
use std::process::{Command, Output};

fn torus(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_torus")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn empty_config_lists_missing_keys() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("empty.toml"), "").unwrap();
    let o = torus(d.path(), &["solve", "--config", "empty.toml"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("missing keys: nu, m, f, epsilon"), "{}", stderr(&o));
    let o = torus(d.path(), &["center-manifold"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("missing keys: nu, m, omega, f, epsilon"));
}

#[test]
fn config_file_with_flag_override_and_embedded_config() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "scenario = \"solve\"\nseed = 4\n\n[operator]\nnu = [1.3]\nm = 1.0\n\n[problem]\nf = \"u^2 + cos(x)\"\nepsilon = 0.5\n\n[space]\nr = 4.0\ncutoff = 16\n";
    std::fs::write(d.path().join("demo.toml"), cfg).unwrap();
    let o = torus(d.path(), &["solve", "--config", "demo.toml", "--epsilon", "0.01", "--out-dir", "out"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = std::fs::read_to_string(d.path().join("out/solve_summary.txt")).unwrap();
    assert!(summary.contains("epsilon = 0.01"));
    assert!(summary.contains("seed = 4"));
    assert!(summary.contains("cutoff = 16"));
    let field = std::fs::read_to_string(d.path().join("out/solve_solution.txt")).unwrap();
    assert!(field.starts_with("# dim=1 cutoff=16"));
}

#[test]
fn validation_errors_name_the_constraint() {
    let d = tempfile::tempdir().unwrap();
    let o = torus(d.path(), &["solve", "--dim", "2", "--nu", "1.3", "--m", "1", "--f", "u^2", "--epsilon", "0.01", "--bogus", "1"]);
    assert_eq!(code(&o), 2);
    let o = torus(d.path(), &["solve", "--dim", "2", "--nu", "1.3", "--m", "1", "--f", "u^2", "--epsilon", "0.01"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("dim = 2 but nu has 1 entries"));
    let o = torus(d.path(), &["solve", "--nu", "1.3", "--m", "1", "--f", "u^2", "--epsilon", "0.01", "--r", "2.4"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("regularity"));
    std::fs::write(d.path().join("scan.toml"), "scenario = \"scan\"\n").unwrap();
    assert_eq!(code(&torus(d.path(), &["solve", "--config", "scan.toml"])), 2);
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    // divergence: ε far outside the contraction regime
    let o = torus(p, &["solve", "--nu", "1.3", "--m", "1", "--f", "u^2 + cos(x)", "--epsilon", "3", "--radius", "0.5", "--cutoff", "8"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let o = torus(p, &["solve", "--nu", "1", "--m", "1", "--f", "u^2", "--epsilon", "0.01"]);
    assert_eq!(code(&o), 4);
    assert_eq!(code(&torus(p, &["solve", "--config", "missing.toml"])), 5);
    assert_eq!(code(&torus(p, &["plot", "--csv-in", "missing.csv", "--svg-out", "x.svg"])), 5);
}

#[test]
fn reports_append_with_a_single_header() {
    let d = tempfile::tempdir().unwrap();
    let args = ["measure-sweep", "--dim", "1", "--m", "5", "--deltas", "0.1", "--samples", "1000"];
    torus(d.path(), &args);
    torus(d.path(), &args);
    let text = std::fs::read_to_string(d.path().join("measure.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert_eq!(text.lines().filter(|l| l.starts_with("delta")).count(), 1);
}

#[test]
fn scan_reports_kernel() {
    let d = tempfile::tempdir().unwrap();
    let o = torus(d.path(), &["scan", "--nu", "1,1.4142135623730951", "--m", "3", "--kmax", "6"]);
    assert_eq!(code(&o), 0);
    let rep = std::fs::read_to_string(d.path().join("scan_report.txt")).unwrap();
    assert!(rep.contains("classification = resonant"));
    assert!(rep.contains("kernel_size = 4"));
}

#[test]
fn one_dimensional_branch_diagram() {
    let d = tempfile::tempdir().unwrap();
    let o = torus(d.path(), &["bifurcate", "--nu", "1", "--m0", "1", "--eps-range", "-1e-3:1e-3:9"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut rd = csv::Reader::from_path(d.path().join("bifurcate.csv")).unwrap();
    let rows: Vec<(f64, f64, String)> = rd
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[3].parse().unwrap(), r[2].to_string())
        })
        .collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.0 > 0.0 && r.2 == "nan"));
    // square-root growth: norm² / eps_m is nearly constant
    let q: Vec<f64> = rows.iter().map(|r| r.1 * r.1 / r.0).collect();
    assert!(rows.windows(2).all(|w| w[1].1 > w[0].1));
    assert!(q.iter().all(|x| (x / q[0] - 1.0).abs() < 0.02), "{q:?}");
    let o = torus(d.path(), &["plot", "--csv-in", "bifurcate.csv", "--svg-out", "diagram.svg"]);
    assert_eq!(code(&o), 0);
    let svg = std::fs::read_to_string(d.path().join("diagram.svg")).unwrap();
    assert_eq!(svg.matches("<circle").count(), 4);
    assert!(svg.contains("branches for eps_m > 0"));
}

#[test]
fn plot_handles_empty_and_malformed_csv() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("empty.csv"), "").unwrap();
    assert_eq!(code(&torus(d.path(), &["plot", "--csv-in", "empty.csv", "--svg-out", "e.svg"])), 0);
    assert!(std::fs::read_to_string(d.path().join("e.svg")).unwrap().contains("<line"));
    std::fs::write(d.path().join("bad.csv"), "eps_m,branch_norm,sigma\n1,oops,1\n").unwrap();
    assert_eq!(code(&torus(d.path(), &["plot", "--csv-in", "bad.csv", "--svg-out", "b.svg"])), 2);
}
