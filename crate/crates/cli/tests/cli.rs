use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wpcdelay"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Non-comment lines split on ", ".
fn body(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(", ").map(str::to_string).collect())
        .collect()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let rows = body(csv);
    let i = rows[0].iter().position(|c| c == name).unwrap_or_else(|| panic!("no column {name}"));
    rows[1..].iter().map(|r| r[i].parse().unwrap()).collect()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs()
}

#[test]
fn p1_unit_spectral_efficiency() {
    // a0 h^2 = 3 so log2(1 + 3) = 2 and each slot is R0 / (2B) = 0.5 s
    let g = 3f64.sqrt().to_string();
    let out = stdout(&["solve", "--problem", "p1", "--snr-db", "0", "--gain", &g, "--payload-bits", "1e5"]);
    assert!(close(column(&out, "td_s")[0], 1.0, 1e-12));
    assert!(close(column(&out, "t1_s")[0], 0.5, 1e-12));
    assert!(close(column(&out, "rate_bits")[0], 1e5, 1e-12));
}

#[test]
fn p3_unit_gain() {
    let out = stdout(&["solve", "--problem", "p3", "--snr-db", "0", "--gain", "1", "--payload-bits", "1e5"]);
    let ln2 = std::f64::consts::LN_2;
    let e = std::f64::consts::E;
    assert!(close(column(&out, "t1_s")[0], (e - 1.0) * ln2, 1e-9));
    assert!(close(column(&out, "t2_s")[0], ln2, 1e-9));
    assert!(close(column(&out, "td_s")[0], e * ln2, 1e-9));
}

#[test]
fn p5_single_node_is_p1() {
    let common = ["--snr-db", "7", "--gain", "0.6", "--payload-bits", "3e4"];
    let p1 = stdout(&[&["solve", "--problem", "p1"], &common[..]].concat());
    let p5 = stdout(&[&["solve", "--problem", "p5"], &common[..]].concat());
    for c in ["t1_s", "t2_s", "td_s"] {
        assert!(close(column(&p5, c)[0], column(&p1, c)[0], 1e-9), "{c}");
    }
}

#[test]
fn p6_rows_meet_rate_and_share_downlink() {
    let out = stdout(&[
        "solve", "--problem", "p6", "--snr-db", "5,10,15", "--gain", "0.5,1,2", "--theta", "0.4",
    ]);
    let t1 = column(&out, "t1_s");
    let t2 = column(&out, "t2_s");
    assert_eq!(t1.len(), 3);
    assert!(t1.iter().all(|t| *t == t1[0]));
    assert!(close(t2.iter().sum::<f64>(), t1[0], 1e-9));
    for r in column(&out, "rate_bits") {
        assert!(close(r, 5e4, 1e-8));
    }
}

#[test]
fn header_records_resolved_config() {
    let out = stdout(&["solve", "--problem", "p1", "--gain", "1", "--seed", "7", "--workers", "2"]);
    let meta: Vec<&str> = out.lines().filter(|l| l.starts_with('#')).collect();
    assert!(meta[0].starts_with("# wpcdelay "));
    for want in ["# seed = 7", "# workers = 2", "# bandwidth_hz = 100000", "# m = 4"] {
        assert!(meta.contains(&want), "missing {want}");
    }
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "problem = p1\nsnr-db = 0\ngain = 1\npayload_bits = 1e5\n").unwrap();
    let from_file = stdout(&["solve", "--config", cfg.to_str().unwrap()]);
    assert!(close(column(&from_file, "td_s")[0], 2.0, 1e-12));
    let over = stdout(&["solve", "--config", cfg.to_str().unwrap(), "--payload-bits", "5e4"]);
    assert!(close(column(&over, "td_s")[0], 1.0, 1e-12));
}

#[test]
fn exit_code_for_bad_config() {
    assert_eq!(run(&["sweep", "--bandwidth-hz", "-1"]).status.code(), Some(2));
    assert_eq!(run(&["sweep", "--problem", "p9"]).status.code(), Some(2));
    assert_eq!(run(&["solve", "--problem", "p2", "--gain", "1", "--mu", "0"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "bandwith = 1\n").unwrap();
    assert_eq!(run(&["sweep", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn exit_code_for_solver_failure_names_equation() {
    let out = run(&["solve", "--problem", "p4", "--snr-db", "5", "--gain", "1e-9", "--mu", "1e-6"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("P4") && err.contains("β"), "{err}");
}

#[test]
fn exit_code_for_divergent_average() {
    for m in ["2", "1.5"] {
        let out = run(&["sweep", "--problem", "p3", "--m", m, "--sweep-points", "2"]);
        assert_eq!(out.status.code(), Some(4));
        assert!(String::from_utf8_lossy(&out.stderr).contains("m > 2"));
    }
}

#[test]
fn sweep_body_is_byte_reproducible() {
    let args = [
        "sweep", "--problem", "p6", "--snr-db", "5,5", "--sweep-values", "2e4,5e4", "--mc-samples", "3000",
        "--calibration-samples", "1500", "--seed", "11",
    ];
    let a = stdout(&args);
    let b = stdout(&[&args[..], &["--workers", "1"]].concat());
    let strip = |s: &str| {
        s.lines()
            .filter(|l| !l.starts_with("# runtime_s") && !l.starts_with("# workers"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn sweep_r0_is_linear() {
    let out = stdout(&["sweep", "--problem", "p3", "--sweep-values", "1e4,2e4,8e4"]);
    let td = column(&out, "td_mean_s");
    assert!(close(td[1], 2.0 * td[0], 1e-8));
    assert!(close(td[2], 8.0 * td[0], 1e-8));
}

#[test]
fn sweep_snr_decreases_delay() {
    let out = stdout(&["sweep", "--problem", "p3", "--sweep-var", "snr", "--sweep-values", "0,5,10,20,30"]);
    let td = column(&out, "td_mean_s");
    assert!(td.windows(2).all(|w| w[1] < w[0]), "{td:?}");
}

#[test]
fn sweep_m_decreases_delay() {
    let out = stdout(&["sweep", "--problem", "p1", "--sweep-var", "m", "--sweep-values", "3,4,10"]);
    let td = column(&out, "td_mean_s");
    assert!(td.windows(2).all(|w| w[1] < w[0]), "{td:?}");
}

fn read(dir: &Path, file: &str) -> String {
    fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn figure4_files_and_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    stdout(&["figure", "4", "--out", d, "--sweep-values", "1e4,5e4"]);
    for (f, _) in [("figure4a.csv", 5), ("figure4b.csv", 10), ("figure4c.csv", 20)] {
        let csv = read(dir.path(), f);
        assert_eq!(body(&csv)[0].join(", "), "r0_bits, td_p1_s, td_p2_s, td_p3_s, td_p4_s");
        let [p1, p2, p3, p4] = ["td_p1_s", "td_p2_s", "td_p3_s", "td_p4_s"].map(|c| column(&csv, c));
        for i in 0..2 {
            assert!(p4[i] < p2[i] && p2[i] < p1[i], "{f}");
            assert!(p4[i] < p3[i] && p3[i] < p1[i], "{f}");
        }
    }
}

#[test]
fn figure2_gap_narrows_with_snr() {
    let dir = tempfile::tempdir().unwrap();
    stdout(&["figure", "2", "--out", dir.path().to_str().unwrap(), "--sweep-values", "5e4"]);
    let csv = read(dir.path(), "figure2.csv");
    let gap = |s: &str| {
        let e = column(&csv, &format!("mu_exact_{s}db"))[0];
        let a = column(&csv, &format!("mu_approx_{s}db"))[0];
        (e - a).abs() / e
    };
    assert!(gap("20") < gap("5"));
}

#[test]
fn figure6_power_allocation_helps() {
    let dir = tempfile::tempdir().unwrap();
    stdout(&[
        "figure", "6", "--out", dir.path().to_str().unwrap(), "--snr-db", "5", "--sweep-values", "5e4",
        "--mc-samples", "4000", "--calibration-samples", "2000",
    ]);
    let csv = read(dir.path(), "figure6.csv");
    let p5 = column(&csv, "td_p5_5db_s")[0];
    let p6 = column(&csv, "td_p6_5db_s")[0];
    let se = column(&csv, "td_p5_se_5db_s")[0] + column(&csv, "td_p6_se_5db_s")[0];
    assert!(p6 < p5 + 3.0 * se, "p5 {p5} p6 {p6}");
}
