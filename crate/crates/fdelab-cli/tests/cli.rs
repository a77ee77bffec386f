use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fdelab(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdelab"))
        .args(args)
        .env("FDELAB_OUT", out_root)
        .output()
        .expect("binary runs")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

const SMALL: [&str; 6] = ["--n", "300", "--r-max", "1e8", "--s-end", "3"];

#[test]
fn selftest_passes_and_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fdelab(&["selftest"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let dir = tmp.path().join("selftest");
    for f in ["series.csv", "fits.csv", "report.txt", "config.echo"] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    assert!(dir.join("plots").is_dir());
    let (_, rows) = read_csv(&dir.join("series.csv"));
    assert!(rows.iter().all(|r| r[1] == "1"));
}

#[test]
fn zero_amplitude_is_a_stationary_run() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate", "--set", "problem.bumps=[{center=1.0, width=1.0, amplitude=0.0}]"];
    args.extend(SMALL);
    let out = fdelab(&args, tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("simulate");
    let (header, rows) = read_csv(&dir.join("series.csv"));
    assert_eq!(header[0], "s");
    for name in ["entropy_nl", "fisher_nl", "l2_dev", "rel_mass"] {
        let j = header.iter().position(|h| h == name).unwrap();
        assert!(rows.iter().all(|r| r[j].parse::<f64>().unwrap() == 0.0), "{name} not zero");
    }
    let report = fs::read_to_string(dir.join("report.txt")).unwrap();
    assert!(report.contains("stationary run"));
}

#[test]
fn csv_numbers_use_seventeen_significant_digits() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate"];
    args.extend(SMALL);
    assert_eq!(fdelab(&args, tmp.path()).status.code(), Some(0));
    let (_, rows) = read_csv(&tmp.path().join("simulate/series.csv"));
    let cell = &rows[1][1];
    let mantissa = cell.trim_start_matches('-').split('e').next().unwrap();
    assert_eq!(mantissa.len(), 18, "{cell}");
    let text = fs::read_to_string(tmp.path().join("simulate/series.csv")).unwrap();
    assert!(text.starts_with("# "));
    assert!(text.contains("# entropy_nl: nonlinear relative entropy"));
}

#[test]
fn identical_configs_give_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut a = vec!["simulate", "-o"];
    let d1 = tmp.path().join("one");
    let d2 = tmp.path().join("two");
    let d1s = d1.to_str().unwrap().to_string();
    let d2s = d2.to_str().unwrap().to_string();
    a.push(&d1s);
    a.extend(SMALL);
    assert_eq!(fdelab(&a, tmp.path()).status.code(), Some(0));
    a[2] = &d2s;
    assert_eq!(fdelab(&a, tmp.path()).status.code(), Some(0));
    for f in ["series.csv", "fits.csv", "report.txt", "plots/entropy.gp"] {
        assert_eq!(fs::read(d1.join(f)).unwrap(), fs::read(d2.join(f)).unwrap(), "{f} differs");
    }
    // the echoes differ only in the output directory
    let strip = |p: &Path| -> Vec<String> {
        fs::read_to_string(p).unwrap().lines().filter(|l| !l.starts_with("dir = ")).map(String::from).collect()
    };
    assert_eq!(strip(&d1.join("config.echo")), strip(&d2.join("config.echo")));
}

#[test]
fn config_echo_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate", "--set", "grid.core_fraction=0.3"];
    args.extend(SMALL);
    assert_eq!(fdelab(&args, tmp.path()).status.code(), Some(0));
    let echo = tmp.path().join("simulate/config.echo");
    let again = tmp.path().join("again");
    let out = fdelab(&["simulate", "-c", echo.to_str().unwrap(), "-o", again.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        fs::read(tmp.path().join("simulate/series.csv")).unwrap(),
        fs::read(again.join("series.csv")).unwrap()
    );
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "[grid]\nn = 100\nr_max = 1e8\n[time]\ns_end = 2.0\n").unwrap();
    let out = fdelab(&["simulate", "-c", cfg.to_str().unwrap(), "--n", "150"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let echo = fs::read_to_string(tmp.path().join("simulate/config.echo")).unwrap();
    assert!(echo.contains("n = 150"), "{echo}");
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[grid]\nnodes = 3\n").unwrap();
    assert_eq!(fdelab(&["simulate", "-c", cfg.to_str().unwrap()], tmp.path()).status.code(), Some(1));
    assert_eq!(fdelab(&["simulate", "--m", "0.7"], tmp.path()).status.code(), Some(1));
    assert_eq!(fdelab(&["simulate", "--set", "problem.d1=5"], tmp.path()).status.code(), Some(1));
    assert_eq!(fdelab(&["simulate", "-c", "/nonexistent/x.toml"], tmp.path()).status.code(), Some(1));
    assert_eq!(fdelab(&["nonsense"], tmp.path()).status.code(), Some(1));
}

#[test]
fn newton_failure_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate", "--set", "time.newton_tol=1e-300"];
    args.extend(SMALL);
    let out = fdelab(&args, tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("newton"));
}

#[test]
fn geometry_table_has_the_three_dimensional_unit_point() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(fdelab(&["geometry"], tmp.path()).status.code(), Some(0));
    let (header, rows) = read_csv(&tmp.path().join("geometry/series.csv"));
    let col = |n: &str| header.iter().position(|h| h == n).unwrap();
    let row = rows
        .iter()
        .find(|r| r[col("d")] == "3" && r[col("x")].parse::<f64>().unwrap() == 1.0)
        .unwrap();
    let f = |n: &str| row[col(n)].parse::<f64>().unwrap();
    assert!((f("numeric_min") - 1.0).abs() <= 1e-12);
    assert!((f("numeric_max") - 1.25).abs() <= 1e-12);
    assert!(f("eigen_error") <= 1e-12);
}

#[test]
fn compare_writes_one_block_per_exponent() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fdelab(&["compare", "--workers", "2", "--n", "300", "--r-max", "1e12", "--s-end", "10"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&tmp.path().join("compare/fits.csv"));
    let m = header.iter().position(|h| h == "m").unwrap();
    let mut ms: Vec<f64> = rows.iter().map(|r| r[m].parse().unwrap()).collect();
    ms.dedup();
    assert_eq!(ms, vec![1.0 / 3.0, 0.45]);
    let report = fs::read_to_string(tmp.path().join("compare/report.txt")).unwrap();
    assert!(report.contains("(m*)"));
}

#[test]
fn spectrum_rows_follow_the_radius_list() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fdelab(&["spectrum", "--n", "200", "--set", "spectrum.r_list=[20.0, 40.0]", "--set", "spectrum.k=3"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let (header, rows) = read_csv(&tmp.path().join("spectrum/series.csv"));
    assert_eq!(header, ["r_max", "lambda_1", "lambda_2", "lambda_3"]);
    assert_eq!(rows.len(), 2);
    let l2: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(l2[1] < l2[0]);
}

#[test]
fn goodtimes_with_tiny_k_marks_every_time_good() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["goodtimes", "--set", "goodtimes.k=1e-30"];
    args.extend(SMALL);
    assert_eq!(fdelab(&args, tmp.path()).status.code(), Some(0));
    let (header, rows) = read_csv(&tmp.path().join("goodtimes/series.csv"));
    let g = header.iter().position(|h| h == "good").unwrap();
    assert!(rows.iter().all(|r| r[g] == "1"));
}

#[test]
fn output_headers_name_targets_by_content() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate"];
    args.extend(SMALL);
    assert_eq!(fdelab(&args, tmp.path()).status.code(), Some(0));
    let report = fs::read_to_string(tmp.path().join("simulate/report.txt")).unwrap();
    for needle in ["[entropy sandwich", "[Fisher comparison", "[dissipation identity"] {
        assert!(report.contains(needle), "{needle}");
    }
    for forbidden in ["Lemma", "Theorem", "Eq.", "Prop"] {
        assert!(!report.contains(forbidden), "{forbidden}");
    }
}
