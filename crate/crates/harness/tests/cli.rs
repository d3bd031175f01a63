use std::path::Path;
use std::process::{Command, Output};

use equidist_harness::acceptance::{criterion_3, run_suite};
use equidist_harness::config::ExperimentConfig;
use equidist_harness::record::Record;
use equidist_harness::runs::RunError;

fn equidist(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_equidist")).args(args).arg("--out").arg(dir).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn dim_writes_a_record_and_report_reads_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = equidist(&["dim"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let rec = Record::parse(&std::fs::read_to_string(dir.path().join("dim.jsonl")).unwrap()).unwrap();
    assert_eq!(rec.units.len(), 3);
    assert!(std::fs::read_to_string(dir.path().join("dim.csv")).unwrap().starts_with("# equidist.summary v1\np,dim,ratio,excluded\n8,7,"));
    let out = equidist(&["report"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("== dim (3 units"));
}

#[test]
fn ensembles_below_thirty_samples_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "samples = 10\n");
    let out = equidist(&["converge-zeros", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 30"));
    assert!(!dir.path().join("converge-zeros.jsonl").exists());
    let small = ExperimentConfig { samples: 10, ..ExperimentConfig::default() };
    assert!(matches!(run_suite(&small), Err(RunError::Precondition(_))));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sampels = 50\n");
    let out = equidist(&["dim", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sampels"));
    assert_eq!(equidist(&["report"], dir.path()).status.code(), Some(2));
    assert_eq!(equidist(&["bogus"], dir.path()).status.code(), Some(2));
}

#[test]
fn fubini_study_kernel_ladder_is_p_plus_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "weight = fs\np = 4,8,16\ngrid_points = 50\n");
    let out = equidist(&["kernel", "--config", &cfg, "--seed", "3"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let rec = Record::parse(&std::fs::read_to_string(dir.path().join("kernel.jsonl")).unwrap()).unwrap();
    assert!(rec.header["config"].as_str().unwrap().contains("seed = 3"));
    for row in rec.summary["ladder"].as_array().unwrap() {
        let p = row["p"].as_f64().unwrap();
        for k in ["min", "max"] {
            assert!((row[k].as_f64().unwrap() / (p + 1.0) - 1.0).abs() < 1e-10, "{row}");
        }
    }
}

#[test]
fn loose_clustering_surfaces_mass_failures() {
    let cfg = ExperimentConfig { cluster_tol: 1e-2, ..ExperimentConfig::default() };
    let c = criterion_3(&cfg);
    println!("{}", c.line());
    assert!(!c.pass);
    let bad = c.detail.strip_prefix("sphere ").and_then(|d| d.split('/').next()).unwrap();
    assert!(bad.parse::<usize>().unwrap() > 0, "{}", c.detail);
}
