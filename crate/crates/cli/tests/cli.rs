use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::tempdir;

fn pscurv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pscurv"))
        .args(args)
        .env_remove("PSCURV_OUT_ROOT")
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn check<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == name)
        .unwrap_or_else(|| panic!("no check {name}"))
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn trivial_defaults_pass_with_positive_margin_and_exact_blowup() {
    let dir = tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = pscurv(&["evolve", "--scenario", "TRIVIAL_ODE", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let run = dir.path().join("TRIVIAL_ODE");
    let rep = read_json(&run.join("evolve.json"));
    assert!(check(&rep, "ab_margin")["measured"].as_f64().unwrap() > 0.0);
    let t1 = rep["values"]["t1"].as_f64().unwrap();
    assert!((t1 - 1.5).abs() <= 1e-4, "{t1}");
    for f in ["trajectory_t.csv", "trajectory_tau.csv", "trajectory_r.csv", "final.bin", "final.csv", "config.toml"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let csv = fs::read_to_string(run.join("trajectory_t.csv")).unwrap();
    assert!(csv.starts_with("time,min,max,J,residual\n"));

    let o = pscurv(&["report", out]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    let level = summary
        .lines()
        .find(|l| l.contains("omega_estimate_min@eps=1e-4"))
        .expect("omega estimate listed");
    let v: f64 = level.rsplit(" = ").next().unwrap().parse().unwrap();
    assert!((v - 2f64.sqrt()).abs() <= 1e-6, "{v}");
    assert!(dir.path().join("series/TRIVIAL_ODE_evolve_sup_v.csv").is_file());
}

#[test]
fn circle_area_law_holds() {
    let dir = tempdir().unwrap();
    let o = pscurv(&["csf", "--scenario", "CSF_CIRCLE", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let rep = read_json(&dir.path().join("CSF_CIRCLE/csf.json"));
    let area = check(&rep, "area_law");
    assert!(area["passed"].as_bool().unwrap());
    assert!(area["measured"].as_f64().unwrap() <= 1e-4);
    let boundary = fs::read_to_string(dir.path().join("CSF_CIRCLE/curve_boundary.csv")).unwrap();
    assert!(boundary.starts_with("t,x,y\n"));
}

#[test]
fn ellipse_report_lists_roundness_and_v_limit() {
    let dir = tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = pscurv(&["csf", "--scenario", "CSF_ELLIPSE", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let o = pscurv(&["report", out]);
    assert_eq!(o.status.code(), Some(0));
    let summary = stdout(&o);
    let row = summary.lines().find(|l| l.contains("kt_convergence")).unwrap();
    assert!(row.ends_with("PASS"), "{row}");
    for key in ["v_limit_min", "v_limit_max"] {
        let line = summary.lines().find(|l| l.contains(&format!(" {key} = "))).unwrap();
        let v: f64 = line.rsplit(" = ").next().unwrap().parse().unwrap();
        assert!((v - 0.5f64.sqrt()).abs() <= 1e-3, "{line}");
    }
    let series = fs::read_to_string(dir.path().join("series/CSF_ELLIPSE_csf_kt_deviation.csv")).unwrap();
    assert!(series.starts_with("x,y\n") && series.lines().count() > 10);
}

#[test]
fn negative_source_is_rejected_without_artifacts() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "scenario = \"CUSTOM\"\nt_end = 2.0\n\n[frame]\nkind = \"T_FRAME\"\nn = 3\nr0 = 1.0\n\n[source]\nkind = \"constant\"\nvalue = -0.5\n\n[initial]\nkind = \"constant\"\nvalue = 1.0\n").unwrap();
    let out = dir.path().join("runs");
    let o = pscurv(&["evolve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("source:"), "{}", stderr(&o));
    assert!(!out.exists());

    let o = pscurv(&["evolve", "--set", "source={kind=\"constant\", value=-1.0}", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    fs::write(&cfg, "scenario = \"TRIVIAL_ODE\"\n[grid]\npoints = 8\n").unwrap();
    let o = pscurv(&["evolve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn empty_dir_reports_missing_artifacts() {
    let dir = tempdir().unwrap();
    let o = pscurv(&["report", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("MISSING_ARTIFACTS"));
    let o = pscurv(&["report", dir.path().join("absent").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn commands_without_a_matching_scenario_are_rejected() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("runs");
    for args in [
        vec!["csf", "--scenario", "TRIVIAL_ODE"],
        vec!["extend", "--scenario", "CONSTANT_F_TAU"],
        vec!["evolve", "--scenario", "NOT_A_SCENARIO"],
    ] {
        let mut a = args.clone();
        a.extend(["--out", out.to_str().unwrap()]);
        let o = pscurv(&a);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
    assert!(!out.exists());
}

#[test]
fn identical_config_and_seed_give_identical_outputs() {
    let a = tempdir().unwrap();
    let b = tempdir().unwrap();
    for d in [&a, &b] {
        let o = pscurv(&[
            "diagnose",
            "--scenario",
            "CSF_CIRCLE",
            "--set",
            "grid.points_per_axis=16",
            "--seed",
            "11",
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert!(o.status.code() == Some(0) || o.status.code() == Some(1), "{}", stderr(&o));
    }
    let run = |d: &tempfile::TempDir| d.path().join("CSF_CIRCLE");
    let mut names: Vec<_> = fs::read_dir(run(&a)).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 5);
    for n in names {
        assert_eq!(fs::read(run(&a).join(&n)).unwrap(), fs::read(run(&b).join(&n)).unwrap(), "{n:?}");
    }
    assert_eq!(read_json(&run(&a).join("diagnose.json"))["seed"], 11);
}

#[test]
fn flags_override_config_and_env_sets_output_root() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "scenario = \"CONSTANT_F_TAU\"\nseed = 1\n[grid]\npoints_per_axis = 16\n[stationary]\nconstants = [1.0]\n").unwrap();
    let root = dir.path().join("root");
    let o = Command::new(env!("CARGO_BIN_EXE_pscurv"))
        .args(["stationary", "--config", cfg.to_str().unwrap(), "--seed", "5", "--scenario", "PERTURBED_F"])
        .env("PSCURV_OUT_ROOT", &root)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let rep = read_json(&root.join("PERTURBED_F/stationary.json"));
    assert_eq!(rep["seed"], 5);
    assert_eq!(rep["scenario"], "PERTURBED_F");
    assert!(rep["values"]["sweep_closed_form_err@f=1"].as_f64().unwrap() <= 1e-10);

    // the written configuration reproduces the run
    let written = root.join("PERTURBED_F/config.toml");
    let again = dir.path().join("again");
    let o = pscurv(&["stationary", "--config", written.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        fs::read(root.join("PERTURBED_F/stationary.json")).unwrap(),
        fs::read(again.join("PERTURBED_F/stationary.json")).unwrap()
    );
}

#[test]
fn batch_runs_each_scenario_and_disabled_checks_do_not_fail() {
    let dir = tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let base = ["extend", "--scenario", "TRIVIAL_ODE", "--scenario", "CSF_CIRCLE", "--set", "grid.points_per_axis=16"];
    let o = pscurv(&[&base[..], &["--out", out]].concat());
    // the r~ tail share on the trivial run is 1.4%, above the 1% bound
    assert_eq!(o.status.code(), Some(1), "{}{}", stdout(&o), stderr(&o));
    let rep = read_json(&dir.path().join("TRIVIAL_ODE/extend.json"));
    assert_eq!(check(&rep, "rtilde_tail_fraction")["passed"], false);
    assert_eq!(check(&rep, "omega_cauchy")["passed"], true);
    assert!(dir.path().join("CSF_CIRCLE/extend.json").is_file());

    let o = pscurv(&[&base[..], &["--out", out, "--set", "checks.disabled=[\"rtilde_tail_fraction\"]"]].concat());
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let rep = read_json(&dir.path().join("TRIVIAL_ODE/extend.json"));
    assert_eq!(check(&rep, "rtilde_tail_fraction")["enabled"], false);
}
