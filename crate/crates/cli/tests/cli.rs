use std::path::Path;
use std::process::{Command, Output};

use mipbo::gp::KernelParams;
use mipbo::io::{mean_std, read_dataset_csv, read_summary_csv, read_trace_csv};
use mipbo::model::{build_full_model, parse_lp_text};
use mipbo::pwl::PwlKernel;
use mipbo::Bounds;
use mipbo_cli::commands::{trace_file, CONFIG_FILE, ERRORS_FILE, KNOTS_FILE, SUMMARY_FILE};

fn mipbo(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mipbo"));
    cmd.args(args).env_remove("MIPBO_TIME_LIMIT").env_remove("MIPBO_SUB_TIME_LIMIT");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("run the binary")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn zero_budget_summary_is_the_initial_design() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    ok(&mipbo(&["bo-run", "--benchmark", "bumpy", "--replications", "1", "--budget", "0", "--out-dir", path(&out)], &[]));
    let rows = read_trace_csv(std::fs::File::open(out.join(trace_file(0))).unwrap()).unwrap();
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r.iteration == 0));
    let summary = read_summary_csv(std::fs::File::open(out.join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(summary.len(), 1);
    assert_eq!(summary[0].mean, rows.last().unwrap().regret.unwrap());
    assert_eq!((summary[0].std, summary[0].runs), (0.0, 1));
}

#[test]
fn summary_matches_the_traces_and_the_snapshot_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let args = ["bo-run", "--benchmark", "multimodal", "--replications", "3", "--budget", "3", "--seed", "40"];
    ok(&mipbo(&[&args[..], &["--out-dir", path(&a)]].concat(), &[]));

    let traces: Vec<_> =
        (40..43).map(|s| read_trace_csv(std::fs::File::open(a.join(trace_file(s))).unwrap()).unwrap()).collect();
    let summary = read_summary_csv(std::fs::File::open(a.join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(summary.len(), 4);
    for row in &summary {
        let regrets: Vec<f64> = traces
            .iter()
            .map(|t| t.iter().rfind(|r| r.iteration == row.iteration).unwrap().regret.unwrap())
            .collect();
        let (mean, std) = mean_std(&regrets).unwrap();
        assert!((mean - row.mean).abs() <= 1e-12 && (std - row.std).abs() <= 1e-12);
        assert_eq!(row.runs, 3);
    }

    let b = dir.path().join("b");
    ok(&mipbo(&["bo-run", "--config", path(&a.join(CONFIG_FILE)), "--out-dir", path(&b)], &[]));
    for s in 40..43 {
        assert_eq!(std::fs::read(a.join(trace_file(s))).unwrap(), std::fs::read(b.join(trace_file(s))).unwrap());
    }
    assert_eq!(std::fs::read(a.join(CONFIG_FILE)).unwrap(), std::fs::read(b.join(CONFIG_FILE)).unwrap());
}

#[test]
fn environment_overrides_time_limits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    ok(&mipbo(
        &["bo-run", "--benchmark", "ks224", "--replications", "1", "--budget", "1", "--time-limit", "99", "--out-dir", path(&out)],
        &[("MIPBO_TIME_LIMIT", "0"), ("MIPBO_SUB_TIME_LIMIT", "0.5")],
    ));
    let snap: toml::Table = toml::from_str(&std::fs::read_to_string(out.join(CONFIG_FILE)).unwrap()).unwrap();
    assert_eq!(snap["solver"]["time_limit"].as_float(), Some(0.0));
    assert_eq!(snap["warm_solver"]["time_limit"].as_float(), Some(0.5));
    let rows = read_trace_csv(std::fs::File::open(out.join(trace_file(0))).unwrap()).unwrap();
    assert_eq!(rows.last().unwrap().iteration, 1);
}

#[test]
fn bad_configurations_fail_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    for (args, needle) in [
        (vec!["--benchmark", "nope"], "unknown benchmark"),
        (vec!["--replications", "0"], "replications"),
        (vec!["--benchmark", "ks224", "--addgp-groups", "0;1"], "constraint"),
        (vec!["--addgp-groups", "0,x"], "bad dimension"),
    ] {
        let o = mipbo(&[&["bo-run", "--out-dir", path(&out)], &args[..]].concat(), &[]);
        assert!(!o.status.success());
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(needle), "{args:?}: {err}");
    }
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[bo]\nbugdet = 1\n").unwrap();
    assert!(!mipbo(&["bo-run", "--config", path(&bad), "--out-dir", path(&out)], &[]).status.success());
}

#[test]
fn solve_acq_is_deterministic_and_echoes_the_gap() {
    let args = ["solve-acq", "--dim", "2", "--n", "6", "--seed", "13", "--mip-gap", "0.3"];
    let a = ok(&mipbo(&args, &[]));
    assert_eq!(a, ok(&mipbo(&args, &[])));
    let field = |line: &str, key: &str| -> String {
        line.split_whitespace().find_map(|t| t.strip_prefix(&format!("{key}="))).unwrap().to_string()
    };
    let miqp = a.lines().find(|l| l.starts_with("miqp ")).unwrap();
    let nm = a.lines().find(|l| l.starts_with("nelder_mead ")).unwrap();
    if field(miqp, "status") == "gap_reached" {
        assert!(field(miqp, "gap").parse::<f64>().unwrap() <= 0.3);
    }
    let miqp_lcb: f64 = field(miqp, "lcb").parse().unwrap();
    let polished: f64 = field(miqp, "polished_lcb").parse().unwrap();
    assert!(polished <= miqp_lcb);
    assert!(field(nm, "lcb").parse::<f64>().unwrap().is_finite());
}

#[test]
fn solve_acq_reads_a_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("d.csv");
    std::fs::write(&ds, "x0,y\n0.2,1.0\n0.7,-0.5\n").unwrap();
    let out = ok(&mipbo(&["solve-acq", "--dataset", path(&ds), "--beta", "1"], &[]));
    assert!(out.starts_with("instance dim=1 n=2 beta=1.0"));
    std::fs::write(&ds, "x0,y\n2.0,1.0\n").unwrap();
    assert!(!mipbo(&["solve-acq", "--dataset", path(&ds)], &[]).status.success());
}

#[test]
fn export_model_minimal_file() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("d.csv");
    std::fs::write(&ds, "x0,y\n0.4,0.3\n").unwrap();
    let lp = dir.path().join("m.lp");
    let args = ["export-model", "--dataset", path(&ds), "--variance", "1", "--lengthscale", "0.3", "--beta", "2", "--out", path(&lp)];
    ok(&mipbo(&args, &[]));
    let text = std::fs::read_to_string(&lp).unwrap();
    let parsed = parse_lp_text(&text).unwrap();
    assert_eq!(parsed.binaries.len(), 7);

    let data = read_dataset_csv(std::fs::File::open(&ds).unwrap()).unwrap();
    let b = Bounds::unit(1);
    let model = build_full_model(&PwlKernel::build(KernelParams::new(1.0, 0.3), &b).unwrap(), &data, 2.0, &b, &[]).unwrap();
    assert_eq!(parsed.num_linear(), model.linear.len());
    assert_eq!(parsed.num_quadratic(), model.quadratic.len());
    assert_eq!(parsed.bounds.len() + parsed.binaries.len(), model.num_vars());

    ok(&mipbo(&args, &[]));
    assert_eq!(std::fs::read_to_string(&lp).unwrap(), text);

    let sub = dir.path().join("s.lp");
    ok(&mipbo(&["export-model", "--dataset", path(&ds), "--variance", "1", "--lengthscale", "0.3", "--sub", "--out", path(&sub)], &[]));
    let parsed_sub = parse_lp_text(&std::fs::read_to_string(&sub).unwrap()).unwrap();
    assert!(parsed_sub.num_quadratic() < parsed.num_quadratic());
}

#[test]
fn linearize_writes_knots_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lin");
    let stdout = ok(&mipbo(
        &["linearize", "--variance", "2.5", "--lengthscale", "0.4", "--dim", "2", "--samples", "500", "--out-dir", path(&out)],
        &[],
    ));
    let knots = std::fs::read_to_string(out.join(KNOTS_FILE)).unwrap();
    let rows: Vec<&str> = knots.lines().skip(1).collect();
    assert_eq!(rows.len(), 15);
    assert_eq!(rows[0], "0.0,2.5");

    let pwl = PwlKernel::build(KernelParams::new(2.5, 0.4), &Bounds::unit(2)).unwrap();
    let report = pwl.max_error(500);
    let mut r = csv::Reader::from_path(out.join(ERRORS_FILE)).unwrap();
    let recs: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(recs.len(), 14);
    for (j, rec) in recs.iter().enumerate() {
        assert_eq!(rec[3].parse::<f64>().unwrap(), report.per_segment[j]);
        assert_eq!(rec[4].parse::<f64>().unwrap(), report.eps_m);
    }
    assert!(stdout.contains(&format!("{:?}", report.eps_m)));

    assert!(!mipbo(&["linearize", "--variance", "1", "--lengthscale", "0.4", "--dim", "2", "--lower", "0", "--upper", "1", "--out-dir", path(&out)], &[]).status.success());
}
