use std::path::Path;
use std::process::{Command, Output};

fn nlhj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlhj")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[test]
fn constants_for_one_one_two() {
    let o = nlhj(&["constants", "--set", "kernel.sigma=1", "--set", "hamiltonian.m=2", "--set", "hamiltonian.structure_n=1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("alpha0 = 0.63397"), "{s}");
    assert!(s.contains("c_m = 1/6"), "{s}");
    assert!(s.contains("C_m = 3/4"), "{s}");
}

#[test]
fn drift_of_tilted_kernel() {
    let o = nlhj(&["drift", "--set", "kernel.sigma=1", "--set", "kernel.density=tilt", "--set", "kernel.slope=0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("b = 0.31831"), "{}", stdout(&o));
}

#[test]
fn spatially_constant_solution_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "kernel.sigma = 0.7\ncoefficient_a.form = constant(2)\nhamiltonian.f = constant(1)\n\
         grid.initial = constant(0.3)\ngrid.horizon = 0.25\ngrid.n = 128\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = nlhj(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines = data_lines(&out.join("trajectory.csv"));
    assert_eq!(lines[0], "t,x,u");
    let last: Vec<f64> = lines.last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 0.25);
    assert!((last[2] - 0.55).abs() < 1e-12, "u(T) = {}", last[2]);
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, file, extra) in [
        ("solve", "trajectory.csv", vec!["--set", "grid.k=2", "--set", "grid.n=64"]),
        ("effective", "effective.csv", vec!["--set", "kernel.sigma=0.5", "--set", "cell.n=64"]),
    ] {
        let mut files = Vec::new();
        for threads in ["1", "3"] {
            let out = dir.path().join(format!("{cmd}-{threads}"));
            let mut args = vec![cmd, "--threads", threads, "--out", out.to_str().unwrap()];
            args.extend(&extra);
            let o = nlhj(&args);
            assert!(o.status.success(), "{cmd}: {}", stderr(&o));
            files.push(std::fs::read(out.join(file)).unwrap());
        }
        assert_eq!(files[0], files[1], "{cmd} output differs between thread counts");
    }
}

#[test]
fn csv_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = nlhj(&["effective", "--out", out, "--set", "cell.table_p=0,1", "--set", "cell.table_l=0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = data_lines(&dir.path().join("effective.csv"));
    assert_eq!(table[0], "x,p,l,H_bar,err,provenance");
    assert_eq!(table.len(), 3);

    let o = nlhj(&[
        "homogenize", "--out", out, "--set", "sweep.ks=2,4", "--set", "sweep.n=128", "--set", "sweep.cell_n=64",
        "--set", "sweep.horizon=0.05",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let sweep = data_lines(&dir.path().join("sweep.csv"));
    assert_eq!(sweep[0], "eps,n,dt,error,rate,corrector_residual,seconds");
    assert_eq!(sweep.len(), 3);
    assert!(sweep[1].starts_with("5e-1,128,"), "{}", sweep[1]);
    assert_eq!(data_lines(&dir.path().join("snapshots.csv"))[0], "eps,t,x,u");

    let o = nlhj(&["cell", "--out", out, "--set", "kernel.sigma=0.5", "--set", "cell.n=64"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = data_lines(&dir.path().join("cell_report.csv"));
    assert_eq!(report[0], "x,p,l,sigma,H_bar,spread,osc,lip,flap_sup");
    assert_eq!(report.len(), 2);
    assert_eq!(data_lines(&dir.path().join("cell_corrector.csv"))[0], "y,psi");

    let o = nlhj(&["solve", "--out", out, "--set", "grid.k=2", "--set", "grid.n=64", "--set", "grid.snapshots=4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(data_lines(&dir.path().join("trajectory.csv"))[0], "t,x,u");
    let summary = data_lines(&dir.path().join("trajectory_summary.csv"));
    assert_eq!(summary[0], "t,sup_norm,initial_layer");
    assert_eq!(summary[1], "0e0,1e0,0e0");
}

#[test]
fn misspelled_key_reports_nearest_section() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "kernl.sigma = 1.5\ngrid.n = banana\n").unwrap();
    let o = nlhj(&["audit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("kernl.sigma") && e.contains("`kernel`"), "{e}");
    assert!(e.contains("grid.n"), "both errors listed: {e}");
}

#[test]
fn order_one_kernel_failing_dini_is_rejected() {
    let o = nlhj(&["drift", "--set", "kernel.sigma=1", "--set", "kernel.density=log_tilt"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ellipticity audit"), "{}", stderr(&o));
}

#[test]
fn failed_audit_gates_runs_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let overclaim = ["--set", "hamiltonian.b0=5", "--set", "grid.k=2", "--set", "grid.n=64"];
    let mut args = vec!["audit"];
    args.extend(overclaim);
    assert_eq!(nlhj(&args).status.code(), Some(2));

    let mut args = vec!["solve", "--out", out];
    args.extend(overclaim);
    let o = nlhj(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--force"), "{}", stderr(&o));

    args.push("--force");
    let o = nlhj(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("warning"));
}

#[test]
fn io_failures_exit_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.cfg");
    assert_eq!(nlhj(&["audit", "--config", missing.to_str().unwrap()]).status.code(), Some(4));

    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let o = nlhj(&["solve", "--out", blocker.to_str().unwrap(), "--set", "grid.k=2", "--set", "grid.n=64"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}
