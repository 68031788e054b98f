use std::process::{Command, Output};

fn ieti(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ieti")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const HEADER: &str =
    "domain,p,r,variant,dofs,n_lambda,n_pi,it,cond_est,t_psi,t_setup,t_apply,t_solve,t_total,l2_err,h1_err,status";

#[test]
fn run_writes_one_record() {
    let o = ieti(&["run", "--domain", "square2x2", "--p", "2", "--r", "2", "--variant", "cglu"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], HEADER);
    let f: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&f[..4], ["square2x2", "2", "2", "cglu"]);
    assert_eq!(f[6], "1");
    assert!(!f[8].is_empty() && !f[14].is_empty());
    assert_eq!(f[16], "ok");
}

#[test]
fn run_to_file() {
    let path = std::env::temp_dir().join(format!("ieti-cli-test-{}.csv", std::process::id()));
    let o = ieti(&["run", "--domain", "annulus32", "--p", "1", "--r", "1", "--variant", "mfd", "--out", path.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_file(&path).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("annulus32,1,1,mfd,"));
}

#[test]
fn sweep_rows_in_order() {
    let o = ieti(&["sweep", "--domain", "square2x2", "--p", "1", "--r", "1,2", "--variants", "mlu"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("square2x2,1,1,mlu,") && rows[1].starts_with("square2x2,1,2,mlu,"));
}

#[test]
fn empty_sweep_prints_header_only() {
    let o = ieti(&["sweep", "--domain", "square2x2", "--p", "--r", "1"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim_end(), HEADER);
}

#[test]
fn bad_configurations_exit_with_two() {
    for args in [
        &["run", "--domain", "torus", "--p", "2", "--r", "1", "--variant", "mfd"][..],
        &["run", "--domain", "square2x2", "--p", "0", "--r", "1", "--variant", "mfd"],
        &["run", "--domain", "square2x2", "--p", "2", "--r", "1", "--variant", "mfd", "--tol", "2"],
        &["sweep", "--domain", "nowhere", "--p", "1", "--r", "1"],
        &["verify", "--domain", "annulus32", "--p", "5", "--r", "6"],
        &["run", "--domain", "square2x2", "--p", "2", "--r", "1", "--variant", "lu"],
    ] {
        let o = ieti(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn verify_reports_passing_checks() {
    let o = ieti(&["verify", "--domain", "square2x2", "--p", "2", "--r", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().count() > 10);
    assert!(text.lines().all(|l| l.starts_with("PASS ")), "{text}");
}

#[test]
fn memory_budget_records_oom() {
    let o = ieti(&["run", "--domain", "annulus32", "--p", "2", "--r", "1", "--variant", "cglu", "--memory-budget", "1e-9"]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().nth(1).unwrap().ends_with(",oom"));
}
