use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sparse-hc"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn sparse-hc")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn theory_single_point() {
    let o = run(&["theory", "--r", "0.1", "--beta", "0.7", "--sigma", "1"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("delta_star=2"), "{s}");
    assert!(s.contains("on_integer_boundary=true"), "{s}");
}

#[test]
fn theory_grid_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.csv");
    let o = run(&[
        "theory",
        "--r",
        "0.05,0.1",
        "--beta",
        "0.6,0.7",
        "--sigma",
        "1,2",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(&path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "beta,sigma,r,rho_star,delta_star,on_integer_boundary"
    );
    assert_eq!(lines.count(), 8);
    assert!(stdout(&o).contains("theory rows=8"));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["edd-table", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    let o = run(&["theory", "--r", "0.1", "--beta", "0.3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("beta"));
    let o = run(&[
        "edd-table",
        "--n",
        "10",
        "--I",
        "2",
        "--mu",
        "1",
        "--detector",
        "nope",
        "--b",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["edd-table", "--n", "10", "--I", "2", "--mu", "1"]);
    assert_eq!(o.status.code(), Some(2), "missing threshold");
}

const EDD_ARGS: &[&str] = &[
    "edd-table",
    "--n",
    "40",
    "--I",
    "1,4",
    "--mu",
    "2",
    "--b",
    "2.5",
    "--reps",
    "20",
    "--horizon",
    "200",
    "--seed",
    "7",
    "--pvalue",
    "asymptotic",
];

#[test]
fn edd_table_is_byte_identical_across_runs() {
    let a = run(EDD_ARGS);
    let b = run(EDD_ARGS);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let csv = stdout(&a);
    assert!(csv.starts_with(
        "detector,N,beta_or_I,r_or_mu,sigma,b,n_reps,edd,edd_se,n_censored,arl_est,r2\n"
    ));
    assert_eq!(csv.lines().count(), 3);
    let mut other: Vec<&str> = EDD_ARGS.to_vec();
    let i = other.iter().position(|a| *a == "7").unwrap();
    other[i] = "8";
    assert_ne!(run(&other).stdout, a.stdout);
}

#[test]
fn thread_count_does_not_change_output() {
    let mut one: Vec<&str> = EDD_ARGS.to_vec();
    one.extend(["--threads", "1"]);
    let mut three: Vec<&str> = EDD_ARGS.to_vec();
    three.extend(["--threads", "3"]);
    assert_eq!(run(&one).stdout, run(&three).stdout);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "detector = \"logp-min\"\nn = [40]\nI = [1, 4]\nmu = [2.0]\nb = 2.5\nreps = 20\nhorizon = 200\nseed = 3\npvalue = \"asymptotic\"\n",
    )
    .unwrap();
    let from_file = run(&["edd-table", "--config", cfg.to_str().unwrap()]);
    assert!(
        from_file.status.success(),
        "{}",
        String::from_utf8_lossy(&from_file.stderr)
    );
    let s = stdout(&from_file);
    assert!(
        s.lines().nth(1).unwrap().starts_with("logp_min,40,1,2,"),
        "{s}"
    );
    let overridden = run(&[
        "edd-table",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "7",
        "--detector",
        "hc",
    ]);
    assert_eq!(overridden.stdout, run(EDD_ARGS).stdout);

    std::fs::write(&cfg, "n = [40]\nbogus = 1\n").unwrap();
    assert_eq!(
        run(&["edd-table", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn out_file_moves_summary_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("edd.csv");
    let mut args: Vec<&str> = EDD_ARGS.to_vec();
    args.extend(["--out", path.to_str().unwrap()]);
    let o = run(&args);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&path).unwrap(), run(EDD_ARGS).stdout);
    let s = stdout(&o);
    assert_eq!(s.lines().count(), 2);
    assert!(
        s.starts_with("N=40 beta_or_I=1 r_or_mu=2 b=2.5 edd="),
        "{s}"
    );
}

#[test]
fn calibrate_writes_records() {
    let o = run(&[
        "calibrate",
        "--n",
        "30",
        "--target-arl",
        "300",
        "--cal-horizon",
        "3000",
        "--cal-trials",
        "100",
        "--pvalue",
        "asymptotic",
        "--mu",
        "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("[[calibration]]"), "{s}");
    assert!(s.contains("b = "), "{s}");
}

#[test]
fn simulate_arl_sweep_rolling_localize() {
    let o = run(&[
        "simulate",
        "--n",
        "3",
        "--I",
        "1",
        "--mu",
        "2",
        "--tau",
        "3",
        "--horizon",
        "5",
        "--seed",
        "1",
    ]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert_eq!(s.lines().next().unwrap(), "t,x0,x1,x2");
    assert_eq!(s.lines().count(), 6);

    let o = run(&[
        "arl",
        "--n",
        "30",
        "--b",
        "2",
        "--cal-horizon",
        "2000",
        "--cal-trials",
        "50",
        "--pvalue",
        "asymptotic",
        "--mu",
        "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 2);

    let common = [
        "--n",
        "30",
        "--I",
        "3",
        "--mu",
        "2",
        "--horizon",
        "100",
        "--reps",
        "20",
        "--pvalue",
        "asymptotic",
    ];
    let mut sweep = vec!["sweep", "--thresholds", "1.5,2,2.5"];
    sweep.extend(common);
    let o = run(&sweep);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        stdout(&o).lines().next().unwrap(),
        "b,arl,arl_se,null_censored,edd,edd_se,alt_censored"
    );
    assert_eq!(stdout(&o).lines().count(), 4);

    let mut rolling = vec!["rolling"];
    rolling.extend(common);
    let o = run(&rolling);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 101);

    let mut loc = vec!["localize", "--b", "2", "--tau", "10"];
    loc.extend(common);
    let o = run(&loc);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("alarm_time="));
}
