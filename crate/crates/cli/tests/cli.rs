use std::path::Path;
use std::process::{Command, Output};

fn qseq(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qseq")).args(args).current_dir(dir).output().unwrap()
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = qseq(args, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn order_one_always_ticks() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ok(&["generate", "--process", "renewal", "--order", "1", "--length", "5"], dir.path()).trim(), "11111");
}

#[test]
fn generation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["generate", "--order", "3", "--length", "1000000", "--seed", "7", "--out", "a.txt"], d);
    ok(&["generate", "--order", "3", "--length", "1000000", "--seed", "7", "--out", "b.txt"], d);
    assert_eq!(read(d, "a.txt"), read(d, "b.txt"));
    ok(&["generate", "--order", "3", "--length", "1000", "--seed", "8", "--out", "c.txt"], d);
    assert_ne!(read(d, "a.txt")[..1000], read(d, "c.txt")[..1000]);
}

#[test]
fn order_five_tick_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&["generate", "--order", "5", "--length", "200000", "--seed", "11"], dir.path());
    let text = text.trim();
    let freq = text.bytes().filter(|&b| b == b'1').count() as f64 / text.len() as f64;
    assert!((freq - 1.0 / 3.0).abs() <= 0.01, "{freq}");
}

#[test]
fn eval_reproduces_the_final_history_row() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["generate", "--order", "4", "--length", "20000", "--seed", "2", "--out", "t.txt"], d);
    ok(&["counts", "--trajectory", "t.txt", "--past", "3", "--out", "c.json"], d);
    ok(
        &["train", "--counts", "c.json", "--order", "4", "--max-epochs", "40", "--seed", "5", "--out", "m.json", "--history", "h.csv"],
        d,
    );
    let history = read(d, "h.csv");
    let lines: Vec<&str> = history.lines().collect();
    assert_eq!(lines[0], "epoch,cost_nats,kl_true_nats,kl_emp_nats,grad_norm");
    assert_eq!(lines.len(), 1 + 40 + 1);
    let last: Vec<f64> = lines.last().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    let best_cost = lines[1..lines.len() - 1]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(last[1], best_cost);

    let report: serde_json::Value = serde_json::from_str(&ok(&["eval", "--model", "m.json", "--counts", "c.json"], d)).unwrap();
    assert_eq!(report["metric"], "kl");
    assert!((report["value_nats"].as_f64().unwrap() - last[3]).abs() <= 1e-9);
    let report: serde_json::Value =
        serde_json::from_str(&ok(&["eval", "--model", "m.json", "--counts", "c.json", "--metric", "coemission"], d)).unwrap();
    assert!((report["value_nats"].as_f64().unwrap() - last[1]).abs() <= 1e-9);
    let report: serde_json::Value = serde_json::from_str(&ok(&["eval", "--model", "m.json", "--order", "4"], d)).unwrap();
    assert!((report["value_nats"].as_f64().unwrap() - last[2]).abs() <= 1e-9);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.cfg"), "# shared\norder = 3\nseed = 9\n\n[train]\nmax_epochs = 12\n").unwrap();
    ok(&["generate", "--config", "run.cfg", "--length", "5000", "--out", "t.txt"], d);
    ok(&["generate", "--order", "3", "--seed", "9", "--length", "5000", "--out", "u.txt"], d);
    assert_eq!(read(d, "t.txt"), read(d, "u.txt"));
    ok(&["counts", "--trajectory", "t.txt", "--past", "2", "--out", "c.json"], d);
    ok(&["train", "--config", "run.cfg", "--counts", "c.json", "--out", "m.json", "--history", "a.csv"], d);
    assert_eq!(read(d, "a.csv").lines().count(), 1 + 12 + 1);
    ok(&["train", "--config", "run.cfg", "--counts", "c.json", "--out", "m.json", "--history", "b.csv", "--max-epochs", "4"], d);
    assert_eq!(read(d, "b.csv").lines().count(), 1 + 4 + 1);

    std::fs::write(d.join("bad.cfg"), "[train]\nlength = 3\n").unwrap();
    let out = qseq(&["train", "--config", "bad.cfg", "--counts", "c.json", "--out", "m.json"], d);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(qseq(&["generate", "--length", "5"], d).status.code(), Some(2));
    assert_eq!(qseq(&["generate", "--order", "0", "--length", "5"], d).status.code(), Some(2));
    assert_eq!(qseq(&["frobnicate"], d).status.code(), Some(2));
    assert_eq!(qseq(&["eval", "--model", "missing.json", "--order", "3"], d).status.code(), Some(2));
    let pass = qseq(&["gradcheck", "--trials", "2", "--samples", "20000"], d);
    assert_eq!(pass.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&pass.stdout).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(qseq(&["gradcheck", "--trials", "1", "--tol", "1e-15"], d).status.code(), Some(3));
}

#[test]
fn gradscan_writes_one_row_per_init() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gradscan", "--order", "5", "--past", "4", "--inits", "6", "--seed", "1", "--out", "g.csv"], d);
    let text = read(d, "g.csv");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "model,init,grad_magnitude");
    assert_eq!(lines.len(), 1 + 12);
    assert!(lines[1].starts_with("recurrent1,0,"));
    assert!(lines[12].starts_with("born,5,"));
}

fn without_wall_time(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(9);
            f.join(",")
        })
        .collect()
}

#[test]
fn benchmark_grid_rows_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = |out: &'static str| {
        vec!["benchmark", "--orders", "3,4", "--sizes", "2000", "--seeds", "2", "--past", "3", "--max-epochs", "5", "--seed", "1", "--out", out]
    };
    ok(&args("a.csv"), d);
    let text = read(d, "a.csv");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "order,T,model,replica,params,kl_empirical_nats,kl_true_nats,coemission_nats,epochs,wall_seconds,status"
    );
    assert_eq!(lines.len(), 1 + 2 * 3 * 2);
    let params: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(4).unwrap()).collect();
    // a 4-qubit Born register at M = 3
    assert_eq!(params[..6], ["8", "8", "33", "33", "60", "60"]);
    assert!(lines[1..].iter().all(|l| l.ends_with(",ok")));
    let meta: serde_json::Value = serde_json::from_str(&read(d, "a.csv.meta.json")).unwrap();
    assert_eq!(meta["seeds_per_cell"], 2);

    let out = Command::new(env!("CARGO_BIN_EXE_qseq")).args(args("b.csv")).current_dir(d).env("QSEQ_THREADS", "1").output().unwrap();
    assert!(out.status.success());
    assert_eq!(without_wall_time(&text), without_wall_time(&read(d, "b.csv")));
}

#[test]
fn bad_thread_count_is_an_argument_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_qseq"))
        .args(["generate", "--order", "2", "--length", "3"])
        .env("QSEQ_THREADS", "zero")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn benchmark_reports_standard_parameter_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["benchmark", "--orders", "5", "--sizes", "1000", "--seeds", "1", "--max-epochs", "1", "--out", "p.csv"], d);
    let text = read(d, "p.csv");
    let params: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(4).unwrap()).collect();
    assert_eq!(params, ["8", "33", "140"]);
}
