use std::process::{Command, Output};

fn exact_lms(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exact-lms"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn records(text: &str) -> (csv::StringRecord, Vec<csv::StringRecord>) {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().unwrap().clone();
    let rows = reader.records().map(Result::unwrap).collect();
    (header, rows)
}

#[test]
fn count_reproduces_first_order_cells() {
    let out = exact_lms(&["count", "--order", "1", "--n", "2..4", "--m", "2..3"]);
    assert!(out.status.success());
    let (header, rows) = records(&stdout(&out));
    assert_eq!(header.iter().collect::<Vec<_>>(), ["n", "m", "count"]);
    let cell = |n: &str, m: &str| {
        rows.iter()
            .find(|r| &r[0] == n && &r[1] == m)
            .map(|r| r[2].to_string())
            .unwrap()
    };
    assert_eq!(cell("2", "3"), "55");
    assert_eq!(cell("4", "2"), "451");
    assert_eq!(cell("3", "2"), "74");
}

#[test]
fn count_marks_capped_cells() {
    let out = exact_lms(&["count", "--order", "2", "--n", "3", "--m", "3", "--p", "1", "--cap", "100"]);
    assert!(out.status.success());
    let (_, rows) = records(&stdout(&out));
    assert_eq!(&rows[0][3], "cap");
}

#[test]
fn exit_codes_follow_error_class() {
    assert_eq!(exact_lms(&["moments", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(exact_lms(&["moments", "--dist", "cauchy"]).status.code(), Some(2));
    assert_eq!(exact_lms(&["derive", "--n", "3", "--m", "3", "--p", "1", "--cap", "50"]).status.code(), Some(3));
    assert_eq!(exact_lms(&["iterate", "--n", "1", "--m", "1", "--p", "0", "--beta", "5"]).status.code(), Some(4));
    assert_eq!(exact_lms(&["steady-state", "--n", "1", "--m", "1", "--p", "0", "--beta", "5"]).status.code(), Some(4));
    assert_eq!(exact_lms(&["bogus"]).status.code(), Some(2));
}

#[test]
fn iterate_csv_round_trips() {
    let out = exact_lms(&["iterate", "--n", "2", "--m", "2", "--p", "1", "--beta", "0.05", "--iterations", "20"]);
    assert!(out.status.success());
    let (header, rows) = records(&stdout(&out));
    assert_eq!(header.iter().collect::<Vec<_>>(), ["k", "mean_w0", "mean_w1", "mse", "mse_db"]);
    assert_eq!(rows.len(), 21);
    for row in &rows {
        let mse: f64 = row[3].parse().unwrap();
        let mse_db: f64 = row[4].parse().unwrap();
        assert!((mse_db - 10.0 * mse.log10()).abs() < 1e-12);
        // values are printed in round-trip form
        assert_eq!(mse.to_string(), row[3]);
    }
    assert_eq!(&rows[0][1], "0");
}

#[test]
fn steady_state_grid_and_json() {
    let out = exact_lms(&["steady-state", "--n", "1", "--m", "1", "--p", "0", "--beta-grid", "0.1:0.3:3"]);
    assert!(out.status.success());
    let (header, rows) = records(&stdout(&out));
    assert_eq!(&header[0], "beta");
    assert_eq!(rows.len(), 3);

    let out = exact_lms(&["steady-state", "--model", "ia", "--n", "1", "--m", "1", "--p", "0", "--beta", "0.1"]);
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    // scalar white input: E[w̃²]∞ = β σ² / (2 - 3β)
    let mse = json[0]["mse"].as_f64().unwrap();
    let want = 0.01 + 0.1 * 0.01 / (2.0 - 0.3);
    assert!((mse - want).abs() < 1e-14, "{mse} vs {want}");
}

#[test]
fn simulation_is_deterministic() {
    let args = ["simulate", "--n", "2", "--m", "2", "--p", "1", "--trials", "300", "--iterations", "30", "--seed", "9"];
    let a = exact_lms(&args);
    let b = exact_lms(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let (header, rows) = records(&stdout(&a));
    assert_eq!(header.iter().collect::<Vec<_>>(), [
            "k",
            "mean_w0",
            "mean_w0_stderr",
            "mean_w1",
            "mean_w1_stderr",
            "mse",
            "mse_db",
            "mse_stderr"
        ]);
    assert_eq!(rows.len(), 30);
}

#[test]
fn stability_report_orders_bounds() {
    let out = exact_lms(&["stability", "--n", "2", "--m", "2", "--p", "1"]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let ia = json["ia"]["beta_max"].as_f64().unwrap();
    let exact = json["exact"]["beta_max"].as_f64().unwrap();
    assert!(exact > 0.0 && ia > 0.0);
    // the classical bound is optimistic for coloured tapped-delay-line input
    assert!(exact < ia);
}

#[test]
fn config_file_matches_flags() {
    let dir = std::env::temp_dir().join(format!("exact-lms-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("cfg.json");
    let out = exact_lms(&["derive", "--n", "1", "--m", "2", "--p", "1", "--order", "2"]);
    assert!(out.status.success());
    let model: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(model["variables"].as_array().unwrap().len(), 8);
    std::fs::write(
        &path,
        r#"{"n": 1, "m": 2, "p": 1, "b": [1.0, -0.9], "w_star": [1.0, 1.0], "beta": 0.05,
            "noise_variance": 0.01, "distribution": "gaussian-unit"}"#,
    )
    .unwrap();
    let from_file = exact_lms(&["iterate", "--config", path.to_str().unwrap(), "--iterations", "5"]);
    let from_flags = exact_lms(&["iterate", "--n", "1", "--m", "2", "--p", "1", "--beta", "0.05", "--iterations", "5"]);
    assert!(from_file.status.success(), "{}", String::from_utf8_lossy(&from_file.stderr));
    assert_eq!(from_file.stdout, from_flags.stdout);
    std::fs::remove_dir_all(&dir).ok();
}
