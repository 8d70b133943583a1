use std::path::Path;
use std::process::{Command, Output};

fn covden(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covden"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

const SMALL_SIM: &[&str] = &[
    "simulate",
    "--block-sizes",
    "3,4,5",
    "--n",
    "24",
    "--m",
    "6",
    "--estimators",
    "naive,lp",
    "--seed",
    "3",
];

#[test]
fn simulate_writes_reports_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = covden(
        &[SMALL_SIM, &["--out-dir", "a", "--diagnostics"]].concat(),
        dir.path(),
    );
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let csv = read(dir.path().join("a/report.csv"));
    assert_eq!(csv.lines().count(), 3);
    assert!(stdout(&a).contains("lp"));
    for f in [
        "report.json",
        "scree.csv",
        "dendrogram_average.csv",
        "dendrogram_single.csv",
    ] {
        assert!(dir.path().join("a").join(f).is_file(), "{f}");
    }
    assert_eq!(read(dir.path().join("a/scree.csv")).lines().count(), 13);

    let b = covden(
        &[SMALL_SIM, &["--out-dir", "b", "--threads", "2"]].concat(),
        dir.path(),
    );
    assert_eq!(b.status.code(), Some(0));
    assert_eq!(read(dir.path().join("b/report.csv")), csv);
    assert_eq!(
        read(dir.path().join("b/report.json")),
        read(dir.path().join("a/report.json"))
    );
}

#[test]
fn simulate_other_models() {
    let dir = tempfile::tempdir().unwrap();
    let o = covden(
        &[
            "simulate",
            "--model",
            "powerlaw",
            "--p",
            "8",
            "--alpha",
            "0",
            "--n",
            "16",
            "--m",
            "2",
            "--estimators",
            "naive",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = covden(
        &[
            "simulate", "--model", "nested", "--p", "6", "--n", "12", "--m", "2",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn help_lists_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = covden(&["simulate", "--help"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("[default: 200]"), "{text}");
    assert!(text.contains("naive,lp,alca,2s-lp"));
    let top = covden(&["--help"], dir.path());
    for sub in ["simulate", "clean", "train", "backtest"] {
        assert!(stdout(&top).contains(sub));
    }
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        covden(&["simulate", "--bogus"], dir.path()).status.code(),
        Some(2)
    );
    assert_eq!(covden(&[], dir.path()).status.code(), Some(2));
    assert_eq!(
        covden(&["simulate", "--estimators", "ridge"], dir.path())
            .status
            .code(),
        Some(2)
    );
    std::fs::write(dir.path().join("bad.conf"), "wibble = 1\n").unwrap();
    assert_eq!(
        covden(&["--config", "bad.conf", "simulate"], dir.path())
            .status
            .code(),
        Some(2)
    );
    let missing = covden(
        &[
            "backtest",
            "--returns",
            "nope.csv",
            "--split-date",
            "2024-01-01",
        ],
        dir.path(),
    );
    assert_eq!(missing.status.code(), Some(2), "{}", stderr(&missing));
}

#[test]
fn numeric_failures_exit_three() {
    // A constant asset has zero variance in every window.
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("date,A,B\n");
    let start = chrono::NaiveDate::from_ymd_opt(2023, 1, 1).unwrap();
    for (d, date) in start.iter_days().take(60).enumerate() {
        text.push_str(&format!("{date},{},0\n", 0.01 * ((d * 7 % 5) as f64 - 2.0)));
    }
    std::fs::write(dir.path().join("r.csv"), text).unwrap();
    let o = covden(
        &[
            "backtest",
            "--returns",
            "r.csv",
            "--split-date",
            "2023-01-21",
            "--t-in",
            "20",
            "--t-out",
            "20",
            "--delta-t",
            "20",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn config_file_with_command_line_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.conf"),
        "# small run\nblock_sizes = 3,4,5\nn = 24\nm = 6\nestimators = naive,lp\nseed = 3\nout_dir = conf\n",
    )
    .unwrap();
    let o = covden(&["--config", "run.conf", "simulate"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let direct = covden(&[SMALL_SIM, &["--out-dir", "direct"]].concat(), dir.path());
    assert_eq!(direct.status.code(), Some(0));
    assert_eq!(
        read(dir.path().join("conf/report.csv")),
        read(dir.path().join("direct/report.csv"))
    );

    let o = covden(
        &[
            "--config",
            "run.conf",
            "simulate",
            "--m",
            "2",
            "--out-dir",
            "override",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let json: serde_json::Value =
        serde_json::from_str(&read(dir.path().join("override/report.json"))).unwrap();
    assert_eq!(json["m"], 2);
}

fn write_prices(dir: &Path, days: usize) {
    let mut text = String::from("date,AAA,BBB,CCC,GAP\n");
    let start = chrono::NaiveDate::from_ymd_opt(2023, 1, 1).unwrap();
    for (d, date) in start.iter_days().take(days).enumerate() {
        let t = d as f64;
        let gap = if d % 10 == 3 {
            String::new()
        } else {
            format!("{}", 40.0 + (t * 0.3).cos())
        };
        text.push_str(&format!(
            "{date},{},{},{},{gap}\n",
            100.0 * (1.0 + 0.02 * (t * 0.7).sin()),
            50.0 * (1.0 + 0.03 * (t * 1.3).cos()),
            20.0 * (1.0 + 0.01 * (t * 0.4).sin() + 0.001 * t),
        ));
    }
    std::fs::write(dir.join("prices.csv"), text).unwrap();
}

#[test]
fn clean_then_backtest() {
    let dir = tempfile::tempdir().unwrap();
    write_prices(dir.path(), 121);
    let o = covden(
        &[
            "clean",
            "--input",
            "prices.csv",
            "--out-dir",
            "clean",
            "--volatility-quantile",
            "0",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("kept 3 of 4"));
    assert!(read(dir.path().join("clean/returns.csv")).starts_with("date,AAA,BBB,CCC\n"));

    let base = [
        "backtest",
        "--returns",
        "clean/returns.csv",
        "--split-date",
        "2023-02-01",
    ];
    let windows = ["--t-in", "30", "--t-out", "30", "--delta-t", "30"];
    let o = covden(
        &[&base[..], &windows, &["--out-dir", "wf1"]].concat(),
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("strategy,cumulative_return"));
    let o = covden(
        &[&base[..], &windows, &["--out-dir", "wf2"]].concat(),
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    for f in ["metrics.json", "weights.csv", "returns.csv", "wealth.csv"] {
        assert_eq!(
            read(dir.path().join("wf1").join(f)),
            read(dir.path().join("wf2").join(f)),
            "{f}"
        );
    }
    let weights = read(dir.path().join("wf1/weights.csv"));
    assert_eq!(weights.lines().count(), 1 + 3);

    let o = covden(
        &[
            &base[..],
            &windows,
            &[
                "--strategy",
                "buy-and-hold",
                "--symbol",
                "BBB",
                "--out-dir",
                "bh",
            ],
        ]
        .concat(),
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = covden(
        &[&base[..], &windows, &["--strategy", "buy-and-hold"]].concat(),
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let o = covden(
        &[&base[..], &windows, &["--strategy", "momentum"]].concat(),
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_tiny_network_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "train",
        "--block-sizes",
        "4,6",
        "--n",
        "20",
        "--count",
        "12",
        "--blocks",
        "2",
        "--filters",
        "4",
        "--epochs",
        "5",
        "--batch-size",
        "4",
        "--seed",
        "9",
    ];
    let a = covden(
        &[&args[..], &["--out", "a.cdnw", "--loss-curve", "a.csv"]].concat(),
        dir.path(),
    );
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let b = covden(
        &[&args[..], &["--out", "b.cdnw", "--loss-curve", "b.csv"]].concat(),
        dir.path(),
    );
    assert_eq!(b.status.code(), Some(0));
    assert_eq!(
        std::fs::read(dir.path().join("a.cdnw")).unwrap(),
        std::fs::read(dir.path().join("b.cdnw")).unwrap()
    );
    assert_eq!(read(dir.path().join("a.csv")).lines().count(), 1 + 6);
    assert!(covden::denoiser::load_weights(&dir.path().join("a.cdnw")).is_ok());
}
