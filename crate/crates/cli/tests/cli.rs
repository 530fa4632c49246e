use std::path::Path;
use std::process::{Command, Output};

fn phishlayer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phishlayer"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn manifest_seed(dir: &Path) -> u64 {
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    m["seed"].as_u64().unwrap()
}

fn spam_csv(path: &Path) {
    let mut rows = String::from("v1,v2\n");
    let spam = [
        "URGENT your account has been suspended verify your password now",
        "Security alert confirm your login details immediately",
        "Your bank card has been locked enter your card number and pin",
        "Final notice your mailbox is full sign in to restore access",
    ];
    let ham = [
        "are we still on for lunch tomorrow",
        "the library is open until eight",
        "see you at the station at six",
        "thanks for dinner last night",
        "the reading group meets on monday",
        "can you pick up some milk",
    ];
    for i in 0..60 {
        if i % 3 == 0 {
            rows += &format!("spam,{}\n", spam[i % spam.len()]);
        } else {
            rows += &format!("ham,{}\n", ham[i % ham.len()]);
        }
    }
    std::fs::write(path, rows).unwrap();
}

#[test]
fn gen_fixtures_and_config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# fixtures\nseed = 7\n").unwrap();

    let a = dir.path().join("a");
    let out = phishlayer(&["--config", p(&cfg), "gen-fixtures", "--out", p(&a)]);
    assert_eq!(code(&out), 0, "{out:?}");
    assert_eq!(manifest_seed(&a), 7);
    assert_eq!(stdout(&out).lines().count(), 6);

    let b = dir.path().join("b");
    assert_eq!(
        code(&phishlayer(&[
            "--config",
            p(&cfg),
            "gen-fixtures",
            "--out",
            p(&b),
            "--seed",
            "8"
        ])),
        0
    );
    assert_eq!(manifest_seed(&b), 8);
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(
        code(&phishlayer(&[
            "--config",
            p(&cfg),
            "gen-fixtures",
            "--out",
            p(dir.path())
        ])),
        2
    );
    std::fs::write(&cfg, "trees = many\n").unwrap();
    assert_eq!(
        code(&phishlayer(&[
            "--config",
            p(&cfg),
            "depth-study",
            "--synthetic"
        ])),
        2
    );
    assert_eq!(
        code(&phishlayer(&[
            "--config",
            p(&dir.path().join("absent.cfg")),
            "gen-fixtures",
            "--out",
            "x"
        ])),
        2
    );
    assert_eq!(
        code(&phishlayer(&[
            "train-url-model",
            "--out",
            p(&dir.path().join("f.json"))
        ])),
        2
    );
    assert_eq!(
        code(&phishlayer(&[
            "depth-study",
            "--synthetic",
            "--grid",
            "30-0"
        ])),
        2
    );
    assert_eq!(code(&phishlayer(&["scan", "http://example.com/"])), 2);
    assert_eq!(code(&phishlayer(&["no-such-command"])), 2);
}

#[test]
fn depth_study_and_selection_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = phishlayer(&[
        "depth-study",
        "--synthetic",
        "--trees",
        "5",
        "--grid",
        "5:0,none:1",
        "--json",
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    let rows: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);
    assert_eq!(rows[0]["max_depth"], 5);
    assert!(rows[1]["max_depth"].is_null());

    let sel = dir.path().join("sel.json");
    let out = phishlayer(&[
        "select-features",
        "--synthetic",
        "--k",
        "5",
        "--pool",
        "live-only",
        "--out",
        p(&sel),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    assert_eq!(stdout(&out).lines().count(), 5);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&sel).unwrap()).unwrap();
    assert_eq!(json["k"], 5);
    assert_eq!(json["indices"].as_array().unwrap().len(), 5);
}

#[test]
fn train_scan_and_failing_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let forest = dir.path().join("models/forest.json");
    let lstm = dir.path().join("models/text.json");
    let csv = dir.path().join("spam.csv");
    spam_csv(&csv);

    let out = phishlayer(&[
        "train-url-model",
        "--synthetic",
        "--trees",
        "5",
        "--out",
        p(&forest),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    let out = phishlayer(&[
        "train-text-model",
        "--text-dataset",
        p(&csv),
        "--epochs",
        "2",
        "--d-embed",
        "4",
        "--d-hidden",
        "4",
        "--out",
        p(&lstm),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    assert_eq!(stdout(&out).lines().count(), 2);
    assert!(dir.path().join("models/text.vocab.json").is_file());

    let out = phishlayer(&[
        "scan",
        "--forest",
        p(&forest),
        "--lstm",
        p(&lstm),
        "--json",
        "--timeout-ms",
        "500",
        "http://127.0.0.1:9/x",
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    let verdict: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert!(verdict["layer4"].is_null());
    assert!(verdict["errors"][0]
        .as_str()
        .unwrap()
        .contains("layer 1 only"));

    // A threshold no probability can reach hides the text-only page.
    let report = dir.path().join("report.json");
    let fixtures = dir.path().join("fx");
    let out = phishlayer(&[
        "evaluate",
        "--forest",
        p(&forest),
        "--lstm",
        p(&lstm),
        "--fixtures",
        p(&fixtures),
        "--threshold",
        "1.0",
        "--report",
        p(&report),
    ]);
    assert_eq!(code(&out), 1, "{out:?}");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["passed"], false);
    assert_eq!(json["sites"].as_array().unwrap().len(), 6);
    assert_eq!(json["models"]["forest_sha256"].as_str().unwrap().len(), 64);
    assert!(fixtures.join("manifest.json").is_file());
}
