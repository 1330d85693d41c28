use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proker::featurestore::{save_featureset, save_text_classifier};
use proker::harness::{gaussian_task, read_report, GaussianSpec};
use tempfile::TempDir;

fn proker(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_proker"))
        .args(args)
        .output()
        .expect("spawn proker")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    /// Gaussian task with `shots` per class written as support/query/val/text.
    fn new(shots: usize) -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let task = gaussian_task(&GaussianSpec::default(), shots, 2, 3).unwrap();
        save_featureset(&task.support, dir.path().join("support.fsf")).unwrap();
        save_featureset(&task.query, dir.path().join("query.fsf")).unwrap();
        save_featureset(task.validation.as_ref().unwrap(), dir.path().join("val.fsf")).unwrap();
        save_text_classifier(&task.text, dir.path().join("text.fsf")).unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn manifest(&self) -> PathBuf {
        let m = self.path("tasks.json");
        std::fs::write(
            &m,
            r#"{"tasks": [
                {"name": "a", "support": "support.fsf", "query": "query.fsf",
                 "validation": "val.fsf", "text": "text.fsf"},
                {"name": "b", "support": "support.fsf", "query": "query.fsf",
                 "validation": "val.fsf", "text": "text.fsf"}
            ]}"#,
        )
        .unwrap();
        m
    }

    fn eval(&self, extra: &[&str]) -> Output {
        let (sp, q, t) = (self.path("support.fsf"), self.path("query.fsf"), self.path("text.fsf"));
        let mut args = vec!["eval", "--support", s(&sp), "--query", s(&q), "--text", s(&t)];
        args.extend_from_slice(extra);
        proker(&args)
    }
}

#[test]
fn eval_zeroshot_writes_one_row() {
    let f = Fixture::new(4);
    let out = f.path("eval.csv");
    let o = f.eval(&["--method", "zeroshot", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = read_report(&out).unwrap();
    assert_eq!(report.len(), 1);
    assert_eq!(report.rows[0].method, "zeroshot");
    assert_eq!(report.rows[0].shots, 4);
    assert!((0.0..=1.0).contains(&report.rows[0].score));
}

#[test]
fn eval_json_report_for_proker() {
    let f = Fixture::new(4);
    let out = f.path("eval.json");
    let o = f.eval(&["--method", "proker", "--lambda", "0.5", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = read_report(&out).unwrap();
    assert_eq!(report.rows[0].lambda, Some(0.5));
    assert!(report.rows[0].beta.is_some());
}

#[test]
fn input_errors_exit_2() {
    let f = Fixture::new(2);
    let o = proker(&["eval", "--method", "tip"]);
    assert_eq!(code(&o), 2);

    let o = f.eval(&["--method", "proker", "--lambda", "0", "--out", s(&f.path("x.csv"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).starts_with("error[InvalidConfig]"), "{}", stderr(&o));
    assert!(stderr(&o).contains("lambda"), "{}", stderr(&o));

    let o = f.eval(&["--method", "tip", "--bogus"]);
    assert_eq!(code(&o), 2);

    let o = f.eval(&["--method", "nw", "--save-model", s(&f.path("m.pkm"))]);
    assert_eq!(code(&o), 2);

    let missing = f.path("nope.fsf");
    let o = proker(&["inspect", s(&missing)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn transfer_without_anchor_is_rejected() {
    let f = Fixture::new(2);
    let grid = f.path("grid.json");
    std::fs::write(&grid, r#"{"methods": ["nw"], "lambdas": [1.0], "betas": {"values": [4.0]}}"#).unwrap();
    let m = f.manifest();
    let o = proker(&[
        "sweep", "--grid", s(&grid), "--tasks", s(&m), "--protocol", "transfer",
        "--out", s(&f.path("s.csv")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("MissingAnchor"), "{}", stderr(&o));

    let o = proker(&[
        "sweep", "--grid", s(&grid), "--tasks", s(&m), "--protocol", "transfer",
        "--anchor", "zzz", "--out", s(&f.path("s.csv")),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn single_config_grid_is_selected() {
    let f = Fixture::new(4);
    let grid = f.path("grid.json");
    std::fs::write(
        &grid,
        r#"{"methods": ["proker"], "lambdas": [0.3], "betas": {"values": [5.0]}}"#,
    )
    .unwrap();
    let m = f.manifest();
    let out = f.path("sweep.csv");
    let o = proker(&["sweep", "--grid", s(&grid), "--tasks", s(&m), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let sel: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(f.path("selected.json")).unwrap()).unwrap();
    let sel = sel.as_array().unwrap();
    assert_eq!(sel.len(), 2);
    for entry in sel {
        assert_eq!(entry["candidate"]["method"], "proker");
        assert_eq!(entry["candidate"]["lambda"], 0.3);
        assert_eq!(entry["candidate"]["kernel"]["beta"], 5.0);
    }
    assert_eq!(read_report(&out).unwrap().len(), 2);
}

#[test]
fn sweep_reruns_are_identical() {
    let f = Fixture::new(2);
    let grid = f.path("grid.json");
    std::fs::write(&grid, r#"{"methods": ["tip", "llr"], "lambdas": [0.1, 1.0], "alphas": [1.0, 2.0]}"#)
        .unwrap();
    let m = f.manifest();
    let run = |name: &str| {
        let out = f.path(name);
        let o = proker(&[
            "sweep", "--grid", s(&grid), "--tasks", s(&m), "--protocol", "transfer",
            "--anchor", "a", "--out", s(&out), "--selected", s(&f.path("sel.json")),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        read_report(&out).unwrap()
    };
    let (a, b) = (run("one.csv"), run("two.csv"));
    assert_eq!(a.len(), 4);
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!((&x.method, x.score, x.lambda, x.alpha), (&y.method, y.score, y.lambda, y.alpha));
    }
}

#[test]
fn synth_rows_and_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("synth");
    let o = proker(&["synth", "--seeds", "2", "--out-dir", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read_report(out.join("synth.csv")).unwrap().len(), 6);
    for f in ["support.fsf", "support_targets.fsf", "grid.fsf", "text.fsf"] {
        assert!(out.join("seed1").join(f).exists(), "{f}");
    }

    let o = proker(&["synth", "--seeds", "0", "--out-dir", s(&out)]);
    assert_eq!(code(&o), 2);
    let o = proker(&["synth", "--methods", "nw,llr", "--assert-ordering", "--out-dir", s(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn synth_ordering_assertion_holds_on_default_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let o = proker(&["synth", "--assert-ordering", "--out-dir", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("ProKeR<LLR"));
}

#[test]
fn compress_parity_and_size() {
    let f = Fixture::new(16);
    let model = f.path("model.pkm");
    let o = f.eval(&[
        "--method", "proker", "--lambda", "0.5", "--beta", "4.0",
        "--out", s(&f.path("e.csv")), "--save-model", s(&model),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let small = f.path("small.pkm");
    let o = proker(&[
        "compress", "--model", s(&model), "--seed", "7", "--out", s(&small),
        "--query", s(&f.path("query.fsf")),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let diff: f64 = text
        .lines()
        .find_map(|l| l.split("max |diff| = ").nth(1))
        .expect("parity line")
        .trim()
        .parse()
        .unwrap();
    assert!(diff < 1e-9, "parity {diff}");
    let (before, after) = (
        std::fs::metadata(&model).unwrap().len(),
        std::fs::metadata(&small).unwrap().len(),
    );
    assert!(after < before, "{after} >= {before}");

    let o = proker(&["inspect", s(&small)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("prototype"));

    let o = proker(&["compress", "--model", s(&model), "--beta", "2.0", "--out", s(&small)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("BetaMismatch"), "{}", stderr(&o));

    let o = proker(&["compress", "--model", s(&small), "--out", s(&f.path("again.pkm"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn inspect_fsf_and_bad_magic() {
    let f = Fixture::new(2);
    let o = proker(&["inspect", s(&f.path("support.fsf"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("rows:       20"), "{out}");
    assert!(out.contains("dim:        32"), "{out}");

    let o = proker(&["inspect", s(&f.path("text.fsf"))]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("col norms"));

    let junk = f.path("junk.bin");
    std::fs::write(&junk, b"NOPE and then some").unwrap();
    let o = proker(&["inspect", s(&junk)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).starts_with("error[BadMagic]"), "{}", stderr(&o));
}

#[test]
fn thread_count_env_is_validated() {
    let f = Fixture::new(2);
    let o = Command::new(env!("CARGO_BIN_EXE_proker"))
        .args(["inspect", s(&f.path("support.fsf"))])
        .env("PROKER_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
