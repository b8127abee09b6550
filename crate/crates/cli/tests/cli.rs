use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use stacklstm::data::read_csv_file;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stacklstm"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn stacklstm")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, name: &str, extra: &[&str]) -> std::path::PathBuf {
    let out = dir.join(name);
    let mut args = vec!["synth", "--n", "40", "--t-min", "6", "--t-max", "10", "--seed", "7", "--out", p(&out)];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

const TINY: [&str; 8] = ["--hidden", "6", "--epochs", "3", "--batch", "8", "--k", "2"];

fn train(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--data", p(data), "--out", p(out)];
    args.extend_from_slice(&TINY);
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn synth_is_byte_identical_and_reingests() {
    let dir = TempDir::new().unwrap();
    let a = synth(dir.path(), "a.csv", &[]);
    let b = synth(dir.path(), "b.csv", &[]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let samples = read_csv_file(&a, None).unwrap();
    assert_eq!(samples.len(), 40);
    assert!(samples.iter().all(|s| s.dim() == 22 && s.label.is_some()));
}

#[test]
fn synth_rejects_too_few_sequences() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.csv");
    let o = run(&["synth", "--n", "3", "--out", p(&out)]);
    assert_ne!(code(&o), 0);
    assert!(stderr(&o).contains("class_count"));
    assert!(!out.exists());
}

#[test]
fn train_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path(), "d.csv", &[]);
    let (r1, r2) = (dir.path().join("r1"), dir.path().join("r2"));
    for r in [&r1, &r2] {
        let o = train(&data, r, &[]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["model.txt", "history_stage1.csv", "history_stage2.csv", "manifest.toml"] {
        assert_eq!(fs::read(r1.join(f)).unwrap(), fs::read(r2.join(f)).unwrap(), "{f}");
    }
    let manifest = fs::read_to_string(r1.join("manifest.toml")).unwrap();
    assert!(manifest.contains("dataset-sha256 = "));
    assert!(manifest.contains("seed = 0"));
    assert_eq!(fs::read_to_string(r1.join("history_stage1.csv")).unwrap().lines().count(), 4);
}

#[test]
fn unlabeled_data_with_kfold_fails_before_training() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path(), "d.csv", &[]);
    let stripped: String = fs::read_to_string(&data)
        .unwrap()
        .lines()
        .map(|l| format!("{}\n", l.rsplit_once(',').unwrap().0))
        .collect();
    let unlabeled = dir.path().join("u.csv");
    fs::write(&unlabeled, stripped).unwrap();
    let out = dir.path().join("run");
    let o = train(&unlabeled, &out, &[]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("no terrain label"));
    assert!(!out.exists());
}

#[test]
fn failed_write_removes_partial_outputs() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path(), "d.csv", &[]);
    let out = dir.path().join("run");
    fs::create_dir_all(out.join("manifest.toml")).unwrap();
    let o = train(&data, &out, &[]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(!out.join("model.txt").exists());
    assert!(!out.join("history_stage1.csv").exists());
    assert!(!out.join("history_stage2.csv").exists());
}

#[test]
fn config_file_and_flag_overrides() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path(), "d.csv", &[]);
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "seed = 11\nlambda = 0.001\ncascade = \"hidden\"\ninput-relu = false\n").unwrap();
    let out = dir.path().join("run");
    let o = train(&data, &out, &["--config", p(&cfg), "--seed", "12"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(m.contains("seed = 12"), "{m}");
    assert!(m.contains("lambda = 0.001"));
    assert!(m.contains("cascade = \"hidden\""));
    assert!(m.contains("input-relu = false"));

    fs::write(&cfg, "sede = 11\n").unwrap();
    let o = train(&data, &dir.path().join("run2"), &["--config", p(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("sede"));
}

#[test]
fn eval_is_deterministic_and_checks_dimensions() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path(), "d.csv", &[]);
    let out = dir.path().join("run");
    assert_eq!(code(&train(&data, &out, &[])), 0);
    let model = out.join("model.txt");
    let cm = dir.path().join("cm.csv");
    let e1 = run(&["eval", "--model", p(&model), "--data", p(&data), "--out", p(&cm)]);
    let e2 = run(&["eval", "--model", p(&model), "--data", p(&data)]);
    assert_eq!(code(&e1), 0, "{}", stderr(&e1));
    assert_eq!(e1.stdout, e2.stdout);
    let stdout = String::from_utf8(e1.stdout).unwrap();
    assert!(stdout.contains("accuracy: "));
    let csv = fs::read_to_string(&cm).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("true\\predicted,concrete,"));

    let narrow = synth(dir.path(), "n.csv", &["--dim", "5"]);
    let o = run(&["eval", "--model", p(&model), "--data", p(&narrow)]);
    assert_ne!(code(&o), 0);
    let msg = stderr(&o);
    assert!(msg.contains('5') && msg.contains("22"), "{msg}");
}

#[test]
fn gradcheck_passes_and_catches_corruption() {
    let o = run(&["gradcheck"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("PASS"));
    assert!(out.contains("lambda=0 "));
    let o = run(&["gradcheck", "--corrupt"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&["train", "--bogus"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["train"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn header_map_runs_train_and_eval_end_to_end() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path(), "d.csv", &[]);
    let text = fs::read_to_string(&data).unwrap();
    let (header, body) = text.split_once('\n').unwrap();
    let renamed: Vec<String> = header
        .split(',')
        .map(|h| match h {
            "seq_id" => "trial".to_string(),
            "label" => "terrain".to_string(),
            "t" => "t".to_string(),
            other => format!("sensor_{other}"),
        })
        .collect();
    // columns shuffled: move the first force channel to the end
    let mut rows: Vec<Vec<&str>> = std::iter::once(header).chain(body.lines()).map(|l| l.split(',').collect()).collect();
    let mut names: Vec<&str> = renamed.iter().map(String::as_str).collect();
    let moved = names.remove(2);
    names.push(moved);
    for r in rows.iter_mut() {
        let v = r.remove(2);
        r.push(v);
    }
    rows[0] = names;
    let qcat = dir.path().join("qcat.csv");
    fs::write(&qcat, rows.iter().map(|r| r.join(",") + "\n").collect::<String>()).unwrap();
    let map = dir.path().join("map.txt");
    let mut pairs = vec!["seq_id = trial".to_string(), "label = terrain".to_string()];
    pairs.extend(stacklstm::data::CANONICAL_FEATURES.iter().map(|c| format!("{c} = sensor_{c}")));
    fs::write(&map, pairs.join("\n")).unwrap();

    let plain = run(&["eval", "--model", "nope", "--data", p(&qcat)]);
    assert_ne!(code(&plain), 0);
    let out = dir.path().join("run");
    let o = train(&qcat, &out, &["--header-map", p(&map)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let e = run(&["eval", "--model", p(&out.join("model.txt")), "--data", p(&qcat), "--header-map", p(&map)]);
    assert_eq!(code(&e), 0, "{}", stderr(&e));
    let stdout = String::from_utf8(e.stdout).unwrap();
    assert!(stdout.contains("accuracy: ") && stdout.contains("sandy"));
    let reference = run(&["eval", "--model", p(&out.join("model.txt")), "--data", p(&data)]);
    assert_eq!(reference.stdout, stdout.as_bytes());
}
