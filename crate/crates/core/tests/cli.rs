use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_defi-compose"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures/swap_route")
        .join(name)
}

fn run_all(out: &Path, extra: &[&str]) -> Output {
    let mut c = bin();
    c.arg("run")
        .arg("--traces")
        .arg(fixture("traces.csv"))
        .arg("--creations")
        .arg(fixture("creations.csv"))
        .arg("--seeds")
        .arg(fixture("seeds.csv"))
        .arg("--erc20")
        .arg(fixture("erc20.txt"))
        .arg("--out-dir")
        .arg(out)
        .args(extra);
    c.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_then_rerun_skips_current_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let first = run_all(tmp.path(), &[]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(stdout(&first).matches(": done").count(), 7);

    let second = run_all(tmp.path(), &[]);
    assert!(second.status.success());
    assert_eq!(stdout(&second).matches(": up to date").count(), 7);

    // a changed parameter re-runs only the stages it feeds
    let third = run_all(tmp.path(), &["--bootstrap", "150"]);
    let text = stdout(&third);
    assert!(text.contains("topology: done"), "{text}");
    assert_eq!(text.matches(": done").count(), 1, "{text}");

    let forced = run_all(tmp.path(), &["--force"]);
    assert_eq!(stdout(&forced).matches(": done").count(), 7);

    let counts = std::fs::read_to_string(tmp.path().join("report/block_counts.csv")).unwrap();
    assert_eq!(counts.lines().count(), 4);
    let treemap = std::fs::read_to_string(tmp.path().join("report/treemap.csv")).unwrap();
    assert!(treemap.contains("1inch,sushiswap+uniswap,1,1.0000"), "{treemap}");
}

#[test]
fn explain_block_and_unknown_hash() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_all(tmp.path(), &[]).status.success());
    let store = tmp.path().join("extract-blocks/block_store.jsonl");
    let hash = "23fc3aceb58940b50741fae3d2a408df831f480dd934e29c5ea142ab2f512825";
    let o = bin()
        .args(["explain-block", hash, "--store"])
        .arg(&store)
        .output()
        .unwrap();
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("root protocol: 1inch"), "{text}");
    assert!(text.contains("child hashes: 2"), "{text}");

    let o = bin()
        .args(["explain-block", &"ab".repeat(32), "--store"])
        .arg(&store)
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown"));
}

#[test]
fn empty_trace_file_yields_empty_dumps() {
    let tmp = tempfile::tempdir().unwrap();
    let header = std::fs::read_to_string(fixture("traces.csv")).unwrap();
    let empty = tmp.path().join("empty.csv");
    std::fs::write(&empty, header.lines().next().unwrap()).unwrap();
    let o = bin()
        .arg("run")
        .arg("--traces")
        .arg(&empty)
        .arg("--creations")
        .arg(fixture("creations.csv"))
        .arg("--seeds")
        .arg(fixture("seeds.csv"))
        .arg("--out-dir")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let blocks = std::fs::read_to_string(tmp.path().join("out/extract-blocks/block_store.jsonl")).unwrap();
    assert!(blocks.is_empty());
    let table = std::fs::read_to_string(tmp.path().join("out/communities/communities.csv")).unwrap();
    assert!(table.lines().skip(1).all(|l| l.contains("unavailable")));
}

#[test]
fn stage_without_upstream_fails_clearly() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin().arg("report").arg("--out-dir").arg(tmp.path()).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing upstream artifact"));
}

#[test]
fn config_file_paths_resolve_relative_to_it() {
    let tmp = tempfile::tempdir().unwrap();
    for f in ["traces.csv", "creations.csv", "seeds.csv", "erc20.txt"] {
        std::fs::copy(fixture(f), tmp.path().join(f)).unwrap();
    }
    let cfg = tmp.path().join("run.toml");
    std::fs::write(
        &cfg,
        r#"traces = "traces.csv"
creations = "creations.csv"
seeds = "seeds.csv"
erc20 = "erc20.txt"
out_dir = "out"
stages = ["ingest", "extend-seeds", "extract-blocks"]
algorithms = ["leiden"]
"#,
    )
    .unwrap();
    let o = bin()
        .arg("--threads")
        .arg("2")
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("out/extract-blocks/manifest.json").exists());
    assert!(!tmp.path().join("out/topology").exists());
}

#[test]
fn unknown_algorithm_is_rejected() {
    let o = bin()
        .args(["communities", "--algorithms", "spectral"])
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("spectral"));
}
