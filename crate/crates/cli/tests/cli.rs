use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn phasebal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasebal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(out: &Output) -> (String, String) {
    (
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn gen(dir: &Path, template: &str, seed: u64) {
    let out = phasebal(&[
        "gen",
        template,
        "--seed",
        &seed.to_string(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{:?}", text(&out));
}

fn run(scenario: &Path, out_dir: &Path, extra: &[&str]) -> Output {
    let config = scenario.join("scenario.toml");
    let profiles = scenario.join("profiles.csv");
    let mut args = vec![
        "run",
        "--config",
        config.to_str().unwrap(),
        "--profiles",
        profiles.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    phasebal(&args)
}

#[test]
fn gen_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen(&a, "nine-house", 7);
    gen(&b, "nine-house", 7);
    for f in ["scenario.toml", "profiles.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let profiles = fs::read_to_string(a.join("profiles.csv")).unwrap();
    assert!(profiles.starts_with("# phasebal profiles v1\n"));
    assert_eq!(profiles.lines().count(), 2 + 9 * 1440);
}

#[test]
fn unknown_template_lists_the_options() {
    let tmp = TempDir::new().unwrap();
    let out = phasebal(&["gen", "ten-house", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let (_, err) = text(&out);
    for name in ["nine-house", "balanced", "single-phase-load"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn run_writes_outputs_and_reruns_identically() {
    let tmp = TempDir::new().unwrap();
    let scenario = tmp.path().join("s");
    gen(&scenario, "nine-house", 3);
    let first = tmp.path().join("o1");
    let out = run(&scenario, &first, &["--emit-per-household"]);
    assert!(out.status.success(), "{:?}", text(&out));
    for f in ["records.csv", "summary.json", "effective-config.toml", "households.csv"] {
        assert!(first.join(f).exists(), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(first.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["steps"], 1440);
    assert_eq!(summary["clustering_accuracy_min"], 1.0);

    // The effective config alone reproduces the run, whatever seed is passed.
    let replay = tmp.path().join("replay");
    fs::create_dir_all(&replay).unwrap();
    fs::copy(first.join("effective-config.toml"), replay.join("scenario.toml")).unwrap();
    fs::copy(scenario.join("profiles.csv"), replay.join("profiles.csv")).unwrap();
    let second = tmp.path().join("o2");
    let out = run(&replay, &second, &["--seed", "999"]);
    assert!(out.status.success(), "{:?}", text(&out));
    assert_eq!(
        fs::read(first.join("records.csv")).unwrap(),
        fs::read(second.join("records.csv")).unwrap()
    );
}

#[test]
fn verify_passes_on_a_generated_day() {
    let tmp = TempDir::new().unwrap();
    let scenario = tmp.path().join("s");
    gen(&scenario, "nine-house", 5);
    let out = run(&scenario, &tmp.path().join("o"), &["--verify"]);
    assert!(out.status.success(), "{:?}", text(&out));
    assert!(text(&out).0.contains("verify: all steps agree"));
}

#[test]
fn verify_mismatch_exits_with_runtime_code() {
    let tmp = TempDir::new().unwrap();
    let scenario = tmp.path().join("s");
    gen(&scenario, "nine-house", 5);
    // A loose stopping tolerance leaves the consensus far from the centralized values.
    let path = scenario.join("scenario.toml");
    let cfg: String = fs::read_to_string(&path)
        .unwrap()
        .lines()
        .map(|l| if l.starts_with("tol = ") { "tol = 1e-3\n".to_string() } else { format!("{l}\n") })
        .collect();
    assert!(cfg.contains("tol = 1e-3"), "{cfg}");
    fs::write(&path, cfg).unwrap();
    let out = run(&scenario, &tmp.path().join("o"), &["--verify"]);
    assert_eq!(out.status.code(), Some(4), "{:?}", text(&out));
    let (_, err) = text(&out);
    assert!(err.contains("verification failed") && err.contains("off by"), "{err}");
}

#[test]
fn missing_profiles_is_a_data_error_naming_the_path() {
    let tmp = TempDir::new().unwrap();
    let scenario = tmp.path().join("s");
    gen(&scenario, "balanced", 0);
    fs::remove_file(scenario.join("profiles.csv")).unwrap();
    let out = run(&scenario, &tmp.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(text(&out).1.contains("profiles.csv"));
}

#[test]
fn bad_config_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let scenario = tmp.path().join("s");
    gen(&scenario, "balanced", 0);
    let path = scenario.join("scenario.toml");
    let cfg = fs::read_to_string(&path).unwrap().replace("horizon = 1440", "horizon = 0");
    fs::write(&path, cfg).unwrap();
    let out = run(&scenario, &tmp.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(2), "{:?}", text(&out));
}

#[test]
fn report_balanced_and_single_phase() {
    let tmp = TempDir::new().unwrap();
    let balanced = tmp.path().join("b");
    gen(&balanced, "balanced", 0);
    assert!(run(&balanced, &tmp.path().join("bo"), &[]).status.success());
    let out = phasebal(&["report", tmp.path().join("bo/records.csv").to_str().unwrap()]);
    assert!(out.status.success());
    assert!(text(&out).0.contains("max CUF post: 0.00%"), "{}", text(&out).0);

    let single = tmp.path().join("p");
    gen(&single, "single-phase-load", 0);
    assert!(run(&single, &tmp.path().join("po"), &[]).status.success());
    let out = phasebal(&["report", tmp.path().join("po/records.csv").to_str().unwrap()]);
    let (stdout, _) = text(&out);
    assert!(stdout.contains("|I_N| pre: max 13.0435 A"), "{stdout}");

    // Post-balancing current is ~0 while the batteries still have headroom.
    let records = fs::read_to_string(tmp.path().join("po/records.csv")).unwrap();
    let mut rows = records.lines().skip(1);
    let header: Vec<&str> = rows.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let first: Vec<&str> = rows.next().unwrap().split(',').collect();
    assert!(first[col("in_post")].parse::<f64>().unwrap() < 1e-6);
}

#[test]
fn report_rejects_empty_records() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("records.csv");
    fs::write(&path, "").unwrap();
    let out = phasebal(&["report", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let out = phasebal(&["report", tmp.path().join("absent.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn no_balancing_leaves_batteries_idle() {
    let tmp = TempDir::new().unwrap();
    let scenario = tmp.path().join("s");
    gen(&scenario, "single-phase-load", 0);
    let out = run(&scenario, &tmp.path().join("o"), &["--no-balancing"]);
    assert!(out.status.success());
    let (stdout, _) = text(&out);
    assert!(stdout.contains("battery throughput: 0.000 kWh"), "{stdout}");
    assert!(stdout.contains("|I_N| post: max 13.0435 A"), "{stdout}");
}
