use std::fs;
use std::path::Path;

use owc_noma::channel::Cir;
use owc_noma::cli::{cli_main, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME};
use owc_noma::experiment::ScenarioConfig;
use owc_noma::io::{load_config, parse_config, read_manifest, ConfigFile, FIG3_HEADER, MANIFEST, TRIALS_HEADER};
use owc_noma::Error;

const SMALL: &str = "\
element_side_first = 0.5
element_side_second = 1.0
trials = 3
users = [2, 3]
alpha = [0.3, 0.6]
n_symbols = 2000
seed = 17
";

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("scenario.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["owc-noma"];
    argv.extend_from_slice(args);
    cli_main(argv)
}

#[test]
fn run_writes_all_outputs_and_manifest_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    assert_eq!(
        run(&["--config", &cfg, "--out", out.to_str().unwrap(), "--workers", "2"]),
        EXIT_OK
    );

    let trials = fs::read_to_string(out.join("trials.csv")).unwrap();
    let mut lines = trials.lines();
    assert_eq!(lines.next().unwrap(), TRIALS_HEADER.join(","));
    // 2 alphas × 3 trials × (2 + 3) users
    assert_eq!(lines.count(), 2 * 3 * 5);
    let fig3 = fs::read_to_string(out.join("fig3.csv")).unwrap();
    assert_eq!(fig3.lines().next().unwrap(), FIG3_HEADER.join(","));
    assert_eq!(fig3.lines().count(), 1 + 4);
    assert!(fig3.lines().nth(1).unwrap().starts_with("3e-1,2,"));

    let manifest = read_manifest(out.join(MANIFEST)).unwrap();
    let expected = parse_config(SMALL).unwrap();
    assert_eq!(manifest.scenario().unwrap(), expected);
    assert_eq!(manifest.master_seed, 17);
    assert_eq!(manifest.workers, 2);
    assert_eq!(load_config(out.join("config.toml")).unwrap(), expected);
    for f in &manifest.files {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert!(fs::read_dir(&out)
        .unwrap()
        .all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".partial")));

    // re-running from the snapshot reproduces the results
    let again = dir.path().join("again");
    let snap = out.join("config.toml");
    assert_eq!(
        run(&["--config", snap.to_str().unwrap(), "--out", again.to_str().unwrap()]),
        EXIT_OK
    );
    for f in ["trials.csv", "fig3.csv", "fig4.csv"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(
        run(&["--config", &cfg, "--out", a.to_str().unwrap(), "--workers", "1"]),
        EXIT_OK
    );
    assert_eq!(
        run(&["--config", &cfg, "--out", b.to_str().unwrap(), "--workers", "3"]),
        EXIT_OK
    );
    for f in ["trials.csv", "fig3.csv", "fig4.csv", "config.toml"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let code = run(&[
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "5",
        "--trials",
        "1",
        "--alphas",
        "0.5",
        "--users",
        "4",
        "--reflections",
        "0",
    ]);
    assert_eq!(code, EXIT_OK);
    let c = read_manifest(out.join(MANIFEST)).unwrap().scenario().unwrap();
    assert_eq!(c.master_seed, 5);
    assert_eq!(c.trials, 1);
    assert_eq!(c.alphas, vec![0.5]);
    assert_eq!(c.user_counts, vec![4]);
    assert_eq!(c.channel.reflections, 0);
}

#[test]
fn impulse_responses_are_dumped() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let code = run(&[
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--users",
        "2",
        "--trials",
        "1",
        "--dump-cir",
    ]);
    assert_eq!(code, EXIT_OK);
    let manifest = read_manifest(out.join(MANIFEST)).unwrap();
    let dumps: Vec<_> = manifest.files.iter().filter(|f| f.starts_with("cir/")).collect();
    // 8 APs × 2 users
    assert_eq!(dumps.len(), 16);
    let cir = Cir::parse_dump(&fs::read_to_string(out.join("cir/n2_t0_ap0_user0.txt")).unwrap()).unwrap();
    assert!(cir.dc_gain().value() >= 0.0);
    assert_eq!(cir.bin_duration(), 1e-11);
}

#[test]
fn bad_input_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    assert_eq!(run(&["--no-such-flag"]), EXIT_CONFIG);
    assert_eq!(run(&["--out", out, "--reflections", "3"]), EXIT_CONFIG);
    assert_eq!(run(&["--out", out, "--alphas", "0.0"]), EXIT_CONFIG);
    assert_eq!(run(&["--out", out, "--workers", "0"]), EXIT_CONFIG);
    let bad = write_config(dir.path(), "reflectivity_walls = 1.5\n");
    assert_eq!(run(&["--config", &bad, "--out", out]), EXIT_CONFIG);
    assert_eq!(
        run(&["--config", "/nonexistent/scenario.toml", "--out", out]),
        EXIT_CONFIG
    );
    assert!(!Path::new(out).exists());
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let code = run(&[
        "--config",
        &cfg,
        "--out",
        blocker.to_str().unwrap(),
        "--users",
        "2",
        "--trials",
        "1",
    ]);
    assert_eq!(code, EXIT_RUNTIME);
}

#[test]
fn config_errors_report_key_and_line() {
    let err = parse_config("# scenario\nalpha = [0.4]\nreflectivity_walls = 1.5\n").unwrap_err();
    match err {
        Error::Config { key, line, .. } => {
            assert_eq!(key.as_deref(), Some("reflectivity_walls"));
            assert_eq!(line, Some(3));
        }
        other => panic!("{other:?}"),
    }
    let err = parse_config("alpha = [0.4, 1.5]\n").unwrap_err();
    assert!(matches!(err, Error::Config { line: Some(1), .. }), "{err:?}");
}

#[test]
fn snapshot_round_trips_defaults() {
    let c = ScenarioConfig::default();
    let text = ConfigFile::snapshot(&c).unwrap().to_toml().unwrap();
    assert_eq!(parse_config(&text).unwrap(), c);
    assert_eq!(parse_config("").unwrap(), c);
}
