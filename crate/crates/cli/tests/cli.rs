//! End-to-end tests of the `fvpad` binary: exit codes, output formats, and a
//! full synth -> learn -> train -> score -> evaluate pipeline on a tiny
//! corpus.

use std::path::Path;
use std::process::{Command, Output};

fn fvpad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fvpad"))
        .args(args)
        .output()
        .expect("failed to spawn fvpad")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path_str(p: &Path) -> String {
    p.to_str().unwrap().to_owned()
}

#[test]
fn no_arguments_is_a_usage_error() {
    let out = fvpad(&[]);
    assert_eq!(out.status.code(), Some(2));
    let help = String::from_utf8_lossy(&out.stderr);
    assert!(help.contains("Usage"), "no usage text: {help}");
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = fvpad(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_is_a_runtime_error() {
    let out = fvpad(&[
        "score",
        "--model",
        "/no/such.bundle",
        "--image",
        "/no/such.png",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn pipeline_from_synth_to_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let bank = dir.path().join("bank.bsif1");
    let model = dir.path().join("model.bundle");

    let out = fvpad(&[
        "synth",
        "--out",
        &path_str(&data),
        "--seed",
        "7",
        "--per-class",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(0), "synth: {out:?}");
    let manifest = data.join("manifest.txt");
    assert_eq!(stdout(&out).trim(), path_str(&manifest));
    assert!(manifest.exists());

    let out = fvpad(&[
        "learn-filters",
        "--manifest",
        &path_str(&manifest),
        "--size",
        "5",
        "--filters",
        "5",
        "--seed",
        "3",
        "--patches",
        "1000",
        "--out",
        &path_str(&bank),
    ]);
    assert_eq!(out.status.code(), Some(0), "learn-filters: {out:?}");
    assert!(bank.exists());

    let config = dir.path().join("exp.cfg");
    std::fs::write(
        &config,
        format!(
            "manifest = {}\nbank = {}\nk = 2\nd = 8\nstride = 12\nseed = 5\ngmm_sample_cap = 2000\n",
            manifest.display(),
            bank.display()
        ),
    )
    .unwrap();

    let out = fvpad(&[
        "train",
        "--config",
        &path_str(&config),
        "--out",
        &path_str(&model),
    ]);
    assert_eq!(out.status.code(), Some(0), "train: {out:?}");
    assert!(model.exists());

    // Score output contract: one line, `<path> <score>`.
    let image = data.join("synth_a/test/bonafide_000.png");
    let out = fvpad(&[
        "score",
        "--model",
        &path_str(&model),
        "--image",
        &path_str(&image),
    ]);
    assert_eq!(out.status.code(), Some(0), "score: {out:?}");
    let line = stdout(&out);
    let mut parts = line.split_whitespace();
    assert_eq!(parts.next(), Some(path_str(&image).as_str()));
    parts
        .next()
        .unwrap()
        .parse::<f64>()
        .expect("score not a number");
    assert_eq!(parts.next(), None);
    assert_eq!(line.lines().count(), 1);

    // Descriptor extraction writes a dump.
    let dump = dir.path().join("desc.bin");
    let out = fvpad(&[
        "extract",
        "--bank",
        &path_str(&bank),
        "--image",
        &path_str(&image),
        "--stride",
        "12",
        "--out",
        &path_str(&dump),
    ]);
    assert_eq!(out.status.code(), Some(0), "extract: {out:?}");
    assert!(dump.metadata().unwrap().len() > 0);

    // Evaluation writes a report; a second run is byte-identical.
    let results_a = dir.path().join("results_a");
    let out = fvpad(&[
        "evaluate",
        "--config",
        &path_str(&config),
        "--out-dir",
        &path_str(&results_a),
    ]);
    assert_eq!(out.status.code(), Some(0), "evaluate: {out:?}");
    assert!(stdout(&out).contains("[split known_attack]"));
    let report_a = std::fs::read(results_a.join("report.txt")).unwrap();
    let scores_a = std::fs::read(results_a.join("scores_known_attack.csv")).unwrap();
    assert!(results_a.join("det_known_attack.csv").exists());

    let results_b = dir.path().join("results_b");
    let out = fvpad(&[
        "evaluate",
        "--config",
        &path_str(&config),
        "--out-dir",
        &path_str(&results_b),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        std::fs::read(results_b.join("report.txt")).unwrap(),
        report_a
    );
    assert_eq!(
        std::fs::read(results_b.join("scores_known_attack.csv")).unwrap(),
        scores_a
    );

    // Protocol override from the command line.
    let results_loo = dir.path().join("results_loo");
    let out = fvpad(&[
        "evaluate",
        "--config",
        &path_str(&config),
        "--protocol",
        "loo",
        "--out-dir",
        &path_str(&results_loo),
    ]);
    assert_eq!(out.status.code(), Some(0), "evaluate loo: {out:?}");
    let text = stdout(&out);
    for split in ["loo_moire", "loo_print", "loo_replay"] {
        assert!(
            text.contains(&format!("[split {split}]")),
            "missing {split}: {text}"
        );
        assert!(results_loo.join(format!("scores_{split}.csv")).exists());
    }

    // Timing prints one line per image plus a summary.
    let other = data.join("synth_b/test/replay_001.png");
    let out = fvpad(&[
        "time",
        "--model",
        &path_str(&model),
        &path_str(&image),
        &path_str(&other),
    ]);
    assert_eq!(out.status.code(), Some(0), "time: {out:?}");
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 3);
    assert!(text.contains("small"));
    assert!(text.lines().last().unwrap().starts_with("images=2"));
}
