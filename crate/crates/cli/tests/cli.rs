//! End-to-end tests of the ppchain binary: exit codes, determinism, file
//! formats and the built-in presets.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ppchain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppchain"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_csv_values(path: &Path) -> Vec<(f64, f64)> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|line| {
            let mut it = line.split(',');
            let r: f64 = it.next().unwrap().parse().unwrap();
            let v: f64 = it.next().unwrap().parse().unwrap();
            (r, v)
        })
        .collect()
}

const SMALL_CHAIN: &str = r#"{
  "dim": 2,
  "window": { "lower": [0.0, 0.0], "upper": [1.0, 1.0] },
  "model": {
    "count": { "kind": "poisson", "mean": 0.5 },
    "displacement": { "kind": "isotropic_gaussian", "sigma": 0.05 },
    "thinning_p": 1.0,
    "retention_q": 0.1,
    "noise": { "kind": "poisson", "rho": 30.0 }
  },
  "initial": { "kind": "poisson", "rho": 50.0 },
  "run": { "mode": "chain", "generations": 3 },
  "replicates": 2,
  "seed": 11
}"#;

#[test]
fn same_seed_gives_byte_identical_patterns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, SMALL_CHAIN).unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        assert_success(&ppchain(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "99",
            "--out",
            out.to_str().unwrap(),
        ]));
    }
    for name in ["pattern_000.csv", "pattern_001.csv"] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn thread_count_does_not_change_patterns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, SMALL_CHAIN).unwrap();
    let out_1 = dir.path().join("t1");
    let out_4 = dir.path().join("t4");
    for (out, threads) in [(&out_1, "1"), (&out_4, "4")] {
        assert_success(&ppchain(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]));
    }
    for name in ["pattern_000.csv", "pattern_001.csv"] {
        assert_eq!(
            fs::read(out_1.join(name)).unwrap(),
            fs::read(out_4.join(name)).unwrap(),
            "{name} depends on the thread count"
        );
    }
}

#[test]
fn pattern_csv_uses_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, SMALL_CHAIN).unwrap();
    let out = dir.path().join("out");
    assert_success(&ppchain(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    let text = fs::read_to_string(out.join("pattern_000.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x,y");
    let row = lines.next().expect("at least one point");
    for field in row.split(',') {
        // 1 leading digit, 16 fractional digits, exponent: round-trips f64.
        let mantissa = field.split('e').next().unwrap();
        let digits = mantissa.trim_start_matches('-');
        assert_eq!(
            digits.len(),
            18,
            "field {field} is not written with 17 significant digits"
        );
        let v: f64 = field.parse().unwrap();
        assert_eq!(format!("{v:.16e}"), field);
    }
}

#[test]
fn zero_replicates_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        SMALL_CHAIN.replace("\"replicates\": 2", "\"replicates\": 0"),
    )
    .unwrap();
    let out = ppchain(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("replicates"));
}

#[test]
fn unknown_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        SMALL_CHAIN.replace("\"seed\": 11", "\"seed\": 11, \"sede\": 3"),
    )
    .unwrap();
    let out = ppchain(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sede"));
}

#[test]
fn unknown_preset_is_a_config_error() {
    let out = ppchain(&["theory", "--preset", "fig99"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fig99"));
}

#[test]
fn nonexistent_process_is_a_numeric_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    // tau far above the spectral existence bound for rho = 70.
    fs::write(
        &cfg,
        SMALL_CHAIN.replace(
            r#"{ "kind": "poisson", "rho": 30.0 }"#,
            r#"{ "kind": "gaussian_dpp", "rho": 70.0, "tau": 0.2, "alpha": 1 }"#,
        ),
    )
    .unwrap();
    let out = ppchain(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
}

#[test]
fn fig1_curves_are_strictly_ordered() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig1");
    assert_success(&ppchain(&[
        "theory",
        "--preset",
        "fig1",
        "--out",
        out.to_str().unwrap(),
    ]));
    let det = read_csv_values(&out.join("theory_gaussian_dpp.csv"));
    let poi = read_csv_values(&out.join("theory_poisson.csv"));
    let wpe = read_csv_values(&out.join("theory_weighted_permanental.csv"));
    assert_eq!(det.len(), 256);
    for ((d, p), w) in det.iter().zip(&poi).zip(&wpe) {
        assert!((d.0 - p.0).abs() < 1e-12);
        assert!(
            d.1 < p.1 && p.1 < w.1,
            "ordering violated at r = {}: {} vs {} vs {}",
            d.0,
            d.1,
            p.1,
            w.1
        );
    }
}

#[test]
fn fig3_snapshots_are_practically_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig3");
    assert_success(&ppchain(&[
        "theory",
        "--preset",
        "fig3",
        "--out",
        out.to_str().unwrap(),
    ]));
    for stem in ["gaussian_dpp", "poisson", "weighted_permanental"] {
        let g8 = read_csv_values(&out.join(format!("theory_{stem}_gen8.csv")));
        let g16 = read_csv_values(&out.join(format!("theory_{stem}_gen16.csv")));
        let max_diff = g8
            .iter()
            .zip(&g16)
            .map(|(a, b)| (a.1 - b.1).abs())
            .fold(0.0, f64::max);
        assert!(
            max_diff < 1e-3,
            "{stem}: generations 8 and 16 differ by {max_diff}"
        );
    }
}

#[test]
fn gamma_report_reproduces_known_values() {
    let dir = tempfile::tempdir().unwrap();
    for (preset, want) in [("case1-poisson", 9.8901e-4), ("case2-poisson", 0.46282)] {
        let out = dir.path().join(preset);
        assert_success(&ppchain(&[
            "theory",
            "--preset",
            preset,
            "--out",
            out.to_str().unwrap(),
        ]));
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
        let gamma = report["entries"][0]["gamma"].as_f64().unwrap();
        assert!(
            (gamma - want).abs() < 1e-4 * want.abs(),
            "{preset}: gamma {gamma} vs {want}"
        );
    }
}

#[test]
fn printed_preset_round_trips_through_config() {
    let dir = tempfile::tempdir().unwrap();
    let printed = ppchain(&["presets", "case1-dpp"]);
    assert_success(&printed);
    let cfg = dir.path().join("case1-dpp.json");
    fs::write(&cfg, &printed.stdout).unwrap();

    let out_preset = dir.path().join("from_preset");
    let out_config = dir.path().join("from_config");
    assert_success(&ppchain(&[
        "theory",
        "--preset",
        "case1-dpp",
        "--out",
        out_preset.to_str().unwrap(),
    ]));
    assert_success(&ppchain(&[
        "theory",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_config.to_str().unwrap(),
    ]));
    assert_eq!(
        fs::read(out_preset.join("theory_gaussian_dpp.csv")).unwrap(),
        fs::read(out_config.join("theory_gaussian_dpp.csv")).unwrap(),
        "preset and its printed form produce different output"
    );

    // Printing the re-parsed config again gives the same canonical JSON.
    let again = ppchain(&["presets", "case1-dpp"]);
    assert_eq!(printed.stdout, again.stdout);
}

#[test]
fn presets_lists_all_names() {
    let out = ppchain(&["presets"]);
    assert_success(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let names: Vec<&str> = text.lines().collect();
    assert_eq!(names.len(), 11);
    for name in ["fig1", "fig3", "case1-poisson", "case2-perm"] {
        assert!(names.contains(&name), "missing preset {name}");
    }
}

#[test]
fn validate_writes_envelopes_and_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{
  "dim": 2,
  "window": { "lower": [0.0, 0.0], "upper": [1.0, 1.0] },
  "model": {
    "count": { "kind": "poisson", "mean": 0.3 },
    "displacement": { "kind": "isotropic_gaussian", "sigma": 0.1 },
    "thinning_p": 1.0,
    "retention_q": 0.0,
    "noise": { "kind": "poisson", "rho": 70.0 }
  },
  "run": { "mode": "equilibrium" },
  "seed": 4,
  "output": { "null_sims": 39, "r_steps": 64, "summaries": ["pcf", "l"] }
}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    assert_success(&ppchain(&[
        "validate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    let verdicts: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("verdicts.json")).unwrap()).unwrap();
    assert_eq!(verdicts["intensity"].as_f64().unwrap(), 100.0);
    assert_eq!(verdicts["summaries"].as_array().unwrap().len(), 2);
    for stem in ["pcf", "l"] {
        let text = fs::read_to_string(out.join(format!("envelope_{stem}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "r,lo,hi,observed");
        assert_eq!(lines.count(), 64);
    }
    assert!(!out.join("envelope_j.csv").exists());
}
