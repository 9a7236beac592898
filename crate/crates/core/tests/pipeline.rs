use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::process::Command;

use edgelab::experiment::{derive_trial_seed, read_csv, run_experiment, ExperimentConfig, OverlapRow, Summary};

fn config(dir: &Path, body: &str) -> ExperimentConfig {
    ExperimentConfig::parse(&format!("output_dir = {}\n{body}", dir.display())).unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timing.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn minimal_run_reports_one_moment_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "sizes = 100\ntrials = 10\nstatistics = moments\n");
    let record = run_experiment(&cfg).unwrap();
    assert_eq!(record.trial_seeds.len(), 1);
    assert_eq!(record.trial_seeds[0].seeds.len(), 10);
    assert_eq!(record.summaries.len(), 1);
    let s = &record.summaries[0];
    assert!(s.value.is_nan() && s.note.as_deref().unwrap().contains("not estimated"));
    let back: Vec<Summary> =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary_moments_X2_N100.json")).unwrap()).unwrap();
    assert!(back[0].value.is_nan());
    let rows: Vec<OverlapRow> = read_csv(&dir.path().join("overlaps_N100.csv")).unwrap();
    assert_eq!(rows.iter().filter(|r| r.index == 2).count(), 10);
}

#[test]
fn moments_only_run_writes_overlaps_and_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "sizes = 100\ntrials = 120\nstatistics = moments\n");
    let record = run_experiment(&cfg).unwrap();
    assert!(record.trial_failures.is_empty());
    let rows: Vec<OverlapRow> = read_csv(&dir.path().join("overlaps_N100.csv")).unwrap();
    assert_eq!(rows.len(), 120 * 2);
    assert!(rows.iter().all(|r| r.n == 100 && r.d == 3 && r.t == "0" && (r.index == 2 || r.index == 3)));
    let second: Vec<Summary> =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary_second_moment_X2_N100.json")).unwrap()).unwrap();
    assert_eq!(second.len(), 1);
    assert_eq!(second[0].trials, 120);
    let x2: Vec<f64> = rows.iter().filter(|r| r.index == 2).map(|r| r.value * r.value).collect();
    assert!((second[0].value - x2.iter().sum::<f64>() / 120.0).abs() < 1e-12);
    assert!(dir.path().join("record.json").exists());
    assert!(dir.path().join("timing.json").exists());
}

#[test]
fn full_run_is_byte_identical_across_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "sizes = 100, 200\ntrials = 120\ntimes = 0, tstar\nspacing_k_max = 10\nlocal_law_energies = 2\nlocal_law_etas = 3\n",
    );
    let first_record = run_experiment(&cfg).unwrap();
    let first = snapshot(dir.path());
    for name in [
        "overlaps_N100.csv",
        "overlaps_N200.csv",
        "local_law_N100_t0.csv",
        "local_law_N200_ttstar.csv",
        "spacing_N200_t0.csv",
        "summary_ks_distance_X2_N200.json",
        "summary_graph_vs_goe_ks_pvalue_N100.json",
        "summary_gap_sum_median_N100.json",
        "summary_delocalization_scaled_sup_p99_N200.json",
        "summary_joint_covariance_deviation_N200.json",
        "summary_edge_spacing_exponent_N100.json",
        "rate_ks_distance_X2.json",
        "record.json",
    ] {
        assert!(first.contains_key(name), "missing {name}");
    }
    for f in fs::read_dir(dir.path()).unwrap() {
        fs::remove_file(f.unwrap().path()).unwrap();
    }
    let second_record = run_experiment(&cfg).unwrap();
    assert_eq!(first, snapshot(dir.path()));
    assert_eq!(first_record.config_hash, second_record.config_hash);
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "sizes = 100\ntrials = 100\nstatistics = moments, ks\n");
    std::env::set_var("EDGELAB_WORKERS", "1");
    run_experiment(&cfg).unwrap();
    let one = snapshot(dir.path());
    std::env::set_var("EDGELAB_WORKERS", "3");
    run_experiment(&cfg).unwrap();
    std::env::remove_var("EDGELAB_WORKERS");
    assert_eq!(one, snapshot(dir.path()));
}

#[test]
fn trial_seeds_do_not_collide() {
    let mut seen = HashSet::with_capacity(1_000_000);
    for size in 0..10u64 {
        for trial in 0..100_000u64 {
            assert!(seen.insert(derive_trial_seed(0, size, trial)), "collision at ({size}, {trial})");
        }
    }
}

#[test]
fn trial_seeds_avalanche() {
    let mut flips = 0u64;
    let mut count = 0u64;
    for trial in 0..4096u64 {
        let base = derive_trial_seed(7, 0, trial);
        for bit in 0..16 {
            flips += (base ^ derive_trial_seed(7, 0, trial ^ (1 << bit))).count_ones() as u64;
            count += 1;
        }
    }
    let mean = flips as f64 / count as f64;
    // Binomial(64, 1/2) per pair: standard error 4 / sqrt(count).
    assert!((mean - 32.0).abs() < 5.0 * 4.0 / (count as f64).sqrt(), "mean flipped bits {mean}");
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_edgelab")).args(args).output().unwrap()
}

#[test]
fn cli_samples_and_reads_back_graphs() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("g.txt");
    let out = cli(&["sample", "--n", "20", "--d", "3", "--seed", "4", "--out", graph.to_str().unwrap()]);
    assert!(out.status.success());
    let text = fs::read_to_string(&graph).unwrap();
    assert!(text.starts_with("20 3\n"));
    assert_eq!(text.lines().count(), 1 + 30);
    let out = cli(&["evolve", "--graph", graph.to_str().unwrap(), "--t", "0.2", "--seed", "1"]);
    assert!(out.status.success());
    let dump = String::from_utf8(out.stdout).unwrap();
    assert_eq!(dump.lines().next(), Some("20"));
    assert_eq!(dump.lines().count(), 21);
}

#[test]
fn cli_overlap_pipeline_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("ov.csv");
    let out = cli(&["overlaps", "--n", "100", "--trials", "100", "--k", "3", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for sub in ["moments", "ks", "decorrelation"] {
        let out = cli(&[sub, "--input", csv.to_str().unwrap()]);
        assert!(out.status.success(), "{sub}: {}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap();
    }
    let out = cli(&["joint", "--input", csv.to_str().unwrap(), "--k", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn cli_reports_errors_with_failure_status() {
    let out = cli(&["sample", "--n", "7", "--d", "3"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = cli(&["constants", "--preset", "nonsense"]);
    assert!(!out.status.success());
}

#[test]
fn cli_constants_worked_example() {
    let out = cli(&["constants", "--d", "3", "--epsilon", "0.01", "--n", "1e6", "--preset", "worked-example", "--json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let factor = v["smooth_n_factor"].as_f64().unwrap();
    assert!((factor - 0.115).abs() <= 0.001, "{factor}");
}
