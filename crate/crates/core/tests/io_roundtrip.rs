use std::fs;
use std::path::Path;

use lemr_core::harness::{make_splits, run_budget_sweep};
use lemr_core::io::{
    aggregate_csv_string, read_bundle, read_bundle_unvalidated, read_logit_dump, report_csv_string,
    write_aggregate_csv, write_bundle, write_report_csv, BundleManifest, Storage, BINARY_FILE, LABELS_FILE,
    MANIFEST_FILE,
};
use lemr_core::{
    generate_model_set, validate_bundle, ConfigTemplate, Execution, LemrError, ModelSetBundle, SynthSpec,
};

fn synth(k: usize, n: usize, c: usize, seed: u64) -> ModelSetBundle {
    generate_model_set(&SynthSpec {
        num_models: k,
        num_samples: n,
        num_classes: c,
        target_accuracies: SynthSpec::linear_accuracies(k, 0.4, 0.9),
        confidence_low: 1.0 / c as f64 + 0.01,
        confidence_high: 0.99,
        seed,
    })
    .unwrap()
}

fn code(err: LemrError) -> &'static str {
    match err {
        LemrError::Format(f) => f.code(),
        other => panic!("expected a format error, got {other}"),
    }
}

fn rewrite_manifest(dir: &Path, edit: impl FnOnce(&mut BundleManifest)) {
    let path = dir.join(MANIFEST_FILE);
    let mut m: BundleManifest = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    edit(&mut m);
    fs::write(&path, serde_json::to_string_pretty(&m).unwrap()).unwrap();
}

#[test]
fn round_trip_both_storages() {
    for seed in 0..10 {
        let b = synth(4, 25, [2, 4, 10][seed as usize % 3], seed);
        for storage in [Storage::Binary, Storage::Csv] {
            let dir = tempfile::tempdir().unwrap();
            write_bundle(&b, dir.path(), storage).unwrap();
            let back = read_bundle(dir.path()).unwrap();
            assert_eq!(back.name(), b.name());
            assert_eq!(back.labels(), b.labels());
            match storage {
                Storage::Binary => assert_eq!(back, b),
                Storage::Csv => {
                    for k in 0..4 {
                        for i in 0..25 {
                            for c in 0..b.num_classes() {
                                assert!((back.prob(k, i, c) - b.prob(k, i, c)).abs() <= 1e-9);
                            }
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn csv_layout_and_literal_one_hot() {
    let b = ModelSetBundle::from_f64("onehot", 3, 4, 2, &[1.0, 0.0].repeat(12), vec![0, 1, 0, 1]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_bundle(&b, dir.path(), Storage::Csv).unwrap();
    for k in 0..3 {
        let text = fs::read_to_string(dir.path().join(format!("predictions_{k}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().all(|l| l == "1.0,0.0"));
    }
    assert!(!dir.path().join("predictions_3.csv").exists());
}

#[test]
fn binary_writes_are_byte_identical() {
    let b = synth(3, 30, 4, 9);
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_bundle(&b, d1.path(), Storage::Binary).unwrap();
    write_bundle(&b, d2.path(), Storage::Binary).unwrap();
    for f in [BINARY_FILE, LABELS_FILE, MANIFEST_FILE] {
        assert_eq!(fs::read(d1.path().join(f)).unwrap(), fs::read(d2.path().join(f)).unwrap());
    }
    let bytes = fs::read(d1.path().join(BINARY_FILE)).unwrap();
    assert_eq!(&bytes[..8], b"LEMRBNDL");
    assert_eq!(bytes.len(), 16 + 3 * 30 * 4 * 4);
}

#[test]
fn corrupted_checksum_is_detected() {
    let b = synth(2, 10, 3, 1);
    let dir = tempfile::tempdir().unwrap();
    write_bundle(&b, dir.path(), Storage::Binary).unwrap();
    rewrite_manifest(dir.path(), |m| m.checksum ^= 1);
    assert_eq!(code(read_bundle(dir.path()).unwrap_err()), "E_CHECKSUM");

    let dir = tempfile::tempdir().unwrap();
    write_bundle(&b, dir.path(), Storage::Csv).unwrap();
    let path = dir.path().join("predictions_1.csv");
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replacen('0', "1", 1)).unwrap();
    let err = read_bundle(dir.path()).unwrap_err();
    assert!(matches!(code(err), "E_CHECKSUM" | "E_SIMPLEX"));
}

#[test]
fn extra_label_line_is_a_dimension_error() {
    let b = synth(2, 10, 3, 2);
    let dir = tempfile::tempdir().unwrap();
    write_bundle(&b, dir.path(), Storage::Csv).unwrap();
    let path = dir.path().join(LABELS_FILE);
    let mut text = fs::read_to_string(&path).unwrap();
    text.push_str("0\n");
    fs::write(&path, text).unwrap();
    assert_eq!(code(read_bundle(dir.path()).unwrap_err()), "E_DIMENSION");
}

#[test]
fn other_error_codes() {
    let b = synth(2, 10, 3, 3);
    let dir = tempfile::tempdir().unwrap();
    write_bundle(&b, dir.path(), Storage::Binary).unwrap();
    fs::remove_file(dir.path().join(BINARY_FILE)).unwrap();
    assert_eq!(code(read_bundle(dir.path()).unwrap_err()), "E_MISSING_FILE");

    let dir = tempfile::tempdir().unwrap();
    write_bundle(&b, dir.path(), Storage::Binary).unwrap();
    rewrite_manifest(dir.path(), |m| m.format_version = 7);
    assert_eq!(code(read_bundle(dir.path()).unwrap_err()), "E_VERSION");

    let dir = tempfile::tempdir().unwrap();
    write_bundle(&b, dir.path(), Storage::Binary).unwrap();
    let path = dir.path().join(BINARY_FILE);
    let mut bytes = fs::read(&path).unwrap();
    bytes[0] = b'X';
    fs::write(&path, bytes).unwrap();
    assert_eq!(code(read_bundle(dir.path()).unwrap_err()), "E_HEADER");

    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join(MANIFEST_FILE), "{\"nope\": 1}").unwrap();
    assert_eq!(code(read_bundle(dir.path()).unwrap_err()), "E_MANIFEST");
}

/// Hand-written bundle with correct checksum, built from literal file text.
fn handmade(dir: &Path, labels: &str, rows: &[&str], classes: usize) {
    let mut hash = lemr_core::seed::FNV_OFFSET;
    hash = lemr_core::seed::fnv1a64_extend(hash, labels.as_bytes());
    for r in rows {
        hash = lemr_core::seed::fnv1a64_extend(hash, r.as_bytes());
    }
    fs::write(dir.join(LABELS_FILE), labels).unwrap();
    for (k, r) in rows.iter().enumerate() {
        fs::write(dir.join(format!("predictions_{k}.csv")), r).unwrap();
    }
    let manifest = BundleManifest {
        format_version: 1,
        name: "hand".into(),
        num_models: rows.len(),
        num_samples: labels.lines().count(),
        num_classes: classes,
        storage: Storage::Csv,
        checksum: hash,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string(&manifest).unwrap()).unwrap();
}

#[test]
fn near_simplex_rows_are_renormalized() {
    let dir = tempfile::tempdir().unwrap();
    handmade(dir.path(), "0\n1\n", &["0.5000004,0.5\n0.25,0.75\n"], 2);
    let b = read_bundle(dir.path()).unwrap();
    let sum: f64 = (0..2).map(|c| b.prob(0, 0, c)).sum();
    assert!((sum - 1.0).abs() < 1e-12);
    assert!(validate_bundle(&b).is_valid());
}

#[test]
fn simplex_and_label_violations() {
    let dir = tempfile::tempdir().unwrap();
    handmade(dir.path(), "0\n1\n", &["0.6,0.5\n0.25,0.75\n"], 2);
    assert_eq!(code(read_bundle(dir.path()).unwrap_err()), "E_SIMPLEX");
    let report = validate_bundle(&read_bundle_unvalidated(dir.path()).unwrap());
    assert_eq!(report.violations.len(), 1);

    let dir = tempfile::tempdir().unwrap();
    handmade(dir.path(), "0\n2\n", &["0.5,0.5\n0.25,0.75\n"], 2);
    assert_eq!(code(read_bundle(dir.path()).unwrap_err()), "E_LABEL_RANGE");

    let dir = tempfile::tempdir().unwrap();
    handmade(dir.path(), "0\nx\n", &["0.5,0.5\n0.25,0.75\n"], 2);
    assert_eq!(code(read_bundle(dir.path()).unwrap_err()), "E_PARSE");
}

#[test]
fn logit_dump_conversion() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join(LABELS_FILE), "0\n1\n").unwrap();
    fs::write(dir.path().join("logits_0.csv"), "2.0,0.0\n0.0,0.0\n").unwrap();
    fs::write(dir.path().join("logits_1.csv"), "1000.0,999.0\n-3.0,3.0\n").unwrap();
    let b = read_logit_dump(dir.path(), "dump").unwrap();
    assert_eq!(b.num_models(), 2);
    let e2 = 2f64.exp();
    assert!((b.prob(0, 0, 0) - e2 / (e2 + 1.0)).abs() < 1e-7);
    assert!((b.prob(0, 1, 0) - 0.5).abs() < 1e-7);
    assert!((b.prob(1, 0, 0) - 1.0 / (1.0 + (-1f64).exp())).abs() < 1e-7);
    assert_eq!(b.predicted_class(1, 1), 1);
}

fn small_report() -> lemr_core::ExperimentReport {
    let b = synth(5, 100, 3, 11);
    let splits = make_splits(100, 0.2, 2, 11).unwrap();
    run_budget_sweep(&b, &ConfigTemplate::default(), &[0.5], &splits, 3, Execution::Sequential).unwrap()
}

#[test]
fn report_csv_shape_and_determinism() {
    let report = small_report();
    assert_eq!(report.rows.len(), 2);
    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_report_csv(&report, &p1).unwrap();
    write_report_csv(&report, &p2).unwrap();
    let text = fs::read_to_string(&p1).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(!text.contains('\r'));
    assert!(text.starts_with(
        "config,ensemble,acquisition,committee,budget,budget_ratio,split_id,optimal_gap,abs_optimal_gap,ranking_correction,labels_acquired\n"
    ));
    assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    for line in text.lines().skip(1) {
        let gap = line.split(',').nth(7).unwrap();
        assert_eq!(gap.split('.').nth(1).unwrap().len(), 6);
    }
}

#[test]
fn aggregate_mean_matches_row_file() {
    let b = synth(8, 200, 4, 12);
    let splits = make_splits(200, 0.2, 5, 12).unwrap();
    let report =
        run_budget_sweep(&b, &ConfigTemplate::default(), &[0.0, 0.1, 0.3], &splits, 4, Execution::Sequential)
            .unwrap();
    let rows = report_csv_string(&report);
    let aggs = aggregate_csv_string(&report.aggregates);
    for agg_line in aggs.lines().skip(1) {
        let a: Vec<&str> = agg_line.split(',').collect();
        let gaps: Vec<f64> = rows
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .filter(|r| r[0] == a[0] && r[4] == a[4])
            .map(|r| r[7].parse::<f64>().unwrap())
            .collect();
        assert_eq!(gaps.len(), 5);
        let mean = gaps.iter().sum::<f64>() / 5.0;
        assert!((mean - a[7].parse::<f64>().unwrap()).abs() <= 1e-6, "{agg_line}");
    }
    let dir = tempfile::tempdir().unwrap();
    write_aggregate_csv(&report.aggregates, dir.path().join("agg.csv")).unwrap();
    assert_eq!(fs::read_to_string(dir.path().join("agg.csv")).unwrap(), aggs);
}
