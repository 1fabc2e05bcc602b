//! Bundle directories and report files.
//!
//! A bundle directory holds:
//!
//! * `manifest.json`: `format_version`, `name`, `num_models`, `num_samples`,
//!   `num_classes`, `storage` (`"csv"` or `"binary"`), `checksum` (16 lowercase
//!   hex digits);
//! * `labels.csv`: one class index per line, `num_samples` lines;
//! * either `predictions_<k>.csv` for each model `k` (`num_samples` rows of
//!   `num_classes` comma-separated decimals) or `predictions.bin`: the 8-byte
//!   magic `LEMRBNDL`, `format_version` as `u32` LE, a reserved `u32` (0), then
//!   `K*N*C` little-endian `f32` in model, sample, class order.
//!
//! The checksum is 64-bit FNV-1a over the bytes of `labels.csv` followed by the
//! prediction files in model order. Reads check dimensions first, then the
//! checksum, then the simplex invariants.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{FormatError, LemrError, Result};
use crate::harness::{Aggregate, ExperimentReport};
use crate::model_set::{validate_bundle, ModelSetBundle, Violation};
use crate::seed::{fnv1a64_extend, FNV_OFFSET};

pub const FORMAT_VERSION: u32 = 1;
pub const BINARY_MAGIC: &[u8; 8] = b"LEMRBNDL";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LABELS_FILE: &str = "labels.csv";
pub const BINARY_FILE: &str = "predictions.bin";

pub const REPORT_HEADER: [&str; 11] = [
    "config",
    "ensemble",
    "acquisition",
    "committee",
    "budget",
    "budget_ratio",
    "split_id",
    "optimal_gap",
    "abs_optimal_gap",
    "ranking_correction",
    "labels_acquired",
];

pub const AGGREGATE_HEADER: [&str; 14] = [
    "config",
    "ensemble",
    "acquisition",
    "committee",
    "budget",
    "budget_ratio",
    "count",
    "mean_optimal_gap",
    "std_optimal_gap",
    "mean_abs_optimal_gap",
    "mean_ranking_correction",
    "std_ranking_correction",
    "correction_count",
    "mean_labels_acquired",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Storage {
    Csv,
    Binary,
}

impl std::str::FromStr for Storage {
    type Err = LemrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Storage::Csv),
            "binary" => Ok(Storage::Binary),
            other => Err(LemrError::contract(format!("unknown storage {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub format_version: u32,
    pub name: String,
    pub num_models: usize,
    pub num_samples: usize,
    pub num_classes: usize,
    pub storage: Storage,
    #[serde(with = "hex_u64")]
    pub checksum: u64,
}

mod hex_u64 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{value:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let text = String::deserialize(d)?;
        u64::from_str_radix(&text, 16).map_err(D::Error::custom)
    }
}

pub fn prediction_file_name(model: usize) -> String {
    format!("predictions_{model}.csv")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io { path: path.to_path_buf(), source }
}

fn read_file(path: &Path) -> Result<Vec<u8>, FormatError> {
    match fs::read(path) {
        Ok(bytes) => Ok(bytes),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(FormatError::MissingFile(path.to_path_buf()))
        }
        Err(e) => Err(io_err(path)(e)),
    }
}

fn read_text(path: &Path) -> Result<(String, Vec<u8>), FormatError> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| FormatError::Parse {
        file: display_name(path),
        line: 0,
        detail: "not valid UTF-8".into(),
    })?;
    Ok((text, bytes))
}

fn display_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// FNV-1a over the concatenation of `parts`.
fn checksum_of(parts: &[&[u8]]) -> u64 {
    parts.iter().fold(FNV_OFFSET, |hash, part| fnv1a64_extend(hash, part))
}

fn parse_labels(text: &str, manifest: &BundleManifest) -> Result<Vec<usize>, FormatError> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() != manifest.num_samples {
        return Err(FormatError::DimensionMismatch {
            file: LABELS_FILE.into(),
            detail: format!("{} lines, manifest says {} samples", lines.len(), manifest.num_samples),
        });
    }
    lines
        .iter()
        .enumerate()
        .map(|(n, line)| {
            let value: i64 = line.trim().parse().map_err(|_| FormatError::Parse {
                file: LABELS_FILE.into(),
                line: n + 1,
                detail: format!("expected an integer, found {line:?}"),
            })?;
            if value < 0 || value as usize >= manifest.num_classes {
                return Err(FormatError::LabelRange {
                    sample: n,
                    label: value,
                    num_classes: manifest.num_classes,
                });
            }
            Ok(value as usize)
        })
        .collect()
}

fn parse_prediction_csv(
    text: &str,
    file: &str,
    manifest: &BundleManifest,
    out: &mut Vec<f32>,
) -> Result<(), FormatError> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() != manifest.num_samples {
        return Err(FormatError::DimensionMismatch {
            file: file.into(),
            detail: format!("{} rows, manifest says {} samples", lines.len(), manifest.num_samples),
        });
    }
    for (n, line) in lines.iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != manifest.num_classes {
            return Err(FormatError::DimensionMismatch {
                file: file.into(),
                detail: format!(
                    "row {} has {} values, manifest says {} classes",
                    n + 1,
                    fields.len(),
                    manifest.num_classes
                ),
            });
        }
        for field in fields {
            let value: f32 = field.trim().parse().map_err(|_| FormatError::Parse {
                file: file.into(),
                line: n + 1,
                detail: format!("expected a decimal, found {field:?}"),
            })?;
            out.push(value);
        }
    }
    Ok(())
}

fn parse_binary(bytes: &[u8], manifest: &BundleManifest) -> Result<Vec<f32>, FormatError> {
    if bytes.len() < 16 || &bytes[..8] != BINARY_MAGIC {
        return Err(FormatError::Header(BINARY_FILE.into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(FormatError::Version(version));
    }
    let payload = &bytes[16..];
    let expected = manifest.num_models * manifest.num_samples * manifest.num_classes;
    if payload.len() != expected * 4 {
        return Err(FormatError::DimensionMismatch {
            file: BINARY_FILE.into(),
            detail: format!("{} payload bytes, expected {}", payload.len(), expected * 4),
        });
    }
    Ok(payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect())
}

fn read_manifest(dir: &Path) -> Result<BundleManifest, FormatError> {
    let path = dir.join(MANIFEST_FILE);
    let (text, _) = read_text(&path)?;
    let manifest: BundleManifest =
        serde_json::from_str(&text).map_err(|e| FormatError::Manifest(e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(FormatError::Version(manifest.format_version));
    }
    Ok(manifest)
}

/// Reads a bundle directory and checks structure and checksum, but not the
/// simplex invariants. Rows within tolerance are renormalized.
pub fn read_bundle_unvalidated(dir: impl AsRef<Path>) -> Result<ModelSetBundle> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let (labels_text, labels_bytes) = read_text(&dir.join(LABELS_FILE))?;
    let labels = parse_labels(&labels_text, &manifest)?;

    let mut hashed: Vec<Vec<u8>> = vec![labels_bytes];
    let predictions = match manifest.storage {
        Storage::Csv => {
            let mut out =
                Vec::with_capacity(manifest.num_models * manifest.num_samples * manifest.num_classes);
            for k in 0..manifest.num_models {
                let name = prediction_file_name(k);
                let (text, bytes) = read_text(&dir.join(&name))?;
                parse_prediction_csv(&text, &name, &manifest, &mut out)?;
                hashed.push(bytes);
            }
            out
        }
        Storage::Binary => {
            let bytes = read_file(&dir.join(BINARY_FILE))?;
            let out = parse_binary(&bytes, &manifest)?;
            hashed.push(bytes);
            out
        }
    };
    let parts: Vec<&[u8]> = hashed.iter().map(Vec::as_slice).collect();
    let actual = checksum_of(&parts);
    if actual != manifest.checksum {
        return Err(FormatError::Checksum { expected: manifest.checksum, actual }.into());
    }

    let mut predictions = predictions;
    if manifest.num_classes > 0 {
        for row in predictions.chunks_exact_mut(manifest.num_classes) {
            crate::model_set::renormalize_row(row);
        }
    }
    ModelSetBundle::from_raw(
        manifest.name,
        manifest.num_models,
        manifest.num_samples,
        manifest.num_classes,
        predictions,
        labels,
    )
}

/// Reads and fully validates a bundle directory.
pub fn read_bundle(dir: impl AsRef<Path>) -> Result<ModelSetBundle> {
    let bundle = read_bundle_unvalidated(dir)?;
    if let Some(v) = validate_bundle(&bundle).violations.into_iter().next() {
        return Err(match v {
            Violation::RowSum { model, sample, sum } => FormatError::Simplex { model, sample, sum },
            Violation::NegativeEntry { model, sample, value, .. } => {
                FormatError::Simplex { model, sample, sum: value }
            }
            Violation::LabelOutOfRange { sample, label } => {
                FormatError::LabelRange { sample, label: label as i64, num_classes: bundle.num_classes() }
            }
            other => FormatError::Manifest(other.to_string()),
        }
        .into());
    }
    Ok(bundle)
}

fn labels_bytes(bundle: &ModelSetBundle) -> Vec<u8> {
    let mut out = String::with_capacity(bundle.num_samples() * 2);
    for &y in bundle.labels() {
        out.push_str(&y.to_string());
        out.push('\n');
    }
    out.into_bytes()
}

fn prediction_csv_bytes(bundle: &ModelSetBundle, model: usize) -> Vec<u8> {
    let mut out = String::new();
    for i in 0..bundle.num_samples() {
        let row = bundle.raw_row(model, i);
        for (c, x) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            // Debug formatting is the shortest round-trip form and keeps ".0"
            out.push_str(&format!("{x:?}"));
        }
        out.push('\n');
    }
    out.into_bytes()
}

fn binary_bytes(bundle: &ModelSetBundle) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + bundle.raw_predictions().len() * 4);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for x in bundle.raw_predictions() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    fs::write(path, bytes).map_err(io_err(path))
}

/// Writes `bundle` in the layout [`read_bundle`] consumes.
pub fn write_bundle(bundle: &ModelSetBundle, dir: impl AsRef<Path>, storage: Storage) -> Result<()> {
    let dir = dir.as_ref();
    if let Some(v) = validate_bundle(bundle).violations.first() {
        return Err(LemrError::contract(format!("refusing to write invalid bundle: {v}")));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let labels = labels_bytes(bundle);
    let mut files: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    match storage {
        Storage::Csv => {
            for k in 0..bundle.num_models() {
                files.push((dir.join(prediction_file_name(k)), prediction_csv_bytes(bundle, k)));
            }
        }
        Storage::Binary => files.push((dir.join(BINARY_FILE), binary_bytes(bundle))),
    }
    let mut parts: Vec<&[u8]> = vec![&labels];
    parts.extend(files.iter().map(|(_, b)| b.as_slice()));
    let manifest = BundleManifest {
        format_version: FORMAT_VERSION,
        name: bundle.name().to_string(),
        num_models: bundle.num_models(),
        num_samples: bundle.num_samples(),
        num_classes: bundle.num_classes(),
        storage,
        checksum: checksum_of(&parts),
    };
    write_file(&dir.join(LABELS_FILE), &labels)?;
    for (path, bytes) in &files {
        write_file(path, bytes)?;
    }
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    write_file(&dir.join(MANIFEST_FILE), json.as_bytes())?;
    Ok(())
}

fn fixed6(value: f64) -> String {
    if value.is_nan() {
        return "nan".into();
    }
    // avoid "-0.000000"
    let value = if value == 0.0 { 0.0 } else { value };
    let text = format!("{value:.6}");
    if text == "-0.000000" {
        "0.000000".into()
    } else {
        text
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, FormatError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(io_err(path))?))
}

/// Per-split rows. Gaps are in percentage points.
pub fn report_csv_string(report: &ExperimentReport) -> String {
    let mut out = REPORT_HEADER.join(",");
    out.push('\n');
    for r in &report.rows {
        let fields = [
            r.config.clone(),
            r.ensemble.clone(),
            r.acquisition.clone(),
            r.committee.clone(),
            r.budget.to_string(),
            fixed6(r.budget_ratio),
            r.split_id.to_string(),
            fixed6(100.0 * r.optimal_gap),
            fixed6(100.0 * r.optimal_gap.abs()),
            fixed6(r.ranking_correction.unwrap_or(f64::NAN)),
            r.labels_acquired.to_string(),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Per-(config, budget) aggregates. Gaps are in percentage points.
pub fn aggregate_csv_string(aggregates: &[Aggregate]) -> String {
    let mut out = AGGREGATE_HEADER.join(",");
    out.push('\n');
    for a in aggregates {
        let fields = [
            a.config.clone(),
            a.ensemble.clone(),
            a.acquisition.clone(),
            a.committee.clone(),
            a.budget.to_string(),
            fixed6(a.budget_ratio),
            a.count.to_string(),
            fixed6(100.0 * a.mean_optimal_gap),
            fixed6(100.0 * a.std_optimal_gap),
            fixed6(100.0 * a.mean_abs_optimal_gap),
            fixed6(a.mean_ranking_correction),
            fixed6(a.std_ranking_correction),
            a.correction_count.to_string(),
            fixed6(a.mean_labels_acquired),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_report_csv(report: &ExperimentReport, path: impl AsRef<Path>) -> Result<()> {
    if report.rows.is_empty() {
        return Err(LemrError::contract("report has no rows"));
    }
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_all(report_csv_string(report).as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_aggregate_csv(aggregates: &[Aggregate], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_all(aggregate_csv_string(aggregates).as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Max-subtracted natural-base softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Builds a bundle from logit rows (model-major, then sample, then class).
pub fn bundle_from_logits(
    name: impl Into<String>,
    num_models: usize,
    num_samples: usize,
    num_classes: usize,
    logits: &[f64],
    labels: Vec<usize>,
) -> Result<ModelSetBundle> {
    if num_classes == 0 || logits.len() != num_models * num_samples * num_classes {
        return Err(LemrError::contract("logit tensor does not match the stated dimensions"));
    }
    let probs: Vec<f64> = logits.chunks_exact(num_classes).flat_map(softmax).collect();
    ModelSetBundle::from_f64(name, num_models, num_samples, num_classes, &probs, labels)
}

/// Reads a logit dump (`labels.csv` plus `logits_<k>.csv` for k = 0, 1, ...
/// until a file is missing) and converts it to a bundle.
pub fn read_logit_dump(dir: impl AsRef<Path>, name: &str) -> Result<ModelSetBundle> {
    let dir = dir.as_ref();
    let (labels_text, _) = read_text(&dir.join(LABELS_FILE))?;
    let mut logits = Vec::new();
    let mut num_models = 0;
    let mut num_classes = None;
    let mut num_samples = None;
    loop {
        let file = format!("logits_{num_models}.csv");
        let path = dir.join(&file);
        if !path.exists() {
            break;
        }
        let (text, _) = read_text(&path)?;
        let mut rows = 0;
        for (n, line) in text.lines().enumerate() {
            let values = line
                .split(',')
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| FormatError::Parse {
                        file: file.clone(),
                        line: n + 1,
                        detail: format!("expected a decimal, found {f:?}"),
                    })
                })
                .collect::<Result<Vec<f64>, FormatError>>()?;
            if *num_classes.get_or_insert(values.len()) != values.len() {
                return Err(FormatError::DimensionMismatch {
                    file,
                    detail: format!("row {} has {} values", n + 1, values.len()),
                }
                .into());
            }
            logits.extend(values);
            rows += 1;
        }
        if *num_samples.get_or_insert(rows) != rows {
            return Err(FormatError::DimensionMismatch { file, detail: format!("{rows} rows") }.into());
        }
        num_models += 1;
    }
    if num_models == 0 {
        return Err(FormatError::MissingFile(dir.join("logits_0.csv")).into());
    }
    let num_samples = num_samples.unwrap_or(0);
    let num_classes = num_classes.unwrap_or(0);
    let manifest = BundleManifest {
        format_version: FORMAT_VERSION,
        name: name.to_string(),
        num_models,
        num_samples,
        num_classes,
        storage: Storage::Csv,
        checksum: 0,
    };
    let labels = parse_labels(&labels_text, &manifest)?;
    bundle_from_logits(name, num_models, num_samples, num_classes, &logits, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelSetBundle {
        let preds = vec![1.0, 0.0, 0.25, 0.75, 0.5, 0.5, 0.125, 0.875];
        ModelSetBundle::new("small", 2, 2, 2, preds, vec![0, 1]).unwrap()
    }

    #[test]
    fn csv_one_hot_literal() {
        let text = String::from_utf8(prediction_csv_bytes(&small(), 0)).unwrap();
        assert_eq!(text, "1.0,0.0\n0.25,0.75\n");
    }

    #[test]
    fn binary_header_layout() {
        let bytes = binary_bytes(&small());
        assert_eq!(&bytes[..8], b"LEMRBNDL");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &[0, 0, 0, 0]);
        assert_eq!(bytes.len(), 16 + 8 * 4);
    }

    #[test]
    fn fixed6_formatting() {
        assert_eq!(fixed6(0.1234567), "0.123457");
        assert_eq!(fixed6(-0.0), "0.000000");
        assert_eq!(fixed6(-1e-9), "0.000000");
        assert_eq!(fixed6(f64::NAN), "nan");
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let a = softmax(&[1.0, 2.0, 3.0]);
        let b = softmax(&[1001.0, 1002.0, 1003.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn manifest_json_keys() {
        let m = BundleManifest {
            format_version: 1,
            name: "x".into(),
            num_models: 1,
            num_samples: 2,
            num_classes: 3,
            storage: Storage::Binary,
            checksum: 0xabc,
        };
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(
            keys,
            vec!["checksum", "format_version", "name", "num_classes", "num_models", "num_samples", "storage"]
        );
        assert_eq!(v["checksum"], "0000000000000abc");
        assert_eq!(v["storage"], "binary");
    }
}
