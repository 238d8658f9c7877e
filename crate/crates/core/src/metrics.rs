//! Confusion-matrix metrics, multi-run aggregation and report files.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Month;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MonthlyMetrics {
    pub month: Option<Month>,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// `None` when the ratio's denominator is zero.
    pub f1: Option<f64>,
    pub fnr: Option<f64>,
    pub fpr: Option<f64>,
}

impl MonthlyMetrics {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        MonthlyMetrics {
            month: None,
            tp,
            fp,
            tn,
            fn_,
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
            fnr: ratio(fn_, fn_ + tp),
            fpr: ratio(fp, fp + tn),
        }
    }

    pub fn samples(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn with_month(mut self, month: Month) -> Self {
        self.month = Some(month);
        self
    }
}

/// Malware (label 1) is the positive class.
pub fn compute_metrics(predictions: &[u8], truths: &[u8]) -> Result<MonthlyMetrics> {
    if predictions.len() != truths.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truths.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &t) in predictions.iter().zip(truths) {
        match (p, t) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 0) => tn += 1,
            (0, 1) => fn_ += 1,
            _ => return Err(Error::Precondition(format!("labels must be 0/1, got ({p}, {t})"))),
        }
    }
    Ok(MonthlyMetrics::from_counts(tp, fp, tn, fn_))
}

/// Mean and sample standard deviation of the defined values.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub count: usize,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Summary {
        // Welford's update
        let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
        for v in values.into_iter().flatten() {
            n += 1;
            let delta = v - mean;
            mean += delta / n as f64;
            m2 += delta * (v - mean);
        }
        match n {
            0 => Summary::default(),
            1 => Summary {
                mean: Some(mean),
                std: Some(0.0),
                count: 1,
            },
            _ => Summary {
                mean: Some(mean),
                std: Some((m2 / (n - 1) as f64).sqrt()),
                count: n,
            },
        }
    }

    pub fn mean_or(&self, fallback: f64) -> f64 {
        self.mean.unwrap_or(fallback)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub f1: Summary,
    pub fnr: Summary,
    pub fpr: Summary,
}

pub fn aggregate<'a>(metrics: impl IntoIterator<Item = &'a MonthlyMetrics> + Clone) -> AggregateMetrics {
    AggregateMetrics {
        f1: Summary::of(metrics.clone().into_iter().map(|m| m.f1)),
        fnr: Summary::of(metrics.clone().into_iter().map(|m| m.fnr)),
        fpr: Summary::of(metrics.into_iter().map(|m| m.fpr)),
    }
}

/// Percentage rounded to one decimal.
pub fn pct(v: Option<f64>) -> Option<f64> {
    v.map(|x| (x * 1000.0).round() / 10.0)
}

/// One report line: a single month of a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub run: String,
    pub seed: u64,
    pub month: String,
    pub samples: usize,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub f1: Option<f64>,
    pub fnr: Option<f64>,
    pub fpr: Option<f64>,
}

impl ReportRow {
    pub fn new(run: impl Into<String>, seed: u64, m: &MonthlyMetrics) -> Self {
        ReportRow {
            run: run.into(),
            seed,
            month: m.month.map(|m| m.to_string()).unwrap_or_default(),
            samples: m.samples(),
            tp: m.tp,
            fp: m.fp,
            tn: m.tn,
            fn_: m.fn_,
            f1: pct(m.f1),
            fnr: pct(m.fnr),
            fpr: pct(m.fpr),
        }
    }
}

/// CSV column order of [`ReportRow`].
pub const REPORT_COLUMNS: [&str; 11] = ["run", "seed", "month", "samples", "tp", "fp", "tn", "fn", "f1", "fnr", "fpr"];

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<ReportRow>,
    /// Per-run aggregates in percent.
    pub summary: Vec<RunSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: String,
    pub f1_mean: Option<f64>,
    pub f1_std: Option<f64>,
    pub fnr_mean: Option<f64>,
    pub fnr_std: Option<f64>,
    pub fpr_mean: Option<f64>,
    pub fpr_std: Option<f64>,
}

impl RunSummary {
    pub fn new(run: impl Into<String>, agg: &AggregateMetrics) -> Self {
        RunSummary {
            run: run.into(),
            f1_mean: pct(agg.f1.mean),
            f1_std: pct(agg.f1.std),
            fnr_mean: pct(agg.fnr.mean),
            fnr_std: pct(agg.fnr.std),
            fpr_mean: pct(agg.fpr.mean),
            fpr_std: pct(agg.fpr.std),
        }
    }
}

/// SHA-256 of the canonical JSON serialization.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let text = serde_json::to_vec(config)?;
    Ok(hex::encode(Sha256::digest(&text)))
}

pub fn write_report_json(path: &Path, report: &Report) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(REPORT_COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_report_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != REPORT_COLUMNS {
        return Err(Error::data(path.display().to_string(), format!("unexpected columns {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Writes `report.json` and `months.csv` under `dir`.
pub fn emit_report(dir: &Path, report: &Report) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_report_json(&dir.join("report.json"), report)?;
    write_report_csv(&dir.join("months.csv"), &report.rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;

    fn close(a: Option<f64>, b: f64) -> bool {
        a.is_some_and(|a| (a - b).abs() < 1e-12)
    }

    #[test]
    fn closed_form_example() {
        let mut preds = Vec::new();
        let mut truth = Vec::new();
        for (p, t, n) in [(1u8, 1u8, 8), (1, 0, 2), (0, 1, 4), (0, 0, 86)] {
            preds.extend(std::iter::repeat_n(p, n));
            truth.extend(std::iter::repeat_n(t, n));
        }
        let m = compute_metrics(&preds, &truth).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_, m.tn), (8, 2, 4, 86));
        assert!(close(m.f1, 16.0 / 22.0));
        assert!(close(m.fnr, 4.0 / 12.0));
        assert!(close(m.fpr, 2.0 / 88.0));
        assert_eq!(pct(m.f1), Some(72.7));
    }

    #[test]
    fn perfect_and_degenerate() {
        let m = compute_metrics(&[0, 1, 1, 0], &[0, 1, 1, 0]).unwrap();
        assert_eq!((m.f1, m.fnr, m.fpr), (Some(1.0), Some(0.0), Some(0.0)));
        let m = compute_metrics(&[0, 0, 0], &[0, 0, 0]).unwrap();
        assert_eq!((m.f1, m.fnr, m.fpr), (None, None, Some(0.0)));
        let m = compute_metrics(&[], &[]).unwrap();
        assert_eq!((m.f1, m.fnr, m.fpr), (None, None, None));
        assert!(compute_metrics(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn summary_examples() {
        let s = Summary::of([Some(0.42)]);
        assert_eq!((s.mean, s.std), (Some(0.42), Some(0.0)));
        let s = Summary::of([Some(0.9), Some(0.9), Some(0.9)]);
        assert!(close(s.mean, 0.9));
        assert!(close(s.std, 0.0));
        let s = Summary::of([None, Some(1.0), None, Some(3.0)]);
        assert_eq!((s.mean, s.count), (Some(2.0), 2));
        assert_eq!(Summary::of([None]).mean, None);
    }

    #[test]
    fn summary_matches_two_pass() {
        let mut rng = crate::augment::RandomSource::new(11);
        for _ in 0..5 {
            let v: Vec<f64> = (0..37).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1) as f64;
            let s = Summary::of(v.iter().map(|&x| Some(x)));
            assert!(close(s.mean, mean));
            assert!(close(s.std, var.sqrt()));
        }
    }

    fn sample_report() -> Report {
        let months = ["2013-01", "2013-02"];
        let rows: Vec<ReportRow> = months
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let mm = MonthlyMetrics::from_counts(8 + i, 2, 86, 4).with_month(m.parse().unwrap());
                ReportRow::new("multi_criteria/k50", 3, &mm)
            })
            .chain(std::iter::once(ReportRow::new("empty", 0, &MonthlyMetrics::default())))
            .collect();
        Report {
            schema_version: REPORT_SCHEMA_VERSION,
            config_hash: config_hash(&"cfg").unwrap(),
            seeds: vec![3],
            rows,
            summary: Vec::new(),
        }
    }

    #[test]
    fn json_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let report = sample_report();
        emit_report(dir.path(), &report).unwrap();
        let json: Report = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(json, report);
        let csv_rows = read_report_csv(&dir.path().join("months.csv")).unwrap();
        assert_eq!(csv_rows, json.rows);
    }

    #[test]
    fn empty_report_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_report_csv(&path, &[]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.trim_end(), REPORT_COLUMNS.join(","));
    }

    #[test]
    fn column_order_is_fixed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_report_csv(&path, &sample_report().rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "run,seed,month,samples,tp,fp,tn,fn,f1,fnr,fpr");
        assert_eq!(lines.next().unwrap(), "multi_criteria/k50,3,2013-01,100,8,2,86,4,72.7,33.3,2.3");
    }

    proptest! {
        #[test]
        fn metrics_bounded_and_permutation_invariant(pairs in prop::collection::vec((0u8..2, 0u8..2), 0..200), seed in any::<u64>()) {
            let (p, t): (Vec<u8>, Vec<u8>) = pairs.iter().copied().unzip();
            let m = compute_metrics(&p, &t).unwrap();
            prop_assert_eq!(m.samples(), pairs.len());
            for v in [m.f1, m.fnr, m.fpr].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut crate::augment::RandomSource::new(seed));
            let (p2, t2): (Vec<u8>, Vec<u8>) = shuffled.into_iter().unzip();
            prop_assert_eq!(compute_metrics(&p2, &t2).unwrap(), m);
        }
    }
}
