//! Accuracy, 75th-percentile thresholded accuracy, the two-class collapse,
//! and per-model reports.

use std::fmt::Write as _;

use crate::baselines::{
    arima_fit_or_last, arima_predict, ema_fit, ema_predict, naive_constant_predict, ArimaOrder, BaselineKind,
    ClassProbPrediction,
};
use crate::data::{Direction, LabeledWindow};
use crate::error::{Error, Result};
use crate::model::{forward, CttsConfig, CttsParams};
use crate::parallel::map_ordered;

const PROB_TOLERANCE: f64 = 1e-9;

/// Anything that can be scored for accuracy and confidence thresholding.
pub trait Scored {
    fn is_correct(&self) -> bool;
    fn confidence(&self) -> f64;
}

/// One three-class prediction against its true label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRecord {
    pub true_label: Direction,
    /// Indexed Down, Flat, Up.
    pub probs: [f64; 3],
    pub predicted_class: Direction,
    pub confidence: f64,
}

impl PredictionRecord {
    pub fn new(true_label: Direction, probs: [f64; 3]) -> Result<Self> {
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "probabilities must be non-negative, got {probs:?}"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOLERANCE {
            return Err(Error::InvalidArgument(format!("probabilities sum to {total}, not 1")));
        }
        let p = ClassProbPrediction::from_probs(probs);
        Ok(PredictionRecord {
            true_label,
            probs,
            predicted_class: p.predicted_class,
            confidence: p.confidence,
        })
    }

    pub fn from_prediction(true_label: Direction, p: &ClassProbPrediction) -> Self {
        PredictionRecord {
            true_label,
            probs: p.probs,
            predicted_class: p.predicted_class,
            confidence: p.confidence,
        }
    }
}

impl Scored for PredictionRecord {
    fn is_correct(&self) -> bool {
        self.true_label == self.predicted_class
    }

    fn confidence(&self) -> f64 {
        self.confidence
    }
}

/// Down against everything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BinaryClass {
    Negative,
    NonNegative,
}

impl From<Direction> for BinaryClass {
    fn from(d: Direction) -> Self {
        match d {
            Direction::Down => BinaryClass::Negative,
            Direction::Flat | Direction::Up => BinaryClass::NonNegative,
        }
    }
}

/// A record after merging Flat and Up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryRecord {
    pub true_label: BinaryClass,
    /// Indexed Negative, NonNegative.
    pub probs: [f64; 2],
    pub predicted_class: BinaryClass,
    pub confidence: f64,
}

impl Scored for BinaryRecord {
    fn is_correct(&self) -> bool {
        self.true_label == self.predicted_class
    }

    fn confidence(&self) -> f64 {
        self.confidence
    }
}

/// Sums Flat and Up probabilities; a tie goes to Negative.
pub fn to_two_class(record: &PredictionRecord) -> BinaryRecord {
    let probs = [record.probs[0], record.probs[1] + record.probs[2]];
    let (predicted_class, confidence) = if probs[1] > probs[0] {
        (BinaryClass::NonNegative, probs[1])
    } else {
        (BinaryClass::Negative, probs[0])
    };
    BinaryRecord {
        true_label: record.true_label.into(),
        probs,
        predicted_class,
        confidence,
    }
}

/// Fraction of correct records.
pub fn accuracy<R: Scored>(records: &[R]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty record set".into()));
    }
    let correct = records.iter().filter(|r| r.is_correct()).count();
    Ok(correct as f64 / records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholded {
    pub accuracy: f64,
    pub kept_fraction: f64,
    /// Nearest-rank 75th percentile of the confidences.
    pub threshold: f64,
}

/// Nearest-rank percentile: the value at rank `ceil(q * n)` of the ascending sort.
pub fn nearest_rank(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("percentile of an empty set".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Ok(sorted[rank - 1])
}

/// Accuracy over records whose confidence is at least the 75th percentile.
pub fn thresholded_accuracy<R: Scored>(records: &[R]) -> Result<Thresholded> {
    let conf: Vec<f64> = records.iter().map(Scored::confidence).collect();
    let threshold = nearest_rank(&conf, 0.75)?;
    let kept: Vec<&R> = records.iter().filter(|r| r.confidence() >= threshold).collect();
    let correct = kept.iter().filter(|r| r.is_correct()).count();
    Ok(Thresholded {
        accuracy: correct as f64 / kept.len() as f64,
        kept_fraction: kept.len() as f64 / records.len() as f64,
        threshold,
    })
}

/// `confusion[true][predicted]`, indexed Down, Flat, Up.
pub fn confusion_matrix(records: &[PredictionRecord]) -> [[u64; 3]; 3] {
    let mut m = [[0u64; 3]; 3];
    for r in records {
        m[r.true_label.index()][r.predicted_class.index()] += 1;
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model_name: String,
    pub n: usize,
    pub acc_3class: f64,
    pub acc_2class: f64,
    pub acc_3class_thresholded: f64,
    pub acc_2class_thresholded: f64,
    /// Share of records kept by the three-class threshold.
    pub kept_fraction: f64,
    pub kept_fraction_2class: f64,
    pub confusion: [[u64; 3]; 3],
}

pub const REPORT_HEADER: &str = "model,n,acc3,acc3_thr,acc2,acc2_thr,kept_frac";

pub fn build_report(model_name: &str, records: &[PredictionRecord]) -> Result<EvalReport> {
    let binary: Vec<BinaryRecord> = records.iter().map(to_two_class).collect();
    let t3 = thresholded_accuracy(records)?;
    let t2 = thresholded_accuracy(&binary)?;
    Ok(EvalReport {
        model_name: model_name.to_string(),
        n: records.len(),
        acc_3class: accuracy(records)?,
        acc_2class: accuracy(&binary)?,
        acc_3class_thresholded: t3.accuracy,
        acc_2class_thresholded: t2.accuracy,
        kept_fraction: t3.kept_fraction,
        kept_fraction_2class: t2.kept_fraction,
        confusion: confusion_matrix(records),
    })
}

impl EvalReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.model_name,
            self.n,
            self.acc_3class,
            self.acc_3class_thresholded,
            self.acc_2class,
            self.acc_2class_thresholded,
            self.kept_fraction
        )
    }
}

pub fn reports_to_csv(reports: &[EvalReport]) -> String {
    let mut s = format!("{REPORT_HEADER}\n");
    for r in reports {
        writeln!(s, "{}", r.csv_row()).unwrap();
    }
    s
}

/// Aligned plain-text table of the CSV columns.
pub fn reports_to_table(reports: &[EvalReport]) -> String {
    let width = reports.iter().map(|r| r.model_name.len()).max().unwrap_or(0).max(5);
    let mut s = format!(
        "{:<width$}  {:>7}  {:>7}  {:>8}  {:>7}  {:>8}  {:>9}\n",
        "model", "n", "acc3", "acc3_thr", "acc2", "acc2_thr", "kept_frac"
    );
    for r in reports {
        writeln!(
            s,
            "{:<width$}  {:>7}  {:>7.4}  {:>8.4}  {:>7.4}  {:>8.4}  {:>9.4}",
            r.model_name,
            r.n,
            r.acc_3class,
            r.acc_3class_thresholded,
            r.acc_2class,
            r.acc_2class_thresholded,
            r.kept_fraction
        )
        .unwrap();
    }
    s
}

/// One parsed row of a report CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub n: usize,
    pub acc3: f64,
    pub acc3_thr: f64,
    pub acc2: f64,
    pub acc2_thr: f64,
    pub kept_frac: f64,
}

pub fn read_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == REPORT_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header `{REPORT_HEADER}`"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Parse {
            line: i + 1,
            msg: msg.to_string(),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad("expected 7 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("bad number `{s}`")));
        rows.push(ReportRow {
            model: f[0].to_string(),
            n: f[1].parse().map_err(|_| bad("bad count"))?,
            acc3: num(f[2])?,
            acc3_thr: num(f[3])?,
            acc2: num(f[4])?,
            acc2_thr: num(f[5])?,
            kept_frac: num(f[6])?,
        });
    }
    Ok(rows)
}

/// CTTS predictions for each window.
pub fn ctts_records(
    params: &CttsParams,
    config: &CttsConfig,
    windows: &[LabeledWindow],
    threads: usize,
) -> Result<Vec<PredictionRecord>> {
    map_ordered(threads, windows, |w| {
        let trace = forward(w, params, config)?;
        let probs: [f64; 3] = trace.probs.as_slice().try_into().map_err(|_| Error::Dimension {
            op: "probs",
            left: vec![trace.probs.len()],
            right: vec![3],
        })?;
        Ok(PredictionRecord::from_prediction(
            w.label,
            &ClassProbPrediction::from_probs(probs),
        ))
    })
    .into_iter()
    .collect()
}

/// Most frequent label; ties go to the lower class index.
pub fn majority_class(windows: &[LabeledWindow]) -> Result<Direction> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument("majority class of an empty set".into()));
    }
    let mut counts = [0usize; 3];
    for w in windows {
        counts[w.label.index()] += 1;
    }
    let best = (0..3).fold(0, |b, i| if counts[i] > counts[b] { i } else { b });
    Ok(Direction::from_index(best).unwrap())
}

/// Settings shared by the baseline evaluators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineSettings {
    pub arima_order: ArimaOrder,
    pub neutral_band: f64,
    /// Class used by the constant predictor.
    pub naive_class: Direction,
}

/// Baseline predictions, fitting ARIMA and EMA afresh on each window's raw prices.
pub fn baseline_records(
    kind: BaselineKind,
    settings: &BaselineSettings,
    windows: &[LabeledWindow],
    threads: usize,
) -> Result<Vec<PredictionRecord>> {
    map_ordered(threads, windows, |w| {
        let p = match kind {
            BaselineKind::Arima => {
                let m = arima_fit_or_last(&w.raw, settings.arima_order)?;
                arima_predict(&m, &w.raw, settings.neutral_band)?
            }
            BaselineKind::Ema => {
                let m = ema_fit(&w.raw)?;
                ema_predict(&m, &w.raw, settings.neutral_band)?
            }
            BaselineKind::Naive => naive_constant_predict(settings.naive_class),
        };
        Ok(PredictionRecord::from_prediction(w.label, &p))
    })
    .into_iter()
    .collect()
}
