//! Precision, recall, recall-weighted F and AUPRC against gold labels.

use std::collections::{HashMap, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::DetectionResult;

pub const DEFAULT_PRECISION_WEIGHT: f64 = 0.3;
pub const DEFAULT_RECALL_WEIGHT: f64 = 0.7;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("duplicate identifier {0}")]
    DuplicateIdentifier(String),
    #[error("no score for {0}")]
    MissingScore(String),
    #[error("empty precision-recall curve")]
    EmptyCurve,
    #[error("weights ({w_p}, {w_r}) must be positive and sum to 1")]
    InvalidWeights { w_p: f64, w_r: f64 },
    #[error("{name} = {value} outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("gold file: {0}")]
    Csv(#[from] csv::Error),
    #[error("gold file line {line}: {message}")]
    Format { line: u64, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub identifier: String,
    pub is_definition: bool,
}

/// A scored, thresholded prediction for one identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub identifier: String,
    pub score: f64,
    pub positive: bool,
}

impl From<&DetectionResult> for Prediction {
    fn from(d: &DetectionResult) -> Prediction {
        Prediction {
            identifier: d.identifier.clone(),
            score: d.score,
            positive: d.is_definitional,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    /// Gold identifiers with no prediction; counted as predicted negative.
    pub missing: usize,
}

impl Confusion {
    /// `tp / (tp + fp)`, 0 when nothing was predicted positive.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `tp / (tp + fn)`, 0 when the gold set has no positives.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>) -> Result<(), EvalError> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(EvalError::DuplicateIdentifier(id.to_string()));
        }
    }
    Ok(())
}

/// Confusion counts keyed by identifier. Predictions for identifiers outside
/// the gold set are ignored.
pub fn confusion(preds: &[Prediction], gold: &[GoldLabel]) -> Result<Confusion, EvalError> {
    check_unique(gold.iter().map(|g| g.identifier.as_str()))?;
    check_unique(preds.iter().map(|p| p.identifier.as_str()))?;
    let predicted: HashMap<&str, bool> = preds
        .iter()
        .map(|p| (p.identifier.as_str(), p.positive))
        .collect();
    let mut c = Confusion::default();
    for g in gold {
        let p = match predicted.get(g.identifier.as_str()) {
            Some(&p) => p,
            None => {
                c.missing += 1;
                false
            }
        };
        match (p, g.is_definition) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedF {
    pub value: f64,
    /// Precision or recall was 0 and the value was defined as 0.
    pub zero_division: bool,
}

/// Weighted harmonic mean `1 / (w_p/p + w_r/r)`.
pub fn weighted_f(p: f64, r: f64, w_p: f64, w_r: f64) -> Result<WeightedF, EvalError> {
    for (name, value) in [("precision", p), ("recall", r)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(EvalError::OutOfRange { name, value });
        }
    }
    if !(w_p > 0.0 && w_r > 0.0 && (w_p + w_r - 1.0).abs() <= 1e-9) {
        return Err(EvalError::InvalidWeights { w_p, w_r });
    }
    if p == 0.0 || r == 0.0 {
        return Ok(WeightedF {
            value: 0.0,
            zero_division: true,
        });
    }
    Ok(WeightedF {
        value: 1.0 / (w_p / p + w_r / r),
        zero_division: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// One point per distinct score, predicting positive iff `score >= threshold`,
/// in ascending threshold order. The lowest threshold is the all-positive point.
pub fn pr_curve(scores: &HashMap<String, f64>, gold: &[GoldLabel]) -> Result<Vec<PrPoint>, EvalError> {
    check_unique(gold.iter().map(|g| g.identifier.as_str()))?;
    let mut items: Vec<(f64, bool)> = gold
        .iter()
        .map(|g| {
            scores
                .get(&g.identifier)
                .filter(|s| !s.is_nan())
                .map(|&s| (s, g.is_definition))
                .ok_or_else(|| EvalError::MissingScore(g.identifier.clone()))
        })
        .collect::<Result<_, _>>()?;
    // descending score; walk thresholds from high to low
    items.sort_by(|a, b| b.0.total_cmp(&a.0));
    let positives = items.iter().filter(|i| i.1).count();
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < items.len() {
        let threshold = items[i].0;
        while i < items.len() && items[i].0 == threshold {
            if items[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, positives),
        });
    }
    points.reverse();
    Ok(points)
}

/// Step-wise area `Σ (r_k − r_{k+1}) p_k` over points in descending recall,
/// closing at recall 0. At equal recall the highest precision takes the step.
pub fn auprc(points: &[PrPoint]) -> Result<f64, EvalError> {
    if points.is_empty() {
        return Err(EvalError::EmptyCurve);
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| b.recall.total_cmp(&a.recall).then(a.precision.total_cmp(&b.precision)));
    let mut area = 0.0;
    for (k, p) in sorted.iter().enumerate() {
        let next = sorted.get(k + 1).map_or(0.0, |q| q.recall);
        area += (p.recall - next) * p.precision;
    }
    Ok(area)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub missing: usize,
    pub precision: f64,
    pub recall: f64,
    pub weighted_f: f64,
    pub zero_division: bool,
    pub auprc: f64,
    pub curve: Vec<PrPoint>,
}

/// Full report. Gold items without a prediction count as negatives and enter
/// the curve with score 0.
pub fn evaluate(preds: &[Prediction], gold: &[GoldLabel], w_p: f64, w_r: f64) -> Result<EvalReport, EvalError> {
    let c = confusion(preds, gold)?;
    let f = weighted_f(c.precision(), c.recall(), w_p, w_r)?;
    let mut scores: HashMap<String, f64> = preds.iter().map(|p| (p.identifier.clone(), p.score)).collect();
    for g in gold {
        scores.entry(g.identifier.clone()).or_insert(0.0);
    }
    let curve = if gold.is_empty() { Vec::new() } else { pr_curve(&scores, gold)? };
    let auprc = if curve.is_empty() { 0.0 } else { auprc(&curve)? };
    Ok(EvalReport {
        tp: c.tp,
        fp: c.fp,
        fn_: c.fn_,
        tn: c.tn,
        missing: c.missing,
        precision: c.precision(),
        recall: c.recall(),
        weighted_f: f.value,
        zero_division: f.zero_division,
        auprc,
        curve,
    })
}

#[derive(Deserialize)]
struct GoldRow {
    identifier: String,
    is_definition: String,
}

/// `identifier,is_definition` CSV with a header row and `true`/`false` values.
pub fn read_gold<R: Read>(reader: R) -> Result<Vec<GoldLabel>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["identifier", "is_definition"] {
        return Err(EvalError::Format {
            line: 1,
            message: "expected header identifier,is_definition".into(),
        });
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<GoldRow>() {
        let row = row?;
        let is_definition = match row.is_definition.to_ascii_lowercase().as_str() {
            "true" => true,
            "false" => false,
            other => {
                return Err(EvalError::Format {
                    line: out.len() as u64 + 2,
                    message: format!("is_definition must be true or false, got {other:?}"),
                })
            }
        };
        out.push(GoldLabel {
            identifier: row.identifier,
            is_definition,
        });
    }
    check_unique(out.iter().map(|g| g.identifier.as_str()))?;
    Ok(out)
}
