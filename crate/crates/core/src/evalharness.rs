//! Confusion counts, metrics, per-class accuracy tables and the experiment
//! runners for document classification and attack detection.

use std::fmt::Write as _;

use num_traits::{FromPrimitive, Num};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::attackdetect::{check_threshold, detect_in_text, DetectError, ExampleBank};
use crate::corpusgen::CorpusDocument;
use crate::ensemble::{DocumentClassifier, EnsembleError};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("confusion counts are all zero")]
    AllZero,
    #[error("label {0:?} is not one of the model's classes")]
    ClassSetMismatch(String),
    #[error("unknown attack id {0:?}")]
    UnknownAttack(String),
    #[error("test fraction {0} outside (0, 1)")]
    Fraction(f64),
    #[error("nothing to evaluate")]
    Empty,
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Detect(#[from] DetectError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Adds one binary outcome.
    pub fn record(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Metrics<T> {
    pub accuracy: T,
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

/// Accuracy, precision, recall and F1. A zero denominator gives 0.
///
/// Works for any numeric field, so exact rationals reproduce the float
/// results without rounding.
pub fn metrics<T>(c: &ConfusionCounts) -> Result<Metrics<T>, EvalError>
where
    T: Num + FromPrimitive + Clone,
{
    if c.total() == 0 {
        return Err(EvalError::AllZero);
    }
    let n = |x: u64| T::from_u64(x).expect("count fits the scalar");
    let ratio = |a: u64, b: u64| if b == 0 { T::zero() } else { n(a) / n(b) };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let sum = precision.clone() + recall.clone();
    let f1 = if sum.is_zero() {
        T::zero()
    } else {
        n(2) * precision.clone() * recall.clone() / sum
    };
    Ok(Metrics {
        accuracy: ratio(c.tp + c.tn, c.total()),
        precision,
        recall,
        f1,
    })
}

/// `correct / count` as a percentage rounded half-up to two decimals, with
/// trailing zeros dropped: `98.08%`, `100%`, `97.5%`.
pub fn format_percent(correct: usize, count: usize) -> String {
    if count == 0 {
        return "n/a".into();
    }
    let (c, n) = (correct as u128, count as u128);
    let hundredths = (c * 20_000 + n) / (2 * n);
    let whole = hundredths / 100;
    let frac = hundredths % 100;
    match frac {
        0 => format!("{whole}%"),
        f if f % 10 == 0 => format!("{whole}.{}%", f / 10),
        f => format!("{whole}.{f:02}%"),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClassTally {
    pub label: String,
    pub count: usize,
    pub correct: usize,
}

impl ClassTally {
    pub fn accuracy(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.correct as f64 / self.count as f64
        }
    }

    pub fn percent(&self) -> String {
        format_percent(self.correct, self.count)
    }
}

/// Overall and per-class accuracy.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccuracyTable {
    pub overall: ClassTally,
    pub classes: Vec<ClassTally>,
}

impl AccuracyTable {
    /// The overall row sums the class rows.
    pub fn from_tallies(classes: Vec<ClassTally>) -> Self {
        let overall = ClassTally {
            label: "All".into(),
            count: classes.iter().map(|c| c.count).sum(),
            correct: classes.iter().map(|c| c.correct).sum(),
        };
        AccuracyTable { overall, classes }
    }

    /// Tallies `(truth, predicted)` pairs over the given class order.
    pub fn from_outcomes<'a>(
        classes: &[String],
        outcomes: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, EvalError> {
        let mut tallies: Vec<ClassTally> = classes
            .iter()
            .map(|l| ClassTally {
                label: l.clone(),
                count: 0,
                correct: 0,
            })
            .collect();
        for (truth, predicted) in outcomes {
            let t = tallies
                .iter_mut()
                .find(|t| t.label == truth)
                .ok_or_else(|| EvalError::ClassSetMismatch(truth.to_string()))?;
            t.count += 1;
            if truth == predicted {
                t.correct += 1;
            }
        }
        Ok(Self::from_tallies(tallies))
    }

    pub fn rows(&self) -> impl Iterator<Item = &ClassTally> {
        std::iter::once(&self.overall).chain(&self.classes)
    }

    /// Aligned plain-text table, overall row first.
    pub fn render(&self) -> String {
        let head = ["Document type", "Count", "Correct", "Accuracy"];
        let cells: Vec<[String; 4]> = self
            .rows()
            .map(|r| {
                [
                    r.label.clone(),
                    r.count.to_string(),
                    r.correct.to_string(),
                    r.percent(),
                ]
            })
            .collect();
        let mut width = head.map(str::len);
        for row in &cells {
            for (w, c) in width.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}",
            head[0],
            head[1],
            head[2],
            head[3],
            w0 = width[0],
            w1 = width[1],
            w2 = width[2],
            w3 = width[3]
        );
        for r in &cells {
            let _ = writeln!(
                out,
                "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}",
                r[0],
                r[1],
                r[2],
                r[3],
                w0 = width[0],
                w1 = width[1],
                w2 = width[2],
                w3 = width[3]
            );
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!(self
            .rows()
            .map(|r| json!({
                "label": r.label,
                "count": r.count,
                "correct": r.correct,
                "accuracy": r.accuracy(),
                "accuracy_text": r.percent(),
            }))
            .collect::<Vec<_>>())
    }
}

/// Stratified train/test split. Each class contributes
/// `round(n * test_fraction)` documents to the test side, chosen by a
/// seeded shuffle. Both index lists come back sorted.
pub fn stratified_split(
    labels: &[&str],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(EvalError::Fraction(test_fraction));
    }
    let mut classes: Vec<&str> = Vec::new();
    for l in labels {
        if !classes.contains(l) {
            classes.push(l);
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, class) in classes.iter().enumerate() {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == *class).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        idx.shuffle(&mut rng);
        let k = (idx.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DocumentPrediction {
    pub id: String,
    pub label: String,
    pub predicted: String,
    pub image_predicted: Option<String>,
    pub text_predicted: Option<String>,
    pub image_weight: Option<f64>,
    pub text_weight: Option<f64>,
}

/// Accuracy of the ensemble and of each branch alone on the same documents.
#[derive(Clone, Debug, PartialEq)]
pub struct DocumentEvaluation {
    pub ensemble: AccuracyTable,
    pub image_only: AccuracyTable,
    pub text_only: AccuracyTable,
    pub predictions: Vec<DocumentPrediction>,
}

/// Classifies every document. A branch that had no input is scored by the
/// fused prediction, which is then the other branch's.
pub fn evaluate_documents<T: Real>(
    classifier: &DocumentClassifier<T>,
    docs: &[CorpusDocument],
) -> Result<DocumentEvaluation, EvalError> {
    let classes = classifier.classes().labels().to_vec();
    let mut predictions = Vec::with_capacity(docs.len());
    for d in docs {
        if !classes.contains(&d.label) {
            return Err(EvalError::ClassSetMismatch(d.label.clone()));
        }
        let trace = classifier.classify(&d.doc)?;
        let f = |x: T| x.to_f64().unwrap_or(f64::NAN);
        predictions.push(DocumentPrediction {
            id: d.doc.id.clone(),
            label: d.label.clone(),
            predicted: trace.predicted.clone(),
            image_predicted: trace
                .image
                .as_ref()
                .map(|b| b.probs.predicted_label().to_string()),
            text_predicted: trace
                .text
                .as_ref()
                .map(|b| b.probs.predicted_label().to_string()),
            image_weight: trace.image.as_ref().map(|b| f(b.weight)),
            text_weight: trace.text.as_ref().map(|b| f(b.weight)),
        });
    }
    let table = |pick: &dyn Fn(&DocumentPrediction) -> &str| {
        AccuracyTable::from_outcomes(
            &classes,
            predictions.iter().map(|p| (p.label.as_str(), pick(p))),
        )
    };
    Ok(DocumentEvaluation {
        ensemble: table(&|p| &p.predicted)?,
        image_only: table(&|p| p.image_predicted.as_deref().unwrap_or(&p.predicted))?,
        text_only: table(&|p| p.text_predicted.as_deref().unwrap_or(&p.predicted))?,
        predictions,
    })
}

/// An RFE with its planted ground truth.
#[derive(Clone, Copy, Debug)]
pub struct LabeledRfe<'a> {
    pub id: &'a str,
    pub text: &'a str,
    pub attacks: &'a [String],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RfeOutcome {
    pub id: String,
    pub truth: bool,
    pub detected: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackEvaluation {
    pub target: String,
    pub counts: ConfusionCounts,
    pub metrics: Metrics<f64>,
    pub outcomes: Vec<RfeOutcome>,
}

impl AttackEvaluation {
    pub fn render(&self) -> String {
        let c = &self.counts;
        let m = &self.metrics;
        format!(
            "attack {}: {} RFEs  tp={} fp={} fn={} tn={}\n\
             accuracy {}  precision {:.4}  recall {:.4}  f1 {:.4}\n",
            self.target,
            c.total(),
            c.tp,
            c.fp,
            c.fn_,
            c.tn,
            format_percent((c.tp + c.tn) as usize, c.total() as usize),
            m.precision,
            m.recall,
            m.f1
        )
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "target": self.target,
            "counts": self.counts,
            "metrics": self.metrics,
            "outcomes": self.outcomes,
        })
    }
}

/// Per-RFE presence/absence of `target` against the planted ground truth.
pub fn evaluate_attacks<T: Real>(
    bank: &ExampleBank<T>,
    tau: T,
    rfes: &[LabeledRfe<'_>],
    target: &str,
) -> Result<AttackEvaluation, EvalError> {
    check_threshold(tau)?;
    if bank.attack_index(target).is_none() {
        return Err(EvalError::UnknownAttack(target.to_string()));
    }
    if rfes.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut counts = ConfusionCounts::default();
    let mut outcomes = Vec::with_capacity(rfes.len());
    for r in rfes {
        let report = detect_in_text(r.text, bank, tau)?;
        let truth = r.attacks.iter().any(|a| a == target);
        let detected = report.contains(target);
        counts.record(truth, detected);
        outcomes.push(RfeOutcome {
            id: r.id.to_string(),
            truth,
            detected,
        });
    }
    Ok(AttackEvaluation {
        target: target.to_string(),
        metrics: metrics(&counts)?,
        counts,
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    #[test]
    fn zero_denominators() {
        let m = metrics::<f64>(&ConfusionCounts::new(0, 0, 5, 5)).unwrap();
        assert_eq!(
            (m.precision, m.recall, m.f1, m.accuracy),
            (0.0, 0.0, 0.0, 0.5)
        );
        assert!(matches!(
            metrics::<f64>(&ConfusionCounts::default()),
            Err(EvalError::AllZero)
        ));
    }

    #[test]
    fn exact_rationals() {
        let m = metrics::<Ratio<u64>>(&ConfusionCounts::new(22, 9, 4, 14)).unwrap();
        assert_eq!(m.accuracy, Ratio::new(36, 49));
        assert_eq!(m.precision, Ratio::new(22, 31));
        assert_eq!(m.recall, Ratio::new(11, 13));
        assert_eq!(m.f1, Ratio::new(44, 57));
    }

    #[test]
    fn percents() {
        assert_eq!(format_percent(102, 104), "98.08%");
        assert_eq!(format_percent(33, 33), "100%");
        assert_eq!(format_percent(69, 71), "97.18%");
        assert_eq!(format_percent(39, 40), "97.5%");
        assert_eq!(format_percent(0, 3), "0%");
        assert_eq!(format_percent(1, 3), "33.33%");
        assert_eq!(format_percent(2, 3), "66.67%");
        assert_eq!(format_percent(1, 800), "0.13%");
    }

    #[test]
    fn table_from_outcomes() {
        let classes = vec!["a".to_string(), "b".to_string()];
        let t =
            AccuracyTable::from_outcomes(&classes, [("a", "a"), ("b", "a"), ("b", "b")]).unwrap();
        assert_eq!(t.overall.count, 3);
        assert_eq!(t.overall.correct, 2);
        assert_eq!(t.classes[1].percent(), "50%");
        assert!(AccuracyTable::from_outcomes(&classes, [("c", "a")]).is_err());
        let text = t.render();
        assert!(text.lines().nth(1).unwrap().starts_with("All"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn split_is_stratified() {
        let labels: Vec<&str> = (0..200).map(|i| if i < 100 { "a" } else { "b" }).collect();
        let (train, test) = stratified_split(&labels, 0.2, 42).unwrap();
        assert_eq!(test.len(), 40);
        assert_eq!(train.len(), 160);
        assert_eq!(test.iter().filter(|&&i| i < 100).count(), 20);
        let again = stratified_split(&labels, 0.2, 42).unwrap();
        assert_eq!(again.1, test);
        assert!(stratified_split(&labels, 1.0, 42).is_err());
    }

    proptest! {
        #[test]
        fn scale_free(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50, tn in 0u64..50, k in 1u64..20) {
            let c = ConfusionCounts::new(tp, fp, fn_, tn);
            prop_assume!(c.total() > 0);
            let a = metrics::<Ratio<u64>>(&c).unwrap();
            let b = metrics::<Ratio<u64>>(&ConfusionCounts::new(tp * k, fp * k, fn_ * k, tn * k)).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn rational_matches_float(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50, tn in 0u64..50) {
            let c = ConfusionCounts::new(tp, fp, fn_, tn);
            prop_assume!(c.total() > 0);
            let r = metrics::<Ratio<u64>>(&c).unwrap();
            let f = metrics::<f64>(&c).unwrap();
            let to_f = |x: Ratio<u64>| *x.numer() as f64 / *x.denom() as f64;
            prop_assert!((to_f(r.accuracy) - f.accuracy).abs() < 1e-12);
            prop_assert!((to_f(r.precision) - f.precision).abs() < 1e-12);
            prop_assert!((to_f(r.recall) - f.recall).abs() < 1e-12);
            prop_assert!((to_f(r.f1) - f.f1).abs() < 1e-12);
            if f.precision + f.recall > 0.0 {
                let h = 2.0 * f.precision * f.recall / (f.precision + f.recall);
                prop_assert!((h - f.f1).abs() < 1e-12);
            }
        }
    }
}
